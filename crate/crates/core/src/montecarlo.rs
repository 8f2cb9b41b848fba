//! Simulation designs and the replication harness.

use nalgebra::Matrix3;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cic::cic;
use crate::config::EstimationConfig;
use crate::error::{Error, Result};
use crate::estimator::{estimate_prepared, Problem};
use crate::inference::{bootstrap_prepared, pointwise_ci, uniform_test, NullKind};
use crate::normal::{cdf, inv_cdf};
use crate::panel::PanelDataset;
use crate::util::{pairwise_sum, stream_seed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DgpKind {
    /// Two periods, continuous treatment, covariate with period-specific slope.
    Sim1,
    /// Two-period, two-group design with a binary treatment in period 2.
    Sim2,
    /// Rank-invariant design without idiosyncratic noise across periods.
    Noiseless,
}

impl std::str::FromStr for DgpKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sim1" => Ok(Self::Sim1),
            "sim2" => Ok(Self::Sim2),
            "noiseless" | "noiseless-rank-invariant" => Ok(Self::Noiseless),
            _ => Err(Error::InvalidConfig(format!("unknown design `{s}`"))),
        }
    }
}

/// Treatment coefficient `intercept + slope * Phi^{-1}(u)` at rank `u`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Effect {
    pub intercept: f64,
    pub slope: f64,
}

impl Effect {
    pub const DEFAULT: Effect = Effect {
        intercept: 1.0,
        slope: 0.5,
    };

    pub fn at_score(&self, e: f64) -> f64 {
        self.intercept + self.slope * e
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub kind: DgpKind,
    pub n: usize,
    /// Dependence parameter in `[0, 1]`; `rho^2` is the share of the rank
    /// variance common to both periods.
    pub rho: f64,
    pub seed: u64,
    pub effect: Effect,
}

impl DgpSpec {
    pub fn new(kind: DgpKind, n: usize, rho: f64, seed: u64) -> Self {
        let effect = match kind {
            DgpKind::Noiseless => NOISELESS_EFFECT,
            _ => Effect::DEFAULT,
        };
        Self {
            kind,
            n,
            rho,
            seed,
            effect,
        }
    }

    /// Design parameterized by `rho^2`.
    pub fn with_rho_sq(kind: DgpKind, n: usize, rho_sq: f64, seed: u64) -> Self {
        Self::new(kind, n, rho_sq.sqrt(), seed)
    }

    pub fn with_effect(mut self, intercept: f64, slope: f64) -> Self {
        self.effect = Effect { intercept, slope };
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 10 {
            return Err(Error::InvalidConfig(format!("n = {} is below 10", self.n)));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::CovarianceNotPsd);
        }
        Ok(())
    }

    /// True treatment coefficient at quantile level `tau`.
    pub fn true_alpha(&self, tau: f64) -> f64 {
        self.effect.at_score(inv_cdf(tau))
    }
}

/// A simulated panel with the latent quantities behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulated {
    pub data: PanelDataset,
    /// Normal scores `Phi^{-1}(U_it)`, unit-major `n x 2`.
    pub scores: Vec<f64>,
    /// Period-2 potential outcomes `(Y(0), Y(1))` per unit.
    pub potential: Vec<(f64, f64)>,
    /// Sim1: `(X~_1, X~_2, A)` per unit; Sim2: `(X~, 0, A)`.
    pub normals: Vec<[f64; 3]>,
}

impl Simulated {
    pub fn ranks(&self) -> Vec<f64> {
        self.scores.iter().map(|&e| cdf(e)).collect()
    }
}

/// Generates a panel from the design.
pub fn generate(spec: &DgpSpec) -> Result<Simulated> {
    spec.validate()?;
    match spec.kind {
        DgpKind::Sim1 => gen_sim1(spec),
        DgpKind::Sim2 => gen_sim2(spec),
        DgpKind::Noiseless => gen_noiseless(spec),
    }
}

fn sigma_xa(rho: f64) -> Matrix3<f64> {
    Matrix3::new(
        1.0,
        0.5,
        0.5 * rho,
        0.5,
        1.0,
        0.5 * rho,
        0.5 * rho,
        0.5 * rho,
        rho * rho,
    )
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Simulation 1: `Y_1 = (1 + 0.5 e_1) X_1 + e_1 + Z`,
/// `Y_2 = (1 + 0.5 e_2) X_2 + 1.2 e_2 + 1.2 Z` with `e_t = A + U~_t`.
/// Covariates are `(1, Z)` in both periods.
pub fn gen_sim1(spec: &DgpSpec) -> Result<Simulated> {
    spec.validate()?;
    let rho = spec.rho;
    // rho = 0 makes A degenerate; factor the X block alone
    let chol = if rho == 0.0 {
        None
    } else {
        Some(sigma_xa(rho).cholesky().ok_or(Error::CovarianceNotPsd)?.l())
    };
    let u_sd = (1.0 - rho * rho).max(0.0).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n;
    let (mut y, mut x, mut z) = (
        Vec::with_capacity(2 * n),
        Vec::with_capacity(2 * n),
        Vec::with_capacity(4 * n),
    );
    let mut scores = Vec::with_capacity(2 * n);
    let mut potential = Vec::with_capacity(n);
    let mut normals = Vec::with_capacity(n);
    for _ in 0..n {
        let g = [normal(&mut rng), normal(&mut rng), normal(&mut rng)];
        let draw = match &chol {
            Some(l) => {
                let v = l * nalgebra::Vector3::from(g);
                [v[0], v[1], v[2]]
            }
            None => [g[0], 0.5 * g[0] + 0.75f64.sqrt() * g[1], 0.0],
        };
        let e1 = draw[2] + u_sd * normal(&mut rng);
        let e2 = draw[2] + u_sd * normal(&mut rng);
        let zi: f64 = rng.random();
        let (x1, x2) = (cdf(draw[0]), cdf(draw[1]));
        let (c1, c2) = (spec.effect.at_score(e1), spec.effect.at_score(e2));
        y.push(c1 * x1 + e1 + zi);
        y.push(c2 * x2 + 1.2 * e2 + 1.2 * zi);
        x.extend([x1, x2]);
        z.extend([1.0, zi, 1.0, zi]);
        scores.extend([e1, e2]);
        potential.push((1.2 * e2 + 1.2 * zi, c2 + 1.2 * e2 + 1.2 * zi));
        normals.push(draw);
    }
    let data = PanelDataset::new(n, 2, 1, 2, y, x, z)?
        .with_names(vec!["x".into()], vec!["intercept".into(), "z".into()])?;
    Ok(Simulated {
        data,
        scores,
        potential,
        normals,
    })
}

/// Simulation 2: `Y_1 = e_1`, `Y_2 = (1 + 0.5 e_2) X_2 + 0.5 e_2` with
/// `X_2 = 1{X~ + A >= 0}` and intercept-only covariates.
pub fn gen_sim2(spec: &DgpSpec) -> Result<Simulated> {
    spec.validate()?;
    let rho = spec.rho;
    let u_sd = (1.0 - rho * rho).max(0.0).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n;
    let (mut y, mut x) = (Vec::with_capacity(2 * n), Vec::with_capacity(2 * n));
    let mut scores = Vec::with_capacity(2 * n);
    let mut potential = Vec::with_capacity(n);
    let mut normals = Vec::with_capacity(n);
    for _ in 0..n {
        let xt = normal(&mut rng);
        let a = rho * normal(&mut rng);
        let e1 = a + u_sd * normal(&mut rng);
        let e2 = a + u_sd * normal(&mut rng);
        let g = if xt + a >= 0.0 { 1.0 } else { 0.0 };
        let y20 = 0.5 * e2;
        let y21 = spec.effect.at_score(e2) + 0.5 * e2;
        y.extend([e1, if g == 1.0 { y21 } else { y20 }]);
        x.extend([0.0, g]);
        scores.extend([e1, e2]);
        potential.push((y20, y21));
        normals.push([xt, 0.0, a]);
    }
    let data = PanelDataset::new(n, 2, 1, 1, y, x, vec![1.0; 2 * n])?
        .with_names(vec!["d".into()], vec!["intercept".into()])?;
    Ok(Simulated {
        data,
        scores,
        potential,
        normals,
    })
}

/// Effect used by the noiseless design unless overridden.
pub const NOISELESS_EFFECT: Effect = Effect {
    intercept: 1.0,
    slope: 0.005,
};

/// Noiseless rank-invariant design. Ranks sit on the grid `(i - 1/2)/n` in
/// random unit order and are shared by both periods. Treatments are
/// independent `U(0, 1)` draws per period and
/// `Y_t = (a0 + a1 e) X_t + c_t + s_t e` with `e = Phi^{-1}(U)`, small
/// `s_t` and intercept-only covariates. Outcomes are increasing in the rank
/// in both periods, so the linear quantile model holds exactly.
///
/// In a finite sample the objective is exactly zero on an interval around
/// the truth whose width scales with the outcome gap between neighbouring
/// ranks, `(a1 X + s_t) / (n phi(e))`. The default slope and scales keep that
/// interval well below `1e-3` at `n = 500`.
pub fn gen_noiseless(spec: &DgpSpec) -> Result<Simulated> {
    spec.validate()?;
    const LEVEL: [f64; 2] = [0.0, 0.5];
    const SCALE: [f64; 2] = [0.0025, 0.003];
    let n = spec.n;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut ranks: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
    ranks.shuffle(&mut rng);
    let (mut y, mut x) = (Vec::with_capacity(2 * n), Vec::with_capacity(2 * n));
    let mut scores = Vec::with_capacity(2 * n);
    let mut potential = Vec::with_capacity(n);
    for &u in &ranks {
        let e = inv_cdf(u);
        let c = spec.effect.at_score(e);
        for t in 0..2 {
            let xt: f64 = rng.random();
            y.push(c * xt + LEVEL[t] + SCALE[t] * e);
            x.push(xt);
            scores.push(e);
        }
        potential.push((LEVEL[1] + SCALE[1] * e, c + LEVEL[1] + SCALE[1] * e));
    }
    let data = PanelDataset::new(n, 2, 1, 1, y, x, vec![1.0; 2 * n])?;
    Ok(Simulated {
        data,
        scores,
        potential,
        normals: vec![[0.0; 3]; n],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    /// The profiled two-step estimator.
    TwoStep,
    /// Changes-in-changes (two-period, two-group designs only).
    Cic,
}

/// Summary for one estimator at one quantile level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McRow {
    pub tau: f64,
    pub estimator: EstimatorKind,
    pub truth: f64,
    pub bias: f64,
    pub std: f64,
    pub mse: f64,
    pub coverage90: Option<f64>,
    pub coverage95: Option<f64>,
}

/// Replicate estimates of one estimator: `values[r][k]` at `tau_grid[k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSeries {
    pub estimator: EstimatorKind,
    pub values: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub rows: Vec<McRow>,
    pub replications: usize,
    pub failures: usize,
    pub dgp: DgpSpec,
    pub config: EstimationConfig,
    pub bootstrap_replicates: Option<usize>,
    pub series: Vec<McSeries>,
}

impl McReport {
    pub fn row(&self, estimator: EstimatorKind, tau: f64) -> Option<&McRow> {
        self.rows
            .iter()
            .find(|r| r.estimator == estimator && (r.tau - tau).abs() < 1e-12)
    }
}

/// `(bias, std, mse)` of estimates against `truth`, all with denominator `R`.
pub fn summarize(estimates: &[f64], truth: f64) -> (f64, f64, f64) {
    let r = estimates.len() as f64;
    let errors: Vec<f64> = estimates.iter().map(|e| e - truth).collect();
    let bias = pairwise_sum(&errors) / r;
    let centred: Vec<f64> = errors.iter().map(|e| (e - bias) * (e - bias)).collect();
    let std = (pairwise_sum(&centred) / r).sqrt();
    let squares: Vec<f64> = errors.iter().map(|e| e * e).collect();
    let mse = pairwise_sum(&squares) / r;
    (bias, std, mse)
}

struct ReplicateOut {
    estimates: Vec<Vec<f64>>,
    cover90: Vec<bool>,
    cover95: Vec<bool>,
}

fn run_replicate(
    spec: &DgpSpec,
    estimators: &[EstimatorKind],
    config: &EstimationConfig,
    b: Option<usize>,
) -> Result<ReplicateOut> {
    let sim = generate(spec)?;
    let mut estimates = Vec::with_capacity(estimators.len());
    let (mut cover90, mut cover95) = (Vec::new(), Vec::new());
    for &kind in estimators {
        match kind {
            EstimatorKind::TwoStep => {
                let problem = Problem::new(&sim.data, config)?;
                let path = estimate_prepared(&problem, config)?;
                estimates.push(path.alpha_scalar());
                if let Some(b) = b {
                    let draws = bootstrap_prepared(&problem, path, config, b)?;
                    for &tau in &config.tau_grid {
                        let truth = spec.true_alpha(tau);
                        let inside = |(lo, hi): (f64, f64)| lo <= truth && truth <= hi;
                        cover90.push(inside(pointwise_ci(&draws, tau, 0.90)?[0]));
                        cover95.push(inside(pointwise_ci(&draws, tau, 0.95)?[0]));
                    }
                }
            }
            EstimatorKind::Cic => estimates.push(cic(&sim.data, &config.tau_grid)?.qte),
        }
    }
    Ok(ReplicateOut {
        estimates,
        cover90,
        cover95,
    })
}

/// Replicates estimation on freshly simulated panels. Replicate `r` uses
/// data seed `stream_seed(dgp.seed, r)` and estimation seed
/// `stream_seed(config.seed, r)`. With `b` set, percentile intervals of the
/// two-step estimator are bootstrapped for coverage.
pub fn run_mc(
    dgp: &DgpSpec,
    estimators: &[EstimatorKind],
    replications: usize,
    config: &EstimationConfig,
    b: Option<usize>,
) -> Result<McReport> {
    if replications < 2 {
        return Err(Error::InvalidConfig("need at least 2 replications".into()));
    }
    if estimators.is_empty() {
        return Err(Error::InvalidConfig("no estimators requested".into()));
    }
    dgp.validate()?;
    config.validate(1)?;
    let outs: Vec<Result<ReplicateOut>> = (0..replications as u64)
        .into_par_iter()
        .map(|r| {
            let spec = dgp.with_seed(stream_seed(dgp.seed, r));
            let cfg = config.clone().with_seed(stream_seed(config.seed, r));
            run_replicate(&spec, estimators, &cfg, b)
        })
        .collect();
    let mut ok = Vec::with_capacity(replications);
    let mut failures = 0;
    for o in outs {
        match o {
            Ok(v) => ok.push(v),
            Err(e) if e.is_validation() => return Err(e),
            Err(_) => failures += 1,
        }
    }
    if failures * 20 > replications {
        return Err(Error::TooManyFailures {
            failed: failures,
            total: replications,
        });
    }
    let mut rows = Vec::new();
    let mut series = Vec::new();
    let grid = &config.tau_grid;
    for (e, &kind) in estimators.iter().enumerate() {
        let values: Vec<Vec<f64>> = ok.iter().map(|o| o.estimates[e].clone()).collect();
        for (k, &tau) in grid.iter().enumerate() {
            let truth = dgp.true_alpha(tau);
            let est: Vec<f64> = values.iter().map(|v| v[k]).collect();
            let (bias, std, mse) = summarize(&est, truth);
            let coverage = |pick: fn(&ReplicateOut) -> &Vec<bool>| -> Option<f64> {
                if kind != EstimatorKind::TwoStep || b.is_none() {
                    return None;
                }
                let hits = ok.iter().filter(|o| pick(o)[k]).count();
                Some(hits as f64 / ok.len() as f64)
            };
            rows.push(McRow {
                tau,
                estimator: kind,
                truth,
                bias,
                std,
                mse,
                coverage90: coverage(|o| &o.cover90),
                coverage95: coverage(|o| &o.cover95),
            });
        }
        series.push(McSeries {
            estimator: kind,
            values,
        });
    }
    Ok(McReport {
        rows,
        replications: ok.len(),
        failures,
        dgp: *dgp,
        config: config.clone(),
        bootstrap_replicates: b,
        series,
    })
}

/// Rejection frequency of the functional test over simulated panels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeReport {
    pub null_kind: NullKind,
    pub level: f64,
    pub replications: usize,
    pub failures: usize,
    pub rejections: usize,
    pub rate: f64,
    pub statistics: Vec<f64>,
    pub critical_values: Vec<f64>,
}

/// Runs the functional test on `replications` simulated panels. For the
/// known-path null the design's true path on the grid is used.
pub fn run_test_mc(
    dgp: &DgpSpec,
    replications: usize,
    config: &EstimationConfig,
    b: usize,
    null_kind: NullKind,
    level: f64,
) -> Result<SizeReport> {
    if replications < 2 {
        return Err(Error::InvalidConfig("need at least 2 replications".into()));
    }
    dgp.validate()?;
    config.validate(1)?;
    let truth: Vec<Vec<f64>> = config
        .tau_grid
        .iter()
        .map(|&t| vec![dgp.true_alpha(t)])
        .collect();
    let outs: Vec<Result<(f64, f64, bool)>> = (0..replications as u64)
        .into_par_iter()
        .map(|r| {
            let spec = dgp.with_seed(stream_seed(dgp.seed, r));
            let cfg = config.clone().with_seed(stream_seed(config.seed, r));
            let sim = generate(&spec)?;
            let problem = Problem::new(&sim.data, &cfg)?;
            let path = estimate_prepared(&problem, &cfg)?;
            let draws = bootstrap_prepared(&problem, path, &cfg, b)?;
            let t = uniform_test(&draws, null_kind, level, Some(&truth))?;
            Ok((t.statistic, t.critical_value, t.reject))
        })
        .collect();
    let mut statistics = Vec::new();
    let mut critical_values = Vec::new();
    let mut rejections = 0;
    let mut failures = 0;
    for o in outs {
        match o {
            Ok((s, c, rej)) => {
                statistics.push(s);
                critical_values.push(c);
                rejections += usize::from(rej);
            }
            Err(e) if e.is_validation() => return Err(e),
            Err(_) => failures += 1,
        }
    }
    if failures * 20 > replications {
        return Err(Error::TooManyFailures {
            failed: failures,
            total: replications,
        });
    }
    let done = statistics.len();
    Ok(SizeReport {
        null_kind,
        level,
        replications: done,
        failures,
        rejections,
        rate: rejections as f64 / done as f64,
        statistics,
        critical_values,
    })
}
