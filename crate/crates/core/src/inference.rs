//! Unit-level bootstrap, percentile intervals and the functional test of
//! the coefficient path.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::EstimationConfig;
use crate::error::{Error, Result};
use crate::estimator::{estimate_prepared, Problem, QtePath};
use crate::panel::{validate, PanelDataset};
use crate::util::{pairwise_sum, stream_seed, type1_quantile};

/// Default number of bootstrap replicates.
pub const DEFAULT_REPLICATES: usize = 200;

/// Replicate estimates from resampled panels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapDraws {
    /// Requested replicate count.
    pub b: usize,
    /// Number of units in the original panel.
    pub n: usize,
    /// Successful replicate paths in replicate order. Search traces are
    /// dropped to keep the draws small.
    pub paths: Vec<QtePath>,
    /// Replicate index of each entry of `paths`.
    pub replicate_index: Vec<usize>,
    /// Seeds of all `b` replicates.
    pub replicate_seeds: Vec<u64>,
    pub failures: usize,
    pub base: QtePath,
}

impl BootstrapDraws {
    /// Replicate values of coordinate `k` at grid position `ti`, in replicate order.
    pub fn coordinate(&self, ti: usize, k: usize) -> Vec<f64> {
        self.paths.iter().map(|p| p.alpha[ti][k]).collect()
    }
}

/// Bootstraps the estimator by resampling whole units with replacement.
pub fn bootstrap(
    data: &PanelDataset,
    config: &EstimationConfig,
    b: usize,
) -> Result<BootstrapDraws> {
    config.validate(data.dx())?;
    let report = validate(data);
    if !report.is_ok() {
        return Err(Error::InvalidData(report.problems().join("; ")));
    }
    let problem = Problem::new(data, config)?;
    let base = estimate_prepared(&problem, config)?;
    bootstrap_prepared(&problem, base, config, b)
}

/// Bootstrap around an existing base estimate of `problem` under `config`.
/// Replicates reuse the base stacked layout, weight columns and quadrature rule.
pub fn bootstrap_prepared(
    problem: &Problem,
    base: QtePath,
    config: &EstimationConfig,
    b: usize,
) -> Result<BootstrapDraws> {
    if b < 2 {
        return Err(Error::InvalidConfig(
            "need at least 2 bootstrap replicates".into(),
        ));
    }
    let data = problem.data();
    let n = data.n();
    let seeds: Vec<u64> = (0..b as u64).map(|k| stream_seed(config.seed, k)).collect();
    let results: Vec<Result<QtePath>> = seeds
        .par_iter()
        .map(|&seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let replicate = data.select_units(&idx);
            let p = Problem::with_rule(
                &replicate,
                problem.stacked().layout(),
                problem.weight_columns(),
                problem.rule(),
                config,
            )?;
            let mut path = estimate_prepared(&p, config)?;
            path.diagnostics.clear();
            Ok(path)
        })
        .collect();
    let mut paths = Vec::with_capacity(b);
    let mut replicate_index = Vec::with_capacity(b);
    let mut failures = 0;
    for (k, r) in results.into_iter().enumerate() {
        match r {
            Ok(p) => {
                paths.push(p);
                replicate_index.push(k);
            }
            Err(_) => failures += 1,
        }
    }
    if failures * 10 > b {
        return Err(Error::TooManyFailures {
            failed: failures,
            total: b,
        });
    }
    Ok(BootstrapDraws {
        b,
        n,
        paths,
        replicate_index,
        replicate_seeds: seeds,
        failures,
        base,
    })
}

/// Percentile interval `[q_{(1-level)/2}, q_{(1+level)/2}]` per treatment
/// coordinate at quantile level `tau`.
pub fn pointwise_ci(draws: &BootstrapDraws, tau: f64, level: f64) -> Result<Vec<(f64, f64)>> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidConfig("level must lie in (0, 1)".into()));
    }
    let ti = draws
        .base
        .tau_index(tau)
        .ok_or_else(|| Error::InvalidConfig(format!("tau {tau} is not on the grid")))?;
    if draws.paths.is_empty() {
        return Err(Error::InvalidConfig("no bootstrap replicates".into()));
    }
    let dx = draws.base.alpha[ti].len();
    Ok((0..dx)
        .map(|k| {
            let mut v = draws.coordinate(ti, k);
            v.sort_by(f64::total_cmp);
            (
                type1_quantile(&v, (1.0 - level) / 2.0),
                type1_quantile(&v, (1.0 + level) / 2.0),
            )
        })
        .collect())
}

/// Null hypothesis for [`uniform_test`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NullKind {
    /// The path equals a user-supplied function on the grid.
    KnownR,
    /// The path is constant; estimated by the median coefficient.
    ConstantQte,
    /// The path is identically zero.
    ZeroQte,
}

impl std::str::FromStr for NullKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "known-r" | "known" => Ok(Self::KnownR),
            "constant" | "constant-qte" => Ok(Self::ConstantQte),
            "zero" | "zero-qte" => Ok(Self::ZeroQte),
            _ => Err(Error::InvalidConfig(format!("unknown null `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub critical_value: f64,
    pub level: f64,
    pub reject: bool,
    pub null_kind: NullKind,
    pub replicates: usize,
}

/// `n` times the grid average of `||u_tau||^2`.
fn scaled_mean_square(n: usize, rows: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = rows.collect();
    n as f64 * pairwise_sum(&v) / v.len() as f64
}

fn sq_norm(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum()
}

/// Functional test of the coefficient path with a bootstrap critical value.
///
/// `r_known[k]` is the null path at grid point `k` (only for [`NullKind::KnownR`]).
pub fn uniform_test(
    draws: &BootstrapDraws,
    null_kind: NullKind,
    level: f64,
    r_known: Option<&[Vec<f64>]>,
) -> Result<TestResult> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidConfig("level must lie in (0, 1)".into()));
    }
    let base = &draws.base;
    let grid = base.tau_grid.len();
    if grid < 2 {
        return Err(Error::InvalidConfig(
            "test needs at least 2 grid points".into(),
        ));
    }
    if draws.paths.is_empty() {
        return Err(Error::InvalidConfig("no bootstrap replicates".into()));
    }
    let dx = base.alpha[0].len();
    let r_hat: Vec<Vec<f64>> = match null_kind {
        NullKind::KnownR => {
            let r = r_known
                .ok_or_else(|| Error::InvalidConfig("known-r null needs the null path".into()))?;
            if r.len() != grid || r.iter().any(|v| v.len() != dx) {
                return Err(Error::InvalidConfig(
                    "null path does not match the grid".into(),
                ));
            }
            r.to_vec()
        }
        NullKind::ConstantQte => {
            let m = base.tau_index(0.5).ok_or(Error::MissingMedian)?;
            vec![base.alpha[m].clone(); grid]
        }
        NullKind::ZeroQte => vec![vec![0.0; dx]; grid],
    };
    let n = draws.n;
    let diff = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(p, q)| p - q).collect() };
    let statistic = scaled_mean_square(
        n,
        (0..grid).map(|k| sq_norm(&diff(&base.alpha[k], &r_hat[k]))),
    );
    let median = base.tau_index(0.5);
    let mut boot: Vec<f64> = draws
        .paths
        .iter()
        .map(|p| {
            let centre = match (null_kind, median) {
                (NullKind::ConstantQte, Some(m)) => diff(&p.alpha[m], &base.alpha[m]),
                _ => vec![0.0; dx],
            };
            scaled_mean_square(
                n,
                (0..grid).map(|k| sq_norm(&diff(&diff(&p.alpha[k], &base.alpha[k]), &centre))),
            )
        })
        .collect();
    boot.sort_by(f64::total_cmp);
    let critical_value = type1_quantile(&boot, 1.0 - level);
    Ok(TestResult {
        statistic,
        critical_value,
        level,
        reject: statistic > critical_value,
        null_kind,
        replicates: boot.len(),
    })
}
