//! Profiled two-step estimator.
//!
//! For a candidate treatment coefficient `a` the period coefficients are
//! concentrated out by quantile regressions of `Y_it - X_it'a` on `Z_it`.
//! The second step minimizes the average over periods of the squared L2
//! norm (over the weight box) of the centered indicator moments. The
//! objective is piecewise constant in `a`, so the minimization is a global
//! lattice scan followed by derivative-free refinement.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::EstimationConfig;
use crate::error::{Error, Result};
use crate::moments::{
    indicator, l2_objective, make_rule, weight_coordinates, IndicatorMatrix, QuadratureRule,
    WeightTable,
};
use crate::panel::{
    canonical_order, standardize_with_layout, validate, PanelDataset, StackedLayout,
    StackedRegressors,
};
use crate::quantreg::{self, Design, QrOptions, Workspace};

/// Search history for one quantile level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchTrace {
    /// `(candidate, objective)` in lattice order; failed candidates carry NaN.
    pub lattice: Vec<(Vec<f64>, f64)>,
    pub refinement: Vec<(Vec<f64>, f64)>,
    pub lattice_best: f64,
    pub failures: usize,
}

/// Estimated coefficient paths over the quantile grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QtePath {
    pub tau_grid: Vec<f64>,
    /// `alpha[k]` is the treatment coefficient vector at `tau_grid[k]`.
    pub alpha: Vec<Vec<f64>>,
    /// `beta[k][t]` is the period-`t` covariate coefficient vector.
    pub beta: Vec<Vec<Vec<f64>>>,
    pub objective_at_min: Vec<f64>,
    pub diagnostics: Vec<SearchTrace>,
}

impl QtePath {
    /// First treatment coordinate across the grid.
    pub fn alpha_scalar(&self) -> Vec<f64> {
        self.alpha.iter().map(|a| a[0]).collect()
    }

    pub fn tau_index(&self, tau: f64) -> Option<usize> {
        self.tau_grid.iter().position(|&t| (t - tau).abs() < 1e-12)
    }
}

/// Everything the objective needs, fixed for one dataset: units in canonical
/// order, standardized regressors, the quadrature rule and the weight table.
#[derive(Debug, Clone)]
pub struct Problem {
    data: PanelDataset,
    stacked: StackedRegressors,
    columns: Vec<usize>,
    rule: QuadratureRule,
    weights: WeightTable,
    designs: Vec<Design>,
    /// Period-major copies: `outcomes[t][i]`, `treatments[t][i*dx + k]`.
    outcomes: Vec<Vec<f64>>,
    treatments: Vec<Vec<f64>>,
    order: Vec<usize>,
    opts: QrOptions,
    b_bounds: Option<Vec<(f64, f64)>>,
}

impl Problem {
    /// Prepares a dataset, building the quadrature rule from the config.
    pub fn new(data: &PanelDataset, config: &EstimationConfig) -> Result<Self> {
        let canon = data.select_units(&canonical_order(data));
        let layout = StackedLayout::detect(&canon);
        let stacked = standardize_with_layout(&canon, &layout);
        let columns = stacked.active_columns();
        let rule = make_rule(
            columns.len().max(1),
            config.quad_nodes,
            config.quad_scheme,
            config.seed,
        )?;
        Self::assemble(canon, stacked, columns, rule, config)
    }

    /// Prepares a dataset reusing an existing stacked layout, weight columns
    /// and quadrature rule (bootstrap replicates).
    pub fn with_rule(
        data: &PanelDataset,
        layout: &StackedLayout,
        columns: &[usize],
        rule: &QuadratureRule,
        config: &EstimationConfig,
    ) -> Result<Self> {
        let canon = data.select_units(&canonical_order(data));
        let stacked = standardize_with_layout(&canon, layout);
        Self::assemble(canon, stacked, columns.to_vec(), rule.clone(), config)
    }

    fn assemble(
        data: PanelDataset,
        stacked: StackedRegressors,
        columns: Vec<usize>,
        rule: QuadratureRule,
        config: &EstimationConfig,
    ) -> Result<Self> {
        let (dim, coords) = weight_coordinates(&stacked, &columns);
        if dim != rule.dim {
            return Err(Error::InvalidConfig(format!(
                "quadrature dimension {} does not match {dim} weight coordinates",
                rule.dim
            )));
        }
        let weights = WeightTable::new(&coords, &rule)?;
        let n = data.n();
        let designs = (0..data.periods())
            .map(|t| Design::from_fn(n, data.dz(), |i, k| data.z(i, t)[k]))
            .collect();
        if let Some(b) = &config.b_bounds {
            if b.len() != data.dz() {
                return Err(Error::InvalidConfig(format!(
                    "{} first-step bounds given for {} covariates",
                    b.len(),
                    data.dz()
                )));
            }
        }
        let outcomes = (0..data.periods()).map(|t| data.outcomes(t)).collect();
        let treatments = (0..data.periods())
            .map(|t| (0..n).flat_map(|i| data.x(i, t).to_vec()).collect())
            .collect();
        Ok(Self {
            order: (0..n).collect(),
            outcomes,
            treatments,
            data,
            stacked,
            columns,
            rule,
            weights,
            designs,
            opts: QrOptions {
                tol: config.qr_tol,
                max_iter: config.qr_max_iter,
            },
            b_bounds: config.b_bounds.clone(),
        })
    }

    pub fn data(&self) -> &PanelDataset {
        &self.data
    }
    pub fn stacked(&self) -> &StackedRegressors {
        &self.stacked
    }
    pub fn rule(&self) -> &QuadratureRule {
        &self.rule
    }
    pub fn weight_columns(&self) -> &[usize] {
        &self.columns
    }

    pub fn evaluator(&self, tau: f64) -> Evaluator<'_> {
        Evaluator {
            problem: self,
            tau,
            bases: vec![None; self.data.periods()],
            ws: Workspace::new(self.data.n()),
            responses: vec![0.0; self.data.n()],
            xa: vec![vec![0.0; self.data.n()]; self.data.periods()],
        }
    }
}

/// Objective evaluator for one quantile level. Keeps the last simplex basis
/// of every period as a warm start for the next candidate.
pub struct Evaluator<'a> {
    problem: &'a Problem,
    tau: f64,
    bases: Vec<Option<Vec<usize>>>,
    ws: Workspace,
    responses: Vec<f64>,
    /// `X_it'a` for the last profiled candidate.
    xa: Vec<Vec<f64>>,
}

impl Evaluator<'_> {
    /// First-step coefficients `beta~_t(a, tau)` for every period.
    pub fn profile(&mut self, a: &[f64]) -> Result<Vec<Vec<f64>>> {
        let p = self.problem;
        let (n, dx) = (p.data.n(), p.data.dx());
        let mut out = Vec::with_capacity(p.data.periods());
        for t in 0..p.data.periods() {
            let (y, x, xa) = (&p.outcomes[t], &p.treatments[t], &mut self.xa[t]);
            for i in 0..n {
                let v: f64 = x[i * dx..(i + 1) * dx]
                    .iter()
                    .zip(a)
                    .map(|(x, c)| x * c)
                    .sum();
                xa[i] = v;
                self.responses[i] = y[i] - v;
            }
            let fit = quantreg::solve(
                &self.responses,
                &p.designs[t],
                self.tau,
                p.opts,
                self.bases[t].as_deref(),
                &mut self.ws,
            )
            .map_err(|e| e.in_period(t + 1))?;
            if let Some(bounds) = &p.b_bounds {
                let inside = fit
                    .coefficients
                    .iter()
                    .zip(bounds)
                    .all(|(c, &(lo, hi))| *c >= lo && *c <= hi);
                if !inside {
                    return Err(Error::OutOfBounds { period: t + 1 });
                }
            }
            self.bases[t] = Some(fit.basis);
            out.push(fit.coefficients);
        }
        Ok(out)
    }

    /// Second-step objective at `a` with the profiled coefficients.
    pub fn objective(&mut self, a: &[f64]) -> Result<f64> {
        let b = self.profile(a)?;
        Ok(self.profiled_objective(&b))
    }

    /// Objective for the coefficients returned by the last [`Self::profile`]
    /// call. Fitted values are `X'a + Z'b` summed in the same order as
    /// [`crate::moments::fitted_value`].
    fn profiled_objective(&mut self, b: &[Vec<f64>]) -> f64 {
        let p = self.problem;
        let (n, periods) = (p.data.n(), p.data.periods());
        let mut flags = vec![false; n * periods];
        for (t, bt) in b.iter().enumerate() {
            // Z'b accumulated column by column from zero, as in `fitted_value`
            p.designs[t].mul_into(bt, &mut self.responses);
            let (y, xa, zb) = (&p.outcomes[t], &self.xa[t], &self.responses);
            for i in 0..n {
                flags[i * periods + t] = indicator(y[i], xa[i] + zb[i]);
            }
        }
        let ind = IndicatorMatrix::from_flags(n, periods, flags);
        l2_objective(&ind, &p.weights, &p.rule, &p.order)
    }
}

/// Ordinary quantile regressions of `Y_it - X_it'a` on `Z_it`, one per period.
pub fn profile_beta(data: &PanelDataset, a: &[f64], tau: f64) -> Result<Vec<Vec<f64>>> {
    if a.len() != data.dx() {
        return Err(Error::InvalidConfig("candidate has wrong dimension".into()));
    }
    (0..data.periods())
        .map(|t| {
            let design = Design::from_fn(data.n(), data.dz(), |i, k| data.z(i, t)[k]);
            let r: Vec<f64> = (0..data.n())
                .map(|i| data.y(i, t) - data.x(i, t).iter().zip(a).map(|(x, c)| x * c).sum::<f64>())
                .collect();
            quantreg::fit(&r, &design, tau, 1e-8)
                .map(|f| f.coefficients)
                .map_err(|e| e.in_period(t + 1))
        })
        .collect()
}

/// Second-step objective at `a`. The rule must span the non-degenerate
/// columns of `stacked`, which must come from `data`.
pub fn objective(
    data: &PanelDataset,
    stacked: &StackedRegressors,
    rule: &QuadratureRule,
    a: &[f64],
    tau: f64,
) -> Result<f64> {
    let config = EstimationConfig::new(vec![tau], vec![(0.0, 0.0); data.dx()]);
    let problem = Problem::with_rule(
        data,
        stacked.layout(),
        &stacked.active_columns(),
        rule,
        &config,
    )?;
    problem.evaluator(tau).objective(a)
}

/// Estimates the treatment coefficient path over `config.tau_grid`.
pub fn estimate(data: &PanelDataset, config: &EstimationConfig) -> Result<QtePath> {
    config.validate(data.dx())?;
    let report = validate(data);
    if !report.is_ok() {
        return Err(Error::InvalidData(report.problems().join("; ")));
    }
    let problem = Problem::new(data, config)?;
    estimate_prepared(&problem, config)
}

/// Estimation on an already prepared problem.
pub fn estimate_prepared(problem: &Problem, config: &EstimationConfig) -> Result<QtePath> {
    let fits: Vec<Result<TauFit>> = config
        .tau_grid
        .par_iter()
        .map(|&tau| estimate_tau(problem, config, tau))
        .collect();
    let mut path = QtePath {
        tau_grid: config.tau_grid.clone(),
        alpha: Vec::new(),
        beta: Vec::new(),
        objective_at_min: Vec::new(),
        diagnostics: Vec::new(),
    };
    for fit in fits {
        let fit = fit?;
        path.alpha.push(fit.alpha);
        path.beta.push(fit.beta);
        path.objective_at_min.push(fit.objective);
        path.diagnostics.push(fit.trace);
    }
    Ok(path)
}

struct TauFit {
    alpha: Vec<f64>,
    beta: Vec<Vec<f64>>,
    objective: f64,
    trace: SearchTrace,
}

/// Lattice candidates in lexicographic order (first coordinate slowest).
fn lattice(bounds: &[(f64, f64)], points: usize) -> Vec<Vec<f64>> {
    let axes: Vec<Vec<f64>> = bounds
        .iter()
        .map(|&(lo, hi)| {
            (0..points)
                .map(|k| {
                    if k + 1 == points {
                        hi
                    } else {
                        lo + (hi - lo) * k as f64 / (points - 1) as f64
                    }
                })
                .collect()
        })
        .collect();
    let mut out = vec![Vec::new()];
    for axis in &axes {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                axis.iter().map(move |&v| {
                    let mut c = prefix.clone();
                    c.push(v);
                    c
                })
            })
            .collect();
    }
    out
}

fn estimate_tau(problem: &Problem, config: &EstimationConfig, tau: f64) -> Result<TauFit> {
    let mut ev = problem.evaluator(tau);
    let candidates = lattice(&config.a_bounds, config.grid_points);
    let mut trace = SearchTrace {
        lattice: Vec::with_capacity(candidates.len()),
        refinement: Vec::new(),
        lattice_best: f64::INFINITY,
        failures: 0,
    };
    let mut best: Option<(usize, f64)> = None;
    for (k, a) in candidates.iter().enumerate() {
        let value = match ev.objective(a) {
            Ok(v) if v.is_finite() => v,
            _ => {
                trace.failures += 1;
                f64::NAN
            }
        };
        trace.lattice.push((a.clone(), value));
        // strict comparison keeps the smallest candidate on ties
        if value.is_finite() && best.is_none_or(|(_, b)| value < b) {
            best = Some((k, value));
        }
    }
    let (best_k, best_val) = best.ok_or(Error::NoFiniteObjective)?;
    trace.lattice_best = best_val;

    let spacing: Vec<f64> = config
        .a_bounds
        .iter()
        .map(|&(lo, hi)| (hi - lo) / (config.grid_points - 1) as f64)
        .collect();
    let start = candidates[best_k].clone();
    let (alpha, value) = if config.a_bounds.len() == 1 {
        golden_refine(&mut ev, &start, best_val, spacing[0], config, &mut trace)
    } else {
        nelder_mead_refine(&mut ev, &start, best_val, &spacing, config, &mut trace)
    };
    let beta = ev.profile(&alpha)?;
    let objective = ev.profiled_objective(&beta);
    debug_assert!(objective.is_finite() && value.is_finite());
    Ok(TauFit {
        alpha,
        beta,
        objective,
        trace,
    })
}

/// Golden-section search on the lattice cell around the best lattice point.
/// Returns the best point seen; the lattice point wins ties.
fn golden_refine(
    ev: &mut Evaluator<'_>,
    start: &[f64],
    start_val: f64,
    h: f64,
    config: &EstimationConfig,
    trace: &mut SearchTrace,
) -> (Vec<f64>, f64) {
    let (lo_b, hi_b) = config.a_bounds[0];
    let mut lo = (start[0] - h).max(lo_b);
    let mut hi = (start[0] + h).min(hi_b);
    let mut best = (start.to_vec(), start_val);
    let mut eval = |a: f64, best: &mut (Vec<f64>, f64), trace: &mut SearchTrace| -> f64 {
        let v = ev.objective(&[a]).unwrap_or(f64::INFINITY);
        trace.refinement.push((vec![a], v));
        if v < best.1 {
            *best = (vec![a], v);
        }
        v
    };
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = hi - INV_PHI * (hi - lo);
    let mut d = lo + INV_PHI * (hi - lo);
    let mut fc = eval(c, &mut best, trace);
    let mut fd = eval(d, &mut best, trace);
    let mut guard = 0;
    while hi - lo > config.refine_tol && guard < 200 {
        guard += 1;
        if fc <= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - INV_PHI * (hi - lo);
            fc = eval(c, &mut best, trace);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + INV_PHI * (hi - lo);
            fd = eval(d, &mut best, trace);
        }
    }
    best
}

/// Nelder-Mead started from a simplex of half-cell steps around the best
/// lattice point, clamped to the bounds.
fn nelder_mead_refine(
    ev: &mut Evaluator<'_>,
    start: &[f64],
    start_val: f64,
    spacing: &[f64],
    config: &EstimationConfig,
    trace: &mut SearchTrace,
) -> (Vec<f64>, f64) {
    let d = start.len();
    let bounds = &config.a_bounds;
    let clamp = |p: &mut Vec<f64>| {
        for (v, &(lo, hi)) in p.iter_mut().zip(bounds) {
            *v = v.clamp(lo, hi);
        }
    };
    let mut f = |p: &[f64], trace: &mut SearchTrace| -> f64 {
        let v = ev.objective(p).unwrap_or(f64::INFINITY);
        trace.refinement.push((p.to_vec(), v));
        v
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = vec![(start.to_vec(), start_val)];
    for k in 0..d {
        let mut p = start.to_vec();
        p[k] += 0.5 * spacing[k];
        if p[k] > bounds[k].1 {
            p[k] = start[k] - 0.5 * spacing[k];
        }
        clamp(&mut p);
        let v = f(&p, trace);
        simplex.push((p, v));
    }
    let max_evals = 200 * d;
    let mut evals = d;
    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let diameter = simplex
            .iter()
            .skip(1)
            .map(|(p, _)| {
                p.iter()
                    .zip(&simplex[0].0)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if diameter < config.refine_tol || evals >= max_evals {
            break;
        }
        let centroid: Vec<f64> = (0..d)
            .map(|k| simplex[..d].iter().map(|(p, _)| p[k]).sum::<f64>() / d as f64)
            .collect();
        let worst = simplex[d].clone();
        let along = |t: f64| -> Vec<f64> {
            let mut p: Vec<f64> = centroid
                .iter()
                .zip(&worst.0)
                .map(|(c, w)| c + t * (c - w))
                .collect();
            clamp(&mut p);
            p
        };
        let xr = along(1.0);
        let fr = f(&xr, trace);
        evals += 1;
        if fr < simplex[0].1 {
            let xe = along(2.0);
            let fe = f(&xe, trace);
            evals += 1;
            simplex[d] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[d - 1].1 {
            simplex[d] = (xr, fr);
        } else {
            let xc = along(-0.5);
            let fc = f(&xc, trace);
            evals += 1;
            if fc < worst.1 {
                simplex[d] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for item in simplex.iter_mut().skip(1) {
                    let p: Vec<f64> = item
                        .0
                        .iter()
                        .zip(&best)
                        .map(|(a, b)| b + 0.5 * (a - b))
                        .collect();
                    let v = f(&p, trace);
                    evals += 1;
                    *item = (p, v);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    if simplex[0].1 < start_val {
        simplex.swap_remove(0)
    } else {
        (start.to_vec(), start_val)
    }
}
