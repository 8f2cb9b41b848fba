//! Brute-force reference implementations for tiny panels.
//!
//! Nothing here calls into the library's standardization, quantile
//! regression or moment code; only the panel container and the quadrature
//! rule (an input to the objective) are shared.

#![allow(dead_code)]

use qte_core::{PanelDataset, QuadratureRule};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Random `T = 2`, `d_X = 1` panel with `n` units and `dz` covariates.
/// With `dz = 2` the second covariate is time-invariant when `shared` is set.
pub fn tiny_panel(seed: u64, n: usize, dz: usize, shared: bool) -> PanelDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut y, mut x, mut z) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..n {
        let w: f64 = rng.random();
        for _ in 0..2 {
            let e: f64 = rng.sample(StandardNormal);
            let xt: f64 = rng.random();
            let wt = if shared { w } else { rng.random() };
            y.push(0.8 * xt + 0.5 * wt + e);
            x.push(xt);
            z.push(1.0);
            if dz == 2 {
                z.push(wt);
            }
        }
    }
    PanelDataset::new(n, 2, 1, dz, y, x, z).unwrap()
}

fn check(u: f64, tau: f64) -> f64 {
    if u < 0.0 {
        (tau - 1.0) * u
    } else {
        tau * u
    }
}

fn mean_check(r: &[f64], rows: &[Vec<f64>], b: &[f64], tau: f64) -> f64 {
    let mut s = 0.0;
    for (ri, zi) in r.iter().zip(rows) {
        let fit: f64 = zi.iter().zip(b).map(|(p, q)| p * q).sum();
        s += check(ri - fit, tau);
    }
    s / r.len() as f64
}

/// Quantile regression by enumerating every interpolating vertex (`d_Z <= 2`).
/// Panics when the minimizer is not unique.
pub fn brute_qr(r: &[f64], rows: &[Vec<f64>], tau: f64) -> Vec<f64> {
    let p = rows[0].len();
    let mut cands: Vec<Vec<f64>> = Vec::new();
    match p {
        1 => cands.extend(r.iter().map(|&v| vec![v / rows[0][0]])),
        2 => {
            for i in 0..r.len() {
                for j in i + 1..r.len() {
                    let (a, b, c, d) = (rows[i][0], rows[i][1], rows[j][0], rows[j][1]);
                    let det = a * d - b * c;
                    if det.abs() < 1e-12 {
                        continue;
                    }
                    cands.push(vec![
                        (d * r[i] - b * r[j]) / det,
                        (a * r[j] - c * r[i]) / det,
                    ]);
                }
            }
        }
        _ => panic!("brute force supports at most two covariates"),
    }
    let losses: Vec<f64> = cands.iter().map(|b| mean_check(r, rows, b, tau)).collect();
    let best = losses.iter().cloned().fold(f64::INFINITY, f64::min);
    let winners: Vec<&Vec<f64>> = cands
        .iter()
        .zip(&losses)
        .filter(|(_, &l)| l <= best + 1e-13)
        .map(|(b, _)| b)
        .collect();
    for w in &winners {
        for (u, v) in w.iter().zip(winners[0]) {
            assert!(
                (u - v).abs() < 1e-9,
                "non-unique quantile regression solution"
            );
        }
    }
    winners[0].clone()
}

/// Standardized non-constant stacked columns, unit-major. Columns are the
/// treatments by period, then covariates by period with exact duplicates and
/// constant columns dropped.
pub fn brute_coordinates(data: &PanelDataset) -> (usize, Vec<Vec<f64>>) {
    let n = data.n();
    let mut cols: Vec<Vec<f64>> = Vec::new();
    for t in 0..data.periods() {
        for k in 0..data.dx() {
            cols.push((0..n).map(|i| data.x(i, t)[k]).collect());
        }
    }
    let mut zcols: Vec<Vec<f64>> = Vec::new();
    for t in 0..data.periods() {
        for k in 0..data.dz() {
            let c: Vec<f64> = (0..n).map(|i| data.z(i, t)[k]).collect();
            if !zcols
                .iter()
                .any(|d| d.iter().zip(&c).all(|(p, q)| p.to_bits() == q.to_bits()))
            {
                zcols.push(c);
            }
        }
    }
    cols.extend(zcols);
    let mut keep = Vec::new();
    for c in cols {
        if c.iter().all(|&v| v == c[0]) {
            continue;
        }
        let mean = c.iter().sum::<f64>() / n as f64;
        let sd = (c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        keep.push(c.iter().map(|v| (v - mean) / sd).collect::<Vec<f64>>());
    }
    let d = keep.len();
    let rows = (0..n)
        .map(|i| keep.iter().map(|c| c[i]).collect())
        .collect();
    (d, rows)
}

/// Second-step objective by an explicit loop over units, periods and nodes.
pub fn brute_objective(data: &PanelDataset, rule: &QuadratureRule, a: f64, tau: f64) -> f64 {
    let (n, periods) = (data.n(), data.periods());
    let (d, coords) = brute_coordinates(data);
    assert_eq!(d.max(1), rule.dim);
    let mut b = Vec::new();
    for t in 0..periods {
        let r: Vec<f64> = (0..n).map(|i| data.y(i, t) - data.x(i, t)[0] * a).collect();
        let rows: Vec<Vec<f64>> = (0..n).map(|i| data.z(i, t).to_vec()).collect();
        b.push(brute_qr(&r, &rows, tau));
    }
    let mut ind = vec![vec![0.0; periods]; n];
    for i in 0..n {
        for t in 0..periods {
            let y = data.y(i, t);
            let fit = data.x(i, t)[0] * a
                + data
                    .z(i, t)
                    .iter()
                    .zip(&b[t])
                    .map(|(p, q)| p * q)
                    .sum::<f64>();
            // ties up to rounding of the fitted value count as 1
            ind[i][t] = if y - fit <= 1e-11 * (1.0 + y.abs()) {
                1.0
            } else {
                0.0
            };
        }
    }
    let mut total = 0.0;
    for t in 0..periods {
        for j in 0..rule.len() {
            let v = rule.node(j);
            let mut s = 0.0;
            for i in 0..n {
                let mean = ind[i].iter().sum::<f64>() / periods as f64;
                let e: f64 = (0..d).map(|k| v[k] * coords[i][k]).sum();
                s += (ind[i][t] - mean) * e.exp();
            }
            let dn = s / n as f64;
            total += rule.weights[j] * dn * dn;
        }
    }
    total / periods as f64
}

/// Lattice used by the estimator: `points` evenly spaced values with the
/// upper end pinned.
pub fn lattice(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    (0..points)
        .map(|k| {
            if k + 1 == points {
                hi
            } else {
                lo + (hi - lo) * k as f64 / (points - 1) as f64
            }
        })
        .collect()
}

/// First minimizer on the lattice (smallest `a` among exact ties).
pub fn brute_argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, v) in values.iter().enumerate() {
        if *v < values[best] {
            best = k;
        }
    }
    best
}

/// Outcome of comparing the library against the brute-force oracle on one
/// tiny panel.
pub struct OracleCase {
    pub max_abs_diff: f64,
    /// Lattice points with a strictly positive oracle objective.
    pub nonzero: usize,
    pub lattice_argmin_matches: bool,
    /// The returned coefficient is the oracle's lattice argmin, or the
    /// oracle confirms the refinement found a strictly lower objective.
    pub alpha_consistent: bool,
}

/// Case `idx` of the tiny-panel oracle suite.
pub fn oracle_case(idx: u64) -> OracleCase {
    use qte_core::{estimate, EstimationConfig, Problem, QuadScheme};
    let n = 5 + (idx % 2) as usize;
    let dz = 1 + (idx / 2 % 2) as usize;
    let shared = idx % 8 >= 4;
    let tau = [0.3, 0.45, 0.55, 0.7][(idx % 4) as usize];
    let data = tiny_panel(1000 + idx, n, dz, shared);
    let mut config = EstimationConfig::simulation(vec![tau]).with_seed(idx);
    config.quad_scheme = QuadScheme::TensorGauss;
    config.quad_nodes = 2 + (idx % 3) as usize;
    let problem = Problem::new(&data, &config).unwrap();
    let path = estimate(&data, &config).unwrap();
    let trace = &path.diagnostics[0];
    let grid = lattice(-2.0, 4.0, config.grid_points);
    let brute: Vec<f64> = grid
        .iter()
        .map(|&a| brute_objective(&data, problem.rule(), a, tau))
        .collect();
    let mut max_abs_diff: f64 = 0.0;
    for ((cand, lib), (&a, want)) in trace.lattice.iter().zip(grid.iter().zip(&brute)) {
        assert_eq!(cand[0], a);
        max_abs_diff = max_abs_diff.max((lib - want).abs());
    }
    let lib_values: Vec<f64> = trace.lattice.iter().map(|(_, v)| *v).collect();
    let k = brute_argmin(&brute);
    let lattice_argmin_matches = brute_argmin(&lib_values) == k;
    let alpha = path.alpha[0][0];
    let alpha_consistent =
        alpha == grid[k] || brute_objective(&data, problem.rule(), alpha, tau) < brute[k];
    OracleCase {
        max_abs_diff,
        nonzero: brute.iter().filter(|&&v| v > 0.0).count(),
        lattice_argmin_matches,
        alpha_consistent,
    }
}
