//! Linear quantile regression by exact simplex descent on the check loss.
//!
//! The solver walks between basic solutions (coefficient vectors that
//! interpolate `p` observations). At each vertex it evaluates the `2p`
//! edge directional derivatives, follows the steepest descending edge and
//! performs an exact line search over the kinks of the piecewise linear loss.
//! Each step strictly decreases the objective, so the walk terminates at a
//! global minimizer. A previous basis can be supplied as a warm start, which
//! makes re-solving after a small change of the responses cheap.
//!
//! When the minimizer is not unique (e.g. `n * tau` integral with an
//! intercept-only design) the walk continues along flat edges to the
//! minimizer of `sum_i z_i'b` within the optimal set. This is the limit of
//! the solutions at `tau - eps` as `eps` decreases to zero, so the result
//! does not depend on the starting basis. For an intercept-only design it is
//! the left-continuous sample quantile.

use std::collections::BinaryHeap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::numerical_rank;

/// Check loss `(tau - 1{u < 0}) * u`.
#[inline]
pub fn check_loss(u: f64, tau: f64) -> f64 {
    if u < 0.0 {
        (tau - 1.0) * u
    } else {
        tau * u
    }
}

/// Dense `n x p` design stored column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    n: usize,
    p: usize,
    cols: Vec<f64>,
    /// Column sums, the secondary cost `sum_i z_i`.
    sums: Vec<f64>,
}

impl Design {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        if p == 0 || rows.iter().any(|r| r.len() != p) {
            return Err(Error::InvalidData(
                "design rows must be nonempty and equal length".into(),
            ));
        }
        Ok(Self::from_fn(n, p, |i, k| rows[i][k]))
    }

    pub fn from_fn(n: usize, p: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut cols = Vec::with_capacity(n * p);
        for k in 0..p {
            for i in 0..n {
                cols.push(f(i, k));
            }
        }
        let sums = (0..p)
            .map(|k| cols[k * n..(k + 1) * n].iter().sum())
            .collect();
        Self { n, p, cols, sums }
    }

    /// Intercept-only design with `n` rows.
    pub fn intercept(n: usize) -> Self {
        Self {
            n,
            p: 1,
            cols: vec![1.0; n],
            sums: vec![n as f64],
        }
    }

    pub fn nrows(&self) -> usize {
        self.n
    }
    pub fn ncols(&self) -> usize {
        self.p
    }
    #[inline]
    pub fn col(&self, k: usize) -> &[f64] {
        &self.cols[k * self.n..(k + 1) * self.n]
    }
    #[inline]
    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.cols[k * self.n + i]
    }
    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.p).map(|k| self.get(i, k)).collect()
    }

    pub fn rank(&self) -> usize {
        numerical_rank(&DMatrix::from_column_slice(self.n, self.p, &self.cols))
    }

    /// `out[i] = z_i' v`.
    pub(crate) fn mul_into(&self, v: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (k, &vk) in v.iter().enumerate() {
            if vk != 0.0 {
                for (o, z) in out.iter_mut().zip(self.col(k)) {
                    *o += vk * z;
                }
            }
        }
    }
}

/// Result of a quantile regression fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QrFit {
    pub coefficients: Vec<f64>,
    pub tau: f64,
    /// Mean check loss at `coefficients`.
    pub objective: f64,
    pub n_neg: usize,
    pub n_zero: usize,
    pub converged: bool,
    pub iterations: usize,
    /// Observations interpolated by the returned vertex.
    pub basis: Vec<usize>,
}

/// Solver controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QrOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for QrOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 200,
        }
    }
}

/// Fits `min_b (1/n) sum_i check_loss(responses_i - z_i'b, tau)`.
pub fn fit(responses: &[f64], design: &Design, tau: f64, tol: f64) -> Result<QrFit> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "tau must lie in (0,1), got {tau}"
        )));
    }
    if responses.len() != design.nrows() {
        return Err(Error::InvalidData(
            "response length does not match design".into(),
        ));
    }
    let rank = design.rank();
    if rank < design.ncols() || design.nrows() <= design.ncols() {
        return Err(Error::RankDeficient {
            rank,
            cols: design.ncols(),
        });
    }
    let opts = QrOptions {
        tol,
        ..QrOptions::default()
    };
    let mut ws = Workspace::new(design.nrows());
    solve(responses, design, tau, opts, None, &mut ws)
}

/// Scratch buffers reused across solves on designs of the same height.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub(crate) residuals: Vec<f64>,
    is_basic: Vec<bool>,
    psi: Vec<f64>,
    dir: Vec<f64>,
    kinks: Vec<Kink>,
}

impl Workspace {
    pub fn new(n: usize) -> Self {
        Self {
            residuals: vec![0.0; n],
            is_basic: vec![false; n],
            psi: vec![0.0; n],
            dir: vec![0.0; n],
            kinks: Vec::with_capacity(n),
        }
    }

    /// Residuals of the last solve; exactly zero on the basis.
    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }
}

/// Core simplex walk. `warm` is an optional starting basis; it is ignored
/// when it is not a valid nonsingular basis for `design`. The design is
/// assumed to have full column rank.
pub fn solve(
    responses: &[f64],
    design: &Design,
    tau: f64,
    opts: QrOptions,
    warm: Option<&[usize]>,
    ws: &mut Workspace,
) -> Result<QrFit> {
    let (n, p) = (design.nrows(), design.ncols());
    if ws.residuals.len() != n {
        *ws = Workspace::new(n);
    }
    let scale = responses.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    let zero_eps = 1e-12 * (1.0 + scale);
    let slope_eps = 1e-11 * n as f64;

    let mut basis: Vec<usize> = match warm {
        Some(h)
            if h.len() == p && h.iter().all(|&i| i < n) && basis_inverse(design, h).is_some() =>
        {
            h.to_vec()
        }
        _ => initial_basis(responses, design)?,
    };
    let is_basic = &mut ws.is_basic;
    is_basic.fill(false);

    let mut degenerate = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut coef = vec![0.0; p];
    loop {
        let binv = match basis_inverse(design, &basis) {
            Some(b) => b,
            None => {
                let rank = design.rank();
                return Err(Error::RankDeficient { rank, cols: p });
            }
        };
        // coefficients interpolating the basis
        let rh: Vec<f64> = basis.iter().map(|&i| responses[i]).collect();
        for k in 0..p {
            coef[k] = (0..p).map(|j| binv[(k, j)] * rh[j]).sum();
        }
        for &i in &basis {
            is_basic[i] = true;
        }

        // residuals, exactly zero on the basis
        design.mul_into(&coef, &mut ws.dir);
        for ((r, y), f) in ws.residuals.iter_mut().zip(responses).zip(&ws.dir) {
            *r = y - f;
        }
        for &i in &basis {
            ws.residuals[i] = 0.0;
        }

        // subgradient pieces
        degenerate.clear();
        for (i, (psi, &r)) in ws.psi.iter_mut().zip(&ws.residuals).enumerate() {
            *psi = if r > zero_eps {
                tau
            } else if r < -zero_eps {
                tau - 1.0
            } else {
                if !is_basic[i] {
                    degenerate.push(i);
                }
                0.0
            };
        }
        let g: Vec<f64> = (0..p).map(|k| dot(&ws.psi, design.col(k))).collect();

        // edge derivatives: direction sigma * binv[:, k]; the secondary
        // rate sigma * sums'binv[:, k] breaks ties between flat edges
        let mut best_edge: Option<(f64, usize, f64)> = None;
        let mut best_flat: Option<(f64, usize, f64, f64)> = None;
        for k in 0..p {
            let delta: Vec<f64> = (0..p).map(|j| binv[(j, k)]).collect();
            let gk: f64 = g.iter().zip(&delta).map(|(a, b)| a * b).sum();
            let mut extra_plus = 0.0;
            let mut extra_minus = 0.0;
            for &i in &degenerate {
                let c: f64 = (0..p).map(|j| design.get(i, j) * delta[j]).sum();
                extra_plus += ((1.0 - tau) * c).max(-tau * c);
                extra_minus += (-(1.0 - tau) * c).max(tau * c);
            }
            let d_plus = -gk + extra_plus + (1.0 - tau);
            let d_minus = gk + extra_minus + tau;
            let rate: f64 = design.sums.iter().zip(&delta).map(|(a, b)| a * b).sum();
            let rate_scale: f64 = design
                .sums
                .iter()
                .zip(&delta)
                .map(|(a, b)| (a * b).abs())
                .sum();
            for (d, sigma) in [(d_plus, 1.0), (d_minus, -1.0)] {
                if best_edge.is_none_or(|(bd, _, _)| d < bd) {
                    best_edge = Some((d, k, sigma));
                }
                let r = sigma * rate;
                if d.abs() <= slope_eps
                    && r < -1e-9 * rate_scale
                    && best_flat.is_none_or(|(br, _, _, _)| r < br)
                {
                    best_flat = Some((r, k, sigma, d));
                }
            }
        }
        let (mut deriv, mut k, mut sigma) = best_edge.expect("p >= 1");
        if deriv >= -slope_eps {
            match best_flat {
                // optimal; move along a flat edge that lowers the secondary cost
                Some((_, fk, fs, fd)) if iterations < opts.max_iter => {
                    (deriv, k, sigma) = (fd.min(0.0), fk, fs)
                }
                _ => {
                    converged = true;
                    break;
                }
            }
        }
        if iterations >= opts.max_iter {
            break;
        }

        // exact line search along the chosen edge
        let dir_coef: Vec<f64> = (0..p).map(|j| sigma * binv[(j, k)]).collect();
        design.mul_into(&dir_coef, &mut ws.dir);
        let entering = line_search(&ws.residuals, &ws.dir, zero_eps, deriv, &mut ws.kinks);
        let Some(j) = entering else {
            // unbounded descent cannot happen for a full-rank design
            let rank = design.rank();
            return Err(Error::RankDeficient { rank, cols: p });
        };
        is_basic[basis[k]] = false;
        basis[k] = j;
        iterations += 1;
    }

    let objective = mean_loss(&ws.residuals, tau);
    if !converged {
        // every step strictly decreases the loss, so the last vertex is the best
        return Err(Error::NonConvergence {
            iterations,
            best: coef,
            objective,
        });
    }
    let n_neg = ws.residuals.iter().filter(|&&r| r < -zero_eps).count();
    let n_zero = ws
        .residuals
        .iter()
        .filter(|&&r| r.abs() <= zero_eps)
        .count();
    Ok(QrFit {
        coefficients: coef,
        tau,
        objective,
        n_neg,
        n_zero,
        converged,
        iterations,
        basis,
    })
}

/// Exact line search along a descent edge with residual rates `dir`. Walks
/// the kinks (residuals reaching zero) in increasing step length until the
/// slope turns nonnegative and returns the observation at that kink.
///
/// Usually only a few kinks are crossed, so a first pass keeps the smallest
/// ones in a bounded heap; the full set is sorted only when that is not enough.
fn line_search(
    residuals: &[f64],
    dir: &[f64],
    zero_eps: f64,
    slope: f64,
    kinks: &mut Vec<Kink>,
) -> Option<usize> {
    const KEEP: usize = 32;
    let kink_at = |i: usize| -> Option<Kink> {
        let (r, c) = (residuals[i], dir[i]);
        if r.abs() > zero_eps && c != 0.0 && (r > 0.0) == (c > 0.0) {
            Some(Kink {
                step: r / c,
                weight: c.abs(),
                index: i,
            })
        } else {
            None
        }
    };
    let mut heap: BinaryHeap<Kink> = BinaryHeap::with_capacity(KEEP + 1);
    let mut total = 0usize;
    for i in 0..residuals.len() {
        let Some(kink) = kink_at(i) else { continue };
        total += 1;
        if heap.len() < KEEP {
            heap.push(kink);
        } else if kink < *heap.peek().expect("heap is full") {
            heap.pop();
            heap.push(kink);
        }
    }
    let walk = |sorted: &[Kink], mut slope: f64| -> Option<usize> {
        for k in sorted {
            slope += k.weight;
            if slope >= 0.0 {
                return Some(k.index);
            }
        }
        None
    };
    let smallest = heap.into_sorted_vec();
    if let Some(j) = walk(&smallest, slope) {
        return Some(j);
    }
    if total <= KEEP {
        return None;
    }
    kinks.clear();
    kinks.extend((0..residuals.len()).filter_map(kink_at));
    kinks.sort_unstable();
    walk(kinks, slope)
}

/// Breakpoint of the loss along a line-search direction.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Kink {
    step: f64,
    weight: f64,
    index: usize,
}

impl PartialEq for Kink {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other).is_eq()
    }
}
impl Eq for Kink {}
impl PartialOrd for Kink {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Kink {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.step
            .total_cmp(&other.step)
            .then(self.index.cmp(&other.index))
    }
}

/// Dot product with four interleaved accumulators.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for j in 0..4 {
            acc[j] += x[j] * y[j];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn mean_loss(residuals: &[f64], tau: f64) -> f64 {
    residuals.iter().map(|&r| check_loss(r, tau)).sum::<f64>() / residuals.len() as f64
}

fn basis_inverse(design: &Design, basis: &[usize]) -> Option<DMatrix<f64>> {
    let p = design.ncols();
    let m = DMatrix::from_fn(p, p, |r, k| design.get(basis[r], k));
    let inv = m.clone().try_inverse()?;
    // reject numerically singular bases
    let cond = m.norm() * inv.norm();
    if !cond.is_finite() || cond > 1e12 {
        return None;
    }
    Some(inv)
}

/// Starting vertex near the least-squares fit: observations with the
/// smallest least-squares residuals, added greedily while they keep the
/// basis rows linearly independent.
fn initial_basis(responses: &[f64], design: &Design) -> Result<Vec<usize>> {
    let (n, p) = (design.nrows(), design.ncols());
    let zt = DMatrix::from_column_slice(n, p, &design.cols);
    let gram = zt.transpose() * &zt;
    let rhs = zt.transpose() * DVector::from_column_slice(responses);
    let ls = gram
        .clone()
        .cholesky()
        .map(|c| c.solve(&rhs))
        .or_else(|| gram.try_inverse().map(|g| g * &rhs));
    let mut order: Vec<(f64, usize)> = match ls {
        Some(b) => (0..n)
            .map(|i| {
                let fit: f64 = (0..p).map(|k| design.get(i, k) * b[k]).sum();
                ((responses[i] - fit).abs(), i)
            })
            .collect(),
        None => (0..n).map(|i| (0.0, i)).collect(),
    };
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    // Gram-Schmidt on candidate rows
    let mut basis = Vec::with_capacity(p);
    let mut ortho: Vec<Vec<f64>> = Vec::with_capacity(p);
    for &(_, i) in &order {
        let row = design.row(i);
        let norm0 = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm0 == 0.0 {
            continue;
        }
        let mut v = row.clone();
        for q in &ortho {
            let d: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
            for (a, b) in v.iter_mut().zip(q) {
                *a -= d * b;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 * norm0 {
            for a in v.iter_mut() {
                *a /= norm;
            }
            ortho.push(v);
            basis.push(i);
            if basis.len() == p {
                return Ok(basis);
            }
        }
    }
    Err(Error::RankDeficient {
        rank: basis.len(),
        cols: p,
    })
}

/// Sup-norm of the mean subgradient `(1/n) sum_i (tau - 1{r_i < 0}) z_i`,
/// where the weights of zero residuals are chosen in `[tau - 1, tau]` to
/// minimize the Euclidean norm of the sum (projected coordinate descent).
/// Zero at an exact optimum; used as an optimality certificate.
pub fn first_order_gap(fit: &QrFit, responses: &[f64], design: &Design, tau: f64) -> f64 {
    let (n, p) = (design.nrows(), design.ncols());
    let scale = responses.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    let zero_eps = 1e-9 * (1.0 + scale);
    let mut fitted = vec![0.0; n];
    design.mul_into(&fit.coefficients, &mut fitted);

    let mut is_zero = vec![false; n];
    for &i in &fit.basis {
        if i < n {
            is_zero[i] = true;
        }
    }
    let mut g = vec![0.0; p];
    let mut zeros = Vec::new();
    for i in 0..n {
        let r = responses[i] - fitted[i];
        if is_zero[i] || r.abs() <= zero_eps {
            zeros.push(i);
            continue;
        }
        let w = if r < 0.0 { tau - 1.0 } else { tau };
        for (k, gk) in g.iter_mut().enumerate() {
            *gk += w * design.get(i, k);
        }
    }

    // minimize |g + sum_j lambda_j z_j|_2 over the box
    let mut lambda = vec![0.0; zeros.len()];
    let mut s = g.clone();
    for _sweep in 0..500 {
        let mut moved = 0.0f64;
        for (j, &i) in zeros.iter().enumerate() {
            let z = design.row(i);
            let zz: f64 = z.iter().map(|v| v * v).sum();
            if zz == 0.0 {
                continue;
            }
            let sz: f64 = s.iter().zip(&z).map(|(a, b)| a * b).sum();
            let target = (lambda[j] - sz / zz).clamp(tau - 1.0, tau);
            let d = target - lambda[j];
            if d != 0.0 {
                for (a, b) in s.iter_mut().zip(&z) {
                    *a += d * b;
                }
                lambda[j] = target;
                moved = moved.max(d.abs());
            }
        }
        if moved < 1e-15 {
            break;
        }
    }
    s.iter().fold(0.0f64, |m, v| m.max(v.abs())) / n as f64
}

/// Mean check loss of `coefficients` on `(responses, design)`.
pub fn objective_at(coefficients: &[f64], responses: &[f64], design: &Design, tau: f64) -> f64 {
    let mut fitted = vec![0.0; design.nrows()];
    design.mul_into(coefficients, &mut fitted);
    let res: Vec<f64> = responses.iter().zip(&fitted).map(|(r, f)| r - f).collect();
    mean_loss(&res, tau)
}
