//! Moment functions of the second step: exponential weights over the box
//! `[-0.5, 0.5]^d`, centered indicator moments and the empirical process
//! `D_n^t(v)` evaluated on a quadrature rule.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{canonical_order, PanelDataset, StackedRegressors};
use crate::util::{pairwise_sum, stream_seed};

/// Largest tensor grid `make_rule` will build.
pub const TENSOR_CAP: usize = 100_000;
/// Point count used when `Auto` falls back to a Halton rule.
pub const AUTO_HALTON_CAP: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuadScheme {
    /// Tensor Gauss-Legendre when `dim <= 4` and `J^dim <= 1e5`, Halton otherwise.
    Auto,
    TensorGauss,
    Halton,
}

impl std::str::FromStr for QuadScheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Self::Auto),
            "tensor-gauss" | "gauss" => Ok(Self::TensorGauss),
            "halton" => Ok(Self::Halton),
            other => Err(Error::InvalidConfig(format!(
                "unknown quadrature scheme {other:?}"
            ))),
        }
    }
}

impl std::fmt::Display for QuadScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Auto => "auto",
            Self::TensorGauss => "tensor-gauss",
            Self::Halton => "halton",
        })
    }
}

/// Nodes and weights approximating integrals over `[-0.5, 0.5]^dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureRule {
    pub dim: usize,
    /// Row-major `len x dim`.
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// Resolved scheme, never `Auto`.
    pub scheme: QuadScheme,
    pub seed: u64,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }
    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
    pub fn node(&self, j: usize) -> &[f64] {
        &self.nodes[j * self.dim..(j + 1) * self.dim]
    }
}

/// Builds a quadrature rule. For tensor Gauss-Legendre `j` is the number of
/// nodes per dimension; for Halton it is the total number of points.
pub fn make_rule(dim: usize, j: usize, scheme: QuadScheme, seed: u64) -> Result<QuadratureRule> {
    if dim == 0 || j == 0 {
        return Err(Error::InvalidConfig(
            "quadrature needs dim >= 1 and J >= 1".into(),
        ));
    }
    let tensor_size = (j as u128).checked_pow(dim as u32).unwrap_or(u128::MAX);
    match scheme {
        QuadScheme::TensorGauss => {
            if tensor_size > TENSOR_CAP as u128 {
                return Err(Error::BudgetExceeded {
                    requested: tensor_size,
                    cap: TENSOR_CAP,
                });
            }
            Ok(tensor_gauss(dim, j, seed))
        }
        QuadScheme::Halton => Ok(halton_rule(dim, j, seed)),
        QuadScheme::Auto => {
            if dim <= 4 && tensor_size <= TENSOR_CAP as u128 {
                Ok(tensor_gauss(dim, j, seed))
            } else {
                let points = tensor_size.min(AUTO_HALTON_CAP as u128) as usize;
                Ok(halton_rule(dim, points, seed))
            }
        }
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, ascending.
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    let half = m.div_ceil(2);
    for i in 0..half {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(m, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(m, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[m - 1 - i] = x;
        weights[i] = w;
        weights[m - 1 - i] = w;
    }
    if m % 2 == 1 {
        nodes[m / 2] = 0.0;
    }
    (nodes, weights)
}

/// `(P_m(x), P_m'(x))` by the three-term recurrence.
fn legendre(m: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if m == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=m {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = m as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

fn tensor_gauss(dim: usize, m: usize, seed: u64) -> QuadratureRule {
    let (x, w) = gauss_legendre(m);
    let x: Vec<f64> = x.iter().map(|v| 0.5 * v).collect();
    let w: Vec<f64> = w.iter().map(|v| 0.5 * v).collect();
    let total = m.pow(dim as u32);
    let mut nodes = Vec::with_capacity(total * dim);
    let mut weights = Vec::with_capacity(total);
    let mut idx = vec![0usize; dim];
    for _ in 0..total {
        let mut wt = 1.0;
        for &k in &idx {
            nodes.push(x[k]);
            wt *= w[k];
        }
        weights.push(wt);
        // odometer, last coordinate fastest
        for d in (0..dim).rev() {
            idx[d] += 1;
            if idx[d] < m {
                break;
            }
            idx[d] = 0;
        }
    }
    QuadratureRule {
        dim,
        nodes,
        weights,
        scheme: QuadScheme::TensorGauss,
        seed,
    }
}

fn first_primes(k: usize) -> Vec<u64> {
    let mut primes = Vec::with_capacity(k);
    let mut c = 2u64;
    while primes.len() < k {
        if primes
            .iter()
            .take_while(|&&p| p * p <= c)
            .all(|&p| !c.is_multiple_of(p))
        {
            primes.push(c);
        }
        c += 1;
    }
    primes
}

/// Halton points with seeded random digit permutations (zero digit fixed),
/// starting from index 1, shifted onto `[-0.5, 0.5)`.
fn halton_rule(dim: usize, count: usize, seed: u64) -> QuadratureRule {
    let bases = first_primes(dim);
    let perms: Vec<Vec<u64>> = bases
        .iter()
        .enumerate()
        .map(|(d, &b)| {
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, d as u64));
            let mut tail: Vec<u64> = (1..b).collect();
            tail.shuffle(&mut rng);
            std::iter::once(0).chain(tail).collect()
        })
        .collect();
    let mut nodes = Vec::with_capacity(count * dim);
    for idx in 1..=count as u64 {
        for (d, &b) in bases.iter().enumerate() {
            let mut k = idx;
            let mut f = 1.0 / b as f64;
            let mut v = 0.0;
            while k > 0 {
                v += perms[d][(k % b) as usize] as f64 * f;
                k /= b;
                f /= b as f64;
            }
            nodes.push(v - 0.5);
        }
    }
    QuadratureRule {
        dim,
        nodes,
        weights: vec![1.0 / count as f64; count],
        scheme: QuadScheme::Halton,
        seed,
    }
}

/// `exp(v_x' x + v_z' z)` for standardized stacked regressors.
pub fn weight_omega(x_std: &[f64], z_std: &[f64], v: &[f64]) -> f64 {
    assert_eq!(
        x_std.len() + z_std.len(),
        v.len(),
        "weight dimension mismatch"
    );
    let (vx, vz) = v.split_at(x_std.len());
    let e: f64 = x_std.iter().zip(vx).map(|(a, b)| a * b).sum::<f64>()
        + z_std.iter().zip(vz).map(|(a, b)| a * b).sum::<f64>();
    e.exp()
}

/// Coordinates entering the weight: the non-degenerate standardized columns.
/// Degenerate columns are identically zero and integrate out exactly, so the
/// quadrature rule spans only these coordinates. Falls back to a single zero
/// coordinate when every column is degenerate.
pub fn weight_coordinates(stacked: &StackedRegressors, columns: &[usize]) -> (usize, Vec<f64>) {
    let n = stacked.n();
    if columns.is_empty() {
        return (1, vec![0.0; n]);
    }
    let d = columns.len();
    let mut out = Vec::with_capacity(n * d);
    for i in 0..n {
        let row = stacked.row(i);
        out.extend(columns.iter().map(|&c| row[c]));
    }
    (d, out)
}

/// Precomputed `omega(X_i, Z_i, v_j)` for every unit and node (unit-major).
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTable {
    pub n: usize,
    pub nodes: usize,
    values: Vec<f64>,
}

impl WeightTable {
    /// `coords` is row-major `n x rule.dim`.
    pub fn new(coords: &[f64], rule: &QuadratureRule) -> Result<Self> {
        let d = rule.dim;
        if d == 0 || !coords.len().is_multiple_of(d) {
            return Err(Error::InvalidConfig(
                "weight coordinates do not match the quadrature dimension".into(),
            ));
        }
        let n = coords.len() / d;
        let mut values = Vec::with_capacity(n * rule.len());
        for i in 0..n {
            let c = &coords[i * d..(i + 1) * d];
            for j in 0..rule.len() {
                values.push(weight_omega(c, &[], rule.node(j)));
            }
        }
        Ok(Self {
            n,
            nodes: rule.len(),
            values,
        })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.nodes..(i + 1) * self.nodes]
    }
}

/// Tie-tolerant `y <= fitted`: exact ties (up to rounding of the fitted
/// value) count as 1.
#[inline]
pub fn indicator(y: f64, fitted: f64) -> bool {
    y - fitted <= 1e-11 * (1.0 + y.abs())
}

/// `1{Y_it <= X_it'a + Z_it'b_t}` with per-unit period means.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorMatrix {
    pub n: usize,
    pub periods: usize,
    /// Unit-major `n x T`.
    pub ind: Vec<bool>,
    pub row_means: Vec<f64>,
}

impl IndicatorMatrix {
    pub fn get(&self, i: usize, t: usize) -> bool {
        self.ind[i * self.periods + t]
    }

    /// Centered moment `ind[i,t] - row_means[i]`.
    #[inline]
    pub fn centered(&self, i: usize, t: usize) -> f64 {
        f64::from(u8::from(self.get(i, t))) - self.row_means[i]
    }

    pub fn from_flags(n: usize, periods: usize, ind: Vec<bool>) -> Self {
        let row_means = (0..n)
            .map(|i| {
                let c = ind[i * periods..(i + 1) * periods]
                    .iter()
                    .filter(|&&b| b)
                    .count();
                c as f64 / periods as f64
            })
            .collect();
        Self {
            n,
            periods,
            ind,
            row_means,
        }
    }
}

/// Fitted quantile `X_it'a + Z_it'b_t`.
#[inline]
pub fn fitted_value(x: &[f64], a: &[f64], z: &[f64], b: &[f64]) -> f64 {
    x.iter().zip(a).map(|(p, q)| p * q).sum::<f64>()
        + z.iter().zip(b).map(|(p, q)| p * q).sum::<f64>()
}

/// Indicator matrix for candidate `a` and per-period coefficients `b` (`T x dz`).
pub fn indicators(data: &PanelDataset, a: &[f64], b: &[Vec<f64>]) -> IndicatorMatrix {
    let (n, periods) = (data.n(), data.periods());
    assert_eq!(a.len(), data.dx());
    assert_eq!(b.len(), periods);
    let mut ind = Vec::with_capacity(n * periods);
    for i in 0..n {
        for (t, bt) in b.iter().enumerate() {
            ind.push(indicator(
                data.y(i, t),
                fitted_value(data.x(i, t), a, data.z(i, t), bt),
            ));
        }
    }
    IndicatorMatrix::from_flags(n, periods, ind)
}

/// `D_n^t(v_j)` for every node, summing units in the given order. Only units
/// with a nonzero centered moment contribute; blocks of units are summed
/// sequentially and block totals are reduced pairwise.
pub(crate) fn node_sums(
    ind: &IndicatorMatrix,
    t: usize,
    weights: &WeightTable,
    order: &[usize],
) -> Vec<f64> {
    const BLOCK: usize = 64;
    let nodes = weights.nodes;
    let mut blocks: Vec<Vec<f64>> = Vec::new();
    let mut acc = vec![0.0; nodes];
    let mut in_block = 0;
    for &i in order {
        let c = ind.centered(i, t);
        if c == 0.0 {
            continue;
        }
        for (a, w) in acc.iter_mut().zip(weights.row(i)) {
            *a += c * w;
        }
        in_block += 1;
        if in_block == BLOCK {
            blocks.push(std::mem::replace(&mut acc, vec![0.0; nodes]));
            in_block = 0;
        }
    }
    if in_block > 0 || blocks.is_empty() {
        blocks.push(acc);
    }
    let mut total = reduce_pairwise(&blocks);
    let inv_n = 1.0 / ind.n as f64;
    for v in total.iter_mut() {
        *v *= inv_n;
    }
    total
}

fn reduce_pairwise(blocks: &[Vec<f64>]) -> Vec<f64> {
    match blocks.len() {
        1 => blocks[0].clone(),
        len => {
            let (l, r) = blocks.split_at(len / 2);
            let mut a = reduce_pairwise(l);
            for (x, y) in a.iter_mut().zip(reduce_pairwise(r)) {
                *x += y;
            }
            a
        }
    }
}

/// `(1/T) sum_t sum_j w_j D_n^t(v_j)^2` from indicators and weights.
pub(crate) fn l2_objective(
    ind: &IndicatorMatrix,
    weights: &WeightTable,
    rule: &QuadratureRule,
    order: &[usize],
) -> f64 {
    let mut total = 0.0;
    for t in 0..ind.periods {
        let d = node_sums(ind, t, weights, order);
        let terms: Vec<f64> = d
            .iter()
            .zip(&rule.weights)
            .map(|(v, w)| w * v * v)
            .collect();
        total += pairwise_sum(&terms);
    }
    total / ind.periods as f64
}

/// Empirical process `D_n^t(v_j; a, b)` at every node of `rule`.
///
/// The rule spans the non-degenerate columns of `stacked`. `t` is 1-based.
pub fn dhat(
    data: &PanelDataset,
    stacked: &StackedRegressors,
    rule: &QuadratureRule,
    a: &[f64],
    b: &[Vec<f64>],
    t: usize,
) -> Result<Vec<f64>> {
    if t == 0 || t > data.periods() {
        return Err(Error::InvalidConfig(format!("period {t} out of range")));
    }
    let (dim, coords) = weight_coordinates(stacked, &stacked.active_columns());
    if dim != rule.dim {
        return Err(Error::InvalidConfig(format!(
            "rule dimension {} does not match {dim} weight coordinates",
            rule.dim
        )));
    }
    let weights = WeightTable::new(&coords, rule)?;
    let ind = indicators(data, a, b);
    let order = canonical_order(data);
    Ok(node_sums(&ind, t - 1, &weights, &order))
}
