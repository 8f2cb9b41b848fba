//! Balanced panel data model, validation and regressor standardization.

use std::cmp::Ordering;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::order_free_sum;

/// A balanced panel of `n` units observed over `periods` periods.
///
/// Cell `(i, t)` holds a scalar outcome, a treatment vector of length `dx`
/// and a covariate vector of length `dz` whose first entry is the intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    n: usize,
    periods: usize,
    dx: usize,
    dz: usize,
    y: Vec<f64>,
    x: Vec<f64>,
    z: Vec<f64>,
    unit_ids: Vec<String>,
    period_labels: Vec<String>,
    x_names: Vec<String>,
    z_names: Vec<String>,
}

impl PanelDataset {
    /// Builds a panel from unit-major buffers: `y[i*T + t]`,
    /// `x[(i*T + t)*dx + k]`, `z[(i*T + t)*dz + k]`.
    pub fn new(
        n: usize,
        periods: usize,
        dx: usize,
        dz: usize,
        y: Vec<f64>,
        x: Vec<f64>,
        z: Vec<f64>,
    ) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidData(format!(
                "need at least 2 units, got {n}"
            )));
        }
        if periods < 2 {
            return Err(Error::InvalidData(format!(
                "need at least 2 periods, got {periods}"
            )));
        }
        if dx == 0 {
            return Err(Error::InvalidData(
                "need at least one treatment column".into(),
            ));
        }
        if dz == 0 {
            return Err(Error::InvalidData(
                "need at least the intercept covariate".into(),
            ));
        }
        let cells = n * periods;
        if y.len() != cells || x.len() != cells * dx || z.len() != cells * dz {
            return Err(Error::InvalidData(format!(
                "buffer sizes ({}, {}, {}) do not match n={n}, T={periods}, dx={dx}, dz={dz}",
                y.len(),
                x.len(),
                z.len()
            )));
        }
        Ok(Self {
            n,
            periods,
            dx,
            dz,
            y,
            x,
            z,
            unit_ids: (1..=n).map(|i| i.to_string()).collect(),
            period_labels: (1..=periods).map(|t| t.to_string()).collect(),
            x_names: (1..=dx).map(|k| format!("x{k}")).collect(),
            z_names: std::iter::once("intercept".to_string())
                .chain((1..dz).map(|k| format!("z{k}")))
                .collect(),
        })
    }

    pub fn with_unit_ids(mut self, ids: Vec<String>) -> Result<Self> {
        if ids.len() != self.n {
            return Err(Error::InvalidData("unit id count does not match n".into()));
        }
        self.unit_ids = ids;
        Ok(self)
    }

    pub fn with_period_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.periods {
            return Err(Error::InvalidData(
                "period label count does not match T".into(),
            ));
        }
        self.period_labels = labels;
        Ok(self)
    }

    pub fn with_names(mut self, x_names: Vec<String>, z_names: Vec<String>) -> Result<Self> {
        if x_names.len() != self.dx || z_names.len() != self.dz {
            return Err(Error::InvalidData(
                "column name counts do not match dx/dz".into(),
            ));
        }
        self.x_names = x_names;
        self.z_names = z_names;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn periods(&self) -> usize {
        self.periods
    }
    pub fn dx(&self) -> usize {
        self.dx
    }
    pub fn dz(&self) -> usize {
        self.dz
    }
    pub fn unit_ids(&self) -> &[String] {
        &self.unit_ids
    }
    pub fn period_labels(&self) -> &[String] {
        &self.period_labels
    }
    pub fn x_names(&self) -> &[String] {
        &self.x_names
    }
    pub fn z_names(&self) -> &[String] {
        &self.z_names
    }

    #[inline]
    pub fn y(&self, i: usize, t: usize) -> f64 {
        self.y[i * self.periods + t]
    }
    #[inline]
    pub fn x(&self, i: usize, t: usize) -> &[f64] {
        let s = (i * self.periods + t) * self.dx;
        &self.x[s..s + self.dx]
    }
    #[inline]
    pub fn z(&self, i: usize, t: usize) -> &[f64] {
        let s = (i * self.periods + t) * self.dz;
        &self.z[s..s + self.dz]
    }

    /// Mutable access to the outcome of cell `(i, t)`.
    pub fn y_mut(&mut self, i: usize, t: usize) -> &mut f64 {
        &mut self.y[i * self.periods + t]
    }
    pub fn x_mut(&mut self, i: usize, t: usize) -> &mut [f64] {
        let s = (i * self.periods + t) * self.dx;
        &mut self.x[s..s + self.dx]
    }
    pub fn z_mut(&mut self, i: usize, t: usize) -> &mut [f64] {
        let s = (i * self.periods + t) * self.dz;
        &mut self.z[s..s + self.dz]
    }

    /// Period-`t` outcomes for all units.
    pub fn outcomes(&self, t: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.y(i, t)).collect()
    }

    /// New panel made of the listed units, in order. Units may repeat.
    pub fn select_units(&self, idx: &[usize]) -> PanelDataset {
        let (t, dx, dz) = (self.periods, self.dx, self.dz);
        let mut y = Vec::with_capacity(idx.len() * t);
        let mut x = Vec::with_capacity(idx.len() * t * dx);
        let mut z = Vec::with_capacity(idx.len() * t * dz);
        for &i in idx {
            y.extend_from_slice(&self.y[i * t..(i + 1) * t]);
            x.extend_from_slice(&self.x[i * t * dx..(i + 1) * t * dx]);
            z.extend_from_slice(&self.z[i * t * dz..(i + 1) * t * dz]);
        }
        PanelDataset {
            n: idx.len(),
            periods: t,
            dx,
            dz,
            y,
            x,
            z,
            unit_ids: idx.iter().map(|&i| self.unit_ids[i].clone()).collect(),
            period_labels: self.period_labels.clone(),
            x_names: self.x_names.clone(),
            z_names: self.z_names.clone(),
        }
    }

    fn cmp_units(&self, a: usize, b: usize) -> Ordering {
        let t = self.periods;
        for (w, v) in [(1, &self.y), (self.dx, &self.x), (self.dz, &self.z)] {
            let ra = &v[a * t * w..(a + 1) * t * w];
            let rb = &v[b * t * w..(b + 1) * t * w];
            for (p, q) in ra.iter().zip(rb) {
                match p.total_cmp(q) {
                    Ordering::Equal => {}
                    o => return o,
                }
            }
        }
        Ordering::Equal
    }
}

/// Unit order that depends only on the unit records, not on their input
/// positions. Identical records stay in input order.
pub fn canonical_order(data: &PanelDataset) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..data.n()).collect();
    idx.sort_by(|&a, &b| data.cmp_units(a, b));
    idx
}

/// Outcome of [`validate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub n: usize,
    pub periods: usize,
    pub balanced: bool,
    pub finite: bool,
    pub intercept: bool,
    /// Numerical rank of the period-`t` covariate design.
    pub z_rank: Vec<usize>,
    pub z_full_rank: Vec<bool>,
    /// Whether every treatment column varies across units in period `t`.
    pub x_variation: Vec<bool>,
    pub x_varies_somewhere: bool,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.n >= 2
            && self.balanced
            && self.finite
            && self.intercept
            && self.z_full_rank.iter().all(|&r| r)
            && self.x_varies_somewhere
    }

    /// Human-readable list of failed checks.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.finite {
            out.push("non-finite values present".to_string());
        }
        if !self.intercept {
            out.push("first covariate column is not identically 1".to_string());
        }
        for (t, ok) in self.z_full_rank.iter().enumerate() {
            if !ok {
                out.push(format!(
                    "covariate design of period {} is rank deficient",
                    t + 1
                ));
            }
        }
        if !self.x_varies_somewhere {
            out.push("treatment has no variation in any period".to_string());
        }
        out
    }
}

/// Report-only checks on a panel; callers decide whether to abort.
pub fn validate(data: &PanelDataset) -> ValidationReport {
    let (n, periods, dx, dz) = (data.n, data.periods, data.dx, data.dz);
    let finite = data
        .y
        .iter()
        .chain(&data.x)
        .chain(&data.z)
        .all(|v| v.is_finite());
    let intercept = (0..n).all(|i| (0..periods).all(|t| data.z(i, t)[0] == 1.0));

    let mut z_rank = Vec::with_capacity(periods);
    for t in 0..periods {
        let m = DMatrix::from_fn(n, dz, |i, k| data.z(i, t)[k]);
        z_rank.push(numerical_rank(&m));
    }
    let z_full_rank = z_rank.iter().map(|&r| r == dz && n > dz).collect();

    let x_variation: Vec<bool> = (0..periods)
        .map(|t| {
            (0..dx).all(|k| {
                let first = data.x(0, t)[k];
                (1..n).any(|i| data.x(i, t)[k] != first)
            })
        })
        .collect();
    let x_varies_somewhere = x_variation.iter().any(|&v| v);

    ValidationReport {
        n,
        periods,
        balanced: true,
        finite,
        intercept,
        z_rank,
        z_full_rank,
        x_variation,
        x_varies_somewhere,
    }
}

pub(crate) fn numerical_rank(m: &DMatrix<f64>) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    if !(max > 0.0) || !max.is_finite() {
        return 0;
    }
    let cut = max * 1e-10 * (m.nrows().max(m.ncols()) as f64);
    sv.iter().filter(|&&s| s > cut).count()
}

/// Which covariate cells feed the stacked `Z` block: `(period, column)` pairs
/// left after removing bitwise-duplicate columns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StackedLayout {
    pub dx: usize,
    pub periods: usize,
    pub z_sources: Vec<(usize, usize)>,
}

impl StackedLayout {
    pub fn detect(data: &PanelDataset) -> Self {
        let mut kept: Vec<(usize, usize)> = Vec::new();
        for t in 0..data.periods {
            for k in 0..data.dz {
                let dup = kept.iter().any(|&(s, j)| {
                    (0..data.n).all(|i| data.z(i, t)[k].to_bits() == data.z(i, s)[j].to_bits())
                });
                if !dup {
                    kept.push((t, k));
                }
            }
        }
        Self {
            dx: data.dx,
            periods: data.periods,
            z_sources: kept,
        }
    }

    /// Total stacked width `dx*T + dz*`.
    pub fn width(&self) -> usize {
        self.dx * self.periods + self.z_sources.len()
    }

    fn column(&self, data: &PanelDataset, c: usize) -> Vec<f64> {
        let xw = self.dx * self.periods;
        if c < xw {
            let (t, k) = (c / self.dx, c % self.dx);
            (0..data.n).map(|i| data.x(i, t)[k]).collect()
        } else {
            let (t, k) = self.z_sources[c - xw];
            (0..data.n).map(|i| data.z(i, t)[k]).collect()
        }
    }
}

/// Per-unit stacked regressors `(X_i, Z_i)`, standardized column by column.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedRegressors {
    n: usize,
    layout: StackedLayout,
    /// Row-major `n x width` standardized values, `X` block first.
    values: Vec<f64>,
    pub col_means: Vec<f64>,
    pub col_sds: Vec<f64>,
    pub degenerate: Vec<bool>,
}

impl StackedRegressors {
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn layout(&self) -> &StackedLayout {
        &self.layout
    }
    pub fn width(&self) -> usize {
        self.layout.width()
    }
    pub fn x_width(&self) -> usize {
        self.layout.dx * self.layout.periods
    }
    /// Standardized stacked row of unit `i`.
    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.width();
        &self.values[i * w..(i + 1) * w]
    }
    /// Standardized `X_i` (time-major).
    pub fn x_stacked(&self, i: usize) -> &[f64] {
        &self.row(i)[..self.x_width()]
    }
    /// Standardized deduplicated `Z_i`.
    pub fn z_stacked(&self, i: usize) -> &[f64] {
        &self.row(i)[self.x_width()..]
    }
    /// Indices of columns with nonzero variance.
    pub fn active_columns(&self) -> Vec<usize> {
        (0..self.width()).filter(|&c| !self.degenerate[c]).collect()
    }
}

/// Standardizes with a freshly detected layout.
pub fn standardize(data: &PanelDataset) -> StackedRegressors {
    standardize_with_layout(data, &StackedLayout::detect(data))
}

/// Standardizes each stacked column to mean 0 and population standard
/// deviation 1. Constant columns map to zeros and are flagged degenerate.
pub fn standardize_with_layout(data: &PanelDataset, layout: &StackedLayout) -> StackedRegressors {
    let n = data.n;
    let w = layout.width();
    let mut values = vec![0.0; n * w];
    let mut col_means = Vec::with_capacity(w);
    let mut col_sds = Vec::with_capacity(w);
    let mut degenerate = Vec::with_capacity(w);
    for c in 0..w {
        let col = layout.column(data, c);
        let mean = order_free_sum(&col) / n as f64;
        let constant = col.iter().all(|&v| v == col[0]);
        let sd = if constant {
            0.0
        } else {
            let sq: Vec<f64> = col.iter().map(|v| (v - mean) * (v - mean)).collect();
            (order_free_sum(&sq) / n as f64).sqrt()
        };
        if !constant && sd > 0.0 {
            for (i, v) in col.iter().enumerate() {
                values[i * w + c] = (v - mean) / sd;
            }
        }
        col_means.push(mean);
        col_sds.push(sd);
        degenerate.push(constant || sd == 0.0);
    }
    StackedRegressors {
        n,
        layout: layout.clone(),
        values,
        col_means,
        col_sds,
        degenerate,
    }
}

/// Standardizes a single column with the same conventions as
/// [`standardize`]. Returns `(values, degenerate)`.
pub fn standardize_column(col: &[f64]) -> (Vec<f64>, bool) {
    let n = col.len() as f64;
    if col.iter().all(|&v| v == col[0]) {
        return (vec![0.0; col.len()], true);
    }
    let mean = order_free_sum(col) / n;
    let sq: Vec<f64> = col.iter().map(|v| (v - mean) * (v - mean)).collect();
    let sd = (order_free_sum(&sq) / n).sqrt();
    (col.iter().map(|v| (v - mean) / sd).collect(), false)
}
