//! Changes-in-changes baseline for the two-period, two-group design and the
//! mean difference-in-differences contrast.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::PanelDataset;
use crate::util::pairwise_sum;

/// Tolerance for comparing CDF levels, which are ratios of counts.
const LEVEL_EPS: f64 = 1e-12;

/// Right-continuous step CDF on a finite support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ecdf {
    /// Strictly increasing support points.
    pub sorted_support: Vec<f64>,
    /// `steps[k] = F(sorted_support[k])`; nondecreasing, last entry 1.
    pub steps: Vec<f64>,
}

impl Ecdf {
    /// Empirical CDF of a sample.
    pub fn new(sample: &[f64]) -> Result<Self> {
        if sample.is_empty() {
            return Err(Error::InvalidData(
                "empirical CDF of an empty sample".into(),
            ));
        }
        if sample.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite value in sample".into()));
        }
        let mut s = sample.to_vec();
        s.sort_by(f64::total_cmp);
        let n = s.len() as f64;
        let mut support = Vec::new();
        let mut steps = Vec::new();
        for (k, &v) in s.iter().enumerate() {
            if k + 1 == s.len() || s[k + 1] != v {
                support.push(v);
                steps.push((k + 1) as f64 / n);
            }
        }
        Ok(Self {
            sorted_support: support,
            steps,
        })
    }

    /// CDF from explicit steps. Support must be strictly increasing, steps
    /// nondecreasing in `[0, 1]` and ending at 1.
    pub fn from_steps(sorted_support: Vec<f64>, steps: Vec<f64>) -> Result<Self> {
        let ok = !sorted_support.is_empty()
            && sorted_support.len() == steps.len()
            && sorted_support.windows(2).all(|w| w[0] < w[1])
            && steps.windows(2).all(|w| w[0] <= w[1])
            && steps.iter().all(|s| (0.0..=1.0).contains(s))
            && steps.last() == Some(&1.0);
        if !ok {
            return Err(Error::InvalidData("invalid step CDF".into()));
        }
        Ok(Self {
            sorted_support,
            steps,
        })
    }

    /// `F(y)`.
    pub fn cdf(&self, y: f64) -> f64 {
        let k = self.sorted_support.partition_point(|&s| s <= y);
        if k == 0 {
            0.0
        } else {
            self.steps[k - 1]
        }
    }

    /// Generalized inverse `inf{y : F(y) >= u}`, clamped to the support.
    pub fn quantile(&self, u: f64) -> f64 {
        let k = self.steps.partition_point(|&s| s < u - LEVEL_EPS);
        self.sorted_support[k.min(self.sorted_support.len() - 1)]
    }
}

/// Output of [`cic`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CicEstimate {
    pub tau_grid: Vec<f64>,
    /// Difference of the marginal quantiles of the two potential outcomes in
    /// the second period, pooling observed and counterfactual distributions.
    pub qte: Vec<f64>,
    /// Treated second-period quantile minus the counterfactual untreated
    /// quantile of the treated group.
    pub qtt: Vec<f64>,
    /// Untreated outcome distribution of the treated group.
    pub counterfactual_cdf: Ecdf,
    /// Treated outcome distribution of the control group.
    pub counterfactual_treated_cdf: Ecdf,
    /// `(n0, n1)`: control and treated group sizes.
    pub groups: (usize, usize),
}

/// Outcomes split by group: `(y1_control, y2_control, y1_treated, y2_treated)`.
type Split = (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>);

fn split_groups(data: &PanelDataset) -> Result<Split> {
    if data.periods() != 2 {
        return Err(Error::NotDidShape(format!("{} periods", data.periods())));
    }
    if data.dx() != 1 {
        return Err(Error::NotDidShape(format!(
            "{} treatment columns",
            data.dx()
        )));
    }
    let mut out: Split = Default::default();
    for i in 0..data.n() {
        let (x1, x2) = (data.x(i, 0)[0], data.x(i, 1)[0]);
        if x1 != 0.0 {
            return Err(Error::NotDidShape(format!(
                "unit {} is treated in the first period",
                data.unit_ids()[i]
            )));
        }
        let (y1, y2) = (data.y(i, 0), data.y(i, 1));
        if x2 == 0.0 {
            out.0.push(y1);
            out.1.push(y2);
        } else if x2 == 1.0 {
            out.2.push(y1);
            out.3.push(y2);
        } else {
            return Err(Error::NotDidShape(format!(
                "treatment value {x2} is not binary"
            )));
        }
    }
    if out.0.is_empty() {
        return Err(Error::EmptyGroup("control"));
    }
    if out.2.is_empty() {
        return Err(Error::EmptyGroup("treated"));
    }
    Ok(out)
}

/// `F_b1(F_a1^{-1}(F_a2(y)))` on the support of `a2`: the second-period
/// distribution group `b` would have had under group `a`'s transformation.
fn transported(a1: &Ecdf, a2: &Ecdf, b1: &Ecdf) -> Ecdf {
    let support = a2.sorted_support.clone();
    let mut steps: Vec<f64> = a2.steps.iter().map(|&u| b1.cdf(a1.quantile(u))).collect();
    // mass of b1 above the top of a1 is assigned to the top support point
    if let Some(last) = steps.last_mut() {
        *last = 1.0;
    }
    Ecdf {
        sorted_support: support,
        steps,
    }
}

/// Two-component mixture `p * F + (1 - p) * G` as a step CDF.
fn mixture(p: f64, f: &Ecdf, g: &Ecdf) -> Ecdf {
    let mut support: Vec<f64> = f
        .sorted_support
        .iter()
        .chain(&g.sorted_support)
        .copied()
        .collect();
    support.sort_by(f64::total_cmp);
    support.dedup();
    let steps: Vec<f64> = support
        .iter()
        .map(|&y| (p * f.cdf(y) + (1.0 - p) * g.cdf(y)).min(1.0))
        .collect();
    let mut e = Ecdf {
        sorted_support: support,
        steps,
    };
    if let Some(last) = e.steps.last_mut() {
        *last = 1.0;
    }
    e
}

/// Changes-in-changes estimates on the quantile grid.
pub fn cic(data: &PanelDataset, tau_grid: &[f64]) -> Result<CicEstimate> {
    if tau_grid.iter().any(|&t| !(t > 0.0 && t < 1.0)) {
        return Err(Error::InvalidConfig(
            "tau grid must lie strictly inside (0, 1)".into(),
        ));
    }
    let (c1, c2, t1, t2) = split_groups(data)?;
    let (n0, n1) = (c1.len(), t1.len());
    let (f01, f02) = (Ecdf::new(&c1)?, Ecdf::new(&c2)?);
    let (f11, f12) = (Ecdf::new(&t1)?, Ecdf::new(&t2)?);
    let cf0 = transported(&f01, &f02, &f11);
    let cf1 = transported(&f11, &f12, &f01);
    let p0 = n0 as f64 / (n0 + n1) as f64;
    let y0 = mixture(p0, &f02, &cf0);
    let y1 = mixture(1.0 - p0, &f12, &cf1);
    Ok(CicEstimate {
        tau_grid: tau_grid.to_vec(),
        qte: tau_grid
            .iter()
            .map(|&u| y1.quantile(u) - y0.quantile(u))
            .collect(),
        qtt: tau_grid
            .iter()
            .map(|&u| f12.quantile(u) - cf0.quantile(u))
            .collect(),
        counterfactual_cdf: cf0,
        counterfactual_treated_cdf: cf1,
        groups: (n0, n1),
    })
}

/// Mean difference-in-differences contrast.
pub fn did(data: &PanelDataset) -> Result<f64> {
    let (c1, c2, t1, t2) = split_groups(data)?;
    let mean = |v: &[f64]| pairwise_sum(v) / v.len() as f64;
    Ok((mean(&t2) - mean(&t1)) - (mean(&c2) - mean(&c1)))
}
