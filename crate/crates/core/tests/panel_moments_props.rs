use qte_core::moments::{indicators, weight_coordinates, weight_omega};
use qte_core::panel::canonical_order;
use qte_core::{dhat, make_rule, standardize, PanelDataset, QuadScheme};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn random_panel(seed: u64, n: usize, periods: usize) -> PanelDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cells = n * periods;
    let y: Vec<f64> = (0..cells).map(|_| rng.sample(StandardNormal)).collect();
    let x: Vec<f64> = (0..cells).map(|_| rng.random_range(0.0..3.0)).collect();
    let mut z = Vec::with_capacity(cells * 2);
    for i in 0..n {
        let w = (i % 7) as f64 * 0.3;
        for _ in 0..periods {
            z.extend([1.0, w]);
        }
    }
    PanelDataset::new(n, periods, 1, 2, y, x, z).unwrap()
}

#[test]
fn standardized_columns_have_unit_moments() {
    let data = random_panel(1, 200, 3);
    let s = standardize(&data);
    // three treatment columns, intercept and one shared covariate
    assert_eq!(s.width(), 5);
    for c in s.active_columns() {
        let col: Vec<f64> = (0..s.n()).map(|i| s.row(i)[c]).collect();
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64).sqrt();
        assert!(mean.abs() <= 1e-10);
        assert!((sd - 1.0).abs() <= 1e-10);
    }
    assert!(s.degenerate[3]);
    assert!((0..s.n()).all(|i| s.row(i)[3] == 0.0));
}

#[test]
fn standardization_is_idempotent() {
    let data = random_panel(2, 100, 2);
    let s = standardize(&data);
    let n = data.n();
    let mut x = Vec::new();
    let mut z = Vec::new();
    for i in 0..n {
        for t in 0..2 {
            x.push(s.row(i)[t]);
            z.extend([1.0, s.row(i)[3]]);
        }
    }
    let again = PanelDataset::new(
        n,
        2,
        1,
        2,
        data.outcomes(0)
            .iter()
            .zip(data.outcomes(1))
            .flat_map(|(a, b)| [*a, b])
            .collect(),
        x,
        z,
    )
    .unwrap();
    let s2 = standardize(&again);
    for i in 0..n {
        for c in s.active_columns() {
            assert!((s.row(i)[c] - s2.row(i)[c]).abs() <= 1e-10);
        }
    }
}

#[test]
fn unit_permutation_permutes_rows_only() {
    let data = random_panel(3, 150, 2);
    let mut perm: Vec<usize> = (0..data.n()).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(4));
    let shuffled = data.select_units(&perm);
    let (s, sp) = (standardize(&data), standardize(&shuffled));
    assert_eq!(s.col_means, sp.col_means);
    assert_eq!(s.col_sds, sp.col_sds);
    for (k, &i) in perm.iter().enumerate() {
        assert_eq!(s.row(i), sp.row(k));
    }
}

fn fitted_b(data: &PanelDataset) -> Vec<Vec<f64>> {
    (0..data.periods())
        .map(|t| vec![0.1 * t as f64 - 0.2, 0.3])
        .collect()
}

#[test]
fn moment_sums_to_zero_across_periods() {
    for &periods in &[2usize, 3, 4] {
        let data = random_panel(5 + periods as u64, 60, periods);
        let s = standardize(&data);
        let rule = make_rule(s.active_columns().len(), 3, QuadScheme::TensorGauss, 0).unwrap();
        let (_, coords) = weight_coordinates(&s, &s.active_columns());
        let ind = indicators(&data, &[0.4], &fitted_b(&data));
        let d = rule.dim;
        for i in 0..data.n() {
            for j in 0..rule.len() {
                let w = weight_omega(&coords[i * d..(i + 1) * d], &[], rule.node(j));
                let centered: f64 = (0..periods).map(|t| ind.centered(i, t)).sum();
                let total: f64 = (0..periods).map(|t| ind.centered(i, t) * w).sum();
                if periods == 2 {
                    assert_eq!(total, 0.0);
                } else {
                    assert!(total.abs() <= 4.0 * f64::EPSILON * w);
                }
                if periods.is_power_of_two() {
                    // period means are exact dyadic fractions
                    assert_eq!(centered, 0.0);
                }
            }
        }
        let per_t: Vec<Vec<f64>> = (1..=periods)
            .map(|t| dhat(&data, &s, &rule, &[0.4], &fitted_b(&data), t).unwrap())
            .collect();
        for j in 0..rule.len() {
            let sum: f64 = per_t.iter().map(|v| v[j]).sum();
            assert!(sum.abs() <= 1e-14, "periods {periods} node {j}: {sum}");
        }
    }
}

#[test]
fn dhat_is_bounded_by_largest_weight() {
    let data = random_panel(9, 80, 2);
    let s = standardize(&data);
    let cols = s.active_columns();
    let rule = make_rule(cols.len(), 4, QuadScheme::TensorGauss, 0).unwrap();
    let (d, coords) = weight_coordinates(&s, &cols);
    for t in 1..=2 {
        let values = dhat(&data, &s, &rule, &[0.1], &fitted_b(&data), t).unwrap();
        for (j, v) in values.iter().enumerate() {
            let max_w = (0..data.n())
                .map(|i| weight_omega(&coords[i * d..(i + 1) * d], &[], rule.node(j)))
                .fold(0.0f64, f64::max);
            let abs_sum: f64 = (0..data.n())
                .map(|i| {
                    coords[i * d..(i + 1) * d]
                        .iter()
                        .map(|c| c.abs())
                        .sum::<f64>()
                })
                .fold(0.0, f64::max);
            assert!(v.abs() <= max_w);
            assert!(max_w <= (0.5 * abs_sum).exp() * (1.0 + 1e-12));
        }
    }
}

#[test]
fn dhat_is_invariant_to_unit_order() {
    let data = random_panel(10, 120, 2);
    let mut perm: Vec<usize> = (0..data.n()).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(11));
    let shuffled = data.select_units(&perm);
    let (s, sp) = (standardize(&data), standardize(&shuffled));
    let rule = make_rule(s.active_columns().len(), 3, QuadScheme::TensorGauss, 0).unwrap();
    for t in 1..=2 {
        let a = dhat(&data, &s, &rule, &[0.2], &fitted_b(&data), t).unwrap();
        let b = dhat(&shuffled, &sp, &rule, &[0.2], &fitted_b(&data), t).unwrap();
        assert_eq!(a, b);
    }
    assert_eq!(
        canonical_order(&data)
            .iter()
            .map(|&i| data.y(i, 0))
            .collect::<Vec<_>>(),
        canonical_order(&shuffled)
            .iter()
            .map(|&i| shuffled.y(i, 0))
            .collect::<Vec<_>>()
    );
}

#[test]
fn tensor_gauss_integrates_smooth_exponential() {
    let one_dim = 0.5f64.exp() - (-0.5f64).exp();
    for dim in 1..=3 {
        let rule = make_rule(dim, 8, QuadScheme::TensorGauss, 0).unwrap();
        let approx: f64 = (0..rule.len())
            .map(|j| rule.weights[j] * rule.node(j).iter().sum::<f64>().exp())
            .sum();
        assert!(
            (approx - one_dim.powi(dim as i32)).abs() <= 1e-10,
            "dim {dim}"
        );
    }
}

#[test]
fn halton_rule_is_deterministic_and_seeded() {
    let a = make_rule(6, 64, QuadScheme::Halton, 5).unwrap();
    let b = make_rule(6, 64, QuadScheme::Halton, 5).unwrap();
    let c = make_rule(6, 64, QuadScheme::Halton, 6).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.nodes, c.nodes);
    assert!(a.nodes.iter().all(|v| (-0.5..=0.5).contains(v)));
    assert!(a.weights.iter().all(|&w| w == 1.0 / 64.0));
}
