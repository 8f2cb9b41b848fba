use qte_core::quantreg::{check_loss, first_order_gap, fit, objective_at, Design};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const TOL: f64 = 1e-8;

fn random_problem(rng: &mut ChaCha8Rng) -> (Vec<f64>, Design, f64) {
    let n = rng.random_range(5..=50);
    let p = rng.random_range(1..=3);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let mut r = vec![1.0];
            r.extend((1..p).map(|_| rng.random_range(-2.0..2.0)));
            r
        })
        .collect();
    let y: Vec<f64> = rows
        .iter()
        .map(|r| r.iter().sum::<f64>() + rng.sample::<f64, _>(StandardNormal))
        .collect();
    let tau = rng.random_range(0.05..0.95);
    (y, Design::from_rows(&rows).unwrap(), tau)
}

#[test]
fn convex_optimality_on_random_problems() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..100 {
        let (y, d, tau) = random_problem(&mut rng);
        let f = fit(&y, &d, tau, TOL).unwrap();
        assert!(f.converged);
        assert!(f.objective >= 0.0);
        let recomputed = objective_at(&f.coefficients, &y, &d, tau);
        assert!((f.objective - recomputed).abs() <= 1e-12, "case {case}");
        assert!(first_order_gap(&f, &y, &d, tau) <= 1e-10, "case {case}");
        for draw in 0..1000 {
            let scale = [1e-3, 1e-1, 1.0, 10.0][draw % 4];
            let b: Vec<f64> = f
                .coefficients
                .iter()
                .map(|c| c + scale * rng.sample::<f64, _>(StandardNormal))
                .collect();
            assert!(
                f.objective <= objective_at(&b, &y, &d, tau) + TOL,
                "case {case}"
            );
        }
    }
}

#[test]
fn regression_equivariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..30 {
        let (y, d, tau) = random_problem(&mut rng);
        let c: Vec<f64> = (0..d.ncols())
            .map(|_| rng.random_range(-3.0..3.0))
            .collect();
        let mut shift = vec![0.0; d.nrows()];
        for (i, s) in shift.iter_mut().enumerate() {
            *s = (0..d.ncols()).map(|k| d.get(i, k) * c[k]).sum();
        }
        let y2: Vec<f64> = y.iter().zip(&shift).map(|(a, b)| a + b).collect();
        let f1 = fit(&y, &d, tau, TOL).unwrap();
        let f2 = fit(&y2, &d, tau, TOL).unwrap();
        // optimal sets may be non-singletons; compare attained losses
        let moved: Vec<f64> = f1.coefficients.iter().zip(&c).map(|(a, b)| a + b).collect();
        let at_moved = objective_at(&moved, &y2, &d, tau);
        assert!((f2.objective - at_moved).abs() <= 10.0 * TOL);
        assert!((f2.objective - f1.objective).abs() <= 10.0 * TOL);
    }
}

#[test]
fn scale_equivariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..30 {
        let (y, d, tau) = random_problem(&mut rng);
        let s = rng.random_range(0.1..10.0);
        let ys: Vec<f64> = y.iter().map(|v| s * v).collect();
        let f1 = fit(&y, &d, tau, TOL).unwrap();
        let f2 = fit(&ys, &d, tau, TOL).unwrap();
        assert!((f2.objective - s * f1.objective).abs() <= 10.0 * TOL * s.max(1.0));
        let scaled: Vec<f64> = f1.coefficients.iter().map(|c| s * c).collect();
        assert!(
            (objective_at(&scaled, &ys, &d, tau) - f2.objective).abs() <= 10.0 * TOL * s.max(1.0)
        );
    }
}

#[test]
fn intercept_only_fit_is_a_sample_quantile() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..200 {
        let n = rng.random_range(2..40);
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let tau = rng.random_range(0.01..0.99);
        let f = fit(&y, &Design::intercept(n), tau, TOL).unwrap();
        let b = f.coefficients[0];
        let neg = y.iter().filter(|&&v| v - b < 0.0).count() as f64;
        let nonpos = y.iter().filter(|&&v| v - b <= 0.0).count() as f64;
        let nt = n as f64 * tau;
        assert!(
            neg <= nt + 1e-9 && nt <= nonpos + 1e-9,
            "{neg} {nt} {nonpos}"
        );
    }
}

#[test]
fn check_loss_is_nonnegative_and_piecewise_linear() {
    for &tau in &[0.1, 0.5, 0.9] {
        for k in -20..=20 {
            let u = k as f64 * 0.25;
            let l = check_loss(u, tau);
            assert!(l >= 0.0);
            assert_eq!(check_loss(2.0 * u, tau), 2.0 * l);
        }
    }
}

#[test]
fn median_gap_is_bounded() {
    let y = [1.0, 2.0, 3.0, 4.0, 5.0];
    let d = Design::intercept(5);
    let f = fit(&y, &d, 0.5, TOL).unwrap();
    assert_eq!(f.coefficients, vec![3.0]);
    assert!(first_order_gap(&f, &y, &d, 0.5) <= 0.2);
}

#[test]
fn degenerate_problems_resolve_to_the_lower_solution() {
    use qte_core::quantreg::{solve, QrOptions, Workspace};
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..50 {
        let n = 4 * rng.random_range(2..20);
        let y: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let d = Design::intercept(n);
        let mut sorted = y.clone();
        sorted.sort_by(f64::total_cmp);
        // n * tau is an integer, so every point between two order statistics is optimal
        let f = fit(&y, &d, 0.25, TOL).unwrap();
        assert_eq!(f.coefficients[0], sorted[n / 4 - 1]);
        let mut ws = Workspace::new(n);
        for start in 0..n {
            let g = solve(&y, &d, 0.25, QrOptions::default(), Some(&[start]), &mut ws).unwrap();
            assert_eq!(g.coefficients, f.coefficients);
        }
    }
}

#[test]
fn warm_starts_do_not_change_the_solution() {
    use qte_core::quantreg::{solve, QrOptions, Workspace};
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for _ in 0..30 {
        let n = 40;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| vec![1.0, rng.random_range(0.0..1.0)])
            .collect();
        let y: Vec<f64> = rows
            .iter()
            .map(|r| r[1] + rng.sample::<f64, _>(StandardNormal))
            .collect();
        let d = Design::from_rows(&rows).unwrap();
        let f = fit(&y, &d, 0.5, TOL).unwrap();
        let mut ws = Workspace::new(n);
        for _ in 0..10 {
            let (i, j) = (rng.random_range(0..n), rng.random_range(0..n));
            if i == j {
                continue;
            }
            let g = solve(&y, &d, 0.5, QrOptions::default(), Some(&[i, j]), &mut ws).unwrap();
            for (a, b) in g.coefficients.iter().zip(&f.coefficients) {
                assert!((a - b).abs() <= 1e-10);
            }
        }
    }
}
