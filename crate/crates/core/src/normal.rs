//! Standard normal distribution and quantile functions.

use libm::erfc;

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density.
pub fn pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal distribution function, via the complementary error
/// function so that the lower tail keeps full relative precision.
pub fn cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Standard normal quantile function.
///
/// Wichura's AS 241 (PPND16) rational approximations followed by one Newton
/// step against [`cdf`]. Returns `-inf`/`inf` at 0/1 and NaN outside `[0, 1]`.
pub fn inv_cdf(p: f64) -> f64 {
    if !(0.0..=1.0).contains(&p) || p.is_nan() {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    let x = ppnd16(p);
    // Newton polish; skipped deep in the tails where the density underflows.
    let d = pdf(x);
    if d > 1e-300 {
        // cdf(x) - p, evaluated on the tail side that avoids cancellation.
        let err = if x < 0.0 {
            cdf(x) - p
        } else {
            (1.0 - p) - 0.5 * erfc(x / SQRT_2)
        };
        x - err / d
    } else {
        x
    }
}

fn ppnd16(p: f64) -> f64 {
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q * poly(&A, r) / poly(&B, r);
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    let r = (-r.ln()).sqrt();
    let val = if r <= 5.0 {
        let r = r - 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        let r = r - 5.0;
        poly(&E, r) / poly(&F, r)
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

#[inline]
fn poly(coef: &[f64; 8], x: f64) -> f64 {
    coef.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

const A: [f64; 8] = [
    3.387_132_872_796_366_5,
    1.331_416_678_917_843_8e2,
    1.971_590_950_306_551_3e3,
    1.373_169_376_550_946e4,
    4.592_195_393_154_987e4,
    6.726_577_092_700_87e4,
    3.343_057_558_358_813e4,
    2.509_080_928_730_122_7e3,
];
const B: [f64; 8] = [
    1.0,
    4.231_333_070_160_091e1,
    6.871_870_074_920_579e2,
    5.394_196_021_424_751e3,
    2.121_379_430_158_659_7e4,
    3.930_789_580_009_271e4,
    2.872_908_573_572_194_3e4,
    5.226_495_278_852_545e3,
];
const C: [f64; 8] = [
    1.423_437_110_749_683_5,
    4.630_337_846_156_546,
    5.769_497_221_460_691,
    3.647_848_324_763_204_5,
    1.270_458_252_452_368_4,
    2.417_807_251_774_506e-1,
    2.272_384_498_926_918_4e-2,
    7.745_450_142_783_414e-4,
];
const D: [f64; 8] = [
    1.0,
    2.053_191_626_637_759,
    1.676_384_830_183_803_8,
    6.897_673_349_851e-1,
    1.481_039_764_274_800_8e-1,
    1.519_866_656_361_645_7e-2,
    5.475_938_084_995_345e-4,
    1.050_750_071_644_416_9e-9,
];
const E: [f64; 8] = [
    6.657_904_643_501_103,
    5.463_784_911_164_114,
    1.784_826_539_917_291_3,
    2.965_605_718_285_048_7e-1,
    2.653_218_952_657_612_4e-2,
    1.242_660_947_388_078_4e-3,
    2.711_555_568_743_487_6e-5,
    2.010_334_399_292_288_1e-7,
];
const F: [f64; 8] = [
    1.0,
    5.998_322_065_558_88e-1,
    1.369_298_809_227_358e-1,
    1.487_536_129_085_061_5e-2,
    7.868_691_311_456_133e-4,
    1.846_318_317_510_054_8e-5,
    1.421_511_758_316_446e-7,
    2.044_263_103_389_939_7e-15,
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_values() {
        assert!((cdf(0.0) - 0.5).abs() < 1e-16);
        assert!((cdf(1.959963984540054) - 0.975).abs() < 1e-15);
        assert!(inv_cdf(0.5).abs() < 1e-15);
        assert!((inv_cdf(0.975) - 1.959963984540054).abs() < 1e-13);
        assert!((inv_cdf(0.25) + 0.674489750196082).abs() < 1e-13);
        assert!(inv_cdf(0.0).is_infinite() && inv_cdf(1.0).is_infinite());
        assert!(inv_cdf(-0.1).is_nan());
    }

    #[test]
    fn paper_truth_values_round_to_two_decimals() {
        let alpha = |t: f64| 1.0 + 0.5 * inv_cdf(t);
        assert_eq!((alpha(0.25) * 100.0).round() / 100.0, 0.66);
        assert_eq!((alpha(0.5) * 100.0).round() / 100.0, 1.0);
        assert_eq!((alpha(0.75) * 100.0).round() / 100.0, 1.34);
    }

    #[test]
    #[allow(clippy::excessive_precision)]
    fn agrees_with_high_precision_reference() {
        let cdf_ref = [
            (-8.0, 6.2209605742717841235e-16),
            (-5.0, 2.8665157187919391167e-7),
            (-3.3, 0.0004834241423837775071),
            (-1.0, 0.15865525393145705141),
            (0.3, 0.61791142218895263307),
            (1.0, 0.84134474606854294859),
            (2.2, 0.98609655248650139569),
            (5.0, 0.99999971334842812081),
            (8.0, 0.9999999999999993779),
        ];
        for (x, want) in cdf_ref {
            // rounding x / sqrt(2) costs about x^2 ulps in the tails
            assert!(
                (cdf(x) - want).abs() <= (4.0 + x * x) * f64::EPSILON * want,
                "x={x}"
            );
        }
        let quantile_ref = [
            (1e-12, -7.0344838253011319326),
            (1e-6, -4.7534243088228989573),
            (0.001, -3.0902323061678135354),
            (0.025, -1.9599639845400542118),
            (0.1, -1.2815515655446004353),
            (0.3, -0.52440051270804081597),
            (0.7, 0.52440051270804065631),
            (0.9, 1.2815515655446005935),
            (0.975, 1.9599639845400538556),
            (0.999, 3.0902323061678132778),
            (0.999999, 4.7534243088170877657),
        ];
        for (p, want) in quantile_ref {
            let x: f64 = inv_cdf(p);
            assert!(
                (x - want).abs() <= 1e-14 * want.abs().max(1.0),
                "p={p} got {x}"
            );
        }
    }

    #[test]
    fn round_trip() {
        let mut p = 1e-12;
        while p < 1.0 - 1e-12 {
            let x = inv_cdf(p);
            assert!((cdf(x) - p).abs() <= 1e-15 + 1e-14 * p, "p={p}");
            p = if p < 0.01 { p * 3.0 } else { p + 0.0173 };
        }
    }
}
