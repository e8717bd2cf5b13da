//! Small quadrature toolbox used by weight assembly.

/// 4-point Gauss–Legendre rule on [-1, 1].
pub const GAUSS4_NODES: [f64; 4] = [
    -0.861_136_311_594_052_6,
    -0.339_981_043_584_856_3,
    0.339_981_043_584_856_3,
    0.861_136_311_594_052_6,
];
pub const GAUSS4_WEIGHTS: [f64; 4] = [
    0.347_854_845_137_453_9,
    0.652_145_154_862_546_1,
    0.652_145_154_862_546_1,
    0.347_854_845_137_453_9,
];

const KRONROD15_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const KRONROD15_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_0,
];
// Gauss weights for the 7-point rule embedded at the odd Kronrod nodes.
const GAUSS7_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gauss_kronrod15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let hw = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = KRONROD15_WEIGHTS[7] * fc;
    let mut gauss = GAUSS7_WEIGHTS[3] * fc;
    for k in 0..7 {
        let x = hw * KRONROD15_NODES[k];
        let pair = f(c - x) + f(c + x);
        kronrod += KRONROD15_WEIGHTS[k] * pair;
        if k % 2 == 1 {
            gauss += GAUSS7_WEIGHTS[k / 2] * pair;
        }
    }
    (kronrod * hw, ((kronrod - gauss) * hw).abs())
}

/// Adaptive Gauss–Kronrod (7/15) integration of `f` over `[a, b]`.
///
/// Intervals are bisected until the local error estimate drops below a share
/// of `tol` proportional to their length. At most `MAX_SPLITS` bisections are
/// made per call, so integrands that never settle (an oscillating kernel
/// tail, say) return the best estimate instead of recursing without end.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    const MAX_SPLITS: usize = 1 << 14;
    fn recurse<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32, splits: &mut usize) -> f64 {
        let (value, err) = gauss_kronrod15(f, a, b);
        if err <= tol.max(f64::EPSILON * value.abs()) || depth == 0 || *splits == 0 {
            return value;
        }
        *splits -= 1;
        let m = 0.5 * (a + b);
        recurse(f, a, m, 0.5 * tol, depth - 1, splits) + recurse(f, m, b, 0.5 * tol, depth - 1, splits)
    }
    if a == b {
        return 0.0;
    }
    recurse(&f, a, b, tol, 100, &mut { MAX_SPLITS })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss4_integrates_cubics_and_sextics() {
        let rule = |f: &dyn Fn(f64) -> f64| {
            GAUSS4_NODES
                .iter()
                .zip(GAUSS4_WEIGHTS)
                .map(|(x, w)| w * f(*x))
                .sum::<f64>()
        };
        assert!((rule(&|x| x.powi(6)) - 2.0 / 7.0).abs() < 1e-14);
        assert!((rule(&|_| 1.0) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn adaptive_handles_endpoint_singularity() {
        // ∫_0^1 x^{-1/2} dx = 2
        let v = integrate(|x| x.powf(-0.5), 0.0, 1.0, 1e-12);
        assert!((v - 2.0).abs() < 1e-8, "{v}");
        let v = integrate(|x| x.sin(), 0.0, std::f64::consts::PI, 1e-13);
        assert!((v - 2.0).abs() < 1e-12);
    }

    #[test]
    fn adaptive_gives_up_on_endless_oscillation() {
        let v = integrate(|x| (1.0 / x).sin(), 0.0, 1.0, 1e-15);
        assert!((v - 0.504_067_061_906_928).abs() < 1e-2, "{v}");
    }
}
