//! Radial linearization of a collar: solve `g' = g / f` for `f = r + O(r²)`.
//!
//! The solution family is `g = k r exp(∫₀^r (1/f - 1/s) ds)`. Subtracting
//! `1/s` leaves a regular integrand, so one smooth solution covers both
//! sides of `r = 0`.

use serde::Serialize;

use crate::expr::{ExprError, Expression, VarSet};

pub const DEFAULT_SAMPLES: usize = 4001;
const NORMALIZATION_TOL: f64 = 1e-10;
const MAX_DEPTH: usize = 40;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NormalFormError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("profile is not normalized: f(0) = {value:e}, f'(0) = {slope} (need 0 and 1)")]
    NotNormalized { value: f64, slope: f64 },
    #[error("f vanishes or changes sign away from 0, at r = {r}")]
    ZeroInsideRange { r: f64 },
    #[error("r_max must lie in (0, 1), got {0}")]
    BadRange(f64),
    #[error("k must be positive, got {0}")]
    BadScale(f64),
    #[error("need at least 3 samples, got {0}")]
    TooFewSamples(usize),
}

/// Solved coordinate change on a uniform grid over `[-r_max, r_max]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalFormProfile {
    #[serde(skip)]
    pub f: Expression,
    pub r_max: f64,
    pub k: f64,
    pub r: Vec<f64>,
    pub f_samples: Vec<f64>,
    pub g_samples: Vec<f64>,
}

pub fn parse_profile(text: &str) -> Result<Expression, ExprError> {
    Expression::parse_with(text, VarSet::R)
}

pub fn solve_linearization(
    f: &Expression,
    r_max: f64,
    k: f64,
    n_samples: usize,
) -> Result<NormalFormProfile, NormalFormError> {
    if !(r_max > 0.0 && r_max < 1.0) {
        return Err(NormalFormError::BadRange(r_max));
    }
    if !(k > 0.0 && k.is_finite()) {
        return Err(NormalFormError::BadScale(k));
    }
    if n_samples < 3 {
        return Err(NormalFormError::TooFewSamples(n_samples));
    }
    let at0 = f.eval_with_gradient(&[0.0])?;
    if at0.value.abs() > NORMALIZATION_TOL || (at0.grad()[0] - 1.0).abs() > NORMALIZATION_TOL {
        return Err(NormalFormError::NotNormalized {
            value: at0.value,
            slope: at0.grad()[0],
        });
    }
    let regular = |s: f64| -> Result<f64, NormalFormError> {
        let fs = f.eval(&[s])?;
        if !(fs * s > 0.0) {
            return Err(NormalFormError::ZeroInsideRange { r: s });
        }
        Ok((s - fs) / (s * fs))
    };

    let h = 2.0 * r_max / (n_samples - 1) as f64;
    let r: Vec<f64> = (0..n_samples).map(|i| -r_max + i as f64 * h).collect();
    let mut integral = vec![0.0; n_samples];
    // Accumulate outward from 0 on each side.
    let first_pos = r.partition_point(|&x| x <= 0.0);
    let mut acc = 0.0;
    let mut prev = 0.0;
    for i in first_pos..n_samples {
        acc += adaptive_gk(&regular, prev, r[i], 0)?;
        integral[i] = acc;
        prev = r[i];
    }
    let last_neg = r.partition_point(|&x| x < 0.0);
    acc = 0.0;
    prev = 0.0;
    for i in (0..last_neg).rev() {
        acc += adaptive_gk(&regular, prev, r[i], 0)?;
        integral[i] = acc;
        prev = r[i];
    }
    let f_samples = r
        .iter()
        .map(|&x| f.eval(&[x]))
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(&bad) = r
        .iter()
        .zip(&f_samples)
        .find(|(&x, &fx)| x != 0.0 && !(fx * x > 0.0))
        .map(|(x, _)| x)
    {
        return Err(NormalFormError::ZeroInsideRange { r: bad });
    }
    let g_samples = r
        .iter()
        .zip(&integral)
        .map(|(&x, &j)| k * x * j.exp())
        .collect();
    Ok(NormalFormProfile {
        f: f.clone(),
        r_max,
        k,
        r,
        f_samples,
        g_samples,
    })
}

/// `|f g' - g|` at each interior sample, `g'` by central differences.
pub fn residuals(p: &NormalFormProfile) -> Vec<f64> {
    let n = p.r.len();
    (1..n - 1)
        .map(|i| {
            let dg = (p.g_samples[i + 1] - p.g_samples[i - 1]) / (p.r[i + 1] - p.r[i - 1]);
            (p.f_samples[i] * dg - p.g_samples[i]).abs()
        })
        .collect()
}

pub fn verify_linearization(p: &NormalFormProfile) -> f64 {
    residuals(p).into_iter().fold(0.0, f64::max)
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
/// Gauss weights for the odd-indexed Kronrod nodes (and the center).
const GAUSS_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Gauss-Kronrod 7-15 estimate and error on `[a, b]`.
fn gk15<F>(f: &F, a: f64, b: f64) -> Result<(f64, f64), NormalFormError>
where
    F: Fn(f64) -> Result<f64, NormalFormError>,
{
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c)?;
    let mut kronrod = GK_WEIGHTS[7] * fc;
    let mut gauss = GAUSS_WEIGHTS[3] * fc;
    for i in 0..7 {
        let x = h * GK_NODES[i];
        let pair = f(c - x)? + f(c + x)?;
        kronrod += GK_WEIGHTS[i] * pair;
        if i % 2 == 1 {
            gauss += GAUSS_WEIGHTS[i / 2] * pair;
        }
    }
    Ok((kronrod * h, ((kronrod - gauss) * h).abs()))
}

fn adaptive_gk<F>(f: &F, a: f64, b: f64, depth: usize) -> Result<f64, NormalFormError>
where
    F: Fn(f64) -> Result<f64, NormalFormError>,
{
    if a == b {
        return Ok(0.0);
    }
    let (est, err) = gk15(f, a, b)?;
    if err <= 1e-15 * est.abs().max(1e-3) || depth >= MAX_DEPTH {
        return Ok(est);
    }
    let m = 0.5 * (a + b);
    Ok(adaptive_gk(f, a, m, depth + 1)? + adaptive_gk(f, m, b, depth + 1)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solve(f: &str, r_max: f64, k: f64, n: usize) -> NormalFormProfile {
        solve_linearization(&parse_profile(f).unwrap(), r_max, k, n).unwrap()
    }

    #[test]
    fn gk15_integrates_polynomials_exactly() {
        let f = |x: f64| Ok(x.powi(10) - 3.0 * x.powi(3));
        let (v, _) = gk15(&f, 0.0, 2.0).unwrap();
        assert!((v - (2f64.powi(11) / 11.0 - 12.0)).abs() < 1e-11);
        let v = adaptive_gk(&|x: f64| Ok(x.sin()), 0.0, std::f64::consts::PI, 0).unwrap();
        assert!((v - 2.0).abs() < 1e-14);
    }

    #[test]
    fn identity_profile() {
        let p = solve("r", 0.9, 1.0, 101);
        for (r, g) in p.r.iter().zip(&p.g_samples) {
            assert_eq!(r, g);
        }
        assert!(verify_linearization(&p) < 1e-12);
    }

    #[test]
    fn closed_form_profile() {
        let p = solve("r*(1+r)", 0.9, 2.0, 401);
        for (r, g) in p.r.iter().zip(&p.g_samples) {
            assert!((g - 2.0 * r / (1.0 + r)).abs() < 1e-8, "{r}: {g}");
        }
    }

    #[test]
    fn quadratic_profile_residual() {
        let p = solve("r + 0.3*r^2", 0.9, 1.0, DEFAULT_SAMPLES);
        assert!(verify_linearization(&p) < 1e-6);
        assert_eq!(p.g_samples[DEFAULT_SAMPLES / 2], 0.0);
    }

    #[test]
    fn family_is_linear_in_k() {
        let a = solve("r + 0.3*r^2 - 0.1*r^3", 0.8, 1.0, 801);
        let b = solve("r + 0.3*r^2 - 0.1*r^3", 0.8, 5.0, 801);
        for (x, y) in a.g_samples.iter().zip(&b.g_samples) {
            assert!((y - 5.0 * x).abs() <= 1e-12 * y.abs().max(1.0));
        }
        let ra = verify_linearization(&a);
        let rb = verify_linearization(&b);
        assert!((rb - 5.0 * ra).abs() <= 1e-9 + 1e-6 * rb);
    }

    #[test]
    fn increasing_and_orientation_preserving() {
        let p = solve("r + 0.3*r^2", 0.9, 1.5, 1001);
        assert!(p.g_samples.windows(2).all(|w| w[1] > w[0]));
        let mid = 500;
        let slope = (p.g_samples[mid + 1] - p.g_samples[mid - 1]) / (p.r[mid + 1] - p.r[mid - 1]);
        assert!((slope - 1.5).abs() < 1e-5);
    }

    #[test]
    fn smooth_across_zero() {
        let mut seconds = Vec::new();
        for n in [201, 401, 801, 1601] {
            let p = solve("r + 0.3*r^2", 0.9, 1.0, n);
            let m = n / 2;
            let h = p.r[m + 1] - p.r[m];
            seconds
                .push((p.g_samples[m + 1] - 2.0 * p.g_samples[m] + p.g_samples[m - 1]) / (h * h));
        }
        // g = r/(1 + 0.3 r) has g''(0) = -0.6.
        for s in &seconds {
            assert!((s + 0.6).abs() < 1e-3, "{seconds:?}");
        }
    }

    #[test]
    fn errors() {
        let e = |f: &str, r: f64, k: f64, n: usize| {
            solve_linearization(&parse_profile(f).unwrap(), r, k, n).unwrap_err()
        };
        assert!(matches!(
            e("r + 0.1", 0.5, 1.0, 11),
            NormalFormError::NotNormalized { .. }
        ));
        assert!(matches!(
            e("2*r", 0.5, 1.0, 11),
            NormalFormError::NotNormalized { .. }
        ));
        assert!(matches!(
            e("r - 2*r^2", 0.9, 1.0, 11),
            NormalFormError::ZeroInsideRange { .. }
        ));
        assert!(matches!(e("r", 1.0, 1.0, 11), NormalFormError::BadRange(_)));
        assert!(matches!(
            e("r", 0.5, -1.0, 11),
            NormalFormError::BadScale(_)
        ));
        assert!(matches!(
            e("r", 0.5, 1.0, 2),
            NormalFormError::TooFewSamples(2)
        ));
        assert!(parse_profile("x + r").is_err());
    }
}
