//! Adaptive Gauss–Kronrod (7/15) quadrature.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadError {
    #[error("quadrature did not converge on [{a}, {b}] (error estimate {estimate:e})")]
    NoConvergence { a: f64, b: f64, estimate: f64 },
    #[error("integrand failed at t = {t}: {message}")]
    Integrand { t: f64, message: String },
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F>(f: &F, a: f64, b: f64) -> Result<(f64, f64), QuadError>
where
    F: Fn(f64) -> Result<f64, String>,
{
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let eval = |t: f64| f(t).map_err(|message| QuadError::Integrand { t, message });
    let fc = eval(c)?;
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = eval(c - dx)? + eval(c + dx)?;
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    Ok((kron * h, ((kron - gauss) * h).abs()))
}

/// Integrates `f` over `[a, b]` to absolute tolerance `tol`.
pub fn integrate<F>(f: F, a: f64, b: f64, tol: f64) -> Result<f64, QuadError>
where
    F: Fn(f64) -> Result<f64, String>,
{
    fn rec<F: Fn(f64) -> Result<f64, String>>(
        f: &F,
        a: f64,
        b: f64,
        tol: f64,
        whole: (f64, f64),
        depth: usize,
    ) -> Result<f64, QuadError> {
        let (value, err) = whole;
        if err <= tol.max(1e-15 * value.abs()) {
            return Ok(value);
        }
        if depth == 0 {
            return Err(QuadError::NoConvergence { a, b, estimate: err });
        }
        let m = 0.5 * (a + b);
        let left = gk15(f, a, m)?;
        let right = gk15(f, m, b)?;
        Ok(rec(f, a, m, tol / 2.0, left, depth - 1)? + rec(f, m, b, tol / 2.0, right, depth - 1)?)
    }
    let whole = gk15(&f, a, b)?;
    rec(&f, a, b, tol, whole, 30)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let v = integrate(|t| Ok(t.powi(5) - 3.0 * t * t), 0.0, 1.0, 1e-14).unwrap();
        assert!((v - (1.0 / 6.0 - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn oscillatory_integrand() {
        let v = integrate(|t| Ok((40.0 * t).sin().powi(2)), 0.0, 1.0, 1e-12).unwrap();
        let exact = 0.5 - (80f64).sin() / 160.0;
        assert!((v - exact).abs() < 1e-11);
    }

    #[test]
    fn integrand_failure_is_reported() {
        let r = integrate(|t| if t > 0.5 { Err("boom".into()) } else { Ok(1.0) }, 0.0, 1.0, 1e-10);
        assert!(matches!(r, Err(QuadError::Integrand { .. })));
    }
}
