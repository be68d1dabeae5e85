//! Principal branch of the Lambert-W function.

use std::f64::consts::E;

use crate::error::{Error, Result};

const INV_E: f64 = 1.0 / E;
const MAX_ITER: usize = 50;

/// `W0(x)`: the `w >= -1` solving `w e^w = x`, for `x >= -1/e`.
///
/// Inputs up to `1e-12` below `-1/e` are treated as the branch point.
pub fn lambert_w(x: f64) -> Result<f64> {
    if x.is_nan() || x < -INV_E - 1e-12 {
        return Err(Error::LambertDomain(x));
    }
    if x <= -INV_E {
        return Ok(-1.0);
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == f64::INFINITY {
        return Ok(f64::INFINITY);
    }

    let mut w = initial_guess(x);
    for _ in 0..MAX_ITER {
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + 1.0;
        if f == 0.0 || wp1 == 0.0 {
            break;
        }
        let step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1));
        let next = w - step;
        // Keep iterates on the principal branch.
        w = if next < -1.0 { (w - 1.0) / 2.0 } else { next };
        if step.abs() <= 4.0 * f64::EPSILON * (1.0 + w.abs()) {
            break;
        }
    }
    Ok(w)
}

fn initial_guess(x: f64) -> f64 {
    if x < -0.32 {
        // Series about the branch point in p = sqrt(2(ex + 1)).
        let p = (2.0 * (E * x + 1.0)).max(0.0).sqrt();
        -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    } else if x < 3.0 {
        let l = x.ln_1p();
        l * (1.0 - l.ln_1p() / (2.0 + l))
    } else {
        let l1 = x.ln();
        let l2 = l1.ln();
        l1 - l2 + l2 / l1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_points() {
        assert_eq!(lambert_w(0.0).unwrap(), 0.0);
        assert!((lambert_w(E).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(lambert_w(-INV_E).unwrap(), -1.0);
        // omega constant
        assert!((lambert_w(1.0).unwrap() - 0.567_143_290_409_783_8).abs() < 1e-15);
    }

    #[test]
    fn domain() {
        assert!(lambert_w(-0.5).is_err());
        assert!(lambert_w(f64::NAN).is_err());
        assert_eq!(lambert_w(-INV_E - 1e-13).unwrap(), -1.0);
    }

    #[test]
    fn residual_across_regions() {
        for &x in &[-0.367_879, -0.36, -0.3, -0.1, 1e-300, 1e-8, 0.5, 2.9, 3.1, 10.0, 1e3, 1e10, 1e300] {
            let w = lambert_w(x).unwrap();
            let r = w * w.exp() - x;
            assert!(r.abs() <= 1e-12 * x.abs().max(1.0), "x={x} w={w} r={r}");
        }
    }

    #[test]
    fn monotone() {
        let mut prev = -1.0;
        for k in 1..2000 {
            let x = -INV_E + k as f64 * 0.01;
            let w = lambert_w(x).unwrap();
            assert!(w > prev);
            prev = w;
        }
    }
}
