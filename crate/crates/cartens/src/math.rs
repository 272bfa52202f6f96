//! Scalar special functions.

/// Error function, accurate to ~1e-15 relative over the real line.
///
/// Uses the Maclaurin series for |x| <= 2 and the continued-fraction-free
/// asymptotic complement via `erfc` beyond, both in double precision.
pub fn erf(x: f64) -> f64 {
    if x < 0.0 {
        return -erf(-x);
    }
    if x <= 2.0 {
        erf_series(x)
    } else {
        1.0 - erfc_large(x)
    }
}

pub fn erfc(x: f64) -> f64 {
    if x < 0.0 {
        return 2.0 - erfc(-x);
    }
    if x <= 2.0 {
        1.0 - erf_series(x)
    } else {
        erfc_large(x)
    }
}

/// erf(x) = 2/sqrt(pi) * sum_k (-1)^k x^{2k+1} / (k! (2k+1)), summed in the
/// numerically benign alternating form x * exp(-x^2) * 2/sqrt(pi) *
/// sum_k (2x^2)^k / (2k+1)!!  which has all-positive terms.
fn erf_series(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let x2 = x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0f64;
    loop {
        term *= 2.0 * x2 / (2.0 * k + 1.0);
        sum += term;
        if term < 1e-18 * sum {
            break;
        }
        k += 1.0;
    }
    2.0 / std::f64::consts::PI.sqrt() * x * (-x2).exp() * sum
}

/// erfc for x > 2 via the continued fraction
/// erfc(x) * sqrt(pi) * exp(x^2) = 1/(x + (1/2)/(x + (2/2)/(x + (3/2)/(x + ...)))),
/// evaluated bottom-up at fixed depth; 60 levels is ample for x > 2.
fn erfc_large(x: f64) -> f64 {
    if x > 27.0 {
        return 0.0; // below double-precision underflow of exp(-x^2)
    }
    let mut cf = 0.0;
    for k in (1..=60).rev() {
        cf = (k as f64 / 2.0) / (x + cf);
    }
    (-x * x).exp() / std::f64::consts::PI.sqrt() / (x + cf)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct high-order oracle: adaptive Simpson quadrature of the defining
    /// integral 2/sqrt(pi) * int_0^x exp(-t^2) dt.
    fn erf_oracle(x: f64) -> f64 {
        fn simpson(a: f64, b: f64) -> f64 {
            let m = 0.5 * (a + b);
            ((-a * a).exp() + 4.0 * (-m * m).exp() + (-b * b).exp()) * (b - a) / 6.0
        }
        fn adapt(a: f64, b: f64, whole: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let left = simpson(a, m);
            let right = simpson(m, b);
            if depth == 0 || (left + right - whole).abs() < 1e-17 {
                left + right + (left + right - whole) / 15.0
            } else {
                adapt(a, m, left, depth - 1) + adapt(m, b, right, depth - 1)
            }
        }
        let sign = x.signum();
        let x = x.abs().min(10.0);
        sign * 2.0 / std::f64::consts::PI.sqrt() * adapt(0.0, x, simpson(0.0, x), 24)
    }

    #[test]
    fn erf_matches_quadrature_oracle() {
        for i in 0..200 {
            let x = -6.0 + 12.0 * (i as f64) / 199.0;
            let want = erf_oracle(x);
            let got = erf(x);
            let scale = want.abs().max(1e-30);
            assert!(
                (got - want).abs() / scale < 1e-13 || (got - want).abs() < 1e-16,
                "x={x}: got {got}, want {want}"
            );
        }
    }

    #[test]
    fn erf_known_values() {
        assert_eq!(erf(0.0), 0.0);
        assert!((erf(1.0) - 0.842_700_792_949_714_9).abs() < 1e-15);
        assert!((erf(-1.0) + 0.842_700_792_949_714_9).abs() < 1e-15);
        assert!((erf(0.5) - 0.520_499_877_813_046_5).abs() < 1e-15);
        assert!((erf(3.0) - 0.999_977_909_503_001_4).abs() < 1e-15);
        assert!((erf(10.0) - 1.0).abs() < 1e-16);
    }

    #[test]
    fn erfc_complement_and_tail() {
        for &x in &[0.1, 0.9, 1.5, 2.0, 2.5, 4.0, 6.0] {
            assert!((erf(x) + erfc(x) - 1.0).abs() < 1e-14);
            assert!((erf(-x) + erfc(-x) - 1.0).abs() < 1e-13);
        }
        // tail stays positive and monotone where 1 - erf would cancel
        assert!(erfc(5.0) > 0.0 && erfc(6.0) > 0.0 && erfc(6.0) < erfc(5.0));
        assert!((erfc(5.0) - 1.537_459_794_428_035e-12).abs() < 1e-24);
    }
}
