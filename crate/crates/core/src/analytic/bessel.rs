//! Bessel functions of the first kind of integer order, and root scanning.

use crate::{Error, Result};

/// Largest order accepted by the public evaluators.
pub const MAX_ORDER: usize = 20;
/// Largest argument accepted by the public evaluators.
pub const MAX_ARGUMENT: f64 = 100.0;
/// Arguments up to this value use the power series.
const SERIES_LIMIT: f64 = 12.0;

fn check_range(ell: usize, x: f64) -> Result<()> {
    if ell > MAX_ORDER || !(0.0..=MAX_ARGUMENT).contains(&x) {
        return Err(Error::OutOfValidatedRange(format!(
            "J_{ell}({x}) outside 0 <= ell <= {MAX_ORDER}, 0 <= x <= {MAX_ARGUMENT}"
        )));
    }
    Ok(())
}

/// `J_ell(x)` for `0 <= ell <= 20`, `0 <= x <= 100`.
pub fn bessel_j(ell: usize, x: f64) -> Result<f64> {
    check_range(ell, x)?;
    Ok(j_unchecked(ell, x))
}

/// `J_ell'(x) = (J_{ell-1}(x) - J_{ell+1}(x)) / 2`, with `J_0' = -J_1`.
pub fn bessel_j_prime(ell: usize, x: f64) -> Result<f64> {
    check_range(ell, x)?;
    Ok(j_prime_unchecked(ell, x))
}

pub(crate) fn j_prime_unchecked(ell: usize, x: f64) -> f64 {
    if ell == 0 {
        -j_unchecked(1, x)
    } else {
        0.5 * (j_unchecked(ell - 1, x) - j_unchecked(ell + 1, x))
    }
}

pub(crate) fn j_unchecked(ell: usize, x: f64) -> f64 {
    if x <= SERIES_LIMIT {
        series(ell, x)
    } else {
        miller(ell, x)
    }
}

/// `sum_m (-1)^m (x/2)^(2m+ell) / (m! (m+ell)!)`.
fn series(ell: usize, x: f64) -> f64 {
    let half = 0.5 * x;
    let mut term = 1.0;
    for k in 1..=ell {
        term *= half / k as f64;
    }
    let q = -half * half;
    let mut sum = term;
    let mut m = 0usize;
    loop {
        m += 1;
        term *= q / (m as f64 * (m + ell) as f64);
        sum += term;
        if term.abs() <= 1e-17 * sum.abs().max(1e-300) && m > 2 {
            break;
        }
        if m > 200 {
            break;
        }
    }
    sum
}

/// Backward recurrence from a high start order, normalised with
/// `J_0 + 2 sum_k J_2k = 1`.
fn miller(ell: usize, x: f64) -> f64 {
    let top = ell as f64 + x + 30.0 + 10.0 * x.cbrt();
    let mut start = top.ceil() as usize;
    if start % 2 == 1 {
        start += 1;
    }
    let mut next = 0.0; // J_{k+1}
    let mut cur = 1e-300; // J_k
    let mut norm = 0.0;
    let mut wanted = 0.0;
    for k in (1..=start).rev() {
        // cur = J_k, produce J_{k-1}
        let prev = 2.0 * k as f64 / x * cur - next;
        next = cur;
        cur = prev;
        let order = k - 1;
        if order == ell {
            wanted = cur;
        }
        if order > 0 && order % 2 == 0 {
            norm += 2.0 * cur;
        }
        if cur.abs() > 1e250 {
            cur *= 1e-250;
            next *= 1e-250;
            norm *= 1e-250;
            wanted *= 1e-250;
        }
    }
    norm += cur;
    wanted / norm
}

/// Sign changes of `f` on `[a, b]` scanned with the given step, each refined
/// by bisection to an absolute width of `1e-12`.
pub fn scan_roots(f: impl Fn(f64) -> f64, a: f64, b: f64, step: f64) -> Result<Vec<f64>> {
    if !(a < b && step > 0.0) {
        return Err(Error::RootBracketingFailure {
            lo: a,
            hi: b,
            reason: "empty scan interval".into(),
        });
    }
    let mut roots = Vec::new();
    let mut lo = a;
    let mut flo = f(lo);
    while lo < b {
        let hi = (lo + step).min(b);
        let fhi = f(hi);
        if flo == 0.0 {
            roots.push(lo);
        } else if flo * fhi < 0.0 {
            roots.push(bisect(&f, lo, hi, flo)?);
        }
        lo = hi;
        flo = fhi;
    }
    Ok(roots)
}

fn bisect(f: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, mut flo: f64) -> Result<f64> {
    let (a, b) = (lo, hi);
    for _ in 0..200 {
        if hi - lo <= 1e-12 {
            return Ok(0.5 * (lo + hi));
        }
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if !fm.is_finite() {
            break;
        }
        if flo * fm < 0.0 {
            hi = mid;
        } else {
            lo = mid;
            flo = fm;
        }
    }
    Err(Error::RootBracketingFailure {
        lo: a,
        hi: b,
        reason: "bisection did not converge".into(),
    })
}

/// Step used when scanning Bessel-type functions for sign changes.
pub const SCAN_STEP: f64 = std::f64::consts::PI / 8.0;

/// The first `count` positive zeros of `J_ell'`.
pub fn bessel_j_prime_zeros(ell: usize, count: usize) -> Result<Vec<f64>> {
    check_range(ell, 0.0)?;
    let roots = scan_roots(|x| j_prime_unchecked(ell, x), SCAN_STEP / 2.0, MAX_ARGUMENT, SCAN_STEP)?;
    take_roots(roots, count)
}

/// The first `count` positive zeros of `J_ell`.
pub fn bessel_j_zeros(ell: usize, count: usize) -> Result<Vec<f64>> {
    check_range(ell, 0.0)?;
    let roots = scan_roots(|x| j_unchecked(ell, x), SCAN_STEP / 2.0, MAX_ARGUMENT, SCAN_STEP)?;
    take_roots(roots, count)
}

fn take_roots(roots: Vec<f64>, count: usize) -> Result<Vec<f64>> {
    if roots.len() < count {
        return Err(Error::OutOfValidatedRange(format!(
            "only {} roots below x = {MAX_ARGUMENT}",
            roots.len()
        )));
    }
    Ok(roots.into_iter().take(count).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    /// `(1/π) ∫_0^π cos(n τ - x sin τ) dτ` by the trapezoid rule, which is
    /// spectrally accurate for this periodic integrand.
    fn integral_oracle(n: usize, x: f64) -> f64 {
        let m = 400;
        let h = PI / m as f64;
        let g = |t: f64| (n as f64 * t - x * t.sin()).cos();
        let mut s = 0.5 * (g(0.0) + g(PI));
        for i in 1..m {
            s += g(i as f64 * h);
        }
        s * h / PI
    }

    #[test]
    fn constant_terms_and_a_known_value() {
        assert_eq!(bessel_j(0, 0.0).unwrap(), 1.0);
        assert_eq!(bessel_j(1, 0.0).unwrap(), 0.0);
        assert!((bessel_j(1, 1.0).unwrap() - 0.440_050_585_744_933_5).abs() < 1e-15);
    }

    #[test]
    fn matches_integral_representation() {
        for ell in 0..=MAX_ORDER {
            for i in 0..=200 {
                let x = 0.5 * i as f64;
                let err = (bessel_j(ell, x).unwrap() - integral_oracle(ell, x)).abs();
                assert!(err < 1e-12, "J_{ell}({x}) off by {err}");
            }
        }
    }

    #[test]
    fn frozen_high_precision_values() {
        let cases = [
            (0, 11.9, 0.025_049_441_699_589_645),
            (0, 12.1, 0.069_666_773_606_807_312),
            (1, 30.0, -0.118_751_062_616_622_937),
            (5, 7.3, 0.313_706_170_897_309_077),
            (20, 30.0, 0.004_831_019_993_404_064_5),
            (20, 99.5, 0.079_219_398_226_501_795),
            (20, 0.5, 3.727_201_961_704_714_5e-31),
        ];
        for (ell, x, want) in cases {
            let err = (bessel_j(ell, x).unwrap() - want).abs();
            assert!(err < 5e-13, "J_{ell}({x}) off by {err}");
        }
    }

    #[test]
    fn recurrence_identity_on_a_grid() {
        for ell in 1..MAX_ORDER {
            for i in 1..=400 {
                let x = 0.25 * i as f64;
                let lhs = bessel_j(ell - 1, x).unwrap() + bessel_j(ell + 1, x).unwrap();
                let rhs = 2.0 * ell as f64 / x * bessel_j(ell, x).unwrap();
                assert!((lhs - rhs).abs() < 1e-11, "ell {ell}, x {x}");
            }
        }
    }

    #[test]
    fn range_is_enforced() {
        assert!(matches!(bessel_j(21, 1.0), Err(Error::OutOfValidatedRange(_))));
        assert!(matches!(bessel_j(0, 100.5), Err(Error::OutOfValidatedRange(_))));
        assert!(matches!(bessel_j_prime(0, -1.0), Err(Error::OutOfValidatedRange(_))));
    }

    #[test]
    fn derivative_zeros_interlace_with_zeros() {
        assert!((bessel_j_prime_zeros(1, 1).unwrap()[0] - 1.841_183_781_340_659_3).abs() < 1e-11);
        assert!((bessel_j_prime_zeros(2, 1).unwrap()[0] - 3.054_236_928_227_140_3).abs() < 1e-11);
        for ell in [0, 1, 4, 12] {
            let dz = bessel_j_prime_zeros(ell, 6).unwrap();
            let z = bessel_j_zeros(ell, 6).unwrap();
            for m in 0..6 {
                // j'_{ell,m} < j_{ell,m} < j'_{ell,m+1} (for ell >= 1; for ell = 0 the
                // zero derivative root at the origin is not returned).
                if ell == 0 {
                    assert!(z[m] < dz[m]);
                    if m > 0 {
                        assert!(dz[m - 1] < z[m]);
                    }
                } else {
                    assert!(dz[m] < z[m]);
                    if m + 1 < 6 {
                        assert!(z[m] < dz[m + 1]);
                    }
                }
                let f = |x: f64| j_prime_unchecked(ell, x);
                assert!(f(dz[m] - 1e-6) * f(dz[m] + 1e-6) < 0.0);
            }
        }
    }
}
