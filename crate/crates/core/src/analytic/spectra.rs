//! Closed-form and Bessel-based reference spectra on disks and annuli.

use super::bessel::{j_prime_unchecked, j_unchecked, scan_roots, MAX_ARGUMENT, MAX_ORDER, SCAN_STEP};
use crate::{Error, Result, A2};

fn check_radius(r: f64) -> Result<()> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::InvalidParameter(format!("radius must be positive (got {r})")));
    }
    Ok(())
}

/// Push `value` once for `ell = 0` and twice otherwise.
fn push_mode(out: &mut Vec<f64>, ell: usize, value: f64) {
    out.push(value);
    if ell > 0 {
        out.push(value);
    }
}

/// Sort, then keep `count` values after the leading zero when all of them lie
/// strictly below `complete_below`.
fn finish(mut values: Vec<f64>, count: usize, complete_below: f64, what: &str) -> Result<Vec<f64>> {
    values.sort_by(f64::total_cmp);
    let mut out = vec![0.0];
    out.extend(values.into_iter().take(count));
    if out.len() < count + 1 || out[count] >= complete_below {
        return Err(Error::OutOfValidatedRange(format!(
            "{what}: {count} eigenvalues exceed the validated Bessel range"
        )));
    }
    Ok(out)
}

/// Neumann eigenvalues of the disk of radius `r`: `0` followed by the
/// `count` smallest `(j'_{ell,m}/r)^2`, doubled for `ell >= 1`.
pub fn neumann_disk_spectrum(r: f64, count: usize) -> Result<Vec<f64>> {
    check_radius(r)?;
    let mut values = Vec::new();
    let mut limit = MAX_ARGUMENT;
    for ell in 0..=MAX_ORDER {
        let roots = scan_roots(|x| j_prime_unchecked(ell, x), SCAN_STEP / 2.0, MAX_ARGUMENT, SCAN_STEP)?;
        if ell == MAX_ORDER {
            limit = limit.min(roots[0]);
        }
        for x in roots {
            push_mode(&mut values, ell, (x / r).powi(2));
        }
    }
    finish(values, count, (limit / r).powi(2), "neumann_disk_spectrum")
}

/// Steklov eigenvalues of the disk of radius `r`: `ell / r` for
/// `ell = 0, 1, 1, 2, 2, ...`.
pub fn steklov_disk_spectrum(r: f64, count: usize) -> Result<Vec<f64>> {
    check_radius(r)?;
    let mut out = vec![0.0];
    let mut ell = 1;
    while out.len() < count + 1 {
        out.push(ell as f64 / r);
        if out.len() < count + 1 {
            out.push(ell as f64 / r);
        }
        ell += 1;
    }
    Ok(out)
}

/// The two Steklov eigenvalues of angular order `ell` on the annulus
/// `inner < |x| < outer`, ascending. For `ell = 0` the pair is `0` and
/// `(1/inner + 1/outer) / ln(outer/inner)`.
pub fn annulus_mode_eigenvalues(ell: usize, inner: f64, outer: f64) -> Result<[f64; 2]> {
    if !(inner > 0.0 && inner < outer && outer.is_finite()) {
        return Err(Error::DegenerateAnnulus { inner, outer });
    }
    if ell == 0 {
        return Ok([0.0, (1.0 / inner + 1.0 / outer) / (outer / inner).ln()]);
    }
    // Determinant of the two boundary conditions for a ρ^ℓ + b ρ^{-ℓ}, divided
    // by outer^{2ℓ}: A σ² + B σ + C with q = (inner/outer)^{2ℓ}.
    let l = ell as f64;
    let q = (inner / outer).powi(2 * ell as i32);
    let a = inner * outer * (1.0 - q);
    let b = -l * (inner + outer) * (1.0 + q);
    let c = l * l * (1.0 - q);
    let disc = (b * b - 4.0 * a * c).max(0.0).sqrt();
    let big = (-b + disc) / (2.0 * a);
    Ok([c / (a * big), big])
}

/// Coefficients `(a, b)` of the mode `a ρ^ℓ + b ρ^{-ℓ}` (or `a + b ln ρ`)
/// for Steklov eigenvalue `sigma`, normalised so that `|(a, b)| = 1`.
pub fn annulus_mode_coefficients(ell: usize, inner: f64, outer: f64, sigma: f64) -> [f64; 2] {
    let [a, b] = if ell == 0 {
        [1.0 / outer - sigma * outer.ln(), sigma]
    } else {
        // Null vector of whichever boundary row suffers less cancellation in
        // `ℓ ∓ σρ`.
        let l = ell as f64;
        let e = 2 * ell as i32;
        let outer_quality = (l - sigma * outer).abs() / (l + sigma * outer);
        let inner_quality = (l - sigma * inner).abs() / (l + sigma * inner);
        if outer_quality >= inner_quality {
            [l + sigma * outer, outer.powi(e) * (l - sigma * outer)]
        } else {
            [l - sigma * inner, inner.powi(e) * (l + sigma * inner)]
        }
    };
    let n = a.hypot(b);
    [a / n, b / n]
}

/// Relative residuals of the outer (`∂_ρ u = σ u`) and inner
/// (`-∂_ρ u = σ u`) boundary conditions for a mode with coefficients `(a, b)`,
/// each divided by `|∂_ρ u| + σ|u|` at that radius.
pub fn annulus_mode_residuals(ell: usize, inner: f64, outer: f64, sigma: f64, coef: [f64; 2]) -> [f64; 2] {
    let l = ell as f64;
    let [a, b] = coef;
    let value = |rho: f64| {
        if ell == 0 {
            a + b * rho.ln()
        } else {
            a * rho.powf(l) + b * rho.powf(-l)
        }
    };
    let slope = |rho: f64| {
        if ell == 0 {
            b / rho
        } else {
            l * (a * rho.powf(l - 1.0) - b * rho.powf(-l - 1.0))
        }
    };
    let rel = |res: f64, rho: f64| {
        let scale = slope(rho).abs() + sigma * value(rho).abs();
        if scale == 0.0 {
            res.abs()
        } else {
            res.abs() / scale
        }
    };
    [
        rel(slope(outer) - sigma * value(outer), outer),
        rel(-slope(inner) - sigma * value(inner), inner),
    ]
}

/// Steklov eigenvalues of the annulus `inner < |x| < outer`, merged
/// ascending with multiplicity 2 for `ell >= 1`; `count` values after `0`.
pub fn steklov_annulus_spectrum(inner: f64, outer: f64, count: usize) -> Result<Vec<f64>> {
    let [_, s0] = annulus_mode_eigenvalues(0, inner, outer)?;
    let mut values = vec![s0];
    let mut ell = 1;
    loop {
        let [lo, hi] = annulus_mode_eigenvalues(ell, inner, outer)?;
        values.sort_by(f64::total_cmp);
        // The lower branch increases with ell, so once it passes the current
        // count-th value nothing smaller can follow.
        if values.len() >= count && lo > values[count.max(1) - 1] {
            break;
        }
        push_mode(&mut values, ell, lo);
        push_mode(&mut values, ell, hi);
        ell += 1;
    }
    values.sort_by(f64::total_cmp);
    let mut out = vec![0.0];
    out.extend(values.into_iter().take(count));
    Ok(out)
}

/// Maximiser of the perimeter-normalised first annulus eigenvalue
/// `σ_1(A_{r,1}) · 2π(1 + r)` over the inner radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnulusOptimum {
    pub inner_radius: f64,
    pub sigma1: f64,
    /// `σ_1 · 2π(1 + r)`.
    pub value: f64,
}

/// First nonzero Steklov eigenvalue of `A_{r,1}`.
pub fn annulus_sigma1(inner: f64) -> Result<f64> {
    let mut best = annulus_mode_eigenvalues(0, inner, 1.0)?[1];
    for ell in 1..=4 {
        best = best.min(annulus_mode_eigenvalues(ell, inner, 1.0)?[0]);
    }
    Ok(best)
}

fn annulus_functional(r: f64) -> f64 {
    annulus_sigma1(r).map(|s| s * A2 * (1.0 + r)).unwrap_or(f64::NEG_INFINITY)
}

/// Grid scan over `r ∈ (0, 1)` followed by golden-section refinement.
pub fn annulus_optimum() -> Result<AnnulusOptimum> {
    let n = 999;
    let (mut best_i, mut best_v) = (1, f64::NEG_INFINITY);
    for i in 1..=n {
        let v = annulus_functional(i as f64 / (n + 1) as f64);
        if v > best_v {
            best_i = i;
            best_v = v;
        }
    }
    let h = 1.0 / (n + 1) as f64;
    let (mut a, mut b) = ((best_i as f64 - 1.0) * h, (best_i as f64 + 1.0) * h);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    while b - a > 1e-12 {
        if annulus_functional(c) > annulus_functional(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - g * (b - a);
        d = a + g * (b - a);
    }
    let r = 0.5 * (a + b);
    let sigma1 = annulus_sigma1(r)?;
    Ok(AnnulusOptimum {
        inner_radius: r,
        sigma1,
        value: sigma1 * A2 * (1.0 + r),
    })
}

/// One eigenvalue of the dynamical problem `-ΔU = 2πβ Σ U` in the disk,
/// `∂_ν U = Σ U` on its boundary, from the separated mode `J_ℓ(kρ) e^{iℓθ}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicalDiskRoot {
    pub ell: usize,
    /// Radial frequency `k`; `Σ = k² / (2πβ)`.
    pub k_root: f64,
    pub sigma: f64,
    pub beta: f64,
}

impl DynamicalDiskRoot {
    /// `J_ℓ'(kR) - k J_ℓ(kR) / (2πβ)`, zero at an eigenvalue.
    pub fn boundary_residual(&self, radius: f64) -> f64 {
        dynamical_condition(self.ell, radius, self.beta, self.k_root)
    }
}

fn dynamical_condition(ell: usize, radius: f64, beta: f64, k: f64) -> f64 {
    let x = k * radius;
    j_prime_unchecked(ell, x) - k * j_unchecked(ell, x) / (A2 * beta)
}

/// The nonzero roots for one angular order, ascending in `k`.
pub fn dynamical_disk_mode_roots(ell: usize, radius: f64, beta: f64) -> Result<Vec<DynamicalDiskRoot>> {
    check_radius(radius)?;
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidParameter(format!("beta must be positive (got {beta})")));
    }
    if ell > MAX_ORDER {
        return Err(Error::OutOfValidatedRange(format!("angular order {ell} > {MAX_ORDER}")));
    }
    // For small β the first root sits near x = sqrt(2πβRℓ); start below it.
    let small = (A2 * beta * radius * ell.max(1) as f64).sqrt();
    let start = (0.25 * small).min(SCAN_STEP / 2.0);
    let xs = scan_roots(
        |x| dynamical_condition(ell, radius, beta, x / radius),
        start,
        MAX_ARGUMENT,
        SCAN_STEP,
    )
    .map_err(|e| match e {
        Error::RootBracketingFailure { reason, .. } => Error::RootBracketingFailure {
            lo: start,
            hi: MAX_ARGUMENT,
            reason,
        },
        other => other,
    })?;
    Ok(xs
        .into_iter()
        .map(|x| {
            let k = x / radius;
            DynamicalDiskRoot {
                ell,
                k_root: k,
                sigma: k * k / (A2 * beta),
                beta,
            }
        })
        .collect())
}

/// `Σ_0 = 0` followed by the `count` smallest nonzero dynamical eigenvalues of
/// the disk, with multiplicity 2 for `ell >= 1`.
pub fn dynamical_disk_spectrum(radius: f64, beta: f64, count: usize) -> Result<Vec<DynamicalDiskRoot>> {
    let mut roots = Vec::new();
    let mut limit = MAX_ARGUMENT * MAX_ARGUMENT / (radius * radius * A2 * beta);
    for ell in 0..=MAX_ORDER {
        let mode = dynamical_disk_mode_roots(ell, radius, beta)?;
        if ell == MAX_ORDER {
            if let Some(first) = mode.first() {
                limit = limit.min(first.sigma);
            }
        }
        for r in mode {
            roots.push(r);
            if ell > 0 {
                roots.push(r);
            }
        }
    }
    roots.sort_by(|a, b| a.sigma.total_cmp(&b.sigma));
    let mut out = vec![DynamicalDiskRoot {
        ell: 0,
        k_root: 0.0,
        sigma: 0.0,
        beta,
    }];
    out.extend(roots.into_iter().take(count));
    if out.len() < count + 1 || out[count].sigma >= limit {
        return Err(Error::OutOfValidatedRange(format!(
            "dynamical_disk_spectrum: {count} eigenvalues exceed the validated Bessel range"
        )));
    }
    Ok(out)
}
