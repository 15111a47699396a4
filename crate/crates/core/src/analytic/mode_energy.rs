//! Per-mode energies of the annulus extension estimate.
//!
//! For a harmonic mode `u = a(ρ) Y_ℓ` on the annulus `r < ρ < 1` in
//! dimension `d` with the Steklov condition `-∂_ρ u = σ u` on the inner sphere,
//! the radial profile is `a(ρ) = ρ^ℓ (1 + M (r/ρ)^{2ℓ+d-2})` (leading
//! coefficient fixed to 1). The extension of the inner trace into the small
//! ball is `h = a(r) (ρ/r)^ℓ Y_ℓ`.

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeEnergy {
    pub ell: usize,
    pub dim: usize,
    pub r: f64,
    /// Outer radius; energies are reported in the frame where it equals 1.
    pub big_r: f64,
    pub sigma: f64,
    /// Ratio of the decaying to the growing radial coefficient.
    pub m: f64,
    /// Dirichlet energy of the extension inside the small ball.
    pub d_h: f64,
    /// `σ a(r)² r^{d-1} + a(1) a'(1)`.
    pub d_u_mode: f64,
}

impl ModeEnergy {
    /// `D_h / (D_u_mode · r^d)`, compared against 5.
    pub fn ratio(&self) -> f64 {
        self.d_h / (self.d_u_mode * self.r.powi(self.dim as i32))
    }
}

/// Mode energies for order `ell >= 1` in dimension `dim >= 2`.
///
/// The radii are normalised by `big_r`, so `r` means `r / R` and `sigma`
/// means `σ R` in the formulas. In `d > 2` the estimate needs
/// `r σ < (d - 2) / 2`; in every dimension the denominator of `M` must stay
/// positive.
pub fn mode_energies(ell: usize, dim: usize, r: f64, big_r: f64, sigma: f64) -> Result<ModeEnergy> {
    if ell == 0 || dim < 2 {
        return Err(Error::InvalidParameter(format!("need ell >= 1 and dim >= 2 (got {ell}, {dim})")));
    }
    if !(r > 0.0 && r < big_r && big_r.is_finite() && sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "need 0 < r < R and sigma > 0 (got r = {r}, R = {big_r}, sigma = {sigma})"
        )));
    }
    let rho = r / big_r;
    let s = sigma * big_r;
    let d = dim as f64;
    let l = ell as f64;
    if dim > 2 && rho * s >= (d - 2.0) / 2.0 {
        return Err(Error::OutOfRegime(format!(
            "r sigma = {} must be below (d - 2)/2 = {}",
            rho * s,
            (d - 2.0) / 2.0
        )));
    }
    let denom = l - 2.0 + d - rho * s;
    if denom <= 0.0 {
        return Err(Error::OutOfRegime(format!("coefficient ratio denominator {denom} is not positive")));
    }
    let m = (l + rho * s) / denom;
    let p = 2.0 * l + d - 2.0;
    let a = |x: f64| x.powf(l) * (1.0 + m * (rho / x).powf(p));
    let a_r = a(rho);
    let a_1 = a(1.0);
    let da_1 = l + (2.0 - l - d) * m * rho.powf(p);
    let d_h = l * a_r * a_r * rho.powf(d - 2.0);
    let d_u_mode = s * a_r * a_r * rho.powf(d - 1.0) + a_1 * da_1;
    Ok(ModeEnergy {
        ell,
        dim,
        r: rho,
        big_r,
        sigma: s,
        m,
        d_h,
        d_u_mode,
    })
}

/// Grid for the per-mode sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeEnergyGrid {
    pub max_ell: usize,
    pub dims: Vec<usize>,
    pub sigmas: Vec<f64>,
    pub radii: Vec<f64>,
    /// Multiplicative slack on the constant 5.
    pub slack: f64,
}

impl Default for ModeEnergyGrid {
    fn default() -> Self {
        ModeEnergyGrid {
            max_ell: 20,
            dims: vec![2, 3, 4],
            sigmas: vec![0.1, 1.0, 10.0],
            radii: vec![1e-3, 1e-2],
            slack: 1.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeEnergyRow {
    pub energy: ModeEnergy,
    pub ratio: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeEnergyReport {
    pub rows: Vec<ModeEnergyRow>,
    /// Grid points outside the admissible regime.
    pub skipped: usize,
    pub violations: usize,
    /// Smallest `c >= 0` with `ratio <= 5 (1 + c r^d)` on every row.
    pub fitted_c: f64,
}

/// Evaluate every admissible grid point and count violations of
/// `D_h <= 5 · slack · r^d · D_u_mode`.
pub fn mode_energy_sweep(grid: &ModeEnergyGrid) -> ModeEnergyReport {
    let mut rows = Vec::new();
    let mut skipped = 0;
    let mut fitted_c: f64 = 0.0;
    for &dim in &grid.dims {
        for &r in &grid.radii {
            for &sigma in &grid.sigmas {
                for ell in 1..=grid.max_ell {
                    match mode_energies(ell, dim, r, 1.0, sigma) {
                        Ok(energy) => {
                            let ratio = energy.ratio();
                            fitted_c = fitted_c.max((ratio / 5.0 - 1.0) / r.powi(dim as i32));
                            rows.push(ModeEnergyRow {
                                energy,
                                ratio,
                                pass: ratio <= 5.0 * grid.slack,
                            });
                        }
                        Err(_) => skipped += 1,
                    }
                }
            }
        }
    }
    let violations = rows.iter().filter(|r| !r.pass).count();
    ModeEnergyReport {
        rows,
        skipped,
        violations,
        fitted_c,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coefficient_ratio_example() {
        let e = mode_energies(1, 2, 0.01, 1.0, 1.0).unwrap();
        assert!((e.m - 1.01 / 0.99).abs() < 1e-15);
        assert!((e.m - 1.0202).abs() < 1e-4);
        let e = mode_energies(3, 2, 0.01, 1.0, 1e-9).unwrap();
        assert!((e.m - 1.0).abs() < 1e-10);
    }

    #[test]
    fn energies_by_direct_quadrature() {
        // D_h for h = a(r)(ρ/r)^ℓ cos(ℓθ) on the disk of radius r in 2D, with
        // the angular factor normalised to ∫cos² = 1: ∫_0^r (h_ρ² + ℓ²h²/ρ²) ρ dρ.
        let (ell, r, sigma) = (2usize, 0.05, 3.0);
        let e = mode_energies(ell, 2, r, 1.0, sigma).unwrap();
        let l = ell as f64;
        let ar = r.powf(l) * (1.0 + e.m);
        let n = 20000;
        let mut s = 0.0;
        for i in 0..n {
            let rho = r * (i as f64 + 0.5) / n as f64;
            let h = ar * (rho / r).powf(l);
            let dh = ar * l / r * (rho / r).powf(l - 1.0);
            s += (dh * dh + l * l * h * h / (rho * rho)) * rho;
        }
        s *= r / n as f64;
        assert!((s - e.d_h).abs() < 1e-6 * e.d_h);
    }

    #[test]
    fn regime_is_enforced() {
        assert!(matches!(
            mode_energies(1, 3, 0.1, 1.0, 5.0),
            Err(Error::OutOfRegime(_))
        ));
        assert!(mode_energies(1, 3, 0.01, 1.0, 10.0).is_ok());
        assert!(mode_energies(0, 2, 0.01, 1.0, 1.0).is_err());
    }

    #[test]
    fn scale_normalisation() {
        let a = mode_energies(2, 3, 0.01, 1.0, 2.0).unwrap();
        let b = mode_energies(2, 3, 0.02, 2.0, 1.0).unwrap();
        assert!((a.ratio() - b.ratio()).abs() < 1e-12 * a.ratio());
    }

    #[test]
    fn default_sweep_has_no_violations() {
        let rep = mode_energy_sweep(&ModeEnergyGrid::default());
        assert_eq!(rep.violations, 0);
        assert_eq!(rep.rows.len() + rep.skipped, 20 * 3 * 3 * 2);
        assert!(rep.rows.iter().all(|r| r.ratio <= 5.0 * (1.0 + rep.fitted_c * r.energy.r.powi(r.energy.dim as i32)) + 1e-12));
    }
}
