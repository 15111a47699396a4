//! Analytic reference spectra and the per-mode annulus energy calculator.

pub mod bessel;
pub mod mode_energy;
pub mod spectra;

pub use bessel::{bessel_j, bessel_j_prime, bessel_j_prime_zeros, bessel_j_zeros};
pub use mode_energy::{mode_energies, mode_energy_sweep, ModeEnergyGrid, ModeEnergyReport, ModeEnergyRow, ModeEnergy};
pub use spectra::{
    annulus_mode_eigenvalues, annulus_optimum, annulus_sigma1, dynamical_disk_mode_roots, dynamical_disk_spectrum,
    neumann_disk_spectrum, steklov_annulus_spectrum, steklov_disk_spectrum, AnnulusOptimum, DynamicalDiskRoot,
};

/// Neumann `μ_1` of the unit disk, `(j'_{1,1})²`, as quoted to four decimals.
pub const MU1_DISK_QUOTED: f64 = 3.3900;
