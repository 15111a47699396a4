//! The three eigenproblems as pencils, and the limit experiments built on them.

use std::f64::consts::PI;

use crate::analytic::{dynamical_disk_spectrum, neumann_disk_spectrum};
use crate::eigen::{cluster_of, clusters, solve_pencil_smallest, SolverOptions, Spectrum};
use crate::fem::{assemble_boundary_mass, assemble_mass_with, assemble_stiffness_with, extend_into_holes, solve_cell_problem};
use crate::mesh::{
    build_perforated_rectangle, build_rectangle_grid, build_torus_cell, chord_perimeter_factor, Mesh, PerforationSpec,
    RegionFilter, TagSet, TorusCellParams,
};
use crate::par::Exec;
use crate::report::{fit_slope, PlotSpec, SweepReport};
use crate::sparse::SymmetricSparseMatrix;
use crate::{Error, Result, A2};

/// Relative spread below which eigenvalues are treated as one cluster; loose
/// enough to merge pairs split by the diagonal orientation of a grid.
pub const CLUSTER_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProblemKind {
    /// `C` is the boundary mass over every boundary component.
    Steklov,
    /// `C` is the mass matrix.
    Neumann,
    /// `C = 2πβ M + B_outer`.
    Dynamical { beta: f64 },
}

impl ProblemKind {
    pub fn name(&self) -> &'static str {
        match self {
            ProblemKind::Steklov => "steklov",
            ProblemKind::Neumann => "neumann",
            ProblemKind::Dynamical { .. } => "dynamical",
        }
    }
}

/// Stiffness and weight matrices on the dofs of the physical region.
#[derive(Debug, Clone)]
pub struct Pencil {
    pub k: SymmetricSparseMatrix,
    pub c: SymmetricSparseMatrix,
    /// Mesh dofs kept, ascending; hole-fill interiors are excluded.
    pub dofs: Vec<usize>,
}

pub fn assemble_pencil(mesh: &Mesh, kind: ProblemKind, exec: Exec) -> Result<Pencil> {
    let k = assemble_stiffness_with(mesh, RegionFilter::Matrix, exec);
    let c = match kind {
        ProblemKind::Steklov => assemble_boundary_mass(mesh, TagSet::All)?,
        ProblemKind::Neumann => assemble_mass_with(mesh, RegionFilter::Matrix, exec),
        ProblemKind::Dynamical { beta } => {
            if !(beta >= 0.0 && beta.is_finite()) {
                return Err(Error::InvalidParameter(format!("beta must be non-negative (got {beta})")));
            }
            if !mesh.has_tag(TagSet::Outer) {
                return Err(Error::TagMismatch("the dynamical problem needs an Outer boundary".into()));
            }
            let b = assemble_boundary_mass(mesh, TagSet::Outer)?;
            let m = assemble_mass_with(mesh, RegionFilter::Matrix, exec);
            m.linear_combination(A2 * beta, &b, 1.0)?
        }
    };
    let dofs = mesh.dofs_in(RegionFilter::Matrix);
    if dofs.len() == mesh.n_dofs() {
        Ok(Pencil { k, c, dofs })
    } else {
        Ok(Pencil {
            k: k.restrict(&dofs),
            c: c.restrict(&dofs),
            dofs,
        })
    }
}

/// `λ_0 = 0` and the `k` smallest nonzero eigenvalues of the problem on
/// `mesh`. Eigenvectors are indexed by mesh dof; entries outside the physical
/// region are zero.
pub fn solve_problem(mesh: &Mesh, kind: ProblemKind, k: usize, opts: &SolverOptions) -> Result<Spectrum> {
    let pencil = assemble_pencil(mesh, kind, opts.exec)?;
    let mut spectrum = solve_pencil_smallest(&pencil.k, &pencil.c, k, opts)?;
    if pencil.dofs.len() != mesh.n_dofs() {
        for v in &mut spectrum.eigenvectors {
            let mut full = vec![0.0; mesh.n_dofs()];
            for (&d, x) in pencil.dofs.iter().zip(v.iter()) {
                full[d] = *x;
            }
            *v = full;
        }
    }
    Ok(spectrum)
}

/// Perimeter and area entering the scale-invariant functionals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainMeasures {
    pub perimeter: f64,
    pub area: f64,
}

impl DomainMeasures {
    pub fn of_mesh(mesh: &Mesh) -> Self {
        DomainMeasures {
            perimeter: mesh.boundary_length(TagSet::All),
            area: mesh.area(RegionFilter::Matrix),
        }
    }

    pub fn disk(radius: f64) -> Self {
        DomainMeasures {
            perimeter: 2.0 * PI * radius,
            area: PI * radius * radius,
        }
    }
}

/// `σ_k |∂Ω|`, `μ_k |Ω|` or `Σ_k (|∂Ω| + 2πβ|Ω|)` for each value.
pub fn shape_functionals(values: &[f64], kind: ProblemKind, domain: DomainMeasures) -> Vec<f64> {
    let weight = match kind {
        ProblemKind::Steklov => domain.perimeter,
        ProblemKind::Neumann => domain.area,
        ProblemKind::Dynamical { beta } => domain.perimeter + A2 * beta * domain.area,
    };
    values.iter().map(|v| v * weight).collect()
}

/// Cluster-summed relative gap of `values` against `reference` for index `k`,
/// using the reference's cluster containing `k`.
pub fn cluster_gap(values: &[f64], reference: &[f64], k: usize) -> f64 {
    let range = cluster_of(&clusters(reference, CLUSTER_TOL), k);
    let s: f64 = values[range.clone()].iter().sum();
    let r: f64 = reference[range].iter().sum();
    (s - r).abs() / r.abs()
}

/// Number of eigenvalues needed so that every cluster touching `1..=k_max`
/// is complete.
fn cluster_extent(reference: &[f64], k_max: usize) -> usize {
    let cl = clusters(reference, CLUSTER_TOL);
    (1..=k_max).map(|k| cluster_of(&cl, k).end).max().unwrap_or(1) - 1
}

// ---------------------------------------------------------------------------
// Homogenisation sweep

#[derive(Debug, Clone, PartialEq)]
pub struct HomogenisationParams {
    pub beta: f64,
    pub epsilons: Vec<f64>,
    pub k_max: usize,
    pub side: f64,
    pub nodes_per_cell_edge: usize,
    pub hole_rings: usize,
    pub solver: SolverOptions,
}

impl HomogenisationParams {
    pub fn new(beta: f64, epsilons: Vec<f64>, k_max: usize) -> Self {
        HomogenisationParams {
            beta,
            epsilons,
            k_max,
            side: 1.0,
            nodes_per_cell_edge: 8,
            hole_rings: 6,
            solver: SolverOptions::default(),
        }
    }

    fn spec(&self, epsilon: f64) -> Result<PerforationSpec> {
        let spec = PerforationSpec::with_resolution(epsilon, self.beta, self.nodes_per_cell_edge, self.hole_rings)?;
        spec.steps(self.side)?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HomogenisationPoint {
    pub epsilon: f64,
    pub r_eps: f64,
    pub n_holes: usize,
    pub n_dofs: usize,
    pub checksum: String,
    /// `σ_0 = 0, σ_1, ...` on the perforated square.
    pub sigma: Vec<f64>,
    /// `σ_k |∂Ω^ε|` for `k = 0..`.
    pub sigma_perimeter: Vec<f64>,
    /// Cluster-summed relative gap for `k = 1..=k_max`.
    pub gaps: Vec<f64>,
    pub hole_perimeter: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HomogenisationReport {
    pub beta: f64,
    pub k_max: usize,
    /// `Σ_0 = 0, Σ_1, ...` on the unperforated square.
    pub reference: Vec<f64>,
    pub reference_checksum: String,
    pub reference_cells: usize,
    /// Ordered by decreasing ε as given.
    pub points: Vec<HomogenisationPoint>,
    pub n_hole_segments: usize,
}

impl HomogenisationReport {
    /// Whether the gap for `k` strictly decreases along the sweep.
    pub fn strictly_decreasing(&self, k: usize) -> bool {
        self.points.windows(2).all(|w| w[1].gaps[k - 1] < w[0].gaps[k - 1])
    }

    pub fn to_sweep_report(&self) -> SweepReport {
        let km = self.k_max;
        let mut columns = vec!["epsilon".to_string(), "r_eps".into(), "n_holes".into(), "n_dofs".into()];
        for k in 1..=km {
            columns.push(format!("sigma_{k}"));
        }
        for k in 1..=km {
            columns.push(format!("reference_{k}"));
        }
        for k in 1..=km {
            columns.push(format!("rel_gap_{k}"));
        }
        for k in 1..=km {
            columns.push(format!("sigma_perimeter_{k}"));
        }
        columns.push("hole_perimeter".into());
        let rows = self
            .points
            .iter()
            .map(|p| {
                let mut row = vec![p.epsilon, p.r_eps, p.n_holes as f64, p.n_dofs as f64];
                row.extend(&p.sigma[1..=km]);
                row.extend(&self.reference[1..=km]);
                row.extend(&p.gaps);
                row.extend(&p.sigma_perimeter[1..=km]);
                row.push(p.hole_perimeter);
                row
            })
            .collect();
        let mut meshes = vec![(format!("reference grid {0}x{0}", self.reference_cells), self.reference_checksum.clone())];
        meshes.extend(self.points.iter().map(|p| (format!("perforated eps={}", p.epsilon), p.checksum.clone())));
        SweepReport {
            title: format!("Steklov eigenvalues of the perforated square vs dynamical reference, beta = {}", self.beta),
            columns,
            rows,
            meshes,
            notes: vec![
                format!(
                    "holes are regular {}-gons; discrete perimeter = 2 pi r * {:.12} (chord defect)",
                    self.n_hole_segments,
                    chord_perimeter_factor(self.n_hole_segments)
                ),
                "gaps compare cluster sums over the reference clusters".into(),
            ],
            slopes: Vec::new(),
            plot: PlotSpec {
                x: "epsilon".into(),
                ys: (1..=km).map(|k| format!("rel_gap_{k}")).collect(),
                log_x: true,
                log_y: true,
                x_label: "epsilon".into(),
                y_label: "relative gap".into(),
            },
        }
    }
}

/// Steklov spectra of the perforated square for each ε against the dynamical
/// spectrum of the plain square on the finest skeleton spacing.
pub fn run_homogenisation_sweep(params: &HomogenisationParams) -> Result<HomogenisationReport> {
    if params.k_max == 0 {
        return Err(Error::InvalidParameter("k_max must be positive".into()));
    }
    if params.epsilons.is_empty() {
        return Err(Error::InvalidParameter("empty epsilon list".into()));
    }
    let specs = params
        .epsilons
        .iter()
        .map(|&e| params.spec(e))
        .collect::<Result<Vec<_>>>()?;
    let eps_min = params.epsilons.iter().copied().fold(f64::INFINITY, f64::min);
    let cells = specs
        .iter()
        .find(|s| s.epsilon == eps_min)
        .map(|s| s.steps(params.side))
        .transpose()?
        .unwrap_or(1)
        * params.nodes_per_cell_edge;
    let grid = build_rectangle_grid(params.side, params.side, cells, cells)?;
    let solver = params.solver;
    let probe = params.k_max + 4;
    let reference = solve_problem(&grid, ProblemKind::Dynamical { beta: params.beta }, probe, &solver)?.eigenvalues;
    let count = cluster_extent(&reference, params.k_max);
    if count >= probe {
        return Err(Error::InvalidParameter("reference cluster exceeds the probed eigenvalue count".into()));
    }
    let points = solver
        .exec
        .map(&specs, |spec| -> Result<HomogenisationPoint> {
            let mesh = build_perforated_rectangle(params.side, params.side, spec, false)?;
            let s = solve_problem(&mesh, ProblemKind::Steklov, count, &solver)?;
            let measures = DomainMeasures::of_mesh(&mesh);
            let gaps = (1..=params.k_max).map(|k| cluster_gap(&s.eigenvalues, &reference, k)).collect();
            Ok(HomogenisationPoint {
                epsilon: spec.epsilon,
                r_eps: spec.r_eps,
                n_holes: mesh.holes().len(),
                n_dofs: mesh.n_dofs(),
                checksum: mesh.checksum(),
                sigma_perimeter: shape_functionals(&s.eigenvalues, ProblemKind::Steklov, measures),
                sigma: s.eigenvalues,
                gaps,
                hole_perimeter: mesh.boundary_length(TagSet::Holes),
            })
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(HomogenisationReport {
        beta: params.beta,
        k_max: params.k_max,
        reference: reference[..=count].to_vec(),
        reference_checksum: grid.checksum(),
        reference_cells: cells,
        points,
        n_hole_segments: specs[0].n_hole_segments,
    })
}

// ---------------------------------------------------------------------------
// β sweep

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BetaDomain {
    /// Analytic path through the Bessel root solver.
    Disk { radius: f64 },
    /// P1 path on a `cells x cells` grid of the square.
    Square { side: f64, cells: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BetaPoint {
    pub beta: f64,
    /// `Σ_1..Σ_k`.
    pub sigma: Vec<f64>,
    /// `2πβ Σ_k`.
    pub scaled: Vec<f64>,
    /// Neumann reference `μ_k`.
    pub mu_ref: Vec<f64>,
    /// `|2πβΣ_k - μ_k| / μ_k`, cluster-summed.
    pub rel_gap: Vec<f64>,
    /// `Σ_k (|∂Ω| + 2πβ|Ω|)`.
    pub functional: Vec<f64>,
    /// `μ_k |Ω|`.
    pub mu_area: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BetaSweepReport {
    pub domain: BetaDomain,
    pub k_max: usize,
    pub points: Vec<BetaPoint>,
    pub checksum: Option<String>,
    /// Log-log slope of `|2πβΣ_1 - μ_1|` against β, when it can be fitted.
    pub gap_slope: Option<f64>,
}

impl BetaSweepReport {
    pub fn to_sweep_report(&self) -> SweepReport {
        let km = self.k_max;
        let suffix = |k: usize| if k == 1 { String::new() } else { format!("_{k}") };
        let mut columns = vec!["beta".to_string()];
        for k in 1..=km {
            columns.push(format!("Sigma_{k}"));
            columns.push(format!("twopibetaSigma_{k}"));
            columns.push(format!("mu_ref{}", suffix(k)));
            columns.push(format!("rel_gap{}", suffix(k)));
        }
        let rows = self
            .points
            .iter()
            .map(|p| {
                let mut row = vec![p.beta];
                for i in 0..km {
                    row.extend([p.sigma[i], p.scaled[i], p.mu_ref[i], p.rel_gap[i]]);
                }
                row
            })
            .collect();
        let (title, meshes) = match (self.domain, &self.checksum) {
            (BetaDomain::Disk { radius }, _) => (format!("dynamical eigenvalues of the disk of radius {radius}, analytic"), vec![]),
            (BetaDomain::Square { side, cells }, Some(c)) => (
                format!("dynamical eigenvalues of the square of side {side}, P1 on {cells}x{cells}"),
                vec![(format!("grid {cells}x{cells}"), c.clone())],
            ),
            (BetaDomain::Square { side, .. }, None) => (format!("dynamical eigenvalues of the square of side {side}"), vec![]),
        };
        SweepReport {
            title,
            columns,
            rows,
            meshes,
            notes: Vec::new(),
            slopes: self.gap_slope.map(|s| vec![("rel_gap".to_string(), s)]).unwrap_or_default(),
            plot: PlotSpec {
                x: "beta".into(),
                ys: vec!["rel_gap".into()],
                log_x: true,
                log_y: true,
                x_label: "beta".into(),
                y_label: "|2 pi beta Sigma_1 - mu_1| / mu_1".into(),
            },
        }
    }
}

/// Neumann eigenvalues `π²(m² + n²)/side²` of the square, with multiplicity.
pub fn neumann_square_spectrum(side: f64, count: usize) -> Vec<f64> {
    let n = (count as f64).sqrt().ceil() as usize + 2;
    let mut v: Vec<f64> = (0..=n)
        .flat_map(|a| (0..=n).map(move |b| (a * a + b * b) as f64))
        .map(|q| PI * PI * q / (side * side))
        .collect();
    v.sort_by(f64::total_cmp);
    v.truncate(count + 1);
    v
}

/// `sigma` holds `Σ_1, Σ_2, ...`, at least through the reference cluster of
/// `k_max`.
fn beta_point(beta: f64, sigma: &[f64], k_max: usize, mu: &[f64], measures: DomainMeasures) -> BetaPoint {
    let mut full_scaled = vec![0.0];
    full_scaled.extend(sigma.iter().map(|s| A2 * beta * s));
    let sigma = sigma[..k_max].to_vec();
    BetaPoint {
        beta,
        scaled: full_scaled[1..=k_max].to_vec(),
        mu_ref: mu[1..=k_max].to_vec(),
        rel_gap: (1..=k_max).map(|k| cluster_gap(&full_scaled, mu, k)).collect(),
        functional: shape_functionals(&sigma, ProblemKind::Dynamical { beta }, measures),
        mu_area: shape_functionals(&mu[1..=k_max], ProblemKind::Neumann, measures),
        sigma,
    }
}

pub fn run_beta_sweep(domain: BetaDomain, betas: &[f64], k_max: usize, opts: &SolverOptions) -> Result<BetaSweepReport> {
    if k_max == 0 {
        return Err(Error::InvalidParameter("k_max must be positive".into()));
    }
    if let Some(b) = betas.iter().find(|b| !(**b > 0.0 && b.is_finite())) {
        return Err(Error::InvalidParameter(format!("beta must be positive (got {b})")));
    }
    let (points, checksum) = match domain {
        BetaDomain::Disk { radius } => {
            let mu = neumann_disk_spectrum(radius, k_max + 2)?;
            let probe = cluster_extent(&mu, k_max);
            let measures = DomainMeasures::disk(radius);
            let points = opts
                .exec
                .map(betas, |&beta| -> Result<BetaPoint> {
                    let roots = dynamical_disk_spectrum(radius, beta, probe)?;
                    let sigma: Vec<f64> = roots[1..].iter().map(|r| r.sigma).collect();
                    Ok(beta_point(beta, &sigma, k_max, &mu, measures))
                })
                .into_iter()
                .collect::<Result<Vec<_>>>()?;
            (points, None)
        }
        BetaDomain::Square { side, cells } => {
            let mesh = build_rectangle_grid(side, side, cells, cells)?;
            let mu = neumann_square_spectrum(side, k_max + 2);
            let measures = DomainMeasures::of_mesh(&mesh);
            let probe = cluster_extent(&mu, k_max);
            let points = opts
                .exec
                .map(betas, |&beta| -> Result<BetaPoint> {
                    let s = solve_problem(&mesh, ProblemKind::Dynamical { beta }, probe, opts)?;
                    Ok(beta_point(beta, &s.eigenvalues[1..], k_max, &mu, measures))
                })
                .into_iter()
                .collect::<Result<Vec<_>>>()?;
            (points, Some(mesh.checksum()))
        }
    };
    let gaps: Vec<f64> = points.iter().map(|p| (p.scaled[0] - p.mu_ref[0]).abs()).collect();
    let gap_slope = fit_slope(betas, &gaps).ok().map(|f| f.slope);
    Ok(BetaSweepReport {
        domain,
        k_max,
        points,
        checksum,
        gap_slope,
    })
}

// ---------------------------------------------------------------------------
// Extension energy

#[derive(Debug, Clone, PartialEq)]
pub struct ExtensionReport {
    pub epsilon: f64,
    pub r_eps: f64,
    /// Eigenvalue indices whose eigenvectors enter the sums (the cluster of `k`).
    pub indices: Vec<usize>,
    /// `Σ D(U; T_j)` over holes and cluster members.
    pub hole_energy: f64,
    /// `Σ D(u; Ω^ε)` over cluster members.
    pub domain_energy: f64,
    /// `hole_energy / ((r_ε/ε)² domain_energy)`.
    pub aggregate: f64,
    /// Per-hole ratio against the energy in that hole's lattice cell.
    pub per_hole: Vec<f64>,
    pub max_extension_residual: f64,
}

/// Harmonically extend eigenvector `k` (summed over its eigenvalue cluster)
/// into every hole of a filled perforated mesh and compare energies.
pub fn verify_extension_energy(mesh: &Mesh, spectrum: &Spectrum, k: usize, exec: Exec) -> Result<ExtensionReport> {
    let lattice = mesh
        .lattice()
        .ok_or_else(|| Error::InvalidMesh("extension check needs a perforated lattice mesh".into()))?;
    if !mesh.has_fill() {
        return Err(Error::InvalidMesh("extension check needs a mesh with hole fills".into()));
    }
    if k >= spectrum.len() {
        return Err(Error::InvalidParameter(format!("eigenpair {k} not computed")));
    }
    let r_eps = mesh.holes().first().map(|h| h.radius).unwrap_or(0.0);
    let indices: Vec<usize> = if k == 0 {
        vec![0]
    } else {
        spectrum.clusters(CLUSTER_TOL).into_iter().find(|r| r.contains(&k)).unwrap_or(k..k + 1).collect()
    };
    let n_holes = mesh.holes().len();
    // Cell of every matrix triangle, by centroid.
    let cell_of: Vec<Option<usize>> = (0..mesh.n_triangles())
        .map(|t| {
            if mesh.regions()[t] != crate::mesh::Region::Matrix {
                return None;
            }
            let tri = mesh.triangles()[t];
            let v = mesh.vertices();
            let c = [
                (v[tri[0]][0] + v[tri[1]][0] + v[tri[2]][0]) / 3.0,
                (v[tri[0]][1] + v[tri[1]][1] + v[tri[2]][1]) / 3.0,
            ];
            mesh.hole_cell_of(c)
        })
        .collect();
    let mut hole_energy_each = vec![0.0; n_holes];
    let mut cell_energy_each = vec![0.0; n_holes];
    let mut domain_energy = 0.0;
    let mut worst: f64 = 0.0;
    let dof_map = mesh.dof_map();
    for &i in &indices {
        let u = &spectrum.eigenvectors[i];
        if u.len() != mesh.n_dofs() {
            return Err(Error::DimensionMismatch(format!(
                "eigenvector has {} entries, mesh {} dofs",
                u.len(),
                mesh.n_dofs()
            )));
        }
        for e in extend_into_holes(mesh, u, exec)? {
            hole_energy_each[e.hole] += e.energy;
            worst = worst.max(e.residual);
        }
        for t in 0..mesh.n_triangles() {
            if mesh.regions()[t] != crate::mesh::Region::Matrix {
                continue;
            }
            let tri = mesh.triangles()[t];
            let ke = crate::fem::element_stiffness(tri.map(|v| mesh.vertices()[v]));
            let x = tri.map(|v| u[dof_map[v]]);
            let mut e = 0.0;
            for a in 0..3 {
                for b in 0..3 {
                    e += x[a] * ke[a][b] * x[b];
                }
            }
            domain_energy += e;
            if let Some(c) = cell_of[t] {
                cell_energy_each[c] += e;
            }
        }
    }
    let scale = (r_eps / lattice.epsilon).powi(2);
    let hole_energy: f64 = hole_energy_each.iter().sum();
    // The constant mode has no energy anywhere; its ratio is defined as 0.
    let ratio = |num: f64, den: f64| if k == 0 || num == 0.0 { 0.0 } else { num / (scale * den) };
    Ok(ExtensionReport {
        epsilon: lattice.epsilon,
        r_eps,
        indices,
        hole_energy,
        domain_energy,
        aggregate: ratio(hole_energy, domain_energy),
        per_hole: hole_energy_each
            .iter()
            .zip(&cell_energy_each)
            .map(|(h, c)| ratio(*h, *c))
            .collect(),
        max_extension_residual: worst,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtensionSweepParams {
    pub beta: f64,
    pub epsilons: Vec<f64>,
    pub k: usize,
    pub nodes_per_cell_edge: usize,
    pub hole_rings: usize,
    pub solver: SolverOptions,
}

impl ExtensionSweepParams {
    pub fn new(beta: f64, epsilons: Vec<f64>, k: usize) -> Self {
        ExtensionSweepParams {
            beta,
            epsilons,
            k,
            nodes_per_cell_edge: 8,
            hole_rings: 6,
            solver: SolverOptions::default(),
        }
    }
}

/// Build filled perforated unit squares, solve Steklov, and run the extension
/// check at each ε.
pub fn run_extension_sweep(params: &ExtensionSweepParams) -> Result<(Vec<ExtensionReport>, SweepReport)> {
    let specs = params
        .epsilons
        .iter()
        .map(|&e| {
            let s = PerforationSpec::with_resolution(e, params.beta, params.nodes_per_cell_edge, params.hole_rings)?;
            s.steps(1.0)?;
            Ok(s)
        })
        .collect::<Result<Vec<_>>>()?;
    let results = params
        .solver
        .exec
        .map(&specs, |spec| -> Result<(ExtensionReport, String)> {
            let mesh = build_perforated_rectangle(1.0, 1.0, spec, true)?;
            let s = solve_problem(&mesh, ProblemKind::Steklov, params.k + 3, &params.solver)?;
            Ok((verify_extension_energy(&mesh, &s, params.k, params.solver.exec)?, mesh.checksum()))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let table = SweepReport {
        title: format!("hole extension energy of Steklov eigenfunction {}, beta = {}", params.k, params.beta),
        columns: vec![
            "epsilon".into(),
            "r_eps".into(),
            "hole_energy".into(),
            "domain_energy".into(),
            "aggregate_ratio".into(),
            "max_hole_ratio".into(),
        ],
        rows: results
            .iter()
            .map(|(r, _)| {
                vec![
                    r.epsilon,
                    r.r_eps,
                    r.hole_energy,
                    r.domain_energy,
                    r.aggregate,
                    r.per_hole.iter().copied().fold(0.0, f64::max),
                ]
            })
            .collect(),
        meshes: results
            .iter()
            .map(|(r, c)| (format!("perforated filled eps={}", r.epsilon), c.clone()))
            .collect(),
        notes: vec!["energies summed over the eigenvalue cluster of k".into()],
        slopes: Vec::new(),
        plot: PlotSpec {
            x: "epsilon".into(),
            ys: vec!["aggregate_ratio".into()],
            log_x: true,
            log_y: false,
            x_label: "epsilon".into(),
            y_label: "D(U;T) / ((r/eps)^2 D(u))".into(),
        },
    };
    Ok((results.into_iter().map(|(r, _)| r).collect(), table))
}

// ---------------------------------------------------------------------------
// Cell problem scaling

#[derive(Debug, Clone, PartialEq)]
pub struct CellPoint {
    pub epsilon: f64,
    /// Renormalised hole radius `ρ_ε = β ε`.
    pub rho: f64,
    pub h1_norm: f64,
    pub grad_norm: f64,
    pub l2_norm: f64,
    /// `‖ψ_ε‖_{H¹} / ε`.
    pub ratio: f64,
    /// Discrete compatibility constant (polygon perimeter over cell area).
    pub c_eps: f64,
    /// `2πρ / (1 - πρ²)`.
    pub c_eps_exact: f64,
    pub n_dofs: usize,
    pub checksum: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellScalingReport {
    pub beta: f64,
    pub points: Vec<CellPoint>,
    pub slope: Option<f64>,
}

impl CellScalingReport {
    /// Largest relative increase of `‖ψ‖/ε` from one ε to the next smaller.
    pub fn max_ratio_increase(&self) -> f64 {
        let mut pts: Vec<&CellPoint> = self.points.iter().collect();
        pts.sort_by(|a, b| b.epsilon.total_cmp(&a.epsilon));
        pts.windows(2)
            .filter(|w| w[0].ratio > 0.0)
            .map(|w| w[1].ratio / w[0].ratio - 1.0)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn to_sweep_report(&self, params: TorusCellParams) -> SweepReport {
        SweepReport {
            title: format!("cell problem norms on the punctured torus, beta = {}", self.beta),
            columns: vec![
                "epsilon".into(),
                "rho".into(),
                "h1_norm".into(),
                "grad_norm".into(),
                "l2_norm".into(),
                "h1_over_eps".into(),
                "c_eps".into(),
                "c_eps_exact".into(),
                "n_dofs".into(),
            ],
            rows: self
                .points
                .iter()
                .map(|p| {
                    vec![
                        p.epsilon,
                        p.rho,
                        p.h1_norm,
                        p.grad_norm,
                        p.l2_norm,
                        p.ratio,
                        p.c_eps,
                        p.c_eps_exact,
                        p.n_dofs as f64,
                    ]
                })
                .collect(),
            meshes: self
                .points
                .iter()
                .filter_map(|p| p.checksum.clone().map(|c| (format!("torus cell rho={}", p.rho), c)))
                .collect(),
            notes: vec![format!(
                "hole is a regular {}-gon; c_eps uses the discrete perimeter (chord factor {:.12})",
                4 * params.nodes_per_edge,
                chord_perimeter_factor(4 * params.nodes_per_edge)
            )],
            slopes: self.slope.map(|s| vec![("h1_norm".to_string(), s)]).unwrap_or_default(),
            plot: PlotSpec {
                x: "epsilon".into(),
                ys: vec!["h1_norm".into()],
                log_x: true,
                log_y: true,
                x_label: "epsilon".into(),
                y_label: "H1 norm of psi".into(),
            },
        }
    }
}

/// Solve the cell problem on the unit punctured torus with `ρ_ε = βε` for
/// each ε and fit the log-log slope of the H¹ norm.
pub fn run_cell_scaling(beta: f64, epsilons: &[f64], params: TorusCellParams, exec: Exec) -> Result<CellScalingReport> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::InvalidParameter(format!("beta must be non-negative (got {beta})")));
    }
    for &e in epsilons {
        if !(e > 0.0) {
            return Err(Error::InvalidParameter(format!("epsilon must be positive (got {e})")));
        }
        if beta * e >= 0.5 {
            return Err(Error::DegenerateCell { rho: beta * e });
        }
    }
    let points = exec
        .map(epsilons, |&epsilon| -> Result<CellPoint> {
            let rho = beta * epsilon;
            if rho == 0.0 {
                return Ok(CellPoint {
                    epsilon,
                    rho,
                    h1_norm: 0.0,
                    grad_norm: 0.0,
                    l2_norm: 0.0,
                    ratio: 0.0,
                    c_eps: 0.0,
                    c_eps_exact: 0.0,
                    n_dofs: 0,
                    checksum: None,
                });
            }
            let mesh = build_torus_cell(rho, params)?;
            let sol = solve_cell_problem(&mesh)?;
            Ok(CellPoint {
                epsilon,
                rho,
                h1_norm: sol.h1_norm,
                grad_norm: sol.dirichlet_energy.sqrt(),
                l2_norm: sol.l2_norm,
                ratio: sol.h1_norm / epsilon,
                c_eps: sol.c_eps,
                c_eps_exact: 2.0 * PI * rho / (1.0 - PI * rho * rho),
                n_dofs: mesh.n_dofs(),
                checksum: Some(mesh.checksum()),
            })
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let xs: Vec<f64> = points.iter().map(|p| p.epsilon).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.h1_norm).collect();
    let slope = fit_slope(&xs, &ys).ok().map(|f| f.slope);
    Ok(CellScalingReport { beta, points, slope })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_polar_mesh;

    #[test]
    fn dynamical_needs_an_outer_boundary() {
        let torus = build_torus_cell(0.2, TorusCellParams { nodes_per_edge: 4, rings: 2 }).unwrap();
        assert!(matches!(
            assemble_pencil(&torus, ProblemKind::Dynamical { beta: 1.0 }, Exec::Sequential),
            Err(Error::TagMismatch(_))
        ));
    }

    #[test]
    fn zero_beta_dynamical_is_steklov() {
        let m = build_rectangle_grid(1.0, 1.0, 8, 8).unwrap();
        let a = assemble_pencil(&m, ProblemKind::Steklov, Exec::Sequential).unwrap();
        let b = assemble_pencil(&m, ProblemKind::Dynamical { beta: 0.0 }, Exec::Sequential).unwrap();
        assert_eq!(a.c.to_dense(), b.c.to_dense());
        assert_eq!(a.k, b.k);
    }

    #[test]
    fn neumann_square_values() {
        let v = neumann_square_spectrum(1.0, 6);
        let p = PI * PI;
        assert_eq!(v, vec![0.0, p, p, 2.0 * p, 4.0 * p, 4.0 * p, 5.0 * p]);
    }

    #[test]
    fn disk_functionals() {
        let m = build_polar_mesh(0.0, 1.0, 16, 64).unwrap();
        let s = solve_problem(&m, ProblemKind::Steklov, 2, &SolverOptions::default()).unwrap();
        let f = shape_functionals(&s.eigenvalues, ProblemKind::Steklov, DomainMeasures::of_mesh(&m));
        assert!((f[1] / (2.0 * PI) - 1.0).abs() < 0.02);
        assert!(f[1] < 4.0 * PI);
    }

    #[test]
    fn cell_scaling_without_holes_is_zero() {
        let r = run_cell_scaling(0.0, &[0.25, 0.125, 0.0625], TorusCellParams::default(), Exec::Sequential).unwrap();
        assert!(r.points.iter().all(|p| p.h1_norm == 0.0));
        assert!(r.slope.is_none());
    }

    #[test]
    fn constant_mode_has_no_extension_energy() {
        let spec = PerforationSpec::with_resolution(0.25, 1.0, 4, 2).unwrap();
        let mesh = build_perforated_rectangle(1.0, 1.0, &spec, true).unwrap();
        let s = solve_problem(&mesh, ProblemKind::Steklov, 2, &SolverOptions::default()).unwrap();
        let r = verify_extension_energy(&mesh, &s, 0, Exec::Sequential).unwrap();
        assert!(r.hole_energy.abs() < 1e-12 && r.domain_energy.abs() < 1e-12);
        assert_eq!(r.aggregate, 0.0);
    }
}
