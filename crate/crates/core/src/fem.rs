//! P1 finite-element assembly and the auxiliary Poisson solves.
//!
//! Element integrals are exact for piecewise-linear functions, so the
//! assembled forms carry no quadrature error. Matrices are indexed by the
//! mesh's degrees of freedom (vertices after periodic identification).

use crate::cholesky::SpdSolver;
use crate::mesh::{Mesh, Region, RegionFilter, TagSet};
use crate::par::Exec;
use crate::sparse::{dot, norm2, SymmetricSparseMatrix};
use crate::{Error, Result};

/// Dense nodal load vector.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadVector(pub Vec<f64>);

impl LoadVector {
    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }
}

fn corners(mesh: &Mesh, t: usize) -> [[f64; 2]; 3] {
    let [a, b, c] = mesh.triangles()[t];
    let v = mesh.vertices();
    [v[a], v[b], v[c]]
}

/// `∫_T ∇φ_i · ∇φ_j` for the three hat functions of a triangle.
pub fn element_stiffness(p: [[f64; 2]; 3]) -> [[f64; 3]; 3] {
    let area2 = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
    // Edge vectors opposite each vertex; ∇φ_i = rot(e_i) / (2|T|).
    let g = |i: usize| {
        let j = (i + 1) % 3;
        let k = (i + 2) % 3;
        [p[j][1] - p[k][1], p[k][0] - p[j][0]]
    };
    let grads = [g(0), g(1), g(2)];
    let mut k = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            k[i][j] = (grads[i][0] * grads[j][0] + grads[i][1] * grads[j][1]) / (2.0 * area2.abs());
        }
    }
    k
}

/// `∫_T φ_i φ_j`.
pub fn element_mass(p: [[f64; 2]; 3]) -> [[f64; 3]; 3] {
    let area = 0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1])).abs();
    let mut m = [[area / 12.0; 3]; 3];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = area / 6.0;
    }
    m
}

fn assemble_elements(
    mesh: &Mesh,
    filter: RegionFilter,
    exec: Exec,
    element: fn([[f64; 2]; 3]) -> [[f64; 3]; 3],
) -> SymmetricSparseMatrix {
    let selected: Vec<usize> = (0..mesh.n_triangles())
        .filter(|&t| filter.accepts(mesh.regions()[t]))
        .collect();
    let dofs = mesh.dof_map();
    let locals = exec.map(&selected, |&t| {
        let tri = mesh.triangles()[t];
        let ke = element(corners(mesh, t));
        let mut out = [(0usize, 0usize, 0.0f64); 9];
        for i in 0..3 {
            for j in 0..3 {
                out[3 * i + j] = (dofs[tri[i]], dofs[tri[j]], ke[i][j]);
            }
        }
        out
    });
    let triplets: Vec<_> = locals.into_iter().flatten().collect();
    SymmetricSparseMatrix::from_triplets(mesh.n_dofs(), &triplets, false)
}

/// Stiffness matrix `∫ ∇u · ∇v` over the selected region.
pub fn assemble_stiffness(mesh: &Mesh, filter: RegionFilter) -> SymmetricSparseMatrix {
    assemble_stiffness_with(mesh, filter, Exec::default())
}

pub fn assemble_stiffness_with(mesh: &Mesh, filter: RegionFilter, exec: Exec) -> SymmetricSparseMatrix {
    assemble_elements(mesh, filter, exec, element_stiffness)
}

/// Mass matrix `∫ u v` over the selected region.
pub fn assemble_mass(mesh: &Mesh, filter: RegionFilter) -> SymmetricSparseMatrix {
    assemble_mass_with(mesh, filter, Exec::default())
}

pub fn assemble_mass_with(mesh: &Mesh, filter: RegionFilter, exec: Exec) -> SymmetricSparseMatrix {
    assemble_elements(mesh, filter, exec, element_mass)
}

/// Boundary mass matrix `∫_Γ u v` over the edges whose tag is in `tags`.
pub fn assemble_boundary_mass(mesh: &Mesh, tags: TagSet) -> Result<SymmetricSparseMatrix> {
    let dofs = mesh.dof_map();
    let mut triplets = Vec::new();
    for e in mesh.boundary_edges().iter().filter(|e| tags.contains(e.tag)) {
        let len = mesh.edge_length(e);
        let [a, b] = e.vertices.map(|v| dofs[v]);
        triplets.extend([
            (a, a, len / 3.0),
            (b, b, len / 3.0),
            (a, b, len / 6.0),
            (b, a, len / 6.0),
        ]);
    }
    if triplets.is_empty() {
        return Err(Error::EmptyBoundarySelection);
    }
    Ok(SymmetricSparseMatrix::from_triplets(mesh.n_dofs(), &triplets, false))
}

/// Discrete harmonic extension into the fill of one hole.
#[derive(Debug, Clone, PartialEq)]
pub struct Extension {
    pub hole: usize,
    /// Degrees of freedom of the fill (boundary and interior), sorted.
    pub dofs: Vec<usize>,
    pub values: Vec<f64>,
    /// Dirichlet energy of the extension over the fill.
    pub energy: f64,
    /// Max stiffness residual over the interior fill nodes.
    pub residual: f64,
}

/// Triangles of every hole fill, grouped by hole index.
pub fn fill_triangles(mesh: &Mesh) -> Vec<Vec<usize>> {
    let mut groups = vec![Vec::new(); mesh.holes().len()];
    for (t, r) in mesh.regions().iter().enumerate() {
        if let Region::HoleFill(k) = *r {
            groups[k].push(t);
        }
    }
    groups
}

fn extend_on(mesh: &Mesh, hole: usize, tris: &[usize], data: &[f64]) -> Result<Extension> {
    if tris.is_empty() {
        return Err(Error::InvalidMesh(format!("hole {hole} has no fill triangles")));
    }
    let dof_map = mesh.dof_map();
    let mut dofs: Vec<usize> = tris
        .iter()
        .flat_map(|&t| mesh.triangles()[t])
        .map(|v| dof_map[v])
        .collect();
    dofs.sort_unstable();
    dofs.dedup();
    let local = |d: usize| dofs.binary_search(&d).expect("fill dof");
    let n = dofs.len();
    let mut triplets = Vec::with_capacity(9 * tris.len());
    for &t in tris {
        let tri = mesh.triangles()[t];
        let ke = element_stiffness(corners(mesh, t));
        for i in 0..3 {
            for j in 0..3 {
                triplets.push((local(dof_map[tri[i]]), local(dof_map[tri[j]]), ke[i][j]));
            }
        }
    }
    let k = SymmetricSparseMatrix::from_triplets(n, &triplets, false);
    let on_boundary = {
        let mut b = vec![false; n];
        for d in mesh.boundary_dofs(TagSet::Hole(hole)) {
            if let Ok(i) = dofs.binary_search(&d) {
                b[i] = true;
            }
        }
        b
    };
    let interior: Vec<usize> = (0..n).filter(|&i| !on_boundary[i]).collect();
    let mut values = vec![0.0; n];
    for i in 0..n {
        if on_boundary[i] {
            values[i] = data[dofs[i]];
        }
    }
    if !interior.is_empty() {
        let kii = k.restrict(&interior);
        let ku = k.matvec(&values);
        let rhs: Vec<f64> = interior.iter().map(|&i| -ku[i]).collect();
        let solver = SpdSolver::new(&kii, usize::MAX, 1e-14)?;
        let ui = solver.solve(&rhs)?;
        for (&i, v) in interior.iter().zip(ui) {
            values[i] = v;
        }
    }
    let kv = k.matvec(&values);
    let residual = interior.iter().map(|&i| kv[i].abs()).fold(0.0, f64::max);
    let energy = dot(&values, &kv);
    Ok(Extension {
        hole,
        dofs,
        values,
        energy,
        residual,
    })
}

/// Harmonically extend the nodal data `data` (indexed by dof; only the values
/// on `∂T_hole` are read) into the fill of `hole`.
pub fn solve_harmonic_extension(mesh: &Mesh, hole: usize, data: &[f64]) -> Result<Extension> {
    if !mesh.has_fill() {
        return Err(Error::InvalidMesh("mesh was built without hole fills".into()));
    }
    if data.len() != mesh.n_dofs() {
        return Err(Error::DimensionMismatch(format!("data has {} entries, mesh {}", data.len(), mesh.n_dofs())));
    }
    let tris: Vec<usize> = (0..mesh.n_triangles())
        .filter(|&t| mesh.regions()[t] == Region::HoleFill(hole))
        .collect();
    extend_on(mesh, hole, &tris, data)
}

/// Extend `data` into every hole fill.
pub fn extend_into_holes(mesh: &Mesh, data: &[f64], exec: Exec) -> Result<Vec<Extension>> {
    if !mesh.has_fill() {
        return Err(Error::InvalidMesh("mesh was built without hole fills".into()));
    }
    if data.len() != mesh.n_dofs() {
        return Err(Error::DimensionMismatch(format!("data has {} entries, mesh {}", data.len(), mesh.n_dofs())));
    }
    let groups = fill_triangles(mesh);
    exec.map_range(groups.len(), |k| extend_on(mesh, k, &groups[k], data))
        .into_iter()
        .collect()
}

/// Solution of the periodic cell problem
/// `∫ ∇ψ·∇V = -c ∫ V + ∫_{∂hole} V`, `∫ ψ = 0`.
#[derive(Debug, Clone)]
pub struct CellSolution {
    pub psi: Vec<f64>,
    pub h1_norm: f64,
    pub l2_norm: f64,
    pub dirichlet_energy: f64,
    /// Compatibility constant from the discrete geometry: hole perimeter over cell area.
    pub c_eps: f64,
    pub hole_perimeter: f64,
    pub cell_area: f64,
    pub load_sum: f64,
    /// `‖K ψ - f‖_2`.
    pub residual: f64,
    pub mean: f64,
}

/// Assemble the cell-problem load for a given compatibility constant.
pub fn cell_load(mesh: &Mesh, c_eps: f64) -> Result<LoadVector> {
    let m = assemble_mass(mesh, RegionFilter::All);
    let b = assemble_boundary_mass(mesh, TagSet::Holes)?;
    let ones = vec![1.0; mesh.n_dofs()];
    let m1 = m.matvec(&ones);
    let b1 = b.matvec(&ones);
    Ok(LoadVector(m1.iter().zip(&b1).map(|(m, b)| -c_eps * m + b).collect()))
}

/// Solve the cell problem on a punctured torus cell. The system is made
/// nonsingular by pinning the first dof; the mean is removed afterwards.
pub fn solve_cell_problem(mesh: &Mesh) -> Result<CellSolution> {
    if mesh.has_tag(TagSet::Outer) || !mesh.has_tag(TagSet::Holes) {
        return Err(Error::InvalidMesh(
            "cell problem needs a periodic cell whose only boundary is the hole".into(),
        ));
    }
    let k = assemble_stiffness(mesh, RegionFilter::All);
    let m = assemble_mass(mesh, RegionFilter::All);
    let hole_perimeter = mesh.boundary_length(TagSet::Holes);
    let cell_area = mesh.area(RegionFilter::All);
    let c_eps = hole_perimeter / cell_area;
    let load = cell_load(mesh, c_eps)?;
    let load_sum = load.sum();
    if load_sum.abs() > 1e-10 {
        return Err(Error::IncompatibleLoad(load_sum));
    }
    let n = mesh.n_dofs();
    let free: Vec<usize> = (1..n).collect();
    let kr = k.restrict(&free);
    let rhs: Vec<f64> = free.iter().map(|&i| load.0[i]).collect();
    let solver = SpdSolver::new(&kr, usize::MAX, 1e-14)?;
    let sol = solver.solve(&rhs)?;
    let mut psi = vec![0.0; n];
    for (&i, v) in free.iter().zip(sol) {
        psi[i] = v;
    }
    let ones = vec![1.0; n];
    let mean = m.bilinear(&ones, &psi) / cell_area;
    psi.iter_mut().for_each(|v| *v -= mean);
    let kpsi = k.matvec(&psi);
    let r: Vec<f64> = kpsi.iter().zip(&load.0).map(|(a, b)| a - b).collect();
    let dirichlet_energy = dot(&psi, &kpsi);
    let l2_sq = m.quad_form(&psi);
    Ok(CellSolution {
        h1_norm: (dirichlet_energy + l2_sq).sqrt(),
        l2_norm: l2_sq.sqrt(),
        dirichlet_energy,
        c_eps,
        hole_perimeter,
        cell_area,
        load_sum,
        residual: norm2(&r),
        mean: m.bilinear(&ones, &psi) / cell_area,
        psi,
    })
}
