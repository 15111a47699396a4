//! Structured conforming triangulations with tagged boundaries.
//!
//! Every generator in this module is a pure function of its inputs and returns
//! an immutable [`Mesh`]. Holes are regular polygons inscribed in their circles;
//! comparisons with circular geometry therefore carry the chord defect, see
//! [`chord_perimeter_factor`] and [`chord_area_factor`].

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use crate::{Error, Result};

/// Tag carried by a boundary edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BoundaryTag {
    Outer,
    Hole(usize),
}

/// Region tag of a triangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Region {
    Matrix,
    HoleFill(usize),
}

/// Selects triangles by region.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionFilter {
    Matrix,
    /// Every hole fill.
    Fill,
    /// The fill of one hole.
    FillOf(usize),
    All,
}

impl RegionFilter {
    pub fn accepts(self, region: Region) -> bool {
        match (self, region) {
            (RegionFilter::All, _) => true,
            (RegionFilter::Matrix, Region::Matrix) => true,
            (RegionFilter::Fill, Region::HoleFill(_)) => true,
            (RegionFilter::FillOf(k), Region::HoleFill(j)) => k == j,
            _ => false,
        }
    }
}

/// Selects boundary edges by tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TagSet {
    All,
    Outer,
    Holes,
    Hole(usize),
}

impl TagSet {
    pub fn contains(self, tag: BoundaryTag) -> bool {
        match (self, tag) {
            (TagSet::All, _) => true,
            (TagSet::Outer, BoundaryTag::Outer) => true,
            (TagSet::Holes, BoundaryTag::Hole(_)) => true,
            (TagSet::Hole(k), BoundaryTag::Hole(j)) => k == j,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryEdge {
    pub vertices: [usize; 2],
    pub tag: BoundaryTag,
}

/// Circular hole approximated by the polygon of its tagged boundary edges.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hole {
    pub center: [f64; 2],
    pub radius: f64,
}

/// Square lattice of perforation cells `ε k + [-ε/2, ε/2]^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lattice {
    pub epsilon: f64,
    /// Number of lattice steps along x and y (`width / ε`, `height / ε`).
    pub steps: [usize; 2],
}

/// Conforming triangulation with boundary tags, region tags and optional
/// periodic vertex identification.
#[derive(Debug, Clone)]
pub struct Mesh {
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    regions: Vec<Region>,
    boundary_edges: Vec<BoundaryEdge>,
    /// `(image, source)`: the image vertex is identified with the source.
    periodic_pairs: Vec<(usize, usize)>,
    holes: Vec<Hole>,
    lattice: Option<Lattice>,
    dofs: Vec<usize>,
    n_dofs: usize,
}

impl Mesh {
    /// Assemble a mesh from raw parts and check its invariants.
    pub fn new(
        vertices: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        regions: Vec<Region>,
        boundary_edges: Vec<BoundaryEdge>,
        periodic_pairs: Vec<(usize, usize)>,
    ) -> Result<Self> {
        let mesh = Self::from_parts(vertices, triangles, regions, boundary_edges, periodic_pairs);
        mesh.validate()?;
        Ok(mesh)
    }

    fn from_parts(
        vertices: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        regions: Vec<Region>,
        boundary_edges: Vec<BoundaryEdge>,
        periodic_pairs: Vec<(usize, usize)>,
    ) -> Self {
        let (dofs, n_dofs) = identify(vertices.len(), &periodic_pairs);
        Mesh {
            vertices,
            triangles,
            regions,
            boundary_edges,
            periodic_pairs,
            holes: Vec::new(),
            lattice: None,
            dofs,
            n_dofs,
        }
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }
    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }
    pub fn regions(&self) -> &[Region] {
        &self.regions
    }
    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }
    pub fn periodic_pairs(&self) -> &[(usize, usize)] {
        &self.periodic_pairs
    }
    pub fn holes(&self) -> &[Hole] {
        &self.holes
    }
    pub fn lattice(&self) -> Option<Lattice> {
        self.lattice
    }
    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }
    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    /// Degree of freedom of each vertex after periodic identification.
    pub fn dof_map(&self) -> &[usize] {
        &self.dofs
    }

    pub fn n_dofs(&self) -> usize {
        self.n_dofs
    }

    pub fn has_fill(&self) -> bool {
        self.regions.iter().any(|r| matches!(r, Region::HoleFill(_)))
    }

    pub fn has_tag(&self, set: TagSet) -> bool {
        self.boundary_edges.iter().any(|e| set.contains(e.tag))
    }

    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        signed_area(self.vertices[a], self.vertices[b], self.vertices[c])
    }

    pub fn area(&self, filter: RegionFilter) -> f64 {
        (0..self.triangles.len())
            .filter(|&t| filter.accepts(self.regions[t]))
            .map(|t| self.signed_area(t))
            .sum()
    }

    pub fn edge_length(&self, e: &BoundaryEdge) -> f64 {
        let [a, b] = e.vertices;
        dist(self.vertices[a], self.vertices[b])
    }

    pub fn boundary_length(&self, set: TagSet) -> f64 {
        self.boundary_edges
            .iter()
            .filter(|e| set.contains(e.tag))
            .map(|e| self.edge_length(e))
            .sum()
    }

    /// Sorted degrees of freedom touched by triangles accepted by `filter`.
    pub fn dofs_in(&self, filter: RegionFilter) -> Vec<usize> {
        let mut used = vec![false; self.n_dofs];
        for (t, tri) in self.triangles.iter().enumerate() {
            if filter.accepts(self.regions[t]) {
                for &v in tri {
                    used[self.dofs[v]] = true;
                }
            }
        }
        (0..self.n_dofs).filter(|&d| used[d]).collect()
    }

    /// Degrees of freedom on the boundary edges selected by `set`, sorted.
    pub fn boundary_dofs(&self, set: TagSet) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .boundary_edges
            .iter()
            .filter(|e| set.contains(e.tag))
            .flat_map(|e| e.vertices)
            .map(|v| self.dofs[v])
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Index of the hole whose lattice cell contains `p`, if any.
    pub fn hole_cell_of(&self, p: [f64; 2]) -> Option<usize> {
        let lat = self.lattice?;
        let kx = (p[0] / lat.epsilon).round() as isize;
        let ky = (p[1] / lat.epsilon).round() as isize;
        let nx = lat.steps[0] as isize;
        let ny = lat.steps[1] as isize;
        if self.holes.is_empty() || kx < 1 || ky < 1 || kx > nx - 1 || ky > ny - 1 {
            return None;
        }
        Some(((ky - 1) * (nx - 1) + (kx - 1)) as usize)
    }

    /// Unique undirected edges after periodic identification.
    fn dof_edges(&self) -> HashMap<(usize, usize), Vec<usize>> {
        let mut edges: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for (t, tri) in self.triangles.iter().enumerate() {
            for i in 0..3 {
                let a = self.dofs[tri[i]];
                let b = self.dofs[tri[(i + 1) % 3]];
                edges.entry((a.min(b), a.max(b))).or_default().push(t);
            }
        }
        edges
    }

    /// `V - E + F` of the complex after periodic identification.
    pub fn euler_characteristic(&self) -> i64 {
        self.n_dofs as i64 - self.dof_edges().len() as i64 + self.triangles.len() as i64
    }

    /// Check orientation, conformity and tag invariants.
    pub fn validate(&self) -> Result<()> {
        let nv = self.vertices.len();
        if self.regions.len() != self.triangles.len() {
            return Err(Error::InvalidMesh("region tag count differs from triangle count".into()));
        }
        for (t, tri) in self.triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= nv) {
                return Err(Error::InvalidMesh(format!("triangle {t} references a missing vertex")));
            }
            let area = self.signed_area(t);
            if area.is_nan() || area <= 0.0 {
                return Err(Error::InvalidMesh(format!("triangle {t} has non-positive area {area:e}")));
            }
        }
        let n_holes = self.holes.len();
        let edges = self.dof_edges();
        let mut tagged: HashMap<(usize, usize), BoundaryTag> = HashMap::new();
        for e in &self.boundary_edges {
            if let BoundaryTag::Hole(k) = e.tag {
                if k >= n_holes.max(1) {
                    return Err(Error::InvalidMesh(format!("edge tagged with unknown hole {k}")));
                }
            }
            let a = self.dofs[e.vertices[0]];
            let b = self.dofs[e.vertices[1]];
            let key = (a.min(b), a.max(b));
            if tagged.insert(key, e.tag).is_some() {
                return Err(Error::InvalidMesh(format!("boundary edge {key:?} tagged twice")));
            }
            let Some(adj) = edges.get(&key) else {
                return Err(Error::InvalidMesh(format!("boundary edge {key:?} is not a triangle edge")));
            };
            let matrix = adj.iter().filter(|&&t| self.regions[t] == Region::Matrix).count();
            let fill = adj.len() - matrix;
            let ok = match (matrix, fill) {
                (1, 0) => true,
                (1, 1) => matches!(e.tag, BoundaryTag::Hole(_)),
                _ => false,
            };
            if !ok {
                return Err(Error::InvalidMesh(format!(
                    "boundary edge {key:?} has {matrix} matrix and {fill} fill neighbours"
                )));
            }
        }
        for (key, adj) in &edges {
            match adj.len() {
                1 if !tagged.contains_key(key) => {
                    return Err(Error::InvalidMesh(format!("untagged boundary edge {key:?}")));
                }
                1 | 2 => {}
                n => {
                    return Err(Error::InvalidMesh(format!("edge {key:?} shared by {n} triangles")));
                }
            }
        }
        Ok(())
    }

    /// Plain-text export: `VERTICES`, `TRIANGLES`, `EDGES`, `PERIODIC` sections.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "VERTICES {}", self.vertices.len());
        for v in &self.vertices {
            let _ = writeln!(s, "{} {}", fmt17(v[0]), fmt17(v[1]));
        }
        let _ = writeln!(s, "TRIANGLES {}", self.triangles.len());
        for (t, r) in self.triangles.iter().zip(&self.regions) {
            let region = match r {
                Region::Matrix => "matrix".to_string(),
                Region::HoleFill(k) => format!("fill {k}"),
            };
            let _ = writeln!(s, "{} {} {} {}", t[0], t[1], t[2], region);
        }
        let _ = writeln!(s, "EDGES {}", self.boundary_edges.len());
        for e in &self.boundary_edges {
            let tag = match e.tag {
                BoundaryTag::Outer => "outer".to_string(),
                BoundaryTag::Hole(k) => format!("hole {k}"),
            };
            let _ = writeln!(s, "{} {} {}", e.vertices[0], e.vertices[1], tag);
        }
        let _ = writeln!(s, "PERIODIC {}", self.periodic_pairs.len());
        for (a, b) in &self.periodic_pairs {
            let _ = writeln!(s, "{a} {b}");
        }
        s
    }

    /// Short content hash of the text export.
    pub fn checksum(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Decimal with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

fn signed_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Union-find over periodic pairs, compacted to `0..n_dofs` in vertex order.
fn identify(n: usize, pairs: &[(usize, usize)]) -> (Vec<usize>, usize) {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for &(a, b) in pairs {
        let ra = find(&mut parent, a);
        let rb = find(&mut parent, b);
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    let mut id = vec![usize::MAX; n];
    let mut dofs = vec![0; n];
    let mut next = 0;
    for v in 0..n {
        let r = find(&mut parent, v);
        if id[r] == usize::MAX {
            id[r] = next;
            next += 1;
        }
        dofs[v] = id[r];
    }
    (dofs, next)
}

/// Perimeter of the inscribed regular `n`-gon relative to its circle.
pub fn chord_perimeter_factor(n: usize) -> f64 {
    let t = PI / n as f64;
    t.sin() / t
}

/// Area of the inscribed regular `n`-gon relative to its disk.
pub fn chord_area_factor(n: usize) -> f64 {
    let t = 2.0 * PI / n as f64;
    t.sin() / t
}

/// Hole radius in the critical regime, `r = (β ε^d)^{1/(d-1)}`.
pub fn hole_radius(epsilon: f64, beta: f64, dim: u32) -> Result<f64> {
    if !(epsilon > 0.0) || !(beta >= 0.0) || dim < 2 {
        return Err(Error::InvalidParameter(format!(
            "need epsilon > 0, beta >= 0, dim >= 2 (got {epsilon}, {beta}, {dim})"
        )));
    }
    let d = dim as f64;
    let r = (beta * epsilon.powf(d)).powf(1.0 / (d - 1.0));
    if r >= epsilon / 2.0 {
        // r(ε) = β^{1/(d-1)} ε^{d/(d-1)} < ε/2  <=>  ε < (1 / (2 β^{1/(d-1)}))^{d-1}
        let max_epsilon = (0.5 / beta.powf(1.0 / (d - 1.0))).powf(d - 1.0);
        return Err(Error::CriticalRadiusTooLarge {
            epsilon,
            beta,
            radius: r,
            max_epsilon,
        });
    }
    Ok(r)
}

/// Perforation parameters: cell size, critical-regime parameter and the
/// discretisation of each perforated cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerforationSpec {
    pub epsilon: f64,
    pub beta: f64,
    pub dim: u32,
    pub r_eps: f64,
    /// Polygon resolution of each hole; always `4 * nodes_per_cell_edge`.
    pub n_hole_segments: usize,
    /// Segments along each cell edge (even).
    pub nodes_per_cell_edge: usize,
    /// Rings between the hole polygon and the cell boundary.
    pub hole_rings: usize,
    /// Rings inside a filled hole.
    pub fill_rings: usize,
}

impl PerforationSpec {
    /// Two-dimensional spec with default resolution (8 segments per cell
    /// edge, 32-gon holes).
    pub fn new(epsilon: f64, beta: f64) -> Result<Self> {
        Self::with_resolution(epsilon, beta, 8, 6)
    }

    pub fn with_resolution(
        epsilon: f64,
        beta: f64,
        nodes_per_cell_edge: usize,
        hole_rings: usize,
    ) -> Result<Self> {
        let r_eps = hole_radius(epsilon, beta, 2)?;
        if nodes_per_cell_edge < 2 || nodes_per_cell_edge % 2 != 0 {
            return Err(Error::InvalidParameter(format!(
                "nodes_per_cell_edge must be even and >= 2 (got {nodes_per_cell_edge})"
            )));
        }
        if hole_rings == 0 {
            return Err(Error::InvalidParameter("hole_rings must be positive".into()));
        }
        Ok(PerforationSpec {
            epsilon,
            beta,
            dim: 2,
            r_eps,
            n_hole_segments: 4 * nodes_per_cell_edge,
            nodes_per_cell_edge,
            hole_rings,
            fill_rings: (nodes_per_cell_edge / 4).max(1),
        })
    }

    /// Number of lattice steps `side / ε`, or `NonAlignedLattice`.
    pub fn steps(&self, side: f64) -> Result<usize> {
        let q = side / self.epsilon;
        let n = q.round();
        if n < 2.0 || (q - n).abs() > 1e-9 * q.max(1.0) {
            return Err(Error::NonAlignedLattice {
                epsilon: self.epsilon,
                side,
            });
        }
        Ok(n as usize)
    }

    /// Centres `ε k` of the cells strictly inside `[0, width] x [0, height]`,
    /// row by row; empty when `β = 0`.
    pub fn hole_centers(&self, width: f64, height: f64) -> Result<Vec<[f64; 2]>> {
        let nx = self.steps(width)?;
        let ny = self.steps(height)?;
        if self.r_eps <= 0.0 {
            return Ok(Vec::new());
        }
        let mut out = Vec::with_capacity((nx - 1) * (ny - 1));
        for ky in 1..ny {
            for kx in 1..nx {
                out.push([kx as f64 * self.epsilon, ky as f64 * self.epsilon]);
            }
        }
        Ok(out)
    }
}

/// Structured `nx x ny` grid of `[0, width] x [0, height]`, two triangles per
/// cell, boundary tagged `Outer`.
pub fn build_rectangle_grid(width: f64, height: f64, nx: usize, ny: usize) -> Result<Mesh> {
    if !(width > 0.0 && height > 0.0) || nx == 0 || ny == 0 {
        return Err(Error::InvalidParameter(format!(
            "rectangle needs positive sizes and cell counts (got {width}x{height}, {nx}x{ny})"
        )));
    }
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push([width * i as f64 / nx as f64, height * j as f64 / ny as f64]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            triangles.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            triangles.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    let mut edges = Vec::new();
    let outer = |a, b| BoundaryEdge {
        vertices: [a, b],
        tag: BoundaryTag::Outer,
    };
    for i in 0..nx {
        edges.push(outer(id(i, 0), id(i + 1, 0)));
        edges.push(outer(id(i + 1, ny), id(i, ny)));
    }
    for j in 0..ny {
        edges.push(outer(id(nx, j), id(nx, j + 1)));
        edges.push(outer(id(0, j + 1), id(0, j)));
    }
    let regions = vec![Region::Matrix; triangles.len()];
    Mesh::new(vertices, triangles, regions, edges, Vec::new())
}

/// Structured polar mesh of the disk (`inner_radius = 0`) or the annulus
/// `B(0, outer) \ B(0, inner)`. The disk is closed at the centre with a fan.
pub fn build_polar_mesh(
    inner_radius: f64,
    outer_radius: f64,
    n_rings: usize,
    n_sectors: usize,
) -> Result<Mesh> {
    if !(inner_radius >= 0.0) || !(inner_radius < outer_radius) {
        return Err(Error::DegenerateAnnulus {
            inner: inner_radius,
            outer: outer_radius,
        });
    }
    if n_rings == 0 || n_sectors < 8 {
        return Err(Error::InvalidParameter(format!(
            "polar mesh needs n_rings >= 1 and n_sectors >= 8 (got {n_rings}, {n_sectors})"
        )));
    }
    let disk = inner_radius == 0.0;
    let angle = |j: usize| 2.0 * PI * (j % n_sectors) as f64 / n_sectors as f64;
    let mut vertices = Vec::new();
    let mut rings: Vec<Vec<usize>> = Vec::new();
    let first = if disk {
        vertices.push([0.0, 0.0]);
        1
    } else {
        0
    };
    for i in first..=n_rings {
        let rad = inner_radius + (outer_radius - inner_radius) * i as f64 / n_rings as f64;
        let ring: Vec<usize> = (0..n_sectors)
            .map(|j| {
                vertices.push([rad * angle(j).cos(), rad * angle(j).sin()]);
                vertices.len() - 1
            })
            .collect();
        rings.push(ring);
    }
    let mut triangles = Vec::new();
    if disk {
        let r1 = &rings[0];
        for j in 0..n_sectors {
            triangles.push([0, r1[j], r1[(j + 1) % n_sectors]]);
        }
    }
    for w in rings.windows(2) {
        quad_strip(&vertices, &w[0], &w[1], &mut triangles);
    }
    let mut edges = Vec::new();
    let outer = rings.last().expect("at least one ring");
    for j in 0..n_sectors {
        edges.push(BoundaryEdge {
            vertices: [outer[j], outer[(j + 1) % n_sectors]],
            tag: BoundaryTag::Outer,
        });
    }
    let mut holes = Vec::new();
    if !disk {
        let inner = &rings[0];
        for j in 0..n_sectors {
            edges.push(BoundaryEdge {
                vertices: [inner[(j + 1) % n_sectors], inner[j]],
                tag: BoundaryTag::Hole(0),
            });
        }
        holes.push(Hole {
            center: [0.0, 0.0],
            radius: inner_radius,
        });
    }
    let regions = vec![Region::Matrix; triangles.len()];
    let mut mesh = Mesh::from_parts(vertices, triangles, regions, edges, Vec::new());
    mesh.holes = holes;
    mesh.validate()?;
    Ok(mesh)
}

/// Triangulate the band between two closed loops of equal length whose
/// indices advance counter-clockwise, `inner` nearer the centre. Each quad is
/// split along its shorter diagonal.
fn quad_strip(vertices: &[[f64; 2]], inner: &[usize], outer: &[usize], out: &mut Vec<[usize; 3]>) {
    let n = inner.len();
    for j in 0..n {
        let a = inner[j];
        let b = inner[(j + 1) % n];
        let c = outer[(j + 1) % n];
        let d = outer[j];
        if dist(vertices[a], vertices[c]) <= dist(vertices[b], vertices[d]) {
            out.push([a, d, c]);
            out.push([a, c, b]);
        } else {
            out.push([a, d, b]);
            out.push([d, c, b]);
        }
    }
}

/// Offsets of the `4n` nodes on the boundary of the square `[-1, 1]^2`,
/// counter-clockwise from the bottom-left corner.
fn square_loop(n: usize) -> Vec<[f64; 2]> {
    let step = 2.0 / n as f64;
    let mut out = Vec::with_capacity(4 * n);
    for j in 0..n {
        out.push([-1.0 + step * j as f64, -1.0]);
    }
    for j in 0..n {
        out.push([1.0, -1.0 + step * j as f64]);
    }
    for j in 0..n {
        out.push([1.0 - step * j as f64, 1.0]);
    }
    for j in 0..n {
        out.push([-1.0, 1.0 - step * j as f64]);
    }
    out
}

/// Rings of a perforated cell interpolated between the hole polygon and the
/// cell boundary loop. Returns the hole polygon's vertex ids.
#[allow(clippy::too_many_arguments)]
fn ring_cell(
    vertices: &mut Vec<[f64; 2]>,
    triangles: &mut Vec<[usize; 3]>,
    center: [f64; 2],
    half: f64,
    boundary: &[usize],
    radius: f64,
    rings: usize,
) -> Vec<usize> {
    let m = boundary.len();
    let hole_pt = |q: usize| {
        let th = -0.75 * PI + 2.0 * PI * q as f64 / m as f64;
        [center[0] + radius * th.cos(), center[1] + radius * th.sin()]
    };
    // Geometric grading: layer thickness grows by `ratio` from the hole outwards.
    let ratio = (half / radius).powf(1.0 / rings as f64).max(1.0 + 1e-9);
    let frac = |i: usize| (ratio.powi(i as i32) - 1.0) / (ratio.powi(rings as i32) - 1.0);
    let mut layers: Vec<Vec<usize>> = Vec::with_capacity(rings + 1);
    for i in 0..rings {
        let s = frac(i);
        let layer = (0..m)
            .map(|q| {
                let h = hole_pt(q);
                let b = vertices[boundary[q]];
                vertices.push([h[0] + s * (b[0] - h[0]), h[1] + s * (b[1] - h[1])]);
                vertices.len() - 1
            })
            .collect();
        layers.push(layer);
    }
    layers.push(boundary.to_vec());
    for w in layers.windows(2) {
        quad_strip(vertices, &w[0], &w[1], triangles);
    }
    layers.swap_remove(0)
}

/// Triangulate the interior of a hole polygon with concentric rings and a
/// central fan. Triangles are pushed with region `HoleFill(k)`.
fn fill_polygon(
    vertices: &mut Vec<[f64; 2]>,
    triangles: &mut Vec<[usize; 3]>,
    regions: &mut Vec<Region>,
    center: [f64; 2],
    polygon: &[usize],
    rings: usize,
    k: usize,
) {
    let start = triangles.len();
    let mut outer = polygon.to_vec();
    for i in 1..rings {
        let s = (rings - i) as f64 / rings as f64;
        let inner: Vec<usize> = polygon
            .iter()
            .map(|&v| {
                let p = vertices[v];
                vertices.push([center[0] + s * (p[0] - center[0]), center[1] + s * (p[1] - center[1])]);
                vertices.len() - 1
            })
            .collect();
        quad_strip(vertices, &inner, &outer, triangles);
        outer = inner;
    }
    vertices.push(center);
    let c = vertices.len() - 1;
    let m = outer.len();
    for q in 0..m {
        triangles.push([c, outer[q], outer[(q + 1) % m]]);
    }
    regions.extend(std::iter::repeat_n(Region::HoleFill(k), triangles.len() - start));
}

/// Periodically perforated rectangle `[0, width] x [0, height]`.
///
/// The rectangle is covered by a uniform skeleton of spacing
/// `ε / nodes_per_cell_edge`; every lattice cell strictly inside the rectangle
/// is replaced by a graded ring mesh around its hole while the boundary layer
/// keeps the plain skeleton triangles. With `fill_holes` the hole interiors
/// are triangulated and tagged `HoleFill(k)`.
pub fn build_perforated_rectangle(
    width: f64,
    height: f64,
    spec: &PerforationSpec,
    fill_holes: bool,
) -> Result<Mesh> {
    if spec.dim != 2 {
        return Err(Error::InvalidParameter("meshes are two-dimensional".into()));
    }
    hole_radius(spec.epsilon, spec.beta, 2)?;
    let n = spec.nodes_per_cell_edge;
    if spec.n_hole_segments != 4 * n {
        return Err(Error::InvalidParameter(format!(
            "n_hole_segments must equal 4 * nodes_per_cell_edge ({} != {})",
            spec.n_hole_segments,
            4 * n
        )));
    }
    let sx = spec.steps(width)?;
    let sy = spec.steps(height)?;
    let centers = spec.hole_centers(width, height)?;
    let perforated = !centers.is_empty();
    let (gx, gy) = (sx * n, sy * n);
    let h = spec.epsilon / n as f64;
    let half = n / 2;
    // Lattice cell of a skeleton index along one axis, if it carries a hole.
    let cell = |i: usize, steps: usize| -> Option<usize> {
        let k = (i + half) / n;
        (perforated && k >= 1 && k < steps).then_some(k)
    };
    let inside = |i: usize, j: usize| {
        (i + half) % n != 0 && (j + half) % n != 0 && cell(i, sx).is_some() && cell(j, sy).is_some()
    };

    let mut vertices = Vec::new();
    let mut grid = vec![usize::MAX; (gx + 1) * (gy + 1)];
    let gid = |i: usize, j: usize| j * (gx + 1) + i;
    for j in 0..=gy {
        for i in 0..=gx {
            if !inside(i, j) {
                grid[gid(i, j)] = vertices.len();
                vertices.push([i as f64 * h, j as f64 * h]);
            }
        }
    }
    let mut triangles = Vec::new();
    for j in 0..gy {
        for i in 0..gx {
            let holed = cell(i, sx).is_some() && cell(j, sy).is_some();
            if holed {
                continue;
            }
            let (a, b) = (grid[gid(i, j)], grid[gid(i + 1, j)]);
            let (c, d) = (grid[gid(i + 1, j + 1)], grid[gid(i, j + 1)]);
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    let mut regions = vec![Region::Matrix; triangles.len()];
    let mut edges = Vec::new();
    for i in 0..gx {
        edges.push(BoundaryEdge {
            vertices: [grid[gid(i, 0)], grid[gid(i + 1, 0)]],
            tag: BoundaryTag::Outer,
        });
        edges.push(BoundaryEdge {
            vertices: [grid[gid(i + 1, gy)], grid[gid(i, gy)]],
            tag: BoundaryTag::Outer,
        });
    }
    for j in 0..gy {
        edges.push(BoundaryEdge {
            vertices: [grid[gid(gx, j)], grid[gid(gx, j + 1)]],
            tag: BoundaryTag::Outer,
        });
        edges.push(BoundaryEdge {
            vertices: [grid[gid(0, j + 1)], grid[gid(0, j)]],
            tag: BoundaryTag::Outer,
        });
    }

    let offsets = square_loop(n);
    let mut holes = Vec::with_capacity(centers.len());
    let mut polygons = Vec::with_capacity(centers.len());
    for (k, c) in centers.iter().enumerate() {
        let kx = (k % (sx - 1)) + 1;
        let ky = (k / (sx - 1)) + 1;
        let boundary: Vec<usize> = offsets
            .iter()
            .map(|o| {
                let i = (kx * n) as isize + (o[0] * half as f64).round() as isize;
                let j = (ky * n) as isize + (o[1] * half as f64).round() as isize;
                grid[gid(i as usize, j as usize)]
            })
            .collect();
        let start = triangles.len();
        let polygon = ring_cell(
            &mut vertices,
            &mut triangles,
            *c,
            spec.epsilon / 2.0,
            &boundary,
            spec.r_eps,
            spec.hole_rings,
        );
        regions.extend(std::iter::repeat_n(Region::Matrix, triangles.len() - start));
        let m = polygon.len();
        for q in 0..m {
            edges.push(BoundaryEdge {
                vertices: [polygon[(q + 1) % m], polygon[q]],
                tag: BoundaryTag::Hole(k),
            });
        }
        holes.push(Hole {
            center: *c,
            radius: spec.r_eps,
        });
        polygons.push(polygon);
    }
    if fill_holes {
        for (k, polygon) in polygons.iter().enumerate() {
            fill_polygon(
                &mut vertices,
                &mut triangles,
                &mut regions,
                centers[k],
                polygon,
                spec.fill_rings,
                k,
            );
        }
    }
    let mut mesh = Mesh::from_parts(vertices, triangles, regions, edges, Vec::new());
    mesh.holes = holes;
    mesh.lattice = Some(Lattice {
        epsilon: spec.epsilon,
        steps: [sx, sy],
    });
    mesh.validate()?;
    Ok(mesh)
}

/// Resolution of the punctured torus cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TorusCellParams {
    /// Segments along each edge of the unit cell; the hole is a `4n`-gon.
    pub nodes_per_edge: usize,
    pub rings: usize,
}

impl Default for TorusCellParams {
    fn default() -> Self {
        TorusCellParams {
            nodes_per_edge: 16,
            rings: 16,
        }
    }
}

/// Unit cell `[-1/2, 1/2]^2` minus the disk `B(0, rho)`, with opposite edges
/// identified. The only boundary component is the hole, tagged `Hole(0)`.
pub fn build_torus_cell(rho: f64, params: TorusCellParams) -> Result<Mesh> {
    if !(rho > 0.0 && rho < 0.5) {
        return Err(Error::DegenerateCell { rho });
    }
    let n = params.nodes_per_edge;
    if n < 3 || params.rings == 0 {
        return Err(Error::InvalidParameter(format!(
            "torus cell needs nodes_per_edge >= 3 and rings >= 1 (got {n}, {})",
            params.rings
        )));
    }
    let mut vertices: Vec<[f64; 2]> = square_loop(n).into_iter().map(|o| [0.5 * o[0], 0.5 * o[1]]).collect();
    let boundary: Vec<usize> = (0..4 * n).collect();
    let mut triangles = Vec::new();
    let polygon = ring_cell(&mut vertices, &mut triangles, [0.0, 0.0], 0.5, &boundary, rho, params.rings);
    let m = polygon.len();
    let edges = (0..m)
        .map(|q| BoundaryEdge {
            vertices: [polygon[(q + 1) % m], polygon[q]],
            tag: BoundaryTag::Hole(0),
        })
        .collect();
    // Identify x = 1/2 with x = -1/2 and y = 1/2 with y = -1/2.
    let mut pairs = Vec::new();
    let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
    for &v in &boundary {
        let p = vertices[v];
        for &w in &boundary {
            let q = vertices[w];
            if close(p[0], 0.5) && close(q[0], -0.5) && close(p[1], q[1]) {
                pairs.push((v, w));
            }
            if close(p[1], 0.5) && close(q[1], -0.5) && close(p[0], q[0]) {
                pairs.push((v, w));
            }
        }
    }
    let regions = vec![Region::Matrix; triangles.len()];
    let mut mesh = Mesh::from_parts(vertices, triangles, regions, edges, pairs);
    mesh.holes = vec![Hole {
        center: [0.0, 0.0],
        radius: rho,
    }];
    mesh.validate()?;
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn hole_radius_examples() {
        assert_relative_eq!(hole_radius(0.1, 1.0, 2).unwrap(), 0.01, epsilon = 1e-15);
        assert_relative_eq!(hole_radius(0.1, 2.0, 3).unwrap(), 2e-3f64.sqrt(), epsilon = 1e-15);
        assert!((hole_radius(0.1, 2.0, 3).unwrap() - 0.044721).abs() < 1e-6);
        match hole_radius(0.6, 1.0, 2) {
            Err(Error::CriticalRadiusTooLarge { max_epsilon, .. }) => {
                assert_relative_eq!(max_epsilon, 0.5, epsilon = 1e-15)
            }
            other => panic!("expected CriticalRadiusTooLarge, got {other:?}"),
        }
        assert_eq!(hole_radius(0.1, 0.0, 2).unwrap(), 0.0);
    }

    #[test]
    fn rectangle_grid_counts_and_areas() {
        let m = build_rectangle_grid(1.0, 1.0, 2, 2).unwrap();
        assert_eq!((m.n_vertices(), m.n_triangles(), m.boundary_edges().len()), (9, 8, 8));
        let m = build_rectangle_grid(1.0, 1.0, 7, 5).unwrap();
        assert!((m.area(RegionFilter::All) - 1.0).abs() < 1e-14);
        let m = build_rectangle_grid(2.0, 1.0, 2, 1).unwrap();
        for t in 0..m.n_triangles() {
            assert!((m.signed_area(t) - 0.5).abs() < 1e-15);
        }
        assert!((m.boundary_length(TagSet::Outer) - 6.0).abs() < 1e-14);
    }

    #[test]
    fn polar_meshes() {
        let m = build_polar_mesh(0.0, 1.0, 3, 16).unwrap();
        assert_eq!(m.n_vertices(), 1 + 3 * 16);
        let n = 256;
        let m = build_polar_mesh(0.5, 1.0, 4, n).unwrap();
        let f = chord_perimeter_factor(n);
        assert!((m.boundary_length(TagSet::Hole(0)) - 2.0 * PI * 0.5 * f).abs() < 1e-12);
        assert!((m.boundary_length(TagSet::Outer) - 2.0 * PI * f).abs() < 1e-12);
        let m = build_polar_mesh(0.0, 1.0, 64, 256).unwrap();
        let area = m.area(RegionFilter::All);
        assert!((area / PI - 1.0).abs() < 1e-3);
        assert!((area - PI * chord_area_factor(256)).abs() < 1e-12);
        assert!(matches!(
            build_polar_mesh(1.0, 1.0, 4, 16),
            Err(Error::DegenerateAnnulus { .. })
        ));
    }

    #[test]
    fn perforated_unit_square() {
        let spec = PerforationSpec::new(0.25, 1.0).unwrap();
        let centers = spec.hole_centers(1.0, 1.0).unwrap();
        assert_eq!(centers.len(), 9);
        for c in &centers {
            for x in c {
                assert!([0.25, 0.5, 0.75].iter().any(|v| (v - x).abs() < 1e-15));
            }
        }
        let m = build_perforated_rectangle(1.0, 1.0, &spec, false).unwrap();
        assert_eq!(m.holes().len(), 9);
        let expected = 9.0 * 2.0 * PI / 16.0 * chord_perimeter_factor(spec.n_hole_segments);
        assert!((m.boundary_length(TagSet::Holes) - expected).abs() < 1e-12);
        assert!((m.boundary_length(TagSet::Holes) - 3.534).abs() < 0.03);
        let hole_area = 9.0 * PI / 256.0 * chord_area_factor(spec.n_hole_segments);
        assert!((m.area(RegionFilter::All) - (1.0 - hole_area)).abs() < 1e-12);
        assert!((m.boundary_length(TagSet::Outer) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn perforated_with_fill_covers_everything() {
        let spec = PerforationSpec::new(0.25, 1.0).unwrap();
        let m = build_perforated_rectangle(1.0, 1.0, &spec, true).unwrap();
        assert!(m.has_fill());
        assert!((m.area(RegionFilter::All) - 1.0).abs() < 1e-12);
        let fill = m.area(RegionFilter::FillOf(4));
        assert!((fill - PI / 256.0 * chord_area_factor(32)).abs() < 1e-14);
    }

    #[test]
    fn zero_beta_gives_the_plain_grid() {
        let spec = PerforationSpec::new(0.25, 0.0).unwrap();
        let m = build_perforated_rectangle(1.0, 1.0, &spec, false).unwrap();
        let grid = build_rectangle_grid(1.0, 1.0, 32, 32).unwrap();
        assert!(m.holes().is_empty());
        assert_eq!(m.vertices(), grid.vertices());
        assert_eq!(m.triangles(), grid.triangles());
    }

    #[test]
    fn misaligned_lattice_is_rejected() {
        let spec = PerforationSpec::new(0.3, 1.0).unwrap();
        assert!(matches!(
            build_perforated_rectangle(1.0, 1.0, &spec, false),
            Err(Error::NonAlignedLattice { .. })
        ));
    }

    #[test]
    fn hole_cell_lookup() {
        let spec = PerforationSpec::new(0.25, 1.0).unwrap();
        let m = build_perforated_rectangle(1.0, 1.0, &spec, false).unwrap();
        assert_eq!(m.hole_cell_of([0.26, 0.24]), Some(0));
        assert_eq!(m.hole_cell_of([0.75, 0.5]), Some(5));
        assert_eq!(m.hole_cell_of([0.05, 0.5]), None);
        for (k, h) in m.holes().iter().enumerate() {
            assert_eq!(m.hole_cell_of(h.center), Some(k));
        }
    }

    #[test]
    fn torus_cell_topology() {
        for rho in [0.25, 0.05, 1.0 / 64.0] {
            let m = build_torus_cell(rho, TorusCellParams::default()).unwrap();
            assert_eq!(m.euler_characteristic(), -1);
            assert!(!m.periodic_pairs().is_empty());
            assert!(!m.has_tag(TagSet::Outer));
        }
        let m = build_torus_cell(0.25, TorusCellParams::default()).unwrap();
        let exact = 1.0 - PI / 16.0;
        assert!((m.area(RegionFilter::All) / exact - 1.0).abs() < 5e-3);
        assert!(matches!(
            build_torus_cell(0.5, TorusCellParams::default()),
            Err(Error::DegenerateCell { .. })
        ));
    }

    #[test]
    fn export_has_all_sections() {
        let m = build_torus_cell(0.2, TorusCellParams { nodes_per_edge: 4, rings: 1 }).unwrap();
        let text = m.to_text();
        for s in ["VERTICES", "TRIANGLES", "EDGES", "PERIODIC"] {
            assert!(text.contains(s));
        }
        assert_eq!(m.checksum().len(), 16);
    }
}
