//! Structured curvilinear quadrilateral blocks: element mappings, metric
//! terms, face geometry and boundary tagging.
//!
//! A block stores a geometry lattice of (g*ni+1) x (g*nj+1) points where g is
//! the mapping degree; element (i,j) takes its (g+1)^2 mapping nodes from that
//! lattice, so adjacent elements share edge geometry exactly.

mod builders;
mod io;

pub use builders::{build_cartesian_block, build_cylinder_block, build_ramp_block, CylinderExtents, RampExtents};
pub use io::{read_block, write_block};

use std::collections::BTreeMap;

use thiserror::Error;

use crate::basis::NodalBasis;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("invalid extent: {0}")]
    InvalidExtent(String),
    #[error("nonpositive jacobian in element ({i}, {j}) of grid {grid}: J = {jac}")]
    NonpositiveJacobian { grid: usize, i: usize, j: usize, jac: f64 },
    #[error("geometry construction failed: {0}")]
    Construction(String),
    #[error("block file parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Physical meaning of a block side or an individual face.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BoundaryTag {
    Inflow,
    Outflow,
    Wall,
    PostShockDirichlet,
    Periodic,
    Artificial,
}

impl BoundaryTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            BoundaryTag::Inflow => "inflow",
            BoundaryTag::Outflow => "outflow",
            BoundaryTag::Wall => "wall",
            BoundaryTag::PostShockDirichlet => "postshock",
            BoundaryTag::Periodic => "periodic",
            BoundaryTag::Artificial => "artificial",
        }
    }

    pub fn parse(s: &str) -> Result<Self, MeshError> {
        match s {
            "inflow" => Ok(BoundaryTag::Inflow),
            "outflow" => Ok(BoundaryTag::Outflow),
            "wall" => Ok(BoundaryTag::Wall),
            "postshock" => Ok(BoundaryTag::PostShockDirichlet),
            "periodic" => Ok(BoundaryTag::Periodic),
            "artificial" => Ok(BoundaryTag::Artificial),
            other => Err(MeshError::Parse(format!("unknown boundary tag `{other}`"))),
        }
    }
}

/// Element face by local side: South s=-1, East r=+1, North s=+1, West r=-1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Face {
    South = 0,
    East = 1,
    North = 2,
    West = 3,
}

pub const FACES: [Face; 4] = [Face::South, Face::East, Face::North, Face::West];

impl Face {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn opposite(self) -> Face {
        match self {
            Face::South => Face::North,
            Face::East => Face::West,
            Face::North => Face::South,
            Face::West => Face::East,
        }
    }

    pub fn from_index(k: usize) -> Face {
        FACES[k]
    }
}

/// A structured curvilinear quad block.
#[derive(Debug, Clone)]
pub struct StructuredBlock {
    pub id: usize,
    pub ni: usize,
    pub nj: usize,
    pub mapping_degree: usize,
    /// Geometry lattice, row-major over j: index jj*(g*ni+1) + ii.
    pub geom: Vec<[f64; 2]>,
    /// Side tags in face order [South, East, North, West].
    pub side_tags: [BoundaryTag; 4],
    /// Per-face overrides; used for hole boundaries and clipped band ends.
    pub face_tag_overrides: BTreeMap<(usize, usize), BoundaryTag>,
    /// Per-element activity, set once by hole cutting before time stepping.
    pub active: Vec<bool>,
}

impl StructuredBlock {
    pub fn num_elems(&self) -> usize {
        self.ni * self.nj
    }

    pub fn elem_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.ni && j < self.nj);
        j * self.ni + i
    }

    pub fn elem_ij(&self, e: usize) -> (usize, usize) {
        (e % self.ni, e / self.ni)
    }

    pub fn is_active(&self, e: usize) -> bool {
        self.active[e]
    }

    fn lattice_stride(&self) -> usize {
        self.mapping_degree * self.ni + 1
    }

    /// Geometry node (a,b) of element (i,j), a,b in 0..=g.
    pub fn geom_node(&self, i: usize, j: usize, a: usize, b: usize) -> [f64; 2] {
        let g = self.mapping_degree;
        let stride = self.lattice_stride();
        self.geom[(g * j + b) * stride + (g * i + a)]
    }

    /// Corner vertices of element e in CCW order starting at (r,s)=(-1,-1).
    pub fn corners(&self, e: usize) -> [[f64; 2]; 4] {
        let (i, j) = self.elem_ij(e);
        let g = self.mapping_degree;
        [
            self.geom_node(i, j, 0, 0),
            self.geom_node(i, j, g, 0),
            self.geom_node(i, j, g, g),
            self.geom_node(i, j, 0, g),
        ]
    }

    /// Evaluate the element mapping at reference point (r,s).
    pub fn map_eval(&self, e: usize, r: f64, s: f64) -> [f64; 2] {
        let (i, j) = self.elem_ij(e);
        let g = self.mapping_degree;
        let (lr, ls) = (geom_lagrange(g, r), geom_lagrange(g, s));
        let mut x = 0.0;
        let mut y = 0.0;
        for b in 0..=g {
            for a in 0..=g {
                let w = lr[a] * ls[b];
                let p = self.geom_node(i, j, a, b);
                x += w * p[0];
                y += w * p[1];
            }
        }
        [x, y]
    }

    /// Mapping derivatives [x_r, x_s, y_r, y_s] at (r,s).
    pub fn map_deriv(&self, e: usize, r: f64, s: f64) -> [f64; 4] {
        let (i, j) = self.elem_ij(e);
        let g = self.mapping_degree;
        let (lr, ls) = (geom_lagrange(g, r), geom_lagrange(g, s));
        let (dr, ds) = (geom_lagrange_deriv(g, r), geom_lagrange_deriv(g, s));
        let mut out = [0.0; 4];
        for b in 0..=g {
            for a in 0..=g {
                let p = self.geom_node(i, j, a, b);
                let wr = dr[a] * ls[b];
                let ws = lr[a] * ds[b];
                out[0] += wr * p[0];
                out[1] += ws * p[0];
                out[2] += wr * p[1];
                out[3] += ws * p[1];
            }
        }
        out
    }

    pub fn centroid(&self, e: usize) -> [f64; 2] {
        self.map_eval(e, 0.0, 0.0)
    }

    /// Bounding box of the element's geometry nodes, padded for edge curvature.
    pub fn elem_bbox(&self, e: usize) -> [f64; 4] {
        let (i, j) = self.elem_ij(e);
        let g = self.mapping_degree;
        let mut xmin = f64::INFINITY;
        let mut xmax = f64::NEG_INFINITY;
        let mut ymin = f64::INFINITY;
        let mut ymax = f64::NEG_INFINITY;
        for b in 0..=g {
            for a in 0..=g {
                let p = self.geom_node(i, j, a, b);
                xmin = xmin.min(p[0]);
                xmax = xmax.max(p[0]);
                ymin = ymin.min(p[1]);
                ymax = ymax.max(p[1]);
            }
        }
        let pad = 0.125 * ((xmax - xmin) + (ymax - ymin));
        [xmin - pad, xmax + pad, ymin - pad, ymax + pad]
    }

    /// Structured neighbor across a face, honoring periodic side tags.
    /// Returns None at physical boundaries.
    pub fn neighbor(&self, e: usize, face: Face) -> Option<usize> {
        let (i, j) = self.elem_ij(e);
        let (ni, nj) = (self.ni, self.nj);
        let periodic = |side: Face| self.side_tags[side.index()] == BoundaryTag::Periodic;
        match face {
            Face::South => {
                if j > 0 {
                    Some(self.elem_index(i, j - 1))
                } else if periodic(Face::South) {
                    Some(self.elem_index(i, nj - 1))
                } else {
                    None
                }
            }
            Face::North => {
                if j + 1 < nj {
                    Some(self.elem_index(i, j + 1))
                } else if periodic(Face::North) {
                    Some(self.elem_index(i, 0))
                } else {
                    None
                }
            }
            Face::West => {
                if i > 0 {
                    Some(self.elem_index(i - 1, j))
                } else if periodic(Face::West) {
                    Some(self.elem_index(ni - 1, j))
                } else {
                    None
                }
            }
            Face::East => {
                if i + 1 < ni {
                    Some(self.elem_index(i + 1, j))
                } else if periodic(Face::East) {
                    Some(self.elem_index(0, j))
                } else {
                    None
                }
            }
        }
    }

    /// Tag of a boundary (or deactivated-neighbor) face.
    pub fn face_tag(&self, e: usize, face: Face) -> BoundaryTag {
        if let Some(&t) = self.face_tag_overrides.get(&(e, face.index())) {
            return t;
        }
        self.side_tags[face.index()]
    }

    /// True when the face has no active neighbor (physical or artificial boundary).
    pub fn is_boundary_face(&self, e: usize, face: Face) -> bool {
        match self.neighbor(e, face) {
            None => true,
            Some(nb) => !self.active[nb],
        }
    }

    /// Verify J > 0 at the given quadrature nodes of all active elements.
    pub fn check_jacobians(&self, basis: &NodalBasis) -> Result<(), MeshError> {
        for e in 0..self.num_elems() {
            if !self.active[e] {
                continue;
            }
            for &s in &basis.rule.nodes {
                for &r in &basis.rule.nodes {
                    let d = self.map_deriv(e, r, s);
                    let jac = d[0] * d[3] - d[1] * d[2];
                    if !(jac > 0.0) {
                        let (i, j) = self.elem_ij(e);
                        return Err(MeshError::NonpositiveJacobian { grid: self.id, i, j, jac });
                    }
                }
            }
        }
        Ok(())
    }
}

/// Lagrange basis values on uniform geometry nodes, degree <= 2.
fn geom_lagrange(g: usize, t: f64) -> [f64; 3] {
    match g {
        1 => [0.5 * (1.0 - t), 0.5 * (1.0 + t), 0.0],
        2 => [0.5 * t * (t - 1.0), (1.0 - t) * (1.0 + t), 0.5 * t * (t + 1.0)],
        _ => panic!("unsupported mapping degree {g}"),
    }
}

fn geom_lagrange_deriv(g: usize, t: f64) -> [f64; 3] {
    match g {
        1 => [-0.5, 0.5, 0.0],
        2 => [t - 0.5, -2.0 * t, t + 0.5],
        _ => panic!("unsupported mapping degree {g}"),
    }
}

/// Precomputed geometry for one block: solution-node data on the (N+1)^2
/// collocation lattice plus flux-quadrature data on a possibly richer
/// (nq >= N+1) rule used to de-alias the nonlinear flux integrals.
///
/// Solution arrays are indexed elem*(n1d*n1d) + i*n1d + j with i the r-index;
/// quadrature volume arrays use nq in place of n1d, and face arrays are
/// indexed (elem*4 + face)*nq + k.
#[derive(Debug, Clone)]
pub struct GridGeometry {
    pub n1d: usize,
    pub nq: usize,
    /// The flux quadrature rule.
    pub quad: crate::basis::QuadratureRule1D,
    // Solution-node data (n1d per direction).
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub jac: Vec<f64>,
    // Flux-quadrature volume metric data (nq per direction).
    pub q_xr: Vec<f64>,
    pub q_xs: Vec<f64>,
    pub q_yr: Vec<f64>,
    pub q_ys: Vec<f64>,
    // Flux-quadrature face data (nq points per face).
    pub face_x: Vec<f64>,
    pub face_y: Vec<f64>,
    pub face_nx: Vec<f64>,
    pub face_ny: Vec<f64>,
    pub face_jf: Vec<f64>,
    /// Element areas and perimeters (quadrature-evaluated).
    pub area: Vec<f64>,
    pub perimeter: Vec<f64>,
    /// interp[k*n1d + i] = P_i(quad node k): nodal-to-quadrature interpolation.
    pub interp: Vec<f64>,
    /// deriv[k*n1d + i] = P_i'(quad node k).
    pub deriv: Vec<f64>,
}

impl GridGeometry {
    /// Geometry with collocated flux quadrature (nq = N+1).
    pub fn build(block: &StructuredBlock, basis: &NodalBasis) -> Result<Self, MeshError> {
        Self::build_with_quadrature(block, basis, 0)
    }

    /// Geometry with `quad_extra` additional flux-quadrature points per
    /// direction beyond the N+1 collocation points.
    pub fn build_with_quadrature(
        block: &StructuredBlock,
        basis: &NodalBasis,
        quad_extra: usize,
    ) -> Result<Self, MeshError> {
        let n1d = basis.num_nodes();
        let nq = n1d + quad_extra;
        let quad = crate::basis::gauss_legendre(nq).expect("valid rule");
        let nodes = &basis.rule.nodes;
        let ne = block.num_elems();
        let nv = ne * n1d * n1d;
        let nvq = ne * nq * nq;
        let nf = ne * 4 * nq;
        let mut g = GridGeometry {
            n1d,
            nq,
            quad: quad.clone(),
            x: vec![0.0; nv],
            y: vec![0.0; nv],
            jac: vec![0.0; nv],
            q_xr: vec![0.0; nvq],
            q_xs: vec![0.0; nvq],
            q_yr: vec![0.0; nvq],
            q_ys: vec![0.0; nvq],
            face_x: vec![0.0; nf],
            face_y: vec![0.0; nf],
            face_nx: vec![0.0; nf],
            face_ny: vec![0.0; nf],
            face_jf: vec![0.0; nf],
            area: vec![0.0; ne],
            perimeter: vec![0.0; ne],
            interp: basis.interp_matrix(&quad.nodes),
            deriv: basis.deriv_matrix_at(&quad.nodes),
        };

        for e in 0..ne {
            // Solution nodes: positions and Jacobians (mass matrix, norms).
            let base = e * n1d * n1d;
            let mut area = 0.0;
            for (a, &r) in nodes.iter().enumerate() {
                for (b, &s) in nodes.iter().enumerate() {
                    let idx = base + a * n1d + b;
                    let p = block.map_eval(e, r, s);
                    let d = block.map_deriv(e, r, s);
                    let jac = d[0] * d[3] - d[1] * d[2];
                    if block.active[e] && !(jac > 0.0) {
                        let (i, j) = block.elem_ij(e);
                        return Err(MeshError::NonpositiveJacobian { grid: block.id, i, j, jac });
                    }
                    g.x[idx] = p[0];
                    g.y[idx] = p[1];
                    g.jac[idx] = jac;
                    area += basis.rule.weights[a] * basis.rule.weights[b] * jac;
                }
            }
            g.area[e] = area;

            // Flux-quadrature volume metrics.
            let qbase = e * nq * nq;
            for (a, &r) in quad.nodes.iter().enumerate() {
                for (b, &s) in quad.nodes.iter().enumerate() {
                    let idx = qbase + a * nq + b;
                    let d = block.map_deriv(e, r, s);
                    let jac = d[0] * d[3] - d[1] * d[2];
                    if block.active[e] && !(jac > 0.0) {
                        let (i, j) = block.elem_ij(e);
                        return Err(MeshError::NonpositiveJacobian { grid: block.id, i, j, jac });
                    }
                    g.q_xr[idx] = d[0];
                    g.q_xs[idx] = d[1];
                    g.q_yr[idx] = d[2];
                    g.q_ys[idx] = d[3];
                }
            }

            let mut perim = 0.0;
            for face in FACES {
                let f = face.index();
                for (k, &t) in quad.nodes.iter().enumerate() {
                    let (r, s) = face_point(face, t);
                    let idx = (e * 4 + f) * nq + k;
                    let p = block.map_eval(e, r, s);
                    let d = block.map_deriv(e, r, s);
                    let (tx, ty) = match face {
                        Face::South | Face::North => (d[0], d[2]),
                        Face::East | Face::West => (d[1], d[3]),
                    };
                    let jf = (tx * tx + ty * ty).sqrt();
                    let (nx, ny) = match face {
                        Face::South => (ty / jf, -tx / jf),
                        Face::North => (-ty / jf, tx / jf),
                        Face::East => (ty / jf, -tx / jf),
                        Face::West => (-ty / jf, tx / jf),
                    };
                    g.face_x[idx] = p[0];
                    g.face_y[idx] = p[1];
                    g.face_nx[idx] = nx;
                    g.face_ny[idx] = ny;
                    g.face_jf[idx] = jf;
                    perim += quad.weights[k] * jf;
                }
            }
            g.perimeter[e] = perim;
        }
        Ok(g)
    }

    pub fn vol_index(&self, e: usize, a: usize, b: usize) -> usize {
        e * self.n1d * self.n1d + a * self.n1d + b
    }

    pub fn qvol_index(&self, e: usize, a: usize, b: usize) -> usize {
        e * self.nq * self.nq + a * self.nq + b
    }

    pub fn face_index(&self, e: usize, face: Face, k: usize) -> usize {
        (e * 4 + face.index()) * self.nq + k
    }

    /// A metric-based minimum element size, 2 * area / perimeter.
    pub fn h_min(&self, e: usize) -> f64 {
        2.0 * self.area[e] / self.perimeter[e]
    }
}

/// Result of Newton inversion of an element mapping.
#[derive(Debug, Clone, Copy)]
pub struct MapInversion {
    pub r: f64,
    pub s: f64,
    /// Final physical-space residual norm.
    pub residual: f64,
    pub converged: bool,
}

/// Invert the element mapping at a physical point by Newton iteration from
/// the element center. The returned reference coordinates may lie outside
/// [-1,1]^2; containment policy is the caller's.
pub fn invert_map(block: &StructuredBlock, e: usize, point: [f64; 2], tol: f64, max_iter: usize) -> MapInversion {
    let mut r = 0.0;
    let mut s = 0.0;
    let mut res = f64::INFINITY;
    for _ in 0..max_iter {
        let p = block.map_eval(e, r, s);
        let fx = p[0] - point[0];
        let fy = p[1] - point[1];
        res = (fx * fx + fy * fy).sqrt();
        if res <= tol {
            return MapInversion { r, s, residual: res, converged: true };
        }
        let d = block.map_deriv(e, r, s);
        let det = d[0] * d[3] - d[1] * d[2];
        if det.abs() < 1e-300 || !det.is_finite() {
            break;
        }
        let dr = (d[3] * fx - d[1] * fy) / det;
        let ds = (-d[2] * fx + d[0] * fy) / det;
        r -= dr;
        s -= ds;
        // Diverging iterates: bail out well outside any useful extrapolation range.
        if r.abs() > 10.0 || s.abs() > 10.0 {
            return MapInversion { r, s, residual: res, converged: false };
        }
    }
    // One more residual evaluation at the final iterate.
    let p = block.map_eval(e, r, s);
    let fx = p[0] - point[0];
    let fy = p[1] - point[1];
    res = (fx * fx + fy * fy).sqrt();
    MapInversion { r, s, residual: res, converged: res <= tol }
}

/// Reference coordinates of face quadrature point parameter t on a face.
pub fn face_point(face: Face, t: f64) -> (f64, f64) {
    match face {
        Face::South => (t, -1.0),
        Face::East => (1.0, t),
        Face::North => (t, 1.0),
        Face::West => (-1.0, t),
    }
}
