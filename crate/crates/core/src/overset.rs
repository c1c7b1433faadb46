//! Inter-grid communication: artificial-boundary quadrature point seeding,
//! spatial-index donor search, Newton inversion to local coordinates, cached
//! donor maps, per-stage state exchange and background-grid hole cutting.
//!
//! Donor local coordinates are stored once before time stepping; exchange is
//! a read-only gather evaluating each donor element's nodal polynomial.

use std::io::{BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use crate::basis::NodalBasis;
use crate::dg::{ArtificialFaces, Field};
use crate::mesh::{invert_map, BoundaryTag, Face, GridGeometry, StructuredBlock, FACES};

/// Containment slack on |r|, |s| <= 1.
pub const CONTAINMENT_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum OversetError {
    #[error("{count} artificial-boundary points found no donor; first few: {first:?}")]
    OrphanPoints {
        count: usize,
        first: Vec<OrphanPoint>,
    },
    #[error("donor element (grid {grid}, elem {elem}) was deactivated after map construction")]
    InvalidatedDonor { grid: usize, elem: usize },
    #[error("hole cut with margin {margin} leaves no overset interior ({ni} x {nj} cells)")]
    EmptyShrunkInterior { margin: usize, ni: usize, nj: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy)]
pub struct OrphanPoint {
    pub grid: usize,
    pub elem: usize,
    pub face: Face,
    pub k: usize,
    pub x: f64,
    pub y: f64,
}

/// K-d tree over element centroids answering candidate-element queries.
/// Containment is always confirmed by Newton inversion afterwards.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    /// Centroids reordered into tree order.
    pts: Vec<[f64; 2]>,
    /// Element index of each tree point.
    elems: Vec<usize>,
    /// Query ball radius guaranteeing no containing element is missed.
    radius: f64,
    bbox: [f64; 4],
}

pub fn build_spatial_index(block: &StructuredBlock) -> SpatialIndex {
    let ne = block.num_elems();
    let mut pts: Vec<[f64; 2]> = (0..ne).map(|e| block.centroid(e)).collect();
    let mut elems: Vec<usize> = (0..ne).collect();

    // Largest centroid-to-corner distance bounds how far a containing
    // element's centroid can be from the query point.
    let mut radius: f64 = 0.0;
    let mut bbox = [f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY];
    for e in 0..ne {
        let c = pts[e];
        for p in block.corners(e) {
            let d = ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)).sqrt();
            radius = radius.max(d);
            bbox[0] = bbox[0].min(p[0]);
            bbox[1] = bbox[1].max(p[0]);
            bbox[2] = bbox[2].min(p[1]);
            bbox[3] = bbox[3].max(p[1]);
        }
    }
    radius *= 1.0 + 1e-9;

    build_kd(&mut pts, &mut elems, 0);
    SpatialIndex {
        pts,
        elems,
        radius,
        bbox,
    }
}

fn build_kd(pts: &mut [[f64; 2]], elems: &mut [usize], axis: usize) {
    let n = pts.len();
    if n <= 1 {
        return;
    }
    let mid = n / 2;
    // Median split along the axis, ties broken by element index for determinism.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        pts[a][axis]
            .partial_cmp(&pts[b][axis])
            .unwrap()
            .then(elems[a].cmp(&elems[b]))
    });
    let new_pts: Vec<[f64; 2]> = order.iter().map(|&i| pts[i]).collect();
    let new_elems: Vec<usize> = order.iter().map(|&i| elems[i]).collect();
    pts.copy_from_slice(&new_pts);
    elems.copy_from_slice(&new_elems);

    let (lo_p, rest_p) = pts.split_at_mut(mid);
    let (_, hi_p) = rest_p.split_at_mut(1);
    let (lo_e, rest_e) = elems.split_at_mut(mid);
    let (_, hi_e) = rest_e.split_at_mut(1);
    build_kd(lo_p, lo_e, 1 - axis);
    build_kd(hi_p, hi_e, 1 - axis);
}

impl SpatialIndex {
    /// Elements whose centroid lies within the query ball, ascending element
    /// index. Empty when the point is outside the grid's padded bounding box.
    pub fn candidates(&self, p: [f64; 2]) -> Vec<usize> {
        let r = self.radius;
        if p[0] < self.bbox[0] - r
            || p[0] > self.bbox[1] + r
            || p[1] < self.bbox[2] - r
            || p[1] > self.bbox[3] + r
        {
            return Vec::new();
        }
        let mut out = Vec::new();
        self.ball_query(0, self.pts.len(), 0, p, r * r, &mut out);
        out.sort_unstable();
        out
    }

    fn ball_query(&self, lo: usize, hi: usize, axis: usize, p: [f64; 2], r2: f64, out: &mut Vec<usize>) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let c = self.pts[mid];
        let d2 = (c[0] - p[0]).powi(2) + (c[1] - p[1]).powi(2);
        if d2 <= r2 {
            out.push(self.elems[mid]);
        }
        let delta = p[axis] - c[axis];
        let (near_lo, near_hi, far_lo, far_hi) = if delta < 0.0 {
            (lo, mid, mid + 1, hi)
        } else {
            (mid + 1, hi, lo, mid)
        };
        self.ball_query(near_lo, near_hi, 1 - axis, p, r2, out);
        if delta * delta <= r2 {
            self.ball_query(far_lo, far_hi, 1 - axis, p, r2, out);
        }
    }
}

/// Newton inversion with containment semantics: Some((r, s)) when the point
/// lies inside the element within tolerance, None otherwise (never fatal).
pub fn newton_invert(block: &StructuredBlock, e: usize, point: [f64; 2]) -> Option<(f64, f64)> {
    let scale = point[0].abs().max(point[1].abs()).max(1.0);
    let inv = invert_map(block, e, point, 1e-12 * scale, 50);
    if inv.converged && inv.r.abs() <= 1.0 + CONTAINMENT_TOL && inv.s.abs() <= 1.0 + CONTAINMENT_TOL {
        Some((inv.r, inv.s))
    } else {
        None
    }
}

/// Locate the active element of a grid containing a point: first containing
/// element wins, ties broken by lowest element index.
pub fn locate_point(
    block: &StructuredBlock,
    index: &SpatialIndex,
    point: [f64; 2],
) -> Option<(usize, f64, f64)> {
    for e in index.candidates(point) {
        if !block.active[e] {
            continue;
        }
        if let Some((r, s)) = newton_invert(block, e, point) {
            return Some((e, r, s));
        }
    }
    None
}

/// Donor assignment for one artificial-boundary quadrature point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DonorPoint {
    pub donor_grid: usize,
    pub donor_elem: usize,
    pub r: f64,
    pub s: f64,
}

/// Donors for every artificial-boundary point of one grid, aligned with its
/// `ArtificialFaces` enumeration.
#[derive(Debug, Clone)]
pub struct DonorMap {
    pub grid_id: usize,
    pub points: Vec<DonorPoint>,
}

/// Per-grid context needed by donor search.
pub struct GridContext<'a> {
    pub block: &'a StructuredBlock,
    pub geom: &'a GridGeometry,
    pub index: &'a SpatialIndex,
    pub art: &'a ArtificialFaces,
}

/// Precompute donors for all artificial-boundary points of all grids; a point
/// is matched to the lowest (grid id, element index) containing active
/// element of any other grid. Orphans fail loudly.
pub fn build_donor_maps(grids: &[GridContext]) -> Result<Vec<DonorMap>, OversetError> {
    let mut maps = Vec::with_capacity(grids.len());
    let mut orphans = Vec::new();
    for g in grids {
        let n1d = g.art.n1d;
        let mut points = Vec::with_capacity(g.art.num_points());
        for &(e, face) in &g.art.faces {
            for k in 0..n1d {
                let gi = g.geom.face_index(e, face, k);
                let p = [g.geom.face_x[gi], g.geom.face_y[gi]];
                let mut found = None;
                for donor in grids.iter() {
                    if donor.block.id == g.block.id {
                        continue;
                    }
                    if let Some((de, r, s)) = locate_point(donor.block, donor.index, p) {
                        found = Some(DonorPoint {
                            donor_grid: donor.block.id,
                            donor_elem: de,
                            r,
                            s,
                        });
                        break;
                    }
                }
                match found {
                    Some(d) => points.push(d),
                    None => {
                        orphans.push(OrphanPoint {
                            grid: g.block.id,
                            elem: e,
                            face,
                            k,
                            x: p[0],
                            y: p[1],
                        });
                        points.push(DonorPoint {
                            donor_grid: usize::MAX,
                            donor_elem: usize::MAX,
                            r: 0.0,
                            s: 0.0,
                        });
                    }
                }
            }
        }
        maps.push(DonorMap {
            grid_id: g.block.id,
            points,
        });
    }
    if !orphans.is_empty() {
        let count = orphans.len();
        orphans.truncate(8);
        return Err(OversetError::OrphanPoints {
            count,
            first: orphans,
        });
    }
    Ok(maps)
}

/// Evaluate exterior traces Q+ for one grid into `qplus` (4 values per point,
/// aligned with the donor map). Fields are indexed by grid id.
pub fn exchange_states(
    map: &DonorMap,
    fields: &[Field],
    blocks: &[&StructuredBlock],
    basis: &NodalBasis,
    qplus: &mut Vec<f64>,
) -> Result<(), OversetError> {
    qplus.resize(map.points.len() * 4, 0.0);
    for (i, d) in map.points.iter().enumerate() {
        let field = &fields[d.donor_grid];
        debug_assert_eq!(field.grid_id, d.donor_grid);
        let block = blocks[d.donor_grid];
        if !block.active[d.donor_elem] {
            return Err(OversetError::InvalidatedDonor {
                grid: d.donor_grid,
                elem: d.donor_elem,
            });
        }
        let q = field.eval(basis, d.donor_elem, d.r, d.s);
        qplus[i * 4..i * 4 + 4].copy_from_slice(&q.to_array());
    }
    Ok(())
}

/// Background cells deactivated beneath an overset grid, and the artificial
/// faces that deactivation induced.
#[derive(Debug, Clone)]
pub struct HoleCut {
    pub background_id: usize,
    pub removed: Vec<usize>,
    pub artificial_faces: Vec<(usize, Face)>,
}

/// Deactivate background cells whose centroids lie inside the overset grid
/// shrunk by `margin_cells` layers on every side. New boundary faces between
/// active and removed cells are tagged Artificial on the active side.
pub fn cut_hole(
    background: &mut StructuredBlock,
    overset: &StructuredBlock,
    overset_index: &SpatialIndex,
    margin_cells: usize,
) -> Result<HoleCut, OversetError> {
    if 2 * margin_cells >= overset.ni || 2 * margin_cells >= overset.nj {
        return Err(OversetError::EmptyShrunkInterior {
            margin: margin_cells,
            ni: overset.ni,
            nj: overset.nj,
        });
    }
    let mut removed = Vec::new();
    for e in 0..background.num_elems() {
        if !background.active[e] {
            continue;
        }
        let c = background.centroid(e);
        if let Some((oe, _, _)) = locate_point(overset, overset_index, c) {
            let (oi, oj) = overset.elem_ij(oe);
            let inside_shrunk = oi >= margin_cells
                && oi < overset.ni - margin_cells
                && oj >= margin_cells
                && oj < overset.nj - margin_cells;
            if inside_shrunk {
                removed.push(e);
            }
        }
    }
    for &e in &removed {
        background.active[e] = false;
    }
    // Faces from remaining active cells into the hole become artificial.
    let mut artificial = Vec::new();
    for e in 0..background.num_elems() {
        if !background.active[e] {
            continue;
        }
        for face in FACES {
            if let Some(nb) = background.neighbor(e, face) {
                if !background.active[nb] {
                    background
                        .face_tag_overrides
                        .insert((e, face.index()), BoundaryTag::Artificial);
                    artificial.push((e, face));
                }
            }
        }
    }
    Ok(HoleCut {
        background_id: background.id,
        removed,
        artificial_faces: artificial,
    })
}

/// Debug dump: `grid face gq_index donor_grid donor_elem r s` per point.
pub fn write_donor_map(
    map: &DonorMap,
    art: &ArtificialFaces,
    path: &Path,
) -> Result<(), OversetError> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    for (fi, &(e, face)) in art.faces.iter().enumerate() {
        for k in 0..art.n1d {
            let d = &map.points[fi * art.n1d + k];
            writeln!(
                w,
                "{} {}:{} {} {} {} {:.17e} {:.17e}",
                map.grid_id,
                e,
                face.index(),
                k,
                d.donor_grid,
                d.donor_elem,
                d.r,
                d.s
            )?;
        }
    }
    Ok(())
}
