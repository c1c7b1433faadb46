//! Weak-form residual on a block: face fluxes computed once per face in a
//! canonical orientation (so interior contributions cancel exactly in the
//! conservation sum), then gathered per element together with the volume term.
//!
//! Flux integrals use the geometry's quadrature rule, which may carry more
//! points than the solution nodes to de-alias the nonlinear flux; nodal values
//! are interpolated to the quadrature points first.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::basis::NodalBasis;
use crate::euler::{
    flux_f, flux_g, numerical_flux, wall_ghost_state, ConsState, FluxKind, GasModel,
};
use crate::mesh::{BoundaryTag, Face, GridGeometry, StructuredBlock};

use super::DgError;

const MAX_N1D: usize = 8;
const MAX_NQ: usize = 12;

/// Deterministic enumeration of a grid's artificial-boundary faces.
///
/// Each face carries `pts_per_face` quadrature points; `offset(e, face)`
/// gives the base point index of that face inside the grid's exterior-trace
/// buffer.
#[derive(Debug, Clone, Default)]
pub struct ArtificialFaces {
    pub faces: Vec<(usize, Face)>,
    map: HashMap<(usize, usize), usize>,
    pub n1d: usize,
}

impl ArtificialFaces {
    /// Scan a block for faces tagged Artificial (side tags and overrides on
    /// active elements adjacent to boundaries or deactivated neighbors).
    pub fn scan(block: &StructuredBlock, pts_per_face: usize) -> Self {
        let mut faces = Vec::new();
        for e in 0..block.num_elems() {
            if !block.active[e] {
                continue;
            }
            for face in crate::mesh::FACES {
                if block.is_boundary_face(e, face)
                    && block.face_tag(e, face) == BoundaryTag::Artificial
                {
                    faces.push((e, face));
                }
            }
        }
        let map = faces
            .iter()
            .enumerate()
            .map(|(seq, &(e, f))| ((e, f.index()), seq * pts_per_face))
            .collect();
        Self {
            faces,
            map,
            n1d: pts_per_face,
        }
    }

    pub fn num_points(&self) -> usize {
        self.faces.len() * self.n1d
    }

    /// Base point index of face (e, face) in the exterior-state buffer.
    pub fn offset(&self, e: usize, face: Face) -> Option<usize> {
        self.map.get(&(e, face.index())).copied()
    }
}

/// Per-residual boundary data: physical states plus the exchanged exterior
/// traces for artificial faces (4 values per point, same order as
/// `ArtificialFaces`).
pub struct BcData<'a> {
    pub gas: GasModel,
    pub free_stream: ConsState,
    pub post_shock: ConsState,
    pub artificial: &'a ArtificialFaces,
    pub qplus: &'a [f64],
    /// Field-wide max wave speed for the global Lax-Friedrichs variant.
    pub global_lambda: f64,
}

impl<'a> BcData<'a> {
    fn exterior_state(
        &self,
        block: &StructuredBlock,
        e: usize,
        face: Face,
        k: usize,
        q_in: &ConsState,
        outward: [f64; 2],
    ) -> Result<ConsState, DgError> {
        match block.face_tag(e, face) {
            BoundaryTag::Inflow => Ok(self.free_stream),
            BoundaryTag::Outflow => Ok(*q_in),
            BoundaryTag::Wall => Ok(wall_ghost_state(q_in, outward)),
            BoundaryTag::PostShockDirichlet => Ok(self.post_shock),
            BoundaryTag::Artificial => {
                let base = self.artificial.offset(e, face).ok_or(DgError::UnphysicalState {
                    grid: block.id,
                    elem: e,
                })?;
                let i = (base + k) * 4;
                Ok(ConsState::from_slice(&self.qplus[i..i + 4]))
            }
            // Periodic faces are interior by connectivity and never reach here.
            BoundaryTag::Periodic => Ok(*q_in),
        }
    }
}

/// Reusable face-flux buffers.
#[derive(Debug, Default, Clone)]
pub struct FluxScratch {
    vflux: Vec<f64>,
    hflux: Vec<f64>,
}

/// Trace of the nodal polynomial on a face, evaluated at the geometry's
/// quadrature points; out holds nq states.
pub fn face_trace(
    data: &[f64],
    basis: &NodalBasis,
    geom: &GridGeometry,
    e: usize,
    face: Face,
    out: &mut [[f64; 4]],
) {
    let n1d = geom.n1d;
    let nq = geom.nq;
    debug_assert!(out.len() >= nq);
    let edge = match face {
        Face::East | Face::North => &basis.edge_right,
        Face::West | Face::South => &basis.edge_left,
    };
    // Contract the edge direction first: line[i] over the tangent index.
    let mut line = [[0.0f64; 4]; MAX_N1D];
    match face {
        Face::East | Face::West => {
            for k in 0..n1d {
                let mut acc = [0.0; 4];
                for a in 0..n1d {
                    let w = edge[a];
                    let base = ((e * n1d + a) * n1d + k) * 4;
                    for v in 0..4 {
                        acc[v] += w * data[base + v];
                    }
                }
                line[k] = acc;
            }
        }
        Face::South | Face::North => {
            for k in 0..n1d {
                let mut acc = [0.0; 4];
                for b in 0..n1d {
                    let w = edge[b];
                    let base = ((e * n1d + k) * n1d + b) * 4;
                    for v in 0..4 {
                        acc[v] += w * data[base + v];
                    }
                }
                line[k] = acc;
            }
        }
    }
    // Interpolate the line polynomial to the quadrature points.
    for (k, o) in out.iter_mut().take(nq).enumerate() {
        let mut acc = [0.0; 4];
        for i in 0..n1d {
            let w = geom.interp[k * n1d + i];
            for v in 0..4 {
                acc[v] += w * line[i][v];
            }
        }
        *o = acc;
    }
}

/// Evaluate the weak-form residual R (so that M dQ/dt = -R) into `out`.
///
/// Inactive elements receive zeros. Unphysical quadrature states surface as a
/// recoverable `DgError::UnphysicalState`.
pub fn residual(
    block: &StructuredBlock,
    geom: &GridGeometry,
    basis: &NodalBasis,
    flux: FluxKind,
    bc: &BcData,
    data: &[f64],
    out: &mut [f64],
    scratch: &mut FluxScratch,
) -> Result<(), DgError> {
    let n1d = basis.num_nodes();
    let nq = geom.nq;
    assert!(n1d <= MAX_N1D && nq <= MAX_NQ);
    let (ni, nj) = (block.ni, block.nj);
    assert_eq!(data.len(), ni * nj * n1d * n1d * 4);
    assert_eq!(out.len(), data.len());

    let periodic_we = block.side_tags[Face::West.index()] == BoundaryTag::Periodic;
    let periodic_sn = block.side_tags[Face::South.index()] == BoundaryTag::Periodic;

    scratch.vflux.resize((ni + 1) * nj * nq * 4, 0.0);
    scratch.hflux.resize(ni * (nj + 1) * nq * 4, 0.0);

    let gas = bc.gas;

    // Vertical faces: canonical normal points in +i.
    scratch
        .vflux
        .par_chunks_mut(nq * 4)
        .enumerate()
        .with_min_len(64)
        .try_for_each(|(fid, chunk)| -> Result<(), DgError> {
            let iface = fid % (ni + 1);
            let j = fid / (ni + 1);
            if periodic_we && iface == ni {
                chunk.fill(0.0);
                return Ok(());
            }
            let left = if iface > 0 {
                Some(block.elem_index(iface - 1, j))
            } else if periodic_we {
                Some(block.elem_index(ni - 1, j))
            } else {
                None
            };
            let right = if iface < ni {
                Some(block.elem_index(iface, j))
            } else {
                None
            };
            let la = left.filter(|&e| block.active[e]);
            let ra = right.filter(|&e| block.active[e]);
            let mut tl = [[0.0f64; 4]; MAX_NQ];
            let mut tr = [[0.0f64; 4]; MAX_NQ];
            match (la, ra) {
                (Some(a), Some(b)) => {
                    face_trace(data, basis, geom, a, Face::East, &mut tl);
                    face_trace(data, basis, geom, b, Face::West, &mut tr);
                    for k in 0..nq {
                        let gi = geom.face_index(a, Face::East, k);
                        let n = [geom.face_nx[gi], geom.face_ny[gi]];
                        let ql = ConsState::from_slice(&tl[k]);
                        let qr = ConsState::from_slice(&tr[k]);
                        let f = numerical_flux(flux, &ql, &qr, n, gas, bc.global_lambda)
                            .map_err(|_| DgError::UnphysicalState { grid: block.id, elem: a })?;
                        chunk[k * 4..k * 4 + 4].copy_from_slice(&f);
                    }
                }
                (Some(a), None) => {
                    face_trace(data, basis, geom, a, Face::East, &mut tl);
                    for k in 0..nq {
                        let gi = geom.face_index(a, Face::East, k);
                        let n = [geom.face_nx[gi], geom.face_ny[gi]];
                        let ql = ConsState::from_slice(&tl[k]);
                        let qr = bc.exterior_state(block, a, Face::East, k, &ql, n)?;
                        let f = numerical_flux(flux, &ql, &qr, n, gas, bc.global_lambda)
                            .map_err(|_| DgError::UnphysicalState { grid: block.id, elem: a })?;
                        chunk[k * 4..k * 4 + 4].copy_from_slice(&f);
                    }
                }
                (None, Some(b)) => {
                    face_trace(data, basis, geom, b, Face::West, &mut tr);
                    for k in 0..nq {
                        let gi = geom.face_index(b, Face::West, k);
                        // Canonical +i normal is the negation of b's outward.
                        let outward = [geom.face_nx[gi], geom.face_ny[gi]];
                        let n = [-outward[0], -outward[1]];
                        let qr = ConsState::from_slice(&tr[k]);
                        let ql = bc.exterior_state(block, b, Face::West, k, &qr, outward)?;
                        let f = numerical_flux(flux, &ql, &qr, n, gas, bc.global_lambda)
                            .map_err(|_| DgError::UnphysicalState { grid: block.id, elem: b })?;
                        chunk[k * 4..k * 4 + 4].copy_from_slice(&f);
                    }
                }
                (None, None) => chunk.fill(0.0),
            }
            Ok(())
        })?;

    // Horizontal faces: canonical normal points in +j.
    scratch
        .hflux
        .par_chunks_mut(nq * 4)
        .enumerate()
        .with_min_len(64)
        .try_for_each(|(fid, chunk)| -> Result<(), DgError> {
            let i = fid % ni;
            let jface = fid / ni;
            if periodic_sn && jface == nj {
                chunk.fill(0.0);
                return Ok(());
            }
            let south = if jface > 0 {
                Some(block.elem_index(i, jface - 1))
            } else if periodic_sn {
                Some(block.elem_index(i, nj - 1))
            } else {
                None
            };
            let north = if jface < nj {
                Some(block.elem_index(i, jface))
            } else {
                None
            };
            let sa = south.filter(|&e| block.active[e]);
            let na = north.filter(|&e| block.active[e]);
            let mut tl = [[0.0f64; 4]; MAX_NQ];
            let mut tr = [[0.0f64; 4]; MAX_NQ];
            match (sa, na) {
                (Some(a), Some(b)) => {
                    face_trace(data, basis, geom, a, Face::North, &mut tl);
                    face_trace(data, basis, geom, b, Face::South, &mut tr);
                    for k in 0..nq {
                        let gi = geom.face_index(a, Face::North, k);
                        let n = [geom.face_nx[gi], geom.face_ny[gi]];
                        let ql = ConsState::from_slice(&tl[k]);
                        let qr = ConsState::from_slice(&tr[k]);
                        let f = numerical_flux(flux, &ql, &qr, n, gas, bc.global_lambda)
                            .map_err(|_| DgError::UnphysicalState { grid: block.id, elem: a })?;
                        chunk[k * 4..k * 4 + 4].copy_from_slice(&f);
                    }
                }
                (Some(a), None) => {
                    face_trace(data, basis, geom, a, Face::North, &mut tl);
                    for k in 0..nq {
                        let gi = geom.face_index(a, Face::North, k);
                        let n = [geom.face_nx[gi], geom.face_ny[gi]];
                        let ql = ConsState::from_slice(&tl[k]);
                        let qr = bc.exterior_state(block, a, Face::North, k, &ql, n)?;
                        let f = numerical_flux(flux, &ql, &qr, n, gas, bc.global_lambda)
                            .map_err(|_| DgError::UnphysicalState { grid: block.id, elem: a })?;
                        chunk[k * 4..k * 4 + 4].copy_from_slice(&f);
                    }
                }
                (None, Some(b)) => {
                    face_trace(data, basis, geom, b, Face::South, &mut tr);
                    for k in 0..nq {
                        let gi = geom.face_index(b, Face::South, k);
                        let outward = [geom.face_nx[gi], geom.face_ny[gi]];
                        let n = [-outward[0], -outward[1]];
                        let qr = ConsState::from_slice(&tr[k]);
                        let ql = bc.exterior_state(block, b, Face::South, k, &qr, outward)?;
                        let f = numerical_flux(flux, &ql, &qr, n, gas, bc.global_lambda)
                            .map_err(|_| DgError::UnphysicalState { grid: block.id, elem: b })?;
                        chunk[k * 4..k * 4 + 4].copy_from_slice(&f);
                    }
                }
                (None, None) => chunk.fill(0.0),
            }
            Ok(())
        })?;

    // Gather: R = surface - volume per element.
    let vflux = &scratch.vflux;
    let hflux = &scratch.hflux;
    let wq = &geom.quad.weights;
    let interp = &geom.interp;
    let deriv = &geom.deriv;
    let edge_l = &basis.edge_left;
    let edge_r = &basis.edge_right;

    out.par_chunks_mut(n1d * n1d * 4)
        .enumerate()
        .with_min_len(32)
        .try_for_each(|(e, res)| -> Result<(), DgError> {
            if !block.active[e] {
                res.fill(0.0);
                return Ok(());
            }
            let (i, j) = block.elem_ij(e);

            // Interpolate nodal states to the volume quadrature points.
            let mut tmp = [0.0f64; MAX_NQ * MAX_N1D * 4];
            for k in 0..nq {
                for b in 0..n1d {
                    let mut acc = [0.0; 4];
                    for a in 0..n1d {
                        let w = interp[k * n1d + a];
                        let base = ((e * n1d + a) * n1d + b) * 4;
                        for v in 0..4 {
                            acc[v] += w * data[base + v];
                        }
                    }
                    tmp[(k * n1d + b) * 4..(k * n1d + b) * 4 + 4].copy_from_slice(&acc);
                }
            }
            // Contravariant volume fluxes at the quadrature points.
            let mut ft = [0.0f64; MAX_NQ * MAX_NQ * 4];
            let mut gt = [0.0f64; MAX_NQ * MAX_NQ * 4];
            for k in 0..nq {
                for l in 0..nq {
                    let mut acc = [0.0; 4];
                    for b in 0..n1d {
                        let w = interp[l * n1d + b];
                        let o = (k * n1d + b) * 4;
                        for v in 0..4 {
                            acc[v] += w * tmp[o + v];
                        }
                    }
                    let q = ConsState::from_slice(&acc);
                    let p = q
                        .pressure(gas)
                        .map_err(|_| DgError::UnphysicalState { grid: block.id, elem: e })?;
                    if !(p > 0.0) || !p.is_finite() {
                        return Err(DgError::UnphysicalState { grid: block.id, elem: e });
                    }
                    let f = flux_f(&q, gas).unwrap();
                    let g = flux_g(&q, gas).unwrap();
                    let gi = geom.qvol_index(e, k, l);
                    let (xr, xs, yr, ys) = (geom.q_xr[gi], geom.q_xs[gi], geom.q_yr[gi], geom.q_ys[gi]);
                    let o = (k * nq + l) * 4;
                    for v in 0..4 {
                        ft[o + v] = f[v] * ys - g[v] * xs;
                        gt[o + v] = -f[v] * yr + g[v] * xr;
                    }
                }
            }

            // Face flux moments: T[face][m] = sum_k wq_k Jf_k Fhat_k interp[k][m].
            let east_face = if periodic_we && i + 1 == ni { 0 } else { i + 1 };
            let north_face = if periodic_sn && j + 1 == nj { 0 } else { j + 1 };
            let vf_east = &vflux[(j * (ni + 1) + east_face) * nq * 4..][..nq * 4];
            let vf_west = &vflux[(j * (ni + 1) + i) * nq * 4..][..nq * 4];
            let hf_north = &hflux[(north_face * ni + i) * nq * 4..][..nq * 4];
            let hf_south = &hflux[(j * ni + i) * nq * 4..][..nq * 4];
            let mut t_e = [0.0f64; MAX_N1D * 4];
            let mut t_w = [0.0f64; MAX_N1D * 4];
            let mut t_n = [0.0f64; MAX_N1D * 4];
            let mut t_s = [0.0f64; MAX_N1D * 4];
            for k in 0..nq {
                let jf_e = geom.face_jf[geom.face_index(e, Face::East, k)];
                let jf_w = geom.face_jf[geom.face_index(e, Face::West, k)];
                let jf_n = geom.face_jf[geom.face_index(e, Face::North, k)];
                let jf_s = geom.face_jf[geom.face_index(e, Face::South, k)];
                for m in 0..n1d {
                    let w = wq[k] * interp[k * n1d + m];
                    for v in 0..4 {
                        t_e[m * 4 + v] += w * jf_e * vf_east[k * 4 + v];
                        t_w[m * 4 + v] += w * jf_w * vf_west[k * 4 + v];
                        t_n[m * 4 + v] += w * jf_n * hf_north[k * 4 + v];
                        t_s[m * 4 + v] += w * jf_s * hf_south[k * 4 + v];
                    }
                }
            }

            // Volume moments: A[p][l] = sum_k wq_k Ft[k][l] deriv[k][p], then
            // V1[p][q] = sum_l wq_l A[p][l] interp[l][q]; similarly for Gt.
            let mut a_m = [0.0f64; MAX_N1D * MAX_NQ * 4];
            let mut c_m = [0.0f64; MAX_NQ * MAX_N1D * 4];
            for p in 0..n1d {
                for l in 0..nq {
                    let mut acc = [0.0; 4];
                    for k in 0..nq {
                        let w = wq[k] * deriv[k * n1d + p];
                        let o = (k * nq + l) * 4;
                        for v in 0..4 {
                            acc[v] += w * ft[o + v];
                        }
                    }
                    a_m[(p * nq + l) * 4..(p * nq + l) * 4 + 4].copy_from_slice(&acc);
                }
            }
            for k in 0..nq {
                for q in 0..n1d {
                    let mut acc = [0.0; 4];
                    for l in 0..nq {
                        let w = wq[l] * deriv[l * n1d + q];
                        let o = (k * nq + l) * 4;
                        for v in 0..4 {
                            acc[v] += w * gt[o + v];
                        }
                    }
                    c_m[(k * n1d + q) * 4..(k * n1d + q) * 4 + 4].copy_from_slice(&acc);
                }
            }

            for p in 0..n1d {
                for q in 0..n1d {
                    let o = (p * n1d + q) * 4;
                    for v in 0..4 {
                        let surf = t_e[q * 4 + v] * edge_r[p] - t_w[q * 4 + v] * edge_l[p]
                            + t_n[p * 4 + v] * edge_r[q]
                            - t_s[p * 4 + v] * edge_l[q];
                        let mut vol = 0.0;
                        for l in 0..nq {
                            vol += wq[l] * a_m[(p * nq + l) * 4 + v] * interp[l * n1d + q];
                        }
                        for k in 0..nq {
                            vol += wq[k] * interp[k * n1d + p] * c_m[(k * n1d + q) * 4 + v];
                        }
                        res[o + v] = surf - vol;
                    }
                }
            }
            Ok(())
        })?;

    Ok(())
}
#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::cached_basis;
    use crate::dg::{Field, MassMatrix};
    use crate::euler::PrimState;
    use crate::mesh::{build_cartesian_block, build_cylinder_block, CylinderExtents};
    use approx::assert_abs_diff_eq;

    fn bc_uniform<'a>(art: &'a ArtificialFaces, state: ConsState) -> BcData<'a> {
        BcData {
            gas: GasModel::default(),
            free_stream: state,
            post_shock: state,
            artificial: art,
            qplus: &[],
            global_lambda: 0.0,
        }
    }

    #[test]
    fn free_stream_residual_vanishes_on_cartesian_periodic_block() {
        for quad_extra in [0usize, 1, 2] {
            let basis = cached_basis(3);
            let block = build_cartesian_block(
                [0.0, 10.0],
                [-5.0, 5.0],
                8,
                8,
                [BoundaryTag::Periodic; 4],
            )
            .unwrap();
            let geom = GridGeometry::build_with_quadrature(&block, &basis, quad_extra).unwrap();
            let gas = GasModel::default();
            let state = PrimState::new(1.0, 3.0, 0.4, 1.0 / 1.4).to_cons(gas);
            let mut field = Field::new(0, 3, block.num_elems());
            field.init_from(&geom, |_, _| state);
            let art = ArtificialFaces::default();
            let bc = bc_uniform(&art, state);
            let mut out = vec![0.0; field.data.len()];
            let mut scratch = FluxScratch::default();
            residual(&block, &geom, &basis, FluxKind::LaxFriedrichs, &bc, &field.data, &mut out, &mut scratch)
                .unwrap();
            let max = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(max <= 1e-12, "free-stream residual max = {max:e} (quad_extra {quad_extra})");
        }
    }

    #[test]
    fn free_stream_residual_vanishes_on_curvilinear_block() {
        // Metric terms must cancel for a uniform state on the curved grid.
        for quad_extra in [0usize, 2] {
            let basis = cached_basis(2);
            let block = build_cylinder_block(0.5, CylinderExtents::default(), 12, 6, 2).unwrap();
            let geom = GridGeometry::build_with_quadrature(&block, &basis, quad_extra).unwrap();
            let gas = GasModel::default();
            let state = PrimState::new(1.3, 0.0, 0.0, 0.9).to_cons(gas);
            let mut field = Field::new(0, 2, block.num_elems());
            field.init_from(&geom, |_, _| state);
            let art = ArtificialFaces::default();
            let bc = bc_uniform(&art, state);
            let mut out = vec![0.0; field.data.len()];
            let mut scratch = FluxScratch::default();
            residual(&block, &geom, &basis, FluxKind::LaxFriedrichs, &bc, &field.data, &mut out, &mut scratch)
                .unwrap();
            let max = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(max <= 1e-12, "curvilinear free-stream residual max = {max:e} (quad_extra {quad_extra})");
        }
    }

    #[test]
    fn linear_density_advection_matches_analytic_divergence() {
        // rho linear, velocity and pressure uniform: every flux component is
        // linear in (x, y), so the discrete residual must equal the exact
        // divergence after mass-matrix inversion, at any quadrature strength.
        for quad_extra in [0usize, 1, 3] {
            let basis = cached_basis(2);
            let block =
                build_cartesian_block([0.0, 1.0], [0.0, 1.0], 3, 2, [BoundaryTag::Outflow; 4]).unwrap();
            let geom = GridGeometry::build_with_quadrature(&block, &basis, quad_extra).unwrap();
            let (u0, v0, p0) = (0.7, -0.3, 2.0);
            let (b_coef, c_coef) = (0.4, -0.25);
            let state_at = move |x: f64, y: f64| {
                let rho = 2.0 + b_coef * x + c_coef * y;
                ConsState::new(
                    rho,
                    rho * u0,
                    rho * v0,
                    p0 / 0.4 + 0.5 * rho * (u0 * u0 + v0 * v0),
                )
            };
            let mut field = Field::new(0, 2, block.num_elems());
            field.init_from(&geom, |x, y| state_at(x, y));
            let art = ArtificialFaces::default();
            let bc = bc_uniform(&art, state_at(0.0, 0.0));
            let mut out = vec![0.0; field.data.len()];
            let mut scratch = FluxScratch::default();
            residual(
                &block,
                &geom,
                &basis,
                FluxKind::LaxFriedrichs,
                &bc,
                &field.data,
                &mut out,
                &mut scratch,
            )
            .unwrap();
            let m = MassMatrix::build(&block, &geom, &basis).unwrap();
            let d = b_coef * u0 + c_coef * v0;
            let expect = [d, d * u0, d * v0, d * 0.5 * (u0 * u0 + v0 * v0)];
            for e in 0..block.num_elems() {
                for a in 0..3 {
                    for b in 0..3 {
                        let o = ((e * 3 + a) * 3 + b) * 4;
                        for v in 0..4 {
                            let dqdt = -out[o + v] / m.entry(e, a, b);
                            assert_abs_diff_eq!(dqdt, -expect[v], epsilon = 1e-11);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn residual_is_linear_on_frozen_advection_family() {
        let basis = cached_basis(2);
        let block =
            build_cartesian_block([0.0, 1.0], [0.0, 1.0], 3, 3, [BoundaryTag::Outflow; 4]).unwrap();
        let geom = GridGeometry::build(&block, &basis).unwrap();
        let gas = GasModel::default();
        let (u0, v0, p0) = (0.9, 0.2, 1.5);
        let make = |b_coef: f64, c_coef: f64| {
            let mut f = Field::new(0, 2, block.num_elems());
            f.init_from(&geom, |x, y| {
                let rho = 2.0 + b_coef * x + c_coef * y;
                ConsState::new(rho, rho * u0, rho * v0, p0 / 0.4 + 0.5 * rho * (u0 * u0 + v0 * v0))
            });
            f
        };
        let f1 = make(0.3, -0.2);
        let f2 = make(-0.1, 0.45);
        let alpha = 0.35;
        let mut fmix = f1.clone();
        for (m, (a, b)) in fmix.data.iter_mut().zip(f1.data.iter().zip(&f2.data)) {
            *m = alpha * a + (1.0 - alpha) * b;
        }
        let art = ArtificialFaces::default();
        let bc = bc_uniform(&art, PrimState::new(1.0, u0, v0, p0).to_cons(gas));
        let mut scratch = FluxScratch::default();
        let mut r1 = vec![0.0; f1.data.len()];
        let mut r2 = r1.clone();
        let mut rm = r1.clone();
        residual(&block, &geom, &basis, FluxKind::LaxFriedrichs, &bc, &f1.data, &mut r1, &mut scratch).unwrap();
        residual(&block, &geom, &basis, FluxKind::LaxFriedrichs, &bc, &f2.data, &mut r2, &mut scratch).unwrap();
        residual(&block, &geom, &basis, FluxKind::LaxFriedrichs, &bc, &fmix.data, &mut rm, &mut scratch).unwrap();
        for i in 0..r1.len() {
            let expect = alpha * r1[i] + (1.0 - alpha) * r2[i];
            assert_abs_diff_eq!(rm[i], expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn unphysical_state_is_recoverable_flag() {
        let basis = cached_basis(1);
        let block =
            build_cartesian_block([0.0, 1.0], [0.0, 1.0], 2, 2, [BoundaryTag::Outflow; 4]).unwrap();
        let geom = GridGeometry::build(&block, &basis).unwrap();
        let mut field = Field::new(0, 1, block.num_elems());
        field.init_from(&geom, |_, _| ConsState::new(1.0, 0.0, 0.0, -1.0));
        let art = ArtificialFaces::default();
        let bc = bc_uniform(&art, ConsState::new(1.0, 0.0, 0.0, 2.5));
        let mut out = vec![0.0; field.data.len()];
        let mut scratch = FluxScratch::default();
        let err = residual(
            &block,
            &geom,
            &basis,
            FluxKind::LaxFriedrichs,
            &bc,
            &field.data,
            &mut out,
            &mut scratch,
        );
        assert!(matches!(err, Err(DgError::UnphysicalState { .. })));
    }
}
