//! Troubled-cell detection (KXRCF) and WENO-type limiting, restricted to a
//! configured set of grids.
//!
//! Detection integrates the solution jump over inflow portions of the element
//! boundary and compares against h^{(N+1)/2} |dOmega^-| ||Q||_inf. Limiting
//! replaces a troubled cell's polynomial by a smoothness-weighted combination
//! of its own polynomial and its face neighbors' polynomials shifted to match
//! the cell average, which leaves the average untouched.

use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use crate::basis::NodalBasis;
use crate::dg::Field;
use crate::euler::{characteristic_matrices, GasModel};
use crate::mesh::{invert_map, GridGeometry, StructuredBlock, FACES};

#[derive(Debug, Error)]
pub enum LimiterError {
    #[error("troubled-cell dump parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Elements flagged by the indicator, with cell-center coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct TroubledSet {
    pub grid_id: usize,
    pub elems: Vec<usize>,
    pub centers: Vec<[f64; 2]>,
}

impl TroubledSet {
    pub fn is_empty(&self) -> bool {
        self.elems.is_empty()
    }

    pub fn len(&self) -> usize {
        self.elems.len()
    }
}

/// Grids on which detection and limiting run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LimiterScope {
    grids: BTreeSet<usize>,
}

impl LimiterScope {
    pub fn all(grid_ids: impl IntoIterator<Item = usize>) -> Self {
        Self {
            grids: grid_ids.into_iter().collect(),
        }
    }

    pub fn none() -> Self {
        Self::default()
    }

    pub fn contains(&self, grid_id: usize) -> bool {
        self.grids.contains(&grid_id)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LimiterConfig {
    /// KXRCF threshold C_k.
    pub threshold: f64,
    /// Epsilon in the nonlinear weights.
    pub eps: f64,
    /// Linear weight of the cell's own polynomial.
    pub gamma_self: f64,
    /// Limit characteristic variables instead of conserved components.
    pub characteristic: bool,
}

impl Default for LimiterConfig {
    fn default() -> Self {
        Self {
            threshold: 1.0,
            eps: 1e-6,
            gamma_self: 0.998,
            characteristic: false,
        }
    }
}

/// Element size for the KXRCF normalization: max corner distance from center.
fn elem_radius(block: &StructuredBlock, e: usize) -> f64 {
    let c = block.centroid(e);
    block
        .corners(e)
        .iter()
        .map(|p| ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)).sqrt())
        .fold(0.0, f64::max)
}

/// KXRCF troubled-cell indicator on density and energy, threshold C_k.
///
/// Inflow is decided pointwise at face quadrature points from the interior
/// trace; faces without an active same-grid neighbor do not participate.
pub fn kxrcf_detect(
    field: &Field,
    block: &StructuredBlock,
    geom: &GridGeometry,
    basis: &NodalBasis,
    _gas: GasModel,
    cfg: &LimiterConfig,
) -> TroubledSet {
    let n1d = basis.num_nodes();
    let nq = geom.nq;
    let w = &geom.quad.weights;
    let mut elems = Vec::new();
    let mut centers = Vec::new();

    let mut t_in = [[0.0f64; 4]; 12];
    let mut t_nb = [[0.0f64; 4]; 12];
    for e in 0..block.num_elems() {
        if !block.active[e] {
            continue;
        }
        let mut jump = [0.0f64; 2]; // rho, E
        let mut inflow_len = 0.0f64;
        for face in FACES {
            let Some(nb) = block.neighbor(e, face) else {
                continue;
            };
            if !block.active[nb] {
                continue;
            }
            let opp = face.opposite();
            crate::dg::face_trace(&field.data, basis, geom, e, face, &mut t_in);
            crate::dg::face_trace(&field.data, basis, geom, nb, opp, &mut t_nb);
            for k in 0..nq {
                let gi = geom.face_index(e, face, k);
                let q_in = crate::euler::ConsState::from_slice(&t_in[k]);
                let un = q_in.u() * geom.face_nx[gi] + q_in.v() * geom.face_ny[gi];
                if un < 0.0 {
                    let ds = w[k] * geom.face_jf[gi];
                    jump[0] += (q_in.rho - t_nb[k][0]) * ds;
                    jump[1] += (q_in.e - t_nb[k][3]) * ds;
                    inflow_len += ds;
                }
            }
        }
        if inflow_len <= 0.0 {
            continue;
        }
        // Max-norm of the indicator variables over the element's nodes.
        let mut norm = [0.0f64; 2];
        for a in 0..n1d {
            for b in 0..n1d {
                let q = field.node(e, a, b);
                norm[0] = norm[0].max(q.rho.abs());
                norm[1] = norm[1].max(q.e.abs());
            }
        }
        let h = elem_radius(block, e);
        let scale = h.powf((field.degree as f64 + 1.0) / 2.0) * inflow_len;
        let ind_rho = jump[0].abs() / (scale * norm[0]);
        let ind_e = jump[1].abs() / (scale * norm[1]);
        if ind_rho > cfg.threshold || ind_e > cfg.threshold {
            elems.push(e);
            centers.push(block.centroid(e));
        }
    }
    TroubledSet {
        grid_id: block.id,
        elems,
        centers,
    }
}

/// WENO reconstruction on the troubled cells. Reads neighbor polynomials from
/// the pre-limit field and writes only the troubled cells' own coefficients.
pub fn weno_limit(
    field: &mut Field,
    troubled: &TroubledSet,
    block: &StructuredBlock,
    geom: &GridGeometry,
    basis: &NodalBasis,
    gas: GasModel,
    cfg: &LimiterConfig,
) {
    if troubled.is_empty() {
        return;
    }
    debug_assert_eq!(troubled.grid_id, field.grid_id);
    let n1d = basis.num_nodes();
    let nn = n1d * n1d;

    // Snapshot the polynomials that will be read: troubled cells and their
    // face neighbors.
    let mut snapshot: HashMap<usize, Vec<f64>> = HashMap::new();
    for &e in &troubled.elems {
        snapshot
            .entry(e)
            .or_insert_with(|| field.data[e * nn * 4..(e + 1) * nn * 4].to_vec());
        for face in FACES {
            if let Some(nb) = block.neighbor(e, face) {
                if block.active[nb] {
                    snapshot
                        .entry(nb)
                        .or_insert_with(|| field.data[nb * nn * 4..(nb + 1) * nn * 4].to_vec());
                }
            }
        }
    }

    let w = &basis.rule.weights;
    for &e in &troubled.elems {
        // Candidate 0: own polynomial; candidates 1..: neighbors evaluated on
        // this element's nodes, shifted to match this element's average.
        let own = &snapshot[&e];
        let mut candidates: Vec<Vec<f64>> = vec![own.clone()];
        for face in FACES {
            let Some(nb) = block.neighbor(e, face) else {
                continue;
            };
            if !block.active[nb] {
                continue;
            }
            let nb_data = &snapshot[&nb];
            let mut vals = vec![0.0; nn * 4];
            let mut ok = true;
            for a in 0..n1d {
                for b in 0..n1d {
                    let gi = geom.vol_index(e, a, b);
                    let p = [geom.x[gi], geom.y[gi]];
                    let inv = invert_map(block, nb, p, 1e-12, 50);
                    if !inv.converged {
                        ok = false;
                        break;
                    }
                    let q = eval_nodal(nb_data, basis, inv.r, inv.s);
                    vals[(a * n1d + b) * 4..(a * n1d + b) * 4 + 4].copy_from_slice(&q);
                }
                if !ok {
                    break;
                }
            }
            if ok {
                candidates.push(vals);
            }
        }

        let m = candidates.len();
        if m == 1 {
            continue; // no neighbors available (isolated corner cell)
        }

        // Cell averages on this element, used for the conservation shifts.
        let avg = |vals: &[f64]| -> [f64; 4] {
            let mut acc = [0.0; 4];
            for a in 0..n1d {
                for b in 0..n1d {
                    let gi = geom.vol_index(e, a, b);
                    let ww = w[a] * w[b] * geom.jac[gi];
                    for v in 0..4 {
                        acc[v] += ww * vals[(a * n1d + b) * 4 + v];
                    }
                }
            }
            acc.map(|s| s / geom.area[e])
        };
        let own_avg = avg(own);
        for cand in candidates.iter_mut().skip(1) {
            let ca = avg(cand);
            for a in 0..nn {
                for v in 0..4 {
                    cand[a * 4 + v] += own_avg[v] - ca[v];
                }
            }
        }

        // Optional characteristic decomposition along the mean flow direction.
        let char_mats = if cfg.characteristic {
            let qbar = crate::euler::ConsState::new(own_avg[0], own_avg[1], own_avg[2], own_avg[3]);
            let speed = (qbar.u().powi(2) + qbar.v().powi(2)).sqrt();
            let n = if speed > 1e-10 {
                [qbar.u() / speed, qbar.v() / speed]
            } else {
                [1.0, 0.0]
            };
            characteristic_matrices(&qbar, n, gas).ok()
        } else {
            None
        };
        if let Some((_, l)) = &char_mats {
            for cand in candidates.iter_mut() {
                transform_nodal(cand, l, nn);
            }
        }

        // Nonlinear weights per variable from reference-space smoothness.
        let gamma_nb = (1.0 - cfg.gamma_self) / (m - 1) as f64;
        let mut combined = vec![0.0; nn * 4];
        for v in 0..4 {
            let mut weights = Vec::with_capacity(m);
            let mut wsum = 0.0;
            for (l, cand) in candidates.iter().enumerate() {
                let beta = smoothness(cand, v, basis, field.degree);
                let gamma = if l == 0 { cfg.gamma_self } else { gamma_nb };
                let wt = gamma / ((cfg.eps + beta) * (cfg.eps + beta));
                weights.push(wt);
                wsum += wt;
            }
            for (wt, cand) in weights.iter().zip(&candidates) {
                let scale = wt / wsum;
                for a in 0..nn {
                    combined[a * 4 + v] += scale * cand[a * 4 + v];
                }
            }
        }
        if let Some((r, _)) = &char_mats {
            transform_nodal(&mut combined, r, nn);
        }

        field.data[e * nn * 4..(e + 1) * nn * 4].copy_from_slice(&combined);
    }
}

/// Evaluate elem-local nodal values (as stored in a snapshot) at (r, s).
fn eval_nodal(vals: &[f64], basis: &NodalBasis, r: f64, s: f64) -> [f64; 4] {
    let n1d = basis.num_nodes();
    let mut lr = [0.0; 8];
    let mut ls = [0.0; 8];
    basis.eval_all(r, &mut lr[..n1d]);
    basis.eval_all(s, &mut ls[..n1d]);
    let mut acc = [0.0; 4];
    for a in 0..n1d {
        for b in 0..n1d {
            let ww = lr[a] * ls[b];
            for v in 0..4 {
                acc[v] += ww * vals[(a * n1d + b) * 4 + v];
            }
        }
    }
    acc
}

/// In-place 4x4 linear transform of every node's state.
fn transform_nodal(vals: &mut [f64], mat: &[f64; 16], nn: usize) {
    for a in 0..nn {
        let mut out = [0.0; 4];
        for i in 0..4 {
            for k in 0..4 {
                out[i] += mat[i * 4 + k] * vals[a * 4 + k];
            }
        }
        vals[a * 4..a * 4 + 4].copy_from_slice(&out);
    }
}

/// Integrated squared reference-space derivatives of one variable,
/// sum over 1 <= o_r + o_s <= N.
fn smoothness(vals: &[f64], var: usize, basis: &NodalBasis, degree: usize) -> f64 {
    let n1d = basis.num_nodes();
    let w = &basis.rule.weights;
    // Work array of the chosen variable.
    let mut work = [0.0f64; 64];
    let mut temp = [0.0f64; 64];
    let mut beta = 0.0;
    for or in 0..=degree {
        for os in 0..=degree {
            if or + os == 0 || or + os > degree {
                continue;
            }
            for a in 0..n1d {
                for b in 0..n1d {
                    work[a * n1d + b] = vals[(a * n1d + b) * 4 + var];
                }
            }
            for _ in 0..or {
                diff_r(&work, &mut temp, basis, n1d);
                work[..n1d * n1d].copy_from_slice(&temp[..n1d * n1d]);
            }
            for _ in 0..os {
                diff_s(&work, &mut temp, basis, n1d);
                work[..n1d * n1d].copy_from_slice(&temp[..n1d * n1d]);
            }
            let mut acc = 0.0;
            for a in 0..n1d {
                for b in 0..n1d {
                    let v = work[a * n1d + b];
                    acc += w[a] * w[b] * v * v;
                }
            }
            beta += acc;
        }
    }
    beta
}

fn diff_r(vals: &[f64], out: &mut [f64], basis: &NodalBasis, n1d: usize) {
    let d = &basis.diff_matrix;
    for a in 0..n1d {
        for b in 0..n1d {
            let mut acc = 0.0;
            for k in 0..n1d {
                acc += d[a * n1d + k] * vals[k * n1d + b];
            }
            out[a * n1d + b] = acc;
        }
    }
}

fn diff_s(vals: &[f64], out: &mut [f64], basis: &NodalBasis, n1d: usize) {
    let d = &basis.diff_matrix;
    for a in 0..n1d {
        for b in 0..n1d {
            let mut acc = 0.0;
            for k in 0..n1d {
                acc += d[b * n1d + k] * vals[a * n1d + k];
            }
            out[a * n1d + b] = acc;
        }
    }
}

/// Write the troubled-cell dump: `grid_id i j x_center y_center` per line.
pub fn write_troubled(sets: &[TroubledSet], blocks: &[&StructuredBlock], path: &Path) -> Result<(), LimiterError> {
    let file = std::fs::File::create(path)?;
    let mut out = BufWriter::new(file);
    for set in sets {
        let block = blocks
            .iter()
            .find(|b| b.id == set.grid_id)
            .expect("dump references a known grid");
        for (&e, c) in set.elems.iter().zip(&set.centers) {
            let (i, j) = block.elem_ij(e);
            writeln!(out, "{} {} {} {:.17e} {:.17e}", set.grid_id, i, j, c[0], c[1])?;
        }
    }
    Ok(())
}

/// Read a troubled-cell dump back, grouping lines by grid id.
pub fn read_troubled(path: &Path, blocks: &[&StructuredBlock]) -> Result<Vec<TroubledSet>, LimiterError> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut by_grid: HashMap<usize, TroubledSet> = HashMap::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let t: Vec<&str> = line.split_whitespace().collect();
        if t.len() != 5 {
            return Err(LimiterError::Parse(format!("bad dump line `{line}`")));
        }
        let grid: usize = t[0].parse().map_err(|_| LimiterError::Parse(line.clone()))?;
        let i: usize = t[1].parse().map_err(|_| LimiterError::Parse(line.clone()))?;
        let j: usize = t[2].parse().map_err(|_| LimiterError::Parse(line.clone()))?;
        let x: f64 = t[3].parse().map_err(|_| LimiterError::Parse(line.clone()))?;
        let y: f64 = t[4].parse().map_err(|_| LimiterError::Parse(line.clone()))?;
        let block = blocks
            .iter()
            .find(|b| b.id == grid)
            .ok_or_else(|| LimiterError::Parse(format!("unknown grid id {grid}")))?;
        let set = by_grid.entry(grid).or_insert_with(|| TroubledSet {
            grid_id: grid,
            elems: Vec::new(),
            centers: Vec::new(),
        });
        set.elems.push(block.elem_index(i, j));
        set.centers.push([x, y]);
    }
    let mut out: Vec<TroubledSet> = by_grid.into_values().collect();
    out.sort_by_key(|s| s.grid_id);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::cached_basis;
    use crate::euler::{ConsState, PrimState};
    use crate::mesh::{build_cartesian_block, BoundaryTag};
    use approx::assert_abs_diff_eq;

    const GAS: GasModel = GasModel { gamma: 1.4 };

    fn setup(
        n: usize,
        degree: usize,
    ) -> (StructuredBlock, GridGeometry, std::sync::Arc<NodalBasis>) {
        let basis = cached_basis(degree);
        let block =
            build_cartesian_block([0.0, 1.0], [0.0, 1.0], n, n, [BoundaryTag::Outflow; 4]).unwrap();
        let geom = GridGeometry::build(&block, &basis).unwrap();
        (block, geom, basis)
    }

    #[test]
    fn uniform_field_flags_nothing() {
        let (block, geom, basis) = setup(6, 2);
        let mut field = Field::new(0, 2, block.num_elems());
        field.init_from(&geom, |_, _| PrimState::new(1.0, 2.0, 0.3, 1.0).to_cons(GAS));
        let t = kxrcf_detect(&field, &block, &geom, &basis, GAS, &LimiterConfig::default());
        assert!(t.is_empty());
    }

    #[test]
    fn contact_jump_flags_downwind_cell() {
        // Two 0.5 x 0.5 cells, flow in +x, density 1 | 2. Hand evaluation for
        // the right cell (its west face is the only inflow face):
        //   I = |drho| L / (h^1 * L * max rho) = 1 / (0.3536 * 2) = 1.414 > 1.
        // The left cell's east face is outflow, so it is not flagged.
        let basis = cached_basis(1);
        let block =
            build_cartesian_block([0.0, 1.0], [0.0, 0.5], 2, 1, [BoundaryTag::Outflow; 4]).unwrap();
        let geom = GridGeometry::build(&block, &basis).unwrap();
        let mut field = Field::new(0, 1, block.num_elems());
        field.init_from(&geom, |x, _| {
            let rho = if x < 0.5 { 1.0 } else { 2.0 };
            PrimState::new(rho, 1.0, 0.0, 1.0).to_cons(GAS)
        });
        let t = kxrcf_detect(&field, &block, &geom, &basis, GAS, &LimiterConfig::default());
        assert_eq!(t.elems, vec![1]);
        assert_abs_diff_eq!(t.centers[0][0], 0.75, epsilon = 1e-13);
    }

    #[test]
    fn smooth_vortex_projection_flags_nothing_p4() {
        let (block, geom, basis) = setup(40, 4);
        // 40x40 over the unit square maps the vortex core into view.
        let mut field = Field::new(0, 4, block.num_elems());
        field.init_from(&geom, |x, y| {
            // A smooth vortex-like bump advected at unit speed.
            let (cx, cy) = (0.5, 0.5);
            let r2 = ((x - cx).powi(2) + (y - cy).powi(2)) * 25.0;
            let rho = 1.0 - 0.3 * (-r2).exp();
            PrimState::new(rho, 1.0, 0.1, rho.powf(1.4)).to_cons(GAS)
        });
        let t = kxrcf_detect(&field, &block, &geom, &basis, GAS, &LimiterConfig::default());
        assert!(t.is_empty(), "flagged {} cells on smooth data", t.len());
    }

    #[test]
    fn empty_troubled_set_leaves_field_bit_identical() {
        let (block, geom, basis) = setup(4, 2);
        let mut field = Field::new(0, 2, block.num_elems());
        field.init_from(&geom, |x, y| {
            PrimState::new(1.0 + 0.3 * (x * 7.0).sin() * (y * 5.0).cos(), 0.5, -0.2, 1.0).to_cons(GAS)
        });
        let before = field.data.clone();
        let empty = TroubledSet { grid_id: 0, elems: vec![], centers: vec![] };
        weno_limit(&mut field, &empty, &block, &geom, &basis, GAS, &LimiterConfig::default());
        assert_eq!(before, field.data);
    }

    #[test]
    fn globally_linear_field_is_unchanged_by_limiting() {
        let (block, geom, basis) = setup(4, 2);
        let mut field = Field::new(0, 2, block.num_elems());
        field.init_from(&geom, |x, y| {
            ConsState::new(1.0 + 0.2 * x - 0.1 * y, 0.5 + 0.1 * x, 0.3 * y, 4.0 + x + y)
        });
        let before = field.data.clone();
        let all = TroubledSet {
            grid_id: 0,
            elems: (0..block.num_elems()).collect(),
            centers: (0..block.num_elems()).map(|e| block.centroid(e)).collect(),
        };
        weno_limit(&mut field, &all, &block, &geom, &basis, GAS, &LimiterConfig::default());
        for (a, b) in before.iter().zip(&field.data) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
        }
    }

    #[test]
    fn cell_averages_survive_limiting_on_shocked_data() {
        let (block, geom, basis) = setup(8, 2);
        let mut field = Field::new(0, 2, block.num_elems());
        field.init_from(&geom, |x, _| {
            let rho = if x < 0.5 { 1.0 } else { 3.2 };
            let p = if x < 0.5 { 1.0 } else { 5.0 };
            PrimState::new(rho, 1.5, 0.0, p).to_cons(GAS)
        });
        let troubled = kxrcf_detect(&field, &block, &geom, &basis, GAS, &LimiterConfig::default());
        assert!(!troubled.is_empty());
        let before: Vec<[f64; 4]> = (0..block.num_elems())
            .map(|e| field.cell_average(&basis, &geom, e))
            .collect();
        weno_limit(&mut field, &troubled, &block, &geom, &basis, GAS, &LimiterConfig::default());
        for e in 0..block.num_elems() {
            let after = field.cell_average(&basis, &geom, e);
            for v in 0..4 {
                assert_abs_diff_eq!(after[v], before[e][v], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn characteristic_limiting_also_preserves_averages() {
        let (block, geom, basis) = setup(8, 2);
        let mut field = Field::new(0, 2, block.num_elems());
        field.init_from(&geom, |x, _| {
            let rho = if x < 0.5 { 1.0 } else { 2.5 };
            let p = if x < 0.5 { 1.0 } else { 4.0 };
            PrimState::new(rho, 1.2, 0.1, p).to_cons(GAS)
        });
        let cfg = LimiterConfig {
            characteristic: true,
            ..LimiterConfig::default()
        };
        let troubled = kxrcf_detect(&field, &block, &geom, &basis, GAS, &cfg);
        assert!(!troubled.is_empty());
        let before: Vec<[f64; 4]> = (0..block.num_elems())
            .map(|e| field.cell_average(&basis, &geom, e))
            .collect();
        weno_limit(&mut field, &troubled, &block, &geom, &basis, GAS, &cfg);
        for e in 0..block.num_elems() {
            let after = field.cell_average(&basis, &geom, e);
            for v in 0..4 {
                assert_abs_diff_eq!(after[v], before[e][v], epsilon = 1e-11);
            }
        }
    }

    #[test]
    fn limiting_smooth_flagged_cell_is_nearly_idempotent() {
        // Smooth data representable at degree N: all candidates coincide, so
        // repeated limiting reproduces the polynomial to roundoff. (For
        // non-polynomial data the reconstruction contracts at rate gamma_self
        // per application, so bitwise idempotence is not a property of the
        // scheme; accuracy preservation is covered by the convergence suite.)
        let (block, geom, basis) = setup(6, 2);
        let mut field = Field::new(0, 2, block.num_elems());
        field.init_from(&geom, |x, y| {
            ConsState::new(
                1.0 + 0.1 * x + 0.05 * y + 0.02 * x * y + 0.03 * x * x,
                0.8,
                0.0,
                2.5 + 0.1 * y * y,
            )
        });
        let center = block.elem_index(3, 3);
        let one = TroubledSet {
            grid_id: 0,
            elems: vec![center],
            centers: vec![block.centroid(center)],
        };
        let cfg = LimiterConfig::default();
        weno_limit(&mut field, &one, &block, &geom, &basis, GAS, &cfg);
        let once = field.data.clone();
        weno_limit(&mut field, &one, &block, &geom, &basis, GAS, &cfg);
        let nn = 9 * 4;
        for k in 0..nn {
            let a = once[center * nn + k];
            let b = field.data[center * nn + k];
            assert!(
                (a - b).abs() <= 1e-10 * (1.0 + a.abs()),
                "node {k}: {a} vs {b}"
            );
        }
    }

    #[test]
    fn detection_is_deterministic() {
        let (block, geom, basis) = setup(8, 2);
        let mut field = Field::new(0, 2, block.num_elems());
        field.init_from(&geom, |x, _| {
            let rho = if x < 0.5 { 1.0 } else { 3.0 };
            PrimState::new(rho, 1.0, 0.0, 1.0).to_cons(GAS)
        });
        let t1 = kxrcf_detect(&field, &block, &geom, &basis, GAS, &LimiterConfig::default());
        let t2 = kxrcf_detect(&field, &block, &geom, &basis, GAS, &LimiterConfig::default());
        assert_eq!(t1, t2);
    }

    #[test]
    fn dump_round_trips() {
        let (block, _geom, basis) = setup(4, 1);
        let _ = basis;
        let set = TroubledSet {
            grid_id: 0,
            elems: vec![2, 7],
            centers: vec![block.centroid(2), block.centroid(7)],
        };
        let dir = std::env::temp_dir().join("overdg_limiter_dump_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("troubled.txt");
        write_troubled(&[set.clone()], &[&block], &path).unwrap();
        let back = read_troubled(&path, &[&block]).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].elems, set.elems);
    }
}
