//! The weak-form residual, mass matrices, explicit Runge-Kutta stepping,
//! CFL-based time step control and error norms.

mod residual;
mod tableau;

pub use residual::{face_trace, residual, ArtificialFaces, BcData, FluxScratch};
pub use tableau::{ButcherTableau, TableauError};

use rayon::prelude::*;
use thiserror::Error;

use crate::basis::NodalBasis;
use crate::euler::{ConsState, GasModel};
use crate::mesh::{GridGeometry, MeshError, StructuredBlock};

#[derive(Debug, Error)]
pub enum DgError {
    #[error("unphysical quadrature state in grid {grid}, element {elem} (recoverable)")]
    UnphysicalState { grid: usize, elem: usize },
    #[error("NaN detected in stage {stage}")]
    StepFailure { stage: usize },
    #[error(transparent)]
    Geometry(#[from] MeshError),
}

/// Per-element tensor of nodal conservative values over one grid block.
///
/// Storage is elem-major: index ((e*n1d + a)*n1d + b)*4 + var with `a` the
/// r-direction node index.
#[derive(Debug, Clone)]
pub struct Field {
    pub grid_id: usize,
    pub degree: usize,
    pub num_elems: usize,
    pub data: Vec<f64>,
}

impl Field {
    pub fn new(grid_id: usize, degree: usize, num_elems: usize) -> Self {
        let n1d = degree + 1;
        Self {
            grid_id,
            degree,
            num_elems,
            data: vec![0.0; num_elems * n1d * n1d * 4],
        }
    }

    pub fn n1d(&self) -> usize {
        self.degree + 1
    }

    pub fn idx(&self, e: usize, a: usize, b: usize) -> usize {
        ((e * self.n1d() + a) * self.n1d() + b) * 4
    }

    pub fn node(&self, e: usize, a: usize, b: usize) -> ConsState {
        let i = self.idx(e, a, b);
        ConsState::new(self.data[i], self.data[i + 1], self.data[i + 2], self.data[i + 3])
    }

    pub fn set_node(&mut self, e: usize, a: usize, b: usize, q: ConsState) {
        let i = self.idx(e, a, b);
        self.data[i..i + 4].copy_from_slice(&q.to_array());
    }

    /// Initialize nodal values from a pointwise state function of (x, y).
    pub fn init_from(&mut self, geom: &GridGeometry, f: impl Fn(f64, f64) -> ConsState) {
        let n1d = self.n1d();
        for e in 0..self.num_elems {
            for a in 0..n1d {
                for b in 0..n1d {
                    let g = geom.vol_index(e, a, b);
                    self.set_node(e, a, b, f(geom.x[g], geom.y[g]));
                }
            }
        }
    }

    /// Evaluate the nodal polynomial of element e at reference point (r, s).
    pub fn eval(&self, basis: &NodalBasis, e: usize, r: f64, s: f64) -> ConsState {
        let n1d = self.n1d();
        let mut lr = [0.0; 8];
        let mut ls = [0.0; 8];
        basis.eval_all(r, &mut lr[..n1d]);
        basis.eval_all(s, &mut ls[..n1d]);
        let mut acc = [0.0; 4];
        for a in 0..n1d {
            let base = (e * n1d + a) * n1d * 4;
            for b in 0..n1d {
                let w = lr[a] * ls[b];
                for v in 0..4 {
                    acc[v] += w * self.data[base + b * 4 + v];
                }
            }
        }
        ConsState::from_slice(&acc)
    }

    /// Quadrature cell average of each conserved variable.
    pub fn cell_average(&self, basis: &NodalBasis, geom: &GridGeometry, e: usize) -> [f64; 4] {
        let n1d = self.n1d();
        let w = &basis.rule.weights;
        let mut acc = [0.0; 4];
        for a in 0..n1d {
            for b in 0..n1d {
                let g = geom.vol_index(e, a, b);
                let ww = w[a] * w[b] * geom.jac[g];
                let i = self.idx(e, a, b);
                for v in 0..4 {
                    acc[v] += ww * self.data[i + v];
                }
            }
        }
        let area = geom.area[e];
        acc.map(|s| s / area)
    }

    pub fn has_nan(&self) -> bool {
        self.data.iter().any(|v| !v.is_finite())
    }
}

/// Diagonal mass matrix entries m_ab = w_a w_b J(r_a, s_b) per element.
#[derive(Debug, Clone)]
pub struct MassMatrix {
    pub n1d: usize,
    pub diag: Vec<f64>,
}

impl MassMatrix {
    pub fn build(block: &StructuredBlock, geom: &GridGeometry, basis: &NodalBasis) -> Result<Self, DgError> {
        let n1d = basis.num_nodes();
        let w = &basis.rule.weights;
        let ne = block.num_elems();
        let mut diag = vec![0.0; ne * n1d * n1d];
        for e in 0..ne {
            for a in 0..n1d {
                for b in 0..n1d {
                    let g = geom.vol_index(e, a, b);
                    let jac = geom.jac[g];
                    if block.active[e] && !(jac > 0.0) {
                        let (i, j) = block.elem_ij(e);
                        return Err(DgError::Geometry(MeshError::NonpositiveJacobian {
                            grid: block.id,
                            i,
                            j,
                            jac,
                        }));
                    }
                    diag[e * n1d * n1d + a * n1d + b] = w[a] * w[b] * jac;
                }
            }
        }
        Ok(Self { n1d, diag })
    }

    pub fn entry(&self, e: usize, a: usize, b: usize) -> f64 {
        self.diag[e * self.n1d * self.n1d + a * self.n1d + b]
    }
}

/// State vector abstraction for the explicit Runge-Kutta driver.
pub trait RkVector: Clone + Send + Sync {
    /// self = base + sum_k coef_k terms_k.
    fn assign_lincomb(&mut self, base: &Self, terms: &[(f64, &Self)]);
    fn has_nan(&self) -> bool;
}

impl RkVector for Vec<f64> {
    fn assign_lincomb(&mut self, base: &Self, terms: &[(f64, &Self)]) {
        self.resize(base.len(), 0.0);
        self.copy_from_slice(base);
        for &(coef, term) in terms {
            self.par_iter_mut()
                .zip(term.par_iter())
                .with_min_len(4096)
                .for_each(|(s, t)| *s += coef * t);
        }
    }

    fn has_nan(&self) -> bool {
        self.iter().any(|v| !v.is_finite())
    }
}

/// One explicit Runge-Kutta step. `rhs(y) -> dy/dt`; `hook` runs on each
/// intermediate stage state and on the final state (the limiter slot).
pub fn rk_step_with_hook<S, R, H>(
    y0: &S,
    dt: f64,
    tableau: &ButcherTableau,
    mut rhs: R,
    mut hook: H,
) -> Result<S, DgError>
where
    S: RkVector,
    R: FnMut(&S) -> Result<S, DgError>,
    H: FnMut(&mut S),
{
    let stages = tableau.stages;
    let mut ks: Vec<S> = Vec::with_capacity(stages);
    let mut stage_state = y0.clone();
    for i in 0..stages {
        if i > 0 {
            let terms: Vec<(f64, &S)> = (0..i)
                .filter(|&j| tableau.a_at(i, j) != 0.0)
                .map(|j| (dt * tableau.a_at(i, j), &ks[j]))
                .collect();
            stage_state.assign_lincomb(y0, &terms);
            hook(&mut stage_state);
        }
        if stage_state.has_nan() {
            return Err(DgError::StepFailure { stage: i });
        }
        ks.push(rhs(&stage_state)?);
    }
    let terms: Vec<(f64, &S)> = (0..stages)
        .filter(|&i| tableau.b[i] != 0.0)
        .map(|i| (dt * tableau.b[i], &ks[i]))
        .collect();
    let mut out = y0.clone();
    out.assign_lincomb(y0, &terms);
    hook(&mut out);
    if out.has_nan() {
        return Err(DgError::StepFailure { stage: stages });
    }
    Ok(out)
}

/// rk_step without a limiter hook.
pub fn rk_step<S, R>(y0: &S, dt: f64, tableau: &ButcherTableau, rhs: R) -> Result<S, DgError>
where
    S: RkVector,
    R: FnMut(&S) -> Result<S, DgError>,
{
    rk_step_with_hook(y0, dt, tableau, rhs, |_| {})
}

/// CFL time step: dt = cfl * min_e h_min(e) / ((2N+1) max wave speed in e).
pub fn compute_dt(
    field: &Field,
    block: &StructuredBlock,
    geom: &GridGeometry,
    gas: GasModel,
    cfl: f64,
) -> Result<f64, DgError> {
    let n1d = field.n1d();
    let factor = 2.0 * field.degree as f64 + 1.0;
    let mut dt = f64::INFINITY;
    for e in 0..field.num_elems {
        if !block.active[e] {
            continue;
        }
        let mut speed: f64 = 0.0;
        for a in 0..n1d {
            for b in 0..n1d {
                let q = field.node(e, a, b);
                let c = q
                    .sound_speed(gas)
                    .map_err(|_| DgError::UnphysicalState { grid: block.id, elem: e })?;
                let vel = (q.u() * q.u() + q.v() * q.v()).sqrt();
                speed = speed.max(vel + c);
            }
        }
        dt = dt.min(geom.h_min(e) / (factor * speed));
    }
    Ok(cfl * dt)
}

/// Quadrature L2 norm of (Q_h - Q_exact) per variable over active elements,
/// over-integrated with an (N+3)-point rule so interpolation error at the
/// solution nodes is not silently measured as zero.
pub fn l2_error(
    field: &Field,
    block: &StructuredBlock,
    geom: &GridGeometry,
    basis: &NodalBasis,
    exact: impl Fn(f64, f64) -> ConsState,
) -> [f64; 4] {
    let _ = geom;
    let fine = crate::basis::gauss_legendre(field.n1d() + 2).expect("valid rule");
    let mut acc = [0.0; 4];
    for e in 0..field.num_elems {
        if !block.active[e] {
            continue;
        }
        for (a, &r) in fine.nodes.iter().enumerate() {
            for (b, &s) in fine.nodes.iter().enumerate() {
                let d = block.map_deriv(e, r, s);
                let jac = d[0] * d[3] - d[1] * d[2];
                let ww = fine.weights[a] * fine.weights[b] * jac;
                let p = block.map_eval(e, r, s);
                let qh = field.eval(basis, e, r, s).to_array();
                let qe = exact(p[0], p[1]).to_array();
                for v in 0..4 {
                    let diff = qh[v] - qe[v];
                    acc[v] += ww * diff * diff;
                }
            }
        }
    }
    acc.map(f64::sqrt)
}

/// Discrete L2 of (Q_new - Q_old)/dt over all variables and active elements.
pub fn steady_residual_norm(
    field_old: &Field,
    field_new: &Field,
    block: &StructuredBlock,
    geom: &GridGeometry,
    basis: &NodalBasis,
    dt: f64,
) -> f64 {
    assert_eq!(field_old.data.len(), field_new.data.len());
    let n1d = field_old.n1d();
    let w = &basis.rule.weights;
    let mut acc = 0.0;
    for e in 0..field_old.num_elems {
        if !block.active[e] {
            continue;
        }
        for a in 0..n1d {
            for b in 0..n1d {
                let g = geom.vol_index(e, a, b);
                let ww = w[a] * w[b] * geom.jac[g];
                let i = field_old.idx(e, a, b);
                for v in 0..4 {
                    let d = (field_new.data[i + v] - field_old.data[i + v]) / dt;
                    acc += ww * d * d;
                }
            }
        }
    }
    acc.sqrt()
}

/// Total integrals of the conserved variables (conservation monitoring).
pub fn total_integrals(
    field: &Field,
    block: &StructuredBlock,
    geom: &GridGeometry,
    basis: &NodalBasis,
) -> [f64; 4] {
    let n1d = field.n1d();
    let w = &basis.rule.weights;
    let mut acc = [0.0; 4];
    for e in 0..field.num_elems {
        if !block.active[e] {
            continue;
        }
        for a in 0..n1d {
            for b in 0..n1d {
                let g = geom.vol_index(e, a, b);
                let ww = w[a] * w[b] * geom.jac[g];
                let i = field.idx(e, a, b);
                for v in 0..4 {
                    acc[v] += ww * field.data[i + v];
                }
            }
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::cached_basis;
    use crate::mesh::{build_cartesian_block, build_cylinder_block, BoundaryTag, CylinderExtents};
    use approx::assert_abs_diff_eq;

    #[test]
    fn mass_matrix_cartesian_cell() {
        // h x h cell at N = 1: m_ab = w_a w_b h^2 / 4 with w from gauss_legendre(2).
        let basis = cached_basis(1);
        let h = 0.3;
        let block =
            build_cartesian_block([0.0, h], [0.0, h], 1, 1, [BoundaryTag::Wall; 4]).unwrap();
        let geom = GridGeometry::build(&block, &basis).unwrap();
        let m = MassMatrix::build(&block, &geom, &basis).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                assert_abs_diff_eq!(m.entry(0, a, b), h * h / 4.0, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn mass_matrix_sums_to_element_area() {
        let basis = cached_basis(3);
        let block =
            build_cartesian_block([0.0, 2.0], [0.0, 1.0], 4, 4, [BoundaryTag::Wall; 4]).unwrap();
        let geom = GridGeometry::build(&block, &basis).unwrap();
        let m = MassMatrix::build(&block, &geom, &basis).unwrap();
        for e in 0..block.num_elems() {
            let total: f64 = (0..4)
                .flat_map(|a| (0..4).map(move |b| (a, b)))
                .map(|(a, b)| m.entry(e, a, b))
                .sum();
            assert_abs_diff_eq!(total, geom.area[e], epsilon = 1e-12);
        }
    }

    #[test]
    fn mass_matrix_positive_on_curvilinear_wall_cells() {
        let basis = cached_basis(2);
        let block = build_cylinder_block(0.5, CylinderExtents::default(), 16, 8, 2).unwrap();
        let geom = GridGeometry::build(&block, &basis).unwrap();
        let m = MassMatrix::build(&block, &geom, &basis).unwrap();
        assert!(m.diag.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn rk_zero_rhs_leaves_state_unchanged() {
        let y0: Vec<f64> = vec![1.0, -2.0, 3.5];
        let tab = ButcherTableau::rk5();
        let y1 = rk_step(&y0, 0.1, &tab, |y| Ok(vec![0.0; y.len()])).unwrap();
        assert_eq!(y0, y1);
    }

    #[test]
    fn rk_convergence_orders_on_rotation_system() {
        // q' = A q with A = [[0, -w], [w, 0]]: exact solution is a rotation.
        let omega = 3.0f64;
        let t_final = 1.0;
        let exact = |t: f64| vec![(omega * t).cos(), (omega * t).sin()];
        for (tab, expected_order) in [
            (ButcherTableau::rk2(), 2.0),
            (ButcherTableau::rk3(), 3.0),
            (ButcherTableau::rk4(), 4.0),
            (ButcherTableau::rk5(), 5.0),
        ] {
            let mut errors = Vec::new();
            let resolutions = [40usize, 80, 160];
            for &n in &resolutions {
                let dt = t_final / n as f64;
                let mut y = vec![1.0, 0.0];
                for _ in 0..n {
                    y = rk_step(&y, dt, &tab, |y| Ok(vec![-omega * y[1], omega * y[0]])).unwrap();
                }
                let ex = exact(t_final);
                let err = ((y[0] - ex[0]).powi(2) + (y[1] - ex[1]).powi(2)).sqrt();
                errors.push(err);
            }
            for k in 1..errors.len() {
                let rate = (errors[k - 1] / errors[k]).log2();
                assert!(
                    (rate - expected_order).abs() < 0.25,
                    "tableau order {expected_order}: observed rate {rate}, errors {errors:?}"
                );
            }
        }
    }

    #[test]
    fn rk_nan_rhs_reports_stage() {
        let y0 = vec![1.0];
        let tab = ButcherTableau::rk3();
        let res = rk_step(&y0, 0.1, &tab, |_| Ok(vec![f64::NAN]));
        assert!(matches!(res, Err(DgError::StepFailure { .. })));
    }

    #[test]
    fn compute_dt_scales_linearly_with_cfl() {
        let basis = cached_basis(2);
        let block =
            build_cartesian_block([0.0, 1.0], [0.0, 1.0], 4, 4, [BoundaryTag::Wall; 4]).unwrap();
        let geom = GridGeometry::build(&block, &basis).unwrap();
        let mut field = Field::new(0, 2, block.num_elems());
        let gas = GasModel::default();
        field.init_from(&geom, |_, _| {
            crate::euler::PrimState::new(1.0, 0.5, -0.2, 1.0).to_cons(gas)
        });
        let d1 = compute_dt(&field, &block, &geom, gas, 0.4).unwrap();
        let d2 = compute_dt(&field, &block, &geom, gas, 0.2).unwrap();
        assert_abs_diff_eq!(d1, 2.0 * d2, epsilon = 1e-15);
    }

    #[test]
    fn l2_error_zero_for_matching_constant() {
        let basis = cached_basis(2);
        let block =
            build_cartesian_block([0.0, 1.0], [0.0, 1.0], 3, 3, [BoundaryTag::Wall; 4]).unwrap();
        let geom = GridGeometry::build(&block, &basis).unwrap();
        let gas = GasModel::default();
        let state = crate::euler::PrimState::new(1.2, 0.3, 0.1, 0.9).to_cons(gas);
        let mut field = Field::new(0, 2, block.num_elems());
        field.init_from(&geom, |_, _| state);
        let err = l2_error(&field, &block, &geom, &basis, |_, _| state);
        for v in err {
            assert_abs_diff_eq!(v, 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn steady_residual_norm_zero_for_identical_fields() {
        let basis = cached_basis(1);
        let block =
            build_cartesian_block([0.0, 1.0], [0.0, 1.0], 3, 3, [BoundaryTag::Wall; 4]).unwrap();
        let geom = GridGeometry::build(&block, &basis).unwrap();
        let mut field = Field::new(0, 1, block.num_elems());
        field.init_from(&geom, |x, y| ConsState::new(1.0 + x, 0.1 * y, 0.0, 2.5));
        let norm = steady_residual_norm(&field, &field.clone(), &block, &geom, &basis, 0.1);
        assert_eq!(norm, 0.0);
    }

    #[test]
    fn field_eval_reproduces_nodal_values_and_polynomials() {
        let basis = cached_basis(2);
        let block =
            build_cartesian_block([0.0, 2.0], [0.0, 2.0], 2, 2, [BoundaryTag::Wall; 4]).unwrap();
        let geom = GridGeometry::build(&block, &basis).unwrap();
        let mut field = Field::new(0, 2, block.num_elems());
        // A global tensor polynomial of degree <= N is represented exactly.
        let poly = |x: f64, y: f64| ConsState::new(1.0 + x * x + y, x * y, y * y, 3.0 + x);
        field.init_from(&geom, |x, y| poly(x, y));
        // Nodal reproduction.
        let q = field.node(1, 0, 1);
        let g = geom.vol_index(1, 0, 1);
        let expect = poly(geom.x[g], geom.y[g]);
        assert_abs_diff_eq!(q.rho, expect.rho, epsilon = 1e-14);
        // Off-node evaluation.
        let e = 3;
        let p = block.map_eval(e, 0.37, -0.58);
        let qe = field.eval(&basis, e, 0.37, -0.58);
        let ex = poly(p[0], p[1]);
        for (a, b) in qe.to_array().iter().zip(ex.to_array()) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
    }
}
