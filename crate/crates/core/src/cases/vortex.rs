//! Isentropic vortex validation: exact solution, plain and overset layouts,
//! and the convergence-order harness.

use crate::dg::{ButcherTableau, Field};
use crate::euler::{ConsState, GasModel, PrimState};
use crate::limiter::{LimiterConfig, LimiterScope};
use crate::mesh::{build_cartesian_block, BoundaryTag};
use crate::overset::{build_spatial_index, cut_hole, locate_point};
use crate::system::{StepOutcome, System, SystemError};

/// Vortex strength profile. Both are exact Euler solutions of the same
/// family; they differ in the exponent of the velocity perturbation (and the
/// matching density coefficient).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VortexProfile {
    /// Velocity perturbation ~ e^{1 - r^2}: the narrow, strong core.
    Narrow,
    /// Velocity perturbation ~ e^{(1 - r^2)/2}: the widely used milder core.
    Classic,
}

/// Closed-form isentropic vortex advecting in +x with unit speed, periodic on
/// [0,10] x [-5,5]; p = rho^gamma pointwise.
#[derive(Debug, Clone, Copy)]
pub struct VortexExact {
    pub x0: f64,
    pub y0: f64,
    pub beta: f64,
    pub gas: GasModel,
    pub domain: [f64; 4],
    pub profile: VortexProfile,
}

impl Default for VortexExact {
    fn default() -> Self {
        Self {
            x0: 5.0,
            y0: 0.0,
            beta: 5.0,
            gas: GasModel::default(),
            domain: [0.0, 10.0, -5.0, 5.0],
            profile: VortexProfile::Narrow,
        }
    }
}

impl VortexExact {
    pub fn with_profile(profile: VortexProfile) -> Self {
        Self {
            profile,
            ..Self::default()
        }
    }

    pub fn prim(&self, x: f64, y: f64, t: f64) -> PrimState {
        let gamma = self.gas.gamma;
        let lx = self.domain[1] - self.domain[0];
        let ly = self.domain[3] - self.domain[2];
        // Periodic wrapping of the vortex center displacement.
        let mut dx = x - self.x0 - t;
        dx -= lx * (dx / lx).round();
        let mut dy = y - self.y0;
        dy -= ly * (dy / ly).round();
        let r2 = dx * dx + dy * dy;
        let pi = std::f64::consts::PI;
        // rho = (1 - c_rho e^{2 phi})^{1/(gamma-1)}, du = -beta e^{phi} dy/(2 pi)
        // with phi the profile exponent; c_rho makes the field an exact
        // solution for either phi.
        let (phi, c_rho) = match self.profile {
            VortexProfile::Narrow => (
                1.0 - r2,
                (gamma - 1.0) / (16.0 * gamma * pi * pi) * self.beta * self.beta,
            ),
            VortexProfile::Classic => (
                0.5 * (1.0 - r2),
                (gamma - 1.0) / (8.0 * gamma * pi * pi) * self.beta * self.beta,
            ),
        };
        let e1 = phi.exp();
        let rho = (1.0 - c_rho * (2.0 * phi).exp()).powf(1.0 / (gamma - 1.0));
        let u = 1.0 - self.beta * e1 * dy / (2.0 * pi);
        let v = self.beta * e1 * dx / (2.0 * pi);
        PrimState::new(rho, u, v, rho.powf(gamma))
    }

    pub fn cons(&self, x: f64, y: f64, t: f64) -> ConsState {
        self.prim(x, y, t).to_cons(self.gas)
    }
}

/// Overset layout for the vortex validation: a same-cell-size patch over the
/// middle of the domain, background hole cut beneath it.
#[derive(Debug, Clone, Copy)]
pub struct VortexLayout {
    /// Cells per unit length times domain length 10 gives inv_h * 10 = n.
    pub inv_h: usize,
    /// Patch extents (lattice-aligned with the background).
    pub patch: [f64; 4],
    pub with_overset: bool,
}

/// Assemble grids for a vortex run of grid size 1/inv_h.
pub fn vortex_system(
    layout: &VortexLayout,
    degree: usize,
    quad_extra: usize,
    gas: GasModel,
) -> Result<System, SystemError> {
    let vx = VortexExact::default();
    // Grid size label "1/n" pairs with an n x n element mesh of the 10 x 10
    // domain (the 1/40 study uses 40 by 40 elements).
    let n = layout.inv_h;
    let mut bg = build_cartesian_block(
        [vx.domain[0], vx.domain[1]],
        [vx.domain[2], vx.domain[3]],
        n,
        n,
        [BoundaryTag::Periodic; 4],
    )?;
    bg.id = 0;
    let free = vx.cons(0.0, 0.0, 0.0);
    if !layout.with_overset {
        return System::assemble(
            vec![bg],
            vec![crate::euler::FluxKind::LaxFriedrichs],
            degree,
            quad_extra,
            gas,
            free,
            free,
            LimiterScope::none(),
            LimiterConfig::default(),
        );
    }
    let h = (vx.domain[1] - vx.domain[0]) / n as f64;
    // Snap the patch onto the background lattice.
    let snap = |v: f64| (v / h).round() * h;
    let px = [snap(layout.patch[0]), snap(layout.patch[1])];
    let py = [snap(layout.patch[2]), snap(layout.patch[3])];
    let pi = ((px[1] - px[0]) / h).round() as usize;
    let pj = ((py[1] - py[0]) / h).round() as usize;
    let mut patch = build_cartesian_block(px, py, pi, pj, [BoundaryTag::Artificial; 4])?;
    patch.id = 1;
    let patch_index = build_spatial_index(&patch);
    cut_hole(&mut bg, &patch, &patch_index, 2).map_err(SystemError::Overset)?;
    System::assemble(
        vec![bg, patch],
        vec![
            crate::euler::FluxKind::LaxFriedrichs,
            crate::euler::FluxKind::LaxFriedrichs,
        ],
        degree,
        quad_extra,
        gas,
        free,
        free,
        LimiterScope::none(),
        LimiterConfig::default(),
    )
}

/// March the vortex to t_final with the order-matched tableau; returns the
/// fields at t_final.
pub fn run_vortex(
    system: &System,
    vx: &VortexExact,
    t_final: f64,
    cfl: f64,
    tableau: &ButcherTableau,
) -> Result<Vec<Field>, crate::dg::DgError> {
    let mut fields = system.init_fields(|x, y| vx.cons(x, y, 0.0));
    let mut t = 0.0;
    while t < t_final - 1e-12 {
        let mut dt = system.compute_dt(&fields, cfl)?;
        if t + dt > t_final {
            dt = t_final - t;
        }
        match system.step(&fields, dt, &ButcherTableau::clone(tableau)) {
            StepOutcome::Accepted(next) => {
                fields = next;
                t += dt;
            }
            StepOutcome::Rejected(e) => return Err(e),
        }
    }
    Ok(fields)
}

/// Density L2 error at time t over a non-overlapping partition: overset grids
/// count fully; background cells whose centroid lies inside an overset grid
/// are excluded. Normalized by the counted area (root mean square).
pub fn vortex_density_error(system: &System, vx: &VortexExact, fields: &[Field], t: f64) -> f64 {
    let basis = &system.basis;
    let fine = crate::basis::gauss_legendre(system.degree + 3).expect("valid rule");
    let has_overset = system.grids.len() > 1;
    let mut acc = 0.0;
    let mut area = 0.0;
    for (gi, g) in system.grids.iter().enumerate() {
        let field = &fields[gi];
        for e in 0..g.block.num_elems() {
            if !g.block.active[e] {
                continue;
            }
            if gi == 0 && has_overset {
                let c = g.block.centroid(e);
                let covered = system
                    .grids
                    .iter()
                    .skip(1)
                    .any(|og| locate_point(&og.block, &og.index, c).is_some());
                if covered {
                    continue;
                }
            }
            for (a, &r) in fine.nodes.iter().enumerate() {
                for (b, &s) in fine.nodes.iter().enumerate() {
                    let d = g.block.map_deriv(e, r, s);
                    let jac = d[0] * d[3] - d[1] * d[2];
                    let ww = fine.weights[a] * fine.weights[b] * jac;
                    let p = g.block.map_eval(e, r, s);
                    let diff = field.eval(basis, e, r, s).rho - vx.prim(p[0], p[1], t).rho;
                    acc += ww * diff * diff;
                    area += ww;
                }
            }
        }
    }
    (acc / area).sqrt()
}

/// One resolution row of the convergence study.
#[derive(Debug, Clone)]
pub struct ConvergenceRow {
    pub inv_h: usize,
    pub error_plain: f64,
    pub order_plain: Option<f64>,
    pub error_overset: f64,
    pub order_overset: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ConvergenceTable {
    pub degree: usize,
    pub rows: Vec<ConvergenceRow>,
}

/// Run the vortex convergence study for one polynomial degree over the given
/// resolutions (cells per domain side), plain and overset layouts.
pub fn run_vortex_convergence(
    vx: &VortexExact,
    degree: usize,
    quad_extra: usize,
    resolutions: &[usize],
    t_final: f64,
    cfl: f64,
    with_overset: bool,
) -> Result<ConvergenceTable, SystemError> {
    let gas = vx.gas;
    let tableau = ButcherTableau::order_matched(degree + 1);
    let mut rows: Vec<ConvergenceRow> = Vec::new();
    for &n in resolutions {
        let layout_plain = VortexLayout {
            inv_h: n,
            patch: [3.0, 7.0, -2.0, 2.0],
            with_overset: false,
        };
        let sys_plain = vortex_system(&layout_plain, degree, quad_extra, gas)?;
        let fields_plain = run_vortex(&sys_plain, vx, t_final, cfl, &tableau)?;
        let error_plain = vortex_density_error(&sys_plain, vx, &fields_plain, t_final);

        let (error_overset, _) = if with_overset {
            let layout_ov = VortexLayout {
                with_overset: true,
                ..layout_plain
            };
            let sys_ov = vortex_system(&layout_ov, degree, quad_extra, gas)?;
            let fields_ov = run_vortex(&sys_ov, vx, t_final, cfl, &tableau)?;
            (vortex_density_error(&sys_ov, vx, &fields_ov, t_final), 0.0)
        } else {
            (f64::NAN, 0.0)
        };

        let (order_plain, order_overset) = match rows.last() {
            Some(prev) => {
                let ratio = n as f64 / prev.inv_h as f64;
                (
                    Some((prev.error_plain / error_plain).ln() / ratio.ln()),
                    if with_overset {
                        Some((prev.error_overset / error_overset).ln() / ratio.ln())
                    } else {
                        None
                    },
                )
            }
            None => (None, None),
        };
        rows.push(ConvergenceRow {
            inv_h: n,
            error_plain,
            order_plain,
            error_overset,
            order_overset,
        });
    }
    Ok(ConvergenceTable { degree, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn vortex_is_isentropic_and_advects() {
        let vx = VortexExact::default();
        for &(x, y) in &[(5.0, 0.0), (4.0, 1.0), (6.5, -2.0)] {
            let p = vx.prim(x, y, 0.0);
            assert_abs_diff_eq!(p.p, p.rho.powf(1.4), epsilon = 1e-14);
            // Advection property: state at (x, t) equals state at (x - t, 0).
            let later = vx.prim(x, y, 1.7);
            let shifted = vx.prim(x - 1.7, y, 0.0);
            assert_abs_diff_eq!(later.rho, shifted.rho, epsilon = 1e-13);
            assert_abs_diff_eq!(later.u, shifted.u, epsilon = 1e-13);
        }
        // One full period returns the initial state.
        let a = vx.prim(4.3, 0.7, 0.0);
        let b = vx.prim(4.3, 0.7, 10.0);
        assert_abs_diff_eq!(a.rho, b.rho, epsilon = 1e-12);
    }

    #[test]
    fn interpolated_initial_error_is_small_but_nonzero() {
        let gas = GasModel::default();
        let layout = VortexLayout {
            inv_h: 20,
            patch: [3.0, 7.0, -2.0, 2.0],
            with_overset: false,
        };
        let sys = vortex_system(&layout, 2, 0, gas).unwrap();
        let vx = VortexExact::default();
        let fields = sys.init_fields(|x, y| vx.cons(x, y, 0.0));
        let e0 = vortex_density_error(&sys, &vx, &fields, 0.0);
        assert!(e0 > 0.0 && e0 < 1e-3, "interpolation error {e0:e}");
    }
}
