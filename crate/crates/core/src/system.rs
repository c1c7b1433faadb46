//! Coupled multi-grid solver state: per-grid operators, donor maps and the
//! Runge-Kutta stage loop with exchange, limiting and a positivity safeguard.
//!
//! Exchange runs before every stage's residual evaluation; limiting runs on
//! each updated stage state, restricted to the configured grid scope.

use std::sync::Arc;

use thiserror::Error;

use crate::basis::{cached_basis, NodalBasis};
use crate::dg::{
    residual, ArtificialFaces, BcData, ButcherTableau, DgError, Field, FluxScratch, MassMatrix,
};
use crate::euler::{ConsState, FluxKind, GasModel};
use crate::limiter::{kxrcf_detect, weno_limit, LimiterConfig, LimiterScope};
use crate::mesh::{GridGeometry, MeshError, StructuredBlock, FACES};
use crate::overset::{
    build_donor_maps, build_spatial_index, exchange_states, DonorMap, GridContext, OversetError,
    SpatialIndex,
};

#[derive(Debug, Error)]
pub enum SystemError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Overset(#[from] OversetError),
    #[error(transparent)]
    Dg(#[from] DgError),
    #[error("grid ids must be contiguous from zero, got {0:?}")]
    BadGridIds(Vec<usize>),
}

/// One grid's precomputed operators.
pub struct SystemGrid {
    pub block: StructuredBlock,
    pub geom: GridGeometry,
    pub index: SpatialIndex,
    pub art: ArtificialFaces,
    pub mass: MassMatrix,
    pub flux: FluxKind,
}

pub struct System {
    pub basis: Arc<NodalBasis>,
    pub gas: GasModel,
    pub degree: usize,
    pub grids: Vec<SystemGrid>,
    pub donors: Vec<DonorMap>,
    pub free_stream: ConsState,
    pub post_shock: ConsState,
    pub limiter_scope: LimiterScope,
    pub limiter_cfg: LimiterConfig,
    /// Squeeze nodal polynomials toward the cell average when a quadrature
    /// point would go unphysical; inactive on healthy data.
    pub positivity_guard: bool,
}

/// Outcome of one attempted step.
#[derive(Debug)]
pub enum StepOutcome {
    Accepted(Vec<Field>),
    /// Unphysical state or NaN; caller should retry with a smaller dt.
    Rejected(DgError),
}

impl System {
    pub fn assemble(
        blocks: Vec<StructuredBlock>,
        fluxes: Vec<FluxKind>,
        degree: usize,
        quad_extra: usize,
        gas: GasModel,
        free_stream: ConsState,
        post_shock: ConsState,
        limiter_scope: LimiterScope,
        limiter_cfg: LimiterConfig,
    ) -> Result<Self, SystemError> {
        assert_eq!(blocks.len(), fluxes.len());
        let ids: Vec<usize> = blocks.iter().map(|b| b.id).collect();
        if ids.iter().enumerate().any(|(k, &id)| k != id) {
            return Err(SystemError::BadGridIds(ids));
        }
        let basis = cached_basis(degree);
        let mut grids = Vec::with_capacity(blocks.len());
        for (block, flux) in blocks.into_iter().zip(fluxes) {
            let geom = GridGeometry::build_with_quadrature(&block, &basis, quad_extra)?;
            let index = build_spatial_index(&block);
            let art = ArtificialFaces::scan(&block, geom.nq);
            let mass = MassMatrix::build(&block, &geom, &basis)?;
            grids.push(SystemGrid {
                block,
                geom,
                index,
                art,
                mass,
                flux,
            });
        }
        let contexts: Vec<GridContext> = grids
            .iter()
            .map(|g| GridContext {
                block: &g.block,
                geom: &g.geom,
                index: &g.index,
                art: &g.art,
            })
            .collect();
        let donors = build_donor_maps(&contexts)?;
        Ok(Self {
            basis,
            gas,
            degree,
            grids,
            donors,
            free_stream,
            post_shock,
            limiter_scope,
            limiter_cfg,
            positivity_guard: true,
        })
    }

    pub fn num_grids(&self) -> usize {
        self.grids.len()
    }

    pub fn init_fields(&self, f: impl Fn(f64, f64) -> ConsState) -> Vec<Field> {
        self.grids
            .iter()
            .map(|g| {
                let mut field = Field::new(g.block.id, self.degree, g.block.num_elems());
                field.init_from(&g.geom, &f);
                field
            })
            .collect()
    }

    /// Global time step: minimum of the per-grid CFL steps.
    pub fn compute_dt(&self, fields: &[Field], cfl: f64) -> Result<f64, DgError> {
        let mut dt = f64::INFINITY;
        for (g, field) in self.grids.iter().zip(fields) {
            dt = dt.min(crate::dg::compute_dt(field, &g.block, &g.geom, self.gas, cfl)?);
        }
        Ok(dt)
    }

    fn exchange(&self, fields: &[Field], qplus: &mut [Vec<f64>]) -> Result<(), OversetError> {
        let blocks: Vec<&StructuredBlock> = self.grids.iter().map(|g| &g.block).collect();
        for (map, buf) in self.donors.iter().zip(qplus.iter_mut()) {
            exchange_states(map, fields, &blocks, &self.basis, buf)?;
        }
        Ok(())
    }

    fn rhs(
        &self,
        fields: &[Field],
        qplus: &[Vec<f64>],
        rates: &mut [Vec<f64>],
        scratch: &mut [FluxScratch],
    ) -> Result<(), DgError> {
        let n1d = self.degree + 1;
        // Field-wide max wave speed, refreshed per stage for the global
        // Lax-Friedrichs variant.
        let global_lambda = if self.grids.iter().any(|g| g.flux == FluxKind::LaxFriedrichsGlobal) {
            let mut lambda: f64 = 0.0;
            for (gi, g) in self.grids.iter().enumerate() {
                for e in 0..g.block.num_elems() {
                    if !g.block.active[e] {
                        continue;
                    }
                    for a in 0..n1d {
                        for b in 0..n1d {
                            let q = fields[gi].node(e, a, b);
                            let c = q.sound_speed(self.gas).map_err(|_| {
                                DgError::UnphysicalState { grid: g.block.id, elem: e }
                            })?;
                            let vel = (q.u() * q.u() + q.v() * q.v()).sqrt();
                            lambda = lambda.max(vel + c);
                        }
                    }
                }
            }
            lambda
        } else {
            0.0
        };
        for (gi, g) in self.grids.iter().enumerate() {
            let bc = BcData {
                gas: self.gas,
                free_stream: self.free_stream,
                post_shock: self.post_shock,
                artificial: &g.art,
                qplus: &qplus[gi],
                global_lambda,
            };
            residual(
                &g.block,
                &g.geom,
                &self.basis,
                g.flux,
                &bc,
                &fields[gi].data,
                &mut rates[gi],
                &mut scratch[gi],
            )?;
            // dQ/dt = -M^{-1} R on active elements.
            let rate = &mut rates[gi];
            for e in 0..g.block.num_elems() {
                if !g.block.active[e] {
                    continue;
                }
                for a in 0..n1d {
                    for b in 0..n1d {
                        let m = g.mass.entry(e, a, b);
                        let o = ((e * n1d + a) * n1d + b) * 4;
                        for v in 0..4 {
                            rate[o + v] = -rate[o + v] / m;
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Limiter hook: detection and limiting on the scoped grids, then the
    /// positivity safeguard everywhere.
    fn apply_limiters(&self, fields: &mut [Field]) -> Result<(), DgError> {
        for (gi, g) in self.grids.iter().enumerate() {
            if self.limiter_scope.contains(g.block.id) {
                let troubled = kxrcf_detect(
                    &fields[gi],
                    &g.block,
                    &g.geom,
                    &self.basis,
                    self.gas,
                    &self.limiter_cfg,
                );
                weno_limit(
                    &mut fields[gi],
                    &troubled,
                    &g.block,
                    &g.geom,
                    &self.basis,
                    self.gas,
                    &self.limiter_cfg,
                );
            }
            if self.positivity_guard {
                self.guard_grid(gi, &mut fields[gi])?;
            }
        }
        Ok(())
    }

    /// Convex squeeze toward the cell average restoring rho > 0 and p > 0 at
    /// volume nodes and face trace points. Cells already physical are left
    /// bit-for-bit untouched. An unphysical cell average is unrecoverable
    /// here and reported for the driver to shrink dt.
    fn guard_grid(&self, gi: usize, field: &mut Field) -> Result<(), DgError> {
        const EPS: f64 = 1e-10;
        let g = &self.grids[gi];
        let n1d = self.degree + 1;
        let basis = &self.basis;
        for e in 0..g.block.num_elems() {
            if !g.block.active[e] {
                continue;
            }
            // Cheap volume-node screen; face traces are only examined when a
            // cell shows a deep relative undershoot (candidate near-vacuum).
            let mut rho_min = f64::INFINITY;
            let mut p_min = f64::INFINITY;
            let mut rho_max: f64 = 0.0;
            let mut p_max: f64 = 0.0;
            for a in 0..n1d {
                for b in 0..n1d {
                    let q = field.node(e, a, b);
                    let p = q.pressure(self.gas).unwrap_or(-1.0);
                    rho_min = rho_min.min(q.rho);
                    p_min = p_min.min(p);
                    rho_max = rho_max.max(q.rho);
                    p_max = p_max.max(p);
                }
            }
            let suspicious =
                rho_min <= 0.2 * rho_max || p_min <= 0.2 * p_max || rho_min <= EPS || p_min <= EPS;
            if !suspicious {
                continue;
            }
            let mut states: Vec<ConsState> = Vec::with_capacity(n1d * n1d + 4 * n1d);
            for a in 0..n1d {
                for b in 0..n1d {
                    states.push(field.node(e, a, b));
                }
            }
            for face in FACES {
                for k in 0..n1d {
                    let (r, s) = crate::mesh::face_point(face, basis.rule.nodes[k]);
                    states.push(field.eval(basis, e, r, s));
                }
            }
            let needs_fix = states.iter().any(|q| {
                q.rho <= EPS || !matches!(q.pressure(self.gas), Ok(p) if p > EPS)
            });
            if !needs_fix {
                continue;
            }
            let avg = field.cell_average(basis, &g.geom, e);
            let qbar = ConsState::new(avg[0], avg[1], avg[2], avg[3]);
            let pbar = match qbar.pressure(self.gas) {
                Ok(p) if p > EPS && qbar.rho > EPS => p,
                _ => {
                    return Err(DgError::UnphysicalState {
                        grid: g.block.id,
                        elem: e,
                    })
                }
            };
            // theta from the density bound (linear) and pressure bound
            // (pressure is concave along the segment toward the average, so
            // the chord gives a sufficient theta).
            let mut theta: f64 = 1.0;
            for q in &states {
                if q.rho < EPS {
                    theta = theta.min((qbar.rho - EPS) / (qbar.rho - q.rho));
                }
                let p = q.pressure(self.gas).unwrap_or(-1.0);
                if p < EPS {
                    theta = theta.min((pbar - EPS) / (pbar - p));
                }
            }
            let theta = theta.clamp(0.0, 1.0);
            for a in 0..n1d {
                for b in 0..n1d {
                    let q = field.node(e, a, b);
                    field.set_node(
                        e,
                        a,
                        b,
                        ConsState::new(
                            qbar.rho + theta * (q.rho - qbar.rho),
                            qbar.rho_u + theta * (q.rho_u - qbar.rho_u),
                            qbar.rho_v + theta * (q.rho_v - qbar.rho_v),
                            qbar.e + theta * (q.e - qbar.e),
                        ),
                    );
                }
            }
        }
        Ok(())
    }

    /// One explicit Runge-Kutta step of all grids. Rejections (unphysical
    /// states, NaN) are reported for the caller to retry with a smaller dt.
    pub fn step(&self, fields: &[Field], dt: f64, tableau: &ButcherTableau) -> StepOutcome {
        match self.try_step(fields, dt, tableau) {
            Ok(next) => StepOutcome::Accepted(next),
            Err(e) => StepOutcome::Rejected(e),
        }
    }

    fn try_step(
        &self,
        fields: &[Field],
        dt: f64,
        tableau: &ButcherTableau,
    ) -> Result<Vec<Field>, DgError> {
        let ng = self.grids.len();
        let stages = tableau.stages;
        let mut qplus: Vec<Vec<f64>> = vec![Vec::new(); ng];
        let mut scratch: Vec<FluxScratch> = vec![FluxScratch::default(); ng];
        let mut ks: Vec<Vec<Vec<f64>>> = Vec::with_capacity(stages);
        let mut stage_fields: Vec<Field> = fields.to_vec();

        for i in 0..stages {
            if i > 0 {
                for (gi, sf) in stage_fields.iter_mut().enumerate() {
                    sf.data.copy_from_slice(&fields[gi].data);
                    for (j, k) in ks.iter().enumerate() {
                        let a = tableau.a_at(i, j);
                        if a != 0.0 {
                            for (s, t) in sf.data.iter_mut().zip(&k[gi]) {
                                *s += dt * a * t;
                            }
                        }
                    }
                }
                self.apply_limiters(&mut stage_fields)?;
            }
            for sf in &stage_fields {
                if sf.has_nan() {
                    return Err(DgError::StepFailure { stage: i });
                }
            }
            self.exchange(&stage_fields, &mut qplus).map_err(|e| match e {
                OversetError::InvalidatedDonor { grid, elem } => {
                    DgError::UnphysicalState { grid, elem }
                }
                _ => DgError::StepFailure { stage: i },
            })?;
            let mut rates: Vec<Vec<f64>> =
                fields.iter().map(|f| vec![0.0; f.data.len()]).collect();
            self.rhs(&stage_fields, &qplus, &mut rates, &mut scratch)?;
            ks.push(rates);
        }

        let mut out: Vec<Field> = fields.to_vec();
        for (gi, f) in out.iter_mut().enumerate() {
            for (i, k) in ks.iter().enumerate() {
                let b = tableau.b[i];
                if b != 0.0 {
                    for (s, t) in f.data.iter_mut().zip(&k[gi]) {
                        *s += dt * b * t;
                    }
                }
            }
        }
        self.apply_limiters(&mut out)?;
        for f in &out {
            if f.has_nan() {
                return Err(DgError::StepFailure { stage: stages });
            }
        }
        Ok(out)
    }

    /// Robust advance: retry with halved dt on rejection, up to `max_halvings`.
    pub fn advance(
        &self,
        fields: &mut Vec<Field>,
        dt: f64,
        tableau: &ButcherTableau,
        max_halvings: u32,
    ) -> Result<f64, DgError> {
        let mut attempt_dt = dt;
        for _ in 0..=max_halvings {
            match self.step(fields, attempt_dt, tableau) {
                StepOutcome::Accepted(next) => {
                    *fields = next;
                    return Ok(attempt_dt);
                }
                StepOutcome::Rejected(_) => {
                    attempt_dt *= 0.5;
                }
            }
        }
        match self.step(fields, attempt_dt, tableau) {
            StepOutcome::Accepted(next) => {
                *fields = next;
                Ok(attempt_dt)
            }
            StepOutcome::Rejected(e) => Err(e),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::euler::PrimState;
    use crate::mesh::{build_cartesian_block, build_cylinder_block, BoundaryTag, CylinderExtents};

    const GAS: GasModel = GasModel { gamma: 1.4 };

    #[test]
    fn free_stream_is_preserved_on_curvilinear_mesh_for_1000_steps() {
        // Uniform flow on the half O-grid with wall/inflow/outflow boundaries
        // must stay uniform to 1e-10; exercises the metric terms end to end.
        let block = build_cylinder_block(0.5, CylinderExtents::default(), 24, 12, 2).unwrap();
        // Wall-tangent uniform flow is not wall-consistent, so use a state at
        // rest (only pressure): the exact steady solution on any geometry.
        let state = PrimState::new(1.0, 0.0, 0.0, 1.0 / 1.4).to_cons(GAS);
        let system = System::assemble(
            vec![block],
            vec![FluxKind::LaxFriedrichs],
            2,
            0,
            GAS,
            state,
            state,
            LimiterScope::none(),
            LimiterConfig::default(),
        )
        .unwrap();
        let mut fields = system.init_fields(|_, _| state);
        let tab = ButcherTableau::rk3();
        let dt = system.compute_dt(&fields, 0.4).unwrap();
        for _ in 0..1000 {
            match system.step(&fields, dt, &tab) {
                StepOutcome::Accepted(next) => fields = next,
                StepOutcome::Rejected(e) => panic!("rejected: {e}"),
            }
        }
        let mut max_dev: f64 = 0.0;
        let expect = state.to_array();
        for f in &fields {
            for (k, v) in f.data.iter().enumerate() {
                max_dev = max_dev.max((v - expect[k % 4]).abs());
            }
        }
        assert!(max_dev <= 1e-10, "free-stream drift {max_dev:e}");
    }

    #[test]
    fn scope_enforcement_leaves_background_untouched_bit_for_bit() {
        // Overset pair with the limiter scoped to grid 1 only: stepping with
        // and without the scope yields bit-identical background coefficients
        // when the background is never flagged; stronger, the limiting stage
        // itself must not write to grid 0. We verify by running the limiter
        // hook directly on a smooth two-grid state.
        let mut bg = build_cartesian_block([0.0, 1.0], [0.0, 1.0], 8, 8, [BoundaryTag::Outflow; 4]).unwrap();
        bg.id = 0;
        let mut ov = build_cartesian_block([0.25, 0.75], [0.25, 0.75], 8, 8, [BoundaryTag::Artificial; 4]).unwrap();
        ov.id = 1;
        let ov_index = crate::overset::build_spatial_index(&ov);
        crate::overset::cut_hole(&mut bg, &ov, &ov_index, 2).unwrap();
        let state_fn = |x: f64, y: f64| {
            PrimState::new(1.0 + 0.2 * (3.0 * x).sin() * (2.0 * y).cos(), 0.7, 0.1, 1.0).to_cons(GAS)
        };
        let system = System::assemble(
            vec![bg, ov],
            vec![FluxKind::LaxFriedrichs, FluxKind::Slau2],
            2,
            0,
            GAS,
            PrimState::new(1.0, 0.7, 0.1, 1.0).to_cons(GAS),
            PrimState::new(1.0, 0.7, 0.1, 1.0).to_cons(GAS),
            LimiterScope::all([1]),
            LimiterConfig::default(),
        )
        .unwrap();
        let mut fields = system.init_fields(state_fn);
        let before = fields[0].data.clone();
        system.apply_limiters(&mut fields).unwrap();
        assert_eq!(before, fields[0].data);
    }

    #[test]
    fn positivity_guard_restores_physical_states_and_preserves_averages() {
        let block = build_cartesian_block([0.0, 1.0], [0.0, 1.0], 2, 2, [BoundaryTag::Outflow; 4]).unwrap();
        let state = PrimState::new(1.0, 0.0, 0.0, 1.0).to_cons(GAS);
        let system = System::assemble(
            vec![block],
            vec![FluxKind::LaxFriedrichs],
            1,
            0,
            GAS,
            state,
            state,
            LimiterScope::none(),
            LimiterConfig::default(),
        )
        .unwrap();
        let mut fields = system.init_fields(|_, _| state);
        // Corrupt one node of element 0 to negative density but keep the
        // average physical.
        let q_bad = ConsState::new(-0.2, 0.0, 0.0, 2.5);
        fields[0].set_node(0, 0, 0, q_bad);
        let avg_before = fields[0].cell_average(&system.basis, &system.grids[0].geom, 0);
        system.guard_grid(0, &mut fields[0]).unwrap();
        let avg_after = fields[0].cell_average(&system.basis, &system.grids[0].geom, 0);
        for v in 0..4 {
            assert!((avg_before[v] - avg_after[v]).abs() <= 1e-13);
        }
        for a in 0..2 {
            for b in 0..2 {
                let q = fields[0].node(0, a, b);
                assert!(q.rho > 0.0);
                assert!(q.pressure(GAS).unwrap() > 0.0);
            }
        }
    }
}
