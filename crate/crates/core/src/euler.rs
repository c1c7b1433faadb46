//! Compressible Euler state algebra, physical and numerical fluxes,
//! boundary ghost states and oblique/normal shock relations.
//!
//! All quantities are nondimensional with gamma = 1.4 unless a different
//! `GasModel` is passed explicitly.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EulerError {
    #[error("unphysical state: rho = {rho}, p = {p}")]
    UnphysicalState { rho: f64, p: f64 },
    #[error("no attached shock: deflection {theta_deg} deg exceeds detachment at M = {mach}")]
    NoAttachedShock { mach: f64, theta_deg: f64 },
    #[error("normal Mach {0} is not supersonic")]
    SubsonicNormalMach(f64),
}

/// Ratio of specific heats.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GasModel {
    pub gamma: f64,
}

impl Default for GasModel {
    fn default() -> Self {
        Self { gamma: 1.4 }
    }
}

pub const GAMMA: f64 = 1.4;

/// Conservative variables (rho, rho u, rho v, E).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsState {
    pub rho: f64,
    pub rho_u: f64,
    pub rho_v: f64,
    pub e: f64,
}

/// Primitive variables (rho, u, v, p).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrimState {
    pub rho: f64,
    pub u: f64,
    pub v: f64,
    pub p: f64,
}

impl ConsState {
    pub const fn new(rho: f64, rho_u: f64, rho_v: f64, e: f64) -> Self {
        Self { rho, rho_u, rho_v, e }
    }

    pub fn from_slice(q: &[f64]) -> Self {
        Self::new(q[0], q[1], q[2], q[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.rho, self.rho_u, self.rho_v, self.e]
    }

    pub fn u(&self) -> f64 {
        self.rho_u / self.rho
    }

    pub fn v(&self) -> f64 {
        self.rho_v / self.rho
    }

    /// p = (gamma-1)(E - rho(u^2+v^2)/2). Errors only on rho <= 0; a negative
    /// pressure is returned as-is so trial states can be probed.
    pub fn pressure(&self, gas: GasModel) -> Result<f64, EulerError> {
        if !(self.rho > 0.0) {
            return Err(EulerError::UnphysicalState {
                rho: self.rho,
                p: f64::NAN,
            });
        }
        let kinetic = 0.5 * (self.rho_u * self.rho_u + self.rho_v * self.rho_v) / self.rho;
        Ok((gas.gamma - 1.0) * (self.e - kinetic))
    }

    pub fn is_physical(&self, gas: GasModel) -> bool {
        self.rho > 0.0 && self.rho.is_finite() && matches!(self.pressure(gas), Ok(p) if p > 0.0 && p.is_finite())
    }

    pub fn to_prim(&self, gas: GasModel) -> Result<PrimState, EulerError> {
        let p = self.pressure(gas)?;
        Ok(PrimState {
            rho: self.rho,
            u: self.u(),
            v: self.v(),
            p,
        })
    }

    pub fn sound_speed(&self, gas: GasModel) -> Result<f64, EulerError> {
        let p = self.pressure(gas)?;
        if p <= 0.0 {
            return Err(EulerError::UnphysicalState { rho: self.rho, p });
        }
        Ok((gas.gamma * p / self.rho).sqrt())
    }
}

impl PrimState {
    pub const fn new(rho: f64, u: f64, v: f64, p: f64) -> Self {
        Self { rho, u, v, p }
    }

    pub fn to_cons(&self, gas: GasModel) -> ConsState {
        let e = self.p / (gas.gamma - 1.0) + 0.5 * self.rho * (self.u * self.u + self.v * self.v);
        ConsState::new(self.rho, self.rho * self.u, self.rho * self.v, e)
    }

    pub fn sound_speed(&self, gas: GasModel) -> f64 {
        (gas.gamma * self.p / self.rho).sqrt()
    }

    pub fn mach(&self, gas: GasModel) -> f64 {
        (self.u * self.u + self.v * self.v).sqrt() / self.sound_speed(gas)
    }
}

/// Free-stream state at inflow Mach `mach` moving in +x, normalized so that
/// rho = 1 and the sound speed is 1 (p = 1/gamma).
pub fn free_stream(mach: f64, gas: GasModel) -> PrimState {
    PrimState::new(1.0, mach, 0.0, 1.0 / gas.gamma)
}

/// x-direction physical flux F(Q) = u Q + (0, p, 0, p u).
pub fn flux_f(q: &ConsState, gas: GasModel) -> Result<[f64; 4], EulerError> {
    let p = q.pressure(gas)?;
    let u = q.u();
    Ok([
        q.rho_u,
        q.rho_u * u + p,
        q.rho_v * u,
        (q.e + p) * u,
    ])
}

/// y-direction physical flux G(Q) = v Q + (0, 0, p, p v).
pub fn flux_g(q: &ConsState, gas: GasModel) -> Result<[f64; 4], EulerError> {
    let p = q.pressure(gas)?;
    let v = q.v();
    Ok([
        q.rho_v,
        q.rho_u * v,
        q.rho_v * v + p,
        (q.e + p) * v,
    ])
}

/// Normal projection of the physical flux, F(Q) nx + G(Q) ny.
pub fn flux_normal(q: &ConsState, n: [f64; 2], gas: GasModel) -> Result<[f64; 4], EulerError> {
    let p = q.pressure(gas)?;
    let un = q.u() * n[0] + q.v() * n[1];
    Ok([
        q.rho * un,
        q.rho_u * un + p * n[0],
        q.rho_v * un + p * n[1],
        (q.e + p) * un,
    ])
}

/// |u.n| + c, the largest characteristic speed across an interface.
pub fn max_wave_speed(q: &ConsState, n: [f64; 2], gas: GasModel) -> Result<f64, EulerError> {
    let c = q.sound_speed(gas)?;
    let un = q.u() * n[0] + q.v() * n[1];
    Ok(un.abs() + c)
}

/// Local Lax-Friedrichs flux with the two-state maximum wave speed.
pub fn lax_friedrichs_flux(
    ql: &ConsState,
    qr: &ConsState,
    n: [f64; 2],
    gas: GasModel,
) -> Result<[f64; 4], EulerError> {
    let lambda = max_wave_speed(ql, n, gas)?.max(max_wave_speed(qr, n, gas)?);
    lax_friedrichs_flux_with_lambda(ql, qr, n, gas, lambda)
}

/// Lax-Friedrichs flux with a caller-supplied dissipation speed (the global
/// variant passes the field-wide maximum wave speed).
pub fn lax_friedrichs_flux_with_lambda(
    ql: &ConsState,
    qr: &ConsState,
    n: [f64; 2],
    gas: GasModel,
    lambda: f64,
) -> Result<[f64; 4], EulerError> {
    let fl = flux_normal(ql, n, gas)?;
    let fr = flux_normal(qr, n, gas)?;
    let al = ql.to_array();
    let ar = qr.to_array();
    let mut out = [0.0; 4];
    for k in 0..4 {
        out[k] = 0.5 * (fl[k] + fr[k]) - 0.5 * lambda * (ar[k] - al[k]);
    }
    Ok(out)
}

/// SLAU2 flux: mass flux with Mach-weighted pressure-difference dissipation
/// and a pressure flux scaled by sqrt((|uL|^2+|uR|^2)/2).
///
/// F = (mdot+|mdot|)/2 psiL + (mdot-|mdot|)/2 psiR + ptilde (0,nx,ny,0),
/// psi = (1, u, v, H).
pub fn slau2_flux(
    ql: &ConsState,
    qr: &ConsState,
    n: [f64; 2],
    gas: GasModel,
) -> Result<[f64; 4], EulerError> {
    let pl = ql.pressure(gas)?;
    let pr = qr.pressure(gas)?;
    if pl <= 0.0 || pr <= 0.0 {
        return Err(EulerError::UnphysicalState {
            rho: ql.rho.min(qr.rho),
            p: pl.min(pr),
        });
    }
    let (rho_l, ul, vl) = (ql.rho, ql.u(), ql.v());
    let (rho_r, ur, vr) = (qr.rho, qr.u(), qr.v());
    let hl = (ql.e + pl) / rho_l;
    let hr = (qr.e + pr) / rho_r;
    let cl = (gas.gamma * pl / rho_l).sqrt();
    let cr = (gas.gamma * pr / rho_r).sqrt();
    let cbar = 0.5 * (cl + cr);

    let vnl = ul * n[0] + vl * n[1];
    let vnr = ur * n[0] + vr * n[1];
    let ml = vnl / cbar;
    let mr = vnr / cbar;

    // g in [0,1]: detects a cell face inside a shock/expansion fan.
    let g = -(ml.min(0.0).max(-1.0)) * (mr.max(0.0).min(1.0));
    let vn_abs_avg = (rho_l * vnl.abs() + rho_r * vnr.abs()) / (rho_l + rho_r);
    let vn_abs_plus = (1.0 - g) * vn_abs_avg + g * vnl.abs();
    let vn_abs_minus = (1.0 - g) * vn_abs_avg + g * vnr.abs();

    let speed_sq_avg = 0.5 * (ul * ul + vl * vl + ur * ur + vr * vr);
    let m_hat = (speed_sq_avg.sqrt() / cbar).min(1.0);
    let chi = (1.0 - m_hat) * (1.0 - m_hat);

    let mdot = 0.5
        * (rho_l * (vnl + vn_abs_plus) + rho_r * (vnr - vn_abs_minus) - chi * (pr - pl) / cbar);

    // Pressure splitting functions.
    let f_plus = |m: f64| {
        if m.abs() >= 1.0 {
            0.5 * (1.0 + m.signum())
        } else {
            0.25 * (m + 1.0) * (m + 1.0) * (2.0 - m)
        }
    };
    let f_minus = |m: f64| {
        if m.abs() >= 1.0 {
            0.5 * (1.0 - m.signum())
        } else {
            0.25 * (m - 1.0) * (m - 1.0) * (2.0 + m)
        }
    };
    let fp = f_plus(ml);
    let fm = f_minus(mr);
    let ptilde = 0.5 * (pl + pr)
        + 0.5 * (fp - fm) * (pl - pr)
        + speed_sq_avg.sqrt() * (fp + fm - 1.0) * 0.5 * (rho_l + rho_r) * cbar;

    let psi_l = [1.0, ul, vl, hl];
    let psi_r = [1.0, ur, vr, hr];
    let pn = [0.0, n[0], n[1], 0.0];
    let mp = 0.5 * (mdot + mdot.abs());
    let mm = 0.5 * (mdot - mdot.abs());
    let mut out = [0.0; 4];
    for k in 0..4 {
        out[k] = mp * psi_l[k] + mm * psi_r[k] + ptilde * pn[k];
    }
    Ok(out)
}

/// Which numerical flux a grid uses at interior and artificial faces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FluxKind {
    /// Local two-state dissipation bound.
    LaxFriedrichs,
    /// Field-wide dissipation bound, refreshed each stage by the driver.
    LaxFriedrichsGlobal,
    Slau2,
}

pub fn numerical_flux(
    kind: FluxKind,
    ql: &ConsState,
    qr: &ConsState,
    n: [f64; 2],
    gas: GasModel,
    global_lambda: f64,
) -> Result<[f64; 4], EulerError> {
    match kind {
        FluxKind::LaxFriedrichs => lax_friedrichs_flux(ql, qr, n, gas),
        FluxKind::LaxFriedrichsGlobal => {
            lax_friedrichs_flux_with_lambda(ql, qr, n, gas, global_lambda)
        }
        FluxKind::Slau2 => slau2_flux(ql, qr, n, gas),
    }
}

/// Slip-wall ghost: normal velocity mirrored, tangential/rho/p preserved.
pub fn wall_ghost_state(q_inside: &ConsState, n: [f64; 2]) -> ConsState {
    let un = q_inside.rho_u * n[0] + q_inside.rho_v * n[1];
    ConsState::new(
        q_inside.rho,
        q_inside.rho_u - 2.0 * un * n[0],
        q_inside.rho_v - 2.0 * un * n[1],
        q_inside.e,
    )
}

/// Deflection angle theta (radians) produced by an oblique shock of angle
/// beta at Mach M: tan(theta) = 2 cot(beta)(M^2 sin^2 beta - 1)/(M^2(gamma+cos 2 beta)+2).
pub fn deflection_of(mach: f64, beta: f64, gas: GasModel) -> f64 {
    let m2 = mach * mach;
    let sb = beta.sin();
    let num = 2.0 * (m2 * sb * sb - 1.0) / beta.tan();
    let den = m2 * (gas.gamma + (2.0 * beta).cos()) + 2.0;
    (num / den).atan()
}

/// Weak-branch oblique shock angle beta (degrees) for deflection theta
/// (degrees) at Mach M, by bisection on the theta-beta-M relation.
pub fn oblique_shock_angle(mach: f64, theta_deg: f64, gas: GasModel) -> Result<f64, EulerError> {
    assert!(mach > 1.0, "upstream Mach must be supersonic");
    let theta = theta_deg.to_radians();
    let mach_angle = (1.0 / mach).asin();
    if theta_deg == 0.0 {
        return Ok(mach_angle.to_degrees());
    }
    // The deflection rises from 0 at the Mach angle to its maximum at beta_max.
    let mut lo = mach_angle;
    let mut hi = {
        // Locate the detachment maximum by golden-section-free scan + refine.
        let mut best_b = lo;
        let mut best_t = 0.0;
        let steps = 2000;
        for i in 0..=steps {
            let b = mach_angle + (std::f64::consts::FRAC_PI_2 - mach_angle) * i as f64 / steps as f64;
            let t = deflection_of(mach, b, gas);
            if t > best_t {
                best_t = t;
                best_b = b;
            }
        }
        if theta > best_t {
            return Err(EulerError::NoAttachedShock {
                mach,
                theta_deg,
            });
        }
        best_b
    };
    // Weak branch: deflection increases monotonically on [mach_angle, beta_max].
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if deflection_of(mach, mid, gas) < theta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi)).to_degrees())
}

/// Rankine-Hugoniot state behind an oblique shock of angle beta (degrees),
/// measured counterclockwise from the upstream flow direction. A positive
/// beta (shock rising to the left of the flow) deflects the flow
/// counterclockwise; a negative beta mirrors both.
pub fn post_shock_state(pre: &PrimState, beta_deg: f64, gas: GasModel) -> Result<PrimState, EulerError> {
    let beta = beta_deg.abs().to_radians();
    let sign = if beta_deg < 0.0 { -1.0 } else { 1.0 };
    let c1 = pre.sound_speed(gas);
    let speed1 = (pre.u * pre.u + pre.v * pre.v).sqrt();
    let m1 = speed1 / c1;
    let mn1 = m1 * beta.sin();
    if mn1 < 1.0 - 1e-12 {
        return Err(EulerError::SubsonicNormalMach(mn1));
    }
    if mn1 <= 1.0 + 1e-12 {
        return Ok(*pre); // Mach wave: zero strength
    }
    let g = gas.gamma;
    let mn1sq = mn1 * mn1;
    let rho_ratio = ((g + 1.0) * mn1sq) / ((g - 1.0) * mn1sq + 2.0);
    let p_ratio = 1.0 + 2.0 * g / (g + 1.0) * (mn1sq - 1.0);
    let theta = deflection_of(m1, beta, gas);

    // Normal velocity drops by the density ratio, tangential is preserved.
    let vn1 = speed1 * beta.sin();
    let vt = speed1 * beta.cos();
    let vn2 = vn1 / rho_ratio;
    let speed2 = (vn2 * vn2 + vt * vt).sqrt();
    let dir1 = (pre.v).atan2(pre.u);
    let dir2 = dir1 + sign * theta;
    Ok(PrimState::new(
        pre.rho * rho_ratio,
        speed2 * dir2.cos(),
        speed2 * dir2.sin(),
        pre.p * p_ratio,
    ))
}

/// Post-normal-shock Mach number, used as the downstream reference when
/// locating the bow shock on the stagnation line.
pub fn post_normal_shock_mach(mach: f64, gas: GasModel) -> f64 {
    let g = gas.gamma;
    let m2 = mach * mach;
    (((g - 1.0) * m2 + 2.0) / (2.0 * g * m2 - (g - 1.0))).sqrt()
}

/// Right/left eigenvector matrices of the flux Jacobian in direction n at a
/// reference state; used by characteristic-wise limiting. Returns (R, L) with
/// L R = I, each row-major 4x4.
pub fn characteristic_matrices(q: &ConsState, n: [f64; 2], gas: GasModel) -> Result<([f64; 16], [f64; 16]), EulerError> {
    let prim = q.to_prim(gas)?;
    if prim.p <= 0.0 {
        return Err(EulerError::UnphysicalState { rho: prim.rho, p: prim.p });
    }
    let (u, v) = (prim.u, prim.v);
    let c = prim.sound_speed(gas);
    let (nx, ny) = (n[0], n[1]);
    let un = u * nx + v * ny;
    let ut = -u * ny + v * nx;
    let h = (q.e + prim.p) / prim.rho;
    let ke = 0.5 * (u * u + v * v);
    let gm1 = gas.gamma - 1.0;

    // Columns: u-c acoustic, entropy, shear, u+c acoustic.
    let r = [
        1.0,            1.0, 0.0,      1.0,
        u - c * nx,     u,   -ny,      u + c * nx,
        v - c * ny,     v,   nx,       v + c * ny,
        h - c * un,     ke,  ut,       h + c * un,
    ];
    let ic2 = 1.0 / (c * c);
    let l = [
        0.5 * (gm1 * ke * ic2 + un / c), -0.5 * (gm1 * u * ic2 + nx / c), -0.5 * (gm1 * v * ic2 + ny / c), 0.5 * gm1 * ic2,
        1.0 - gm1 * ke * ic2,            gm1 * u * ic2,                   gm1 * v * ic2,                  -gm1 * ic2,
        -ut,                             -ny,                             nx,                              0.0,
        0.5 * (gm1 * ke * ic2 - un / c), -0.5 * (gm1 * u * ic2 - nx / c), -0.5 * (gm1 * v * ic2 - ny / c), 0.5 * gm1 * ic2,
    ];
    Ok((r, l))
}
