//! Post-processing measurements: line sampling at per-cell quadrature
//! stations, bow-shock standoff, sonic point on the body, shock thickness and
//! oblique shock angle.

use thiserror::Error;

use crate::dg::Field;
use crate::euler::{post_normal_shock_mach, GasModel};
use crate::mesh::Face;
use crate::system::System;

#[derive(Debug, Error)]
pub enum MeasureError {
    #[error("no crossing of the target value found on the sampled line")]
    NoCrossing,
    #[error("profile is unresolved: {0}")]
    Unresolved(String),
}

/// One sample on a measurement line.
#[derive(Debug, Clone, Copy)]
pub struct LineSample {
    pub x: f64,
    pub y: f64,
    pub grid: usize,
    pub elem: usize,
    pub rho: f64,
    pub p: f64,
    pub mach: f64,
}

/// Point probe over a multi-grid solution: highest grid id wins (overset
/// grids cover the background).
pub struct Probe<'a> {
    pub system: &'a System,
    pub fields: &'a [Field],
}

impl<'a> Probe<'a> {
    pub fn locate(&self, p: [f64; 2]) -> Option<(usize, usize, f64, f64)> {
        for (gi, g) in self.system.grids.iter().enumerate().rev() {
            if let Some((e, r, s)) = crate::overset::locate_point(&g.block, &g.index, p) {
                return Some((gi, e, r, s));
            }
        }
        None
    }

    pub fn eval(&self, p: [f64; 2]) -> Option<(usize, usize, crate::euler::ConsState)> {
        self.locate(p).map(|(gi, e, r, s)| {
            (gi, e, self.fields[gi].eval(&self.system.basis, e, r, s))
        })
    }

    /// Average primitive state over a sampling box (nx x ny uniform points),
    /// skipping points outside all grids.
    pub fn box_average(&self, x: [f64; 2], y: [f64; 2], nx: usize, ny: usize) -> Option<[f64; 4]> {
        let gas = self.system.gas;
        let mut acc = [0.0; 4];
        let mut count = 0usize;
        for i in 0..nx {
            for j in 0..ny {
                let px = x[0] + (x[1] - x[0]) * (i as f64 + 0.5) / nx as f64;
                let py = y[0] + (y[1] - y[0]) * (j as f64 + 0.5) / ny as f64;
                if let Some((_, _, q)) = self.eval([px, py]) {
                    if let Ok(prim) = q.to_prim(gas) {
                        acc[0] += prim.rho;
                        acc[1] += prim.u;
                        acc[2] += prim.v;
                        acc[3] += prim.p;
                        count += 1;
                    }
                }
            }
        }
        if count == 0 {
            return None;
        }
        Some(acc.map(|v| v / count as f64))
    }
}

/// Sample the solution along the horizontal line y = y0 for x in x_range, at
/// (N+1) stations per crossed cell (cells discovered by a dense scan, then
/// each cell's span sampled at Gauss points).
pub fn sample_line_y(
    probe: &Probe,
    y0: f64,
    x_range: [f64; 2],
    scan_resolution: usize,
) -> Vec<LineSample> {
    let gas = probe.system.gas;
    let n1d = probe.system.degree + 1;
    let gl = &probe.system.basis.rule.nodes;
    // Dense scan to find the chain of (grid, elem) runs along the line.
    let mut runs: Vec<(usize, usize, f64, f64)> = Vec::new(); // grid, elem, x_in, x_out
    let mut prev: Option<(usize, usize)> = None;
    for k in 0..=scan_resolution {
        let x = x_range[0] + (x_range[1] - x_range[0]) * k as f64 / scan_resolution as f64;
        let here = probe.locate([x, y0]).map(|(g, e, _, _)| (g, e));
        match (prev, here) {
            (Some(a), Some(b)) if a == b => {
                runs.last_mut().unwrap().3 = x;
            }
            (_, Some((g, e))) => {
                runs.push((g, e, x, x));
            }
            (_, None) => {}
        }
        prev = here;
    }
    let mut out = Vec::new();
    for (gi, e, x_in, x_out) in runs {
        if x_out <= x_in {
            continue;
        }
        for &t in gl.iter().take(n1d) {
            let x = 0.5 * (x_in + x_out) + 0.5 * (x_out - x_in) * t;
            // Evaluate inside the known element when possible.
            let g = &probe.system.grids[gi];
            let q = match crate::overset::newton_invert(&g.block, e, [x, y0]) {
                Some((r, s)) => probe.fields[gi].eval(&probe.system.basis, e, r, s),
                None => match probe.eval([x, y0]) {
                    Some((_, _, q)) => q,
                    None => continue,
                },
            };
            if let Ok(prim) = q.to_prim(gas) {
                out.push(LineSample {
                    x,
                    y: y0,
                    grid: gi,
                    elem: e,
                    rho: prim.rho,
                    p: prim.p,
                    mach: prim.mach(gas),
                });
            }
        }
    }
    out.sort_by(|a, b| a.x.partial_cmp(&b.x).unwrap());
    out
}

/// Bow-shock location on the stagnation line: the x where the Mach number
/// first crosses the midpoint between the free-stream and post-normal-shock
/// values, scanning in the flow direction. Returns x in solver coordinates.
pub fn measure_shock_x(samples: &[LineSample], mach: f64, gas: GasModel) -> Result<f64, MeasureError> {
    let m2 = post_normal_shock_mach(mach, gas);
    let m_mid = 0.5 * (mach + m2);
    for w in samples.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if a.mach >= m_mid && b.mach < m_mid {
            let f = (a.mach - m_mid) / (a.mach - b.mach);
            return Ok(a.x + f * (b.x - a.x));
        }
    }
    Err(MeasureError::NoCrossing)
}

/// Shock thickness on a sampled line: x-extent between the last sample within
/// 1% of the upstream Mach and the first within 1% of the downstream Mach.
/// Also reports the count of distinct elements interior to the jump.
#[derive(Debug, Clone, Copy)]
pub struct ThicknessReport {
    pub delta: f64,
    pub cells_spanned: usize,
}

pub fn measure_shock_thickness(
    samples: &[LineSample],
    mach: f64,
    gas: GasModel,
) -> Result<ThicknessReport, MeasureError> {
    let m2 = post_normal_shock_mach(mach, gas);
    let upstream_edge = mach * 0.99;
    let downstream_edge = m2 * 1.01;
    let shock_x = measure_shock_x(samples, mach, gas)?;
    // Last sample before the shock still within 1% of upstream.
    let mut x_up = None;
    for s in samples {
        if s.x <= shock_x && s.mach >= upstream_edge {
            x_up = Some(s.x);
        }
    }
    // First sample after the shock within 1% of downstream.
    let mut x_down = None;
    for s in samples {
        if s.x >= shock_x && s.mach <= downstream_edge {
            x_down = Some(s.x);
            break;
        }
    }
    let (Some(x_up), Some(x_down)) = (x_up, x_down) else {
        return Err(MeasureError::Unresolved(
            "jump edges not bracketed by samples".into(),
        ));
    };
    if x_down < x_up {
        return Err(MeasureError::Unresolved("non-monotone jump".into()));
    }
    // Distinct elements among strictly-interior samples.
    let dm = mach - m2;
    let hi = mach - 0.05 * dm;
    let lo = m2 + 0.05 * dm;
    let mut cells: Vec<(usize, usize)> = samples
        .iter()
        .filter(|s| s.x >= x_up && s.x <= x_down && s.mach < hi && s.mach > lo)
        .map(|s| (s.grid, s.elem))
        .collect();
    cells.dedup();
    cells.sort_unstable();
    cells.dedup();
    Ok(ThicknessReport {
        delta: x_down - x_up,
        cells_spanned: cells.len().max(1),
    })
}

/// Sonic point on the cylinder wall: root of M - 1 along the wall trace,
/// returned in solver coordinates for y > 0 and y < 0.
pub fn measure_sonic_points(
    system: &System,
    field: &Field,
    wall_grid: usize,
) -> Result<([f64; 2], [f64; 2]), MeasureError> {
    let g = &system.grids[wall_grid];
    let gas = system.gas;
    let basis = &system.basis;
    let nq = g.geom.nq;
    let mut trace = [[0.0f64; 4]; 12];
    // Wall = South side (j = 0): collect (x, y, M) along the wall.
    let mut wall: Vec<([f64; 2], f64)> = Vec::new();
    for i in 0..g.block.ni {
        let e = g.block.elem_index(i, 0);
        if !g.block.active[e] {
            continue;
        }
        crate::dg::face_trace(&field.data, basis, &g.geom, e, Face::South, &mut trace);
        for k in 0..nq {
            let gi = g.geom.face_index(e, Face::South, k);
            let q = crate::euler::ConsState::from_slice(&trace[k]);
            if let Ok(prim) = q.to_prim(gas) {
                if prim.p > 0.0 {
                    wall.push(([g.geom.face_x[gi], g.geom.face_y[gi]], prim.mach(gas)));
                }
            }
        }
    }
    let mut upper: Option<[f64; 2]> = None;
    let mut lower: Option<[f64; 2]> = None;
    for w in wall.windows(2) {
        let ((pa, ma), (pb, mb)) = (w[0], w[1]);
        if (ma - 1.0) * (mb - 1.0) <= 0.0 && ma != mb {
            let f = (1.0 - ma) / (mb - ma);
            let p = [pa[0] + f * (pb[0] - pa[0]), pa[1] + f * (pb[1] - pa[1])];
            if p[1] > 0.0 {
                // Keep the crossing nearest the stagnation point.
                if upper.is_none() {
                    upper = Some(p);
                }
            } else if lower.is_none() || p[1] > lower.unwrap()[1] {
                lower = Some(p);
            }
        }
    }
    match (upper, lower) {
        (Some(u), Some(l)) => Ok((u, l)),
        _ => Err(MeasureError::NoCrossing),
    }
}

/// Oblique shock angle from mid-jump density crossings on vertical cuts:
/// scan each cut downward from the free-stream side, record the first
/// crossing of (rho1 + rho2)/2, then fit a line through the crossing points.
pub fn measure_oblique_angle(
    probe: &Probe,
    cuts: &[f64],
    y_top: f64,
    rho_upstream: f64,
    rho_downstream: f64,
    scan_resolution: usize,
) -> Result<(f64, Vec<[f64; 2]>), MeasureError> {
    let rho_mid = 0.5 * (rho_upstream + rho_downstream);
    let gas = probe.system.gas;
    let mut points = Vec::new();
    for &xc in cuts {
        let mut prev: Option<(f64, f64)> = None;
        let mut found = None;
        for k in 0..=scan_resolution {
            let y = y_top - y_top * k as f64 / scan_resolution as f64;
            let Some((_, _, q)) = probe.eval([xc, y]) else {
                continue;
            };
            let Ok(prim) = q.to_prim(gas) else { continue };
            if let Some((py, prho)) = prev {
                if (prho - rho_mid) * (prim.rho - rho_mid) <= 0.0 && prho != prim.rho {
                    let f = (rho_mid - prho) / (prim.rho - prho);
                    found = Some([xc, py + f * (y - py)]);
                    break;
                }
            }
            prev = Some((y, prim.rho));
        }
        if let Some(p) = found {
            points.push(p);
        }
    }
    if points.len() < 2 {
        return Err(MeasureError::NoCrossing);
    }
    let front = crate::shockfit::ShockFront { points: points.clone() };
    let (_, dir) = front.fit_line();
    let angle = dir[1].atan2(dir[0]).to_degrees().abs();
    Ok((angle, points))
}

/// Count distinct elements spanned by the jump along a vertical cut
/// (5%-95% band of the density jump), the alignment metric.
pub fn jump_cells_on_cut(
    probe: &Probe,
    xc: f64,
    y_range: [f64; 2],
    rho_upstream: f64,
    rho_downstream: f64,
    scan_resolution: usize,
) -> usize {
    let gas = probe.system.gas;
    let dj = rho_downstream - rho_upstream;
    let lo = rho_upstream + 0.05 * dj;
    let hi = rho_downstream - 0.05 * dj;
    let mut cells: Vec<(usize, usize)> = Vec::new();
    for k in 0..=scan_resolution {
        let y = y_range[0] + (y_range[1] - y_range[0]) * k as f64 / scan_resolution as f64;
        if let Some((gi, e, q)) = probe.eval([xc, y]) {
            if let Ok(prim) = q.to_prim(gas) {
                let inside = if dj > 0.0 {
                    prim.rho > lo && prim.rho < hi
                } else {
                    prim.rho < lo && prim.rho > hi
                };
                if inside {
                    cells.push((gi, e));
                }
            }
        }
    }
    cells.sort_unstable();
    cells.dedup();
    cells.len()
}
