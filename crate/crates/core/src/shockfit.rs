//! Shock-front geometry pipeline: extract the front from troubled cells,
//! fit a second-order b-spline, generate parallel offset curves and build the
//! shock-aligned overset band grid, with width reduction.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::limiter::TroubledSet;
use crate::mesh::{BoundaryTag, Face, MeshError, StructuredBlock};

#[derive(Debug, Error)]
pub enum ShockfitError {
    #[error("no troubled cells to extract a front from")]
    NoShock,
    #[error("need at least {needed} points for a degree-{degree} fit, got {got}")]
    TooFewPoints { needed: usize, degree: usize, got: usize },
    #[error("rank-deficient least-squares system (pivot {pivot:e})")]
    RankDeficient { pivot: f64 },
    #[error("offset {offset} exceeds the curvature bound 1/max|kappa| = {bound}")]
    OffsetTooLarge { offset: f64, bound: f64 },
    #[error("band row {row} lies outside the clip region")]
    RowOutsideDomain { row: usize },
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// Direction the flow sweeps through the grid indices; the front is the first
/// flagged cell met along the sweep on each transverse grid line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sweep {
    /// Flow toward increasing i: scan each j-row for the lowest flagged i.
    IPlus,
    /// Flow toward decreasing i.
    IMinus,
    /// Flow toward increasing j.
    JPlus,
    /// Flow toward decreasing j: scan each i-column from the top.
    JMinus,
}

/// Ordered shock-front points (cell centers of first troubled cells).
#[derive(Debug, Clone, PartialEq)]
pub struct ShockFront {
    pub points: Vec<[f64; 2]>,
}

/// For each transverse grid line, the center of the first troubled cell the
/// flow encounters; ordered along the transverse index.
pub fn extract_shock_front(
    troubled: &TroubledSet,
    block: &StructuredBlock,
    sweep: Sweep,
) -> Result<ShockFront, ShockfitError> {
    if troubled.is_empty() {
        return Err(ShockfitError::NoShock);
    }
    // first[line] = best (sweep-most) flagged cell on that line.
    let mut first: BTreeMap<usize, (usize, usize)> = BTreeMap::new(); // line -> (rank, elem)
    for (&e, _) in troubled.elems.iter().zip(&troubled.centers) {
        let (i, j) = block.elem_ij(e);
        let (line, rank) = match sweep {
            Sweep::IPlus => (j, i),
            Sweep::IMinus => (j, block.ni - 1 - i),
            Sweep::JPlus => (i, j),
            Sweep::JMinus => (i, block.nj - 1 - j),
        };
        first
            .entry(line)
            .and_modify(|best| {
                if rank < best.0 {
                    *best = (rank, e);
                }
            })
            .or_insert((rank, e));
    }
    let mut points = Vec::with_capacity(first.len());
    let mut last: Option<[f64; 2]> = None;
    for (_, (_, e)) in first {
        let c = block.centroid(e);
        if last.map_or(true, |p| p != c) {
            points.push(c);
        }
        last = Some(c);
    }
    Ok(ShockFront { points })
}

impl ShockFront {
    /// Average mirrored points about y = 0 (symmetric inflow cases); the
    /// result is exactly symmetric.
    pub fn symmetrize_about_y(&self) -> ShockFront {
        let n = self.points.len();
        let mut points = self.points.clone();
        for k in 0..n / 2 {
            let a = self.points[k];
            let b = self.points[n - 1 - k];
            let x = 0.5 * (a[0] + b[0]);
            let y = 0.5 * (a[1].abs() + b[1].abs());
            let sign = if a[1] <= b[1] { -1.0 } else { 1.0 };
            points[k] = [x, sign * y];
            points[n - 1 - k] = [x, -sign * y];
        }
        if n % 2 == 1 {
            points[n / 2][1] = 0.0;
        }
        ShockFront { points }
    }

    /// Drop `n` points from each end (used to keep the band inside the
    /// background domain).
    pub fn clip_ends(&self, n: usize) -> ShockFront {
        let len = self.points.len();
        if 2 * n >= len {
            return self.clone();
        }
        ShockFront {
            points: self.points[n..len - n].to_vec(),
        }
    }

    /// Total-least-squares line through the points: (origin, unit direction).
    pub fn fit_line(&self) -> ([f64; 2], [f64; 2]) {
        let n = self.points.len() as f64;
        let mut cx = 0.0;
        let mut cy = 0.0;
        for p in &self.points {
            cx += p[0];
            cy += p[1];
        }
        cx /= n;
        cy /= n;
        let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
        for p in &self.points {
            let dx = p[0] - cx;
            let dy = p[1] - cy;
            sxx += dx * dx;
            sxy += dx * dy;
            syy += dy * dy;
        }
        // Principal eigenvector of the 2x2 covariance.
        let theta = 0.5 * (2.0 * sxy).atan2(sxx - syy);
        let dir = [theta.cos(), theta.sin()];
        ([cx, cy], dir)
    }
}

/// Clamped degree-`degree` b-spline curve on parameter range [0, 1].
#[derive(Debug, Clone)]
pub struct BSplineCurve {
    pub degree: usize,
    pub knots: Vec<f64>,
    pub ctrl: Vec<[f64; 2]>,
    pub rms_deviation: f64,
    pub max_deviation: f64,
}

fn find_span(knots: &[f64], degree: usize, n_ctrl: usize, t: f64) -> usize {
    if t >= knots[n_ctrl] {
        return n_ctrl - 1;
    }
    if t <= knots[degree] {
        return degree;
    }
    let mut lo = degree;
    let mut hi = n_ctrl;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if t < knots[mid] {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    lo
}

/// Nonzero basis values N_{span-p..span} at t (NURBS book A2.2).
fn basis_funs(knots: &[f64], span: usize, degree: usize, t: f64, out: &mut [f64]) {
    let mut left = [0.0f64; 8];
    let mut right = [0.0f64; 8];
    out[0] = 1.0;
    for j in 1..=degree {
        left[j] = t - knots[span + 1 - j];
        right[j] = knots[span + j] - t;
        let mut saved = 0.0;
        for r in 0..j {
            let tmp = out[r] / (right[r + 1] + left[j - r]);
            out[r] = saved + right[r + 1] * tmp;
            saved = left[j - r] * tmp;
        }
        out[j] = saved;
    }
}

impl BSplineCurve {
    pub fn n_ctrl(&self) -> usize {
        self.ctrl.len()
    }

    pub fn eval(&self, t: f64) -> [f64; 2] {
        let t = t.clamp(0.0, 1.0);
        let span = find_span(&self.knots, self.degree, self.n_ctrl(), t);
        let mut basis = [0.0f64; 8];
        basis_funs(&self.knots, span, self.degree, t, &mut basis);
        let mut out = [0.0; 2];
        for (r, &b) in basis.iter().take(self.degree + 1).enumerate() {
            let p = self.ctrl[span - self.degree + r];
            out[0] += b * p[0];
            out[1] += b * p[1];
        }
        out
    }

    /// Derivative curve (degree reduced by one).
    pub fn derivative(&self) -> BSplineCurve {
        let p = self.degree;
        let n = self.n_ctrl();
        let mut ctrl = Vec::with_capacity(n - 1);
        for i in 0..n - 1 {
            let denom = self.knots[i + p + 1] - self.knots[i + 1];
            let scale = if denom.abs() < 1e-300 { 0.0 } else { p as f64 / denom };
            ctrl.push([
                scale * (self.ctrl[i + 1][0] - self.ctrl[i][0]),
                scale * (self.ctrl[i + 1][1] - self.ctrl[i][1]),
            ]);
        }
        BSplineCurve {
            degree: p - 1,
            knots: self.knots[1..self.knots.len() - 1].to_vec(),
            ctrl,
            rms_deviation: 0.0,
            max_deviation: 0.0,
        }
    }

    /// Unit left normal at parameter t.
    pub fn normal(&self, deriv: &BSplineCurve, t: f64) -> [f64; 2] {
        let d = deriv.eval(t);
        let len = (d[0] * d[0] + d[1] * d[1]).sqrt();
        [-d[1] / len, d[0] / len]
    }

    /// Signed curvature at parameter t.
    pub fn curvature(&self, deriv: &BSplineCurve, deriv2: &BSplineCurve, t: f64) -> f64 {
        let d1 = deriv.eval(t);
        let d2 = deriv2.eval(t);
        let speed2 = d1[0] * d1[0] + d1[1] * d1[1];
        (d1[0] * d2[1] - d1[1] * d2[0]) / speed2.powf(1.5)
    }
}

/// Options for the least-squares fit.
#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub degree: usize,
    /// Control point count; defaults to clamp(m/6, 4, 16) when zero.
    pub n_ctrl: usize,
    /// Parameter-correction sweeps after the initial chord-length fit.
    pub correction_iters: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            degree: 2,
            n_ctrl: 0,
            correction_iters: 8,
        }
    }
}

/// Least-squares b-spline through `points` with chord-length initial
/// parameterization and Hoschek-style parameter correction.
pub fn fit_bspline(points: &[[f64; 2]], opts: FitOptions) -> Result<BSplineCurve, ShockfitError> {
    let m = points.len();
    let degree = opts.degree;
    if m < degree + 1 {
        return Err(ShockfitError::TooFewPoints {
            needed: degree + 1,
            degree,
            got: m,
        });
    }
    let n_ctrl = if opts.n_ctrl > 0 {
        opts.n_ctrl.min(m).max(degree + 1)
    } else {
        (m / 6).clamp(degree + 1, 16).min(m)
    };

    // Clamped uniform knot vector.
    let mut knots = vec![0.0; n_ctrl + degree + 1];
    let interior = n_ctrl - degree - 1;
    for k in 0..=interior {
        let v = k as f64 / (interior + 1) as f64;
        knots[degree + k] = v;
    }
    for k in n_ctrl..knots.len() {
        knots[k] = 1.0;
    }

    // Chord-length parameterization.
    let mut params = vec![0.0; m];
    let mut total = 0.0;
    for k in 1..m {
        let dx = points[k][0] - points[k - 1][0];
        let dy = points[k][1] - points[k - 1][1];
        total += (dx * dx + dy * dy).sqrt();
        params[k] = total;
    }
    if total <= 0.0 {
        return Err(ShockfitError::RankDeficient { pivot: 0.0 });
    }
    for p in params.iter_mut() {
        *p /= total;
    }

    let mut curve = lsq_fit(points, &params, &knots, degree, n_ctrl)?;
    // Two foot-point sweeps stabilize the parameterization, then joint
    // Gauss-Newton over control points and parameters drives the geometric
    // residual to the optimum (alternating sweeps alone stall).
    for _ in 0..2.min(opts.correction_iters) {
        let deriv = curve.derivative();
        let deriv2 = deriv.derivative();
        for k in 1..m - 1 {
            params[k] = project_param(&curve, &deriv, &deriv2, points[k], params[k]);
        }
        curve = lsq_fit(points, &params, &knots, degree, n_ctrl)?;
    }
    gauss_newton_refine(points, &mut params, &mut curve, opts.correction_iters)?;

    // Geometric deviation report.
    let deriv = curve.derivative();
    let deriv2 = deriv.derivative();
    let mut rms = 0.0;
    let mut max_dev = 0.0f64;
    for (k, p) in points.iter().enumerate() {
        let t = project_param(&curve, &deriv, &deriv2, *p, params[k]);
        let c = curve.eval(t);
        let d = ((c[0] - p[0]).powi(2) + (c[1] - p[1]).powi(2)).sqrt();
        rms += d * d;
        max_dev = max_dev.max(d);
    }
    curve.rms_deviation = (rms / m as f64).sqrt();
    curve.max_deviation = max_dev;
    Ok(curve)
}

/// Joint Gauss-Newton on (ctrl, interior params) minimizing the stacked
/// residual C(t_k) - p_k; endpoint parameters stay pinned at 0 and 1.
fn gauss_newton_refine(
    points: &[[f64; 2]],
    params: &mut [f64],
    curve: &mut BSplineCurve,
    max_iters: usize,
) -> Result<(), ShockfitError> {
    let m = points.len();
    let n = curve.n_ctrl();
    let nv = 2 * n + m.saturating_sub(2);
    let degree = curve.degree;
    let knots = curve.knots.clone();

    let residual_sq = |curve: &BSplineCurve, params: &[f64]| -> f64 {
        params
            .iter()
            .zip(points)
            .map(|(&t, p)| {
                let c = curve.eval(t);
                (c[0] - p[0]).powi(2) + (c[1] - p[1]).powi(2)
            })
            .sum()
    };

    let mut rss = residual_sq(curve, params);
    let mut basis = [0.0f64; 8];
    for _ in 0..max_iters {
        if rss < 1e-28 {
            break;
        }
        let deriv = curve.derivative();
        let mut jtj = vec![0.0f64; nv * nv];
        let mut jtr = vec![0.0f64; nv];
        for k in 0..m {
            let t = params[k];
            let span = find_span(&knots, degree, n, t);
            basis_funs(&knots, span, degree, t, &mut basis);
            let c = curve.eval(t);
            let d = deriv.eval(t);
            let r = [c[0] - points[k][0], c[1] - points[k][1]];
            // Nonzero Jacobian entries for this point: control columns and
            // (for interior points) the parameter column.
            let mut cols: Vec<(usize, [f64; 2])> = Vec::with_capacity(8);
            for a in 0..=degree {
                let j = span - degree + a;
                cols.push((j, [basis[a], 0.0]));
                cols.push((n + j, [0.0, basis[a]]));
            }
            if k > 0 && k < m - 1 {
                cols.push((2 * n + (k - 1), [d[0], d[1]]));
            }
            for &(ci, jv) in &cols {
                jtr[ci] += jv[0] * r[0] + jv[1] * r[1];
                for &(cj, jw) in &cols {
                    jtj[ci * nv + cj] += jv[0] * jw[0] + jv[1] * jw[1];
                }
            }
        }
        // Ridge-regularized Cholesky solve for the Gauss-Newton step.
        let mut maxdiag = 0.0f64;
        for i in 0..nv {
            maxdiag = maxdiag.max(jtj[i * nv + i]);
        }
        let ridge = 1e-12 * maxdiag.max(1e-30);
        for i in 0..nv {
            jtj[i * nv + i] += ridge;
        }
        let Some(step) = cholesky_solve(&mut jtj, &jtr, nv) else {
            break;
        };

        // Damped update.
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..8 {
            let mut trial_curve = curve.clone();
            for j in 0..n {
                trial_curve.ctrl[j][0] -= scale * step[j];
                trial_curve.ctrl[j][1] -= scale * step[n + j];
            }
            let mut trial_params = params.to_vec();
            for k in 1..m - 1 {
                trial_params[k] = (params[k] - scale * step[2 * n + (k - 1)]).clamp(0.0, 1.0);
            }
            let trial_rss = residual_sq(&trial_curve, &trial_params);
            if trial_rss <= rss {
                let max_step = step.iter().fold(0.0f64, |mx, v| mx.max((scale * v).abs()));
                *curve = trial_curve;
                params.copy_from_slice(&trial_params);
                rss = trial_rss;
                accepted = true;
                if max_step < 1e-14 {
                    return Ok(());
                }
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok(())
}

fn cholesky_solve(a: &mut [f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            if i == j {
                if s <= 0.0 {
                    return None;
                }
                a[i * n + i] = s.sqrt();
            } else {
                a[i * n + j] = s / a[j * n + j];
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= a[i * n + k] * y[k];
        }
        y[i] = s / a[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= a[k * n + i] * x[k];
        }
        x[i] = s / a[i * n + i];
    }
    Some(x)
}

fn project_param(
    curve: &BSplineCurve,
    deriv: &BSplineCurve,
    deriv2: &BSplineCurve,
    p: [f64; 2],
    t0: f64,
) -> f64 {
    let mut t = t0;
    for _ in 0..8 {
        let c = curve.eval(t);
        let d1 = deriv.eval(t);
        let d2 = deriv2.eval(t);
        let rx = c[0] - p[0];
        let ry = c[1] - p[1];
        let f = rx * d1[0] + ry * d1[1];
        let fp = d1[0] * d1[0] + d1[1] * d1[1] + rx * d2[0] + ry * d2[1];
        if fp.abs() < 1e-300 {
            break;
        }
        let step = f / fp;
        t = (t - step).clamp(0.0, 1.0);
        if step.abs() < 1e-15 {
            break;
        }
    }
    t
}

fn lsq_fit(
    points: &[[f64; 2]],
    params: &[f64],
    knots: &[f64],
    degree: usize,
    n_ctrl: usize,
) -> Result<BSplineCurve, ShockfitError> {
    let m = points.len();
    // Normal equations: (A^T A) x = A^T b for x and y separately.
    let mut ata = vec![0.0; n_ctrl * n_ctrl];
    let mut atb = vec![[0.0f64; 2]; n_ctrl];
    let mut basis = [0.0f64; 8];
    for k in 0..m {
        let span = find_span(knots, degree, n_ctrl, params[k]);
        basis_funs(knots, span, degree, params[k], &mut basis);
        for a in 0..=degree {
            let ia = span - degree + a;
            for b in 0..=degree {
                let ib = span - degree + b;
                ata[ia * n_ctrl + ib] += basis[a] * basis[b];
            }
            atb[ia][0] += basis[a] * points[k][0];
            atb[ia][1] += basis[a] * points[k][1];
        }
    }
    // Cholesky decomposition.
    let n = n_ctrl;
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = ata[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= 1e-12 {
                    return Err(ShockfitError::RankDeficient { pivot: s });
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    let solve = |rhs: &[f64]| -> Vec<f64> {
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut s = rhs[i];
            for k in 0..i {
                s -= l[i * n + k] * y[k];
            }
            y[i] = s / l[i * n + i];
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= l[k * n + i] * x[k];
            }
            x[i] = s / l[i * n + i];
        }
        x
    };
    let bx: Vec<f64> = atb.iter().map(|v| v[0]).collect();
    let by: Vec<f64> = atb.iter().map(|v| v[1]).collect();
    let sx = solve(&bx);
    let sy = solve(&by);
    Ok(BSplineCurve {
        degree,
        knots: knots.to_vec(),
        ctrl: sx.into_iter().zip(sy).map(|(x, y)| [x, y]).collect(),
        rms_deviation: 0.0,
        max_deviation: 0.0,
    })
}

/// Arc-length-uniform parameter samples of a curve (n+1 params incl. ends).
pub fn arc_length_params(curve: &BSplineCurve, n: usize) -> Vec<f64> {
    let dense = (4 * n).max(64);
    let mut ts = Vec::with_capacity(dense + 1);
    let mut arcs = Vec::with_capacity(dense + 1);
    let mut acc = 0.0;
    let mut prev = curve.eval(0.0);
    ts.push(0.0);
    arcs.push(0.0);
    for k in 1..=dense {
        let t = k as f64 / dense as f64;
        let p = curve.eval(t);
        acc += ((p[0] - prev[0]).powi(2) + (p[1] - prev[1]).powi(2)).sqrt();
        ts.push(t);
        arcs.push(acc);
        prev = p;
    }
    let mut out = Vec::with_capacity(n + 1);
    let mut cursor = 0;
    for k in 0..=n {
        let target = acc * k as f64 / n as f64;
        while cursor + 1 < arcs.len() && arcs[cursor + 1] < target {
            cursor += 1;
        }
        if cursor + 1 >= arcs.len() {
            out.push(1.0);
            continue;
        }
        let seg = arcs[cursor + 1] - arcs[cursor];
        let f = if seg > 0.0 { (target - arcs[cursor]) / seg } else { 0.0 };
        out.push(ts[cursor] + f * (ts[cursor + 1] - ts[cursor]));
    }
    out
}

/// Sampled parallel offset polyline: curve(t) + d * n(t) at arc-length-uniform
/// parameters. Errors when |d| reaches the curvature bound.
pub fn offset_curve(curve: &BSplineCurve, d: f64, n_samples: usize) -> Result<Vec<[f64; 2]>, ShockfitError> {
    let deriv = curve.derivative();
    let deriv2 = deriv.derivative();
    let params = arc_length_params(curve, n_samples);
    let mut kappa_max = 0.0f64;
    for &t in &params {
        kappa_max = kappa_max.max(curve.curvature(&deriv, &deriv2, t).abs());
    }
    if kappa_max > 0.0 && d.abs() >= 1.0 / kappa_max {
        return Err(ShockfitError::OffsetTooLarge {
            offset: d,
            bound: 1.0 / kappa_max,
        });
    }
    Ok(params
        .iter()
        .map(|&t| {
            let c = curve.eval(t);
            let n = curve.normal(&deriv, t);
            [c[0] + d * n[0], c[1] + d * n[1]]
        })
        .collect())
}

/// Specification of a shock-aligned overset band grid.
#[derive(Debug, Clone)]
pub struct OversetGridSpec {
    pub curve: BSplineCurve,
    /// Ascending signed offsets including 0.0 (one grid line per offset).
    pub offsets: Vec<f64>,
    pub n_along: usize,
    pub grid_id: usize,
}

/// Geometrically clustered offsets: `layers` per side, first layer `h0`,
/// each subsequent layer `ratio` times thicker; includes the 0 line.
pub fn geometric_offsets(h0: f64, ratio: f64, layers: usize) -> Vec<f64> {
    let mut pos = vec![0.0];
    let mut d = 0.0;
    let mut h = h0;
    for _ in 0..layers {
        d += h;
        pos.push(d);
        h *= ratio;
    }
    let mut out: Vec<f64> = pos.iter().skip(1).map(|v| -v).rev().collect();
    out.extend(pos);
    out
}

/// Build the band grid: one grid line per offset, i along the curve, j across
/// offsets; the 0-offset line is the curve's own sampling. All sides tagged
/// Artificial.
pub fn build_overset_grid(spec: &OversetGridSpec) -> Result<StructuredBlock, ShockfitError> {
    let n_along = spec.n_along;
    assert!(n_along >= 4, "band needs at least 4 cells along the shock");
    let curve = &spec.curve;
    let deriv = curve.derivative();
    let deriv2 = deriv.derivative();
    let params = arc_length_params(curve, n_along);
    let mut kappa_max = 0.0f64;
    for &t in &params {
        kappa_max = kappa_max.max(curve.curvature(&deriv, &deriv2, t).abs());
    }
    let dmax = spec
        .offsets
        .iter()
        .fold(0.0f64, |m, &d| m.max(d.abs()));
    if kappa_max > 0.0 && dmax >= 1.0 / kappa_max {
        return Err(ShockfitError::OffsetTooLarge {
            offset: dmax,
            bound: 1.0 / kappa_max,
        });
    }

    let nj = spec.offsets.len() - 1;
    let mut geom = Vec::with_capacity((n_along + 1) * (nj + 1));
    for &d in &spec.offsets {
        for &t in &params {
            let c = curve.eval(t);
            let n = curve.normal(&deriv, t);
            geom.push([c[0] + d * n[0], c[1] + d * n[1]]);
        }
    }
    let block = StructuredBlock {
        id: spec.grid_id,
        ni: n_along,
        nj,
        mapping_degree: 1,
        geom,
        side_tags: [BoundaryTag::Artificial; 4],
        face_tag_overrides: BTreeMap::new(),
        active: vec![true; n_along * nj],
    };
    check_corner_jacobians(&block)?;
    Ok(block)
}

fn check_corner_jacobians(block: &StructuredBlock) -> Result<(), ShockfitError> {
    for e in 0..block.num_elems() {
        for &(r, s) in &[(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0), (0.0, 0.0)] {
            let d = block.map_deriv(e, r, s);
            let jac = d[0] * d[3] - d[1] * d[2];
            if !(jac > 0.0) {
                let (i, j) = block.elem_ij(e);
                return Err(ShockfitError::Mesh(MeshError::NonpositiveJacobian {
                    grid: block.id,
                    i,
                    j,
                    jac,
                }));
            }
        }
    }
    Ok(())
}

/// A closed convex clip polygon with a boundary tag per edge (edge k runs
/// from vertex k to vertex k+1, counterclockwise).
#[derive(Debug, Clone)]
pub struct ClipPolygon {
    pub vertices: Vec<[f64; 2]>,
    pub edge_tags: Vec<BoundaryTag>,
}

impl ClipPolygon {
    /// Clip the line origin + tau * dir against the polygon; returns the tau
    /// interval and the edge tags met at each end.
    fn clip_line(&self, origin: [f64; 2], dir: [f64; 2]) -> Option<(f64, BoundaryTag, f64, BoundaryTag)> {
        let n = self.vertices.len();
        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        let mut lo_tag = BoundaryTag::Artificial;
        let mut hi_tag = BoundaryTag::Artificial;
        for k in 0..n {
            let a = self.vertices[k];
            let b = self.vertices[(k + 1) % n];
            // Inward normal of a CCW edge.
            let m = [-(b[1] - a[1]), b[0] - a[0]];
            let denom = dir[0] * m[0] + dir[1] * m[1];
            let num = (a[0] - origin[0]) * m[0] + (a[1] - origin[1]) * m[1];
            if denom.abs() < 1e-14 {
                if num > 0.0 {
                    return None; // parallel and outside
                }
                continue;
            }
            let tau = num / denom;
            if denom > 0.0 {
                if tau > lo {
                    lo = tau;
                    lo_tag = self.edge_tags[k];
                }
            } else if tau < hi {
                hi = tau;
                hi_tag = self.edge_tags[k];
            }
        }
        if lo < hi {
            Some((lo, lo_tag, hi, hi_tag))
        } else {
            None
        }
    }
}

/// Straight-shock band: offset lines of the fitted line, each row clipped to
/// the domain polygon, rows subdivided uniformly. The i=0 / i=ni end faces
/// take the tag of the clip edge they land on; offset extremes stay
/// Artificial.
pub fn build_straight_band(
    origin: [f64; 2],
    dir: [f64; 2],
    offsets: &[f64],
    n_along: usize,
    clip: &ClipPolygon,
    grid_id: usize,
) -> Result<StructuredBlock, ShockfitError> {
    let len = (dir[0] * dir[0] + dir[1] * dir[1]).sqrt();
    let t = [dir[0] / len, dir[1] / len];
    let nrm = [-t[1], t[0]];
    let nj = offsets.len() - 1;
    let mut geom = Vec::with_capacity((n_along + 1) * (nj + 1));
    let mut row_tags = Vec::with_capacity(nj + 1);
    for (row, &d) in offsets.iter().enumerate() {
        let o = [origin[0] + d * nrm[0], origin[1] + d * nrm[1]];
        let Some((lo, lo_tag, hi, hi_tag)) = clip.clip_line(o, t) else {
            return Err(ShockfitError::RowOutsideDomain { row });
        };
        for k in 0..=n_along {
            let tau = lo + (hi - lo) * k as f64 / n_along as f64;
            geom.push([o[0] + tau * t[0], o[1] + tau * t[1]]);
        }
        row_tags.push((lo_tag, hi_tag));
    }
    let mut overrides = BTreeMap::new();
    // End faces per cell row j (cells span vertex rows j and j+1; the tag of
    // the lower vertex row is used; rows agree except at polygon corners).
    for j in 0..nj {
        let (lo_tag, hi_tag) = row_tags[j];
        overrides.insert((j * n_along, Face::West.index()), lo_tag);
        overrides.insert((j * n_along + n_along - 1, Face::East.index()), hi_tag);
    }
    let block = StructuredBlock {
        id: grid_id,
        ni: n_along,
        nj,
        mapping_degree: 1,
        geom,
        side_tags: [BoundaryTag::Artificial; 4],
        face_tag_overrides: overrides,
        active: vec![true; n_along * nj],
    };
    check_corner_jacobians(&block)?;
    Ok(block)
}

/// Trim the offset band to the minimal range containing all newly troubled
/// cells plus `margin` rows per side. Flags touching the band edge refuse the
/// shrink; the result never drops below `min_rows` cell rows.
pub fn reduce_width(
    spec: &OversetGridSpec,
    new_troubled: &TroubledSet,
    band: &StructuredBlock,
    margin: usize,
    min_rows: usize,
) -> (OversetGridSpec, bool) {
    if new_troubled.is_empty() {
        return (spec.clone(), false);
    }
    let nj = band.nj;
    let mut j_min = usize::MAX;
    let mut j_max = 0;
    for &e in &new_troubled.elems {
        let (_, j) = band.elem_ij(e);
        j_min = j_min.min(j);
        j_max = j_max.max(j);
    }
    if j_min == 0 || j_max == nj - 1 {
        return (spec.clone(), false); // flags at band edge: no safe reduction
    }
    let lo = j_min.saturating_sub(margin);
    let hi = (j_max + 1 + margin).min(nj);
    if hi - lo >= nj || hi - lo < min_rows.max(1) {
        return (spec.clone(), false);
    }
    let offsets: Vec<f64> = spec.offsets[lo..=hi].to_vec();
    (
        OversetGridSpec {
            curve: spec.curve.clone(),
            offsets,
            n_along: spec.n_along,
            grid_id: spec.grid_id,
        },
        true,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_cartesian_block;
    use approx::assert_abs_diff_eq;

    fn troubled_from(block: &StructuredBlock, elems: Vec<usize>) -> TroubledSet {
        let centers = elems.iter().map(|&e| block.centroid(e)).collect();
        TroubledSet {
            grid_id: block.id,
            elems,
            centers,
        }
    }

    #[test]
    fn single_column_front_is_that_column() {
        let b = build_cartesian_block([0.0, 1.0], [0.0, 1.0], 8, 6, [BoundaryTag::Wall; 4]).unwrap();
        let elems: Vec<usize> = (0..6).map(|j| b.elem_index(3, j)).collect();
        let t = troubled_from(&b, elems.clone());
        let front = extract_shock_front(&t, &b, Sweep::IPlus).unwrap();
        assert_eq!(front.points.len(), 6);
        for (k, p) in front.points.iter().enumerate() {
            let c = b.centroid(b.elem_index(3, k));
            assert_abs_diff_eq!(p[0], c[0], epsilon = 1e-14);
            assert_abs_diff_eq!(p[1], c[1], epsilon = 1e-14);
        }
    }

    #[test]
    fn empty_troubled_set_is_an_error() {
        let b = build_cartesian_block([0.0, 1.0], [0.0, 1.0], 4, 4, [BoundaryTag::Wall; 4]).unwrap();
        let t = troubled_from(&b, vec![]);
        assert!(matches!(
            extract_shock_front(&t, &b, Sweep::IPlus),
            Err(ShockfitError::NoShock)
        ));
    }

    #[test]
    fn oblique_band_front_is_nearly_collinear() {
        // Flag a two-cell-wide band along y = 0.6 x + 0.1 and extract with
        // flow in +x: the front points sit within half a cell diagonal of a
        // straight line.
        let n = 40;
        let b = build_cartesian_block([0.0, 1.0], [0.0, 1.0], n, n, [BoundaryTag::Wall; 4]).unwrap();
        let h = 1.0 / n as f64;
        let mut elems = Vec::new();
        for e in 0..b.num_elems() {
            let c = b.centroid(e);
            let d = c[1] - (0.6 * c[0] + 0.1);
            if (-1.5 * h..=1.5 * h).contains(&d) {
                elems.push(e);
            }
        }
        let t = troubled_from(&b, elems);
        let front = extract_shock_front(&t, &b, Sweep::JPlus).unwrap();
        let (origin, dir) = front.fit_line();
        let half_diag = 0.5 * (2.0f64).sqrt() * h;
        for p in &front.points {
            let dx = p[0] - origin[0];
            let dy = p[1] - origin[1];
            let dist = (dx * dir[1] - dy * dir[0]).abs();
            assert!(dist <= half_diag, "front deviation {dist} > {half_diag}");
        }
    }

    #[test]
    fn collinear_points_fit_to_a_line() {
        let pts: Vec<[f64; 2]> = (0..30)
            .map(|k| {
                let s = k as f64 / 29.0;
                [0.2 + 1.7 * s, -0.3 + 0.9 * s]
            })
            .collect();
        let curve = fit_bspline(&pts, FitOptions::default()).unwrap();
        assert!(curve.max_deviation <= 1e-12, "max dev {:e}", curve.max_deviation);
    }

    #[test]
    fn parabola_is_recovered() {
        let pts: Vec<[f64; 2]> = (0..40)
            .map(|k| {
                let x = k as f64 / 39.0;
                [x, 0.4 * x * x]
            })
            .collect();
        let curve = fit_bspline(
            &pts,
            FitOptions {
                degree: 2,
                n_ctrl: 3,
                correction_iters: 40,
            },
        )
        .unwrap();
        assert!(curve.max_deviation <= 1e-10, "max dev {:e}", curve.max_deviation);
    }

    #[test]
    fn noisy_arc_fit_stays_within_three_sigma() {
        // Circular arc samples with pseudo-random radial noise, sigma = 0.1 of
        // the sample spacing.
        let n = 60;
        let radius = 1.0;
        let spacing = radius * std::f64::consts::FRAC_PI_2 / n as f64;
        let sigma = 0.1 * spacing;
        let mut state = 0xdeadbeefcafef00du64;
        let mut rnd = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        };
        let pts: Vec<[f64; 2]> = (0..=n)
            .map(|k| {
                let a = -0.25 * std::f64::consts::PI + 0.5 * std::f64::consts::PI * k as f64 / n as f64;
                let r = radius + sigma * rnd();
                [r * a.cos(), r * a.sin()]
            })
            .collect();
        let curve = fit_bspline(&pts, FitOptions::default()).unwrap();
        assert!(
            curve.max_deviation <= 3.0 * sigma,
            "max dev {:e} vs 3 sigma {:e}",
            curve.max_deviation,
            3.0 * sigma
        );
    }

    #[test]
    fn offset_of_line_is_parallel_line() {
        let pts: Vec<[f64; 2]> = (0..20).map(|k| [k as f64 / 19.0, 0.5]).collect();
        let curve = fit_bspline(&pts, FitOptions::default()).unwrap();
        let off = offset_curve(&curve, 0.1, 16).unwrap();
        for p in &off {
            assert_abs_diff_eq!(p[1], 0.6, epsilon = 1e-10);
        }
    }

    #[test]
    fn offset_of_circular_arc_changes_radius() {
        let n = 80;
        let pts: Vec<[f64; 2]> = (0..=n)
            .map(|k| {
                let a = -0.3 * std::f64::consts::PI + 0.6 * std::f64::consts::PI * k as f64 / n as f64;
                [a.cos(), a.sin()]
            })
            .collect();
        let curve = fit_bspline(
            &pts,
            FitOptions {
                degree: 2,
                n_ctrl: 12,
                correction_iters: 10,
            },
        )
        .unwrap();
        // Left normal of a CCW arc points toward the center: radius R -> R - d.
        for d in [0.25, -0.25] {
            let off = offset_curve(&curve, d, 40).unwrap();
            for p in off.iter().skip(2).take(36) {
                let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
                assert!((r - (1.0 - d)).abs() < 2e-3, "offset radius {r} for d = {d}");
            }
        }
        // Offset at or beyond the minimum radius of curvature errors.
        assert!(matches!(
            offset_curve(&curve, -1.2, 40),
            Err(ShockfitError::OffsetTooLarge { .. })
        ));
    }

    #[test]
    fn offset_distance_matches_signed_distance() {
        // Bow-shock-like curve: gentle parabola, offsets +-0.05.
        let pts: Vec<[f64; 2]> = (0..50)
            .map(|k| {
                let y = -1.0 + 2.0 * k as f64 / 49.0;
                [-0.8 - 0.5 * y * y, y]
            })
            .collect();
        let curve = fit_bspline(&pts, FitOptions::default()).unwrap();
        for d in [0.05, -0.05] {
            let off = offset_curve(&curve, d, 60).unwrap();
            let base = offset_curve(&curve, 0.0, 240).unwrap();
            for p in off.iter().skip(3).take(54) {
                let mut best = f64::INFINITY;
                for q in &base {
                    let dist = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
                    best = best.min(dist);
                }
                assert!(
                    (best - d.abs()).abs() <= 0.01 * d.abs(),
                    "offset distance {best} vs |d| {}",
                    d.abs()
                );
            }
        }
    }

    #[test]
    fn band_grid_aligns_zero_offset_line_with_curve() {
        let pts: Vec<[f64; 2]> = (0..50)
            .map(|k| {
                let y = -1.0 + 2.0 * k as f64 / 49.0;
                [-0.9 - 0.4 * y * y, y]
            })
            .collect();
        let curve = fit_bspline(&pts, FitOptions::default()).unwrap();
        let offsets = geometric_offsets(0.02, 1.2, 5);
        let zero_row = offsets.iter().position(|&d| d == 0.0).unwrap();
        let spec = OversetGridSpec {
            curve: curve.clone(),
            offsets,
            n_along: 24,
            grid_id: 1,
        };
        let block = build_overset_grid(&spec).unwrap();
        assert_eq!(block.nj, spec.offsets.len() - 1);
        // The 0-offset vertex row reproduces the curve sampling exactly.
        let params = arc_length_params(&curve, spec.n_along);
        let stride = block.ni + 1;
        for (k, &t) in params.iter().enumerate() {
            let v = block.geom[zero_row * stride + k];
            let c = curve.eval(t);
            assert_abs_diff_eq!(v[0], c[0], epsilon = 1e-12);
            assert_abs_diff_eq!(v[1], c[1], epsilon = 1e-12);
        }
    }

    #[test]
    fn band_grid_is_symmetric_for_symmetric_front() {
        let pts: Vec<[f64; 2]> = (0..41)
            .map(|k| {
                let y = -1.0 + 2.0 * k as f64 / 40.0;
                [-0.9 - 0.4 * y * y, y]
            })
            .collect();
        let front = ShockFront { points: pts }.symmetrize_about_y();
        let curve = fit_bspline(&front.points, FitOptions::default()).unwrap();
        let spec = OversetGridSpec {
            curve,
            offsets: geometric_offsets(0.02, 1.2, 4),
            n_along: 30,
            grid_id: 1,
        };
        let block = build_overset_grid(&spec).unwrap();
        let stride = block.ni + 1;
        for j in 0..=block.nj {
            for i in 0..=block.ni {
                let a = block.geom[j * stride + i];
                let b = block.geom[j * stride + (block.ni - i)];
                assert_abs_diff_eq!(a[0], b[0], epsilon = 1e-10);
                assert_abs_diff_eq!(a[1], -b[1], epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn adjacent_offset_lines_stay_parallel() {
        let pts: Vec<[f64; 2]> = (0..50)
            .map(|k| {
                let y = -1.0 + 2.0 * k as f64 / 49.0;
                [-0.9 - 0.3 * y * y, y]
            })
            .collect();
        let curve = fit_bspline(&pts, FitOptions::default()).unwrap();
        let spec = OversetGridSpec {
            curve,
            offsets: vec![-0.06, -0.02, 0.0, 0.02, 0.06],
            n_along: 40,
            grid_id: 1,
        };
        let block = build_overset_grid(&spec).unwrap();
        let stride = block.ni + 1;
        for j in 0..block.nj {
            let gap = (spec.offsets[j + 1] - spec.offsets[j]).abs();
            for i in 0..=block.ni {
                let a = block.geom[j * stride + i];
                // Distance from a to the next offset polyline.
                let mut best = f64::INFINITY;
                for k in 0..=block.ni {
                    let b = block.geom[(j + 1) * stride + k];
                    best = best.min(((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt());
                }
                assert!(
                    (best - gap).abs() <= 0.01 * gap,
                    "row {j} point {i}: distance {best} vs gap {gap}"
                );
            }
        }
    }

    #[test]
    fn straight_band_clips_to_polygon_with_tags() {
        // Ramp-like polygon: flat wall, ramp, outflow, top, inflow.
        let tan10 = 10f64.to_radians().tan();
        let clip = ClipPolygon {
            vertices: vec![
                [0.0, 0.0],
                [3.0, 0.0],
                [5.0, 2.0 * tan10],
                [5.0, 2.0],
                [0.0, 2.0],
            ],
            edge_tags: vec![
                BoundaryTag::Wall,
                BoundaryTag::Wall,
                BoundaryTag::Outflow,
                BoundaryTag::Inflow,
                BoundaryTag::Inflow,
            ],
        };
        let beta = 27.38f64.to_radians();
        let block = build_straight_band(
            [3.0, 0.0],
            [beta.cos(), beta.sin()],
            &[-0.08, -0.03, 0.0, 0.03, 0.08],
            24,
            &clip,
            1,
        )
        .unwrap();
        // Every row starts on the wall and ends on the outflow boundary.
        for j in 0..block.nj {
            let west = block.face_tag(block.elem_index(0, j), Face::West);
            let east = block.face_tag(block.elem_index(block.ni - 1, j), Face::East);
            assert_eq!(west, BoundaryTag::Wall);
            assert_eq!(east, BoundaryTag::Outflow);
        }
        // Vertices stay inside the domain box.
        for v in &block.geom {
            assert!(v[0] >= -1e-12 && v[0] <= 5.0 + 1e-12);
            assert!(v[1] >= -1e-9 && v[1] <= 2.0 + 1e-12);
        }
    }

    #[test]
    fn reduce_width_shrinks_when_flags_are_interior() {
        let pts: Vec<[f64; 2]> = (0..30)
            .map(|k| {
                let y = -1.0 + 2.0 * k as f64 / 29.0;
                [-0.9 - 0.3 * y * y, y]
            })
            .collect();
        let curve = fit_bspline(&pts, FitOptions::default()).unwrap();
        let spec = OversetGridSpec {
            curve,
            offsets: geometric_offsets(0.01, 1.15, 10),
            n_along: 20,
            grid_id: 1,
        };
        let band = build_overset_grid(&spec).unwrap();
        // Flags in the middle third of the rows.
        let mid = band.nj / 2;
        let elems: Vec<usize> = (0..band.ni).map(|i| band.elem_index(i, mid)).collect();
        let troubled = troubled_from(&band, elems);
        let (reduced, changed) = reduce_width(&spec, &troubled, &band, 3, 4);
        assert!(changed);
        assert!(reduced.offsets.len() < spec.offsets.len());
        // All flagged centers remain inside the reduced band's offset range.
        let new_band = build_overset_grid(&reduced).unwrap();
        let idx = crate::overset::build_spatial_index(&new_band);
        for c in &troubled.centers {
            assert!(crate::overset::locate_point(&new_band, &idx, *c).is_some());
        }
    }

    #[test]
    fn reduce_width_refuses_full_span_flags() {
        let pts: Vec<[f64; 2]> = (0..30)
            .map(|k| [k as f64 / 29.0, 0.0])
            .collect();
        let curve = fit_bspline(&pts, FitOptions::default()).unwrap();
        let spec = OversetGridSpec {
            curve,
            offsets: geometric_offsets(0.01, 1.2, 6),
            n_along: 12,
            grid_id: 1,
        };
        let band = build_overset_grid(&spec).unwrap();
        let elems: Vec<usize> = (0..band.nj).map(|j| band.elem_index(4, j)).collect();
        let troubled = troubled_from(&band, elems);
        let (reduced, changed) = reduce_width(&spec, &troubled, &band, 3, 4);
        assert!(!changed);
        assert_eq!(reduced.offsets.len(), spec.offsets.len());
    }

    #[test]
    fn symmetrized_front_is_exactly_symmetric() {
        let pts: Vec<[f64; 2]> = (0..20)
            .map(|k| {
                let y = -1.0 + 2.0 * k as f64 / 19.0 + 0.013;
                [-0.9 - 0.3 * y * y + 0.005 * (k as f64).sin(), y]
            })
            .collect();
        let front = ShockFront { points: pts }.symmetrize_about_y();
        let n = front.points.len();
        for k in 0..n / 2 {
            let a = front.points[k];
            let b = front.points[n - 1 - k];
            assert_abs_diff_eq!(a[0], b[0], epsilon = 1e-14);
            assert_abs_diff_eq!(a[1], -b[1], epsilon = 1e-14);
        }
    }
}
