//! Constructors for the case geometries: Cartesian blocks, the ramp channel
//! and the half O-grid around a circular cylinder.

use std::collections::BTreeMap;

use super::{BoundaryTag, MeshError, StructuredBlock};

/// Uniform Cartesian block on x_range x y_range with bilinear mapping.
pub fn build_cartesian_block(
    x_range: [f64; 2],
    y_range: [f64; 2],
    ni: usize,
    nj: usize,
    side_tags: [BoundaryTag; 4],
) -> Result<StructuredBlock, MeshError> {
    if !(x_range[1] > x_range[0]) || !(y_range[1] > y_range[0]) {
        return Err(MeshError::InvalidExtent(format!(
            "ranges [{}, {}] x [{}, {}]",
            x_range[0], x_range[1], y_range[0], y_range[1]
        )));
    }
    if ni < 1 || nj < 1 {
        return Err(MeshError::InvalidExtent(format!("cell counts {ni} x {nj}")));
    }
    let mut geom = Vec::with_capacity((ni + 1) * (nj + 1));
    for j in 0..=nj {
        let y = y_range[0] + (y_range[1] - y_range[0]) * j as f64 / nj as f64;
        for i in 0..=ni {
            let x = x_range[0] + (x_range[1] - x_range[0]) * i as f64 / ni as f64;
            geom.push([x, y]);
        }
    }
    Ok(StructuredBlock {
        id: 0,
        ni,
        nj,
        mapping_degree: 1,
        geom,
        side_tags,
        face_tag_overrides: BTreeMap::new(),
        active: vec![true; ni * nj],
    })
}

/// Geometry of the ramp channel: a flat run, then a linear ramp, under a flat top.
#[derive(Debug, Clone, Copy)]
pub struct RampExtents {
    pub lead_length: f64,
    pub ramp_length: f64,
    pub height: f64,
}

impl Default for RampExtents {
    fn default() -> Self {
        Self {
            lead_length: 3.0,
            ramp_length: 2.0,
            height: 2.0,
        }
    }
}

impl RampExtents {
    pub fn total_length(&self) -> f64 {
        self.lead_length + self.ramp_length
    }

    /// Wall height at station x.
    pub fn wall_y(&self, angle_deg: f64, x: f64) -> f64 {
        if x <= self.lead_length {
            0.0
        } else {
            (x - self.lead_length) * angle_deg.to_radians().tan()
        }
    }
}

/// Body-fitted block over a ramp of `angle_deg` degrees. The corner is snapped
/// onto a grid line so the wall kink is represented exactly. Tags: bottom Wall,
/// left Inflow, top Inflow (the shock stays below it), right Outflow.
pub fn build_ramp_block(
    angle_deg: f64,
    extents: RampExtents,
    ni: usize,
    nj: usize,
) -> Result<StructuredBlock, MeshError> {
    if !(0.0..45.0).contains(&angle_deg) {
        return Err(MeshError::InvalidExtent(format!("ramp angle {angle_deg}")));
    }
    if ni < 2 || nj < 1 {
        return Err(MeshError::InvalidExtent(format!("cell counts {ni} x {nj}")));
    }
    let total = extents.total_length();
    let ramp_top = extents.wall_y(angle_deg, total);
    if ramp_top >= extents.height {
        return Err(MeshError::Construction(format!(
            "ramp rises to {ramp_top} which exceeds the channel height {}",
            extents.height
        )));
    }
    // Cells split between the lead and ramp sections so x = lead is a grid line.
    let n_lead = ((ni as f64) * extents.lead_length / total).round().max(1.0) as usize;
    let n_lead = n_lead.min(ni - 1);
    let n_ramp = ni - n_lead;

    let mut xs = Vec::with_capacity(ni + 1);
    for i in 0..=n_lead {
        xs.push(extents.lead_length * i as f64 / n_lead as f64);
    }
    for i in 1..=n_ramp {
        xs.push(extents.lead_length + extents.ramp_length * i as f64 / n_ramp as f64);
    }

    let mut geom = Vec::with_capacity((ni + 1) * (nj + 1));
    for j in 0..=nj {
        let f = j as f64 / nj as f64;
        for &x in &xs {
            let yw = extents.wall_y(angle_deg, x);
            geom.push([x, yw + f * (extents.height - yw)]);
        }
    }
    Ok(StructuredBlock {
        id: 0,
        ni,
        nj,
        mapping_degree: 1,
        geom,
        side_tags: [
            BoundaryTag::Wall,
            BoundaryTag::Outflow,
            BoundaryTag::Inflow,
            BoundaryTag::Inflow,
        ],
        face_tag_overrides: BTreeMap::new(),
        active: vec![true; ni * nj],
    })
}

/// Outer boundary of the cylinder domain: a half ellipse, its upstream
/// semi-axis `upstream` and exit-plane semi-axis `lateral`, both measured
/// from the cylinder center.
#[derive(Debug, Clone, Copy)]
pub struct CylinderExtents {
    pub upstream: f64,
    pub lateral: f64,
}

impl Default for CylinderExtents {
    fn default() -> Self {
        // Three radii upstream for radius 0.5, wide enough laterally that the
        // bow shock leaves through the exit planes.
        Self {
            upstream: 1.5,
            lateral: 2.2,
        }
    }
}

/// Half O-grid between the cylinder r = `radius` (centered at the origin,
/// windward side toward -x) and the outer half ellipse. Index i runs along the
/// circumference from the bottom exit plane (-y) to the top (+y); j runs from
/// the wall outward. Tags: South Wall, North Inflow, West/East Outflow.
pub fn build_cylinder_block(
    radius: f64,
    extents: CylinderExtents,
    ni: usize,
    nj: usize,
    mapping_degree: usize,
) -> Result<StructuredBlock, MeshError> {
    if !(radius > 0.0) {
        return Err(MeshError::InvalidExtent(format!("radius {radius}")));
    }
    if extents.upstream <= radius || extents.lateral <= radius {
        return Err(MeshError::Construction(format!(
            "outer boundary ({}, {}) does not enclose the cylinder of radius {radius}",
            extents.upstream, extents.lateral
        )));
    }
    if !(mapping_degree == 1 || mapping_degree == 2) {
        return Err(MeshError::Construction(format!(
            "unsupported mapping degree {mapping_degree}"
        )));
    }
    let g = mapping_degree;
    let (li, lj) = (g * ni + 1, g * nj + 1);
    let mut geom = Vec::with_capacity(li * lj);
    for jj in 0..lj {
        let f = jj as f64 / (lj - 1) as f64;
        for ii in 0..li {
            // alpha measured from the -x axis, positive toward +y.
            let alpha = std::f64::consts::PI * (ii as f64 / (li - 1) as f64 - 0.5);
            let dir = [-alpha.cos(), alpha.sin()];
            let inner = [radius * dir[0], radius * dir[1]];
            let outer = [-extents.upstream * alpha.cos(), extents.lateral * alpha.sin()];
            geom.push([
                inner[0] + f * (outer[0] - inner[0]),
                inner[1] + f * (outer[1] - inner[1]),
            ]);
        }
    }
    Ok(StructuredBlock {
        id: 0,
        ni,
        nj,
        mapping_degree: g,
        geom,
        side_tags: [
            BoundaryTag::Wall,
            BoundaryTag::Outflow,
            BoundaryTag::Inflow,
            BoundaryTag::Outflow,
        ],
        face_tag_overrides: BTreeMap::new(),
        active: vec![true; ni * nj],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::cached_basis;
    use crate::mesh::GridGeometry;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_angle_ramp_is_cartesian() {
        let ramp = build_ramp_block(0.0, RampExtents::default(), 10, 4).unwrap();
        let cart = build_cartesian_block([0.0, 5.0], [0.0, 2.0], 10, 4, ramp.side_tags).unwrap();
        for (a, b) in ramp.geom.iter().zip(&cart.geom) {
            assert_abs_diff_eq!(a[0], b[0], epsilon = 1e-13);
            assert_abs_diff_eq!(a[1], b[1], epsilon = 1e-13);
        }
    }

    #[test]
    fn ramp_wall_slope_changes_at_base() {
        let b = build_ramp_block(10.0, RampExtents::default(), 80, 40).unwrap();
        // Wall vertices before the corner stay at y = 0; after, slope tan(10 deg).
        let stride = b.ni + 1;
        let tan10 = 10f64.to_radians().tan();
        for i in 0..=b.ni {
            let v = b.geom[i];
            let expect = if v[0] <= 3.0 { 0.0 } else { (v[0] - 3.0) * tan10 };
            assert_abs_diff_eq!(v[1], expect, epsilon = 1e-12);
        }
        let _ = stride;
    }

    #[test]
    fn ramp_jacobians_positive_at_quadrature_points() {
        let basis = cached_basis(2);
        let b = build_ramp_block(10.0, RampExtents::default(), 80, 40).unwrap();
        b.check_jacobians(&basis).unwrap();
    }

    #[test]
    fn cylinder_paper_dimensions_construct() {
        let b = build_cylinder_block(0.5, CylinderExtents::default(), 150, 100, 2).unwrap();
        assert_eq!((b.ni, b.nj), (150, 100));
    }

    #[test]
    fn cylinder_wall_vertices_on_circle() {
        let b = build_cylinder_block(0.5, CylinderExtents::default(), 24, 10, 2).unwrap();
        let stride = 2 * b.ni + 1;
        for ii in 0..stride {
            let v = b.geom[ii];
            let r = (v[0] * v[0] + v[1] * v[1]).sqrt();
            assert_abs_diff_eq!(r, 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn cylinder_area_matches_half_ellipse_minus_half_disk() {
        let basis = cached_basis(3);
        let ext = CylinderExtents::default();
        let b = build_cylinder_block(0.5, ext, 96, 48, 2).unwrap();
        let g = GridGeometry::build(&b, &basis).unwrap();
        let total: f64 = g.area.iter().sum();
        let exact = 0.5 * std::f64::consts::PI * (ext.upstream * ext.lateral - 0.25);
        assert!(
            (total - exact).abs() / exact < 1e-3,
            "area {total} vs analytic {exact}"
        );
    }

    #[test]
    fn invalid_extents_error() {
        assert!(build_cylinder_block(-1.0, CylinderExtents::default(), 8, 4, 2).is_err());
        assert!(build_cylinder_block(
            0.5,
            CylinderExtents {
                upstream: 0.4,
                lateral: 2.0
            },
            8,
            4,
            2
        )
        .is_err());
        assert!(build_ramp_block(
            30.0,
            RampExtents {
                lead_length: 1.0,
                ramp_length: 4.0,
                height: 2.0
            },
            10,
            4
        )
        .is_err());
    }
}
