//! Case configuration: defaults per case plus a flat `key = value` file
//! format with `[section]` headers.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::euler::FluxKind;
use crate::mesh::{CylinderExtents, RampExtents};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unknown case `{0}` (expected vortex|ramp|reflection|cylinder)")]
    UnknownCase(String),
    #[error("invalid value for `{key}`: {value}")]
    BadValue { key: String, value: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseKind {
    Vortex,
    Ramp,
    Reflection,
    Cylinder,
}

impl CaseKind {
    pub fn parse(s: &str) -> Result<Self, ConfigError> {
        match s {
            "vortex" => Ok(CaseKind::Vortex),
            "ramp" => Ok(CaseKind::Ramp),
            "reflection" => Ok(CaseKind::Reflection),
            "cylinder" => Ok(CaseKind::Cylinder),
            other => Err(ConfigError::UnknownCase(other.into())),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            CaseKind::Vortex => "vortex",
            CaseKind::Ramp => "ramp",
            CaseKind::Reflection => "reflection",
            CaseKind::Cylinder => "cylinder",
        }
    }
}

fn parse_flux(s: &str) -> Option<FluxKind> {
    match s {
        "lf" => Some(FluxKind::LaxFriedrichs),
        "lf_global" => Some(FluxKind::LaxFriedrichsGlobal),
        "slau2" => Some(FluxKind::Slau2),
        _ => None,
    }
}

fn flux_str(f: FluxKind) -> &'static str {
    match f {
        FluxKind::LaxFriedrichs => "lf",
        FluxKind::LaxFriedrichsGlobal => "lf_global",
        FluxKind::Slau2 => "slau2",
    }
}

/// All knobs of a case run. Defaults come from `CaseConfig::default_for`; a
/// config file overrides individual keys.
#[derive(Debug, Clone)]
pub struct CaseConfig {
    pub case: CaseKind,
    pub mach: f64,
    pub order: usize,
    pub cfl: f64,
    /// Extra flux-quadrature points per direction beyond collocation.
    pub quad_extra: usize,
    pub steady_tol: f64,
    pub max_steps_stage1: usize,
    pub max_steps_stage4: usize,
    pub out_dir: PathBuf,

    // Coarse grid.
    pub coarse_ni: usize,
    pub coarse_nj: usize,
    pub coarse_flux: FluxKind,

    // Case geometry.
    pub ramp_angle_deg: f64,
    pub ramp_extents: RampExtents,
    pub reflection_domain: [f64; 4],
    pub reflection_shock_angle_deg: f64,
    pub cylinder_radius: f64,
    pub cylinder_extents: CylinderExtents,
    pub cylinder_mapping_degree: usize,

    // Overset band.
    pub band_n_along: usize,
    pub band_layers: usize,
    pub band_h0: f64,
    pub band_ratio: f64,
    pub band_flux: FluxKind,
    /// Drop this many front points at each end before fitting (keeps the band
    /// inside the background domain).
    pub front_clip: usize,
    /// Symmetrize the extracted front about y = 0 (cylinder).
    pub symmetrize_front: bool,
    pub hole_margin_cells: usize,

    // Width reduction (Step 4).
    pub reduce_enabled: bool,
    pub reduce_after_steps: usize,
    pub reduce_margin_rows: usize,

    // Limiter.
    pub limiter_threshold: f64,
    pub limiter_characteristic: bool,

    // Vortex study.
    pub vortex_resolutions: Vec<usize>,
    pub vortex_t_final: f64,
    pub vortex_flux: FluxKind,
    pub vortex_patch: [f64; 4],
}

impl CaseConfig {
    pub fn default_for(case: CaseKind) -> Self {
        let mut cfg = Self {
            case,
            mach: 3.0,
            order: 2,
            cfl: 0.4,
            quad_extra: 1,
            steady_tol: 1e-8,
            max_steps_stage1: 20_000,
            max_steps_stage4: 20_000,
            out_dir: PathBuf::from("out"),
            coarse_ni: 96,
            coarse_nj: 48,
            coarse_flux: FluxKind::LaxFriedrichs,
            ramp_angle_deg: 10.0,
            ramp_extents: RampExtents::default(),
            reflection_domain: [0.0, 3.5, 0.0, 1.0],
            reflection_shock_angle_deg: 29.0,
            cylinder_radius: 0.5,
            cylinder_extents: CylinderExtents::default(),
            cylinder_mapping_degree: 2,
            band_n_along: 96,
            band_layers: 10,
            band_h0: 0.008,
            band_ratio: 1.25,
            band_flux: FluxKind::Slau2,
            front_clip: 2,
            symmetrize_front: false,
            hole_margin_cells: 2,
            reduce_enabled: true,
            reduce_after_steps: 2000,
            reduce_margin_rows: 3,
            limiter_threshold: 1.0,
            limiter_characteristic: false,
            vortex_resolutions: vec![40, 80, 160],
            vortex_t_final: 10.0,
            vortex_flux: FluxKind::Slau2,
            vortex_patch: [3.0, 7.0, -2.0, 2.0],
        };
        match case {
            CaseKind::Vortex => {}
            CaseKind::Ramp => {
                cfg.coarse_ni = 100;
                cfg.coarse_nj = 40;
                cfg.max_steps_stage1 = 12_000;
                cfg.max_steps_stage4 = 12_000;
                cfg.band_n_along = 72;
                cfg.band_layers = 8;
                cfg.band_h0 = 0.012;
                cfg.band_ratio = 1.3;
                cfg.front_clip = 1;
            }
            CaseKind::Reflection => {
                cfg.coarse_ni = 112;
                cfg.coarse_nj = 32;
                cfg.max_steps_stage1 = 12_000;
                cfg.max_steps_stage4 = 12_000;
                cfg.band_n_along = 96;
                cfg.band_layers = 14;
                cfg.band_h0 = 0.02;
                cfg.band_ratio = 1.25;
                cfg.front_clip = 1;
                cfg.reduce_enabled = false;
            }
            CaseKind::Cylinder => {
                cfg.coarse_ni = 96;
                cfg.coarse_nj = 64;
                cfg.max_steps_stage1 = 30_000;
                cfg.max_steps_stage4 = 30_000;
                cfg.band_n_along = 128;
                cfg.band_layers = 10;
                cfg.band_h0 = 0.008;
                cfg.band_ratio = 1.3;
                cfg.front_clip = 3;
                cfg.symmetrize_front = true;
            }
        }
        cfg
    }

    /// Parse a config file over the case defaults. The `case` key in the file
    /// chooses the default set unless `force_case` pins it.
    pub fn from_file(path: &Path, force_case: Option<CaseKind>) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_text(&text, force_case)
    }

    pub fn from_text(text: &str, force_case: Option<CaseKind>) -> Result<Self, ConfigError> {
        let entries = parse_entries(text)?;
        let case = match force_case {
            Some(c) => c,
            None => {
                let name = entries
                    .get(&(String::new(), "case".to_string()))
                    .map(|s| s.as_str())
                    .unwrap_or("vortex");
                CaseKind::parse(name)?
            }
        };
        let mut cfg = Self::default_for(case);
        cfg.apply(&entries)?;
        Ok(cfg)
    }

    fn apply(&mut self, entries: &BTreeMap<(String, String), String>) -> Result<(), ConfigError> {
        let bad = |key: &str, value: &str| ConfigError::BadValue {
            key: key.into(),
            value: value.into(),
        };
        for ((section, key), value) in entries {
            let full = if section.is_empty() {
                key.clone()
            } else {
                format!("{section}.{key}")
            };
            macro_rules! num {
                () => {
                    value.parse().map_err(|_| bad(&full, value))?
                };
            }
            match full.as_str() {
                "case" => {} // handled by the caller
                "mach" => self.mach = num!(),
                "order" => self.order = num!(),
                "cfl" => self.cfl = num!(),
                "quad_extra" => self.quad_extra = num!(),
                "steady_tol" => self.steady_tol = num!(),
                "max_steps_stage1" => self.max_steps_stage1 = num!(),
                "max_steps_stage4" => self.max_steps_stage4 = num!(),
                "out_dir" => self.out_dir = PathBuf::from(value),
                "coarse.ni" => self.coarse_ni = num!(),
                "coarse.nj" => self.coarse_nj = num!(),
                "coarse.flux" => {
                    self.coarse_flux = parse_flux(value).ok_or_else(|| bad(&full, value))?
                }
                "ramp.angle" => self.ramp_angle_deg = num!(),
                "ramp.lead_length" => self.ramp_extents.lead_length = num!(),
                "ramp.ramp_length" => self.ramp_extents.ramp_length = num!(),
                "ramp.height" => self.ramp_extents.height = num!(),
                "reflection.shock_angle" => self.reflection_shock_angle_deg = num!(),
                "cylinder.radius" => self.cylinder_radius = num!(),
                "cylinder.upstream" => self.cylinder_extents.upstream = num!(),
                "cylinder.lateral" => self.cylinder_extents.lateral = num!(),
                "cylinder.mapping_degree" => self.cylinder_mapping_degree = num!(),
                "overset.n_along" => self.band_n_along = num!(),
                "overset.layers" => self.band_layers = num!(),
                "overset.h0" => self.band_h0 = num!(),
                "overset.ratio" => self.band_ratio = num!(),
                "overset.flux" => {
                    self.band_flux = parse_flux(value).ok_or_else(|| bad(&full, value))?
                }
                "overset.front_clip" => self.front_clip = num!(),
                "overset.symmetrize" => self.symmetrize_front = num!(),
                "overset.hole_margin" => self.hole_margin_cells = num!(),
                "reduce.enabled" => self.reduce_enabled = num!(),
                "reduce.after_steps" => self.reduce_after_steps = num!(),
                "reduce.margin_rows" => self.reduce_margin_rows = num!(),
                "limiter.threshold" => self.limiter_threshold = num!(),
                "limiter.characteristic" => self.limiter_characteristic = num!(),
                "vortex.resolutions" => {
                    self.vortex_resolutions = value
                        .split(',')
                        .map(|t| t.trim().parse().map_err(|_| bad(&full, value)))
                        .collect::<Result<_, _>>()?;
                }
                "vortex.t_final" => self.vortex_t_final = num!(),
                "vortex.flux" => {
                    self.vortex_flux = parse_flux(value).ok_or_else(|| bad(&full, value))?
                }
                other => {
                    return Err(ConfigError::Parse {
                        line: 0,
                        message: format!("unknown key `{other}`"),
                    })
                }
            }
        }
        Ok(())
    }

    /// Serialize the configuration in the same flat format.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        use std::fmt::Write;
        let _ = writeln!(s, "case = {}", self.case.as_str());
        let _ = writeln!(s, "mach = {}", self.mach);
        let _ = writeln!(s, "order = {}", self.order);
        let _ = writeln!(s, "cfl = {}", self.cfl);
        let _ = writeln!(s, "quad_extra = {}", self.quad_extra);
        let _ = writeln!(s, "steady_tol = {:e}", self.steady_tol);
        let _ = writeln!(s, "max_steps_stage1 = {}", self.max_steps_stage1);
        let _ = writeln!(s, "max_steps_stage4 = {}", self.max_steps_stage4);
        let _ = writeln!(s, "\n[coarse]");
        let _ = writeln!(s, "ni = {}", self.coarse_ni);
        let _ = writeln!(s, "nj = {}", self.coarse_nj);
        let _ = writeln!(s, "flux = {}", flux_str(self.coarse_flux));
        match self.case {
            CaseKind::Ramp => {
                let _ = writeln!(s, "\n[ramp]");
                let _ = writeln!(s, "angle = {}", self.ramp_angle_deg);
                let _ = writeln!(s, "lead_length = {}", self.ramp_extents.lead_length);
                let _ = writeln!(s, "ramp_length = {}", self.ramp_extents.ramp_length);
                let _ = writeln!(s, "height = {}", self.ramp_extents.height);
            }
            CaseKind::Reflection => {
                let _ = writeln!(s, "\n[reflection]");
                let _ = writeln!(s, "shock_angle = {}", self.reflection_shock_angle_deg);
            }
            CaseKind::Cylinder => {
                let _ = writeln!(s, "\n[cylinder]");
                let _ = writeln!(s, "radius = {}", self.cylinder_radius);
                let _ = writeln!(s, "upstream = {}", self.cylinder_extents.upstream);
                let _ = writeln!(s, "lateral = {}", self.cylinder_extents.lateral);
                let _ = writeln!(s, "mapping_degree = {}", self.cylinder_mapping_degree);
            }
            CaseKind::Vortex => {
                let _ = writeln!(s, "\n[vortex]");
                let res: Vec<String> =
                    self.vortex_resolutions.iter().map(|n| n.to_string()).collect();
                let _ = writeln!(s, "resolutions = {}", res.join(","));
                let _ = writeln!(s, "t_final = {}", self.vortex_t_final);
                let _ = writeln!(s, "flux = {}", flux_str(self.vortex_flux));
            }
        }
        if self.case != CaseKind::Vortex {
            let _ = writeln!(s, "\n[overset]");
            let _ = writeln!(s, "n_along = {}", self.band_n_along);
            let _ = writeln!(s, "layers = {}", self.band_layers);
            let _ = writeln!(s, "h0 = {}", self.band_h0);
            let _ = writeln!(s, "ratio = {}", self.band_ratio);
            let _ = writeln!(s, "flux = {}", flux_str(self.band_flux));
            let _ = writeln!(s, "front_clip = {}", self.front_clip);
            let _ = writeln!(s, "symmetrize = {}", self.symmetrize_front);
            let _ = writeln!(s, "hole_margin = {}", self.hole_margin_cells);
            let _ = writeln!(s, "\n[reduce]");
            let _ = writeln!(s, "enabled = {}", self.reduce_enabled);
            let _ = writeln!(s, "after_steps = {}", self.reduce_after_steps);
            let _ = writeln!(s, "margin_rows = {}", self.reduce_margin_rows);
        }
        let _ = writeln!(s, "\n[limiter]");
        let _ = writeln!(s, "threshold = {}", self.limiter_threshold);
        let _ = writeln!(s, "characteristic = {}", self.limiter_characteristic);
        s
    }
}

fn parse_entries(text: &str) -> Result<BTreeMap<(String, String), String>, ConfigError> {
    let mut out = BTreeMap::new();
    let mut section = String::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') {
            if !line.ends_with(']') {
                return Err(ConfigError::Parse {
                    line: lineno + 1,
                    message: format!("malformed section `{line}`"),
                });
            }
            section = line[1..line.len() - 1].trim().to_string();
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError::Parse {
                line: lineno + 1,
                message: format!("expected `key = value`, got `{line}`"),
            });
        };
        out.insert(
            (section.clone(), key.trim().to_string()),
            value.trim().to_string(),
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_text() {
        for case in [CaseKind::Vortex, CaseKind::Ramp, CaseKind::Reflection, CaseKind::Cylinder] {
            let cfg = CaseConfig::default_for(case);
            let text = cfg.to_text();
            let back = CaseConfig::from_text(&text, None).unwrap();
            assert_eq!(back.case, case);
            assert_eq!(back.coarse_ni, cfg.coarse_ni);
            assert_eq!(back.band_layers, cfg.band_layers);
            assert_eq!(back.mach, cfg.mach);
        }
    }

    #[test]
    fn overrides_apply_and_unknown_keys_error() {
        let text = "case = cylinder\nmach = 3.6\n[coarse]\nni = 72\nnj = 48\n";
        let cfg = CaseConfig::from_text(text, None).unwrap();
        assert_eq!(cfg.case, CaseKind::Cylinder);
        assert_eq!(cfg.mach, 3.6);
        assert_eq!((cfg.coarse_ni, cfg.coarse_nj), (72, 48));

        assert!(CaseConfig::from_text("nonsense_key = 3\n", None).is_err());
        assert!(CaseConfig::from_text("case = warpdrive\n", None).is_err());
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let text = "# a comment\ncase = ramp\n\nmach = 4.0 # trailing\n";
        let cfg = CaseConfig::from_text(text, None).unwrap();
        assert_eq!(cfg.case, CaseKind::Ramp);
        assert_eq!(cfg.mach, 4.0);
    }
}
