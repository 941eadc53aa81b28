//! Run configuration: one TOML or JSON file per run.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use topolab::discflow::{BoundaryCircle, FlowOptions};
use topolab::lagrangian::{CellThresholds, LoopSpec};
use topolab::surfgeom::expr::ExprSurface;
use topolab::surfgeom::{Domain, Orientation, ParamRay, ParamSurface, ProbeOptions, SampleGrid};
use topolab::toponogov::{
    make_builtin, CigarProfile, LinearProfile, ProfileGrid, SineProfile, SweepOptions, ToponogovProfile,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    /// Output directory; `--out` takes precedence.
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub surface: Option<SurfaceSpec>,
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub thresholds: CellThresholds,
    pub analyze: Option<AnalyzeSpec>,
    pub maslov: Option<MaslovSpec>,
    pub flow: Option<FlowSpec>,
    pub toponogov: Option<ToponogovSpec>,
}

/// Either a builtin family or three coordinate expressions in `s`, `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceSpec {
    pub family: Option<String>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    pub expr: Option<ExprSpec>,
    /// Replaces the family's parameter domain.
    pub domain: Option<Domain>,
    pub orientation: Option<Orientation>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExprSpec {
    pub x: String,
    pub y: String,
    pub z: String,
    /// Parameter length that sizes the difference steps (default: domain scale).
    pub scale: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub s: [f64; 2],
    pub t: [f64; 2],
    pub ns: usize,
    pub nt: usize,
}

impl GridSpec {
    pub fn build(&self, field: &str) -> Result<SampleGrid, String> {
        if self.ns < 2 || self.nt < 2 {
            return Err(format!("{field}: ns and nt must be at least 2"));
        }
        if ![self.s, self.t].iter().flatten().all(|v| v.is_finite()) || !(self.s[1] > self.s[0]) || !(self.t[1] > self.t[0])
        {
            return Err(format!("{field}: ranges must be finite and increasing"));
        }
        Ok(SampleGrid::uniform((self.s[0], self.s[1]), self.ns, (self.t[0], self.t[1]), self.nt))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalyzeSpec {
    /// Random lines at which the signature of G is sampled.
    pub signature_samples: usize,
    /// Points with a larger gap must carry a Lorentz induced metric.
    pub lorentz_gap: f64,
}

impl Default for AnalyzeSpec {
    fn default() -> Self {
        Self { signature_samples: 1000, lorentz_gap: 0.1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaslovSpec {
    pub loops: Vec<LoopSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSpec {
    pub circle: BoundaryCircle,
    #[serde(default = "default_n_r")]
    pub n_r: usize,
    #[serde(default = "default_n_theta")]
    pub n_theta: usize,
    /// Grid of the section the boundary is solved on.
    #[serde(default = "default_section_grid")]
    pub section_grid: GridSpec,
    #[serde(default)]
    pub options: FlowOptions,
}

fn default_n_r() -> usize {
    32
}

fn default_n_theta() -> usize {
    64
}

fn default_section_grid() -> GridSpec {
    GridSpec { s: [-3.0, 3.0], t: [-3.0, 3.0], ns: 49, nt: 49 }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToponogovSpec {
    pub profile: Option<ProfileSpec>,
    #[serde(default)]
    pub profile_grid: ProfileGrid,
    /// Radii of the gap sweep over `surface`.
    pub radii: Option<Vec<f64>>,
    #[serde(default)]
    pub sweep: SweepOptions,
    /// Completeness probe rays over `surface`.
    #[serde(default)]
    pub rays: Vec<ParamRay>,
    #[serde(default)]
    pub probe: ProbeOptions,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProfileSpec {
    Cigar(CigarProfile),
    Linear(LinearProfile),
    Sine(SineProfile),
}

impl ProfileSpec {
    pub fn build(&self) -> Arc<dyn ToponogovProfile> {
        match *self {
            ProfileSpec::Cigar(p) => Arc::new(p),
            ProfileSpec::Linear(p) => Arc::new(p),
            ProfileSpec::Sine(p) => Arc::new(p),
        }
    }
}

impl SurfaceSpec {
    pub fn build(&self) -> Result<ParamSurface, String> {
        let mut surface = match (&self.family, &self.expr) {
            (Some(name), None) => make_builtin(name, &self.params).map_err(|e| format!("surface: {e}"))?,
            (None, Some(e)) => {
                if !self.params.is_empty() {
                    return Err("surface: `params` only applies to families".into());
                }
                let domain = self.domain.unwrap_or_else(Domain::plane);
                let scale = e.scale.unwrap_or_else(|| domain.scale());
                if !(scale > 0.0 && scale.is_finite()) {
                    return Err("surface.expr.scale must be finite and positive".into());
                }
                let map = ExprSurface::parse(&e.x, &e.y, &e.z, scale).map_err(|e| format!("surface.expr: {e}"))?;
                ParamSurface::new("expr", domain, Orientation::Positive, Arc::new(map))
            }
            _ => return Err("surface: give exactly one of `family` and `expr`".into()),
        };
        if let Some(d) = self.domain {
            surface = surface.with_domain(d);
        }
        if let Some(o) = self.orientation {
            surface = surface.with_orientation(o);
        }
        Ok(surface)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Toml,
    Json,
}

impl Format {
    pub fn detect(path: &Path) -> Result<Self, String> {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("toml") => Ok(Format::Toml),
            Some("json") => Ok(Format::Json),
            _ => Err(format!("{}: config must end in .toml or .json", path.display())),
        }
    }
}

/// Parses a config, reporting the line and field of the first schema error.
pub fn parse(text: &str, format: Format) -> Result<RunConfig, String> {
    match format {
        Format::Toml => toml::from_str(text).map_err(|e| {
            let at = e.span().map(|sp| {
                let line = text[..sp.start.min(text.len())].matches('\n').count() + 1;
                format!("line {line}: ")
            });
            format!("{}{}", at.unwrap_or_default(), e.message())
        }),
        Format::Json => serde_json::from_str(text).map_err(|e| e.to_string()),
    }
}
