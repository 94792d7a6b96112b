//! Run configuration (TOML) with defaults, validation and round-trip serialization.

use crate::error::{Error, Result};
use crate::sampler::{Pattern, Region};
use crate::schottky::{validate_u2, Generator, SchottkyData};
use crate::surface::{HarnackData, TrackPair, DEFAULT_CLIP};
use serde::{Deserialize, Serialize};
use std::str::FromStr;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    #[serde(default = "max_letters")]
    pub max_letters: u32,
    #[serde(default = "theta_tol")]
    pub theta_tol: f64,
    #[serde(default = "quad_tol")]
    pub quad_tol: f64,
    /// Real shift of the theta arguments; empty means the zero vector.
    #[serde(default)]
    pub d: Vec<f64>,
    pub schottky: SchottkySection,
    pub harnack: HarnackSection,
    #[serde(default)]
    pub lattice: LatticeSection,
    #[serde(default)]
    pub chain: ChainSection,
    #[serde(default)]
    pub outputs: OutputSection,
    #[serde(default)]
    pub checks: CheckSection,
    #[serde(default)]
    pub grid: GridSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchottkySection {
    /// `[re(A), im(A), mu]` per generator.
    #[serde(default)]
    pub generators: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarnackSection {
    pub alpha_minus: Vec<f64>,
    pub alpha_plus: Vec<f64>,
    pub beta_minus: Vec<f64>,
    pub beta_plus: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSection {
    /// Fundamental domain sizes; inferred from the Harnack arrays when absent.
    pub m: Option<usize>,
    pub n: Option<usize>,
    #[serde(default = "side")]
    pub height: usize,
    #[serde(default = "side")]
    pub width: usize,
    /// `aztec`: a `height x height` square of the weight lattice (an Aztec diamond for the sampler).
    /// `rectangle`: `height x width` faces of the sampler grid.
    #[serde(default = "region")]
    pub region: String,
    #[serde(default = "pattern")]
    pub pattern: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSection {
    #[serde(default = "sweeps")]
    pub sweeps: u64,
    #[serde(default)]
    pub seed: u64,
    /// Absolute volume (sum of heights over active faces) to hold fixed.
    pub volume_target: Option<f64>,
    #[serde(default = "record_interval")]
    pub record_interval: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "directory")]
    pub directory: String,
    #[serde(default = "formats")]
    pub formats: Vec<String>,
}

/// Pass thresholds for `validate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSection {
    #[serde(default = "periodicity_tol")]
    pub periodicity_tol: f64,
    #[serde(default = "residual_tol")]
    pub fay_tol: f64,
    #[serde(default = "residual_tol")]
    pub dirac_tol: f64,
    /// Number of random spot checks for the Fay and Dirac residuals.
    #[serde(default = "spot_checks")]
    pub spot_checks: usize,
}

/// Sample points of the upper half-domain for the amoeba and Ronkin commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    /// Real range; defaults to the marked points padded by 1.
    pub re_min: Option<f64>,
    pub re_max: Option<f64>,
    #[serde(default = "im_max")]
    pub im_max: f64,
    #[serde(default = "nx")]
    pub nx: usize,
    #[serde(default = "ny")]
    pub ny: usize,
    #[serde(default = "boundary_samples")]
    pub boundary_samples: usize,
    #[serde(default = "clip")]
    pub clip: f64,
}

fn schema_version() -> u32 {
    SCHEMA_VERSION
}
fn max_letters() -> u32 {
    8
}
fn theta_tol() -> f64 {
    1e-12
}
fn quad_tol() -> f64 {
    1e-9
}
fn side() -> usize {
    64
}
fn region() -> String {
    "aztec".into()
}
fn pattern() -> String {
    "brickwork_horizontal".into()
}
fn sweeps() -> u64 {
    1000
}
fn record_interval() -> u64 {
    10
}
fn directory() -> String {
    "out".into()
}
fn formats() -> Vec<String> {
    ["csv", "json", "svg", "hex"].iter().map(|s| s.to_string()).collect()
}
fn periodicity_tol() -> f64 {
    1e-10
}
fn residual_tol() -> f64 {
    1e-9
}
fn spot_checks() -> usize {
    10
}
fn im_max() -> f64 {
    3.0
}
fn nx() -> usize {
    41
}
fn ny() -> usize {
    20
}
fn boundary_samples() -> usize {
    200
}
fn clip() -> f64 {
    DEFAULT_CLIP
}

impl Default for LatticeSection {
    fn default() -> Self {
        LatticeSection { m: None, n: None, height: side(), width: side(), region: region(), pattern: pattern() }
    }
}

impl Default for ChainSection {
    fn default() -> Self {
        ChainSection { sweeps: sweeps(), seed: 0, volume_target: None, record_interval: record_interval() }
    }
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { directory: directory(), formats: formats() }
    }
}

impl Default for CheckSection {
    fn default() -> Self {
        CheckSection { periodicity_tol: periodicity_tol(), fay_tol: residual_tol(), dirac_tol: residual_tol(), spot_checks: spot_checks() }
    }
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            re_min: None,
            re_max: None,
            im_max: im_max(),
            nx: nx(),
            ny: ny(),
            boundary_samples: boundary_samples(),
            clip: clip(),
        }
    }
}

fn bad(path: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("{path}: {msg}"))
}

/// Parse and validate; every error names the offending field.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn schottky_data(&self) -> SchottkyData {
        SchottkyData::new(self.schottky.generators.iter().map(|g| Generator::new(g[0], g[1], g[2])).collect())
    }

    pub fn harnack_data(&self) -> HarnackData {
        let h = &self.harnack;
        HarnackData::new(
            h.alpha_minus.iter().zip(&h.alpha_plus).map(|(&m, &p)| TrackPair::new(m, p)).collect(),
            h.beta_minus.iter().zip(&h.beta_plus).map(|(&m, &p)| TrackPair::new(m, p)).collect(),
        )
    }

    pub fn region(&self) -> Result<Region> {
        let l = &self.lattice;
        match l.region.as_str() {
            "aztec" => {
                if l.height != l.width {
                    return Err(bad("lattice.width", format!("aztec region needs height == width, got {} and {}", l.height, l.width)));
                }
                Ok(Region::Aztec { order: l.height })
            }
            "rectangle" => Ok(Region::Rectangle { rows: l.height, cols: l.width }),
            other => Err(bad("lattice.region", format!("unknown region {other:?} (expected aztec or rectangle)"))),
        }
    }

    pub fn pattern(&self) -> Result<Pattern> {
        Pattern::from_str(&self.lattice.pattern).map_err(|e| bad("lattice.pattern", e))
    }

    /// Real range of the sample grid.
    pub fn grid_range(&self) -> (f64, f64) {
        let pts: Vec<f64> = self.harnack_data().marked_points().iter().map(|p| p.1).collect();
        let lo = pts.iter().cloned().fold(f64::INFINITY, f64::min) - 1.0;
        let hi = pts.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 1.0;
        (self.grid.re_min.unwrap_or(lo), self.grid.re_max.unwrap_or(hi))
    }

    pub fn wants(&self, format: &str) -> bool {
        self.outputs.formats.iter().any(|f| f == format)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(bad("schema_version", format!("unsupported version {} (expected {SCHEMA_VERSION})", self.schema_version)));
        }
        if self.max_letters == 0 {
            return Err(bad("max_letters", "must be at least 1"));
        }
        for (path, v) in [("theta_tol", self.theta_tol), ("quad_tol", self.quad_tol)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(bad(path, format!("must lie in (0, 1), got {v}")));
            }
        }
        let violations = validate_u2(&self.schottky_data());
        if let Some(v) = violations.first() {
            let all: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
            let idx = match v {
                crate::schottky::Violation::ImaginaryPart { index }
                | crate::schottky::Violation::Multiplier { index }
                | crate::schottky::Violation::NotFinite { index } => *index,
                crate::schottky::Violation::DiscOverlap { first, .. } => *first,
            };
            return Err(bad(&format!("schottky.generators[{idx}]"), all.join("; ")));
        }
        let g = self.schottky.generators.len();
        if !self.d.is_empty() && self.d.len() != g {
            return Err(bad("d", format!("length {} does not match genus {g}", self.d.len())));
        }
        if self.d.iter().any(|x| !x.is_finite()) {
            return Err(bad("d", "entries must be finite"));
        }
        let h = &self.harnack;
        if h.alpha_minus.len() != h.alpha_plus.len() {
            return Err(bad("harnack.alpha_plus", "alpha_minus and alpha_plus lengths differ"));
        }
        if h.beta_minus.len() != h.beta_plus.len() {
            return Err(bad("harnack.beta_plus", "beta_minus and beta_plus lengths differ"));
        }
        let harnack = self.harnack_data();
        harnack.validate(&self.schottky_data()).map_err(|e| bad("harnack", e))?;
        for (path, want, got) in [("lattice.m", self.lattice.m, h.alpha_minus.len()), ("lattice.n", self.lattice.n, h.beta_minus.len())] {
            if let Some(w) = want {
                if w != got {
                    return Err(bad(path, format!("{w} does not match the {got} Harnack pairs")));
                }
            }
        }
        if self.lattice.height == 0 || self.lattice.width == 0 {
            return Err(bad("lattice.height", "patch must be non-empty"));
        }
        self.region()?;
        self.pattern()?;
        if let Some(v) = self.chain.volume_target {
            if !v.is_finite() {
                return Err(bad("chain.volume_target", "must be finite"));
            }
        }
        for f in &self.outputs.formats {
            if !["csv", "json", "svg", "hex"].contains(&f.as_str()) {
                return Err(bad("outputs.formats", format!("unknown format {f:?}")));
            }
        }
        let c = &self.checks;
        for (path, v) in [("checks.periodicity_tol", c.periodicity_tol), ("checks.fay_tol", c.fay_tol), ("checks.dirac_tol", c.dirac_tol)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(bad(path, format!("must be positive, got {v}")));
            }
        }
        let gr = &self.grid;
        let (lo, hi) = self.grid_range();
        if !(lo < hi) || !(gr.im_max > 0.0) || gr.nx < 2 || gr.ny < 1 || gr.boundary_samples < 2 || !(gr.clip > 0.0) {
            return Err(bad("grid", "need re_min < re_max, im_max > 0, nx >= 2, ny >= 1, boundary_samples >= 2, clip > 0"));
        }
        Ok(())
    }
}
