//! Run configuration: a TOML file with the sections `[geometry]`, `[kinetics]`,
//! `[mesh]`, `[time]`, `[solver]`, `[adapt]`, `[initial]`, `[output]` and `[bench]`.
//! Every key is optional; an empty file is a short identity-map smoke test.
//!
//! ```toml
//! [geometry]
//! kind = "dilation"          # identity | dilation | anisotropic | surface
//! growth = { kind = "sine", amplitude = 9.0, period = 1000.0 }
//! horizon = 1000.0           # defaults to time.t_final
//!
//! [kinetics]
//! model = "schnakenberg"     # schnakenberg | none
//! gamma = 0.1
//! k1 = 0.1
//! k2 = 0.9
//! diffusion = [0.01, 1.0]
//!
//! [mesh]
//! n = 16                     # initial grid: n × n squares, two triangles each
//!
//! [time]
//! tau = 0.01
//! t_final = 1000.0
//!
//! [solver]
//! kind = "bicgstab"          # bicgstab | cg | direct
//! rtol = 1e-10
//! max_iter = 5000
//!
//! [adapt]
//! enabled = true
//! tol = 1e-4
//! theta = 0.8
//! theta_coarsen = 0.1
//! max_iterations = 20
//! max_dofs = 4000
//! coarsen = true
//!
//! [initial]
//! seed = 1
//! amplitude = 0.01           # uniform noise in [-a, a] around the steady state
//!
//! [output]
//! directory = "out"
//! snapshot_stride = 100      # 0 disables snapshots
//! formats = ["csv", "vtk"]
//!
//! [bench]
//! levels = [8, 16, 32, 64]
//! tau_factor = 0.25          # tau ≈ tau_factor · h²
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use growfem_core::adapt::AdaptConfig;
use growfem_core::geometry::{DomainMap, Growth, MapKind, RidgeHeight};
use growfem_core::kinetics::{Kinetics, NoReaction, Schnakenberg};
use growfem_core::solver::{SolverConfig, SolverKind};
use growfem_core::stepper::StepConfig;
use serde::Deserialize;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("`{key}`: {msg}")]
    Invalid { key: &'static str, msg: String },
}

fn invalid(key: &'static str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key, msg: msg.into() }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: GeometrySection,
    pub kinetics: KineticsSection,
    pub mesh: MeshSection,
    pub time: TimeSection,
    pub solver: SolverSection,
    pub adapt: AdaptSection,
    pub initial: InitialSection,
    pub output: OutputSection,
    pub bench: BenchSection,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapName {
    #[default]
    Identity,
    Dilation,
    Anisotropic,
    Surface,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GrowthSpec {
    Constant,
    Sine { amplitude: f64, period: f64 },
    Linear { rate: f64 },
    Exponential { rate: f64 },
}

impl From<GrowthSpec> for Growth {
    fn from(g: GrowthSpec) -> Self {
        match g {
            GrowthSpec::Constant => Growth::Constant,
            GrowthSpec::Sine { amplitude, period } => Growth::Sine { amplitude, period },
            GrowthSpec::Linear { rate } => Growth::Linear { rate },
            GrowthSpec::Exponential { rate } => Growth::Exponential { rate },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeightSpec {
    pub amplitude: f64,
    pub period: f64,
    pub power: i32,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometrySection {
    pub kind: MapName,
    /// Dilation growth `ρ(t)`.
    pub growth: Option<GrowthSpec>,
    pub growth_x: Option<GrowthSpec>,
    pub growth_y: Option<GrowthSpec>,
    /// Surface height `amplitude · sin(π t / period) · (ξ₁ − ξ₂)^power`.
    pub height: Option<HeightSpec>,
    pub horizon: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KineticsName {
    #[default]
    Schnakenberg,
    None,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KineticsSection {
    pub model: KineticsName,
    pub gamma: f64,
    pub k1: f64,
    pub k2: f64,
    pub diffusion: Vec<f64>,
}

impl Default for KineticsSection {
    fn default() -> Self {
        Self {
            model: KineticsName::Schnakenberg,
            gamma: 1.0,
            k1: 0.1,
            k2: 0.9,
            diffusion: vec![1.0, 10.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshSection {
    pub n: usize,
}

impl Default for MeshSection {
    fn default() -> Self {
        Self { n: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeSection {
    pub tau: f64,
    pub t_final: f64,
}

impl Default for TimeSection {
    fn default() -> Self {
        Self {
            tau: 0.01,
            t_final: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverName {
    #[default]
    Bicgstab,
    Cg,
    Direct,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub kind: SolverName,
    pub rtol: f64,
    pub max_iter: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverConfig::default();
        Self {
            kind: SolverName::Bicgstab,
            rtol: d.rtol,
            max_iter: d.max_iter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptSection {
    pub enabled: bool,
    pub tol: f64,
    pub theta: f64,
    pub theta_coarsen: f64,
    pub max_iterations: usize,
    pub max_dofs: usize,
    pub coarsen: bool,
}

impl Default for AdaptSection {
    fn default() -> Self {
        Self {
            enabled: false,
            tol: 1e-3,
            theta: 0.8,
            theta_coarsen: 0.1,
            max_iterations: 20,
            max_dofs: 200_000,
            coarsen: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialSection {
    pub seed: u64,
    pub amplitude: f64,
    /// Base state; the kinetics' steady state when absent.
    pub base: Option<Vec<f64>>,
}

impl Default for InitialSection {
    fn default() -> Self {
        Self {
            seed: 0,
            amplitude: 1e-2,
            base: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Vtk,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub directory: PathBuf,
    pub snapshot_stride: usize,
    pub formats: Vec<Format>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("growfem-out"),
            snapshot_stride: 0,
            formats: vec![Format::Csv],
        }
    }
}

impl OutputSection {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub levels: Vec<usize>,
    pub tau_factor: f64,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self {
            levels: vec![8, 16, 32, 64],
            tau_factor: 0.25,
        }
    }
}

/// Parses and validates a configuration from TOML text.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(describe(text, &e)))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

fn describe(text: &str, e: &toml::de::Error) -> String {
    match e.span() {
        Some(span) => {
            let line = text[..span.start.min(text.len())].matches('\n').count() + 1;
            format!("parse error at line {line}: {}", e.message())
        }
        None => format!("parse error: {}", e.message()),
    }
}

fn positive(key: &'static str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(key, format!("must be positive and finite, got {v}")))
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let k = &self.kinetics;
        if k.model == KineticsName::Schnakenberg {
            positive("kinetics.gamma", k.gamma)?;
            positive("kinetics.k1", k.k1)?;
            positive("kinetics.k2", k.k2)?;
            if k.diffusion.len() != 2 {
                return Err(invalid(
                    "kinetics.diffusion",
                    format!("Schnakenberg needs 2 coefficients, got {}", k.diffusion.len()),
                ));
            }
        }
        if k.diffusion.is_empty() {
            return Err(invalid("kinetics.diffusion", "needs at least one coefficient"));
        }
        if let Some(d) = k.diffusion.iter().find(|d| !(d.is_finite() && **d > 0.0)) {
            return Err(invalid("kinetics.diffusion", format!("coefficients must be positive, got {d}")));
        }
        if self.mesh.n == 0 {
            return Err(invalid("mesh.n", "must be at least 1"));
        }
        positive("time.tau", self.time.tau)?;
        positive("time.t_final", self.time.t_final)?;
        if self.time.tau > self.time.t_final {
            return Err(invalid(
                "time.tau",
                format!("must not exceed time.t_final = {}", self.time.t_final),
            ));
        }
        if let Some(h) = self.geometry.horizon {
            positive("geometry.horizon", h)?;
            if self.time.t_final > h * (1.0 + 1e-12) {
                return Err(invalid(
                    "time.t_final",
                    format!("must not exceed geometry.horizon = {h}"),
                ));
            }
        }
        self.check_geometry()?;
        let s = &self.solver;
        if !(s.rtol > 0.0 && s.rtol < 1.0) {
            return Err(invalid("solver.rtol", format!("must lie in (0, 1), got {}", s.rtol)));
        }
        if s.max_iter == 0 {
            return Err(invalid("solver.max_iter", "must be positive"));
        }
        let a = &self.adapt;
        positive("adapt.tol", a.tol)?;
        if !(a.theta > 0.0 && a.theta < 1.0) {
            return Err(invalid("adapt.theta", format!("θ ∈ (0,1) required, got {}", a.theta)));
        }
        if !(a.theta_coarsen > 0.0 && a.theta_coarsen < a.theta) {
            return Err(invalid(
                "adapt.theta_coarsen",
                format!("θ_c ∈ (0,θ) required with θ = {}, got {}", a.theta, a.theta_coarsen),
            ));
        }
        if a.max_dofs < 4 {
            return Err(invalid("adapt.max_dofs", format!("must be at least 4, got {}", a.max_dofs)));
        }
        let i = &self.initial;
        if !(i.amplitude.is_finite() && i.amplitude >= 0.0) {
            return Err(invalid("initial.amplitude", format!("must be non-negative, got {}", i.amplitude)));
        }
        if let Some(base) = &i.base {
            if base.len() != k.diffusion.len() {
                return Err(invalid(
                    "initial.base",
                    format!("needs one value per species ({}), got {}", k.diffusion.len(), base.len()),
                ));
            }
        }
        if self.bench.levels.is_empty() || self.bench.levels.contains(&0) {
            return Err(invalid("bench.levels", "needs positive grid sizes"));
        }
        positive("bench.tau_factor", self.bench.tau_factor)?;
        Ok(())
    }

    fn check_geometry(&self) -> Result<(), ConfigError> {
        let g = &self.geometry;
        let need = |present: bool, key: &'static str| {
            if present {
                Ok(())
            } else {
                Err(invalid(key, format!("required for kind = {:?}", g.kind)))
            }
        };
        let unused = |present: bool, key: &'static str| {
            if present {
                Err(invalid(key, format!("not used by kind = {:?}", g.kind)))
            } else {
                Ok(())
            }
        };
        match g.kind {
            MapName::Identity => {
                unused(g.growth.is_some(), "geometry.growth")?;
                unused(g.growth_x.is_some() || g.growth_y.is_some(), "geometry.growth_x")?;
                unused(g.height.is_some(), "geometry.height")?;
            }
            MapName::Dilation => {
                need(g.growth.is_some(), "geometry.growth")?;
                unused(g.growth_x.is_some() || g.growth_y.is_some(), "geometry.growth_x")?;
                unused(g.height.is_some(), "geometry.height")?;
            }
            MapName::Anisotropic => {
                need(g.growth_x.is_some(), "geometry.growth_x")?;
                need(g.growth_y.is_some(), "geometry.growth_y")?;
                unused(g.growth.is_some(), "geometry.growth")?;
                unused(g.height.is_some(), "geometry.height")?;
            }
            MapName::Surface => {
                need(g.height.is_some(), "geometry.height")?;
                unused(g.growth.is_some() || g.growth_x.is_some() || g.growth_y.is_some(), "geometry.growth")?;
            }
        }
        self.map().map_err(|e| invalid("geometry", e.to_string()))?;
        Ok(())
    }

    pub fn horizon(&self) -> f64 {
        self.geometry.horizon.unwrap_or(self.time.t_final)
    }

    pub fn map(&self) -> growfem_core::error::Result<DomainMap> {
        let g = &self.geometry;
        let kind = match g.kind {
            MapName::Identity => MapKind::Identity,
            MapName::Dilation => MapKind::Dilation(g.growth.unwrap_or(GrowthSpec::Constant).into()),
            MapName::Anisotropic => MapKind::Anisotropic(
                g.growth_x.unwrap_or(GrowthSpec::Constant).into(),
                g.growth_y.unwrap_or(GrowthSpec::Constant).into(),
            ),
            MapName::Surface => {
                let h = g.height.unwrap_or(HeightSpec {
                    amplitude: 0.0,
                    period: 1.0,
                    power: 1,
                });
                MapKind::Surface(RidgeHeight {
                    amplitude: h.amplitude,
                    period: h.period,
                    power: h.power,
                })
            }
        };
        DomainMap::new(kind, self.horizon())
    }

    pub fn schnakenberg(&self) -> Option<Schnakenberg> {
        let k = &self.kinetics;
        match k.model {
            KineticsName::Schnakenberg => Schnakenberg::new(k.gamma, k.k1, k.k2).ok(),
            KineticsName::None => None,
        }
    }

    pub fn kinetics(&self) -> Box<dyn Kinetics> {
        match self.schnakenberg() {
            Some(s) => Box::new(s),
            None => Box::new(NoReaction {
                species: self.kinetics.diffusion.len(),
            }),
        }
    }

    pub fn species(&self) -> usize {
        self.kinetics.diffusion.len()
    }

    pub fn solver(&self) -> SolverConfig {
        SolverConfig {
            kind: match self.solver.kind {
                SolverName::Bicgstab => SolverKind::BiCgStab,
                SolverName::Cg => SolverKind::ConjugateGradient,
                SolverName::Direct => SolverKind::Direct,
            },
            rtol: self.solver.rtol,
            max_iter: self.solver.max_iter,
        }
    }

    pub fn step_config(&self) -> growfem_core::error::Result<StepConfig> {
        let mut cfg = StepConfig::new(self.time.tau, self.time.t_final, self.kinetics.diffusion.clone())?;
        cfg.solver = self.solver();
        Ok(cfg)
    }

    pub fn adapt_config(&self) -> Option<AdaptConfig> {
        let a = &self.adapt;
        a.enabled.then_some(AdaptConfig {
            tol: a.tol,
            theta: a.theta,
            theta_coarsen: a.theta_coarsen,
            max_iterations: a.max_iterations,
            max_dofs: a.max_dofs,
            coarsen: a.coarsen,
        })
    }

    /// Base state of the initial data: `initial.base`, else the steady state.
    pub fn base_state(&self) -> Vec<f64> {
        if let Some(b) = &self.initial.base {
            return b.clone();
        }
        match self.schnakenberg() {
            Some(s) => s.steady_state().to_vec(),
            None => vec![0.0; self.species()],
        }
    }

    /// Shortens the run to `t_final`, keeping the map horizon.
    pub fn with_t_final(mut self, t_final: f64) -> Result<Self, ConfigError> {
        if self.geometry.horizon.is_none() {
            self.geometry.horizon = Some(self.time.t_final.max(t_final));
        }
        self.time.t_final = t_final;
        self.validate()?;
        Ok(self)
    }
}

impl fmt::Display for MapName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MapName::Identity => "identity",
            MapName::Dilation => "dilation",
            MapName::Anisotropic => "anisotropic",
            MapName::Surface => "surface",
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_identity_smoke_test() {
        let cfg = parse_config("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert!(matches!(cfg.map().unwrap().kind(), MapKind::Identity));
        assert!(cfg.adapt_config().is_none());
    }

    #[test]
    fn theta_out_of_range_names_the_key() {
        let err = parse_config("[adapt]\ntheta = 1.5\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("adapt.theta"), "{msg}");
        assert!(msg.contains("θ ∈ (0,1)"), "{msg}");
    }

    #[test]
    fn unknown_keys_are_rejected_with_a_line_number() {
        let err = parse_config("[mesh]\nn = 4\n\n[time]\ntua = 0.1\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 5"), "{msg}");
        assert!(msg.contains("tua"), "{msg}");
        assert!(parse_config("[nope]\n").is_err());
        assert!(parse_config("[geometry]\nkind = \"dilation\"\ngrowth = { kind = \"sine\", amplitude = 1.0, period = 1.0, x = 2 }\n").is_err());
    }

    #[test]
    fn syntax_errors_report_the_line() {
        let msg = parse_config("[mesh]\nn = 4\n[time\n").unwrap_err().to_string();
        assert!(msg.contains("line 3"), "{msg}");
    }

    #[test]
    fn geometry_parameters_must_match_the_kind() {
        assert!(parse_config("[geometry]\nkind = \"dilation\"\n").is_err());
        let msg = parse_config("[geometry]\nheight = { amplitude = 1.0, period = 1.0, power = 2 }\n")
            .unwrap_err()
            .to_string();
        assert!(msg.contains("geometry.height"), "{msg}");
        let cfg = parse_config(
            "[geometry]\nkind = \"dilation\"\ngrowth = { kind = \"linear\", rate = 0.5 }\n",
        )
        .unwrap();
        assert_eq!(cfg.map().unwrap().map_eval([1.0, 1.0], 0.1).unwrap()[0], 1.05);
    }

    #[test]
    fn horizon_bounds_the_final_time() {
        let msg = parse_config("[geometry]\nhorizon = 1.0\n[time]\nt_final = 2.0\n")
            .unwrap_err()
            .to_string();
        assert!(msg.contains("time.t_final"), "{msg}");
        let cfg = parse_config("[time]\nt_final = 2.0\n").unwrap().with_t_final(1.0).unwrap();
        assert_eq!(cfg.map().unwrap().horizon(), 2.0);
    }

    #[test]
    fn species_count_follows_diffusion() {
        let cfg = parse_config("[kinetics]\nmodel = \"none\"\ndiffusion = [1.0, 2.0, 3.0]\n").unwrap();
        assert_eq!(cfg.kinetics().species(), 3);
        assert_eq!(cfg.base_state(), vec![0.0; 3]);
        assert!(parse_config("[kinetics]\ndiffusion = [1.0]\n").is_err());
        assert!(parse_config("[initial]\nbase = [1.0]\n").is_err());
    }
}
