//! Run configuration: TOML on disk, echoed verbatim into the manifest.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use inert_core::coefficients::{CoefficientSet, Conormal, Density, Diffusion, Gamma, InertField, Potential};
use inert_core::geometry::{Domain, RegularizedDistance};
use inert_core::simulate::{BoundaryScheme, Dynamics, InitialCondition, SimConfig};
use inert_core::stationary::{sample_stationary, StationaryMeasure};
use inert_core::{Matrix, Point};
use serde::{Deserialize, Serialize};

use crate::error::{SimError, SimResult};

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_VAR: &str = "INERT_OUT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    pub dimension: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    pub domain: DomainSpec,
    pub coefficients: CoefficientSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potential: Option<PotentialSpec>,
    pub simulation: SimulationSpec,
    #[serde(default)]
    pub tests: TestSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainSpec {
    Interval { lower: f64, upper: f64 },
    Ball { center: Vec<f64>, radius: f64 },
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Ellipsoid { center: Vec<f64>, radii: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// `sigma = I`, `rho = 1`.
    #[default]
    Identity,
    /// `rho = e^{x_1}`.
    ExpDensity,
    /// `A = diag(diffusion_diag)`.
    Anisotropic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InertFieldSpec {
    #[default]
    GammaNormal,
    ScaledConormal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConormalSpec {
    Half,
    #[default]
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientSpec {
    #[serde(default)]
    pub preset: Preset,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diffusion_diag: Option<Vec<f64>>,
    /// Full matrix, row by row.
    pub gamma: Vec<Vec<f64>>,
    #[serde(default)]
    pub inert_field: InertFieldSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a0: Option<f64>,
    #[serde(default)]
    pub conormal: ConormalSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    pub n: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DynamicsSpec {
    #[default]
    Reflected,
    Gradient,
    Driftless,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundarySpec {
    Projection,
    #[default]
    Mirror,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitSpec {
    #[default]
    Centroid,
    Stationary,
    Fixed,
}

fn default_stride() -> usize {
    1
}

fn default_true() -> bool {
    true
}

fn default_halvings() -> u32 {
    40
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    #[serde(default)]
    pub dynamics: DynamicsSpec,
    pub dt: f64,
    pub t_end: f64,
    /// Defaults to a fifth of `t_end`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<f64>,
    pub n_paths: usize,
    pub seed: u64,
    #[serde(default = "default_stride")]
    pub snapshot_stride: usize,
    #[serde(default)]
    pub init: InitSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init_x: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init_k: Option<Vec<f64>>,
    #[serde(default = "default_true")]
    pub adaptive: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_max: Option<f64>,
    #[serde(default = "default_halvings")]
    pub max_halvings: u32,
    #[serde(default)]
    pub boundary: BoundarySpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    Ks,
    KMoments,
    Independence,
    Sectors,
    Residual,
    Histograms,
    GirsanovWeight,
}

fn default_battery() -> Vec<TestKind> {
    vec![TestKind::Ks, TestKind::KMoments, TestKind::Independence, TestKind::Histograms]
}

fn default_bins() -> usize {
    20
}

fn default_sectors() -> usize {
    8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestSpec {
    #[serde(default = "default_battery")]
    pub battery: Vec<TestKind>,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default = "default_sectors")]
    pub sectors: usize,
    /// Defaults to `1e-5` for `d = 1` and `1e-4` otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_tolerance: Option<f64>,
}

impl Default for TestSpec {
    fn default() -> Self {
        Self { battery: default_battery(), bins: default_bins(), sectors: default_sectors(), residual_tolerance: None }
    }
}

impl TestSpec {
    pub fn residual_tolerance(&self, dimension: usize) -> f64 {
        self.residual_tolerance.unwrap_or(if dimension == 1 { 1e-5 } else { 1e-4 })
    }
}

fn field(field: &str, message: impl Into<String>) -> SimError {
    SimError::Config { field: field.to_string(), message: message.into() }
}

fn point<const D: usize>(name: &str, v: &[f64]) -> SimResult<Point<D>> {
    if v.len() != D {
        return Err(field(name, format!("expected {D} entries, found {}", v.len())));
    }
    Ok(Point::<D>::from_column_slice(v))
}

impl RunConfig {
    pub fn from_toml(text: &str) -> SimResult<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a TOML config, or the config echoed in a `manifest.json`.
    pub fn load(path: &Path) -> SimResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::Io { path: path.to_path_buf(), source: e })?;
        if path.extension().is_some_and(|e| e == "json") {
            let manifest: serde_json::Value = serde_json::from_str(&text)?;
            let cfg: Self = serde_json::from_value(manifest.get("config").cloned().ok_or_else(|| field("config", "manifest has no config"))?)?;
            cfg.validate()?;
            return Ok(cfg);
        }
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks everything that does not depend on the dimension parameter.
    pub fn validate(&self) -> SimResult<()> {
        if !(1..=3).contains(&self.dimension) {
            return Err(field("dimension", format!("supported dimensions are 1, 2 and 3, found {}", self.dimension)));
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(field("name", "must be a nonempty file-name-safe string"));
        }
        let g = &self.coefficients.gamma;
        let d = self.dimension;
        if g.len() != d || g.iter().any(|r| r.len() != d) {
            return Err(field("coefficients.gamma", format!("expected a {d}x{d} matrix")));
        }
        for i in 0..d {
            for j in 0..i {
                if (g[i][j] - g[j][i]).abs() > 1e-12 * (g[i][j].abs() + g[j][i].abs()).max(1.0) {
                    return Err(field("coefficients.gamma", format!("matrix is not symmetric: [{i}][{j}] = {} but [{j}][{i}] = {}", g[i][j], g[j][i])));
                }
            }
        }
        if self.coefficients.preset == Preset::Anisotropic && self.coefficients.diffusion_diag.is_none() {
            return Err(field("coefficients.diffusion_diag", "required by the anisotropic preset"));
        }
        if self.coefficients.inert_field == InertFieldSpec::ScaledConormal && self.coefficients.a0.is_none() {
            return Err(field("coefficients.a0", "required by the scaled_conormal inert field"));
        }
        if self.simulation.dynamics == DynamicsSpec::Gradient && self.potential.is_none() {
            return Err(field("potential", "gradient dynamics need a potential block"));
        }
        if self.simulation.init == InitSpec::Fixed && self.simulation.init_x.is_none() {
            return Err(field("simulation.init_x", "required when init = \"fixed\""));
        }
        if self.tests.bins < 2 {
            return Err(field("tests.bins", "need at least 2 bins"));
        }
        match self.dimension {
            1 => self.build::<1>().map(|_| ()),
            2 => self.build::<2>().map(|_| ()),
            _ => self.build::<3>().map(|_| ()),
        }
    }

    pub fn domain<const D: usize>(&self) -> SimResult<Domain<D>> {
        if D != self.dimension {
            return Err(field("dimension", format!("config has dimension {}, requested {D}", self.dimension)));
        }
        let wrap = |e: inert_core::Error| field("domain", e.to_string());
        match &self.domain {
            DomainSpec::Interval { lower, upper } => {
                if D != 1 {
                    return Err(field("domain.kind", "interval needs dimension 1"));
                }
                Domain::interval(*lower, *upper).map_err(wrap)
            }
            DomainSpec::Ball { center, radius } => Domain::ball(point("domain.center", center)?, *radius).map_err(wrap),
            DomainSpec::Box { lower, upper } => {
                Domain::cuboid(point("domain.lower", lower)?, point("domain.upper", upper)?).map_err(wrap)
            }
            DomainSpec::Ellipsoid { center, radii } => {
                Domain::ellipsoid(point("domain.center", center)?, point("domain.radii", radii)?).map_err(wrap)
            }
        }
    }

    pub fn coefficient_set<const D: usize>(&self) -> SimResult<CoefficientSet<D>> {
        let c = &self.coefficients;
        let gamma = Matrix::<D>::from_fn(|i, j| c.gamma[i][j]);
        let gamma = Gamma::new(gamma).map_err(|e| field("coefficients.gamma", e.to_string()))?;
        let mut cs = CoefficientSet::new(self.domain::<D>()?, gamma);
        match c.preset {
            Preset::Identity => {}
            Preset::ExpDensity => {
                cs = cs
                    .with_density(Density::Exponential { axis: 0, rate: 1.0 })
                    .map_err(|e| field("coefficients.preset", e.to_string()))?;
            }
            Preset::Anisotropic => {
                let diag = c.diffusion_diag.as_deref().unwrap_or_default();
                if diag.len() != D {
                    return Err(field("coefficients.diffusion_diag", format!("expected {D} entries, found {}", diag.len())));
                }
                let a = Diffusion::diagonal(diag).map_err(|e| field("coefficients.diffusion_diag", e.to_string()))?;
                cs = cs.with_diffusion(a).map_err(|e| field("coefficients.diffusion_diag", e.to_string()))?;
            }
        }
        if c.inert_field == InertFieldSpec::ScaledConormal {
            cs = cs.with_inert_field(InertField::ScaledConormal { a0: c.a0.unwrap_or(1.0) });
        }
        Ok(cs.with_conormal(match c.conormal {
            ConormalSpec::Half => Conormal::Half,
            ConormalSpec::Full => Conormal::Full,
        }))
    }

    pub fn potential<const D: usize>(&self, cs: &CoefficientSet<D>) -> SimResult<Option<Potential<D>>> {
        let Some(p) = &self.potential else { return Ok(None) };
        Potential::regularized(p.n, RegularizedDistance::new(cs.domain()))
            .map(Some)
            .map_err(|e| field("potential.n", e.to_string()))
    }

    pub fn build<const D: usize>(&self) -> SimResult<Setup<D>> {
        let cs = self.coefficient_set::<D>()?;
        let potential = self.potential(&cs)?;
        let s = &self.simulation;
        let dynamics = match s.dynamics {
            DynamicsSpec::Reflected => Dynamics::Reflected,
            DynamicsSpec::Driftless => Dynamics::DriftlessReflected,
            DynamicsSpec::Gradient => Dynamics::Gradient(potential.clone().ok_or_else(|| field("potential", "missing"))?),
        };
        let mut sim = SimConfig::<D>::new(s.dt, s.t_end, s.n_paths, s.seed);
        if let Some(b) = s.burn_in {
            sim.burn_in = b;
        }
        sim.snapshot_stride = s.snapshot_stride;
        sim.adaptive = s.adaptive;
        sim.h_max = s.h_max;
        sim.max_halvings = s.max_halvings;
        sim.boundary = match s.boundary {
            BoundarySpec::Projection => BoundaryScheme::Projection,
            BoundarySpec::Mirror => BoundaryScheme::Mirror,
        };
        if s.init == InitSpec::Fixed {
            let x = point::<D>("simulation.init_x", s.init_x.as_deref().unwrap_or_default())?;
            let k = match &s.init_k {
                Some(k) => point::<D>("simulation.init_k", k)?,
                None => Point::<D>::zeros(),
            };
            sim.init = InitialCondition::Fixed { x, k };
        }
        sim.validate().map_err(|e| field("simulation", e.to_string()))?;
        Ok(Setup { cs, potential, dynamics, sim, init: s.init })
    }

    /// Output directory: `--out` if given, else `output_dir` (relative paths
    /// resolved against the output root), else `<root>/<name>`. The root is
    /// `$INERT_OUT` or `inert-out`.
    pub fn output_dir(&self, explicit: Option<&Path>) -> PathBuf {
        if let Some(p) = explicit {
            return p.to_path_buf();
        }
        let root = std::env::var_os(OUTPUT_ROOT_VAR).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("inert-out"));
        match &self.output_dir {
            Some(d) if Path::new(d).is_absolute() => PathBuf::from(d),
            Some(d) => root.join(d),
            None => root.join(&self.name),
        }
    }
}

/// Objects built from a validated config for a fixed dimension.
#[derive(Clone)]
pub struct Setup<const D: usize> {
    pub cs: CoefficientSet<D>,
    pub potential: Option<Potential<D>>,
    pub dynamics: Dynamics<D>,
    pub sim: SimConfig<D>,
    pub init: InitSpec,
}

impl<const D: usize> Setup<D> {
    /// Stationary measure the run targets: the gradient measure when a
    /// potential drives the dynamics, else the reflected one.
    pub fn measure(&self) -> SimResult<StationaryMeasure<D>> {
        Ok(match &self.dynamics {
            Dynamics::Gradient(p) => StationaryMeasure::gradient(&self.cs, p)?,
            _ => StationaryMeasure::reflected(&self.cs)?,
        })
    }

    /// Simulation settings with stationary initial states drawn if requested.
    pub fn resolved_sim(&self, sm: &StationaryMeasure<D>) -> SimResult<SimConfig<D>> {
        let mut sim = self.sim.clone();
        if self.init == InitSpec::Stationary {
            let draws = sample_stationary(sm, sim.n_paths, sim.seed ^ 0x1a17)?;
            sim.init = InitialCondition::PerPath(Arc::new(draws));
        }
        Ok(sim)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
name = "t"
dimension = 2

[domain]
kind = "ball"
center = [0.0, 0.0]
radius = 1.0

[coefficients]
preset = "identity"
gamma = [[2.0, 0.3], [0.3, 1.0]]

[simulation]
dynamics = "reflected"
dt = 1e-3
t_end = 1.0
n_paths = 2
seed = 1
"#;

    fn err_field(text: &str) -> String {
        match RunConfig::from_toml(text) {
            Err(SimError::Config { field, .. }) => field,
            other => panic!("expected a config error, got {:?}", other.map(|c| c.name)),
        }
    }

    #[test]
    fn defaults_and_round_trip() {
        let cfg = RunConfig::from_toml(BASE).unwrap();
        assert_eq!(cfg.coefficients.conormal, ConormalSpec::Full);
        assert_eq!(cfg.simulation.boundary, BoundarySpec::Mirror);
        assert_eq!(cfg.simulation.snapshot_stride, 1);
        assert_eq!(cfg.tests.bins, 20);
        assert_eq!(cfg.tests.residual_tolerance(1), 1e-5);
        assert_eq!(cfg.tests.residual_tolerance(2), 1e-4);
        let again = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(again.to_toml(), cfg.to_toml());
        let setup = cfg.build::<2>().unwrap();
        assert_eq!(setup.sim.boundary, BoundaryScheme::Mirror);
        assert!(cfg.build::<1>().is_err());
    }

    #[test]
    fn validation_names_fields() {
        assert_eq!(err_field(&BASE.replace("[0.3, 1.0]]", "[0.1, 1.0]]")), "coefficients.gamma");
        assert_eq!(err_field(&BASE.replace("[[2.0, 0.3], [0.3, 1.0]]", "[[1.0]]")), "coefficients.gamma");
        assert_eq!(err_field(&BASE.replace("dimension = 2", "dimension = 4")), "dimension");
        assert_eq!(err_field(&BASE.replace("center = [0.0, 0.0]", "center = [0.0]")), "domain.center");
        assert_eq!(err_field(&BASE.replace("\"reflected\"", "\"gradient\"")), "potential");
        assert_eq!(err_field(&BASE.replace("seed = 1", "seed = 1\ninit = \"fixed\"")), "simulation.init_x");
        assert_eq!(err_field(&BASE.replace("preset = \"identity\"", "preset = \"anisotropic\"")), "coefficients.diffusion_diag");
        assert_eq!(err_field(&format!("{BASE}\n[tests]\nbins = 1\n")), "tests.bins");
        assert_eq!(err_field(&BASE.replace("t_end = 1.0", "t_end = 1.0\nburn_in = 2.0")), "simulation");
        assert!(matches!(RunConfig::from_toml(&BASE.replace("seed = 1", "seed = 1\nextra = 3")), Err(SimError::Parse(_))));
    }

    #[test]
    fn output_directory_precedence() {
        let mut cfg = RunConfig::from_toml(BASE).unwrap();
        assert_eq!(cfg.output_dir(Some(Path::new("x"))), PathBuf::from("x"));
        cfg.output_dir = Some("/abs/dir".into());
        assert_eq!(cfg.output_dir(None), PathBuf::from("/abs/dir"));
    }

    #[test]
    fn fixed_initial_state() {
        let cfg = RunConfig::from_toml(&BASE.replace("seed = 1", "seed = 1\ninit = \"fixed\"\ninit_x = [0.1, 0.2]")).unwrap();
        let s = cfg.build::<2>().unwrap();
        match s.sim.init {
            InitialCondition::Fixed { x, k } => {
                assert_eq!(x, Point::<2>::new(0.1, 0.2));
                assert_eq!(k, Point::<2>::zeros());
            }
            _ => panic!("expected a fixed start"),
        }
    }
}
