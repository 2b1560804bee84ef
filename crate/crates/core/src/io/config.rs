//! TOML run configuration: strict parsing, documented defaults, and
//! resolution into model coefficients, grids and initial fields.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{sample, Field, Grid, TimeWindow};
use crate::io::snapshot::read_snapshot;
use crate::model::{
    validate, BoundCertificates, Capacities, DegradationRates, DiffusionCoefficient, Diffusivities, InitialFields, InteractionRates, ModelParams,
    ProliferationRates, Regime, SeparableProfile, Species,
};
use crate::monitors::MonitorConfig;
use crate::operators::TaxisScheme;
use crate::stepper::{SchemeConfig, StateFields};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dim: usize,
    pub extents: Vec<f64>,
    pub cells: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<Vec<f64>>,
}

impl GridSpec {
    pub fn build(&self) -> Result<Grid> {
        let check = |name: &str, n: usize| {
            if n != self.dim {
                Err(Error::Config(format!("grid.{name} has {n} entries but grid.dim = {}", self.dim)))
            } else {
                Ok(())
            }
        };
        check("extents", self.extents.len())?;
        check("cells", self.cells.len())?;
        match &self.origin {
            Some(o) => {
                check("origin", o.len())?;
                Grid::with_origin(self.dim, &self.extents, &self.cells, o)
            }
            None => Grid::new(self.dim, &self.extents, &self.cells),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    pub t_end: f64,
    pub dt: f64,
}

/// A diffusivity: either `value` (constant) or `separable`, with optional
/// declared bounds. Missing bounds are the exact extremes of the profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffusionSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub separable: Option<SeparableProfile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hi: Option<f64>,
}

impl DiffusionSpec {
    pub fn constant(value: f64) -> Self {
        DiffusionSpec { value: Some(value), separable: None, lo: None, hi: None }
    }

    fn build(&self, species: Species) -> Result<DiffusionCoefficient> {
        match (self.value, self.separable) {
            (Some(v), None) => {
                Ok(DiffusionCoefficient { profile: crate::model::DiffusionProfile::Constant(v), lo: self.lo.unwrap_or(v), hi: self.hi.unwrap_or(v) })
            }
            (None, Some(p)) => {
                let s = p.space_amplitude.abs();
                let t = if p.frequency == 0.0 { 0.0 } else { p.time_amplitude.abs() };
                let lo = self.lo.unwrap_or(p.base * (1.0 - s) * (1.0 - t));
                let hi = self.hi.unwrap_or(p.base * (1.0 + s) * (1.0 + t));
                Ok(DiffusionCoefficient::separable(p, lo, hi))
            }
            _ => Err(Error::Config(format!("diffusion.{species} needs exactly one of `value` or `separable`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffusionSpecs {
    #[serde(rename = "C")]
    pub c: DiffusionSpec,
    #[serde(rename = "N")]
    pub n: DiffusionSpec,
    #[serde(rename = "A")]
    pub a: DiffusionSpec,
    #[serde(rename = "I")]
    pub i: DiffusionSpec,
    #[serde(rename = "P")]
    pub p: DiffusionSpec,
}

fn one() -> f64 {
    1.0
}

/// Every scalar coefficient by name; absent rates default to 0 and capacities to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub diffusion: DiffusionSpecs,
    #[serde(default)]
    pub chi_11: f64,
    #[serde(default)]
    pub chi_12: f64,
    #[serde(default)]
    pub chi_13: f64,
    #[serde(default)]
    pub chi_14: f64,
    #[serde(default)]
    pub chi_21: f64,
    #[serde(default)]
    pub chi_22: f64,
    #[serde(default)]
    pub chi_23: f64,
    #[serde(default)]
    pub chi_24: f64,
    #[serde(default)]
    pub alpha_11: f64,
    #[serde(default)]
    pub alpha_21: f64,
    #[serde(default)]
    pub alpha_31: f64,
    #[serde(default)]
    pub alpha_32: f64,
    #[serde(default)]
    pub alpha_33: f64,
    #[serde(default)]
    pub alpha_41: f64,
    #[serde(default)]
    pub alpha_42: f64,
    #[serde(default)]
    pub alpha_51: f64,
    #[serde(default)]
    pub alpha_52: f64,
    #[serde(default)]
    pub alpha_61: f64,
    #[serde(default)]
    pub alpha_62: f64,
    #[serde(default, rename = "mu_C")]
    pub mu_c: f64,
    #[serde(default, rename = "mu_N")]
    pub mu_n: f64,
    #[serde(default, rename = "mu_V")]
    pub mu_v: f64,
    #[serde(default, rename = "mu_A")]
    pub mu_a: f64,
    #[serde(default, rename = "mu_I")]
    pub mu_i: f64,
    #[serde(default = "one", rename = "K_C")]
    pub k_c: f64,
    #[serde(default = "one", rename = "K_N")]
    pub k_n: f64,
    #[serde(default = "one", rename = "K_V")]
    pub k_v: f64,
    #[serde(default, rename = "delta_C")]
    pub delta_c: f64,
    #[serde(default, rename = "delta_N")]
    pub delta_n: f64,
    #[serde(default, rename = "delta_P")]
    pub delta_p: f64,
    #[serde(default)]
    pub epsilon_reg: f64,
}

impl ModelSpec {
    pub fn build(&self) -> Result<ModelParams> {
        let d = &self.diffusion;
        Ok(ModelParams {
            diffusion: Diffusivities {
                c: d.c.build(Species::C)?,
                n: d.n.build(Species::N)?,
                a: d.a.build(Species::A)?,
                i: d.i.build(Species::I)?,
                p: d.p.build(Species::P)?,
            },
            chi_c: [self.chi_11, self.chi_12, self.chi_13, self.chi_14],
            chi_n: [self.chi_21, self.chi_22, self.chi_23, self.chi_24],
            alpha: InteractionRates {
                a11: self.alpha_11,
                a21: self.alpha_21,
                a31: self.alpha_31,
                a32: self.alpha_32,
                a33: self.alpha_33,
                a41: self.alpha_41,
                a42: self.alpha_42,
                a51: self.alpha_51,
                a52: self.alpha_52,
                a61: self.alpha_61,
                a62: self.alpha_62,
            },
            mu: ProliferationRates { c: self.mu_c, n: self.mu_n, v: self.mu_v, a: self.mu_a, i: self.mu_i },
            capacity: Capacities { c: self.k_c, n: self.k_n, v: self.k_v },
            delta: DegradationRates { c: self.delta_c, n: self.delta_n, p: self.delta_p },
            epsilon_reg: self.epsilon_reg,
        })
    }
}

/// Builtin initial profiles. Coordinates are absolute; `center` has one entry per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Profile {
    Constant {
        value: f64,
    },
    /// `base + amplitude * prod_a cos(modes_a pi (x_a - o_a) / L_a)`
    Cosine {
        base: f64,
        amplitude: f64,
        modes: Vec<u32>,
    },
    /// `base + amplitude * exp(-|x - center|^2 / (2 width^2))`
    Gaussian {
        base: f64,
        amplitude: f64,
        center: Vec<f64>,
        width: f64,
    },
    /// `base + amplitude * exp(1 - 1/(1 - |x - center|^2 / radius^2))` inside the
    /// ball, `base` outside; smooth with compact support.
    Bump {
        base: f64,
        amplitude: f64,
        center: Vec<f64>,
        radius: f64,
    },
    /// Snapshot file, relative paths resolved against the config's directory.
    File {
        path: PathBuf,
    },
}

impl Profile {
    fn point_eval(&self, grid: &Grid, x: &[f64]) -> f64 {
        let dist2 = |c: &[f64]| x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        match self {
            Profile::Constant { value } => *value,
            Profile::Cosine { base, amplitude, modes } => {
                let prod: f64 = (0..grid.dim()).map(|a| (modes[a] as f64 * PI * (x[a] - grid.origin()[a]) / grid.extents()[a]).cos()).product();
                base + amplitude * prod
            }
            Profile::Gaussian { base, amplitude, center, width } => base + amplitude * (-dist2(center) / (2.0 * width * width)).exp(),
            Profile::Bump { base, amplitude, center, radius } => {
                let s = dist2(center) / (radius * radius);
                if s < 1.0 {
                    base + amplitude * (1.0 - 1.0 / (1.0 - s)).exp()
                } else {
                    *base
                }
            }
            Profile::File { .. } => unreachable!("file profiles are not sampled"),
        }
    }

    pub fn build(&self, species: Species, grid: &Grid, base_dir: &Path) -> Result<Field> {
        let axis_vec = |name: &str, v: &[f64]| {
            if v.len() != grid.dim() {
                Err(Error::Config(format!("initial.{species}.{name} has {} entries, grid has {} axes", v.len(), grid.dim())))
            } else {
                Ok(())
            }
        };
        match self {
            Profile::File { path } => {
                let full = if path.is_absolute() { path.clone() } else { base_dir.join(path) };
                let snap = read_snapshot(&full)?;
                if snap.field.grid().cells() != grid.cells() {
                    return Err(Error::Config(format!(
                        "initial.{species} file {} has cells {:?}, grid has {:?}",
                        full.display(),
                        snap.field.grid().cells(),
                        grid.cells()
                    )));
                }
                Field::new(*grid, snap.field.into_values())
            }
            Profile::Cosine { modes, .. } if modes.len() != grid.dim() => {
                Err(Error::Config(format!("initial.{species}.modes has {} entries, grid has {} axes", modes.len(), grid.dim())))
            }
            Profile::Gaussian { center, width, .. } => {
                axis_vec("center", center)?;
                if !(*width > 0.0) {
                    return Err(Error::Config(format!("initial.{species}.width must be positive")));
                }
                sample(grid, |x| self.point_eval(grid, x))
            }
            Profile::Bump { center, radius, .. } => {
                axis_vec("center", center)?;
                if !(*radius > 0.0) {
                    return Err(Error::Config(format!("initial.{species}.radius must be positive")));
                }
                sample(grid, |x| self.point_eval(grid, x))
            }
            _ => sample(grid, |x| self.point_eval(grid, x)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    #[serde(rename = "C")]
    pub c: Profile,
    #[serde(rename = "N")]
    pub n: Profile,
    #[serde(rename = "V")]
    pub v: Profile,
    #[serde(rename = "A")]
    pub a: Profile,
    #[serde(rename = "I")]
    pub i: Profile,
    #[serde(rename = "P")]
    pub p: Profile,
}

impl InitialSpec {
    pub fn get(&self, s: Species) -> &Profile {
        match s {
            Species::C => &self.c,
            Species::N => &self.n,
            Species::V => &self.v,
            Species::A => &self.a,
            Species::I => &self.i,
            Species::P => &self.p,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemeSpec {
    pub taxis: TaxisScheme,
    pub picard_max: usize,
    pub picard_tol: f64,
    pub regime: Regime,
    pub clip_negative: bool,
}

impl Default for SchemeSpec {
    fn default() -> Self {
        let s = SchemeConfig::default();
        SchemeSpec { taxis: s.taxis, picard_max: s.picard_max, picard_tol: s.picard_tol, regime: s.regime, clip_negative: s.clip_negative }
    }
}

impl SchemeSpec {
    pub fn build(&self) -> Result<SchemeConfig> {
        if self.picard_max == 0 {
            return Err(Error::Config("scheme.picard_max must be at least 1".into()));
        }
        if !(self.picard_tol > 0.0) {
            return Err(Error::Config("scheme.picard_tol must be positive".into()));
        }
        Ok(SchemeConfig {
            taxis: self.taxis,
            picard_max: self.picard_max,
            picard_tol: self.picard_tol,
            regime: self.regime,
            clip_negative: self.clip_negative,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    /// Run directory; the CLI's `--out` takes precedence.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub directory: Option<PathBuf>,
    /// Store a snapshot of every species every this many steps (0: initial and final only).
    pub snapshot_every: usize,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec { directory: None, snapshot_every: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub grid: GridSpec,
    pub time: TimeSpec,
    pub model: ModelSpec,
    pub initial: InitialSpec,
    #[serde(default)]
    pub scheme: SchemeSpec,
    #[serde(default)]
    pub monitors: MonitorConfig,
    #[serde(default)]
    pub output: OutputSpec,
    /// Only used by randomized tests; the solver is deterministic.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize config: {e}")))
    }

    /// Structural checks that do not need the initial data.
    fn check(&self) -> Result<()> {
        self.grid.build()?;
        TimeWindow::new(self.time.t_end, self.time.dt)?;
        self.model.build()?;
        self.scheme.build()?;
        self.monitors.validate().map_err(Error::Config)?;
        Ok(())
    }
}

/// Parses and structurally checks a config file.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    RunConfig::from_toml_str(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// A config resolved into everything a simulation needs, with its certificates.
#[derive(Debug, Clone)]
pub struct PreparedRun {
    pub config: RunConfig,
    pub grid: Grid,
    pub window: TimeWindow,
    pub params: ModelParams,
    pub scheme: SchemeConfig,
    pub initial: StateFields,
    pub certificates: BoundCertificates,
}

/// Builds the initial fields and runs hypothesis validation.
pub fn prepare(config: &RunConfig, base_dir: &Path) -> Result<PreparedRun> {
    let grid = config.grid.build()?;
    let window = TimeWindow::new(config.time.t_end, config.time.dt)?;
    let params = config.model.build()?;
    let scheme = config.scheme.build()?;
    let fields: Vec<Field> = Species::ALL.iter().map(|&s| config.initial.get(s).build(s, &grid, base_dir)).collect::<Result<_>>()?;
    let init: InitialFields = fields.try_into().expect("six species");
    let certificates = validate(&params, &init, scheme.regime)?;
    let initial = StateFields::new(init, 0.0)?;
    Ok(PreparedRun { config: config.clone(), grid, window, params, scheme, initial, certificates })
}

/// [`load_config`] followed by [`prepare`] with paths relative to the file.
pub fn load_and_prepare(path: &Path) -> Result<PreparedRun> {
    let config = load_config(path)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    prepare(&config, &base)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[grid]
dim = 1
extents = [1.0]
cells = [16]

[time]
t_end = 0.1
dt = 0.01

[model]
alpha_21 = 1.0
mu_C = 1.0

[model.diffusion]
C = { value = 1.0 }
N = { value = 1.0 }
A = { value = 0.5 }
I = { value = 0.5 }
P = { value = 0.5 }

[initial]
C = { kind = "constant", value = 0.1 }
N = { kind = "constant", value = 0.5 }
V = { kind = "constant", value = 0.2 }
A = { kind = "constant", value = 0.0 }
I = { kind = "constant", value = 0.0 }
P = { kind = "bump", base = 0.0, amplitude = 1.0, center = [0.5], radius = 0.2 }
"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = RunConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(c.scheme, SchemeSpec::default());
        assert_eq!(c.scheme.picard_max, 5);
        assert_eq!(c.monitors, MonitorConfig::default());
        assert_eq!(c.output.snapshot_every, 1);
        assert_eq!(c.model.k_v, 1.0);
        assert_eq!(c.model.chi_11, 0.0);
        let p = prepare(&c, Path::new(".")).unwrap();
        assert_eq!(p.certificates.m_a, None);
    }

    #[test]
    fn unknown_key_is_named() {
        let text = MINIMAL.replace("alpha_21 = 1.0", "alpha_21 = 1.0\nchii_11 = 0.1");
        let err = RunConfig::from_toml_str(&text).unwrap_err().to_string();
        assert!(err.contains("chii_11"), "{err}");
        assert!(err.contains("line"), "{err}");
    }

    #[test]
    fn unknown_profile_key_is_rejected() {
        let text = MINIMAL.replace("radius = 0.2", "radius = 0.2, sigma = 1.0");
        assert!(RunConfig::from_toml_str(&text).unwrap_err().to_string().contains("sigma"));
    }

    #[test]
    fn h4_failure_reports_margin() {
        let text = MINIMAL.replace("alpha_21 = 1.0", "alpha_21 = 1.0\nalpha_11 = 3.0");
        let c = RunConfig::from_toml_str(&text).unwrap();
        let err = prepare(&c, Path::new(".")).unwrap_err();
        match err {
            Error::Hypothesis(crate::error::HypothesisError::ReactionBalance { margin }) => assert_eq!(margin, 4.0 - 9.0),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn round_trip() {
        let c = RunConfig::from_toml_str(MINIMAL).unwrap();
        let again = RunConfig::from_toml_str(&c.to_toml_string().unwrap()).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn separable_bounds_default_to_extremes() {
        let spec = DiffusionSpec {
            value: None,
            separable: Some(SeparableProfile { base: 2.0, space_amplitude: 0.5, wavenumbers: [1.0, 0.0, 0.0], time_amplitude: 0.1, frequency: 1.0 }),
            lo: None,
            hi: None,
        };
        let d = spec.build(Species::A).unwrap();
        assert!((d.lo - 0.9).abs() < 1e-15 && (d.hi - 3.3).abs() < 1e-15);
    }
}
