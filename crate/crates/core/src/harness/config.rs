//! Experiment configuration: TOML with `[system]`, `[observable]`,
//! `[experiment]` and `[tolerances]`. Unknown keys are rejected everywhere.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics::{Calibration, Centering, MapSystem, ObservableSpec};
use crate::error::{Error, Result};
use crate::gibbs_markov::{GmParams, ZETA3};
use crate::inducing::NormMode;
use crate::stadium::{FlowObservableSpec, SectionObservableSpec, StadiumGeometry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Calibrate,
    Clt,
    Wip,
    Tails,
    GmMartingale,
    StadiumGeom,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Calibrate => "calibrate",
            ExperimentKind::Clt => "clt",
            ExperimentKind::Wip => "wip",
            ExperimentKind::Tails => "tails",
            ExperimentKind::GmMartingale => "gm-martingale",
            ExperimentKind::StadiumGeom => "stadium-geom",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SystemConfig {
    Lsv {
        alpha: f64,
    },
    DoubleNeutral {},
    Afn {
        b: f64,
    },
    Stadium {
        length: f64,
    },
    GibbsMarkov {
        #[serde(default = "default_k_max")]
        k_max: u32,
        #[serde(default = "default_eps")]
        eps: f64,
        /// Target tail constant; `"exact"` would be `1/(2 zeta(3))`, which
        /// is also what the unscaled model gives as `k_max -> infinity`.
        #[serde(default)]
        sigma2: Option<f64>,
    },
}

fn default_k_max() -> u32 {
    1_000_000
}

fn default_eps() -> f64 {
    0.5
}

/// The limit variance `1/(2 zeta(3))` of the unscaled synthetic model.
pub fn gm_reference_sigma2() -> f64 {
    0.5 / ZETA3
}

impl SystemConfig {
    pub fn map_system(&self) -> Option<MapSystem> {
        match *self {
            SystemConfig::Lsv { alpha } => Some(MapSystem::Lsv { alpha }),
            SystemConfig::DoubleNeutral {} => Some(MapSystem::DoubleNeutral),
            SystemConfig::Afn { b } => Some(MapSystem::Afn { b }),
            _ => None,
        }
    }

    pub fn gm_params(&self) -> Option<GmParams> {
        match *self {
            SystemConfig::GibbsMarkov { k_max, eps, sigma2 } => Some(GmParams { k_max, eps, sigma2 }),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SystemConfig::Lsv { .. } => "lsv",
            SystemConfig::DoubleNeutral {} => "double-neutral",
            SystemConfig::Afn { .. } => "afn",
            SystemConfig::Stadium { .. } => "stadium",
            SystemConfig::GibbsMarkov { .. } => "gibbs-markov",
        }
    }

    fn validate(&self) -> Result<()> {
        if let Some(m) = self.map_system() {
            return m.validate().map_err(cfg);
        }
        match *self {
            SystemConfig::Stadium { length } => StadiumGeometry::new(length).map(|_| ()).map_err(cfg),
            SystemConfig::GibbsMarkov { k_max, eps, sigma2 } => {
                if k_max < 100 {
                    return Err(Error::Config(format!("gibbs-markov k_max must be >= 100, got {k_max}")));
                }
                if !(0.0..=0.9).contains(&eps) {
                    return Err(Error::Config(format!("gibbs-markov eps must lie in [0, 0.9], got {eps}")));
                }
                if let Some(s) = sigma2 {
                    if !(s > 0.0 && s.is_finite()) {
                        return Err(Error::Config(format!("gibbs-markov sigma2 must be > 0, got {s}")));
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

fn cfg(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CenteringMode {
    #[default]
    None,
    Exact,
    Calibrated,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservableConfig {
    #[serde(default)]
    pub constant: f64,
    /// Coefficients of `cos(k pi x)`, `k = 1, 2, ...`.
    #[serde(default)]
    pub cos: Vec<f64>,
    /// Coefficients of `sin(k pi x)`.
    #[serde(default)]
    pub sin: Vec<f64>,
    #[serde(default)]
    pub centering: CenteringMode,
    /// Exact invariant mean (`centering = "exact"`).
    #[serde(default)]
    pub mean: Option<f64>,
    /// Calibration record written by `calibrate` (`centering = "calibrated"`).
    #[serde(default)]
    pub calibration: Option<PathBuf>,
    /// Stadium section observable (defaults to `segment-balanced`).
    #[serde(default)]
    pub section: Option<SectionObservableSpec>,
    /// Stadium flow observable; enables the flow-path comparison.
    #[serde(default)]
    pub flow: Option<FlowObservableSpec>,
}

impl ObservableConfig {
    fn has_map_terms(&self) -> bool {
        self.constant != 0.0
            || !self.cos.is_empty()
            || !self.sin.is_empty()
            || self.centering != CenteringMode::None
            || self.mean.is_some()
            || self.calibration.is_some()
    }

    /// The uncentred trigonometric observable.
    pub fn raw_spec(&self) -> ObservableSpec {
        ObservableSpec {
            constant: self.constant,
            cos: self.cos.clone(),
            sin: self.sin.clone(),
            centering: Centering::None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Standard,
    Nonstandard,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub kind: Option<ExperimentKind>,
    pub n_grid: Option<Vec<u64>>,
    pub ensemble: Option<u64>,
    pub seed: Option<u64>,
    pub mode: Option<NormMode>,
    pub output: Option<PathBuf>,
    /// Steps (collisions for the stadium) discarded before recording.
    pub burn_in: Option<u64>,
    /// Expected growth regime; derived from the observable when absent.
    pub expect: Option<Regime>,
    /// Returns per orbit for tail estimation.
    pub returns: Option<u64>,
    /// Independent orbits for the negligible-maximum medians.
    pub tail_paths: Option<u64>,
    pub hill_points: Option<usize>,
    pub decomposition_delta: Option<f64>,
    pub decomposition_quantile: Option<f64>,
    /// Paths for the concentration ensemble of `gm-martingale`.
    pub lemma_paths: Option<u64>,
    pub lemma_grid: Option<Vec<u64>>,
    pub calibration_iterations: Option<u64>,
    pub calibration_burn_in: Option<u64>,
    pub calibration_chains: Option<u64>,
    /// Largest experiment length the calibration must serve.
    pub calibration_n_max: Option<u64>,
    /// Liouville samples for `stadium-geom`.
    pub samples: Option<u64>,
    /// Collisions each Liouville sample is pushed through.
    pub collisions: Option<u64>,
    pub checkpoint_secs: Option<f64>,
}

/// Acceptance thresholds; every field can be overridden from the command line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub var_rel: f64,
    pub ks: f64,
    pub slope_nonstandard_min: f64,
    pub slope_nonstandard_max: f64,
    pub slope_standard_min: f64,
    pub slope_standard_max: f64,
    pub prediction_rel: f64,
    pub flow_rel: f64,
    pub cov_rel: f64,
    pub increment_corr: f64,
    pub sup_ks: f64,
    pub hill_min: f64,
    pub hill_max: f64,
    pub slide_index_min: f64,
    pub lap_rel: f64,
    pub chi_ratio: f64,
    pub m2_rel: f64,
    pub kernel_residual: f64,
    pub cohomology: f64,
    pub lemma_var: f64,
    pub discard_ratio: f64,
    pub closure: f64,
    pub specular: f64,
    pub liouville_ks: f64,
    pub psi_ks: f64,
    pub centering_budget: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            var_rel: 0.15,
            ks: 0.03,
            slope_nonstandard_min: 1.02,
            slope_nonstandard_max: 1.25,
            slope_standard_min: 0.9,
            slope_standard_max: 1.1,
            prediction_rel: 0.30,
            flow_rel: 0.20,
            cov_rel: 0.15,
            increment_corr: 0.07,
            sup_ks: 0.07,
            hill_min: 1.8,
            hill_max: 2.2,
            slide_index_min: 2.5,
            lap_rel: 0.02,
            chi_ratio: 3.0,
            m2_rel: 0.20,
            kernel_residual: 1e-12,
            cohomology: 1e-12,
            lemma_var: 0.2,
            discard_ratio: 1.5,
            closure: 1e-9,
            specular: 1e-12,
            liouville_ks: 0.005,
            psi_ks: 0.002,
            centering_budget: 0.1,
        }
    }
}

impl Tolerances {
    /// Apply a `name=value` override.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (name, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("tolerance override `{assignment}` is not name=value")))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("tolerance `{name}` has non-numeric value `{value}`")))?;
        let mut map = match serde_json::to_value(*self)? {
            serde_json::Value::Object(m) => m,
            _ => unreachable!("tolerances serialise to an object"),
        };
        let name = name.trim();
        if !map.contains_key(name) {
            return Err(Error::Config(format!("unknown tolerance `{name}`")));
        }
        map.insert(name.to_string(), serde_json::json!(value));
        *self = serde_json::from_value(serde_json::Value::Object(map))?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    #[serde(default)]
    pub observable: ObservableConfig,
    #[serde(default)]
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub tolerances: Tolerances,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Load a config file; relative calibration paths resolve against the
    /// file's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        if let (Some(c), Some(dir)) = (cfg.observable.calibration.as_mut(), path.parent()) {
            if c.is_relative() {
                *c = dir.join(&*c);
            }
        }
        Ok(cfg)
    }
}

/// A configuration with every default filled in and every cross-field
/// constraint checked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resolved {
    pub kind: ExperimentKind,
    pub system: SystemConfig,
    pub observable: ResolvedObservable,
    pub n_grid: Vec<u64>,
    pub ensemble: u64,
    pub seed: u64,
    pub mode: NormMode,
    pub burn_in: u64,
    pub expect: Option<Regime>,
    pub returns: u64,
    pub tail_paths: u64,
    pub hill_points: usize,
    pub decomposition_delta: f64,
    pub decomposition_quantile: f64,
    pub lemma_paths: u64,
    pub lemma_grid: Vec<u64>,
    pub calibration_iterations: u64,
    pub calibration_burn_in: u64,
    pub calibration_chains: u64,
    pub calibration_n_max: u64,
    pub samples: u64,
    pub collisions: u64,
    #[serde(skip)]
    pub checkpoint_secs: f64,
    #[serde(skip)]
    pub tolerances: Tolerances,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ResolvedObservable {
    Map { spec: ObservableSpec },
    Stadium { section: SectionObservableSpec, flow: Option<FlowObservableSpec> },
    GibbsMarkov,
}

/// On-disk calibration record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationFile {
    pub schema_version: u32,
    pub system: SystemConfig,
    pub observable: ObservableSpec,
    pub calibration: Calibration,
}

pub fn load_calibration(path: &Path) -> Result<CalibrationFile> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::MissingCalibration(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("calibration {}: {e}", path.display())))
}

fn check_grid(name: &str, grid: &[u64], min: u64) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Config(format!("{name} must not be empty")));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(format!("{name} must be strictly ascending")));
    }
    if grid[0] < min {
        return Err(Error::Config(format!("{name} values must be >= {min}")));
    }
    Ok(())
}

impl Resolved {
    /// Fill defaults for `kind` and validate. `seed` overrides the file.
    pub fn new(cfg: &ExperimentConfig, kind: ExperimentKind, seed: Option<u64>) -> Result<Self> {
        let e = &cfg.experiment;
        if let Some(k) = e.kind {
            if k != kind {
                return Err(Error::Config(format!(
                    "config is for experiment `{}` but `{}` was requested",
                    k.name(),
                    kind.name()
                )));
            }
        }
        cfg.system.validate()?;
        let is_map = cfg.system.map_system().is_some();
        let is_stadium = matches!(cfg.system, SystemConfig::Stadium { .. });
        let is_gm = matches!(cfg.system, SystemConfig::GibbsMarkov { .. });
        match kind {
            ExperimentKind::Calibrate if !is_map => {
                return Err(Error::Config("calibrate needs an interval-map system".into()))
            }
            ExperimentKind::GmMartingale if !is_gm => {
                return Err(Error::Config("gm-martingale needs the gibbs-markov system".into()))
            }
            ExperimentKind::StadiumGeom if !is_stadium => {
                return Err(Error::Config("stadium-geom needs the stadium system".into()))
            }
            ExperimentKind::Tails if is_gm => {
                return Err(Error::Config("tails needs an interval map or the stadium".into()))
            }
            _ => {}
        }

        let default_grid = match kind {
            ExperimentKind::GmMartingale => vec![100, 1000, 10_000, 1_000_000],
            _ => vec![10_000, 100_000, 1_000_000],
        };
        let n_grid = e.n_grid.clone().unwrap_or(default_grid);
        let mode = e.mode.unwrap_or(NormMode::Nonstandard);
        let grid_min = match (kind, mode) {
            (ExperimentKind::GmMartingale, _) => 16,
            (_, NormMode::Nonstandard) => 3,
            _ => 2,
        };
        check_grid("n_grid", &n_grid, grid_min)?;
        let ensemble = e.ensemble.unwrap_or(1000);
        if ensemble == 0 {
            return Err(Error::Config("ensemble must be >= 1".into()));
        }
        let lemma_grid = e.lemma_grid.clone().unwrap_or_else(|| vec![10_000, 100_000, 1_000_000]);
        check_grid("lemma_grid", &lemma_grid, 16)?;
        let returns = e.returns.unwrap_or(1_000_000);
        if returns < 1000 {
            return Err(Error::Config("returns must be >= 1000".into()));
        }
        let tail_paths = e.tail_paths.unwrap_or(16);
        let lemma_paths = e.lemma_paths.unwrap_or(1000);
        if tail_paths == 0 || lemma_paths == 0 {
            return Err(Error::Config("tail_paths and lemma_paths must be >= 1".into()));
        }
        let delta = e.decomposition_delta.unwrap_or(0.1);
        let quantile = e.decomposition_quantile.unwrap_or(0.9999);
        if !(delta > 0.0 && delta < 1.0) || !(quantile > 0.0 && quantile <= 1.0) {
            return Err(Error::Config("decomposition_delta must lie in (0,1), decomposition_quantile in (0,1]".into()));
        }
        let chains = e.calibration_chains.unwrap_or(64);
        let iterations = e.calibration_iterations.unwrap_or(1_000_000_000);
        if chains < 2 || iterations < chains {
            return Err(Error::Config("calibration needs >= 2 chains and iterations >= chains".into()));
        }
        let checkpoint_secs = e.checkpoint_secs.unwrap_or(60.0);
        if !(checkpoint_secs >= 0.0) {
            return Err(Error::Config("checkpoint_secs must be >= 0".into()));
        }
        let samples = e.samples.unwrap_or(1_000_000);
        if samples < 2 {
            return Err(Error::Config("samples must be >= 2".into()));
        }

        let o = &cfg.observable;
        let observable = if is_map {
            if o.section.is_some() || o.flow.is_some() {
                return Err(Error::Config("section/flow observables apply to the stadium only".into()));
            }
            let raw = o.raw_spec();
            let centering = if kind == ExperimentKind::Calibrate {
                Centering::None
            } else {
                match o.centering {
                    CenteringMode::None => Centering::None,
                    CenteringMode::Exact => Centering::Exact {
                        mean: o.mean.ok_or_else(|| Error::Config("centering = \"exact\" needs `mean`".into()))?,
                    },
                    CenteringMode::Calibrated => {
                        let path = o.calibration.as_ref().ok_or_else(|| {
                            Error::MissingCalibration("centering = \"calibrated\" needs `calibration`".into())
                        })?;
                        let file = load_calibration(path)?;
                        if file.system != cfg.system {
                            return Err(Error::Config(format!(
                                "calibration {} was made for a different system",
                                path.display()
                            )));
                        }
                        if file.observable.uncentered() != raw {
                            return Err(Error::Config(format!(
                                "calibration {} was made for a different observable",
                                path.display()
                            )));
                        }
                        Centering::Calibrated(file.calibration)
                    }
                }
            };
            if o.centering != CenteringMode::Exact && o.mean.is_some() {
                return Err(Error::Config("`mean` is only used with centering = \"exact\"".into()));
            }
            ResolvedObservable::Map { spec: raw.with_centering(centering) }
        } else if is_stadium {
            if o.has_map_terms() {
                return Err(Error::Config(
                    "stadium observables are `section` and `flow` (centred exactly); trigonometric keys do not apply"
                        .into(),
                ));
            }
            ResolvedObservable::Stadium {
                section: o.section.unwrap_or(SectionObservableSpec::SegmentBalanced),
                flow: o.flow,
            }
        } else {
            if o.has_map_terms() || o.section.is_some() || o.flow.is_some() {
                return Err(Error::Config(
                    "the gibbs-markov observable is fixed (V = +-k); remove [observable]".into(),
                ));
            }
            ResolvedObservable::GibbsMarkov
        };

        Ok(Self {
            kind,
            system: cfg.system,
            observable,
            calibration_n_max: e.calibration_n_max.unwrap_or(*n_grid.last().unwrap()),
            n_grid,
            ensemble,
            seed: seed.or(e.seed).unwrap_or(1),
            mode,
            burn_in: e.burn_in.unwrap_or(1000),
            expect: e.expect,
            returns,
            tail_paths,
            hill_points: e.hill_points.unwrap_or(17).max(2),
            decomposition_delta: delta,
            decomposition_quantile: quantile,
            lemma_paths,
            lemma_grid,
            calibration_iterations: iterations,
            calibration_burn_in: e.calibration_burn_in.unwrap_or(1_000_000),
            calibration_chains: chains,
            samples,
            collisions: e.collisions.unwrap_or(10),
            checkpoint_secs,
            tolerances: cfg.tolerances,
        })
    }

    pub fn n_max(&self) -> u64 {
        *self.n_grid.last().unwrap()
    }

    pub fn map_observable(&self) -> Option<&ObservableSpec> {
        match &self.observable {
            ResolvedObservable::Map { spec } => Some(spec),
            _ => None,
        }
    }

    /// Identity of the simulation (everything except tolerances and
    /// checkpoint cadence), used to validate checkpoints.
    pub fn fingerprint(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[system]
kind = "gibbs-markov"
k_max = 1000

[experiment]
n_grid = [1000]
ensemble = 100
"#;

    #[test]
    fn minimal_config_resolves() {
        let c = ExperimentConfig::from_toml(MINIMAL).unwrap();
        let r = Resolved::new(&c, ExperimentKind::Clt, None).unwrap();
        assert_eq!(r.n_grid, vec![1000]);
        assert_eq!(r.ensemble, 100);
        assert_eq!(r.seed, 1);
        assert_eq!(r.tolerances, Tolerances::default());
        assert_eq!(Resolved::new(&c, ExperimentKind::Clt, Some(9)).unwrap().seed, 9);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for bad in [
            "[system]\nkind = \"lsv\"\nalpha = 2.0\nbeta = 1.0\n",
            "[system]\nkind = \"double-neutral\"\nalpha = 2.0\n",
            "[system]\nkind = \"lsv\"\nalpha = 2.0\n[experiment]\nensemble_size = 3\n",
            "[system]\nkind = \"lsv\"\nalpha = 2.0\n[tolerances]\nks_max = 0.1\n",
            "[system]\nkind = \"lsv\"\nalpha = 2.0\n[observable]\ncoefficient = 1.0\n",
            "[system]\nkind = \"lsv\"\nalpha = 2.0\n[other]\n",
            "[system]\nkind = \"tent\"\n",
        ] {
            assert!(matches!(ExperimentConfig::from_toml(bad), Err(Error::Config(_))), "{bad}");
        }
    }

    #[test]
    fn cross_field_errors() {
        let c = |s: &str| ExperimentConfig::from_toml(s).unwrap();
        let zero = c("[system]\nkind = \"lsv\"\nalpha = 2.0\n[experiment]\nensemble = 0\n");
        assert!(matches!(Resolved::new(&zero, ExperimentKind::Clt, None), Err(Error::Config(_))));
        let desc = c("[system]\nkind = \"lsv\"\nalpha = 2.0\n[experiment]\nn_grid = [100, 10]\n");
        assert!(Resolved::new(&desc, ExperimentKind::Clt, None).is_err());
        let tiny = c("[system]\nkind = \"lsv\"\nalpha = 2.0\n[experiment]\nn_grid = [2]\n");
        assert!(Resolved::new(&tiny, ExperimentKind::Clt, None).is_err());
        let std2 = c("[system]\nkind = \"lsv\"\nalpha = 2.0\n[experiment]\nn_grid = [2]\nmode = \"standard\"\n");
        assert!(Resolved::new(&std2, ExperimentKind::Clt, None).is_ok());
        let lsv = c("[system]\nkind = \"lsv\"\nalpha = 2.0\n");
        assert!(Resolved::new(&lsv, ExperimentKind::GmMartingale, None).is_err());
        assert!(Resolved::new(&lsv, ExperimentKind::StadiumGeom, None).is_err());
        let wrong_kind = c("[system]\nkind = \"lsv\"\nalpha = 2.0\n[experiment]\nkind = \"tails\"\n");
        assert!(Resolved::new(&wrong_kind, ExperimentKind::Clt, None).is_err());
        let bad_alpha = c("[system]\nkind = \"lsv\"\nalpha = 0.5\n");
        assert!(matches!(Resolved::new(&bad_alpha, ExperimentKind::Clt, None), Err(Error::Config(_))));
        let trig_on_stadium = c("[system]\nkind = \"stadium\"\nlength = 4.0\n[observable]\ncos = [1.0]\n");
        assert!(Resolved::new(&trig_on_stadium, ExperimentKind::Clt, None).is_err());
        let no_mean = c("[system]\nkind = \"double-neutral\"\n[observable]\ncos = [1.0]\ncentering = \"exact\"\n");
        assert!(Resolved::new(&no_mean, ExperimentKind::Clt, None).is_err());
    }

    #[test]
    fn missing_calibration_is_reported() {
        let c = ExperimentConfig::from_toml(
            "[system]\nkind = \"lsv\"\nalpha = 2.0\n[observable]\ncos = [0.0, 1.0]\ncentering = \"calibrated\"\ncalibration = \"/nonexistent/calibration.json\"\n",
        )
        .unwrap();
        assert!(matches!(Resolved::new(&c, ExperimentKind::Clt, None), Err(Error::MissingCalibration(_))));
        // calibration runs ignore the centering request
        assert!(Resolved::new(&c, ExperimentKind::Calibrate, None).is_ok());
    }

    #[test]
    fn tolerance_overrides() {
        let mut t = Tolerances::default();
        t.set("ks=0.05").unwrap();
        assert_eq!(t.ks, 0.05);
        assert!(t.set("nope=1").is_err());
        assert!(t.set("ks").is_err());
        assert!(t.set("ks=abc").is_err());
    }

    #[test]
    fn stadium_defaults_to_balanced_section() {
        let c = ExperimentConfig::from_toml(
            "[system]\nkind = \"stadium\"\nlength = 4.0\n[observable]\nflow = { kind = \"vertical-speed-squared\" }\n",
        )
        .unwrap();
        let r = Resolved::new(&c, ExperimentKind::Clt, None).unwrap();
        assert_eq!(
            r.observable,
            ResolvedObservable::Stadium {
                section: SectionObservableSpec::SegmentBalanced,
                flow: Some(FlowObservableSpec::VerticalSpeedSquared)
            }
        );
    }
}
