//! Experiment orchestration: configuration, deterministic parallel runs
//! with checkpoints, reports and plots.

pub mod config;
pub mod engine;
pub mod plot;
pub mod report;

mod calibrate;
mod ensemble;
mod geometry;
mod martingale;
mod tails;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::dynamics::{Centering, MapSystem, ObservableSpec};
use crate::error::Result;
use crate::gibbs_markov::{CountableMarkovModel, GmSampler};
use crate::stadium::{
    boundary_averages, Centered, CenteredFlow, FlowObservableSpec, SectionObservableSpec, StadiumGeometry,
};

pub use config::{ExperimentConfig, ExperimentKind, Regime, Resolved, Tolerances};
pub use ensemble::{clt_checks, wip_checks, EnsembleSummary};
pub use report::{Check, Report, Status};

/// Disjoint stream ranges so that no two phases share random numbers.
pub(crate) const STREAM_PATHS: u64 = 0;
pub(crate) const STREAM_TAILS: u64 = 1 << 40;
pub(crate) const STREAM_JITTER: u64 = 2 << 40;
pub(crate) const STREAM_LEMMA: u64 = 3 << 40;
pub(crate) const STREAM_GEOMETRY: u64 = 4 << 40;
pub(crate) const STREAM_COHOMOLOGY: u64 = 5 << 40;
pub(crate) const STREAM_CALIBRATION: u64 = 6 << 40;

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: PathBuf,
    /// Abort after this many engine chunks (checkpoint written first).
    pub stop_after_chunks: Option<usize>,
}

#[derive(Debug)]
pub struct Outcome {
    pub report: Report,
    pub files: Vec<PathBuf>,
}

/// The simulated system with its observable, built once per run.
pub(crate) enum Handle {
    Map {
        system: MapSystem,
        obs: ObservableSpec,
    },
    Stadium {
        geom: StadiumGeometry,
        section: Centered<SectionObservableSpec>,
        flow: Option<CenteredFlow<FlowObservableSpec>>,
        i_v: f64,
        j_v: Option<f64>,
    },
    Gm {
        model: CountableMarkovModel,
        sampler: GmSampler,
    },
}

impl Handle {
    pub(crate) fn build(res: &Resolved) -> Result<Self> {
        use config::ResolvedObservable as O;
        Ok(match (&res.system, &res.observable) {
            (config::SystemConfig::Stadium { length }, O::Stadium { section, flow }) => {
                let geom = StadiumGeometry::new(*length)?;
                let section = Centered { inner: *section, offset: section.liouville_mean(&geom) };
                let flow = flow.map(|f| CenteredFlow { inner: f, offset: f.flow_mean(&geom) });
                let one = FlowObservableSpec::Constant { value: 0.0 };
                let (i_v, j_v) = match &flow {
                    Some(f) => {
                        let (i, j) = boundary_averages(&geom, &section, f)?;
                        (i, Some(j))
                    }
                    None => (boundary_averages(&geom, &section, &one)?.0, None),
                };
                Handle::Stadium { geom, section, flow, i_v, j_v }
            }
            (sys, O::GibbsMarkov) => {
                let model = CountableMarkovModel::from_params(&sys.gm_params().expect("gibbs-markov system"))?;
                let sampler = model.sampler()?;
                Handle::Gm { model, sampler }
            }
            (sys, O::Map { spec }) => Handle::Map { system: sys.map_system().expect("map system"), obs: spec.clone() },
            _ => unreachable!("observable kind is resolved against the system"),
        })
    }

    /// Coefficients `c_i` of the piecewise-constant part `K = c_i R` per
    /// return cell: centred boundary values for maps, `I_v` for the stadium.
    pub(crate) fn coefficients(&self) -> Vec<f64> {
        match self {
            Handle::Map { system, obs } => {
                let off = obs.centering.offset();
                match system {
                    MapSystem::DoubleNeutral => vec![obs.at_zero() - off, obs.at_one() - off],
                    _ => vec![obs.at_zero() - off],
                }
            }
            Handle::Stadium { i_v, .. } => vec![*i_v],
            Handle::Gm { .. } => vec![],
        }
    }

    /// Which return cell an excursion starting at `y` belongs to.
    pub(crate) fn map_cell(system: &MapSystem, y: f64) -> u8 {
        match system {
            MapSystem::DoubleNeutral if y >= 0.5 => 1,
            _ => 0,
        }
    }

    /// Standard when every coefficient vanishes within the centering
    /// uncertainty.
    pub(crate) fn regime(&self) -> Regime {
        let tol = match self {
            Handle::Map { obs, .. } => match obs.centering {
                Centering::Calibrated(c) => (5.0 * c.std_error).max(1e-9),
                _ => 1e-9,
            },
            Handle::Stadium { .. } => 1e-9,
            Handle::Gm { .. } => return Regime::Nonstandard,
        };
        if self.coefficients().iter().any(|c| c.abs() > tol) {
            Regime::Nonstandard
        } else {
            Regime::Standard
        }
    }
}

/// Run one experiment end to end and write its artifacts into `opts.out`.
pub fn run_experiment(res: &Resolved, opts: &RunOptions) -> Result<Outcome> {
    let started = Instant::now();
    let mut art = report::Artifacts::new(&opts.out)?;
    let mut eng =
        engine::Engine::new(&opts.out, res.fingerprint()?, res.checkpoint_secs).with_stop_after(opts.stop_after_chunks);
    let handle = Handle::build(res)?;
    let mut counters = BTreeMap::new();
    let (summary, checks) = match res.kind {
        ExperimentKind::Calibrate => calibrate::run(res, &handle, &mut eng, &mut art, &mut counters)?,
        ExperimentKind::Clt | ExperimentKind::Wip => ensemble::run(res, &handle, &mut eng, &mut art, &mut counters)?,
        ExperimentKind::Tails => tails::run(res, &handle, &mut eng, &mut art, &mut counters)?,
        ExperimentKind::GmMartingale => martingale::run(res, &handle, &mut eng, &mut art, &mut counters)?,
        ExperimentKind::StadiumGeom => geometry::run(res, &handle, &mut eng, &mut art, &mut counters)?,
    };
    let report = Report::new(res, summary, checks, counters);
    art.json("report.json", &report)?;
    art.json("timing.json", &serde_json::json!({ "wall_seconds": started.elapsed().as_secs_f64() }))?;
    eng.finish()?;
    Ok(Outcome { report, files: art.files })
}

/// Convenience for tests and scripts: resolve and run a config.
pub fn run_config(cfg: &ExperimentConfig, kind: ExperimentKind, seed: Option<u64>, out: &Path) -> Result<Outcome> {
    let res = Resolved::new(cfg, kind, seed)?;
    run_experiment(&res, &RunOptions { out: out.to_path_buf(), stop_after_chunks: None })
}
