//! The `calibrate` experiment: invariant means by independent long chains.

use std::collections::BTreeMap;

use super::config::{CalibrationFile, Resolved};
use super::engine::Engine;
use super::report::{num, Artifacts, Bound, Check};
use super::{Handle, STREAM_CALIBRATION};
use crate::dynamics::{calibration_chain, Calibration};
use crate::error::{Error, Result};

pub(crate) fn run(
    res: &Resolved,
    h: &Handle,
    eng: &mut Engine,
    art: &mut Artifacts,
    counters: &mut BTreeMap<String, u64>,
) -> Result<(serde_json::Value, Vec<Check>)> {
    let Handle::Map { system, obs } = h else { unreachable!("calibrate is resolved against an interval map") };
    let chains = res.calibration_chains;
    if chains < 2 || res.calibration_iterations < chains {
        return Err(Error::Config("calibration needs >= 2 chains and iterations >= chains".into()));
    }
    let per_chain = res.calibration_iterations / chains;
    let raw = obs.uncentered();
    let means = eng.run_phase("chains", chains as usize, |i| {
        Ok(calibration_chain(system, &raw, per_chain, res.calibration_burn_in, res.seed, STREAM_CALIBRATION + i as u64))
    })?;
    let cal = Calibration::from_chain_means(&means, per_chain, res.calibration_burn_in, res.seed)?;
    counters.insert("chains".into(), chains);
    counters.insert("iterations".into(), per_chain * chains);

    art.json(
        "calibration.json",
        &CalibrationFile {
            schema_version: super::report::SCHEMA_VERSION,
            system: res.system,
            observable: raw,
            calibration: cal,
        },
    )?;
    art.csv("chains.csv", &["chain", "mean"], means.iter().enumerate().map(|(i, m)| vec![i.to_string(), num(*m)]))?;

    let n = res.calibration_n_max as f64;
    let budget = res.tolerances.centering_budget * (n.ln() / n).sqrt();
    let checks = vec![Check::new("centering_std_error", cal.std_error, Bound::AtMost { limit: budget })
        .with_note(format!("budget for experiments up to n = {}", res.calibration_n_max))];
    Ok((serde_json::to_value(cal)?, checks))
}
