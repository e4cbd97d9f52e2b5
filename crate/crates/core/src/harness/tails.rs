//! Return-time statistics: tail indices, tail constants, lap numbers, the
//! negligible-maximum criterion and the induced decomposition.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::Resolved;
use super::engine::Engine;
use super::plot::{Chart, Series, Style, PALETTE};
use super::report::{num, Artifacts, Bound, Check};
use super::{Handle, STREAM_JITTER, STREAM_TAILS};
use crate::error::{Error, Result};
use crate::inducing::{
    decomposition_check, lap_number, map_first_return, DecompositionReport, DecompositionSample, InducedDecomposition,
    DEFAULT_RETURN_CAP,
};
use crate::rng::{open01, rng_stream};
use crate::stadium::{first_return, liouville_sample, next_collision};
use crate::stats::{
    default_hill_k, hill_estimator, hill_sweep, tail_constant_estimate, EmpiricalDistribution, TailIndexEstimate,
};

/// Consecutive returns of one long orbit.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ReturnSample {
    pub r: Vec<u64>,
    pub v: Vec<f64>,
    pub cell: Vec<u8>,
    /// Stadium only: collisions on the departure cap, and on the segments.
    pub slide: Vec<u64>,
    pub seg: Vec<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrbitResult {
    pub detail: Option<ReturnSample>,
    /// `max_{j < n} R_j` for each `n` of the maxima grid.
    pub maxima: Vec<u64>,
    pub r_sum: u64,
    pub count: u64,
    pub flight: f64,
}

/// `10^3, 10^4, ...` up to `returns`.
pub fn maxima_grid(returns: u64) -> Vec<u64> {
    let mut g = Vec::new();
    let mut n = 1000;
    while n <= returns {
        g.push(n);
        n *= 10;
    }
    g
}

/// Simulate `res.returns` consecutive returns on orbit `orbit`.
pub(crate) fn run_orbit(h: &Handle, res: &Resolved, orbit: u64, detail: bool) -> Result<OrbitResult> {
    let grid = maxima_grid(res.returns);
    let mut rng = rng_stream(res.seed, STREAM_TAILS + orbit);
    let mut out = ReturnSample::default();
    let mut maxima = Vec::with_capacity(grid.len());
    let (mut r_sum, mut r_max, mut flight) = (0u64, 0u64, 0.0);
    let mut record = |j: u64, r: u64, v: f64, cell: u8, slide: Option<(u64, u64)>, out: &mut ReturnSample| {
        r_sum += r;
        r_max = r_max.max(r);
        if grid.get(maxima.len()) == Some(&(j + 1)) {
            maxima.push(r_max);
        }
        if detail {
            out.r.push(r);
            out.v.push(v);
            out.cell.push(cell);
            if let Some((s, g)) = slide {
                out.slide.push(s);
                out.seg.push(g);
            }
        }
    };
    match h {
        Handle::Map { system, obs } => {
            let mut x = open01(&mut rng);
            for _ in 0..res.burn_in {
                x = system.step(x);
            }
            let mut guard = 0;
            while !system.in_base(x) {
                x = system.step(x);
                guard += 1;
                if guard > DEFAULT_RETURN_CAP {
                    return Err(Error::InsufficientData("orbit never reached the return base".into()));
                }
            }
            for j in 0..res.returns {
                let ret = map_first_return(system, obs, x)?;
                record(j, ret.r, ret.v, Handle::map_cell(system, ret.start), None, &mut out);
                x = ret.end;
            }
        }
        Handle::Stadium { geom, section, .. } => {
            let mut st = liouville_sample(geom, &mut rng);
            for _ in 0..res.burn_in {
                st = next_collision(geom, &st)?.0;
            }
            while !st.in_return_set() {
                st = next_collision(geom, &st)?.0;
            }
            for j in 0..res.returns {
                let ex = first_return(geom, &st, section)?;
                let rec = ex.record;
                flight += rec.flight_total;
                record(j, rec.r, rec.v, 0, Some((rec.n_slide, rec.n_seg)), &mut out);
                st = ex.end;
            }
        }
        Handle::Gm { .. } => return Err(Error::Config("return statistics need a map or the stadium".into())),
    }
    Ok(OrbitResult { detail: detail.then_some(out), maxima, r_sum, count: res.returns, flight })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellTail {
    pub cell: usize,
    pub fraction: f64,
    pub coefficient: f64,
    /// `lim x^2 mu_Y(R > x, cell)`.
    pub tail_constant: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LapCheck {
    pub t: f64,
    pub laps: usize,
    pub rate: f64,
    pub expected: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaxRow {
    pub n: u64,
    /// Median over orbits of `(n ln n)^{-1/2} max_{j<n} R_j`.
    pub median: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TailSummary {
    pub returns: usize,
    pub orbits: usize,
    pub r_bar: f64,
    pub r_bar_orbit: f64,
    pub r_max: u64,
    pub hill_k: usize,
    pub hill_raw: TailIndexEstimate,
    pub hill_jitter: TailIndexEstimate,
    pub sweep_raw: Vec<TailIndexEstimate>,
    pub sweep_jitter: Vec<TailIndexEstimate>,
    pub sigma_r2: f64,
    pub cells: Vec<CellTail>,
    pub sigma_k2: f64,
    /// `sigma_K^2 / R-bar`: the predicted nonstandard variance.
    pub predicted_sigma2: f64,
    /// Mean flight length per collision (stadium).
    pub mean_flight: Option<f64>,
    pub lap: Option<LapCheck>,
    pub maxima: Vec<MaxRow>,
    pub decomposition: DecompositionReport,
    pub coefficients: Vec<f64>,
    pub bounce: Option<TailIndexEstimate>,
    pub slide: Option<TailIndexEstimate>,
}

fn jittered(xs: &[u64], seed: u64, stream: u64, shift: f64) -> Vec<f64> {
    let mut rng = rng_stream(seed, STREAM_JITTER + stream);
    xs.iter().map(|&x| x as f64 + shift - open01(&mut rng)).collect()
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let m = xs.len();
    if m % 2 == 1 {
        xs[m / 2]
    } else {
        0.5 * (xs[m / 2 - 1] + xs[m / 2])
    }
}

pub(crate) fn summarize(h: &Handle, res: &Resolved, orbits: &[OrbitResult]) -> Result<(TailSummary, Vec<(f64, f64)>)> {
    let d = orbits[0].detail.as_ref().ok_or(Error::EmptySample)?;
    let m = d.r.len();
    let r_sum: u64 = orbits.iter().map(|o| o.r_sum).sum();
    let count: u64 = orbits.iter().map(|o| o.count).sum();
    let r_bar = r_sum as f64 / count as f64;
    let r_bar_orbit = orbits[0].r_sum as f64 / m as f64;

    let raw = EmpiricalDistribution::new(d.r.iter().map(|&r| r as f64).collect())?;
    let jit = EmpiricalDistribution::new(jittered(&d.r, res.seed, 0, 0.0))?;
    let k = default_hill_k(m);
    let hill_raw = hill_estimator(&raw, k)?;
    let hill_jitter = hill_estimator(&jit, k)?;
    let sweep_raw = hill_sweep(&raw, res.hill_points)?;
    let sweep_jitter = hill_sweep(&jit, res.hill_points)?;
    let sigma_r2 = tail_constant_estimate(&jit, 2.0)?;

    let coefficients = h.coefficients();
    let jit_vals = jittered(&d.r, res.seed, 0, 0.0);
    let mut cells = Vec::new();
    for (i, &c) in coefficients.iter().enumerate() {
        let restricted: Vec<f64> =
            d.cell.iter().zip(&jit_vals).map(|(&cl, &r)| if cl as usize == i { r } else { 0.0 }).collect();
        let fraction = d.cell.iter().filter(|&&cl| cl as usize == i).count() as f64 / m as f64;
        let tail_constant = tail_constant_estimate(&EmpiricalDistribution::new(restricted)?, 2.0)?;
        cells.push(CellTail { cell: i, fraction, coefficient: c, tail_constant });
    }
    let sigma_k2: f64 = cells.iter().map(|c| c.coefficient * c.coefficient * c.tail_constant).sum();

    let roofs: Vec<f64> = d.r.iter().map(|&r| r as f64).collect();
    let t = 1e6f64.min(0.5 * orbits[0].r_sum as f64).floor();
    let lap = if t >= 1.0 {
        let laps = lap_number(&roofs, 0.0, t)?;
        let rate = laps as f64 / t;
        Some(LapCheck { t, laps, rate, expected: 1.0 / r_bar, rel_error: (rate * r_bar - 1.0).abs() })
    } else {
        None
    };

    let grid = maxima_grid(res.returns);
    let maxima = grid
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let a = ((n as f64) * (n as f64).ln()).sqrt();
            MaxRow { n, median: median(orbits.iter().map(|o| o.maxima[i] as f64 / a).collect()) }
        })
        .collect();

    let is_stadium = matches!(h, Handle::Stadium { .. });
    let samples: Vec<DecompositionSample> = (0..m)
        .map(|j| DecompositionSample {
            r: d.r[j],
            v: d.v[j],
            cell: d.cell[j] as usize,
            slide: if is_stadium { d.slide[j] } else { 0 },
        })
        .collect();
    let decomposition = decomposition_check(
        &samples,
        &InducedDecomposition {
            coefficients: coefficients.clone(),
            delta: res.decomposition_delta,
            quantile: res.decomposition_quantile,
        },
    )?;

    let (bounce, slide, mean_flight) = if is_stadium {
        let b = EmpiricalDistribution::new(jittered(&d.seg, res.seed, 1, 1.0))?;
        let s = EmpiricalDistribution::new(jittered(&d.slide, res.seed, 2, 1.0))?;
        let flight: f64 = orbits.iter().map(|o| o.flight).sum();
        (Some(hill_estimator(&b, k)?), Some(hill_estimator(&s, k)?), Some(flight / r_sum as f64))
    } else {
        (None, None, None)
    };

    // survival function on a logarithmic grid for the log-log plot
    let sorted = raw.sorted();
    let mut survival = Vec::new();
    let top = sorted[m - 1].max(2.0);
    for i in 0..60 {
        let x = top.powf(i as f64 / 59.0);
        let above = m - sorted.partition_point(|&v| v <= x);
        if above > 0 {
            survival.push((x, above as f64 / m as f64));
        }
    }

    Ok((
        TailSummary {
            returns: m,
            orbits: orbits.len(),
            r_bar,
            r_bar_orbit,
            r_max: *d.r.iter().max().unwrap(),
            hill_k: k,
            hill_raw,
            hill_jitter,
            sweep_raw,
            sweep_jitter,
            sigma_r2,
            cells,
            sigma_k2,
            predicted_sigma2: sigma_k2 / r_bar,
            mean_flight,
            lap,
            maxima,
            decomposition,
            coefficients,
            bounce,
            slide,
        },
        survival,
    ))
}

pub(crate) fn tail_plot(summary: &TailSummary, survival: &[(f64, f64)]) -> String {
    let mut c = Chart::new("Return-time tail", "n", "P(R > n)").log_log();
    c = c.with(Series::new("empirical", survival.to_vec(), Style::Points, PALETTE[0]));
    let guide: Vec<(f64, f64)> = survival
        .iter()
        .filter(|p| p.0 >= 2.0)
        .map(|&(x, _)| (x, summary.sigma_r2 / (x * x)))
        .filter(|p| p.1 <= 1.0)
        .collect();
    c.with(Series::new(
        format!("sigma_R^2 n^-2 (sigma_R^2 = {:.4})", summary.sigma_r2),
        guide,
        Style::Dashed,
        PALETTE[1],
    ))
    .to_svg()
}

pub(crate) fn run(
    res: &Resolved,
    h: &Handle,
    eng: &mut Engine,
    art: &mut Artifacts,
    counters: &mut BTreeMap<String, u64>,
) -> Result<(serde_json::Value, Vec<Check>)> {
    let orbits = eng.run_phase("tails", res.tail_paths as usize, |i| run_orbit(h, res, i as u64, i == 0))?;
    let (s, survival) = summarize(h, res, &orbits)?;
    counters.insert("returns".into(), orbits.iter().map(|o| o.count).sum());
    counters.insert("steps".into(), orbits.iter().map(|o| o.r_sum).sum());

    let t = &res.tolerances;
    let hill = Bound::Within { lo: t.hill_min, hi: t.hill_max };
    let mut checks = vec![
        Check::new("hill_tail_index", s.hill_jitter.tail_index, hill),
        Check::holds("decomposition", s.decomposition.pass),
    ];
    match &s.lap {
        Some(l) => checks.push(Check::new("lap_number_rate", l.rel_error, Bound::AtMost { limit: t.lap_rel })),
        None => checks.push(Check::skipped(
            "lap_number_rate",
            f64::NAN,
            Bound::AtMost { limit: t.lap_rel },
            "orbit too short",
        )),
    }
    if s.maxima.len() >= 2 {
        let dec = s.maxima.windows(2).all(|w| w[1].median < w[0].median);
        checks.push(Check::holds("negligible_maximum_decreasing", dec));
    } else {
        checks.push(Check::skipped(
            "negligible_maximum_decreasing",
            f64::NAN,
            Bound::Holds,
            "needs two maxima grid points",
        ));
    }
    if let (Some(b), Some(sl)) = (&s.bounce, &s.slide) {
        checks.push(Check::new("bounce_tail_index", b.tail_index, hill));
        checks.push(Check::new("slide_tail_index", sl.tail_index, Bound::AtLeast { limit: t.slide_index_min }));
    }

    art.csv(
        "hill.csv",
        &["k", "gamma_raw", "tail_index_raw", "gamma_jitter", "tail_index_jitter"],
        s.sweep_raw
            .iter()
            .zip(&s.sweep_jitter)
            .map(|(a, b)| vec![a.k.to_string(), num(a.gamma), num(a.tail_index), num(b.gamma), num(b.tail_index)]),
    )?;
    art.csv("maxima.csv", &["n", "median_scaled_max"], s.maxima.iter().map(|r| vec![r.n.to_string(), num(r.median)]))?;
    art.csv("tail_survival.csv", &["n", "survival"], survival.iter().map(|&(x, p)| vec![num(x), num(p)]))?;
    art.svg("tail_loglog.svg", &tail_plot(&s, &survival))?;
    Ok((serde_json::to_value(&s)?, checks))
}
