//! Path ensembles for the `clt` and `wip` experiments.
//!
//! Every path is one orbit from the initial law, recorded at the prefixes
//! `t n` for each `n` of the grid, so all `n` share trajectories.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::{Regime, Resolved, Tolerances};
use super::engine::Engine;
use super::plot::{Chart, Series, Style, PALETTE};
use super::report::{num, Artifacts, Bound, Check};
use super::tails::{self, TailSummary};
use super::{Handle, STREAM_PATHS};
use crate::error::Result;
use crate::inducing::{normalizer, prefix_stats, Flight, FlowAccumulator, NormMode, PrefixRecorder, PrefixStats};
use crate::numeric::sample_variance;
use crate::rng::{open01, rng_stream};
use crate::stadium::{flight_integral, liouville_sample, next_collision, FlowObservable, SectionObservable, Vec2};
use crate::stats::{
    brownian_sup_cdf, covariance_increments_report, gaussian_cdf, std_normal_quantile, variance_ratio_scan,
    CovarianceReport, EmpiricalDistribution, VarianceScan,
};

pub const FRACTIONS: [f64; 4] = [0.25, 0.5, 0.75, 1.0];
const BUNDLE_PATHS: usize = 16;
const BUNDLE_POINTS: usize = 64;
/// Bound on the flow telescoping identity per path.
const TELESCOPING_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathRecord {
    pub main: Vec<PrefixStats>,
    /// Stadium: per-collision flight integrals of the flow observable.
    pub derived: Option<Vec<PrefixStats>>,
    /// Stadium: the flow path in continuous time.
    pub flow: Option<Vec<PrefixStats>>,
    /// `W_{n_max}` at `k/64`, for the first few paths.
    pub bundle: Option<Vec<f64>>,
    pub steps: u64,
    pub flight: f64,
    pub telescoping: f64,
}

/// One straight flight of the billiard flow.
struct Leg<'a, O> {
    obs: &'a O,
    p: Vec2,
    d: Vec2,
    len: f64,
    closes: bool,
}

impl<O: FlowObservable> Flight for Leg<'_, O> {
    fn duration(&self) -> f64 {
        self.len
    }
    fn integral(&self, from: f64, to: f64) -> f64 {
        let p = [self.p[0] + from * self.d[0], self.p[1] + from * self.d[1]];
        flight_integral(self.obs, p, self.d, to - from)
    }
    fn closes_excursion(&self) -> bool {
        self.closes
    }
}

fn bundle_fractions() -> Vec<f64> {
    (1..=BUNDLE_POINTS).map(|k| k as f64 / BUNDLE_POINTS as f64).collect()
}

pub(crate) fn simulate(h: &Handle, res: &Resolved, i: usize) -> Result<PathRecord> {
    let grid = &res.n_grid;
    let n_max = res.n_max();
    let bundle = i < BUNDLE_PATHS;
    let mut rec = PrefixRecorder::for_grid(grid, &FRACTIONS);
    if bundle {
        rec = rec.with_extra(bundle_fractions().iter().map(|t| (t * n_max as f64).round() as u64));
    }
    let mut rng = rng_stream(res.seed, STREAM_PATHS + i as u64);
    let mut derived = None;
    let mut flow_rec = None;
    let (mut flight, mut telescoping) = (0.0, 0.0);
    match h {
        Handle::Map { system, obs } => {
            let mut x = open01(&mut rng);
            for _ in 0..res.burn_in {
                x = system.step(x);
            }
            while !rec.is_done() {
                let v = obs.eval(x);
                x = system.step(x);
                rec.push(v, system.in_base(x));
            }
        }
        Handle::Gm { model, sampler } => {
            let mut s = sampler.first(&mut rng);
            loop {
                rec.push(model.observable(s), true);
                if rec.is_done() {
                    break;
                }
                s = sampler.next(s, &mut rng);
            }
        }
        Handle::Stadium { geom, section, flow, .. } => {
            let mut st = liouville_sample(geom, &mut rng);
            for _ in 0..res.burn_in {
                st = next_collision(geom, &st)?.0;
            }
            let mut der = flow.map(|_| PrefixRecorder::for_grid(grid, &FRACTIONS));
            let mut fr = flow.map(|_| PrefixRecorder::for_grid(grid, &FRACTIONS));
            let mut acc = FlowAccumulator::new();
            loop {
                let (next, len) = next_collision(geom, &st)?;
                let ret = next.in_return_set();
                if !rec.is_done() {
                    rec.push(section.eval(geom, &st), ret);
                }
                if let (Some(f), Some(der), Some(fr)) = (flow, der.as_mut(), fr.as_mut()) {
                    let leg = Leg { obs: f, p: geom.position(&st), d: geom.direction(&st), len, closes: ret };
                    if !der.is_done() {
                        der.push(leg.integral(0.0, len), ret);
                    }
                    if !fr.is_done() {
                        let laps = acc.laps();
                        acc.push(&leg, |_, v| fr.push_cumulative(v, laps), n_max);
                    }
                }
                flight += len;
                st = next;
                let side_done = der.as_ref().is_none_or(|r| r.is_done()) && fr.as_ref().is_none_or(|r| r.is_done());
                if rec.is_done() && side_done {
                    break;
                }
            }
            telescoping = acc.max_telescoping_error();
            derived = der;
            flow_rec = fr;
        }
    }
    let stats = |r: &PrefixRecorder| -> Result<Vec<PrefixStats>> {
        grid.iter().map(|&n| prefix_stats(r, n, res.mode, &FRACTIONS)).collect()
    };
    Ok(PathRecord {
        main: stats(&rec)?,
        derived: derived.as_ref().map(stats).transpose()?,
        flow: flow_rec.as_ref().map(stats).transpose()?,
        bundle: if bundle { Some(prefix_stats(&rec, n_max, res.mode, &bundle_fractions())?.snapshots) } else { None },
        steps: rec.steps(),
        flight,
        telescoping,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NRow {
    pub n: u64,
    pub paths: usize,
    pub mean: f64,
    /// Sample and robust (IQR) variance of `W_n(1)`.
    pub variance: f64,
    pub robust_variance: f64,
    /// The same on the `n ln n` scale: `Var(S_n) / (n ln n)`.
    pub sample_sigma2: f64,
    pub sigma2_hat: f64,
    /// KS distance of `W_n(1)` to `N(0, robust variance)`.
    pub ks_gaussian: f64,
    /// KS distance to `N(0, sigma^2)` when `sigma^2` is known exactly.
    pub ks_theory: Option<f64>,
    /// KS distance of `sup_t W_n(t)` to the Brownian supremum law.
    pub sup_ks: f64,
    pub median_max_partial: f64,
    pub mean_returns: f64,
    pub covariance: Option<CovarianceReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComponentSummary {
    pub label: String,
    pub rows: Vec<NRow>,
    pub scan: Option<VarianceScan>,
    /// Slope of the log robust variance against `ln n`.
    pub robust_slope: Option<f64>,
}

impl ComponentSummary {
    pub fn last(&self) -> &NRow {
        self.rows.last().expect("non-empty grid")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Prediction {
    /// `tail-fit`: `sigma_R^2` from the return-time tails; `return-count`:
    /// from the fluctuations of the number of returns by time `n`.
    pub method: String,
    pub r_bar: f64,
    pub sigma_r2: f64,
    pub predicted: f64,
    /// Robust `Var(S_n) / (n ln n)` at the largest `n`.
    pub observed: f64,
    pub observed_sample: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowComparison {
    pub flow_sigma2: f64,
    pub map_sigma2: f64,
    pub mean_flight: f64,
    pub expected: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub system: String,
    pub mode: NormMode,
    /// Regime used for the slope window (configured or derived).
    pub regime: Regime,
    pub derived_regime: Regime,
    pub coefficients: Vec<f64>,
    pub centering_offset: Option<f64>,
    pub theory_sigma2: Option<f64>,
    pub main: ComponentSummary,
    pub derived: Option<ComponentSummary>,
    pub flow: Option<ComponentSummary>,
    pub tails: Option<TailSummary>,
    pub prediction: Option<Prediction>,
    pub flow_comparison: Option<FlowComparison>,
    pub i_v: Option<f64>,
    pub j_v: Option<f64>,
    pub mean_flight: Option<f64>,
    pub max_telescoping_error: Option<f64>,
}

fn summarize_component(
    label: &str,
    grid: &[u64],
    mode: NormMode,
    per_path: &[&Vec<PrefixStats>],
    theory: Option<f64>,
) -> Result<ComponentSummary> {
    let mut rows = Vec::with_capacity(grid.len());
    let mut sums = Vec::with_capacity(grid.len());
    for (k, &n) in grid.iter().enumerate() {
        let w1: Vec<f64> = per_path.iter().map(|p| p[k].snapshots[FRACTIONS.len() - 1]).collect();
        let a = normalizer(n, mode)?;
        let scale = a * a / (n as f64 * (n as f64).ln());
        let dist = EmpiricalDistribution::new(w1.clone())?;
        let variance = sample_variance(&w1);
        let robust_variance = dist.robust_variance();
        let sd = robust_variance.sqrt();
        let ks_gaussian =
            if sd > 0.0 { dist.ks_distance(|x| gaussian_cdf(x, sd).unwrap_or(f64::NAN)) } else { f64::NAN };
        let ks_theory = match (theory, mode) {
            (Some(s2), NormMode::Nonstandard) => {
                Some(dist.ks_distance(|x| gaussian_cdf(x, s2.sqrt()).unwrap_or(f64::NAN)))
            }
            _ => None,
        };
        let sups = EmpiricalDistribution::new(per_path.iter().map(|p| p[k].sup).collect())?;
        let sup_ks =
            if sd > 0.0 { sups.ks_distance(|x| brownian_sup_cdf(x, sd).unwrap_or(f64::NAN)) } else { f64::NAN };
        let maxp = EmpiricalDistribution::new(per_path.iter().map(|p| p[k].max_partial).collect())?;
        let mean_returns = per_path.iter().map(|p| p[k].returns as f64).sum::<f64>() / per_path.len() as f64;
        let covariance = if per_path.len() >= 10 && sd > 0.0 {
            let snaps: Vec<Vec<f64>> = per_path.iter().map(|p| p[k].snapshots.clone()).collect();
            Some(covariance_increments_report(&snaps, &FRACTIONS)?)
        } else {
            None
        };
        rows.push(NRow {
            n,
            paths: w1.len(),
            mean: crate::numeric::mean(&w1),
            variance,
            robust_variance,
            sample_sigma2: variance * scale,
            sigma2_hat: robust_variance * scale,
            ks_gaussian,
            ks_theory,
            sup_ks,
            median_max_partial: maxp.quantile(0.5),
            mean_returns,
            covariance,
        });
        sums.push((n, w1.iter().map(|w| w * a).collect::<Vec<f64>>()));
    }
    let scan = if per_path.len() >= 100 { Some(variance_ratio_scan(&sums)?) } else { None };
    let robust_slope = scan.as_ref().filter(|s| s.rows.len() >= 2 && !s.degenerate).map(|s| {
        let xs: Vec<f64> = s.rows.iter().map(|r| (r.n as f64).ln()).collect();
        let ys: Vec<f64> = s.rows.iter().map(|r| r.robust_variance.ln()).collect();
        crate::numeric::linear_fit(&xs, &ys).0
    });
    Ok(ComponentSummary { label: label.into(), rows, scan, robust_slope })
}

pub(crate) fn summarize(
    h: &Handle,
    res: &Resolved,
    paths: &[PathRecord],
    tails: Option<TailSummary>,
) -> Result<EnsembleSummary> {
    let theory = match h {
        Handle::Gm { model, .. } => Some(model.sigma2()),
        _ => None,
    };
    let main_refs: Vec<&Vec<PrefixStats>> = paths.iter().map(|p| &p.main).collect();
    let main = summarize_component("observable", &res.n_grid, res.mode, &main_refs, theory)?;
    let side = |pick: fn(&PathRecord) -> Option<&Vec<PrefixStats>>, label: &str| -> Result<Option<ComponentSummary>> {
        let refs: Option<Vec<&Vec<PrefixStats>>> = paths.iter().map(pick).collect();
        refs.map(|r| summarize_component(label, &res.n_grid, res.mode, &r, None)).transpose()
    };
    let derived = side(|p| p.derived.as_ref(), "flight-integrals")?;
    let flow = side(|p| p.flow.as_ref(), "flow")?;

    let steps: u64 = paths.iter().map(|p| p.steps).sum();
    let (i_v, j_v, mean_flight, max_tele) = match h {
        Handle::Stadium { i_v, j_v, .. } => (
            Some(*i_v),
            *j_v,
            Some(paths.iter().map(|p| p.flight).sum::<f64>() / steps as f64),
            Some(paths.iter().map(|p| p.telescoping).fold(0.0, f64::max)),
        ),
        _ => (None, None, None, None),
    };

    let last = main.last();
    let predicted = |method: &str, r_bar: f64, sigma_r2: f64, predicted: f64| Prediction {
        method: method.into(),
        r_bar,
        sigma_r2,
        predicted,
        observed: last.sigma2_hat,
        observed_sample: last.sample_sigma2,
        rel_error: (last.sigma2_hat - predicted).abs() / predicted,
    };
    let prediction = match (h, tails.as_ref()) {
        // Successive long bouncing excursions are correlated, so the tail
        // constant of R is not its limit variance; use the renewal identity
        // N_n - n / R_bar ~ -(sum_{j<N} R_j - N R_bar) / R_bar instead.
        (Handle::Stadium { i_v, .. }, _) if h.regime() == Regime::Nonstandard => {
            let counts: Vec<f64> = paths.iter().map(|p| p.main.last().unwrap().returns as f64).collect();
            let n = last.n as f64;
            let r_bar = n / crate::numeric::mean(&counts);
            let big_n = n / r_bar;
            let sigma_r2 = r_bar * r_bar * EmpiricalDistribution::new(counts)?.robust_variance() / (big_n * big_n.ln());
            Some(predicted("return-count", r_bar, sigma_r2, i_v * i_v * sigma_r2 / r_bar))
        }
        (_, Some(t)) => Some(predicted("tail-fit", t.r_bar, t.sigma_r2, t.predicted_sigma2)),
        _ => None,
    };
    let flow_comparison = match (&derived, &flow, mean_flight) {
        (Some(d), Some(f), Some(h_bar)) => {
            let expected = d.last().sigma2_hat / h_bar;
            let flow_sigma2 = f.last().sigma2_hat;
            Some(FlowComparison {
                flow_sigma2,
                map_sigma2: d.last().sigma2_hat,
                mean_flight: h_bar,
                expected,
                rel_error: (flow_sigma2 - expected).abs() / expected,
            })
        }
        _ => None,
    };
    let derived_regime = h.regime();
    Ok(EnsembleSummary {
        system: res.system.name().into(),
        mode: res.mode,
        regime: res.expect.unwrap_or(derived_regime),
        derived_regime,
        coefficients: h.coefficients(),
        centering_offset: res.map_observable().map(|o| o.centering.offset()),
        theory_sigma2: theory,
        main,
        derived,
        flow,
        tails,
        prediction,
        flow_comparison,
        i_v,
        j_v,
        mean_flight,
        max_telescoping_error: max_tele,
    })
}

fn ks_floor(m: usize) -> f64 {
    1.36 / (m as f64).sqrt()
}

/// Checks of the distributional limit at the largest `n`.
pub fn clt_checks(s: &EnsembleSummary, t: &Tolerances) -> Vec<Check> {
    let last = s.main.last();
    let m = last.paths;
    let mut checks = Vec::new();
    if let Some(s2) = s.theory_sigma2 {
        let rel = (last.sample_sigma2 - s2).abs() / s2;
        let floor = if m > 1 { 2.0 * (2.0 / (m - 1) as f64).sqrt() } else { f64::INFINITY };
        checks.push(Check::resolved("variance_rel_error", rel, t.var_rel, floor));
    }
    checks.push(Check::resolved("ks_gaussian", last.ks_gaussian, t.ks, ks_floor(m)));
    let window = match s.regime {
        Regime::Nonstandard => Bound::Within { lo: t.slope_nonstandard_min, hi: t.slope_nonstandard_max },
        Regime::Standard => Bound::Within { lo: t.slope_standard_min, hi: t.slope_standard_max },
    };
    match s.main.scan.as_ref().and_then(|sc| sc.slope) {
        Some(slope) => checks.push(Check::new("variance_slope", slope, window)),
        None => {
            checks.push(Check::skipped("variance_slope", f64::NAN, window, "needs >= 2 grid points and >= 100 paths"))
        }
    }
    if let Some(p) = &s.prediction {
        checks.push(Check::new("prediction_rel_error", p.rel_error, Bound::AtMost { limit: t.prediction_rel }));
    }
    if let Some(f) = &s.flow_comparison {
        checks.push(Check::new("flow_variance_rel_error", f.rel_error, Bound::AtMost { limit: t.flow_rel }));
    }
    if let Some(e) = s.max_telescoping_error {
        if s.flow.is_some() {
            checks.push(Check::new("flow_telescoping", e, Bound::AtMost { limit: TELESCOPING_TOL }));
        }
    }
    checks
}

/// Checks of the functional limit (covariance, increments, supremum).
pub fn wip_checks(s: &EnsembleSummary, t: &Tolerances) -> Vec<Check> {
    let last = s.main.last();
    let m = last.paths as f64;
    let mut checks = Vec::new();
    match &last.covariance {
        Some(c) => {
            checks.push(Check::resolved(
                "covariance_rel_error",
                c.max_rel_deviation,
                t.cov_rel,
                2.0 * (2.0 / m).sqrt(),
            ));
            checks.push(Check::resolved(
                "increment_correlation",
                c.robust_increment_correlation.abs(),
                t.increment_corr,
                2.0 / m.sqrt(),
            ));
        }
        None => checks.push(Check::skipped(
            "covariance_rel_error",
            f64::NAN,
            Bound::AtMost { limit: t.cov_rel },
            "too few paths or degenerate",
        )),
    }
    checks.push(Check::resolved("sup_ks", last.sup_ks, t.sup_ks, ks_floor(last.paths)));
    checks
}

fn thin<T: Copy>(xs: &[T], max: usize) -> Vec<T> {
    if xs.len() <= max {
        return xs.to_vec();
    }
    (0..max).map(|i| xs[i * (xs.len() - 1) / (max - 1)]).collect()
}

fn write_plots(art: &mut Artifacts, s: &EnsembleSummary, paths: &[PathRecord]) -> Result<()> {
    for (k, row) in s.main.rows.iter().enumerate() {
        let w1: Vec<f64> = paths.iter().map(|p| p.main[k].snapshots[FRACTIONS.len() - 1]).collect();
        let dist = EmpiricalDistribution::new(w1)?;
        let sd = row.robust_variance.sqrt();
        let sorted = dist.sorted();
        let m = sorted.len();
        let ecdf: Vec<(f64, f64)> =
            thin(&(0..m).map(|i| (sorted[i], (i + 1) as f64 / m as f64)).collect::<Vec<_>>(), 400);
        let (lo, hi) = (sorted[0], sorted[m - 1]);
        let gauss: Vec<(f64, f64)> = (0..=200)
            .map(|i| lo + (hi - lo) * i as f64 / 200.0)
            .map(|x| (x, if sd > 0.0 { gaussian_cdf(x, sd).unwrap_or(f64::NAN) } else { f64::NAN }))
            .collect();
        let chart = Chart::new(format!("ECDF of W_n(1), n = {}", row.n), "W_n(1)", "probability")
            .with(Series::new("empirical", ecdf, Style::Line, PALETTE[0]))
            .with(Series::new(format!("N(0, {:.4})", row.robust_variance), gauss, Style::Dashed, PALETTE[1]));
        art.svg(&format!("ecdf_n{}.svg", row.n), &chart.to_svg())?;

        let qq: Vec<(f64, f64)> = (0..200)
            .map(|i| {
                let p = (i as f64 + 0.5) / 200.0;
                (sd * std_normal_quantile(p), dist.quantile(p))
            })
            .collect();
        let span = qq.iter().flat_map(|p| [p.0, p.1]).fold(0.0f64, |a, b| a.max(b.abs()));
        let chart = Chart::new(format!("QQ plot of W_n(1), n = {}", row.n), "Gaussian quantile", "sample quantile")
            .with(Series::new("sample", qq, Style::Points, PALETTE[0]))
            .with(Series::new("identity", vec![(-span, -span), (span, span)], Style::Dashed, PALETTE[1]));
        art.svg(&format!("qq_n{}.svg", row.n), &chart.to_svg())?;
    }

    let mut bundle = Chart::new(format!("Sample paths W_n(t), n = {}", s.main.last().n), "t", "W_n(t)");
    for (i, p) in paths.iter().filter_map(|p| p.bundle.as_ref()).enumerate() {
        let mut pts = vec![(0.0, 0.0)];
        pts.extend(bundle_fractions().into_iter().zip(p.iter().copied()));
        bundle = bundle.with(Series::new("", pts, Style::Line, PALETTE[i % PALETTE.len()]));
    }
    art.svg("paths.svg", &bundle.to_svg())?;

    if let Some(scan) = &s.main.scan {
        let mut c = Chart::new("Variance growth", "n", "ratio");
        c.log_x = true;
        let per_n: Vec<(f64, f64)> = scan.rows.iter().map(|r| (r.n as f64, r.ratio_n)).collect();
        let per_nlogn: Vec<(f64, f64)> = scan.rows.iter().map(|r| (r.n as f64, r.ratio_n_log_n)).collect();
        c = c.with(Series::new("Var(S_n) / n", per_n, Style::Line, PALETTE[0])).with(Series::new(
            "Var(S_n) / (n ln n)",
            per_nlogn,
            Style::Line,
            PALETTE[1],
        ));
        art.svg("variance_ratio.svg", &c.to_svg())?;
    }
    Ok(())
}

pub(crate) fn run(
    res: &Resolved,
    h: &Handle,
    eng: &mut Engine,
    art: &mut Artifacts,
    counters: &mut BTreeMap<String, u64>,
) -> Result<(serde_json::Value, Vec<Check>)> {
    let paths = eng.run_phase("paths", res.ensemble as usize, |i| simulate(h, res, i))?;
    let needs_tails = !matches!(h, Handle::Gm { .. }) && h.regime() == Regime::Nonstandard;
    let (tail_summary, survival) = if needs_tails {
        let orbit = eng.run_phase("tails", 1, |i| tails::run_orbit(h, res, i as u64, true))?;
        counters.insert("tail_returns".into(), orbit[0].count);
        let (t, s) = tails::summarize(h, res, &orbit)?;
        (Some(t), s)
    } else {
        (None, Vec::new())
    };
    let s = summarize(h, res, &paths, tail_summary)?;
    counters.insert("paths".into(), paths.len() as u64);
    counters.insert("steps".into(), paths.iter().map(|p| p.steps + res.burn_in).sum());
    counters.insert("returns".into(), paths.iter().map(|p| p.main.last().map_or(0, |m| m.returns)).sum());

    let checks = match res.kind {
        super::ExperimentKind::Wip => wip_checks(&s, &res.tolerances),
        _ => clt_checks(&s, &res.tolerances),
    };

    let path_rows = |pick: fn(&PathRecord) -> Option<&Vec<PrefixStats>>| {
        let mut rows = Vec::new();
        for (k, &n) in res.n_grid.iter().enumerate() {
            for (i, p) in paths.iter().enumerate() {
                if let Some(st) = pick(p) {
                    rows.push((n, i, st[k].clone()));
                }
            }
        }
        rows
    };
    match res.kind {
        super::ExperimentKind::Wip => {
            art.csv(
                "wip.csv",
                &["n", "path_id", "W_0.25", "W_0.5", "W_0.75", "W_1", "sup"],
                path_rows(|p| Some(&p.main)).into_iter().map(|(n, i, st)| {
                    let mut r = vec![n.to_string(), i.to_string()];
                    r.extend(st.snapshots.iter().map(|&w| num(w)));
                    r.push(num(st.sup));
                    r
                }),
            )?;
        }
        _ => {
            let clt_row = |(n, i, st): (u64, usize, PrefixStats)| {
                vec![
                    n.to_string(),
                    i.to_string(),
                    num(st.snapshots[FRACTIONS.len() - 1]),
                    num(st.max_partial),
                    st.returns.to_string(),
                ]
            };
            let header = ["n", "path_id", "W1", "max_partial", "R_count"];
            art.csv("clt.csv", &header, path_rows(|p| Some(&p.main)).into_iter().map(clt_row))?;
            if s.flow.is_some() {
                art.csv("clt_flow.csv", &header, path_rows(|p| p.flow.as_ref()).into_iter().map(clt_row))?;
            }
        }
    }
    write_plots(art, &s, &paths)?;
    if let Some(t) = &s.tails {
        art.svg("tail_loglog.svg", &tails::tail_plot(t, &survival))?;
    }
    Ok((serde_json::to_value(&s)?, checks))
}
