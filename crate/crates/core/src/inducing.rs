//! Inducing machinery: induced sums over first returns, lap numbers of a
//! suspension, and the normalised path processes `W_n`.

use serde::{Deserialize, Serialize};

use crate::dynamics::{MapSystem, ObservableSpec};
use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;

/// Cap on the length of a single interval-map excursion.
pub const DEFAULT_RETURN_CAP: u64 = 1_000_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormMode {
    Standard,
    Nonstandard,
}

/// `a_n = n^{1/2}` or `(n ln n)^{1/2}`.
pub fn normalizer(n: u64, mode: NormMode) -> Result<f64> {
    let nf = n as f64;
    match mode {
        NormMode::Standard if n >= 2 => Ok(nf.sqrt()),
        NormMode::Nonstandard if n >= 3 => Ok((nf * nf.ln()).sqrt()),
        _ => Err(Error::InvalidParameter(format!("n = {n} too small for {mode:?} normalisation"))),
    }
}

/// `sum_{l < r} v(f^l y)`.
pub fn induced_sum(system: &MapSystem, obs: &ObservableSpec, y: f64, r: u64) -> f64 {
    let mut s = CompensatedSum::new();
    let mut x = y;
    for _ in 0..r {
        s.add(obs.eval(x));
        x = system.step(x);
    }
    s.value()
}

/// `max_{0 <= l <= r} |sum_{k < l} v(f^k y)|`.
pub fn max_partial_sum(system: &MapSystem, obs: &ObservableSpec, y: f64, r: u64) -> f64 {
    let mut s = CompensatedSum::new();
    let mut best: f64 = 0.0;
    let mut x = y;
    for _ in 0..r {
        s.add(obs.eval(x));
        best = best.max(s.value().abs());
        x = system.step(x);
    }
    best
}

/// Maximum absolute prefix sum of an explicit sequence (the empty prefix
/// included).
pub fn max_abs_prefix(values: &[f64]) -> f64 {
    let mut s = CompensatedSum::new();
    let mut best: f64 = 0.0;
    for &v in values {
        s.add(v);
        best = best.max(s.value().abs());
    }
    best
}

/// One excursion of an interval map away from its return base.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapReturn {
    pub start: f64,
    pub end: f64,
    pub r: u64,
    pub v: f64,
    pub max_abs_partial: f64,
}

/// Iterate from `y` until the orbit re-enters the base.
pub fn map_first_return(system: &MapSystem, obs: &ObservableSpec, y: f64) -> Result<MapReturn> {
    map_first_return_capped(system, obs, y, DEFAULT_RETURN_CAP)
}

pub fn map_first_return_capped(system: &MapSystem, obs: &ObservableSpec, y: f64, cap: u64) -> Result<MapReturn> {
    let mut s = CompensatedSum::new();
    let mut best: f64 = 0.0;
    let mut x = y;
    let mut r = 0u64;
    loop {
        s.add(obs.eval(x));
        best = best.max(s.value().abs());
        x = system.step(x);
        r += 1;
        if system.in_base(x) {
            return Ok(MapReturn { start: y, end: x, r, v: s.value(), max_abs_partial: best });
        }
        if r >= cap {
            return Err(Error::InsufficientData(format!("no return to base within {cap} steps from {y}")));
        }
    }
}

/// `N_t = max{n >= 0 : sum_{j<n} r_j <= u + t}`.
pub fn lap_number(roofs: &[f64], u: f64, t: f64) -> Result<usize> {
    let target = u + t;
    let mut acc = CompensatedSum::new();
    for (n, &r) in roofs.iter().enumerate() {
        if !(r > 0.0) {
            return Err(Error::InvalidParameter(format!("roof values must be > 0, got {r}")));
        }
        acc.add(r);
        if acc.value() > target {
            return Ok(n);
        }
    }
    Err(Error::RoofExhausted(t))
}

/// `psi_n(t) = N_{nt} / n`.
pub fn lap_fraction(roofs: &[f64], u: f64, n: u64, t: f64) -> Result<f64> {
    Ok(lap_number(roofs, u, n as f64 * t)? as f64 / n as f64)
}

/// `W_n` on the grid `t = j/n`, linearly interpolated between grid points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    pub n: u64,
    pub mode: NormMode,
    pub values: Vec<f64>,
}

impl PathSample {
    pub fn eval(&self, t: f64) -> f64 {
        let t = t.clamp(0.0, 1.0);
        let pos = t * self.n as f64;
        let j = (pos.floor() as usize).min(self.values.len() - 2);
        let frac = pos - j as f64;
        self.values[j] + frac * (self.values[j + 1] - self.values[j])
    }

    /// Supremum over `[0, 1]`; attained on the grid.
    pub fn sup(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Map mode: partial sums of the first `n` increments scaled by `1/a_n`.
pub fn path_process<I>(increments: I, n: u64, mode: NormMode) -> Result<PathSample>
where
    I: IntoIterator<Item = f64>,
{
    let a = normalizer(n, mode)?;
    let mut values = Vec::with_capacity(n as usize + 1);
    values.push(0.0);
    let mut s = CompensatedSum::new();
    let mut it = increments.into_iter();
    for _ in 0..n {
        let v = it.next().ok_or_else(|| Error::InsufficientData(format!("increment stream shorter than {n}")))?;
        s.add(v);
        values.push(s.value() / a);
    }
    Ok(PathSample { n, mode, values })
}

/// A straight piece of a flow trajectory: duration plus the integral of the
/// observable over any sub-interval of `[0, duration]`.
pub trait Flight {
    fn duration(&self) -> f64;
    fn integral(&self, from: f64, to: f64) -> f64;
    /// Whether the flight ends on the return base (closing an excursion).
    fn closes_excursion(&self) -> bool {
        false
    }
}

/// Flight over which the observable is constant.
#[derive(Debug, Clone, Copy)]
pub struct ConstantFlight {
    pub duration: f64,
    pub value: f64,
    pub closes: bool,
}

impl Flight for ConstantFlight {
    fn duration(&self) -> f64 {
        self.duration
    }
    fn integral(&self, from: f64, to: f64) -> f64 {
        self.value * (to - from)
    }
    fn closes_excursion(&self) -> bool {
        self.closes
    }
}

/// Flow mode: `W_n(j/n) = a_n^{-1} v_j` with `v_t = int_0^t v(g_s) ds`, the
/// last flight integrated exactly up to each grid time.
pub fn flow_path_process<I, F>(flights: I, n: u64, mode: NormMode) -> Result<PathSample>
where
    I: IntoIterator<Item = F>,
    F: Flight,
{
    let a = normalizer(n, mode)?;
    let mut values = Vec::with_capacity(n as usize + 1);
    values.push(0.0);
    let mut acc = FlowAccumulator::new();
    for fl in flights {
        acc.push(&fl, |_, v| values.push(v / a), n);
        if values.len() as u64 > n {
            return Ok(PathSample { n, mode, values });
        }
    }
    Err(Error::InsufficientData(format!("flights cover less than time {n}")))
}

/// Streaming integration of a flow observable along consecutive flights.
///
/// Integer times `1, 2, ...` are reported through a callback. Completed
/// excursions and the current partial excursion are tracked separately so
/// that `v_t = V_{N_t} + Q(g_t) - Q` can be checked against the direct sum.
#[derive(Debug, Clone, Copy)]
pub struct FlowAccumulator {
    time: f64,
    total: CompensatedSum,
    completed: CompensatedSum,
    partial: CompensatedSum,
    next_grid: u64,
    laps: u64,
    max_telescoping_error: f64,
}

impl Default for FlowAccumulator {
    fn default() -> Self {
        Self::new()
    }
}

impl FlowAccumulator {
    pub fn new() -> Self {
        Self {
            time: 0.0,
            total: CompensatedSum::new(),
            completed: CompensatedSum::new(),
            partial: CompensatedSum::new(),
            next_grid: 1,
            laps: 0,
            max_telescoping_error: 0.0,
        }
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn laps(&self) -> u64 {
        self.laps
    }

    pub fn max_telescoping_error(&self) -> f64 {
        self.max_telescoping_error
    }

    /// Consume one flight, reporting `(j, v_j)` for every grid time
    /// `j <= limit` it crosses.
    pub fn push<F: Flight + ?Sized>(&mut self, fl: &F, mut report: impl FnMut(u64, f64), limit: u64) {
        let dur = fl.duration();
        let end = self.time + dur;
        while self.next_grid <= limit && (self.next_grid as f64) <= end {
            let local = (self.next_grid as f64 - self.time).clamp(0.0, dur);
            let part = fl.integral(0.0, local);
            let direct = self.total.value() + part;
            let tele = self.completed.value() + (self.partial.value() + part);
            let err = (direct - tele).abs();
            if err > self.max_telescoping_error {
                self.max_telescoping_error = err;
            }
            report(self.next_grid, direct);
            self.next_grid += 1;
        }
        let whole = fl.integral(0.0, dur);
        self.total.add(whole);
        self.partial.add(whole);
        if fl.closes_excursion() {
            self.completed.add(self.partial.value());
            self.partial = CompensatedSum::new();
            self.laps += 1;
        }
        self.time = end;
    }
}

/// Partial-sum state captured at one step index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mark {
    pub index: u64,
    pub sum: f64,
    /// `max_{j <= index} S_j` (including `S_0 = 0`).
    pub max_sum: f64,
    pub max_abs_sum: f64,
    pub returns: u64,
}

/// Streams increments of one long orbit and keeps the partial-sum state at
/// a sorted set of step indices, so that `W_n(t)` for every `n` of a nested
/// grid can be read off one pass without storing the path.
#[derive(Debug, Clone)]
pub struct PrefixRecorder {
    marks: Vec<u64>,
    next: usize,
    step: u64,
    sum: CompensatedSum,
    max_sum: f64,
    max_abs_sum: f64,
    returns: u64,
    pub records: Vec<Mark>,
}

impl PrefixRecorder {
    pub fn new(mut marks: Vec<u64>) -> Self {
        marks.sort_unstable();
        marks.dedup();
        marks.retain(|&m| m > 0);
        Self {
            records: Vec::with_capacity(marks.len()),
            marks,
            next: 0,
            step: 0,
            sum: CompensatedSum::new(),
            max_sum: 0.0,
            max_abs_sum: 0.0,
            returns: 0,
        }
    }

    /// Marks for `W_n(t)` at each `t` in `fractions` and each `n` in `grid`.
    pub fn for_grid(grid: &[u64], fractions: &[f64]) -> Self {
        Self::new(grid.iter().flat_map(|&n| fractions.iter().map(move |&t| (t * n as f64).round() as u64)).collect())
    }

    pub fn with_extra(mut self, extra: impl IntoIterator<Item = u64>) -> Self {
        let mut all = std::mem::take(&mut self.marks);
        all.extend(extra);
        Self::new(all)
    }

    pub fn last_mark(&self) -> u64 {
        self.marks.last().copied().unwrap_or(0)
    }

    pub fn is_done(&self) -> bool {
        self.next >= self.marks.len()
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    #[inline]
    pub fn push(&mut self, increment: f64, is_return: bool) {
        self.sum.add(increment);
        self.returns += u64::from(is_return);
        self.advance(self.sum.value());
    }

    /// Flow mode: the cumulative integral at the next integer time.
    #[inline]
    pub fn push_cumulative(&mut self, cumulative: f64, laps: u64) {
        self.returns = laps;
        self.advance(cumulative);
    }

    #[inline]
    fn advance(&mut self, s: f64) {
        self.step += 1;
        if s > self.max_sum {
            self.max_sum = s;
        }
        if s.abs() > self.max_abs_sum {
            self.max_abs_sum = s.abs();
        }
        if self.next < self.marks.len() && self.marks[self.next] == self.step {
            self.records.push(Mark {
                index: self.step,
                sum: s,
                max_sum: self.max_sum,
                max_abs_sum: self.max_abs_sum,
                returns: self.returns,
            });
            self.next += 1;
        }
    }

    pub fn mark(&self, index: u64) -> Option<&Mark> {
        self.records.binary_search_by_key(&index, |m| m.index).ok().map(|i| &self.records[i])
    }
}

/// Summary of `W_n` read from recorded marks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrefixStats {
    pub n: u64,
    /// `W_n(t)` at the requested fractions.
    pub snapshots: Vec<f64>,
    pub sup: f64,
    /// `a_n^{-1} max_{j <= n} |S_j|`.
    pub max_partial: f64,
    pub returns: u64,
}

pub fn prefix_stats(rec: &PrefixRecorder, n: u64, mode: NormMode, fractions: &[f64]) -> Result<PrefixStats> {
    let a = normalizer(n, mode)?;
    let missing = || Error::InsufficientData(format!("no record at step {n}"));
    let end = rec.mark(n).ok_or_else(missing)?;
    let snapshots = fractions
        .iter()
        .map(|&t| {
            let j = (t * n as f64).round() as u64;
            if j == 0 {
                Ok(0.0)
            } else {
                rec.mark(j).map(|m| m.sum / a).ok_or_else(missing)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PrefixStats { n, snapshots, sup: end.max_sum / a, max_partial: end.max_abs_sum / a, returns: end.returns })
}

/// `sup_t |W_n(shifted) - W_n|` for the path started one step later, and
/// the bound `2 a_n^{-1} max_{j <= n} |increment_j|`.
pub fn shift_difference(increments: &[f64], n: u64, mode: NormMode) -> Result<(f64, f64)> {
    if (increments.len() as u64) < n + 1 {
        return Err(Error::InsufficientData("shift check needs n + 1 increments".into()));
    }
    let n_us = n as usize;
    let a = path_process(increments[..n_us].iter().copied(), n, mode)?;
    let b = path_process(increments[1..=n_us].iter().copied(), n, mode)?;
    let diff = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let max_inc = increments[..=n_us].iter().map(|v| v.abs()).fold(0.0, f64::max);
    Ok((diff, 2.0 * max_inc / normalizer(n, mode)?))
}

/// Piecewise-constant part `K = c_i R` on cell `i` and residual exponent
/// `delta` for `V = K + H`, `|H| <= C (slide + R^{1-delta})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InducedDecomposition {
    pub coefficients: Vec<f64>,
    pub delta: f64,
    pub quantile: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecompositionSample {
    pub r: u64,
    pub v: f64,
    pub cell: usize,
    /// Extra allowance added to `R^{1-delta}` (slide count for the stadium).
    pub slide: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub samples: usize,
    pub fitted_c: f64,
    pub max_ratio: f64,
    pub top_bin_max_ratio: f64,
    pub top_bin_min_r: u64,
    pub max_abs_residual: f64,
    pub pass: bool,
}

/// Fit `C` as the configured quantile of `|V - K| / (slide + R^{1-delta})`
/// and check that the largest returns respect it: the top 0.1% of samples by
/// `R` may not exceed the fitted constant.
pub fn decomposition_check(
    samples: &[DecompositionSample],
    decomp: &InducedDecomposition,
) -> Result<DecompositionReport> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    let expo = 1.0 - decomp.delta;
    let mut ratios = Vec::with_capacity(samples.len());
    let mut max_res: f64 = 0.0;
    for s in samples {
        let c = *decomp
            .coefficients
            .get(s.cell)
            .ok_or_else(|| Error::InvalidParameter(format!("no coefficient for cell {}", s.cell)))?;
        let res = (s.v - c * s.r as f64).abs();
        max_res = max_res.max(res);
        ratios.push((s.r, res / (s.slide as f64 + (s.r as f64).powf(expo))));
    }
    let mut sorted: Vec<f64> = ratios.iter().map(|p| p.1).collect();
    sorted.sort_by(f64::total_cmp);
    let qi = ((decomp.quantile * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1;
    let fitted_c = sorted[qi];
    let max_ratio = *sorted.last().unwrap();

    ratios.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let top = (ratios.len() / 1000).max(1);
    let top_slice = &ratios[ratios.len() - top..];
    let top_bin_max_ratio = top_slice.iter().map(|p| p.1).fold(0.0, f64::max);
    Ok(DecompositionReport {
        samples: samples.len(),
        fitted_c,
        max_ratio,
        top_bin_max_ratio,
        top_bin_min_r: top_slice[0].0,
        max_abs_residual: max_res,
        // exact decompositions leave only rounding noise
        pass: top_bin_max_ratio <= fitted_c || max_res <= 1e-12 * top_slice[top - 1].0 as f64,
    })
}
