//! Intermittent interval maps, trigonometric observables and Birkhoff sums.
//!
//! All arithmetic is binary64. Orbits that enter the laminar region near a
//! neutral fixed point drift by roughly `x^(1 + 1/alpha)` per step, so they
//! lose relative precision only slowly; no extended precision is used.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{pairwise_sum, CompensatedSum};
use crate::rng::{open01, rng_stream};

const ONE_THIRD: f64 = 1.0 / 3.0;
const TWO_THIRDS: f64 = 2.0 / 3.0;
const SQRT3: f64 = 1.732_050_807_568_877_2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MapSystem {
    /// Liverani-Saussol-Vaienti map with neutral fixed point at 0.
    Lsv { alpha: f64 },
    /// Two neutral fixed points at 0 and 1 with a linear middle branch.
    DoubleNeutral,
    /// `x + b x^{3/2} mod 1`, restricted to `b` in [1, 2].
    Afn { b: f64 },
}

impl MapSystem {
    pub fn lsv(alpha: f64) -> Result<Self> {
        let s = MapSystem::Lsv { alpha };
        s.validate()?;
        Ok(s)
    }

    pub fn afn(b: f64) -> Result<Self> {
        let s = MapSystem::Afn { b };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            MapSystem::Lsv { alpha } if !(alpha.is_finite() && alpha > 1.0) => {
                Err(Error::InvalidParameter(format!("LSV alpha must be > 1, got {alpha}")))
            }
            MapSystem::Afn { b } if !(1.0..=2.0).contains(&b) => {
                Err(Error::InvalidParameter(format!("AFN b must lie in [1, 2], got {b}")))
            }
            _ => Ok(()),
        }
    }

    /// Unchecked branch evaluation; callers guarantee `x` in [0, 1].
    #[inline]
    pub fn step(&self, x: f64) -> f64 {
        match *self {
            MapSystem::Lsv { alpha } => {
                if x < 0.5 {
                    let y = if alpha == 2.0 {
                        x * (1.0 + std::f64::consts::SQRT_2 * x.sqrt())
                    } else {
                        let e = 1.0 / alpha;
                        x * (1.0 + 2f64.powf(e) * x.powf(e))
                    };
                    y.min(1.0)
                } else {
                    2.0 * x - 1.0
                }
            }
            MapSystem::DoubleNeutral => {
                if x < ONE_THIRD {
                    (x * (1.0 + SQRT3 * x.sqrt())).min(1.0)
                } else if x < TWO_THIRDS {
                    3.0 * x - 1.0
                } else {
                    let w = 1.0 - x;
                    (1.0 - w * (1.0 + SQRT3 * w.sqrt())).max(0.0)
                }
            }
            MapSystem::Afn { b } => {
                let y = x + b * x * x.sqrt();
                y - y.floor()
            }
        }
    }

    /// The interval `Y` used for first returns.
    pub fn return_base(&self) -> (f64, f64) {
        match *self {
            MapSystem::Lsv { .. } => (0.5, 1.0),
            MapSystem::DoubleNeutral => (ONE_THIRD, TWO_THIRDS),
            MapSystem::Afn { b } => (afn_base_point(b), 1.0),
        }
    }

    #[inline]
    pub fn in_base(&self, x: f64) -> bool {
        match *self {
            MapSystem::Lsv { .. } => x >= 0.5,
            MapSystem::DoubleNeutral => (ONE_THIRD..TWO_THIRDS).contains(&x),
            MapSystem::Afn { .. } => {
                let (lo, _) = self.return_base();
                x >= lo
            }
        }
    }
}

/// Largest `y0 < 1` with `y0 + b y0^{3/2}` an integer.
fn afn_base_point(b: f64) -> f64 {
    let target = (1.0 + b).ceil() - 1.0;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid + b * mid * mid.sqrt() < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Validated single step.
pub fn map_step(system: &MapSystem, x: f64) -> Result<f64> {
    system.validate()?;
    if !x.is_finite() {
        return Err(Error::NonFinite(x));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::OutOfDomain(x));
    }
    Ok(system.step(x))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub mean: f64,
    pub std_error: f64,
    pub iterations: u64,
    pub burn_in: u64,
    pub chains: u64,
    pub seed: u64,
}

impl Calibration {
    /// Centering error budget for experiments up to length `n_max`.
    pub fn budget(n_max: u64) -> f64 {
        let n = n_max as f64;
        0.1 * (n.ln() / n).sqrt()
    }

    pub fn within_budget(&self, n_max: u64) -> bool {
        self.std_error <= Self::budget(n_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Centering {
    None,
    /// Mean known in closed form (e.g. by symmetry).
    Exact {
        mean: f64,
    },
    Calibrated(Calibration),
}

impl Centering {
    pub fn offset(&self) -> f64 {
        match self {
            Centering::None => 0.0,
            Centering::Exact { mean } => *mean,
            Centering::Calibrated(c) => c.mean,
        }
    }
}

/// `c0 + sum_k a_k cos(k pi x) + b_k sin(k pi x)` minus a centering constant.
///
/// The base frequency is `pi` so that `cos(pi x)` (odd under `x -> 1 - x`)
/// and `cos(2 pi x)` are both in the family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableSpec {
    pub constant: f64,
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
    pub centering: Centering,
}

impl ObservableSpec {
    pub fn constant(c: f64) -> Self {
        Self { constant: c, cos: vec![], sin: vec![], centering: Centering::None }
    }

    /// `cos(k pi x)`.
    pub fn cos_mode(k: usize) -> Self {
        let mut cos = vec![0.0; k];
        cos[k - 1] = 1.0;
        Self { constant: 0.0, cos, sin: vec![], centering: Centering::None }
    }

    /// `sin(k pi x)`.
    pub fn sin_mode(k: usize) -> Self {
        let mut sin = vec![0.0; k];
        sin[k - 1] = 1.0;
        Self { constant: 0.0, cos: vec![], sin, centering: Centering::None }
    }

    pub fn with_centering(mut self, centering: Centering) -> Self {
        self.centering = centering;
        self
    }

    pub fn uncentered(&self) -> Self {
        Self { centering: Centering::None, ..self.clone() }
    }

    #[inline]
    pub fn raw(&self, x: f64) -> f64 {
        let mut acc = self.constant;
        let order = self.cos.len().max(self.sin.len());
        if order == 0 {
            return acc;
        }
        let (s1, c1) = (PI * x).sin_cos();
        // Chebyshev-style recurrence for cos(k t), sin(k t)
        let (mut cp, mut sp) = (1.0, 0.0);
        let (mut ck, mut sk) = (c1, s1);
        for k in 0..order {
            if let Some(a) = self.cos.get(k) {
                acc += a * ck;
            }
            if let Some(b) = self.sin.get(k) {
                acc += b * sk;
            }
            let cn = 2.0 * c1 * ck - cp;
            let sn = 2.0 * c1 * sk - sp;
            cp = ck;
            sp = sk;
            ck = cn;
            sk = sn;
        }
        acc
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.raw(x) - self.centering.offset()
    }

    /// Raw value at 0.
    pub fn at_zero(&self) -> f64 {
        self.constant + self.cos.iter().sum::<f64>()
    }

    /// Raw value at 1.
    pub fn at_one(&self) -> f64 {
        self.constant + self.cos.iter().enumerate().map(|(k, a)| if k % 2 == 0 { -a } else { *a }).sum::<f64>()
    }
}

/// Validated evaluation of the centred observable.
pub fn observable_eval(obs: &ObservableSpec, x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::NonFinite(x));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::OutOfDomain(x));
    }
    Ok(obs.eval(x))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BirkhoffResult {
    pub final_point: f64,
    pub sum: f64,
    pub max_abs_partial: f64,
}

/// Resumable Birkhoff accumulator; advancing in chunks is bitwise identical
/// to advancing in one call.
#[derive(Debug, Clone, Copy)]
pub struct BirkhoffState {
    pub x: f64,
    sum: CompensatedSum,
    max_abs: f64,
    pub steps: u64,
}

impl BirkhoffState {
    pub fn new(x0: f64) -> Self {
        Self { x: x0, sum: CompensatedSum::new(), max_abs: 0.0, steps: 0 }
    }

    #[inline]
    pub fn advance(&mut self, system: &MapSystem, obs: &ObservableSpec, n: u64) {
        for _ in 0..n {
            self.sum.add(obs.eval(self.x));
            let p = self.sum.value().abs();
            if p > self.max_abs {
                self.max_abs = p;
            }
            self.x = system.step(self.x);
        }
        self.steps += n;
    }

    pub fn sum(&self) -> f64 {
        self.sum.value()
    }

    pub fn result(&self) -> BirkhoffResult {
        BirkhoffResult { final_point: self.x, sum: self.sum(), max_abs_partial: self.max_abs }
    }
}

pub fn orbit_birkhoff(system: &MapSystem, obs: &ObservableSpec, x0: f64, n: u64) -> Result<BirkhoffResult> {
    if n == 0 {
        return Err(Error::InvalidParameter("orbit length must be >= 1".into()));
    }
    map_step(system, x0)?;
    let mut st = BirkhoffState::new(x0);
    st.advance(system, obs, n);
    Ok(st.result())
}

/// One calibration chain: Lebesgue-uniform start on `stream`, `burn_in`
/// discarded steps, then the mean of the uncentred observable over
/// `iterations` steps.
pub fn calibration_chain(
    system: &MapSystem,
    obs: &ObservableSpec,
    iterations: u64,
    burn_in: u64,
    seed: u64,
    stream: u64,
) -> f64 {
    let raw = obs.uncentered();
    let mut rng = rng_stream(seed, stream);
    let mut x = open01(&mut rng);
    for _ in 0..burn_in {
        x = system.step(x);
    }
    let mut st = BirkhoffState::new(x);
    st.advance(system, &raw, iterations);
    st.sum() / iterations as f64
}

impl Calibration {
    /// Combine chain means; the standard error is their spread.
    pub fn from_chain_means(means: &[f64], per_chain: u64, burn_in: u64, seed: u64) -> Result<Self> {
        if means.len() < 2 {
            return Err(Error::InsufficientData("calibration needs >= 2 chains".into()));
        }
        let chains = means.len() as u64;
        let var = crate::numeric::sample_variance(means);
        Ok(Calibration {
            mean: pairwise_sum(means) / chains as f64,
            std_error: (var / chains as f64).sqrt(),
            iterations: per_chain * chains,
            burn_in,
            chains,
            seed,
        })
    }
}

/// Estimate the invariant mean of `obs` by independent long ergodic chains;
/// chain `i` uses stream `i`.
pub fn calibrate(
    system: &MapSystem,
    obs: &ObservableSpec,
    iterations: u64,
    burn_in: u64,
    chains: u64,
    seed: u64,
) -> Result<Calibration> {
    system.validate()?;
    if chains < 2 || iterations < chains {
        return Err(Error::InvalidParameter("calibration needs >= 2 chains and iterations >= chains".into()));
    }
    let per_chain = iterations / chains;
    let means: Vec<f64> =
        (0..chains).into_par_iter().map(|i| calibration_chain(system, obs, per_chain, burn_in, seed, i)).collect();
    Calibration::from_chain_means(&means, per_chain, burn_in, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lsv2() -> MapSystem {
        MapSystem::lsv(2.0).unwrap()
    }

    #[test]
    fn lsv_examples() {
        let f = lsv2();
        assert!((map_step(&f, 0.25).unwrap() - 0.426_776_695_296_636_9).abs() < 1e-12);
        assert_eq!(map_step(&f, 0.75).unwrap(), 0.5);
        assert_eq!(map_step(&f, 0.0).unwrap(), 0.0);
        assert_eq!(map_step(&MapSystem::lsv(3.7).unwrap(), 0.0).unwrap(), 0.0);
    }

    #[test]
    fn general_alpha_matches_sqrt_path() {
        // alpha = 2 through the powf branch
        let x: f64 = 0.3;
        let via_pow = x * (1.0 + 2f64.powf(0.5) * x.powf(0.5));
        assert!((lsv2().step(x) - via_pow).abs() < 1e-15);
    }

    #[test]
    fn afn_and_double_neutral_examples() {
        let g = MapSystem::afn(1.5).unwrap();
        assert!((map_step(&g, 0.25).unwrap() - 0.4375).abs() < 1e-15);
        assert_eq!(map_step(&g, 0.0).unwrap(), 0.0);
        let h = MapSystem::DoubleNeutral;
        assert!((map_step(&h, 0.9).unwrap() - 0.845_227_744_249_483_3).abs() < 1e-12);
    }

    #[test]
    fn afn_reduces_images_above_two() {
        // 1 + 1.8 = 2.8 before reduction
        let g = MapSystem::afn(1.8).unwrap();
        let y = g.step(1.0);
        assert!((y - 0.8).abs() < 1e-12, "{y}");
    }

    #[test]
    fn afn_base_point_maps_to_zero() {
        for b in [1.0, 1.3, 1.5, 2.0] {
            let (y0, _) = MapSystem::Afn { b }.return_base();
            let img = y0 + b * y0.powf(1.5);
            assert!((img - img.round()).abs() < 1e-12);
            assert!(y0 < 1.0 && y0 > 0.0);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(map_step(&lsv2(), f64::NAN), Err(Error::NonFinite(_))));
        assert!(matches!(map_step(&lsv2(), 1.5), Err(Error::OutOfDomain(_))));
        assert!(MapSystem::lsv(1.0).is_err());
        assert!(MapSystem::afn(2.5).is_err());
        assert!(MapSystem::afn(0.5).is_err());
    }

    #[test]
    fn lsv_left_branch_reaches_one() {
        let y = lsv2().step(0.5 - 1e-12);
        assert!(y > 1.0 - 5e-12 && y < 1.0, "{y}");
    }

    #[test]
    fn neutral_drift_law() {
        let f = lsv2();
        let mut last_err = f64::INFINITY;
        for k in 3..=9 {
            let x = 10f64.powi(-k);
            let ratio = (f.step(x) - x) / x.powf(1.5);
            let err = (ratio / std::f64::consts::SQRT_2 - 1.0).abs();
            last_err = err;
        }
        assert!(last_err <= 1e-2);
    }

    #[test]
    fn double_neutral_symmetry() {
        let f = MapSystem::DoubleNeutral;
        let n = 10_000;
        for i in 0..n {
            let x = (i as f64 + 0.5) / n as f64;
            let d = f.step(1.0 - x) - (1.0 - f.step(x));
            assert!(d.abs() <= 1e-14, "x = {x}, d = {d}");
        }
        assert_eq!(f.step(0.0), 0.0);
        assert_eq!(f.step(1.0), 1.0);
        assert!((f.step(0.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn observable_boundary_values() {
        let c2 = ObservableSpec::cos_mode(2);
        assert!((observable_eval(&c2, 0.0).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(c2.at_zero(), 1.0);
        assert_eq!(c2.at_one(), 1.0);
        let s2 = ObservableSpec::sin_mode(2);
        assert!(observable_eval(&s2, 0.0).unwrap().abs() < 1e-15);
        let c1 = ObservableSpec::cos_mode(1);
        assert_eq!(c1.at_zero(), 1.0);
        assert_eq!(c1.at_one(), -1.0);
    }

    #[test]
    fn recurrence_matches_direct_trig() {
        let obs = ObservableSpec {
            constant: 0.3,
            cos: vec![0.5, -1.0, 0.25, 2.0],
            sin: vec![1.5, 0.0, -0.75],
            centering: Centering::Exact { mean: 0.1 },
        };
        for i in 0..=100 {
            let x = i as f64 / 100.0;
            let mut direct = 0.3 - 0.1;
            for (k, a) in obs.cos.iter().enumerate() {
                direct += a * ((k + 1) as f64 * PI * x).cos();
            }
            for (k, b) in obs.sin.iter().enumerate() {
                direct += b * ((k + 1) as f64 * PI * x).sin();
            }
            assert!((obs.eval(x) - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn cos_pi_is_odd_about_half() {
        let v = ObservableSpec::cos_mode(1);
        for i in 0..=50 {
            let x = i as f64 / 50.0;
            assert!((v.raw(1.0 - x) + v.raw(x)).abs() < 1e-14);
        }
    }

    #[test]
    fn birkhoff_trivial_cases() {
        let one = ObservableSpec::constant(1.0);
        let r = orbit_birkhoff(&lsv2(), &one, 0.3, 100).unwrap();
        assert_eq!(r.sum, 100.0);
        assert_eq!(r.max_abs_partial, 100.0);
        let v = ObservableSpec::cos_mode(2);
        let r = orbit_birkhoff(&lsv2(), &v, 0.0, 500).unwrap();
        assert_eq!(r.final_point, 0.0);
        assert_eq!(r.sum, 500.0 * v.at_zero());
        assert!(orbit_birkhoff(&lsv2(), &v, 0.3, 0).is_err());
    }

    #[test]
    fn birkhoff_matches_naive_oracle() {
        let f = lsv2();
        let v = ObservableSpec::cos_mode(2).with_centering(Centering::Exact { mean: 0.2 });
        let mut rng = rng_stream(5, 0);
        for _ in 0..50 {
            let x0 = open01(&mut rng);
            let r = orbit_birkhoff(&f, &v, x0, 1000).unwrap();
            let mut x = x0;
            let mut naive = 0.0;
            let mut max_abs: f64 = 0.0;
            for _ in 0..1000 {
                naive += (2.0 * PI * x).cos() - 0.2;
                max_abs = max_abs.max(naive.abs());
                x = f.step(x);
            }
            assert_eq!(r.final_point, x);
            assert!((r.sum - naive).abs() <= 1e-12 * 1000.0_f64.max(naive.abs()));
            assert!((r.max_abs_partial - max_abs).abs() <= 1e-9);
        }
    }

    #[test]
    fn calibration_of_symmetric_observable() {
        let c = calibrate(&MapSystem::DoubleNeutral, &ObservableSpec::cos_mode(1), 400_000, 1000, 8, 3).unwrap();
        assert!(c.mean.abs() < 10.0 * c.std_error.max(1e-3), "{c:?}");
        assert_eq!(c.iterations, 400_000);
    }

    proptest! {
        #[test]
        fn chunking_is_bitwise_invariant(x0 in 0.0f64..1.0, split in 1u64..999) {
            let f = lsv2();
            let v = ObservableSpec::cos_mode(2);
            let mut a = BirkhoffState::new(x0);
            a.advance(&f, &v, 1000);
            let mut b = BirkhoffState::new(x0);
            b.advance(&f, &v, split);
            b.advance(&f, &v, 1000 - split);
            prop_assert_eq!(a.result(), b.result());
        }

        #[test]
        fn maps_stay_in_unit_interval(x in 0.0f64..=1.0, b in 1.0f64..=2.0) {
            for sys in [lsv2(), MapSystem::DoubleNeutral, MapSystem::Afn { b }] {
                let y = sys.step(x);
                prop_assert!((0.0..=1.0).contains(&y), "{:?} {} -> {}", sys, x, y);
            }
        }
    }
}
