//! Synthetic countable-alphabet Gibbs-Markov chain with a heavy-tailed
//! observable whose tail constant, transfer operator and truncated moments
//! are all exactly computable.
//!
//! Symbols are `(k, sign)` for `1 <= k <= K`. The stationary law is
//! `pi_{k,+-} = k^-3 / (2 zeta_3(K))` and transitions are
//! `P(a -> b) = pi_b (1 + eps g(a) h(b))` with `g = h = sign`. The observable
//! is `V(k, +-) = +- scale k`, so `mu(|V| > x) ~ sigma^2 x^-2` with
//! `sigma^2 = scale^2 / (2 zeta_3(K))`.
//!
//! Under this kernel the magnitudes `k` are i.i.d. and the signs form a
//! two-state chain that keeps its sign with probability `(1 + eps) / 2`.

use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{pairwise_sum, CompensatedSum};

/// Head of the magnitude alias table; the remaining mass (~1e-8) goes
/// through a second table so that the hot path stays in cache.
const HEAD: usize = 4096;

/// `zeta(3)` to double precision.
pub const ZETA3: f64 = 1.202_056_903_159_594_3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Symbol {
    pub k: u32,
    pub positive: bool,
}

impl Symbol {
    #[inline]
    pub fn sign(self) -> f64 {
        if self.positive {
            1.0
        } else {
            -1.0
        }
    }

    #[inline]
    pub fn index(self) -> usize {
        2 * (self.k as usize - 1) + usize::from(!self.positive)
    }

    #[inline]
    pub fn from_index(i: usize) -> Self {
        Symbol { k: (i / 2 + 1) as u32, positive: i.is_multiple_of(2) }
    }
}

/// A function of the first symbol, stored over the truncated alphabet.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolFunction {
    pub values: Vec<f64>,
}

impl SymbolFunction {
    #[inline]
    pub fn at(&self, s: Symbol) -> f64 {
        self.values[s.index()]
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn zip_with(&self, other: &SymbolFunction, f: impl Fn(f64, f64) -> f64) -> SymbolFunction {
        SymbolFunction { values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect() }
    }

    pub fn product(&self, other: &SymbolFunction) -> SymbolFunction {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn add(&self, other: &SymbolFunction) -> SymbolFunction {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn scaled(&self, c: f64) -> SymbolFunction {
        SymbolFunction { values: self.values.iter().map(|v| c * v).collect() }
    }
}

/// Function of two consecutive symbols in separable form
/// `w(a, b) = sum_i f_i(a) g_i(b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairFunction {
    pub terms: Vec<(SymbolFunction, SymbolFunction)>,
}

impl PairFunction {
    #[inline]
    pub fn at(&self, a: Symbol, b: Symbol) -> f64 {
        let (ia, ib) = (a.index(), b.index());
        self.terms.iter().map(|(f, g)| f.values[ia] * g.values[ib]).sum()
    }

    pub fn product(&self, other: &PairFunction) -> PairFunction {
        let mut terms = Vec::with_capacity(self.terms.len() * other.terms.len());
        for (f, g) in &self.terms {
            for (f2, g2) in &other.terms {
                terms.push((f.product(f2), g.product(g2)));
            }
        }
        PairFunction { terms }.merged()
    }

    /// Combine terms sharing an identical factor, so that powers of a
    /// two-term function stay small on a large alphabet.
    pub fn merged(self) -> PairFunction {
        fn pass(terms: Vec<(SymbolFunction, SymbolFunction)>, left: bool) -> Vec<(SymbolFunction, SymbolFunction)> {
            let mut out: Vec<(SymbolFunction, SymbolFunction)> = Vec::with_capacity(terms.len());
            for (f, g) in terms {
                let (key, other) = if left { (&f, &g) } else { (&g, &f) };
                let hit = out.iter_mut().find(|(a, b)| if left { a == key } else { b == key });
                match hit {
                    Some((a, b)) => {
                        let acc = if left { b } else { a };
                        *acc = acc.add(other);
                    }
                    None => out.push((f, g)),
                }
            }
            out
        }
        PairFunction { terms: pass(pass(self.terms, true), false) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GmParams {
    pub k_max: u32,
    pub eps: f64,
    /// Target tail constant; `None` keeps the unscaled observable `+-k`.
    pub sigma2: Option<f64>,
}

impl Default for GmParams {
    fn default() -> Self {
        Self { k_max: 1_000_000, eps: 0.5, sigma2: None }
    }
}

#[derive(Debug, Clone)]
pub struct CountableMarkovModel {
    pub k_max: u32,
    pub eps: f64,
    pub scale: f64,
    /// `zeta_3(K)`.
    pub zeta3: f64,
    /// Law of the magnitude: `p_k = k^-3 / zeta_3(K)`, indexed by `k - 1`.
    magnitude: Vec<f64>,
}

pub fn build_model(k_max: u32, eps: f64, target_sigma2: Option<f64>) -> Result<CountableMarkovModel> {
    if k_max < 100 {
        return Err(Error::InvalidParameter(format!("K_max must be >= 100, got {k_max}")));
    }
    if !(0.0..=0.9).contains(&eps) {
        return Err(Error::InvalidParameter(format!("eps must lie in [0, 0.9], got {eps}")));
    }
    // sum smallest terms first
    let zeta3: f64 = (1..=k_max).rev().map(|k| (k as f64).powi(-3)).collect::<CompensatedSum>().value();
    let magnitude = (1..=k_max).map(|k| (k as f64).powi(-3) / zeta3).collect();
    let scale = match target_sigma2 {
        None => 1.0,
        Some(s2) if s2 > 0.0 && s2.is_finite() => (2.0 * zeta3 * s2).sqrt(),
        Some(s2) => return Err(Error::InvalidParameter(format!("target sigma^2 must be > 0, got {s2}"))),
    };
    Ok(CountableMarkovModel { k_max, eps, scale, zeta3, magnitude })
}

impl CountableMarkovModel {
    pub fn from_params(p: &GmParams) -> Result<Self> {
        build_model(p.k_max, p.eps, p.sigma2)
    }

    pub fn alphabet_len(&self) -> usize {
        2 * self.k_max as usize
    }

    /// Tail constant `lim x^2 mu(|V| > x)` of the (untruncated-alphabet)
    /// observable.
    pub fn sigma2(&self) -> f64 {
        self.scale * self.scale / (2.0 * self.zeta3)
    }

    #[inline]
    pub fn pi(&self, s: Symbol) -> f64 {
        0.5 * self.magnitude[s.k as usize - 1]
    }

    #[inline]
    pub fn transition(&self, a: Symbol, b: Symbol) -> f64 {
        self.pi(b) * (1.0 + self.eps * a.sign() * b.sign())
    }

    #[inline]
    pub fn observable(&self, s: Symbol) -> f64 {
        s.sign() * self.scale * s.k as f64
    }

    pub fn tabulate(&self, mut f: impl FnMut(Symbol) -> f64) -> SymbolFunction {
        SymbolFunction { values: (0..self.alphabet_len()).map(|i| f(Symbol::from_index(i))).collect() }
    }

    pub fn observable_fn(&self) -> SymbolFunction {
        self.tabulate(|s| self.observable(s))
    }

    /// `int u dmu`, small symbols last so the tail is summed first.
    pub fn integral(&self, u: &SymbolFunction) -> f64 {
        let terms: Vec<f64> =
            (0..self.alphabet_len()).rev().map(|i| self.pi(Symbol::from_index(i)) * u.values[i]).collect();
        pairwise_sum(&terms)
    }

    fn sign_moment(&self, u: &SymbolFunction) -> f64 {
        let terms: Vec<f64> = (0..self.alphabet_len())
            .rev()
            .map(|i| {
                let s = Symbol::from_index(i);
                self.pi(s) * s.sign() * u.values[i]
            })
            .collect();
        pairwise_sum(&terms)
    }

    /// `(Lu)(b) = sum_a pi_a P(a -> b) u(a) / pi_b = int u + eps h(b) int g u`.
    pub fn transfer_apply(&self, u: &SymbolFunction) -> SymbolFunction {
        let m0 = self.integral(u);
        let m1 = self.sign_moment(u);
        self.tabulate(|b| m0 + self.eps * b.sign() * m1)
    }

    /// `(Pw)(a) = sum_b P(a -> b) w(b) = int w + eps g(a) int h w`.
    pub fn forward_apply(&self, w: &SymbolFunction) -> SymbolFunction {
        self.transfer_apply(w)
    }

    /// Transfer operator on pair functions: a function of the next symbol.
    pub fn transfer_apply_pair(&self, w: &PairFunction) -> SymbolFunction {
        let mut out = SymbolFunction { values: vec![0.0; self.alphabet_len()] };
        for (f, g) in &w.terms {
            let lf = self.transfer_apply(f);
            for (o, (x, y)) in out.values.iter_mut().zip(lf.values.iter().zip(&g.values)) {
                *o += x * y;
            }
        }
        out
    }

    /// `rho(a) = sum_i f_i(a) (P g_i)(a)`, so that
    /// `E[w(x_0, x_1) u(x_0)] = int rho u dmu`.
    pub fn pair_marginal(&self, w: &PairFunction) -> SymbolFunction {
        let mut out = SymbolFunction { values: vec![0.0; self.alphabet_len()] };
        for (f, g) in &w.terms {
            let pg = self.forward_apply(g);
            for (o, (x, y)) in out.values.iter_mut().zip(f.values.iter().zip(&pg.values)) {
                *o += x * y;
            }
        }
        out
    }

    /// `E[w(x_0, x_1)]` under the stationary pair law.
    pub fn pair_expectation(&self, w: &PairFunction) -> f64 {
        self.integral(&self.pair_marginal(w))
    }

    pub fn sampler(&self) -> Result<GmSampler> {
        GmSampler::new(self)
    }
}

/// Truncation level `q_n = (n ln ln n)^{1/2}`.
pub fn truncation_level(n: u64) -> Result<f64> {
    if n < 16 {
        return Err(Error::InvalidParameter(format!("truncation needs n >= 16, got {n}")));
    }
    let nf = n as f64;
    Ok((nf * nf.ln().ln()).sqrt())
}

#[derive(Debug, Clone)]
pub struct MartingaleDecomposition {
    pub n: u64,
    pub q_n: f64,
    /// Centred truncated observable `V_n`.
    pub v_n: SymbolFunction,
    /// `chi_n = sum_{j >= 1} L^j V_n`.
    pub chi: SymbolFunction,
    /// `m_n(a, b) = V_n(a) + chi_n(a) - chi_n(b)`.
    pub m: PairFunction,
    pub series_terms: usize,
}

impl MartingaleDecomposition {
    #[inline]
    pub fn v_n_at(&self, a: Symbol) -> f64 {
        self.v_n.at(a)
    }

    #[inline]
    pub fn m_at(&self, a: Symbol, b: Symbol) -> f64 {
        let (ia, ib) = (a.index(), b.index());
        self.v_n.values[ia] + self.chi.values[ia] - self.chi.values[ib]
    }

    #[inline]
    pub fn chi_at(&self, a: Symbol) -> f64 {
        self.chi.at(a)
    }
}

const SERIES_TOL: f64 = 1e-14;
const SERIES_MAX: usize = 1000;

pub fn martingale_decompose(model: &CountableMarkovModel, n: u64) -> Result<MartingaleDecomposition> {
    let q_n = truncation_level(n)?;
    let trunc = model.tabulate(|s| {
        let v = model.observable(s);
        if v.abs() <= q_n {
            v
        } else {
            0.0
        }
    });
    let mean = model.integral(&trunc);
    let v_n = SymbolFunction { values: trunc.values.iter().map(|v| v - mean).collect() };

    let mut chi = SymbolFunction { values: vec![0.0; model.alphabet_len()] };
    let mut term = model.transfer_apply(&v_n);
    let mut series_terms = 0;
    loop {
        if term.sup_norm() <= SERIES_TOL {
            break;
        }
        if series_terms >= SERIES_MAX {
            return Err(Error::NoDecay(SERIES_MAX));
        }
        chi = chi.add(&term);
        series_terms += 1;
        term = model.transfer_apply(&term);
    }
    let one = model.tabulate(|_| 1.0);
    let m = PairFunction { terms: vec![(v_n.add(&chi), one.clone()), (one, chi.scaled(-1.0))] };
    Ok(MartingaleDecomposition { n, q_n, v_n, chi, m, series_terms })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub n: u64,
    pub q_n: f64,
    pub chi_sup: f64,
    pub m2: f64,
    pub m4: f64,
    pub m2_over_ln_n: f64,
    /// `|m_n|_2^2 / (sigma^2 ln n)`.
    pub m2_ratio: f64,
    /// `|L m_n|_inf`.
    pub kernel_residual: f64,
    /// `int m^2 (m^2 o F^j) - (int m^2)^2`, `j = 1..=20`.
    pub profile: Vec<f64>,
    pub fitted_gamma: f64,
    pub geometric_decay: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub sigma2: f64,
    pub eps: f64,
    pub rows: Vec<MomentRow>,
    /// `max_n |chi_n|_inf / min_n |chi_n|_inf` (1 when all vanish).
    pub chi_ratio: f64,
}

const PROFILE_LAGS: usize = 20;

pub fn moment_report(model: &CountableMarkovModel, n_grid: &[u64]) -> Result<MomentReport> {
    let mut rows = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let d = martingale_decompose(model, n)?;
        let m2f = d.m.product(&d.m);
        let m2 = model.pair_expectation(&m2f);
        let m4 = model.pair_expectation(&m2f.product(&m2f));
        let kernel_residual = model.transfer_apply_pair(&d.m).sup_norm();

        let rho = model.pair_marginal(&m2f);
        let mut lw = model.transfer_apply_pair(&m2f);
        let mut profile = Vec::with_capacity(PROFILE_LAGS);
        for j in 1..=PROFILE_LAGS {
            if j > 1 {
                lw = model.transfer_apply(&lw);
            }
            profile.push(model.integral(&lw.product(&rho)) - m2 * m2);
        }
        let (fitted_gamma, geometric_decay) = geometric_fit(&profile, 1e-12 * m2 * m2);
        let ln_n = (n as f64).ln();
        rows.push(MomentRow {
            n,
            q_n: d.q_n,
            chi_sup: d.chi.sup_norm(),
            m2,
            m4,
            m2_over_ln_n: m2 / ln_n,
            m2_ratio: m2 / (model.sigma2() * ln_n),
            kernel_residual,
            profile,
            fitted_gamma,
            geometric_decay,
        });
    }
    let sups: Vec<f64> = rows.iter().map(|r| r.chi_sup).collect();
    let max = sups.iter().copied().fold(0.0, f64::max);
    let min = sups.iter().copied().fold(f64::INFINITY, f64::min);
    let chi_ratio = if max == 0.0 { 1.0 } else { max / min };
    Ok(MomentReport { sigma2: model.sigma2(), eps: model.eps, rows, chi_ratio })
}

/// Fit `|p_j| ~ C gamma^j` on the resolved part of the profile and check
/// every successive ratio against `gamma + 0.1`.
/// Entries below `floor` are round-off and count as zero.
fn geometric_fit(profile: &[f64], floor: f64) -> (f64, bool) {
    let scale = profile.iter().fold(0.0f64, |m, p| m.max(p.abs()));
    if scale <= floor {
        return (0.0, true);
    }
    let resolved: Vec<(f64, f64)> = profile
        .iter()
        .enumerate()
        .take_while(|(_, p)| p.abs() > 1e-11 * scale)
        .map(|(j, p)| ((j + 1) as f64, p.abs().ln()))
        .collect();
    if resolved.len() < 2 {
        // decays below resolution within a single step
        return (0.0, true);
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = resolved.iter().copied().unzip();
    let (slope, _) = crate::numeric::linear_fit(&xs, &ys);
    let gamma = slope.exp();
    let ok = gamma < 1.0 && resolved.windows(2).all(|w| (w[1].1 - w[0].1).exp() <= gamma + 0.1);
    (gamma, ok)
}

/// Stationary sampler: magnitudes through a two-level alias table, signs
/// through the lumped two-state chain.
#[derive(Debug, Clone)]
pub struct GmSampler {
    head: WeightedAliasIndex<f64>,
    tail: Option<WeightedAliasIndex<f64>>,
    head_len: usize,
    stay: f64,
}

impl GmSampler {
    pub fn new(model: &CountableMarkovModel) -> Result<Self> {
        let k = model.k_max as usize;
        let head_len = k.min(HEAD);
        let mut head_w: Vec<f64> = model.magnitude[..head_len].to_vec();
        let tail = if k > head_len {
            let tail_w: Vec<f64> = model.magnitude[head_len..].to_vec();
            head_w.push(tail_w.iter().rev().sum());
            Some(WeightedAliasIndex::new(tail_w).map_err(|e| Error::InvalidParameter(e.to_string()))?)
        } else {
            None
        };
        let head = WeightedAliasIndex::new(head_w).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        Ok(Self { head, tail, head_len, stay: 0.5 * (1.0 + model.eps) })
    }

    #[inline]
    pub fn magnitude<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let i = self.head.sample(rng);
        if i < self.head_len {
            i as u32 + 1
        } else {
            let j = self.tail.as_ref().expect("tail table").sample(rng);
            (self.head_len + j) as u32 + 1
        }
    }

    #[inline]
    pub fn first<R: Rng + ?Sized>(&self, rng: &mut R) -> Symbol {
        let positive = rng.random::<bool>();
        Symbol { k: self.magnitude(rng), positive }
    }

    #[inline]
    pub fn next<R: Rng + ?Sized>(&self, prev: Symbol, rng: &mut R) -> Symbol {
        let stay = rng.random::<f64>() < self.stay;
        Symbol { k: self.magnitude(rng), positive: prev.positive == stay }
    }
}

/// Stationary path of length `n`.
pub fn sample_path<R: Rng + ?Sized>(sampler: &GmSampler, rng: &mut R, n: usize) -> Vec<Symbol> {
    let mut out = Vec::with_capacity(n);
    if n == 0 {
        return out;
    }
    let mut s = sampler.first(rng);
    out.push(s);
    for _ in 1..n {
        s = sampler.next(s, rng);
        out.push(s);
    }
    out
}

/// A dense finite chain, used as an independent oracle for the structured
/// operators above.
#[derive(Debug, Clone)]
pub struct FiniteChain {
    pub pi: Vec<f64>,
    pub p: Vec<Vec<f64>>,
}

impl FiniteChain {
    /// Reversed-kernel transfer operator `(Lu)(b) = sum_a pi_a P_ab u_a / pi_b`.
    pub fn transfer_apply(&self, u: &[f64]) -> Vec<f64> {
        (0..self.pi.len())
            .map(|b| (0..self.pi.len()).map(|a| self.pi[a] * self.p[a][b] * u[a]).sum::<f64>() / self.pi[b])
            .collect()
    }

    pub fn integral(&self, u: &[f64]) -> f64 {
        self.pi.iter().zip(u).map(|(p, x)| p * x).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_stream;

    fn small(eps: f64) -> CountableMarkovModel {
        build_model(200, eps, None).unwrap()
    }

    #[test]
    fn two_state_example() {
        let c = FiniteChain { pi: vec![5.0 / 6.0, 1.0 / 6.0], p: vec![vec![0.9, 0.1], vec![0.5, 0.5]] };
        let lu = c.transfer_apply(&[1.0, -1.0]);
        assert!((lu[0] - 0.8).abs() < 1e-15 && lu[1].abs() < 1e-15);
        assert!((c.integral(&lu) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn model_is_stationary() {
        let m = small(0.7);
        let total: f64 = (0..m.alphabet_len()).map(|i| m.pi(Symbol::from_index(i))).sum();
        assert!((total - 1.0).abs() < 1e-14);
        let n = m.alphabet_len();
        let mut l1 = 0.0;
        for ib in 0..n {
            let b = Symbol::from_index(ib);
            let s: f64 = (0..n)
                .map(|ia| {
                    let a = Symbol::from_index(ia);
                    m.pi(a) * m.transition(a, b)
                })
                .sum();
            l1 += (s - m.pi(b)).abs();
        }
        assert!(l1 <= 1e-14);
        for ia in [0, 1, 7, n - 1] {
            let a = Symbol::from_index(ia);
            let row: f64 = (0..n).map(|ib| m.transition(a, Symbol::from_index(ib))).sum();
            assert!((row - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn default_sigma2() {
        let m = build_model(1_000_000, 0.5, None).unwrap();
        assert!((m.sigma2() - 0.415_953_686_29).abs() < 1e-10);
        assert!((m.zeta3 - ZETA3).abs() < 1e-12);
        let scaled = build_model(1000, 0.5, Some(2.0)).unwrap();
        assert!((scaled.sigma2() - 2.0).abs() < 1e-14);
        assert!(build_model(99, 0.1, None).is_err());
        assert!(build_model(1000, 0.95, None).is_err());
    }

    #[test]
    fn structured_transfer_matches_dense() {
        let m = small(0.5);
        let n = m.alphabet_len();
        let chain = FiniteChain {
            pi: (0..n).map(|i| m.pi(Symbol::from_index(i))).collect(),
            p: (0..n)
                .map(|a| (0..n).map(|b| m.transition(Symbol::from_index(a), Symbol::from_index(b))).collect())
                .collect(),
        };
        let mut rng = rng_stream(11, 0);
        for _ in 0..10 {
            let u = m.tabulate(|_| rng.random::<f64>() - 0.3);
            let w = m.tabulate(|_| rng.random::<f64>() * 2.0 - 1.0);
            let lu = m.transfer_apply(&u);
            let dense = chain.transfer_apply(&u.values);
            for (a, b) in lu.values.iter().zip(&dense) {
                assert!((a - b).abs() < 1e-12);
            }
            // duality: int (Lu) w = sum_{a,b} pi_a P_ab u_a w_b
            let lhs = m.integral(&lu.product(&w));
            let mut rhs = 0.0;
            for a in 0..n {
                for b in 0..n {
                    rhs += chain.pi[a] * chain.p[a][b] * u.values[a] * w.values[b];
                }
            }
            assert!((lhs - rhs).abs() <= 1e-12);
        }
    }

    #[test]
    fn iid_transfer_kills_centred_functions() {
        let m = small(0.0);
        let v = m.observable_fn();
        assert!(m.transfer_apply(&v).sup_norm() < 1e-15);
        let d = martingale_decompose(&m, 1000).unwrap();
        assert_eq!(d.chi.sup_norm(), 0.0);
        assert_eq!(d.series_terms, 0);
        let a = Symbol { k: 3, positive: false };
        let b = Symbol { k: 9, positive: true };
        assert_eq!(d.m_at(a, b), d.v_n_at(a));
    }

    #[test]
    fn truncation_level_value() {
        assert!((truncation_level(10_000).unwrap() - 149.007_61).abs() < 1e-4);
        assert!(truncation_level(15).is_err());
    }

    #[test]
    fn decomposition_identities() {
        let m = small(0.5);
        let d = martingale_decompose(&m, 10_000).unwrap();
        // closed form chi = eps/(1-eps) E[|V|; |V| <= q] h
        let c0: f64 = (1..=149u32).map(|k| m.magnitude[k as usize - 1] * k as f64).sum();
        let a = Symbol { k: 5, positive: true };
        assert!((d.chi_at(a) - c0).abs() < 1e-12);
        assert!(m.transfer_apply_pair(&d.m).sup_norm() < 1e-12);
        let mut rng = rng_stream(5, 0);
        let sampler = m.sampler().unwrap();
        let path = sample_path(&sampler, &mut rng, 10_001);
        for w in path.windows(2) {
            let lhs = d.v_n_at(w[0]);
            let rhs = d.m_at(w[0], w[1]) + d.chi_at(w[1]) - d.chi_at(w[0]);
            assert!((lhs - rhs).abs() <= 1e-12);
        }
    }

    #[test]
    fn iid_second_moment_is_truncated_sum() {
        let m = build_model(100_000, 0.0, None).unwrap();
        let rep = moment_report(&m, &[1_000_000]).unwrap();
        // q_n = 1620.4...
        let h: f64 = (1..=1620).map(|k| 1.0 / k as f64).sum();
        assert!((rep.rows[0].q_n - 1620.4).abs() < 0.1);
        assert!((rep.rows[0].m2 - h / m.zeta3).abs() < 1e-12);
        assert!(rep.rows[0].profile.iter().all(|p| p.abs() < 1e-12));
    }

    #[test]
    fn merged_powers_stay_small_and_exact() {
        let m = CountableMarkovModel::from_params(&GmParams { k_max: 200, eps: 0.3, sigma2: None }).unwrap();
        let d = martingale_decompose(&m, 10_000).unwrap();
        let m2 = d.m.product(&d.m);
        let m4 = m2.product(&m2);
        assert!(m2.terms.len() <= 3 && m4.terms.len() <= 7, "{} {}", m2.terms.len(), m4.terms.len());
        for (a, b) in [(3usize, 7usize), (0, 1), (250, 9)] {
            let (sa, sb) = (Symbol::from_index(a), Symbol::from_index(b));
            let v = d.m_at(sa, sb);
            assert!((m4.at(sa, sb) - v.powi(4)).abs() <= 1e-9 * v.powi(4).max(1.0));
        }
    }

    #[test]
    fn dependent_profile_decays() {
        let m = build_model(2000, 0.5, None).unwrap();
        let rep = moment_report(&m, &[100, 10_000]).unwrap();
        for row in &rep.rows {
            assert!(row.geometric_decay, "{row:?}");
            assert!(row.kernel_residual < 1e-12);
            assert!(row.fitted_gamma < 1.0);
        }
        assert!(rep.chi_ratio < 3.0);
    }

    #[test]
    fn pair_expectation_matches_sampling() {
        let m = small(0.5);
        let d = martingale_decompose(&m, 100).unwrap();
        let exact = m.pair_expectation(&d.m.product(&d.m));
        let sampler = m.sampler().unwrap();
        let mut rng = rng_stream(17, 0);
        let path = sample_path(&sampler, &mut rng, 400_001);
        let est: f64 = path.windows(2).map(|w| d.m_at(w[0], w[1]).powi(2)).sum::<f64>() / 400_000.0;
        assert!((est - exact).abs() < 0.05 * exact, "{est} vs {exact}");
    }

    #[test]
    fn sampler_reproducible_and_sign_correlated() {
        let m = small(0.5);
        let s = m.sampler().unwrap();
        let a = sample_path(&s, &mut rng_stream(1, 2), 1000);
        let b = sample_path(&s, &mut rng_stream(1, 2), 1000);
        assert_eq!(a, b);
        let n = 200_000;
        let p = sample_path(&s, &mut rng_stream(2, 0), n);
        let r: f64 = p.windows(2).map(|w| w[0].sign() * w[1].sign()).sum::<f64>() / (n - 1) as f64;
        let se = ((1.0 - 0.25) / n as f64).sqrt();
        assert!((r - 0.5).abs() < 4.0 * se, "{r}");
    }

    #[test]
    fn two_level_alias_reaches_tail() {
        let m = build_model(10_000, 0.0, None).unwrap();
        let s = m.sampler().unwrap();
        let mut rng = rng_stream(3, 0);
        let n = 2_000_000u32;
        let mut tail = 0u32;
        let mut ones = 0u32;
        for _ in 0..n {
            let k = s.magnitude(&mut rng);
            assert!((1..=10_000).contains(&k));
            if k as usize > HEAD {
                tail += 1;
            }
            if k == 1 {
                ones += 1;
            }
        }
        let p1 = 1.0 / m.zeta3;
        let se = (p1 * (1.0 - p1) / n as f64).sqrt();
        assert!(((ones as f64 / n as f64) - p1).abs() < 4.0 * se);
        // P(k > 4096) ~ 2.5e-8: almost never, but the table must exist
        assert!(tail < 5);
        assert!(s.tail.is_some());
    }
}
