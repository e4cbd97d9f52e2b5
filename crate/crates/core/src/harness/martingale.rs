//! The `gm-martingale` experiment: exact moments of the martingale part of
//! the truncated observable, pathwise cohomology, and the concentration of
//! normalised quadratic variations.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::Resolved;
use super::engine::Engine;
use super::report::{num, Artifacts, Bound, Check};
use super::{Handle, STREAM_COHOMOLOGY, STREAM_LEMMA};
use crate::error::Result;
use crate::gibbs_markov::{martingale_decompose, moment_report, MartingaleDecomposition, MomentReport, PairFunction};
use crate::numeric::{mean, sample_variance};
use crate::rng::rng_stream;

const COHOMOLOGY_TRANSITIONS: usize = 10_000;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LemmaPath {
    /// `a_n^-2 sum_{j<n} m_n^2(x_j, x_{j+1})` per grid point.
    pub x: Vec<f64>,
    /// Whether some `|V(x_j)|, j < n`, exceeded `q_n`.
    pub exceeded: Vec<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LemmaRow {
    pub n: u64,
    pub q_n: f64,
    pub mean: f64,
    pub variance: f64,
    /// `E (X_n - sigma^2)^2`.
    pub second_moment: f64,
    pub discard_fraction: f64,
    /// `discard_fraction * ln ln n`.
    pub discard_constant: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MartingaleSummary {
    pub moments: MomentReport,
    pub cohomology_max_error: Vec<(u64, f64)>,
    pub lemma_paths: usize,
    pub lemma: Vec<LemmaRow>,
    pub discard_ratio: Option<f64>,
}

fn lean(mut d: MartingaleDecomposition) -> MartingaleDecomposition {
    d.m = PairFunction { terms: Vec::new() };
    d
}

pub(crate) fn run(
    res: &Resolved,
    h: &Handle,
    eng: &mut Engine,
    art: &mut Artifacts,
    counters: &mut BTreeMap<String, u64>,
) -> Result<(serde_json::Value, Vec<Check>)> {
    let Handle::Gm { model, sampler } = h else {
        unreachable!("gm-martingale is resolved against the gibbs-markov system")
    };
    let t = &res.tolerances;
    let sigma2 = model.sigma2();
    let moments = moment_report(model, &res.n_grid)?;

    let mut cohomology = Vec::with_capacity(res.n_grid.len());
    for &n in &res.n_grid {
        let d = lean(martingale_decompose(model, n)?);
        let mut rng = rng_stream(res.seed, STREAM_COHOMOLOGY);
        let mut a = sampler.first(&mut rng);
        let mut worst = 0.0f64;
        for _ in 0..COHOMOLOGY_TRANSITIONS {
            let b = sampler.next(a, &mut rng);
            let lhs = d.v_n_at(a);
            let rhs = d.m_at(a, b) + d.chi_at(b) - d.chi_at(a);
            worst = worst.max((lhs - rhs).abs());
            a = b;
        }
        cohomology.push((n, worst));
    }

    let decomps: Vec<MartingaleDecomposition> =
        res.lemma_grid.iter().map(|&n| martingale_decompose(model, n).map(lean)).collect::<Result<_>>()?;
    let lemma_max = *res.lemma_grid.last().unwrap();
    let paths = eng.run_phase("lemma", res.lemma_paths as usize, |i| {
        let mut rng = rng_stream(res.seed, STREAM_LEMMA + i as u64);
        let mut sums = vec![0.0; decomps.len()];
        let mut exceeded = vec![false; decomps.len()];
        let mut a = sampler.first(&mut rng);
        for j in 0..lemma_max {
            let b = sampler.next(a, &mut rng);
            let v = model.observable(a).abs();
            for (k, d) in decomps.iter().enumerate() {
                if j < d.n {
                    let m = d.m_at(a, b);
                    sums[k] += m * m;
                    exceeded[k] |= v > d.q_n;
                }
            }
            a = b;
        }
        let x = decomps.iter().zip(&sums).map(|(d, s)| s / (d.n as f64 * (d.n as f64).ln())).collect();
        Ok(LemmaPath { x, exceeded })
    })?;
    counters.insert("lemma_paths".into(), paths.len() as u64);
    counters.insert("lemma_steps".into(), paths.len() as u64 * lemma_max);

    let lemma: Vec<LemmaRow> = decomps
        .iter()
        .enumerate()
        .map(|(k, d)| {
            let xs: Vec<f64> = paths.iter().map(|p| p.x[k]).collect();
            let frac = paths.iter().filter(|p| p.exceeded[k]).count() as f64 / paths.len() as f64;
            LemmaRow {
                n: d.n,
                q_n: d.q_n,
                mean: mean(&xs),
                variance: if xs.len() > 1 { sample_variance(&xs) } else { f64::NAN },
                second_moment: xs.iter().map(|x| (x - sigma2).powi(2)).sum::<f64>() / xs.len() as f64,
                discard_fraction: frac,
                discard_constant: frac * (d.n as f64).ln().ln(),
            }
        })
        .collect();
    let consts: Vec<f64> = lemma.iter().map(|r| r.discard_constant).collect();
    let discard_ratio = consts
        .iter()
        .all(|c| *c > 0.0)
        .then(|| consts.iter().copied().fold(0.0, f64::max) / consts.iter().copied().fold(f64::INFINITY, f64::min));

    let mut checks = vec![
        Check::new("chi_ratio", moments.chi_ratio, Bound::AtMost { limit: t.chi_ratio }),
        Check::new(
            "m2_rel_error",
            (moments.rows.last().unwrap().m2_ratio - 1.0).abs(),
            Bound::AtMost { limit: t.m2_rel },
        ),
        Check::new(
            "kernel_residual",
            moments.rows.iter().map(|r| r.kernel_residual).fold(0.0, f64::max),
            Bound::AtMost { limit: t.kernel_residual },
        ),
        Check::holds("profile_geometric_decay", moments.rows.iter().all(|r| r.geometric_decay)),
        Check::new(
            "cohomology",
            cohomology.iter().map(|c| c.1).fold(0.0, f64::max),
            Bound::AtMost { limit: t.cohomology },
        ),
    ];
    let vars: Vec<f64> = lemma.iter().map(|r| r.variance).collect();
    if vars.len() >= 2 && paths.len() >= 2 {
        checks.push(Check::holds("lemma_variance_decreasing", vars.windows(2).all(|w| w[1] < w[0])));
    } else {
        checks.push(Check::skipped(
            "lemma_variance_decreasing",
            f64::NAN,
            Bound::Holds,
            "needs >= 2 grid points and paths",
        ));
    }
    let last_var = *vars.last().unwrap();
    if paths.len() >= 2 {
        checks.push(
            Check::new("lemma_variance", last_var / (sigma2 * sigma2), Bound::AtMost { limit: t.lemma_var })
                .with_note("Var(X_n) / sigma^4 at the largest n"),
        );
    } else {
        checks.push(Check::skipped(
            "lemma_variance",
            f64::NAN,
            Bound::AtMost { limit: t.lemma_var },
            "needs >= 2 paths",
        ));
    }
    let ratio_bound = Bound::AtMost { limit: t.discard_ratio };
    match discard_ratio {
        Some(r) if lemma.len() >= 2 => checks.push(Check::new("discard_ratio", r, ratio_bound)),
        _ => {
            checks.push(Check::skipped("discard_ratio", f64::NAN, ratio_bound, "needs >= 2 grid points with discards"))
        }
    }

    art.csv(
        "moments.csv",
        &[
            "n",
            "q_n",
            "chi_sup",
            "m2",
            "m4",
            "m2_over_ln_n",
            "m2_ratio",
            "kernel_residual",
            "fitted_gamma",
            "geometric_decay",
        ],
        moments.rows.iter().map(|r| {
            vec![
                r.n.to_string(),
                num(r.q_n),
                num(r.chi_sup),
                num(r.m2),
                num(r.m4),
                num(r.m2_over_ln_n),
                num(r.m2_ratio),
                num(r.kernel_residual),
                num(r.fitted_gamma),
                r.geometric_decay.to_string(),
            ]
        }),
    )?;
    art.csv(
        "profile.csv",
        &["n", "j", "value"],
        moments.rows.iter().flat_map(|r| {
            r.profile.iter().enumerate().map(move |(j, p)| vec![r.n.to_string(), (j + 1).to_string(), num(*p)])
        }),
    )?;
    art.csv(
        "lemma.csv",
        &["n", "path_id", "X", "exceeded"],
        lemma.iter().enumerate().flat_map(|(k, row)| {
            paths
                .iter()
                .enumerate()
                .map(move |(i, p)| vec![row.n.to_string(), i.to_string(), num(p.x[k]), p.exceeded[k].to_string()])
        }),
    )?;

    let summary =
        MartingaleSummary { moments, cohomology_max_error: cohomology, lemma_paths: paths.len(), lemma, discard_ratio };
    Ok((serde_json::to_value(&summary)?, checks))
}
