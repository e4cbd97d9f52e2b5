//! The `stadium-geom` experiment: closed periodic orbits, the reflection
//! law, invariance of the Liouville measure and boundary averages.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::Resolved;
use super::engine::Engine;
use super::report::{num, Artifacts, Bound, Check};
use super::{Handle, STREAM_GEOMETRY};
use crate::error::Result;
use crate::rng::rng_stream;
use crate::stadium::{
    boundary_averages, liouville_sample, next_collision, CollisionState, Component, FlowObservableSpec,
    StadiumGeometry, Vec2,
};

const BOUNCES: usize = 1000;
const SPECULAR_COLLISIONS: usize = 100_000;
const BLOCK: u64 = 10_000;
/// Histogram resolution of the probability-integral transforms.
const BINS: usize = 8192;
const CLOSED_FORM_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Block {
    /// Histograms of `F(s)` and `F(psi)` before and after the push-forward.
    pub s0: Vec<u32>,
    pub psi0: Vec<u32>,
    pub s1: Vec<u32>,
    pub psi1: Vec<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeometrySummary {
    pub length: f64,
    pub closure_error: f64,
    pub specular_residual: f64,
    pub samples: u64,
    pub collisions: u64,
    pub ks_initial_s: f64,
    pub ks_initial_psi: f64,
    pub ks_pushed_s: f64,
    pub ks_pushed_psi: f64,
    pub ks_resolution: f64,
    pub i_v: f64,
    pub j_v: Option<f64>,
    /// `J` of the constant flow observable 1 (twice the vertical flight).
    pub j_one: f64,
}

fn dot(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn dist(a: Vec2, b: Vec2) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Worst positional drift of period-2 orbits after an even number of bounces.
fn closure_error(geom: &StadiumGeometry) -> Result<f64> {
    let l = geom.length();
    let mut starts: Vec<CollisionState> =
        (1..10).map(|k| CollisionState::new(Component::S1, l * k as f64 / 10.0, 0.0)).collect();
    starts.push(CollisionState::new(Component::C1, 0.0, 0.0));
    let mut worst = 0.0f64;
    for s0 in starts {
        let mut s = s0;
        for _ in 0..BOUNCES {
            s = next_collision(geom, &s)?.0;
        }
        worst = worst.max(dist(geom.position(&s), geom.position(&s0)));
    }
    Ok(worst)
}

/// Worst violation of the reflection law along a Liouville orbit.
fn specular_residual(geom: &StadiumGeometry, seed: u64) -> Result<f64> {
    let mut rng = rng_stream(seed, STREAM_GEOMETRY);
    let mut s = liouville_sample(geom, &mut rng);
    let mut worst = 0.0f64;
    for _ in 0..SPECULAR_COLLISIONS {
        let d_in = geom.direction(&s);
        let (next, _) = next_collision(geom, &s)?;
        let (n, t) = geom.frame(next.component, next.arc);
        let d_out = geom.direction(&next);
        worst = worst.max((dot(d_in, n) + dot(d_out, n)).abs()).max((dot(d_in, t) - dot(d_out, t)).abs());
        s = next;
    }
    Ok(worst)
}

fn bin(u: f64) -> usize {
    ((u * BINS as f64) as usize).min(BINS - 1)
}

fn transforms(geom: &StadiumGeometry, s: &CollisionState) -> (usize, usize) {
    (bin(geom.arc_length(s) / geom.perimeter()), bin(0.5 * (1.0 + s.psi.sin())))
}

/// KS distance to the uniform law, evaluated at the bin edges.
fn ks_uniform(hists: &[&Vec<u32>]) -> f64 {
    let total: u64 = hists.iter().flat_map(|h| h.iter()).map(|&c| c as u64).sum();
    let mut cum = 0u64;
    let mut worst = 0.0f64;
    for b in 0..BINS {
        cum += hists.iter().map(|h| h[b] as u64).sum::<u64>();
        let edge = (b + 1) as f64 / BINS as f64;
        worst = worst.max((cum as f64 / total as f64 - edge).abs());
    }
    worst
}

pub(crate) fn run(
    res: &Resolved,
    h: &Handle,
    eng: &mut Engine,
    art: &mut Artifacts,
    counters: &mut BTreeMap<String, u64>,
) -> Result<(serde_json::Value, Vec<Check>)> {
    let Handle::Stadium { geom, section, i_v, j_v, .. } = h else {
        unreachable!("stadium-geom is resolved against the stadium")
    };
    let t = &res.tolerances;
    let closure = closure_error(geom)?;
    let specular = specular_residual(geom, res.seed)?;

    let blocks = res.samples.div_ceil(BLOCK);
    let parts = eng.run_phase("liouville", blocks as usize, |b| {
        let size = BLOCK.min(res.samples - b as u64 * BLOCK);
        let mut rng = rng_stream(res.seed, STREAM_GEOMETRY + 1 + b as u64);
        let mut out = Block { s0: vec![0; BINS], psi0: vec![0; BINS], s1: vec![0; BINS], psi1: vec![0; BINS] };
        for _ in 0..size {
            let mut s = liouville_sample(geom, &mut rng);
            let (a, p) = transforms(geom, &s);
            out.s0[a] += 1;
            out.psi0[p] += 1;
            for _ in 0..res.collisions {
                s = next_collision(geom, &s)?.0;
            }
            let (a, p) = transforms(geom, &s);
            out.s1[a] += 1;
            out.psi1[p] += 1;
        }
        Ok(out)
    })?;
    let pick = |f: fn(&Block) -> &Vec<u32>| ks_uniform(&parts.iter().map(f).collect::<Vec<_>>());
    let j_one = boundary_averages(geom, section, &FlowObservableSpec::Constant { value: 1.0 })?.1;
    let summary = GeometrySummary {
        length: geom.length(),
        closure_error: closure,
        specular_residual: specular,
        samples: res.samples,
        collisions: res.collisions,
        ks_initial_s: pick(|b| &b.s0),
        ks_initial_psi: pick(|b| &b.psi0),
        ks_pushed_s: pick(|b| &b.s1),
        ks_pushed_psi: pick(|b| &b.psi1),
        ks_resolution: 1.0 / BINS as f64,
        i_v: *i_v,
        j_v: *j_v,
        j_one,
    };
    counters.insert("liouville_samples".into(), res.samples);
    counters.insert("collisions".into(), res.samples * res.collisions);

    let floor = 1.36 / (res.samples as f64).sqrt();
    let checks = vec![
        Check::new("period_two_closure", closure, Bound::AtMost { limit: t.closure }),
        Check::new("specular_residual", specular, Bound::AtMost { limit: t.specular }),
        Check::resolved("sampler_psi_ks", summary.ks_initial_psi, t.psi_ks, floor),
        Check::resolved("liouville_ks_s", summary.ks_pushed_s, t.liouville_ks, floor),
        Check::resolved("liouville_ks_psi", summary.ks_pushed_psi, t.liouville_ks, floor),
        Check::new("flight_average_constant", (j_one - 2.0).abs(), Bound::AtMost { limit: CLOSED_FORM_TOL }),
    ];

    let hist_rows = (0..BINS).map(|b| {
        let c = |f: fn(&Block) -> &Vec<u32>| parts.iter().map(|p| f(p)[b] as u64).sum::<u64>().to_string();
        vec![num((b as f64 + 0.5) / BINS as f64), c(|p| &p.s0), c(|p| &p.psi0), c(|p| &p.s1), c(|p| &p.psi1)]
    });
    art.csv("liouville.csv", &["u", "s_initial", "psi_initial", "s_pushed", "psi_pushed"], hist_rows)?;
    Ok((serde_json::to_value(&summary)?, checks))
}
