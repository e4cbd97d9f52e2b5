//! Library routines against naive step-by-step oracles on randomised cases;
//! each function panics on the first mismatch.

use rand::Rng;
use wipsim::dynamics::{MapSystem, ObservableSpec};
use wipsim::inducing::{induced_sum, lap_number, map_first_return, max_partial_sum};
use wipsim::numeric::CompensatedSum;
use wipsim::rng::{open01, rng_stream};
use wipsim::stadium::{
    first_return, liouville_sample, next_collision, CollisionState, SectionObservableSpec, StadiumGeometry,
};

pub const CASES: usize = 1000;

fn random_system<R: Rng>(rng: &mut R) -> MapSystem {
    match rng.random_range(0..3) {
        0 => MapSystem::lsv(1.5 + 1.5 * open01(rng)).unwrap(),
        1 => MapSystem::DoubleNeutral,
        _ => MapSystem::afn(1.0 + open01(rng)).unwrap(),
    }
}

fn random_observable<R: Rng>(rng: &mut R) -> ObservableSpec {
    let cos = (0..rng.random_range(0..4)).map(|_| 2.0 * open01(rng) - 1.0).collect();
    let sin = (0..rng.random_range(0..4)).map(|_| 2.0 * open01(rng) - 1.0).collect();
    ObservableSpec { constant: open01(rng) - 0.5, cos, sin, centering: wipsim::dynamics::Centering::None }
}

fn orbit_values(system: &MapSystem, obs: &ObservableSpec, y: f64, r: u64) -> Vec<f64> {
    let mut xs = vec![y];
    for _ in 1..r {
        let last = *xs.last().unwrap();
        xs.push(system.step(last));
    }
    xs.truncate(r as usize);
    xs.iter().map(|&x| obs.eval(x)).collect()
}

fn compensated(values: &[f64]) -> f64 {
    let mut s = CompensatedSum::new();
    values.iter().for_each(|&v| s.add(v));
    s.value()
}

pub fn induced_sum_matches_oracle() {
    let mut rng = rng_stream(101, 0);
    for _ in 0..CASES {
        let (f, v) = (random_system(&mut rng), random_observable(&mut rng));
        let (y, r) = (open01(&mut rng), rng.random_range(0..400u64));
        assert_eq!(induced_sum(&f, &v, y, r), compensated(&orbit_values(&f, &v, y, r)));
    }
}

pub fn max_partial_sum_matches_oracle() {
    let mut rng = rng_stream(102, 0);
    for _ in 0..CASES {
        let (f, v) = (random_system(&mut rng), random_observable(&mut rng));
        let (y, r) = (open01(&mut rng), rng.random_range(0..200u64));
        let values = orbit_values(&f, &v, y, r);
        // every prefix summed from scratch
        let oracle = (0..=values.len()).map(|l| compensated(&values[..l]).abs()).fold(0.0, f64::max);
        assert_eq!(max_partial_sum(&f, &v, y, r), oracle);
    }
}

pub fn map_first_return_matches_oracle() {
    let mut rng = rng_stream(103, 0);
    for _ in 0..CASES {
        let (f, v) = (random_system(&mut rng), random_observable(&mut rng));
        let (lo, hi) = f.return_base();
        let y = lo + (hi - lo) * open01(&mut rng);
        let got = map_first_return(&f, &v, y).unwrap();
        let mut x = y;
        let mut r = 0u64;
        loop {
            x = f.step(x);
            r += 1;
            let inside = match f {
                MapSystem::DoubleNeutral => x >= lo && x < hi,
                _ => x >= lo,
            };
            if inside {
                break;
            }
        }
        assert_eq!((got.r, got.end), (r, x));
        let values = orbit_values(&f, &v, y, r);
        assert_eq!(got.v, compensated(&values));
        assert_eq!(
            got.max_abs_partial,
            (1..=values.len()).map(|l| compensated(&values[..l]).abs()).fold(0.0, f64::max)
        );
    }
}

pub fn lap_number_matches_oracle() {
    let mut rng = rng_stream(104, 0);
    for _ in 0..CASES {
        let len = rng.random_range(1..60usize);
        let roofs: Vec<f64> = (0..len).map(|_| 0.01 + 3.0 * open01(&mut rng)).collect();
        let total = compensated(&roofs);
        let u = open01(&mut rng) * roofs[0];
        let t = open01(&mut rng) * (total - u) * 0.999;
        let oracle = (0..=len).filter(|&n| compensated(&roofs[..n]) <= u + t).max().unwrap();
        assert_eq!(lap_number(&roofs, u, t).unwrap(), oracle);
    }
}

pub fn stadium_first_return_matches_oracle() {
    let mut rng = rng_stream(105, 0);
    let obs = SectionObservableSpec::SegmentBalanced;
    for case in 0..CASES {
        let g = StadiumGeometry::new(0.5 + 4.0 * open01(&mut rng)).unwrap();
        let y = loop {
            let s = liouville_sample(&g, &mut rng);
            if s.in_return_set() {
                break s;
            }
        };
        let got = first_return(&g, &y, &obs).unwrap();
        let mut states: Vec<CollisionState> = vec![y];
        let end = loop {
            let (next, _) = next_collision(&g, states.last().unwrap()).unwrap();
            if next.component.is_cap() && next.prev != Some(next.component) {
                break next;
            }
            states.push(next);
        };
        let slides = states[1..].iter().filter(|s| s.component == y.component).count() as u64;
        let segs = states[1..].iter().filter(|s| s.component.is_segment()).count() as u64;
        assert_eq!(got.record.r, states.len() as u64, "case {case}");
        assert_eq!((got.record.n_slide, got.record.n_seg), (slides, segs), "case {case}");
        assert_eq!(got.end, end);
        let values: Vec<f64> = states.iter().map(|s| wipsim::stadium::SectionObservable::eval(&obs, &g, s)).collect();
        assert_eq!(got.record.v, compensated(&values));
    }
}
