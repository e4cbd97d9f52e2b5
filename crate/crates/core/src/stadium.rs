//! Bunimovich stadium: two unit semicircles joined by parallel segments of
//! length `L`.
//!
//! Frame: `S1 = {(x, -1)}`, `S2 = {(x, +1)}` for `x` in `[0, L]`; cap `C1`
//! is the left half of the unit circle about the origin and `C2` the right
//! half of the unit circle about `(L, 0)`. Arc parameters are the
//! x-coordinate on segments and, on caps, the angle in `[-pi/2, pi/2]`
//! swept counter-clockwise from the cap's apex on the long axis.
//! The outgoing angle `psi` is measured from the inward normal, positive
//! towards the counter-clockwise tangent.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;
use crate::quadrature::{gauss_legendre8, integrate_adaptive};
use crate::rng::open01;

/// States with `|psi| >= pi/2 - TANGENCY_TOL` are rejected.
pub const TANGENCY_TOL: f64 = 1e-9;
/// Minimal flight length separating a hit from the departure point.
pub const MIN_FLIGHT: f64 = 1e-12;
pub const DEFAULT_EXCURSION_CAP: u64 = 100_000_000;

const SIDE_TOL: f64 = 1e-9;

pub type Vec2 = [f64; 2];

#[inline]
fn dot(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Component {
    C1,
    C2,
    S1,
    S2,
}

impl Component {
    pub fn is_cap(self) -> bool {
        matches!(self, Component::C1 | Component::C2)
    }

    pub fn is_segment(self) -> bool {
        !self.is_cap()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StadiumGeometry {
    length: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionState {
    pub component: Component,
    pub arc: f64,
    pub psi: f64,
    pub prev: Option<Component>,
}

impl CollisionState {
    pub fn new(component: Component, arc: f64, psi: f64) -> Self {
        Self { component, arc, psi, prev: None }
    }

    /// Membership in the return set: on a cap, arriving from elsewhere.
    #[inline]
    pub fn in_return_set(&self) -> bool {
        self.component.is_cap() && self.prev.is_some_and(|p| p != self.component)
    }
}

impl StadiumGeometry {
    pub fn new(length: f64) -> Result<Self> {
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidParameter(format!("segment length must be > 0, got {length}")));
        }
        Ok(Self { length })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn perimeter(&self) -> f64 {
        2.0 * self.length + 2.0 * PI
    }

    pub fn area(&self) -> f64 {
        2.0 * self.length + PI
    }

    /// Mean free path `pi |Q| / |dQ|` of the billiard flow.
    pub fn mean_free_path(&self) -> f64 {
        PI * self.area() / self.perimeter()
    }

    pub fn cap_center(&self, c: Component) -> Vec2 {
        match c {
            Component::C1 => [0.0, 0.0],
            Component::C2 => [self.length, 0.0],
            _ => unreachable!("segments have no centre"),
        }
    }

    pub fn position(&self, s: &CollisionState) -> Vec2 {
        match s.component {
            Component::S1 => [s.arc, -1.0],
            Component::S2 => [s.arc, 1.0],
            Component::C1 | Component::C2 => {
                let c = self.cap_center(s.component);
                let e = radial(s.component, s.arc);
                [c[0] + e[0], c[1] + e[1]]
            }
        }
    }

    /// Inward unit normal and counter-clockwise unit tangent.
    pub fn frame(&self, component: Component, arc: f64) -> (Vec2, Vec2) {
        match component {
            Component::S1 => ([0.0, 1.0], [1.0, 0.0]),
            Component::S2 => ([0.0, -1.0], [-1.0, 0.0]),
            Component::C1 | Component::C2 => {
                let e = radial(component, arc);
                ([-e[0], -e[1]], [-e[1], e[0]])
            }
        }
    }

    pub fn direction(&self, s: &CollisionState) -> Vec2 {
        let (n, t) = self.frame(s.component, s.arc);
        let (sp, cp) = s.psi.sin_cos();
        [n[0] * cp + t[0] * sp, n[1] * cp + t[1] * sp]
    }

    /// Counter-clockwise boundary arc length from `(0, -1)`.
    pub fn arc_length(&self, s: &CollisionState) -> f64 {
        let l = self.length;
        match s.component {
            Component::S1 => s.arc,
            Component::C2 => l + (s.arc + FRAC_PI_2),
            Component::S2 => l + PI + (l - s.arc),
            Component::C1 => 2.0 * l + PI + (s.arc + FRAC_PI_2),
        }
    }

    pub fn from_arc_length(&self, s: f64, psi: f64) -> CollisionState {
        let l = self.length;
        let s = s.rem_euclid(self.perimeter());
        let (component, arc) = if s < l {
            (Component::S1, s)
        } else if s < l + PI {
            (Component::C2, s - l - FRAC_PI_2)
        } else if s < 2.0 * l + PI {
            (Component::S2, l - (s - l - PI))
        } else {
            (Component::C1, s - 2.0 * l - PI - FRAC_PI_2)
        };
        CollisionState::new(component, arc, psi)
    }

    /// Project a point known to lie on `component` back onto it.
    fn project(&self, component: Component, hit: Vec2) -> f64 {
        match component {
            Component::S1 | Component::S2 => hit[0].clamp(0.0, self.length),
            Component::C1 => (-hit[1]).atan2(-hit[0]).clamp(-FRAC_PI_2, FRAC_PI_2),
            Component::C2 => hit[1].atan2(hit[0] - self.length).clamp(-FRAC_PI_2, FRAC_PI_2),
        }
    }
}

/// Outward unit radius of a cap at arc parameter `theta`, measured from the
/// cap's apex on the long axis so that the axial orbit is exact.
#[inline]
fn radial(cap: Component, theta: f64) -> Vec2 {
    let (sn, cs) = theta.sin_cos();
    match cap {
        Component::C1 => [-cs, -sn],
        _ => [cs, sn],
    }
}

/// Advance to the next boundary collision and reflect specularly.
pub fn next_collision(geom: &StadiumGeometry, state: &CollisionState) -> Result<(CollisionState, f64)> {
    if !(state.psi.abs() < FRAC_PI_2 - TANGENCY_TOL) {
        return Err(Error::Tangential { psi: state.psi });
    }
    let l = geom.length;
    let p = geom.position(state);
    let d = geom.direction(state);
    let mut best: Option<(Component, f64)> = None;
    let mut consider = |c: Component, t: f64| {
        if t > MIN_FLIGHT && best.is_none_or(|(_, bt)| t < bt) {
            best = Some((c, t));
        }
    };

    if d[1] < 0.0 && state.component != Component::S1 {
        let t = (-1.0 - p[1]) / d[1];
        let x = p[0] + t * d[0];
        if (-SIDE_TOL..=l + SIDE_TOL).contains(&x) {
            consider(Component::S1, t);
        }
    }
    if d[1] > 0.0 && state.component != Component::S2 {
        let t = (1.0 - p[1]) / d[1];
        let x = p[0] + t * d[0];
        if (-SIDE_TOL..=l + SIDE_TOL).contains(&x) {
            consider(Component::S2, t);
        }
    }
    for cap in [Component::C1, Component::C2] {
        let c = geom.cap_center(cap);
        let rel = [p[0] - c[0], p[1] - c[1]];
        let b = dot(d, rel);
        let on_side = |t: f64| {
            let x = p[0] + t * d[0];
            match cap {
                Component::C1 => x <= SIDE_TOL,
                _ => x >= l - SIDE_TOL,
            }
        };
        if state.component == cap {
            // chord of the unit circle from a point on it
            let t = -2.0 * b;
            if on_side(t) {
                consider(cap, t);
            }
        } else {
            let disc = b * b - (dot(rel, rel) - 1.0);
            if disc >= 0.0 {
                let sq = disc.sqrt();
                for t in [-b - sq, -b + sq] {
                    if on_side(t) {
                        consider(cap, t);
                    }
                }
            }
        }
    }

    let (component, t) =
        best.ok_or(Error::NoIntersection { component: state.component, arc: state.arc, psi: state.psi })?;
    let hit = [p[0] + t * d[0], p[1] + t * d[1]];
    let arc = geom.project(component, hit);
    let (n, tan) = geom.frame(component, arc);
    let dn = dot(d, n);
    let out = [d[0] - 2.0 * dn * n[0], d[1] - 2.0 * dn * n[1]];
    let psi = dot(out, tan).atan2(dot(out, n));
    let next = CollisionState { component, arc, psi, prev: Some(state.component) };
    let q = geom.position(&next);
    let flight = ((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2)).sqrt();
    Ok((next, flight))
}

/// Observable on the Poincare section.
pub trait SectionObservable: Sync {
    fn eval(&self, geom: &StadiumGeometry, state: &CollisionState) -> f64;
}

impl<F> SectionObservable for F
where
    F: Fn(&StadiumGeometry, &CollisionState) -> f64 + Sync,
{
    fn eval(&self, geom: &StadiumGeometry, state: &CollisionState) -> f64 {
        self(geom, state)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SectionObservableSpec {
    Constant {
        value: f64,
    },
    /// 1 on `S1 u S2`, 0 on the caps.
    SegmentIndicator,
    CosPsi,
    XCoordinate,
    /// 1 on the segments and `-L/pi` on the caps: exact mean zero, and
    /// equal to 1 on the slide cells.
    SegmentBalanced,
}

impl SectionObservableSpec {
    /// Mean under the normalised Liouville measure.
    pub fn liouville_mean(&self, geom: &StadiumGeometry) -> f64 {
        match self {
            SectionObservableSpec::Constant { value } => *value,
            SectionObservableSpec::SegmentIndicator => 2.0 * geom.length / geom.perimeter(),
            SectionObservableSpec::CosPsi => PI / 4.0,
            SectionObservableSpec::XCoordinate => geom.length / 2.0,
            SectionObservableSpec::SegmentBalanced => 0.0,
        }
    }
}

impl SectionObservable for SectionObservableSpec {
    #[inline]
    fn eval(&self, geom: &StadiumGeometry, state: &CollisionState) -> f64 {
        match self {
            SectionObservableSpec::Constant { value } => *value,
            SectionObservableSpec::SegmentIndicator => {
                if state.component.is_segment() {
                    1.0
                } else {
                    0.0
                }
            }
            SectionObservableSpec::CosPsi => state.psi.cos(),
            SectionObservableSpec::XCoordinate => geom.position(state)[0],
            SectionObservableSpec::SegmentBalanced => {
                if state.component.is_segment() {
                    1.0
                } else {
                    -geom.length / PI
                }
            }
        }
    }
}

/// A section observable minus a fixed offset.
#[derive(Debug, Clone, Copy)]
pub struct Centered<O> {
    pub inner: O,
    pub offset: f64,
}

impl<O: SectionObservable> SectionObservable for Centered<O> {
    #[inline]
    fn eval(&self, geom: &StadiumGeometry, state: &CollisionState) -> f64 {
        self.inner.eval(geom, state) - self.offset
    }
}

/// Observable on the billiard flow, a function of position and velocity.
pub trait FlowObservable: Sync {
    fn eval(&self, pos: Vec2, dir: Vec2) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FlowObservableSpec {
    Constant {
        value: f64,
    },
    /// Square of the vertical velocity component.
    VerticalSpeedSquared,
    /// Square of the vertical coordinate.
    VerticalPositionSquared,
}

impl FlowObservableSpec {
    /// Mean under the invariant flow measure (uniform position and direction).
    pub fn flow_mean(&self, geom: &StadiumGeometry) -> f64 {
        match self {
            FlowObservableSpec::Constant { value } => *value,
            FlowObservableSpec::VerticalSpeedSquared => 0.5,
            FlowObservableSpec::VerticalPositionSquared => (2.0 * geom.length / 3.0 + PI / 4.0) / geom.area(),
        }
    }
}

impl FlowObservable for FlowObservableSpec {
    #[inline]
    fn eval(&self, pos: Vec2, dir: Vec2) -> f64 {
        match self {
            FlowObservableSpec::Constant { value } => *value,
            FlowObservableSpec::VerticalSpeedSquared => dir[1] * dir[1],
            FlowObservableSpec::VerticalPositionSquared => pos[1] * pos[1],
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CenteredFlow<O> {
    pub inner: O,
    pub offset: f64,
}

impl<O: FlowObservable> FlowObservable for CenteredFlow<O> {
    #[inline]
    fn eval(&self, pos: Vec2, dir: Vec2) -> f64 {
        self.inner.eval(pos, dir) - self.offset
    }
}

/// `int_0^len v(p + u d, d) du` by 8-point Gauss-Legendre.
#[inline]
pub fn flight_integral<O: FlowObservable + ?Sized>(obs: &O, p: Vec2, d: Vec2, len: f64) -> f64 {
    gauss_legendre8(|u| obs.eval([p[0] + u * d[0], p[1] + u * d[1]], d), 0.0, len)
}

/// One excursion from the return set back to it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReturnRecord {
    pub r: u64,
    pub n_slide: u64,
    pub n_seg: u64,
    pub v: f64,
    pub flight_total: f64,
    pub max_abs_partial: f64,
}

impl ReturnRecord {
    /// Bounce count with the terminal collision attached.
    pub fn r_bounce(&self) -> u64 {
        self.n_seg + 1
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Excursion {
    pub record: ReturnRecord,
    pub end: CollisionState,
}

pub fn first_return<O: SectionObservable + ?Sized>(
    geom: &StadiumGeometry,
    y: &CollisionState,
    obs: &O,
) -> Result<Excursion> {
    first_return_capped(geom, y, obs, DEFAULT_EXCURSION_CAP)
}

pub fn first_return_capped<O: SectionObservable + ?Sized>(
    geom: &StadiumGeometry,
    y: &CollisionState,
    obs: &O,
    cap: u64,
) -> Result<Excursion> {
    if !y.in_return_set() {
        return Err(Error::InvalidParameter("first_return requires a state in the return set".into()));
    }
    let start = y.component;
    let mut v = CompensatedSum::new();
    let mut max_abs: f64 = 0.0;
    let mut flight = 0.0;
    let (mut n_slide, mut n_seg) = (0u64, 0u64);
    let mut state = *y;
    loop {
        v.add(obs.eval(geom, &state));
        max_abs = max_abs.max(v.value().abs());
        let (next, fl) = next_collision(geom, &state)?;
        flight += fl;
        if next.in_return_set() {
            let record = ReturnRecord {
                r: n_slide + n_seg + 1,
                n_slide,
                n_seg,
                v: v.value(),
                flight_total: flight,
                max_abs_partial: max_abs,
            };
            return Ok(Excursion { record, end: next });
        }
        if next.component == start {
            n_slide += 1;
        } else {
            n_seg += 1;
        }
        state = next;
        if n_slide + n_seg >= cap {
            let partial = ReturnRecord {
                r: n_slide + n_seg,
                n_slide,
                n_seg,
                v: v.value(),
                flight_total: flight,
                max_abs_partial: max_abs,
            };
            return Err(Error::RunawayExcursion { cap, partial: Box::new(partial) });
        }
    }
}

/// `I_v` over perpendicular segment states and the flow analogue `J_v`
/// over vertical flights of length 2.
pub fn boundary_averages<S, F>(geom: &StadiumGeometry, section: &S, flow: &F) -> Result<(f64, f64)>
where
    S: SectionObservable + ?Sized,
    F: FlowObservable + ?Sized,
{
    const REL_TOL: f64 = 1e-10;
    let l = geom.length;
    let mut i_v = 0.0;
    let mut j_v = 0.0;
    for comp in [Component::S1, Component::S2] {
        i_v += integrate_adaptive(|x| section.eval(geom, &CollisionState::new(comp, x, 0.0)), 0.0, l, REL_TOL)?;
        let (n, _) = geom.frame(comp, 0.0);
        let y0 = if comp == Component::S1 { -1.0 } else { 1.0 };
        j_v += integrate_adaptive(|x| flight_integral(flow, [x, y0], n, 2.0), 0.0, l, REL_TOL)?;
    }
    Ok((i_v / (2.0 * l), j_v / (2.0 * l)))
}

/// Draw from the normalised Liouville measure `cos psi ds dpsi / (2 |dQ|)`.
pub fn liouville_sample<R: Rng + ?Sized>(geom: &StadiumGeometry, rng: &mut R) -> CollisionState {
    loop {
        let s = open01(rng) * geom.perimeter();
        let psi = (2.0 * open01(rng) - 1.0).asin();
        if psi.abs() >= FRAC_PI_2 - TANGENCY_TOL {
            continue;
        }
        let mut state = geom.from_arc_length(s, psi);
        let back = CollisionState { psi: -psi, ..state };
        match next_collision(geom, &back) {
            Ok((prev, _)) => {
                state.prev = Some(prev.component);
                return state;
            }
            Err(_) => continue,
        }
    }
}

/// Liouville measure conditioned on the return set.
pub fn return_set_sample<R: Rng + ?Sized>(geom: &StadiumGeometry, rng: &mut R) -> CollisionState {
    loop {
        let s = liouville_sample(geom, rng);
        if s.in_return_set() {
            return s;
        }
    }
}
