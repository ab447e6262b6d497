//! Monodromy of a Blaschke covering by numerical continuation, and the
//! components of the fiber product as orbits of the diagonal action on pairs.
//!
//! Fibers are labelled by their position in the base fiber (sorted
//! lexicographically). A loop permutation maps the label a point starts at to
//! the label of the base-fiber point it ends at; loops compose left to right.

use std::collections::{BTreeSet, VecDeque};
use std::f64::consts::{PI, TAU};
use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::symbol::{lex_cmp, BlaschkeProduct, Point, SymbolMap};
use crate::tolerances::Tolerances;

const MAX_NEWTON: usize = 5;
const EASY_STEPS_BEFORE_GROWTH: usize = 3;
const MATCH_MARGIN: f64 = 10.0;
const CIRCLE_VERTICES: usize = 64;
const BOUNDARY_VERTICES: usize = 512;
const ARC_STEP: f64 = PI / 32.0;
/// A point is taken to lie on a fiber when it is this close to a fiber point.
const ON_FIBER: f64 = 1e-6;
const VALUE_MATCH: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct Permutation {
    images: Vec<usize>,
}

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Self { images: (0..n).collect() }
    }

    pub fn from_images(images: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; images.len()];
        for &i in &images {
            if i >= images.len() || seen[i] {
                return Err(Error::Input(format!("{images:?} is not a bijection")));
            }
            seen[i] = true;
        }
        Ok(Self { images })
    }

    /// Cyclic shift `i -> i + k mod n`.
    pub fn rotation(n: usize, k: usize) -> Self {
        Self { images: (0..n).map(|i| (i + k) % n).collect() }
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn apply(&self, i: usize) -> usize {
        self.images[i]
    }

    pub fn images(&self) -> &[usize] {
        &self.images
    }

    /// `self` first, then `other`.
    pub fn then(&self, other: &Self) -> Self {
        Self { images: self.images.iter().map(|&i| other.images[i]).collect() }
    }

    pub fn inverse(&self) -> Self {
        let mut images = vec![0; self.len()];
        for (i, &j) in self.images.iter().enumerate() {
            images[j] = i;
        }
        Self { images }
    }

    pub fn is_identity(&self) -> bool {
        self.images.iter().enumerate().all(|(i, &j)| i == j)
    }

    /// Disjoint cycles, each starting at its smallest element, fixed points included.
    pub fn cycles(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.len()];
        let mut out = Vec::new();
        for start in 0..self.len() {
            if seen[start] {
                continue;
            }
            let mut cycle = Vec::new();
            let mut i = start;
            while !seen[i] {
                seen[i] = true;
                cycle.push(i);
                i = self.images[i];
            }
            out.push(cycle);
        }
        out
    }

    pub fn cycle_type(&self) -> Vec<usize> {
        let mut t: Vec<usize> = self.cycles().iter().map(Vec::len).collect();
        t.sort_unstable_by(|a, b| b.cmp(a));
        t
    }

    pub fn is_full_cycle(&self) -> bool {
        self.cycles().len() == 1
    }
}

impl fmt::Display for Permutation {
    /// Cycle notation without fixed points; the identity prints as `()`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cycles: Vec<Vec<usize>> = self.cycles().into_iter().filter(|c| c.len() > 1).collect();
        if cycles.is_empty() {
            return write!(f, "()");
        }
        for c in cycles {
            let body: Vec<String> = c.iter().map(ToString::to_string).collect();
            write!(f, "({})", body.join(" "))?;
        }
        Ok(())
    }
}

/// The subgroup generated by `gens`, by closure. Only for small degrees.
pub fn generated_group(n: usize, gens: &[Permutation]) -> BTreeSet<Permutation> {
    let mut group = BTreeSet::from([Permutation::identity(n)]);
    let mut queue = VecDeque::from([Permutation::identity(n)]);
    while let Some(g) = queue.pop_front() {
        for s in gens {
            let h = g.then(s);
            if group.insert(h.clone()) {
                queue.push_back(h);
            }
        }
    }
    group
}

fn wrap_pi(a: f64) -> f64 {
    let mut x = a % TAU;
    if x > PI {
        x -= TAU;
    } else if x <= -PI {
        x += TAU;
    }
    x
}

fn segment_distance(a: Point, b: Point, v: Point) -> f64 {
    let d = b - a;
    let len2 = d.norm_sqr();
    if len2 == 0.0 {
        return (v - a).norm();
    }
    let t = (((v - a) * d.conj()).re / len2).clamp(0.0, 1.0);
    (a + d * t - v).norm()
}

/// Appends the arc around `center` from angle `from` sweeping `delta`, excluding the start.
fn push_arc(center: Point, radius: f64, from: f64, delta: f64, out: &mut Vec<Point>) {
    let steps = ((delta.abs() / ARC_STEP).ceil() as usize).max(1);
    for k in 1..=steps {
        let theta = from + delta * k as f64 / steps as f64;
        out.push(center + Point::from_polar(radius, theta));
    }
}

/// Polygonal routes in the image disc that keep away from a set of punctures.
///
/// A straight leg that would cut through the detour disc of a puncture is
/// replaced by the shorter arc of that disc's boundary; legs that start or end
/// inside a detour disc leave or enter it radially.
#[derive(Clone, Debug)]
pub struct PathPlanner {
    obstacles: Vec<Point>,
    radius: f64,
}

impl PathPlanner {
    pub fn new(obstacles: Vec<Point>, radius: f64) -> Self {
        Self { obstacles, radius }
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    fn disc_containing(&self, p: Point) -> Result<Option<usize>> {
        let hits: Vec<usize> = (0..self.obstacles.len())
            .filter(|&k| (p - self.obstacles[k]).norm() < self.radius)
            .collect();
        match hits.len() {
            0 => Ok(None),
            1 => Ok(Some(hits[0])),
            _ => Err(Error::Configuration(format!(
                "point {p} lies in overlapping detour discs; lower loop_clearance"
            ))),
        }
    }

    fn circle_point(&self, k: usize, p: Point) -> Point {
        let v = self.obstacles[k];
        let d = p - v;
        if d.norm() == 0.0 {
            v + self.radius
        } else {
            v + d / d.norm() * self.radius
        }
    }

    /// Full vertex list through the given waypoints.
    pub fn route(&self, waypoints: &[Point]) -> Result<Vec<Point>> {
        let mut out = vec![waypoints[0]];
        for w in waypoints.windows(2) {
            self.leg(w[0], w[1], &mut out)?;
        }
        Ok(out)
    }

    fn leg(&self, a: Point, b: Point, out: &mut Vec<Point>) -> Result<()> {
        if a == b {
            return Ok(());
        }
        let a_disc = self.disc_containing(a)?;
        let b_disc = self.disc_containing(b)?;
        let start = match a_disc {
            Some(k) => {
                let p = self.circle_point(k, a);
                out.push(p);
                p
            }
            None => a,
        };
        let end = b_disc.map_or(b, |k| self.circle_point(k, b));
        if let (Some(ka), Some(kb)) = (a_disc, b_disc) {
            if ka == kb {
                let v = self.obstacles[ka];
                let from = (start - v).arg();
                let delta = wrap_pi((end - v).arg() - from);
                push_arc(v, self.radius, from, delta, out);
                out.push(b);
                return Ok(());
            }
        }
        self.chord(start, end, out)?;
        if b_disc.is_some() {
            out.push(b);
        }
        Ok(())
    }

    fn chord(&self, a: Point, b: Point, out: &mut Vec<Point>) -> Result<()> {
        let d = b - a;
        let len2 = d.norm_sqr();
        let mut crossings: Vec<(f64, f64, usize)> = Vec::new();
        for (k, &v) in self.obstacles.iter().enumerate() {
            // |a + t d - v|^2 = r^2
            let w = a - v;
            let half_b = (w * d.conj()).re;
            let c = w.norm_sqr() - self.radius * self.radius;
            let disc = half_b * half_b - len2 * c;
            if disc <= 0.0 {
                continue;
            }
            let root = disc.sqrt();
            let t1 = ((-half_b - root) / len2).max(0.0);
            let t2 = ((-half_b + root) / len2).min(1.0);
            if t2 - t1 > 1e-12 {
                crossings.push((t1, t2, k));
            }
        }
        crossings.sort_by(|x, y| x.0.total_cmp(&y.0));
        for pair in crossings.windows(2) {
            if pair[1].0 < pair[0].1 {
                return Err(Error::Configuration(
                    "path crosses overlapping detour discs; lower loop_clearance".into(),
                ));
            }
        }
        for (t1, t2, k) in crossings {
            let v = self.obstacles[k];
            let entry = a + d * t1;
            let exit = a + d * t2;
            if t1 > 0.0 {
                out.push(entry);
            }
            let from = (entry - v).arg();
            let mut delta = wrap_pi((exit - v).arg() - from);
            if (delta.abs() - PI).abs() < 1e-9 {
                delta = PI;
            }
            push_arc(v, self.radius, from, delta, out);
        }
        if out.last() != Some(&b) {
            out.push(b);
        }
        Ok(())
    }

    /// Minimum distance from the polyline to the obstacles.
    pub fn clearance(&self, path: &[Point]) -> f64 {
        path.windows(2)
            .flat_map(|w| self.obstacles.iter().map(move |&v| segment_distance(w[0], w[1], v)))
            .fold(f64::INFINITY, f64::min)
    }
}

/// One recorded continuation step: the value `y` and the fiber above it.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackSample {
    pub step: usize,
    pub y: Point,
    pub fiber: Vec<Point>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrackedPath {
    pub id: String,
    pub samples: Vec<TrackSample>,
}

struct Tracker<'a> {
    map: &'a BlaschkeProduct,
    tol: &'a Tolerances,
    samples: Option<Vec<TrackSample>>,
    /// Path vertices are points `z` of the domain, followed through `y = f(z)`.
    in_domain: bool,
}

impl Tracker<'_> {
    fn image(&self, p: Point) -> Point {
        if self.in_domain {
            self.map.value(p)
        } else {
            p
        }
    }

    fn run(&mut self, path: &[Point], fiber: &mut Vec<Point>) -> Result<()> {
        if let Some(s) = self.samples.as_mut() {
            s.push(TrackSample { step: 0, y: path[0], fiber: fiber.clone() });
        }
        let mut trial = Vec::with_capacity(fiber.len());
        for (segment, w) in path.windows(2).enumerate() {
            self.segment(segment, w[0], w[1], fiber, &mut trial)?;
        }
        Ok(())
    }

    fn segment(
        &mut self,
        segment: usize,
        a: Point,
        b: Point,
        fiber: &mut Vec<Point>,
        trial: &mut Vec<Point>,
    ) -> Result<()> {
        let len = (b - a).norm();
        if len == 0.0 {
            return Ok(());
        }
        let dir = (b - a) / len;
        let mut done = 0.0;
        let mut h = self.tol.max_step.min(len);
        let mut easy = 0;
        let mut p0 = a;
        while done < len {
            let last = done + h >= len;
            let p1 = if last { b } else { a + dir * (done + h) };
            let y1 = self.image(p1);
            match self.step(fiber, self.image(p0), y1, trial) {
                Ok(()) => {
                    std::mem::swap(fiber, trial);
                    done = if last { len } else { done + h };
                    p0 = p1;
                    if let Some(s) = self.samples.as_mut() {
                        let step = s.len();
                        s.push(TrackSample { step, y: y1, fiber: fiber.clone() });
                    }
                    easy += 1;
                    if easy >= EASY_STEPS_BEFORE_GROWTH {
                        h = (2.0 * h).min(self.tol.max_step);
                        easy = 0;
                    }
                }
                Err(reason) => {
                    h = h.min(len - done) / 2.0;
                    easy = 0;
                    if h < self.tol.min_step {
                        return Err(Error::Tracking {
                            segment,
                            reason: format!("step size underflow near {p0}: {reason}"),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Euler predictor `dz = dy / f'(z)` followed by at most `MAX_NEWTON` Newton
    /// corrections, converged once both the residual and the Newton update are
    /// below `tracking_residual`; rejects steps that move a point by more than a quarter of
    /// its distance to the nearest other branch.
    fn step(
        &self,
        fiber: &[Point],
        y0: Point,
        y1: Point,
        out: &mut Vec<Point>,
    ) -> std::result::Result<(), &'static str> {
        let dy = y1 - y0;
        out.clear();
        for (i, &z) in fiber.iter().enumerate() {
            let sep = fiber
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, w)| (w - z).norm())
                .fold(1.0f64, f64::min);
            let limit = 0.25 * sep;
            let (_, d) = self.map.value_and_deriv(z);
            if d.norm() == 0.0 {
                return Err("vanishing derivative");
            }
            let pred = z + dy / d;
            if (pred - z).norm() > limit {
                return Err("predictor step too large");
            }
            let mut x = pred;
            let mut converged = false;
            for it in 0..=MAX_NEWTON {
                let (v, dv) = self.map.value_and_deriv(x);
                let r = v - y1;
                if r.norm() <= self.tol.tracking_residual && r.norm() <= self.tol.tracking_residual * dv.norm() {
                    converged = true;
                    break;
                }
                if it == MAX_NEWTON || dv.norm() == 0.0 {
                    break;
                }
                x -= r / dv;
            }
            if !converged {
                return Err("corrector did not converge");
            }
            if (x - pred).norm() > limit {
                return Err("corrector drifted toward another branch");
            }
            out.push(x);
        }
        let guard = 10.0 * self.tol.collision;
        for i in 0..out.len() {
            for j in i + 1..out.len() {
                if (out[i] - out[j]).norm() <= guard {
                    return Err("branch collision");
                }
            }
        }
        Ok(())
    }
}

fn check_start(map: &BlaschkeProduct, path: &[Point], start: &[Point]) -> Result<()> {
    if path.is_empty() {
        return Err(Error::Input("empty path".into()));
    }
    for z in start {
        let r = (map.value(*z) - path[0]).norm();
        if r > VALUE_MATCH {
            return Err(Error::Precondition(format!(
                "start point {z} is off the fiber over {} (residual {r:e})",
                path[0]
            )));
        }
    }
    Ok(())
}

/// Continues every point of `start` along the polygonal `path`, keeping indices.
pub fn track(map: &BlaschkeProduct, path: &[Point], start: &[Point], tol: &Tolerances) -> Result<Vec<Point>> {
    check_start(map, path, start)?;
    let mut fiber = start.to_vec();
    Tracker { map, tol, samples: None, in_domain: false }.run(path, &mut fiber)?;
    Ok(fiber)
}

/// Continues the fiber over `f(z)` while `z` moves along `path`, a polygon in the domain.
pub fn track_in_domain(map: &BlaschkeProduct, path: &[Point], start: &[Point], tol: &Tolerances) -> Result<Vec<Point>> {
    let first: Vec<Point> = path.first().map(|&z| map.value(z)).into_iter().collect();
    check_start(map, &first, start)?;
    let mut fiber = start.to_vec();
    Tracker { map, tol, samples: None, in_domain: true }.run(path, &mut fiber)?;
    Ok(fiber)
}

/// As [`track`], also returning every accepted step.
pub fn track_recorded(
    map: &BlaschkeProduct,
    path: &[Point],
    start: &[Point],
    tol: &Tolerances,
) -> Result<(Vec<Point>, Vec<TrackSample>)> {
    check_start(map, path, start)?;
    let mut fiber = start.to_vec();
    let mut tracker = Tracker { map, tol, samples: Some(Vec::new()), in_domain: false };
    tracker.run(path, &mut fiber)?;
    Ok((fiber, tracker.samples.unwrap_or_default()))
}

/// Index of the point of `fiber` nearest to `p`, insisting the runner-up is
/// at least ten times farther away.
pub fn nearest_unambiguous(fiber: &[Point], p: Point) -> Result<(usize, f64)> {
    let mut best = (usize::MAX, f64::INFINITY);
    let mut second = f64::INFINITY;
    for (j, q) in fiber.iter().enumerate() {
        let d = (q - p).norm();
        if d < best.1 {
            second = best.1;
            best = (j, d);
        } else if d < second {
            second = d;
        }
    }
    if fiber.len() > 1 && second < MATCH_MARGIN * best.1 {
        return Err(Error::Numerical(format!(
            "ambiguous match for {p}: nearest {:e}, runner-up {second:e}; try a smaller loop_clearance",
            best.1
        )));
    }
    Ok(best)
}

/// Permutation sending label `i` to the label of the start point that `end[i]` landed on.
pub fn match_fibers(end: &[Point], start: &[Point]) -> Result<Permutation> {
    let images = end
        .iter()
        .map(|&p| nearest_unambiguous(start, p).map(|(j, _)| j))
        .collect::<Result<Vec<_>>>()?;
    Permutation::from_images(images)
        .map_err(|_| Error::Numerical("tracked loop did not return a bijection of the fiber".into()))
}

fn sorted_fiber(mut fiber: Vec<Point>) -> Vec<Point> {
    fiber.sort_by(lex_cmp);
    fiber
}

/// Candidate base points `r e^{i pi k / 17}` in scan order.
fn base_candidates() -> impl Iterator<Item = Point> {
    (1..=19).flat_map(|ri| {
        let r = 0.05 * ri as f64;
        (0..34).map(move |k| Point::from_polar(r, PI * k as f64 / 17.0))
    })
}

/// Whether lassos and the boundary loop from `base` stay clear of every other puncture.
fn base_is_admissible(base: Point, critical_values: &[Point], tol: &Tolerances) -> bool {
    let keep_out = 2.0 * tol.lasso_radius();
    let outer = base / base.norm() * tol.boundary_radius;
    for (k, &v) in critical_values.iter().enumerate() {
        if (base - v).norm() <= (10.0 * tol.regular_value_margin).max(keep_out) {
            return false;
        }
        if segment_distance(base, outer, v) <= keep_out {
            return false;
        }
        for (j, &u) in critical_values.iter().enumerate() {
            if j != k && segment_distance(base, v, u) <= keep_out {
                return false;
            }
        }
    }
    true
}

fn critical_value_points(map: &BlaschkeProduct, tol: &Tolerances) -> Result<Vec<Point>> {
    Ok(map.critical_values(tol)?.into_iter().map(|cv| cv.value).collect())
}

fn no_base_error(cvs: &[Point], tol: &Tolerances) -> Error {
    let closest = cvs
        .iter()
        .enumerate()
        .flat_map(|(i, u)| cvs[i + 1..].iter().map(move |v| (u - v).norm()))
        .fold(f64::INFINITY, f64::min);
    Error::Configuration(format!(
        "no admissible base point found; closest critical values are {closest:e} apart, lasso radius is {:e} (lower loop_clearance)",
        tol.lasso_radius()
    ))
}

/// Every admissible base point in scan order.
pub fn admissible_bases(map: &BlaschkeProduct, tol: &Tolerances) -> Result<Vec<Point>> {
    let cvs = critical_value_points(map, tol)?;
    Ok(base_candidates().filter(|b| base_is_admissible(*b, &cvs, tol)).collect())
}

/// First admissible base point and its fiber, sorted lexicographically.
pub fn choose_base(map: &BlaschkeProduct, tol: &Tolerances) -> Result<(Point, Vec<Point>)> {
    let cvs = critical_value_points(map, tol)?;
    let base = base_candidates()
        .find(|b| base_is_admissible(*b, &cvs, tol))
        .ok_or_else(|| no_base_error(&cvs, tol))?;
    Ok((base, sorted_fiber(map.fiber_of_regular(base, tol)?)))
}

/// Segment from the base to the small circle around `v`, once around it
/// counterclockwise, and back.
pub fn lasso(base: Point, v: Point, tol: &Tolerances) -> Vec<Point> {
    let r = tol.lasso_radius();
    let toward = (base - v) / (base - v).norm();
    let from = toward.arg();
    let mut path = vec![base, v + toward * r];
    push_arc(v, r, from, TAU, &mut path);
    // the arc is subdivided finer than CIRCLE_VERTICES requires
    debug_assert!(path.len() >= CIRCLE_VERTICES);
    path.push(base);
    path
}

/// Radially out to the boundary circle, once around it counterclockwise, and back.
pub fn boundary_loop(base: Point, tol: &Tolerances) -> Vec<Point> {
    let rho = tol.boundary_radius;
    let from = base.arg();
    let mut path = vec![base, Point::from_polar(rho, from)];
    for k in 1..=BOUNDARY_VERTICES {
        path.push(Point::from_polar(rho, from + TAU * k as f64 / BOUNDARY_VERTICES as f64));
    }
    path.push(base);
    path
}

/// Counterclockwise angle of `v` seen from `base`, measured from the outward radial direction.
fn angle_from_outward(base: Point, v: Point) -> f64 {
    let a = ((v - base).arg() - base.arg()).rem_euclid(TAU);
    if a == 0.0 {
        TAU
    } else {
        a
    }
}

/// Monodromy of one Blaschke factor.
#[derive(Clone, Debug)]
pub struct FactorMonodromy {
    pub base_point: Point,
    pub base_fiber: Vec<Point>,
    pub critical_values: Vec<Point>,
    /// One permutation per entry of `critical_values`.
    pub generators: Vec<Permutation>,
    pub boundary_perm: Permutation,
    /// Indices into `critical_values`, counterclockwise from the outward ray at the base.
    pub angular_order: Vec<usize>,
    pub tracks: Vec<TrackedPath>,
}

impl FactorMonodromy {
    pub fn compute(map: &BlaschkeProduct, tol: &Tolerances) -> Result<Self> {
        let (base, fiber) = choose_base(map, tol)?;
        Self::compute_at(map, base, fiber, None, tol)
    }

    /// Monodromy at a given base. `order` permutes the critical values before
    /// generators are assigned; by default they follow the angular order.
    pub fn compute_at(
        map: &BlaschkeProduct,
        base: Point,
        base_fiber: Vec<Point>,
        order: Option<&[usize]>,
        tol: &Tolerances,
    ) -> Result<Self> {
        let cvs = critical_value_points(map, tol)?;
        if !base_is_admissible(base, &cvs, tol) {
            return Err(Error::Configuration(format!("base point {base} is not admissible")));
        }
        for v in &cvs {
            if v.norm() >= tol.boundary_radius - 2.0 * tol.lasso_radius() {
                return Err(Error::Configuration(format!(
                    "critical value {v} is outside the boundary circle; raise boundary_radius"
                )));
            }
        }
        let mut angular: Vec<usize> = (0..cvs.len()).collect();
        angular.sort_by(|&i, &j| angle_from_outward(base, cvs[i]).total_cmp(&angle_from_outward(base, cvs[j])));
        let stored: Vec<usize> = match order {
            Some(o) => {
                Permutation::from_images(o.to_vec())?;
                if o.len() != cvs.len() {
                    return Err(Error::Input("critical value order has the wrong length".into()));
                }
                o.iter().map(|&k| angular[k]).collect()
            }
            None => angular.clone(),
        };
        let critical_values: Vec<Point> = stored.iter().map(|&k| cvs[k]).collect();
        let angular_order: Vec<usize> = angular
            .iter()
            .map(|k| stored.iter().position(|s| s == k).expect("permutation"))
            .collect();

        let lassos: Vec<(Permutation, TrackedPath)> = critical_values
            .par_iter()
            .enumerate()
            .map(|(k, &v)| {
                let path = lasso(base, v, tol);
                let (end, samples) = track_recorded(map, &path, &base_fiber, tol)?;
                let perm = match_fibers(&end, &base_fiber)?;
                Ok((perm, TrackedPath { id: format!("lasso-{k}"), samples }))
            })
            .collect::<Result<_>>()?;
        let (boundary_perm, boundary_track) = boundary_permutation_at(map, base, &base_fiber, tol)?;
        let (generators, mut tracks): (Vec<_>, Vec<_>) = lassos.into_iter().unzip();
        tracks.push(boundary_track);
        Ok(Self { base_point: base, base_fiber, critical_values, generators, boundary_perm, angular_order, tracks })
    }

    pub fn degree(&self) -> usize {
        self.base_fiber.len()
    }

    /// Generators composed in angular order: the loop around every puncture.
    pub fn composite_of_generators(&self) -> Permutation {
        self.angular_order
            .iter()
            .fold(Permutation::identity(self.degree()), |acc, &k| acc.then(&self.generators[k]))
    }
}

/// Permutation of the lasso around critical value `index` of `rep`.
pub fn loop_permutation(
    map: &BlaschkeProduct,
    rep: &FactorMonodromy,
    index: usize,
    tol: &Tolerances,
) -> Result<Permutation> {
    let v = *rep
        .critical_values
        .get(index)
        .ok_or_else(|| Error::Input(format!("no critical value with index {index}")))?;
    let end = track(map, &lasso(rep.base_point, v, tol), &rep.base_fiber, tol)?;
    match_fibers(&end, &rep.base_fiber)
}

fn boundary_permutation_at(
    map: &BlaschkeProduct,
    base: Point,
    fiber: &[Point],
    tol: &Tolerances,
) -> Result<(Permutation, TrackedPath)> {
    let path = boundary_loop(base, tol);
    let (end, samples) = track_recorded(map, &path, fiber, tol).map_err(|e| match e {
        Error::Tracking { segment, reason } => Error::Numerical(format!(
            "boundary tracking failed on segment {segment} ({reason}); try a lower boundary_radius"
        )),
        other => other,
    })?;
    Ok((match_fibers(&end, fiber)?, TrackedPath { id: "boundary".into(), samples }))
}

/// Permutation of the base fiber along the circle `|y| = boundary_radius`.
pub fn boundary_permutation(map: &BlaschkeProduct, tol: &Tolerances) -> Result<Permutation> {
    let (base, fiber) = choose_base(map, tol)?;
    Ok(boundary_permutation_at(map, base, &fiber, tol)?.0)
}

/// Monodromy of a symbol: one [`FactorMonodromy`] per Blaschke factor and the
/// factor generators lifted to the product fiber (first factor varies slowest).
#[derive(Clone, Debug)]
pub struct MonodromyRep {
    factors: Vec<FactorMonodromy>,
    generators: Vec<Permutation>,
}

impl MonodromyRep {
    pub fn compute(map: &SymbolMap, tol: &Tolerances) -> Result<Self> {
        let factors = map
            .factors()
            .iter()
            .map(|f| FactorMonodromy::compute(f, tol))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_factors(factors))
    }

    pub fn from_factors(factors: Vec<FactorMonodromy>) -> Self {
        let degrees: Vec<usize> = factors.iter().map(FactorMonodromy::degree).collect();
        let strides = strides(&degrees);
        let n: usize = degrees.iter().product();
        let mut generators = Vec::new();
        for (k, fm) in factors.iter().enumerate() {
            for g in &fm.generators {
                let images = (0..n)
                    .map(|i| {
                        let digit = (i / strides[k]) % degrees[k];
                        i - digit * strides[k] + g.apply(digit) * strides[k]
                    })
                    .collect();
                generators.push(Permutation { images });
            }
        }
        Self { factors, generators }
    }

    pub fn factors(&self) -> &[FactorMonodromy] {
        &self.factors
    }

    pub fn generators(&self) -> &[Permutation] {
        &self.generators
    }

    pub fn fiber_size(&self) -> usize {
        self.factors.iter().map(FactorMonodromy::degree).product()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.factors.iter().map(FactorMonodromy::degree).collect()
    }

    pub fn base_point(&self) -> Vec<Point> {
        self.factors.iter().map(|f| f.base_point).collect()
    }

    pub fn base_fiber(&self) -> Vec<Vec<Point>> {
        let lists: Vec<Vec<Point>> = self.factors.iter().map(|f| f.base_fiber.clone()).collect();
        crate::symbol::cartesian(&lists)
    }

    /// Product label from per-factor labels.
    pub fn combine_labels(&self, labels: &[usize]) -> usize {
        let strides = strides(&self.degrees());
        labels.iter().zip(strides).map(|(l, s)| l * s).sum()
    }

    pub fn tracks(&self) -> impl Iterator<Item = (usize, &TrackedPath)> {
        self.factors.iter().enumerate().flat_map(|(k, f)| f.tracks.iter().map(move |t| (k, t)))
    }
}

pub(crate) fn strides(degrees: &[usize]) -> Vec<usize> {
    let mut s = vec![1; degrees.len()];
    for k in (0..degrees.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * degrees[k + 1];
    }
    s
}

pub type Partition = BTreeSet<BTreeSet<(usize, usize)>>;

/// Orbits of the diagonal monodromy action on pairs of fiber labels.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ComponentAtlas {
    fiber_size: usize,
    orbit_of: Vec<usize>,
    orbit_count: usize,
    canonical_reps: Vec<(usize, usize)>,
}

impl ComponentAtlas {
    /// Breadth-first search over the `n x n` grid from seeds in lexicographic
    /// order; the seed of each orbit is its minimal pair.
    pub fn from_generators(n: usize, generators: &[Permutation]) -> Self {
        let mut orbit_of = vec![usize::MAX; n * n];
        let mut canonical_reps = Vec::new();
        let mut queue = VecDeque::new();
        for seed in 0..n * n {
            if orbit_of[seed] != usize::MAX {
                continue;
            }
            let id = canonical_reps.len();
            canonical_reps.push((seed / n, seed % n));
            orbit_of[seed] = id;
            queue.push_back(seed);
            while let Some(p) = queue.pop_front() {
                let (i, j) = (p / n, p % n);
                for g in generators {
                    let q = g.apply(i) * n + g.apply(j);
                    if orbit_of[q] == usize::MAX {
                        orbit_of[q] = id;
                        queue.push_back(q);
                    }
                }
            }
        }
        Self { fiber_size: n, orbit_count: canonical_reps.len(), orbit_of, canonical_reps }
    }

    pub fn fiber_size(&self) -> usize {
        self.fiber_size
    }

    pub fn orbit_count(&self) -> usize {
        self.orbit_count
    }

    pub fn orbit(&self, i: usize, j: usize) -> usize {
        self.orbit_of[i * self.fiber_size + j]
    }

    pub fn canonical_reps(&self) -> &[(usize, usize)] {
        &self.canonical_reps
    }

    pub fn pairs(&self, orbit: usize) -> Vec<(usize, usize)> {
        let n = self.fiber_size;
        (0..n * n)
            .filter(|&p| self.orbit_of[p] == orbit)
            .map(|p| (p / n, p % n))
            .collect()
    }

    /// Orbit of the transposed pairs.
    pub fn transpose(&self, orbit: usize) -> usize {
        let (i, j) = self.canonical_reps[orbit];
        self.orbit(j, i)
    }

    pub fn diagonal_orbits(&self) -> Vec<usize> {
        let set: BTreeSet<usize> = (0..self.fiber_size).map(|i| self.orbit(i, i)).collect();
        set.into_iter().collect()
    }

    pub fn is_invariant_under(&self, g: &Permutation) -> bool {
        let n = self.fiber_size;
        (0..n).all(|i| (0..n).all(|j| self.orbit(i, j) == self.orbit(g.apply(i), g.apply(j))))
    }

    pub fn partition(&self) -> Partition {
        self.relabeled_partition(&Permutation::identity(self.fiber_size))
    }

    /// The partition after renaming every label `i` to `relabel(i)`.
    pub fn relabeled_partition(&self, relabel: &Permutation) -> Partition {
        (0..self.orbit_count)
            .map(|o| {
                self.pairs(o)
                    .into_iter()
                    .map(|(i, j)| (relabel.apply(i), relabel.apply(j)))
                    .collect()
            })
            .collect()
    }

    /// For a product atlas, the factor orbit of each coordinate of every orbit.
    /// Fails unless the atlas is exactly the product partition.
    pub fn factorize(&self, factors: &[ComponentAtlas]) -> Result<Vec<Vec<usize>>> {
        let degrees: Vec<usize> = factors.iter().map(ComponentAtlas::fiber_size).collect();
        if degrees.iter().product::<usize>() != self.fiber_size {
            return Err(Error::Input("factor atlases do not match the fiber size".into()));
        }
        let strides = strides(&degrees);
        let digits = |i: usize| -> Vec<usize> {
            degrees.iter().zip(&strides).map(|(d, s)| (i / s) % d).collect()
        };
        let n = self.fiber_size;
        let mut tuples: Vec<Option<Vec<usize>>> = vec![None; self.orbit_count];
        for i in 0..n {
            for j in 0..n {
                let (di, dj) = (digits(i), digits(j));
                let t: Vec<usize> =
                    factors.iter().enumerate().map(|(k, a)| a.orbit(di[k], dj[k])).collect();
                let slot = &mut tuples[self.orbit(i, j)];
                match slot {
                    None => *slot = Some(t),
                    Some(prev) if *prev == t => {}
                    Some(_) => {
                        return Err(Error::Internal(
                            "an orbit of the product spans several factor orbit tuples".into(),
                        ))
                    }
                }
            }
        }
        let tuples: Vec<Vec<usize>> = tuples.into_iter().map(|t| t.expect("every orbit is hit")).collect();
        let distinct: BTreeSet<&Vec<usize>> = tuples.iter().collect();
        let expected: usize = factors.iter().map(ComponentAtlas::orbit_count).product();
        if distinct.len() != tuples.len() || tuples.len() != expected {
            return Err(Error::Internal("product atlas is not the product partition".into()));
        }
        Ok(tuples)
    }
}

/// Components of the fiber product from the monodromy generators.
pub fn pair_orbits(rep: &MonodromyRep) -> ComponentAtlas {
    ComponentAtlas::from_generators(rep.fiber_size(), rep.generators())
}

/// Radially from the base to `|y|`, then along that circle to `y`.
pub fn transport_waypoints(base: Point, y: Point) -> Vec<Point> {
    let r = y.norm();
    let start = base.arg();
    let mut pts = vec![base, Point::from_polar(r, start)];
    let delta = wrap_pi(y.arg() - start);
    push_arc(Point::new(0.0, 0.0), r, start, delta, &mut pts);
    if let Some(last) = pts.last_mut() {
        *last = y;
    }
    pts
}

/// The base fiber of `rep`, continued to the regular value `y` with labels kept.
pub fn transport(map: &BlaschkeProduct, rep: &FactorMonodromy, y: Point, tol: &Tolerances) -> Result<Vec<Point>> {
    if !(y.norm() < 1.0) {
        return Err(Error::Input(format!("{y} is not inside the unit disc")));
    }
    for v in &rep.critical_values {
        if (y - v).norm() <= tol.regular_value_margin {
            return Err(Error::Precondition(format!("{y} is too close to the critical value {v}")));
        }
    }
    let planner = PathPlanner::new(rep.critical_values.clone(), tol.lasso_radius());
    let path = planner.route(&transport_waypoints(rep.base_point, y))?;
    track(map, &path, &rep.base_fiber, tol)
}

/// Label of `p` within a labelled fiber, requiring an unambiguous close match.
pub fn identify(fiber: &[Point], p: Point) -> Result<usize> {
    let (j, d) = nearest_unambiguous(fiber, p)?;
    if d > ON_FIBER {
        return Err(Error::Precondition(format!("{p} is not on the fiber (nearest point {d:e} away)")));
    }
    Ok(j)
}

/// Orbit id of the pair `(z, w)`, which must satisfy `f(z) = f(w)`.
pub fn component_of(
    map: &SymbolMap,
    rep: &MonodromyRep,
    atlas: &ComponentAtlas,
    z: &[Point],
    w: &[Point],
    tol: &Tolerances,
) -> Result<usize> {
    if z.len() != map.dimension() || w.len() != map.dimension() {
        return Err(Error::Input("point dimension does not match the symbol".into()));
    }
    let mut lz = Vec::new();
    let mut lw = Vec::new();
    for (k, (f, fm)) in map.factors().iter().zip(rep.factors()).enumerate() {
        let y = f.eval(z[k])?;
        let yw = f.eval(w[k])?;
        if (y - yw).norm() > VALUE_MATCH {
            return Err(Error::Precondition(format!(
                "f({}) and f({}) differ by {:e}",
                z[k],
                w[k],
                (y - yw).norm()
            )));
        }
        let fiber = transport(f, fm, y, tol)?;
        lz.push(identify(&fiber, z[k])?);
        lw.push(identify(&fiber, w[k])?);
    }
    Ok(atlas.orbit(rep.combine_labels(&lz), rep.combine_labels(&lw)))
}

/// Writes `path_id,step,y_re,y_im,branch_index,z_re,z_im` rows.
pub fn write_paths_csv<W: Write>(mut out: W, rep: &MonodromyRep) -> Result<()> {
    writeln!(out, "path_id,step,y_re,y_im,branch_index,z_re,z_im")?;
    for (factor, path) in rep.tracks() {
        for s in &path.samples {
            for (b, z) in s.fiber.iter().enumerate() {
                writeln!(
                    out,
                    "f{factor}-{},{},{:.16e},{:.16e},{},{:.16e},{:.16e}",
                    path.id, s.step, s.y.re, s.y.im, b, z.re, z.im
                )?;
            }
        }
    }
    Ok(())
}
