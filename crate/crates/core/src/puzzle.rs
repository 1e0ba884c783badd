//! Puzzle pieces of the basin of infinity.
//!
//! Depth-0 is the closed disk |z| ≤ R whose complement U₀ is forward
//! invariant; depth-n pieces are the bounded complementary components of
//! the curves where |fⁿ| = R. Every vertex of a depth-n curve carries a
//! parameter t with fⁿ(z) = R·e^{it}, which keeps refinement on the curve.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curve::{point_segment_distance, winding_number, JordanPolyline, Orientation};
use crate::error::{Error, Result};
use crate::geometry::{diameter_of, nesting_relation, Nesting};
use crate::point::PlanePoint;
use crate::poly::roots_all;
use crate::ratmap::{CriticalOrbitReport, RationalMap, ROOT_TOL};

/// Chordal clearance demanded of the invariant circle.
pub const DEFAULT_MARGIN: f64 = 1e-2;
/// Bound on the sphere distance from fⁿ(z) to ∂U₀ along depth-n curves.
pub const DEFAULT_LIFT_TOL: f64 = 1e-6;
pub const DEFAULT_PIECE_CAP: usize = 4096;
pub const DEFAULT_SHRINK_RATIO: f64 = 0.9;
/// Target vertex spacing is diameter / STEPS_PER_DIAMETER.
pub const STEPS_PER_DIAMETER: f64 = 256.0;

/// Radii tried for U₀ are 2^(k/4) for k in this range.
const RADIUS_EXPONENTS: std::ops::RangeInclusive<i32> = -40..=80;
const ADMISSIBILITY_SAMPLES: usize = 1024;
const MAX_SUBDIVISION: usize = 16;
const MAX_INSERT_LEVEL: usize = 40;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvariantDisk {
    pub boundary: JordanPolyline,
    pub radius: f64,
    pub contains_infinity: bool,
    pub margin: f64,
    /// Finite postcritical orbit points used for avoidance and end flags.
    pub postcritical: Vec<PlanePoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PuzzlePiece {
    pub id: usize,
    pub depth: usize,
    pub boundary: JordanPolyline,
    pub parent: Option<usize>,
    pub image: Option<usize>,
    pub local_degree: usize,
    /// Number of preimage strands fused into the boundary.
    pub covering_degree: usize,
    pub critical_points_inside: Vec<(PlanePoint, usize)>,
    pub poles_inside: Vec<PlanePoint>,
    pub diameter: f64,
    pub interior_point: PlanePoint,
    #[serde(skip)]
    params: Vec<f64>,
    #[serde(skip)]
    period: f64,
}

impl PuzzlePiece {
    /// Parameters t with fⁿ(z_k) = R·e^{i t_k}.
    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn contains(&self, z: Complex64) -> bool {
        self.boundary.contains(z)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PuzzleOptions {
    pub lift_tol: f64,
    pub piece_cap: usize,
    pub shrink_ratio: f64,
    pub seed: u64,
}

impl Default for PuzzleOptions {
    fn default() -> Self {
        PuzzleOptions {
            lift_tol: DEFAULT_LIFT_TOL,
            piece_cap: DEFAULT_PIECE_CAP,
            shrink_ratio: DEFAULT_SHRINK_RATIO,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PuzzleForest {
    pub map: RationalMap,
    pub root: InvariantDisk,
    pub pieces: Vec<PuzzlePiece>,
    /// Piece ids by depth.
    pub levels: Vec<Vec<usize>>,
    /// Depths at which the piece cap discarded pieces.
    pub capped_depths: Vec<usize>,
    pub options: PuzzleOptions,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EndClass {
    Periodic { period: usize },
    EventuallyPeriodic { period: usize, preperiod: usize },
    ShrinkingTrivialCandidate,
    Undecided,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct End {
    pub id: usize,
    /// Piece ids from depth 0 to the deepest level.
    pub chain: Vec<usize>,
    pub classification: EndClass,
    pub stable_degree: usize,
    pub meets_postcritical: bool,
    pub degrees: Vec<usize>,
    pub diameters: Vec<f64>,
}

impl End {
    pub fn is_shrinking(&self) -> bool {
        self.classification == EndClass::ShrinkingTrivialCandidate
    }

    pub fn preperiod(&self) -> Option<usize> {
        match self.classification {
            EndClass::EventuallyPeriodic { preperiod, .. } => Some(preperiod),
            _ => None,
        }
    }
}

/// A curve lifted by `lift_boundary`, tagged with its source.
#[derive(Clone, Debug, PartialEq)]
pub struct LiftedCurve {
    pub curve: JordanPolyline,
    pub image_index: usize,
    pub covering_degree: usize,
}

fn circle_chordal_gap(w: Complex64, r: f64) -> f64 {
    let a = w.norm();
    2.0 * (a - r).abs() / ((1.0 + a * a).sqrt() * (1.0 + r * r).sqrt())
}

fn postcritical_points(reports: &[CriticalOrbitReport]) -> Vec<PlanePoint> {
    let mut pts: Vec<PlanePoint> = Vec::new();
    for rep in reports {
        for p in &rep.orbit_prefix {
            if !p.is_infinite() && !pts.iter().any(|q| q.chordal(p) < 1e-12) {
                pts.push(*p);
            }
        }
    }
    pts
}

/// Whether |z| = r bounds a forward-invariant neighbourhood of ∞ with the
/// given chordal margin.
pub fn disk_admissible(f: &RationalMap, reports: &[CriticalOrbitReport], r: f64, margin: f64) -> Result<bool> {
    if !(r > 0.0) {
        return Ok(false);
    }
    for k in 0..ADMISSIBILITY_SAMPLES {
        let z = Complex64::from_polar(r, std::f64::consts::TAU * k as f64 / ADMISSIBILITY_SAMPLES as f64);
        let w = match f.evaluate(PlanePoint::Finite(z)) {
            PlanePoint::Finite(w) => w,
            PlanePoint::Infinity => return Ok(false),
        };
        if w.norm() <= r || circle_chordal_gap(w, r) < margin {
            return Ok(false);
        }
    }
    // 1/f must be holomorphic on U₀, so zeros and poles both sit inside.
    let zeros = if f.num().degree() > 0 { roots_all(f.num(), ROOT_TOL)? } else { Vec::new() };
    for p in f.poles()?.into_iter().chain(zeros) {
        if p.norm() >= r || circle_chordal_gap(p, r) < margin {
            return Ok(false);
        }
    }
    for p in postcritical_points(reports) {
        if circle_chordal_gap(p.finite().unwrap(), r) < margin {
            return Ok(false);
        }
    }
    Ok(true)
}

pub fn build_invariant_disk(f: &RationalMap, reports: &[CriticalOrbitReport]) -> Result<InvariantDisk> {
    build_invariant_disk_with_margin(f, reports, DEFAULT_MARGIN)
}

/// Smallest admissible radius on the grid 2^(k/4).
pub fn build_invariant_disk_with_margin(
    f: &RationalMap,
    reports: &[CriticalOrbitReport],
    margin: f64,
) -> Result<InvariantDisk> {
    match f.infinity_fixed_point() {
        None => return Err(Error::Rejected("infinity is not a fixed point".into())),
        Some(fp) if !fp.class.is_attracting() => {
            return Err(Error::Rejected(format!(
                "fixed point at infinity is not attracting (multiplier {:.6})",
                fp.multiplier.norm()
            )))
        }
        Some(_) => {}
    }
    for k in RADIUS_EXPONENTS {
        let r = 2f64.powf(k as f64 / 4.0);
        if disk_admissible(f, reports, r, margin)? {
            return Ok(InvariantDisk {
                boundary: circle_polyline(r)?,
                radius: r,
                contains_infinity: true,
                margin,
                postcritical: postcritical_points(reports),
            });
        }
    }
    Err(Error::NonConvergence {
        what: "invariant disk radius search".into(),
        residual: 2f64.powf(*RADIUS_EXPONENTS.end() as f64 / 4.0),
    })
}

fn circle_vertex_count() -> usize {
    (std::f64::consts::PI * STEPS_PER_DIAMETER).ceil() as usize
}

fn circle_polyline(r: f64) -> Result<JordanPolyline> {
    JordanPolyline::circle(Complex64::new(0.0, 0.0), r, circle_vertex_count())
}

/// All preimages of a finite point, sorted.
fn preimage_roots(f: &RationalMap, z: Complex64) -> Result<Vec<Complex64>> {
    let g = f.num() - &f.den().scale_by(z);
    let roots = roots_all(&g, ROOT_TOL)?;
    if roots.len() != f.degree() {
        return Err(Error::Inconsistency(format!("{} preimages of {z}, expected {}", roots.len(), f.degree())));
    }
    Ok(roots)
}

/// Newton on P(w) − z·Q(w) from each strand position; `None` when a step is
/// not clearly separated from the other strands.
fn try_step(f: &RationalMap, cur: &[Complex64], to: Complex64) -> Option<Vec<Complex64>> {
    let (p, q) = (f.num(), f.den());
    let d = cur.len();
    let mut next = Vec::with_capacity(d);
    for (s, &w0) in cur.iter().enumerate() {
        let sep = (0..d)
            .filter(|&o| o != s)
            .map(|o| (cur[o] - w0).norm())
            .fold(f64::INFINITY, f64::min);
        let mut w = w0;
        let mut ok = false;
        for _ in 0..30 {
            let (pv, dp) = p.eval_with_derivative(w);
            let (qv, dq) = q.eval_with_derivative(w);
            let g = pv - to * qv;
            let dg = dp - to * dq;
            let step = g / dg;
            if !step.re.is_finite() || !step.im.is_finite() {
                return None;
            }
            w -= step;
            if step.norm() <= 1e-14 * w.norm().max(1.0) {
                ok = true;
                break;
            }
        }
        let scale = p.residual_scale(w) + to.norm() * q.residual_scale(w);
        let residual = (p.eval(w) - to * q.eval(w)).norm();
        if !(ok || residual <= 1e-12 * scale) || (w - w0).norm() >= 0.3 * sep {
            return None;
        }
        next.push(w);
    }
    for a in 0..d {
        for b in (a + 1)..d {
            if (next[a] - next[b]).norm() <= 1e-9 * next[a].norm().max(1.0) {
                return None;
            }
        }
    }
    Some(next)
}

fn step_strands(f: &RationalMap, cur: &[Complex64], from: Complex64, to: Complex64, level: usize) -> Result<Vec<Complex64>> {
    if let Some(next) = try_step(f, cur, to) {
        return Ok(next);
    }
    if level >= MAX_SUBDIVISION {
        return Err(Error::Inconsistency(format!(
            "preimage branches collide near {to} (substep refinement exhausted)"
        )));
    }
    let mid = (from + to) * 0.5;
    let half = step_strands(f, cur, from, mid, level + 1)?;
    step_strands(f, &half, mid, to, level + 1)
}

/// Strand positions `pos[s][k]` over a closed loop of source points, and the
/// permutation of strands produced by one traversal.
fn track_preimages(f: &RationalMap, z: &[Complex64]) -> Result<(Vec<Vec<Complex64>>, Vec<usize>)> {
    let m = z.len();
    let start = preimage_roots(f, z[0])?;
    let d = start.len();
    let mut pos: Vec<Vec<Complex64>> = start.iter().map(|&w| {
        let mut v = Vec::with_capacity(m);
        v.push(w);
        v
    }).collect();
    let mut cur = start.clone();
    for k in 1..=m {
        cur = step_strands(f, &cur, z[k - 1], z[k % m], 0)?;
        if k < m {
            for s in 0..d {
                pos[s].push(cur[s]);
            }
        }
    }
    let mut perm = vec![usize::MAX; d];
    let mut used = vec![false; d];
    for s in 0..d {
        let (j, dist) = start
            .iter()
            .enumerate()
            .map(|(j, w)| (j, (w - cur[s]).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        if used[j] || dist > 1e-7 * cur[s].norm().max(1.0) {
            return Err(Error::Inconsistency("open strand after a full traversal".into()));
        }
        used[j] = true;
        perm[s] = j;
    }
    Ok((pos, perm))
}

fn perm_cycles(perm: &[usize]) -> Vec<Vec<usize>> {
    let mut seen = vec![false; perm.len()];
    let mut cycles = Vec::new();
    for s in 0..perm.len() {
        if seen[s] {
            continue;
        }
        let mut cyc = Vec::new();
        let mut x = s;
        while !seen[x] {
            seen[x] = true;
            cyc.push(x);
            x = perm[x];
        }
        cycles.push(cyc);
    }
    cycles
}

fn check_clearance(f: &RationalMap, curve: &JordanPolyline, tol: f64) -> Result<()> {
    for (c, _) in f.finite_critical_points()? {
        if let PlanePoint::Finite(v) = f.evaluate(PlanePoint::Finite(c)) {
            let d = curve.distance_to(v);
            if d < tol {
                return Err(Error::domain(format!("curve passes within {d:.2e} of the critical value {v}")));
            }
        }
    }
    Ok(())
}

/// All components of f⁻¹(curves), each a closed polyline through exact
/// preimages of the input vertices.
pub fn lift_boundary(f: &RationalMap, curves: &[JordanPolyline]) -> Result<Vec<LiftedCurve>> {
    let mut out = Vec::new();
    for (idx, curve) in curves.iter().enumerate() {
        check_clearance(f, curve, DEFAULT_LIFT_TOL)?;
        let (pos, perm) = track_preimages(f, curve.vertices())?;
        for cyc in perm_cycles(&perm) {
            let verts: Vec<Complex64> = cyc.iter().flat_map(|&s| pos[s].iter().copied()).collect();
            out.push(LiftedCurve {
                curve: JordanPolyline::new(verts, curve.depth_tag() + 1)?,
                image_index: idx,
                covering_degree: cyc.len(),
            });
        }
    }
    Ok(out)
}

/// Newton on fⁿ(w) = target; stops once steps reach rounding level.
fn newton_iterate(f: &RationalMap, n: usize, guess: Complex64, target: Complex64) -> Option<Complex64> {
    let mut w = guess;
    let tol = 1e-9 * target.norm().max(1.0);
    // (residual, point, rounding floor of the residual at that point)
    let mut best: Option<(f64, Complex64, f64)> = None;
    let floor = |w: Complex64, dw: Complex64| 64.0 * f64::EPSILON * n as f64 * w.norm().max(1.0) * dw.norm();
    for _ in 0..40 {
        let (fw, dw) = f.iterate_with_derivative(w, n)?;
        let res = (fw - target).norm();
        match best {
            Some(b) if res >= b.0 => break,
            _ => best = Some((res, w, floor(w, dw))),
        }
        let step = (fw - target) / dw;
        if !step.re.is_finite() || !step.im.is_finite() {
            break;
        }
        w -= step;
        if step.norm() <= 4.0 * f64::EPSILON * w.norm().max(f64::MIN_POSITIVE) {
            if let Some((fw, dw)) = f.iterate_with_derivative(w, n) {
                let res = (fw - target).norm();
                if res < best.unwrap().0 {
                    best = Some((res, w, floor(w, dw)));
                }
            }
            break;
        }
    }
    best.filter(|b| b.0 <= tol.max(b.2)).map(|b| b.1)
}

struct Refiner<'a> {
    f: &'a RationalMap,
    depth: usize,
    radius: f64,
    fine: f64,
    /// Critical values of f; chords must not pass them on the wrong side.
    protect: Vec<Complex64>,
}

impl Refiner<'_> {
    fn insert(&self, a: (Complex64, f64), b: (Complex64, f64), out: &mut Vec<(Complex64, f64)>, level: usize) -> Result<()> {
        let gap = (b.0 - a.0).norm();
        let near = self
            .protect
            .iter()
            .map(|&v| point_segment_distance(v, a.0, b.0))
            .fold(f64::INFINITY, f64::min);
        let coarse = gap > self.fine;
        if !coarse && near >= 4.0 * self.fine {
            return Ok(());
        }
        if level >= MAX_INSERT_LEVEL {
            return Err(Error::Inconsistency("curve refinement did not resolve a gap".into()));
        }
        let tm = 0.5 * (a.1 + b.1);
        let guess = (a.0 + b.0) * 0.5;
        let target = Complex64::from_polar(self.radius, tm);
        let w = if near < 4.0 * self.fine {
            // strands crowd together here; Newton may jump across
            self.bracketed(a, b, tm)
        } else {
            newton_iterate(self.f, self.depth, guess, target)
                .filter(|w| (w - guess).norm() <= 0.5 * gap)
                .or_else(|| self.continuation(a, tm, 32).filter(|w| (w - guess).norm() <= gap))
        };
        let w = match w {
            Some(w) => w,
            None if !coarse => return Ok(()),
            None => {
                return Err(Error::NonConvergence {
                    what: format!("midpoint insertion at t = {tm:.6}"),
                    residual: gap,
                })
            }
        };
        if !coarse {
            let sag = point_segment_distance(w, a.0, b.0);
            let tri = [a.0, w, b.0];
            let cut = self.protect.iter().any(|&v| winding_number(&tri, v) != 0);
            if !cut && sag <= 0.5 * near {
                return Ok(());
            }
        }
        self.insert(a, (w, tm), out, level + 1)?;
        out.push((w, tm));
        self.insert((w, tm), b, out, level + 1)
    }

    /// Follow the level curve from `a` to parameter `t` in small steps.
    fn continuation(&self, a: (Complex64, f64), t: f64, steps: usize) -> Option<Complex64> {
        let mut w = a.0;
        for k in 1..=steps {
            let tk = a.1 + (t - a.1) * k as f64 / steps as f64;
            w = newton_iterate(self.f, self.depth, w, Complex64::from_polar(self.radius, tk))?;
        }
        Some(w)
    }

    /// The level-curve point at `t`, reached from both ends of the chord.
    fn bracketed(&self, a: (Complex64, f64), b: (Complex64, f64), t: f64) -> Option<Complex64> {
        let gap = (b.0 - a.0).norm();
        [32, 128, 512].into_iter().find_map(|steps| {
            let wa = self.continuation(a, t, steps)?;
            let wb = self.continuation(b, t, steps)?;
            ((wa - wb).norm() <= 1e-6 * gap).then_some(wa)
        })
    }
}

/// Densify to spacing ≤ h/4, then keep vertices roughly every 3h/4 of
/// arclength, where h = diameter / STEPS_PER_DIAMETER.
fn refine_curve(
    f: &RationalMap,
    depth: usize,
    radius: f64,
    verts: &[Complex64],
    ts: &[f64],
    period: f64,
) -> Result<(Vec<Complex64>, Vec<f64>)> {
    let h = diameter_of(verts) / STEPS_PER_DIAMETER;
    let protect: Vec<Complex64> = f
        .finite_critical_points()?
        .into_iter()
        .filter_map(|(c, _)| f.evaluate(PlanePoint::Finite(c)).finite())
        .collect();
    let refiner = Refiner {
        f,
        depth,
        radius,
        fine: h / 4.0,
        protect,
    };
    let m = verts.len();
    let mut fine: Vec<(Complex64, f64)> = Vec::with_capacity(4 * m);
    for k in 0..m {
        let a = (verts[k], ts[k]);
        let b = if k + 1 < m { (verts[k + 1], ts[k + 1]) } else { (verts[0], ts[0] + period) };
        fine.push(a);
        refiner.insert(a, b, &mut fine, 0)?;
    }
    let sag_tol = h / 32.0;
    let mut kept = vec![0usize];
    let mut acc = 0.0;
    for i in 1..fine.len() {
        acc += (fine[i].0 - fine[i - 1].0).norm();
        let last = *kept.last().unwrap();
        let next = fine[(i + 1) % fine.len()].0;
        let keep = acc >= 0.75 * h
            || {
                // skipping i must not cut a corner off the curve
                (fine[i].0 - fine[last].0).norm() >= 0.25 * h
                    && fine[last + 1..=i]
                        .iter()
                        .any(|w| point_segment_distance(w.0, fine[last].0, next) > sag_tol)
            }
            || cuts_off_any(&fine[last..=i], next, &refiner.protect);
        if keep {
            kept.push(i);
            acc = 0.0;
        }
    }
    let closing = acc + (fine[0].0 - fine[fine.len() - 1].0).norm();
    if closing < 0.375 * h && kept.len() > 1 {
        let prev = kept[kept.len() - 2];
        if !cuts_off_any(&fine[prev..], fine[0].0, &refiner.protect) {
            kept.pop();
        }
    }
    Ok(kept.into_iter().map(|i| fine[i]).unzip())
}

/// Whether replacing the path `run` (ending at `next`) by its chord puts a
/// point on the other side or halves its clearance.
fn cuts_off_any(run: &[(Complex64, f64)], next: Complex64, points: &[Complex64]) -> bool {
    if points.is_empty() || run.len() < 2 {
        return false;
    }
    let mut poly: Vec<Complex64> = run.iter().map(|p| p.0).collect();
    poly.push(next);
    points.iter().any(|&v| {
        let chord = point_segment_distance(v, run[0].0, next);
        let path = run[1..].iter().map(|w| (w.0 - v).norm()).fold(f64::INFINITY, f64::min);
        chord < 0.5 * path || winding_number(&poly, v) != 0
    })
}

fn inside_all(outer: &JordanPolyline, inner: &JordanPolyline) -> bool {
    nesting_relation(inner, outer) == Nesting::AInB
}

struct Candidate {
    source: usize,
    vertices: Vec<Complex64>,
    params: Vec<f64>,
    period: f64,
    covering: usize,
}

impl PuzzleForest {
    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn piece(&self, id: usize) -> &PuzzlePiece {
        &self.pieces[id]
    }

    pub fn level(&self, depth: usize) -> impl Iterator<Item = &PuzzlePiece> {
        self.levels[depth].iter().map(move |&i| &self.pieces[i])
    }

    /// `image` applied `k` times.
    pub fn image_power(&self, mut id: usize, k: usize) -> Option<usize> {
        for _ in 0..k {
            id = self.pieces[id].image?;
        }
        Some(id)
    }

    /// Largest sphere distance from fⁿ(z) to ∂U₀ over the piece's vertices.
    pub fn lift_residual(&self, id: usize) -> f64 {
        let p = &self.pieces[id];
        p.boundary
            .vertices()
            .iter()
            .map(|&z| match self.map.iterate_with_derivative(z, p.depth) {
                Some((w, _)) => circle_chordal_gap(w, self.root.radius),
                None => f64::INFINITY,
            })
            .fold(0.0, f64::max)
    }

    /// Forest dump: {depth, pieces: [{id, parent, image, degree, vertices, poles, crits, diameter}]}.
    pub fn dump_json(&self) -> serde_json::Value {
        let pieces: Vec<serde_json::Value> = self
            .pieces
            .iter()
            .map(|p| {
                serde_json::json!({
                    "id": p.id,
                    "depth": p.depth,
                    "parent": p.parent,
                    "image": p.image,
                    "degree": p.local_degree,
                    "vertices": p.boundary.vertices().iter().map(|z| [z.re, z.im]).collect::<Vec<_>>(),
                    "poles": p.poles_inside,
                    "crits": p.critical_points_inside,
                    "diameter": p.diameter,
                })
            })
            .collect();
        serde_json::json!({ "depth": self.depth(), "radius": self.root.radius, "pieces": pieces })
    }
}

pub fn assemble_forest(f: &RationalMap, u0: &InvariantDisk, n: usize) -> Result<PuzzleForest> {
    assemble_forest_with(f, u0, n, &PuzzleOptions::default())
}

pub fn assemble_forest_with(f: &RationalMap, u0: &InvariantDisk, n: usize, opts: &PuzzleOptions) -> Result<PuzzleForest> {
    if n < 1 {
        return Err(Error::domain("forest depth must be at least 1"));
    }
    let crits = f.finite_critical_points()?;
    let poles = f.poles()?;
    let m0 = u0.boundary.len();
    let root = PuzzlePiece {
        id: 0,
        depth: 0,
        boundary: u0.boundary.clone(),
        parent: None,
        image: None,
        local_degree: f.degree(),
        covering_degree: 1,
        critical_points_inside: crits
            .iter()
            .filter(|(c, _)| c.norm() < u0.radius)
            .map(|&(c, k)| (PlanePoint::Finite(c), k))
            .collect(),
        poles_inside: poles.iter().map(|&p| PlanePoint::Finite(p)).collect(),
        diameter: diameter_of(u0.boundary.vertices()),
        interior_point: PlanePoint::Finite(Complex64::new(0.0, 0.0)),
        params: (0..m0).map(|k| std::f64::consts::TAU * k as f64 / m0 as f64).collect(),
        period: std::f64::consts::TAU,
    };
    let mut forest = PuzzleForest {
        map: f.clone(),
        root: u0.clone(),
        pieces: vec![root],
        levels: vec![vec![0]],
        capped_depths: Vec::new(),
        options: opts.clone(),
    };
    for depth in 1..=n {
        forest.grow(depth, &crits, &poles).map_err(|e| e.at_depth(depth))?;
    }
    Ok(forest)
}

impl PuzzleForest {
    fn grow(&mut self, depth: usize, crits: &[(Complex64, usize)], poles: &[Complex64]) -> Result<()> {
        let f = self.map.clone();
        let radius = self.root.radius;
        let sources = self.levels[depth - 1].clone();

        let lifted: Vec<Vec<Candidate>> = sources
            .par_iter()
            .map(|&src| self.lift_piece(&f, src, depth))
            .collect::<Result<_>>()?;
        let mut candidates: Vec<Candidate> = lifted.into_iter().flatten().collect();

        let refined: Vec<(Vec<Complex64>, Vec<f64>)> = candidates
            .par_iter()
            .map(|c| refine_curve(&f, depth, radius, &c.vertices, &c.params, c.period))
            .collect::<Result<_>>()?;
        for (c, (v, t)) in candidates.iter_mut().zip(refined) {
            c.vertices = v;
            c.params = t;
        }

        let built: Vec<PuzzlePiece> = candidates
            .par_iter()
            .map(|c| self.build_piece(&f, c, depth, crits, poles))
            .collect::<Result<_>>()?;

        let keep = self.apply_cap(&built, depth);
        let base = self.pieces.len();
        let mut level = Vec::with_capacity(keep.len());
        for (slot, idx) in keep.into_iter().enumerate() {
            let mut piece = built[idx].clone();
            piece.id = base + slot;
            level.push(piece.id);
            self.pieces.push(piece);
        }
        self.levels.push(level);
        Ok(())
    }

    fn lift_piece(&self, f: &RationalMap, src: usize, depth: usize) -> Result<Vec<Candidate>> {
        let piece = &self.pieces[src];
        check_clearance(f, &piece.boundary, self.options.lift_tol)?;
        let (pos, perm) = track_preimages(f, piece.boundary.vertices())?;
        let m = piece.params.len();
        let mut out = Vec::new();
        for cyc in perm_cycles(&perm) {
            let mut vertices = Vec::with_capacity(cyc.len() * m);
            let mut params = Vec::with_capacity(cyc.len() * m);
            for (j, &s) in cyc.iter().enumerate() {
                vertices.extend_from_slice(&pos[s]);
                params.extend(piece.params.iter().map(|t| t + j as f64 * piece.period));
            }
            // Components bounding holes around poles run clockwise in t.
            if crate::curve::signed_area(&vertices) <= 0.0 {
                continue;
            }
            let vertices = vertices
                .iter()
                .zip(&params)
                .map(|(&w, &t)| {
                    newton_iterate(f, depth, w, Complex64::from_polar(self.root.radius, t))
                        .filter(|p| (p - w).norm() <= 1e-6 * w.norm().max(1.0))
                        .unwrap_or(w)
                })
                .collect();
            out.push(Candidate {
                source: src,
                vertices,
                params,
                period: piece.period * cyc.len() as f64,
                covering: cyc.len(),
            });
        }
        Ok(out)
    }

    fn build_piece(
        &self,
        f: &RationalMap,
        c: &Candidate,
        depth: usize,
        crits: &[(Complex64, usize)],
        poles: &[Complex64],
    ) -> Result<PuzzlePiece> {
        let boundary = JordanPolyline::new(c.vertices.clone(), depth)?;
        if boundary.orientation() != Orientation::Positive {
            return Err(Error::Inconsistency("refined piece boundary changed orientation".into()));
        }
        let interior = boundary.interior_point();
        let mut parents: Vec<usize> = self.levels[depth - 1]
            .iter()
            .copied()
            .filter(|&p| inside_all(&self.pieces[p].boundary, &boundary))
            .collect();
        if parents.len() > 1 {
            // a piece below the parents' resolution: the probe decides
            let dist = |p: usize| {
                let b = &self.pieces[p].boundary;
                if b.contains(interior) { 0.0 } else { b.distance_to(interior) }
            };
            let best = parents.iter().map(|&p| dist(p)).fold(f64::INFINITY, f64::min);
            parents.retain(|&p| dist(p) == best);
        }
        let parent = match parents.as_slice() {
            [p] => *p,
            [] => return Err(Error::Inconsistency(format!("depth-{depth} piece near {interior} has no parent"))),
            _ => return Err(Error::Inconsistency(format!("depth-{depth} piece near {interior} has several parents"))),
        };
        let critical_points_inside: Vec<(PlanePoint, usize)> = crits
            .iter()
            .filter(|(z, _)| boundary.contains(*z))
            .map(|&(z, k)| (PlanePoint::Finite(z), k))
            .collect();
        let poles_inside: Vec<PlanePoint> = poles
            .iter()
            .filter(|z| boundary.contains(**z))
            .map(|&z| PlanePoint::Finite(z))
            .collect();
        let image = &self.pieces[c.source];
        let mut piece = PuzzlePiece {
            id: usize::MAX,
            depth,
            diameter: diameter_of(boundary.vertices()),
            boundary,
            parent: Some(parent),
            image: Some(c.source),
            local_degree: 0,
            covering_degree: c.covering,
            critical_points_inside,
            poles_inside,
            interior_point: PlanePoint::Finite(interior),
            params: c.params.clone(),
            period: c.period,
        };
        piece.local_degree = degree_against(f, &piece, image)?;
        Ok(piece)
    }

    /// Indices of pieces kept at a depth; everything when under the cap.
    fn apply_cap(&mut self, built: &[PuzzlePiece], depth: usize) -> Vec<usize> {
        let cap = self.options.piece_cap.max(1);
        if built.len() <= cap {
            return (0..built.len()).collect();
        }
        self.capped_depths.push(depth);
        let ratio = self.options.shrink_ratio;
        let (mut keep, mut rest): (Vec<usize>, Vec<usize>) = (0..built.len()).partition(|&i| {
            let p = &built[i];
            p.diameter / self.pieces[p.parent.unwrap()].diameter > ratio
        });
        keep.truncate(cap);
        let mut rng = ChaCha8Rng::seed_from_u64(self.options.seed ^ depth as u64);
        rest.shuffle(&mut rng);
        keep.extend(rest.into_iter().take(cap - keep.len()));
        keep.sort_unstable();
        keep
    }
}

/// Winding of f along the piece boundary around the image's interior point,
/// cross-checked against 1 + interior critical multiplicity.
fn degree_against(f: &RationalMap, piece: &PuzzlePiece, image: &PuzzlePiece) -> Result<usize> {
    let base = image.interior_point.finite().unwrap();
    let mapped: Vec<Complex64> = piece.boundary.vertices().iter().map(|&z| f.eval_finite(z)).collect();
    let w = winding_number(&mapped, base);
    if w <= 0 {
        return Err(Error::Inconsistency(format!(
            "boundary of piece at depth {} winds {w} times around its image",
            piece.depth
        )));
    }
    let w = w as usize;
    // Riemann–Hurwitz only applies to maps between disks; pieces around
    // poles are annular preimages and skip the check.
    if piece.poles_inside.is_empty() {
        let expected = 1 + piece
            .critical_points_inside
            .iter()
            .filter(|(c, _)| image.boundary.contains(f.eval_finite(c.finite().unwrap())))
            .map(|(_, k)| k)
            .sum::<usize>();
        if expected != w {
            return Err(Error::Inconsistency(format!(
                "piece at depth {} has winding degree {w} but Riemann–Hurwitz gives {expected}",
                piece.depth
            )));
        }
    }
    Ok(w)
}

/// Degree of f from a piece onto its image piece.
pub fn piece_degree(forest: &PuzzleForest, id: usize) -> Result<usize> {
    let piece = forest.pieces.get(id).ok_or_else(|| Error::domain(format!("no piece {id}")))?;
    let image = piece
        .image
        .ok_or_else(|| Error::domain("the depth-0 piece has no image edge"))?;
    degree_against(&forest.map, piece, &forest.pieces[image])
}

/// deg(fᵖ : P(γ_{n+p}) → P(γ_n)) along the image edges of the end's chain.
pub fn chain_degree(forest: &PuzzleForest, end: &End, p: usize, n: usize) -> Result<usize> {
    if n + p >= end.chain.len() {
        return Err(Error::domain(format!("depth {} exceeds the end chain", n + p)));
    }
    let mut id = end.chain[n + p];
    let mut deg = 1usize;
    for _ in 0..p {
        let piece = &forest.pieces[id];
        deg *= piece.local_degree;
        id = piece
            .image
            .ok_or_else(|| Error::Inconsistency(format!("piece {} has no image edge", piece.id)))?;
    }
    Ok(deg)
}

fn chain_is_periodic(forest: &PuzzleForest, chain: &[usize], p: usize) -> bool {
    let top = chain.len() - 1;
    if p == 0 || top < 2 * p {
        return false;
    }
    (0..=top - p).all(|n| forest.image_power(chain[n + p], p) == Some(chain[n]))
}

fn image_chain(forest: &PuzzleForest, chain: &[usize], k: usize) -> Option<Vec<usize>> {
    (0..chain.len() - k).map(|n| forest.image_power(chain[n + k], k)).collect()
}

/// One end per deepest-level piece, classified by diameter decay and the
/// f-action on its chain.
pub fn track_ends(forest: &PuzzleForest, shrink_ratio: f64) -> Result<Vec<End>> {
    let top = forest.depth();
    if top < 3 {
        return Err(Error::domain("end tracking needs a forest of depth at least 3"));
    }
    let post: Vec<Complex64> = forest.root.postcritical.iter().filter_map(|p| p.finite()).collect();
    let ends = forest.levels[top]
        .iter()
        .enumerate()
        .map(|(i, &leaf)| {
            let mut chain = vec![leaf];
            while let Some(p) = forest.pieces[*chain.last().unwrap()].parent {
                chain.push(p);
            }
            chain.reverse();
            let diameters: Vec<f64> = chain.iter().map(|&id| forest.pieces[id].diameter).collect();
            let degrees: Vec<usize> = chain.iter().map(|&id| forest.pieces[id].local_degree).collect();
            let shrinking = (top - 2..=top).all(|n| diameters[n] / diameters[n - 1] <= shrink_ratio);
            let classification = if shrinking {
                EndClass::ShrinkingTrivialCandidate
            } else {
                classify_chain(forest, &chain)
            };
            let leaf_piece = &forest.pieces[leaf];
            End {
                id: i,
                classification,
                stable_degree: leaf_piece.local_degree,
                meets_postcritical: post.iter().any(|&z| leaf_piece.contains(z)),
                chain,
                degrees,
                diameters,
            }
        })
        .collect();
    Ok(ends)
}

/// Classification of an end by the f-action on its chain alone, ignoring
/// diameter decay.
pub fn action_class(forest: &PuzzleForest, end: &End) -> EndClass {
    classify_chain(forest, &end.chain)
}

fn classify_chain(forest: &PuzzleForest, chain: &[usize]) -> EndClass {
    let top = chain.len() - 1;
    for p in 1..top {
        if chain_is_periodic(forest, chain, p) {
            return EndClass::Periodic { period: p };
        }
    }
    for k in 1..top {
        let Some(img) = image_chain(forest, chain, k) else {
            continue;
        };
        for p in 1..img.len().saturating_sub(1) {
            if chain_is_periodic(forest, &img, p) {
                return EndClass::EventuallyPeriodic { period: p, preperiod: k };
            }
        }
    }
    EndClass::Undecided
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ForestAudit {
    pub pairs_checked: usize,
    pub nesting_violations: Vec<(usize, usize)>,
    pub commutation_failures: Vec<usize>,
    pub max_lift_residual: f64,
    pub spacing_violations: Vec<usize>,
}

impl ForestAudit {
    pub fn is_clean(&self, lift_tol: f64) -> bool {
        self.nesting_violations.is_empty()
            && self.commutation_failures.is_empty()
            && self.spacing_violations.is_empty()
            && self.max_lift_residual < lift_tol
    }
}

/// Check nesting across depths, forest commutation, lift residuals and
/// vertex spacing.
pub fn audit_forest(forest: &PuzzleForest) -> ForestAudit {
    let ids: Vec<usize> = (0..forest.pieces.len()).collect();
    let per_piece: Vec<(usize, Vec<(usize, usize)>)> = ids
        .par_iter()
        .map(|&a| {
            let pa = &forest.pieces[a];
            let mut count = 0;
            let mut bad = Vec::new();
            for b in (a + 1)..forest.pieces.len() {
                let pb = &forest.pieces[b];
                if pb.depth == pa.depth {
                    continue;
                }
                count += 1;
                if nesting_relation(&pa.boundary, &pb.boundary) == Nesting::Violation {
                    bad.push((a, b));
                }
            }
            (count, bad)
        })
        .collect();
    let pairs_checked = per_piece.iter().map(|x| x.0).sum();
    let nesting_violations = per_piece.into_iter().flat_map(|x| x.1).collect();

    let commutation_failures = forest
        .pieces
        .iter()
        .filter(|p| p.depth >= 2)
        .filter(|p| {
            let ip = p.parent.and_then(|q| forest.pieces[q].image);
            let pi = p.image.and_then(|q| forest.pieces[q].parent);
            ip.is_none() || ip != pi
        })
        .map(|p| p.id)
        .collect();

    let max_lift_residual = ids
        .par_iter()
        .map(|&i| forest.lift_residual(i))
        .reduce(|| 0.0, f64::max);

    // vertices resolving a tip around a critical value may sit closer than h/4
    let protect: Vec<Complex64> = forest
        .map
        .finite_critical_points()
        .unwrap_or_default()
        .into_iter()
        .filter_map(|(c, _)| forest.map.evaluate(PlanePoint::Finite(c)).finite())
        .collect();
    let spacing_violations = forest
        .pieces
        .iter()
        .filter(|p| {
            let h = p.diameter / STEPS_PER_DIAMETER;
            p.boundary.segments().any(|(a, b)| {
                let gap = (b - a).norm();
                gap > 4.0 * h
                    || (gap < h / 4.0 && protect.iter().all(|&v| point_segment_distance(v, a, b) >= 4.0 * h))
            })
        })
        .map(|p| p.id)
        .collect();

    ForestAudit {
        pairs_checked,
        nesting_violations,
        commutation_failures,
        max_lift_residual,
        spacing_violations,
    }
}

/// Pieces per depth, as a compact summary.
pub fn level_counts(forest: &PuzzleForest) -> BTreeMap<usize, usize> {
    forest.levels.iter().enumerate().map(|(d, l)| (d, l.len())).collect()
}
