//! Diameters, turning, bounded-turning constants, fatness and nesting.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curve::{scanline_crossings, BBox, JordanPolyline};
use crate::error::{Error, Result};
use crate::point::PlanePoint;
use crate::puzzle::PuzzlePiece;
use crate::ratmap::RationalMap;

/// Default pair budget: exhaustive scans up to 2000 vertices.
pub const DEFAULT_PAIR_BUDGET: usize = 4_000_000;
/// Grid cells across the diameter when measuring fatness.
pub const FATNESS_GRID: f64 = 512.0;
/// Smallest fatness radius, in grid cells.
pub const FATNESS_MIN_CELLS: f64 = 8.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TurningReport {
    pub curve_id: String,
    #[serde(rename = "K_estimate")]
    pub k_estimate: f64,
    pub witness_pair: (PlanePoint, PlanePoint),
    pub sample_count: usize,
    pub resolution: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FatnessReport {
    pub component_id: String,
    pub tau_estimate: f64,
    pub witness: (PlanePoint, f64),
    pub probe_count: usize,
    pub degenerate: bool,
    pub resolution: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Nesting {
    AInB,
    BInA,
    Disjoint,
    Violation,
}

fn finite_points(points: &[PlanePoint]) -> Result<Vec<Complex64>> {
    points
        .iter()
        .map(|p| p.finite().ok_or_else(|| Error::domain("point at infinity has no Euclidean diameter")))
        .collect()
}

/// Euclidean diameter of a finite point set.
pub fn diameter(points: &[PlanePoint]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::domain("diameter needs at least two points"));
    }
    Ok(diameter_of(&finite_points(points)?))
}

/// Diameter of finite points via convex hull and rotating calipers.
pub fn diameter_of(points: &[Complex64]) -> f64 {
    diameter_pair(points).0
}

/// Diameter with a realizing pair.
pub fn diameter_pair(points: &[Complex64]) -> (f64, Complex64, Complex64) {
    let hull = convex_hull(points);
    let h = hull.len();
    match h {
        0 => return (0.0, Complex64::default(), Complex64::default()),
        1 => return (0.0, hull[0], hull[0]),
        2 => return ((hull[1] - hull[0]).norm(), hull[0], hull[1]),
        _ => {}
    }
    let cross = |o: Complex64, a: Complex64, b: Complex64| (a - o).re * (b - o).im - (a - o).im * (b - o).re;
    let mut best = (0.0, hull[0], hull[0]);
    let mut j = 1;
    for i in 0..h {
        let (a, b) = (hull[i], hull[(i + 1) % h]);
        while cross(a, b, hull[(j + 1) % h]).abs() > cross(a, b, hull[j]).abs() {
            j = (j + 1) % h;
        }
        for q in [hull[j], hull[(j + 1) % h]] {
            for p in [a, b] {
                let d = (q - p).norm();
                if d > best.0 {
                    best = (d, p, q);
                }
            }
        }
    }
    best
}

/// Andrew's monotone chain; counter-clockwise, collinear points dropped.
pub fn convex_hull(points: &[Complex64]) -> Vec<Complex64> {
    let mut pts: Vec<Complex64> = points.to_vec();
    pts.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: Complex64, a: Complex64, b: Complex64| (a - o).re * (b - o).im - (a - o).im * (b - o).re;
    let mut hull: Vec<Complex64> = Vec::with_capacity(2 * pts.len());
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

/// Largest gap between consecutive samples of an open point list.
fn open_resolution(k: &[Complex64]) -> f64 {
    k.windows(2).map(|w| (w[1] - w[0]).norm()).fold(0.0, f64::max)
}

fn nearest_distance(k: &[Complex64], z: Complex64) -> f64 {
    k.iter().map(|w| (w - z).norm()).fold(f64::INFINITY, f64::min)
}

/// Δ(K; z1, z2) = diam(K)/|z1 − z2|, infinite when z1 = z2.
pub fn turning(k: &[PlanePoint], z1: PlanePoint, z2: PlanePoint) -> Result<f64> {
    if k.len() < 2 {
        return Err(Error::domain("turning needs at least two samples"));
    }
    let pts = finite_points(k)?;
    let (a, b) = match (z1.finite(), z2.finite()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::domain("turning endpoints must be finite")),
    };
    let res = open_resolution(&pts);
    for z in [a, b] {
        let d = nearest_distance(&pts, z);
        if d > res.max(1e-12 * res.max(1.0)) {
            return Err(Error::domain(format!("point {z} is {d:.3e} from the sampled set (resolution {res:.3e})")));
        }
    }
    Ok(turning_value(diameter_of(&pts), (a - b).norm()))
}

fn turning_value(diam: f64, chord: f64) -> f64 {
    if chord == 0.0 {
        return f64::INFINITY;
    }
    let t = diam / chord;
    debug_assert!(t >= 1.0 - 1e-9, "turning below 1: {t}");
    t.max(1.0)
}

fn vertex_index(curve: &JordanPolyline, z: Complex64) -> Result<usize> {
    let res = curve.max_gap();
    let (i, d) = curve
        .vertices()
        .iter()
        .enumerate()
        .map(|(i, w)| (i, (w - z).norm()))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .expect("polyline has vertices");
    if d > res {
        return Err(Error::domain(format!("point {z} is not on the curve (distance {d:.3e})")));
    }
    Ok(i)
}

/// Arc `i → j` (forward, inclusive) of a closed vertex list.
fn forward_arc(v: &[Complex64], i: usize, j: usize) -> Vec<Complex64> {
    let n = v.len();
    let len = (j + n - i) % n;
    (0..=len).map(|k| v[(i + k) % n]).collect()
}

/// The complementary arc between `p` and `q` with smaller diameter.
///
/// Ties go to the forward arc starting at the lower vertex index.
pub fn smaller_subarc(curve: &JordanPolyline, p: PlanePoint, q: PlanePoint) -> Result<Vec<PlanePoint>> {
    let (a, b) = match (p.finite(), q.finite()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::domain("subarc endpoints must be finite")),
    };
    let (i, j) = (vertex_index(curve, a)?, vertex_index(curve, b)?);
    if i == j || (a - b).norm() <= curve.min_gap() * 0.5 {
        return Err(Error::domain("subarc endpoints coincide at curve resolution"));
    }
    let (lo, hi) = (i.min(j), i.max(j));
    let v = curve.vertices();
    let first = forward_arc(v, lo, hi);
    let second = forward_arc(v, hi, lo);
    let arc = if diameter_of(&second) < diameter_of(&first) { second } else { first };
    Ok(arc.into_iter().map(PlanePoint::Finite).collect())
}

/// Sampled bounded-turning constant of a closed curve.
pub fn turning_constant(curve: &JordanPolyline, budget: usize) -> TurningReport {
    turning_constant_seeded(curve, budget, 0)
}

pub fn turning_constant_seeded(curve: &JordanPolyline, budget: usize, seed: u64) -> TurningReport {
    let v = curve.vertices();
    let n = v.len();
    let (k, i, j, count) = if n.saturating_mul(n) <= budget.max(1) {
        exhaustive_turning(v)
    } else {
        sampled_turning(v, budget, seed)
    };
    TurningReport {
        curve_id: String::new(),
        k_estimate: k,
        witness_pair: (PlanePoint::Finite(v[i]), PlanePoint::Finite(v[j])),
        sample_count: count,
        resolution: curve.max_gap(),
    }
}

/// Better candidate: larger value, then lexicographically smaller pair.
fn better(a: (f64, usize, usize), b: (f64, usize, usize)) -> (f64, usize, usize) {
    if b.0 > a.0 || (b.0 == a.0 && (b.1, b.2) < (a.1, a.2)) {
        b
    } else {
        a
    }
}

/// Every vertex pair. `d[len][i]` is the diameter of the arc of `len + 1`
/// vertices starting at `i`.
fn exhaustive_turning(v: &[Complex64]) -> (f64, usize, usize, usize) {
    let n = v.len();
    let mut d = vec![0.0f64; n * n];
    for len in 1..n {
        let (prev, cur) = d.split_at_mut(len * n);
        let prev = &prev[(len - 1) * n..];
        let cur = &mut cur[..n];
        cur.par_iter_mut().enumerate().for_each(|(i, out)| {
            let j = (i + len) % n;
            *out = prev[i].max(prev[(i + 1) % n]).max((v[i] - v[j]).norm());
        });
    }
    let best = (1..=n / 2)
        .into_par_iter()
        .map(|len| {
            let mut best = (1.0, 0usize, 1usize);
            for i in 0..n {
                let j = (i + len) % n;
                let arc = d[len * n + i].min(d[(n - len) * n + j]);
                let t = turning_value(arc, (v[i] - v[j]).norm());
                if t.is_finite() {
                    best = better(best, (t, i.min(j), i.max(j)));
                }
            }
            best
        })
        .reduce(|| (1.0, 0, 1), better);
    (best.0, best.1, best.2, n * (n - 1) / 2)
}

fn sampled_turning(v: &[Complex64], budget: usize, seed: u64) -> (f64, usize, usize, usize) {
    let n = v.len();
    let pairs = (budget / n).max(64);
    let strata = ((pairs as f64).sqrt().ceil() as usize).clamp(2, n);
    let width = n as f64 / strata as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = Vec::new();
    for a in 0..strata {
        for b in a..strata {
            let lo = (a as f64 * width) as usize;
            let hi = (((a + 1) as f64 * width) as usize).max(lo + 1);
            let lo2 = (b as f64 * width) as usize;
            let hi2 = (((b + 1) as f64 * width) as usize).max(lo2 + 1);
            let i = rng.random_range(lo..hi.min(n));
            let j = rng.random_range(lo2..hi2.min(n));
            if i != j {
                chosen.push((i.min(j), i.max(j)));
            }
        }
    }
    let count = chosen.len();
    let best = chosen
        .into_par_iter()
        .map(|(i, j)| {
            let arc = diameter_of(&forward_arc(v, i, j)).min(diameter_of(&forward_arc(v, j, i)));
            (turning_value(arc, (v[i] - v[j]).norm()), i, j)
        })
        .filter(|t| t.0.is_finite())
        .reduce(|| (1.0, 0, 1), better);
    (best.0, best.1, best.2, count)
}

/// Grid of cells whose centres lie inside a closed polyline.
struct CellMask {
    centers: Vec<Complex64>,
    res: f64,
}

impl CellMask {
    fn new(curve: &JordanPolyline, res: f64) -> Self {
        let bb: BBox = curve.bbox();
        let x0 = bb.min.re - res;
        let y0 = bb.min.im - res;
        let nx = (bb.width() / res).ceil() as usize + 2;
        let ny = (bb.height() / res).ceil() as usize + 2;
        let mut centers = Vec::new();
        for row in 0..ny {
            let y = y0 + (row as f64 + 0.5) * res;
            let xs = scanline_crossings(curve.vertices(), y);
            for span in xs.chunks_exact(2) {
                let c0 = ((span[0] - x0) / res - 0.5).ceil().max(0.0) as usize;
                let c1 = ((span[1] - x0) / res - 0.5).floor();
                if c1 < 0.0 {
                    continue;
                }
                for col in c0..=(c1 as usize).min(nx) {
                    centers.push(Complex64::new(x0 + (col as f64 + 0.5) * res, y));
                }
            }
        }
        CellMask { centers, res }
    }

    fn area(&self) -> f64 {
        self.centers.len() as f64 * self.res * self.res
    }
}

/// Grid estimate of the fatness constant of the region bounded by `boundary`.
pub fn fatness(boundary: &JordanPolyline, probes: usize, seed: u64) -> FatnessReport {
    let v = boundary.vertices();
    let diam = diameter_of(v);
    let res = diam / FATNESS_GRID;
    let degenerate = |res: f64| FatnessReport {
        component_id: String::new(),
        tau_estimate: 0.0,
        witness: (PlanePoint::Finite(v[0]), 0.0),
        probe_count: 0,
        degenerate: true,
        resolution: res,
    };
    if !(diam > 0.0) || boundary.area() <= 1e-12 * diam * diam {
        return degenerate(res);
    }
    let mask = CellMask::new(boundary, res);
    if mask.centers.is_empty() || mask.area() <= 1e-12 * diam * diam {
        return degenerate(res);
    }

    let probes = probes.max(4);
    let mut pts: Vec<Complex64> = Vec::with_capacity(probes);
    let hull = convex_hull(v);
    let hull_take = (probes / 4).max(1);
    let step = (hull.len() as f64 / hull_take as f64).max(1.0);
    pts.extend((0..hull_take.min(hull.len())).map(|k| hull[(k as f64 * step) as usize]));
    let bnd_take = probes / 2;
    pts.extend((0..bnd_take).map(|k| v[k * v.len() / bnd_take]));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while pts.len() < probes {
        pts.push(mask.centers[rng.random_range(0..mask.centers.len())]);
    }

    let cell_area = res * res;
    let min_r = FATNESS_MIN_CELLS * res;
    let best = pts
        .par_iter()
        .enumerate()
        .map(|(idx, &x)| {
            let r_c = v.iter().map(|w| (w - x).norm()).fold(0.0, f64::max);
            let mut d2: Vec<f64> = mask.centers.iter().map(|c| (c - x).norm_sqr()).collect();
            d2.sort_unstable_by(f64::total_cmp);
            let r_max = 0.999 * r_c;
            let mut best = (f64::INFINITY, idx, 0.0);
            if r_max <= min_r {
                return best;
            }
            let steps = 48;
            for s in 0..=steps {
                let r = min_r * (r_max / min_r).powf(s as f64 / steps as f64);
                let count = d2.partition_point(|&q| q <= r * r);
                let ratio = (count as f64 * cell_area / (std::f64::consts::PI * r * r)).min(1.0);
                if ratio < best.0 {
                    best = (ratio, idx, r);
                }
            }
            best
        })
        .reduce(
            || (f64::INFINITY, usize::MAX, 0.0),
            |a, b| if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a },
        );
    if !best.0.is_finite() {
        return degenerate(res);
    }
    FatnessReport {
        component_id: String::new(),
        tau_estimate: best.0,
        witness: (PlanePoint::Finite(pts[best.1]), best.2),
        probe_count: pts.len(),
        degenerate: false,
        resolution: res,
    }
}

/// Which of two closed curves lies inside the other, if any.
pub fn nesting_relation(a: &JordanPolyline, b: &JordanPolyline) -> Nesting {
    let slack = resolution_tol(a) + resolution_tol(b);
    if !a.bbox().expanded(slack).overlaps(&b.bbox()) {
        return Nesting::Disjoint;
    }
    if !a.bbox().overlaps(&b.bbox()) || a.crosses(b) {
        return tolerant_nesting(a, b);
    }
    let stride = |c: &JordanPolyline| (c.len() / 16).max(1);
    let a_in_b: Vec<bool> = a.vertices().iter().step_by(stride(a)).map(|&z| b.contains(z)).collect();
    let b_in_a: Vec<bool> = b.vertices().iter().step_by(stride(b)).map(|&z| a.contains(z)).collect();
    let all = |v: &[bool]| v.iter().all(|&x| x);
    let none = |v: &[bool]| v.iter().all(|&x| !x);
    match (all(&a_in_b), none(&a_in_b), all(&b_in_a), none(&b_in_a)) {
        (true, _, _, true) => Nesting::AInB,
        (_, true, true, _) => Nesting::BInA,
        (_, true, _, true) => Nesting::Disjoint,
        _ => Nesting::Violation,
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Side {
    Inside,
    Near,
    Outside,
}

// chord sagitta scale of a polyline
fn resolution_tol(c: &JordanPolyline) -> f64 {
    0.25 * c.max_gap()
}

fn sides(points: &JordanPolyline, curve: &JordanPolyline) -> Vec<Side> {
    let tol = resolution_tol(curve);
    points
        .vertices()
        .iter()
        .map(|&z| {
            if curve.distance_to(z) <= tol {
                Side::Near
            } else if curve.contains(z) {
                Side::Inside
            } else {
                Side::Outside
            }
        })
        .collect()
}

// Crossing boundaries: accept a relation when every offending vertex lies
// within the other curve's resolution.
fn tolerant_nesting(a: &JordanPolyline, b: &JordanPolyline) -> Nesting {
    let a_in_b = sides(a, b);
    let b_in_a = sides(b, a);
    let never = |v: &[Side], s: Side| v.iter().all(|&x| x != s);
    if never(&a_in_b, Side::Outside) && never(&b_in_a, Side::Inside) {
        Nesting::AInB
    } else if never(&b_in_a, Side::Outside) && never(&a_in_b, Side::Inside) {
        Nesting::BInA
    } else if never(&a_in_b, Side::Inside) && never(&b_in_a, Side::Inside) {
        Nesting::Disjoint
    } else {
        Nesting::Violation
    }
}

/// Δ(K; z1, z2) / Δ(fᵖ(K); fᵖ(z1), fᵖ(z2)).
pub fn turning_distortion(
    f: &RationalMap,
    p: usize,
    k_samples: &[PlanePoint],
    z1: PlanePoint,
    z2: PlanePoint,
) -> Result<f64> {
    if z1.chordal(&z2) == 0.0 {
        return Err(Error::domain("distortion endpoints coincide"));
    }
    let push = |z: PlanePoint| (0..p).fold(z, |w, _| f.evaluate(w));
    let before = turning(k_samples, z1, z2)?;
    let image: Vec<PlanePoint> = k_samples.iter().map(|&z| push(z)).collect();
    let (w1, w2) = (push(z1), push(z2));
    let (a, b) = match (w1.finite(), w2.finite()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::domain("image endpoint at infinity")),
    };
    let scale = diameter(&image)?;
    if (a - b).norm() <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::domain("image endpoints coincide"));
    }
    let pts = finite_points(&image)?;
    let after = turning_value(diameter_of(&pts), (a - b).norm());
    Ok(before / after)
}

/// [`turning_distortion`] for a compactum inside a puzzle piece, checked
/// against the piece pair `(inner at depth n+p, outer at depth n)`.
pub fn distortion_probe(
    f: &RationalMap,
    p: usize,
    pair: (&PuzzlePiece, &PuzzlePiece),
    k_samples: &[PlanePoint],
    z1: PlanePoint,
    z2: PlanePoint,
) -> Result<f64> {
    let (inner, outer) = pair;
    if inner.depth != outer.depth + p {
        return Err(Error::domain(format!(
            "pieces at depths {} and {} are not {p} steps apart",
            inner.depth, outer.depth
        )));
    }
    let tol = 0.25 * inner.boundary.max_gap();
    let inside = |z: &PlanePoint| match z.finite() {
        Some(w) => inner.boundary.contains(w) || inner.boundary.distance_to(w) <= tol,
        None => false,
    };
    if !k_samples.iter().all(inside) {
        return Err(Error::domain("compactum leaves the inner piece"));
    }
    turning_distortion(f, p, k_samples, z1, z2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }
    fn fin(re: f64, im: f64) -> PlanePoint {
        PlanePoint::Finite(c(re, im))
    }

    /// O(V³) oracle: for each pair, farthest-point scan along both arcs.
    fn brute_turning(v: &[Complex64]) -> f64 {
        let n = v.len();
        let arc_diam = |i: usize, j: usize| {
            let a = forward_arc(v, i, j);
            let mut d: f64 = 0.0;
            for x in 0..a.len() {
                for y in (x + 1)..a.len() {
                    d = d.max((a[x] - a[y]).norm());
                }
            }
            d
        };
        let mut best: f64 = 1.0;
        for i in 0..n {
            for j in (i + 1)..n {
                let arc = arc_diam(i, j).min(arc_diam(j, i));
                best = best.max(arc / (v[i] - v[j]).norm());
            }
        }
        best
    }

    #[test]
    fn diameter_examples() {
        assert_eq!(diameter(&[fin(0.0, 0.0), fin(1.0, 0.0)]).unwrap(), 1.0);
        let circle: Vec<PlanePoint> = (0..256)
            .map(|k| PlanePoint::Finite(Complex64::from_polar(1.0, std::f64::consts::TAU * k as f64 / 256.0)))
            .collect();
        assert!((diameter(&circle).unwrap() - 2.0).abs() < 1e-12);
        let tri = [fin(0.0, 0.0), fin(1.0, 0.0), fin(1.0, 1.0)];
        assert!((diameter(&tri).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert!(diameter(&[fin(0.0, 0.0), PlanePoint::Infinity]).is_err());
    }

    #[test]
    fn turning_examples() {
        let seg: Vec<PlanePoint> = (0..=10).map(|k| fin(k as f64 / 10.0, 0.0)).collect();
        assert_eq!(turning(&seg, fin(0.0, 0.0), fin(1.0, 0.0)).unwrap(), 1.0);
        assert_eq!(turning(&seg, fin(0.5, 0.0), fin(0.5, 0.0)).unwrap(), f64::INFINITY);
        let poly = [fin(0.0, 0.0), fin(1.0, 0.0), fin(1.0, 1.0)];
        assert!((turning(&poly, fin(0.0, 0.0), fin(1.0, 0.0)).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert!(turning(&seg, fin(0.0, 0.0), fin(3.0, 0.0)).is_err());
    }

    #[test]
    fn subarc_examples() {
        let circ = JordanPolyline::circle(c(0.0, 0.0), 1.0, 256).unwrap();
        let arc = smaller_subarc(&circ, fin(1.0, 0.0), fin(0.0, 1.0)).unwrap();
        assert_eq!(arc.len(), 65);
        let mid = PlanePoint::Finite(Complex64::from_polar(1.0, std::f64::consts::FRAC_PI_4));
        assert!(arc.iter().any(|p| p.chordal(&mid) < 1e-12));

        let half = smaller_subarc(&circ, fin(1.0, 0.0), fin(-1.0, 0.0)).unwrap();
        let again = smaller_subarc(&circ, fin(-1.0, 0.0), fin(1.0, 0.0)).unwrap();
        assert_eq!(half, again);
        assert!(half.iter().any(|p| p.chordal(&fin(0.0, 1.0)) < 1e-12));

        // Square: midpoints of the right and top sides; the corner arc wins,
        // checked against both arcs by brute force.
        let sq = JordanPolyline::square(c(0.0, 0.0), 1.0, 400).unwrap();
        let arc = smaller_subarc(&sq, fin(0.5, 0.0), fin(0.0, 0.5)).unwrap();
        assert!(arc.iter().any(|p| p.chordal(&fin(0.5, 0.5)) < 1e-12));
        let pts: Vec<Complex64> = arc.iter().map(|p| p.finite().unwrap()).collect();
        let mut d: f64 = 0.0;
        for a in &pts {
            for b in &pts {
                d = d.max((a - b).norm());
            }
        }
        assert!((d - 0.5 * 2f64.sqrt()).abs() < 1e-12);
        assert!(smaller_subarc(&sq, fin(0.5, 0.0), fin(0.5, 0.0)).is_err());
    }

    #[test]
    fn turning_constant_circle_is_one() {
        let circ = JordanPolyline::circle(c(0.3, -0.2), 2.0, 720).unwrap();
        let r = turning_constant(&circ, DEFAULT_PAIR_BUDGET);
        assert!((r.k_estimate - 1.0).abs() < 1e-9, "{}", r.k_estimate);
        assert_eq!(r.sample_count, 720 * 719 / 2);
    }

    #[test]
    fn turning_constant_matches_cubic_oracle() {
        for curve in [
            JordanPolyline::square(c(0.0, 0.0), 1.0, 120).unwrap(),
            JordanPolyline::ellipse(c(0.0, 0.0), 4.0, 1.0, 100).unwrap(),
            JordanPolyline::from_fn(90, |t| Complex64::from_polar(1.0 + 0.3 * (3.0 * t).cos(), t)).unwrap(),
        ] {
            let dp = turning_constant(&curve, DEFAULT_PAIR_BUDGET).k_estimate;
            let oracle = brute_turning(curve.vertices());
            assert!((dp - oracle).abs() < 1e-12, "{dp} vs {oracle}");
        }
    }

    /// Antipodal pairs p(s), -p(s) on a centred ellipse; both arcs are
    /// congruent, so the turning is diam(arc)/|2p| with the arc densely sampled.
    fn ellipse_symmetric_oracle(a: f64, b: f64) -> f64 {
        let pt = |s: f64| c(a * s.cos(), b * s.sin());
        let mut best: f64 = 0.0;
        for k in 0..400 {
            let s = std::f64::consts::FRAC_PI_2 * k as f64 / 400.0;
            let arc: Vec<Complex64> = (0..=4000).map(|m| pt(s + std::f64::consts::PI * m as f64 / 4000.0)).collect();
            best = best.max(diameter_of(&arc) / (2.0 * pt(s).norm()));
        }
        best
    }

    #[test]
    fn turning_constant_square_and_ellipse() {
        // Pairs (1/2, t), (-1/2, -t) give K^2 = (1 + (1/2 + t)^2)/(1 + 4t^2),
        // maximal at t = (sqrt 5 - 2)/2 with K = golden ratio / sqrt 2. The
        // opposite-midpoint pair only reaches sqrt(5)/2.
        let golden = (1.0 + 5f64.sqrt()) / 2.0;
        let sq = JordanPolyline::square(c(0.0, 0.0), 1.0, 2000).unwrap();
        let r = turning_constant(&sq, DEFAULT_PAIR_BUDGET);
        assert!((r.k_estimate - golden / 2f64.sqrt()).abs() < 2e-3, "{}", r.k_estimate);
        assert!(r.k_estimate > 1.25f64.sqrt());
        let (p, q) = (r.witness_pair.0.finite().unwrap(), r.witness_pair.1.finite().unwrap());
        let t = (5f64.sqrt() - 2.0) / 2.0;
        assert!(((p - q).norm() - (1.0 + 4.0 * t * t).sqrt()).abs() < 5e-3);

        let el = JordanPolyline::ellipse(c(0.0, 0.0), 4.0, 1.0, 2000).unwrap();
        let r = turning_constant(&el, DEFAULT_PAIR_BUDGET);
        let oracle = ellipse_symmetric_oracle(4.0, 1.0);
        assert!((r.k_estimate - oracle).abs() < 2e-3, "{} vs {oracle}", r.k_estimate);
        assert!(r.k_estimate > 17f64.sqrt() / 2.0);
        let (p, q) = (r.witness_pair.0.finite().unwrap(), r.witness_pair.1.finite().unwrap());
        assert!(p.re.abs() < 0.5 && q.re.abs() < 0.5 && (p + q).norm() < 1e-2);
    }

    #[test]
    fn sampled_turning_is_a_lower_bound() {
        let el = JordanPolyline::ellipse(c(0.0, 0.0), 4.0, 1.0, 600).unwrap();
        let full = turning_constant(&el, DEFAULT_PAIR_BUDGET);
        let sampled = turning_constant_seeded(&el, 300_000, 7);
        assert!(sampled.sample_count < 600 * 599 / 2);
        assert!(sampled.k_estimate <= full.k_estimate + 1e-12);
        assert!(sampled.k_estimate > 0.9 * full.k_estimate, "{} {}", sampled.k_estimate, full.k_estimate);
        assert_eq!(sampled, turning_constant_seeded(&el, 300_000, 7));
    }

    #[test]
    fn turning_refinement_is_stable() {
        for n in [200, 400] {
            let coarse = JordanPolyline::square(c(0.0, 0.0), 1.0, n).unwrap();
            let fine = JordanPolyline::square(c(0.0, 0.0), 1.0, 2 * n).unwrap();
            let a = turning_constant(&coarse, DEFAULT_PAIR_BUDGET).k_estimate;
            let b = turning_constant(&fine, DEFAULT_PAIR_BUDGET).k_estimate;
            assert!(b >= 0.99 * a);
        }
    }

    #[test]
    fn fatness_examples() {
        let disk = JordanPolyline::circle(c(0.0, 0.0), 1.0, 1024).unwrap();
        let r = fatness(&disk, 64, 1);
        assert!((r.tau_estimate - 0.25).abs() < 0.02, "{}", r.tau_estimate);
        assert!(!r.degenerate);

        let sq = JordanPolyline::square(c(0.5, 0.5), 1.0, 1024).unwrap();
        let r = fatness(&sq, 64, 1);
        let corner = 1.0 / (2.0 * std::f64::consts::PI);
        assert!((r.tau_estimate - corner).abs() < 0.02, "{}", r.tau_estimate);

        let seg: Vec<Complex64> = (0..32)
            .map(|k| {
                let t = if k < 16 { k as f64 } else { (31 - k) as f64 };
                c(t / 15.0, 0.0)
            })
            .collect();
        let r = fatness(&JordanPolyline::new(seg, 0).unwrap(), 64, 1);
        assert!(r.degenerate);
        assert_eq!(r.tau_estimate, 0.0);
    }

    #[test]
    fn fatness_floor_for_convex_bodies() {
        for curve in [
            JordanPolyline::circle(c(0.0, 0.0), 3.0, 512).unwrap(),
            JordanPolyline::square(c(1.0, 1.0), 2.0, 512).unwrap(),
            JordanPolyline::ellipse(c(0.0, 0.0), 2.0, 1.0, 512).unwrap(),
        ] {
            let r = fatness(&curve, 48, 3);
            assert!(r.tau_estimate >= 0.1 && r.tau_estimate <= 1.0, "{}", r.tau_estimate);
        }
    }

    #[test]
    fn nesting_examples() {
        let unit = JordanPolyline::circle(c(0.0, 0.0), 1.0, 256).unwrap();
        let two = JordanPolyline::circle(c(0.0, 0.0), 2.0, 256).unwrap();
        assert_eq!(nesting_relation(&unit, &two), Nesting::AInB);
        assert_eq!(nesting_relation(&two, &unit), Nesting::BInA);
        let far = JordanPolyline::circle(c(5.0, 0.0), 1.0, 256).unwrap();
        assert_eq!(nesting_relation(&unit, &far), Nesting::Disjoint);
        let shifted = JordanPolyline::circle(c(1.0, 0.0), 1.0, 256).unwrap();
        assert_eq!(nesting_relation(&unit, &shifted), Nesting::Violation);
        // Overlapping boxes but disjoint regions.
        let near = JordanPolyline::circle(c(1.9, 1.9), 1.0, 256).unwrap();
        assert_eq!(nesting_relation(&unit, &near), Nesting::Disjoint);
    }

    #[test]
    fn distortion_examples() {
        let arc: Vec<PlanePoint> = (0..=32)
            .map(|k| PlanePoint::Finite(Complex64::from_polar(2.0, 0.8 * k as f64 / 32.0)))
            .collect();
        let (z1, z2) = (arc[0], arc[32]);
        let shift = RationalMap::with_min_degree(
            crate::Poly::from_real(&[3.0, 1.0]),
            crate::Poly::from_real(&[1.0]),
            1,
        )
        .unwrap();
        assert_eq!(turning_distortion(&shift, 0, &arc, z1, z2).unwrap(), 1.0);
        assert!((turning_distortion(&shift, 1, &arc, z1, z2).unwrap() - 1.0).abs() < 1e-12);
        let sim = RationalMap::with_min_degree(
            crate::Poly::new(vec![c(1.0, -2.0), c(0.5, 1.5)]),
            crate::Poly::from_real(&[1.0]),
            1,
        )
        .unwrap();
        assert!((turning_distortion(&sim, 3, &arc, z1, z2).unwrap() - 1.0).abs() < 1e-12);

        let sq = RationalMap::polynomial_real(&[0.0, 0.0, 1.0]).unwrap();
        let ratio = turning_distortion(&sq, 1, &arc, z1, z2).unwrap();
        let direct = {
            let pts: Vec<Complex64> = arc.iter().map(|p| p.finite().unwrap()).collect();
            let img: Vec<Complex64> = pts.iter().map(|z| z * z).collect();
            (diameter_of(&pts) / (pts[0] - pts[32]).norm()) / (diameter_of(&img) / (img[0] - img[32]).norm())
        };
        assert!(ratio.is_finite() && (ratio - direct).abs() < 1e-12);
        assert!(turning_distortion(&sq, 1, &arc, z1, z1).is_err());
    }

    #[test]
    fn distortion_probe_on_forest_pieces() {
        use crate::puzzle::{assemble_forest, build_invariant_disk};
        let f = RationalMap::polynomial_real(&[0.0, 0.0, 1.0]).unwrap();
        let post = f.classify_postcritical(100, 1e-9).unwrap();
        let u = build_invariant_disk(&f, &post).unwrap();
        let forest = assemble_forest(&f, &u, 2).unwrap();
        let (p1, p2) = (forest.level(1).next().unwrap(), forest.level(2).next().unwrap());
        let arc: Vec<PlanePoint> = p2.boundary.vertices()[..40].iter().map(|&z| PlanePoint::Finite(z)).collect();
        let r = distortion_probe(&f, 1, (p2, p1), &arc, arc[0], arc[39]).unwrap();
        assert!(r.is_finite() && r > 0.0);
        assert_eq!(distortion_probe(&f, 0, (p2, p2), &arc, arc[0], arc[39]).unwrap(), 1.0);
        assert!(distortion_probe(&f, 2, (p2, p1), &arc, arc[0], arc[39]).is_err());
        let far = vec![PlanePoint::Finite(Complex64::new(50.0, 0.0)); 3];
        assert!(distortion_probe(&f, 1, (p2, p1), &far, far[0], far[1]).is_err());
    }

    proptest! {
        #[test]
        fn turning_is_similarity_invariant(
            pts in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 3..40),
            a in (0.1f64..5.0, -3.0f64..3.0),
            b in (-10.0f64..10.0, -10.0f64..10.0),
            i in 0usize..3, j in 0usize..3,
        ) {
            prop_assume!(i != j);
            let k: Vec<Complex64> = pts.iter().map(|&(x, y)| c(x, y)).collect();
            prop_assume!((k[i] - k[j]).norm() > 1e-3);
            let a = Complex64::from_polar(a.0, a.1);
            let b = c(b.0, b.1);
            let kp: Vec<PlanePoint> = k.iter().map(|&z| PlanePoint::Finite(z)).collect();
            let ki: Vec<PlanePoint> = k.iter().map(|&z| PlanePoint::Finite(a * z + b)).collect();
            // Scattered points: membership is exact since z1, z2 are samples.
            let t0 = turning(&kp, kp[i], kp[j]).unwrap();
            let t1 = turning(&ki, ki[i], ki[j]).unwrap();
            prop_assert!(t0 >= 1.0);
            prop_assert!((t0 - t1).abs() <= 1e-12 * t0);
        }

        #[test]
        fn hull_diameter_matches_pairs(pts in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 2..60)) {
            let k: Vec<Complex64> = pts.iter().map(|&(x, y)| c(x, y)).collect();
            let mut brute: f64 = 0.0;
            for a in &k { for b in &k { brute = brute.max((a - b).norm()); } }
            prop_assert!((diameter_of(&k) - brute).abs() <= 1e-12 * brute.max(1.0));
        }
    }
}
