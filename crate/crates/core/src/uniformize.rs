//! Circle-domain uniformization of finitely connected truncations by cyclic
//! Koebe iteration, plus circularity and annulus-modulus measurements.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curve::{winding_number, JordanPolyline, SegmentIndex};
use crate::error::{Error, Result};
use crate::geometry::{diameter_of, nesting_relation, Nesting};
use crate::point::PlanePoint;
use crate::puzzle::PuzzleForest;

pub const DEFAULT_TOL: f64 = 1e-3;
pub const DEFAULT_MAX_ROUNDS: usize = 50;
/// Components kept by the default truncation.
pub const TRUNCATION_CAP: usize = 12;
pub const DEFAULT_MODULUS_GRID: usize = 128;

const MIN_COLLOCATION: usize = 128;
const COLLOCATION_CAPS: [usize; 2] = [512, 1024];
const SOURCE_OFFSETS: [f64; 3] = [1.5, 0.75, 0.375];
const MODULUS_LEVELS: usize = 5;
const MODULUS_NODE_BUDGET: usize = 4_000_000;
const MIN_CUT_FRACTION: f64 = 1e-3;
const CORNER_ANGLE: f64 = 0.2;
const CORNER_GRADING: usize = 10;
const MAX_GRADED_CORNERS: usize = 16;
const SOURCE_HALVINGS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Circle {
    #[serde(rename = "c")]
    pub center: PlanePoint,
    #[serde(rename = "r")]
    pub radius: f64,
}

impl Circle {
    pub fn new(center: Complex64, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) || !(center.re.is_finite() && center.im.is_finite()) {
            return Err(Error::domain(format!("bad circle ({center}, {radius})")));
        }
        Ok(Circle { center: PlanePoint::Finite(center), radius })
    }

    pub fn center_finite(&self) -> Complex64 {
        self.center.finite().expect("circle centers are finite")
    }

    pub fn polyline(&self, n: usize) -> Result<JordanPolyline> {
        JordanPolyline::circle(self.center_finite(), self.radius, n)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircleDomain {
    pub circles: Vec<Circle>,
    #[serde(rename = "points")]
    pub point_components: Vec<PlanePoint>,
}

impl CircleDomain {
    /// Closed disks pairwise disjoint, points outside every closed disk.
    pub fn validate(&self) -> Result<()> {
        for (i, a) in self.circles.iter().enumerate() {
            for b in &self.circles[i + 1..] {
                if (a.center_finite() - b.center_finite()).norm() <= a.radius + b.radius {
                    return Err(Error::Inconsistency("circle domain disks overlap".into()));
                }
            }
            for p in self.point_components.iter().filter_map(|p| p.finite()) {
                if (p - a.center_finite()).norm() <= a.radius {
                    return Err(Error::Inconsistency("point component inside a disk".into()));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("circle domain serializes")
    }

    /// Sampled circles as a truncation, points carried along.
    pub fn to_truncation(&self, n: usize) -> Result<Truncation> {
        let pieces = self.circles.iter().map(|c| c.polyline(n)).collect::<Result<_>>()?;
        Ok(Truncation::new(pieces)?.with_points(self.point_components.clone()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncationSource {
    pub depth: usize,
    pub piece_ids: Vec<usize>,
}

/// Complement of finitely many filled Jordan curves; `points` are further
/// point components carried through the map.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Truncation {
    pub boundary_pieces: Vec<JordanPolyline>,
    pub source: Option<TruncationSource>,
    pub points: Vec<PlanePoint>,
}

impl Truncation {
    pub fn new(boundary_pieces: Vec<JordanPolyline>) -> Result<Self> {
        if boundary_pieces.is_empty() {
            return Err(Error::domain("a truncation needs at least one boundary curve"));
        }
        for (i, a) in boundary_pieces.iter().enumerate() {
            if !a.is_simple() {
                return Err(Error::domain(format!("boundary curve {i} is not simple")));
            }
            for (j, b) in boundary_pieces.iter().enumerate().skip(i + 1) {
                if nesting_relation(a, b) != Nesting::Disjoint {
                    return Err(Error::domain(format!("boundary curves {i} and {j} are not disjoint")));
                }
            }
        }
        Ok(Truncation { boundary_pieces, source: None, points: Vec::new() })
    }

    pub fn with_points(mut self, points: Vec<PlanePoint>) -> Self {
        self.points = points;
        self
    }

    pub fn len(&self) -> usize {
        self.boundary_pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boundary_pieces.is_empty()
    }
}

/// Which depth-n pieces bound a truncation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    All,
    Largest(usize),
    Pieces(Vec<usize>),
}

impl Default for Selection {
    fn default() -> Self {
        Selection::Largest(TRUNCATION_CAP)
    }
}

/// Boundaries of the selected depth-`depth` pieces; the interior points of
/// the remaining pieces at that depth become point components.
pub fn truncate_domain(forest: &PuzzleForest, depth: usize, selection: &Selection) -> Result<Truncation> {
    if depth > forest.depth() {
        return Err(Error::domain(format!("depth {depth} exceeds the forest depth {}", forest.depth())));
    }
    let level = &forest.levels[depth];
    let chosen: Vec<usize> = match selection {
        Selection::All => level.clone(),
        Selection::Largest(cap) => {
            let mut ids = level.clone();
            ids.sort_by(|&a, &b| {
                forest.pieces[b]
                    .diameter
                    .total_cmp(&forest.pieces[a].diameter)
                    .then(a.cmp(&b))
            });
            ids.truncate(*cap);
            ids.sort_unstable();
            ids
        }
        Selection::Pieces(ids) => {
            if let Some(bad) = ids.iter().find(|id| !level.contains(id)) {
                return Err(Error::domain(format!("piece {bad} is not at depth {depth}")));
            }
            ids.clone()
        }
    };
    if chosen.is_empty() {
        return Err(Error::domain("empty truncation selection"));
    }
    let pieces = chosen.iter().map(|&id| forest.pieces[id].boundary.clone()).collect();
    let points = level
        .iter()
        .filter(|id| !chosen.contains(id))
        .map(|&id| forest.pieces[id].interior_point)
        .collect();
    let mut t = Truncation::new(pieces)?.with_points(points);
    t.source = Some(TruncationSource { depth, piece_ids: chosen });
    Ok(t)
}

/// Exterior map of one curve by charge simulation:
/// u = (z − origin)/scale, Φ(u) = u·exp(V + Σ qₖ log((u − ζₖ)/(u − ζₖ₋₁))), ζ₀ = 0.
/// Consecutive sources are joined inside the curve, so every branch cut
/// stays off the exterior.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChargeMap {
    #[serde(with = "crate::point::pair")]
    origin: Complex64,
    scale: f64,
    #[serde(with = "crate::point::pair::vec")]
    sources: Vec<Complex64>,
    charges: Vec<f64>,
    log_gain: f64,
    residual: f64,
}

impl ChargeMap {
    pub fn eval(&self, z: Complex64) -> Complex64 {
        let u = (z - self.origin) / self.scale;
        let mut acc = Complex64::new(self.log_gain, 0.0);
        let mut prev = Complex64::new(0.0, 0.0);
        for (&s, &q) in self.sources.iter().zip(&self.charges) {
            acc += q * ((u - s) / (u - prev)).ln();
            prev = s;
        }
        u * acc.exp()
    }

    pub fn derivative_at_infinity(&self) -> f64 {
        self.log_gain.exp() / self.scale
    }

    /// max |log|Φ|| over the curve's vertices.
    pub fn residual(&self) -> f64 {
        self.residual
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MapStep {
    Exterior(ChargeMap),
    /// z ↦ scale·z + shift with scale > 0.
    Affine {
        scale: f64,
        #[serde(with = "crate::point::pair")]
        shift: Complex64,
    },
}

impl MapStep {
    fn eval(&self, z: Complex64) -> Complex64 {
        match self {
            MapStep::Exterior(m) => m.eval(z),
            MapStep::Affine { scale, shift } => z * *scale + shift,
        }
    }

    fn derivative_at_infinity(&self) -> f64 {
        match self {
            MapStep::Exterior(m) => m.derivative_at_infinity(),
            MapStep::Affine { scale, .. } => *scale,
        }
    }
}

/// Boundary samples of one component and their images.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundaryTable {
    #[serde(with = "crate::point::pair::vec")]
    pub source: Vec<Complex64>,
    #[serde(with = "crate::point::pair::vec")]
    pub image: Vec<Complex64>,
}

/// Composition of exterior maps and a final affine gauge; fixes ∞ with a
/// positive derivative there.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NumericalConformalMap {
    steps: Vec<MapStep>,
    pub boundary: Vec<BoundaryTable>,
    pub derivative_at_infinity: f64,
    /// Largest relative deviation of boundary images from their circles.
    pub residual: f64,
}

impl NumericalConformalMap {
    fn from_steps(steps: Vec<MapStep>, boundary: Vec<BoundaryTable>, residual: f64) -> Self {
        let derivative_at_infinity = steps.iter().map(MapStep::derivative_at_infinity).product();
        NumericalConformalMap { steps, boundary, derivative_at_infinity, residual }
    }

    pub fn steps(&self) -> &[MapStep] {
        &self.steps
    }

    /// Image of a point of the domain; points strictly inside a filled
    /// component are rejected.
    pub fn evaluate(&self, z: PlanePoint) -> Result<PlanePoint> {
        let Some(w) = z.finite() else {
            return Ok(PlanePoint::Infinity);
        };
        for t in &self.boundary {
            if winding_number(&t.source, w) != 0 {
                return Err(Error::domain(format!("{w} lies inside a filled component")));
            }
        }
        Ok(PlanePoint::from_complex(self.eval_unchecked(w)))
    }

    pub fn eval_unchecked(&self, z: Complex64) -> Complex64 {
        self.steps.iter().fold(z, |w, s| s.eval(w))
    }
}

/// Turning angle at each vertex of a closed polygon.
fn turnings(v: &[Complex64]) -> Vec<f64> {
    let n = v.len();
    (0..n)
        .map(|i| ((v[(i + 1) % n] - v[i]) / (v[i] - v[(i + n - 1) % n])).arg().abs())
        .collect()
}

/// The sharpest vertices turning by more than CORNER_ANGLE, at most
/// MAX_GRADED_CORNERS of them.
fn corners(v: &[Complex64]) -> Vec<bool> {
    let t = turnings(v);
    let mut idx: Vec<usize> = (0..v.len()).filter(|&i| t[i] > CORNER_ANGLE).collect();
    idx.sort_by(|&a, &b| t[b].total_cmp(&t[a]).then(a.cmp(&b)));
    idx.truncate(MAX_GRADED_CORNERS);
    let mut out = vec![false; v.len()];
    idx.into_iter().for_each(|i| out[i] = true);
    out
}

/// Sample points for fitting: the curve's own vertices, thinned or
/// subdivided into range, with geometric grading towards corners.
fn collocation_points(v: &[Complex64], cap: usize) -> Vec<Complex64> {
    let n = v.len();
    let base: Vec<Complex64> = if n > cap {
        let stride = n.div_ceil(cap);
        let sharp = corners(v);
        (0..n).filter(|&i| i % stride == 0 || sharp[i]).map(|i| v[i]).collect()
    } else if n < MIN_COLLOCATION {
        let k = MIN_COLLOCATION.div_ceil(n);
        (0..n)
            .flat_map(|i| {
                let (a, b) = (v[i], v[(i + 1) % n]);
                (0..k).map(move |j| a + (b - a) * (j as f64 / k as f64))
            })
            .collect()
    } else {
        v.to_vec()
    };
    let m = base.len();
    let is_corner = corners(&base);
    let mut out = Vec::with_capacity(m + 2 * MAX_GRADED_CORNERS * CORNER_GRADING);
    for i in 0..m {
        let (a, b) = (base[i], base[(i + 1) % m]);
        out.push(a);
        if is_corner[i] {
            for k in (1..=CORNER_GRADING).rev() {
                out.push(a + (b - a) * 0.5f64.powi(k as i32 + 1));
            }
        }
        if is_corner[(i + 1) % m] {
            for k in 1..=CORNER_GRADING {
                out.push(b + (a - b) * 0.5f64.powi(k as i32 + 1));
            }
        }
    }
    out
}

/// Parameter in (0, 1] of the first point where [a, b] meets the polyline.
fn first_hit(a: Complex64, b: Complex64, verts: &[Complex64], idx: &SegmentIndex) -> Option<f64> {
    let n = verts.len();
    let d = b - a;
    let mut best: Option<f64> = None;
    for j in idx.candidates(a, b) {
        let (p, q) = (verts[j], verts[(j + 1) % n]);
        let e = q - p;
        let den = d.re * e.im - d.im * e.re;
        if den == 0.0 {
            continue;
        }
        let w = p - a;
        let s = (w.re * e.im - w.im * e.re) / den;
        let t = (w.re * d.im - w.im * d.re) / den;
        if (0.0..=1.0).contains(&s) && (0.0..=1.0).contains(&t) && best.is_none_or(|b| s < b) {
            best = Some(s);
        }
    }
    best
}

/// One source per pair of collocation points, offset inwards by `offset`
/// times the local spacing; halved up to SOURCE_HALVINGS times where the
/// curve is too thin for it.
fn place_sources(pts: &[Complex64], offset: f64, curve: &JordanPolyline, idx: &SegmentIndex) -> Vec<Complex64> {
    let m = pts.len();
    let verts = curve.vertices();
    (0..m / 2)
        .map(|j| {
            let i = 2 * j;
            let t = pts[(i + 1) % m] - pts[(i + m - 1) % m];
            // interior lies to the left of a positively oriented curve
            let at = |o: f64| pts[i] + Complex64::i() * t * o;
            let mut o = offset;
            for _ in 0..SOURCE_HALVINGS {
                let s = at(o);
                let clear = first_hit(pts[i] + (s - pts[i]) * 1e-9, s, verts, idx).is_none();
                if clear && winding_number(verts, s) != 0 {
                    break;
                }
                o *= 0.5;
            }
            at(o)
        })
        .collect()
}

/// Chain order starting at the source nearest to the origin that it can
/// reach without crossing the curve; `None` when a link leaves the interior.
fn chain_sources(src: &[Complex64], curve: &JordanPolyline, idx: &SegmentIndex, origin: Complex64) -> Option<Vec<Complex64>> {
    let verts = curve.vertices();
    if src.iter().any(|&s| winding_number(verts, s) == 0) {
        return None;
    }
    let n = src.len();
    for k in 0..n {
        if first_hit(src[k], src[(k + 1) % n], verts, idx).is_some() {
            return None;
        }
    }
    let mut by_dist: Vec<usize> = (0..n).collect();
    by_dist.sort_by(|&a, &b| (src[a] - origin).norm().total_cmp(&(src[b] - origin).norm()));
    let start = by_dist
        .into_iter()
        .find(|&k| first_hit(origin, src[k], verts, idx).is_none())?;
    Some((0..n).map(|k| src[(start + k) % n]).collect())
}

fn solve_charges(pts: &[Complex64], chain: &[Complex64]) -> Option<(f64, Vec<f64>)> {
    let m = pts.len();
    let n = chain.len() + 1;
    let a = DMatrix::from_fn(m, n, |i, j| {
        if j == 0 {
            1.0
        } else {
            let prev = if j == 1 { Complex64::new(0.0, 0.0) } else { chain[j - 2] };
            ((pts[i] - chain[j - 1]).norm() / (pts[i] - prev).norm()).ln()
        }
    });
    let b = DVector::from_fn(m, |i, _| -pts[i].norm().ln());
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let x = svd.solve(&b, 1e-14 * smax).ok()?;
    if x.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some((x[0], x.iter().skip(1).copied().collect()))
}

/// Conformal map of the complement of the filled curve onto |w| > 1 with
/// Φ(∞) = ∞ and Φ′(∞) > 0; boundary vertices land within `tol` of |w| = 1.
pub fn exterior_map(curve: &JordanPolyline, tol: f64) -> Result<NumericalConformalMap> {
    let cm = fit_charge_map(curve, tol)?;
    let source = curve.vertices().to_vec();
    let image = source.iter().map(|&z| cm.eval(z)).collect();
    let residual = cm.residual;
    Ok(NumericalConformalMap::from_steps(
        vec![MapStep::Exterior(cm)],
        vec![BoundaryTable { source, image }],
        residual,
    ))
}

fn fit_charge_map(curve: &JordanPolyline, tol: f64) -> Result<ChargeMap> {
    if !(tol > 0.0) {
        return Err(Error::domain("exterior map tolerance must be positive"));
    }
    let curve = curve.clone().positively_oriented();
    let origin = curve.interior_point();
    let scale = curve
        .vertices()
        .iter()
        .map(|z| (z - origin).norm())
        .fold(0.0, f64::max);
    let unit = curve.map(|z| (z - origin) / scale)?;
    let idx = SegmentIndex::new(unit.vertices());
    let zero = Complex64::new(0.0, 0.0);
    let mut best: Option<ChargeMap> = None;
    for cap in COLLOCATION_CAPS {
        let pts = collocation_points(unit.vertices(), cap);
        for offset in SOURCE_OFFSETS {
            let Some(chain) = chain_sources(&place_sources(&pts, offset, &unit, &idx), &unit, &idx, zero) else {
                continue;
            };
            let Some((log_gain, charges)) = solve_charges(&pts, &chain) else {
                continue;
            };
            let mut cm = ChargeMap { origin: zero, scale: 1.0, sources: chain, charges, log_gain, residual: 0.0 };
            cm.residual = unit
                .vertices()
                .par_iter()
                .map(|&z| cm.eval(z).norm().ln().abs())
                .reduce(|| 0.0, f64::max);
            if best.as_ref().is_none_or(|b| cm.residual < b.residual) {
                best = Some(cm);
            }
            if best.as_ref().unwrap().residual <= tol {
                break;
            }
        }
        if best.as_ref().is_some_and(|b| b.residual <= tol) || pts_exhausted(unit.len(), cap) {
            break;
        }
    }
    let mut cm = best.ok_or_else(|| Error::NonConvergence {
        what: "exterior map (no admissible source placement)".into(),
        residual: f64::INFINITY,
    })?;
    if !(cm.residual <= tol) {
        return Err(Error::NonConvergence { what: "exterior map".into(), residual: cm.residual });
    }
    cm.origin = origin;
    cm.scale = scale;
    Ok(cm)
}

fn pts_exhausted(n: usize, cap: usize) -> bool {
    n <= cap
}

/// Least-squares circle: algebraic start refined by Gauss–Newton on the
/// geometric distance.
pub fn fit_circle(points: &[Complex64]) -> Result<(Complex64, f64)> {
    let n = points.len();
    if n < 3 {
        return Err(Error::domain("circle fit needs at least 3 points"));
    }
    let mean = points.iter().sum::<Complex64>() / n as f64;
    let spread = points.iter().map(|z| (z - mean).norm()).fold(0.0, f64::max);
    if !(spread > 0.0 && spread.is_finite()) {
        return Err(Error::domain("degenerate circle fit"));
    }
    // algebraic fit in centred, scaled coordinates
    let p: Vec<Complex64> = points.iter().map(|z| (z - mean) / spread).collect();
    let a = DMatrix::from_fn(n, 3, |i, j| match j {
        0 => p[i].re,
        1 => p[i].im,
        _ => 1.0,
    });
    let b = DVector::from_fn(n, |i, _| -p[i].norm_sqr());
    let svd = a.svd(true, true);
    if svd.rank(1e-9 * svd.singular_values.max()) < 3 {
        return Err(Error::domain("degenerate circle fit (collinear points)"));
    }
    let x = svd
        .solve(&b, 1e-12)
        .map_err(|e| Error::domain(format!("circle fit: {e}")))?;
    let mut c = Complex64::new(-x[0] / 2.0, -x[1] / 2.0);
    let r2 = c.norm_sqr() - x[2];
    if !(r2 > 0.0) || c.norm() > 1e6 {
        return Err(Error::domain("degenerate circle fit (collinear points)"));
    }
    let mut r = r2.sqrt();
    for _ in 0..50 {
        let mut jtj = nalgebra::Matrix3::<f64>::zeros();
        let mut jtr = nalgebra::Vector3::<f64>::zeros();
        for z in &p {
            let d = z - c;
            let dn = d.norm();
            if dn == 0.0 {
                continue;
            }
            let row = nalgebra::Vector3::new(-d.re / dn, -d.im / dn, -1.0);
            let res = dn - r;
            jtj += row * row.transpose();
            jtr += row * res;
        }
        let Some(step) = jtj.lu().solve(&(-jtr)) else {
            break;
        };
        c += Complex64::new(step[0], step[1]);
        r += step[2];
        if step.norm() < 1e-15 {
            break;
        }
    }
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::domain("degenerate circle fit"));
    }
    Ok((mean + c * spread, r * spread))
}

/// max |dist − r| / mean dist about the least-squares circle.
pub fn circularity(curve: &JordanPolyline) -> Result<f64> {
    circularity_of(curve.vertices())
}

fn circularity_of(v: &[Complex64]) -> Result<f64> {
    if v.len() < 16 {
        return Err(Error::domain("circularity needs at least 16 vertices"));
    }
    let (c, r) = fit_circle(v)?;
    let d: Vec<f64> = v.iter().map(|z| (z - c).norm()).collect();
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    Ok(d.iter().map(|x| (x - r).abs()).fold(0.0, f64::max) / mean)
}

/// Cyclic Koebe iteration: each component in turn is mapped to a round
/// circle by its exterior map, transporting the others. Stops once every
/// component's circularity is below `tol`, then gauges the largest circle
/// to the unit circle.
pub fn koebe_uniformize(
    t: &Truncation,
    tol: f64,
    max_rounds: usize,
) -> Result<(CircleDomain, NumericalConformalMap, Vec<f64>)> {
    if !(tol > 0.0) || max_rounds == 0 {
        return Err(Error::domain("need a positive tolerance and at least one round"));
    }
    let sources: Vec<Vec<Complex64>> = t
        .boundary_pieces
        .iter()
        .map(|c| c.clone().positively_oriented().into_vertices())
        .collect();
    let mut order: Vec<usize> = (0..sources.len()).collect();
    let diam: Vec<f64> = sources.iter().map(|v| diameter_of(v)).collect();
    order.sort_by(|&a, &b| diam[b].total_cmp(&diam[a]).then(a.cmp(&b)));

    let mut images = sources.clone();
    let mut points = t.points.clone();
    let mut steps = Vec::new();
    let mut history: Vec<f64> = Vec::new();
    let map_tol = tol;
    loop {
        for &j in &order {
            let curve = JordanPolyline::new(images[j].clone(), 0)?;
            let cm = fit_charge_map(&curve, map_tol)?;
            images.par_iter_mut().for_each(|v| v.iter_mut().for_each(|z| *z = cm.eval(*z)));
            for p in points.iter_mut() {
                if let Some(z) = p.finite() {
                    *p = PlanePoint::from_complex(cm.eval(z));
                }
            }
            steps.push(MapStep::Exterior(cm));
        }
        let res = images
            .iter()
            .map(|v| circularity_of(v))
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        history.push(res);
        if res < tol {
            break;
        }
        if history.len() >= 2 && res >= history[history.len() - 2] {
            return Err(Error::Stalled { what: "Koebe iteration".into(), history });
        }
        if history.len() == max_rounds {
            return Err(Error::NonConvergence { what: "Koebe iteration".into(), residual: res });
        }
    }

    let fits: Vec<(Complex64, f64)> = images.iter().map(|v| fit_circle(v)).collect::<Result<_>>()?;
    let big = (0..fits.len())
        .max_by(|&a, &b| fits[a].1.total_cmp(&fits[b].1).then(b.cmp(&a)))
        .unwrap();
    let (c0, r0) = fits[big];
    let gauge = MapStep::Affine { scale: 1.0 / r0, shift: -c0 / r0 };
    for v in images.iter_mut() {
        v.iter_mut().for_each(|z| *z = gauge.eval(*z));
    }
    for p in points.iter_mut() {
        if let Some(z) = p.finite() {
            *p = PlanePoint::from_complex(gauge.eval(z));
        }
    }
    steps.push(gauge);
    let circles = fits
        .iter()
        .enumerate()
        .map(|(j, &(c, r))| {
            if j == big {
                Circle::new(Complex64::new(0.0, 0.0), 1.0)
            } else {
                Circle::new((c - c0) / r0, r / r0)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let tables = sources
        .into_iter()
        .zip(images)
        .map(|(source, image)| BoundaryTable { source, image })
        .collect();
    let residual = *history.last().unwrap();
    let map = NumericalConformalMap::from_steps(steps, tables, residual);
    Ok((CircleDomain { circles, point_components: points }, map, history))
}

/// Modulus (1/2π)·arccosh((d² − r₁² − r₂²)/(2r₁r₂)) of the complement of
/// two disjoint closed disks.
pub fn two_disk_modulus(a: &Circle, b: &Circle) -> Result<f64> {
    let d = (a.center_finite() - b.center_finite()).norm();
    if d <= a.radius + b.radius {
        return Err(Error::domain("disks are not disjoint"));
    }
    let x = (d * d - a.radius * a.radius - b.radius * b.radius) / (2.0 * a.radius * b.radius);
    Ok(x.acosh() / TAU)
}

/// Modulus of the complement of two disjoint filled curves, by inversion
/// about a point inside `a` and the grid solver.
pub fn complement_modulus(a: &JordanPolyline, b: &JordanPolyline, grid: usize) -> Result<f64> {
    if nesting_relation(a, b) != Nesting::Disjoint {
        return Err(Error::domain("curves are not disjoint"));
    }
    let pole = a.interior_point();
    let inv = |z: Complex64| (z - pole).inv();
    modulus_annulus(&a.map(inv)?, &b.map(inv)?, grid)
}

/// Conformal modulus of the region between `inner` and `outer` from a
/// Dirichlet problem (0 on inner, 1 on outer) on a log-polar grid, doubled
/// until two levels agree within 1%.
pub fn modulus_annulus(outer: &JordanPolyline, inner: &JordanPolyline, grid: usize) -> Result<f64> {
    if grid < 16 {
        return Err(Error::domain("modulus grid must have at least 16 angular nodes"));
    }
    if inner.crosses(outer) || nesting_relation(inner, outer) != Nesting::AInB {
        return Err(Error::domain("inner curve is not strictly inside the outer curve"));
    }
    let center = inner.interior_point();
    let mut prev: Option<f64> = None;
    let mut g = grid;
    let mut change = f64::INFINITY;
    for _ in 0..MODULUS_LEVELS {
        let Some(m) = log_polar_modulus(outer, inner, center, g)? else {
            break;
        };
        if let Some(p) = prev {
            change = ((m - p) / m).abs();
            if change < 0.01 {
                return Ok(m);
            }
        }
        prev = Some(m);
        g *= 2;
    }
    Err(Error::NonConvergence { what: "modulus grid refinement".into(), residual: change })
}

/// log |X − c| for every crossing X of the ray c + t·dir (t > 0).
fn ray_crossings(v: &[Complex64], c: Complex64, dir: Complex64) -> Vec<f64> {
    let n = v.len();
    let side = |z: Complex64| {
        let w = z - c;
        dir.re * w.im - dir.im * w.re
    };
    let mut out = Vec::new();
    for i in 0..n {
        let (a, b) = (v[i], v[(i + 1) % n]);
        let (sa, sb) = (side(a), side(b));
        if (sa > 0.0) == (sb > 0.0) {
            continue;
        }
        let x = a + (b - a) * (sa / (sa - sb));
        let t = ((x - c) * dir.conj()).re;
        if t > 0.0 {
            out.push(t.ln());
        }
    }
    out.sort_by(f64::total_cmp);
    out
}

#[derive(Clone, Copy, PartialEq)]
enum Node {
    Free(usize),
    Fixed(f64),
}

fn log_polar_modulus(outer: &JordanPolyline, inner: &JordanPolyline, c: Complex64, g: usize) -> Result<Option<f64>> {
    let ht = TAU / g as f64;
    let r_lo = inner.distance_to(c);
    let r_hi = outer.vertices().iter().map(|z| (z - c).norm()).fold(0.0, f64::max);
    let rho0 = r_lo.ln() - ht;
    let rho1 = r_hi.ln() + ht;
    let nr = ((rho1 - rho0) / ht).ceil() as usize + 1;
    if nr * g > MODULUS_NODE_BUDGET {
        return Ok(None);
    }
    let hr = (rho1 - rho0) / (nr - 1) as f64;
    let rho = |i: usize| rho0 + i as f64 * hr;
    let theta = |j: usize| j as f64 * ht;
    let node_z = |i: usize, j: usize| c + Complex64::from_polar(rho(i).exp(), theta(j));

    let rays: Vec<(Vec<f64>, Vec<f64>)> = (0..g)
        .into_par_iter()
        .map(|j| {
            let dir = Complex64::from_polar(1.0, theta(j));
            (ray_crossings(inner.vertices(), c, dir), ray_crossings(outer.vertices(), c, dir))
        })
        .collect();
    let odd_above = |xs: &[f64], r: f64| xs.iter().filter(|&&x| x > r).count() % 2 == 1;
    let mut nodes = vec![Node::Fixed(0.0); nr * g];
    let mut free = 0;
    for j in 0..g {
        for i in 0..nr {
            let r = rho(i);
            nodes[j * nr + i] = if odd_above(&rays[j].0, r) {
                Node::Fixed(0.0)
            } else if !odd_above(&rays[j].1, r) {
                Node::Fixed(1.0)
            } else {
                free += 1;
                Node::Free(free - 1)
            };
        }
    }
    if free == 0 {
        return Ok(None);
    }

    let idx_in = SegmentIndex::new(inner.vertices());
    let idx_out = SegmentIndex::new(outer.vertices());
    let wr = ht / hr;
    let wt = hr / ht;
    // per free node: (neighbours, diagonal, rhs, boundary terms (weight, value))
    let mut rows: Vec<(Vec<(usize, f64)>, f64, f64, Vec<(f64, f64)>)> = vec![(Vec::new(), 0.0, 0.0, Vec::new()); free];
    let mut fixed_pairs = 0.0;
    for j in 0..g {
        for i in 0..nr {
            let here = nodes[j * nr + i];
            let nbrs = [
                (i.wrapping_sub(1), j, wr, true),
                (i + 1, j, wr, true),
                (i, (j + g - 1) % g, wt, false),
                (i, (j + 1) % g, wt, false),
            ];
            for (ii, jj, w, radial) in nbrs {
                if ii >= nr {
                    continue;
                }
                let there = nodes[jj * nr + ii];
                match (here, there) {
                    (Node::Free(a), Node::Free(b)) => rows[a].0.push((b, w)),
                    (Node::Free(a), Node::Fixed(val)) => {
                        let (curve, idx) = if val == 0.0 { (inner, &idx_in) } else { (outer, &idx_out) };
                        let frac = if radial {
                            let xs = if val == 0.0 { &rays[j].0 } else { &rays[j].1 };
                            let (lo, hi) = if ii > i { (rho(i), rho(ii)) } else { (rho(ii), rho(i)) };
                            xs.iter()
                                .filter(|&&x| x >= lo && x <= hi)
                                .map(|&x| (x - rho(i)).abs() / hr)
                                .fold(1.0, f64::min)
                        } else {
                            let (za, zb) = (node_z(i, j), node_z(ii, jj));
                            match first_hit(za, zb, curve.vertices(), idx) {
                                Some(s) => {
                                    let x = za + (zb - za) * s;
                                    ((x - c) / (za - c)).arg().abs() / ht
                                }
                                None => 1.0,
                            }
                        };
                        let w_cut = w / frac.clamp(MIN_CUT_FRACTION, 1.0);
                        rows[a].1 += w_cut;
                        rows[a].2 += w_cut * val;
                        rows[a].3.push((w_cut, val));
                    }
                    (Node::Fixed(x), Node::Fixed(y)) if x != y => fixed_pairs += 0.5 * w,
                    _ => {}
                }
            }
        }
    }
    for row in rows.iter_mut() {
        row.1 += row.0.iter().map(|x| x.1).sum::<f64>();
    }

    let u = conjugate_gradient(&rows)?;
    let mut energy = fixed_pairs;
    for (a, row) in rows.iter().enumerate() {
        for &(b, w) in &row.0 {
            if b > a {
                energy += w * (u[a] - u[b]).powi(2);
            }
        }
        for &(w, val) in &row.3 {
            energy += w * (u[a] - val).powi(2);
        }
    }
    Ok(Some(1.0 / energy))
}

type Row = (Vec<(usize, f64)>, f64, f64, Vec<(f64, f64)>);

fn conjugate_gradient(rows: &[Row]) -> Result<Vec<f64>> {
    let n = rows.len();
    let apply = |x: &[f64], y: &mut [f64]| {
        y.par_iter_mut().enumerate().for_each(|(i, yi)| {
            let row = &rows[i];
            *yi = row.1 * x[i] - row.0.iter().map(|&(j, w)| w * x[j]).sum::<f64>();
        })
    };
    let dot = |a: &[f64], b: &[f64]| a.par_iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let b: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let bnorm = dot(&b, &b).sqrt().max(f64::MIN_POSITIVE);
    let mut x = vec![0.0; n];
    let mut r = b.clone();
    let mut z: Vec<f64> = r.iter().zip(rows).map(|(ri, row)| ri / row.1).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let max_iter = 20 * n + 1000;
    for _ in 0..max_iter {
        apply(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        x.par_iter_mut().zip(&p).for_each(|(xi, pi)| *xi += alpha * pi);
        r.par_iter_mut().zip(&ap).for_each(|(ri, api)| *ri -= alpha * api);
        if dot(&r, &r).sqrt() <= 1e-11 * bnorm {
            return Ok(x);
        }
        z.par_iter_mut()
            .zip(&r)
            .zip(rows)
            .for_each(|((zi, ri), row)| *zi = ri / row.1);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.par_iter_mut().zip(&z).for_each(|(pi, zi)| *pi = zi + beta * *pi);
    }
    Err(Error::NonConvergence { what: "Laplace solve".into(), residual: dot(&r, &r).sqrt() / bnorm })
}
