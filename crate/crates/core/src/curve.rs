//! Closed polylines: membership, area, crossings and resampling.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fewest vertices a closed polyline may carry.
pub const MIN_VERTICES: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    Positive,
    Negative,
}

/// Axis-aligned bounding box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BBox {
    pub min: Complex64,
    pub max: Complex64,
}

impl BBox {
    pub fn of(points: &[Complex64]) -> BBox {
        let mut b = BBox {
            min: Complex64::new(f64::INFINITY, f64::INFINITY),
            max: Complex64::new(f64::NEG_INFINITY, f64::NEG_INFINITY),
        };
        for z in points {
            b.min.re = b.min.re.min(z.re);
            b.min.im = b.min.im.min(z.im);
            b.max.re = b.max.re.max(z.re);
            b.max.im = b.max.im.max(z.im);
        }
        b
    }

    pub fn contains(&self, z: Complex64) -> bool {
        z.re >= self.min.re && z.re <= self.max.re && z.im >= self.min.im && z.im <= self.max.im
    }

    pub fn overlaps(&self, o: &BBox) -> bool {
        self.min.re <= o.max.re && o.min.re <= self.max.re && self.min.im <= o.max.im && o.min.im <= self.max.im
    }

    pub fn expanded(&self, margin: f64) -> BBox {
        let d = Complex64::new(margin, margin);
        BBox { min: self.min - d, max: self.max + d }
    }

    pub fn width(&self) -> f64 {
        self.max.re - self.min.re
    }

    pub fn height(&self) -> f64 {
        self.max.im - self.min.im
    }
}

/// A closed polyline; the last vertex connects back to the first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JordanPolyline {
    #[serde(with = "crate::point::pair::vec")]
    vertices: Vec<Complex64>,
    orientation: Orientation,
    depth_tag: usize,
}

impl JordanPolyline {
    pub fn new(vertices: Vec<Complex64>, depth_tag: usize) -> Result<Self> {
        if vertices.len() < MIN_VERTICES {
            return Err(Error::domain(format!(
                "closed polyline needs at least {MIN_VERTICES} vertices, got {}",
                vertices.len()
            )));
        }
        if vertices.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::domain("polyline vertex is not finite"));
        }
        let orientation = if signed_area(&vertices) >= 0.0 {
            Orientation::Positive
        } else {
            Orientation::Negative
        };
        Ok(JordanPolyline {
            vertices,
            orientation,
            depth_tag,
        })
    }

    /// Samples `center + r·e^{iθ}` at `n` equally spaced angles.
    pub fn circle(center: Complex64, r: f64, n: usize) -> Result<Self> {
        Self::from_fn(n, |t| center + Complex64::from_polar(r, t))
    }

    /// Axis-aligned ellipse with semi-axes `a` (real) and `b` (imaginary),
    /// sampled uniformly in the parametric angle.
    pub fn ellipse(center: Complex64, a: f64, b: f64, n: usize) -> Result<Self> {
        Self::from_fn(n, |t| center + Complex64::new(a * t.cos(), b * t.sin()))
    }

    /// Axis-aligned square boundary sampled uniformly by arclength, starting
    /// at the midpoint of the right side.
    pub fn square(center: Complex64, side: f64, n: usize) -> Result<Self> {
        let h = side / 2.0;
        let corners = [
            Complex64::new(h, 0.0),
            Complex64::new(h, h),
            Complex64::new(-h, h),
            Complex64::new(-h, -h),
            Complex64::new(h, -h),
            Complex64::new(h, 0.0),
        ];
        let lens: Vec<f64> = corners.windows(2).map(|w| (w[1] - w[0]).norm()).collect();
        let total: f64 = lens.iter().sum();
        let pts = (0..n)
            .map(|k| {
                let mut s = total * k as f64 / n as f64;
                let mut seg = 0;
                while seg < lens.len() - 1 && s > lens[seg] {
                    s -= lens[seg];
                    seg += 1;
                }
                center + corners[seg] + (corners[seg + 1] - corners[seg]) * (s / lens[seg])
            })
            .collect();
        Self::new(pts, 0)
    }

    /// `n` samples of a closed parametrization over `[0, 2π)`.
    pub fn from_fn(n: usize, f: impl Fn(f64) -> Complex64) -> Result<Self> {
        let pts = (0..n)
            .map(|k| f(std::f64::consts::TAU * k as f64 / n as f64))
            .collect();
        Self::new(pts, 0)
    }

    pub fn with_depth_tag(mut self, depth: usize) -> Self {
        self.depth_tag = depth;
        self
    }

    pub fn vertices(&self) -> &[Complex64] {
        &self.vertices
    }

    pub fn into_vertices(self) -> Vec<Complex64> {
        self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    pub fn depth_tag(&self) -> usize {
        self.depth_tag
    }

    /// Same vertex set traversed counter-clockwise.
    pub fn positively_oriented(mut self) -> Self {
        if self.orientation == Orientation::Negative {
            self.vertices.reverse();
            self.orientation = Orientation::Positive;
        }
        self
    }

    /// Apply a pointwise map; fails if the image degenerates.
    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Result<Self> {
        Self::new(self.vertices.iter().map(|&z| f(z)).collect(), self.depth_tag)
    }

    pub fn segments(&self) -> impl Iterator<Item = (Complex64, Complex64)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    pub fn signed_area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    pub fn perimeter(&self) -> f64 {
        self.segments().map(|(a, b)| (b - a).norm()).sum()
    }

    pub fn bbox(&self) -> BBox {
        BBox::of(&self.vertices)
    }

    /// Largest gap between consecutive vertices.
    pub fn max_gap(&self) -> f64 {
        self.segments().map(|(a, b)| (b - a).norm()).fold(0.0, f64::max)
    }

    pub fn min_gap(&self) -> f64 {
        self.segments().map(|(a, b)| (b - a).norm()).fold(f64::INFINITY, f64::min)
    }

    /// Winding number of the polyline around `z`.
    pub fn winding_number(&self, z: Complex64) -> i32 {
        winding_number(&self.vertices, z)
    }

    /// Membership in the bounded complementary region.
    pub fn contains(&self, z: Complex64) -> bool {
        self.bbox().contains(z) && self.winding_number(z) != 0
    }

    /// Euclidean distance from `z` to the polyline.
    pub fn distance_to(&self, z: Complex64) -> f64 {
        self.segments()
            .map(|(a, b)| point_segment_distance(z, a, b))
            .fold(f64::INFINITY, f64::min)
    }

    /// Area centroid (falls back to the vertex mean for degenerate polygons).
    pub fn centroid(&self) -> Complex64 {
        let a = self.signed_area();
        if a.abs() < 1e-300 {
            return self.vertices.iter().sum::<Complex64>() / self.len() as f64;
        }
        let o = self.vertices[0];
        let mut c = Complex64::new(0.0, 0.0);
        for (p, q) in self.segments() {
            let (p, q) = (p - o, q - o);
            let cross = p.re * q.im - q.re * p.im;
            c += (p + q) * cross;
        }
        o + c / (6.0 * a)
    }

    /// A point well inside the bounded region: the midpoint of the widest
    /// interior chord along a few horizontal scan lines.
    pub fn interior_point(&self) -> Complex64 {
        let c = self.centroid();
        let bb = self.bbox();
        if self.contains(c) && self.distance_to(c) > 0.05 * bb.width().min(bb.height()) {
            return c;
        }
        let mut best = (f64::NEG_INFINITY, c);
        for k in 1..32 {
            let y = bb.min.im + bb.height() * k as f64 / 32.0;
            let xs = scanline_crossings(&self.vertices, y);
            for pair in xs.chunks_exact(2) {
                let w = pair[1] - pair[0];
                let mid = Complex64::new(0.5 * (pair[0] + pair[1]), y);
                let score = w.min(self.distance_to(mid) * 2.0);
                if score > best.0 {
                    best = (score, mid);
                }
            }
        }
        best.1
    }

    /// True when no two non-adjacent segments meet.
    pub fn is_simple(&self) -> bool {
        let idx = SegmentIndex::new(&self.vertices);
        let n = self.vertices.len();
        for i in 0..n {
            let (a, b) = (self.vertices[i], self.vertices[(i + 1) % n]);
            for j in idx.candidates(a, b) {
                if j <= i || j == i + 1 || (i == 0 && j == n - 1) {
                    continue;
                }
                let (c, d) = (self.vertices[j], self.vertices[(j + 1) % n]);
                if segments_intersect(a, b, c, d) {
                    return false;
                }
            }
        }
        true
    }

    /// True when some segment of `self` meets some segment of `other`.
    pub fn crosses(&self, other: &JordanPolyline) -> bool {
        if !self.bbox().overlaps(&other.bbox()) {
            return false;
        }
        let idx = SegmentIndex::new(&other.vertices);
        let m = other.vertices.len();
        self.segments().any(|(a, b)| {
            idx.candidates(a, b).into_iter().any(|j| {
                let (c, d) = (other.vertices[j], other.vertices[(j + 1) % m]);
                segments_intersect(a, b, c, d)
            })
        })
    }

    /// Polyline resampled to `n` points equally spaced in arclength.
    pub fn resampled(&self, n: usize) -> Result<Self> {
        let total = self.perimeter();
        let verts = &self.vertices;
        let m = verts.len();
        let mut out = Vec::with_capacity(n);
        let mut seg = 0;
        let mut acc = 0.0;
        for k in 0..n {
            let target = total * k as f64 / n as f64;
            loop {
                let len = (verts[(seg + 1) % m] - verts[seg]).norm();
                if acc + len >= target || seg == m - 1 {
                    let t = if len > 0.0 { ((target - acc) / len).clamp(0.0, 1.0) } else { 0.0 };
                    out.push(verts[seg] + (verts[(seg + 1) % m] - verts[seg]) * t);
                    break;
                }
                acc += len;
                seg += 1;
            }
        }
        Self::new(out, self.depth_tag)
    }
}

pub fn signed_area(v: &[Complex64]) -> f64 {
    let n = v.len();
    if n == 0 {
        return 0.0;
    }
    // relative to the first vertex, so tiny curves far from 0 keep their sign
    let o = v[0];
    0.5 * (0..n)
        .map(|i| {
            let (p, q) = (v[i] - o, v[(i + 1) % n] - o);
            p.re * q.im - q.re * p.im
        })
        .sum::<f64>()
}

/// Winding number of the closed polyline `v` around `z` (Sunday's crossing rule).
pub fn winding_number(v: &[Complex64], z: Complex64) -> i32 {
    let n = v.len();
    let mut w = 0;
    for i in 0..n {
        let (a, b) = (v[i], v[(i + 1) % n]);
        let side = (b.re - a.re) * (z.im - a.im) - (z.re - a.re) * (b.im - a.im);
        if a.im <= z.im {
            if b.im > z.im && side > 0.0 {
                w += 1;
            }
        } else if b.im <= z.im && side < 0.0 {
            w -= 1;
        }
    }
    w
}

/// Sorted x-coordinates where the horizontal line at `y` crosses `v`.
pub fn scanline_crossings(v: &[Complex64], y: f64) -> Vec<f64> {
    let n = v.len();
    let mut xs: Vec<f64> = (0..n)
        .filter_map(|i| {
            let (a, b) = (v[i], v[(i + 1) % n]);
            if (a.im <= y) != (b.im <= y) {
                Some(a.re + (y - a.im) / (b.im - a.im) * (b.re - a.re))
            } else {
                None
            }
        })
        .collect();
    xs.sort_by(f64::total_cmp);
    xs
}

pub fn point_segment_distance(z: Complex64, a: Complex64, b: Complex64) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_sqr();
    if len2 == 0.0 {
        return (z - a).norm();
    }
    let t = (((z - a) * ab.conj()).re / len2).clamp(0.0, 1.0);
    (z - (a + ab * t)).norm()
}

fn orient(a: Complex64, b: Complex64, c: Complex64) -> f64 {
    (b.re - a.re) * (c.im - a.im) - (b.im - a.im) * (c.re - a.re)
}

fn on_segment(a: Complex64, b: Complex64, p: Complex64) -> bool {
    p.re >= a.re.min(b.re) && p.re <= a.re.max(b.re) && p.im >= a.im.min(b.im) && p.im <= a.im.max(b.im)
}

/// Closed-segment intersection test, touching included.
pub fn segments_intersect(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> bool {
    let (o1, o2, o3, o4) = (orient(a, b, c), orient(a, b, d), orient(c, d, a), orient(c, d, b));
    if ((o1 > 0.0 && o2 < 0.0) || (o1 < 0.0 && o2 > 0.0)) && ((o3 > 0.0 && o4 < 0.0) || (o3 < 0.0 && o4 > 0.0)) {
        return true;
    }
    (o1 == 0.0 && on_segment(a, b, c))
        || (o2 == 0.0 && on_segment(a, b, d))
        || (o3 == 0.0 && on_segment(c, d, a))
        || (o4 == 0.0 && on_segment(c, d, b))
}

/// Uniform-grid bucket index over the segments of a closed polyline.
pub struct SegmentIndex {
    origin: Complex64,
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<usize>>,
}

impl SegmentIndex {
    pub fn new(v: &[Complex64]) -> Self {
        let n = v.len();
        let bb = BBox::of(v);
        let mean_len = (0..n).map(|i| (v[(i + 1) % n] - v[i]).norm()).sum::<f64>() / n.max(1) as f64;
        let span = bb.width().max(bb.height()).max(1e-300);
        let cell = (2.0 * mean_len).max(span / 512.0).max(1e-300);
        let nx = ((bb.width() / cell) as usize + 1).min(1024);
        let ny = ((bb.height() / cell) as usize + 1).min(1024);
        let mut idx = SegmentIndex {
            origin: bb.min,
            cell,
            nx,
            ny,
            buckets: vec![Vec::new(); nx * ny],
        };
        for i in 0..n {
            let (x0, y0, x1, y1) = idx.cell_range(v[i], v[(i + 1) % n]);
            for y in y0..=y1 {
                for x in x0..=x1 {
                    idx.buckets[y * nx + x].push(i);
                }
            }
        }
        idx
    }

    fn cell_range(&self, a: Complex64, b: Complex64) -> (usize, usize, usize, usize) {
        let clamp = |t: f64, n: usize| -> usize {
            if t <= 0.0 {
                0
            } else {
                (t as usize).min(n - 1)
            }
        };
        let x0 = clamp((a.re.min(b.re) - self.origin.re) / self.cell, self.nx);
        let x1 = clamp((a.re.max(b.re) - self.origin.re) / self.cell, self.nx);
        let y0 = clamp((a.im.min(b.im) - self.origin.im) / self.cell, self.ny);
        let y1 = clamp((a.im.max(b.im) - self.origin.im) / self.cell, self.ny);
        (x0, y0, x1, y1)
    }

    /// Indices of segments whose cells overlap the box of `[a, b]`, sorted.
    pub fn candidates(&self, a: Complex64, b: Complex64) -> Vec<usize> {
        let (x0, y0, x1, y1) = self.cell_range(a, b);
        let mut out = Vec::new();
        for y in y0..=y1 {
            for x in x0..=x1 {
                out.extend_from_slice(&self.buckets[y * self.nx + x]);
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}
