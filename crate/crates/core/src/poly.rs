//! Complex polynomials and simultaneous all-roots solving.
//!
//! Roots are found with the Aberth–Ehrlich iteration started from a
//! deterministic ring at the Cauchy radius. Near-coincident roots are merged
//! into clusters whose size is reported as the multiplicity; every member of a
//! cluster is replaced by the cluster mean, which is a much better estimate of
//! a multiple root than any single member.

use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Iteration budget for the simultaneous solver.
const ABERTH_MAX_ITER: usize = 800;
/// Iteration budget for single-root Newton polishing.
const COARSE_CLUSTER: f64 = 1e-4;
const NEWTON_MAX_ITER: usize = 60;

/// Polynomial with complex coefficients stored in ascending degree.
///
/// Trailing zero coefficients are trimmed on construction, so the leading
/// coefficient is nonzero unless the polynomial is identically zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Poly {
    #[serde(with = "crate::point::pair::vec")]
    coeffs: Vec<Complex64>,
}

impl Poly {
    pub fn new(mut coeffs: Vec<Complex64>) -> Self {
        while coeffs.last().is_some_and(|c| *c == ZERO) {
            coeffs.pop();
        }
        Poly { coeffs }
    }

    pub fn from_real(coeffs: &[f64]) -> Self {
        Poly::new(coeffs.iter().map(|&c| Complex64::new(c, 0.0)).collect())
    }

    pub fn zero() -> Self {
        Poly { coeffs: Vec::new() }
    }

    pub fn constant(c: Complex64) -> Self {
        Poly::new(vec![c])
    }

    /// The monomial `z`.
    pub fn identity() -> Self {
        Poly::new(vec![ZERO, ONE])
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Degree, with the zero polynomial reported as degree 0.
    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn leading(&self) -> Complex64 {
        self.coeffs.last().copied().unwrap_or(ZERO)
    }

    /// Coefficient of `z^k` (zero beyond the degree).
    pub fn coeff(&self, k: usize) -> Complex64 {
        self.coeffs.get(k).copied().unwrap_or(ZERO)
    }

    /// Largest coefficient modulus.
    pub fn scale(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Residual yardstick at `z`: `scale · max(1, |z|)^deg`.
    pub fn residual_scale(&self, z: Complex64) -> f64 {
        self.scale() * z.norm().max(1.0).powi(self.degree() as i32)
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        self.coeffs.iter().rev().fold(ZERO, |acc, &c| acc * z + c)
    }

    /// Value and first derivative by a single Horner pass.
    pub fn eval_with_derivative(&self, z: Complex64) -> (Complex64, Complex64) {
        let mut p = ZERO;
        let mut dp = ZERO;
        for &c in self.coeffs.iter().rev() {
            dp = dp * z + p;
            p = p * z + c;
        }
        (p, dp)
    }

    pub fn derivative(&self) -> Poly {
        Poly::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, &c)| c * k as f64)
                .collect(),
        )
    }

    pub fn scale_by(&self, s: Complex64) -> Poly {
        Poly::new(self.coeffs.iter().map(|&c| c * s).collect())
    }

    /// Drop leading coefficients below `rel · scale`.
    pub fn trimmed(&self, rel: f64) -> Poly {
        let cut = rel * self.scale();
        let mut coeffs = self.coeffs.clone();
        while coeffs.last().is_some_and(|c| c.norm() <= cut) {
            coeffs.pop();
        }
        Poly::new(coeffs)
    }

    /// Coefficients reversed and padded to length `n + 1`: `z^n p(1/z)`.
    pub fn reversed(&self, n: usize) -> Poly {
        let mut c = vec![ZERO; n + 1];
        for (k, &a) in self.coeffs.iter().enumerate() {
            c[n - k] = a;
        }
        Poly::new(c)
    }

    /// The polynomial `∏ (z − r)` over the given roots.
    pub fn from_roots(roots: &[Complex64]) -> Poly {
        roots.iter().fold(Poly::constant(ONE), |acc, &r| &acc * &Poly::new(vec![-r, ONE]))
    }
}

impl Add for &Poly {
    type Output = Poly;
    fn add(self, rhs: &Poly) -> Poly {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        Poly::new((0..n).map(|k| self.coeff(k) + rhs.coeff(k)).collect())
    }
}

impl Sub for &Poly {
    type Output = Poly;
    fn sub(self, rhs: &Poly) -> Poly {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        Poly::new((0..n).map(|k| self.coeff(k) - rhs.coeff(k)).collect())
    }
}

impl Mul for &Poly {
    type Output = Poly;
    fn mul(self, rhs: &Poly) -> Poly {
        if self.is_zero() || rhs.is_zero() {
            return Poly::zero();
        }
        let mut c = vec![ZERO; self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            for (j, &b) in rhs.coeffs.iter().enumerate() {
                c[i + j] += a * b;
            }
        }
        Poly::new(c)
    }
}

impl Neg for &Poly {
    type Output = Poly;
    fn neg(self) -> Poly {
        self.scale_by(-ONE)
    }
}

/// Tight Cauchy radius: the positive root of `|a_n| x^n − Σ_{k<n} |a_k| x^k`.
fn cauchy_radius(p: &Poly) -> f64 {
    let n = p.degree();
    let lead = p.leading().norm();
    let mags: Vec<f64> = p.coeffs[..n].iter().map(|c| c.norm() / lead).collect();
    // g(x) = 1 − Σ m_k x^{k−n} is increasing in x; bracket then bisect.
    let g = |x: f64| -> f64 {
        let mut s = 0.0;
        let mut xp = 1.0;
        for k in (0..n).rev() {
            xp /= x;
            s += mags[k] * xp;
        }
        1.0 - s
    };
    if mags.iter().all(|&m| m == 0.0) {
        return 1.0;
    }
    let mut hi = 1.0;
    while g(hi) < 0.0 {
        hi *= 2.0;
    }
    let mut lo = hi / 2.0;
    while g(lo) > 0.0 && lo > 1e-300 {
        lo /= 2.0;
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// All `deg(p)` roots of `p`, with multiplicity, sorted lexicographically by
/// real then imaginary part.
///
/// Every returned root satisfies `|p(z)| ≤ tol · p.residual_scale(z)`.
pub fn roots_all(p: &Poly, tol: f64) -> Result<Vec<Complex64>> {
    if !(tol > 0.0) {
        return Err(Error::domain("root tolerance must be positive"));
    }
    let n = p.degree();
    if p.is_zero() || n == 0 {
        return Err(Error::domain("constant polynomial has no roots to find"));
    }
    if p.coeffs.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(Error::domain("non-finite polynomial coefficient"));
    }

    // Roots at the origin are split off exactly.
    let zeros_at_origin = p.coeffs.iter().take_while(|c| **c == ZERO).count();
    let q = Poly::new(p.coeffs[zeros_at_origin..].to_vec());
    let m = q.degree();
    let mut roots = vec![ZERO; zeros_at_origin];

    if m == 1 {
        roots.push(-q.coeffs[0] / q.coeffs[1]);
    } else if m > 1 {
        roots.extend(aberth(&q, tol)?);
    }

    let roots = merge_clusters(p, &roots, tol);
    let worst = roots
        .iter()
        .map(|&z| p.eval(z).norm() / p.residual_scale(z))
        .fold(0.0, f64::max);
    if !(worst <= tol) {
        return Err(Error::NonConvergence {
            what: format!("roots of degree-{n} polynomial"),
            residual: worst,
        });
    }
    Ok(sorted(roots))
}

fn aberth(p: &Poly, tol: f64) -> Result<Vec<Complex64>> {
    let n = p.degree();
    let dp = p.derivative();
    let rho = cauchy_radius(p);
    let mut z: Vec<Complex64> = (0..n)
        .map(|k| Complex64::from_polar(rho, std::f64::consts::TAU * k as f64 / n as f64 + 0.7))
        .collect();
    let mut done = vec![false; n];
    let step_floor = 4.0 * f64::EPSILON;

    for _ in 0..ABERTH_MAX_ITER {
        let mut all_done = true;
        for i in 0..n {
            if done[i] {
                continue;
            }
            let zi = z[i];
            let pv = p.eval(zi);
            if pv == ZERO {
                done[i] = true;
                continue;
            }
            let w = pv / dp.eval(zi);
            let s: Complex64 = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let d = zi - z[j];
                    if d == ZERO {
                        ZERO
                    } else {
                        d.inv()
                    }
                })
                .sum();
            let mut delta = w / (ONE - w * s);
            if !delta.re.is_finite() || !delta.im.is_finite() {
                delta = w;
            }
            if !delta.re.is_finite() || !delta.im.is_finite() {
                // Landed on a critical point of p; nudge off it.
                delta = Complex64::new(1e-8 * zi.norm().max(1.0), 1e-8);
            }
            z[i] = zi - delta;
            let resid = p.eval(z[i]).norm() / p.residual_scale(z[i]);
            if delta.norm() <= step_floor * z[i].norm().max(1.0) || resid <= tol * 1e-3 {
                done[i] = true;
            } else {
                all_done = false;
            }
        }
        if all_done {
            return Ok(z);
        }
    }

    // Budget exhausted: accept if every root already meets the tolerance
    // (typical for clustered multiple roots, which converge linearly).
    let worst = z
        .iter()
        .map(|&zi| p.eval(zi).norm() / p.residual_scale(zi))
        .fold(0.0, f64::max);
    if worst <= tol {
        Ok(z)
    } else {
        Err(Error::NonConvergence {
            what: format!("Aberth iteration (degree {n})"),
            residual: worst,
        })
    }
}

fn sorted(mut roots: Vec<Complex64>) -> Vec<Complex64> {
    roots.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    roots
}

/// Single-linkage clusters of roots closer than `radius · max(1, |z|)`.
///
/// Returns `(mean, size)` per cluster in canonical order.
pub fn cluster_roots(roots: &[Complex64], radius: f64) -> Vec<(Complex64, usize)> {
    let mut out: Vec<(Complex64, usize)> = cluster_indices(roots, radius)
        .into_iter()
        .map(|g| (g.iter().map(|&i| roots[i]).sum::<Complex64>() / g.len() as f64, g.len()))
        .collect();
    out.sort_by(|a, b| a.0.re.total_cmp(&b.0.re).then(a.0.im.total_cmp(&b.0.im)));
    out
}

/// Single-linkage groups of indices, in order of first member.
fn cluster_indices(roots: &[Complex64], radius: f64) -> Vec<Vec<usize>> {
    let n = roots.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let scale = roots[i].norm().max(roots[j].norm()).max(1.0);
            if (roots[i] - roots[j]).norm() < radius * scale {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        match groups.iter_mut().find(|g| g.0 == r) {
            Some(g) => g.1.push(i),
            None => groups.push((r, vec![i])),
        }
    }
    groups.into_iter().map(|g| g.1).collect()
}

/// Replace near-coincident roots by their mean when the mean is itself a root
/// to within `tol`; multiple roots come out of the iteration smeared by
/// roughly `eps^(1/m)`.
fn merge_clusters(p: &Poly, roots: &[Complex64], tol: f64) -> Vec<Complex64> {
    let rel = |z: Complex64| p.eval(z).norm() / p.residual_scale(z);
    let mut out = Vec::with_capacity(roots.len());
    for group in cluster_indices(roots, COARSE_CLUSTER) {
        let members: Vec<Complex64> = group.iter().map(|&i| roots[i]).collect();
        let k = members.len();
        let mut mean = members.iter().sum::<Complex64>() / k as f64;
        if k > 1 {
            // A root of multiplicity k is a simple root of the (k-1)-th derivative.
            let mut d = p.clone();
            for _ in 1..k {
                d = d.derivative();
            }
            for _ in 0..8 {
                let (v, dv) = d.eval_with_derivative(mean);
                let step = v / dv;
                if !step.re.is_finite() || !step.im.is_finite() || step.norm() > COARSE_CLUSTER {
                    break;
                }
                mean -= step;
            }
        }
        if k > 1 && rel(mean) <= tol {
            out.extend(std::iter::repeat_n(mean, k));
            continue;
        }
        for (w, j) in cluster_roots(&members, tol.sqrt()) {
            out.extend(std::iter::repeat_n(w, j));
        }
    }
    out
}

/// Newton-refine a simple root of `p` starting at `z0`.
///
/// Returns `z0` unchanged when it already satisfies the tolerance.
pub fn polish_root(p: &Poly, z0: Complex64, tol: f64) -> Result<Complex64> {
    polish_root_multiple(p, z0, 1, tol)
}

/// Newton refinement for a root of known multiplicity `m` (`z ← z − m p/p′`).
pub fn polish_root_multiple(p: &Poly, z0: Complex64, m: usize, tol: f64) -> Result<Complex64> {
    if p.degree() == 0 {
        return Err(Error::domain("cannot polish a root of a constant"));
    }
    let within = |z: Complex64| p.eval(z).norm() <= tol * p.residual_scale(z);
    if within(z0) {
        return Ok(z0);
    }
    let mut z = z0;
    let mut last_step = f64::INFINITY;
    let reach = 10.0 * z0.norm().max(1.0);
    for _ in 0..NEWTON_MAX_ITER {
        let (v, dv) = p.eval_with_derivative(z);
        let step = v / dv * m as f64;
        if !step.re.is_finite() || !step.im.is_finite() || step.norm() > reach {
            break;
        }
        let next = z - step;
        if within(next) {
            // One extra step usually buys the last few digits.
            let (v2, dv2) = p.eval_with_derivative(next);
            let extra = next - v2 / dv2 * m as f64;
            if extra.re.is_finite() && p.eval(extra).norm() < v2.norm() {
                return Ok(extra);
            }
            return Ok(next);
        }
        // Growing steps mean we are leaving the basin.
        if step.norm() > 4.0 * last_step && last_step < f64::INFINITY {
            z = next;
            break;
        }
        last_step = step.norm();
        z = next;
    }
    Err(Error::Divergence {
        what: "Newton root polishing".into(),
        last_re: z.re,
        last_im: z.im,
    })
}
