//! Rational maps of the Riemann sphere as dynamical systems.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::point::{chordal, PlanePoint};
use crate::poly::{cluster_roots, polish_root, roots_all, Poly};

/// Default tolerance handed to the polynomial root solver.
pub const ROOT_TOL: f64 = 1e-12;

/// Multiplier below which a cycle counts as superattracting.
pub const SUPERATTRACTING_EPS: f64 = 1e-10;
/// Width of the indifferent band `1 ± ε` around the unit circle.
pub const INDIFFERENT_EPS: f64 = 1e-6;

/// Longest cycle the orbit classifier looks for.
const MAX_PERIOD: usize = 64;

/// Relative size below which a leading coefficient produced by cancellation
/// is treated as zero.
const CANCEL_REL: f64 = 1e-13;

/// `f = P / Q` with coprime `P`, `Q` and `degree = max(deg P, deg Q)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RationalMap {
    num: Poly,
    den: Poly,
    degree: usize,
}

#[derive(Serialize, Deserialize)]
struct RationalMapRepr {
    num: Poly,
    den: Poly,
}

impl Serialize for RationalMap {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        RationalMapRepr {
            num: self.num.clone(),
            den: self.den.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for RationalMap {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = RationalMapRepr::deserialize(d)?;
        RationalMap::new(r.num, r.den).map_err(serde::de::Error::custom)
    }
}

/// Dynamical type of a fixed point, decided by its multiplier modulus.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixedPointClass {
    Superattracting,
    Attracting,
    Repelling,
    Indifferent,
}

impl FixedPointClass {
    pub fn from_multiplier(modulus: f64) -> Self {
        if modulus < SUPERATTRACTING_EPS {
            FixedPointClass::Superattracting
        } else if modulus < 1.0 - INDIFFERENT_EPS {
            FixedPointClass::Attracting
        } else if modulus > 1.0 + INDIFFERENT_EPS {
            FixedPointClass::Repelling
        } else {
            FixedPointClass::Indifferent
        }
    }

    pub fn is_attracting(self) -> bool {
        matches!(self, FixedPointClass::Superattracting | FixedPointClass::Attracting)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub point: PlanePoint,
    #[serde(with = "crate::point::pair")]
    pub multiplier: Complex64,
    pub multiplicity: usize,
    pub class: FixedPointClass,
}

/// Fate of one critical orbit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OrbitVerdict {
    Attracted {
        cycle: Vec<PlanePoint>,
        period: usize,
        multiplier: f64,
    },
    LandsOnRepelling {
        point: PlanePoint,
        period: usize,
        preperiod: usize,
        multiplier: f64,
    },
    EscapedToAttractingInfinity {
        iterations: usize,
    },
    Undecided {
        budget: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalOrbitReport {
    pub critical_point: PlanePoint,
    pub multiplicity: usize,
    pub verdict: OrbitVerdict,
    pub orbit_prefix: Vec<PlanePoint>,
}

impl CriticalOrbitReport {
    /// True for verdicts compatible with geometric finiteness.
    pub fn is_decided(&self) -> bool {
        !matches!(self.verdict, OrbitVerdict::Undecided { .. })
    }
}

/// Derivative of `a/b` at `z`.
fn quotient_derivative(a: &Poly, b: &Poly, z: Complex64) -> Complex64 {
    let (av, ad) = a.eval_with_derivative(z);
    let (bv, bd) = b.eval_with_derivative(z);
    (ad * bv - av * bd) / (bv * bv)
}

impl RationalMap {
    /// A rational map of degree at least 2.
    pub fn new(num: Poly, den: Poly) -> Result<Self> {
        Self::with_min_degree(num, den, 2)
    }

    /// Like [`RationalMap::new`] but admitting lower degrees, for the linear
    /// maps used as identity or similarity probes.
    pub fn with_min_degree(num: Poly, den: Poly, min_degree: usize) -> Result<Self> {
        if den.is_zero() {
            return Err(Error::domain("denominator is the zero polynomial"));
        }
        if num
            .coeffs()
            .iter()
            .chain(den.coeffs())
            .any(|c| !c.re.is_finite() || !c.im.is_finite())
        {
            return Err(Error::domain("non-finite coefficient"));
        }
        let degree = num.degree().max(den.degree());
        if num.is_zero() {
            return Err(Error::domain("numerator is the zero polynomial"));
        }
        if degree < min_degree.max(1) {
            return Err(Error::domain(format!(
                "degree {degree} is below the required {min_degree}"
            )));
        }
        check_coprime(&num, &den)?;
        Ok(RationalMap { num, den, degree })
    }

    pub fn polynomial(coeffs: &[Complex64]) -> Result<Self> {
        Self::new(Poly::new(coeffs.to_vec()), Poly::constant(Complex64::new(1.0, 0.0)))
    }

    pub fn polynomial_real(coeffs: &[f64]) -> Result<Self> {
        Self::new(Poly::from_real(coeffs), Poly::from_real(&[1.0]))
    }

    pub fn num(&self) -> &Poly {
        &self.num
    }

    pub fn den(&self) -> &Poly {
        &self.den
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn is_polynomial(&self) -> bool {
        self.den.degree() == 0
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("rational map serializes")
    }

    /// `f` evaluated at a finite point, returning a non-finite value for poles.
    pub fn eval_finite(&self, z: Complex64) -> Complex64 {
        match self.evaluate(PlanePoint::Finite(z)) {
            PlanePoint::Finite(w) => w,
            PlanePoint::Infinity => Complex64::new(f64::INFINITY, 0.0),
        }
    }

    /// Sphere-aware evaluation.
    pub fn evaluate(&self, z: PlanePoint) -> PlanePoint {
        let (n, m) = (self.num.degree(), self.den.degree());
        match z {
            PlanePoint::Infinity => {
                if n > m {
                    PlanePoint::Infinity
                } else if n == m {
                    PlanePoint::from_complex(self.num.leading() / self.den.leading())
                } else {
                    PlanePoint::Finite(Complex64::new(0.0, 0.0))
                }
            }
            PlanePoint::Finite(z) if z.norm() <= 1.0 => {
                let q = self.den.eval(z);
                if q.norm() == 0.0 {
                    return PlanePoint::Infinity;
                }
                PlanePoint::from_complex(self.num.eval(z) / q)
            }
            PlanePoint::Finite(z) => {
                // Reciprocal chart avoids overflow for large |z|.
                let u = z.inv();
                let pt = self.num.reversed(n).eval(u);
                let qt = self.den.reversed(m).eval(u);
                if qt.norm() == 0.0 {
                    return PlanePoint::Infinity;
                }
                let r = pt / qt;
                let w = if n >= m {
                    r * z.powi((n - m) as i32)
                } else {
                    r * u.powi((m - n) as i32)
                };
                PlanePoint::from_complex(w)
            }
        }
    }

    /// `f′(z)` at a finite non-pole point.
    pub fn derivative(&self, z: Complex64) -> Complex64 {
        quotient_derivative(&self.num, &self.den, z)
    }

    /// The map conjugated by `z ↦ 1/z`, i.e. `1/f(1/z)`.
    pub fn conjugate_by_inversion(&self) -> RationalMap {
        let d = self.degree;
        RationalMap {
            num: self.den.reversed(d),
            den: self.num.reversed(d),
            degree: d,
        }
    }

    /// Derivative of `f` read in local charts: `z` near the source point
    /// (or `1/z` when `src_inverted`), `w` near the target (or `1/w`).
    pub fn chart_derivative(&self, z: PlanePoint, src_inverted: bool, dst_inverted: bool) -> Complex64 {
        let d = self.degree;
        let coord = match (z, src_inverted) {
            (PlanePoint::Infinity, true) => Complex64::new(0.0, 0.0),
            (PlanePoint::Finite(z), true) => z.inv(),
            (PlanePoint::Finite(z), false) => z,
            (PlanePoint::Infinity, false) => return Complex64::new(f64::INFINITY, 0.0),
        };
        let (a, b) = match (src_inverted, dst_inverted) {
            (false, false) => (self.num.clone(), self.den.clone()),
            (false, true) => (self.den.clone(), self.num.clone()),
            (true, false) => (self.num.reversed(d), self.den.reversed(d)),
            (true, true) => (self.den.reversed(d), self.num.reversed(d)),
        };
        quotient_derivative(&a, &b, coord)
    }

    /// Multiplier of a cycle given by its points in orbit order.
    pub fn cycle_multiplier(&self, cycle: &[PlanePoint]) -> Complex64 {
        let inverted = |p: &PlanePoint| match p {
            PlanePoint::Infinity => true,
            PlanePoint::Finite(z) => z.norm() > 1.0,
        };
        let k = cycle.len();
        (0..k)
            .map(|j| self.chart_derivative(cycle[j], inverted(&cycle[j]), inverted(&cycle[(j + 1) % k])))
            .product()
    }

    /// Critical points with multiplicity; the multiplicities sum to `2d − 2`.
    pub fn critical_points(&self) -> Result<Vec<(PlanePoint, usize)>> {
        let w = &(&self.num.derivative() * &self.den) - &(&self.num * &self.den.derivative());
        let w = w.trimmed(CANCEL_REL);
        let mut out: Vec<(PlanePoint, usize)> = Vec::new();
        if w.degree() >= 1 {
            let roots = roots_all(&w, ROOT_TOL)?;
            for (z, k) in cluster_roots(&roots, ROOT_TOL.sqrt()) {
                out.push((PlanePoint::Finite(z), k));
            }
        }
        let total = 2 * self.degree - 2;
        let finite = if w.is_zero() { 0 } else { w.degree() };
        if total > finite {
            out.push((PlanePoint::Infinity, total - finite));
        }
        Ok(out)
    }

    /// Finite critical points with multiplicity.
    pub fn finite_critical_points(&self) -> Result<Vec<(Complex64, usize)>> {
        Ok(self
            .critical_points()?
            .into_iter()
            .filter_map(|(p, k)| p.finite().map(|z| (z, k)))
            .collect())
    }

    /// Finite poles (roots of the denominator), with multiplicity.
    pub fn poles(&self) -> Result<Vec<Complex64>> {
        if self.den.degree() == 0 {
            return Ok(Vec::new());
        }
        roots_all(&self.den, ROOT_TOL)
    }

    /// All `degree` solutions of `f(z) = w`, with multiplicity.
    pub fn preimages(&self, w: PlanePoint) -> Result<Vec<PlanePoint>> {
        let target = match w {
            PlanePoint::Infinity => self.den.clone(),
            PlanePoint::Finite(w) => (&self.num - &self.den.scale_by(w)).trimmed(CANCEL_REL),
        };
        let mut out = Vec::with_capacity(self.degree);
        if target.degree() >= 1 {
            let roots = roots_all(&target, ROOT_TOL)?;
            let clusters = cluster_roots(&roots, ROOT_TOL.sqrt());
            for (z, k) in clusters {
                let z = if k == 1 {
                    polish_root(&target, z, 1e-15).unwrap_or(z)
                } else {
                    z
                };
                out.extend(std::iter::repeat_n(PlanePoint::Finite(z), k));
            }
        }
        let finite = out.len();
        out.extend(std::iter::repeat_n(PlanePoint::Infinity, self.degree - finite));
        Ok(out)
    }

    /// All fixed points on the sphere with multipliers and classes.
    pub fn fixed_points(&self) -> Result<Vec<FixedPoint>> {
        let eq = (&self.num - &(&Poly::identity() * &self.den)).trimmed(CANCEL_REL);
        let mut out = Vec::new();
        if eq.degree() >= 1 {
            let roots = roots_all(&eq, ROOT_TOL)?;
            for (z, k) in cluster_roots(&roots, ROOT_TOL.sqrt()) {
                let p = PlanePoint::Finite(z);
                let inv = z.norm() > 1.0;
                let m = self.chart_derivative(p, inv, inv);
                out.push(FixedPoint {
                    point: p,
                    multiplier: m,
                    multiplicity: k,
                    class: FixedPointClass::from_multiplier(m.norm()),
                });
            }
        }
        let finite = if eq.is_zero() { 0 } else { eq.degree() };
        if self.degree + 1 > finite {
            let m = self.chart_derivative(PlanePoint::Infinity, true, true);
            out.push(FixedPoint {
                point: PlanePoint::Infinity,
                multiplier: m,
                multiplicity: self.degree + 1 - finite,
                class: FixedPointClass::from_multiplier(m.norm()),
            });
        }
        Ok(out)
    }

    /// The fixed point at infinity, if there is one.
    pub fn infinity_fixed_point(&self) -> Option<FixedPoint> {
        if self.num.degree() <= self.den.degree() {
            return None;
        }
        let m = self.chart_derivative(PlanePoint::Infinity, true, true);
        Some(FixedPoint {
            point: PlanePoint::Infinity,
            multiplier: m,
            multiplicity: 1,
            class: FixedPointClass::from_multiplier(m.norm()),
        })
    }

    /// `[z, f(z), …, fⁿ(z)]`.
    pub fn orbit(&self, z: PlanePoint, n: usize) -> Vec<PlanePoint> {
        let mut out = Vec::with_capacity(n + 1);
        let mut cur = z;
        out.push(cur);
        for _ in 0..n {
            cur = self.evaluate(cur);
            out.push(cur);
        }
        out
    }

    /// `fⁿ(z)` and `(fⁿ)′(z)` for a finite orbit; `None` if it meets a pole.
    pub fn iterate_with_derivative(&self, z: Complex64, n: usize) -> Option<(Complex64, Complex64)> {
        let mut cur = z;
        let mut d = Complex64::new(1.0, 0.0);
        for _ in 0..n {
            d *= self.derivative(cur);
            cur = self.eval_finite(cur);
            if !cur.re.is_finite() || !cur.im.is_finite() {
                return None;
            }
        }
        Some((cur, d))
    }

    /// Follow every critical orbit for up to `budget` steps and decide its fate.
    pub fn classify_postcritical(&self, budget: usize, tol: f64) -> Result<Vec<CriticalOrbitReport>> {
        if budget == 0 {
            return Err(Error::domain("orbit budget must be at least 1"));
        }
        let inf_attracting = self
            .infinity_fixed_point()
            .is_some_and(|fp| fp.class.is_attracting());
        let crits = self.critical_points()?;
        Ok(crits
            .into_iter()
            .map(|(c, k)| self.classify_orbit(c, k, budget, tol, inf_attracting))
            .collect())
    }

    fn classify_orbit(
        &self,
        c: PlanePoint,
        multiplicity: usize,
        budget: usize,
        tol: f64,
        inf_attracting: bool,
    ) -> CriticalOrbitReport {
        let mut orbit = vec![c];
        let report = |verdict: OrbitVerdict, orbit: Vec<PlanePoint>| CriticalOrbitReport {
            critical_point: c,
            multiplicity,
            verdict,
            orbit_prefix: orbit,
        };
        let mut z = c;
        for n in 1..=budget {
            z = self.evaluate(z);
            orbit.push(z);
            for p in 1..=n.min(MAX_PERIOD) {
                if orbit[n].chordal(&orbit[n - p]) >= tol {
                    continue;
                }
                let cycle = self.refine_cycle(&orbit[n - p..n]);
                let lambda = self.cycle_multiplier(&cycle).norm();
                let class = FixedPointClass::from_multiplier(lambda);
                if class.is_attracting() {
                    let at_infinity = cycle.len() == 1 && cycle[0].is_infinite();
                    let verdict = if at_infinity && inf_attracting && !c.is_infinite() {
                        OrbitVerdict::EscapedToAttractingInfinity { iterations: n }
                    } else {
                        OrbitVerdict::Attracted {
                            cycle,
                            period: p,
                            multiplier: lambda,
                        }
                    };
                    return report(verdict, orbit);
                }
                if class == FixedPointClass::Repelling {
                    let landing = (0..=n)
                        .find(|&i| cycle.iter().any(|q| orbit[i].chordal(q) < tol))
                        .unwrap_or(n - p);
                    let stays = orbit[landing..]
                        .iter()
                        .all(|o| cycle.iter().any(|q| o.chordal(q) < tol));
                    if stays {
                        let point = cycle
                            .iter()
                            .copied()
                            .min_by(|a, b| orbit[landing].chordal(a).total_cmp(&orbit[landing].chordal(b)))
                            .unwrap_or(cycle[0]);
                        return report(
                            OrbitVerdict::LandsOnRepelling {
                                point,
                                period: p,
                                preperiod: landing,
                                multiplier: lambda,
                            },
                            orbit,
                        );
                    }
                }
                // Indifferent or ambiguous: parabolic dynamics is out of scope.
                return report(OrbitVerdict::Undecided { budget }, orbit);
            }
        }
        report(OrbitVerdict::Undecided { budget }, orbit)
    }

    /// Newton-refine an approximate finite cycle on `f^p(z) = z`; falls back to
    /// the raw orbit points if any point is infinite or Newton misbehaves.
    fn refine_cycle(&self, approx: &[PlanePoint]) -> Vec<PlanePoint> {
        let p = approx.len();
        // Points numerically at infinity are snapped there when the snapped
        // cycle is still consistent under f.
        let raw = || {
            let snapped: Vec<PlanePoint> = approx
                .iter()
                .map(|q| if q.chordal(&PlanePoint::Infinity) < 1e-6 { PlanePoint::Infinity } else { *q })
                .collect();
            let consistent = (0..p).all(|i| self.evaluate(snapped[i]).chordal(&snapped[(i + 1) % p]) < 1e-6);
            if consistent {
                snapped
            } else {
                approx.to_vec()
            }
        };
        let Some(mut z) = approx[0].finite() else {
            return raw();
        };
        if approx.iter().any(|q| q.finite().is_none_or(|w| w.norm() > 1e8)) {
            return raw();
        }
        for _ in 0..30 {
            let Some((fz, d)) = self.iterate_with_derivative(z, p) else {
                return raw();
            };
            let denom = d - 1.0;
            if denom.norm() == 0.0 {
                break;
            }
            let step = (fz - z) / denom;
            if !step.re.is_finite() || step.norm() > 1e-3 * z.norm().max(1.0) {
                return raw();
            }
            z -= step;
            if step.norm() <= 1e-15 * z.norm().max(1.0) {
                break;
            }
        }
        if chordal(z, approx[0].finite().unwrap()) > 1e-6 {
            return raw();
        }
        self.orbit(PlanePoint::Finite(z), p - 1)
    }
}

/// Reject numerator/denominator pairs sharing a root.
fn check_coprime(num: &Poly, den: &Poly) -> Result<()> {
    let (small, other) = if num.degree() <= den.degree() {
        (num, den)
    } else {
        (den, num)
    };
    if small.degree() == 0 {
        return Ok(());
    }
    let roots = roots_all(small, ROOT_TOL)?;
    for r in roots {
        let rel = other.eval(r).norm() / other.residual_scale(r);
        if rel < 1e-9 {
            return Err(Error::domain(format!(
                "numerator and denominator share the root {r} (relative resultant factor {rel:.2e})"
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn fin(re: f64, im: f64) -> PlanePoint {
        PlanePoint::Finite(c(re, im))
    }

    fn z_sq() -> RationalMap {
        RationalMap::polynomial_real(&[0.0, 0.0, 1.0]).unwrap()
    }

    fn z_plus_inv() -> RationalMap {
        RationalMap::new(Poly::from_real(&[1.0, 0.0, 1.0]), Poly::from_real(&[0.0, 1.0])).unwrap()
    }

    fn cheb3() -> RationalMap {
        RationalMap::polynomial_real(&[0.0, -3.0, 0.0, 1.0]).unwrap()
    }

    #[test]
    fn rejects_degenerate_input() {
        assert!(RationalMap::new(Poly::from_real(&[1.0, 1.0]), Poly::zero()).is_err());
        // (z-1)(z+1) / (z-1) shares a root.
        assert!(RationalMap::new(Poly::from_real(&[-1.0, 0.0, 1.0]), Poly::from_real(&[-1.0, 1.0])).is_err());
        assert!(RationalMap::new(Poly::from_real(&[0.0, 2.0]), Poly::from_real(&[1.0])).is_err());
        assert!(RationalMap::with_min_degree(Poly::from_real(&[0.0, 0.5]), Poly::from_real(&[1.0]), 1).is_ok());
    }

    #[test]
    fn evaluate_on_sphere() {
        let inv = RationalMap::with_min_degree(Poly::from_real(&[1.0]), Poly::from_real(&[0.0, 1.0]), 1).unwrap();
        assert_eq!(inv.evaluate(fin(0.0, 0.0)), PlanePoint::Infinity);
        assert_eq!(z_sq().evaluate(PlanePoint::Infinity), PlanePoint::Infinity);
        let mobius =
            RationalMap::with_min_degree(Poly::from_real(&[1.0, 2.0]), Poly::from_real(&[-1.0, 1.0]), 1).unwrap();
        assert_eq!(mobius.evaluate(PlanePoint::Infinity), fin(2.0, 0.0));
        // Large arguments go through the reciprocal chart without overflow.
        let w = z_sq().evaluate(fin(1e200, 0.0));
        assert_eq!(w, PlanePoint::Infinity);
        let w = z_sq().evaluate(fin(1e100, 0.0)).finite().unwrap();
        assert!((w.re / 1e200 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn critical_points_examples() {
        let quad = RationalMap::polynomial_real(&[0.3, 0.0, 1.0]).unwrap();
        let cp = quad.critical_points().unwrap();
        assert_eq!(cp.len(), 2);
        assert!(cp[0].0.chordal(&fin(0.0, 0.0)) < 1e-12 && cp[0].1 == 1);
        assert_eq!(cp[1], (PlanePoint::Infinity, 1));

        let cp = z_plus_inv().critical_points().unwrap();
        assert_eq!(cp.len(), 2);
        assert!(cp[0].0.chordal(&fin(-1.0, 0.0)) < 1e-12);
        assert!(cp[1].0.chordal(&fin(1.0, 0.0)) < 1e-12);

        let cp = cheb3().critical_points().unwrap();
        assert_eq!(cp.len(), 3);
        assert_eq!(cp[2], (PlanePoint::Infinity, 2));
        assert_eq!(cp.iter().map(|x| x.1).sum::<usize>(), 4);
    }

    #[test]
    fn preimage_examples() {
        let p = z_sq().preimages(fin(4.0, 0.0)).unwrap();
        assert!(p[0].chordal(&fin(-2.0, 0.0)) < 1e-12 && p[1].chordal(&fin(2.0, 0.0)) < 1e-12);
        let p = z_sq().preimages(fin(0.0, 0.0)).unwrap();
        assert_eq!(p.len(), 2);
        assert!(p.iter().all(|q| q.chordal(&fin(0.0, 0.0)) < 1e-12));
        let p = z_plus_inv().preimages(fin(2.0, 0.0)).unwrap();
        assert_eq!(p.len(), 2);
        assert!(p.iter().all(|q| q.chordal(&fin(1.0, 0.0)) < 1e-6));
        let p = z_sq().preimages(PlanePoint::Infinity).unwrap();
        assert_eq!(p, vec![PlanePoint::Infinity, PlanePoint::Infinity]);
    }

    #[test]
    fn fixed_point_examples() {
        let fps = z_sq().fixed_points().unwrap();
        assert_eq!(fps.len(), 3);
        assert_eq!(fps[0].class, FixedPointClass::Superattracting);
        assert!((fps[1].multiplier - c(2.0, 0.0)).norm() < 1e-12);
        assert_eq!(fps[1].class, FixedPointClass::Repelling);
        assert_eq!(fps[2].point, PlanePoint::Infinity);
        assert_eq!(fps[2].class, FixedPointClass::Superattracting);

        let half = RationalMap::with_min_degree(Poly::from_real(&[0.0, 0.5]), Poly::from_real(&[1.0]), 1).unwrap();
        let fps = half.fixed_points().unwrap();
        assert_eq!(fps.len(), 2);
        assert_eq!(fps[0].class, FixedPointClass::Attracting);
        assert!((fps[0].multiplier.norm() - 0.5).abs() < 1e-15);
        assert_eq!(fps[1].point, PlanePoint::Infinity);
        assert_eq!(fps[1].class, FixedPointClass::Repelling);

        // z^2 - 1: (1 ± √5)/2 with multipliers 1 ± √5.
        let f = RationalMap::polynomial_real(&[-1.0, 0.0, 1.0]).unwrap();
        let fps = f.fixed_points().unwrap();
        let s5 = 5f64.sqrt();
        assert!(fps[0].point.chordal(&fin((1.0 - s5) / 2.0, 0.0)) < 1e-12);
        assert!((fps[0].multiplier - c(1.0 - s5, 0.0)).norm() < 1e-12);
        assert!((fps[1].multiplier - c(1.0 + s5, 0.0)).norm() < 1e-12);
        assert!(fps[..2].iter().all(|fp| fp.class == FixedPointClass::Repelling));
        assert_eq!(fps[2].class, FixedPointClass::Superattracting);
    }

    #[test]
    fn parabolic_infinity() {
        let fp = z_plus_inv().infinity_fixed_point().unwrap();
        assert_eq!(fp.class, FixedPointClass::Indifferent);
        let all = z_plus_inv().fixed_points().unwrap();
        let inf = all.iter().find(|f| f.point.is_infinite()).unwrap();
        assert_eq!(inf.multiplicity, 3);
    }

    #[test]
    fn orbit_examples() {
        let o = z_sq().orbit(fin(2.0, 0.0), 3);
        assert_eq!(o, vec![fin(2.0, 0.0), fin(4.0, 0.0), fin(16.0, 0.0), fin(256.0, 0.0)]);
        assert_eq!(z_sq().orbit(fin(0.0, 0.0), 5), vec![fin(0.0, 0.0); 6]);
        let f = RationalMap::polynomial_real(&[-1.0, 0.0, 1.0]).unwrap();
        assert_eq!(
            f.orbit(fin(0.0, 0.0), 4),
            vec![fin(0.0, 0.0), fin(-1.0, 0.0), fin(0.0, 0.0), fin(-1.0, 0.0), fin(0.0, 0.0)]
        );
    }

    #[test]
    fn classify_examples() {
        let r = z_sq().classify_postcritical(100, 1e-9).unwrap();
        match &r[0].verdict {
            OrbitVerdict::Attracted { period, .. } => assert_eq!(*period, 1),
            v => panic!("{v:?}"),
        }

        let f = RationalMap::polynomial_real(&[-1.0, 0.0, 1.0]).unwrap();
        let r = f.classify_postcritical(100, 1e-9).unwrap();
        match &r[0].verdict {
            OrbitVerdict::Attracted { period, multiplier, .. } => {
                assert_eq!(*period, 2);
                assert!(*multiplier < SUPERATTRACTING_EPS);
            }
            v => panic!("{v:?}"),
        }

        let r = cheb3().classify_postcritical(100, 1e-9).unwrap();
        for rep in r.iter().filter(|r| !r.critical_point.is_infinite()) {
            match &rep.verdict {
                OrbitVerdict::LandsOnRepelling {
                    point,
                    period,
                    preperiod,
                    multiplier,
                } => {
                    assert_eq!((*period, *preperiod), (1, 1));
                    assert!((multiplier - 9.0).abs() < 1e-9);
                    let expected = -rep.critical_point.finite().unwrap() * 2.0;
                    assert!(point.chordal(&PlanePoint::Finite(expected)) < 1e-12);
                }
                v => panic!("{v:?}"),
            }
        }

        // z^2 + 5: the finite critical orbit escapes.
        let f = RationalMap::polynomial_real(&[5.0, 0.0, 1.0]).unwrap();
        let r = f.classify_postcritical(100, 1e-9).unwrap();
        assert!(matches!(r[0].verdict, OrbitVerdict::EscapedToAttractingInfinity { .. }));
    }

    #[test]
    fn undecided_is_a_value() {
        // z^2 + i: critical orbit is strictly preperiodic onto a repelling
        // 2-cycle, but a budget of 1 cannot see that.
        let f = RationalMap::polynomial(&[c(0.0, 1.0), c(0.0, 0.0), c(1.0, 0.0)]).unwrap();
        let r = f.classify_postcritical(1, 1e-9).unwrap();
        assert!(matches!(r[0].verdict, OrbitVerdict::Undecided { budget: 1 }));
        let r = f.classify_postcritical(50, 1e-9).unwrap();
        assert!(matches!(
            r[0].verdict,
            OrbitVerdict::LandsOnRepelling { period: 2, preperiod: 2, .. }
        ));
    }

    #[test]
    fn json_format() {
        let f = RationalMap::new(Poly::from_real(&[1.0, 2.0, 0.0, 1.0]), Poly::from_real(&[0.5, 1.0])).unwrap();
        let s = f.to_json();
        assert_eq!(s, r#"{"num":[[1.0,0.0],[2.0,0.0],[0.0,0.0],[1.0,0.0]],"den":[[0.5,0.0],[1.0,0.0]]}"#);
        assert_eq!(RationalMap::from_json(&s).unwrap(), f);
    }
}
