//! Parameter search for cubics z³ − 3a²z + b with one escaping critical
//! orbit and one attracted to a finite cycle.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ratmap::{OrbitVerdict, RationalMap};

/// Cartesian grid: `a_steps` real values of a times a lattice over the
/// rectangle `b_re × b_im` with `b_steps` values per side. A degenerate range
/// contributes one value, so the default is a 50 × 50 grid over (a, real b).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CubicGrid {
    pub a: (f64, f64),
    pub a_steps: usize,
    pub b_re: (f64, f64),
    pub b_im: (f64, f64),
    pub b_steps: usize,
}

impl Default for CubicGrid {
    fn default() -> Self {
        CubicGrid { a: (0.8, 1.2), a_steps: 50, b_re: (-1.0, 1.0), b_im: (0.0, 0.0), b_steps: 50 }
    }
}

fn lattice(range: (f64, f64), steps: usize) -> Vec<f64> {
    if steps <= 1 || range.0 == range.1 {
        return vec![range.0];
    }
    (0..steps)
        .map(|i| range.0 + (range.1 - range.0) * i as f64 / (steps - 1) as f64)
        .collect()
}

impl CubicGrid {
    pub fn cells(&self) -> Vec<(f64, Complex64)> {
        let b_re = lattice(self.b_re, self.b_steps);
        let b_im = lattice(self.b_im, self.b_steps);
        let mut out = Vec::with_capacity(self.len());
        for &a in &lattice(self.a, self.a_steps) {
            for &bi in &b_im {
                for &br in &b_re {
                    out.push((a, Complex64::new(br, bi)));
                }
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        let b_re = if self.b_re.0 == self.b_re.1 { 1 } else { self.b_steps.max(1) };
        let b_im = if self.b_im.0 == self.b_im.1 { 1 } else { self.b_steps.max(1) };
        let a = if self.a.0 == self.a.1 { 1 } else { self.a_steps.max(1) };
        a * b_re * b_im
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// z³ − 3a²z + b.
pub fn mixed_cubic(a: f64, b: Complex64) -> Result<RationalMap> {
    let zero = Complex64::new(0.0, 0.0);
    RationalMap::polynomial(&[b, Complex64::new(-3.0 * a * a, 0.0), zero, Complex64::new(1.0, 0.0)])
}

/// One accepted grid cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CubicHit {
    pub a: f64,
    #[serde(with = "crate::point::pair")]
    pub b: Complex64,
    pub period: usize,
    pub multiplier: f64,
    #[serde(skip)]
    pub map: Option<RationalMap>,
}

/// Cells whose finite critical orbits split into one escape and one
/// attracted finite cycle, in grid order.
pub fn search_mixed_cubic(grid: &CubicGrid, budget: usize) -> Result<Vec<CubicHit>> {
    if budget == 0 {
        return Err(Error::domain("orbit budget must be at least 1"));
    }
    let cells = grid.cells();
    let hits: Vec<Option<CubicHit>> = cells
        .par_iter()
        .map(|&(a, b)| mixed_verdict(a, b, budget))
        .collect::<Result<_>>()?;
    Ok(hits.into_iter().flatten().collect())
}

fn mixed_verdict(a: f64, b: Complex64, budget: usize) -> Result<Option<CubicHit>> {
    if a == 0.0 {
        // one double critical point; never mixed
        return Ok(None);
    }
    let f = mixed_cubic(a, b)?;
    let reports = f.classify_postcritical(budget, 1e-9)?;
    let mut escaped = 0;
    let mut attracted = None;
    for r in reports.iter().filter(|r| !r.critical_point.is_infinite()) {
        match &r.verdict {
            OrbitVerdict::EscapedToAttractingInfinity { .. } => escaped += 1,
            OrbitVerdict::Attracted { cycle, period, multiplier } if cycle.iter().all(|p| !p.is_infinite()) => {
                attracted = Some((*period, *multiplier))
            }
            _ => return Ok(None),
        }
    }
    Ok(match (escaped, attracted) {
        (1, Some((period, multiplier))) => Some(CubicHit { a, b, period, multiplier, map: Some(f) }),
        _ => None,
    })
}
