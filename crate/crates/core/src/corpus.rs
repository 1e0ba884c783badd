//! The in-repo test corpus.

use num_complex::Complex64;
use serde::Deserialize;

use crate::error::Result;
use crate::ratmap::RationalMap;
use crate::search::{mixed_cubic, CubicGrid};

const MIXED_CUBIC_JSON: &str = include_str!("../fixtures/mixed_cubic.json");

/// Committed search result for the mixed cubic.
#[derive(Clone, Debug, Deserialize)]
pub struct CubicFixture {
    pub a: f64,
    pub b: [f64; 2],
    pub tag: String,
    pub provenance: Provenance,
}

#[derive(Clone, Debug, Deserialize)]
pub struct Provenance {
    pub grid: CubicGrid,
    pub budget: usize,
    pub hits_on_grid: usize,
}

pub fn mixed_cubic_fixture() -> CubicFixture {
    serde_json::from_str(MIXED_CUBIC_JSON).expect("fixture parses")
}

/// z³ − 3a²z + b at the committed parameters.
pub fn corpus_cubic() -> RationalMap {
    let fx = mixed_cubic_fixture();
    mixed_cubic(fx.a, Complex64::new(fx.b[0], fx.b[1])).expect("fixture map")
}

/// Named corpus maps: z², z²−1, z²+5, z³−3z and the mixed cubic.
pub fn corpus() -> Result<Vec<(&'static str, RationalMap)>> {
    Ok(vec![
        ("z^2", RationalMap::polynomial_real(&[0.0, 0.0, 1.0])?),
        ("z^2-1", RationalMap::polynomial_real(&[-1.0, 0.0, 1.0])?),
        ("z^2+5", RationalMap::polynomial_real(&[5.0, 0.0, 1.0])?),
        ("z^3-3z", RationalMap::polynomial_real(&[0.0, -3.0, 0.0, 1.0])?),
        ("mixed_cubic", corpus_cubic()),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::search::search_mixed_cubic;

    #[test]
    fn fixture_is_reproduced_by_its_search() {
        let fx = mixed_cubic_fixture();
        assert_eq!(fx.tag, "DERIVED");
        let hits = search_mixed_cubic(&fx.provenance.grid, fx.provenance.budget).unwrap();
        assert_eq!(hits.len(), fx.provenance.hits_on_grid);
        let first_fixed = hits.iter().find(|h| h.period == 1).unwrap();
        assert_eq!(first_fixed.a, fx.a);
        assert_eq!([first_fixed.b.re, first_fixed.b.im], fx.b);
    }

    #[test]
    fn corpus_names() {
        let c = corpus().unwrap();
        assert_eq!(c.len(), 5);
        assert_eq!(c[4].1.degree(), 3);
    }
}
