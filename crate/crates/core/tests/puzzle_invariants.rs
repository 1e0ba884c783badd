use koebe_fatou::corpus::corpus;
use koebe_fatou::puzzle::{
    assemble_forest, audit_forest, build_invariant_disk, piece_degree, track_ends, PuzzleForest, DEFAULT_LIFT_TOL,
    DEFAULT_SHRINK_RATIO,
};
use koebe_fatou::{Error, RationalMap};

fn map(name: &str) -> RationalMap {
    corpus().unwrap().into_iter().find(|(n, _)| *n == name).unwrap().1
}

fn forest(name: &str, depth: usize) -> koebe_fatou::Result<PuzzleForest> {
    let f = map(name);
    let reports = f.classify_postcritical(64, 1e-9)?;
    let u = build_invariant_disk(&f, &reports)?;
    assemble_forest(&f, &u, depth)
}

fn check(name: &str, depth: usize) {
    let forest = forest(name, depth).unwrap();
    let audit = audit_forest(&forest);
    assert!(audit.nesting_violations.is_empty(), "{name}: {:?}", audit.nesting_violations);
    assert!(audit.commutation_failures.is_empty(), "{name}: {:?}", audit.commutation_failures);
    assert!(audit.spacing_violations.is_empty(), "{name}: {:?}", audit.spacing_violations);
    assert!(audit.max_lift_residual < DEFAULT_LIFT_TOL, "{name}: {:e}", audit.max_lift_residual);
    for piece in &forest.pieces {
        assert!(piece.boundary.is_simple(), "{name}: piece {} self-intersects", piece.id);
    }
    for end in track_ends(&forest, DEFAULT_SHRINK_RATIO).unwrap() {
        assert!(end.degrees.windows(2).all(|w| w[1] <= w[0]), "{name}: {:?}", end.degrees);
        for (k, &id) in end.chain.iter().enumerate().skip(1) {
            assert_eq!(piece_degree(&forest, id).unwrap(), end.degrees[k]);
        }
    }
}

#[test]
fn z_squared_to_depth_8() {
    check("z^2", 8);
}

#[test]
fn basilica_to_depth_8() {
    check("z^2-1", 8);
}

#[test]
fn cantor_to_depth_8() {
    check("z^2+5", 8);
}

#[test]
fn chebyshev_to_depth_6() {
    check("z^3-3z", 6);
}

#[test]
fn mixed_cubic_to_depth_6() {
    check("mixed_cubic", 6);
}

#[test]
fn chebyshev_depth_7_hits_the_clearance_limit() {
    // level curves approach the critical values ±2 like 9⁻ⁿ
    match forest("z^3-3z", 7) {
        Err(Error::Lift { depth: 7, source }) => {
            assert!(matches!(*source, Error::Domain(ref msg) if msg.contains("critical value")), "{source}")
        }
        other => panic!("expected a clearance error, got {:?}", other.map(|f| f.pieces.len())),
    }
}

#[test]
fn cantor_counts_double() {
    let forest = forest("z^2+5", 5).unwrap();
    for d in 0..=5 {
        assert_eq!(forest.levels[d].len(), 1 << d);
    }
}
