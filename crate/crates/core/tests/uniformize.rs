use std::f64::consts::TAU;

use koebe_fatou::corpus::corpus;
use koebe_fatou::puzzle::{assemble_forest, build_invariant_disk, PuzzleForest};
use koebe_fatou::uniformize::*;
use koebe_fatou::{Complex64, Error, JordanPolyline, PlanePoint};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn forest(name: &str, depth: usize) -> PuzzleForest {
    let f = corpus().unwrap().into_iter().find(|(n, _)| *n == name).unwrap().1;
    let reports = f.classify_postcritical(64, 1e-9).unwrap();
    let u = build_invariant_disk(&f, &reports).unwrap();
    assemble_forest(&f, &u, depth).unwrap()
}

fn ellipses() -> (JordanPolyline, JordanPolyline) {
    (
        JordanPolyline::ellipse(c(-1.3, 0.0), 1.0, 0.5, 512).unwrap(),
        JordanPolyline::ellipse(c(1.3, 0.3), 1.0, 0.5, 512).unwrap(),
    )
}

fn squares() -> Truncation {
    Truncation::new(vec![
        JordanPolyline::square(c(0.0, 0.0), 1.0, 512).unwrap(),
        JordanPolyline::square(c(2.0, 0.0), 1.0, 512).unwrap(),
        JordanPolyline::square(c(1.0, 2.0), 1.0, 512).unwrap(),
    ])
    .unwrap()
}

fn assert_run_contract(dom: &CircleDomain, map: &NumericalConformalMap, hist: &[f64], tol: f64) {
    dom.validate().unwrap();
    assert!(*hist.last().unwrap() < tol);
    assert!(hist.windows(2).all(|w| w[1] < w[0]), "{hist:?}");
    assert!(map.derivative_at_infinity > 0.0 && map.derivative_at_infinity.is_finite());
    assert_eq!(map.evaluate(PlanePoint::Infinity).unwrap(), PlanePoint::Infinity);
    let big = dom.circles.iter().map(|c| c.radius).fold(0.0, f64::max);
    assert_eq!(big, 1.0);
    for table in &map.boundary {
        let curve = JordanPolyline::new(table.image.clone(), 0).unwrap();
        assert!(circularity(&curve).unwrap() < tol);
    }
}

#[test]
fn truncation_examples() {
    assert_eq!(truncate_domain(&forest("z^2", 3), 3, &Selection::default()).unwrap().len(), 1);
    let cantor = forest("z^2+5", 2);
    let t = truncate_domain(&cantor, 2, &Selection::default()).unwrap();
    assert_eq!(t.len(), 4);
    assert!(t.points.is_empty());
    let cubic = forest("mixed_cubic", 4);
    assert!(cubic.levels[4].len() > 12);
    let t = truncate_domain(&cubic, 4, &Selection::default()).unwrap();
    assert_eq!(t.len(), 12);
    assert_eq!(t.points.len(), cubic.levels[4].len() - 12);
    let smallest_kept = t.boundary_pieces.iter().map(|p| koebe_fatou::geometry::diameter_of(p.vertices())).fold(f64::INFINITY, f64::min);
    let source = t.source.as_ref().unwrap();
    for &id in &cubic.levels[4] {
        if !source.piece_ids.contains(&id) {
            assert!(cubic.pieces[id].diameter <= smallest_kept);
        }
    }

    assert!(truncate_domain(&cantor, 2, &Selection::Pieces(vec![])).is_err());
    assert!(truncate_domain(&cantor, 2, &Selection::Pieces(vec![0])).is_err());
    assert!(truncate_domain(&cantor, 3, &Selection::All).is_err());
    let one = cantor.levels[2][1];
    let t = truncate_domain(&cantor, 2, &Selection::Pieces(vec![one])).unwrap();
    assert_eq!((t.len(), t.points.len()), (1, 3));
}

#[test]
fn square_ring_modulus_is_grid_stable() {
    let outer = JordanPolyline::square(c(0.0, 0.0), 4.0, 1024).unwrap();
    let inner = JordanPolyline::circle(c(0.0, 0.0), 1.0, 512).unwrap();
    let coarse = modulus_annulus(&outer, &inner, 64).unwrap();
    let fine = modulus_annulus(&outer, &inner, 256).unwrap();
    assert!((coarse - fine).abs() / fine < 0.01, "{coarse} vs {fine}");
    // squeezed between the inscribed and circumscribed round annuli
    assert!(fine > 2f64.ln() / TAU && fine < 8f64.sqrt().ln() / TAU);
}

#[test]
fn two_round_disks_are_a_fixed_point() {
    let t = Truncation::new(vec![
        JordanPolyline::circle(c(0.0, 0.0), 1.0, 256).unwrap(),
        JordanPolyline::circle(c(3.0, -1.0), 0.4, 256).unwrap(),
    ])
    .unwrap();
    let (dom, map, hist) = koebe_uniformize(&t, 1e-10, 50).unwrap();
    assert_eq!(hist.len(), 1);
    assert!(hist[0] < 1e-10);
    assert_run_contract(&dom, &map, &hist, 1e-10);
    assert!((dom.circles[1].center_finite() - c(3.0, -1.0)).norm() < 1e-9);
}

#[test]
fn two_ellipses_preserve_modulus() {
    let (a, b) = ellipses();
    let before = complement_modulus(&a, &b, DEFAULT_MODULUS_GRID).unwrap();
    let t = Truncation::new(vec![a.clone(), b]).unwrap();
    let (dom, map, hist) = koebe_uniformize(&t, 1e-3, 50).unwrap();
    assert_run_contract(&dom, &map, &hist, 1e-3);
    let after = two_disk_modulus(&dom.circles[0], &dom.circles[1]).unwrap();
    assert!((after - before).abs() / before < 0.02, "{before} vs {after}");

    // a loop around the first ellipse, carried through the map
    let loop_before = JordanPolyline::ellipse(c(-1.3, 0.0), 1.15, 0.65, 512).unwrap();
    let m0 = modulus_annulus(&loop_before, &a, DEFAULT_MODULUS_GRID).unwrap();
    let loop_after = loop_before
        .map(|z| map.evaluate(PlanePoint::Finite(z)).unwrap().finite().unwrap())
        .unwrap();
    let disk = dom.circles[0].polyline(512).unwrap();
    let m1 = modulus_annulus(&loop_after, &disk, DEFAULT_MODULUS_GRID).unwrap();
    assert!((m1 - m0).abs() / m0 < 0.02, "{m0} vs {m1}");
}

#[test]
fn three_squares_converge_deterministically() {
    let t = squares();
    let (dom, map, hist) = koebe_uniformize(&t, 1e-3, 50).unwrap();
    assert_run_contract(&dom, &map, &hist, 1e-3);
    assert_eq!(dom.circles.len(), 3);
    let (again, _, hist2) = koebe_uniformize(&t, 1e-3, 50).unwrap();
    assert_eq!(dom.to_json(), again.to_json());
    assert_eq!(hist, hist2);
    // symmetric about x = 1 before, so after as well
    let (l, r) = (dom.circles[0], dom.circles[1]);
    assert!((l.radius - r.radius).abs() < 1e-3);
}

#[test]
fn output_is_idempotent() {
    let (dom, _, _) = koebe_uniformize(&squares(), 1e-3, 50).unwrap();
    let (again, map, hist) = koebe_uniformize(&dom.to_truncation(512).unwrap(), 1e-3, 50).unwrap();
    assert_eq!(hist.len(), 1);
    assert!(hist[0] < 1e-3);
    assert!((map.derivative_at_infinity - 1.0).abs() < 1e-3);
    for (x, y) in dom.circles.iter().zip(&again.circles) {
        assert!((x.center_finite() - y.center_finite()).norm() < 1e-3);
        assert!((x.radius - y.radius).abs() < 1e-3);
    }
}

#[test]
fn point_components_ride_along() {
    let (a, b) = ellipses();
    let p = PlanePoint::Finite(c(0.0, 2.0));
    let t = Truncation::new(vec![a, b]).unwrap().with_points(vec![p, PlanePoint::Infinity]);
    let (dom, map, _) = koebe_uniformize(&t, 1e-3, 50).unwrap();
    assert_eq!(dom.point_components.len(), 2);
    assert_eq!(dom.point_components[1], PlanePoint::Infinity);
    let q = map.evaluate(p).unwrap();
    assert!(q.chordal(&dom.point_components[0]) < 1e-12);
    dom.validate().unwrap();
}

#[test]
fn round_budget_is_enforced() {
    match koebe_uniformize(&squares(), 1e-3, 1) {
        Err(Error::NonConvergence { residual, .. }) => assert!(residual >= 1e-3),
        other => panic!("expected non-convergence, got {:?}", other.map(|r| r.2)),
    }
    assert!(koebe_uniformize(&squares(), 0.0, 5).is_err());
}
