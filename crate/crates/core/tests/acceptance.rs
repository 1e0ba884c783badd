//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when the set of failures differs from the known-red set.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::time::{Duration, Instant};

use koebe_fatou::corpus::corpus_cubic;
use koebe_fatou::curve::JordanPolyline;
use koebe_fatou::geometry::{diameter_of, fatness, turning, turning_constant, DEFAULT_PAIR_BUDGET};
use koebe_fatou::pipeline::{run_pipeline, RunConfig};
use koebe_fatou::puzzle::{
    action_class, assemble_forest, audit_forest, build_invariant_disk, chain_degree, piece_degree, track_ends, End, EndClass,
    PuzzleForest, DEFAULT_SHRINK_RATIO,
};
use koebe_fatou::uniformize::{
    complement_modulus, koebe_uniformize, two_disk_modulus, Truncation, DEFAULT_MODULUS_GRID,
};
use koebe_fatou::{Complex64, PlanePoint, RationalMap};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

/// Criteria expected to fail, with the reason kept in the decisions ledger:
/// the quoted square and ellipse constants are attained by non-extremal
/// pairs; the exhaustive oracle gives φ/√2 ≈ 1.1441 and ≈ 2.125.
const KNOWN_RED: &[u32] = &[3];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn forest(f: &RationalMap, depth: usize) -> PuzzleForest {
    let reports = f.classify_postcritical(256, 1e-12).expect("classification");
    let disk = build_invariant_disk(f, &reports).expect("invariant disk");
    assemble_forest(f, &disk, depth).expect("forest")
}

fn quad(c0: f64) -> RationalMap {
    RationalMap::polynomial_real(&[c0, 0.0, 1.0]).unwrap()
}

fn trichotomy(cubic6: &PuzzleForest, build_cubic: Duration) -> Outcome {
    let t = Instant::now();
    let mut pairs = 0;
    let mut bad = 0;
    for f in [quad(0.0), quad(5.0)] {
        let a = audit_forest(&forest(&f, 6));
        pairs += a.pairs_checked;
        bad += a.nesting_violations.len();
    }
    let a = audit_forest(cubic6);
    pairs += a.pairs_checked;
    bad += a.nesting_violations.len();
    let elapsed = t.elapsed() + build_cubic;
    outcome(
        bad == 0 && elapsed < Duration::from_secs(60),
        format!("{pairs} cross-depth pairs, {bad} violations, {:.1}s", elapsed.as_secs_f64()),
    )
}

fn degree_laws(forest: &PuzzleForest) -> Outcome {
    let ends = track_ends(forest, DEFAULT_SHRINK_RATIO).unwrap();
    let top = forest.depth();
    let mut problems = Vec::new();
    let mut decided = 0;
    let mut periodic_checked = 0;
    let mut chain_values = BTreeSet::new();
    let periodic: Vec<&End> = ends
        .iter()
        .filter(|e| matches!(action_class(forest, e), EndClass::Periodic { .. }))
        .collect();
    // Depth at which the chain leaves every periodic chain; periodic ends never do.
    let born = |e: &End| -> usize {
        periodic
            .iter()
            .map(|q| (0..=top).take_while(|&k| q.chain[k] == e.chain[k]).count())
            .max()
            .unwrap_or(0)
    };
    let mut young = 0;
    for e in &ends {
        let degs: Vec<usize> = (1..=top).map(|k| piece_degree(forest, e.chain[k]).unwrap()).collect();
        if degs.windows(2).any(|w| w[1] > w[0]) {
            problems.push(format!("end {} degrees increase {degs:?}", e.id));
        }
        let action = action_class(forest, e);
        if matches!(action, EndClass::Periodic { .. } | EndClass::EventuallyPeriodic { .. }) {
            decided += 1;
            let last3 = &degs[degs.len() - 3..];
            if born(e) > top - 2 {
                young += 1;
            } else if last3.iter().any(|&d| d != last3[0]) {
                problems.push(format!("end {} not constant over the last 3 depths {degs:?}", e.id));
            }
        }
        if let EndClass::EventuallyPeriodic { preperiod, .. } = action {
            if (1..=4).contains(&preperiod) {
                periodic_checked += 1;
                chain_values.insert(chain_degree(forest, e, preperiod, 2).unwrap());
            }
        }
    }
    if chain_values.len() > 1 {
        problems.push(format!("chain degrees at n = 2 take several values {chain_values:?}"));
    }
    outcome(
        problems.is_empty() && periodic_checked > 0,
        format!(
            "{} ends, {decided} decided ({young} left a periodic chain inside the window), {periodic_checked} with preperiod p in 1..4, chain_degree(p, n = 2) in {chain_values:?}; {}",
            ends.len(),
            problems.first().cloned().unwrap_or_else(|| "no violations".into())
        ),
    )
}

/// Exhaustive over all vertex pairs, both arcs scanned directly.
fn brute_turning(v: &[Complex64]) -> f64 {
    let n = v.len();
    let arc_diam = |i: usize, j: usize| {
        let len = (j + n - i) % n;
        let arc: Vec<Complex64> = (0..=len).map(|k| v[(i + k) % n]).collect();
        diameter_of(&arc)
    };
    let mut best: f64 = 1.0;
    for i in 0..n {
        for j in (i + 1)..n {
            best = best.max(arc_diam(i, j).min(arc_diam(j, i)) / (v[i] - v[j]).norm());
        }
    }
    best
}

fn turning_metrology() -> Outcome {
    let circle = JordanPolyline::circle(c(0.0, 0.0), 1.0, 720).unwrap();
    let kc = turning_constant(&circle, DEFAULT_PAIR_BUDGET).k_estimate;
    let square = JordanPolyline::square(c(0.0, 0.0), 1.0, 400).unwrap();
    let ks = turning_constant(&square, DEFAULT_PAIR_BUDGET).k_estimate;
    let ks_oracle = brute_turning(square.vertices());
    let ellipse = JordanPolyline::ellipse(c(0.0, 0.0), 4.0, 1.0, 400).unwrap();
    let ke = turning_constant(&ellipse, DEFAULT_PAIR_BUDGET).k_estimate;
    let ke_oracle = brute_turning(ellipse.vertices());
    let circle_ok = (kc - 1.0).abs() <= 1e-9;
    let oracle_ok = (ks - ks_oracle).abs() < 1e-12 && (ke - ke_oracle).abs() < 1e-12;
    let square_ok = (ks - 1.118).abs() <= 0.01;
    let ellipse_ok = (ke - 2.06).abs() <= 0.02;
    outcome(
        circle_ok && oracle_ok && square_ok && ellipse_ok,
        format!(
            "circle {kc:.12}; square {ks:.4} (oracle {ks_oracle:.4}, target 1.118±0.01); \
             ellipse {ke:.4} (oracle {ke_oracle:.4}, target 2.06±0.02)"
        ),
    )
}

fn turning_uniformity(forest: &PuzzleForest) -> Outcome {
    let ends = track_ends(forest, DEFAULT_SHRINK_RATIO).unwrap();
    let live: Vec<_> = ends.iter().filter(|e| !e.is_shrinking()).collect();
    let k = |id: usize| turning_constant(&forest.pieces[id].boundary, DEFAULT_PAIR_BUDGET).k_estimate;
    let mut worst_change: f64 = 0.0;
    let mut kmax: f64 = 0.0;
    for e in &live {
        let (k5, k6) = (k(e.chain[5]), k(e.chain[6]));
        worst_change = worst_change.max((k6 - k5).abs() / k5);
        kmax = kmax.max(k5).max(k6);
    }
    outcome(
        live.len() >= 10 && worst_change < 0.2 && kmax.is_finite() && kmax < 50.0,
        format!("{} non-shrinking ends, max relative change {worst_change:.4}, max K {kmax:.4}", live.len()),
    )
}

/// Area fraction of the unit disk inside D(z, r), counted on a fine grid.
fn disk_fraction_oracle(z: Complex64, r: f64, cells: usize) -> f64 {
    let h = 2.0 * r / cells as f64;
    let (mut inside, mut total) = (0usize, 0usize);
    for i in 0..cells {
        for j in 0..cells {
            let p = z + c(-r + (i as f64 + 0.5) * h, -r + (j as f64 + 0.5) * h);
            if (p - z).norm() < r {
                total += 1;
                if p.norm() <= 1.0 {
                    inside += 1;
                }
            }
        }
    }
    inside as f64 / total as f64
}

fn fatness_check() -> Outcome {
    let disk = JordanPolyline::circle(c(0.0, 0.0), 1.0, 1024).unwrap();
    let r = fatness(&disk, 64, 1);
    // centred on the boundary, radius just short of the diameter
    let oracle = disk_fraction_oracle(c(1.0, 0.0), 1.999, 2000);
    let seg: Vec<Complex64> = (0..32)
        .map(|k| c(if k < 16 { k as f64 } else { (31 - k) as f64 } / 15.0, 0.0))
        .collect();
    let d = fatness(&JordanPolyline::new(seg, 0).unwrap(), 64, 1);
    outcome(
        (r.tau_estimate - 0.25).abs() <= 0.02 && (r.tau_estimate - oracle).abs() <= 0.02 && d.degenerate && d.tau_estimate == 0.0,
        format!("disk τ {:.4} (grid oracle {oracle:.4}); segment τ {} degenerate {}", r.tau_estimate, d.tau_estimate, d.degenerate),
    )
}

fn uniformizer() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    let budget = Duration::from_secs(300);

    // (a)
    let t = Instant::now();
    let disks = Truncation::new(vec![
        JordanPolyline::circle(c(-2.0, 0.0), 1.0, 256).unwrap(),
        JordanPolyline::circle(c(1.5, 0.5), 0.5, 256).unwrap(),
    ])
    .unwrap();
    let (_, _, h) = koebe_uniformize(&disks, 1e-10, 1).unwrap();
    let a = h.len() == 1 && h[0] < 1e-10 && t.elapsed() < budget;
    ok &= a;
    notes.push(format!("(a) {:.1e}", h[0]));

    // (b) and (c)
    let t = Instant::now();
    let e1 = JordanPolyline::ellipse(c(-1.3, 0.0), 1.0, 0.5, 400).unwrap();
    let e2 = JordanPolyline::ellipse(c(1.3, 0.3), 1.0, 0.5, 400).unwrap();
    let ellipses = Truncation::new(vec![e1.clone(), e2.clone()]).unwrap();
    let (dom, _, h) = koebe_uniformize(&ellipses, 1e-3, 50).unwrap();
    let b1 = *h.last().unwrap() < 1e-3 && h.len() <= 50 && t.elapsed() < budget;
    let t = Instant::now();
    let squares = Truncation::new(
        [c(0.0, 0.0), c(2.0, 0.0), c(1.0, 2.0)]
            .iter()
            .map(|&z| JordanPolyline::square(z, 1.0, 256).unwrap())
            .collect(),
    )
    .unwrap();
    let (sq_dom, _, hs) = koebe_uniformize(&squares, 1e-3, 50).unwrap();
    let b2 = *hs.last().unwrap() < 1e-3 && hs.len() <= 50 && t.elapsed() < budget;
    ok &= b1 && b2;
    notes.push(format!("(b) ellipses {:.1e} in {} rounds, squares {:.1e} in {} rounds", h.last().unwrap(), h.len(), hs.last().unwrap(), hs.len()));

    let t = Instant::now();
    let before = complement_modulus(&e1, &e2, DEFAULT_MODULUS_GRID).unwrap();
    let after = two_disk_modulus(&dom.circles[0], &dom.circles[1]).unwrap();
    let rel = (after - before).abs() / before;
    ok &= rel < 0.02 && t.elapsed() < budget;
    notes.push(format!("(c) modulus {before:.5} -> {after:.5}, rel {rel:.1e}"));

    // (d)
    let t = Instant::now();
    let again = sq_dom.to_truncation(256).unwrap();
    let (_, _, hd) = koebe_uniformize(&again, 1e-3, 50).unwrap();
    ok &= hd.len() == 1 && t.elapsed() < budget;
    notes.push(format!("(d) {} round(s)", hd.len()));
    outcome(ok, notes.join("; "))
}

fn end_to_end() -> Outcome {
    let mut cfg = RunConfig::new(corpus_cubic(), 5);
    cfg.truncation_cap = 12;
    let a = run_pipeline(&cfg).unwrap();
    let b = run_pipeline(&cfg).unwrap();
    let (ja, jb) = (a.to_json(), b.to_json());
    let Some(u) = a.uniformization.value() else {
        return outcome(false, format!("uniformization section: {:?}", a.uniformization));
    };
    let worst = u.residuals.iter().copied().fold(0.0, f64::max);
    let monotone = u.history.windows(2).all(|w| w[1] <= w[0]);
    outcome(
        worst < 1e-3 && monotone && ja == jb && u.domain.circles.len() == 12,
        format!(
            "{} circles, {} points, max residual {worst:.2e}, history {:?}, identical {}",
            u.domain.circles.len(),
            u.domain.point_components.len(),
            u.history,
            ja == jb
        ),
    )
}

fn similarity_invariance() -> Outcome {
    let mut runner = TestRunner::new(Config { cases: 1000, failure_persistence: None, ..Config::default() });
    let strategy = (
        prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 2..40),
        (0.1f64..10.0, -PI..PI),
        (-10.0f64..10.0, -10.0f64..10.0),
        any::<prop::sample::Index>(),
        any::<prop::sample::Index>(),
    );
    let worst = std::cell::Cell::new(0.0f64);
    let result = runner.run(&strategy, |(pts, (s, th), (bx, by), i, j)| {
        let k: Vec<Complex64> = pts.iter().map(|&(x, y)| c(x, y)).collect();
        let (i, j) = (i.index(k.len()), j.index(k.len()));
        prop_assume!(i != j && (k[i] - k[j]).norm() > 1e-6);
        let a = Complex64::from_polar(s, th);
        let b = c(bx, by);
        let p0: Vec<PlanePoint> = k.iter().map(|&z| PlanePoint::Finite(z)).collect();
        let p1: Vec<PlanePoint> = k.iter().map(|&z| PlanePoint::Finite(a * z + b)).collect();
        let t0 = turning(&p0, p0[i], p0[j]).unwrap();
        let t1 = turning(&p1, p1[i], p1[j]).unwrap();
        let rel = (t1 - t0).abs() / t0;
        worst.set(worst.get().max(rel));
        prop_assert!(rel < 1e-12, "relative error {rel:e}");
        Ok(())
    });
    let detail = match &result {
        Ok(()) => format!("1000 cases, worst relative error {:.1e}", worst.get()),
        Err(e) => format!("{e}"),
    };
    outcome(result.is_ok(), detail)
}

fn main() {
    let start = Instant::now();
    let t = Instant::now();
    let cubic6 = forest(&corpus_cubic(), 6);
    let build_cubic = t.elapsed();

    let mut failed = BTreeSet::new();
    let mut report = |id: u32, name: &str, run: &dyn Fn() -> Outcome| {
        let t = Instant::now();
        let o = run();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("[{tag}] {id}. {name} ({:.1}s): {}", t.elapsed().as_secs_f64(), o.detail);
        if !o.pass {
            failed.insert(id);
        }
    };
    report(1, "trichotomy", &|| trichotomy(&cubic6, build_cubic));
    report(2, "degree laws", &|| degree_laws(&cubic6));
    report(3, "turning metrology", &turning_metrology);
    report(4, "turning uniformity", &|| turning_uniformity(&cubic6));
    report(5, "fatness", &fatness_check);
    report(6, "uniformizer", &uniformizer);
    report(7, "end to end", &end_to_end);
    report(8, "similarity invariance", &similarity_invariance);

    let known: BTreeSet<u32> = KNOWN_RED.iter().copied().collect();
    println!("acceptance finished in {:.1}s; failing {:?}, known red {:?}", start.elapsed().as_secs_f64(), failed, known);
    if failed != known {
        eprintln!("unexpected acceptance outcome");
        std::process::exit(1);
    }
}
