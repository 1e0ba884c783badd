//! End-to-end runs: classify, build the puzzle, measure ends, uniformize a
//! truncation. Each stage records its own outcome so a late failure leaves
//! earlier sections intact.

use std::collections::BTreeSet;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{fatness, turning_constant_seeded, FatnessReport, TurningReport, DEFAULT_PAIR_BUDGET};
use crate::puzzle::{
    action_class, assemble_forest_with, audit_forest, build_invariant_disk, chain_degree, track_ends, End, EndClass,
    PuzzleForest, PuzzleOptions, DEFAULT_LIFT_TOL, DEFAULT_PIECE_CAP, DEFAULT_SHRINK_RATIO, STEPS_PER_DIAMETER,
};
use crate::ratmap::{CriticalOrbitReport, RationalMap, ROOT_TOL};
use crate::uniformize::{
    circularity, koebe_uniformize, truncate_domain, CircleDomain, Selection, DEFAULT_MAX_ROUNDS, DEFAULT_TOL,
    TRUNCATION_CAP,
};
use crate::curve::JordanPolyline;

pub const SCHEMA: &str = "koebe-fatou/1";
pub const MAX_DEPTH: usize = 12;
pub const DEFAULT_ORBIT_BUDGET: usize = 256;
pub const FATNESS_PROBES: usize = 32;
/// Chain depth n at which the degree table evaluates chain_degree.
pub const DEGREE_TABLE_N: usize = 2;
pub const DEGREE_TABLE_P: std::ops::RangeInclusive<usize> = 1..=4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    pub lift: f64,
    /// Largest vertex gap, relative to the curve diameter, used for turning.
    pub turning_resolution: f64,
    pub uniformize: f64,
    pub root: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            lift: DEFAULT_LIFT_TOL,
            turning_resolution: 1.0 / STEPS_PER_DIAMETER,
            uniformize: DEFAULT_TOL,
            root: ROOT_TOL,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Budgets {
    pub orbit: usize,
    pub pair_scan: usize,
    pub rounds: usize,
    pub pieces: usize,
}

impl Default for Budgets {
    fn default() -> Self {
        Budgets {
            orbit: DEFAULT_ORBIT_BUDGET,
            pair_scan: DEFAULT_PAIR_BUDGET,
            rounds: DEFAULT_MAX_ROUNDS,
            pieces: DEFAULT_PIECE_CAP,
        }
    }
}

/// Files written after a run; unset entries are skipped.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Outputs {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub forest_svg: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub circles_svg: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub degrees_csv: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub turning_csv: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fatness_csv: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub map: RationalMap,
    pub depth: usize,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub budgets: Budgets,
    #[serde(default)]
    pub seed: u64,
    /// Number of largest pieces kept as curves in the truncation.
    #[serde(default = "default_cap")]
    pub truncation_cap: usize,
    /// Depth of the truncation; defaults to `depth`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation_depth: Option<usize>,
    #[serde(default)]
    pub outputs: Outputs,
}

impl Outputs {
    /// Every output, under conventional names in `dir`.
    pub fn in_dir(dir: &std::path::Path) -> Outputs {
        Outputs {
            report: Some(dir.join("report.json")),
            forest_svg: Some(dir.join("forest.svg")),
            circles_svg: Some(dir.join("circles.svg")),
            degrees_csv: Some(dir.join("degrees.csv")),
            turning_csv: Some(dir.join("turning.csv")),
            fatness_csv: Some(dir.join("fatness.csv")),
        }
    }
}

fn default_cap() -> usize {
    TRUNCATION_CAP
}

impl RunConfig {
    pub fn new(map: RationalMap, depth: usize) -> Self {
        RunConfig {
            map,
            depth,
            tolerances: Tolerances::default(),
            budgets: Budgets::default(),
            seed: 0,
            truncation_cap: TRUNCATION_CAP,
            truncation_depth: None,
            outputs: Outputs::default(),
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.tolerances;
        for (name, v) in [
            ("lift", t.lift),
            ("turning_resolution", t.turning_resolution),
            ("uniformize", t.uniformize),
            ("root", t.root),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::domain(format!("tolerance {name} must be positive, got {v}")));
            }
        }
        if !(1..=MAX_DEPTH).contains(&self.depth) {
            return Err(Error::domain(format!("depth must lie in [1, {MAX_DEPTH}], got {}", self.depth)));
        }
        let b = &self.budgets;
        if b.orbit == 0 || b.pair_scan == 0 || b.rounds == 0 || b.pieces == 0 {
            return Err(Error::domain("budgets must be at least 1"));
        }
        if self.truncation_cap == 0 {
            return Err(Error::domain("truncation cap must be at least 1"));
        }
        if let Some(d) = self.truncation_depth {
            if d == 0 || d > self.depth {
                return Err(Error::domain(format!("truncation depth {d} outside [1, {}]", self.depth)));
            }
        }
        Ok(())
    }

    fn puzzle_options(&self) -> PuzzleOptions {
        PuzzleOptions {
            lift_tol: self.tolerances.lift,
            piece_cap: self.budgets.pieces,
            shrink_ratio: DEFAULT_SHRINK_RATIO,
            seed: self.seed,
        }
    }
}

/// Outcome of one stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Section<T> {
    Ok { value: T },
    Skipped { reason: String },
    Failed { error: String },
}

impl<T> Section<T> {
    pub fn value(&self) -> Option<&T> {
        match self {
            Section::Ok { value } => Some(value),
            _ => None,
        }
    }

    pub fn is_failed(&self) -> bool {
        matches!(self, Section::Failed { .. })
    }

    fn skipped(reason: impl Into<String>) -> Self {
        Section::Skipped { reason: reason.into() }
    }

    fn from_result(r: Result<T>) -> Self {
        match r {
            Ok(value) => Section::Ok { value },
            Err(e) => Section::Failed { error: e.to_string() },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestStats {
    pub depth: usize,
    pub radius: f64,
    pub level_counts: Vec<usize>,
    pub capped_depths: Vec<usize>,
    pub pairs_checked: usize,
    pub nesting_violations: usize,
    pub commutation_failures: usize,
    pub spacing_violations: usize,
    pub max_lift_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EndSummary {
    pub id: usize,
    pub leaf: usize,
    pub classification: EndClass,
    /// Classification by the f-action alone.
    pub action: EndClass,
    pub stable_degree: usize,
    pub meets_postcritical: bool,
    pub degrees: Vec<usize>,
    pub diameters: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegreeRow {
    pub end: usize,
    pub action: EndClass,
    /// chain_degree for each p of the table; null where the chain is too short.
    pub values: Vec<Option<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegreeTable {
    pub n: usize,
    pub p: Vec<usize>,
    pub rows: Vec<DegreeRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Uniformization {
    pub depth: usize,
    pub piece_ids: Vec<usize>,
    pub domain: CircleDomain,
    /// Circularity of each image curve before rounding to circles.
    pub residuals: Vec<f64>,
    pub history: Vec<f64>,
    pub derivative_at_infinity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub schema: String,
    pub config: RunConfig,
    pub classification: Section<Vec<CriticalOrbitReport>>,
    pub forest_stats: Section<ForestStats>,
    pub ends: Section<Vec<EndSummary>>,
    pub turning: Section<Vec<TurningReport>>,
    pub fatness: Section<Vec<FatnessReport>>,
    pub degree_tables: Section<DegreeTable>,
    pub uniformization: Section<Uniformization>,
    /// Invariant violations found along the way.
    pub violations: Vec<String>,
}

impl PipelineReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    fn sections_failed(&self) -> bool {
        self.classification.is_failed()
            || self.forest_stats.is_failed()
            || self.ends.is_failed()
            || self.turning.is_failed()
            || self.fatness.is_failed()
            || self.degree_tables.is_failed()
            || self.uniformization.is_failed()
    }

    /// 0 clean, 2 invariant violation, 3 stage failure.
    pub fn exit_code(&self) -> i32 {
        if self.sections_failed() {
            3
        } else if !self.violations.is_empty() {
            2
        } else {
            0
        }
    }
}

/// Pipeline stages, in order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Classify,
    Puzzle,
    Ends,
    Turning,
    Fatness,
    Degrees,
    Uniformize,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Classify,
        Stage::Puzzle,
        Stage::Ends,
        Stage::Turning,
        Stage::Fatness,
        Stage::Degrees,
        Stage::Uniformize,
    ];
}

/// A finished run: the report and, when the puzzle stage succeeded, the forest.
pub struct PipelineRun {
    pub report: PipelineReport,
    pub forest: Option<PuzzleForest>,
}

pub fn run_pipeline(cfg: &RunConfig) -> Result<PipelineReport> {
    Ok(run_pipeline_full(cfg, &BTreeSet::new())?.report)
}

/// Runs every stage; stages listed in `faults` fail artificially, which is
/// how stage isolation is tested.
pub fn run_pipeline_full(cfg: &RunConfig, faults: &BTreeSet<Stage>) -> Result<PipelineRun> {
    run_stages(cfg, &Stage::ALL.into_iter().collect(), faults)
}

/// Runs the `wanted` stages and whatever they depend on; the other sections
/// are marked as not requested.
pub fn run_stages(cfg: &RunConfig, wanted: &BTreeSet<Stage>, faults: &BTreeSet<Stage>) -> Result<PipelineRun> {
    cfg.validate()?;
    let fault = |s: Stage| -> Result<()> {
        if faults.contains(&s) {
            Err(Error::Inconsistency(format!("injected fault in stage {s:?}")))
        } else {
            Ok(())
        }
    };
    let needs_ends = [Stage::Ends, Stage::Turning, Stage::Fatness, Stage::Degrees]
        .iter()
        .any(|s| wanted.contains(s));
    let needs_forest = needs_ends || wanted.contains(&Stage::Puzzle) || wanted.contains(&Stage::Uniformize);
    let mut report = PipelineReport {
        schema: SCHEMA.into(),
        config: cfg.clone(),
        classification: Section::skipped(UNRUN),
        forest_stats: Section::skipped(UNRUN),
        ends: Section::skipped(UNRUN),
        turning: Section::skipped(UNRUN),
        fatness: Section::skipped(UNRUN),
        degree_tables: Section::skipped(UNRUN),
        uniformization: Section::skipped(UNRUN),
        violations: Vec::new(),
    };

    let reports = fault(Stage::Classify).and_then(|_| cfg.map.classify_postcritical(cfg.budgets.orbit, cfg.tolerances.root));
    report.classification = Section::from_result(reports);
    let Some(reports) = report.classification.value().cloned() else {
        skip_rest(&mut report, "classification failed");
        return Ok(PipelineRun { report, forest: None });
    };
    if let Some(bad) = reports.iter().find(|r| !r.is_decided()) {
        skip_rest(
            &mut report,
            &format!("critical orbit of {:?} is undecided; not geometrically finite within budget", bad.critical_point),
        );
        return Ok(PipelineRun { report, forest: None });
    }
    if !needs_forest {
        skip_rest(&mut report, NOT_REQUESTED);
        return Ok(PipelineRun { report, forest: None });
    }

    let forest = fault(Stage::Puzzle).and_then(|_| {
        let disk = build_invariant_disk(&cfg.map, &reports)?;
        assemble_forest_with(&cfg.map, &disk, cfg.depth, &cfg.puzzle_options())
    });
    let forest = match forest {
        Ok(f) => f,
        Err(e) => {
            report.forest_stats = Section::Failed { error: e.to_string() };
            skip_rest(&mut report, "puzzle stage failed");
            return Ok(PipelineRun { report, forest: None });
        }
    };
    let stats = forest_stats(&forest);
    if stats.nesting_violations > 0 {
        report.violations.push(format!("{} nesting violations", stats.nesting_violations));
    }
    if stats.commutation_failures > 0 {
        report.violations.push(format!("{} commutation failures", stats.commutation_failures));
    }
    if !(stats.max_lift_residual < cfg.tolerances.lift) {
        report.violations.push(format!("lift residual {:.3e} above tolerance", stats.max_lift_residual));
    }
    report.forest_stats = Section::Ok { value: stats };

    let ends = if !needs_ends {
        Err(Section::skipped(NOT_REQUESTED))
    } else if forest.depth() < 3 {
        Err(Section::skipped("end tracking needs depth at least 3"))
    } else {
        fault(Stage::Ends)
            .and_then(|_| track_ends(&forest, DEFAULT_SHRINK_RATIO))
            .map_err(|e| Section::Failed { error: e.to_string() })
    };
    report.ends = match &ends {
        Ok(ends) => Section::Ok { value: ends.iter().map(|e| end_summary(&forest, e)).collect() },
        Err(s) => s.clone(),
    };

    let measured = measured_pieces(&forest, ends.as_ref().ok().map(|v| v.as_slice()));
    report.turning = if wanted.contains(&Stage::Turning) {
        Section::from_result(fault(Stage::Turning).map(|_| turning_rows(&forest, &measured, cfg)))
    } else {
        Section::skipped(NOT_REQUESTED)
    };
    report.fatness = if wanted.contains(&Stage::Fatness) {
        Section::from_result(fault(Stage::Fatness).map(|_| fatness_rows(&forest, &measured, cfg)))
    } else {
        Section::skipped(NOT_REQUESTED)
    };
    report.degree_tables = match &ends {
        _ if !wanted.contains(&Stage::Degrees) => Section::skipped(NOT_REQUESTED),
        Ok(ends) => Section::from_result(fault(Stage::Degrees).and_then(|_| degree_table(&forest, ends))),
        Err(Section::Failed { .. }) => Section::skipped("end tracking failed"),
        Err(_) => Section::skipped("no ends tracked"),
    };

    report.uniformization = if wanted.contains(&Stage::Uniformize) {
        Section::from_result(fault(Stage::Uniformize).and_then(|_| uniformization(&forest, cfg)))
    } else {
        Section::skipped(NOT_REQUESTED)
    };
    if let Some(u) = report.uniformization.value() {
        let worst = u.residuals.iter().copied().fold(0.0, f64::max);
        if !(worst < cfg.tolerances.uniformize) {
            report.violations.push(format!("circularity residual {worst:.3e} above tolerance"));
        }
        if u.history.windows(2).any(|w| w[1] > w[0]) {
            report.violations.push("uniformization residual history is not monotone".into());
        }
    }
    Ok(PipelineRun { report, forest: Some(forest) })
}

const UNRUN: &str = "not run";
const NOT_REQUESTED: &str = "not requested";

fn skip_rest(report: &mut PipelineReport, reason: &str) {
    report.forest_stats.skip_if_unrun(reason);
    report.ends.skip_if_unrun(reason);
    report.turning.skip_if_unrun(reason);
    report.fatness.skip_if_unrun(reason);
    report.degree_tables.skip_if_unrun(reason);
    report.uniformization.skip_if_unrun(reason);
}

impl<T> Section<T> {
    fn skip_if_unrun(&mut self, why: &str) {
        if matches!(self, Section::Skipped { reason } if reason == UNRUN) {
            *self = Section::skipped(why);
        }
    }
}

fn forest_stats(forest: &PuzzleForest) -> ForestStats {
    let audit = audit_forest(forest);
    ForestStats {
        depth: forest.depth(),
        radius: forest.root.radius,
        level_counts: forest.levels.iter().map(Vec::len).collect(),
        capped_depths: forest.capped_depths.clone(),
        pairs_checked: audit.pairs_checked,
        nesting_violations: audit.nesting_violations.len(),
        commutation_failures: audit.commutation_failures.len(),
        spacing_violations: audit.spacing_violations.len(),
        max_lift_residual: audit.max_lift_residual,
    }
}

fn end_summary(forest: &PuzzleForest, e: &End) -> EndSummary {
    EndSummary {
        id: e.id,
        leaf: *e.chain.last().unwrap(),
        classification: e.classification,
        action: action_class(forest, e),
        stable_degree: e.stable_degree,
        meets_postcritical: e.meets_postcritical,
        degrees: e.degrees.clone(),
        diameters: e.diameters.clone(),
    }
}

/// Pieces of non-shrinking ends at the two deepest levels; without ends,
/// the deepest level.
fn measured_pieces(forest: &PuzzleForest, ends: Option<&[End]>) -> Vec<usize> {
    let top = forest.depth();
    let ids: BTreeSet<usize> = match ends {
        Some(ends) => ends
            .iter()
            .filter(|e| !e.is_shrinking())
            .flat_map(|e| e.chain[top.saturating_sub(1).max(1)..].iter().copied())
            .collect(),
        None => forest.levels[top].iter().copied().collect(),
    };
    ids.into_iter().collect()
}

/// A curve no coarser than `resolution` times its diameter.
pub fn at_resolution(curve: &JordanPolyline, resolution: f64) -> Result<JordanPolyline> {
    let diam = crate::geometry::diameter_of(curve.vertices());
    if curve.max_gap() <= resolution * diam {
        return Ok(curve.clone());
    }
    let n = (curve.perimeter() / (resolution * diam)).ceil() as usize;
    curve.resampled(n.max(curve.len()))
}

fn piece_label(forest: &PuzzleForest, id: usize) -> String {
    format!("piece{id}@depth{}", forest.pieces[id].depth)
}

fn turning_rows(forest: &PuzzleForest, ids: &[usize], cfg: &RunConfig) -> Vec<TurningReport> {
    ids.par_iter()
        .map(|&id| {
            let curve = &forest.pieces[id].boundary;
            let curve = at_resolution(curve, cfg.tolerances.turning_resolution).unwrap_or_else(|_| curve.clone());
            let mut r = turning_constant_seeded(&curve, cfg.budgets.pair_scan, cfg.seed ^ id as u64);
            r.curve_id = piece_label(forest, id);
            r
        })
        .collect()
}

fn fatness_rows(forest: &PuzzleForest, ids: &[usize], cfg: &RunConfig) -> Vec<FatnessReport> {
    ids.par_iter()
        .map(|&id| {
            let mut r = fatness(&forest.pieces[id].boundary, FATNESS_PROBES, cfg.seed ^ id as u64);
            r.component_id = piece_label(forest, id);
            r
        })
        .collect()
}

fn degree_table(forest: &PuzzleForest, ends: &[End]) -> Result<DegreeTable> {
    let p: Vec<usize> = DEGREE_TABLE_P.collect();
    let mut rows = Vec::new();
    for e in ends {
        let action = action_class(forest, e);
        if !matches!(action, EndClass::Periodic { .. } | EndClass::EventuallyPeriodic { .. }) {
            continue;
        }
        let values = p
            .iter()
            .map(|&p| match chain_degree(forest, e, p, DEGREE_TABLE_N) {
                Ok(d) => Ok(Some(d)),
                Err(Error::Domain(_)) => Ok(None),
                Err(e) => Err(e),
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(DegreeRow { end: e.id, action, values });
    }
    Ok(DegreeTable { n: DEGREE_TABLE_N, p, rows })
}

fn uniformization(forest: &PuzzleForest, cfg: &RunConfig) -> Result<Uniformization> {
    let depth = cfg.truncation_depth.unwrap_or(cfg.depth).min(forest.depth());
    let t = truncate_domain(forest, depth, &Selection::Largest(cfg.truncation_cap))?;
    let (domain, map, history) = koebe_uniformize(&t, cfg.tolerances.uniformize, cfg.budgets.rounds)?;
    let residuals = map
        .boundary
        .iter()
        .map(|b| circularity(&JordanPolyline::new(b.image.clone(), 0)?))
        .collect::<Result<Vec<f64>>>()?;
    Ok(Uniformization {
        depth,
        piece_ids: t.source.map(|s| s.piece_ids).unwrap_or_default(),
        domain,
        residuals,
        history,
        derivative_at_infinity: map.derivative_at_infinity,
    })
}
