//! SVG and CSV renderings of forests, circle domains and report tables.
//! Output bytes depend only on the input.

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;

use crate::error::Result;
use crate::geometry::{FatnessReport, TurningReport};
use crate::pipeline::{DegreeTable, Outputs, PipelineReport, PipelineRun};
use crate::puzzle::PuzzleForest;
use crate::uniformize::CircleDomain;

const SIZE: f64 = 800.0;
const PALETTE: [&str; 6] = ["#1b6ca8", "#d1495b", "#2e933c", "#8e5ea2", "#e08e0b", "#444444"];

/// Maps a bounding box onto a square canvas with y pointing up.
struct Frame {
    lo: Complex64,
    scale: f64,
}

impl Frame {
    fn fit(points: impl Iterator<Item = Complex64>) -> Frame {
        let (mut lo, mut hi) = (Complex64::new(f64::MAX, f64::MAX), Complex64::new(f64::MIN, f64::MIN));
        for z in points {
            lo = Complex64::new(lo.re.min(z.re), lo.im.min(z.im));
            hi = Complex64::new(hi.re.max(z.re), hi.im.max(z.im));
        }
        if lo.re > hi.re {
            lo = Complex64::new(-1.0, -1.0);
            hi = Complex64::new(1.0, 1.0);
        }
        let span = (hi.re - lo.re).max(hi.im - lo.im).max(1e-300) * 1.05;
        let mid = (lo + hi) / 2.0;
        Frame { lo: mid - Complex64::new(span, span) / 2.0, scale: SIZE / span }
    }

    fn xy(&self, z: Complex64) -> (f64, f64) {
        ((z.re - self.lo.re) * self.scale, SIZE - (z.im - self.lo.im) * self.scale)
    }
}

fn header() -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{SIZE}\" viewBox=\"0 0 {SIZE} {SIZE}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    )
}

fn polygon(out: &mut String, frame: &Frame, v: &[Complex64], stroke: &str, id: &str) {
    let pts: Vec<String> = v
        .iter()
        .map(|&z| {
            let (x, y) = frame.xy(z);
            format!("{x:.3},{y:.3}")
        })
        .collect();
    let _ = writeln!(
        out,
        "<polygon id=\"{id}\" points=\"{}\" fill=\"none\" stroke=\"{stroke}\" stroke-width=\"1\"/>",
        pts.join(" ")
    );
}

/// Piece boundaries at depths `0..=depth`, coloured by depth.
pub fn forest_svg(forest: &PuzzleForest, depth: usize) -> String {
    let depth = depth.min(forest.depth());
    // The depth-0 disk is usually far larger than the rest.
    let shown = if depth >= 1 { 1..=depth } else { 0..=0 };
    let frame = Frame::fit(shown.clone().flat_map(|d| forest.level(d)).flat_map(|p| p.boundary.vertices().iter().copied()));
    let mut out = header();
    for d in shown {
        for p in forest.level(d) {
            polygon(&mut out, &frame, p.boundary.vertices(), PALETTE[d % PALETTE.len()], &format!("p{}", p.id));
        }
    }
    out.push_str("</svg>\n");
    out
}

pub fn circle_domain_svg(domain: &CircleDomain) -> String {
    let extent = domain
        .circles
        .iter()
        .flat_map(|c| {
            let z = c.center_finite();
            [z - Complex64::new(c.radius, c.radius), z + Complex64::new(c.radius, c.radius)]
        })
        .chain(domain.point_components.iter().filter_map(|p| p.finite()));
    let frame = Frame::fit(extent);
    let mut out = header();
    for (i, c) in domain.circles.iter().enumerate() {
        let (x, y) = frame.xy(c.center_finite());
        let _ = writeln!(
            out,
            "<circle id=\"c{i}\" cx=\"{x:.3}\" cy=\"{y:.3}\" r=\"{:.3}\" fill=\"#dde8f0\" stroke=\"{}\" stroke-width=\"1\"/>",
            c.radius * frame.scale,
            PALETTE[0]
        );
    }
    for (i, z) in domain.point_components.iter().filter_map(|p| p.finite()).enumerate() {
        let (x, y) = frame.xy(z);
        let _ = writeln!(out, "<circle id=\"pt{i}\" cx=\"{x:.3}\" cy=\"{y:.3}\" r=\"1.5\" fill=\"{}\"/>", PALETTE[1]);
    }
    out.push_str("</svg>\n");
    out
}

fn opt(v: Option<usize>) -> String {
    v.map(|d| d.to_string()).unwrap_or_default()
}

/// One row per end, one column per p.
pub fn degree_csv(table: &DegreeTable) -> String {
    let mut out = String::from("end");
    for p in &table.p {
        let _ = write!(out, ",p{p}_n{}", table.n);
    }
    out.push('\n');
    for row in &table.rows {
        out.push_str(&row.end.to_string());
        for v in &row.values {
            out.push(',');
            out.push_str(&opt(*v));
        }
        out.push('\n');
    }
    out
}

pub fn turning_csv(rows: &[TurningReport]) -> String {
    let mut out = String::from("curve_id,K_estimate,sample_count,resolution\n");
    for r in rows {
        let _ = writeln!(out, "{},{:.12e},{},{:.6e}", r.curve_id, r.k_estimate, r.sample_count, r.resolution);
    }
    out
}

pub fn fatness_csv(rows: &[FatnessReport]) -> String {
    let mut out = String::from("component_id,tau_estimate,probe_count,degenerate,resolution\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{:.12e},{},{},{:.6e}",
            r.component_id, r.tau_estimate, r.probe_count, r.degenerate, r.resolution
        );
    }
    out
}

fn write(path: &Path, body: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, body)?;
    Ok(())
}

/// Writes every named output whose section exists. Returns the paths written.
pub fn write_outputs(run: &PipelineRun, o: &Outputs) -> Result<Vec<std::path::PathBuf>> {
    let report: &PipelineReport = &run.report;
    let mut written = Vec::new();
    let mut emit = |path: &Option<std::path::PathBuf>, body: Option<String>| -> Result<()> {
        if let (Some(p), Some(b)) = (path, body) {
            write(p, &b)?;
            written.push(p.clone());
        }
        Ok(())
    };
    emit(&o.report, Some(report.to_json()))?;
    emit(&o.forest_svg, run.forest.as_ref().map(|f| forest_svg(f, f.depth())))?;
    emit(&o.circles_svg, report.uniformization.value().map(|u| circle_domain_svg(&u.domain)))?;
    emit(&o.degrees_csv, report.degree_tables.value().map(degree_csv))?;
    emit(&o.turning_csv, report.turning.value().map(|t| turning_csv(t)))?;
    emit(&o.fatness_csv, report.fatness.value().map(|t| fatness_csv(t)))?;
    Ok(written)
}
