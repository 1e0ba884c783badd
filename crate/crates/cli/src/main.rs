use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use koebe_fatou::corpus::corpus;
use koebe_fatou::pipeline::{run_stages, Outputs, PipelineReport, PipelineRun, RunConfig, Section, Stage};
use koebe_fatou::render;
use koebe_fatou::search::{search_mixed_cubic, CubicGrid};

/// Puzzle partitions, curve metrology and circle-domain uniformization for
/// attracting basins of rational maps.
#[derive(Parser, Debug)]
#[command(name = "koebe-fatou", version)]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Corpus map to use when no config is given (z^2, z^2-1, z^2+5, z^3-3z, mixed_cubic).
    #[arg(long, global = true)]
    map: Option<String>,
    #[arg(long, global = true)]
    depth: Option<usize>,
    /// Uniformization tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file, or directory for `render`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Truncation cap.
    #[arg(long, global = true)]
    cap: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Critical orbit verdicts.
    Classify,
    /// Forest statistics and audit.
    Puzzle,
    /// Turning constants of non-shrinking end boundaries.
    Turning,
    /// Fatness of non-shrinking end pieces.
    Fatness,
    /// chain_degree table (CSV).
    Degrees,
    /// Circle domain of the truncation.
    Uniformize,
    /// Full report.
    Pipeline,
    /// Mixed-cubic parameter search over the default grid.
    Search,
    /// Report, SVG and CSV files into the --out directory.
    Render,
}

const DEFAULT_MAP: &str = "mixed_cubic";
const DEFAULT_DEPTH: usize = 5;

fn load_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            if cli.map.is_some() {
                bail!("--map and --config are exclusive");
            }
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str::<RunConfig>(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => {
            let name = cli.map.as_deref().unwrap_or(DEFAULT_MAP);
            let (_, f) = corpus()?
                .into_iter()
                .find(|(n, _)| *n == name)
                .with_context(|| format!("unknown corpus map {name:?}"))?;
            RunConfig::new(f, DEFAULT_DEPTH)
        }
    };
    if let Some(d) = cli.depth {
        cfg.depth = d;
        cfg.truncation_depth = cfg.truncation_depth.map(|t| t.min(d));
    }
    if let Some(t) = cli.tol {
        cfg.tolerances.uniformize = t;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(c) = cli.cap {
        cfg.truncation_cap = c;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn stage_of(cmd: Command) -> Option<Stage> {
    Some(match cmd {
        Command::Classify => Stage::Classify,
        Command::Puzzle => Stage::Puzzle,
        Command::Turning => Stage::Turning,
        Command::Fatness => Stage::Fatness,
        Command::Degrees => Stage::Degrees,
        Command::Uniformize => Stage::Uniformize,
        Command::Pipeline | Command::Search | Command::Render => return None,
    })
}

fn emit(out: Option<&Path>, body: &str) -> anyhow::Result<()> {
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(p, body).with_context(|| format!("writing {}", p.display()))
        }
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

fn section_json<T: serde::Serialize>(s: &Section<T>) -> String {
    serde_json::to_string_pretty(s).expect("section serializes") + "\n"
}

/// Exit status for a single-stage command: only that stage and its
/// prerequisites count.
fn stage_exit(report: &PipelineReport, s: &Section<impl Sized>) -> u8 {
    if report.classification.is_failed() || report.forest_stats.is_failed() || s.is_failed() {
        3
    } else if !report.violations.is_empty() {
        2
    } else {
        0
    }
}

fn run(cli: &Cli) -> anyhow::Result<u8> {
    let cfg = load_config(cli)?;
    let out = cli.out.as_deref();
    if cli.command == Command::Search {
        let hits = search_mixed_cubic(&CubicGrid::default(), cfg.budgets.orbit)?;
        if hits.is_empty() {
            eprintln!("search: no mixed cubic on the grid");
        }
        emit(out, &(serde_json::to_string_pretty(&hits)? + "\n"))?;
        return Ok(0);
    }
    let wanted: BTreeSet<Stage> = match stage_of(cli.command) {
        Some(s) => [s].into(),
        None => Stage::ALL.into_iter().collect(),
    };
    let run: PipelineRun = run_stages(&cfg, &wanted, &BTreeSet::new())?;
    let r = &run.report;
    let code = match cli.command {
        Command::Classify => {
            emit(out, &section_json(&r.classification))?;
            if r.classification.is_failed() { 3 } else { 0 }
        }
        Command::Puzzle => {
            match (&run.forest, out) {
                (Some(f), Some(_)) => emit(out, &(serde_json::to_string(&f.dump_json())? + "\n"))?,
                _ => emit(None, &section_json(&r.forest_stats))?,
            }
            stage_exit(r, &r.forest_stats)
        }
        Command::Turning => {
            emit(out, &section_json(&r.turning))?;
            stage_exit(r, &r.turning)
        }
        Command::Fatness => {
            emit(out, &section_json(&r.fatness))?;
            stage_exit(r, &r.fatness)
        }
        Command::Degrees => {
            match r.degree_tables.value() {
                Some(t) => emit(out, &render::degree_csv(t))?,
                None => emit(out, &section_json(&r.degree_tables))?,
            }
            stage_exit(r, &r.degree_tables)
        }
        Command::Uniformize => {
            emit(out, &section_json(&r.uniformization))?;
            stage_exit(r, &r.uniformization)
        }
        Command::Pipeline => {
            emit(out, &(r.to_json() + "\n"))?;
            render::write_outputs(&run, &cfg.outputs)?;
            r.exit_code() as u8
        }
        Command::Render => {
            let Some(dir) = out else {
                bail!("render needs --out <directory>");
            };
            for p in render::write_outputs(&run, &Outputs::in_dir(dir))? {
                eprintln!("wrote {}", p.display());
            }
            r.exit_code() as u8
        }
        Command::Search => unreachable!(),
    };
    Ok(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}
