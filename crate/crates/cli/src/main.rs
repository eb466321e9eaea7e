use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use heapfix_core::isl::{detect_bugs, summarize, AnalysisConfig};
use heapfix_core::lang::{apply_patch, parse_with_spans, pretty_print, Program, SpanMap};
use heapfix_core::repair::{repair, RepairConfig, RepairRun};
use heapfix_core::report::{analysis_report, repair_report};

#[derive(Parser)]
#[command(name = "heapfix", version, about = "Find and repair memory-safety bugs in mini-C programs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Report bugs and per-function footprints as JSON.
    Analyze {
        file: PathBuf,
        #[arg(long, default_value_t = 2)]
        unroll: usize,
    },
    /// Synthesise, cluster and validate patches for every bug.
    Repair(RepairArgs),
}

#[derive(clap::Args)]
struct RepairArgs {
    file: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Wall-clock seconds per bug.
    #[arg(long, default_value_t = 60.0)]
    budget_s: f64,
    #[arg(long, default_value_t = 2000)]
    max_iters: usize,
    #[arg(long, default_value_t = 6)]
    height: usize,
    #[arg(long, default_value_t = 2)]
    unroll: usize,
    #[arg(long, default_value_t = 2)]
    top_locs: usize,
    /// Keep the grammar uniform (no learning).
    #[arg(long)]
    uniform: bool,
    /// Try other members when a representative fails validation.
    #[arg(long)]
    member_fallback: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write per-iteration records as JSON lines.
    #[arg(long)]
    emit_stats: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Write a copy of the input with the best patch of each bug applied.
    #[arg(long)]
    apply_best: bool,
}

fn load(file: &Path) -> Result<(Program, SpanMap)> {
    let src = fs::read_to_string(file).with_context(|| format!("reading {}", file.display()))?;
    parse_with_spans(&src).with_context(|| format!("parsing {}", file.display()))
}

fn analyze(file: &Path, unroll: usize) -> Result<ExitCode> {
    let (program, spans) = load(file)?;
    let cfg = AnalysisConfig { unroll, ..AnalysisConfig::default() };
    let bugs = detect_bugs(&program, &cfg)?;
    let footprints =
        program.functions.iter().map(|f| summarize(&program, &f.name, &cfg)).collect::<Result<Vec<_>, _>>()?;
    let text = serde_json::to_string_pretty(&analysis_report(&bugs, footprints, &spans))?;
    println!("{text}");
    Ok(ExitCode::SUCCESS)
}

fn write_stats(path: &Path, run: &RepairRun) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for s in &run.sessions {
        for rec in &s.stats {
            serde_json::to_writer(&mut out, rec)?;
            out.write_all(b"\n")?;
        }
    }
    out.flush()?;
    Ok(())
}

fn apply_best(file: &Path, program: &Program, run: &RepairRun) -> Result<PathBuf> {
    let mut patched = program.clone();
    let mut touched = Vec::new();
    for s in &run.sessions {
        let Some(best) = s.best_patch() else { continue };
        // ordinals of a function shift once it is patched
        if touched.contains(&best.location().function) {
            eprintln!("skipping second patch for `{}`", best.location().function);
            continue;
        }
        patched = apply_patch(&patched, best)?.0;
        touched.push(best.location().function.clone());
    }
    let stem = file.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "program".into());
    let target = file.with_file_name(format!("{stem}.patched.mc"));
    fs::write(&target, pretty_print(&patched)).with_context(|| format!("writing {}", target.display()))?;
    Ok(target)
}

fn run_repair(a: &RepairArgs) -> Result<ExitCode> {
    let (program, spans) = load(&a.file)?;
    let cfg = RepairConfig {
        seed: a.seed,
        budget_s: a.budget_s,
        max_iters: a.max_iters,
        height: a.height,
        unroll: a.unroll,
        top_locs: a.top_locs,
        uniform: a.uniform,
        member_fallback: a.member_fallback,
        jobs: a.jobs.max(1),
        ..RepairConfig::default()
    };
    let run = repair(&program, &cfg)?;
    let text = serde_json::to_string_pretty(&repair_report(&run, &spans))?;
    match &a.out {
        Some(path) => fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))?,
        None => println!("{text}"),
    }
    if let Some(path) = &a.emit_stats {
        write_stats(path, &run)?;
    }
    if a.apply_best {
        let target = apply_best(&a.file, &program, &run)?;
        eprintln!("wrote {}", target.display());
    }
    Ok(if run.all_fixed() { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Analyze { file, unroll } => analyze(file, *unroll),
        Command::Repair(args) => run_repair(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
