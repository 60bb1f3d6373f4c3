//! Command-line surface.
//!
//! Exit codes: 0 success, 1 validation failure, 2 numerical failure.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::certify::{self, ConditionReport};
use crate::config::{self, GainMode, ScenarioConfig};
use crate::digraph;
use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::simkit::{self, Prepared, Summary};
use crate::sysdecomp;

#[derive(Debug, Parser)]
#[command(
    name = "distobs",
    version,
    about = "Distributed observers over switching directed networks"
)]
pub struct Cli {
    /// Scenario document (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Seed for initial-estimate draws.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Directory for CSV and summary files.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Use raw arcs instead of the transformed graphs.
    #[arg(long, global = true)]
    pub no_transform: bool,
    /// Adaptive in-subgraph gains starting from `gains.initial`.
    #[arg(long, global = true)]
    pub adaptive: bool,
    /// Override ℘.
    #[arg(long, global = true, value_name = "X")]
    pub wp: Option<f64>,
    /// Override the horizon (s).
    #[arg(long, global = true, value_name = "S")]
    pub horizon: Option<f64>,
    /// Override the integration step (s).
    #[arg(long, global = true, value_name = "H")]
    pub step: Option<f64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Transformed graph and member set for one library graph and root.
    Transform {
        #[arg(long, default_value_t = 0)]
        graph: usize,
        #[arg(long, default_value_t = 0)]
        root: usize,
    },
    /// Observability decomposition, blocks and residuals.
    Decompose,
    /// Gain-condition certificate.
    Certify,
    /// Run the scenario and write CSV plus summary.
    Simulate,
    /// Run a shipped benchmark scenario.
    Bench {
        #[arg(value_enum)]
        which: Benchmark,
    },
    /// Check the switching assumptions and plant observability.
    Validate,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Benchmark {
    Power4,
    Power8,
}

/// Run with process stdout/stderr.
pub fn main(argv: &[String]) -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run(argv, &mut stdout.lock(), &mut stderr.lock())
}

/// Run with explicit output streams; returns the exit code.
pub fn run(argv: &[String], out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = if code == 0 {
                write!(out, "{e}")
            } else {
                write!(err, "{e}")
            };
            return code;
        }
    };
    match dispatch(&cli, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_validation() {
        1
    } else {
        2
    }
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Config {
        key: path.display().to_string(),
        message: e.to_string(),
    }
}

fn load(cli: &Cli) -> Result<ScenarioConfig> {
    let path = cli.config.as_ref().ok_or_else(|| Error::Config {
        key: "--config".into(),
        message: "a scenario document is required".into(),
    })?;
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    apply_overrides(config::parse_config(&text)?, cli)
}

fn apply_overrides(mut cfg: ScenarioConfig, cli: &Cli) -> Result<ScenarioConfig> {
    if cli.no_transform {
        cfg.simulation.transform = false;
    }
    if cli.adaptive {
        cfg.gains.adaptive = true;
        cfg.gains.mode = GainMode::Uniform;
    }
    if let Some(wp) = cli.wp {
        cfg.gains.wp = Some(wp);
    }
    if let Some(h) = cli.horizon {
        cfg.simulation.horizon = h;
    }
    if let Some(h) = cli.step {
        cfg.simulation.step = h;
    }
    // re-validate through the canonical text so overrides obey the same rules
    config::parse_config(&cfg.to_canonical()?)
}

fn out_dir(cli: &Cli) -> Result<PathBuf> {
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    Ok(dir)
}

fn json<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v).map_err(|e| Error::Numerical(format!("serialisation: {e}")))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn w(out: &mut dyn Write, text: std::fmt::Arguments) -> Result<()> {
    out.write_fmt(text).map_err(|e| Error::Numerical(format!("write: {e}")))
}

fn dispatch(cli: &Cli, out: &mut dyn Write) -> Result<i32> {
    match &cli.command {
        Command::Transform { graph, root } => transform_cmd(&load(cli)?, *graph, *root, out),
        Command::Decompose => decompose_cmd(&load(cli)?, out),
        Command::Certify => certify_cmd(cli, &load(cli)?, out),
        Command::Simulate => simulate_cmd(cli, &load(cli)?, out),
        Command::Bench { which } => {
            let text = match which {
                Benchmark::Power4 => config::POWER4,
                Benchmark::Power8 => config::POWER8,
            };
            let cfg = apply_overrides(config::parse_config(text)?, cli)?;
            simulate_cmd(cli, &cfg, out)
        }
        Command::Validate => validate_cmd(&load(cli)?, out),
    }
}

fn fmt_matrix(m: &Mat) -> String {
    m.row_iter()
        .map(|r| r.iter().map(|x| format!("{x:>12.6}")).collect::<Vec<_>>().join(" "))
        .collect::<Vec<_>>()
        .join("\n")
}

fn transform_cmd(cfg: &ScenarioConfig, graph: usize, root: usize, out: &mut dyn Write) -> Result<i32> {
    let lib = cfg.schedule.library();
    let g = lib.get(graph).ok_or_else(|| Error::Config {
        key: "--graph".into(),
        message: format!("library has {} graphs", lib.len()),
    })?;
    let tg = digraph::transform(g, root)?;
    w(out, format_args!("graph {graph}, root {root}\n"))?;
    w(out, format_args!("members: {:?}\n", tg.members))?;
    w(out, format_args!("non-members: {:?}\n", tg.non_members()))?;
    w(out, format_args!("transformed adjacency (row i = arcs into i):\n"))?;
    for row in tg.adj_t.adjacency() {
        let line: Vec<&str> = row.iter().map(|&b| if b { "1" } else { "0" }).collect();
        w(out, format_args!("  {}\n", line.join(" ")))?;
    }
    Ok(0)
}

#[derive(Serialize)]
struct DecomposeDoc {
    indices: Vec<usize>,
    t: Vec<Vec<f64>>,
    blocks_a: Vec<Vec<Vec<f64>>>,
    blocks_c: Vec<Vec<Vec<f64>>>,
    pure_block_output: bool,
    residuals: sysdecomp::ResidualReport,
}

fn rows(m: &Mat) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn decompose_cmd(cfg: &ScenarioConfig, out: &mut dyn Write) -> Result<i32> {
    let plant = cfg.plant()?;
    let d = sysdecomp::decompose(&plant)?;
    let res = sysdecomp::verify_decomposition(&plant, &d)?;
    w(out, format_args!("block sizes: {:?}\n", d.indices))?;
    w(out, format_args!("T =\n{}\n", fmt_matrix(&d.t_mat)))?;
    for i in 0..d.blocks() {
        w(
            out,
            format_args!(
                "A_{i}o =\n{}\nC_{i}o =\n{}\n",
                fmt_matrix(&d.blocks_a[i]),
                fmt_matrix(&d.blocks_c[i])
            ),
        )?;
    }
    w(
        out,
        format_args!(
            "residuals: upper block {:.3e}, output map {:.3e}, pass {}\n",
            res.upper_block, res.output_map, res.pass
        ),
    )?;
    let doc = DecomposeDoc {
        indices: d.indices.clone(),
        t: rows(&d.t_mat),
        blocks_a: d.blocks_a.iter().map(rows).collect(),
        blocks_c: d.blocks_c.iter().map(rows).collect(),
        pure_block_output: d.is_pure_block_output(),
        residuals: res.clone(),
    };
    w(out, format_args!("{}\n", json(&doc)?))?;
    Ok(if res.pass { 0 } else { 2 })
}

fn render_report(r: &ConditionReport, out: &mut dyn Write) -> Result<()> {
    w(
        out,
        format_args!(
            "℘ = {}  (lower bound for the dwell inequality: {:.4e})\n",
            r.wp, r.wp_lower_bound
        ),
    )?;
    w(
        out,
        format_args!(
            "{:>5} {:>12} {:>12} {:>12} {:>14} {:>14} {:>14} {:>6} {:>14} {:>6}\n",
            "block",
            "gamma_low",
            "xi1_bar",
            "xi2_bar",
            "gain_lhs",
            "gain_rhs",
            "gain_margin",
            "gain",
            "dwell_margin",
            "dwell"
        ),
    )?;
    for b in &r.blocks {
        let worst = b.dwell.iter().map(|c| c.margin).fold(f64::INFINITY, f64::min);
        w(
            out,
            format_args!(
                "{:>5} {:>12.4} {:>12.4e} {:>12.4e} {:>14.6e} {:>14.6e} {:>14.6e} {:>6} {:>14.6e} {:>6}\n",
                b.block,
                b.gamma_lower,
                b.xi1_bar,
                b.xi2_bar,
                b.gain_lhs,
                b.gain_rhs,
                b.gain_margin,
                if b.gain_pass { "pass" } else { "FAIL" },
                worst,
                if b.dwell_pass { "pass" } else { "FAIL" },
            ),
        )?;
    }
    w(
        out,
        format_args!(
            "gain_pass = {}\ndwell_pass = {}\npass = {}\n",
            r.gain_pass, r.dwell_pass, r.pass
        ),
    )
}

fn certify_cmd(cli: &Cli, cfg: &ScenarioConfig, out: &mut dyn Write) -> Result<i32> {
    let plant = cfg.plant()?;
    let dec = sysdecomp::decompose(&plant)?;
    let gains = sysdecomp::design_gains(&dec, cfg.spectra().as_deref())?;
    let n = dec.blocks();
    let wp = match cfg.gains.wp {
        Some(wp) => wp,
        None => {
            let choice = certify::choose_wp(&dec, &gains, &cfg.schedule)?;
            if !choice.feasible {
                w(
                    out,
                    format_args!("no ℘ satisfies the dwell inequality; using ℘ = {}\n", choice.wp),
                )?;
            }
            choice.wp
        }
    };
    let coupling = match cfg.gains.mode {
        GainMode::Uniform => Mat::from_element(n, n, cfg.gains.initial),
        GainMode::Table => {
            let t = cfg.gains.table.as_ref().expect("validated");
            Mat::from_fn(n, n, |i, k| t[i][k])
        }
        GainMode::Certified => certify::suggest_gains(&dec, &gains, &cfg.schedule, wp)?.table,
    };
    let report = certify::check_theorem1(&dec, &gains, &coupling, &cfg.schedule, wp)?;
    render_report(&report, out)?;
    if cli.out.is_some() {
        let dir = out_dir(cli)?;
        write_file(&dir.join("certificate.json"), &json(&report)?)?;
    }
    Ok(0)
}

#[derive(Serialize)]
struct RunDoc<'a> {
    name: Option<&'a str>,
    seed: u64,
    transform: bool,
    adaptive: bool,
    gamma: f64,
    gain_table: Vec<Vec<f64>>,
    wp: Option<f64>,
    step: f64,
    horizon: f64,
    summary: &'a Summary,
}

fn simulate_cmd(cli: &Cli, cfg: &ScenarioConfig, out: &mut dyn Write) -> Result<i32> {
    let scenario = cfg.to_scenario()?;
    let prepared = Prepared::new(scenario)?;
    let ts = prepared.run(cli.seed)?;
    let summary = simkit::metrics(&ts, cfg.simulation.threshold)?;
    let dir = out_dir(cli)?;
    let csv_path = dir.join(&cfg.output.csv);
    let file = fs::File::create(&csv_path).map_err(|e| io_err(&csv_path, e))?;
    ts.write_csv(std::io::BufWriter::new(file), cfg.csv_gains())?;
    let doc = RunDoc {
        name: cfg.name.as_deref(),
        seed: cli.seed,
        transform: cfg.simulation.transform,
        adaptive: cfg.gains.adaptive,
        gamma: cfg.gains.gamma,
        gain_table: rows(&prepared.coupling),
        wp: prepared.certified.as_ref().map(|c| c.wp),
        step: cfg.simulation.step,
        horizon: cfg.simulation.horizon,
        summary: &summary,
    };
    let text = json(&doc)?;
    write_file(&dir.join(&cfg.output.summary), &text)?;
    w(out, format_args!("{text}\n"))?;
    w(
        out,
        format_args!(
            "converged = {} (terminal/initial error {:.3e}); csv: {}\n",
            summary.converged,
            summary.reduction,
            csv_path.display()
        ),
    )?;
    Ok(0)
}

#[derive(Serialize)]
struct ValidateDoc {
    observability_rank: usize,
    states: usize,
    observable: bool,
    schedule: digraph::ValidationReport,
    pass: bool,
}

fn validate_cmd(cfg: &ScenarioConfig, out: &mut dyn Write) -> Result<i32> {
    let plant = cfg.plant()?;
    let rank = sysdecomp::observability_rank(&plant.c_stacked(), plant.a());
    let report = digraph::validate_assumptions(&cfg.schedule);
    let observable = rank == plant.n();
    let doc = ValidateDoc {
        observability_rank: rank,
        states: plant.n(),
        observable,
        pass: observable && report.pass,
        schedule: report,
    };
    w(out, format_args!("{}\n", json(&doc)?))?;
    let zeros = simkit::spectrum(plant.a()).iter().filter(|z| z.norm() < 1e-9).count();
    w(
        out,
        format_args!(
            "union strongly connected: {}\nmissing single-graph paths: {}\nzero eigenvalues of A: {zeros}\nspectral abscissa: {:.4e}\npass = {}\n",
            doc.schedule.union_strongly_connected,
            doc.schedule.missing_pairs.len(),
            linalg::spectral_abscissa(plant.a()),
            doc.pass
        ),
    )?;
    Ok(if doc.pass { 0 } else { 1 })
}
