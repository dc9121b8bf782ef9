//! `soqn`: stability checks, performance analysis, simulation and robot
//! fleet sizing for semi-open queueing networks.

mod failure;
mod format;
mod modelfile;

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use soqn::oracle::{oracle_metrics, solve_auto, DEFAULT_STATE_CAP};
use soqn::report::{analyze, PerformanceReport};
use soqn::rmfs::{w_in, RmfsParams, RmfsRecord, RmfsSizer, P1, P2, R};
use soqn::sim::{simulate, simulate_turnover, SimConfig, SimEstimate};
use soqn::soqn::is_stable;
use soqn::ValidatedModel;

use failure::{Failure, EXIT_INFEASIBLE, EXIT_OK, EXIT_UNSTABLE};
use format::{opt, parse_duration, sig12};
use modelfile::ModelFile;

const CSV_HEADER: [&str; 11] =
    ["n", "lambda_max", "lambda_lc", "w_ex", "l_ex", "to_task", "idle_p1", "idle_p2", "idle_r", "sim_w_ex", "sim_std"];

#[derive(Parser)]
#[command(name = "soqn", version, about = "Semi-open queueing network analysis and robot fleet sizing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Report the maximal stable arrival rate; exit 3 when unstable.
    Stability(Common),
    /// Throughputs, idle probabilities, inner means and the external queue.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Compare against the exact truncated Markov chain (small models only).
        #[arg(long)]
        oracle: bool,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Smallest stable fleet meeting the task turnover bound; exit 4 if none.
    MinRobots {
        #[command(flatten)]
        common: Common,
        /// Task turnover bound in seconds; `inf` accepts any stable fleet.
        #[arg(long)]
        to_max: Option<f64>,
        #[arg(long)]
        n_max: Option<usize>,
    },
    /// One CSV row per fleet size.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1)]
        n_from: usize,
        /// Defaults to `n_max` of the rmfs block.
        #[arg(long)]
        n_to: Option<usize>,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Discrete-event simulation of the backordering network.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, required = true)]
        seed: Option<u64>,
        #[arg(long, default_value = "30d")]
        horizon: String,
        #[arg(long, default_value_t = 10)]
        reps: usize,
    },
}

#[derive(Args)]
struct Common {
    /// JSON model file.
    model: PathBuf,
    /// Overrides `resources` of the model file.
    #[arg(long)]
    resources: Option<usize>,
    /// Relative tolerance of the arrival-rate adjustment.
    #[arg(long, default_value_t = soqn::soqn::DEFAULT_TOLERANCE)]
    tol: f64,
    /// Write output here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimArgs {
    /// Also run the simulator.
    #[arg(long, requires = "seed")]
    simulate: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Simulated time: `30d`, `12h`, `90m`, `3600s` or seconds.
    #[arg(long, default_value = "30d")]
    horizon: String,
    #[arg(long, default_value_t = 10)]
    reps: usize,
}

impl SimArgs {
    fn config(&self) -> Result<Option<SimConfig>, Failure> {
        if !self.simulate {
            return Ok(None);
        }
        let seed = self.seed.ok_or_else(|| Failure::input("--simulate requires --seed"))?;
        sim_config(&self.horizon, self.reps, seed).map(Some)
    }
}

fn sim_config(horizon: &str, reps: usize, seed: u64) -> Result<SimConfig, Failure> {
    let cfg = SimConfig::new(parse_duration(horizon).map_err(Failure::input)?, reps, seed);
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}

fn run(command: Command) -> Result<u8, Failure> {
    match command {
        Command::Stability(common) => cmd_stability(&common),
        Command::Analyze { common, oracle, sim } => cmd_analyze(&common, oracle, sim.config()?),
        Command::MinRobots { common, to_max, n_max } => cmd_min_robots(&common, to_max, n_max),
        Command::Sweep { common, n_from, n_to, sim } => cmd_sweep(&common, n_from, n_to, sim.config()?),
        Command::Simulate { common, seed, horizon, reps } => {
            let seed = seed.ok_or_else(|| Failure::input("--seed is required"))?;
            cmd_simulate(&common, sim_config(&horizon, reps, seed)?)
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| Failure::runtime(format!("{}: {e}", path.display()))),
        None => Ok(std::io::stdout().write_all(text.as_bytes())?),
    }
}

fn line(text: &mut String, key: &str, value: impl std::fmt::Display) {
    let _ = writeln!(text, "{key:<16}{value}");
}

fn load(common: &Common) -> Result<(ModelFile, ValidatedModel), Failure> {
    let file = ModelFile::read(&common.model)?;
    let model = file.network(common.resources)?;
    Ok((file, model))
}

fn require_rmfs(file: &ModelFile) -> Result<RmfsParams, Failure> {
    file.rmfs().cloned().ok_or_else(|| Failure::input("this command needs a model file with an rmfs block"))
}

fn cmd_stability(common: &Common) -> Result<u8, Failure> {
    let (_, model) = load(common)?;
    let verdict = is_stable(&model);
    let mut text = String::new();
    line(&mut text, "resources", model.resources);
    line(&mut text, "lambda_bo", sig12(model.arrival_rate));
    line(&mut text, "lambda_bo_max", sig12(verdict.lambda_bo_max));
    line(&mut text, "margin", sig12(verdict.margin));
    line(&mut text, "verdict", if verdict.stable { "stable" } else { "unstable" });
    emit(common.out.as_deref(), &text)?;
    Ok(if verdict.stable { EXIT_OK } else { EXIT_UNSTABLE })
}

fn node_name(model: &ValidatedModel, j: usize) -> String {
    if j == 0 {
        return "pool".into();
    }
    let name = &model.nodes[j - 1].name;
    if name.is_empty() {
        j.to_string()
    } else {
        name.clone()
    }
}

fn write_report(text: &mut String, model: &ValidatedModel, report: &PerformanceReport) {
    if let Some(v) = &report.stability {
        line(text, "lambda_bo", sig12(report.lambda_bo));
        line(text, "lambda_bo_max", sig12(v.lambda_bo_max));
    }
    line(text, "lambda_lc", opt(report.lambda_lc));
    line(text, "l_ex", sig12(report.l_ex));
    line(text, "w_ex", sig12(report.w_ex));
    line(text, "external", if report.exact_external { "exact" } else { "approximate" });
    let _ =
        writeln!(text, "\n{:<8}{:>12}{:>10}{:>14}{:>14}", "node", "throughput", "idle", "queue_length", "waiting_time");
    for j in 0..=model.num_inner() {
        let idle = report.idle[j].map(|p| format!("{p:.4}")).unwrap_or_else(|| "-".into());
        let _ = writeln!(
            text,
            "{:<8}{:>12.4}{:>10}{:>14.4}{:>14.4}",
            node_name(model, j),
            report.throughputs[j],
            idle,
            report.queue_lengths[j],
            report.waiting_times[j]
        );
    }
}

fn write_oracle(text: &mut String, model: &ValidatedModel, report: &PerformanceReport) -> Result<(), Failure> {
    let (gen, pi) = solve_auto(model, 1e-12, DEFAULT_STATE_CAP)?;
    let exact = oracle_metrics(&gen, &pi);
    let max_delta = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let idle_delta =
        (1..=model.num_inner()).filter_map(|j| Some((report.idle[j]? - exact.idle[j]?).abs())).fold(0.0, f64::max);
    let _ = writeln!(text, "\noracle");
    line(text, "states", gen.len());
    line(text, "truncation", gen.truncation);
    line(text, "l_ex", sig12(exact.l_ex));
    line(text, "w_ex", sig12(exact.w_ex));
    line(text, "d_throughput", sig12(max_delta(&report.throughputs, &exact.throughputs)));
    line(text, "d_idle", sig12(idle_delta));
    line(text, "d_l_ex", sig12((report.l_ex - exact.l_ex).abs()));
    Ok(())
}

fn run_simulation(model: &ValidatedModel, rmfs: bool, cfg: &SimConfig) -> Result<SimEstimate, Failure> {
    let estimate = if rmfs { simulate_turnover(model, cfg, &[P1, P2], &[R])? } else { simulate(model, cfg)? };
    Ok(estimate)
}

fn write_simulation(text: &mut String, model: &ValidatedModel, cfg: &SimConfig, est: &SimEstimate) {
    let pm = |s: &soqn::sim::Summary| format!("{} ± {}", sig12(s.mean), sig12(s.std));
    let _ = writeln!(text, "\nsimulation");
    line(text, "horizon", sig12(cfg.horizon));
    line(text, "warmup", sig12(cfg.warmup));
    line(text, "replications", cfg.replications);
    line(text, "seed", cfg.seed);
    line(text, "l_ex", pm(&est.l_ex));
    line(text, "w_ex", pm(&est.w_ex));
    if let Some(t) = &est.turnover {
        line(text, "to_task", pm(&t.to_task));
        line(text, "picker_wait", pm(&t.picker_wait));
        line(text, "replenish_wait", pm(&t.replenisher_wait));
    }
    let _ = writeln!(text, "\n{:<8}{:>12}{:>10}{:>14}", "node", "throughput", "idle", "queue_length");
    for j in 0..=model.num_inner() {
        let _ = writeln!(
            text,
            "{:<8}{:>12.4}{:>10.4}{:>14.4}",
            node_name(model, j),
            est.throughputs[j].mean,
            est.idle[j].mean,
            est.queue_lengths[j].mean
        );
    }
}

fn cmd_analyze(common: &Common, oracle: bool, sim: Option<SimConfig>) -> Result<u8, Failure> {
    let (file, model) = load(common)?;
    let report = analyze(&model, common.tol)?;
    let mut text = String::new();
    write_report(&mut text, &model, &report);
    if file.rmfs().is_some() {
        let lambda_lc = report.lambda_lc.unwrap_or(model.arrival_rate);
        let inner = w_in(&model, lambda_lc)?;
        let _ = writeln!(text);
        line(&mut text, "w_in", sig12(inner));
        line(&mut text, "to_task", sig12(report.w_ex + inner));
    }
    if oracle {
        write_oracle(&mut text, &model, &report)?;
    }
    if let Some(cfg) = sim {
        let est = run_simulation(&model, file.rmfs().is_some(), &cfg)?;
        write_simulation(&mut text, &model, &cfg, &est);
    }
    emit(common.out.as_deref(), &text)?;
    Ok(EXIT_OK)
}

fn cmd_simulate(common: &Common, cfg: SimConfig) -> Result<u8, Failure> {
    let (file, model) = load(common)?;
    let est = run_simulation(&model, file.rmfs().is_some(), &cfg)?;
    let mut text = String::new();
    write_simulation(&mut text, &model, &cfg, &est);
    emit(common.out.as_deref(), &text)?;
    Ok(EXIT_OK)
}

fn describe_set(set: &[usize]) -> String {
    match (set.first(), set.last()) {
        (None, _) | (_, None) => "empty".into(),
        (Some(a), Some(b)) if b - a + 1 == set.len() => format!("{a}..={b} ({} sizes)", set.len()),
        _ => format!("{} sizes from {} to {}", set.len(), set[0], set[set.len() - 1]),
    }
}

fn cmd_min_robots(common: &Common, to_max: Option<f64>, n_max: Option<usize>) -> Result<u8, Failure> {
    let file = ModelFile::read(&common.model)?;
    let mut params = require_rmfs(&file)?;
    if let Some(bound) = to_max {
        params.to_task_max = bound.is_finite().then_some(bound);
        if bound.is_nan() || bound < 0.0 {
            return Err(Failure::input(format!("--to-max must be non-negative, got {bound}")));
        }
    }
    if let Some(n) = n_max {
        params.n_max = n;
    }
    let sizer = RmfsSizer::new(&params, common.tol)?;
    let stable = sizer.stable_set();
    let report = sizer.minimal_robots(&stable);
    let mut text = String::new();
    line(&mut text, "lambda_bo", sig12(params.task_rate()));
    line(&mut text, "n_max", params.n_max);
    line(&mut text, "stable_set", describe_set(&stable));
    line(&mut text, "to_task_max", params.to_task_max.map_or("inf".into(), sig12));
    let _ = writeln!(
        text,
        "\n{:>5}{:>16}{:>16}{:>16}{:>16}{:>16}",
        "n", "lambda_max", "lambda_lc", "w_ex", "w_in", "to_task"
    );
    for r in &report.records {
        let _ = writeln!(
            text,
            "{:>5}{:>16}{:>16}{:>16}{:>16}{:>16}",
            r.n,
            sig12(r.lambda_max),
            opt(r.lambda_lc),
            opt(r.w_ex),
            opt(r.w_in),
            opt(r.to_task)
        );
    }
    let _ = writeln!(text);
    match report.chosen_n {
        Some(n) => line(&mut text, "minimal_robots", n),
        None => line(&mut text, "minimal_robots", "no solution"),
    }
    emit(common.out.as_deref(), &text)?;
    Ok(if report.chosen_n.is_some() { EXIT_OK } else { EXIT_INFEASIBLE })
}

fn csv_row(record: &RmfsRecord, sim: Option<&SimEstimate>) -> Vec<String> {
    let w = sim.map(|s| &s.w_ex);
    vec![
        record.n.to_string(),
        sig12(record.lambda_max),
        opt(record.lambda_lc),
        opt(record.w_ex),
        opt(record.l_ex),
        opt(record.to_task),
        opt(record.idle_p1),
        opt(record.idle_p2),
        opt(record.idle_r),
        opt(w.map(|s| s.mean)),
        opt(w.map(|s| s.std)),
    ]
}

fn cmd_sweep(common: &Common, n_from: usize, n_to: Option<usize>, sim: Option<SimConfig>) -> Result<u8, Failure> {
    let file = ModelFile::read(&common.model)?;
    let mut params = require_rmfs(&file)?;
    let n_to = n_to.unwrap_or(params.n_max);
    params.n_max = params.n_max.max(n_to).max(1);
    let sizer = RmfsSizer::new(&params, common.tol)?;
    let records = sizer.sweep(n_from.max(1)..=n_to);
    let mut writer = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    writer.write_record(CSV_HEADER)?;
    for record in &records {
        let estimate = match &sim {
            Some(cfg) if record.to_task.is_some() => {
                let model = file.network(Some(record.n))?;
                Some(simulate(&model, cfg)?)
            }
            _ => None,
        };
        writer.write_record(csv_row(record, estimate.as_ref()))?;
    }
    let bytes = writer.into_inner().map_err(|e| Failure::runtime(e.to_string()))?;
    emit(common.out.as_deref(), &String::from_utf8_lossy(&bytes))?;
    let failed = records.iter().filter(|r| r.failure.is_some()).count();
    if failed > 0 {
        eprintln!("note: {failed} fleet sizes have no analysis (unstable or failed); their cells are empty");
    }
    Ok(EXIT_OK)
}
