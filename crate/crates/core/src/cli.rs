//! Command line surface: parse flags, load the run configuration, dispatch,
//! and leave a deterministic report plus data files in the output directory.
//!
//! Everything a command produces is first assembled in memory as a
//! [`RunOutput`]; files only appear once the run has finished. That makes
//! `--verify` cheap (re-run and compare the outputs byte for byte) and keeps
//! partial artifacts off disk when a run fails halfway.

use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::config::{parse_config, CommandConfig, MeasureConfig, MonsterVariant, RunConfig};
use crate::measure::{
    build_case2_semi, build_case3_radon, build_case4_measure, stationarity_residual_on,
    Case3Output, GridMeasure, MeasureError,
};
use crate::monster::{self, check_rank_lemmas, MonsterSeedSummary};
use crate::report::{self, Report, Series};
use crate::seed::trial_seed;
use crate::system::{validate_system, RandomSystem};
use crate::walk::{classify_system, estimate_phi_batch, ClassVerdict, PhiEstimate, SimParams};

pub const EXIT_OK: i32 = 0;
/// Internal failure: I/O, or a re-run under `--verify` that did not match.
pub const EXIT_INTERNAL: i32 = 1;
/// The module refused to certify its output; the reason is in the report.
pub const EXIT_REFUSED: i32 = 2;
/// The config or the flags are unusable as given.
pub const EXIT_CONFIG: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "rdsline",
    version,
    about = "Simulate and classify random dynamical systems on the line",
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: CliCommand,
}

#[derive(Debug, Subcommand)]
enum CliCommand {
    /// Validate the configured system without simulating.
    Check(CommonArgs),
    /// Estimate escape probabilities at the configured probe points.
    Phi(CommonArgs),
    /// Decide which of the four behavior classes the system falls in.
    Classify(CommonArgs),
    /// Construct a stationary measure and check it against the dynamics.
    Measure(CommonArgs),
    /// Run the rank-tower system with exact coefficient arithmetic.
    Monster(CommonArgs),
}

impl CliCommand {
    fn name(&self) -> &'static str {
        match self {
            CliCommand::Check(_) => "check",
            CliCommand::Phi(_) => "phi",
            CliCommand::Classify(_) => "classify",
            CliCommand::Measure(_) => "measure",
            CliCommand::Monster(_) => "monster",
        }
    }

    fn args(&self) -> &CommonArgs {
        match self {
            CliCommand::Check(a)
            | CliCommand::Phi(a)
            | CliCommand::Classify(a)
            | CliCommand::Measure(a)
            | CliCommand::Monster(a) => a,
        }
    }
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// Path to the JSON run configuration.
    #[arg(long, value_name = "FILE")]
    config: PathBuf,
    /// Master seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results never depend on this.
    #[arg(long, env = "RDSLINE_WORKERS")]
    workers: Option<usize>,
    /// Output directory for the report and data files.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Trials per estimate; only for commands that simulate trials.
    #[arg(long)]
    trials: Option<u64>,
    /// Steps per trajectory; only for commands that simulate trials.
    #[arg(long)]
    horizon: Option<u64>,
    /// Escape threshold; only for commands that simulate trials.
    #[arg(long, value_name = "M")]
    escape: Option<f64>,
    /// Measure window endpoints, low then high.
    #[arg(long, num_args = 2, value_names = ["A", "B"], allow_negative_numbers = true)]
    window: Option<Vec<f64>>,
    /// Also write SVG plots of the main tables.
    #[arg(long)]
    plot: bool,
    /// Re-run the command and fail unless the outputs match exactly.
    #[arg(long)]
    verify: bool,
}

#[derive(Debug)]
enum CliError {
    /// Bad input: malformed config, inapplicable flag, invalid parameters.
    Config(String),
    /// The tool itself failed: I/O, or nondeterminism caught by `--verify`.
    Fail(String),
}

/// Everything a command produces, before anything touches the filesystem.
#[derive(Debug, PartialEq)]
struct RunOutput {
    payload: Value,
    refusal: Option<String>,
    /// File name and exact bytes, written next to the report.
    artifacts: Vec<(String, Vec<u8>)>,
    summary: String,
}

/// Entry point for the binary; returns the process exit code.
pub fn run_cli() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(CliError::Config(msg)) => {
            eprintln!("rdsline: config error: {msg}");
            EXIT_CONFIG
        }
        Err(CliError::Fail(msg)) => {
            eprintln!("rdsline: {msg}");
            EXIT_INTERNAL
        }
    }
}

fn execute(cli: &Cli) -> Result<i32, CliError> {
    let args = cli.command.args();
    let config_text = fs::read_to_string(&args.config)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", args.config.display())))?;
    let mut cfg = parse_config(&config_text).map_err(|e| CliError::Config(e.to_string()))?;
    if cli.command.name() != cfg.command.name() {
        return Err(CliError::Config(format!(
            "the config describes a '{}' run but the command line says '{}'",
            cfg.command.name(),
            cli.command.name()
        )));
    }
    apply_overrides(&mut cfg, args)?;
    cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;

    let started = Instant::now();
    let run = run_command(&cfg, args.plot)?;
    let wall_time_ms = started.elapsed().as_millis() as u64;

    if args.verify {
        let second = run_command(&cfg, args.plot)?;
        if second != run {
            return Err(CliError::Fail(
                "verify: the re-run produced different output; this is a bug".into(),
            ));
        }
    }

    let mut rep = Report::new(cfg.command.name(), &config_text);
    rep.label = cfg.label.clone();
    rep.master_seed = cfg.master_seed;
    rep.workers = cfg.workers();
    rep.result = run.payload.clone();
    rep.wall_time_ms = wall_time_ms;
    if let Some(reason) = &run.refusal {
        rep.refuse(reason.clone());
    }

    let out_dir = cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    for (name, bytes) in &run.artifacts {
        report::atomic_write(&out_dir.join(name), bytes)
            .map_err(|e| CliError::Fail(format!("cannot write {name}: {e}")))?;
    }
    let report_path = report::write_report(&out_dir, &rep)
        .map_err(|e| CliError::Fail(format!("cannot write report: {e}")))?;

    println!("{}", run.summary);
    if args.verify {
        println!("verify: re-run matched");
    }
    println!("report: {}", report_path.display());
    Ok(if run.refusal.is_some() { EXIT_REFUSED } else { EXIT_OK })
}

/// Folds the flags into the parsed config. Flags that have no meaning for
/// the chosen command are rejected rather than silently dropped.
fn apply_overrides(cfg: &mut RunConfig, args: &CommonArgs) -> Result<(), CliError> {
    if let Some(seed) = args.seed {
        cfg.master_seed = seed;
    }
    if let Some(workers) = args.workers {
        cfg.workers = Some(workers);
    }
    if let Some(dir) = &args.out {
        cfg.out_dir = Some(dir.clone());
    }

    let window = match args.window.as_deref() {
        None => None,
        Some(&[a, b]) => Some((a, b)),
        Some(_) => unreachable!("clap enforces exactly two window values"),
    };
    let name = cfg.command.name();
    match &mut cfg.command {
        CommandConfig::Check => {
            reject_sim_flags(args, name)?;
            reject_window(window, name)?;
        }
        CommandConfig::Phi(p) => {
            merge_sim_flags(&mut p.sim, args);
            reject_window(window, name)?;
        }
        CommandConfig::Classify(c) => {
            merge_sim_flags(&mut c.sim, args);
            reject_window(window, name)?;
        }
        CommandConfig::Measure(m) => match m {
            MeasureConfig::Probability(pc) => {
                merge_sim_flags(&mut pc.sim, args);
                if let Some(w) = window {
                    pc.window = Some(w);
                }
            }
            MeasureConfig::SemiInfinite(sc) => {
                merge_sim_flags(&mut sc.sim, args);
                if let Some(w) = window {
                    sc.window = Some(w);
                }
            }
            MeasureConfig::Occupation(oc) => {
                merge_sim_flags(&mut oc.sim, args);
                if window.is_some() {
                    return Err(CliError::Config(
                        "--window does not apply to the occupation case; \
                         the stopping ladder fixes the support"
                            .into(),
                    ));
                }
            }
        },
        CommandConfig::Monster(_) => {
            reject_sim_flags(args, name)?;
            reject_window(window, name)?;
        }
    }
    Ok(())
}

fn merge_sim_flags(sim: &mut crate::config::SimConfig, args: &CommonArgs) {
    if let Some(t) = args.trials {
        sim.trials = Some(t);
    }
    if let Some(h) = args.horizon {
        sim.horizon = Some(h);
    }
    if let Some(m) = args.escape {
        sim.escape_threshold = Some(m);
    }
}

fn reject_sim_flags(args: &CommonArgs, command: &str) -> Result<(), CliError> {
    let set = [
        ("--trials", args.trials.is_some()),
        ("--horizon", args.horizon.is_some()),
        ("--escape", args.escape.is_some()),
    ];
    match set.iter().find(|(_, on)| *on) {
        Some((flag, _)) => Err(CliError::Config(format!(
            "{flag} does not apply to the {command} command"
        ))),
        None => Ok(()),
    }
}

fn reject_window(window: Option<(f64, f64)>, command: &str) -> Result<(), CliError> {
    if window.is_some() {
        return Err(CliError::Config(format!(
            "--window does not apply to the {command} command"
        )));
    }
    Ok(())
}

fn run_command(cfg: &RunConfig, plot: bool) -> Result<RunOutput, CliError> {
    match &cfg.command {
        CommandConfig::Check => run_check(cfg),
        CommandConfig::Phi(p) => run_phi(cfg, p, plot),
        CommandConfig::Classify(c) => run_classify(cfg, c),
        CommandConfig::Measure(m) => run_measure(cfg, m, plot),
        CommandConfig::Monster(m) => run_monster_cmd(cfg, m, plot),
    }
}

fn build_required_system(cfg: &RunConfig) -> Result<RandomSystem, CliError> {
    let sys = cfg.build_system().map_err(|e| CliError::Config(e.to_string()))?;
    sys.ok_or_else(|| CliError::Config("this command needs a system block".into()))
}

/// Simulation parameters as they land in the report. The worker count is
/// deliberately absent: it is recorded at the top level and the result
/// payload must be a function of (config, seed) alone.
fn sim_json(sim: &SimParams) -> Value {
    json!({
        "trials": sim.trials,
        "horizon": sim.horizon,
        "escape_threshold": sim.escape_threshold,
        "confine_fraction": sim.confine_fraction,
    })
}

fn run_check(cfg: &RunConfig) -> Result<RunOutput, CliError> {
    let sys = build_required_system(cfg)?;
    let sys_report = validate_system(&sys);
    let payload = json!({
        "system": sys.label(),
        "validation": report::system_report_json(&sys_report),
    });
    let (refusal, summary) = if sys_report.is_valid() {
        (None, format!("check: '{}' is a valid increasing system", sys.label()))
    } else {
        let reason =
            format!("system validation failed: {}", sys_report.violations.join("; "));
        (Some(reason.clone()), format!("check: refused; {reason}"))
    };
    Ok(RunOutput { payload, refusal, artifacts: Vec::new(), summary })
}

fn run_phi(cfg: &RunConfig, p: &crate::config::PhiConfig, plot: bool) -> Result<RunOutput, CliError> {
    let sys = build_required_system(cfg)?;
    let sim = p.sim.build(cfg.master_seed, cfg.workers());
    sim.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let estimates = estimate_phi_batch(&sys, &p.probes, &sim)
        .map_err(|e| CliError::Config(e.to_string()))?;

    let (header, rows) = report::phi_csv(&estimates);
    let mut artifacts = vec![("phi.csv".to_string(), report::csv_bytes(&header, &rows))];
    if plot {
        artifacts.push(("phi.svg".to_string(), phi_plot(&estimates)));
    }
    let payload = json!({
        "system": sys.label(),
        "params": sim_json(&sim),
        "estimates": report::phi_table_json(&estimates),
    });
    let summary = format!(
        "phi: {} probes at {} trials each; artifacts: phi.csv{}",
        estimates.len(),
        sim.trials,
        if plot { ", phi.svg" } else { "" }
    );
    Ok(RunOutput { payload, refusal: None, artifacts, summary })
}

fn run_classify(cfg: &RunConfig, c: &crate::config::ClassifyConfig) -> Result<RunOutput, CliError> {
    let sys = build_required_system(cfg)?;
    let gate = c.gate(cfg.master_seed, cfg.workers());
    gate.sim.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let verdict = classify_system(&sys, &gate.probes, &gate.sim, gate.tau)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let payload = json!({
        "system": sys.label(),
        "params": sim_json(&gate.sim),
        "tau": gate.tau,
        "probes": gate.probes,
        "verdict": report::verdict_json(&verdict),
    });
    let (refusal, summary) = match &verdict {
        ClassVerdict::Classified { class, flipped, swapped, .. } => (
            None,
            format!("classify: class {class} (flipped={flipped}, swapped={swapped})"),
        ),
        ClassVerdict::Refused { reason, .. } => {
            (Some(reason.clone()), format!("classify: refused; {reason}"))
        }
    };
    Ok(RunOutput { payload, refusal, artifacts: Vec::new(), summary })
}

/// A measure run refuses (exit 2) when the construction's gate rejects the
/// system, when ladder levels disagree, or when the finished measure fails
/// its stationarity check; parameter problems are config errors instead.
fn run_measure(cfg: &RunConfig, mc: &MeasureConfig, plot: bool) -> Result<RunOutput, CliError> {
    let sys = build_required_system(cfg)?;
    let seed = cfg.master_seed;
    let workers = cfg.workers();
    match mc {
        MeasureConfig::Probability(pc) => {
            let params = pc.build(seed, workers);
            let tol = pc.residual_tol.unwrap_or(0.02);
            let out = match build_case4_measure(&sys, &params) {
                Ok(out) => out,
                Err(e) => return measure_failure("probability", e),
            };
            let inverse = sys.inverse();
            let residual = check_residual(&out.measure, &inverse, (f64::NEG_INFINITY, f64::INFINITY))?;
            finish_measure(MeasureRun {
                case: "probability",
                payload_for: &|header| report::case4_json(&out, header),
                measure: &out.measure,
                residual,
                checked_against: "inverse system",
                tol,
                extra_refusal: None,
                plot,
                histogram: None,
            })
        }
        MeasureConfig::SemiInfinite(sc) => {
            let params = sc.build(seed, workers);
            let tol = sc.residual_tol.unwrap_or(0.03);
            let out = match build_case2_semi(&sys, sc.level, &params) {
                Ok(out) => out,
                Err(e) => return measure_failure("semi_infinite", e),
            };
            let inverse = sys.inverse();
            // Stationarity only holds above the target level; below it the
            // defining probability is clamped at 1.
            let residual =
                check_residual(&out.measure, &inverse, (sc.level, params.window.1))?;
            finish_measure(MeasureRun {
                case: "semi_infinite",
                payload_for: &|header| report::case2_json(&out, sc.level, header),
                measure: &out.measure,
                residual,
                checked_against: "inverse system",
                tol,
                extra_refusal: None,
                plot,
                histogram: None,
            })
        }
        MeasureConfig::Occupation(oc) => {
            let params = oc.build(seed, workers);
            let tol = oc.residual_tol.unwrap_or(0.05);
            let (out, inconsistency) = match build_case3_radon(&sys, &params) {
                Ok(out) => (out, None),
                Err(MeasureError::InconsistentLevels { worst, tol: level_tol, output }) => {
                    let reason = format!(
                        "ladder levels disagree: relative deviation {worst:.4} exceeds {level_tol}"
                    );
                    (*output, Some(reason))
                }
                Err(e) => return measure_failure("occupation", e),
            };
            // The occupation measure is stationary for the forward system;
            // certify it where the smallest tent does not distort mass.
            let plateau = smallest_plateau(&out);
            let residual = check_residual(&out.measure, &sys, plateau)?;
            let histogram = out.levels.last().map(|l| {
                let bins: Vec<(f64, f64)> =
                    (0..l.histogram.bins()).map(|i| (l.histogram.center(i), l.histogram.mass(i))).collect();
                (bins, params.bin_width)
            });
            finish_measure(MeasureRun {
                case: "occupation",
                payload_for: &|header| report::case3_json(&out, header),
                measure: &out.measure,
                residual,
                checked_against: "forward system",
                tol,
                extra_refusal: inconsistency,
                plot,
                histogram,
            })
        }
    }
}

fn smallest_plateau(out: &Case3Output) -> (f64, f64) {
    out.levels
        .first()
        .map(|l| l.tent.plateau())
        .unwrap_or((f64::NEG_INFINITY, f64::INFINITY))
}

/// Residual check shared by the measure cases. An empty check window is a
/// refusal, not a crash: the measure exists but cannot be certified.
enum ResidualOutcome {
    Checked(crate::measure::ResidualReport),
    Uncheckable(String),
}

fn check_residual(
    nu: &GridMeasure,
    sys: &RandomSystem,
    range: (f64, f64),
) -> Result<ResidualOutcome, CliError> {
    match stationarity_residual_on(nu, sys, range) {
        Ok(r) => Ok(ResidualOutcome::Checked(r)),
        Err(MeasureError::WindowTooSmall { skipped }) => Ok(ResidualOutcome::Uncheckable(
            format!("stationarity check had no usable grid points ({skipped} skipped)"),
        )),
        Err(e) => Err(CliError::Fail(format!("stationarity check failed: {e}"))),
    }
}

struct MeasureRun<'a> {
    case: &'static str,
    payload_for: &'a dyn Fn(Value) -> Value,
    measure: &'a GridMeasure,
    residual: ResidualOutcome,
    checked_against: &'static str,
    tol: f64,
    extra_refusal: Option<String>,
    plot: bool,
    histogram: Option<(Vec<(f64, f64)>, f64)>,
}

fn finish_measure(run: MeasureRun<'_>) -> Result<RunOutput, CliError> {
    let (header, residual_refusal, residual_note) = match &run.residual {
        ResidualOutcome::Checked(r) => {
            let header =
                report::measure_header_json(run.measure, r, run.checked_against, run.tol);
            let refusal = (r.sup > run.tol).then(|| {
                format!(
                    "stationarity residual {:.4} exceeds the tolerance {}",
                    r.sup, run.tol
                )
            });
            let note = format!("residual sup {:.4} over {} points", r.sup, r.checked);
            (header, refusal, note)
        }
        ResidualOutcome::Uncheckable(reason) => {
            let mut header = report::measure_header_json(
                run.measure,
                &crate::measure::ResidualReport { sup: f64::NAN, checked: 0, skipped: 0, tail_clamp: 0.0 },
                run.checked_against,
                run.tol,
            );
            if let Some(res) = header.get_mut("residual") {
                res["sup"] = Value::Null;
            }
            (header, Some(reason.clone()), "residual unchecked".to_string())
        }
    };
    let payload = (run.payload_for)(header);

    let (csv_header, rows) = report::measure_csv(run.measure);
    let mut artifacts = vec![("measure.csv".to_string(), report::csv_bytes(&csv_header, &rows))];
    if run.plot {
        artifacts.push(("measure.svg".to_string(), cdf_plot(run.measure)));
        if let Some((bins, width)) = &run.histogram {
            artifacts.push((
                "occupation.svg".to_string(),
                report::svg_histogram("stop-point occupation", bins, *width).into_bytes(),
            ));
        }
    }

    // Inconsistency between ladder levels outranks the residual verdict.
    let refusal = run.extra_refusal.or(residual_refusal);
    let summary = match &refusal {
        Some(reason) => format!("measure({}): refused; {reason}", run.case),
        None => format!(
            "measure({}): {residual_note} (tolerance {})",
            run.case, run.tol
        ),
    };
    Ok(RunOutput { payload, refusal, artifacts, summary })
}

fn measure_failure(case: &str, err: MeasureError) -> Result<RunOutput, CliError> {
    match err {
        MeasureError::Refused { reason } => {
            let payload = json!({ "case": case, "refusal": reason });
            let summary = format!("measure({case}): refused; {reason}");
            Ok(RunOutput { payload, refusal: Some(reason), artifacts: Vec::new(), summary })
        }
        other => Err(CliError::Config(other.to_string())),
    }
}

fn run_monster_cmd(
    cfg: &RunConfig,
    m: &crate::config::MonsterConfig,
    plot: bool,
) -> Result<RunOutput, CliError> {
    let variant = m.variant();
    let variant_name = match m.variant {
        MonsterVariant::Alternating => "alternating",
        MonsterVariant::Symmetric => "symmetric",
    };
    let steps = m.steps;
    let interval = m.interval();
    let perturbation = m.perturbation();
    let seeds = m.seeds();

    let mut artifacts = Vec::new();
    let summaries: Vec<MonsterSeedSummary> = if seeds == 1 {
        // Single trajectory: same derived stream as a batch of one, but the
        // full trace is kept so the rank growth spine can be written out.
        let run =
            monster::run_monster(variant, steps, trial_seed(cfg.master_seed, 0), interval, perturbation)
                .map_err(|e| CliError::Config(e.to_string()))?;
        let lemmas = check_rank_lemmas(&run.trace);
        let spine = run.trace.logarithmic_spine();
        let rows: Vec<Vec<String>> =
            spine.iter().map(|(s, k)| vec![s.to_string(), k.to_string()]).collect();
        artifacts.push((
            "monster.csv".to_string(),
            report::csv_bytes(&["step", "max_rank"], &rows),
        ));
        if plot {
            let points: Vec<(f64, f64)> =
                spine.iter().map(|&(s, k)| ((s as f64).log10(), k as f64)).collect();
            let series = [Series { name: "max rank vs log10(step)", points: &points }];
            artifacts.push((
                "monster.svg".to_string(),
                report::svg_line_chart("record rank growth", &series).into_bytes(),
            ));
        }
        vec![MonsterSeedSummary {
            seed_index: 0,
            last_inside_step: run.trace.last_visit(),
            inside_count: run.trace.visit_count(),
            max_rank: run.trace.running_max_at(steps).unwrap_or(0),
            record_count: lemmas.record_count,
            last_low_max_step: lemmas.last_low_max_step,
            last_record_gap_violation: lemmas.last_record_gap_violation,
            last_slow_record: lemmas.last_slow_record,
        }]
    } else {
        monster::run_monster_batch(
            variant,
            steps,
            cfg.master_seed,
            interval,
            perturbation,
            seeds,
            cfg.workers(),
        )
        .map_err(|e| CliError::Config(e.to_string()))?
    };

    let payload = report::monster_json(variant_name, steps, interval, perturbation, &summaries);
    let last_inside = summaries.iter().filter_map(|s| s.last_inside_step).max();
    let summary = format!(
        "monster({variant_name}): {seeds} seed(s) x {steps} steps; last visit to {:?} at {}",
        interval,
        last_inside.map_or_else(|| "no step".to_string(), |s| format!("step {s}"))
    );
    Ok(RunOutput { payload, refusal: None, artifacts, summary })
}

fn phi_plot(estimates: &[PhiEstimate]) -> Vec<u8> {
    let plus: Vec<(f64, f64)> = estimates.iter().map(|e| (e.x, e.phi_plus())).collect();
    let minus: Vec<(f64, f64)> = estimates.iter().map(|e| (e.x, e.phi_minus())).collect();
    let zero: Vec<(f64, f64)> = estimates.iter().map(|e| (e.x, e.phi_zero())).collect();
    let series = [
        Series { name: "phi_plus", points: &plus },
        Series { name: "phi_minus", points: &minus },
        Series { name: "phi_zero", points: &zero },
    ];
    report::svg_line_chart("escape probabilities", &series).into_bytes()
}

fn cdf_plot(m: &GridMeasure) -> Vec<u8> {
    let points: Vec<(f64, f64)> =
        (0..m.len()).map(|j| (m.grid_point(j), m.rel_cdf()[j])).collect();
    let series = [Series { name: "cdf", points: &points }];
    report::svg_line_chart("measure cdf over the window", &series).into_bytes()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn classify_config() -> String {
        serde_json::json!({
            "master_seed": 11,
            "system": {
                "maps": [
                    {"kind": "affine", "slope": "1", "intercept": "1"},
                    {"kind": "affine", "slope": "1", "intercept": "-1"}
                ],
                "probs": ["2/3", "1/3"]
            },
            "command": {"name": "classify", "sim": {"trials": 200, "horizon": 400, "escape_threshold": 60.0}}
        })
        .to_string()
    }

    fn parse(cmdline: &[&str]) -> Cli {
        Cli::try_parse_from(cmdline).expect("valid command line")
    }

    #[test]
    fn subcommand_must_match_the_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        fs::write(&path, classify_config()).unwrap();
        let cli = parse(&["rdsline", "phi", "--config", path.to_str().unwrap()]);
        match execute(&cli) {
            Err(CliError::Config(msg)) => assert!(msg.contains("'classify'"), "{msg}"),
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn classify_writes_report_and_exits_clean() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        fs::write(&path, classify_config()).unwrap();
        let out = dir.path().join("out");
        let cli = parse(&[
            "rdsline",
            "classify",
            "--config",
            path.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--verify",
        ]);
        assert_eq!(execute(&cli).unwrap(), EXIT_OK);
        let report = fs::read_to_string(out.join("report.json")).unwrap();
        let v: serde_json::Value = serde_json::from_str(&report).unwrap();
        assert_eq!(v["outcome"], "ok");
        assert_eq!(v["result"]["verdict"]["class"], 1);
        assert_eq!(v["master_seed"], 11);
    }

    #[test]
    fn seed_flag_overrides_the_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        fs::write(&path, classify_config()).unwrap();
        let out = dir.path().join("out");
        let cli = parse(&[
            "rdsline",
            "classify",
            "--config",
            path.to_str().unwrap(),
            "--seed",
            "99",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(execute(&cli).unwrap(), EXIT_OK);
        let report = fs::read_to_string(out.join("report.json")).unwrap();
        let v: serde_json::Value = serde_json::from_str(&report).unwrap();
        assert_eq!(v["master_seed"], 99);
    }

    #[test]
    fn window_flag_is_rejected_where_it_has_no_meaning() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        fs::write(&path, classify_config()).unwrap();
        let cli = parse(&[
            "rdsline",
            "classify",
            "--config",
            path.to_str().unwrap(),
            "--window",
            "-5",
            "5",
        ]);
        match execute(&cli) {
            Err(CliError::Config(msg)) => assert!(msg.contains("--window"), "{msg}"),
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn trials_flag_reaches_the_simulation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        fs::write(&path, classify_config()).unwrap();
        let out = dir.path().join("out");
        let cli = parse(&[
            "rdsline",
            "classify",
            "--config",
            path.to_str().unwrap(),
            "--trials",
            "150",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(execute(&cli).unwrap(), EXIT_OK);
        let report = fs::read_to_string(out.join("report.json")).unwrap();
        let v: serde_json::Value = serde_json::from_str(&report).unwrap();
        assert_eq!(v["result"]["params"]["trials"], 150);
    }

    #[test]
    fn monster_single_seed_matches_a_batch_of_one() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        let cfg_text = serde_json::json!({
            "master_seed": 5,
            "command": {"name": "monster", "variant": "alternating", "steps": 20_000}
        })
        .to_string();
        fs::write(&path, &cfg_text).unwrap();
        let cfg = parse_config(&cfg_text).unwrap();
        let single = run_command(&cfg, false).unwrap();
        let batch = monster::run_monster_batch(
            monster::Variant::Alternating,
            20_000,
            5,
            (-10.0, 10.0),
            0.0,
            1,
            2,
        )
        .unwrap();
        assert_eq!(
            single.payload["seeds"],
            serde_json::to_value(&batch).unwrap(),
            "the single-seed path must agree with the batch derivation"
        );
    }

    #[test]
    fn reruns_are_bit_identical() {
        let cfg = parse_config(&classify_config()).unwrap();
        let a = run_command(&cfg, true).unwrap();
        let b = run_command(&cfg, true).unwrap();
        assert_eq!(a, b);
    }
}
