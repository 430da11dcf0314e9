use std::fmt::Write as _;
use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use consensus_core::analysis::{align, ConvergenceReport};
use consensus_core::controller::Mode;
use consensus_core::graph::GraphMatrices;
use consensus_core::io::{fmt_f64, write_atomic};
use consensus_core::scenario::{builtin_example, RunOutput, Scenario, Variant};
use consensus_core::spectral::{
    best_mu, check_gain_condition, check_hurwitz_atilde, classify_error_system, error_system_matrix, inertia_of_kq,
    ultimate_bound, InertiaReport,
};
use consensus_core::verify::run_suite;
use consensus_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "consensus",
    version,
    about = "Disturbance-rejecting consensus and formation simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one or more scenarios and print convergence reports.
    Simulate(SimulateArgs),
    /// Print inertia and ultimate-bound analysis for a scenario.
    Spectral(SpectralArgs),
    /// Run the randomized property suite.
    Verify {
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario files.
    files: Vec<PathBuf>,
    /// Built-in example (1, 2 or 3); repeatable.
    #[arg(long = "example", value_name = "N")]
    examples: Vec<u32>,
    /// baseline, reject or constant-point.
    #[arg(long, value_parser = parse_variant)]
    variant: Option<Variant>,
    /// Trajectory CSV (single scenario only).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report file (single scenario only).
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    json: bool,
    /// Overrides the horizon T of every scenario.
    #[arg(long, value_name = "T", allow_hyphen_values = true)]
    horizon: Option<f64>,
    /// Number of scenarios run concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct SpectralArgs {
    file: Option<PathBuf>,
    #[arg(long = "example", value_name = "N")]
    example: Option<u32>,
    /// Fixed mu for the gain-condition check; default searches a grid.
    #[arg(long, allow_hyphen_values = true)]
    mu: Option<f64>,
    /// Writes all computed eigenvalues as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

macro_rules! outln {
    ($out:expr, $($arg:tt)*) => {{ let _ = writeln!($out, $($arg)*); }};
}

macro_rules! outp {
    ($out:expr, $($arg:tt)*) => {{ let _ = write!($out, $($arg)*); }};
}

/// Writes to stdout, ignoring a closed pipe.
fn emit(text: &str) {
    let mut stdout = std::io::stdout().lock();
    let _ = stdout.write_all(text.as_bytes()).and_then(|()| stdout.flush());
}

fn parse_variant(s: &str) -> std::result::Result<Variant, String> {
    Variant::from_name(s).ok_or_else(|| format!("unknown variant `{s}` (baseline, reject, constant-point)"))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Spectral(args) => spectral(args),
        Command::Verify { seed, json } => verify(seed, json),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}

fn load(path: &PathBuf) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    Scenario::parse(&text)
}

fn simulate(args: SimulateArgs) -> Result<ExitCode> {
    let mut scenarios = Vec::new();
    for f in &args.files {
        scenarios.push(load(f)?);
    }
    for &id in &args.examples {
        scenarios.push(builtin_example(id)?);
    }
    if scenarios.is_empty() {
        return Err(Error::validation("simulate", "give a scenario file or --example N"));
    }
    if scenarios.len() > 1 && (args.out.is_some() || args.report.is_some()) {
        return Err(Error::validation(
            "simulate",
            "--out and --report take a single scenario; use [output] sections for batches",
        ));
    }
    if args.jobs == 0 {
        return Err(Error::validation("jobs", "must be at least 1"));
    }
    for s in &mut scenarios {
        if let Some(v) = args.variant {
            *s = s.clone().with_variant(v);
        }
        if let Some(t) = args.horizon {
            s.sim.horizon = t;
        }
        if args.out.is_some() {
            s.output.csv = args.out.clone();
        }
        if args.report.is_some() {
            s.output.report = args.report.clone();
        }
        s.validate()?;
        s.check_outputs()?;
    }

    let run_one = |s: &Scenario| -> Result<ConvergenceReport> {
        let RunOutput { trajectory, report, .. } = s.run()?;
        if let Some(p) = &s.output.csv {
            trajectory.write_csv(p)?;
        }
        if let Some(p) = &s.output.report {
            write_atomic(p, render_report(s, &report, args.json).as_bytes())?;
        }
        Ok(report)
    };
    let results: Vec<Result<ConvergenceReport>> = if args.jobs == 1 {
        scenarios.iter().map(run_one).collect()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(args.jobs)
            .build()
            .map_err(|e| Error::validation("jobs", e.to_string()))?
            .install(|| scenarios.par_iter().map(run_one).collect())
    };

    let mut first_error = None;
    let mut json_docs = Vec::new();
    let mut text = String::new();
    for (s, r) in scenarios.iter().zip(results) {
        match r {
            Ok(report) if args.json => json_docs.push(json_with_name(s, &report)),
            Ok(report) => {
                if scenarios.len() > 1 {
                    let _ = writeln!(text, "== {} ==", s.name);
                }
                text.push_str(&render_report(s, &report, false));
            }
            Err(e) => {
                eprintln!("error: {}: {e}", s.name);
                first_error.get_or_insert(e);
            }
        }
    }
    if args.json {
        let doc = if json_docs.len() == 1 {
            json_docs.pop().expect("one document")
        } else {
            serde_json::Value::Array(json_docs)
        };
        let _ = writeln!(text, "{}", serde_json::to_string_pretty(&doc).expect("serializable"));
    }
    emit(&text);
    match first_error {
        Some(e) => Err(e),
        None => Ok(ExitCode::SUCCESS),
    }
}

fn json_with_name(s: &Scenario, report: &ConvergenceReport) -> serde_json::Value {
    let mut v = serde_json::to_value(report).expect("serializable");
    v.as_object_mut()
        .expect("flat object")
        .insert("scenario".into(), serde_json::Value::String(s.name.clone()));
    v
}

fn render_report(s: &Scenario, report: &ConvergenceReport, json: bool) -> String {
    if json {
        let mut text = serde_json::to_string_pretty(&json_with_name(s, report)).expect("serializable");
        text.push('\n');
        text
    } else {
        let mut fields = vec![("scenario", s.name.clone())];
        fields.extend(report.fields());
        align(&fields)
    }
}

fn spectral(args: SpectralArgs) -> Result<ExitCode> {
    let s = match (&args.file, args.example) {
        (Some(f), None) => load(f)?,
        (None, Some(id)) => builtin_example(id)?,
        _ => {
            return Err(Error::validation(
                "spectral",
                "give exactly one of a scenario file or --example N",
            ))
        }
    };
    let graph = s.graph.build()?;
    let gm = GraphMatrices::new(&graph)?;
    let cfg = s.controller_config()?;
    let n = graph.n();
    let mut out = String::new();

    let kq = inertia_of_kq(cfg.k(), &gm)?;
    let q = if cfg.mode() == Mode::ConstantPoint {
        cfg.q()
    } else {
        0.0
    };
    let err = classify_error_system(&error_system_matrix(&gm, cfg.k(), cfg.m(), q)?)?;
    let atilde = check_hurwitz_atilde(&gm, cfg.m())?;

    outln!(out, "scenario : {}", s.name);
    outln!(out, "nodes    : {n}");
    outln!(out, "edges    : {}", graph.edges().len());
    outln!(out, "lambda_2 : {:.9e}", gm.fiedler_value());
    outln!(out, "mode     : {}", cfg.mode());
    outln!(out, "\nK*Q ({n}x{n})");
    outp!(out, "{kq}");
    outln!(out, "\nerror system ({0}x{0}, q = {q})", 2 * n);
    outp!(out, "{err}");
    outln!(out, "\npredictor -L - m*I ({n}x{n})");
    outp!(out, "{atilde}");

    let kappa = if cfg.mode() == Mode::Damped { cfg.kappa() } else { 0.0 };
    let assumption = match args.mu {
        Some(mu) => check_gain_condition(&gm, cfg.k(), cfg.m(), kappa, mu)?,
        None => best_mu(&gm, cfg.k(), cfg.m(), kappa)?,
    };
    outln!(out, "\ngain condition (kappa = {kappa})");
    if assumption.feasible {
        let d = s.disturbance_signal()?;
        outp!(out, "{}", ultimate_bound(&assumption, d.w_star(), d.wdot_star())?);
    } else {
        outp!(out, "{assumption}");
        outln!(out, "  ultimate bound    : unavailable (gain condition infeasible)");
    }

    if let Some(path) = &args.csv {
        let mut csv = String::from("matrix,index,re,im\n");
        let mut dump = |name: &str, r: &InertiaReport| {
            for (i, z) in r.eigenvalues.iter().enumerate() {
                let _ = writeln!(csv, "{name},{i},{},{}", fmt_f64(z.re), fmt_f64(z.im));
            }
        };
        dump("kq", &kq);
        dump("error_system", &err);
        dump("predictor", &atilde);
        write_atomic(path, csv.as_bytes())?;
    }
    emit(&out);
    Ok(ExitCode::SUCCESS)
}

fn verify(seed: u64, json: bool) -> Result<ExitCode> {
    let report = run_suite(seed)?;
    if json {
        emit(&format!(
            "{}\n",
            serde_json::to_string_pretty(&report).expect("serializable")
        ));
    } else {
        emit(&format!("{report}\n"));
    }
    Ok(if report.all_passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}
