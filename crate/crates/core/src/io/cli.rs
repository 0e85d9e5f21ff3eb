//! `bcns` command line. Exit codes: 0 success, 1 failed verdict or runtime
//! failure, 2 usage or configuration error. Diagnostics go to stderr.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use super::checkpoint::{read_checkpoint, write_checkpoint};
use super::config::{parse_with_overrides, Overrides, RunConfig};
use super::output::{write_json, write_ledger};
use crate::cns_model::Model;
use crate::error::{Error, Result};
use crate::estimate::energy::{source_terms, EnergyEntry, SourceTerms};
use crate::estimate::harmonic::{harmonic_suite, HarmonicSuite};
use crate::estimate::identities::{model_suite, projector_suite, ModelSuite, ProjectorSuite};
use crate::estimate::qg_bound::{qg_bound_ensemble, qg_bound_sample, QgBoundSample};
use crate::estimate::EstimateReport;
use crate::harness::{measure, run_scenario, sweep, Amplitudes, ScenarioOutcome, SweepResult};
use crate::littlewood_paley::DyadicPartition;
use crate::spectral::{GridSpec, Spectral};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser, Debug)]
#[command(name = "bcns", about = "Critical Besov norms along compressible Navier-Stokes runs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// Configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scenario preset.
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Grid resolution.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    t_end: Option<f64>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Suite {
    Harmonic,
    Projector,
    Model,
    #[value(name = "qg_bound", alias = "lemma31")]
    QgBound,
    All,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one scenario and write its ledger, report and final state.
    Run(Common),
    /// Run the configured parameter sweep.
    Sweep(Common),
    /// Run estimate ensembles without time integration.
    Check {
        #[arg(long, value_enum, default_value = "all")]
        suite: Suite,
        #[command(flatten)]
        common: Common,
    },
    /// Recompute norms and estimate samples from a checkpoint.
    Analyze {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Print the version.
    Version,
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::ConfigFile(_) | Error::Precondition(_) => 2,
        _ => 1,
    }
}

fn load(common: &Common) -> Result<RunConfig> {
    let text = match &common.config {
        Some(p) => std::fs::read_to_string(p)
            .map_err(|e| Error::Config(format!("cannot read config `{}`: {e}", p.display())))?,
        None => String::new(),
    };
    let ov = Overrides {
        scenario: common.scenario.clone(),
        seed: common.seed,
        out: common.out.clone(),
        n: common.n,
        t_end: common.t_end,
    };
    parse_with_overrides(&text, &ov).map_err(|e| match &common.config {
        Some(p) => Error::Config(format!("{}: {e}", p.display())),
        None => Error::Config(e.to_string()),
    })
}

fn prepare_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::Config(format!("cannot create output directory `{}`: {e}", dir.display())))
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

#[derive(Serialize)]
struct RunReport<'a> {
    version: &'a str,
    config: &'a RunConfig,
    outcome: &'a ScenarioOutcome,
}

fn print_outcome(o: &ScenarioOutcome) {
    println!("scenario {}", o.scenario);
    if let Some(r) = &o.stop_reason {
        println!(
            "stop {r} at t = {} after {} steps",
            o.stop_time.unwrap_or(0.0),
            o.steps
        );
    }
    if let Some(d) = &o.stop_detail {
        println!("detail {d}");
    }
    for (name, ok) in &o.verdicts {
        println!("{:<26}{}", name, verdict(*ok));
    }
    println!("overall {}", verdict(o.passed));
}

fn cmd_run(common: &Common) -> Result<i32> {
    let cfg = load(common)?;
    prepare_dir(&cfg.output.dir)?;
    let r = run_scenario(&cfg)?;
    let dir = &cfg.output.dir;
    if let Some(rec) = &r.record {
        write_ledger(&dir.join("ledger.csv"), &rec.ledger)?;
        if cfg.output.checkpoint {
            write_checkpoint(&dir.join("final.ckpt"), &rec.final_state, cfg.model.law)?;
        }
    }
    write_json(
        &dir.join("report.json"),
        &RunReport {
            version: VERSION,
            config: &cfg,
            outcome: &r.outcome,
        },
    )?;
    print_outcome(&r.outcome);
    Ok(if r.outcome.passed { 0 } else { 1 })
}

#[derive(Serialize)]
struct SweepReport<'a> {
    version: &'a str,
    config: &'a RunConfig,
    result: &'a SweepResult,
}

fn cmd_sweep(common: &Common) -> Result<i32> {
    let cfg = load(common)?;
    prepare_dir(&cfg.output.dir)?;
    let res = sweep(&cfg, &cfg.sweep)?;
    let dir = &cfg.output.dir;
    for (i, cell) in res.cells.iter().enumerate() {
        let cell_dir = dir.join(format!("cell_{i:03}"));
        prepare_dir(&cell_dir)?;
        write_json(&cell_dir.join("report.json"), cell)?;
    }
    std::fs::write(dir.join("sweep.tsv"), res.table())?;
    write_json(
        &dir.join("sweep.json"),
        &SweepReport {
            version: VERSION,
            config: &cfg,
            result: &res,
        },
    )?;
    print!("{}", res.table());
    for m in &res.monotonicity {
        println!(
            "eps {} n0 {}: fitted constant nondecreasing in a_w: {}",
            m.eps,
            m.n0,
            if m.nondecreasing { "yes" } else { "no" }
        );
    }
    match res.largest_bounded_a_w {
        Some(a) => println!("largest bounded a_w {a}"),
        None => println!("largest bounded a_w none"),
    }
    println!("pass rate {:.3}", res.pass_rate);
    Ok(if res.pass_rate == 1.0 { 0 } else { 1 })
}

#[derive(Serialize, Default)]
struct CheckReport<'a> {
    version: &'a str,
    config: Option<&'a RunConfig>,
    harmonic: Option<HarmonicSuite>,
    projector: Option<ProjectorSuite>,
    model: Option<ModelSuite>,
    qg_bound: Option<EstimateReport>,
    passed: bool,
}

fn cmd_check(suite: Suite, common: &Common) -> Result<i32> {
    let cfg = load(common)?;
    prepare_dir(&cfg.output.dir)?;
    let en = &cfg.estimates.ensemble;
    let want = |s: Suite| suite == s || suite == Suite::All;
    let mut rep = CheckReport {
        version: VERSION,
        config: Some(&cfg),
        ..CheckReport::default()
    };
    let mut ok = true;
    if want(Suite::Harmonic) {
        let h = harmonic_suite(en)?;
        println!(
            "harmonic foundation pou {:.2e} reconstruction {:.2e} parseval {:.2e} {}",
            h.foundation.partition_of_unity_error,
            h.foundation.reconstruction_error,
            h.foundation.parseval_relative_error,
            verdict(h.foundation.passed)
        );
        for r in h.product.iter().chain(&h.commutator).chain(&h.composition).chain(&h.bernstein) {
            println!("harmonic {}", r.summary());
        }
        ok &= h.passed;
        rep.harmonic = Some(h);
    }
    if want(Suite::Projector) {
        let p = projector_suite(en.n_coarse, 8.0, en.size, en.seed)?;
        println!(
            "projector gradient {:.2e} divergence {:.2e} idempotent {:.2e} orthogonal {:.2e} {}",
            p.gradient_fixed,
            p.divergence_free,
            p.idempotent,
            p.orthogonal,
            verdict(p.passed)
        );
        ok &= p.passed;
        rep.projector = Some(p);
    }
    if want(Suite::Model) {
        let m = model_suite(en.n_coarse, 2.0, 10, en.seed)?;
        println!(
            "model gamma2 k {:.2e} transport assembly {:.2e} qg reassembly {:.2e} {}",
            m.gamma2_pressure_coefficient,
            m.transport_assembly,
            m.qg_reassembly,
            verdict(m.passed)
        );
        ok &= m.passed;
        rep.model = Some(m);
    }
    if want(Suite::QgBound) {
        let l = qg_bound_ensemble(en, cfg.estimates.qg_bound_ceiling)?;
        println!("qg_bound {}", l.summary());
        ok &= l.passed;
        rep.qg_bound = Some(l);
    }
    rep.passed = ok;
    let name = match suite {
        Suite::Harmonic => "harmonic",
        Suite::Projector => "projector",
        Suite::Model => "model",
        Suite::QgBound => "qg_bound",
        Suite::All => "all",
    };
    write_json(&cfg.output.dir.join(format!("check_{name}.json")), &rep)?;
    println!("overall {}", verdict(ok));
    Ok(if ok { 0 } else { 1 })
}

#[derive(Serialize)]
struct Analysis<'a> {
    version: &'a str,
    checkpoint: String,
    n: usize,
    half_width: f64,
    t: f64,
    gamma: f64,
    in_small_regime: bool,
    amplitudes: Amplitudes,
    qg_bound: QgBoundSample,
    energy: Vec<EnergyEntry>,
    sources: Vec<SourceTerms>,
}

fn cmd_analyze(path: &Path, common: &Common) -> Result<i32> {
    let cfg = load(common)?;
    let (state, law) = read_checkpoint(path)?;
    let grid: GridSpec = state.grid();
    let mut params = cfg.model;
    params.law = law;
    let model = Model::new(Spectral::new(grid), DyadicPartition::covering(grid), params, cfg.grid.n0)?;
    let amplitudes = measure(&state)?;
    let bound = qg_bound_sample(&model, &state)?;
    let (energy, sources) = source_terms(&model, &state)?;
    prepare_dir(&cfg.output.dir)?;
    let a = Analysis {
        version: VERSION,
        checkpoint: path.display().to_string(),
        n: grid.n,
        half_width: grid.half_width,
        t: state.t,
        gamma: law.exponent(),
        in_small_regime: state.in_small_regime(),
        amplitudes,
        qg_bound: bound,
        energy,
        sources,
    };
    write_json(&cfg.output.dir.join("analysis.json"), &a)?;
    println!(
        "t = {} n = {} L = {} w_b0 {:.4e} v_b0 {:.4e} qu_b0 {:.4e} a_b0+b1 {:.4e} sup|a| {:.4e}",
        a.t, a.n, a.half_width, amplitudes.w_b0, amplitudes.v_b0, amplitudes.qu_b0, amplitudes.a_b0_plus_b1, amplitudes.sup_a
    );
    println!("qg_bound lhs {:.4e} rhs {:.4e} ratio {:.4e}", bound.lhs, bound.rhs, bound.sample.ratio());
    Ok(0)
}

fn cap_threads() -> Result<()> {
    if let Ok(v) = std::env::var("BCNS_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::Config(format!("BCNS_THREADS must be a positive integer, got `{v}`")))?;
        // a second call in the same process finds the pool already built
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Parses `argv` (program name first) and runs the subcommand.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };
    let result = cap_threads().and_then(|_| match &cli.command {
        Command::Version => {
            println!("bcns {VERSION}");
            Ok(0)
        }
        Command::Run(c) => cmd_run(c),
        Command::Sweep(c) => cmd_sweep(c),
        Command::Check { suite, common } => cmd_check(*suite, common),
        Command::Analyze { checkpoint, common } => cmd_analyze(checkpoint, common),
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn version_and_usage_codes() {
        assert_eq!(run(["bcns", "version"]), 0);
        assert_eq!(run(["bcns"]), 2);
        assert_eq!(run(["bcns", "frobnicate"]), 2);
        assert_eq!(run(["bcns", "check", "--suite", "nope"]), 2);
        assert_eq!(run(["bcns", "run", "--scenario", "nope"]), 2);
    }

    #[test]
    fn missing_config_is_usage_error() {
        let err = load(&Common {
            config: Some(PathBuf::from("definitely/missing.cfg")),
            ..Common::default()
        })
        .unwrap_err();
        assert!(err.to_string().contains("definitely/missing.cfg"));
        assert_eq!(exit_code(&err), 2);
    }
}
