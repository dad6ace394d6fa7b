mod args;

use std::path::Path;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::Parser;

use ssjf_core::engine::write_event_log;
use ssjf_core::metrics::{write_csv, write_json, RunLabel};
use ssjf_core::par::Execution;
use ssjf_core::predictor::load_predictions;
use ssjf_core::scenario::{PredictorChoice, WorkloadSource};
use ssjf_core::workload::save_trace;
use ssjf_core::{aggregate, run, run_sweep, MetricsRow, ScenarioFile, SimError, SweepSpec};

use args::{Cli, Command};

const EXIT_INVALID: u8 = 1;
const EXIT_IO: u8 = 2;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_INVALID)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    let io = e.chain().any(|c| {
        c.downcast_ref::<SimError>().is_some_and(SimError::is_io)
            || c.downcast_ref::<std::io::Error>().is_some()
    });
    if io {
        EXIT_IO
    } else {
        EXIT_INVALID
    }
}

fn dispatch(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Run {
            scenario,
            out,
            events,
        } => run_once(&scenario.resolve()?, out.as_deref(), events.as_deref()),
        Command::Sweep {
            scenario,
            out,
            threads,
        } => {
            let exec = threads
                .filter(|&n| n > 0)
                .map_or(Execution::Auto, Execution::Threads);
            sweep(&scenario.resolve()?, &out, exec)
        }
        Command::GenTrace { scenario, out } => gen_trace(&scenario.resolve()?, &out),
        Command::Validate { scenario } => validate(&scenario.resolve()?),
    }
}

fn run_once(file: &ScenarioFile, out: Option<&Path>, events: Option<&Path>) -> anyhow::Result<()> {
    let sc = file.resolve()?;
    let mut cfg = sc.sim.clone();
    cfg.record_events = events.is_some();
    let requests = sc.workload.requests(file.seed)?;
    let outcome = run(&requests, &cfg)?;
    let metrics = aggregate(&outcome.records, outcome.incomplete.len())?;

    let rate_rps = match &sc.workload {
        WorkloadSource::Synthetic(w) => w.arrivals.rate_rps,
        WorkloadSource::Trace(_) => f64::NAN,
    };
    let row = MetricsRow::new(
        RunLabel {
            run_id: format!("run_{}_{}", cfg.scheduler.policy, file.seed),
            policy: cfg.scheduler.policy.to_string(),
            batch_mode: cfg.batching.mode.to_string(),
            max_batch: cfg.batching.capacity(),
            rate_rps,
            cv: file.cv,
            seed: file.seed,
        },
        &metrics,
    );
    println!(
        "{} / {} (max batch {}), {} requests",
        row.policy,
        row.batch_mode,
        row.max_batch,
        outcome.submitted()
    );
    println!(
        "  completed       {} ({} incomplete)",
        row.completed, row.incomplete
    );
    println!("  mean JCT        {:.1} ms", row.mean_jct_ms);
    println!(
        "  p50/p95/p99 JCT {} / {} / {} ms",
        row.p50_jct_ms, row.p95_jct_ms, row.p99_jct_ms
    );
    println!("  mean queueing   {:.1} ms", row.mean_queue_ms);
    println!(
        "  throughput      {:.3} req/s, {:.1} tok/s",
        row.throughput_rps, row.throughput_tps
    );

    if let Some(dir) = out {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        write_csv(std::slice::from_ref(&row), dir.join("metrics.csv"))?;
        write_json(&row, dir.join("metrics.json"))?;
        write_csv(&outcome.records, dir.join("records.csv"))?;
    }
    if let Some(path) = events {
        write_event_log(&outcome.events, path)?;
    }
    Ok(())
}

fn sweep(file: &ScenarioFile, out: &Path, exec: Execution) -> anyhow::Result<()> {
    if file.axis.is_none() {
        bail!(SimError::config(
            "sweep needs an axis (--axis or `axis` in the config)"
        ));
    }
    let spec = SweepSpec::from_file(file)?;
    let result = run_sweep(&spec, Some(out), exec)?;
    println!(
        "{:>10} {:>12} {:>14} {:>12} {:>12}",
        spec.axis.as_str(),
        "policy",
        "mean JCT ms",
        "JCT cut",
        "throughput"
    );
    for s in &result.summary {
        let pct = s
            .jct_reduction_vs_fcfs
            .map_or("-".into(), |r| format!("{:.1}%", 100.0 * r));
        let ratio = s
            .throughput_ratio_vs_fcfs
            .map_or("-".into(), |r| format!("{r:.2}x"));
        println!(
            "{:>10} {:>12} {:>14.1} {:>12} {:>12}",
            s.value, s.policy, s.mean_jct_ms, pct, ratio
        );
    }
    println!("{} runs written to {}", result.rows.len(), out.display());
    Ok(())
}

fn gen_trace(file: &ScenarioFile, out: &Path) -> anyhow::Result<()> {
    if file.trace.is_some() {
        bail!(SimError::config(
            "gen-trace generates a workload; drop `trace` from the configuration"
        ));
    }
    let errors = file.workload_spec().validate();
    if !errors.is_empty() {
        bail!(SimError::Config(errors));
    }
    let requests = file.workload_spec().generate()?;
    save_trace(&requests, out)?;
    println!("{} requests written to {}", requests.len(), out.display());
    Ok(())
}

fn validate(file: &ScenarioFile) -> anyhow::Result<()> {
    let errors = file.validate();
    if !errors.is_empty() {
        for e in &errors {
            eprintln!("  {e}");
        }
        bail!("{} problem(s) found", errors.len());
    }
    // referenced files must load too
    file.resolve()?;
    if let (PredictorChoice::File, Some(path)) = (file.predictor, &file.predictions) {
        load_predictions(path)?;
    }
    println!("ok");
    Ok(())
}
