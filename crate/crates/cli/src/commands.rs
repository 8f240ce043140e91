use std::collections::BTreeMap;
use std::fs;

use anyhow::{Context, Result};
use cogsim_core::factorizer::{random_codebooks, run_trial, AccuracyReport, FactorizerParams};
use cogsim_core::mapping::{choose_mapping, roofline_ai, RooflineKind};
use cogsim_core::rng::derive_seed;
use cogsim_core::scheduler::{
    build_opgraph, greedy_schedule, sequential_schedule, simulate_graph, stats, validate, write_gantt_csv,
    SimulateOptions,
};
use cogsim_core::sim::write_trace_csv;
use cogsim_core::Error;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::input::{create, emit, load_config, load_workload, parse_precision, parse_range};
use crate::{Cli, Command, FactorizeArgs, MapArgs, ReportArgs, RooflineArgs, ScheduleArgs, SimulateArgs};

/// 2 for capacity and infeasibility errors, 1 for everything else.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(e) if e.is_resource_error() => 2,
        _ => 1,
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let out = cli.out.as_ref();
    let text = match &cli.command {
        Command::Factorize(a) => factorize(a, cli.seed)?,
        Command::Simulate(a) => simulate(a, cli.seed)?,
        Command::Map(a) => map(a)?,
        Command::Schedule(a) => schedule(a)?,
        Command::Roofline(a) => roofline(a)?,
        Command::Report(a) => report(a)?,
    };
    emit(out, &text)
}

fn pretty(v: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(v).expect("outputs serialize")
}

fn factorize(a: &FactorizeArgs, seed: u64) -> Result<String> {
    if a.trials == 0 {
        return Err(Error::InvalidInput("--trials must be at least 1".into()).into());
    }
    let params = FactorizerParams {
        max_iters: a.max_iters,
        noise_similarity: a.noise,
        noise_projection: a.noise,
        rng_seed: derive_seed(seed, 1),
        precision: parse_precision(&a.precision)?,
        ..FactorizerParams::default()
    };
    params.validate()?;
    let codebooks = random_codebooks(a.factors, a.codes, a.dim, derive_seed(seed, 0))?;
    // per-trial seeds depend only on the trial index, so the split across
    // threads does not change results
    let records = (0..a.trials)
        .into_par_iter()
        .map(|t| run_trial(&codebooks, t, a.flip, &params))
        .collect::<cogsim_core::Result<Vec<_>>>()?;
    let report = AccuracyReport::from_records(records);
    if let Some(path) = &a.records {
        fs::write(path, report.to_csv()?).with_context(|| format!("cannot write `{}`", path.display()))?;
    }
    Ok(pretty(&json!({
        "kind": "factorize",
        "factors": a.factors,
        "codes": a.codes,
        "dim": a.dim,
        "flip": a.flip,
        "noise": a.noise,
        "precision": a.precision,
        "seed": seed,
        "summary": report.summary,
    })))
}

fn simulate(a: &SimulateArgs, seed: u64) -> Result<String> {
    let spec = load_workload(&a.workload)?;
    let cfg = load_config(a.workload.config.as_ref(), a.workload.precision.as_deref())?;
    let graph = build_opgraph(&spec)?;
    let opts = SimulateOptions { trace: a.trace.is_some(), seed };
    let (report, trace) = simulate_graph(&graph, &cfg, opts)?;
    if let Some(path) = &a.trace {
        write_trace_csv(&trace, create(path)?)?;
    }
    Ok(pretty(&json!({ "kind": "simulate", "workload": spec.name, "ops": graph.len(), "report": report })))
}

fn map(a: &MapArgs) -> Result<String> {
    if a.k == 0 || a.d == 0 || a.N == 0 || a.M == 0 {
        return Err(Error::InvalidInput("--k, --d, --N and --M must be at least 1".into()).into());
    }
    if let Some(b) = a.bandwidth {
        if !(b > 0.0 && b.is_finite()) {
            return Err(Error::InvalidInput(format!("--bandwidth `{b}` must be positive")).into());
        }
    }
    let dec = choose_mapping(a.k, a.d, a.N, a.M, a.bandwidth);
    let mut v = serde_json::to_value(&dec).expect("decision serializes");
    v["kind"] = json!("map");
    Ok(pretty(&v))
}

fn schedule(a: &ScheduleArgs) -> Result<String> {
    let spec = load_workload(&a.workload)?;
    let cfg = load_config(a.workload.config.as_ref(), a.workload.precision.as_deref())?;
    let graph = build_opgraph(&spec)?;
    let sched = greedy_schedule(&graph, &cfg)?;
    let violations = validate(&sched, &graph);
    let st = stats(&sched);
    if let Some(path) = &a.gantt {
        write_gantt_csv(&st.gantt, create(path)?)?;
    }
    let mut v = json!({
        "kind": "schedule",
        "workload": spec.name,
        "makespan": sched.makespan,
        "stats": st,
        "violations": violations,
        "entries": sched.entries,
    });
    if a.baseline.is_some() {
        let seq = sequential_schedule(&graph, &cfg)?;
        v["baseline"] = json!({
            "policy": "sequential",
            "makespan": seq.makespan,
            "ratio": sched.makespan as f64 / seq.makespan as f64,
            "stats": stats(&seq),
        });
    }
    Ok(pretty(&v))
}

fn roofline(a: &RooflineArgs) -> Result<String> {
    let mut lines = vec!["d,ai_bs,ai_gemv".to_string()];
    for d in parse_range(&a.d_range)? {
        lines.push(format!(
            "{d},{:.6},{:.6}",
            roofline_ai(RooflineKind::BsDataflow, d),
            roofline_ai(RooflineKind::GemvGpu, d)
        ));
    }
    Ok(lines.join("\n"))
}

fn report(a: &ReportArgs) -> Result<String> {
    let mut sources = BTreeMap::new();
    let mut summary = BTreeMap::new();
    for path in &a.inputs {
        let text = fs::read_to_string(path).with_context(|| format!("cannot read `{}`", path.display()))?;
        let v: Value = serde_json::from_str(&text).map_err(|e| {
            anyhow::Error::new(Error::Syntax { line: e.line(), column: e.column(), message: e.to_string() })
                .context(format!("`{}`", path.display()))
        })?;
        let name = path.display().to_string();
        let headline = match v.get("kind").and_then(Value::as_str) {
            Some("factorize") => json!({ "accuracy": v["summary"]["accuracy"], "mean_iterations": v["summary"]["mean_iterations"] }),
            Some("simulate") => json!({
                "total_cycles": v["report"]["total_cycles"],
                "utilization": v["report"]["utilization"],
                "energy_joules": v["report"]["energy_joules"],
            }),
            Some("schedule") => json!({ "makespan": v["makespan"], "mean_utilization": v["stats"]["mean_utilization"] }),
            Some("map") => json!({ "mode": v["mode"], "latency_cycles": v["latency_cycles"] }),
            _ => Value::Null,
        };
        summary.insert(name.clone(), headline);
        sources.insert(name, v);
    }
    Ok(pretty(&json!({ "kind": "report", "summary": summary, "sources": sources })))
}
