use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use cogsim_core::precision::PrecisionMode;
use cogsim_core::sim::ArrayConfig;
use cogsim_core::workloads::{generate_builtin, parse_workload, Builtin, BuiltinParams, WorkloadSpec};
use cogsim_core::Error;

use crate::WorkloadArgs;

fn read(path: &Path, what: &str) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {what} `{}`", path.display()))
}

pub fn load_workload(args: &WorkloadArgs) -> Result<WorkloadSpec> {
    if let Some(path) = &args.workload {
        let doc = read(path, "workload file")?;
        return parse_workload(&doc).with_context(|| format!("workload `{}`", path.display()));
    }
    let name = args.builtin.as_deref().expect("clap requires a workload source");
    let which: Builtin = name.parse().with_context(|| format!("--builtin `{name}`"))?;
    let params = BuiltinParams { batches: args.batches, scale: args.scale, ..BuiltinParams::default() };
    Ok(generate_builtin(which, params)?)
}

pub fn load_config(path: Option<&PathBuf>, precision: Option<&str>) -> Result<ArrayConfig> {
    let mut cfg = match path {
        None => ArrayConfig::default(),
        Some(path) => {
            let doc = read(path, "config file")?;
            serde_json::from_str::<ArrayConfig>(&doc).map_err(|e| {
                anyhow!(Error::Syntax { line: e.line(), column: e.column(), message: e.to_string() })
                    .context(format!("config `{}`", path.display()))
            })?
        }
    };
    if let Some(p) = precision {
        cfg.precision.mode = parse_precision(p)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_precision(s: &str) -> Result<PrecisionMode> {
    Ok(s.parse::<PrecisionMode>().with_context(|| format!("--precision `{s}`"))?)
}

/// Parses `start:end:step` with `end` inclusive.
pub fn parse_range(s: &str) -> Result<Vec<u64>> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        bail!(Error::InvalidInput(format!("range `{s}` must be start:end:step")));
    }
    let mut nums = [0u64; 3];
    for (slot, p) in nums.iter_mut().zip(&parts) {
        *slot = p
            .parse()
            .map_err(|_| Error::InvalidInput(format!("range `{s}`: `{p}` is not a non-negative integer")))?;
    }
    let [start, end, step] = nums;
    if start == 0 || step == 0 || end < start {
        bail!(Error::InvalidInput(format!("range `{s}` needs 1 ≤ start ≤ end and step ≥ 1")));
    }
    Ok((start..=end).step_by(step as usize).collect())
}

pub fn emit(out: Option<&PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("cannot write `{}`", path.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            match writeln!(stdout, "{text}") {
                // a closed pipe (`| head`) is not a failure of the command
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
                _ => Ok(()),
            }
        }
    }
}

pub fn create(path: &Path) -> Result<fs::File> {
    fs::File::create(path).with_context(|| format!("cannot create `{}`", path.display()))
}
