//! Cycle-level model of the reconfigurable PE array.

pub mod cell;
pub mod config;
pub mod engine;
pub mod memory;
pub mod pe;
pub mod report;
pub mod simd;

pub use cell::{bs_footprint_elems, run_circcorr_bs, run_circconv_bs, BaselineRun, Matrix, SystolicCell};
pub use config::{ArrayConfig, EnergyCoeffs, SimdLatencies};
pub use engine::{ArraySim, ConvBatchResult, ConvJob, SimMode};
pub use memory::{account_memory, RoundTraffic, TrafficDelta};
pub use pe::{PeArray, PeMode, PeState, TraceRow};
pub use report::{energy_estimate, CycleReport};
pub use simd::{simd_exec, SimdOp};

/// Writes trace rows as CSV.
pub fn write_trace_csv<W: std::io::Write>(rows: &[TraceRow], out: W) -> crate::error::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row).map_err(|e| crate::error::Error::InvalidInput(format!("trace output: {e}")))?;
    }
    w.flush().map_err(|e| crate::error::Error::InvalidInput(format!("trace output: {e}")))?;
    Ok(())
}
