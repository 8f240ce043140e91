//! Double-buffered SRAM traffic. Operands for the next round are fetched
//! while the current round computes; a stall is charged only for the part
//! of a fetch that outlasts the round.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mapping::MappingMode;
use crate::sim::config::ArrayConfig;
use crate::sim::report::CycleReport;

/// Operands touched by one round of `t_cycles` on the arrays.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundTraffic {
    /// Stationary elements read from SRAM A.
    pub stationary_elems: u64,
    /// Streamed elements read from SRAM B.
    pub stream_elems: u64,
    /// Distinct streamed vectors' elements that must sit in SRAM B.
    pub resident_stream_elems: u64,
    /// Elements fetched from DRAM into SRAM A ahead of the round.
    pub fetch_a_elems: u64,
    /// Elements fetched from DRAM into SRAM B ahead of the round.
    pub fetch_b_elems: u64,
    /// Final outputs written back.
    pub output_elems: u64,
    pub t_cycles: u64,
}

impl RoundTraffic {
    /// Fully utilised round for `mode`.
    pub fn full_util(mode: MappingMode, d: u64, n: u64, m: u64) -> Self {
        let t = crate::mapping::tile_latency(d, m);
        match mode {
            MappingMode::Spatial => Self {
                stationary_elems: d,
                stream_elems: d,
                resident_stream_elems: d,
                fetch_a_elems: d,
                fetch_b_elems: d,
                output_elems: d,
                t_cycles: t,
            },
            MappingMode::Temporal => Self {
                stationary_elems: m * n,
                stream_elems: d * n,
                resident_stream_elems: d * n,
                fetch_a_elems: m * n,
                fetch_b_elems: d * n,
                output_elems: d * n,
                t_cycles: t,
            },
        }
    }

    pub fn reads(&self) -> u64 {
        self.stationary_elems + self.stream_elems
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrafficDelta {
    pub sram_a_reads: u64,
    pub sram_a_writes: u64,
    pub sram_b_reads: u64,
    pub sram_b_writes: u64,
    pub dram_bytes: u64,
    pub reads_per_t: u64,
    pub load_cycles: u64,
    pub stall_cycles: u64,
}

impl TrafficDelta {
    pub fn apply(&self, report: &mut CycleReport) {
        report.sram_a_reads += self.sram_a_reads;
        report.sram_a_writes += self.sram_a_writes;
        report.sram_b_reads += self.sram_b_reads;
        report.sram_b_writes += self.sram_b_writes;
        report.dram_bytes += self.dram_bytes;
        report.stall_cycles += self.stall_cycles;
    }
}

/// Traffic for one round. Each buffer is split in two halves, so a round's
/// working set must fit half of it.
pub fn account_memory(round: &RoundTraffic, cfg: &ArrayConfig) -> Result<TrafficDelta> {
    let bpe = cfg.precision.mode.bytes_per_elem();
    let a_need = round.stationary_elems * bpe;
    if a_need > cfg.sram_a_bytes / 2 {
        return Err(Error::Capacity { buffer: "SRAM A", needed: a_need, available: cfg.sram_a_bytes / 2 });
    }
    let b_need = (round.resident_stream_elems + round.output_elems) * bpe;
    if b_need > cfg.sram_b_bytes / 2 {
        return Err(Error::Capacity { buffer: "SRAM B", needed: b_need, available: cfg.sram_b_bytes / 2 });
    }
    let fetch_bytes = (round.fetch_a_elems + round.fetch_b_elems) * bpe;
    let load_cycles = (fetch_bytes as f64 / cfg.dram_bandwidth).ceil() as u64;
    Ok(TrafficDelta {
        sram_a_reads: round.stationary_elems,
        sram_a_writes: round.fetch_a_elems,
        sram_b_reads: round.stream_elems,
        sram_b_writes: round.fetch_b_elems + round.output_elems,
        dram_bytes: fetch_bytes + round.output_elems * bpe,
        reads_per_t: round.reads(),
        load_cycles,
        stall_cycles: load_cycles.saturating_sub(round.t_cycles),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::precision::QuantScheme;

    #[test]
    fn reads_per_t_examples() {
        let cfg = ArrayConfig::default();
        let s = account_memory(&RoundTraffic::full_util(MappingMode::Spatial, 1024, 32, 512), &cfg).unwrap();
        assert_eq!(s.reads_per_t, 2048);
        let t = account_memory(&RoundTraffic::full_util(MappingMode::Temporal, 1024, 32, 512), &cfg).unwrap();
        assert_eq!(t.reads_per_t, 49152);
        assert_eq!(t.stall_cycles, 0);
    }

    #[test]
    fn ratio_tends_to_half_n() {
        let (n, m) = (32, 512);
        let mut prev = f64::INFINITY;
        for d in [512, 1024, 4096, 65536, 1 << 20] {
            let r = RoundTraffic::full_util(MappingMode::Temporal, d, n, m).reads() as f64
                / RoundTraffic::full_util(MappingMode::Spatial, d, n, m).reads() as f64;
            assert!(r < prev && r > n as f64 / 2.0);
            prev = r;
        }
        assert!((prev / 16.0 - 1.0).abs() < 1e-3);
    }

    #[test]
    fn stall_only_past_round_length() {
        let cfg = ArrayConfig { dram_bandwidth: 1.0, ..ArrayConfig::default() };
        let mut round = RoundTraffic { fetch_a_elems: 100, t_cycles: 100, ..RoundTraffic::default() };
        assert_eq!(account_memory(&round, &cfg).unwrap().stall_cycles, 0);
        round.fetch_a_elems = 130;
        assert_eq!(account_memory(&round, &cfg).unwrap().stall_cycles, 30);
    }

    #[test]
    fn capacity_names_buffer() {
        let cfg = ArrayConfig { precision: QuantScheme::FP32, ..ArrayConfig::default() };
        let round = RoundTraffic { stationary_elems: 40_000, ..RoundTraffic::default() };
        match account_memory(&round, &cfg) {
            Err(Error::Capacity { buffer, .. }) => assert_eq!(buffer, "SRAM A"),
            other => panic!("{other:?}"),
        }
        let round = RoundTraffic { resident_stream_elems: 600_000, ..RoundTraffic::default() };
        match account_memory(&round, &cfg) {
            Err(Error::Capacity { buffer, .. }) => assert_eq!(buffer, "SRAM B"),
            other => panic!("{other:?}"),
        }
    }
}
