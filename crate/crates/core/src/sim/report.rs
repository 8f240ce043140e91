use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::sim::config::EnergyCoeffs;

/// Cycle, traffic and energy totals for a simulation run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CycleReport {
    pub total_cycles: u64,
    /// Cycles the PE arrays spent loading and computing.
    pub compute_cycles: u64,
    /// Exposed buffer-fill cycles.
    pub stall_cycles: u64,
    /// SIMD cycles spent combining spatial-fold partial sums.
    pub reduction_cycles: u64,
    /// SIMD cycles for element-wise and special-function ops.
    pub simd_cycles: u64,
    pub per_kernel: BTreeMap<String, u64>,
    pub sram_a_reads: u64,
    pub sram_a_writes: u64,
    pub sram_b_reads: u64,
    pub sram_b_writes: u64,
    pub dram_bytes: u64,
    pub macs: u64,
    pub simd_ops: u64,
    pub pe_active_cycles: u64,
    pub num_pes: u64,
    pub utilization: f64,
    pub energy_joules: f64,
}

impl CycleReport {
    pub fn new(num_pes: u64) -> Self {
        Self { num_pes, ..Self::default() }
    }

    pub fn add_kernel(&mut self, name: &str, cycles: u64) {
        *self.per_kernel.entry(name.to_string()).or_insert(0) += cycles;
    }

    /// Recomputes utilization and energy from the counters.
    pub fn finalize(&mut self, coeffs: &EnergyCoeffs) {
        let capacity = self.total_cycles as f64 * self.num_pes as f64;
        self.utilization = if capacity > 0.0 { self.pe_active_cycles as f64 / capacity } else { 0.0 };
        self.energy_joules = energy_estimate(self, coeffs);
    }

    /// Appends a run that starts after this one ends.
    pub fn append(&mut self, other: &CycleReport) {
        self.total_cycles += other.total_cycles;
        self.compute_cycles += other.compute_cycles;
        self.stall_cycles += other.stall_cycles;
        self.reduction_cycles += other.reduction_cycles;
        self.simd_cycles += other.simd_cycles;
        for (k, v) in &other.per_kernel {
            *self.per_kernel.entry(k.clone()).or_insert(0) += v;
        }
        self.sram_a_reads += other.sram_a_reads;
        self.sram_a_writes += other.sram_a_writes;
        self.sram_b_reads += other.sram_b_reads;
        self.sram_b_writes += other.sram_b_writes;
        self.dram_bytes += other.dram_bytes;
        self.macs += other.macs;
        self.simd_ops += other.simd_ops;
        self.pe_active_cycles += other.pe_active_cycles;
        self.num_pes = self.num_pes.max(other.num_pes);
    }
}

/// Coefficient model: event counts times per-event picojoules.
pub fn energy_estimate(report: &CycleReport, coeffs: &EnergyCoeffs) -> f64 {
    let pj = report.macs as f64 * coeffs.mac_pj
        + (report.sram_a_reads + report.sram_a_writes) as f64 * coeffs.sram_a_access_pj
        + (report.sram_b_reads + report.sram_b_writes) as f64 * coeffs.sram_b_access_pj
        + report.dram_bytes as f64 * coeffs.dram_byte_pj
        + report.simd_ops as f64 * coeffs.simd_op_pj;
    pj * 1e-12
}
