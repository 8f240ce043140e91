//! Multi-array execution of convolution batches, GEMMs and SIMD work.
//!
//! In [`SimMode::Functional`] every tile runs on the register-transfer model
//! with real data. [`SimMode::TimingOnly`] runs each distinct tile shape once
//! on zero data and reuses the measured cycle count.

use std::collections::HashMap;

use crate::error::{check_dims, Error, Result};
use crate::mapping::{choose_mapping, gemm_block_latency, max_block, MappingDecision, MappingMode};
use crate::sim::cell::{Matrix, SystolicCell};
use crate::sim::config::ArrayConfig;
use crate::sim::memory::{account_memory, RoundTraffic};
use crate::sim::pe::{PeArray, TraceRow};
use crate::sim::report::CycleReport;
use crate::sim::simd::{simd_exec, SimdOp};
use crate::vsa::{Hypervector, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SimMode {
    Functional,
    TimingOnly,
}

/// A batch of `k` independent circular convolutions of dimension `d`.
#[derive(Clone, Copy, Debug)]
pub enum ConvJob<'a, T: Scalar> {
    Data(&'a [(Hypervector<T>, Hypervector<T>)]),
    Shape { k: usize, d: usize },
}

impl<T: Scalar> ConvJob<'_, T> {
    fn dims(&self) -> Result<(usize, usize)> {
        match self {
            ConvJob::Shape { k, d } => Ok((*k, *d)),
            ConvJob::Data(pairs) => {
                let d = pairs.first().map(|(a, _)| a.dim()).unwrap_or(0);
                for (a, b) in pairs.iter() {
                    check_dims(d, a.dim())?;
                    check_dims(d, b.dim())?;
                }
                Ok((pairs.len(), d))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvBatchResult<T: Scalar> {
    /// Empty in timing-only runs.
    pub outputs: Vec<Hypervector<T>>,
    pub mode: MappingMode,
    pub decision: MappingDecision,
    /// Array cycles: loads plus compute, comparable with the analytic latency.
    pub compute_cycles: u64,
    pub stall_cycles: u64,
    pub reduction_cycles: u64,
    pub total_cycles: u64,
}

/// Fold `f` of a `d`-dimensional convolution on arrays of `len` PEs:
/// `(σ, m)` as taken by [`PeArray::run_circconv_tile`].
fn fold(f: usize, d: usize, len: usize) -> (usize, usize) {
    if d <= len {
        return (0, d);
    }
    let start = f * len;
    let m = len.min(d - start);
    (start + m - 1, m)
}

pub struct ArraySim<T: Scalar> {
    cfg: ArrayConfig,
    mode: SimMode,
    arrays: Vec<PeArray<T>>,
    tile_cache: HashMap<(usize, usize, usize), u64>,
    gemm_cache: HashMap<(usize, usize), u64>,
    report: CycleReport,
    trace: Option<Vec<TraceRow>>,
    bandwidth_limit: Option<f64>,
}

impl<T: Scalar> ArraySim<T> {
    pub fn new(cfg: ArrayConfig, mode: SimMode) -> Result<Self> {
        cfg.validate()?;
        let report = CycleReport::new(cfg.total_pes() as u64);
        Ok(Self {
            cfg,
            mode,
            arrays: Vec::new(),
            tile_cache: HashMap::new(),
            gemm_cache: HashMap::new(),
            report,
            trace: None,
            bandwidth_limit: None,
        })
    }

    pub fn config(&self) -> &ArrayConfig {
        &self.cfg
    }

    pub fn mode(&self) -> SimMode {
        self.mode
    }

    /// Bandwidth cap, in elements per cycle, handed to the mapping chooser.
    pub fn set_bandwidth_limit(&mut self, limit: Option<f64>) {
        self.bandwidth_limit = limit;
    }

    /// Records register traces of functional runs.
    pub fn enable_trace(&mut self) {
        self.trace = Some(Vec::new());
    }

    pub fn take_trace(&mut self) -> Vec<TraceRow> {
        let mut rows = self.trace.as_mut().map(std::mem::take).unwrap_or_default();
        rows.sort_by_key(|r| (r.cycle, r.cell, r.column, r.pe));
        rows
    }

    /// Regroups the cells into `num_arrays` arrays of `pes_per_array` PEs.
    pub fn reshape(&mut self, num_arrays: usize, pes_per_array: usize) -> Result<()> {
        if (num_arrays, pes_per_array) != (self.cfg.num_arrays, self.cfg.pes_per_array) {
            self.flush_trace();
            self.cfg = self.cfg.with_arrays(num_arrays, pes_per_array)?;
            self.arrays.clear();
        }
        Ok(())
    }

    pub fn report(&self) -> CycleReport {
        let mut r = self.report.clone();
        r.finalize(&self.cfg.energy_coeffs);
        r
    }

    pub fn take_report(&mut self) -> CycleReport {
        let r = self.report();
        self.report = CycleReport::new(self.cfg.total_pes() as u64);
        r
    }

    fn ensure_arrays(&mut self) -> Result<()> {
        if self.arrays.is_empty() {
            let len = self.cfg.pes_per_array;
            self.arrays = (0..self.cfg.num_arrays).map(|_| PeArray::new(len)).collect::<Result<_>>()?;
            if self.trace.is_some() {
                for (j, arr) in self.arrays.iter_mut().enumerate() {
                    arr.enable_trace(j, 0);
                }
            }
        }
        Ok(())
    }

    /// Moves array-local trace rows into physical cell coordinates.
    fn flush_trace(&mut self) {
        let Some(out) = self.trace.as_mut() else { return };
        let (rows, cols, len) = (self.cfg.cell_rows, self.cfg.cell_cols, self.cfg.pes_per_array);
        for (j, arr) in self.arrays.iter_mut().enumerate() {
            for mut row in arr.take_trace() {
                let flat = j * len + row.pe;
                row.cell = flat / (rows * cols);
                row.column = (flat / rows) % cols;
                row.pe = flat % rows;
                out.push(row);
            }
        }
    }

    /// Cycles of one fold tile, measured on the register-transfer model.
    pub fn tile_cycles(&mut self, d: usize, m: usize) -> Result<u64> {
        let len = self.cfg.pes_per_array;
        if let Some(&c) = self.tile_cache.get(&(len, d, m)) {
            return Ok(c);
        }
        let mut scratch = PeArray::<i32>::new(len)?;
        let zeros = vec![0; d];
        let (_, c) = scratch.run_circconv_tile(&zeros, &zeros, 0, m, None)?;
        self.tile_cache.insert((len, d, m), c);
        Ok(c)
    }

    /// Cycles of one GEMM tile on an `m × m` block streaming `k` columns.
    pub fn gemm_tile_cycles(&mut self, m: usize, k: usize) -> Result<u64> {
        if let Some(&c) = self.gemm_cache.get(&(m, k)) {
            return Ok(c);
        }
        let mut cell = SystolicCell::<i32>::new(m, m)?;
        let (_, c) = cell.run_gemm(&Matrix::zeros(m, m), &Matrix::zeros(m, k))?;
        self.gemm_cache.insert((m, k), c);
        Ok(c)
    }

    fn round(&mut self, traffic: RoundTraffic, first: bool) -> Result<u64> {
        let delta = account_memory(&traffic, &self.cfg)?;
        delta.apply(&mut self.report);
        // the first fetch has nothing to hide behind
        let prologue = if first { delta.load_cycles.min(traffic.t_cycles) } else { 0 };
        self.report.stall_cycles += prologue;
        Ok(delta.stall_cycles + prologue)
    }

    /// Runs `job` with the chosen (or forced) mapping mode.
    pub fn circconv_batch(&mut self, job: ConvJob<'_, T>, force: Option<MappingMode>) -> Result<ConvBatchResult<T>> {
        let (k, d) = job.dims()?;
        if k == 0 || d == 0 {
            return Err(Error::InvalidInput("convolution batch needs k ≥ 1 and d ≥ 1".into()));
        }
        let (n, len) = (self.cfg.num_arrays, self.cfg.pes_per_array);
        let decision = choose_mapping(k as u64, d as u64, n as u64, len as u64, self.bandwidth_limit);
        let mode = force.unwrap_or(decision.mode);
        let functional = match (self.mode, &job) {
            (SimMode::Functional, ConvJob::Data(_)) => true,
            (SimMode::Functional, ConvJob::Shape { .. }) => {
                return Err(Error::InvalidInput("functional simulation needs operand data".into()))
            }
            _ => false,
        };
        if functional {
            self.ensure_arrays()?;
        }
        let folds = d.div_ceil(len);
        let lanes = self.cfg.simd_lanes as u64;
        let bpe_out = d as u64;

        let mut clock = 0u64;
        let mut compute = 0u64;
        let mut stalls = 0u64;
        let mut simd_free = 0u64;
        let mut reduction = 0u64;
        let mut outputs = Vec::new();
        let mut first = true;

        match mode {
            MappingMode::Temporal => {
                for wave in 0..k.div_ceil(n) {
                    let convs: Vec<usize> = (wave * n..k.min((wave + 1) * n)).collect();
                    let active = convs.len() as u64;
                    let mut acc: Vec<Option<Vec<T>>> = vec![None; convs.len()];
                    for f in 0..folds {
                        let (sigma, m) = fold(f, d, len);
                        let t = self.run_tiles(&job, functional, &convs, sigma, m, d, &mut acc, true)?;
                        let last = f + 1 == folds;
                        let traffic = RoundTraffic {
                            stationary_elems: active * m as u64,
                            stream_elems: active * d as u64,
                            resident_stream_elems: active * d as u64,
                            fetch_a_elems: active * m as u64,
                            fetch_b_elems: if f == 0 { active * d as u64 } else { 0 },
                            output_elems: if last { active * bpe_out } else { 0 },
                            t_cycles: t,
                        };
                        let stall = self.round(traffic, first)?;
                        first = false;
                        self.report.macs += active * (m * d) as u64;
                        self.report.pe_active_cycles += active * (m * d) as u64;
                        stalls += stall;
                        clock += stall + t;
                        compute += t;
                    }
                    if functional {
                        for y in acc {
                            outputs.push(Hypervector::real(y.expect("at least one fold"))?);
                        }
                    }
                }
            }
            MappingMode::Spatial => {
                let boundary = (d as u64).div_ceil(lanes) * self.cfg.simd_latency.elem_add;
                for conv in 0..k {
                    let mut partials: Vec<Vec<T>> = Vec::new();
                    for group in 0..folds.div_ceil(n) {
                        let fs: Vec<usize> = (group * n..folds.min((group + 1) * n)).collect();
                        let mut t_round = 0;
                        let mut stationary = 0u64;
                        for &f in &fs {
                            let (sigma, m) = fold(f, d, len);
                            let mut acc = vec![None];
                            let t = self.run_tiles(&job, functional, &[conv], sigma, m, d, &mut acc, false)?;
                            t_round = t_round.max(t);
                            stationary += m as u64;
                            self.report.macs += (m * d) as u64;
                            self.report.pe_active_cycles += (m * d) as u64;
                            if let Some(p) = acc.pop().flatten() {
                                partials.push(p);
                            }
                        }
                        let last = group + 1 == folds.div_ceil(n);
                        let traffic = RoundTraffic {
                            stationary_elems: stationary,
                            stream_elems: d as u64,
                            resident_stream_elems: d as u64,
                            fetch_a_elems: stationary,
                            fetch_b_elems: if group == 0 { d as u64 } else { 0 },
                            output_elems: if last { bpe_out } else { 0 },
                            t_cycles: t_round,
                        };
                        let stall = self.round(traffic, first)?;
                        first = false;
                        stalls += stall;
                        clock += stall + t_round;
                        compute += t_round;
                    }
                    if folds > 1 {
                        let cycles = (folds as u64 - 1) * boundary;
                        simd_free = simd_free.max(clock) + cycles;
                        reduction += cycles;
                        self.report.simd_ops += (folds as u64 - 1) * d as u64;
                    }
                    if functional {
                        let mut y = partials.pop().expect("at least one fold");
                        for p in partials {
                            for (acc, v) in y.iter_mut().zip(p) {
                                *acc = *acc + v;
                            }
                        }
                        outputs.push(Hypervector::real(y)?);
                    }
                }
            }
        }

        let total = clock.max(simd_free);
        self.report.total_cycles += total;
        self.report.compute_cycles += compute;
        self.report.reduction_cycles += reduction;
        self.report.add_kernel("circconv", total);
        self.flush_trace();
        Ok(ConvBatchResult {
            outputs,
            mode,
            decision,
            compute_cycles: compute,
            stall_cycles: stalls,
            reduction_cycles: reduction,
            total_cycles: total,
        })
    }

    /// One tile per listed convolution, on arrays `0..convs.len()`, all in
    /// lockstep. With `chain`, each array adds its previous partial output
    /// through the top partial-sum input.
    #[allow(clippy::too_many_arguments)]
    fn run_tiles(
        &mut self,
        job: &ConvJob<'_, T>,
        functional: bool,
        convs: &[usize],
        sigma: usize,
        m: usize,
        d: usize,
        acc: &mut [Option<Vec<T>>],
        chain: bool,
    ) -> Result<u64> {
        if !functional {
            return self.tile_cycles(d, m);
        }
        let ConvJob::Data(pairs) = job else { unreachable!() };
        let mut cycles = 0;
        for (slot, (&i, partial)) in convs.iter().zip(acc.iter_mut()).enumerate() {
            let (a, b) = &pairs[i];
            let psum_in = if chain { partial.as_deref() } else { None };
            let (y, c) = self.arrays[slot].run_circconv_tile(a.as_slice(), b.as_slice(), sigma, m, psum_in)?;
            cycles = cycles.max(c);
            *partial = Some(y);
        }
        Ok(cycles)
    }

    /// Timing of an `r × c` weight matrix applied to `k` streamed columns,
    /// on the best square grouping of cells.
    pub fn gemm(&mut self, r: usize, c: usize, k: usize) -> Result<u64> {
        if r == 0 || c == 0 || k == 0 {
            return Err(Error::InvalidInput("GEMM dims must be positive".into()));
        }
        let cells = self.cfg.num_cells as u64;
        let cell_dim = self.cfg.cell_rows.min(self.cfg.cell_cols) as u64;
        let block = (1..=max_block(cells))
            .min_by_key(|&s| (gemm_block_latency(r as u64, c as u64, k as u64, cells, cell_dim, s), s))
            .expect("at least one block size");
        let m = (cell_dim * block) as usize;
        let replicas = (cells / (block * block)) as usize;
        let tiles = r.div_ceil(m) * c.div_ceil(m);
        let t = self.gemm_tile_cycles(m, k)?;
        let bpe = self.cfg.precision.mode.bytes_per_elem();
        let mut total = 0;
        let mut first = true;
        for round in 0..tiles.div_ceil(replicas) {
            let active = replicas.min(tiles - round * replicas) as u64;
            let traffic = RoundTraffic {
                stationary_elems: active * (m * m) as u64,
                stream_elems: active * (m * k) as u64,
                resident_stream_elems: active * (m * k) as u64,
                fetch_a_elems: active * (m * m) as u64,
                fetch_b_elems: active * (m * k) as u64,
                output_elems: active * (m * k) as u64,
                t_cycles: t,
            };
            // weights larger than a buffer half stream through in slices
            let stall = match self.round(traffic, first) {
                Ok(s) => s,
                Err(Error::Capacity { .. }) => {
                    let bytes = traffic.fetch_a_elems * bpe + traffic.fetch_b_elems * bpe;
                    let load = (bytes as f64 / self.cfg.dram_bandwidth).ceil() as u64;
                    self.report.sram_a_reads += traffic.stationary_elems;
                    self.report.sram_b_reads += traffic.stream_elems;
                    self.report.sram_b_writes += traffic.output_elems;
                    self.report.dram_bytes += bytes + traffic.output_elems * bpe;
                    let s = load.saturating_sub(t);
                    self.report.stall_cycles += s;
                    s
                }
                Err(e) => return Err(e),
            };
            first = false;
            total += t + stall;
            self.report.compute_cycles += t;
        }
        let macs = (r * c * k) as u64;
        self.report.macs += macs;
        self.report.pe_active_cycles += macs;
        self.report.total_cycles += total;
        self.report.add_kernel("gemm", total);
        Ok(total)
    }

    pub fn simd(&mut self, op: SimdOp, len: usize) -> Result<u64> {
        let cycles = simd_exec(op, len as u64, &self.cfg)?;
        self.report.simd_ops += len as u64;
        self.report.simd_cycles += cycles;
        self.report.total_cycles += cycles;
        self.report.sram_b_reads += len as u64;
        self.report.sram_b_writes += len as u64;
        self.report.add_kernel(op.as_str(), cycles);
        Ok(cycles)
    }

    /// `k` circular convolutions through circulant GEMVs on one
    /// `cell_dim × cell_dim` array, one after another.
    pub fn gemv_baseline(&mut self, k: usize, d: usize, cell_dim: usize) -> Result<u64> {
        let tiles = d.div_ceil(cell_dim).pow(2) as u64;
        let t = self.gemm_tile_cycles(cell_dim, 1)?;
        let cycles = k as u64 * tiles * t;
        let dd = (d * d) as u64 * k as u64;
        self.report.sram_a_writes += dd;
        self.report.sram_a_reads += dd;
        self.report.macs += dd;
        self.report.pe_active_cycles += dd;
        self.report.total_cycles += cycles;
        self.report.compute_cycles += cycles;
        self.report.add_kernel("gemv_baseline", cycles);
        Ok(cycles)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapping::{latency_spatial, latency_temporal};
    use crate::rng::rng_from_seed;
    use crate::vsa::circ_conv;
    use rand::Rng;

    fn small_cfg(n: usize, m: usize) -> ArrayConfig {
        // n·m PEs as cells of m×1
        ArrayConfig {
            num_arrays: n,
            pes_per_array: m,
            num_cells: n,
            cell_rows: m,
            cell_cols: 1,
            ..ArrayConfig::default()
        }
    }

    fn pairs(k: usize, d: usize, seed: u64) -> Vec<(Hypervector<i32>, Hypervector<i32>)> {
        let mut rng = rng_from_seed(seed);
        (0..k)
            .map(|_| {
                let a = (0..d).map(|_| rng.random_range(-128..=127)).collect();
                let b = (0..d).map(|_| rng.random_range(-128..=127)).collect();
                (Hypervector::real(a).unwrap(), Hypervector::real(b).unwrap())
            })
            .collect()
    }

    #[test]
    fn folds_cover_all_indices() {
        for (d, len) in [(10, 4), (8, 4), (3, 5), (1, 1)] {
            let mut seen = vec![0; d];
            for f in 0..d.div_ceil(len) {
                let (sigma, m) = fold(f, d, len);
                for j in 0..m {
                    seen[(sigma + d - j) % d] += 1;
                }
            }
            assert!(seen.iter().all(|&s| s == 1), "d={d} len={len}");
        }
    }

    #[test]
    fn bipolar_operands_give_real_outputs() {
        let bip = |v: &[i32]| Hypervector::bipolar(v.to_vec()).unwrap();
        let (a, b) = (bip(&[1, -1, 1, 1, -1, -1]), bip(&[-1, -1, 1, -1, 1, 1]));
        let job = [(a.clone(), b.clone())];
        for mode in [MappingMode::Spatial, MappingMode::Temporal] {
            let mut sim = ArraySim::<i32>::new(small_cfg(2, 4), SimMode::Functional).unwrap();
            let out = sim.circconv_batch(ConvJob::Data(&job), Some(mode)).unwrap();
            assert_eq!(out.outputs[0], circ_conv(&a, &b).unwrap(), "{mode:?}");
        }
    }

    #[test]
    fn both_modes_match_reference_and_formulas() {
        for (n, m, k, d) in [(2, 4, 3, 10), (3, 8, 5, 8), (4, 4, 2, 3), (1, 4, 2, 9)] {
            let data = pairs(k, d, (n * 1000 + k * 10 + d) as u64);
            let expect: Vec<_> = data.iter().map(|(a, b)| circ_conv(a, b).unwrap()).collect();
            for mode in [MappingMode::Temporal, MappingMode::Spatial] {
                let mut sim = ArraySim::new(small_cfg(n, m), SimMode::Functional).unwrap();
                let res = sim.circconv_batch(ConvJob::Data(&data), Some(mode)).unwrap();
                assert_eq!(res.outputs, expect, "{mode:?} n={n} m={m} k={k} d={d}");
                let formula = match mode {
                    MappingMode::Temporal => latency_temporal(k as u64, d as u64, n as u64, m as u64),
                    MappingMode::Spatial => latency_spatial(k as u64, d as u64, n as u64, m as u64),
                };
                assert_eq!(res.compute_cycles, formula);
                let mut timing = ArraySim::<i32>::new(small_cfg(n, m), SimMode::TimingOnly).unwrap();
                let t = timing.circconv_batch(ConvJob::Shape { k, d }, Some(mode)).unwrap();
                assert_eq!(t.compute_cycles, res.compute_cycles);
                assert_eq!(t.total_cycles, res.total_cycles);
            }
        }
    }

    #[test]
    fn spatial_reduction_is_charged_separately() {
        let mut sim = ArraySim::<i32>::new(small_cfg(4, 8), SimMode::TimingOnly).unwrap();
        let res = sim.circconv_batch(ConvJob::Shape { k: 2, d: 32 }, Some(MappingMode::Spatial)).unwrap();
        assert_eq!(res.reduction_cycles, 2 * 3);
        assert!(res.total_cycles >= res.compute_cycles + 3);
    }

    #[test]
    fn report_conservation() {
        let mut sim = ArraySim::<i32>::new(ArrayConfig::default(), SimMode::TimingOnly).unwrap();
        sim.circconv_batch(ConvJob::Shape { k: 210, d: 1024 }, None).unwrap();
        sim.gemm(256, 512, 196).unwrap();
        sim.simd(SimdOp::Softmax, 4096).unwrap();
        let r = sim.report();
        assert!(r.pe_active_cycles <= r.total_cycles * r.num_pes);
        assert!(r.utilization > 0.0 && r.utilization <= 1.0);
        assert!(r.energy_joules > 0.0);
        assert_eq!(r.per_kernel.values().sum::<u64>(), r.total_cycles);
    }

    #[test]
    fn traffic_grows_monotonically() {
        let mut sim = ArraySim::<i32>::new(ArrayConfig::default(), SimMode::TimingOnly).unwrap();
        let mut last = sim.report();
        for k in [1, 8, 64] {
            sim.circconv_batch(ConvJob::Shape { k, d: 1024 }, None).unwrap();
            let r = sim.report();
            assert!(r.sram_a_reads > last.sram_a_reads && r.sram_b_reads > last.sram_b_reads);
            assert!(r.dram_bytes > last.dram_bytes && r.total_cycles > last.total_cycles);
            last = r;
        }
    }

    #[test]
    fn capacity_error_names_buffer() {
        let cfg = ArrayConfig { sram_b_bytes: 4096, ..ArrayConfig::default() };
        let mut sim = ArraySim::<i32>::new(cfg, SimMode::TimingOnly).unwrap();
        let err = sim.circconv_batch(ConvJob::Shape { k: 64, d: 1024 }, Some(MappingMode::Temporal)).unwrap_err();
        assert!(matches!(err, Error::Capacity { buffer: "SRAM B", .. }), "{err:?}");
    }

    #[test]
    fn trace_uses_cell_coordinates() {
        let cfg = ArrayConfig { num_arrays: 2, pes_per_array: 4, num_cells: 2, cell_rows: 2, cell_cols: 2, ..ArrayConfig::default() };
        let mut sim = ArraySim::new(cfg, SimMode::Functional).unwrap();
        sim.enable_trace();
        let data = pairs(2, 3, 9);
        sim.circconv_batch(ConvJob::Data(&data), Some(MappingMode::Temporal)).unwrap();
        let rows = sim.take_trace();
        assert!(!rows.is_empty());
        assert!(rows.iter().all(|r| r.cell < 2 && r.column < 2 && r.pe < 2));
        assert!(rows.iter().any(|r| r.cell == 1));
    }
}
