//! Whole-workload simulation: every op instance in topological order on the
//! whole chip, using the allocation the estimator picks for all cells.

use rand::Rng;

use crate::error::Result;
use crate::rng::{derive_seed, rng_from_seed};
use crate::scheduler::estimate::estimate;
use crate::scheduler::graph::OpGraph;
use crate::sim::{ArrayConfig, ArraySim, ConvJob, CycleReport, SimMode, SimdOp, TraceRow};
use crate::vsa::Hypervector;
use crate::workloads::OpDims;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SimulateOptions {
    /// Run convolutions on random int8 data and record register traces.
    pub trace: bool,
    pub seed: u64,
}

/// Largest convolution batch, in `k·d` elements, simulated with data when
/// tracing.
pub const TRACE_LIMIT: u64 = 1 << 12;

pub fn simulate_graph(graph: &OpGraph, cfg: &ArrayConfig, opts: SimulateOptions) -> Result<(CycleReport, Vec<TraceRow>)> {
    let cells = cfg.num_cells as u64;
    let mut timing = ArraySim::<i32>::new(cfg.clone(), SimMode::TimingOnly)?;
    let mut functional = ArraySim::<i32>::new(cfg.clone(), SimMode::Functional)?;
    if opts.trace {
        functional.enable_trace();
    }
    let mut traced = false;
    for uid in graph.topo_order() {
        let node = graph.node(uid);
        match node.dims {
            OpDims::Matrix { r, c, k } => {
                timing.gemm(r as usize, c as usize, k as usize)?;
            }
            OpDims::Elementwise { length } => {
                timing.simd(SimdOp::ElemMul, length as usize)?;
            }
            OpDims::Simd { op, length } => {
                timing.simd(op, length as usize)?;
            }
            OpDims::CircConv { k, d } => {
                let est = estimate(&node.dims, cells, cfg)?;
                let (n, m) = est.arrays.expect("convolutions map to arrays");
                timing.reshape(n as usize, m as usize)?;
                if opts.trace && !traced && k * d <= TRACE_LIMIT {
                    functional.reshape(n as usize, m as usize)?;
                    let mut rng = rng_from_seed(derive_seed(opts.seed, uid as u64));
                    let vec = |rng: &mut crate::rng::SimRng| {
                        Hypervector::real((0..d).map(|_| rng.random_range(-128..=127)).collect()).expect("d ≥ 1")
                    };
                    let pairs: Vec<_> = (0..k).map(|_| (vec(&mut rng), vec(&mut rng))).collect();
                    functional.circconv_batch(ConvJob::Data(&pairs), est.mode)?;
                    traced = true;
                }
                timing.circconv_batch(ConvJob::Shape { k: k as usize, d: d as usize }, est.mode)?;
            }
        }
    }
    let trace = if opts.trace { functional.take_trace() } else { Vec::new() };
    Ok((timing.take_report(), trace))
}
