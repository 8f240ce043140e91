//! Analytical runtime of one op on a given number of cells.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mapping::{choose_mapping, gemm_block_latency, max_block, MappingMode, ScaleScheme};
use crate::sim::{account_memory, simd_exec, ArrayConfig, RoundTraffic, SimdOp};
use crate::workloads::OpDims;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Estimate {
    pub cycles: u64,
    pub scheme: Option<ScaleScheme>,
    /// Logical arrays and PEs per array for a convolution.
    pub arrays: Option<(u64, u64)>,
    pub mode: Option<MappingMode>,
    /// Side of the square cell block for a GEMM.
    pub block: Option<u64>,
}

impl Estimate {
    fn plain(cycles: u64) -> Self {
        Self { cycles, scheme: None, arrays: None, mode: None, block: None }
    }
}

/// Whether one round of `mode` fits the buffers.
fn fits(mode: MappingMode, k: u64, d: u64, n: u64, m: u64, cfg: &ArrayConfig) -> bool {
    let m_used = m.min(d);
    let round = match mode {
        MappingMode::Spatial => {
            let stationary = d.min(n * m);
            RoundTraffic {
                stationary_elems: stationary,
                stream_elems: d,
                resident_stream_elems: d,
                fetch_a_elems: stationary,
                fetch_b_elems: d,
                output_elems: d,
                t_cycles: 1,
            }
        }
        MappingMode::Temporal => {
            let active = k.min(n);
            RoundTraffic {
                stationary_elems: active * m_used,
                stream_elems: active * d,
                resident_stream_elems: active * d,
                fetch_a_elems: active * m_used,
                fetch_b_elems: active * d,
                output_elems: active * d,
                t_cycles: 1,
            }
        }
    };
    account_memory(&round, cfg).is_ok()
}

/// Best runtime of `dims` on `cells` cells; `cells` is ignored for SIMD ops.
pub fn estimate(dims: &OpDims, cells: u64, cfg: &ArrayConfig) -> Result<Estimate> {
    match *dims {
        OpDims::Elementwise { length } => Ok(Estimate::plain(simd_exec(SimdOp::ElemMul, length, cfg)?)),
        OpDims::Simd { op, length } => Ok(Estimate::plain(simd_exec(op, length, cfg)?)),
        OpDims::Matrix { r, c, k } => {
            if cells == 0 {
                return Err(Error::InvalidInput("GEMM needs at least one cell".into()));
            }
            let cell_dim = cfg.cell_rows.min(cfg.cell_cols) as u64;
            let (cycles, block) = (1..=max_block(cells))
                .map(|s| (gemm_block_latency(r, c, k, cells, cell_dim, s), s))
                .min()
                .expect("at least one block");
            let scheme = if block > 1 { ScaleScheme::ScaleUpGemm } else { ScaleScheme::ScaleOutGemm };
            Ok(Estimate { cycles, scheme: Some(scheme), arrays: None, mode: None, block: Some(block) })
        }
        OpDims::CircConv { k, d } => {
            if cells == 0 {
                return Err(Error::InvalidInput("circular convolution needs at least one cell".into()));
            }
            let rows = cfg.cell_rows as u64;
            let total = cells * rows * cfg.cell_cols as u64;
            let lanes = cfg.simd_lanes as u64;
            let mut best: Option<Estimate> = None;
            let mut m = rows;
            while m <= total {
                if total % m == 0 {
                    let n = total / m;
                    let dec = choose_mapping(k, d, n, m, None);
                    for mode in [dec.mode, dec.mode.other()] {
                        if !fits(mode, k, d, n, m, cfg) {
                            continue;
                        }
                        let folds = d.div_ceil(m);
                        let mut cycles = crate::mapping::latency(mode, k, d, n, m);
                        if mode == MappingMode::Spatial && folds > 1 {
                            // the last convolution's reduction is not hidden
                            cycles += (folds - 1) * d.div_ceil(lanes) * cfg.simd_latency.elem_add;
                        }
                        let scheme = if m > rows { ScaleScheme::ScaleUpConv } else { ScaleScheme::ScaleOutConv };
                        let cand = Estimate { cycles, scheme: Some(scheme), arrays: Some((n, m)), mode: Some(mode), block: None };
                        if best.is_none_or(|b| cand.cycles < b.cycles) {
                            best = Some(cand);
                        }
                    }
                }
                m *= 2;
            }
            best.ok_or_else(|| {
                Error::Infeasible(format!(
                    "circular convolution k={k} d={d} does not fit the buffers on {cells} cells in any mapping"
                ))
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cell_cwp() {
        let cfg = ArrayConfig::default();
        // 32 columns of 32 PEs: 32 convolutions with d ≤ 32 in one tile time
        let e = estimate(&OpDims::CircConv { k: 32, d: 32 }, 1, &cfg).unwrap();
        assert_eq!(e.cycles, 3 * 32 + 32 - 1);
        assert_eq!(e.arrays, Some((32, 32)));
        assert_eq!(e.scheme, Some(ScaleScheme::ScaleOutConv));
    }

    #[test]
    fn nvsa_on_whole_chip() {
        let cfg = ArrayConfig::default();
        let e = estimate(&OpDims::CircConv { k: 210, d: 1024 }, 16, &cfg).unwrap();
        assert_eq!(e.mode, Some(MappingMode::Temporal));
        assert!(e.cycles <= crate::mapping::latency_temporal(210, 1024, 32, 512));
    }

    #[test]
    fn gemm_more_cells_never_slower() {
        let cfg = ArrayConfig::default();
        let dims = OpDims::Matrix { r: 512, c: 2304, k: 49 };
        let mut prev = u64::MAX;
        for cells in 1..=16 {
            let c = estimate(&dims, cells, &cfg).unwrap().cycles;
            assert!(c <= prev);
            prev = c;
        }
    }

    #[test]
    fn oversized_convolution_is_infeasible() {
        let cfg = ArrayConfig { sram_b_bytes: 1024, ..ArrayConfig::default() };
        let err = estimate(&OpDims::CircConv { k: 4, d: 4096 }, 16, &cfg).unwrap_err();
        assert!(err.is_resource_error());
    }
}
