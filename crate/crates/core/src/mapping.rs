//! Analytical latency and bandwidth models for spatial and temporal
//! mapping of circular convolutions, scale-scheme selection and roofline
//! arithmetic intensity.
//!
//! Symbols follow the usual array notation: `k` convolutions of dimension
//! `d` run on `n` logical arrays of `m` PEs each. `T` is the latency of one
//! fold tile on one array.

use serde::{Deserialize, Serialize};

/// How a batch of convolutions is laid out over the logical arrays.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MappingMode {
    /// One convolution at a time, its folds spread over the arrays.
    Spatial,
    /// Up to `n` convolutions at a time, each folded over one array.
    Temporal,
}

impl MappingMode {
    pub fn other(self) -> Self {
        match self {
            Self::Spatial => Self::Temporal,
            Self::Temporal => Self::Spatial,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MappingDecision {
    pub mode: MappingMode,
    pub latency_cycles: u64,
    pub mem_reads_per_t: u64,
    /// Fold tiles per convolution, `⌈d/m⌉`.
    pub folds: u64,
    /// Convolutions in flight at once.
    pub parallel_convs: u64,
    pub tile_latency: u64,
    /// Elements read per cycle by the chosen mode.
    pub bandwidth_per_cycle: f64,
    /// Set when the chosen mode needs more bandwidth than the limit allows
    /// and no feasible alternative exists.
    pub bandwidth_warning: bool,
    /// Latency of the mode that was not chosen.
    pub alternative_latency: u64,
}

pub fn div_ceil(a: u64, b: u64) -> u64 {
    a.div_ceil(b)
}

/// `T = 3m + d - 1`: `m` load cycles, `2m` fill and drain, `d - 1` streaming.
pub fn tile_latency(d: u64, m: u64) -> u64 {
    3 * m + d - 1
}

pub fn latency_spatial(k: u64, d: u64, n: u64, m: u64) -> u64 {
    k * div_ceil(d, n * m) * tile_latency(d, m)
}

pub fn latency_temporal(k: u64, d: u64, n: u64, m: u64) -> u64 {
    div_ceil(k, n) * div_ceil(d, m) * tile_latency(d, m)
}

pub fn latency(mode: MappingMode, k: u64, d: u64, n: u64, m: u64) -> u64 {
    match mode {
        MappingMode::Spatial => latency_spatial(k, d, n, m),
        MappingMode::Temporal => latency_temporal(k, d, n, m),
    }
}

/// Operand reads per `T` cycles at full utilization.
pub fn mem_reads(mode: MappingMode, d: u64, n: u64, m: u64) -> u64 {
    match mode {
        MappingMode::Spatial => 2 * d,
        MappingMode::Temporal => (d + m) * n,
    }
}

fn decision(mode: MappingMode, k: u64, d: u64, n: u64, m: u64) -> MappingDecision {
    let t = tile_latency(d, m);
    let reads = mem_reads(mode, d, n, m);
    MappingDecision {
        mode,
        latency_cycles: latency(mode, k, d, n, m),
        mem_reads_per_t: reads,
        folds: div_ceil(d, m),
        parallel_convs: match mode {
            MappingMode::Spatial => 1,
            MappingMode::Temporal => k.min(n),
        },
        tile_latency: t,
        bandwidth_per_cycle: reads as f64 / t as f64,
        bandwidth_warning: false,
        alternative_latency: latency(mode.other(), k, d, n, m),
    }
}

/// Adaptive choice between the two modes.
///
/// Lower latency wins, ties go to fewer reads. With a `bandwidth_limit`
/// (elements per cycle) a winner that exceeds it is swapped for the other
/// mode when that one fits; otherwise the winner is kept and flagged.
pub fn choose_mapping(
    k: u64,
    d: u64,
    n: u64,
    m: u64,
    bandwidth_limit: Option<f64>,
) -> MappingDecision {
    let s = decision(MappingMode::Spatial, k, d, n, m);
    let t = decision(MappingMode::Temporal, k, d, n, m);
    let (mut best, other) = match s.latency_cycles.cmp(&t.latency_cycles) {
        std::cmp::Ordering::Less => (s, t),
        std::cmp::Ordering::Greater => (t, s),
        std::cmp::Ordering::Equal => {
            if t.mem_reads_per_t < s.mem_reads_per_t {
                (t, s)
            } else {
                (s, t)
            }
        }
    };
    if let Some(limit) = bandwidth_limit {
        if best.bandwidth_per_cycle > limit {
            if other.bandwidth_per_cycle <= limit {
                best = other;
            } else {
                best.bandwidth_warning = true;
            }
        }
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RooflineKind {
    BsDataflow,
    GemvGpu,
}

/// FLOPs per element transferred for one `d`-dimensional circular
/// convolution.
pub fn roofline_ai(kind: RooflineKind, d: u64) -> f64 {
    let d = d as f64;
    let flops = d * (d + d - 1.0);
    match kind {
        RooflineKind::BsDataflow => flops / (3.0 * d),
        RooflineKind::GemvGpu => flops / (d * d + 2.0 * d),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleScheme {
    ScaleUpGemm,
    ScaleOutGemm,
    ScaleUpConv,
    ScaleOutConv,
    ScaleOutGemmConv,
}

impl ScaleScheme {
    pub fn is_scale_up(self) -> bool {
        matches!(self, Self::ScaleUpGemm | Self::ScaleUpConv)
    }
}

/// Shape summary used to pick a scale scheme.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpShape {
    Gemm { r: u64, c: u64, k: u64 },
    CircConv { k: u64, d: u64 },
    /// A ready set holding both neural and symbolic work.
    Mixed,
}

/// Geometry needed by [`choose_scale`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ScaleGeometry {
    pub num_arrays: u64,
    pub pes_per_array: u64,
    pub cell_rows: u64,
    pub cell_cols: u64,
    pub num_cells: u64,
}

/// GEMM cycles when all cells form square blocks of `s × s` cells, each
/// block acting as one `32s`-sized weight-stationary array.
pub fn gemm_block_latency(
    r: u64,
    c: u64,
    k: u64,
    cells: u64,
    cell_dim: u64,
    block: u64,
) -> u64 {
    let m = cell_dim * block;
    let replicas = (cells / (block * block)).max(1);
    let tiles = div_ceil(r, m) * div_ceil(c, m);
    div_ceil(tiles, replicas) * (3 * m + k - 1)
}

/// Largest `s` with `s * s <= cells`.
pub fn max_block(cells: u64) -> u64 {
    let mut s = 1;
    while (s + 1) * (s + 1) <= cells {
        s += 1;
    }
    s
}

pub fn choose_scale(op: OpShape, g: ScaleGeometry) -> ScaleScheme {
    match op {
        OpShape::Mixed => ScaleScheme::ScaleOutGemmConv,
        OpShape::CircConv { d, .. } => {
            if d > g.pes_per_array || d * 2 >= g.num_arrays * g.pes_per_array {
                ScaleScheme::ScaleUpConv
            } else {
                ScaleScheme::ScaleOutConv
            }
        }
        OpShape::Gemm { r, c, k } => {
            let cell = g.cell_rows.min(g.cell_cols);
            if r < cell || c < cell || k < cell {
                return ScaleScheme::ScaleOutGemm;
            }
            let big = g.num_arrays * g.pes_per_array;
            if r >= big && c >= big && k >= big {
                return ScaleScheme::ScaleUpGemm;
            }
            let out = gemm_block_latency(r, c, k, g.num_cells, cell, 1);
            let up = gemm_block_latency(r, c, k, g.num_cells, cell, max_block(g.num_cells));
            if up < out {
                ScaleScheme::ScaleUpGemm
            } else {
                ScaleScheme::ScaleOutGemm
            }
        }
    }
}
