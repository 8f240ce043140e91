use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mapping::ScaleGeometry;
use crate::precision::{PrecisionMode, QuantScheme};

/// Per-event energy in picojoules.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyCoeffs {
    pub mac_pj: f64,
    pub sram_a_access_pj: f64,
    pub sram_b_access_pj: f64,
    pub dram_byte_pj: f64,
    pub simd_op_pj: f64,
}

impl Default for EnergyCoeffs {
    /// Order-of-magnitude 28nm figures for 8-bit datapaths.
    fn default() -> Self {
        Self {
            mac_pj: 0.25,
            sram_a_access_pj: 1.2,
            sram_b_access_pj: 3.5,
            dram_byte_pj: 20.0,
            simd_op_pj: 0.4,
        }
    }
}

impl EnergyCoeffs {
    pub fn zero() -> Self {
        Self { mac_pj: 0.0, sram_a_access_pj: 0.0, sram_b_access_pj: 0.0, dram_byte_pj: 0.0, simd_op_pj: 0.0 }
    }

    fn validate(&self) -> Result<()> {
        let all = [self.mac_pj, self.sram_a_access_pj, self.sram_b_access_pj, self.dram_byte_pj, self.simd_op_pj];
        if all.iter().all(|c| c.is_finite() && *c >= 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidInput("energy coefficients must be finite and non-negative".into()))
        }
    }
}

/// Cycles per SIMD wave for each operation kind.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimdLatencies {
    pub sum: u64,
    pub mult: u64,
    pub div: u64,
    pub exp: u64,
    pub log: u64,
    pub tanh: u64,
    pub norm: u64,
    pub softmax: u64,
    pub elem_add: u64,
    pub elem_mul: u64,
}

impl Default for SimdLatencies {
    fn default() -> Self {
        Self { sum: 1, mult: 1, div: 4, exp: 4, log: 4, tanh: 4, norm: 2, softmax: 2, elem_add: 1, elem_mul: 1 }
    }
}

/// Hardware configuration. Field names match the JSON config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayConfig {
    pub num_arrays: usize,
    pub pes_per_array: usize,
    pub num_cells: usize,
    pub cell_rows: usize,
    pub cell_cols: usize,
    pub simd_lanes: usize,
    pub sram_a_bytes: u64,
    pub sram_b_bytes: u64,
    /// Off-chip bandwidth in bytes per cycle.
    pub dram_bandwidth: f64,
    pub precision: QuantScheme,
    #[serde(default)]
    pub energy_coeffs: EnergyCoeffs,
    #[serde(default)]
    pub simd_latency: SimdLatencies,
}

impl Default for ArrayConfig {
    fn default() -> Self {
        Self {
            num_arrays: 32,
            pes_per_array: 512,
            num_cells: 16,
            cell_rows: 32,
            cell_cols: 32,
            simd_lanes: 512,
            sram_a_bytes: 256 * 1024,
            sram_b_bytes: 4 * 1024 * 1024,
            dram_bandwidth: 64.0,
            precision: QuantScheme { mode: PrecisionMode::Int8Symmetric, scale: 1.0 },
            energy_coeffs: EnergyCoeffs::default(),
            simd_latency: SimdLatencies::default(),
        }
    }
}

impl ArrayConfig {
    pub fn total_pes(&self) -> usize {
        self.num_cells * self.cell_rows * self.cell_cols
    }

    /// Same cells regrouped as `num_arrays` arrays of `pes_per_array` PEs.
    pub fn with_arrays(&self, num_arrays: usize, pes_per_array: usize) -> Result<Self> {
        let cfg = Self { num_arrays, pes_per_array, ..self.clone() };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Array lengths reachable by chaining whole cell columns, shortest first.
    pub fn array_shapes(&self) -> Vec<(usize, usize)> {
        let total = self.total_pes();
        let mut out = Vec::new();
        let mut m = self.cell_rows;
        while m <= total {
            if total % m == 0 {
                out.push((total / m, m));
            }
            m *= 2;
        }
        out
    }

    pub fn geometry(&self) -> ScaleGeometry {
        ScaleGeometry {
            num_arrays: self.num_arrays as u64,
            pes_per_array: self.pes_per_array as u64,
            cell_rows: self.cell_rows as u64,
            cell_cols: self.cell_cols as u64,
            num_cells: self.num_cells as u64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("num_arrays", self.num_arrays),
            ("pes_per_array", self.pes_per_array),
            ("num_cells", self.num_cells),
            ("cell_rows", self.cell_rows),
            ("cell_cols", self.cell_cols),
            ("simd_lanes", self.simd_lanes),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::InvalidInput(format!("{name} must be positive")));
            }
        }
        if self.num_arrays * self.pes_per_array != self.total_pes() {
            return Err(Error::InvalidInput(format!(
                "num_arrays × pes_per_array = {} but the cells hold {} PEs",
                self.num_arrays * self.pes_per_array,
                self.total_pes()
            )));
        }
        if self.sram_a_bytes == 0 || self.sram_b_bytes == 0 {
            return Err(Error::InvalidInput("SRAM sizes must be positive".into()));
        }
        if !(self.dram_bandwidth.is_finite() && self.dram_bandwidth > 0.0) {
            return Err(Error::InvalidInput("dram_bandwidth must be positive".into()));
        }
        self.precision.validate()?;
        self.energy_coeffs.validate()
    }
}
