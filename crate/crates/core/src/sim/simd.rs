use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::config::{ArrayConfig, SimdLatencies};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimdOp {
    Sum,
    Mult,
    Div,
    Exp,
    Log,
    Tanh,
    Norm,
    Softmax,
    ElemAdd,
    ElemMul,
}

impl SimdOp {
    pub const ALL: [SimdOp; 10] = [
        SimdOp::Sum,
        SimdOp::Mult,
        SimdOp::Div,
        SimdOp::Exp,
        SimdOp::Log,
        SimdOp::Tanh,
        SimdOp::Norm,
        SimdOp::Softmax,
        SimdOp::ElemAdd,
        SimdOp::ElemMul,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SimdOp::Sum => "sum",
            SimdOp::Mult => "mult",
            SimdOp::Div => "div",
            SimdOp::Exp => "exp",
            SimdOp::Log => "log",
            SimdOp::Tanh => "tanh",
            SimdOp::Norm => "norm",
            SimdOp::Softmax => "softmax",
            SimdOp::ElemAdd => "elem_add",
            SimdOp::ElemMul => "elem_mul",
        }
    }

    pub fn latency(self, table: &SimdLatencies) -> u64 {
        match self {
            SimdOp::Sum => table.sum,
            SimdOp::Mult => table.mult,
            SimdOp::Div => table.div,
            SimdOp::Exp => table.exp,
            SimdOp::Log => table.log,
            SimdOp::Tanh => table.tanh,
            SimdOp::Norm => table.norm,
            SimdOp::Softmax => table.softmax,
            SimdOp::ElemAdd => table.elem_add,
            SimdOp::ElemMul => table.elem_mul,
        }
    }
}

impl fmt::Display for SimdOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SimdOp {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        SimdOp::ALL
            .into_iter()
            .find(|op| op.as_str() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown SIMD kind `{s}`")))
    }
}

/// Cycles for `len` elements: one wave per `simd_lanes` elements, each wave
/// costing the kind's latency.
pub fn simd_exec(op: SimdOp, len: u64, cfg: &ArrayConfig) -> Result<u64> {
    if len == 0 {
        return Err(Error::InvalidInput("SIMD length must be at least 1".into()));
    }
    Ok(len.div_ceil(cfg.simd_lanes as u64) * op.latency(&cfg.simd_latency))
}
