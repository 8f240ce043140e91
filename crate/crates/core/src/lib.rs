//! Cycle-level modelling of a neurosymbolic accelerator: vector-symbolic
//! primitives, a resonator factorizer, a bubble-streaming PE array
//! simulator, dataflow mapping and a heterogeneous op scheduler.

pub mod error;
pub mod factorizer;
pub mod mapping;
pub mod precision;
pub mod rng;
pub mod scheduler;
pub mod sim;
pub mod vsa;
pub mod workloads;

pub use error::{Error, Result};
pub use factorizer::{accuracy_eval, factorize, random_codebooks, AccuracyReport, FactorizerParams, FactorizerResult};
pub use mapping::{choose_mapping, choose_scale, MappingDecision, MappingMode, ScaleScheme};
pub use precision::{PrecisionMode, QuantScheme};
pub use scheduler::{build_opgraph, greedy_schedule, sequential_schedule, OpGraph, Schedule};
pub use sim::{ArrayConfig, ArraySim, CycleReport, SimMode};
pub use vsa::{circ_conv, circ_corr, Codebook, Hypervector};
pub use workloads::{generate_builtin, parse_workload, Builtin, BuiltinParams, WorkloadSpec};
