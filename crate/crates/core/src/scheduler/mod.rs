//! Offline scheduling of workload op graphs onto cells and the SIMD unit.

pub mod estimate;
pub mod graph;
pub mod schedule;
pub mod simulate;

pub use estimate::{estimate, Estimate};
pub use graph::{build_opgraph, OpClass, OpGraph, OpNode};
pub use schedule::{
    greedy_schedule, sequential_schedule, stats, validate, write_gantt_csv, GanttRow, Policy, Schedule,
    ScheduleEntry, ScheduleStats, Violation, CANDIDATE_BUDGET,
};
pub use simulate::{simulate_graph, SimulateOptions};
