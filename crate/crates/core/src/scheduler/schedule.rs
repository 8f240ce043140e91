use std::cmp::Reverse;
use std::collections::HashMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scheduler::estimate::{estimate, Estimate};
use crate::scheduler::graph::{OpClass, OpGraph};
use crate::sim::ArrayConfig;
use crate::workloads::OpDims;

/// Upper bound on (op, placement) pairs evaluated per scheduling step.
pub const CANDIDATE_BUDGET: usize = 1000;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ScheduleEntry {
    pub node: usize,
    pub name: String,
    pub batch: u64,
    pub class: OpClass,
    /// Cells held; empty for ops on the SIMD unit.
    pub cells: Vec<usize>,
    pub simd: bool,
    pub start: u64,
    pub end: u64,
    pub scheme: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    Greedy,
    Sequential,
    /// Greedy placement lost to the sequential order, which was kept.
    GreedyFellBack,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Schedule {
    pub policy: Policy,
    pub entries: Vec<ScheduleEntry>,
    pub makespan: u64,
    pub num_cells: usize,
    pub cell_busy: Vec<u64>,
    pub simd_busy: u64,
    /// Largest number of candidates evaluated in one step.
    pub max_candidates_per_step: usize,
}

impl Schedule {
    fn from_entries(policy: Policy, mut entries: Vec<ScheduleEntry>, num_cells: usize, max_candidates: usize) -> Self {
        entries.sort_by_key(|e| (e.start, e.node));
        let mut cell_busy = vec![0; num_cells];
        let mut simd_busy = 0;
        for e in &entries {
            let len = e.end - e.start;
            if e.simd {
                simd_busy += len;
            }
            for &c in &e.cells {
                cell_busy[c] += len;
            }
        }
        let makespan = entries.iter().map(|e| e.end).max().unwrap_or(0);
        Self { policy, entries, makespan, num_cells, cell_busy, simd_busy, max_candidates_per_step: max_candidates }
    }
}

/// Per-node runtimes for every cell count, shared by both schedulers.
struct Costs {
    /// `table[node][c - 1]` for array ops; a single entry for SIMD ops.
    table: Vec<Vec<Estimate>>,
    /// Smallest cell count reaching the minimum runtime.
    best_cells: Vec<usize>,
}

impl Costs {
    fn new(graph: &OpGraph, cfg: &ArrayConfig) -> Result<Self> {
        let cells = cfg.num_cells;
        let mut memo: HashMap<OpDims, (Vec<Estimate>, usize)> = HashMap::new();
        let mut table = Vec::with_capacity(graph.len());
        let mut best_cells = Vec::with_capacity(graph.len());
        for node in graph.nodes() {
            if !memo.contains_key(&node.dims) {
                let entry = if node.class() == OpClass::Simd {
                    (vec![estimate(&node.dims, 0, cfg)?], 0)
                } else {
                    let mut row = Vec::with_capacity(cells);
                    for c in 1..=cells {
                        match estimate(&node.dims, c as u64, cfg) {
                            Ok(e) => row.push(e),
                            Err(e) if e.is_resource_error() && c < cells => {
                                row.push(Estimate { cycles: u64::MAX, scheme: None, arrays: None, mode: None, block: None })
                            }
                            Err(Error::Infeasible(msg)) => return Err(Error::Infeasible(format!("{}: {msg}", node.name))),
                            Err(e) => return Err(e),
                        }
                    }
                    let min = row.iter().map(|e| e.cycles).min().expect("at least one cell");
                    let best = row.iter().position(|e| e.cycles == min).expect("minimum exists") + 1;
                    (row, best)
                };
                memo.insert(node.dims, entry);
            }
            let (row, best) = &memo[&node.dims];
            table.push(row.clone());
            best_cells.push(*best);
        }
        Ok(Self { table, best_cells })
    }

    fn on(&self, node: usize, cells: usize) -> &Estimate {
        if self.table[node].len() == 1 && self.best_cells[node] == 0 {
            &self.table[node][0]
        } else {
            &self.table[node][cells - 1]
        }
    }

    fn best(&self, node: usize) -> u64 {
        self.on(node, self.best_cells[node].max(1)).cycles
    }
}

fn scheme_label(e: &Estimate, simd: bool) -> String {
    if simd {
        return "simd".into();
    }
    let mut s = match e.scheme {
        Some(sc) => serde_json::to_value(sc).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
        None => String::new(),
    };
    if let (Some((n, m)), Some(mode)) = (e.arrays, e.mode) {
        let mode = if mode == crate::mapping::MappingMode::Spatial { "spatial" } else { "temporal" };
        s.push_str(&format!(" {mode} N={n} M={m}"));
    }
    if let Some(b) = e.block {
        s.push_str(&format!(" block={b}x{b}"));
    }
    s
}

/// One op at a time in topological order, each on its best allocation.
pub fn sequential_schedule(graph: &OpGraph, cfg: &ArrayConfig) -> Result<Schedule> {
    cfg.validate()?;
    let costs = Costs::new(graph, cfg)?;
    Ok(sequential_with(graph, &costs, cfg.num_cells))
}

fn sequential_with(graph: &OpGraph, costs: &Costs, num_cells: usize) -> Schedule {
    let mut t = 0;
    let mut entries = Vec::with_capacity(graph.len());
    for uid in graph.topo_order() {
        let node = graph.node(uid);
        let simd = node.class() == OpClass::Simd;
        let cells = costs.best_cells[uid];
        let est = costs.on(uid, cells.max(1));
        entries.push(ScheduleEntry {
            node: uid,
            name: node.name.clone(),
            batch: node.batch,
            class: node.class(),
            cells: (0..cells).collect(),
            simd,
            start: t,
            end: t + est.cycles,
            scheme: scheme_label(est, simd),
        });
        t += est.cycles;
    }
    Schedule::from_entries(Policy::Sequential, entries, num_cells, 1)
}

/// Event-driven list scheduling over cells and the SIMD unit.
///
/// At each event the ready ops are ranked: neural ops whose best block has
/// at least 2×2 cells first, then earlier batch, then longest runtime, then
/// uid. Each op takes the free cell count that finishes it earliest (fewest
/// cells on ties). A neural op instead stays in the ready set if waiting for
/// its ideal block would finish it sooner. A symbolic op runs on the idle
/// cells whenever they are at least a quarter of its ideal block and finish
/// it within 3× of the best wait, which lets the previous batch's symbolic
/// work fill gaps left by the current batch's neural layers.
///
/// The sequential order is returned instead if it has a shorter makespan.
pub fn greedy_schedule(graph: &OpGraph, cfg: &ArrayConfig) -> Result<Schedule> {
    cfg.validate()?;
    let costs = Costs::new(graph, cfg)?;
    let greedy = greedy_with(graph, &costs, cfg.num_cells)?;
    let seq = sequential_with(graph, &costs, cfg.num_cells);
    if seq.makespan < greedy.makespan {
        let mut s = seq;
        s.policy = Policy::GreedyFellBack;
        s.max_candidates_per_step = greedy.max_candidates_per_step;
        return Ok(s);
    }
    Ok(greedy)
}

fn greedy_with(graph: &OpGraph, costs: &Costs, num_cells: usize) -> Result<Schedule> {
    let n = graph.len();
    let mut users = vec![Vec::new(); n];
    for node in graph.nodes() {
        for &d in &node.deps {
            users[d].push(node.uid);
        }
    }
    let mut pending_deps: Vec<usize> = graph.nodes().iter().map(|x| x.deps.len()).collect();
    let mut ready_at: Vec<u64> = vec![0; n];
    let mut released: Vec<usize> = (0..n).filter(|&i| pending_deps[i] == 0).collect();
    let mut placed = vec![false; n];
    let mut cell_free = vec![0u64; num_cells];
    let mut simd_free = 0u64;
    let mut entries = Vec::with_capacity(n);
    let mut max_candidates = 0;
    let mut t = 0u64;

    let rank = |uid: usize| {
        let node = graph.node(uid);
        let big_neural = node.class() == OpClass::Neural && costs.best_cells[uid] >= 4;
        (if big_neural { 0 } else { 1 }, node.batch, Reverse(costs.best(uid)), uid)
    };

    while entries.len() < n {
        let mut ready: Vec<usize> = released.iter().copied().filter(|&u| !placed[u] && ready_at[u] <= t).collect();
        ready.sort_by_key(|&u| rank(u));
        let mut candidates = 0;
        let mut newly_placed = Vec::new();

        for uid in ready {
            let node = graph.node(uid);
            if node.class() == OpClass::Simd {
                candidates += 1;
                if simd_free <= t {
                    let est = costs.on(uid, 1);
                    simd_free = t + est.cycles;
                    entries.push(ScheduleEntry {
                        node: uid,
                        name: node.name.clone(),
                        batch: node.batch,
                        class: node.class(),
                        cells: vec![],
                        simd: true,
                        start: t,
                        end: t + est.cycles,
                        scheme: scheme_label(est, true),
                    });
                    newly_placed.push(uid);
                }
                continue;
            }
            let free: Vec<usize> = (0..num_cells).filter(|&c| cell_free[c] <= t).collect();
            if free.is_empty() {
                continue;
            }
            if candidates + free.len() + 1 > CANDIDATE_BUDGET - 1 {
                break;
            }
            candidates += free.len() + 1;

            let (now_cells, now_end) = (1..=free.len())
                .map(|c| (c, t.saturating_add(costs.on(uid, c).cycles)))
                .min_by_key(|&(c, end)| (end, c))
                .expect("free cells exist");
            let ideal = costs.best_cells[uid];
            let mut avail: Vec<u64> = cell_free.iter().map(|&f| f.max(t)).collect();
            avail.sort_unstable();
            let wait_end = if node.class() == OpClass::Symbolic {
                // symbolic ops fill idle cells unless the block is tiny or
                // much slower than waiting
                let best_wait = (1..=num_cells)
                    .map(|j| avail[j - 1].saturating_add(costs.on(uid, j).cycles))
                    .min()
                    .expect("at least one cell");
                if now_cells * 4 >= ideal && now_end - t <= 3 * (best_wait - t) {
                    u64::MAX
                } else {
                    best_wait
                }
            } else {
                avail[ideal - 1].saturating_add(costs.best(uid))
            };
            if wait_end < now_end {
                continue;
            }
            let cells: Vec<usize> = free[..now_cells].to_vec();
            for &c in &cells {
                cell_free[c] = now_end;
            }
            let est = costs.on(uid, now_cells);
            entries.push(ScheduleEntry {
                node: uid,
                name: node.name.clone(),
                batch: node.batch,
                class: node.class(),
                cells,
                simd: false,
                start: t,
                end: now_end,
                scheme: scheme_label(est, false),
            });
            newly_placed.push(uid);
        }
        max_candidates = max_candidates.max(candidates);

        for uid in newly_placed {
            placed[uid] = true;
            let end = entries.iter().rev().find(|e| e.node == uid).map(|e| e.end).expect("just placed");
            for &u in &users[uid] {
                pending_deps[u] -= 1;
                ready_at[u] = ready_at[u].max(end);
                if pending_deps[u] == 0 {
                    released.push(u);
                }
            }
        }
        released.retain(|&u| !placed[u]);
        if entries.len() == n {
            break;
        }

        let next = cell_free
            .iter()
            .copied()
            .chain(std::iter::once(simd_free))
            .chain(released.iter().map(|&u| ready_at[u]))
            .filter(|&x| x > t)
            .min();
        match next {
            Some(x) => t = x,
            None => return Err(Error::Infeasible("scheduler made no progress".into())),
        }
    }
    Ok(Schedule::from_entries(Policy::Greedy, entries, num_cells, max_candidates))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    Overlap { resource: String, first: String, second: String },
    Dependency { node: String, dep: String },
    Missing { node: String },
    Duplicate { node: String },
    UnknownNode { node: usize },
    BadInterval { node: String },
    NoResource { node: String },
}

/// Checks resource overlap, dependency order and completeness.
pub fn validate(schedule: &Schedule, graph: &OpGraph) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut seen: Vec<Option<&ScheduleEntry>> = vec![None; graph.len()];
    for e in &schedule.entries {
        if e.node >= graph.len() {
            out.push(Violation::UnknownNode { node: e.node });
            continue;
        }
        if e.end < e.start {
            out.push(Violation::BadInterval { node: e.name.clone() });
        }
        if e.cells.is_empty() && !e.simd {
            out.push(Violation::NoResource { node: e.name.clone() });
        }
        if seen[e.node].is_some() {
            out.push(Violation::Duplicate { node: e.name.clone() });
        } else {
            seen[e.node] = Some(e);
        }
    }
    for (uid, s) in seen.iter().enumerate() {
        match s {
            None => out.push(Violation::Missing { node: graph.node(uid).name.clone() }),
            Some(e) => {
                for &d in &graph.node(uid).deps {
                    if let Some(de) = seen[d] {
                        if e.start < de.end {
                            out.push(Violation::Dependency { node: e.name.clone(), dep: de.name.clone() });
                        }
                    }
                }
            }
        }
    }

    let mut per_resource: Vec<Vec<&ScheduleEntry>> = vec![Vec::new(); schedule.num_cells + 1];
    for e in &schedule.entries {
        if e.simd {
            per_resource[schedule.num_cells].push(e);
        }
        for &c in &e.cells {
            if c < schedule.num_cells {
                per_resource[c].push(e);
            } else {
                out.push(Violation::NoResource { node: e.name.clone() });
            }
        }
    }
    for (r, list) in per_resource.iter_mut().enumerate() {
        list.sort_by_key(|e| (e.start, e.end));
        for w in list.windows(2) {
            if w[1].start < w[0].end {
                let resource = if r == schedule.num_cells { "simd".to_string() } else { format!("cell {r}") };
                out.push(Violation::Overlap { resource, first: w[0].name.clone(), second: w[1].name.clone() });
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GanttRow {
    pub op: String,
    pub cells: String,
    pub start: u64,
    pub end: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScheduleStats {
    pub policy: Policy,
    pub makespan: u64,
    pub cell_utilization: Vec<f64>,
    pub mean_utilization: f64,
    pub simd_utilization: f64,
    pub max_candidates_per_step: usize,
    #[serde(skip)]
    pub gantt: Vec<GanttRow>,
}

pub fn stats(schedule: &Schedule) -> ScheduleStats {
    let span = schedule.makespan as f64;
    let frac = |busy: u64| if span > 0.0 { busy as f64 / span } else { 0.0 };
    let cell_utilization: Vec<f64> = schedule.cell_busy.iter().map(|&b| frac(b)).collect();
    let mean = if cell_utilization.is_empty() {
        0.0
    } else {
        cell_utilization.iter().sum::<f64>() / cell_utilization.len() as f64
    };
    let gantt = schedule
        .entries
        .iter()
        .map(|e| GanttRow {
            op: e.name.clone(),
            cells: if e.simd {
                "simd".into()
            } else {
                e.cells.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(";")
            },
            start: e.start,
            end: e.end,
        })
        .collect();
    ScheduleStats {
        policy: schedule.policy,
        makespan: schedule.makespan,
        cell_utilization,
        mean_utilization: mean,
        simd_utilization: frac(schedule.simd_busy),
        max_candidates_per_step: schedule.max_candidates_per_step,
        gantt,
    }
}

pub fn write_gantt_csv<W: std::io::Write>(rows: &[GanttRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Error::InvalidInput(format!("gantt output: {e}")))?;
    }
    w.flush().map_err(|e| Error::InvalidInput(format!("gantt output: {e}")))
}
