use std::collections::{BTreeMap, BinaryHeap};
use std::cmp::Reverse;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::workloads::{OpDims, OpKind, WorkloadSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OpClass {
    Neural,
    Symbolic,
    Simd,
}

impl OpClass {
    pub fn of(kind: OpKind) -> Self {
        if kind.is_neural() {
            OpClass::Neural
        } else if kind.is_simd() {
            OpClass::Simd
        } else {
            OpClass::Symbolic
        }
    }
}

/// One op instance: a template op in one batch, one task copy, one iteration.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OpNode {
    pub uid: usize,
    pub name: String,
    pub op_id: String,
    pub kind: OpKind,
    pub dims: OpDims,
    pub deps: Vec<usize>,
    pub batch: u64,
    pub task: usize,
    pub iteration: u64,
}

impl OpNode {
    pub fn class(&self) -> OpClass {
        OpClass::of(self.kind)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct OpGraph {
    nodes: Vec<OpNode>,
}

impl OpGraph {
    /// Graph from explicit nodes. `uid`s must equal positions.
    pub fn from_nodes(nodes: Vec<OpNode>) -> Result<Self> {
        for (i, n) in nodes.iter().enumerate() {
            if n.uid != i {
                return Err(Error::InvalidInput(format!("node {} has uid {}", i, n.uid)));
            }
            if let Some(&d) = n.deps.iter().find(|&&d| d >= nodes.len()) {
                return Err(Error::InvalidInput(format!("node {} depends on missing node {d}", n.name)));
            }
        }
        let g = Self { nodes };
        if let Some(cycle) = find_cycle(g.nodes.len(), |i| g.nodes[i].deps.clone()) {
            return Err(Error::Cycle(cycle.into_iter().map(|i| g.nodes[i].name.clone()).collect()));
        }
        Ok(g)
    }

    pub fn nodes(&self) -> &[OpNode] {
        &self.nodes
    }

    pub fn node(&self, uid: usize) -> &OpNode {
        &self.nodes[uid]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Topological order, lowest uid first among ready nodes.
    pub fn topo_order(&self) -> Vec<usize> {
        let mut indeg: Vec<usize> = self.nodes.iter().map(|n| n.deps.len()).collect();
        let mut users = vec![Vec::new(); self.nodes.len()];
        for n in &self.nodes {
            for &d in &n.deps {
                users[d].push(n.uid);
            }
        }
        let mut heap: BinaryHeap<Reverse<usize>> =
            indeg.iter().enumerate().filter(|(_, &d)| d == 0).map(|(i, _)| Reverse(i)).collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(Reverse(i)) = heap.pop() {
            order.push(i);
            for &u in &users[i] {
                indeg[u] -= 1;
                if indeg[u] == 0 {
                    heap.push(Reverse(u));
                }
            }
        }
        order
    }
}

/// Returns the members of some cycle, in dependency order, if one exists.
fn find_cycle(n: usize, deps: impl Fn(usize) -> Vec<usize>) -> Option<Vec<usize>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Open,
        Done,
    }
    let mut mark = vec![Mark::New; n];
    for root in 0..n {
        if mark[root] != Mark::New {
            continue;
        }
        // iterative DFS keeping the open path
        let mut path: Vec<(usize, Vec<usize>)> = vec![(root, deps(root))];
        mark[root] = Mark::Open;
        while let Some((node, pending)) = path.last_mut() {
            let node = *node;
            match pending.pop() {
                Some(next) => match mark[next] {
                    Mark::New => {
                        mark[next] = Mark::Open;
                        let nd = deps(next);
                        path.push((next, nd));
                    }
                    Mark::Open => {
                        let start = path.iter().position(|(v, _)| *v == next).expect("open node is on path");
                        return Some(path[start..].iter().map(|(v, _)| *v).collect());
                    }
                    Mark::Done => {}
                },
                None => {
                    mark[node] = Mark::Done;
                    path.pop();
                }
            }
        }
    }
    None
}

/// Expands a workload into op instances.
///
/// Every batch gets its own copy of every task. An op with `iterations > 1`
/// becomes a chain of instances; dependants wait for the last one.
pub fn build_opgraph(spec: &WorkloadSpec) -> Result<OpGraph> {
    spec.validate()?;
    for task in &spec.tasks {
        let index: BTreeMap<&str, usize> = task.ops.iter().enumerate().map(|(i, o)| (o.id.as_str(), i)).collect();
        let deps_of = |i: usize| task.ops[i].deps.iter().map(|d| index[d.as_str()]).collect::<Vec<_>>();
        if let Some(cycle) = find_cycle(task.ops.len(), deps_of) {
            return Err(Error::Cycle(cycle.into_iter().map(|i| task.ops[i].id.clone()).collect()));
        }
    }

    let mut nodes: Vec<OpNode> = Vec::new();
    for batch in 0..spec.batches {
        for (t, task) in spec.tasks.iter().enumerate() {
            let index: BTreeMap<&str, usize> = task.ops.iter().enumerate().map(|(i, o)| (o.id.as_str(), i)).collect();
            // place ops in dependency order so deps already have uids
            let order = {
                let sub = OpGraph {
                    nodes: task
                        .ops
                        .iter()
                        .enumerate()
                        .map(|(i, o)| OpNode {
                            uid: i,
                            name: o.id.clone(),
                            op_id: o.id.clone(),
                            kind: o.kind,
                            dims: o.dims,
                            deps: o.deps.iter().map(|d| index[d.as_str()]).collect(),
                            batch,
                            task: t,
                            iteration: 0,
                        })
                        .collect(),
                };
                sub.topo_order()
            };
            let mut last_uid = vec![usize::MAX; task.ops.len()];
            for i in order {
                let op = &task.ops[i];
                let dep_uids: Vec<usize> = op.deps.iter().map(|d| last_uid[index[d.as_str()]]).collect();
                for it in 0..op.iterations {
                    let uid = nodes.len();
                    let mut name = format!("b{batch}.t{t}.{}", op.id);
                    if op.iterations > 1 {
                        name.push_str(&format!("#{it}"));
                    }
                    let deps = if it == 0 { dep_uids.clone() } else { vec![uid - 1] };
                    nodes.push(OpNode {
                        uid,
                        name,
                        op_id: op.id.clone(),
                        kind: op.kind,
                        dims: op.dims,
                        deps,
                        batch,
                        task: t,
                        iteration: it,
                    });
                }
                last_uid[i] = nodes.len() - 1;
            }
        }
    }
    Ok(OpGraph { nodes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::precision::PrecisionMode;
    use crate::workloads::{generate_builtin, BindingModel, Builtin, BuiltinParams, OpSpec, TaskTemplate};

    fn spec_with(ops: Vec<OpSpec>) -> WorkloadSpec {
        WorkloadSpec {
            name: "t".into(),
            binding_model: BindingModel::Circular,
            precision: PrecisionMode::Fp32,
            batches: 1,
            tasks: vec![TaskTemplate { ops }],
        }
    }

    fn gemm(id: &str, deps: &[&str]) -> OpSpec {
        OpSpec {
            id: id.into(),
            kind: OpKind::Gemm,
            dims: OpDims::Matrix { r: 4, c: 4, k: 4 },
            deps: deps.iter().map(|s| s.to_string()).collect(),
            iterations: 1,
        }
    }

    #[test]
    fn empty_workload_empty_graph() {
        let spec = WorkloadSpec { tasks: vec![], ..spec_with(vec![]) };
        assert!(build_opgraph(&spec).unwrap().is_empty());
    }

    #[test]
    fn cycle_is_reported_by_name() {
        let spec = spec_with(vec![gemm("a", &["b"]), gemm("b", &["a"]), gemm("c", &[])]);
        match build_opgraph(&spec) {
            Err(Error::Cycle(mut ids)) => {
                ids.sort();
                assert_eq!(ids, vec!["a", "b"]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn iterations_chain() {
        let mut op = gemm("a", &[]);
        op.iterations = 3;
        let spec = spec_with(vec![op, gemm("b", &["a"])]);
        let g = build_opgraph(&spec).unwrap();
        assert_eq!(g.len(), 4);
        assert_eq!(g.node(1).deps, vec![0]);
        assert_eq!(g.node(2).deps, vec![1]);
        assert_eq!(g.node(3).deps, vec![2]);
        assert_eq!(g.node(2).name, "b0.t0.a#2");
    }

    #[test]
    fn forward_references_resolve() {
        let spec = spec_with(vec![gemm("late", &["early"]), gemm("early", &[])]);
        let g = build_opgraph(&spec).unwrap();
        assert_eq!(g.node(0).op_id, "early");
        assert_eq!(g.node(1).deps, vec![0]);
    }

    #[test]
    fn three_task_generator_gives_isomorphic_subgraphs() {
        let spec = generate_builtin(Builtin::NvsaLike, BuiltinParams { scale: 3, ..Default::default() }).unwrap();
        let g = build_opgraph(&spec).unwrap();
        let per = spec.tasks[0].ops.len();
        assert_eq!(g.len(), 3 * per);
        for t in 0..3 {
            let nodes: Vec<&OpNode> = g.nodes().iter().filter(|n| n.task == t).collect();
            assert_eq!(nodes.len(), per);
            for n in &nodes {
                assert!(n.deps.iter().all(|&d| g.node(d).task == t));
                let template = g.node(n.uid - t * per);
                assert_eq!((n.kind, n.dims, &n.op_id), (template.kind, template.dims, &template.op_id));
                let shifted: Vec<usize> = template.deps.iter().map(|d| d + t * per).collect();
                assert_eq!(n.deps, shifted);
            }
            let bind = nodes.iter().find(|n| n.kind == OpKind::Circconv).unwrap();
            let mut stack = bind.deps.clone();
            let mut reaches_neural = false;
            while let Some(d) = stack.pop() {
                reaches_neural |= g.node(d).class() == OpClass::Neural;
                stack.extend(g.node(d).deps.iter());
            }
            assert!(reaches_neural);
        }
    }

    #[test]
    fn from_nodes_rejects_cycles() {
        let mk = |uid: usize, deps: Vec<usize>| OpNode {
            uid,
            name: format!("n{uid}"),
            op_id: format!("n{uid}"),
            kind: OpKind::Gemm,
            dims: OpDims::Matrix { r: 1, c: 1, k: 1 },
            deps,
            batch: 0,
            task: 0,
            iteration: 0,
        };
        assert!(OpGraph::from_nodes(vec![mk(0, vec![]), mk(1, vec![0])]).is_ok());
        assert!(matches!(OpGraph::from_nodes(vec![mk(0, vec![1]), mk(1, vec![0])]), Err(Error::Cycle(_))));
    }
}
