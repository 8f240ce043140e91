//! Workload documents and the built-in synthetic generators.
//!
//! A workload is JSON:
//!
//! ```json
//! {"name": "w", "binding_model": "circular", "precision": "int8", "batches": 2,
//!  "tasks": [{"ops": [
//!     {"id": "fc", "kind": "gemm", "dims": {"r": 1024, "c": 512, "k": 1}},
//!     {"id": "bind", "kind": "circconv", "dims": {"k": 210, "d": 1024}, "deps": ["fc"]}
//!  ]}]}
//! ```
//!
//! `gemm` and `conv` take `{r, c, k}`: an `r × c` weight matrix applied to
//! `k` streamed columns (convolutions are given already lowered). `circconv`
//! takes `{k, d}`, `elemwise` takes `{length}` and `simd_special` takes
//! `{op, length}`. `deps` and `iterations` are optional.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::precision::PrecisionMode;
use crate::sim::SimdOp;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    Gemm,
    Conv,
    Circconv,
    Elemwise,
    SimdSpecial,
}

impl OpKind {
    pub const ALL: [OpKind; 5] = [OpKind::Gemm, OpKind::Conv, OpKind::Circconv, OpKind::Elemwise, OpKind::SimdSpecial];

    pub fn as_str(self) -> &'static str {
        match self {
            OpKind::Gemm => "gemm",
            OpKind::Conv => "conv",
            OpKind::Circconv => "circconv",
            OpKind::Elemwise => "elemwise",
            OpKind::SimdSpecial => "simd_special",
        }
    }

    pub fn is_neural(self) -> bool {
        matches!(self, OpKind::Gemm | OpKind::Conv)
    }

    /// Runs on the SIMD unit rather than the PE array.
    pub fn is_simd(self) -> bool {
        matches!(self, OpKind::Elemwise | OpKind::SimdSpecial)
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OpKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        OpKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown op kind `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BindingModel {
    Circular,
    Elementwise,
}

impl BindingModel {
    fn as_str(self) -> &'static str {
        match self {
            BindingModel::Circular => "circular",
            BindingModel::Elementwise => "elementwise",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OpDims {
    Matrix { r: u64, c: u64, k: u64 },
    CircConv { k: u64, d: u64 },
    Elementwise { length: u64 },
    Simd { op: SimdOp, length: u64 },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OpSpec {
    pub id: String,
    pub kind: OpKind,
    pub dims: OpDims,
    pub deps: Vec<String>,
    pub iterations: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TaskTemplate {
    pub ops: Vec<OpSpec>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WorkloadSpec {
    pub name: String,
    pub binding_model: BindingModel,
    pub precision: PrecisionMode,
    pub batches: u64,
    pub tasks: Vec<TaskTemplate>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWorkload {
    name: String,
    binding_model: String,
    precision: String,
    batches: i64,
    tasks: Vec<RawTask>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTask {
    ops: Vec<RawOp>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOp {
    id: String,
    kind: String,
    dims: BTreeMap<String, Value>,
    #[serde(default)]
    deps: Vec<String>,
    #[serde(default = "one")]
    iterations: i64,
}

fn one() -> i64 {
    1
}

fn positive(path: &str, v: i64) -> Result<u64> {
    if v > 0 {
        Ok(v as u64)
    } else {
        Err(Error::workload(path, format!("must be positive, got {v}")))
    }
}

fn dims_of(path: &str, kind: OpKind, raw: &BTreeMap<String, Value>) -> Result<OpDims> {
    let expected: &[&str] = match kind {
        OpKind::Gemm | OpKind::Conv => &["r", "c", "k"],
        OpKind::Circconv => &["k", "d"],
        OpKind::Elemwise => &["length"],
        OpKind::SimdSpecial => &["op", "length"],
    };
    if let Some(extra) = raw.keys().find(|k| !expected.contains(&k.as_str())) {
        return Err(Error::workload(
            format!("{path}.{extra}"),
            format!("not a dimension of {kind} (expected {})", expected.join(", ")),
        ));
    }
    let num = |name: &str| -> Result<u64> {
        let field = format!("{path}.{name}");
        match raw.get(name) {
            None => Err(Error::workload(field, "missing")),
            Some(v) => match v.as_i64() {
                Some(n) => positive(&field, n),
                None => Err(Error::workload(field, format!("expected an integer, got {v}"))),
            },
        }
    };
    Ok(match kind {
        OpKind::Gemm | OpKind::Conv => OpDims::Matrix { r: num("r")?, c: num("c")?, k: num("k")? },
        OpKind::Circconv => OpDims::CircConv { k: num("k")?, d: num("d")? },
        OpKind::Elemwise => OpDims::Elementwise { length: num("length")? },
        OpKind::SimdSpecial => {
            let field = format!("{path}.op");
            let op = match raw.get("op") {
                Some(Value::String(s)) => s.parse::<SimdOp>().map_err(|e| Error::workload(&field, e.to_string()))?,
                Some(v) => return Err(Error::workload(field, format!("expected a string, got {v}"))),
                None => return Err(Error::workload(field, "missing")),
            };
            OpDims::Simd { op, length: num("length")? }
        }
    })
}

fn dims_to_raw(dims: &OpDims) -> BTreeMap<String, Value> {
    let pairs: Vec<(&str, Value)> = match *dims {
        OpDims::Matrix { r, c, k } => vec![("r", r.into()), ("c", c.into()), ("k", k.into())],
        OpDims::CircConv { k, d } => vec![("k", k.into()), ("d", d.into())],
        OpDims::Elementwise { length } => vec![("length", length.into())],
        OpDims::Simd { op, length } => vec![("op", op.as_str().into()), ("length", length.into())],
    };
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

fn syntax(e: serde_json::Error) -> Error {
    Error::Syntax { line: e.line(), column: e.column(), message: e.to_string() }
}

impl WorkloadSpec {
    /// Checks ids, dependency references and binding-model consistency.
    pub fn validate(&self) -> Result<()> {
        if self.batches == 0 {
            return Err(Error::workload("batches", "must be positive"));
        }
        for (t, task) in self.tasks.iter().enumerate() {
            let mut ids = BTreeSet::new();
            for (o, op) in task.ops.iter().enumerate() {
                let path = format!("tasks[{t}].ops[{o}]");
                if op.id.is_empty() {
                    return Err(Error::workload(format!("{path}.id"), "must not be empty"));
                }
                if !ids.insert(op.id.as_str()) {
                    return Err(Error::workload(format!("{path}.id"), format!("duplicate id `{}`", op.id)));
                }
                if op.iterations == 0 {
                    return Err(Error::workload(format!("{path}.iterations"), "must be positive"));
                }
                if op.kind == OpKind::Circconv && self.binding_model == BindingModel::Elementwise {
                    return Err(Error::workload(
                        format!("{path}.kind"),
                        "circconv op in a workload with elementwise binding",
                    ));
                }
                let matches = matches!(
                    (op.kind, op.dims),
                    (OpKind::Gemm | OpKind::Conv, OpDims::Matrix { .. })
                        | (OpKind::Circconv, OpDims::CircConv { .. })
                        | (OpKind::Elemwise, OpDims::Elementwise { .. })
                        | (OpKind::SimdSpecial, OpDims::Simd { .. })
                );
                if !matches {
                    return Err(Error::workload(format!("{path}.dims"), format!("do not match kind {}", op.kind)));
                }
            }
            for (o, op) in task.ops.iter().enumerate() {
                for dep in &op.deps {
                    if !ids.contains(dep.as_str()) {
                        return Err(Error::workload(
                            format!("tasks[{t}].ops[{o}].deps"),
                            format!("unknown op id `{dep}`"),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn num_ops(&self) -> usize {
        self.tasks.iter().map(|t| t.ops.len()).sum()
    }
}

pub fn parse_workload(doc: &str) -> Result<WorkloadSpec> {
    let raw: RawWorkload = serde_json::from_str(doc).map_err(syntax)?;
    let binding_model = match raw.binding_model.as_str() {
        "circular" => BindingModel::Circular,
        "elementwise" => BindingModel::Elementwise,
        other => return Err(Error::workload("binding_model", format!("unknown binding model `{other}`"))),
    };
    let precision = raw.precision.parse::<PrecisionMode>().map_err(|e| Error::workload("precision", e.to_string()))?;
    let batches = positive("batches", raw.batches)?;
    let mut tasks = Vec::with_capacity(raw.tasks.len());
    for (t, task) in raw.tasks.into_iter().enumerate() {
        let mut ops = Vec::with_capacity(task.ops.len());
        for (o, op) in task.ops.into_iter().enumerate() {
            let path = format!("tasks[{t}].ops[{o}]");
            let kind = op.kind.parse::<OpKind>().map_err(|e| Error::workload(format!("{path}.kind"), e.to_string()))?;
            let dims = dims_of(&format!("{path}.dims"), kind, &op.dims)?;
            let iterations = positive(&format!("{path}.iterations"), op.iterations)?;
            ops.push(OpSpec { id: op.id, kind, dims, deps: op.deps, iterations });
        }
        tasks.push(TaskTemplate { ops });
    }
    let spec = WorkloadSpec { name: raw.name, binding_model, precision, batches, tasks };
    spec.validate()?;
    Ok(spec)
}

pub fn emit_workload(spec: &WorkloadSpec) -> String {
    let raw = RawWorkload {
        name: spec.name.clone(),
        binding_model: spec.binding_model.as_str().to_string(),
        precision: spec.precision.as_str().to_string(),
        batches: spec.batches as i64,
        tasks: spec
            .tasks
            .iter()
            .map(|t| RawTask {
                ops: t
                    .ops
                    .iter()
                    .map(|op| RawOp {
                        id: op.id.clone(),
                        kind: op.kind.as_str().to_string(),
                        dims: dims_to_raw(&op.dims),
                        deps: op.deps.clone(),
                        iterations: op.iterations as i64,
                    })
                    .collect(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&raw).expect("plain data serializes")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Builtin {
    NvsaLike,
    MimonetLike,
    LvrfLike,
}

impl Builtin {
    pub const ALL: [Builtin; 3] = [Builtin::NvsaLike, Builtin::MimonetLike, Builtin::LvrfLike];

    pub fn as_str(self) -> &'static str {
        match self {
            Builtin::NvsaLike => "nvsa_like",
            Builtin::MimonetLike => "mimonet_like",
            Builtin::LvrfLike => "lvrf_like",
        }
    }
}

impl FromStr for Builtin {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Builtin::ALL
            .into_iter()
            .find(|b| b.as_str() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown builtin workload `{s}`")))
    }
}

/// Knobs for the generators. `scale` is the number of independent task
/// instances per batch; `k` and `d` override the symbolic block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BuiltinParams {
    pub scale: u64,
    pub batches: u64,
    pub k: Option<u64>,
    pub d: Option<u64>,
}

impl Default for BuiltinParams {
    fn default() -> Self {
        Self { scale: 1, batches: 1, k: None, d: None }
    }
}

fn op(id: &str, kind: OpKind, dims: OpDims, deps: &[&str]) -> OpSpec {
    OpSpec { id: id.into(), kind, dims, deps: deps.iter().map(|s| s.to_string()).collect(), iterations: 1 }
}

fn mat(r: u64, c: u64, k: u64) -> OpDims {
    OpDims::Matrix { r, c, k }
}

/// ResNet-18 style backbone at 224×224, lowered to GEMM shapes, ending in a
/// projection onto a `d`-dimensional hypervector.
fn cnn_backbone(d: u64) -> Vec<OpSpec> {
    vec![
        op("conv1", OpKind::Conv, mat(64, 147, 12544), &[]),
        op("conv2", OpKind::Conv, mat(64, 576, 3136), &["conv1"]),
        op("conv3", OpKind::Conv, mat(128, 576, 784), &["conv2"]),
        op("conv4", OpKind::Conv, mat(256, 1152, 196), &["conv3"]),
        op("conv5", OpKind::Conv, mat(512, 2304, 49), &["conv4"]),
        op("embed", OpKind::Gemm, mat(d, 512, 1), &["conv5"]),
    ]
}

fn cnn_vsa_task(k: u64, d: u64) -> TaskTemplate {
    let mut ops = cnn_backbone(d);
    ops.push(op("norm", OpKind::SimdSpecial, OpDims::Simd { op: SimdOp::Norm, length: d }, &["embed"]));
    ops.push(op("bind", OpKind::Circconv, OpDims::CircConv { k, d }, &["norm"]));
    ops.push(op("score", OpKind::SimdSpecial, OpDims::Simd { op: SimdOp::Softmax, length: k }, &["bind"]));
    TaskTemplate { ops }
}

/// Small transformer encoder between a binding and an unbinding block.
fn mimonet_task(k: u64, d: u64) -> TaskTemplate {
    let (seq, hidden) = (128, 256);
    let ops = vec![
        op("bind", OpKind::Circconv, OpDims::CircConv { k, d }, &[]),
        op("qkv", OpKind::Gemm, mat(3 * hidden, hidden, seq), &["bind"]),
        OpSpec { iterations: 4, ..op("attn", OpKind::Gemm, mat(seq, hidden / 4, seq), &["qkv"]) },
        op("softmax", OpKind::SimdSpecial, OpDims::Simd { op: SimdOp::Softmax, length: seq * seq }, &["attn"]),
        op("proj", OpKind::Gemm, mat(hidden, hidden, seq), &["softmax"]),
        op("ffn1", OpKind::Gemm, mat(4 * hidden, hidden, seq), &["proj"]),
        op("act", OpKind::SimdSpecial, OpDims::Simd { op: SimdOp::Tanh, length: 4 * hidden * seq }, &["ffn1"]),
        op("ffn2", OpKind::Gemm, mat(hidden, 4 * hidden, seq), &["act"]),
        op("unbind", OpKind::Circconv, OpDims::CircConv { k, d }, &["ffn2"]),
    ];
    TaskTemplate { ops }
}

pub fn generate_builtin(which: Builtin, params: BuiltinParams) -> Result<WorkloadSpec> {
    if params.scale == 0 || params.batches == 0 {
        return Err(Error::InvalidInput("scale and batches must be at least 1".into()));
    }
    let task = match which {
        Builtin::NvsaLike => cnn_vsa_task(params.k.unwrap_or(210), params.d.unwrap_or(1024)),
        Builtin::LvrfLike => cnn_vsa_task(params.k.unwrap_or(2575), params.d.unwrap_or(1024)),
        Builtin::MimonetLike => mimonet_task(params.k.unwrap_or(64), params.d.unwrap_or(64)),
    };
    let spec = WorkloadSpec {
        name: which.as_str().to_string(),
        binding_model: BindingModel::Circular,
        precision: PrecisionMode::Int8Symmetric,
        batches: params.batches,
        tasks: vec![task; params.scale as usize],
    };
    spec.validate()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"name": "m", "binding_model": "circular", "precision": "fp32", "batches": 1,
        "tasks": [{"ops": [{"id": "g", "kind": "gemm", "dims": {"r": 2, "c": 3, "k": 4}}]}]}"#;

    #[test]
    fn minimal_document() {
        let spec = parse_workload(MINIMAL).unwrap();
        assert_eq!(spec.tasks.len(), 1);
        assert_eq!(spec.tasks[0].ops.len(), 1);
        assert_eq!(spec.tasks[0].ops[0].dims, OpDims::Matrix { r: 2, c: 3, k: 4 });
        assert_eq!(spec.tasks[0].ops[0].iterations, 1);
    }

    #[test]
    fn negative_dim_names_field() {
        let doc = MINIMAL.replace(r#""kind": "gemm", "dims": {"r": 2, "c": 3, "k": 4}"#, r#""kind": "circconv", "dims": {"k": 2, "d": -8}"#);
        match parse_workload(&doc) {
            Err(Error::Workload { field, .. }) => assert_eq!(field, "tasks[0].ops[0].dims.d"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn syntax_errors_report_position() {
        match parse_workload("{\n  \"name\": \"x\",\n  oops\n}") {
            Err(Error::Syntax { line, column, .. }) => assert_eq!((line, column), (3, 3)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_unknowns() {
        let doc = MINIMAL.replace("\"gemm\"", "\"fft\"");
        assert!(matches!(parse_workload(&doc), Err(Error::Workload { .. })));
        let doc = MINIMAL.replace("\"batches\": 1", "\"batches\": 1, \"extra\": 0");
        assert!(matches!(parse_workload(&doc), Err(Error::Syntax { .. })));
        let doc = MINIMAL.replace("\"k\": 4", "\"k\": 4, \"d\": 2");
        assert!(matches!(parse_workload(&doc), Err(Error::Workload { field, .. }) if field.ends_with("dims.d")));
        let doc = MINIMAL.replace("\"dims\"", "\"deps\": [\"nope\"], \"dims\"");
        assert!(matches!(parse_workload(&doc), Err(Error::Workload { field, .. }) if field.ends_with("deps")));
    }

    #[test]
    fn elementwise_binding_rejects_circconv() {
        let doc = MINIMAL
            .replace("circular", "elementwise")
            .replace(r#""kind": "gemm", "dims": {"r": 2, "c": 3, "k": 4}"#, r#""kind": "circconv", "dims": {"k": 2, "d": 8}"#);
        assert!(parse_workload(&doc).is_err());
    }

    #[test]
    fn builtins_carry_paper_sizes() {
        let find = |spec: &WorkloadSpec| {
            spec.tasks[0].ops.iter().find(|o| o.kind == OpKind::Circconv).map(|o| o.dims).unwrap()
        };
        let p = BuiltinParams::default();
        assert_eq!(find(&generate_builtin(Builtin::NvsaLike, p).unwrap()), OpDims::CircConv { k: 210, d: 1024 });
        assert_eq!(find(&generate_builtin(Builtin::LvrfLike, p).unwrap()), OpDims::CircConv { k: 2575, d: 1024 });
        assert!(matches!(find(&generate_builtin(Builtin::MimonetLike, p).unwrap()), OpDims::CircConv { d: 64, .. }));
    }

    #[test]
    fn scale_multiplies_tasks_not_dims() {
        let one = generate_builtin(Builtin::NvsaLike, BuiltinParams::default()).unwrap();
        let three = generate_builtin(Builtin::NvsaLike, BuiltinParams { scale: 3, ..Default::default() }).unwrap();
        assert_eq!(three.tasks.len(), 3);
        assert!(three.tasks.iter().all(|t| *t == one.tasks[0]));
    }

    #[test]
    fn builtins_round_trip() {
        for b in Builtin::ALL {
            let spec = generate_builtin(b, BuiltinParams { scale: 2, batches: 3, k: None, d: None }).unwrap();
            assert_eq!(parse_workload(&emit_workload(&spec)).unwrap(), spec);
        }
    }
}
