//! Scenario files, task execution and reports.
//!
//! A scenario declares one dual pair, named operators and a task list. Tasks
//! run concurrently and the report lists their records in declaration
//! order. Every randomized step is driven by the task's seed, so re-running
//! a scenario reproduces all numeric fields; only `elapsed_ms` varies.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::br_solver::{br_corollary, br_point, quasidense_witness, van_point, BrRequest, BrResult};
use crate::classifiers::{
    check_fp, check_fpv, interior_witness, ni_infimum, strong_max_dual, strong_max_primal, ClassifierVerdict,
    LocalWindow, StrongMaxVerdict,
};
use crate::error::{Error, Result};
use crate::fitzpatrick::{fitz_membership_with, phi_with, SearchOpts};
use crate::functions::ConvexFn;
use crate::operators::MonotoneOperator;
use crate::quasidensity::{
    default_probes, fuzzy_gap_dual_with, fuzzy_gap_primal_with, gap_with, GapOptions, GapQuery, GapReport,
};
use crate::spaces::{DualPair, NormTag, Side};
use crate::{CompactConvexSet, PairedPoint};

pub const SCHEMA_VERSION: u32 = 1;

/// Set descriptor: `{"polytope": [[..], ..]}`, `{"ball": {..}}`,
/// `{"capsule": {..}}`, `{"interval": [lo, hi]}` or `{"box": {..}}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SetDesc {
    Polytope(Vec<Vec<f64>>),
    Ball {
        center: Vec<f64>,
        radius: f64,
        #[serde(default = "l2")]
        norm: NormTag,
    },
    Capsule {
        a: Vec<f64>,
        b: Vec<f64>,
        radius: f64,
        #[serde(default = "l2")]
        norm: NormTag,
    },
    Interval([f64; 2]),
    Box {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
}

fn l2() -> NormTag {
    NormTag::L2
}

impl SetDesc {
    pub fn build(&self, side: Side) -> Result<CompactConvexSet> {
        match self {
            SetDesc::Polytope(v) => CompactConvexSet::polytope(v.clone(), side),
            SetDesc::Ball { center, radius, norm } => CompactConvexSet::ball(center.clone(), *radius, *norm, side),
            SetDesc::Capsule { a, b, radius, norm } => {
                CompactConvexSet::capsule(a.clone(), b.clone(), *radius, *norm, side)
            }
            SetDesc::Interval([lo, hi]) => CompactConvexSet::interval(*lo, *hi, side),
            SetDesc::Box { lo, hi } => CompactConvexSet::boxed(lo, hi, side),
        }
    }
}

/// Convex function descriptor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum FnDesc {
    Quadratic {
        q: Vec<Vec<f64>>,
        b: Vec<f64>,
        #[serde(default)]
        c: f64,
    },
    /// `1/2 |x|_2^2`
    HalfSquare,
    Norm {
        #[serde(default = "one")]
        scale: f64,
        #[serde(default = "l2")]
        norm: NormTag,
    },
    Support(SetDesc),
    Indicator(SetDesc),
    Affine {
        a: Vec<f64>,
        #[serde(default)]
        c: f64,
    },
    HalfSqNorm(NormTag),
    Translate {
        inner: Box<FnDesc>,
        shift: Vec<f64>,
        tilt: Vec<f64>,
    },
    Sum(Box<FnDesc>, Box<FnDesc>),
}

fn one() -> f64 {
    1.0
}

impl FnDesc {
    pub fn build(&self, n: usize) -> Result<ConvexFn> {
        Ok(match self {
            FnDesc::Quadratic { q, b, c } => ConvexFn::quadratic(q.clone(), b.clone(), *c)?,
            FnDesc::HalfSquare => ConvexFn::half_square(n),
            FnDesc::Norm { scale, norm } => ConvexFn::norm(*scale, *norm)?,
            FnDesc::Support(s) => ConvexFn::support(s.build(Side::Dual)?),
            FnDesc::Indicator(s) => ConvexFn::indicator(s.build(Side::Primal)?),
            FnDesc::Affine { a, c } => ConvexFn::affine(a.clone(), *c),
            FnDesc::HalfSqNorm(norm) => ConvexFn::HalfSqNorm { norm: *norm },
            FnDesc::Translate { inner, shift, tilt } => {
                ConvexFn::translate(inner.build(n)?, shift.clone(), tilt.clone())?
            }
            FnDesc::Sum(f, g) => ConvexFn::sum(f.build(n)?, g.build(n)?)?,
        })
    }
}

/// Operator descriptor; `{"ref": "name"}` reuses a declared operator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum OpDesc {
    Ref(String),
    /// Graph points as `[x, x*]` pairs.
    FiniteGraph(Vec<[Vec<f64>; 2]>),
    Linear(Vec<Vec<f64>>),
    Identity,
    Subdifferential(FnDesc),
    NormalCone(SetDesc),
    SupportSubdiff(SetDesc),
    Shift {
        inner: Box<OpDesc>,
        dx: Vec<f64>,
        dxstar: Vec<f64>,
    },
    Sum(Box<OpDesc>, Box<OpDesc>),
    Inverse(Box<OpDesc>),
    ParallelSum(Box<OpDesc>, Box<OpDesc>),
    /// Truncated tail map on the scenario's pair.
    Tail,
}

impl OpDesc {
    pub fn build(&self, pair: &DualPair, named: &BTreeMap<String, MonotoneOperator>) -> Result<MonotoneOperator> {
        let n = pair.dim();
        let p = *pair;
        Ok(match self {
            OpDesc::Ref(name) => named
                .get(name)
                .cloned()
                .ok_or_else(|| Error::Scenario(format!("unknown operator reference `{name}`")))?,
            OpDesc::FiniteGraph(pts) => MonotoneOperator::finite_graph(
                p,
                pts.iter()
                    .map(|[x, y]| PairedPoint::new(x.clone(), y.clone()))
                    .collect(),
            )?,
            OpDesc::Linear(rows) => MonotoneOperator::linear(p, rows.clone())?,
            OpDesc::Identity => MonotoneOperator::linear(
                p,
                (0..n)
                    .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                    .collect(),
            )?,
            OpDesc::Subdifferential(f) => MonotoneOperator::subdifferential(p, f.build(n)?)?,
            OpDesc::NormalCone(s) => MonotoneOperator::normal_cone(p, s.build(Side::Primal)?)?,
            OpDesc::SupportSubdiff(s) => MonotoneOperator::support_subdiff(p, s.build(Side::Dual)?)?,
            OpDesc::Shift { inner, dx, dxstar } => {
                MonotoneOperator::shift(inner.build(pair, named)?, dx.clone(), dxstar.clone())?
            }
            OpDesc::Sum(a, b) => MonotoneOperator::sum(a.build(pair, named)?, b.build(pair, named)?)?,
            OpDesc::Inverse(a) => MonotoneOperator::inverse(a.build(pair, named)?),
            OpDesc::ParallelSum(a, b) => MonotoneOperator::parallel_sum(a.build(pair, named)?, b.build(pair, named)?)?,
            OpDesc::Tail => MonotoneOperator::tail_on(p, n)?,
        })
    }

    fn references(&self, out: &mut Vec<String>) {
        match self {
            OpDesc::Ref(name) => out.push(name.clone()),
            OpDesc::Shift { inner, .. } | OpDesc::Inverse(inner) => inner.references(out),
            OpDesc::Sum(a, b) | OpDesc::ParallelSum(a, b) => {
                a.references(out);
                b.references(out);
            }
            _ => {}
        }
    }
}

/// Probe points: an explicit list of `[x, x*]` pairs or a seeded cloud.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ProbeSpec {
    Points(Vec<[Vec<f64>; 2]>),
    Random { count: usize },
}

impl ProbeSpec {
    fn build(&self, s: &MonotoneOperator, seed: u64) -> Result<Vec<PairedPoint>> {
        match self {
            ProbeSpec::Points(pts) => {
                let out: Vec<PairedPoint> = pts
                    .iter()
                    .map(|[x, y]| PairedPoint::new(x.clone(), y.clone()))
                    .collect();
                for p in &out {
                    p.check(s.pair())?;
                }
                Ok(out)
            }
            ProbeSpec::Random { count } => default_probes(s, *count, seed),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassKind {
    Fpv,
    Fp,
    Ni,
    StrongmaxDual,
    StrongmaxPrimal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BrMode {
    Point,
    Corollary,
    Van,
    Witness,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SumMode {
    /// `S + T` with a point of `D(S)` in `int D(T)`.
    Domain,
    /// The parallel sum with a point of `R(S)` in `int R(T)`.
    Range,
}

/// Rule fixing the tail-experiment probe in each dimension.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TailProbe {
    /// `x = 0`, `x* = (1, ..., 1)`.
    #[default]
    AllOnes,
    /// Given vectors, zero-padded or truncated to `n`.
    Fixed { x: Vec<f64>, xstar: Vec<f64> },
}

impl TailProbe {
    pub fn at(&self, n: usize) -> PairedPoint {
        match self {
            TailProbe::AllOnes => PairedPoint::new(vec![0.0; n], vec![1.0; n]),
            TailProbe::Fixed { x, xstar } => {
                let fit = |v: &[f64]| (0..n).map(|i| v.get(i).copied().unwrap_or(0.0)).collect();
                PairedPoint::new(fit(x), fit(xstar))
            }
        }
    }
}

fn default_budget() -> usize {
    128
}

fn default_eta() -> f64 {
    1e-6
}

fn default_tol() -> f64 {
    1e-6
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Task {
    Gap {
        operator: String,
        probes: ProbeSpec,
        #[serde(default = "default_eta")]
        eta: f64,
        seed: u64,
        #[serde(default = "default_budget")]
        budget: usize,
        /// Replaces the dual component of each probe.
        #[serde(default)]
        dual_fuzz: Option<SetDesc>,
        /// Replaces the primal component of each probe.
        #[serde(default)]
        primal_fuzz: Option<SetDesc>,
    },
    Fitz {
        operator: String,
        probes: ProbeSpec,
        seed: u64,
        #[serde(default = "default_budget")]
        budget: usize,
        #[serde(default = "default_tol")]
        tol: f64,
    },
    Classify {
        operator: String,
        class: ClassKind,
        /// Window (fpv, fp) or fuzz set (strong maximality).
        #[serde(default)]
        set: Option<SetDesc>,
        #[serde(default)]
        w: Vec<f64>,
        #[serde(default)]
        wstar: Vec<f64>,
        seed: u64,
        #[serde(default = "default_budget")]
        budget: usize,
    },
    Br {
        mode: BrMode,
        function: FnDesc,
        #[serde(default)]
        u: Vec<f64>,
        #[serde(default = "one")]
        alpha: f64,
        #[serde(default = "default_beta")]
        beta: f64,
        #[serde(default = "default_eta")]
        eps: f64,
        #[serde(default)]
        x: Vec<f64>,
        #[serde(default)]
        xstar: Vec<f64>,
        seed: u64,
    },
    TailExperiment {
        n_list: Vec<usize>,
        #[serde(default)]
        probe: TailProbe,
        seed: u64,
    },
    SumTest {
        s: String,
        t: String,
        mode: SumMode,
        probes: usize,
        #[serde(default = "default_eta")]
        eta: f64,
        seed: u64,
    },
}

fn default_beta() -> f64 {
    0.1
}

impl Task {
    pub fn kind(&self) -> &'static str {
        match self {
            Task::Gap { .. } => "gap",
            Task::Fitz { .. } => "fitz",
            Task::Classify { .. } => "classify",
            Task::Br { .. } => "br",
            Task::TailExperiment { .. } => "tail_experiment",
            Task::SumTest { .. } => "sum_test",
        }
    }

    fn operators(&self) -> Vec<&str> {
        match self {
            Task::Gap { operator, .. } | Task::Fitz { operator, .. } | Task::Classify { operator, .. } => {
                vec![operator]
            }
            Task::SumTest { s, t, .. } => vec![s, t],
            Task::Br { .. } | Task::TailExperiment { .. } => vec![],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema: u32,
    #[serde(default)]
    pub name: String,
    pub space: DualPair,
    #[serde(default)]
    pub operators: BTreeMap<String, OpDesc>,
    pub tasks: Vec<Task>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let sc: Scenario = serde_json::from_str(text)
            .map_err(|e| Error::Scenario(format!("{e} (line {}, column {})", e.line(), e.column())))?;
        if sc.schema != SCHEMA_VERSION {
            return Err(Error::Scenario(format!(
                "unsupported schema {} (expected {SCHEMA_VERSION})",
                sc.schema
            )));
        }
        Ok(sc)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Scenario(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Builds the named operators in dependency order; references must name
    /// declared operators and may not form cycles.
    pub fn build_operators(&self) -> Result<BTreeMap<String, MonotoneOperator>> {
        for task in &self.tasks {
            for name in task.operators() {
                if !self.operators.contains_key(name) {
                    return Err(Error::Scenario(format!(
                        "task `{}` references undeclared operator `{name}`",
                        task.kind()
                    )));
                }
            }
        }
        let mut built = BTreeMap::new();
        let mut pending: Vec<(&String, &OpDesc)> = self.operators.iter().collect();
        while !pending.is_empty() {
            let before = pending.len();
            let mut rest = Vec::new();
            for (name, desc) in pending {
                let mut refs = Vec::new();
                desc.references(&mut refs);
                if let Some(r) = refs.iter().find(|r| !self.operators.contains_key(*r)) {
                    return Err(Error::Scenario(format!(
                        "operator `{name}` references undeclared `{r}`"
                    )));
                }
                if refs.iter().all(|r| built.contains_key(r)) {
                    let op = desc
                        .build(&self.space, &built)
                        .map_err(|e| Error::Scenario(format!("operator `{name}`: {e}")))?;
                    built.insert(name.clone(), op);
                } else {
                    rest.push((name, desc));
                }
            }
            if rest.len() == before {
                return Err(Error::Scenario("operator references form a cycle".into()));
            }
            pending = rest;
        }
        Ok(built)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordStatus {
    Ok,
    Skipped,
    Error,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub task: usize,
    pub kind: String,
    /// Name of the quantity the record measures.
    pub anchor: String,
    pub status: RecordStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    pub data: BTreeMap<String, Value>,
    /// Wall time of the whole task; excluded from reproducibility checks.
    pub elapsed_ms: f64,
}

impl Record {
    fn new(task: usize, kind: &str, anchor: &str, data: BTreeMap<String, Value>) -> Self {
        Record {
            task,
            kind: kind.into(),
            anchor: anchor.into(),
            status: RecordStatus::Ok,
            message: None,
            data,
            elapsed_ms: 0.0,
        }
    }

    fn failed(task: usize, kind: &str, anchor: &str, status: RecordStatus, msg: String) -> Self {
        Record {
            status,
            message: Some(msg),
            ..Record::new(task, kind, anchor, BTreeMap::new())
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: u32,
    pub scenario: String,
    pub records: Vec<Record>,
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// The report with every timing field zeroed.
    pub fn without_timings(&self) -> Report {
        let mut r = self.clone();
        for rec in &mut r.records {
            rec.elapsed_ms = 0.0;
        }
        r
    }

    /// Flat CSV view: fixed record columns followed by the union of data
    /// keys; vectors and objects are written as JSON.
    pub fn to_csv(&self) -> Result<String> {
        let mut keys: Vec<&String> = Vec::new();
        for rec in &self.records {
            for k in rec.data.keys() {
                if !keys.contains(&k) {
                    keys.push(k);
                }
            }
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::Scenario(format!("csv: {e}"));
        let mut header = vec!["task", "kind", "anchor", "status", "message"];
        header.extend(keys.iter().map(|k| k.as_str()));
        w.write_record(&header).map_err(csv_err)?;
        for rec in &self.records {
            let mut row = vec![
                rec.task.to_string(),
                rec.kind.clone(),
                rec.anchor.clone(),
                serde_json::to_value(rec.status)
                    .expect("status")
                    .as_str()
                    .unwrap_or("")
                    .to_string(),
                rec.message.clone().unwrap_or_default(),
            ];
            for k in &keys {
                row.push(match rec.data.get(*k) {
                    None | Some(Value::Null) => String::new(),
                    Some(Value::String(s)) => s.clone(),
                    Some(v) => v.to_string(),
                });
            }
            w.write_record(&row).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Scenario(format!("csv: {e}")))?;
        Ok(String::from_utf8(bytes).expect("utf-8 csv"))
    }
}

/// Quantity names carried by records.
pub mod anchors {
    pub const GAP: &str = "quasidensity gap";
    pub const FUZZY_GAP_DUAL: &str = "fuzzy quasidensity gap (dual set)";
    pub const FUZZY_GAP_PRIMAL: &str = "fuzzy quasidensity gap (primal set)";
    pub const FITZ: &str = "fitzpatrick function and extension membership";
    pub const FPV: &str = "windowed maximality (domain side)";
    pub const FP: &str = "windowed maximality (range side)";
    pub const NI: &str = "negative infimum of the shifted pairing";
    pub const STRONG_MAX: &str = "strong maximality";
    pub const BR_POINT: &str = "brondsted-rockafellar point";
    pub const BR_COROLLARY: &str = "brondsted-rockafellar near-minimizer";
    pub const VAN: &str = "near-zero subgradient pair of g + j";
    pub const WITNESS: &str = "quasidensity witness";
    pub const TAIL: &str = "tail operator gap bound";
    pub const SUM: &str = "sum quasidensity";
    pub const PARALLEL_SUM: &str = "parallel sum quasidensity";
}

/// Parses and runs a scenario file.
pub fn run_scenario(path: &Path) -> Result<Report> {
    run(&Scenario::load(path)?)
}

/// Runs every task; task failures become error records and never abort the
/// batch. Only configuration errors (undeclared or invalid operators) fail
/// the whole run.
pub fn run(sc: &Scenario) -> Result<Report> {
    let ops = sc.build_operators()?;
    let per_task: Vec<Vec<Record>> = sc
        .tasks
        .par_iter()
        .enumerate()
        .map(|(i, task)| {
            let start = Instant::now();
            let mut recs = run_task(i, task, &sc.space, &ops).unwrap_or_else(|e| {
                vec![Record::failed(
                    i,
                    task.kind(),
                    task_anchor(task),
                    RecordStatus::Error,
                    e.to_string(),
                )]
            });
            let ms = start.elapsed().as_secs_f64() * 1e3;
            for r in &mut recs {
                r.elapsed_ms = ms;
            }
            recs
        })
        .collect();
    Ok(Report {
        schema: SCHEMA_VERSION,
        scenario: sc.name.clone(),
        records: per_task.into_iter().flatten().collect(),
    })
}

fn task_anchor(task: &Task) -> &'static str {
    match task {
        Task::Gap { dual_fuzz: Some(_), .. } => anchors::FUZZY_GAP_DUAL,
        Task::Gap {
            primal_fuzz: Some(_), ..
        } => anchors::FUZZY_GAP_PRIMAL,
        Task::Gap { .. } => anchors::GAP,
        Task::Fitz { .. } => anchors::FITZ,
        Task::Classify { class, .. } => match class {
            ClassKind::Fpv => anchors::FPV,
            ClassKind::Fp => anchors::FP,
            ClassKind::Ni => anchors::NI,
            ClassKind::StrongmaxDual | ClassKind::StrongmaxPrimal => anchors::STRONG_MAX,
        },
        Task::Br { mode, .. } => match mode {
            BrMode::Point => anchors::BR_POINT,
            BrMode::Corollary => anchors::BR_COROLLARY,
            BrMode::Van => anchors::VAN,
            BrMode::Witness => anchors::WITNESS,
        },
        Task::TailExperiment { .. } => anchors::TAIL,
        Task::SumTest {
            mode: SumMode::Domain, ..
        } => anchors::SUM,
        Task::SumTest {
            mode: SumMode::Range, ..
        } => anchors::PARALLEL_SUM,
    }
}

fn point_json(p: &PairedPoint) -> Value {
    json!({"x": p.x, "xstar": p.xstar})
}

/// Numbers as JSON; infinities and NaN become strings so they survive.
fn num(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else if v.is_nan() {
        json!("nan")
    } else if v > 0.0 {
        json!("inf")
    } else {
        json!("-inf")
    }
}

fn data(pairs: Vec<(&str, Value)>) -> BTreeMap<String, Value> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

fn gap_data(probe: &PairedPoint, r: &GapReport, eta: f64) -> BTreeMap<String, Value> {
    data(vec![
        ("probe", point_json(probe)),
        ("value", num(r.value)),
        ("gap_status", json!(r.status)),
        ("method", json!(r.method)),
        ("witness", point_json(&r.witness)),
        ("eta", json!(eta)),
        ("passed", json!(r.value <= eta)),
        ("steps", json!(r.stats.steps)),
        ("restarts", json!(r.stats.restarts)),
        ("evaluations", json!(r.stats.evaluations)),
    ])
}

fn run_task(i: usize, task: &Task, pair: &DualPair, ops: &BTreeMap<String, MonotoneOperator>) -> Result<Vec<Record>> {
    let kind = task.kind();
    let anchor = task_anchor(task);
    let op = |name: &str| ops.get(name).expect("validated reference");
    match task {
        Task::Gap {
            operator,
            probes,
            eta,
            seed,
            budget,
            dual_fuzz,
            primal_fuzz,
        } => {
            let s = op(operator);
            let opts = GapOptions {
                seed: *seed,
                budget: *budget,
                ..Default::default()
            };
            let dual_set = dual_fuzz.as_ref().map(|d| d.build(Side::Dual)).transpose()?;
            let primal_set = primal_fuzz.as_ref().map(|d| d.build(Side::Primal)).transpose()?;
            let pts = probes.build(s, *seed)?;
            Ok(pts
                .par_iter()
                .map(|p| {
                    let r = match (&dual_set, &primal_set) {
                        (Some(wt), _) => fuzzy_gap_dual_with(s, &p.x, wt, &opts),
                        (_, Some(w)) => fuzzy_gap_primal_with(s, w, &p.xstar, &opts),
                        _ => gap_with(s, &GapQuery::at(p.clone(), *eta), &opts),
                    };
                    match r {
                        Ok(r) => Record::new(i, kind, anchor, gap_data(p, &r, *eta)),
                        Err(e) => Record::failed(i, kind, anchor, RecordStatus::Error, e.to_string()),
                    }
                })
                .collect())
        }
        Task::Fitz {
            operator,
            probes,
            seed,
            budget,
            tol,
        } => {
            let s = op(operator);
            let opts = SearchOpts {
                budget: *budget,
                seed: *seed,
            };
            let pts = probes.build(s, *seed)?;
            Ok(pts
                .iter()
                .map(|p| {
                    let run = || -> Result<BTreeMap<String, Value>> {
                        let ph = phi_with(s, &p.x, &p.xstar, opts)?;
                        let m = fitz_membership_with(s, &p.xstar, &p.x, *tol, opts)?;
                        Ok(data(vec![
                            ("probe", point_json(p)),
                            ("phi", num(ph.value)),
                            ("phi_status", json!(ph.status)),
                            ("phi_upper", num(ph.upper_bound())),
                            ("pairing", num(m.pairing)),
                            ("theta", num(m.theta.value)),
                            ("theta_status", json!(m.theta.status)),
                            ("membership", json!(m.verdict)),
                        ]))
                    };
                    match run() {
                        Ok(d) => Record::new(i, kind, anchor, d),
                        Err(e) => Record::failed(i, kind, anchor, RecordStatus::Error, e.to_string()),
                    }
                })
                .collect())
        }
        Task::Classify {
            operator,
            class,
            set,
            w,
            wstar,
            seed,
            budget,
        } => {
            let s = op(operator);
            let need_set = || {
                set.as_ref()
                    .ok_or_else(|| Error::Scenario("this class needs a `set`".into()))
            };
            let d = match class {
                ClassKind::Fpv => {
                    let win = LocalWindow::new(need_set()?.build(Side::Primal)?)?;
                    classifier_data(&check_fpv(s, &win, w, wstar, *budget, *seed)?)
                }
                ClassKind::Fp => {
                    let win = LocalWindow::new(need_set()?.build(Side::Dual)?)?;
                    classifier_data(&check_fp(s, &win, w, wstar, *budget, *seed)?)
                }
                ClassKind::Ni => {
                    // w* and w** are read from `wstar` and `w`
                    let r = ni_infimum(s, wstar, w, *budget, *seed)?;
                    data(vec![
                        ("value", num(r.value)),
                        ("witness", point_json(&r.witness)),
                        ("cross_check", r.cross_check.map_or(Value::Null, num)),
                        ("evaluations", json!(r.evaluations)),
                    ])
                }
                ClassKind::StrongmaxDual => {
                    strong_data(&strong_max_dual(s, w, &need_set()?.build(Side::Dual)?, *budget, *seed)?)
                }
                ClassKind::StrongmaxPrimal => strong_data(&strong_max_primal(
                    s,
                    &need_set()?.build(Side::Primal)?,
                    wstar,
                    *budget,
                    *seed,
                )?),
            };
            Ok(vec![Record::new(i, kind, anchor, d)])
        }
        Task::Br {
            mode,
            function,
            u,
            alpha,
            beta,
            eps,
            x,
            xstar,
            ..
        } => {
            let n = pair.dim();
            let f = function.build(n)?;
            let d = match mode {
                BrMode::Point => br_data(&br_point(&BrRequest {
                    h: f,
                    u: u.clone(),
                    alpha: *alpha,
                    beta: *beta,
                    pair: *pair,
                })?),
                BrMode::Corollary => br_data(&br_corollary(&f, *beta, pair)?),
                BrMode::Van => {
                    let v = van_point(&f, *eps, pair)?;
                    data(vec![
                        ("point", point_json(&v.point)),
                        ("quantity", num(v.quantity)),
                        ("membership", json!(v.membership)),
                        ("beta", json!(v.beta)),
                        ("radius_bound", json!(v.radius_bound)),
                    ])
                }
                BrMode::Witness => {
                    let w = quasidense_witness(&f, x, xstar, *eps, pair)?;
                    data(vec![
                        ("probe", point_json(&PairedPoint::new(x.clone(), xstar.clone()))),
                        ("point", point_json(&w.point)),
                        ("objective", num(w.objective)),
                        ("membership", json!(w.membership)),
                    ])
                }
            };
            Ok(vec![Record::new(i, kind, anchor, d)])
        }
        Task::TailExperiment { n_list, probe, seed } => Ok(tail_experiment(n_list, probe, *seed)
            .into_iter()
            .map(|row| {
                let mut r = Record::new(
                    i,
                    kind,
                    anchor,
                    data(vec![
                        ("n", json!(row.n)),
                        ("probe", point_json(&row.probe)),
                        ("gap_bound", num(row.gap_bound)),
                        ("witness", json!(row.witness.as_ref().map(point_json))),
                        ("steps", json!(row.steps)),
                        ("restarts", json!(row.restarts)),
                        ("evaluations", json!(row.evaluations)),
                    ]),
                );
                if let Some(e) = row.error {
                    r.status = RecordStatus::Error;
                    r.message = Some(e);
                }
                r
            })
            .collect()),
        Task::SumTest {
            s,
            t,
            mode,
            probes,
            eta,
            seed,
        } => {
            let rec = sum_test(op(s), op(t), *mode, *probes, *eta, *seed)?;
            let mut r = Record::new(
                i,
                kind,
                anchor,
                data(vec![
                    ("mode", json!(mode)),
                    ("interior_witness", json!(rec.interior_witness)),
                    ("probes", json!(rec.probes)),
                    ("passed", json!(rec.passed)),
                    ("failed", json!(rec.failed)),
                    ("max_gap", num(rec.max_gap)),
                    ("eta", json!(eta)),
                ]),
            );
            if let Some(why) = rec.skipped {
                r.status = RecordStatus::Skipped;
                r.message = Some(why);
            }
            Ok(vec![r])
        }
    }
}

fn classifier_data(v: &ClassifierVerdict) -> BTreeMap<String, Value> {
    data(vec![
        ("premise_holds", json!(v.premise_holds)),
        ("worst_value", v.worst.as_ref().map_or(Value::Null, |w| num(w.value))),
        ("worst_point", json!(v.worst.as_ref().map(|w| point_json(&w.point)))),
        ("samples_in_window", json!(v.samples_in_window)),
        ("conclusion", json!(v.conclusion)),
        ("consistent_with_class", json!(v.consistent_with_class)),
        ("budget", json!(v.budget)),
        ("seed", json!(v.seed)),
    ])
}

fn strong_data(v: &StrongMaxVerdict) -> BTreeMap<String, Value> {
    data(vec![
        ("premise_holds", json!(v.premise_holds)),
        ("worst_value", v.worst.as_ref().map_or(Value::Null, |w| num(w.value))),
        ("worst_point", json!(v.worst.as_ref().map(|w| point_json(&w.point)))),
        ("found", json!(v.found)),
        ("residual", num(v.residual)),
        ("budget", json!(v.budget)),
        ("seed", json!(v.seed)),
    ])
}

fn br_data(r: &BrResult) -> BTreeMap<String, Value> {
    data(vec![
        ("s", json!(r.s)),
        ("xstar", json!(r.xstar)),
        ("certificates", json!(r.certs)),
        ("min_slack", num(r.certs.min_slack())),
        ("membership", json!(r.membership)),
        ("br_status", json!(r.status)),
        ("premise_certified", json!(r.premise_certified)),
        ("outer_steps", json!(r.outer_steps)),
    ])
}

#[derive(Clone, Debug, PartialEq)]
pub struct TailRow {
    pub n: usize,
    pub probe: PairedPoint,
    /// Upper bound on the gap at the probe; `NaN` when the solver failed.
    pub gap_bound: f64,
    pub witness: Option<PairedPoint>,
    pub steps: usize,
    pub restarts: usize,
    pub evaluations: usize,
    pub error: Option<String>,
}

/// Gap upper bounds of the `l1 / l_inf` tail truncation for each `n`, one
/// row per `n`; a failure in one row does not stop the others.
pub fn tail_experiment(n_list: &[usize], probe: &TailProbe, seed: u64) -> Vec<TailRow> {
    n_list
        .par_iter()
        .map(|&n| {
            let p = probe.at(n);
            let failed = |e: String| TailRow {
                n,
                probe: p.clone(),
                gap_bound: f64::NAN,
                witness: None,
                steps: 0,
                restarts: 0,
                evaluations: 0,
                error: Some(e),
            };
            let t = match MonotoneOperator::tail(n) {
                Ok(t) => t,
                Err(e) => return failed(e.to_string()),
            };
            let opts = GapOptions {
                seed,
                ..Default::default()
            };
            match gap_with(&t, &GapQuery::at(p.clone(), 1e-3), &opts) {
                Ok(r) => TailRow {
                    n,
                    probe: p,
                    gap_bound: r.value,
                    witness: Some(r.witness),
                    steps: r.stats.steps,
                    restarts: r.stats.restarts,
                    evaluations: r.stats.evaluations,
                    error: None,
                },
                Err(e) => failed(e.to_string()),
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SumTestRecord {
    pub interior_witness: Option<Vec<f64>>,
    /// Set when the interior condition had no witness and nothing ran.
    pub skipped: Option<String>,
    pub probes: usize,
    pub passed: usize,
    pub failed: usize,
    pub max_gap: f64,
}

/// Gap sweep on `S + T` (domain mode) or the parallel sum (range mode),
/// run only after an explicit interior witness is found.
pub fn sum_test(
    s: &MonotoneOperator,
    t: &MonotoneOperator,
    mode: SumMode,
    probes: usize,
    eta: f64,
    seed: u64,
) -> Result<SumTestRecord> {
    if !s.pair().is_euclidean() {
        return Err(Error::NonEuclidean("sum_test"));
    }
    let side = match mode {
        SumMode::Domain => Side::Primal,
        SumMode::Range => Side::Dual,
    };
    let Some(w) = interior_witness(s, t, side, 64, seed)? else {
        return Ok(SumTestRecord {
            interior_witness: None,
            skipped: Some("no interior witness".into()),
            probes: 0,
            passed: 0,
            failed: 0,
            max_gap: f64::NAN,
        });
    };
    let op = match mode {
        SumMode::Domain => MonotoneOperator::sum(s.clone(), t.clone())?,
        SumMode::Range => MonotoneOperator::parallel_sum(s.clone(), t.clone())?,
    };
    let pts = default_probes(&op, probes, seed)?;
    let gaps: Vec<f64> = pts
        .par_iter()
        .map(|p| {
            gap_with(
                &op,
                &GapQuery::at(p.clone(), eta),
                &GapOptions {
                    seed,
                    ..Default::default()
                },
            )
            .map(|r| r.value)
        })
        .collect::<Result<_>>()?;
    let passed = gaps.iter().filter(|g| **g <= eta).count();
    Ok(SumTestRecord {
        interior_witness: Some(w),
        skipped: None,
        probes: gaps.len(),
        passed,
        failed: gaps.len() - passed,
        max_gap: gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}
