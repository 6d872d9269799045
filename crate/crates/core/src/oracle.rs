//! The store-widened unbounded-stack analysis and the tools that compare a
//! finite-state result against it.
//!
//! Configurations carry explicit frame lists. The analysis is not
//! computable in general, so stacks deeper than a bound are recorded but
//! not expanded, and the result says whether that ever happened.

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt::Write as _;
use std::hash::{Hash, Hasher};
use std::rc::Rc;
use std::time::Instant;

use indexmap::IndexSet;
use rayon::prelude::*;
use serde_json::json;

use crate::alloc::{KontPolicy, ValuePolicy};
use crate::domain::{AbsAddr, AbsEnv, AbsFrame, AbsKont, FlowSet, KStore, KontAddr, Store};
use crate::fixpoint::{AnalysisError, AnalysisResult, Limits, Metrics};
use crate::machine::{step_with, Configuration, ExplicitStacks, Reads, StackAction, Transition};
use crate::syntax::{Label, Program};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HatConfiguration {
    pub exp: Label,
    pub env: AbsEnv,
    /// Top first.
    pub kont: Vec<AbsFrame>,
}

impl HatConfiguration {
    pub fn initial(program: &Program) -> Self {
        HatConfiguration {
            exp: program.root().label,
            env: AbsEnv::empty(),
            kont: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct OracleResult {
    pub value_policy: ValuePolicy,
    pub reachable: BTreeSet<HatConfiguration>,
    pub store: Store,
    pub bound: usize,
    /// No configuration deeper than `bound` was reached.
    pub complete: bool,
    pub metrics: Metrics,
}

/// Oracle with a ceiling of two million configurations.
pub fn oracle_analyze(
    program: &Program,
    value_policy: ValuePolicy,
    depth_bound: usize,
) -> Result<OracleResult, AnalysisError> {
    let limits = Limits {
        max_configurations: Some(2_000_000),
        timeout: None,
    };
    oracle_analyze_with(program, value_policy, depth_bound, limits)
}

fn hat_step(
    program: &Program,
    value_policy: ValuePolicy,
    c: &HatConfiguration,
    store: &Store,
    reads: &mut Reads,
) -> Vec<Transition<Vec<AbsFrame>>> {
    step_with(
        program,
        value_policy,
        c.exp,
        &c.env,
        &c.kont,
        store,
        &mut ExplicitStacks,
        reads,
        &mut Vec::new(),
    )
}

pub fn oracle_analyze_with(
    program: &Program,
    value_policy: ValuePolicy,
    depth_bound: usize,
    limits: Limits,
) -> Result<OracleResult, AnalysisError> {
    let start = Instant::now();
    let mut configs: IndexSet<HatConfiguration> = IndexSet::new();
    let mut store = Store::new();
    let mut readers: HashMap<AbsAddr, BTreeSet<usize>> = HashMap::new();
    let mut queue = VecDeque::new();
    let mut queued = vec![true];
    let mut complete = true;
    let mut metrics = Metrics::default();

    configs.insert(HatConfiguration::initial(program));
    queue.push_back(0usize);

    while let Some(id) = queue.pop_front() {
        queued[id] = false;
        if metrics.states_visited % 256 == 0 {
            limits.check(configs.len(), start)?;
        }
        metrics.states_visited += 1;
        let config = configs[id].clone();
        let mut reads = Reads::default();
        let transitions = hat_step(program, value_policy, &config, &store, &mut reads);
        for a in reads.values {
            readers.entry(a).or_default().insert(id);
        }
        for t in transitions {
            metrics.transitions += 1;
            if let Some((a, vals)) = t.bind {
                if store.join_set(&a, &vals) {
                    for &r in readers.get(&a).into_iter().flatten() {
                        if !queued[r] {
                            queued[r] = true;
                            queue.push_back(r);
                        }
                    }
                }
            }
            let deep = t.kont.len() > depth_bound;
            let (tid, fresh) = configs.insert_full(HatConfiguration {
                exp: t.exp,
                env: t.env,
                kont: t.kont,
            });
            if fresh {
                queued.push(false);
                if deep {
                    complete = false;
                } else {
                    queued[tid] = true;
                    queue.push_back(tid);
                }
            }
        }
    }
    limits.check(configs.len(), start)?;
    metrics.configurations = configs.len();
    Ok(OracleResult {
        value_policy,
        reachable: configs.into_iter().collect(),
        store,
        bound: depth_bound,
        complete,
        metrics,
    })
}

pub type Vertex = (Label, AbsEnv);

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EdgeAction {
    Push(AbsFrame),
    Pop(AbsFrame),
    /// Conditionals, tail calls into closures and primitive `let`s.
    Epsilon,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DyckGraph {
    pub vertices: BTreeSet<Vertex>,
    pub edges: BTreeSet<(Vertex, EdgeAction, Vertex)>,
}

impl DyckGraph {
    pub fn push_edges(&self) -> impl Iterator<Item = &(Vertex, EdgeAction, Vertex)> {
        self.edges
            .iter()
            .filter(|(_, a, _)| matches!(a, EdgeAction::Push(_)))
    }

    pub fn pop_edges(&self) -> impl Iterator<Item = &(Vertex, EdgeAction, Vertex)> {
        self.edges
            .iter()
            .filter(|(_, a, _)| matches!(a, EdgeAction::Pop(_)))
    }

    pub fn to_dot(&self) -> String {
        let name = |(l, env): &Vertex| {
            let mut h = DefaultHasher::new();
            env.hash(&mut h);
            format!("{l}@{:08x}", h.finish() as u32)
        };
        let frame = |f: &AbsFrame| format!("{} {}", f.bind, f.ret);
        let mut out = String::from("digraph dsg {\n");
        for v in &self.vertices {
            let _ = writeln!(out, "  \"{}\";", name(v));
        }
        for (src, action, dst) in &self.edges {
            let label = match action {
                EdgeAction::Push(f) => format!("+{}", frame(f)),
                EdgeAction::Pop(f) => format!("-{}", frame(f)),
                EdgeAction::Epsilon => "ε".to_string(),
            };
            let _ = writeln!(out, "  \"{}\" -> \"{}\" [label=\"{label}\"];", name(src), name(dst));
        }
        out.push_str("}\n");
        out
    }
}

/// The Dyck state graph of a complete oracle fixed point: one vertex per
/// reachable control point, one edge per transition, labeled with its stack
/// action.
pub fn dsg_extract(program: &Program, oracle: &OracleResult) -> Result<DyckGraph, AnalysisError> {
    if !oracle.complete {
        return Err(AnalysisError::IncompleteOracle(oracle.bound));
    }
    let mut g = DyckGraph::default();
    for c in &oracle.reachable {
        let src = (c.exp, c.env.clone());
        g.vertices.insert(src.clone());
        for t in hat_step(program, oracle.value_policy, c, &oracle.store, &mut Reads::default()) {
            let dst = (t.exp, t.env);
            g.vertices.insert(dst.clone());
            let action = match t.action {
                StackAction::Push(f) => EdgeAction::Push(f),
                StackAction::Pop(f) => EdgeAction::Pop(f),
                StackAction::Keep => EdgeAction::Epsilon,
            };
            g.edges.insert((src.clone(), action, dst));
        }
    }
    Ok(g)
}

/// A stack read off a continuation store, top first.
pub type ImpliedStack = Vec<AbsKont>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImpliedStacks {
    pub stacks: BTreeSet<ImpliedStack>,
    /// No chain was cut at the depth bound.
    pub exhausted: bool,
}

type Memo = HashMap<(KontAddr, usize), Rc<(BTreeSet<ImpliedStack>, bool)>>;

fn unwind(ka: &KontAddr, kstore: &KStore, remaining: usize, memo: &mut Memo) -> Rc<(BTreeSet<ImpliedStack>, bool)> {
    if *ka == KontAddr::Halt {
        return Rc::new(([Vec::new()].into(), true));
    }
    if let Some(hit) = memo.get(&(ka.clone(), remaining)) {
        return hit.clone();
    }
    let konts = kstore.get(ka).into_iter().flatten();
    let mut stacks = BTreeSet::new();
    let mut exhausted = true;
    for k in konts {
        if remaining == 0 {
            exhausted = false;
            break;
        }
        let below = unwind(&k.tail, kstore, remaining - 1, memo);
        exhausted &= below.1;
        for rest in &below.0 {
            let mut s = Vec::with_capacity(rest.len() + 1);
            s.push(k.clone());
            s.extend_from_slice(rest);
            stacks.insert(s);
        }
    }
    let result = Rc::new((stacks, exhausted));
    memo.insert((ka.clone(), remaining), result.clone());
    result
}

/// Every complete stack of at most `depth_bound` frames that `ka` implies
/// through `kstore`.
pub fn implied_stacks(ka: &KontAddr, kstore: &KStore, depth_bound: usize) -> ImpliedStacks {
    let r = unwind(ka, kstore, depth_bound, &mut Memo::new());
    ImpliedStacks {
        stacks: r.0.clone(),
        exhausted: r.1,
    }
}

pub fn concretize_stack(stack: &[AbsKont]) -> Vec<AbsFrame> {
    stack.iter().map(|k| k.frame.clone()).collect()
}

pub fn concretize_config(c: &Configuration, stack: &[AbsKont]) -> HatConfiguration {
    HatConfiguration {
        exp: c.exp,
        env: c.env.clone(),
        kont: concretize_stack(stack),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PrecisionViolation {
    /// A finite-state configuration with an implied stack the oracle never
    /// reaches.
    MissingConfig {
        config: Configuration,
        implied_stack: ImpliedStack,
        missing_oracle_config: HatConfiguration,
    },
    /// Values the finite-state store holds that the oracle's does not.
    StoreExcess {
        addr: AbsAddr,
        finite: FlowSet,
        oracle: FlowSet,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrecisionReport {
    pub violations: Vec<PrecisionViolation>,
    pub checked_pairs: usize,
    pub oracle_complete: bool,
    /// Configurations with implied stacks deeper than the bound; these were
    /// checked only up to the bound.
    pub unexhausted: Vec<Configuration>,
}

impl PrecisionReport {
    pub fn is_precise(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn to_json(&self, program: &Program) -> serde_json::Value {
        let env = |e: &AbsEnv| e.to_string();
        let frames = |fs: &[AbsFrame]| fs.iter().map(|f| f.to_string()).collect::<Vec<_>>();
        let config = |c: &Configuration| json!({"exp": c.exp.0, "env": env(&c.env), "kont": c.kont.to_string()});
        let violations: Vec<_> = self
            .violations
            .iter()
            .map(|v| match v {
                PrecisionViolation::MissingConfig {
                    config: c,
                    implied_stack,
                    missing_oracle_config: h,
                } => json!({
                    "config": config(c),
                    "implied_stack": implied_stack.iter().map(|k| k.to_string()).collect::<Vec<_>>(),
                    "missing_oracle_config": {"exp": h.exp.0, "env": env(&h.env), "kont": frames(&h.kont)},
                }),
                PrecisionViolation::StoreExcess {
                    addr,
                    finite,
                    oracle,
                } => json!({
                    "address": addr.to_string(),
                    "finite": finite.iter().map(|v| v.render(program)).collect::<Vec<_>>(),
                    "oracle": oracle.iter().map(|v| v.render(program)).collect::<Vec<_>>(),
                }),
            })
            .collect();
        json!({
            "violations": violations,
            "checked_pairs": self.checked_pairs,
            "oracle_complete": self.oracle_complete,
            "unexhausted": self.unexhausted.len(),
        })
    }
}

/// Checks that every finite-state configuration, under each stack its
/// continuation address implies, is an oracle configuration, and that the
/// finite-state store is below the oracle's.
pub fn precision_check(
    finite: &AnalysisResult,
    oracle: &OracleResult,
    depth_bound: usize,
) -> Result<PrecisionReport, AnalysisError> {
    if !oracle.complete {
        return Err(AnalysisError::IncompleteOracle(oracle.bound));
    }
    let mut memo = Memo::new();
    let kas: BTreeSet<&KontAddr> = finite.reachable.iter().map(|c| &c.kont).collect();
    let stacks: HashMap<&KontAddr, (Vec<Vec<AbsFrame>>, Vec<ImpliedStack>, bool)> = kas
        .into_iter()
        .map(|ka| {
            let r = unwind(ka, &finite.kstore, depth_bound, &mut memo);
            let implied: Vec<ImpliedStack> = r.0.iter().cloned().collect();
            let frames = implied.iter().map(|s| concretize_stack(s)).collect();
            (ka, (frames, implied, r.1))
        })
        .collect();
    drop(memo);

    let configs: Vec<&Configuration> = finite.reachable.iter().collect();
    let per_config: Vec<(Vec<PrecisionViolation>, usize, bool)> = configs
        .par_iter()
        .map(|c| {
            let (frames, implied, exhausted) = &stacks[&c.kont];
            let mut violations = Vec::new();
            for (kont, stack) in frames.iter().zip(implied) {
                let h = HatConfiguration {
                    exp: c.exp,
                    env: c.env.clone(),
                    kont: kont.clone(),
                };
                if !oracle.reachable.contains(&h) {
                    violations.push(PrecisionViolation::MissingConfig {
                        config: (*c).clone(),
                        implied_stack: stack.clone(),
                        missing_oracle_config: h,
                    });
                }
            }
            (violations, frames.len(), *exhausted)
        })
        .collect();

    let mut report = PrecisionReport {
        violations: Vec::new(),
        checked_pairs: 0,
        oracle_complete: oracle.complete,
        unexhausted: Vec::new(),
    };
    for (c, (violations, checked, exhausted)) in configs.into_iter().zip(per_config) {
        report.violations.extend(violations);
        report.checked_pairs += checked;
        if !exhausted {
            report.unexhausted.push(c.clone());
        }
    }
    for (addr, vals) in finite.store.iter() {
        let theirs = oracle.store.lookup(addr);
        if !vals.is_subset(&theirs) {
            report.violations.push(PrecisionViolation::StoreExcess {
                addr: addr.clone(),
                finite: vals.clone(),
                oracle: theirs,
            });
        }
    }
    Ok(report)
}

/// P4F addresses with continuations whose entry configuration
/// `(e, ρ, (e, ρ))` is not reachable. Empty for a correct P4F fixed point.
pub fn missing_entries(result: &AnalysisResult) -> Vec<KontAddr> {
    if result.policy.kont != KontPolicy::P4F {
        return Vec::new();
    }
    result
        .kstore
        .keys()
        .filter(|ka| match ka {
            KontAddr::P4F(e, env) => !result.reachable.contains(&Configuration {
                exp: *e,
                env: env.clone(),
                kont: (*ka).clone(),
            }),
            _ => false,
        })
        .cloned()
        .collect()
}
