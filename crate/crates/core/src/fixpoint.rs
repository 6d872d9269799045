//! The store-widened collecting semantics: a set of reachable
//! configurations paired with one global value store and one global
//! continuation store.
//!
//! [`analyze`] computes the fixed point with a worklist that re-steps a
//! configuration only when a store location it read has grown.
//! [`widened_transfer`] is the whole-state transfer function, used by
//! [`kleene`] and by tests that check the worklist against it.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::time::{Duration, Instant};

use indexmap::IndexSet;
use serde::Serialize;
use thiserror::Error;

use crate::alloc::{PolicyPair, StoreInterner};
use crate::domain::{AbsAddr, FlowSet, KStore, KontAddr, Store, StoreId};
use crate::machine::{abs_inject, abs_step, step_config, AbstractState, Configuration, Diagnostic};
use crate::syntax::{Program, Var};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalysisError {
    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("oracle did not complete within stack depth {0}")]
    IncompleteOracle(usize),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Metrics {
    /// Distinct configurations at the fixed point.
    pub configurations: usize,
    /// Worklist items processed; a configuration re-stepped after a store
    /// change counts again.
    pub states_visited: usize,
    /// Successor edges produced, counting repeats.
    pub transitions: usize,
    /// Worklist generations (for [`kleene`], applications of the transfer).
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum WorklistOrder {
    #[default]
    Fifo,
    Lifo,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Limits {
    pub max_configurations: Option<usize>,
    pub timeout: Option<Duration>,
}

impl Limits {
    pub(crate) fn check(&self, configurations: usize, start: Instant) -> Result<(), AnalysisError> {
        if let Some(max) = self.max_configurations {
            if configurations > max {
                return Err(AnalysisError::ResourceLimit(format!(
                    "more than {max} configurations"
                )));
            }
        }
        if let Some(t) = self.timeout {
            if start.elapsed() > t {
                return Err(AnalysisError::ResourceLimit(format!(
                    "exceeded {} ms",
                    t.as_millis()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Options {
    pub order: WorklistOrder,
    pub limits: Limits,
}

#[derive(Debug, Clone)]
pub struct AnalysisResult {
    pub policy: PolicyPair,
    pub reachable: BTreeSet<Configuration>,
    pub store: Store,
    pub kstore: KStore,
    pub metrics: Metrics,
    /// Operator values that produced no successor, deduplicated.
    pub diagnostics: BTreeSet<Diagnostic>,
    /// Store snapshots named by AAC continuation addresses.
    pub interner: StoreInterner,
}

impl AnalysisResult {
    /// `({(root, ∅, halt)}, ⊥, ⊥)`.
    pub fn initial(program: &Program, policy: PolicyPair) -> AnalysisResult {
        AnalysisResult {
            policy,
            reachable: [Configuration::initial(program)].into(),
            store: Store::new(),
            kstore: KStore::new(),
            metrics: Metrics {
                configurations: 1,
                ..Metrics::default()
            },
            diagnostics: BTreeSet::new(),
            interner: StoreInterner::new(),
        }
    }

    /// Equality of the three lattice components, ignoring metrics.
    pub fn same_fixpoint(&self, other: &AnalysisResult) -> bool {
        self.reachable == other.reachable && self.store == other.store && self.kstore == other.kstore
    }

    /// Componentwise order.
    pub fn leq(&self, other: &AnalysisResult) -> bool {
        self.reachable.is_subset(&other.reachable)
            && self.store.leq(&other.store)
            && self.kstore.leq(&other.kstore)
    }

    /// Store entries grouped by the variable each address binds.
    pub fn flows(&self) -> BTreeMap<Var, BTreeMap<AbsAddr, FlowSet>> {
        flows_of(&self.store)
    }

    /// Every store entry whose address binds `name`.
    pub fn flow_query(
        &self,
        program: &Program,
        name: &str,
    ) -> Result<BTreeMap<AbsAddr, FlowSet>, AnalysisError> {
        let x = Var::new(name);
        if !program.binder_table().contains_key(&x) {
            return Err(AnalysisError::UnknownVariable(name.to_string()));
        }
        Ok(self
            .store
            .iter()
            .filter(|(a, _)| *a.var() == x)
            .map(|(a, vs)| (a.clone(), vs.clone()))
            .collect())
    }
}

pub fn flows_of(store: &Store) -> BTreeMap<Var, BTreeMap<AbsAddr, FlowSet>> {
    let mut out: BTreeMap<Var, BTreeMap<AbsAddr, FlowSet>> = BTreeMap::new();
    for (a, vs) in store.iter() {
        out.entry(a.var().clone())
            .or_default()
            .insert(a.clone(), vs.clone());
    }
    out
}

/// One application of the widened transfer function: step every reachable
/// configuration against the global stores, add the successors and the
/// initial configuration, and join every successor's store extensions.
pub fn widened_transfer(xi: &AnalysisResult, program: &Program, policy: PolicyPair) -> AnalysisResult {
    let mut next = xi.clone();
    next.policy = policy;
    next.reachable.insert(Configuration::initial(program));
    let mut snapshot: Option<StoreId> = None;
    for config in &xi.reachable {
        let interner = &mut next.interner;
        let step = step_config(program, policy, config, &xi.store, &xi.kstore, || {
            *snapshot.get_or_insert_with(|| interner.intern(&xi.store))
        });
        next.metrics.states_visited += 1;
        next.diagnostics.extend(step.diagnostics);
        for t in step.transitions {
            next.metrics.transitions += 1;
            if let Some((a, vals)) = t.bind {
                next.store.join_set(&a, &vals);
            }
            if let Some((ka, k)) = t.push {
                next.kstore.join_at(ka, [k]);
            }
            next.reachable.insert(Configuration {
                exp: t.exp,
                env: t.env,
                kont: t.kont,
            });
        }
    }
    next.metrics.iterations += 1;
    next.metrics.configurations = next.reachable.len();
    next
}

/// Kleene iteration of [`widened_transfer`] from the initial result;
/// `observe` sees every iterate.
pub fn kleene(
    program: &Program,
    policy: PolicyPair,
    limits: Limits,
    mut observe: impl FnMut(&AnalysisResult),
) -> Result<AnalysisResult, AnalysisError> {
    let start = Instant::now();
    let mut current = AnalysisResult::initial(program, policy);
    observe(&current);
    loop {
        let next = widened_transfer(&current, program, policy);
        observe(&next);
        limits.check(next.reachable.len(), start)?;
        if next.same_fixpoint(&current) {
            return Ok(next);
        }
        current = next;
    }
}

pub fn analyze(program: &Program, policy: PolicyPair) -> AnalysisResult {
    analyze_with(program, policy, Options::default()).expect("no limits configured")
}

struct Worklist {
    order: WorklistOrder,
    items: VecDeque<(usize, usize)>,
    queued: Vec<bool>,
}

impl Worklist {
    fn push(&mut self, id: usize, generation: usize) {
        if self.queued.len() <= id {
            self.queued.resize(id + 1, false);
        }
        if !self.queued[id] {
            self.queued[id] = true;
            self.items.push_back((id, generation));
        }
    }

    fn pop(&mut self) -> Option<(usize, usize)> {
        let item = match self.order {
            WorklistOrder::Fifo => self.items.pop_front(),
            WorklistOrder::Lifo => self.items.pop_back(),
        }?;
        self.queued[item.0] = false;
        Some(item)
    }
}

/// Worklist fixed point of the widened transfer function.
pub fn analyze_with(
    program: &Program,
    policy: PolicyPair,
    options: Options,
) -> Result<AnalysisResult, AnalysisError> {
    let start = Instant::now();
    let mut configs: IndexSet<Configuration> = IndexSet::new();
    let mut store = Store::new();
    let mut kstore = KStore::new();
    let mut value_readers: HashMap<AbsAddr, BTreeSet<usize>> = HashMap::new();
    let mut kont_readers: HashMap<KontAddr, BTreeSet<usize>> = HashMap::new();
    let mut store_readers: BTreeSet<usize> = BTreeSet::new();
    let mut interner = StoreInterner::new();
    let mut version = 0u64;
    let mut snapshot: Option<(u64, StoreId)> = None;
    let mut diagnostics = BTreeSet::new();
    let mut metrics = Metrics::default();
    let mut work = Worklist {
        order: options.order,
        items: VecDeque::new(),
        queued: Vec::new(),
    };

    configs.insert(Configuration::initial(program));
    work.push(0, 0);

    while let Some((id, generation)) = work.pop() {
        if metrics.states_visited % 256 == 0 {
            options.limits.check(configs.len(), start)?;
        }
        metrics.states_visited += 1;
        metrics.iterations = metrics.iterations.max(generation + 1);
        let config = configs[id].clone();
        let step = step_config(program, policy, &config, &store, &kstore, || match snapshot {
            Some((v, sid)) if v == version => sid,
            _ => {
                let sid = interner.intern(&store);
                snapshot = Some((version, sid));
                sid
            }
        });
        for a in step.reads.values {
            value_readers.entry(a).or_default().insert(id);
        }
        for ka in step.reads.konts {
            kont_readers.entry(ka).or_default().insert(id);
        }
        if step.reads.whole_store {
            store_readers.insert(id);
        }
        diagnostics.extend(step.diagnostics);

        for t in step.transitions {
            metrics.transitions += 1;
            if let Some((a, vals)) = t.bind {
                if store.join_set(&a, &vals) {
                    version += 1;
                    for &r in value_readers.get(&a).into_iter().flatten() {
                        work.push(r, generation + 1);
                    }
                    for &r in &store_readers {
                        work.push(r, generation + 1);
                    }
                }
            }
            if let Some((ka, k)) = t.push {
                if kstore.join_at(ka.clone(), [k]) {
                    for &r in kont_readers.get(&ka).into_iter().flatten() {
                        work.push(r, generation + 1);
                    }
                }
            }
            let (tid, fresh) = configs.insert_full(Configuration {
                exp: t.exp,
                env: t.env,
                kont: t.kont,
            });
            if fresh {
                work.push(tid, generation + 1);
            }
        }
    }
    options.limits.check(configs.len(), start)?;
    debug_assert!(kstore.get(&KontAddr::Halt).is_none());

    metrics.configurations = configs.len();
    Ok(AnalysisResult {
        policy,
        reachable: configs.into_iter().collect(),
        store,
        kstore,
        metrics,
        diagnostics,
        interner,
    })
}

/// The collecting semantics with a store per state. Exponential; for
/// cross-checking the widened analysis on small programs.
pub fn naive_collect(
    program: &Program,
    policy: PolicyPair,
    state_limit: usize,
) -> Result<BTreeSet<AbstractState>, AnalysisError> {
    let mut interner = StoreInterner::new();
    let init = abs_inject(program);
    let mut seen: BTreeSet<AbstractState> = [init.clone()].into();
    let mut frontier = vec![init];
    while let Some(state) = frontier.pop() {
        for next in abs_step(program, policy, &state, &mut interner) {
            if !seen.contains(&next) {
                if seen.len() >= state_limit {
                    return Err(AnalysisError::ResourceLimit(format!(
                        "more than {state_limit} states"
                    )));
                }
                seen.insert(next.clone());
                frontier.push(next);
            }
        }
    }
    Ok(seen)
}
