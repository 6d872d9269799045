//! The abstract transition relation over labeled ANF.
//!
//! One set of transition rules serves both the finite-state machine, whose
//! continuations are addresses into a continuation store, and the
//! unbounded-stack machine, whose continuations are explicit frame lists.
//! The two differ only in how a frame is pushed and how topmost frames are
//! found; see [`Continuations`].

use std::collections::BTreeSet;
use std::sync::Arc;

use crate::alloc::{KontPolicy, PolicyPair, StoreInterner, ValuePolicy};
use crate::domain::{
    AbsAddr, AbsClo, AbsEnv, AbsFrame, AbsKont, AbsValue, FlowSet, KStore, KontAddr, Store,
    StoreId,
};
use crate::syntax::{AtomicExp, ExpKind, Label, Prim, Program};


/// A store-less state of the finite machine.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Configuration {
    pub exp: Label,
    pub env: AbsEnv,
    pub kont: KontAddr,
}

impl Configuration {
    pub fn initial(program: &Program) -> Configuration {
        Configuration {
            exp: program.root().label,
            env: AbsEnv::empty(),
            kont: KontAddr::Halt,
        }
    }
}

/// A state of the finite machine with its own stores.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AbstractState {
    pub exp: Label,
    pub env: AbsEnv,
    pub store: Store,
    pub kstore: KStore,
    pub kont: KontAddr,
}

impl AbstractState {
    pub fn config(&self) -> Configuration {
        Configuration {
            exp: self.exp,
            env: self.env.clone(),
            kont: self.kont.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StackAction {
    Push(AbsFrame),
    Pop(AbsFrame),
    /// Conditionals, tail calls into closures and primitive `let`s leave
    /// the stack alone.
    Keep,
}

/// One successor of a transition, expressed as the target control point and
/// the store extensions it makes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transition<K> {
    pub exp: Label,
    pub env: AbsEnv,
    pub kont: K,
    pub bind: Option<(AbsAddr, Arc<FlowSet>)>,
    pub push: Option<(KontAddr, AbsKont)>,
    pub action: StackAction,
}

/// Store locations a transition depended on.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Reads {
    pub values: Vec<AbsAddr>,
    pub konts: Vec<KontAddr>,
    /// Set when the continuation allocator consulted the whole value store.
    pub whole_store: bool,
}

/// How a machine represents the stack.
pub trait Continuations {
    type Kont: Clone;

    /// The continuation after pushing `frame` on a call from
    /// `(source, source_env)` into `(target, target_env)`, plus any
    /// continuation-store extension that push makes.
    #[allow(clippy::too_many_arguments)]
    fn push(
        &mut self,
        current: &Self::Kont,
        frame: AbsFrame,
        source: Label,
        source_env: &AbsEnv,
        target: Label,
        target_env: &AbsEnv,
        reads: &mut Reads,
    ) -> (Self::Kont, Option<(KontAddr, AbsKont)>);

    /// Every possible topmost frame with the continuation beneath it; empty
    /// for the empty stack.
    fn pop(&mut self, current: &Self::Kont, reads: &mut Reads) -> Vec<(AbsFrame, Self::Kont)>;
}

/// Store-allocated continuations: stacks are linked lists threaded through
/// a continuation store.
pub struct StoreAllocated<'a, F> {
    pub policy: KontPolicy,
    pub kstore: &'a KStore,
    pub store_id: F,
}

impl<F: FnMut() -> StoreId> Continuations for StoreAllocated<'_, F> {
    type Kont = KontAddr;

    fn push(
        &mut self,
        current: &KontAddr,
        frame: AbsFrame,
        source: Label,
        source_env: &AbsEnv,
        target: Label,
        target_env: &AbsEnv,
        reads: &mut Reads,
    ) -> (KontAddr, Option<(KontAddr, AbsKont)>) {
        if self.policy.reads_store() {
            reads.whole_store = true;
        }
        let store_id = &mut self.store_id;
        let addr = self
            .policy
            .alloc(source, source_env, store_id, target, target_env);
        debug_assert_ne!(addr, KontAddr::Halt);
        let kont = AbsKont {
            frame,
            tail: current.clone(),
        };
        (addr.clone(), Some((addr, kont)))
    }

    fn pop(&mut self, current: &KontAddr, reads: &mut Reads) -> Vec<(AbsFrame, KontAddr)> {
        if *current == KontAddr::Halt {
            return Vec::new();
        }
        reads.konts.push(current.clone());
        self.kstore
            .get(current)
            .into_iter()
            .flatten()
            .map(|k| (k.frame.clone(), k.tail.clone()))
            .collect()
    }
}

/// Explicit, unbounded stacks, top first.
pub struct ExplicitStacks;

impl Continuations for ExplicitStacks {
    type Kont = Vec<AbsFrame>;

    fn push(
        &mut self,
        current: &Vec<AbsFrame>,
        frame: AbsFrame,
        _source: Label,
        _source_env: &AbsEnv,
        _target: Label,
        _target_env: &AbsEnv,
        _reads: &mut Reads,
    ) -> (Vec<AbsFrame>, Option<(KontAddr, AbsKont)>) {
        let mut stack = Vec::with_capacity(current.len() + 1);
        stack.push(frame);
        stack.extend_from_slice(current);
        (stack, None)
    }

    fn pop(&mut self, current: &Vec<AbsFrame>, _reads: &mut Reads) -> Vec<(AbsFrame, Vec<AbsFrame>)> {
        match current.split_first() {
            Some((top, rest)) => vec![(top.clone(), rest.to_vec())],
            None => Vec::new(),
        }
    }
}

/// Abstract atomic evaluation. Unbound addresses evaluate to the empty set.
pub fn abs_atomic_eval(program: &Program, ae: &AtomicExp, env: &AbsEnv, store: &Store) -> FlowSet {
    match ae {
        AtomicExp::Var(x) => env.get(x).map(|a| store.lookup(a)).unwrap_or_default(),
        AtomicExp::Lam(lam) => {
            let env = env.extend_trimmed(None, program.lambda_free_vars(lam.label()));
            [AbsValue::Clo(AbsClo {
                lam: lam.label(),
                env,
            })]
            .into()
        }
        AtomicExp::Bool(b) => [AbsValue::Bool(*b)].into(),
        AtomicExp::Num(_) => [AbsValue::Num].into(),
        AtomicExp::Prim(p) => [AbsValue::Prim(*p)].into(),
    }
}

fn eval_reading(
    program: &Program,
    ae: &AtomicExp,
    env: &AbsEnv,
    store: &Store,
    reads: &mut Reads,
) -> FlowSet {
    if let AtomicExp::Var(x) = ae {
        if let Some(a) = env.get(x) {
            reads.values.push(a.clone());
        }
    }
    abs_atomic_eval(program, ae, env, store)
}

/// Result of applying a primitive (or partial application) to every value
/// in `args`; `None` when the operator is not a primitive.
pub fn abs_apply_prim(op: &AbsValue, args: &FlowSet) -> Option<FlowSet> {
    let mut out = FlowSet::new();
    match op {
        AbsValue::Prim(p) => {
            for arg in args {
                match (p, arg) {
                    (Prim::Not, AbsValue::Bool(false)) => {
                        out.insert(AbsValue::Bool(true));
                    }
                    (Prim::Not, _) => {
                        out.insert(AbsValue::Bool(false));
                    }
                    (Prim::IsZero, AbsValue::Num) => {
                        out.insert(AbsValue::Bool(true));
                        out.insert(AbsValue::Bool(false));
                    }
                    (Prim::Add1 | Prim::Sub1, AbsValue::Num) => {
                        out.insert(AbsValue::Num);
                    }
                    (p, AbsValue::Num) if p.is_binary() => {
                        out.insert(AbsValue::PrimPartial(*p, Box::new(AbsValue::Num)));
                    }
                    _ => {}
                }
            }
        }
        AbsValue::PrimPartial(_, _) => {
            if args.contains(&AbsValue::Num) {
                out.insert(AbsValue::Num);
            }
        }
        _ => return None,
    }
    Some(out)
}

/// Why a value in operator position produced no successor.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Diagnostic {
    pub at: Label,
    pub message: String,
}

/// The successors of control point `(exp, env, kont)` against `store`.
#[allow(clippy::too_many_arguments)]
pub fn step_with<C: Continuations>(
    program: &Program,
    value_policy: ValuePolicy,
    exp: Label,
    env: &AbsEnv,
    kont: &C::Kont,
    store: &Store,
    conts: &mut C,
    reads: &mut Reads,
    diagnostics: &mut Vec<Diagnostic>,
) -> Vec<Transition<C::Kont>> {
    let node = program.node(exp);
    let mut out = Vec::new();
    let mut no_successor = |v: &AbsValue, why: &str| {
        diagnostics.push(Diagnostic {
            at: exp,
            message: format!("{why}: {}", v.render(program)),
        })
    };
    // Binds `frame.bind` to `values` and resumes the frame.
    let returns = |values: &Arc<FlowSet>,
                       conts: &mut C,
                       reads: &mut Reads,
                       out: &mut Vec<Transition<C::Kont>>| {
        for (frame, tail) in conts.pop(kont, reads) {
            let a = value_policy.alloc(&frame.bind, exp);
            let env2 = frame
                .env
                .extend_trimmed(Some((&frame.bind, &a)), program.free_vars_at(frame.ret));
            out.push(Transition {
                exp: frame.ret,
                env: env2,
                kont: tail,
                bind: Some((a, values.clone())),
                push: None,
                action: StackAction::Pop(frame),
            });
        }
    };
    match &node.kind {
        ExpKind::LetCall {
            bind,
            func,
            arg,
            body,
        } => {
            let fvals = eval_reading(program, func, env, store, reads);
            let avals = Arc::new(eval_reading(program, arg, env, store, reads));
            let frame_vars = program.free_vars_at(body.label).iter().filter(|x| *x != bind);
            let frame = AbsFrame {
                bind: bind.clone(),
                ret: body.label,
                env: env.extend_trimmed(None, frame_vars),
            };
            for v in &fvals {
                match v {
                    AbsValue::Clo(clo) => {
                        let lam = program.lambda(clo.lam);
                        let a = value_policy.alloc(&lam.param, exp);
                        let env2 = clo.env.extend_trimmed(
                            Some((&lam.param, &a)),
                            program.free_vars_at(lam.label()),
                        );
                        let (kont2, push) =
                            conts.push(kont, frame.clone(), exp, env, lam.label(), &env2, reads);
                        out.push(Transition {
                            exp: lam.label(),
                            env: env2,
                            kont: kont2,
                            bind: Some((a, avals.clone())),
                            push,
                            action: StackAction::Push(frame.clone()),
                        });
                    }
                    _ => match abs_apply_prim(v, &avals) {
                        Some(result) if !result.is_empty() => {
                            let a = value_policy.alloc(bind, exp);
                            let env2 = env
                                .extend_trimmed(Some((bind, &a)), program.free_vars_at(body.label));
                            out.push(Transition {
                                exp: body.label,
                                env: env2,
                                kont: kont.clone(),
                                bind: Some((a, Arc::new(result))),
                                push: None,
                                action: StackAction::Keep,
                            });
                        }
                        Some(_) => no_successor(v, "primitive has no result"),
                        None => no_successor(v, "not callable"),
                    },
                }
            }
        }
        ExpKind::Return(ae) => {
            let vals = Arc::new(eval_reading(program, ae, env, store, reads));
            returns(&vals, conts, reads, &mut out);
        }
        ExpKind::If { cond, then, els } => {
            let cvals = eval_reading(program, cond, env, store, reads);
            let num = cvals.contains(&AbsValue::Num);
            let branch = |target: Label| Transition {
                exp: target,
                env: env.extend_trimmed(None, program.free_vars_at(target)),
                kont: kont.clone(),
                bind: None,
                push: None,
                action: StackAction::Keep,
            };
            if num || cvals.contains(&AbsValue::Bool(true)) {
                out.push(branch(then.label));
            }
            if num || cvals.contains(&AbsValue::Bool(false)) {
                out.push(branch(els.label));
            }
        }
        ExpKind::TailCall { func, arg } => {
            let fvals = eval_reading(program, func, env, store, reads);
            let avals = Arc::new(eval_reading(program, arg, env, store, reads));
            for v in &fvals {
                match v {
                    AbsValue::Clo(clo) => {
                        let lam = program.lambda(clo.lam);
                        let a = value_policy.alloc(&lam.param, exp);
                        let env2 = clo.env.extend_trimmed(
                            Some((&lam.param, &a)),
                            program.free_vars_at(lam.label()),
                        );
                        out.push(Transition {
                            exp: lam.label(),
                            env: env2,
                            kont: kont.clone(),
                            bind: Some((a, avals.clone())),
                            push: None,
                            action: StackAction::Keep,
                        });
                    }
                    _ => match abs_apply_prim(v, &avals) {
                        // A primitive in tail position returns its result.
                        Some(result) if !result.is_empty() => {
                            returns(&Arc::new(result), conts, reads, &mut out)
                        }
                        Some(_) => no_successor(v, "primitive has no result"),
                        None => no_successor(v, "not callable"),
                    },
                }
            }
        }
    }
    out
}

/// Successors of a configuration against global stores, with the locations
/// the step read.
pub struct ConfigStep {
    pub transitions: Vec<Transition<KontAddr>>,
    pub reads: Reads,
    pub diagnostics: Vec<Diagnostic>,
}

pub fn step_config(
    program: &Program,
    policy: PolicyPair,
    config: &Configuration,
    store: &Store,
    kstore: &KStore,
    store_id: impl FnMut() -> StoreId,
) -> ConfigStep {
    let mut conts = StoreAllocated {
        policy: policy.kont,
        kstore,
        store_id,
    };
    let mut reads = Reads::default();
    let mut diagnostics = Vec::new();
    let transitions = step_with(
        program,
        policy.value,
        config.exp,
        &config.env,
        &config.kont,
        store,
        &mut conts,
        &mut reads,
        &mut diagnostics,
    );
    ConfigStep {
        transitions,
        reads,
        diagnostics,
    }
}

/// `(root, ∅, ⊥, ⊥, halt)`.
pub fn abs_inject(program: &Program) -> AbstractState {
    AbstractState {
        exp: program.root().label,
        env: AbsEnv::empty(),
        store: Store::new(),
        kstore: KStore::new(),
        kont: KontAddr::Halt,
    }
}

/// Applies a transition's store extensions to copies of `store`/`kstore`.
pub fn apply_transition(
    t: &Transition<KontAddr>,
    store: &Store,
    kstore: &KStore,
) -> AbstractState {
    let mut store = store.clone();
    let mut kstore = kstore.clone();
    if let Some((a, vals)) = &t.bind {
        store.join_set(a, vals);
    }
    if let Some((ka, k)) = &t.push {
        kstore.join_at(ka.clone(), [k.clone()]);
    }
    AbstractState {
        exp: t.exp,
        env: t.env.clone(),
        store,
        kstore,
        kont: t.kont.clone(),
    }
}

/// The finite-state transition relation: every successor of `state`, each
/// carrying its own joined stores.
pub fn abs_step(
    program: &Program,
    policy: PolicyPair,
    state: &AbstractState,
    interner: &mut StoreInterner,
) -> BTreeSet<AbstractState> {
    let step = step_config(
        program,
        policy,
        &state.config(),
        &state.store,
        &state.kstore,
        || interner.intern(&state.store),
    );
    step.transitions
        .iter()
        .map(|t| apply_transition(t, &state.store, &state.kstore))
        .collect()
}
