//! A concrete CESK interpreter. Ground truth for soundness tests.
//!
//! Each store cell remembers the variable it binds and the label of the
//! expression that allocated it, so a concrete binding can be mapped to the
//! abstract address any value policy would have chosen.

use std::fmt;

use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::syntax::{AtomicExp, ExpKind, Label, Prim, Program, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct CAddr(pub usize);

pub type CEnv = im::OrdMap<Var, CAddr>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CValue {
    Clo { lam: Label, env: CEnv },
    Bool(bool),
    Num(i64),
    Prim(Prim),
    PrimPartial(Prim, i64),
}

impl fmt::Display for CValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CValue::Clo { lam, .. } => write!(f, "#<closure {lam}>"),
            CValue::Bool(true) => f.write_str("#t"),
            CValue::Bool(false) => f.write_str("#f"),
            CValue::Num(n) => write!(f, "{n}"),
            CValue::Prim(p) => write!(f, "{p}"),
            CValue::PrimPartial(p, n) => write!(f, "({p} {n})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cell {
    pub var: Var,
    /// Label of the expression whose transition allocated this cell.
    pub site: Label,
    pub value: CValue,
}

/// Append-only store; addresses are cell indices.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CStore(im::Vector<Cell>);

impl CStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn alloc(&mut self, var: Var, site: Label, value: CValue) -> CAddr {
        self.0.push_back(Cell { var, site, value });
        CAddr(self.0.len() - 1)
    }

    pub fn get(&self, a: CAddr) -> Option<&Cell> {
        self.0.get(a.0)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (CAddr, &Cell)> {
        self.0.iter().enumerate().map(|(i, c)| (CAddr(i), c))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CFrame {
    pub bind: Var,
    pub ret: Label,
    pub env: CEnv,
}

/// Top of stack first.
pub type CKont = im::Vector<CFrame>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CState {
    pub exp: Label,
    pub env: CEnv,
    pub store: CStore,
    pub kont: CKont,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConcreteError {
    #[error("unbound variable `{0}`")]
    UnboundVariable(Var),
    #[error("stuck at {at}: {reason}")]
    Stuck { at: Label, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Step {
    Next(CState),
    Halted(CValue),
}

pub fn concrete_inject(program: &Program) -> CState {
    CState {
        exp: program.root().label,
        env: CEnv::new(),
        store: CStore::new(),
        kont: CKont::new(),
    }
}

fn trim<'a>(env: &CEnv, keep: impl IntoIterator<Item = &'a Var>) -> CEnv {
    keep.into_iter()
        .filter_map(|x| env.get(x).map(|a| (x.clone(), *a)))
        .collect()
}

pub fn concrete_atomic_eval(
    program: &Program,
    ae: &AtomicExp,
    env: &CEnv,
    store: &CStore,
) -> Result<CValue, ConcreteError> {
    match ae {
        AtomicExp::Var(x) => env
            .get(x)
            .and_then(|a| store.get(*a))
            .map(|c| c.value.clone())
            .ok_or_else(|| ConcreteError::UnboundVariable(x.clone())),
        AtomicExp::Lam(lam) => Ok(CValue::Clo {
            lam: lam.label(),
            env: trim(env, program.lambda_free_vars(lam.label())),
        }),
        AtomicExp::Bool(b) => Ok(CValue::Bool(*b)),
        AtomicExp::Num(n) => Ok(CValue::Num(*n)),
        AtomicExp::Prim(p) => Ok(CValue::Prim(*p)),
    }
}

/// `Ok(None)` when `op` is not a primitive.
fn apply_prim(op: &CValue, arg: &CValue) -> Option<Result<CValue, String>> {
    let num = |v: &CValue| match v {
        CValue::Num(n) => Ok(*n),
        other => Err(format!("expected a number, got {other}")),
    };
    let overflow = || "integer overflow".to_string();
    let result = match op {
        CValue::Prim(Prim::Not) => Ok(CValue::Bool(*arg == CValue::Bool(false))),
        CValue::Prim(Prim::IsZero) => num(arg).map(|n| CValue::Bool(n == 0)),
        CValue::Prim(Prim::Add1) => {
            num(arg).and_then(|n| n.checked_add(1).map(CValue::Num).ok_or_else(overflow))
        }
        CValue::Prim(Prim::Sub1) => {
            num(arg).and_then(|n| n.checked_sub(1).map(CValue::Num).ok_or_else(overflow))
        }
        CValue::Prim(p) => num(arg).map(|n| CValue::PrimPartial(*p, n)),
        CValue::PrimPartial(p, a) => num(arg).and_then(|b| {
            match p {
                Prim::Add => a.checked_add(b),
                Prim::Sub => a.checked_sub(b),
                Prim::Mul => a.checked_mul(b),
                _ => unreachable!("only binary primitives are partially applied"),
            }
            .map(CValue::Num)
            .ok_or_else(overflow)
        }),
        _ => return None,
    };
    Some(result)
}

/// The concrete transition function.
pub fn concrete_step(program: &Program, s: &CState) -> Result<Step, ConcreteError> {
    let node = program.node(s.exp);
    let eval = |ae: &AtomicExp| concrete_atomic_eval(program, ae, &s.env, &s.store);
    let stuck = |reason: String| ConcreteError::Stuck { at: s.exp, reason };
    // Delivers `value` to the top frame, or halts on the empty stack.
    let ret = |value: CValue, mut store: CStore| -> Step {
        let mut kont = s.kont.clone();
        match kont.pop_front() {
            None => Step::Halted(value),
            Some(frame) => {
                let a = store.alloc(frame.bind.clone(), s.exp, value);
                let mut env = trim(&frame.env, program.free_vars_at(frame.ret));
                if program.free_vars_at(frame.ret).contains(&frame.bind) {
                    env.insert(frame.bind.clone(), a);
                }
                Step::Next(CState {
                    exp: frame.ret,
                    env,
                    store,
                    kont,
                })
            }
        }
    };
    let enter = |lam: Label, clo_env: &CEnv, arg: CValue, kont: CKont| -> Step {
        let param = program.lambda(lam).param.clone();
        let mut store = s.store.clone();
        let a = store.alloc(param.clone(), s.exp, arg);
        let mut env = trim(clo_env, program.free_vars_at(lam));
        if program.free_vars_at(lam).contains(&param) {
            env.insert(param, a);
        }
        Step::Next(CState {
            exp: lam,
            env,
            store,
            kont,
        })
    };
    match &node.kind {
        ExpKind::LetCall {
            bind,
            func,
            arg,
            body,
        } => {
            let f = eval(func)?;
            let v = eval(arg)?;
            match &f {
                CValue::Clo { lam, env } => {
                    let frame_vars = program.free_vars_at(body.label).iter().filter(|x| *x != bind);
                    let mut kont = s.kont.clone();
                    kont.push_front(CFrame {
                        bind: bind.clone(),
                        ret: body.label,
                        env: trim(&s.env, frame_vars),
                    });
                    Ok(enter(*lam, env, v, kont))
                }
                _ => {
                    let result = apply_prim(&f, &v)
                        .ok_or_else(|| stuck(format!("{f} is not callable")))?
                        .map_err(stuck)?;
                    let mut store = s.store.clone();
                    let a = store.alloc(bind.clone(), s.exp, result);
                    let mut env = trim(&s.env, program.free_vars_at(body.label));
                    if program.free_vars_at(body.label).contains(bind) {
                        env.insert(bind.clone(), a);
                    }
                    Ok(Step::Next(CState {
                        exp: body.label,
                        env,
                        store,
                        kont: s.kont.clone(),
                    }))
                }
            }
        }
        ExpKind::Return(ae) => Ok(ret(eval(ae)?, s.store.clone())),
        ExpKind::If { cond, then, els } => {
            let target = match eval(cond)? {
                CValue::Bool(true) => then.label,
                CValue::Bool(false) => els.label,
                other => return Err(stuck(format!("condition {other} is not a boolean"))),
            };
            Ok(Step::Next(CState {
                exp: target,
                env: trim(&s.env, program.free_vars_at(target)),
                store: s.store.clone(),
                kont: s.kont.clone(),
            }))
        }
        ExpKind::TailCall { func, arg } => {
            let f = eval(func)?;
            let v = eval(arg)?;
            match &f {
                CValue::Clo { lam, env } => Ok(enter(*lam, env, v, s.kont.clone())),
                _ => {
                    let result = apply_prim(&f, &v)
                        .ok_or_else(|| stuck(format!("{f} is not callable")))?
                        .map_err(stuck)?;
                    Ok(ret(result, s.store.clone()))
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Halted(CValue),
    Stuck(ConcreteError),
    StepLimit,
}

#[derive(Debug, Clone)]
pub struct Run {
    /// Starts with the injected state; each state steps to the next.
    pub trace: Vec<CState>,
    pub outcome: Outcome,
}

pub const DEFAULT_STEP_LIMIT: usize = 1_000_000;

/// Runs from the injected state for at most `step_limit` transitions.
pub fn concrete_run(program: &Program, step_limit: usize) -> Run {
    let mut trace = vec![concrete_inject(program)];
    for _ in 0..step_limit {
        let current = trace.last().expect("trace is nonempty");
        debug_assert!(well_formed(program, current));
        match concrete_step(program, current) {
            Ok(Step::Next(s)) => trace.push(s),
            Ok(Step::Halted(v)) => {
                return Run {
                    trace,
                    outcome: Outcome::Halted(v),
                }
            }
            Err(e) => {
                return Run {
                    trace,
                    outcome: Outcome::Stuck(e),
                }
            }
        }
    }
    Run {
        trace,
        outcome: Outcome::StepLimit,
    }
}

/// `free_vars(exp) ⊆ dom(env)` and `range(env) ⊆ dom(store)`.
pub fn well_formed(program: &Program, s: &CState) -> bool {
    program
        .free_vars_at(s.exp)
        .iter()
        .all(|x| s.env.contains_key(x))
        && s.env.values().all(|a| a.0 < s.store.len())
}

/// One JSON object per state: label, environment, cells added since the
/// previous state, and stack depth.
pub fn trace_jsonl(run: &Run) -> String {
    let mut out = String::new();
    let mut seen = 0;
    for s in &run.trace {
        let env: serde_json::Map<String, serde_json::Value> = s
            .env
            .iter()
            .map(|(x, a)| (x.to_string(), json!(a.0)))
            .collect();
        let delta: Vec<_> = s
            .store
            .iter()
            .skip(seen)
            .map(|(a, c)| {
                json!({
                    "addr": a.0,
                    "var": c.var.as_str(),
                    "site": c.site.0,
                    "value": c.value.to_string(),
                })
            })
            .collect();
        seen = s.store.len();
        let line = json!({
            "label": s.exp.0,
            "env": env,
            "store_delta": delta,
            "kont_depth": s.kont.len(),
        });
        out.push_str(&line.to_string());
        out.push('\n');
    }
    out
}
