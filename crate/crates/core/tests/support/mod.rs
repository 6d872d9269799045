//! Test-only oracles written directly against the syntax tree, without the
//! library's transition code.

#![allow(dead_code)]

use std::collections::BTreeSet;

use p4f::concrete::{CEnv, CStore, CValue, Run};
use p4f::domain::{
    AbsClo, AbsEnv, AbsFrame, AbsKont, AbsValue, FlowSet, KStore, KontAddr, Store, StoreId,
};
use p4f::machine::Configuration;
use p4f::oracle::{EdgeAction, HatConfiguration, OracleResult, Vertex};
use p4f::syntax::{AtomicExp, ExpKind, Label, Prim, Var};
use p4f::{AnalysisResult, Program, ValuePolicy};

pub fn parse(source: &str) -> Program {
    p4f::parse_program(source).unwrap_or_else(|e| panic!("{e}\n{source}"))
}

pub fn corpus_program(name: &str) -> Program {
    parse(&p4f::bench::corpus_entry(name).expect("corpus entry").source)
}

// Concrete to abstract.

pub fn abstract_env(policy: ValuePolicy, store: &CStore, env: &CEnv) -> AbsEnv {
    AbsEnv::from_pairs(env.iter().map(|(x, a)| {
        let cell = store.get(*a).expect("address in store");
        assert_eq!(&cell.var, x, "cell binds the variable that names it");
        (x.clone(), policy.alloc(&cell.var, cell.site))
    }))
}

pub fn abstract_value(policy: ValuePolicy, store: &CStore, v: &CValue) -> AbsValue {
    match v {
        CValue::Clo { lam, env } => AbsValue::Clo(AbsClo {
            lam: *lam,
            env: abstract_env(policy, store, env),
        }),
        CValue::Bool(b) => AbsValue::Bool(*b),
        CValue::Num(_) => AbsValue::Num,
        CValue::Prim(p) => AbsValue::Prim(*p),
        CValue::PrimPartial(p, _) => AbsValue::PrimPartial(*p, Box::new(AbsValue::Num)),
    }
}

/// Concrete facts missing from `result`: store cells whose abstraction is
/// not in the abstract store, and states whose control point is not
/// reachable.
pub fn soundness_gaps(run: &Run, result: &AnalysisResult) -> Vec<String> {
    let policy = result.policy.value;
    let mut gaps = Vec::new();
    let last = run.trace.last().expect("nonempty trace");
    for (a, cell) in last.store.iter() {
        let addr = policy.alloc(&cell.var, cell.site);
        let v = abstract_value(policy, &last.store, &cell.value);
        if !result.store.contains(&addr, &v) {
            gaps.push(format!("cell {} ({} at {}) = {v} not in store[{addr}]", a.0, cell.var, cell.site));
        }
    }
    let points: BTreeSet<(Label, AbsEnv)> = result
        .reachable
        .iter()
        .map(|c| (c.exp, c.env.clone()))
        .collect();
    for (i, s) in run.trace.iter().enumerate() {
        let env = abstract_env(policy, &s.store, &s.env);
        if !points.contains(&(s.exp, env.clone())) {
            gaps.push(format!("state {i} at {} {env} not reachable", s.exp));
        }
    }
    gaps
}

// An independent unbounded-stack step.

fn eval(program: &Program, ae: &AtomicExp, env: &AbsEnv, store: &Store) -> FlowSet {
    match ae {
        AtomicExp::Var(x) => match env.get(x) {
            Some(a) => store.lookup(a),
            None => FlowSet::new(),
        },
        AtomicExp::Lam(lam) => {
            let label = lam.body.label;
            let keep: Vec<(Var, _)> = program
                .free_vars_at(label)
                .iter()
                .filter(|x| **x != lam.param)
                .filter_map(|x| env.get(x).map(|a| (x.clone(), a.clone())))
                .collect();
            [AbsValue::Clo(AbsClo {
                lam: label,
                env: AbsEnv::from_pairs(keep),
            })]
            .into()
        }
        AtomicExp::Bool(b) => [AbsValue::Bool(*b)].into(),
        AtomicExp::Num(_) => [AbsValue::Num].into(),
        AtomicExp::Prim(p) => [AbsValue::Prim(*p)].into(),
    }
}

fn prim_results(op: &AbsValue, arg: &AbsValue) -> Vec<AbsValue> {
    use AbsValue::{Bool, Num, PrimPartial};
    match (op, arg) {
        (AbsValue::Prim(Prim::Not), Bool(false)) => vec![Bool(true)],
        (AbsValue::Prim(Prim::Not), _) => vec![Bool(false)],
        (AbsValue::Prim(Prim::IsZero), Num) => vec![Bool(true), Bool(false)],
        (AbsValue::Prim(Prim::Add1 | Prim::Sub1), Num) => vec![Num],
        (AbsValue::Prim(p @ (Prim::Add | Prim::Sub | Prim::Mul)), Num) => {
            vec![PrimPartial(*p, Box::new(Num))]
        }
        (PrimPartial(_, _), Num) => vec![Num],
        _ => vec![],
    }
}

fn restrict(program: &Program, env: &AbsEnv, target: Label, extra: Option<(&Var, ValuePolicy, Label)>) -> AbsEnv {
    AbsEnv::from_pairs(program.free_vars_at(target).iter().filter_map(|x| match extra {
        Some((y, policy, site)) if y == x => Some((x.clone(), policy.alloc(x, site))),
        _ => env.get(x).map(|a| (x.clone(), a.clone())),
    }))
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct HatEdge {
    pub target: HatConfiguration,
    pub action: EdgeAction,
}

/// Successors of an unbounded-stack configuration under a fixed store.
pub fn hat_successors(
    program: &Program,
    policy: ValuePolicy,
    c: &HatConfiguration,
    store: &Store,
) -> BTreeSet<HatEdge> {
    let node = program.node(c.exp);
    let mut out = BTreeSet::new();
    let site = c.exp;
    let deliver = |out: &mut BTreeSet<HatEdge>| {
        if let Some((top, rest)) = c.kont.split_first() {
            out.insert(HatEdge {
                target: HatConfiguration {
                    exp: top.ret,
                    env: restrict(program, &top.env, top.ret, Some((&top.bind, policy, site))),
                    kont: rest.to_vec(),
                },
                action: EdgeAction::Pop(top.clone()),
            });
        }
    };
    let enter = |clo: &AbsClo, kont: Vec<AbsFrame>, action: EdgeAction, out: &mut BTreeSet<HatEdge>| {
        let param = &program.lambda(clo.lam).param;
        out.insert(HatEdge {
            target: HatConfiguration {
                exp: clo.lam,
                env: restrict(program, &clo.env, clo.lam, Some((param, policy, site))),
                kont,
            },
            action,
        });
    };
    match &node.kind {
        ExpKind::LetCall { bind, func, arg, body } => {
            let args = eval(program, arg, &c.env, store);
            let frame = AbsFrame {
                bind: bind.clone(),
                ret: body.label,
                env: AbsEnv::from_pairs(
                    program
                        .free_vars_at(body.label)
                        .iter()
                        .filter(|x| *x != bind)
                        .filter_map(|x| c.env.get(x).map(|a| (x.clone(), a.clone()))),
                ),
            };
            for f in eval(program, func, &c.env, store) {
                if let AbsValue::Clo(clo) = &f {
                    let mut kont = vec![frame.clone()];
                    kont.extend(c.kont.iter().cloned());
                    enter(clo, kont, EdgeAction::Push(frame.clone()), &mut out);
                } else if args.iter().any(|a| !prim_results(&f, a).is_empty()) {
                    out.insert(HatEdge {
                        target: HatConfiguration {
                            exp: body.label,
                            env: restrict(program, &c.env, body.label, Some((bind, policy, site))),
                            kont: c.kont.clone(),
                        },
                        action: EdgeAction::Epsilon,
                    });
                }
            }
        }
        ExpKind::Return(_) => deliver(&mut out),
        ExpKind::If { cond, then, els } => {
            let vals = eval(program, cond, &c.env, store);
            for (target, truth) in [(then.label, true), (els.label, false)] {
                if vals.contains(&AbsValue::Bool(truth)) || vals.contains(&AbsValue::Num) {
                    out.insert(HatEdge {
                        target: HatConfiguration {
                            exp: target,
                            env: restrict(program, &c.env, target, None),
                            kont: c.kont.clone(),
                        },
                        action: EdgeAction::Epsilon,
                    });
                }
            }
        }
        ExpKind::TailCall { func, arg } => {
            let args = eval(program, arg, &c.env, store);
            for f in eval(program, func, &c.env, store) {
                if let AbsValue::Clo(clo) = &f {
                    enter(clo, c.kont.clone(), EdgeAction::Epsilon, &mut out);
                } else if args.iter().any(|a| !prim_results(&f, a).is_empty()) {
                    deliver(&mut out);
                }
            }
        }
    }
    out
}

/// Push and pop edges of the oracle fixed point, re-derived one
/// configuration at a time.
pub fn brute_force_stack_edges(
    program: &Program,
    oracle: &OracleResult,
) -> BTreeSet<(Vertex, EdgeAction, Vertex)> {
    let mut edges = BTreeSet::new();
    for c in &oracle.reachable {
        for e in hat_successors(program, oracle.value_policy, c, &oracle.store) {
            if !matches!(e.action, EdgeAction::Epsilon) {
                edges.insert(((c.exp, c.env.clone()), e.action, (e.target.exp, e.target.env)));
            }
        }
    }
    edges
}

/// Every successor of every reachable oracle configuration is itself
/// reachable.
pub fn oracle_is_closed(program: &Program, oracle: &OracleResult) -> bool {
    oracle.reachable.iter().all(|c| {
        hat_successors(program, oracle.value_policy, c, &oracle.store)
            .iter()
            .all(|e| oracle.reachable.contains(&e.target))
    })
}

pub fn config_points(result: &AnalysisResult) -> BTreeSet<(Label, AbsEnv)> {
    result.reachable.iter().map(|c: &Configuration| (c.exp, c.env.clone())).collect()
}

// AAC addresses name the value store at allocation time, and which
// intermediate stores exist depends on the order configurations are stepped
// in. Results from different schedules are compared with those names erased.

fn erase_kont(ka: &KontAddr) -> KontAddr {
    match ka {
        KontAddr::Aac {
            target,
            target_env,
            source,
            source_env,
            ..
        } => KontAddr::Aac {
            target: *target,
            target_env: target_env.clone(),
            source: *source,
            source_env: source_env.clone(),
            store: StoreId(0),
        },
        other => other.clone(),
    }
}

pub fn erase_snapshots(result: &AnalysisResult) -> (BTreeSet<Configuration>, KStore) {
    let reachable = result
        .reachable
        .iter()
        .map(|c| Configuration {
            exp: c.exp,
            env: c.env.clone(),
            kont: erase_kont(&c.kont),
        })
        .collect();
    let mut kstore = KStore::new();
    for (ka, ks) in result.kstore.iter() {
        kstore.join_at(
            erase_kont(ka),
            ks.iter().map(|k| AbsKont {
                frame: k.frame.clone(),
                tail: erase_kont(&k.tail),
            }),
        );
    }
    (reachable, kstore)
}

/// Exact equality of the value stores; equality of configurations and
/// continuation stores once snapshot names are erased.
pub fn same_fixpoint_modulo_snapshots(a: &AnalysisResult, b: &AnalysisResult) -> bool {
    a.store == b.store && erase_snapshots(a) == erase_snapshots(b)
}
