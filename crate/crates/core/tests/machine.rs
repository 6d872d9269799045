mod support;

use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use p4f::alloc::StoreInterner;
use p4f::domain::{AbsAddr, AbsClo, AbsEnv, AbsValue, KStore, KontAddr, Store};
use p4f::fixpoint::naive_collect;
use p4f::gen::random_program;
use p4f::machine::{abs_atomic_eval, abs_inject, abs_step, step_config, AbstractState, Configuration};
use p4f::syntax::{AtomicExp, ExpKind, Label, Var};
use p4f::{analyze, KontPolicy, PolicyPair, ValuePolicy};

use support::{corpus_program, parse};

fn v(x: &str) -> Var {
    Var::new(x)
}

#[test]
fn lambda_evaluates_to_one_trimmed_closure() {
    let p = parse("(let* ([a (not #t)] [b (not #f)]) (lambda (x) a))");
    let lam = p.lambdas().next().unwrap().clone();
    let env = AbsEnv::from_pairs([(v("a"), AbsAddr::Mono(v("a"))), (v("b"), AbsAddr::Mono(v("b")))]);
    let vals = abs_atomic_eval(&p, &AtomicExp::Lam(lam.clone()), &env, &Store::new());
    let expected = AbsValue::Clo(AbsClo {
        lam: lam.label(),
        env: AbsEnv::from_pairs([(v("a"), AbsAddr::Mono(v("a")))]),
    });
    assert_eq!(vals, [expected].into());
}

#[test]
fn variables_read_the_store() {
    let p = parse("#t");
    let x = AbsAddr::Mono(v("x"));
    let env = AbsEnv::from_pairs([(v("x"), x.clone())]);
    let mut store = Store::new();
    store.join_at(x, [AbsValue::Bool(true), AbsValue::Bool(false)]);
    let xv = AtomicExp::Var(v("x"));
    assert_eq!(abs_atomic_eval(&p, &xv, &env, &store).len(), 2);
    assert!(abs_atomic_eval(&p, &xv, &env, &Store::new()).is_empty());
}

#[test]
fn injection_is_empty_and_halting() {
    let p = corpus_program("id2");
    let s = abs_inject(&p);
    assert_eq!(s.exp, p.root().label);
    assert!(s.env.is_empty() && s.store.is_empty() && s.kstore.is_empty());
    assert_eq!(s.kont, KontAddr::Halt);
    assert_eq!(s, abs_inject(&p));
}

#[test]
fn returning_on_the_empty_stack_halts() {
    let p = parse("#t");
    for policy in PolicyPair::all() {
        assert!(abs_step(&p, policy, &abs_inject(&p), &mut StoreInterner::new()).is_empty());
    }
}

#[test]
fn numeric_conditions_take_both_branches() {
    let p = parse("(let ([n (add1 1)]) (if n #t #f))");
    let policy = PolicyPair::new(ValuePolicy::Mono, KontPolicy::P4F);
    let mut interner = StoreInterner::new();
    let s1 = abs_step(&p, policy, &abs_inject(&p), &mut interner).pop_first().unwrap();
    assert_eq!(abs_step(&p, policy, &s1, &mut interner).len(), 2);
}

#[test]
fn non_callable_operators_are_diagnosed() {
    let p = parse("(let ([y (#t #f)]) y)");
    let r = analyze(&p, PolicyPair::new(ValuePolicy::Mono, KontPolicy::P4F));
    assert_eq!(r.reachable.len(), 1);
    assert_eq!(r.diagnostics.len(), 1);
    assert_eq!(r.diagnostics.first().unwrap().at, p.root().label);
}

#[test]
fn the_two_calls_share_a_naive_address_but_not_a_p4f_one() {
    let p = corpus_program("id2");
    let call_targets = |kont| {
        let r = analyze(&p, PolicyPair::new(ValuePolicy::CallSensitive1, kont));
        r.kstore.keys().cloned().collect::<BTreeSet<_>>()
    };
    assert_eq!(call_targets(KontPolicy::TargetExp).len(), 1);
    assert_eq!(call_targets(KontPolicy::P4F).len(), 2);
}

fn sub_store(rng: &mut ChaCha8Rng, s: &Store, keep: f64) -> Store {
    let mut out = Store::new();
    for (a, vs) in s.iter() {
        out.join_at(a.clone(), vs.iter().filter(|_| rng.gen_bool(keep)).cloned());
    }
    out
}

fn sub_kstore(rng: &mut ChaCha8Rng, s: &KStore, keep: f64) -> KStore {
    let mut out = KStore::new();
    for (a, ks) in s.iter() {
        out.join_at(a.clone(), ks.iter().filter(|_| rng.gen_bool(keep)).cloned());
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // Store-independent continuation policies only: AAC names the store in
    // its addresses, so a bigger store gives different successors.
    #[test]
    fn stepping_is_monotone_in_the_stores(seed in any::<u64>(), fuel in 2u32..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = parse(&random_program(&mut rng, fuel));
        for policy in PolicyPair::all().filter(|p| p.kont != KontPolicy::Aac) {
            let fix = analyze(&p, policy);
            for c in &fix.reachable {
                let (store2, kstore2) = (sub_store(&mut rng, &fix.store, 0.8), sub_kstore(&mut rng, &fix.kstore, 0.8));
                let (store1, kstore1) = (sub_store(&mut rng, &store2, 0.6), sub_kstore(&mut rng, &kstore2, 0.6));
                let state = |store: &Store, kstore: &KStore| AbstractState {
                    exp: c.exp,
                    env: c.env.clone(),
                    store: store.clone(),
                    kstore: kstore.clone(),
                    kont: c.kont.clone(),
                };
                let small = abs_step(&p, policy, &state(&store1, &kstore1), &mut StoreInterner::new());
                let big = abs_step(&p, policy, &state(&store2, &kstore2), &mut StoreInterner::new());
                for s in &small {
                    prop_assert!(
                        big.iter().any(|b| b.config() == s.config() && s.store.leq(&b.store) && s.kstore.leq(&b.kstore)),
                        "{policy}: successor at {} has no counterpart", s.exp
                    );
                }
            }
        }
    }

    #[test]
    fn halt_is_never_extended(seed in any::<u64>(), fuel in 1u32..5) {
        let p = parse(&random_program(&mut ChaCha8Rng::seed_from_u64(seed), fuel));
        for policy in PolicyPair::all() {
            let fix = analyze(&p, policy);
            prop_assert!(fix.kstore.get(&KontAddr::Halt).is_none());
            if let Ok(states) = naive_collect(&p, policy, 2_000) {
                prop_assert!(states.iter().all(|s| s.kstore.get(&KontAddr::Halt).is_none()));
            }
        }
    }

    // Every continuation pushed at an address is read back only by returns
    // from configurations running under that address.
    #[test]
    fn pushed_addresses_are_entered_and_popped_in_place(seed in any::<u64>(), fuel in 1u32..6) {
        let p = parse(&random_program(&mut ChaCha8Rng::seed_from_u64(seed), fuel));
        for policy in PolicyPair::all() {
            let fix = analyze(&p, policy);
            let konts: BTreeSet<&KontAddr> = fix.reachable.iter().map(|c| &c.kont).collect();
            for ka in fix.kstore.keys() {
                prop_assert!(konts.contains(ka), "{policy}: {ka} is never entered");
            }
            for c in &fix.reachable {
                let step = step_config(&p, policy, c, &fix.store, &fix.kstore, || p4f::domain::StoreId(0));
                for ka in &step.reads.konts {
                    prop_assert_eq!(ka, &c.kont);
                }
                let returning = matches!(p.node(c.exp).kind, ExpKind::Return(_) | ExpKind::TailCall { .. });
                prop_assert!(step.reads.konts.is_empty() || returning);
            }
        }
    }
}

#[test]
fn mono_state_space_is_bounded_by_the_program() {
    // One environment per label under mono, so one configuration per
    // (label, continuation address).
    for name in ["mj09", "kcfa2", "blur"] {
        let p = corpus_program(name);
        let r = analyze(&p, PolicyPair::new(ValuePolicy::Mono, KontPolicy::TargetExp));
        let points: BTreeSet<(Label, &AbsEnv)> = r.reachable.iter().map(|c| (c.exp, &c.env)).collect();
        let labels: BTreeSet<Label> = r.reachable.iter().map(|c: &Configuration| c.exp).collect();
        assert_eq!(points.len(), labels.len(), "{name}");
        assert!(r.reachable.len() <= p.size() * (p.size() + 1));
    }
}
