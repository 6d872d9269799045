mod support;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use p4f::concrete::{concrete_run, concrete_step, well_formed, CState, CValue, Outcome, Step};
use p4f::gen::random_program;
use p4f::syntax::{AtomicExp, ExpKind};
use p4f::Program;

use support::{corpus_program, parse};

/// Expected change in stack depth when `s` steps, given whether the
/// operator (if any) evaluated to a closure.
fn expected_depth_change(program: &Program, s: &CState) -> i64 {
    let calls_closure = |f: &AtomicExp| match f {
        AtomicExp::Lam(_) => true,
        AtomicExp::Var(x) => {
            let a = s.env[x];
            matches!(s.store.get(a).unwrap().value, CValue::Clo { .. })
        }
        _ => false,
    };
    match &program.node(s.exp).kind {
        ExpKind::LetCall { func, .. } => i64::from(calls_closure(func)),
        ExpKind::Return(_) => -1,
        ExpKind::If { .. } => 0,
        ExpKind::TailCall { func, .. } => {
            if calls_closure(func) {
                0
            } else {
                -1
            }
        }
    }
}

fn check_trace(program: &Program, limit: usize) -> Result<(), TestCaseError> {
    let run = concrete_run(program, limit);
    prop_assert!(!run.trace.is_empty());
    for pair in run.trace.windows(2) {
        let (s, t) = (&pair[0], &pair[1]);
        prop_assert!(well_formed(program, s));
        // Determinism: stepping again gives the same successor.
        match concrete_step(program, s) {
            Ok(Step::Next(again)) => prop_assert_eq!(&again, t),
            other => prop_assert!(false, "trace step disagrees: {:?}", other),
        }
        // Fresh allocation: the store only grows, by at most one cell, and
        // old cells are untouched.
        prop_assert!(t.store.len() == s.store.len() || t.store.len() == s.store.len() + 1);
        for (a, cell) in s.store.iter() {
            prop_assert_eq!(t.store.get(a), Some(cell));
        }
        let change = t.kont.len() as i64 - s.kont.len() as i64;
        prop_assert_eq!(change, expected_depth_change(program, s), "at {}", s.exp);
    }
    if let Outcome::Halted(_) = run.outcome {
        let last = run.trace.last().unwrap();
        prop_assert!(last.kont.is_empty());
    }
    Ok(())
}

proptest! {
    #[test]
    fn traces_are_deterministic_fresh_and_balanced(seed in any::<u64>(), fuel in 1u32..6) {
        let src = random_program(&mut ChaCha8Rng::seed_from_u64(seed), fuel);
        check_trace(&parse(&src), 2_000)?;
    }
}

#[test]
fn corpus_traces_keep_the_invariants() {
    for name in ["id2", "mj09", "eta", "kcfa2", "blur", "loop2"] {
        check_trace(&corpus_program(name), 100_000).unwrap();
    }
}

#[test]
fn corpus_programs_compute_their_results() {
    let num = CValue::Num;
    for (name, expected) in [
        ("id2", CValue::Bool(true)),
        ("ack", num(7)),
        ("loop2", num(19)),
    ] {
        let run = concrete_run(&corpus_program(name), 1_000_000);
        assert_eq!(run.outcome, Outcome::Halted(expected), "{name}");
    }
    for entry in p4f::bench::corpus() {
        let run = concrete_run(&parse(&entry.source), 5_000_000);
        assert!(matches!(run.outcome, Outcome::Halted(_)), "{}: {:?}", entry.name, run.outcome);
    }
}

#[test]
fn stuck_trace_is_kept_up_to_the_stuck_state() {
    let p = parse("(let* ([a (not #t)] [b (a #t)]) b)");
    let run = concrete_run(&p, 100);
    assert!(matches!(run.outcome, Outcome::Stuck(_)));
    assert_eq!(run.trace.len(), 2);
    let ExpKind::LetCall { body, .. } = &p.root().kind else { panic!() };
    assert_eq!(run.trace[1].exp, body.label);
}
