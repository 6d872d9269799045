mod support;

use std::collections::BTreeSet;

use p4f::domain::{AbsAddr, AbsEnv, AbsFrame, AbsKont, KStore, KontAddr};
use p4f::oracle::{dsg_extract, implied_stacks, oracle_analyze, precision_check, EdgeAction, ImpliedStack};
use p4f::syntax::{ExpKind, Label, Var};
use p4f::{analyze, KontPolicy, PolicyPair, ValuePolicy};

use support::{corpus_program, parse};

const IDENTITY: &str = "(let ([y ((lambda (x) x) #t)]) y)";

#[test]
fn identity_oracle_reaches_the_body_with_one_frame() {
    let p = parse(IDENTITY);
    let o = oracle_analyze(&p, ValuePolicy::Mono, 8).unwrap();
    assert!(o.complete);
    let ExpKind::LetCall { body, .. } = &p.root().kind else { panic!() };
    let lam = p.lambdas().next().unwrap();
    let frame = AbsFrame {
        bind: Var::new("y"),
        ret: body.label,
        env: AbsEnv::empty(),
    };
    assert!(o.reachable.iter().any(|c| c.exp == lam.body.label
        && c.env == AbsEnv::from_pairs([(Var::new("x"), AbsAddr::Mono(Var::new("x")))])
        && c.kont == vec![frame.clone()]));
    assert_eq!(o.reachable.len(), 3);
    assert!(o.reachable.iter().all(|c| c.kont.len() <= 1));
}

#[test]
fn oracle_store_is_below_the_p4f_store() {
    for name in ["id2", "mj09", "eta", "kcfa2", "loop2"] {
        let p = corpus_program(name);
        for vp in ValuePolicy::ALL {
            let o = oracle_analyze(&p, vp, 12).unwrap();
            assert!(o.complete, "{name} {vp}");
            let r = analyze(&p, PolicyPair::new(vp, KontPolicy::P4F));
            assert!(o.store.leq(&r.store), "{name} {vp}");
        }
    }
}

#[test]
fn nested_calls_give_a_balanced_graph() {
    let p = parse("(let ([y ((lambda (a) (let ([z ((lambda (b) b) a)]) z)) #t)]) y)");
    let o = oracle_analyze(&p, ValuePolicy::Mono, 8).unwrap();
    let g = dsg_extract(&p, &o).unwrap();
    assert_eq!(g.vertices.len(), 5);
    assert_eq!(g.push_edges().count(), 2);
    assert_eq!(g.pop_edges().count(), 2);
    assert!(g.edges.iter().all(|(_, a, _)| *a != EdgeAction::Epsilon));
    // Pops return to where the matching push said.
    for (_, action, dst) in g.pop_edges() {
        let EdgeAction::Pop(f) = action else { unreachable!() };
        assert_eq!(dst.0, f.ret);
        assert!(g.push_edges().any(|(_, a, _)| *a == EdgeAction::Push(f.clone())));
    }
    assert!(g.to_dot().starts_with("digraph"));
}

#[test]
fn incomplete_oracles_have_no_graph() {
    let p = corpus_program("tak");
    let o = oracle_analyze(&p, ValuePolicy::Mono, 2).unwrap();
    assert!(!o.complete);
    assert!(dsg_extract(&p, &o).is_err());
}

fn frame(n: u32) -> AbsFrame {
    AbsFrame {
        bind: Var::new("r"),
        ret: Label(n),
        env: AbsEnv::empty(),
    }
}

#[test]
fn a_self_loop_implies_one_stack_per_depth() {
    let a1 = KontAddr::TargetExp(Label(1));
    let mut kstore = KStore::new();
    kstore.join_at(a1.clone(), [
        AbsKont { frame: frame(1), tail: a1.clone() },
        AbsKont { frame: frame(1), tail: KontAddr::Halt },
    ]);
    let s = implied_stacks(&a1, &kstore, 3);
    assert_eq!(s.stacks.len(), 3);
    assert!(s.stacks.iter().all(|st| st.last().unwrap().tail == KontAddr::Halt));
    assert!(!s.exhausted);
    assert!(implied_stacks(&KontAddr::Halt, &kstore, 3).exhausted);
}

/// A stack is implied by an address when it is empty at Halt, or its top is
/// stored there and the rest is implied by the top's tail.
fn implied_by(stack: &[AbsKont], ka: &KontAddr, kstore: &KStore) -> bool {
    match stack.split_first() {
        None => *ka == KontAddr::Halt,
        Some((k, rest)) => kstore.contains(ka, k) && implied_by(rest, &k.tail, kstore),
    }
}

fn enumerate(ka: &KontAddr, kstore: &KStore, depth: usize, out: &mut BTreeSet<ImpliedStack>, prefix: &mut Vec<AbsKont>) {
    if *ka == KontAddr::Halt {
        out.insert(prefix.clone());
        return;
    }
    if depth == 0 {
        return;
    }
    for k in kstore.lookup(ka) {
        prefix.push(k.clone());
        enumerate(&k.tail, kstore, depth - 1, out, prefix);
        prefix.pop();
    }
}

#[test]
fn implied_stacks_match_the_definition() {
    // The enumeration is exponential; keep to programs with small kstores.
    for name in ["id2", "mj09", "eta", "kcfa2"] {
        let p = corpus_program(name);
        for policy in PolicyPair::all() {
            let r = analyze(&p, policy);
            for ka in r.reachable.iter().map(|c| &c.kont).collect::<BTreeSet<_>>() {
                let got = implied_stacks(ka, &r.kstore, 4);
                assert!(got.stacks.iter().all(|s| implied_by(s, ka, &r.kstore)));
                let mut expected = BTreeSet::new();
                enumerate(ka, &r.kstore, 4, &mut expected, &mut Vec::new());
                assert_eq!(got.stacks, expected, "{name} {policy}");
            }
        }
    }
}

#[test]
fn aac_is_as_precise_as_the_oracle() {
    for name in ["id2", "mj09", "eta", "kcfa2", "kcfa3", "loop2"] {
        let p = corpus_program(name);
        for vp in ValuePolicy::ALL {
            let o = oracle_analyze(&p, vp, 12).unwrap();
            let aac = analyze(&p, PolicyPair::new(vp, KontPolicy::Aac));
            let report = precision_check(&aac, &o, 12).unwrap();
            assert!(report.is_precise(), "{name} {vp}: {:?}", report.violations.first());
            assert!(report.checked_pairs > 0);
        }
    }
}

#[test]
fn naive_addresses_admit_stacks_the_oracle_never_builds() {
    let p = corpus_program("id2");
    let vp = ValuePolicy::CallSensitive1;
    let o = oracle_analyze(&p, vp, 12).unwrap();
    let naive = analyze(&p, PolicyPair::new(vp, KontPolicy::TargetExp));
    let report = precision_check(&naive, &o, 12).unwrap();
    assert!(!report.is_precise());
    let json = report.to_json(&p);
    assert!(json.is_object());
}
