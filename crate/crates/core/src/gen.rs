//! Program generators: seeded random programs for soundness testing and a
//! family of nested calls for scaling runs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::concrete::{concrete_run, Outcome};
use crate::syntax::{parse_program, Program};

pub const DEFAULT_SEED: u64 = 0x5eed;

/// `P4F_SEED` if set and numeric, otherwise [`DEFAULT_SEED`].
pub fn seed_from_env() -> u64 {
    std::env::var("P4F_SEED")
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or(DEFAULT_SEED)
}

struct Gen<'a, R> {
    rng: &'a mut R,
    next: usize,
}

const PRIMS: [&str; 7] = ["not", "add1", "sub1", "zero?", "+", "-", "*"];

impl<R: Rng> Gen<'_, R> {
    fn fresh(&mut self) -> String {
        self.next += 1;
        format!("v{}", self.next)
    }

    fn literal(&mut self) -> String {
        match self.rng.gen_range(0..3) {
            0 => "#t".into(),
            1 => "#f".into(),
            _ => self.rng.gen_range(0..4).to_string(),
        }
    }

    fn lambda(&mut self, fuel: u32, scope: &mut Vec<String>) -> String {
        let x = self.fresh();
        scope.push(x.clone());
        let body = self.exp(fuel, scope);
        scope.pop();
        format!("(lambda ({x}) {body})")
    }

    fn operand(&mut self, fuel: u32, scope: &mut Vec<String>) -> String {
        match self.rng.gen_range(0..10) {
            0..=4 if !scope.is_empty() => scope[self.rng.gen_range(0..scope.len())].clone(),
            5..=6 if fuel > 0 => self.lambda(fuel - 1, scope),
            7 => PRIMS[self.rng.gen_range(0..PRIMS.len())].into(),
            _ => self.literal(),
        }
    }

    fn operator(&mut self, fuel: u32, scope: &mut Vec<String>) -> String {
        match self.rng.gen_range(0..10) {
            0..=4 if !scope.is_empty() => scope[self.rng.gen_range(0..scope.len())].clone(),
            0..=7 => self.lambda(fuel.saturating_sub(1), scope),
            _ => PRIMS[self.rng.gen_range(0..PRIMS.len())].into(),
        }
    }

    fn exp(&mut self, fuel: u32, scope: &mut Vec<String>) -> String {
        let choice = if fuel == 0 { 0 } else { self.rng.gen_range(0..10) };
        match choice {
            0..=1 => self.operand(0, scope),
            2..=6 => {
                let f = self.operator(fuel - 1, scope);
                let a = self.operand(fuel - 1, scope);
                let y = self.fresh();
                scope.push(y.clone());
                let body = self.exp(fuel - 1, scope);
                scope.pop();
                format!("(let ([{y} ({f} {a})]) {body})")
            }
            7 => {
                let c = self.operand(0, scope);
                let t = self.exp(fuel - 1, scope);
                let e = self.exp(fuel - 1, scope);
                format!("(if {c} {t} {e})")
            }
            _ => {
                let f = self.operator(fuel - 1, scope);
                let a = self.operand(fuel - 1, scope);
                format!("({f} {a})")
            }
        }
    }
}

/// A random closed program of nesting depth at most `fuel`. It may diverge
/// or get stuck.
pub fn random_program(rng: &mut impl Rng, fuel: u32) -> String {
    let mut g = Gen { rng, next: 0 };
    g.exp(fuel, &mut Vec::new())
}

/// `count` random programs that halt within `step_limit` concrete steps and
/// make at least one call, drawn deterministically from `seed`.
pub fn terminating_programs(seed: u64, count: usize, step_limit: usize) -> Vec<(String, Program)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let fuel = rng.gen_range(2..7);
        let source = random_program(&mut rng, fuel);
        let program = parse_program(&source).expect("generated programs are well-formed");
        let run = concrete_run(&program, step_limit);
        if matches!(run.outcome, Outcome::Halted(_)) && run.trace.len() > 2 {
            out.push((source, program));
        }
    }
    out
}

/// `n` functions, each calling the previous one from a non-tail position,
/// with the outermost called twice.
pub fn nested_calls(n: usize) -> String {
    let mut s = String::from("(let* ([f0 (lambda (x0) x0)]\n");
    for i in 1..=n {
        s.push_str(&format!(
            "       [f{i} (lambda (x{i}) (let* ([a{i} (f0 x{i})] [r{i} (f{} a{i})]) r{i}))]\n",
            i - 1
        ));
    }
    s.push_str(&format!("       [t (f{n} #t)]\n       [u (f{n} #f)])\n  u)\n"));
    s
}
