use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use super::sexp::{self, Sexp, SexpKind};
use super::{AtomicExp, Exp, ExpKind, Label, Lambda, Prim, Program, SyntaxError, Var};

const KEYWORDS: [&str; 4] = ["let", "let*", "lambda", "if"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AnfViolation {
    pub line: usize,
    pub col: usize,
    pub form: String,
    pub message: String,
}

impl fmt::Display for AnfViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {} in `{}`", self.line, self.col, self.message, self.form)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct AnfReport {
    pub violations: Vec<AnfViolation>,
}

impl AnfReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

fn is_literal(a: &str) -> bool {
    a == "#t" || a == "#f" || a.parse::<i64>().is_ok()
}

fn is_binder(a: &str) -> bool {
    !a.is_empty() && !is_literal(a) && !KEYWORDS.contains(&a) && !a.starts_with('#')
}

fn head(s: &Sexp) -> Option<&str> {
    s.list().and_then(|items| items.first()).and_then(Sexp::atom)
}

struct Validator {
    report: AnfReport,
}

impl Validator {
    fn violation(&mut self, at: &Sexp, message: &str) {
        self.report.violations.push(AnfViolation {
            line: at.line,
            col: at.col,
            form: at.to_string(),
            message: message.to_string(),
        });
    }

    fn binder(&mut self, s: &Sexp) {
        match s.atom() {
            Some(a) if is_binder(a) => {}
            _ => self.violation(s, "binder must be an identifier"),
        }
    }

    fn atomic(&mut self, s: &Sexp, role: &str) {
        match &s.kind {
            SexpKind::Atom(a) => {
                if KEYWORDS.contains(&a.as_str()) {
                    self.violation(s, "keyword used as an expression");
                } else if a.starts_with('#') && !is_literal(a) {
                    self.violation(s, "unknown literal");
                }
            }
            SexpKind::List(_) if head(s) == Some("lambda") => self.lambda(s),
            SexpKind::List(_) => {
                let message = format!("non-atomic {role}");
                self.violation(s, &message)
            }
        }
    }

    fn lambda(&mut self, s: &Sexp) {
        let items = s.list().unwrap_or_default();
        if items.len() != 3 {
            return self.violation(s, "lambda takes a parameter list and one body");
        }
        match items[1].list() {
            Some([param]) => self.binder(param),
            _ => self.violation(&items[1], "lambda takes exactly one parameter"),
        }
        self.exp(&items[2]);
    }

    fn call(&mut self, s: &Sexp) {
        let items = s.list().unwrap_or_default();
        if items.len() != 2 {
            return self.violation(s, "calls take exactly one argument");
        }
        self.atomic(&items[0], "operator");
        self.atomic(&items[1], "operand");
    }

    fn let_form(&mut self, s: &Sexp) {
        let items = s.list().unwrap_or_default();
        if items.len() != 3 {
            return self.violation(s, "let takes a binding list and one body");
        }
        let Some(bindings) = items[1].list() else {
            return self.violation(&items[1], "let bindings must be a list");
        };
        if bindings.is_empty() {
            self.violation(&items[1], "let needs at least one binding");
        }
        for b in bindings {
            match b.list() {
                Some([name, rhs]) => {
                    self.binder(name);
                    match &rhs.kind {
                        SexpKind::List(_) if head(rhs) != Some("lambda") => self.call(rhs),
                        _ => self.atomic(rhs, "binding"),
                    }
                }
                _ => self.violation(b, "binding must be [name expression]"),
            }
        }
        self.exp(&items[2]);
    }

    fn exp(&mut self, s: &Sexp) {
        match head(s) {
            Some("let") | Some("let*") => self.let_form(s),
            Some("lambda") => self.lambda(s),
            Some("if") => {
                let items = s.list().unwrap_or_default();
                if items.len() != 4 {
                    return self.violation(s, "if takes a condition and two branches");
                }
                self.atomic(&items[1], "if condition");
                self.exp(&items[2]);
                self.exp(&items[3]);
            }
            _ => match &s.kind {
                SexpKind::Atom(_) => self.atomic(s, "expression"),
                SexpKind::List(_) => self.call(s),
            },
        }
    }
}

fn validate_sexp(s: &Sexp) -> AnfReport {
    let mut v = Validator {
        report: AnfReport::default(),
    };
    v.exp(s);
    v.report
}

/// Checks that `source` is in administrative normal form: every call is
/// bound by a `let` or in tail position, and every operand is atomic. All
/// violations are reported; only unreadable input is an error.
pub fn validate_anf(source: &str) -> Result<AnfReport, SyntaxError> {
    Ok(validate_sexp(&sexp::read(source)?))
}

/// Parses, validates, alpha-renames and labels a program.
pub fn parse_program(source: &str) -> Result<Program, SyntaxError> {
    let tree = sexp::read(source)?;
    if let Some(v) = validate_sexp(&tree).violations.into_iter().next() {
        return Err(SyntaxError::Parse {
            line: v.line,
            col: v.col,
            message: v.message,
        });
    }
    let mut atoms = Vec::new();
    tree.atoms(&mut atoms);
    let mut lower = Lower {
        next: 0,
        taken: atoms.into_iter().map(str::to_string).collect(),
        bound: HashSet::new(),
        binders: BTreeMap::new(),
    };
    let root = lower.exp(&tree, &Scope::default())?;
    Ok(Program::from_root(root, lower.binders))
}

#[derive(Clone, Default)]
struct Scope(im::HashMap<String, Var>);

impl Scope {
    fn with(&self, name: &str, var: Var) -> Scope {
        Scope(self.0.update(name.to_string(), var))
    }
}

struct Lower {
    next: u32,
    taken: HashSet<String>,
    bound: HashSet<String>,
    binders: BTreeMap<Var, Label>,
}

impl Lower {
    fn label(&mut self) -> Label {
        let l = Label(self.next);
        self.next += 1;
        l
    }

    fn fresh(&mut self, name: &str) -> Var {
        if self.bound.insert(name.to_string()) {
            return Var::new(name);
        }
        let mut k = 2;
        loop {
            let candidate = format!("{name}_{k}");
            if !self.taken.contains(&candidate) && !self.bound.contains(&candidate) {
                self.bound.insert(candidate.clone());
                self.taken.insert(candidate.clone());
                return Var::new(&candidate);
            }
            k += 1;
        }
    }

    fn atomic(&mut self, s: &Sexp, scope: &Scope) -> Result<AtomicExp, SyntaxError> {
        match &s.kind {
            SexpKind::Atom(a) => {
                if a == "#t" {
                    Ok(AtomicExp::Bool(true))
                } else if a == "#f" {
                    Ok(AtomicExp::Bool(false))
                } else if let Ok(n) = a.parse::<i64>() {
                    Ok(AtomicExp::Num(n))
                } else if let Some(x) = scope.0.get(a) {
                    Ok(AtomicExp::Var(x.clone()))
                } else if let Some(p) = Prim::from_name(a) {
                    Ok(AtomicExp::Prim(p))
                } else {
                    Err(SyntaxError::Scope {
                        line: s.line,
                        col: s.col,
                        name: a.clone(),
                    })
                }
            }
            SexpKind::List(items) => {
                let (param, body) = lambda_parts(items);
                Ok(AtomicExp::Lam(self.lambda(param, body, scope)?))
            }
        }
    }

    fn lambda(&mut self, source_name: &str, body: &Sexp, scope: &Scope) -> Result<Arc<Lambda>, SyntaxError> {
        let param = self.fresh(source_name);
        let body = self.exp(body, &scope.with(source_name, param.clone()))?;
        self.binders.insert(param.clone(), body.label);
        Ok(Arc::new(Lambda { param, body }))
    }

    fn exp(&mut self, s: &Sexp, scope: &Scope) -> Result<Arc<Exp>, SyntaxError> {
        let items = s.list().unwrap_or_default();
        match head(s) {
            Some(kw @ ("let" | "let*")) => {
                let bindings = items[1].list().unwrap_or_default();
                self.let_chain(bindings, &items[2], scope, scope, kw == "let*")
            }
            Some("if") => {
                let label = self.label();
                let cond = self.atomic(&items[1], scope)?;
                let then = self.exp(&items[2], scope)?;
                let els = self.exp(&items[3], scope)?;
                Ok(Arc::new(Exp {
                    label,
                    kind: ExpKind::If { cond, then, els },
                }))
            }
            _ if s.atom().is_some() || head(s) == Some("lambda") => {
                let label = self.label();
                let ae = self.atomic(s, scope)?;
                Ok(Arc::new(Exp {
                    label,
                    kind: ExpKind::Return(ae),
                }))
            }
            _ => {
                let label = self.label();
                let func = self.atomic(&items[0], scope)?;
                let arg = self.atomic(&items[1], scope)?;
                Ok(Arc::new(Exp {
                    label,
                    kind: ExpKind::TailCall { func, arg },
                }))
            }
        }
    }

    /// Desugars a multi-binding `let`/`let*` into nested single-binding forms.
    /// For `let`, right-hand sides see `outer`; for `let*`, each sees the
    /// previous binders.
    fn let_chain(
        &mut self,
        bindings: &[Sexp],
        body: &Sexp,
        outer: &Scope,
        scope: &Scope,
        sequential: bool,
    ) -> Result<Arc<Exp>, SyntaxError> {
        let Some((first, rest)) = bindings.split_first() else {
            return self.exp(body, scope);
        };
        let pair = first.list().unwrap_or_default();
        let name = pair[0].atom().unwrap_or_default();
        let rhs = &pair[1];
        let rhs_scope = if sequential { scope } else { outer };
        let label = self.label();
        let is_call = rhs.list().is_some() && head(rhs) != Some("lambda");
        if is_call {
            let call = rhs.list().unwrap_or_default();
            let func = self.atomic(&call[0], rhs_scope)?;
            let arg = self.atomic(&call[1], rhs_scope)?;
            let bind = self.fresh(name);
            self.binders.insert(bind.clone(), label);
            let inner = scope.with(name, bind.clone());
            let body = self.let_chain(rest, body, outer, &inner, sequential)?;
            Ok(Arc::new(Exp {
                label,
                kind: ExpKind::LetCall {
                    bind,
                    func,
                    arg,
                    body,
                },
            }))
        } else {
            // `(let ([x ae]) e)` becomes `((lambda (x) e) ae)`.
            let bind = self.fresh(name);
            let inner = scope.with(name, bind.clone());
            let lam_body = self.let_chain(rest, body, outer, &inner, sequential)?;
            self.binders.insert(bind.clone(), lam_body.label);
            let lam = Arc::new(Lambda {
                param: bind,
                body: lam_body,
            });
            let arg = self.atomic(rhs, rhs_scope)?;
            Ok(Arc::new(Exp {
                label,
                kind: ExpKind::TailCall {
                    func: AtomicExp::Lam(lam),
                    arg,
                },
            }))
        }
    }
}

fn lambda_parts(items: &[Sexp]) -> (&str, &Sexp) {
    let param = items[1]
        .list()
        .and_then(|ps| ps.first())
        .and_then(Sexp::atom)
        .unwrap_or_default();
    (param, &items[2])
}
