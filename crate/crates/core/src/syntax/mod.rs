//! Labeled ANF syntax: the input language, its parser and free-variable
//! computation.
//!
//! Every expression node carries a [`Label`] assigned in preorder. Binders are
//! alpha-renamed so that each name is bound at exactly one place in a
//! [`Program`].

mod parse;
pub mod sexp;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Serialize, Serializer};
use thiserror::Error;

pub use parse::{parse_program, validate_anf, AnfReport, AnfViolation};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SyntaxError {
    #[error("{line}:{col}: {message}")]
    Parse {
        line: usize,
        col: usize,
        message: String,
    },
    #[error("{line}:{col}: unbound variable `{name}`")]
    Scope {
        line: usize,
        col: usize,
        name: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Label(pub u32);

impl Label {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A program variable. Cheap to clone.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(Arc<str>);

impl Var {
    pub fn new(name: &str) -> Self {
        Var(Arc::from(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Serialize for Var {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

impl From<&str> for Var {
    fn from(name: &str) -> Self {
        Var::new(name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Prim {
    Not,
    Add1,
    Sub1,
    IsZero,
    Add,
    Sub,
    Mul,
}

impl Prim {
    pub const ALL: [Prim; 7] = [
        Prim::Not,
        Prim::Add1,
        Prim::Sub1,
        Prim::IsZero,
        Prim::Add,
        Prim::Sub,
        Prim::Mul,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Prim::Not => "not",
            Prim::Add1 => "add1",
            Prim::Sub1 => "sub1",
            Prim::IsZero => "zero?",
            Prim::Add => "+",
            Prim::Sub => "-",
            Prim::Mul => "*",
        }
    }

    pub fn from_name(name: &str) -> Option<Prim> {
        Prim::ALL.into_iter().find(|p| p.name() == name)
    }

    /// Binary primitives are curried: applying one to its first operand
    /// yields a partial application.
    pub fn is_binary(self) -> bool {
        matches!(self, Prim::Add | Prim::Sub | Prim::Mul)
    }
}

impl fmt::Display for Prim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lambda {
    pub param: Var,
    pub body: Arc<Exp>,
}

impl Lambda {
    /// Lambdas are identified by the label of their body.
    pub fn label(&self) -> Label {
        self.body.label
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AtomicExp {
    Var(Var),
    Lam(Arc<Lambda>),
    Bool(bool),
    Num(i64),
    Prim(Prim),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Exp {
    pub label: Label,
    pub kind: ExpKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExpKind {
    LetCall {
        bind: Var,
        func: AtomicExp,
        arg: AtomicExp,
        body: Arc<Exp>,
    },
    Return(AtomicExp),
    If {
        cond: AtomicExp,
        then: Arc<Exp>,
        els: Arc<Exp>,
    },
    TailCall {
        func: AtomicExp,
        arg: AtomicExp,
    },
}

pub fn atomic_free_vars(ae: &AtomicExp, out: &mut BTreeSet<Var>) {
    match ae {
        AtomicExp::Var(x) => {
            out.insert(x.clone());
        }
        AtomicExp::Lam(lam) => {
            let mut inner = free_vars(&lam.body);
            inner.remove(&lam.param);
            out.extend(inner);
        }
        AtomicExp::Bool(_) | AtomicExp::Num(_) | AtomicExp::Prim(_) => {}
    }
}

/// Free variables of an expression; a lambda removes its parameter and a
/// `let` removes its binder from the body.
pub fn free_vars(e: &Exp) -> BTreeSet<Var> {
    let mut out = BTreeSet::new();
    match &e.kind {
        ExpKind::LetCall {
            bind,
            func,
            arg,
            body,
        } => {
            let mut inner = free_vars(body);
            inner.remove(bind);
            out.extend(inner);
            atomic_free_vars(func, &mut out);
            atomic_free_vars(arg, &mut out);
        }
        ExpKind::Return(ae) => atomic_free_vars(ae, &mut out),
        ExpKind::If { cond, then, els } => {
            atomic_free_vars(cond, &mut out);
            out.extend(free_vars(then));
            out.extend(free_vars(els));
        }
        ExpKind::TailCall { func, arg } => {
            atomic_free_vars(func, &mut out);
            atomic_free_vars(arg, &mut out);
        }
    }
    out
}

impl fmt::Display for AtomicExp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AtomicExp::Var(x) => write!(f, "{x}"),
            AtomicExp::Lam(lam) => write!(f, "(lambda ({}) {})", lam.param, lam.body),
            AtomicExp::Bool(true) => f.write_str("#t"),
            AtomicExp::Bool(false) => f.write_str("#f"),
            AtomicExp::Num(n) => write!(f, "{n}"),
            AtomicExp::Prim(p) => write!(f, "{p}"),
        }
    }
}

impl fmt::Display for Exp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ExpKind::LetCall {
                bind,
                func,
                arg,
                body,
            } => write!(f, "(let ([{bind} ({func} {arg})]) {body})"),
            ExpKind::Return(ae) => write!(f, "{ae}"),
            ExpKind::If { cond, then, els } => write!(f, "(if {cond} {then} {els})"),
            ExpKind::TailCall { func, arg } => write!(f, "({func} {arg})"),
        }
    }
}

/// A parsed, validated and labeled program.
#[derive(Debug, Clone)]
pub struct Program {
    root: Arc<Exp>,
    nodes: Vec<Arc<Exp>>,
    lambdas: BTreeMap<Label, Arc<Lambda>>,
    binders: BTreeMap<Var, Label>,
    free: Vec<BTreeSet<Var>>,
}

impl Program {
    pub(crate) fn from_root(root: Arc<Exp>, binders: BTreeMap<Var, Label>) -> Program {
        let mut nodes: Vec<Option<Arc<Exp>>> = Vec::new();
        let mut lambdas = BTreeMap::new();
        collect(&root, &mut nodes, &mut lambdas);
        let nodes: Vec<Arc<Exp>> = nodes
            .into_iter()
            .map(|n| n.expect("labels are dense"))
            .collect();
        let free = nodes.iter().map(|n| free_vars(n)).collect();
        Program {
            root,
            nodes,
            lambdas,
            binders,
            free,
        }
    }

    pub fn root(&self) -> &Arc<Exp> {
        &self.root
    }

    /// The expression carrying `label`.
    pub fn node(&self, label: Label) -> &Arc<Exp> {
        &self.nodes[label.index()]
    }

    pub fn nodes(&self) -> &[Arc<Exp>] {
        &self.nodes
    }

    /// The lambda whose body carries `label`.
    pub fn lambda(&self, label: Label) -> &Arc<Lambda> {
        &self.lambdas[&label]
    }

    pub fn lambdas(&self) -> impl Iterator<Item = &Arc<Lambda>> {
        self.lambdas.values()
    }

    /// Maps each binder to the label where it is bound: the `let` node for
    /// `let` binders, the body of the lambda for parameters.
    pub fn binder_table(&self) -> &BTreeMap<Var, Label> {
        &self.binders
    }

    pub fn free_vars_at(&self, label: Label) -> &BTreeSet<Var> {
        &self.free[label.index()]
    }

    /// Free variables of a lambda (its body's, minus the parameter).
    pub fn lambda_free_vars(&self, label: Label) -> impl Iterator<Item = &Var> {
        let param = &self.lambdas[&label].param;
        self.free[label.index()].iter().filter(move |x| *x != param)
    }

    pub fn size(&self) -> usize {
        self.nodes.len()
    }
}

fn collect(
    e: &Arc<Exp>,
    nodes: &mut Vec<Option<Arc<Exp>>>,
    lambdas: &mut BTreeMap<Label, Arc<Lambda>>,
) {
    let i = e.label.index();
    if nodes.len() <= i {
        nodes.resize(i + 1, None);
    }
    assert!(nodes[i].is_none(), "duplicate label {}", e.label);
    nodes[i] = Some(e.clone());
    let mut atomic = |ae: &AtomicExp, nodes: &mut Vec<Option<Arc<Exp>>>| {
        if let AtomicExp::Lam(lam) = ae {
            lambdas.insert(lam.label(), lam.clone());
            collect(&lam.body, nodes, lambdas);
        }
    };
    match &e.kind {
        ExpKind::LetCall {
            func, arg, body, ..
        } => {
            atomic(func, nodes);
            atomic(arg, nodes);
            collect(body, nodes, lambdas);
        }
        ExpKind::Return(ae) => atomic(ae, nodes),
        ExpKind::If { cond, then, els } => {
            atomic(cond, nodes);
            collect(then, nodes, lambdas);
            collect(els, nodes, lambdas);
        }
        ExpKind::TailCall { func, arg } => {
            atomic(func, nodes);
            atomic(arg, nodes);
        }
    }
}
