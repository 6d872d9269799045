//! Abstract values, environments, addresses and the join-semilattice maps
//! used for both the value store and the continuation store.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use crate::syntax::{Label, Prim, Program, Var};

/// Abstract value address.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AbsAddr {
    /// Monovariant: the variable itself.
    Mono(Var),
    /// One call site of context.
    Call(Var, Label),
}

impl AbsAddr {
    pub fn var(&self) -> &Var {
        match self {
            AbsAddr::Mono(x) | AbsAddr::Call(x, _) => x,
        }
    }
}

impl fmt::Display for AbsAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AbsAddr::Mono(x) => write!(f, "{x}"),
            AbsAddr::Call(x, site) => write!(f, "({x} {site})"),
        }
    }
}

/// An abstract environment, always trimmed to the free variables of the
/// term it closes.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AbsEnv(Arc<BTreeMap<Var, AbsAddr>>);

impl AbsEnv {
    pub fn empty() -> Self {
        AbsEnv::default()
    }

    pub fn get(&self, x: &Var) -> Option<&AbsAddr> {
        self.0.get(x)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Var, &AbsAddr)> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (Var, AbsAddr)>) -> Self {
        AbsEnv(Arc::new(pairs.into_iter().collect()))
    }

    /// `self[x ↦ a]` restricted to `keep`.
    pub fn extend_trimmed<'a>(
        &self,
        binding: Option<(&Var, &AbsAddr)>,
        keep: impl IntoIterator<Item = &'a Var>,
    ) -> AbsEnv {
        let map = keep
            .into_iter()
            .filter_map(|v| match binding {
                Some((x, a)) if x == v => Some((v.clone(), a.clone())),
                _ => self.0.get(v).map(|a| (v.clone(), a.clone())),
            })
            .collect();
        AbsEnv(Arc::new(map))
    }
}

impl fmt::Display for AbsEnv {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (x, a)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{x}: {a}")?;
        }
        f.write_str("}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AbsClo {
    /// Label of the lambda's body.
    pub lam: Label,
    pub env: AbsEnv,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AbsValue {
    Clo(AbsClo),
    Bool(bool),
    /// All integers.
    Num,
    Prim(Prim),
    PrimPartial(Prim, Box<AbsValue>),
}

impl AbsValue {
    pub fn render(&self, program: &Program) -> String {
        match self {
            AbsValue::Clo(clo) => {
                let lam = program.lambda(clo.lam);
                format!("(lambda ({}) @{}){}", lam.param, clo.lam, clo.env)
            }
            AbsValue::Bool(true) => "#t".into(),
            AbsValue::Bool(false) => "#f".into(),
            AbsValue::Num => "num".into(),
            AbsValue::Prim(p) => p.name().into(),
            AbsValue::PrimPartial(p, v) => format!("({} {})", p, v.render(program)),
        }
    }
}

impl fmt::Display for AbsValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AbsValue::Clo(clo) => write!(f, "clo@{}{}", clo.lam, clo.env),
            AbsValue::Bool(true) => f.write_str("#t"),
            AbsValue::Bool(false) => f.write_str("#f"),
            AbsValue::Num => f.write_str("num"),
            AbsValue::Prim(p) => write!(f, "{p}"),
            AbsValue::PrimPartial(p, v) => write!(f, "({p} {v})"),
        }
    }
}

pub type FlowSet = BTreeSet<AbsValue>;

/// Identifier of an interned value store, carried by AAC continuation
/// addresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StoreId(pub u32);

/// Continuation address.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum KontAddr {
    /// The empty stack; never produced by an allocator.
    Halt,
    TargetExp(Label),
    TargetExpCall(Label, Label),
    P4F(Label, AbsEnv),
    Aac {
        target: Label,
        target_env: AbsEnv,
        source: Label,
        source_env: AbsEnv,
        store: StoreId,
    },
}

impl fmt::Display for KontAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KontAddr::Halt => f.write_str("halt"),
            KontAddr::TargetExp(e) => write!(f, "{e}"),
            KontAddr::TargetExpCall(e, from) => write!(f, "({e} {from})"),
            KontAddr::P4F(e, env) => write!(f, "({e} {env})"),
            KontAddr::Aac {
                target,
                target_env,
                source,
                source_env,
                store,
            } => write!(
                f,
                "({target} {target_env} {source} {source_env} s{})",
                store.0
            ),
        }
    }
}

/// A stack frame: the variable to bind, the expression to resume and the
/// environment to reinstate.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AbsFrame {
    pub bind: Var,
    pub ret: Label,
    pub env: AbsEnv,
}

impl fmt::Display for AbsFrame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({} {} {})", self.bind, self.ret, self.env)
    }
}

/// A frame paired with the address of the stack beneath it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AbsKont {
    pub frame: AbsFrame,
    pub tail: KontAddr,
}

impl fmt::Display for AbsKont {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({} {})", self.frame, self.tail)
    }
}

pub type KontSet = BTreeSet<AbsKont>;

/// A finite map from keys to sets, ordered pointwise by inclusion. Absent
/// keys denote the empty set; no key is ever stored with an empty set.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct JoinMap<K: Ord, V: Ord>(BTreeMap<K, BTreeSet<V>>);

impl<K: Ord, V: Ord> Default for JoinMap<K, V> {
    fn default() -> Self {
        JoinMap(BTreeMap::new())
    }
}

impl<K: Ord + Clone, V: Ord + Clone> JoinMap<K, V> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, k: &K) -> Option<&BTreeSet<V>> {
        self.0.get(k)
    }

    /// The set at `k`, empty when unbound.
    pub fn lookup(&self, k: &K) -> BTreeSet<V> {
        self.0.get(k).cloned().unwrap_or_default()
    }

    pub fn contains(&self, k: &K, v: &V) -> bool {
        self.0.get(k).is_some_and(|s| s.contains(v))
    }

    /// Joins `values` into the set at `k`; returns whether anything was added.
    pub fn join_at(&mut self, k: K, values: impl IntoIterator<Item = V>) -> bool {
        let mut values = values.into_iter().peekable();
        if values.peek().is_none() {
            return false;
        }
        let entry = self.0.entry(k).or_default();
        let before = entry.len();
        entry.extend(values);
        entry.len() != before
    }

    /// [`join_at`](Self::join_at) for a borrowed set; clones only what is new.
    pub fn join_set(&mut self, k: &K, values: &BTreeSet<V>) -> bool {
        match self.0.get_mut(k) {
            Some(current) if values.is_subset(current) => false,
            Some(current) => {
                current.extend(values.iter().cloned());
                true
            }
            None if values.is_empty() => false,
            None => {
                self.0.insert(k.clone(), values.clone());
                true
            }
        }
    }

    pub fn join_in_place(&mut self, other: &Self) -> bool {
        let mut changed = false;
        for (k, vs) in &other.0 {
            changed |= self.join_at(k.clone(), vs.iter().cloned());
        }
        changed
    }

    pub fn join(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.join_in_place(other);
        out
    }

    /// Pointwise inclusion.
    pub fn leq(&self, other: &Self) -> bool {
        self.0
            .iter()
            .all(|(k, vs)| other.0.get(k).is_some_and(|ws| vs.is_subset(ws)))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&K, &BTreeSet<V>)> {
        self.0.iter()
    }

    pub fn keys(&self) -> impl Iterator<Item = &K> {
        self.0.keys()
    }

    /// Number of bound keys.
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Total number of (key, value) pairs.
    pub fn size(&self) -> usize {
        self.0.values().map(BTreeSet::len).sum()
    }
}

impl<K: Ord + Clone, V: Ord + Clone> FromIterator<(K, V)> for JoinMap<K, V> {
    fn from_iter<I: IntoIterator<Item = (K, V)>>(iter: I) -> Self {
        let mut m = JoinMap::new();
        for (k, v) in iter {
            m.join_at(k, [v]);
        }
        m
    }
}

pub type Store = JoinMap<AbsAddr, AbsValue>;
pub type KStore = JoinMap<KontAddr, AbsKont>;

pub fn store_join(a: &Store, b: &Store) -> Store {
    a.join(b)
}

pub fn kstore_join(a: &KStore, b: &KStore) -> KStore {
    a.join(b)
}
