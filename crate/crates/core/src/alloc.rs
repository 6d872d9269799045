//! Value and continuation address allocation policies.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Serialize, Serializer};

use crate::domain::{AbsAddr, AbsEnv, KontAddr, Store, StoreId};
use crate::machine::AbstractState;
use crate::syntax::{Label, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ValuePolicy {
    /// 0-CFA: one address per variable.
    Mono,
    /// 1-CFA: variable paired with the allocating expression.
    CallSensitive1,
}

impl ValuePolicy {
    pub const ALL: [ValuePolicy; 2] = [ValuePolicy::Mono, ValuePolicy::CallSensitive1];

    pub fn alloc(self, x: &Var, site: Label) -> AbsAddr {
        match self {
            ValuePolicy::Mono => AbsAddr::Mono(x.clone()),
            ValuePolicy::CallSensitive1 => AbsAddr::Call(x.clone(), site),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ValuePolicy::Mono => "mono",
            ValuePolicy::CallSensitive1 => "1cfa",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum KontPolicy {
    /// The target expression alone.
    TargetExp,
    /// Target expression and calling expression.
    TargetExpCall1,
    /// Target expression and environment plus the whole source state.
    Aac,
    /// Target expression and environment.
    P4F,
}

impl KontPolicy {
    pub const ALL: [KontPolicy; 4] = [
        KontPolicy::TargetExp,
        KontPolicy::TargetExpCall1,
        KontPolicy::Aac,
        KontPolicy::P4F,
    ];

    /// Allocates the continuation address for a call transition from
    /// `(source, source_env)` to `(target, target_env)`. The source store is
    /// only consulted (through `source_store`) by AAC.
    pub fn alloc(
        self,
        source: Label,
        source_env: &AbsEnv,
        source_store: impl FnOnce() -> StoreId,
        target: Label,
        target_env: &AbsEnv,
    ) -> KontAddr {
        match self {
            KontPolicy::TargetExp => KontAddr::TargetExp(target),
            KontPolicy::TargetExpCall1 => KontAddr::TargetExpCall(target, source),
            KontPolicy::P4F => KontAddr::P4F(target, target_env.clone()),
            KontPolicy::Aac => KontAddr::Aac {
                target,
                target_env: target_env.clone(),
                source,
                source_env: source_env.clone(),
                store: source_store(),
            },
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            KontPolicy::TargetExp => "naive",
            KontPolicy::TargetExpCall1 => "naive-1cfa",
            KontPolicy::Aac => "aac",
            KontPolicy::P4F => "p4f",
        }
    }

    /// Whether allocation depends on the value store.
    pub fn reads_store(self) -> bool {
        self == KontPolicy::Aac
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PolicyPair {
    pub value: ValuePolicy,
    pub kont: KontPolicy,
}

impl PolicyPair {
    pub fn new(value: ValuePolicy, kont: KontPolicy) -> Self {
        PolicyPair { value, kont }
    }

    /// All eight combinations, value policy major.
    pub fn all() -> impl Iterator<Item = PolicyPair> {
        ValuePolicy::ALL
            .into_iter()
            .flat_map(|v| KontPolicy::ALL.into_iter().map(move |k| PolicyPair::new(v, k)))
    }
}

impl fmt::Display for PolicyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}+{}", self.value, self.kont)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown policy `{0}`")]
pub struct UnknownPolicy(pub String);

macro_rules! named_policy {
    ($t:ty) => {
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }

        impl FromStr for $t {
            type Err = UnknownPolicy;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                <$t>::ALL
                    .into_iter()
                    .find(|p| p.name() == s)
                    .ok_or_else(|| UnknownPolicy(s.to_string()))
            }
        }

        impl Serialize for $t {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(self.name())
            }
        }
    };
}

named_policy!(ValuePolicy);
named_policy!(KontPolicy);

/// Structural interning of value stores: equal stores get equal ids.
#[derive(Debug, Clone, Default)]
pub struct StoreInterner {
    ids: HashMap<Store, StoreId>,
}

impl StoreInterner {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, store: &Store) -> StoreId {
        if let Some(id) = self.ids.get(store) {
            return *id;
        }
        let id = StoreId(self.ids.len() as u32);
        self.ids.insert(store.clone(), id);
        id
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Value address for binding `x` in a transition out of `state`.
pub fn value_alloc(policy: ValuePolicy, x: &Var, state: &AbstractState) -> AbsAddr {
    policy.alloc(x, state.exp)
}

/// Continuation address for a call transition out of `state` into
/// `(target, target_env)`.
pub fn kont_alloc(
    policy: KontPolicy,
    state: &AbstractState,
    target: Label,
    target_env: &AbsEnv,
    interner: &mut StoreInterner,
) -> KontAddr {
    policy.alloc(
        state.exp,
        &state.env,
        || interner.intern(&state.store),
        target,
        target_env,
    )
}
