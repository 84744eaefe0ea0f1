//! Counterexample models: scalar assignments plus finite function tables.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use num_bigint::BigInt;

use crate::terms::{FunId, VarId};

/// A model value. Elements of uninterpreted sorts are opaque tokens that only
/// support equality.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub enum Value {
    Bool(bool),
    Int(BigInt),
    Opaque(String),
}

impl Value {
    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_int(&self) -> Option<&BigInt> {
        match self {
            Value::Int(v) => Some(v),
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(v) if v.sign() == num_bigint::Sign::Minus => write!(f, "(- {})", -v),
            Value::Int(v) => write!(f, "{v}"),
            Value::Opaque(s) => write!(f, "{s}"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FunTable {
    pub entries: BTreeMap<Vec<Value>, Value>,
    pub default: Option<Value>,
}

#[derive(Clone, Debug, Default)]
pub struct CexModel {
    scalars: HashMap<VarId, Value>,
    tables: HashMap<FunId, FunTable>,
}

impl CexModel {
    pub fn scalar(&self, v: VarId) -> Option<&Value> {
        self.scalars.get(&v)
    }

    pub fn set_scalar(&mut self, v: VarId, value: Value) {
        self.scalars.insert(v, value);
    }

    pub fn scalars(&self) -> impl Iterator<Item = (&VarId, &Value)> {
        self.scalars.iter()
    }

    pub fn set_entry(&mut self, f: FunId, args: Vec<Value>, value: Value) {
        self.tables.entry(f).or_default().entries.insert(args, value);
    }

    pub fn set_default(&mut self, f: FunId, value: Value) {
        self.tables.entry(f).or_default().default = Some(value);
    }

    pub fn table(&self, f: FunId) -> Option<&FunTable> {
        self.tables.get(&f)
    }

    /// Table entry for `args`, else the table default.
    pub fn lookup(&self, f: FunId, args: &[Value]) -> Option<&Value> {
        let table = self.tables.get(&f)?;
        table.entries.get(args).or(table.default.as_ref())
    }

    pub fn is_empty(&self) -> bool {
        self.scalars.is_empty() && self.tables.is_empty()
    }
}
