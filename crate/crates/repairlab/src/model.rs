//! Typed relational data model, constraint and query ASTs, constraint
//! classification, and direct satisfaction checking.
//!
//! Everything downstream (hypergraph construction, the repair checkers, the
//! CQA engines, the oracle) works over these types. Values are immutable
//! after construction; no operation mutates its inputs.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("unknown relation `{0}`")]
    UnknownRelation(String),
    #[error("unknown attribute `{attribute}` of relation `{relation}`")]
    UnknownAttribute { relation: String, attribute: String },
    #[error("fact {fact} has arity {got}, relation `{relation}` expects {want}")]
    ArityMismatch {
        relation: String,
        fact: String,
        got: usize,
        want: usize,
    },
    #[error("value `{value}` has the wrong sort for {relation}.{attribute} ({sort})")]
    SortMismatch {
        relation: String,
        attribute: String,
        value: String,
        sort: Sort,
    },
    #[error("order comparison `{0}` applied to a symbolic value")]
    SymbolicOrder(String),
    #[error("variable `{0}` in a comparison is not bound by any relational atom")]
    UnsafeVariable(String),
    #[error("denial constraint has no relational atoms")]
    EmptyDenial,
    #[error("inclusion dependency attribute lists differ in length ({0} vs {1})")]
    IndLengthMismatch(usize, usize),
    #[error("inclusion dependency column sorts differ at position {0}")]
    IndSortMismatch(usize),
    #[error("duplicate relation `{0}` in schema")]
    DuplicateRelation(String),
    #[error("quantified variable `{0}` does not occur in any relational atom")]
    UnusedQuantifiedVariable(String),
    #[error("query has free variables ({0}) where a closed sentence is required")]
    OpenQuery(String),
    #[error("answer tuple has arity {got}, query has {want} free variables")]
    AnswerArity { got: usize, want: usize },
    #[error("duplicate attribute `{attribute}` in relation `{relation}`")]
    DuplicateAttribute { relation: String, attribute: String },
    #[error("relation `{relation}` declares more than one primary key")]
    MultiplePrimaryKeys { relation: String },
}

// ---------------------------------------------------------------------------
// Values and schema
// ---------------------------------------------------------------------------

/// A constant: symbolic (uninterpreted) or numeric (i64). The two domains
/// are disjoint — a symbol never equals a number, and order comparisons are
/// defined only between numbers. Serializes untagged: symbols as JSON
/// strings, numbers as JSON integers.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Value {
    Sym(String),
    Int(i64),
}

impl Serialize for Value {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Value::Sym(s) => serializer.serialize_str(s),
            Value::Int(n) => serializer.serialize_i64(*n),
        }
    }
}

impl<'de> Deserialize<'de> for Value {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct V;
        impl serde::de::Visitor<'_> for V {
            type Value = Value;
            fn expecting(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                write!(f, "a string (symbol) or an integer")
            }
            fn visit_str<E: serde::de::Error>(self, s: &str) -> Result<Value, E> {
                Ok(Value::Sym(s.to_string()))
            }
            fn visit_i64<E: serde::de::Error>(self, n: i64) -> Result<Value, E> {
                Ok(Value::Int(n))
            }
            fn visit_u64<E: serde::de::Error>(self, n: u64) -> Result<Value, E> {
                i64::try_from(n)
                    .map(Value::Int)
                    .map_err(|_| E::custom("integer out of range"))
            }
        }
        deserializer.deserialize_any(V)
    }
}

impl Value {
    pub fn sym(s: impl Into<String>) -> Value {
        Value::Sym(s.into())
    }

    pub fn sort(&self) -> Sort {
        match self {
            Value::Sym(_) => Sort::Symbolic,
            Value::Int(_) => Sort::Numeric,
        }
    }
}

impl std::fmt::Display for Value {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            // single quotes double up, mirroring the constraint/query syntax
            Value::Sym(s) => write!(f, "'{}'", s.replace('\'', "''")),
            Value::Int(n) => write!(f, "{n}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Sort {
    Symbolic,
    Numeric,
}

impl std::fmt::Display for Sort {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Sort::Symbolic => write!(f, "sym"),
            Sort::Numeric => write!(f, "num"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub sort: Sort,
}

/// A declared key: a set of attribute names (stored in schema order).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyDecl {
    pub attrs: Vec<String>,
    pub primary: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationSchema {
    pub name: String,
    pub attributes: Vec<Attribute>,
    pub keys: Vec<KeyDecl>,
}

impl RelationSchema {
    pub fn new(name: impl Into<String>, attributes: Vec<(impl Into<String>, Sort)>) -> Self {
        RelationSchema {
            name: name.into(),
            attributes: attributes
                .into_iter()
                .map(|(n, s)| Attribute {
                    name: n.into(),
                    sort: s,
                })
                .collect(),
            keys: Vec::new(),
        }
    }

    pub fn arity(&self) -> usize {
        self.attributes.len()
    }

    pub fn attr_index(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    /// Attribute-name set of a key as a sorted set, for key-FD / foreign-key
    /// comparisons (key identity ignores declaration order).
    pub fn key_sets(&self) -> Vec<BTreeSet<&str>> {
        self.keys
            .iter()
            .map(|k| k.attrs.iter().map(|a| a.as_str()).collect())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Schema {
    pub relations: Vec<RelationSchema>,
}

impl Schema {
    pub fn new(relations: Vec<RelationSchema>) -> Result<Self, ModelError> {
        let schema = Schema { relations };
        schema.validate()?;
        Ok(schema)
    }

    pub fn relation(&self, name: &str) -> Option<&RelationSchema> {
        self.relations.iter().find(|r| r.name == name)
    }

    pub fn require(&self, name: &str) -> Result<&RelationSchema, ModelError> {
        self.relation(name)
            .ok_or_else(|| ModelError::UnknownRelation(name.to_string()))
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let mut names = BTreeSet::new();
        for rel in &self.relations {
            if !names.insert(rel.name.as_str()) {
                return Err(ModelError::DuplicateRelation(rel.name.clone()));
            }
            let mut attrs = BTreeSet::new();
            for a in &rel.attributes {
                if !attrs.insert(a.name.as_str()) {
                    return Err(ModelError::DuplicateAttribute {
                        relation: rel.name.clone(),
                        attribute: a.name.clone(),
                    });
                }
            }
            if rel.keys.iter().filter(|k| k.primary).count() > 1 {
                return Err(ModelError::MultiplePrimaryKeys {
                    relation: rel.name.clone(),
                });
            }
            for key in &rel.keys {
                for a in &key.attrs {
                    if rel.attr_index(a).is_none() {
                        return Err(ModelError::UnknownAttribute {
                            relation: rel.name.clone(),
                            attribute: a.clone(),
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Facts and instances
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Fact {
    pub relation: String,
    pub values: Vec<Value>,
}

impl Fact {
    pub fn new(relation: impl Into<String>, values: Vec<Value>) -> Self {
        Fact {
            relation: relation.into(),
            values,
        }
    }
}

impl std::fmt::Display for Fact {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}(", self.relation)?;
        for (i, v) in self.values.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

/// A finite set of facts (set semantics: duplicates collapse). Iteration is
/// always in canonical order — relation name, then tuple values — which is
/// what makes serialized output and engine certificates deterministic.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Instance {
    facts: BTreeSet<Fact>,
}

impl Instance {
    pub fn empty() -> Self {
        Instance::default()
    }

    pub fn from_facts(facts: impl IntoIterator<Item = Fact>) -> Self {
        Instance {
            facts: facts.into_iter().collect(),
        }
    }

    pub fn insert(&mut self, fact: Fact) {
        self.facts.insert(fact);
    }

    pub fn remove(&mut self, fact: &Fact) -> bool {
        self.facts.remove(fact)
    }

    pub fn contains(&self, fact: &Fact) -> bool {
        self.facts.contains(fact)
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Fact> {
        self.facts.iter()
    }

    pub fn relation<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a Fact> {
        self.facts.iter().filter(move |f| f.relation == name)
    }

    pub fn relation_names(&self) -> BTreeSet<&str> {
        self.facts.iter().map(|f| f.relation.as_str()).collect()
    }

    pub fn is_subset_of(&self, other: &Instance) -> bool {
        self.facts.is_subset(&other.facts)
    }

    /// Facts of `self` absent from `other`, in canonical order.
    pub fn difference<'a>(&'a self, other: &'a Instance) -> impl Iterator<Item = &'a Fact> {
        self.facts.difference(&other.facts)
    }

    pub fn validate(&self, schema: &Schema) -> Result<(), ModelError> {
        for fact in &self.facts {
            validate_fact(schema, fact)?;
        }
        Ok(())
    }
}

/// Check one fact against the schema: known relation, right arity, every
/// value of its column's sort.
pub fn validate_fact(schema: &Schema, fact: &Fact) -> Result<(), ModelError> {
    let rel = schema.require(&fact.relation)?;
    if fact.values.len() != rel.arity() {
        return Err(ModelError::ArityMismatch {
            relation: rel.name.clone(),
            fact: fact.to_string(),
            got: fact.values.len(),
            want: rel.arity(),
        });
    }
    for (v, a) in fact.values.iter().zip(&rel.attributes) {
        if v.sort() != a.sort {
            return Err(ModelError::SortMismatch {
                relation: rel.name.clone(),
                attribute: a.name.clone(),
                value: v.to_string(),
                sort: a.sort,
            });
        }
    }
    Ok(())
}

impl FromIterator<Fact> for Instance {
    fn from_iter<T: IntoIterator<Item = Fact>>(iter: T) -> Self {
        Instance::from_facts(iter)
    }
}

// ---------------------------------------------------------------------------
// Constraints
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Term {
    Var(String),
    Const(Value),
}

impl Term {
    pub fn var(name: impl Into<String>) -> Term {
        Term::Var(name.into())
    }
}

impl std::fmt::Display for Term {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Term::Var(v) => write!(f, "{v}"),
            Term::Const(c) => write!(f, "{c}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn is_order(self) -> bool {
        !matches!(self, CmpOp::Eq | CmpOp::Ne)
    }
}

impl std::fmt::Display for CmpOp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        };
        write!(f, "{s}")
    }
}

/// Evaluate a ground comparison. Equality across the two domains is false
/// (they are disjoint); order comparisons require numbers on both sides.
pub fn eval_cmp(op: CmpOp, lhs: &Value, rhs: &Value) -> Result<bool, ModelError> {
    match op {
        CmpOp::Eq => Ok(lhs == rhs),
        CmpOp::Ne => Ok(lhs != rhs),
        _ => match (lhs, rhs) {
            (Value::Int(a), Value::Int(b)) => Ok(match op {
                CmpOp::Lt => a < b,
                CmpOp::Le => a <= b,
                CmpOp::Gt => a > b,
                CmpOp::Ge => a >= b,
                _ => unreachable!(),
            }),
            _ => Err(ModelError::SymbolicOrder(format!("{lhs} {op} {rhs}"))),
        },
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BuiltinAtom {
    pub lhs: Term,
    pub op: CmpOp,
    pub rhs: Term,
}

impl BuiltinAtom {
    pub fn new(lhs: Term, op: CmpOp, rhs: Term) -> Self {
        BuiltinAtom { lhs, op, rhs }
    }
}

impl std::fmt::Display for BuiltinAtom {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} {} {}", self.lhs, self.op, self.rhs)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConstraintAtom {
    pub relation: String,
    pub terms: Vec<Term>,
}

impl std::fmt::Display for ConstraintAtom {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}(", self.relation)?;
        for (i, t) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{t}")?;
        }
        write!(f, ")")
    }
}

/// ¬[A₁ ∧ … ∧ Aₘ ∧ φ]: no substitution may satisfy all relational atoms and
/// every comparison in φ. All variables are implicitly universally
/// quantified; every φ-variable must occur in some relational atom.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenialConstraint {
    pub atoms: Vec<ConstraintAtom>,
    pub builtins: Vec<BuiltinAtom>,
}

impl DenialConstraint {
    pub fn validate(&self, schema: &Schema) -> Result<(), ModelError> {
        if self.atoms.is_empty() {
            return Err(ModelError::EmptyDenial);
        }
        validate_atoms_builtins(schema, &self.atoms, &self.builtins)
    }
}

/// Shared well-formedness check for conjunction bodies (denial constraints
/// and conjunctive queries): relations known, arities right, constant sorts
/// matching, every comparison variable bound by some relational atom, and
/// order comparisons confined to numeric positions.
pub(crate) fn validate_atoms_builtins(
    schema: &Schema,
    atoms: &[ConstraintAtom],
    builtins: &[BuiltinAtom],
) -> Result<(), ModelError> {
    // var -> sorts of the positions it occupies
    let mut var_sorts: HashMap<&str, BTreeSet<Sort>> = HashMap::new();
    for atom in atoms {
        let rel = schema.require(&atom.relation)?;
        if atom.terms.len() != rel.arity() {
            return Err(ModelError::ArityMismatch {
                relation: rel.name.clone(),
                fact: atom.to_string(),
                got: atom.terms.len(),
                want: rel.arity(),
            });
        }
        for (t, a) in atom.terms.iter().zip(&rel.attributes) {
            match t {
                Term::Var(v) => {
                    var_sorts.entry(v).or_default().insert(a.sort);
                }
                Term::Const(c) => {
                    if c.sort() != a.sort {
                        return Err(ModelError::SortMismatch {
                            relation: rel.name.clone(),
                            attribute: a.name.clone(),
                            value: c.to_string(),
                            sort: a.sort,
                        });
                    }
                }
            }
        }
    }
    for b in builtins {
        for t in [&b.lhs, &b.rhs] {
            if let Term::Var(v) = t {
                if !var_sorts.contains_key(v.as_str()) {
                    return Err(ModelError::UnsafeVariable(v.clone()));
                }
                if b.op.is_order() && var_sorts[v.as_str()].contains(&Sort::Symbolic) {
                    return Err(ModelError::SymbolicOrder(b.to_string()));
                }
            }
            if let Term::Const(c) = t {
                if b.op.is_order() && c.sort() == Sort::Symbolic {
                    return Err(ModelError::SymbolicOrder(b.to_string()));
                }
            }
        }
    }
    Ok(())
}

impl std::fmt::Display for DenialConstraint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "not [ ")?;
        let mut first = true;
        for a in &self.atoms {
            if !first {
                write!(f, ", ")?;
            }
            write!(f, "{a}")?;
            first = false;
        }
        for b in &self.builtins {
            write!(f, ", {b}")?;
        }
        write!(f, " ]")
    }
}

/// X → Y on one relation, stored normalized: Y ∩ X = ∅. An FD whose Y
/// becomes empty after normalization is vacuous (`is_vacuous`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fd {
    pub relation: String,
    pub lhs: Vec<String>,
    pub rhs: Vec<String>,
}

impl Fd {
    pub fn new(
        relation: impl Into<String>,
        lhs: impl IntoIterator<Item = impl Into<String>>,
        rhs: impl IntoIterator<Item = impl Into<String>>,
    ) -> Self {
        let lhs: Vec<String> = {
            let mut seen = BTreeSet::new();
            lhs.into_iter()
                .map(Into::into)
                .filter(|a| seen.insert(a.clone()))
                .collect()
        };
        let mut seen = BTreeSet::new();
        let rhs = rhs
            .into_iter()
            .map(Into::into)
            .filter(|a: &String| !lhs.contains(a) && seen.insert(a.clone()))
            .collect();
        Fd {
            relation: relation.into(),
            lhs,
            rhs,
        }
    }

    pub fn is_vacuous(&self) -> bool {
        self.rhs.is_empty()
    }

    pub fn validate(&self, schema: &Schema) -> Result<(), ModelError> {
        let rel = schema.require(&self.relation)?;
        for a in self.lhs.iter().chain(&self.rhs) {
            if rel.attr_index(a).is_none() {
                return Err(ModelError::UnknownAttribute {
                    relation: rel.name.clone(),
                    attribute: a.clone(),
                });
            }
        }
        Ok(())
    }

    /// true iff the determinant is exactly a declared key of the relation.
    pub fn is_key_fd(&self, schema: &Schema) -> bool {
        let Some(rel) = schema.relation(&self.relation) else {
            return false;
        };
        let lhs: BTreeSet<&str> = self.lhs.iter().map(|s| s.as_str()).collect();
        rel.key_sets().iter().any(|k| *k == lhs)
    }
}

impl std::fmt::Display for Fd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "fd {}: {} -> {}",
            self.relation,
            self.lhs.join(", "),
            self.rhs.join(", ")
        )
    }
}

/// source[source_attrs] ⊆ target[target_attrs], position-wise.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ind {
    pub source_relation: String,
    pub source_attrs: Vec<String>,
    pub target_relation: String,
    pub target_attrs: Vec<String>,
}

impl Ind {
    pub fn new(
        source_relation: impl Into<String>,
        source_attrs: Vec<impl Into<String>>,
        target_relation: impl Into<String>,
        target_attrs: Vec<impl Into<String>>,
    ) -> Self {
        Ind {
            source_relation: source_relation.into(),
            source_attrs: source_attrs.into_iter().map(Into::into).collect(),
            target_relation: target_relation.into(),
            target_attrs: target_attrs.into_iter().map(Into::into).collect(),
        }
    }

    pub fn validate(&self, schema: &Schema) -> Result<(), ModelError> {
        if self.source_attrs.len() != self.target_attrs.len() || self.source_attrs.is_empty() {
            return Err(ModelError::IndLengthMismatch(
                self.source_attrs.len(),
                self.target_attrs.len(),
            ));
        }
        let src = schema.require(&self.source_relation)?;
        let tgt = schema.require(&self.target_relation)?;
        for (i, (sa, ta)) in self.source_attrs.iter().zip(&self.target_attrs).enumerate() {
            let si = src.attr_index(sa).ok_or_else(|| ModelError::UnknownAttribute {
                relation: src.name.clone(),
                attribute: sa.clone(),
            })?;
            let ti = tgt.attr_index(ta).ok_or_else(|| ModelError::UnknownAttribute {
                relation: tgt.name.clone(),
                attribute: ta.clone(),
            })?;
            if src.attributes[si].sort != tgt.attributes[ti].sort {
                return Err(ModelError::IndSortMismatch(i));
            }
        }
        Ok(())
    }

    /// true iff the target attribute list covers every attribute of the
    /// target relation (a "full" inclusion dependency).
    pub fn is_full(&self, schema: &Schema) -> bool {
        let Some(t) = schema.relation(&self.target_relation) else {
            return false;
        };
        let covered: BTreeSet<&str> = self.target_attrs.iter().map(|s| s.as_str()).collect();
        t.attributes.iter().all(|a| covered.contains(a.name.as_str()))
    }

    /// true iff the target attribute list is exactly a declared key of the
    /// target relation (a foreign-key constraint).
    pub fn is_foreign_key(&self, schema: &Schema) -> bool {
        let Some(t) = schema.relation(&self.target_relation) else {
            return false;
        };
        let covered: BTreeSet<&str> = self.target_attrs.iter().map(|s| s.as_str()).collect();
        t.key_sets().iter().any(|k| *k == covered)
    }
}

impl std::fmt::Display for Ind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "ind {}[{}] <= {}[{}]",
            self.source_relation,
            self.source_attrs.join(", "),
            self.target_relation,
            self.target_attrs.join(", ")
        )
    }
}

/// The full constraint set an instance is checked against.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConstraintSet {
    pub denials: Vec<DenialConstraint>,
    pub fds: Vec<Fd>,
    pub inds: Vec<Ind>,
}

impl ConstraintSet {
    pub fn new(denials: Vec<DenialConstraint>, fds: Vec<Fd>, inds: Vec<Ind>) -> Self {
        ConstraintSet { denials, fds, inds }
    }

    pub fn validate(&self, schema: &Schema) -> Result<(), ModelError> {
        for d in &self.denials {
            d.validate(schema)?;
        }
        for fd in &self.fds {
            fd.validate(schema)?;
        }
        for ind in &self.inds {
            ind.validate(schema)?;
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.denials.is_empty() && self.fds.is_empty() && self.inds.is_empty()
    }

    /// Non-vacuous FDs (a vacuous FD constrains nothing and is ignored by
    /// classification and every engine).
    pub fn effective_fds(&self) -> impl Iterator<Item = &Fd> {
        self.fds.iter().filter(|fd| !fd.is_vacuous())
    }

    /// Human-readable form of one constraint, for certificates.
    pub fn describe(&self, r: &ConstraintRef) -> String {
        match r {
            ConstraintRef::Denial(i) => self.denials[*i].to_string(),
            ConstraintRef::Fd(i) => self.fds[*i].to_string(),
            ConstraintRef::Ind(i) => self.inds[*i].to_string(),
        }
    }
}

/// Index into one of a ConstraintSet's three lists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "index", rename_all = "snake_case")]
pub enum ConstraintRef {
    Denial(usize),
    Fd(usize),
    Ind(usize),
}

/// A concrete constraint violation: the constraint plus the facts that
/// ground it (an FD: the conflicting pair; an IND: the unsupported source
/// fact; a denial: the full violation set).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub constraint: ConstraintRef,
    pub facts: Vec<Fact>,
}

// ---------------------------------------------------------------------------
// Satisfaction
// ---------------------------------------------------------------------------

/// Does the instance satisfy every constraint? FDs and INDs are checked
/// natively; denial constraints by grounding their atoms against the
/// instance and evaluating φ.
pub fn satisfies(schema: &Schema, inst: &Instance, ics: &ConstraintSet) -> Result<bool, ModelError> {
    Ok(find_violation(schema, inst, ics)?.is_none())
}

/// First violation in deterministic order (denials, then FDs, then INDs;
/// groundings explored in canonical fact order), or None if consistent.
pub fn find_violation(
    schema: &Schema,
    inst: &Instance,
    ics: &ConstraintSet,
) -> Result<Option<Violation>, ModelError> {
    for (i, d) in ics.denials.iter().enumerate() {
        let mut found: Option<Vec<Fact>> = None;
        for_each_denial_violation(schema, inst, d, &mut |facts| {
            found = Some(facts.iter().map(|f| (*f).clone()).collect());
            false
        })?;
        if let Some(facts) = found {
            return Ok(Some(Violation {
                constraint: ConstraintRef::Denial(i),
                facts,
            }));
        }
    }
    for (i, fd) in ics.fds.iter().enumerate() {
        if let Some(pair) = find_fd_violation(schema, inst, fd)? {
            return Ok(Some(Violation {
                constraint: ConstraintRef::Fd(i),
                facts: pair.to_vec(),
            }));
        }
    }
    for (i, ind) in ics.inds.iter().enumerate() {
        if let Some(fact) = find_ind_violation(schema, inst, ind)? {
            return Ok(Some(Violation {
                constraint: ConstraintRef::Ind(i),
                facts: vec![fact],
            }));
        }
    }
    Ok(None)
}

/// First pair of facts violating the FD, in canonical order.
pub fn find_fd_violation(
    schema: &Schema,
    inst: &Instance,
    fd: &Fd,
) -> Result<Option<[Fact; 2]>, ModelError> {
    fd.validate(schema)?;
    if fd.is_vacuous() {
        return Ok(None);
    }
    let rel = schema.require(&fd.relation)?;
    let lhs: Vec<usize> = fd.lhs.iter().map(|a| rel.attr_index(a).unwrap()).collect();
    let rhs: Vec<usize> = fd.rhs.iter().map(|a| rel.attr_index(a).unwrap()).collect();
    // One representative per determinant group suffices: if any two group
    // members disagree on a dependent attribute, at least one of them
    // disagrees with the group's first member on it.
    let mut groups: BTreeMap<Vec<&Value>, &Fact> = BTreeMap::new();
    for fact in inst.relation(&fd.relation) {
        let key: Vec<&Value> = lhs.iter().map(|&i| &fact.values[i]).collect();
        match groups.get(&key) {
            None => {
                groups.insert(key, fact);
            }
            Some(first) => {
                if rhs.iter().any(|&i| first.values[i] != fact.values[i]) {
                    return Ok(Some([(*first).clone(), fact.clone()]));
                }
            }
        }
    }
    Ok(None)
}

/// First source fact with no supporting target fact, in canonical order.
pub fn find_ind_violation(
    schema: &Schema,
    inst: &Instance,
    ind: &Ind,
) -> Result<Option<Fact>, ModelError> {
    ind.validate(schema)?;
    let src = schema.require(&ind.source_relation)?;
    let tgt = schema.require(&ind.target_relation)?;
    let src_idx: Vec<usize> = ind
        .source_attrs
        .iter()
        .map(|a| src.attr_index(a).unwrap())
        .collect();
    let tgt_idx: Vec<usize> = ind
        .target_attrs
        .iter()
        .map(|a| tgt.attr_index(a).unwrap())
        .collect();
    let supported: BTreeSet<Vec<&Value>> = inst
        .relation(&ind.target_relation)
        .map(|f| tgt_idx.iter().map(|&i| &f.values[i]).collect())
        .collect();
    for fact in inst.relation(&ind.source_relation) {
        let proj: Vec<&Value> = src_idx.iter().map(|&i| &fact.values[i]).collect();
        if !supported.contains(&proj) {
            return Ok(Some(fact.clone()));
        }
    }
    Ok(None)
}

/// Walk every substitution that grounds `atoms` in `inst` and satisfies all
/// `builtins`, invoking `visit` with the variable bindings and the chosen
/// facts (one per atom, in atom order; the same fact may serve several
/// atoms). `visit` returns false to stop early. Facts are explored in
/// canonical order, so the visit sequence is deterministic. Inputs are
/// assumed validated (see `validate_atoms_builtins`); comparison type
/// errors surface as `Err`.
pub fn for_each_match<'a>(
    inst: &'a Instance,
    atoms: &'a [ConstraintAtom],
    builtins: &'a [BuiltinAtom],
    visit: &mut dyn FnMut(&HashMap<&'a str, &'a Value>, &[&'a Fact]) -> bool,
) -> Result<(), ModelError> {
    // Pre-index: for each builtin, the set of variables it needs bound.
    let builtin_vars: Vec<BTreeSet<&str>> = builtins
        .iter()
        .map(|b| {
            [&b.lhs, &b.rhs]
                .into_iter()
                .filter_map(|t| match t {
                    Term::Var(v) => Some(v.as_str()),
                    Term::Const(_) => None,
                })
                .collect()
        })
        .collect();

    struct Walker<'a, 'b> {
        atoms: &'a [ConstraintAtom],
        builtins: &'a [BuiltinAtom],
        inst: &'a Instance,
        builtin_vars: &'b [BTreeSet<&'a str>],
        bindings: HashMap<&'a str, &'a Value>,
        chosen: Vec<&'a Fact>,
        stopped: bool,
    }

    impl<'a, 'b> Walker<'a, 'b> {
        fn resolve(&self, t: &'a Term) -> Option<&'a Value> {
            match t {
                Term::Const(c) => Some(c),
                Term::Var(v) => self.bindings.get(v.as_str()).copied(),
            }
        }

        /// Evaluate every builtin whose variables are all bound.
        fn builtins_ok(&self, bound_only: bool) -> Result<bool, ModelError> {
            for (b, vars) in self.builtins.iter().zip(self.builtin_vars) {
                if bound_only && !vars.iter().all(|v| self.bindings.contains_key(v)) {
                    continue;
                }
                let (Some(l), Some(r)) = (self.resolve(&b.lhs), self.resolve(&b.rhs)) else {
                    continue;
                };
                if !eval_cmp(b.op, l, r)? {
                    return Ok(false);
                }
            }
            Ok(true)
        }

        fn walk(
            &mut self,
            atom_idx: usize,
            visit: &mut dyn FnMut(&HashMap<&'a str, &'a Value>, &[&'a Fact]) -> bool,
        ) -> Result<(), ModelError> {
            if self.stopped {
                return Ok(());
            }
            if atom_idx == self.atoms.len() {
                if self.builtins_ok(false)? && !visit(&self.bindings, &self.chosen) {
                    self.stopped = true;
                }
                return Ok(());
            }
            let atom = &self.atoms[atom_idx];
            'facts: for fact in self.inst.relation(&atom.relation) {
                let mut newly_bound: Vec<&str> = Vec::new();
                for (term, value) in atom.terms.iter().zip(&fact.values) {
                    match term {
                        Term::Const(c) => {
                            if c != value {
                                for v in newly_bound.drain(..) {
                                    self.bindings.remove(v);
                                }
                                continue 'facts;
                            }
                        }
                        Term::Var(v) => match self.bindings.get(v.as_str()) {
                            Some(&bound) => {
                                if bound != value {
                                    for v in newly_bound.drain(..) {
                                        self.bindings.remove(v);
                                    }
                                    continue 'facts;
                                }
                            }
                            None => {
                                self.bindings.insert(v.as_str(), value);
                                newly_bound.push(v.as_str());
                            }
                        },
                    }
                }
                let pruned = !self.builtins_ok(true)?;
                if !pruned {
                    self.chosen.push(fact);
                    self.walk(atom_idx + 1, visit)?;
                    self.chosen.pop();
                }
                for v in newly_bound {
                    self.bindings.remove(v);
                }
                if self.stopped {
                    return Ok(());
                }
            }
            Ok(())
        }
    }

    let mut walker = Walker {
        atoms,
        builtins,
        inst,
        builtin_vars: &builtin_vars,
        bindings: HashMap::new(),
        chosen: Vec::new(),
        stopped: false,
    };
    walker.walk(0, visit)
}

/// Walk every substitution that grounds the denial's atoms in `inst` and
/// satisfies φ, invoking `visit` with the (deduplicated, sorted) fact set.
/// `visit` returns false to stop early; visit order is deterministic.
pub fn for_each_denial_violation(
    schema: &Schema,
    inst: &Instance,
    denial: &DenialConstraint,
    visit: &mut dyn FnMut(&[&Fact]) -> bool,
) -> Result<(), ModelError> {
    denial.validate(schema)?;
    for_each_match(inst, &denial.atoms, &denial.builtins, &mut |_, chosen| {
        let mut facts = chosen.to_vec();
        facts.sort();
        facts.dedup();
        visit(&facts)
    })
}

// ---------------------------------------------------------------------------
// FD → denial expansion
// ---------------------------------------------------------------------------

/// Expand an FD into one two-atom denial constraint per dependent attribute:
/// X → {y₁,…} becomes ¬[R(...x̄...y...) ∧ R(...x̄...y′...) ∧ y ≠ y′] for each
/// yᵢ. Violation sets from FDs are therefore always pairs. A vacuous FD
/// yields the empty list.
pub fn fd_to_denial(schema: &Schema, fd: &Fd) -> Result<Vec<DenialConstraint>, ModelError> {
    fd.validate(schema)?;
    let rel = schema.require(&fd.relation)?;
    let mut out = Vec::new();
    for dep in &fd.rhs {
        let dep_idx = rel.attr_index(dep).unwrap();
        let make_atom = |tag: char| ConstraintAtom {
            relation: fd.relation.clone(),
            terms: rel
                .attributes
                .iter()
                .enumerate()
                .map(|(i, a)| {
                    if fd.lhs.contains(&a.name) {
                        Term::var(format!("x_{}", a.name))
                    } else if i == dep_idx {
                        Term::var(format!("y{tag}_{}", a.name))
                    } else {
                        Term::var(format!("{tag}_{}", a.name))
                    }
                })
                .collect(),
        };
        out.push(DenialConstraint {
            atoms: vec![make_atom('a'), make_atom('b')],
            builtins: vec![BuiltinAtom::new(
                Term::var(format!("ya_{dep}")),
                CmpOp::Ne,
                Term::var(format!("yb_{dep}")),
            )],
        });
    }
    Ok(out)
}

/// All denial constraints of a set: the explicit ones plus every effective
/// FD expanded. The mapping back is recorded so certificates can name the
/// original constraint.
pub fn all_as_denials(
    schema: &Schema,
    ics: &ConstraintSet,
) -> Result<(Vec<DenialConstraint>, Vec<ConstraintRef>), ModelError> {
    let mut denials = Vec::new();
    let mut origins = Vec::new();
    for (i, d) in ics.denials.iter().enumerate() {
        denials.push(d.clone());
        origins.push(ConstraintRef::Denial(i));
    }
    for (i, fd) in ics.fds.iter().enumerate() {
        for d in fd_to_denial(schema, fd)? {
            denials.push(d);
            origins.push(ConstraintRef::Fd(i));
        }
    }
    Ok((denials, origins))
}

// ---------------------------------------------------------------------------
// Classification
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    DenialOnly,
    FdsOnly,
    IndsOnly,
    SingleKeyFk,
    AcyclicFdInd,
    General,
}

impl std::fmt::Display for Classification {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Classification::DenialOnly => "denial-only",
            Classification::FdsOnly => "fds-only",
            Classification::IndsOnly => "inds-only",
            Classification::SingleKeyFk => "single-key-fk",
            Classification::AcyclicFdInd => "acyclic-fd-ind",
            Classification::General => "general",
        };
        write!(f, "{s}")
    }
}

/// Most specific applicable tag:
///
/// * no INDs: `fds-only` when the set is purely FDs, else `denial-only`
///   (FDs mixed with denial constraints are still one denial family);
/// * INDs + denial constraints: no engine covers the mix — `general`;
/// * INDs alone: `inds-only`;
/// * FDs + INDs: `single-key-fk` when every FD is a key FD, every IND a
///   foreign key, and no relation declares two keys; else `acyclic-fd-ind`
///   when the IND graph is acyclic; else `general`.
pub fn classify(schema: &Schema, ics: &ConstraintSet) -> Classification {
    let d = ics.denials.len();
    let f = ics.effective_fds().count();
    let i = ics.inds.len();
    if i == 0 {
        return if f > 0 && d == 0 {
            Classification::FdsOnly
        } else {
            Classification::DenialOnly
        };
    }
    if d > 0 {
        return Classification::General;
    }
    if f == 0 {
        return Classification::IndsOnly;
    }
    if is_single_key_fk(schema, ics) {
        return Classification::SingleKeyFk;
    }
    if ind_graph(ics).is_acyclic() {
        return Classification::AcyclicFdInd;
    }
    Classification::General
}

fn is_single_key_fk(schema: &Schema, ics: &ConstraintSet) -> bool {
    if schema.relations.iter().any(|r| r.keys.len() > 1) {
        return false;
    }
    ics.effective_fds().all(|fd| fd.is_key_fd(schema))
        && ics.inds.iter().all(|ind| ind.is_foreign_key(schema))
}

// ---------------------------------------------------------------------------
// IND graph
// ---------------------------------------------------------------------------

/// Directed graph over relation names: one edge source → target per IND.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndGraph {
    pub nodes: BTreeSet<String>,
    pub edges: BTreeSet<(String, String)>,
}

pub fn ind_graph(ics: &ConstraintSet) -> IndGraph {
    let mut nodes = BTreeSet::new();
    let mut edges = BTreeSet::new();
    for ind in &ics.inds {
        nodes.insert(ind.source_relation.clone());
        nodes.insert(ind.target_relation.clone());
        edges.insert((ind.source_relation.clone(), ind.target_relation.clone()));
    }
    IndGraph { nodes, edges }
}

impl IndGraph {
    pub fn is_acyclic(&self) -> bool {
        self.topo_targets_first().is_some()
    }

    /// Topological order with every IND **target before its source** (the
    /// sinks-first order the stage-wise engines iterate in), or None when
    /// the graph has a cycle. Self-loops count as cycles. Ties broken by
    /// name so the order is deterministic.
    pub fn topo_targets_first(&self) -> Option<Vec<String>> {
        let mut out_deg: BTreeMap<&str, usize> = self.nodes.iter().map(|n| (n.as_str(), 0)).collect();
        let mut preds: BTreeMap<&str, Vec<&str>> = BTreeMap::new(); // target -> sources
        for (s, t) in &self.edges {
            *out_deg.get_mut(s.as_str()).unwrap() += 1;
            preds.entry(t.as_str()).or_default().push(s.as_str());
        }
        let mut order = Vec::new();
        let mut ready: BTreeSet<&str> = out_deg
            .iter()
            .filter(|(_, &d)| d == 0)
            .map(|(&n, _)| n)
            .collect();
        while let Some(&n) = ready.iter().next() {
            ready.remove(n);
            order.push(n.to_string());
            for &s in preds.get(n).into_iter().flatten() {
                let d = out_deg.get_mut(s).unwrap();
                *d -= 1;
                if *d == 0 {
                    ready.insert(s);
                }
            }
        }
        (order.len() == self.nodes.len()).then_some(order)
    }

    /// Stage order for a whole schema: IND-constrained relations in
    /// targets-first order, then the untouched relations by name.
    pub fn stage_order(&self, schema: &Schema) -> Option<Vec<String>> {
        let mut order = self.topo_targets_first()?;
        let mut rest: Vec<String> = schema
            .relations
            .iter()
            .map(|r| r.name.clone())
            .filter(|n| !self.nodes.contains(n))
            .collect();
        rest.sort();
        order.extend(rest);
        Some(order)
    }
}

// ---------------------------------------------------------------------------
// Queries
// ---------------------------------------------------------------------------

/// A boolean combination of ground literals: facts and constant
/// comparisons. The parser produces flattened `And`/`Or` nodes with two or
/// more operands; evaluation accepts any arity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum GroundFormula {
    Fact(Fact),
    Builtin(BuiltinAtom),
    Not(Box<GroundFormula>),
    And(Vec<GroundFormula>),
    Or(Vec<GroundFormula>),
}

impl GroundFormula {
    /// Plain truth on one instance.
    pub fn eval(&self, inst: &Instance) -> Result<bool, ModelError> {
        match self {
            GroundFormula::Fact(f) => Ok(inst.contains(f)),
            GroundFormula::Builtin(b) => match (&b.lhs, &b.rhs) {
                (Term::Const(l), Term::Const(r)) => eval_cmp(b.op, l, r),
                _ => Err(ModelError::UnsafeVariable(b.to_string())),
            },
            GroundFormula::Not(g) => Ok(!g.eval(inst)?),
            GroundFormula::And(gs) => {
                for g in gs {
                    if !g.eval(inst)? {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
            GroundFormula::Or(gs) => {
                for g in gs {
                    if g.eval(inst)? {
                        return Ok(true);
                    }
                }
                Ok(false)
            }
        }
    }

    pub fn validate(&self, schema: &Schema) -> Result<(), ModelError> {
        match self {
            GroundFormula::Fact(f) => validate_fact(schema, f),
            GroundFormula::Builtin(b) => {
                for t in [&b.lhs, &b.rhs] {
                    match t {
                        Term::Var(v) => return Err(ModelError::UnsafeVariable(v.clone())),
                        Term::Const(c) => {
                            if b.op.is_order() && c.sort() == Sort::Symbolic {
                                return Err(ModelError::SymbolicOrder(b.to_string()));
                            }
                        }
                    }
                }
                Ok(())
            }
            GroundFormula::Not(g) => g.validate(schema),
            GroundFormula::And(gs) | GroundFormula::Or(gs) => {
                gs.iter().try_for_each(|g| g.validate(schema))
            }
        }
    }

    /// Every fact mentioned anywhere in the formula, in canonical order.
    pub fn facts(&self) -> BTreeSet<&Fact> {
        let mut out = BTreeSet::new();
        self.collect_facts(&mut out);
        out
    }

    fn collect_facts<'a>(&'a self, out: &mut BTreeSet<&'a Fact>) {
        match self {
            GroundFormula::Fact(f) => {
                out.insert(f);
            }
            GroundFormula::Builtin(_) => {}
            GroundFormula::Not(g) => g.collect_facts(out),
            GroundFormula::And(gs) | GroundFormula::Or(gs) => {
                gs.iter().for_each(|g| g.collect_facts(out));
            }
        }
    }
}

/// One relational atom of a normalized conjunctive query: every position
/// holds a distinct variable owned by this atom.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryAtom {
    pub relation: String,
    pub vars: Vec<String>,
}

/// An answer variable of an open query: the surface name plus the internal
/// variable standing for its first occurrence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreeVar {
    pub name: String,
    pub var: String,
}

/// A conjunctive query (∃-quantified conjunction of relational atoms and
/// comparisons, possibly with free answer variables) in normalized form:
/// each atom position carries a distinct fresh variable, and every binding
/// the surface syntax expressed by repeating a variable or writing a
/// constant appears as an equality in `builtins`. `free` lists the answer
/// variables in first-occurrence order; empty means a closed sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConjunctiveQuery {
    pub atoms: Vec<QueryAtom>,
    pub builtins: Vec<BuiltinAtom>,
    pub free: Vec<FreeVar>,
}

impl ConjunctiveQuery {
    /// Build the normalized form from surface syntax: atoms over arbitrary
    /// terms plus a comparison conjunction, with `bound_vars` the
    /// explicitly quantified variable names (everything else is free).
    pub fn from_raw(
        raw_atoms: Vec<(String, Vec<Term>)>,
        raw_builtins: Vec<BuiltinAtom>,
        bound_vars: &[String],
    ) -> Result<ConjunctiveQuery, ModelError> {
        let mut atoms = Vec::new();
        let mut builtins = Vec::new();
        let mut repr: HashMap<String, String> = HashMap::new();
        let mut order: Vec<String> = Vec::new(); // surface vars, first occurrence
        for (ai, (relation, terms)) in raw_atoms.into_iter().enumerate() {
            let mut vars = Vec::new();
            for (pi, term) in terms.into_iter().enumerate() {
                let fresh = format!("${ai}.{pi}");
                match term {
                    Term::Const(c) => builtins.push(BuiltinAtom::new(
                        Term::Var(fresh.clone()),
                        CmpOp::Eq,
                        Term::Const(c),
                    )),
                    Term::Var(user) => match repr.get(&user) {
                        Some(r) => builtins.push(BuiltinAtom::new(
                            Term::Var(r.clone()),
                            CmpOp::Eq,
                            Term::Var(fresh.clone()),
                        )),
                        None => {
                            repr.insert(user.clone(), fresh.clone());
                            order.push(user);
                        }
                    },
                }
                vars.push(fresh);
            }
            atoms.push(QueryAtom { relation, vars });
        }
        let map_term = |t: Term| -> Result<Term, ModelError> {
            match t {
                Term::Const(c) => Ok(Term::Const(c)),
                Term::Var(v) => repr
                    .get(&v)
                    .map(|r| Term::Var(r.clone()))
                    .ok_or(ModelError::UnsafeVariable(v)),
            }
        };
        for b in raw_builtins {
            builtins.push(BuiltinAtom::new(map_term(b.lhs)?, b.op, map_term(b.rhs)?));
        }
        for bv in bound_vars {
            if !repr.contains_key(bv) {
                return Err(ModelError::UnusedQuantifiedVariable(bv.clone()));
            }
        }
        let free = order
            .into_iter()
            .filter(|v| !bound_vars.contains(v))
            .map(|name| FreeVar {
                var: repr[&name].clone(),
                name,
            })
            .collect();
        Ok(ConjunctiveQuery {
            atoms,
            builtins,
            free,
        })
    }

    pub fn is_closed(&self) -> bool {
        self.free.is_empty()
    }

    /// No relation symbol repeats among the atoms.
    pub fn is_simple(&self) -> bool {
        let mut seen = BTreeSet::new();
        self.atoms.iter().all(|a| seen.insert(a.relation.as_str()))
    }

    pub fn validate(&self, schema: &Schema) -> Result<(), ModelError> {
        validate_atoms_builtins(schema, &self.constraint_atoms(), &self.builtins)
    }

    fn constraint_atoms(&self) -> Vec<ConstraintAtom> {
        self.atoms
            .iter()
            .map(|a| ConstraintAtom {
                relation: a.relation.clone(),
                terms: a.vars.iter().cloned().map(Term::Var).collect(),
            })
            .collect()
    }

    /// Close the query by pinning each free variable to the corresponding
    /// value of `tuple`.
    pub fn ground(&self, tuple: &[Value]) -> Result<ConjunctiveQuery, ModelError> {
        if tuple.len() != self.free.len() {
            return Err(ModelError::AnswerArity {
                got: tuple.len(),
                want: self.free.len(),
            });
        }
        let mut q = self.clone();
        for (fv, v) in self.free.iter().zip(tuple) {
            q.builtins.push(BuiltinAtom::new(
                Term::Var(fv.var.clone()),
                CmpOp::Eq,
                Term::Const(v.clone()),
            ));
        }
        q.free.clear();
        Ok(q)
    }

    /// Plain (single-instance) answers: the distinct free-variable tuples
    /// of substitutions satisfying the query, in canonical order.
    pub fn answers(&self, inst: &Instance) -> Result<BTreeSet<Vec<Value>>, ModelError> {
        let atoms = self.constraint_atoms();
        let mut out = BTreeSet::new();
        for_each_match(inst, &atoms, &self.builtins, &mut |bindings, _| {
            out.insert(
                self.free
                    .iter()
                    .map(|fv| bindings[fv.var.as_str()].clone())
                    .collect(),
            );
            true
        })?;
        Ok(out)
    }

    /// Plain truth: some substitution satisfies the query.
    pub fn holds(&self, inst: &Instance) -> Result<bool, ModelError> {
        let atoms = self.constraint_atoms();
        let mut found = false;
        for_each_match(inst, &atoms, &self.builtins, &mut |_, _| {
            found = true;
            false
        })?;
        Ok(found)
    }
}

/// A query sentence: either a ground boolean combination or a conjunctive
/// query (closed when it has no free variables).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Query {
    Ground(GroundFormula),
    Conjunctive(ConjunctiveQuery),
}

impl Query {
    pub fn validate(&self, schema: &Schema) -> Result<(), ModelError> {
        match self {
            Query::Ground(g) => g.validate(schema),
            Query::Conjunctive(q) => q.validate(schema),
        }
    }

    pub fn is_closed(&self) -> bool {
        match self {
            Query::Ground(_) => true,
            Query::Conjunctive(q) => q.is_closed(),
        }
    }

    pub fn free_vars(&self) -> Vec<&str> {
        match self {
            Query::Ground(_) => Vec::new(),
            Query::Conjunctive(q) => q.free.iter().map(|f| f.name.as_str()).collect(),
        }
    }

    /// Plain truth of a closed query on one instance; open queries error.
    pub fn holds(&self, inst: &Instance) -> Result<bool, ModelError> {
        match self {
            Query::Ground(g) => g.eval(inst),
            Query::Conjunctive(q) => {
                if !q.is_closed() {
                    return Err(ModelError::OpenQuery(
                        q.free
                            .iter()
                            .map(|f| f.name.as_str())
                            .collect::<Vec<_>>()
                            .join(", "),
                    ));
                }
                q.holds(inst)
            }
        }
    }
}
