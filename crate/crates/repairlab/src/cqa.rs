//! Consistent query answering: is a sentence true in *every* repair?
//!
//! Three polynomial engines cover the tractable classes, with an exhaustive
//! fallback for everything else:
//!
//! * **Clause-witness search** ([`cqa_ground_qf`]) decides ground
//!   quantifier-free sentences under denial constraints. The sentence is put
//!   in CNF; it is consistently true iff every clause is, and a clause fails
//!   iff some repair falsifies it — i.e. some maximal independent set of the
//!   conflict hypergraph contains all facts the clause negates and none it
//!   asserts. That witness is found by picking, for each fact to exclude, an
//!   edge that blocks it, and checking the union stays independent.
//! * **Certain-answer rewriting** ([`rewrite_simple_conjunctive`] +
//!   [`eval_fo`]) turns a closed conjunctive query over FD-constrained
//!   relations into an ∃∀∃ sentence evaluated on the *inconsistent* instance
//!   directly: pick witness tuples, then demand that for every way the
//!   adversary resolves each witness's key group, some re-choice of the
//!   non-key attributes still satisfies the query. The rewriting is always
//!   sound; it is complete when at most one query atom carries an FD, or
//!   when comparisons joining different atoms touch FD-bearing atoms only at
//!   key positions ([`is_rewrite_safe`]). Outside that fragment it can
//!   over-approximate — consistent answering for arbitrary conjunctive
//!   queries under FDs is coNP-hard, so no polynomial rewriting can be
//!   complete — and [`cqa_dispatch`] refuses instead of guessing.
//! * **Cascade pipelines** route the single-key + foreign-key class through
//!   the unique inclusion repair and inclusion-only sets through plain
//!   evaluation on their unique repair.
//!
//! Verdicts carry a witness repair whenever the engine can produce one: a
//! repair in which the sentence is false.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::bitset::BitSet;
use crate::hypergraph::{ConflictHypergraph, HypergraphError};
use crate::model::{
    all_as_denials, classify, eval_cmp, satisfies, BuiltinAtom, Classification, ConjunctiveQuery,
    ConstraintAtom, ConstraintSet, DenialConstraint, Fact, Fd, GroundFormula, Instance,
    ModelError, Query, Schema, Term, Value, for_each_match,
};
use crate::oracle::{enumerate_repairs, OracleError};
use crate::repair::{unique_ind_repair, RepairError};

pub const ENGINE_DIRECT: &str = "direct evaluation on consistent instance";
pub const ENGINE_CLAUSE: &str = "conflict-hypergraph clause-witness search";
pub const ENGINE_REWRITE: &str = "certain-answer rewriting";
pub const ENGINE_CASCADE_CLAUSE: &str = "key-cascade then clause-witness search";
pub const ENGINE_CASCADE_REWRITE: &str = "key-cascade then certain-answer rewriting";
pub const ENGINE_UNIQUE: &str = "unique cascade repair evaluation";
pub const ENGINE_ORACLE: &str = "exhaustive repair enumeration";

/// Errors from the consistent-query-answering engines.
#[derive(Debug, thiserror::Error)]
pub enum CqaError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Repair(#[from] RepairError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    /// The rewriting needs each relation to occur at most once in the query.
    #[error("relation `{0}` occurs more than once in the query; the rewriting requires distinct relations per atom")]
    RepeatedRelation(String),
    /// The rewriting needs the normalized form where every atom position
    /// binds its own variable (joins expressed as equality comparisons).
    #[error("variable `{0}` appears in more than one atom position; express joins as equality comparisons between per-position variables")]
    SharedVariable(String),
    /// The rewriting needs at most one functional dependency per relation.
    #[error("relation `{relation}` has {count} applicable functional dependencies; the rewriting supports at most one")]
    MultipleFds { relation: String, count: usize },
    /// No polynomial engine is sound and complete for this case.
    #[error(
        "no polynomial engine decides this case (constraint class `{class}`): {reason}; \
         enable the exhaustive oracle fallback to decide it on small instances"
    )]
    Unsupported {
        class: Classification,
        reason: String,
    },
}

impl From<HypergraphError> for CqaError {
    fn from(e: HypergraphError) -> Self {
        CqaError::Repair(e.into())
    }
}

fn free_var_names(q: &ConjunctiveQuery) -> String {
    q.free
        .iter()
        .map(|f| f.name.as_str())
        .collect::<Vec<_>>()
        .join(", ")
}

fn open_query_error(q: &ConjunctiveQuery) -> ModelError {
    ModelError::OpenQuery(free_var_names(q))
}

/// The outcome of a consistent-query-answering run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CqaVerdict {
    /// True iff the sentence holds in every repair.
    pub consistent: bool,
    /// On a false verdict, a repair falsifying the sentence, when the engine
    /// can construct one (the pure rewriting engine cannot).
    pub witness: Option<Instance>,
    /// Which engine produced the verdict.
    pub engine: &'static str,
}

// ---------------------------------------------------------------------------
// CNF conversion for ground formulas
// ---------------------------------------------------------------------------

/// Negation-normal form with ground comparisons already evaluated away.
enum Nnf {
    True,
    False,
    Lit(Fact, bool),
    And(Vec<Nnf>),
    Or(Vec<Nnf>),
}

fn eval_ground_builtin(b: &BuiltinAtom) -> Result<bool, ModelError> {
    match (&b.lhs, &b.rhs) {
        (Term::Const(l), Term::Const(r)) => eval_cmp(b.op, l, r),
        (Term::Var(v), _) | (_, Term::Var(v)) => Err(ModelError::UnsafeVariable(v.clone())),
    }
}

fn to_nnf(f: &GroundFormula, negated: bool) -> Result<Nnf, ModelError> {
    Ok(match f {
        GroundFormula::Fact(t) => Nnf::Lit(t.clone(), !negated),
        GroundFormula::Builtin(b) => {
            if eval_ground_builtin(b)? != negated {
                Nnf::True
            } else {
                Nnf::False
            }
        }
        GroundFormula::Not(g) => to_nnf(g, !negated)?,
        GroundFormula::And(xs) => {
            let parts = xs
                .iter()
                .map(|x| to_nnf(x, negated))
                .collect::<Result<Vec<_>, _>>()?;
            if negated {
                Nnf::Or(parts)
            } else {
                Nnf::And(parts)
            }
        }
        GroundFormula::Or(xs) => {
            let parts = xs
                .iter()
                .map(|x| to_nnf(x, negated))
                .collect::<Result<Vec<_>, _>>()?;
            if negated {
                Nnf::And(parts)
            } else {
                Nnf::Or(parts)
            }
        }
    })
}

/// A CNF clause: fact → polarity (true = the clause asserts the fact).
/// Tautological clauses are dropped during construction.
type Clause = BTreeMap<Fact, bool>;

/// Merges two clause sets as a disjunction (cross product); `None` marks a
/// tautological merge that the caller drops.
fn merge_clause(a: &Clause, b: &Clause) -> Option<Clause> {
    let mut out = a.clone();
    for (fact, &pol) in b {
        match out.get(fact) {
            Some(&p) if p != pol => return None,
            _ => {
                out.insert(fact.clone(), pol);
            }
        }
    }
    Some(out)
}

fn to_cnf(n: &Nnf) -> Vec<Clause> {
    match n {
        Nnf::True => vec![],
        Nnf::False => vec![Clause::new()],
        Nnf::Lit(fact, pol) => vec![Clause::from([(fact.clone(), *pol)])],
        Nnf::And(xs) => {
            let mut out: Vec<Clause> = xs.iter().flat_map(to_cnf).collect();
            let mut seen = BTreeSet::new();
            out.retain(|c| seen.insert(c.iter().map(|(f, p)| (f.clone(), *p)).collect::<Vec<_>>()));
            out
        }
        Nnf::Or(xs) => {
            let mut acc = vec![Clause::new()];
            for x in xs {
                let clauses = to_cnf(x);
                let mut next = Vec::new();
                for a in &acc {
                    for b in &clauses {
                        if let Some(m) = merge_clause(a, b) {
                            next.push(m);
                        }
                    }
                }
                let mut seen = BTreeSet::new();
                next.retain(|c| {
                    seen.insert(c.iter().map(|(f, p)| (f.clone(), *p)).collect::<Vec<_>>())
                });
                acc = next;
            }
            acc
        }
    }
}

/// The CNF of a ground formula as clause maps (fact → polarity); ground
/// comparisons are folded away first.
fn ground_clauses(phi: &GroundFormula) -> Result<Vec<Clause>, ModelError> {
    Ok(to_cnf(&to_nnf(phi, false)?))
}

/// Rebuilds a [`GroundFormula`] from the CNF of `phi` — logically equivalent
/// by construction; exists so tests can assert verdict invariance between a
/// formula and its CNF.
pub fn cnf_formula(phi: &GroundFormula) -> Result<GroundFormula, ModelError> {
    let tautology = || {
        GroundFormula::Builtin(BuiltinAtom::new(
            Term::Const(Value::Int(0)),
            crate::model::CmpOp::Eq,
            Term::Const(Value::Int(0)),
        ))
    };
    let contradiction = || {
        GroundFormula::Builtin(BuiltinAtom::new(
            Term::Const(Value::Int(0)),
            crate::model::CmpOp::Eq,
            Term::Const(Value::Int(1)),
        ))
    };
    let clauses = ground_clauses(phi)?;
    if clauses.is_empty() {
        return Ok(tautology());
    }
    let parts: Vec<GroundFormula> = clauses
        .into_iter()
        .map(|clause| {
            if clause.is_empty() {
                return contradiction();
            }
            let lits: Vec<GroundFormula> = clause
                .into_iter()
                .map(|(fact, pol)| {
                    if pol {
                        GroundFormula::Fact(fact)
                    } else {
                        GroundFormula::Not(Box::new(GroundFormula::Fact(fact)))
                    }
                })
                .collect();
            if lits.len() == 1 {
                lits.into_iter().next().unwrap()
            } else {
                GroundFormula::Or(lits)
            }
        })
        .collect();
    Ok(if parts.len() == 1 {
        parts.into_iter().next().unwrap()
    } else {
        GroundFormula::And(parts)
    })
}

// ---------------------------------------------------------------------------
// Clause-witness search for ground quantifier-free sentences
// ---------------------------------------------------------------------------

/// Decides whether the ground sentence `phi` is true in every repair of `r`
/// under the given denial constraints (convert functional dependencies with
/// [`crate::model::fd_to_denial`] first). On a false verdict the witness is
/// a repair falsifying `phi`.
///
/// Method: `phi` is consistently true iff each CNF clause is. A clause fails
/// iff some repair contains every fact the clause negates (`ins`) and none
/// it asserts (`outs`). Such a repair exists iff: every `ins` fact is in the
/// instance and in no single-vertex edge; and for each `outs` fact present
/// in the instance some conflict edge through it can be committed to —
/// keeping the edge's other endpoints — without any edge becoming fully
/// contained. The committed set extends greedily to a maximal independent
/// set, which is the witness (facts excluded by a committed edge can never
/// be added back).
pub fn cqa_ground_qf(
    schema: &Schema,
    r: &Instance,
    denials: &[DenialConstraint],
    phi: &GroundFormula,
) -> Result<CqaVerdict, CqaError> {
    phi.validate(schema)?;
    let hg = ConflictHypergraph::build(schema, r, denials)?;
    for clause in ground_clauses(phi)? {
        let mut ins = Vec::new();
        let mut outs = Vec::new();
        for (fact, pol) in &clause {
            if *pol {
                outs.push(fact.clone());
            } else {
                ins.push(fact.clone());
            }
        }
        if let Some(witness) = clause_witness(&hg, &ins, &outs) {
            return Ok(CqaVerdict {
                consistent: false,
                witness: Some(witness),
                engine: ENGINE_CLAUSE,
            });
        }
    }
    Ok(CqaVerdict { consistent: true, witness: None, engine: ENGINE_CLAUSE })
}

/// A repair containing every `ins` fact and no `outs` fact, if one exists.
fn clause_witness(hg: &ConflictHypergraph, ins: &[Fact], outs: &[Fact]) -> Option<Instance> {
    let mut base = BitSet::new(hg.vertex_count());
    for fact in ins {
        let v = hg.vertex_id(fact)?;
        if hg.in_singleton_edge(v) {
            return None;
        }
        base.insert(v);
    }
    // Facts absent from the instance are absent from every repair; only the
    // present ones need a blocking edge.
    let present_outs: Vec<usize> = outs.iter().filter_map(|f| hg.vertex_id(f)).collect();
    let committed = choose_blocking_edges(hg, base, &present_outs)?;
    let order: Vec<usize> = (0..hg.vertex_count()).collect();
    let maximal = hg.extend_to_maximal(&committed, &order);
    debug_assert!(present_outs.iter().all(|v| !maximal.contains(*v)));
    Some(hg.to_instance(&maximal))
}

/// Backtracking over which edge blocks each excluded vertex: commit the
/// edge's other endpoints, and accept only if no edge ends up contained.
fn choose_blocking_edges(
    hg: &ConflictHypergraph,
    acc: BitSet,
    remaining: &[usize],
) -> Option<BitSet> {
    let Some((&target, rest)) = remaining.split_first() else {
        return (hg.contained_edge(&acc).is_none()).then_some(acc);
    };
    for edge in hg
        .edges_containing(hg.fact(target))
        .expect("vertex ids from this hypergraph are valid")
    {
        let mut next = acc.clone();
        for &v in &edge.vertices {
            if v != target {
                next.insert(v);
            }
        }
        // Prune early: a contained edge never becomes uncontained later
        // (the committed set only grows).
        if hg.contained_edge(&next).is_some() {
            continue;
        }
        if let Some(done) = choose_blocking_edges(hg, next, rest) {
            return Some(done);
        }
    }
    None
}

// ---------------------------------------------------------------------------
// Certain-answer rewriting for simple closed conjunctive queries
// ---------------------------------------------------------------------------

/// How one query atom participates in the rewriting: its attribute
/// positions split by the relation's functional dependency into key (the
/// determining side), dependent (the determined side), and the rest.
/// Relations without a functional dependency get everything in `rest`: all
/// their facts survive in every repair, so the adversary has no choice to
/// make, but the consequent still re-chooses their witness tuple.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AtomPlan {
    pub relation: String,
    /// Index into the FD list the plan was built from, if the relation has
    /// one.
    pub fd: Option<usize>,
    pub key_positions: Vec<usize>,
    pub dep_positions: Vec<usize>,
    pub rest_positions: Vec<usize>,
}

/// The ∃∀∃ sentence produced by [`rewrite_simple_conjunctive`]: the original
/// atoms and comparisons (the outer ∃-block and its filter), plus one plan
/// per atom describing the ∀-block (adversary re-choices of dependent
/// attributes within each witness's key group) and the inner ∃-block
/// (re-chosen rest attributes). Every quantified variable ranges over the
/// tuples of its atom's relation, so evaluation is guarded throughout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RewrittenSentence {
    pub atoms: Vec<crate::model::QueryAtom>,
    pub phi: Vec<BuiltinAtom>,
    pub plans: Vec<AtomPlan>,
}

impl std::fmt::Display for RewrittenSentence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        // Re-quantified variables carry primes: ' for the adversary's
        // dependent values, '' for re-chosen rest attributes; keys are never
        // re-quantified and stay bare.
        let mut prime: HashMap<&str, &'static str> = HashMap::new();
        for (i, atom) in self.atoms.iter().enumerate() {
            let plan = &self.plans[i];
            for (p, v) in atom.vars.iter().enumerate() {
                let s = if plan.key_positions.contains(&p) {
                    ""
                } else if plan.dep_positions.contains(&p) {
                    "'"
                } else {
                    "''"
                };
                prime.insert(v.as_str(), s);
            }
        }
        let term = |t: &Term, primed: bool| match t {
            Term::Const(c) => c.to_string(),
            Term::Var(v) => {
                if primed {
                    format!("{v}{}", prime[v.as_str()])
                } else {
                    v.clone()
                }
            }
        };
        let builtin =
            |b: &BuiltinAtom, primed: bool| {
                format!("{} {} {}", term(&b.lhs, primed), b.op, term(&b.rhs, primed))
            };
        let atom_str = |i: usize, suffix: &dyn Fn(usize) -> &'static str| {
            let atom = &self.atoms[i];
            let vars: Vec<String> = atom
                .vars
                .iter()
                .enumerate()
                .map(|(p, v)| format!("{v}{}", suffix(p)))
                .collect();
            format!("{}({})", atom.relation, vars.join(", "))
        };
        let plain: Vec<String> = (0..self.atoms.len())
            .map(|i| atom_str(i, &|_| ""))
            .collect();
        let mut out = format!("exists {}", plain.join(" and "));
        for b in &self.phi {
            out.push_str(&format!(" and {}", builtin(b, false)));
        }
        let fd_atoms: Vec<usize> = (0..self.atoms.len())
            .filter(|&i| self.plans[i].fd.is_some())
            .collect();
        let primed_atoms: Vec<String> = fd_atoms
            .iter()
            .map(|&i| {
                let plan = &self.plans[i];
                atom_str(i, &|p| if plan.key_positions.contains(&p) { "" } else { "'" })
            })
            .collect();
        let rechosen: Vec<String> = (0..self.atoms.len())
            .map(|i| {
                let plan = &self.plans[i];
                atom_str(i, &|p| {
                    if plan.key_positions.contains(&p) {
                        ""
                    } else if plan.dep_positions.contains(&p) {
                        "'"
                    } else {
                        "''"
                    }
                })
            })
            .collect();
        let mut consequent = format!("exists {}", rechosen.join(" and "));
        for b in &self.phi {
            consequent.push_str(&format!(" and {}", builtin(b, true)));
        }
        if primed_atoms.is_empty() {
            out.push_str(&format!(" and {consequent}"));
        } else {
            out.push_str(&format!(
                " and forall [ {} -> {consequent} ]",
                primed_atoms.join(" and "),
            ));
        }
        write!(f, "{out}")
    }
}

/// Splits each atom's positions per the (at most one) applicable functional
/// dependency. Errors if a relation occurring in the query has two or more
/// applicable FDs.
fn atom_plans(
    schema: &Schema,
    q: &ConjunctiveQuery,
    fds: &[Fd],
) -> Result<Vec<AtomPlan>, CqaError> {
    // The evaluation binds variables per atom position and would silently
    // drop an implicit join, so insist on the normalized form the query
    // parser produces: one distinct variable per position.
    let mut seen_vars = BTreeSet::new();
    for atom in &q.atoms {
        for v in &atom.vars {
            if !seen_vars.insert(v.as_str()) {
                return Err(CqaError::SharedVariable(v.clone()));
            }
        }
    }
    let mut plans = Vec::with_capacity(q.atoms.len());
    for atom in &q.atoms {
        let rel = schema.require(&atom.relation)?;
        let applicable: Vec<usize> = fds
            .iter()
            .enumerate()
            .filter(|(_, fd)| fd.relation == atom.relation && !fd.is_vacuous())
            .map(|(i, _)| i)
            .collect();
        if applicable.len() > 1 {
            return Err(CqaError::MultipleFds {
                relation: atom.relation.clone(),
                count: applicable.len(),
            });
        }
        let plan = match applicable.first() {
            Some(&fi) => {
                let fd = &fds[fi];
                let key: Vec<usize> = fd
                    .lhs
                    .iter()
                    .map(|a| rel.attr_index(a).expect("validated attribute"))
                    .collect();
                let dep: Vec<usize> = fd
                    .rhs
                    .iter()
                    .map(|a| rel.attr_index(a).expect("validated attribute"))
                    .collect();
                let rest: Vec<usize> = (0..rel.arity())
                    .filter(|p| !key.contains(p) && !dep.contains(p))
                    .collect();
                AtomPlan {
                    relation: atom.relation.clone(),
                    fd: Some(fi),
                    key_positions: key,
                    dep_positions: dep,
                    rest_positions: rest,
                }
            }
            None => AtomPlan {
                relation: atom.relation.clone(),
                fd: None,
                key_positions: vec![],
                dep_positions: vec![],
                rest_positions: (0..rel.arity()).collect(),
            },
        };
        plans.push(plan);
    }
    Ok(plans)
}

/// Whether the rewriting is complete for this query (it is always sound).
///
/// Complete cases, both established against exhaustive enumeration:
/// * at most one atom's relation carries a functional dependency — the
///   adversary's choices for that one atom can be combined into a single
///   repair that kills every outer witness at once if any choice can;
/// * every comparison joining two different atoms touches FD-bearing atoms
///   only at key positions — then each witness's key group survives or dies
///   independently, and re-chosen rest attributes never affect the join.
///
/// Comparisons within one atom (including against constants) are always
/// fine: the adversary's dependent choice is quantified over directly.
pub fn is_rewrite_safe(q: &ConjunctiveQuery, plans: &[AtomPlan]) -> bool {
    let fd_atom_count = plans.iter().filter(|p| p.fd.is_some()).count();
    if fd_atom_count <= 1 {
        return true;
    }
    let mut var_home: HashMap<&str, (usize, usize)> = HashMap::new();
    for (i, atom) in q.atoms.iter().enumerate() {
        for (p, v) in atom.vars.iter().enumerate() {
            var_home.insert(v.as_str(), (i, p));
        }
    }
    for b in &q.builtins {
        let sides: Vec<(usize, usize)> = [&b.lhs, &b.rhs]
            .into_iter()
            .filter_map(|t| match t {
                Term::Var(v) => var_home.get(v.as_str()).copied(),
                Term::Const(_) => None,
            })
            .collect();
        if let [a, b2] = sides[..] {
            if a.0 != b2.0 {
                for (atom, pos) in [a, b2] {
                    let plan = &plans[atom];
                    if plan.fd.is_some() && !plan.key_positions.contains(&pos) {
                        return false;
                    }
                }
            }
        }
    }
    true
}

/// Rewrites a simple closed conjunctive query under functional dependencies
/// (at most one per relation) into the ∃∀∃ sentence whose plain evaluation
/// on the instance equals — for the [`is_rewrite_safe`] fragment — the
/// query's consistent truth. Relations without an FD contribute no
/// adversary block, but their witness tuple is still re-chosen in the
/// consequent (such facts survive in every repair, yet the particular tuple
/// satisfying the query may need to change per adversary choice).
pub fn rewrite_simple_conjunctive(
    schema: &Schema,
    q: &ConjunctiveQuery,
    fds: &[Fd],
) -> Result<RewrittenSentence, CqaError> {
    q.validate(schema)?;
    if !q.is_closed() {
        return Err(open_query_error(q).into());
    }
    if !q.is_simple() {
        let mut seen = BTreeSet::new();
        let repeated = q
            .atoms
            .iter()
            .find(|a| !seen.insert(a.relation.as_str()))
            .expect("a non-simple query repeats some relation");
        return Err(CqaError::RepeatedRelation(repeated.relation.clone()));
    }
    let plans = atom_plans(schema, q, fds)?;
    Ok(RewrittenSentence {
        atoms: q.atoms.clone(),
        phi: q.builtins.clone(),
        plans,
    })
}

fn resolve<'a>(term: &'a Term, bindings: &HashMap<&str, &'a Value>) -> &'a Value {
    match term {
        Term::Const(v) => v,
        Term::Var(name) => bindings[name.as_str()],
    }
}

fn builtins_hold(
    builtins: &[BuiltinAtom],
    bindings: &HashMap<&str, &Value>,
) -> Result<bool, ModelError> {
    for b in builtins {
        if !eval_cmp(b.op, resolve(&b.lhs, bindings), resolve(&b.rhs, bindings))? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Evaluates a rewritten sentence on an instance under the guarded
/// semantics: each quantifier ranges over the tuples of its atom's relation.
///
/// Outer ∃: an assignment of facts to atoms satisfying the comparisons.
/// ∀-block: every combination of same-key re-choices for the FD-bearing
/// atoms. Inner ∃: for each such combination, a tuple per atom agreeing
/// with the outer key and the adversary's dependent values (FD-bearing
/// atoms) or arbitrary (FD-free atoms), satisfying the comparisons again.
pub fn eval_fo(r: &Instance, s: &RewrittenSentence) -> Result<bool, CqaError> {
    let catoms: Vec<ConstraintAtom> = s
        .atoms
        .iter()
        .map(|a| ConstraintAtom {
            relation: a.relation.clone(),
            terms: a.vars.iter().cloned().map(Term::Var).collect(),
        })
        .collect();
    let mut outcome = Ok(false);
    for_each_match(r, &catoms, &s.phi, &mut |_, outer| {
        match adversary_survives(r, s, outer) {
            Ok(false) => true, // this outer witness dies; try the next
            Ok(true) => {
                outcome = Ok(true);
                false
            }
            Err(e) => {
                outcome = Err(e);
                false
            }
        }
    })?;
    outcome
}

/// Whether the outer witness survives every adversary combination.
fn adversary_survives(
    r: &Instance,
    s: &RewrittenSentence,
    outer: &[&Fact],
) -> Result<bool, CqaError> {
    let fd_atoms: Vec<usize> = (0..s.atoms.len())
        .filter(|&i| s.plans[i].fd.is_some())
        .collect();
    // Per FD-bearing atom: the facts sharing the outer witness's key values.
    let groups: Vec<Vec<&Fact>> = fd_atoms
        .iter()
        .map(|&i| {
            let plan = &s.plans[i];
            r.relation(&plan.relation)
                .filter(|g| {
                    plan.key_positions
                        .iter()
                        .all(|&p| g.values[p] == outer[i].values[p])
                })
                .collect()
        })
        .collect();
    let mut choice: Vec<&Fact> = Vec::with_capacity(fd_atoms.len());
    every_combination_has_witness(r, s, outer, &fd_atoms, &groups, &mut choice)
}

fn every_combination_has_witness<'a>(
    r: &'a Instance,
    s: &RewrittenSentence,
    outer: &[&'a Fact],
    fd_atoms: &[usize],
    groups: &[Vec<&'a Fact>],
    choice: &mut Vec<&'a Fact>,
) -> Result<bool, CqaError> {
    let depth = choice.len();
    if depth == fd_atoms.len() {
        return consequent_witness(r, s, outer, fd_atoms, choice);
    }
    for &g in &groups[depth] {
        choice.push(g);
        let ok = every_combination_has_witness(r, s, outer, fd_atoms, groups, choice)?;
        choice.pop();
        if !ok {
            return Ok(false);
        }
    }
    Ok(true)
}

/// The inner ∃: re-choose one tuple per atom compatible with the adversary
/// combination and satisfying the comparisons.
fn consequent_witness(
    r: &Instance,
    s: &RewrittenSentence,
    outer: &[&Fact],
    fd_atoms: &[usize],
    choice: &[&Fact],
) -> Result<bool, CqaError> {
    let adversary_of = |atom: usize| -> Option<&Fact> {
        fd_atoms
            .iter()
            .position(|&i| i == atom)
            .map(|slot| choice[slot])
    };
    let candidates: Vec<Vec<&Fact>> = (0..s.atoms.len())
        .map(|i| {
            let plan = &s.plans[i];
            match adversary_of(i) {
                Some(adv) => r
                    .relation(&plan.relation)
                    .filter(|h| {
                        plan.key_positions
                            .iter()
                            .all(|&p| h.values[p] == outer[i].values[p])
                            && plan
                                .dep_positions
                                .iter()
                                .all(|&p| h.values[p] == adv.values[p])
                    })
                    .collect(),
                None => r.relation(&plan.relation).collect(),
            }
        })
        .collect();
    let mut picked: Vec<&Fact> = Vec::with_capacity(s.atoms.len());
    some_pick_satisfies(s, outer, fd_atoms, choice, &candidates, &mut picked)
}

fn some_pick_satisfies<'a>(
    s: &RewrittenSentence,
    outer: &[&'a Fact],
    fd_atoms: &[usize],
    choice: &[&'a Fact],
    candidates: &[Vec<&'a Fact>],
    picked: &mut Vec<&'a Fact>,
) -> Result<bool, CqaError> {
    let depth = picked.len();
    if depth == s.atoms.len() {
        // Bind: key positions from the outer witness, dependent positions
        // from the adversary, rest (or everything, for FD-free atoms) from
        // the re-chosen tuple.
        let mut bindings: HashMap<&str, &Value> = HashMap::new();
        for (i, atom) in s.atoms.iter().enumerate() {
            let plan = &s.plans[i];
            let adv = fd_atoms
                .iter()
                .position(|&a| a == i)
                .map(|slot| choice[slot]);
            for (p, var) in atom.vars.iter().enumerate() {
                let value = if plan.key_positions.contains(&p) {
                    &outer[i].values[p]
                } else if plan.dep_positions.contains(&p) {
                    &adv.expect("dependent positions exist only on FD-bearing atoms").values[p]
                } else {
                    &picked[i].values[p]
                };
                bindings.insert(var.as_str(), value);
            }
        }
        return Ok(builtins_hold(&s.phi, &bindings)?);
    }
    for &h in &candidates[depth] {
        picked.push(h);
        let ok = some_pick_satisfies(s, outer, fd_atoms, choice, candidates, picked)?;
        picked.pop();
        if ok {
            return Ok(true);
        }
    }
    Ok(false)
}

// ---------------------------------------------------------------------------
// Dispatch
// ---------------------------------------------------------------------------

/// Options for [`cqa_dispatch`]: whether the exhaustive oracle may take over
/// when no polynomial engine is sound and complete, and up to how many
/// facts.
#[derive(Debug, Clone, Copy)]
pub struct DispatchOptions {
    pub oracle_fallback: bool,
    pub oracle_cap: usize,
}

impl Default for DispatchOptions {
    fn default() -> Self {
        DispatchOptions {
            oracle_fallback: false,
            oracle_cap: crate::oracle::default_cap(),
        }
    }
}

/// Decides whether a closed query is true in every repair, choosing the
/// engine by constraint classification and query shape:
///
/// * consistent instance (any class) — plain evaluation, the instance being
///   its own unique repair;
/// * denial-only / FDs-only + ground sentence — clause-witness search;
/// * FDs-only + simple closed conjunctive query in the safe fragment —
///   certain-answer rewriting;
/// * single-key + foreign keys — the cascade (unique inclusion repair),
///   then the matching FD engine on what survives;
/// * inclusion dependencies only — plain evaluation on the unique repair;
/// * anything else — the exhaustive oracle if opted in and the instance is
///   within the cap, otherwise an error explaining what blocks a polynomial
///   answer.
pub fn cqa_dispatch(
    schema: &Schema,
    r: &Instance,
    ics: &ConstraintSet,
    query: &Query,
    opts: DispatchOptions,
) -> Result<CqaVerdict, CqaError> {
    query.validate(schema)?;
    r.validate(schema)?;
    if !query.is_closed() {
        let names = match query {
            Query::Conjunctive(cq) => free_var_names(cq),
            Query::Ground(_) => String::new(),
        };
        return Err(ModelError::OpenQuery(names).into());
    }
    if satisfies(schema, r, ics)? {
        let holds = query.holds(r)?;
        return Ok(CqaVerdict {
            consistent: holds,
            witness: if holds { None } else { Some(r.clone()) },
            engine: ENGINE_DIRECT,
        });
    }
    let class = classify(schema, ics);
    match (class, query) {
        (Classification::DenialOnly | Classification::FdsOnly, Query::Ground(phi)) => {
            let (denials, _) = all_as_denials(schema, ics)?;
            cqa_ground_qf(schema, r, &denials, phi)
        }
        (Classification::FdsOnly, Query::Conjunctive(cq)) => {
            match try_rewrite(schema, r, cq, &ics.fds)? {
                Ok(mut verdict) => {
                    verdict.engine = ENGINE_REWRITE;
                    Ok(verdict)
                }
                Err(reason) => fallback(schema, r, ics, query, class, reason, opts),
            }
        }
        (Classification::SingleKeyFk, _) => {
            let r1 = unique_ind_repair(schema, r, &ics.inds)?;
            match query {
                Query::Ground(phi) => {
                    let fd_set = ConstraintSet::new(vec![], ics.fds.clone(), vec![]);
                    let (denials, _) = all_as_denials(schema, &fd_set)?;
                    let mut verdict = cqa_ground_qf(schema, &r1, &denials, phi)?;
                    verdict.engine = ENGINE_CASCADE_CLAUSE;
                    Ok(verdict)
                }
                Query::Conjunctive(cq) => match try_rewrite(schema, &r1, cq, &ics.fds)? {
                    Ok(mut verdict) => {
                        verdict.engine = ENGINE_CASCADE_REWRITE;
                        Ok(verdict)
                    }
                    Err(reason) => fallback(schema, r, ics, query, class, reason, opts),
                },
            }
        }
        (Classification::IndsOnly, _) => {
            let unique = unique_ind_repair(schema, r, &ics.inds)?;
            let holds = query.holds(&unique)?;
            Ok(CqaVerdict {
                consistent: holds,
                witness: if holds { None } else { Some(unique) },
                engine: ENGINE_UNIQUE,
            })
        }
        (Classification::DenialOnly, Query::Conjunctive(_)) => {
            let reason = "the rewriting covers functional dependencies, not general denial \
                          constraints, and clause-witness search needs a ground sentence"
                .to_string();
            fallback(schema, r, ics, query, class, reason, opts)
        }
        (Classification::AcyclicFdInd | Classification::General, _) => {
            let reason = format!(
                "consistent answering under constraint class `{class}` is intractable in \
                 general (beyond the single-key pipeline, mixing functional and inclusion \
                 dependencies already makes repair checking coNP-hard)"
            );
            fallback(schema, r, ics, query, class, reason, opts)
        }
    }
}

/// Attempts the rewriting; `Ok(Err(reason))` means the query is outside the
/// engine's sound-and-complete fragment.
#[allow(clippy::type_complexity)]
fn try_rewrite(
    schema: &Schema,
    r: &Instance,
    cq: &ConjunctiveQuery,
    fds: &[Fd],
) -> Result<Result<CqaVerdict, String>, CqaError> {
    if !cq.is_closed() {
        return Err(open_query_error(cq).into());
    }
    if !cq.is_simple() {
        return Ok(Err(
            "the rewriting requires each relation to occur at most once in the query".into(),
        ));
    }
    let plans = match atom_plans(schema, cq, fds) {
        Ok(p) => p,
        Err(CqaError::MultipleFds { relation, count }) => {
            return Ok(Err(format!(
                "relation `{relation}` carries {count} functional dependencies; the rewriting \
                 supports at most one per relation"
            )));
        }
        Err(CqaError::SharedVariable(v)) => {
            return Ok(Err(format!(
                "variable `{v}` appears in more than one atom position; the rewriting needs \
                 joins expressed as equality comparisons"
            )));
        }
        Err(e) => return Err(e),
    };
    if !is_rewrite_safe(cq, &plans) {
        return Ok(Err(
            "a comparison joins non-key positions of relations carrying functional \
             dependencies; the rewriting is incomplete on that fragment (consistent \
             answering for unrestricted conjunctive queries under functional dependencies \
             is coNP-hard)"
                .into(),
        ));
    }
    let sentence = RewrittenSentence {
        atoms: cq.atoms.clone(),
        phi: cq.builtins.clone(),
        plans,
    };
    let consistent = eval_fo(r, &sentence)?;
    Ok(Ok(CqaVerdict { consistent, witness: None, engine: ENGINE_REWRITE }))
}

fn fallback(
    schema: &Schema,
    r: &Instance,
    ics: &ConstraintSet,
    query: &Query,
    class: Classification,
    reason: String,
    opts: DispatchOptions,
) -> Result<CqaVerdict, CqaError> {
    if !opts.oracle_fallback {
        return Err(CqaError::Unsupported { class, reason });
    }
    let repairs = enumerate_repairs(schema, r, ics, opts.oracle_cap)?;
    for repair in &repairs.repairs {
        if !query.holds(repair)? {
            return Ok(CqaVerdict {
                consistent: false,
                witness: Some(repair.clone()),
                engine: ENGINE_ORACLE,
            });
        }
    }
    Ok(CqaVerdict { consistent: true, witness: None, engine: ENGINE_ORACLE })
}

/// Consistent answers of an open conjunctive query: the candidate tuples
/// (its answers on `r` — sound, since every repair is a subinstance and the
/// query is negation-free) whose grounding is consistently true.
pub fn consistent_answers_open(
    schema: &Schema,
    r: &Instance,
    ics: &ConstraintSet,
    q: &ConjunctiveQuery,
    opts: DispatchOptions,
) -> Result<BTreeSet<Vec<Value>>, CqaError> {
    q.validate(schema)?;
    let mut out = BTreeSet::new();
    for tuple in q.answers(r)? {
        let grounded = Query::Conjunctive(q.ground(&tuple)?);
        if cqa_dispatch(schema, r, ics, &grounded, opts)?.consistent {
            out.insert(tuple);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::{employee_manager, person_fd, person_instance, person_schema};
    use crate::model::{CmpOp, Ind};
    use crate::oracle::{oracle_cqa, oracle_consistent_answers, oracle_repair_check};
    use crate::repair::check_repair;
    use crate::textio::{parse_query, parse_schema};
    use proptest::prelude::*;

    fn person(name: &str, city: &str, street: &str) -> Fact {
        Fact::new(
            "Person",
            vec![Value::sym(name), Value::sym(city), Value::sym(street)],
        )
    }

    fn person_ics() -> ConstraintSet {
        ConstraintSet::new(vec![], vec![person_fd()], vec![])
    }

    fn person_denials() -> Vec<DenialConstraint> {
        all_as_denials(&person_schema(), &person_ics()).unwrap().0
    }

    fn ground(text: &str) -> GroundFormula {
        match parse_query(text, &person_schema(), "test").unwrap() {
            Query::Ground(g) => g,
            other => panic!("expected ground query, got {other:?}"),
        }
    }

    #[test]
    fn contested_disjunction_is_consistently_true() {
        let schema = person_schema();
        let phi = ground(
            "Person('Brown', 'Amherst', '115 Klein') or Person('Brown', 'Amherst', '120 Maple')",
        );
        let verdict =
            cqa_ground_qf(&schema, &person_instance(), &person_denials(), &phi).unwrap();
        assert!(verdict.consistent);
        assert_eq!(verdict.witness, None);
    }

    #[test]
    fn contested_fact_fails_with_the_other_repair_as_witness() {
        let schema = person_schema();
        let phi = ground("Person('Brown', 'Amherst', '115 Klein')");
        let verdict =
            cqa_ground_qf(&schema, &person_instance(), &person_denials(), &phi).unwrap();
        assert!(!verdict.consistent);
        let witness = verdict.witness.expect("clause search produces witnesses");
        let expected = Instance::from_facts([
            person("Brown", "Amherst", "120 Maple"),
            person("Green", "Clarence", "4000 Transit"),
        ]);
        assert_eq!(witness, expected);
        assert!(!phi.eval(&witness).unwrap());
        assert!(check_repair(&schema, &person_instance(), &witness, &person_ics())
            .unwrap()
            .0
            .ok);
    }

    #[test]
    fn negated_shared_fact_fails_with_witness_containing_it() {
        let schema = person_schema();
        let phi = ground("not Person('Green', 'Clarence', '4000 Transit')");
        let verdict =
            cqa_ground_qf(&schema, &person_instance(), &person_denials(), &phi).unwrap();
        assert!(!verdict.consistent);
        let witness = verdict.witness.unwrap();
        assert!(witness.contains(&person("Green", "Clarence", "4000 Transit")));
        assert!(!phi.eval(&witness).unwrap());
    }

    #[test]
    fn consistent_instance_matches_plain_evaluation() {
        let schema = person_schema();
        let inst = Instance::from_facts([
            person("Brown", "Amherst", "115 Klein"),
            person("Green", "Clarence", "4000 Transit"),
        ]);
        for text in [
            "Person('Brown', 'Amherst', '115 Klein')",
            "Person('Brown', 'Utica', '1 Elm')",
            "not Person('Brown', 'Utica', '1 Elm') and Person('Green', 'Clarence', '4000 Transit')",
        ] {
            let phi = ground(text);
            let verdict = cqa_ground_qf(&schema, &inst, &person_denials(), &phi).unwrap();
            assert_eq!(verdict.consistent, phi.eval(&inst).unwrap(), "{text}");
        }
    }

    #[test]
    fn rewrite_has_expected_exists_forall_exists_shape() {
        let schema = parse_schema(
            "relation P1(a: sym, b: sym)\nrelation P2(c: sym, d: sym)",
            "test",
        )
        .unwrap();
        let fds = vec![Fd::new("P1", ["a"], ["b"]), Fd::new("P2", ["c"], ["d"])];
        let Query::Conjunctive(q) =
            parse_query("exists x, y, u, v: P1(x, y) and P2(u, v) and x = u", &schema, "test")
                .unwrap()
        else {
            panic!("expected conjunctive");
        };
        let s = rewrite_simple_conjunctive(&schema, &q, &fds).unwrap();
        let text = s.to_string();
        // Outer block with the key join, adversary block over primed
        // dependents, inner re-choice of the same dependents, and the join
        // restated on the (unprimed) keys.
        assert!(
            text.starts_with("exists P1($0.0, $0.1) and P2($1.0, $1.1) and $0.0 = $1.0"),
            "unexpected rendering: {text}"
        );
        assert!(text.contains("forall [ P1($0.0, $0.1') and P2($1.0, $1.1')"));
        assert!(text.contains("-> exists P1($0.0, $0.1') and P2($1.0, $1.1') and $0.0 = $1.0 ]"));
        // Keys are never primed.
        assert!(!text.contains("$0.0'"));
        assert!(!text.contains("$1.0'"));
    }

    #[test]
    fn rewrite_evaluates_dependent_filter_correctly() {
        // Two facts sharing a key, FD a -> b, query asking for b = 'b':
        // the repair keeping (a, c) falsifies it.
        let schema = parse_schema("relation P(a: sym, b: sym)", "test").unwrap();
        let fds = vec![Fd::new("P", ["a"], ["b"])];
        let inst = Instance::from_facts([
            Fact::new("P", vec![Value::sym("a"), Value::sym("b")]),
            Fact::new("P", vec![Value::sym("a"), Value::sym("c")]),
        ]);
        let Query::Conjunctive(q) =
            parse_query("exists x, y: P(x, y) and y = 'b'", &schema, "test").unwrap()
        else {
            panic!()
        };
        let s = rewrite_simple_conjunctive(&schema, &q, &fds).unwrap();
        assert!(!eval_fo(&inst, &s).unwrap());
        // Sanity against the oracle.
        let ics = ConstraintSet::new(vec![], fds.clone(), vec![]);
        let query = parse_query("exists x, y: P(x, y) and y = 'b'", &schema, "test").unwrap();
        assert!(!oracle_cqa(&schema, &inst, &ics, &query, 18).unwrap());
        // The unconditional existence query survives both repairs.
        let Query::Conjunctive(q2) =
            parse_query("exists x, y: P(x, y)", &schema, "test").unwrap()
        else {
            panic!()
        };
        let s2 = rewrite_simple_conjunctive(&schema, &q2, &fds).unwrap();
        assert!(eval_fo(&inst, &s2).unwrap());
    }

    #[test]
    fn rewrite_on_empty_instance_is_false() {
        let schema = parse_schema("relation P(a: sym, b: sym)", "test").unwrap();
        let fds = vec![Fd::new("P", ["a"], ["b"])];
        let Query::Conjunctive(q) =
            parse_query("exists x, y: P(x, y)", &schema, "test").unwrap()
        else {
            panic!()
        };
        let s = rewrite_simple_conjunctive(&schema, &q, &fds).unwrap();
        assert!(!eval_fo(&Instance::empty(), &s).unwrap());
    }

    #[test]
    fn rewrite_rejects_repeats_and_multiple_fds() {
        let schema = parse_schema("relation P(a: sym, b: sym)", "test").unwrap();
        let Query::Conjunctive(q) = parse_query(
            "exists x, y, u, v: P(x, y) and P(u, v)",
            &schema,
            "test",
        )
        .unwrap() else {
            panic!()
        };
        let err = rewrite_simple_conjunctive(&schema, &q, &[Fd::new("P", ["a"], ["b"])])
            .unwrap_err();
        assert!(matches!(err, CqaError::RepeatedRelation(_)));

        let Query::Conjunctive(q2) =
            parse_query("exists x, y: P(x, y)", &schema, "test").unwrap()
        else {
            panic!()
        };
        let two = vec![Fd::new("P", ["a"], ["b"]), Fd::new("P", ["b"], ["a"])];
        let err = rewrite_simple_conjunctive(&schema, &q2, &two).unwrap_err();
        assert!(matches!(err, CqaError::MultipleFds { count: 2, .. }));
    }

    /// The rewriting is incomplete outside the safe fragment: joining the
    /// dependent position of one FD-bearing atom to the key of another pins
    /// the second key in the outer block, so no single witness survives an
    /// adversary that flips the first atom's dependent — even when every
    /// repair does satisfy the query (with different witnesses). The
    /// rewriting stays sound throughout; this is why `cqa_dispatch` gates on
    /// `is_rewrite_safe` instead of always rewriting.
    #[test]
    fn unsafe_join_has_a_counterexample_instance() {
        let schema = parse_schema(
            "relation P1(a: sym, b: sym)\nrelation P2(c: sym, d: sym)",
            "test",
        )
        .unwrap();
        let fds = vec![Fd::new("P1", ["a"], ["b"]), Fd::new("P2", ["c"], ["d"])];
        let ics = ConstraintSet::new(vec![], fds.clone(), vec![]);
        // P1's dependent equals P2's key.
        let query = parse_query(
            "exists x, y, u, v: P1(x, y) and P2(u, v) and y = u",
            &schema,
            "test",
        )
        .unwrap();
        let Query::Conjunctive(cq) = &query else { panic!() };
        let plans = atom_plans(&schema, cq, &fds).unwrap();
        assert!(!is_rewrite_safe(cq, &plans));
        let s = rewrite_simple_conjunctive(&schema, cq, &fds).unwrap();

        // The gap instance: P1's key group offers dependents b and c, and
        // P2 supports either — but each outer witness commits to one P2 key.
        let gap = Instance::from_facts([
            Fact::new("P1", vec![Value::sym("a"), Value::sym("b")]),
            Fact::new("P1", vec![Value::sym("a"), Value::sym("c")]),
            Fact::new("P2", vec![Value::sym("b"), Value::sym("e")]),
            Fact::new("P2", vec![Value::sym("c"), Value::sym("e")]),
        ]);
        assert!(!eval_fo(&gap, &s).unwrap(), "the rewriting under-approximates here");
        assert!(
            oracle_cqa(&schema, &gap, &ics, &query, 18).unwrap(),
            "every repair keeps a matching pair"
        );

        // Soundness never breaks: exhaustively over the pool's subsets, a
        // true rewriting verdict implies consistent truth.
        let pool: Vec<Fact> = gap.iter().cloned().collect();
        let mut gaps = 0u32;
        for mask in 0u32..1 << pool.len() {
            let inst: Instance = pool
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, f)| f.clone())
                .collect();
            let rewritten = eval_fo(&inst, &s).unwrap();
            let truth = oracle_cqa(&schema, &inst, &ics, &query, 18).unwrap();
            if rewritten {
                assert!(truth, "rewriting must stay sound on {inst:?}");
            }
            if rewritten != truth {
                gaps += 1;
            }
        }
        assert!(gaps > 0);
    }

    #[test]
    fn dispatch_routes_ground_and_conjunctive_fds_only() {
        let schema = person_schema();
        let inst = person_instance();
        let ics = person_ics();
        let ground_q = parse_query("Person('Green', 'Clarence', '4000 Transit')", &schema, "test")
            .unwrap();
        let verdict =
            cqa_dispatch(&schema, &inst, &ics, &ground_q, DispatchOptions::default()).unwrap();
        assert!(verdict.consistent);
        assert_eq!(verdict.engine, ENGINE_CLAUSE);

        let conj = parse_query(
            "exists c, s: Person('Brown', c, s)",
            &schema,
            "test",
        )
        .unwrap();
        let verdict =
            cqa_dispatch(&schema, &inst, &ics, &conj, DispatchOptions::default()).unwrap();
        assert!(verdict.consistent, "Brown exists in both repairs");
        assert_eq!(verdict.engine, ENGINE_REWRITE);

        let conj_false = parse_query(
            "exists s: Person('Brown', 'Amherst', s) and s = '115 Klein'",
            &schema,
            "test",
        )
        .unwrap();
        let verdict =
            cqa_dispatch(&schema, &inst, &ics, &conj_false, DispatchOptions::default()).unwrap();
        assert!(!verdict.consistent);
    }

    #[test]
    fn dispatch_shortcuts_consistent_instances() {
        let (schema, _, ics) = employee_manager();
        let consistent = Instance::from_facts([
            Fact::new("Employee", vec![Value::Int(1), Value::sym("Ann")]),
            Fact::new("Manager", vec![Value::Int(1)]),
        ]);
        let q = parse_query("Employee(1, 'Ann')", &schema, "test").unwrap();
        // The class has no polynomial engine, but a consistent instance is
        // its own unique repair.
        let verdict =
            cqa_dispatch(&schema, &consistent, &ics, &q, DispatchOptions::default()).unwrap();
        assert!(verdict.consistent);
        assert_eq!(verdict.engine, ENGINE_DIRECT);
    }

    #[test]
    fn dispatch_refuses_acyclic_class_without_fallback_and_decides_with_it() {
        let (schema, inst, ics) = employee_manager();
        let q = parse_query("Employee(555555555, 'Smith')", &schema, "test").unwrap();
        let err = cqa_dispatch(&schema, &inst, &ics, &q, DispatchOptions::default()).unwrap_err();
        assert!(matches!(err, CqaError::Unsupported { .. }));

        let opts = DispatchOptions { oracle_fallback: true, oracle_cap: 18 };
        let verdict = cqa_dispatch(&schema, &inst, &ics, &q, opts).unwrap();
        assert!(!verdict.consistent, "one repair keeps Jones for that ssn");
        assert_eq!(verdict.engine, ENGINE_ORACLE);
        let witness = verdict.witness.unwrap();
        assert!(oracle_repair_check(&schema, &inst, &witness, &ics, 18).unwrap());
        assert!(!q.holds(&witness).unwrap());
    }

    #[test]
    fn dispatch_single_key_routes_through_cascade() {
        let (schema, mut inst, ics_two) = employee_manager();
        let ics = ConstraintSet::new(
            vec![],
            vec![Fd::new("Employee", ["ssn"], ["name"])],
            ics_two.inds.clone(),
        );
        assert_eq!(classify(&schema, &ics), Classification::SingleKeyFk);
        inst.insert(Fact::new("Manager", vec![Value::Int(99)]));

        // The orphaned manager is cascade-deleted from every repair.
        let q = parse_query("Manager(99)", &schema, "test").unwrap();
        let verdict =
            cqa_dispatch(&schema, &inst, &ics, &q, DispatchOptions::default()).unwrap();
        assert!(!verdict.consistent);
        assert_eq!(verdict.engine, ENGINE_CASCADE_CLAUSE);
        let witness = verdict.witness.unwrap();
        assert!(oracle_repair_check(&schema, &inst, &witness, &ics, 18).unwrap());

        // Supported managers survive every repair.
        let q = parse_query("Manager(123456789)", &schema, "test").unwrap();
        let verdict =
            cqa_dispatch(&schema, &inst, &ics, &q, DispatchOptions::default()).unwrap();
        assert!(verdict.consistent);

        // A conjunctive query through the same pipeline.
        let q = parse_query(
            "exists n: Employee(555555555, n)",
            &schema,
            "test",
        )
        .unwrap();
        let verdict =
            cqa_dispatch(&schema, &inst, &ics, &q, DispatchOptions::default()).unwrap();
        assert!(verdict.consistent, "some employee row for that ssn survives");
        assert_eq!(verdict.engine, ENGINE_CASCADE_REWRITE);
    }

    #[test]
    fn dispatch_inds_only_evaluates_unique_repair() {
        let schema = parse_schema("relation R(a: sym)\nrelation S(a: sym)", "test").unwrap();
        let ics = ConstraintSet::new(
            vec![],
            vec![],
            vec![Ind::new("R", vec!["a"], "S", vec!["a"])],
        );
        let inst = Instance::from_facts([Fact::new("R", vec![Value::sym("k")])]);
        let q = parse_query("R('k')", &schema, "test").unwrap();
        let verdict =
            cqa_dispatch(&schema, &inst, &ics, &q, DispatchOptions::default()).unwrap();
        assert!(!verdict.consistent, "the unsupported fact is deleted");
        assert_eq!(verdict.engine, ENGINE_UNIQUE);
        assert_eq!(verdict.witness, Some(Instance::empty()));
    }

    #[test]
    fn open_answers_match_address_book_expectations() {
        let schema = person_schema();
        let inst = person_instance();
        let ics = person_ics();
        let Query::Conjunctive(full) = parse_query("Person(n, c, s)", &schema, "test").unwrap()
        else {
            panic!()
        };
        let answers =
            consistent_answers_open(&schema, &inst, &ics, &full, DispatchOptions::default())
                .unwrap();
        let expected: BTreeSet<Vec<Value>> = [vec![
            Value::sym("Green"),
            Value::sym("Clarence"),
            Value::sym("4000 Transit"),
        ]]
        .into_iter()
        .collect();
        assert_eq!(answers, expected);

        let Query::Conjunctive(pair) =
            parse_query("exists s: Person(n, c, s)", &schema, "test").unwrap()
        else {
            panic!()
        };
        let answers =
            consistent_answers_open(&schema, &inst, &ics, &pair, DispatchOptions::default())
                .unwrap();
        let expected: BTreeSet<Vec<Value>> = [
            vec![Value::sym("Brown"), Value::sym("Amherst")],
            vec![Value::sym("Green"), Value::sym("Clarence")],
        ]
        .into_iter()
        .collect();
        assert_eq!(answers, expected);
    }

    // -- property suites ---------------------------------------------------

    fn pool_fact(i: usize) -> Fact {
        // Two key groups of two facts plus one loner: rich conflict shapes.
        let rows = [("a", "b"), ("a", "c"), ("d", "b"), ("d", "e"), ("f", "g")];
        let (a, b) = rows[i];
        Fact::new("P", vec![Value::sym(a), Value::sym(b)])
    }

    fn p_schema() -> Schema {
        parse_schema("relation P(a: sym, b: sym)", "test").unwrap()
    }

    fn p_ics() -> ConstraintSet {
        ConstraintSet::new(vec![], vec![Fd::new("P", ["a"], ["b"])], vec![])
    }

    fn arb_ground_formula() -> impl Strategy<Value = GroundFormula> {
        let leaf = prop_oneof![
            (0usize..5).prop_map(|i| GroundFormula::Fact(pool_fact(i))),
            Just(GroundFormula::Builtin(BuiltinAtom::new(
                Term::Const(Value::Int(1)),
                CmpOp::Lt,
                Term::Const(Value::Int(2)),
            ))),
            Just(GroundFormula::Builtin(BuiltinAtom::new(
                Term::Const(Value::Int(2)),
                CmpOp::Lt,
                Term::Const(Value::Int(1)),
            ))),
        ];
        leaf.prop_recursive(3, 24, 3, |inner| {
            prop_oneof![
                inner.clone().prop_map(|g| GroundFormula::Not(Box::new(g))),
                proptest::collection::vec(inner.clone(), 2..4).prop_map(GroundFormula::And),
                proptest::collection::vec(inner, 2..4).prop_map(GroundFormula::Or),
            ]
        })
    }

    fn arb_p_instance() -> impl Strategy<Value = Instance> {
        proptest::collection::btree_set(0usize..5, 0..5)
            .prop_map(|picks| picks.into_iter().map(pool_fact).collect())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        /// Clause-witness search agrees with the oracle, its verdict is
        /// invariant under CNF conversion, and false verdicts carry valid
        /// witnesses.
        #[test]
        fn ground_qf_matches_oracle(inst in arb_p_instance(), phi in arb_ground_formula()) {
            let schema = p_schema();
            let ics = p_ics();
            let denials = all_as_denials(&schema, &ics).unwrap().0;
            let verdict = cqa_ground_qf(&schema, &inst, &denials, &phi).unwrap();
            let query = Query::Ground(phi.clone());
            let truth = oracle_cqa(&schema, &inst, &ics, &query, 18).unwrap();
            prop_assert_eq!(verdict.consistent, truth);

            let cnf = cnf_formula(&phi).unwrap();
            let verdict_cnf =
                cqa_ground_qf(&schema, &inst, &denials, &cnf).unwrap();
            prop_assert_eq!(verdict_cnf.consistent, verdict.consistent);

            if let Some(witness) = verdict.witness {
                prop_assert!(!phi.eval(&witness).unwrap());
                prop_assert!(oracle_repair_check(&schema, &inst, &witness, &ics, 18).unwrap());
            }
        }
    }

    /// Queries for the rewriting suite: one FD-bearing atom joined to an
    /// FD-free atom in assorted safe ways.
    fn rewrite_schema() -> Schema {
        parse_schema("relation P(a: sym, b: sym)\nrelation S(c: sym)", "test").unwrap()
    }

    fn rewrite_ics() -> ConstraintSet {
        ConstraintSet::new(vec![], vec![Fd::new("P", ["a"], ["b"])], vec![])
    }

    fn arb_rewrite_case() -> impl Strategy<Value = (Instance, &'static str)> {
        let p_fact = (prop_oneof![Just("a"), Just("d")], prop_oneof![Just("b"), Just("c")])
            .prop_map(|(a, b)| Fact::new("P", vec![Value::sym(a), Value::sym(b)]));
        let s_fact = prop_oneof![Just("a"), Just("b"), Just("c")]
            .prop_map(|c| Fact::new("S", vec![Value::sym(c)]));
        let queries = prop_oneof![
            // Key-position join with the FD-free atom.
            Just("exists x, y, z: P(x, y) and S(z) and x = z"),
            // Dependent join with the FD-free atom: only one FD-bearing
            // atom, so still complete.
            Just("exists x, y, z: P(x, y) and S(z) and y = z"),
            // Constant filter on the dependent position.
            Just("exists x, y: P(x, y) and y = 'b'"),
            // Plain existence plus an FD-free witness.
            Just("exists x, y, z: P(x, y) and S(z)"),
            // Inequality against the key.
            Just("exists x, y: P(x, y) and x != 'd'"),
        ];
        (
            proptest::collection::btree_set(p_fact, 0..5),
            proptest::collection::btree_set(s_fact, 0..3),
            queries,
        )
            .prop_map(|(ps, ss, q)| (ps.into_iter().chain(ss).collect(), q))
    }

    /// Cases exercising the second completeness condition: two FD-bearing
    /// relations joined only at key positions.
    fn arb_two_fd_case() -> impl Strategy<Value = (Instance, &'static str)> {
        let two_schema_fact = |rel: &'static str| {
            (
                prop_oneof![Just("a"), Just("d")],
                prop_oneof![Just("b"), Just("c")],
            )
                .prop_map(move |(k, d)| Fact::new(rel, vec![Value::sym(k), Value::sym(d)]))
        };
        let queries = prop_oneof![
            // Key-key join.
            Just("exists x, y, u, v: P1(x, y) and P2(u, v) and x = u"),
            // Key join plus a single-atom dependent filter.
            Just("exists x, y, u, v: P1(x, y) and P2(u, v) and x = u and y = 'b'"),
            // Key-key inequality.
            Just("exists x, y, u, v: P1(x, y) and P2(u, v) and x != u"),
            // No join at all.
            Just("exists x, y, u, v: P1(x, y) and P2(u, v)"),
        ];
        (
            proptest::collection::btree_set(two_schema_fact("P1"), 0..4),
            proptest::collection::btree_set(two_schema_fact("P2"), 0..4),
            queries,
        )
            .prop_map(|(ps, qs, q)| (ps.into_iter().chain(qs).collect(), q))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        /// Two FD-bearing atoms joined at keys: the rewriting stays complete.
        #[test]
        fn rewriting_matches_oracle_on_key_joins((inst, qtext) in arb_two_fd_case()) {
            let schema = parse_schema(
                "relation P1(a: sym, b: sym)\nrelation P2(c: sym, d: sym)",
                "test",
            )
            .unwrap();
            let fds = vec![Fd::new("P1", ["a"], ["b"]), Fd::new("P2", ["c"], ["d"])];
            let ics = ConstraintSet::new(vec![], fds.clone(), vec![]);
            let query = parse_query(qtext, &schema, "test").unwrap();
            let Query::Conjunctive(cq) = &query else { panic!() };
            let plans = atom_plans(&schema, cq, &fds).unwrap();
            prop_assert!(is_rewrite_safe(cq, &plans));
            let s = rewrite_simple_conjunctive(&schema, cq, &fds).unwrap();
            let got = eval_fo(&inst, &s).unwrap();
            let truth = oracle_cqa(&schema, &inst, &ics, &query, 18).unwrap();
            prop_assert_eq!(got, truth, "query {} on {:?}", qtext, inst);
        }

        /// The rewriting agrees with the oracle across the safe fragment,
        /// including FD-free atoms re-chosen in the consequent.
        #[test]
        fn rewriting_matches_oracle((inst, qtext) in arb_rewrite_case()) {
            let schema = rewrite_schema();
            let ics = rewrite_ics();
            let query = parse_query(qtext, &schema, "test").unwrap();
            let Query::Conjunctive(cq) = &query else { panic!() };
            let plans = atom_plans(&schema, cq, &ics.fds).unwrap();
            prop_assert!(is_rewrite_safe(cq, &plans));
            let s = rewrite_simple_conjunctive(&schema, cq, &ics.fds).unwrap();
            let got = eval_fo(&inst, &s).unwrap();
            let truth = oracle_cqa(&schema, &inst, &ics, &query, 18).unwrap();
            prop_assert_eq!(got, truth, "query {} on {:?}", qtext, inst);
        }

        /// Open-query answering matches the oracle and stays within the
        /// plain answers (monotone containment).
        #[test]
        fn open_answers_match_oracle(inst in arb_p_instance()) {
            let schema = p_schema();
            let ics = p_ics();
            let Query::Conjunctive(q) =
                parse_query("exists y: P(x, y)", &schema, "test").unwrap()
            else {
                panic!()
            };
            let got = consistent_answers_open(
                &schema, &inst, &ics, &q, DispatchOptions::default(),
            ).unwrap();
            let truth = oracle_consistent_answers(&schema, &inst, &ics, &q, 18).unwrap();
            prop_assert_eq!(&got, &truth);
            let plain = q.answers(&inst).unwrap();
            prop_assert!(got.is_subset(&plain));
        }
    }
}
