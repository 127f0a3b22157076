//! Generators that embed hard combinatorial problems — Boolean satisfiability,
//! graph three-coloring, quantified Boolean formulas — into repair checking and
//! consistent query answering.
//!
//! Each generator translates a source problem into a bundle of schema,
//! constraints, instance, and (usually) a query, such that the source problem's
//! answer is equivalent to a repair-checking or consistent-answer verdict on
//! the bundle. The equivalences make the bundles useful twice over: as stress
//! fixtures whose expected verdicts come from an independent brute-force
//! solver, and as executable evidence that the constraint classes *outside*
//! this crate's polynomial-time engines genuinely require search.
//!
//! Generated symbols use reserved name prefixes — `cl:` for clause-derived
//! constants, `v:`/`w:` for variable- and vertex-derived constants, `lit:` for
//! literal constants, `t:` for triangle names, `u:` for quantifier guards — so
//! gadget domains never collide.
//!
//! Every generator is deterministic: the same input produces byte-identical
//! bundles.

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use crate::model::{
    ConstraintAtom, ConstraintSet, DenialConstraint, Fact, Fd, Ind, Instance, KeyDecl, Query,
    RelationSchema, Schema, Sort, Term, Value,
};

/// Errors from reduction generators.
#[derive(Debug, thiserror::Error)]
pub enum ReductionError {
    /// A clause contains a zero literal or one past the declared variable count.
    #[error("literal {literal} in clause {clause} is invalid for {num_vars} variables")]
    LiteralOutOfRange {
        literal: i32,
        clause: usize,
        num_vars: usize,
    },
    /// The generator's encoding drops empty clauses, which would silently
    /// change satisfiability, so it refuses them up front.
    #[error("clause {0} is empty; the encoding cannot represent empty clauses")]
    EmptyClause(usize),
    /// The generator's equivalence property fails on the empty formula
    /// (an empty instance has the empty repair, but the empty formula is
    /// satisfiable), so it is rejected.
    #[error("the formula has no clauses; the encoding needs at least one")]
    EmptyFormula,
    /// A clause mixes positive and negative literals.
    #[error("clause {0} mixes positive and negative literals")]
    NotMonotonePartitioned(usize),
    /// The formula violates the restricted shape this generator needs.
    #[error("formula is not restricted: {0}")]
    NotRestricted(String),
    /// A quantifier prefix that does not cover the matrix variables exactly.
    #[error("quantifier prefix covers {prefix} variables but the matrix declares {matrix}")]
    PrefixMismatch { prefix: usize, matrix: usize },
    /// An edge endpoint outside the declared vertex range.
    #[error("vertex {vertex} is out of range for a graph on {vertex_count} vertices")]
    VertexOutOfRange { vertex: usize, vertex_count: usize },
    /// Two occurrence tokens forced the same clause onto one position table
    /// cell. Cannot happen for well-formed restricted formulas; reported
    /// rather than silently producing a non-permutation.
    #[error("occurrence table cell ({i},{j}) maps two variables to clause {clause}")]
    PermutationConflict { i: usize, j: usize, clause: usize },
    /// The repair-to-answering translation is defined for single-relation
    /// schemas only.
    #[error("repair-to-answering translation needs a single-relation schema, found {0} relations")]
    MultiRelation(usize),
    /// The candidate has facts outside the original instance, so it cannot be
    /// a repair and the translation's equivalence is meaningless.
    #[error("candidate is not a subset of the instance: {0} is not an original fact")]
    CandidateNotSubset(Fact),
    /// The candidate violates the constraints, so it cannot be a repair; the
    /// translation only distinguishes maximality.
    #[error("candidate violates the constraints; it cannot be a repair of anything")]
    CandidateInconsistent,
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
}

// ---------------------------------------------------------------------------
// Source-problem types
// ---------------------------------------------------------------------------

/// A propositional CNF formula over variables `1..=num_vars`, with literals as
/// signed integers (`3` for the variable, `-3` for its negation).
///
/// Two shape flags are computed at construction:
/// - *monotone-partitioned*: every clause is all-positive or all-negative;
/// - *restricted*: at most 3 literals per clause, at most 3 occurrences per
///   variable, and exactly as many clauses as variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CnfFormula {
    num_vars: usize,
    clauses: Vec<Vec<i32>>,
    monotone_partitioned: bool,
    restricted: bool,
}

impl CnfFormula {
    pub fn new(num_vars: usize, clauses: Vec<Vec<i32>>) -> Result<Self, ReductionError> {
        for (c, clause) in clauses.iter().enumerate() {
            for &lit in clause {
                if lit == 0 || lit.unsigned_abs() as usize > num_vars {
                    return Err(ReductionError::LiteralOutOfRange {
                        literal: lit,
                        clause: c + 1,
                        num_vars,
                    });
                }
            }
        }
        let monotone_partitioned = clauses
            .iter()
            .all(|c| c.iter().all(|&l| l > 0) || c.iter().all(|&l| l < 0));
        let mut occurrences = vec![0usize; num_vars + 1];
        for clause in &clauses {
            for &lit in clause {
                occurrences[lit.unsigned_abs() as usize] += 1;
            }
        }
        let restricted = clauses.iter().all(|c| c.len() <= 3)
            && occurrences.iter().all(|&n| n <= 3)
            && num_vars == clauses.len();
        Ok(CnfFormula {
            num_vars,
            clauses,
            monotone_partitioned,
            restricted,
        })
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn clauses(&self) -> &[Vec<i32>] {
        &self.clauses
    }

    /// Every clause is all-positive or all-negative.
    pub fn is_monotone_partitioned(&self) -> bool {
        self.monotone_partitioned
    }

    /// ≤3 literals per clause, ≤3 occurrences per variable, #vars = #clauses.
    pub fn is_restricted(&self) -> bool {
        self.restricted
    }

    /// Whether `assignment` (bit `i-1` = variable `i`) satisfies the formula.
    fn satisfied_by(&self, assignment: u64) -> bool {
        self.clauses.iter().all(|clause| {
            clause.iter().any(|&lit| {
                let on = assignment >> (lit.unsigned_abs() - 1) & 1 == 1;
                (lit > 0) == on
            })
        })
    }

    /// Brute-force satisfiability over all `2^num_vars` assignments. Intended
    /// for test-scale formulas.
    pub fn is_satisfiable_exhaustive(&self) -> bool {
        assert!(self.num_vars <= 24, "exhaustive check is for small formulas");
        (0u64..1 << self.num_vars).any(|a| self.satisfied_by(a))
    }
}

/// A quantified Boolean formula `∀ p₁..p_u ∃ q₁..q_e ψ` with a CNF matrix.
/// Matrix variables `1..=universals` are universally quantified; the rest are
/// existential.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Qbf2 {
    universals: usize,
    existentials: usize,
    matrix: CnfFormula,
}

impl Qbf2 {
    pub fn new(
        universals: usize,
        existentials: usize,
        matrix: CnfFormula,
    ) -> Result<Self, ReductionError> {
        if universals + existentials != matrix.num_vars() {
            return Err(ReductionError::PrefixMismatch {
                prefix: universals + existentials,
                matrix: matrix.num_vars(),
            });
        }
        Ok(Qbf2 {
            universals,
            existentials,
            matrix,
        })
    }

    pub fn universals(&self) -> usize {
        self.universals
    }

    pub fn existentials(&self) -> usize {
        self.existentials
    }

    pub fn matrix(&self) -> &CnfFormula {
        &self.matrix
    }

    /// Brute-force truth: for every universal assignment there is an
    /// existential assignment satisfying the matrix. Test-scale only.
    pub fn is_true_exhaustive(&self) -> bool {
        assert!(
            self.matrix.num_vars() <= 24,
            "exhaustive check is for small formulas"
        );
        (0u64..1 << self.universals).all(|u| {
            (0u64..1 << self.existentials)
                .any(|e| self.matrix.satisfied_by(u | e << self.universals))
        })
    }
}

/// A finite undirected graph on vertices `0..vertex_count`. Loops are allowed;
/// a loop makes the graph non-3-colorable, which gives the smallest
/// non-colorable fixtures.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UndirectedGraph {
    vertex_count: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl UndirectedGraph {
    pub fn new(vertex_count: usize) -> Self {
        UndirectedGraph {
            vertex_count,
            edges: BTreeSet::new(),
        }
    }

    /// The complete graph on `n` vertices.
    pub fn complete(n: usize) -> Self {
        let mut g = UndirectedGraph::new(n);
        for u in 0..n {
            for v in u + 1..n {
                g.edges.insert((u, v));
            }
        }
        g
    }

    pub fn add_edge(&mut self, u: usize, v: usize) -> Result<(), ReductionError> {
        for x in [u, v] {
            if x >= self.vertex_count {
                return Err(ReductionError::VertexOutOfRange {
                    vertex: x,
                    vertex_count: self.vertex_count,
                });
            }
        }
        self.edges.insert((u.min(v), u.max(v)));
        Ok(())
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    /// Edges as normalized `(min, max)` pairs.
    pub fn edges(&self) -> &BTreeSet<(usize, usize)> {
        &self.edges
    }

    /// Brute-force three-colorability over all `3^n` colorings. Test-scale
    /// only. A loop fails every coloring.
    pub fn is_three_colorable_exhaustive(&self) -> bool {
        assert!(
            self.vertex_count <= 12,
            "exhaustive check is for small graphs"
        );
        let mut coloring = vec![0u8; self.vertex_count];
        loop {
            if self
                .edges
                .iter()
                .all(|&(u, v)| coloring[u] != coloring[v])
            {
                return true;
            }
            // Advance the base-3 counter; stop after the last coloring.
            let mut i = 0;
            loop {
                if i == self.vertex_count {
                    return false;
                }
                coloring[i] += 1;
                if coloring[i] < 3 {
                    break;
                }
                coloring[i] = 0;
                i += 1;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Intermediate gadget graphs
// ---------------------------------------------------------------------------

/// A bipartite graph with green and blue edges, written as index pairs into
/// `left` × `right`. Produced by [`two_key_gadget`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BipartiteColoredGraph {
    pub left: Vec<String>,
    pub right: Vec<String>,
    pub green: BTreeSet<(usize, usize)>,
    pub blue: BTreeSet<(usize, usize)>,
}

/// A directed graph with purple, green, and blue edges, written as index pairs
/// into `vertices`. Produced by [`one_denial_gadget`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectedColoredGraph {
    pub vertices: Vec<String>,
    pub purple: BTreeSet<(usize, usize)>,
    pub green: BTreeSet<(usize, usize)>,
    pub blue: BTreeSet<(usize, usize)>,
}

/// A typed ternary hypergraph: every triangle takes one vertex from each side,
/// and triangle `i` owns `side1[i]` exclusively, so `triangles[i].0 == i`.
/// `spoiled` lists the side-1 indices of spoiled triangles. Produced by
/// [`gen_spoiled_free`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpoiledHypergraph {
    pub side1: Vec<String>,
    pub side2: Vec<String>,
    pub side3: Vec<String>,
    pub spoiled: BTreeSet<usize>,
    pub triangles: Vec<(usize, usize, usize)>,
}

// ---------------------------------------------------------------------------
// Output bundle
// ---------------------------------------------------------------------------

/// Everything a generated problem instance consists of. `query` is `None` for
/// the repair-checking families, whose property talks about the empty
/// candidate instead.
#[derive(Debug, Clone)]
pub struct ReductionOutput {
    pub schema: Schema,
    pub constraints: ConstraintSet,
    pub instance: Instance,
    pub query: Option<Query>,
    /// One-line summary of what the bundle encodes and which equivalence ties
    /// it back to the source problem.
    pub note: String,
}

// ---------------------------------------------------------------------------
// Shared naming helpers
// ---------------------------------------------------------------------------

fn cl(i: usize) -> Value {
    Value::sym(format!("cl:{i}"))
}

fn var_sym(i: usize) -> Value {
    Value::sym(format!("v:{i}"))
}

fn lit_sym(lit: i32) -> Value {
    if lit > 0 {
        Value::sym(format!("lit:{lit}"))
    } else {
        Value::sym(format!("lit:~{}", -lit))
    }
}

fn sym_relation(name: &str, attrs: &[&str]) -> RelationSchema {
    RelationSchema::new(name, attrs.iter().map(|a| (*a, Sort::Symbolic)).collect())
}

fn parse_generated_query(text: &str, schema: &Schema) -> Query {
    crate::textio::parse_query(text, schema, "<generated>")
        .expect("generated query text parses against the generated schema")
}

fn well_typed(instance: Instance, schema: &Schema) -> Instance {
    instance
        .validate(schema)
        .expect("generated instance is well-typed");
    instance
}

// ---------------------------------------------------------------------------
// Satisfiability vs. one functional dependency (conjunctive query)
// ---------------------------------------------------------------------------

/// Encodes a monotone-partitioned CNF formula as a single ternary relation
/// with one functional dependency.
///
/// Relation `R(a, b, c)` with FD `a → b, c` holds one fact per literal
/// occurrence: clause `i`'s literals become `R(cl:i, v:p, 'c')` when the
/// clause is all-negative and `R(cl:i, v:p, 'c2')` when all-positive. Each
/// repair keeps exactly one literal per clause, so repairs are choice
/// functions; the query `exists x, y, z: R(x, y, 'c') and R(z, y, 'c2')`
/// detects a variable chosen with both polarities.
///
/// Property: the formula is satisfiable **iff** the query is *not*
/// consistently true.
///
/// Errors on formulas that are not monotone-partitioned and on empty clauses
/// (which the encoding would silently drop, changing satisfiability).
pub fn gen_monotone3sat(f: &CnfFormula) -> Result<ReductionOutput, ReductionError> {
    if let Some(c) = f
        .clauses
        .iter()
        .position(|c| !(c.iter().all(|&l| l > 0) || c.iter().all(|&l| l < 0)))
    {
        return Err(ReductionError::NotMonotonePartitioned(c + 1));
    }
    if let Some(c) = f.clauses.iter().position(|c| c.is_empty()) {
        return Err(ReductionError::EmptyClause(c + 1));
    }
    let schema = Schema::new(vec![sym_relation("R", &["a", "b", "c"])])
        .expect("fixed generated schema is valid");
    let constraints = ConstraintSet::new(vec![], vec![Fd::new("R", ["a"], ["b", "c"])], vec![]);
    let mut instance = Instance::empty();
    for (i, clause) in f.clauses.iter().enumerate() {
        let flavor = if clause[0] > 0 { "c2" } else { "c" };
        for &lit in clause {
            instance.insert(Fact::new(
                "R",
                vec![
                    cl(i + 1),
                    var_sym(lit.unsigned_abs() as usize),
                    Value::sym(flavor),
                ],
            ));
        }
    }
    let query = parse_generated_query("exists x, y, z: R(x, y, 'c') and R(z, y, 'c2')", &schema);
    Ok(ReductionOutput {
        instance: well_typed(instance, &schema),
        schema,
        constraints,
        query: Some(query),
        note: format!(
            "monotone-partitioned CNF with {} clauses over {} variables; \
             satisfiable iff the query is not consistently true",
            f.clauses.len(),
            f.num_vars
        ),
    })
}

// ---------------------------------------------------------------------------
// Three-coloring vs. two key dependencies (fixed query)
// ---------------------------------------------------------------------------

/// Slot names of the ten gadget vertices each graph vertex expands into:
/// two matching anchors (`m`, `n`) and one slot per color.
const TWO_KEY_SLOTS: [&str; 5] = ["m", "n", "r", "g", "b"];
const COLOR_SLOTS: [usize; 3] = [2, 3, 4]; // indices of r, g, b in TWO_KEY_SLOTS

/// Expands a graph into the bipartite green/blue gadget behind
/// [`gen_two_key`].
///
/// Each vertex `k` becomes five left vertices `v:k:{m,n,r,g,b}` and five right
/// vertices `w:k:{m,n,r,g,b}`. Green edges wire the anchors so that a maximal
/// green-only matching inside one vertex block leaves exactly one color slot
/// free on each side — the same color on both — making the three maximal
/// green configurations act as color choices. Blue edges connect different
/// color slots within a block and equal color slots across each graph edge
/// (both orientations), so a blue edge can extend a green matching exactly
/// when the coloring breaks.
pub fn two_key_gadget(g: &UndirectedGraph) -> BipartiteColoredGraph {
    let mut left = Vec::new();
    let mut right = Vec::new();
    for k in 0..g.vertex_count {
        for slot in TWO_KEY_SLOTS {
            left.push(format!("v:{k}:{slot}"));
            right.push(format!("w:{k}:{slot}"));
        }
    }
    let at = |k: usize, slot: usize| k * TWO_KEY_SLOTS.len() + slot;
    let mut green = BTreeSet::new();
    let mut blue = BTreeSet::new();
    // Slot indices: m=0, n=1, r=2, g=3, b=4.
    const GREEN_WIRING: [(usize, usize); 8] = [
        (0, 2),
        (0, 4),
        (1, 4),
        (1, 3),
        (2, 0),
        (4, 0),
        (4, 1),
        (3, 1),
    ];
    for k in 0..g.vertex_count {
        for (l, r) in GREEN_WIRING {
            green.insert((at(k, l), at(k, r)));
        }
        for l in COLOR_SLOTS {
            for r in COLOR_SLOTS {
                if l != r {
                    blue.insert((at(k, l), at(k, r)));
                }
            }
        }
    }
    for &(u, v) in &g.edges {
        for c in COLOR_SLOTS {
            blue.insert((at(u, c), at(v, c)));
            blue.insert((at(v, c), at(u, c)));
        }
    }
    BipartiteColoredGraph {
        left,
        right,
        green,
        blue,
    }
}

/// Encodes graph three-coloring as a ternary relation with two key
/// dependencies.
///
/// The bipartite gadget from [`two_key_gadget`] becomes facts
/// `R(left, right, color)` with FDs `a → b, c` and `b → a, c`, so repairs are
/// exactly the maximal matchings of the gadget. The query
/// `exists x, y: R(x, y, 'b')` asks for a blue edge.
///
/// Property: the graph is 3-colorable **iff** the query is *not* consistently
/// true (a coloring yields a maximal all-green repair, and conversely).
pub fn gen_two_key(g: &UndirectedGraph) -> ReductionOutput {
    let gadget = two_key_gadget(g);
    let schema = Schema::new(vec![sym_relation("R", &["a", "b", "c"])])
        .expect("fixed generated schema is valid");
    let constraints = ConstraintSet::new(
        vec![],
        vec![
            Fd::new("R", ["a"], ["b", "c"]),
            Fd::new("R", ["b"], ["a", "c"]),
        ],
        vec![],
    );
    let mut instance = Instance::empty();
    for (edges, color) in [(&gadget.green, "g"), (&gadget.blue, "b")] {
        for &(l, r) in edges {
            instance.insert(Fact::new(
                "R",
                vec![
                    Value::sym(gadget.left[l].clone()),
                    Value::sym(gadget.right[r].clone()),
                    Value::sym(color),
                ],
            ));
        }
    }
    let query = parse_generated_query("exists x, y: R(x, y, 'b')", &schema);
    ReductionOutput {
        instance: well_typed(instance, &schema),
        schema,
        constraints,
        query: Some(query),
        note: format!(
            "three-coloring gadget for a graph on {} vertices and {} edges; \
             3-colorable iff the query is not consistently true",
            g.vertex_count,
            g.edges.len()
        ),
    }
}

// ---------------------------------------------------------------------------
// Satisfiability vs. a single denial constraint (fixed query)
// ---------------------------------------------------------------------------

/// Expands a CNF formula into the directed colored graph behind
/// [`gen_one_denial`].
///
/// Each variable `i` gets a path `v:i:a → v:i:b` (purple) with two branches
/// `v:i:b → v:i:d` (green) and `v:i:b → v:i:c` (blue); each clause `j` gets
/// `cl:j:e → cl:j:f` (purple) and `cl:j:e → cl:j:g` (green). A positive
/// occurrence of variable `i` in clause `j` adds the green edge
/// `v:i:d → cl:j:e`; a negative occurrence adds the same edge in blue.
pub fn one_denial_gadget(f: &CnfFormula) -> DirectedColoredGraph {
    let mut vertices = Vec::new();
    let mut index = BTreeMap::new();
    for i in 1..=f.num_vars {
        for slot in ["a", "b", "c", "d"] {
            index.insert((0, i, slot), vertices.len());
            vertices.push(format!("v:{i}:{slot}"));
        }
    }
    for j in 1..=f.clauses.len() {
        for slot in ["e", "f", "g"] {
            index.insert((1, j, slot), vertices.len());
            vertices.push(format!("cl:{j}:{slot}"));
        }
    }
    let var = |i: usize, slot: &str| index[&(0, i, slot)];
    let clause = |j: usize, slot: &str| index[&(1, j, slot)];
    let mut purple = BTreeSet::new();
    let mut green = BTreeSet::new();
    let mut blue = BTreeSet::new();
    for i in 1..=f.num_vars {
        purple.insert((var(i, "a"), var(i, "b")));
        green.insert((var(i, "b"), var(i, "d")));
        blue.insert((var(i, "b"), var(i, "c")));
    }
    for (j0, lits) in f.clauses.iter().enumerate() {
        let j = j0 + 1;
        purple.insert((clause(j, "e"), clause(j, "f")));
        green.insert((clause(j, "e"), clause(j, "g")));
        for &lit in lits {
            let d = var(lit.unsigned_abs() as usize, "d");
            if lit > 0 {
                green.insert((d, clause(j, "e")));
            } else {
                blue.insert((d, clause(j, "e")));
            }
        }
    }
    DirectedColoredGraph {
        vertices,
        purple,
        green,
        blue,
    }
}

/// Encodes CNF satisfiability under a *single* denial constraint.
///
/// The gadget from [`one_denial_gadget`] becomes facts `R(from, to, color)`
/// with colors `'p'`/`'g'`/`'b'`. The one denial forbids a vertex that has an
/// incoming edge from also having two outgoing edges of different colors:
///
/// ```text
/// denial R(x, y, s) and R(y, z, s2) and R(y, w, s3) and s2 != s3
/// ```
///
/// Keeping a variable's two branch colors blocks re-adding its purple edge;
/// whether a clause's purple edge can be blocked depends on consistently
/// picking branch colors — an assignment. The query
/// `exists x, y: R(x, y, 'p')` asks for a purple edge.
///
/// Property: the formula is satisfiable **iff** the query is *not*
/// consistently true. Total: empty clauses and the empty formula encode
/// correctly.
pub fn gen_one_denial(f: &CnfFormula) -> ReductionOutput {
    let gadget = one_denial_gadget(f);
    let schema = Schema::new(vec![sym_relation("R", &["a", "b", "c"])])
        .expect("fixed generated schema is valid");
    let v = |name: &str| Term::Var(name.to_string());
    let denial = DenialConstraint {
        atoms: vec![
            ConstraintAtom {
                relation: "R".into(),
                terms: vec![v("x"), v("y"), v("s1")],
            },
            ConstraintAtom {
                relation: "R".into(),
                terms: vec![v("y"), v("z"), v("s2")],
            },
            ConstraintAtom {
                relation: "R".into(),
                terms: vec![v("y"), v("w"), v("s3")],
            },
        ],
        builtins: vec![crate::model::BuiltinAtom::new(
            v("s2"),
            crate::model::CmpOp::Ne,
            v("s3"),
        )],
    };
    denial
        .validate(&schema)
        .expect("fixed generated denial is valid");
    let constraints = ConstraintSet::new(vec![denial], vec![], vec![]);
    let mut instance = Instance::empty();
    for (edges, color) in [
        (&gadget.purple, "p"),
        (&gadget.green, "g"),
        (&gadget.blue, "b"),
    ] {
        for &(from, to) in edges {
            instance.insert(Fact::new(
                "R",
                vec![
                    Value::sym(gadget.vertices[from].clone()),
                    Value::sym(gadget.vertices[to].clone()),
                    Value::sym(color),
                ],
            ));
        }
    }
    let query = parse_generated_query("exists x, y: R(x, y, 'p')", &schema);
    ReductionOutput {
        instance: well_typed(instance, &schema),
        schema,
        constraints,
        query: Some(query),
        note: format!(
            "single-denial satisfiability gadget with {} clauses over {} variables; \
             satisfiable iff the query is not consistently true",
            f.clauses.len(),
            f.num_vars
        ),
    }
}

// ---------------------------------------------------------------------------
// Three-coloring vs. acyclic keys + foreign keys (ground query)
// ---------------------------------------------------------------------------

/// Slot names of the spoiled-hypergraph expansion: one slot per color plus two
/// matching anchors (`p`, `q`).
const SPOILED_SLOTS: [&str; 5] = ["r", "g", "b", "p", "q"];

/// Expands a graph into a typed ternary hypergraph whose maximal
/// coordinate-disjoint triangle sets avoid the *spoiled* triangles exactly
/// when the graph is 3-colorable.
///
/// Each vertex `k` becomes five side-2 vertices `v:k:{r,g,b,p,q}` and five
/// side-3 vertices `w:k:{r,g,b,p,q}`; triangle `i` additionally owns the fresh
/// side-1 vertex `t:i`. Eight unspoiled triangles per vertex wire colors to
/// anchors so that a maximal unspoiled selection leaves exactly one color slot
/// free on each side — the same color. Spoiled triangles join different color
/// slots within a vertex and equal color slots across each graph edge (both
/// orientations).
pub fn gen_spoiled_free(g: &UndirectedGraph) -> SpoiledHypergraph {
    let mut side2 = Vec::new();
    let mut side3 = Vec::new();
    for k in 0..g.vertex_count {
        for slot in SPOILED_SLOTS {
            side2.push(format!("v:{k}:{slot}"));
            side3.push(format!("w:{k}:{slot}"));
        }
    }
    let at = |k: usize, slot: usize| k * SPOILED_SLOTS.len() + slot;
    let mut side1 = Vec::new();
    let mut triangles = Vec::new();
    let mut spoiled = BTreeSet::new();
    let mut push = |pair: (usize, usize), spoil: bool, side1: &mut Vec<String>| {
        let t = triangles.len();
        side1.push(format!("t:{t}"));
        triangles.push((t, pair.0, pair.1));
        if spoil {
            spoiled.insert(t);
        }
    };
    // Slot indices: r=0, g=1, b=2, p=3, q=4.
    const UNSPOILED_WIRING: [(usize, usize); 8] = [
        (0, 3),
        (1, 3),
        (1, 4),
        (2, 4),
        (3, 0),
        (3, 1),
        (4, 1),
        (4, 2),
    ];
    for k in 0..g.vertex_count {
        for (l, r) in UNSPOILED_WIRING {
            push((at(k, l), at(k, r)), false, &mut side1);
        }
        for l in 0..3 {
            for r in 0..3 {
                if l != r {
                    push((at(k, l), at(k, r)), true, &mut side1);
                }
            }
        }
    }
    let mut cross = BTreeSet::new();
    for &(u, v) in &g.edges {
        for c in 0..3 {
            cross.insert((at(u, c), at(v, c)));
            cross.insert((at(v, c), at(u, c)));
        }
    }
    for pair in cross {
        push(pair, true, &mut side1);
    }
    SpoiledHypergraph {
        side1,
        side2,
        side3,
        spoiled,
        triangles,
    }
}

/// Encodes the spoiled-triangle avoidance problem — and through
/// [`gen_spoiled_free`], graph three-coloring — as consistent answering of a
/// ground query under acyclic keys and foreign keys.
///
/// Schema: `P(w)`; `Q(q1, q2)` with primary key `q1`; `R(r1, r2, r3)` where
/// all three attributes are keys (`r1` primary). Foreign keys `P[w] ⊆ Q[q1]`
/// and `Q[q2] ⊆ R[r1]` form an acyclic chain. The instance holds `P('a')`,
/// one `Q('a', t)` per spoiled triangle `t`, and one `R` fact per triangle.
/// A repair keeps a maximal coordinate-disjoint triangle set; `P('a')`
/// survives exactly when a spoiled triangle survives to support it.
///
/// Property: the source graph is 3-colorable **iff** the query `P('a')` is
/// *not* consistently true.
pub fn gen_acyclic_cqa(sf: &SpoiledHypergraph) -> ReductionOutput {
    let mut p = sym_relation("P", &["w"]);
    p.keys.push(KeyDecl {
        attrs: vec!["w".into()],
        primary: true,
    });
    let mut q = sym_relation("Q", &["q1", "q2"]);
    q.keys.push(KeyDecl {
        attrs: vec!["q1".into()],
        primary: true,
    });
    let mut r = sym_relation("R", &["r1", "r2", "r3"]);
    r.keys.push(KeyDecl {
        attrs: vec!["r1".into()],
        primary: true,
    });
    for k in ["r2", "r3"] {
        r.keys.push(KeyDecl {
            attrs: vec![k.into()],
            primary: false,
        });
    }
    let schema = Schema::new(vec![p, q, r]).expect("fixed generated schema is valid");
    let constraints = ConstraintSet::new(
        vec![],
        vec![
            Fd::new("Q", ["q1"], ["q2"]),
            Fd::new("R", ["r1"], ["r2", "r3"]),
            Fd::new("R", ["r2"], ["r1", "r3"]),
            Fd::new("R", ["r3"], ["r1", "r2"]),
        ],
        vec![
            Ind::new("P", vec!["w"], "Q", vec!["q1"]),
            Ind::new("Q", vec!["q2"], "R", vec!["r1"]),
        ],
    );
    let mut instance = Instance::empty();
    instance.insert(Fact::new("P", vec![Value::sym("a")]));
    for &s in &sf.spoiled {
        instance.insert(Fact::new(
            "Q",
            vec![Value::sym("a"), Value::sym(sf.side1[s].clone())],
        ));
    }
    for &(t, i, j) in &sf.triangles {
        instance.insert(Fact::new(
            "R",
            vec![
                Value::sym(sf.side1[t].clone()),
                Value::sym(sf.side2[i].clone()),
                Value::sym(sf.side3[j].clone()),
            ],
        ));
    }
    let query = parse_generated_query("P('a')", &schema);
    ReductionOutput {
        instance: well_typed(instance, &schema),
        schema,
        constraints,
        query: Some(query),
        note: format!(
            "spoiled-triangle hypergraph with {} triangles ({} spoiled) under acyclic \
             keys and foreign keys; a spoiled-free maximal selection exists iff P('a') \
             is not consistently true",
            sf.triangles.len(),
            sf.spoiled.len()
        ),
    }
}

// ---------------------------------------------------------------------------
// Satisfiability vs. one FD plus one inclusion dependency (repair checking)
// ---------------------------------------------------------------------------

/// Encodes CNF satisfiability as an empty-repair question under one
/// functional dependency and one (cyclic) inclusion dependency.
///
/// Relation `R(a1, a2, a3, a4)` holds one fact per literal occurrence: a
/// positive occurrence of variable `p` in clause `i` becomes
/// `R(v:p, 1, cl:i, cl:i+1)` and a negative one `R(v:p, 0, cl:i, cl:i+1)`,
/// with the clause pointer wrapping from the last clause to the first. The FD
/// `a1 → a2` forces a consistent assignment; the inclusion dependency
/// `R[a3] ⊆ R[a4]` forces every kept fact's clause to be preceded by a kept
/// fact of the previous clause, so any nonempty consistent subset selects a
/// satisfying assignment covering every clause.
///
/// Property: the empty instance is a repair **iff** the formula is
/// unsatisfiable. Errors on the empty formula, whose empty encoding would
/// make the property false.
pub fn gen_fd_ind_repaircheck(f: &CnfFormula) -> Result<ReductionOutput, ReductionError> {
    if f.clauses.is_empty() {
        return Err(ReductionError::EmptyFormula);
    }
    let schema = Schema::new(vec![RelationSchema::new(
        "R",
        vec![
            ("a1", Sort::Symbolic),
            ("a2", Sort::Numeric),
            ("a3", Sort::Symbolic),
            ("a4", Sort::Symbolic),
        ],
    )])
    .expect("fixed generated schema is valid");
    let constraints = ConstraintSet::new(
        vec![],
        vec![Fd::new("R", ["a1"], ["a2"])],
        vec![Ind::new("R", vec!["a3"], "R", vec!["a4"])],
    );
    let m = f.clauses.len();
    let mut instance = Instance::empty();
    for (i0, clause) in f.clauses.iter().enumerate() {
        let i = i0 + 1;
        let next = if i == m { 1 } else { i + 1 };
        for &lit in clause {
            instance.insert(Fact::new(
                "R",
                vec![
                    var_sym(lit.unsigned_abs() as usize),
                    Value::Int(if lit > 0 { 1 } else { 0 }),
                    cl(i),
                    cl(next),
                ],
            ));
        }
    }
    Ok(ReductionOutput {
        instance: well_typed(instance, &schema),
        schema,
        constraints,
        query: None,
        note: format!(
            "clause-chain encoding of a CNF with {} clauses over {} variables; \
             the empty instance is a repair iff the formula is unsatisfiable",
            m, f.num_vars
        ),
    })
}

// ---------------------------------------------------------------------------
// Satisfiability vs. key dependencies plus foreign keys (repair checking)
// ---------------------------------------------------------------------------

/// Encodes restricted CNF satisfiability as an empty-repair question under
/// key dependencies and foreign keys over ten binary relations.
///
/// Restricted means: at most 3 literals per clause, at most 3 occurrences per
/// variable, and exactly as many clauses as variables. Relation `R(a, b)` has
/// key `b` and holds one `(lit, clause)` fact per literal occurrence — a
/// repair keeps at most one chosen literal per clause. Each companion
/// `R_i_j(a, b)` (clause position `i`, occurrence rank `j`) has both columns
/// as keys and holds, for every variable `l`, the pair of facts
/// `(lit:l, cl:s)` and `(lit:~l, cl:s)` — sharing a key, so a repair keeps at
/// most one: a truth value for `l`. The clause `s = s(i,j,l)` is the one
/// *before* the clause where `l`'s rank-`j` occurrence sits at position `i`
/// (wrapping to the last clause), completed to a permutation by assigning
/// unconstrained variables the unused clauses in ascending order. Foreign
/// keys `R_i_j[b] ⊆ R[b]` and `R[a] ⊆ R_i_j[a]` then force any nonempty
/// consistent subset to pick a chosen literal for *every* clause and a
/// consistent assignment agreeing with every choice.
///
/// Property: the empty instance is a repair **iff** the formula is
/// unsatisfiable. Errors when the restricted flag is unmet and on the empty
/// formula.
pub fn gen_keyfk_repaircheck(f: &CnfFormula) -> Result<ReductionOutput, ReductionError> {
    if !f.restricted {
        let reason = if f.clauses.iter().any(|c| c.len() > 3) {
            "a clause has more than 3 literals".to_string()
        } else if f.num_vars != f.clauses.len() {
            format!(
                "{} variables but {} clauses",
                f.num_vars,
                f.clauses.len()
            )
        } else {
            "a variable occurs more than 3 times".to_string()
        };
        return Err(ReductionError::NotRestricted(reason));
    }
    if f.clauses.is_empty() {
        return Err(ReductionError::EmptyFormula);
    }
    let n = f.num_vars;
    let m = f.clauses.len();

    // Occurrence tokens per variable, in clause-then-position order; the
    // token's rank is its 1-based index in this list.
    let mut occurrences: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n + 1];
    for (c0, clause) in f.clauses.iter().enumerate() {
        for (p0, &lit) in clause.iter().enumerate() {
            occurrences[lit.unsigned_abs() as usize].push((c0 + 1, p0 + 1));
        }
    }

    // The partial mapping of each (position, rank) table: variable -> clause.
    let mut table: BTreeMap<(usize, usize), BTreeMap<usize, usize>> = BTreeMap::new();
    for i in 1..=3 {
        for j in 1..=3 {
            table.insert((i, j), BTreeMap::new());
        }
    }
    for (l, tokens) in occurrences.iter().enumerate().skip(1) {
        for (j0, &(c, i)) in tokens.iter().enumerate() {
            let j = j0 + 1;
            let prev = if c == 1 { m } else { c - 1 };
            let cell = table.get_mut(&(i, j)).expect("restricted bounds");
            if cell.values().any(|&k| k == prev) {
                return Err(ReductionError::PermutationConflict {
                    i,
                    j,
                    clause: prev,
                });
            }
            cell.insert(l, prev);
        }
    }
    // Complete each cell to a permutation: unconstrained variables take the
    // unused clauses in ascending order.
    for cell in table.values_mut() {
        let used: BTreeSet<usize> = cell.values().copied().collect();
        let mut free = (1..=m).filter(|k| !used.contains(k));
        for l in 1..=n {
            if !cell.contains_key(&l) {
                cell.insert(l, free.next().expect("as many variables as clauses"));
            }
        }
    }

    let mut relations = Vec::new();
    let mut base = sym_relation("R", &["a", "b"]);
    base.keys.push(KeyDecl {
        attrs: vec!["b".into()],
        primary: true,
    });
    relations.push(base);
    let mut fds = vec![Fd::new("R", ["b"], ["a"])];
    let mut inds = Vec::new();
    for i in 1..=3 {
        for j in 1..=3 {
            let name = format!("R_{i}_{j}");
            let mut rel = sym_relation(&name, &["a", "b"]);
            rel.keys.push(KeyDecl {
                attrs: vec!["a".into()],
                primary: true,
            });
            rel.keys.push(KeyDecl {
                attrs: vec!["b".into()],
                primary: false,
            });
            relations.push(rel);
            fds.push(Fd::new(&name, ["a"], ["b"]));
            fds.push(Fd::new(&name, ["b"], ["a"]));
            inds.push(Ind::new(&name, vec!["b"], "R", vec!["b"]));
            inds.push(Ind::new("R", vec!["a"], &name, vec!["a"]));
        }
    }
    let schema = Schema::new(relations).expect("fixed generated schema is valid");
    let constraints = ConstraintSet::new(vec![], fds, inds);

    let mut instance = Instance::empty();
    for (c0, clause) in f.clauses.iter().enumerate() {
        for &lit in clause {
            instance.insert(Fact::new("R", vec![lit_sym(lit), cl(c0 + 1)]));
        }
    }
    for ((i, j), cell) in &table {
        let name = format!("R_{i}_{j}");
        for l in 1..=n {
            let target = cl(cell[&l]);
            instance.insert(Fact::new(
                &name,
                vec![lit_sym(l as i32), target.clone()],
            ));
            instance.insert(Fact::new(&name, vec![lit_sym(-(l as i32)), target]));
        }
    }
    Ok(ReductionOutput {
        instance: well_typed(instance, &schema),
        schema,
        constraints,
        query: None,
        note: format!(
            "key/foreign-key encoding of a restricted CNF with {m} clauses over {n} \
             variables; the empty instance is a repair iff the formula is unsatisfiable"
        ),
    })
}

// ---------------------------------------------------------------------------
// Quantified satisfiability vs. one FD plus one IND (ground query)
// ---------------------------------------------------------------------------

/// Encodes a `∀…∃…` quantified Boolean formula as consistent answering of a
/// ground atom under one functional dependency and one inclusion dependency.
///
/// Relation `R(a1, a2, a3, a4)` holds three kinds of facts: per literal
/// occurrence, `R(v:x, '1'|'0', cl:j, cl:j+1)` (wrapping to the first
/// clause); per universal variable `i`, the self-supporting pair
/// `R(v:i, '1', u:i, u:i)` and `R(v:i, '0', u:i, u:i)`, whose key conflict
/// makes every repair commit each universal to one truth value; and the probe
/// `R('a', 'a', 'cl:1', 'a')`, which the inclusion dependency `R[a3] ⊆ R[a4]`
/// lets survive only when kept occurrence facts chain through *all* clauses —
/// an existential completion consistent with the committed universals.
///
/// Property: the formula is true **iff** the query `R('a', 'a', 'cl:1', 'a')`
/// is consistently true. Errors on an empty matrix, which would decouple the
/// probe from the (vacuously true) formula.
pub fn gen_qbf_cqa(q: &Qbf2) -> Result<ReductionOutput, ReductionError> {
    if q.matrix.clauses.is_empty() {
        return Err(ReductionError::EmptyFormula);
    }
    let schema = Schema::new(vec![sym_relation("R", &["a1", "a2", "a3", "a4"])])
        .expect("fixed generated schema is valid");
    let constraints = ConstraintSet::new(
        vec![],
        vec![Fd::new("R", ["a1"], ["a2"])],
        vec![Ind::new("R", vec!["a3"], "R", vec!["a4"])],
    );
    let m = q.matrix.clauses.len();
    let mut instance = Instance::empty();
    for (j0, clause) in q.matrix.clauses.iter().enumerate() {
        let j = j0 + 1;
        let next = if j == m { 1 } else { j + 1 };
        for &lit in clause {
            instance.insert(Fact::new(
                "R",
                vec![
                    var_sym(lit.unsigned_abs() as usize),
                    Value::sym(if lit > 0 { "1" } else { "0" }),
                    cl(j),
                    cl(next),
                ],
            ));
        }
    }
    for i in 1..=q.universals {
        let guard = Value::sym(format!("u:{i}"));
        for bit in ["1", "0"] {
            instance.insert(Fact::new(
                "R",
                vec![var_sym(i), Value::sym(bit), guard.clone(), guard.clone()],
            ));
        }
    }
    instance.insert(Fact::new(
        "R",
        vec![
            Value::sym("a"),
            Value::sym("a"),
            Value::sym("cl:1"),
            Value::sym("a"),
        ],
    ));
    let query = parse_generated_query("R('a', 'a', 'cl:1', 'a')", &schema);
    Ok(ReductionOutput {
        instance: well_typed(instance, &schema),
        schema,
        constraints,
        query: Some(query),
        note: format!(
            "quantified-satisfiability encoding with {} universal and {} existential \
             variables over {} clauses; the formula is true iff the query is \
             consistently true",
            q.universals, q.existentials, m
        ),
    })
}

// ---------------------------------------------------------------------------
// Repair checking as the complement of consistent answering
// ---------------------------------------------------------------------------

fn fresh_name(base: &str, taken: &dyn Fn(&str) -> bool) -> String {
    if !taken(base) {
        return base.to_string();
    }
    (1..)
        .map(|i| format!("{base}_{i}"))
        .find(|n| !taken(n))
        .expect("some suffix is free")
}

/// Translates a repair-checking question into the *complement* of a
/// consistent-answering question over an extended schema.
///
/// The single original relation becomes `S0` with one extra symbolic column:
/// candidate facts are tagged `'c1'`, the remaining facts `'c2'`. A fresh
/// unary relation `P` holds the single fact `P('c2')`, tied to the tags by
/// the foreign key `P[w] ⊆ S0[z]`. The original constraints carry over to
/// `S0` unchanged (denial atoms gain one fresh variable for the tag column).
/// A repair of the new instance drops `P('c2')` exactly when it can keep the
/// candidate's facts and nothing else — that is, when the candidate is
/// maximal.
///
/// Property: `P('c2')` is consistently true **iff** `r2` is *not* a repair of
/// `r`. Requires a single-relation schema, `r2 ⊆ r`, and `r2` consistent
/// (an inconsistent candidate is trivially not a repair — check it directly).
pub fn reduce_rc_to_cqa(
    schema: &Schema,
    r: &Instance,
    r2: &Instance,
    ics: &ConstraintSet,
) -> Result<ReductionOutput, ReductionError> {
    if schema.relations.len() != 1 {
        return Err(ReductionError::MultiRelation(schema.relations.len()));
    }
    r.validate(schema)?;
    r2.validate(schema)?;
    ics.validate(schema)?;
    if let Some(extra) = r2.iter().find(|f| !r.contains(f)) {
        return Err(ReductionError::CandidateNotSubset(extra.clone()));
    }
    if !crate::model::satisfies(schema, r2, ics)? {
        return Err(ReductionError::CandidateInconsistent);
    }

    let original = &schema.relations[0];
    let s0_name = fresh_name("S0", &|n: &str| n == original.name);
    let p_name = fresh_name("P", &|n: &str| n == original.name || n == s0_name);
    let z_attr = {
        let taken = |n: &str| original.attributes.iter().any(|a| a.name == n);
        if !taken("z") {
            "z".to_string()
        } else {
            (0..)
                .map(|i| format!("z{i}"))
                .find(|n| !taken(n))
                .expect("some column name is free")
        }
    };

    let mut s0 = RelationSchema::new(
        &s0_name,
        original
            .attributes
            .iter()
            .map(|a| (a.name.clone(), a.sort))
            .chain(std::iter::once((z_attr.clone(), Sort::Symbolic)))
            .collect(),
    );
    s0.keys = original.keys.clone();
    let p = sym_relation(&p_name, &["w"]);
    let new_schema = Schema::new(vec![s0, p])?;

    let mut denials = Vec::new();
    for denial in &ics.denials {
        let mut used: BTreeSet<String> = BTreeSet::new();
        for atom in &denial.atoms {
            for term in &atom.terms {
                if let Term::Var(v) = term {
                    used.insert(v.clone());
                }
            }
        }
        let mut counter = 0;
        let mut atoms = Vec::new();
        for atom in &denial.atoms {
            let fresh = loop {
                let candidate = format!("z{counter}");
                counter += 1;
                if !used.contains(&candidate) {
                    break candidate;
                }
            };
            let mut terms = atom.terms.clone();
            terms.push(Term::Var(fresh));
            atoms.push(ConstraintAtom {
                relation: s0_name.clone(),
                terms,
            });
        }
        denials.push(DenialConstraint {
            atoms,
            builtins: denial.builtins.clone(),
        });
    }
    let fds = ics
        .fds
        .iter()
        .map(|fd| Fd::new(&s0_name, fd.lhs.clone(), fd.rhs.clone()))
        .collect();
    let mut inds: Vec<Ind> = ics
        .inds
        .iter()
        .map(|ind| {
            Ind::new(
                &s0_name,
                ind.source_attrs.clone(),
                &s0_name,
                ind.target_attrs.clone(),
            )
        })
        .collect();
    inds.push(Ind::new(&p_name, vec!["w"], &s0_name, vec![z_attr]));
    let constraints = ConstraintSet::new(denials, fds, inds);
    constraints.validate(&new_schema)?;

    let mut instance = Instance::empty();
    for fact in r.iter() {
        let tag = if r2.contains(fact) { "c1" } else { "c2" };
        let mut values = fact.values.clone();
        values.push(Value::sym(tag));
        instance.insert(Fact::new(&s0_name, values));
    }
    instance.insert(Fact::new(&p_name, vec![Value::sym("c2")]));

    let query = parse_generated_query(&format!("{p_name}('c2')"), &new_schema);
    Ok(ReductionOutput {
        instance: well_typed(instance, &new_schema),
        schema: new_schema,
        constraints,
        query: Some(query),
        note: format!(
            "repair-checking translation tagging {} candidate and {} remaining facts; \
             the query is consistently true iff the candidate is NOT a repair",
            r2.len(),
            r.len() - r2.len()
        ),
    })
}

// ---------------------------------------------------------------------------
// Exponentially many repairs from linearly many facts
// ---------------------------------------------------------------------------

/// The classic blow-up family: `2n` facts with `2ⁿ` repairs.
///
/// Relation `R(a, b)` with FD `a → b` holds the pair `R(aᵢ, b0)`, `R(aᵢ, b1)`
/// for each `i = 1..=n`. Every repair keeps exactly one fact of each pair,
/// independently, so there are exactly `2ⁿ` repairs. `n = 0` gives the empty
/// instance with its single empty repair.
pub fn gen_exponential_family(n: usize) -> ReductionOutput {
    let schema = Schema::new(vec![sym_relation("R", &["a", "b"])])
        .expect("fixed generated schema is valid");
    let constraints = ConstraintSet::new(vec![], vec![Fd::new("R", ["a"], ["b"])], vec![]);
    let mut instance = Instance::empty();
    for i in 1..=n {
        for b in ["b0", "b1"] {
            instance.insert(Fact::new(
                "R",
                vec![Value::sym(format!("a{i}")), Value::sym(b)],
            ));
        }
    }
    ReductionOutput {
        instance: well_typed(instance, &schema),
        schema,
        constraints,
        query: None,
        note: format!("{} facts with 2^{n} repairs under one functional dependency", 2 * n),
    }
}
