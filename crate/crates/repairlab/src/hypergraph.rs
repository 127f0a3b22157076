//! Conflict hypergraphs for denial constraints.
//!
//! Given an instance and a list of denial constraints, the conflict
//! hypergraph has one vertex per fact and one hyperedge per minimal-or-not
//! set of facts that jointly ground some denial with a true comparison
//! formula. Subset-maximal consistent subinstances are exactly the maximal
//! independent sets of this hypergraph, which reduces repair checking and
//! repair sampling for denial constraints to simple graph procedures.
//!
//! Edges are deduplicated as vertex sets but otherwise kept verbatim: an
//! edge that is a superset of another edge is redundant for independence
//! yet harmless, and dropping it would cost a quadratic minimization pass.
//! A single-vertex edge marks a fact that violates a constraint on its own;
//! such a fact belongs to no maximal independent set.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use crate::bitset::BitSet;
use crate::model::{DenialConstraint, Fact, Instance, Schema, for_each_denial_violation};

/// Errors from hypergraph construction and queries.
#[derive(Debug, thiserror::Error)]
pub enum HypergraphError {
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    /// A queried fact is not a vertex (not part of the instance the
    /// hypergraph was built from).
    #[error("fact {0} is not a vertex of this conflict hypergraph")]
    ForeignFact(Fact),
}

/// A hyperedge: the set of facts of one constraint violation, as ascending
/// vertex ids, plus the index of the denial (in the list passed to
/// [`ConflictHypergraph::build`]) it grounds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    pub vertices: Vec<usize>,
    pub constraint: usize,
}

/// The conflict hypergraph of an instance under denial constraints.
#[derive(Debug, Clone)]
pub struct ConflictHypergraph {
    vertices: Vec<Fact>,
    index: HashMap<Fact, usize>,
    edges: Vec<Edge>,
    /// Vertex id → ascending ids of edges containing it.
    adjacency: Vec<Vec<usize>>,
    /// Vertex id → whether some edge is exactly `{v}`.
    singleton: Vec<bool>,
}

impl ConflictHypergraph {
    /// Builds the conflict hypergraph of `inst` under `denials`.
    ///
    /// Functional dependencies must be pre-converted with
    /// [`crate::model::fd_to_denial`]; inclusion dependencies have no
    /// conflict-hypergraph representation (their violations are resolved by
    /// facts that are absent, not present). Groundings whose comparison
    /// formula is false contribute nothing. A substitution may map two atoms
    /// to one fact, so an edge can have fewer vertices than the denial has
    /// atoms.
    pub fn build(
        schema: &Schema,
        inst: &Instance,
        denials: &[DenialConstraint],
    ) -> Result<Self, HypergraphError> {
        inst.validate(schema)?;
        let vertices: Vec<Fact> = inst.iter().cloned().collect();
        let index: HashMap<Fact, usize> = vertices
            .iter()
            .enumerate()
            .map(|(i, f)| (f.clone(), i))
            .collect();

        // Dedup edges by vertex set, keeping the first constraint that
        // produced each; BTreeMap gives a deterministic edge order.
        let mut seen: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
        for (ci, denial) in denials.iter().enumerate() {
            for_each_denial_violation(schema, inst, denial, &mut |facts| {
                let mut ids: Vec<usize> = facts.iter().map(|f| index[*f]).collect();
                ids.sort_unstable();
                ids.dedup();
                seen.entry(ids).or_insert(ci);
                true
            })?;
        }

        let edges: Vec<Edge> = seen
            .into_iter()
            .map(|(vertices, constraint)| Edge { vertices, constraint })
            .collect();
        let mut adjacency = vec![Vec::new(); vertices.len()];
        let mut singleton = vec![false; vertices.len()];
        for (ei, edge) in edges.iter().enumerate() {
            for &v in &edge.vertices {
                adjacency[v].push(ei);
            }
            if let [v] = edge.vertices[..] {
                singleton[v] = true;
            }
        }

        Ok(ConflictHypergraph { vertices, index, edges, adjacency, singleton })
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// All vertices, in the canonical (sorted) fact order; indexes into this
    /// slice are the vertex ids used everywhere else.
    pub fn vertices(&self) -> &[Fact] {
        &self.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn fact(&self, vertex: usize) -> &Fact {
        &self.vertices[vertex]
    }

    pub fn vertex_id(&self, fact: &Fact) -> Option<usize> {
        self.index.get(fact).copied()
    }

    /// Whether `{vertex}` itself is an edge; such a fact is in no
    /// independent set at all.
    pub fn in_singleton_edge(&self, vertex: usize) -> bool {
        self.singleton[vertex]
    }

    /// The edges containing `fact`, in ascending edge-id order.
    pub fn edges_containing(&self, fact: &Fact) -> Result<Vec<&Edge>, HypergraphError> {
        let v = self
            .vertex_id(fact)
            .ok_or_else(|| HypergraphError::ForeignFact(fact.clone()))?;
        Ok(self.adjacency[v].iter().map(|&e| &self.edges[e]).collect())
    }

    /// Converts a subinstance into a vertex bitset; errors on facts outside
    /// the hypergraph's instance.
    pub fn to_bits(&self, sub: &Instance) -> Result<BitSet, HypergraphError> {
        let mut bits = BitSet::new(self.vertices.len());
        for fact in sub.iter() {
            let v = self
                .vertex_id(fact)
                .ok_or_else(|| HypergraphError::ForeignFact(fact.clone()))?;
            bits.insert(v);
        }
        Ok(bits)
    }

    /// Converts a vertex bitset back into an instance.
    pub fn to_instance(&self, bits: &BitSet) -> Instance {
        bits.iter().map(|v| self.vertices[v].clone()).collect()
    }

    /// The id of some edge entirely inside `bits`, if any. `None` means
    /// `bits` is an independent set.
    pub fn contained_edge(&self, bits: &BitSet) -> Option<usize> {
        self.edges
            .iter()
            .position(|e| e.vertices.iter().all(|&v| bits.contains(v)))
    }

    /// Whether the vertex set is independent (contains no edge).
    pub fn is_independent_bits(&self, bits: &BitSet) -> bool {
        self.contained_edge(bits).is_none()
    }

    /// Whether adding `vertex` to the independent set `bits` would complete
    /// an edge. Only edges through `vertex` need checking.
    pub fn addition_blocked(&self, vertex: usize, bits: &BitSet) -> bool {
        self.adjacency[vertex].iter().any(|&ei| {
            self.edges[ei]
                .vertices
                .iter()
                .all(|&u| u == vertex || bits.contains(u))
        })
    }

    /// The first vertex (in id order) outside `bits` whose addition keeps
    /// independence, if any. `None` on an independent `bits` means it is a
    /// maximal independent set.
    pub fn first_addable(&self, bits: &BitSet) -> Option<usize> {
        (0..self.vertices.len())
            .find(|&v| !bits.contains(v) && !self.addition_blocked(v, bits))
    }

    /// Whether `sub` is an independent set.
    pub fn is_independent(&self, sub: &Instance) -> Result<bool, HypergraphError> {
        let bits = self.to_bits(sub)?;
        Ok(self.is_independent_bits(&bits))
    }

    /// Whether `sub` is a maximal independent set — independent, and every
    /// vertex outside it completes some edge when added.
    pub fn is_maximal_independent(&self, sub: &Instance) -> Result<bool, HypergraphError> {
        let bits = self.to_bits(sub)?;
        Ok(self.is_independent_bits(&bits) && self.first_addable(&bits).is_none())
    }

    /// Greedily extends the independent set `bits` to a maximal independent
    /// set, attempting vertices in the given order (each vertex of the
    /// hypergraph exactly once; `order` must be a permutation of the vertex
    /// ids). Vertices already in `bits` stay in.
    pub fn extend_to_maximal(&self, bits: &BitSet, order: &[usize]) -> BitSet {
        debug_assert_eq!(order.len(), self.vertices.len());
        let mut out = bits.clone();
        for &v in order {
            if !out.contains(v) && !self.addition_blocked(v, &out) {
                out.insert(v);
            }
        }
        out
    }

    /// Graphviz rendering: size-1 edges as self-loops, size-2 edges as plain
    /// edges, larger edges star-expanded through a point-shaped auxiliary
    /// node per edge.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("graph conflicts {\n");
        for (i, fact) in self.vertices.iter().enumerate() {
            let label = fact.to_string().replace('\\', "\\\\").replace('"', "\\\"");
            out.push_str(&format!("  v{i} [label=\"{label}\"];\n"));
        }
        for (ei, edge) in self.edges.iter().enumerate() {
            match edge.vertices[..] {
                [v] => out.push_str(&format!("  v{v} -- v{v};\n")),
                [a, b] => out.push_str(&format!("  v{a} -- v{b};\n")),
                _ => {
                    out.push_str(&format!("  e{ei} [shape=point];\n"));
                    for &v in &edge.vertices {
                        out.push_str(&format!("  e{ei} -- v{v};\n"));
                    }
                }
            }
        }
        out.push_str("}\n");
        out
    }

    /// JSON rendering: `{"vertices": [facts], "edges": [[vertex ids]]}`.
    pub fn to_json(&self) -> serde_json::Value {
        #[derive(Serialize)]
        struct Dump<'a> {
            vertices: &'a [Fact],
            edges: Vec<&'a [usize]>,
        }
        serde_json::to_value(Dump {
            vertices: &self.vertices,
            edges: self.edges.iter().map(|e| e.vertices.as_slice()).collect(),
        })
        .expect("hypergraph serialization cannot fail")
    }
}
