//! Exponential-time ground truth for small instances.
//!
//! The polynomial engines in [`crate::repair`] and [`crate::cqa`] each cover
//! one constraint class. This module covers every class by brute force:
//! enumerate all repairs (subset-maximal consistent subinstances), check a
//! candidate repair, and decide consistent query answers by evaluating the
//! query in every repair. Exponential cost is inherent — repair checking for
//! general FD+IND sets is coNP-complete — so every entry point takes a fact
//! cap and refuses larger instances.
//!
//! The enumerator walks the subset lattice top-down from the full instance.
//! At an inconsistent node it picks one violation (deterministically, by a
//! branching heuristic) and branches on which member fact to delete; branch
//! `i` deletes fact `i` and marks facts `0..i` of the violation as
//! protected, so later branches may never delete them. Two properties follow
//! by induction on the first divergence of two paths: no two paths reach the
//! same subset, and every maximal consistent subset is reached (when
//! resolving a violation, pick the first member outside the target repair;
//! it is never protected, because protected facts are always inside the
//! target). The set of leaves depends on which violation each inconsistent
//! node reports, but the maximal leaves do not, so any deterministic
//! violation order is interchangeable. Leaves are consistent but not
//! necessarily maximal, so they are filtered afterwards: a
//! single-fact-addition test suffices for denial/FD constraints and for
//! acyclic inclusion dependencies, while cyclic inclusion dependencies can
//! hide mutually supporting fact pairs that only become addable together,
//! which the final pairwise strict-subset sweep removes (sound in general:
//! every maximal consistent superset of a non-maximal leaf is itself a
//! leaf).
//!
//! Per-node work is kept off the critical path by precomputing violation
//! structure once per walk. Denial and FD violations are monotone — a subset
//! violates iff it contains a violating fact set of the full instance — so
//! those fact sets become bitset "combos" tested by subset inclusion.
//! Inclusion dependencies are not monotone (a violation is a source fact
//! whose target projection is absent), so each fact's source/target
//! projections are interned to small tokens and checked by presence scans.

use std::collections::BTreeMap;

use crate::bitset::BitSet;
use crate::model::{
    ConjunctiveQuery, ConstraintSet, Fact, Instance, Query, Schema, Value,
    for_each_denial_violation, ind_graph, satisfies,
};

/// Default fact cap for oracle entry points. Worst-case work grows
/// exponentially in the fact count, so the default keeps it near 2¹⁸. The
/// `REPAIRLAB_ORACLE_CAP` environment variable overrides it.
pub const DEFAULT_CAP: usize = 18;

/// The effective default cap: `REPAIRLAB_ORACLE_CAP` if set to a valid
/// number, [`DEFAULT_CAP`] otherwise.
pub fn default_cap() -> usize {
    std::env::var("REPAIRLAB_ORACLE_CAP")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(DEFAULT_CAP)
}

/// Errors from oracle operations.
#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    /// The instance exceeds the fact cap for exhaustive search.
    #[error("instance has {size} facts, above the oracle cap of {cap}")]
    OverCap { size: usize, cap: usize },
}

/// The complete set of repairs of an instance.
#[derive(Debug, Clone)]
pub struct RepairSet {
    /// All repairs, in canonical (ascending) instance order, pairwise
    /// ⊆-incomparable.
    pub repairs: Vec<Instance>,
    /// Whether enumeration ran to completion (always true today — instances
    /// over the cap are refused up front rather than truncated).
    pub exhaustive: bool,
    /// The fact cap the enumeration ran under.
    pub cap: usize,
}

impl RepairSet {
    pub fn contains(&self, candidate: &Instance) -> bool {
        self.repairs.iter().any(|r| r == candidate)
    }
}

/// Per-inclusion-dependency projection tables. Source and target
/// projections share one token space, so "fact `v`'s source projection is
/// supported in `S`" is "some fact of `S` has `v`'s source token as its
/// target token".
struct IndTables {
    /// Fact id → token of its source-attribute projection (None if the fact
    /// is not in the source relation).
    source_token: Vec<Option<u32>>,
    /// Fact id → token of its target-attribute projection (None if the fact
    /// is not in the target relation).
    target_token: Vec<Option<u32>>,
    /// Word count for token-presence masks.
    token_words: usize,
}

impl IndTables {
    /// Presence mask of the target tokens contributed by `bits`.
    fn target_mask(&self, bits: &BitSet) -> Vec<u64> {
        let mut mask = vec![0u64; self.token_words];
        for v in bits.iter() {
            if let Some(t) = self.target_token[v] {
                mask[t as usize / 64] |= 1 << (t % 64);
            }
        }
        mask
    }
}

fn mask_contains(mask: &[u64], token: u32) -> bool {
    mask[token as usize / 64] & (1 << (token % 64)) != 0
}

struct Walk {
    facts: Vec<Fact>,
    ids: BTreeMap<Fact, usize>,
    /// Violating fact sets of the full instance under denials and FDs, in a
    /// fixed deterministic order. A subset violates some denial or FD iff it
    /// contains one of these (denial/FD violations are monotone).
    combos: Vec<BitSet>,
    /// Fact id → indices into `combos` of the combos containing it.
    by_member: Vec<Vec<usize>>,
    inds: Vec<IndTables>,
}

impl Walk {
    fn new(schema: &Schema, r: &Instance, ics: &ConstraintSet) -> Result<Self, OracleError> {
        let facts: Vec<Fact> = r.iter().cloned().collect();
        let n = facts.len();
        let ids: BTreeMap<Fact, usize> = facts
            .iter()
            .enumerate()
            .map(|(i, f)| (f.clone(), i))
            .collect();

        let mut combo_set: std::collections::BTreeSet<BitSet> = Default::default();
        for d in &ics.denials {
            for_each_denial_violation(schema, r, d, &mut |vfacts| {
                let mut combo = BitSet::new(n);
                for f in vfacts {
                    combo.insert(ids[*f]);
                }
                combo_set.insert(combo);
                true
            })?;
        }
        for fd in ics.effective_fds() {
            fd.validate(schema)?;
            let rel = schema.require(&fd.relation)?;
            let lhs: Vec<usize> = fd.lhs.iter().map(|a| rel.attr_index(a).unwrap()).collect();
            let rhs: Vec<usize> = fd.rhs.iter().map(|a| rel.attr_index(a).unwrap()).collect();
            let mut groups: BTreeMap<Vec<&Value>, Vec<usize>> = BTreeMap::new();
            for (i, fact) in facts.iter().enumerate() {
                if fact.relation == fd.relation {
                    let key: Vec<&Value> = lhs.iter().map(|&k| &fact.values[k]).collect();
                    groups.entry(key).or_default().push(i);
                }
            }
            // Every disagreeing pair is a combo: the subset test must see a
            // violation in any subset containing one, not just in subsets
            // containing a group's first member.
            for group in groups.values() {
                for (gi, &i) in group.iter().enumerate() {
                    for &j in &group[gi + 1..] {
                        if rhs
                            .iter()
                            .any(|&k| facts[i].values[k] != facts[j].values[k])
                        {
                            let mut combo = BitSet::new(n);
                            combo.insert(i);
                            combo.insert(j);
                            combo_set.insert(combo);
                        }
                    }
                }
            }
        }
        let combos: Vec<BitSet> = combo_set.into_iter().collect();
        let mut by_member: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (ci, combo) in combos.iter().enumerate() {
            for v in combo.iter() {
                by_member[v].push(ci);
            }
        }

        let mut inds = Vec::with_capacity(ics.inds.len());
        for ind in &ics.inds {
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
            let mut tokens: BTreeMap<Vec<Value>, u32> = BTreeMap::new();
            let intern = |proj: Vec<Value>, tokens: &mut BTreeMap<Vec<Value>, u32>| {
                let next = tokens.len() as u32;
                *tokens.entry(proj).or_insert(next)
            };
            let mut source_token = vec![None; n];
            let mut target_token = vec![None; n];
            for (i, fact) in facts.iter().enumerate() {
                if fact.relation == ind.source_relation {
                    let proj = src_idx.iter().map(|&k| fact.values[k].clone()).collect();
                    source_token[i] = Some(intern(proj, &mut tokens));
                }
                if fact.relation == ind.target_relation {
                    let proj = tgt_idx.iter().map(|&k| fact.values[k].clone()).collect();
                    target_token[i] = Some(intern(proj, &mut tokens));
                }
            }
            inds.push(IndTables {
                source_token,
                target_token,
                token_words: tokens.len().div_ceil(64).max(1),
            });
        }

        Ok(Walk { facts, ids, combos, by_member, inds })
    }

    fn materialize(&self, bits: &BitSet) -> Instance {
        bits.iter().map(|v| self.facts[v].clone()).collect()
    }

    /// The member fact ids (ascending) of one violation in `current`, or
    /// None if `current` is consistent. Which violation an inconsistent node
    /// reports is a free choice (the maximal leaves are the same for any
    /// deterministic choice), so this picks one that keeps the branching
    /// factor low: a violation with at most one unprotected member is a
    /// forced move and wins outright; inclusion-dependency violations are
    /// single-member and come next; otherwise the combo with the fewest
    /// unprotected members, first in combo order on ties.
    fn choose_violation(&self, current: &BitSet, protected: &BitSet) -> Option<Vec<usize>> {
        let mut best: Option<(usize, Vec<usize>)> = None;
        for combo in &self.combos {
            if combo.is_subset(current) {
                let members: Vec<usize> = combo.iter().collect();
                let open = members.iter().filter(|&&m| !protected.contains(m)).count();
                if open <= 1 {
                    return Some(members);
                }
                if best.as_ref().is_none_or(|(b, _)| open < *b) {
                    best = Some((open, members));
                }
            }
        }
        for it in &self.inds {
            let mask = it.target_mask(current);
            for v in current.iter() {
                if let Some(t) = it.source_token[v] {
                    if !mask_contains(&mask, t) {
                        return Some(vec![v]);
                    }
                }
            }
        }
        best.map(|(_, m)| m)
    }

    /// Whether some already-deleted fact is addable to every consistent
    /// subset of `current` — for combos because no combo through it can ever
    /// complete inside `current`, for inclusion dependencies because its
    /// source projection is self-supported or absent. Every leaf below such
    /// a node has a consistent strict superset, so no maximal consistent
    /// subset (of the full instance) lies in the subtree, and the walk may
    /// skip it: every caller either filters non-maximal leaves or only acts
    /// on leaves strictly larger than a known-maximal candidate.
    fn is_dead_branch(&self, current: &BitSet) -> bool {
        'facts: for v in 0..self.facts.len() {
            if current.contains(v) {
                continue;
            }
            for &ci in &self.by_member[v] {
                if self.combos[ci].iter().all(|m| m == v || current.contains(m)) {
                    continue 'facts;
                }
            }
            for it in &self.inds {
                if let Some(t) = it.source_token[v] {
                    if it.target_token[v] != Some(t) {
                        continue 'facts;
                    }
                }
            }
            return true;
        }
        false
    }

    /// Depth-first protected branching. `on_leaf` returns false to stop the
    /// whole walk early; the walk returns false when stopped.
    fn run(
        &self,
        current: BitSet,
        protected: BitSet,
        on_leaf: &mut dyn FnMut(&BitSet) -> bool,
    ) -> bool {
        if self.is_dead_branch(&current) {
            return true;
        }
        let Some(members) = self.choose_violation(&current, &protected) else {
            return on_leaf(&current);
        };
        let mut blocked = protected;
        for v in members {
            if !blocked.contains(v) {
                let mut next = current.clone();
                next.remove(v);
                if !self.run(next, blocked.clone(), on_leaf) {
                    return false;
                }
                blocked.insert(v);
            }
        }
        true
    }

    /// Whether adding any single outside fact to `bits` keeps consistency.
    /// Precondition: `bits` itself is consistent (it is only called on walk
    /// leaves). Adding fact `v` breaks consistency iff it completes a
    /// denial/FD combo or is an unsupported inclusion-dependency source;
    /// additions never un-support existing facts.
    fn single_addition_extendable(&self, bits: &BitSet) -> bool {
        let masks: Vec<Vec<u64>> = self.inds.iter().map(|it| it.target_mask(bits)).collect();
        'candidates: for v in 0..self.facts.len() {
            if bits.contains(v) {
                continue;
            }
            let mut sup = bits.clone();
            sup.insert(v);
            for &ci in &self.by_member[v] {
                if self.combos[ci].is_subset(&sup) {
                    continue 'candidates;
                }
            }
            for (it, mask) in self.inds.iter().zip(&masks) {
                if let Some(t) = it.source_token[v] {
                    if it.target_token[v] != Some(t) && !mask_contains(mask, t) {
                        continue 'candidates;
                    }
                }
            }
            return true;
        }
        false
    }
}

fn check_cap(r: &Instance, cap: usize) -> Result<(), OracleError> {
    if r.len() > cap {
        return Err(OracleError::OverCap { size: r.len(), cap });
    }
    Ok(())
}

/// Enumerates all repairs of `r` under `ics`: the ⊆-maximal consistent
/// subinstances. Deterministic; refuses instances with more than
/// `cap_facts` facts.
pub fn enumerate_repairs(
    schema: &Schema,
    r: &Instance,
    ics: &ConstraintSet,
    cap_facts: usize,
) -> Result<RepairSet, OracleError> {
    check_cap(r, cap_facts)?;
    r.validate(schema)?;
    let walk = Walk::new(schema, r, ics)?;
    let full = BitSet::full(walk.facts.len());

    // Maximality filter. Single-fact addition is exact unless inclusion
    // dependencies form cycles; then a pairwise sweep removes leaves whose
    // strict supersets (necessarily also leaves) survived.
    let mut maximal: Vec<BitSet> = Vec::new();
    walk.run(full, BitSet::new(walk.facts.len()), &mut |leaf| {
        if !walk.single_addition_extendable(leaf) {
            maximal.push(leaf.clone());
        }
        true
    });
    let cyclic = !ics.inds.is_empty() && !ind_graph(ics).is_acyclic();
    if cyclic {
        let snapshot = maximal.clone();
        maximal.retain(|l| !snapshot.iter().any(|m| l.is_strict_subset(m)));
    }

    let mut repairs: Vec<Instance> = maximal.iter().map(|b| walk.materialize(b)).collect();
    repairs.sort_by(|a, b| {
        a.iter()
            .collect::<Vec<_>>()
            .cmp(&b.iter().collect::<Vec<_>>())
    });
    repairs.dedup();
    Ok(RepairSet { repairs, exhaustive: true, cap: cap_facts })
}

/// Reference enumeration that scans every subset of `r` and keeps the
/// ⊆-maximal consistent ones. No search-tree subtleties, so the property
/// suites use it to cross-validate [`enumerate_repairs`]; practical only for
/// very small instances (it always visits 2^|Σ(r)| subsets).
pub fn enumerate_repairs_by_subsets(
    schema: &Schema,
    r: &Instance,
    ics: &ConstraintSet,
    cap_facts: usize,
) -> Result<RepairSet, OracleError> {
    check_cap(r, cap_facts.min(24))?;
    r.validate(schema)?;
    let facts: Vec<Fact> = r.iter().cloned().collect();
    let n = facts.len();
    let materialize = |mask: u32| -> Instance {
        facts
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, f)| f.clone())
            .collect()
    };
    let mut consistent: Vec<u32> = Vec::new();
    for mask in 0..1u32 << n {
        if satisfies(schema, &materialize(mask), ics)? {
            consistent.push(mask);
        }
    }
    consistent.sort_by_key(|m| std::cmp::Reverse(m.count_ones()));
    let mut kept: Vec<u32> = Vec::new();
    for mask in consistent {
        if !kept.iter().any(|k| k & mask == mask && *k != mask) {
            kept.push(mask);
        }
    }
    let mut repairs: Vec<Instance> = kept.into_iter().map(materialize).collect();
    repairs.sort_by(|a, b| {
        a.iter()
            .collect::<Vec<_>>()
            .cmp(&b.iter().collect::<Vec<_>>())
    });
    Ok(RepairSet { repairs, exhaustive: true, cap: cap_facts })
}

/// Whether `r2` is a repair of `r` under `ics`, by restricted search instead
/// of full enumeration: walk only the branches that never delete a fact of
/// `r2` (any leaf is then a consistent superset of `r2`), and fail on the
/// first leaf that is a strict superset. Sound and complete because every
/// maximal consistent superset of `r2` shows up as such a leaf.
pub fn oracle_repair_check(
    schema: &Schema,
    r: &Instance,
    r2: &Instance,
    ics: &ConstraintSet,
    cap_facts: usize,
) -> Result<bool, OracleError> {
    check_cap(r, cap_facts)?;
    r.validate(schema)?;
    if !r2.is_subset_of(r) || !satisfies(schema, r2, ics)? {
        return Ok(false);
    }
    let walk = Walk::new(schema, r, ics)?;
    let mut protected = BitSet::new(walk.facts.len());
    for fact in r2.iter() {
        protected.insert(walk.ids[fact]);
    }
    let full = BitSet::full(walk.facts.len());
    let r2_len = r2.len();
    let mut maximal = true;
    walk.run(full, protected, &mut |leaf| {
        if leaf.len() > r2_len {
            maximal = false;
            return false;
        }
        true
    });
    Ok(maximal)
}

/// Whether the closed query is true in every repair of `r`.
pub fn oracle_cqa(
    schema: &Schema,
    r: &Instance,
    ics: &ConstraintSet,
    query: &Query,
    cap_facts: usize,
) -> Result<bool, OracleError> {
    query.validate(schema)?;
    let cyclic = !ics.inds.is_empty() && !ind_graph(ics).is_acyclic();
    if cyclic {
        // Maximality needs the pairwise sweep, so collect all repairs first.
        let repairs = enumerate_repairs(schema, r, ics, cap_facts)?;
        for repair in &repairs.repairs {
            if !query.holds(repair)? {
                return Ok(false);
            }
        }
        return Ok(true);
    }
    // Without cyclic inclusion dependencies the single-addition test is an
    // exact maximality filter, so repairs can be checked as the walk streams
    // them, stopping at the first one that falsifies the query.
    check_cap(r, cap_facts)?;
    r.validate(schema)?;
    let walk = Walk::new(schema, r, ics)?;
    let full = BitSet::full(walk.facts.len());
    let mut certain = true;
    let mut err: Option<crate::model::ModelError> = None;
    walk.run(full, BitSet::new(walk.facts.len()), &mut |leaf| {
        if walk.single_addition_extendable(leaf) {
            return true;
        }
        match query.holds(&walk.materialize(leaf)) {
            Ok(true) => true,
            Ok(false) => {
                certain = false;
                false
            }
            Err(e) => {
                err = Some(e);
                false
            }
        }
    });
    if let Some(e) = err {
        return Err(e.into());
    }
    Ok(certain)
}

/// The consistent answers of an open conjunctive query: the tuples that are
/// answers in every repair of `r`.
pub fn oracle_consistent_answers(
    schema: &Schema,
    r: &Instance,
    ics: &ConstraintSet,
    query: &ConjunctiveQuery,
    cap_facts: usize,
) -> Result<std::collections::BTreeSet<Vec<Value>>, OracleError> {
    query.validate(schema)?;
    let repairs = enumerate_repairs(schema, r, ics, cap_facts)?;
    let mut iter = repairs.repairs.iter();
    let Some(first) = iter.next() else {
        return Ok(Default::default());
    };
    let mut common = query.answers(first)?;
    for repair in iter {
        let these = query.answers(repair)?;
        common.retain(|t| these.contains(t));
        if common.is_empty() {
            break;
        }
    }
    Ok(common)
}
