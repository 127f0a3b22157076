//! Polynomial-time repair checking and repair sampling.
//!
//! A repair of an instance is a ⊆-maximal consistent subinstance: consistency
//! is restored by deleting facts, and no deleted fact can be added back
//! without breaking a constraint. This module answers "is this candidate a
//! repair?" in polynomial time, one engine per tractable constraint class:
//!
//! * denial constraints and functional dependencies — maximal-independent-set
//!   check on the conflict hypergraph ([`check_denial`]);
//! * inclusion dependencies alone — comparison with the unique repair, the
//!   greatest consistent subinstance ([`unique_ind_repair`]);
//! * one key per relation plus foreign keys — cascade deletions first, then
//!   the key-conflict check on what survives ([`check_single_key`]);
//! * functional dependencies with acyclic inclusion dependencies — global
//!   consistency plus a stage-wise single-addition scan ([`check_acyclic`]).
//!
//! Mixing functional and cyclic inclusion dependencies makes repair checking
//! coNP-complete, so no engine here covers it; [`crate::oracle`] does, at
//! exponential cost. Negative verdicts carry a re-checkable certificate, and
//! [`sample_repair`] draws a seeded random repair for any covered class.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bitset::BitSet;
use crate::hypergraph::{ConflictHypergraph, HypergraphError};
use crate::model::{
    all_as_denials, classify, find_violation, ind_graph, satisfies, Classification,
    ConstraintRef, ConstraintSet, DenialConstraint, Fact, Ind, Instance, Schema,
};

/// Errors from the repair engines.
#[derive(Debug, thiserror::Error)]
pub enum RepairError {
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    /// The constraint set is outside the class an engine is sound for.
    #[error("the {engine} engine requires constraint class `{expected}`, found `{found}`")]
    WrongClass {
        engine: &'static str,
        expected: &'static str,
        found: Classification,
    },
    /// No polynomial engine covers this constraint class.
    #[error(
        "no polynomial repair engine covers constraint class `{0}`; \
         use the exhaustive oracle engine"
    )]
    UnsupportedClass(Classification),
}

impl From<HypergraphError> for RepairError {
    fn from(e: HypergraphError) -> Self {
        match e {
            HypergraphError::Model(m) => RepairError::Model(m),
            // Facts outside the hypergraph are handled before building bitsets;
            // reaching this is a bug upstream, but map it meaningfully anyway.
            HypergraphError::ForeignFact(f) => RepairError::Model(
                crate::model::ModelError::UnknownRelation(format!("foreign fact {f}")),
            ),
        }
    }
}

/// Why a candidate is not a repair. Every certificate re-validates against
/// the inputs: the facts listed are really outside the instance, really
/// violate the named constraint, or can really be added back.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RepairCertificate {
    /// The candidate contains facts missing from the original instance.
    NotSubset { facts: Vec<Fact> },
    /// The candidate itself violates a constraint; `facts` is the grounding.
    Violation {
        constraint: ConstraintRef,
        description: String,
        facts: Vec<Fact>,
    },
    /// The candidate is consistent but not maximal: `fact` can be added
    /// back. `stage` names the relation stage where the stage-wise engines
    /// found it.
    Addable {
        fact: Fact,
        #[serde(skip_serializing_if = "Option::is_none")]
        stage: Option<String>,
    },
}

/// The outcome of a repair check.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RepairVerdict {
    pub ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate: Option<RepairCertificate>,
}

impl RepairVerdict {
    fn repair() -> Self {
        RepairVerdict { ok: true, certificate: None }
    }

    fn fail(certificate: RepairCertificate) -> Self {
        RepairVerdict { ok: false, certificate: Some(certificate) }
    }
}

fn not_subset(r: &Instance, r2: &Instance) -> RepairCertificate {
    RepairCertificate::NotSubset {
        facts: r2.difference(r).cloned().collect(),
    }
}

/// Repair check for denial constraints (functional dependencies must be
/// pre-converted with [`crate::model::fd_to_denial`]): `r2` is a repair of
/// `r` iff it is a maximal independent set of the conflict hypergraph.
/// Violation certificates index into `denials`.
pub fn check_denial(
    schema: &Schema,
    r: &Instance,
    r2: &Instance,
    denials: &[DenialConstraint],
) -> Result<RepairVerdict, RepairError> {
    let origins: Vec<ConstraintRef> = (0..denials.len()).map(ConstraintRef::Denial).collect();
    let describe = |i: usize| denials[i].to_string();
    check_denial_mapped(schema, r, r2, denials, &origins, &describe)
}

/// The denial check with violation certificates remapped to the constraints
/// the denials came from (see [`all_as_denials`]).
fn check_denial_mapped(
    schema: &Schema,
    r: &Instance,
    r2: &Instance,
    denials: &[DenialConstraint],
    origins: &[ConstraintRef],
    describe: &dyn Fn(usize) -> String,
) -> Result<RepairVerdict, RepairError> {
    if !r2.is_subset_of(r) {
        return Ok(RepairVerdict::fail(not_subset(r, r2)));
    }
    let hg = ConflictHypergraph::build(schema, r, denials)?;
    let bits = hg.to_bits(r2)?;
    if let Some(edge_id) = hg.contained_edge(&bits) {
        let edge = &hg.edges()[edge_id];
        return Ok(RepairVerdict::fail(RepairCertificate::Violation {
            constraint: origins[edge.constraint].clone(),
            description: describe(edge.constraint),
            facts: edge.vertices.iter().map(|&v| hg.fact(v).clone()).collect(),
        }));
    }
    if let Some(v) = hg.first_addable(&bits) {
        return Ok(RepairVerdict::fail(RepairCertificate::Addable {
            fact: hg.fact(v).clone(),
            stage: None,
        }));
    }
    Ok(RepairVerdict::repair())
}

/// The unique repair under inclusion dependencies alone: the greatest
/// subinstance in which every fact is supported, computed as the fixpoint of
/// deleting unsupported facts. Equals the union of all consistent
/// subinstances, so every consistent subinstance is contained in it.
pub fn unique_ind_repair(
    schema: &Schema,
    r: &Instance,
    inds: &[Ind],
) -> Result<Instance, RepairError> {
    r.validate(schema)?;
    for ind in inds {
        ind.validate(schema)?;
    }
    let ind_only = ConstraintSet::new(vec![], vec![], inds.to_vec());
    let mut current = r.clone();
    // Each round deletes the reported unsupported fact; the fixpoint is the
    // same whatever the deletion order, so one fact per round suffices and
    // the loop runs at most |Σ(r)| times.
    while let Some(violation) = find_violation(schema, &current, &ind_only)? {
        for fact in &violation.facts {
            current.remove(fact);
        }
    }
    Ok(current)
}

/// Repair check for the single-key + foreign-key class: first apply the
/// cascade (the unique inclusion repair — deleting an unsupported referencing
/// fact never removes key-group support, because foreign keys point at keys
/// and key conflicts always keep one fact per group), then check the
/// candidate as a key-conflict repair of what survived. A candidate inside
/// `r` but outside the cascade result necessarily violates an inclusion
/// dependency, which is the certificate reported.
pub fn check_single_key(
    schema: &Schema,
    r: &Instance,
    r2: &Instance,
    ics: &ConstraintSet,
) -> Result<RepairVerdict, RepairError> {
    let class = classify(schema, ics);
    if class != Classification::SingleKeyFk {
        return Err(RepairError::WrongClass {
            engine: "key-cascade",
            expected: "single-key-fk",
            found: class,
        });
    }
    if !r2.is_subset_of(r) {
        return Ok(RepairVerdict::fail(not_subset(r, r2)));
    }
    let r1 = unique_ind_repair(schema, r, &ics.inds)?;
    if !r2.is_subset_of(&r1) {
        // r2 ⊆ r but not within the greatest inclusion-consistent
        // subinstance, so r2 itself breaks an inclusion dependency.
        let ind_only = ConstraintSet::new(vec![], vec![], ics.inds.clone());
        let violation = find_violation(schema, r2, &ind_only)?
            .expect("a subset escaping the greatest consistent subinstance must violate");
        let ConstraintRef::Ind(i) = violation.constraint else {
            unreachable!("inclusion-only constraint set yields inclusion violations");
        };
        return Ok(RepairVerdict::fail(RepairCertificate::Violation {
            constraint: ConstraintRef::Ind(i),
            description: ics.describe(&violation.constraint),
            facts: violation.facts,
        }));
    }
    let fd_set = ConstraintSet::new(vec![], ics.fds.clone(), vec![]);
    let (denials, origins) = all_as_denials(schema, &fd_set)?;
    let describe = |i: usize| fd_set.describe(&origins[i]);
    check_denial_mapped(schema, &r1, r2, &denials, &origins, &describe)
}

/// Repair check for constraint sets whose inclusion dependencies form an
/// acyclic graph (functional dependencies and denials welcome): the
/// candidate must be a consistent subinstance, and every deleted fact must
/// be blocked — adding it alone must break a constraint. Facts are scanned
/// relation by relation, inclusion targets before sources, so the stage
/// recorded in an `Addable` certificate is the earliest at which
/// non-maximality shows. Single additions suffice exactly because the graph
/// is acyclic: among the facts any consistent strict superset adds, one from
/// the earliest stage is individually addable (its inclusion targets lie in
/// strictly earlier stages, which the superset leaves untouched).
pub fn check_acyclic(
    schema: &Schema,
    r: &Instance,
    r2: &Instance,
    ics: &ConstraintSet,
) -> Result<RepairVerdict, RepairError> {
    let Some(stages) = ind_graph(ics).stage_order(schema) else {
        return Err(RepairError::WrongClass {
            engine: "stage-wise",
            expected: "acyclic inclusion dependencies",
            found: classify(schema, ics),
        });
    };
    if !r2.is_subset_of(r) {
        return Ok(RepairVerdict::fail(not_subset(r, r2)));
    }
    if let Some(violation) = find_violation(schema, r2, ics)? {
        let description = ics.describe(&violation.constraint);
        return Ok(RepairVerdict::fail(RepairCertificate::Violation {
            constraint: violation.constraint,
            description,
            facts: violation.facts,
        }));
    }
    let deleted: Vec<&Fact> = r.difference(r2).collect();
    for stage in stages {
        for &fact in deleted.iter().filter(|f| f.relation == stage) {
            let mut augmented = r2.clone();
            augmented.insert(fact.clone());
            if satisfies(schema, &augmented, ics)? {
                return Ok(RepairVerdict::fail(RepairCertificate::Addable {
                    fact: fact.clone(),
                    stage: Some(stage.clone()),
                }));
            }
        }
    }
    Ok(RepairVerdict::repair())
}

/// Repair check with the engine chosen by constraint classification.
/// Returns the verdict and the name of the engine that produced it. The
/// general class (functional dependencies mixed with cyclic inclusion
/// dependencies, or inclusion dependencies mixed with denials) has no
/// polynomial engine and is refused.
pub fn check_repair(
    schema: &Schema,
    r: &Instance,
    r2: &Instance,
    ics: &ConstraintSet,
) -> Result<(RepairVerdict, &'static str), RepairError> {
    match classify(schema, ics) {
        Classification::DenialOnly | Classification::FdsOnly => {
            let (denials, origins) = all_as_denials(schema, ics)?;
            let describe = |i: usize| ics.describe(&origins[i]);
            let verdict = check_denial_mapped(schema, r, r2, &denials, &origins, &describe)?;
            Ok((verdict, "conflict-hypergraph maximality check"))
        }
        Classification::IndsOnly => {
            let verdict = check_inds_only(schema, r, r2, ics)?;
            Ok((verdict, "unique cascade repair"))
        }
        Classification::SingleKeyFk => {
            let verdict = check_single_key(schema, r, r2, ics)?;
            Ok((verdict, "key-cascade then functional-dependency check"))
        }
        Classification::AcyclicFdInd => {
            let verdict = check_acyclic(schema, r, r2, ics)?;
            Ok((verdict, "stage-wise maximality check"))
        }
        class @ Classification::General => Err(RepairError::UnsupportedClass(class)),
    }
}

/// Inclusion dependencies alone admit exactly one repair, so checking is
/// comparison: report a violation if the candidate is inconsistent, or the
/// first missing fact if it is a strict subset of the unique repair.
fn check_inds_only(
    schema: &Schema,
    r: &Instance,
    r2: &Instance,
    ics: &ConstraintSet,
) -> Result<RepairVerdict, RepairError> {
    if !r2.is_subset_of(r) {
        return Ok(RepairVerdict::fail(not_subset(r, r2)));
    }
    let unique = unique_ind_repair(schema, r, &ics.inds)?;
    if *r2 == unique {
        return Ok(RepairVerdict::repair());
    }
    if let Some(violation) = find_violation(schema, r2, ics)? {
        let description = ics.describe(&violation.constraint);
        return Ok(RepairVerdict::fail(RepairCertificate::Violation {
            constraint: violation.constraint,
            description,
            facts: violation.facts,
        }));
    }
    // Consistent subinstances are contained in the unique repair, so a
    // consistent candidate that is not the repair is strictly below it.
    let fact = unique
        .difference(r2)
        .next()
        .cloned()
        .expect("a consistent non-repair candidate is strictly below the unique repair");
    Ok(RepairVerdict::fail(RepairCertificate::Addable { fact, stage: None }))
}

/// Draws a repair of `r` uniformly-ish at random: deterministic for a given
/// seed, and over many seeds reaches every repair of the instance for the
/// hypergraph-backed classes. Classes are handled as in [`check_repair`];
/// the general class is refused.
pub fn sample_repair(
    schema: &Schema,
    r: &Instance,
    ics: &ConstraintSet,
    seed: u64,
) -> Result<Instance, RepairError> {
    r.validate(schema)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match classify(schema, ics) {
        Classification::DenialOnly | Classification::FdsOnly => {
            let (denials, _) = all_as_denials(schema, ics)?;
            greedy_hypergraph_repair(schema, r, &denials, &mut rng)
        }
        Classification::IndsOnly => unique_ind_repair(schema, r, &ics.inds),
        Classification::SingleKeyFk => {
            let r1 = unique_ind_repair(schema, r, &ics.inds)?;
            let fd_set = ConstraintSet::new(vec![], ics.fds.clone(), vec![]);
            let (denials, _) = all_as_denials(schema, &fd_set)?;
            greedy_hypergraph_repair(schema, &r1, &denials, &mut rng)
        }
        Classification::AcyclicFdInd => {
            let stages = ind_graph(ics)
                .stage_order(schema)
                .expect("the acyclic class has an acyclic inclusion graph");
            let mut repair = Instance::empty();
            for stage in stages {
                let mut stage_facts: Vec<Fact> =
                    r.relation(&stage).cloned().collect();
                stage_facts.shuffle(&mut rng);
                for fact in stage_facts {
                    let mut augmented = repair.clone();
                    augmented.insert(fact);
                    if satisfies(schema, &augmented, ics)? {
                        repair = augmented;
                    }
                }
            }
            Ok(repair)
        }
        class @ Classification::General => Err(RepairError::UnsupportedClass(class)),
    }
}

fn greedy_hypergraph_repair(
    schema: &Schema,
    r: &Instance,
    denials: &[DenialConstraint],
    rng: &mut ChaCha8Rng,
) -> Result<Instance, RepairError> {
    let hg = ConflictHypergraph::build(schema, r, denials)?;
    let mut order: Vec<usize> = (0..hg.vertex_count()).collect();
    order.shuffle(rng);
    let bits = hg.extend_to_maximal(&BitSet::new(hg.vertex_count()), &order);
    Ok(hg.to_instance(&bits))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::{employee_manager, person_fd, person_instance, person_schema};
    use crate::model::{Fd, Value};
    use crate::oracle::{enumerate_repairs, oracle_repair_check};
    use crate::textio::{parse_constraints, parse_schema};
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

    /// A single-key + foreign-key variant of the employee/manager setup:
    /// only the key functional dependency, so the cascade engine applies.
    fn single_key_setup() -> (Schema, Instance, ConstraintSet) {
        let (schema, inst, ics) = employee_manager();
        let single = ConstraintSet::new(
            vec![],
            vec![Fd::new("Employee", ["ssn"], ["name"])],
            ics.inds,
        );
        (schema, inst, single)
    }

    #[test]
    fn denial_check_accepts_both_repairs() {
        let schema = person_schema();
        let inst = person_instance();
        let denials = person_denials();
        let green = person("Green", "Clarence", "4000 Transit");
        for street in ["115 Klein", "120 Maple"] {
            let repair =
                Instance::from_facts([person("Brown", "Amherst", street), green.clone()]);
            let verdict = check_denial(&schema, &inst, &repair, &denials).unwrap();
            assert!(verdict.ok, "repair keeping {street} must pass");
            assert_eq!(verdict.certificate, None);
        }
    }

    #[test]
    fn denial_check_certificates_revalidate() {
        let schema = person_schema();
        let inst = person_instance();
        let denials = person_denials();

        // The full inconsistent instance: violation certificate whose facts
        // really ground the named denial.
        let verdict = check_denial(&schema, &inst, &inst, &denials).unwrap();
        let Some(RepairCertificate::Violation { constraint, facts, .. }) = verdict.certificate
        else {
            panic!("expected a violation certificate");
        };
        let ConstraintRef::Denial(i) = constraint else {
            panic!("denial check must cite a denial");
        };
        let only: Instance = facts.iter().cloned().collect();
        let as_set = ConstraintSet::new(vec![denials[i].clone()], vec![], vec![]);
        assert!(!satisfies(&schema, &only, &as_set).unwrap());

        // A consistent but non-maximal candidate: the addable fact really
        // can be added back.
        let partial = Instance::from_facts([person("Green", "Clarence", "4000 Transit")]);
        let verdict = check_denial(&schema, &inst, &partial, &denials).unwrap();
        let Some(RepairCertificate::Addable { fact, stage: None }) = verdict.certificate else {
            panic!("expected an addable certificate");
        };
        assert!(inst.contains(&fact) && !partial.contains(&fact));
        let mut grown = partial.clone();
        grown.insert(fact);
        assert!(satisfies(&schema, &grown, &person_ics()).unwrap());

        // A candidate with foreign facts: distinct certificate kind.
        let foreign = Instance::from_facts([person("White", "Utica", "1 Elm")]);
        let verdict = check_denial(&schema, &inst, &foreign, &denials).unwrap();
        let Some(RepairCertificate::NotSubset { facts }) = verdict.certificate else {
            panic!("expected a not-subset certificate");
        };
        assert_eq!(facts, vec![person("White", "Utica", "1 Elm")]);
    }

    #[test]
    fn unique_ind_repair_cascades_chains() {
        let schema = parse_schema(
            "relation R1(x: sym)\nrelation R2(x: sym)\nrelation R3(x: sym)",
            "test",
        )
        .unwrap();
        let ics = parse_constraints(
            "ind R1[x] <= R2[x]\nind R2[x] <= R3[x]",
            &schema,
            "test",
        )
        .unwrap();
        let inst = Instance::from_facts([
            Fact::new("R1", vec![Value::sym("k")]),
            Fact::new("R2", vec![Value::sym("k")]),
        ]);
        // R3 is empty: R2's fact loses support, then R1's does.
        let repaired = unique_ind_repair(&schema, &inst, &ics.inds).unwrap();
        assert!(repaired.is_empty());

        // With the chain grounded in R3, everything survives.
        let mut grounded = inst.clone();
        grounded.insert(Fact::new("R3", vec![Value::sym("k")]));
        let repaired = unique_ind_repair(&schema, &grounded, &ics.inds).unwrap();
        assert_eq!(repaired, grounded);
    }

    #[test]
    fn unique_ind_repair_is_union_of_consistent_subsets() {
        let (schema, mut inst, ics) = employee_manager();
        inst.insert(Fact::new("Manager", vec![Value::Int(99)]));
        let unique = unique_ind_repair(&schema, &inst, &ics.inds).unwrap();
        let ind_only = ConstraintSet::new(vec![], vec![], ics.inds.clone());
        let facts: Vec<Fact> = inst.iter().cloned().collect();
        let mut union = Instance::empty();
        for mask in 0u32..1 << facts.len() {
            let sub: Instance = facts
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, f)| f.clone())
                .collect();
            if satisfies(&schema, &sub, &ind_only).unwrap() {
                assert!(sub.is_subset_of(&unique));
                for f in sub.iter() {
                    union.insert(f.clone());
                }
            }
        }
        assert_eq!(union, unique);
    }

    #[test]
    fn single_key_check_accepts_fd_choices_and_rejects_class_mismatch() {
        let (schema, inst, ics) = single_key_setup();
        assert_eq!(classify(&schema, &ics), Classification::SingleKeyFk);
        // Either choice in the contested key group, managers kept.
        for name in ["Jones", "Smith"] {
            let repair = Instance::from_facts([
                Fact::new("Employee", vec![Value::Int(123456789), Value::sym("Smith")]),
                Fact::new("Employee", vec![Value::Int(555555555), Value::sym(name)]),
                Fact::new("Manager", vec![Value::Int(123456789)]),
                Fact::new("Manager", vec![Value::Int(555555555)]),
            ]);
            let verdict = check_single_key(&schema, &inst, &repair, &ics).unwrap();
            assert!(verdict.ok, "keeping {name} must pass");
        }
        // Two keys on Employee puts the set outside the engine's class.
        let (schema2, inst2, two_keys) = employee_manager();
        let err = check_single_key(&schema2, &inst2, &inst2, &two_keys).unwrap_err();
        assert!(matches!(err, RepairError::WrongClass { .. }));
    }

    #[test]
    fn single_key_check_reports_cascaded_facts_as_inclusion_violations() {
        let (schema, mut inst, ics) = single_key_setup();
        let orphan = Fact::new("Manager", vec![Value::Int(99)]);
        inst.insert(orphan.clone());
        // A candidate keeping the unsupported manager is inconsistent, and
        // the certificate names the inclusion dependency.
        let mut candidate = Instance::from_facts([
            Fact::new("Employee", vec![Value::Int(123456789), Value::sym("Smith")]),
            Fact::new("Employee", vec![Value::Int(555555555), Value::sym("Jones")]),
            Fact::new("Manager", vec![Value::Int(123456789)]),
            Fact::new("Manager", vec![Value::Int(555555555)]),
        ]);
        let good = check_single_key(&schema, &inst, &candidate, &ics).unwrap();
        assert!(good.ok, "the cascade deletes only the orphan");
        candidate.insert(orphan.clone());
        let verdict = check_single_key(&schema, &inst, &candidate, &ics).unwrap();
        let Some(RepairCertificate::Violation { constraint, facts, .. }) = verdict.certificate
        else {
            panic!("expected an inclusion violation certificate");
        };
        assert_eq!(constraint, ConstraintRef::Ind(0));
        assert_eq!(facts, vec![orphan]);
    }

    #[test]
    fn acyclic_check_matches_paper_example() {
        let (schema, inst, ics) = employee_manager();
        assert_eq!(classify(&schema, &ics), Classification::AcyclicFdInd);
        let big = Instance::from_facts([
            Fact::new("Employee", vec![Value::Int(123456789), Value::sym("Smith")]),
            Fact::new("Employee", vec![Value::Int(555555555), Value::sym("Jones")]),
            Fact::new("Manager", vec![Value::Int(123456789)]),
            Fact::new("Manager", vec![Value::Int(555555555)]),
        ]);
        let small = Instance::from_facts([
            Fact::new("Employee", vec![Value::Int(555555555), Value::sym("Smith")]),
            Fact::new("Manager", vec![Value::Int(555555555)]),
        ]);
        assert!(check_acyclic(&schema, &inst, &big, &ics).unwrap().ok);
        assert!(check_acyclic(&schema, &inst, &small, &ics).unwrap().ok);

        // Dropping a supported manager leaves it addable; the stage is the
        // relation where the scan caught it.
        let mut shrunk = big.clone();
        shrunk.remove(&Fact::new("Manager", vec![Value::Int(555555555)]));
        let verdict = check_acyclic(&schema, &inst, &shrunk, &ics).unwrap();
        let Some(RepairCertificate::Addable { fact, stage }) = verdict.certificate else {
            panic!("expected an addable certificate");
        };
        assert_eq!(fact, Fact::new("Manager", vec![Value::Int(555555555)]));
        assert_eq!(stage.as_deref(), Some("Manager"));

        // Keeping a manager whose employee is gone violates the inclusion.
        let broken = Instance::from_facts([
            Fact::new("Employee", vec![Value::Int(555555555), Value::sym("Smith")]),
            Fact::new("Manager", vec![Value::Int(123456789)]),
        ]);
        let verdict = check_acyclic(&schema, &inst, &broken, &ics).unwrap();
        assert!(matches!(
            verdict.certificate,
            Some(RepairCertificate::Violation { constraint: ConstraintRef::Ind(0), .. })
        ));
    }

    #[test]
    fn acyclic_check_requires_acyclic_inclusions() {
        let schema = parse_schema("relation R(a: sym)\nrelation S(a: sym)", "test").unwrap();
        let ics = parse_constraints(
            "ind R[a] <= S[a]\nind S[a] <= R[a]",
            &schema,
            "test",
        )
        .unwrap();
        let err = check_acyclic(&schema, &Instance::empty(), &Instance::empty(), &ics)
            .unwrap_err();
        assert!(matches!(err, RepairError::WrongClass { .. }));
    }

    #[test]
    fn auto_dispatch_names_engines_and_refuses_general() {
        let schema = person_schema();
        let inst = person_instance();
        let repair = Instance::from_facts([
            person("Brown", "Amherst", "115 Klein"),
            person("Green", "Clarence", "4000 Transit"),
        ]);
        let (verdict, engine) = check_repair(&schema, &inst, &repair, &person_ics()).unwrap();
        assert!(verdict.ok);
        assert_eq!(engine, "conflict-hypergraph maximality check");

        let (schema2, inst2, ics2) = employee_manager();
        let (_, engine2) = check_repair(&schema2, &inst2, &inst2, &ics2).unwrap();
        assert_eq!(engine2, "stage-wise maximality check");

        // Inclusion dependencies mixed with a denial: the general class.
        let schema3 = parse_schema("relation R(a: sym)\nrelation S(a: sym)", "test").unwrap();
        let ics3 = parse_constraints(
            "ind R[a] <= S[a]\ndenial not [ S(x), R(y), x = y ]",
            &schema3,
            "test",
        )
        .unwrap();
        let err = check_repair(&schema3, &Instance::empty(), &Instance::empty(), &ics3)
            .unwrap_err();
        assert!(matches!(err, RepairError::UnsupportedClass(Classification::General)));
    }

    #[test]
    fn inds_only_check_compares_with_unique_repair() {
        let schema = parse_schema("relation R(a: sym)\nrelation S(a: sym)", "test").unwrap();
        let ics = parse_constraints("ind R[a] <= S[a]", &schema, "test").unwrap();
        let r_fact = Fact::new("R", vec![Value::sym("k")]);
        let s_fact = Fact::new("S", vec![Value::sym("k")]);
        let inst = Instance::from_facts([r_fact.clone(), s_fact.clone()]);
        let (verdict, engine) = check_repair(&schema, &inst, &inst, &ics).unwrap();
        assert!(verdict.ok);
        assert_eq!(engine, "unique cascade repair");
        // Strict subsets of the unique repair are not maximal.
        let partial = Instance::from_facts([s_fact]);
        let (verdict, _) = check_repair(&schema, &inst, &partial, &ics).unwrap();
        assert!(matches!(
            verdict.certificate,
            Some(RepairCertificate::Addable { stage: None, .. })
        ));
        // An unsupported referencing fact violates the inclusion.
        let broken = Instance::from_facts([r_fact]);
        let (verdict, _) = check_repair(&schema, &inst, &broken, &ics).unwrap();
        assert!(matches!(
            verdict.certificate,
            Some(RepairCertificate::Violation { .. })
        ));
    }

    #[test]
    fn sampled_address_book_repairs_are_paper_repairs() {
        let schema = person_schema();
        let inst = person_instance();
        let ics = person_ics();
        let expected = enumerate_repairs(&schema, &inst, &ics, 18).unwrap();
        let mut seen = std::collections::BTreeSet::new();
        for seed in 0..40 {
            let sampled = sample_repair(&schema, &inst, &ics, seed).unwrap();
            assert!(expected.contains(&sampled), "seed {seed}");
            seen.insert(sampled.iter().cloned().collect::<Vec<_>>());
        }
        // Both repairs show up across seeds.
        assert_eq!(seen.len(), 2);
    }

    #[test]
    fn sampling_visits_all_independent_choice_repairs() {
        // Three two-way choices: 8 repairs, all reachable across 200 seeds,
        // and every sample passes the denial check.
        let schema = parse_schema("relation R(a: sym, b: sym)", "test").unwrap();
        let ics = ConstraintSet::new(vec![], vec![Fd::new("R", ["a"], ["b"])], vec![]);
        let inst: Instance = (0..3)
            .flat_map(|i| {
                [
                    Fact::new("R", vec![Value::sym(format!("a{i}")), Value::sym("b0")]),
                    Fact::new("R", vec![Value::sym(format!("a{i}")), Value::sym("b1")]),
                ]
            })
            .collect();
        let oracle_set = enumerate_repairs(&schema, &inst, &ics, 18).unwrap();
        assert_eq!(oracle_set.repairs.len(), 8);
        let denials = all_as_denials(&schema, &ics).unwrap().0;
        let mut seen = std::collections::BTreeSet::new();
        for seed in 0..200 {
            let sampled = sample_repair(&schema, &inst, &ics, seed).unwrap();
            assert!(oracle_set.contains(&sampled), "seed {seed}");
            assert!(check_denial(&schema, &inst, &sampled, &denials).unwrap().ok);
            seen.insert(sampled.iter().cloned().collect::<Vec<_>>());
        }
        assert_eq!(seen.len(), 8, "every repair reached across seeds");
    }

    #[test]
    fn sampling_is_deterministic_per_seed_and_refuses_general() {
        let (schema, inst, ics) = employee_manager();
        for seed in [0, 7, 99] {
            let a = sample_repair(&schema, &inst, &ics, seed).unwrap();
            let b = sample_repair(&schema, &inst, &ics, seed).unwrap();
            assert_eq!(a, b);
            assert!(oracle_repair_check(&schema, &inst, &a, &ics, 18).unwrap());
        }
        let schema3 = parse_schema("relation R(a: sym)\nrelation S(a: sym)", "test").unwrap();
        let general = parse_constraints(
            "ind R[a] <= S[a]\ndenial not [ R(x), S(y), x = y ]",
            &schema3,
            "test",
        )
        .unwrap();
        let err = sample_repair(&schema3, &Instance::empty(), &general, 0).unwrap_err();
        assert!(matches!(err, RepairError::UnsupportedClass(_)));
    }

    fn employee_fact(ssn: i64, name: &str) -> Fact {
        Fact::new("Employee", vec![Value::Int(ssn), Value::sym(name)])
    }

    fn manager_fact(ssn: i64) -> Fact {
        Fact::new("Manager", vec![Value::Int(ssn)])
    }

    prop_compose! {
        /// Random employee/manager instances: contested key groups plus
        /// managers that may or may not have support.
        fn arb_emp_mgr()(
            emps in proptest::collection::btree_set(
                (1i64..4, prop_oneof![Just("Ann"), Just("Bo"), Just("Cy")])
                    .prop_map(|(s, n)| employee_fact(s, n)),
                0..5,
            ),
            mgrs in proptest::collection::btree_set(
                (1i64..5).prop_map(manager_fact),
                0..3,
            ),
        ) -> Instance {
            emps.into_iter().chain(mgrs).collect()
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        /// The single-key engine and the acyclic engine both agree with the
        /// oracle on every subset of random instances (ssn is the one key,
        /// managers reference it).
        #[test]
        fn cascade_engines_match_oracle(inst in arb_emp_mgr()) {
            let (schema, _, two_key_ics) = employee_manager();
            let (_, _, single_ics) = single_key_setup();
            let facts: Vec<Fact> = inst.iter().cloned().collect();
            for mask in 0u32..1 << facts.len() {
                let sub: Instance = facts
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| mask & (1 << i) != 0)
                    .map(|(_, f)| f.clone())
                    .collect();
                let expected_single =
                    oracle_repair_check(&schema, &inst, &sub, &single_ics, 18).unwrap();
                let got_single =
                    check_single_key(&schema, &inst, &sub, &single_ics).unwrap();
                prop_assert_eq!(got_single.ok, expected_single);

                let expected_two =
                    oracle_repair_check(&schema, &inst, &sub, &two_key_ics, 18).unwrap();
                let got_two = check_acyclic(&schema, &inst, &sub, &two_key_ics).unwrap();
                prop_assert_eq!(got_two.ok, expected_two);

                // The acyclic engine subsumes the single-key class.
                let acyclic_single =
                    check_acyclic(&schema, &inst, &sub, &single_ics).unwrap();
                prop_assert_eq!(acyclic_single.ok, expected_single);
            }
        }

        /// Sampled repairs pass the oracle for every covered class.
        #[test]
        fn sampled_repairs_are_repairs(inst in arb_emp_mgr(), seed in 0u64..1000) {
            let (schema, _, acyclic_ics) = employee_manager();
            let (_, _, single_ics) = single_key_setup();
            let ind_only = ConstraintSet::new(vec![], vec![], acyclic_ics.inds.clone());
            for ics in [&acyclic_ics, &single_ics, &ind_only] {
                let sampled = sample_repair(&schema, &inst, ics, seed).unwrap();
                prop_assert!(oracle_repair_check(&schema, &inst, &sampled, ics, 18).unwrap());
            }
        }
    }
}
