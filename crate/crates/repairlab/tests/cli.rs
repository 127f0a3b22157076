//! End-to-end tests of the `repairlab` binary: every subcommand, the exit-code
//! contract (0 computed / 1 runtime failure / 2 usage / 3 unsupported class /
//! 4 unreadable-or-unparsable input), JSON-schema conformance of all
//! `--format json` output, and byte-level determinism across repeated runs.

use std::path::{Path, PathBuf};
use std::process::Output;
use std::sync::OnceLock;

use tempfile::TempDir;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_repairlab")
}

struct Run {
    stdout: String,
    stderr: String,
    code: i32,
}

fn run_in(dir: &Path, args: &[&str], env: &[(&str, &str)]) -> Run {
    let mut cmd = std::process::Command::new(bin());
    cmd.args(args).current_dir(dir);
    // The oracle cap must come from the flags under test, not from the
    // ambient environment.
    cmd.env_remove("REPAIRLAB_ORACLE_CAP");
    for (k, v) in env {
        cmd.env(k, v);
    }
    let Output { stdout, stderr, status } = cmd.output().expect("binary runs");
    Run {
        stdout: String::from_utf8(stdout).expect("stdout is UTF-8"),
        stderr: String::from_utf8(stderr).expect("stderr is UTF-8"),
        code: status.code().expect("no signal"),
    }
}

fn run(dir: &Path, args: &[&str]) -> Run {
    run_in(dir, args, &[])
}

/// Runs a command that must succeed and returns its stdout.
fn ok(dir: &Path, args: &[&str]) -> String {
    let r = run(dir, args);
    assert_eq!(r.code, 0, "args {args:?} failed: {}", r.stderr);
    r.stdout
}

/// Parses stdout as JSON and validates it against the published schema.
fn valid_json(stdout: &str) -> serde_json::Value {
    static VALIDATOR: OnceLock<jsonschema::Validator> = OnceLock::new();
    let validator = VALIDATOR.get_or_init(|| {
        let path = concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/../../docs/cli-output.schema.json"
        );
        let text = std::fs::read_to_string(path).expect("schema file is published in docs/");
        let schema: serde_json::Value = serde_json::from_str(&text).expect("schema parses");
        jsonschema::validator_for(&schema).expect("schema compiles")
    });
    let value: serde_json::Value = serde_json::from_str(stdout).expect("output is JSON");
    let errors: Vec<String> = validator
        .iter_errors(&value)
        .map(|e| format!("{e} at {}", e.instance_path()))
        .collect();
    assert!(errors.is_empty(), "schema violations: {errors:#?}\nin: {stdout}");
    value
}

// ---------------------------------------------------------------------------
// Fixtures
// ---------------------------------------------------------------------------

fn write(dir: &Path, name: &str, text: &str) {
    let path = dir.join(name);
    std::fs::create_dir_all(path.parent().unwrap()).unwrap();
    std::fs::write(path, text).unwrap();
}

/// The contested address book: one person with two streets on record, one
/// uncontested person, under the FD name → city, street. Two repairs.
fn address_book() -> TempDir {
    let t = TempDir::new().unwrap();
    let d = t.path();
    write(d, "schema.txt", "relation Person(name: sym, city: sym, street: sym)\n");
    write(d, "constraints.txt", "fd Person: name -> city, street\n");
    write(
        d,
        "data/Person.csv",
        "name,city,street\nBrown,Amherst,115 Klein\nBrown,Amherst,120 Maple\nGreen,Clarence,4000 Transit\n",
    );
    write(
        d,
        "repair1/Person.csv",
        "name,city,street\nBrown,Amherst,115 Klein\nGreen,Clarence,4000 Transit\n",
    );
    write(d, "short/Person.csv", "name,city,street\nGreen,Clarence,4000 Transit\n");
    write(
        d,
        "foreign/Person.csv",
        "name,city,street\nWhite,Amherst,1 Elsewhere\n",
    );
    t
}

/// One employee ssn with two names plus a manager referencing it: class
/// single-key-fk, two repairs (one name survives, the manager stays).
fn employee_manager() -> TempDir {
    let t = TempDir::new().unwrap();
    let d = t.path();
    write(
        d,
        "schema.txt",
        "relation Employee(ssn: sym, name: sym)\nkey Employee: ssn\nrelation Manager(ssn: sym)\n",
    );
    write(
        d,
        "constraints.txt",
        "fd Employee: ssn -> name\nind Manager[ssn] <= Employee[ssn]\n",
    );
    write(d, "data/Employee.csv", "ssn,name\n1234,Jones\n1234,Smith\n");
    write(d, "data/Manager.csv", "ssn\n1234\n");
    write(d, "repair/Employee.csv", "ssn,name\n1234,Jones\n");
    write(d, "repair/Manager.csv", "ssn\n1234\n");
    t
}

const COMMON: [&str; 6] = [
    "--schema",
    "schema.txt",
    "--constraints",
    "constraints.txt",
    "--data",
    "data",
];

fn with_common(head: &[&str], tail: &[&str]) -> Vec<&'static str> {
    // Leak the composed argv: test-lifetime only, keeps call sites readable.
    let mut v: Vec<String> = head.iter().map(|s| s.to_string()).collect();
    v.extend(COMMON.iter().map(|s| s.to_string()));
    v.extend(tail.iter().map(|s| s.to_string()));
    v.into_iter()
        .map(|s| &*Box::leak(s.into_boxed_str()))
        .collect()
}

// ---------------------------------------------------------------------------
// check
// ---------------------------------------------------------------------------

#[test]
fn check_accepts_a_repair_and_exits_zero() {
    let t = address_book();
    let out = ok(t.path(), &with_common(&["check"], &["--candidate", "repair1"]));
    assert!(out.contains("class: fds-only"), "{out}");
    assert!(out.contains("engine: conflict-hypergraph maximality check"), "{out}");
    assert!(out.contains("selection: auto — "), "{out}");
    assert!(out.contains("ok: true"), "{out}");
}

#[test]
fn check_rejects_non_maximal_candidate_but_still_exits_zero() {
    let t = address_book();
    let out = ok(t.path(), &with_common(&["check"], &["--candidate", "short"]));
    assert!(out.contains("ok: false"), "{out}");
    assert!(out.contains("reason: deleted fact can be added back"), "{out}");
}

#[test]
fn check_json_reports_certificates_per_schema() {
    let t = address_book();
    // Accepted repair.
    let v = valid_json(&ok(
        t.path(),
        &with_common(&["check"], &["--candidate", "repair1", "--format", "json"]),
    ));
    assert_eq!(v["verdict"]["ok"], serde_json::json!(true));
    assert!(v["selection"].is_string());
    // Non-maximal candidate: addable certificate.
    let v = valid_json(&ok(
        t.path(),
        &with_common(&["check"], &["--candidate", "short", "--format", "json"]),
    ));
    assert_eq!(v["verdict"]["certificate"]["kind"], serde_json::json!("addable"));
    // Candidate outside the instance: not_subset certificate.
    let v = valid_json(&ok(
        t.path(),
        &with_common(&["check"], &["--candidate", "foreign", "--format", "json"]),
    ));
    assert_eq!(v["verdict"]["certificate"]["kind"], serde_json::json!("not_subset"));
    // Inconsistent candidate (the full data): violation certificate.
    let v = valid_json(&ok(
        t.path(),
        &with_common(&["check"], &["--candidate", "data", "--format", "json"]),
    ));
    assert_eq!(v["verdict"]["certificate"]["kind"], serde_json::json!("violation"));
    assert_eq!(v["verdict"]["certificate"]["constraint"]["kind"], serde_json::json!("fd"));
}

#[test]
fn check_oracle_engine_agrees_with_auto() {
    let t = address_book();
    for (candidate, want) in [("repair1", true), ("short", false), ("data", false)] {
        let v = valid_json(&ok(
            t.path(),
            &with_common(
                &["check"],
                &["--candidate", candidate, "--engine", "oracle", "--format", "json"],
            ),
        ));
        assert_eq!(v["verdict"]["ok"], serde_json::json!(want), "candidate {candidate}");
        assert_eq!(v["engine"], serde_json::json!("exhaustive maximality search"));
        assert!(v["selection"].is_null(), "explicit engine must not print a selection");
    }
}

#[test]
fn check_single_key_cascade_engine() {
    let t = employee_manager();
    let out = ok(t.path(), &with_common(&["check"], &["--candidate", "repair"]));
    assert!(out.contains("class: single-key-fk"), "{out}");
    assert!(out.contains("engine: key-cascade then functional-dependency check"), "{out}");
    assert!(out.contains("ok: true"), "{out}");
    // The explicit selector accepts the matching class.
    let out = ok(
        t.path(),
        &with_common(&["check"], &["--candidate", "repair", "--engine", "single-key"]),
    );
    assert!(out.contains("ok: true"), "{out}");
}

#[test]
fn missing_candidate_is_a_usage_error() {
    let t = address_book();
    let r = run(t.path(), &with_common(&["check"], &[]));
    assert_eq!(r.code, 2, "stderr: {}", r.stderr);
    assert!(r.stderr.contains("--candidate"), "{}", r.stderr);
}

#[test]
fn engine_class_mismatch_exits_three() {
    let t = address_book();
    for engine in ["single-key", "acyclic"] {
        let r = run(
            t.path(),
            &with_common(&["check"], &["--candidate", "repair1", "--engine", engine]),
        );
        assert_eq!(r.code, 3, "engine {engine}: {}", r.stderr);
        assert!(r.stderr.contains("fds-only"), "{}", r.stderr);
    }
    let t = employee_manager();
    let r = run(
        t.path(),
        &with_common(&["check"], &["--candidate", "repair", "--engine", "denial"]),
    );
    assert_eq!(r.code, 3, "{}", r.stderr);
}

#[test]
fn unparsable_input_exits_four_with_position() {
    let t = address_book();
    write(t.path(), "bad.txt", "relation Person(name sym)\n");
    let r = run(
        t.path(),
        &["classify", "--schema", "bad.txt", "--constraints", "constraints.txt"],
    );
    assert_eq!(r.code, 4, "{}", r.stderr);
    assert!(r.stderr.contains("bad.txt:1:"), "no span in: {}", r.stderr);
}

#[test]
fn missing_file_exits_four() {
    let t = address_book();
    let r = run(
        t.path(),
        &["classify", "--schema", "nosuch.txt", "--constraints", "constraints.txt"],
    );
    assert_eq!(r.code, 4, "{}", r.stderr);
}

// ---------------------------------------------------------------------------
// cqa
// ---------------------------------------------------------------------------

#[test]
fn cqa_ground_disjunction_is_consistently_true() {
    let t = address_book();
    write(
        t.path(),
        "q.txt",
        "Person('Brown', 'Amherst', '115 Klein') or Person('Brown', 'Amherst', '120 Maple')\n",
    );
    let v = valid_json(&ok(
        t.path(),
        &with_common(&["cqa"], &["--query", "q.txt", "--format", "json"]),
    ));
    assert_eq!(v["verdict"]["consistent"], serde_json::json!(true));
    assert_eq!(v["engine"], serde_json::json!("conflict-hypergraph clause-witness search"));
}

#[test]
fn cqa_contested_fact_fails_with_witness() {
    let t = address_book();
    write(t.path(), "q.txt", "Person('Brown', 'Amherst', '115 Klein')\n");
    let v = valid_json(&ok(
        t.path(),
        &with_common(&["cqa"], &["--query", "q.txt", "--format", "json"]),
    ));
    assert_eq!(v["verdict"]["consistent"], serde_json::json!(false));
    let witness = &v["verdict"]["witness"];
    assert!(witness.is_object(), "witness expected: {v}");
    // The witness keeps the other street.
    assert!(witness["Person"]
        .as_array()
        .unwrap()
        .iter()
        .any(|row| row[2] == serde_json::json!("120 Maple")));
}

#[test]
fn cqa_open_query_lists_certain_answers() {
    let t = address_book();
    write(t.path(), "q.txt", "exists s: Person(n, c, s)\n");
    let v = valid_json(&ok(
        t.path(),
        &with_common(&["cqa"], &["--query", "q.txt", "--format", "json"]),
    ));
    assert_eq!(v["free"], serde_json::json!(["n", "c"]));
    assert_eq!(
        v["answers"],
        serde_json::json!([["Brown", "Amherst"], ["Green", "Clarence"]])
    );
    // Full-width open query: only the uncontested person survives.
    write(t.path(), "q3.txt", "Person(n, c, s)\n");
    let v = valid_json(&ok(
        t.path(),
        &with_common(&["cqa"], &["--query", "q3.txt", "--format", "json"]),
    ));
    assert_eq!(v["answers"], serde_json::json!([["Green", "Clarence", "4000 Transit"]]));
}

#[test]
fn cqa_oracle_engine_agrees_on_open_answers() {
    let t = address_book();
    write(t.path(), "q.txt", "exists s: Person(n, c, s)\n");
    let auto = valid_json(&ok(
        t.path(),
        &with_common(&["cqa"], &["--query", "q.txt", "--format", "json"]),
    ));
    let oracle = valid_json(&ok(
        t.path(),
        &with_common(
            &["cqa"],
            &["--query", "q.txt", "--engine", "oracle", "--format", "json"],
        ),
    ));
    assert_eq!(auto["answers"], oracle["answers"]);
    assert_eq!(oracle["engines"], serde_json::json!(["exhaustive repair enumeration"]));
}

#[test]
fn cqa_acyclic_selector_is_refused() {
    let t = address_book();
    write(t.path(), "q.txt", "Person('Brown', 'Amherst', '115 Klein')\n");
    let r = run(
        t.path(),
        &with_common(&["cqa"], &["--query", "q.txt", "--engine", "acyclic"]),
    );
    assert_eq!(r.code, 3, "{}", r.stderr);
}

#[test]
fn cqa_single_key_pipeline_answers() {
    let t = employee_manager();
    write(t.path(), "q.txt", "exists n: Employee('1234', n)\n");
    let v = valid_json(&ok(
        t.path(),
        &with_common(&["cqa"], &["--query", "q.txt", "--format", "json"]),
    ));
    // Some name survives in every repair, though neither name is certain.
    assert_eq!(v["verdict"]["consistent"], serde_json::json!(true));
    write(t.path(), "q2.txt", "Employee('1234', 'Jones')\n");
    let v = valid_json(&ok(
        t.path(),
        &with_common(&["cqa"], &["--query", "q2.txt", "--format", "json"]),
    ));
    assert_eq!(v["verdict"]["consistent"], serde_json::json!(false));
}

// ---------------------------------------------------------------------------
// repairs
// ---------------------------------------------------------------------------

#[test]
fn repairs_enumerate_finds_both_address_repairs() {
    let t = address_book();
    let v = valid_json(&ok(
        t.path(),
        &with_common(&["repairs", "enumerate"], &["--format", "json"]),
    ));
    assert_eq!(v["total"], serde_json::json!(2));
    assert_eq!(v["count"], serde_json::json!(2));
    assert_eq!(v["exhaustive"], serde_json::json!(true));
    let repairs = v["repairs"].as_array().unwrap();
    assert_eq!(repairs.len(), 2);
    for r in repairs {
        assert_eq!(r["Person"].as_array().unwrap().len(), 2);
    }
}

#[test]
fn repairs_enumerate_limit_truncates_and_clears_exhaustive() {
    let t = address_book();
    let v = valid_json(&ok(
        t.path(),
        &with_common(&["repairs", "enumerate"], &["--limit", "1", "--format", "json"]),
    ));
    assert_eq!(v["count"], serde_json::json!(1));
    assert_eq!(v["total"], serde_json::json!(2));
    assert_eq!(v["exhaustive"], serde_json::json!(false));
}

#[test]
fn repairs_sample_is_deterministic_per_seed_and_valid() {
    let t = address_book();
    let args = with_common(&["repairs", "sample"], &["--seed", "7", "--format", "json"]);
    let first = ok(t.path(), &args);
    for _ in 0..2 {
        assert_eq!(ok(t.path(), &args), first, "same seed must be byte-identical");
    }
    let v = valid_json(&first);
    assert_eq!(v["repair"]["Person"].as_array().unwrap().len(), 2);
    // Over seeds, both repairs occur (the sampler really randomizes).
    let mut seen = std::collections::BTreeSet::new();
    for seed in 0..8 {
        let v = valid_json(&ok(
            t.path(),
            &with_common(
                &["repairs", "sample"],
                &["--seed", &seed.to_string(), "--format", "json"],
            ),
        ));
        seen.insert(v["repair"].to_string());
    }
    assert_eq!(seen.len(), 2, "eight seeds should reach both repairs");
}

#[test]
fn repairs_enumerate_rejects_pointless_engine_selector() {
    let t = address_book();
    let r = run(
        t.path(),
        &with_common(&["repairs", "enumerate"], &["--engine", "denial"]),
    );
    assert_eq!(r.code, 2, "{}", r.stderr);
}

#[test]
fn oracle_cap_failure_exits_one_and_flag_overrides_env() {
    let t = address_book();
    let r = run_in(
        t.path(),
        &with_common(&["repairs", "enumerate"], &[]),
        &[("REPAIRLAB_ORACLE_CAP", "2")],
    );
    assert_eq!(r.code, 1, "{}", r.stderr);
    assert!(r.stderr.contains("above the oracle cap"), "{}", r.stderr);
    // An explicit flag beats the environment.
    let r = run_in(
        t.path(),
        &with_common(&["repairs", "enumerate"], &["--oracle-cap", "18"]),
        &[("REPAIRLAB_ORACLE_CAP", "2")],
    );
    assert_eq!(r.code, 0, "{}", r.stderr);
}

// ---------------------------------------------------------------------------
// hypergraph
// ---------------------------------------------------------------------------

#[test]
fn hypergraph_dot_and_json_agree() {
    let t = address_book();
    let dot = ok(t.path(), &with_common(&["hypergraph"], &[]));
    assert!(dot.starts_with("graph conflicts {"), "{dot}");
    assert_eq!(dot.matches(" -- ").count(), 1, "one conflict edge expected:\n{dot}");
    let v = valid_json(&ok(t.path(), &with_common(&["hypergraph"], &["--format", "json"])));
    assert_eq!(v["vertex_count"], serde_json::json!(3));
    assert_eq!(v["edge_count"], serde_json::json!(1));
    assert_eq!(v["edges"], serde_json::json!([[0, 1]]));
}

#[test]
fn hypergraph_refuses_inclusion_dependencies() {
    let t = employee_manager();
    let r = run(t.path(), &with_common(&["hypergraph"], &[]));
    assert_eq!(r.code, 3, "{}", r.stderr);
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

#[test]
fn generate_exponential_bundle_roundtrips() {
    let t = TempDir::new().unwrap();
    let v = valid_json(&ok(
        t.path(),
        &["generate", "exponential", "--n", "3", "--out-dir", "exp", "--format", "json"],
    ));
    assert_eq!(v["family"], serde_json::json!("exponential"));
    let csv = std::fs::read_to_string(t.path().join("exp/data/R.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7, "header + 6 facts:\n{csv}");
    // The bundle feeds straight back into the other commands.
    let v = valid_json(&ok(
        t.path(),
        &[
            "repairs",
            "enumerate",
            "--schema",
            "exp/schema.txt",
            "--constraints",
            "exp/constraints.txt",
            "--data",
            "exp/data",
            "--format",
            "json",
        ],
    ));
    assert_eq!(v["total"], serde_json::json!(8));
}

#[test]
fn generated_families_classify_as_designed() {
    let t = TempDir::new().unwrap();
    let cases: [(&str, &[&str], &str); 6] = [
        ("monotone3sat", &["--vars", "2", "--clause", "1 2", "--clause", "-1 -2"], "fds-only"),
        ("one-denial", &["--vars", "2", "--clause", "1 -2"], "denial-only"),
        ("fd-ind", &["--vars", "2", "--clause", "1 2", "--clause", "-1 -2"], "general"),
        ("keyfk", &["--vars", "2", "--clause", "1 2", "--clause", "-1 -2"], "general"),
        ("qbf", &["--forall", "1", "--exists", "1", "--clause", "1 2"], "general"),
        ("two-key", &["--vertices", "2", "--edge", "0 1"], "fds-only"),
    ];
    for (family, params, want_class) in cases {
        let dir = format!("bundle-{family}");
        let mut args = vec!["generate", family];
        args.extend_from_slice(params);
        args.extend_from_slice(&["--out-dir", &dir]);
        ok(t.path(), &args);
        let schema = format!("{dir}/schema.txt");
        let constraints = format!("{dir}/constraints.txt");
        let out = ok(
            t.path(),
            &["classify", "--schema", &schema, "--constraints", &constraints],
        );
        assert_eq!(out, format!("class: {want_class}\n"), "family {family}");
    }
    // The acyclic family declares keys and foreign keys in an acyclic chain.
    ok(
        t.path(),
        &["generate", "acyclic", "--vertices", "2", "--edge", "0 1", "--out-dir", "ac"],
    );
    let out = ok(
        t.path(),
        &["classify", "--schema", "ac/schema.txt", "--constraints", "ac/constraints.txt"],
    );
    assert_eq!(out, "class: acyclic-fd-ind\n");
}

#[test]
fn generate_rejects_bad_parameters() {
    let t = TempDir::new().unwrap();
    // Unknown family.
    let r = run(t.path(), &["generate", "nosuch", "--out-dir", "x"]);
    assert_eq!(r.code, 2, "{}", r.stderr);
    // Missing required parameter.
    let r = run(t.path(), &["generate", "exponential", "--out-dir", "x"]);
    assert_eq!(r.code, 2, "{}", r.stderr);
    assert!(r.stderr.contains("--n"), "{}", r.stderr);
    // A parameter the family does not read.
    let r = run(t.path(), &["generate", "exponential", "--n", "2", "--vars", "3", "--out-dir", "x"]);
    assert_eq!(r.code, 2, "{}", r.stderr);
    // A literal outside the declared variable range.
    let r = run(
        t.path(),
        &["generate", "monotone3sat", "--vars", "1", "--clause", "2", "--out-dir", "x"],
    );
    assert_eq!(r.code, 2, "{}", r.stderr);
    // A clause breaking the family's shape requirement.
    let r = run(
        t.path(),
        &["generate", "monotone3sat", "--vars", "2", "--clause", "1 -2", "--out-dir", "x"],
    );
    assert_eq!(r.code, 2, "{}", r.stderr);
}

#[test]
fn generate_qbf_bundle_answers_like_the_formula() {
    let t = TempDir::new().unwrap();
    // ∀p ∃q (p ∨ q) ∧ (¬p ∨ ¬q) is true: pick q = ¬p.
    ok(
        t.path(),
        &[
            "generate", "qbf", "--forall", "1", "--exists", "1", "--clause", "1 2", "--clause",
            "-1 -2", "--out-dir", "qt",
        ],
    );
    let v = valid_json(&ok(
        t.path(),
        &[
            "cqa",
            "--schema", "qt/schema.txt",
            "--constraints", "qt/constraints.txt",
            "--data", "qt/data",
            "--query", "qt/query.txt",
            "--format", "json",
        ],
    ));
    assert_eq!(v["verdict"]["consistent"], serde_json::json!(true));
    // ∀p ∃q: p — false: nothing rescues p = 0.
    ok(
        t.path(),
        &[
            "generate", "qbf", "--forall", "1", "--exists", "1", "--clause", "1", "--out-dir",
            "qf",
        ],
    );
    let v = valid_json(&ok(
        t.path(),
        &[
            "cqa",
            "--schema", "qf/schema.txt",
            "--constraints", "qf/constraints.txt",
            "--data", "qf/data",
            "--query", "qf/query.txt",
            "--format", "json",
        ],
    ));
    assert_eq!(v["verdict"]["consistent"], serde_json::json!(false));
}

// ---------------------------------------------------------------------------
// classify + determinism
// ---------------------------------------------------------------------------

#[test]
fn classify_json_is_schema_valid() {
    let t = address_book();
    let v = valid_json(&ok(
        t.path(),
        &["classify", "--schema", "schema.txt", "--constraints", "constraints.txt", "--format", "json"],
    ));
    assert_eq!(v["class"], serde_json::json!("fds-only"));
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let t = address_book();
    write(t.path(), "q.txt", "exists s: Person(n, c, s)\n");
    let invocations: Vec<Vec<&str>> = vec![
        with_common(&["check"], &["--candidate", "repair1", "--format", "json"]),
        with_common(&["cqa"], &["--query", "q.txt", "--format", "json"]),
        with_common(&["repairs", "enumerate"], &["--format", "json"]),
        with_common(&["repairs", "sample"], &["--seed", "42"]),
        with_common(&["hypergraph"], &["--format", "json"]),
        vec!["classify", "--schema", "schema.txt", "--constraints", "constraints.txt"],
    ];
    for args in invocations {
        let first = ok(t.path(), &args);
        for _ in 0..2 {
            assert_eq!(ok(t.path(), &args), first, "args {args:?}");
        }
    }
    // Generated bundles are byte-identical too, file by file.
    let gen_args =
        ["generate", "two-key", "--vertices", "3", "--edge", "0 1", "--edge", "1 2"];
    let mut snapshots: Vec<Vec<(PathBuf, Vec<u8>)>> = Vec::new();
    for dir in ["g1", "g2"] {
        let mut args = gen_args.to_vec();
        args.extend_from_slice(&["--out-dir", dir]);
        ok(t.path(), &args);
        let root = t.path().join(dir);
        let mut files = Vec::new();
        collect_files(&root, &root, &mut files);
        files.sort();
        snapshots.push(
            files
                .into_iter()
                .map(|rel| {
                    let bytes = std::fs::read(root.join(&rel)).unwrap();
                    (rel, bytes)
                })
                .collect(),
        );
    }
    assert_eq!(snapshots[0], snapshots[1], "generate must be deterministic");
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) {
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            collect_files(root, &path, out);
        } else {
            out.push(path.strip_prefix(root).unwrap().to_path_buf());
        }
    }
}

#[test]
fn help_exits_zero() {
    let t = TempDir::new().unwrap();
    let r = run(t.path(), &["--help"]);
    assert_eq!(r.code, 0);
    assert!(r.stdout.contains("check"), "{}", r.stdout);
    let r = run(t.path(), &["repairs", "--help"]);
    assert_eq!(r.code, 0);
}
