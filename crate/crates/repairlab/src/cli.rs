//! Command-line interface: batch repair checking, consistent query
//! answering, repair sampling and enumeration, conflict-hypergraph dumps,
//! problem-instance generators, and constraint classification.
//!
//! # Exit codes
//!
//! The exit code reports whether the *computation* succeeded, never what the
//! verdict was — pipelines must be able to tell "the candidate is not a
//! repair" (exit 0, `ok: false` in the output) from "the check could not be
//! run":
//!
//! * `0` — computed; the verdict, answer set, or listing is in the output;
//! * `1` — runtime failure (for example an instance over the oracle cap);
//! * `2` — usage error (unknown flags, missing arguments, bad generator
//!   parameters);
//! * `3` — the constraint class is outside what the requested engine is
//!   sound for;
//! * `4` — input could not be read or parsed (messages carry
//!   `file:line:col` positions).
//!
//! # Engine selection
//!
//! `--engine auto` (the default) picks the engine from the constraint
//! classification and the query shape, and the output carries a
//! `selection:` line saying which guarantee justified the choice. The
//! explicit selectors pin one engine family and fail with exit 3 when the
//! classification does not match:
//!
//! * `denial` — the conflict-hypergraph engines (classes `denial-only` and
//!   `fds-only`);
//! * `single-key` — the foreign-key-cascade engines (class `single-key-fk`);
//! * `acyclic` — the stage-wise repair checker (class `acyclic-fd-ind`;
//!   repair checking only — consistent answering for that class needs the
//!   oracle);
//! * `oracle` — bounded exhaustive search, exact for every class but
//!   exponential, refused above the fact cap (`--oracle-cap`, or the
//!   `REPAIRLAB_ORACLE_CAP` environment variable, default 18).
//!
//! # Determinism
//!
//! Identical invocations with identical inputs and seeds produce
//! byte-identical output: instances render in canonical fact order, JSON
//! objects in sorted key order, and all randomness is seeded (`--seed`,
//! default 0). JSON output validates against the schema shipped in
//! `docs/cli-output.schema.json`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cqa::{
    self, CqaError, CqaVerdict, DispatchOptions, cqa_dispatch,
};
use crate::hypergraph::ConflictHypergraph;
use crate::model::{
    Classification, ConjunctiveQuery, ConstraintSet, Instance, ModelError, Query, Schema, Value,
    all_as_denials, classify, find_violation, satisfies,
};
use crate::oracle::{self, OracleError, enumerate_repairs};
use crate::reductions::{
    CnfFormula, Qbf2, ReductionError, ReductionOutput, UndirectedGraph, gen_acyclic_cqa,
    gen_exponential_family, gen_fd_ind_repaircheck, gen_keyfk_repaircheck, gen_monotone3sat,
    gen_one_denial, gen_qbf_cqa, gen_spoiled_free, gen_two_key,
};
use crate::repair::{
    RepairCertificate, RepairError, RepairVerdict, check_acyclic, check_repair, check_single_key,
    sample_repair,
};
use crate::textio::{
    TextError, parse_constraints, parse_query, parse_schema, read_instance, serialize_constraints,
    serialize_query, serialize_schema, write_instance_csv,
};

/// Engine label for the exhaustive repair-check path (the consistent-answer
/// counterpart is [`cqa::ENGINE_ORACLE`]).
const ENGINE_ORACLE_CHECK: &str = "exhaustive maximality search";

const EXIT_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_UNSUPPORTED: u8 = 3;
const EXIT_INPUT: u8 = 4;

// ---------------------------------------------------------------------------
// Argument grammar
// ---------------------------------------------------------------------------

#[derive(Parser)]
#[command(
    name = "repairlab",
    version,
    about = "Repair checking and consistent query answering over relational instances",
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check whether a candidate subinstance is a repair of the data
    Check(CheckArgs),
    /// Decide a closed query in every repair, or list consistent answers of
    /// an open one
    Cqa(CqaArgs),
    /// Sample one repair, or enumerate the whole repair set
    Repairs(RepairsArgs),
    /// Dump the conflict hypergraph of the data under denial-form constraints
    Hypergraph(HypergraphArgs),
    /// Write a generated problem bundle (schema, constraints, data, query)
    Generate(GenerateArgs),
    /// Print the constraint classification that drives engine selection
    Classify(ClassifyArgs),
}

/// The three input files every instance-level command starts from.
#[derive(Args)]
struct InputArgs {
    /// Schema file: relation declarations and key declarations
    #[arg(long, value_name = "FILE")]
    schema: PathBuf,
    /// Constraint file: functional dependencies, inclusion dependencies,
    /// denial constraints
    #[arg(long, value_name = "FILE")]
    constraints: PathBuf,
    /// Instance: a directory of <Relation>.csv files or a .json bundle
    #[arg(long, value_name = "PATH")]
    data: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    /// Human-readable lines (DOT for the hypergraph command)
    #[value(name = "text")]
    Text,
    /// One pretty-printed JSON object
    #[value(name = "json")]
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EngineChoice {
    /// Pick the engine from the constraint classification and query shape
    #[value(name = "auto")]
    Auto,
    /// Conflict-hypergraph engines (classes denial-only, fds-only)
    #[value(name = "denial")]
    Denial,
    /// Stage-wise repair checker (class acyclic-fd-ind)
    #[value(name = "acyclic")]
    Acyclic,
    /// Foreign-key-cascade engines (class single-key-fk)
    #[value(name = "single-key")]
    SingleKey,
    /// Bounded exhaustive search (any class, capped instance size)
    #[value(name = "oracle")]
    Oracle,
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Candidate subinstance to check (same formats as --data)
    #[arg(long, value_name = "PATH")]
    candidate: PathBuf,
    #[arg(long, value_enum, default_value_t = EngineChoice::Auto)]
    engine: EngineChoice,
    /// Fact cap for the exhaustive engine [default: REPAIRLAB_ORACLE_CAP or 18]
    #[arg(long, value_name = "N")]
    oracle_cap: Option<usize>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    format: OutputFormat,
}

#[derive(Args)]
struct CqaArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Query file: a ground formula or a conjunctive query
    #[arg(long, value_name = "FILE")]
    query: PathBuf,
    #[arg(long, value_enum, default_value_t = EngineChoice::Auto)]
    engine: EngineChoice,
    /// Fact cap for the exhaustive engine [default: REPAIRLAB_ORACLE_CAP or 18]
    #[arg(long, value_name = "N")]
    oracle_cap: Option<usize>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    format: OutputFormat,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RepairsMode {
    /// One seeded repair
    #[value(name = "sample")]
    Sample,
    /// All repairs, up to --limit, with an exhaustiveness flag
    #[value(name = "enumerate")]
    Enumerate,
}

#[derive(Args)]
struct RepairsArgs {
    #[arg(value_enum)]
    mode: RepairsMode,
    #[command(flatten)]
    input: InputArgs,
    /// Seed for sample mode (byte-identical output per seed)
    #[arg(long, default_value_t = 0, value_name = "N")]
    seed: u64,
    /// Most repairs to emit in enumerate mode
    #[arg(long, default_value_t = 128, value_name = "N")]
    limit: usize,
    #[arg(long, value_enum, default_value_t = EngineChoice::Auto)]
    engine: EngineChoice,
    /// Fact cap for the exhaustive engine [default: REPAIRLAB_ORACLE_CAP or 18]
    #[arg(long, value_name = "N")]
    oracle_cap: Option<usize>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    format: OutputFormat,
}

#[derive(Args)]
struct HypergraphArgs {
    #[command(flatten)]
    input: InputArgs,
    /// text emits Graphviz DOT; json emits {vertices, edges}
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    format: OutputFormat,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Family {
    /// CNF with all-positive/all-negative clauses vs one FD; satisfiable iff
    /// the bundled query is not consistently true
    #[value(name = "monotone3sat")]
    Monotone3Sat,
    /// Any CNF vs one denial constraint; satisfiable iff the bundled query
    /// is not consistently true
    #[value(name = "one-denial")]
    OneDenial,
    /// Any nonempty CNF vs one FD + one cyclic IND; the empty instance is a
    /// repair iff the formula is unsatisfiable
    #[value(name = "fd-ind")]
    FdInd,
    /// Restricted CNF (≤3 literals/clause, ≤3 occurrences/variable, #clauses
    /// = #variables) vs keys + foreign keys; empty-repair iff unsatisfiable
    #[value(name = "keyfk")]
    KeyFk,
    /// Forall-exists QBF vs one FD + one IND; true iff the bundled query is
    /// consistently true
    #[value(name = "qbf")]
    Qbf,
    /// Graph vs two keys on one relation; 3-colorable iff the bundled query
    /// is not consistently true
    #[value(name = "two-key")]
    TwoKey,
    /// Graph vs acyclic keys + foreign keys; 3-colorable iff the bundled
    /// query is not consistently true
    #[value(name = "acyclic")]
    Acyclic,
    /// 2n facts with 2^n repairs under one FD
    #[value(name = "exponential")]
    Exponential,
}

#[derive(Args)]
struct GenerateArgs {
    /// Problem family to generate
    #[arg(value_enum)]
    family: Family,
    /// Directory the bundle is written into (created if missing)
    #[arg(long, value_name = "DIR")]
    out_dir: PathBuf,
    /// Number of propositional variables (CNF families)
    #[arg(long, value_name = "N")]
    vars: Option<usize>,
    /// One clause as space-separated signed literals, e.g. "1 -2 3";
    /// repeat per clause
    #[arg(long, value_name = "LITS", allow_hyphen_values = true)]
    clause: Vec<String>,
    /// Count of leading universally quantified variables (qbf family)
    #[arg(long, value_name = "K")]
    forall: Option<usize>,
    /// Count of trailing existentially quantified variables (qbf family)
    #[arg(long, value_name = "L")]
    exists: Option<usize>,
    /// Number of graph vertices (graph families)
    #[arg(long, value_name = "N")]
    vertices: Option<usize>,
    /// One undirected edge "u v", 0-based, loops allowed; repeat per edge
    #[arg(long, value_name = "U V")]
    edge: Vec<String>,
    /// Number of fact pairs (exponential family)
    #[arg(long, value_name = "N")]
    n: Option<usize>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    format: OutputFormat,
}

#[derive(Args)]
struct ClassifyArgs {
    /// Schema file: relation declarations and key declarations
    #[arg(long, value_name = "FILE")]
    schema: PathBuf,
    /// Constraint file: functional dependencies, inclusion dependencies,
    /// denial constraints
    #[arg(long, value_name = "FILE")]
    constraints: PathBuf,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    format: OutputFormat,
}

// ---------------------------------------------------------------------------
// Errors and exit-code mapping
// ---------------------------------------------------------------------------

/// A failed run, carrying the exit code it maps to.
enum CliError {
    /// Bad arguments or generator parameters → exit 2.
    Usage(String),
    /// Constraint class outside the requested engine's soundness → exit 3.
    Unsupported(String),
    /// Input unreadable or unparsable → exit 4.
    Input(TextError),
    /// Any other runtime failure (oracle cap, internal validation) → exit 1.
    Failure(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Unsupported(_) => EXIT_UNSUPPORTED,
            CliError::Input(_) => EXIT_INPUT,
            CliError::Failure(_) => EXIT_FAILURE,
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Usage(m) | CliError::Unsupported(m) | CliError::Failure(m) => m.clone(),
            CliError::Input(e) => e.to_string(),
        }
    }
}

impl From<TextError> for CliError {
    fn from(e: TextError) -> Self {
        CliError::Input(e)
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Failure(e.to_string())
    }
}

impl From<RepairError> for CliError {
    fn from(e: RepairError) -> Self {
        match e {
            RepairError::WrongClass { .. } | RepairError::UnsupportedClass(_) => {
                CliError::Unsupported(e.to_string())
            }
            RepairError::Model(_) => CliError::Failure(e.to_string()),
        }
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::OverCap { .. } => CliError::Failure(format!(
                "{e}; raise --oracle-cap (or REPAIRLAB_ORACLE_CAP) to search larger instances"
            )),
            OracleError::Model(_) => CliError::Failure(e.to_string()),
        }
    }
}

impl From<CqaError> for CliError {
    fn from(e: CqaError) -> Self {
        match e {
            CqaError::Unsupported { .. } => CliError::Unsupported(e.to_string()),
            CqaError::Repair(inner) => inner.into(),
            CqaError::Oracle(inner) => inner.into(),
            CqaError::Model(_)
            | CqaError::RepeatedRelation(_)
            | CqaError::SharedVariable(_)
            | CqaError::MultipleFds { .. } => CliError::Failure(e.to_string()),
        }
    }
}

impl From<ReductionError> for CliError {
    fn from(e: ReductionError) -> Self {
        CliError::Usage(format!("bad generator parameters: {e}"))
    }
}

impl From<crate::hypergraph::HypergraphError> for CliError {
    fn from(e: crate::hypergraph::HypergraphError) -> Self {
        CliError::Failure(e.to_string())
    }
}

/// Exit-3 guard for explicit engine selectors.
fn require_class(
    found: Classification,
    allowed: &[Classification],
    engine: &str,
) -> Result<(), CliError> {
    if allowed.contains(&found) {
        return Ok(());
    }
    let list = allowed
        .iter()
        .map(|c| format!("`{c}`"))
        .collect::<Vec<_>>()
        .join(" or ");
    Err(CliError::Unsupported(format!(
        "the {engine} engine requires constraint class {list}; this input classifies as `{found}`"
    )))
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

/// Parses `std::env::args`, runs one command, and maps the outcome to an
/// exit code. All results go to stdout; all errors go to stderr.
pub fn run() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help and --version land here too; they print to stdout and
            // exit 0, while real usage errors go to stderr and exit 2.
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(output) => {
            print!("{output}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

fn dispatch(command: Command) -> Result<String, CliError> {
    match command {
        Command::Check(args) => cmd_check(args),
        Command::Cqa(args) => cmd_cqa(args),
        Command::Repairs(args) => cmd_repairs(args),
        Command::Hypergraph(args) => cmd_hypergraph(args),
        Command::Generate(args) => cmd_generate(args),
        Command::Classify(args) => cmd_classify(args),
    }
}

/// Loads and cross-validates the three standard inputs.
fn load_inputs(input: &InputArgs) -> Result<(Schema, ConstraintSet, Instance), CliError> {
    let (schema, ics) = load_schema_constraints(&input.schema, &input.constraints)?;
    let data = read_instance(&input.data, &schema)?;
    Ok((schema, ics, data))
}

fn load_schema_constraints(
    schema_path: &Path,
    constraints_path: &Path,
) -> Result<(Schema, ConstraintSet), CliError> {
    let schema_text = read_text(schema_path)?;
    let schema = parse_schema(&schema_text, &schema_path.display().to_string())?;
    let constraints_text = read_text(constraints_path)?;
    let ics = parse_constraints(
        &constraints_text,
        &schema,
        &constraints_path.display().to_string(),
    )?;
    Ok((schema, ics))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| {
        CliError::Input(TextError::Io {
            file: path.display().to_string(),
            source: e,
        })
    })
}

// ---------------------------------------------------------------------------
// check
// ---------------------------------------------------------------------------

fn cmd_check(args: CheckArgs) -> Result<String, CliError> {
    let (schema, ics, data) = load_inputs(&args.input)?;
    let candidate = read_instance(&args.candidate, &schema)?;
    candidate.validate(&schema)?;
    let class = classify(&schema, &ics);
    let cap = args.oracle_cap.unwrap_or_else(oracle::default_cap);

    let (verdict, engine) = match args.engine {
        EngineChoice::Auto => {
            if class == Classification::General {
                (
                    oracle_check_verdict(&schema, &data, &candidate, &ics, cap)?,
                    ENGINE_ORACLE_CHECK,
                )
            } else {
                check_repair(&schema, &data, &candidate, &ics)?
            }
        }
        EngineChoice::Denial => {
            require_class(
                class,
                &[Classification::DenialOnly, Classification::FdsOnly],
                "conflict-hypergraph",
            )?;
            check_repair(&schema, &data, &candidate, &ics)?
        }
        EngineChoice::SingleKey => {
            require_class(class, &[Classification::SingleKeyFk], "key-cascade")?;
            (
                check_single_key(&schema, &data, &candidate, &ics)?,
                "key-cascade then functional-dependency check",
            )
        }
        EngineChoice::Acyclic => {
            require_class(class, &[Classification::AcyclicFdInd], "stage-wise")?;
            (
                check_acyclic(&schema, &data, &candidate, &ics)?,
                "stage-wise maximality check",
            )
        }
        EngineChoice::Oracle => (
            oracle_check_verdict(&schema, &data, &candidate, &ics, cap)?,
            ENGINE_ORACLE_CHECK,
        ),
    };
    let selection = matches!(args.engine, EngineChoice::Auto)
        .then(|| engine_guarantee(engine, class));

    match args.format {
        OutputFormat::Text => {
            let mut out = String::new();
            out.push_str(&format!("class: {class}\n"));
            out.push_str(&format!("engine: {engine}\n"));
            if let Some(s) = &selection {
                out.push_str(&format!("selection: auto — {s}\n"));
            }
            out.push_str(&format!("ok: {}\n", verdict.ok));
            if !verdict.ok {
                render_certificate_text(&mut out, verdict.certificate.as_ref());
            }
            Ok(out)
        }
        OutputFormat::Json => {
            let mut obj = serde_json::json!({
                "command": "check",
                "class": class,
                "engine": engine,
                "verdict": serde_json::to_value(&verdict).expect("verdict serializes"),
            });
            if let Some(s) = selection {
                obj["selection"] = serde_json::Value::String(s);
            }
            Ok(render_json(&obj))
        }
    }
}

/// The exhaustive repair check, reporting the same certificate shapes as the
/// polynomial engines. A consistent-but-not-maximal candidate may have no
/// single addable fact when inclusion dependencies form cycles; the verdict
/// then carries no certificate.
fn oracle_check_verdict(
    schema: &Schema,
    data: &Instance,
    candidate: &Instance,
    ics: &ConstraintSet,
    cap: usize,
) -> Result<RepairVerdict, CliError> {
    if !candidate.is_subset_of(data) {
        return Ok(RepairVerdict {
            ok: false,
            certificate: Some(RepairCertificate::NotSubset {
                facts: candidate.difference(data).cloned().collect(),
            }),
        });
    }
    if let Some(violation) = find_violation(schema, candidate, ics)? {
        let description = ics.describe(&violation.constraint);
        return Ok(RepairVerdict {
            ok: false,
            certificate: Some(RepairCertificate::Violation {
                constraint: violation.constraint,
                description,
                facts: violation.facts,
            }),
        });
    }
    if oracle::oracle_repair_check(schema, data, candidate, ics, cap)? {
        return Ok(RepairVerdict {
            ok: true,
            certificate: None,
        });
    }
    let mut addable = None;
    for fact in data.difference(candidate) {
        let mut augmented = candidate.clone();
        augmented.insert(fact.clone());
        if satisfies(schema, &augmented, ics)? {
            addable = Some(fact.clone());
            break;
        }
    }
    Ok(RepairVerdict {
        ok: false,
        certificate: addable.map(|fact| RepairCertificate::Addable { fact, stage: None }),
    })
}

fn render_certificate_text(out: &mut String, certificate: Option<&RepairCertificate>) {
    match certificate {
        Some(RepairCertificate::NotSubset { facts }) => {
            out.push_str("reason: candidate contains facts outside the instance\n");
            push_fact_lines(out, facts.iter());
        }
        Some(RepairCertificate::Violation {
            description, facts, ..
        }) => {
            out.push_str(&format!("reason: candidate violates {description}\n"));
            push_fact_lines(out, facts.iter());
        }
        Some(RepairCertificate::Addable { fact, stage }) => {
            match stage {
                Some(stage) => out.push_str(&format!(
                    "reason: deleted fact can be added back consistently (stage {stage})\n"
                )),
                None => out.push_str("reason: deleted fact can be added back consistently\n"),
            }
            push_fact_lines(out, std::iter::once(fact));
        }
        None => {
            out.push_str(
                "reason: candidate is consistent but a larger consistent subinstance exists\n",
            );
        }
    }
}

// ---------------------------------------------------------------------------
// cqa
// ---------------------------------------------------------------------------

fn cmd_cqa(args: CqaArgs) -> Result<String, CliError> {
    let (schema, ics, data) = load_inputs(&args.input)?;
    let query_text = read_text(&args.query)?;
    let query = parse_query(&query_text, &schema, &args.query.display().to_string())?;
    let class = classify(&schema, &ics);
    let cap = args.oracle_cap.unwrap_or_else(oracle::default_cap);

    if query.is_closed() {
        let verdict = match args.engine {
            EngineChoice::Auto => cqa_dispatch(
                &schema,
                &data,
                &ics,
                &query,
                DispatchOptions {
                    oracle_fallback: true,
                    oracle_cap: cap,
                },
            )?,
            EngineChoice::Denial => {
                require_class(
                    class,
                    &[Classification::DenialOnly, Classification::FdsOnly],
                    "clause-witness/rewriting",
                )?;
                cqa_dispatch(&schema, &data, &ics, &query, no_fallback(cap))?
            }
            EngineChoice::SingleKey => {
                require_class(class, &[Classification::SingleKeyFk], "key-cascade")?;
                cqa_dispatch(&schema, &data, &ics, &query, no_fallback(cap))?
            }
            EngineChoice::Acyclic => {
                return Err(CliError::Unsupported(
                    "no stage-wise engine decides consistent answers (that is intractable for \
                     class `acyclic-fd-ind` in general); use --engine oracle or auto"
                        .into(),
                ));
            }
            EngineChoice::Oracle => oracle_closed(&schema, &data, &ics, &query, cap)?,
        };
        let selection = matches!(args.engine, EngineChoice::Auto)
            .then(|| engine_guarantee(verdict.engine, class));
        return Ok(render_cqa_closed(
            args.format,
            class,
            &query,
            &verdict,
            selection,
        ));
    }

    // Open query: candidate tuples come from the full instance (sound — the
    // query is negation-free and every repair is a subinstance), then each
    // grounding is decided like a closed query.
    let Query::Conjunctive(cq) = &query else {
        unreachable!("ground queries are closed");
    };
    let (answers, engines) = match args.engine {
        EngineChoice::Auto => open_answers(
            &schema,
            &data,
            &ics,
            cq,
            DispatchOptions {
                oracle_fallback: true,
                oracle_cap: cap,
            },
        )?,
        EngineChoice::Denial => {
            require_class(
                class,
                &[Classification::DenialOnly, Classification::FdsOnly],
                "clause-witness/rewriting",
            )?;
            open_answers(&schema, &data, &ics, cq, no_fallback(cap))?
        }
        EngineChoice::SingleKey => {
            require_class(class, &[Classification::SingleKeyFk], "key-cascade")?;
            open_answers(&schema, &data, &ics, cq, no_fallback(cap))?
        }
        EngineChoice::Acyclic => {
            return Err(CliError::Unsupported(
                "no stage-wise engine decides consistent answers (that is intractable for \
                 class `acyclic-fd-ind` in general); use --engine oracle or auto"
                    .into(),
            ));
        }
        EngineChoice::Oracle => {
            let answers = oracle::oracle_consistent_answers(&schema, &data, &ics, cq, cap)?;
            let mut engines = BTreeSet::new();
            engines.insert(cqa::ENGINE_ORACLE);
            (answers, engines)
        }
    };
    Ok(render_cqa_open(args.format, class, cq, &answers, &engines))
}

fn no_fallback(cap: usize) -> DispatchOptions {
    DispatchOptions {
        oracle_fallback: false,
        oracle_cap: cap,
    }
}

/// The exhaustive closed-query path: enumerate every repair and stop at the
/// first falsifying one, which doubles as the witness.
fn oracle_closed(
    schema: &Schema,
    data: &Instance,
    ics: &ConstraintSet,
    query: &Query,
    cap: usize,
) -> Result<CqaVerdict, CliError> {
    query.validate(schema)?;
    let set = enumerate_repairs(schema, data, ics, cap)?;
    for repair in &set.repairs {
        if !query.holds(repair)? {
            return Ok(CqaVerdict {
                consistent: false,
                witness: Some(repair.clone()),
                engine: cqa::ENGINE_ORACLE,
            });
        }
    }
    Ok(CqaVerdict {
        consistent: true,
        witness: None,
        engine: cqa::ENGINE_ORACLE,
    })
}

/// Consistent answers of an open query, plus the set of engines the
/// per-tuple groundings dispatched to.
#[allow(clippy::type_complexity)]
fn open_answers(
    schema: &Schema,
    data: &Instance,
    ics: &ConstraintSet,
    cq: &ConjunctiveQuery,
    opts: DispatchOptions,
) -> Result<(BTreeSet<Vec<Value>>, BTreeSet<&'static str>), CliError> {
    cq.validate(schema)?;
    let mut answers = BTreeSet::new();
    let mut engines = BTreeSet::new();
    for tuple in cq.answers(data)? {
        let grounded = Query::Conjunctive(cq.ground(&tuple)?);
        let verdict = cqa_dispatch(schema, data, ics, &grounded, opts)?;
        engines.insert(verdict.engine);
        if verdict.consistent {
            answers.insert(tuple);
        }
    }
    Ok((answers, engines))
}

fn render_cqa_closed(
    format: OutputFormat,
    class: Classification,
    query: &Query,
    verdict: &CqaVerdict,
    selection: Option<String>,
) -> String {
    match format {
        OutputFormat::Text => {
            let mut out = String::new();
            out.push_str(&format!("class: {class}\n"));
            out.push_str(&format!("engine: {}\n", verdict.engine));
            if let Some(s) = &selection {
                out.push_str(&format!("selection: auto — {s}\n"));
            }
            out.push_str(&format!("consistent: {}\n", verdict.consistent));
            if !verdict.consistent {
                match &verdict.witness {
                    Some(witness) => {
                        out.push_str(&format!("witness ({} facts):\n", witness.len()));
                        push_fact_lines(&mut out, witness.iter());
                    }
                    None => out.push_str(
                        "witness: none (this engine decides without constructing a repair)\n",
                    ),
                }
            }
            out
        }
        OutputFormat::Json => {
            let mut obj = serde_json::json!({
                "command": "cqa",
                "class": class,
                "engine": verdict.engine,
                "query": serialize_query(query),
                "verdict": { "consistent": verdict.consistent },
            });
            if let Some(witness) = &verdict.witness {
                obj["verdict"]["witness"] = instance_value(witness);
            }
            if let Some(s) = selection {
                obj["selection"] = serde_json::Value::String(s);
            }
            render_json(&obj)
        }
    }
}

fn render_cqa_open(
    format: OutputFormat,
    class: Classification,
    cq: &ConjunctiveQuery,
    answers: &BTreeSet<Vec<Value>>,
    engines: &BTreeSet<&'static str>,
) -> String {
    let free: Vec<&str> = cq.free.iter().map(|v| v.name.as_str()).collect();
    match format {
        OutputFormat::Text => {
            let mut out = String::new();
            out.push_str(&format!("class: {class}\n"));
            let engine_list = if engines.is_empty() {
                "none (no candidate tuples)".to_string()
            } else {
                engines.iter().copied().collect::<Vec<_>>().join("; ")
            };
            out.push_str(&format!("engines: {engine_list}\n"));
            out.push_str(&format!("free: {}\n", free.join(", ")));
            out.push_str(&format!("answers ({}):\n", answers.len()));
            for tuple in answers {
                let row = tuple
                    .iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join(", ");
                out.push_str(&format!("  {row}\n"));
            }
            out
        }
        OutputFormat::Json => {
            let obj = serde_json::json!({
                "command": "cqa",
                "class": class,
                "engines": engines.iter().copied().collect::<Vec<_>>(),
                "query": serialize_query(&Query::Conjunctive(cq.clone())),
                "free": free,
                "answers": answers.iter().collect::<Vec<_>>(),
            });
            render_json(&obj)
        }
    }
}

// ---------------------------------------------------------------------------
// repairs
// ---------------------------------------------------------------------------

fn cmd_repairs(args: RepairsArgs) -> Result<String, CliError> {
    let (schema, ics, data) = load_inputs(&args.input)?;
    let class = classify(&schema, &ics);
    let cap = args.oracle_cap.unwrap_or_else(oracle::default_cap);

    match args.mode {
        RepairsMode::Sample => {
            let repair = match args.engine {
                EngineChoice::Auto => {
                    if class == Classification::General {
                        oracle_sample(&schema, &data, &ics, cap, args.seed)?
                    } else {
                        sample_repair(&schema, &data, &ics, args.seed)?
                    }
                }
                EngineChoice::Denial => {
                    require_class(
                        class,
                        &[Classification::DenialOnly, Classification::FdsOnly],
                        "conflict-hypergraph",
                    )?;
                    sample_repair(&schema, &data, &ics, args.seed)?
                }
                EngineChoice::SingleKey => {
                    require_class(class, &[Classification::SingleKeyFk], "key-cascade")?;
                    sample_repair(&schema, &data, &ics, args.seed)?
                }
                EngineChoice::Acyclic => {
                    require_class(class, &[Classification::AcyclicFdInd], "stage-wise")?;
                    sample_repair(&schema, &data, &ics, args.seed)?
                }
                EngineChoice::Oracle => oracle_sample(&schema, &data, &ics, cap, args.seed)?,
            };
            match args.format {
                OutputFormat::Text => {
                    let mut out = String::new();
                    out.push_str(&format!("class: {class}\n"));
                    out.push_str("mode: sample\n");
                    out.push_str(&format!("seed: {}\n", args.seed));
                    out.push_str(&format!("repair ({} facts):\n", repair.len()));
                    push_fact_lines(&mut out, repair.iter());
                    Ok(out)
                }
                OutputFormat::Json => {
                    let obj = serde_json::json!({
                        "command": "repairs",
                        "mode": "sample",
                        "class": class,
                        "seed": args.seed,
                        "repair": instance_value(&repair),
                    });
                    Ok(render_json(&obj))
                }
            }
        }
        RepairsMode::Enumerate => {
            if !matches!(args.engine, EngineChoice::Auto | EngineChoice::Oracle) {
                return Err(CliError::Usage(
                    "enumerate mode always runs the exhaustive enumerator; \
                     --engine applies to sample mode"
                        .into(),
                ));
            }
            let set = enumerate_repairs(&schema, &data, &ics, cap)?;
            let total = set.repairs.len();
            let emitted: Vec<&Instance> = set.repairs.iter().take(args.limit).collect();
            let exhaustive = set.exhaustive && emitted.len() == total;
            match args.format {
                OutputFormat::Text => {
                    let mut out = String::new();
                    out.push_str(&format!("class: {class}\n"));
                    out.push_str("mode: enumerate\n");
                    out.push_str(&format!("count: {} of {total}\n", emitted.len()));
                    out.push_str(&format!("exhaustive: {exhaustive}\n"));
                    for (i, repair) in emitted.iter().enumerate() {
                        out.push_str(&format!(
                            "repair {} ({} facts):\n",
                            i + 1,
                            repair.len()
                        ));
                        push_fact_lines(&mut out, repair.iter());
                    }
                    Ok(out)
                }
                OutputFormat::Json => {
                    let obj = serde_json::json!({
                        "command": "repairs",
                        "mode": "enumerate",
                        "class": class,
                        "count": emitted.len(),
                        "total": total,
                        "limit": args.limit,
                        "exhaustive": exhaustive,
                        "repairs": emitted.iter().map(|r| instance_value(r)).collect::<Vec<_>>(),
                    });
                    Ok(render_json(&obj))
                }
            }
        }
    }
}

/// Seeded uniform draw from the exhaustively enumerated repair set — the
/// sampler of last resort for the general class, and the `--engine oracle`
/// sampler everywhere else.
fn oracle_sample(
    schema: &Schema,
    data: &Instance,
    ics: &ConstraintSet,
    cap: usize,
    seed: u64,
) -> Result<Instance, CliError> {
    let set = enumerate_repairs(schema, data, ics, cap)?;
    if set.repairs.is_empty() {
        return Err(CliError::Failure(
            "the instance has no repairs (some constraint is violated by the empty \
             subinstance)"
                .into(),
        ));
    }
    let index = ChaCha8Rng::seed_from_u64(seed).gen_range(0..set.repairs.len());
    Ok(set.repairs[index].clone())
}

// ---------------------------------------------------------------------------
// hypergraph
// ---------------------------------------------------------------------------

fn cmd_hypergraph(args: HypergraphArgs) -> Result<String, CliError> {
    let (schema, ics, data) = load_inputs(&args.input)?;
    let class = classify(&schema, &ics);
    require_class(
        class,
        &[Classification::DenialOnly, Classification::FdsOnly],
        "conflict-hypergraph",
    )?;
    let (denials, _) = all_as_denials(&schema, &ics)?;
    let hg = ConflictHypergraph::build(&schema, &data, &denials)?;
    match args.format {
        OutputFormat::Text => Ok(hg.to_dot()),
        OutputFormat::Json => {
            let mut obj = hg.to_json();
            obj["command"] = "hypergraph".into();
            obj["class"] = serde_json::to_value(class).expect("classification serializes");
            obj["vertex_count"] = hg.vertex_count().into();
            obj["edge_count"] = hg.edge_count().into();
            Ok(render_json(&obj))
        }
    }
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

fn cmd_generate(args: GenerateArgs) -> Result<String, CliError> {
    let family = args.family;
    check_family_params(&args)?;
    let output = build_family(&args)?;
    let files = write_bundle(&output, &args.out_dir)?;
    let family_name = family_name(family);
    match args.format {
        OutputFormat::Text => {
            let mut out = String::new();
            out.push_str(&format!("family: {family_name}\n"));
            out.push_str(&format!("note: {}\n", output.note));
            out.push_str("wrote:\n");
            for file in &files {
                out.push_str(&format!("  {}\n", file.display()));
            }
            Ok(out)
        }
        OutputFormat::Json => {
            let obj = serde_json::json!({
                "command": "generate",
                "family": family_name,
                "note": output.note,
                "files": files.iter().map(|f| f.display().to_string()).collect::<Vec<_>>(),
            });
            Ok(render_json(&obj))
        }
    }
}

fn family_name(family: Family) -> &'static str {
    match family {
        Family::Monotone3Sat => "monotone3sat",
        Family::OneDenial => "one-denial",
        Family::FdInd => "fd-ind",
        Family::KeyFk => "keyfk",
        Family::Qbf => "qbf",
        Family::TwoKey => "two-key",
        Family::Acyclic => "acyclic",
        Family::Exponential => "exponential",
    }
}

/// Rejects parameters that the chosen family does not read — a silently
/// ignored `--vars` on a graph family is a bug in the invocation.
fn check_family_params(args: &GenerateArgs) -> Result<(), CliError> {
    let cnf = matches!(
        args.family,
        Family::Monotone3Sat | Family::OneDenial | Family::FdInd | Family::KeyFk | Family::Qbf
    );
    let qbf = matches!(args.family, Family::Qbf);
    let graph = matches!(args.family, Family::TwoKey | Family::Acyclic);
    let chain = matches!(args.family, Family::Exponential);
    let name = family_name(args.family);
    let reject = |flag: &str| -> Result<(), CliError> {
        Err(CliError::Usage(format!(
            "family `{name}` does not take {flag}"
        )))
    };
    if !cnf && args.vars.is_some() {
        reject("--vars")?;
    }
    if !cnf && !args.clause.is_empty() {
        reject("--clause")?;
    }
    if !qbf && args.forall.is_some() {
        reject("--forall")?;
    }
    if !qbf && args.exists.is_some() {
        reject("--exists")?;
    }
    if !graph && args.vertices.is_some() {
        reject("--vertices")?;
    }
    if !graph && !args.edge.is_empty() {
        reject("--edge")?;
    }
    if !chain && args.n.is_some() {
        reject("--n")?;
    }
    Ok(())
}

fn build_family(args: &GenerateArgs) -> Result<ReductionOutput, CliError> {
    let name = family_name(args.family);
    match args.family {
        Family::Monotone3Sat => Ok(gen_monotone3sat(&parse_cnf(args, name)?)?),
        Family::OneDenial => Ok(gen_one_denial(&parse_cnf(args, name)?)),
        Family::FdInd => Ok(gen_fd_ind_repaircheck(&parse_cnf(args, name)?)?),
        Family::KeyFk => Ok(gen_keyfk_repaircheck(&parse_cnf(args, name)?)?),
        Family::Qbf => {
            let universals = require_param(args.forall, "--forall", name)?;
            let existentials = require_param(args.exists, "--exists", name)?;
            let vars = universals + existentials;
            if args.vars.is_some_and(|v| v != vars) {
                return Err(CliError::Usage(format!(
                    "family `qbf` derives --vars from --forall + --exists = {vars}; \
                     omit --vars or pass that value"
                )));
            }
            let matrix = CnfFormula::new(vars, parse_clauses(&args.clause)?)?;
            Ok(gen_qbf_cqa(&Qbf2::new(universals, existentials, matrix)?)?)
        }
        Family::TwoKey => Ok(gen_two_key(&parse_graph(args, name)?)),
        Family::Acyclic => Ok(gen_acyclic_cqa(&gen_spoiled_free(&parse_graph(args, name)?))),
        Family::Exponential => Ok(gen_exponential_family(require_param(args.n, "--n", name)?)),
    }
}

fn require_param<T>(value: Option<T>, flag: &str, family: &str) -> Result<T, CliError> {
    value.ok_or_else(|| CliError::Usage(format!("family `{family}` needs {flag}")))
}

fn parse_cnf(args: &GenerateArgs, family: &str) -> Result<CnfFormula, CliError> {
    let vars = require_param(args.vars, "--vars", family)?;
    Ok(CnfFormula::new(vars, parse_clauses(&args.clause)?)?)
}

fn parse_clauses(raw: &[String]) -> Result<Vec<Vec<i32>>, CliError> {
    raw.iter()
        .map(|clause| {
            clause
                .split_whitespace()
                .map(|lit| {
                    lit.parse::<i32>().map_err(|_| {
                        CliError::Usage(format!(
                            "bad literal `{lit}` in --clause \"{clause}\"; expected signed \
                             integers like \"1 -2 3\""
                        ))
                    })
                })
                .collect()
        })
        .collect()
}

fn parse_graph(args: &GenerateArgs, family: &str) -> Result<UndirectedGraph, CliError> {
    let vertices = require_param(args.vertices, "--vertices", family)?;
    let mut graph = UndirectedGraph::new(vertices);
    for edge in &args.edge {
        let ends: Vec<&str> = edge.split_whitespace().collect();
        let [u, v] = ends[..] else {
            return Err(CliError::Usage(format!(
                "bad --edge \"{edge}\"; expected two 0-based endpoints like \"0 1\""
            )));
        };
        let parse = |s: &str| {
            s.parse::<usize>().map_err(|_| {
                CliError::Usage(format!("bad endpoint `{s}` in --edge \"{edge}\""))
            })
        };
        graph.add_edge(parse(u)?, parse(v)?)?;
    }
    Ok(graph)
}

/// Writes a bundle the instance-level commands read back directly:
/// `schema.txt`, `constraints.txt`, `data/<Relation>.csv`, `query.txt` (when
/// the family carries one), and `note.txt`. Returns the written paths,
/// sorted.
fn write_bundle(output: &ReductionOutput, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    fn io_err(path: &Path, e: std::io::Error) -> CliError {
        CliError::Input(TextError::Io {
            file: path.display().to_string(),
            source: e,
        })
    }
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut files = Vec::new();
    let mut write = |name: &str, text: String| -> Result<(), CliError> {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|e| io_err(&path, e))?;
        files.push(path);
        Ok(())
    };
    write("schema.txt", serialize_schema(&output.schema))?;
    write("constraints.txt", serialize_constraints(&output.constraints))?;
    if let Some(query) = &output.query {
        write("query.txt", format!("{}\n", serialize_query(query)))?;
    }
    write("note.txt", format!("{}\n", output.note))?;
    files.extend(write_instance_csv(
        &output.instance,
        &output.schema,
        &dir.join("data"),
    )?);
    files.sort();
    Ok(files)
}

// ---------------------------------------------------------------------------
// classify
// ---------------------------------------------------------------------------

fn cmd_classify(args: ClassifyArgs) -> Result<String, CliError> {
    let (schema, ics) = load_schema_constraints(&args.schema, &args.constraints)?;
    let class = classify(&schema, &ics);
    match args.format {
        OutputFormat::Text => Ok(format!("class: {class}\n")),
        OutputFormat::Json => {
            let obj = serde_json::json!({
                "command": "classify",
                "class": class,
            });
            Ok(render_json(&obj))
        }
    }
}

// ---------------------------------------------------------------------------
// Shared rendering
// ---------------------------------------------------------------------------

/// What makes each engine exact on the inputs it was chosen for — printed by
/// `--engine auto` so the choice is auditable.
fn engine_guarantee(engine: &str, class: Classification) -> String {
    match engine {
        "conflict-hypergraph maximality check" => {
            "under denial-form constraints the repairs are exactly the maximal independent \
             sets of the conflict hypergraph"
                .into()
        }
        "unique cascade repair" => {
            "inclusion dependencies alone admit exactly one repair — the greatest supported \
             subinstance"
                .into()
        }
        "key-cascade then functional-dependency check" => {
            "with one key per relation and foreign keys targeting those keys, cascading \
             unsupported references and then resolving key conflicts reaches exactly the \
             repairs"
                .into()
        }
        "stage-wise maximality check" => {
            "with an acyclic inclusion graph, a consistent candidate is a repair exactly when \
             no single deleted fact can be added back, checked stage by stage"
                .into()
        }
        e if e == cqa::ENGINE_DIRECT => {
            "the instance satisfies every constraint, so it is its own single repair and \
             plain evaluation is exact"
                .into()
        }
        e if e == cqa::ENGINE_CLAUSE => {
            "for ground sentences under denial-form constraints, some repair falsifies the \
             sentence exactly when a clause has a consistent falsifying witness that extends \
             to a repair"
                .into()
        }
        e if e == cqa::ENGINE_REWRITE => {
            "the query is in the safe join fragment, where a rewritten first-order sentence \
             evaluates consistent truth directly on the inconsistent instance"
                .into()
        }
        e if e == cqa::ENGINE_CASCADE_CLAUSE => {
            "the foreign-key cascade preserves the repair set, after which the ground-sentence \
             clause-witness search is exact"
                .into()
        }
        e if e == cqa::ENGINE_CASCADE_REWRITE => {
            "the foreign-key cascade preserves the repair set, after which the safe-fragment \
             rewriting is exact"
                .into()
        }
        e if e == cqa::ENGINE_UNIQUE => {
            "inclusion dependencies alone admit exactly one repair, so consistent truth is \
             plain truth on it"
                .into()
        }
        e if e == cqa::ENGINE_ORACLE || e == ENGINE_ORACLE_CHECK => format!(
            "no polynomial engine covers constraint class `{class}`; bounded exhaustive \
             search decides it exactly"
        ),
        other => format!("engine `{other}` selected for constraint class `{class}`"),
    }
}

fn push_fact_lines<'a>(out: &mut String, facts: impl Iterator<Item = &'a crate::model::Fact>) {
    for fact in facts {
        out.push_str(&format!("  {fact}\n"));
    }
}

/// `{relation: [[value, …], …]}` — the same shape `--data` accepts as JSON.
fn instance_value(inst: &Instance) -> serde_json::Value {
    let mut bundle: BTreeMap<&str, Vec<&Vec<Value>>> = BTreeMap::new();
    for fact in inst.iter() {
        bundle
            .entry(fact.relation.as_str())
            .or_default()
            .push(&fact.values);
    }
    serde_json::to_value(bundle).expect("instance serializes")
}

fn render_json(value: &serde_json::Value) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("JSON output serializes");
    text.push('\n');
    text
}
