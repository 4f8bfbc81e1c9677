//! The `mebn` command-line front end.
//!
//! Subcommands: `validate` (knowledge-base well-formedness), `simulate`
//! (scenario generation), `run` (the full suggest/construct/evaluate/prune
//! pipeline over a report file), `query` (one-shot query against a saved
//! situation) and `score` (estimate vs. truth metrics).
//!
//! Exit codes: 0 success, 1 validation violations, 2 I/O or parse error,
//! 3 inconsistent evidence, 4 iteration-guard breach.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::domain::{
    build_domain_kb, extract_estimate, generate_scenario, reports_from_csv, reports_to_csv,
    score_situation, PlatoonSuggestor, ScenarioConfig, SituationEstimate, VehicleReport,
};
use crate::hypman::{
    refine_cycle, situation_posteriors, AssocMode, AssociationPolicy, CyclePolicies,
    DefaultEnumerator, GatePolicy, HypError, InstanceInfo, SituationModel, Suggestor,
};
use crate::kb::{parse_kb, validate_mebn, HypothesisInstance, InstanceId, MebnKb};
use crate::ssn::{
    construct_ssn, evaluate_query, minimalize, node_id, ConstructionPolicy, Query,
};

const EXIT_OK: i32 = 0;
const EXIT_VIOLATIONS: i32 = 1;
const EXIT_IO: i32 = 2;
const EXIT_INCONSISTENT: i32 = 3;
const EXIT_GUARD: i32 = 4;

#[derive(Parser)]
#[command(
    name = "mebn",
    version,
    about = "Multi-entity Bayesian network situation-assessment engine"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check a knowledge-base file for well-formedness violations.
    Validate {
        /// Knowledge-base file (.mkb).
        kb: PathBuf,
    },
    /// Generate a ground-truth scenario and its report stream.
    Simulate {
        /// Output directory for reports.csv and truth.txt.
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 5)]
        companies: usize,
        /// Vehicle-type confusion rate in [0,1).
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
        /// Expected false reports per 80 true vehicles.
        #[arg(long, default_value_t = 14.0)]
        clutter: f64,
        /// Per-vehicle non-detection probability in [0,1).
        #[arg(long, default_value_t = 0.05)]
        miss: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Side length of the square operating area, meters.
        #[arg(long, default_value_t = 30_000.0)]
        field_extent: f64,
        /// Maximum platoon distance from its company position, meters.
        #[arg(long, default_value_t = 1_500.0)]
        platoon_spread: f64,
    },
    /// Run the full pipeline over a report file.
    Run(RunArgs),
    /// Evaluate queries against a saved situation.
    Query {
        /// Situation file written by `run`.
        #[arg(long)]
        situation: PathBuf,
        /// Knowledge-base file; defaults to the bundled battlefield KB.
        #[arg(long)]
        kb: Option<PathBuf>,
        /// Queries: `Type(id)`, `Type(?)`, or evidence `Type(id)=state`.
        #[arg(required = true)]
        queries: Vec<String>,
    },
    /// Score an estimated situation against ground truth.
    Score {
        #[arg(long)]
        estimate: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Company matching radius, meters.
        #[arg(long, default_value_t = 3_000.0)]
        match_radius: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AssocModeArg {
    Single,
    Multi,
}

#[derive(Debug, clap::Args)]
struct RunArgs {
    /// Report CSV produced by `simulate` (or hand-written).
    #[arg(long)]
    reports: PathBuf,
    /// Output directory for estimate.txt, situation.sit, posteriors.tsv
    /// and per-query TSVs.
    #[arg(long)]
    out_dir: PathBuf,
    /// Knowledge-base file; defaults to the bundled battlefield KB.
    #[arg(long)]
    kb: Option<PathBuf>,
    /// Reports per refine cycle; default is one cycle per distinct report
    /// time value.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Spatial gate radius for report clustering and candidate screening,
    /// meters.
    #[arg(long, default_value_t = 500.0)]
    gate_radius: f64,
    /// Cap on gated association candidates per slot.
    #[arg(long, default_value_t = 8)]
    max_candidates: usize,
    /// Association alternatives carried per slot.
    #[arg(long, value_enum, default_value_t = AssocModeArg::Single)]
    assoc_mode: AssocModeArg,
    /// Instances with star posterior at or above this are pruned.
    #[arg(long, default_value_t = 0.9)]
    prune_threshold: f64,
    /// Nominated associations with star posterior at or below this are
    /// committed.
    #[arg(long, default_value_t = 0.2)]
    accept_star_max: f64,
    /// Default prior mass on "*" for hypothesized roots, in (0,1).
    #[arg(long, default_value_t = 0.5)]
    star_prior: f64,
    /// Prior mass on "*" for association nodes, in (0,1).
    #[arg(long, default_value_t = 0.1)]
    assoc_star_prior: f64,
    /// Enable lazy expansion with this relevance threshold, in (0,1).
    #[arg(long)]
    lazy_expansion: Option<f64>,
    /// Per-batch redetection probability of a live instance.
    #[arg(long, default_value_t = 0.5)]
    redetect_prob: f64,
    /// Merge radius for nominated parent entities, meters.
    #[arg(long, default_value_t = 3_500.0)]
    parent_merge: f64,
    /// Iteration guard per refine cycle.
    #[arg(long, default_value_t = 5)]
    max_iterations: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Queries evaluated on the final situation, written as query_<n>.tsv.
    #[arg(long)]
    query: Vec<String>,
}

/// Entry point; returns the process exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // --help/--version print and exit 0; usage errors are parse
            // errors (exit 2)
            let code = if e.exit_code() == 0 { 0 } else { EXIT_IO };
            let _ = e.print();
            return code;
        }
    };
    match cli.cmd {
        Cmd::Validate { kb } => cmd_validate(&kb),
        Cmd::Simulate {
            out_dir,
            companies,
            noise,
            clutter,
            miss,
            seed,
            field_extent,
            platoon_spread,
        } => cmd_simulate(&out_dir, ScenarioConfig {
            n_companies: companies,
            noise,
            clutter_rate: clutter,
            miss_rate: miss,
            seed,
            field_extent_m: field_extent,
            platoon_spread_m: platoon_spread,
        }),
        Cmd::Run(args) => cmd_run(&args),
        Cmd::Query { situation, kb, queries } => cmd_query(&situation, kb.as_deref(), &queries),
        Cmd::Score { estimate, truth, match_radius } => {
            cmd_score(&estimate, &truth, match_radius)
        }
    }
}

fn read_file(path: &Path) -> Result<String, i32> {
    fs::read_to_string(path).map_err(|e| {
        eprintln!("error: cannot read {}: {e}", path.display());
        EXIT_IO
    })
}

fn write_file(path: &Path, content: &str) -> Result<(), i32> {
    fs::write(path, content).map_err(|e| {
        eprintln!("error: cannot write {}: {e}", path.display());
        EXIT_IO
    })
}

fn load_kb(path: Option<&Path>) -> Result<MebnKb, i32> {
    match path {
        None => Ok(build_domain_kb()),
        Some(p) => {
            let text = read_file(p)?;
            parse_kb(&text).map_err(|e| {
                let (line, col) = e.line_col();
                eprintln!("error: {}:{line}:{col}: parse error: {e}", p.display());
                EXIT_IO
            })
        }
    }
}

fn cmd_validate(path: &Path) -> i32 {
    let text = match read_file(path) {
        Ok(t) => t,
        Err(c) => return c,
    };
    let kb = match parse_kb(&text) {
        Ok(kb) => kb,
        Err(e) => {
            let (line, col) = e.line_col();
            eprintln!("error: {}:{line}:{col}: parse error: {e}", path.display());
            return EXIT_IO;
        }
    };
    let report = validate_mebn(&kb);
    if report.is_valid() {
        println!(
            "OK: {} entity types, {} hypothesis types, {} fragments",
            kb.entity_types.len(),
            kb.hypothesis_types.len(),
            kb.fragment_types.len()
        );
        EXIT_OK
    } else {
        for v in &report.violations {
            println!("violation: {v}");
        }
        EXIT_VIOLATIONS
    }
}

fn cmd_simulate(out_dir: &Path, config: ScenarioConfig) -> i32 {
    if let Err(msg) = config.validate() {
        eprintln!("error: invalid scenario config: {msg}");
        return EXIT_IO;
    }
    if let Err(e) = fs::create_dir_all(out_dir) {
        eprintln!("error: cannot create {}: {e}", out_dir.display());
        return EXIT_IO;
    }
    let sc = generate_scenario(&config);
    let truth = SituationEstimate::from(&sc.truth);
    let clutter = sc.provenance.values().filter(|v| v.is_none()).count();
    if let Err(c) = write_file(&out_dir.join("reports.csv"), &reports_to_csv(&sc.reports))
        .and_then(|_| write_file(&out_dir.join("truth.txt"), &truth.to_text()))
    {
        return c;
    }
    println!(
        "simulate: companies={} vehicles={} reports={} clutter={} seed={}",
        config.n_companies,
        sc.truth.vehicle_count(),
        sc.reports.len(),
        clutter,
        config.seed
    );
    EXIT_OK
}

struct Policies<'a> {
    cycle: CyclePolicies<'a, VehicleReport>,
}

fn build_policies<'a>(
    args: &RunArgs,
    suggestors: &'a [Box<dyn Suggestor<VehicleReport>>],
) -> Policies<'a> {
    let mut cycle = CyclePolicies::new(suggestors);
    cycle.gate = GatePolicy { radius_m: args.gate_radius, max_candidates: args.max_candidates };
    cycle.assoc = AssociationPolicy {
        mode: match args.assoc_mode {
            AssocModeArg::Single => AssocMode::SingleHypothesis,
            AssocModeArg::Multi => AssocMode::MultiHypothesis,
        },
        new_instance_allowed: true,
    };
    cycle.construction = ConstructionPolicy {
        star_priors: BTreeMap::new(),
        default_star_prior: args.star_prior,
        assoc_star_prior: args.assoc_star_prior,
        lazy_expansion: args.lazy_expansion,
    };
    cycle.prune_threshold = args.prune_threshold;
    cycle.accept_star_max = args.accept_star_max;
    cycle.redetect_prob = args.redetect_prob;
    cycle.parent_merge_m = args.parent_merge;
    cycle.max_iterations = args.max_iterations;
    cycle.seed = args.seed;
    Policies { cycle }
}

fn print_policies(args: &RunArgs) {
    println!(
        "policies: gate_radius={} max_candidates={} assoc_mode={:?} prune_threshold={} \
         accept_star_max={} star_prior={} assoc_star_prior={} lazy_expansion={:?} \
         redetect_prob={} parent_merge={} max_iterations={} seed={}",
        args.gate_radius,
        args.max_candidates,
        args.assoc_mode,
        args.prune_threshold,
        args.accept_star_max,
        args.star_prior,
        args.assoc_star_prior,
        args.lazy_expansion,
        args.redetect_prob,
        args.parent_merge,
        args.max_iterations,
        args.seed
    );
}

/// Splits reports into batches: fixed size if given, else one batch per
/// distinct time value (reports sorted by time then id).
fn batch_reports(mut reports: Vec<VehicleReport>, size: Option<usize>) -> Vec<Vec<VehicleReport>> {
    reports.sort_by(|a, b| a.time_s.total_cmp(&b.time_s).then(a.report_id.cmp(&b.report_id)));
    let mut out: Vec<Vec<VehicleReport>> = Vec::new();
    match size {
        Some(n) if n > 0 => {
            for chunk in reports.chunks(n) {
                out.push(chunk.to_vec());
            }
        }
        _ => {
            for r in reports {
                match out.last_mut() {
                    Some(b) if b[0].time_s == r.time_s => b.push(r),
                    _ => out.push(vec![r]),
                }
            }
        }
    }
    out
}

fn posteriors_tsv(posteriors: &BTreeMap<String, Vec<(String, f64)>>) -> String {
    let mut out = String::from("node\tstate\tprobability\n");
    for (node, dist) in posteriors {
        for (state, p) in dist {
            out.push_str(&format!("{node}\t{state}\t{p:.6}\n"));
        }
    }
    out
}

fn cmd_run(args: &RunArgs) -> i32 {
    let kb = match load_kb(args.kb.as_deref()) {
        Ok(kb) => kb,
        Err(c) => return c,
    };
    let reports = match read_file(&args.reports).and_then(|t| {
        reports_from_csv(&t).map_err(|m| {
            eprintln!("error: {}: {m}", args.reports.display());
            EXIT_IO
        })
    }) {
        Ok(r) => r,
        Err(c) => return c,
    };
    if let Err(e) = fs::create_dir_all(&args.out_dir) {
        eprintln!("error: cannot create {}: {e}", args.out_dir.display());
        return EXIT_IO;
    }
    print_policies(args);

    let suggestors: Vec<Box<dyn Suggestor<VehicleReport>>> = vec![Box::new(PlatoonSuggestor)];
    let policies = build_policies(args, &suggestors);
    let mut situation = SituationModel::new();
    let mut guard_breached = false;
    for batch in batch_reports(reports, args.batch_size) {
        match refine_cycle(&kb, &mut situation, &batch, &policies.cycle) {
            Ok(report) => {
                println!("{report}");
                guard_breached |= report.guard_exceeded;
            }
            Err(HypError::InconsistentEvidence) => {
                eprintln!(
                    "error: inconsistent evidence in batch {}",
                    situation.batch_no
                );
                return EXIT_INCONSISTENT;
            }
            Err(e) => {
                eprintln!("error: batch {}: {e}", situation.batch_no);
                return EXIT_GUARD;
            }
        }
    }

    let posteriors = match situation_posteriors(
        &kb,
        &mut situation,
        &policies.cycle.construction,
        &policies.cycle.gate,
        &policies.cycle.assoc,
    ) {
        Ok(p) => p,
        Err(HypError::InconsistentEvidence) => {
            eprintln!("error: inconsistent evidence in final evaluation");
            return EXIT_INCONSISTENT;
        }
        Err(e) => {
            eprintln!("error: final evaluation: {e}");
            return EXIT_GUARD;
        }
    };
    let estimate = extract_estimate(&situation, &posteriors);
    let results = [
        write_file(&args.out_dir.join("estimate.txt"), &estimate.to_text()),
        write_file(&args.out_dir.join("posteriors.tsv"), &posteriors_tsv(&posteriors)),
        write_file(&args.out_dir.join("situation.sit"), &situation_to_text(&situation)),
    ];
    if let Some(Err(c)) = results.into_iter().find(|r| r.is_err()) {
        return c;
    }

    for (i, q) in args.query.iter().enumerate() {
        let rows = match eval_queries(
            &kb,
            &mut situation,
            std::slice::from_ref(q),
            &policies.cycle.construction,
            &policies.cycle.gate,
            &policies.cycle.assoc,
        ) {
            Ok(r) => r,
            Err(c) => return c,
        };
        if let Err(c) = write_file(&args.out_dir.join(format!("query_{i}.tsv")), &rows) {
            return c;
        }
    }

    println!(
        "run: batches done, {} instances, outputs in {}",
        situation.instances.len(),
        args.out_dir.display()
    );
    if guard_breached {
        eprintln!("error: iteration guard breached in at least one batch");
        return EXIT_GUARD;
    }
    EXIT_OK
}

fn cmd_query(situation_path: &Path, kb_path: Option<&Path>, queries: &[String]) -> i32 {
    let kb = match load_kb(kb_path) {
        Ok(kb) => kb,
        Err(c) => return c,
    };
    let mut situation = match read_file(situation_path).and_then(|t| {
        situation_from_text(&t).map_err(|m| {
            eprintln!("error: {}: {m}", situation_path.display());
            EXIT_IO
        })
    }) {
        Ok(s) => s,
        Err(c) => return c,
    };
    match eval_queries(
        &kb,
        &mut situation,
        queries,
        &ConstructionPolicy::default(),
        &GatePolicy::default(),
        &AssociationPolicy::default(),
    ) {
        Ok(rows) => {
            print!("{rows}");
            EXIT_OK
        }
        Err(c) => c,
    }
}

fn cmd_score(estimate: &Path, truth: &Path, match_radius: f64) -> i32 {
    let parse = |p: &Path| -> Result<SituationEstimate, i32> {
        read_file(p).and_then(|t| {
            SituationEstimate::from_text(&t).map_err(|m| {
                eprintln!("error: {}: {m}", p.display());
                EXIT_IO
            })
        })
    };
    let (est, tru) = match (parse(estimate), parse(truth)) {
        (Ok(e), Ok(t)) => (e, t),
        (Err(c), _) | (_, Err(c)) => return c,
    };
    print!("{}", score_situation(&est, &tru, match_radius).table());
    EXIT_OK
}

// ---------------------------------------------------------------------------
// query parsing and evaluation

enum ParsedQuery {
    Targets(Vec<HypothesisInstance>),
    Evidence(HypothesisInstance, String),
}

/// `Type(id)`, `Type(?)` (expand over matching instances), or
/// `Type(id)=state` (extra evidence).
fn parse_query(
    kb: &MebnKb,
    situation: &SituationModel,
    text: &str,
) -> Result<ParsedQuery, String> {
    let (head, state) = match text.split_once('=') {
        Some((h, s)) => (h.trim(), Some(s.trim())),
        None => (text.trim(), None),
    };
    let (hyp, rest) = head
        .split_once('(')
        .ok_or_else(|| format!("malformed query `{text}`: expected `Type(id)`"))?;
    let ids = rest
        .strip_suffix(')')
        .ok_or_else(|| format!("malformed query `{text}`: missing `)`"))?;
    let ht = kb
        .hyp_type(hyp)
        .ok_or_else(|| format!("unknown hypothesis type `{hyp}`"))?;
    if let Some(s) = state {
        if !ht.values.iter().any(|v| v == s) {
            return Err(format!("`{s}` is not a value of `{hyp}`"));
        }
    }
    if ids.trim() == "?" {
        if ht.attrs.len() != 1 {
            return Err(format!("`{hyp}(?)` needs a single-attribute hypothesis type"));
        }
        if state.is_some() {
            return Err(format!("`{text}`: evidence requires explicit instance ids"));
        }
        let ety = &ht.attrs[0].1;
        let targets = situation
            .instances_of_type(ety)
            .into_iter()
            .map(|i| HypothesisInstance { hyp_type: hyp.to_string(), bindings: vec![i.clone()] })
            .collect();
        return Ok(ParsedQuery::Targets(targets));
    }
    let bindings: Vec<InstanceId> =
        ids.split(',').map(|s| InstanceId(s.trim().to_string())).collect();
    if bindings.len() != ht.attrs.len() {
        return Err(format!(
            "`{text}`: expected {} instance ids, found {}",
            ht.attrs.len(),
            bindings.len()
        ));
    }
    for b in &bindings {
        if !situation.is_live(b) {
            return Err(format!("`{text}`: unknown instance `{}`", b.0));
        }
    }
    let inst = HypothesisInstance { hyp_type: hyp.to_string(), bindings };
    Ok(match state {
        Some(s) => ParsedQuery::Evidence(inst, s.to_string()),
        None => ParsedQuery::Targets(vec![inst]),
    })
}

/// Evaluates query strings against the situation and renders a posterior
/// TSV (`node\tstate\tprobability`). Returns an exit code on failure.
fn eval_queries(
    kb: &MebnKb,
    situation: &mut SituationModel,
    queries: &[String],
    construction: &ConstructionPolicy,
    gate: &GatePolicy,
    assoc: &AssociationPolicy,
) -> Result<String, i32> {
    let mut targets: Vec<HypothesisInstance> = Vec::new();
    let mut extra: Vec<(HypothesisInstance, String)> = Vec::new();
    for q in queries {
        match parse_query(kb, situation, q) {
            Ok(ParsedQuery::Targets(t)) => targets.extend(t),
            Ok(ParsedQuery::Evidence(n, s)) => extra.push((n, s)),
            Err(m) => {
                eprintln!("error: {m}");
                return Err(EXIT_IO);
            }
        }
    }
    if targets.is_empty() {
        eprintln!("error: no query targets (only evidence given)");
        return Err(EXIT_IO);
    }

    // evaluate per association component, folding in situation evidence
    let mut marginals: BTreeMap<String, Vec<(String, f64)>> = BTreeMap::new();
    let mut remaining = targets;
    while let Some(first) = remaining.first().cloned() {
        let comp = situation.association_component(&first.bindings);
        let (in_comp, rest): (Vec<_>, Vec<_>) = remaining
            .into_iter()
            .partition(|t| t.bindings.iter().all(|b| comp.contains(b)));
        remaining = rest;
        let mut evidence: Vec<(HypothesisInstance, String)> = situation
            .evidence
            .iter()
            .filter(|e| e.node.bindings.iter().all(|b| comp.contains(b)))
            .map(|e| (e.node.clone(), e.state.clone()))
            .collect();
        evidence.extend(
            extra
                .iter()
                .filter(|(n, _)| n.bindings.iter().all(|b| comp.contains(b)))
                .cloned(),
        );
        let target_ids: BTreeSet<String> =
            in_comp.iter().map(|t| node_id(&t.hyp_type, &t.bindings)).collect();
        evidence.retain(|(n, _)| !target_ids.contains(&node_id(&n.hyp_type, &n.bindings)));
        let query = Query { targets: in_comp, evidence };
        let mut enumerator =
            DefaultEnumerator { kb, gate: gate.clone(), assoc: assoc.clone() };
        let eval = construct_ssn(kb, situation, &query, construction, &mut enumerator)
            .and_then(|cn| minimalize(&cn, &query))
            .and_then(|minimal| evaluate_query(&minimal, &query, false));
        match eval {
            Ok(e) => {
                for id in &target_ids {
                    if let Some(d) = e.marginals.get(id) {
                        marginals.insert(id.clone(), d.clone());
                    }
                }
            }
            Err(e) => {
                let code = match HypError::from(e) {
                    HypError::InconsistentEvidence => {
                        eprintln!("error: inconsistent evidence for query");
                        EXIT_INCONSISTENT
                    }
                    other => {
                        eprintln!("error: query evaluation: {other}");
                        EXIT_GUARD
                    }
                };
                return Err(code);
            }
        }
    }
    Ok(posteriors_tsv(&marginals))
}

// ---------------------------------------------------------------------------
// situation (de)serialization

fn fmt_pos(p: Option<(f64, f64)>) -> String {
    match p {
        Some((x, y)) => format!("{x} {y}"),
        None => "- -".to_string(),
    }
}

/// Line-oriented dump of a situation model; round-trip stable.
pub fn situation_to_text(s: &SituationModel) -> String {
    let mut out = String::from("# mebn situation\n");
    out.push_str(&format!("batch {}\n", s.batch_no));
    for (prefix, c) in s.idgen.counters() {
        out.push_str(&format!("counter {prefix} {c}\n"));
    }
    for (id, info) in &s.instances {
        out.push_str(&format!(
            "instance {} {} {} {} {} {}\n",
            id.0,
            info.entity_type,
            fmt_pos(info.position),
            s.star_beliefs.get(id).copied().unwrap_or(0.0),
            info.created_batch,
            info.last_support_batch
        ));
    }
    for ((owner, _), filler) in &s.committed {
        out.push_str(&format!("committed {} {}\n", owner.0, filler.0));
    }
    for ((owner, _), filler) in &s.hypothetical {
        out.push_str(&format!("hypothetical {} {}\n", owner.0, filler.0));
    }
    for e in &s.evidence {
        let ids: Vec<&str> = e.node.bindings.iter().map(|b| b.as_str()).collect();
        let rids = if e.report_ids.is_empty() {
            "-".to_string()
        } else {
            e.report_ids.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(",")
        };
        out.push_str(&format!(
            "evidence {} {} {} {} {}\n",
            e.node.hyp_type,
            ids.join(","),
            e.state,
            rids,
            e.batch
        ));
    }
    if !s.pool.is_empty() {
        let pool: Vec<String> = s.pool.iter().map(|r| r.to_string()).collect();
        out.push_str(&format!("pool {}\n", pool.join(",")));
    }
    out
}

pub fn situation_from_text(text: &str) -> Result<SituationModel, String> {
    let mut s = SituationModel::new();
    let mut assoc_lines: Vec<(bool, InstanceId, InstanceId)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        let bad = |what: &str| format!("line {}: {what}: `{line}`", i + 1);
        match f[0] {
            "batch" if f.len() == 2 => {
                s.batch_no = f[1].parse().map_err(|_| bad("malformed batch"))?;
            }
            "counter" if f.len() == 3 => {
                let c = f[2].parse().map_err(|_| bad("malformed counter"))?;
                s.idgen.advance_to(f[1], c);
            }
            "instance" if f.len() == 8 => {
                let position = if f[3] == "-" {
                    None
                } else {
                    let x = f[3].parse().map_err(|_| bad("malformed x"))?;
                    let y = f[4].parse().map_err(|_| bad("malformed y"))?;
                    Some((x, y))
                };
                let star: f64 = f[5].parse().map_err(|_| bad("malformed star belief"))?;
                let id = InstanceId(f[1].to_string());
                s.instances.insert(
                    id.clone(),
                    InstanceInfo {
                        entity_type: f[2].to_string(),
                        position,
                        created_batch: f[6].parse().map_err(|_| bad("malformed batch"))?,
                        last_support_batch: f[7]
                            .parse()
                            .map_err(|_| bad("malformed batch"))?,
                    },
                );
                s.star_beliefs.insert(id, star);
            }
            "committed" if f.len() == 3 => {
                assoc_lines.push((true, InstanceId(f[1].to_string()), InstanceId(f[2].to_string())));
            }
            "hypothetical" if f.len() == 3 => {
                assoc_lines.push((
                    false,
                    InstanceId(f[1].to_string()),
                    InstanceId(f[2].to_string()),
                ));
            }
            "evidence" if f.len() == 6 => {
                let bindings: Vec<InstanceId> =
                    f[2].split(',').map(|b| InstanceId(b.to_string())).collect();
                let report_ids: Vec<u64> = if f[4] == "-" {
                    Vec::new()
                } else {
                    f[4].split(',')
                        .map(|r| r.parse().map_err(|_| bad("malformed report id")))
                        .collect::<Result<_, _>>()?
                };
                let batch = f[5].parse().map_err(|_| bad("malformed batch"))?;
                s.evidence.push(crate::hypman::EvidenceEntry {
                    node: HypothesisInstance { hyp_type: f[1].to_string(), bindings },
                    state: f[3].to_string(),
                    report_ids,
                    batch,
                });
            }
            "pool" if f.len() == 2 => {
                s.pool = f[1]
                    .split(',')
                    .map(|r| r.parse().map_err(|_| bad("malformed report id")))
                    .collect::<Result<_, _>>()?;
            }
            _ => return Err(bad("unrecognized situation line")),
        }
    }
    for (committed, owner, filler) in assoc_lines {
        let ety = s
            .entity_type_of(&filler)
            .ok_or_else(|| format!("association filler `{}` has no instance line", filler.0))?
            .to_string();
        if !s.instances.contains_key(&owner) {
            return Err(format!("association owner `{}` has no instance line", owner.0));
        }
        if committed {
            s.committed.insert((owner, ety), filler);
        } else {
            s.hypothetical.insert((owner, ety), filler);
        }
    }
    Ok(s)
}
