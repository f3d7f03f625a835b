//! The `scramble` experiment runner.
//!
//! Every subcommand writes JSON (stamped with `schema_version`) or CSV with a
//! header row, to `--out` or stdout. A flat `key = value` file passed with
//! `--config` supplies defaults for the subcommand's flags; flags given on the
//! command line win. Exit codes: 0 success, 1 validation failure, 2 usage
//! error.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::circuits::{build_three_stage_cipher, permute_wiring, random_circuit, random_permutation, tree_wiring, ClassicalCircuit, GateFamily};
use crate::clifford::{construct_inflationary, no_go_report};
use crate::dense::{random_clifford_circuit, random_haar_circuit};
use crate::dynamics::{
    continuum_asymptotic, continuum_layer_count, density_trajectory_mc, exact_weight_chain, front_profile, mean_field_trajectory, rho_to_eps,
    stay_probability_scan, z_average_power_law, FrontKind, Placement,
};
use crate::gates::{census, inflationary_from_topologies, inflationary_gates, max_branching_entropy, supernonlinear_gates, write_gate_set};
use crate::otoc::{
    asymptotics_report, expectation_squared_trace_form, q_alpha_average, q_alpha_trace_form, sac_otoc, string_expectation_exact, trajectory,
    tree_moments_mc, verify_coefficient_pipeline, MomentPair, Mode,
};
use crate::pauli::PauliString;
use crate::prs::{default_alphas, prs_scan, PhaseState};
use crate::sampling::{rng_for, with_workers};

pub const SCHEMA_VERSION: u32 = 1;
pub const WORKERS_ENV: &str = "SCRAMBLE_WORKERS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Usage(_) | CliError::Failed(_) => 2,
        }
    }
}

fn fail<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Failed(e.to_string())
}

#[derive(Parser, Debug)]
#[command(name = "scramble", version, about = "Pauli-string scrambling experiments")]
pub struct Cli {
    /// Flat `key = value` file of flag defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (default: $SCRAMBLE_WORKERS or all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Output file (default: stdout).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum FamilyArg {
    Inflationary,
    Supernonlinear,
    Linear,
    Any,
    Identity,
}

impl From<FamilyArg> for GateFamily {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Inflationary => GateFamily::Inflationary,
            FamilyArg::Supernonlinear => GateFamily::Supernonlinear,
            FamilyArg::Linear => GateFamily::Linear,
            FamilyArg::Any => GateFamily::Any,
            FamilyArg::Identity => GateFamily::Identity,
        }
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Classify all 40320 three-bit reversible gates.
    #[command(args_override_self = true)]
    GatesCensus(CensusArgs),
    /// Build the inflationary gates from CNOT-network topologies.
    #[command(args_override_self = true)]
    GatesTopologies,
    /// Compare derived recursion coefficients with the published ones.
    #[command(args_override_self = true)]
    RecursionVerify,
    /// Construct the two-qudit inflationary Clifford gate.
    #[command(args_override_self = true)]
    QuditConstruct(QuditArgs),
    /// Search all two-qubit symplectic gates for inflationary ones.
    #[command(args_override_self = true)]
    QubitNogo(NogoArgs),
    /// Emit a tree wiring.
    #[command(args_override_self = true)]
    TreeWire(TreeArgs),
    /// Build a three-stage cipher circuit.
    #[command(args_override_self = true)]
    CipherBuild(CipherArgs),
    /// Layer-resolved SAC OTOC of a circuit.
    #[command(args_override_self = true)]
    SacScan(SacArgs),
    /// Weight-1 stay probabilities in the string Markov model.
    #[command(args_override_self = true)]
    StayProb(StayArgs),
    /// Operator-front profiles on brickwork circuits.
    #[command(args_override_self = true)]
    Front(FrontArgs),
    /// Mean-field string density and the continuum layer count.
    #[command(args_override_self = true)]
    MeanField(MeanFieldArgs),
    /// Moment recursions, asymptotics and tree-circuit measurements.
    #[command(args_override_self = true)]
    Recursions(RecursionArgs),
    /// String expectations of a phase state against a threshold.
    #[command(args_override_self = true)]
    PrsScan(PrsArgs),
    /// Dense-simulator identity checks.
    #[command(args_override_self = true)]
    IdentityChecks(IdentityArgs),
}

#[derive(Args, Debug)]
pub struct CensusArgs {
    /// Also write `inflationary.txt` and `supernonlinear.txt` here.
    #[arg(long)]
    pub write_sets: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct QuditArgs {
    #[arg(long)]
    pub d: u32,
    #[arg(long, value_enum, default_value = "text")]
    pub format: Format,
}

#[derive(Args, Debug)]
pub struct NogoArgs {
    #[arg(long, default_value_t = 2)]
    pub d: u32,
}

#[derive(Args, Debug)]
pub struct TreeArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long)]
    pub layers: usize,
    /// Relabel lines with a random permutation from this seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct CipherArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct SacArgs {
    /// Circuit JSON; otherwise a cipher is built from `--n` and `--seed`.
    #[arg(long)]
    pub circuit: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 0)]
    pub i: usize,
    #[arg(long, default_value_t = 0)]
    pub j: usize,
    /// Evaluate the circuit as given instead of its inverse.
    #[arg(long)]
    pub forward: bool,
    #[arg(long, default_value = "sampled")]
    pub mode: Mode,
    #[arg(long, default_value_t = 100_000)]
    pub samples: u64,
    /// Only report the full depth.
    #[arg(long)]
    pub final_only: bool,
}

#[derive(Args, Debug)]
pub struct StayArgs {
    #[arg(long, required_unless_present = "power_law")]
    pub n: Option<usize>,
    #[arg(long, required_unless_present = "power_law")]
    pub depth: Option<usize>,
    #[arg(long, default_value = "complete-graph")]
    pub placement: Placement,
    #[arg(long, default_value_t = 100_000)]
    pub samples: u64,
    #[arg(long, required_unless_present = "power_law")]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    /// Instead, fit the exact σᶻ average at depth log₂ n for n = 2^a..2^b, given as `a:b`.
    #[arg(long)]
    pub power_law: Option<String>,
    #[arg(long, default_value_t = 200)]
    pub weight_cap: usize,
}

#[derive(Args, Debug)]
pub struct FrontArgs {
    #[arg(long, default_value = "random-clifford")]
    pub kind: FrontKind,
    #[arg(long, default_value_t = 256)]
    pub n: usize,
    #[arg(long, default_value_t = 100)]
    pub t_max: usize,
    #[arg(long, default_value_t = 1000)]
    pub samples: u64,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 20)]
    pub fit_from: usize,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

#[derive(Args, Debug)]
pub struct MeanFieldArgs {
    #[arg(long, default_value_t = 0.5)]
    pub rho0: f64,
    #[arg(long, default_value_t = 20)]
    pub layers: usize,
    /// Add a complete-graph Monte Carlo column on this many sites.
    #[arg(long)]
    pub mc_n: Option<usize>,
    #[arg(long, default_value_t = 1000)]
    pub samples: u64,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Instead, report the continuum layer count for this n.
    #[arg(long)]
    pub continuum_n: Option<f64>,
    #[arg(long, default_value_t = 1e-3)]
    pub eps: f64,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

#[derive(Args, Debug)]
pub struct RecursionArgs {
    #[arg(long, value_enum, default_value = "supernonlinear")]
    pub family: FamilyArg,
    /// Per-layer families, e.g. `supernonlinear:3,inflationary:3`; overrides
    /// `--family` and `--layers`.
    #[arg(long)]
    pub families: Option<String>,
    #[arg(long, default_value_t = 10)]
    pub layers: usize,
    #[arg(long, default_value_t = 0.0)]
    pub s0: f64,
    #[arg(long, default_value_t = 0.5)]
    pub q0: f64,
    /// Measure on ternary-tree circuits on this many lines.
    #[arg(long)]
    pub measure_n: Option<usize>,
    /// Flip probability per input bit for measurements (sets s0 = 1 − 2f, q0 = 1).
    #[arg(long, default_value_t = 0.05)]
    pub flip: f64,
    #[arg(long, default_value_t = 100_000)]
    pub samples: u64,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Emit the asymptotics report instead.
    #[arg(long)]
    pub asymptotics: bool,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

#[derive(Args, Debug)]
pub struct PrsArgs {
    #[arg(long)]
    pub circuit: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: u64,
    /// Lines flipped on input, comma separated.
    #[arg(long, default_value = "0")]
    pub beta: String,
    #[arg(long, default_value_t = 1e-3)]
    pub threshold: f64,
    #[arg(long, default_value = "sampled")]
    pub mode: Mode,
    #[arg(long, default_value_t = 10_000)]
    pub samples: u64,
    #[arg(long, default_value_t = 1)]
    pub max_weight: usize,
    #[arg(long, default_value_t = 20)]
    pub extra: usize,
    /// Use the identity permutation (a non-random baseline).
    #[arg(long)]
    pub identity: bool,
}

#[derive(Args, Debug)]
pub struct IdentityArgs {
    #[arg(long, default_value_t = 50)]
    pub circuits: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 16)]
    pub sac_n: usize,
    #[arg(long, default_value_t = 100_000)]
    pub sac_samples: u64,
}

/// Parses a flat `key = value` file into `--key=value` arguments.
pub fn config_args(text: &str) -> Result<Vec<String>, CliError> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| CliError::Usage(format!("config line {}: expected key = value", lineno + 1)))?;
        let key = k.trim().replace('_', "-");
        let value = v.trim();
        match value {
            "true" => out.push(format!("--{key}")),
            "false" => {}
            _ => out.push(format!("--{key}={value}")),
        }
    }
    Ok(out)
}

/// Inserts config-file flags right after the subcommand name so that
/// command-line flags, which come later, take precedence.
fn merge_config(argv: Vec<String>) -> Result<Vec<String>, CliError> {
    let mut path = None;
    for (i, a) in argv.iter().enumerate() {
        if a == "--config" {
            path = argv.get(i + 1).cloned();
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        }
    }
    let Some(path) = path else { return Ok(argv) };
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::Usage(format!("cannot read config {path}: {e}")))?;
    let extra = config_args(&text)?;
    let names: Vec<String> = Cli::command_names();
    let pos = argv.iter().skip(1).position(|a| names.contains(a)).map(|p| p + 2);
    let Some(pos) = pos else { return Ok(argv) };
    let mut merged = argv[..pos].to_vec();
    merged.extend(extra);
    merged.extend_from_slice(&argv[pos..]);
    Ok(merged)
}

impl Cli {
    fn command_names() -> Vec<String> {
        use clap::CommandFactory;
        Cli::command().get_subcommands().map(|c| c.get_name().to_string()).collect()
    }
}

/// Runs the CLI and returns the process exit code.
pub fn run<I: IntoIterator<Item = String>>(argv: I) -> i32 {
    let argv: Vec<String> = argv.into_iter().collect();
    let argv = match merge_config(argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let workers = cli.workers.or_else(|| std::env::var(WORKERS_ENV).ok().and_then(|v| v.parse().ok()));
    let result = with_workers(workers, || execute(&cli.command));
    let (text, outcome) = match result {
        Ok(out) => (out, Ok(())),
        Err(Outcome::Invalid(text, why)) => (text, Err(CliError::Validation(why))),
        Err(Outcome::Error(e)) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let written = match &cli.out {
        Some(p) => std::fs::write(p, &text).map_err(|e| CliError::Failed(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    };
    if let Err(e) = written {
        eprintln!("error: {e}");
        return e.exit_code();
    }
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

/// A command either fails outright or produces output that may still fail
/// validation.
enum Outcome {
    Invalid(String, String),
    Error(CliError),
}

impl From<CliError> for Outcome {
    fn from(e: CliError) -> Self {
        Outcome::Error(e)
    }
}

fn to_json<T: Serialize>(kind: &str, body: &T) -> Result<String, CliError> {
    let mut v = serde_json::to_value(body).map_err(fail)?;
    let obj = match v {
        Value::Object(ref mut m) => {
            let mut out = serde_json::Map::new();
            out.insert("schema_version".into(), json!(SCHEMA_VERSION));
            out.insert("kind".into(), json!(kind));
            out.append(m);
            Value::Object(out)
        }
        other => json!({ "schema_version": SCHEMA_VERSION, "kind": kind, "data": other }),
    };
    Ok(serde_json::to_string_pretty(&obj).map_err(fail)? + "\n")
}

fn validated(text: String, ok: bool, why: &str) -> Result<String, Outcome> {
    if ok {
        Ok(text)
    } else {
        Err(Outcome::Invalid(text, why.to_string()))
    }
}

fn load_circuit(path: &PathBuf) -> Result<ClassicalCircuit, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let mut v: Value = serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("bad circuit JSON: {e}")))?;
    if let Value::Object(m) = &mut v {
        m.remove("schema_version");
        m.remove("kind");
    }
    let c: ClassicalCircuit = serde_json::from_value(v).map_err(|e| CliError::Usage(format!("bad circuit JSON: {e}")))?;
    c.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(c)
}

fn circuit_from(circuit: &Option<PathBuf>, n: Option<usize>, seed: u64) -> Result<ClassicalCircuit, CliError> {
    match (circuit, n) {
        (Some(p), _) => load_circuit(p),
        (None, Some(n)) => build_three_stage_cipher(n, seed).map_err(|e| CliError::Usage(e.to_string())),
        (None, None) => Err(CliError::Usage("either --circuit or --n is required".into())),
    }
}

fn parse_families(spec: &str) -> Result<Vec<GateFamily>, CliError> {
    let mut out = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (name, count) = match part.split_once(':') {
            Some((a, b)) => (a, b.parse::<usize>().map_err(|_| CliError::Usage(format!("bad layer count in {part:?}")))?),
            None => (part, 1),
        };
        let fam = FamilyArg::from_str(name, true).map_err(|_| CliError::Usage(format!("unknown family {name:?}")))?;
        out.extend(std::iter::repeat(GateFamily::from(fam)).take(count));
    }
    if out.is_empty() {
        return Err(CliError::Usage("empty family list".into()));
    }
    Ok(out)
}

fn csv(header: &str, rows: impl IntoIterator<Item = String>) -> String {
    let mut s = String::from(header);
    s.push('\n');
    for r in rows {
        s.push_str(&r);
        s.push('\n');
    }
    s
}

fn execute(cmd: &Command) -> Result<String, Outcome> {
    match cmd {
        Command::GatesCensus(a) => {
            let c = census();
            if let Some(dir) = &a.write_sets {
                std::fs::create_dir_all(dir).map_err(fail)?;
                std::fs::write(dir.join("inflationary.txt"), write_gate_set(&inflationary_gates())).map_err(fail)?;
                std::fs::write(dir.join("supernonlinear.txt"), write_gate_set(&supernonlinear_gates())).map_err(fail)?;
            }
            let ok = c.linear == 1344 && c.inflationary == 144 && c.supernonlinear == 10752;
            let body = json!({
                "total": c.total,
                "linear": c.linear,
                "inflationary": c.inflationary,
                "supernonlinear": c.supernonlinear,
                "other": c.other,
                "supernonlinear_criterion": "maximal mean row entropy of the squared string transform",
                "max_branching_entropy": max_branching_entropy(),
                "counts_match_reference": ok,
            });
            validated(to_json("gates-census", &body)?, ok, "census counts differ from 1344/144/10752")
        }
        Command::GatesTopologies => {
            let (set, counts) = inflationary_from_topologies();
            let brute: std::collections::BTreeSet<_> = inflationary_gates().into_iter().collect();
            let equal = set == brute;
            let body = json!({
                "topologies": counts.iter().map(|(n, c)| json!({"name": n, "gates": c})).collect::<Vec<_>>(),
                "total": set.len(),
                "equals_brute_force": equal,
            });
            validated(to_json("gates-topologies", &body)?, equal && set.len() == 144, "topology gates differ from the inflationary set")
        }
        Command::RecursionVerify => {
            let r = verify_coefficient_pipeline();
            let ok = r.ok;
            validated(to_json("recursion-verify", &r)?, ok, "coefficient mismatch")
        }
        Command::QuditConstruct(a) => {
            let g = construct_inflationary(a.d).map_err(|e| CliError::Usage(e.to_string()))?;
            let ok = g.is_inflationary();
            let text = match a.format {
                Format::Text | Format::Csv => g.to_text(),
                Format::Json => to_json(
                    "qudit-construct",
                    &json!({ "d": a.d, "matrix": g.to_text(), "images": g.generator_images(), "inflationary": ok }),
                )?,
            };
            validated(text, ok, "constructed gate is not inflationary")
        }
        Command::QubitNogo(a) => {
            let r = no_go_report(a.d).map_err(|e| CliError::Usage(e.to_string()))?;
            let ok = a.d != 2 || r.inflationary_count == 0;
            validated(to_json("qubit-nogo", &r)?, ok, "inflationary two-qubit gate found")
        }
        Command::TreeWire(a) => {
            let mut w = tree_wiring(a.n, a.k, a.layers).map_err(|e| CliError::Usage(e.to_string()))?;
            if let Some(seed) = a.seed {
                let perm = random_permutation(a.n, &mut rng_for(seed, 0x7065_726d, 0));
                w = permute_wiring(&w, &perm).map_err(fail)?;
            }
            Ok(to_json("tree-wire", &json!({ "seed": a.seed, "wiring": w }))?)
        }
        Command::CipherBuild(a) => {
            let c = build_three_stage_cipher(a.n, a.seed).map_err(|e| CliError::Usage(e.to_string()))?;
            let mut v = serde_json::to_value(&c).map_err(fail)?;
            if let Value::Object(m) = &mut v {
                m.insert("seed".into(), json!(a.seed));
            }
            Ok(to_json("cipher", &v)?)
        }
        Command::SacScan(a) => {
            let c = circuit_from(&a.circuit, a.n, a.seed)?;
            let c = if a.forward { c } else { c.inverse() };
            let layers: Vec<usize> = if a.final_only { vec![c.depth()] } else { (0..=c.depth()).collect() };
            let mut rows = Vec::new();
            for l in layers {
                let e = sac_otoc(&c, a.i, a.j, Some(l), a.mode, a.samples, a.seed).map_err(|e| CliError::Usage(e.to_string()))?;
                rows.push(format!("{},{},{},{},{},{},{}", a.i, a.j, l, e.estimate, e.stderr, e.samples, e.seed));
            }
            Ok(csv("i,j,layer,estimate,stderr,samples,seed", rows))
        }
        Command::StayProb(a) => {
            if let Some(range) = &a.power_law {
                let (lo, hi) = range
                    .split_once(':')
                    .and_then(|(x, y)| Some((x.parse::<u32>().ok()?, y.parse::<u32>().ok()?)))
                    .ok_or_else(|| CliError::Usage(format!("bad --power-law range {range:?}")))?;
                let r = z_average_power_law(lo..=hi, a.weight_cap).map_err(|e| CliError::Usage(e.to_string()))?;
                return Ok(to_json("stay-prob-power-law", &r)?);
            }
            let (n, depth, seed) = (a.n.unwrap_or(0), a.depth.unwrap_or(0), a.seed.unwrap_or(0));
            let rows = stay_probability_scan(n, depth, a.placement, a.samples, seed).map_err(|e| CliError::Usage(e.to_string()))?;
            let exact = if a.placement == Placement::CompleteGraph && n < 1 << 16 { exact_weight_chain(n, depth, a.weight_cap).ok() } else { None };
            match a.format {
                Format::Json => Ok(to_json("stay-prob", &json!({ "n": n, "placement": a.placement, "rows": rows, "exact_weight_one": exact.map(|e| e.iter().map(|(p, _)| p[1]).collect::<Vec<_>>()) }))?),
                _ => Ok(csv(
                    "layer,weight_one,weight_one_stderr,same_site,same_site_stderr,z_average,z_average_stderr,exact_weight_one,samples,seed",
                    rows.iter().map(|r| {
                        let ex = exact.as_ref().map(|e| e[r.layer].0[1].to_string()).unwrap_or_default();
                        format!(
                            "{},{},{},{},{},{},{},{},{},{}",
                            r.layer, r.weight_one.estimate, r.weight_one.stderr, r.same_site.estimate, r.same_site.stderr, r.z_average.estimate, r.z_average.stderr, ex, r.weight_one.samples, r.weight_one.seed
                        )
                    }),
                )),
            }
        }
        Command::Front(a) => {
            let f = front_profile(a.kind, a.n, a.t_max, a.samples, a.seed).map_err(|e| CliError::Usage(e.to_string()))?;
            let fit = f.fit(a.fit_from.min(a.t_max), a.t_max);
            match a.format {
                Format::Json => Ok(to_json("front", &json!({ "profile": f, "fit": fit }))?),
                _ => Ok(csv(
                    "t,mean_endpoint,mean_stderr,width,samples,seed",
                    f.rows.iter().map(|r| format!("{},{},{},{},{},{}", r.t, r.mean_endpoint, r.mean_stderr, r.width, f.samples, f.seed)),
                )),
            }
        }
        Command::MeanField(a) => {
            if let Some(n) = a.continuum_n {
                let l = continuum_layer_count(n, a.eps).map_err(|e| CliError::Usage(e.to_string()))?;
                let asym = continuum_asymptotic(n, a.eps);
                return Ok(to_json(
                    "continuum",
                    &json!({ "n": n, "eps": a.eps, "layers": l, "gates": l * n / 2.0, "asymptotic_layers": asym, "relative_difference": (l - asym).abs() / asym }),
                )?);
            }
            let traj = mean_field_trajectory(a.rho0, a.layers).map_err(|e| CliError::Usage(e.to_string()))?;
            let mc = match a.mc_n {
                Some(n) => {
                    let seed = a.seed.ok_or_else(|| CliError::Usage("--seed is required with --mc-n".into()))?;
                    Some(density_trajectory_mc(n, a.rho0, a.layers, a.samples, seed).map_err(|e| CliError::Usage(e.to_string()))?)
                }
                None => None,
            };
            let eps0 = rho_to_eps(a.rho0);
            let rows: Vec<String> = traj
                .iter()
                .enumerate()
                .map(|(l, &rho)| {
                    let eps = rho_to_eps(rho);
                    let scaled = if eps0 != 0.0 { eps / 0.4f64.powi(l as i32) } else { 0.0 };
                    let (m, s, k, sd) = match &mc {
                        Some(v) => (v[l].estimate.to_string(), v[l].stderr.to_string(), v[l].samples.to_string(), v[l].seed.to_string()),
                        None => Default::default(),
                    };
                    format!("{l},{rho},{eps},{scaled},{m},{s},{k},{sd}")
                })
                .collect();
            match a.format {
                Format::Json => Ok(to_json("mean-field", &json!({ "rho": traj, "mc": mc }))?),
                _ => Ok(csv("layer,rho,eps,eps_over_0.4^layer,mc_rho,mc_stderr,samples,seed", rows)),
            }
        }
        Command::Recursions(a) => {
            if a.asymptotics {
                let r = asymptotics_report(a.q0, (10, 20), 6).map_err(|e| CliError::Usage(e.to_string()))?;
                return Ok(to_json("asymptotics", &r)?);
            }
            let families = match &a.families {
                Some(s) => parse_families(s)?,
                None => vec![a.family.into(); a.layers],
            };
            if let Some(n) = a.measure_n {
                let seed = a.seed.ok_or_else(|| CliError::Usage("--seed is required with --measure-n".into()))?;
                let rows = tree_moments_mc(n, &families, a.flip, a.samples, seed).map_err(|e| CliError::Usage(e.to_string()))?;
                return match a.format {
                    Format::Json => Ok(to_json("recursions-measured", &json!({ "n": n, "flip": a.flip, "rows": rows }))?),
                    _ => Ok(csv(
                        "layer,s,s_stderr,q,q_stderr,s_prediction,q_prediction,q_residual,samples,seed",
                        rows.iter().map(|r| {
                            format!(
                                "{},{},{},{},{},{},{},{},{},{}",
                                r.layer, r.s.estimate, r.s.stderr, r.q.estimate, r.q.stderr, r.s_predicted, r.q_predicted, r.q.estimate - r.q_predicted, r.q.samples, r.q.seed
                            )
                        }),
                    )),
                };
            }
            for v in [a.s0, a.q0] {
                if !(0.0..=1.0).contains(&v) {
                    return Err(CliError::Usage(format!("initial moment {v} outside [0, 1]")).into());
                }
            }
            let t = trajectory(MomentPair { s: a.s0, q: a.q0 }, &families);
            match a.format {
                Format::Json => Ok(to_json("recursions", &json!({ "families": families, "trajectory": t }))?),
                _ => Ok(csv("layer,s,q", t.iter().enumerate().map(|(l, p)| format!("{l},{},{}", p.s, p.q)))),
            }
        }
        Command::PrsScan(a) => {
            let p = if a.identity {
                ClassicalCircuit::identity(a.n.ok_or_else(|| CliError::Usage("--n is required with --identity".into()))?)
            } else {
                circuit_from(&a.circuit, a.n, a.seed)?
            };
            let n = p.n;
            let mut v = vec![0u32; n];
            for part in a.beta.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                let j: usize = part.parse().map_err(|_| CliError::Usage(format!("bad --beta entry {part:?}")))?;
                if j >= n {
                    return Err(CliError::Usage(format!("--beta line {j} out of range")).into());
                }
                v[j] = 1;
            }
            let beta = PauliString::new(2, vec![0; n], v).map_err(fail)?;
            let state = PhaseState::new(p, beta).map_err(|e| CliError::Usage(e.to_string()))?;
            let alphas = default_alphas(n, a.max_weight.min(2), a.extra, a.seed);
            let ensemble = format!("all strings of weight <= {} plus {} random strings", a.max_weight.min(2), a.extra);
            let r = prs_scan(&state, &alphas, a.threshold, a.mode, a.samples, a.seed, &ensemble).map_err(|e| CliError::Usage(e.to_string()))?;
            Ok(to_json("prs-scan", &r)?)
        }
        Command::IdentityChecks(a) => {
            let mut worst_eq3: f64 = 0.0;
            let mut worst_eq5: f64 = 0.0;
            for k in 0..a.circuits {
                let mut rng = rng_for(a.seed, 0x4944_454e, k as u64);
                let n = 2 + k % 3;
                let c = if k % 2 == 0 { random_haar_circuit(n, 3, &mut rng) } else { random_clifford_circuit(n, 4 * n, &mut rng) }.map_err(fail)?;
                use rand::Rng as _;
                let alpha = loop {
                    let u: Vec<u32> = (0..n).map(|_| rng.gen_range(0..2)).collect();
                    let v: Vec<u32> = (0..n).map(|_| rng.gen_range(0..2)).collect();
                    let s = PauliString::new(2, u, v).map_err(fail)?;
                    if !s.is_identity() {
                        break s;
                    }
                };
                let x = rng.gen_range(0..1u64 << n);
                let lhs = string_expectation_exact(&c, x, &alpha).map_err(fail)?.norm_sqr();
                worst_eq3 = worst_eq3.max((lhs - expectation_squared_trace_form(&c, x, &alpha).map_err(fail)?).abs());
                worst_eq5 = worst_eq5.max((q_alpha_average(&c, &alpha).map_err(fail)? - q_alpha_trace_form(&c, &alpha).map_err(fail)?).abs());
            }
            let circuit = random_circuit(a.sac_n, 6, GateFamily::Any, a.seed).map_err(|e| CliError::Usage(e.to_string()))?;
            let exact = sac_otoc(&circuit, 0, a.sac_n / 2, None, Mode::Exact, 0, a.seed).map_err(|e| CliError::Usage(e.to_string()))?;
            let sampled = sac_otoc(&circuit, 0, a.sac_n / 2, None, Mode::Sampled, a.sac_samples, a.seed).map_err(|e| CliError::Usage(e.to_string()))?;
            let z = sampled.z_score(exact.estimate);
            let ok = worst_eq3 < 1e-10 && worst_eq5 < 1e-10 && z < 5.0;
            let body = json!({
                "circuits": a.circuits,
                "seed": a.seed,
                "max_deviation_single_state": worst_eq3,
                "max_deviation_state_average": worst_eq5,
                "sac_exact": exact,
                "sac_sampled": sampled,
                "sac_z": z,
                "ok": ok,
            });
            validated(to_json("identity-checks", &body)?, ok, "identity deviation above tolerance")
        }
    }
}
