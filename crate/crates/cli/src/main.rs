use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use thiserror::Error;

use rahier::adversary::{self, AdversaryBudget, Certificate, ClaimSpec, Outcome, Target, TransformerRef, Variant, VerifyError};
use rahier::formats::{self, NameHeader};
use rahier::machine::{external, run, Budget, ExternalCommand, RunError, Transformer};
use rahier::names::{make_synthetic, Name, NameError, ReprTag, Schedule, SyntheticSpec, Wobble};
use rahier::nondet::{nd_binary, nd_fast_subsequence, nd_level_down, simulate, NondetBudget};
use rahier::reductions::{join_level1, join_lt_gt, liminf_to_lower1, lower1_to_liminf, WeakenEdge};
use rahier::registry;
use rahier::weierstrass::{weier_eval_prime, WeierLevel, WeierstrassName};
use rahier::Rational;

#[derive(Parser)]
#[command(name = "rahier", version, about = "Convert, evaluate and attack machines on rational-stream names of reals")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Global {
    /// Step budget: per run, per guess path, or per adversary round.
    #[arg(long, global = true)]
    budget_steps: Option<u64>,
    /// Number of outputs to produce.
    #[arg(long, global = true, default_value_t = 32)]
    budget_emits: u64,
    /// Emits a guess path needs to survive.
    #[arg(long, global = true, default_value_t = 6)]
    depth: u64,
    /// Adversary rounds for the multi-round variants.
    #[arg(long, global = true, default_value_t = 6)]
    rounds: u64,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a name file along a representation edge.
    Convert {
        #[arg(long)]
        edge: String,
        /// One input, or lower and upper inputs for the joining edges.
        #[arg(required = true, num_args = 1..=2)]
        inputs: Vec<PathBuf>,
        /// Output file; a directory for nondeterministic edges.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Repeat the last value of a finite input.
        #[arg(long)]
        pad_last: bool,
    },
    /// Run a deterministic transformer on a name file.
    Eval {
        #[command(flatten)]
        machine: MachineArgs,
        /// Polynomial file (or one polynomial per line) giving a limit function name.
        #[arg(long, conflicts_with_all = ["transformer", "external"])]
        poly: Option<PathBuf>,
        input: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long)]
        pad_last: bool,
    },
    /// Explore every guess path of a nondeterministic transformer.
    Nondet {
        #[arg(long)]
        transformer: String,
        input: PathBuf,
        /// Directory receiving one file per surviving path plus summary.json.
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long)]
        pad_last: bool,
    },
    /// Try to falsify a claimed transformer; writes a certificate on success.
    Adversary {
        #[command(flatten)]
        machine: MachineArgs,
        #[arg(long)]
        target: String,
        #[arg(long)]
        variant: String,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Replay a certificate and re-check its violated condition.
    VerifyCertificate { path: PathBuf },
    /// Write a synthetic name with a recorded schedule.
    Gen {
        /// The real named, as p/q.
        #[arg(long, allow_hyphen_values = true)]
        target: String,
        #[arg(long, default_value = "FAST")]
        tag: String,
        #[arg(long)]
        level: Option<u32>,
        #[arg(long, default_value_t = 0)]
        junk: u32,
        #[arg(long)]
        settle: Option<u64>,
        #[arg(long, value_enum, default_value_t = WobbleArg::None)]
        wobble: WobbleArg,
        /// Number of values to write.
        #[arg(short = 'n', long, default_value_t = 64)]
        count: u64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// List built-in transformer ids.
    List,
}

#[derive(Args)]
struct MachineArgs {
    /// Registry id.
    #[arg(long)]
    transformer: Option<String>,
    /// Command line of an external machine speaking the wire protocol.
    #[arg(long, conflicts_with = "transformer")]
    external: Option<String>,
    /// Input tag of an external machine, e.g. FAST:0.
    #[arg(long)]
    in_tag: Option<String>,
    #[arg(long)]
    out_tag: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum WobbleArg {
    None,
    Below,
    Above,
    Alternating,
    Seeded,
}

impl From<WobbleArg> for Wobble {
    fn from(w: WobbleArg) -> Self {
        match w {
            WobbleArg::None => Wobble::None,
            WobbleArg::Below => Wobble::Below,
            WobbleArg::Above => Wobble::Above,
            WobbleArg::Alternating => Wobble::Alternating,
            WobbleArg::Seeded => Wobble::Seeded,
        }
    }
}

#[derive(Debug, Error)]
enum Failure {
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Unsupported(String),
    #[error("no guess path survived")]
    NoSurvivors,
    #[error("claim not falsified")]
    NotFalsified,
    #[error("certificate rejected: {0}")]
    Rejected(String),
    #[error("{0}")]
    UnknownId(String),
    #[error("{0}")]
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Runtime(_) | Failure::Rejected(_) => 1,
            Failure::Parse(_) => 2,
            Failure::Unsupported(_) => 3,
            Failure::NoSurvivors => 4,
            Failure::NotFalsified => 5,
            Failure::UnknownId(_) => 6,
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Parse(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn emit(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => write(p, text),
        None => {
            let _ = io::stdout().write_all(text.as_bytes());
            Ok(())
        }
    }
}

fn load_name(path: &Path, pad_last: bool) -> Result<Name, Failure> {
    let f = formats::parse_name_file(&read(path)?).map_err(|e| Failure::Parse(format!("{}: {e}", path.display())))?;
    Ok(if pad_last {
        if f.values.is_empty() {
            return Err(Failure::Parse(format!("{}: --pad-last needs at least one value", path.display())));
        }
        Name::padded(f.header.tag, f.values)
    } else {
        Name::finite(f.header.tag, f.values)
    })
}

/// `FAST:0`, `FAST` with `--level`, `HOTZ`.
fn parse_tag(s: &str, level: Option<u32>) -> Result<ReprTag, Failure> {
    let (kind, lvl) = match s.split_once(':') {
        Some((k, l)) => (k, Some(l.parse::<u32>().map_err(|e| Failure::Parse(format!("tag level {l:?}: {e}")))?)),
        None => (s, level),
    };
    let kind = kind.to_ascii_uppercase();
    ReprTag::from_parts(&kind, lvl)
        .or_else(|e| if lvl.is_none() { ReprTag::from_parts(&kind, Some(0)) } else { Err(e) })
        .map_err(|e| Failure::Parse(e.to_string()))
}

fn parse_rational(s: &str) -> Result<Rational, Failure> {
    s.parse().map_err(|e| Failure::Parse(format!("{s:?}: {e}")))
}

fn run_error(e: RunError) -> Failure {
    match e {
        RunError::Input { error: NameError::Exhausted { len }, partial } => Failure::Runtime(format!(
            "input exhausted after {len} values ({} outputs written before); pass --pad-last to repeat the last value",
            partial.emitted.len()
        )),
        other => Failure::Runtime(other.to_string()),
    }
}

enum Edge {
    Det(Transformer),
    /// Lower and upper inputs interleaved into a bracket name first.
    Join(Transformer),
    Nondet(Transformer),
}

fn edge(name: &str) -> Option<Edge> {
    let retag = |a: ReprTag, b: ReprTag| Transformer::identity(a).with_tags(a, b).with_id(name);
    Some(match name {
        "rho-to-lt" => Edge::Det(WeakenEdge::RhoToLt.transformer()),
        "rho-to-gt" => Edge::Det(WeakenEdge::RhoToGt.transformer()),
        "lt-to-rho1" => Edge::Det(WeakenEdge::LtToRho1.transformer()),
        "rho1-to-lt1" => Edge::Det(WeakenEdge::Rho1ToLt1.transformer()),
        "liminf-to-lt1" => Edge::Det(liminf_to_lower1(ReprTag::Liminf)),
        "lt1-to-liminf" => Edge::Det(lower1_to_liminf()),
        "rho-to-hotz" => Edge::Det(retag(ReprTag::Fast(0), ReprTag::Hotz)),
        "hotz-to-rho1" => Edge::Det(retag(ReprTag::Hotz, ReprTag::Fast(1))),
        "lt+gt-to-rho" => Edge::Join(join_lt_gt()),
        "lt1+gt1-to-rho1" => Edge::Join(join_level1()),
        "rho1-to-rho" => Edge::Nondet(nd_fast_subsequence()),
        "rho2-to-rho1" => Edge::Nondet(nd_level_down(1)),
        "rho-to-binary" => Edge::Nondet(nd_binary()),
        _ => return None,
    })
}

const EDGES: &str = "rho-to-lt, rho-to-gt, lt-to-rho1, rho1-to-lt1, liminf-to-lt1, lt1-to-liminf, rho-to-hotz, \
hotz-to-rho1, lt+gt-to-rho, lt1+gt1-to-rho1, rho1-to-rho, rho2-to-rho1, rho-to-binary";

fn expect_tag(name: &Name, tag: ReprTag, what: &str) -> Result<(), Failure> {
    if name.tag() == tag {
        Ok(())
    } else {
        Err(Failure::Unsupported(format!("{what} expects a {tag} input, got {}", name.tag())))
    }
}

fn run_det(g: &Global, t: &Transformer, input: &Name, params: serde_json::Value) -> Result<(String, u64), Failure> {
    let budget = Budget::new(g.budget_steps.unwrap_or(10_000_000), g.budget_emits);
    let trace = run(t, input, budget).map_err(run_error)?;
    let header = NameHeader { tag: t.out_tag(), params };
    Ok((formats::write_name_file(&header, &trace.emitted), trace.emitted.len() as u64))
}

fn report(g: &Global, value: serde_json::Value, text: String) {
    let _ = match g.format {
        Format::Json => writeln!(io::stdout(), "{}", serde_json::to_string_pretty(&value).expect("json")),
        Format::Text => writeln!(io::stdout(), "{text}"),
    };
}

fn nondet_run(
    g: &Global,
    t: &Transformer,
    input: &Name,
    output: Option<&Path>,
    label: &str,
) -> Result<(), Failure> {
    expect_tag(input, t.in_tag(), label)?;
    let budget = NondetBudget { max_survivors: 64, ..NondetBudget::new(g.depth, g.budget_steps.unwrap_or(2_000)) };
    let res = simulate(t, input, &budget).map_err(|e| Failure::Runtime(e.to_string()))?;
    let mut files = Vec::new();
    if let Some(dir) = output {
        fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("{}: {e}", dir.display())))?;
        for (i, s) in res.survivors.iter().enumerate() {
            let file = format!("path-{i:03}.name");
            let header = NameHeader { tag: t.out_tag(), params: json!({ "choices": s.path.choices }) };
            write(&dir.join(&file), &formats::write_name_file(&header, &s.trace.emitted))?;
            files.push(file);
        }
    }
    let summary = json!({
        "machine": label,
        "depth": g.depth,
        "survivors": res.survivors.len(),
        "explored": res.explored,
        "aborted": res.aborted,
        "exhausted": res.exhausted,
        "truncated": res.truncated,
        "files": files,
        "outputs": res.survivors.iter().map(|s| s.trace.emitted.iter().map(|q| q.to_string()).collect::<Vec<_>>()).collect::<Vec<_>>(),
    });
    if let Some(dir) = output {
        write(&dir.join("summary.json"), &(serde_json::to_string_pretty(&summary).expect("json") + "\n"))?;
    }
    let mut text = format!(
        "{} survivors ({} explored, {} aborted, {} exhausted{})",
        res.survivors.len(),
        res.explored,
        res.aborted,
        res.exhausted,
        if res.truncated { ", truncated" } else { "" }
    );
    for s in &res.survivors {
        let vals: Vec<String> = s.trace.emitted.iter().map(|q| q.to_string()).collect();
        text.push_str(&format!("\n  {}", vals.join(" ")));
    }
    report(g, summary, text);
    if res.survivors.is_empty() {
        return Err(Failure::NoSurvivors);
    }
    Ok(())
}

fn resolve_machine(m: &MachineArgs, default_tags: Option<(ReprTag, ReprTag)>) -> Result<(Transformer, TransformerRef), Failure> {
    match (&m.transformer, &m.external) {
        (Some(id), None) => {
            let t = registry::lookup(id).ok_or_else(|| Failure::UnknownId(format!("unknown transformer {id:?}")))?;
            Ok((t, TransformerRef::Registry(id.clone())))
        }
        (None, Some(cmdline)) => {
            let cmd = ExternalCommand::parse(cmdline).ok_or_else(|| Failure::Parse(format!("bad command line {cmdline:?}")))?;
            let tag = |s: &Option<String>, d: Option<ReprTag>| match (s, d) {
                (Some(s), _) => parse_tag(s, None),
                (None, Some(t)) => Ok(t),
                (None, None) => Err(Failure::Parse("--in-tag and --out-tag are required with --external".into())),
            };
            let in_tag = tag(&m.in_tag, default_tags.map(|t| t.0))?;
            let out_tag = tag(&m.out_tag, default_tags.map(|t| t.1))?;
            let t = external(cmd, in_tag, out_tag);
            Ok((t, TransformerRef::External { command: cmdline.clone(), in_tag, out_tag }))
        }
        _ => Err(Failure::Parse("give exactly one of --transformer or --external".into())),
    }
}

fn cmd(cli: Cli) -> Result<(), Failure> {
    let g = &cli.global;
    match cli.command {
        Command::Convert { edge: name, inputs, output, pad_last } => {
            let e = edge(&name).ok_or_else(|| Failure::Unsupported(format!("unsupported edge {name:?}; known: {EDGES}")))?;
            let names = inputs.iter().map(|p| load_name(p, pad_last)).collect::<Result<Vec<_>, _>>()?;
            let params = json!({ "edge": name });
            match e {
                Edge::Det(t) => {
                    if names.len() != 1 {
                        return Err(Failure::Parse(format!("{name} takes one input")));
                    }
                    expect_tag(&names[0], t.in_tag(), &name)?;
                    let (text, n) = run_det(g, &t, &names[0], params)?;
                    emit(output.as_deref(), &text)?;
                    if output.is_some() {
                        report(g, json!({ "edge": name, "outputs": n }), format!("wrote {n} values"));
                    }
                }
                Edge::Join(t) => {
                    let [lower, upper] = names.as_slice() else {
                        return Err(Failure::Parse(format!("{name} takes a lower and an upper input")));
                    };
                    let d = t.in_tag().level().expect("bracket level");
                    expect_tag(lower, ReprTag::Lower(d), &name)?;
                    expect_tag(upper, ReprTag::Upper(d), &name)?;
                    let joined = Name::interleave(t.in_tag(), lower.clone(), upper.clone());
                    let (text, n) = run_det(g, &t, &joined, params)?;
                    emit(output.as_deref(), &text)?;
                    if output.is_some() {
                        report(g, json!({ "edge": name, "outputs": n }), format!("wrote {n} values"));
                    }
                }
                Edge::Nondet(t) => {
                    if names.len() != 1 {
                        return Err(Failure::Parse(format!("{name} takes one input")));
                    }
                    nondet_run(g, &t, &names[0], output.as_deref(), &name)?;
                }
            }
            Ok(())
        }
        Command::Eval { machine, poly, input, output, pad_last } => {
            let name = load_name(&input, pad_last)?;
            let t = match poly {
                Some(path) => {
                    let text = read(&path)?;
                    let polys = match formats::parse_polynomial(&text) {
                        Ok(p) => vec![p],
                        Err(_) => formats::parse_polynomial_lines(&text)
                            .map_err(|e| Failure::Parse(format!("{}: {e}", path.display())))?,
                    };
                    if polys.is_empty() {
                        return Err(Failure::Parse(format!("{}: no polynomials", path.display())));
                    }
                    let last = polys.len() - 1;
                    let fname = WeierstrassName::from_fn(WeierLevel::Limit, move |m| polys[(m as usize).min(last)].clone());
                    weier_eval_prime(&fname).map_err(|e| Failure::Unsupported(e.to_string()))?
                }
                None => resolve_machine(&machine, None)?.0,
            };
            expect_tag(&name, t.in_tag(), t.id())?;
            let (text, n) = run_det(g, &t, &name, json!({ "transformer": t.id() }))?;
            emit(output.as_deref(), &text)?;
            if output.is_some() {
                report(g, json!({ "transformer": t.id(), "outputs": n }), format!("wrote {n} values"));
            }
            Ok(())
        }
        Command::Nondet { transformer, input, output, pad_last } => {
            let t = registry::lookup(&transformer)
                .ok_or_else(|| Failure::UnknownId(format!("unknown transformer {transformer:?}")))?;
            let name = load_name(&input, pad_last)?;
            nondet_run(g, &t, &name, output.as_deref(), &transformer)
        }
        Command::Adversary { machine, target, variant, output } => {
            let target = Target::parse(&target).ok_or_else(|| Failure::Parse(format!("unknown target {target:?}")))?;
            let variant = Variant::parse(&variant).ok_or_else(|| Failure::Parse(format!("unknown variant {variant:?}")))?;
            let (t, tref) = resolve_machine(&machine, Some(variant.tags()))?;
            let claim = ClaimSpec { transformer: tref, in_tag: t.in_tag(), out_tag: t.out_tag(), target, variant };
            let budget = AdversaryBudget { steps_per_round: g.budget_steps.unwrap_or(100_000), rounds: g.rounds };
            let outcome = adversary::attack(&t, &claim, &budget).map_err(|e| match e {
                adversary::AdversaryError::TagMismatch { .. } | adversary::AdversaryError::NoRounds => {
                    Failure::Unsupported(e.to_string())
                }
                other => Failure::Runtime(other.to_string()),
            })?;
            let text = match &outcome {
                Outcome::Falsified { certificate } => {
                    let json = serde_json::to_string_pretty(certificate).expect("certificate serializes") + "\n";
                    if let Some(p) = &output {
                        write(p, &json)?;
                    }
                    format!("falsified: {}", certificate.summary)
                }
                Outcome::NonProductive { round, steps, .. } => {
                    format!("not falsified: no commitment in round {round} within {steps} steps")
                }
                Outcome::Refuted { reason } => format!("not falsified: {reason}"),
            };
            let value = match &outcome {
                Outcome::Falsified { certificate } => json!({ "outcome": "falsified", "summary": certificate.summary, "rounds": certificate.rounds }),
                other => serde_json::to_value(other).expect("outcome serializes"),
            };
            report(g, value, text);
            match outcome {
                Outcome::Falsified { .. } => Ok(()),
                _ => Err(Failure::NotFalsified),
            }
        }
        Command::VerifyCertificate { path } => {
            let cert: Certificate = serde_json::from_str(&read(&path)?)
                .map_err(|e| Failure::Parse(format!("{}: {e}", path.display())))?;
            match adversary::verify(&cert, &registry::lookup) {
                Ok(()) => {
                    report(g, json!({ "valid": true }), "certificate verified".into());
                    Ok(())
                }
                Err(VerifyError::UnknownTransformer(id)) => Err(Failure::UnknownId(format!("transformer {id:?} is not in this build"))),
                Err(e) => Err(Failure::Rejected(e.to_string())),
            }
        }
        Command::Gen { target, tag, level, junk, settle, wobble, count, output } => {
            let x = parse_rational(&target)?;
            let tag = parse_tag(&tag, level)?;
            let schedule = Schedule { junk, settle, wobble: wobble.into(), seed: g.seed };
            let spec = SyntheticSpec::new(x, tag, schedule);
            let name = make_synthetic(&spec).map_err(|e| Failure::Unsupported(e.to_string()))?;
            let values = name.prefix(count).map_err(|e| Failure::Runtime(e.to_string()))?;
            let params = json!({ "target": spec.target, "schedule": spec.schedule });
            emit(output.as_deref(), &formats::write_name_file(&NameHeader { tag, params }, &values))
        }
        Command::List => {
            let ids = registry::ids();
            report(g, json!(ids), ids.join("\n"));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match cmd(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if !matches!(f, Failure::NotFalsified | Failure::NoSurvivors) {
                eprintln!("error: {f}");
            }
            ExitCode::from(f.code())
        }
    }
}

