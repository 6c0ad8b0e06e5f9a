//! Command-line front end: simulate, run single stages, validate trees, evaluate labelers.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use pavement::agents::{self, AgentContext, AgentError, Observation, Plan, SceneSnapshot};
use pavement::bt::{concat_under_sequence, parse_bt_xml, serialize_bt, validate_against_palette, BehaviorTree, NodePalette};
use pavement::eval::{self, EvalConfig, EvalError, RegexRules, SyntheticCorpus};
use pavement::llm::{
    Backend, ChatCompletionsBackend, RetryPolicy, Retrying, ScriptedBackend, ScriptedFixture, TracingBackend,
};
use pavement::orchestrator::{self, metrics_csv, trajectory_csv, trajectory_svg, Outcome, RunOptions, RunRecord};
use pavement::sim::{bundled_scenario, load_scenario, sim_palette};
use pavement::Scenario;

const MODEL_ENV: &str = "PAVEMENT_MODEL";

mod code {
    pub const OK: u8 = 0;
    pub const FAILED: u8 = 1;
    pub const NOT_RECOVERED: u8 = 2;
    pub const CONFIG: u8 = 3;
}

/// Error carrying its exit code.
#[derive(Debug)]
struct Exit(u8, anyhow::Error);

fn config_err(e: impl Into<anyhow::Error>) -> Exit {
    Exit(code::CONFIG, e.into())
}

fn fail(e: impl Into<anyhow::Error>) -> Exit {
    Exit(code::FAILED, e.into())
}

impl From<anyhow::Error> for Exit {
    fn from(e: anyhow::Error) -> Self {
        fail(e)
    }
}

#[derive(Parser)]
#[command(name = "pavement", version, about = "Failure-triggered behavior-tree recovery for a driving simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the baseline and, on failure, the recovery pipeline.
    Simulate(SimulateArgs),
    /// Run one pipeline stage on a file.
    Stage(StageArgs),
    /// Check a tree against a node palette.
    Validate(ValidateArgs),
    /// Score a corpus with the labeling ensemble and search its weights.
    Eval(EvalArgs),
    /// Print the simulator node palette as JSON.
    Palette {
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Write the seeded synthetic corpus as JSONL.
    Corpus {
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        annotated: usize,
        #[arg(long, default_value_t = 150)]
        unannotated: usize,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendKind {
    Scripted,
    Remote,
}

#[derive(Args, Clone)]
struct BackendArgs {
    #[arg(long, value_enum, default_value = "scripted")]
    backend: BackendKind,
    /// Fixture file for the scripted backend, or `bundled`.
    #[arg(long)]
    fixtures: Option<String>,
    /// Model name sent to the remote backend; falls back to $PAVEMENT_MODEL.
    #[arg(long)]
    model: Option<String>,
    /// Append every backend request and reply to this JSONL file.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    retries: u32,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario files; a bundled id such as `fire_truck` also works.
    #[arg(required = true)]
    scenarios: Vec<String>,
    #[command(flatten)]
    backend: BackendArgs,
    /// Baseline tree XML; defaults to the built-in navigate tree.
    #[arg(long)]
    baseline: Option<PathBuf>,
    /// Node palette JSON; defaults to the simulator palette.
    #[arg(long)]
    palette: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    output: PathBuf,
    /// Accepted for uniformity; simulation runs are deterministic.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    save_snapshots: bool,
    /// Leave host wall-clock times out of the run record.
    #[arg(long)]
    no_timing: bool,
    /// Seconds without goal progress before the baseline is declared failed.
    #[arg(long)]
    stall_timeout: Option<f64>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StageKind {
    Describe,
    Plan,
    Generate,
}

#[derive(Args)]
struct StageArgs {
    #[arg(value_enum)]
    stage: StageKind,
    /// Snapshot JSON (describe), observation JSON (plan) or plan JSON (generate).
    input: PathBuf,
    #[command(flatten)]
    backend: BackendArgs,
    /// Scene tag for plan and generate; describe reads it from the snapshot.
    #[arg(long)]
    scene_tag: Option<String>,
    /// Observation JSON whose scene description is given to the generator.
    #[arg(long)]
    context: Option<PathBuf>,
    #[arg(long)]
    palette: Option<PathBuf>,
    /// Output file; stdout when absent.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    tree: PathBuf,
    /// Palette JSON; defaults to the simulator palette.
    palette: Option<PathBuf>,
    /// Also write the report here.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// JSONL corpus, or `synthetic` for the seeded stand-in corpus.
    #[arg(default_value = "synthetic")]
    corpus: String,
    /// Regex rule table JSON; defaults to the bundled rules.
    #[arg(long)]
    rules: Option<PathBuf>,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 0.1)]
    grid_step: f64,
    #[arg(long, default_value = "eval_out")]
    output: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { code::CONFIG } else { code::OK });
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Stage(a) => stage(a),
        Command::Validate(a) => validate(a),
        Command::Eval(a) => evaluate(a),
        Command::Palette { output } => emit(output.as_deref(), &sim_palette().to_json()).map(|_| code::OK).map_err(fail),
        Command::Corpus { seed, annotated, unannotated, output } => {
            let corpus = eval::synthetic_corpus(seed, SyntheticCorpus { annotated, unannotated });
            emit(output.as_deref(), &eval::write_corpus(&corpus)).map(|_| code::OK).map_err(fail)
        }
    };
    match result {
        Ok(c) => ExitCode::from(c),
        Err(Exit(c, e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(c)
        }
    }
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => write(p, text),
        None => {
            print!("{text}");
            if !text.ends_with('\n') {
                println!();
            }
            Ok(())
        }
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn read(path: &Path) -> Result<String, Exit> {
    fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(config_err)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Exit> {
    serde_json::from_str(&read(path)?)
        .with_context(|| format!("parsing {}", path.display()))
        .map_err(config_err)
}

fn model_name(args: &BackendArgs) -> Result<String, Exit> {
    let from_env = std::env::var(MODEL_ENV).ok().filter(|m| !m.is_empty());
    match (args.model.clone().or(from_env), args.backend) {
        (Some(m), _) => Ok(m),
        (None, BackendKind::Scripted) => Ok("scripted".to_string()),
        (None, BackendKind::Remote) => Err(config_err(anyhow!("remote backend needs --model or ${MODEL_ENV}"))),
    }
}

fn build_backend(args: &BackendArgs) -> Result<Arc<dyn Backend>, Exit> {
    let inner: Box<dyn Backend> = match args.backend {
        BackendKind::Scripted => {
            let fixtures = args
                .fixtures
                .as_deref()
                .ok_or_else(|| config_err(anyhow!("scripted backend needs --fixtures <file|bundled>")))?;
            let fixture = if fixtures == "bundled" {
                ScriptedFixture::bundled()
            } else {
                ScriptedFixture::load(Path::new(fixtures))
                    .with_context(|| format!("loading fixtures {fixtures}"))
                    .map_err(config_err)?
            };
            Box::new(ScriptedBackend::new(fixture))
        }
        BackendKind::Remote => {
            if args.fixtures.is_some() {
                return Err(config_err(anyhow!("--fixtures only applies to the scripted backend")));
            }
            let policy = RetryPolicy { max_attempts: args.retries.max(1), ..RetryPolicy::default() };
            Box::new(Retrying { inner: ChatCompletionsBackend::from_env(), policy })
        }
    };
    Ok(match &args.trace {
        Some(path) => Arc::new(
            TracingBackend::create(inner, path)
                .with_context(|| format!("opening trace {}", path.display()))
                .map_err(config_err)?,
        ),
        None => Arc::from(inner),
    })
}

fn load_palette(path: Option<&Path>) -> Result<NodePalette, Exit> {
    match path {
        Some(p) => NodePalette::from_json(&read(p)?)
            .with_context(|| format!("parsing palette {}", p.display()))
            .map_err(config_err),
        None => Ok(sim_palette()),
    }
}

/// A readable path wins; otherwise a bundled id, with or without `.json`.
fn resolve_scenario(arg: &str) -> Result<Scenario, Exit> {
    let path = Path::new(arg);
    if path.exists() {
        return load_scenario(path)
            .with_context(|| format!("loading scenario {arg}"))
            .map_err(config_err);
    }
    let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or(arg);
    bundled_scenario(id).ok_or_else(|| config_err(anyhow!("no scenario file or bundled scenario named {arg}")))
}

fn outcome_code(outcome: Outcome) -> u8 {
    match outcome {
        Outcome::BaselineSucceeded | Outcome::RecoveredByGeneratedTree => code::OK,
        Outcome::GeneratedTreeFailed | Outcome::PipelineError | Outcome::PipelineHaltedNonCritical => {
            code::NOT_RECOVERED
        }
    }
}

fn simulate(a: SimulateArgs) -> Result<u8, Exit> {
    let ctx = AgentContext::new(model_name(&a.backend)?);
    let backend = build_backend(&a.backend)?;
    let palette = load_palette(a.palette.as_deref())?;
    let baseline = match &a.baseline {
        Some(p) => parse_bt_xml(&read(p)?)
            .with_context(|| format!("parsing baseline {}", p.display()))
            .map_err(config_err)?,
        None => orchestrator::baseline_tree(),
    };
    let scenarios = a.scenarios.iter().map(|s| resolve_scenario(s)).collect::<Result<Vec<_>, _>>()?;
    let mut options = RunOptions { timing: !a.no_timing, ..RunOptions::default() };
    if let Some(t) = a.stall_timeout {
        options.policy.stall_timeout = t;
        options.policy.window = options.policy.window.min(t);
    }
    options.policy.check().map_err(config_err)?;

    let batch = scenarios.len() > 1;
    let mut records: Vec<RunRecord> = Vec::new();
    let mut worst = code::OK;
    for scenario in &scenarios {
        let report = orchestrator::run_scenario(scenario, &baseline, &palette, backend.clone(), &ctx, &options)
            .with_context(|| format!("running {}", scenario.id))
            .map_err(|e| Exit(code::NOT_RECOVERED, e))?;
        let dir = if batch { a.output.join(&scenario.id) } else { a.output.clone() };
        let r = &report.record;
        write(&dir.join("run_record.json"), r.to_json())?;
        write(&dir.join("trajectory.csv"), trajectory_csv(&report.trajectory))?;
        write(&dir.join("trajectory.svg"), trajectory_svg(&report.final_world, &report.trajectory))?;
        if let Some(o) = &r.observation {
            write(&dir.join("observation.json"), pretty(o))?;
        }
        if let Some(p) = &r.plan {
            write(&dir.join("plan.json"), pretty(p))?;
        }
        if let Some(t) = &r.generated_tree {
            write(&dir.join("generated_tree.xml"), serialize_bt(t))?;
        }
        if a.save_snapshots {
            if let Some(snap) = &report.snapshot {
                write(&dir.join("snapshot.json"), pretty(snap))?;
                if let Some(img) = &snap.image {
                    write(&dir.join("snapshot.png"), img.to_png())?;
                }
            }
        }
        let c = outcome_code(r.outcome);
        eprintln!(
            "{}: {:?} (goal distance {:.2} m, sim time {:.2} s)",
            r.scenario_id, r.outcome, r.final_goal_distance, r.sim_time
        );
        worst = worst.max(c);
        records.push(report.record);
    }
    let jsonl: String = records.iter().map(|r| r.to_json_line() + "\n").collect();
    write(&a.output.join("runs.jsonl"), jsonl)?;
    write(&a.output.join("metrics.csv"), metrics_csv(&records))?;
    if let Ok(summary) = eval::aggregate_metrics(&records) {
        write(&a.output.join("metrics_summary.json"), summary.to_json() + "\n")?;
    }
    Ok(worst)
}

fn pretty<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("value serializes") + "\n"
}

fn stage(a: StageArgs) -> Result<u8, Exit> {
    let mut ctx = AgentContext::new(model_name(&a.backend)?);
    if let Some(tag) = &a.scene_tag {
        ctx = ctx.with_scene_tag(tag.clone());
    }
    let backend = build_backend(&a.backend)?;
    let agent_exit = |e: AgentError| match e {
        AgentError::NotCritical => Exit(code::NOT_RECOVERED, e.into()),
        AgentError::InvalidInput(_) => config_err(e),
        e => fail(e),
    };
    let (text, usage) = match a.stage {
        StageKind::Describe => {
            let snapshot: SceneSnapshot = read_json(&a.input)?;
            snapshot.check().map_err(|e| config_err(anyhow!(e)))?;
            let (obs, usage) = agents::describe(&snapshot, backend.as_ref(), &ctx).map_err(agent_exit)?;
            (pretty(&obs), usage)
        }
        StageKind::Plan => {
            let obs: Observation = read_json(&a.input)?;
            let (plan, usage) = agents::plan(&obs, backend.as_ref(), &ctx).map_err(agent_exit)?;
            (pretty(&plan), usage)
        }
        StageKind::Generate => {
            let plan: Plan = read_json(&a.input)?;
            plan.check().map_err(|e| config_err(anyhow!(e)))?;
            let palette = load_palette(a.palette.as_deref())?;
            let context = match &a.context {
                Some(p) => read_json::<Observation>(p)?.scene_description,
                None => String::new(),
            };
            let mut usage = agents::Usage::default();
            let mut parts: Vec<BehaviorTree> = Vec::new();
            for goal in &plan.goals {
                let (g, u) = agents::generate(goal, &palette, &context, backend.as_ref(), &ctx).map_err(agent_exit)?;
                usage.merge(&u);
                parts.push(g.tree);
            }
            let tree = concat_under_sequence(parts, "recovery").map_err(fail)?;
            (serialize_bt(&tree), usage)
        }
    };
    emit(a.output.as_deref(), &text).map_err(fail)?;
    eprintln!(
        "{} call(s), {} tokens, {:.2} s generation time",
        usage.calls,
        usage.tokens(),
        pavement::llm::duration_to_secs(usage.latency)
    );
    Ok(code::OK)
}

fn validate(a: ValidateArgs) -> Result<u8, Exit> {
    let palette = load_palette(a.palette.as_deref())?;
    let text = read(&a.tree)?;
    let (json, ok) = match parse_bt_xml(&text) {
        Ok(tree) => {
            let report = validate_against_palette(&tree, &palette);
            if !report.is_valid() {
                eprint!("{report}");
            }
            let ok = report.is_valid();
            (serde_json::json!({"valid": ok, "violations": report.violations}), ok)
        }
        Err(e) => {
            eprintln!("parse error: {e}");
            (serde_json::json!({"valid": false, "parse_error": e.to_string(), "violations": []}), false)
        }
    };
    let body = serde_json::to_string_pretty(&json).expect("json") + "\n";
    print!("{body}");
    if let Some(out) = &a.output {
        write(out, &body)?;
    }
    Ok(if ok { code::OK } else { code::FAILED })
}

fn evaluate(a: EvalArgs) -> Result<u8, Exit> {
    let records = if a.corpus == "synthetic" {
        eval::synthetic_corpus(a.seed, SyntheticCorpus::default())
    } else {
        eval::load_corpus(Path::new(&a.corpus))
            .with_context(|| format!("loading corpus {}", a.corpus))
            .map_err(config_err)?
    };
    let rules = match &a.rules {
        Some(p) => RegexRules::from_json(&read(p)?).map_err(config_err)?,
        None => RegexRules::default_rules(),
    };
    let config = EvalConfig { step: a.grid_step, seed: a.seed, ..EvalConfig::default() };
    let report = eval::evaluate(&records, &rules, &config).map_err(|e| match e {
        EvalError::NoAnnotated | EvalError::TooFewAnnotated { .. } | EvalError::Invalid(_) => config_err(e),
        e => fail(e),
    })?;
    write(&a.output.join("eval_report.json"), report.to_json() + "\n")?;
    write(&a.output.join("scores.csv"), report.scores_csv())?;
    write(&a.output.join("weights.json"), pretty(&report.weights))?;
    let w = report.weights;
    println!(
        "weights (regressor, ir, regex) = ({}, {}, {}); search size {}; held-out L1 {:.4}; accuracy {:.3}; F1 {:.3}",
        w.w_regressor,
        w.w_ir,
        w.w_regex,
        report.search_size,
        report.holdout_l1,
        report.holdout_binary.accuracy,
        report.holdout_binary.f1
    );
    Ok(code::OK)
}
