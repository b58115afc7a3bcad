use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use curate_core::dataset::{read_csv_path, write_csv_path};
use curate_core::harness::{self, AnswerKey, ScenarioReport};
use curate_core::llm::{HttpConfig, LlmProvider, RecordingProvider};
use curate_core::session::{ExpertScript, ScriptedExpert};
use curate_core::state::{read_log, replay};
use curate_core::{Policy, Session, SessionConfig, TaskKind};
use serde_json::json;

use crate::server::{self, AppState};
use crate::setup::{build_inputs, build_policy, build_provider, build_registry, ProviderOptions, TaskOptions};

#[derive(Debug, Parser)]
#[command(name = "curate", version, about = "Human-guided curation of tabular datasets")]
pub struct Cli {
    /// Directory of external tool manifests to register next to the builtins.
    #[arg(long, global = true)]
    pub tools_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one headless session to completion.
    Run(Box<RunArgs>),
    /// Serve the HTTP/SSE API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Where session directories are created.
        #[arg(long, default_value = "sessions")]
        workdir: PathBuf,
    },
    /// Inspect the tool registry.
    Tools {
        #[command(subcommand)]
        action: ToolsAction,
    },
    /// Rebuild the final state of a session directory from its event log.
    Replay { dir: PathBuf },
    /// Synthetic corruption and recovery scoring.
    Harness {
        #[command(subcommand)]
        action: HarnessAction,
    },
}

#[derive(Debug, Subcommand)]
pub enum ToolsAction {
    List,
    Describe { name: String },
}

#[derive(Debug, Subcommand)]
pub enum HarnessAction {
    /// Write the clean data, corrupted splits and answer key of a scenario.
    Corrupt {
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a curated CSV against the clean data and answer key.
    Score {
        #[arg(long)]
        clean: PathBuf,
        #[arg(long)]
        key: PathBuf,
        #[arg(long)]
        curated: PathBuf,
        #[arg(long)]
        curated_test: Option<PathBuf>,
    },
    /// Run a scenario end to end; exits non-zero when an expectation fails.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        workdir: Option<PathBuf>,
        /// Record the decisions of the mock provider into a replay fixture.
        #[arg(long)]
        record: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Input CSV; repeat for files that should be merged.
    #[arg(long, required = true)]
    pub data: Vec<PathBuf>,
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long, value_parser = parse_task)]
    pub task: TaskKind,
    /// Label column, or the event column for survival.
    #[arg(long)]
    pub target: String,
    #[arg(long)]
    pub time_col: Option<String>,
    #[arg(long)]
    pub group_col: Option<String>,
    #[arg(long, default_value = "rules")]
    pub policy: String,
    /// mock, replay or http.
    #[arg(long)]
    pub provider: Option<String>,
    #[arg(long)]
    pub fixture: Option<PathBuf>,
    /// Save every provider response to this replay fixture.
    #[arg(long)]
    pub record: Option<PathBuf>,
    /// JSON file with endpoint settings for the http provider.
    #[arg(long)]
    pub http_config: Option<PathBuf>,
    #[arg(long)]
    pub expert_script: Option<PathBuf>,
    #[arg(long)]
    pub workdir: Option<PathBuf>,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub max_iterations: Option<u64>,
    #[arg(long)]
    pub min_rows: Option<usize>,
}

fn parse_task(s: &str) -> Result<TaskKind, String> {
    serde_json::from_value(json!(s)).map_err(|_| format!("unknown task '{s}' (classification, regression, survival)"))
}

fn print_json(v: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

pub fn execute(cli: Cli) -> Result<i32> {
    let registry = Arc::new(build_registry(cli.tools_dir.as_deref())?);
    match cli.command {
        Command::Run(args) => run(*args, registry),
        Command::Serve { port, workdir } => {
            std::fs::create_dir_all(&workdir).with_context(|| format!("creating {}", workdir.display()))?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(server::serve(AppState::new(registry, Some(workdir)), port))?;
            Ok(0)
        }
        Command::Tools { action: ToolsAction::List } => {
            for m in registry.manifests() {
                println!("{:<24} {:<22} {}", m.name, m.category.as_str(), m.description);
            }
            Ok(0)
        }
        Command::Tools { action: ToolsAction::Describe { name } } => {
            let m = registry.manifest(&name).with_context(|| format!("unknown tool '{name}'"))?;
            print_json(m)?;
            Ok(0)
        }
        Command::Replay { dir } => {
            let events = read_log(&dir.join("events.ndjson"))?;
            let state = replay(&events)?;
            print_json(&json!({
                "events": events.len(),
                "step": state.step,
                "dataset_ref": state.dataset_ref,
                "plan_revision": state.plan.revision,
                "episodes": state.episode_meta,
            }))?;
            Ok(0)
        }
        Command::Harness { action } => harness_cmd(action, registry),
    }
}

fn run(args: RunArgs, registry: Arc<curate_core::ToolRegistry>) -> Result<i32> {
    let task = TaskOptions { kind: args.task, target: args.target, time_col: args.time_col, group_col: args.group_col };
    let inputs = build_inputs(&args.data, args.test.as_deref(), &task)?;
    let http: Option<HttpConfig> = match &args.http_config {
        Some(p) => Some(serde_json::from_str(&std::fs::read_to_string(p)?).context("reading http config")?),
        None => None,
    };
    let opts = ProviderOptions { policy: Some(args.policy.clone()), provider: args.provider.clone(), fixture: args.fixture.clone(), http };
    let recorder = match (&args.record, args.policy.as_str()) {
        (Some(_), "llm") => Some(Arc::new(RecordingProvider::new(Box::new(ArcProvider(build_provider(&opts)?))))),
        (Some(_), _) => bail!("--record needs --policy llm"),
        _ => None,
    };
    let policy = match &recorder {
        Some(r) => Policy::Llm(r.clone()),
        None => build_policy(&opts)?,
    };
    let mut config = SessionConfig { seed: args.seed, ..SessionConfig::default() };
    if let Some(m) = args.max_iterations {
        config.max_iterations = m;
    }
    if let Some(m) = args.min_rows {
        config.coordinator.min_rows = m;
    }
    let script = match &args.expert_script {
        Some(p) => ExpertScript::load(p)?,
        None => ExpertScript::default(),
    };
    let mut expert = ScriptedExpert::new(script)?;
    let mut session = Session::new("run", inputs, config, registry, policy, args.workdir.as_deref())?;
    let report = session.run(&mut expert)?;
    if let (Some(r), Some(path)) = (&recorder, &args.record) {
        r.save(path)?;
    }
    for e in &expert.errors {
        eprintln!("expert script: {e}");
    }
    print_json(&report)?;
    Ok(if report.status == curate_core::SessionStatus::Converged { 0 } else { 1 })
}

/// Lets a shared provider be wrapped by the recorder.
struct ArcProvider(Arc<dyn LlmProvider>);

impl LlmProvider for ArcProvider {
    fn name(&self) -> &str {
        self.0.name()
    }

    fn complete(&self, bundle: &curate_core::llm::PromptBundle) -> Result<String, curate_core::llm::LlmError> {
        self.0.complete(bundle)
    }
}

fn harness_cmd(action: HarnessAction, registry: Arc<curate_core::ToolRegistry>) -> Result<i32> {
    match action {
        HarnessAction::Corrupt { scenario, out } => {
            let sc = harness::load_scenario(&scenario)?;
            let (clean, task) = harness::gen_clean(&sc.clean, sc.seed)?;
            let c = harness::corrupt(&clean, &task, &sc.corruptions, sc.seed)?;
            std::fs::create_dir_all(&out)?;
            write_csv_path(&clean, out.join("clean.csv"))?;
            write_csv_path(&c.train, out.join("train.csv"))?;
            for (i, d) in c.extra_files.iter().enumerate() {
                write_csv_path(d, out.join(format!("part_{}.csv", i + 2)))?;
            }
            if let Some(t) = &c.test {
                write_csv_path(t, out.join("test.csv"))?;
            }
            std::fs::write(out.join("key.json"), serde_json::to_string_pretty(&c.key)?)?;
            println!("wrote {}", out.display());
            Ok(0)
        }
        HarnessAction::Score { clean, key, curated, curated_test } => {
            let clean = read_csv_path(&clean)?;
            let key: AnswerKey = serde_json::from_str(&std::fs::read_to_string(&key)?)?;
            let curated = read_csv_path(&curated)?;
            let test = curated_test.as_deref().map(read_csv_path).transpose()?;
            print_json(&harness::recovery_score(&clean, &key, &curated, test.as_ref())?)?;
            Ok(0)
        }
        HarnessAction::Run { scenario, workdir, record } => {
            let sc = harness::load_scenario(&scenario)?;
            let report = match &record {
                Some(path) => {
                    let rec = Arc::new(RecordingProvider::new(Box::new(curate_core::MockProvider)));
                    let r = harness::run_scenario(&sc, registry, workdir.as_deref(), Some(rec.clone()))?;
                    rec.save(path)?;
                    r
                }
                None => harness::run_scenario(&sc, registry, workdir.as_deref(), None)?,
            };
            print_scenario(&report)?;
            Ok(if report.passed() { 0 } else { 1 })
        }
    }
}

fn print_scenario(r: &ScenarioReport) -> Result<()> {
    print_json(r)?;
    for e in &r.expectations {
        eprintln!("{} {}{}", if e.passed { "pass" } else { "FAIL" }, e.name, if e.detail.is_empty() { String::new() } else { format!(" ({})", e.detail) });
    }
    Ok(())
}

