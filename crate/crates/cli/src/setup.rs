//! Turning command-line or API options into session inputs.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use curate_core::dataset::read_csv_path;
use curate_core::llm::{HttpConfig, HttpProvider, LlmProvider, MockProvider, ReplayProvider};
use curate_core::registry::load_manifest_dir;
use curate_core::{Policy, SessionInputs, TaskKind, TaskSpec, ToolRegistry};
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
pub struct TaskOptions {
    pub kind: TaskKind,
    /// Label column; the event indicator for survival.
    pub target: String,
    #[serde(default)]
    pub time_col: Option<String>,
    #[serde(default)]
    pub group_col: Option<String>,
}

impl TaskOptions {
    pub fn spec(&self) -> Result<TaskSpec> {
        let mut t = match self.kind {
            TaskKind::Survival => {
                let time = self.time_col.as_deref().context("survival tasks need a time column")?;
                TaskSpec::survival(&self.target, time)
            }
            kind => TaskSpec::new(kind, &self.target),
        };
        if let Some(g) = &self.group_col {
            t = t.with_group(g);
        }
        Ok(t)
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct ProviderOptions {
    /// `rules` (default) or `llm`.
    #[serde(default)]
    pub policy: Option<String>,
    /// `mock`, `replay` or `http` for the llm policy.
    #[serde(default)]
    pub provider: Option<String>,
    #[serde(default)]
    pub fixture: Option<PathBuf>,
    #[serde(default)]
    pub http: Option<HttpConfig>,
}

pub fn build_provider(opts: &ProviderOptions) -> Result<Arc<dyn LlmProvider>> {
    Ok(match opts.provider.as_deref().unwrap_or("mock") {
        "mock" => Arc::new(MockProvider),
        "replay" => {
            let path = opts.fixture.as_ref().context("the replay provider needs a fixture file")?;
            Arc::new(ReplayProvider::from_file(path)?)
        }
        "http" => Arc::new(HttpProvider::new(opts.http.clone().context("the http provider needs endpoint settings")?)),
        other => bail!("unknown provider '{other}'"),
    })
}

pub fn build_policy(opts: &ProviderOptions) -> Result<Policy> {
    match opts.policy.as_deref().unwrap_or("rules") {
        "rules" => Ok(Policy::Rules),
        "llm" => Ok(Policy::Llm(build_provider(opts)?)),
        other => bail!("unknown policy '{other}'"),
    }
}

pub fn build_inputs(data: &[PathBuf], test: Option<&Path>, task: &TaskOptions) -> Result<SessionInputs> {
    let (first, rest) = data.split_first().context("at least one data file is required")?;
    let read = |p: &Path| read_csv_path(p).with_context(|| format!("reading {}", p.display()));
    let mut inputs = SessionInputs::new(read(first)?, task.spec()?);
    for p in rest {
        inputs.extra_files.push(read(p)?);
    }
    if let Some(t) = test {
        inputs.test = Some(read(t)?);
    }
    Ok(inputs)
}

/// Builtin tools plus any external manifests found in `dir`.
pub fn build_registry(dir: Option<&Path>) -> Result<ToolRegistry> {
    let mut reg = ToolRegistry::with_builtins();
    if let Some(d) = dir {
        for m in load_manifest_dir(d)? {
            reg.register(m)?;
        }
    }
    Ok(reg)
}
