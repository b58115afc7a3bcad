//! Tool catalog and the uniform invocation contract.

mod external;
mod manifest;
mod params;
mod report;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::AtomicBool;
use std::sync::Arc;
use std::time::Duration;

use thiserror::Error;

pub use manifest::{load_manifest_dir, TaskSupport, ToolCategory, ToolKind, ToolManifest};
pub use params::{validate_params, ParamError, ParamSpec, ParamType, Params, ParamsExt};
pub use report::{Flag, ReportStatus, ReportTable, ToolReport};

use crate::dataset::TabularDataset;
use crate::models::FittedModel;
use crate::task::{TaskKind, TaskSpec};

pub const DEFAULT_EXTERNAL_TIMEOUT: Duration = Duration::from_secs(300);

#[derive(Debug, Error, PartialEq)]
pub enum RegistryError {
    #[error("tool '{0}' is already registered")]
    DuplicateName(String),
    #[error("external tool '{0}' has no executable")]
    MissingExecutable(String),
    #[error("builtin tool '{0}' has no implementation")]
    MissingHandler(String),
    #[error("invalid manifest: {0}")]
    InvalidManifest(String),
    #[error("unknown tool '{0}'")]
    UnknownTool(String),
    #[error("tool '{tool}' does not support {task:?} tasks")]
    UnsupportedTask { tool: String, task: TaskKind },
    #[error("invalid parameters for '{tool}': {source}")]
    Params { tool: String, source: ParamError },
    #[error("{0}")]
    Io(String),
}

/// Inputs beyond the primary dataset. Unused fields are ignored by tools
/// that do not need them.
#[derive(Debug, Clone, Default)]
pub struct AuxInputs {
    /// Additional source files (merge).
    pub datasets: Vec<TabularDataset>,
    /// Held-out test split (shift detection, evaluation).
    pub test: Option<TabularDataset>,
    /// Fitted model (interpretation).
    pub model: Option<FittedModel>,
    /// Scratch directory for external tools.
    pub workdir: Option<PathBuf>,
    pub cancel: Option<Arc<AtomicBool>>,
    pub timeout: Option<Duration>,
}

pub struct ToolInput<'a> {
    pub dataset: &'a TabularDataset,
    pub task: &'a TaskSpec,
    pub params: &'a Params,
    pub seed: u64,
    pub aux: &'a AuxInputs,
}

/// What a builtin returns. `dataset: None` means unchanged.
#[derive(Debug, Clone)]
pub struct ToolOutput {
    pub dataset: Option<TabularDataset>,
    pub report: ToolReport,
    pub model: Option<FittedModel>,
}

impl ToolOutput {
    pub fn report(report: ToolReport) -> Self {
        Self { dataset: None, report, model: None }
    }

    pub fn transformed(dataset: TabularDataset, report: ToolReport) -> Self {
        Self { dataset: Some(dataset), report, model: None }
    }
}

pub type BuiltinFn = fn(&ToolInput<'_>) -> Result<ToolOutput, String>;

/// Result of `invoke`: the output snapshot (the input itself when the tool
/// changed nothing or failed) plus the report.
#[derive(Debug, Clone)]
pub struct Invocation {
    pub dataset: TabularDataset,
    pub report: ToolReport,
    pub model: Option<FittedModel>,
    pub params: Params,
}

struct Entry {
    manifest: ToolManifest,
    handler: Option<BuiltinFn>,
}

#[derive(Default)]
pub struct ToolRegistry {
    entries: Vec<Entry>,
    by_name: HashMap<String, usize>,
}

impl ToolRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// A registry holding every builtin tool.
    pub fn with_builtins() -> Self {
        let mut r = Self::new();
        crate::tools::register_builtins(&mut r);
        r
    }

    pub fn register_builtin(&mut self, manifest: ToolManifest, handler: BuiltinFn) -> Result<usize, RegistryError> {
        if manifest.kind != ToolKind::Builtin {
            return Err(RegistryError::InvalidManifest(format!("'{}' is not a builtin", manifest.name)));
        }
        self.insert(manifest, Some(handler))
    }

    /// Registers a manifest. Builtin manifests need a handler, so only
    /// external tools can come through here.
    pub fn register(&mut self, manifest: ToolManifest) -> Result<usize, RegistryError> {
        if manifest.kind == ToolKind::Builtin {
            return Err(RegistryError::MissingHandler(manifest.name.clone()));
        }
        self.insert(manifest, None)
    }

    fn insert(&mut self, manifest: ToolManifest, handler: Option<BuiltinFn>) -> Result<usize, RegistryError> {
        manifest.validate()?;
        if self.by_name.contains_key(&manifest.name) {
            return Err(RegistryError::DuplicateName(manifest.name));
        }
        let id = self.entries.len();
        self.by_name.insert(manifest.name.clone(), id);
        self.entries.push(Entry { manifest, handler });
        Ok(id)
    }

    pub fn manifest(&self, name: &str) -> Option<&ToolManifest> {
        self.by_name.get(name).map(|&i| &self.entries[i].manifest)
    }

    pub fn manifests(&self) -> impl Iterator<Item = &ToolManifest> {
        self.entries.iter().map(|e| &e.manifest)
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.manifest.name.clone()).collect()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.by_name.contains_key(name)
    }

    /// Tools of a category that support the task: builtin deterministic
    /// first, then everything else, each group in registration order.
    pub fn resolve(&self, category: ToolCategory, task: TaskKind) -> Vec<String> {
        let matching: Vec<&ToolManifest> = self
            .entries
            .iter()
            .map(|e| &e.manifest)
            .filter(|m| m.category == category && m.supports(task))
            .collect();
        let first = |m: &ToolManifest| m.kind == ToolKind::Builtin && m.deterministic;
        let (mut ranked, rest): (Vec<&ToolManifest>, Vec<&ToolManifest>) = matching.into_iter().partition(|m| first(m));
        ranked.extend(rest);
        ranked.into_iter().map(|m| m.name.clone()).collect()
    }

    /// Fills defaults and checks bounds without running anything.
    pub fn resolve_params(&self, name: &str, params: &Params) -> Result<Params, RegistryError> {
        let m = self.manifest(name).ok_or_else(|| RegistryError::UnknownTool(name.to_string()))?;
        validate_params(&m.param_schema, params).map_err(|source| RegistryError::Params { tool: name.to_string(), source })
    }

    /// Runs a tool. Errors are reserved for calls that never start (unknown
    /// tool, bad parameters, unsupported task); anything that goes wrong
    /// while running yields a failed report and the unchanged input.
    pub fn invoke(
        &self,
        name: &str,
        dataset: &TabularDataset,
        task: &TaskSpec,
        params: &Params,
        seed: u64,
        aux: &AuxInputs,
    ) -> Result<Invocation, RegistryError> {
        let idx = *self.by_name.get(name).ok_or_else(|| RegistryError::UnknownTool(name.to_string()))?;
        let entry = &self.entries[idx];
        if !entry.manifest.supports(task.task_kind) {
            return Err(RegistryError::UnsupportedTask { tool: name.to_string(), task: task.task_kind });
        }
        let params = self.resolve_params(name, params)?;
        let input = ToolInput { dataset, task, params: &params, seed, aux };

        let (out, mut report, model) = match (entry.manifest.kind, entry.handler) {
            (ToolKind::Builtin, Some(f)) => match f(&input) {
                Ok(o) => (o.dataset, o.report, o.model),
                Err(cause) => (None, ToolReport::failed(name, seed, cause), None),
            },
            (ToolKind::External, _) => {
                let exe = entry.manifest.executable.as_deref().expect("validated at registration");
                let (d, r) = external::run(name, exe, &input, aux.timeout.unwrap_or(DEFAULT_EXTERNAL_TIMEOUT));
                (d, r, None)
            }
            (ToolKind::Builtin, None) => return Err(RegistryError::MissingHandler(name.to_string())),
        };
        report.tool = name.to_string();
        report.seed = seed;

        let names = dataset.column_names();
        let mut out = out;
        if report.is_ok() && !report.well_formed(&names, dataset.row_count()) {
            report = ToolReport::failed(name, seed, "report references columns or rows absent from the input");
            out = None;
        }
        if report.is_ok() && entry.manifest.report_only && out.as_ref().is_some_and(|d| d.fingerprint() != dataset.fingerprint()) {
            report = ToolReport::failed(name, seed, "report-only tool attempted to modify the dataset");
            out = None;
        }
        if !report.is_ok() {
            out = None;
        }
        Ok(Invocation { dataset: out.unwrap_or_else(|| dataset.clone()), report, model, params })
    }
}
