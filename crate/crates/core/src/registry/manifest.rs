use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::params::ParamSpec;
use super::RegistryError;
use crate::task::TaskKind;

/// Capability tag: the data-centric issue a tool addresses, or its
/// model-centric role.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolCategory {
    Eda,
    MultipleMeasurements,
    MultipleFiles,
    InconsistentData,
    DataExtraction,
    FeatureRedundancy,
    Outliers,
    LabelLeakage,
    Missingness,
    NoisyLabels,
    DataValuation,
    SubgroupChallenges,
    DataShift,
    Imbalance,
    Curation,
    ModelBuilding,
    Interpretability,
}

impl ToolCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            ToolCategory::Eda => "eda",
            ToolCategory::MultipleMeasurements => "multiple_measurements",
            ToolCategory::MultipleFiles => "multiple_files",
            ToolCategory::InconsistentData => "inconsistent_data",
            ToolCategory::DataExtraction => "data_extraction",
            ToolCategory::FeatureRedundancy => "feature_redundancy",
            ToolCategory::Outliers => "outliers",
            ToolCategory::LabelLeakage => "label_leakage",
            ToolCategory::Missingness => "missingness",
            ToolCategory::NoisyLabels => "noisy_labels",
            ToolCategory::DataValuation => "data_valuation",
            ToolCategory::SubgroupChallenges => "subgroup_challenges",
            ToolCategory::DataShift => "data_shift",
            ToolCategory::Imbalance => "imbalance",
            ToolCategory::Curation => "curation",
            ToolCategory::ModelBuilding => "model_building",
            ToolCategory::Interpretability => "interpretability",
        }
    }
}

impl std::str::FromStr for ToolCategory {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| format!("unknown category '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskSupport {
    Classification,
    Regression,
    Survival,
    Any,
}

impl TaskSupport {
    pub fn covers(self, task: TaskKind) -> bool {
        matches!(
            (self, task),
            (TaskSupport::Any, _)
                | (TaskSupport::Classification, TaskKind::Classification)
                | (TaskSupport::Regression, TaskKind::Regression)
                | (TaskSupport::Survival, TaskKind::Survival)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolKind {
    Builtin,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolManifest {
    pub name: String,
    pub category: ToolCategory,
    pub supported_tasks: Vec<TaskSupport>,
    #[serde(default)]
    pub param_schema: BTreeMap<String, ParamSpec>,
    pub kind: ToolKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub executable: Option<PathBuf>,
    #[serde(default = "default_true")]
    pub deterministic: bool,
    /// Report-only tools never change the dataset.
    #[serde(default)]
    pub report_only: bool,
    /// Deletes rows or columns; the coordinator needs expert approval first.
    #[serde(default)]
    pub requires_approval: bool,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
}

fn default_true() -> bool {
    true
}

impl ToolManifest {
    pub fn builtin(name: &str, category: ToolCategory, tasks: &[TaskSupport]) -> Self {
        Self {
            name: name.to_string(),
            category,
            supported_tasks: tasks.to_vec(),
            param_schema: BTreeMap::new(),
            kind: ToolKind::Builtin,
            executable: None,
            deterministic: true,
            report_only: false,
            requires_approval: false,
            description: String::new(),
        }
    }

    pub fn param(mut self, name: &str, spec: ParamSpec) -> Self {
        self.param_schema.insert(name.to_string(), spec);
        self
    }

    pub fn report_only(mut self) -> Self {
        self.report_only = true;
        self
    }

    pub fn requires_approval(mut self) -> Self {
        self.requires_approval = true;
        self
    }

    pub fn describe(mut self, d: &str) -> Self {
        self.description = d.to_string();
        self
    }

    pub fn supports(&self, task: TaskKind) -> bool {
        self.supported_tasks.iter().any(|s| s.covers(task))
    }

    pub fn validate(&self) -> Result<(), RegistryError> {
        if self.name.trim().is_empty() {
            return Err(RegistryError::InvalidManifest("empty tool name".into()));
        }
        if self.kind == ToolKind::External && self.executable.is_none() {
            return Err(RegistryError::MissingExecutable(self.name.clone()));
        }
        for (p, spec) in &self.param_schema {
            if spec.default.is_none() && !spec.required {
                return Err(RegistryError::InvalidManifest(format!(
                    "parameter '{p}' of '{}' has neither a default nor is required",
                    self.name
                )));
            }
        }
        Ok(())
    }
}

/// Loads every `*.json` manifest in a directory, sorted by file name.
/// Relative executables resolve against the directory.
pub fn load_manifest_dir(dir: &Path) -> Result<Vec<ToolManifest>, RegistryError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| RegistryError::Io(e.to_string()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let mut out = Vec::with_capacity(paths.len());
    for p in paths {
        let text = std::fs::read_to_string(&p).map_err(|e| RegistryError::Io(e.to_string()))?;
        let mut m: ToolManifest = serde_json::from_str(&text)
            .map_err(|e| RegistryError::InvalidManifest(format!("{}: {e}", p.display())))?;
        if let Some(exe) = &m.executable {
            if exe.is_relative() {
                m.executable = Some(dir.join(exe));
            }
        }
        out.push(m);
    }
    Ok(out)
}
