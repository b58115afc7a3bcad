use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::TabularDataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Classification,
    Regression,
    Survival,
}

impl std::str::FromStr for TaskKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "classification" => Ok(TaskKind::Classification),
            "regression" => Ok(TaskKind::Regression),
            "survival" => Ok(TaskKind::Survival),
            other => Err(format!("unknown task kind '{other}'")),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TaskError {
    #[error("survival tasks need a time column")]
    MissingTimeColumn,
    #[error("time column is only valid for survival tasks")]
    UnexpectedTimeColumn,
    #[error("task references unknown column '{0}'")]
    UnknownColumn(String),
}

/// What the curated dataset is for.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_kind: TaskKind,
    pub target_col: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_col: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_col: Option<String>,
}

impl TaskSpec {
    pub fn new(task_kind: TaskKind, target_col: impl Into<String>) -> Self {
        Self { task_kind, target_col: target_col.into(), time_col: None, group_col: None }
    }

    pub fn classification(target: impl Into<String>) -> Self {
        Self::new(TaskKind::Classification, target)
    }

    pub fn regression(target: impl Into<String>) -> Self {
        Self::new(TaskKind::Regression, target)
    }

    pub fn survival(event: impl Into<String>, time: impl Into<String>) -> Self {
        Self { time_col: Some(time.into()), ..Self::new(TaskKind::Survival, event) }
    }

    pub fn with_group(mut self, group: impl Into<String>) -> Self {
        self.group_col = Some(group.into());
        self
    }

    /// Columns the task names: target, time, group.
    pub fn task_columns(&self) -> Vec<&str> {
        let mut v = vec![self.target_col.as_str()];
        v.extend(self.time_col.as_deref());
        v.extend(self.group_col.as_deref());
        v
    }

    pub fn is_task_column(&self, name: &str) -> bool {
        self.task_columns().contains(&name)
    }

    pub fn validate(&self, dataset: &TabularDataset) -> Result<(), TaskError> {
        match (self.task_kind, &self.time_col) {
            (TaskKind::Survival, None) => return Err(TaskError::MissingTimeColumn),
            (TaskKind::Classification | TaskKind::Regression, Some(_)) => {
                return Err(TaskError::UnexpectedTimeColumn)
            }
            _ => {}
        }
        for c in self.task_columns() {
            if dataset.column_index(c).is_none() {
                return Err(TaskError::UnknownColumn(c.to_string()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::read_csv_str;

    #[test]
    fn time_column_iff_survival() {
        let d = read_csv_str("t,e,x\n1,0,2\n2,1,3\n").unwrap();
        assert_eq!(TaskSpec::survival("e", "t").validate(&d), Ok(()));
        assert_eq!(TaskSpec::new(TaskKind::Survival, "e").validate(&d), Err(TaskError::MissingTimeColumn));
        let mut c = TaskSpec::classification("e");
        c.time_col = Some("t".into());
        assert_eq!(c.validate(&d), Err(TaskError::UnexpectedTimeColumn));
        assert_eq!(
            TaskSpec::classification("y").validate(&d),
            Err(TaskError::UnknownColumn("y".into()))
        );
    }
}
