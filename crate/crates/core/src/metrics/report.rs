use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{deca_score, Metric};
use crate::data::tasks::DECATHLON;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskScore {
    pub task: String,
    pub metric: Metric,
    pub value: f64,
    pub count: usize,
}

/// Per-task scores, plus decaScore when every benchmark task is present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub tasks: Vec<TaskScore>,
    pub deca_score: Option<f64>,
}

impl EvaluationReport {
    pub fn new(tasks: Vec<TaskScore>) -> Result<Self> {
        for (i, t) in tasks.iter().enumerate() {
            if tasks[..i].iter().any(|u| u.task == t.task) {
                return Err(Error::Invalid(format!("task `{}` reported twice", t.task)));
            }
        }
        let deca = DECATHLON
            .iter()
            .map(|name| tasks.iter().find(|t| t.task == *name).map(|t| t.value))
            .collect::<Option<Vec<f64>>>();
        let deca_score = match deca {
            Some(values) => Some(deca_score(&values)?),
            None => None,
        };
        Ok(EvaluationReport { tasks, deca_score })
    }

    /// Combines separately computed reports.
    pub fn merge(reports: &[EvaluationReport]) -> Result<Self> {
        Self::new(reports.iter().flat_map(|r| r.tasks.iter().cloned()).collect())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn render(&self) -> String {
        let mut out = format!("{:<12} {:<6} {:>8} {:>8}\n", "task", "metric", "value", "count");
        for t in &self.tasks {
            out.push_str(&format!(
                "{:<12} {:<6} {:>8.2} {:>8}\n",
                t.task,
                t.metric.to_string(),
                t.value,
                t.count
            ));
        }
        if let Some(d) = self.deca_score {
            out.push_str(&format!("decaScore {d:.1}\n"));
        }
        out
    }
}
