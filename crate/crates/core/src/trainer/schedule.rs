use serde::{Deserialize, Serialize};

use crate::data::TaskSpec;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    pub peak: f64,
    pub warmup: usize,
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        ScheduleSpec { peak: 2.5e-3, warmup: 800 }
    }
}

impl ScheduleSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.peak > 0.0 && self.peak.is_finite()) {
            return Err(Error::Config { field: "schedule.peak".into(), message: "must be positive".into() });
        }
        if self.warmup == 0 {
            return Err(Error::Config { field: "schedule.warmup".into(), message: "must be at least 1".into() });
        }
        Ok(())
    }
}

/// Linear warmup to `peak` at iteration `warmup`, then `peak·√(warmup/k)`.
/// Iterations count from 1; `k = 0` gives 0.
pub fn lr_at(k: usize, spec: &ScheduleSpec) -> f64 {
    let (k, w) = (k as f64, spec.warmup as f64);
    if k <= w {
        spec.peak * k / w
    } else {
        spec.peak * (w / k).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    FullyJoint,
    Curriculum,
    AntiSquad,
    AntiSquadIwsltCnndm,
    AntiPlusMnli,
}

impl Strategy {
    /// Tasks trained alone before the switch iteration.
    pub fn phase_one(self) -> &'static [&'static str] {
        match self {
            Strategy::FullyJoint => &[],
            Strategy::Curriculum => &["sst", "qa_srl", "qa_zre", "woz", "wikisql", "mwsc"],
            Strategy::AntiSquad => &["squad"],
            Strategy::AntiSquadIwsltCnndm => &["squad", "iwslt", "cnn_dm"],
            Strategy::AntiPlusMnli => &["squad", "iwslt", "cnn_dm", "mnli"],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurriculumSpec {
    pub strategy: Strategy,
    /// First iteration of fully joint training.
    #[serde(default)]
    pub switch: usize,
}

impl CurriculumSpec {
    pub fn fully_joint() -> Self {
        CurriculumSpec { strategy: Strategy::FullyJoint, switch: 0 }
    }

    /// Positions in `order` of the phase-one tasks, in `order`'s order. A
    /// task counts when it is, or stands in for, a listed benchmark task.
    pub fn phase_one(&self, order: &[TaskSpec]) -> Vec<usize> {
        let names = self.strategy.phase_one();
        order
            .iter()
            .enumerate()
            .filter(|(_, t)| names.iter().any(|n| t.plays(n)))
            .map(|(i, _)| i)
            .collect()
    }
}

/// Index into `order` of the task to train at iteration `iter` (from 0).
/// Before the switch the phase-one tasks are cycled; from the switch on all
/// tasks are cycled, starting again from the first.
pub fn next_task(iter: usize, spec: &CurriculumSpec, order: &[TaskSpec]) -> Result<usize> {
    if order.is_empty() {
        return Err(Error::Invalid("no tasks to schedule".into()));
    }
    if spec.strategy == Strategy::FullyJoint {
        return Ok(iter % order.len());
    }
    let phase = spec.phase_one(order);
    if phase.is_empty() {
        return Err(Error::Config {
            field: "curriculum.strategy".into(),
            message: format!("{:?} has no phase-one task among the configured tasks", spec.strategy),
        });
    }
    Ok(if iter < spec.switch {
        phase[iter % phase.len()]
    } else {
        (iter - spec.switch) % order.len()
    })
}
