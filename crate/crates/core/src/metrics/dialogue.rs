//! Dialogue belief states and turn-level exact match.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Metric, MetricValue};
use crate::error::{Error, Result};

fn clean(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Slot to value pairs. Requests are an ordinary slot named `request`.
/// Slots are kept sorted, so equality is set equality.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BeliefState(BTreeMap<String, String>);

impl BeliefState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, slot: &str, value: &str) -> Result<()> {
        let slot = clean(slot);
        if self.0.contains_key(&slot) {
            return Err(Error::Invalid(format!("duplicate slot `{slot}`")));
        }
        self.0.insert(slot, clean(value));
        Ok(())
    }

    /// Parses `slot=value, slot: value, …`. An empty string is the empty state.
    pub fn parse(s: &str) -> Result<Self> {
        let mut state = BeliefState::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (slot, value) = part
                .split_once('=')
                .or_else(|| part.split_once(':'))
                .ok_or_else(|| Error::Invalid(format!("belief entry `{part}` lacks `=` or `:`")))?;
            state.insert(slot, value)?;
        }
        Ok(state)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, slot: &str) -> Option<&str> {
        self.0.get(slot).map(String::as_str)
    }

    /// Applies a per-turn change: later values overwrite earlier ones.
    pub fn update(&mut self, change: &BeliefState) {
        for (k, v) in &change.0 {
            self.0.insert(k.clone(), v.clone());
        }
    }
}

impl fmt::Display for BeliefState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|(k, v)| format!("{k}={v}")).collect();
        f.write_str(&parts.join(", "))
    }
}

/// Cumulative states after each turn of a dialogue.
pub fn accumulate(changes: &[BeliefState]) -> Vec<BeliefState> {
    let mut state = BeliefState::new();
    changes
        .iter()
        .map(|c| {
            state.update(c);
            state.clone()
        })
        .collect()
}

/// Percentage of turns whose cumulative predicted state equals the gold one.
pub fn ds_em(predicted: &[BeliefState], gold: &[BeliefState]) -> Result<MetricValue> {
    if predicted.len() != gold.len() {
        return Err(Error::Invalid(format!(
            "ds_em: {} predicted turns vs {} gold turns",
            predicted.len(),
            gold.len()
        )));
    }
    let hits = predicted.iter().zip(gold).filter(|(p, g)| p == g).count();
    let value = if gold.is_empty() { 0.0 } else { 100.0 * hits as f64 / gold.len() as f64 };
    Ok(MetricValue::new(Metric::DsEm, value, gold.len()))
}
