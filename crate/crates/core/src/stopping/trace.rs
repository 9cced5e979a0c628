use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{StopError, StopMode, StopPolicy, StopReason};

/// Evaluated losses for epochs `0..len`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LossTrace {
    pub stage: Option<u8>,
    pub losses: Vec<f64>,
}

impl LossTrace {
    pub fn new(losses: Vec<f64>) -> Self {
        Self { stage: None, losses }
    }

    pub fn with_stage(stage: u8, losses: Vec<f64>) -> Self {
        Self {
            stage: Some(stage),
            losses,
        }
    }

    pub fn len(&self) -> usize {
        self.losses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.losses.is_empty()
    }

    pub fn records(&self) -> impl Iterator<Item = TraceRecord> + '_ {
        self.losses.iter().enumerate().map(|(e, &loss)| TraceRecord {
            stage: self.stage,
            epoch: e as u32,
            loss,
        })
    }
}

/// One line of a loss file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<u8>,
    pub epoch: u32,
    pub loss: f64,
}

impl TraceRecord {
    pub fn parse_line(line: &str, line_no: usize) -> Result<Self, StopError> {
        let r: TraceRecord = serde_json::from_str(line).map_err(|e| StopError::MalformedTrace {
            line: line_no,
            message: e.to_string(),
        })?;
        if !matches!(r.stage, None | Some(1) | Some(2)) {
            return Err(StopError::MalformedTrace {
                line: line_no,
                message: format!("stage must be 1 or 2, got {}", r.stage.unwrap_or_default()),
            });
        }
        Ok(r)
    }

    /// Stage, with a missing tag meaning stage 1.
    pub fn stage_or_default(&self) -> u8 {
        self.stage.unwrap_or(1)
    }
}

/// Parses a line-delimited loss file into one trace per stage. Epochs of
/// each stage must run 0, 1, 2, ... in file order.
pub fn parse_traces(text: &str) -> Result<BTreeMap<u8, LossTrace>, StopError> {
    let mut out: BTreeMap<u8, LossTrace> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let r = TraceRecord::parse_line(line, i + 1)?;
        let stage = r.stage_or_default();
        let t = out
            .entry(stage)
            .or_insert_with(|| LossTrace::with_stage(stage, Vec::new()));
        if r.epoch as usize != t.losses.len() {
            return Err(StopError::MalformedTrace {
                line: i + 1,
                message: format!("stage {stage}: expected epoch {}, got {}", t.losses.len(), r.epoch),
            });
        }
        t.losses.push(r.loss);
    }
    Ok(out)
}

/// Outcome record written for each stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionSummary {
    pub stage: u8,
    pub best_epoch: Option<u32>,
    pub stop_epoch: u32,
    pub reason: StopReason,
    pub mode: StopMode,
    pub patience: u32,
    pub min_delta: f64,
    pub max_epochs: u32,
}

impl DecisionSummary {
    pub fn new(stage: u8, outcome: &super::RunOutcome, policy: &StopPolicy) -> Self {
        Self {
            stage,
            best_epoch: outcome.best_epoch,
            stop_epoch: outcome.stop_epoch,
            reason: outcome.reason,
            mode: policy.mode,
            patience: policy.patience,
            min_delta: policy.min_delta,
            max_epochs: policy.max_epochs,
        }
    }
}
