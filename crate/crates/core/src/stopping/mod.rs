//! Patience-based early stopping over evaluated losses, the two-stage
//! training session built on it, and loss-curve smoothing.

mod savgol;
mod trace;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use savgol::{savgol_coefficients, savgol_smooth, DEFAULT_SAVGOL_ORDER, DEFAULT_SAVGOL_WINDOW};
pub use trace::{parse_traces, DecisionSummary, LossTrace, TraceRecord};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StopError {
    #[error("invalid policy: {0}")]
    InvalidPolicy(&'static str),
    #[error("session already finished")]
    Finished,
    #[error("loss must be finite, got {0}")]
    NonFiniteLoss(f64),
    #[error("empty loss trace")]
    EmptyTrace,
    #[error("invalid smoothing window {window} for order {order} and {len} samples")]
    InvalidWindow { window: usize, order: usize, len: usize },
    #[error("line {line}: {message}")]
    MalformedTrace { line: usize, message: String },
}

/// How an epoch is judged to improve on the reference loss `l_min`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopMode {
    /// `loss < l_min + δ`; `l_min` follows every accepted loss, so it may
    /// drift upwards by less than `δ` per step.
    #[default]
    PaperVerbatim,
    /// `loss < l_min − δ`.
    Conventional,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopPolicy {
    pub patience: u32,
    pub min_delta: f64,
    pub max_epochs: u32,
    pub mode: StopMode,
}

impl Default for StopPolicy {
    fn default() -> Self {
        Self {
            patience: 10,
            min_delta: 0.001,
            max_epochs: 50,
            mode: StopMode::PaperVerbatim,
        }
    }
}

impl StopPolicy {
    pub fn validate(&self) -> Result<(), StopError> {
        if self.patience < 1 {
            return Err(StopError::InvalidPolicy("patience must be at least 1"));
        }
        if !(self.min_delta >= 0.0 && self.min_delta.is_finite()) {
            return Err(StopError::InvalidPolicy("min_delta must be finite and non-negative"));
        }
        if self.max_epochs < 1 {
            return Err(StopError::InvalidPolicy("max_epochs must be at least 1"));
        }
        Ok(())
    }

    fn improves(&self, loss: f64, l_min: f64) -> bool {
        match self.mode {
            StopMode::PaperVerbatim => loss < l_min + self.min_delta,
            StopMode::Conventional => loss < l_min - self.min_delta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Patience,
    EpochBudget,
    /// The trace ended before either limit was reached.
    TraceExhausted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    Continue,
    /// `best_epoch` is `None` when no epoch beat the incumbent the session
    /// started with.
    Stop {
        best_epoch: Option<u32>,
        stop_epoch: u32,
        reason: StopReason,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub epoch: u32,
    pub loss: f64,
    pub improved: bool,
    pub decision: Decision,
}

/// Mutable state of one stopping session.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionState {
    /// Consecutive non-improving epochs.
    pub counter: u32,
    /// Next epoch to be observed.
    pub epoch: u32,
    pub best_epoch: Option<u32>,
    pub l_min: f64,
    pub finished: bool,
    pub history: Vec<Observation>,
}

impl Default for SessionState {
    fn default() -> Self {
        Self::with_incumbent(f64::INFINITY)
    }
}

impl SessionState {
    pub fn new() -> Self {
        Self::default()
    }

    /// A session whose best model so far comes from elsewhere, with loss `l_min`.
    pub fn with_incumbent(l_min: f64) -> Self {
        Self {
            counter: 0,
            epoch: 0,
            best_epoch: None,
            l_min,
            finished: false,
            history: Vec::new(),
        }
    }

    /// Feeds the loss evaluated at epoch `self.epoch`.
    pub fn observe(&mut self, policy: &StopPolicy, loss: f64) -> Result<Decision, StopError> {
        if self.finished {
            return Err(StopError::Finished);
        }
        if !loss.is_finite() {
            return Err(StopError::NonFiniteLoss(loss));
        }
        let e = self.epoch;
        let improved = policy.improves(loss, self.l_min);
        if improved {
            self.l_min = loss;
            self.counter = 0;
            self.best_epoch = Some(e);
        } else {
            self.counter += 1;
        }
        self.epoch += 1;
        let reason = if self.counter >= policy.patience {
            Some(StopReason::Patience)
        } else if self.epoch >= policy.max_epochs {
            Some(StopReason::EpochBudget)
        } else {
            None
        };
        let decision = match reason {
            Some(reason) => {
                self.finished = true;
                Decision::Stop {
                    best_epoch: self.best_epoch,
                    stop_epoch: e,
                    reason,
                }
            }
            None => Decision::Continue,
        };
        self.history.push(Observation {
            epoch: e,
            loss,
            improved,
            decision,
        });
        Ok(decision)
    }

    /// Pure form of [`SessionState::observe`].
    pub fn step(&self, policy: &StopPolicy, loss: f64) -> Result<(SessionState, Decision), StopError> {
        let mut next = self.clone();
        let d = next.observe(policy, loss)?;
        Ok((next, d))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub best_epoch: Option<u32>,
    pub stop_epoch: u32,
    pub reason: StopReason,
    pub state: SessionState,
}

fn run_from(state: SessionState, losses: &[f64], policy: &StopPolicy) -> Result<RunOutcome, StopError> {
    policy.validate()?;
    if losses.is_empty() {
        return Err(StopError::EmptyTrace);
    }
    let mut state = state;
    for &loss in losses {
        if let Decision::Stop {
            best_epoch,
            stop_epoch,
            reason,
        } = state.observe(policy, loss)?
        {
            return Ok(RunOutcome {
                best_epoch,
                stop_epoch,
                reason,
                state,
            });
        }
    }
    Ok(RunOutcome {
        best_epoch: state.best_epoch,
        stop_epoch: state.epoch - 1,
        reason: StopReason::TraceExhausted,
        state,
    })
}

/// Folds [`SessionState::observe`] over a trace until it stops.
pub fn run_early_stop(trace: &LossTrace, policy: &StopPolicy) -> Result<RunOutcome, StopError> {
    run_from(SessionState::new(), &trace.losses, policy)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoStageSchedule {
    pub stage1: StopPolicy,
    pub stage2: StopPolicy,
    /// Whether the encoder is frozen in each stage. Recorded only; the
    /// trainer enforces it.
    pub freeze_encoder: [bool; 2],
}

impl Default for TwoStageSchedule {
    fn default() -> Self {
        Self {
            stage1: StopPolicy::default(),
            stage2: StopPolicy::default(),
            freeze_encoder: [true, false],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "stage", content = "epoch", rename_all = "snake_case")]
pub enum Checkpoint {
    Stage1(u32),
    Stage2(u32),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoStageOutcome {
    pub stage1: RunOutcome,
    pub stage2: RunOutcome,
    pub best: Checkpoint,
}

/// Runs stage 1, then stage 2 starting from stage 1's best model as the
/// incumbent: a stage 2 that never improves returns the stage-1 checkpoint.
pub fn two_stage_run(
    stage1: &LossTrace,
    stage2: &LossTrace,
    sched: &TwoStageSchedule,
) -> Result<TwoStageOutcome, StopError> {
    let s1 = run_early_stop(stage1, &sched.stage1)?;
    let stage1_best = s1.best_epoch.expect("a fresh session always accepts its first loss");
    let s2 = run_from(
        SessionState::with_incumbent(s1.state.l_min),
        &stage2.losses,
        &sched.stage2,
    )?;
    let best = match s2.best_epoch {
        Some(e) => Checkpoint::Stage2(e),
        None => Checkpoint::Stage1(stage1_best),
    };
    Ok(TwoStageOutcome {
        stage1: s1,
        stage2: s2,
        best,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn policy(patience: u32, min_delta: f64, mode: StopMode) -> StopPolicy {
        StopPolicy {
            patience,
            min_delta,
            max_epochs: 50,
            mode,
        }
    }

    fn trace(v: &[f64]) -> LossTrace {
        LossTrace::new(v.to_vec())
    }

    #[test]
    fn decreasing_runs_to_budget() {
        let losses: Vec<f64> = (0..60).map(|i| 10.0 - i as f64 * 0.1).collect();
        let p = StopPolicy::default();
        let mut s = SessionState::new();
        for (i, &l) in losses.iter().take(49).enumerate() {
            assert_eq!(s.observe(&p, l).unwrap(), Decision::Continue, "epoch {i}");
        }
        assert_eq!(
            s.observe(&p, losses[49]).unwrap(),
            Decision::Stop {
                best_epoch: Some(49),
                stop_epoch: 49,
                reason: StopReason::EpochBudget
            }
        );
        assert_eq!(s.observe(&p, 0.0), Err(StopError::Finished));
    }

    #[test]
    fn conventional_patience() {
        let r = run_early_stop(
            &trace(&[1.0, 0.8, 0.85, 0.86, 0.87]),
            &policy(2, 0.001, StopMode::Conventional),
        )
        .unwrap();
        assert_eq!(
            (r.best_epoch, r.stop_epoch, r.reason),
            (Some(1), 3, StopReason::Patience)
        );
    }

    #[test]
    fn verbatim_rule_accepts_small_rise() {
        let t = trace(&[1.0, 0.8, 0.805, 0.81]);
        let v = run_early_stop(&t, &policy(10, 0.01, StopMode::PaperVerbatim)).unwrap();
        assert_eq!(v.best_epoch, Some(3));
        assert_eq!(v.state.history[2].improved, true);
        let c = run_early_stop(&t, &policy(10, 0.01, StopMode::Conventional)).unwrap();
        assert_eq!(c.best_epoch, Some(1));
        // After three epochs the verbatim session had moved its best to epoch 2.
        let mut s = SessionState::new();
        let p = policy(10, 0.01, StopMode::PaperVerbatim);
        for l in [1.0, 0.8, 0.805] {
            s.observe(&p, l).unwrap();
        }
        assert_eq!((s.best_epoch, s.l_min), (Some(2), 0.805));
    }

    #[test]
    fn single_epoch() {
        let r = run_early_stop(&trace(&[0.3]), &StopPolicy::default()).unwrap();
        assert_eq!(
            (r.best_epoch, r.stop_epoch, r.reason),
            (Some(0), 0, StopReason::TraceExhausted)
        );
    }

    #[test]
    fn valley_at_epoch_five() {
        let mut v: Vec<f64> = (0..6).map(|i| 1.0 - 0.1 * i as f64).collect();
        v.extend((1..30).map(|i| 0.5 + 0.02 * i as f64));
        let r = run_early_stop(&trace(&v), &policy(10, 0.01, StopMode::PaperVerbatim)).unwrap();
        assert_eq!((r.best_epoch, r.stop_epoch), (Some(5), 15));
    }

    #[test]
    fn flat_trace_conventional() {
        let r = run_early_stop(&trace(&[0.5; 20]), &policy(4, 0.0, StopMode::Conventional)).unwrap();
        assert_eq!((r.best_epoch, r.stop_epoch), (Some(0), 4));
    }

    #[test]
    fn empty_and_invalid() {
        assert_eq!(
            run_early_stop(&trace(&[]), &StopPolicy::default()),
            Err(StopError::EmptyTrace)
        );
        assert!(run_early_stop(&trace(&[1.0]), &policy(0, 0.0, StopMode::Conventional)).is_err());
        let mut s = SessionState::new();
        assert_eq!(
            s.observe(&StopPolicy::default(), f64::NAN).unwrap_err().to_string(),
            "loss must be finite, got NaN"
        );
    }

    #[test]
    fn stage_two_never_improving_keeps_stage_one() {
        let s1 = trace(&[1.0, 0.7, 0.5, 0.45, 0.44]);
        let s2 = trace(&(0..20).map(|i| 0.6 + 0.01 * i as f64).collect::<Vec<_>>());
        let sched = TwoStageSchedule::default();
        let out = two_stage_run(&s1, &s2, &sched).unwrap();
        assert_eq!(out.best, Checkpoint::Stage1(4));
        assert_eq!(out.stage2.stop_epoch, sched.stage2.patience - 1);
        assert_eq!(out.stage2.best_epoch, None);
    }

    #[test]
    fn both_stages_decreasing() {
        let s1 = trace(&[1.0, 0.9, 0.8]);
        let s2 = trace(&[0.7, 0.6, 0.5, 0.4]);
        let out = two_stage_run(&s1, &s2, &TwoStageSchedule::default()).unwrap();
        assert_eq!(out.stage1.best_epoch, Some(2));
        assert_eq!(out.best, Checkpoint::Stage2(3));
        assert!(two_stage_run(&trace(&[]), &s2, &TwoStageSchedule::default()).is_err());
    }

    #[test]
    fn step_is_pure() {
        let s = SessionState::new();
        let p = StopPolicy::default();
        let (a, da) = s.step(&p, 0.4).unwrap();
        let (b, db) = s.step(&p, 0.4).unwrap();
        assert_eq!((a, da), (b, db));
        assert_eq!(s, SessionState::new());
    }
}
