use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::Path;
use std::time::{Duration, Instant};

use serde::Serialize;
use serde_json::{json, Value};
use snowkit_core::io::write_atomic;
use snowkit_core::stopping::{
    parse_traces, savgol_smooth, Checkpoint, Decision, DecisionSummary, RunOutcome, StopReason, TraceRecord,
    TwoStageSchedule,
};
use snowkit_core::{run_early_stop, two_stage_run, LossTrace, SessionState, StopError, StopPolicy};

use crate::args::MonitorArgs;
use crate::commands::paths_json;
use crate::error::{CliError, Result};
use crate::staging::Staging;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StopSummary {
    pub stages: Vec<DecisionSummary>,
    pub best: Checkpoint,
}

/// Batch mode: one trace per stage, judged by the library controllers.
pub fn summarize(traces: &BTreeMap<u8, LossTrace>, policies: &[StopPolicy; 2]) -> Result<StopSummary> {
    match (traces.get(&1), traces.get(&2)) {
        (None, None) => Err(StopError::EmptyTrace.into()),
        (None, Some(_)) => Err(CliError::Data("stage-2 records without a stage-1 trace".into())),
        (Some(t1), None) => {
            let r = run_early_stop(t1, &policies[0])?;
            let best = Checkpoint::Stage1(r.best_epoch.expect("a fresh session accepts its first loss"));
            Ok(StopSummary {
                stages: vec![DecisionSummary::new(1, &r, &policies[0])],
                best,
            })
        }
        (Some(t1), Some(t2)) => {
            let sched = TwoStageSchedule {
                stage1: policies[0],
                stage2: policies[1],
                ..Default::default()
            };
            let r = two_stage_run(t1, t2, &sched)?;
            Ok(StopSummary {
                stages: vec![
                    DecisionSummary::new(1, &r.stage1, &policies[0]),
                    DecisionSummary::new(2, &r.stage2, &policies[1]),
                ],
                best: r.best,
            })
        }
    }
}

/// One answer to a trace record in follow mode.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecisionLine {
    pub stage: u8,
    pub epoch: u32,
    pub loss: f64,
    pub decision: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub best_epoch: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stop_epoch: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<StopReason>,
}

/// Incremental controller for follow mode. Records of a stage that has
/// already stopped are ignored; a stage-2 record arriving while stage 1 is
/// still running ends stage 1 as exhausted.
pub struct Follower {
    policies: [StopPolicy; 2],
    stages: u8,
    current: u8,
    session: SessionState,
    closed: Vec<(DecisionSummary, Option<u32>, f64)>,
    finished: bool,
}

impl Follower {
    pub fn new(policies: [StopPolicy; 2], stages: u8) -> Self {
        Self {
            policies,
            stages,
            current: 1,
            session: SessionState::new(),
            closed: Vec::new(),
            finished: false,
        }
    }

    pub fn finished(&self) -> bool {
        self.finished
    }

    fn policy(&self) -> &StopPolicy {
        &self.policies[self.current as usize - 1]
    }

    fn close(&mut self, stop_epoch: u32, reason: StopReason) {
        let outcome = RunOutcome {
            best_epoch: self.session.best_epoch,
            stop_epoch,
            reason,
            state: self.session.clone(),
        };
        let summary = DecisionSummary::new(self.current, &outcome, self.policy());
        self.closed.push((summary, self.session.best_epoch, self.session.l_min));
        if self.current < self.stages {
            self.current += 1;
            self.session = SessionState::with_incumbent(self.session.l_min);
        } else {
            self.finished = true;
        }
    }

    pub fn feed(&mut self, r: TraceRecord, line: usize) -> Result<Option<DecisionLine>> {
        let stage = r.stage_or_default();
        if self.finished || stage < self.current || stage > self.stages {
            return Ok(None);
        }
        if stage > self.current {
            if self.session.epoch == 0 {
                return Err(StopError::MalformedTrace {
                    line,
                    message: "stage-2 record before any stage-1 record".into(),
                }
                .into());
            }
            self.close(self.session.epoch - 1, StopReason::TraceExhausted);
        }
        if r.epoch != self.session.epoch {
            return Err(StopError::MalformedTrace {
                line,
                message: format!("stage {stage}: expected epoch {}, got {}", self.session.epoch, r.epoch),
            }
            .into());
        }
        let policy = *self.policy();
        let d = self.session.observe(&policy, r.loss)?;
        let mut out = DecisionLine {
            stage,
            epoch: r.epoch,
            loss: r.loss,
            decision: "continue",
            best_epoch: None,
            stop_epoch: None,
            reason: None,
        };
        if let Decision::Stop {
            best_epoch,
            stop_epoch,
            reason,
        } = d
        {
            out.decision = "stop";
            out.best_epoch = best_epoch;
            out.stop_epoch = Some(stop_epoch);
            out.reason = Some(reason);
            self.close(stop_epoch, reason);
        }
        Ok(Some(out))
    }

    /// Closes any running stage and reports the outcome.
    pub fn finish(mut self) -> Result<StopSummary> {
        if !self.finished && self.session.epoch > 0 {
            self.stages = self.current;
            self.close(self.session.epoch - 1, StopReason::TraceExhausted);
        }
        let best = match self.closed.as_slice() {
            [] => return Err(StopError::EmptyTrace.into()),
            [(_, b1, _)] => Checkpoint::Stage1(b1.expect("a fresh session accepts its first loss")),
            [(_, b1, _), (_, b2, _), ..] => match b2 {
                Some(e) => Checkpoint::Stage2(*e),
                None => Checkpoint::Stage1(b1.expect("a fresh session accepts its first loss")),
            },
        };
        Ok(StopSummary {
            stages: self.closed.into_iter().map(|(s, _, _)| s).collect(),
            best,
        })
    }
}

fn data_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn follow(a: &MonitorArgs, policies: [StopPolicy; 2]) -> Result<StopSummary> {
    let mut follower = Follower::new(policies, a.stages);
    if let Some(dir) = a.decisions.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| data_err(dir, e))?;
    }
    let mut out = File::create(&a.decisions).map_err(|e| data_err(&a.decisions, e))?;
    let poll = Duration::from_millis(a.poll_ms);
    let timeout = a.timeout_secs.map(Duration::from_secs_f64);
    let mut offset = 0u64;
    let mut pending: Vec<u8> = Vec::new();
    let mut line_no = 0usize;
    let mut last_data = Instant::now();

    let mut handle = |line: &[u8], line_no: usize, follower: &mut Follower| -> Result<()> {
        let text = std::str::from_utf8(line).map_err(|e| data_err(&a.trace, format!("line {line_no}: {e}")))?;
        if text.trim().is_empty() {
            return Ok(());
        }
        let rec = TraceRecord::parse_line(text, line_no)?;
        if let Some(d) = follower.feed(rec, line_no)? {
            let mut s = serde_json::to_string(&d).expect("decision serializes");
            s.push('\n');
            out.write_all(s.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| data_err(&a.decisions, e))?;
        }
        Ok(())
    };

    loop {
        match File::open(&a.trace) {
            Ok(mut f) => {
                let mut buf = Vec::new();
                f.seek(SeekFrom::Start(offset))
                    .and_then(|_| f.read_to_end(&mut buf))
                    .map_err(|e| data_err(&a.trace, e))?;
                if !buf.is_empty() {
                    offset += buf.len() as u64;
                    last_data = Instant::now();
                    pending.extend_from_slice(&buf);
                    while let Some(i) = pending.iter().position(|&b| b == b'\n') {
                        let line: Vec<u8> = pending.drain(..=i).collect();
                        line_no += 1;
                        handle(&line[..i], line_no, &mut follower)?;
                        if follower.finished() {
                            break;
                        }
                    }
                }
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(data_err(&a.trace, e)),
        }
        if follower.finished() {
            break;
        }
        if timeout.is_some_and(|t| last_data.elapsed() >= t) {
            // A last record without a newline still counts.
            if !pending.is_empty() {
                line_no += 1;
                let line = std::mem::take(&mut pending);
                handle(&line, line_no, &mut follower)?;
            }
            break;
        }
        std::thread::sleep(poll);
    }
    follower.finish()
}

fn smoothed(traces: &BTreeMap<u8, LossTrace>, window: usize, order: usize) -> Result<String> {
    let mut out = String::new();
    for (&stage, t) in traces {
        let s = savgol_smooth(t, window, order)?;
        for r in LossTrace::with_stage(stage, s.losses).records() {
            out.push_str(&serde_json::to_string(&r).expect("record serializes"));
            out.push('\n');
        }
    }
    Ok(out)
}

pub fn run(a: &MonitorArgs) -> Result<Value> {
    let policies = a.policies();
    for p in &policies {
        p.validate()?;
    }
    let (summary, traces) = if a.follow {
        let summary = follow(a, policies)?;
        let traces = match &a.smoothed_out {
            Some(_) => parse_traces(&std::fs::read_to_string(&a.trace).map_err(|e| data_err(&a.trace, e))?)?,
            None => BTreeMap::new(),
        };
        (summary, traces)
    } else {
        let text = std::fs::read_to_string(&a.trace).map_err(|e| data_err(&a.trace, e))?;
        let traces = parse_traces(&text).map_err(|e| data_err(&a.trace, e))?;
        (summarize(&traces, &policies)?, traces)
    };

    let mut st = Staging::new();
    let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    text.push('\n');
    write_atomic(&st.file(&a.out)?, text.as_bytes())?;
    if let Some(p) = &a.smoothed_out {
        write_atomic(
            &st.file(p)?,
            smoothed(&traces, a.smooth_window, a.smooth_order)?.as_bytes(),
        )?;
    }
    let outputs = st.commit()?;
    Ok(json!({
        "outputs": paths_json(&outputs),
        "stages": summary.stages.iter().map(|s| json!({
            "stage": s.stage,
            "best_epoch": s.best_epoch,
            "stop_epoch": s.stop_epoch,
            "reason": s.reason,
        })).collect::<Vec<_>>(),
        "best": summary.best,
    }))
}
