//! The ordered record of a simulation run.
//!
//! Each record serializes to one tab-separated line with a fixed column
//! order: `time kind app container node queue delta detail`. Missing values
//! are written as `-`. Times are seconds with millisecond precision, so a
//! parsed log is identical to the one that was written.

use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::resource::Resources;
use crate::scheduler::{ContainerId, NodeId, RequestKind};
use crate::time::SimTime;
use crate::workload::{AppId, AppType};

pub const HEADER: &str = "# time\tkind\tapp\tcontainer\tnode\tqueue\tdelta\tdetail";

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LogEvent {
    AppSubmitted {
        app: AppId,
        app_type: AppType,
        benchmark: String,
        queue: String,
    },
    ContainerStarted {
        app: AppId,
        container: ContainerId,
        node: NodeId,
        queue: String,
        demand: Resources,
        kind: RequestKind,
    },
    ContainerReleased {
        app: AppId,
        container: ContainerId,
        node: NodeId,
        queue: String,
        demand: Resources,
        kind: RequestKind,
    },
    AppRunning {
        app: AppId,
        queue: String,
    },
    AppCompleted {
        app: AppId,
        queue: String,
    },
    AppFailed {
        app: AppId,
        queue: String,
    },
    BatchArrived {
        app: AppId,
        batch: u64,
    },
    BatchStarted {
        app: AppId,
        batch: u64,
    },
    BatchFinished {
        app: AppId,
        batch: u64,
    },
    RunEnd,
}

impl LogEvent {
    pub fn kind_str(&self) -> &'static str {
        match self {
            LogEvent::AppSubmitted { .. } => "APP_SUBMIT",
            LogEvent::ContainerStarted { .. } => "CONTAINER_START",
            LogEvent::ContainerReleased { .. } => "CONTAINER_RELEASE",
            LogEvent::AppRunning { .. } => "APP_RUNNING",
            LogEvent::AppCompleted { .. } => "APP_COMPLETE",
            LogEvent::AppFailed { .. } => "APP_FAIL",
            LogEvent::BatchArrived { .. } => "BATCH_ARRIVE",
            LogEvent::BatchStarted { .. } => "BATCH_START",
            LogEvent::BatchFinished { .. } => "BATCH_FINISH",
            LogEvent::RunEnd => "RUN_END",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LogRecord {
    pub time: SimTime,
    pub event: LogEvent,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EventLog {
    pub records: Vec<LogRecord>,
}

fn kind_str(k: RequestKind) -> &'static str {
    match k {
        RequestKind::Am => "am",
        RequestKind::Task => "task",
    }
}

fn batch_str(b: u64) -> String {
    format!("b{b:05}")
}

impl LogRecord {
    fn columns(&self) -> [String; 8] {
        let dash = || "-".to_string();
        let mut c = [
            self.time.to_string(),
            self.event.kind_str().to_string(),
            dash(),
            dash(),
            dash(),
            dash(),
            dash(),
            dash(),
        ];
        match &self.event {
            LogEvent::AppSubmitted {
                app,
                app_type,
                benchmark,
                queue,
            } => {
                c[2] = app.to_string();
                c[5] = queue.clone();
                c[7] = format!("{app_type}:{benchmark}");
            }
            LogEvent::ContainerStarted {
                app,
                container,
                node,
                queue,
                demand,
                kind,
            } => {
                c[2] = app.to_string();
                c[3] = container.to_string();
                c[4] = node.to_string();
                c[5] = queue.clone();
                c[6] = format!("+{}:+{}", demand.vcores, demand.memory_mb);
                c[7] = kind_str(*kind).to_string();
            }
            LogEvent::ContainerReleased {
                app,
                container,
                node,
                queue,
                demand,
                kind,
            } => {
                c[2] = app.to_string();
                c[3] = container.to_string();
                c[4] = node.to_string();
                c[5] = queue.clone();
                c[6] = format!("-{}:-{}", demand.vcores, demand.memory_mb);
                c[7] = kind_str(*kind).to_string();
            }
            LogEvent::AppRunning { app, queue }
            | LogEvent::AppCompleted { app, queue }
            | LogEvent::AppFailed { app, queue } => {
                c[2] = app.to_string();
                c[5] = queue.clone();
            }
            LogEvent::BatchArrived { app, batch }
            | LogEvent::BatchStarted { app, batch }
            | LogEvent::BatchFinished { app, batch } => {
                c[2] = app.to_string();
                c[7] = batch_str(*batch);
            }
            LogEvent::RunEnd => {}
        }
        c
    }

    fn parse(line: &str, line_no: usize) -> Result<LogRecord> {
        let err = |msg: String| Error::Parse { line: line_no, msg };
        let c: Vec<&str> = line.split('\t').collect();
        if c.len() != 8 {
            return Err(err(format!("expected 8 columns, found {}", c.len())));
        }
        let time = SimTime::parse(c[0]).ok_or_else(|| err(format!("bad time `{}`", c[0])))?;
        let app = || -> Result<AppId> { c[2].parse().map_err(|e: Error| err(e.to_string())) };
        let container = || -> Result<ContainerId> {
            c[3].strip_prefix('c')
                .and_then(|s| s.parse().ok())
                .map(ContainerId)
                .ok_or_else(|| err(format!("bad container `{}`", c[3])))
        };
        let node = || -> Result<NodeId> {
            c[4].strip_prefix('n')
                .and_then(|s| s.parse().ok())
                .map(NodeId)
                .ok_or_else(|| err(format!("bad node `{}`", c[4])))
        };
        let queue = || c[5].to_string();
        let delta = |sign: char| -> Result<Resources> {
            let (v, m) = c[6]
                .split_once(':')
                .ok_or_else(|| err(format!("bad delta `{}`", c[6])))?;
            let num = |s: &str| -> Result<u64> {
                s.strip_prefix(sign)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| err(format!("bad delta `{}`", c[6])))
            };
            Ok(Resources::new(num(v)?, num(m)?))
        };
        let req_kind = || -> Result<RequestKind> {
            match c[7] {
                "am" => Ok(RequestKind::Am),
                "task" => Ok(RequestKind::Task),
                other => Err(err(format!("bad container kind `{other}`"))),
            }
        };
        let batch = || -> Result<u64> {
            c[7].strip_prefix('b')
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| err(format!("bad batch `{}`", c[7])))
        };
        let event = match c[1] {
            "APP_SUBMIT" => {
                let (t, b) = c[7]
                    .split_once(':')
                    .ok_or_else(|| err(format!("bad application detail `{}`", c[7])))?;
                LogEvent::AppSubmitted {
                    app: app()?,
                    app_type: t.parse().map_err(|e: Error| err(e.to_string()))?,
                    benchmark: b.to_string(),
                    queue: queue(),
                }
            }
            "CONTAINER_START" => LogEvent::ContainerStarted {
                app: app()?,
                container: container()?,
                node: node()?,
                queue: queue(),
                demand: delta('+')?,
                kind: req_kind()?,
            },
            "CONTAINER_RELEASE" => LogEvent::ContainerReleased {
                app: app()?,
                container: container()?,
                node: node()?,
                queue: queue(),
                demand: delta('-')?,
                kind: req_kind()?,
            },
            "APP_RUNNING" => LogEvent::AppRunning {
                app: app()?,
                queue: queue(),
            },
            "APP_COMPLETE" => LogEvent::AppCompleted {
                app: app()?,
                queue: queue(),
            },
            "APP_FAIL" => LogEvent::AppFailed {
                app: app()?,
                queue: queue(),
            },
            "BATCH_ARRIVE" => LogEvent::BatchArrived {
                app: app()?,
                batch: batch()?,
            },
            "BATCH_START" => LogEvent::BatchStarted {
                app: app()?,
                batch: batch()?,
            },
            "BATCH_FINISH" => LogEvent::BatchFinished {
                app: app()?,
                batch: batch()?,
            },
            "RUN_END" => LogEvent::RunEnd,
            other => return Err(err(format!("unknown event kind `{other}`"))),
        };
        Ok(LogRecord { time, event })
    }
}

impl EventLog {
    pub fn push(&mut self, time: SimTime, event: LogEvent) {
        self.records.push(LogRecord { time, event });
    }

    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.records.len() * 48);
        out.push_str(HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(out, "{}", r.columns().join("\t"));
        }
        out
    }

    pub fn parse(text: &str) -> Result<EventLog> {
        let mut log = EventLog::default();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            log.records.push(LogRecord::parse(line, i + 1)?);
        }
        Ok(log)
    }

    /// SHA-256 of the serialized log, hex encoded.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }

    /// Time of the `RUN_END` record, or of the last record.
    pub fn end_time(&self) -> SimTime {
        self.records
            .iter()
            .rev()
            .find(|r| r.event == LogEvent::RunEnd)
            .or(self.records.last())
            .map(|r| r.time)
            .unwrap_or_default()
    }
}
