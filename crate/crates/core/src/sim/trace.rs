//! Event-trace records: one line of structured text per event.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    FetchReq,
    FetchDone,
    Compute,
    Prune,
    Retain,
    /// `key` carries the tile ordinal and `plane` the tile length; `lane` is
    /// the owning query row.
    TileFlush,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub cycle: u64,
    pub lane: usize,
    pub key: usize,
    pub plane: u32,
    pub action: Action,
}

/// Serialize events as newline-delimited JSON records.
pub fn to_jsonl(events: &[TraceEvent]) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&serde_json::to_string(e).expect("trace events serialize"));
        out.push('\n');
    }
    out
}
