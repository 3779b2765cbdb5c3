//! JSON Lines trace files. An optional first line `{"header": {...}}` records
//! the generator settings; every other line is one request.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{validate_request, Params, RequestType, SemanticFeatures, ToolCallRequest};
use crate::workload::{ToolCatalog, WorkloadConfig};

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn parse_err(line: usize, message: impl ToString) -> TraceError {
    TraceError::Parse {
        line,
        message: message.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workload: Option<WorkloadConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub catalog: Option<ToolCatalog>,
}

impl TraceHeader {
    pub fn new(workload: Option<WorkloadConfig>, catalog: Option<ToolCatalog>) -> Self {
        Self {
            version: 1,
            workload,
            catalog,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    header: TraceHeader,
}

/// One request as it appears on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceRecord {
    pub seq: u64,
    pub user: String,
    pub tool: String,
    #[serde(default)]
    pub params: Params,
    pub latency_ms: f64,
    pub cost: f64,
    pub size_bytes: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_type: Option<RequestType>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ttl_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub param_category: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gap_s: Option<f64>,
}

impl From<&ToolCallRequest> for TraceRecord {
    fn from(r: &ToolCallRequest) -> Self {
        let a = r.annotation.as_ref();
        Self {
            seq: r.seq,
            user: r.user_id.clone(),
            tool: r.tool_name.clone(),
            params: r.params.clone(),
            latency_ms: r.true_latency_ms,
            cost: r.true_cost_units,
            size_bytes: r.true_size_bytes,
            request_type: a.map(|a| a.request_type),
            ttl_s: a.map(|a| a.ttl_seconds),
            param_category: a.and_then(|a| a.parameter_category.clone()),
            gap_s: (r.gap_seconds != 1.0).then_some(r.gap_seconds),
        }
    }
}

impl TraceRecord {
    fn into_request(self, line: usize) -> Result<ToolCallRequest, TraceError> {
        let annotation = match (self.request_type, self.ttl_s) {
            (None, None) if self.param_category.is_none() => None,
            (Some(RequestType::Command), _) => Some(SemanticFeatures::command()),
            (Some(RequestType::Informational), Some(ttl)) => {
                Some(SemanticFeatures::informational(self.param_category, ttl))
            }
            _ => return Err(parse_err(line, "partial annotation: request_type and ttl_s go together")),
        };
        let mut r = ToolCallRequest::new(self.seq, self.user, self.tool, self.params)
            .with_measurements(self.latency_ms, self.cost, self.size_bytes);
        r.gap_seconds = self.gap_s.unwrap_or(1.0);
        r.annotation = annotation;
        validate_request(&r).map_err(|e| parse_err(line, e))?;
        Ok(r)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace {
    pub header: Option<TraceHeader>,
    pub requests: Vec<ToolCallRequest>,
}

pub fn write_trace<W: Write>(mut w: W, header: Option<&TraceHeader>, requests: &[ToolCallRequest]) -> std::io::Result<()> {
    if let Some(h) = header {
        serde_json::to_writer(&mut w, &HeaderLine { header: h.clone() })?;
        w.write_all(b"\n")?;
    }
    for r in requests {
        serde_json::to_writer(&mut w, &TraceRecord::from(r))?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// Parses a trace. Blank lines are skipped; sequence numbers must increase.
pub fn read_trace<R: BufRead>(r: R) -> Result<Trace, TraceError> {
    let mut trace = Trace::default();
    let mut last_seq: Option<u64> = None;
    for (i, line) in r.lines().enumerate() {
        let n = i + 1;
        let line = line?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        if trace.header.is_none() && trace.requests.is_empty() && text.starts_with("{\"header\"") {
            let h: HeaderLine = serde_json::from_str(text).map_err(|e| parse_err(n, e))?;
            trace.header = Some(h.header);
            continue;
        }
        let rec: TraceRecord = serde_json::from_str(text).map_err(|e| parse_err(n, e))?;
        if last_seq.is_some_and(|s| rec.seq <= s) {
            return Err(parse_err(n, format!("seq {} does not increase", rec.seq)));
        }
        last_seq = Some(rec.seq);
        trace.requests.push(rec.into_request(n)?);
    }
    Ok(trace)
}

pub fn save_trace(path: &Path, header: Option<&TraceHeader>, requests: &[ToolCallRequest]) -> Result<(), TraceError> {
    write_trace(BufWriter::new(File::create(path)?), header, requests)?;
    Ok(())
}

pub fn load_trace(path: &Path) -> Result<Trace, TraceError> {
    read_trace(BufReader::new(File::open(path)?))
}
