use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{SampleValue, Snapshot, TelemetryError, TelemetrySample};
use crate::{JobId, Millis, NodeId};

fn csv_err(e: impl std::fmt::Display) -> TelemetryError {
    TelemetryError::Csv(e.to_string())
}

/// Writes one series as CSV with columns `t_ms,node_id,job_id,metric,value`
/// (or `line` instead of `value` for log channels).
pub fn write_series_csv<W: Write>(out: W, samples: &[TelemetrySample]) -> Result<(), TelemetryError> {
    let is_log = samples.first().is_some_and(|s| matches!(s.value, SampleValue::Line(_)));
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t_ms", "node_id", "job_id", "metric", if is_log { "line" } else { "value" }]).map_err(csv_err)?;
    for s in samples {
        let value = match &s.value {
            SampleValue::Number(v) => v.to_string(),
            SampleValue::Line(l) => l.clone(),
        };
        let job = s.job_id.map(|j| j.0.to_string()).unwrap_or_default();
        w.write_record([s.t.to_string(), s.node_id.0.to_string(), job, s.metric.to_string(), value])
            .map_err(csv_err)?;
    }
    w.flush().map_err(csv_err)
}

#[derive(Serialize, Deserialize)]
struct Row {
    t_ms: Millis,
    node_id: u32,
    job_id: Option<u32>,
    metric: String,
    value: Option<f64>,
    line: Option<String>,
}

/// Writes every sample of a snapshot as CSV with columns
/// `t_ms,node_id,job_id,metric,value,line` (exactly one of value/line set).
pub fn write_snapshot_csv<W: Write>(out: W, snap: &Snapshot) -> Result<(), TelemetryError> {
    let mut w = csv::Writer::from_writer(out);
    for s in snap.samples() {
        let (value, line) = match &s.value {
            SampleValue::Number(v) => (Some(*v), None),
            SampleValue::Line(l) => (None, Some(l.clone())),
        };
        w.serialize(Row {
            t_ms: s.t,
            node_id: s.node_id.0,
            job_id: s.job_id.map(|j| j.0),
            metric: s.metric.to_string(),
            value,
            line,
        })
        .map_err(csv_err)?;
    }
    w.flush().map_err(csv_err)
}

/// Reads samples written by [`write_snapshot_csv`] into `snap`.
pub fn read_snapshot_csv<R: Read>(input: R, snap: &mut Snapshot) -> Result<usize, TelemetryError> {
    let mut r = csv::Reader::from_reader(input);
    let mut n = 0;
    for row in r.deserialize::<Row>() {
        let row = row.map_err(csv_err)?;
        let job = row.job_id.map(JobId);
        let s = match (row.value, row.line) {
            (Some(v), None) => {
                if !v.is_finite() {
                    return Err(TelemetryError::NonFiniteValue { metric: row.metric, node: NodeId(row.node_id) });
                }
                TelemetrySample::number(&row.metric, row.t_ms, NodeId(row.node_id), job, v)
            }
            (None, Some(l)) => TelemetrySample::line(&row.metric, row.t_ms, NodeId(row.node_id), job, l),
            _ => return Err(TelemetryError::Csv(format!("row {} must set exactly one of value/line", n + 1))),
        };
        snap.push(s);
        n += 1;
    }
    Ok(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::telemetry::Source;

    #[test]
    fn snapshot_round_trip() {
        let mut snap = Snapshot::new([("u".to_string(), Source::Accelerator), ("log".to_string(), Source::OsLog)]);
        snap.push(TelemetrySample::number("u", 10, NodeId(1), Some(JobId(2)), 0.5));
        snap.push(TelemetrySample::line("log", 11, NodeId(1), None, "a, \"quoted\" line"));
        let mut buf = Vec::new();
        write_snapshot_csv(&mut buf, &snap).unwrap();
        let mut back = Snapshot::new([("u".to_string(), Source::Accelerator), ("log".to_string(), Source::OsLog)]);
        assert_eq!(read_snapshot_csv(&buf[..], &mut back).unwrap(), 2);
        assert_eq!(back, snap);
    }

    #[test]
    fn series_header() {
        let mut buf = Vec::new();
        write_series_csv(&mut buf, &[TelemetrySample::line("os", 1, NodeId(0), None, "x")]).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("t_ms,node_id,job_id,metric,line\n"));
    }
}
