//! CSV export and import of simulation traces.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::mfd::{ControlInput, DemandVector, OdAccumulation, SimulationTrace, TraceRow, TrackingColumns};

pub const BASE_COLUMNS: [&str; 12] = ["t", "n11", "n12", "n21", "n22", "u12", "u21", "q11", "q12", "q21", "q22", "clamped_flag"];
pub const TRACKING_COLUMNS: [&str; 12] = [
    "nd_11", "nd_12", "nd_21", "nd_22", "e_11", "e_12", "e_21", "e_22", "mu_12", "mu_21", "us_12", "us_21",
];

fn fmt(v: f64) -> String {
    // shortest round-trip representation keeps files byte-stable and lossless
    format!("{v:?}")
}

/// Writes the trace; tracking columns are included when every row has them.
pub fn write_trace<W: Write>(trace: &SimulationTrace, out: W) -> Result<()> {
    let tracking = !trace.rows.is_empty() && trace.rows.iter().all(|r| r.tracking.is_some());
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = BASE_COLUMNS.to_vec();
    if tracking {
        header.extend(TRACKING_COLUMNS);
    }
    w.write_record(&header)?;
    for r in &trace.rows {
        let mut rec: Vec<String> = [r.t]
            .into_iter()
            .chain(r.n.to_array())
            .chain(r.u.to_array())
            .chain(r.q.to_array())
            .map(fmt)
            .collect();
        rec.push(if r.clamped { "1".into() } else { "0".into() });
        if let (true, Some(tc)) = (tracking, r.tracking) {
            rec.extend(tc.nd.iter().chain(&tc.e).chain(&tc.mu).chain(&tc.us).map(|v| fmt(*v)));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace_file(trace: &SimulationTrace, path: &Path) -> Result<()> {
    write_trace(trace, std::fs::File::create(path)?)
}

/// Reads a trace written by [`write_trace`]. Flow bookkeeping is not stored
/// in the file and comes back empty.
pub fn read_trace<R: Read>(input: R) -> Result<SimulationTrace> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let base: Vec<usize> = BASE_COLUMNS
        .iter()
        .map(|c| col(c).ok_or_else(|| Error::Config(format!("trace is missing column {c}"))))
        .collect::<Result<_>>()?;
    let tracking: Option<Vec<usize>> = TRACKING_COLUMNS.iter().map(|c| col(c)).collect();
    let mut trace = SimulationTrace::default();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let get = |i: usize| -> Result<f64> {
            rec.get(i)
                .ok_or_else(|| Error::Config(format!("row {}: missing field", line + 2)))?
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("row {}: {e}", line + 2)))
        };
        let v: Vec<f64> = base.iter().map(|&i| get(i)).collect::<Result<_>>()?;
        let tc = match &tracking {
            Some(idx) => {
                let x: Vec<f64> = idx.iter().map(|&i| get(i)).collect::<Result<_>>()?;
                Some(TrackingColumns {
                    nd: [x[0], x[1], x[2], x[3]],
                    e: [x[4], x[5], x[6], x[7]],
                    mu: [x[8], x[9]],
                    us: [x[10], x[11]],
                })
            }
            None => None,
        };
        trace.rows.push(TraceRow {
            t: v[0],
            n: OdAccumulation::new(v[1], v[2], v[3], v[4]),
            u: ControlInput::new(v[5], v[6]),
            q: DemandVector::new(v[7], v[8], v[9], v[10]),
            clamped: v[11] != 0.0,
            tracking: tc,
        });
    }
    Ok(trace)
}

pub fn read_trace_file(path: &Path) -> Result<SimulationTrace> {
    read_trace(std::fs::File::open(path)?)
}

/// Reference trace in the same layout with every column except `t` prefixed by `nd_`.
pub fn write_reference<W: Write>(trace: &SimulationTrace, out: W) -> Result<()> {
    let mut buf = Vec::new();
    let plain = SimulationTrace { rows: trace.rows.iter().map(|r| TraceRow { tracking: None, ..*r }).collect(), ..Default::default() };
    write_trace(&plain, &mut buf)?;
    let text = String::from_utf8(buf).map_err(|e| Error::Config(e.to_string()))?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    let renamed: Vec<String> = header.split(',').map(|h| if h == "t" { h.to_string() } else { format!("nd_{h}") }).collect();
    let mut out = out;
    writeln!(out, "{}", renamed.join(","))?;
    for l in lines {
        writeln!(out, "{l}")?;
    }
    Ok(())
}
