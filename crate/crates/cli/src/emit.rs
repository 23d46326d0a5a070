//! CSV output for traces, phase logs and regret summaries.
//!
//! Reals are written with 17 significant digits so that parsing a file gives
//! back the exact `f64` values.

use std::io::{Read, Write};

use fedpne::harness::{PullRecord, RegretBand, RunTrace};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EmitError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("bad header: expected `{expected}`, found `{found}`")]
    Header { expected: String, found: String },
    #[error("row {row}: cannot parse `{field}` in column `{column}`")]
    Field {
        row: usize,
        column: String,
        field: String,
    },
}

/// `{:.16e}`: one leading digit and sixteen after the point.
pub fn real(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn trace_header(dimension: usize) -> Vec<String> {
    let mut cols: Vec<String> = ["client", "round", "phase", "depth", "node_index"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    cols.extend((0..dimension).map(|d| format!("x{d}")));
    cols.push("reward".into());
    cols.push("regret_increment".into());
    cols
}

pub fn write_trace<W: Write>(trace: &RunTrace, out: W) -> Result<(), EmitError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(trace_header(trace.dimension))?;
    for p in &trace.pulls {
        let mut row = vec![
            p.client.to_string(),
            p.round.to_string(),
            p.phase.to_string(),
            p.depth.to_string(),
            p.node_index.to_string(),
        ];
        row.extend(p.point.iter().map(|&x| real(x)));
        row.push(real(p.reward));
        row.push(real(p.regret));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn field<T: std::str::FromStr>(
    record: &csv::StringRecord,
    row: usize,
    header: &[String],
    j: usize,
) -> Result<T, EmitError> {
    let text = record.get(j).unwrap_or("");
    text.parse().map_err(|_| EmitError::Field {
        row,
        column: header[j].clone(),
        field: text.to_string(),
    })
}

fn check_header(found: &csv::StringRecord, expected: &[String]) -> Result<(), EmitError> {
    if found.iter().ne(expected.iter().map(String::as_str)) {
        return Err(EmitError::Header {
            expected: expected.join(","),
            found: found.iter().collect::<Vec<_>>().join(","),
        });
    }
    Ok(())
}

/// Parses a trace file back into pull records and the point dimension.
pub fn read_trace<R: Read>(input: R) -> Result<(usize, Vec<PullRecord>), EmitError> {
    let mut r = csv::Reader::from_reader(input);
    let found = r.headers()?.clone();
    let dimension = found.len().saturating_sub(7);
    let header = trace_header(dimension);
    check_header(&found, &header)?;
    let mut pulls = Vec::new();
    for (row, record) in r.records().enumerate() {
        let record = record?;
        let row = row + 1;
        let point = (0..dimension)
            .map(|d| field(&record, row, &header, 5 + d))
            .collect::<Result<Vec<f64>, _>>()?;
        pulls.push(PullRecord {
            client: field(&record, row, &header, 0)?,
            round: field(&record, row, &header, 1)?,
            phase: field(&record, row, &header, 2)?,
            depth: field(&record, row, &header, 3)?,
            node_index: field(&record, row, &header, 4)?,
            point,
            reward: field(&record, row, &header, 5 + dimension)?,
            regret: field(&record, row, &header, 6 + dimension)?,
        });
    }
    Ok((dimension, pulls))
}

pub const COMM_HEADER: [&str; 5] = ["phase", "depth", "active_nodes", "eliminated", "events"];

/// One row per phase.
pub fn write_comm<W: Write>(trace: &RunTrace, out: W) -> Result<(), EmitError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COMM_HEADER)?;
    for p in &trace.phases {
        w.write_record([
            p.phase.to_string(),
            p.depth.to_string(),
            p.active.len().to_string(),
            p.eliminated.len().to_string(),
            p.events.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Phase log row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CommRow {
    pub phase: u32,
    pub depth: u32,
    pub active_nodes: usize,
    pub eliminated: usize,
    pub events: usize,
}

pub fn read_comm<R: Read>(input: R) -> Result<Vec<CommRow>, EmitError> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = COMM_HEADER.iter().map(|s| s.to_string()).collect();
    check_header(r.headers()?, &header)?;
    let mut rows = Vec::new();
    for (row, record) in r.records().enumerate() {
        let record = record?;
        let row = row + 1;
        rows.push(CommRow {
            phase: field(&record, row, &header, 0)?,
            depth: field(&record, row, &header, 1)?,
            active_nodes: field(&record, row, &header, 2)?,
            eliminated: field(&record, row, &header, 3)?,
            events: field(&record, row, &header, 4)?,
        });
    }
    Ok(rows)
}

pub const SUMMARY_HEADER: [&str; 4] = ["round", "mean_avg_regret", "std_avg_regret", "n_seeds"];

pub fn write_summary<W: Write>(band: &RegretBand, out: W) -> Result<(), EmitError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER)?;
    for j in 0..band.rounds.len() {
        w.write_record([
            band.rounds[j].to_string(),
            real(band.mean[j]),
            real(band.std[j]),
            band.runs.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a summary file. An empty file gives an empty band with zero runs.
pub fn read_summary<R: Read>(input: R) -> Result<RegretBand, EmitError> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = SUMMARY_HEADER.iter().map(|s| s.to_string()).collect();
    check_header(r.headers()?, &header)?;
    let mut band = RegretBand {
        rounds: Vec::new(),
        mean: Vec::new(),
        std: Vec::new(),
        runs: 0,
    };
    for (row, record) in r.records().enumerate() {
        let record = record?;
        let row = row + 1;
        band.rounds.push(field(&record, row, &header, 0)?);
        band.mean.push(field(&record, row, &header, 1)?);
        band.std.push(field(&record, row, &header, 2)?);
        band.runs = field(&record, row, &header, 3)?;
    }
    Ok(band)
}
