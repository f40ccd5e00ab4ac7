//! Episode records and their CSV form.
//!
//! The trace file has header `t,x1..xn,u1..um,value,pred_err,cost`. Value
//! parameter snapshots go to a sibling file with `t` followed by the upper
//! triangle of `P` (`p_i_j`, 0-based, `i <= j`).

use std::fmt;
use std::io::{Read, Write};

use crate::basis::BasisSet;
use crate::error::{Error, Result};
use crate::sysid::ModelCoefficients;
use crate::valuegrad::ValueParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Success,
    DomainExit,
    Timeout,
    Divergence,
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Termination::Success => "success",
            Termination::DomainExit => "domain_exit",
            Termination::Timeout => "timeout",
            Termination::Divergence => "divergence",
        })
    }
}

/// One sample instant. `u` is the input applied from `t` on; `pred_err` is
/// the current model's error on the sample that ends at `t` (NaN at `t = 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub value: f64,
    pub pred_err: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PSnapshot {
    pub t: f64,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct EpisodeTrace {
    pub basis: BasisSet,
    pub records: Vec<StepRecord>,
    pub p_snapshots: Vec<PSnapshot>,
    pub model: ModelCoefficients,
    pub final_p: ValueParams,
    pub database_len: usize,
    pub termination: Termination,
    pub diagnostic: Option<String>,
    pub x_ref: Vec<f64>,
}

impl EpisodeTrace {
    pub fn state_dim(&self) -> usize {
        self.basis.state_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.model.input_dim()
    }

    pub fn last(&self) -> &StepRecord {
        self.records.last().expect("trace has at least one record")
    }

    /// `‖x − x_ref‖_∞` at the final record.
    pub fn final_error(&self) -> f64 {
        self.last()
            .x
            .iter()
            .zip(&self.x_ref)
            .map(|(x, r)| (x - r).abs())
            .fold(0.0, f64::max)
    }

    pub fn total_cost(&self) -> f64 {
        self.last().cost
    }

    pub fn duration(&self) -> f64 {
        self.last().t
    }

    /// True when no prediction error after the first `warmup` fraction of
    /// the records exceeds `factor` times the median of all finite errors.
    pub fn prediction_error_bounded(&self, warmup: f64, factor: f64) -> bool {
        let mut errs: Vec<f64> = self.records.iter().map(|r| r.pred_err).filter(|e| e.is_finite()).collect();
        if errs.is_empty() {
            return true;
        }
        errs.sort_by(|a, b| a.total_cmp(b));
        let median = errs[errs.len() / 2];
        let start = (self.records.len() as f64 * warmup).ceil() as usize;
        self.records[start.min(self.records.len())..]
            .iter()
            .filter(|r| r.pred_err.is_finite())
            .all(|r| r.pred_err <= factor * median)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_records(&self.records, self.state_dim(), self.input_dim(), writer)
    }

    pub fn write_p_csv<W: Write>(&self, writer: W) -> Result<()> {
        let p = self.basis.len();
        let mut out = csv::Writer::from_writer(writer);
        let mut header = vec!["t".to_string()];
        for i in 0..p {
            for j in i..p {
                header.push(format!("p_{i}_{j}"));
            }
        }
        out.write_record(&header)?;
        for snap in &self.p_snapshots {
            let mut row = vec![snap.t.to_string()];
            row.extend(snap.upper.iter().map(|v| v.to_string()));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn write_records<W: Write>(records: &[StepRecord], n: usize, m: usize, writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    header.extend((1..=m).map(|j| format!("u{j}")));
    header.extend(["value", "pred_err", "cost"].map(String::from));
    out.write_record(&header)?;
    for r in records {
        let mut row = Vec::with_capacity(header.len());
        row.push(r.t.to_string());
        row.extend(r.x.iter().map(|v| v.to_string()));
        row.extend(r.u.iter().map(|v| v.to_string()));
        row.push(r.value.to_string());
        row.push(r.pred_err.to_string());
        row.push(r.cost.to_string());
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Parses a trace CSV back into records.
pub fn read_records<R: Read>(reader: R) -> Result<Vec<StepRecord>> {
    let mut input = csv::Reader::from_reader(reader);
    let header = input.headers()?.clone();
    let n = header.iter().filter(|h| h.starts_with('x')).count();
    let m = header.iter().filter(|h| h.starts_with('u')).count();
    if header.len() != n + m + 4 || header.get(0) != Some("t") {
        return Err(Error::validation("trace", "unexpected trace header"));
    }
    let mut records = Vec::new();
    for row in input.records() {
        let row = row?;
        let vals: Vec<f64> = row
            .iter()
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::validation("trace", format!("bad number `{s}`")))
            })
            .collect::<Result<_>>()?;
        records.push(StepRecord {
            t: vals[0],
            x: vals[1..1 + n].to_vec(),
            u: vals[1 + n..1 + n + m].to_vec(),
            value: vals[1 + n + m],
            pred_err: vals[2 + n + m],
            cost: vals[3 + n + m],
        });
    }
    Ok(records)
}
