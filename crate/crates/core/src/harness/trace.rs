use serde::{Deserialize, Serialize};

use super::lab::Lab;
use crate::asap::LrBounds;
use crate::error::{Error, Result};
use crate::methods::{MethodConfig, StepRecord};
use crate::shift::ShiftKind;

/// One row of a learning-rate trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: usize,
    pub shift_e: f64,
    pub eta: f64,
    pub shift_kind: ShiftKind,
}

pub fn trace_rows(records: &[StepRecord], shift: ShiftKind) -> Result<Vec<TraceRow>> {
    records
        .iter()
        .map(|r| match (r.shift_e, r.eta) {
            (Some(shift_e), Some(eta)) => Ok(TraceRow {
                t: r.t,
                shift_e,
                eta,
                shift_kind: shift,
            }),
            _ => Err(Error::structural(format!(
                "step {} carries no shift estimate; not an asap run",
                r.t
            ))),
        })
        .collect()
}

/// CSV with columns `t,shift_e,eta,shift_kind`.
pub fn export_lr_trace(records: &[StepRecord], shift: ShiftKind) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    w.write_record(["t", "shift_e", "eta", "shift_kind"])?;
    for row in trace_rows(records, shift)? {
        w.serialize(row)?;
    }
    w.into_inner().map_err(|e| Error::structural(e.to_string()))
}

impl Lab {
    /// ASAP bounds for traces: the first configured asap method, or the
    /// defaults, in reference units.
    pub fn trace_method(&self) -> MethodConfig {
        self.config
            .methods
            .iter()
            .find(|m| matches!(m, MethodConfig::Asap { .. }))
            .cloned()
            .unwrap_or_else(|| MethodConfig::asap(LrBounds::default()))
    }

    pub fn lr_trace(&self, shift: ShiftKind, seed: u64) -> Result<Vec<StepRecord>> {
        self.run_cell(shift, &self.trace_method(), seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(t: usize, e: Option<f64>) -> StepRecord {
        StepRecord {
            t,
            accuracy: 1.0,
            eta: Some(0.1),
            shift_e: e,
            estimated_dist: vec![1.0],
            wall_nanos: 0,
        }
    }

    #[test]
    fn rejects_records_without_estimates() {
        assert!(matches!(
            export_lr_trace(&[rec(1, None)], ShiftKind::Lin),
            Err(Error::Structural(_))
        ));
    }

    #[test]
    fn header_and_rows() {
        let text =
            String::from_utf8(export_lr_trace(&[rec(1, Some(0.5))], ShiftKind::Squ).unwrap())
                .unwrap();
        assert_eq!(text, "t,shift_e,eta,shift_kind\n1,0.5,0.1,squ\n");
    }
}
