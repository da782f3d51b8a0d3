//! Per-step trace CSV and population snapshots (JSON lines).
//!
//! Floats are written in scientific notation with 17 significant digits so
//! that reruns with the same seeds produce byte-identical files and values
//! round-trip exactly.

use std::io::Write;

use serde::Serialize;

use crate::dynamics::StepRecord;
use crate::error::{Error, Result};
use crate::population::PopulationState;

pub const TRACE_HEADER: [&str; 13] = [
    "t",
    "eta",
    "d_norm",
    "mean_g",
    "var_g",
    "gap_D",
    "immutable_gap",
    "total_effort",
    "max_effort",
    "num_selected",
    "num_rejected",
    "equilibrium_kind",
    "degenerate_w",
];

pub fn format_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        // NaN shows up when a side of the split is empty.
        v.to_string()
    }
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

pub struct TraceWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(out: W) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(out);
        inner.write_record(TRACE_HEADER).map_err(csv_err)?;
        Ok(TraceWriter { inner })
    }

    pub fn write(&mut self, r: &StepRecord) -> Result<()> {
        let row = [
            r.t.to_string(),
            format_float(r.eta),
            format_float(r.d_norm),
            format_float(r.mean_ceiling_feature),
            format_float(r.var_ceiling_feature),
            format_float(r.gap_d),
            format_float(r.immutable_gap),
            format_float(r.total_effort),
            format_float(r.max_effort),
            r.selected.len().to_string(),
            r.rejected.len().to_string(),
            r.equilibrium.kind.as_str().to_string(),
            r.degenerate_w.to_string(),
        ];
        self.inner.write_record(&row).map_err(csv_err)
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner.flush()?;
        self.inner
            .into_inner()
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
    }
}

#[derive(Serialize)]
struct Snapshot<'a> {
    t: u64,
    features: Vec<&'a [f64]>,
    selected: &'a [usize],
}

/// Writes one JSON object per line for every `stride`-th step.
pub struct SnapshotWriter<W: Write> {
    out: W,
    stride: u64,
}

impl<W: Write> SnapshotWriter<W> {
    pub fn new(out: W, stride: u64) -> Result<Self> {
        if stride == 0 {
            return Err(Error::Config("snapshot_stride must be at least 1".into()));
        }
        Ok(SnapshotWriter { out, stride })
    }

    /// Writes the state if its time index falls on the stride.
    pub fn observe(&mut self, state: &PopulationState, record: &StepRecord) -> Result<()> {
        if record.t.is_multiple_of(self.stride) {
            self.write(state, record)?;
        }
        Ok(())
    }

    pub fn write(&mut self, state: &PopulationState, record: &StepRecord) -> Result<()> {
        let snap = Snapshot {
            t: record.t,
            features: state
                .candidates()
                .iter()
                .map(|c| c.features.as_slice())
                .collect(),
            selected: &record.selected,
        };
        serde_json::to_writer(&mut self.out, &snap).map_err(|e| Error::Io(e.into()))?;
        self.out.write_all(b"\n")?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}
