//! Machine-readable run records and benchmark rows.

use arcsearch::solver::IterationRecord;
use arcsearch::{RhsMode, SolveReport, SolveStatus, SolverConfig, Variant};
use serde::{Deserialize, Serialize};

pub const RUN_SCHEMA: &str = "arcsearch.run/1";
pub const BENCH_SCHEMA: &str = "arcsearch.bench/1";

/// JSON has no NaN or infinity; those are written as the strings
/// `"NaN"`, `"inf"` and `"-inf"` so every value survives a round trip.
pub mod real {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Number(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("NaN")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Number(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "NaN" => Ok(f64::NAN),
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(serde::de::Error::custom(format!("not a number: {other}"))),
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunArtifact {
    pub schema: String,
    pub problem: String,
    pub variant: Variant,
    pub rhs: RhsMode,
    pub config: SolverConfig,
    pub status: SolveStatus,
    pub message: Option<String>,
    #[serde(with = "real")]
    pub objective: f64,
    pub iterations: usize,
    pub seconds: f64,
    #[serde(with = "real")]
    pub conv_phi: f64,
    pub x: Vec<f64>,
    pub trace: Vec<IterationRecord>,
}

impl RunArtifact {
    pub fn new(problem: &str, cfg: &SolverConfig, report: &SolveReport) -> Self {
        Self {
            schema: RUN_SCHEMA.to_string(),
            problem: problem.to_string(),
            variant: cfg.variant,
            rhs: cfg.rhs(),
            config: cfg.clone(),
            status: report.status,
            message: report.message.clone(),
            objective: report.objective,
            iterations: report.iterations,
            seconds: report.seconds,
            conv_phi: report.phi,
            x: report.iterate.x.iter().copied().collect(),
            trace: report.records.clone(),
        }
    }

    /// Equality up to the wall-clock fields, comparing floats bit for bit.
    pub fn same_result(&self, other: &Self) -> bool {
        let strip = |a: &Self| {
            let mut v = serde_json::to_value(a).expect("artifact serializes");
            v["seconds"] = serde_json::Value::Null;
            if let Some(rows) = v["trace"].as_array_mut() {
                for r in rows {
                    r["seconds"] = serde_json::Value::Null;
                }
            }
            v
        };
        strip(self) == strip(other)
    }
}

/// One solver run in a benchmark table. The first five fields are the
/// columns of the published results table.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BenchRow {
    pub prob: String,
    #[serde(with = "real")]
    pub obj: f64,
    pub iter: usize,
    pub seconds: f64,
    #[serde(with = "real")]
    pub conv_phi: f64,
    pub variant: Variant,
    pub rhs: RhsMode,
    pub status: String,
    #[serde(with = "real")]
    pub ref_obj: f64,
    /// `(obj − ref_obj) / max(1, |ref_obj|)`
    #[serde(with = "real")]
    pub obj_delta: f64,
    pub ref_iter: Option<usize>,
    /// `iter − ref_iter`
    pub iter_delta: Option<i64>,
    pub ref_conv_phi: Option<f64>,
}

pub const CSV_HEADER: [&str; 14] = [
    "Prob", "Obj", "Iter", "Seconds", "ConvPhi", "Variant", "Rhs", "Status", "RefObj", "ObjDelta", "RefIter", "IterDelta",
    "RefConvPhi", "Schema",
];

impl BenchRow {
    /// CSV fields: seconds to the millisecond, merit values with five
    /// significant digits, objectives exact.
    pub fn csv_record(&self) -> Vec<String> {
        let opt = |v: Option<String>| v.unwrap_or_default();
        vec![
            self.prob.clone(),
            format!("{}", self.obj),
            self.iter.to_string(),
            format!("{:.3}", self.seconds),
            format!("{:.4e}", self.conv_phi),
            self.variant.to_string(),
            self.rhs.to_string(),
            self.status.clone(),
            format!("{}", self.ref_obj),
            format!("{:.3e}", self.obj_delta),
            opt(self.ref_iter.map(|v| v.to_string())),
            opt(self.iter_delta.map(|v| v.to_string())),
            opt(self.ref_conv_phi.map(|v| format!("{v:.4e}"))),
            BENCH_SCHEMA.to_string(),
        ]
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BenchTable {
    pub schema: String,
    pub rows: Vec<BenchRow>,
}
