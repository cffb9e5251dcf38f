use log::warn;
use serde::{Deserialize, Serialize};

use super::EncodingError;
use crate::psychometrics::{CognitiveParameterSets, ColumnKind, ParamTable};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BinaryTag {
    #[serde(rename = "binary")]
    Binary,
}

/// Interior bin edges for a continuous column, or the binary pass-through
/// marker. Empty edges mean a constant training column (one degenerate bin).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ColumnEncoding {
    Binary(BinaryTag),
    Edges(Vec<f64>),
}

impl ColumnEncoding {
    pub fn width(&self) -> usize {
        match self {
            ColumnEncoding::Binary(_) => 1,
            ColumnEncoding::Edges(e) => e.len() + 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnPlan {
    pub name: String,
    pub encoding: ColumnEncoding,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TablePlan {
    pub columns: Vec<ColumnPlan>,
    pub width: usize,
    /// Continuous columns that were constant over the training rows.
    pub degenerate: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodingPlan {
    pub bins: usize,
    /// Learner side; `learner.width` is d0.
    pub learner: TablePlan,
    /// Exercise side; `exercise.width` is d1.
    pub exercise: TablePlan,
    /// Digest of the response data the parameter sets were fitted on.
    pub provenance: String,
}

impl EncodingPlan {
    pub fn d0(&self) -> usize {
        self.learner.width
    }

    pub fn d1(&self) -> usize {
        self.exercise.width
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, EncodingError> {
        serde_json::from_str(s).map_err(|e| EncodingError::Parse(e.to_string()))
    }
}

/// Equal-width bins over the training range of each continuous column.
pub fn build_table_plan(table: &ParamTable, bins: usize, train_rows: &[usize]) -> Result<TablePlan, EncodingError> {
    if bins < 2 {
        return Err(EncodingError::InvalidBins(bins));
    }
    if train_rows.is_empty() {
        return Err(EncodingError::EmptyInput);
    }
    if let Some(&bad) = train_rows.iter().find(|&&r| r >= table.rows.len()) {
        return Err(EncodingError::UnknownRow(bad));
    }
    let mut columns = Vec::with_capacity(table.width());
    let mut degenerate = Vec::new();
    for (c, col) in table.columns.iter().enumerate() {
        let encoding = match col.kind {
            ColumnKind::Binary => ColumnEncoding::Binary(BinaryTag::Binary),
            ColumnKind::Continuous => {
                let (lo, hi) = train_rows
                    .iter()
                    .map(|&r| table.rows[r][c])
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
                if hi - lo > 0.0 {
                    let step = (hi - lo) / bins as f64;
                    ColumnEncoding::Edges((1..bins).map(|i| lo + i as f64 * step).collect())
                } else {
                    warn!("column {} is constant ({lo}) over the training rows; using one bin", col.name);
                    degenerate.push(col.name.clone());
                    ColumnEncoding::Edges(Vec::new())
                }
            }
        };
        columns.push(ColumnPlan { name: col.name.clone(), encoding });
    }
    let width = columns.iter().map(|c| c.encoding.width()).sum();
    Ok(TablePlan { columns, width, degenerate })
}

pub fn build_encoding_plan(
    sets: &CognitiveParameterSets,
    bins: usize,
    learner_rows: &[usize],
    exercise_rows: &[usize],
) -> Result<EncodingPlan, EncodingError> {
    Ok(EncodingPlan {
        bins,
        learner: build_table_plan(&sets.sc, bins, learner_rows)?,
        exercise: build_table_plan(&sets.ec, bins, exercise_rows)?,
        provenance: sets.provenance.clone(),
    })
}

/// One hot bit per continuous column (out-of-range values land in the edge
/// bins); binary columns copied verbatim.
pub fn one_hot_encode(row: &[f64], plan: &TablePlan) -> Result<Vec<f64>, EncodingError> {
    if row.len() != plan.columns.len() {
        return Err(EncodingError::ArityMismatch { expected: plan.columns.len(), got: row.len() });
    }
    let mut out = Vec::with_capacity(plan.width);
    for (&v, col) in row.iter().zip(&plan.columns) {
        match &col.encoding {
            ColumnEncoding::Binary(_) => out.push(v),
            ColumnEncoding::Edges(edges) => {
                let hot = edges.partition_point(|&e| e <= v);
                out.extend((0..=edges.len()).map(|b| if b == hot { 1.0 } else { 0.0 }));
            }
        }
    }
    Ok(out)
}

pub fn encode_table(table: &ParamTable, plan: &TablePlan) -> Result<Vec<Vec<f64>>, EncodingError> {
    table.rows.iter().map(|row| one_hot_encode(row, plan)).collect()
}
