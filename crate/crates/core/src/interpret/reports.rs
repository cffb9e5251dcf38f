use serde::{Deserialize, Serialize};

use super::InterpretError;
use crate::diagnosis::{DiagnosisError, LdmModel};
use crate::psychometrics::{CognitiveParameterSets, Column, ColumnKind, ParamTable, Variant};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedValue<T> {
    pub name: String,
    pub value: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnerReport {
    pub learner_id: String,
    /// Continuous SC columns (abilities per channel).
    pub abilities: Vec<NamedValue<f64>>,
    /// Binary SC columns (mastery bits per knowledge point).
    pub mastery: Vec<NamedValue<u8>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnerReports {
    pub variant: Variant,
    /// SC column layout the records were taken from.
    pub columns: Vec<Column>,
    pub records: Vec<LearnerReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExerciseReport {
    pub exercise_id: String,
    pub parameters: Vec<NamedValue<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExerciseReports {
    pub variant: Variant,
    pub columns: Vec<Column>,
    pub records: Vec<ExerciseReport>,
}

fn lookup<'a>(table: &'a ParamTable, id: &str) -> Option<&'a [f64]> {
    table.row_of(id)
}

fn all_or(ids: &[String], table: &ParamTable) -> Vec<String> {
    if ids.is_empty() {
        table.ids.clone()
    } else {
        ids.to_vec()
    }
}

fn table_csv(id_header: &str, columns: &[Column], rows: impl Iterator<Item = (String, Vec<f64>)>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let header: Vec<&str> = std::iter::once(id_header).chain(columns.iter().map(|c| c.name.as_str())).collect();
    w.write_record(&header).expect("in-memory write");
    for (id, row) in rows {
        let fields: Vec<String> = std::iter::once(id).chain(row.iter().map(|v| v.to_string())).collect();
        w.write_record(&fields).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8")
}

type ParsedTable = (Vec<String>, Vec<(String, Vec<f64>)>);

fn parse_table(text: &str, id_header: &str) -> Result<ParsedTable, InterpretError> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| InterpretError::Parse(e.to_string()))?.clone();
    if header.get(0) != Some(id_header) {
        return Err(InterpretError::Parse(format!("first column must be `{id_header}`")));
    }
    let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| InterpretError::Parse(e.to_string()))?;
        let id = rec.get(0).unwrap_or_default().to_string();
        let vals = rec
            .iter()
            .skip(1)
            .map(|f| f.parse::<f64>().map_err(|e| InterpretError::Parse(format!("`{f}`: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        if vals.len() != names.len() {
            return Err(InterpretError::Parse(format!("row `{id}` has {} values", vals.len())));
        }
        rows.push((id, vals));
    }
    Ok((names, rows))
}

/// Mastery columns are the `*.alpha.*` ones in every SC layout.
fn sc_kind(name: &str) -> ColumnKind {
    if name.contains(".alpha.") {
        ColumnKind::Binary
    } else {
        ColumnKind::Continuous
    }
}

impl LearnerReport {
    fn from_row(id: &str, columns: &[Column], row: &[f64]) -> Self {
        let mut abilities = Vec::new();
        let mut mastery = Vec::new();
        for (c, &v) in columns.iter().zip(row) {
            match c.kind {
                ColumnKind::Binary => mastery.push(NamedValue { name: c.name.clone(), value: (v >= 0.5) as u8 }),
                ColumnKind::Continuous => abilities.push(NamedValue { name: c.name.clone(), value: v }),
            }
        }
        Self { learner_id: id.to_string(), abilities, mastery }
    }

    /// Values in SC column order.
    pub fn row(&self, columns: &[Column]) -> Vec<f64> {
        let (mut a, mut m) = (self.abilities.iter(), self.mastery.iter());
        columns
            .iter()
            .map(|c| match c.kind {
                ColumnKind::Binary => m.next().map_or(f64::NAN, |x| x.value as f64),
                ColumnKind::Continuous => a.next().map_or(f64::NAN, |x| x.value),
            })
            .collect()
    }
}

impl LearnerReports {
    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.records.iter().map(|r| r.row(&self.columns)).collect()
    }

    /// `learner_id` then SC columns in order.
    pub fn to_csv(&self) -> String {
        table_csv("learner_id", &self.columns, self.records.iter().map(|r| (r.learner_id.clone(), r.row(&self.columns))))
    }

    pub fn from_csv(text: &str, variant: Variant) -> Result<Self, InterpretError> {
        let (names, rows) = parse_table(text, "learner_id")?;
        let columns: Vec<Column> = names.into_iter().map(|n| Column { kind: sc_kind(&n), name: n }).collect();
        let records = rows.iter().map(|(id, row)| LearnerReport::from_row(id, &columns, row)).collect();
        Ok(Self { variant, columns, records })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, InterpretError> {
        serde_json::from_str(text).map_err(|e| InterpretError::Parse(e.to_string()))
    }
}

impl ExerciseReport {
    pub fn row(&self) -> Vec<f64> {
        self.parameters.iter().map(|p| p.value).collect()
    }
}

impl ExerciseReports {
    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.records.iter().map(ExerciseReport::row).collect()
    }

    /// `exercise_id` then EC columns in order.
    pub fn to_csv(&self) -> String {
        table_csv("exercise_id", &self.columns, self.records.iter().map(|r| (r.exercise_id.clone(), r.row())))
    }

    pub fn from_csv(text: &str, variant: Variant) -> Result<Self, InterpretError> {
        let (names, rows) = parse_table(text, "exercise_id")?;
        let columns: Vec<Column> =
            names.into_iter().map(|name| Column { name, kind: ColumnKind::Continuous }).collect();
        let records = rows
            .into_iter()
            .map(|(exercise_id, row)| ExerciseReport {
                exercise_id,
                parameters: columns
                    .iter()
                    .zip(row)
                    .map(|(c, value)| NamedValue { name: c.name.clone(), value })
                    .collect(),
            })
            .collect();
        Ok(Self { variant, columns, records })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, InterpretError> {
        serde_json::from_str(text).map_err(|e| InterpretError::Parse(e.to_string()))
    }
}

/// One record per requested learner; an empty `ids` selects all learners.
pub fn export_learner_report(sets: &CognitiveParameterSets, ids: &[String]) -> Result<LearnerReports, InterpretError> {
    let records = all_or(ids, &sets.sc)
        .iter()
        .map(|id| {
            let row = lookup(&sets.sc, id).ok_or_else(|| InterpretError::UnknownLearner(id.clone()))?;
            Ok(LearnerReport::from_row(id, &sets.sc.columns, row))
        })
        .collect::<Result<Vec<_>, InterpretError>>()?;
    Ok(LearnerReports { variant: sets.variant, columns: sets.sc.columns.clone(), records })
}

/// One record per requested exercise; an empty `ids` selects all exercises.
pub fn export_exercise_report(sets: &CognitiveParameterSets, ids: &[String]) -> Result<ExerciseReports, InterpretError> {
    let records = all_or(ids, &sets.ec)
        .iter()
        .map(|id| {
            let row = lookup(&sets.ec, id).ok_or_else(|| InterpretError::UnknownExercise(id.clone()))?;
            Ok(ExerciseReport {
                exercise_id: id.clone(),
                parameters: sets
                    .ec
                    .columns
                    .iter()
                    .zip(row)
                    .map(|(c, &value)| NamedValue { name: c.name.clone(), value })
                    .collect(),
            })
        })
        .collect::<Result<Vec<_>, InterpretError>>()?;
    Ok(ExerciseReports { variant: sets.variant, columns: sets.ec.columns.clone(), records })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionExport {
    /// Fused-vector position names.
    pub features: Vec<String>,
    pub cells: Vec<(String, String)>,
    /// One position-averaged weight vector per cell.
    pub weights: Vec<Vec<f64>>,
}

impl AttentionExport {
    /// `learner_id,exercise_id,<feature names>`.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let header: Vec<&str> =
            ["learner_id", "exercise_id"].into_iter().chain(self.features.iter().map(String::as_str)).collect();
        w.write_record(&header).expect("in-memory write");
        for ((l, e), row) in self.cells.iter().zip(&self.weights) {
            let fields: Vec<String> = [l.clone(), e.clone()].into_iter().chain(row.iter().map(|v| v.to_string())).collect();
            w.write_record(&fields).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8")
    }

    /// Mean weight per position over all exported cells.
    pub fn mean_weights(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.features.len()];
        for row in &self.weights {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        let n = self.weights.len().max(1) as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        mean
    }
}

/// Attention rows are taken verbatim from the prediction records.
pub fn export_attention_weights(model: &LdmModel, cells: &[(String, String)]) -> Result<AttentionExport, InterpretError> {
    let mut index = Vec::with_capacity(cells.len());
    for (l, e) in cells {
        index.push(model.cell_of(l, e).map_err(|err| match err {
            DiagnosisError::UnknownLearner(id) => InterpretError::UnknownLearner(id),
            DiagnosisError::UnknownExercise(id) => InterpretError::UnknownExercise(id),
            other => InterpretError::Diagnosis(other),
        })?);
    }
    let records = model.predict_cells(&index)?;
    Ok(AttentionExport {
        features: model.feature_names(),
        cells: cells.to_vec(),
        weights: records.into_iter().map(|r| r.attention).collect(),
    })
}
