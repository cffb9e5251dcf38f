use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DataError, QMatrix, ResponseMatrix};

/// On-disk layout of a response matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseFormat {
    /// `learner_id,exercise_id,score` records, one per observed cell.
    LongCsv,
    /// Whitespace-separated grid of `0`/`1`/`NA`, no header.
    DenseTsv,
}

impl ResponseFormat {
    /// `.tsv`/`.txt` means dense, anything else long CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("tsv") | Some("txt") => ResponseFormat::DenseTsv,
            _ => ResponseFormat::LongCsv,
        }
    }
}

pub fn load_response_matrix(path: &Path, format: ResponseFormat) -> Result<ResponseMatrix, DataError> {
    let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    match format {
        ResponseFormat::LongCsv => parse_long_csv(&text),
        ResponseFormat::DenseTsv => parse_dense_tsv(&text),
    }
}

pub fn parse_long_csv(text: &str) -> Result<ResponseMatrix, DataError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "learner_id,exercise_id,score" => {}
        Some((_, h)) => {
            return Err(DataError::MalformedRow {
                line: 1,
                reason: format!("expected header `learner_id,exercise_id,score`, got `{h}`"),
            })
        }
        None => return Err(DataError::MalformedRow { line: 1, reason: "empty file".into() }),
    }

    let mut learners: Vec<String> = Vec::new();
    let mut exercises: Vec<String> = Vec::new();
    let mut learner_pos: HashMap<String, usize> = HashMap::new();
    let mut exercise_pos: HashMap<String, usize> = HashMap::new();
    let mut records: HashMap<(usize, usize), u8> = HashMap::new();

    for (idx, raw) in lines {
        let line = idx + 1;
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').map(str::trim).collect();
        if fields.len() != 3 || fields[0].is_empty() || fields[1].is_empty() {
            return Err(DataError::MalformedRow {
                line,
                reason: format!("expected 3 non-empty fields, got `{raw}`"),
            });
        }
        let score = match fields[2] {
            "0" => 0u8,
            "1" => 1u8,
            other => return Err(DataError::NonBinaryScore { line, value: other.to_string() }),
        };
        let li = *learner_pos.entry(fields[0].to_string()).or_insert_with(|| {
            learners.push(fields[0].to_string());
            learners.len() - 1
        });
        let ei = *exercise_pos.entry(fields[1].to_string()).or_insert_with(|| {
            exercises.push(fields[1].to_string());
            exercises.len() - 1
        });
        if records.insert((li, ei), score).is_some() {
            return Err(DataError::DuplicateRecord {
                line,
                learner: fields[0].to_string(),
                exercise: fields[1].to_string(),
            });
        }
    }

    let m = exercises.len();
    let mut cells = vec![None; learners.len() * m];
    for ((li, ei), y) in records {
        cells[li * m + ei] = Some(y);
    }
    ResponseMatrix::new(learners, exercises, cells)
}

pub fn parse_dense_tsv(text: &str) -> Result<ResponseMatrix, DataError> {
    let mut rows: Vec<Vec<Option<u8>>> = Vec::new();
    let mut width = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for tok in raw.split_whitespace() {
            row.push(match tok {
                "0" => Some(0),
                "1" => Some(1),
                "NA" => None,
                other => return Err(DataError::NonBinaryScore { line, value: other.to_string() }),
            });
        }
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(DataError::MalformedRow {
                    line,
                    reason: format!("expected {w} columns, got {}", row.len()),
                })
            }
            _ => {}
        }
        rows.push(row);
    }
    let m = width.unwrap_or(0);
    let learners = (1..=rows.len()).map(|i| format!("s{i}")).collect();
    let exercises = (1..=m).map(|j| format!("e{j}")).collect();
    ResponseMatrix::new(learners, exercises, rows.into_iter().flatten().collect())
}

pub fn long_csv_string(r: &ResponseMatrix) -> String {
    let mut out = String::from("learner_id,exercise_id,score\n");
    for c in r.observed_cells() {
        let y = r.get(c.learner, c.exercise).unwrap_or_default();
        out.push_str(&format!("{},{},{}\n", r.learner_ids()[c.learner], r.exercise_ids()[c.exercise], y));
    }
    out
}

pub fn write_long_csv(r: &ResponseMatrix, path: &Path) -> Result<(), DataError> {
    write_file(path, long_csv_string(r).as_bytes())
}

pub fn write_dense_tsv(r: &ResponseMatrix, path: &Path) -> Result<(), DataError> {
    let mut out = String::new();
    for i in 0..r.n_learners() {
        let row: Vec<&str> = (0..r.n_exercises())
            .map(|j| match r.get(i, j) {
                Some(0) => "0",
                Some(_) => "1",
                None => "NA",
            })
            .collect();
        out.push_str(&row.join("\t"));
        out.push('\n');
    }
    write_file(path, out.as_bytes())
}

pub fn load_q_matrix(path: &Path) -> Result<QMatrix, DataError> {
    let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    parse_q_csv(&text)
}

pub fn parse_q_csv(text: &str) -> Result<QMatrix, DataError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let header: Vec<&str> = match lines.next() {
        Some((_, h)) => h.split(',').map(str::trim).collect(),
        None => return Err(DataError::MalformedRow { line: 1, reason: "empty file".into() }),
    };
    if header.len() < 2 || header[0] != "exercise_id" {
        return Err(DataError::MalformedRow {
            line: 1,
            reason: "expected header `exercise_id,k_1,...,k_K`".into(),
        });
    }
    let knowledge: Vec<String> = header[1..].iter().map(|s| s.to_string()).collect();
    let k = knowledge.len();
    let mut exercises = Vec::new();
    let mut cells = Vec::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        let fields: Vec<&str> = raw.split(',').map(str::trim).collect();
        if fields.len() != k + 1 || fields[0].is_empty() {
            return Err(DataError::MalformedRow {
                line,
                reason: format!("expected {} fields, got {}", k + 1, fields.len()),
            });
        }
        exercises.push(fields[0].to_string());
        for f in &fields[1..] {
            cells.push(match *f {
                "0" => 0,
                "1" => 1,
                other => return Err(DataError::NonBinaryCell { line, value: other.to_string() }),
            });
        }
    }
    QMatrix::new(exercises, knowledge, cells)
}

pub fn q_csv_string(q: &QMatrix) -> String {
    let mut out = String::from("exercise_id");
    for k in q.knowledge_ids() {
        out.push(',');
        out.push_str(k);
    }
    out.push('\n');
    for (j, id) in q.exercise_ids().iter().enumerate() {
        out.push_str(id);
        for v in q.row(j) {
            out.push(',');
            out.push_str(if *v == 1 { "1" } else { "0" });
        }
        out.push('\n');
    }
    out
}

pub fn write_q_csv(q: &QMatrix, path: &Path) -> Result<(), DataError> {
    write_file(path, q_csv_string(q).as_bytes())
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), DataError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| DataError::io(parent, e))?;
        }
    }
    let mut f = fs::File::create(path).map_err(|e| DataError::io(path, e))?;
    f.write_all(bytes).map_err(|e| DataError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn long_csv_with_missing_cell() {
        let r = parse_long_csv("learner_id,exercise_id,score\ns1,e1,1\ns1,e2,0\ns2,e1,1\n").unwrap();
        assert_eq!((r.n_learners(), r.n_exercises()), (2, 2));
        assert_eq!(r.observed_count(), 3);
        assert_eq!(r.get(1, 1), None);
        assert_eq!(r.get(0, 1), Some(0));
    }

    #[test]
    fn long_csv_rejects_score_two() {
        let err = parse_long_csv("learner_id,exercise_id,score\ns1,e1,2\n").unwrap_err();
        assert!(matches!(err, DataError::NonBinaryScore { line: 2, .. }));
    }

    #[test]
    fn long_csv_rejects_duplicates() {
        let err = parse_long_csv("learner_id,exercise_id,score\ns1,e1,1\ns1,e1,0\n").unwrap_err();
        assert!(matches!(err, DataError::DuplicateRecord { line: 3, .. }));
    }

    #[test]
    fn long_csv_reports_malformed_line() {
        let err = parse_long_csv("learner_id,exercise_id,score\ns1,e1,1\ns2,e1\n").unwrap_err();
        assert!(matches!(err, DataError::MalformedRow { line: 3, .. }));
        let err = parse_long_csv("a,b,c\n").unwrap_err();
        assert!(matches!(err, DataError::MalformedRow { line: 1, .. }));
    }

    #[test]
    fn dense_tsv_accepts_na_only() {
        let r = parse_dense_tsv("1\t0\tNA\n0 1 1\n").unwrap();
        assert_eq!(r.observed_count(), 5);
        assert_eq!(r.get(0, 2), None);
        let err = parse_dense_tsv("1\t0\tna\n").unwrap_err();
        assert!(matches!(err, DataError::NonBinaryScore { line: 1, .. }));
        let err = parse_dense_tsv("1 0\n1\n").unwrap_err();
        assert!(matches!(err, DataError::MalformedRow { line: 2, .. }));
    }

    #[test]
    fn math1_shaped_grid() {
        let row = vec!["1"; 15].join("\t");
        let mut text = String::new();
        for i in 0..4209 {
            let mut r = row.clone();
            if i % 2 == 0 {
                r.replace_range(0..1, "0");
            }
            text.push_str(&r);
            text.push('\n');
        }
        let r = parse_dense_tsv(&text).unwrap();
        assert_eq!(r.observed_count(), 63135);
    }

    #[test]
    fn q_csv_shapes_and_errors() {
        let mut text = String::from("exercise_id");
        for k in 1..=11 {
            text.push_str(&format!(",k_{k}"));
        }
        text.push('\n');
        for j in 0..15 {
            let row: Vec<&str> = (0..11).map(|k| if k == j % 11 { "1" } else { "0" }).collect();
            text.push_str(&format!("e{j},{}\n", row.join(",")));
        }
        let q = parse_q_csv(&text).unwrap();
        assert_eq!((q.n_exercises(), q.n_knowledge()), (15, 11));

        let err = parse_q_csv("exercise_id,k_1,k_2\ne1,0,0\n").unwrap_err();
        assert!(matches!(err, DataError::AllZeroExerciseRow(_)));
        let err = parse_q_csv("exercise_id,k_1,k_2\ne1,0,3\n").unwrap_err();
        assert!(matches!(err, DataError::NonBinaryCell { line: 2, .. }));
    }

    #[test]
    fn cl21_shaped_q() {
        let mut text = String::from("exercise_id");
        for k in 1..=12 {
            text.push_str(&format!(",k_{k}"));
        }
        text.push('\n');
        for j in 0..36 {
            let row: Vec<&str> = (0..12).map(|k| if k == j % 12 || k == (j + 5) % 12 { "1" } else { "0" }).collect();
            text.push_str(&format!("e{j},{}\n", row.join(",")));
        }
        let q = parse_q_csv(&text).unwrap();
        assert_eq!((q.n_exercises(), q.n_knowledge()), (36, 12));
        assert_eq!(parse_q_csv(&q_csv_string(&q)).unwrap(), q);
    }
}
