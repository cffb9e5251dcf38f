use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::DataError;

/// An observed (learner, exercise) interaction, addressed by row/column index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub learner: usize,
    pub exercise: usize,
}

impl Cell {
    pub fn new(learner: usize, exercise: usize) -> Self {
        Self { learner, exercise }
    }
}

const MISSING: u8 = u8::MAX;

/// Learners × exercises binary outcome grid with first-class missing entries.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResponseMatrix {
    learner_ids: Vec<String>,
    exercise_ids: Vec<String>,
    cells: Vec<u8>,
}

impl ResponseMatrix {
    /// Builds a validated matrix. Every learner row and exercise column must
    /// carry at least one observation.
    pub fn new(
        learner_ids: Vec<String>,
        exercise_ids: Vec<String>,
        cells: Vec<Option<u8>>,
    ) -> Result<Self, DataError> {
        let r = Self::from_parts_unchecked(learner_ids, exercise_ids, cells)?;
        r.check_coverage()?;
        Ok(r)
    }

    /// Like [`ResponseMatrix::new`] but tolerates empty rows/columns. Used for
    /// fold-masked training matrices.
    pub fn from_parts_unchecked(
        learner_ids: Vec<String>,
        exercise_ids: Vec<String>,
        cells: Vec<Option<u8>>,
    ) -> Result<Self, DataError> {
        check_unique(&learner_ids, "learner")?;
        check_unique(&exercise_ids, "exercise")?;
        if cells.len() != learner_ids.len() * exercise_ids.len() {
            return Err(DataError::Shape(format!(
                "{} cells for a {}x{} grid",
                cells.len(),
                learner_ids.len(),
                exercise_ids.len()
            )));
        }
        let mut packed = Vec::with_capacity(cells.len());
        for (idx, c) in cells.into_iter().enumerate() {
            match c {
                None => packed.push(MISSING),
                Some(v @ (0 | 1)) => packed.push(v),
                Some(v) => {
                    return Err(DataError::NonBinaryScore {
                        line: idx / exercise_ids.len() + 1,
                        value: v.to_string(),
                    })
                }
            }
        }
        Ok(Self { learner_ids, exercise_ids, cells: packed })
    }

    fn check_coverage(&self) -> Result<(), DataError> {
        for i in 0..self.n_learners() {
            if (0..self.n_exercises()).all(|j| self.get(i, j).is_none()) {
                return Err(DataError::EmptyLearnerOrExercise(format!(
                    "learner {}",
                    self.learner_ids[i]
                )));
            }
        }
        for j in 0..self.n_exercises() {
            if (0..self.n_learners()).all(|i| self.get(i, j).is_none()) {
                return Err(DataError::EmptyLearnerOrExercise(format!(
                    "exercise {}",
                    self.exercise_ids[j]
                )));
            }
        }
        Ok(())
    }

    pub fn n_learners(&self) -> usize {
        self.learner_ids.len()
    }

    pub fn n_exercises(&self) -> usize {
        self.exercise_ids.len()
    }

    pub fn learner_ids(&self) -> &[String] {
        &self.learner_ids
    }

    pub fn exercise_ids(&self) -> &[String] {
        &self.exercise_ids
    }

    #[inline]
    pub fn get(&self, learner: usize, exercise: usize) -> Option<u8> {
        match self.cells[learner * self.exercise_ids.len() + exercise] {
            MISSING => None,
            v => Some(v),
        }
    }

    pub fn observed_count(&self) -> usize {
        self.cells.iter().filter(|&&c| c != MISSING).count()
    }

    /// Observed cells in row-major order.
    pub fn observed_cells(&self) -> Vec<Cell> {
        let m = self.n_exercises();
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, &c)| c != MISSING)
            .map(|(idx, _)| Cell::new(idx / m, idx % m))
            .collect()
    }

    /// Per learner, the observed `(exercise, outcome)` pairs.
    pub fn by_learner(&self) -> Vec<Vec<(usize, u8)>> {
        (0..self.n_learners())
            .map(|i| {
                (0..self.n_exercises())
                    .filter_map(|j| self.get(i, j).map(|y| (j, y)))
                    .collect()
            })
            .collect()
    }

    /// Copy of the matrix with every listed cell turned into a missing entry.
    pub fn masked(&self, hide: &[Cell]) -> ResponseMatrix {
        let mut out = self.clone();
        let m = self.n_exercises();
        for c in hide {
            out.cells[c.learner * m + c.exercise] = MISSING;
        }
        out
    }

    /// Copy keeping only the listed cells observed.
    pub fn restricted_to(&self, keep: &[Cell]) -> ResponseMatrix {
        let m = self.n_exercises();
        let mut cells = vec![MISSING; self.cells.len()];
        for c in keep {
            cells[c.learner * m + c.exercise] = self.cells[c.learner * m + c.exercise];
        }
        ResponseMatrix {
            learner_ids: self.learner_ids.clone(),
            exercise_ids: self.exercise_ids.clone(),
            cells,
        }
    }

    pub fn learner_index(&self, id: &str) -> Option<usize> {
        self.learner_ids.iter().position(|x| x == id)
    }

    pub fn exercise_index(&self, id: &str) -> Option<usize> {
        self.exercise_ids.iter().position(|x| x == id)
    }

    /// Hex SHA-256 over ids and cell contents; identifies the exact data a
    /// fitted component saw.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for id in &self.learner_ids {
            h.update(id.as_bytes());
            h.update([0u8]);
        }
        h.update([1u8]);
        for id in &self.exercise_ids {
            h.update(id.as_bytes());
            h.update([0u8]);
        }
        h.update([1u8]);
        h.update(&self.cells);
        hex::encode(h.finalize())
    }
}

/// Exercises × knowledge-points binary incidence matrix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QMatrix {
    exercise_ids: Vec<String>,
    knowledge_ids: Vec<String>,
    cells: Vec<u8>,
}

impl QMatrix {
    pub fn new(
        exercise_ids: Vec<String>,
        knowledge_ids: Vec<String>,
        cells: Vec<u8>,
    ) -> Result<Self, DataError> {
        check_unique(&exercise_ids, "exercise")?;
        check_unique(&knowledge_ids, "knowledge point")?;
        let k = knowledge_ids.len();
        if cells.len() != exercise_ids.len() * k {
            return Err(DataError::Shape(format!(
                "{} cells for a {}x{} Q-matrix",
                cells.len(),
                exercise_ids.len(),
                k
            )));
        }
        for (idx, &v) in cells.iter().enumerate() {
            if v > 1 {
                return Err(DataError::NonBinaryCell { line: idx / k.max(1) + 2, value: v.to_string() });
            }
        }
        for (j, row) in cells.chunks(k.max(1)).enumerate() {
            if row.iter().all(|&v| v == 0) {
                return Err(DataError::AllZeroExerciseRow(exercise_ids[j].clone()));
            }
        }
        Ok(Self { exercise_ids, knowledge_ids, cells })
    }

    pub fn n_exercises(&self) -> usize {
        self.exercise_ids.len()
    }

    pub fn n_knowledge(&self) -> usize {
        self.knowledge_ids.len()
    }

    pub fn exercise_ids(&self) -> &[String] {
        &self.exercise_ids
    }

    pub fn knowledge_ids(&self) -> &[String] {
        &self.knowledge_ids
    }

    pub fn row(&self, exercise: usize) -> &[u8] {
        let k = self.n_knowledge();
        &self.cells[exercise * k..(exercise + 1) * k]
    }

    #[inline]
    pub fn get(&self, exercise: usize, knowledge: usize) -> u8 {
        self.cells[exercise * self.n_knowledge() + knowledge]
    }

    /// Checks that this Q-matrix lists exactly the exercises of `r`, in order.
    pub fn check_aligned(&self, r: &ResponseMatrix) -> Result<(), DataError> {
        if self.exercise_ids != r.exercise_ids() {
            return Err(DataError::Misaligned(format!(
                "Q has {} exercises, responses have {} (or ids differ in order)",
                self.n_exercises(),
                r.n_exercises()
            )));
        }
        Ok(())
    }
}

fn check_unique(ids: &[String], what: &str) -> Result<(), DataError> {
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(DataError::DuplicateId(format!("{what} {id}")));
        }
    }
    Ok(())
}
