use std::path::Path;

use log::{debug, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{Batch, Layout, Network};
use super::{DiagnosisError, LdmConfig};
use crate::dataio::{write_file, Cell, QMatrix, ResponseMatrix};
use crate::derive_seed;
use crate::encoding::{build_encoding_plan, encode_table, train_sae, EncodingPlan, SaeConfig, SaeModel};
use crate::evaluation::auc;
use crate::ndgrad::{adam_step, AdamState, Tape};
use crate::psychometrics::{build_parameter_sets, fit_channels, ChannelOutputs, CognitiveParameterSets, PsychConfig};

const INFER_CHUNK: usize = 1024;

/// The frozen learner and exercise autoencoders.
#[derive(Clone, Debug, PartialEq)]
pub struct SaePair {
    pub learner: SaeModel,
    pub exercise: SaeModel,
    /// Digest of the response data behind the rows they were trained on.
    pub provenance: String,
}

/// Everything computed from the training cells before the network trains.
#[derive(Clone, Debug)]
pub struct PreparedFeatures {
    pub channels: ChannelOutputs,
    pub sets: CognitiveParameterSets,
    pub plan: EncodingPlan,
    pub saes: SaePair,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    /// Mean training BCE per epoch.
    pub train_loss: Vec<f64>,
    pub val_auc: Vec<f64>,
    /// 1-based epoch whose weights were kept; 0 means the initial weights.
    pub best_epoch: usize,
    pub best_val_auc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub learner_id: String,
    pub exercise_id: String,
    pub p: f64,
    /// Position-averaged attention weights over the fused vector; empty when
    /// attention is disabled.
    pub attention: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LdmModel {
    pub config: LdmConfig,
    pub plan: EncodingPlan,
    pub sets: CognitiveParameterSets,
    pub saes: SaePair,
    pub network: Network,
    pub history: TrainingHistory,
    learner_latent: Vec<Vec<f64>>,
    exercise_latent: Vec<Vec<f64>>,
}

/// Fits the psychometric channels on `fit_cells` only, assembles EC/SC,
/// builds the encoding plan and trains both autoencoders.
pub fn prepare_features(
    r: &ResponseMatrix,
    q: &QMatrix,
    fit_cells: &[Cell],
    psych: &PsychConfig,
    config: &LdmConfig,
) -> Result<PreparedFeatures, DiagnosisError> {
    config.validate()?;
    if fit_cells.is_empty() {
        return Err(DiagnosisError::EmptyTrainingSet);
    }
    let fit_r = r.restricted_to(fit_cells);
    let channels = fit_channels(config.variant, &fit_r, q, psych)?;
    let sets = build_parameter_sets(config.variant, &channels, r.learner_ids(), q, psych.include_irt_guess)?;

    let mut seen_l = vec![false; r.n_learners()];
    let mut seen_e = vec![false; r.n_exercises()];
    for c in fit_cells {
        seen_l[c.learner] = true;
        seen_e[c.exercise] = true;
    }
    let learner_rows: Vec<usize> = (0..r.n_learners()).filter(|&i| seen_l[i]).collect();
    let exercise_rows: Vec<usize> = (0..r.n_exercises()).filter(|&j| seen_e[j]).collect();
    let plan = build_encoding_plan(&sets, config.bins, &learner_rows, &exercise_rows)?;

    let xs = encode_table(&sets.sc, &plan.learner)?;
    let xe = encode_table(&sets.ec, &plan.exercise)?;
    let pick = |rows: &[usize], all: &[Vec<f64>]| -> Vec<Vec<f64>> { rows.iter().map(|&i| all[i].clone()).collect() };
    let sae_cfg = |stream: &str| SaeConfig { seed: derive_seed(config.seed, stream), ..config.sae.clone() };
    let learner = train_sae(&pick(&learner_rows, &xs), config.d2, &sae_cfg("sae.learner"))?;
    let exercise = train_sae(&pick(&exercise_rows, &xe), config.d3, &sae_cfg("sae.exercise"))?;
    let saes = SaePair { learner, exercise, provenance: sets.provenance.clone() };
    Ok(PreparedFeatures { channels, sets, plan, saes })
}

/// Trains the fusion/prediction network with Adam on mean BCE over
/// `train_cells`, early-stopping on validation AUC and keeping the best
/// epoch's weights.
#[allow(clippy::too_many_arguments)]
pub fn train_ldm(
    r: &ResponseMatrix,
    q: &QMatrix,
    sets: &CognitiveParameterSets,
    saes: &SaePair,
    plan: &EncodingPlan,
    config: &LdmConfig,
    train_cells: &[Cell],
    val_cells: &[Cell],
) -> Result<LdmModel, DiagnosisError> {
    config.validate()?;
    q.check_aligned(r)?;
    if train_cells.is_empty() {
        return Err(DiagnosisError::EmptyTrainingSet);
    }
    if val_cells.is_empty() {
        return Err(DiagnosisError::NoValidationCells);
    }
    if sets.sc.ids != r.learner_ids() || sets.ec.ids != r.exercise_ids() {
        return Err(DiagnosisError::ShapeMismatch("parameter sets do not index the response matrix".into()));
    }
    let expected = r.restricted_to(&[train_cells, val_cells].concat()).digest();
    for (what, digest) in [("parameter sets", &sets.provenance), ("encoding plan", &plan.provenance), ("autoencoders", &saes.provenance)] {
        if *digest != expected {
            return Err(DiagnosisError::Leakage(what.to_string()));
        }
    }
    let labels = |cells: &[Cell]| -> Result<Vec<u8>, DiagnosisError> {
        cells
            .iter()
            .map(|c| {
                r.get(c.learner, c.exercise).ok_or_else(|| {
                    DiagnosisError::ShapeMismatch(format!("cell ({}, {}) is not observed", c.learner, c.exercise))
                })
            })
            .collect()
    };
    let train_y = labels(train_cells)?;
    let val_y = labels(val_cells)?;

    let layout = Layout::from_config(config, sets.sc.width(), sets.ec.width());
    let network = Network::init(layout, derive_seed(config.seed, "network.init"))?;
    let mut model = LdmModel::assemble(config.clone(), plan.clone(), sets.clone(), saes.clone(), network)?;

    let mut adam = AdamState::new(config.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "network.train"));
    let mut order: Vec<usize> = (0..train_cells.len()).collect();
    let mut history = TrainingHistory { best_val_auc: f64::NEG_INFINITY, ..Default::default() };
    let mut best = model.network.params.clone();
    let mut stale = 0;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let cells: Vec<Cell> = chunk.iter().map(|&i| train_cells[i]).collect();
            let y: Vec<f64> = chunk.iter().map(|&i| train_y[i] as f64).collect();
            let batch = model.batch(&cells);
            let mut tape = Tape::new();
            let bound = model.network.bind(&mut tape);
            let out = model.network.forward(&mut tape, &bound, &batch, true, config.dropout, &mut rng)?;
            let loss = tape.bce_loss(out.p, &y)?;
            total += tape.value(loss)[0] * chunk.len() as f64;
            tape.backward(loss)?;
            for (name, v) in bound.iter() {
                tape.accumulate_into(v, model.network.params.get_mut(name).expect("bound"))?;
            }
            adam_step(&mut model.network.params, &mut adam)?;
        }
        history.train_loss.push(total / train_cells.len() as f64);
        let val_scores = model.predict_probabilities(val_cells)?;
        let score = match auc(&val_y, &val_scores) {
            Ok(a) => a,
            Err(_) => {
                warn!("validation labels are single-class; early stopping on negative BCE");
                -mean_bce(&val_y, &val_scores)
            }
        };
        history.val_auc.push(score);
        debug!("epoch {epoch}: train bce {:.5} val {:.5}", history.train_loss.last().unwrap(), score);
        if score > history.best_val_auc {
            history.best_val_auc = score;
            history.best_epoch = epoch;
            best = model.network.params.clone();
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }
    model.network.params = best;
    if history.best_epoch == 0 {
        history.best_val_auc = f64::NAN;
    }
    model.history = history;
    Ok(model)
}

fn mean_bce(y: &[u8], p: &[f64]) -> f64 {
    let eps = crate::ndgrad::BCE_EPS;
    y.iter()
        .zip(p)
        .map(|(&y, &p)| {
            let p = p.clamp(eps, 1.0 - eps);
            if y == 1 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum::<f64>()
        / y.len() as f64
}

impl LdmModel {
    /// Recomputes the frozen latents for every learner and exercise.
    pub fn assemble(
        config: LdmConfig,
        plan: EncodingPlan,
        sets: CognitiveParameterSets,
        saes: SaePair,
        network: Network,
    ) -> Result<Self, DiagnosisError> {
        let l = &network.layout;
        if l.d_s != sets.sc.width() || l.d_e != sets.ec.width() {
            return Err(DiagnosisError::ShapeMismatch(format!(
                "network expects SC/EC widths {}/{}, sets have {}/{}",
                l.d_s,
                l.d_e,
                sets.sc.width(),
                sets.ec.width()
            )));
        }
        let (learner_latent, exercise_latent) = if l.use_deep {
            if saes.learner.latent_dim != l.d2 || saes.exercise.latent_dim != l.d3 {
                return Err(DiagnosisError::ShapeMismatch("autoencoder widths disagree with d2/d3".into()));
            }
            let xs = encode_table(&sets.sc, &plan.learner)?;
            let xe = encode_table(&sets.ec, &plan.exercise)?;
            (saes.learner.encode_batch(&xs)?, saes.exercise.encode_batch(&xe)?)
        } else {
            (Vec::new(), Vec::new())
        };
        Ok(Self {
            config,
            plan,
            sets,
            saes,
            network,
            history: TrainingHistory::default(),
            learner_latent,
            exercise_latent,
        })
    }

    pub fn learner_latent(&self, learner: usize) -> &[f64] {
        &self.learner_latent[learner]
    }

    pub fn exercise_latent(&self, exercise: usize) -> &[f64] {
        &self.exercise_latent[exercise]
    }

    pub fn batch(&self, cells: &[Cell]) -> Batch {
        let mut b = Batch { n: cells.len(), ..Default::default() };
        for c in cells {
            if self.network.layout.use_deep {
                b.hs.extend_from_slice(&self.learner_latent[c.learner]);
                b.he.extend_from_slice(&self.exercise_latent[c.exercise]);
            }
            b.sc.extend_from_slice(&self.sets.sc.rows[c.learner]);
            b.ec.extend_from_slice(&self.sets.ec.rows[c.exercise]);
        }
        b
    }

    fn check_cells(&self, cells: &[Cell]) -> Result<(), DiagnosisError> {
        for c in cells {
            if c.learner >= self.sets.sc.ids.len() {
                return Err(DiagnosisError::UnknownLearner(format!("#{}", c.learner)));
            }
            if c.exercise >= self.sets.ec.ids.len() {
                return Err(DiagnosisError::UnknownExercise(format!("#{}", c.exercise)));
            }
        }
        Ok(())
    }

    /// Inference-mode probabilities for index cells.
    pub fn predict_probabilities(&self, cells: &[Cell]) -> Result<Vec<f64>, DiagnosisError> {
        self.check_cells(cells)?;
        let mut out = Vec::with_capacity(cells.len());
        for chunk in cells.chunks(INFER_CHUNK) {
            out.extend(self.network.infer(&self.batch(chunk))?.0);
        }
        Ok(out)
    }

    pub fn predict_cells(&self, cells: &[Cell]) -> Result<Vec<PredictionRecord>, DiagnosisError> {
        self.check_cells(cells)?;
        let mut out = Vec::with_capacity(cells.len());
        for chunk in cells.chunks(INFER_CHUNK) {
            let (p, w) = self.network.infer(&self.batch(chunk))?;
            for ((c, p), w) in chunk.iter().zip(p).zip(w) {
                out.push(PredictionRecord {
                    learner_id: self.sets.sc.ids[c.learner].clone(),
                    exercise_id: self.sets.ec.ids[c.exercise].clone(),
                    p,
                    attention: w,
                });
            }
        }
        Ok(out)
    }

    pub fn cell_of(&self, learner_id: &str, exercise_id: &str) -> Result<Cell, DiagnosisError> {
        let i = self
            .sets
            .sc
            .ids
            .iter()
            .position(|x| x == learner_id)
            .ok_or_else(|| DiagnosisError::UnknownLearner(learner_id.to_string()))?;
        let j = self
            .sets
            .ec
            .ids
            .iter()
            .position(|x| x == exercise_id)
            .ok_or_else(|| DiagnosisError::UnknownExercise(exercise_id.to_string()))?;
        Ok(Cell::new(i, j))
    }

    pub fn predict(&self, learner_id: &str, exercise_id: &str) -> Result<PredictionRecord, DiagnosisError> {
        let cell = self.cell_of(learner_id, exercise_id)?;
        Ok(self.predict_cells(&[cell])?.remove(0))
    }

    /// Names of the fused-vector positions: deep features, then SC, then EC
    /// columns.
    pub fn feature_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.network.layout.d5());
        if self.network.layout.use_deep {
            names.extend((1..=self.network.layout.d4).map(|i| format!("deep.{i}")));
        }
        names.extend(self.sets.sc.columns.iter().map(|c| format!("sc.{}", c.name)));
        names.extend(self.sets.ec.columns.iter().map(|c| format!("ec.{}", c.name)));
        names
    }

    /// Mean BCE of the current weights over the given cells.
    pub fn mean_bce(&self, r: &ResponseMatrix, cells: &[Cell]) -> Result<f64, DiagnosisError> {
        let p = self.predict_probabilities(cells)?;
        let y: Vec<u8> = cells.iter().map(|c| r.get(c.learner, c.exercise).unwrap_or(0)).collect();
        Ok(mean_bce(&y, &p))
    }

    pub(crate) fn with_history(mut self, history: TrainingHistory) -> Self {
        self.history = history;
        self
    }
}

/// Writes `learner_id,exercise_id,p`.
pub fn write_predictions_csv(records: &[PredictionRecord], path: &Path) -> Result<(), DiagnosisError> {
    let mut out = String::from("learner_id,exercise_id,p\n");
    for rec in records {
        out.push_str(&format!("{},{},{}\n", rec.learner_id, rec.exercise_id, rec.p));
    }
    Ok(write_file(path, out.as_bytes())?)
}
