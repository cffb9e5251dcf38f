use std::fmt;
use std::time::Instant;

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::baseline::{baseline_predict, Channel, DinaScoring};
use super::{auc, rmse, EvalError};
use crate::dataio::{split_folds, Cell, GroundTruth, QMatrix, ResponseMatrix};
use crate::derive_seed;
use crate::diagnosis::{prepare_features, train_ldm, DiagnosisError, LdmConfig};
use crate::psychometrics::{PsychConfig, Variant};

pub const ORACLE_MODEL: &str = "bayes-oracle";

/// Network configurations trained on the same fold features.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arm {
    Full,
    /// Raw parameter rows only, no response-network features.
    ShallowOnly,
    AttentionOff,
}

impl Arm {
    pub fn model_name(&self, variant: Variant) -> String {
        match self {
            Arm::Full => variant.as_str().to_string(),
            Arm::ShallowOnly => format!("{}/shallow-only", variant.as_str()),
            Arm::AttentionOff => format!("{}/no-attention", variant.as_str()),
        }
    }

    fn apply(&self, cfg: &LdmConfig) -> LdmConfig {
        let mut c = cfg.clone();
        match self {
            Arm::Full => {}
            Arm::ShallowOnly => c.use_deep = false,
            Arm::AttentionOff => c.use_attention = false,
        }
        c
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum FoldTag {
    Fold(usize),
    Aggregate,
}

impl fmt::Display for FoldTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FoldTag::Fold(i) => write!(f, "{i}"),
            FoldTag::Aggregate => f.write_str("aggregate"),
        }
    }
}

impl Serialize for FoldTag {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for FoldTag {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        if s == "aggregate" {
            return Ok(FoldTag::Aggregate);
        }
        s.parse().map(FoldTag::Fold).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub fold: FoldTag,
    pub model: String,
    pub auc: f64,
    pub rmse: f64,
    pub n_cells: usize,
    /// Time spent scoring the fold's test cells.
    pub wall_clock_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvConfig {
    pub folds: usize,
    pub seed: u64,
    pub psych: PsychConfig,
    pub ldm: LdmConfig,
    pub arms: Vec<Arm>,
    /// Share of each fold's training cells held out for early stopping.
    pub val_fraction: f64,
    pub dina_scoring: DinaScoring,
    /// Worker threads over folds.
    pub jobs: usize,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            folds: 5,
            seed: 0,
            psych: PsychConfig::default(),
            ldm: LdmConfig::default(),
            arms: vec![Arm::Full],
            val_fraction: 0.1,
            dina_scoring: DinaScoring::Mixture,
            jobs: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub variant: Variant,
    pub folds: usize,
    pub seed: u64,
    /// Per-fold rows in fold order, then one aggregate row per model.
    pub reports: Vec<MetricReport>,
}

impl CvReport {
    pub fn aggregate(&self, model: &str) -> Option<&MetricReport> {
        self.reports.iter().find(|r| r.fold == FoldTag::Aggregate && r.model == model)
    }

    pub fn models(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.reports {
            if !out.contains(&r.model) {
                out.push(r.model.clone());
            }
        }
        out
    }

    /// `fold,model,auc,rmse,n_cells`. Timing is left out so identical runs
    /// give identical bytes; see [`CvReport::timing_csv`].
    pub fn to_csv(&self) -> String {
        let mut s = String::from("fold,model,auc,rmse,n_cells\n");
        for r in &self.reports {
            s.push_str(&format!("{},{},{},{},{}\n", r.fold, r.model, r.auc, r.rmse, r.n_cells));
        }
        s
    }

    /// `fold,model,auc,rmse,n_cells,wall_clock_ms`.
    pub fn timing_csv(&self) -> String {
        let mut s = String::from("fold,model,auc,rmse,n_cells,wall_clock_ms\n");
        for r in &self.reports {
            s.push_str(&format!("{},{},{},{},{},{:.3}\n", r.fold, r.model, r.auc, r.rmse, r.n_cells, r.wall_clock_ms));
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CvError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Diagnosis(#[from] DiagnosisError),
    #[error(transparent)]
    Data(#[from] crate::dataio::DataError),
    #[error("fold worker panicked")]
    WorkerPanic,
}

fn score(fold: usize, model: String, labels: &[u8], scores: &[f64], started: Instant) -> Result<MetricReport, EvalError> {
    Ok(MetricReport {
        fold: FoldTag::Fold(fold),
        model,
        auc: auc(labels, scores)?,
        rmse: rmse(labels, scores)?,
        n_cells: labels.len(),
        wall_clock_ms: started.elapsed().as_secs_f64() * 1e3,
    })
}

/// Splits fold-training cells into (train, validation) deterministically.
pub fn validation_split(cells: &[Cell], fraction: f64, seed: u64) -> (Vec<Cell>, Vec<Cell>) {
    let mut shuffled = cells.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = ((cells.len() as f64 * fraction).round() as usize).clamp(1, cells.len().saturating_sub(1).max(1));
    let val = shuffled.split_off(shuffled.len() - n_val);
    (shuffled, val)
}

/// One fold: mask its test cells, fit channels and features on the rest,
/// train every arm, and score arms, fitted channels and (if given) the
/// generating probabilities on the test cells.
pub fn evaluate_fold(
    variant: Variant,
    r: &ResponseMatrix,
    q: &QMatrix,
    fold: usize,
    fit_cells: &[Cell],
    test_cells: &[Cell],
    config: &CvConfig,
    truth: Option<&GroundTruth>,
) -> Result<Vec<MetricReport>, CvError> {
    let fold_seed = config.seed.wrapping_add(fold as u64);
    let ldm = LdmConfig { variant, seed: fold_seed, ..config.ldm.clone() };
    let psych = config.psych.clone().with_seed(derive_seed(fold_seed, "psych"));
    let (train, val) = validation_split(fit_cells, config.val_fraction, derive_seed(fold_seed, "validation"));
    info!("fold {fold}: {} train / {} validation / {} test cells", train.len(), val.len(), test_cells.len());

    let features = prepare_features(r, q, fit_cells, &psych, &ldm)?;
    let labels: Vec<u8> = test_cells.iter().map(|c| r.get(c.learner, c.exercise).expect("observed")).collect();
    let mut out = Vec::new();
    for arm in &config.arms {
        let model = train_ldm(r, q, &features.sets, &features.saes, &features.plan, &arm.apply(&ldm), &train, &val)?;
        let started = Instant::now();
        let scores = model.predict_probabilities(test_cells)?;
        out.push(score(fold, arm.model_name(variant), &labels, &scores, started)?);
    }
    for ch in Channel::ALL {
        if ch.is_fitted(&features.channels) {
            let started = Instant::now();
            let scores = baseline_predict(ch, &features.channels, q, test_cells, config.dina_scoring)?;
            out.push(score(fold, ch.as_str().to_string(), &labels, &scores, started)?);
        }
    }
    if let Some(t) = truth {
        let started = Instant::now();
        let scores: Vec<f64> = test_cells.iter().map(|c| t.prob(c.learner, c.exercise)).collect();
        out.push(score(fold, ORACLE_MODEL.to_string(), &labels, &scores, started)?);
    }
    Ok(out)
}

/// k-fold cross-validation over observed cells. Fold `f` derives its seeds
/// from `seed + f`, so results do not depend on `jobs`.
pub fn cross_validate(
    variant: Variant,
    r: &ResponseMatrix,
    q: &QMatrix,
    config: &CvConfig,
    truth: Option<&GroundTruth>,
) -> Result<CvReport, CvError> {
    q.check_aligned(r)?;
    let plan = split_folds(r, config.folds, config.seed)?;
    let run = |f: usize| evaluate_fold(variant, r, q, f, &plan.train_cells(f), &plan.test_cells(f), config, truth);
    let mut per_fold: Vec<Vec<MetricReport>> = Vec::with_capacity(config.folds);
    if config.jobs <= 1 {
        for f in 0..config.folds {
            per_fold.push(run(f)?);
        }
    } else {
        let folds: Vec<usize> = (0..config.folds).collect();
        let results: Vec<Result<Vec<MetricReport>, CvError>> = std::thread::scope(|s| {
            let handles: Vec<_> = folds
                .chunks(config.folds.div_ceil(config.jobs))
                .map(|chunk| s.spawn(move || chunk.iter().map(|&f| run(f)).collect::<Vec<_>>()))
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().unwrap_or_else(|_| vec![Err(CvError::WorkerPanic)]))
                .collect()
        });
        for res in results {
            per_fold.push(res?);
        }
    }
    let mut reports: Vec<MetricReport> = per_fold.into_iter().flatten().collect();
    let models: Vec<String> = {
        let mut m: Vec<String> = Vec::new();
        for rep in &reports {
            if !m.contains(&rep.model) {
                m.push(rep.model.clone());
            }
        }
        m
    };
    for model in models {
        let rows: Vec<&MetricReport> = reports.iter().filter(|x| x.model == model).collect();
        let n = rows.len() as f64;
        reports.push(MetricReport {
            fold: FoldTag::Aggregate,
            auc: rows.iter().map(|x| x.auc).sum::<f64>() / n,
            rmse: rows.iter().map(|x| x.rmse).sum::<f64>() / n,
            n_cells: rows.iter().map(|x| x.n_cells).sum(),
            wall_clock_ms: rows.iter().map(|x| x.wall_clock_ms).sum(),
            model,
        });
    }
    Ok(CvReport { variant, folds: config.folds, seed: config.seed, reports })
}
