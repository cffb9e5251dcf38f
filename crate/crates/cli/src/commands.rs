use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use ldiag::dataio::{
    generate_synthetic_dina, generate_synthetic_hodina, generate_synthetic_irt, load_q_matrix, load_response_matrix,
    split_folds, write_long_csv, write_q_csv, Cell, GroundTruth, Interval, QMatrix, ResponseFormat, ResponseMatrix,
};
use ldiag::derive_seed;
use ldiag::diagnosis::{load_bundle, prepare_features, save_bundle, train_ldm, write_predictions_csv, LdmModel};
use ldiag::evaluation::{
    auc, baseline_predict, cross_validate, rmse, validation_split, Arm, Channel, CvConfig, CvReport, FoldTag,
    MetricReport,
};
use ldiag::interpret::{export_attention_weights, export_exercise_report, export_learner_report, model_latent_correlation};
use ldiag::psychometrics::{build_parameter_sets, export_json, fit_channels};
use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::args::{
    DataArgs, DiagnoseArgs, EvaluateArgs, FitPsychArgs, GeneratorArg, ModelArgs, PredictArgs, SynthArgs, TrainArgs,
};
use crate::manifest::ManifestBuilder;

/// Exit 1 for bad input or configuration, 2 for failures while running.
#[derive(Debug)]
pub enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(e) | Failure::Runtime(e) => write!(f, "{e:#}"),
        }
    }
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Runtime(e.into())
    }
}

trait UsageExt<T> {
    fn usage(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> UsageExt<T> for Result<T, E> {
    fn usage(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Usage(e.into()))
    }
}

pub type CmdResult = Result<(), Failure>;

fn write(path: &Path, body: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}

fn parse_interval(s: &str) -> anyhow::Result<Interval> {
    let (lo, hi) = s.split_once(',').ok_or_else(|| anyhow!("expected `lo,hi`, got `{s}`"))?;
    Ok(Interval::new(lo.trim().parse()?, hi.trim().parse()?))
}

pub fn synth(a: &SynthArgs) -> CmdResult {
    let mut m = ManifestBuilder::start("synth");
    let slip = parse_interval(&a.slip).context("--slip").usage()?;
    let guess = parse_interval(&a.guess).context("--guess").usage()?;
    let (r, q, truth) = match a.generator {
        GeneratorArg::Dina => {
            let (r, q, t) = generate_synthetic_dina(a.learners, a.exercises, a.knowledge, slip, guess, a.seed).usage()?;
            (r, Some(q), t)
        }
        GeneratorArg::Irt => {
            let (r, t) = generate_synthetic_irt(a.learners, a.exercises, a.seed).usage()?;
            (r, None, t)
        }
        GeneratorArg::Hodina => {
            // Ho-DINA data uses one slip and guess for every item: the range midpoints.
            let (s, g) = ((slip.lo + slip.hi) / 2.0, (guess.lo + guess.hi) / 2.0);
            let (r, q, t) =
                generate_synthetic_hodina(a.learners, a.exercises, a.knowledge, 0.0, 1.5, s, g, a.seed).usage()?;
            (r, Some(q), t)
        }
    };
    let responses = a.out.join("responses.csv");
    write_long_csv(&r, &responses)?;
    m.output(&responses);
    if let Some(q) = &q {
        let path = a.out.join("q.csv");
        write_q_csv(q, &path)?;
        m.output(path);
    }
    let truth_path = a.out.join("truth.json");
    write(&truth_path, &truth.to_json())?;
    m.output(truth_path);
    let resolved = serde_json::json!({
        "generator": format!("{:?}", a.generator).to_lowercase(),
        "learners": a.learners,
        "exercises": a.exercises,
        "knowledge": a.knowledge,
        "slip": [slip.lo, slip.hi],
        "guess": [guess.lo, guess.hi],
        "seed": a.seed,
    });
    m.finish(&a.out, resolved, a.seed)?;
    Ok(())
}

/// Config file first, then command-line overrides.
fn resolve(data: &DataArgs, model: Option<&ModelArgs>, folds: Option<usize>, jobs: Option<usize>) -> Result<CvConfig, Failure> {
    let mut cfg = match &data.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).usage()?;
            serde_json::from_str::<CvConfig>(&text).with_context(|| format!("parsing {}", path.display())).usage()?
        }
        None => CvConfig::default(),
    };
    cfg.ldm.variant = data.variant.into();
    if let Some(s) = data.seed {
        cfg.seed = s;
    }
    if let Some(d) = data.mirt_dims {
        cfg.psych.mirt_dims = d;
    }
    if data.include_irt_guess {
        cfg.psych.include_irt_guess = true;
    }
    if let Some(m) = model {
        let l = &mut cfg.ldm;
        l.bins = m.bins.unwrap_or(l.bins);
        l.d4 = m.d4.unwrap_or(l.d4);
        l.attn_channels = m.attn_channels.unwrap_or(l.attn_channels);
        l.max_epochs = m.epochs.unwrap_or(l.max_epochs);
        l.batch_size = m.batch.unwrap_or(l.batch_size);
        l.learning_rate = m.lr.unwrap_or(l.learning_rate);
        l.dropout = m.dropout.unwrap_or(l.dropout);
    }
    if let Some(k) = folds {
        cfg.folds = k;
    }
    if let Some(j) = jobs {
        cfg.jobs = j;
    }
    cfg.ldm.seed = cfg.seed;
    cfg.ldm.validate().usage()?;
    if cfg.psych.mirt_dims == 0 {
        return Err(Failure::Usage(anyhow!("--mirt-dims must be at least 1")));
    }
    if cfg.folds < 2 {
        return Err(Failure::Usage(anyhow!("--folds must be at least 2")));
    }
    if cfg.jobs == 0 {
        return Err(Failure::Usage(anyhow!("--jobs must be at least 1")));
    }
    if !(cfg.val_fraction > 0.0 && cfg.val_fraction < 1.0) {
        return Err(Failure::Usage(anyhow!("val_fraction must lie in (0, 1)")));
    }
    Ok(cfg)
}

fn load_inputs(data: &DataArgs, m: &mut ManifestBuilder) -> Result<(ResponseMatrix, QMatrix), Failure> {
    let r = load_response_matrix(&data.responses, ResponseFormat::from_path(&data.responses)).usage()?;
    let q = load_q_matrix(&data.q).usage()?;
    q.check_aligned(&r).usage()?;
    m.input(&data.responses).usage()?;
    m.input(&data.q).usage()?;
    Ok((r, q))
}

fn resolved_json(cfg: &CvConfig) -> serde_json::Value {
    serde_json::to_value(cfg).expect("config serializes")
}

pub fn fit_psych(a: &FitPsychArgs) -> CmdResult {
    let mut m = ManifestBuilder::start("fit-psych");
    let cfg = resolve(&a.data, None, None, None)?;
    let (r, q) = load_inputs(&a.data, &mut m)?;
    let variant = cfg.ldm.variant;
    let psych = cfg.psych.clone().with_seed(derive_seed(cfg.seed, "psych"));
    let channels = fit_channels(variant, &r, &q, &psych)?;
    let sets = build_parameter_sets(variant, &channels, r.learner_ids(), &q, psych.include_irt_guess)?;
    let out = a.data.out.join("psychometrics.json");
    write(&out, &serde_json::to_string_pretty(&export_json(&channels, &sets, cfg.seed))?)?;
    m.output(out);
    m.finish(&a.data.out, resolved_json(&cfg), cfg.seed)?;
    Ok(())
}

fn metric(model: &str, labels: &[u8], scores: &[f64]) -> anyhow::Result<MetricReport> {
    Ok(MetricReport {
        fold: FoldTag::Fold(0),
        model: model.to_string(),
        auc: auc(labels, scores)?,
        rmse: rmse(labels, scores)?,
        n_cells: labels.len(),
        wall_clock_ms: 0.0,
    })
}

pub fn train(a: &TrainArgs) -> CmdResult {
    let mut m = ManifestBuilder::start("train");
    let cfg = resolve(&a.data, Some(&a.model), a.folds, None)?;
    let (r, q) = load_inputs(&a.data, &mut m)?;
    let plan = split_folds(&r, cfg.folds, cfg.seed).usage()?;
    let (fit, test) = (plan.train_cells(0), plan.test_cells(0));
    let (train_cells, val_cells) = validation_split(&fit, cfg.val_fraction, derive_seed(cfg.seed, "validation"));
    let psych = cfg.psych.clone().with_seed(derive_seed(cfg.seed, "psych"));
    info!("training on {} cells, validating on {}, holding out {}", train_cells.len(), val_cells.len(), test.len());
    let features = prepare_features(&r, &q, &fit, &psych, &cfg.ldm)?;
    let model = train_ldm(&r, &q, &features.sets, &features.saes, &features.plan, &cfg.ldm, &train_cells, &val_cells)?;

    let labels: Vec<u8> = test.iter().map(|c| r.get(c.learner, c.exercise).expect("observed cell")).collect();
    let started = std::time::Instant::now();
    let p = model.predict_probabilities(&test)?;
    let mut rows = vec![MetricReport {
        wall_clock_ms: started.elapsed().as_secs_f64() * 1e3,
        ..metric(cfg.ldm.variant.as_str(), &labels, &p)?
    }];
    for ch in Channel::ALL.into_iter().filter(|c| c.is_fitted(&features.channels)) {
        let s = baseline_predict(ch, &features.channels, &q, &test, cfg.dina_scoring)?;
        rows.push(metric(ch.as_str(), &labels, &s)?);
    }
    let report = CvReport { variant: cfg.ldm.variant, folds: cfg.folds, seed: cfg.seed, reports: rows };

    let psych_json = export_json(&features.channels, &features.sets, cfg.seed);
    save_bundle(&model, Some(&psych_json), &a.data.out)?;
    for name in ldiag::diagnosis::BUNDLE_FILES {
        m.output(a.data.out.join(name));
    }
    let holdout = a.data.out.join("holdout.csv");
    write(&holdout, &report.to_csv())?;
    m.output(holdout);
    let history = a.data.out.join("history.json");
    write(&history, &serde_json::to_string_pretty(&model.history)?)?;
    m.output(history);
    m.finish(&a.data.out, resolved_json(&cfg), cfg.seed)?;
    Ok(())
}

fn load_truth(path: &Path, r: &ResponseMatrix) -> Result<GroundTruth, Failure> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).usage()?;
    let truth: GroundTruth = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display())).usage()?;
    let ok = truth.bayes_prob.len() == r.n_learners() && truth.bayes_prob.iter().all(|row| row.len() == r.n_exercises());
    if !ok {
        return Err(Failure::Usage(anyhow!("ground truth shape does not match the response matrix")));
    }
    Ok(truth)
}

pub fn evaluate(a: &EvaluateArgs) -> CmdResult {
    let mut m = ManifestBuilder::start("evaluate");
    let mut cfg = resolve(&a.data, Some(&a.model), a.folds, a.jobs)?;
    if a.ablations {
        cfg.arms = vec![Arm::Full, Arm::ShallowOnly, Arm::AttentionOff];
    }
    let (r, q) = load_inputs(&a.data, &mut m)?;
    let truth = match &a.truth {
        Some(p) => {
            m.input(p).usage()?;
            Some(load_truth(p, &r)?)
        }
        None => None,
    };
    let report = cross_validate(cfg.ldm.variant, &r, &q, &cfg, truth.as_ref())?;
    for model in report.models() {
        if let Some(agg) = report.aggregate(&model) {
            println!("{model:<24} auc {:.4}  rmse {:.4}", agg.auc, agg.rmse);
        }
    }
    let out = &a.data.out;
    for (name, body) in [("report.csv", report.to_csv()), ("report.json", report.to_json()), ("timing.csv", report.timing_csv())] {
        write(&out.join(name), &body)?;
        m.output(out.join(name));
    }
    m.finish(out, resolved_json(&cfg), cfg.seed)?;
    Ok(())
}

fn read_cells(path: &Path, model: &LdmModel) -> Result<Vec<Cell>, Failure> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).usage()?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Failure::Usage(anyhow!("{} is empty", path.display())))?;
    if header.trim() != "learner_id,exercise_id" {
        return Err(Failure::Usage(anyhow!("{}: header must be `learner_id,exercise_id`", path.display())));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let (l, e) = line
                .split_once(',')
                .ok_or_else(|| Failure::Usage(anyhow!("{} line {}: expected two fields", path.display(), i + 2)))?;
            model.cell_of(l.trim(), e.trim()).usage()
        })
        .collect()
}

fn all_cells(model: &LdmModel) -> Vec<Cell> {
    let (n, m) = (model.sets.sc.ids.len(), model.sets.ec.ids.len());
    (0..n).flat_map(|i| (0..m).map(move |j| Cell::new(i, j))).collect()
}

fn load_model(dir: &Path, m: &mut ManifestBuilder) -> Result<LdmModel, Failure> {
    for name in ldiag::diagnosis::BUNDLE_FILES {
        m.input(&dir.join(name)).usage()?;
    }
    load_bundle(dir).usage()
}

pub fn predict(a: &PredictArgs) -> CmdResult {
    let mut m = ManifestBuilder::start("predict");
    let model = load_model(&a.model, &mut m)?;
    let cells = match &a.cells {
        Some(p) => {
            m.input(p).usage()?;
            read_cells(p, &model)?
        }
        None => all_cells(&model),
    };
    let records = model.predict_cells(&cells)?;
    let out = a.out.join("predictions.csv");
    write_predictions_csv(&records, &out)?;
    m.output(out);
    m.finish(&a.out, serde_json::json!({ "model": a.model, "cells": a.cells, "n_cells": cells.len() }), model.config.seed)?;
    Ok(())
}

pub fn diagnose(a: &DiagnoseArgs) -> CmdResult {
    let mut m = ManifestBuilder::start("diagnose");
    let model = load_model(&a.model, &mut m)?;
    if a.max_cells < 3 {
        return Err(Failure::Usage(anyhow!("--max-cells must be at least 3")));
    }
    let learners = export_learner_report(&model.sets, &a.learners).usage()?;
    let exercises = export_exercise_report(&model.sets, &a.exercises).usage()?;
    let mut cells = all_cells(&model);
    cells.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(a.seed, "diagnose.cells")));
    cells.truncate(a.max_cells);
    cells.sort();

    let mut outputs: Vec<(PathBuf, String)> = vec![
        (a.out.join("learners.csv"), learners.to_csv()),
        (a.out.join("learners.json"), learners.to_json()),
        (a.out.join("exercises.csv"), exercises.to_csv()),
        (a.out.join("exercises.json"), exercises.to_json()),
    ];
    if model.network.layout.use_deep {
        outputs.push((a.out.join("latent_corr.csv"), model_latent_correlation(&model, &cells)?.to_csv()));
    }
    if model.network.layout.use_attention {
        let pairs: Vec<(String, String)> = cells
            .iter()
            .map(|c| (model.sets.sc.ids[c.learner].clone(), model.sets.ec.ids[c.exercise].clone()))
            .collect();
        outputs.push((a.out.join("attention.csv"), export_attention_weights(&model, &pairs)?.to_csv()));
    }
    for (path, body) in outputs {
        write(&path, &body)?;
        m.output(path);
    }
    let resolved = serde_json::json!({
        "model": a.model,
        "learners": a.learners,
        "exercises": a.exercises,
        "max_cells": a.max_cells,
        "seed": a.seed,
    });
    m.finish(&a.out, resolved, a.seed)?;
    Ok(())
}
