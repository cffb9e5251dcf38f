use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{LdmModel, SaePair, TrainingHistory};
use super::network::{Layout, Network};
use super::{DiagnosisError, LdmConfig};
use crate::dataio::write_file;
use crate::encoding::{EncodingPlan, SaeModel};
use crate::ndgrad::ParamStore;
use crate::psychometrics::CognitiveParameterSets;

pub const BUNDLE_FILES: [&str; 6] =
    ["plan.json", "psychometrics.json", "sae_learner.ckpt", "sae_exercise.ckpt", "network.ckpt", "config.json"];

#[derive(Serialize, Deserialize)]
struct BundleConfig {
    config: LdmConfig,
    history: TrainingHistory,
    provenance: String,
}

fn read(dir: &Path, name: &str) -> Result<String, DiagnosisError> {
    let path = dir.join(name);
    std::fs::read_to_string(&path).map_err(|e| DiagnosisError::Io(path.display().to_string(), e))
}

fn parse_err(name: &str) -> impl Fn(String) -> DiagnosisError + '_ {
    move |e| DiagnosisError::Parse(name.to_string(), e)
}

/// Writes the six bundle files into `dir`. `psychometrics` is the JSON
/// written as `psychometrics.json`; it must carry the parameter sets under
/// a `sets` key (as the channel export does).
pub fn save_bundle(model: &LdmModel, psychometrics: Option<&serde_json::Value>, dir: &Path) -> Result<(), DiagnosisError> {
    let psych = match psychometrics {
        Some(v) => v.clone(),
        None => serde_json::json!({ "sets": model.sets }),
    };
    let cfg = BundleConfig {
        config: model.config.clone(),
        history: model.history.clone(),
        provenance: model.saes.provenance.clone(),
    };
    let files: [(&str, String); 6] = [
        ("plan.json", model.plan.to_json()),
        ("psychometrics.json", serde_json::to_string_pretty(&psych).expect("json value")),
        ("sae_learner.ckpt", model.saes.learner.params.to_json()),
        ("sae_exercise.ckpt", model.saes.exercise.params.to_json()),
        ("network.ckpt", model.network.params.to_json()),
        ("config.json", serde_json::to_string_pretty(&cfg).expect("config serializes")),
    ];
    for (name, body) in files {
        write_file(&dir.join(name), body.as_bytes())?;
    }
    Ok(())
}

pub fn load_bundle(dir: &Path) -> Result<LdmModel, DiagnosisError> {
    let plan = EncodingPlan::from_json(&read(dir, "plan.json")?)?;
    let psych: serde_json::Value =
        serde_json::from_str(&read(dir, "psychometrics.json")?).map_err(|e| parse_err("psychometrics.json")(e.to_string()))?;
    let sets: CognitiveParameterSets = serde_json::from_value(psych.get("sets").cloned().unwrap_or(psych))
        .map_err(|e| parse_err("psychometrics.json")(e.to_string()))?;
    let cfg: BundleConfig =
        serde_json::from_str(&read(dir, "config.json")?).map_err(|e| parse_err("config.json")(e.to_string()))?;
    let learner = SaeModel::from_params(ParamStore::from_json(&read(dir, "sae_learner.ckpt")?)?)?;
    let exercise = SaeModel::from_params(ParamStore::from_json(&read(dir, "sae_exercise.ckpt")?)?)?;
    let layout = Layout::from_config(&cfg.config, sets.sc.width(), sets.ec.width());
    let network = Network::from_params(layout, ParamStore::from_json(&read(dir, "network.ckpt")?)?)?;
    if plan.provenance != sets.provenance || cfg.provenance != sets.provenance {
        return Err(DiagnosisError::Leakage("bundle components".into()));
    }
    let saes = SaePair { learner, exercise, provenance: cfg.provenance };
    Ok(LdmModel::assemble(cfg.config, plan, sets, saes, network)?.with_history(cfg.history))
}
