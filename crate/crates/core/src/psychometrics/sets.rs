//! Assembly of the exercise (EC) and learner (SC) cognitive parameter tables.

use serde::{Deserialize, Serialize};

use super::{DinaFit, HoDinaFit, IrtFit, MirtFit, PsychError};
use crate::dataio::QMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// IRT + DINA channels.
    #[serde(rename = "ldm-id")]
    LdmId,
    /// Ho-DINA + MIRT + IRT channels.
    #[serde(rename = "ldm-hmi")]
    LdmHmi,
}

impl Variant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::LdmId => "ldm-id",
            Variant::LdmHmi => "ldm-hmi",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "ldm-id" | "LDM_ID" => Ok(Variant::LdmId),
            "ldm-hmi" | "LDM_HMI" => Ok(Variant::LdmHmi),
            other => Err(format!("unknown variant `{other}` (expected ldm-id or ldm-hmi)")),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Continuous,
    Binary,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
}

impl Column {
    fn cont(name: impl Into<String>) -> Self {
        Self { name: name.into(), kind: ColumnKind::Continuous }
    }
    fn bin(name: impl Into<String>) -> Self {
        Self { name: name.into(), kind: ColumnKind::Binary }
    }
}

/// A named-column table with one row per learner or exercise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamTable {
    pub ids: Vec<String>,
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<f64>>,
}

impl ParamTable {
    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn row_of(&self, id: &str) -> Option<&[f64]> {
        self.ids.iter().position(|x| x == id).map(|i| self.rows[i].as_slice())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CognitiveParameterSets {
    pub variant: Variant,
    /// Exercise parameters, one row per exercise.
    pub ec: ParamTable,
    /// Learner parameters, one row per learner.
    pub sc: ParamTable,
    /// Digest of the response matrix every channel was fitted on.
    pub provenance: String,
}

/// Fitted channels available for assembly.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ChannelOutputs {
    pub irt: Option<IrtFit>,
    pub dina: Option<DinaFit>,
    pub mirt: Option<MirtFit>,
    pub hodina: Option<HoDinaFit>,
}

impl ChannelOutputs {
    fn digests(&self) -> Vec<&str> {
        let mut out = Vec::new();
        if let Some(f) = &self.irt {
            out.push(f.data_digest.as_str());
        }
        if let Some(f) = &self.dina {
            out.push(f.data_digest.as_str());
        }
        if let Some(f) = &self.mirt {
            out.push(f.data_digest.as_str());
        }
        if let Some(f) = &self.hodina {
            out.push(f.data_digest.as_str());
        }
        out
    }
}

fn need<'a, T>(fit: &'a Option<T>, name: &str) -> Result<&'a T, PsychError> {
    fit.as_ref().ok_or_else(|| PsychError::MissingChannel(name.to_string()))
}

fn check_len(what: &str, got: usize, expected: usize) -> Result<(), PsychError> {
    if got != expected {
        return Err(PsychError::ShapeMismatch(format!("{what}: {got} entries, expected {expected}")));
    }
    Ok(())
}

/// Lays out EC/SC rows for the variant.
///
/// LDM-ID: EC = [irt diff, irt disc, dina guess, dina slip], SC = [irt θ] ++ dina α.
/// LDM-HMI: EC = [irt diff, irt disc, hodina slip, hodina guess] ++ mirt disc ++
/// [mirt guess, mirt diff], SC = [irt θ, hodina θ] ++ mirt ability ++ hodina α.
/// `include_irt_guess` appends the IRT guess as a final EC column.
pub fn build_parameter_sets(
    variant: Variant,
    channels: &ChannelOutputs,
    learner_ids: &[String],
    q: &QMatrix,
    include_irt_guess: bool,
) -> Result<CognitiveParameterSets, PsychError> {
    let irt = need(&channels.irt, "irt")?;
    let n = learner_ids.len();
    let m = q.n_exercises();
    let kids = q.knowledge_ids();
    check_len("irt items", irt.items.len(), m)?;
    check_len("irt theta", irt.theta.len(), n)?;

    let mut ec_cols = vec![Column::cont("irt.difficulty"), Column::cont("irt.discrimination")];
    let mut sc_cols = vec![Column::cont("irt.theta")];
    let mut ec_rows: Vec<Vec<f64>> =
        irt.items.iter().map(|it| vec![it.difficulty, it.discrimination]).collect();
    let mut sc_rows: Vec<Vec<f64>> = irt.theta.iter().map(|&t| vec![t]).collect();

    match variant {
        Variant::LdmId => {
            let dina = need(&channels.dina, "dina")?;
            check_len("dina items", dina.slip.len(), m)?;
            check_len("dina alpha", dina.alpha.len(), n)?;
            ec_cols.extend([Column::cont("dina.guess"), Column::cont("dina.slip")]);
            for (j, row) in ec_rows.iter_mut().enumerate() {
                row.extend([dina.guess[j], dina.slip[j]]);
            }
            sc_cols.extend(kids.iter().map(|k| Column::bin(format!("dina.alpha.{k}"))));
            for (i, row) in sc_rows.iter_mut().enumerate() {
                check_len("dina alpha row", dina.alpha[i].len(), kids.len())?;
                row.extend(dina.alpha[i].iter().map(|&a| a as f64));
            }
        }
        Variant::LdmHmi => {
            let ho = need(&channels.hodina, "hodina")?;
            let mirt = need(&channels.mirt, "mirt")?;
            check_len("hodina items", ho.slip.len(), m)?;
            check_len("hodina learners", ho.theta.len(), n)?;
            check_len("mirt items", mirt.items.len(), m)?;
            check_len("mirt learners", mirt.ability.len(), n)?;
            let dims = mirt.dims;
            ec_cols.extend([Column::cont("hodina.slip"), Column::cont("hodina.guess")]);
            ec_cols.extend((1..=dims).map(|t| Column::cont(format!("mirt.disc.{t}"))));
            ec_cols.extend([Column::cont("mirt.guess"), Column::cont("mirt.difficulty")]);
            for (j, row) in ec_rows.iter_mut().enumerate() {
                let it = &mirt.items[j];
                row.extend([ho.slip[j], ho.guess[j]]);
                row.extend(&it.disc);
                row.extend([it.guess, it.difficulty]);
            }
            sc_cols.push(Column::cont("hodina.theta"));
            sc_cols.extend((1..=dims).map(|t| Column::cont(format!("mirt.ability.{t}"))));
            sc_cols.extend(kids.iter().map(|k| Column::bin(format!("hodina.alpha.{k}"))));
            for (i, row) in sc_rows.iter_mut().enumerate() {
                check_len("hodina alpha row", ho.alpha[i].len(), kids.len())?;
                row.push(ho.theta[i]);
                row.extend(&mirt.ability[i]);
                row.extend(ho.alpha[i].iter().map(|&a| a as f64));
            }
        }
    }

    if include_irt_guess {
        ec_cols.push(Column::cont("irt.guess"));
        for (j, row) in ec_rows.iter_mut().enumerate() {
            row.push(irt.items[j].guess);
        }
    }

    let digests = channels.digests();
    let provenance = digests[0].to_string();
    if digests.iter().any(|d| *d != provenance) {
        return Err(PsychError::ShapeMismatch("channels were fitted on different response data".into()));
    }

    Ok(CognitiveParameterSets {
        variant,
        ec: ParamTable { ids: q.exercise_ids().to_vec(), columns: ec_cols, rows: ec_rows },
        sc: ParamTable { ids: learner_ids.to_vec(), columns: sc_cols, rows: sc_rows },
        provenance,
    })
}
