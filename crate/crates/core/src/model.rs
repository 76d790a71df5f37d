//! Model directory layout.
//!
//! | file                  | contents                                        |
//! |-----------------------|-------------------------------------------------|
//! | `vocabulary.json`     | top domains and their fingerprint               |
//! | `active_forest.json`  | activity forest, tagged with the fingerprint    |
//! | `domain_forest.json`  | domain forest, tagged with the fingerprint      |
//! | `threshold.json`      | threshold sweep and chosen minutes              |
//! | `productivity.csv`    | productivity map the activity forest was fit on |

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::SweepResult;
use crate::error::{Error, Result};
use crate::forest::Forest;
use crate::history::{load_productivity_map, DomainVocabulary, VOCABULARY_SIZE};
use crate::reconstruct::{ActiveModel, DomainModel};
use crate::training::TrainedModels;

pub const MODEL_FORMAT_VERSION: u32 = 1;

pub const VOCABULARY_FILE: &str = "vocabulary.json";
pub const ACTIVE_FOREST_FILE: &str = "active_forest.json";
pub const DOMAIN_FOREST_FILE: &str = "domain_forest.json";
pub const THRESHOLD_FILE: &str = "threshold.json";
pub const PRODUCTIVITY_FILE: &str = "productivity.csv";

#[derive(Debug, Serialize, Deserialize)]
struct VocabularyFile {
    format_version: u32,
    fingerprint: String,
    domains: DomainVocabulary,
}

#[derive(Debug, Serialize, Deserialize)]
struct ForestFile {
    format_version: u32,
    task: String,
    vocabulary_fingerprint: String,
    forest: Forest,
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn check_version(file: &str, version: u32) -> Result<()> {
    if version == MODEL_FORMAT_VERSION {
        Ok(())
    } else {
        Err(Error::ModelMismatch(format!(
            "{file}: format version {version}, expected {MODEL_FORMAT_VERSION}"
        )))
    }
}

impl TrainedModels {
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let fingerprint = self.vocabulary.fingerprint();
        write_json(
            &dir.join(VOCABULARY_FILE),
            &VocabularyFile {
                format_version: MODEL_FORMAT_VERSION,
                fingerprint: fingerprint.clone(),
                domains: self.vocabulary.clone(),
            },
        )?;
        for (file, task, forest) in [
            (ACTIVE_FOREST_FILE, "active", &self.active),
            (DOMAIN_FOREST_FILE, "domain", &self.domain),
        ] {
            write_json(
                &dir.join(file),
                &ForestFile {
                    format_version: MODEL_FORMAT_VERSION,
                    task: task.to_owned(),
                    vocabulary_fingerprint: fingerprint.clone(),
                    forest: forest.clone(),
                },
            )?;
        }
        write_json(&dir.join(THRESHOLD_FILE), &self.threshold)?;
        let path = dir.join(PRODUCTIVITY_FILE);
        let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        self.productivity.write_csv(file)
    }

    /// Loads a model directory, rejecting forests trained against a
    /// different vocabulary.
    pub fn load(dir: &Path) -> Result<TrainedModels> {
        let vocab: VocabularyFile = read_json(&dir.join(VOCABULARY_FILE))?;
        check_version(VOCABULARY_FILE, vocab.format_version)?;
        if vocab.domains.len() != VOCABULARY_SIZE {
            return Err(Error::ModelMismatch(format!(
                "{VOCABULARY_FILE}: {} domains, expected {VOCABULARY_SIZE}",
                vocab.domains.len()
            )));
        }
        let fingerprint = vocab.domains.fingerprint();
        if fingerprint != vocab.fingerprint {
            return Err(Error::ModelMismatch(format!(
                "{VOCABULARY_FILE}: recorded fingerprint {} does not match its domains ({fingerprint})",
                vocab.fingerprint
            )));
        }
        let mut forests = Vec::with_capacity(2);
        for (file, task) in [
            (ACTIVE_FOREST_FILE, "active"),
            (DOMAIN_FOREST_FILE, "domain"),
        ] {
            let f: ForestFile = read_json(&dir.join(file))?;
            check_version(file, f.format_version)?;
            if f.task != task {
                return Err(Error::ModelMismatch(format!(
                    "{file}: task {}, expected {task}",
                    f.task
                )));
            }
            if f.vocabulary_fingerprint != fingerprint {
                return Err(Error::ModelMismatch(format!(
                    "{file}: trained with vocabulary {}, model vocabulary is {fingerprint}",
                    f.vocabulary_fingerprint
                )));
            }
            f.forest.check_version()?;
            forests.push(f.forest);
        }
        let domain = forests.pop().expect("two forests");
        let active = forests.pop().expect("two forests");
        let threshold: SweepResult = read_json(&dir.join(THRESHOLD_FILE))?;
        let path = dir.join(PRODUCTIVITY_FILE);
        let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
        let productivity = load_productivity_map(file)?;
        Ok(TrainedModels {
            vocabulary: vocab.domains,
            productivity,
            active,
            domain,
            threshold,
        })
    }

    pub fn active_model(&self) -> ActiveModel {
        ActiveModel {
            forest: self.active.clone(),
            vocabulary: self.vocabulary.clone(),
            productivity: self.productivity.clone(),
        }
    }

    pub fn domain_model(&self) -> DomainModel {
        DomainModel {
            forest: self.domain.clone(),
            vocabulary: self.vocabulary.clone(),
        }
    }
}
