//! On-disk corpus layout.
//!
//! ```text
//! <dir>/manifest.json            users and train/test split
//! <dir>/productivity.csv         optional domain,level table
//! <dir>/history/<user>.jsonl     history export
//! <dir>/activity/<user>.jsonl    ground-truth activity log
//! ```

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::activity::{parse_activity, write_activity};
use crate::error::{Error, Result};
use crate::history::{
    load_productivity_map, parse_history, write_history, HistoryVisit, ProductivityMap,
};
use crate::model::{read_json, write_json};
use crate::simulator::Corpus;
use crate::training::LabeledUser;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const PRODUCTIVITY_FILE: &str = "productivity.csv";
pub const CORPUS_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    #[serde(default)]
    pub master_seed: Option<u64>,
    pub users: Vec<String>,
    pub train: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl Manifest {
    pub fn users_in(&self, split: Split) -> &[String] {
        match split {
            Split::Train => &self.train,
            Split::Test => &self.test,
        }
    }
}

pub fn history_path(dir: &Path, user_id: &str) -> PathBuf {
    dir.join("history").join(format!("{user_id}.jsonl"))
}

pub fn activity_path(dir: &Path, user_id: &str) -> PathBuf {
    dir.join("activity").join(format!("{user_id}.jsonl"))
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(BufWriter::new(file))
}

pub fn write_corpus(dir: &Path, corpus: &Corpus) -> Result<()> {
    for user in &corpus.users {
        let path = history_path(dir, &user.user_id);
        let mut out = create(&path)?;
        write_history(&mut out, &user.history).map_err(|e| Error::io(&path, e))?;
        out.flush().map_err(|e| Error::io(&path, e))?;
        let path = activity_path(dir, &user.user_id);
        let mut out = create(&path)?;
        write_activity(&mut out, &user.activity).map_err(|e| Error::io(&path, e))?;
        out.flush().map_err(|e| Error::io(&path, e))?;
    }
    corpus
        .productivity
        .write_csv(create(&dir.join(PRODUCTIVITY_FILE))?)?;
    write_json(
        &dir.join(MANIFEST_FILE),
        &Manifest {
            format_version: CORPUS_FORMAT_VERSION,
            master_seed: Some(corpus.master_seed),
            users: corpus.users.iter().map(|u| u.user_id.clone()).collect(),
            train: corpus.train.clone(),
            test: corpus.test.clone(),
        },
    )
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    if !path.exists() {
        return Err(Error::InvalidParameter(format!(
            "no split manifest at {}",
            path.display()
        )));
    }
    read_json(&path)
}

/// The corpus productivity table, or an empty map when there is none.
pub fn read_productivity(dir: &Path) -> Result<ProductivityMap> {
    let path = dir.join(PRODUCTIVITY_FILE);
    if !path.exists() {
        return Ok(ProductivityMap::default());
    }
    let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
    load_productivity_map(file)
}

/// Visits for `user_id` from a history export file.
pub fn read_history_file(path: &Path, user_id: &str) -> Result<Vec<HistoryVisit>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_history(BufReader::new(file), user_id)
}

pub fn load_user(dir: &Path, user_id: &str) -> Result<LabeledUser> {
    let hpath = history_path(dir, user_id);
    if !hpath.exists() {
        return Err(Error::MissingHistory(user_id.to_owned()));
    }
    let apath = activity_path(dir, user_id);
    if !apath.exists() {
        return Err(Error::MissingGroundTruth(user_id.to_owned()));
    }
    let visits = read_history_file(&hpath, user_id)?;
    let file = fs::File::open(&apath).map_err(|e| Error::io(&apath, e))?;
    let mut events = parse_activity(BufReader::new(file))?;
    let events = events.remove(user_id).unwrap_or_default();
    Ok(LabeledUser::from_logs(user_id, visits, &events))
}

pub fn load_users(dir: &Path, user_ids: &[String]) -> Result<Vec<LabeledUser>> {
    user_ids.iter().map(|id| load_user(dir, id)).collect()
}
