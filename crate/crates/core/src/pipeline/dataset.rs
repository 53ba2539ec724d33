use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::RunConfig;
use crate::datamodel::{load_recording, read_meta, Recording};
use crate::error::{Error, Result};
use crate::synth::{default_benchmark_suite, generate, SynthSpec};

const RECORDING_FILES: [&str; 5] = ["meta", "right.csv", "left.csv", "annotations.csv", "episodes.csv"];

#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    Dir(PathBuf),
    Synth(Box<SynthSpec>),
}

/// One participant-day, materialized on demand.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetEntry {
    pub participant_id: String,
    pub day_id: String,
    pub source: Source,
}

impl DatasetEntry {
    pub fn key(&self) -> String {
        format!("{}/{}", self.participant_id, self.day_id)
    }

    pub fn load(&self) -> Result<Recording> {
        match &self.source {
            Source::Dir(dir) => load_recording(dir),
            Source::Synth(spec) => Ok(generate(spec)?.recording),
        }
    }
}

/// Lazily loaded recordings, ordered by participant then day.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    entries: Vec<DatasetEntry>,
}

fn is_recording_dir(dir: &Path) -> bool {
    dir.join("meta").is_file()
}

fn discover(path: &Path, depth: usize, out: &mut Vec<PathBuf>) -> Result<()> {
    if is_recording_dir(path) {
        out.push(path.to_owned());
        return Ok(());
    }
    if depth == 0 {
        return Ok(());
    }
    let mut children: Vec<PathBuf> = fs::read_dir(path)
        .map_err(|e| Error::io(path, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    children.sort();
    for child in children {
        discover(&child, depth - 1, out)?;
    }
    Ok(())
}

impl Dataset {
    pub fn new(mut entries: Vec<DatasetEntry>) -> Result<Self> {
        entries.sort_by(|a, b| (&a.participant_id, &a.day_id).cmp(&(&b.participant_id, &b.day_id)));
        for pair in entries.windows(2) {
            if pair[0].key() == pair[1].key() {
                return Err(Error::invalid(format!("duplicate recording {}", pair[0].key())));
            }
        }
        Ok(Self { entries })
    }

    pub fn from_synth(specs: Vec<SynthSpec>) -> Result<Self> {
        Self::new(
            specs
                .into_iter()
                .map(|spec| DatasetEntry {
                    participant_id: spec.participant_id.clone(),
                    day_id: spec.day_id.clone(),
                    source: Source::Synth(Box::new(spec)),
                })
                .collect(),
        )
    }

    /// Recording directories under `paths`: each path is a recording, a
    /// directory of recordings, or a directory of participant directories.
    pub fn from_paths(paths: &[PathBuf]) -> Result<Self> {
        let mut dirs = Vec::new();
        for p in paths {
            if !p.is_dir() {
                return Err(Error::MissingFile(p.clone()));
            }
            discover(p, 2, &mut dirs)?;
        }
        let entries = dirs
            .into_iter()
            .map(|dir| {
                let meta = read_meta(&dir)?;
                Ok(DatasetEntry {
                    participant_id: meta.participant_id,
                    day_id: meta.day_id,
                    source: Source::Dir(dir),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(entries)
    }

    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        let mut entries = Vec::new();
        if cfg.synth_suite {
            entries.extend(Self::from_synth(default_benchmark_suite())?.entries);
        }
        if !cfg.dataset.is_empty() {
            entries.extend(Self::from_paths(&cfg.dataset)?.entries);
        }
        if entries.is_empty() {
            return Err(Error::Config("no dataset configured".into()));
        }
        Self::new(entries)
    }

    pub fn entries(&self) -> &[DatasetEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn participants(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.entries.iter().map(|e| e.participant_id.as_str()).collect();
        set.into_iter().map(str::to_owned).collect()
    }

    /// Entries whose participant is in `ids`, in dataset order.
    pub fn select<'a>(&'a self, ids: &'a [String]) -> impl Iterator<Item = &'a DatasetEntry> + 'a {
        self.entries.iter().filter(move |e| ids.contains(&e.participant_id))
    }

    /// SHA-256 over every entry's key and content: file bytes for
    /// directories, the serialized spec for synthetic days.
    pub fn content_hash(&self) -> Result<String> {
        let mut h = Sha256::new();
        for e in &self.entries {
            h.update(e.key().as_bytes());
            h.update([0]);
            match &e.source {
                Source::Dir(dir) => {
                    for name in RECORDING_FILES {
                        let path = dir.join(name);
                        if path.is_file() {
                            h.update(name.as_bytes());
                            h.update(fs::read(&path).map_err(|err| Error::io(&path, err))?);
                        }
                    }
                }
                Source::Synth(spec) => {
                    let json = serde_json::to_vec(spec).map_err(|err| Error::invalid(err.to_string()))?;
                    h.update(&json);
                }
            }
        }
        Ok(hex::encode(h.finalize()))
    }
}
