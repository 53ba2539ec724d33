//! Per-run output layout.
//!
//! ```text
//! <out>/report.json, report.txt
//! <out>/fold_<k>/model.ckpt, report.json, report.txt
//! <out>/fold_<k>/<participant>_<day>/
//!     bites.csv  episodes.csv  minutes.csv
//!     bites_gt.csv  episodes_gt.csv  minutes_gt.csv     (when annotated)
//!     probs_right.csv  probs_left.csv                   (when requested)
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::analysis::{DayAnalysis, GroundTruth};
use crate::datamodel::{
    read_episodes_csv, read_minute_csv, write_bites_csv, write_episodes_csv, write_minute_csv, EatingEpisode, Hand,
};
use crate::episodes::MinuteSpeedTrack;
use crate::error::{Error, Result};
use crate::metrics::EvalReport;
use crate::model::ProbSequence;

pub fn write_probs_csv(path: &Path, probs: &ProbSequence) -> Result<()> {
    let mut s = String::with_capacity(probs.len() * 48);
    s.push_str("t,p_other,p_eating,p_drinking\n");
    for (i, row) in probs.probs().outer_iter().enumerate() {
        let t = probs.start_time_s() + i as f64 / probs.rate();
        let _ = writeln!(s, "{t},{},{},{}", row[0], row[1], row[2]);
    }
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Writes one recording's outputs and, when given, its reference values.
pub fn write_day(
    dir: &Path,
    pred: &DayAnalysis,
    gt: Option<&GroundTruth>,
    probs: Option<&[(Hand, ProbSequence)]>,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_bites_csv(&dir.join("bites.csv"), pred.bites.bites())?;
    write_episodes_csv(&dir.join("episodes.csv"), &pred.episodes)?;
    write_minute_csv(&dir.join("minutes.csv"), &pred.minutes)?;
    if let Some(gt) = gt {
        write_bites_csv(&dir.join("bites_gt.csv"), gt.bites.bites())?;
        write_episodes_csv(&dir.join("episodes_gt.csv"), &gt.episodes)?;
        write_minute_csv(&dir.join("minutes_gt.csv"), &gt.minutes)?;
    }
    for (hand, p) in probs.unwrap_or_default() {
        write_probs_csv(&dir.join(format!("probs_{hand}.csv")), p)?;
    }
    Ok(())
}

pub fn write_report(dir: &Path, report: &EvalReport) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let json = serde_json::to_string_pretty(report).map_err(|e| Error::invalid(e.to_string()))?;
    let path = dir.join("report.json");
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    let path = dir.join("report.txt");
    fs::write(&path, report.to_text()).map_err(|e| Error::io(&path, e))
}

pub fn read_report(path: &Path) -> Result<EvalReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.to_owned(),
        message: e.to_string(),
    })
}

/// Predicted and reference episodes and minute tracks read back from a
/// day directory.
#[derive(Debug, Clone, PartialEq)]
pub struct DayArtifacts {
    pub dir: PathBuf,
    pub episodes: Vec<EatingEpisode>,
    pub minutes: MinuteSpeedTrack,
    pub episodes_gt: Option<Vec<EatingEpisode>>,
    pub minutes_gt: Option<MinuteSpeedTrack>,
}

impl DayArtifacts {
    pub fn read(dir: &Path) -> Result<Self> {
        let optional = |name: &str| {
            let p = dir.join(name);
            p.is_file().then_some(p)
        };
        Ok(Self {
            dir: dir.to_owned(),
            episodes: read_episodes_csv(&dir.join("episodes.csv"))?,
            minutes: read_minute_csv(&dir.join("minutes.csv"))?,
            episodes_gt: optional("episodes_gt.csv").map(|p| read_episodes_csv(&p)).transpose()?,
            minutes_gt: optional("minutes_gt.csv").map(|p| read_minute_csv(&p)).transpose()?,
        })
    }

    /// Every day directory below `root`, sorted by path.
    pub fn collect(root: &Path) -> Result<Vec<Self>> {
        let mut dirs = Vec::new();
        find_days(root, &mut dirs)?;
        dirs.sort();
        dirs.iter().map(|d| Self::read(d)).collect()
    }
}

fn find_days(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    if dir.join("episodes.csv").is_file() && dir.join("minutes.csv").is_file() {
        out.push(dir.to_owned());
        return Ok(());
    }
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            find_days(&path, out)?;
        }
    }
    Ok(())
}
