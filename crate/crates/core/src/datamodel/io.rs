//! Canonical on-disk layout.
//!
//! ```text
//! <participant>/<day>/
//!     meta              key=value: sample_rate_hz, participant_id, day_id
//!                       (optional: start_time_s, dominant_hand)
//!     right.csv         t,ax,ay,az,gx,gy,gz
//!     left.csv          t,ax,ay,az,gx,gy,gz
//!     annotations.csv   t_start,t_end,class,hand        (optional)
//!     episodes.csv      t_start,t_end,bite_count,speed_bpm (optional)
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use super::{
    labels_from_intervals, BiteClass, BiteHand, BiteInterval, EatingEpisode, FrameSeries, Hand, Recording,
    CHANNEL_NAMES, N_CHANNELS,
};
use crate::bites::extract_runs;
use crate::episodes::MinuteSpeedTrack;
use crate::error::{Error, Result};

const SERIES_HEADER: [&str; 7] = ["t", "ax", "ay", "az", "gx", "gy", "gz"];
const BITES_HEADER: [&str; 4] = ["t_start", "t_end", "class", "hand"];
const EPISODES_HEADER: [&str; 4] = ["t_start", "t_end", "bite_count", "speed_bpm"];
const MINUTE_HEADER: [&str; 2] = ["minute_index", "count"];

/// Parsed `meta` sidecar.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordingMeta {
    pub sample_rate_hz: f64,
    pub participant_id: String,
    pub day_id: String,
    pub start_time_s: Option<f64>,
    pub dominant_hand: Option<Hand>,
}

impl RecordingMeta {
    fn parse(path: &Path, text: &str) -> Result<Self> {
        let mut kv = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Row {
                path: path.to_owned(),
                row: i + 1,
                message: format!("expected key=value, got {line:?}"),
            })?;
            kv.insert(k.trim().to_owned(), v.trim().to_owned());
        }
        let get = |key: &str| {
            kv.get(key).cloned().ok_or_else(|| Error::Format {
                path: path.to_owned(),
                message: format!("missing key {key}"),
            })
        };
        let rate: f64 = get("sample_rate_hz")?.parse().map_err(|_| Error::Format {
            path: path.to_owned(),
            message: "sample_rate_hz is not a number".into(),
        })?;
        let start_time_s = match kv.get("start_time_s") {
            Some(v) => Some(v.parse().map_err(|_| Error::Format {
                path: path.to_owned(),
                message: "start_time_s is not a number".into(),
            })?),
            None => None,
        };
        let dominant_hand = kv.get("dominant_hand").map(|v| v.parse()).transpose()?;
        Ok(Self {
            sample_rate_hz: rate,
            participant_id: get("participant_id")?,
            day_id: get("day_id")?,
            start_time_s,
            dominant_hand,
        })
    }

    fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "sample_rate_hz={}", self.sample_rate_hz);
        let _ = writeln!(s, "participant_id={}", self.participant_id);
        let _ = writeln!(s, "day_id={}", self.day_id);
        if let Some(t) = self.start_time_s {
            let _ = writeln!(s, "start_time_s={t}");
        }
        if let Some(h) = self.dominant_hand {
            let _ = writeln!(s, "dominant_hand={h}");
        }
        s
    }
}

fn read_text(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_owned()));
    }
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Splits a CSV body into data rows after checking the header. Yields
/// `(1-based file line, fields)`.
fn csv_rows<'a>(
    path: &'a Path,
    text: &'a str,
    header: &[&str],
) -> Result<impl Iterator<Item = (usize, Vec<&'a str>)> + 'a> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, first) = lines.next().ok_or_else(|| Error::Format {
        path: path.to_owned(),
        message: "empty file".into(),
    })?;
    let got: Vec<&str> = first.split(',').map(str::trim).collect();
    if got != header {
        return Err(Error::Format {
            path: path.to_owned(),
            message: format!("expected header {}, got {}", header.join(","), first.trim()),
        });
    }
    Ok(lines.map(|(i, l)| (i + 1, l.split(',').map(str::trim).collect())))
}

fn row_err(path: &Path, row: usize, message: impl Into<String>) -> Error {
    Error::Row {
        path: path.to_owned(),
        row,
        message: message.into(),
    }
}

fn parse_f64(path: &Path, row: usize, field: &str, name: &str) -> Result<f64> {
    let v: f64 = field
        .parse()
        .map_err(|_| row_err(path, row, format!("{name}: {field:?} is not a number")))?;
    if !v.is_finite() {
        return Err(row_err(path, row, format!("{name} is not finite")));
    }
    Ok(v)
}

fn read_series(path: &Path, hand: Hand, rate: f64) -> Result<FrameSeries> {
    let text = read_text(path)?;
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (row, fields) in csv_rows(path, &text, &SERIES_HEADER)? {
        if fields.len() != SERIES_HEADER.len() {
            return Err(row_err(path, row, format!("expected 7 fields, got {}", fields.len())));
        }
        times.push(parse_f64(path, row, fields[0], "t")?);
        for (c, f) in fields[1..].iter().enumerate() {
            values.push(parse_f64(path, row, f, CHANNEL_NAMES[c])?);
        }
    }
    if times.is_empty() {
        return Err(Error::Format {
            path: path.to_owned(),
            message: "no frames".into(),
        });
    }
    let start = times[0];
    for (i, &t) in times.iter().enumerate() {
        let expected = start + i as f64 / rate;
        if (t - expected).abs() > 0.5 / rate {
            return Err(row_err(
                path,
                i + 2,
                format!("timestamp {t} deviates from uniform {rate} Hz grid (expected {expected})"),
            ));
        }
    }
    let data = Array2::from_shape_vec((times.len(), N_CHANNELS), values).expect("row-major buffer of exact size");
    FrameSeries::new(hand, rate, start, data)
}

fn write_series(path: &Path, series: &FrameSeries) -> Result<()> {
    let mut s = String::with_capacity(series.len() * 64);
    s.push_str(&SERIES_HEADER.join(","));
    s.push('\n');
    for (i, row) in series.data().outer_iter().enumerate() {
        let _ = write!(s, "{}", series.time_of(i));
        for v in row {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    write_text(path, &s)
}

/// Reads rows `t_start,t_end,class,hand`. Used for annotations and detected
/// bite sets alike.
pub fn read_bites_csv(path: &Path) -> Result<Vec<BiteInterval>> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (row, fields) in csv_rows(path, &text, &BITES_HEADER)? {
        if fields.len() != 4 {
            return Err(row_err(path, row, format!("expected 4 fields, got {}", fields.len())));
        }
        let t_l = parse_f64(path, row, fields[0], "t_start")?;
        let t_r = parse_f64(path, row, fields[1], "t_end")?;
        let klass: BiteClass = fields[2]
            .parse()
            .map_err(|e: Error| row_err(path, row, e.to_string()))?;
        let hand: BiteHand = fields[3]
            .parse()
            .map_err(|e: Error| row_err(path, row, e.to_string()))?;
        let bite = BiteInterval::new(t_l, t_r, klass, hand).map_err(|e| row_err(path, row, e.to_string()))?;
        out.push(bite);
    }
    Ok(out)
}

pub fn write_bites_csv(path: &Path, bites: &[BiteInterval]) -> Result<()> {
    let mut s = BITES_HEADER.join(",");
    s.push('\n');
    for b in bites {
        let _ = writeln!(s, "{},{},{},{}", b.t_l, b.t_r, b.klass.code(), b.hand.as_str());
    }
    write_text(path, &s)
}

/// Reads rows `t_start,t_end,bite_count,speed_bpm`; the last two may be
/// empty.
pub fn read_episodes_csv(path: &Path) -> Result<Vec<EatingEpisode>> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (row, fields) in csv_rows(path, &text, &EPISODES_HEADER)? {
        if fields.len() != 4 {
            return Err(row_err(path, row, format!("expected 4 fields, got {}", fields.len())));
        }
        let t_l = parse_f64(path, row, fields[0], "t_start")?;
        let t_r = parse_f64(path, row, fields[1], "t_end")?;
        let mut ep = EatingEpisode::new(t_l, t_r).map_err(|e| row_err(path, row, e.to_string()))?;
        if !fields[2].is_empty() {
            let n: usize = fields[2]
                .parse()
                .map_err(|_| row_err(path, row, "bite_count is not a nonnegative integer"))?;
            ep = ep.with_bite_count(n);
        }
        out.push(ep);
    }
    Ok(out)
}

pub fn write_episodes_csv(path: &Path, episodes: &[EatingEpisode]) -> Result<()> {
    let mut s = EPISODES_HEADER.join(",");
    s.push('\n');
    for e in episodes {
        let count = e.bite_count.map(|c| c.to_string()).unwrap_or_default();
        let speed = e.speed_bites_per_min.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{},{},{count},{speed}", e.t_l, e.t_r);
    }
    write_text(path, &s)
}

pub fn read_minute_csv(path: &Path) -> Result<MinuteSpeedTrack> {
    let text = read_text(path)?;
    let mut counts = Vec::new();
    for (row, fields) in csv_rows(path, &text, &MINUTE_HEADER)? {
        if fields.len() != 2 {
            return Err(row_err(path, row, "expected 2 fields"));
        }
        let idx: usize = fields[0].parse().map_err(|_| row_err(path, row, "bad minute_index"))?;
        if idx != counts.len() {
            return Err(row_err(path, row, format!("minute_index {idx} out of sequence")));
        }
        counts.push(fields[1].parse().map_err(|_| row_err(path, row, "bad count"))?);
    }
    Ok(MinuteSpeedTrack::from_counts(counts))
}

pub fn write_minute_csv(path: &Path, track: &MinuteSpeedTrack) -> Result<()> {
    let mut s = MINUTE_HEADER.join(",");
    s.push('\n');
    for (i, c) in track.counts().iter().enumerate() {
        let _ = writeln!(s, "{i},{c}");
    }
    write_text(path, &s)
}

/// Reads only the `meta` sidecar of a recording directory.
pub fn read_meta(dir: &Path) -> Result<RecordingMeta> {
    let path = dir.join("meta");
    RecordingMeta::parse(&path, &read_text(&path)?)
}

/// Loads one participant-day directory in the canonical layout.
pub fn load_recording(dir: &Path) -> Result<Recording> {
    let meta_path = dir.join("meta");
    let meta = RecordingMeta::parse(&meta_path, &read_text(&meta_path)?)?;
    let rate = meta.sample_rate_hz;
    if !(rate.is_finite() && rate > 0.0) {
        return Err(Error::Format {
            path: meta_path,
            message: format!("sample_rate_hz must be positive, got {rate}"),
        });
    }
    let right = read_series(&dir.join("right.csv"), Hand::Right, rate)?;
    let left = read_series(&dir.join("left.csv"), Hand::Left, rate)?;
    let mut rec = Recording::new(meta.participant_id.clone(), meta.day_id.clone(), right, left)?;
    if let Some(h) = meta.dominant_hand {
        rec = rec.with_dominant_hand(h);
    }

    let ann_path = dir.join("annotations.csv");
    if ann_path.exists() {
        let bites = read_bites_csv(&ann_path)?;
        let mut per_hand: [Vec<BiteInterval>; 2] = [Vec::new(), Vec::new()];
        for (i, b) in bites.iter().enumerate() {
            let slot = match b.hand {
                BiteHand::Right => 0,
                BiteHand::Left => 1,
                BiteHand::Merged => {
                    return Err(row_err(&ann_path, i + 2, "annotations must name a single hand"));
                }
            };
            per_hand[slot].push(*b);
        }
        let raster = |series: &FrameSeries, bites: &[BiteInterval]| {
            let shifted: Vec<BiteInterval> = bites
                .iter()
                .map(|b| BiteInterval {
                    t_l: b.t_l - series.start_time_s(),
                    t_r: b.t_r - series.start_time_s(),
                    ..*b
                })
                .collect();
            labels_from_intervals(&shifted, series.len(), series.sample_rate_hz()).map_err(|e| Error::Format {
                path: ann_path.clone(),
                message: e.to_string(),
            })
        };
        let lr = raster(&rec.right, &per_hand[0])?;
        let ll = raster(&rec.left, &per_hand[1])?;
        rec = rec.with_labels(lr, ll)?;
    }

    let ep_path = dir.join("episodes.csv");
    if ep_path.exists() {
        rec = rec.with_episodes(read_episodes_csv(&ep_path)?);
    }
    Ok(rec)
}

/// Writes a recording in the canonical layout. Labels, when present, are
/// stored as annotation rows.
pub fn save_recording(rec: &Recording, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let meta = RecordingMeta {
        sample_rate_hz: rec.right.sample_rate_hz(),
        participant_id: rec.participant_id.clone(),
        day_id: rec.day_id.clone(),
        start_time_s: Some(rec.right.start_time_s()),
        dominant_hand: rec.dominant_hand,
    };
    write_text(&dir.join("meta"), &meta.render())?;
    write_series(&dir.join("right.csv"), &rec.right)?;
    write_series(&dir.join("left.csv"), &rec.left)?;

    if let (Some(lr), Some(ll)) = (&rec.labels_right, &rec.labels_left) {
        let mut rows = Vec::new();
        for (labels, series) in [(lr, &rec.right), (ll, &rec.left)] {
            rows.extend(extract_runs(labels, series.hand()).into_iter().map(|b| BiteInterval {
                t_l: b.t_l + series.start_time_s(),
                t_r: b.t_r + series.start_time_s(),
                ..b
            }));
        }
        rows.sort_by(|a, b| a.t_l.total_cmp(&b.t_l).then(a.hand.cmp(&b.hand)));
        write_bites_csv(&dir.join("annotations.csv"), &rows)?;
    }
    if let Some(eps) = &rec.episodes_gt {
        write_episodes_csv(&dir.join("episodes.csv"), eps)?;
    }
    Ok(dir.to_owned())
}
