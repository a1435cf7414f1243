//! File formats: recording CSV, gesture-event JSONL, and corpus index CSV.
//!
//! Recording CSV layout:
//!
//! ```text
//! # key=value            (optional metadata comments)
//! t_ms,s0x,s0y,s0z,s1x,s1y,s1z,s2x,s2y,s2z
//! 0,12.000,-3.120,41.007,...
//! ```
//!
//! Values are microtesla with three decimal places; writing the same
//! recording twice produces byte-identical files.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{MagsenseError, Result};
use crate::frame::{GestureEvent, Meta, Recording, SampleFrame, NOMINAL_RATE_HZ};
use crate::scalar::{real, Real};

pub const RECORDING_HEADER: &str = "t_ms,s0x,s0y,s0z,s1x,s1y,s1z,s2x,s2y,s2z";
/// Meta key that carries the sample rate through the CSV comment block.
pub const META_SAMPLE_RATE: &str = "sample_rate_hz";

/// Reads a recording CSV, populating `meta` from the `# key=value` comments.
pub fn read_recording<T: Real>(path: impl AsRef<Path>) -> Result<Recording<T>> {
    let file = fs::File::open(path.as_ref())?;
    let reader = BufReader::new(file);

    let mut meta = Meta::new();
    let mut frames = Vec::new();
    let mut saw_header = false;

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            let comment = comment.trim();
            if let Some((k, v)) = comment.split_once('=') {
                meta.insert(k.trim().to_string(), v.trim().to_string());
            }
            continue;
        }
        if !saw_header {
            if line != RECORDING_HEADER {
                return Err(MagsenseError::Parse {
                    line: line_no,
                    msg: format!("expected header `{RECORDING_HEADER}`, got `{line}`"),
                });
            }
            saw_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 10 {
            return Err(MagsenseError::Parse {
                line: line_no,
                msg: format!("expected 10 columns, got {}", fields.len()),
            });
        }
        let t: i64 = fields[0].trim().parse().map_err(|_| MagsenseError::Parse {
            line: line_no,
            msg: format!("bad timestamp `{}`", fields[0]),
        })?;
        let mut ch = [T::zero(); 9];
        for (i, f) in fields[1..].iter().enumerate() {
            let v: f64 = f.trim().parse().map_err(|_| MagsenseError::Parse {
                line: line_no,
                msg: format!("bad value `{f}` in column {}", i + 2),
            })?;
            ch[i] = real(v);
        }
        frames.push(SampleFrame::from_channels(t, ch)?);
    }
    if !saw_header {
        return Err(MagsenseError::Parse {
            line: 1,
            msg: "missing recording header".into(),
        });
    }

    let rate = match meta.get(META_SAMPLE_RATE) {
        Some(v) => v.parse::<f64>().map_err(|_| MagsenseError::Validation(format!(
            "bad {META_SAMPLE_RATE} in meta: `{v}`"
        )))?,
        None => NOMINAL_RATE_HZ,
    };
    Recording::new(frames, rate, meta)
}

/// Writes a recording CSV with deterministic formatting (3 decimal places).
pub fn write_recording<T: Real>(rec: &Recording<T>, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!(
        "# {META_SAMPLE_RATE}={}\n",
        format_rate(rec.sample_rate_hz())
    ));
    for (k, v) in &rec.meta {
        if k == META_SAMPLE_RATE {
            continue;
        }
        out.push_str(&format!("# {k}={v}\n"));
    }
    out.push_str(RECORDING_HEADER);
    out.push('\n');
    for f in rec.frames() {
        out.push_str(&f.timestamp_ms.to_string());
        for v in f.channels() {
            out.push_str(&format!(",{:.3}", v.as_f64()));
        }
        out.push('\n');
    }
    fs::write(path.as_ref(), out)?;
    Ok(())
}

fn format_rate(rate: f64) -> String {
    if rate.fract() == 0.0 {
        format!("{rate:.0}")
    } else {
        format!("{rate}")
    }
}

/// Appends nothing; writes the whole event list as JSONL, one object per line.
pub fn write_events_jsonl(events: &[GestureEvent], path: impl AsRef<Path>) -> Result<()> {
    let mut buf = String::new();
    for ev in events {
        buf.push_str(
            &serde_json::to_string(ev)
                .map_err(|e| MagsenseError::Format(format!("event serialization: {e}")))?,
        );
        buf.push('\n');
    }
    fs::write(path.as_ref(), buf)?;
    Ok(())
}

pub fn read_events_jsonl(path: impl AsRef<Path>) -> Result<Vec<GestureEvent>> {
    let text = fs::read_to_string(path.as_ref())?;
    let mut events = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        events.push(serde_json::from_str(line).map_err(|e| MagsenseError::Parse {
            line: idx + 1,
            msg: format!("bad event JSON: {e}"),
        })?);
    }
    Ok(events)
}

/// One row of a corpus index: a recording file plus its label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexEntry {
    pub path: String,
    pub label: String,
    pub task: String,
    pub seed: u64,
}

pub const INDEX_HEADER: &str = "path,label,task,seed";

pub fn write_corpus_index(entries: &[IndexEntry], path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::from(INDEX_HEADER);
    out.push('\n');
    for e in entries {
        out.push_str(&format!("{},{},{},{}\n", e.path, e.label, e.task, e.seed));
    }
    fs::write(path.as_ref(), out)?;
    Ok(())
}

pub fn read_corpus_index(path: impl AsRef<Path>) -> Result<Vec<IndexEntry>> {
    let text = fs::read_to_string(path.as_ref())?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end() == INDEX_HEADER => {}
        _ => {
            return Err(MagsenseError::Parse {
                line: 1,
                msg: format!("expected index header `{INDEX_HEADER}`"),
            })
        }
    }
    let mut entries = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(MagsenseError::Parse {
                line: idx + 1,
                msg: format!("expected 4 columns, got {}", fields.len()),
            });
        }
        entries.push(IndexEntry {
            path: fields[0].to_string(),
            label: fields[1].to_string(),
            task: fields[2].to_string(),
            seed: fields[3].parse().map_err(|_| MagsenseError::Parse {
                line: idx + 1,
                msg: format!("bad seed `{}`", fields[3]),
            })?,
        });
    }
    Ok(entries)
}

/// Writes a plain-text file atomically enough for tests: content then rename
/// is unnecessary here, a direct write suffices for single-writer dirs.
pub fn write_text(path: impl AsRef<Path>, content: &str) -> Result<()> {
    let mut f = fs::File::create(path.as_ref())?;
    f.write_all(content.as_bytes())?;
    Ok(())
}
