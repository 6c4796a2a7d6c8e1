//! On-disk tag-stream format.
//!
//! A stream file is UTF-8 text. Line 1 is the magic `heraldsim-tags v1`,
//! followed by four `key value` header lines (`channel_id`, `trial_period_s`,
//! `storage_delay_s`, `total_trials`), a `tags <count>` line, and then
//! exactly `<count>` lines holding one timestamp each. Floats are written in
//! Rust's shortest round-trip decimal form, so write -> read -> write is
//! byte-identical.

use crate::error::{Error, Result};
use crate::sim::TagStream;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

const MAGIC: &str = "heraldsim-tags v1";

/// Serialize a stream to its text form.
pub fn tagstream_to_string(stream: &TagStream) -> String {
    let mut out = String::with_capacity(24 * stream.tags.len() + 128);
    out.push_str(MAGIC);
    out.push('\n');
    let _ = writeln!(out, "channel_id {}", stream.channel_id);
    let _ = writeln!(out, "trial_period_s {}", stream.trial_period_s);
    let _ = writeln!(out, "storage_delay_s {}", stream.storage_delay_s);
    let _ = writeln!(out, "total_trials {}", stream.total_trials);
    let _ = writeln!(out, "tags {}", stream.tags.len());
    for t in &stream.tags {
        let _ = writeln!(out, "{t}");
    }
    out
}

pub fn write_tagstream(path: &Path, stream: &TagStream) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(tagstream_to_string(stream).as_bytes())?;
    Ok(())
}

pub fn read_tagstream(path: &Path) -> Result<TagStream> {
    let display = path.display().to_string();
    let f = BufReader::new(std::fs::File::open(path)?);
    parse_tagstream(f, &display)
}

fn parse_tagstream<R: BufRead>(reader: R, path: &str) -> Result<TagStream> {
    let err = |line: usize, msg: &str| Error::Parse {
        path: path.to_string(),
        line,
        msg: msg.to_string(),
    };
    let mut lines = reader.lines().enumerate();
    let mut next_line = |expect: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((i, Ok(l))) => Ok((i + 1, l)),
            Some((i, Err(e))) => Err(err(i + 1, &e.to_string())),
            None => Err(err(0, &format!("unexpected end of file, expected {expect}"))),
        }
    };

    let (n, magic) = next_line("magic")?;
    if magic != MAGIC {
        return Err(err(n, &format!("bad magic {magic:?}, expected {MAGIC:?}")));
    }

    let mut header = |key: &str| -> Result<(usize, String)> {
        let (n, line) = next_line(key)?;
        match line.split_once(' ') {
            Some((k, v)) if k == key => Ok((n, v.to_string())),
            _ => Err(err(n, &format!("expected `{key} <value>`"))),
        }
    };

    let (_, channel_id) = header("channel_id")?;
    let (n, v) = header("trial_period_s")?;
    let trial_period_s: f64 = v.parse().map_err(|_| err(n, "bad float"))?;
    let (n, v) = header("storage_delay_s")?;
    let storage_delay_s: f64 = v.parse().map_err(|_| err(n, "bad float"))?;
    let (n, v) = header("total_trials")?;
    let total_trials: u64 = v.parse().map_err(|_| err(n, "bad integer"))?;
    let (n, v) = header("tags")?;
    let count: usize = v.parse().map_err(|_| err(n, "bad tag count"))?;

    let mut tags = Vec::with_capacity(count);
    let mut last = f64::NEG_INFINITY;
    for _ in 0..count {
        let (n, line) = next_line("timestamp")?;
        let t: f64 = line.trim().parse().map_err(|_| err(n, "bad timestamp"))?;
        if t <= last {
            return Err(err(n, "timestamps must be strictly increasing"));
        }
        last = t;
        tags.push(t);
    }
    if total_trials == 0 {
        return Err(err(5, "total_trials must be > 0"));
    }
    Ok(TagStream {
        channel_id,
        tags,
        total_trials,
        trial_period_s,
        storage_delay_s,
    })
}
