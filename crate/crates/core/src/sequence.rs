//! Sequences on disk and in memory.
//!
//! A sequence directory holds `frames/%06d.pgm`, `groundtruth.txt` with one
//! `x,y,w,h` line per frame (`nan,nan,nan,nan` when the target is absent) and
//! `meta.txt` with `key=value` lines.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::media::Frame;

/// Per-frame annotation: a box, or `None` when the target is absent.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GroundTruth {
    pub boxes: Vec<Option<BBox>>,
}

impl GroundTruth {
    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    pub fn present_count(&self) -> usize {
        self.boxes.iter().filter(|b| b.is_some()).count()
    }

    pub fn absent_count(&self) -> usize {
        self.len() - self.present_count()
    }

    /// Keeps every `stride`-th frame starting at 0 and marks the rest as not
    /// annotated, mimicking sparse labeling. Returns the kept indices.
    pub fn subsample_indices(&self, stride: usize) -> Vec<usize> {
        (0..self.len()).step_by(stride.max(1)).collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for b in &self.boxes {
            match b {
                Some(b) => {
                    let _ = writeln!(s, "{},{},{},{}", fmt_sig(b.x), fmt_sig(b.y), fmt_sig(b.w), fmt_sig(b.h));
                }
                None => s.push_str("nan,nan,nan,nan\n"),
            }
        }
        s
    }

    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let mut boxes = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split(',')
                .map(|v| v.trim().parse::<f64>().map_err(|_| format!("line {}: bad number {v:?}", i + 1)))
                .collect::<std::result::Result<_, _>>()?;
            if vals.len() != 4 {
                return Err(format!("line {}: expected 4 fields, got {}", i + 1, vals.len()));
            }
            if vals.iter().all(|v| v.is_nan()) {
                boxes.push(None);
            } else {
                let b = BBox::new(vals[0], vals[1], vals[2], vals[3]).map_err(|e| format!("line {}: {e}", i + 1))?;
                boxes.push(Some(b));
            }
        }
        Ok(GroundTruth { boxes })
    }
}

/// Formats a value with six significant digits in plain decimal notation.
pub fn fmt_sig(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v.is_nan() { "nan".into() } else if v == 0.0 { "0.00000".into() } else { format!("{v}") };
    }
    // the exponent after rounding to six significant digits
    let sci = format!("{:.5e}", v);
    let exp: i32 = sci.split('e').nth(1).and_then(|e| e.parse().ok()).unwrap_or(0);
    let decimals = (5 - exp).max(0) as usize;
    format!("{:.*}", decimals, v)
}

#[derive(Clone, Debug, Default)]
pub struct Sequence {
    pub frames: Vec<Frame>,
    pub groundtruth: GroundTruth,
    pub meta: BTreeMap<String, String>,
}

impl Sequence {
    pub fn frame_path(dir: &Path, index: usize) -> PathBuf {
        dir.join("frames").join(format!("{index:06}.pgm"))
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let frames_dir = dir.join("frames");
        std::fs::create_dir_all(&frames_dir).map_err(|e| Error::io(&frames_dir, e))?;
        for (i, f) in self.frames.iter().enumerate() {
            f.write_pgm(&Sequence::frame_path(dir, i))?;
        }
        let gt = dir.join("groundtruth.txt");
        std::fs::write(&gt, self.groundtruth.to_text()).map_err(|e| Error::io(&gt, e))?;
        let meta = dir.join("meta.txt");
        let text: String = self.meta.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
        std::fs::write(&meta, text).map_err(|e| Error::io(&meta, e))
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let gt_path = dir.join("groundtruth.txt");
        let gt_text = std::fs::read_to_string(&gt_path).map_err(|e| Error::io(&gt_path, e))?;
        let groundtruth = GroundTruth::parse(&gt_text).map_err(|d| Error::format("ground truth", &gt_path, d))?;
        let meta = read_meta(&dir.join("meta.txt"))?;
        let mut frames = Vec::with_capacity(groundtruth.len());
        loop {
            let p = Sequence::frame_path(dir, frames.len());
            if !p.exists() {
                break;
            }
            frames.push(Frame::read_pgm(&p)?);
        }
        if frames.len() != groundtruth.len() {
            return Err(Error::format(
                "sequence",
                dir,
                format!("{} frames but {} ground-truth lines", frames.len(), groundtruth.len()),
            ));
        }
        Ok(Sequence {
            frames,
            groundtruth,
            meta,
        })
    }

    pub fn meta_usize(&self, key: &str) -> Option<usize> {
        self.meta.get(key).and_then(|v| v.parse().ok())
    }
}

fn read_meta(path: &Path) -> Result<BTreeMap<String, String>> {
    if !path.exists() {
        return Ok(BTreeMap::new());
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect())
}
