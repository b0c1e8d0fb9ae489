//! Per-frame tracker output and its text format: one
//! `x,y,w,h,confidence,presence_flag` line per frame, numbers with six
//! significant digits and the flag as `0`/`1`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::sequence::fmt_sig;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRecord {
    pub bbox: BBox,
    pub confidence: f64,
    pub present: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PredictionTrace {
    pub records: Vec<TraceRecord>,
}

impl PredictionTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.records.len() * 48);
        for r in &self.records {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                fmt_sig(r.bbox.x),
                fmt_sig(r.bbox.y),
                fmt_sig(r.bbox.w),
                fmt_sig(r.bbox.h),
                fmt_sig(r.confidence),
                r.present as u8
            ));
        }
        s
    }

    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 6 {
                return Err(format!("line {}: expected 6 fields, got {}", i + 1, fields.len()));
            }
            let num = |k: usize| {
                fields[k]
                    .parse::<f64>()
                    .map_err(|_| format!("line {}: bad number {:?}", i + 1, fields[k]))
            };
            let present = match fields[5] {
                "0" => false,
                "1" => true,
                other => return Err(format!("line {}: presence flag must be 0 or 1, got {other:?}", i + 1)),
            };
            records.push(TraceRecord {
                bbox: BBox {
                    x: num(0)?,
                    y: num(1)?,
                    w: num(2)?,
                    h: num(3)?,
                },
                confidence: num(4)?,
                present,
            });
        }
        Ok(PredictionTrace { records })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        PredictionTrace::parse(&text).map_err(|d| Error::format("trace", path, d))
    }
}
