//! `index.txt` written next to converted frames: one line per window.
//!
//! ```text
//! frame=0 t0=0 t1=50000 events=812 partial=0 source=rec.dat annotations=0,1
//! ```
//!
//! `annotations` lists positions in the accompanying `annotations.txt`, or
//! `-` when the window has none.

use std::fmt;
use std::str::FromStr;

use evkit_core::Micros;

use crate::error::CliError;

pub const INDEX_FILE: &str = "index.txt";
pub const ANNOTATIONS_FILE: &str = "annotations.txt";

pub fn frame_file_name(frame: usize) -> String {
    format!("frame_{frame:06}.evf")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexEntry {
    pub frame: usize,
    pub t0: Micros,
    pub t1: Micros,
    pub events: usize,
    pub partial: bool,
    pub source: String,
    pub annotations: Vec<usize>,
}

impl fmt::Display for IndexEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "frame={} t0={} t1={} events={} partial={} source={} annotations=",
            self.frame, self.t0, self.t1, self.events, self.partial as u8, self.source
        )?;
        if self.annotations.is_empty() {
            return f.write_str("-");
        }
        let ids: Vec<String> = self.annotations.iter().map(|i| i.to_string()).collect();
        f.write_str(&ids.join(","))
    }
}

impl FromStr for IndexEntry {
    type Err = String;

    fn from_str(line: &str) -> Result<Self, Self::Err> {
        let mut fields: [Option<&str>; 7] = [None; 7];
        const KEYS: [&str; 7] = ["frame", "t0", "t1", "events", "partial", "source", "annotations"];
        for token in line.split_whitespace() {
            let (k, v) = token
                .split_once('=')
                .ok_or_else(|| format!("expected key=value, found {token:?}"))?;
            let slot = KEYS
                .iter()
                .position(|key| *key == k)
                .ok_or_else(|| format!("unknown field {k:?}"))?;
            fields[slot] = Some(v);
        }
        let get = |i: usize| fields[i].ok_or_else(|| format!("missing field {:?}", KEYS[i]));
        fn num<T: FromStr>(k: &str, v: &str) -> Result<T, String> {
            v.parse().map_err(|_| format!("bad {k}: {v:?}"))
        }
        let annotations = match get(6)? {
            "-" => Vec::new(),
            v => v
                .split(',')
                .map(|id| num("annotation id", id))
                .collect::<Result<_, _>>()?,
        };
        Ok(IndexEntry {
            frame: num("frame", get(0)?)?,
            t0: num("t0", get(1)?)?,
            t1: num("t1", get(2)?)?,
            events: num("events", get(3)?)?,
            partial: match get(4)? {
                "0" => false,
                "1" => true,
                v => return Err(format!("bad partial flag {v:?}")),
            },
            source: get(5)?.to_string(),
            annotations,
        })
    }
}

pub fn parse_index(text: &str) -> Result<Vec<IndexEntry>, CliError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| {
            l.parse()
                .map_err(|e| CliError::new("PARSE_ERROR", format!("line {}: {e}", i + 1)))
        })
        .collect()
}

pub fn write_index(entries: &[IndexEntry]) -> String {
    entries.iter().map(|e| format!("{e}\n")).collect()
}
