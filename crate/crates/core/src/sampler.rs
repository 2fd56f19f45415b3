//! Batch schedules for recurrent training.
//!
//! Every batch mixes `n_random` random clips, which always reset the
//! recurrent memory, with `n_sequential` stream slots. Each slot walks
//! consecutive clips of one sequence at a time, pulling the next sequence
//! from a shared shuffled queue, and resets memory only when it starts a new
//! sequence. The epoch ends once every slot has run dry; a slot that runs dry
//! early emits idle entries so the batch shape stays fixed.
//!
//! Without sequential slots an epoch holds as many random batches as it
//! takes to draw the dataset's total frame count.
//!
//! Clips that would run past the end of a sequence are kept and right-padded:
//! `valid_len` counts the real frames and the remaining `len - valid_len`
//! frames are padding.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SamplerError {
    #[error("dataset has no sequences")]
    EmptyDataset,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

impl SamplerError {
    pub fn code(&self) -> &'static str {
        match self {
            SamplerError::EmptyDataset => "EMPTY_DATASET",
            SamplerError::InvalidArgument(_) => "INVALID_ARGUMENT",
            SamplerError::Parse { .. } => "PARSE_ERROR",
        }
    }
}

/// One recording's frame count and which frames carry labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceIndex {
    pub id: String,
    pub frame_count: usize,
    pub labeled: Vec<bool>,
}

impl SequenceIndex {
    pub fn new(id: impl Into<String>, frame_count: usize) -> Self {
        Self {
            id: id.into(),
            frame_count,
            labeled: vec![true; frame_count],
        }
    }

    pub fn validate(&self) -> Result<(), SamplerError> {
        if self.frame_count == 0 {
            return Err(SamplerError::InvalidArgument(format!(
                "sequence {:?} has no frames",
                self.id
            )));
        }
        if self.labeled.len() != self.frame_count {
            return Err(SamplerError::InvalidArgument(format!(
                "sequence {:?}: {} label flags for {} frames",
                self.id,
                self.labeled.len(),
                self.frame_count
            )));
        }
        if self.id.is_empty() || self.id.contains(char::is_whitespace) || self.id == "-" {
            return Err(SamplerError::InvalidArgument(format!(
                "sequence id {:?} must be a non-empty token",
                self.id
            )));
        }
        Ok(())
    }
}

/// Parses `seq=<id> frames=<n> [labels=<0/1 string>]` lines.
pub fn parse_sequence_index(text: &str) -> Result<Vec<SequenceIndex>, SamplerError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |reason: String| SamplerError::Parse { line: i + 1, reason };
        let (mut id, mut frames, mut labels) = (None, None, None);
        for token in line.split_whitespace() {
            match token.split_once('=') {
                Some(("seq", v)) => id = Some(v.to_string()),
                Some(("frames", v)) => {
                    frames = Some(v.parse::<usize>().map_err(|_| err(format!("bad frames {v:?}")))?)
                }
                Some(("labels", v)) => {
                    let flags = v
                        .chars()
                        .map(|c| match c {
                            '0' => Ok(false),
                            '1' => Ok(true),
                            _ => Err(err(format!("bad label flag {c:?}"))),
                        })
                        .collect::<Result<Vec<_>, _>>()?;
                    labels = Some(flags);
                }
                _ => return Err(err(format!("unexpected token {token:?}"))),
            }
        }
        let id = id.ok_or_else(|| err("missing seq".into()))?;
        let frame_count = frames.ok_or_else(|| err("missing frames".into()))?;
        let seq = SequenceIndex {
            labeled: labels.unwrap_or_else(|| vec![true; frame_count]),
            id,
            frame_count,
        };
        seq.validate().map_err(|e| err(e.to_string()))?;
        out.push(seq);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EntryKind {
    Random,
    Sequential,
    /// A sequential slot whose cursor is exhausted; carries no frames.
    Idle,
}

impl EntryKind {
    fn as_str(&self) -> &'static str {
        match self {
            EntryKind::Random => "random",
            EntryKind::Sequential => "sequential",
            EntryKind::Idle => "idle",
        }
    }
}

/// One clip of a batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClipEntry {
    pub kind: EntryKind,
    /// Position of the sequence in the planned index; `None` for idle entries.
    pub sequence: Option<usize>,
    pub start: usize,
    pub len: usize,
    /// Real frames in the clip; the rest is padding.
    pub valid_len: usize,
    pub reset_memory: bool,
    /// Position within the batch; stable across batches for sequential slots.
    pub slot: usize,
}

impl ClipEntry {
    pub fn is_padded(&self) -> bool {
        self.valid_len < self.len
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Batch {
    pub entries: Vec<ClipEntry>,
}

#[derive(Debug, Clone, Copy)]
struct Cursor {
    sequence: usize,
    next: usize,
}

/// Plans one epoch. Sequential slots occupy batch positions
/// `n_random..n_random + n_sequential`.
pub fn plan_epoch(
    indices: &[SequenceIndex],
    clip_len: usize,
    n_random: usize,
    n_sequential: usize,
    rng: &mut impl Rng,
) -> Result<Vec<Batch>, SamplerError> {
    if indices.is_empty() {
        return Err(SamplerError::EmptyDataset);
    }
    if clip_len == 0 {
        return Err(SamplerError::InvalidArgument("clip length must be >= 1".into()));
    }
    if n_random + n_sequential == 0 {
        return Err(SamplerError::InvalidArgument("batch must hold at least one clip".into()));
    }
    for s in indices {
        s.validate()?;
    }

    let mut queue: Vec<usize> = (0..indices.len()).collect();
    queue.shuffle(rng);
    // Pop from the back; reverse so the shuffled order is consumed front to back.
    queue.reverse();

    let random_only_batches = (n_sequential == 0).then(|| {
        let total: usize = indices.iter().map(|s| s.frame_count).sum();
        total.div_ceil(n_random * clip_len)
    });
    let mut cursors: Vec<Option<Cursor>> = vec![None; n_sequential];
    let mut batches = Vec::new();
    loop {
        // Refill exhausted slots before deciding whether the epoch is over.
        for cursor in cursors.iter_mut() {
            let exhausted = match cursor {
                Some(c) => c.next >= indices[c.sequence].frame_count,
                None => true,
            };
            if exhausted {
                *cursor = queue.pop().map(|sequence| Cursor { sequence, next: 0 });
            }
        }
        let done = match random_only_batches {
            Some(n) => batches.len() >= n,
            None => cursors.iter().all(Option::is_none),
        };
        if done {
            break;
        }

        let mut batch = Batch {
            entries: Vec::with_capacity(n_random + n_sequential),
        };
        for slot in 0..n_random {
            let sequence = rng.gen_range(0..indices.len());
            let count = indices[sequence].frame_count;
            let start = if count >= clip_len {
                rng.gen_range(0..=count - clip_len)
            } else {
                0
            };
            batch.entries.push(ClipEntry {
                kind: EntryKind::Random,
                sequence: Some(sequence),
                start,
                len: clip_len,
                valid_len: clip_len.min(count - start),
                reset_memory: true,
                slot,
            });
        }
        for (k, cursor) in cursors.iter_mut().enumerate() {
            let slot = n_random + k;
            match cursor {
                Some(c) => {
                    let count = indices[c.sequence].frame_count;
                    batch.entries.push(ClipEntry {
                        kind: EntryKind::Sequential,
                        sequence: Some(c.sequence),
                        start: c.next,
                        len: clip_len,
                        valid_len: clip_len.min(count - c.next),
                        reset_memory: c.next == 0,
                        slot,
                    });
                    c.next += clip_len;
                }
                None => batch.entries.push(ClipEntry {
                    kind: EntryKind::Idle,
                    sequence: None,
                    start: 0,
                    len: clip_len,
                    valid_len: 0,
                    reset_memory: true,
                    slot,
                }),
            }
        }
        batches.push(batch);
    }
    Ok(batches)
}

/// Serialized plan line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanRecord {
    pub batch: usize,
    pub kind: EntryKind,
    pub sequence_id: Option<String>,
    pub start: usize,
    pub len: usize,
    pub valid_len: usize,
    pub reset_memory: bool,
    pub slot: usize,
}

impl fmt::Display for PlanRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "batch={} slot={} kind={} seq={} start={} len={} valid={} reset={}",
            self.batch,
            self.slot,
            self.kind.as_str(),
            self.sequence_id.as_deref().unwrap_or("-"),
            self.start,
            self.len,
            self.valid_len,
            self.reset_memory as u8
        )
    }
}

impl FromStr for PlanRecord {
    type Err = String;

    fn from_str(line: &str) -> Result<Self, Self::Err> {
        let mut fields: [Option<&str>; 8] = [None; 8];
        const KEYS: [&str; 8] = ["batch", "slot", "kind", "seq", "start", "len", "valid", "reset"];
        for token in line.split_whitespace() {
            let (k, v) = token
                .split_once('=')
                .ok_or_else(|| format!("expected key=value, found {token:?}"))?;
            let i = KEYS
                .iter()
                .position(|key| *key == k)
                .ok_or_else(|| format!("unknown field {k:?}"))?;
            fields[i] = Some(v);
        }
        let get = |i: usize| fields[i].ok_or_else(|| format!("missing field {:?}", KEYS[i]));
        let num = |i: usize| -> Result<usize, String> {
            let v = get(i)?;
            v.parse().map_err(|_| format!("bad {}: {v:?}", KEYS[i]))
        };
        Ok(PlanRecord {
            batch: num(0)?,
            slot: num(1)?,
            kind: match get(2)? {
                "random" => EntryKind::Random,
                "sequential" => EntryKind::Sequential,
                "idle" => EntryKind::Idle,
                other => return Err(format!("bad kind {other:?}")),
            },
            sequence_id: match get(3)? {
                "-" => None,
                id => Some(id.to_string()),
            },
            start: num(4)?,
            len: num(5)?,
            valid_len: num(6)?,
            reset_memory: match get(7)? {
                "0" => false,
                "1" => true,
                other => return Err(format!("bad reset {other:?}")),
            },
        })
    }
}

/// Flattens batches into plan records, naming sequences by id.
pub fn plan_records(batches: &[Batch], indices: &[SequenceIndex]) -> Vec<PlanRecord> {
    batches
        .iter()
        .enumerate()
        .flat_map(|(b, batch)| {
            batch.entries.iter().map(move |e| PlanRecord {
                batch: b,
                kind: e.kind,
                sequence_id: e.sequence.map(|s| indices[s].id.clone()),
                start: e.start,
                len: e.len,
                valid_len: e.valid_len,
                reset_memory: e.reset_memory,
                slot: e.slot,
            })
        })
        .collect()
}

pub fn write_plan(batches: &[Batch], indices: &[SequenceIndex]) -> String {
    let mut out = String::new();
    for r in plan_records(batches, indices) {
        out.push_str(&r.to_string());
        out.push('\n');
    }
    out
}

pub fn parse_plan(text: &str) -> Result<Vec<PlanRecord>, SamplerError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| {
            l.parse()
                .map_err(|reason| SamplerError::Parse { line: i + 1, reason })
        })
        .collect()
}
