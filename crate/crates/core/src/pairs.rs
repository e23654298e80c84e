//! Relatedness lists: tab-separated sentence-id pairs.
//!
//! Rank mode lines are `id_a<TAB>id_b` (an implicit positive pair, e.g. a
//! translation). Classify mode lines are `id_a<TAB>id_b<TAB>label`. Gold
//! alignments use the rank-mode layout.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::CorpusIndex;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairMode {
    Classify,
    Rank,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairEntry {
    pub a: u64,
    pub b: u64,
    pub label: Option<usize>,
    /// 1-based source line, 0 for pairs built in memory.
    pub line: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelatednessList {
    pub mode: PairMode,
    pub entries: Vec<PairEntry>,
}

impl RelatednessList {
    pub fn rank(pairs: impl IntoIterator<Item = (u64, u64)>) -> Self {
        Self {
            mode: PairMode::Rank,
            entries: pairs
                .into_iter()
                .map(|(a, b)| PairEntry {
                    a,
                    b,
                    label: None,
                    line: 0,
                })
                .collect(),
        }
    }

    pub fn classify(pairs: impl IntoIterator<Item = (u64, u64, usize)>) -> Self {
        Self {
            mode: PairMode::Classify,
            entries: pairs
                .into_iter()
                .map(|(a, b, label)| PairEntry {
                    a,
                    b,
                    label: Some(label),
                    line: 0,
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.entries.iter().map(|e| (e.a, e.b))
    }

    /// Number of classes (`max label + 1`); 0 in rank mode.
    pub fn class_count(&self) -> usize {
        self.entries.iter().filter_map(|e| e.label).max().map_or(0, |m| m + 1)
    }

    pub fn class_histogram(&self) -> Vec<usize> {
        let mut hist = vec![0; self.class_count()];
        for label in self.entries.iter().filter_map(|e| e.label) {
            hist[label] += 1;
        }
        hist
    }

    pub fn parse(text: &str, mode: PairMode, origin: &Path) -> Result<Self> {
        let columns = match mode {
            PairMode::Rank => 2,
            PairMode::Classify => 3,
        };
        let format_err = |line: usize, detail: String| Error::Format {
            path: origin.to_path_buf(),
            line,
            detail,
        };
        let mut entries = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let raw = raw.strip_suffix('\r').unwrap_or(raw);
            if raw.is_empty() {
                continue;
            }
            let fields: Vec<&str> = raw.split('\t').collect();
            if fields.len() != columns {
                return Err(format_err(
                    line,
                    format!("expected {columns} tab-separated columns, found {}", fields.len()),
                ));
            }
            let id = |s: &str| {
                s.parse::<u64>()
                    .map_err(|_| format_err(line, format!("invalid id {s:?}")))
            };
            let a = id(fields[0])?;
            let b = id(fields[1])?;
            let label = match mode {
                PairMode::Rank => None,
                PairMode::Classify => Some(
                    fields[2]
                        .parse::<usize>()
                        .map_err(|_| format_err(line, format!("non-integer label {:?}", fields[2])))?,
                ),
            };
            entries.push(PairEntry { a, b, label, line });
        }
        let list = Self { mode, entries };
        if mode == PairMode::Classify && !list.is_empty() && list.class_count() < 2 {
            return Err(format_err(0, "classify mode needs at least 2 classes".into()));
        }
        Ok(list)
    }

    pub fn read(path: impl AsRef<Path>, mode: PairMode) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::parse(&text, mode, path)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            match e.label {
                Some(label) => writeln!(out, "{}\t{}\t{}", e.a, e.b, label),
                None => writeln!(out, "{}\t{}", e.a, e.b),
            }
            .expect("writing to a String cannot fail");
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_tsv()).map_err(|e| Error::io(path.display().to_string(), e))
    }

    /// Checks every referenced id exists in `index`.
    pub fn bind(&self, index: &CorpusIndex<'_>) -> Result<()> {
        for e in &self.entries {
            for id in [e.a, e.b] {
                if index.get(id).is_none() {
                    return Err(Error::UnknownId { id, line: e.line });
                }
            }
        }
        Ok(())
    }
}

/// Reads a gold alignment file (`src_id<TAB>tgt_id`).
pub fn read_gold(path: impl AsRef<Path>) -> Result<Vec<(u64, u64)>> {
    Ok(RelatednessList::read(path, PairMode::Rank)?.pairs().collect())
}

pub fn write_gold(path: impl AsRef<Path>, pairs: &[(u64, u64)]) -> Result<()> {
    RelatednessList::rank(pairs.iter().copied()).write(path)
}

#[cfg(test)]
pub(crate) fn mem_origin() -> std::path::PathBuf {
    std::path::PathBuf::from("<memory>")
}
