use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One sentence pair, stored as surface tokens.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParallelPair {
    pub src: Vec<String>,
    pub tgt: Vec<String>,
}

impl ParallelPair {
    pub fn new<S: AsRef<str>, T: AsRef<str>>(src: &[S], tgt: &[T]) -> Self {
        ParallelPair {
            src: src.iter().map(|t| t.as_ref().to_string()).collect(),
            tgt: tgt.iter().map(|t| t.as_ref().to_string()).collect(),
        }
    }

    /// Whitespace-tokenised convenience constructor.
    pub fn from_text(src: &str, tgt: &str) -> Self {
        ParallelPair {
            src: src.split_whitespace().map(str::to_string).collect(),
            tgt: tgt.split_whitespace().map(str::to_string).collect(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParallelCorpus {
    pub pairs: Vec<ParallelPair>,
}

impl ParallelCorpus {
    pub fn new(pairs: Vec<ParallelPair>) -> Self {
        ParallelCorpus { pairs }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, ParallelPair> {
        self.pairs.iter()
    }

    pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_jsonl_reader(BufReader::new(file))
    }

    pub fn from_jsonl_reader<R: BufRead>(reader: R) -> Result<Self> {
        let mut pairs = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io("<corpus>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let pair: ParallelPair = serde_json::from_str(&line)
                .map_err(|e| Error::invalid(format!("corpus line {}: {e}", lineno + 1)))?;
            pairs.push(pair);
        }
        Ok(ParallelCorpus { pairs })
    }

    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        self.to_jsonl_writer(&mut out)
            .and_then(|_| out.flush().map_err(|e| Error::io(path, e)))
    }

    pub fn to_jsonl_writer<W: Write>(&self, out: &mut W) -> Result<()> {
        for pair in &self.pairs {
            serde_json::to_writer(&mut *out, pair)?;
            out.write_all(b"\n").map_err(|e| Error::io("<corpus>", e))?;
        }
        Ok(())
    }
}

impl FromIterator<ParallelPair> for ParallelCorpus {
    fn from_iter<I: IntoIterator<Item = ParallelPair>>(iter: I) -> Self {
        ParallelCorpus::new(iter.into_iter().collect())
    }
}
