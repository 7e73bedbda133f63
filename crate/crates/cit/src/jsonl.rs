//! JSON-lines corpus and eval files, metadata JSON, and a cyclic file-backed
//! record source.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use cit_core::curation::Metadata;
use cit_core::data::{PairRecord, RecordSource, TextView, TrainPair};
use cit_core::eval::{EvalItem, EvalSet};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{io_err, CliError, Result};

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(io_err(path))?))
}

fn write_lines<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = create(path)?;
    for item in items {
        serde_json::to_writer(&mut w, &item).map_err(|e| CliError::Io {
            path: path.to_path_buf(),
            source: e.into(),
        })?;
        w.write_all(b"\n").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Parses every nonblank line; errors carry the 1-based line number.
fn read_lines<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let f = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_line(path, i + 1, &line)?);
    }
    Ok(out)
}

fn parse_line<T: DeserializeOwned>(path: &Path, line: usize, text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        line,
        msg: e.to_string(),
    })
}

pub fn write_corpus<'a>(
    path: &Path,
    records: impl IntoIterator<Item = &'a PairRecord>,
) -> Result<()> {
    write_lines(path, records)
}

pub fn read_corpus(path: &Path) -> Result<Vec<PairRecord>> {
    read_lines(path)
}

pub fn write_eval(path: &Path, eval: &EvalSet) -> Result<()> {
    write_lines(path, eval.items())
}

pub fn read_eval(path: &Path) -> Result<EvalSet> {
    let items: Vec<EvalItem> = read_lines(path)?;
    if items.is_empty() {
        return Err(CliError::config(format!(
            "{}: eval set is empty",
            path.display()
        )));
    }
    Ok(EvalSet::new(items)?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e.into(),
    })?;
    w.write_all(b"\n").map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        msg: e.to_string(),
    })
}

pub fn read_metadata(path: &Path) -> Result<Metadata> {
    read_json(path)
}

#[derive(Deserialize)]
struct TextLine {
    id: u64,
    txt: Vec<f64>,
}

/// A JSONL corpus read as an endless stream: each pass over the file visits
/// every record once, in an order reshuffled per `(seed, epoch)`.
///
/// Only line offsets are kept in memory; records are re-read on demand.
#[derive(Debug)]
pub struct JsonlStream {
    path: PathBuf,
    reader: BufReader<File>,
    offsets: Vec<u64>,
    line_numbers: Vec<usize>,
    by_id: HashMap<u64, usize>,
    img_dim: usize,
    txt_dim: usize,
    seed: u64,
    epoch: u64,
    order: Vec<usize>,
    pos: usize,
    exhaustions: u64,
    buf: String,
}

impl JsonlStream {
    /// Validates the whole file up front so that later reads cannot fail on
    /// malformed content.
    pub fn open(path: &Path, seed: u64) -> Result<Self> {
        let f = File::open(path).map_err(io_err(path))?;
        let mut reader = BufReader::new(f);
        let mut offsets = Vec::new();
        let mut line_numbers = Vec::new();
        let mut by_id = HashMap::new();
        let mut dims = None;
        let mut offset = 0u64;
        let mut line = String::new();
        let mut lineno = 0;
        loop {
            line.clear();
            let n = reader.read_line(&mut line).map_err(io_err(path))?;
            if n == 0 {
                break;
            }
            lineno += 1;
            if !line.trim().is_empty() {
                let rec: PairRecord = parse_line(path, lineno, &line)?;
                let d = (rec.raw_img.len(), rec.raw_txt.len());
                if *dims.get_or_insert(d) != d {
                    return Err(CliError::Parse {
                        path: path.to_path_buf(),
                        line: lineno,
                        msg: format!(
                            "record dims {d:?} differ from earlier records {:?}",
                            dims.unwrap()
                        ),
                    });
                }
                if by_id.insert(rec.id, offsets.len()).is_some() {
                    return Err(CliError::Parse {
                        path: path.to_path_buf(),
                        line: lineno,
                        msg: format!("duplicate id {}", rec.id),
                    });
                }
                offsets.push(offset);
                line_numbers.push(lineno);
            }
            offset += n as u64;
        }
        let Some((img_dim, txt_dim)) = dims else {
            return Err(cit_core::Error::EmptySource.into());
        };
        let mut s = Self {
            path: path.to_path_buf(),
            reader,
            offsets,
            line_numbers,
            by_id,
            img_dim,
            txt_dim,
            seed,
            epoch: 0,
            order: Vec::new(),
            pos: 0,
            exhaustions: 0,
            buf: String::new(),
        };
        s.shuffle();
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    /// `(raw_img_dim, raw_txt_dim)` shared by every record.
    pub fn dims(&self) -> (usize, usize) {
        (self.img_dim, self.txt_dim)
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    fn shuffle(&mut self) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.epoch);
        self.order = (0..self.offsets.len()).collect();
        self.order.shuffle(&mut rng);
        self.pos = 0;
    }

    fn next_index(&mut self) -> usize {
        if self.pos == self.order.len() {
            self.epoch += 1;
            self.exhaustions += 1;
            self.shuffle();
        }
        self.pos += 1;
        self.order[self.pos - 1]
    }

    fn read_at<T: DeserializeOwned>(&mut self, idx: usize) -> cit_core::Result<T> {
        let source =
            |e: std::io::Error| cit_core::Error::Source(format!("{}: {e}", self.path.display()));
        self.reader
            .seek(SeekFrom::Start(self.offsets[idx]))
            .map_err(source)?;
        self.buf.clear();
        self.reader.read_line(&mut self.buf).map_err(source)?;
        serde_json::from_str(&self.buf).map_err(|e| {
            cit_core::Error::Source(format!(
                "{}:{}: {e} (file changed while open?)",
                self.path.display(),
                self.line_numbers[idx]
            ))
        })
    }
}

impl RecordSource for JsonlStream {
    fn next_text_batch(&mut self, n: usize) -> cit_core::Result<Vec<TextView>> {
        (0..n)
            .map(|_| {
                let idx = self.next_index();
                let t: TextLine = self.read_at(idx)?;
                Ok(TextView {
                    id: t.id,
                    raw_txt: t.txt,
                })
            })
            .collect()
    }

    fn fetch(&mut self, ids: &[u64]) -> cit_core::Result<Vec<TrainPair>> {
        ids.iter()
            .map(|id| {
                let idx = *self
                    .by_id
                    .get(id)
                    .ok_or_else(|| cit_core::Error::Source(format!("unknown record id {id}")))?;
                Ok(self.read_at::<PairRecord>(idx)?.strip())
            })
            .collect()
    }

    fn next_pair_batch(&mut self, n: usize) -> cit_core::Result<Vec<TrainPair>> {
        (0..n)
            .map(|_| {
                let idx = self.next_index();
                Ok(self.read_at::<PairRecord>(idx)?.strip())
            })
            .collect()
    }

    fn exhaustion_count(&self) -> u64 {
        self.exhaustions
    }
}
