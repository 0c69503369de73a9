//! Line-oriented file formats: JSON instance lines, JSON sentence lines and
//! whitespace-separated embedding text.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use advreg_core::corpus::{EmbeddingTable, Instance, Label, Sentence, Span, Token};
use advreg_core::numcore::Matrix;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: {source}")]
    Invalid { line: usize, source: advreg_core::Error },
    #[error(transparent)]
    Core(#[from] advreg_core::Error),
}

impl FormatError {
    fn parse(line: usize, message: impl Into<String>) -> Self {
        Self::Parse { line, message: message.into() }
    }

    /// Adds the file name to a parse error.
    pub fn in_file(self, path: &Path) -> anyhow::Error {
        match self {
            e @ Self::Io { .. } => e.into(),
            e => anyhow::anyhow!("{}: {e}", path.display()),
        }
    }
}

pub type FormatResult<T> = Result<T, FormatError>;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TokenRecord {
    t: String,
    pos: String,
    dep: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceRecord {
    tokens: Vec<TokenRecord>,
    e1: [usize; 2],
    e2: [usize; 2],
    #[serde(default)]
    other: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<u8>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SentenceRecord {
    tokens: Vec<TokenRecord>,
    #[serde(default)]
    entities: Vec<[usize; 2]>,
}

fn span(pair: [usize; 2]) -> Span {
    Span::new(pair[0], pair[1])
}

fn tokens(records: Vec<TokenRecord>) -> Vec<Token> {
    records.into_iter().map(|t| Token::new(t.t, t.pos, t.dep)).collect()
}

fn token_records(tokens: &[Token]) -> Vec<TokenRecord> {
    tokens.iter().map(|t| TokenRecord { t: t.surface.clone(), pos: t.pos.clone(), dep: t.dep.clone() }).collect()
}

fn open(path: &Path) -> FormatResult<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|source| FormatError::Io { path: path.to_owned(), source })
}

fn create(path: &Path) -> FormatResult<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|source| FormatError::Io { path: path.to_owned(), source })
}

/// Non-blank lines with their 1-based line numbers.
fn numbered_lines(reader: impl BufRead) -> impl Iterator<Item = FormatResult<(usize, String)>> {
    reader.lines().enumerate().filter_map(|(i, line)| match line {
        Ok(l) if l.trim().is_empty() => None,
        Ok(l) => Some(Ok((i + 1, l))),
        Err(e) => Some(Err(FormatError::parse(i + 1, e.to_string()))),
    })
}

/// Parses one instance line.
pub fn parse_instance(line_no: usize, line: &str) -> FormatResult<Instance> {
    let rec: InstanceRecord = serde_json::from_str(line).map_err(|e| FormatError::parse(line_no, e.to_string()))?;
    let label = match rec.label {
        None => None,
        Some(v) => Some(Label::from_index(v as usize).ok_or_else(|| FormatError::parse(line_no, format!("label {v} is not 0 or 1")))?),
    };
    let other = rec.other.into_iter().map(span).collect();
    Instance::new(tokens(rec.tokens), span(rec.e1), span(rec.e2), other, label)
        .map_err(|source| FormatError::Invalid { line: line_no, source })
}

pub fn parse_instances(reader: impl BufRead) -> FormatResult<Vec<Instance>> {
    numbered_lines(reader).map(|r| r.and_then(|(n, l)| parse_instance(n, &l))).collect()
}

pub fn read_instances(path: &Path) -> FormatResult<Vec<Instance>> {
    parse_instances(open(path)?)
}

pub fn instance_line(inst: &Instance) -> String {
    let rec = InstanceRecord {
        tokens: token_records(&inst.tokens),
        e1: [inst.e1.start, inst.e1.end],
        e2: [inst.e2.start, inst.e2.end],
        other: inst.other.iter().map(|s| [s.start, s.end]).collect(),
        label: inst.label.map(|l| l.index() as u8),
    };
    serde_json::to_string(&rec).expect("instance records serialize")
}

pub fn write_instances(path: &Path, instances: &[Instance]) -> FormatResult<()> {
    let mut w = create(path)?;
    let io = |source| FormatError::Io { path: path.to_owned(), source };
    for inst in instances {
        writeln!(w, "{}", instance_line(inst)).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn parse_sentences(reader: impl BufRead) -> FormatResult<Vec<Sentence>> {
    numbered_lines(reader)
        .map(|r| {
            let (n, line) = r?;
            let rec: SentenceRecord = serde_json::from_str(&line).map_err(|e| FormatError::parse(n, e.to_string()))?;
            Sentence::new(tokens(rec.tokens), rec.entities.into_iter().map(span).collect())
                .map_err(|source| FormatError::Invalid { line: n, source })
        })
        .collect()
}

pub fn read_sentences(path: &Path) -> FormatResult<Vec<Sentence>> {
    parse_sentences(open(path)?)
}

pub fn sentence_line(s: &Sentence) -> String {
    let rec = SentenceRecord { tokens: token_records(&s.tokens), entities: s.entities.iter().map(|e| [e.start, e.end]).collect() };
    serde_json::to_string(&rec).expect("sentence records serialize")
}

pub fn write_sentences(path: &Path, sentences: &[Sentence]) -> FormatResult<()> {
    let mut w = create(path)?;
    let io = |source| FormatError::Io { path: path.to_owned(), source };
    for s in sentences {
        writeln!(w, "{}", sentence_line(s)).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Reads `word v1 v2 ...` records. A first line of exactly two integers is
/// taken as a `count dim` header.
pub fn parse_embeddings(reader: impl BufRead) -> FormatResult<EmbeddingTable> {
    let mut words = Vec::new();
    let mut values = Vec::new();
    let mut dim = None;
    let mut declared = None;
    for (idx, r) in numbered_lines(reader).enumerate() {
        let (n, line) = r?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if idx == 0 && fields.len() == 2 {
            if let (Ok(count), Ok(d)) = (fields[0].parse::<usize>(), fields[1].parse::<usize>()) {
                declared = Some(count);
                dim = Some(d);
                continue;
            }
        }
        let (word, rest) = fields.split_first().ok_or_else(|| FormatError::parse(n, "empty record"))?;
        let expected = *dim.get_or_insert(rest.len());
        if rest.len() != expected || expected == 0 {
            return Err(FormatError::parse(n, format!("expected {expected} components, found {}", rest.len())));
        }
        for f in rest {
            let v: f64 = f.parse().map_err(|_| FormatError::parse(n, format!("non-numeric component {f:?}")))?;
            values.push(v);
        }
        words.push((*word).to_owned());
    }
    if let Some(count) = declared {
        if count != words.len() {
            log::warn!("embedding header declares {count} words, found {}", words.len());
        }
    }
    let dim = dim.unwrap_or(0);
    let m = Matrix::from_vec(words.len(), dim, values)?;
    Ok(EmbeddingTable::new(words, m)?)
}

pub fn read_embeddings(path: &Path) -> FormatResult<EmbeddingTable> {
    parse_embeddings(open(path)?)
}

/// Writes the loaded vectors (not the unknown-word vector) with a header.
pub fn write_embeddings(path: &Path, table: &EmbeddingTable) -> FormatResult<()> {
    let mut w = create(path)?;
    let io = |source| FormatError::Io { path: path.to_owned(), source };
    writeln!(w, "{} {}", table.len(), table.dimension()).map_err(io)?;
    for (i, word) in table.words().iter().enumerate() {
        let v: Vec<String> = table.vectors().row(i).iter().map(|x| format!("{x:?}")).collect();
        writeln!(w, "{word} {}", v.join(" ")).map_err(io)?;
    }
    w.flush().map_err(io)
}
