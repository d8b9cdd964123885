//! Line-delimited JSON dumps of per-layer score-token logits.
//!
//! The first line is a header object; every following line is one record.
//! Keys are written in sorted order and floats in their shortest
//! round-tripping decimal form, so equal data always produces equal bytes.
//!
//! ```text
//! {"format":"eagle-dump","num_layers":2,"producer":"toy","schema_version":1,"scores":[0,1],"token_ids":[0,1]}
//! {"correct":1,"id":"q0","layer_logits":[[0.5,-1.25],[0.0,2.0]]}
//! ```

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::aggregation::LayerLogits;
use crate::error::{Error, Result};
use crate::scores::CandidateScoreSet;

pub const FORMAT_TAG: &str = "eagle-dump";
pub const SCHEMA_VERSION: u32 = 1;
pub const DUMP_EXTENSION: &str = ".eagle.jsonl";

#[derive(Debug, Clone, PartialEq)]
pub struct DumpHeader {
    pub schema_version: u32,
    pub num_layers: usize,
    pub score_set: CandidateScoreSet,
    pub producer: String,
}

impl DumpHeader {
    pub fn new(num_layers: usize, score_set: CandidateScoreSet, producer: impl Into<String>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            num_layers,
            score_set,
            producer: producer.into(),
        }
    }
}

/// One self-evaluation event.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreDumpRecord {
    pub id: String,
    /// `None` for unlabeled records (answer selection without ground truth).
    pub correct: Option<bool>,
    pub layer_logits: LayerLogits,
    pub answer_group: Option<String>,
    /// Opaque provenance: model id, prompt variant, and so on.
    pub meta: BTreeMap<String, Value>,
}

impl ScoreDumpRecord {
    pub fn new(id: impl Into<String>, correct: Option<bool>, layer_logits: LayerLogits) -> Self {
        Self {
            id: id.into(),
            correct,
            layer_logits,
            answer_group: None,
            meta: BTreeMap::new(),
        }
    }

    pub fn with_group(mut self, group: impl Into<String>) -> Self {
        self.answer_group = Some(group.into());
        self
    }
}

// Field declaration order is alphabetical; serde_json emits struct fields in
// declaration order, which gives sorted keys.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderWire {
    format: String,
    num_layers: usize,
    producer: String,
    schema_version: u32,
    scores: Vec<u32>,
    token_ids: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordWire {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    answer_group: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    correct: Option<u8>,
    id: String,
    layer_logits: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    meta: BTreeMap<String, Value>,
}

fn validation(line: usize, id: &str, field: &'static str, message: impl Into<String>) -> Error {
    Error::Validation {
        line,
        id: id.to_string(),
        field,
        message: message.into(),
    }
}

/// Checks a record against the header. `line` is the 1-based file line.
pub fn validate_record(header: &DumpHeader, record: &ScoreDumpRecord, line: usize) -> Result<()> {
    let logits = &record.layer_logits;
    if logits.num_layers() != header.num_layers {
        return Err(validation(
            line,
            &record.id,
            "layer_logits",
            format!(
                "{} layers, header declares {}",
                logits.num_layers(),
                header.num_layers
            ),
        ));
    }
    if logits.width() != header.score_set.len() {
        return Err(validation(
            line,
            &record.id,
            "layer_logits",
            format!(
                "rows have {} entries, header declares {} scores",
                logits.width(),
                header.score_set.len()
            ),
        ));
    }
    Ok(())
}

fn header_line(header: &DumpHeader) -> Result<String> {
    if header.num_layers == 0 {
        return Err(Error::InvalidLogits("header declares zero layers".into()));
    }
    let wire = HeaderWire {
        format: FORMAT_TAG.to_string(),
        num_layers: header.num_layers,
        producer: header.producer.clone(),
        schema_version: header.schema_version,
        scores: header.score_set.scores().to_vec(),
        token_ids: header.score_set.token_ids().to_vec(),
    };
    Ok(serde_json::to_string(&wire).expect("header serializes"))
}

fn record_line(record: &ScoreDumpRecord) -> String {
    let wire = RecordWire {
        answer_group: record.answer_group.clone(),
        correct: record.correct.map(u8::from),
        id: record.id.clone(),
        layer_logits: record.layer_logits.to_rows(),
        meta: record.meta.clone(),
    };
    serde_json::to_string(&wire).expect("record serializes")
}

/// Incremental writer: header on construction, then one record per call.
pub struct DumpWriter<W: Write> {
    out: W,
    header: DumpHeader,
    line: usize,
}

impl<W: Write> DumpWriter<W> {
    pub fn new(mut out: W, header: DumpHeader) -> Result<Self> {
        let line = header_line(&header)?;
        out.write_all(line.as_bytes())?;
        out.write_all(b"\n")?;
        Ok(Self {
            out,
            header,
            line: 1,
        })
    }

    pub fn write_record(&mut self, record: &ScoreDumpRecord) -> Result<()> {
        validate_record(&self.header, record, self.line + 1)?;
        self.out.write_all(record_line(record).as_bytes())?;
        self.out.write_all(b"\n")?;
        self.line += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

/// Writes a complete dump.
pub fn write_dump<'r, W: Write>(
    header: &DumpHeader,
    records: impl IntoIterator<Item = &'r ScoreDumpRecord>,
    out: W,
) -> Result<W> {
    let mut writer = DumpWriter::new(out, header.clone())?;
    for r in records {
        writer.write_record(r)?;
    }
    writer.finish()
}

pub fn write_dump_path<'r>(
    header: &DumpHeader,
    records: impl IntoIterator<Item = &'r ScoreDumpRecord>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let file = File::create(path)?;
    write_dump(header, records, BufWriter::new(file))?;
    Ok(())
}

/// Streaming reader; holds one line buffer and yields validated records.
pub struct DumpReader<R: BufRead> {
    input: R,
    header: DumpHeader,
    buf: String,
    line: usize,
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn strip_newline(buf: &str) -> &str {
    buf.strip_suffix('\n')
        .map(|s| s.strip_suffix('\r').unwrap_or(s))
        .unwrap_or(buf)
}

impl<R: BufRead> DumpReader<R> {
    pub fn new(mut input: R) -> Result<Self> {
        let mut buf = String::new();
        if input.read_line(&mut buf)? == 0 {
            return Err(parse_err(1, "missing header line"));
        }
        let wire: HeaderWire =
            serde_json::from_str(strip_newline(&buf)).map_err(|e| parse_err(1, e.to_string()))?;
        if wire.format != FORMAT_TAG {
            return Err(parse_err(1, format!("unknown format tag `{}`", wire.format)));
        }
        if wire.schema_version != SCHEMA_VERSION {
            return Err(parse_err(
                1,
                format!("unsupported schema version {}", wire.schema_version),
            ));
        }
        if wire.num_layers == 0 {
            return Err(parse_err(1, "header declares zero layers"));
        }
        let score_set = CandidateScoreSet::new(wire.scores, wire.token_ids)
            .map_err(|e| parse_err(1, e.to_string()))?;
        let header = DumpHeader {
            schema_version: wire.schema_version,
            num_layers: wire.num_layers,
            score_set,
            producer: wire.producer,
        };
        buf.clear();
        Ok(Self {
            input,
            header,
            buf,
            line: 1,
        })
    }

    pub fn header(&self) -> &DumpHeader {
        &self.header
    }

    fn parse_current(&self) -> Result<ScoreDumpRecord> {
        let line = self.line;
        let text = strip_newline(&self.buf);
        if text.trim().is_empty() {
            return Err(parse_err(line, "empty line"));
        }
        let wire: RecordWire =
            serde_json::from_str(text).map_err(|e| parse_err(line, e.to_string()))?;
        let correct = match wire.correct {
            None => None,
            Some(0) => Some(false),
            Some(1) => Some(true),
            Some(v) => {
                return Err(validation(line, &wire.id, "correct", format!("expected 0 or 1, got {v}")))
            }
        };
        let layer_logits = LayerLogits::new(wire.layer_logits)
            .map_err(|e| validation(line, &wire.id, "layer_logits", e.to_string()))?;
        let record = ScoreDumpRecord {
            id: wire.id,
            correct,
            layer_logits,
            answer_group: wire.answer_group,
            meta: wire.meta,
        };
        validate_record(&self.header, &record, line)?;
        Ok(record)
    }
}

impl<R: BufRead> Iterator for DumpReader<R> {
    type Item = Result<ScoreDumpRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        self.buf.clear();
        match self.input.read_line(&mut self.buf) {
            Ok(0) => None,
            Ok(_) => {
                self.line += 1;
                Some(self.parse_current())
            }
            Err(e) => Some(Err(e.into())),
        }
    }
}

pub fn read_dump<R: BufRead>(input: R) -> Result<DumpReader<R>> {
    DumpReader::new(input)
}

pub fn open_dump(path: impl AsRef<Path>) -> Result<DumpReader<BufReader<File>>> {
    DumpReader::new(BufReader::new(File::open(path)?))
}

/// Reads the whole dump into memory, failing on the first bad record.
pub fn load_dump(path: impl AsRef<Path>) -> Result<(DumpHeader, Vec<ScoreDumpRecord>)> {
    let reader = open_dump(path)?;
    let header = reader.header().clone();
    let records = reader.collect::<Result<Vec<_>>>()?;
    Ok((header, records))
}
