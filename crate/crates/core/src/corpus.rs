//! Shared data model and on-disk formats.
//!
//! Raw issues travel as line-delimited JSON objects:
//!
//! ```text
//! {"id": 7, "title": "Crash on start", "body": "...", "labels": "bug,duplicate", "state": "closed"}
//! ```
//!
//! Labeled issues (output of `prepare`) use the same shape with an extra
//! `"class"` key holding `0` (not-question) or `1` (question).
//!
//! Embedding vectors are stored as CSV with header `id,label,v0,...,v{dim-1}`,
//! LF line endings and `.` as decimal separator. Components are written with the
//! shortest representation that round-trips an `f32`, which never needs more than
//! nine significant digits.

use std::borrow::Borrow;
use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Binary target class. `NotQuestion` is index 0 everywhere: vectors, confusion
/// matrix rows/columns and every tie-break.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum ClassLabel {
    NotQuestion = 0,
    Question = 1,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 2] = [ClassLabel::NotQuestion, ClassLabel::Question];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            0 => Some(ClassLabel::NotQuestion),
            1 => Some(ClassLabel::Question),
            _ => None,
        }
    }

    /// Short name used in reports (`NQ` / `Q`).
    pub fn short(self) -> &'static str {
        match self {
            ClassLabel::NotQuestion => "NQ",
            ClassLabel::Question => "Q",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ClassLabel::NotQuestion => "not_question",
            ClassLabel::Question => "question",
        }
    }
}

impl From<ClassLabel> for u8 {
    fn from(c: ClassLabel) -> u8 {
        c as u8
    }
}

impl TryFrom<u8> for ClassLabel {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        ClassLabel::from_index(v as usize).ok_or_else(|| format!("class label {v} outside {{0,1}}"))
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IssueState {
    Open,
    Closed,
}

/// One tracker issue as exported.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawIssue {
    pub id: u64,
    pub title: String,
    pub body: String,
    /// Lowercased, trimmed, never empty strings.
    pub labels: Vec<String>,
    pub state: IssueState,
}

/// An issue that survived corpus selection, with its assigned class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledIssue {
    pub issue: RawIssue,
    pub class: ClassLabel,
}

/// Split a comma-separated label string, normalising each label.
///
/// Empty segments are dropped, so `""` yields an empty list.
pub fn split_labels(s: &str) -> Vec<String> {
    s.split(',')
        .map(|l| l.trim().to_lowercase())
        .filter(|l| !l.is_empty())
        .collect()
}

pub fn join_labels(labels: &[String]) -> String {
    labels.join(",")
}

#[derive(Deserialize)]
struct IssueLine {
    id: u64,
    #[serde(default)]
    title: Option<String>,
    #[serde(default)]
    body: Option<String>,
    #[serde(default)]
    labels: Option<String>,
    state: IssueState,
    #[serde(default)]
    class: Option<ClassLabel>,
}

#[derive(Serialize)]
struct IssueLineRef<'a> {
    id: u64,
    title: &'a str,
    body: &'a str,
    labels: String,
    state: IssueState,
    #[serde(skip_serializing_if = "Option::is_none")]
    class: Option<ClassLabel>,
}

/// Streaming reader over a raw-issue (or labeled-issue) line file.
///
/// Holds one record at a time plus the set of ids seen so far, which is needed
/// to report duplicates.
pub struct IssueReader<R> {
    input: R,
    buf: String,
    line_no: usize,
    offset: u64,
    seen: HashMap<u64, usize>,
    remaining: Option<usize>,
    missing_fields: usize,
    require_class: bool,
}

impl<R: BufRead> IssueReader<R> {
    pub fn new(input: R, max_records: Option<usize>) -> Self {
        IssueReader {
            input,
            buf: String::new(),
            line_no: 0,
            offset: 0,
            seen: HashMap::new(),
            remaining: max_records,
            missing_fields: 0,
            require_class: false,
        }
    }

    /// Number of title/body fields that were absent or null and read as empty.
    pub fn missing_fields(&self) -> usize {
        self.missing_fields
    }

    fn next_line(&mut self) -> Result<Option<(IssueLine, usize)>> {
        loop {
            self.buf.clear();
            let start = self.offset;
            let n = self
                .input
                .read_line(&mut self.buf)
                .map_err(|e| Error::Malformed {
                    line: self.line_no + 1,
                    offset: start,
                    message: e.to_string(),
                })?;
            if n == 0 {
                return Ok(None);
            }
            self.line_no += 1;
            self.offset += n as u64;
            let line = self.buf.trim_end_matches(['\n', '\r']);
            if line.trim().is_empty() {
                continue;
            }
            let parsed: IssueLine = serde_json::from_str(line).map_err(|e| Error::Malformed {
                line: self.line_no,
                offset: start + e.column().saturating_sub(1) as u64,
                message: e.to_string(),
            })?;
            if let Some(&first) = self.seen.get(&parsed.id) {
                return Err(Error::DuplicateId {
                    id: parsed.id,
                    first_line: first,
                    second_line: self.line_no,
                });
            }
            self.seen.insert(parsed.id, self.line_no);
            if self.require_class && parsed.class.is_none() {
                return Err(Error::Malformed {
                    line: self.line_no,
                    offset: start,
                    message: "missing \"class\" field".into(),
                });
            }
            return Ok(Some((parsed, self.line_no)));
        }
    }

    fn next_issue(&mut self) -> Option<Result<(RawIssue, Option<ClassLabel>)>> {
        if self.remaining == Some(0) {
            return None;
        }
        match self.next_line() {
            Ok(None) => None,
            Err(e) => {
                self.remaining = Some(0);
                Some(Err(e))
            }
            Ok(Some((line, _))) => {
                if let Some(r) = self.remaining.as_mut() {
                    *r -= 1;
                }
                self.missing_fields += line.title.is_none() as usize + line.body.is_none() as usize;
                let issue = RawIssue {
                    id: line.id,
                    title: line.title.unwrap_or_default(),
                    body: line.body.unwrap_or_default(),
                    labels: line.labels.as_deref().map(split_labels).unwrap_or_default(),
                    state: line.state,
                };
                Some(Ok((issue, line.class)))
            }
        }
    }
}

impl<R: BufRead> Iterator for IssueReader<R> {
    type Item = Result<RawIssue>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_issue().map(|r| r.map(|(issue, _)| issue))
    }
}

/// Iterator adaptor yielding [`LabeledIssue`]s; every line must carry `class`.
pub struct LabeledReader<R>(IssueReader<R>);

impl<R: BufRead> Iterator for LabeledReader<R> {
    type Item = Result<LabeledIssue>;

    fn next(&mut self) -> Option<Self::Item> {
        self.0.next_issue().map(|r| {
            r.map(|(issue, class)| LabeledIssue {
                issue,
                class: class.expect("class presence checked by reader"),
            })
        })
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

pub(crate) fn create_file(path: &Path) -> Result<BufWriter<File>> {
    create(path)
}

pub(crate) fn open_file(path: &Path) -> Result<BufReader<File>> {
    open(path)
}

/// Stream raw issues from `path` in file order.
pub fn read_raw_issues(path: &Path, max_records: Option<usize>) -> Result<IssueReader<BufReader<File>>> {
    Ok(IssueReader::new(open(path)?, max_records))
}

pub fn read_labeled_issues(path: &Path) -> Result<LabeledReader<BufReader<File>>> {
    let mut reader = IssueReader::new(open(path)?, None);
    reader.require_class = true;
    Ok(LabeledReader(reader))
}

fn write_issue_line<W: Write>(out: &mut W, issue: &RawIssue, class: Option<ClassLabel>) -> std::io::Result<()> {
    let line = IssueLineRef {
        id: issue.id,
        title: &issue.title,
        body: &issue.body,
        labels: join_labels(&issue.labels),
        state: issue.state,
        class,
    };
    serde_json::to_writer(&mut *out, &line)?;
    out.write_all(b"\n")
}

pub fn write_raw_issues<I>(issues: I, path: &Path) -> Result<usize>
where
    I: IntoIterator,
    I::Item: Borrow<RawIssue>,
{
    let mut out = create(path)?;
    let mut n = 0;
    for issue in issues {
        write_issue_line(&mut out, issue.borrow(), None).map_err(|e| Error::io(path, e))?;
        n += 1;
    }
    out.flush().map_err(|e| Error::io(path, e))?;
    Ok(n)
}

pub fn write_labeled_issues<I>(issues: I, path: &Path) -> Result<usize>
where
    I: IntoIterator,
    I::Item: Borrow<LabeledIssue>,
{
    let mut out = create(path)?;
    let mut n = 0;
    for l in issues {
        let l = l.borrow();
        write_issue_line(&mut out, &l.issue, Some(l.class)).map_err(|e| Error::io(path, e))?;
        n += 1;
    }
    out.flush().map_err(|e| Error::io(path, e))?;
    Ok(n)
}

/// Noise-stripped text of one issue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleanedDoc {
    pub id: u64,
    pub text: String,
    /// Removal count per noise family. Families with no removals are omitted.
    pub removal_stats: crate::clean::RemovalStats,
    pub token_count: usize,
}

/// One document's feature vector with its class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddedRecord {
    pub id: u64,
    pub class: ClassLabel,
    pub vector: Vec<f32>,
}

impl EmbeddedRecord {
    pub fn new(id: u64, class: ClassLabel, vector: Vec<f32>) -> Self {
        EmbeddedRecord { id, class, vector }
    }
}

pub(crate) fn fmt_f32(x: f32) -> String {
    // Debug prints the shortest string that parses back to the same f32.
    format!("{x:?}")
}

/// Write records as vector CSV to any writer.
pub fn write_vectors_to<'a, W: Write>(
    records: impl IntoIterator<Item = &'a EmbeddedRecord>,
    mut out: W,
    dim: usize,
) -> Result<usize> {
    if dim == 0 {
        return Err(Error::invalid("vector dimension must be positive"));
    }
    let io = |e| Error::io("<vectors>", e);
    let mut header = String::from("id,label");
    for i in 0..dim {
        header.push_str(&format!(",v{i}"));
    }
    header.push('\n');
    out.write_all(header.as_bytes()).map_err(io)?;
    let mut n = 0;
    let mut line = String::new();
    for r in records {
        if r.vector.len() != dim {
            return Err(Error::Dimension {
                id: r.id,
                expected: dim,
                found: r.vector.len(),
            });
        }
        line.clear();
        line.push_str(&r.id.to_string());
        line.push(',');
        line.push_str(if r.class == ClassLabel::Question { "1" } else { "0" });
        for &v in &r.vector {
            if !v.is_finite() {
                return Err(Error::data(format!("record {}: non-finite vector component", r.id)));
            }
            line.push(',');
            line.push_str(&fmt_f32(v));
        }
        line.push('\n');
        out.write_all(line.as_bytes()).map_err(io)?;
        n += 1;
    }
    out.flush().map_err(io)?;
    Ok(n)
}

/// Write records to a vector CSV file at `path`. Returns the number of rows written.
pub fn write_vectors<'a>(
    records: impl IntoIterator<Item = &'a EmbeddedRecord>,
    path: &Path,
    dim: usize,
) -> Result<usize> {
    let out = create(path)?;
    write_vectors_to(records, out, dim).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        e => e,
    })
}

/// Streaming reader over a vector CSV file.
pub struct VectorReader<R> {
    input: R,
    dim: usize,
    line_no: usize,
    buf: String,
    done: bool,
}

impl<R: BufRead> VectorReader<R> {
    pub fn new(mut input: R) -> Result<Self> {
        let mut header = String::new();
        input.read_line(&mut header).map_err(|e| Error::Malformed {
            line: 1,
            offset: 0,
            message: e.to_string(),
        })?;
        let header = header.trim_end_matches(['\n', '\r']);
        let cols: Vec<&str> = header.split(',').collect();
        let malformed = |message: String| Error::Malformed {
            line: 1,
            offset: 0,
            message,
        };
        if cols.len() < 3 || cols[0] != "id" || cols[1] != "label" {
            return Err(malformed(format!("expected header `id,label,v0,...`, found `{header}`")));
        }
        for (i, c) in cols[2..].iter().enumerate() {
            if *c != format!("v{i}") {
                return Err(malformed(format!("header column {} should be `v{i}`, found `{c}`", i + 2)));
            }
        }
        Ok(VectorReader {
            input,
            dim: cols.len() - 2,
            line_no: 1,
            buf: String::new(),
            done: false,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn parse_row(&self, row: &str) -> Result<EmbeddedRecord> {
        let err = |message: String| Error::Malformed {
            line: self.line_no,
            offset: 0,
            message,
        };
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != self.dim + 2 {
            return Err(err(format!(
                "row has {} vector columns, header declares {}",
                fields.len().saturating_sub(2),
                self.dim
            )));
        }
        let id: u64 = fields[0].parse().map_err(|_| err(format!("bad id `{}`", fields[0])))?;
        let class = match fields[1] {
            "0" => ClassLabel::NotQuestion,
            "1" => ClassLabel::Question,
            other => return Err(err(format!("label `{other}` outside {{0,1}}"))),
        };
        let mut vector = Vec::with_capacity(self.dim);
        for f in &fields[2..] {
            let v: f32 = f.trim().parse().map_err(|_| err(format!("bad number `{f}`")))?;
            if !v.is_finite() {
                return Err(err(format!("non-finite component `{f}`")));
            }
            vector.push(v);
        }
        Ok(EmbeddedRecord { id, class, vector })
    }
}

impl<R: BufRead> Iterator for VectorReader<R> {
    type Item = Result<EmbeddedRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        while !self.done {
            self.buf.clear();
            match self.input.read_line(&mut self.buf) {
                Ok(0) => self.done = true,
                Ok(_) => {
                    self.line_no += 1;
                    let row = self.buf.trim_end_matches(['\n', '\r']);
                    if row.is_empty() {
                        continue;
                    }
                    let r = self.parse_row(row);
                    if r.is_err() {
                        self.done = true;
                    }
                    return Some(r);
                }
                Err(e) => {
                    self.done = true;
                    return Some(Err(Error::Malformed {
                        line: self.line_no + 1,
                        offset: 0,
                        message: e.to_string(),
                    }));
                }
            }
        }
        None
    }
}

/// Open a vector CSV file; the dimension is inferred from the header.
pub fn read_vectors(path: &Path) -> Result<VectorReader<BufReader<File>>> {
    VectorReader::new(open(path)?)
}

/// Read a whole vector file into memory.
pub fn read_all_vectors(path: &Path) -> Result<(usize, Vec<EmbeddedRecord>)> {
    let reader = read_vectors(path)?;
    let dim = reader.dim();
    let records = reader.collect::<Result<Vec<_>>>()?;
    Ok((dim, records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Cursor;

    fn reader(s: &str) -> IssueReader<Cursor<Vec<u8>>> {
        IssueReader::new(Cursor::new(s.as_bytes().to_vec()), None)
    }

    #[test]
    fn comma_separated_labels_are_split() {
        let issues: Vec<_> = reader(
            r#"{"id":1,"title":"t","body":"b","labels":"bug,duplicate","state":"closed"}"#,
        )
        .collect::<Result<_>>()
        .unwrap();
        assert_eq!(issues[0].labels, vec!["bug", "duplicate"]);
    }

    #[test]
    fn empty_label_string_gives_no_labels() {
        let issues: Vec<_> = reader(r#"{"id":1,"title":"t","body":"b","labels":"","state":"open"}"#)
            .collect::<Result<_>>()
            .unwrap();
        assert!(issues[0].labels.is_empty());
    }

    #[test]
    fn labels_are_normalized() {
        assert_eq!(split_labels(" Type: Bug , ,Question"), vec!["type: bug", "question"]);
    }

    #[test]
    fn empty_input_is_empty_stream() {
        assert_eq!(reader("").count(), 0);
    }

    #[test]
    fn missing_title_and_body_read_as_empty() {
        let mut r = reader("{\"id\":3,\"labels\":\"bug\",\"state\":\"open\",\"body\":null}\n");
        let issue = r.next().unwrap().unwrap();
        assert_eq!(issue.title, "");
        assert_eq!(issue.body, "");
        assert_eq!(r.missing_fields(), 2);
    }

    #[test]
    fn malformed_line_reports_line_and_offset() {
        let text = "{\"id\":1,\"labels\":\"\",\"state\":\"open\"}\n{\"id\": oops}\n";
        let err = reader(text).nth(1).unwrap().unwrap_err();
        match err {
            Error::Malformed { line, offset, .. } => {
                assert_eq!(line, 2);
                let first_len = text.find('\n').unwrap() as u64 + 1;
                assert!(offset >= first_len && offset < text.len() as u64, "offset {offset}");
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn duplicate_ids_name_both_lines() {
        let text = "{\"id\":9,\"state\":\"open\"}\n\n{\"id\":9,\"state\":\"closed\"}\n";
        let err = reader(text).find(|r| r.is_err()).unwrap().unwrap_err();
        assert!(matches!(
            err,
            Error::DuplicateId { id: 9, first_line: 1, second_line: 3 }
        ));
    }

    #[test]
    fn max_records_limits_stream() {
        let text = "{\"id\":1,\"state\":\"open\"}\n{\"id\":2,\"state\":\"open\"}\n";
        let r = IssueReader::new(Cursor::new(text.as_bytes().to_vec()), Some(1));
        assert_eq!(r.count(), 1);
    }

    #[test]
    fn single_record_serialization() {
        let mut out = Vec::new();
        let rec = EmbeddedRecord::new(7, ClassLabel::Question, vec![0.0, 0.0, 1.0]);
        write_vectors_to([&rec], &mut out, 3).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "id,label,v0,v1,v2\n7,1,0.0,0.0,1.0\n");
    }

    #[test]
    fn dimension_mismatch_names_record() {
        let rec = EmbeddedRecord::new(11, ClassLabel::Question, vec![0.0; 512]);
        let err = write_vectors_to([&rec], Vec::new(), 1024).unwrap_err();
        assert!(matches!(err, Error::Dimension { id: 11, expected: 1024, found: 512 }));
    }

    #[test]
    fn dim_from_header() {
        let r = VectorReader::new(Cursor::new(b"id,label,v0,v1\n".to_vec())).unwrap();
        assert_eq!(r.dim(), 2);
    }

    #[test]
    fn ragged_row_is_rejected_at_its_line() {
        let data = "id,label,v0,v1\n1,0,0.5,0.5\n2,1,0.1,0.2,0.3\n";
        let mut r = VectorReader::new(Cursor::new(data.as_bytes().to_vec())).unwrap();
        assert!(r.next().unwrap().is_ok());
        match r.next().unwrap().unwrap_err() {
            Error::Malformed { line, .. } => assert_eq!(line, 3),
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn label_outside_binary_is_rejected() {
        let data = "id,label,v0\n1,2,0.5\n";
        let mut r = VectorReader::new(Cursor::new(data.as_bytes().to_vec())).unwrap();
        assert!(r.next().unwrap().is_err());
    }

    proptest! {
        #[test]
        fn label_split_join_roundtrip(segs in proptest::collection::vec("[a-z][a-z :/_-]{0,10}[a-z]", 1..6)) {
            let s = segs.join(",");
            prop_assert_eq!(join_labels(&split_labels(&s)), s);
        }

        #[test]
        fn vectors_roundtrip(rows in proptest::collection::vec(
            (any::<u64>(), any::<bool>(), proptest::collection::vec(-1e6f32..1e6f32, 4)), 1..30)
        ) {
            let records: Vec<_> = rows.into_iter().map(|(id, q, v)| EmbeddedRecord::new(
                id, if q { ClassLabel::Question } else { ClassLabel::NotQuestion }, v)).collect();
            let mut buf = Vec::new();
            write_vectors_to(&records, &mut buf, 4).unwrap();
            let back: Vec<_> = VectorReader::new(Cursor::new(buf)).unwrap().collect::<Result<_>>().unwrap();
            prop_assert_eq!(back, records);
        }
    }
}
