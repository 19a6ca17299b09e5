//! Line codec: `<len> <crc32:08x> <json>\n`, where `len` is the byte length
//! of the JSON and the CRC-32 covers the same bytes.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use thiserror::Error;

use super::event::ArenaEvent;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LogError {
    #[error("{path}: {reason}")]
    Io { path: PathBuf, reason: String },
    #[error("integrity error at seq {seq} (line {line}): {reason}")]
    Integrity { seq: u64, line: usize, reason: String },
}

impl LogError {
    /// Sequence number of the first event that failed validation.
    pub fn first_bad_seq(&self) -> Option<u64> {
        match self {
            LogError::Integrity { seq, .. } => Some(*seq),
            LogError::Io { .. } => None,
        }
    }
}

pub fn encode_line(event: &ArenaEvent) -> String {
    let json = serde_json::to_string(event).expect("events serialize");
    format!("{} {:08x} {}\n", json.len(), crc32fast::hash(json.as_bytes()), json)
}

/// Decodes one line without its trailing newline.
pub fn decode_line(line: &[u8]) -> Result<ArenaEvent, String> {
    let text = std::str::from_utf8(line).map_err(|_| "line is not UTF-8".to_string())?;
    let mut parts = text.splitn(3, ' ');
    let (Some(len), Some(crc), Some(json)) = (parts.next(), parts.next(), parts.next()) else {
        return Err("expected `<len> <crc> <json>`".into());
    };
    let len: usize = len.parse().map_err(|_| format!("bad length field `{len}`"))?;
    if json.len() != len {
        return Err(format!("length {} does not match header {len}", json.len()));
    }
    let crc = u32::from_str_radix(crc, 16).map_err(|_| format!("bad checksum field `{crc}`"))?;
    if crc32fast::hash(json.as_bytes()) != crc {
        return Err("checksum mismatch".into());
    }
    serde_json::from_str(json).map_err(|e| format!("bad event: {e}"))
}

/// Ordering rules every appended event must satisfy.
#[derive(Debug, Clone, Default)]
pub struct Validator {
    run_id: Option<String>,
    last_seq: u64,
    position: Option<(NaiveDate, u8)>,
}

impl Validator {
    pub fn last_seq(&self) -> u64 {
        self.last_seq
    }

    pub fn run_id(&self) -> Option<&str> {
        self.run_id.as_deref()
    }

    pub fn check(&self, event: &ArenaEvent) -> Result<(), String> {
        if event.seq != self.last_seq + 1 {
            return Err(format!("expected seq {}, found {}", self.last_seq + 1, event.seq));
        }
        if let Some(run) = &self.run_id {
            if *run != event.run_id {
                return Err(format!("run id `{}` differs from `{run}`", event.run_id));
            }
        }
        let here = (event.date, event.kind().stage());
        if let Some(prev) = self.position {
            if here < prev {
                return Err(format!("{:?} on {} is out of order", event.kind(), event.date));
            }
        }
        Ok(())
    }

    pub fn accept(&mut self, event: &ArenaEvent) -> Result<(), String> {
        self.check(event)?;
        self.run_id.get_or_insert_with(|| event.run_id.clone());
        self.last_seq = event.seq;
        self.position = Some((event.date, event.kind().stage()));
        Ok(())
    }
}

/// Result of scanning raw log bytes.
#[derive(Debug, Clone, PartialEq)]
pub struct Scan {
    pub events: Vec<ArenaEvent>,
    /// Byte length of the valid prefix.
    pub valid_len: usize,
    /// Bytes after the last newline, discarded as a torn write.
    pub torn_bytes: usize,
}

pub fn scan(bytes: &[u8]) -> Result<Scan, LogError> {
    let mut validator = Validator::default();
    let mut events = Vec::new();
    let mut offset = 0;
    let mut line_no = 0;
    while let Some(nl) = bytes[offset..].iter().position(|b| *b == b'\n') {
        line_no += 1;
        let line = &bytes[offset..offset + nl];
        let expected = validator.last_seq() + 1;
        let event = decode_line(line).map_err(|reason| LogError::Integrity {
            seq: expected,
            line: line_no,
            reason,
        })?;
        validator.accept(&event).map_err(|reason| LogError::Integrity {
            seq: event.seq,
            line: line_no,
            reason,
        })?;
        events.push(event);
        offset += nl + 1;
    }
    Ok(Scan {
        events,
        valid_len: offset,
        torn_bytes: bytes.len() - offset,
    })
}

/// Reads a log without modifying it; a torn tail is ignored.
pub fn read_log(path: &Path) -> Result<Vec<ArenaEvent>, LogError> {
    let bytes = fs::read(path).map_err(|e| io_error(path, e))?;
    Ok(scan(&bytes)?.events)
}

fn io_error(path: &Path, e: std::io::Error) -> LogError {
    LogError::Io {
        path: path.to_path_buf(),
        reason: e.to_string(),
    }
}

pub trait EventSink {
    /// Validates and durably stores one event.
    fn append(&mut self, event: &ArenaEvent) -> Result<(), LogError>;
    fn last_seq(&self) -> u64;
}

#[derive(Debug, Clone, Default)]
pub struct MemoryLog {
    events: Vec<ArenaEvent>,
    validator: Validator,
}

impl MemoryLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn events(&self) -> &[ArenaEvent] {
        &self.events
    }

    pub fn into_events(self) -> Vec<ArenaEvent> {
        self.events
    }

    /// The log as it would be written to disk.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.events.iter().flat_map(|e| encode_line(e).into_bytes()).collect()
    }
}

impl EventSink for MemoryLog {
    fn append(&mut self, event: &ArenaEvent) -> Result<(), LogError> {
        self.validator.accept(event).map_err(|reason| LogError::Integrity {
            seq: event.seq,
            line: self.events.len() + 1,
            reason,
        })?;
        self.events.push(event.clone());
        Ok(())
    }

    fn last_seq(&self) -> u64 {
        self.validator.last_seq()
    }
}

/// Single-writer file log; each append is flushed and synced before it
/// returns.
#[derive(Debug)]
pub struct FileLog {
    path: PathBuf,
    file: File,
    validator: Validator,
    lines: usize,
}

impl FileLog {
    /// Opens or creates the log, truncating a torn final record.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, LogError> {
        let path = path.into();
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| io_error(parent, e))?;
        }
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(io_error(&path, e)),
        };
        let scan = scan(&bytes)?;
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| io_error(&path, e))?;
        if scan.torn_bytes > 0 {
            tracing::warn!(path = %path.display(), bytes = scan.torn_bytes, "discarding torn log tail");
            file.set_len(scan.valid_len as u64).map_err(|e| io_error(&path, e))?;
            file.sync_all().map_err(|e| io_error(&path, e))?;
        }
        let mut validator = Validator::default();
        for e in &scan.events {
            validator.accept(e).expect("scan validated");
        }
        Ok(Self {
            path,
            file,
            validator,
            lines: scan.events.len(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl EventSink for FileLog {
    fn append(&mut self, event: &ArenaEvent) -> Result<(), LogError> {
        self.validator.check(event).map_err(|reason| LogError::Integrity {
            seq: event.seq,
            line: self.lines + 1,
            reason,
        })?;
        let line = encode_line(event);
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.sync_data())
            .map_err(|e| io_error(&self.path, e))?;
        self.validator.accept(event).expect("checked above");
        self.lines += 1;
        Ok(())
    }

    fn last_seq(&self) -> u64 {
        self.validator.last_seq()
    }
}

/// Summary of an integrity check over a log file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifyReport {
    pub events: usize,
    pub last_seq: u64,
    pub torn_bytes: usize,
}

pub fn verify(path: &Path) -> Result<VerifyReport, LogError> {
    let bytes = fs::read(path).map_err(|e| io_error(path, e))?;
    let scan = scan(&bytes)?;
    Ok(VerifyReport {
        events: scan.events.len(),
        last_seq: scan.events.last().map_or(0, |e| e.seq),
        torn_bytes: scan.torn_bytes,
    })
}
