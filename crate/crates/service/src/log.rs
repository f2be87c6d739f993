//! Append-only experiment log: one JSON object per line, rotated by size
//! into `path.1`, `path.2`, ... (higher numbers are older).

use std::collections::HashSet;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use helios_core::{Counts, RgbSetting};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Endpoint {
    Api,
    Gm,
    Rgb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub timestamp: DateTime<Utc>,
    pub client_id: String,
    pub endpoint: Endpoint,
    #[serde(rename = "in")]
    pub input: RgbSetting,
    #[serde(rename = "out")]
    pub output: Counts,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stats {
    pub experiments: u64,
    pub unique_clients: u64,
    pub since: Option<DateTime<Utc>>,
}

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("experiment log {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("experiment log {path} line {line}: {message}")]
    Corrupt { path: PathBuf, line: usize, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> LogError + '_ {
    move |source| LogError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// `path.N`
pub fn rotated_path(path: &Path, n: usize) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(format!(".{n}"));
    PathBuf::from(s)
}

/// All log files for `path`, oldest first.
pub fn log_files(path: &Path) -> Vec<PathBuf> {
    let mut rotated: Vec<PathBuf> = (1..).map(|n| rotated_path(path, n)).take_while(|p| p.exists()).collect();
    rotated.reverse();
    rotated.push(path.to_path_buf());
    rotated
}

struct FileLog {
    path: PathBuf,
    max_bytes: u64,
    size: u64,
    file: File,
}

impl FileLog {
    fn open(path: &Path, max_bytes: u64) -> Result<Self, LogError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(io_err(path))?;
        let size = file.metadata().map_err(io_err(path))?.len();
        Ok(FileLog {
            path: path.to_path_buf(),
            max_bytes,
            size,
            file,
        })
    }

    fn rotate(&mut self) -> Result<(), LogError> {
        let mut n = 1;
        while rotated_path(&self.path, n).exists() {
            n += 1;
        }
        for k in (1..n).rev() {
            let from = rotated_path(&self.path, k);
            fs::rename(&from, rotated_path(&self.path, k + 1)).map_err(io_err(&from))?;
        }
        fs::rename(&self.path, rotated_path(&self.path, 1)).map_err(io_err(&self.path))?;
        *self = FileLog::open(&self.path, self.max_bytes)?;
        Ok(())
    }

    fn append(&mut self, line: &str) -> Result<(), LogError> {
        let len = line.len() as u64 + 1;
        if self.size > 0 && self.size + len > self.max_bytes {
            self.rotate()?;
        }
        let mut buf = Vec::with_capacity(line.len() + 1);
        buf.extend_from_slice(line.as_bytes());
        buf.push(b'\n');
        self.file.write_all(&buf).map_err(io_err(&self.path))?;
        self.size += len;
        Ok(())
    }
}

enum Sink {
    File(FileLog),
    Memory(Arc<Mutex<Vec<ExperimentRecord>>>),
}

/// Writer side. Owned by the measurement critical section.
pub struct ExperimentLog {
    sink: Sink,
    last: Option<DateTime<Utc>>,
}

/// Reader side. Usable concurrently with appends.
#[derive(Clone)]
pub enum LogReader {
    File(PathBuf),
    Memory(Arc<Mutex<Vec<ExperimentRecord>>>),
}

impl ExperimentLog {
    pub fn open(path: &Path, max_bytes: u64) -> Result<(Self, LogReader), LogError> {
        let file = FileLog::open(path, max_bytes)?;
        let last = read_records(path)?.last().map(|r| r.timestamp);
        let log = ExperimentLog {
            sink: Sink::File(file),
            last,
        };
        Ok((log, LogReader::File(path.to_path_buf())))
    }

    pub fn in_memory() -> (Self, LogReader) {
        let records = Arc::new(Mutex::new(Vec::new()));
        let log = ExperimentLog {
            sink: Sink::Memory(Arc::clone(&records)),
            last: None,
        };
        (log, LogReader::Memory(records))
    }

    /// `now`, held back to the last logged instant if the clock stepped
    /// backwards.
    pub fn next_timestamp(&self, now: DateTime<Utc>) -> DateTime<Utc> {
        match self.last {
            Some(last) if last > now => last,
            _ => now,
        }
    }

    pub fn append(&mut self, record: ExperimentRecord) -> Result<(), LogError> {
        let ts = record.timestamp;
        match &mut self.sink {
            Sink::File(f) => {
                let line = serde_json::to_string(&record).expect("record serializes");
                f.append(&line)?;
            }
            Sink::Memory(records) => records.lock().push(record),
        }
        self.last = Some(ts);
        Ok(())
    }
}

fn parse_file(path: &Path, out: &mut Vec<ExperimentRecord>) -> Result<(), LogError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(()),
        Err(e) => return Err(io_err(path)(e)),
    };
    let mut lines = BufReader::new(file).lines().enumerate().peekable();
    while let Some((i, line)) = lines.next() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(r) => out.push(r),
            // a write may be in flight on the final line
            Err(_) if lines.peek().is_none() && !line.ends_with('}') => {}
            Err(e) => {
                return Err(LogError::Corrupt {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: e.to_string(),
                })
            }
        }
    }
    Ok(())
}

/// Every record under `path`, rotated files first.
pub fn read_records(path: &Path) -> Result<Vec<ExperimentRecord>, LogError> {
    let mut out = Vec::new();
    for file in log_files(path) {
        parse_file(&file, &mut out)?;
    }
    Ok(out)
}

pub fn summarize<'a>(records: impl IntoIterator<Item = &'a ExperimentRecord>) -> Stats {
    let mut experiments = 0;
    let mut clients = HashSet::new();
    let mut since = None;
    for r in records {
        experiments += 1;
        clients.insert(r.client_id.as_str());
        since = Some(since.map_or(r.timestamp, |s: DateTime<Utc>| s.min(r.timestamp)));
    }
    Stats {
        experiments,
        unique_clients: clients.len() as u64,
        since,
    }
}

impl LogReader {
    pub fn records(&self) -> Result<Vec<ExperimentRecord>, LogError> {
        match self {
            LogReader::File(path) => read_records(path),
            LogReader::Memory(records) => Ok(records.lock().clone()),
        }
    }

    pub fn stats(&self) -> Result<Stats, LogError> {
        match self {
            LogReader::File(path) => Ok(summarize(&read_records(path)?)),
            LogReader::Memory(records) => Ok(summarize(records.lock().iter())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{Duration, TimeZone};
    use helios_core::CHANNEL_COUNT;

    fn record(i: u32, client: &str) -> ExperimentRecord {
        ExperimentRecord {
            timestamp: Utc.with_ymd_and_hms(2024, 5, 1, 12, 0, 0).unwrap() + Duration::seconds(i64::from(i)),
            client_id: client.to_string(),
            endpoint: Endpoint::Api,
            input: RgbSetting::new(0.1, 0.2, 0.3),
            output: Counts([i as u16; CHANNEL_COUNT]),
        }
    }

    #[test]
    fn empty_log_has_no_stats() {
        let dir = tempfile::tempdir().unwrap();
        let reader = LogReader::File(dir.path().join("none.ndjson"));
        assert_eq!(
            reader.stats().unwrap(),
            Stats {
                experiments: 0,
                unique_clients: 0,
                since: None
            }
        );
    }

    #[test]
    fn counts_records_and_clients() {
        let (mut log, reader) = ExperimentLog::in_memory();
        for (i, c) in ["a", "b", "a"].iter().enumerate() {
            log.append(record(i as u32, c)).unwrap();
        }
        let s = reader.stats().unwrap();
        assert_eq!((s.experiments, s.unique_clients), (3, 2));
        assert_eq!(s.since, Some(record(0, "a").timestamp));
    }

    #[test]
    fn rotation_keeps_every_record_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.ndjson");
        let (mut log, reader) = ExperimentLog::open(&path, 600).unwrap();
        for i in 0..25 {
            log.append(record(i, "c")).unwrap();
        }
        assert!(rotated_path(&path, 2).exists());
        for f in log_files(&path) {
            assert!(fs::metadata(&f).unwrap().len() <= 600, "{f:?}");
        }
        let back = reader.records().unwrap();
        assert_eq!(back, (0..25).map(|i| record(i, "c")).collect::<Vec<_>>());
        for w in back.windows(2) {
            assert!(w[0].timestamp <= w[1].timestamp);
        }
    }

    #[test]
    fn reopening_resumes_the_clock_floor() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.ndjson");
        let (mut log, _) = ExperimentLog::open(&path, 1 << 20).unwrap();
        log.append(record(100, "c")).unwrap();
        drop(log);
        let (log, _) = ExperimentLog::open(&path, 1 << 20).unwrap();
        let earlier = record(0, "c").timestamp;
        assert_eq!(log.next_timestamp(earlier), record(100, "c").timestamp);
    }

    #[test]
    fn partial_trailing_line_is_ignored_but_corruption_is_not() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.ndjson");
        let good = serde_json::to_string(&record(1, "x")).unwrap();
        fs::write(&path, format!("{good}\n{}", &good[..20])).unwrap();
        assert_eq!(read_records(&path).unwrap().len(), 1);
        fs::write(&path, format!("garbage\n{good}\n")).unwrap();
        assert!(matches!(read_records(&path), Err(LogError::Corrupt { line: 1, .. })));
    }

    #[test]
    fn unreadable_log_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        // a directory where the file should be
        let reader = LogReader::File(dir.path().to_path_buf());
        assert!(reader.stats().is_err());
    }
}
