use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use log::warn;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geodesy::GeoPoint;
use crate::ins::ImuSample;

/// Rows of one stream may go back in time by at most this much (s) before
/// they are rejected.
pub const REORDER_TOLERANCE: f64 = 0.010;

/// Column order of the CSV form.
pub const CSV_HEADER: [&str; 14] = [
    "t", "type", "ax", "ay", "az", "wx", "wy", "wz", "lat", "lon", "alt", "accuracy", "sigma",
    "label",
];

pub const STATIONARY_START: &str = "stationary_start";
pub const STATIONARY_END: &str = "stationary_end";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogFormat {
    Csv,
    JsonLines,
}

impl LogFormat {
    /// JSON lines for `.jsonl`/`.ndjson`, CSV otherwise.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl" | "ndjson") => Self::JsonLines,
            _ => Self::Csv,
        }
    }
}

/// Platform location with its horizontal accuracy radius.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocationFix {
    pub t: f64,
    pub point: GeoPoint,
    /// Meters.
    pub accuracy: f64,
}

/// Barometric altitude, meters on the same datum as the location rows.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BaroSample {
    pub t: f64,
    pub altitude: f64,
    /// Per-sample std in meters; the configured default applies when absent.
    pub sigma: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Annotation {
    pub t: f64,
    pub label: String,
}

/// Time-sorted sensor streams of one capture.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SensorLog {
    pub imu: Vec<ImuSample>,
    pub locations: Vec<LocationFix>,
    pub barometer: Vec<BaroSample>,
    pub annotations: Vec<Annotation>,
}

impl SensorLog {
    /// `[start, end]` windows delimited by stationary annotations. A start
    /// without an end is closed at the last IMU sample.
    pub fn stationary_windows(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        let mut open: Option<f64> = None;
        for a in &self.annotations {
            match a.label.as_str() {
                STATIONARY_START => {
                    open.get_or_insert(a.t);
                }
                STATIONARY_END => match open.take() {
                    Some(s) => out.push((s, a.t)),
                    None => warn!("stationary_end at t={} without a start; ignored", a.t),
                },
                _ => {}
            }
        }
        if let (Some(s), Some(last)) = (open, self.imu.last()) {
            out.push((s, last.t));
        }
        out
    }
}

/// Problem with one input line; the row is left out of the log.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Diagnostic {
    pub line: usize,
    pub message: String,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IngestReport {
    pub log: SensorLog,
    pub diagnostics: Vec<Diagnostic>,
    /// Rows repeating the timestamp of an earlier row of the same stream.
    pub duplicates: usize,
}

impl IngestReport {
    pub fn dropped(&self) -> usize {
        self.diagnostics.len() + self.duplicates
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum RowType {
    Imu,
    Location,
    Barometer,
    Annotation,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Row {
    t: f64,
    #[serde(rename = "type")]
    kind: Option<RowType>,
    #[serde(default)]
    ax: Option<f64>,
    #[serde(default)]
    ay: Option<f64>,
    #[serde(default)]
    az: Option<f64>,
    #[serde(default)]
    wx: Option<f64>,
    #[serde(default)]
    wy: Option<f64>,
    #[serde(default)]
    wz: Option<f64>,
    #[serde(default)]
    lat: Option<f64>,
    #[serde(default)]
    lon: Option<f64>,
    #[serde(default)]
    alt: Option<f64>,
    #[serde(default)]
    accuracy: Option<f64>,
    #[serde(default)]
    sigma: Option<f64>,
    #[serde(default)]
    label: Option<String>,
}

enum Record {
    Imu(ImuSample),
    Location(LocationFix),
    Barometer(BaroSample),
    Annotation(Annotation),
}

fn need(v: Option<f64>, name: &str) -> Result<f64, String> {
    match v {
        Some(x) if x.is_finite() => Ok(x),
        Some(_) => Err(format!("`{name}` is not finite")),
        None => Err(format!("missing `{name}`")),
    }
}

impl Row {
    fn into_record(self) -> Result<Record, String> {
        if !self.t.is_finite() {
            return Err("timestamp is not finite".into());
        }
        let t = self.t;
        match self.kind.ok_or("missing `type`")? {
            RowType::Imu => Ok(Record::Imu(ImuSample::new(
                t,
                Vector3::new(need(self.ax, "ax")?, need(self.ay, "ay")?, need(self.az, "az")?),
                Vector3::new(need(self.wx, "wx")?, need(self.wy, "wy")?, need(self.wz, "wz")?),
            ))),
            RowType::Location => {
                let point = GeoPoint {
                    latitude: need(self.lat, "lat")?,
                    longitude: need(self.lon, "lon")?,
                    altitude: need(self.alt, "alt")?,
                };
                point.validate().map_err(|e| e.to_string())?;
                let accuracy = need(self.accuracy, "accuracy")?;
                if !(accuracy > 0.0) {
                    return Err("accuracy must be positive".into());
                }
                Ok(Record::Location(LocationFix { t, point, accuracy }))
            }
            RowType::Barometer => {
                let altitude = need(self.alt, "alt")?;
                if let Some(s) = self.sigma {
                    if !(s > 0.0 && s.is_finite()) {
                        return Err("sigma must be positive".into());
                    }
                }
                Ok(Record::Barometer(BaroSample {
                    t,
                    altitude,
                    sigma: self.sigma,
                }))
            }
            RowType::Annotation => match self.label {
                Some(label) if !label.is_empty() => Ok(Record::Annotation(Annotation { t, label })),
                _ => Err("missing `label`".into()),
            },
        }
    }
}

fn row_of(rec: &Record) -> Row {
    match rec {
        Record::Imu(s) => Row {
            t: s.t,
            kind: Some(RowType::Imu),
            ax: Some(s.accel.x),
            ay: Some(s.accel.y),
            az: Some(s.accel.z),
            wx: Some(s.gyro.x),
            wy: Some(s.gyro.y),
            wz: Some(s.gyro.z),
            ..Row::default()
        },
        Record::Location(f) => Row {
            t: f.t,
            kind: Some(RowType::Location),
            lat: Some(f.point.latitude),
            lon: Some(f.point.longitude),
            alt: Some(f.point.altitude),
            accuracy: Some(f.accuracy),
            ..Row::default()
        },
        Record::Barometer(b) => Row {
            t: b.t,
            kind: Some(RowType::Barometer),
            alt: Some(b.altitude),
            sigma: b.sigma,
            ..Row::default()
        },
        Record::Annotation(a) => Row {
            t: a.t,
            kind: Some(RowType::Annotation),
            label: Some(a.label.clone()),
            ..Row::default()
        },
    }
}

/// Per-stream ordering state.
#[derive(Default)]
struct Streams {
    log: SensorLog,
    latest: [Option<f64>; 4],
}

impl Streams {
    fn push(&mut self, rec: Record) -> Result<(), String> {
        let (slot, t) = match &rec {
            Record::Imu(s) => (0, s.t),
            Record::Location(f) => (1, f.t),
            Record::Barometer(b) => (2, b.t),
            Record::Annotation(a) => (3, a.t),
        };
        if let Some(last) = self.latest[slot] {
            if t < last - REORDER_TOLERANCE {
                return Err(format!(
                    "timestamp {t} is {:.3} s before the previous row of its stream",
                    last - t
                ));
            }
        }
        self.latest[slot] = Some(self.latest[slot].map_or(t, |l| l.max(t)));
        match rec {
            Record::Imu(s) => self.log.imu.push(s),
            Record::Location(f) => self.log.locations.push(f),
            Record::Barometer(b) => self.log.barometer.push(b),
            Record::Annotation(a) => self.log.annotations.push(a),
        }
        Ok(())
    }

    /// Stable time sort per stream; later rows at an already seen timestamp
    /// are dropped (annotations only when the label repeats too).
    fn finish(mut self) -> (SensorLog, usize) {
        let log = &mut self.log;
        log.imu.sort_by(|a, b| a.t.total_cmp(&b.t));
        log.locations.sort_by(|a, b| a.t.total_cmp(&b.t));
        log.barometer.sort_by(|a, b| a.t.total_cmp(&b.t));
        log.annotations.sort_by(|a, b| a.t.total_cmp(&b.t));
        let before = log.imu.len() + log.locations.len() + log.barometer.len() + log.annotations.len();
        log.imu.dedup_by(|b, a| a.t == b.t);
        log.locations.dedup_by(|b, a| a.t == b.t);
        log.barometer.dedup_by(|b, a| a.t == b.t);
        log.annotations.dedup_by(|b, a| a.t == b.t && a.label == b.label);
        let after = log.imu.len() + log.locations.len() + log.barometer.len() + log.annotations.len();
        (self.log, before - after)
    }
}

fn finish(streams: Streams, diagnostics: Vec<Diagnostic>) -> Result<IngestReport> {
    let (log, duplicates) = streams.finish();
    for d in &diagnostics {
        warn!("{d}");
    }
    if duplicates > 0 {
        warn!("{duplicates} duplicate rows dropped");
    }
    Ok(IngestReport {
        log,
        diagnostics,
        duplicates,
    })
}

/// Reads the CSV form. The header must name the columns; their order is free
/// and unused trailing columns may be left out.
pub fn read_csv(reader: impl Read) -> Result<IngestReport> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse { line: 1, message: e.to_string() })?
        .clone();
    for h in &headers {
        if !CSV_HEADER.contains(&h) {
            return Err(Error::Parse { line: 1, message: format!("unknown column `{h}`") });
        }
    }
    let mut streams = Streams::default();
    let mut diagnostics = Vec::new();
    let mut record = csv::StringRecord::new();
    loop {
        let line = rdr.position().line() as usize;
        match rdr.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => {
                diagnostics.push(Diagnostic { line, message: e.to_string() });
                continue;
            }
        }
        let line = record.position().map_or(line, |p| p.line() as usize);
        let parsed = record
            .deserialize::<Row>(Some(&headers))
            .map_err(|e| match e.kind() {
                csv::ErrorKind::Deserialize { err, .. } => match err.field() {
                    Some(i) => format!("column `{}`: {}", &headers[i as usize], err.kind()),
                    None => err.kind().to_string(),
                },
                _ => e.to_string(),
            })
            .and_then(Row::into_record)
            .and_then(|rec| streams.push(rec));
        if let Err(message) = parsed {
            diagnostics.push(Diagnostic { line, message });
        }
    }
    finish(streams, diagnostics)
}

/// Reads the JSON-lines form: one object per line with the CSV column names
/// as keys. Blank lines are skipped.
pub fn read_jsonl(reader: impl Read) -> Result<IngestReport> {
    let mut streams = Streams::default();
    let mut diagnostics = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = i + 1;
        let text = line?;
        if text.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<Row>(&text)
            .map_err(|e| e.to_string())
            .and_then(Row::into_record)
            .and_then(|rec| streams.push(rec));
        if let Err(message) = parsed {
            diagnostics.push(Diagnostic { line: line_no, message });
        }
    }
    finish(streams, diagnostics)
}

/// Reads and validates a sensor log. Malformed rows are reported and left
/// out; an unreadable file or header is an error.
pub fn ingest(path: &Path, format: LogFormat) -> Result<IngestReport> {
    let file = File::open(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    match format {
        LogFormat::Csv => read_csv(BufReader::new(file)),
        LogFormat::JsonLines => read_jsonl(BufReader::new(file)),
    }
}

/// All rows interleaved by time; at equal times IMU rows come first, then
/// locations, barometer and annotations.
fn records(log: &SensorLog) -> Vec<Record> {
    let mut out: Vec<(f64, u8, Record)> = Vec::new();
    out.extend(log.imu.iter().map(|s| (s.t, 0, Record::Imu(*s))));
    out.extend(log.locations.iter().map(|f| (f.t, 1, Record::Location(*f))));
    out.extend(log.barometer.iter().map(|b| (b.t, 2, Record::Barometer(*b))));
    out.extend(log.annotations.iter().map(|a| (a.t, 3, Record::Annotation(a.clone()))));
    out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    out.into_iter().map(|(_, _, r)| r).collect()
}

pub fn write_csv(log: &SensorLog, writer: impl Write) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    w.write_record(CSV_HEADER).map_err(csv_error)?;
    for rec in records(log) {
        w.serialize(row_of(&rec)).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_jsonl(log: &SensorLog, writer: impl Write) -> Result<()> {
    let mut w = BufWriter::new(writer);
    for rec in records(log) {
        let mut value = serde_json::to_value(row_of(&rec)).map_err(|e| invalid(e.to_string()))?;
        if let Some(obj) = value.as_object_mut() {
            obj.retain(|_, v| !v.is_null());
        }
        serde_json::to_writer(&mut w, &value).map_err(|e| invalid(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_log(log: &SensorLog, path: &Path, format: LogFormat) -> Result<()> {
    let file = File::create(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    match format {
        LogFormat::Csv => write_csv(log, BufWriter::new(file)),
        LogFormat::JsonLines => write_jsonl(log, file),
    }
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => invalid(format!("{other:?}")),
    }
}
