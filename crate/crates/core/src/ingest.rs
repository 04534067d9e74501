//! Loading, resampling, and low-pass filtering of raw IMU recordings.
//!
//! Recordings arrive as CSV with header `t,ax,ay,az,gx,gy,gz` (seconds,
//! m/s², rad/s). Reference events use header `t,kind,side`.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::Vector3;

use crate::dsp::Biquad;
use crate::error::{Error, Result};
use crate::events::{EventKind, GaitEvent, Side};

pub const RECORDING_HEADER: [&str; 7] = ["t", "ax", "ay", "az", "gx", "gy", "gz"];
pub const EVENT_HEADER: [&str; 3] = ["t", "kind", "side"];

/// Default accelerometer low-pass cutoff.
pub const DEFAULT_CUTOFF_HZ: f64 = 17.0;

/// Time-stamped triaxial accelerometer and gyroscope streams.
#[derive(Debug, Clone, PartialEq)]
pub struct ImuRecording {
    timestamps: Vec<f64>,
    accel: Vec<Vector3<f64>>,
    gyro: Vec<Vector3<f64>>,
    sample_rate: Option<f64>,
    pub device_id: String,
    pub session_id: String,
}

impl ImuRecording {
    /// Builds a recording, checking that timestamps strictly increase, that
    /// all streams have the same length, and that every value is finite.
    pub fn new(timestamps: Vec<f64>, accel: Vec<Vector3<f64>>, gyro: Vec<Vector3<f64>>) -> Result<Self> {
        if accel.len() != timestamps.len() || gyro.len() != timestamps.len() {
            return Err(Error::Contract(format!(
                "stream lengths differ: {} timestamps, {} accel, {} gyro",
                timestamps.len(),
                accel.len(),
                gyro.len()
            )));
        }
        if let Some(i) = timestamps.iter().position(|t| !t.is_finite()) {
            return Err(Error::Contract(format!("timestamp {i} is not finite")));
        }
        if let Some(i) = timestamps.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::Contract(format!(
                "timestamps must strictly increase (sample {} at {} s follows {} s)",
                i + 1,
                timestamps[i + 1],
                timestamps[i]
            )));
        }
        let finite = |v: &Vector3<f64>| v.iter().all(|x| x.is_finite());
        if let Some(i) = accel.iter().zip(&gyro).position(|(a, g)| !finite(a) || !finite(g)) {
            return Err(Error::Contract(format!("sample {i} holds a non-finite value")));
        }
        Ok(Self {
            timestamps,
            accel,
            gyro,
            sample_rate: None,
            device_id: String::new(),
            session_id: String::new(),
        })
    }

    /// Builds a uniformly sampled recording starting at `t0`.
    pub fn uniform(t0: f64, sample_rate: f64, accel: Vec<Vector3<f64>>, gyro: Vec<Vector3<f64>>) -> Result<Self> {
        if !(sample_rate > 0.0) {
            return Err(Error::Config(format!("sample rate must be positive, got {sample_rate}")));
        }
        let timestamps = (0..accel.len()).map(|k| t0 + k as f64 / sample_rate).collect();
        let mut rec = Self::new(timestamps, accel, gyro)?;
        rec.sample_rate = Some(sample_rate);
        Ok(rec)
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn accel(&self) -> &[Vector3<f64>] {
        &self.accel
    }

    pub fn gyro(&self) -> &[Vector3<f64>] {
        &self.gyro
    }

    /// Sampling rate; only present once the recording sits on a uniform grid.
    pub fn sample_rate(&self) -> Option<f64> {
        self.sample_rate
    }

    pub fn duration(&self) -> f64 {
        match (self.timestamps.first(), self.timestamps.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }

    /// Rate implied by the median sampling interval.
    pub fn native_rate(&self) -> Result<f64> {
        if self.len() < 2 {
            return Err(Error::InsufficientData("at least 2 samples are needed".into()));
        }
        let dts: Vec<f64> = self.timestamps.windows(2).map(|w| w[1] - w[0]).collect();
        Ok(1.0 / crate::stats::median(&dts))
    }

    pub fn with_accel(&self, accel: Vec<Vector3<f64>>) -> Self {
        assert_eq!(accel.len(), self.len());
        Self { accel, ..self.clone() }
    }

    pub fn with_ids(mut self, device_id: impl Into<String>, session_id: impl Into<String>) -> Self {
        self.device_id = device_id.into();
        self.session_id = session_id.into();
        self
    }

    /// Writes the recording in the ingest CSV layout.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(RECORDING_HEADER).map_err(csv_io)?;
        for ((t, a), g) in self.timestamps.iter().zip(&self.accel).zip(&self.gyro) {
            w.write_record([t, &a.x, &a.y, &a.z, &g.x, &g.y, &g.z].map(|v| v.to_string()))
                .map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_io(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse { line, message: format!("{other:?}") },
    }
}

fn check_header(found: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    let got: Vec<&str> = found.iter().map(str::trim).collect();
    if got != expected {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header {:?}, found {:?}", expected.join(","), got.join(",")),
        });
    }
    Ok(())
}

/// Parses a recording from CSV text.
pub fn load_recording<R: Read>(source: R) -> Result<ImuRecording> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(source);
    let header = reader.headers().map_err(csv_io)?.clone();
    check_header(&header, &RECORDING_HEADER)?;

    let mut timestamps = Vec::new();
    let mut accel = Vec::new();
    let mut gyro = Vec::new();
    for row in reader.records() {
        let row = row.map_err(csv_io)?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        if row.len() != 7 {
            return Err(Error::Parse { line, message: format!("expected 7 fields, found {}", row.len()) });
        }
        let mut v = [0.0; 7];
        for (slot, field) in v.iter_mut().zip(row.iter()) {
            *slot = field
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::Parse { line, message: format!("invalid number {field:?}") })?;
        }
        timestamps.push(v[0]);
        accel.push(Vector3::new(v[1], v[2], v[3]));
        gyro.push(Vector3::new(v[4], v[5], v[6]));
    }
    if timestamps.is_empty() {
        return Err(Error::InsufficientData("recording has no samples".into()));
    }
    ImuRecording::new(timestamps, accel, gyro)
}

pub fn load_recording_path(path: impl AsRef<Path>) -> Result<ImuRecording> {
    load_recording(File::open(path)?)
}

/// Linearly interpolates both streams onto a uniform grid at `target_rate`
/// spanning the first to the last timestamp.
pub fn resample(rec: &ImuRecording, target_rate: f64) -> Result<ImuRecording> {
    if !(target_rate > 0.0) || !target_rate.is_finite() {
        return Err(Error::Config(format!("target rate must be positive, got {target_rate}")));
    }
    if rec.len() < 2 {
        return Err(Error::InsufficientData("resampling needs at least 2 samples".into()));
    }
    let t = rec.timestamps();
    let t0 = t[0];
    let span = rec.duration();
    let count = (span * target_rate + 1e-9).floor() as usize + 1;

    let mut accel = Vec::with_capacity(count);
    let mut gyro = Vec::with_capacity(count);
    let mut j = 0;
    for k in 0..count {
        let tk = t0 + k as f64 / target_rate;
        while j + 2 < t.len() && t[j + 1] <= tk {
            j += 1;
        }
        let w = ((tk - t[j]) / (t[j + 1] - t[j])).clamp(0.0, 1.0);
        accel.push(rec.accel[j] + (rec.accel[j + 1] - rec.accel[j]) * w);
        gyro.push(rec.gyro[j] + (rec.gyro[j + 1] - rec.gyro[j]) * w);
    }
    let out = ImuRecording::uniform(t0, target_rate, accel, gyro)?;
    Ok(out.with_ids(rec.device_id.clone(), rec.session_id.clone()))
}

/// Places the recording on a uniform grid at its own median sampling rate.
pub fn regularize(rec: &ImuRecording) -> Result<ImuRecording> {
    if let Some(rate) = rec.sample_rate {
        return Ok(rec.clone().with_rate(rate));
    }
    resample(rec, rec.native_rate()?)
}

impl ImuRecording {
    fn with_rate(mut self, rate: f64) -> Self {
        self.sample_rate = Some(rate);
        self
    }
}

/// Zero-phase second-order Butterworth low-pass on each accelerometer axis.
/// The gyroscope passes through unchanged.
pub fn lowpass_accel(rec: &ImuRecording, cutoff_hz: f64) -> Result<ImuRecording> {
    let fs = rec
        .sample_rate
        .ok_or_else(|| Error::Contract("low-pass filtering needs a uniformly sampled recording".into()))?;
    let filter = Biquad::butterworth_lowpass(cutoff_hz, fs)?;
    let axes: Vec<Vec<f64>> = (0..3)
        .map(|axis| filter.filtfilt(&rec.accel.iter().map(|a| a[axis]).collect::<Vec<_>>()))
        .collect();
    let accel = (0..rec.len()).map(|i| Vector3::new(axes[0][i], axes[1][i], axes[2][i])).collect();
    Ok(rec.with_accel(accel))
}

/// Parses reference events from CSV with header `t,kind,side`.
pub fn load_reference_events<R: Read>(source: R) -> Result<Vec<GaitEvent>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(source);
    let header = reader.headers().map_err(csv_io)?.clone();
    check_header(&header, &EVENT_HEADER)?;
    let mut events = Vec::new();
    for row in reader.records() {
        let row = row.map_err(csv_io)?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let parse_err = |e: Error| Error::Parse { line, message: e.to_string() };
        if row.len() != 3 {
            return Err(Error::Parse { line, message: format!("expected 3 fields, found {}", row.len()) });
        }
        let time_s = row[0]
            .parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| Error::Parse { line, message: format!("invalid time {:?}", &row[0]) })?;
        let kind: EventKind = row[1].parse().map_err(parse_err)?;
        let side: Side = row[2].parse().map_err(parse_err)?;
        events.push(GaitEvent::new(time_s, kind, side));
    }
    Ok(events)
}

pub fn load_reference_events_path(path: impl AsRef<Path>) -> Result<Vec<GaitEvent>> {
    load_reference_events(File::open(path)?)
}

pub fn write_reference_events<W: Write>(events: &[GaitEvent], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(EVENT_HEADER).map_err(csv_io)?;
    for e in events {
        w.write_record([e.time_s.to_string(), e.kind.code().to_string(), e.side.code().to_string()])
            .map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}
