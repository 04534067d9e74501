//! Gait event types shared by detection, evaluation, and the synthetic oracle.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EventKind {
    /// Heel strike.
    #[serde(rename = "IC")]
    InitialContact,
    /// Toe off.
    #[serde(rename = "FC")]
    FinalContact,
}

impl EventKind {
    pub const ALL: [EventKind; 2] = [EventKind::InitialContact, EventKind::FinalContact];

    pub fn code(self) -> &'static str {
        match self {
            EventKind::InitialContact => "IC",
            EventKind::FinalContact => "FC",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for EventKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "IC" => Ok(EventKind::InitialContact),
            "FC" => Ok(EventKind::FinalContact),
            other => Err(Error::Contract(format!("unknown event kind {other:?}, expected IC or FC"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    #[serde(rename = "L")]
    Left,
    #[serde(rename = "R")]
    Right,
    #[serde(rename = "U")]
    Unknown,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
            Side::Unknown => Side::Unknown,
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            Side::Left => "L",
            Side::Right => "R",
            Side::Unknown => "U",
        }
    }
}

impl FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "L" => Ok(Side::Left),
            "R" => Ok(Side::Right),
            "U" => Ok(Side::Unknown),
            other => Err(Error::Contract(format!("unknown side {other:?}, expected L, R or U"))),
        }
    }
}

/// A detected or reference gait event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaitEvent {
    pub time_s: f64,
    pub kind: EventKind,
    pub side: Side,
    /// Magnitude of the wavelet extremum that produced the event; used to
    /// pick the stronger of two implausibly close detections.
    #[serde(skip)]
    pub strength: f64,
}

impl GaitEvent {
    pub fn new(time_s: f64, kind: EventKind, side: Side) -> Self {
        Self { time_s, kind, side, strength: 0.0 }
    }
}

/// Times of the events of one kind, in input order.
pub fn times_of(events: &[GaitEvent], kind: EventKind) -> Vec<f64> {
    events.iter().filter(|e| e.kind == kind).map(|e| e.time_s).collect()
}
