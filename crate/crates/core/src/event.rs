//! Sensor events and stream validity.

use crate::error::StreamError;

/// Sign of the brightness change that produced an event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Polarity {
    #[default]
    Decrease,
    Increase,
}

impl Polarity {
    pub fn from_bit(bit: bool) -> Self {
        if bit {
            Polarity::Increase
        } else {
            Polarity::Decrease
        }
    }

    pub fn bit(self) -> u8 {
        match self {
            Polarity::Decrease => 0,
            Polarity::Increase => 1,
        }
    }
}

/// Sensor resolution in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Geometry {
    pub width: u16,
    pub height: u16,
}

impl Geometry {
    pub const fn new(width: u16, height: u16) -> Self {
        Geometry { width, height }
    }

    #[inline]
    pub fn contains(&self, x: u16, y: u16) -> bool {
        x < self.width && y < self.height
    }

    pub fn pixels(&self) -> u64 {
        u64::from(self.width) * u64::from(self.height)
    }
}

/// One sensor event.
///
/// `label` is the optional ground truth used by the evaluation harness
/// (`Some(true)` marks injected noise). `packet_last` marks the final event
/// of a transport packet and drives the per-packet global update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Event {
    pub ts: u64,
    pub x: u16,
    pub y: u16,
    pub polarity: Polarity,
    pub label: Option<bool>,
    pub packet_last: bool,
}

impl Event {
    pub fn new(ts: u64, x: u16, y: u16, polarity: Polarity) -> Self {
        Event {
            ts,
            x,
            y,
            polarity,
            label: None,
            packet_last: false,
        }
    }

    pub fn with_label(mut self, noise: bool) -> Self {
        self.label = Some(noise);
        self
    }

    pub fn with_packet_last(mut self, last: bool) -> Self {
        self.packet_last = last;
        self
    }

    pub fn is_noise(&self) -> Option<bool> {
        self.label
    }
}

/// Checks a single event against the previous timestamp and the geometry.
/// The returned error carries index 0; callers re-index it.
#[inline]
pub(crate) fn check_event(prev_ts: u64, e: &Event, geometry: Geometry) -> Result<(), StreamError> {
    if !geometry.contains(e.x, e.y) {
        return Err(StreamError::Bounds {
            index: 0,
            x: e.x,
            y: e.y,
            width: geometry.width,
            height: geometry.height,
        });
    }
    if e.ts < prev_ts {
        return Err(StreamError::Monotonicity {
            index: 0,
            prev: prev_ts,
            ts: e.ts,
        });
    }
    Ok(())
}

/// Confirms timestamps are non-decreasing and every coordinate lies on the
/// sensor. Reports the first offending index.
pub fn validate_stream(events: &[Event], geometry: Geometry) -> Result<(), StreamError> {
    let mut prev = 0;
    for (i, e) in events.iter().enumerate() {
        check_event(prev, e, geometry).map_err(|err| err.with_index(i))?;
        prev = e.ts;
    }
    Ok(())
}
