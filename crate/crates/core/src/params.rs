//! Filter configuration, area grid arithmetic and storage accounting.

use std::fmt;
use std::str::FromStr;

use crate::error::ParamError;
use crate::event::Geometry;

/// When inactive areas are relaxed toward the current time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GlobalUpdatePolicy {
    /// Fire each time the latest timestamp crosses the next multiple of
    /// `period_us` past the previous update.
    ByTime {
        period_us: u64,
    },
    /// Fire after every `n` processed events.
    ByEventCount(u64),
    /// Fire after each event flagged `packet_last`.
    PerPacket,
    Disabled,
}

impl fmt::Display for GlobalUpdatePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GlobalUpdatePolicy::ByTime { period_us } => write!(f, "time:{period_us}"),
            GlobalUpdatePolicy::ByEventCount(n) => write!(f, "count:{n}"),
            GlobalUpdatePolicy::PerPacket => f.write_str("packet"),
            GlobalUpdatePolicy::Disabled => f.write_str("none"),
        }
    }
}

impl FromStr for GlobalUpdatePolicy {
    type Err = String;

    /// Accepts `none`, `packet`, `time:<us>` and `count:<n>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parse_num = |v: &str| {
            v.parse::<u64>()
                .map_err(|e| format!("invalid number {v:?} in global update policy: {e}"))
        };
        match s.split_once(':') {
            None if s == "none" => Ok(GlobalUpdatePolicy::Disabled),
            None if s == "packet" => Ok(GlobalUpdatePolicy::PerPacket),
            Some(("time", v)) => Ok(GlobalUpdatePolicy::ByTime {
                period_us: parse_num(v)?,
            }),
            Some(("count", v)) => Ok(GlobalUpdatePolicy::ByEventCount(parse_num(v)?)),
            _ => Err(format!(
                "unknown global update policy {s:?} (expected none, packet, time:<us> or count:<n>)"
            )),
        }
    }
}

/// Initial value of every area state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum InitState {
    /// All states start at 0, the block-memory reset value.
    #[default]
    Zero,
    /// All states are set to the first event's timestamp when it arrives.
    FirstEventTs,
}

impl FromStr for InitState {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "zero" => Ok(InitState::Zero),
            "first-ts" => Ok(InitState::FirstEventTs),
            _ => Err(format!(
                "unknown init state {s:?} (expected zero or first-ts)"
            )),
        }
    }
}

/// Dimensions of the area grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Grid {
    pub cells_x: usize,
    pub cells_y: usize,
}

impl Grid {
    /// Grid covering `geometry` with square areas of side `scale`; edge
    /// areas on non-multiple geometries are partial.
    pub fn covering(geometry: Geometry, scale: u32) -> Self {
        Grid {
            cells_x: usize::from(geometry.width).div_ceil(scale as usize),
            cells_y: usize::from(geometry.height).div_ceil(scale as usize),
        }
    }

    pub fn len(&self) -> usize {
        self.cells_x * self.cells_y
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row-major address of an area.
    #[inline]
    pub fn address(&self, x_cell: usize, y_cell: usize) -> usize {
        y_cell * self.cells_x + x_cell
    }
}

/// Area coordinates of a pixel: `floor(x / scale)`, `floor(y / scale)`,
/// computed as a right shift. `scale` must be a power of two.
#[inline]
pub fn cell_of(x: u16, y: u16, scale: u32) -> (usize, usize) {
    debug_assert!(scale.is_power_of_two());
    let shift = scale.trailing_zeros();
    (usize::from(x) >> shift, usize::from(y) >> shift)
}

/// Complete filter configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FilterParams {
    pub geometry: Geometry,
    /// Area side length in pixels.
    pub scale: u32,
    /// Maximum accepted distance between an event and its area state, µs.
    pub filter_length: u64,
    /// `k` in `update factor = 2^-k`.
    pub update_factor_log2: u8,
    pub global_update: GlobalUpdatePolicy,
    pub init_state: InitState,
}

impl FilterParams {
    pub const DEFAULT_SCALE: u32 = 16;
    pub const DEFAULT_FILTER_LENGTH: u64 = 200;
    pub const DEFAULT_UPDATE_FACTOR_LOG2: u8 = 2;

    /// Defaults: 16x16 areas, 200 µs filter length, update factor 1/4,
    /// no global update, zero-initialised states.
    pub fn new(geometry: Geometry) -> Self {
        FilterParams {
            geometry,
            scale: Self::DEFAULT_SCALE,
            filter_length: Self::DEFAULT_FILTER_LENGTH,
            update_factor_log2: Self::DEFAULT_UPDATE_FACTOR_LOG2,
            global_update: GlobalUpdatePolicy::Disabled,
            init_state: InitState::Zero,
        }
    }

    pub fn with_scale(mut self, scale: u32) -> Self {
        self.scale = scale;
        self
    }

    pub fn with_filter_length(mut self, us: u64) -> Self {
        self.filter_length = us;
        self
    }

    pub fn with_update_factor_log2(mut self, k: u8) -> Self {
        self.update_factor_log2 = k;
        self
    }

    pub fn with_global_update(mut self, policy: GlobalUpdatePolicy) -> Self {
        self.global_update = policy;
        self
    }

    pub fn with_init_state(mut self, init: InitState) -> Self {
        self.init_state = init;
        self
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        let Geometry { width, height } = self.geometry;
        if width == 0 || height == 0 {
            return Err(ParamError::EmptyGeometry { width, height });
        }
        if !self.scale.is_power_of_two() || self.scale > 256 {
            return Err(ParamError::Scale(self.scale));
        }
        if !(1..=8).contains(&self.update_factor_log2) {
            return Err(ParamError::UpdateFactor(self.update_factor_log2));
        }
        if self.filter_length == 0 {
            return Err(ParamError::FilterLength);
        }
        match self.global_update {
            GlobalUpdatePolicy::ByTime { period_us: 0 } => Err(ParamError::GlobalUpdate("period")),
            GlobalUpdatePolicy::ByEventCount(0) => Err(ParamError::GlobalUpdate("event count")),
            _ => Ok(()),
        }
    }

    pub fn grid(&self) -> Grid {
        Grid::covering(self.geometry, self.scale)
    }
}

/// Bits needed to hold one state of `state_bits` per `area_side`-square
/// area over a `width` x `height` sensor. Any positive side is accepted
/// here, not only powers of two, so configurations outside the filter's
/// own constraints can be sized for comparison.
pub fn storage_bits(width: u32, height: u32, area_side: u32, state_bits: u32) -> u64 {
    assert!(area_side > 0, "area side must be positive");
    let cx = u64::from(width.div_ceil(area_side));
    let cy = u64::from(height.div_ceil(area_side));
    cx * cy * u64::from(state_bits)
}

/// Storage of a per-pixel timestamp map, the usual baseline for
/// correlation filters.
pub fn per_pixel_storage_bits(width: u32, height: u32, state_bits: u32) -> u64 {
    storage_bits(width, height, 1, state_bits)
}

/// Event size commonly assumed when sizing sensor links.
pub const NOMINAL_EVENT_BYTES: u64 = 8;

/// Raw link bandwidth for a given event rate and per-event size.
pub fn stream_bytes_per_second(events_per_second: f64, bytes_per_event: u64) -> f64 {
    events_per_second * bytes_per_event as f64
}
