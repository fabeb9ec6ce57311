//! Functional reference filter: per-event verification against the area
//! state, the IIR state update and the global update of idle areas.
//!
//! All arithmetic is integer. The state update is
//! `state + ((ts - state) >> k)` on the signed difference, which is the
//! fixed-point form of `state * (1 - 2^-k) + ts * 2^-k`. The pipeline model
//! in [`crate::pipeline`] must agree with this module bit for bit.

use crate::error::{Error, StreamError};
use crate::event::{check_event, Event, Geometry};
use crate::params::{FilterParams, GlobalUpdatePolicy, Grid, InitState};
use crate::timemap::TimeMap;

/// One IIR step: moves `state` toward `ts` by `2^-k` of the signed gap,
/// truncating toward negative infinity.
#[inline]
pub fn iir_update(state: u64, ts: u64, k: u8) -> u64 {
    let diff = i128::from(ts) - i128::from(state);
    // |diff >> k| <= |diff|, so the result lies between state and ts.
    (i128::from(state) + (diff >> k)) as u64
}

/// Verdict for one event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FilterDecision {
    pub event: Event,
    /// `true` when the event is forwarded, `false` when classified as noise.
    pub pass: bool,
    /// `event.ts - state` before the update.
    pub diff_ts: i128,
}

/// A single-writer filter instance owning its time map.
#[derive(Debug, Clone)]
pub struct FilterEngine {
    params: FilterParams,
    grid: Grid,
    shift: u32,
    map: TimeMap,
    events_since_update: u64,
    time_of_last_update: u64,
    processed: u64,
    global_updates: u64,
}

impl FilterEngine {
    pub fn new(params: FilterParams) -> Result<Self, Error> {
        params.validate()?;
        let grid = params.grid();
        Ok(FilterEngine {
            params,
            grid,
            shift: params.scale.trailing_zeros(),
            map: TimeMap::new(grid),
            events_since_update: 0,
            time_of_last_update: 0,
            processed: 0,
            global_updates: 0,
        })
    }

    pub fn params(&self) -> &FilterParams {
        &self.params
    }

    pub fn map(&self) -> &TimeMap {
        &self.map
    }

    pub fn into_map(self) -> TimeMap {
        self.map
    }

    pub fn processed(&self) -> u64 {
        self.processed
    }

    pub fn events_since_update(&self) -> u64 {
        self.events_since_update
    }

    pub fn time_of_last_update(&self) -> u64 {
        self.time_of_last_update
    }

    /// Number of global updates run so far, by policy or by hand.
    pub fn global_updates(&self) -> u64 {
        self.global_updates
    }

    #[inline]
    fn address(&self, e: &Event) -> usize {
        let xc = usize::from(e.x) >> self.shift;
        let yc = usize::from(e.y) >> self.shift;
        self.grid.address(xc, yc)
    }

    /// Classifies `e` against its area state, updates that state and the
    /// activity flag, then runs the global update if the policy fires.
    ///
    /// Fails without touching the engine when `e` is off-sensor or older
    /// than the previous event; the error index is the number of events
    /// processed so far.
    pub fn process_event(&mut self, e: &Event) -> Result<FilterDecision, StreamError> {
        check_event(self.map.last_ts, e, self.params.geometry)
            .map_err(|err| err.with_index(self.processed as usize))?;

        if self.processed == 0 && self.params.init_state == InitState::FirstEventTs {
            self.map.fill(e.ts);
            self.time_of_last_update = e.ts;
        }

        let addr = self.address(e);
        let k = self.params.update_factor_log2;
        let state = self.map.states()[addr];
        let diff_ts = i128::from(e.ts) - i128::from(state);
        let pass = diff_ts < i128::from(self.params.filter_length);

        self.map.states_mut()[addr] = iir_update(state, e.ts, k);
        self.map.active_mut()[addr] = true;
        self.map.last_ts = e.ts;
        self.processed += 1;
        self.events_since_update += 1;

        match self.params.global_update {
            GlobalUpdatePolicy::ByTime { period_us } => {
                let elapsed = e.ts - self.time_of_last_update;
                if elapsed >= period_us {
                    self.relax_inactive();
                    // keep the update grid phase-locked to its origin
                    self.time_of_last_update += elapsed / period_us * period_us;
                }
            }
            GlobalUpdatePolicy::ByEventCount(n) => {
                if self.events_since_update >= n {
                    self.relax_inactive();
                }
            }
            GlobalUpdatePolicy::PerPacket => {
                if e.packet_last {
                    self.relax_inactive();
                }
            }
            GlobalUpdatePolicy::Disabled => {}
        }

        Ok(FilterDecision {
            event: *e,
            pass,
            diff_ts,
        })
    }

    /// Relaxes every area that saw no event since the previous global
    /// update toward the latest timestamp, leaves active areas untouched,
    /// then clears all flags. Returns the number of areas modified.
    pub fn run_global_update(&mut self) -> usize {
        let modified = self.relax_inactive();
        self.time_of_last_update = self.map.last_ts;
        modified
    }

    fn relax_inactive(&mut self) -> usize {
        let k = self.params.update_factor_log2;
        let now = self.map.last_ts;
        let mut modified = 0;
        let (states, active) = self.map.parts_mut();
        for (state, flag) in states.iter_mut().zip(active.iter_mut()) {
            if !*flag {
                *state = iir_update(*state, now, k);
                modified += 1;
            }
            *flag = false;
        }
        self.events_since_update = 0;
        self.global_updates += 1;
        modified
    }
}

/// Filters a whole stream with a fresh engine. The first invalid event
/// aborts the run and no partial results are returned.
pub fn filter_stream(
    events: &[Event],
    params: &FilterParams,
) -> Result<(Vec<FilterDecision>, TimeMap), Error> {
    let mut engine = FilterEngine::new(*params)?;
    let mut decisions = Vec::with_capacity(events.len());
    for e in events {
        decisions.push(engine.process_event(e)?);
    }
    Ok((decisions, engine.into_map()))
}

/// Longest burst `discard_curve` feeds before giving up on a pass.
pub const MAX_BURST: u64 = 1 << 20;

/// Number of events rejected at the start of a same-area burst, as a
/// function of how long the area sat idle.
///
/// For each idle time `T` a fresh engine warms one area with events at a
/// fixed timestamp `t0` until its state settles, waits `T` µs measured from
/// that settled state, then feeds a burst spaced `burst_spacing` µs apart
/// and counts rejections before the first pass (capped at [`MAX_BURST`]).
///
/// The engine is event-driven, so under [`GlobalUpdatePolicy::ByTime`] the
/// idle interval is populated with one event in a neighbouring area at each
/// update tick strictly before the burst; `t0` sits on the tick grid. Other
/// policies see no activity during the idle interval.
pub fn discard_curve(
    params: &FilterParams,
    idle_times: &[u64],
    burst_spacing: u64,
) -> Result<Vec<(u64, u64)>, Error> {
    params.validate()?;
    let scale = params.scale;
    let mut local = *params;
    // target area (0, 0) and one neighbour carrying the clock activity
    local.geometry = Geometry::new((2 * scale) as u16, scale as u16);
    let burst_spacing = burst_spacing.max(1);
    let period = match params.global_update {
        GlobalUpdatePolicy::ByTime { period_us } => Some(period_us),
        _ => None,
    };
    let t0 = 16 * period.unwrap_or(params.filter_length);
    let target = |ts| Event::new(ts, 0, 0, Default::default());
    let neighbour = |ts| Event::new(ts, scale as u16, 0, Default::default());

    idle_times
        .iter()
        .map(|&idle| {
            let mut engine = FilterEngine::new(local)?;
            let mut prev = u64::MAX;
            for _ in 0..256 {
                engine.process_event(&target(t0))?;
                let s = engine.map().state(0, 0);
                if s == prev {
                    break;
                }
                prev = s;
            }
            let residual = t0 - engine.map().state(0, 0);
            let arrival = t0 + idle.saturating_sub(residual);

            if let Some(p) = period {
                let mut tick = t0 + p;
                while tick < arrival {
                    engine.process_event(&neighbour(tick))?;
                    tick += p;
                }
            }

            let mut rejected = 0;
            let mut ts = arrival;
            while rejected < MAX_BURST {
                if engine.process_event(&target(ts))?.pass {
                    break;
                }
                rejected += 1;
                ts += burst_spacing;
            }
            Ok((idle, rejected))
        })
        .collect()
}
