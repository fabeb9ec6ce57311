//! Shared helpers for the integration and acceptance tests: an independent
//! straight-line filter model, random stream and cycle-script generators,
//! and (in [`props`]) the property checks shared by the property suite
//! and the acceptance runner.

#![allow(dead_code)]

pub mod props;

use evfilt::pipeline::{CycleInput, PipelineConfig, PipelineSim};
use evfilt::{
    filter_stream, Event, FilterParams, Geometry, GlobalUpdatePolicy, InitState, Polarity,
    SceneSpec,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Result of the straight-line model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleRun {
    pub pass: Vec<bool>,
    pub diff: Vec<i128>,
    /// Row-major final states.
    pub states: Vec<u64>,
    pub active: Vec<bool>,
    pub last_ts: u64,
}

/// The filter written out directly: floor division for the area, floor
/// division by `2^k` for the blend, explicit nested loops for the global
/// update. Shares no code with the library apart from reading `params`.
pub fn oracle(events: &[Event], params: &FilterParams) -> OracleRun {
    let scale = params.scale as i64;
    let cols = (params.geometry.width as i64 + scale - 1) / scale;
    let rows = (params.geometry.height as i64 + scale - 1) / scale;
    let divisor = 1i128 << params.update_factor_log2;
    let blend = |thr: u64, ts: u64| -> u64 {
        let diff = ts as i128 - thr as i128;
        (thr as i128 + diff.div_euclid(divisor)) as u64
    };
    let mut time_map = vec![vec![0u64; cols as usize]; rows as usize];
    let mut active_map = vec![vec![false; cols as usize]; rows as usize];
    let mut last_ts = 0u64;
    let mut count = 0u64;
    let mut last_update = 0u64;
    let mut out = OracleRun {
        pass: Vec::with_capacity(events.len()),
        diff: Vec::with_capacity(events.len()),
        states: Vec::new(),
        active: Vec::new(),
        last_ts: 0,
    };

    for (index, event) in events.iter().enumerate() {
        if index == 0 && params.init_state == InitState::FirstEventTs {
            for row in time_map.iter_mut() {
                for s in row.iter_mut() {
                    *s = event.ts;
                }
            }
            last_update = event.ts;
        }
        let x_cell = (event.x as i64 / scale) as usize;
        let y_cell = (event.y as i64 / scale) as usize;
        let thr_ts = time_map[y_cell][x_cell];
        let diff_ts = event.ts as i128 - thr_ts as i128;
        out.pass.push(diff_ts < params.filter_length as i128);
        out.diff.push(diff_ts);
        time_map[y_cell][x_cell] = blend(thr_ts, event.ts);
        active_map[y_cell][x_cell] = true;
        last_ts = event.ts;
        count += 1;

        let fire = match params.global_update {
            GlobalUpdatePolicy::Disabled => false,
            GlobalUpdatePolicy::PerPacket => event.packet_last,
            GlobalUpdatePolicy::ByEventCount(n) => count >= n,
            GlobalUpdatePolicy::ByTime { period_us } => {
                let mut fired = false;
                while last_ts - last_update >= period_us {
                    last_update += period_us;
                    fired = true;
                }
                fired
            }
        };
        if fire {
            for y in 0..rows as usize {
                for x in 0..cols as usize {
                    if !active_map[y][x] {
                        time_map[y][x] = blend(time_map[y][x], last_ts);
                    }
                    active_map[y][x] = false;
                }
            }
            count = 0;
        }
    }
    out.states = time_map.into_iter().flatten().collect();
    out.active = active_map.into_iter().flatten().collect();
    out.last_ts = last_ts;
    out
}

/// Knobs for [`random_stream`].
#[derive(Debug, Clone, Copy)]
pub struct StreamShape {
    /// Probability that the next event starts a same-area burst.
    pub burst_prob: f64,
    pub max_burst: usize,
    /// Probability of a long idle gap before the next event.
    pub idle_prob: f64,
    pub max_idle_us: u64,
    /// Mean gap between ordinary events, µs.
    pub mean_gap_us: u64,
    /// Probability that an event closes a packet.
    pub packet_prob: f64,
}

impl Default for StreamShape {
    fn default() -> Self {
        StreamShape {
            burst_prob: 0.05,
            max_burst: 40,
            idle_prob: 0.002,
            max_idle_us: 50_000,
            mean_gap_us: 20,
            packet_prob: 0.01,
        }
    }
}

/// A valid random stream mixing uniform events, same-area bursts (zero
/// and one µs spacing), long idle gaps and packet boundaries.
pub fn random_stream(seed: u64, n: usize, geometry: Geometry, shape: StreamShape) -> Vec<Event> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    let mut ts = rng.random_range(0..10_000u64);
    while out.len() < n {
        if rng.random_bool(shape.idle_prob) {
            ts += rng.random_range(0..=shape.max_idle_us);
        }
        let x = rng.random_range(0..geometry.width);
        let y = rng.random_range(0..geometry.height);
        let burst = if rng.random_bool(shape.burst_prob) {
            rng.random_range(2..=shape.max_burst.max(2))
        } else {
            1
        };
        for _ in 0..burst.min(n - out.len()) {
            ts += match rng.random_range(0..4) {
                0 => 0,
                1 => 1,
                _ => rng.random_range(0..=2 * shape.mean_gap_us),
            };
            let polarity = Polarity::from_bit(rng.random_bool(0.5));
            let e =
                Event::new(ts, x, y, polarity).with_packet_last(rng.random_bool(shape.packet_prob));
            out.push(e);
        }
    }
    out
}

/// Cycle script for `events` with random idle beats and downstream stall
/// runs. `tuser` numbers the events so reordering would be visible.
pub fn random_script(
    seed: u64,
    events: &[Event],
    idle_prob: f64,
    stall_prob: f64,
) -> Vec<CycleInput> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut script = Vec::with_capacity(events.len() + events.len() / 4);
    let mut stall_left = 0u32;
    let mut ready = || {
        if stall_left == 0 && rng.random_bool(stall_prob) {
            stall_left = rng.random_range(1..=12);
        }
        if stall_left > 0 {
            stall_left -= 1;
            false
        } else {
            true
        }
    };
    let mut rng2 = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for (i, e) in events.iter().enumerate() {
        while rng2.random_bool(idle_prob) {
            script.push(CycleInput::idle(ready()));
        }
        let mut beat = CycleInput::event(*e, ready());
        beat.tuser = i as u32;
        script.push(beat);
    }
    script
}

/// Runs both engines and reports the first disagreement, if any. The
/// script's `tuser` must number the events from 0.
pub fn pipeline_matches_core(params: &FilterParams, script: &[CycleInput]) -> Result<(), String> {
    let events: Vec<Event> = script
        .iter()
        .filter(|c| c.tvalid)
        .map(|c| c.tdata.with_packet_last(c.tlast))
        .collect();
    let run = PipelineSim::new(PipelineConfig::new(*params))
        .map_err(|e| e.to_string())?
        .run_trace(script)
        .map_err(|e| e.to_string())?;
    let (decisions, map) = filter_stream(&events, params).map_err(|e| e.to_string())?;
    if run.outputs.len() != decisions.len() {
        return Err(format!(
            "{} outputs for {} events",
            run.outputs.len(),
            decisions.len()
        ));
    }
    for (i, (o, d)) in run.outputs.iter().zip(&decisions).enumerate() {
        if o.event != d.event || o.correct != d.pass || o.tuser as usize != i {
            return Err(format!("event {i}: pipeline {o:?}, core {d:?}"));
        }
    }
    if run.map != map {
        return Err("final time maps differ".into());
    }
    if run.trace.stats.collisions != 0 {
        return Err(format!(
            "{} read/write collisions",
            run.trace.stats.collisions
        ));
    }
    Ok(())
}

/// The 640×480 falling-balls scene used by the efficiency checks.
pub fn ball_scene(n: usize, duration: u64, seed: u64) -> SceneSpec {
    evfilt::noise::falling_balls(Geometry::new(640, 480), n, duration, seed)
}
