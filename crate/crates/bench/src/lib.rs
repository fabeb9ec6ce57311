//! Workloads shared by the criterion benches.

use evfilt::noise::{falling_balls, generate_noise, generate_scene, merge_streams, NoiseSpec};
use evfilt::{packetize, Event, Geometry};

pub const GEOMETRY: Geometry = Geometry::new(640, 480);

/// Falling-balls scene plus uniform noise at `rate_per_ms`, trimmed to
/// at most `max_events`. Packets close every 4096 events so the
/// per-packet global update is exercised too.
pub fn workload(duration_us: u64, rate_per_ms: f64, max_events: usize) -> Vec<Event> {
    let scene = generate_scene(&falling_balls(GEOMETRY, 12, duration_us, 1));
    let noise = generate_noise(&NoiseSpec {
        rate_per_ms,
        seed: 2,
        start: 0,
        duration: duration_us,
        geometry: GEOMETRY,
    });
    let mut events = merge_streams(&scene, &noise).expect("generated streams are sorted");
    events.truncate(max_events);
    packetize(&events, 4096)
}
