//! Labelled test inputs: uniform background noise and simple synthetic
//! scenes of moving discs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use crate::error::StreamError;
use crate::event::{validate_stream, Event, Geometry, Polarity};

/// Uniform random noise over the sensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    /// Mean events per millisecond over the whole sensor.
    pub rate_per_ms: f64,
    pub seed: u64,
    /// First timestamp of the noise window, µs.
    pub start: u64,
    /// Window length, µs. Events fall in `[start, start + duration)`.
    pub duration: u64,
    pub geometry: Geometry,
}

/// Noise events with arrival times from a homogeneous Poisson process,
/// pixels uniform over the sensor and a fair-coin polarity. Every event is
/// labelled as noise. Output is sorted and depends only on `spec`.
pub fn generate_noise(spec: &NoiseSpec) -> Vec<Event> {
    if spec.rate_per_ms <= 0.0 || spec.duration == 0 {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let per_us = spec.rate_per_ms / 1000.0;
    let gaps = Exp::new(per_us).expect("positive rate");
    let expected = (per_us * spec.duration as f64) as usize;
    let mut out = Vec::with_capacity(expected + expected / 16 + 16);
    let mut t = 0.0f64;
    loop {
        t += gaps.sample(&mut rng);
        if t >= spec.duration as f64 {
            break;
        }
        let x = rng.random_range(0..spec.geometry.width);
        let y = rng.random_range(0..spec.geometry.height);
        let polarity = Polarity::from_bit(rng.random_bool(0.5));
        out.push(Event::new(spec.start + t as u64, x, y, polarity).with_label(true));
    }
    out
}

/// Merges two timestamp-ordered streams. On equal timestamps events from
/// `original` come first.
pub fn merge_streams(original: &[Event], noise: &[Event]) -> Result<Vec<Event>, StreamError> {
    check_monotone(original)?;
    check_monotone(noise)?;
    let mut out = Vec::with_capacity(original.len() + noise.len());
    let (mut a, mut b) = (original.iter().peekable(), noise.iter().peekable());
    loop {
        match (a.peek(), b.peek()) {
            (Some(x), Some(y)) => {
                if x.ts <= y.ts {
                    out.push(*a.next().unwrap());
                } else {
                    out.push(*b.next().unwrap());
                }
            }
            (Some(_), None) => out.extend(a.by_ref().copied()),
            (None, Some(_)) => out.extend(b.by_ref().copied()),
            (None, None) => break,
        }
    }
    Ok(out)
}

fn check_monotone(events: &[Event]) -> Result<(), StreamError> {
    // bounds are the caller's concern; use the widest geometry
    validate_stream(events, Geometry::new(u16::MAX, u16::MAX))
}

/// A disc moving at constant velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneObject {
    /// Centre at `appear_us`, pixels.
    pub start: (f64, f64),
    /// Pixels per millisecond.
    pub velocity: (f64, f64),
    pub radius: f64,
    /// Mean events emitted each time the silhouette edge crosses a pixel.
    pub density: f64,
    /// Lifetime of the object, µs. Outside it the object is absent.
    pub appear_us: u64,
    pub vanish_us: u64,
}

impl SceneObject {
    pub fn new(start: (f64, f64), velocity: (f64, f64), radius: f64) -> Self {
        SceneObject {
            start,
            velocity,
            radius,
            density: 1.0,
            appear_us: 0,
            vanish_us: u64::MAX,
        }
    }

    pub fn with_density(mut self, density: f64) -> Self {
        self.density = density;
        self
    }

    pub fn with_lifetime(mut self, appear_us: u64, vanish_us: u64) -> Self {
        self.appear_us = appear_us;
        self.vanish_us = vanish_us;
        self
    }

    /// Centre at time `t` µs.
    pub fn center(&self, t: u64) -> (f64, f64) {
        let dt_ms = (t as f64 - self.appear_us as f64) / 1000.0;
        (
            self.start.0 + self.velocity.0 * dt_ms,
            self.start.1 + self.velocity.1 * dt_ms,
        )
    }

    fn alive(&self, t: u64) -> bool {
        t >= self.appear_us && t < self.vanish_us
    }

    fn covers(&self, t: u64, px: f64, py: f64) -> bool {
        if !self.alive(t) {
            return false;
        }
        let (cx, cy) = self.center(t);
        (px - cx).powi(2) + (py - cy).powi(2) <= self.radius * self.radius
    }

    fn speed(&self) -> f64 {
        self.velocity.0.hypot(self.velocity.1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub geometry: Geometry,
    pub objects: Vec<SceneObject>,
    pub duration: u64,
    pub seed: u64,
}

/// Discs dropping through the sensor: `n` objects of radius 6..14 px that
/// appear at random times in the first half of the recording near the top
/// edge and fall at 2..6 px/ms with a slight sideways drift.
pub fn falling_balls(geometry: Geometry, n: usize, duration: u64, seed: u64) -> SceneSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (f64::from(geometry.width), f64::from(geometry.height));
    let objects = (0..n)
        .map(|_| {
            let start = (
                rng.random_range(w / 16.0..w * 15.0 / 16.0),
                rng.random_range(-20.0..h * 5.0 / 24.0),
            );
            let velocity = (rng.random_range(-0.5..0.5), rng.random_range(2.0..6.0));
            let radius = rng.random_range(6.0..14.0);
            let appear = rng.random_range(0..(duration / 2).max(1));
            SceneObject::new(start, velocity, radius)
                .with_density(2.0)
                .with_lifetime(appear, duration)
        })
        .collect();
    SceneSpec {
        geometry,
        objects,
        duration,
        seed,
    }
}

/// Longest time step of the silhouette sweep, µs.
const MAX_STEP_US: u64 = 1000;

/// Events of moving discs over a static background.
///
/// Time advances in steps short enough that no silhouette moves more than
/// half a pixel per step. A pixel whose covered/uncovered status flips
/// within a step emits on average `density` events at uniformly drawn
/// times inside that step: polarity `Increase` when a disc arrives,
/// `Decrease` when it leaves. Pixels outside the sensor are clipped. A
/// motionless disc emits nothing once present.
pub fn generate_scene(spec: &SceneSpec) -> Vec<Event> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let fastest = spec
        .objects
        .iter()
        .map(SceneObject::speed)
        .fold(0.0, f64::max);
    let step = if fastest > 0.0 {
        ((500.0 / fastest) as u64).clamp(1, MAX_STEP_US)
    } else {
        MAX_STEP_US
    };
    let (w, h) = (spec.geometry.width, spec.geometry.height);
    let mut out = Vec::new();
    let mut batch = Vec::new();
    let mut t = 0;
    while t < spec.duration {
        let t_next = (t + step).min(spec.duration);
        batch.clear();
        for obj in &spec.objects {
            if !obj.alive(t) && !obj.alive(t_next) {
                continue;
            }
            // bounding box of both silhouettes
            let (c0, c1) = (obj.center(t), obj.center(t_next));
            let r = obj.radius + 1.0;
            let x_lo = (c0.0.min(c1.0) - r).floor().max(0.0) as i64;
            let x_hi = (c0.0.max(c1.0) + r).ceil().min(f64::from(w) - 1.0) as i64;
            let y_lo = (c0.1.min(c1.1) - r).floor().max(0.0) as i64;
            let y_hi = (c0.1.max(c1.1) + r).ceil().min(f64::from(h) - 1.0) as i64;
            for py in y_lo..=y_hi {
                for px in x_lo..=x_hi {
                    let (fx, fy) = (px as f64, py as f64);
                    let before = obj.covers(t, fx, fy);
                    let after = obj.covers(t_next, fx, fy);
                    if before == after {
                        continue;
                    }
                    let polarity = Polarity::from_bit(after);
                    let whole = obj.density.floor();
                    let n = whole as u32 + u32::from(rng.random_bool(obj.density - whole));
                    for _ in 0..n {
                        let ts = rng.random_range(t..t_next);
                        batch
                            .push(Event::new(ts, px as u16, py as u16, polarity).with_label(false));
                    }
                }
            }
        }
        batch.sort_by_key(|e| e.ts);
        out.extend_from_slice(&batch);
        t = t_next;
    }
    out
}
