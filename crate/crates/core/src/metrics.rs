//! Filtering efficiency, timestamp histograms, noise-floor estimation,
//! parameter sweeps and software throughput measurement.

use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, EvalError};
use crate::event::Event;
use crate::filter::{FilterDecision, FilterEngine};
use crate::noise::{generate_noise, merge_streams, NoiseSpec};
use crate::params::FilterParams;
use crate::pipeline::{CycleInput, PipelineConfig, PipelineSim};

/// Share of injected noise and of original events that survive filtering.
/// A fraction is `None` when its population is empty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub noise_remaining: Option<f64>,
    pub original_remaining: Option<f64>,
    pub total_noise: u64,
    pub total_original: u64,
    pub passed_noise: u64,
    pub passed_original: u64,
}

/// Counts passed events per ground-truth class.
pub fn evaluate(decisions: &[FilterDecision]) -> Result<EvalReport, EvalError> {
    let mut r = EvalReport {
        noise_remaining: None,
        original_remaining: None,
        total_noise: 0,
        total_original: 0,
        passed_noise: 0,
        passed_original: 0,
    };
    for (i, d) in decisions.iter().enumerate() {
        match d.event.label {
            Some(true) => {
                r.total_noise += 1;
                r.passed_noise += u64::from(d.pass);
            }
            Some(false) => {
                r.total_original += 1;
                r.passed_original += u64::from(d.pass);
            }
            None => return Err(EvalError::MissingLabel(i)),
        }
    }
    let frac = |num: u64, den: u64| (den > 0).then(|| num as f64 / den as f64);
    r.noise_remaining = frac(r.passed_noise, r.total_noise);
    r.original_remaining = frac(r.passed_original, r.total_original);
    Ok(r)
}

/// Formats a fraction with four decimals, or an empty field when absent.
pub fn format_fraction(f: Option<f64>) -> String {
    f.map(|v| format!("{v:.4}")).unwrap_or_default()
}

pub const EVAL_CSV_HEADER: &str =
    "noise_remaining,original_remaining,total_noise,passed_noise,total_original,passed_original";

impl EvalReport {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            format_fraction(self.noise_remaining),
            format_fraction(self.original_remaining),
            self.total_noise,
            self.passed_noise,
            self.total_original,
            self.passed_original
        )
    }
}

/// Event counts per fixed-width time bin, plus the noise-floor estimate
/// once [`HistogramReport::estimate_noise_floor`] has run.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramReport {
    pub bin_width: u64,
    /// Start of the first bin, a multiple of `bin_width`.
    pub first_bin_start: u64,
    pub counts: Vec<u64>,
    /// Bins excluded from the noise-floor mean as object motion.
    pub discarded: Vec<bool>,
    /// Mean noise events per µs over the retained bins.
    pub noise_rate_per_us: Option<f64>,
    /// Estimated noise count over total event count. A lower bound: noise
    /// inside motion bins is not counted.
    pub min_noise_fraction: Option<f64>,
}

pub const DEFAULT_BIN_WIDTH_US: u64 = 1000;

/// Bins `[k * bin_width, (k + 1) * bin_width)` covering the span from the
/// first to the last event. Events must be in timestamp order.
pub fn timestamp_histogram(events: &[Event], bin_width: u64) -> Result<HistogramReport, EvalError> {
    if bin_width == 0 {
        return Err(EvalError::BinWidth);
    }
    let (counts, first_bin_start) = match (events.first(), events.last()) {
        (Some(first), Some(last)) => {
            let lo = first.ts / bin_width;
            let hi = last.ts / bin_width;
            let mut counts = vec![0u64; (hi - lo + 1) as usize];
            for e in events {
                counts[(e.ts / bin_width - lo) as usize] += 1;
            }
            (counts, lo * bin_width)
        }
        _ => (Vec::new(), 0),
    };
    Ok(HistogramReport {
        bin_width,
        first_bin_start,
        discarded: vec![false; counts.len()],
        counts,
        noise_rate_per_us: None,
        min_noise_fraction: None,
    })
}

fn median(values: &[u64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_unstable();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2] as f64
    } else {
        (v[n / 2 - 1] + v[n / 2]) as f64 / 2.0
    }
}

impl HistogramReport {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Estimates how many events over `duration` µs are background noise.
    ///
    /// Bins above twice the median count are treated as object motion and
    /// dropped (one pass); the mean of the rest, scaled to `duration`, is
    /// the estimate. Fills `discarded`, `noise_rate_per_us` and
    /// `min_noise_fraction`.
    pub fn estimate_noise_floor(&mut self, duration: u64) -> Result<f64, EvalError> {
        if self.counts.is_empty() {
            return Err(EvalError::EmptyHistogram);
        }
        let cutoff = 2.0 * median(&self.counts);
        let mut kept = 0u64;
        let mut sum = 0u64;
        for (c, d) in self.counts.iter().zip(self.discarded.iter_mut()) {
            *d = *c as f64 > cutoff;
            if !*d {
                kept += 1;
                sum += c;
            }
        }
        if kept == 0 {
            return Err(EvalError::AllBinsDiscarded);
        }
        let mean = sum as f64 / kept as f64;
        let estimate = mean * duration as f64 / self.bin_width as f64;
        self.noise_rate_per_us = Some(mean / self.bin_width as f64);
        let total = self.total();
        self.min_noise_fraction = (total > 0).then(|| estimate / total as f64);
        Ok(estimate)
    }

    /// `bin_start_us,count` CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_start_us,count\n");
        for (i, c) in self.counts.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{}",
                self.first_bin_start + i as u64 * self.bin_width,
                c
            );
        }
        out
    }
}

/// Which engine [`bench_throughput`] drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EngineKind {
    Functional,
    Pipeline,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub events: usize,
    /// Events per second of each run.
    pub runs: Vec<f64>,
    pub median_eps: f64,
}

impl BenchReport {
    pub fn median_meps(&self) -> f64 {
        self.median_eps / 1e6
    }
}

/// Wall-clock throughput: one untimed warm-up run, then the median of
/// `runs` (at least 5) timed runs.
pub fn bench_throughput(
    kind: EngineKind,
    params: &FilterParams,
    events: &[Event],
    runs: usize,
) -> Result<BenchReport, Error> {
    let runs = runs.max(5);
    let once = || -> Result<f64, Error> {
        let start = Instant::now();
        let passed = match kind {
            EngineKind::Functional => {
                let mut engine = FilterEngine::new(*params)?;
                let mut passed = 0usize;
                for e in events {
                    passed += usize::from(engine.process_event(e)?.pass);
                }
                passed
            }
            EngineKind::Pipeline => {
                let config = PipelineConfig::new(pipeline_params(params));
                let run = PipelineSim::new(config)?.run_trace(&CycleInput::stream(events))?;
                run.outputs.iter().filter(|o| o.correct).count()
            }
        };
        std::hint::black_box(passed);
        let secs = start.elapsed().as_secs_f64().max(1e-9);
        Ok(events.len() as f64 / secs)
    };
    once()?;
    let samples = (0..runs).map(|_| once()).collect::<Result<Vec<_>, _>>()?;
    let mut sorted = samples.clone();
    sorted.sort_by(f64::total_cmp);
    let median_eps = sorted[runs / 2];
    Ok(BenchReport {
        events: events.len(),
        runs: samples,
        median_eps,
    })
}

/// The pipeline model only knows the per-packet update; any other policy
/// is mapped to it.
pub fn pipeline_params(params: &FilterParams) -> FilterParams {
    use crate::params::GlobalUpdatePolicy::*;
    let mut p = *params;
    if !matches!(p.global_update, PerPacket | Disabled) {
        p.global_update = PerPacket;
    }
    p
}

/// One cell of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub rate_per_ms: f64,
    pub params: FilterParams,
    pub report: EvalReport,
}

/// Seed used for the noise of one sweep rate.
pub fn sweep_seed(seed: u64, rate_per_ms: f64) -> u64 {
    seed ^ rate_per_ms.to_bits().rotate_left(17)
}

/// Injects noise at each rate into `base` (labelled originals), filters
/// with every parameter set and reports efficiency. Rows are ordered by
/// parameter set, then rate, regardless of the parallel schedule.
///
/// Noise spans `[first_ts, last_ts]` of `base`; the noise seed for each
/// rate comes from [`sweep_seed`], so rows do not depend on which other
/// rates are swept.
pub fn sweep(
    base: &[Event],
    rates_per_ms: &[f64],
    params_grid: &[FilterParams],
    seed: u64,
) -> Result<Vec<SweepRow>, Error> {
    let geometry = match params_grid.first() {
        Some(p) => p.geometry,
        None => return Ok(Vec::new()),
    };
    let (start, end) = match (base.first(), base.last()) {
        (Some(a), Some(b)) => (a.ts, b.ts + 1),
        _ => (0, 0),
    };
    let cells: Vec<(FilterParams, f64)> = params_grid
        .iter()
        .flat_map(|p| rates_per_ms.iter().map(move |&r| (*p, r)))
        .collect();
    cells
        .par_iter()
        .map(|&(params, rate)| {
            let noise = generate_noise(&NoiseSpec {
                rate_per_ms: rate,
                seed: sweep_seed(seed, rate),
                start,
                duration: end - start,
                geometry,
            });
            let stream = merge_streams(base, &noise)?;
            let mut engine = FilterEngine::new(params)?;
            let decisions = stream
                .iter()
                .map(|e| engine.process_event(e))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(SweepRow {
                rate_per_ms: rate,
                params,
                report: evaluate(&decisions)?,
            })
        })
        .collect()
}

pub const SWEEP_CSV_HEADER: &str = "noise_rate_ev_per_ms,noise_remaining,original_remaining";

/// Sweep table as CSV. When rows span several parameter sets, the
/// columns `scale,filter_length_us,update_factor_log2` are prepended.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let multi = rows.windows(2).any(|w| w[0].params != w[1].params);
    let mut out = String::new();
    if multi {
        out.push_str("scale,filter_length_us,update_factor_log2,");
    }
    out.push_str(SWEEP_CSV_HEADER);
    out.push('\n');
    for r in rows {
        if multi {
            let _ = write!(
                out,
                "{},{},{},",
                r.params.scale, r.params.filter_length, r.params.update_factor_log2
            );
        }
        let _ = writeln!(
            out,
            "{},{},{}",
            r.rate_per_ms,
            format_fraction(r.report.noise_remaining),
            format_fraction(r.report.original_remaining)
        );
    }
    out
}
