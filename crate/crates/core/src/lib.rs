//! Background-activity noise filtering for event camera streams with a
//! matrix of per-area IIR filters.
//!
//! The sensor is divided into square areas. Each area holds one
//! timestamp-valued IIR state; an event passes when it is closer than the
//! filter length to its area's state, and every event pulls that state
//! toward its own timestamp. A periodic global update relaxes areas that
//! stayed idle so that objects entering them are not rejected for long.
//!
//! Modules:
//! - [`event`], [`params`], [`timemap`]: the shared data model.
//! - [`filter`]: the functional reference engine.
//! - [`pipeline`]: a cycle-level model of a one-event-per-clock hardware
//!   pipeline that must agree with [`filter`] bit for bit.
//! - [`noise`]: synthetic scenes and labelled noise injection.
//! - [`metrics`]: filtering efficiency, noise-floor estimation, sweeps and
//!   throughput measurement.
//! - [`io`]: CSV and binary stream formats.

pub mod error;
pub mod event;
pub mod filter;
pub mod io;
pub mod metrics;
pub mod noise;
pub mod params;
pub mod pipeline;
pub mod timemap;

pub use error::{Error, Result};
pub use event::{validate_stream, Event, Geometry, Polarity};
pub use filter::{discard_curve, filter_stream, iir_update, FilterDecision, FilterEngine};
pub use io::{packetize, read_bin, read_csv, write_bin, write_csv};
pub use metrics::{
    bench_throughput, evaluate, sweep, timestamp_histogram, EngineKind, EvalReport,
    HistogramReport, SweepRow,
};
pub use noise::{
    falling_balls, generate_noise, generate_scene, merge_streams, NoiseSpec, SceneObject, SceneSpec,
};
pub use params::{cell_of, FilterParams, GlobalUpdatePolicy, Grid, InitState};
pub use pipeline::{
    effective_throughput, CycleInput, PipelineConfig, PipelineRun, PipelineSim, PipelineStats,
    PipelineTrace,
};
pub use timemap::TimeMap;
