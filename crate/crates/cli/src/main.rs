//! `evfilt`: filter, evaluate and simulate event camera streams.
//!
//! Machine-readable results go to standard output, human summaries to
//! standard error.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use evfilt::{FilterParams, Geometry, GlobalUpdatePolicy, InitState};

const DEFAULT_RATES: &str = "0,200,500,1000,2000,5000,10000,20000";
const DEFAULT_IDLE_TIMES: &str =
    "0,100,200,300,400,500,600,700,800,900,1000,2000,3000,4000,5000,6000,7000,8000,9000,10000";

#[derive(Parser)]
#[command(
    name = "evfilt",
    version,
    about = "Matrix-of-IIR-filters noise filter for event camera streams"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Filter parameters shared by most subcommands.
#[derive(Args, Debug, Clone)]
struct FilterFlags {
    /// Area side in pixels (power of two, 1..=256).
    #[arg(long, default_value_t = FilterParams::DEFAULT_SCALE)]
    scale: u32,
    /// Maximum gap between an event and its area state, µs.
    #[arg(long = "filter-length-us", default_value_t = FilterParams::DEFAULT_FILTER_LENGTH)]
    filter_length_us: u64,
    /// k in the update factor 2^-k (1..=8).
    #[arg(long, default_value_t = FilterParams::DEFAULT_UPDATE_FACTOR_LOG2)]
    update_factor_log2: u8,
    /// none | packet | time:<us> | count:<n>
    #[arg(long, default_value = "none")]
    global_update: GlobalUpdatePolicy,
    /// zero | first-ts
    #[arg(long, default_value = "zero")]
    init: InitState,
    /// Sensor width; defaults to the input's geometry, else 640.
    #[arg(long)]
    width: Option<u16>,
    /// Sensor height; defaults to the input's geometry, else 480.
    #[arg(long)]
    height: Option<u16>,
}

impl FilterFlags {
    fn geometry(&self, from_input: Option<Geometry>) -> anyhow::Result<Geometry> {
        match (self.width, self.height, from_input) {
            (Some(w), Some(h), _) => Ok(Geometry::new(w, h)),
            (None, None, Some(g)) => Ok(g),
            (None, None, None) => Ok(Geometry::new(640, 480)),
            _ => anyhow::bail!("--width and --height must be given together"),
        }
    }

    /// Parameters for `from_input` (or the flag/default geometry when
    /// `None`), validated.
    fn params(&self, from_input: Option<Geometry>) -> anyhow::Result<FilterParams> {
        let params = FilterParams::new(self.geometry(from_input)?)
            .with_scale(self.scale)
            .with_filter_length(self.filter_length_us)
            .with_update_factor_log2(self.update_factor_log2)
            .with_global_update(self.global_update)
            .with_init_state(self.init);
        params.validate()?;
        Ok(params)
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Csv,
    Bin,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Engine {
    Functional,
    Pipeline,
}

/// Output file and format. Input format is detected from content.
#[derive(Args, Debug, Clone)]
struct OutputFlags {
    /// Output path; standard output when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Output format; defaults to bin for `.bin` paths, else csv.
    #[arg(long, value_enum)]
    format: Option<Format>,
}

impl OutputFlags {
    fn format(&self) -> Format {
        match (self.format, &self.output) {
            (Some(f), _) => f,
            (None, Some(p)) if p.extension().is_some_and(|e| e == "bin") => Format::Bin,
            _ => Format::Csv,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Drop events classified as noise (or annotate every event).
    Filter {
        input: PathBuf,
        #[command(flatten)]
        out: OutputFlags,
        /// Keep every event and add a `correct` column (CSV only).
        #[arg(long)]
        annotate: bool,
        #[command(flatten)]
        flags: FilterFlags,
    },
    /// Merge labelled uniform noise into a stream.
    InjectNoise {
        input: PathBuf,
        #[command(flatten)]
        out: OutputFlags,
        /// Mean noise events per millisecond over the whole sensor.
        #[arg(long)]
        rate: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Filter a labelled stream and print noise/original remaining.
    Eval {
        input: PathBuf,
        #[command(flatten)]
        flags: FilterFlags,
    },
    /// Filtering efficiency over a grid of noise rates (and filter lengths).
    Sweep {
        input: PathBuf,
        /// Noise rates, events per ms.
        #[arg(long, value_delimiter = ',', default_value = DEFAULT_RATES)]
        rates: Vec<f64>,
        /// Filter lengths to sweep, µs; overrides --filter-length-us.
        #[arg(long, value_delimiter = ',')]
        filter_lengths: Vec<u64>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        flags: FilterFlags,
    },
    /// Timestamp histogram and a lower bound on the noise count.
    EstimateNoise {
        input: PathBuf,
        #[arg(long, default_value_t = evfilt::metrics::DEFAULT_BIN_WIDTH_US)]
        bin_width_us: u64,
        /// Recording length, µs; defaults to the span of the input.
        #[arg(long)]
        duration_us: Option<u64>,
    },
    /// Rejected events at the start of a burst versus idle time.
    DiscardCurve {
        #[arg(long, value_delimiter = ',', default_value = DEFAULT_IDLE_TIMES)]
        idle_times: Vec<u64>,
        #[arg(long, default_value_t = 1)]
        burst_spacing_us: u64,
        #[command(flatten)]
        flags: FilterFlags,
    },
    /// Run the cycle-level pipeline model and check it against the
    /// functional filter.
    Pipeline {
        input: PathBuf,
        /// Write the per-cycle trace (tab-separated) here.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Re-packetize the input, closing a packet every N events.
        #[arg(long)]
        packet_size: Option<usize>,
        /// Clock for the throughput model, MHz.
        #[arg(long, default_value_t = 387.0)]
        clock_mhz: f64,
        /// Global update period for the throughput model, ms.
        #[arg(long, default_value_t = 1.0)]
        update_period_ms: f64,
        #[command(flatten)]
        flags: FilterFlags,
    },
    /// Measure software throughput.
    Bench {
        input: PathBuf,
        #[arg(long, value_enum, default_value = "functional")]
        engine: Engine,
        #[arg(long, default_value_t = 5)]
        runs: usize,
        #[command(flatten)]
        flags: FilterFlags,
    },
    /// Generate a labelled synthetic scene of falling discs.
    Scene {
        #[command(flatten)]
        out: OutputFlags,
        #[arg(long, default_value_t = 12)]
        balls: usize,
        #[arg(long, default_value_t = 1_000_000)]
        duration_us: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 640)]
        width: u16,
        #[arg(long, default_value_t = 480)]
        height: u16,
    },
}

fn main() -> ExitCode {
    match commands::run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
