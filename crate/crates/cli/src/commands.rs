use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use evfilt::io::{
    read_bin, read_csv_from, write_annotated_csv_to, write_bin_to, write_csv_to, MAGIC,
};
use evfilt::metrics::{
    bench_throughput, evaluate, sweep, sweep_csv, timestamp_histogram, EngineKind, EVAL_CSV_HEADER,
};
use evfilt::noise::{falling_balls, generate_noise, generate_scene, merge_streams, NoiseSpec};
use evfilt::pipeline::{effective_throughput, CycleInput, PipelineConfig, PipelineSim};
use evfilt::{discard_curve, filter_stream, packetize, Event, Geometry};

use crate::{Command, Engine, Format, OutputFlags};

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Filter {
            input,
            out,
            annotate,
            flags,
        } => {
            flags.params(None)?;
            if annotate && out.format() == Format::Bin {
                bail!("--annotate needs CSV output");
            }
            let (geometry, events) = read_stream(&input)?;
            let params = flags.params(Some(geometry))?;
            let (decisions, _) = filter_stream(&events, &params)?;
            let passed: Vec<Event> = decisions
                .iter()
                .filter(|d| d.pass)
                .map(|d| d.event)
                .collect();
            if annotate {
                with_output(&out.output, |w| {
                    Ok(write_annotated_csv_to(w, &decisions, params.geometry)?)
                })?;
            } else {
                write_stream(&out, &passed, params.geometry)?;
            }
            let n = events.len();
            let rejected = n - passed.len();
            eprintln!(
                "events in {n}, out {}, rejected {rejected} ({:.2}%)",
                passed.len(),
                percent(rejected, n)
            );
        }
        Command::InjectNoise {
            input,
            out,
            rate,
            seed,
        } => {
            ensure!(
                rate >= 0.0 && rate.is_finite(),
                "--rate must be a non-negative number"
            );
            let (geometry, mut events) = read_stream(&input)?;
            for e in &mut events {
                e.label.get_or_insert(false);
            }
            let (start, duration) = span(&events);
            let noise = generate_noise(&NoiseSpec {
                rate_per_ms: rate,
                seed,
                start,
                duration,
                geometry,
            });
            let merged = merge_streams(&events, &noise)?;
            write_stream(&out, &merged, geometry)?;
            eprintln!(
                "original {}, injected noise {}, total {}",
                events.len(),
                noise.len(),
                merged.len()
            );
        }
        Command::Eval { input, flags } => {
            flags.params(None)?;
            let (geometry, events) = read_stream(&input)?;
            let params = flags.params(Some(geometry))?;
            let (decisions, _) = filter_stream(&events, &params)?;
            let report = evaluate(&decisions)?;
            println!("{EVAL_CSV_HEADER}");
            println!("{}", report.csv_row());
        }
        Command::Sweep {
            input,
            rates,
            filter_lengths,
            seed,
            flags,
        } => {
            flags.params(None)?;
            ensure!(
                rates.iter().all(|r| *r >= 0.0 && r.is_finite()),
                "noise rates must be non-negative numbers"
            );
            let (geometry, events) = read_stream(&input)?;
            let base = flags.params(Some(geometry))?;
            let grid: Vec<_> = if filter_lengths.is_empty() {
                vec![base]
            } else {
                filter_lengths
                    .iter()
                    .map(|&l| base.with_filter_length(l))
                    .collect()
            };
            for p in &grid {
                p.validate()?;
            }
            let rows = sweep(&events, &rates, &grid, seed)?;
            print!("{}", sweep_csv(&rows));
            eprintln!("{} rows", rows.len());
        }
        Command::EstimateNoise {
            input,
            bin_width_us,
            duration_us,
        } => {
            ensure!(bin_width_us > 0, "--bin-width-us must be positive");
            let (_, events) = read_stream(&input)?;
            let mut hist = timestamp_histogram(&events, bin_width_us)?;
            let duration = duration_us.unwrap_or_else(|| span(&events).1);
            let estimate = hist.estimate_noise_floor(duration)?;
            print!("{}", hist.to_csv());
            let discarded = hist.discarded.iter().filter(|&&d| d).count();
            eprintln!(
                "{} bins ({discarded} discarded as motion); noise rate {:.4} events/us",
                hist.counts.len(),
                hist.noise_rate_per_us.unwrap_or(0.0)
            );
            eprintln!(
                "estimated noise: at least {estimate:.0} of {} events ({:.2}%); noise near moving objects is not counted",
                events.len(),
                100.0 * hist.min_noise_fraction.unwrap_or(0.0)
            );
        }
        Command::DiscardCurve {
            idle_times,
            burst_spacing_us,
            flags,
        } => {
            ensure!(
                burst_spacing_us >= 1,
                "--burst-spacing-us must be at least 1"
            );
            let params = flags.params(None)?;
            println!("idle_us,discarded");
            for (t, n) in discard_curve(&params, &idle_times, burst_spacing_us)? {
                println!("{t},{n}");
            }
        }
        Command::Pipeline {
            input,
            trace,
            packet_size,
            clock_mhz,
            update_period_ms,
            flags,
        } => {
            PipelineConfig::new(flags.params(None)?).validate()?;
            ensure!(packet_size != Some(0), "--packet-size must be at least 1");
            let (geometry, mut events) = read_stream(&input)?;
            if let Some(n) = packet_size {
                events = packetize(&events, n);
            }
            let config = PipelineConfig::new(flags.params(Some(geometry))?);
            pipeline(
                config,
                &events,
                trace.as_deref(),
                clock_mhz,
                update_period_ms,
            )?;
        }
        Command::Bench {
            input,
            engine,
            runs,
            flags,
        } => {
            flags.params(None)?;
            let (geometry, events) = read_stream(&input)?;
            let params = flags.params(Some(geometry))?;
            if events.len() < 1_000_000 {
                eprintln!(
                    "note: {} events; timings below 10^6 events are noisy",
                    events.len()
                );
            }
            let kind = match engine {
                Engine::Functional => EngineKind::Functional,
                Engine::Pipeline => EngineKind::Pipeline,
            };
            let report = bench_throughput(kind, &params, &events, runs)?;
            println!("engine,events,runs,median_meps");
            println!(
                "{},{},{},{:.3}",
                format!("{engine:?}").to_lowercase(),
                report.events,
                report.runs.len(),
                report.median_meps()
            );
            let runs: Vec<String> = report
                .runs
                .iter()
                .map(|r| format!("{:.2}", r / 1e6))
                .collect();
            eprintln!("per-run MEPS: {}", runs.join(" "));
        }
        Command::Scene {
            out,
            balls,
            duration_us,
            seed,
            width,
            height,
        } => {
            ensure!(width > 0 && height > 0, "sensor geometry must be non-empty");
            let geometry = Geometry::new(width, height);
            let events = generate_scene(&falling_balls(geometry, balls, duration_us, seed));
            write_stream(&out, &events, geometry)?;
            eprintln!(
                "{} events from {balls} objects over {duration_us} us",
                events.len()
            );
        }
    }
    Ok(())
}

fn percent(part: usize, whole: usize) -> f64 {
    if whole == 0 {
        0.0
    } else {
        100.0 * part as f64 / whole as f64
    }
}

/// `(first_ts, last_ts - first_ts + 1)`, or zeros for an empty stream.
fn span(events: &[Event]) -> (u64, u64) {
    match (events.first(), events.last()) {
        (Some(a), Some(b)) => (a.ts, b.ts - a.ts + 1),
        _ => (0, 0),
    }
}

/// Reads a CSV or binary stream, telling them apart by the binary magic.
fn read_stream(path: &Path) -> Result<(Geometry, Vec<Event>)> {
    let mut file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut head = [0u8; 4];
    let mut got = 0;
    while got < head.len() {
        match file.read(&mut head[got..])? {
            0 => break,
            n => got += n,
        }
    }
    let parsed = if got == 4 && head == MAGIC {
        let mut bytes = head.to_vec();
        file.read_to_end(&mut bytes)?;
        read_bin(&bytes)
    } else {
        read_csv_from(BufReader::new(head[..got].chain(file)))
    };
    parsed.with_context(|| format!("cannot read {}", path.display()))
}

fn with_output(
    path: &Option<PathBuf>,
    write: impl FnOnce(&mut dyn Write) -> Result<()>,
) -> Result<()> {
    match path {
        Some(p) => {
            let file = File::create(p).with_context(|| format!("cannot create {}", p.display()))?;
            let mut w = BufWriter::new(file);
            write(&mut w)?;
            w.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut w = BufWriter::new(stdout.lock());
            write(&mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn write_stream(out: &OutputFlags, events: &[Event], geometry: Geometry) -> Result<()> {
    let format = out.format();
    with_output(&out.output, |w| {
        match format {
            Format::Csv => write_csv_to(w, events, geometry)?,
            Format::Bin => write_bin_to(w, events, geometry)?,
        }
        Ok(())
    })
}

fn pipeline(
    config: PipelineConfig,
    events: &[Event],
    trace_path: Option<&Path>,
    clock_mhz: f64,
    update_period_ms: f64,
) -> Result<()> {
    let mut script = CycleInput::stream(events);
    for (i, c) in script.iter_mut().enumerate() {
        c.tuser = i as u32;
    }
    let run = PipelineSim::new(config)?
        .with_recording(trace_path.is_some())
        .run_trace(&script)?;
    let (decisions, map) = filter_stream(events, &config.params)?;

    ensure!(
        run.outputs.len() == decisions.len(),
        "pipeline emitted {} events for {} inputs",
        run.outputs.len(),
        decisions.len()
    );
    if let Some(i) = run
        .outputs
        .iter()
        .zip(&decisions)
        .position(|(o, d)| o.event != d.event || o.correct != d.pass)
    {
        bail!("pipeline and functional filter disagree at event {i}");
    }
    ensure!(
        run.map == map,
        "pipeline and functional filter end with different time maps"
    );

    if let Some(p) = trace_path {
        std::fs::write(p, run.trace.to_tsv())
            .with_context(|| format!("cannot write {}", p.display()))?;
    }

    let s = &run.trace.stats;
    let passed = decisions.iter().filter(|d| d.pass).count();
    println!("metric,value");
    println!("events,{}", s.accepted);
    println!("passed,{passed}");
    println!("cycles,{}", s.cycles);
    println!("forward_hits,{}", s.forward_hits);
    println!("memory_reads,{}", s.memory_reads);
    println!("memory_writes,{}", s.memory_writes);
    println!("collisions,{}", s.collisions);
    println!("global_updates,{}", s.global_updates);
    println!("blocked_cycles,{}", s.blocked_cycles);
    println!(
        "blocked_cycles_per_update,{}",
        config.blocked_cycles_per_update()
    );
    match effective_throughput(&config, clock_mhz * 1e6, update_period_ms * 1e-3) {
        Ok(eps) => println!("effective_meps,{:.3}", eps / 1e6),
        Err(e) => eprintln!("throughput model: {e}"),
    }
    eprintln!(
        "pipeline matches the functional filter on all {} events",
        s.accepted
    );
    Ok(())
}
