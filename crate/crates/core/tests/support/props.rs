//! Invariant checks driven by proptest's runner. Each check takes a case
//! count so the property suite and the acceptance runner share one
//! definition. Runs are seeded deterministically.

use evfilt::io::{packetize, read_bin, read_csv, write_bin, write_csv};
use evfilt::metrics::{evaluate, timestamp_histogram};
use evfilt::noise::merge_streams;
use evfilt::pipeline::{CycleInput, PipelineConfig, PipelineSim};
use evfilt::{
    cell_of, filter_stream, validate_stream, Event, FilterDecision, FilterEngine, FilterParams,
    Geometry, GlobalUpdatePolicy, InitState, Polarity,
};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseResult, TestRng, TestRunner};

use super::oracle;

pub type Check = fn(u32) -> Result<(), String>;

/// Every invariant, by name.
pub const ALL: &[(&str, Check)] = &[
    ("determinism", determinism),
    ("stall transparency", stall_transparency),
    ("initiation interval 1", initiation_interval_one),
    ("pass-set monotone in filter length", pass_set_monotone),
    ("state boundedness", state_boundedness),
    ("conservation", conservation),
    ("global update no-op when all active", global_update_noop),
    ("convergence at fixed ts", convergence),
    ("cell constant within an area", cell_constant),
    ("oracle equivalence", oracle_equivalence),
    ("format round trips", format_round_trips),
    ("packetize idempotent", packetize_idempotent),
    ("merge sorted and label-conserving", merge_conserves),
    ("evaluate permutation-invariant", evaluate_permutation),
    ("histogram conserves counts", histogram_conserves),
];

pub fn run<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> TestCaseResult,
) -> Result<(), String> {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    let rng = TestRng::deterministic_rng(config.rng_algorithm);
    let mut runner = TestRunner::new_with_rng(config, rng);
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

/// Small sensors so that areas collide often.
pub fn geometry() -> impl Strategy<Value = Geometry> {
    (1u16..=96, 1u16..=64).prop_map(|(w, h)| Geometry::new(w, h))
}

pub fn policy() -> impl Strategy<Value = GlobalUpdatePolicy> {
    prop_oneof![
        Just(GlobalUpdatePolicy::Disabled),
        Just(GlobalUpdatePolicy::PerPacket),
        (1u64..5000).prop_map(|period_us| GlobalUpdatePolicy::ByTime { period_us }),
        (1u64..200).prop_map(GlobalUpdatePolicy::ByEventCount),
    ]
}

pub fn hardware_policy() -> impl Strategy<Value = GlobalUpdatePolicy> {
    prop_oneof![
        Just(GlobalUpdatePolicy::Disabled),
        Just(GlobalUpdatePolicy::PerPacket)
    ]
}

pub fn params_with(
    policy: impl Strategy<Value = GlobalUpdatePolicy>,
) -> impl Strategy<Value = FilterParams> {
    (
        geometry(),
        0u32..=5,
        1u64..3000,
        1u8..=8,
        policy,
        prop_oneof![Just(InitState::Zero), Just(InitState::FirstEventTs)],
    )
        .prop_map(|(g, s, l, k, p, init)| {
            FilterParams::new(g)
                .with_scale(1 << s)
                .with_filter_length(l)
                .with_update_factor_log2(k)
                .with_global_update(p)
                .with_init_state(init)
        })
}

/// A valid stream for `g`: mostly short gaps (including zero), some long
/// idle gaps, random packet ends.
pub fn stream(g: Geometry, max_len: usize) -> impl Strategy<Value = Vec<Event>> {
    let gap = prop_oneof![
        4 => Just(0u64),
        8 => 0u64..50,
        2 => 50u64..2000,
        1 => 2000u64..100_000,
    ];
    let item = (
        gap,
        0..g.width,
        0..g.height,
        any::<bool>(),
        prop::bool::weighted(0.05),
    );
    (0u64..10_000, prop::collection::vec(item, 0..max_len)).prop_map(|(start, items)| {
        let mut ts = start;
        items
            .into_iter()
            .map(|(gap, x, y, pol, last)| {
                ts += gap;
                Event::new(ts, x, y, Polarity::from_bit(pol)).with_packet_last(last)
            })
            .collect()
    })
}

pub fn params_and_stream(
    policy: impl Strategy<Value = GlobalUpdatePolicy>,
    max_len: usize,
) -> impl Strategy<Value = (FilterParams, Vec<Event>)> {
    params_with(policy).prop_flat_map(move |p| (Just(p), stream(p.geometry, max_len)))
}

fn pipeline_run(params: &FilterParams, script: &[CycleInput]) -> evfilt::PipelineRun {
    PipelineSim::new(PipelineConfig::new(*params))
        .expect("hardware policy")
        .run_trace(script)
        .expect("valid script")
}

pub fn determinism(cases: u32) -> Result<(), String> {
    run(cases, params_and_stream(policy(), 300), |(p, events)| {
        let a = filter_stream(&events, &p).unwrap();
        let b = filter_stream(&events, &p).unwrap();
        prop_assert_eq!(a, b);
        if matches!(
            p.global_update,
            GlobalUpdatePolicy::Disabled | GlobalUpdatePolicy::PerPacket
        ) {
            let script = CycleInput::stream(&events);
            let x = pipeline_run(&p, &script);
            let y = pipeline_run(&p, &script);
            prop_assert_eq!(x.outputs, y.outputs);
            prop_assert_eq!(x.map, y.map);
        }
        Ok(())
    })
}

pub fn stall_transparency(cases: u32) -> Result<(), String> {
    let s = params_and_stream(hardware_policy(), 200).prop_flat_map(|(p, ev)| {
        let n = ev.len();
        (
            Just(p),
            Just(ev),
            prop::collection::vec(prop::bool::weighted(0.3), n * 3 + 1),
        )
    });
    run(cases, s, |(p, events, stalls)| {
        let plain = pipeline_run(&p, &CycleInput::stream(&events));
        // stalls[i] drops downstream ready; extra idle beats interleave
        let mut script = Vec::new();
        let mut it = stalls.iter().copied();
        for e in &events {
            if it.next().unwrap_or(false) {
                script.push(CycleInput::idle(!it.next().unwrap_or(false)));
            }
            script.push(CycleInput::event(*e, !it.next().unwrap_or(false)));
        }
        let stalled = pipeline_run(&p, &script);
        prop_assert_eq!(plain.outputs, stalled.outputs);
        prop_assert_eq!(plain.map, stalled.map);
        Ok(())
    })
}

pub fn initiation_interval_one(cases: u32) -> Result<(), String> {
    let s = params_and_stream(hardware_policy(), 300).prop_map(|(p, ev)| {
        // no packet ends, so no global update blocks the input
        let ev: Vec<Event> = ev.into_iter().map(|e| e.with_packet_last(false)).collect();
        (p, ev)
    });
    run(cases, s, |(p, events)| {
        let config = PipelineConfig::new(p);
        let latency = config.latency() as u64;
        let mut sim = PipelineSim::new(config).unwrap();
        let mut out_cycles = Vec::new();
        let mut cycle = 0u64;
        for e in &events {
            let r = sim.step(&CycleInput::event(*e, true));
            prop_assert!(r.upstream_tready, "input blocked at cycle {}", cycle);
            if r.output.is_some() {
                out_cycles.push(cycle);
            }
            cycle += 1;
        }
        while !sim.is_quiescent() || (out_cycles.len() as u64) < events.len() as u64 {
            if sim.step(&CycleInput::idle(true)).output.is_some() {
                out_cycles.push(cycle);
            }
            cycle += 1;
            prop_assert!(cycle < events.len() as u64 + 10, "pipeline did not drain");
        }
        let expected: Vec<u64> = (0..events.len() as u64).map(|i| i + latency).collect();
        prop_assert_eq!(out_cycles, expected);
        prop_assert_eq!(sim.stats().accepted, events.len() as u64);
        Ok(())
    })
}

pub fn pass_set_monotone(cases: u32) -> Result<(), String> {
    let s = (params_and_stream(policy(), 300), 0u64..3000);
    run(cases, s, |((p, events), shorter)| {
        let short = p.with_filter_length(shorter.clamp(1, p.filter_length));
        let (long_d, _) = filter_stream(&events, &p).unwrap();
        let (short_d, _) = filter_stream(&events, &short).unwrap();
        for (i, (l, s)) in long_d.iter().zip(&short_d).enumerate() {
            prop_assert!(
                !s.pass || l.pass,
                "event {} passes only with the shorter filter",
                i
            );
        }
        Ok(())
    })
}

pub fn state_boundedness(cases: u32) -> Result<(), String> {
    let s = params_and_stream(policy(), 200)
        .prop_map(|(p, ev)| (p.with_init_state(InitState::Zero), ev));
    run(cases, s, |(p, events)| {
        let mut engine = FilterEngine::new(p).unwrap();
        for e in &events {
            engine.process_event(e).unwrap();
            let map = engine.map();
            prop_assert_eq!(map.last_ts, e.ts);
            prop_assert!(map.states().iter().all(|&s| s <= map.last_ts));
        }
        Ok(())
    })
}

pub fn conservation(cases: u32) -> Result<(), String> {
    let s = params_and_stream(hardware_policy(), 300)
        .prop_flat_map(|(p, ev)| (Just(p), Just(ev), any::<u64>()));
    run(cases, s, |(p, events, seed)| {
        let script = super::random_script(seed, &events, 0.2, 0.1);
        let r = pipeline_run(&p, &script);
        prop_assert_eq!(r.trace.stats.accepted, events.len() as u64);
        prop_assert_eq!(r.trace.stats.emitted, events.len() as u64);
        let order: Vec<u32> = r.outputs.iter().map(|o| o.tuser).collect();
        let expected: Vec<u32> = (0..events.len() as u32).collect();
        prop_assert_eq!(order, expected);
        prop_assert_eq!(r.trace.stats.collisions, 0);
        Ok(())
    })
}

pub fn global_update_noop(cases: u32) -> Result<(), String> {
    let s = (
        1u16..=16,
        1u16..=16,
        prop::collection::vec(0u64..1 << 40, 256),
    );
    run(cases, s, |(w, h, mut stamps)| {
        let p = FilterParams::new(Geometry::new(w, h)).with_scale(1);
        let mut engine = FilterEngine::new(p).unwrap();
        // touch every area once, at increasing random timestamps
        stamps.sort_unstable();
        let mut stamps = stamps.into_iter();
        for y in 0..h {
            for x in 0..w {
                let ts = stamps.next().unwrap();
                engine
                    .process_event(&Event::new(ts, x, y, Polarity::Increase))
                    .unwrap();
            }
        }
        let before = engine.map().states().to_vec();
        prop_assert!(engine.map().active().iter().all(|&a| a));
        prop_assert_eq!(engine.run_global_update(), 0);
        prop_assert_eq!(engine.map().states(), &before[..]);
        prop_assert!(engine.map().active().iter().all(|&a| !a));
        Ok(())
    })
}

pub fn convergence(cases: u32) -> Result<(), String> {
    let s = (0u64..1 << 40, 0u64..1 << 30, 1u8..=8, 0u64..1000);
    run(cases, s, |(first, gap, k, extra)| {
        // a filter at least 2^k long so the settled residual passes
        let length = (1u64 << k) + extra;
        let p = FilterParams::new(Geometry::new(1, 1))
            .with_update_factor_log2(k)
            .with_filter_length(length);
        let mut engine = FilterEngine::new(p).unwrap();
        let e0 = Event::new(first, 0, 0, Polarity::Increase);
        engine.process_event(&e0).unwrap();
        let ts = first + gap;
        let e = Event::new(ts, 0, 0, Polarity::Increase);
        let mut prev = engine.map().state(0, 0);
        let mut settled = false;
        // each step shrinks the gap by at least a factor (1 - 2^-k)
        for _ in 0..20_000 {
            engine.process_event(&e).unwrap();
            let s = engine.map().state(0, 0);
            if s == prev {
                settled = true;
                break;
            }
            prev = s;
        }
        prop_assert!(settled);
        prop_assert!(ts - prev < 1 << k);
        for _ in 0..4 {
            prop_assert!(engine.process_event(&e).unwrap().pass);
            prop_assert_eq!(engine.map().state(0, 0), prev);
        }
        Ok(())
    })
}

pub fn cell_constant(cases: u32) -> Result<(), String> {
    let s = (0u32..=8, any::<u16>(), any::<u16>()).prop_flat_map(|(s, x, y)| {
        let scale = 1u32 << s;
        (Just(scale), Just(x), Just(y), 0..scale, 0..scale)
    });
    run(cases, s, |(scale, x, y, dx, dy)| {
        let base_x = x - (x % scale as u16);
        let base_y = y - (y % scale as u16);
        let (px, py) = (
            base_x.saturating_add(dx as u16),
            base_y.saturating_add(dy as u16),
        );
        prop_assume!(px - base_x == dx as u16 && py - base_y == dy as u16);
        prop_assert_eq!(cell_of(px, py, scale), cell_of(base_x, base_y, scale));
        prop_assert_eq!(
            cell_of(x, y, scale),
            ((x as u32 / scale) as usize, (y as u32 / scale) as usize)
        );
        Ok(())
    })
}

pub fn oracle_equivalence(cases: u32) -> Result<(), String> {
    run(cases, params_and_stream(policy(), 400), |(p, events)| {
        let (decisions, map) = filter_stream(&events, &p).unwrap();
        let o = oracle(&events, &p);
        let pass: Vec<bool> = decisions.iter().map(|d| d.pass).collect();
        let diff: Vec<i128> = decisions.iter().map(|d| d.diff_ts).collect();
        prop_assert_eq!(pass, o.pass);
        prop_assert_eq!(diff, o.diff);
        prop_assert_eq!(map.states(), &o.states[..]);
        prop_assert_eq!(map.active(), &o.active[..]);
        prop_assert_eq!(map.last_ts, o.last_ts);
        Ok(())
    })
}

fn labelled(events: Vec<Event>, labels: Option<Vec<bool>>) -> Vec<Event> {
    match labels {
        None => events,
        Some(l) => events
            .into_iter()
            .zip(l.into_iter().cycle())
            .map(|(e, l)| e.with_label(l))
            .collect(),
    }
}

pub fn format_round_trips(cases: u32) -> Result<(), String> {
    let s = geometry().prop_flat_map(|g| {
        (
            Just(g),
            stream(g, 200),
            prop::option::of(prop::collection::vec(any::<bool>(), 1..8)),
        )
    });
    run(cases, s, |(g, events, labels)| {
        let events = labelled(events, labels);
        let text = write_csv(&events, g).unwrap();
        prop_assert_eq!(read_csv(&text).unwrap(), (g, events.clone()));
        let bytes = write_bin(&events, g).unwrap();
        prop_assert_eq!(bytes.len(), 24 + 16 * events.len());
        let (g2, back) = read_bin(&bytes).unwrap();
        prop_assert_eq!((g2, &back), (g, &events));
        let via_csv = read_csv(&write_csv(&back, g2).unwrap()).unwrap();
        prop_assert_eq!(write_bin(&via_csv.1, via_csv.0).unwrap(), bytes);
        Ok(())
    })
}

pub fn packetize_idempotent(cases: u32) -> Result<(), String> {
    let s = (stream(Geometry::new(8, 8), 100), 1usize..50);
    run(cases, s, |(events, n)| {
        let once = packetize(&events, n);
        prop_assert_eq!(packetize(&once, n), once.clone());
        for (i, e) in once.iter().enumerate() {
            prop_assert_eq!(e.packet_last, (i + 1) % n == 0 || i + 1 == once.len());
        }
        Ok(())
    })
}

pub fn merge_conserves(cases: u32) -> Result<(), String> {
    let g = Geometry::new(32, 32);
    run(cases, (stream(g, 150), stream(g, 150)), move |(a, b)| {
        let a = labelled(a, Some(vec![false]));
        let b = labelled(b, Some(vec![true]));
        let m = merge_streams(&a, &b).unwrap();
        prop_assert!(validate_stream(&m, g).is_ok());
        prop_assert_eq!(m.len(), a.len() + b.len());
        prop_assert_eq!(m.iter().filter(|e| e.label == Some(true)).count(), b.len());
        let orig: Vec<Event> = m
            .iter()
            .filter(|e| e.label == Some(false))
            .copied()
            .collect();
        prop_assert_eq!(orig, a);
        Ok(())
    })
}

pub fn evaluate_permutation(cases: u32) -> Result<(), String> {
    let item = (any::<bool>(), any::<bool>());
    let s = prop::collection::vec(item, 0..200).prop_flat_map(|v| {
        let n = v.len();
        (Just(v), Just((0..n).collect::<Vec<_>>()).prop_shuffle())
    });
    run(cases, s, |(items, perm)| {
        let decisions: Vec<FilterDecision> = items
            .iter()
            .map(|&(noise, pass)| FilterDecision {
                event: Event::new(0, 0, 0, Polarity::Increase).with_label(noise),
                pass,
                diff_ts: 0,
            })
            .collect();
        let shuffled: Vec<FilterDecision> = perm.iter().map(|&i| decisions[i]).collect();
        prop_assert_eq!(evaluate(&decisions).unwrap(), evaluate(&shuffled).unwrap());
        Ok(())
    })
}

pub fn histogram_conserves(cases: u32) -> Result<(), String> {
    let s = (stream(Geometry::new(4, 4), 300), 1u64..5000);
    run(cases, s, |(events, width)| {
        let h = timestamp_histogram(&events, width).unwrap();
        prop_assert_eq!(h.total(), events.len() as u64);
        prop_assert_eq!(h.first_bin_start % width, 0);
        for e in &events {
            let bin = ((e.ts - h.first_bin_start) / width) as usize;
            prop_assert!(h.counts[bin] > 0);
        }
        Ok(())
    })
}
