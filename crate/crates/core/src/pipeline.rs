//! Cycle-level behavioural model of the streaming filter pipeline.
//!
//! One event may be accepted per clock. An accepted event flows through
//!
//! ```text
//! offset 0        area address, memory read issued (or forwarding chosen)
//! offset 1..L     memory read latency (L = mem_read_latency)
//! offset L        recode (memory data or forwarded state), verify, new state
//! offset L+1      new state written back, event emitted with its verdict
//! ```
//!
//! Memory reads observe the contents before any write in the same cycle.
//! An event whose area matches one of the previous `forward_depth` accepted
//! events takes that event's freshly computed state instead of reading
//! memory; the youngest match wins.
//!
//! When the downstream consumer is not ready every stage holds, memory
//! included, and no input is accepted. After an accepted `tlast` beat (with
//! the per-packet policy) the input is blocked for `post_tlast_drain`
//! cycles, one cycle per area for the global update walk, and
//! `post_update_drain` cycles for the walk's writes to land.

use std::collections::VecDeque;
use std::fmt::Write as _;

use crate::error::{Error, ParamError, ThroughputError};
use crate::event::{validate_stream, Event};
use crate::filter::iir_update;
use crate::params::{FilterParams, GlobalUpdatePolicy, Grid, InitState};
use crate::timemap::TimeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PipelineConfig {
    pub params: FilterParams,
    pub mem_read_latency: usize,
    pub forward_depth: usize,
    pub post_tlast_drain: usize,
    pub post_update_drain: usize,
}

impl PipelineConfig {
    pub fn new(params: FilterParams) -> Self {
        PipelineConfig {
            params,
            mem_read_latency: 2,
            forward_depth: 3,
            post_tlast_drain: 3,
            post_update_drain: 3,
        }
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        self.params.validate()?;
        match self.params.global_update {
            GlobalUpdatePolicy::PerPacket | GlobalUpdatePolicy::Disabled => {}
            other => {
                return Err(ParamError::Pipeline(format!(
                    "global update policy {other} is not supported; use packet or none"
                )))
            }
        }
        let guard = self.mem_read_latency + 1;
        if self.mem_read_latency == 0 {
            return Err(ParamError::Pipeline(
                "memory read latency must be at least 1".into(),
            ));
        }
        if self.forward_depth < guard {
            return Err(ParamError::Pipeline(format!(
                "forward depth {} must cover read latency plus one ({guard})",
                self.forward_depth
            )));
        }
        if self.post_tlast_drain < guard || self.post_update_drain < guard {
            return Err(ParamError::Pipeline(format!(
                "drains must last at least read latency plus one ({guard}) cycles"
            )));
        }
        Ok(())
    }

    /// Cycles from accepting an event to emitting it.
    pub fn latency(&self) -> usize {
        self.mem_read_latency + 1
    }

    /// Input-blocked cycles per global update when downstream never stalls.
    pub fn blocked_cycles_per_update(&self) -> u64 {
        (self.post_tlast_drain + self.params.grid().len() + self.post_update_drain) as u64
    }
}

/// Events per second sustained when a global update runs every
/// `update_period_s` seconds at `clock_hz`, one event per unblocked cycle.
pub fn effective_throughput(
    config: &PipelineConfig,
    clock_hz: f64,
    update_period_s: f64,
) -> Result<f64, ThroughputError> {
    if !(clock_hz > 0.0 && update_period_s > 0.0) {
        return Err(ThroughputError::NonPositive);
    }
    let blocked = config.blocked_cycles_per_update();
    let period_cycles = clock_hz * update_period_s;
    if period_cycles <= blocked as f64 {
        return Err(ThroughputError::Saturated {
            period_cycles,
            blocked,
        });
    }
    Ok(clock_hz * (1.0 - blocked as f64 / period_cycles))
}

/// One clock's worth of bus signals. `tdata` is meaningful only when
/// `tvalid` is set; `tuser` is carried through unchanged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CycleInput {
    pub tvalid: bool,
    pub tdata: Event,
    pub tlast: bool,
    pub tuser: u32,
    pub downstream_tready: bool,
}

impl CycleInput {
    pub fn idle(downstream_tready: bool) -> Self {
        CycleInput {
            downstream_tready,
            ..Default::default()
        }
    }

    /// A valid beat carrying `e`, with `tlast` taken from `e.packet_last`.
    pub fn event(e: Event, downstream_tready: bool) -> Self {
        CycleInput {
            tvalid: true,
            tdata: e,
            tlast: e.packet_last,
            tuser: 0,
            downstream_tready,
        }
    }

    /// Back-to-back beats with an always-ready consumer.
    pub fn stream(events: &[Event]) -> Vec<CycleInput> {
        events.iter().map(|&e| CycleInput::event(e, true)).collect()
    }
}

/// An emitted beat: the event, its verdict (`correct`), and `tuser`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OutputBeat {
    pub event: Event,
    pub correct: bool,
    pub tuser: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StepResult {
    pub upstream_tready: bool,
    pub output: Option<OutputBeat>,
}

/// Global update progress.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdatePhase {
    Idle,
    DrainIn { remaining: usize },
    Walk { next: usize },
    DrainOut { remaining: usize },
}

impl UpdatePhase {
    fn tag(&self) -> &'static str {
        match self {
            UpdatePhase::Idle => "run",
            UpdatePhase::DrainIn { .. } => "drain_in",
            UpdatePhase::Walk { .. } => "walk",
            UpdatePhase::DrainOut { .. } => "drain_out",
        }
    }
}

/// Occupant of one pipeline stage as recorded in the trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageTag {
    Empty,
    /// Accepted event, by acceptance sequence number.
    Event(u64),
    /// Global update walk over an area address.
    Walk(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CycleRecord {
    pub cycle: u64,
    pub tvalid: bool,
    pub upstream_tready: bool,
    pub downstream_tready: bool,
    pub stages: Vec<StageTag>,
    /// Forwarding distance (1 = previous accepted event) chosen this cycle.
    pub forward_hit: Option<usize>,
    pub mem_read: Option<usize>,
    pub mem_write: Option<(usize, u64)>,
    /// A memory read and write hit the same address in this cycle.
    pub collision: bool,
    pub phase: UpdatePhase,
    pub output: Option<OutputBeat>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PipelineStats {
    pub cycles: u64,
    pub accepted: u64,
    pub emitted: u64,
    pub forward_hits: u64,
    pub memory_reads: u64,
    pub memory_writes: u64,
    pub collisions: u64,
    /// Cycles in which the downstream consumer was not ready.
    pub stall_cycles: u64,
    /// Cycles in which the input was blocked by a global update.
    pub blocked_cycles: u64,
    pub global_updates: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PipelineTrace {
    /// Per-cycle records; empty unless recording was enabled.
    pub records: Vec<CycleRecord>,
    pub stats: PipelineStats,
}

pub const TRACE_HEADER: &str =
    "cycle\ttvalid\ttready\tdready\tstages\tfwd\tmem_rd\tmem_wr\tcollision\tgu_phase\toutput";

impl PipelineTrace {
    /// Tab-separated export, one cycle per line after [`TRACE_HEADER`].
    ///
    /// `stages` lists stage occupants from offset 0 upward separated by
    /// `|` (`eN` event with sequence N, `uA` update of area A, `-` empty);
    /// `mem_wr` is `addr=value`; `output` is `ts,x,y,polarity,correct`.
    /// Absent values are `-`.
    pub fn to_tsv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.records.len() + 1));
        out.push_str(TRACE_HEADER);
        out.push('\n');
        for r in &self.records {
            let stages = r
                .stages
                .iter()
                .map(|s| match s {
                    StageTag::Empty => "-".to_string(),
                    StageTag::Event(seq) => format!("e{seq}"),
                    StageTag::Walk(addr) => format!("u{addr}"),
                })
                .collect::<Vec<_>>()
                .join("|");
            let opt = |v: Option<String>| v.unwrap_or_else(|| "-".into());
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.cycle,
                u8::from(r.tvalid),
                u8::from(r.upstream_tready),
                u8::from(r.downstream_tready),
                stages,
                opt(r.forward_hit.map(|d| d.to_string())),
                opt(r.mem_read.map(|a| a.to_string())),
                opt(r.mem_write.map(|(a, v)| format!("{a}={v}"))),
                u8::from(r.collision),
                r.phase.tag(),
                opt(r.output.map(|o| format!(
                    "{},{},{},{},{}",
                    o.event.ts,
                    o.event.x,
                    o.event.y,
                    o.event.polarity.bit(),
                    u8::from(o.correct)
                ))),
            );
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
struct EventOp {
    seq: u64,
    event: Event,
    tuser: u32,
    addr: usize,
    /// Sequence number of the forwarding source, if any.
    forward_from: Option<u64>,
    read_data: u64,
    correct: bool,
}

#[derive(Debug, Clone, Copy)]
struct WalkOp {
    addr: usize,
    write_enable: bool,
    read_data: u64,
    new_state: u64,
}

#[derive(Debug, Clone, Copy)]
enum Op {
    Bubble,
    Event(EventOp),
    Walk(WalkOp),
}

#[derive(Debug, Clone, Copy)]
struct Recent {
    seq: u64,
    addr: usize,
    new_state: u64,
}

/// The simulator. Drive it with [`PipelineSim::step`] or
/// [`PipelineSim::run_trace`].
#[derive(Debug, Clone)]
pub struct PipelineSim {
    config: PipelineConfig,
    grid: Grid,
    shift: u32,
    memory: Vec<u64>,
    active: Vec<bool>,
    last_ts: u64,
    /// `stages[i]` holds the op at offset `i`.
    stages: Vec<Op>,
    /// Recently accepted events, oldest first; long enough that a
    /// forwarding source is still present when its consumer recodes.
    recent: VecDeque<Recent>,
    recent_cap: usize,
    phase: UpdatePhase,
    next_seq: u64,
    cycle: u64,
    record: bool,
    trace: PipelineTrace,
}

impl PipelineSim {
    pub fn new(config: PipelineConfig) -> Result<Self, Error> {
        config.validate()?;
        Ok(Self::new_unchecked(config))
    }

    fn new_unchecked(config: PipelineConfig) -> Self {
        let grid = config.params.grid();
        PipelineSim {
            config,
            grid,
            shift: config.params.scale.trailing_zeros(),
            memory: vec![0; grid.len()],
            active: vec![false; grid.len()],
            last_ts: 0,
            stages: vec![Op::Bubble; config.mem_read_latency + 2],
            recent: VecDeque::new(),
            recent_cap: config.forward_depth + config.mem_read_latency + 2,
            phase: UpdatePhase::Idle,
            next_seq: 0,
            cycle: 0,
            record: false,
            trace: PipelineTrace::default(),
        }
    }

    /// Enables per-cycle trace records.
    pub fn with_recording(mut self, record: bool) -> Self {
        self.record = record;
        self
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn phase(&self) -> UpdatePhase {
        self.phase
    }

    pub fn stats(&self) -> &PipelineStats {
        &self.trace.stats
    }

    /// True when no event or update is in flight.
    pub fn is_quiescent(&self) -> bool {
        self.phase == UpdatePhase::Idle
            && self.stages[..=self.config.mem_read_latency]
                .iter()
                .all(|op| matches!(op, Op::Bubble))
    }

    /// Current memory contents and flags as a time map.
    pub fn time_map(&self) -> TimeMap {
        let mut map = TimeMap::new(self.grid);
        map.states_mut().copy_from_slice(&self.memory);
        map.active_mut().copy_from_slice(&self.active);
        map.last_ts = self.last_ts;
        map
    }

    pub fn into_trace(self) -> PipelineTrace {
        self.trace
    }

    /// `tready` presented upstream this cycle.
    pub fn upstream_tready(&self, downstream_tready: bool) -> bool {
        downstream_tready && self.phase == UpdatePhase::Idle
    }

    /// Advances one clock.
    ///
    /// The event in `input` is accepted iff `input.tvalid` and the returned
    /// `upstream_tready` are both set. Accepted events must be on-sensor and
    /// in timestamp order; [`PipelineSim::run_trace`] checks this up front.
    pub fn step(&mut self, input: &CycleInput) -> StepResult {
        let cycle = self.cycle;
        self.cycle += 1;
        let upstream_tready = self.upstream_tready(input.downstream_tready);
        let stats = &mut self.trace.stats;
        stats.cycles += 1;
        if self.phase != UpdatePhase::Idle {
            stats.blocked_cycles += 1;
        }
        if !input.downstream_tready {
            stats.stall_cycles += 1;
            if self.record {
                let rec = self.record_for(cycle, input, upstream_tready);
                self.trace.records.push(rec);
            }
            return StepResult {
                upstream_tready,
                output: None,
            };
        }

        // Advance: everything shifts by one offset, the op already past the
        // write stage wraps around and is dropped.
        self.stages.rotate_right(1);
        self.stages[0] = Op::Bubble;
        let l = self.config.mem_read_latency;
        let writing = self.stages[l + 1];

        let mut forward_hit = None;
        let mut mem_read = None;
        let mut mem_write = None;
        let mut output = None;

        // Offset 0: admit a new event or the next walk address.
        let accepted = input.tvalid && upstream_tready;
        if accepted {
            let e = input.tdata;
            if self.next_seq == 0 && self.config.params.init_state == InitState::FirstEventTs {
                self.memory.fill(e.ts);
            }
            let seq = self.next_seq;
            self.next_seq += 1;
            let addr = self.grid.address(
                usize::from(e.x) >> self.shift,
                usize::from(e.y) >> self.shift,
            );
            let forward_from = self
                .recent
                .iter()
                .rev()
                .take(self.config.forward_depth)
                .find(|r| r.addr == addr)
                .map(|r| r.seq);
            let read_data = match forward_from {
                Some(src) => {
                    forward_hit = Some((seq - src) as usize);
                    0
                }
                None => {
                    mem_read = Some(addr);
                    self.memory[addr]
                }
            };
            self.active[addr] = true;
            self.last_ts = e.ts;
            if self.recent.len() == self.recent_cap {
                self.recent.pop_front();
            }
            self.recent.push_back(Recent {
                seq,
                addr,
                new_state: 0,
            });
            self.stages[0] = Op::Event(EventOp {
                seq,
                event: e,
                tuser: input.tuser,
                addr,
                forward_from,
                read_data,
                correct: false,
            });
        } else if let UpdatePhase::Walk { next } = self.phase {
            mem_read = Some(next);
            self.stages[0] = Op::Walk(WalkOp {
                addr: next,
                write_enable: !self.active[next],
                read_data: self.memory[next],
                new_state: 0,
            });
        }

        // Offset L: recode and verify.
        let k = self.config.params.update_factor_log2;
        let filter_length = i128::from(self.config.params.filter_length);
        let last_ts = self.last_ts;
        match &mut self.stages[l] {
            Op::Event(op) => {
                let state = match op.forward_from {
                    Some(src) => {
                        let front = self.recent.front().expect("forward source retained").seq;
                        self.recent[(src - front) as usize].new_state
                    }
                    None => op.read_data,
                };
                op.correct = i128::from(op.event.ts) - i128::from(state) < filter_length;
                let new_state = iir_update(state, op.event.ts, k);
                let front = self.recent.front().expect("own entry retained").seq;
                self.recent[(op.seq - front) as usize].new_state = new_state;
            }
            Op::Walk(op) => op.new_state = iir_update(op.read_data, last_ts, k),
            Op::Bubble => {}
        }

        // Offset L+1: write back and emit. Reads above saw pre-write data.
        match writing {
            Op::Event(op) => {
                let front = self.recent.front().expect("own entry retained").seq;
                let new_state = self.recent[(op.seq - front) as usize].new_state;
                self.memory[op.addr] = new_state;
                mem_write = Some((op.addr, new_state));
                output = Some(OutputBeat {
                    event: op.event,
                    correct: op.correct,
                    tuser: op.tuser,
                });
            }
            Op::Walk(op) if op.write_enable => {
                self.memory[op.addr] = op.new_state;
                mem_write = Some((op.addr, op.new_state));
            }
            _ => {}
        }

        let collision = matches!((mem_read, mem_write), (Some(r), Some((w, _))) if r == w);

        // Global update sequencing.
        self.phase = match self.phase {
            UpdatePhase::Idle
                if accepted
                    && input.tlast
                    && self.config.params.global_update == GlobalUpdatePolicy::PerPacket =>
            {
                UpdatePhase::DrainIn {
                    remaining: self.config.post_tlast_drain,
                }
            }
            UpdatePhase::DrainIn { remaining } if remaining > 1 => UpdatePhase::DrainIn {
                remaining: remaining - 1,
            },
            UpdatePhase::DrainIn { .. } => {
                self.trace.stats.global_updates += 1;
                UpdatePhase::Walk { next: 0 }
            }
            UpdatePhase::Walk { next } if next + 1 < self.grid.len() => {
                UpdatePhase::Walk { next: next + 1 }
            }
            UpdatePhase::Walk { .. } => {
                self.active.fill(false);
                UpdatePhase::DrainOut {
                    remaining: self.config.post_update_drain,
                }
            }
            UpdatePhase::DrainOut { remaining } if remaining > 1 => UpdatePhase::DrainOut {
                remaining: remaining - 1,
            },
            UpdatePhase::DrainOut { .. } => {
                // every pre-update event has been written; memory is authoritative
                self.recent.clear();
                UpdatePhase::Idle
            }
            idle => idle,
        };

        let stats = &mut self.trace.stats;
        stats.accepted += u64::from(accepted);
        stats.emitted += u64::from(output.is_some());
        stats.forward_hits += u64::from(forward_hit.is_some());
        stats.memory_reads += u64::from(mem_read.is_some());
        stats.memory_writes += u64::from(mem_write.is_some());
        stats.collisions += u64::from(collision);

        if self.record {
            let mut rec = self.record_for(cycle, input, upstream_tready);
            rec.forward_hit = forward_hit;
            rec.mem_read = mem_read;
            rec.mem_write = mem_write;
            rec.collision = collision;
            rec.output = output;
            self.trace.records.push(rec);
        }

        StepResult {
            upstream_tready,
            output,
        }
    }

    fn record_for(&self, cycle: u64, input: &CycleInput, upstream_tready: bool) -> CycleRecord {
        CycleRecord {
            cycle,
            tvalid: input.tvalid,
            upstream_tready,
            downstream_tready: input.downstream_tready,
            stages: self
                .stages
                .iter()
                .map(|op| match op {
                    Op::Bubble => StageTag::Empty,
                    Op::Event(e) => StageTag::Event(e.seq),
                    Op::Walk(w) => StageTag::Walk(w.addr),
                })
                .collect(),
            forward_hit: None,
            mem_read: None,
            mem_write: None,
            collision: false,
            phase: self.phase,
            output: None,
        }
    }

    /// Starts a global update now (as if a `tlast` beat had just been
    /// accepted) and clocks idle, always-ready cycles until the input is
    /// unblocked. Returns the cycles consumed.
    pub fn global_update_sequence(&mut self) -> u64 {
        if self.phase == UpdatePhase::Idle {
            self.phase = UpdatePhase::DrainIn {
                remaining: self.config.post_tlast_drain,
            };
        }
        let start = self.cycle;
        while self.phase != UpdatePhase::Idle {
            self.step(&CycleInput::idle(true));
        }
        self.cycle - start
    }

    /// Plays a cycle script to completion.
    ///
    /// Each entry is one clock. A valid entry queues its event at the
    /// source, which presents the oldest queued event every cycle and holds
    /// it until accepted, so no event is dropped. `downstream_tready` comes
    /// from the entry. After the script ends the consumer is always ready
    /// and clocking continues until the source is empty and the pipeline is
    /// quiescent.
    pub fn run_trace(mut self, inputs: &[CycleInput]) -> Result<PipelineRun, Error> {
        let events: Vec<Event> = inputs
            .iter()
            .filter(|c| c.tvalid)
            .map(|c| {
                let mut e = c.tdata;
                e.packet_last = c.tlast;
                e
            })
            .collect();
        validate_stream(&events, self.config.params.geometry)?;

        let mut pending: VecDeque<CycleInput> = VecDeque::new();
        let mut outputs = Vec::with_capacity(events.len());
        let mut script = inputs.iter();
        loop {
            let (downstream_tready, exhausted) = match script.next() {
                Some(c) => {
                    if c.tvalid {
                        pending.push_back(*c);
                    }
                    (c.downstream_tready, false)
                }
                None => (true, true),
            };
            if exhausted && pending.is_empty() && self.is_quiescent() {
                break;
            }
            let offer = match pending.front() {
                Some(c) => CycleInput {
                    downstream_tready,
                    ..*c
                },
                None => CycleInput::idle(downstream_tready),
            };
            let result = self.step(&offer);
            if offer.tvalid && result.upstream_tready {
                pending.pop_front();
            }
            if let Some(out) = result.output {
                outputs.push(out);
            }
        }
        let map = self.time_map();
        Ok(PipelineRun {
            outputs,
            map,
            trace: self.trace,
        })
    }
}

/// Result of [`PipelineSim::run_trace`].
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub outputs: Vec<OutputBeat>,
    pub map: TimeMap,
    pub trace: PipelineTrace,
}
