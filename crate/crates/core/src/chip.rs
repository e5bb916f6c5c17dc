//! Counting integrate-and-reset stand-in for the spiking chip, plus the
//! rate-limited chip-to-FPGA output port.

use std::collections::VecDeque;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::SimTime;

pub const NEURON_ADDRESS_BITS: u32 = 14;
pub const MAX_NEURON_ADDRESS: u16 = (1 << NEURON_ADDRESS_BITS) - 1;
/// Neuron circuits per chip.
pub const MAX_NEURONS_PER_CHIP: u16 = 512;
pub const TIMESTAMP_BITS: u32 = 8;
pub const TIMESTAMP_MODULUS: u64 = 1 << TIMESTAMP_BITS;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ChipError {
    #[error("neuron address {0} does not fit in {NEURON_ADDRESS_BITS} bits")]
    AddressOutOfRange(u32),
    #[error("neuron {neuron} does not exist on a chip with {neuron_count} neurons")]
    UnknownNeuron { neuron: u16, neuron_count: u16 },
    #[error("spike schedule is not strictly increasing at index {index}")]
    NonMonotonicSchedule { index: usize },
    #[error("output event at {at} precedes the previous output at {last}")]
    OutOfOrderOutput { at: SimTime, last: SimTime },
    #[error("invalid chip configuration: {0}")]
    InvalidConfig(&'static str),
}

#[derive(
    Copy, Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(try_from = "u32", into = "u16")]
pub struct NeuronAddress(u16);

impl NeuronAddress {
    pub fn new(value: u32) -> Result<Self, ChipError> {
        if value > MAX_NEURON_ADDRESS as u32 {
            return Err(ChipError::AddressOutOfRange(value));
        }
        Ok(NeuronAddress(value as u16))
    }

    pub fn value(self) -> u16 {
        self.0
    }
}

impl TryFrom<u32> for NeuronAddress {
    type Error = ChipError;

    fn try_from(value: u32) -> Result<Self, Self::Error> {
        NeuronAddress::new(value)
    }
}

impl From<NeuronAddress> for u16 {
    fn from(a: NeuronAddress) -> u16 {
        a.0
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChipConfig {
    pub neuron_count: u16,
    /// Input events needed per output spike (`k`).
    pub integration_threshold: u32,
    /// Zero disables the refractory period.
    pub refractory: SimTime,
    /// Duration of one timestamp tick; one 125 MHz clock cycle by default.
    pub tick: SimTime,
    pub max_events_per_cycle: u32,
}

impl Default for ChipConfig {
    fn default() -> Self {
        ChipConfig {
            neuron_count: MAX_NEURONS_PER_CHIP,
            integration_threshold: 1,
            refractory: SimTime::ZERO,
            tick: SimTime::from_ns(8),
            max_events_per_cycle: 2,
        }
    }
}

impl ChipConfig {
    pub fn validate(&self) -> Result<(), ChipError> {
        if self.neuron_count == 0 || self.neuron_count > MAX_NEURONS_PER_CHIP {
            return Err(ChipError::InvalidConfig("neuron_count must be in 1..=512"));
        }
        if self.integration_threshold == 0 {
            return Err(ChipError::InvalidConfig("integration threshold must be ≥1"));
        }
        if self.tick == SimTime::ZERO {
            return Err(ChipError::InvalidConfig("tick must be positive"));
        }
        if self.max_events_per_cycle == 0 {
            return Err(ChipError::InvalidConfig("max_events_per_cycle must be ≥1"));
        }
        Ok(())
    }
}

/// 8-bit wrapping timestamp of time `t`.
pub fn timestamp8(t: SimTime, tick: SimTime) -> u8 {
    ((t.as_ns() / tick.as_ns()) % TIMESTAMP_MODULUS) as u8
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub struct ChipEvent {
    pub address: NeuronAddress,
    pub timestamp8: u8,
    /// Full-width emission time; simulator-internal, never on the wire.
    pub emit_time: SimTime,
}

impl ChipEvent {
    pub fn stamp(address: NeuronAddress, emit_time: SimTime, tick: SimTime) -> Self {
        ChipEvent {
            address,
            timestamp8: timestamp8(emit_time, tick),
            emit_time,
        }
    }
}

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq)]
pub struct NeuronState {
    pub accumulated_inputs: u32,
    pub last_spike: Option<SimTime>,
}

/// An event that has crossed the chip-to-FPGA link.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct ReleasedEvent {
    pub event: ChipEvent,
    pub released_at: SimTime,
}

/// FIFO output link releasing at most `limit` events per tick.
#[derive(Clone, Debug)]
struct OutputPort {
    tick: u64,
    limit: u32,
    slot_tick: Option<u64>,
    slot_used: u32,
    last_emit: SimTime,
    queue: VecDeque<ReleasedEvent>,
}

impl OutputPort {
    fn new(tick: SimTime, limit: u32) -> Self {
        OutputPort {
            tick: tick.as_ns(),
            limit,
            slot_tick: None,
            slot_used: 0,
            last_emit: SimTime::ZERO,
            queue: VecDeque::new(),
        }
    }

    fn push(&mut self, event: ChipEvent) -> Result<SimTime, ChipError> {
        if event.emit_time < self.last_emit {
            return Err(ChipError::OutOfOrderOutput {
                at: event.emit_time,
                last: self.last_emit,
            });
        }
        self.last_emit = event.emit_time;
        let own_tick = event.emit_time.as_ns() / self.tick;
        let release_tick = match self.slot_tick {
            Some(t) if t >= own_tick && self.slot_used < self.limit => {
                self.slot_used += 1;
                t
            }
            Some(t) if t >= own_tick => {
                self.slot_used = 1;
                t + 1
            }
            _ => {
                self.slot_used = 1;
                own_tick
            }
        };
        self.slot_tick = Some(release_tick);
        let released_at = event
            .emit_time
            .max(SimTime::from_ns(release_tick * self.tick));
        self.queue.push_back(ReleasedEvent { event, released_at });
        Ok(released_at)
    }
}

/// One chip: neuron counters plus its output port.
#[derive(Clone, Debug)]
pub struct Chip {
    config: ChipConfig,
    neurons: Vec<NeuronState>,
    port: OutputPort,
}

impl Chip {
    pub fn new(config: ChipConfig) -> Result<Self, ChipError> {
        config.validate()?;
        Ok(Chip {
            neurons: vec![NeuronState::default(); config.neuron_count as usize],
            port: OutputPort::new(config.tick, config.max_events_per_cycle),
            config,
        })
    }

    pub fn config(&self) -> &ChipConfig {
        &self.config
    }

    pub fn neuron(&self, neuron: NeuronAddress) -> Result<&NeuronState, ChipError> {
        self.check(neuron)?;
        Ok(&self.neurons[neuron.value() as usize])
    }

    fn check(&self, neuron: NeuronAddress) -> Result<(), ChipError> {
        if neuron.value() >= self.config.neuron_count {
            return Err(ChipError::UnknownNeuron {
                neuron: neuron.value(),
                neuron_count: self.config.neuron_count,
            });
        }
        Ok(())
    }

    /// Integrates one input event. When the neuron reaches the threshold it
    /// spikes at `at`, its counter resets and the spike is queued on the
    /// output port. Inputs arriving while refractory are discarded.
    pub fn apply_input(
        &mut self,
        neuron: NeuronAddress,
        at: SimTime,
    ) -> Result<Option<ChipEvent>, ChipError> {
        self.check(neuron)?;
        let refractory = self.config.refractory;
        let state = &mut self.neurons[neuron.value() as usize];
        if refractory > SimTime::ZERO {
            if let Some(last) = state.last_spike {
                if at < last.checked_add(refractory).unwrap_or(SimTime::MAX) {
                    return Ok(None);
                }
            }
        }
        state.accumulated_inputs += 1;
        if state.accumulated_inputs < self.config.integration_threshold {
            return Ok(None);
        }
        state.accumulated_inputs = 0;
        state.last_spike = Some(at);
        let event = ChipEvent::stamp(neuron, at, self.config.tick);
        self.port.push(event)?;
        Ok(Some(event))
    }

    /// Spikes of an externally driven neuron. Pure: the caller enqueues each
    /// event with [`Chip::enqueue_output`] when its emission time comes.
    pub fn emit_external(
        &self,
        neuron: NeuronAddress,
        schedule: &[SimTime],
    ) -> Result<Vec<ChipEvent>, ChipError> {
        self.check(neuron)?;
        if let Some(i) = schedule.windows(2).position(|w| w[1] <= w[0]) {
            return Err(ChipError::NonMonotonicSchedule { index: i + 1 });
        }
        Ok(schedule
            .iter()
            .map(|&t| ChipEvent::stamp(neuron, t, self.config.tick))
            .collect())
    }

    /// Queues an event on the output link; returns when it will be released.
    /// Events must be enqueued in non-decreasing emission order.
    pub fn enqueue_output(&mut self, event: ChipEvent) -> Result<SimTime, ChipError> {
        self.port.push(event)
    }

    /// Releases every queued event whose release time falls before the end
    /// of `window`, in FIFO order.
    pub fn poll_output(&mut self, window: Range<SimTime>) -> Vec<ReleasedEvent> {
        let mut out = Vec::new();
        while let Some(front) = self.port.queue.front() {
            if front.released_at >= window.end {
                break;
            }
            out.extend(self.port.queue.pop_front());
        }
        out
    }

    /// Release time of the oldest queued event.
    pub fn next_release(&self) -> Option<SimTime> {
        self.port.queue.front().map(|r| r.released_at)
    }

    pub fn backlog(&self) -> usize {
        self.port.queue.len()
    }
}
