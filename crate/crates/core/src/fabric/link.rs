use serde::{Deserialize, Serialize};

use crate::sim::SimTime;

pub const MAX_LANES: u8 = 12;
pub const DEFAULT_LANE_RATE_BPS: u64 = 8_400_000_000;
const PS_PER_NS: u64 = 1_000;
const PS_PER_S: u128 = 1_000_000_000_000;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkParams {
    pub lanes: u8,
    pub lane_rate_bps: u64,
    /// Per-hop latency added after serialization.
    pub latency: SimTime,
}

impl Default for LinkParams {
    fn default() -> Self {
        LinkParams {
            lanes: MAX_LANES,
            lane_rate_bps: DEFAULT_LANE_RATE_BPS,
            latency: SimTime::from_ns(600),
        }
    }
}

impl LinkParams {
    pub fn bandwidth_bps(&self) -> u64 {
        self.lanes as u64 * self.lane_rate_bps
    }

    /// Serialization time in picoseconds, rounded up.
    pub fn serialization_ps(&self, bytes: u64) -> u64 {
        let bits = bytes as u128 * 8;
        let bw = self.bandwidth_bps() as u128;
        (bits * PS_PER_S).div_ceil(bw) as u64
    }

    /// Serialization time in whole nanoseconds, rounded up.
    pub fn serialization_ns(&self, bytes: u64) -> SimTime {
        SimTime::from_ns(self.serialization_ps(bytes).div_ceil(PS_PER_NS))
    }
}

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct LinkStats {
    pub bytes_sent: u64,
    pub packets_sent: u64,
    /// Accumulated serialization time.
    pub busy_time_ps: u64,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct Transmission {
    pub start_ps: u64,
    pub end_ps: u64,
    pub arrival: SimTime,
}

/// One direction of one link. Serialization is tracked in picoseconds so
/// back-to-back packets do not accumulate nanosecond rounding.
#[derive(Clone, Debug)]
pub struct LinkModel {
    params: LinkParams,
    busy_until_ps: u64,
    last_depart: SimTime,
    stats: LinkStats,
}

impl LinkModel {
    pub fn new(params: LinkParams) -> Self {
        LinkModel {
            params,
            busy_until_ps: 0,
            last_depart: SimTime::ZERO,
            stats: LinkStats::default(),
        }
    }

    pub fn params(&self) -> &LinkParams {
        &self.params
    }

    pub fn stats(&self) -> &LinkStats {
        &self.stats
    }

    pub fn busy_until_ps(&self) -> u64 {
        self.busy_until_ps
    }

    /// Serializes `size_bytes` starting no earlier than `depart` and no
    /// earlier than the end of the previous packet. Arrival is rounded up
    /// to the next whole nanosecond. Departures must be non-decreasing.
    pub fn transmit(&mut self, size_bytes: u64, depart: SimTime) -> Transmission {
        assert!(
            depart >= self.last_depart,
            "link departures must be non-decreasing ({depart} < {})",
            self.last_depart
        );
        self.last_depart = depart;
        let start_ps = (depart.as_ns() * PS_PER_NS).max(self.busy_until_ps);
        let ser = self.params.serialization_ps(size_bytes);
        let end_ps = start_ps + ser;
        self.busy_until_ps = end_ps;
        self.stats.bytes_sent += size_bytes;
        self.stats.packets_sent += 1;
        self.stats.busy_time_ps += ser;
        Transmission {
            start_ps,
            end_ps,
            arrival: SimTime::from_ns(end_ps.div_ceil(PS_PER_NS)) + self.params.latency,
        }
    }
}
