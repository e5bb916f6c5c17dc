//! Event-driven FPGA→host ring session with pluggable delays, used to check
//! exactly-once delivery under arbitrary notification timing.

use crate::fabric::NodeAddress;
use crate::sim::{ComponentId, Scheduler, SimTime};

use super::ring::{FpgaRingWriter, HostRingReader, RingLayout, RingWrite};
use super::rma::{Endpoint, Notification, RmaEngine};
use super::TransportError;

/// Timing knobs for a ring session; implementations may be random.
pub trait SessionDelays {
    /// Extra delay on top of the network latency for a write announcement.
    fn notification_delay(&mut self) -> SimTime;
    /// Extra delay for a credit notification.
    fn credit_delay(&mut self) -> SimTime;
    /// If `Some(d)`, an already delivered notification is replayed after `d`.
    fn replay_stale(&mut self) -> Option<SimTime>;
    /// Time until the next host poll. Must be positive.
    fn poll_gap(&mut self) -> SimTime;
}

#[derive(Copy, Clone, Debug)]
pub struct FixedDelays {
    pub notification: SimTime,
    pub credit: SimTime,
    pub poll_gap: SimTime,
}

impl SessionDelays for FixedDelays {
    fn notification_delay(&mut self) -> SimTime {
        self.notification
    }

    fn credit_delay(&mut self) -> SimTime {
        self.credit
    }

    fn replay_stale(&mut self) -> Option<SimTime> {
        None
    }

    fn poll_gap(&mut self) -> SimTime {
        self.poll_gap
    }
}

#[derive(Clone, Debug, Default)]
pub struct SessionReport {
    pub consumed: Vec<Vec<u8>>,
    /// Every invariant breach observed, in order. Empty on a correct run.
    pub violations: Vec<String>,
    pub stalls: u64,
    pub max_stall: SimTime,
    pub polls: u64,
    pub finished_at: SimTime,
}

enum Act {
    Write(usize),
    Announce(Notification),
    Credit(Notification),
    Poll,
}

const FPGA: ComponentId = ComponentId(0);
const HOST: ComponentId = ComponentId(1);

/// Runs one FPGA writing `writes` (at their times, non-decreasing) into a
/// host ring of `capacity` entries until the host has consumed everything.
pub fn run_ring_session(
    capacity: u64,
    latency: SimTime,
    writes: &[(SimTime, Vec<u8>)],
    delays: &mut dyn SessionDelays,
) -> Result<SessionReport, TransportError> {
    let host_ep = Endpoint::Host(0);
    let fpga_ep = Endpoint::Fpga(NodeAddress(0));
    let layout = RingLayout::new(capacity, 0)?;
    let mut rma = RmaEngine::new(latency);
    let mut writer = FpgaRingWriter::new(&mut rma, fpga_ep, host_ep, layout);
    let mut reader = HostRingReader::new(&mut rma, host_ep, fpga_ep, layout);

    let mut sched: Scheduler<Act> = Scheduler::new();
    for (i, (t, _)) in writes.iter().enumerate() {
        sched
            .schedule(*t, FPGA, Act::Write(i))
            .expect("write times are in the future");
    }
    sched
        .schedule(SimTime::ZERO, HOST, Act::Poll)
        .expect("time zero");

    let mut report = SessionReport::default();
    let mut announced: Vec<Notification> = Vec::new();
    let mut credits: Vec<Notification> = Vec::new();
    let mut stall_since: Option<SimTime> = None;
    let mut error: Option<TransportError> = None;
    let total = writes.len();

    sched.run_to_completion(|s, action| {
        if error.is_some() {
            return;
        }
        let now = s.now();
        let mut step = || -> Result<(), TransportError> {
            match action.payload {
                Act::Write(i) => match writer.fpga_ring_write(&mut rma, &writes[i].1, now)? {
                    RingWrite::Written(n) => {
                        let entry = writer.write_ptr() - 1;
                        if entry >= capacity && entry - capacity >= reader.read_ptr() {
                            report.violations.push(format!(
                                "entry {entry} overwrote unconsumed entry {}",
                                entry - capacity
                            ));
                        }
                        let at = n.arrive_time + delays.notification_delay();
                        s.schedule(at, HOST, Act::Announce(n)).expect("future");
                        if let Some(d) = delays.replay_stale() {
                            if let Some(old) = announced.first().copied() {
                                s.schedule(now + d, HOST, Act::Announce(old)).expect("future");
                            }
                        }
                        announced.push(n);
                    }
                    RingWrite::Stalled => {
                        stall_since.get_or_insert(now);
                    }
                },
                Act::Announce(n) => reader.on_notification(&n),
                Act::Credit(n) => {
                    let before = writer.credit();
                    writer.on_credit(&n);
                    let freed = writer.credit() > before;
                    let was_stalled = writer.is_stalled();
                    let resumed = writer.resume(&mut rma, now)?;
                    if was_stalled && freed && resumed.is_empty() {
                        report
                            .violations
                            .push(format!("writer still stalled after credit at {now}"));
                    }
                    for n in resumed {
                        let at = n.arrive_time + delays.notification_delay();
                        s.schedule(at, HOST, Act::Announce(n)).expect("future");
                        announced.push(n);
                    }
                    if let (Some(since), false) = (stall_since, writer.is_stalled()) {
                        report.stalls += 1;
                        report.max_stall = report.max_stall.max(now - since);
                        stall_since = None;
                    }
                }
                Act::Poll => {
                    report.polls += 1;
                    let poll = reader.host_poll(&mut rma, now)?;
                    report.consumed.extend(poll.records);
                    if let Some(c) = poll.credit {
                        let at = c.arrive_time + delays.credit_delay();
                        s.schedule(at, FPGA, Act::Credit(c)).expect("future");
                        if let Some(d) = delays.replay_stale() {
                            if let Some(old) = credits.first().copied() {
                                s.schedule(now + d, FPGA, Act::Credit(old)).expect("future");
                            }
                        }
                        credits.push(c);
                    }
                    if report.consumed.len() < total {
                        let gap = delays.poll_gap().max(SimTime::from_ns(1));
                        s.schedule(now + gap, HOST, Act::Poll).expect("future");
                    }
                }
            }
            Ok(())
        };
        if let Err(e) = step() {
            error = Some(e);
            return;
        }
        if writer.write_ptr() - writer.credit() > capacity {
            report.violations.push(format!(
                "write_ptr {} exceeds credit {} by more than {capacity}",
                writer.write_ptr(),
                writer.credit()
            ));
        }
        if reader.read_ptr() > reader.notified_write_ptr()
            || reader.notified_write_ptr() > writer.write_ptr()
        {
            report.violations.push(format!(
                "pointer order broken: read {} notified {} write {}",
                reader.read_ptr(),
                reader.notified_write_ptr(),
                writer.write_ptr()
            ));
        }
        if writer.credit() > reader.read_ptr() {
            report.violations.push("credit ahead of host read pointer".into());
        }
    });
    if let Some(e) = error {
        return Err(e);
    }
    report.finished_at = sched.now();
    if report.consumed.len() != total {
        report.violations.push(format!(
            "session ended with {} of {total} records consumed",
            report.consumed.len()
        ));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn steady_session_is_exactly_once() {
        let writes: Vec<_> = (0..100u64)
            .map(|i| (SimTime::from_ns(i * 10), i.to_le_bytes().to_vec()))
            .collect();
        let mut delays = FixedDelays {
            notification: SimTime::ZERO,
            credit: SimTime::from_ns(50),
            poll_gap: SimTime::from_ns(300),
        };
        let r = run_ring_session(4, SimTime::from_ns(100), &writes, &mut delays).unwrap();
        assert!(r.violations.is_empty(), "{:?}", r.violations);
        let expected: Vec<_> = writes.into_iter().map(|(_, w)| w).collect();
        assert_eq!(r.consumed, expected);
        assert!(r.stalls > 0);
    }

    #[test]
    fn empty_session() {
        let mut delays = FixedDelays {
            notification: SimTime::ZERO,
            credit: SimTime::ZERO,
            poll_gap: SimTime::from_ns(1),
        };
        let r = run_ring_session(2, SimTime::from_ns(1), &[], &mut delays).unwrap();
        assert!(r.consumed.is_empty() && r.violations.is_empty());
    }
}
