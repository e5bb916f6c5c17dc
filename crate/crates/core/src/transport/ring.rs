//! FPGA-to-host ring buffer synchronized through notification payloads.
//!
//! The FPGA puts fixed 32-byte entries into a host ring and announces each
//! new `write_ptr` in a completer notification. The host consumes up to the
//! highest announced pointer and returns its `read_ptr` to the FPGA with a
//! small put into the FPGA's credit mailbox. Both pointers only grow; stale
//! or duplicated announcements are ignored.

use std::collections::VecDeque;

use crate::sim::SimTime;

use super::rma::{Endpoint, NotifFlags, NotifPayload, Notification, RmaEngine};
use super::TransportError;

pub const RING_ENTRY_BYTES: usize = 32;
/// One length byte frames the payload.
pub const MAX_RECORD_BYTES: usize = RING_ENTRY_BYTES - 1;
/// FPGA-side mailbox receiving the host's read pointer.
pub const CREDIT_MAILBOX_OFFSET: u64 = 0x0;

pub fn encode_entry(record: &[u8]) -> Result<[u8; RING_ENTRY_BYTES], TransportError> {
    if record.len() > MAX_RECORD_BYTES {
        return Err(TransportError::RecordTooLarge(record.len()));
    }
    let mut entry = [0u8; RING_ENTRY_BYTES];
    entry[0] = record.len() as u8;
    entry[1..=record.len()].copy_from_slice(record);
    Ok(entry)
}

pub fn decode_entry(entry: &[u8]) -> Option<Vec<u8>> {
    let len = *entry.first()? as usize;
    entry.get(1..=len).map(<[u8]>::to_vec)
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct RingLayout {
    pub capacity: u64,
    /// Offset of slot 0 within the host region.
    pub base_offset: u64,
}

impl RingLayout {
    pub fn new(capacity: u64, base_offset: u64) -> Result<Self, TransportError> {
        if !capacity.is_power_of_two() {
            return Err(TransportError::InvalidConfiguration(format!(
                "ring capacity {capacity} is not a power of two"
            )));
        }
        Ok(RingLayout {
            capacity,
            base_offset,
        })
    }

    /// Entry `ptr` lives in slot `ptr mod capacity`.
    pub fn slot_offset(&self, ptr: u64) -> u64 {
        self.base_offset + (ptr % self.capacity) * RING_ENTRY_BYTES as u64
    }

    pub fn region_bytes(&self) -> usize {
        self.capacity as usize * RING_ENTRY_BYTES
    }
}

#[derive(Debug, PartialEq, Eq)]
pub enum RingWrite {
    /// Entry written; the notification announces the new write pointer.
    Written(Notification),
    /// Ring full: the record waits in the FPGA send queue until credit returns.
    Stalled,
}

/// FPGA side: send queue, write pointer and the last credited read pointer.
#[derive(Clone, Debug)]
pub struct FpgaRingWriter {
    fpga: Endpoint,
    host: Endpoint,
    layout: RingLayout,
    write_ptr: u64,
    credit: u64,
    queue: VecDeque<[u8; RING_ENTRY_BYTES]>,
    stalls: u64,
}

impl FpgaRingWriter {
    /// Registers the credit mailbox on the FPGA endpoint.
    pub fn new(rma: &mut RmaEngine, fpga: Endpoint, host: Endpoint, layout: RingLayout) -> Self {
        rma.register_region(fpga, CREDIT_MAILBOX_OFFSET, 8);
        FpgaRingWriter {
            fpga,
            host,
            layout,
            write_ptr: 0,
            credit: 0,
            queue: VecDeque::new(),
            stalls: 0,
        }
    }

    pub fn write_ptr(&self) -> u64 {
        self.write_ptr
    }

    pub fn credit(&self) -> u64 {
        self.credit
    }

    pub fn queued(&self) -> usize {
        self.queue.len()
    }

    pub fn is_stalled(&self) -> bool {
        !self.queue.is_empty()
    }

    /// Number of times the writer entered the stalled state.
    pub fn stalls(&self) -> u64 {
        self.stalls
    }

    fn has_space(&self) -> bool {
        self.write_ptr - self.credit < self.layout.capacity
    }

    pub fn fpga_ring_write(
        &mut self,
        rma: &mut RmaEngine,
        record: &[u8],
        now: SimTime,
    ) -> Result<RingWrite, TransportError> {
        let entry = encode_entry(record)?;
        if !self.queue.is_empty() || !self.has_space() {
            if self.queue.is_empty() {
                self.stalls += 1;
            }
            self.queue.push_back(entry);
            return Ok(RingWrite::Stalled);
        }
        self.put_entry(rma, &entry, now).map(RingWrite::Written)
    }

    fn put_entry(
        &mut self,
        rma: &mut RmaEngine,
        entry: &[u8; RING_ENTRY_BYTES],
        now: SimTime,
    ) -> Result<Notification, TransportError> {
        let offset = self.layout.slot_offset(self.write_ptr);
        let next = self.write_ptr + 1;
        let done = rma.rma_put(
            self.fpga,
            self.host,
            offset,
            entry,
            NotifFlags::COMPLETER,
            NotifPayload::from_u64(next),
            now,
        )?;
        self.write_ptr = next;
        Ok(done.notifications[0])
    }

    /// Applies a credit notification; older pointers than the current credit
    /// are ignored.
    pub fn on_credit(&mut self, notification: &Notification) {
        if let Some(read_ptr) = notification.payload.as_u64() {
            if read_ptr <= self.write_ptr {
                self.credit = self.credit.max(read_ptr);
            }
        }
    }

    /// Writes queued records while there is space.
    pub fn resume(
        &mut self,
        rma: &mut RmaEngine,
        now: SimTime,
    ) -> Result<Vec<Notification>, TransportError> {
        let mut out = Vec::new();
        while self.has_space() {
            let Some(entry) = self.queue.pop_front() else {
                break;
            };
            out.push(self.put_entry(rma, &entry, now)?);
        }
        Ok(out)
    }
}

#[derive(Debug, Default, PartialEq, Eq)]
pub struct HostPoll {
    pub records: Vec<Vec<u8>>,
    /// Credit notification for the FPGA, present when anything was consumed.
    pub credit: Option<Notification>,
}

/// Host side of one ring.
#[derive(Clone, Debug)]
pub struct HostRingReader {
    host: Endpoint,
    fpga: Endpoint,
    layout: RingLayout,
    read_ptr: u64,
    notified: u64,
}

impl HostRingReader {
    /// Registers the ring memory on the host endpoint.
    pub fn new(rma: &mut RmaEngine, host: Endpoint, fpga: Endpoint, layout: RingLayout) -> Self {
        rma.register_region(host, layout.base_offset, layout.region_bytes());
        HostRingReader {
            host,
            fpga,
            layout,
            read_ptr: 0,
            notified: 0,
        }
    }

    pub fn read_ptr(&self) -> u64 {
        self.read_ptr
    }

    pub fn notified_write_ptr(&self) -> u64 {
        self.notified
    }

    pub fn on_notification(&mut self, notification: &Notification) {
        if let Some(ptr) = notification.payload.as_u64() {
            self.notified = self.notified.max(ptr);
        }
    }

    /// Consumes entries in `[read_ptr, notified)` and returns the new read
    /// pointer to the FPGA.
    pub fn host_poll(
        &mut self,
        rma: &mut RmaEngine,
        now: SimTime,
    ) -> Result<HostPoll, TransportError> {
        if self.read_ptr >= self.notified {
            return Ok(HostPoll::default());
        }
        let mut records = Vec::with_capacity((self.notified - self.read_ptr) as usize);
        for ptr in self.read_ptr..self.notified {
            let entry = rma.read(self.host, self.layout.slot_offset(ptr), RING_ENTRY_BYTES)?;
            records.push(decode_entry(entry).ok_or(TransportError::CorruptEntry(ptr))?);
        }
        self.read_ptr = self.notified;
        let done = rma.rma_put(
            self.host,
            self.fpga,
            CREDIT_MAILBOX_OFFSET,
            &self.read_ptr.to_le_bytes(),
            NotifFlags::COMPLETER,
            NotifPayload::from_u64(self.read_ptr),
            now,
        )?;
        Ok(HostPoll {
            records,
            credit: done.notifications.first().copied(),
        })
    }
}
