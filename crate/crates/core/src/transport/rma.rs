//! Remote memory access: put/get with Requester, Responder and Completer
//! notifications.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::BitOr;

use crate::fabric::NodeAddress;
use crate::sim::SimTime;

use super::TransportError;

pub const DEFAULT_MTU: usize = 4096;
pub const NOTIFICATION_PAYLOAD_BYTES: usize = 8;

/// A memory-owning party on the network.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Endpoint {
    Host(u16),
    Fpga(NodeAddress),
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Host(h) => write!(f, "host {h}"),
            Endpoint::Fpga(n) => write!(f, "fpga@{}", n.0),
        }
    }
}

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq)]
pub struct NotifFlags(u8);

impl NotifFlags {
    pub const NONE: NotifFlags = NotifFlags(0);
    pub const REQUESTER: NotifFlags = NotifFlags(1);
    pub const RESPONDER: NotifFlags = NotifFlags(2);
    pub const COMPLETER: NotifFlags = NotifFlags(4);
    pub const ALL: NotifFlags = NotifFlags(7);

    pub fn contains(self, other: NotifFlags) -> bool {
        self.0 & other.0 == other.0
    }
}

impl BitOr for NotifFlags {
    type Output = NotifFlags;

    fn bitor(self, rhs: NotifFlags) -> NotifFlags {
        NotifFlags(self.0 | rhs.0)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum NotificationUnit {
    Requester,
    Responder,
    Completer,
}

/// Up to eight bytes carried by a notification.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq)]
pub struct NotifPayload {
    len: u8,
    bytes: [u8; NOTIFICATION_PAYLOAD_BYTES],
}

impl NotifPayload {
    pub fn new(data: &[u8]) -> Result<Self, TransportError> {
        if data.len() > NOTIFICATION_PAYLOAD_BYTES {
            return Err(TransportError::PayloadTooLarge {
                len: data.len(),
                limit: NOTIFICATION_PAYLOAD_BYTES,
            });
        }
        let mut bytes = [0; NOTIFICATION_PAYLOAD_BYTES];
        bytes[..data.len()].copy_from_slice(data);
        Ok(NotifPayload {
            len: data.len() as u8,
            bytes,
        })
    }

    pub fn from_u64(v: u64) -> Self {
        NotifPayload {
            len: 8,
            bytes: v.to_le_bytes(),
        }
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.bytes[..self.len as usize]
    }

    pub fn as_u64(&self) -> Option<u64> {
        (self.len == 8).then(|| u64::from_le_bytes(self.bytes))
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct Notification {
    pub unit: NotificationUnit,
    /// Endpoint whose notification queue receives it.
    pub endpoint: Endpoint,
    pub payload: NotifPayload,
    pub arrive_time: SimTime,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum RmaKind {
    Put,
    Get,
}

/// A put or get request. For gets `payload` is empty and `len` bytes are read.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RmaMessage {
    pub kind: RmaKind,
    pub src: Endpoint,
    pub dest: Endpoint,
    pub region_offset: u64,
    pub payload: Vec<u8>,
    pub len: usize,
    pub notif_flags: NotifFlags,
    pub notif_payload: NotifPayload,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Completion {
    /// In causal order: requester, responder, completer.
    pub notifications: Vec<Notification>,
    /// Data returned by a get.
    pub data: Vec<u8>,
}

#[derive(Clone, Debug)]
struct Region {
    offset: u64,
    bytes: Vec<u8>,
}

/// Memory regions of every endpoint plus the one-way network latency.
#[derive(Clone, Debug)]
pub struct RmaEngine {
    mtu: usize,
    latency: SimTime,
    regions: BTreeMap<Endpoint, Vec<Region>>,
}

impl RmaEngine {
    pub fn new(latency: SimTime) -> Self {
        RmaEngine {
            mtu: DEFAULT_MTU,
            latency,
            regions: BTreeMap::new(),
        }
    }

    pub fn with_mtu(mut self, mtu: usize) -> Self {
        self.mtu = mtu;
        self
    }

    pub fn latency(&self) -> SimTime {
        self.latency
    }

    pub fn register_region(&mut self, endpoint: Endpoint, offset: u64, len: usize) {
        self.regions.entry(endpoint).or_default().push(Region {
            offset,
            bytes: vec![0; len],
        });
    }

    fn region_mut(
        &mut self,
        endpoint: Endpoint,
        offset: u64,
        len: usize,
    ) -> Result<&mut [u8], TransportError> {
        let unregistered = TransportError::UnregisteredRegion {
            endpoint,
            offset,
            len,
        };
        let region = self
            .regions
            .get_mut(&endpoint)
            .and_then(|rs| {
                rs.iter_mut().find(|r| {
                    offset >= r.offset && offset + len as u64 <= r.offset + r.bytes.len() as u64
                })
            })
            .ok_or(unregistered)?;
        let start = (offset - region.offset) as usize;
        Ok(&mut region.bytes[start..start + len])
    }

    pub fn read(&self, endpoint: Endpoint, offset: u64, len: usize) -> Result<&[u8], TransportError> {
        let region = self
            .regions
            .get(&endpoint)
            .and_then(|rs| {
                rs.iter().find(|r| {
                    offset >= r.offset && offset + len as u64 <= r.offset + r.bytes.len() as u64
                })
            })
            .ok_or(TransportError::UnregisteredRegion {
                endpoint,
                offset,
                len,
            })?;
        let start = (offset - region.offset) as usize;
        Ok(&region.bytes[start..start + len])
    }

    pub fn execute(&mut self, msg: &RmaMessage, now: SimTime) -> Result<Completion, TransportError> {
        match msg.kind {
            RmaKind::Put => self.rma_put(
                msg.src,
                msg.dest,
                msg.region_offset,
                &msg.payload,
                msg.notif_flags,
                msg.notif_payload,
                now,
            ),
            RmaKind::Get => self.rma_get(
                msg.src,
                msg.dest,
                msg.region_offset,
                msg.len,
                msg.notif_flags,
                msg.notif_payload,
                now,
            ),
        }
    }

    /// Writes `payload` into `dest` memory. The data is visible as soon as
    /// the call returns; notifications carry their modeled arrival times.
    #[allow(clippy::too_many_arguments)]
    pub fn rma_put(
        &mut self,
        src: Endpoint,
        dest: Endpoint,
        offset: u64,
        payload: &[u8],
        flags: NotifFlags,
        notif_payload: NotifPayload,
        now: SimTime,
    ) -> Result<Completion, TransportError> {
        if payload.len() > self.mtu {
            return Err(TransportError::PayloadTooLarge {
                len: payload.len(),
                limit: self.mtu,
            });
        }
        self.region_mut(dest, offset, payload.len())?
            .copy_from_slice(payload);
        let arrive = now + self.latency;
        let mut notifications = Vec::new();
        let mut emit = |flag, unit, endpoint, at| {
            if flags.contains(flag) {
                notifications.push(Notification {
                    unit,
                    endpoint,
                    payload: notif_payload,
                    arrive_time: at,
                });
            }
        };
        emit(NotifFlags::REQUESTER, NotificationUnit::Requester, src, now);
        emit(NotifFlags::RESPONDER, NotificationUnit::Responder, dest, arrive);
        emit(NotifFlags::COMPLETER, NotificationUnit::Completer, dest, arrive);
        Ok(Completion {
            notifications,
            data: Vec::new(),
        })
    }

    /// Reads `len` bytes of `dest` memory back to `src`.
    #[allow(clippy::too_many_arguments)]
    pub fn rma_get(
        &mut self,
        src: Endpoint,
        dest: Endpoint,
        offset: u64,
        len: usize,
        flags: NotifFlags,
        notif_payload: NotifPayload,
        now: SimTime,
    ) -> Result<Completion, TransportError> {
        if len > self.mtu {
            return Err(TransportError::PayloadTooLarge {
                len,
                limit: self.mtu,
            });
        }
        let data = self.read(dest, offset, len)?.to_vec();
        let mut notifications = Vec::new();
        let mut emit = |flag, unit, endpoint, at| {
            if flags.contains(flag) {
                notifications.push(Notification {
                    unit,
                    endpoint,
                    payload: notif_payload,
                    arrive_time: at,
                });
            }
        };
        emit(NotifFlags::REQUESTER, NotificationUnit::Requester, src, now);
        emit(
            NotifFlags::RESPONDER,
            NotificationUnit::Responder,
            dest,
            now + self.latency,
        );
        emit(
            NotifFlags::COMPLETER,
            NotificationUnit::Completer,
            src,
            now + self.latency + self.latency,
        );
        Ok(Completion {
            notifications,
            data,
        })
    }
}
