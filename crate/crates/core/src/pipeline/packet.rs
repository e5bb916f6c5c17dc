use crate::chip::NeuronAddress;
use crate::fabric::NodeAddress;
use crate::sim::SimTime;

/// Wire size of one routed event: 2 bytes destination neuron, 6 bytes deadline.
pub const EVENT_ENCODING_BYTES: u64 = 8;
pub const DEFAULT_HEADER_BYTES: u32 = 16;
const DEADLINE_WIRE_BITS: u32 = 48;

/// Where an event came from. Simulator bookkeeping only; not part of the
/// wire encoding.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EventTrace {
    pub origin: NodeAddress,
    pub source_neuron: NeuronAddress,
    pub emit_time: SimTime,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct RoutedEvent {
    pub dest_neuron: NeuronAddress,
    /// Expanded source time plus axonal delay.
    pub deadline: SimTime,
    pub trace: EventTrace,
}

impl RoutedEvent {
    /// Little-endian wire form. `None` if the deadline needs more than 48 bits.
    pub fn encode_wire(&self) -> Option<[u8; EVENT_ENCODING_BYTES as usize]> {
        let d = self.deadline.as_ns();
        if d >> DEADLINE_WIRE_BITS != 0 {
            return None;
        }
        let mut out = [0u8; 8];
        out[..2].copy_from_slice(&self.dest_neuron.value().to_le_bytes());
        out[2..].copy_from_slice(&d.to_le_bytes()[..6]);
        Some(out)
    }

    /// Inverse of [`RoutedEvent::encode_wire`]; returns `(dest_neuron, deadline)`.
    pub fn decode_wire(bytes: &[u8; 8]) -> Option<(NeuronAddress, SimTime)> {
        let neuron = NeuronAddress::new(u16::from_le_bytes([bytes[0], bytes[1]]) as u32).ok()?;
        let mut d = [0u8; 8];
        d[..6].copy_from_slice(&bytes[2..]);
        Some((neuron, SimTime::from_ns(u64::from_le_bytes(d))))
    }
}

/// Unique packet identity: origin node, bucket, per-bucket sequence.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PacketId {
    pub origin: NodeAddress,
    pub bucket: u16,
    pub sequence: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PulsePacket {
    pub id: PacketId,
    pub dest_node: NodeAddress,
    pub header_bytes: u32,
    pub events: Vec<RoutedEvent>,
    pub created_at: SimTime,
}

impl PulsePacket {
    pub fn size_bytes(&self) -> u64 {
        self.header_bytes as u64 + self.events.len() as u64 * EVENT_ENCODING_BYTES
    }

    #[cfg(test)]
    pub(crate) fn for_test(id: PacketId, dest_node: NodeAddress, events: usize) -> Self {
        let ev = RoutedEvent {
            dest_neuron: NeuronAddress::default(),
            deadline: SimTime::from_us(100),
            trace: EventTrace {
                origin: id.origin,
                source_neuron: NeuronAddress::default(),
                emit_time: SimTime::ZERO,
            },
        };
        PulsePacket {
            id,
            dest_node,
            header_bytes: DEFAULT_HEADER_BYTES,
            events: vec![ev; events],
            created_at: SimTime::ZERO,
        }
    }
}
