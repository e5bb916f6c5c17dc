//! FPGA register file and the register map used to configure pipelines.
//! The layout is documented in `docs/register_map.md`.

use std::collections::BTreeMap;

use crate::chip::{NeuronAddress, MAX_NEURON_ADDRESS};
use crate::fabric::NodeAddress;
use crate::pipeline::{BucketConfig, PipelineConfig, RouteEntry, RouteTable, MAX_BUCKETS};
use crate::sim::SimTime;

use super::TransportError;

pub const REG_TICK_NS: u64 = 0x0008;
pub const REG_HEADER_BYTES: u64 = 0x0010;
pub const REG_BUCKET_COUNT: u64 = 0x0018;

pub const BUCKET_BASE: u64 = 0x1000;
pub const BUCKET_STRIDE: u64 = 0x20;
pub const BUCKET_DEST_NODE: u64 = 0x00;
pub const BUCKET_CAPACITY: u64 = 0x08;
pub const BUCKET_TRANSIT_BUDGET_NS: u64 = 0x10;

pub const LUT_BASE: u64 = 0x1_0000;
pub const LUT_STRIDE: u64 = 8;
pub const LUT_ENTRIES: u64 = MAX_NEURON_ADDRESS as u64 + 1;

const LUT_VALID: u64 = 1 << 63;
const LUT_NEURON_MASK: u64 = 0x3fff;
const LUT_BUCKET_SHIFT: u32 = 16;
const LUT_BUCKET_MASK: u64 = 0x3f;
const LUT_DELAY_SHIFT: u32 = 24;
const LUT_DELAY_MASK: u64 = 0xffff_ffff;

pub fn bucket_register(bucket: usize, field: u64) -> u64 {
    BUCKET_BASE + bucket as u64 * BUCKET_STRIDE + field
}

pub fn lut_register(source: NeuronAddress) -> u64 {
    LUT_BASE + source.value() as u64 * LUT_STRIDE
}

/// Bit width of the register at `address`, or `None` if it is not mapped.
pub fn register_width(address: u64) -> Option<u32> {
    if address % 8 != 0 {
        return None;
    }
    match address {
        REG_TICK_NS => Some(32),
        REG_HEADER_BYTES => Some(16),
        REG_BUCKET_COUNT => Some(8),
        a if (BUCKET_BASE..BUCKET_BASE + MAX_BUCKETS as u64 * BUCKET_STRIDE).contains(&a) => {
            match (a - BUCKET_BASE) % BUCKET_STRIDE {
                BUCKET_DEST_NODE => Some(16),
                BUCKET_CAPACITY => Some(16),
                BUCKET_TRANSIT_BUDGET_NS => Some(48),
                _ => None,
            }
        }
        a if (LUT_BASE..LUT_BASE + LUT_ENTRIES * LUT_STRIDE).contains(&a) => Some(64),
        _ => None,
    }
}

/// Packs one lookup-table row into its register value.
pub fn encode_lut_entry(entry: &RouteEntry) -> Result<u64, TransportError> {
    let delay = entry.axonal_delay.as_ns();
    if delay > LUT_DELAY_MASK || entry.bucket_index as u64 > LUT_BUCKET_MASK {
        return Err(TransportError::ValueTooWide {
            address: lut_register(entry.source),
            value: delay,
        });
    }
    Ok(LUT_VALID
        | entry.dest_neuron.value() as u64
        | (entry.bucket_index as u64) << LUT_BUCKET_SHIFT
        | delay << LUT_DELAY_SHIFT)
}

pub fn decode_lut_entry(source: NeuronAddress, word: u64) -> Option<RouteEntry> {
    if word & LUT_VALID == 0 {
        return None;
    }
    Some(RouteEntry {
        source,
        dest_neuron: NeuronAddress::new((word & LUT_NEURON_MASK) as u32).ok()?,
        bucket_index: ((word >> LUT_BUCKET_SHIFT) & LUT_BUCKET_MASK) as u16,
        axonal_delay: SimTime::from_ns((word >> LUT_DELAY_SHIFT) & LUT_DELAY_MASK),
    })
}

/// Sparse 64-bit register file; unwritten registers read as zero.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RegisterFile {
    values: BTreeMap<u64, u64>,
}

impl RegisterFile {
    pub fn write(&mut self, address: u64, value: u64) -> Result<(), TransportError> {
        let width = register_width(address).ok_or(TransportError::UnknownRegister(address))?;
        if width < 64 && value >> width != 0 {
            return Err(TransportError::ValueTooWide { address, value });
        }
        self.values.insert(address, value);
        Ok(())
    }

    pub fn read(&self, address: u64) -> Result<u64, TransportError> {
        register_width(address).ok_or(TransportError::UnknownRegister(address))?;
        Ok(self.values.get(&address).copied().unwrap_or(0))
    }

    /// Register writes that program `config`, in address order.
    pub fn encode_pipeline(config: &PipelineConfig) -> Result<Vec<(u64, u64)>, TransportError> {
        let mut writes = vec![
            (REG_TICK_NS, config.tick.as_ns()),
            (REG_HEADER_BYTES, config.header_bytes as u64),
            (REG_BUCKET_COUNT, config.buckets.len() as u64),
        ];
        for (i, b) in config.buckets.iter().enumerate() {
            writes.push((bucket_register(i, BUCKET_DEST_NODE), b.dest_node.0 as u64));
            writes.push((bucket_register(i, BUCKET_CAPACITY), b.capacity as u64));
            writes.push((
                bucket_register(i, BUCKET_TRANSIT_BUDGET_NS),
                b.transit_budget.as_ns(),
            ));
        }
        for e in config.routes.iter() {
            writes.push((lut_register(e.source), encode_lut_entry(e)?));
        }
        Ok(writes)
    }

    /// Reads a pipeline configuration back out of the registers.
    pub fn decode_pipeline(&self) -> Result<PipelineConfig, TransportError> {
        let tick = self.read(REG_TICK_NS)?;
        if tick == 0 {
            return Err(TransportError::InvalidConfiguration(
                "tick register is zero".into(),
            ));
        }
        let count = self.read(REG_BUCKET_COUNT)? as usize;
        if count > MAX_BUCKETS {
            return Err(TransportError::InvalidConfiguration(format!(
                "bucket count {count} exceeds {MAX_BUCKETS}"
            )));
        }
        let buckets = (0..count)
            .map(|i| {
                Ok(BucketConfig {
                    dest_node: NodeAddress(self.read(bucket_register(i, BUCKET_DEST_NODE))? as u16),
                    capacity: self.read(bucket_register(i, BUCKET_CAPACITY))? as u16,
                    transit_budget: SimTime::from_ns(
                        self.read(bucket_register(i, BUCKET_TRANSIT_BUDGET_NS))?,
                    ),
                })
            })
            .collect::<Result<Vec<_>, TransportError>>()?;
        let lut_end = LUT_BASE + LUT_ENTRIES * LUT_STRIDE;
        let entries = self
            .values
            .range(LUT_BASE..lut_end)
            .filter_map(|(&addr, &word)| {
                let source = NeuronAddress::new(((addr - LUT_BASE) / LUT_STRIDE) as u32).ok()?;
                decode_lut_entry(source, word)
            });
        let routes = RouteTable::from_entries(entries, count)
            .map_err(|e| TransportError::InvalidConfiguration(e.to_string()))?;
        Ok(PipelineConfig {
            tick: SimTime::from_ns(tick),
            header_bytes: self.read(REG_HEADER_BYTES)? as u32,
            buckets,
            routes,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn read_your_write_and_zero_default() {
        let mut rf = RegisterFile::default();
        let addr = lut_register(NeuronAddress::new(42).unwrap());
        assert_eq!(rf.read(addr).unwrap(), 0);
        rf.write(addr, 0xdead_beef).unwrap();
        assert_eq!(rf.read(addr).unwrap(), 0xdead_beef);
    }

    #[test]
    fn unknown_and_misaligned_registers() {
        let mut rf = RegisterFile::default();
        assert_eq!(rf.read(0x0004), Err(TransportError::UnknownRegister(0x0004)));
        assert_eq!(rf.write(0x0000, 1), Err(TransportError::UnknownRegister(0x0000)));
        assert_eq!(
            rf.write(bucket_register(0, 0x18), 1),
            Err(TransportError::UnknownRegister(0x1018))
        );
        assert_eq!(
            rf.read(bucket_register(MAX_BUCKETS, 0)),
            Err(TransportError::UnknownRegister(0x1800))
        );
        assert!(rf.read(LUT_BASE + LUT_ENTRIES * 8).is_err());
    }

    #[test]
    fn width_is_enforced() {
        let mut rf = RegisterFile::default();
        assert!(rf.write(bucket_register(0, BUCKET_DEST_NODE), 0xffff).is_ok());
        assert!(matches!(
            rf.write(bucket_register(0, BUCKET_DEST_NODE), 0x1_0000),
            Err(TransportError::ValueTooWide { .. })
        ));
    }

    #[test]
    fn unprogrammed_file_does_not_decode() {
        assert!(RegisterFile::default().decode_pipeline().is_err());
    }

    fn arb_config() -> impl Strategy<Value = PipelineConfig> {
        (
            1u64..64,
            0u32..64,
            proptest::collection::vec((0u16..1024, 1u16..32, 0u64..100_000), 1..8),
            proptest::collection::btree_map(0u32..16384, (0u32..16384, 0u16..8, 1u64..(1 << 32)), 0..40),
        )
            .prop_map(|(tick, header, buckets, routes)| {
                let n = buckets.len() as u16;
                let buckets: Vec<_> = buckets
                    .into_iter()
                    .map(|(d, c, b)| BucketConfig {
                        dest_node: NodeAddress(d),
                        capacity: c,
                        transit_budget: SimTime::from_ns(b),
                    })
                    .collect();
                let entries = routes.into_iter().map(|(s, (d, b, delay))| RouteEntry {
                    source: NeuronAddress::new(s).unwrap(),
                    dest_neuron: NeuronAddress::new(d).unwrap(),
                    bucket_index: b % n,
                    axonal_delay: SimTime::from_ns(delay),
                });
                PipelineConfig {
                    tick: SimTime::from_ns(tick),
                    header_bytes: header,
                    routes: RouteTable::from_entries(entries, buckets.len()).unwrap(),
                    buckets,
                }
            })
    }

    proptest! {
        #[test]
        fn pipeline_config_survives_the_register_file(cfg in arb_config()) {
            let mut rf = RegisterFile::default();
            for (a, v) in RegisterFile::encode_pipeline(&cfg).unwrap() {
                rf.write(a, v).unwrap();
            }
            prop_assert_eq!(rf.decode_pipeline().unwrap(), cfg);
        }
    }
}
