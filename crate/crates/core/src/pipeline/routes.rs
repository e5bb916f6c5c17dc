use std::collections::BTreeMap;

use crate::chip::NeuronAddress;
use crate::sim::SimTime;

use super::PipelineError;

/// One lookup-table row.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct RouteEntry {
    pub source: NeuronAddress,
    pub dest_neuron: NeuronAddress,
    pub bucket_index: u16,
    pub axonal_delay: SimTime,
}

/// Source-address lookup table; at most one entry per source.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RouteTable {
    entries: BTreeMap<NeuronAddress, RouteEntry>,
}

impl RouteTable {
    pub fn from_entries<I>(entries: I, bucket_count: usize) -> Result<Self, PipelineError>
    where
        I: IntoIterator<Item = RouteEntry>,
    {
        let mut table = BTreeMap::new();
        for e in entries {
            if e.bucket_index as usize >= bucket_count {
                return Err(PipelineError::BucketOutOfRange {
                    bucket: e.bucket_index,
                    bucket_count,
                });
            }
            if e.axonal_delay == SimTime::ZERO {
                return Err(PipelineError::ZeroDelay(e.source.value()));
            }
            if table.insert(e.source, e).is_some() {
                return Err(PipelineError::DuplicateSource(e.source.value()));
            }
        }
        Ok(RouteTable { entries: table })
    }

    pub fn lookup(&self, source: NeuronAddress) -> Option<&RouteEntry> {
        self.entries.get(&source)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &RouteEntry> {
        self.entries.values()
    }
}
