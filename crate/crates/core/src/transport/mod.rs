//! Host/FPGA transport: remote memory access, the notification ring that
//! carries spike records to the host, and the FPGA register file.

mod regfile;
mod ring;
mod rma;
mod session;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::fabric::NodeAddress;
use crate::pipeline::PipelineConfig;

pub use regfile::*;
pub use ring::*;
pub use rma::*;
pub use session::{run_ring_session, FixedDelays, SessionDelays, SessionReport};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TransportError {
    #[error("no register at address {0:#x}")]
    UnknownRegister(u64),
    #[error("value {value:#x} does not fit register {address:#x}")]
    ValueTooWide { address: u64, value: u64 },
    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),
    #[error("payload of {len} bytes exceeds limit of {limit}")]
    PayloadTooLarge { len: usize, limit: usize },
    #[error("{len} bytes at offset {offset:#x} on {endpoint} are not registered")]
    UnregisteredRegion {
        endpoint: Endpoint,
        offset: u64,
        len: usize,
    },
    #[error("record of {0} bytes does not fit a ring entry")]
    RecordTooLarge(usize),
    #[error("ring entry {0} is corrupt")]
    CorruptEntry(u64),
    #[error("no FPGA attached at node {0}")]
    UnknownNode(NodeAddress),
}

/// Host side of the register-read/write path: one register file per FPGA.
#[derive(Clone, Debug, Default)]
pub struct HostController {
    fpgas: BTreeMap<NodeAddress, RegisterFile>,
}

impl HostController {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn attach_fpga(&mut self, node: NodeAddress) {
        self.fpgas.entry(node).or_default();
    }

    pub fn rra_write(&mut self, node: NodeAddress, address: u64, value: u64) -> Result<(), TransportError> {
        self.fpgas
            .get_mut(&node)
            .ok_or(TransportError::UnknownNode(node))?
            .write(address, value)
    }

    pub fn rra_read(&self, node: NodeAddress, address: u64) -> Result<u64, TransportError> {
        self.register_file(node)?.read(address)
    }

    pub fn register_file(&self, node: NodeAddress) -> Result<&RegisterFile, TransportError> {
        self.fpgas.get(&node).ok_or(TransportError::UnknownNode(node))
    }

    /// Writes every register for `config` and returns what the FPGA decodes.
    pub fn program_pipeline(
        &mut self,
        node: NodeAddress,
        config: &PipelineConfig,
    ) -> Result<PipelineConfig, TransportError> {
        for (address, value) in RegisterFile::encode_pipeline(config)? {
            self.rra_write(node, address, value)?;
        }
        self.register_file(node)?.decode_pipeline()
    }
}
