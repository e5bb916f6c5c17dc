use std::fmt;

use serde::{Deserialize, Serialize};

use super::FabricError;

/// 16-bit network node address.
#[derive(
    Copy, Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct NodeAddress(pub u16);

impl NodeAddress {
    pub fn value(self) -> u16 {
        self.0
    }
}

impl fmt::Display for NodeAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "node {}", self.0)
    }
}

/// The six torus ports. The seventh NIC port is the host link, which the
/// packet fabric never routes through.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    XPlus,
    XMinus,
    YPlus,
    YMinus,
    ZPlus,
    ZMinus,
}

impl Direction {
    pub const ALL: [Direction; 6] = [
        Direction::XPlus,
        Direction::XMinus,
        Direction::YPlus,
        Direction::YMinus,
        Direction::ZPlus,
        Direction::ZMinus,
    ];

    pub fn axis(self) -> usize {
        match self {
            Direction::XPlus | Direction::XMinus => 0,
            Direction::YPlus | Direction::YMinus => 1,
            Direction::ZPlus | Direction::ZMinus => 2,
        }
    }

    pub fn is_positive(self) -> bool {
        matches!(self, Direction::XPlus | Direction::YPlus | Direction::ZPlus)
    }

    fn along(axis: usize, positive: bool) -> Direction {
        match (axis, positive) {
            (0, true) => Direction::XPlus,
            (0, false) => Direction::XMinus,
            (1, true) => Direction::YPlus,
            (1, false) => Direction::YMinus,
            (2, true) => Direction::ZPlus,
            _ => Direction::ZMinus,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Direction::XPlus => "+x",
            Direction::XMinus => "-x",
            Direction::YPlus => "+y",
            Direction::YMinus => "-y",
            Direction::ZPlus => "+z",
            Direction::ZMinus => "-z",
        };
        f.write_str(s)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Hop {
    Local,
    Forward(Direction),
}

/// 3D torus with address codec `x + X*y + X*Y*z`.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TorusTopology {
    dims: [u16; 3],
}

impl TorusTopology {
    pub fn new(dims: [u16; 3]) -> Result<Self, FabricError> {
        let total: u64 = dims.iter().map(|&d| d as u64).product();
        if dims.iter().any(|&d| d == 0) || total > 1 << 16 {
            return Err(FabricError::InvalidTopology(dims));
        }
        Ok(TorusTopology { dims })
    }

    pub fn dims(&self) -> [u16; 3] {
        self.dims
    }

    pub fn node_count(&self) -> u32 {
        self.dims.iter().map(|&d| d as u32).product()
    }

    pub fn contains(&self, node: NodeAddress) -> bool {
        (node.0 as u32) < self.node_count()
    }

    pub fn coords(&self, node: NodeAddress) -> Result<[u16; 3], FabricError> {
        if !self.contains(node) {
            return Err(FabricError::InvalidNode(node));
        }
        let [x, y, _] = self.dims.map(|d| d as u32);
        let a = node.0 as u32;
        Ok([(a % x) as u16, ((a / x) % y) as u16, (a / (x * y)) as u16])
    }

    pub fn address(&self, coords: [u16; 3]) -> Result<NodeAddress, FabricError> {
        if coords.iter().zip(self.dims).any(|(&c, d)| c >= d) {
            return Err(FabricError::InvalidCoords(coords));
        }
        let [x, y, _] = self.dims.map(|d| d as u32);
        let [cx, cy, cz] = coords.map(|c| c as u32);
        Ok(NodeAddress((cx + x * cy + x * y * cz) as u16))
    }

    pub fn neighbor(&self, node: NodeAddress, dir: Direction) -> Result<NodeAddress, FabricError> {
        let mut c = self.coords(node)?;
        let axis = dir.axis();
        let d = self.dims[axis];
        c[axis] = if dir.is_positive() {
            (c[axis] + 1) % d
        } else {
            (c[axis] + d - 1) % d
        };
        self.address(c)
    }

    /// Dimension-order next hop: x, then y, then z, each along the shorter
    /// ring direction; a tie (exactly half the ring) goes positive.
    pub fn route_next_hop(
        &self,
        current: NodeAddress,
        dest: NodeAddress,
    ) -> Result<Hop, FabricError> {
        let c = self.coords(current)?;
        let d = self.coords(dest)?;
        for axis in 0..3 {
            if c[axis] == d[axis] {
                continue;
            }
            let size = self.dims[axis];
            let forward = (d[axis] + size - c[axis]) % size;
            let backward = size - forward;
            return Ok(Hop::Forward(Direction::along(axis, forward <= backward)));
        }
        Ok(Hop::Local)
    }

    /// Sum over dimensions of the minimal ring distance.
    pub fn min_hops(&self, a: NodeAddress, b: NodeAddress) -> Result<u32, FabricError> {
        let ca = self.coords(a)?;
        let cb = self.coords(b)?;
        Ok((0..3)
            .map(|i| {
                let delta = ca[i].abs_diff(cb[i]) as u32;
                delta.min(self.dims[i] as u32 - delta)
            })
            .sum())
    }
}
