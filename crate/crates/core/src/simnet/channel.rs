//! Simulated device↔cloud link with exact byte accounting.

use serde::{Deserialize, Serialize};

use crate::model::checkpoint::network_len;
use crate::nn::Network;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Device → cloud.
    Uplink,
    /// Cloud → device.
    Downlink,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    Encoder,
    CloudSubmodel,
    CoSubmodel,
    ControlModel,
    SmallModel,
    Features,
    Classifier,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub direction: Direction,
    pub kind: MessageKind,
    pub bytes: u64,
    /// 0 for setup traffic, `1..=R` for collaborative rounds, `R + 1` for
    /// finetuning.
    pub round: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Channel {
    uplink_bytes: u64,
    downlink_bytes: u64,
    log: Vec<Message>,
}

impl Channel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn send(&mut self, direction: Direction, kind: MessageKind, bytes: u64, round: usize) {
        match direction {
            Direction::Uplink => self.uplink_bytes += bytes,
            Direction::Downlink => self.downlink_bytes += bytes,
        }
        self.log.push(Message {
            direction,
            kind,
            bytes,
            round,
        });
    }

    /// Charge a network message at its serialized checkpoint size.
    pub fn send_network<S: Scalar>(
        &mut self,
        direction: Direction,
        kind: MessageKind,
        net: &Network<S>,
        round: usize,
    ) -> u64 {
        let bytes = network_len(net) as u64;
        self.send(direction, kind, bytes, round);
        bytes
    }

    pub fn uplink_bytes(&self) -> u64 {
        self.uplink_bytes
    }

    pub fn downlink_bytes(&self) -> u64 {
        self.downlink_bytes
    }

    pub fn total_bytes(&self) -> u64 {
        self.uplink_bytes + self.downlink_bytes
    }

    pub fn log(&self) -> &[Message] {
        &self.log
    }

    /// Bytes in both directions logged under `round`.
    pub fn round_bytes(&self, round: usize) -> u64 {
        self.log
            .iter()
            .filter(|m| m.round == round)
            .map(|m| m.bytes)
            .sum()
    }

    pub fn count(&self, direction: Direction, kind: MessageKind) -> usize {
        self.log
            .iter()
            .filter(|m| m.direction == direction && m.kind == kind)
            .count()
    }

    /// Counters recomputed from the log; equal to the running counters by
    /// construction.
    pub fn recount(&self) -> (u64, u64) {
        self.log.iter().fold((0, 0), |(up, down), m| match m.direction {
            Direction::Uplink => (up + m.bytes, down),
            Direction::Downlink => (up, down + m.bytes),
        })
    }
}
