//! NDN data-plane logic: names, packets, the PIT/CS table, FIB lookup and
//! dispatch of packets to forwarding threads. No timing lives here.

mod dispatch;
mod fib;
mod name;
mod pcct;
mod pipeline;

pub use dispatch::{dispatch_data, dispatch_interest, name_hash, ndt_slot, Malformed, Ndt, NDT_SLOTS};
pub use fib::Fib;
pub use name::{Name, NameError};
pub use pcct::{AuditOp, AuditRecord, CsEntry, Pcct, PcctConfig, PitEntry};
pub use pipeline::{process_data, process_interest, Decision, DropReason};

use serde::{Deserialize, Serialize};

/// Forwarder face id.
pub type Face = u32;

/// Face towards the consumer.
pub const CLIENT_FACE: Face = 0;
/// Face towards the producer.
pub const SERVER_FACE: Face = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NackReason {
    Duplicate,
    NoRoute,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PacketKind {
    Interest,
    Data,
    Nack(NackReason),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Packet {
    /// Unique within a trace.
    pub id: u64,
    /// Id of the Interest this packet belongs to; an Interest's own id.
    pub origin: u64,
    pub kind: PacketKind,
    pub name: Name,
    /// Meaningful on Interests only.
    pub nonce: u32,
    /// Index of the forwarding thread that handled the Interest.
    pub token: u8,
    /// Meaningful on Data only.
    pub payload_len: u32,
    pub created_at: u64,
}

impl Packet {
    pub fn interest(id: u64, name: Name, nonce: u32, created_at: u64) -> Self {
        Packet { id, origin: id, kind: PacketKind::Interest, name, nonce, token: 0, payload_len: 0, created_at }
    }

    /// Data answering `interest`, carrying its token.
    pub fn data_for(interest: &Packet, id: u64, payload_len: u32, now: u64) -> Self {
        Packet {
            id,
            origin: interest.origin,
            kind: PacketKind::Data,
            name: interest.name.clone(),
            nonce: 0,
            token: interest.token,
            payload_len,
            created_at: now,
        }
    }

    pub fn nack_for(interest: &Packet, id: u64, reason: NackReason, now: u64) -> Self {
        Packet {
            id,
            origin: interest.origin,
            kind: PacketKind::Nack(reason),
            name: interest.name.clone(),
            nonce: interest.nonce,
            token: interest.token,
            payload_len: 0,
            created_at: now,
        }
    }

    pub fn is_interest(&self) -> bool {
        self.kind == PacketKind::Interest
    }
}
