use serde::{Deserialize, Serialize};

use super::{Face, Fib, NackReason, Packet, PacketKind, Pcct};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    /// Data without a pending Interest.
    Unsolicited,
    /// No room for a new PIT entry.
    PitFull,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decision {
    /// Send the Interest upstream on this face.
    Forward(Face),
    /// Cached Data answers the Interest.
    ReplyData {
        face: Face,
        payload_len: u32,
    },
    ReplyNack {
        face: Face,
        reason: NackReason,
    },
    /// Data goes to every pending downstream face.
    SendDownstream(Vec<Face>),
    Drop(DropReason),
}

/// Content store, then duplicate-nonce check, then FIB, then PIT insert.
pub fn process_interest(pcct: &mut Pcct, fib: &Fib, interest: &Packet, in_face: Face, now: u64) -> Decision {
    debug_assert_eq!(interest.kind, PacketKind::Interest);
    let name = &interest.name;
    if let Some(hit) = pcct.cs_get(name) {
        return Decision::ReplyData { face: in_face, payload_len: hit.payload_len };
    }
    if pcct.pit_get(name, now).is_some_and(|e| e.nonces.contains(&interest.nonce)) {
        return Decision::ReplyNack { face: in_face, reason: NackReason::Duplicate };
    }
    let Some(next) = fib.lookup(name) else {
        return Decision::ReplyNack { face: in_face, reason: NackReason::NoRoute };
    };
    if pcct.pit_upsert(name, interest.nonce, in_face, now) {
        Decision::Forward(next)
    } else {
        Decision::Drop(DropReason::PitFull)
    }
}

/// Satisfies the pending entry for the Data's name and caches the Data.
pub fn process_data(pcct: &mut Pcct, data: &Packet, now: u64) -> Decision {
    debug_assert_eq!(data.kind, PacketKind::Data);
    match pcct.pit_take(&data.name, now) {
        Some(entry) => {
            pcct.cs_insert(&data.name, data.payload_len, now);
            Decision::SendDownstream(entry.faces)
        }
        None => Decision::Drop(DropReason::Unsolicited),
    }
}
