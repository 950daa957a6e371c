use std::hash::Hasher;

use siphasher::sip::SipHasher24;
use thiserror::Error;

use super::{Name, Packet};

pub const NDT_SLOTS: usize = 1 << 16;

/// Name dispatch table: hash slot to forwarding-thread index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ndt {
    slots: Box<[u8]>,
    threads: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("token {token} is out of range for {threads} forwarding threads")]
pub struct Malformed {
    pub token: u8,
    pub threads: u8,
}

impl Ndt {
    /// Slot `i` maps to thread `i mod threads`.
    pub fn uniform(threads: u8) -> Self {
        assert!(threads > 0, "at least one forwarding thread");
        let slots = (0..NDT_SLOTS).map(|i| (i % threads as usize) as u8).collect();
        Ndt { slots, threads }
    }

    pub fn threads(&self) -> u8 {
        self.threads
    }

    pub fn get(&self, slot: u16) -> u8 {
        self.slots[slot as usize]
    }

    /// Operator override of one slot.
    pub fn set(&mut self, slot: u16, thread: u8) -> Result<(), Malformed> {
        if thread >= self.threads {
            return Err(Malformed { token: thread, threads: self.threads });
        }
        self.slots[slot as usize] = thread;
        Ok(())
    }
}

/// SipHash-2-4 with the all-zero key over the first two components (one if
/// the name is shorter), each prefixed by its `u32` little-endian length.
pub fn name_hash(name: &Name) -> u64 {
    let mut h = SipHasher24::new_with_keys(0, 0);
    h.write(name.prefix_bytes(2));
    h.finish()
}

/// Low 16 bits of [`name_hash`].
pub fn ndt_slot(name: &Name) -> u16 {
    (name_hash(name) & 0xFFFF) as u16
}

pub fn dispatch_interest(ndt: &Ndt, name: &Name) -> u8 {
    ndt.get(ndt_slot(name))
}

/// Data and Nacks go back to the thread named by their token.
pub fn dispatch_data(packet: &Packet, threads: u8) -> Result<u8, Malformed> {
    if packet.token < threads {
        Ok(packet.token)
    } else {
        Err(Malformed { token: packet.token, threads })
    }
}
