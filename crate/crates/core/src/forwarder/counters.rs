use serde::{Deserialize, Serialize};

use super::components::{Outcome, Vars};
use super::{FactorConfig, ForwarderError};
use crate::kernel::Model;

/// Classification of a set of Interests at the horizon. Every Interest is
/// in exactly one of the four outcome classes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outcomes {
    pub sent: u64,
    pub satisfied: u64,
    pub nacked: u64,
    /// The Interest or its Data was lost.
    pub dropped: u64,
    pub in_flight: u64,
}

impl Outcomes {
    pub fn balanced(&self) -> bool {
        self.sent == self.satisfied + self.nacked + self.dropped + self.in_flight
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counters {
    pub horizon: u64,
    /// Measured Interests were sent in `[window_start, window_end)`.
    pub window_start: u64,
    pub window_end: u64,
    pub all: Outcomes,
    pub window: Outcomes,
    pub nacks_duplicate: u64,
    pub nacks_no_route: u64,
    /// Per forwarding-thread queue.
    pub queue_drops: Vec<u64>,
    pub max_queue_occupancy: Vec<usize>,
    pub queue_capacity: usize,
    /// Receive-ring drops at input0 and input1.
    pub rx_drops: [u64; 2],
    pub malformed_drops: u64,
    pub unsolicited_drops: u64,
    pub pit_full_drops: u64,
    /// Interests dispatched to each forwarding thread.
    pub dispatched: Vec<u64>,
    /// Packets physically inside the model at the horizon.
    pub live_packets: u64,
    /// Answers to Interests that were already answered.
    pub stray_responses: u64,
}

impl Counters {
    /// Satisfied over sent, for Interests in the measurement window.
    pub fn satisfaction_rate(&self) -> Result<f64, ForwarderError> {
        if self.window.sent == 0 {
            return Err(ForwarderError::NoInterests);
        }
        Ok(self.window.satisfied as f64 / self.window.sent as f64)
    }

    pub fn drops_total(&self) -> u64 {
        self.queue_drops.iter().sum::<u64>()
            + self.rx_drops.iter().sum::<u64>()
            + self.malformed_drops
            + self.unsolicited_drops
            + self.pit_full_drops
    }

    /// Every Interest is classified once, the in-flight class matches the
    /// packets physically present, and each drop belongs to one Interest.
    pub fn conservation_holds(&self) -> bool {
        self.all.balanced()
            && self.window.balanced()
            && self.all.in_flight == self.live_packets
            && self.all.dropped == self.drops_total()
            && self.stray_responses == 0
    }
}

pub(super) fn collect(model: &Model<Vars>, cfg: &FactorConfig) -> Counters {
    let (window_start, window_end) = cfg.window();
    let mut c = Counters {
        horizon: cfg.horizon,
        window_start,
        window_end,
        all: Outcomes::default(),
        window: Outcomes::default(),
        nacks_duplicate: 0,
        nacks_no_route: 0,
        queue_drops: Vec::new(),
        max_queue_occupancy: Vec::new(),
        queue_capacity: cfg.queue_capacity,
        rx_drops: [0; 2],
        malformed_drops: 0,
        unsolicited_drops: 0,
        pit_full_drops: 0,
        dispatched: Vec::new(),
        live_packets: 0,
        stray_responses: 0,
    };
    let mut dropped: Vec<u64> = Vec::new();
    let mut consumer = None;
    for comp in model.components() {
        let v = comp.vars();
        c.live_packets += v.live_packets() as u64;
        match v {
            Vars::Consumer(cv) => consumer = Some(cv),
            Vars::Input(i) => {
                c.rx_drops[i.face as usize] += i.rx_drops.len() as u64;
                c.malformed_drops += i.malformed.len() as u64;
                dropped.extend(&i.rx_drops);
                dropped.extend(&i.malformed);
                if i.face == crate::ndn::CLIENT_FACE {
                    c.dispatched = i.dispatched.clone();
                }
            }
            Vars::Fwd(f) => {
                c.queue_drops.push(f.queue_drops.len() as u64);
                c.max_queue_occupancy.push(f.max_occupancy);
                c.unsolicited_drops += f.unsolicited.len() as u64;
                c.pit_full_drops += f.pit_full.len() as u64;
                dropped.extend(&f.queue_drops);
                dropped.extend(&f.unsolicited);
                dropped.extend(&f.pit_full);
            }
            Vars::Producer(_) | Vars::Output(_) => {}
        }
    }
    let consumer = consumer.expect("model has a consumer");
    c.nacks_duplicate = consumer.nacks_duplicate;
    c.nacks_no_route = consumer.nacks_no_route;
    c.stray_responses = consumer.stray;

    let n = consumer.sent_at.len();
    let mut lost = vec![false; n];
    for origin in dropped {
        // origins are Interest ids 1..=n
        if let Some(slot) = lost.get_mut((origin - 1) as usize) {
            if *slot {
                c.stray_responses += 1;
            }
            *slot = true;
        }
    }
    for i in 0..n {
        let in_window = (window_start..window_end).contains(&consumer.sent_at[i]);
        for (o, counted) in [(&mut c.all, true), (&mut c.window, in_window)] {
            if !counted {
                continue;
            }
            o.sent += 1;
            match (consumer.outcome[i], lost[i]) {
                (Outcome::Satisfied, false) => o.satisfied += 1,
                (Outcome::Nacked, false) => o.nacked += 1,
                (Outcome::Pending, true) => o.dropped += 1,
                (Outcome::Pending, false) => o.in_flight += 1,
                // answered and lost at once cannot happen with one packet
                // per Interest; count it so conservation fails loudly
                (_, true) => o.in_flight += 1,
            }
        }
    }
    c
}
