//! Naive list-scan reference for the forwarding pipeline, and a generator
//! of small random scenarios to compare it against the table-based one.

#![allow(dead_code)]

use ndnsmc::ndn::{Decision, DropReason, Face, Fib, NackReason, Name, Packet, PacketKind, Pcct, PcctConfig};
use rand::seq::IndexedRandom;
use rand::Rng;

struct PitRow {
    name: Name,
    nonces: Vec<u32>,
    faces: Vec<Face>,
    expiry: u64,
}

/// PIT, CS and FIB as plain vectors, scanned linearly. Expired PIT rows are
/// dropped eagerly before every operation.
pub struct Oracle {
    pit: Vec<PitRow>,
    /// Oldest first.
    cs: Vec<(Name, u32)>,
    routes: Vec<(Name, Face)>,
    pit_capacity: usize,
    cs_capacity: usize,
    lifetime: u64,
}

impl Oracle {
    pub fn new(cfg: PcctConfig, routes: Vec<(Name, Face)>) -> Self {
        Oracle {
            pit: Vec::new(),
            cs: Vec::new(),
            routes,
            pit_capacity: cfg.pit_capacity,
            cs_capacity: cfg.cs_capacity,
            lifetime: cfg.pit_lifetime,
        }
    }

    fn expire(&mut self, now: u64) {
        self.pit.retain(|r| now < r.expiry);
    }

    fn route(&self, name: &Name) -> Option<Face> {
        let mut best: Option<(usize, Face)> = None;
        for (prefix, face) in &self.routes {
            let k = prefix.len();
            let matches = k <= name.len() && (0..k).all(|i| prefix.component(i) == name.component(i));
            // later inserts of the same prefix replace earlier ones
            if matches && best.is_none_or(|(bk, _)| k >= bk) {
                best = Some((k, *face));
            }
        }
        best.map(|(_, f)| f)
    }

    pub fn interest(&mut self, p: &Packet, in_face: Face, now: u64) -> Decision {
        self.expire(now);
        if let Some((_, len)) = self.cs.iter().find(|(n, _)| *n == p.name) {
            return Decision::ReplyData { face: in_face, payload_len: *len };
        }
        let row = self.pit.iter().position(|r| r.name == p.name);
        if row.is_some_and(|i| self.pit[i].nonces.contains(&p.nonce)) {
            return Decision::ReplyNack { face: in_face, reason: NackReason::Duplicate };
        }
        let Some(next) = self.route(&p.name) else {
            return Decision::ReplyNack { face: in_face, reason: NackReason::NoRoute };
        };
        let expiry = now + self.lifetime;
        match row {
            Some(i) => {
                let r = &mut self.pit[i];
                r.nonces.push(p.nonce);
                if !r.faces.contains(&in_face) {
                    r.faces.push(in_face);
                }
                r.expiry = expiry;
            }
            None if self.pit.len() >= self.pit_capacity => return Decision::Drop(DropReason::PitFull),
            None => self.pit.push(PitRow { name: p.name.clone(), nonces: vec![p.nonce], faces: vec![in_face], expiry }),
        }
        Decision::Forward(next)
    }

    pub fn data(&mut self, p: &Packet, now: u64) -> Decision {
        self.expire(now);
        let Some(i) = self.pit.iter().position(|r| r.name == p.name) else {
            return Decision::Drop(DropReason::Unsolicited);
        };
        let row = self.pit.remove(i);
        if self.cs_capacity > 0 {
            self.cs.retain(|(n, _)| *n != p.name);
            self.cs.push((p.name.clone(), p.payload_len));
            if self.cs.len() > self.cs_capacity {
                self.cs.remove(0);
            }
        }
        Decision::SendDownstream(row.faces)
    }
}

/// One arrival at the forwarder.
#[derive(Debug, Clone)]
pub struct Arrival {
    pub at: u64,
    pub packet: Packet,
    pub face: Face,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub cfg: PcctConfig,
    pub routes: Vec<(Name, Face)>,
    pub arrivals: Vec<Arrival>,
}

fn name(s: &str) -> Name {
    s.parse().unwrap()
}

/// At most 50 packets over at most 4 names, with tiny tables so that
/// eviction, expiry, PIT overflow, duplicates and missing routes all occur.
pub fn scenario<R: Rng>(rng: &mut R) -> Scenario {
    let pool = ["/A", "/A/B", "/A/B/C", "/B/x", "/C", "/B"];
    let n_names = rng.random_range(1..=4);
    let names: Vec<Name> = pool.choose_multiple(rng, n_names).map(|s| name(s)).collect();
    let prefixes = ["/A", "/A/B", "/B", "/C/zz"];
    let mut routes = Vec::new();
    for p in prefixes {
        if rng.random_bool(0.6) {
            routes.push((name(p), rng.random_range(1..4)));
        }
    }
    let cfg = PcctConfig {
        pit_capacity: rng.random_range(1..=4),
        cs_capacity: rng.random_range(0..=3),
        pit_lifetime: rng.random_range(1..=30),
        audit: false,
    };
    let mut at = 0;
    let arrivals = (0..rng.random_range(1..=50u64))
        .map(|id| {
            at += rng.random_range(0..=6);
            let n = names.choose(rng).unwrap().clone();
            let interest = Packet::interest(id + 1, n, rng.random_range(0..3), at);
            let packet = if rng.random_bool(0.35) {
                Packet::data_for(&interest, id + 1, rng.random_range(0..1500), at)
            } else {
                interest
            };
            Arrival { at, packet, face: rng.random_range(0..3) }
        })
        .collect();
    Scenario { cfg, routes, arrivals }
}

/// Runs the scenario through both implementations. Returns the index of
/// the first diverging arrival with both decisions, or `None` if they agree
/// throughout; also returns the decisions taken.
pub fn compare(s: &Scenario) -> (Option<(usize, Decision, Decision)>, Vec<Decision>) {
    let mut fib = Fib::new();
    for (p, f) in &s.routes {
        fib.insert(p, *f);
    }
    let mut table = Pcct::new(s.cfg);
    let mut oracle = Oracle::new(s.cfg, s.routes.clone());
    let mut seen = Vec::new();
    for (i, a) in s.arrivals.iter().enumerate() {
        let (got, want) = match a.packet.kind {
            PacketKind::Interest => (
                ndnsmc::ndn::process_interest(&mut table, &fib, &a.packet, a.face, a.at),
                oracle.interest(&a.packet, a.face, a.at),
            ),
            _ => (ndnsmc::ndn::process_data(&mut table, &a.packet, a.at), oracle.data(&a.packet, a.at)),
        };
        if got != want {
            return (Some((i, got, want)), seen);
        }
        seen.push(got);
    }
    (None, seen)
}
