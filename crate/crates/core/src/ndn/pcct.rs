use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::{Face, Name};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PcctConfig {
    pub pit_capacity: usize,
    pub cs_capacity: usize,
    /// Ticks an Interest stays pending after its latest arrival.
    pub pit_lifetime: u64,
    /// Keep an [`AuditRecord`] per table mutation.
    pub audit: bool,
}

impl Default for PcctConfig {
    fn default() -> Self {
        PcctConfig { pit_capacity: 1 << 16, cs_capacity: 1 << 16, pit_lifetime: 4_000_000, audit: false }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PitEntry {
    pub name: Name,
    pub nonces: Vec<u32>,
    /// Downstream faces, in arrival order.
    pub faces: Vec<Face>,
    pub expiry: u64,
}

impl PitEntry {
    pub fn is_live(&self, now: u64) -> bool {
        now < self.expiry
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsEntry {
    pub name: Name,
    pub payload_len: u32,
    pub inserted_at: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditOp {
    PitInsert,
    PitDelete,
    PitExpire,
    CsInsert,
    CsEvict,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditRecord {
    pub tick: u64,
    pub op: AuditOp,
    pub name: Name,
}

/// Pending Interest Table and Content Store behind one exact-name index.
#[derive(Debug, Clone)]
pub struct Pcct {
    cfg: PcctConfig,
    pit: HashMap<Name, PitEntry>,
    cs: HashMap<Name, (CsEntry, u64)>,
    /// Insertion order for FIFO eviction; stale (name, seq) pairs are skipped.
    cs_order: VecDeque<(Name, u64)>,
    cs_seq: u64,
    audit: Vec<AuditRecord>,
}

impl Default for Pcct {
    fn default() -> Self {
        Self::new(PcctConfig::default())
    }
}

impl Pcct {
    pub fn new(cfg: PcctConfig) -> Self {
        Pcct { cfg, pit: HashMap::new(), cs: HashMap::new(), cs_order: VecDeque::new(), cs_seq: 0, audit: Vec::new() }
    }

    pub fn config(&self) -> &PcctConfig {
        &self.cfg
    }

    fn log(&mut self, tick: u64, op: AuditOp, name: &Name) {
        if self.cfg.audit {
            self.audit.push(AuditRecord { tick, op, name: name.clone() });
        }
    }

    pub fn audit_log(&self) -> &[AuditRecord] {
        &self.audit
    }

    pub fn pit_len(&self) -> usize {
        self.pit.len()
    }

    pub fn cs_len(&self) -> usize {
        self.cs.len()
    }

    /// Live PIT entry for `name`. An expired entry is removed on the way.
    pub fn pit_get(&mut self, name: &Name, now: u64) -> Option<&PitEntry> {
        self.expire_one(name, now);
        self.pit.get(name)
    }

    fn expire_one(&mut self, name: &Name, now: u64) {
        if self.pit.get(name).is_some_and(|e| !e.is_live(now)) {
            self.pit.remove(name);
            self.log(now, AuditOp::PitExpire, name);
        }
    }

    /// Adds `nonce` and `face` to the entry for `name`, creating it if
    /// needed, and pushes its expiry out. Returns false when the PIT is full.
    pub fn pit_upsert(&mut self, name: &Name, nonce: u32, face: Face, now: u64) -> bool {
        self.expire_one(name, now);
        let expiry = now.saturating_add(self.cfg.pit_lifetime);
        if let Some(e) = self.pit.get_mut(name) {
            if !e.nonces.contains(&nonce) {
                e.nonces.push(nonce);
            }
            if !e.faces.contains(&face) {
                e.faces.push(face);
            }
            e.expiry = expiry;
            return true;
        }
        if self.pit.len() >= self.cfg.pit_capacity {
            self.purge_expired(now);
            if self.pit.len() >= self.cfg.pit_capacity {
                return false;
            }
        }
        self.pit.insert(name.clone(), PitEntry { name: name.clone(), nonces: vec![nonce], faces: vec![face], expiry });
        self.log(now, AuditOp::PitInsert, name);
        true
    }

    /// Removes and returns the live entry for `name`.
    pub fn pit_take(&mut self, name: &Name, now: u64) -> Option<PitEntry> {
        self.expire_one(name, now);
        let e = self.pit.remove(name)?;
        self.log(now, AuditOp::PitDelete, name);
        Some(e)
    }

    pub fn purge_expired(&mut self, now: u64) {
        let dead: Vec<Name> = self.pit.values().filter(|e| !e.is_live(now)).map(|e| e.name.clone()).collect();
        for name in dead {
            self.pit.remove(&name);
            self.log(now, AuditOp::PitExpire, &name);
        }
    }

    pub fn cs_get(&self, name: &Name) -> Option<&CsEntry> {
        self.cs.get(name).map(|(e, _)| e)
    }

    /// Stores Data, replacing any entry with the same name. Evicts the
    /// oldest insertion when full.
    pub fn cs_insert(&mut self, name: &Name, payload_len: u32, now: u64) {
        if self.cfg.cs_capacity == 0 {
            return;
        }
        self.cs_seq += 1;
        let seq = self.cs_seq;
        let entry = CsEntry { name: name.clone(), payload_len, inserted_at: now };
        if self.cs.insert(name.clone(), (entry, seq)).is_none() {
            while self.cs.len() > self.cfg.cs_capacity {
                self.evict_oldest(now);
            }
        }
        self.cs_order.push_back((name.clone(), seq));
        self.log(now, AuditOp::CsInsert, name);
        if self.cs_order.len() > 2 * self.cfg.cs_capacity + 16 {
            let cs = &self.cs;
            self.cs_order.retain(|(n, s)| cs.get(n).is_some_and(|(_, cur)| cur == s));
        }
    }

    fn evict_oldest(&mut self, now: u64) {
        while let Some((name, seq)) = self.cs_order.pop_front() {
            if self.cs.get(&name).is_some_and(|(_, cur)| *cur == seq) {
                self.cs.remove(&name);
                self.log(now, AuditOp::CsEvict, &name);
                return;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn n(s: &str) -> Name {
        s.parse().unwrap()
    }

    #[test]
    fn pit_entries_expire_lazily() {
        let mut p = Pcct::new(PcctConfig { pit_lifetime: 10, audit: true, ..PcctConfig::default() });
        assert!(p.pit_upsert(&n("/A"), 1, 0, 0));
        assert!(p.pit_get(&n("/A"), 9).is_some());
        assert_eq!(p.pit_len(), 1);
        assert!(p.pit_get(&n("/A"), 10).is_none());
        assert_eq!(p.pit_len(), 0);
        let ops: Vec<AuditOp> = p.audit_log().iter().map(|r| r.op).collect();
        assert_eq!(ops, vec![AuditOp::PitInsert, AuditOp::PitExpire]);
    }

    #[test]
    fn upsert_extends_nonces_faces_and_expiry() {
        let mut p = Pcct::new(PcctConfig { pit_lifetime: 10, ..PcctConfig::default() });
        p.pit_upsert(&n("/A"), 1, 0, 0);
        p.pit_upsert(&n("/A"), 2, 3, 5);
        p.pit_upsert(&n("/A"), 2, 3, 6);
        let e = p.pit_get(&n("/A"), 15).unwrap();
        assert_eq!(e.nonces, vec![1, 2]);
        assert_eq!(e.faces, vec![0, 3]);
        assert_eq!(e.expiry, 16);
    }

    #[test]
    fn full_pit_rejects_until_something_expires() {
        let mut p = Pcct::new(PcctConfig { pit_capacity: 2, pit_lifetime: 10, ..PcctConfig::default() });
        assert!(p.pit_upsert(&n("/A"), 1, 0, 0));
        assert!(p.pit_upsert(&n("/B"), 1, 0, 5));
        assert!(!p.pit_upsert(&n("/C"), 1, 0, 6));
        // extending an existing entry still works
        assert!(p.pit_upsert(&n("/B"), 2, 0, 6));
        assert!(p.pit_upsert(&n("/C"), 1, 0, 10));
        assert!(p.pit_get(&n("/A"), 10).is_none());
    }

    #[test]
    fn cs_is_fifo_and_newest_wins() {
        let mut p = Pcct::new(PcctConfig { cs_capacity: 2, ..PcctConfig::default() });
        p.cs_insert(&n("/A"), 1, 0);
        p.cs_insert(&n("/B"), 2, 1);
        p.cs_insert(&n("/A"), 3, 2);
        assert_eq!(p.cs_get(&n("/A")).unwrap().payload_len, 3);
        assert_eq!(p.cs_len(), 2);
        // /B is now the oldest live insertion
        p.cs_insert(&n("/C"), 4, 3);
        assert!(p.cs_get(&n("/B")).is_none());
        assert!(p.cs_get(&n("/A")).is_some());
        assert!(p.cs_get(&n("/C")).is_some());
    }

    #[test]
    fn cs_order_stays_bounded() {
        let mut p = Pcct::new(PcctConfig { cs_capacity: 4, ..PcctConfig::default() });
        for i in 0..1000 {
            p.cs_insert(&n("/same"), i, i as u64);
        }
        assert!(p.cs_order.len() <= 2 * 4 + 17);
        assert_eq!(p.cs_len(), 1);
    }
}
