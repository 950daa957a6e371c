//! Round execution: quiescence, ticks and time skipping.

use std::collections::BTreeSet;

use super::{Component, Event, Firing, KernelError, Model, Participants, PortId, TimeGuard, Trace};
use crate::dist::to_ticks;
use crate::rng::StreamRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Keep every untimed firing in the returned trace.
    pub record: bool,
    /// Advance several ticks at once when no guard can change meanwhile.
    pub skip: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { record: true, skip: true }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct EngineState {
    /// Name ranks of components that may have an enabled internal transition.
    pending: BTreeSet<usize>,
    /// Enabledness per interaction; `None` when a participant changed.
    cache: Vec<Option<bool>>,
    primed: bool,
    events: Option<Vec<Event>>,
    firings: u64,
    scratch: Vec<usize>,
}

impl EngineState {
    pub(crate) fn new(_components: usize, interactions: usize) -> Self {
        EngineState {
            pending: BTreeSet::new(),
            cache: vec![None; interactions],
            primed: false,
            events: None,
            firings: 0,
            scratch: Vec::new(),
        }
    }
}

fn time_ok<V>(c: &Component<V>, g: TimeGuard) -> bool {
    match g {
        TimeGuard::Always => true,
        TimeGuard::Before(v) => c.clock < c.delays[v.0 as usize],
        TimeGuard::At(v) => c.clock == c.delays[v.0 as usize],
    }
}

fn enabled<V>(c: &Component<V>, ti: usize) -> bool {
    let t = &c.transitions[ti];
    time_ok(c, t.time) && t.guard.as_ref().is_none_or(|g| g(&c.vars))
}

fn first_internal<V>(c: &Component<V>) -> Option<usize> {
    c.index[c.location.0 as usize].internals.iter().copied().find(|&i| enabled(c, i))
}

fn port_transition<V>(c: &Component<V>, port: PortId) -> Option<usize> {
    c.index[c.location.0 as usize].ports.iter().find(|(p, i)| *p == port && enabled(c, *i)).map(|(_, i)| *i)
}

fn first_tick<V>(c: &Component<V>) -> Option<usize> {
    c.index[c.location.0 as usize].ticks.iter().copied().find(|&i| enabled(c, i))
}

/// Takes transition `ti` of `c`: action, then sampling, then the move.
fn apply<V>(c: &mut Component<V>, ti: usize, rng: &mut StreamRng, now: u64) -> Option<u64> {
    let Component { transitions, vars, delays, clock, location, .. } = c;
    let t = &transitions[ti];
    let mut f = Firing { now, rng, observed: None };
    if let Some(a) = &t.action {
        a(vars, &mut f);
    }
    if let Some((v, d)) = &t.sample {
        delays[v.0 as usize] = to_ticks(d.sample(f.rng));
    }
    if t.reset_clock {
        *clock = 0;
    }
    *location = t.to;
    f.observed
}

impl<V> Model<V> {
    fn prime(&mut self) {
        if !self.state.primed {
            self.state.primed = true;
            for c in 0..self.components.len() {
                self.touch(c);
            }
        }
    }

    fn touch(&mut self, c: usize) {
        self.state.pending.insert(self.rank[c]);
        for &i in &self.touching[c] {
            self.state.cache[i] = None;
        }
    }

    fn interaction_ready(&self, i: usize) -> bool {
        self.interactions[i].members.iter().all(|(c, p)| port_transition(&self.components[*c], *p).is_some())
    }

    fn record(&mut self, label: u32, component: usize, origin: Option<usize>, packet: Option<u64>) {
        self.state.firings += 1;
        if let Some(ev) = self.state.events.as_mut() {
            ev.push(Event {
                tick: self.now,
                label,
                component: component as u32,
                origin: origin.map(|o| o as u32),
                packet,
            });
        }
    }

    fn fire_internal(&mut self, c: usize, ti: usize) {
        let packet = apply(&mut self.components[c], ti, &mut self.rngs[c], self.now);
        let label = self.label_base[c] + ti as u32;
        self.record(label, c, None, packet);
        self.touch(c);
    }

    fn fire_interaction(&mut self, i: usize) {
        let Model { components, interactions, rngs, state, now, .. } = self;
        let it = &interactions[i];
        let mut chosen = std::mem::take(&mut state.scratch);
        chosen.clear();
        for (c, p) in &it.members {
            chosen.push(port_transition(&components[*c], *p).expect("interaction checked enabled"));
        }
        let mut packet =
            it.transfer.as_ref().and_then(|f| f(&mut Participants { components, members: &it.members, now: *now }));
        for ((c, _), ti) in it.members.iter().zip(&chosen) {
            let seen = apply(&mut components[*c], *ti, &mut rngs[*c], *now);
            packet = packet.or(seen);
        }
        state.scratch = chosen;
        let first = it.members[0].0;
        let last = it.members[it.members.len() - 1].0;
        self.record(i as u32, last, Some(first), packet);
        for k in 0..self.interactions[i].members.len() {
            let c = self.interactions[i].members[k].0;
            self.touch(c);
        }
    }

    /// Fires enabled internal transitions and interactions, by priority,
    /// until none is enabled.
    fn quiesce(&mut self) -> Result<(), KernelError> {
        self.prime();
        let mut fired = 0u64;
        loop {
            if let Some(&r) = self.state.pending.first() {
                let c = self.by_name[r];
                match first_internal(&self.components[c]) {
                    Some(ti) => {
                        self.fire_internal(c, ti);
                        fired += 1;
                    }
                    None => {
                        self.state.pending.pop_first();
                        continue;
                    }
                }
            } else {
                let mut chosen = None;
                for i in 0..self.interactions.len() {
                    let ready = match self.state.cache[i] {
                        Some(b) => b,
                        None => {
                            let b = self.interaction_ready(i);
                            self.state.cache[i] = Some(b);
                            b
                        }
                    };
                    if ready {
                        chosen = Some(i);
                        break;
                    }
                }
                let Some(i) = chosen else { return Ok(()) };
                self.fire_interaction(i);
                fired += 1;
            }
            if fired > self.livelock_bound {
                return Err(KernelError::Livelock { tick: self.now, bound: self.livelock_bound });
            }
        }
    }

    /// Ticks every component `k` times. The caller guarantees no guard
    /// changes value before the last of those ticks.
    fn advance(&mut self, k: u64) -> Result<(), KernelError> {
        for c in &self.components {
            if first_tick(c).is_none() {
                return Err(KernelError::Timelock {
                    tick: self.now,
                    component: c.name.to_string(),
                    location: c.location_name().to_string(),
                });
            }
        }
        for c in self.components.iter_mut() {
            c.clock += k;
            c.ticks += k;
        }
        self.now += k;
        for c in 0..self.components.len() {
            let comp = &self.components[c];
            if comp.index[comp.location.0 as usize].time_sensitive {
                self.touch(c);
            }
        }
        Ok(())
    }

    /// Ticks until some time guard can change value, at most `limit`.
    fn safe_skip(&self, limit: u64) -> u64 {
        let mut k = limit;
        for c in &self.components {
            for v in &c.index[c.location.0 as usize].timed_vars {
                let d = c.delays[v.0 as usize];
                if d > c.clock {
                    k = k.min(d - c.clock);
                } else if d == c.clock {
                    k = 1;
                }
            }
        }
        k.max(1)
    }

    /// One round: quiesce, then tick once.
    pub fn step(&mut self) -> Result<(), KernelError> {
        self.quiesce()?;
        self.advance(1)
    }

    /// Quiesce without ticking.
    pub fn settle(&mut self) -> Result<(), KernelError> {
        self.quiesce()
    }

    /// `horizon` rounds followed by a final settle, after re-seeding.
    pub fn run(&mut self, horizon: u64, seed: u64, opts: RunOptions) -> Result<Trace, KernelError> {
        self.seed(seed);
        self.state.events = opts.record.then(Vec::new);
        self.state.firings = 0;
        let start = self.now;
        let end = self.now.saturating_add(horizon);
        let result = if horizon == 0 { Ok(()) } else { self.run_until(end, opts.skip) };
        let events = self.state.events.take().unwrap_or_default();
        result?;
        Ok(Trace {
            start,
            horizon,
            seed,
            events,
            labels: self.labels.clone(),
            components: self.components.iter().map(|c| c.name.clone()).collect(),
            tick_counts: self.components.iter().map(|c| c.ticks).collect(),
            firings: self.state.firings,
        })
    }

    fn run_until(&mut self, end: u64, skip: bool) -> Result<(), KernelError> {
        loop {
            self.quiesce()?;
            if self.now >= end {
                return Ok(());
            }
            let k = if skip { self.safe_skip(end - self.now) } else { 1 };
            self.advance(k)?;
        }
    }
}
