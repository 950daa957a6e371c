//! Discrete-time kernel for stochastic component systems.
//!
//! A [`Component`] is a transition system over locations with its own
//! variables `V`, a clock `t` counted in ticks, and named delay variables
//! that sampling edges fill from a [`Distribution`]. Components synchronise
//! through [`Interaction`]s, which join one port per participant and may
//! move data between them.
//!
//! One global round (see [`Model::step`]) fires enabled internal
//! transitions and interactions until none is enabled, then fires one tick
//! in every component. Priority within a round:
//!
//! 1. internal transitions before interactions; among internal transitions,
//!    the component whose name sorts first, then transition declaration order;
//! 2. interactions in ascending declaration order.
//!
//! After every firing the scan restarts from the top.
//!
//! Tick transitions are self-loops that only advance the clock, so when no
//! time guard can change for `k` rounds the kernel advances `k` ticks at once.
//! The result is identical to stepping round by round (checked in the tests).

mod engine;
mod trace;

pub use engine::RunOptions;
pub use trace::{Event, NamedEvent, Trace};

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::dist::Distribution;
use crate::rng::StreamRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LocationId(pub(crate) u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PortId(pub(crate) u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DelayVar(pub(crate) u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ComponentId(pub(crate) u32);

impl ComponentId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

pub const DEFAULT_LIVELOCK_BOUND: u64 = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KernelError {
    #[error("livelock: more than {bound} untimed firings in the round at tick {tick}")]
    Livelock { tick: u64, bound: u64 },
    #[error("timelock at tick {tick}: component `{component}` cannot tick in location `{location}`")]
    Timelock { tick: u64, component: String, location: String },
    #[error("unknown component `{0}`")]
    UnknownComponent(String),
    #[error("component `{component}` has no port `{port}`")]
    UnknownPort { component: String, port: String },
    #[error("duplicate component name `{0}`")]
    DuplicateComponent(String),
    #[error("interaction `{0}` lists a component twice or has no participants")]
    BadInteraction(String),
    #[error("component `{component}`: {reason}")]
    BadComponent { component: String, reason: String },
}

/// Time constraint of a transition against the component clock.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeGuard {
    Always,
    /// `t < delay`
    Before(DelayVar),
    /// `t == delay`
    At(DelayVar),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    Tick,
    Internal,
    Port(PortId),
}

pub type Guard<V> = Arc<dyn Fn(&V) -> bool + Send + Sync>;
pub type Action<V> = Arc<dyn Fn(&mut V, &mut Firing<'_>) + Send + Sync>;
/// Data transfer of an interaction; returns the id of the moved item, if any.
pub type Transfer<V> = Arc<dyn Fn(&mut Participants<'_, V>) -> Option<u64> + Send + Sync>;

/// Context handed to transition actions.
pub struct Firing<'a> {
    now: u64,
    rng: &'a mut StreamRng,
    observed: Option<u64>,
}

impl Firing<'_> {
    pub fn now(&self) -> u64 {
        self.now
    }

    /// The component's own random stream.
    pub fn rng(&mut self) -> &mut StreamRng {
        self.rng
    }

    /// Tag the trace event of this firing with an item id.
    pub fn observe(&mut self, id: u64) {
        self.observed = Some(id);
    }
}

/// Mutable access to the variables of an interaction's participants, in
/// declaration order.
pub struct Participants<'a, V> {
    components: &'a mut [Component<V>],
    members: &'a [(usize, PortId)],
    now: u64,
}

impl<V> Participants<'_, V> {
    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn vars(&mut self, i: usize) -> &mut V {
        &mut self.components[self.members[i].0].vars
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

pub struct Transition<V> {
    name: Arc<str>,
    from: LocationId,
    to: LocationId,
    label: Label,
    time: TimeGuard,
    guard: Option<Guard<V>>,
    action: Option<Action<V>>,
    sample: Option<(DelayVar, Distribution)>,
    reset_clock: bool,
}

impl<V> Clone for Transition<V> {
    fn clone(&self) -> Self {
        Transition {
            name: self.name.clone(),
            from: self.from,
            to: self.to,
            label: self.label,
            time: self.time,
            guard: self.guard.clone(),
            action: self.action.clone(),
            sample: self.sample.clone(),
            reset_clock: self.reset_clock,
        }
    }
}

impl<V> fmt::Debug for Transition<V> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Transition")
            .field("name", &self.name)
            .field("from", &self.from)
            .field("to", &self.to)
            .field("label", &self.label)
            .field("time", &self.time)
            .field("sample", &self.sample)
            .finish_non_exhaustive()
    }
}

impl<V> Transition<V> {
    fn new(name: &str, label: Label, from: LocationId, to: LocationId) -> Self {
        Transition {
            name: name.into(),
            from,
            to,
            label,
            time: TimeGuard::Always,
            guard: None,
            action: None,
            sample: None,
            reset_clock: false,
        }
    }

    /// Clock-advancing self-loop.
    pub fn tick(at: LocationId) -> Self {
        Self::new("tick", Label::Tick, at, at)
    }

    pub fn internal(name: &str, from: LocationId, to: LocationId) -> Self {
        Self::new(name, Label::Internal, from, to)
    }

    /// Transition that can only fire as part of an interaction on `port`.
    pub fn on(port: PortId, name: &str, from: LocationId, to: LocationId) -> Self {
        Self::new(name, Label::Port(port), from, to)
    }

    pub fn when(mut self, guard: impl Fn(&V) -> bool + Send + Sync + 'static) -> Self {
        self.guard = Some(Arc::new(guard));
        self
    }

    pub fn before(mut self, var: DelayVar) -> Self {
        self.time = TimeGuard::Before(var);
        self
    }

    pub fn at(mut self, var: DelayVar) -> Self {
        self.time = TimeGuard::At(var);
        self
    }

    pub fn action(mut self, action: impl Fn(&mut V, &mut Firing<'_>) + Send + Sync + 'static) -> Self {
        self.action = Some(Arc::new(action));
        self
    }

    /// Probabilistic assignment: on firing, draw from `dist`, round to ticks,
    /// store in `var` and reset the clock.
    pub fn sample(mut self, var: DelayVar, dist: Distribution) -> Self {
        self.sample = Some((var, dist));
        self.reset_clock = true;
        self
    }

    pub fn reset_clock(mut self) -> Self {
        self.reset_clock = true;
        self
    }
}

#[derive(Debug, Clone, Default)]
struct LocationIndex {
    ticks: Vec<usize>,
    internals: Vec<usize>,
    /// (port, transition) in declaration order.
    ports: Vec<(PortId, usize)>,
    /// Some untimed-to-timed change can happen here as the clock advances.
    time_sensitive: bool,
    /// Delay variables referenced by time guards here.
    timed_vars: Vec<DelayVar>,
}

/// Builder and runtime state of one atomic component.
pub struct Component<V> {
    name: Arc<str>,
    locations: Vec<Arc<str>>,
    ports: Vec<Arc<str>>,
    delay_names: Vec<Arc<str>>,
    transitions: Vec<Transition<V>>,
    index: Vec<LocationIndex>,
    initial: LocationId,
    vars: V,
    location: LocationId,
    clock: u64,
    delays: Vec<u64>,
    ticks: u64,
}

impl<V: Clone> Clone for Component<V> {
    fn clone(&self) -> Self {
        Component {
            name: self.name.clone(),
            locations: self.locations.clone(),
            ports: self.ports.clone(),
            delay_names: self.delay_names.clone(),
            transitions: self.transitions.clone(),
            index: self.index.clone(),
            initial: self.initial,
            vars: self.vars.clone(),
            location: self.location,
            clock: self.clock,
            delays: self.delays.clone(),
            ticks: self.ticks,
        }
    }
}

impl<V> fmt::Debug for Component<V> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Component")
            .field("name", &self.name)
            .field("location", &self.locations[self.location.0 as usize])
            .field("clock", &self.clock)
            .field("ticks", &self.ticks)
            .finish_non_exhaustive()
    }
}

impl<V> Component<V> {
    pub fn new(name: &str, vars: V) -> Self {
        Component {
            name: name.into(),
            locations: Vec::new(),
            ports: Vec::new(),
            delay_names: Vec::new(),
            transitions: Vec::new(),
            index: Vec::new(),
            initial: LocationId(0),
            vars,
            location: LocationId(0),
            clock: 0,
            delays: Vec::new(),
            ticks: 0,
        }
    }

    /// Declares a location. The first declared location is initial unless
    /// [`Component::set_initial`] says otherwise.
    pub fn location(&mut self, name: &str) -> LocationId {
        self.locations.push(name.into());
        LocationId(self.locations.len() as u32 - 1)
    }

    pub fn port(&mut self, name: &str) -> PortId {
        if let Some(i) = self.ports.iter().position(|p| &**p == name) {
            return PortId(i as u32);
        }
        self.ports.push(name.into());
        PortId(self.ports.len() as u32 - 1)
    }

    pub fn delay(&mut self, name: &str) -> DelayVar {
        self.delay_names.push(name.into());
        self.delays.push(0);
        DelayVar(self.delay_names.len() as u32 - 1)
    }

    pub fn set_initial(&mut self, loc: LocationId) {
        self.initial = loc;
        self.location = loc;
    }

    pub fn add(&mut self, t: Transition<V>) {
        self.transitions.push(t);
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn vars(&self) -> &V {
        &self.vars
    }

    pub fn vars_mut(&mut self) -> &mut V {
        &mut self.vars
    }

    pub fn location_name(&self) -> &str {
        &self.locations[self.location.0 as usize]
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn delay_value(&self, var: DelayVar) -> u64 {
        self.delays[var.0 as usize]
    }

    /// Number of tick transitions taken so far.
    pub fn ticks(&self) -> u64 {
        self.ticks
    }

    pub fn port_id(&self, name: &str) -> Option<PortId> {
        self.ports.iter().position(|p| &**p == name).map(|i| PortId(i as u32))
    }

    fn seal(&mut self) -> Result<(), KernelError> {
        let bad = |reason: String| KernelError::BadComponent { component: self.name.to_string(), reason };
        if self.locations.is_empty() {
            return Err(bad("no locations".into()));
        }
        let nloc = self.locations.len() as u32;
        if self.initial.0 >= nloc {
            return Err(bad("initial location out of range".into()));
        }
        let mut index = vec![LocationIndex::default(); self.locations.len()];
        for (i, t) in self.transitions.iter().enumerate() {
            if t.from.0 >= nloc || t.to.0 >= nloc {
                return Err(bad(format!("transition `{}` uses an unknown location", t.name)));
            }
            let vars_ok = |v: &DelayVar| (v.0 as usize) < self.delays.len();
            match t.time {
                TimeGuard::Before(v) | TimeGuard::At(v) if !vars_ok(&v) => {
                    return Err(bad(format!("transition `{}` uses an unknown delay variable", t.name)))
                }
                _ => {}
            }
            if let Some((v, d)) = &t.sample {
                if !vars_ok(v) {
                    return Err(bad(format!("transition `{}` samples an unknown delay variable", t.name)));
                }
                d.validate().map_err(|e| bad(format!("transition `{}`: {e}", t.name)))?;
            }
            let slot = &mut index[t.from.0 as usize];
            match t.label {
                Label::Tick => {
                    if t.from != t.to || t.action.is_some() || t.sample.is_some() || t.reset_clock {
                        return Err(bad("tick transitions must be plain self-loops".into()));
                    }
                    slot.ticks.push(i);
                }
                Label::Internal => slot.internals.push(i),
                Label::Port(p) => {
                    if p.0 as usize >= self.ports.len() {
                        return Err(bad(format!("transition `{}` uses an unknown port", t.name)));
                    }
                    slot.ports.push((p, i));
                }
            }
            if let TimeGuard::Before(v) | TimeGuard::At(v) = t.time {
                if t.label != Label::Tick {
                    slot.time_sensitive = true;
                }
                if !slot.timed_vars.contains(&v) {
                    slot.timed_vars.push(v);
                }
            }
        }
        self.index = index;
        self.location = self.initial;
        Ok(())
    }
}

/// Participants and data transfer of one synchronisation.
pub struct Interaction<V> {
    name: Arc<str>,
    members: Vec<(usize, PortId)>,
    transfer: Option<Transfer<V>>,
}

impl<V> Clone for Interaction<V> {
    fn clone(&self) -> Self {
        Interaction { name: self.name.clone(), members: self.members.clone(), transfer: self.transfer.clone() }
    }
}

impl<V> Interaction<V> {
    pub fn name(&self) -> &str {
        &self.name
    }
}

/// Collects components and interactions into a [`Model`].
pub struct ModelBuilder<V> {
    components: Vec<Component<V>>,
    names: HashMap<Arc<str>, usize>,
    interactions: Vec<Interaction<V>>,
    livelock_bound: u64,
    error: Option<KernelError>,
}

impl<V> Default for ModelBuilder<V> {
    fn default() -> Self {
        Self::new()
    }
}

impl<V> ModelBuilder<V> {
    pub fn new() -> Self {
        ModelBuilder {
            components: Vec::new(),
            names: HashMap::new(),
            interactions: Vec::new(),
            livelock_bound: DEFAULT_LIVELOCK_BOUND,
            error: None,
        }
    }

    pub fn component(&mut self, c: Component<V>) -> ComponentId {
        let id = self.components.len();
        if self.names.insert(c.name.clone(), id).is_some() && self.error.is_none() {
            self.error = Some(KernelError::DuplicateComponent(c.name.to_string()));
        }
        self.components.push(c);
        ComponentId(id as u32)
    }

    pub fn livelock_bound(&mut self, bound: u64) -> &mut Self {
        self.livelock_bound = bound;
        self
    }

    /// Declares an interaction over `(component, port)` pairs given by name.
    /// Declaration order is priority order.
    pub fn connect(
        &mut self,
        name: &str,
        members: &[(&str, &str)],
        transfer: Option<Transfer<V>>,
    ) -> Result<(), KernelError> {
        let mut resolved = Vec::with_capacity(members.len());
        for (c, p) in members {
            let ci = *self.names.get(*c).ok_or_else(|| KernelError::UnknownComponent(c.to_string()))?;
            let pi = self.components[ci]
                .port_id(p)
                .ok_or_else(|| KernelError::UnknownPort { component: c.to_string(), port: p.to_string() })?;
            resolved.push((ci, pi));
        }
        let mut seen: Vec<usize> = resolved.iter().map(|m| m.0).collect();
        seen.sort_unstable();
        seen.dedup();
        if resolved.is_empty() || seen.len() != resolved.len() {
            return Err(KernelError::BadInteraction(name.to_string()));
        }
        self.interactions.push(Interaction { name: name.into(), members: resolved, transfer });
        Ok(())
    }

    pub fn build(self) -> Result<Model<V>, KernelError> {
        if let Some(e) = self.error {
            return Err(e);
        }
        let mut components = self.components;
        for c in components.iter_mut() {
            c.seal()?;
        }
        Ok(Model::assemble(components, self.interactions, self.livelock_bound))
    }
}

/// A closed system of components and interactions plus its global clock.
pub struct Model<V> {
    components: Vec<Component<V>>,
    interactions: Vec<Interaction<V>>,
    /// component -> interactions it participates in
    touching: Vec<Vec<usize>>,
    /// component indices sorted by name: internal-transition priority
    by_name: Vec<usize>,
    rank: Vec<usize>,
    labels: Vec<Arc<str>>,
    /// label id of each component's first transition
    label_base: Vec<u32>,
    rngs: Vec<StreamRng>,
    now: u64,
    livelock_bound: u64,
    state: engine::EngineState,
}

impl<V: Clone> Clone for Model<V> {
    fn clone(&self) -> Self {
        Model {
            components: self.components.clone(),
            interactions: self.interactions.clone(),
            touching: self.touching.clone(),
            by_name: self.by_name.clone(),
            rank: self.rank.clone(),
            labels: self.labels.clone(),
            label_base: self.label_base.clone(),
            rngs: self.rngs.clone(),
            now: self.now,
            livelock_bound: self.livelock_bound,
            state: self.state.clone(),
        }
    }
}

impl<V> fmt::Debug for Model<V> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Model")
            .field("now", &self.now)
            .field("components", &self.components)
            .field("interactions", &self.interactions.iter().map(|i| &i.name).collect::<Vec<_>>())
            .finish()
    }
}

impl<V> Model<V> {
    fn assemble(components: Vec<Component<V>>, interactions: Vec<Interaction<V>>, livelock_bound: u64) -> Self {
        let n = components.len();
        let mut touching = vec![Vec::new(); n];
        for (i, it) in interactions.iter().enumerate() {
            for (c, _) in &it.members {
                touching[*c].push(i);
            }
        }
        let mut by_name: Vec<usize> = (0..n).collect();
        by_name.sort_by(|a, b| components[*a].name.cmp(&components[*b].name));
        let mut rank = vec![0; n];
        for (r, c) in by_name.iter().enumerate() {
            rank[*c] = r;
        }
        let mut labels: Vec<Arc<str>> = interactions.iter().map(|i| i.name.clone()).collect();
        let mut label_base = Vec::with_capacity(n);
        for c in &components {
            label_base.push(labels.len() as u32);
            labels.extend(c.transitions.iter().map(|t| Arc::from(format!("{}.{}", c.name, t.name))));
        }
        let rngs = components.iter().map(|c| crate::rng::component_stream(0, &c.name)).collect();
        let state = engine::EngineState::new(n, interactions.len());
        Model {
            components,
            interactions,
            touching,
            by_name,
            rank,
            labels,
            label_base,
            rngs,
            now: 0,
            livelock_bound,
            state,
        }
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn components(&self) -> &[Component<V>] {
        &self.components
    }

    pub fn interactions(&self) -> &[Interaction<V>] {
        &self.interactions
    }

    pub fn component(&self, id: ComponentId) -> &Component<V> {
        &self.components[id.index()]
    }

    pub fn component_id(&self, name: &str) -> Option<ComponentId> {
        self.components.iter().position(|c| &*c.name == name).map(|i| ComponentId(i as u32))
    }

    pub fn by_name(&self, name: &str) -> Option<&Component<V>> {
        self.components.iter().find(|c| &*c.name == name)
    }

    /// Re-seeds every component stream from `seed`.
    pub fn seed(&mut self, seed: u64) {
        for (rng, c) in self.rngs.iter_mut().zip(&self.components) {
            *rng = crate::rng::component_stream(seed, &c.name);
        }
    }
}

/// Runs `model` for `horizon` ticks from its current state with `seed`,
/// recording every untimed firing.
pub fn run_trace<V>(model: &mut Model<V>, horizon: u64, seed: u64) -> Result<Trace, KernelError> {
    model.run(horizon, seed, RunOptions::default())
}
