use std::sync::Arc;

use serde::Serialize;

/// One untimed firing. Ticks are not recorded individually; see
/// [`Trace::tick_counts`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Event {
    pub tick: u64,
    /// Index into [`Trace::labels`].
    pub label: u32,
    /// The firing component, or the last participant of an interaction.
    pub component: u32,
    /// First participant of an interaction; `None` for internal firings.
    pub origin: Option<u32>,
    pub packet: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NamedEvent<'a> {
    pub tick: u64,
    pub label: &'a str,
    pub component: &'a str,
    pub origin: Option<&'a str>,
    pub packet: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub start: u64,
    pub horizon: u64,
    pub seed: u64,
    pub events: Vec<Event>,
    /// Interaction names first, then `component.transition` names.
    pub labels: Vec<Arc<str>>,
    pub components: Vec<Arc<str>>,
    pub tick_counts: Vec<u64>,
    /// Untimed firings, counted even when events are not recorded.
    pub firings: u64,
}

impl Trace {
    pub fn label_id(&self, name: &str) -> Option<u32> {
        self.labels.iter().position(|l| &**l == name).map(|i| i as u32)
    }

    /// Number of recorded events carrying `label`.
    pub fn count(&self, label: &str) -> usize {
        match self.label_id(label) {
            Some(id) => self.events.iter().filter(|e| e.label == id).count(),
            None => 0,
        }
    }

    pub fn tick_count(&self, component: &str) -> Option<u64> {
        self.components.iter().position(|c| &**c == component).map(|i| self.tick_counts[i])
    }

    pub fn named(&self) -> impl Iterator<Item = NamedEvent<'_>> + '_ {
        self.events.iter().map(|e| NamedEvent {
            tick: e.tick,
            label: &self.labels[e.label as usize],
            component: &self.components[e.component as usize],
            origin: e.origin.map(|o| &*self.components[o as usize]),
            packet: e.packet,
        })
    }

    /// Events as JSON lines.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in self.named() {
            out.push_str(&serde_json::to_string(&e).expect("serializable"));
            out.push('\n');
        }
        out
    }
}
