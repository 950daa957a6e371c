use std::collections::HashMap;

use super::{Face, Name};

/// Prefix to next-hop table with longest-prefix match.
#[derive(Debug, Clone, Default)]
pub struct Fib {
    routes: HashMap<Box<[u8]>, Face>,
    longest: usize,
}

impl Fib {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds or replaces the route for `prefix`.
    pub fn insert(&mut self, prefix: &Name, face: Face) {
        self.routes.insert(prefix.encoded().into(), face);
        self.longest = self.longest.max(prefix.len());
    }

    pub fn len(&self) -> usize {
        self.routes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.routes.is_empty()
    }

    pub fn lookup(&self, name: &Name) -> Option<Face> {
        (1..=name.len().min(self.longest)).rev().find_map(|k| self.routes.get(name.prefix_bytes(k)).copied())
    }
}
