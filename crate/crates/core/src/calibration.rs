//! Calibration profiles: which latency distribution each timed role uses
//! for a given name length, NUMA placement and forwarding-thread count.
//!
//! A profile is a TOML file with a list of `[[entry]]` tables:
//!
//! ```toml
//! name = "example"
//!
//! [[entry]]
//! role = "interest"          # interest | data | dispatch_interest | dispatch_data
//! name_class = "small"       # optional: small (≤4) | medium (5..=9) | large (≥10)
//! placement = "P1"           # optional: P1..P4
//! threads = 1                # optional: forwarding-thread count
//! dist = { family = "lognormal", mu = 7.0, sigma = 0.3 }
//! ```
//!
//! Omitted keys match anything. A query picks the matching entry with the
//! most keys set; two entries that could tie for some query are rejected at
//! load time.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dist::{DistError, Distribution};

/// The profile shipped with the crate, generated by [`CalibrationProfile::synthetic`].
pub const SHIPPED_PROFILE: &str = include_str!("../profiles/synthetic.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// Forwarding-thread Interest processing, f_I.
    Interest,
    /// Forwarding-thread Data processing, f_D.
    Data,
    /// Input-thread dispatch of an Interest, f_p.
    DispatchInterest,
    /// Input-thread dispatch of a Data or Nack, f_p.
    DispatchData,
}

impl Role {
    pub const ALL: [Role; 4] = [Role::Interest, Role::Data, Role::DispatchInterest, Role::DispatchData];
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Interest => "interest",
            Role::Data => "data",
            Role::DispatchInterest => "dispatch_interest",
            Role::DispatchData => "dispatch_data",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NameClass {
    Small,
    Medium,
    Large,
}

impl NameClass {
    pub fn of(name_length: usize) -> Self {
        match name_length {
            0..=4 => NameClass::Small,
            5..=9 => NameClass::Medium,
            _ => NameClass::Large,
        }
    }
}

/// Where the forwarding threads sit relative to the two faces. Input
/// threads always share the node of their face.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Placement {
    /// Everything on one node.
    P1,
    /// Client face and threads together, server face remote.
    P2,
    /// Threads with the server face, client face remote.
    P3,
    /// Both faces on one node, threads on the other.
    P4,
}

impl Placement {
    pub const ALL: [Placement; 4] = [Placement::P1, Placement::P2, Placement::P3, Placement::P4];

    /// Interests from the client face cross a node boundary.
    pub fn client_remote(self) -> bool {
        matches!(self, Placement::P3 | Placement::P4)
    }

    /// Data from the server face cross a node boundary.
    pub fn server_remote(self) -> bool {
        matches!(self, Placement::P2 | Placement::P4)
    }
}

impl fmt::Display for Placement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for Placement {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_uppercase().as_str() {
            "P1" => Ok(Placement::P1),
            "P2" => Ok(Placement::P2),
            "P3" => Ok(Placement::P3),
            "P4" => Ok(Placement::P4),
            _ => Err(format!("unknown placement `{s}` (expected P1..P4)")),
        }
    }
}

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("reading calibration file: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing calibration: {0}")]
    Parse(String),
    #[error("entries {first} and {second} ({role}) can tie for the same query")]
    Ambiguous { role: Role, first: usize, second: usize },
    #[error("entry {index}: {source}")]
    Invalid { index: usize, source: DistError },
    #[error("no {role} distribution for name length {name_length}, placement {placement}, {threads} threads")]
    Miss { role: Role, name_length: usize, placement: Placement, threads: u8 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileEntry {
    pub role: Role,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name_class: Option<NameClass>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub placement: Option<Placement>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<u8>,
    pub dist: Distribution,
}

impl ProfileEntry {
    fn specificity(&self) -> u8 {
        self.name_class.is_some() as u8 + self.placement.is_some() as u8 + self.threads.is_some() as u8
    }

    fn matches(&self, role: Role, class: NameClass, placement: Placement, threads: u8) -> bool {
        self.role == role
            && self.name_class.is_none_or(|c| c == class)
            && self.placement.is_none_or(|p| p == placement)
            && self.threads.is_none_or(|t| t == threads)
    }

    /// Some query matches both entries.
    fn overlaps(&self, other: &ProfileEntry) -> bool {
        fn compatible<T: PartialEq>(a: &Option<T>, b: &Option<T>) -> bool {
            match (a, b) {
                (Some(x), Some(y)) => x == y,
                _ => true,
            }
        }
        self.role == other.role
            && compatible(&self.name_class, &other.name_class)
            && compatible(&self.placement, &other.placement)
            && compatible(&self.threads, &other.threads)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationProfile {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(rename = "entry", default)]
    pub entries: Vec<ProfileEntry>,
}

impl CalibrationProfile {
    pub fn from_toml_str(s: &str) -> Result<Self, CalibrationError> {
        let p: CalibrationProfile = toml::from_str(s).map_err(|e| CalibrationError::Parse(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CalibrationError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("profile serializes")
    }

    /// The profile embedded in the crate.
    pub fn shipped() -> Self {
        Self::from_toml_str(SHIPPED_PROFILE).expect("shipped profile is valid")
    }

    pub fn validate(&self) -> Result<(), CalibrationError> {
        for (index, e) in self.entries.iter().enumerate() {
            e.dist.validate().map_err(|source| CalibrationError::Invalid { index, source })?;
        }
        for (i, a) in self.entries.iter().enumerate() {
            for (j, b) in self.entries.iter().enumerate().skip(i + 1) {
                if a.specificity() == b.specificity() && a.overlaps(b) {
                    return Err(CalibrationError::Ambiguous { role: a.role, first: i, second: j });
                }
            }
        }
        Ok(())
    }

    pub fn resolve(
        &self,
        role: Role,
        name_length: usize,
        placement: Placement,
        threads: u8,
    ) -> Result<&Distribution, CalibrationError> {
        let class = NameClass::of(name_length);
        self.entries
            .iter()
            .filter(|e| e.matches(role, class, placement, threads))
            .max_by_key(|e| e.specificity())
            .map(|e| &e.dist)
            .ok_or(CalibrationError::Miss { role, name_length, placement, threads })
    }

    /// Same distributions for every factor combination, one per role.
    pub fn uniform(interest: Distribution, data: Distribution, dispatch: Distribution) -> Self {
        let entry = |role, dist| ProfileEntry { role, name_class: None, placement: None, threads: None, dist };
        CalibrationProfile {
            name: "uniform".into(),
            description: None,
            entries: vec![
                entry(Role::Interest, interest),
                entry(Role::Data, data),
                entry(Role::DispatchInterest, dispatch.clone()),
                entry(Role::DispatchData, dispatch),
            ],
        }
    }

    /// Synthetic profile with the qualitative structure of the measured
    /// forwarder: cross-node placements are slower, longer names slow
    /// Interest processing but not Data, and more threads add a little
    /// contention each.
    ///
    /// | role | law | median / mean at P1, small names, 1 thread |
    /// |------|-----|------------------------------------------|
    /// | interest | LogNormal, σ = 0.3 | median 1100 ns |
    /// | data | Gamma, shape 12 | mean 730 ns |
    /// | dispatch_* | LogNormal, σ = 0.25 | median 120 ns |
    ///
    /// Multipliers: name class 1.0 / 1.15 / 1.45 (interest only); threads
    /// `1 + 0.02 (n − 1)`; a crossing multiplies forwarding latency by 2.6
    /// and dispatch latency by 1.5.
    pub fn synthetic() -> Self {
        const CROSS_FWD: f64 = 2.6;
        const CROSS_DISPATCH: f64 = 1.5;
        let mut entries = Vec::new();
        for class in [NameClass::Small, NameClass::Medium, NameClass::Large] {
            let name_factor = match class {
                NameClass::Small => 1.0,
                NameClass::Medium => 1.15,
                NameClass::Large => 1.45,
            };
            for placement in Placement::ALL {
                for threads in 1..=8u8 {
                    let contention = 1.0 + 0.02 * (threads - 1) as f64;
                    let i_cross = if placement.client_remote() { CROSS_FWD } else { 1.0 };
                    let d_cross = if placement.server_remote() { CROSS_FWD } else { 1.0 };
                    let at = |role, dist| ProfileEntry {
                        role,
                        name_class: Some(class),
                        placement: Some(placement),
                        threads: Some(threads),
                        dist,
                    };
                    entries.push(at(
                        Role::Interest,
                        Distribution::lognormal_median(1100.0 * name_factor * contention * i_cross, 0.3),
                    ));
                    let mean_d = 730.0 * contention * d_cross;
                    entries.push(at(Role::Data, Distribution::Gamma { shape: 12.0, scale: mean_d / 12.0 }));
                }
            }
        }
        for placement in Placement::ALL {
            for (role, remote) in
                [(Role::DispatchInterest, placement.client_remote()), (Role::DispatchData, placement.server_remote())]
            {
                let median = 120.0 * if remote { CROSS_DISPATCH } else { 1.0 };
                entries.push(ProfileEntry {
                    role,
                    name_class: None,
                    placement: Some(placement),
                    threads: None,
                    dist: Distribution::lognormal_median(median, 0.25),
                });
            }
        }
        CalibrationProfile {
            name: "synthetic".into(),
            description: Some(
                "Synthetic latencies in ns. Cross-node placements are slower, longer names slow \
                 Interest processing only, each extra forwarding thread adds 2% contention."
                    .into(),
            ),
            entries,
        }
    }
}
