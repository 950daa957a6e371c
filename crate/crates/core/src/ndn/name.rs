use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NameError {
    #[error("a name needs at least one component")]
    Empty,
    #[error("invalid percent escape in `{0}`")]
    Escape(String),
}

/// Hierarchical name of at least one component.
///
/// Stored as the concatenation of `u32` little-endian length + bytes for
/// each component. The encoding is injective, a prefix of `k` components is
/// a byte prefix of the encoding, and it doubles as the dispatch hash input.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Name {
    enc: Arc<[u8]>,
    len: u32,
}

impl Name {
    pub fn new<I, C>(components: I) -> Result<Self, NameError>
    where
        I: IntoIterator<Item = C>,
        C: AsRef<[u8]>,
    {
        let mut enc = Vec::new();
        let mut len = 0u32;
        for c in components {
            let c = c.as_ref();
            enc.extend_from_slice(&(c.len() as u32).to_le_bytes());
            enc.extend_from_slice(c);
            len += 1;
        }
        if len == 0 {
            return Err(NameError::Empty);
        }
        Ok(Name { enc: enc.into(), len })
    }

    /// Number of components.
    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn components(&self) -> Components<'_> {
        Components { rest: &self.enc }
    }

    pub fn component(&self, i: usize) -> Option<&[u8]> {
        self.components().nth(i)
    }

    /// Encoding of the first `k` components (all of them if `k ≥ len`).
    pub fn prefix_bytes(&self, k: usize) -> &[u8] {
        if k >= self.len() {
            return &self.enc;
        }
        let mut off = 0;
        for _ in 0..k {
            let n = u32::from_le_bytes(self.enc[off..off + 4].try_into().expect("4 bytes")) as usize;
            off += 4 + n;
        }
        &self.enc[..off]
    }

    /// Name made of the first `k ≥ 1` components.
    pub fn prefix(&self, k: usize) -> Name {
        let k = k.clamp(1, self.len());
        Name { enc: self.prefix_bytes(k).into(), len: k as u32 }
    }

    pub fn is_prefix_of(&self, other: &Name) -> bool {
        self.len <= other.len && other.enc.starts_with(&self.enc)
    }

    pub fn encoded(&self) -> &[u8] {
        &self.enc
    }
}

pub struct Components<'a> {
    rest: &'a [u8],
}

impl<'a> Iterator for Components<'a> {
    type Item = &'a [u8];

    fn next(&mut self) -> Option<&'a [u8]> {
        if self.rest.is_empty() {
            return None;
        }
        let n = u32::from_le_bytes(self.rest[..4].try_into().expect("4 bytes")) as usize;
        let (c, rest) = self.rest[4..].split_at(n);
        self.rest = rest;
        Some(c)
    }
}

impl FromStr for Name {
    type Err = NameError;

    /// URI form: `/A/B/C`, with `%XX` escapes for arbitrary bytes.
    fn from_str(s: &str) -> Result<Self, NameError> {
        let mut comps = Vec::new();
        for part in s.split('/').filter(|p| !p.is_empty()) {
            let mut bytes = Vec::with_capacity(part.len());
            let raw = part.as_bytes();
            let mut i = 0;
            while i < raw.len() {
                if raw[i] == b'%' {
                    let hex = part.get(i + 1..i + 3).ok_or_else(|| NameError::Escape(part.into()))?;
                    let b = u8::from_str_radix(hex, 16).map_err(|_| NameError::Escape(part.into()))?;
                    bytes.push(b);
                    i += 3;
                } else {
                    bytes.push(raw[i]);
                    i += 1;
                }
            }
            comps.push(bytes);
        }
        Name::new(comps)
    }
}

impl fmt::Display for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in self.components() {
            f.write_str("/")?;
            for &b in c {
                if b.is_ascii_alphanumeric() || b"-._~".contains(&b) {
                    write!(f, "{}", b as char)?;
                } else {
                    write!(f, "%{b:02X}")?;
                }
            }
        }
        Ok(())
    }
}

impl fmt::Debug for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Name({self})")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn n(s: &str) -> Name {
        s.parse().unwrap()
    }

    #[test]
    fn parse_and_display_round_trip() {
        for s in ["/A", "/A/B/C", "/p17/000042", "/a%2Fb/%00"] {
            assert_eq!(n(s).to_string(), s);
        }
        assert_eq!(n("/A/B").len(), 2);
        assert_eq!("/".parse::<Name>(), Err(NameError::Empty));
        assert!("/A%4".parse::<Name>().is_err());
    }

    #[test]
    fn prefixes() {
        let name = n("/A/B/C");
        assert!(n("/A").is_prefix_of(&name));
        assert!(n("/A/B").is_prefix_of(&name));
        assert!(name.is_prefix_of(&name));
        assert!(!n("/A/C").is_prefix_of(&name));
        // component boundaries matter, not raw bytes
        assert!(!n("/AB").is_prefix_of(&n("/A/B")));
        assert!(!n("/A").is_prefix_of(&n("/AB")));
        assert_eq!(name.prefix(2), n("/A/B"));
        assert_eq!(name.prefix(9), name);
    }

    #[test]
    fn components_iterate_in_order() {
        let name = Name::new([&b"x"[..], b"", b"yz"]).unwrap();
        let c: Vec<&[u8]> = name.components().collect();
        assert_eq!(c, vec![&b"x"[..], b"", b"yz"]);
        assert_eq!(name.component(2), Some(&b"yz"[..]));
    }
}
