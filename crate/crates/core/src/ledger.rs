//! Bell-pair bookkeeping between named parties.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use core::fmt;

use crate::error::{Error, Result};

/// An unordered pair of distinct party labels, stored in sorted order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PartyPair(String, String);

impl PartyPair {
    pub fn new(a: &str, b: &str) -> Self {
        if a <= b {
            Self(a.to_string(), b.to_string())
        } else {
            Self(b.to_string(), a.to_string())
        }
    }

    pub fn first(&self) -> &str {
        &self.0
    }

    pub fn second(&self) -> &str {
        &self.1
    }

    pub fn contains(&self, label: &str) -> bool {
        self.0 == label || self.1 == label
    }

    /// The member that is not `label`, if `label` is a member.
    pub fn other(&self, label: &str) -> Option<&str> {
        if self.0 == label {
            Some(&self.1)
        } else if self.1 == label {
            Some(&self.0)
        } else {
            None
        }
    }
}

impl fmt::Display for PartyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.0, self.1)
    }
}

/// Available Bell pairs per party pair, with running credit/debit totals.
///
/// Counts never go negative: a debit larger than the balance fails and leaves
/// the ledger untouched.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BellLedger {
    counts: BTreeMap<PartyPair, u64>,
    credited: u64,
    debited: u64,
}

impl BellLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn count(&self, pair: &PartyPair) -> u64 {
        self.counts.get(pair).copied().unwrap_or(0)
    }

    pub fn credit(&mut self, pair: PartyPair, n: u64) {
        if n == 0 {
            return;
        }
        *self.counts.entry(pair).or_insert(0) += n;
        self.credited += n;
    }

    pub fn debit(&mut self, pair: &PartyPair, n: u64) -> Result<()> {
        let available = self.count(pair);
        if available < n {
            return Err(Error::InsufficientEntanglement {
                a: pair.first().to_string(),
                b: pair.second().to_string(),
                needed: n,
                available,
            });
        }
        if n == 0 {
            return Ok(());
        }
        if available == n {
            self.counts.remove(pair);
        } else {
            self.counts.insert(pair.clone(), available - n);
        }
        self.debited += n;
        Ok(())
    }

    /// Pairs with a positive balance.
    pub fn iter(&self) -> impl Iterator<Item = (&PartyPair, u64)> {
        self.counts.iter().map(|(p, &n)| (p, n))
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn total_credited(&self) -> u64 {
        self.credited
    }

    pub fn total_debited(&self) -> u64 {
        self.debited
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

impl fmt::Display for BellLedger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.counts.is_empty() {
            return f.write_str("empty");
        }
        for (i, (pair, n)) in self.counts.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{pair}: {n}")?;
        }
        Ok(())
    }
}
