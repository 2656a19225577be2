use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Envelope, View};
use crate::error::{Error, Result};
use crate::graph::NodeId;

/// Chooses the next delivery and optionally rewrites it.
///
/// The engine calls `corrupt` only while the budget has room, and counts a
/// corruption whenever it returns `Some`, even if the bytes are unchanged.
pub trait Adversary<A> {
    /// Index into `view.in_flight` (taken modulo its length).
    fn pick(&mut self, view: &View<'_, A>) -> usize;

    fn corrupt(&mut self, view: &View<'_, A>, env: &Envelope) -> Option<Vec<u8>>;
}

/// Corruption budget: a fraction `num/den` of the messages sent so far.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Budget {
    num: u64,
    den: u64,
}

impl Budget {
    pub const ZERO: Budget = Budget { num: 0, den: 1 };
    pub const ALL: Budget = Budget { num: 1, den: 1 };

    pub fn new(num: u64, den: u64) -> Result<Self> {
        if den == 0 || num > den {
            return Err(Error::config("budget", format!("{num}/{den} is not in [0, 1]")));
        }
        Ok(Budget { num, den })
    }

    pub fn num(&self) -> u64 {
        self.num
    }

    pub fn den(&self) -> u64 {
        self.den
    }

    /// `floor(mu * sent)`.
    pub fn allowance(&self, sent: u64) -> u64 {
        (u128::from(sent) * u128::from(self.num) / u128::from(self.den)) as u64
    }
}

impl fmt::Display for Budget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl FromStr for Budget {
    type Err = Error;

    /// Accepts `a/b` or a bare integer `0` / `1`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::config("budget", format!("`{s}` is not a fraction `a/b`"));
        let (num, den) = match s.trim().split_once('/') {
            Some((a, b)) => (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?),
            None => (s.trim().parse().map_err(|_| bad())?, 1),
        };
        Budget::new(num, den)
    }
}

impl TryFrom<String> for Budget {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Budget> for String {
    fn from(b: Budget) -> String {
        b.to_string()
    }
}

/// Delivery-order strategy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Delivery {
    /// Oldest envelope first.
    Fifo,
    /// Newest envelope first.
    Lifo,
    /// Uniform over in-flight envelopes.
    Random,
    Targeted(DeliveryRule),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeliveryRule {
    /// Largest sender id first, oldest among equals.
    HighestSourceFirst,
    LowestSourceFirst,
    /// Holds back everything addressed to this node as long as anything else is in flight.
    Starve(NodeId),
}

/// Replacement payload applied to a corrupted envelope.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorruptionRule {
    FlipAllBits,
    /// Same length, fresh random bytes; an empty payload gets 1 to 4 random bytes.
    RandomBytes,
    Zero,
    Truncate,
}

/// Identifies one FUS slot: a tagged message on a directed edge.
pub type SlotKey = (u32, u64, NodeId, NodeId);

/// Which envelopes the adversary tries to corrupt (budget permitting).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Target {
    All,
    Stage(u32),
    /// Every stage except this one.
    NotStage(u32),
    /// Exact `(stage, round, src, dst)` tags.
    Slots(BTreeSet<SlotKey>),
    Seqs(BTreeSet<u64>),
}

impl Target {
    pub fn matches(&self, env: &Envelope) -> bool {
        match self {
            Target::All => true,
            Target::Stage(s) => env.tag.stage == *s,
            Target::NotStage(s) => env.tag.stage != *s,
            Target::Slots(set) => set.contains(&(env.tag.stage, env.tag.round, env.src, env.dst)),
            Target::Seqs(set) => set.contains(&env.seq),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdversarySpec {
    pub delivery: Delivery,
    pub budget: Budget,
    pub corruption: CorruptionRule,
    pub target: Target,
}

impl AdversarySpec {
    /// FIFO delivery, no corruption.
    pub fn none() -> Self {
        AdversarySpec {
            delivery: Delivery::Fifo,
            budget: Budget::ZERO,
            corruption: CorruptionRule::FlipAllBits,
            target: Target::All,
        }
    }

    /// Seeded random delivery, no corruption.
    pub fn random() -> Self {
        AdversarySpec {
            delivery: Delivery::Random,
            ..Self::none()
        }
    }

    /// Seeded random delivery corrupting every message with random bytes.
    pub fn total_noise() -> Self {
        AdversarySpec {
            delivery: Delivery::Random,
            budget: Budget::ALL,
            corruption: CorruptionRule::RandomBytes,
            target: Target::All,
        }
    }

    pub fn build(&self, seed: u64) -> SpecAdversary {
        SpecAdversary {
            spec: self.clone(),
            order_rng: ChaCha8Rng::seed_from_u64(seed),
            noise_rng: ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15),
        }
    }
}

/// The adversary described by an [`AdversarySpec`].
///
/// Delivery order and corruption bytes draw from independent streams, so
/// changing the corruption rule does not perturb the schedule.
pub struct SpecAdversary {
    spec: AdversarySpec,
    order_rng: ChaCha8Rng,
    noise_rng: ChaCha8Rng,
}

impl<A> Adversary<A> for SpecAdversary {
    fn pick(&mut self, view: &View<'_, A>) -> usize {
        let q = view.in_flight;
        match self.spec.delivery {
            Delivery::Fifo => 0,
            Delivery::Lifo => q.len() - 1,
            Delivery::Random => self.order_rng.random_range(0..q.len()),
            Delivery::Targeted(rule) => {
                let best = |key: &dyn Fn(&Envelope) -> i64| {
                    let mut idx = 0;
                    for (i, e) in q.iter().enumerate() {
                        if key(e) > key(&q[idx]) {
                            idx = i;
                        }
                    }
                    idx
                };
                match rule {
                    DeliveryRule::HighestSourceFirst => best(&|e| e.src as i64),
                    DeliveryRule::LowestSourceFirst => best(&|e| -(e.src as i64)),
                    DeliveryRule::Starve(x) => best(&|e| i64::from(e.dst != x)),
                }
            }
        }
    }

    fn corrupt(&mut self, _view: &View<'_, A>, env: &Envelope) -> Option<Vec<u8>> {
        if !self.spec.target.matches(env) {
            return None;
        }
        Some(match self.spec.corruption {
            CorruptionRule::FlipAllBits => env.payload.iter().map(|b| !b).collect(),
            CorruptionRule::RandomBytes => {
                let len = if env.payload.is_empty() {
                    self.noise_rng.random_range(1..=4)
                } else {
                    env.payload.len()
                };
                (0..len).map(|_| self.noise_rng.random()).collect()
            }
            CorruptionRule::Zero => vec![0; env.payload.len()],
            CorruptionRule::Truncate => Vec::new(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn budget_parse_and_allowance() {
        let b: Budget = "1/3".parse().unwrap();
        assert_eq!(b.allowance(0), 0);
        assert_eq!(b.allowance(2), 0);
        assert_eq!(b.allowance(3), 1);
        assert_eq!(b.allowance(10), 3);
        assert_eq!("1".parse::<Budget>().unwrap(), Budget::ALL);
        assert!("2/1".parse::<Budget>().is_err());
        assert!("1/0".parse::<Budget>().is_err());
        assert!("x".parse::<Budget>().is_err());
        assert_eq!(Budget::ALL.allowance(u64::MAX), u64::MAX);
    }

    #[test]
    fn spec_serde_round_trip() {
        let spec = AdversarySpec {
            delivery: Delivery::Targeted(DeliveryRule::Starve(3)),
            budget: Budget::new(1, 8).unwrap(),
            corruption: CorruptionRule::Zero,
            target: Target::Slots([(1, 2, 0, 1)].into()),
        };
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<AdversarySpec>(&json).unwrap(), spec);
    }
}
