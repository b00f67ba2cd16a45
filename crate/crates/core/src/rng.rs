//! Counter-based random streams.
//!
//! Every draw is a pure function of `(key, agent, step)`, so a population
//! step gives the same outcome regardless of iteration order or how many
//! worker threads evaluate it. Streams are derived from a root seed by
//! hashing string labels, which keeps independent experiment parts
//! (groups, grid cells, replicates) on disjoint substreams.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(label: &str) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

#[inline]
fn to_unit(bits: u64) -> f64 {
    // 53 high bits -> [0, 1)
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Stream {
    key: u64,
}

impl Stream {
    pub fn new(seed: u64) -> Self {
        Stream {
            key: mix64(seed ^ GOLDEN),
        }
    }

    /// Substream identified by a label.
    pub fn derive(&self, label: &str) -> Self {
        Stream {
            key: mix64(self.key ^ mix64(fnv1a(label))),
        }
    }

    /// Substream identified by an index (replicate, cell, ...).
    pub fn derive_index(&self, index: u64) -> Self {
        Stream {
            key: mix64(
                self.key
                    .wrapping_add(mix64(index.wrapping_mul(GOLDEN) ^ 0xA5A5)),
            ),
        }
    }

    pub fn agent(&self, agent: u64) -> AgentStream {
        AgentStream {
            key: mix64(self.key ^ mix64(agent.wrapping_add(GOLDEN))),
        }
    }

    /// Uniform draw in `[0, 1)` for `(agent, step)`.
    #[inline]
    pub fn uniform(&self, agent: u64, step: u64) -> f64 {
        self.agent(agent).uniform(step)
    }

    pub fn seed_value(&self) -> u64 {
        self.key
    }
}

/// Per-agent view of a [`Stream`]; hoists the agent hash out of step loops.
#[derive(Debug, Clone, Copy)]
pub struct AgentStream {
    key: u64,
}

impl AgentStream {
    #[inline]
    pub fn uniform(&self, step: u64) -> f64 {
        to_unit(mix64(self.key.wrapping_add(step.wrapping_mul(GOLDEN))))
    }
}
