//! Synthetic interaction logs with planted structure, for tests and demos.
//!
//! Item keys are the decimal planted ids and timestamps are sequence
//! positions, so a log that survives preprocessing intact keeps its ids.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::InteractionRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthKind {
    /// Each item has one planted successor; the next item follows it unless
    /// replaced by uniform noise.
    Markov,
    /// Each user draws from a private preferred item set unless replaced by
    /// uniform noise; no sequential structure.
    UserPreference,
}

impl FromStr for SynthKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "markov" => Ok(Self::Markov),
            "user-pref" | "user-preference" => Ok(Self::UserPreference),
            other => Err(format!("unknown corpus kind `{other}` (markov, user-pref)")),
        }
    }
}

impl fmt::Display for SynthKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Markov => "markov",
            Self::UserPreference => "user-pref",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub kind: SynthKind,
    pub users: usize,
    pub items: usize,
    pub length: usize,
    /// Probability that an event is replaced by a uniformly random item.
    pub noise: f64,
    /// Size of each user's preferred set (user-preference corpora only).
    pub preferred: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            kind: SynthKind::Markov,
            users: 200,
            items: 50,
            length: 60,
            noise: 0.1,
            preferred: 5,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub records: Vec<InteractionRecord>,
    /// Planted successor of each item (Markov corpora).
    pub successor: Option<Vec<usize>>,
    /// Planted preferred set of each user (user-preference corpora).
    pub preferred: Option<Vec<Vec<usize>>>,
}

pub fn generate(spec: &SynthSpec) -> SynthCorpus {
    assert!(spec.items >= 2 && spec.users >= 1, "corpus too small");
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut sequences = vec![Vec::with_capacity(spec.length); spec.users];
    let (successor, preferred) = match spec.kind {
        SynthKind::Markov => {
            // one cycle through a random permutation: no fixed points
            let mut perm: Vec<usize> = (0..spec.items).collect();
            perm.shuffle(&mut rng);
            let mut succ = vec![0; spec.items];
            for i in 0..spec.items {
                succ[perm[i]] = perm[(i + 1) % spec.items];
            }
            for seq in &mut sequences {
                let mut cur = rng.gen_range(0..spec.items);
                seq.push(cur);
                for _ in 1..spec.length {
                    cur = if rng.gen_bool(spec.noise) {
                        rng.gen_range(0..spec.items)
                    } else {
                        succ[cur]
                    };
                    seq.push(cur);
                }
            }
            (Some(succ), None)
        }
        SynthKind::UserPreference => {
            let k = spec.preferred.clamp(1, spec.items);
            let all: Vec<usize> = (0..spec.items).collect();
            let sets: Vec<Vec<usize>> = (0..spec.users)
                .map(|_| {
                    let mut s: Vec<usize> = all.choose_multiple(&mut rng, k).copied().collect();
                    s.sort_unstable();
                    s
                })
                .collect();
            for (seq, set) in sequences.iter_mut().zip(&sets) {
                for _ in 0..spec.length {
                    seq.push(if rng.gen_bool(spec.noise) {
                        rng.gen_range(0..spec.items)
                    } else {
                        *set.choose(&mut rng).unwrap()
                    });
                }
            }
            (None, Some(sets))
        }
    };
    let records = sequences
        .iter()
        .enumerate()
        .flat_map(|(u, seq)| {
            seq.iter()
                .enumerate()
                .map(move |(t, &item)| InteractionRecord {
                    user: u.to_string(),
                    item: item.to_string(),
                    rating: 5.0,
                    timestamp: t as u64,
                })
        })
        .collect();
    SynthCorpus {
        records,
        successor,
        preferred,
    }
}

/// `user,item,rating,timestamp` lines, readable with the default log format.
pub fn write_log<W: std::io::Write>(
    records: &[InteractionRecord],
    mut out: W,
) -> std::io::Result<()> {
    for r in records {
        writeln!(out, "{},{},{},{}", r.user, r.item, r.rating, r.timestamp)?;
    }
    Ok(())
}
