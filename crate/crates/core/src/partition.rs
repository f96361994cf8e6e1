//! Set partitions of the scent rounds as restricted-growth strings.
//!
//! A partition over `n` rounds is stored as labels `rgs[0..n]` with
//! `rgs[0] = 0` and `rgs[i] <= 1 + max(rgs[..i])`. Two rounds share a label
//! exactly when they were judged to be the same scent.

use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

/// Largest partition size handled by the game.
pub const MAX_ROUNDS: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PartitionError {
    #[error("partition size {0} outside 1..=5")]
    SizeOutOfRange(usize),
    #[error("labels {0:?} are not a restricted-growth string")]
    NotRestrictedGrowth(Vec<u8>),
    #[error("round {round}: judgment {judgment} is not valid (only rounds 1..{round} may be matched)")]
    InvalidJudgment { round: usize, judgment: Judgment },
    #[error("expected {expected} judgments, got {got}")]
    WrongJudgmentCount { expected: usize, got: usize },
    #[error("partition sizes differ: {left} vs {right}")]
    SizeMismatch { left: usize, right: usize },
}

/// A set partition of rounds `1..=n` in canonical restricted-growth form.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<u8>", into = "Vec<u8>")]
pub struct Partition {
    rgs: Vec<u8>,
}

impl Partition {
    /// Validates a restricted-growth string.
    pub fn from_rgs(rgs: Vec<u8>) -> Result<Self, PartitionError> {
        if rgs.is_empty() || rgs.len() > MAX_ROUNDS {
            return Err(PartitionError::SizeOutOfRange(rgs.len()));
        }
        let mut next = 0u8;
        for &label in &rgs {
            if label > next {
                return Err(PartitionError::NotRestrictedGrowth(rgs));
            }
            if label == next {
                next += 1;
            }
        }
        Ok(Self { rgs })
    }

    /// Canonicalises arbitrary labels: positions with equal labels share a group.
    pub fn from_labels<T: PartialEq>(labels: &[T]) -> Result<Self, PartitionError> {
        if labels.is_empty() || labels.len() > MAX_ROUNDS {
            return Err(PartitionError::SizeOutOfRange(labels.len()));
        }
        let mut rgs = Vec::with_capacity(labels.len());
        let mut groups = 0u8;
        for (i, label) in labels.iter().enumerate() {
            match labels[..i].iter().position(|l| l == label) {
                Some(first) => rgs.push(rgs[first]),
                None => {
                    rgs.push(groups);
                    groups += 1;
                }
            }
        }
        Ok(Self { rgs })
    }

    /// The singleton partition over round 1.
    pub fn singleton() -> Self {
        Self { rgs: alloc::vec![0] }
    }

    /// Parses the compact id form, e.g. `"00101"`.
    pub fn parse(id: &str) -> Result<Self, PartitionError> {
        let rgs: Option<Vec<u8>> = id.chars().map(|c| c.to_digit(10).map(|d| d as u8)).collect();
        match rgs {
            Some(rgs) => Self::from_rgs(rgs),
            None => Err(PartitionError::NotRestrictedGrowth(Vec::new())),
        }
    }

    pub fn rgs(&self) -> &[u8] {
        &self.rgs
    }

    pub fn len(&self) -> usize {
        self.rgs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rgs.is_empty()
    }

    pub fn group_count(&self) -> usize {
        self.rgs.iter().copied().max().map_or(0, |m| m as usize + 1)
    }

    /// Whether 0-based positions `i` and `j` are in the same group.
    pub fn same_group(&self, i: usize, j: usize) -> bool {
        self.rgs[i] == self.rgs[j]
    }

    /// Groups as lists of 0-based positions, ordered by label.
    pub fn groups(&self) -> Vec<Vec<usize>> {
        let mut groups = alloc::vec![Vec::new(); self.group_count()];
        for (i, &label) in self.rgs.iter().enumerate() {
            groups[label as usize].push(i);
        }
        groups
    }

    /// Canonical pattern id: the rgs digits, e.g. `"00101"`.
    pub fn id(&self) -> alloc::string::String {
        self.rgs.iter().map(|&d| char::from(b'0' + d)).collect()
    }

    /// The partition restricted to the first `n` rounds.
    pub fn prefix(&self, n: usize) -> Result<Self, PartitionError> {
        if n == 0 || n > self.len() {
            return Err(PartitionError::SizeOutOfRange(n));
        }
        Ok(Self { rgs: self.rgs[..n].to_vec() })
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

impl TryFrom<Vec<u8>> for Partition {
    type Error = PartitionError;
    fn try_from(rgs: Vec<u8>) -> Result<Self, Self::Error> {
        Self::from_rgs(rgs)
    }
}

impl From<Partition> for Vec<u8> {
    fn from(p: Partition) -> Self {
        p.rgs
    }
}

/// A player's verdict on the current round.
///
/// `MatchRound(j)` joins the group containing round `j` (1-based), so two
/// matches pointing into the same group are equivalent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "round", rename_all = "snake_case")]
pub enum Judgment {
    New,
    #[serde(rename = "match")]
    MatchRound(u8),
}

impl fmt::Display for Judgment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Judgment::New => f.write_str("new"),
            Judgment::MatchRound(j) => write!(f, "match round {j}"),
        }
    }
}

impl Judgment {
    /// Checks the judgment is admissible for 1-based `round`.
    pub fn validate_for_round(self, round: usize) -> Result<(), PartitionError> {
        match self {
            _ if !(2..=MAX_ROUNDS).contains(&round) => Err(PartitionError::InvalidJudgment { round, judgment: self }),
            Judgment::MatchRound(j) if j == 0 || j as usize >= round => {
                Err(PartitionError::InvalidJudgment { round, judgment: self })
            }
            _ => Ok(()),
        }
    }
}

/// Extends a partition over rounds `1..=k` with the judgment for round `k + 1`.
pub fn apply_judgment(current: &Partition, judgment: Judgment) -> Result<Partition, PartitionError> {
    let k = current.len();
    judgment.validate_for_round(k + 1)?;
    let label = match judgment {
        Judgment::New => current.group_count() as u8,
        Judgment::MatchRound(j) => current.rgs[j as usize - 1],
    };
    let mut rgs = current.rgs.clone();
    rgs.push(label);
    Ok(Partition { rgs })
}

/// Folds the judgments for rounds 2..=5 from the singleton partition.
pub fn partition_from_judgments(judgments: &[Judgment]) -> Result<Partition, PartitionError> {
    if judgments.len() != MAX_ROUNDS - 1 {
        return Err(PartitionError::WrongJudgmentCount { expected: MAX_ROUNDS - 1, got: judgments.len() });
    }
    fold_judgments(judgments)
}

/// Folds any number (0..=4) of judgments from the singleton partition.
pub fn fold_judgments(judgments: &[Judgment]) -> Result<Partition, PartitionError> {
    judgments.iter().try_fold(Partition::singleton(), |p, &j| apply_judgment(&p, j))
}

/// The judgment that extends `prefix` with the label `label` for the next round.
///
/// Inverse of [`apply_judgment`] under union semantics: existing labels map
/// to a match on the first round of that group.
pub fn judgment_for_label(prefix: &Partition, label: u8) -> Option<Judgment> {
    match prefix.rgs.iter().position(|&l| l == label) {
        Some(pos) => Some(Judgment::MatchRound(pos as u8 + 1)),
        None if label as usize == prefix.group_count() => Some(Judgment::New),
        None => None,
    }
}

/// All set partitions of `n` rounds in lexicographic rgs order.
pub fn enumerate_partitions(n: usize) -> Result<Vec<Partition>, PartitionError> {
    if n == 0 || n > MAX_ROUNDS {
        return Err(PartitionError::SizeOutOfRange(n));
    }
    let mut out = Vec::new();
    let mut rgs = alloc::vec![0u8; n];
    // Odometer over restricted-growth strings.
    loop {
        out.push(Partition { rgs: rgs.clone() });
        let mut i = n - 1;
        loop {
            if i == 0 {
                return Ok(out);
            }
            let max_prefix = rgs[..i].iter().copied().max().unwrap_or(0);
            if rgs[i] <= max_prefix {
                rgs[i] += 1;
                rgs[i + 1..].iter_mut().for_each(|v| *v = 0);
                break;
            }
            i -= 1;
        }
    }
}

/// Pairwise agreement between a player's partition and the correct one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgreementScore {
    pub pair_matches: u32,
    pub total_pairs: u32,
    pub exact: bool,
    pub rand_index: f64,
}

/// Rand index over all round pairs plus an exact-match flag.
pub fn compare_patterns(player: &Partition, truth: &Partition) -> Result<AgreementScore, PartitionError> {
    if player.len() != truth.len() {
        return Err(PartitionError::SizeMismatch { left: player.len(), right: truth.len() });
    }
    let n = player.len();
    let mut pair_matches = 0u32;
    let mut total_pairs = 0u32;
    for i in 0..n {
        for j in i + 1..n {
            total_pairs += 1;
            if player.same_group(i, j) == truth.same_group(i, j) {
                pair_matches += 1;
            }
        }
    }
    let rand_index = if total_pairs == 0 { 1.0 } else { pair_matches as f64 / total_pairs as f64 };
    Ok(AgreementScore { pair_matches, total_pairs, exact: player == truth, rand_index })
}
