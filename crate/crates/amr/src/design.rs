//! Treatment assignment mechanisms and reproducible randomization streams.
//!
//! Randomness is keyed by `(seed, stream_index)` on a counter-based stream
//! cipher generator, so replicate `r` always sees the same draws no matter
//! how many threads are running or in what order replicates complete.

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AmrError, Result};

pub const ENUMERATION_LIMIT: usize = 20;

/// The assignment mechanism.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AssignmentDesign {
    /// Independent Bernoulli(p) coin flips per intervention point.
    Bernoulli { p: f64 },
    /// Exactly `n1` treated points, uniformly at random.
    Complete { n1: usize },
}

impl AssignmentDesign {
    pub fn bernoulli(p: f64) -> Result<Self> {
        if !(0.0 < p && p < 1.0) {
            return Err(AmrError::InvalidInput(format!(
                "bernoulli probability must lie in (0, 1), got {p}"
            )));
        }
        Ok(AssignmentDesign::Bernoulli { p })
    }

    pub fn complete(n1: usize) -> Result<Self> {
        if n1 == 0 {
            return Err(AmrError::InvalidInput(
                "complete design needs n1 >= 1".into(),
            ));
        }
        Ok(AssignmentDesign::Complete { n1 })
    }

    /// Design probability of treatment; for a complete design this is the
    /// realized share `n1/n`, which callers should treat as an approximation
    /// to the Bernoulli theory.
    pub fn probability(&self, n: usize) -> f64 {
        match self {
            AssignmentDesign::Bernoulli { p } => *p,
            AssignmentDesign::Complete { n1 } => *n1 as f64 / n as f64,
        }
    }
}

impl FromStr for AssignmentDesign {
    type Err = AmrError;

    /// Parses `bernoulli:0.5` or `complete:14`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, arg) = s.split_once(':').ok_or_else(|| {
            AmrError::InvalidInput(format!(
                "bad design `{s}`; expected bernoulli:<p> or complete:<n1>"
            ))
        })?;
        match kind {
            "bernoulli" => {
                let p: f64 = arg.parse().map_err(|_| {
                    AmrError::InvalidInput(format!("cannot parse probability `{arg}`"))
                })?;
                AssignmentDesign::bernoulli(p)
            }
            "complete" => {
                let n1: usize = arg.parse().map_err(|_| {
                    AmrError::InvalidInput(format!("cannot parse count `{arg}`"))
                })?;
                AssignmentDesign::complete(n1)
            }
            other => Err(AmrError::InvalidInput(format!("unknown design `{other}`"))),
        }
    }
}

/// A realized binary assignment with treated/control counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentVector {
    z: Vec<u8>,
    n1: usize,
}

impl AssignmentVector {
    pub fn new(z: Vec<u8>) -> Result<Self> {
        if let Some(bad) = z.iter().find(|v| **v > 1) {
            return Err(AmrError::BadBinary {
                id: String::new(),
                value: bad.to_string(),
            });
        }
        let n1 = z.iter().filter(|&&v| v == 1).count();
        Ok(Self { z, n1 })
    }

    pub fn z(&self) -> &[u8] {
        &self.z
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn is_treated(&self, i: usize) -> bool {
        self.z[i] == 1
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n0(&self) -> usize {
        self.z.len() - self.n1
    }

    /// Design probability of this exact vector under Bernoulli(p).
    pub fn bernoulli_probability(&self, p: f64) -> f64 {
        p.powi(self.n1 as i32) * (1.0 - p).powi(self.n0() as i32)
    }
}

/// The stream generator behind all randomized operations.
pub fn stream_rng(seed: u64, stream_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_index);
    rng
}

/// Draws one assignment of length `n` from `design` on stream
/// `(seed, stream_index)`.
pub fn draw_assignment(
    design: &AssignmentDesign,
    n: usize,
    seed: u64,
    stream_index: u64,
) -> Result<AssignmentVector> {
    let mut rng = stream_rng(seed, stream_index);
    draw_assignment_with(design, n, &mut rng)
}

/// As [`draw_assignment`] but drawing from an already-positioned stream;
/// used for rejected-and-redrawn sampling where the stream must advance.
pub fn draw_assignment_with(
    design: &AssignmentDesign,
    n: usize,
    rng: &mut impl Rng,
) -> Result<AssignmentVector> {
    if n < 2 {
        return Err(AmrError::InvalidInput(format!(
            "need at least 2 units, got {n}"
        )));
    }
    let z = match design {
        AssignmentDesign::Bernoulli { p } => {
            (0..n).map(|_| u8::from(rng.random::<f64>() < *p)).collect()
        }
        AssignmentDesign::Complete { n1 } => {
            if *n1 >= n {
                return Err(AmrError::InvalidInput(format!(
                    "complete design needs 0 < n1 < n, got n1={n1}, n={n}"
                )));
            }
            // Partial Fisher-Yates over unit indices; the first n1 become treated.
            let mut idx: Vec<usize> = (0..n).collect();
            for i in 0..*n1 {
                let j = rng.random_range(i..n);
                idx.swap(i, j);
            }
            let mut z = vec![0u8; n];
            for &i in &idx[..*n1] {
                z[i] = 1;
            }
            z
        }
    };
    AssignmentVector::new(z)
}

/// Yields all `2^n` binary assignment vectors in lexicographic order
/// (most significant bit = unit 0).
pub fn enumerate_assignments(n: usize) -> Result<impl Iterator<Item = AssignmentVector>> {
    if n > ENUMERATION_LIMIT {
        return Err(AmrError::TooLarge {
            n,
            max: ENUMERATION_LIMIT,
        });
    }
    Ok((0u64..(1u64 << n)).map(move |bits| {
        let z = (0..n)
            .map(|i| ((bits >> (n - 1 - i)) & 1) as u8)
            .collect();
        AssignmentVector::new(z).expect("binary by construction")
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn bernoulli_concentrates() {
        let design = AssignmentDesign::bernoulli(0.5).unwrap();
        let z = draw_assignment(&design, 100_000, 42, 0).unwrap();
        let share = z.n1() as f64 / z.len() as f64;
        assert!((share - 0.5).abs() < 0.01, "share = {share}");
    }

    #[test]
    fn complete_hits_exact_count() {
        let design = AssignmentDesign::complete(14).unwrap();
        let z = draw_assignment(&design, 28, 7, 3).unwrap();
        assert_eq!(z.n1(), 14);
        assert_eq!(z.n0(), 14);
    }

    #[test]
    fn same_stream_reproduces() {
        let design = AssignmentDesign::bernoulli(0.3).unwrap();
        let a = draw_assignment(&design, 50, 11, 5).unwrap();
        let b = draw_assignment(&design, 50, 11, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn different_streams_differ() {
        let design = AssignmentDesign::bernoulli(0.5).unwrap();
        let a = draw_assignment(&design, 64, 11, 0).unwrap();
        let b = draw_assignment(&design, 64, 11, 1).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn enumeration_n2_is_lexicographic() {
        let all: Vec<Vec<u8>> = enumerate_assignments(2)
            .unwrap()
            .map(|a| a.z().to_vec())
            .collect();
        assert_eq!(all, vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]);
    }

    #[test]
    fn enumeration_n4_has_16_distinct() {
        let all: HashSet<Vec<u8>> = enumerate_assignments(4)
            .unwrap()
            .map(|a| a.z().to_vec())
            .collect();
        assert_eq!(all.len(), 16);
    }

    #[test]
    fn enumeration_guard() {
        assert!(matches!(
            enumerate_assignments(21),
            Err(AmrError::TooLarge { .. })
        ));
    }

    #[test]
    fn bernoulli_probabilities_sum_to_one() {
        let p = 0.3;
        let total: f64 = enumerate_assignments(6)
            .unwrap()
            .map(|a| a.bernoulli_probability(p))
            .sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn design_parses_from_str() {
        assert_eq!(
            "bernoulli:0.5".parse::<AssignmentDesign>().unwrap(),
            AssignmentDesign::Bernoulli { p: 0.5 }
        );
        assert_eq!(
            "complete:14".parse::<AssignmentDesign>().unwrap(),
            AssignmentDesign::Complete { n1: 14 }
        );
        assert!("bernoulli:1.5".parse::<AssignmentDesign>().is_err());
        assert!("stratified:2".parse::<AssignmentDesign>().is_err());
    }
}
