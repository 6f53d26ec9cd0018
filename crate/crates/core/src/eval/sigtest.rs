//! Approximate randomization test between two systems scored on the same
//! items.
//!
//! Each round swaps the paired outputs `(a[i], b[i])` independently with
//! probability 1/2 and recomputes the absolute difference of the statistic.
//! The p-value is `(count(round >= observed) + 1) / (rounds + 1)`.

use std::str::FromStr;

use thiserror::Error;

use crate::corpus::IsLabel;
use crate::rng::SeededRng;

/// Tolerance when comparing F1 differences, which are not exact in floating
/// point. Accuracy differences are compared as exact integer counts.
pub const F1_TOLERANCE: f64 = 1e-12;
/// Largest `n` accepted by [`exact_p_value`].
pub const MAX_EXACT_ITEMS: usize = 24;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SigTestError {
    #[error("length mismatch: system a {a}, system b {b}, gold {gold}")]
    LengthMismatch { a: usize, b: usize, gold: usize },
    #[error("rounds must be >= 1")]
    ZeroRounds,
    #[error("exact enumeration supports at most {MAX_EXACT_ITEMS} items, got {0}")]
    TooManyItems(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Statistic {
    /// Difference in number of correct items (equivalently in accuracy).
    #[default]
    Accuracy,
    /// Difference in F1 of one class.
    ClassF1(IsLabel),
}

impl FromStr for Statistic {
    type Err = String;

    /// `accuracy` or `f1:<label>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "accuracy" {
            return Ok(Statistic::Accuracy);
        }
        match s.strip_prefix("f1:") {
            Some(label) => label.parse().map(Statistic::ClassF1).map_err(|e| format!("{e}")),
            None => Err(format!("unknown statistic {s:?} (expected accuracy or f1:<label>)")),
        }
    }
}

/// Per-item contribution to the statistic, for either orientation of a pair.
#[derive(Clone, Copy, Default)]
struct Counts {
    tp: i64,
    fp: i64,
    fnn: i64,
}

impl Counts {
    fn add(&mut self, o: Counts, sign: i64) {
        self.tp += sign * o.tp;
        self.fp += sign * o.fp;
        self.fnn += sign * o.fnn;
    }

    fn f1(self) -> f64 {
        let den = 2 * self.tp + self.fp + self.fnn;
        if den == 0 {
            0.0
        } else {
            2.0 * self.tp as f64 / den as f64
        }
    }
}

struct Paired {
    statistic: Statistic,
    /// Accuracy: correct(a) - correct(b) per item.
    delta: Vec<i64>,
    /// F1: per-item counts of system a and b for the chosen class.
    ca: Vec<Counts>,
    cb: Vec<Counts>,
}

impl Paired {
    fn new(a: &[IsLabel], b: &[IsLabel], gold: &[IsLabel], statistic: Statistic) -> Result<Self, SigTestError> {
        if a.len() != gold.len() || b.len() != gold.len() {
            return Err(SigTestError::LengthMismatch {
                a: a.len(),
                b: b.len(),
                gold: gold.len(),
            });
        }
        let mut p = Paired {
            statistic,
            delta: Vec::new(),
            ca: Vec::new(),
            cb: Vec::new(),
        };
        match statistic {
            Statistic::Accuracy => {
                p.delta = (0..gold.len())
                    .map(|i| i64::from(a[i] == gold[i]) - i64::from(b[i] == gold[i]))
                    .collect();
            }
            Statistic::ClassF1(c) => {
                let counts = |x: IsLabel, g: IsLabel| Counts {
                    tp: i64::from(x == c && g == c),
                    fp: i64::from(x == c && g != c),
                    fnn: i64::from(x != c && g == c),
                };
                p.ca = (0..gold.len()).map(|i| counts(a[i], gold[i])).collect();
                p.cb = (0..gold.len()).map(|i| counts(b[i], gold[i])).collect();
            }
        }
        Ok(p)
    }

    fn len(&self) -> usize {
        self.delta.len().max(self.ca.len())
    }

    fn tolerance(&self) -> f64 {
        match self.statistic {
            Statistic::Accuracy => 0.0,
            Statistic::ClassF1(_) => F1_TOLERANCE,
        }
    }

    /// Statistic with item `i` swapped when `swapped(i)` holds.
    fn eval(&self, swapped: impl Fn(usize) -> bool) -> f64 {
        match self.statistic {
            Statistic::Accuracy => {
                let s: i64 = self
                    .delta
                    .iter()
                    .enumerate()
                    .map(|(i, &d)| if swapped(i) { -d } else { d })
                    .sum();
                s.abs() as f64
            }
            Statistic::ClassF1(_) => {
                let mut a = Counts::default();
                let mut b = Counts::default();
                for i in 0..self.ca.len() {
                    let (x, y) = if swapped(i) { (self.cb[i], self.ca[i]) } else { (self.ca[i], self.cb[i]) };
                    a.add(x, 1);
                    b.add(y, 1);
                }
                (a.f1() - b.f1()).abs()
            }
        }
    }
}

/// Observed statistic and the sampled statistics of the shuffled rounds.
#[derive(Debug, Clone, PartialEq)]
pub struct NullDistribution {
    pub observed: f64,
    pub samples: Vec<f64>,
    pub tolerance: f64,
}

impl NullDistribution {
    pub fn p_value(&self) -> f64 {
        self.p_value_at(self.observed)
    }

    /// p-value the same rounds would give for an observed statistic `d`.
    pub fn p_value_at(&self, d: f64) -> f64 {
        let hits = self.samples.iter().filter(|&&s| s >= d - self.tolerance).count();
        (hits + 1) as f64 / (self.samples.len() + 1) as f64
    }
}

pub fn null_distribution(
    a: &[IsLabel],
    b: &[IsLabel],
    gold: &[IsLabel],
    rounds: usize,
    seed: u64,
    statistic: Statistic,
) -> Result<NullDistribution, SigTestError> {
    if rounds == 0 {
        return Err(SigTestError::ZeroRounds);
    }
    let paired = Paired::new(a, b, gold, statistic)?;
    let n = paired.len();
    let mut rng = SeededRng::new(seed);
    let mut bits = vec![0u64; n.div_ceil(64)];
    let samples = (0..rounds)
        .map(|_| {
            bits.iter_mut().for_each(|w| *w = rng.next_u64());
            paired.eval(|i| bits[i / 64] >> (i % 64) & 1 == 1)
        })
        .collect();
    Ok(NullDistribution {
        observed: paired.eval(|_| false),
        samples,
        tolerance: paired.tolerance(),
    })
}

/// Monte-Carlo p-value of the difference between systems `a` and `b`.
pub fn randomization_test(
    a: &[IsLabel],
    b: &[IsLabel],
    gold: &[IsLabel],
    rounds: usize,
    seed: u64,
    statistic: Statistic,
) -> Result<f64, SigTestError> {
    Ok(null_distribution(a, b, gold, rounds, seed, statistic)?.p_value())
}

/// Exact p-value over all `2^n` swap patterns: the fraction of patterns whose
/// statistic reaches the observed one.
pub fn exact_p_value(a: &[IsLabel], b: &[IsLabel], gold: &[IsLabel], statistic: Statistic) -> Result<f64, SigTestError> {
    let paired = Paired::new(a, b, gold, statistic)?;
    let n = paired.len();
    if n > MAX_EXACT_ITEMS {
        return Err(SigTestError::TooManyItems(n));
    }
    let observed = paired.eval(|_| false);
    let tol = paired.tolerance();
    let patterns = 1u64 << n;
    let hits = (0..patterns)
        .filter(|&mask| paired.eval(|i| mask >> i & 1 == 1) >= observed - tol)
        .count();
    Ok(hits as f64 / patterns as f64)
}
