//! Finitely supported real sequences and the rearrangement-invariant
//! quantities defined on them: distribution function, non-increasing
//! rearrangement, the `l_p` norm, the weak `l_p` quasinorm and its
//! equivalent maximal norm.
//!
//! All norms are evaluated on the rearranged profile, summed from the
//! smallest modulus up. A sequence and any permutation of its values
//! therefore produce bit-identical norms.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exponent `p` of the Lebesgue scale, restricted to `1 < p < inf`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize)]
pub struct Exponent(f64);

impl Exponent {
    pub fn new(p: f64) -> Result<Self> {
        if p.is_finite() && p > 1.0 {
            Ok(Exponent(p))
        } else {
            Err(Error::InvalidArgument(format!(
                "exponent must satisfy 1 < p < inf, got {p}"
            )))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }

    #[inline]
    pub fn recip(self) -> f64 {
        1.0 / self.0
    }

    /// Conjugate exponent `p / (p - 1)`.
    #[inline]
    pub fn conjugate(self) -> f64 {
        self.0 / (self.0 - 1.0)
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Deserialize)]
struct RawSeq {
    entries: Vec<(u64, f64)>,
}

/// A finitely supported real sequence stored as strictly increasing
/// `(index, value)` pairs. Indices start at 1 and no stored value is zero,
/// so the stored indices are exactly the support.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSeq")]
pub struct SparseSeq {
    entries: Vec<(u64, f64)>,
}

impl TryFrom<RawSeq> for SparseSeq {
    type Error = Error;

    fn try_from(raw: RawSeq) -> Result<Self> {
        SparseSeq::new(raw.entries)
    }
}

impl SparseSeq {
    /// The zero sequence.
    pub fn zero() -> Self {
        SparseSeq { entries: Vec::new() }
    }

    /// Validating constructor: indices must be `>= 1` and strictly increasing,
    /// values finite and nonzero.
    pub fn new(entries: Vec<(u64, f64)>) -> Result<Self> {
        let mut prev = 0u64;
        for &(i, x) in &entries {
            if i == 0 {
                return Err(Error::InvalidSequence("index 0 is not allowed".into()));
            }
            if i <= prev {
                return Err(Error::InvalidSequence(format!(
                    "indices must be strictly increasing ({prev} then {i})"
                )));
            }
            if x == 0.0 {
                return Err(Error::InvalidSequence(format!("stored zero at index {i}")));
            }
            if !x.is_finite() {
                return Err(Error::InvalidSequence(format!("non-finite value at index {i}")));
            }
            prev = i;
        }
        Ok(SparseSeq { entries })
    }

    /// Builds a sequence from pairs in any order. Repeated indices are summed
    /// and exact zeros dropped.
    pub fn from_unsorted(mut pairs: Vec<(u64, f64)>) -> Result<Self> {
        pairs.sort_by_key(|&(i, _)| i);
        let mut entries: Vec<(u64, f64)> = Vec::with_capacity(pairs.len());
        for (i, x) in pairs {
            match entries.last_mut() {
                Some(last) if last.0 == i => last.1 += x,
                _ => entries.push((i, x)),
            }
        }
        entries.retain(|&(_, x)| x != 0.0);
        SparseSeq::new(entries)
    }

    /// Single-entry sequence `value * e_index`.
    pub fn unit(index: u64, value: f64) -> Result<Self> {
        SparseSeq::new(vec![(index, value)])
    }

    pub(crate) fn from_sorted_unchecked(entries: Vec<(u64, f64)>) -> Self {
        debug_assert!(SparseSeq::new(entries.clone()).is_ok());
        SparseSeq { entries }
    }

    #[inline]
    pub fn entries(&self) -> &[(u64, f64)] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<(u64, f64)> {
        self.entries
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    #[inline]
    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn support(&self) -> impl Iterator<Item = u64> + '_ {
        self.entries.iter().map(|&(i, _)| i)
    }

    pub fn min_index(&self) -> Option<u64> {
        self.entries.first().map(|&(i, _)| i)
    }

    pub fn max_index(&self) -> Option<u64> {
        self.entries.last().map(|&(i, _)| i)
    }

    /// Value at `index` (zero off the support).
    pub fn get(&self, index: u64) -> f64 {
        match self.entries.binary_search_by_key(&index, |&(i, _)| i) {
            Ok(pos) => self.entries[pos].1,
            Err(_) => 0.0,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, &(_, x)| m.max(x.abs()))
    }

    pub fn min_abs(&self) -> Option<f64> {
        self.entries
            .iter()
            .map(|&(_, x)| x.abs())
            .min_by(|a, b| a.total_cmp(b))
    }

    /// Modulus sequence `|u|`.
    pub fn abs(&self) -> SparseSeq {
        SparseSeq {
            entries: self.entries.iter().map(|&(i, x)| (i, x.abs())).collect(),
        }
    }

    /// `alpha * u`. Entries that underflow to zero are dropped.
    pub fn scale(&self, alpha: f64) -> SparseSeq {
        SparseSeq {
            entries: self
                .entries
                .iter()
                .map(|&(i, x)| (i, alpha * x))
                .filter(|&(_, x)| x != 0.0)
                .collect(),
        }
    }

    /// Exact sparse sum by sorted merge; cancellations to zero are dropped.
    pub fn add(&self, other: &SparseSeq) -> SparseSeq {
        let (a, b) = (&self.entries, &other.entries);
        let mut out = Vec::with_capacity(a.len() + b.len());
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                Ordering::Less => {
                    out.push(a[i]);
                    i += 1;
                }
                Ordering::Greater => {
                    out.push(b[j]);
                    j += 1;
                }
                Ordering::Equal => {
                    let s = a[i].1 + b[j].1;
                    if s != 0.0 {
                        out.push((a[i].0, s));
                    }
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&a[i..]);
        out.extend_from_slice(&b[j..]);
        SparseSeq { entries: out }
    }

    pub fn sub(&self, other: &SparseSeq) -> SparseSeq {
        self.add(&other.scale(-1.0))
    }

    /// Sum of many sequences. Summation per index follows the order of `seqs`.
    pub fn sum<'a, I: IntoIterator<Item = &'a SparseSeq>>(seqs: I) -> SparseSeq {
        seqs.into_iter()
            .fold(SparseSeq::zero(), |acc, s| acc.add(s))
    }

    /// Keeps only entries whose index satisfies `keep`.
    pub fn filter_index<F: Fn(u64) -> bool>(&self, keep: F) -> SparseSeq {
        SparseSeq {
            entries: self.entries.iter().copied().filter(|&(i, _)| keep(i)).collect(),
        }
    }

    /// Whether `|self(j)| <= |other(j)|` for every index `j`.
    pub fn dominated_by(&self, other: &SparseSeq) -> bool {
        self.entries
            .iter()
            .all(|&(i, x)| x.abs() <= other.get(i).abs())
    }
}

/// Non-increasing rearrangement `u*`: moduli of the support, largest first.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RearrangedProfile {
    values: Vec<f64>,
}

impl RearrangedProfile {
    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `u*(j)` for 1-based `j`; zero beyond the support size.
    pub fn at(&self, j: usize) -> f64 {
        if j == 0 {
            return f64::INFINITY;
        }
        self.values.get(j - 1).copied().unwrap_or(0.0)
    }

    fn lp_sum(&self, p: Exponent) -> (f64, f64) {
        let scale = match self.values.first() {
            Some(&m) => m,
            None => return (0.0, 0.0),
        };
        let p = p.get();
        let sum = self
            .values
            .iter()
            .rev()
            .map(|&x| (x / scale).powf(p))
            .sum::<f64>();
        (scale, sum)
    }
}

/// `mu_u(lambda) = #{i : |u(i)| > lambda}`.
pub fn dist_func(u: &SparseSeq, lambda: f64) -> Result<usize> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "distribution function needs lambda > 0, got {lambda}"
        )));
    }
    Ok(u.entries.iter().filter(|&&(_, x)| x.abs() > lambda).count())
}

/// `u*(j)` is the `j`-th largest modulus, 1-indexed.
pub fn decreasing_rearrangement(u: &SparseSeq) -> RearrangedProfile {
    let mut values: Vec<f64> = u.entries.iter().map(|&(_, x)| x.abs()).collect();
    values.sort_unstable_by(|a, b| b.total_cmp(a));
    RearrangedProfile { values }
}

/// Places `u*` back onto `supp u` in index order: `u(n_j) <- u*(j)`.
pub fn rearrangement_on_support(u: &SparseSeq) -> SparseSeq {
    let profile = decreasing_rearrangement(u);
    SparseSeq {
        entries: u
            .entries
            .iter()
            .zip(profile.values)
            .map(|(&(i, _), x)| (i, x))
            .collect(),
    }
}

pub fn lp_norm(u: &SparseSeq, p: Exponent) -> f64 {
    lp_norm_of_profile(&decreasing_rearrangement(u), p)
}

pub fn lp_norm_of_profile(profile: &RearrangedProfile, p: Exponent) -> f64 {
    let (scale, sum) = profile.lp_sum(p);
    if scale == 0.0 {
        0.0
    } else {
        scale * sum.powf(p.recip())
    }
}

/// `sup_j j^{1/p} u*(j)`; a maximum over the support for finite sequences.
pub fn weak_lp_quasinorm(u: &SparseSeq, p: Exponent) -> f64 {
    weak_lp_quasinorm_of_profile(&decreasing_rearrangement(u), p)
}

pub fn weak_lp_quasinorm_of_profile(profile: &RearrangedProfile, p: Exponent) -> f64 {
    let r = p.recip();
    profile
        .values
        .iter()
        .enumerate()
        .map(|(j, &x)| ((j + 1) as f64).powf(r) * x)
        .fold(0.0, f64::max)
}

/// Discrete maximal norm `sup_n n^{1/p - 1} sum_{j <= n} u*(j)`.
///
/// This is a genuine norm on weak `l_p` and satisfies
/// `quasinorm <= result <= p' * quasinorm`.
pub fn weak_lp_norm_equiv(u: &SparseSeq, p: Exponent) -> f64 {
    weak_lp_norm_equiv_of_profile(&decreasing_rearrangement(u), p)
}

pub fn weak_lp_norm_equiv_of_profile(profile: &RearrangedProfile, p: Exponent) -> f64 {
    let e = p.recip() - 1.0;
    let mut partial = 0.0;
    let mut best = 0.0f64;
    for (j, &x) in profile.values.iter().enumerate() {
        partial += x;
        best = best.max(((j + 1) as f64).powf(e) * partial);
    }
    best
}

/// `P_m u`: entries with index `<= m`.
pub fn head(u: &SparseSeq, m: u64) -> SparseSeq {
    let cut = u.entries.partition_point(|&(i, _)| i <= m);
    SparseSeq {
        entries: u.entries[..cut].to_vec(),
    }
}

/// `R_m u = u - P_m u`: entries with index `> m`.
pub fn tail(u: &SparseSeq, m: u64) -> SparseSeq {
    let cut = u.entries.partition_point(|&(i, _)| i <= m);
    SparseSeq {
        entries: u.entries[cut..].to_vec(),
    }
}

/// Norm of the inclusion `l_p -> weak l_p`.
///
/// `j (a*(j))^p <= sum_{i <= j} (a*(i))^p <= ||a||_p^p` for every `j`, and
/// `e_1` attains equality, so the constant is exactly 1 for every `p`.
pub fn embedding_constant(_p: Exponent) -> f64 {
    1.0
}
