//! Flat humps and the stage induction that produces the witnesses `z_N`.
//!
//! Stage `k` owns the block `I_k = {n_{k-1}+1, ..., n_k}`. Its hump `u_k` is a
//! normalised flat hump taken from `X_{n_{k-1}}`; `v_k = P_{n_k} u_k` lives on
//! `I_k` and the remainder `w_k = R_{n_k} u_k` is kept below `delta / 2^k`.
//! Consecutive stages are linked through
//! `eps_k = min{b_k, (n_k - n_{k-1})^{-1/p}}`, which caps every coordinate of
//! the next hump, and through the lower bound on the next block length.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seqcore::{head, lp_norm, tail, Exponent, SparseSeq};
use crate::subspace::{choose_cut, BasisProvider, TailExtractor, DEFAULT_RANK_TOL};
use crate::verifier::{self, Checklist};

pub const DEFAULT_SUPPORT_BUDGET: usize = 4_000_000;

/// Rounding allowance on `||v||_p <= 1` when accepting a flat hump.
const NORM_SLACK: f64 = 1e-12;

/// Parameters of one witness construction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RunParams {
    pub p: Exponent,
    pub delta: f64,
    pub stages: usize,
    pub support_budget: usize,
    pub rank_tol: f64,
}

impl RunParams {
    pub fn new(p: Exponent, delta: f64, stages: usize) -> Result<Self> {
        RunParams {
            p,
            delta,
            stages,
            support_budget: DEFAULT_SUPPORT_BUDGET,
            rank_tol: DEFAULT_RANK_TOL,
        }
        .validated()
    }

    pub fn with_support_budget(mut self, budget: usize) -> Result<Self> {
        self.support_budget = budget;
        self.validated()
    }

    pub fn validated(self) -> Result<Self> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "delta must lie in (0, 1), got {}",
                self.delta
            )));
        }
        if self.stages == 0 {
            return Err(Error::InvalidArgument("stage count must be at least 1".into()));
        }
        if self.support_budget == 0 {
            return Err(Error::InvalidArgument("support budget must be at least 1".into()));
        }
        if !(self.rank_tol > 0.0) {
            return Err(Error::InvalidArgument("rank tolerance must be positive".into()));
        }
        Ok(self)
    }

    /// Tail allowance `delta / 2^k` of stage `k`.
    pub fn stage_delta(&self, k: usize) -> f64 {
        self.delta * 0.5f64.powi(k as i32)
    }
}

/// Record of one flat-hump construction.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FlatHumpTrace {
    /// Inner unit vectors `u_1, u_2, ...`, each vanishing up to the previous cut.
    pub inner_vectors: Vec<SparseSeq>,
    /// Inner cuts `n_1 < n_2 < ...` (the starting cut `n_0 = n` excluded).
    pub inner_cuts: Vec<u64>,
    /// `s_k = ||u_1 + ... + u_k||_p`.
    pub s_values: Vec<f64>,
    pub u: SparseSeq,
    pub v: SparseSeq,
    pub w: SparseSeq,
    pub m: u64,
}

/// A flat-hump construction that ran out of budget or index space.
#[derive(Debug)]
pub struct FlatHumpFailure {
    pub error: Error,
    pub partial: FlatHumpTrace,
}

/// Inputs of [`build_flat_hump`] besides the basis.
#[derive(Clone, Copy, Debug)]
pub struct FlatHumpSpec {
    /// Every inner vector vanishes on `1..=n`.
    pub n: u64,
    /// Lower bound `N` on the final cut.
    pub n_floor: u64,
    /// Bound on every coordinate of the head; `f64::INFINITY` for none.
    pub eps: f64,
    pub delta: f64,
    pub p: Exponent,
}

/// Flat hump from a fresh extractor with the default rank tolerance and an
/// unlimited budget.
pub fn build_flat_hump(
    basis: &BasisProvider,
    spec: FlatHumpSpec,
) -> std::result::Result<FlatHumpTrace, FlatHumpFailure> {
    let mut extractor = TailExtractor::new(basis, spec.p, DEFAULT_RANK_TOL).map_err(|error| {
        FlatHumpFailure { error, partial: FlatHumpTrace::default() }
    })?;
    build_flat_hump_with(&mut extractor, spec, usize::MAX)
}

/// Sums unit vectors `u_i in X_{n_{i-1}}`, each cut so that its tail has norm
/// at most `delta / 2^i`, until the cut `m` satisfies `m > 2n`, `m >= N` and
/// `1 / s <= eps`. Returns `u = (u_1 + ... + u_k) / s_k` split at `m`.
///
/// Stopping additionally requires the split to meet its own guarantees
/// (`|v| <= eps`, `1 - delta <= ||v||_p <= 1`, `||w||_p <= delta`); when
/// overlapping inner tails push a coordinate above `eps`, more inner vectors
/// are added.
///
/// `budget` bounds `m` plus the number of stored entries of the running sum.
pub fn build_flat_hump_with(
    extractor: &mut TailExtractor<'_>,
    spec: FlatHumpSpec,
    budget: usize,
) -> std::result::Result<FlatHumpTrace, FlatHumpFailure> {
    let FlatHumpSpec { n, n_floor, eps, delta, p } = spec;
    let mut trace = FlatHumpTrace::default();
    let fail = |error: Error, trace: FlatHumpTrace| FlatHumpFailure { error, partial: trace };
    if !(eps > 0.0) || !(delta > 0.0 && delta < 1.0) {
        return Err(fail(
            Error::InvalidArgument(format!("flat hump needs eps > 0 and 0 < delta < 1 (eps {eps}, delta {delta})")),
            trace,
        ));
    }

    let pw = p.get();
    let mut sum: BTreeMap<u64, f64> = BTreeMap::new();
    let mut power_sum = 0.0f64;
    let mut cut = n;
    for i in 1usize.. {
        let inner = match extractor.extract(cut) {
            Ok(t) => t.vector,
            Err(e) => return Err(fail(e, trace)),
        };
        let eta = (delta * 0.5f64.powi(i.min(1100) as i32)).max(f64::MIN_POSITIVE);
        let next_cut = choose_cut(&inner, p, eta).map_err(|e| fail(e, trace.clone()))?;

        let used = (next_cut as u128) + (sum.len() + inner.nnz()) as u128;
        if used > budget as u128 {
            return Err(fail(
                Error::BudgetExhausted { budget, used: used.min(usize::MAX as u128) as usize },
                trace,
            ));
        }

        for &(j, x) in inner.entries() {
            let slot = sum.entry(j).or_insert(0.0);
            power_sum -= slot.abs().powf(pw);
            *slot += x;
            power_sum += slot.abs().powf(pw);
            if *slot == 0.0 {
                sum.remove(&j);
            }
        }
        let s = power_sum.max(0.0).powf(p.recip());
        trace.inner_vectors.push(inner);
        trace.inner_cuts.push(next_cut);
        trace.s_values.push(s);
        cut = next_cut;

        if cut > n.saturating_mul(2) && cut >= n_floor && 1.0 / s <= eps {
            let y = SparseSeq::from_sorted_unchecked(sum.iter().map(|(&j, &x)| (j, x)).collect());
            let s_exact = lp_norm(&y, p);
            let u = y.scale(1.0 / s_exact);
            let v = head(&u, cut);
            let w = tail(&u, cut);
            let v_norm = lp_norm(&v, p);
            if v.max_abs() <= eps && v_norm >= 1.0 - delta && v_norm <= 1.0 + NORM_SLACK && lp_norm(&w, p) <= delta {
                if let Some(last) = trace.s_values.last_mut() {
                    *last = s_exact;
                }
                trace.u = u;
                trace.v = v;
                trace.w = w;
                trace.m = cut;
                return Ok(trace);
            }
        }
    }
    unreachable!("inner loop only exits by return")
}

/// Stage `k` of the construction.
#[derive(Clone, Debug, PartialEq)]
pub struct HumpStage {
    pub k: usize,
    pub n_prev: u64,
    pub n_k: u64,
    pub u: SparseSeq,
    pub v: SparseSeq,
    pub w: SparseSeq,
    /// `b_k = min{|v_k(j)| : j in supp v_k}`.
    pub b_k: f64,
}

impl HumpStage {
    /// Block length `n_k - n_{k-1}`.
    pub fn block_len(&self) -> u64 {
        self.n_k - self.n_prev
    }

    /// `(n_k - n_{k-1})^{-1/p}`.
    pub fn pad_value(&self, p: Exponent) -> f64 {
        (self.block_len() as f64).powf(-p.recip())
    }

    /// `eps_k = min{b_k, (n_k - n_{k-1})^{-1/p}}`, the coordinate cap of stage `k+1`.
    pub fn eps_next(&self, p: Exponent) -> f64 {
        self.b_k.min(self.pad_value(p))
    }

    /// `A_k`: positions of `I_k` where `v_k` vanishes, in increasing order.
    pub fn zero_positions(&self) -> impl Iterator<Item = u64> + '_ {
        let mut stored = self.v.support().peekable();
        (self.n_prev + 1..=self.n_k).filter(move |&j| {
            while stored.next_if(|&s| s < j).is_some() {}
            stored.next_if_eq(&j).is_none()
        })
    }

    pub fn zero_count(&self) -> u64 {
        self.block_len() - self.v.nnz() as u64
    }

    /// Smallest `N > n_k` with `(N - n_k)^{-1/p} <= b_k`.
    pub fn next_floor(&self, p: Exponent) -> u64 {
        let r = p.recip();
        let fits = |d: u64| (d as f64).powf(-r) <= self.b_k;
        let guess = self.b_k.powf(-p.get()).ceil();
        let mut d = if guess.is_finite() && guess < u64::MAX as f64 { (guess as u64).max(1) } else { u64::MAX / 4 };
        while d > 1 && fits(d - 1) {
            d -= 1;
        }
        while !fits(d) {
            d += 1;
        }
        self.n_k.saturating_add(d)
    }
}

/// Line of the witness export.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub k: usize,
    pub n_prev: u64,
    pub n_k: u64,
    pub b_k: f64,
    pub u_k: SparseSeq,
    pub v_k: SparseSeq,
    pub w_k: SparseSeq,
}

impl From<&HumpStage> for StageRecord {
    fn from(s: &HumpStage) -> Self {
        StageRecord {
            k: s.k,
            n_prev: s.n_prev,
            n_k: s.n_k,
            b_k: s.b_k,
            u_k: s.u.clone(),
            v_k: s.v.clone(),
            w_k: s.w.clone(),
        }
    }
}

impl StageRecord {
    pub fn into_stage(self) -> Result<HumpStage> {
        if self.n_k < self.n_prev {
            return Err(Error::InputFormat(format!(
                "stage {}: n_k = {} below n_prev = {}",
                self.k, self.n_k, self.n_prev
            )));
        }
        Ok(HumpStage {
            k: self.k,
            n_prev: self.n_prev,
            n_k: self.n_k,
            u: self.u_k,
            v: self.v_k,
            w: self.w_k,
            b_k: self.b_k,
        })
    }
}

/// Writes stages as JSON lines.
pub fn export_stages(stages: &[HumpStage]) -> String {
    let mut out = String::new();
    for s in stages {
        out.push_str(&serde_json::to_string(&StageRecord::from(s)).expect("stage record serialises"));
        out.push('\n');
    }
    out
}

/// Parses JSON-lines stage exports; blank lines are skipped.
pub fn import_stages(text: &str) -> Result<Vec<HumpStage>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(no, line)| {
            serde_json::from_str::<StageRecord>(line)
                .map_err(|e| Error::InputFormat(format!("stage line {}: {e}", no + 1)))
                .and_then(StageRecord::into_stage)
        })
        .collect()
}

/// Why a construction stopped before the requested stage count.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Truncation {
    pub completed: usize,
    pub requested: usize,
    pub reason: String,
}

#[derive(Clone, Debug)]
pub struct WitnessRun {
    pub stages: Vec<HumpStage>,
    pub truncated: Option<Truncation>,
    /// Stage conditions evaluated right after construction.
    pub inline_checklist: Checklist,
}

/// Runs the stage induction for `params.stages` stages.
///
/// Budget or index-space exhaustion ends the run early with the completed
/// prefix; any violated stage condition is an error.
pub fn build_witness_stages(basis: &BasisProvider, params: &RunParams) -> Result<WitnessRun> {
    let params = params.validated()?;
    let p = params.p;
    let mut extractor = TailExtractor::new(basis, p, params.rank_tol)?;
    let mut stages: Vec<HumpStage> = Vec::with_capacity(params.stages);
    let mut stored = 0usize;
    let mut truncated = None;

    for k in 1..=params.stages {
        let spec = match stages.last() {
            None => FlatHumpSpec { n: 0, n_floor: 1, eps: f64::INFINITY, delta: params.stage_delta(1), p },
            Some(prev) => FlatHumpSpec {
                n: prev.n_k,
                n_floor: prev.next_floor(p),
                eps: prev.eps_next(p),
                delta: params.stage_delta(k),
                p,
            },
        };
        let budget = params.support_budget.saturating_sub(stored);
        let trace = match build_flat_hump_with(&mut extractor, spec, budget) {
            Ok(t) => t,
            Err(FlatHumpFailure { error: e @ (Error::BudgetExhausted { .. } | Error::IndexOverflow { .. }), .. }) => {
                truncated = Some(Truncation {
                    completed: stages.len(),
                    requested: params.stages,
                    reason: e.to_string(),
                });
                break;
            }
            Err(f) => return Err(f.error),
        };

        let b_k = trace.v.min_abs().ok_or_else(|| Error::DegenerateStage {
            k,
            reason: "head v_k vanishes, b_k undefined".into(),
        })?;
        stored += trace.u.nnz();
        let stage = HumpStage {
            k,
            n_prev: spec.n,
            n_k: trace.m,
            u: trace.u,
            v: trace.v,
            w: trace.w,
            b_k,
        };
        stages.push(stage);

        let window = &stages[stages.len().saturating_sub(2)..];
        let check = verifier::check_stage_conditions(window, &params);
        if let Some(bad) = check.families.iter().find(|f| !f.passed) {
            return Err(Error::StageCondition {
                k,
                family: bad.id,
                detail: format!("worst margin {:?} at stage {:?}", bad.worst_margin, bad.worst_stage),
            });
        }
    }

    let inline_checklist = verifier::check_stage_conditions(&stages, &params);
    Ok(WitnessRun { stages, truncated, inline_checklist })
}

/// `ṽ_k`: `|v_k|` on its support and `(n_k - n_{k-1})^{-1/p}` on the rest of `I_k`.
pub fn padded_majorant(stage: &HumpStage, p: Exponent) -> SparseSeq {
    let pad = stage.pad_value(p);
    let mut stored = stage.v.entries().iter().peekable();
    let entries = (stage.n_prev + 1..=stage.n_k)
        .map(|j| match stored.next_if(|&&(i, _)| i == j) {
            Some(&(_, x)) => (j, x.abs()),
            None => (j, pad),
        })
        .collect();
    SparseSeq::from_sorted_unchecked(entries)
}

fn check_range(stages: &[HumpStage], n: usize) -> Result<()> {
    if n == 0 || n > stages.len() {
        return Err(Error::InvalidArgument(format!(
            "N = {n} outside 1..={}",
            stages.len()
        )));
    }
    Ok(())
}

/// `z_N = u_1 + ... + u_N`.
pub fn witness_sum(stages: &[HumpStage], n: usize) -> Result<SparseSeq> {
    check_range(stages, n)?;
    Ok(SparseSeq::sum(stages[..n].iter().map(|s| &s.u)))
}

/// `z̃_N = ṽ_1 + ... + ṽ_N`, supported exactly on `I_1 ∪ ... ∪ I_N`.
pub fn padded_sum(stages: &[HumpStage], n: usize, p: Exponent) -> Result<SparseSeq> {
    check_range(stages, n)?;
    let mut entries = Vec::new();
    for s in &stages[..n] {
        entries.extend(padded_majorant(s, p).into_entries());
    }
    SparseSeq::new(entries)
}
