//! Numerical certification of a constructed witness.
//!
//! Every check is recomputed from the stage data alone (`n_{k-1}`, `n_k`,
//! `u_k`, `v_k`, `w_k`, `b_k`), so a stage export read back from disk yields
//! the same booleans as the in-line check made during construction.
//!
//! Each family carries a [`Scaling`] class describing how it reacts when every
//! `u_k` is multiplied by `alpha > 0`:
//! scale-invariant families never change, homogeneous families scale both
//! sides alike, and inhomogeneous families compare against fixed constants
//! and can flip.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::humpbuilder::{padded_majorant, HumpStage, RunParams, Truncation};
use crate::seqcore::{
    decreasing_rearrangement, embedding_constant, head, lp_norm, lp_norm_of_profile, tail,
    weak_lp_norm_equiv, weak_lp_norm_equiv_of_profile, weak_lp_quasinorm,
    weak_lp_quasinorm_of_profile, Exponent, SparseSeq,
};

/// Relative tolerance for inequality checks, taken against the larger side.
pub const REL_TOL: f64 = 1e-9;

/// Absolute slack for the per-`N` norm bounds.
pub const ABS_TOL: f64 = 1e-9;

/// Interior sample points per block in the split audit.
pub const AUDIT_INTERIOR_SAMPLES: u64 = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    ScaleInvariant,
    Homogeneous,
    Inhomogeneous,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FamilyResult {
    pub id: &'static str,
    pub description: &'static str,
    pub class: Scaling,
    pub evaluated: usize,
    pub violations: usize,
    pub passed: bool,
    /// Smallest slack `(rhs - lhs)` seen, relative for relative checks.
    pub worst_margin: Option<f64>,
    /// Stage (or `N`) where the worst margin occurred.
    pub worst_stage: Option<usize>,
}

impl FamilyResult {
    fn new(id: &'static str, description: &'static str, class: Scaling) -> Self {
        FamilyResult {
            id,
            description,
            class,
            evaluated: 0,
            violations: 0,
            passed: true,
            worst_margin: None,
            worst_stage: None,
        }
    }

    fn record(&mut self, at: usize, ok: bool, margin: f64) {
        self.evaluated += 1;
        if !ok {
            self.violations += 1;
            self.passed = false;
        }
        if self.worst_margin.map_or(true, |w| margin < w) {
            self.worst_margin = Some(margin);
            self.worst_stage = Some(at);
        }
    }

    /// `lhs <= rhs` up to [`REL_TOL`] of the larger side.
    fn le_rel(&mut self, at: usize, lhs: f64, rhs: f64) {
        let scale = lhs.abs().max(rhs.abs());
        let margin = if scale > 0.0 { (rhs - lhs) / scale } else { 0.0 };
        self.record(at, margin >= -REL_TOL, margin);
    }

    /// `lhs <= rhs + ABS_TOL`.
    fn le_abs(&mut self, at: usize, lhs: f64, rhs: f64) {
        let margin = rhs - lhs;
        self.record(at, margin >= -ABS_TOL, margin);
    }

    fn exact(&mut self, at: usize, ok: bool) {
        self.record(at, ok, if ok { 0.0 } else { -1.0 });
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Checklist {
    pub families: Vec<FamilyResult>,
}

impl Checklist {
    pub fn all_passed(&self) -> bool {
        self.families.iter().all(|f| f.passed)
    }

    pub fn get(&self, id: &str) -> Option<&FamilyResult> {
        self.families.iter().find(|f| f.id == id)
    }

    /// `(id, passed)` pairs in report order.
    pub fn verdicts(&self) -> Vec<(&'static str, bool)> {
        self.families.iter().map(|f| (f.id, f.passed)).collect()
    }
}

/// Evaluates the stage conditions on a contiguous run of stages.
///
/// Cross-stage families (3.4), (3.5) and the chain/majorant checks look at
/// consecutive pairs inside `stages`; a single stage leaves them vacuous.
pub fn check_stage_conditions(stages: &[HumpStage], params: &RunParams) -> Checklist {
    let p = params.p;
    let mut unit = FamilyResult::new("3.1", "||u_k||_p = 1", Scaling::Inhomogeneous);
    let mut growth = FamilyResult::new("3.2", "2 n_{k-1} < n_k", Scaling::ScaleInvariant);
    let mut block = FamilyResult::new("3.3", "supp v_k within I_k", Scaling::ScaleInvariant);
    let mut flat = FamilyResult::new(
        "3.4",
        "|v_{k+1}(j)| <= min{b_k, (n_k - n_{k-1})^{-1/p}}",
        Scaling::Inhomogeneous,
    );
    let mut floor = FamilyResult::new("3.5", "(n_{k+1} - n_k)^{-1/p} <= b_k", Scaling::Inhomogeneous);
    let mut head_norm = FamilyResult::new("3.6", "1 - delta <= ||v_k||_p <= 1", Scaling::Inhomogeneous);
    let mut tail_norm = FamilyResult::new("3.7", "||w_k||_p <= delta / 2^k", Scaling::Inhomogeneous);
    let mut split = FamilyResult::new("split", "v_k = P_{n_k} u_k and w_k = R_{n_k} u_k", Scaling::Homogeneous);
    let mut member = FamilyResult::new("tail_subspace", "u_k vanishes on 1..=n_{k-1}", Scaling::ScaleInvariant);
    let mut bmin = FamilyResult::new("b_k", "b_k = min |v_k| over supp v_k", Scaling::Homogeneous);
    let mut chain = FamilyResult::new("chain", "stages consecutive with n_0 = 0", Scaling::ScaleInvariant);
    let mut monotone = FamilyResult::new(
        "majorant_monotone",
        "min over I_k of padded v_k >= max over I_{k+1} of padded v_{k+1}",
        Scaling::Inhomogeneous,
    );

    let recomputed_b: Vec<Option<f64>> = stages.iter().map(|s| s.v.min_abs()).collect();

    for (idx, s) in stages.iter().enumerate() {
        let k = s.k;
        let u_norm = lp_norm(&s.u, p);
        unit.le_rel(k, u_norm, 1.0);
        unit.le_rel(k, 1.0, u_norm);

        growth.exact(k, s.n_prev.checked_mul(2).map_or(false, |t| t < s.n_k));
        block.exact(
            k,
            s.v.min_index().map_or(true, |lo| lo > s.n_prev) && s.v.max_index().map_or(true, |hi| hi <= s.n_k),
        );

        let v_norm = lp_norm(&s.v, p);
        head_norm.le_rel(k, 1.0 - params.delta, v_norm);
        head_norm.le_rel(k, v_norm, 1.0);
        tail_norm.le_rel(k, lp_norm(&s.w, p), params.stage_delta(k));

        split.exact(k, s.v == head(&s.u, s.n_k) && s.w == tail(&s.u, s.n_k));
        member.exact(k, s.u.min_index().map_or(true, |lo| lo > s.n_prev));
        bmin.exact(k, recomputed_b[idx] == Some(s.b_k));
        if idx == 0 {
            chain.exact(k, s.k != 1 || s.n_prev == 0);
        }

        if idx + 1 < stages.len() {
            let next = &stages[idx + 1];
            chain.exact(next.k, next.k == k + 1 && next.n_prev == s.n_k);
            let b_k = recomputed_b[idx].unwrap_or(0.0);
            let cap = b_k.min(s.pad_value(p));
            flat.le_rel(next.k, next.v.max_abs(), cap);
            floor.le_rel(next.k, next.pad_value(p), b_k);
            let low = padded_majorant(s, p).min_abs().unwrap_or(f64::INFINITY);
            let high = padded_majorant(next, p).max_abs();
            monotone.le_rel(next.k, high, low);
        }
    }

    Checklist {
        families: vec![
            unit, growth, block, flat, floor, head_norm, tail_norm, split, member, bmin, chain, monotone,
        ],
    }
}

/// One row of the per-`N` table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NormRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub lp_norm: f64,
    pub weak_quasinorm: f64,
    pub equiv_norm: f64,
    pub lower_bound: f64,
    pub upper_bound_b: f64,
    pub ratio: f64,
    /// `||z̃_N||_{p,inf}`.
    pub majorant_weak: f64,
    /// `||sum v_k||_p^p` and `sum ||v_k||_p^p`.
    pub disjoint_lhs: f64,
    pub disjoint_rhs: f64,
}

/// Constants entering the weak-norm bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundConstants {
    pub d_p: f64,
    /// `2^{1+1/p} max(1, D_p)`, the ceiling for `||z̃_N||_{p,inf}`.
    pub majorant_ceiling: f64,
    /// `B = 2^{1/p} (majorant_ceiling + delta)`.
    pub b: f64,
    pub case_a: f64,
    pub case_b: f64,
}

impl BoundConstants {
    pub fn new(p: Exponent, delta: f64) -> Self {
        let r = p.recip();
        let d_p = embedding_constant(p);
        let majorant_ceiling = 2f64.powf(1.0 + r) * d_p.max(1.0);
        BoundConstants {
            d_p,
            majorant_ceiling,
            b: 2f64.powf(r) * (majorant_ceiling + delta),
            case_a: 2f64.powf(2.0 * r),
            case_b: 2f64.powf(r + 1.0) * d_p,
        }
    }

    /// `B / ((1 - delta) N^{1/p} - delta)` when the denominator is positive.
    pub fn ratio_bound(&self, p: Exponent, delta: f64, n: usize) -> Option<f64> {
        let denom = growth_lower_bound(p, delta, n);
        (denom > 0.0).then(|| self.b / denom)
    }
}

/// `(1 - delta) N^{1/p} - delta`.
pub fn growth_lower_bound(p: Exponent, delta: f64, n: usize) -> f64 {
    (1.0 - delta) * (n as f64).powf(p.recip()) - delta
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct VerifyOptions {
    /// Audit every `j` instead of block endpoints plus interior samples.
    pub full_audit: bool,
}

/// Indices `j` of block `I_k` visited by the split audit.
fn audit_points(s: &HumpStage, full: bool) -> Vec<u64> {
    let (lo, hi) = (s.n_prev + 1, s.n_k);
    if full || s.block_len() <= AUDIT_INTERIOR_SAMPLES + 4 {
        return (lo..=hi).collect();
    }
    let mut pts = vec![lo, hi];
    let switch = 2 * s.n_prev;
    for j in [switch, switch + 1] {
        if j >= lo && j <= hi {
            pts.push(j);
        }
    }
    let len = s.block_len();
    for t in 1..=AUDIT_INTERIOR_SAMPLES {
        pts.push(lo + t * len / (AUDIT_INTERIOR_SAMPLES + 1));
    }
    pts.sort_unstable();
    pts.dedup();
    pts
}

/// Per-`N` growth and weak-norm checks plus the split audit.
pub struct NormChecks {
    pub rows: Vec<NormRow>,
    pub families: Vec<FamilyResult>,
}

/// Lower growth chain `||z_N||_p >= (1 - delta) N^{1/p} - delta` and the weak
/// bounds `||z̃_N||_{p,inf} <= 2^{1+1/p} max(1, D_p)`,
/// `||z_N||_{p,inf} <= 2^{1/p} (||z̃_N||_{p,inf} + delta) <= B`, with the
/// case split audited at sampled `j`.
pub fn check_norms(stages: &[HumpStage], params: &RunParams, opts: VerifyOptions) -> NormChecks {
    let p = params.p;
    let delta = params.delta;
    let consts = BoundConstants::new(p, delta);
    let r = p.recip();

    let mut growth = FamilyResult::new("growth", "||z_N||_p >= (1 - delta) N^{1/p} - delta", Scaling::Inhomogeneous);
    let mut disjoint = FamilyResult::new(
        "disjoint_sum",
        "||sum v_k||_p^p = sum ||v_k||_p^p",
        Scaling::Homogeneous,
    );
    let mut majorant = FamilyResult::new(
        "majorant_weak",
        "||padded z_N||_{p,inf} <= 2^{1+1/p} max(1, D_p)",
        Scaling::Inhomogeneous,
    );
    let mut assembly = FamilyResult::new(
        "weak_assembly",
        "||z_N||_{p,inf} <= 2^{1/p} (||padded z_N||_{p,inf} + delta)",
        Scaling::Inhomogeneous,
    );
    let mut ceiling = FamilyResult::new("weak_bound_B", "||z_N||_{p,inf} <= B", Scaling::Inhomogeneous);
    let mut ratio = FamilyResult::new(
        "ratio_decay",
        "||z_N||_{p,inf} / ||z_N||_p <= B / ((1 - delta) N^{1/p} - delta)",
        Scaling::ScaleInvariant,
    );
    let mut dominate = FamilyResult::new(
        "domination",
        "|sum_{k<=N} v_k| <= padded z_N pointwise",
        Scaling::Inhomogeneous,
    );
    let mut case_a = FamilyResult::new(
        "audit_case_a",
        "j <= 2 n_{k-1}: j^{1/p} (padded z_N)*(j) <= 4^{1/p}",
        Scaling::Inhomogeneous,
    );
    let mut case_b = FamilyResult::new(
        "audit_case_b",
        "j > 2 n_{k-1}: j^{1/p} (padded z_N)*(j) <= 2^{1/p+1} D_p",
        Scaling::Inhomogeneous,
    );

    let mut rows = Vec::with_capacity(stages.len());
    let mut z = SparseSeq::zero();
    let mut vsum = SparseSeq::zero();
    let mut padded: Vec<(u64, f64)> = Vec::new();
    let mut vpow_sum = 0.0;
    for (idx, s) in stages.iter().enumerate() {
        let n = idx + 1;
        z = z.add(&s.u);
        vsum = vsum.add(&s.v);
        padded.extend(padded_majorant(s, p).into_entries());
        vpow_sum += lp_norm(&s.v, p).powf(p.get());

        let profile = decreasing_rearrangement(&z);
        let lp = lp_norm_of_profile(&profile, p);
        let weak = weak_lp_quasinorm_of_profile(&profile, p);
        let equiv = weak_lp_norm_equiv_of_profile(&profile, p);
        let tilde = SparseSeq::new(padded.clone()).unwrap_or_default();
        let tilde_profile = decreasing_rearrangement(&tilde);
        let tilde_weak = weak_lp_quasinorm_of_profile(&tilde_profile, p);
        let disjoint_lhs = lp_norm(&vsum, p).powf(p.get());

        let lower = growth_lower_bound(p, delta, n);
        growth.le_abs(n, lower, lp);
        disjoint.le_rel(n, disjoint_lhs, vpow_sum);
        disjoint.le_rel(n, vpow_sum, disjoint_lhs);
        majorant.le_abs(n, tilde_weak, consts.majorant_ceiling);
        assembly.le_abs(n, weak, 2f64.powf(r) * (tilde_weak + delta));
        ceiling.le_abs(n, weak, consts.b);
        let row_ratio = if lp > 0.0 { weak / lp } else { 0.0 };
        if let Some(bound) = consts.ratio_bound(p, delta, n) {
            ratio.le_rel(n, row_ratio, bound);
        }
        if n == stages.len() {
            for &(j, x) in vsum.entries() {
                let cap = tilde.get(j);
                let margin = cap - x.abs();
                dominate.record(n, margin >= 0.0, margin);
            }
        }

        for blk in &stages[..n] {
            for j in audit_points(blk, opts.full_audit) {
                let value = (j as f64).powf(r) * tilde_profile.at(j as usize);
                if j <= 2 * blk.n_prev {
                    case_a.le_abs(n, value, consts.case_a);
                } else {
                    case_b.le_abs(n, value, consts.case_b);
                }
            }
        }

        rows.push(NormRow {
            n,
            lp_norm: lp,
            weak_quasinorm: weak,
            equiv_norm: equiv,
            lower_bound: lower,
            upper_bound_b: consts.b,
            ratio: row_ratio,
            majorant_weak: tilde_weak,
            disjoint_lhs,
            disjoint_rhs: vpow_sum,
        });
    }

    NormChecks {
        rows,
        families: vec![growth, disjoint, majorant, assembly, ceiling, ratio, dominate, case_a, case_b],
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ParamsEcho {
    pub p: f64,
    pub delta: f64,
    pub stages_requested: usize,
    pub support_budget: usize,
    pub rank_tol: f64,
}

/// Full verification report.
#[derive(Clone, Debug, Serialize)]
pub struct WitnessReport {
    pub params: ParamsEcho,
    pub constants: BoundConstants,
    pub stages_completed: usize,
    pub truncated: Option<Truncation>,
    pub full_audit: bool,
    pub rows: Vec<NormRow>,
    pub checklist: Checklist,
    pub all_passed: bool,
}

impl WitnessReport {
    /// Per-`N` rows as CSV with a fixed column order.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("N,lp_norm,weak_quasinorm,equiv_norm,lower_bound,B,ratio\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.n, r.lp_norm, r.weak_quasinorm, r.equiv_norm, r.lower_bound, r.upper_bound_b, r.ratio
            ));
        }
        out
    }

    /// Least-squares slope of `ln ||z_N||_p` against `ln N`.
    pub fn trend_exponent(&self) -> Option<f64> {
        trend_exponent(&self.rows)
    }

    pub fn max_weak(&self) -> f64 {
        self.rows.iter().map(|r| r.weak_quasinorm).fold(0.0, f64::max)
    }
}

pub fn trend_exponent(rows: &[NormRow]) -> Option<f64> {
    if rows.len() < 2 {
        return None;
    }
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| ((r.n as f64).ln(), r.lp_norm.ln()))
        .collect();
    let m = pts.len() as f64;
    let mx = pts.iter().map(|t| t.0).sum::<f64>() / m;
    let my = pts.iter().map(|t| t.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|t| (t.0 - mx) * (t.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|t| (t.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Runs every stage and norm check on `stages`.
pub fn verify(
    stages: &[HumpStage],
    params: &RunParams,
    truncated: Option<Truncation>,
    opts: VerifyOptions,
) -> WitnessReport {
    let mut checklist = check_stage_conditions(stages, params);
    let norms = check_norms(stages, params, opts);
    checklist.families.extend(norms.families);
    let all_passed = checklist.all_passed();
    WitnessReport {
        params: ParamsEcho {
            p: params.p.get(),
            delta: params.delta,
            stages_requested: params.stages,
            support_budget: params.support_budget,
            rank_tol: params.rank_tol,
        },
        constants: BoundConstants::new(params.p, params.delta),
        stages_completed: stages.len(),
        truncated,
        full_audit: opts.full_audit,
        rows: norms.rows,
        checklist,
        all_passed,
    }
}

/// Outcome of one property in the axiom battery.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AxiomResult {
    pub name: String,
    pub checked: usize,
    pub passed: bool,
    /// Worst observed value of the tested quantity (meaning depends on the item).
    pub worst: f64,
    /// A failing input, as JSON sequences.
    pub witness: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AxiomReport {
    pub p: f64,
    pub samples: usize,
    pub seed: u64,
    pub items: Vec<AxiomResult>,
}

impl AxiomReport {
    pub fn all_passed(&self) -> bool {
        self.items.iter().all(|i| i.passed)
    }

    pub fn get(&self, name: &str) -> Option<&AxiomResult> {
        self.items.iter().find(|i| i.name == name)
    }
}

/// Random sequence with at most 50 stored entries, indices in `1..=200` and
/// values in `[-10, 10]`.
pub fn random_seq(rng: &mut ChaCha8Rng) -> SparseSeq {
    let len = rng.gen_range(1..=50);
    let pairs = (0..len)
        .map(|_| (rng.gen_range(1..=200u64), rng.gen_range(-10.0..=10.0)))
        .collect();
    SparseSeq::from_unsorted(pairs).unwrap_or_default()
}

struct Item {
    name: String,
    checked: usize,
    passed: bool,
    worst: f64,
    witness: Option<String>,
    /// true: larger `worst` is worse.
    maximise: bool,
}

impl Item {
    fn new(name: &str, maximise: bool) -> Self {
        Item {
            name: name.to_string(),
            checked: 0,
            passed: true,
            worst: if maximise { f64::NEG_INFINITY } else { f64::INFINITY },
            witness: None,
            maximise,
        }
    }

    fn observe(&mut self, value: f64, ok: bool, witness: impl FnOnce() -> String) {
        self.checked += 1;
        if (self.maximise && value > self.worst) || (!self.maximise && value < self.worst) {
            self.worst = value;
        }
        if !ok && self.passed {
            self.passed = false;
            self.witness = Some(witness());
        }
    }

    fn finish(self) -> AxiomResult {
        AxiomResult {
            name: self.name,
            checked: self.checked,
            passed: self.passed,
            worst: if self.checked == 0 { 0.0 } else { self.worst },
            witness: self.witness,
        }
    }
}

fn json(u: &SparseSeq) -> String {
    serde_json::to_string(u).expect("sequence serialises")
}

/// Lattice-norm axioms for `||.||_p` and the maximal weak norm, plus the
/// quasi-triangle, sandwich and embedding inequalities for the weak quasinorm,
/// on `sample_count` seeded random vectors.
pub fn axiom_suite(p: Exponent, sample_count: usize, seed: u64) -> AxiomReport {
    type NormFn = fn(&SparseSeq, Exponent) -> f64;
    let norms: [(&str, NormFn); 2] = [("lp", lp_norm), ("equiv", weak_lp_norm_equiv)];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut items: Vec<Item> = Vec::new();
    for (label, _) in &norms {
        for (ax, maximise) in [
            ("triangle", true),
            ("homogeneity", true),
            ("definiteness", true),
            ("modulus", true),
            ("lattice", true),
            ("monotone_convergence", true),
            ("finite", true),
        ] {
            items.push(Item::new(&format!("{label}/{ax}"), maximise));
        }
    }
    let mut quasi = Item::new("weak/quasi_triangle", true);
    let mut sandwich_lo = Item::new("equiv/sandwich_lower", false);
    let mut sandwich_hi = Item::new("equiv/sandwich_upper", true);
    let mut embed = Item::new("weak/embedding", true);
    let q_const = 2f64.powf(p.recip());
    let conj = p.conjugate();

    // axiom (iii) on the zero sequence
    for (ni, (_, f)) in norms.iter().enumerate() {
        let v = f(&SparseSeq::zero(), p);
        items[ni * 7 + 2].observe(v, v == 0.0, || json(&SparseSeq::zero()));
    }

    for _ in 0..sample_count {
        let u = random_seq(&mut rng);
        let v = random_seq(&mut rng);
        let alpha: f64 = rng.gen_range(-5.0..=5.0);
        let sum = u.add(&v);

        // |u| <= |w| pointwise: enlarge moduli and add entries
        let mut grow: Vec<(u64, f64)> = u
            .entries()
            .iter()
            .map(|&(i, x)| (i, x.signum() * rng.gen_range(0.0..=3.0)))
            .collect();
        let extra = rng.gen_range(0..5);
        for _ in 0..extra {
            grow.push((rng.gen_range(201..=260u64), rng.gen_range(0.1..=1.0)));
        }
        let bigger = SparseSeq::from_unsorted(
            u.entries().iter().copied().chain(grow).collect(),
        )
        .unwrap_or_default();

        for (ni, (_, f)) in norms.iter().enumerate() {
            let base = ni * 7;
            let (nu, nv, ns) = (f(&u, p), f(&v, p), f(&sum, p));
            let excess = (ns - nu - nv) / (nu + nv).max(f64::MIN_POSITIVE);
            items[base].observe(excess, excess <= REL_TOL, || format!("{} + {}", json(&u), json(&v)));

            let scaled = f(&u.scale(alpha), p);
            let expect = alpha.abs() * nu;
            let rel = if expect > 0.0 { (scaled - expect).abs() / expect } else { scaled };
            items[base + 1].observe(rel, rel <= 1e-12, || format!("{alpha} * {}", json(&u)));

            let definite = (nu == 0.0) == u.is_zero();
            items[base + 2].observe(if definite { 0.0 } else { 1.0 }, definite, || json(&u));

            let nabs = f(&u.abs(), p);
            items[base + 3].observe((nabs - nu).abs(), nabs == nu, || json(&u));

            let nb = f(&bigger, p);
            let lat = (nu - nb) / nb.max(f64::MIN_POSITIVE);
            items[base + 4].observe(lat, lat <= REL_TOL, || format!("{} <= {}", json(&u), json(&bigger)));

            // truncations P_m |u| increase to |u|
            let au = u.abs();
            let mut prev = 0.0f64;
            let mut worst_drop = f64::NEG_INFINITY;
            for &(m, _) in au.entries() {
                let cur = f(&head(&au, m), p);
                worst_drop = worst_drop.max((prev - cur) / cur.max(f64::MIN_POSITIVE));
                prev = cur;
            }
            let limit_gap = if nu > 0.0 { (prev - nu).abs() / nu } else { prev };
            let mc = worst_drop.max(limit_gap).max(0.0);
            items[base + 5].observe(mc, mc <= REL_TOL, || json(&u));

            items[base + 6].observe(if nu.is_finite() { 0.0 } else { 1.0 }, nu.is_finite(), || json(&u));
        }

        let (wu, wv, ws) = (weak_lp_quasinorm(&u, p), weak_lp_quasinorm(&v, p), weak_lp_quasinorm(&sum, p));
        if wu + wv > 0.0 {
            let qr = ws / (wu + wv);
            quasi.observe(qr, qr <= q_const + REL_TOL, || format!("{} + {}", json(&u), json(&v)));
        }
        if wu > 0.0 {
            let ratio = weak_lp_norm_equiv(&u, p) / wu;
            sandwich_lo.observe(ratio, ratio >= 1.0 - REL_TOL, || json(&u));
            sandwich_hi.observe(ratio, ratio <= conj + REL_TOL, || json(&u));
            let e = wu / lp_norm(&u, p);
            embed.observe(e, e <= 1.0 + 1e-12, || json(&u));
        }
    }

    let mut out: Vec<AxiomResult> = items.into_iter().map(Item::finish).collect();
    out.extend([quasi, sandwich_lo, sandwich_hi, embed].into_iter().map(Item::finish));
    AxiomReport { p: p.get(), samples: sample_count, seed, items: out }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::humpbuilder::{build_witness_stages, export_stages, import_stages};
    use crate::subspace::{make_preset, Preset};

    fn p(x: f64) -> Exponent {
        Exponent::new(x).unwrap()
    }

    fn canonical_run(k: usize) -> (Vec<HumpStage>, RunParams) {
        let params = RunParams::new(p(2.0), 0.1, k).unwrap();
        let basis = make_preset(Preset::Canonical, 0, None, params.p).unwrap();
        (build_witness_stages(&basis, &params).unwrap().stages, params)
    }

    #[test]
    fn bound_constants() {
        let c = BoundConstants::new(p(2.0), 0.1);
        assert_eq!(c.d_p, 1.0);
        assert!((c.b - 2f64.sqrt() * (2f64.powf(1.5) + 0.1)).abs() < 1e-15);
        assert!((c.b - 4.141421356).abs() < 1e-9);
        assert!((c.case_a - 2.0).abs() < 1e-15);
    }

    #[test]
    fn canonical_k8_passes() {
        let (stages, params) = canonical_run(8);
        let report = verify(&stages, &params, None, VerifyOptions::default());
        assert!(report.all_passed, "{:#?}", report.checklist);
        assert_eq!(report.rows.len(), 8);
        assert_eq!(report.rows[0].weak_quasinorm, 1.0);
        assert!(report.rows[0].weak_quasinorm <= report.constants.b);
    }

    #[test]
    fn single_stage_is_vacuous_across_stages() {
        let (stages, params) = canonical_run(1);
        let c = check_stage_conditions(&stages, &params);
        assert!(c.all_passed());
        for id in ["3.4", "3.5", "majorant_monotone"] {
            assert_eq!(c.get(id).unwrap().evaluated, 0, "{id}");
        }
        for id in ["3.1", "3.6", "3.7"] {
            assert!(c.get(id).unwrap().evaluated > 0);
        }
    }

    #[test]
    fn corrupted_head_is_flagged() {
        let (mut stages, params) = canonical_run(8);
        stages[2].v = stages[2].v.scale(2.0);
        let c = check_stage_conditions(&stages, &params);
        assert!(!c.get("3.6").unwrap().passed);
        assert!(!c.get("3.4").unwrap().passed);
        assert_eq!(c.get("3.4").unwrap().worst_stage, Some(3));
        assert!(c.get("3.2").unwrap().passed);
    }

    #[test]
    fn inflated_tail_is_flagged() {
        let (mut stages, params) = canonical_run(6);
        let extra = SparseSeq::unit(stages[3].n_k + 1, 0.5).unwrap();
        stages[3].w = stages[3].w.add(&extra);
        stages[3].u = stages[3].u.add(&extra);
        let report = verify(&stages, &params, None, VerifyOptions::default());
        assert!(!report.all_passed);
        assert!(!report.checklist.get("3.7").unwrap().passed);
    }

    #[test]
    fn reverification_from_export_is_identical() {
        let params = RunParams::new(p(1.5), 0.1, 6).unwrap();
        let basis = make_preset(Preset::RandomBlock, 0, None, params.p).unwrap();
        let run = build_witness_stages(&basis, &params).unwrap();
        let reloaded = import_stages(&export_stages(&run.stages)).unwrap();
        let again = check_stage_conditions(&reloaded, &params);
        assert_eq!(again.verdicts(), run.inline_checklist.verdicts());
        assert_eq!(again, run.inline_checklist);
        let report = verify(&reloaded, &params, None, VerifyOptions::default());
        assert!(report.all_passed, "{:#?}", report.checklist);
    }

    #[test]
    fn scale_covariance() {
        let (stages, params) = canonical_run(6);
        let alpha = 2.0;
        let scaled: Vec<HumpStage> = stages
            .iter()
            .map(|s| HumpStage {
                u: s.u.scale(alpha),
                v: s.v.scale(alpha),
                w: s.w.scale(alpha),
                b_k: s.b_k * alpha,
                ..s.clone()
            })
            .collect();
        let base = verify(&stages, &params, None, VerifyOptions::default());
        let moved = verify(&scaled, &params, None, VerifyOptions::default());
        for (a, b) in base.rows.iter().zip(&moved.rows) {
            for (x, y) in [
                (a.lp_norm, b.lp_norm),
                (a.weak_quasinorm, b.weak_quasinorm),
                (a.equiv_norm, b.equiv_norm),
            ] {
                assert!((y - alpha * x).abs() <= 1e-12 * y);
            }
            assert!((a.ratio - b.ratio).abs() <= 1e-12);
        }
        for (fa, fb) in base.checklist.families.iter().zip(&moved.checklist.families) {
            assert_eq!(fa.class, fb.class);
            if fa.class != Scaling::Inhomogeneous {
                assert_eq!(fa.passed, fb.passed, "{}", fa.id);
            }
        }
        // ||u_k|| = 2 and ||v_k|| = 2 break normalisation; w_k = 0 stays below its allowance
        assert!(!moved.checklist.get("3.1").unwrap().passed);
        assert!(!moved.checklist.get("3.6").unwrap().passed);
        assert!(moved.checklist.get("3.7").unwrap().passed);
    }

    #[test]
    fn audit_points_cover_endpoints_and_switch() {
        let s = HumpStage {
            k: 3,
            n_prev: 100,
            n_k: 1000,
            u: SparseSeq::zero(),
            v: SparseSeq::zero(),
            w: SparseSeq::zero(),
            b_k: 1.0,
        };
        let pts = audit_points(&s, false);
        for j in [101, 200, 201, 1000] {
            assert!(pts.contains(&j));
        }
        assert!(pts.len() <= 20);
        assert_eq!(audit_points(&s, true).len(), 900);
    }

    #[test]
    fn axiom_suite_passes() {
        for q in [1.5, 2.0, 3.0] {
            let report = axiom_suite(p(q), 300, 9);
            assert!(report.all_passed(), "{:#?}", report.items);
            let quasi = report.get("weak/quasi_triangle").unwrap();
            assert!(quasi.worst <= 2f64.powf(1.0 / q) + 1e-9);
            assert_eq!(report.get("lp/definiteness").unwrap().checked, 301);
        }
    }

    #[test]
    fn csv_layout() {
        let (stages, params) = canonical_run(3);
        let report = verify(&stages, &params, None, VerifyOptions::default());
        let csv = report.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("N,lp_norm,weak_quasinorm,equiv_norm,lower_bound,B,ratio"));
        assert_eq!(lines.count(), 3);
    }
}
