//! Infinite-dimensional subspaces of `l_p` given by a deterministic basis
//! stream, and extraction of unit vectors from the tail subspaces
//! `X_n = {a in X : a(1) = ... = a(n) = 0}`.
//!
//! The first `M` basis vectors restricted to rows `1..=n` form an `n x M`
//! matrix whose null space parametrises `X_n ∩ span{g_1..g_M}`. That matrix
//! is block diagonal once rows and columns are grouped into connected
//! components (a column touches the rows in its restricted support), so each
//! component is factorised on its own. [`TailExtractor`] keeps the component
//! structure between calls with non-decreasing `n`, which is what the hump
//! construction issues.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::seqcore::{lp_norm, tail, Exponent, SparseSeq};

/// Default relative threshold on singular values for rank decisions.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Coordinates below this fraction of the largest modulus are set to zero.
pub const ZERO_TRUNCATION: f64 = 1e-14;

/// Scan limit beyond `n` when looking for a tail vector.
pub const SCAN_SLACK: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Preset {
    Canonical,
    Lacunary,
    RandomBlock,
    FromFile,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Canonical => "canonical",
            Preset::Lacunary => "lacunary",
            Preset::RandomBlock => "random_block",
            Preset::FromFile => "from_file",
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "canonical" => Ok(Preset::Canonical),
            "lacunary" => Ok(Preset::Lacunary),
            "random_block" | "random-block" => Ok(Preset::RandomBlock),
            "from_file" | "from-file" => Ok(Preset::FromFile),
            other => Err(Error::InvalidArgument(format!("unknown preset '{other}'"))),
        }
    }
}

#[derive(Clone, Debug)]
enum Generator {
    Canonical,
    Lacunary,
    RandomBlock { seed: u64, p: Exponent },
    Stored(Vec<SparseSeq>),
}

/// A deterministic stream `i -> g_i` (1-based) of finitely supported basis
/// vectors. Immutable once built.
#[derive(Clone, Debug)]
pub struct BasisProvider {
    preset: Preset,
    seed: u64,
    generator: Generator,
    /// Whether the generator guarantees linear independence of every prefix.
    declared_independent: bool,
}

#[derive(Deserialize)]
struct BasisFile {
    #[allow(dead_code)]
    p: f64,
    vectors: Vec<SparseSeq>,
}

/// Builds one of the named basis presets.
///
/// `random_block` vectors are normalised in `l_p` for the supplied exponent;
/// the other presets ignore it.
pub fn make_preset(
    preset: Preset,
    seed: u64,
    source: Option<&Path>,
    p: Exponent,
) -> Result<BasisProvider> {
    let generator = match preset {
        Preset::Canonical => Generator::Canonical,
        Preset::Lacunary => Generator::Lacunary,
        Preset::RandomBlock => Generator::RandomBlock { seed, p },
        Preset::FromFile => {
            let path = source.ok_or_else(|| {
                Error::InvalidArgument("from_file preset needs a basis file".into())
            })?;
            let text = fs::read_to_string(path).map_err(|e| {
                Error::InputFormat(format!("cannot read {}: {e}", path.display()))
            })?;
            return BasisProvider::from_json(&text);
        }
    };
    Ok(BasisProvider {
        preset,
        seed,
        generator,
        declared_independent: true,
    })
}

/// Width of random block `i`; cycles through 1, 2, 3 with a seed-dependent phase.
fn block_width(seed: u64, i: u64) -> u64 {
    1 + (i - 1 + seed) % 3
}

/// `B(i)`: last coordinate of random block `i` (`B(0) = 0`).
fn block_end(seed: u64, i: u64) -> Option<u64> {
    let cycles = i / 3;
    let mut end = cycles.checked_mul(6)?;
    for l in (3 * cycles + 1)..=i {
        end = end.checked_add(block_width(seed, l))?;
    }
    Some(end)
}

impl BasisProvider {
    pub fn from_vectors(vectors: Vec<SparseSeq>) -> Result<Self> {
        if vectors.is_empty() {
            return Err(Error::InputFormat("basis needs at least one vector".into()));
        }
        if let Some(pos) = vectors.iter().position(SparseSeq::is_zero) {
            return Err(Error::InputFormat(format!(
                "basis vector {} has empty support",
                pos + 1
            )));
        }
        Ok(BasisProvider {
            preset: Preset::FromFile,
            seed: 0,
            generator: Generator::Stored(vectors),
            declared_independent: false,
        })
    }

    /// Parses the basis-file JSON format.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: BasisFile = serde_json::from_str(text)
            .map_err(|e| Error::InputFormat(format!("basis file: {e}")))?;
        BasisProvider::from_vectors(file.vectors)
    }

    pub fn preset(&self) -> Preset {
        self.preset
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn declared_independent(&self) -> bool {
        self.declared_independent
    }

    /// Number of vectors, `None` for infinite streams.
    pub fn len(&self) -> Option<usize> {
        match &self.generator {
            Generator::Stored(v) => Some(v.len()),
            _ => None,
        }
    }

    /// Basis vector `g_i`, 1-based. `Ok(None)` past the end of a finite basis.
    pub fn vector(&self, i: usize) -> Result<Option<SparseSeq>> {
        if i == 0 {
            return Err(Error::InvalidArgument("basis indices start at 1".into()));
        }
        let g = match &self.generator {
            Generator::Canonical => SparseSeq::unit(i as u64, 1.0)?,
            Generator::Lacunary => {
                let index = u32::try_from(i)
                    .ok()
                    .and_then(|s| 1u64.checked_shl(s))
                    .ok_or(Error::IndexOverflow { index: i })?;
                SparseSeq::unit(index, 1.0)?
            }
            Generator::RandomBlock { seed, p } => {
                let i64_ = i as u64;
                let start = block_end(*seed, i64_ - 1).ok_or(Error::IndexOverflow { index: i })?;
                let width = block_width(*seed, i64_);
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                rng.set_stream(i64_);
                let entries = (1..=width)
                    .map(|o| {
                        let modulus: f64 = rng.gen_range(0.9..=1.0);
                        let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                        (start + o, sign * modulus)
                    })
                    .collect();
                let g = SparseSeq::new(entries)?;
                let norm = lp_norm(&g, *p);
                g.scale(1.0 / norm)
            }
            Generator::Stored(v) => match v.get(i - 1) {
                Some(g) => g.clone(),
                None => return Ok(None),
            },
        };
        Ok(Some(g))
    }
}

/// A unit vector of `X_n` together with its coordinates in the basis.
#[derive(Clone, Debug, PartialEq)]
pub struct TailVector {
    pub vector: SparseSeq,
    /// `(basis index, coefficient)` pairs with `vector ≈ sum coef * g_index`.
    pub coefficients: Vec<(usize, f64)>,
    /// Length `M` of the basis prefix that was needed.
    pub prefix_len: usize,
}

impl TailVector {
    /// `sum coef * g_index`, before zero truncation of the first `n` rows.
    pub fn reconstruct(&self, basis: &BasisProvider) -> Result<SparseSeq> {
        let mut acc = SparseSeq::zero();
        for &(i, c) in &self.coefficients {
            let g = basis
                .vector(i)?
                .ok_or(Error::InvalidArgument(format!("basis index {i} out of range")))?;
            acc = acc.add(&g.scale(c));
        }
        Ok(acc)
    }
}

#[derive(Default, Clone, Debug)]
struct Component {
    cols: Vec<usize>,
    rows: Vec<u64>,
}

/// Incremental tail-vector search over one basis.
///
/// Invariant: columns `1..=committed` have full column rank when restricted
/// to rows `1..=n`. Enlarging `n` only adds rows, which never lowers column
/// rank, so that prefix stays certified across calls.
pub struct TailExtractor<'a> {
    basis: &'a BasisProvider,
    p: Exponent,
    tol: f64,
    n: u64,
    committed: usize,
    columns: Vec<SparseSeq>,
    parent: Vec<usize>,
    row_node: HashMap<u64, usize>,
    components: HashMap<usize, Component>,
    col_node: Vec<usize>,
    pending: BinaryHeap<Reverse<(u64, usize)>>,
}

impl<'a> TailExtractor<'a> {
    pub fn new(basis: &'a BasisProvider, p: Exponent, tol: f64) -> Result<Self> {
        if !(tol > 0.0) {
            return Err(Error::InvalidArgument(format!("rank tolerance must be positive, got {tol}")));
        }
        Ok(TailExtractor {
            basis,
            p,
            tol,
            n: 0,
            committed: 0,
            columns: Vec::new(),
            parent: Vec::new(),
            row_node: HashMap::new(),
            components: HashMap::new(),
            col_node: Vec::new(),
            pending: BinaryHeap::new(),
        })
    }

    fn reset(&mut self) {
        self.n = 0;
        self.committed = 0;
        self.columns.clear();
        self.parent.clear();
        self.row_node.clear();
        self.components.clear();
        self.col_node.clear();
        self.pending.clear();
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> usize {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return ra;
        }
        let sa = self.components[&ra].cols.len() + self.components[&ra].rows.len();
        let sb = self.components[&rb].cols.len() + self.components[&rb].rows.len();
        let (big, small) = if sa >= sb { (ra, rb) } else { (rb, ra) };
        let moved = self.components.remove(&small).unwrap_or_default();
        let target = self.components.get_mut(&big).expect("component root");
        target.cols.extend(moved.cols);
        target.rows.extend(moved.rows);
        self.parent[small] = big;
        big
    }

    fn new_node(&mut self, comp: Component) -> usize {
        let id = self.parent.len();
        self.parent.push(id);
        self.components.insert(id, comp);
        id
    }

    /// Attaches row `r` of committed column `col` to the component structure.
    fn attach(&mut self, r: u64, col: usize) {
        let rnode = match self.row_node.get(&r) {
            Some(&node) => node,
            None => {
                let node = self.new_node(Component { cols: vec![], rows: vec![r] });
                self.row_node.insert(r, node);
                node
            }
        };
        let cnode = self.col_node[col - 1];
        self.union(rnode, cnode);
    }

    fn advance_rows(&mut self, n: u64) {
        self.n = n;
        while let Some(&Reverse((r, col))) = self.pending.peek() {
            if r > n {
                break;
            }
            self.pending.pop();
            self.attach(r, col);
        }
    }

    fn commit(&mut self, g: SparseSeq) {
        let col = self.committed + 1;
        let node = self.new_node(Component { cols: vec![col], rows: vec![] });
        self.col_node.push(node);
        self.committed = col;
        for &(r, _) in g.entries() {
            if r <= self.n {
                self.attach(r, col);
            } else {
                self.pending.push(Reverse((r, col)));
            }
        }
        self.columns.push(g);
    }

    /// Returns a unit vector (in `l_p`) of `X_n` drawn from the shortest basis
    /// prefix that meets `X_n` nontrivially.
    pub fn extract(&mut self, n: u64) -> Result<TailVector> {
        if n < self.n {
            self.reset();
        }
        self.advance_rows(n);
        let limit = usize::try_from(n)
            .unwrap_or(usize::MAX)
            .saturating_add(SCAN_SLACK);
        loop {
            let j = self.committed + 1;
            if j > limit {
                return Err(Error::NoTailVector { n, scanned: self.committed });
            }
            let g = match self.basis.vector(j)? {
                Some(g) => g,
                None => return Err(Error::NoTailVector { n, scanned: self.committed }),
            };

            // Tentative component of column j: itself plus every committed
            // component sharing one of its rows <= n.
            let mut cols = vec![j];
            let mut rows: Vec<u64> = Vec::new();
            let mut roots: Vec<usize> = Vec::new();
            for &(r, _) in g.entries() {
                if r > n {
                    break;
                }
                match self.row_node.get(&r).copied() {
                    Some(node) => {
                        let root = self.find(node);
                        if !roots.contains(&root) {
                            roots.push(root);
                        }
                    }
                    None => rows.push(r),
                }
            }
            for root in &roots {
                let comp = &self.components[root];
                cols.extend_from_slice(&comp.cols);
                rows.extend_from_slice(&comp.rows);
            }
            cols.sort_unstable();
            rows.sort_unstable();

            if let Some(null) = self.null_direction(&cols, &rows, &g)? {
                return self.finish(n, j, &cols, &null, &g);
            }
            self.commit(g);
        }
    }

    /// Smallest right singular vector of the component matrix if the
    /// component is rank deficient.
    fn null_direction(&self, cols: &[usize], rows: &[u64], g: &SparseSeq) -> Result<Option<Vec<f64>>> {
        let ncols = cols.len();
        if rows.is_empty() {
            // every column in the component vanishes on rows <= n
            let mut v = vec![0.0; ncols];
            v[0] = 1.0;
            return Ok(Some(v));
        }
        let nrows = rows.len().max(ncols);
        let mut a = DMatrix::<f64>::zeros(nrows, ncols);
        for (c, &col) in cols.iter().enumerate() {
            let vec = if col == self.committed + 1 { g } else { &self.columns[col - 1] };
            for &(r, x) in vec.entries() {
                if r > self.n {
                    break;
                }
                let ri = rows.binary_search(&r).expect("row in component");
                a[(ri, c)] = x;
            }
        }
        let svd = a.svd(false, true);
        let v_t = svd.v_t.expect("requested right singular vectors");
        let sv = &svd.singular_values;
        let (mut imin, mut smax) = (0usize, 0.0f64);
        for k in 0..sv.len() {
            if sv[k] < sv[imin] {
                imin = k;
            }
            smax = smax.max(sv[k]);
        }
        if sv[imin] < self.tol * smax {
            Ok(Some(v_t.row(imin).iter().copied().collect()))
        } else {
            Ok(None)
        }
    }

    fn finish(&self, n: u64, j: usize, cols: &[usize], null: &[f64], g: &SparseSeq) -> Result<TailVector> {
        let cmax = null.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        let sign = null
            .iter()
            .find(|c| c.abs() > ZERO_TRUNCATION * cmax)
            .map(|c| c.signum())
            .unwrap_or(1.0);

        let mut coefficients: Vec<(usize, f64)> = Vec::new();
        let mut combo = SparseSeq::zero();
        for (&col, &c) in cols.iter().zip(null) {
            if c == 0.0 {
                continue;
            }
            let c = sign * c;
            let vec = if col == j { g } else { &self.columns[col - 1] };
            combo = combo.add(&vec.scale(c));
            coefficients.push((col, c));
        }

        let magnitude: f64 = cols
            .iter()
            .zip(null)
            .map(|(&col, &c)| {
                let vec = if col == j { g } else { &self.columns[col - 1] };
                c.abs() * vec.max_abs()
            })
            .sum();
        let umax = combo.max_abs();
        if umax <= self.tol * magnitude {
            return Err(Error::DependentBasis { prefix: j });
        }
        let head_max = combo
            .entries()
            .iter()
            .take_while(|&&(r, _)| r <= n)
            .fold(0.0f64, |m, &(_, x)| m.max(x.abs()));
        if head_max > self.tol * umax {
            return Err(Error::IllConditioned { prefix: j, residual: head_max / umax });
        }
        let cut = ZERO_TRUNCATION * umax;
        let kept: Vec<(u64, f64)> = combo
            .entries()
            .iter()
            .copied()
            .filter(|&(r, x)| r > n && x.abs() >= cut)
            .collect();
        if kept.is_empty() {
            return Err(Error::DependentBasis { prefix: j });
        }
        let u = SparseSeq::from_sorted_unchecked(kept);
        let scale = 1.0 / lp_norm(&u, self.p);
        Ok(TailVector {
            vector: u.scale(scale),
            coefficients: coefficients.into_iter().map(|(i, c)| (i, c * scale)).collect(),
            prefix_len: j,
        })
    }
}

/// One-shot tail-vector extraction: a unit vector of `X_n`.
pub fn tail_unit_vector(basis: &BasisProvider, n: u64, p: Exponent, tol: f64) -> Result<TailVector> {
    TailExtractor::new(basis, p, tol)?.extract(n)
}

/// Smallest `m` with `||R_m u||_p <= eta`.
pub fn choose_cut(u: &SparseSeq, p: Exponent, eta: f64) -> Result<u64> {
    if !(eta > 0.0) {
        return Err(Error::InvalidArgument(format!("cut threshold must be positive, got {eta}")));
    }
    let entries = u.entries();
    if entries.is_empty() {
        return Ok(0);
    }
    let scale = u.max_abs();
    let pw = p.get();
    // suffix[k] = sum over entries[k..] of (|x| / scale)^p
    let mut suffix = vec![0.0; entries.len() + 1];
    for k in (0..entries.len()).rev() {
        suffix[k] = suffix[k + 1] + (entries[k].1.abs() / scale).powf(pw);
    }
    let tail_norm = |k: usize| scale * suffix[k].powf(p.recip());
    // candidate cut m = 0 keeps everything; m = entries[k].0 keeps entries[k+1..]
    let mut k = if tail_norm(0) <= eta {
        return Ok(0);
    } else {
        (0..entries.len())
            .find(|&k| tail_norm(k + 1) <= eta)
            .expect("empty tail always qualifies")
    };
    // confirm against the canonical norm evaluation
    while lp_norm(&tail(u, entries[k].0), p) > eta {
        k += 1;
    }
    Ok(entries[k].0)
}
