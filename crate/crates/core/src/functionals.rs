//! Size, energy and modified energy of coefficient sequences on tri-tile
//! collections, with the dual-energy witness and weak-L¹ comparisons.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::exact::{Dilation, Exact, Segment};
use crate::tiles::{tiles_disjoint, Tree, Universe};

/// Coefficients `a_{P_j}` for one slot `j`, indexed like the universe.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientSequence {
    pub slot: usize,
    pub values: Vec<Complex64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRecord {
    pub tile_id: usize,
    pub re: f64,
    pub im: f64,
}

impl CoefficientSequence {
    pub fn new(slot: usize, values: Vec<Complex64>) -> Self {
        assert!(slot < 3);
        assert!(values.iter().all(|v| v.re.is_finite() && v.im.is_finite()));
        CoefficientSequence { slot, values }
    }

    pub fn records(&self) -> Vec<CoefficientRecord> {
        self.values
            .iter()
            .enumerate()
            .map(|(tile_id, v)| CoefficientRecord { tile_id, re: v.re, im: v.im })
            .collect()
    }

    pub fn from_records(slot: usize, len: usize, records: &[CoefficientRecord]) -> Result<Self, String> {
        let mut values = vec![Complex64::new(0.0, 0.0); len];
        for r in records {
            if r.tile_id >= len {
                return Err(format!("tile_id {} outside universe of {len}", r.tile_id));
            }
            if !(r.re.is_finite() && r.im.is_finite()) {
                return Err(format!("non-finite coefficient for tile {}", r.tile_id));
            }
            values[r.tile_id] = Complex64::new(r.re, r.im);
        }
        Ok(CoefficientSequence { slot, values })
    }
}

fn mass(a: &[Complex64], members: impl IntoIterator<Item = usize>) -> f64 {
    members.into_iter().map(|p| a[p].norm_sqr()).sum()
}

/// Largest `Σ_{T'} |a|² / |I_{T'}|` over sub-trees `T' ⊆ members` whose top is
/// a member or `top`, of any type.
pub fn max_subtree_density(u: &Universe, a: &[Complex64], members: &[usize], top: usize) -> f64 {
    let mut best = 0.0f64;
    let tops = members.iter().copied().chain(std::iter::once(top));
    for t in tops {
        for k in 0..3 {
            let sub: Vec<usize> = members.iter().copied().filter(|&p| u.le(k, p, t)).collect();
            if sub.is_empty() {
                continue;
            }
            best = best.max(mass(a, sub) / u.len_of(t));
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq)]
pub struct SizeValue {
    pub value: f64,
    pub tree: Option<Tree>,
}

/// `size_j` over the active tiles (tops and members both active).
pub fn size_on(u: &Universe, a: &[Complex64], j: usize, active: &[bool]) -> SizeValue {
    let mut best = SizeValue { value: 0.0, tree: None };
    let mut best_sq = 0.0;
    for t in (0..u.len()).filter(|&t| active[t]) {
        for i in (0..3).filter(|&i| i != j) {
            let members: Vec<usize> = (0..u.len()).filter(|&p| active[p] && u.le(i, p, t)).collect();
            let v = mass(a, members.iter().copied()) / u.len_of(t);
            if v > best_sq {
                best_sq = v;
                best.tree = Some(Tree::new(t, i, members));
            }
        }
    }
    best.value = best_sq.sqrt();
    best
}

pub fn size(u: &Universe, a: &[Complex64], j: usize) -> SizeValue {
    size_on(u, a, j, &vec![true; u.len()])
}

/// Energy, exact when `exact` is set, otherwise a `[lower, upper]` bracket.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyValue {
    pub lower: f64,
    pub upper: f64,
    pub exact: bool,
    /// Tiles realizing `lower`.
    pub selection: Vec<usize>,
}

pub const DEFAULT_ENERGY_BUDGET: usize = 20;

/// `energy_j`: best ℓ² mass over tiles with pairwise disjoint `P_j`.
pub fn energy(u: &Universe, a: &[Complex64], j: usize, budget: usize) -> EnergyValue {
    let n = u.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| a[y].norm_sqr().total_cmp(&a[x].norm_sqr()).then(x.cmp(&y)));
    let conflict = |p: usize, q: usize| !tiles_disjoint(&u.tile(p, j), &u.tile(q, j));
    // Greedy lower bound.
    let mut greedy: Vec<usize> = Vec::new();
    for &p in &order {
        if a[p].norm_sqr() > 0.0 && greedy.iter().all(|&q| !conflict(p, q)) {
            greedy.push(p);
        }
    }
    let greedy_mass = mass(a, greedy.iter().copied());
    let total = mass(a, 0..n);
    if n > budget || n > 64 {
        return EnergyValue {
            lower: greedy_mass.sqrt(),
            upper: total.sqrt(),
            exact: false,
            selection: greedy,
        };
    }
    let conf: Vec<u64> = order
        .iter()
        .map(|&p| {
            order
                .iter()
                .enumerate()
                .filter(|&(_, &q)| conflict(p, q))
                .fold(0u64, |m, (k, _)| m | (1 << k))
        })
        .collect();
    let w: Vec<f64> = order.iter().map(|&p| a[p].norm_sqr()).collect();
    let mut suffix = vec![0.0; n + 1];
    for k in (0..n).rev() {
        suffix[k] = suffix[k + 1] + w[k];
    }
    struct Search<'a> {
        conf: &'a [u64],
        w: &'a [f64],
        suffix: &'a [f64],
        best: f64,
        best_mask: u64,
    }
    impl Search<'_> {
        fn go(&mut self, k: usize, mask: u64, cur: f64) {
            if cur > self.best {
                self.best = cur;
                self.best_mask = mask;
            }
            if k == self.w.len() || cur + self.suffix[k] <= self.best {
                return;
            }
            if self.conf[k] & mask == 0 {
                self.go(k + 1, mask | (1 << k), cur + self.w[k]);
            }
            self.go(k + 1, mask, cur);
        }
    }
    let mut s = Search {
        conf: &conf,
        w: &w,
        suffix: &suffix,
        best: greedy_mass,
        best_mask: greedy
            .iter()
            .map(|p| order.iter().position(|q| q == p).expect("present"))
            .fold(0, |m, k| m | (1 << k)),
    };
    s.go(0, 0, 0.0);
    let mut selection: Vec<usize> = (0..n).filter(|&k| s.best_mask & (1 << k) != 0).map(|k| order[k]).collect();
    selection.sort_unstable();
    let v = mass(a, selection.iter().copied()).sqrt();
    EnergyValue {
        lower: v,
        upper: v,
        exact: true,
        selection,
    }
}

/// A tree admissible for the modified energy at some level `n`.
#[derive(Clone, Debug)]
struct Candidate {
    members: u64,
    top: usize,
    kind: usize,
    top_len: f64,
    n_lo: i32,
    n_hi: i32,
    /// Tiles whose doubled `j`-frequency meets some member's.
    overlap: u64,
    /// Tiles sharing a `j`-tile with some member.
    same: u64,
    /// Tiles whose spatial interval meets `I_top`.
    hits: u64,
}

fn pow4(n: i32) -> f64 {
    (2.0f64).powi(2 * n)
}

/// Largest `n` with `4^n len ≤ w` (exact comparison on powers of two).
fn floor_log4(w: f64, len: f64) -> i32 {
    let mut n = ((w / len).log2() / 2.0).floor() as i32;
    while pow4(n + 1) * len <= w {
        n += 1;
    }
    while pow4(n) * len > w {
        n -= 1;
    }
    n
}

/// Smallest `n` with `r ≤ 4^{n+1}`.
fn ceil_log4_minus1(r: f64) -> i32 {
    let mut n = (r.log2() / 2.0).ceil() as i32 - 1;
    while pow4(n) >= r {
        n -= 1;
    }
    while pow4(n + 1) < r {
        n += 1;
    }
    n
}

struct PairTables {
    overlap: Vec<u64>,
    same: Vec<u64>,
    hits: Vec<u64>,
}

fn pair_tables(u: &Universe, j: usize) -> PairTables {
    let n = u.len();
    let two = Dilation::int(2);
    let mut t = PairTables {
        overlap: vec![0; n],
        same: vec![0; n],
        hits: vec![0; n],
    };
    for p in 0..n {
        for q in 0..n {
            let (tp, tq) = (u.tile(p, j), u.tile(q, j));
            if tp == tq {
                t.same[p] |= 1 << q;
            }
            if tp.frequency().dilated_intersects(two, &tq.frequency(), two) {
                t.overlap[p] |= 1 << q;
            }
            if u.spatial(q).intersects(&u.spatial(p)) {
                t.hits[p] |= 1 << q;
            }
        }
    }
    t
}

fn bits(mask: u64) -> impl Iterator<Item = usize> {
    (0..64).filter(move |k| mask & (1u64 << k) != 0)
}

fn enumerate_candidates(u: &Universe, a: &[Complex64], j: usize, tables: &PairTables) -> Vec<Candidate> {
    let n = u.len();
    let mut out = Vec::new();
    for top in 0..n {
        // Union of the down-sets over admissible kinds; each subset of one
        // down-set is a tree with this top.
        let downs: Vec<(usize, u64)> = (0..3)
            .filter(|&i| i != j)
            .map(|i| (i, (0..n).filter(|&p| u.le(i, p, top)).fold(0u64, |m, p| m | (1 << p))))
            .collect();
        let mut seen = std::collections::BTreeSet::new();
        for &(kind, down) in &downs {
            // Enumerate nonempty submasks of `down`.
            let mut s = down;
            while s != 0 {
                if seen.insert(s) {
                    let members: Vec<usize> = bits(s).collect();
                    let w = mass(a, members.iter().copied());
                    if w > 0.0 {
                        let len = u.len_of(top);
                        let r = max_subtree_density(u, a, &members, top);
                        let n_hi = floor_log4(w, len);
                        let n_lo = ceil_log4_minus1(r);
                        if n_lo <= n_hi {
                            let overlap = members.iter().fold(0, |m, &p| m | tables.overlap[p]);
                            let same = members.iter().fold(0, |m, &p| m | tables.same[p]);
                            out.push(Candidate {
                                members: s,
                                top,
                                kind,
                                top_len: len,
                                n_lo,
                                n_hi,
                                overlap,
                                same,
                                hits: tables.hits[top],
                            });
                        }
                    }
                }
                s = (s - 1) & down;
            }
        }
    }
    out
}

fn compatible(x: &Candidate, y: &Candidate) -> bool {
    x.members & y.members == 0
        && x.same & y.members == 0
        && x.overlap & y.members & x.hits == 0
        && y.overlap & x.members & y.hits == 0
}

/// Max total `|I_T|` over pairwise compatible candidates.
fn best_packing(cands: &[&Candidate], n_tiles: usize) -> (f64, Vec<usize>) {
    let mut by_min: Vec<Vec<usize>> = vec![Vec::new(); n_tiles];
    let mut share = vec![0.0f64; n_tiles];
    for (k, c) in cands.iter().enumerate() {
        by_min[c.members.trailing_zeros() as usize].push(k);
        let per = c.top_len / c.members.count_ones() as f64;
        for p in bits(c.members) {
            share[p] = share[p].max(per);
        }
    }
    for list in &mut by_min {
        list.sort_by(|&x, &y| cands[y].top_len.total_cmp(&cands[x].top_len).then(x.cmp(&y)));
    }
    struct Search<'a> {
        cands: &'a [&'a Candidate],
        by_min: &'a [Vec<usize>],
        share: &'a [f64],
        best: f64,
        best_set: Vec<usize>,
        chosen: Vec<usize>,
    }
    impl Search<'_> {
        fn go(&mut self, e: usize, used: u64, cur: f64) {
            if cur > self.best {
                self.best = cur;
                self.best_set = self.chosen.clone();
            }
            if e == self.share.len() {
                return;
            }
            let bound: f64 = cur
                + (e..self.share.len())
                    .filter(|&p| used & (1 << p) == 0)
                    .map(|p| self.share[p])
                    .sum::<f64>();
            if bound <= self.best {
                return;
            }
            if used & (1 << e) != 0 {
                self.go(e + 1, used, cur);
                return;
            }
            for idx in 0..self.by_min[e].len() {
                let k = self.by_min[e][idx];
                let c = self.cands[k];
                if c.members & used != 0 {
                    continue;
                }
                if self.chosen.iter().all(|&o| compatible(self.cands[o], c)) {
                    self.chosen.push(k);
                    self.go(e + 1, used | c.members, cur + c.top_len);
                    self.chosen.pop();
                }
            }
            self.go(e + 1, used, cur);
        }
    }
    let mut s = Search {
        cands,
        by_min: &by_min,
        share: &share,
        best: 0.0,
        best_set: Vec::new(),
        chosen: Vec::new(),
    };
    s.go(0, 0, 0.0);
    (s.best, s.best_set)
}

/// Extremal collection for the modified energy.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyCollection {
    pub n: i32,
    pub trees: Vec<Tree>,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ModifiedEnergy {
    Exact(Option<EnergyCollection>),
    Bracket {
        lower: f64,
        upper: f64,
        witness: Option<EnergyCollection>,
    },
}

impl ModifiedEnergy {
    pub fn value(&self) -> Option<f64> {
        match self {
            ModifiedEnergy::Exact(c) => Some(c.as_ref().map_or(0.0, |c| c.value)),
            ModifiedEnergy::Bracket { .. } => None,
        }
    }

    pub fn lower(&self) -> f64 {
        match self {
            ModifiedEnergy::Exact(c) => c.as_ref().map_or(0.0, |c| c.value),
            ModifiedEnergy::Bracket { lower, .. } => *lower,
        }
    }

    pub fn upper(&self) -> f64 {
        match self {
            ModifiedEnergy::Exact(c) => c.as_ref().map_or(0.0, |c| c.value),
            ModifiedEnergy::Bracket { upper, .. } => *upper,
        }
    }

    pub fn collection(&self) -> Option<&EnergyCollection> {
        match self {
            ModifiedEnergy::Exact(c) => c.as_ref(),
            ModifiedEnergy::Bracket { witness, .. } => witness.as_ref(),
        }
    }
}

pub const DEFAULT_EXACT_LIMIT: usize = 8;

fn candidate_tree(c: &Candidate) -> Tree {
    Tree::new(c.top, c.kind, bits(c.members).collect())
}

/// Modified energy: exact for at most `exact_limit` tiles, bracket otherwise.
pub fn modified_energy(u: &Universe, a: &[Complex64], j: usize, exact_limit: usize) -> ModifiedEnergy {
    if u.len() > exact_limit.min(24) {
        return modified_energy_bracket(u, a, j);
    }
    let tables = pair_tables(u, j);
    let cands = enumerate_candidates(u, a, j, &tables);
    if cands.is_empty() {
        return ModifiedEnergy::Exact(None);
    }
    let n_min = cands.iter().map(|c| c.n_lo).min().expect("nonempty");
    let n_max = cands.iter().map(|c| c.n_hi).max().expect("nonempty");
    let mut best: Option<EnergyCollection> = None;
    for n in (n_min..=n_max).rev() {
        let level: Vec<&Candidate> = cands.iter().filter(|c| c.n_lo <= n && n <= c.n_hi).collect();
        if level.is_empty() {
            continue;
        }
        let (total, set) = best_packing(&level, u.len());
        let value = (n as f64).exp2() * total.sqrt();
        if best.as_ref().is_none_or(|b| value > b.value) {
            best = Some(EnergyCollection {
                n,
                trees: set.iter().map(|&k| candidate_tree(level[k])).collect(),
                value,
            });
        }
    }
    ModifiedEnergy::Exact(best)
}

/// Whether `trees` is admissible at level `n` (both tree conditions and
/// strong `j`-disjointness).
pub fn admissible_collection(u: &Universe, a: &[Complex64], j: usize, n: i32, trees: &[Tree]) -> bool {
    let per_tree = trees.iter().all(|t| {
        let w = mass(a, t.members.iter().copied());
        let len = u.len_of(t.top);
        !t.members.is_empty()
            && t.is_valid(u)
            && w >= pow4(n) * len
            && max_subtree_density(u, a, &t.members, t.top) <= pow4(n + 1)
    });
    per_tree && crate::tiles::check_strongly_disjoint(u, trees, j).is_ok()
}

/// Lower bound from greedy packings of maximal trees and singletons at each
/// level; upper bound from the energy.
fn modified_energy_bracket(u: &Universe, a: &[Complex64], j: usize) -> ModifiedEnergy {
    let n_tiles = u.len();
    let mut pool: Vec<Tree> = Vec::new();
    for t in 0..n_tiles {
        pool.push(Tree::new(t, (j + 1) % 3, vec![t]));
        for i in (0..3).filter(|&i| i != j) {
            let m = crate::tiles::maximal_tree(u, t, i);
            if !m.members.is_empty() {
                pool.push(m);
            }
        }
    }
    let mut scored: Vec<(i32, i32, f64, Tree)> = pool
        .into_iter()
        .filter_map(|t| {
            let w = mass(a, t.members.iter().copied());
            if w <= 0.0 {
                return None;
            }
            let len = u.len_of(t.top);
            let hi = floor_log4(w, len);
            let lo = ceil_log4_minus1(max_subtree_density(u, a, &t.members, t.top));
            (lo <= hi).then_some((lo, hi, len, t))
        })
        .collect();
    scored.sort_by(|x, y| y.2.total_cmp(&x.2).then(x.3.top.cmp(&y.3.top)));
    let mut witness: Option<EnergyCollection> = None;
    if let (Some(lo), Some(hi)) = (scored.iter().map(|s| s.0).min(), scored.iter().map(|s| s.1).max()) {
        for n in lo..=hi {
            let mut chosen: Vec<Tree> = Vec::new();
            for (l, h, _, t) in &scored {
                if *l <= n && n <= *h {
                    chosen.push(t.clone());
                    if crate::tiles::check_strongly_disjoint(u, &chosen, j).is_err() {
                        chosen.pop();
                    }
                }
            }
            let total: f64 = chosen.iter().map(|t| u.len_of(t.top)).sum();
            let value = (n as f64).exp2() * total.sqrt();
            if !chosen.is_empty() && witness.as_ref().is_none_or(|w| value > w.value) {
                witness = Some(EnergyCollection { n, trees: chosen, value });
            }
        }
    }
    let e = energy(u, a, j, DEFAULT_ENERGY_BUDGET);
    ModifiedEnergy::Bracket {
        lower: witness.as_ref().map_or(0.0, |w| w.value),
        upper: e.upper,
        witness,
    }
}

/// Dual coefficients `c = 2^{-n} (Σ|I_T|)^{-1/2} a` on an extremal collection.
#[derive(Clone, Debug, PartialEq)]
pub struct DualWitness {
    pub n: i32,
    pub trees: Vec<Tree>,
    /// Indexed like the universe; zero off the collection.
    pub c: Vec<Complex64>,
    /// `Σ_T Σ_{P∈T} a conj(c)`.
    pub pairing: Complex64,
    /// `max_{T' ⊆ T} Σ_{T'} |c|² · Σ|I_T| / |I_{T'}|` (at most 4).
    pub normalization: f64,
}

pub fn dual_energy_witness(u: &Universe, a: &[Complex64], collection: Option<&EnergyCollection>) -> DualWitness {
    let mut c = vec![Complex64::new(0.0, 0.0); u.len()];
    let Some(col) = collection else {
        return DualWitness {
            n: 0,
            trees: Vec::new(),
            c,
            pairing: Complex64::new(0.0, 0.0),
            normalization: 0.0,
        };
    };
    let total: f64 = col.trees.iter().map(|t| u.len_of(t.top)).sum();
    let scale = (-(col.n as f64)).exp2() / total.sqrt();
    for t in &col.trees {
        for &p in &t.members {
            c[p] = a[p] * scale;
        }
    }
    let pairing = col
        .trees
        .iter()
        .flat_map(|t| t.members.iter())
        .map(|&p| a[p] * c[p].conj())
        .sum();
    let normalization = col
        .trees
        .iter()
        .map(|t| max_subtree_density(u, &c, &t.members, t.top) * total)
        .fold(0.0, f64::max);
    DualWitness {
        n: col.n,
        trees: col.trees.clone(),
        c,
        pairing,
        normalization,
    }
}

/// Nonnegative function, constant on finitely many disjoint segments.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PiecewiseConstant {
    pub pieces: Vec<(Segment, f64)>,
}

impl PiecewiseConstant {
    /// Sum of `value · 1_segment` over possibly overlapping pieces.
    pub fn from_sum(terms: &[(Segment, f64)]) -> Self {
        let mut cuts: Vec<Exact> = terms.iter().flat_map(|(s, _)| [s.lo, s.hi]).collect();
        cuts.sort();
        cuts.dedup();
        let pieces = cuts
            .windows(2)
            .filter_map(|w| {
                let cell = Segment::new(w[0], w[1]);
                let v: f64 = terms.iter().filter(|(s, _)| s.contains(&cell)).map(|(_, v)| v).sum();
                (v > 0.0).then_some((cell, v))
            })
            .collect();
        PiecewiseConstant { pieces }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        PiecewiseConstant {
            pieces: self.pieces.iter().map(|(s, v)| (*s, f(*v))).collect(),
        }
    }
}

/// `sup_λ λ |{x ∈ I : f(x) > λ}|`, attained as `λ` increases to a level.
pub fn weak_l1(f: &PiecewiseConstant, interval: &Segment) -> f64 {
    let mut levels: Vec<f64> = f.pieces.iter().map(|(_, v)| *v).filter(|v| *v > 0.0).collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    levels
        .iter()
        .map(|&lvl| {
            let measure: f64 = f
                .pieces
                .iter()
                .filter(|(_, v)| *v >= lvl)
                .map(|(s, _)| s.intersection_len(interval).to_f64())
                .sum();
            lvl * measure
        })
        .fold(0.0, f64::max)
}

/// `(Σ_{P∈T} |a_P|² 1_{I_P} / |I_P|)^{1/2}`.
pub fn square_function(u: &Universe, a: &[Complex64], members: &[usize]) -> PiecewiseConstant {
    let terms: Vec<(Segment, f64)> = members
        .iter()
        .map(|&p| (u.spatial(p), a[p].norm_sqr() / u.len_of(p)))
        .collect();
    PiecewiseConstant::from_sum(&terms).map(f64::sqrt)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JnRatio {
    pub size: f64,
    pub weak: f64,
    pub ratio: f64,
}

/// Both sides of the John–Nirenberg comparison for `size_j`.
pub fn jn_compare(u: &Universe, a: &[Complex64], j: usize) -> JnRatio {
    let s = size(u, a, j).value;
    let mut weak = 0.0f64;
    for t in 0..u.len() {
        for i in (0..3).filter(|&i| i != j) {
            let tree = crate::tiles::maximal_tree(u, t, i);
            let f = square_function(u, a, &tree.members);
            weak = weak.max(weak_l1(&f, &u.spatial(t)) / u.len_of(t));
        }
    }
    let ratio = if s == 0.0 && weak == 0.0 { 1.0 } else { weak / s };
    JnRatio { size: s, weak, ratio }
}
