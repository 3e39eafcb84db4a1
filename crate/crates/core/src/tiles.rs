//! Tiles, tri-tiles, order relations, rank-1 collections and trees.
//!
//! Coordinates are 0-based throughout the Rust API (`0, 1, 2` for the
//! three frequency slots); serialized forms use the same convention.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exact::{Dilation, Exact, Segment};
use crate::grid::{check_sparse, mesh_interval, Shift, ShiftedCube, ShiftedInterval};

/// Dilation constants of the orders `<`, `≲` and the rank-1 scale clause.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderConstants {
    pub c_order: i128,
    pub c_lesssim: i128,
    pub c_scale: i128,
}

impl OrderConstants {
    pub const NOMINAL: OrderConstants = OrderConstants {
        c_order: 3,
        c_lesssim: 10_000_000,
        c_scale: 1_000_000_000,
    };
    pub const DESK: OrderConstants = OrderConstants {
        c_order: 3,
        c_lesssim: 8,
        c_scale: 16,
    };

    pub fn validate(&self) -> Result<(), String> {
        if self.c_order <= 0 || self.c_lesssim <= 0 || self.c_scale <= 0 {
            return Err(format!("order constants must be positive: {self:?}"));
        }
        Ok(())
    }

    /// Binary orders of magnitude needed between sparse scales.
    pub fn sparse_gap(&self) -> i32 {
        let mut g = 0;
        while (1i128 << g) <= self.c_scale {
            g += 1;
        }
        g
    }
}

impl Default for OrderConstants {
    fn default() -> Self {
        OrderConstants::NOMINAL
    }
}

/// An area-one tile `I × ω` with `|I| = 2^scale`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Tile {
    pub scale: i32,
    pub pos: i64,
    pub freq: i64,
    pub shift: Shift,
}

impl Tile {
    pub fn spatial(&self) -> Segment {
        ShiftedInterval::dyadic(self.scale, self.pos).segment()
    }

    pub fn frequency(&self) -> Segment {
        self.omega().segment()
    }

    pub fn omega(&self) -> ShiftedInterval {
        mesh_interval(-self.scale, self.freq, self.shift)
    }

    /// `ξ_P`, the center of `ω_P`.
    pub fn xi(&self) -> Exact {
        self.frequency().center()
    }

    pub fn len(&self) -> f64 {
        (self.scale as f64).exp2()
    }
}

/// `P' < P`.
pub fn order_lt(p1: &Tile, p: &Tile, c: &OrderConstants) -> bool {
    let (i1, i) = (p1.spatial(), p.spatial());
    i.contains(&i1)
        && i1 != i
        && p.frequency()
            .dilated_subset(Dilation::int(c.c_order), &p1.frequency(), Dilation::int(c.c_order))
}

/// `P' ≤ P`.
pub fn order_le(p1: &Tile, p: &Tile, c: &OrderConstants) -> bool {
    p1 == p || order_lt(p1, p, c)
}

/// `P' ≲ P`.
pub fn order_lesssim(p1: &Tile, p: &Tile, c: &OrderConstants) -> bool {
    p.spatial().contains(&p1.spatial())
        && p.frequency().dilated_subset(
            Dilation::int(c.c_lesssim),
            &p1.frequency(),
            Dilation::int(c.c_lesssim),
        )
}

/// `P' ≲' P`: `≲` but not `≤`.
pub fn order_lesssim_prime(p1: &Tile, p: &Tile, c: &OrderConstants) -> bool {
    order_lesssim(p1, p, c) && !order_le(p1, p, c)
}

/// Tiles as rectangles in the phase plane are disjoint.
pub fn tiles_disjoint(a: &Tile, b: &Tile) -> bool {
    !a.spatial().intersects(&b.spatial()) || !a.frequency().intersects(&b.frequency())
}

/// Three tiles sharing the spatial interval `[pos 2^scale, (pos+1) 2^scale)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TriTile {
    pub scale: i32,
    pub pos: i64,
    pub freq: [i64; 3],
    pub shift: [Shift; 3],
}

impl TriTile {
    pub fn tile(&self, i: usize) -> Tile {
        Tile {
            scale: self.scale,
            pos: self.pos,
            freq: self.freq[i],
            shift: self.shift[i],
        }
    }

    pub fn spatial(&self) -> Segment {
        ShiftedInterval::dyadic(self.scale, self.pos).segment()
    }

    pub fn len(&self) -> f64 {
        (self.scale as f64).exp2()
    }

    pub fn cube(&self) -> ShiftedCube {
        ShiftedCube::new(-self.scale, self.freq.to_vec(), self.shift.to_vec())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("rank-1 clause {clause} fails for the ordered pair ({first}, {second})")]
pub struct Rank1Violation {
    pub first: usize,
    pub second: usize,
    pub clause: u8,
}

/// Checks the three rank-1 clauses for the ordered pair `(P, P')`.
fn rank1_pair(p: &TriTile, q: &TriTile, c: &OrderConstants) -> Option<u8> {
    if p == q {
        return None;
    }
    if (0..3).any(|j| p.tile(j) == q.tile(j)) {
        return Some(1);
    }
    let small_enough = Exact::pow2(q.scale).units() < c.c_scale * Exact::pow2(p.scale).units();
    for j in 0..3 {
        if !order_le(&q.tile(j), &p.tile(j), c) {
            continue;
        }
        if !(0..3).all(|i| order_lesssim(&q.tile(i), &p.tile(i), c)) {
            return Some(2);
        }
        if small_enough && !(0..3).filter(|&i| i != j).all(|i| order_lesssim_prime(&q.tile(i), &p.tile(i), c)) {
            return Some(3);
        }
    }
    None
}

pub fn check_rank1(tiles: &[TriTile], c: &OrderConstants) -> Result<(), Rank1Violation> {
    for a in 0..tiles.len() {
        for b in 0..tiles.len() {
            if a != b {
                if let Some(clause) = rank1_pair(&tiles[a], &tiles[b], c) {
                    return Err(Rank1Violation { first: a, second: b, clause });
                }
            }
        }
    }
    Ok(())
}

/// Same shift everywhere and a sparse set of frequency cubes.
pub fn check_sparse_tritiles(tiles: &[TriTile], c_scale: i128) -> Result<(), (usize, usize)> {
    if let Some(first) = tiles.first() {
        if let Some(b) = tiles.iter().position(|t| t.shift != first.shift) {
            return Err((0, b));
        }
    }
    let cubes: Vec<ShiftedCube> = tiles.iter().map(TriTile::cube).collect();
    check_sparse(&cubes, c_scale)
}

/// A finite tri-tile collection with precomputed order tables.
#[derive(Clone, Debug)]
pub struct Universe {
    pub tiles: Vec<TriTile>,
    pub consts: OrderConstants,
    le: Vec<[bool; 3]>,
    lesssim: Vec<[bool; 3]>,
}

impl Universe {
    pub fn new(tiles: Vec<TriTile>, consts: OrderConstants) -> Self {
        let n = tiles.len();
        let mut le = vec![[false; 3]; n * n];
        let mut lesssim = vec![[false; 3]; n * n];
        for a in 0..n {
            for b in 0..n {
                for i in 0..3 {
                    let (ta, tb) = (tiles[a].tile(i), tiles[b].tile(i));
                    le[a * n + b][i] = order_le(&ta, &tb, &consts);
                    lesssim[a * n + b][i] = order_lesssim(&ta, &tb, &consts);
                }
            }
        }
        Universe { tiles, consts, le, lesssim }
    }

    pub fn len(&self) -> usize {
        self.tiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tiles.is_empty()
    }

    /// `P_{a,i} ≤ P_{b,i}`.
    pub fn le(&self, i: usize, a: usize, b: usize) -> bool {
        self.le[a * self.len() + b][i]
    }

    pub fn lesssim(&self, i: usize, a: usize, b: usize) -> bool {
        self.lesssim[a * self.len() + b][i]
    }

    pub fn lesssim_prime(&self, i: usize, a: usize, b: usize) -> bool {
        self.lesssim(i, a, b) && !self.le(i, a, b)
    }

    /// `P_{a,i} ≲⁺ P_{b,i}`.
    pub fn lesssim_plus(&self, i: usize, a: usize, b: usize) -> bool {
        self.lesssim_prime(i, a, b) && self.xi(i, a) > self.xi(i, b)
    }

    /// `P_{a,i} ≲⁻ P_{b,i}`.
    pub fn lesssim_minus(&self, i: usize, a: usize, b: usize) -> bool {
        self.lesssim_prime(i, a, b) && self.xi(i, a) < self.xi(i, b)
    }

    pub fn xi(&self, i: usize, a: usize) -> Exact {
        self.tiles[a].tile(i).xi()
    }

    pub fn spatial(&self, a: usize) -> Segment {
        self.tiles[a].spatial()
    }

    pub fn len_of(&self, a: usize) -> f64 {
        self.tiles[a].len()
    }

    pub fn tile(&self, a: usize, i: usize) -> Tile {
        self.tiles[a].tile(i)
    }

    /// Restriction to the listed indices (in the given order).
    pub fn restrict(&self, keep: &[usize]) -> Universe {
        Universe::new(keep.iter().map(|&a| self.tiles[a]).collect(), self.consts)
    }

    /// Canonical order: (scale, spatial index, frequency indices).
    pub fn canonical_order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by_key(|&a| self.tiles[a]);
        idx
    }
}

/// A `kind`-tree: members with `P_kind ≤ P_{top,kind}`; the top may be absent.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Tree {
    pub top: usize,
    pub kind: usize,
    pub members: Vec<usize>,
}

impl Tree {
    pub fn new(top: usize, kind: usize, mut members: Vec<usize>) -> Self {
        members.sort_unstable();
        members.dedup();
        Tree { top, kind, members }
    }

    pub fn contains_top(&self) -> bool {
        self.members.binary_search(&self.top).is_ok()
    }

    pub fn is_valid(&self, u: &Universe) -> bool {
        self.members.iter().all(|&m| u.le(self.kind, m, self.top))
    }

    pub fn top_len(&self, u: &Universe) -> f64 {
        u.len_of(self.top)
    }
}

pub fn maximal_tree(u: &Universe, top: usize, kind: usize) -> Tree {
    Tree::new(top, kind, (0..u.len()).filter(|&m| u.le(kind, m, top)).collect())
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum DisjointWitness {
    #[error("trees {tree_a} and {tree_b} share the tile of members {member_a}/{member_b}")]
    SharedTile {
        tree_a: usize,
        tree_b: usize,
        member_a: usize,
        member_b: usize,
    },
    #[error("member {member_b} of tree {tree_b} overlaps in frequency with member {member_a} of tree {tree_a} and meets its top interval")]
    Overlap {
        tree_a: usize,
        tree_b: usize,
        member_a: usize,
        member_b: usize,
    },
}

/// Strong `i`-disjointness of every pair of trees, both orientations.
pub fn check_strongly_disjoint(u: &Universe, trees: &[Tree], i: usize) -> Result<(), DisjointWitness> {
    let two = Dilation::int(2);
    for (ta, a) in trees.iter().enumerate() {
        for (tb, b) in trees.iter().enumerate() {
            if ta == tb {
                continue;
            }
            let top_a = u.spatial(a.top);
            for &p in &a.members {
                let pi = u.tile(p, i);
                for &q in &b.members {
                    let qi = u.tile(q, i);
                    if pi == qi {
                        return Err(DisjointWitness::SharedTile {
                            tree_a: ta,
                            tree_b: tb,
                            member_a: p,
                            member_b: q,
                        });
                    }
                    if pi.frequency().dilated_intersects(two, &qi.frequency(), two)
                        && u.spatial(q).intersects(&top_a)
                    {
                        return Err(DisjointWitness::Overlap {
                            tree_a: ta,
                            tree_b: tb,
                            member_a: p,
                            member_b: q,
                        });
                    }
                }
            }
        }
    }
    Ok(())
}

/// Result of the tree/packet inclusion predicate used when reorganizing the
/// two-collection form.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BiestTrick {
    /// Indices into the `P` list with `ω_{Q_3} ⊆ ω_{P_1}` for some tree member.
    pub selected: Vec<usize>,
    /// First `(Q, P)` pair with intersecting but non-nested frequency intervals
    /// whose membership disagrees with the inclusion.
    pub violation: Option<(usize, usize)>,
    pub pairs_tested: usize,
}

pub fn biest_trick(q_universe: &Universe, tree: &Tree, p_tiles: &[TriTile]) -> BiestTrick {
    let q3: Vec<Segment> = tree
        .members
        .iter()
        .map(|&q| q_universe.tile(q, 2).frequency())
        .collect();
    let selected: Vec<usize> = p_tiles
        .iter()
        .enumerate()
        .filter(|(_, p)| {
            let w = p.tile(0).frequency();
            q3.iter().any(|s| w.contains(s))
        })
        .map(|(k, _)| k)
        .collect();
    let chosen: BTreeSet<usize> = selected.iter().copied().collect();
    let mut violation = None;
    let mut pairs_tested = 0;
    'outer: for (qi, s) in tree.members.iter().zip(&q3) {
        for (k, p) in p_tiles.iter().enumerate() {
            let w = p.tile(0).frequency();
            if !w.intersects(s) {
                continue;
            }
            pairs_tested += 1;
            if w.contains(s) != chosen.contains(&k) {
                violation = Some((*qi, k));
                break 'outer;
            }
        }
    }
    BiestTrick {
        selected,
        violation,
        pairs_tested,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum GenError {
    #[error("generated only {got} of {want} tri-tiles within the retry budget")]
    Exhausted { got: usize, want: usize },
    #[error("invalid generator options: {0}")]
    Options(String),
}

/// Options for [`gen_rank1`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GenOptions {
    pub seed: u64,
    pub count: usize,
    /// Spatial scale exponents `s` (with `|I| = 2^s`), inclusive.
    pub scale_min: i32,
    pub scale_max: i32,
    pub consts: OrderConstants,
    /// Restrict scales to a lattice so the frequency cubes form a sparse set.
    pub sparse: bool,
    /// Spatial intervals lie in `[0, 2^window_log2)`.
    pub window_log2: i32,
    /// Anchor frequencies are drawn from `[-freq_radius, freq_radius)`.
    pub freq_radius: f64,
    /// Frequency offsets (in units of `|ω|`) of the three coordinates relative
    /// to the anchor; a permutation is chosen per tri-tile.
    pub offsets: [i64; 3],
    /// Number of distinct anchors used for fresh tri-tiles.
    pub anchors: usize,
    pub max_attempts: usize,
}

impl GenOptions {
    pub fn desk(seed: u64, count: usize) -> Self {
        GenOptions {
            seed,
            count,
            scale_min: 0,
            scale_max: 10,
            consts: OrderConstants::DESK,
            sparse: true,
            window_log2: 12,
            freq_radius: 4.0,
            offsets: [-3, 0, 3],
            anchors: 3,
            max_attempts: 400,
        }
    }
}

const PERMUTATIONS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];

/// Random rank-1 tri-tile family, built by greedy acceptance through
/// [`check_rank1`]. Deterministic in the seed; output in canonical order.
pub fn gen_rank1(opts: &GenOptions) -> Result<Vec<TriTile>, GenError> {
    opts.consts.validate().map_err(GenError::Options)?;
    if opts.scale_min > opts.scale_max || opts.scale_max > opts.window_log2 {
        return Err(GenError::Options("scale range must lie inside the window".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let scales: Vec<i32> = if opts.sparse {
        let gap = opts.consts.sparse_gap();
        (opts.scale_min..=opts.scale_max).step_by(gap as usize).collect()
    } else {
        (opts.scale_min..=opts.scale_max).collect()
    };
    let shift_s = Shift::ALL[rng.gen_range(0..3)];
    let shift = [shift_s; 3];
    let anchors: Vec<f64> = (0..opts.anchors.max(1))
        .map(|_| rng.gen_range(-opts.freq_radius..opts.freq_radius))
        .collect();

    let mut accepted: Vec<TriTile> = Vec::new();
    let mut roles: Vec<usize> = Vec::new();
    let mut set: BTreeSet<TriTile> = BTreeSet::new();
    let budget = opts.max_attempts.max(1) * opts.count.max(1);
    for _ in 0..budget {
        if accepted.len() >= opts.count {
            break;
        }
        let s = scales[rng.gen_range(0..scales.len())];
        let (anchor, pos, role) = if accepted.is_empty() || rng.gen_bool(0.35) {
            let span = 1i64 << (opts.window_log2 - s);
            (
                anchors[rng.gen_range(0..anchors.len())],
                rng.gen_range(0..span),
                rng.gen_range(0..PERMUTATIONS.len()),
            )
        } else {
            let e = rng.gen_range(0..accepted.len());
            let base = accepted[e];
            let zero_coord = PERMUTATIONS[roles[e]].iter().position(|&k| opts.offsets[k] == 0).unwrap_or(0);
            let xi = base.tile(zero_coord).xi().to_f64();
            let jitter = rng.gen_range(-0.4..0.4) * (-(s as f64)).exp2().min((-(base.scale as f64)).exp2());
            let pos = if s <= base.scale {
                let sub = 1i64 << (base.scale - s);
                base.pos * sub + rng.gen_range(0..sub)
            } else {
                base.pos >> (s - base.scale)
            };
            let role = if rng.gen_bool(0.5) { roles[e] } else { rng.gen_range(0..PERMUTATIONS.len()) };
            (xi + jitter, pos, role)
        };
        let center_idx = ShiftedInterval::containing(-s, shift_s, Exact::from_f64_floor(anchor)).k;
        let perm = PERMUTATIONS[role];
        let freq = [0, 1, 2].map(|i| center_idx + opts.offsets[perm[i]]);
        let cand = TriTile { scale: s, pos, freq, shift };
        if set.contains(&cand) {
            continue;
        }
        let ok = accepted.iter().all(|p| {
            rank1_pair(p, &cand, &opts.consts).is_none() && rank1_pair(&cand, p, &opts.consts).is_none()
        }) && (!opts.sparse || {
            let cube = cand.cube();
            accepted
                .iter()
                .all(|p| !crate::grid::sparse_conflict(&p.cube(), &cube, opts.consts.c_scale))
        });
        if ok {
            set.insert(cand);
            accepted.push(cand);
            roles.push(role);
        }
    }
    if accepted.len() < opts.count {
        return Err(GenError::Exhausted {
            got: accepted.len(),
            want: opts.count,
        });
    }
    accepted.sort();
    Ok(accepted)
}

/// Serialized tri-tile with exact endpoints as reduced-fraction strings.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileRecord {
    #[serde(rename = "I")]
    pub spatial: [String; 2],
    pub omega: [[String; 2]; 3],
    pub shift: [String; 3],
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub tree: Option<usize>,
}

impl TileRecord {
    pub fn from_tritile(t: &TriTile, tree: Option<usize>) -> Self {
        let s = t.spatial();
        TileRecord {
            spatial: [s.lo.to_string(), s.hi.to_string()],
            omega: [0, 1, 2].map(|i| {
                let w = t.tile(i).frequency();
                [w.lo.to_string(), w.hi.to_string()]
            }),
            shift: t.shift.map(|s| s.to_string()),
            tree,
        }
    }

    pub fn to_tritile(&self) -> Result<TriTile, String> {
        let lo: Exact = self.spatial[0].parse()?;
        let hi: Exact = self.spatial[1].parse()?;
        let len = hi - lo;
        let scale = (0..)
            .flat_map(|d| [d, -d])
            .take(160)
            .find(|&j| (crate::exact::MIN_SCALE..=crate::exact::MAX_SCALE).contains(&j) && Exact::pow2(j) == len)
            .ok_or("spatial length is not a power of two")?;
        let pos = lo.div_floor(len);
        if Exact::pow2(scale) * pos != lo {
            return Err("spatial interval is not dyadic".into());
        }
        let mut shift = [Shift::ZERO; 3];
        let mut freq = [0i64; 3];
        for i in 0..3 {
            let thirds = match self.shift[i].as_str() {
                "0" => 0,
                "1/3" => 1,
                "2/3" => 2,
                other => return Err(format!("bad shift {other}")),
            };
            shift[i] = Shift::new(thirds).expect("checked");
            let wlo: Exact = self.omega[i][0].parse()?;
            let iv = ShiftedInterval::containing(-scale, shift[i], wlo);
            if iv.lo() != wlo || iv.hi() != self.omega[i][1].parse::<Exact>()? {
                return Err(format!("omega_{i} is not a mesh interval of the dual scale"));
            }
            freq[i] = iv.k;
        }
        Ok(TriTile { scale, pos, freq, shift })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tile(scale: i32, pos: i64, freq: i64) -> Tile {
        Tile { scale, pos, freq, shift: Shift::ZERO }
    }

    #[test]
    fn order_examples() {
        let c = OrderConstants::NOMINAL;
        let p = tile(0, 0, 0);
        assert!(!order_lt(&p, &p, &c));
        assert!(order_le(&p, &p, &c));
        assert!(order_lesssim(&p, &p, &c));
        assert!(!order_lesssim_prime(&p, &p, &c));
        // I' = [0,1), ω' = [0,1); I = [0,2), ω = [0,1/2).
        let small = tile(0, 0, 0);
        let big = tile(1, 0, 0);
        assert!(order_lt(&small, &big, &c));
        let far = tile(1, 5, 0);
        assert!(!order_lt(&small, &far, &c));
        assert!(!order_lesssim(&small, &far, &c));
    }

    #[test]
    fn rank1_examples() {
        let c = OrderConstants::DESK;
        let a = TriTile { scale: 0, pos: 0, freq: [0, 3, 6], shift: [Shift::ZERO; 3] };
        assert!(check_rank1(&[a], &c).is_ok());
        let b = TriTile { freq: [0, 4, 7], pos: 0, ..a };
        let err = check_rank1(&[a, b], &c).unwrap_err();
        assert_eq!(err.clause, 1);
    }

    #[test]
    fn generator_is_rank1_and_deterministic() {
        let opts = GenOptions::desk(7, 20);
        let a = gen_rank1(&opts).unwrap();
        let b = gen_rank1(&opts).unwrap();
        assert_eq!(a, b);
        assert!(check_rank1(&a, &opts.consts).is_ok());
        assert!(check_sparse_tritiles(&a, opts.consts.c_scale).is_ok());
    }

    #[test]
    fn record_round_trip() {
        let t = TriTile { scale: -2, pos: 5, freq: [1, -4, 9], shift: [Shift::THIRD; 3] };
        let r = TileRecord::from_tritile(&t, Some(3));
        assert_eq!(r.to_tritile().unwrap(), t);
    }
}
