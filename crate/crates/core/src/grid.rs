//! Shifted dyadic meshes, sparse splitting, the dyadic maximal function and
//! the approximate cutoff.

use std::cmp::Reverse;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exact::{Dilation, Exact, Rat, RatSegment, Segment, MAX_SCALE, MIN_SCALE};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GridError {
    #[error("cubes come from different meshes or dimensions")]
    MixedMesh,
    #[error("input cube is empty or degenerate")]
    Degenerate,
    #[error("scale 2^{0} is outside the supported exact range")]
    ScaleOutOfRange(i32),
    #[error("no enclosing shifted cube found")]
    NotFound,
}

/// One of the three mesh shifts `0`, `1/3`, `2/3`, stored as the numerator over 3.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Shift(u8);

impl Shift {
    pub const ZERO: Shift = Shift(0);
    pub const THIRD: Shift = Shift(1);
    pub const TWO_THIRDS: Shift = Shift(2);
    pub const ALL: [Shift; 3] = [Shift::ZERO, Shift::THIRD, Shift::TWO_THIRDS];

    pub fn new(thirds: u8) -> Option<Shift> {
        (thirds < 3).then_some(Shift(thirds))
    }

    pub fn thirds(self) -> u8 {
        self.0
    }

    pub fn to_exact(self) -> Exact {
        Exact::from_ratio(self.0 as i128, 3).expect("thirds are exact")
    }
}

impl std::fmt::Display for Shift {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.0 {
            0 => write!(f, "0"),
            n => write!(f, "{n}/3"),
        }
    }
}

/// `2^j (k + [0,1) + (-1)^j σ)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ShiftedInterval {
    pub j: i32,
    pub k: i64,
    pub shift: Shift,
}

fn check_scale(j: i32) -> Result<(), GridError> {
    if (MIN_SCALE..=MAX_SCALE).contains(&j) {
        Ok(())
    } else {
        Err(GridError::ScaleOutOfRange(j))
    }
}

/// Offset of the mesh at scale `j` in units of `2^j / 3`: `(-1)^j * 3σ`.
fn signed_shift_thirds(j: i32, shift: Shift) -> i64 {
    let s = shift.thirds() as i64;
    if j.rem_euclid(2) == 0 {
        s
    } else {
        -s
    }
}

pub fn mesh_interval(j: i32, k: i64, shift: Shift) -> ShiftedInterval {
    assert!(check_scale(j).is_ok(), "scale 2^{j} unsupported");
    ShiftedInterval { j, k, shift }
}

impl ShiftedInterval {
    pub fn dyadic(j: i32, k: i64) -> Self {
        mesh_interval(j, k, Shift::ZERO)
    }

    pub fn lo(&self) -> Exact {
        // 2^j/3 * (3k + signed shift)
        let third = Exact::from_units(1i128 << (crate::exact::FRAC_BITS as i32 + self.j));
        third * (3 * self.k + signed_shift_thirds(self.j, self.shift))
    }

    pub fn hi(&self) -> Exact {
        self.lo() + Exact::pow2(self.j)
    }

    pub fn len(&self) -> Exact {
        Exact::pow2(self.j)
    }

    pub fn segment(&self) -> Segment {
        Segment::new(self.lo(), self.hi())
    }

    pub fn center(&self) -> Exact {
        self.segment().center()
    }

    /// The mesh interval of scale `j` and shift `shift` containing `x`.
    pub fn containing(j: i32, shift: Shift, x: Exact) -> Self {
        let offset = ShiftedInterval { j, k: 0, shift }.lo();
        ShiftedInterval {
            j,
            k: (x - offset).div_floor(Exact::pow2(j)),
            shift,
        }
    }

    /// The dyadic parent (only meaningful for the unshifted mesh).
    pub fn parent(&self) -> Self {
        debug_assert_eq!(self.shift, Shift::ZERO);
        ShiftedInterval {
            j: self.j + 1,
            k: self.k.div_euclid(2),
            shift: self.shift,
        }
    }
}

/// Cube in `D^n_σ`: one mesh interval per axis, all at the same scale.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ShiftedCube {
    pub j: i32,
    pub k: Vec<i64>,
    pub shift: Vec<Shift>,
}

impl ShiftedCube {
    pub fn new(j: i32, k: Vec<i64>, shift: Vec<Shift>) -> Self {
        assert_eq!(k.len(), shift.len());
        assert!((1..=3).contains(&k.len()), "dimension must be 1..=3");
        assert!(check_scale(j).is_ok(), "scale 2^{j} unsupported");
        ShiftedCube { j, k, shift }
    }

    pub fn dim(&self) -> usize {
        self.k.len()
    }

    pub fn axis(&self, a: usize) -> ShiftedInterval {
        ShiftedInterval {
            j: self.j,
            k: self.k[a],
            shift: self.shift[a],
        }
    }

    pub fn axes(&self) -> impl Iterator<Item = ShiftedInterval> + '_ {
        (0..self.dim()).map(|a| self.axis(a))
    }

    pub fn side(&self) -> Exact {
        Exact::pow2(self.j)
    }

    /// `(c*self) ∩ (c*other) ≠ ∅` (product of per-axis tests).
    pub fn dilated_intersects(&self, other: &ShiftedCube, c: Dilation) -> bool {
        self.axes()
            .zip(other.axes())
            .all(|(a, b)| a.segment().dilated_intersects(c, &b.segment(), c))
    }
}

/// `(1 + (|x - x_I| / |I|)^2)^{-M/2}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApproxCutoff {
    pub center: f64,
    pub width: f64,
    pub exponent: u32,
}

pub fn cutoff_value(c: &ApproxCutoff, x: f64) -> f64 {
    assert!(c.exponent >= 1 && c.width > 0.0);
    let r = (x - c.center) / c.width;
    (1.0 + r * r).powf(-(c.exponent as f64) / 2.0)
}

/// Smallest-scale cube `Q'` from any shifted mesh with `Q ⊆ (7/10) Q'`.
///
/// Scales are searched from small to large, shift vectors in lexicographic
/// order, so the result is deterministic.
pub fn enclosing_shifted_cube(q: &[RatSegment]) -> Result<ShiftedCube, GridError> {
    let n = q.len();
    if !(1..=3).contains(&n) {
        return Err(GridError::MixedMesh);
    }
    let side = q.iter().map(|s| s.len()).max().expect("nonempty");
    if side <= Rat::from_integer(0) {
        return Err(GridError::Degenerate);
    }
    let seven_tenths = Dilation::frac(7, 10);
    let eight_side = side * Rat::from_integer(8);
    // Smallest candidate scale with 2^j >= side.
    let mut j = MIN_SCALE;
    while Exact::pow2(j).to_rat() < side {
        j += 1;
        if j > MAX_SCALE {
            return Err(GridError::ScaleOutOfRange(j));
        }
    }
    while Exact::pow2(j).to_rat() <= eight_side {
        let mut ks = Vec::with_capacity(n);
        let mut shifts = Vec::with_capacity(n);
        for axis in q {
            let mid = (axis.lo + axis.hi) / Rat::from_integer(2);
            let found = Shift::ALL.iter().find_map(|&shift| {
                let base = ShiftedInterval { j, k: 0, shift };
                let step = Exact::pow2(j).to_rat();
                let k0 = ((mid - base.lo().to_rat()) / step).floor().to_integer() as i64;
                (k0 - 1..=k0 + 1).find_map(|k| {
                    let cand = ShiftedInterval { j, k, shift };
                    axis.inside_dilated(&cand.segment(), seven_tenths).then_some((k, shift))
                })
            });
            match found {
                Some((k, s)) => {
                    ks.push(k);
                    shifts.push(s);
                }
                None => break,
            }
        }
        if ks.len() == n {
            return Ok(ShiftedCube::new(j, ks, shifts));
        }
        j += 1;
        if j > MAX_SCALE {
            break;
        }
    }
    Err(GridError::NotFound)
}

/// Whether two cubes from one mesh violate sparseness with factor `c`.
pub fn sparse_conflict(a: &ShiftedCube, b: &ShiftedCube, factor: i128) -> bool {
    if a == b {
        return false;
    }
    if a.j == b.j {
        return a.dilated_intersects(b, Dilation::int(factor));
    }
    // Distinct scales: need |c*Q| < |Q'| for the smaller Q, i.e. c < 2^gap.
    let gap = (a.j - b.j).unsigned_abs();
    gap < 127 && (1i128 << gap) <= factor
}

/// Quadratic-time sparseness check; returns the first conflicting pair.
pub fn check_sparse(cubes: &[ShiftedCube], factor: i128) -> Result<(), (usize, usize)> {
    for a in 0..cubes.len() {
        for b in a + 1..cubes.len() {
            if sparse_conflict(&cubes[a], &cubes[b], factor) {
                return Err((a, b));
            }
        }
    }
    Ok(())
}

fn same_mesh(cubes: &[ShiftedCube]) -> bool {
    cubes
        .windows(2)
        .all(|w| w[0].shift == w[1].shift && w[0].dim() == w[1].dim())
}

/// Splits cubes into sparse parts by DSATUR coloring of the conflict graph.
pub fn sparse_split(cubes: &[ShiftedCube], factor: i128) -> Result<Vec<Vec<ShiftedCube>>, GridError> {
    if !same_mesh(cubes) {
        return Err(GridError::MixedMesh);
    }
    let distinct: Vec<ShiftedCube> = cubes.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let n = distinct.len();
    let adj: Vec<Vec<usize>> = (0..n)
        .map(|a| {
            (0..n)
                .filter(|&b| b != a && sparse_conflict(&distinct[a], &distinct[b], factor))
                .collect()
        })
        .collect();
    let colors = dsatur(&adj);
    let parts = colors.iter().copied().max().map_or(0, |m| m + 1);
    let mut out = vec![Vec::new(); parts];
    for (i, c) in colors.into_iter().enumerate() {
        out[c].push(distinct[i].clone());
    }
    Ok(out)
}

/// Greedy saturation-degree coloring. Ties go to the larger degree, then
/// the smaller index.
pub fn dsatur(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let mut color = vec![usize::MAX; n];
    let mut seen: Vec<Vec<u64>> = vec![Vec::new(); n];
    let mut sat = vec![0usize; n];
    let key = |v: usize, s: usize| (s, adj[v].len(), Reverse(v));
    let mut queue: BTreeSet<(usize, usize, Reverse<usize>)> = (0..n).map(|v| key(v, 0)).collect();
    while let Some((_, _, Reverse(v))) = queue.pop_last() {
        let words = &seen[v];
        let c = (0..)
            .find(|&c| words.get(c / 64).is_none_or(|w| w >> (c % 64) & 1 == 0))
            .expect("free color");
        color[v] = c;
        for &w in &adj[v] {
            if color[w] != usize::MAX {
                continue;
            }
            let bits = &mut seen[w];
            if bits.len() <= c / 64 {
                bits.resize(c / 64 + 1, 0);
            }
            if bits[c / 64] >> (c % 64) & 1 == 0 {
                bits[c / 64] |= 1 << (c % 64);
                queue.remove(&key(w, sat[w]));
                sat[w] += 1;
                queue.insert(key(w, sat[w]));
            }
        }
    }
    color
}

/// Finite union of dyadic intervals, kept sorted, disjoint and with
/// complete sibling pairs merged into their parent.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DyadicSet {
    intervals: Vec<ShiftedInterval>,
}

impl DyadicSet {
    pub fn new(parts: impl IntoIterator<Item = ShiftedInterval>) -> Self {
        let mut v: Vec<ShiftedInterval> = parts.into_iter().collect();
        assert!(v.iter().all(|i| i.shift == Shift::ZERO), "dyadic sets use the unshifted mesh");
        loop {
            v.sort_by_key(|i| (i.lo(), std::cmp::Reverse(i.j)));
            // Drop intervals contained in an earlier (larger or equal) one.
            let mut kept: Vec<ShiftedInterval> = Vec::with_capacity(v.len());
            for i in v {
                if kept.last().is_some_and(|l| l.segment().contains(&i.segment())) {
                    continue;
                }
                kept.push(i);
            }
            // Merge adjacent siblings.
            let mut merged = Vec::with_capacity(kept.len());
            let mut changed = false;
            let mut idx = 0;
            while idx < kept.len() {
                let a = kept[idx];
                if idx + 1 < kept.len() {
                    let b = kept[idx + 1];
                    if a.j == b.j && a.k % 2 == 0 && b.k == a.k + 1 {
                        merged.push(a.parent());
                        idx += 2;
                        changed = true;
                        continue;
                    }
                }
                merged.push(a);
                idx += 1;
            }
            v = merged;
            if !changed {
                return DyadicSet { intervals: v };
            }
        }
    }

    pub fn empty() -> Self {
        DyadicSet::default()
    }

    pub fn intervals(&self) -> &[ShiftedInterval] {
        &self.intervals
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn measure(&self) -> Exact {
        self.intervals.iter().fold(Exact::ZERO, |acc, i| acc + i.len())
    }

    pub fn contains_point(&self, x: Exact) -> bool {
        self.intervals.iter().any(|i| i.segment().contains_point(x))
    }

    pub fn intersection_len(&self, seg: &Segment) -> Exact {
        self.intervals
            .iter()
            .fold(Exact::ZERO, |acc, i| acc + i.segment().intersection_len(seg))
    }

    pub fn finest_scale(&self) -> Option<i32> {
        self.intervals.iter().map(|i| i.j).min()
    }

    pub fn union(&self, other: &DyadicSet) -> DyadicSet {
        DyadicSet::new(self.intervals.iter().chain(&other.intervals).copied())
    }

    /// `|E ∩ [0, window)|`-style helpers work on segments; this is `E ⊆ other`.
    pub fn is_subset(&self, other: &DyadicSet) -> bool {
        self.intervals
            .iter()
            .all(|i| other.intersection_len(&i.segment()) == i.len())
    }
}

/// `sup_{I ∋ x} |E ∩ I| / |I|` over dyadic `I` up to scale `2^root_scale`.
pub fn dyadic_maximal(e: &DyadicSet, x: Exact, root_scale: i32) -> Rat {
    let Some(finest) = e.finest_scale() else {
        return Rat::from_integer(0);
    };
    if e.contains_point(x) {
        return Rat::from_integer(1);
    }
    let mut best = Rat::from_integer(0);
    for j in finest..=root_scale.max(finest) {
        let i = ShiftedInterval::containing(j, Shift::ZERO, x);
        let r = e.intersection_len(&i.segment()).ratio(i.len());
        if r > best {
            best = r;
        }
    }
    best
}

/// The exact set `{x : M 1_E (x) > λ}` as a dyadic union.
///
/// The superlevel set is the union of the dyadic intervals `I` (up to the
/// root scale) with average `> λ`; each such `I` meets `E`, so it is an
/// element of `E` or an ancestor of one.
pub fn dyadic_superlevel(e: &DyadicSet, lambda: Rat, root_scale: i32) -> DyadicSet {
    let mut candidates = BTreeSet::new();
    for &i in e.intervals() {
        let mut cur = i;
        if lambda < Rat::from_integer(1) {
            candidates.insert(cur);
        }
        while cur.j < root_scale {
            cur = cur.parent();
            candidates.insert(cur);
        }
    }
    DyadicSet::new(
        candidates
            .into_iter()
            .filter(|i| e.intersection_len(&i.segment()).ratio(i.len()) > lambda),
    )
}
