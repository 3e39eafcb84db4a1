//! Single-tree estimate, greedy tree selection, the level partition and the
//! abstract size/energy bound.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::functionals::{modified_energy, size_on, ModifiedEnergy, DEFAULT_EXACT_LIMIT};
use crate::tiles::{check_strongly_disjoint, Tree, Universe};

#[derive(Debug, Error, PartialEq)]
pub enum DecompError {
    #[error("slot {0} has zero coefficients")]
    ZeroSlot(usize),
    #[error("coefficient slots must all have the universe's length")]
    Length,
    #[error("partition did not exhaust the collection after {0} levels")]
    NoProgress(usize),
}

/// `|I_P|^{-1/2}` with `|I_P|` a power of two.
fn inv_sqrt_len(u: &Universe, p: usize) -> f64 {
    (-(u.tiles[p].scale as f64) / 2.0).exp2()
}

/// `size_j` of a tree's coefficients, with tops among the members and the
/// tree's own top.
pub fn tree_size(u: &Universe, a: &[Complex64], tree: &Tree, j: usize) -> f64 {
    let mut best = 0.0f64;
    for t in tree.members.iter().copied().chain(std::iter::once(tree.top)) {
        for i in (0..3).filter(|&i| i != j) {
            let m: f64 = tree
                .members
                .iter()
                .filter(|&&p| u.le(i, p, t))
                .map(|&p| a[p].norm_sqr())
                .sum();
            best = best.max(m / u.len_of(t));
        }
    }
    best.sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeForm {
    pub value: Complex64,
    pub sizes: [f64; 3],
    pub bound: f64,
    pub holds: bool,
}

/// `Σ_{P∈T} |I_P|^{-1/2} a¹ a² a³` against `|I_T| ∏ size_j(T)`.
pub fn tree_form(u: &Universe, tree: &Tree, a: [&[Complex64]; 3]) -> TreeForm {
    let value: Complex64 = tree
        .members
        .iter()
        .map(|&p| a[0][p] * a[1][p] * a[2][p] * inv_sqrt_len(u, p))
        .sum();
    let sizes = [0, 1, 2].map(|j| tree_size(u, a[j], tree, j));
    let bound = u.len_of(tree.top) * sizes.iter().product::<f64>();
    TreeForm {
        value,
        sizes,
        bound,
        holds: value.norm() <= bound * (1.0 + 1e-12),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pass {
    Up,
    Down,
    /// Closing pass removing trees that still violate the halved size bound.
    Top,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMode {
    /// Only the upward and downward passes.
    Literal,
    /// Upward, downward, then the closing pass.
    Closed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub pass: Pass,
    pub tree: Tree,
    pub companion: Tree,
    pub mass: f64,
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Postconditions {
    pub plus_left: bool,
    pub plus_right: bool,
    pub disjoint_up: bool,
    pub disjoint_down: bool,
    pub size_before: f64,
    pub size_after: f64,
    pub size_stop: bool,
    pub size_lower: bool,
    /// `Σ |I_T|` over all nonempty selected trees and companions.
    pub cover_total: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionTrace {
    pub n: i32,
    pub j: usize,
    pub selections: Vec<Selection>,
    pub remainder: Vec<usize>,
    pub post: Postconditions,
}

fn pow2(e: i32) -> f64 {
    (e as f64).exp2()
}

struct Candidate {
    top: usize,
    kind: usize,
    members: Vec<usize>,
    mass: f64,
}

/// Deterministic order among candidates with equal frequency: larger
/// `|I_T|`, then left endpoint, then top index, then kind.
fn tie_key(u: &Universe, c: &Candidate) -> (std::cmp::Reverse<i32>, crate::exact::Exact, usize, usize) {
    (std::cmp::Reverse(u.tiles[c.top].scale), u.spatial(c.top).lo, c.top, c.kind)
}

fn is_strict_subset(a: &[usize], b: &[usize]) -> bool {
    a.len() < b.len() && a.iter().all(|x| b.binary_search(x).is_ok())
}

fn directional_pass(u: &Universe, a: &[Complex64], j: usize, n: i32, alive: &mut [bool], up: bool) -> Vec<Selection> {
    let mut out = Vec::new();
    loop {
        let mut cands: Vec<Candidate> = Vec::new();
        for t in (0..u.len()).filter(|&t| alive[t]) {
            for i in (0..3).filter(|&i| i != j) {
                let members: Vec<usize> = (0..u.len())
                    .filter(|&p| {
                        alive[p]
                            && u.le(i, p, t)
                            && if up { u.lesssim_plus(j, p, t) } else { u.lesssim_minus(j, p, t) }
                    })
                    .collect();
                if members.is_empty() {
                    continue;
                }
                let mass: f64 = members.iter().map(|&p| a[p].norm_sqr()).sum();
                if mass >= pow2(-2 * n - 3) * u.len_of(t) {
                    cands.push(Candidate { top: t, kind: i, members, mass });
                }
            }
        }
        if cands.is_empty() {
            return out;
        }
        let extreme = cands
            .iter()
            .map(|c| u.xi(j, c.top))
            .reduce(|x, y| if up { x.max(y) } else { x.min(y) })
            .expect("nonempty");
        let level: Vec<&Candidate> = cands.iter().filter(|c| u.xi(j, c.top) == extreme).collect();
        let chosen = level
            .iter()
            .filter(|c| !level.iter().any(|d| is_strict_subset(&c.members, &d.members)))
            .min_by_key(|c| tie_key(u, c))
            .expect("an inclusion-maximal candidate exists");
        let companion: Vec<usize> = (0..u.len())
            .filter(|&p| alive[p] && chosen.members.binary_search(&p).is_err() && u.le(j, p, chosen.top))
            .collect();
        for &p in chosen.members.iter().chain(&companion) {
            alive[p] = false;
        }
        out.push(Selection {
            pass: if up { Pass::Up } else { Pass::Down },
            tree: Tree::new(chosen.top, chosen.kind, chosen.members.clone()),
            companion: Tree::new(chosen.top, j, companion),
            mass: chosen.mass,
            threshold: pow2(-2 * n - 3) * u.len_of(chosen.top),
        });
    }
}

fn closing_pass(u: &Universe, a: &[Complex64], j: usize, n: i32, alive: &mut [bool]) -> Vec<Selection> {
    let mut out = Vec::new();
    loop {
        let mut best: Option<(f64, Candidate)> = None;
        for t in (0..u.len()).filter(|&t| alive[t]) {
            for i in (0..3).filter(|&i| i != j) {
                let members: Vec<usize> = (0..u.len()).filter(|&p| alive[p] && u.le(i, p, t)).collect();
                let mass: f64 = members.iter().map(|&p| a[p].norm_sqr()).sum();
                let density = mass / u.len_of(t);
                if mass > pow2(-2 * n - 2) * u.len_of(t) && best.as_ref().is_none_or(|(d, _)| density > *d) {
                    best = Some((density, Candidate { top: t, kind: i, members, mass }));
                }
            }
        }
        let Some((_, chosen)) = best else {
            return out;
        };
        let companion: Vec<usize> = (0..u.len())
            .filter(|&p| alive[p] && chosen.members.binary_search(&p).is_err() && u.le(j, p, chosen.top))
            .collect();
        for &p in chosen.members.iter().chain(&companion) {
            alive[p] = false;
        }
        out.push(Selection {
            pass: Pass::Top,
            tree: Tree::new(chosen.top, chosen.kind, chosen.members.clone()),
            companion: Tree::new(chosen.top, j, companion),
            mass: chosen.mass,
            threshold: pow2(-2 * n - 2) * u.len_of(chosen.top),
        });
    }
}

/// Worst `Σ|a|² / |I_T|` over directional trees of the remainder.
fn directional_max(u: &Universe, a: &[Complex64], j: usize, alive: &[bool], up: bool) -> f64 {
    let mut worst = 0.0f64;
    for t in (0..u.len()).filter(|&t| alive[t]) {
        for i in (0..3).filter(|&i| i != j) {
            let m: f64 = (0..u.len())
                .filter(|&p| {
                    alive[p] && u.le(i, p, t) && if up { u.lesssim_plus(j, p, t) } else { u.lesssim_minus(j, p, t) }
                })
                .map(|p| a[p].norm_sqr())
                .sum();
            worst = worst.max(m / u.len_of(t));
        }
    }
    worst
}

/// One application of the selection algorithm at level `n` on the active
/// tiles. `a` must already be normalized by the slot's energy.
pub fn select_trees(
    u: &Universe,
    a: &[Complex64],
    j: usize,
    n: i32,
    active: &[bool],
    mode: SelectionMode,
) -> SelectionTrace {
    let size_before = size_on(u, a, j, active).value;
    let mut alive = active.to_vec();
    let mut selections = directional_pass(u, a, j, n, &mut alive, true);
    selections.extend(directional_pass(u, a, j, n, &mut alive, false));
    if mode == SelectionMode::Closed {
        selections.extend(closing_pass(u, a, j, n, &mut alive));
    }
    let threshold = pow2(-2 * n - 3);
    let up: Vec<Tree> = selections.iter().filter(|s| s.pass == Pass::Up).map(|s| s.tree.clone()).collect();
    let down: Vec<Tree> = selections.iter().filter(|s| s.pass == Pass::Down).map(|s| s.tree.clone()).collect();
    let size_after = size_on(u, a, j, &alive).value;
    let cover_total = selections
        .iter()
        .flat_map(|s| [&s.tree, &s.companion])
        .filter(|t| !t.members.is_empty())
        .map(|t| u.len_of(t.top))
        .sum();
    let post = Postconditions {
        plus_left: directional_max(u, a, j, &alive, true) < threshold,
        plus_right: directional_max(u, a, j, &alive, false) < threshold,
        disjoint_up: check_strongly_disjoint(u, &up, j).is_ok(),
        disjoint_down: check_strongly_disjoint(u, &down, j).is_ok(),
        size_before,
        size_after,
        size_stop: size_before <= pow2(-n),
        size_lower: size_after <= pow2(-n - 1),
        cover_total,
    };
    SelectionTrace {
        n,
        j,
        selections,
        remainder: (0..u.len()).filter(|&p| alive[p]).collect(),
        post,
    }
}

/// Largest `n` with `size_j ≤ 2^{-n} E_j`.
pub fn start_level(size: f64, energy: f64) -> i32 {
    let mut n = (energy / size).log2().floor() as i32;
    while size > pow2(-n) * energy {
        n -= 1;
    }
    while size <= pow2(-n - 1) * energy {
        n += 1;
    }
    n
}

/// Slot energies used for normalization: exact modified energy when the
/// collection is small enough, otherwise the bracket's upper end.
pub fn slot_energy(u: &Universe, a: &[Complex64], j: usize, exact_limit: usize) -> (f64, bool) {
    match modified_energy(u, a, j, exact_limit) {
        m @ ModifiedEnergy::Exact(_) => (m.upper(), true),
        m => (m.upper(), false),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub n: i32,
    pub traces: Vec<SelectionTrace>,
    /// Tiles assigned to this level.
    pub tiles: Vec<usize>,
    /// `Σ |I_T|` over the level's tree cover.
    pub cover_total: f64,
}

impl Level {
    pub fn trees(&self) -> impl Iterator<Item = &Tree> {
        self.traces
            .iter()
            .flat_map(|t| t.selections.iter())
            .flat_map(|s| [&s.tree, &s.companion])
            .filter(|t| !t.members.is_empty())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub sizes: [f64; 3],
    pub energies: [f64; 3],
    pub energies_exact: [bool; 3],
    pub start: i32,
    pub levels: Vec<Level>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionOptions {
    pub mode: SelectionMode,
    pub exact_limit: usize,
    pub max_levels: usize,
}

impl Default for PartitionOptions {
    fn default() -> Self {
        PartitionOptions {
            mode: SelectionMode::Closed,
            exact_limit: DEFAULT_EXACT_LIMIT,
            max_levels: 400,
        }
    }
}

pub fn partition(u: &Universe, a: [&[Complex64]; 3], opts: &PartitionOptions) -> Result<Partition, DecompError> {
    if a.iter().any(|s| s.len() != u.len()) {
        return Err(DecompError::Length);
    }
    let all = vec![true; u.len()];
    let mut sizes = [0.0; 3];
    let mut energies = [0.0; 3];
    let mut energies_exact = [false; 3];
    for j in 0..3 {
        sizes[j] = size_on(u, a[j], j, &all).value;
        let (e, exact) = slot_energy(u, a[j], j, opts.exact_limit);
        if sizes[j] == 0.0 || e == 0.0 {
            return Err(DecompError::ZeroSlot(j));
        }
        energies[j] = e;
        energies_exact[j] = exact;
    }
    let normalized: Vec<Vec<Complex64>> = (0..3)
        .map(|j| a[j].iter().map(|v| v / energies[j]).collect())
        .collect();
    let start = (0..3).map(|j| start_level(sizes[j], energies[j])).min().expect("three slots");
    let mut alive = all;
    let mut levels = Vec::new();
    let mut n = start;
    while alive.iter().any(|&x| x) {
        if levels.len() >= opts.max_levels {
            return Err(DecompError::NoProgress(levels.len()));
        }
        let mut traces = Vec::new();
        let before = alive.clone();
        for j in 0..3 {
            let tr = select_trees(u, &normalized[j], j, n, &alive, opts.mode);
            for s in &tr.selections {
                for &p in s.tree.members.iter().chain(&s.companion.members) {
                    alive[p] = false;
                }
            }
            traces.push(tr);
        }
        let tiles: Vec<usize> = (0..u.len()).filter(|&p| before[p] && !alive[p]).collect();
        let cover_total = traces.iter().map(|t| t.post.cover_total).sum();
        levels.push(Level { n, traces, tiles, cover_total });
        n += 1;
    }
    Ok(Partition {
        sizes,
        energies,
        energies_exact,
        start,
        levels,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbstractBound {
    pub lhs: f64,
    pub sizes: [f64; 3],
    pub energies: [f64; 3],
    pub energies_exact: [bool; 3],
    pub theta: [f64; 3],
    pub rhs: f64,
    pub ratio: f64,
    pub refined_rhs: f64,
    pub refined_ratio: f64,
}

/// `|Σ_P |I_P|^{-1/2} a¹a²a³|` against `∏ S_j^{θ_j} E_j^{1-θ_j}` and the
/// logarithmic refinement.
pub fn abstract_bound(u: &Universe, a: [&[Complex64]; 3], theta: [f64; 3], exact_limit: usize) -> AbstractBound {
    let lhs = (0..u.len())
        .map(|p| a[0][p] * a[1][p] * a[2][p] * inv_sqrt_len(u, p))
        .sum::<Complex64>()
        .norm();
    let all = vec![true; u.len()];
    let sizes = [0, 1, 2].map(|j| size_on(u, a[j], j, &all).value);
    let slot = [0, 1, 2].map(|j| slot_energy(u, a[j], j, exact_limit));
    let energies = slot.map(|s| s.0);
    let rhs: f64 = (0..3).map(|j| sizes[j].powf(theta[j]) * energies[j].powf(1.0 - theta[j])).product();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&x, &y| (energies[x] / sizes[x]).total_cmp(&(energies[y] / sizes[y])));
    let [s1, s2, s3] = order;
    let refined_rhs = energies[s1]
        * energies[s2]
        * sizes[s3]
        * (1.0 + (energies[s3] / sizes[s3]) / (energies[s2] / sizes[s2])).ln();
    let ratio_of = |x: f64, y: f64| if x == 0.0 { 0.0 } else { x / y };
    AbstractBound {
        lhs,
        sizes,
        energies,
        energies_exact: slot.map(|s| s.1),
        theta,
        rhs,
        ratio: ratio_of(lhs, rhs),
        refined_rhs,
        refined_ratio: ratio_of(lhs, refined_rhs),
    }
}

/// Per-level check `Σ_{T∈T_n} |tree_form(T)| ≤ Σ|I_T| ∏ min(2^{-n}E_j, S_j)`.
pub fn level_consistency(u: &Universe, a: [&[Complex64]; 3], part: &Partition) -> Vec<(i32, f64, f64)> {
    part.levels
        .iter()
        .map(|lvl| {
            let factor: f64 = (0..3)
                .map(|j| (pow2(-lvl.n) * part.energies[j]).min(part.sizes[j]))
                .product();
            let mut lhs = 0.0;
            let mut rhs = 0.0;
            for t in lvl.trees() {
                lhs += tree_form(u, t, a).value.norm();
                rhs += u.len_of(t.top) * factor;
            }
            (lvl.n, lhs, rhs)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Shift;
    use crate::tiles::{OrderConstants, TriTile};

    fn one() -> Vec<Complex64> {
        vec![Complex64::new(1.0, 0.0)]
    }

    fn single() -> Universe {
        Universe::new(
            vec![TriTile { scale: 0, pos: 0, freq: [0, 3, 6], shift: [Shift::ZERO; 3] }],
            OrderConstants::DESK,
        )
    }

    #[test]
    fn singleton_tree_form_is_tight() {
        let u = single();
        let t = Tree::new(0, 2, vec![0]);
        let a = one();
        let f = tree_form(&u, &t, [&a, &a, &a]);
        assert_eq!((f.value, f.bound), (Complex64::new(1.0, 0.0), 1.0));
    }

    #[test]
    fn singleton_partition_and_bound() {
        let u = single();
        let a = one();
        let p = partition(&u, [&a, &a, &a], &PartitionOptions::default()).unwrap();
        assert_eq!(p.levels.len(), 1);
        assert_eq!(p.levels[0].tiles, vec![0]);
        let b = abstract_bound(&u, [&a, &a, &a], [1.0 / 3.0; 3], 8);
        assert_eq!((b.lhs, b.rhs, b.ratio), (1.0, 1.0, 1.0));
    }

    #[test]
    fn zero_selects_nothing() {
        let u = single();
        let z = vec![Complex64::new(0.0, 0.0)];
        let t = select_trees(&u, &z, 0, 0, &[true], SelectionMode::Closed);
        assert!(t.selections.is_empty());
        assert_eq!(t.remainder, vec![0]);
    }
}
