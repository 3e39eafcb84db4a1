//! Brute-force oracles and small random instances shared by the
//! integration tests.
#![allow(dead_code)]

use biest::tiles::{check_strongly_disjoint, gen_rank1, GenError, tiles_disjoint, GenOptions, Tree, TriTile, Universe};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Small rank-1 family with several scales inside a short window, so that
/// nontrivial trees occur. Crowded requests return the largest feasible
/// family.
pub fn small_family(seed: u64, count: usize) -> Vec<TriTile> {
    let mut o = GenOptions::desk(seed, count);
    o.scale_min = 0;
    o.scale_max = 6;
    o.window_log2 = 6;
    loop {
        match gen_rank1(&o) {
            Ok(t) => return t,
            Err(GenError::Exhausted { got, .. }) if got > 0 => o.count = got,
            Err(e) => panic!("generator failed: {e}"),
        }
    }
}

pub fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect()
}

/// Universe plus three coefficient slots drawn from one seed.
pub fn small_instance(seed: u64, max_tiles: usize) -> (Universe, [Vec<Complex64>; 3]) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let count = rng.gen_range(1..=max_tiles);
    let u = Universe::new(small_family(seed, count), biest::tiles::OrderConstants::DESK);
    let n = u.len();
    let a = [gaussian(&mut rng, n), gaussian(&mut rng, n), gaussian(&mut rng, n)];
    (u, a)
}

fn mass(a: &[Complex64], ps: impl IntoIterator<Item = usize>) -> f64 {
    ps.into_iter().map(|p| a[p].norm_sqr()).sum()
}

fn subsets(items: &[usize]) -> impl Iterator<Item = Vec<usize>> + '_ {
    (1u64..(1u64 << items.len())).map(move |m| {
        items
            .iter()
            .enumerate()
            .filter(|(k, _)| m >> k & 1 == 1)
            .map(|(_, &p)| p)
            .collect()
    })
}

/// `size_j` squared, over every subset of every down-set.
pub fn size_sq_oracle(u: &Universe, a: &[Complex64], j: usize) -> f64 {
    let mut best = 0.0f64;
    for t in 0..u.len() {
        for i in (0..3).filter(|&i| i != j) {
            let down: Vec<usize> = (0..u.len()).filter(|&p| u.le(i, p, t)).collect();
            for s in subsets(&down) {
                best = best.max(mass(a, s) / u.len_of(t));
            }
        }
    }
    best
}

/// `energy_j` squared: heaviest subset with pairwise disjoint `P_j`.
pub fn energy_sq_oracle(u: &Universe, a: &[Complex64], j: usize) -> f64 {
    let all: Vec<usize> = (0..u.len()).collect();
    let mut best = 0.0f64;
    for s in subsets(&all) {
        let ok = s
            .iter()
            .enumerate()
            .all(|(k, &p)| s[k + 1..].iter().all(|&q| tiles_disjoint(&u.tile(p, j), &u.tile(q, j))));
        if ok {
            best = best.max(mass(a, s));
        }
    }
    best
}

struct Cand {
    tree: Tree,
    mask: u64,
    w: f64,
    /// Largest density over sub-trees of every type.
    dens: f64,
    len: f64,
}

fn pow4(n: i32) -> f64 {
    (2.0 * n as f64).exp2()
}

/// Exact modified energy by exhaustive search over levels, candidate trees
/// and member-disjoint collections.
pub fn modified_energy_oracle(u: &Universe, a: &[Complex64], j: usize) -> f64 {
    let n_tiles = u.len();
    let mut cands = Vec::new();
    for t in 0..n_tiles {
        for i in (0..3).filter(|&i| i != j) {
            let down: Vec<usize> = (0..n_tiles).filter(|&p| u.le(i, p, t)).collect();
            for s in subsets(&down) {
                let mut dens = 0.0f64;
                for tp in s.iter().copied().chain([t]) {
                    for k in 0..3 {
                        let sub: Vec<usize> = s.iter().copied().filter(|&p| u.le(k, p, tp)).collect();
                        if !sub.is_empty() {
                            dens = dens.max(mass(a, sub) / u.len_of(tp));
                        }
                    }
                }
                cands.push(Cand {
                    mask: s.iter().map(|&p| 1u64 << p).sum(),
                    w: mass(a, s.iter().copied()),
                    tree: Tree::new(t, i, s),
                    dens,
                    len: u.len_of(t),
                });
            }
        }
    }
    let mut best = 0.0f64;
    for n in -64..=64 {
        let level: Vec<&Cand> = cands
            .iter()
            .filter(|c| c.w > 0.0 && c.w >= pow4(n) * c.len && c.dens <= pow4(n + 1))
            .collect();
        if level.is_empty() {
            continue;
        }
        let mut chosen: Vec<Tree> = Vec::new();
        #[allow(clippy::too_many_arguments)]
        fn search(
            u: &Universe,
            j: usize,
            level: &[&Cand],
            from: usize,
            used: u64,
            chosen: &mut Vec<Tree>,
            cur: &mut f64,
            best: &mut f64,
        ) {
            *best = best.max(*cur);
            for k in from..level.len() {
                let c = level[k];
                if c.mask & used != 0 {
                    continue;
                }
                chosen.push(c.tree.clone());
                if check_strongly_disjoint(u, chosen, j).is_ok() {
                    *cur += c.len;
                    search(u, j, level, k + 1, used | c.mask, chosen, cur, best);
                    *cur -= c.len;
                }
                chosen.pop();
            }
        }
        let mut lvl_best = 0.0;
        search(u, j, &level, 0, 0, &mut chosen, &mut 0.0, &mut lvl_best);
        best = best.max((n as f64).exp2() * f64::sqrt(lvl_best));
    }
    best
}
