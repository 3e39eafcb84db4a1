mod common;

use biest::decomp::*;
use biest::grid::Shift;
use biest::tiles::{gen_rank1, GenOptions, OrderConstants, Tree, TriTile, Universe};
use common::*;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tri(scale: i32, pos: i64, freq: [i64; 3]) -> TriTile {
    TriTile { scale, pos, freq, shift: [Shift::ZERO; 3] }
}

fn ones(n: usize) -> Vec<Complex64> {
    vec![Complex64::new(1.0, 0.0); n]
}

fn random_tree(u: &Universe, rng: &mut ChaCha8Rng) -> Tree {
    loop {
        let top = rng.gen_range(0..u.len());
        let kind = rng.gen_range(0..3);
        let down: Vec<usize> = (0..u.len()).filter(|&p| u.le(kind, p, top)).collect();
        let members: Vec<usize> = down.iter().copied().filter(|_| rng.gen_bool(0.7)).collect();
        if !members.is_empty() {
            return Tree::new(top, kind, members);
        }
    }
}

fn tree_size_oracle(u: &Universe, a: &[Complex64], t: &Tree, j: usize) -> f64 {
    let mut best = 0.0f64;
    for top in t.members.iter().chain([&t.top]) {
        for i in (0..3).filter(|&i| i != j) {
            let m: f64 = t.members.iter().filter(|&&p| u.le(i, p, *top)).map(|&p| a[p].norm_sqr()).sum();
            best = best.max(m / u.len_of(*top));
        }
    }
    best.sqrt()
}

#[test]
fn tree_form_respects_its_bound() {
    for seed in 0..60 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = Universe::new(small_family(seed, rng.gen_range(1..=12)), OrderConstants::DESK);
        let a = [gaussian(&mut rng, u.len()), gaussian(&mut rng, u.len()), gaussian(&mut rng, u.len())];
        let t = random_tree(&u, &mut rng);
        let f = tree_form(&u, &t, [&a[0], &a[1], &a[2]]);
        let direct: Complex64 = t
            .members
            .iter()
            .map(|&p| a[0][p] * a[1][p] * a[2][p] / u.len_of(p).sqrt())
            .sum();
        assert!((f.value - direct).norm() <= 1e-12 * direct.norm().max(1.0));
        for j in 0..3 {
            let s = tree_size(&u, &a[j], &t, j);
            assert!((s - tree_size_oracle(&u, &a[j], &t, j)).abs() <= 1e-12 * s.max(1e-300));
            assert_eq!(f.sizes[j], s);
        }
        assert!(f.holds, "seed {seed}: {} > {}", f.value.norm(), f.bound);
    }
}

#[test]
fn selection_on_zero_or_tiny_data_selects_nothing() {
    let u = Universe::new(small_family(4, 6), OrderConstants::DESK);
    let active = vec![true; u.len()];
    let z = vec![Complex64::new(0.0, 0.0); u.len()];
    let tr = select_trees(&u, &z, 1, 0, &active, SelectionMode::Closed);
    assert!(tr.selections.is_empty());
    assert_eq!(tr.remainder.len(), u.len());
    // At a very negative level every threshold is out of reach.
    let tr = select_trees(&u, &ones(u.len()), 1, -30, &active, SelectionMode::Closed);
    assert!(tr.selections.is_empty());
    assert!(tr.post.plus_left && tr.post.plus_right);
}

#[test]
fn selection_postconditions_hold() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = Universe::new(
            gen_rank1(&GenOptions::desk(seed, rng.gen_range(5..=40))).unwrap(),
            OrderConstants::DESK,
        );
        let active = vec![true; u.len()];
        for j in 0..3 {
            let raw = gaussian(&mut rng, u.len());
            let (e, _) = slot_energy(&u, &raw, j, 8);
            let a: Vec<Complex64> = raw.iter().map(|v| v / e).collect();
            let s = biest::functionals::size(&u, &a, j).value;
            let n = start_level(s, 1.0);
            let tr = select_trees(&u, &a, j, n, &active, SelectionMode::Closed);
            let p = &tr.post;
            assert!(p.plus_left && p.plus_right && p.disjoint_up && p.disjoint_down, "seed {seed} slot {j}");
            assert!(p.size_stop && p.size_lower, "seed {seed} slot {j}: {p:?}");
            let covered: usize = tr.selections.iter().map(|s| s.tree.members.len() + s.companion.members.len()).sum();
            assert_eq!(covered + tr.remainder.len(), u.len());
            for s in &tr.selections {
                assert!(s.mass >= s.threshold && s.tree.is_valid(&u) && s.companion.is_valid(&u));
            }
        }
    }
}

#[test]
fn start_level_is_the_largest_admissible() {
    for (s, e) in [(1.0, 1.0), (0.3, 1.0), (1.0, 0.3), (0.25, 1.0), (7.0, 3.0)] {
        let n = start_level(s, e);
        assert!(s <= (-n as f64).exp2() * e);
        assert!(s > (-(n + 1) as f64).exp2() * e);
    }
}

#[test]
fn singleton_partition() {
    let u = Universe::new(vec![tri(0, 0, [0, 3, 6])], OrderConstants::DESK);
    let a = ones(1);
    let p = partition(&u, [&a, &a, &a], &PartitionOptions::default()).unwrap();
    assert_eq!(p.start, 0);
    assert_eq!((p.sizes, p.energies), ([1.0; 3], [1.0; 3]));
    assert_eq!(p.levels.len(), 1);
    assert_eq!(p.levels[0].tiles, vec![0]);
    let b = abstract_bound(&u, [&a, &a, &a], [1.0 / 3.0; 3], 8);
    assert_eq!(b.ratio, 1.0);
    // A lone tile has log factor ln 2.
    assert!((b.refined_ratio - 1.0 / 2f64.ln()).abs() < 1e-12);
}

#[test]
fn two_separated_tiles_share_a_level() {
    let u = Universe::new(vec![tri(0, 0, [0, 3, 6]), tri(0, 5, [0, 3, 6])], OrderConstants::DESK);
    let a = ones(2);
    let p = partition(&u, [&a, &a, &a], &PartitionOptions::default()).unwrap();
    assert_eq!(p.energies, [2f64.sqrt(); 3]);
    assert_eq!(p.levels.len(), 1);
    assert_eq!(p.levels[0].tiles, vec![0, 1]);
    assert_eq!(p.levels[0].trees().count(), 2);
}

#[test]
fn partition_errors() {
    let u = Universe::new(vec![tri(0, 0, [0, 3, 6])], OrderConstants::DESK);
    let a = ones(1);
    let z = vec![Complex64::new(0.0, 0.0)];
    let opts = PartitionOptions::default();
    assert_eq!(partition(&u, [&a, &z, &a], &opts).unwrap_err(), DecompError::ZeroSlot(1));
    assert_eq!(partition(&u, [&a, &ones(2), &a], &opts).unwrap_err(), DecompError::Length);
}

#[test]
fn random_partitions_cover_every_tile_once() {
    for seed in 0..12 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 50);
        let u = Universe::new(gen_rank1(&GenOptions::desk(seed, 40)).unwrap(), OrderConstants::DESK);
        let a = [gaussian(&mut rng, u.len()), gaussian(&mut rng, u.len()), gaussian(&mut rng, u.len())];
        let p = partition(&u, [&a[0], &a[1], &a[2]], &PartitionOptions::default()).unwrap();
        let mut seen = vec![0; u.len()];
        for (k, lvl) in p.levels.iter().enumerate() {
            assert_eq!(lvl.n, p.start + k as i32);
            for &t in &lvl.tiles {
                seen[t] += 1;
            }
            let from_trees: usize = lvl.trees().map(|t| t.members.len()).sum();
            assert_eq!(from_trees, lvl.tiles.len());
        }
        assert!(seen.iter().all(|&c| c == 1), "seed {seed}");
        for (n, lhs, rhs) in level_consistency(&u, [&a[0], &a[1], &a[2]], &p) {
            assert!(lhs <= rhs * (1.0 + 1e-12), "seed {seed} level {n}: {lhs} > {rhs}");
        }
        let b = abstract_bound(&u, [&a[0], &a[1], &a[2]], [1.0 / 3.0; 3], 8);
        assert!(b.ratio.is_finite() && b.refined_ratio.is_finite());
    }
}

#[test]
fn partition_is_deterministic() {
    let u = Universe::new(gen_rank1(&GenOptions::desk(9, 30)).unwrap(), OrderConstants::DESK);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let a = [gaussian(&mut rng, u.len()), gaussian(&mut rng, u.len()), gaussian(&mut rng, u.len())];
    let opts = PartitionOptions::default();
    let p1 = partition(&u, [&a[0], &a[1], &a[2]], &opts).unwrap();
    let p2 = partition(&u, [&a[0], &a[1], &a[2]], &opts).unwrap();
    assert_eq!(p1, p2);
    let back: Partition = serde_json::from_str(&serde_json::to_string(&p1).unwrap()).unwrap();
    assert_eq!(back, p1);
}
