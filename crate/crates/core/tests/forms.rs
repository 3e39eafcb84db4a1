use biest::exact::{Exact, Rat, Segment};
use biest::forms::*;
use biest::grid::{DyadicSet, Shift, ShiftedInterval};
use biest::packets::{inner, inner_functions, random_band_limited, SampledFunction, Window};
use biest::tiles::{OrderConstants, TriTile};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const Z: Complex64 = Complex64 { re: 0.0, im: 0.0 };

fn window() -> Window {
    Window::new(6, 1024)
}

fn tri(scale: i32, pos: i64, freq: [i64; 3]) -> TriTile {
    TriTile { scale, pos, freq, shift: [Shift::ZERO; 3] }
}

fn random_fn(rng: &mut ChaCha8Rng) -> SampledFunction {
    random_band_limited(window(), -256..=255, rng)
}

fn instance(seed: u64) -> (PacketFamily, PacketFamily) {
    let spec = InstanceSpec::default();
    (p_family(&spec, seed).unwrap(), q_family(&spec, seed).unwrap())
}

fn close(a: Complex64, b: Complex64, scale: f64) -> bool {
    (a - b).norm() <= 1e-10 * scale.max(1.0)
}

#[test]
fn bht_coefficient_examples() {
    assert_eq!(lambda_bht_coeffs(&[], [&[], &[], &[]]).unwrap(), Z);
    let one = [Complex64::new(1.0, 0.0)];
    assert_eq!(lambda_bht_coeffs(&[1.0], [&one, &one, &one]).unwrap(), Complex64::new(1.0, 0.0));
    let two = [Complex64::new(2.0, 0.0)];
    // |I| = 4 halves the value.
    assert_eq!(lambda_bht_coeffs(&[4.0], [&two, &one, &one]).unwrap(), Complex64::new(1.0, 0.0));
    assert!(lambda_bht_coeffs(&[1.0], [&one, &[], &one]).is_err());
}

#[test]
fn bht_is_multilinear() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (p, _) = instance(11);
    assert!(!p.is_empty());
    let f: Vec<SampledFunction> = (0..4).map(|_| random_fn(&mut rng)).collect();
    let base = lambda_bht(&p, [&f[0], &f[1], &f[2]]).unwrap();
    let s = Complex64::new(2.0, -0.5);
    for slot in 0..3 {
        let mut g: Vec<&SampledFunction> = vec![&f[0], &f[1], &f[2]];
        let scaled = f[slot].scale(s);
        g[slot] = &scaled;
        let v = lambda_bht(&p, [g[0], g[1], g[2]]).unwrap();
        assert!(close(v, s * base, base.norm()));
        let sum = f[slot].add(&f[3]).unwrap();
        g[slot] = &sum;
        let v = lambda_bht(&p, [g[0], g[1], g[2]]).unwrap();
        let mut h = [&f[0], &f[1], &f[2]];
        h[slot] = &f[3];
        let other = lambda_bht(&p, [h[0], h[1], h[2]]).unwrap();
        assert!(close(v, base + other, base.norm() + other.norm()));
    }
    let empty = p.restrict(&[]);
    assert_eq!(lambda_bht(&empty, [&f[0], &f[1], &f[2]]).unwrap(), Z);
}

#[test]
fn b_p2_single_tile() {
    let w = window();
    let q = PacketFamily::new(w, vec![tri(1, 0, [0, 2, 4])]).unwrap();
    let f2 = q.packets[0][0].func.clone();
    let f3 = q.packets[0][1].func.clone();
    // ω_{Q₃} = [2, 2.5) ⊆ [2, 3).
    let p2 = biest::tiles::Tile { scale: 0, pos: 0, freq: 2, shift: Shift::ZERO };
    let b = b_p2(&p2, &q, &f2, &f3).unwrap();
    let want = q.packets[0][2].func.scale(Complex64::new(2f64.sqrt().recip(), 0.0));
    let diff = b.add(&want.scale(Complex64::new(-1.0, 0.0))).unwrap();
    assert!(diff.norm() < 1e-10);
    // Output spectrum lies inside (9/10) ω_{Q₃}.
    for m in b.support() {
        let x = w.freq(m);
        assert!(x > 2.0 + 0.025 && x < 2.5 - 0.025, "bin {m} at {x}");
    }
    // No inclusion: [2, 2.5) is not inside [3, 4) nor inside [2, 2.25).
    for p2 in [
        biest::tiles::Tile { scale: 0, pos: 0, freq: 3, shift: Shift::ZERO },
        biest::tiles::Tile { scale: 2, pos: 0, freq: 8, shift: Shift::ZERO },
    ] {
        let b = b_p2(&p2, &q, &f2, &f3).unwrap();
        assert_eq!(b.norm(), 0.0);
    }
}

#[test]
fn b_p2_support_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (p, q) = instance(21);
    let (f2, f3) = (random_fn(&mut rng), random_fn(&mut rng));
    for t in &p.tiles {
        let p2 = t.tile(1);
        let b = b_p2(&p2, &q, &f2, &f3).unwrap();
        let allowed: Vec<Segment> = q
            .tiles
            .iter()
            .map(|s| s.tile(2).frequency())
            .filter(|s| p2.frequency().contains(s))
            .collect();
        for m in b.support() {
            let x = p.window.freq_exact(m);
            assert!(allowed.iter().any(|s| s.contains_point(x)), "bin {m} outside every ω_Q3 ⊆ ω_P2");
        }
    }
}

/// Direct evaluation: B_{P₂} assembled from packet functions in the sample
/// domain, then paired with φ_{P₂}.
fn lambda_biest_direct(p: &PacketFamily, q: &PacketFamily, f: [&SampledFunction; 4]) -> Complex64 {
    let mut total = Z;
    for (k, t) in p.tiles.iter().enumerate() {
        let mut b = SampledFunction::zero(p.window);
        for (m, s) in q.tiles.iter().enumerate() {
            if !t.tile(1).frequency().contains(&s.tile(2).frequency()) {
                continue;
            }
            let w = inner(f[1], &q.packets[m][0]).unwrap() * inner(f[2], &q.packets[m][1]).unwrap() / s.len().sqrt();
            b = b.add(&q.packets[m][2].func.scale(w)).unwrap();
        }
        let pb = inner_functions(&b, &p.packets[k][1].func).unwrap();
        total += inner(f[0], &p.packets[k][0]).unwrap() * pb * inner(f[3], &p.packets[k][2]).unwrap() / t.len().sqrt();
    }
    total
}

#[test]
fn biest_matches_direct_and_rearranged() {
    let consts = OrderConstants::DESK;
    let mut inclusions = 0;
    for seed in 0..6 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let (p, q) = instance(seed);
        let f: Vec<SampledFunction> = (0..4).map(|_| random_fn(&mut rng)).collect();
        let fr = [&f[0], &f[1], &f[2], &f[3]];
        let v = lambda_biest(&p, &q, fr, &consts).unwrap();
        let direct = lambda_biest_direct(&p, &q, fr);
        let re = rearrange_biest(&p, &q, fr).unwrap();
        let terms: f64 = (0..q.len())
            .map(|k| (re.a[0][k] * re.a[1][k] * re.a[2][k]).norm() / re.lens[k].sqrt())
            .sum();
        assert!((v - direct).norm() <= 1e-10 * terms.max(v.norm()).max(1.0), "seed {seed}: {v} vs {direct}");
        assert!((v - re.value()).norm() <= 1e-10 * terms.max(1.0), "seed {seed}: {v} vs {}", re.value());
        inclusions += p
            .tiles
            .iter()
            .flat_map(|t| q.tiles.iter().map(move |s| t.tile(1).frequency().contains(&s.tile(2).frequency())))
            .filter(|&b| b)
            .count();
    }
    assert!(inclusions > 0, "instances never exercise the inclusion");
}

#[test]
fn biest_is_multilinear_and_vanishes_on_empty_q() {
    let consts = OrderConstants::DESK;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (p, q) = instance(2);
    let f: Vec<SampledFunction> = (0..4).map(|_| random_fn(&mut rng)).collect();
    let base = lambda_biest(&p, &q, [&f[0], &f[1], &f[2], &f[3]], &consts).unwrap();
    let s = Complex64::new(-1.5, 0.25);
    for slot in 0..4 {
        let scaled = f[slot].scale(s);
        let mut g: Vec<&SampledFunction> = f.iter().collect();
        g[slot] = &scaled;
        let v = lambda_biest(&p, &q, [g[0], g[1], g[2], g[3]], &consts).unwrap();
        assert!(close(v, s * base, base.norm()));
    }
    let empty = q.restrict(&[]);
    assert_eq!(lambda_biest(&p, &empty, [&f[0], &f[1], &f[2], &f[3]], &consts).unwrap(), Z);
}

#[test]
fn biest_rejects_non_rank1() {
    let w = window();
    let p = PacketFamily::new(w, vec![tri(0, 0, [0, 2, 4]), tri(0, 0, [0, 3, 5])]).unwrap();
    let q = PacketFamily::new(w, vec![tri(1, 0, [0, 2, 4])]).unwrap();
    let f = SampledFunction::constant(w, Complex64::new(1.0, 0.0));
    let err = lambda_biest(&p, &q, [&f, &f, &f, &f], &OrderConstants::DESK).unwrap_err();
    assert!(matches!(err, FormError::Rank1 { which: "P", .. }));
    let err = lambda_biest(&q, &p, [&f, &f, &f, &f], &OrderConstants::DESK).unwrap_err();
    assert!(matches!(err, FormError::Rank1 { which: "Q", .. }));
}

#[test]
fn rightform_a3_examples() {
    let w = window();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (f3, f4) = (random_fn(&mut rng), random_fn(&mut rng));
    let q = PacketFamily::new(w, vec![tri(1, 0, [0, 2, 4])]).unwrap();
    // ω_{P₁} = [-4, -3) does not contain ω_{Q₃} = [2, 2.5).
    let p = PacketFamily::new(w, vec![tri(0, 1, [-4, 0, 3])]).unwrap();
    assert_eq!(rightform_a3(&q.packets[0][2], &p, &f3, &f4).unwrap(), Z);
    // ω_{P₁} = [2, 3) contains it; the value is the single term of the sum.
    let p = PacketFamily::new(w, vec![tri(0, 1, [2, 0, 3])]).unwrap();
    let v = rightform_a3(&q.packets[0][2], &p, &f3, &f4).unwrap();
    let pair = inner_functions(&p.packets[0][0].func, &q.packets[0][2].func).unwrap();
    let want = inner(&f3, &p.packets[0][1]).unwrap() * inner(&f4, &p.packets[0][2]).unwrap() * pair;
    assert!(close(v, want, want.norm()));
    assert!(pair.norm() > 1e-3);
    // Full rearrangement on random instances agrees with the literal coefficients.
    let (p, q) = instance(4);
    let all = rightform_a3_all(&p, &q, &f3, &f4).unwrap();
    for (k, pk) in q.packets.iter().enumerate() {
        assert!(close(all[k], rightform_a3(&pk[2], &p, &f3, &f4).unwrap(), all[k].norm()));
    }
}

#[test]
fn packet_pairing_is_plancherel() {
    let (p, q) = instance(8);
    for a in &p.packets {
        for b in &q.packets {
            let direct = inner_functions(&a[0].func, &b[2].func).unwrap();
            assert!((packet_pairing(&a[0], &b[2]) - direct).norm() < 1e-10);
        }
    }
}

fn set(parts: &[(i32, i64)]) -> MeasurableSetSpec {
    MeasurableSetSpec::from_dyadic(parts)
}

/// Dyadic maximal function of `E` at `x` over scales `2^-4 .. 2^14`.
fn maximal_oracle(e: &MeasurableSetSpec, x: f64) -> f64 {
    (-4..=14)
        .map(|j| {
            let len = (j as f64).exp2();
            let lo = (x / len).floor() * len;
            let hit: f64 = e
                .set
                .intervals()
                .iter()
                .map(|iv| {
                    let (a, b) = iv.segment().to_f64();
                    (b.min(lo + len) - a.max(lo)).max(0.0)
                })
                .sum();
            hit / len
        })
        .fold(0.0, f64::max)
}

fn check_against_oracle(sets: &[MeasurableSetSpec], pivot: usize, c: f64, omega: &DyadicSet) {
    let pm = sets[pivot].measure_f64();
    for cell in -64..(600 * 8) {
        let x = (cell as f64 + 0.5) / 8.0;
        let inside = sets.iter().any(|e| maximal_oracle(e, x) > c * e.measure_f64() / pm);
        let xe = Exact::from_f64_floor(x);
        assert_eq!(omega.contains_point(xe), inside, "x = {x}");
    }
}

#[test]
fn exceptional_set_examples() {
    let unit = set(&[(0, 0)]);
    let all = vec![unit.clone(), unit.clone(), unit.clone(), unit.clone()];
    let ex = exceptional_set(&all, 2, Rat::from_integer(2)).unwrap();
    assert!(ex.omega.is_empty());
    assert_eq!(ex.major, unit);

    // Small E₀ against a large pivot: Ω = {Mχ_{E₀} > 1/8} = [0, 4).
    let sets = vec![unit.clone(), set(&[(6, 0)])];
    let ex = exceptional_set(&sets, 1, Rat::from_integer(8)).unwrap();
    assert_eq!(ex.omega, DyadicSet::new([ShiftedInterval::dyadic(2, 0)]));
    check_against_oracle(&sets, 1, 8.0, &ex.omega);
    assert!(ex.major.is_subset(&sets[1]));
    assert_eq!(ex.major.measure(), Exact::from_int(60));

    // C too small: the superlevel set swallows the pivot.
    let err = exceptional_set(&sets, 1, Rat::new(1, 8)).unwrap_err();
    assert!(matches!(err, FormError::Majority { .. }));
    assert!(exceptional_set(&sets, 1, Rat::from_integer(0)).is_err());
}

#[test]
fn exceptional_set_random_sets() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut nonempty = 0;
    for _ in 0..10 {
        let sets: Vec<MeasurableSetSpec> = (0..4)
            .map(|_| {
                let m = rng.gen_range(-2..=5);
                MeasurableSetSpec::random(&mut rng, 9, -2, m).unwrap()
            })
            .collect();
        let pivot = rng.gen_range(0..4);
        let ex = exceptional_set(&sets, pivot, Rat::from_integer(8)).unwrap();
        check_against_oracle(&sets, pivot, 8.0, &ex.omega);
        assert!(ex.major.is_subset(&sets[pivot]));
        let (maj, pm) = (ex.major.measure(), sets[pivot].measure());
        assert!(maj + maj >= pm);
        nonempty += usize::from(!ex.omega.is_empty());
    }
    assert!(nonempty > 0);
}

#[test]
fn strata_partition_tiles() {
    let omega = DyadicSet::new([ShiftedInterval::dyadic(3, 0), ShiftedInterval::dyadic(2, 2)]);
    let tiles: Vec<TriTile> = (0..16).map(|pos| tri(0, pos, [0, 1, 2])).chain((0..4).map(|pos| tri(2, pos, [0, 1, 2]))).collect();
    let strata = stratify_k(&tiles, &omega);
    let mut seen: Vec<usize> = strata.values().flatten().copied().collect();
    seen.sort_unstable();
    assert_eq!(seen, (0..tiles.len()).collect::<Vec<_>>());
    // Oracle: Ω = [0, 12), so dist(I, R∖Ω) = min(lo, 12 - hi) for I ⊆ Ω.
    for (k, members) in &strata {
        for &i in members {
            let (a, b) = tiles[i].spatial().to_f64();
            let d = if b <= 12.0 { a.min(12.0 - b) } else { 0.0 };
            let r = 1.0 + d / (b - a);
            assert!((*k as f64).exp2() <= r && r < ((*k + 1) as f64).exp2(), "tile {i} k={k} r={r}");
        }
    }
    assert_eq!(stratify_k(&tiles, &DyadicSet::empty()).keys().copied().collect::<Vec<_>>(), vec![0]);
}

#[test]
fn vertex_table_and_exponents() {
    let r = |s: &str| parse_rat(s).unwrap();
    assert_eq!(vertex(2).unwrap(), [r("1/2"), r("1"), r("1"), r("-3/2")]);
    for i in 1..=12 {
        let v = vertex(i).unwrap();
        assert_eq!(v.iter().copied().sum::<Rat>(), Rat::from_integer(1));
        assert_eq!(v.iter().filter(|a| **a < Rat::from_integer(0)).count(), 1);
    }
    assert!(vertex(13).is_err());
    let t = AdmissibleTuple::parse(&["-0.45", "0.93", "0.04", "0.48"]).unwrap();
    let e = exponents_for_vertex(&t, 9).unwrap();
    assert_eq!(e.theta(), [r("1/10"), r("43/50"), r("1/25")]);
    assert_eq!(e.split(), Some(Rat::new(12, 13)));
    assert_eq!(e.pivot, 1);
    let bht = AdmissibleTuple::parse(&["0.98", "0.51", "-0.49"]).unwrap();
    let e = exponents_bht(&bht).unwrap();
    assert_eq!(e.theta(), [r("0.96"), r("0.02"), r("0.02")]);
    // Pivot symmetry: swapping α₃, α₄ moves a pivot-4 tuple to pivot 3.
    let a = AdmissibleTuple::parse(&["0.51", "0.98", "0.975", "-1.465"]).unwrap();
    let b = AdmissibleTuple::parse(&["0.51", "0.98", "-1.465", "0.975"]).unwrap();
    let (ea, eb) = (exponents_for_vertex(&a, 2).unwrap(), exponents_for_vertex(&b, 3).unwrap());
    assert_eq!(ea.theta(), eb.theta());
    assert_eq!(ea.split(), eb.split());
    assert!(matches!(
        AdmissibleTuple::parse(&["0.5", "0.5", "0.5", "-0.4"]),
        Err(FormError::Inadmissible(_))
    ));
}

#[test]
fn random_indicator_lives_on_set() {
    let w = window();
    let e = set(&[(3, 1), (0, 40)]);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let f = random_indicator_function(w, &e, &mut rng);
    for (n, z) in f.samples().iter().enumerate() {
        let x = w.x(n);
        let inside = (8.0..16.0).contains(&x) || (40.0..41.0).contains(&x);
        assert!((z.norm() - if inside { 1.0 } else { 0.0 }).abs() < 1e-12, "x={x}");
    }
}
