use biest::exact::Exact;
use biest::grid::{Shift, ShiftedCube};
use biest::tiles::OrderConstants;
use biest::whitney::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn spec(set: SingularSet, half: Exact, j_min: i32, j_max: i32) -> CoverSpec {
    CoverSpec::new(
        set,
        WhitneyConstants::DESK,
        CoverBox { half_width: half, j_min, j_max },
        OrderConstants::DESK,
    )
    .unwrap()
}

/// Squared distance from a box to the line `R·d`, by ternary search on the
/// convex function `t ↦ dist(t·d, box)²`.
fn box_line_dist_sq_f64(lo: [f64; 3], hi: [f64; 3], d: [f64; 3]) -> f64 {
    let f = |t: f64| {
        (0..3)
            .map(|i| {
                let x = t * d[i];
                let g = if x < lo[i] { lo[i] - x } else if x > hi[i] { x - hi[i] } else { 0.0 };
                g * g
            })
            .sum::<f64>()
    };
    let (mut a, mut b) = (-100.0, 100.0);
    for _ in 0..300 {
        let m1 = a + (b - a) / 3.0;
        let m2 = b - (b - a) / 3.0;
        if f(m1) <= f(m2) {
            b = m2;
        } else {
            a = m1;
        }
    }
    f(0.5 * (a + b))
}

#[test]
fn exact_distance_matches_float_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let unit = Exact::from_int(1).units() as f64;
    for _ in 0..400 {
        let j = rng.gen_range(-4..=1);
        let k: Vec<i64> = (0..3).map(|_| rng.gen_range(-20..20)).collect();
        let s: Vec<Shift> = (0..3).map(|_| Shift::new(rng.gen_range(0..3)).unwrap()).collect();
        let q = ShiftedCube::new(j, k, s);
        let lo = [0, 1, 2].map(|a| q.axis(a).lo().units());
        let hi = [0, 1, 2].map(|a| q.axis(a).hi().units());
        for set in [SingularSet::Double, SingularSet::Diagonal] {
            let d = set.direction();
            let (num, den) = cube_line_dist_sq(lo, hi, d);
            let exact = num as f64 / den as f64 / (unit * unit);
            let oracle = box_line_dist_sq_f64(
                lo.map(|v| v as f64 / unit),
                hi.map(|v| v as f64 / unit),
                d.map(|v| v as f64),
            );
            assert!((exact - oracle).abs() <= 1e-9 * (1.0 + oracle), "{q:?} {exact} {oracle}");
        }
    }
}

#[test]
fn cover_matches_brute_force_filter() {
    let sp = spec(SingularSet::Double, Exact::from_ratio(1, 2).unwrap(), -6, -5);
    let sigma = [Shift::ZERO, Shift::THIRD, Shift::TWO_THIRDS];
    let cover = whitney_cover(sigma, &sp);
    let mut brute = Vec::new();
    for j in -6..=-5 {
        let m = 1i64 << (-j);
        for k1 in -m - 2..=m + 2 {
            for k2 in -m - 2..=m + 2 {
                for k3 in -m - 2..=m + 2 {
                    let q = ShiftedCube::new(j, vec![k1, k2, k3], sigma.to_vec());
                    if sp.admits(&q) {
                        brute.push(q);
                    }
                }
            }
        }
    }
    let mut got = cover.cubes.clone();
    got.sort_by_key(|q| (q.j, q.k.clone()));
    brute.sort_by_key(|q| (q.j, q.k.clone()));
    assert!(!got.is_empty());
    assert_eq!(got, brute);
}

#[test]
fn cover_cubes_satisfy_sandwich_and_rank1_classes() {
    let sp = spec(SingularSet::Diagonal, Exact::from_ratio(1, 2).unwrap(), -6, -5);
    let cover = whitney_cover([Shift::ZERO; 3], &sp);
    let unit = Exact::from_int(1).units() as f64;
    for q in &cover.cubes {
        let lo = [0, 1, 2].map(|a| q.axis(a).lo().to_f64());
        let hi = [0, 1, 2].map(|a| q.axis(a).hi().to_f64());
        let dist = box_line_dist_sq_f64(lo, hi, [1.0, 1.0, -2.0]).sqrt();
        let diam = 3f64.sqrt() * q.side().units() as f64 / unit;
        assert!(dist >= 4.0 * diam * (1.0 - 1e-9) && dist <= 16.0 * diam * (1.0 + 1e-9));
        assert!(lo.iter().sum::<f64>() <= 0.0 && hi.iter().sum::<f64>() >= 0.0);
    }
    let total: usize = cover.classes.iter().map(Vec::len).sum();
    assert_eq!(total, cover.cubes.len());
    for c in 0..cover.refinement_factor() {
        assert!(check_cube_rank1(&cover.class(c), &sp.order).is_ok());
    }
}

#[test]
fn cover_avoids_line_neighbourhood() {
    let sp = spec(SingularSet::Double, Exact::from_ratio(1, 2).unwrap(), -6, -5);
    let cover = whitney_cover([Shift::ZERO; 3], &sp);
    // No cube of side 2^-5 or finer can come within 4·√3·2^-6 of the line.
    for q in &cover.cubes {
        let c = [0, 1, 2].map(|a| q.axis(a).center().to_f64());
        assert!(SingularSet::Double.distance(c) > 4.0 * 3f64.sqrt() / 64.0);
    }
}

#[test]
fn partition_reproduces_indicator() {
    let fam = SymbolFamily::new(spec(SingularSet::Double, Exact::from_int(1), -7, -4)).unwrap();
    for p in probe_grid(SingularSet::Double, 0.3, 0.25, 0.5, 5, 3) {
        let s = fam.partition_sum(p);
        assert!((s - SingularSet::Double.indicator(p)).abs() < 1e-9, "{p:?} {s}");
    }
}

#[test]
fn coefficients_are_conjugate_symmetric() {
    let fam = SymbolFamily::new(spec(SingularSet::Double, Exact::from_int(1), -7, -4)).unwrap();
    let p = probe_grid(SingularSet::Double, 0.0, 0.3, 0.3, 1, 1)[0];
    let (q, _) = fam.terms(p).into_iter().next().expect("active cube");
    let series = fourier_split(fam, 3, 16).unwrap();
    let c = series.coefficients(&q).expect("active");
    let w = 7usize;
    let idx = |k: [i64; 3]| ((k[0] + 3) as usize * w + (k[1] + 3) as usize) * w + (k[2] + 3) as usize;
    for k1 in -3..=3i64 {
        for k2 in -3..=3i64 {
            for k3 in -3..=3i64 {
                let a = c[idx([k1, k2, k3])];
                let b = c[idx([-k1, -k2, -k3])].conj();
                assert!((a - b).norm() < 1e-12, "{k1} {k2} {k3}");
            }
        }
    }
}

#[test]
fn zero_mode_error_bounded_by_tail() {
    let fam = SymbolFamily::new(spec(SingularSet::Double, Exact::from_int(1), -7, -4)).unwrap();
    let pts = probe_grid(SingularSet::Double, 0.2, 0.3, 0.4, 3, 2);
    let series = fourier_split(fam, 3, 16).unwrap();
    for p in pts {
        for q in series.family.cubes_at(p) {
            let Some(c) = series.coefficients(&q) else { continue };
            let tail: f64 = c.iter().map(|z| z.norm()).sum::<f64>() - c[c.len() / 2].norm();
            let full = series.cube_value(&q, p, 3);
            let zero = series.cube_value(&q, p, 0);
            assert!((full - zero).abs() <= tail + 1e-12);
        }
    }
}

#[test]
fn deep_points_reconstruct_indicator() {
    let fam = SymbolFamily::new(spec(SingularSet::Double, Exact::from_int(1), -7, -4)).unwrap();
    let series = fourier_split(fam, 5, DEFAULT_GRID).unwrap();
    let (_, e) = SingularSet::Double.plane_frame();
    for side in [1.0, -1.0] {
        let p = e.map(|v| side * 0.4 * v);
        let v = reconstruct_chi(&series, p, 5, 0.25).unwrap();
        let want = if side > 0.0 { 1.0 } else { 0.0 };
        assert!((v - want).abs() < 0.05, "{v}");
    }
    assert!(matches!(
        reconstruct_chi(&series, e.map(|v| 0.1 * v), 5, 0.25),
        Err(WhitneyError::TooClose(_))
    ));
}

fn mprime() -> MPrime {
    let bx = CoverBox { half_width: Exact::from_int(4), j_min: -12, j_max: -1 };
    let outer = SymbolFamily::new(CoverSpec::new(SingularSet::Double, WhitneyConstants::DESK, bx, OrderConstants::DESK).unwrap()).unwrap();
    let inner = SymbolFamily::new(CoverSpec::new(SingularSet::Diagonal, WhitneyConstants::DESK, bx, OrderConstants::DESK).unwrap()).unwrap();
    build_mprime(
        fourier_split(outer, 2, 8).unwrap(),
        fourier_split(inner, 2, 8).unwrap(),
        SymbolMode::Exact,
    )
}

#[test]
fn mprime_in_narrow_cone() {
    let m = mprime();
    for (x, want) in [([-1.0, 0.2, 0.23], 1.0), ([-1.0, 0.23, 0.2], 0.0), ([-0.7, 0.11, 0.12], 1.0)] {
        let xi = [x[0], x[1], x[2], -(x[0] + x[1] + x[2])];
        assert!(in_narrow_cone(xi, 16));
        let v = m.eval(xi);
        assert!((v.value - want).abs() < 1e-9, "{xi:?} {v:?}");
        assert_eq!(v.excluded, 0);
    }
}

#[test]
fn swapped_multiplier_permutes_arguments() {
    let m = mprime();
    let xi = [0.21, 0.2, -1.0, 0.59];
    let a = m.eval_swapped(xi);
    let b = m.eval([-1.0, 0.2, 0.21, 0.59]);
    assert_eq!(a, b);
}

#[test]
fn invalid_constants_rejected() {
    let bx = CoverBox { half_width: Exact::from_int(1), j_min: -3, j_max: -1 };
    let bad = WhitneyConstants { c_lo: 16, c_hi: 4 };
    assert!(CoverSpec::new(SingularSet::Double, bad, bx, OrderConstants::DESK).is_err());
    let fam = SymbolFamily::new(spec(SingularSet::Double, Exact::from_int(1), -3, -1)).unwrap();
    assert!(fourier_split(fam, 0, 8).is_err());
}
