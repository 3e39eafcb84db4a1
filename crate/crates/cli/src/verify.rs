//! Verification suites: each module's invariants as runtime checks on
//! seeded random instances.

use biest::decomp::*;
use biest::exact::{Dilation, Exact, Rat};
use biest::forms::*;
use biest::functionals::{energy, modified_energy, size};
use biest::grid::*;
use biest::packets::*;
use biest::tiles::*;
use biest::whitney::*;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;

pub const SUITES: [&str; 7] = ["grid", "tiles", "packets", "functionals", "decomp", "whitney", "forms"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckKind {
    /// Must hold exactly (or to floating round-off).
    Exact,
    /// A measured constant compared against its calibrated bound or trend.
    Measured,
    /// Reported only.
    Info,
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub kind: CheckKind,
    pub pass: bool,
    pub detail: Value,
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub suite: &'static str,
    pub ok: bool,
    pub checks: Vec<Check>,
}

fn check(name: &'static str, kind: CheckKind, pass: bool, detail: Value) -> Check {
    Check { name, kind, pass: pass || kind == CheckKind::Info, detail }
}

/// Calibrated bounds shared with the acceptance suite.
#[derive(serde::Deserialize)]
struct Golden {
    decay: [(u32, f64); 3],
    split_cor: f64,
}

fn golden() -> Golden {
    serde_json::from_str(include_str!("../../core/tests/golden.json")).expect("embedded calibration parses")
}

pub fn run(suite: &str, cfg: &RunConfig) -> Option<SuiteReport> {
    let (name, checks) = match suite {
        "grid" => ("grid", grid(cfg)),
        "tiles" => ("tiles", tiles(cfg)),
        "packets" => ("packets", packets(cfg)),
        "functionals" => ("functionals", functionals(cfg)),
        "decomp" => ("decomp", decomp(cfg)),
        "whitney" => ("whitney", whitney(cfg)),
        "forms" => ("forms", forms(cfg)),
        _ => return None,
    };
    Some(SuiteReport { suite: name, ok: checks.iter().all(|c| c.pass), checks })
}

fn rng_for(cfg: &RunConfig, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(cfg.seeds.start ^ salt)
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect()
}

/// Rank-1 family; crowded requests fall back to the largest feasible count.
fn family(mut opts: GenOptions) -> Vec<TriTile> {
    loop {
        match gen_rank1(&opts) {
            Ok(t) => return t,
            Err(GenError::Exhausted { got, .. }) if got > 0 && got < opts.count => opts.count = got,
            Err(_) => return Vec::new(),
        }
    }
}

/// Small multi-scale family inside a short window, so trees are nontrivial.
fn small_universe(cfg: &RunConfig, seed: u64, count: usize) -> Universe {
    let consts = cfg.order_constants();
    let opts = GenOptions {
        scale_min: 0,
        scale_max: 6,
        window_log2: 6,
        consts,
        ..GenOptions::desk(seed, count)
    };
    Universe::new(family(opts), consts)
}

fn rel_eq(x: f64, y: f64) -> bool {
    (x - y).abs() <= 1e-12 * x.abs().max(y.abs()).max(1e-300)
}

// ---------------------------------------------------------------------------

fn grid(cfg: &RunConfig) -> Vec<Check> {
    let mut out = Vec::new();

    let mut bad = Vec::new();
    let mut tested = 0;
    for j in -8..=8 {
        let sign: i128 = if j % 2 == 0 { 1 } else { -1 };
        for s in Shift::ALL {
            let offset = Rat::from_integer(sign * s.thirds() as i128);
            for k in -40..=40i64 {
                let iv = mesh_interval(j, k, s);
                let scale = Exact::pow2(-j).to_rat() * Rat::from_integer(3);
                let ok = iv.lo().to_rat() * scale - offset == Rat::from_integer(3 * k as i128)
                    && iv.hi().to_rat() * scale - offset == Rat::from_integer(3 * (k as i128 + 1));
                tested += 1;
                if !ok && bad.len() < 5 {
                    bad.push((j, k, s.thirds()));
                }
            }
        }
    }
    out.push(check("mesh_endpoints_exact", CheckKind::Exact, bad.is_empty(), json!({ "tested": tested, "failures": bad })));

    let mut bad = Vec::new();
    for j in -8..=8 {
        for s in Shift::ALL {
            for k in -40..40i64 {
                let (a, b) = (mesh_interval(j, k, s), mesh_interval(j, k + 1, s));
                let tiles = a.hi() == b.lo()
                    && a.lo() < a.hi()
                    && ShiftedInterval::containing(j, s, a.lo()).k == k
                    && ShiftedInterval::containing(j, s, Exact::midpoint(a.lo(), a.hi())).k == k;
                if !tiles && bad.len() < 5 {
                    bad.push((j, k, s.thirds()));
                }
            }
        }
    }
    out.push(check("mesh_partitions_line", CheckKind::Exact, bad.is_empty(), json!({ "failures": bad })));

    let factor = cfg.order_constants().c_scale;
    let mut rng = rng_for(cfg, 0x6e1d);
    let mut parts_seen = Vec::new();
    let mut ok = true;
    for _ in 0..cfg.seeds.count.max(10) {
        let sigma = vec![Shift::ALL[rng.gen_range(0..3)], Shift::ALL[rng.gen_range(0..3)]];
        let mut cubes: Vec<ShiftedCube> = (0..14)
            .map(|_| ShiftedCube::new(rng.gen_range(-3..=3), vec![rng.gen_range(-6..6), rng.gen_range(-6..6)], sigma.clone()))
            .collect();
        cubes.sort();
        cubes.dedup();
        match sparse_split(&cubes, factor) {
            Ok(parts) => {
                let mut back = parts.concat();
                back.sort();
                ok &= back == cubes && parts.iter().all(|p| check_sparse(p, factor).is_ok());
                parts_seen.push(parts.len());
            }
            Err(_) => ok = false,
        }
    }
    out.push(check("sparse_split_parts_are_sparse", CheckKind::Exact, ok, json!({ "factor": factor, "part_counts": parts_seen })));

    let root = cfg.window.log2_length + 20;
    let mut ok = true;
    let mut worst = Rat::from_integer(0);
    for _ in 0..cfg.seeds.count.max(10) {
        let parts: Vec<ShiftedInterval> = (0..rng.gen_range(1..6))
            .map(|_| ShiftedInterval::dyadic(rng.gen_range(-2..3), rng.gen_range(0..20)))
            .collect();
        let extra: Vec<ShiftedInterval> = (0..rng.gen_range(1..4))
            .map(|_| ShiftedInterval::dyadic(rng.gen_range(-2..3), rng.gen_range(0..20)))
            .collect();
        let e = DyadicSet::new(parts.clone());
        let bigger = DyadicSet::new(parts.into_iter().chain(extra));
        for t in 0..80 {
            let x = Exact::from_ratio(4 * t + 1, 8).expect("grid point");
            let (m, mb) = (dyadic_maximal(&e, x, root), dyadic_maximal(&bigger, x, root));
            ok &= m <= mb && mb <= Rat::from_integer(1);
            worst = worst.max(mb);
        }
    }
    out.push(check(
        "maximal_function_monotone_and_bounded",
        CheckKind::Exact,
        ok,
        json!({ "root_scale": root, "max_value": worst.to_string() }),
    ));
    out
}

// ---------------------------------------------------------------------------

fn tiles(cfg: &RunConfig) -> Vec<Check> {
    let consts = cfg.order_constants();
    let mut out = Vec::new();
    let seeds = cfg.seed_list();

    let mut violations = Vec::new();
    let mut comparable = 0usize;
    let mut lesssim_violations = Vec::new();
    for &seed in &seeds {
        let ts = family(GenOptions { sparse: false, consts, ..GenOptions::desk(seed, 20) });
        for i in 0..3 {
            let t: Vec<Tile> = ts.iter().map(|x| x.tile(i)).collect();
            for (a, x) in t.iter().enumerate() {
                if order_lt(x, x, &consts) {
                    violations.push(json!({ "seed": seed, "kind": "reflexive", "tile": a }));
                }
                for (b, y) in t.iter().enumerate() {
                    if !order_lt(x, y, &consts) {
                        continue;
                    }
                    comparable += 1;
                    if order_lt(y, x, &consts) {
                        violations.push(json!({ "seed": seed, "kind": "symmetric", "pair": [a, b] }));
                    }
                    if !order_lesssim(x, y, &consts) {
                        lesssim_violations.push(json!({ "seed": seed, "slot": i, "pair": [a, b] }));
                    }
                    for (c, z) in t.iter().enumerate() {
                        if order_lt(y, z, &consts) && !order_lt(x, z, &consts) {
                            violations.push(json!({ "seed": seed, "kind": "transitivity", "triple": [a, b, c] }));
                        }
                    }
                }
            }
        }
    }
    out.push(check(
        "lt_is_strict_partial_order",
        CheckKind::Exact,
        violations.is_empty(),
        json!({ "comparable_pairs": comparable, "violations": violations }),
    ));
    out.push(check(
        "lt_implies_lesssim",
        CheckKind::Exact,
        lesssim_violations.is_empty(),
        json!({ "comparable_pairs": comparable, "violations": lesssim_violations }),
    ));

    let two = Dilation::int(2);
    let mut bad = Vec::new();
    let mut pairs = 0usize;
    let mut trees_checked = 0usize;
    let mut geometry_bad = Vec::new();
    let mut cross = 0usize;
    for &seed in &seeds {
        let u = Universe::new(family(GenOptions { consts, ..GenOptions::desk(seed, 20) }), consts);
        for top in 0..u.len() {
            for i in 0..3 {
                let t = maximal_tree(&u, top, i);
                for &a in &t.members {
                    for &b in &t.members {
                        for j in (0..3).filter(|&j| j != i) {
                            let (x, y) = (u.tile(a, j).frequency(), u.tile(b, j).frequency());
                            pairs += 1;
                            if x != y && x.dilated_intersects(two, &y, two) {
                                bad.push(json!({ "seed": seed, "top": top, "kind": i, "pair": [a, b], "slot": j }));
                            }
                        }
                    }
                }
            }
        }
        for i in 0..3 {
            let mut trees: Vec<Tree> = Vec::new();
            for top in 0..u.len() {
                let mut cand = trees.clone();
                cand.push(maximal_tree(&u, top, i));
                if check_strongly_disjoint(&u, &cand, i).is_ok() {
                    trees = cand;
                }
            }
            trees_checked += trees.len();
            for (x, a) in trees.iter().enumerate() {
                for b in trees.iter().skip(x + 1) {
                    for &p in &a.members {
                        for &q in &b.members {
                            let (tp, tq) = (u.tile(p, i), u.tile(q, i));
                            cross += 1;
                            if tp.spatial().intersects(&tq.spatial())
                                && tp.frequency().dilated_intersects(two, &tq.frequency(), two)
                            {
                                geometry_bad.push(json!({ "seed": seed, "slot": i, "pair": [p, q] }));
                            }
                        }
                    }
                }
            }
        }
    }
    out.push(check(
        "sparse_tree_frequencies_separate",
        CheckKind::Exact,
        bad.is_empty(),
        json!({ "pairs": pairs, "violations": bad }),
    ));
    out.push(check(
        "strong_disjointness_geometry",
        CheckKind::Exact,
        geometry_bad.is_empty(),
        json!({ "trees": trees_checked, "cross_pairs": cross, "violations": geometry_bad }),
    ));
    out
}

// ---------------------------------------------------------------------------

/// Fixed packet set matching the one the decay constants were calibrated on.
fn packet_set(w: Window) -> Vec<WavePacket> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut out = Vec::new();
    let mut attempts = 0;
    while out.len() < 50 && attempts < 10_000 {
        attempts += 1;
        let scale = rng.gen_range(-1..=2);
        let positions = (1i64 << w.log2_length) >> scale.max(0) << (-scale).max(0);
        let tile = Tile {
            scale,
            pos: rng.gen_range(0..positions),
            freq: rng.gen_range(-6i64..6) << scale.max(0) >> (-scale).max(0),
            shift: Shift::ALL[rng.gen_range(0..3)],
        };
        if let Ok(p) = make_packet(w, &tile, BumpSpec::Standard) {
            out.push(p);
        }
    }
    out
}

fn packets(cfg: &RunConfig) -> Vec<Check> {
    let w = cfg.window();
    let mut out = Vec::new();
    let mut rng = rng_for(cfg, 0x9ac4);

    let f: Vec<SampledFunction> = (0..4).map(|_| random_band_limited(w, -30..=30, &mut rng)).collect();
    let s = Complex64::new(0.5, -1.5);
    let budget = cfg.budgets.direct_t;
    let trilinear = (|| -> Result<f64, PacketError> {
        let base = direct_t(&f[0], &f[1], &f[2], budget)?;
        let mut worst = 0.0f64;
        for slot in 0..3 {
            let mixed = f[slot].scale(s).add(&f[3])?;
            let mut g = [&f[0], &f[1], &f[2]];
            g[slot] = &mixed;
            let lhs = direct_t(g[0], g[1], g[2], budget)?;
            g[slot] = &f[3];
            let other = direct_t(g[0], g[1], g[2], budget)?;
            for (k, v) in lhs.spectrum().iter().enumerate() {
                worst = worst.max((v - s * base.spectrum()[k] - other.spectrum()[k]).norm());
            }
        }
        Ok(worst)
    })();
    out.push(match trilinear {
        Ok(worst) => check("direct_t_trilinear", CheckKind::Exact, worst <= 1e-10, json!({ "max_error": worst })),
        Err(e) => check("direct_t_trilinear", CheckKind::Exact, false, json!({ "error": e.to_string() })),
    });

    let set = packet_set(w);
    let support = set.iter().all(|p| p.support_inside());
    out.push(check("packet_support_inside", CheckKind::Exact, support && !set.is_empty(), json!({ "packets": set.len() })));

    let g = golden();
    let decay: Vec<Value> = g
        .decay
        .iter()
        .map(|&(m, bound)| {
            let got = set.iter().map(|p| p.decay_constant(m)).fold(0.0, f64::max);
            json!({ "m": m, "measured": got, "bound": 1.05 * bound, "pass": got <= 1.05 * bound })
        })
        .collect();
    let decay_ok = decay.iter().all(|d| d["pass"] == json!(true));
    out.push(check("decay_constants_bounded", CheckKind::Measured, decay_ok, json!({ "by_m": decay })));

    let mut mismatches = 0;
    let mut tested = 0;
    for p in set.iter().take(10) {
        let bins_per_freq = (w.length() / p.tile.len()).round() as i64;
        for step in [-1i64, 1] {
            let moved = Tile { freq: p.tile.freq + step, ..p.tile };
            let Ok(q) = make_packet(w, &moved, BumpSpec::Standard) else { continue };
            tested += 1;
            let shift = step * bins_per_freq;
            if q.amplitudes != p.amplitudes || q.first_bin != p.first_bin + shift {
                mismatches += 1;
            }
        }
    }
    out.push(check(
        "modulation_covariance",
        CheckKind::Exact,
        mismatches == 0 && tested > 0,
        json!({ "tested": tested, "mismatches": mismatches }),
    ));
    out
}

// ---------------------------------------------------------------------------

fn functionals(cfg: &RunConfig) -> Vec<Check> {
    let limit = cfg.budgets.exact_energy;
    let search = cfg.budgets.energy_search;
    let lambda = Complex64::from_polar(4.0, 0.7);
    let mut homog = Vec::new();
    let mut dominated = Vec::new();
    let mut monotone = Vec::new();
    let mut instances = 0;
    for seed in cfg.seed_list() {
        let mut rng = rng_for(cfg, seed.wrapping_mul(0x9e37_79b9));
        let u = small_universe(cfg, seed, rng.gen_range(1..=limit.min(8)));
        if u.is_empty() {
            continue;
        }
        instances += 1;
        for j in 0..3 {
            let a = gaussian(&mut rng, u.len());
            let b: Vec<Complex64> = a.iter().map(|v| v * lambda).collect();
            let me = |x: &[Complex64], uu: &Universe| modified_energy(uu, x, j, limit).value();
            let (ma, mb) = (me(&a, &u), me(&b, &u));
            let ok = rel_eq(size(&u, &b, j).value, 4.0 * size(&u, &a, j).value)
                && rel_eq(energy(&u, &b, j, search).upper, 4.0 * energy(&u, &a, j, search).upper)
                && matches!((ma, mb), (Some(x), Some(y)) if rel_eq(y, 4.0 * x));
            if !ok {
                homog.push(json!({ "seed": seed, "slot": j }));
            }
            let e = energy(&u, &a, j, search);
            if let Some(m) = ma {
                if m > e.upper * (1.0 + 1e-12) {
                    dominated.push(json!({ "seed": seed, "slot": j, "modified": m, "energy": e.upper }));
                }
                if u.len() >= 2 {
                    let keep: Vec<usize> = (0..u.len()).filter(|p| p % 2 == 0).collect();
                    let sub: Vec<Complex64> = keep.iter().map(|&p| a[p]).collect();
                    if let Some(part) = me(&sub, &u.restrict(&keep)) {
                        if part > m * (1.0 + 1e-12) {
                            monotone.push(json!({ "seed": seed, "slot": j, "sub": part, "full": m }));
                        }
                    }
                }
            }
        }
    }
    vec![
        check("homogeneity", CheckKind::Exact, homog.is_empty(), json!({ "instances": instances, "failures": homog })),
        check("energy_dominates_modified", CheckKind::Exact, dominated.is_empty(), json!({ "failures": dominated })),
        check("monotone_under_restriction", CheckKind::Exact, monotone.is_empty(), json!({ "failures": monotone })),
    ]
}

// ---------------------------------------------------------------------------

fn decomp(cfg: &RunConfig) -> Vec<Check> {
    let consts = cfg.order_constants();
    let opts = PartitionOptions { exact_limit: cfg.budgets.exact_energy, ..PartitionOptions::default() };
    let mut nondet = Vec::new();
    let mut post = Vec::new();
    let mut cover = Vec::new();
    let mut tree_bad = Vec::new();
    let mut level_bad = Vec::new();
    let mut traces = 0;
    let mut worst_cover = 0.0f64;
    for seed in cfg.seed_list() {
        let mut rng = rng_for(cfg, seed.wrapping_add(0xdec0));
        let count = rng.gen_range(5..=40);
        let u = Universe::new(family(GenOptions { consts, ..GenOptions::desk(seed, count) }), consts);
        let a = [gaussian(&mut rng, u.len()), gaussian(&mut rng, u.len()), gaussian(&mut rng, u.len())];
        let refs = [&a[0][..], &a[1][..], &a[2][..]];
        let (p, q) = match (partition(&u, refs, &opts), partition(&u, refs, &opts)) {
            (Ok(p), Ok(q)) => (p, q),
            (e, _) => {
                nondet.push(json!({ "seed": seed, "error": e.err().map(|e| e.to_string()) }));
                continue;
            }
        };
        if p != q || serde_json::to_string(&p).ok() != serde_json::to_string(&q).ok() {
            nondet.push(json!({ "seed": seed }));
        }
        let mut seen = vec![0u32; u.len()];
        for lvl in &p.levels {
            for t in &lvl.traces {
                traces += 1;
                let c = &t.post;
                if !(c.plus_left && c.plus_right && c.disjoint_up && c.disjoint_down && c.size_stop && c.size_lower) {
                    post.push(json!({ "seed": seed, "n": t.n, "j": t.j }));
                }
                let ratio = c.cover_total / (4f64).powi(t.n);
                worst_cover = worst_cover.max(ratio);
                if ratio > 64.0 {
                    cover.push(json!({ "seed": seed, "n": t.n, "j": t.j, "ratio": ratio }));
                }
            }
            for &x in &lvl.tiles {
                seen[x] += 1;
            }
            for tree in lvl.trees() {
                if !tree_form(&u, tree, refs).holds {
                    tree_bad.push(json!({ "seed": seed, "n": lvl.n, "top": tree.top }));
                }
            }
        }
        if seen.iter().any(|&c| c != 1) {
            post.push(json!({ "seed": seed, "kind": "not a partition" }));
        }
        for (n, lhs, rhs) in level_consistency(&u, refs, &p) {
            if lhs > rhs * (1.0 + 1e-12) {
                level_bad.push(json!({ "seed": seed, "n": n, "lhs": lhs, "rhs": rhs }));
            }
        }
    }
    vec![
        check("partition_deterministic", CheckKind::Exact, nondet.is_empty(), json!({ "failures": nondet })),
        check(
            "selection_postconditions_and_exhaustion",
            CheckKind::Exact,
            post.is_empty(),
            json!({ "traces": traces, "failures": post }),
        ),
        check(
            "cover_total_within_calibrated_constant",
            CheckKind::Measured,
            cover.is_empty(),
            json!({ "constant": 64, "worst_ratio": worst_cover, "failures": cover }),
        ),
        check("tree_form_bound", CheckKind::Exact, tree_bad.is_empty(), json!({ "failures": tree_bad })),
        check("level_consistency", CheckKind::Exact, level_bad.is_empty(), json!({ "failures": level_bad })),
    ]
}

// ---------------------------------------------------------------------------

/// Squared distance from a box to the line `R·d`, by ternary search on the
/// convex map `t ↦ dist(t·d, box)²`.
fn box_line_dist_sq(lo: [f64; 3], hi: [f64; 3], d: [f64; 3]) -> f64 {
    let f = |t: f64| {
        (0..3)
            .map(|i| {
                let x = t * d[i];
                let g = if x < lo[i] { lo[i] - x } else if x > hi[i] { x - hi[i] } else { 0.0 };
                g * g
            })
            .sum::<f64>()
    };
    let (mut a, mut b) = (-10.0, 10.0);
    for _ in 0..200 {
        let (m1, m2) = (a + (b - a) / 3.0, b - (b - a) / 3.0);
        if f(m1) <= f(m2) {
            b = m2;
        } else {
            a = m1;
        }
    }
    f(0.5 * (a + b))
}

fn whitney(cfg: &RunConfig) -> Vec<Check> {
    let mut out = Vec::new();
    let spec = match cfg.cover_spec(SingularSet::Double) {
        Ok(s) => s,
        Err(e) => return vec![check("cover_spec", CheckKind::Exact, false, json!({ "error": e }))],
    };
    let c = cfg.whitney_constants();
    // The structural checks use a trimmed box: the conflict graph of the
    // full cover is dense and slow to color.
    let half = spec.bx.half_width.min(Exact::from_ratio(1, 2).expect("on grid"));
    let bx = CoverBox { half_width: half, j_min: spec.bx.j_min.max(spec.bx.j_max - 2), j_max: spec.bx.j_max };
    let small = match CoverSpec::new(spec.set, c, bx, spec.order) {
        Ok(s) => s,
        Err(e) => return vec![check("cover_spec", CheckKind::Exact, false, json!({ "error": e.to_string() }))],
    };
    let d = SingularSet::Double.direction().map(|x| x as f64);
    let mut bad = Vec::new();
    let mut rank1_bad = Vec::new();
    let mut cubes = 0;
    let mut factors = Vec::new();
    for sigma in [[Shift::ZERO; 3], [Shift::THIRD, Shift::ZERO, Shift::TWO_THIRDS]] {
        let cover = whitney_cover(sigma, &small);
        cubes += cover.cubes.len();
        for q in &cover.cubes {
            let lo = [0, 1, 2].map(|a| q.axis(a).lo().to_f64());
            let hi = [0, 1, 2].map(|a| q.axis(a).hi().to_f64());
            let dist = box_line_dist_sq(lo, hi, d).sqrt();
            let diam = 3f64.sqrt() * q.side().to_f64();
            let inside = dist >= c.c_lo as f64 * diam * (1.0 - 1e-9) && dist <= c.c_hi as f64 * diam * (1.0 + 1e-9);
            let meets = lo.iter().sum::<f64>() <= 1e-12 && hi.iter().sum::<f64>() >= -1e-12;
            if !inside || !meets {
                bad.push(json!({ "j": q.j, "k": q.k, "dist": dist, "diam": diam }));
            }
        }
        let total: usize = cover.classes.iter().map(Vec::len).sum();
        if total != cover.cubes.len() {
            rank1_bad.push(json!({ "kind": "classes do not partition the cover" }));
        }
        for k in 0..cover.refinement_factor() {
            if let Err(v) = check_cube_rank1(&cover.class(k), &small.order) {
                rank1_bad.push(json!({ "class": k, "violation": format!("{v:?}") }));
            }
        }
        factors.push(cover.refinement_factor());
    }
    out.push(check(
        "cover_sandwich",
        CheckKind::Exact,
        bad.is_empty() && cubes > 0,
        json!({ "box": bx, "cubes": cubes, "failures": bad }),
    ));
    out.push(check(
        "rank1_classes",
        CheckKind::Exact,
        rank1_bad.is_empty(),
        json!({ "refinement_factors": factors, "failures": rank1_bad }),
    ));

    let k_max = cfg.whitney.k_max;
    let trend = SymbolFamily::new(spec)
        .and_then(|fam| fourier_split(fam, k_max, cfg.whitney.grid))
        .and_then(|series| {
            let points = probe_grid(SingularSet::Double, 0.3, 0.25, 0.5, 5, 3);
            (3..=k_max)
                .map(|k| {
                    let rows = probe(&series, &points, k, cfg.whitney.delta)?;
                    Ok((k, rows.iter().map(|r| r.error).fold(0.0, f64::max)))
                })
                .collect::<Result<Vec<_>, WhitneyError>>()
        });
    match trend {
        Ok(errors) => {
            let monotone = errors.windows(2).all(|w| w[1].1 <= 1.05 * w[0].1);
            out.push(check("reconstruction_error_non_increasing", CheckKind::Measured, monotone, json!({ "max_error_by_k": errors })));
            let last = errors.last().map_or(f64::NAN, |e| e.1);
            out.push(check(
                "reconstruction_error_at_k_max",
                CheckKind::Info,
                true,
                json!({ "k": k_max, "max_error": last, "below_1e-2": last < 1e-2 }),
            ));
        }
        Err(e) => out.push(check("reconstruction_error_non_increasing", CheckKind::Measured, false, json!({ "error": e.to_string() }))),
    }

    let cone = (|| -> Result<(usize, usize, usize), WhitneyError> {
        let bx = CoverBox { half_width: Exact::from_int(4), j_min: -12, j_max: -1 };
        let outer = SymbolFamily::new(CoverSpec::new(SingularSet::Double, c, bx, spec.order)?)?;
        let inner = SymbolFamily::new(CoverSpec::new(SingularSet::Diagonal, c, bx, spec.order)?)?;
        let m = build_mprime(fourier_split(outer, 2, 8)?, fourier_split(inner, 2, 8)?, SymbolMode::Exact);
        let mut rng = rng_for(cfg, 0xc0e);
        let (mut points, mut pairs, mut excluded) = (0, 0, 0);
        while points < 20 {
            let x1: f64 = rng.gen_range(-1.0..-0.5);
            let x2 = rng.gen_range(0.05..0.3);
            let x3 = x2 + rng.gen_range(-1.0..1.0) * (x1 - x2).abs() / (2.0 * c.c_hi as f64);
            let xi = [x1, x2, x3, -(x1 + x2 + x3)];
            if !in_narrow_cone(xi, c.c_hi) {
                continue;
            }
            let v = m.eval(xi);
            points += 1;
            pairs += v.pairs;
            excluded += v.excluded;
        }
        Ok((points, pairs, excluded))
    })();
    out.push(match cone {
        Ok((points, pairs, excluded)) => check(
            "cone_constraint_automatic",
            CheckKind::Exact,
            excluded == 0,
            json!({ "points": points, "pairs": pairs, "excluded": excluded }),
        ),
        Err(e) => check("cone_constraint_automatic", CheckKind::Exact, false, json!({ "error": e.to_string() })),
    });
    out
}

// ---------------------------------------------------------------------------

/// Admissible tuple closest to `point` on a 1/200 lattice of perturbations
/// for which `accept` succeeds.
pub fn near_point(point: &[Rat], accept: impl Fn(&AdmissibleTuple) -> bool) -> Option<AdmissibleTuple> {
    let steps: Vec<Rat> = (-6..=6).map(|k| Rat::new(k, 200)).collect();
    let mut best: Option<(Rat, AdmissibleTuple)> = None;
    let free = point.len() - 1;
    let mut idx = vec![0usize; free];
    loop {
        let mut alpha: Vec<Rat> = point.to_vec();
        let mut sum = Rat::from_integer(0);
        let mut norm = Rat::from_integer(0);
        for (i, &k) in idx.iter().enumerate() {
            alpha[i] += steps[k];
            sum += steps[k];
            norm += steps[k] * steps[k];
        }
        alpha[free] -= sum;
        norm += sum * sum;
        if let Ok(t) = AdmissibleTuple::new(alpha) {
            if best.as_ref().is_none_or(|(n, _)| norm < *n) && accept(&t) {
                best = Some((norm, t));
            }
        }
        let mut carry = 0;
        while carry < free {
            idx[carry] += 1;
            if idx[carry] < steps.len() {
                break;
            }
            idx[carry] = 0;
            carry += 1;
        }
        if carry == free {
            break;
        }
    }
    best.map(|b| b.1)
}

pub fn near_vertex(v: usize) -> Option<AdmissibleTuple> {
    let point = vertex(v).ok()?;
    near_point(&point, |t| exponents_for_vertex(t, v).is_ok())
}

fn forms(cfg: &RunConfig) -> Vec<Check> {
    let consts = cfg.order_constants();
    let spec = InstanceSpec { window: cfg.window(), consts, ..InstanceSpec::default() };
    let mut out = Vec::new();
    let seeds = cfg.seed_list();

    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    for &seed in seeds.iter().take(6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(100));
        let res = (|| -> Result<f64, FormError> {
            let p = p_family(&spec, seed)?;
            let q = q_family(&spec, seed)?;
            let f: Vec<SampledFunction> = (0..4).map(|_| random_band_limited(spec.window, -256..=255, &mut rng)).collect();
            let fr = [&f[0], &f[1], &f[2], &f[3]];
            let v = lambda_biest(&p, &q, fr, &consts)?;
            let re = rearrange_biest(&p, &q, fr)?;
            let terms: f64 = (0..q.len())
                .map(|k| (re.a[0][k] * re.a[1][k] * re.a[2][k]).norm() / re.lens[k].sqrt())
                .sum();
            Ok((v - re.value()).norm() / terms.max(v.norm()).max(1.0))
        })();
        match res {
            Ok(err) => {
                worst = worst.max(err);
                if err > 1e-10 {
                    failures.push(json!({ "seed": seed, "relative_error": err }));
                }
            }
            Err(e) => failures.push(json!({ "seed": seed, "error": e.to_string() })),
        }
    }
    out.push(check("reorder_identity", CheckKind::Exact, failures.is_empty(), json!({ "max_relative_error": worst, "failures": failures })));

    let bound = golden().split_cor;
    let exact_limit = cfg.budgets.exact_energy;
    let values: Vec<f64> = seeds
        .iter()
        .filter_map(|&seed| {
            let p = p_family(&spec, seed).ok()?;
            let q = q_family(&spec, seed).ok()?;
            let (up, uq) = (p.universe(consts), q.universe(consts));
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a: Vec<Complex64> = (0..q.len())
                .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            split_cor_energy(&p, &q, &up, &uq, &a, exact_limit).map(|(v, _)| v)
        })
        .collect();
    let max = values.iter().copied().fold(0.0, f64::max);
    out.push(check(
        "split_energy_bounded",
        CheckKind::Measured,
        values.iter().all(|v| v.is_finite()) && max <= bound,
        json!({ "instances": values.len(), "max": max, "bound": bound }),
    ));

    let c_omega = cfg.c_omega().unwrap_or_else(|_| Rat::from_integer(8));
    let trend = near_vertex(2).ok_or_else(|| "no admissible tuple near A2".to_string()).and_then(|alpha| {
        let spec = ExperimentSpec {
            kind: FormKind::Biest,
            alpha,
            vertex: Some(2),
            seeds: seeds.clone(),
            instance: InstanceSpec { consts, ..InstanceSpec::stratified() },
            sets: SetEnsemble::stratified(),
            c_omega,
        };
        restricted_type_experiment(&spec).map_err(|e| e.to_string())
    });
    out.push(match trend {
        Ok(report) => {
            let prof: Vec<(u32, f64)> = report.stratum_profile().into_iter().collect();
            let tail: Vec<&(u32, f64)> = prof.iter().filter(|(k, _)| *k >= 2).collect();
            let ok = tail.windows(2).all(|w| w[1].1 <= w[0].1);
            check(
                "stratum_profile_non_increasing",
                CheckKind::Measured,
                ok,
                json!({ "alpha": report.alpha, "profile": prof, "max_ratio": report.max_ratio }),
            )
        }
        Err(e) => check("stratum_profile_non_increasing", CheckKind::Measured, false, json!({ "error": e })),
    });
    out
}
