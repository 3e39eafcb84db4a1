//! Whitney covers of the cone symbols on the plane `ξ₁+ξ₂+ξ₃ = 0`, their
//! smooth partition of unity, per-cube Fourier splitting and the
//! four-variable multiplier built from two such splittings.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exact::{Dilation, Exact, Segment};
use crate::grid::{dsatur, Shift, ShiftedCube, ShiftedInterval};
use crate::packets::bump;
use crate::tiles::OrderConstants;

#[derive(Debug, Error, PartialEq)]
pub enum WhitneyError {
    #[error("sandwich constants must satisfy 1 <= c_lo < c_hi")]
    Constants,
    #[error("sandwich window [{lo:.3}, {hi:.3}] too narrow for a scale partition")]
    Narrow { lo: f64, hi: f64 },
    #[error("invalid cover box")]
    Box,
    #[error("truncation must be at least 1")]
    Truncation,
    #[error("point within {0} of the singular line")]
    TooClose(f64),
}

/// Line removed from the plane.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SingularSet {
    /// `2ξ₁ = ξ₂`, with indicator region `2ξ₁ < ξ₂`.
    Double,
    /// `ξ₁ = ξ₂`, with indicator region `ξ₁ < ξ₂`.
    Diagonal,
}

impl SingularSet {
    /// Direction of the line inside the plane.
    pub fn direction(self) -> [i128; 3] {
        match self {
            SingularSet::Double => [1, 2, -3],
            SingularSet::Diagonal => [1, 1, -2],
        }
    }

    /// Linear form negative exactly on the indicator region.
    pub fn form(self) -> [i128; 3] {
        match self {
            SingularSet::Double => [2, -1, 0],
            SingularSet::Diagonal => [1, -1, 0],
        }
    }

    pub fn indicator(self, xi: [f64; 3]) -> f64 {
        let f = self.form();
        if f[0] as f64 * xi[0] + f[1] as f64 * xi[1] < 0.0 {
            1.0
        } else {
            0.0
        }
    }

    /// Euclidean distance from a point of `R³` to the line.
    pub fn distance(self, xi: [f64; 3]) -> f64 {
        let d = self.direction().map(|v| v as f64);
        let dd: f64 = d.iter().map(|v| v * v).sum();
        let t = (xi[0] * d[0] + xi[1] * d[1] + xi[2] * d[2]) / dd;
        (0..3).map(|i| (xi[i] - t * d[i]).powi(2)).sum::<f64>().sqrt()
    }

    /// Unit vectors `(along, across)` spanning the plane, with `across`
    /// pointing into the indicator region.
    pub fn plane_frame(self) -> ([f64; 3], [f64; 3]) {
        let d = self.direction().map(|v| v as f64);
        let n = [1.0, 1.0, 1.0];
        let mut e = [n[1] * d[2] - n[2] * d[1], n[2] * d[0] - n[0] * d[2], n[0] * d[1] - n[1] * d[0]];
        let f = self.form().map(|v| v as f64);
        if f[0] * e[0] + f[1] * e[1] > 0.0 {
            e = e.map(|v| -v);
        }
        let nd = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        let ne = e.iter().map(|v| v * v).sum::<f64>().sqrt();
        (d.map(|v| v / nd), e.map(|v| v / ne))
    }
}

/// Sandwich `c_lo·diam(Q) ≤ dist(Q, line) ≤ c_hi·diam(Q)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WhitneyConstants {
    pub c_lo: i64,
    pub c_hi: i64,
}

impl WhitneyConstants {
    pub const NOMINAL: WhitneyConstants = WhitneyConstants { c_lo: 1000, c_hi: 100_000 };
    pub const DESK: WhitneyConstants = WhitneyConstants { c_lo: 4, c_hi: 16 };

    pub fn validate(&self) -> Result<(), WhitneyError> {
        if self.c_lo < 1 || self.c_lo >= self.c_hi {
            return Err(WhitneyError::Constants);
        }
        Ok(())
    }
}

/// Support fraction of the per-cube bumps.
pub const CORE: f64 = 0.8;
/// Support fraction of the per-axis cutoffs multiplying the series.
pub const CUTOFF: f64 = 0.9;

/// Cubes are kept when contained in `[-R, R]³` and their scale lies in
/// `[j_min, j_max]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverBox {
    pub half_width: Exact,
    pub j_min: i32,
    pub j_max: i32,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverSpec {
    pub set: SingularSet,
    pub consts: WhitneyConstants,
    pub bx: CoverBox,
    pub order: OrderConstants,
}

impl CoverSpec {
    pub fn new(set: SingularSet, consts: WhitneyConstants, bx: CoverBox, order: OrderConstants) -> Result<Self, WhitneyError> {
        consts.validate()?;
        if bx.half_width <= Exact::ZERO || bx.j_min > bx.j_max {
            return Err(WhitneyError::Box);
        }
        for j in [bx.j_min, bx.j_max] {
            if !(crate::exact::MIN_SCALE..=crate::exact::MAX_SCALE).contains(&j) {
                return Err(WhitneyError::Box);
            }
        }
        ScalePartition::new(consts)?;
        Ok(CoverSpec { set, consts, bx, order })
    }

    /// Membership of a cube in the cover with these parameters.
    pub fn admits(&self, q: &ShiftedCube) -> bool {
        if q.dim() != 3 || q.j < self.bx.j_min || q.j > self.bx.j_max {
            return false;
        }
        let (lo, hi) = bounds(q);
        let r = self.bx.half_width.units();
        if (0..3).any(|i| lo[i] < -r || hi[i] > r) {
            return false;
        }
        if !meets_plane(lo, hi) || !on_region_side(self.set, lo, hi) {
            return false;
        }
        sandwich(self.consts, q.j, cube_line_dist_sq(lo, hi, self.set.direction()))
    }
}

fn bounds(q: &ShiftedCube) -> ([i128; 3], [i128; 3]) {
    let mut lo = [0; 3];
    let mut hi = [0; 3];
    for (i, a) in q.axes().enumerate() {
        lo[i] = a.lo().units();
        hi[i] = a.hi().units();
    }
    (lo, hi)
}

fn meets_plane(lo: [i128; 3], hi: [i128; 3]) -> bool {
    lo.iter().sum::<i128>() <= 0 && hi.iter().sum::<i128>() >= 0
}

/// Side of the line occupied by the cube's trace on the plane, read off a
/// vertex of the trace polygon.
fn on_region_side(set: SingularSet, lo: [i128; 3], hi: [i128; 3]) -> bool {
    let f = set.form();
    for free in 0..3 {
        let (a, b) = ((free + 1) % 3, (free + 2) % 3);
        for xa in [lo[a], hi[a]] {
            for xb in [lo[b], hi[b]] {
                let x = -(xa + xb);
                if x >= lo[free] && x <= hi[free] {
                    let mut p = [0i128; 3];
                    p[free] = x;
                    p[a] = xa;
                    p[b] = xb;
                    let v: i128 = (0..3).map(|i| f[i] * p[i]).sum();
                    if v != 0 {
                        return v < 0;
                    }
                }
            }
        }
    }
    false
}

/// Distance from `x` to `[lo, hi]`.
fn gap(x: i128, lo: i128, hi: i128) -> i128 {
    if x < lo {
        lo - x
    } else if x > hi {
        x - hi
    } else {
        0
    }
}

/// Exact squared distance from the closed box `[lo, hi]` to the line `R·d`,
/// returned as `(num, den)` in squared units.
pub fn cube_line_dist_sq(lo: [i128; 3], hi: [i128; 3], d: [i128; 3]) -> (i128, i128) {
    // The squared distance to t·d is convex and piecewise quadratic in t with
    // breakpoints where t·d_i meets a face.
    let mut brk: Vec<(i128, i128)> = Vec::new();
    for i in 0..3 {
        if d[i] == 0 {
            continue;
        }
        for e in [lo[i], hi[i]] {
            brk.push(if d[i] > 0 { (e, d[i]) } else { (-e, -d[i]) });
        }
    }
    let at = |num: i128, den: i128| -> (i128, i128) {
        // f(num/den) = Σ gap(num·d_i, [lo_i·den, hi_i·den])² / den².
        let s: i128 = (0..3).map(|i| gap(num * d[i], lo[i] * den, hi[i] * den).pow(2)).sum();
        (s, den * den)
    };
    let less = |a: (i128, i128), b: (i128, i128)| a.0 * b.1 < b.0 * a.1;
    let mut best: Option<(i128, i128)> = None;
    let mut consider = |c: (i128, i128)| {
        if best.is_none_or(|b| less(c, b)) {
            best = Some(c);
        }
    };
    for &(n, m) in &brk {
        consider(at(n, m));
    }
    brk.sort_by(|a, b| (a.0 * b.1).cmp(&(b.0 * a.1)));
    brk.dedup_by(|a, b| a.0 * b.1 == b.0 * a.1);
    // Interior representative of each piece, including the two unbounded ones.
    type Frac = (i128, i128);
    let mut reps: Vec<(Frac, Option<Frac>, Option<Frac>)> = Vec::new();
    let first = brk[0];
    let last = *brk.last().expect("breakpoints");
    reps.push(((first.0 - first.1, first.1), None, Some(first)));
    for w in brk.windows(2) {
        let (a, b) = (w[0], w[1]);
        reps.push(((a.0 * b.1 + b.0 * a.1, 2 * a.1 * b.1), Some(a), Some(b)));
    }
    reps.push(((last.0 + last.1, last.1), Some(last), None));
    for (rep, left, right) in reps {
        let mut sdd = 0i128;
        let mut sde = 0i128;
        let mut see = 0i128;
        for i in 0..3 {
            let x = rep.0 * d[i];
            let e = if x < lo[i] * rep.1 {
                lo[i]
            } else if x > hi[i] * rep.1 {
                hi[i]
            } else {
                continue;
            };
            sdd += d[i] * d[i];
            sde += d[i] * e;
            see += e * e;
        }
        if sdd == 0 {
            consider((0, 1));
            continue;
        }
        let t = (sde, sdd);
        let inside = left.is_none_or(|l| less(l, t)) && right.is_none_or(|r| less(t, r));
        if inside {
            consider((sdd * see - sde * sde, sdd));
        }
    }
    best.expect("at least one candidate")
}

/// Exact sandwich test for a cube of side `2^j` and squared distance `dist`.
pub fn sandwich(c: WhitneyConstants, j: i32, dist: (i128, i128)) -> bool {
    let s = Exact::pow2(j).units();
    let bound = |k: i64| (k as i128).checked_mul(k as i128).and_then(|k2| k2.checked_mul(3 * s)).and_then(|v| v.checked_mul(s));
    let (num, den) = dist;
    let floor = num / den;
    let ceil = (num + den - 1) / den;
    let lower_ok = match bound(c.c_lo) {
        Some(b) => floor >= b,
        None => false,
    };
    let upper_ok = match bound(c.c_hi) {
        Some(b) => ceil <= b,
        None => true,
    };
    lower_ok && upper_ok
}

/// Clause of the cube rank-one condition broken by an ordered pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CubeViolation {
    pub first: usize,
    pub second: usize,
    pub clause: u8,
}

fn segments(q: &ShiftedCube) -> [Segment; 3] {
    [0, 1, 2].map(|a| q.axis(a).segment())
}

/// Checks the ordered pair `(Q, Q′)` with `Q ≠ Q′`; returns the first broken
/// clause.
pub fn cube_rank1_pair(q: &ShiftedCube, qp: &ShiftedCube, c: &OrderConstants) -> Option<u8> {
    pair_clause(&segments(q), q.side().units(), &segments(qp), qp.side().units(), c)
}

fn pair_clause(a: &[Segment; 3], side_a: i128, b: &[Segment; 3], side_b: i128, c: &OrderConstants) -> Option<u8> {
    if (0..3).all(|i| a[i].intersects(&b[i])) {
        return Some(1);
    }
    if (0..3).any(|i| a[i] == b[i]) {
        return Some(2);
    }
    let three = Dilation::int(c.c_order);
    let big = Dilation::int(c.c_lesssim);
    for j in 0..3 {
        if !b[j].dilated_subset(three, &a[j], three) {
            continue;
        }
        if (0..3).any(|i| !b[i].dilated_subset(big, &a[i], big)) {
            return Some(3);
        }
        if side_b < c.c_scale * side_a && (0..3).any(|i| i != j && b[i].dilated_intersects(three, &a[i], three)) {
            return Some(4);
        }
    }
    None
}

/// Candidate pairs: every broken clause needs overlapping triples in some
/// axis, so a sweep per axis finds them all.
fn candidate_pairs(cubes: &[ShiftedCube], c: &OrderConstants) -> Vec<(usize, usize)> {
    let three = Dilation::int(c.c_order);
    let spans: Vec<[(i128, i128); 3]> = cubes
        .iter()
        .map(|q| {
            segments(q).map(|s| {
                let half = (s.hi.units() - s.lo.units()) * (three.num - 1) / 2;
                (s.lo.units() - half, s.hi.units() + half)
            })
        })
        .collect();
    let mut out = Vec::new();
    for axis in 0..3 {
        let mut order: Vec<usize> = (0..cubes.len()).collect();
        order.sort_by_key(|&i| spans[i][axis].0);
        let mut active: Vec<usize> = Vec::new();
        for &i in &order {
            let lo = spans[i][axis].0;
            active.retain(|&k| spans[k][axis].1 > lo);
            for &k in &active {
                // Report each pair once, on its first overlapping axis.
                let first = (0..3).find(|&ax| spans[i][ax].0 < spans[k][ax].1 && spans[k][ax].0 < spans[i][ax].1);
                if first == Some(axis) {
                    out.push((i.min(k), i.max(k)));
                }
            }
            active.push(i);
        }
    }
    out
}

pub fn check_cube_rank1(cubes: &[ShiftedCube], c: &OrderConstants) -> Result<(), CubeViolation> {
    for (x, y) in candidate_pairs(cubes, c) {
        for (p, q) in [(x, y), (y, x)] {
            if let Some(clause) = cube_rank1_pair(&cubes[p], &cubes[q], c) {
                return Err(CubeViolation { first: p, second: q, clause });
            }
        }
    }
    Ok(())
}

/// Splits a cube family into rank-one classes by coloring the conflict graph.
pub fn rank1_classes(cubes: &[ShiftedCube], c: &OrderConstants) -> Vec<Vec<usize>> {
    let segs: Vec<[Segment; 3]> = cubes.iter().map(segments).collect();
    let sides: Vec<i128> = cubes.iter().map(|q| q.side().units()).collect();
    let mut adj = vec![Vec::new(); cubes.len()];
    for (x, y) in candidate_pairs(cubes, c) {
        if pair_clause(&segs[x], sides[x], &segs[y], sides[y], c).is_some()
            || pair_clause(&segs[y], sides[y], &segs[x], sides[x], c).is_some()
        {
            adj[x].push(y);
            adj[y].push(x);
        }
    }
    let colors = dsatur(&adj);
    let n = colors.iter().max().map_or(0, |m| m + 1);
    let mut out = vec![Vec::new(); n];
    for (i, col) in colors.into_iter().enumerate() {
        out[col].push(i);
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WhitneyCover {
    pub sigma: [Shift; 3],
    pub spec: CoverSpec,
    pub cubes: Vec<ShiftedCube>,
    /// Rank-one classes; their count is the refinement factor.
    pub classes: Vec<Vec<usize>>,
}

impl WhitneyCover {
    pub fn refinement_factor(&self) -> usize {
        self.classes.len()
    }

    pub fn class(&self, c: usize) -> Vec<ShiftedCube> {
        self.classes[c].iter().map(|&i| self.cubes[i].clone()).collect()
    }

    pub fn dump(&self) -> serde_json::Value {
        serde_json::json!({
            "sigma": self.sigma.map(|s| s.to_string()),
            "cubes": self.cubes.iter().map(|q| serde_json::json!({
                "j": q.j, "k1": q.k[0], "k2": q.k[1], "k3": q.k[2],
            })).collect::<Vec<_>>(),
            "constants": {
                "c_lo": self.spec.consts.c_lo,
                "c_hi": self.spec.consts.c_hi,
                "core": CORE,
                "cutoff": CUTOFF,
                "refinement_factor": self.refinement_factor(),
            },
        })
    }
}

/// Indices `k` of mesh intervals at `(j, σ)` with `lo ≥ a` and `hi ≤ b`.
fn index_range(j: i32, s: Shift, a: Exact, b: Exact) -> std::ops::RangeInclusive<i64> {
    let mut k0 = ShiftedInterval::containing(j, s, a).k;
    if mesh(j, k0, s).lo() < a {
        k0 += 1;
    }
    let mut k1 = ShiftedInterval::containing(j, s, b).k;
    if mesh(j, k1, s).hi() > b {
        k1 -= 1;
    }
    k0..=k1
}

fn mesh(j: i32, k: i64, s: Shift) -> ShiftedInterval {
    crate::grid::mesh_interval(j, k, s)
}

pub fn whitney_cover(sigma: [Shift; 3], spec: &CoverSpec) -> WhitneyCover {
    let r = spec.bx.half_width;
    let mut cubes = Vec::new();
    for j in spec.bx.j_min..=spec.bx.j_max {
        let r1 = index_range(j, sigma[0], -r, r);
        let r2 = index_range(j, sigma[1], -r, r);
        let r3 = index_range(j, sigma[2], -r, r);
        for k1 in r1.clone() {
            let a = mesh(j, k1, sigma[0]);
            for k2 in r2.clone() {
                let b = mesh(j, k2, sigma[1]);
                // Third axis restricted to cubes meeting the plane.
                let top = -(a.lo() + b.lo());
                let bottom = -(a.hi() + b.hi());
                let mut k3lo = ShiftedInterval::containing(j, sigma[2], bottom).k;
                if mesh(j, k3lo, sigma[2]).lo() == bottom {
                    k3lo -= 1;
                }
                let k3hi = ShiftedInterval::containing(j, sigma[2], top).k;
                for k3 in k3lo.max(*r3.start())..=k3hi.min(*r3.end()) {
                    let q = ShiftedCube::new(j, vec![k1, k2, k3], sigma.to_vec());
                    if spec.admits(&q) {
                        cubes.push(q);
                    }
                }
            }
        }
    }
    let classes = rank1_classes(&cubes, &spec.order);
    WhitneyCover {
        sigma,
        spec: *spec,
        cubes,
        classes,
    }
}

/// All 27 shifts.
pub fn all_shifts() -> Vec<[Shift; 3]> {
    let mut out = Vec::with_capacity(27);
    for a in Shift::ALL {
        for b in Shift::ALL {
            for c in Shift::ALL {
                out.push([a, b, c]);
            }
        }
    }
    out
}

/// Smooth partition over dyadic scales driven by `log2 dist(ξ, line)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalePartition {
    /// Center offset: scale `j` is used around `dist ≈ 2^{j+a}`.
    pub a: f64,
    /// Half-width of the support in `log2` units.
    pub w: f64,
}

impl ScalePartition {
    pub fn new(c: WhitneyConstants) -> Result<Self, WhitneyError> {
        let lo = ((c.c_lo + 1) as f64 * 3f64.sqrt()).log2();
        let hi = (c.c_hi as f64 * 3f64.sqrt()).log2();
        // Slightly inside the window so every weighted cube passes the exact sandwich.
        let w = (0.49 * (hi - lo)).min(1.0);
        if w <= 0.5 {
            return Err(WhitneyError::Narrow { lo, hi });
        }
        Ok(ScalePartition { a: 0.5 * (lo + hi), w })
    }

    fn profile(&self, x: f64) -> f64 {
        bump(x / self.w)
    }

    pub fn weight(&self, j: i32, dist: f64) -> f64 {
        let x = dist.log2() - j as f64 - self.a;
        let num = self.profile(x);
        if num == 0.0 {
            return 0.0;
        }
        let den: f64 = (-2..=2).map(|m| self.profile(x - m as f64)).sum();
        num / den
    }

    /// Scales with nonzero weight at this distance.
    pub fn scales(&self, dist: f64) -> impl Iterator<Item = i32> + '_ {
        let c = dist.log2() - self.a;
        let lo = (c - self.w).floor() as i32;
        let hi = (c + self.w).ceil() as i32;
        (lo..=hi).filter(move |&j| self.weight(j, dist) > 0.0)
    }
}

/// Bump on the `CORE` fraction of a unit cell, normalized so translates by
/// `1/3` sum to one.
pub fn shift_profile(t: f64) -> f64 {
    let g = |u: f64| bump(u / (CORE / 2.0));
    let num = g(t);
    if num == 0.0 {
        return 0.0;
    }
    let den: f64 = (-3..=3).map(|m| g(t - m as f64 / 3.0)).sum();
    num / den
}

/// Cutoff equal to 1 on the `CORE` fraction and vanishing outside `CUTOFF`.
pub fn series_cutoff(t: f64) -> f64 {
    let a = t.abs();
    let (inner, outer) = (CORE / 2.0, CUTOFF / 2.0);
    if a <= inner {
        return 1.0;
    }
    if a >= outer {
        return 0.0;
    }
    let h = |x: f64| if x <= 0.0 { 0.0 } else { (-1.0 / x).exp() };
    let s = (outer - a) / (outer - inner);
    h(s) / (h(s) + h(1.0 - s))
}

type CubeKey = (i32, [i64; 3], [u8; 3]);

fn key(q: &ShiftedCube) -> CubeKey {
    (q.j, [q.k[0], q.k[1], q.k[2]], [q.shift[0].thirds(), q.shift[1].thirds(), q.shift[2].thirds()])
}

/// Smooth partition of unity attached to the covers of all 27 shifts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymbolFamily {
    pub spec: CoverSpec,
    pub scales: ScalePartition,
}

impl SymbolFamily {
    pub fn new(spec: CoverSpec) -> Result<Self, WhitneyError> {
        Ok(SymbolFamily {
            scales: ScalePartition::new(spec.consts)?,
            spec,
        })
    }

    /// `φ_Q(ξ)` for any point of `R³`.
    pub fn phi(&self, q: &ShiftedCube, xi: [f64; 3]) -> f64 {
        let s = q.side().to_f64();
        let mut v = 1.0;
        for (i, a) in q.axes().enumerate() {
            v *= shift_profile((xi[i] - a.center().to_f64()) / s);
            if v == 0.0 {
                return 0.0;
            }
        }
        v * self.scales.weight(q.j, self.spec.set.distance(xi))
    }

    /// Cover cubes of all shifts containing `ξ`, at every scale of the box.
    pub fn cubes_at(&self, xi: [f64; 3]) -> Vec<ShiftedCube> {
        let x = xi.map(Exact::from_f64_floor);
        let mut out = Vec::new();
        for j in self.spec.bx.j_min..=self.spec.bx.j_max {
            for s in all_shifts() {
                let k = (0..3).map(|i| ShiftedInterval::containing(j, s[i], x[i]).k).collect();
                let q = ShiftedCube::new(j, k, s.to_vec());
                if self.spec.admits(&q) {
                    out.push(q);
                }
            }
        }
        out
    }

    /// Cover cubes with nonzero `φ_Q(ξ)`, with those values.
    pub fn terms(&self, xi: [f64; 3]) -> Vec<(ShiftedCube, f64)> {
        let dist = self.spec.set.distance(xi);
        let x = xi.map(Exact::from_f64_floor);
        let mut out = Vec::new();
        for j in self.scales.scales(dist) {
            if j < self.spec.bx.j_min || j > self.spec.bx.j_max {
                continue;
            }
            for s in all_shifts() {
                let k = (0..3).map(|i| ShiftedInterval::containing(j, s[i], x[i]).k).collect();
                let q = ShiftedCube::new(j, k, s.to_vec());
                let v = self.phi(&q, xi);
                if v != 0.0 && self.spec.admits(&q) {
                    out.push((q, v));
                }
            }
        }
        out
    }

    /// `Σ_σ Σ_Q φ_Q(ξ)`.
    pub fn partition_sum(&self, xi: [f64; 3]) -> f64 {
        self.terms(xi).iter().map(|t| t.1).sum()
    }

    /// Whether `φ_Q` can be nonzero somewhere on `Q`.
    fn may_be_active(&self, q: &ShiftedCube) -> bool {
        let (lo, hi) = bounds(q);
        let (num, den) = cube_line_dist_sq(lo, hi, self.spec.set.direction());
        let unit = Exact::from_int(1).units() as f64;
        let dmin = (num as f64 / den as f64).sqrt() / unit;
        let dmax = dmin + 3f64.sqrt() * q.side().to_f64();
        let c = q.j as f64 + self.scales.a;
        dmax.log2() > c - self.scales.w && dmin.max(f64::MIN_POSITIVE).log2() < c + self.scales.w
    }
}

/// Fourier splitting of a symbol family, with per-cube coefficients computed
/// on demand on a `grid³` sample lattice.
#[derive(Debug)]
pub struct SymbolSeries {
    pub family: SymbolFamily,
    pub k_max: usize,
    pub grid: usize,
    cache: Mutex<HashMap<CubeKey, Option<Arc<Vec<Complex64>>>>>,
}

/// Default sample count per axis for the coefficient quadrature.
pub const DEFAULT_GRID: usize = 32;

pub fn fourier_split(family: SymbolFamily, k_max: usize, grid: usize) -> Result<SymbolSeries, WhitneyError> {
    if k_max < 1 || grid < 2 * k_max + 1 {
        return Err(WhitneyError::Truncation);
    }
    Ok(SymbolSeries {
        family,
        k_max,
        grid,
        cache: Mutex::new(HashMap::new()),
    })
}

impl SymbolSeries {
    fn width(&self) -> usize {
        2 * self.k_max + 1
    }

    fn index(&self, k: [i64; 3]) -> usize {
        let w = self.width() as i64;
        let o = self.k_max as i64;
        (((k[0] + o) * w + (k[1] + o)) * w + (k[2] + o)) as usize
    }

    /// `c_{Q,k}` for `|k|∞ ≤ k_max`, or `None` when `φ_Q` vanishes.
    pub fn coefficients(&self, q: &ShiftedCube) -> Option<Arc<Vec<Complex64>>> {
        let key = key(q);
        if let Some(v) = self.cache.lock().expect("cache lock").get(&key) {
            return v.clone();
        }
        let v = self.compute(q);
        self.cache.lock().expect("cache lock").insert(key, v.clone());
        v
    }

    fn compute(&self, q: &ShiftedCube) -> Option<Arc<Vec<Complex64>>> {
        if !self.family.may_be_active(q) {
            return None;
        }
        let g = self.grid;
        let w = self.width();
        let km = self.k_max as i64;
        let s = q.side().to_f64();
        let lo: Vec<f64> = q.axes().map(|a| a.lo().to_f64()).collect();
        let pts = |i: usize, n: usize| lo[i] + (n as f64 + 0.5) * s / g as f64;
        let centers: Vec<f64> = q.axes().map(|a| a.center().to_f64()).collect();
        let prof: Vec<Vec<f64>> = (0..3)
            .map(|i| (0..g).map(|n| shift_profile((pts(i, n) - centers[i]) / s)).collect())
            .collect();
        let set = self.family.spec.set;
        let mut samples = vec![0.0f64; g * g * g];
        let mut any = false;
        for a in 0..g {
            for b in 0..g {
                let pab = prof[0][a] * prof[1][b];
                if pab == 0.0 {
                    continue;
                }
                for c in 0..g {
                    if prof[2][c] == 0.0 {
                        continue;
                    }
                    let d = set.distance([pts(0, a), pts(1, b), pts(2, c)]);
                    let v = pab * prof[2][c] * self.family.scales.weight(q.j, d);
                    any |= v != 0.0;
                    samples[(a * g + b) * g + c] = v;
                }
            }
        }
        if !any {
            return None;
        }
        let tw: Vec<Complex64> = (0..w as i64)
            .flat_map(|k| {
                (0..g).map(move |n| Complex64::from_polar(1.0, -2.0 * PI * (k - km) as f64 * (n as f64 + 0.5) / g as f64))
            })
            .collect();
        let e = |k: usize, n: usize| tw[k * g + n];
        // Separable transform, one axis at a time.
        let mut s1 = vec![Complex64::new(0.0, 0.0); g * g * w];
        for a in 0..g {
            for b in 0..g {
                for k3 in 0..w {
                    s1[(a * g + b) * w + k3] = (0..g).map(|c| e(k3, c) * samples[(a * g + b) * g + c]).sum();
                }
            }
        }
        let mut s2 = vec![Complex64::new(0.0, 0.0); g * w * w];
        for a in 0..g {
            for k2 in 0..w {
                for k3 in 0..w {
                    s2[(a * w + k2) * w + k3] = (0..g).map(|b| e(k2, b) * s1[(a * g + b) * w + k3]).sum();
                }
            }
        }
        let norm = 1.0 / (g * g * g) as f64;
        let mut out = vec![Complex64::new(0.0, 0.0); w * w * w];
        for k1 in 0..w {
            for k2 in 0..w {
                for k3 in 0..w {
                    out[(k1 * w + k2) * w + k3] = norm * (0..g).map(|a| e(k1, a) * s2[(a * w + k2) * w + k3]).sum::<Complex64>();
                }
            }
        }
        Some(Arc::new(out))
    }

    /// `η_{Q,k,i}(t)`: the `k_i`-th character on `Q_i` times the cutoff.
    pub fn eta(q: &ShiftedCube, k: i64, axis: usize, t: f64) -> Complex64 {
        let a = q.axis(axis);
        let s = a.len().to_f64();
        let cut = series_cutoff((t - a.center().to_f64()) / s);
        if cut == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        Complex64::from_polar(cut, 2.0 * PI * k as f64 * (t - a.lo().to_f64()) / s)
    }

    /// Truncated series of `φ_Q` at `ξ`, with `|k|∞ ≤ k`.
    pub fn cube_value(&self, q: &ShiftedCube, xi: [f64; 3], k: usize) -> f64 {
        assert!(k <= self.k_max, "truncation above the computed range");
        let Some(coef) = self.coefficients(q) else {
            return 0.0;
        };
        let k = k as i64;
        let etas: Vec<Vec<Complex64>> = (0..3)
            .map(|i| (-k..=k).map(|m| Self::eta(q, m, i, xi[i])).collect())
            .collect();
        if etas.iter().any(|e| e.iter().all(|z| z.norm_sqr() == 0.0)) {
            return 0.0;
        }
        let mut acc = Complex64::new(0.0, 0.0);
        for (a, k1) in (-k..=k).enumerate() {
            for (b, k2) in (-k..=k).enumerate() {
                let e12 = etas[0][a] * etas[1][b];
                for (c, k3) in (-k..=k).enumerate() {
                    acc += coef[self.index([k1, k2, k3])] * e12 * etas[2][c];
                }
            }
        }
        acc.re
    }

    /// Global coefficient envelope `c_k = max_Q |c_{Q,k}|` over the cubes
    /// computed so far, as `(|k|∞, max)` pairs.
    pub fn envelope(&self) -> Vec<(usize, f64)> {
        let w = self.width();
        let km = self.k_max as i64;
        let mut best = vec![0.0f64; self.k_max + 1];
        for c in self.cache.lock().expect("cache lock").values().flatten() {
            for k1 in 0..w {
                for k2 in 0..w {
                    for k3 in 0..w {
                        let r = [k1, k2, k3].iter().map(|&x| (x as i64 - km).unsigned_abs()).max().expect("3") as usize;
                        best[r] = best[r].max(c[(k1 * w + k2) * w + k3].norm());
                    }
                }
            }
        }
        best.into_iter().enumerate().collect()
    }

    pub fn cached_cubes(&self) -> usize {
        self.cache.lock().expect("cache lock").values().filter(|v| v.is_some()).count()
    }
}

/// Reconstruction of the indicator at a point of the plane, truncated at
/// `|k|∞ ≤ k`.
pub fn reconstruct_chi(series: &SymbolSeries, xi: [f64; 3], k: usize, delta: f64) -> Result<f64, WhitneyError> {
    if series.family.spec.set.distance(xi) < delta * (1.0 - 1e-12) {
        return Err(WhitneyError::TooClose(delta));
    }
    Ok(series
        .family
        .cubes_at(xi)
        .iter()
        .map(|q| series.cube_value(q, xi, k))
        .sum())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub xi: [f64; 3],
    pub value: f64,
    pub error: f64,
}

/// Probe points on the plane at distances in `[d_lo, d_hi]` from the line,
/// on both sides, with `n_along × n_across` points per side.
pub fn probe_grid(set: SingularSet, along: f64, d_lo: f64, d_hi: f64, n_along: usize, n_across: usize) -> Vec<[f64; 3]> {
    let (t, e) = set.plane_frame();
    let mut out = Vec::new();
    for side in [1.0, -1.0] {
        for a in 0..n_along {
            let s = if n_along == 1 { 0.0 } else { -along + 2.0 * along * a as f64 / (n_along - 1) as f64 };
            for b in 0..n_across {
                let d = if n_across == 1 { d_lo } else { d_lo + (d_hi - d_lo) * b as f64 / (n_across - 1) as f64 };
                out.push([0, 1, 2].map(|i| s * t[i] + side * d * e[i]));
            }
        }
    }
    out
}

pub fn probe(series: &SymbolSeries, points: &[[f64; 3]], k: usize, delta: f64) -> Result<Vec<ProbeRow>, WhitneyError> {
    points
        .iter()
        .map(|&xi| {
            let value = reconstruct_chi(series, xi, k, delta)?;
            Ok(ProbeRow {
                xi,
                value,
                error: (value - series.family.spec.set.indicator(xi)).abs(),
            })
        })
        .collect()
}

pub fn probe_csv(rows: &[ProbeRow]) -> String {
    let mut s = String::from("xi1,xi2,xi3,value,error\n");
    for r in rows {
        s.push_str(&format!("{},{},{},{},{}\n", r.xi[0], r.xi[1], r.xi[2], r.value, r.error));
    }
    s
}

/// Evaluation of each factor family: exact partition or truncated series.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymbolMode {
    Exact,
    Series(usize),
}

/// Four-variable multiplier from a `2ξ₁<ξ₂` family and a `ξ₁<ξ₂` family.
#[derive(Debug)]
pub struct MPrime {
    pub outer: SymbolSeries,
    pub inner: SymbolSeries,
    pub mode: SymbolMode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MPrimeValue {
    pub value: f64,
    pub pairs: usize,
    /// Nonzero pairs dropped because `-Q′₃ ⊄ Q₂`.
    pub excluded: usize,
}

pub fn build_mprime(outer: SymbolSeries, inner: SymbolSeries, mode: SymbolMode) -> MPrime {
    MPrime { outer, inner, mode }
}

impl MPrime {
    fn factor(&self, series: &SymbolSeries, xi: [f64; 3]) -> Vec<(ShiftedCube, f64)> {
        match self.mode {
            SymbolMode::Exact => series.family.terms(xi),
            SymbolMode::Series(k) => series
                .family
                .cubes_at(xi)
                .into_iter()
                .map(|q| {
                    let v = series.cube_value(&q, xi, k);
                    (q, v)
                })
                .filter(|t| t.1 != 0.0)
                .collect(),
        }
    }

    /// `m′` at a point with `ξ₁+ξ₂+ξ₃+ξ₄ = 0`.
    pub fn eval(&self, xi: [f64; 4]) -> MPrimeValue {
        let a = self.factor(&self.outer, [xi[0], xi[1] + xi[2], xi[3]]);
        let b = self.factor(&self.inner, [xi[1], xi[2], xi[0] + xi[3]]);
        let mut value = 0.0;
        let mut pairs = 0;
        let mut excluded = 0;
        for (q, va) in &a {
            let q2 = q.axis(1).segment();
            for (qp, vb) in &b {
                if q2.contains(&qp.axis(2).segment().reflect()) {
                    value += va * vb;
                    pairs += 1;
                } else {
                    excluded += 1;
                }
            }
        }
        MPrimeValue { value, pairs, excluded }
    }

    /// Same multiplier with indices 1 and 3 exchanged.
    pub fn eval_swapped(&self, xi: [f64; 4]) -> MPrimeValue {
        self.eval([xi[2], xi[1], xi[0], xi[3]])
    }
}

/// Narrow cone `|ξ₃−ξ₂| ≤ |ξ₁ − (ξ₂+ξ₃)/2| / c_hi`.
pub fn in_narrow_cone(xi: [f64; 4], c_hi: i64) -> bool {
    (xi[2] - xi[1]).abs() * c_hi as f64 <= (xi[0] - 0.5 * (xi[1] + xi[2])).abs()
}

/// Distance from `(ξ₁,ξ₂,ξ₃)` to the diagonal `{(λ,λ,λ)}`.
pub fn diagonal_distance(xi: [f64; 4]) -> f64 {
    let m = (xi[0] + xi[1] + xi[2]) / 3.0;
    ((xi[0] - m).powi(2) + (xi[1] - m).powi(2) + (xi[2] - m).powi(2)).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivativeProbe {
    pub dist: f64,
    /// `max |∂m′| · dist` over the three free coordinate directions.
    pub first: f64,
    /// `max |∂²m′| · dist²` over pure second differences.
    pub second: f64,
}

/// Finite-difference derivative magnitudes of `m′` along `ξ₁, ξ₂, ξ₃` with
/// `ξ₄` slaved to the hyperplane, step `h·dist`.
pub fn derivative_probe(m: &MPrime, xi: [f64; 4], h: f64) -> DerivativeProbe {
    let dist = diagonal_distance(xi);
    let step = h * dist;
    let at = |i: usize, t: f64| {
        let mut p = xi;
        p[i] += t;
        p[3] = -(p[0] + p[1] + p[2]);
        m.eval(p).value
    };
    let mut first = 0.0f64;
    let mut second = 0.0f64;
    let center = m.eval(xi).value;
    for i in 0..3 {
        let (plus, minus) = (at(i, step), at(i, -step));
        first = first.max(((plus - minus) / (2.0 * step)).abs() * dist);
        second = second.max(((plus - 2.0 * center + minus) / (step * step)).abs() * dist * dist);
    }
    DerivativeProbe { dist, first, second }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn u(x: f64) -> i128 {
        Exact::from_f64_floor(x).units()
    }

    #[test]
    fn distance_to_line_simple() {
        // Unit cube at (2,0,0)-(3,1,1) against the x-axis: squared distance 0.
        let d = cube_line_dist_sq([u(2.0), 0, 0], [u(3.0), u(1.0), u(1.0)], [1, 0, 0]);
        assert_eq!(d.0, 0);
        // Cube [1,2]³ against the line t(1,-1,0): minimum 3 + 2t² at t = 0.
        let (n, m) = cube_line_dist_sq([u(1.0); 3], [u(2.0); 3], [1, -1, 0]);
        let unit = u(1.0) as f64;
        assert!(((n as f64 / m as f64) / (unit * unit) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn profiles_sum_to_one() {
        for i in 0..50 {
            let t = -1.0 + i as f64 * 0.0413;
            let s: f64 = (-6..=6).map(|m| shift_profile(t - m as f64 / 3.0)).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        let p = ScalePartition::new(WhitneyConstants::DESK).unwrap();
        for i in 0..50 {
            let d = 0.01 * 1.07f64.powi(i);
            let s: f64 = (-20..5).map(|j| p.weight(j, d)).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn frame_points_into_region() {
        for set in [SingularSet::Double, SingularSet::Diagonal] {
            let (t, e) = set.plane_frame();
            assert!((t.iter().sum::<f64>()).abs() < 1e-12 && (e.iter().sum::<f64>()).abs() < 1e-12);
            assert_eq!(set.indicator(e.map(|v| 0.3 * v)), 1.0);
            assert!((set.distance(e.map(|v| 0.3 * v)) - 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn cube_pair_clauses() {
        let c = OrderConstants::DESK;
        let q = ShiftedCube::new(0, vec![0, 0, 0], vec![Shift::ZERO; 3]);
        let same_axis = ShiftedCube::new(0, vec![0, 5, 9], vec![Shift::ZERO; 3]);
        assert_eq!(cube_rank1_pair(&q, &same_axis, &c), Some(2));
        assert_eq!(cube_rank1_pair(&q, &q.clone(), &c), Some(1));
        let far = ShiftedCube::new(0, vec![100, 200, 300], vec![Shift::ZERO; 3]);
        assert_eq!(cube_rank1_pair(&q, &far, &c), None);
    }
}
