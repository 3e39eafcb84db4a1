//! The trilinear and quadrilinear model forms, their rearrangement, sets of
//! finite measure with exceptional sets, and restricted-type experiments.
//!
//! Slot indices are 0-based in code (`slot 0` is the first frequency
//! coordinate); reports use 1-based indices.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exact::{Exact, Rat, Segment};
use crate::functionals::{dual_energy_witness, max_subtree_density, modified_energy, size};
use crate::grid::{dyadic_superlevel, DyadicSet, ShiftedInterval};
use crate::packets::{inner, make_packet, BumpSpec, PacketError, SampledFunction, WavePacket, Window};
use crate::tiles::{check_rank1, gen_rank1, GenError, GenOptions, OrderConstants, Rank1Violation, Tile, Tree, TriTile, Universe};

#[derive(Debug, Error)]
pub enum FormError {
    #[error(transparent)]
    Packet(#[from] PacketError),
    #[error("collection {which} is not rank 1: {violation}")]
    Rank1 { which: &'static str, violation: Rank1Violation },
    #[error("inadmissible tuple: {0}")]
    Inadmissible(String),
    #[error("exponent constraints fail: {0}")]
    Exponents(String),
    #[error("exceptional set has measure {omega} >= half of the pivot set ({pivot}); raise C")]
    Majority { omega: f64, pivot: f64 },
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error(transparent)]
    Gen(#[from] GenError),
}

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

// ---------------------------------------------------------------------------
// Packet families

/// Tri-tiles together with one wave packet per frequency slot.
#[derive(Clone, Debug)]
pub struct PacketFamily {
    pub window: Window,
    pub tiles: Vec<TriTile>,
    pub packets: Vec<[WavePacket; 3]>,
}

impl PacketFamily {
    pub fn new(window: Window, tiles: Vec<TriTile>) -> Result<Self, PacketError> {
        let packets = tiles
            .iter()
            .map(|t| {
                Ok([
                    make_packet(window, &t.tile(0), BumpSpec::Standard)?,
                    make_packet(window, &t.tile(1), BumpSpec::Standard)?,
                    make_packet(window, &t.tile(2), BumpSpec::Standard)?,
                ])
            })
            .collect::<Result<Vec<_>, PacketError>>()?;
        Ok(PacketFamily { window, tiles, packets })
    }

    /// Keeps only the tri-tiles whose three packets resolve on the window.
    pub fn resolvable(window: Window, tiles: Vec<TriTile>) -> Self {
        let keep: Vec<TriTile> = tiles
            .into_iter()
            .filter(|t| (0..3).all(|i| make_packet(window, &t.tile(i), BumpSpec::Standard).is_ok()))
            .collect();
        PacketFamily::new(window, keep).expect("filtered to resolvable tiles")
    }

    pub fn len(&self) -> usize {
        self.tiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tiles.is_empty()
    }

    pub fn lens(&self) -> Vec<f64> {
        self.tiles.iter().map(|t| t.len()).collect()
    }

    pub fn restrict(&self, keep: &[usize]) -> PacketFamily {
        PacketFamily {
            window: self.window,
            tiles: keep.iter().map(|&k| self.tiles[k]).collect(),
            packets: keep.iter().map(|&k| self.packets[k].clone()).collect(),
        }
    }

    /// `⟨f, φ_{P_slot}⟩` for every tri-tile.
    pub fn coefficients(&self, f: &SampledFunction, slot: usize) -> Result<Vec<Complex64>, PacketError> {
        self.packets.iter().map(|p| inner(f, &p[slot])).collect()
    }

    pub fn universe(&self, consts: OrderConstants) -> Universe {
        Universe::new(self.tiles.clone(), consts)
    }
}

/// `⟨φ, ψ⟩` of two packets on the same window, summed over shared bins.
pub fn packet_pairing(phi: &WavePacket, psi: &WavePacket) -> Complex64 {
    let (a, b) = (phi.bins(), psi.bins());
    let (lo, hi) = (a.start.max(b.start), a.end.min(b.end));
    let s: Complex64 = (lo..hi).map(|m| phi.func.coeff(m) * psi.func.coeff(m).conj()).sum();
    s * phi.func.window.length()
}

fn omega_within(inner_tile: &Tile, outer: &Tile) -> bool {
    outer.frequency().contains(&inner_tile.frequency())
}

// ---------------------------------------------------------------------------
// Forms

/// `Σ_P |I_P|^{-1/2} a¹ a² a³` on coefficient sequences.
pub fn lambda_bht_coeffs(lens: &[f64], a: [&[Complex64]; 3]) -> Result<Complex64, FormError> {
    if a.iter().any(|s| s.len() != lens.len()) {
        return Err(FormError::Argument("coefficient sequences differ in length".into()));
    }
    Ok((0..lens.len()).map(|k| a[0][k] * a[1][k] * a[2][k] / lens[k].sqrt()).sum())
}

/// `Σ_P |I_P|^{-1/2} Π_j ⟨f_j, φ_{P_j}⟩`.
pub fn lambda_bht(p: &PacketFamily, f: [&SampledFunction; 3]) -> Result<Complex64, FormError> {
    let a: Vec<Vec<Complex64>> = (0..3).map(|j| p.coefficients(f[j], j)).collect::<Result<_, _>>()?;
    lambda_bht_coeffs(&p.lens(), [&a[0], &a[1], &a[2]])
}

/// `|I_Q|^{-1/2} ⟨f₂, φ̃_{Q₁}⟩ ⟨f₃, φ̃_{Q₂}⟩`.
fn q_weights(q: &PacketFamily, f2: &SampledFunction, f3: &SampledFunction) -> Result<Vec<Complex64>, PacketError> {
    q.packets
        .iter()
        .zip(&q.tiles)
        .map(|(pk, t)| Ok(inner(f2, &pk[0])? * inner(f3, &pk[1])? / t.len().sqrt()))
        .collect()
}

fn b_from_weights(p2: &Tile, q: &PacketFamily, w: &[Complex64]) -> SampledFunction {
    let win = q.window;
    let mut spectrum = vec![ZERO; win.samples];
    for (k, t) in q.tiles.iter().enumerate() {
        if w[k] == ZERO || !omega_within(&t.tile(2), p2) {
            continue;
        }
        let pk = &q.packets[k][2];
        for m in pk.bins() {
            spectrum[win.index(m)] += w[k] * pk.func.coeff(m);
        }
    }
    SampledFunction::from_spectrum(win, spectrum)
}

/// `B_{P₂}(f₂, f₃) = Σ_{Q: ω_{Q₃} ⊆ ω_{P₂}} |I_Q|^{-1/2} ⟨f₂,φ̃_{Q₁}⟩⟨f₃,φ̃_{Q₂}⟩ φ̃_{Q₃}`.
pub fn b_p2(
    p2: &Tile,
    q: &PacketFamily,
    f2: &SampledFunction,
    f3: &SampledFunction,
) -> Result<SampledFunction, FormError> {
    let w = q_weights(q, f2, f3)?;
    Ok(b_from_weights(p2, q, &w))
}

fn check_pair(p: &PacketFamily, q: &PacketFamily, consts: &OrderConstants) -> Result<(), FormError> {
    check_rank1(&p.tiles, consts).map_err(|violation| FormError::Rank1 { which: "P", violation })?;
    check_rank1(&q.tiles, consts).map_err(|violation| FormError::Rank1 { which: "Q", violation })?;
    if p.window != q.window {
        return Err(PacketError::GridMismatch.into());
    }
    Ok(())
}

fn biest_with_weights(p: &PacketFamily, q: &PacketFamily, w: &[Complex64], f1: &SampledFunction, f4: &SampledFunction) -> Result<Complex64, FormError> {
    let mut total = ZERO;
    for (k, t) in p.tiles.iter().enumerate() {
        let a1 = inner(f1, &p.packets[k][0])?;
        let a3 = inner(f4, &p.packets[k][2])?;
        if a1 == ZERO || a3 == ZERO {
            continue;
        }
        let b = b_from_weights(&t.tile(1), q, w);
        total += a1 * inner(&b, &p.packets[k][1])? * a3 / t.len().sqrt();
    }
    Ok(total)
}

/// `Σ_P |I_P|^{-1/2} ⟨f₁,φ_{P₁}⟩ ⟨B_{P₂}(f₂,f₃), φ_{P₂}⟩ ⟨f₄,φ_{P₃}⟩`.
pub fn lambda_biest(
    p: &PacketFamily,
    q: &PacketFamily,
    f: [&SampledFunction; 4],
    consts: &OrderConstants,
) -> Result<Complex64, FormError> {
    check_pair(p, q, consts)?;
    let w = q_weights(q, f[1], f[2])?;
    biest_with_weights(p, q, &w, f[0], f[3])
}

/// Coefficients of a form `Σ_Q |I_Q|^{-1/2} a¹ a² a³` over `Q`.
#[derive(Clone, Debug)]
pub struct Rearranged {
    pub lens: Vec<f64>,
    pub a: [Vec<Complex64>; 3],
}

impl Rearranged {
    pub fn value(&self) -> Complex64 {
        lambda_bht_coeffs(&self.lens, [&self.a[0], &self.a[1], &self.a[2]]).expect("equal lengths")
    }
}

/// `Σ_{P: ω_{Q₃} ⊆ ω_{P_pivot}} |I_P|^{-1/2} ⟨g, φ_{P_u}⟩⟨h, φ_{P_v}⟩ pair(P_pivot, Q₃)`,
/// where `pair` is `⟨φ_{P_pivot}, φ̃_{Q₃}⟩` or its conjugate.
fn composed_coefficient(
    q3: &WavePacket,
    p: &PacketFamily,
    pivot: usize,
    outer: [(usize, &[Complex64]); 2],
    conjugate: bool,
) -> Complex64 {
    let mut s = ZERO;
    for (k, t) in p.tiles.iter().enumerate() {
        if !omega_within(&q3.tile, &t.tile(pivot)) {
            continue;
        }
        let mut pair = packet_pairing(&p.packets[k][pivot], q3);
        if conjugate {
            pair = pair.conj();
        }
        s += outer[0].1[k] * outer[1].1[k] * pair / t.len().sqrt();
    }
    s
}

/// `a⁽³⁾_{Q₃} = Σ_{P: ω_{Q₃} ⊆ ω_{P₁}} |I_P|^{-1/2} ⟨f₃,φ_{P₂}⟩⟨f₄,φ_{P₃}⟩⟨φ_{P₁},φ̃_{Q₃}⟩`.
pub fn rightform_a3(
    q3: &WavePacket,
    p: &PacketFamily,
    f3: &SampledFunction,
    f4: &SampledFunction,
) -> Result<Complex64, FormError> {
    let c3 = p.coefficients(f3, 1)?;
    let c4 = p.coefficients(f4, 2)?;
    Ok(composed_coefficient(q3, p, 0, [(1, &c3), (2, &c4)], false))
}

/// The rearranged coefficients with the `P₁` pivot: `a¹ = ⟨f₁,φ̃_{Q₁}⟩`,
/// `a² = ⟨f₂,φ̃_{Q₂}⟩`, `a³ = rightform_a3(Q₃; f₃, f₄)`.
pub fn rightform(p: &PacketFamily, q: &PacketFamily, f: [&SampledFunction; 4]) -> Result<Rearranged, FormError> {
    let c3 = p.coefficients(f[2], 1)?;
    let c4 = p.coefficients(f[3], 2)?;
    let a3 = q
        .packets
        .iter()
        .map(|pk| composed_coefficient(&pk[2], p, 0, [(1, &c3), (2, &c4)], false))
        .collect();
    Ok(Rearranged {
        lens: q.lens(),
        a: [q.coefficients(f[0], 0)?, q.coefficients(f[1], 1)?, a3],
    })
}

/// Rearrangement of [`lambda_biest`] as a sum over `Q`: `a¹ = ⟨f₂,φ̃_{Q₁}⟩`,
/// `a² = ⟨f₃,φ̃_{Q₂}⟩` and
/// `a³ = Σ_{P: ω_{Q₃} ⊆ ω_{P₂}} |I_P|^{-1/2} ⟨f₁,φ_{P₁}⟩⟨f₄,φ_{P₃}⟩⟨φ̃_{Q₃},φ_{P₂}⟩`.
pub fn rearrange_biest(p: &PacketFamily, q: &PacketFamily, f: [&SampledFunction; 4]) -> Result<Rearranged, FormError> {
    let c1 = p.coefficients(f[0], 0)?;
    let c4 = p.coefficients(f[3], 2)?;
    let a3 = q
        .packets
        .iter()
        .map(|pk| composed_coefficient(&pk[2], p, 1, [(0, &c1), (2, &c4)], true))
        .collect();
    Ok(Rearranged {
        lens: q.lens(),
        a: [q.coefficients(f[1], 0)?, q.coefficients(f[2], 1)?, a3],
    })
}

/// `b⁽¹⁾_{P₁} = Σ_T Σ_{Q∈T: ω_{Q₃} ⊆ ω_{P₁}} ⟨φ_{P₁}, c_{Q₃} φ̃_{Q₃}⟩` for each `P`.
pub fn b1_coefficients(p: &PacketFamily, q: &PacketFamily, trees: &[Tree], c: &[Complex64]) -> Vec<Complex64> {
    p.tiles
        .iter()
        .enumerate()
        .map(|(k, t)| {
            trees
                .iter()
                .flat_map(|tr| tr.members.iter())
                .filter(|&&qi| omega_within(&q.tiles[qi].tile(2), &t.tile(0)))
                .map(|&qi| c[qi].conj() * packet_pairing(&p.packets[k][0], &q.packets[qi][2]))
                .sum()
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Sets of finite measure

/// Finite union of dyadic intervals.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MeasurableSetSpec {
    pub set: DyadicSet,
}

/// `I \ Ω` for a dyadic interval `I` and a dyadic union `Ω`.
fn dyadic_minus(i: ShiftedInterval, omega: &DyadicSet, out: &mut Vec<ShiftedInterval>) {
    let seg = i.segment();
    let covered = omega.intersection_len(&seg);
    if covered.is_zero() {
        out.push(i);
    } else if covered != i.len() {
        // Ω's intervals are dyadic, so a partial overlap splits at a child.
        for k in [2 * i.k, 2 * i.k + 1] {
            dyadic_minus(ShiftedInterval::dyadic(i.j - 1, k), omega, out);
        }
    }
}

impl MeasurableSetSpec {
    pub fn new(parts: impl IntoIterator<Item = ShiftedInterval>) -> Self {
        MeasurableSetSpec { set: DyadicSet::new(parts) }
    }

    /// From `(scale, pos)` pairs describing `[pos 2^scale, (pos+1) 2^scale)`.
    pub fn from_dyadic(parts: &[(i32, i64)]) -> Self {
        Self::new(parts.iter().map(|&(j, k)| ShiftedInterval::dyadic(j, k)))
    }

    pub fn measure(&self) -> Exact {
        self.set.measure()
    }

    pub fn measure_f64(&self) -> f64 {
        self.measure().to_f64()
    }

    pub fn difference(&self, omega: &DyadicSet) -> MeasurableSetSpec {
        let mut out = Vec::new();
        for &i in self.set.intervals() {
            dyadic_minus(i, omega, &mut out);
        }
        MeasurableSetSpec::new(out)
    }

    pub fn is_subset(&self, other: &MeasurableSetSpec) -> bool {
        self.set.is_subset(&other.set)
    }

    /// Which sample points `x_n = n L / N` lie in the set.
    pub fn sample_mask(&self, window: Window) -> Vec<bool> {
        let step = Exact::pow2(window.log2_length - window.samples.trailing_zeros() as i32);
        (0..window.samples)
            .map(|n| self.set.contains_point(step * n as i64))
            .collect()
    }

    /// `∫_E χ̃_I^M` with `χ̃_I(x) = (1 + ((x - c_I)/|I|)²)^{-1/2}`.
    pub fn cutoff_integral(&self, interval: &Segment, m: u32) -> f64 {
        let (lo, hi) = interval.to_f64();
        let (c, w) = (0.5 * (lo + hi), hi - lo);
        self.set
            .intervals()
            .iter()
            .map(|i| {
                let (a, b) = i.segment().to_f64();
                w * (cutoff_antiderivative((b - c) / w, m) - cutoff_antiderivative((a - c) / w, m))
            })
            .sum()
    }

    /// Random union of dyadic intervals of length `2^scale` inside
    /// `[0, 2^window_log2)` with total measure `2^measure_log2`.
    pub fn random<R: Rng>(rng: &mut R, window_log2: i32, scale: i32, measure_log2: i32) -> Result<Self, FormError> {
        if measure_log2 < scale || measure_log2 > window_log2 {
            return Err(FormError::Argument("set measure must lie between the cell size and the region".into()));
        }
        let cells = 1i64 << (window_log2 - scale);
        let want = 1usize << (measure_log2 - scale);
        let mut chosen = std::collections::BTreeSet::new();
        while chosen.len() < want {
            chosen.insert(rng.gen_range(0..cells));
        }
        Ok(Self::new(chosen.into_iter().map(|k| ShiftedInterval::dyadic(scale, k))))
    }
}

impl MeasurableSetSpec {
    /// A run of consecutive cells of length `2^scale` with total measure
    /// `2^measure_log2`, at a random cell offset inside the region.
    pub fn random_block<R: Rng>(rng: &mut R, region_log2: i32, scale: i32, measure_log2: i32) -> Result<Self, FormError> {
        if measure_log2 < scale || measure_log2 > region_log2 {
            return Err(FormError::Argument("set measure must lie between the cell size and the region".into()));
        }
        let cells = 1i64 << (region_log2 - scale);
        let run = 1i64 << (measure_log2 - scale);
        let start = rng.gen_range(0..=cells - run);
        Ok(Self::new((start..start + run).map(|k| ShiftedInterval::dyadic(scale, k))))
    }
}

/// `∫_0^u (1 + t²)^{-M/2} dt`.
fn cutoff_antiderivative(u: f64, m: u32) -> f64 {
    assert!(m >= 1, "cutoff exponent must be positive");
    // F_{n+1} = u / (2n (1+u²)^n) + (2n-1)/(2n) F_n, from F_{1/2} = asinh, F_1 = atan.
    let q = 1.0 + u * u;
    let (mut n, mut f) = if m % 2 == 1 { (0.5, u.asinh()) } else { (1.0, u.atan()) };
    while 2.0 * n < m as f64 {
        f = u / (2.0 * n * q.powf(n)) + (2.0 * n - 1.0) / (2.0 * n) * f;
        n += 1.0;
    }
    f
}

/// Outcome of removing the maximal-function superlevel sets.
#[derive(Clone, Debug)]
pub struct ExceptionalSet {
    pub omega: DyadicSet,
    /// `E'_pivot = E_pivot \ Ω`.
    pub major: MeasurableSetSpec,
    pub pivot: usize,
    pub c: Rat,
}

/// `Ω = ∪_j {M χ_{E_j} > C |E_j| / |E_pivot|}` with the dyadic maximal function.
pub fn exceptional_set(sets: &[MeasurableSetSpec], pivot: usize, c: Rat) -> Result<ExceptionalSet, FormError> {
    if c <= Rat::zero() {
        return Err(FormError::Argument("C must be positive".into()));
    }
    let base = sets.get(pivot).ok_or_else(|| FormError::Argument("pivot out of range".into()))?;
    let pm = base.measure();
    if pm.is_zero() {
        return Err(FormError::Argument("pivot set is empty".into()));
    }
    let mut omega = DyadicSet::empty();
    for e in sets {
        let em = e.measure();
        if em.is_zero() {
            continue;
        }
        let lambda = c * em.ratio(pm);
        // Above scale 2^root every dyadic average is at most |E|/|I| <= λ.
        let finest = e.set.finest_scale().expect("nonempty");
        let mut root = finest;
        while Exact::pow2(root).to_rat() * lambda < em.to_rat() {
            root += 1;
        }
        omega = omega.union(&dyadic_superlevel(&e.set, lambda, root));
    }
    let om = omega.measure();
    if om + om >= pm {
        return Err(FormError::Majority {
            omega: om.to_f64(),
            pivot: pm.to_f64(),
        });
    }
    Ok(ExceptionalSet {
        major: base.difference(&omega),
        omega,
        pivot,
        c,
    })
}

/// Connected components of a dyadic union as half-open segments.
fn components(set: &DyadicSet) -> Vec<Segment> {
    let mut out: Vec<Segment> = Vec::new();
    for i in set.intervals() {
        let s = i.segment();
        match out.last_mut() {
            Some(last) if last.hi == s.lo => last.hi = s.hi,
            _ => out.push(s),
        }
    }
    out
}

/// `dist(I, R \ Ω)`: zero unless `I` sits inside one component of `Ω`.
pub fn distance_to_complement(interval: &Segment, omega: &DyadicSet) -> Exact {
    components(omega)
        .iter()
        .find(|c| c.contains(interval))
        .map_or(Exact::ZERO, |c| {
            let (l, r) = (interval.lo - c.lo, c.hi - interval.hi);
            if l < r {
                l
            } else {
                r
            }
        })
}

/// The `k` with `2^k <= 1 + dist(I, R \ Ω)/|I| < 2^{k+1}`.
pub fn stratum_of(interval: &Segment, omega: &DyadicSet) -> u32 {
    let len = interval.len();
    let total = len + distance_to_complement(interval, omega);
    let mut k = 0u32;
    let mut bound = len + len;
    while bound <= total {
        k += 1;
        bound = bound + bound;
    }
    k
}

/// Groups tri-tile indices by stratum.
pub fn stratify_k(tiles: &[TriTile], omega: &DyadicSet) -> BTreeMap<u32, Vec<usize>> {
    let mut out: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, t) in tiles.iter().enumerate() {
        out.entry(stratum_of(&t.spatial(), omega)).or_default().push(i);
    }
    out
}

/// Function with independent uniform unimodular values on the samples of
/// `set` and zero elsewhere.
pub fn random_indicator_function<R: Rng>(window: Window, set: &MeasurableSetSpec, rng: &mut R) -> SampledFunction {
    let samples = set
        .sample_mask(window)
        .into_iter()
        .map(|inside| {
            let t: f64 = rng.gen();
            if inside {
                Complex64::from_polar(1.0, 2.0 * PI * t)
            } else {
                ZERO
            }
        })
        .collect();
    SampledFunction::from_samples(window, samples)
}

// ---------------------------------------------------------------------------
// Exponent tuples

/// `α` with `Σα = 1`, every `α_i < 1` and at most one negative entry.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AdmissibleTuple {
    alpha: Vec<Rat>,
}

impl AdmissibleTuple {
    pub fn new(alpha: Vec<Rat>) -> Result<Self, FormError> {
        if !(3..=4).contains(&alpha.len()) {
            return Err(FormError::Inadmissible(format!("{} entries", alpha.len())));
        }
        if alpha.iter().any(|a| *a >= Rat::one()) {
            return Err(FormError::Inadmissible("an entry is >= 1".into()));
        }
        if alpha.iter().copied().sum::<Rat>() != Rat::one() {
            return Err(FormError::Inadmissible("entries do not sum to 1".into()));
        }
        if alpha.iter().filter(|a| a.is_negative()).count() > 1 {
            return Err(FormError::Inadmissible("more than one negative entry".into()));
        }
        Ok(AdmissibleTuple { alpha })
    }

    pub fn parse(entries: &[&str]) -> Result<Self, FormError> {
        let alpha = entries
            .iter()
            .map(|s| parse_rat(s).ok_or_else(|| FormError::Inadmissible(format!("cannot parse {s:?}"))))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(alpha)
    }

    pub fn alpha(&self) -> &[Rat] {
        &self.alpha
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.alpha.iter().map(rat_f64).collect()
    }

    /// 0-based index of the negative entry.
    pub fn bad_index(&self) -> Option<usize> {
        self.alpha.iter().position(|a| a.is_negative())
    }

    /// Euclidean distance to a point.
    pub fn distance(&self, point: &[Rat]) -> f64 {
        self.alpha
            .iter()
            .zip(point)
            .map(|(a, b)| rat_f64(&(a - b)).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// `|E|^α = Π |E_i|^{α_i}`.
    pub fn pow_measures(&self, measures: &[f64]) -> f64 {
        self.alpha
            .iter()
            .zip(measures)
            .map(|(a, m)| m.powf(rat_f64(a)))
            .product()
    }

    pub fn strings(&self) -> Vec<String> {
        self.alpha.iter().map(|a| a.to_string()).collect()
    }
}

pub fn rat_f64(r: &Rat) -> f64 {
    r.to_f64().expect("finite rational")
}

/// Parses `p/q`, an integer or a terminating decimal into a rational.
pub fn parse_rat(s: &str) -> Option<Rat> {
    let s = s.trim();
    if let Ok(r) = s.parse::<Rat>() {
        return Some(r);
    }
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let (int, frac) = body.split_once('.')?;
    if frac.is_empty() && int.is_empty() || !frac.chars().all(|c| c.is_ascii_digit()) || frac.len() > 30 {
        return None;
    }
    let int: i128 = if int.is_empty() { 0 } else { int.parse().ok()? };
    let den = 10i128.checked_pow(frac.len() as u32)?;
    let num = int.checked_mul(den)? + if frac.is_empty() { 0 } else { frac.parse::<i128>().ok()? };
    let r = Rat::new(num, den);
    Some(if neg { -r } else { r })
}

fn half(n: i128) -> Rat {
    Rat::new(n, 2)
}

/// The twelve extremal points, `A₁` first.
pub fn vertices() -> [[Rat; 4]; 12] {
    let v = |a: [i128; 4]| a.map(half);
    [
        v([2, 1, 2, -3]),
        v([1, 2, 2, -3]),
        v([1, 2, -3, 2]),
        v([2, 1, -3, 2]),
        v([2, -1, 0, 1]),
        v([2, -1, 1, 0]),
        v([1, -1, 0, 2]),
        v([1, -1, 2, 0]),
        v([-1, 2, 0, 1]),
        v([-1, 2, 1, 0]),
        v([-1, 1, 2, 0]),
        v([-1, 1, 0, 2]),
    ]
}

/// Coordinates of `A_i`, `i ∈ 1..=12`.
pub fn vertex(i: usize) -> Result<[Rat; 4], FormError> {
    if !(1..=12).contains(&i) {
        return Err(FormError::Argument(format!("vertex index {i} is not in 1..=12")));
    }
    Ok(vertices()[i - 1])
}

/// 0-based index of the negative coordinate of `A_i`.
pub fn vertex_bad_index(i: usize) -> Result<usize, FormError> {
    Ok(vertex(i)?.iter().position(|a| a.is_negative()).expect("every vertex has a negative entry"))
}

/// Interpolation exponents `θ₁, θ₂, θ₃` and the split exponent `θ`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exponents {
    pub theta: [String; 3],
    pub theta_split: Option<String>,
    /// 1-based pivot (the bad index).
    pub pivot: usize,
    #[serde(skip)]
    pub exact: Option<([Rat; 3], Option<Rat>)>,
}

impl Exponents {
    fn build(theta: [Rat; 3], split: Option<Rat>, pivot: usize) -> Result<Self, FormError> {
        let open = |x: &Rat| *x > Rat::zero() && *x < Rat::one();
        if let Some(bad) = theta.iter().position(|t| !open(t)) {
            return Err(FormError::Exponents(format!("theta_{} = {} is outside (0, 1)", bad + 1, theta[bad])));
        }
        if theta.iter().copied().sum::<Rat>() != Rat::one() {
            return Err(FormError::Exponents("theta does not sum to 1".into()));
        }
        if let Some(t) = split {
            if !open(&t) {
                return Err(FormError::Exponents(format!("theta = {t} is outside (0, 1)")));
            }
        }
        Ok(Exponents {
            theta: theta.map(|t| t.to_string()),
            theta_split: split.map(|t| t.to_string()),
            pivot,
            exact: Some((theta, split)),
        })
    }

    pub fn theta(&self) -> [Rat; 3] {
        self.exact.as_ref().expect("built exponents").0
    }

    pub fn split(&self) -> Option<Rat> {
        self.exact.as_ref().expect("built exponents").1
    }
}

/// Exponents for `α` near `A_vertex`. Pivot 1 and pivot 4 use their own
/// assignments; pivots 2 and 3 reuse them with `α₁ ↔ α₂` and `α₃ ↔ α₄`.
pub fn exponents_for_vertex(alpha: &AdmissibleTuple, vertex: usize) -> Result<Exponents, FormError> {
    let bad = vertex_bad_index(vertex)?;
    if alpha.alpha.len() != 4 {
        return Err(FormError::Inadmissible("vertex exponents need four entries".into()));
    }
    if alpha.bad_index() != Some(bad) {
        return Err(FormError::Inadmissible(format!(
            "bad index of alpha ({:?}) differs from that of A{vertex} ({})",
            alpha.bad_index().map(|b| b + 1),
            bad + 1
        )));
    }
    let mut a: [Rat; 4] = [alpha.alpha[0], alpha.alpha[1], alpha.alpha[2], alpha.alpha[3]];
    let two = Rat::from_integer(2);
    let one = Rat::one();
    match bad {
        0 | 1 => {
            if bad == 1 {
                a.swap(0, 1);
            }
            let s = a[2] + a[3];
            Exponents::build([two * a[0] + one, two * a[1] - one, two * s - one], Some(a[3] / s), bad + 1)
        }
        _ => {
            if bad == 2 {
                a.swap(2, 3);
            }
            let s = a[2] + a[3];
            if s.is_zero() {
                return Err(FormError::Exponents("alpha_3 + alpha_4 = 0".into()));
            }
            let three = Rat::from_integer(3);
            Exponents::build(
                [two * a[0] - one, two * a[1] - one, two * s + one],
                Some((three * a[2] + two * a[3]) / s),
                bad + 1,
            )
        }
    }
}

/// Exponents for the three-slot form near `(1, 1/2, -1/2)` (pivot 3).
pub fn exponents_bht(alpha: &AdmissibleTuple) -> Result<Exponents, FormError> {
    if alpha.alpha.len() != 3 || alpha.bad_index() != Some(2) {
        return Err(FormError::Inadmissible("need three entries with the third negative".into()));
    }
    let (two, one) = (Rat::from_integer(2), Rat::one());
    let a = &alpha.alpha;
    Exponents::build([two * a[0] - one, two * a[1] - one, two * a[2] + one], None, 3)
}

// ---------------------------------------------------------------------------
// Instances

/// Parameters of the random tile families used by experiments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub window: Window,
    pub consts: OrderConstants,
    pub p_count: usize,
    pub q_count: usize,
    /// Spatial scales of the `P` and `Q` tri-tiles (inclusive ranges).
    pub p_scales: (i32, i32),
    pub q_scales: (i32, i32),
    pub freq_radius: f64,
    /// Spatial intervals lie in `[0, 2^region_log2)`.
    pub region_log2: i32,
}

impl Default for InstanceSpec {
    fn default() -> Self {
        InstanceSpec {
            window: Window::new(6, 1024),
            consts: OrderConstants::DESK,
            p_count: 8,
            q_count: 8,
            p_scales: (-1, 0),
            q_scales: (1, 2),
            freq_radius: 1.0,
            region_log2: 3,
        }
    }
}

impl InstanceSpec {
    /// Finer tiles on a shorter window, so that tiles sit deep inside the
    /// exceptional sets produced by [`SetEnsemble::stratified`].
    pub fn stratified() -> Self {
        InstanceSpec {
            window: Window::new(4, 2048),
            p_count: 16,
            q_count: 12,
            p_scales: (-4, -3),
            q_scales: (-2, -1),
            freq_radius: 2.0,
            region_log2: 4,
            ..InstanceSpec::default()
        }
    }
}

fn family(spec: &InstanceSpec, seed: u64, count: usize, scales: (i32, i32)) -> Result<PacketFamily, FormError> {
    let mut opts = GenOptions::desk(seed, count);
    opts.consts = spec.consts;
    opts.sparse = false;
    opts.window_log2 = spec.region_log2.min(spec.window.log2_length);
    opts.scale_min = scales.0;
    opts.scale_max = scales.1;
    opts.freq_radius = spec.freq_radius;
    opts.offsets = [-1, 0, 1];
    // Crowded regions may not admit `count` rank-1 tri-tiles; take the largest feasible count.
    let tiles = loop {
        match gen_rank1(&opts) {
            Ok(t) => break t,
            Err(GenError::Exhausted { got, .. }) if got > 0 && got < opts.count => opts.count = got,
            Err(e) => return Err(e.into()),
        }
    };
    Ok(PacketFamily::resolvable(spec.window, tiles))
}

/// `P` family for seed `seed`.
pub fn p_family(spec: &InstanceSpec, seed: u64) -> Result<PacketFamily, FormError> {
    family(spec, seed.wrapping_mul(2).wrapping_add(0x5eed), spec.p_count, spec.p_scales)
}

/// `Q` family for seed `seed`, independent of the `P` family.
pub fn q_family(spec: &InstanceSpec, seed: u64) -> Result<PacketFamily, FormError> {
    family(spec, seed.wrapping_mul(2).wrapping_add(0x5eed + 1), spec.q_count, spec.q_scales)
}

// ---------------------------------------------------------------------------
// Restricted-type experiments

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FormKind {
    Bht,
    Biest,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetEnsemble {
    /// Sets lie in `[0, 2^region_log2)`.
    pub region_log2: i32,
    /// Sets are unions of dyadic cells of length `2^cell_scale`.
    pub cell_scale: i32,
    /// `log2 |E_j|` is drawn uniformly from `min_log2 ..= min_log2 + orders`.
    pub min_log2: i32,
    pub orders: i32,
    /// Fixed `log2 |E_pivot|`, overriding the random draw for the pivot.
    #[serde(default)]
    pub pivot_log2: Option<i32>,
    /// Non-pivot sets are single runs of consecutive cells.
    #[serde(default)]
    pub blocks: bool,
}

impl Default for SetEnsemble {
    fn default() -> Self {
        SetEnsemble {
            region_log2: 3,
            cell_scale: -2,
            min_log2: -1,
            orders: 3,
            pivot_log2: None,
            blocks: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentSpec {
    pub kind: FormKind,
    pub alpha: AdmissibleTuple,
    pub vertex: Option<usize>,
    pub seeds: Vec<u64>,
    pub instance: InstanceSpec,
    pub sets: SetEnsemble,
    pub c_omega: Rat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StratumRow {
    pub k: u32,
    pub tiles: usize,
    pub lambda_abs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceReport {
    pub seed: u64,
    #[serde(rename = "E_sizes")]
    pub e_sizes: Vec<f64>,
    pub omega_measure: f64,
    pub p_tiles: usize,
    pub q_tiles: usize,
    pub lambda_abs: f64,
    pub ratio: f64,
    pub strata: Vec<StratumRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConstants {
    #[serde(rename = "C_omega")]
    pub c_omega: String,
    pub order: OrderConstants,
    pub instance: InstanceSpec,
    pub sets: SetEnsemble,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub kind: FormKind,
    pub alpha: Vec<String>,
    pub vertex: Option<String>,
    pub pivot: usize,
    pub exponents: Option<Exponents>,
    pub seeds: Vec<u64>,
    pub per_instance: Vec<InstanceReport>,
    pub max_ratio: f64,
    pub constants: ExperimentConstants,
}

impl ExperimentReport {
    /// `max` over instances of `|Λ_k| / |E|^α`, per stratum `k`.
    pub fn stratum_profile(&self) -> BTreeMap<u32, f64> {
        let mut out: BTreeMap<u32, f64> = BTreeMap::new();
        for inst in &self.per_instance {
            let scale = if inst.lambda_abs > 0.0 { inst.ratio / inst.lambda_abs } else { 0.0 };
            for row in &inst.strata {
                let v = out.entry(row.k).or_insert(0.0);
                *v = v.max(row.lambda_abs * scale);
            }
        }
        out
    }
}

impl SetEnsemble {
    /// Pivot set filling the region and small block-shaped companions.
    pub fn stratified() -> Self {
        SetEnsemble {
            region_log2: 4,
            cell_scale: -4,
            min_log2: -4,
            orders: 3,
            pivot_log2: Some(4),
            blocks: true,
        }
    }
}

fn experiment_pivot(spec: &ExperimentSpec) -> Result<(usize, Option<Exponents>), FormError> {
    match spec.kind {
        FormKind::Bht => {
            let e = exponents_bht(&spec.alpha)?;
            Ok((2, Some(e)))
        }
        FormKind::Biest => {
            let bad = spec
                .alpha
                .bad_index()
                .ok_or_else(|| FormError::Inadmissible("restricted-type experiments need a bad index".into()))?;
            if spec.alpha.alpha.len() != 4 {
                return Err(FormError::Inadmissible("the four-slot form needs four entries".into()));
            }
            let e = match spec.vertex {
                Some(v) => Some(exponents_for_vertex(&spec.alpha, v)?),
                None => None,
            };
            Ok((bad, e))
        }
    }
}

/// Runs one instance: sets, exceptional set, functions on the major subset
/// and the form value, split by stratum.
pub fn run_instance(spec: &ExperimentSpec, seed: u64, pivot: usize) -> Result<InstanceReport, FormError> {
    let slots = spec.alpha.alpha.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = spec.instance.window;
    if spec.sets.region_log2 > w.log2_length {
        return Err(FormError::Argument("set region exceeds the window".into()));
    }
    let ens = &spec.sets;
    let sets: Vec<MeasurableSetSpec> = (0..slots)
        .map(|j| {
            let m = ens.min_log2 + rng.gen_range(0..=ens.orders);
            match ens.pivot_log2 {
                Some(pm) if j == pivot => MeasurableSetSpec::random(&mut rng, ens.region_log2, ens.cell_scale, pm),
                _ if ens.blocks && j != pivot => MeasurableSetSpec::random_block(&mut rng, ens.region_log2, ens.cell_scale, m),
                _ => MeasurableSetSpec::random(&mut rng, ens.region_log2, ens.cell_scale, m),
            }
        })
        .collect::<Result<_, _>>()?;
    let ex = exceptional_set(&sets, pivot, spec.c_omega)?;
    let funcs: Vec<SampledFunction> = (0..slots)
        .map(|j| {
            let e = if j == pivot { &ex.major } else { &sets[j] };
            random_indicator_function(w, e, &mut rng)
        })
        .collect();
    let e_sizes: Vec<f64> = sets.iter().map(|s| s.measure_f64()).collect();
    let denom = spec.alpha.pow_measures(&e_sizes);
    let p = p_family(&spec.instance, seed)?;
    let (value, strata, q_len) = match spec.kind {
        FormKind::Bht => {
            let a: Vec<Vec<Complex64>> = (0..3).map(|j| p.coefficients(&funcs[j], j)).collect::<Result<_, _>>()?;
            let lens = p.lens();
            let value = lambda_bht_coeffs(&lens, [&a[0], &a[1], &a[2]])?;
            let strata = stratify_k(&p.tiles, &ex.omega)
                .into_iter()
                .map(|(k, idx)| {
                    let v: Complex64 = idx.iter().map(|&i| a[0][i] * a[1][i] * a[2][i] / lens[i].sqrt()).sum();
                    StratumRow { k, tiles: idx.len(), lambda_abs: v.norm() }
                })
                .collect();
            (value, strata, 0)
        }
        FormKind::Biest => {
            let q = q_family(&spec.instance, seed)?;
            check_pair(&p, &q, &spec.instance.consts)?;
            let wq = q_weights(&q, &funcs[1], &funcs[2])?;
            let value = biest_with_weights(&p, &q, &wq, &funcs[0], &funcs[3])?;
            let mut strata = Vec::new();
            for (k, idx) in stratify_k(&q.tiles, &ex.omega) {
                let mut wk = vec![ZERO; q.len()];
                for &i in &idx {
                    wk[i] = wq[i];
                }
                let v = biest_with_weights(&p, &q, &wk, &funcs[0], &funcs[3])?;
                strata.push(StratumRow { k, tiles: idx.len(), lambda_abs: v.norm() });
            }
            (value, strata, q.len())
        }
    };
    Ok(InstanceReport {
        seed,
        e_sizes,
        omega_measure: ex.omega.measure().to_f64(),
        p_tiles: p.len(),
        q_tiles: q_len,
        lambda_abs: value.norm(),
        ratio: value.norm() / denom,
        strata,
    })
}

pub fn restricted_type_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport, FormError> {
    let (pivot, exponents) = experiment_pivot(spec)?;
    if spec.kind == FormKind::Bht && spec.alpha.alpha.len() != 3 {
        return Err(FormError::Inadmissible("the three-slot form needs three entries".into()));
    }
    let per_instance = std::thread::scope(|s| {
        let handles: Vec<_> = spec
            .seeds
            .iter()
            .map(|&seed| s.spawn(move || run_instance(spec, seed, pivot)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("instance thread panicked"))
            .collect::<Result<Vec<_>, _>>()
    })?;
    let max_ratio = per_instance.iter().map(|r| r.ratio).fold(0.0, f64::max);
    Ok(ExperimentReport {
        kind: spec.kind,
        alpha: spec.alpha.strings(),
        vertex: spec.vertex.map(|v| format!("A{v}")),
        pivot: pivot + 1,
        exponents,
        seeds: spec.seeds.clone(),
        per_instance,
        max_ratio,
        constants: ExperimentConstants {
            c_omega: spec.c_omega.to_string(),
            order: spec.instance.consts,
            instance: spec.instance.clone(),
            sets: spec.sets.clone(),
        },
    })
}

// ---------------------------------------------------------------------------
// Measured constants

/// Largest `Σ_{T'} |c|² / |I_{T'}|` over subtrees of the given trees.
pub fn bessel_parameter(u: &Universe, c: &[Complex64], trees: &[Tree]) -> f64 {
    trees
        .iter()
        .map(|t| max_subtree_density(u, c, &t.members, t.top))
        .fold(0.0, f64::max)
}

/// `‖Σ_T Σ_{Q∈T} c_Q φ̃_{Q_slot}‖₂ / (A Σ|I_T|)^{1/2}` with `A` from
/// [`bessel_parameter`]; `None` for an empty collection.
pub fn l2_bessel_ratio(q: &PacketFamily, u: &Universe, slot: usize, trees: &[Tree], c: &[Complex64]) -> Option<f64> {
    let a = bessel_parameter(u, c, trees);
    let total: f64 = trees.iter().map(|t| u.len_of(t.top)).sum();
    if a == 0.0 || total == 0.0 {
        return None;
    }
    let win = q.window;
    let mut spectrum = vec![ZERO; win.samples];
    for &k in trees.iter().flat_map(|t| t.members.iter()) {
        let pk = &q.packets[k][slot];
        for m in pk.bins() {
            spectrum[win.index(m)] += c[k] * pk.func.coeff(m);
        }
    }
    let norm = SampledFunction::from_spectrum(win, spectrum).norm();
    Some(norm / (a * total).sqrt())
}

/// `energy~_slot(⟨f, φ_{P_slot}⟩) / ‖f‖₂` (bracket upper end past `exact_limit`).
pub fn energy_lemma_ratio(p: &PacketFamily, u: &Universe, slot: usize, f: &SampledFunction, exact_limit: usize) -> Result<f64, FormError> {
    let a = p.coefficients(f, slot)?;
    Ok(modified_energy(u, &a, slot, exact_limit).upper() / f.norm())
}

/// `sup_P ∫_E χ̃_{I_P}^M / |I_P|` over a collection.
pub fn localized_density(tiles: &[TriTile], set: &MeasurableSetSpec, m: u32) -> f64 {
    tiles
        .iter()
        .map(|t| set.cutoff_integral(&t.spatial(), m) / t.len())
        .fold(0.0, f64::max)
}

/// `size_slot(⟨f, φ_{P_slot}⟩) / sup_P ∫_E χ̃^M / |I_P|` for `f ∈ X(E)`.
pub fn size_lemma_ratio(p: &PacketFamily, u: &Universe, slot: usize, f: &SampledFunction, set: &MeasurableSetSpec, m: u32) -> Result<f64, FormError> {
    let a = p.coefficients(f, slot)?;
    let d = localized_density(&p.tiles, set, m);
    Ok(if d == 0.0 { 0.0 } else { size(u, &a, slot).value / d })
}

/// `a⁽³⁾_{Q₃}` for every `Q` (pivot `P₁`).
pub fn rightform_a3_all(p: &PacketFamily, q: &PacketFamily, f3: &SampledFunction, f4: &SampledFunction) -> Result<Vec<Complex64>, FormError> {
    let c3 = p.coefficients(f3, 1)?;
    let c4 = p.coefficients(f4, 2)?;
    Ok(q.packets
        .iter()
        .map(|pk| composed_coefficient(&pk[2], p, 0, [(1, &c3), (2, &c4)], false))
        .collect())
}

/// `size₃(a⁽³⁾) / sup_Q (∫_{E₃}χ̃^M/|I|)^{1-θ} (∫_{E₄}χ̃^M/|I|)^θ`.
#[allow(clippy::too_many_arguments)]
pub fn bht_size_ratio(
    p: &PacketFamily,
    q: &PacketFamily,
    uq: &Universe,
    f3: &SampledFunction,
    f4: &SampledFunction,
    sets: [&MeasurableSetSpec; 2],
    m: u32,
    theta: f64,
) -> Result<f64, FormError> {
    let a3 = rightform_a3_all(p, q, f3, f4)?;
    let bound = q
        .tiles
        .iter()
        .map(|t| {
            let d3 = sets[0].cutoff_integral(&t.spatial(), m) / t.len();
            let d4 = sets[1].cutoff_integral(&t.spatial(), m) / t.len();
            d3.powf(1.0 - theta) * d4.powf(theta)
        })
        .fold(0.0, f64::max);
    Ok(if bound == 0.0 { 0.0 } else { size(uq, &a3, 2).value / bound })
}

/// `energy~₃(a⁽³⁾) / (|E₄|^{(1-θ)/2} |E₃|^{θ/2})`.
#[allow(clippy::too_many_arguments)]
pub fn bht_energy_ratio(
    p: &PacketFamily,
    q: &PacketFamily,
    uq: &Universe,
    f3: &SampledFunction,
    f4: &SampledFunction,
    sets: [&MeasurableSetSpec; 2],
    theta: f64,
    exact_limit: usize,
) -> Result<f64, FormError> {
    let a3 = rightform_a3_all(p, q, f3, f4)?;
    let e = modified_energy(uq, &a3, 2, exact_limit).upper();
    let bound = sets[1].measure_f64().powf((1.0 - theta) / 2.0) * sets[0].measure_f64().powf(theta / 2.0);
    Ok(e / bound)
}

/// Witness-driven `b⁽¹⁾` measurement: the dual witness of `a` on slot 3 of
/// `Q` supplies strongly 3-disjoint trees and normalized `c`; returns
/// `energy~₁(b⁽¹⁾)` on `P` and the witness normalization, or `None` when the
/// witness is empty.
pub fn split_cor_energy(
    p: &PacketFamily,
    q: &PacketFamily,
    up: &Universe,
    uq: &Universe,
    a: &[Complex64],
    exact_limit: usize,
) -> Option<(f64, f64)> {
    let me = modified_energy(uq, a, 2, exact_limit);
    let w = dual_energy_witness(uq, a, me.collection());
    if w.trees.is_empty() {
        return None;
    }
    let b = b1_coefficients(p, q, &w.trees, &w.c);
    Some((modified_energy(up, &b, 0, exact_limit).upper(), w.normalization))
}

/// Maximum of each half of an ordered sample and whether the second is at
/// most `factor` times the first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stability {
    pub first_max: f64,
    pub second_max: f64,
    pub factor: f64,
    pub stable: bool,
}

pub fn stability(values: &[f64], factor: f64) -> Stability {
    let mid = values.len() / 2;
    let first_max = values[..mid].iter().copied().fold(0.0, f64::max);
    let second_max = values[mid..].iter().copied().fold(0.0, f64::max);
    let finite = values.iter().all(|v| v.is_finite());
    Stability {
        first_max,
        second_max,
        factor,
        stable: finite && second_max <= factor * first_max,
    }
}
