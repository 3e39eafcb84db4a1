//! Sampled functions on a periodic window, wave packets, and direct
//! evaluation of the bilinear and trilinear multiplier operators on the
//! discrete frequency grid.
//!
//! A function on `[0, L)` with `N` samples is stored together with its
//! Fourier coefficients `c_m = (1/N) Σ_n f_n e^{-2πi m n / N}`, indexed by
//! signed bins `m ∈ [-N/2, N/2)` (frequency `m / L`), so that
//! `f(x) = Σ_m c_m e^{2πi m x / L}`.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exact::{Exact, FRAC_BITS};
use crate::grid::{cutoff_value, ApproxCutoff};
use crate::tiles::Tile;

#[derive(Debug, Error)]
pub enum PacketError {
    #[error("functions live on different grids")]
    GridMismatch,
    #[error("tile does not fit the window: {0}")]
    Resolution(String),
    #[error("direct evaluation needs {needed} triples, budget is {budget}")]
    Budget { needed: u64, budget: u64 },
    #[error("malformed function file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Periodic window `[0, 2^log2_length)` sampled at `samples` points.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub log2_length: i32,
    pub samples: usize,
}

impl Window {
    pub fn new(log2_length: i32, samples: usize) -> Self {
        assert!(samples.is_power_of_two() && samples >= 2, "N must be a power of two");
        assert!((0..=20).contains(&log2_length), "window length out of range");
        Window { log2_length, samples }
    }

    pub fn length(&self) -> f64 {
        (self.log2_length as f64).exp2()
    }

    pub fn dx(&self) -> f64 {
        self.length() / self.samples as f64
    }

    pub fn x(&self, n: usize) -> f64 {
        n as f64 * self.dx()
    }

    /// Storage index of signed bin `m`.
    pub fn index(&self, m: i64) -> usize {
        m.rem_euclid(self.samples as i64) as usize
    }

    /// Signed bin of storage index `k`.
    pub fn bin(&self, k: usize) -> i64 {
        let n = self.samples as i64;
        let k = k as i64;
        if k >= n / 2 {
            k - n
        } else {
            k
        }
    }

    pub fn freq(&self, m: i64) -> f64 {
        m as f64 / self.length()
    }

    /// Frequency of bin `m` as an exact value.
    pub fn freq_exact(&self, m: i64) -> Exact {
        Exact::pow2(-self.log2_length) * m
    }

    pub fn nyquist(&self) -> f64 {
        self.samples as f64 / (2.0 * self.length())
    }
}

thread_local! {
    static PLANNER: std::cell::RefCell<FftPlanner<f64>> = std::cell::RefCell::new(FftPlanner::new());
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(n)
        } else {
            p.plan_fft_forward(n)
        }
    })
}

/// Complex samples on a periodic window, with cached spectrum.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledFunction {
    pub window: Window,
    samples: Vec<Complex64>,
    spectrum: Vec<Complex64>,
}

impl SampledFunction {
    pub fn from_samples(window: Window, samples: Vec<Complex64>) -> Self {
        assert_eq!(samples.len(), window.samples);
        let mut spectrum = samples.clone();
        plan(window.samples, false).process(&mut spectrum);
        let inv = 1.0 / window.samples as f64;
        spectrum.iter_mut().for_each(|c| *c *= inv);
        SampledFunction { window, samples, spectrum }
    }

    /// `spectrum` is indexed by storage index (see [`Window::index`]).
    pub fn from_spectrum(window: Window, spectrum: Vec<Complex64>) -> Self {
        assert_eq!(spectrum.len(), window.samples);
        let mut samples = spectrum.clone();
        plan(window.samples, true).process(&mut samples);
        SampledFunction { window, samples, spectrum }
    }

    pub fn zero(window: Window) -> Self {
        let z = vec![Complex64::new(0.0, 0.0); window.samples];
        SampledFunction { window, samples: z.clone(), spectrum: z }
    }

    /// The constant function `value`, built from an exact spectral delta.
    pub fn constant(window: Window, value: Complex64) -> Self {
        let mut spectrum = vec![Complex64::new(0.0, 0.0); window.samples];
        spectrum[0] = value;
        SampledFunction {
            window,
            samples: vec![value; window.samples],
            spectrum,
        }
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn spectrum(&self) -> &[Complex64] {
        &self.spectrum
    }

    pub fn coeff(&self, m: i64) -> Complex64 {
        self.spectrum[self.window.index(m)]
    }

    /// Nonzero bins in increasing signed order.
    pub fn support(&self) -> Vec<i64> {
        let mut bins: Vec<i64> = (0..self.window.samples)
            .filter(|&k| self.spectrum[k] != Complex64::new(0.0, 0.0))
            .map(|k| self.window.bin(k))
            .collect();
        bins.sort_unstable();
        bins
    }

    pub fn scale(&self, s: Complex64) -> Self {
        SampledFunction {
            window: self.window,
            samples: self.samples.iter().map(|v| v * s).collect(),
            spectrum: self.spectrum.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add(&self, other: &SampledFunction) -> Result<Self, PacketError> {
        if self.window != other.window {
            return Err(PacketError::GridMismatch);
        }
        Ok(SampledFunction {
            window: self.window,
            samples: self.samples.iter().zip(&other.samples).map(|(a, b)| a + b).collect(),
            spectrum: self.spectrum.iter().zip(&other.spectrum).map(|(a, b)| a + b).collect(),
        })
    }

    /// Pointwise product via samples.
    pub fn pointwise(&self, others: &[&SampledFunction]) -> Result<Self, PacketError> {
        let mut s = self.samples.clone();
        for o in others {
            if o.window != self.window {
                return Err(PacketError::GridMismatch);
            }
            s.iter_mut().zip(&o.samples).for_each(|(a, b)| *a *= b);
        }
        Ok(SampledFunction::from_samples(self.window, s))
    }

    /// `(L/N) Σ |f_n|^2`.
    pub fn norm_sq(&self) -> f64 {
        self.window.dx() * self.samples.iter().map(|c| c.norm_sqr()).sum::<f64>()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Little-endian binary dump preceded by a one-line JSON header.
    pub fn write_binary<W: Write>(&self, mut w: W, dtype: Dtype) -> Result<(), PacketError> {
        let header = FunctionHeader {
            length: self.window.length(),
            samples: self.window.samples,
            dtype,
        };
        serde_json::to_writer(&mut w, &header).map_err(|e| PacketError::Format(e.to_string()))?;
        w.write_all(b"\n")?;
        for c in &self.samples {
            match dtype {
                Dtype::Complex128 => {
                    w.write_all(&c.re.to_le_bytes())?;
                    w.write_all(&c.im.to_le_bytes())?;
                }
                Dtype::Complex64 => {
                    w.write_all(&(c.re as f32).to_le_bytes())?;
                    w.write_all(&(c.im as f32).to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self, PacketError> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| PacketError::Format("missing header line".into()))?;
        let header: FunctionHeader =
            serde_json::from_slice(&bytes[..nl]).map_err(|e| PacketError::Format(e.to_string()))?;
        let log2 = header.length.log2().round() as i32;
        if (log2 as f64).exp2() != header.length || !header.samples.is_power_of_two() {
            return Err(PacketError::Format("L and N must be powers of two".into()));
        }
        let body = &bytes[nl + 1..];
        let width = match header.dtype {
            Dtype::Complex128 => 16,
            Dtype::Complex64 => 8,
        };
        if body.len() != width * header.samples {
            return Err(PacketError::Format(format!(
                "expected {} payload bytes, found {}",
                width * header.samples,
                body.len()
            )));
        }
        let samples = body
            .chunks_exact(width)
            .map(|ch| match header.dtype {
                Dtype::Complex128 => Complex64::new(
                    f64::from_le_bytes(ch[..8].try_into().expect("8 bytes")),
                    f64::from_le_bytes(ch[8..].try_into().expect("8 bytes")),
                ),
                Dtype::Complex64 => Complex64::new(
                    f32::from_le_bytes(ch[..4].try_into().expect("4 bytes")) as f64,
                    f32::from_le_bytes(ch[4..].try_into().expect("4 bytes")) as f64,
                ),
            })
            .collect();
        Ok(SampledFunction::from_samples(Window::new(log2, header.samples), samples))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    Complex64,
    Complex128,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FunctionHeader {
    #[serde(rename = "L")]
    pub length: f64,
    #[serde(rename = "N")]
    pub samples: usize,
    pub dtype: Dtype,
}

/// `exp(1 - 1/(1 - t^2))` on `|t| < 1`, zero elsewhere.
pub fn bump(t: f64) -> f64 {
    if t.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - t * t)).exp()
    }
}

/// Base frequency profile used for packets.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum BumpSpec {
    /// The standard `exp(1 - 1/(1-t^2))` bump on `(9/10) ω_P`.
    #[default]
    Standard,
}

/// Smallest number of grid bins allowed inside `(9/10) ω_P`.
pub const MIN_BINS: usize = 8;

/// An L²-normalized function with spectrum supported in `(9/10) ω_P`.
#[derive(Clone, Debug)]
pub struct WavePacket {
    pub tile: Tile,
    pub bump: BumpSpec,
    pub func: SampledFunction,
    /// First signed bin of the support and its nonzero amplitudes `|c_m|`.
    pub first_bin: i64,
    pub amplitudes: Vec<f64>,
}

/// Fractional part of `m * x / L` computed exactly.
fn phase_turns(window: &Window, m: i64, x: Exact) -> f64 {
    let den: i128 = 3i128 << (FRAC_BITS as i32 + window.log2_length);
    let num = (m as i128) * x.units();
    num.rem_euclid(den) as f64 / den as f64
}

pub fn make_packet(window: Window, tile: &Tile, bump_spec: BumpSpec) -> Result<WavePacket, PacketError> {
    let spatial = tile.spatial();
    let length = Exact::pow2(window.log2_length);
    if spatial.lo < Exact::ZERO || spatial.hi > length {
        return Err(PacketError::Resolution(format!(
            "spatial interval {:?} leaves the window [0, {})",
            spatial.to_f64(),
            window.length()
        )));
    }
    let omega = tile.frequency();
    let xi = omega.center();
    // Half-width of (9/10) ω in exact units (the width is 2^{-s}).
    let half = omega.len().units() as f64 * 0.45;
    let nyq = window.samples as i64 / 2;
    let step = window.freq_exact(1).units();
    let lo_bin = (xi.units() as f64 - half) / step as f64;
    let hi_bin = (xi.units() as f64 + half) / step as f64;
    if lo_bin < -(nyq as f64) || hi_bin >= nyq as f64 {
        return Err(PacketError::Resolution(format!(
            "frequency interval {:?} exceeds the Nyquist band ±{}",
            omega.to_f64(),
            window.nyquist()
        )));
    }
    let first = lo_bin.floor() as i64;
    let last = hi_bin.ceil() as i64;
    let mut amps = Vec::new();
    let mut first_bin = None;
    for m in first..=last {
        // t from exact integer differences so translates give identical amplitudes.
        let diff = (window.freq_exact(m) - xi).units() as f64;
        let a = match bump_spec {
            BumpSpec::Standard => bump(diff / half),
        };
        if a > 0.0 {
            first_bin.get_or_insert(m);
            amps.push(a);
        }
    }
    if amps.len() < MIN_BINS {
        return Err(PacketError::Resolution(format!(
            "(9/10)ω holds {} bins, need {MIN_BINS}",
            amps.len()
        )));
    }
    let first_bin = first_bin.expect("nonempty");
    let norm = (window.length() * amps.iter().map(|a| a * a).sum::<f64>()).sqrt();
    amps.iter_mut().for_each(|a| *a /= norm);
    let x_center = spatial.center();
    let mut spectrum = vec![Complex64::new(0.0, 0.0); window.samples];
    for (k, a) in amps.iter().enumerate() {
        let m = first_bin + k as i64;
        let turns = phase_turns(&window, m, x_center);
        spectrum[window.index(m)] = Complex64::from_polar(*a, -2.0 * PI * turns);
    }
    Ok(WavePacket {
        tile: *tile,
        bump: bump_spec,
        func: SampledFunction::from_spectrum(window, spectrum),
        first_bin,
        amplitudes: amps,
    })
}

impl WavePacket {
    pub fn bins(&self) -> std::ops::Range<i64> {
        self.first_bin..self.first_bin + self.amplitudes.len() as i64
    }

    /// Whether every nonzero bin lies strictly inside `(9/10) ω_P`.
    pub fn support_inside(&self) -> bool {
        let omega = self.tile.frequency();
        let xi = omega.center();
        let w = self.func.window;
        // |ξ_m - ξ_P| < (9/20)|ω|  ⟺  20|ξ_m - ξ_P| < 9|ω| in exact units.
        self.func.support().iter().all(|&m| {
            20 * (w.freq_exact(m) - xi).units().abs() < 9 * omega.len().units()
        }) && self.bins().all(|m| self.func.coeff(m) != Complex64::new(0.0, 0.0))
    }

    /// `max_x |φ(x)| |I|^{1/2} χ̃_I(x)^{-M}` with periodic distance.
    pub fn decay_constant(&self, m: u32) -> f64 {
        let w = self.func.window;
        let (lo, hi) = self.tile.spatial().to_f64();
        let center = 0.5 * (lo + hi);
        let width = hi - lo;
        let len = w.length();
        let cut = ApproxCutoff { center: 0.0, width, exponent: m };
        self.func
            .samples()
            .iter()
            .enumerate()
            .map(|(n, v)| {
                let d = (w.x(n) - center).rem_euclid(len);
                let d = d.min(len - d);
                v.norm() * width.sqrt() / cutoff_value(&cut, d)
            })
            .fold(0.0, f64::max)
    }
}

/// `⟨f, g⟩ = (L/N) Σ f_n conj(g_n)`, evaluated on the spectrum of `g`.
pub fn inner(f: &SampledFunction, phi: &WavePacket) -> Result<Complex64, PacketError> {
    if f.window != phi.func.window {
        return Err(PacketError::GridMismatch);
    }
    let l = f.window.length();
    Ok(phi
        .bins()
        .map(|m| f.coeff(m) * phi.func.coeff(m).conj())
        .sum::<Complex64>()
        * l)
}

/// `⟨f, g⟩` for two arbitrary sampled functions (Parseval form).
pub fn inner_functions(f: &SampledFunction, g: &SampledFunction) -> Result<Complex64, PacketError> {
    if f.window != g.window {
        return Err(PacketError::GridMismatch);
    }
    Ok(f.spectrum()
        .iter()
        .zip(g.spectrum())
        .map(|(a, b)| a * b.conj())
        .sum::<Complex64>()
        * f.window.length())
}

/// Zeroes every bin with nonpositive frequency.
pub fn riesz_project(f: &SampledFunction) -> SampledFunction {
    let w = f.window;
    let spectrum = (0..w.samples)
        .map(|k| if w.bin(k) > 0 { f.spectrum()[k] } else { Complex64::new(0.0, 0.0) })
        .collect();
    SampledFunction::from_spectrum(w, spectrum)
}

fn nonzero_bins(f: &SampledFunction) -> Vec<(i64, Complex64)> {
    f.support().into_iter().map(|m| (m, f.coeff(m))).collect()
}

/// `ĝ(m) = Σ_{m1 + m2 = m, m1 < m2} c1(m1) c2(m2)` (cyclic output bin).
pub fn direct_b(f1: &SampledFunction, f2: &SampledFunction) -> Result<SampledFunction, PacketError> {
    if f1.window != f2.window {
        return Err(PacketError::GridMismatch);
    }
    let w = f1.window;
    let (a, b) = (nonzero_bins(f1), nonzero_bins(f2));
    let mut out = vec![Complex64::new(0.0, 0.0); w.samples];
    for &(m1, c1) in &a {
        for &(m2, c2) in &b {
            if m1 < m2 {
                out[w.index(m1 + m2)] += c1 * c2;
            }
        }
    }
    Ok(SampledFunction::from_spectrum(w, out))
}

/// Cyclic triple convolution with a symbol `m(ξ1, ξ2, ξ3)` evaluated at
/// the bin frequencies. Triples are visited in lexicographic bin order.
pub fn direct_tm<M>(
    f1: &SampledFunction,
    f2: &SampledFunction,
    f3: &SampledFunction,
    symbol: M,
    budget: u64,
) -> Result<SampledFunction, PacketError>
where
    M: Fn(i64, i64, i64) -> f64,
{
    let w = f1.window;
    if f2.window != w || f3.window != w {
        return Err(PacketError::GridMismatch);
    }
    let (a, b, c) = (nonzero_bins(f1), nonzero_bins(f2), nonzero_bins(f3));
    let needed = a.len() as u64 * b.len() as u64 * c.len() as u64;
    if needed > budget {
        return Err(PacketError::Budget { needed, budget });
    }
    let mut out = vec![Complex64::new(0.0, 0.0); w.samples];
    for &(m1, c1) in &a {
        for &(m2, c2) in &b {
            for &(m3, c3) in &c {
                let s = symbol(m1, m2, m3);
                if s != 0.0 {
                    let term = c1 * c2 * c3;
                    out[w.index(m1 + m2 + m3)] += if s == 1.0 { term } else { term * s };
                }
            }
        }
    }
    Ok(SampledFunction::from_spectrum(w, out))
}

/// The operator with symbol `χ_{ξ1 < ξ2 < ξ3}` (strict on bins).
pub fn direct_t(
    f1: &SampledFunction,
    f2: &SampledFunction,
    f3: &SampledFunction,
    budget: u64,
) -> Result<SampledFunction, PacketError> {
    direct_tm(f1, f2, f3, |a, b, c| if a < b && b < c { 1.0 } else { 0.0 }, budget)
}

/// Random function with i.i.d. complex Gaussian coefficients on `bins`.
pub fn random_band_limited<R: rand::Rng>(
    window: Window,
    bins: std::ops::RangeInclusive<i64>,
    rng: &mut R,
) -> SampledFunction {
    let mut spectrum = vec![Complex64::new(0.0, 0.0); window.samples];
    for m in bins {
        let re: f64 = rng.sample(rand_distr::StandardNormal);
        let im: f64 = rng.sample(rand_distr::StandardNormal);
        spectrum[window.index(m)] = Complex64::new(re, im);
    }
    SampledFunction::from_spectrum(window, spectrum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Shift;
    use rand::SeedableRng;

    fn window() -> Window {
        Window::new(6, 1024)
    }

    fn tile(scale: i32, pos: i64, freq: i64) -> Tile {
        Tile { scale, pos, freq, shift: Shift::ZERO }
    }

    #[test]
    fn round_trip() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let f = random_band_limited(window(), -30..=30, &mut rng);
        let g = SampledFunction::from_samples(window(), f.samples().to_vec());
        let err = f
            .spectrum()
            .iter()
            .zip(g.spectrum())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-12 * f.spectrum().iter().map(|c| c.norm()).fold(0.0, f64::max));
    }

    #[test]
    fn packet_normalized_and_supported() {
        let p = make_packet(window(), &tile(0, 10, 2), BumpSpec::Standard).unwrap();
        assert!((inner(&p.func, &p).unwrap().re - 1.0).abs() < 1e-12);
        assert!((p.func.norm() - 1.0).abs() < 1e-12);
        assert!(p.support_inside());
        let q = make_packet(window(), &tile(0, 10, 3), BumpSpec::Standard).unwrap();
        assert!(inner(&q.func, &p).unwrap().norm() < 1e-10);
    }

    #[test]
    fn resolution_guard() {
        assert!(make_packet(window(), &tile(5, 0, 0), BumpSpec::Standard).is_err());
        assert!(make_packet(window(), &tile(7, 0, 0), BumpSpec::Standard).is_err());
        assert!(make_packet(window(), &tile(-4, 0, 100), BumpSpec::Standard).is_err());
    }

    #[test]
    fn direct_b_examples() {
        let w = window();
        let delta = |m: i64| {
            let mut s = vec![Complex64::new(0.0, 0.0); w.samples];
            s[w.index(m)] = Complex64::new(2.0, 1.0);
            SampledFunction::from_spectrum(w, s)
        };
        assert!(direct_b(&delta(5), &delta(2)).unwrap().support().is_empty());
        let g = direct_b(&delta(2), &delta(5)).unwrap();
        assert_eq!(g.support(), vec![7]);
        assert_eq!(g.coeff(7), Complex64::new(2.0, 1.0) * Complex64::new(2.0, 1.0));
    }

    #[test]
    fn riesz_idempotent() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let f = random_band_limited(window(), -10..=10, &mut rng);
        let p = riesz_project(&f);
        assert_eq!(riesz_project(&p).spectrum(), p.spectrum());
        assert!(p.support().iter().all(|&m| m > 0));
    }

    #[test]
    fn binary_round_trip() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let f = random_band_limited(window(), -10..=10, &mut rng);
        let mut buf = Vec::new();
        f.write_binary(&mut buf, Dtype::Complex128).unwrap();
        let g = SampledFunction::read_binary(&buf[..]).unwrap();
        assert_eq!(f.samples(), g.samples());
    }
}
