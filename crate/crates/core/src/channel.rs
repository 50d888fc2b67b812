//! Doubly dispersive channel model with integer delay and Doppler taps.
//!
//! A realization is a set of `P` paths, each a complex gain plus a delay
//! index `l` and a Doppler index `k` on the frame's delay-Doppler lattice.
//! The time-domain action on an `MN`-sample frame is circular: delay is a
//! cyclic shift, Doppler a progressive phase ramp. The module also builds
//! the effective delay-Doppler channel matrix and the stacked real-valued
//! linear model consumed by all detectors.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::dd_frame::TimeSignal;
use crate::error::{Error, Result};
use crate::linalg::{dft_matrix, idft_matrix, right_mul_grid, ComplexMatrix, RealMatrix};

/// One propagation path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathParams {
    pub gain: Complex64,
    /// Delay index `l` in `[0, l_max]`.
    pub delay_index: usize,
    /// Doppler index `k` in `[-k_max, k_max]`.
    pub doppler_index: i64,
}

impl PathParams {
    /// Path delay in seconds for a given subcarrier spacing (display only).
    pub fn delay_seconds(&self, delta_f_hz: f64, m: usize) -> f64 {
        self.delay_index as f64 / (delta_f_hz * m as f64)
    }

    /// Doppler shift in Hz for a given subcarrier spacing (display only).
    pub fn doppler_hz(&self, delta_f_hz: f64, n: usize) -> f64 {
        self.doppler_index as f64 * delta_f_hz / n as f64
    }
}

/// A sampled multipath channel tied to an `M x N` frame geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub paths: Vec<PathParams>,
    pub m: usize,
    pub n: usize,
}

impl ChannelRealization {
    /// Check the lattice bounds and the all-pairs-distinct invariant.
    pub fn validate(&self) -> Result<()> {
        if self.paths.is_empty() {
            return Err(Error::InvalidParameter("channel needs at least one path".into()));
        }
        for p in &self.paths {
            if p.delay_index >= self.m {
                return Err(Error::InvalidParameter(format!(
                    "delay index {} exceeds M-1 = {}",
                    p.delay_index,
                    self.m - 1
                )));
            }
            if p.doppler_index.unsigned_abs() as usize > self.n / 2 {
                return Err(Error::InvalidParameter(format!(
                    "Doppler index {} exceeds floor(N/2) = {}",
                    p.doppler_index,
                    self.n / 2
                )));
            }
        }
        for (i, a) in self.paths.iter().enumerate() {
            for b in &self.paths[..i] {
                if a.delay_index == b.delay_index && a.doppler_index == b.doppler_index {
                    return Err(Error::InvalidParameter(format!(
                        "duplicate (l, k) pair ({}, {})",
                        a.delay_index, a.doppler_index
                    )));
                }
            }
        }
        Ok(())
    }

    /// Plain-text dump, one path per line: `re(h) im(h) l k`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for p in &self.paths {
            out.push_str(&format!(
                "{} {} {} {}\n",
                p.gain.re, p.gain.im, p.delay_index, p.doppler_index
            ));
        }
        out
    }

    /// Parse the [`to_text`](Self::to_text) format back into a realization.
    pub fn from_text(text: &str, m: usize, n: usize) -> Result<Self> {
        let mut paths = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 4 {
                return Err(Error::InvalidInput(format!(
                    "channel line {}: expected 4 fields, got {}",
                    lineno + 1,
                    fields.len()
                )));
            }
            let parse_f = |s: &str| -> Result<f64> {
                s.parse()
                    .map_err(|_| Error::InvalidInput(format!("channel line {}: bad number '{s}'", lineno + 1)))
            };
            let re = parse_f(fields[0])?;
            let im = parse_f(fields[1])?;
            let l: usize = fields[2].parse().map_err(|_| {
                Error::InvalidInput(format!("channel line {}: bad delay index '{}'", lineno + 1, fields[2]))
            })?;
            let k: i64 = fields[3].parse().map_err(|_| {
                Error::InvalidInput(format!("channel line {}: bad Doppler index '{}'", lineno + 1, fields[3]))
            })?;
            paths.push(PathParams {
                gain: Complex64::new(re, im),
                delay_index: l,
                doppler_index: k,
            });
        }
        let ch = Self { paths, m, n };
        ch.validate()?;
        Ok(ch)
    }
}

/// Draw a random channel: `P` distinct `(l, k)` pairs uniform over the index
/// rectangle, gains i.i.d. circularly symmetric complex Gaussian with total
/// variance `1/P` per path.
pub fn sample_channel<R: Rng + ?Sized>(
    p: usize,
    l_max: usize,
    k_max: usize,
    m: usize,
    n: usize,
    rng: &mut R,
) -> Result<ChannelRealization> {
    if p == 0 {
        return Err(Error::InvalidParameter("path count P must be at least 1".into()));
    }
    if l_max >= m {
        return Err(Error::InvalidParameter(format!(
            "l_max = {l_max} violates l_max <= M-1 = {}",
            m - 1
        )));
    }
    if k_max > n / 2 {
        return Err(Error::InvalidParameter(format!(
            "k_max = {k_max} violates k_max <= floor(N/2) = {}",
            n / 2
        )));
    }
    let lattice = (l_max + 1) * (2 * k_max + 1);
    if p > lattice {
        return Err(Error::InvalidParameter(format!(
            "P = {p} exceeds the {lattice} distinct (l, k) pairs available"
        )));
    }

    // Partial Fisher-Yates over the flattened lattice gives P distinct pairs
    // uniformly without replacement.
    let mut indices: Vec<usize> = (0..lattice).collect();
    for i in 0..p {
        let j = rng.gen_range(i..lattice);
        indices.swap(i, j);
    }

    let std = (1.0 / (2.0 * p as f64)).sqrt();
    let paths = indices[..p]
        .iter()
        .map(|&idx| {
            let l = idx / (2 * k_max + 1);
            let k = (idx % (2 * k_max + 1)) as i64 - k_max as i64;
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            PathParams {
                gain: Complex64::new(re * std, im * std),
                delay_index: l,
                doppler_index: k,
            }
        })
        .collect();
    Ok(ChannelRealization { paths, m, n })
}

/// Dense `MN x MN` time-domain channel matrix
/// `H = sum_i h_i I_MN(l_i) Delta(k_i)`.
///
/// `I_MN(l)` circularly left-shifts the identity's columns by `l` and
/// `Delta(k)` is the Doppler phase-ramp diagonal, so the `(r, c)` entry is
/// `h_i exp(j 2 pi k_i c / MN)` at `r = (c + l_i) mod MN`.
pub fn time_domain_matrix(ch: &ChannelRealization) -> ComplexMatrix {
    let mn = ch.m * ch.n;
    let mut h = ComplexMatrix::zeros(mn, mn);
    for path in &ch.paths {
        for c in 0..mn {
            let r = (c + path.delay_index) % mn;
            let phase = 2.0 * std::f64::consts::PI * path.doppler_index as f64 * c as f64
                / mn as f64;
            h.add_assign_at(r, c, path.gain * Complex64::from_polar(1.0, phase));
        }
    }
    h
}

/// Apply the channel sample by sample (noise excluded):
/// `r(n) = sum_i h_i exp(j 2 pi k_i (n - l_i) / MN) s([n - l_i]_MN)`.
pub fn apply_channel_samplewise(s: &TimeSignal, ch: &ChannelRealization) -> TimeSignal {
    let mn = s.samples().len();
    let mut out = vec![Complex64::new(0.0, 0.0); mn];
    for path in &ch.paths {
        for (n, o) in out.iter_mut().enumerate() {
            let shifted = (n as i64 - path.delay_index as i64).rem_euclid(mn as i64) as usize;
            let phase = 2.0 * std::f64::consts::PI
                * path.doppler_index as f64
                * (n as f64 - path.delay_index as f64)
                / mn as f64;
            *o += path.gain * Complex64::from_polar(1.0, phase) * s.samples()[shifted];
        }
    }
    TimeSignal::new(s.m(), s.n(), out).expect("same length as input")
}

/// Effective delay-Doppler channel matrix
/// `H_DD = (F_N (x) I_M) H (F_N^H (x) I_M)`.
///
/// Both Kronecker factors are applied through their grid form (fold, DFT
/// along the Doppler axis, unfold), which avoids materializing the dense
/// `MN x MN` Kronecker operators.
pub fn effective_dd_matrix(ch: &ChannelRealization) -> ComplexMatrix {
    let (m, n) = (ch.m, ch.n);
    let mn = m * n;
    let h = time_domain_matrix(ch);
    let f_n = dft_matrix(n);
    let f_n_h = idft_matrix(n);

    // A = H (F_N^H (x) I_M): the Kronecker factor is symmetric, so it can be
    // applied to each row of H.
    let mut a = ComplexMatrix::zeros(mn, mn);
    for i in 0..mn {
        let transformed = right_mul_grid(h.row(i), m, n, &f_n_h);
        a.row_mut(i).copy_from_slice(&transformed);
    }

    // H_DD = (F_N (x) I_M) A, column by column.
    let mut h_dd = ComplexMatrix::zeros(mn, mn);
    let mut col = vec![Complex64::new(0.0, 0.0); mn];
    for j in 0..mn {
        for (i, c) in col.iter_mut().enumerate() {
            *c = a.get(i, j);
        }
        let transformed = right_mul_grid(&col, m, n, &f_n);
        for (i, v) in transformed.into_iter().enumerate() {
            h_dd.set(i, j, v);
        }
    }
    h_dd
}

/// The time-to-DD noise map `(F_N (x) I_M) w`, exposed for equivalence checks.
pub fn time_to_dd(v: &[Complex64], m: usize, n: usize) -> Vec<Complex64> {
    right_mul_grid(v, m, n, &dft_matrix(n))
}

/// Add complex white Gaussian noise with per-sample variance `sigma_c2`.
pub fn add_awgn<R: Rng + ?Sized>(
    r: &TimeSignal,
    sigma_c2: f64,
    rng: &mut R,
) -> Result<TimeSignal> {
    if sigma_c2 < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "noise variance must be non-negative, got {sigma_c2}"
        )));
    }
    if sigma_c2 == 0.0 {
        return Ok(r.clone());
    }
    let std = (sigma_c2 / 2.0).sqrt();
    let samples = r
        .samples()
        .iter()
        .map(|&s| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            s + Complex64::new(re * std, im * std)
        })
        .collect();
    TimeSignal::new(r.m(), r.n(), samples)
}

/// `SNR = 10 log10(1 / sigma_c^2)`, inverted: `sigma_c^2 = 10^(-snr/10)`.
pub fn snr_to_sigma2(snr_db: f64) -> f64 {
    10.0f64.powf(-snr_db / 10.0)
}

/// Real-valued `2MN` system shared by every detector: stacked real and
/// imaginary parts of the delay-Doppler model.
#[derive(Debug, Clone)]
pub struct RealLinearModel {
    /// `[Re(H_DD) -Im(H_DD); Im(H_DD) Re(H_DD)]`.
    pub h: RealMatrix,
    /// `[Re(y_DD); Im(y_DD)]`.
    pub y: Vec<f64>,
    /// Per-real-dimension noise variance `sigma_c^2 / 2`.
    pub sigma2: f64,
    /// Stacked transmitted symbols, when known (for scoring).
    pub x_true: Option<Vec<f64>>,
}

impl RealLinearModel {
    /// System dimension `2MN`.
    pub fn dim(&self) -> usize {
        self.h.rows()
    }
}

/// Stack the complex model into its real-valued form.
pub fn to_real_model(
    h_dd: &ComplexMatrix,
    y_dd: &[Complex64],
    sigma_c2: f64,
    x_dd: Option<&[Complex64]>,
) -> RealLinearModel {
    let mn = h_dd.rows();
    assert_eq!(h_dd.cols(), mn);
    assert_eq!(y_dd.len(), mn);
    let mut h = RealMatrix::zeros(2 * mn, 2 * mn);
    for i in 0..mn {
        for j in 0..mn {
            let z = h_dd.get(i, j);
            h.set(i, j, z.re);
            h.set(i, mn + j, -z.im);
            h.set(mn + i, j, z.im);
            h.set(mn + i, mn + j, z.re);
        }
    }
    let stack = |v: &[Complex64]| -> Vec<f64> {
        v.iter().map(|z| z.re).chain(v.iter().map(|z| z.im)).collect()
    };
    RealLinearModel {
        h,
        y: stack(y_dd),
        sigma2: sigma_c2 / 2.0,
        x_true: x_dd.map(stack),
    }
}
