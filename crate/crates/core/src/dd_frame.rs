//! Delay-Doppler frames: constellation mapping and the deterministic
//! transforms between the delay-Doppler, time-frequency, and time domains.
//!
//! A frame is an `M x N` grid of complex symbols (`M` subcarriers along the
//! delay axis, `N` time slots along the Doppler axis). The transmit side maps
//! the grid to the time-frequency plane with the inverse symplectic finite
//! Fourier transform and then to a time-domain vector with the Heisenberg
//! transform; the receive side inverts both steps (Wigner transform followed
//! by the SFFT). Rectangular pulses are assumed throughout, so both
//! pulse-shaping matrices are the identity and the combined time-domain
//! operator reduces to the unitary `F_N^H (x) I_M`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{dft_matrix, idft_matrix, left_mul_grid, right_mul_grid};

/// Square QAM alphabet with unit average symbol energy.
///
/// Symbol indices are Gray-coded per dimension: the first half of each bit
/// group selects the in-phase level, the second half the quadrature level.
/// Bit group `00` maps to the top-right point `(+c) + j(+c)`.
#[derive(Debug, Clone)]
pub struct Constellation {
    points: Vec<Complex64>,
    q: usize,
    bits_per_symbol: usize,
    amplitude: f64,
}

fn gray_decode(mut g: usize) -> usize {
    let mut b = g;
    while g > 0 {
        g >>= 1;
        b ^= g;
    }
    b
}

impl Constellation {
    /// Build a square QAM constellation of order `q` (a power of 4).
    pub fn qam(q: usize) -> Result<Self> {
        if q < 4 || !q.is_power_of_two() || !q.trailing_zeros().is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "QAM order must be a power of 4, got {q}"
            )));
        }
        let bits_per_symbol = q.trailing_zeros() as usize;
        let levels = 1usize << (bits_per_symbol / 2);
        // Unit average energy: two dimensions, each with the standard
        // odd-integer level set {+-1, +-3, ...} scaled by c.
        let c = (3.0 / (2.0 * (levels * levels - 1) as f64)).sqrt();
        let level_of = |code: usize| -> f64 { (levels as f64 - 1.0 - 2.0 * gray_decode(code) as f64) * c };
        let half = bits_per_symbol / 2;
        let points = (0..q)
            .map(|idx| Complex64::new(level_of(idx >> half), level_of(idx & (levels - 1))))
            .collect();
        Ok(Self {
            points,
            q,
            bits_per_symbol,
            amplitude: c,
        })
    }

    pub fn qam4() -> Self {
        Self::qam(4).expect("4-QAM is always valid")
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn size(&self) -> usize {
        self.q
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.bits_per_symbol
    }

    /// Per-dimension base amplitude `c` (1/sqrt(2) for 4-QAM).
    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    /// Index of the nearest point in Euclidean distance. Ties go to the
    /// lexicographically smallest point (by real part, then imaginary part).
    pub fn nearest_index(&self, z: Complex64) -> usize {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (idx, p) in self.points.iter().enumerate() {
            let d = (z - p).norm_sqr();
            if d < best_d || (d == best_d && lex_less(*p, self.points[best])) {
                best = idx;
                best_d = d;
            }
        }
        best
    }

    /// Writes the bit group of symbol index `idx` (MSB first).
    pub fn index_to_bits(&self, idx: usize, out: &mut Vec<u8>) {
        for k in (0..self.bits_per_symbol).rev() {
            out.push(((idx >> k) & 1) as u8);
        }
    }

    fn bits_to_index(&self, bits: &[u8]) -> Result<usize> {
        let mut idx = 0usize;
        for &b in bits {
            if b > 1 {
                return Err(Error::InvalidInput(format!("bit value {b} is not 0 or 1")));
            }
            idx = (idx << 1) | b as usize;
        }
        Ok(idx)
    }
}

fn lex_less(a: Complex64, b: Complex64) -> bool {
    (a.re, a.im) < (b.re, b.im)
}

/// `M x N` complex symbol grid in one of the frame domains, stored
/// column-major so the storage order is the column-wise vectorization.
#[derive(Debug, Clone, PartialEq)]
pub struct DDGrid {
    m: usize,
    n: usize,
    data: Vec<Complex64>,
}

impl DDGrid {
    pub fn zeros(m: usize, n: usize) -> Self {
        Self {
            m,
            n,
            data: vec![Complex64::new(0.0, 0.0); m * n],
        }
    }

    /// Fold a column-wise vectorization back into a grid.
    pub fn from_vec(m: usize, n: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != m * n {
            return Err(Error::InvalidInput(format!(
                "expected {} entries for a {m}x{n} grid, got {}",
                m * n,
                data.len()
            )));
        }
        Ok(Self { m, n, data })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn entry(&self, row: usize, col: usize) -> Complex64 {
        self.data[col * self.m + row]
    }

    #[inline]
    pub fn set_entry(&mut self, row: usize, col: usize, v: Complex64) {
        self.data[col * self.m + row] = v;
    }

    /// Column-wise vectorization.
    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.data
    }
}

/// Length `M*N` time-domain sample vector. The cyclic prefix is implicit in
/// the circular channel model and never materialized.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSignal {
    m: usize,
    n: usize,
    samples: Vec<Complex64>,
}

impl TimeSignal {
    pub fn new(m: usize, n: usize, samples: Vec<Complex64>) -> Result<Self> {
        if samples.len() != m * n {
            return Err(Error::InvalidInput(format!(
                "expected {} samples, got {}",
                m * n,
                samples.len()
            )));
        }
        Ok(Self { m, n, samples })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    /// Sample period `T_s / M` for a given subcarrier spacing (display only;
    /// the discrete model never uses it).
    pub fn sample_period(&self, delta_f_hz: f64) -> f64 {
        1.0 / (delta_f_hz * self.m as f64)
    }
}

/// Map a bit stream onto an `M x N` delay-Doppler grid, column-major fill.
pub fn map_bits(bits: &[u8], cons: &Constellation, m: usize, n: usize) -> Result<DDGrid> {
    let bps = cons.bits_per_symbol();
    let needed = m * n * bps;
    if bits.len() != needed {
        return Err(Error::InvalidInput(format!(
            "bit stream length {} does not match {m}x{n} grid at {bps} bits/symbol (need {needed})",
            bits.len()
        )));
    }
    let mut data = Vec::with_capacity(m * n);
    for group in bits.chunks_exact(bps) {
        let idx = cons.bits_to_index(group)?;
        data.push(cons.points()[idx]);
    }
    DDGrid::from_vec(m, n, data)
}

/// Inverse symplectic finite Fourier transform: `X_TF = F_M X_DD F_N^H`.
pub fn isfft(x_dd: &DDGrid) -> DDGrid {
    let (m, n) = (x_dd.m(), x_dd.n());
    let f_m = dft_matrix(m);
    let f_n_h = idft_matrix(n);
    let tmp = left_mul_grid(&f_m, x_dd.as_slice(), m, n);
    let data = right_mul_grid(&tmp, m, n, &f_n_h);
    DDGrid { m, n, data }
}

/// Symplectic finite Fourier transform: `Y_DD = F_M^H Y_TF F_N`.
pub fn sfft(y_tf: &DDGrid) -> DDGrid {
    let (m, n) = (y_tf.m(), y_tf.n());
    let f_m_h = idft_matrix(m);
    let f_n = dft_matrix(n);
    let tmp = left_mul_grid(&f_m_h, y_tf.as_slice(), m, n);
    let data = right_mul_grid(&tmp, m, n, &f_n);
    DDGrid { m, n, data }
}

/// Heisenberg transform with rectangular pulses:
/// `s = (F_N^H (x) I_M) x_DD = vec(X_DD F_N^H)`.
pub fn modulate(x_dd: &DDGrid) -> TimeSignal {
    let (m, n) = (x_dd.m(), x_dd.n());
    let f_n_h = idft_matrix(n);
    let samples = right_mul_grid(x_dd.as_slice(), m, n, &f_n_h);
    TimeSignal { m, n, samples }
}

/// Wigner transform plus SFFT with rectangular pulses:
/// `y_DD = (F_N (x) I_M) r = vec(R F_N)`.
pub fn demodulate(r: &TimeSignal) -> DDGrid {
    let (m, n) = (r.m(), r.n());
    let f_n = dft_matrix(n);
    let data = right_mul_grid(r.samples(), m, n, &f_n);
    DDGrid { m, n, data }
}

/// Minimum-distance decisions on a real-stacked estimate.
///
/// `x` holds the real parts of all `M*N` symbols followed by the imaginary
/// parts. Returns the decided grid together with the demapped bit stream.
pub fn hard_demap(
    x: &[f64],
    cons: &Constellation,
    m: usize,
    n: usize,
) -> Result<(DDGrid, Vec<u8>)> {
    let mn = m * n;
    if x.len() != 2 * mn {
        return Err(Error::InvalidInput(format!(
            "real-stacked estimate has length {}, expected {}",
            x.len(),
            2 * mn
        )));
    }
    let mut grid = DDGrid::zeros(m, n);
    let mut bits = Vec::with_capacity(mn * cons.bits_per_symbol());
    for s in 0..mn {
        let z = Complex64::new(x[s], x[mn + s]);
        let idx = cons.nearest_index(z);
        grid.data[s] = cons.points()[idx];
        cons.index_to_bits(idx, &mut bits);
    }
    Ok((grid, bits))
}
