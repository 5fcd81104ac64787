//! Uniform random sources: seeded pseudo-random streams and randomly shifted
//! Sobol sequences, with a fixed per-step coordinate layout, deterministic
//! replay, and contiguous partitioning for parallel workers.

use crate::error::{Error, Result};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

/// Direction-number table (Joe–Kuo primitive polynomials and initial numbers),
/// shipped as a binary asset covering 16384 dimensions.
static SOBOL_TABLE: &[u8] = include_bytes!("../assets/sobol_joe_kuo_16384.bin");

const SOBOL_BITS: usize = 32;
const VINIT_LEN: usize = 18;

struct DirectionNumbers {
    /// v[dim * SOBOL_BITS + k]: direction number for bit k, as a 32-bit fraction.
    v: Vec<u32>,
    ndim: usize,
}

fn direction_numbers() -> &'static DirectionNumbers {
    static TABLE: OnceLock<DirectionNumbers> = OnceLock::new();
    TABLE.get_or_init(|| {
        let raw = SOBOL_TABLE;
        let read_u32 = |off: usize| -> u32 {
            u32::from_le_bytes([raw[off], raw[off + 1], raw[off + 2], raw[off + 3]])
        };
        let ndim = read_u32(0) as usize;
        let rec = 4 * (1 + VINIT_LEN);
        let mut v = vec![0u32; ndim * SOBOL_BITS];
        let mut m = [0u64; SOBOL_BITS];
        for dim in 0..ndim {
            let base = 4 + dim * rec;
            let poly = read_u32(base) as u64;
            let out = &mut v[dim * SOBOL_BITS..(dim + 1) * SOBOL_BITS];
            if dim == 0 {
                for (k, o) in out.iter_mut().enumerate() {
                    *o = 1u32 << (31 - k);
                }
                continue;
            }
            let s = (63 - poly.leading_zeros()) as usize; // degree of the polynomial
            for k in 0..s.min(SOBOL_BITS) {
                m[k] = read_u32(base + 4 + 4 * k) as u64;
            }
            for k in s..SOBOL_BITS {
                let mut mk = m[k - s] ^ (m[k - s] << s);
                for i in 1..s {
                    if (poly >> (s - i)) & 1 == 1 {
                        mk ^= m[k - i] << i;
                    }
                }
                m[k] = mk;
            }
            for (k, o) in out.iter_mut().enumerate() {
                *o = (m[k] as u32) << (31 - k);
            }
        }
        DirectionNumbers { v, ndim }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StreamKind {
    Pseudo,
    Sobol,
}

/// Specification of a uniform stream: the consuming scheme's coordinate
/// dimension, the number of random shifts m1, points per shift m2 (total
/// sample count m = m1 * m2), and the seed.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StreamSpec {
    pub kind: StreamKind,
    pub dimension: usize,
    pub shifts: u32,
    pub points_per_shift: u64,
    pub seed: u64,
}

impl StreamSpec {
    pub fn total_points(&self) -> u64 {
        self.shifts as u64 * self.points_per_shift
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension == 0 || self.shifts == 0 || self.points_per_shift == 0 {
            return Err(Error::Config(
                "stream dimension, shifts and points_per_shift must be positive".into(),
            ));
        }
        if self.kind == StreamKind::Sobol {
            let ndim = direction_numbers().ndim;
            if self.dimension > ndim {
                return Err(Error::Config(format!(
                    "Sobol dimension {} exceeds table size {ndim}",
                    self.dimension
                )));
            }
            if self.points_per_shift >= (1u64 << SOBOL_BITS) {
                return Err(Error::Config(
                    "points_per_shift exceeds the Sobol period".into(),
                ));
            }
        }
        Ok(())
    }

    /// The random shift vector of replicate `rep`, drawn from a seeded
    /// generator independent of consumption order.
    pub fn shift_vector(&self, rep: u32) -> Vec<f64> {
        let mut rng = ChaCha12Rng::seed_from_u64(self.seed);
        rng.set_stream(1 + rep as u64);
        (0..self.dimension).map(|_| uniform64(&mut rng)).collect()
    }

    /// Stream over all m1 * m2 points in replicate-major order.
    pub fn stream(&self) -> Result<Stream> {
        self.validate()?;
        Ok(Stream::new(self.clone(), 0, self.total_points()))
    }
}

#[inline]
fn uniform64<R: RngCore>(rng: &mut R) -> f64 {
    // 53 random bits in [0, 1)
    (rng.next_u64() >> 11) as f64 * (1.0 / 9007199254740992.0)
}

/// Raw (unshifted) Sobol coordinate of point `index` in Gray-code order.
/// Index 0 is the all-zeros point.
pub fn sobol_raw(index: u64, dim: usize) -> f64 {
    let table = direction_numbers();
    let v = &table.v[dim * SOBOL_BITS..(dim + 1) * SOBOL_BITS];
    let gray = index ^ (index >> 1);
    let mut acc = 0u32;
    let mut g = gray;
    while g != 0 {
        let b = g.trailing_zeros() as usize;
        acc ^= v[b];
        g &= g - 1;
    }
    acc as f64 * (1.0 / 4294967296.0)
}

enum StreamState {
    Sobol {
        /// Current raw point as 32-bit integers, Gray-incremented.
        current: Vec<u32>,
        shift: Vec<f64>,
        /// Sobol index of `current` (enumeration skips index 0).
        index: u64,
        rep: u32,
    },
    Pseudo {
        rng: ChaCha12Rng,
    },
}

/// Single-consumer uniform stream over a contiguous global index range.
pub struct Stream {
    spec: StreamSpec,
    pos: u64,
    end: u64,
    state: Option<StreamState>,
}

impl Stream {
    fn new(spec: StreamSpec, start: u64, end: u64) -> Self {
        Stream {
            spec,
            pos: start,
            end,
            state: None,
        }
    }

    pub fn spec(&self) -> &StreamSpec {
        &self.spec
    }

    /// Remaining number of points.
    pub fn remaining(&self) -> u64 {
        self.end - self.pos
    }

    fn seek_state(&mut self) {
        let dim = self.spec.dimension;
        match self.spec.kind {
            StreamKind::Pseudo => {
                let mut rng = ChaCha12Rng::seed_from_u64(self.spec.seed);
                // 2 words of 32 bits per 64-bit draw, dim draws per point
                rng.set_word_pos(self.pos as u128 * dim as u128 * 2);
                self.state = Some(StreamState::Pseudo { rng });
            }
            StreamKind::Sobol => {
                let rep = (self.pos / self.spec.points_per_shift) as u32;
                let index = self.pos % self.spec.points_per_shift + 1; // skip index 0
                let table = direction_numbers();
                let gray = index ^ (index >> 1);
                let mut current = vec![0u32; dim];
                let mut g = gray;
                while g != 0 {
                    let b = g.trailing_zeros() as usize;
                    for (d, c) in current.iter_mut().enumerate() {
                        *c ^= table.v[d * SOBOL_BITS + b];
                    }
                    g &= g - 1;
                }
                self.state = Some(StreamState::Sobol {
                    current,
                    shift: self.spec.shift_vector(rep),
                    index,
                    rep,
                });
            }
        }
    }

    /// Fill `out` (length = dimension) with the next point's coordinates.
    pub fn next_point(&mut self, out: &mut [f64]) -> Result<()> {
        debug_assert_eq!(out.len(), self.spec.dimension);
        if self.pos >= self.end {
            return Err(Error::StreamExhausted(self.end));
        }
        if self.state.is_none() {
            self.seek_state();
        }
        match self.state.as_mut().unwrap() {
            StreamState::Pseudo { rng } => {
                for o in out.iter_mut() {
                    *o = uniform64(rng);
                }
            }
            StreamState::Sobol {
                current,
                shift,
                index,
                rep,
            } => {
                let expected_rep = (self.pos / self.spec.points_per_shift) as u32;
                if expected_rep != *rep {
                    self.seek_state();
                    return self.next_point(out);
                }
                for ((o, &c), &s) in out.iter_mut().zip(current.iter()).zip(shift.iter()) {
                    let u = c as f64 * (1.0 / 4294967296.0) + s;
                    *o = u - u.floor();
                }
                // Gray-code increment to the next index within the replicate.
                let table = direction_numbers();
                let next = *index + 1;
                let b = next.trailing_zeros() as usize;
                for (d, c) in current.iter_mut().enumerate() {
                    *c ^= table.v[d * SOBOL_BITS + b];
                }
                *index = next;
            }
        }
        self.pos += 1;
        // Replicate boundary: drop the cursor so the next call reseeds.
        if self.spec.kind == StreamKind::Sobol && self.pos % self.spec.points_per_shift == 0 {
            self.state = None;
        }
        Ok(())
    }

    /// Split the remaining range into `workers` contiguous sub-streams whose
    /// concatenated output reproduces this stream exactly.
    pub fn partition(&self, workers: usize) -> Vec<Stream> {
        let total = self.end - self.pos;
        let workers = workers.max(1) as u64;
        let base = total / workers;
        let extra = total % workers;
        let mut out = Vec::new();
        let mut start = self.pos;
        for i in 0..workers {
            let len = base + if i < extra { 1 } else { 0 };
            out.push(Stream::new(self.spec.clone(), start, start + len));
            start += len;
        }
        out
    }
}

/// Inverse of the standard normal CDF, |error| <= 1e-9 over (0, 1):
/// rational initial guess followed by one Newton refinement of Phi.
pub fn inv_normal_cdf(u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::Domain(format!(
            "inverse normal CDF requires u in (0,1), got {u}"
        )));
    }
    Ok(inv_normal_cdf_unchecked(u))
}

#[inline]
pub(crate) fn inv_normal_cdf_unchecked(u: f64) -> f64 {
    // Acklam's rational approximation
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const U_LO: f64 = 0.02425;

    let x = if u < U_LO {
        let q = (-2.0 * u.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if u <= 1.0 - U_LO {
        let q = u - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - u).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    // One Newton step on Phi(x) - u
    let pdf = (-0.5 * x * x).exp() * 0.3989422804014327;
    let cdf = 0.5 * statrs::function::erf::erfc(-x * std::f64::consts::FRAC_1_SQRT_2);
    x - (cdf - u) / pdf
}
