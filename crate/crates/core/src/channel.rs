//! Frequency-selective channel model: (L+1)-tap impulse responses and the
//! N x (N+L) banded Toeplitz matrices they induce on a block of N+L symbols.
//!
//! Tap ordering is fixed as `[c_L, ..., c_0]` (earliest-delay coefficient
//! first, directly matching the first row of the Toeplitz matrix). This is
//! also the ascending-power coefficient list of the channel polynomial
//! S(z) = sum_j taps[j] z^j used by the root-based precoder construction —
//! reversing it is the classic off-by-one bug, so every consumer goes
//! through this module's accessors.

use ndarray::Array2;
use num_complex::Complex64 as c64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::CMat;

/// An (L+1)-tap complex impulse response, taps ordered `[c_L, ..., c_0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelVector {
    taps: Vec<c64>,
}

impl ChannelVector {
    /// Rejects empty and all-zero tap lists.
    pub fn new(taps: Vec<c64>) -> Result<Self> {
        if taps.is_empty() {
            return Err(Error::InvalidArgument("channel needs at least one tap".into()));
        }
        if taps.iter().all(|t| t.norm_sqr() == 0.0) {
            return Err(Error::DegenerateChannel("all channel taps are zero".into()));
        }
        if taps.iter().any(|t| !t.re.is_finite() || !t.im.is_finite()) {
            return Err(Error::InvalidArgument("channel taps must be finite".into()));
        }
        Ok(Self { taps })
    }

    pub fn from_real(taps: &[f64]) -> Result<Self> {
        Self::new(taps.iter().map(|&x| c64::new(x, 0.0)).collect())
    }

    /// Delay spread L (number of taps minus one).
    pub fn delay_spread(&self) -> usize {
        self.taps.len() - 1
    }

    /// Taps in `[c_L, ..., c_0]` order.
    pub fn taps(&self) -> &[c64] {
        &self.taps
    }

    pub fn norm(&self) -> f64 {
        self.taps.iter().map(|t| t.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// The N x (N+L) banded Toeplitz matrix of a channel: row i carries the taps
/// in columns i..=i+L, zeros elsewhere.
#[derive(Debug, Clone)]
pub struct ToeplitzChannel {
    channel: ChannelVector,
    block_len: usize,
    matrix: CMat,
}

impl ToeplitzChannel {
    /// Block length N (number of rows).
    pub fn block_len(&self) -> usize {
        self.block_len
    }

    pub fn delay_spread(&self) -> usize {
        self.channel.delay_spread()
    }

    /// Total input dimension N + L (number of columns).
    pub fn input_dim(&self) -> usize {
        self.block_len + self.channel.delay_spread()
    }

    pub fn channel(&self) -> &ChannelVector {
        &self.channel
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }
}

/// Builds the banded Toeplitz matrix for channel `c` and block length `n`.
pub fn make_toeplitz(c: &ChannelVector, n: usize) -> Result<ToeplitzChannel> {
    if n == 0 {
        return Err(Error::InvalidArgument("block length N must be >= 1".into()));
    }
    let l = c.delay_spread();
    let mut m = Array2::zeros((n, n + l));
    for i in 0..n {
        for (j, &tap) in c.taps().iter().enumerate() {
            m[[i, i + j]] = tap;
        }
    }
    Ok(ToeplitzChannel {
        channel: c.clone(),
        block_len: n,
        matrix: m,
    })
}

/// A reproducible random stream: identical (seed, index) pairs produce
/// identical draws, independent of execution order or thread count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStream {
    pub seed: u64,
    pub index: u64,
}

impl RngStream {
    pub fn new(seed: u64, index: u64) -> Self {
        Self { seed, index }
    }

    /// A fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> ChaCha12Rng {
        let mut rng = ChaCha12Rng::seed_from_u64(self.seed);
        rng.set_stream(self.index);
        rng
    }
}

/// Draws an (L+1)-tap channel with i.i.d. circularly symmetric complex
/// Gaussian taps of complex variance 1/(L+1): real and imaginary parts each
/// carry half the variance.
pub fn sample_channel(l: usize, stream: RngStream) -> ChannelVector {
    let mut rng = stream.rng();
    let sigma = (0.5 / (l as f64 + 1.0)).sqrt();
    let taps = (0..=l)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            c64::new(re * sigma, im * sigma)
        })
        .collect();
    // all-zero draw has probability zero; new() still guards it
    ChannelVector::new(taps).expect("Gaussian taps are almost surely nonzero")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{numerical_rank, CVec};
    use ndarray::Array1;

    fn c(re: f64, im: f64) -> c64 {
        c64::new(re, im)
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(ChannelVector::new(vec![]).is_err());
        assert!(ChannelVector::new(vec![c(0.0, 0.0), c(0.0, 0.0)]).is_err());
        let ch = ChannelVector::from_real(&[1.0]).unwrap();
        assert!(make_toeplitz(&ch, 0).is_err());
    }

    #[test]
    fn single_tap_gives_identity_band() {
        let ch = ChannelVector::from_real(&[1.0]).unwrap();
        let t = make_toeplitz(&ch, 3).unwrap();
        assert_eq!(t.matrix().dim(), (3, 3));
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert_eq!(t.matrix()[[i, j]], c(want, 0.0));
            }
        }
    }

    #[test]
    fn two_tap_band_matches_display() {
        // c = [-1, 1], L = 1, N = 2 -> [[-1, 1, 0], [0, -1, 1]]
        let ch = ChannelVector::from_real(&[-1.0, 1.0]).unwrap();
        let t = make_toeplitz(&ch, 2).unwrap();
        let m = t.matrix();
        assert_eq!(m.dim(), (2, 3));
        assert_eq!(m[[0, 0]], c(-1.0, 0.0));
        assert_eq!(m[[0, 1]], c(1.0, 0.0));
        assert_eq!(m[[0, 2]], c(0.0, 0.0));
        assert_eq!(m[[1, 0]], c(0.0, 0.0));
        assert_eq!(m[[1, 1]], c(-1.0, 0.0));
        assert_eq!(m[[1, 2]], c(1.0, 0.0));
    }

    #[test]
    fn random_wide_toeplitz_has_full_row_rank() {
        let ch = sample_channel(16, RngStream::new(7, 0));
        let t = make_toeplitz(&ch, 64).unwrap();
        let (rank, smallest) = numerical_rank(t.matrix()).unwrap();
        assert_eq!(rank, 64);
        assert!(smallest > 0.0);
    }

    #[test]
    fn full_row_rank_across_sizes() {
        // nonzero taps always give rank N: a spread of (L, N) pairs, a
        // hundred-plus random draws total
        let mut trial = 0u64;
        for &l in &[1usize, 4, 16] {
            for &n in &[4usize, 16, 64] {
                for _ in 0..12 {
                    let ch = sample_channel(l, RngStream::new(42, trial));
                    trial += 1;
                    let t = make_toeplitz(&ch, n).unwrap();
                    let (rank, _) = numerical_rank(t.matrix()).unwrap();
                    assert_eq!(rank, n, "rank deficit at L={l}, N={n}");
                }
            }
        }
    }

    /// T(c) x equals the interior outputs of the linear convolution of the
    /// tap sequence with x.
    #[test]
    fn toeplitz_action_is_windowed_convolution() {
        let mut rng = RngStream::new(3, 9).rng();
        for _ in 0..20 {
            let l = 1 + (rng.gen::<u64>() % 8) as usize;
            let n = 2 + (rng.gen::<u64>() % 12) as usize;
            let ch = sample_channel(l, RngStream::new(5, rng.gen()));
            let t = make_toeplitz(&ch, n).unwrap();
            let x: CVec = Array1::from(
                (0..n + l)
                    .map(|_| {
                        c64::new(
                            rng.sample::<f64, _>(StandardNormal),
                            rng.sample::<f64, _>(StandardNormal),
                        )
                    })
                    .collect::<Vec<_>>(),
            );
            let via_matrix = t.matrix().dot(&x);
            // direct convolution oracle: y_i = sum_j taps[j] x[i+j]
            let taps = ch.taps();
            for i in 0..n {
                let mut acc = c64::new(0.0, 0.0);
                for (j, &tap) in taps.iter().enumerate() {
                    acc += tap * x[i + j];
                }
                let err = (via_matrix[i] - acc).norm();
                assert!(err <= 1e-12 * acc.norm().max(1.0));
            }
        }
    }

    #[test]
    fn sample_channel_is_deterministic_per_stream() {
        let a = sample_channel(8, RngStream::new(11, 4));
        let b = sample_channel(8, RngStream::new(11, 4));
        assert_eq!(a, b);
        let c = sample_channel(8, RngStream::new(11, 5));
        assert_ne!(a, c);
    }

    #[test]
    fn single_tap_variance_is_one() {
        let draws = 100_000;
        let mut acc = 0.0;
        for i in 0..draws {
            let ch = sample_channel(0, RngStream::new(123, i));
            acc += ch.taps()[0].norm_sqr();
        }
        let var = acc / draws as f64;
        assert!((var - 1.0).abs() < 0.02, "empirical variance {var}");
    }

    #[test]
    fn per_tap_variance_matches_inverse_tap_count() {
        let l = 16;
        let draws = 100_000u64;
        let mut acc = vec![0.0; l + 1];
        for i in 0..draws {
            let ch = sample_channel(l, RngStream::new(99, i));
            for (k, t) in ch.taps().iter().enumerate() {
                acc[k] += t.norm_sqr();
            }
        }
        let want = 1.0 / (l as f64 + 1.0);
        for (k, sum) in acc.iter().enumerate() {
            let var = sum / draws as f64;
            assert!(
                (var - want).abs() < 0.02 * want,
                "tap {k} variance {var}, want {want}"
            );
        }
    }
}
