//! Signal-processing primitives: a second-order Butterworth low-pass applied
//! forward and backward, a derivative-of-Gaussian continuous wavelet
//! transform at a single scale, and autocorrelation helpers.

use std::f64::consts::{PI, SQRT_2};

use crate::error::{Error, Result};

/// Second-order section in transposed direct form II.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    /// Feedback coefficients `a1, a2` (with `a0` normalized to 1).
    pub a: [f64; 2],
}

impl Biquad {
    /// Second-order Butterworth low-pass designed with the bilinear transform
    /// and frequency prewarping, so the -3 dB point lands exactly on `cutoff_hz`.
    pub fn butterworth_lowpass(cutoff_hz: f64, sample_rate_hz: f64) -> Result<Self> {
        if !(cutoff_hz > 0.0) || !(sample_rate_hz > 0.0) {
            return Err(Error::Config(format!(
                "cutoff ({cutoff_hz} Hz) and sample rate ({sample_rate_hz} Hz) must be positive"
            )));
        }
        let nyquist = sample_rate_hz / 2.0;
        if cutoff_hz >= nyquist {
            return Err(Error::Config(format!(
                "cutoff {cutoff_hz} Hz must be below the Nyquist frequency {nyquist} Hz"
            )));
        }
        let k = (PI * cutoff_hz / sample_rate_hz).tan();
        let k2 = k * k;
        let norm = 1.0 / (1.0 + SQRT_2 * k + k2);
        let b0 = k2 * norm;
        Ok(Self {
            b: [b0, 2.0 * b0, b0],
            a: [2.0 * (k2 - 1.0) * norm, (1.0 - SQRT_2 * k + k2) * norm],
        })
    }

    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }

    /// State that yields a steady output for a unit step input.
    fn steady_state(&self) -> [f64; 2] {
        let g = self.dc_gain();
        let z2 = self.b[2] - self.a[1] * g;
        let z1 = self.b[1] - self.a[0] * g + z2;
        [z1, z2]
    }

    fn run(&self, x: &mut [f64], mut z: [f64; 2]) {
        let [b0, b1, b2] = self.b;
        let [a1, a2] = self.a;
        for v in x.iter_mut() {
            let input = *v;
            let y = b0 * input + z[0];
            z[0] = b1 * input - a1 * y + z[1];
            z[1] = b2 * input - a2 * y;
            *v = y;
        }
    }

    /// Zero-phase forward-backward filtering.
    ///
    /// The signal is extended at both ends by odd reflection about the edge
    /// sample (three filter lengths), and each pass starts from the
    /// steady-state filter memory scaled to its first sample.
    pub fn filtfilt(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        if n < 2 {
            return x.to_vec();
        }
        let pad = (3 * 3).min(n - 1);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        for i in (1..=pad).rev() {
            ext.push(2.0 * x[0] - x[i]);
        }
        ext.extend_from_slice(x);
        for i in 1..=pad {
            ext.push(2.0 * x[n - 1] - x[n - 1 - i]);
        }

        let zi = self.steady_state();
        let first = ext[0];
        self.run(&mut ext, [zi[0] * first, zi[1] * first]);
        ext.reverse();
        let first = ext[0];
        self.run(&mut ext, [zi[0] * first, zi[1] * first]);
        ext.reverse();
        ext[pad..pad + n].to_vec()
    }
}

/// Zero-phase second-order Butterworth low-pass of `x`.
pub fn lowpass_zero_phase(x: &[f64], cutoff_hz: f64, sample_rate_hz: f64) -> Result<Vec<f64>> {
    Ok(Biquad::butterworth_lowpass(cutoff_hz, sample_rate_hz)?.filtfilt(x))
}

/// Half-width, in samples, of the truncated derivative-of-Gaussian kernel.
pub fn wavelet_half_width(scale: f64) -> usize {
    (4.0 * scale).ceil().max(1.0) as usize
}

/// Number of samples spanned by the analyzing function at `scale`.
pub fn wavelet_support(scale: f64) -> usize {
    2 * wavelet_half_width(scale) + 1
}

/// Peak frequency (Hz) of the derivative-of-Gaussian analyzing function
/// whose Gaussian has standard deviation `scale` samples.
///
/// The Fourier magnitude of `t exp(-t^2 / 2 s^2)` is proportional to
/// `w exp(-w^2 s^2 / 2)`, which peaks at `w = 1 / s`.
pub fn wavelet_center_frequency(scale: f64, sample_rate_hz: f64) -> f64 {
    sample_rate_hz / (2.0 * PI * scale)
}

/// Inverse of [`wavelet_center_frequency`].
pub fn scale_for_frequency(freq_hz: f64, sample_rate_hz: f64) -> f64 {
    sample_rate_hz / (2.0 * PI * freq_hz)
}

/// Single-scale CWT with a first-derivative-of-Gaussian analyzing function.
///
/// The kernel is normalized so the output approximates the per-sample
/// derivative of the Gaussian-smoothed input; a unit-slope ramp maps to 1.
/// Edges are handled by odd reflection, which preserves local slope.
pub fn cwt_gaussian_derivative(x: &[f64], scale: f64) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let half = wavelet_half_width(scale);
    let gauss: Vec<f64> = (0..=2 * half)
        .map(|i| {
            let t = i as f64 - half as f64;
            (-t * t / (2.0 * scale * scale)).exp()
        })
        .collect();
    // second moment of the truncated kernel, so a unit ramp maps to exactly 1
    let moment: f64 = gauss
        .iter()
        .enumerate()
        .map(|(i, g)| (i as f64 - half as f64).powi(2) * g)
        .sum();
    // kernel[j] multiplies x[i + j - half]
    let kernel: Vec<f64> = gauss
        .iter()
        .enumerate()
        .map(|(i, g)| (i as f64 - half as f64) * g / moment)
        .collect();

    let at = |i: isize| -> f64 {
        let last = n as isize - 1;
        if i < 0 {
            let m = (-i).min(last);
            2.0 * x[0] - x[m as usize]
        } else if i > last {
            let m = (last - (i - last)).max(0);
            2.0 * x[n - 1] - x[m as usize]
        } else {
            x[i as usize]
        }
    };

    (0..n)
        .map(|i| {
            kernel
                .iter()
                .enumerate()
                .map(|(j, k)| k * at(i as isize + j as isize - half as isize))
                .sum()
        })
        .collect()
}

/// Trapezoidal running integral starting at 0. Unlike a plain running sum
/// it has no half-sample lag, so extrema of its derivative stay in place.
pub fn cumulative_integral(x: &[f64], dt: f64) -> Vec<f64> {
    let mut acc = 0.0;
    let mut prev = x.first().copied().unwrap_or(0.0);
    x.iter()
        .map(|&v| {
            acc += 0.5 * (prev + v) * dt;
            prev = v;
            acc
        })
        .collect()
}

/// Unbiased, mean-removed autocorrelation normalized by the lag-0 variance,
/// for lags `0..=max_lag`. Returns `None` when the signal has no variance.
pub fn autocorrelation(x: &[f64], max_lag: usize) -> Option<Vec<f64>> {
    let n = x.len();
    if n < 2 {
        return None;
    }
    let m = x.iter().sum::<f64>() / n as f64;
    let c: Vec<f64> = x.iter().map(|v| v - m).collect();
    let var = c.iter().map(|v| v * v).sum::<f64>() / n as f64;
    let power = x.iter().map(|v| v * v).sum::<f64>() / n as f64;
    // flat signals leave only rounding residue after mean removal
    if !(var > 1e-20 * power) {
        return None;
    }
    let max_lag = max_lag.min(n - 1);
    Some(
        (0..=max_lag)
            .map(|k| {
                let s: f64 = c[..n - k].iter().zip(&c[k..]).map(|(a, b)| a * b).sum();
                s / (n - k) as f64 / var
            })
            .collect(),
    )
}

/// A local maximum of an autocorrelation sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub lag: usize,
    /// Lag refined by parabolic interpolation, in samples.
    pub refined_lag: f64,
    pub value: f64,
}

/// Local maxima of `r` with lag inside `[lo, hi]`.
pub fn local_maxima_in(r: &[f64], lo: usize, hi: usize) -> Vec<Peak> {
    let mut peaks = Vec::new();
    let hi = hi.min(r.len().saturating_sub(2));
    for k in lo.max(1)..=hi {
        if r[k] > r[k - 1] && r[k] >= r[k + 1] {
            let denom = r[k - 1] - 2.0 * r[k] + r[k + 1];
            let offset = if denom.abs() > 1e-15 {
                (0.5 * (r[k - 1] - r[k + 1]) / denom).clamp(-0.5, 0.5)
            } else {
                0.0
            };
            peaks.push(Peak { lag: k, refined_lag: k as f64 + offset, value: r[k] });
        }
    }
    peaks
}

/// Indices of strict local minima (`x[i] < x[i-1]` and `x[i] <= x[i+1]`).
pub fn local_minima(x: &[f64]) -> Vec<usize> {
    (1..x.len().saturating_sub(1))
        .filter(|&i| x[i] < x[i - 1] && x[i] <= x[i + 1])
        .collect()
}

/// Indices of strict local maxima (`x[i] > x[i-1]` and `x[i] >= x[i+1]`).
pub fn local_maxima(x: &[f64]) -> Vec<usize> {
    (1..x.len().saturating_sub(1))
        .filter(|&i| x[i] > x[i - 1] && x[i] >= x[i + 1])
        .collect()
}
