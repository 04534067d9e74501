//! Orientation-agnostic anatomical frame: vertical from gravity alignment,
//! antero-posterior from the dominant horizontal acceleration direction,
//! medio-lateral completing a right-handed triad.
//!
//! Vectors are expressed in gravity-aligned coordinates
//! `(vertical, horizontal-1, horizontal-2)`. The antero-posterior sign is not
//! resolved; it may point forward or backward.

use nalgebra::{Matrix2, Matrix3, SymmetricEigen, Vector3};

use crate::error::{Error, Result};
use crate::segmentation::{dominant_stride_peak, SegmentationConfig};

pub const MIN_FRAME_DURATION_S: f64 = 3.0;
pub const MIN_EIGEN_RATIO: f64 = 1.2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnatomicalFrame {
    pub vertical: Vector3<f64>,
    pub antero_posterior: Vector3<f64>,
    pub medio_lateral: Vector3<f64>,
}

impl AnatomicalFrame {
    pub fn identity() -> Self {
        Self { vertical: Vector3::x(), antero_posterior: Vector3::y(), medio_lateral: Vector3::z() }
    }

    /// Builds the frame from a horizontal direction `(h1, h2)`.
    pub fn from_heading(h1: f64, h2: f64) -> Self {
        let vertical = Vector3::x();
        let antero_posterior = Vector3::new(0.0, h1, h2).normalize();
        let medio_lateral = vertical.cross(&antero_posterior);
        Self { vertical, antero_posterior, medio_lateral }
    }

    /// Rows are the frame axes, so `matrix() * v` gives `(V, AP, ML)` components.
    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::from_rows(&[
            self.vertical.transpose(),
            self.antero_posterior.transpose(),
            self.medio_lateral.transpose(),
        ])
    }

    pub fn swapped(&self) -> Self {
        Self { vertical: self.vertical, antero_posterior: self.medio_lateral, medio_lateral: -self.antero_posterior }
    }
}

/// Estimates the frame from a bout of gravity-aligned acceleration.
///
/// The antero-posterior axis is the first principal component of the
/// mean-removed horizontal acceleration.
pub fn estimate_frame(accel: &[Vector3<f64>], sample_rate: f64) -> Result<AnatomicalFrame> {
    let n = accel.len();
    let duration = n as f64 / sample_rate;
    if duration < MIN_FRAME_DURATION_S - 1e-9 {
        return Err(Error::InsufficientData(format!(
            "frame estimation needs {MIN_FRAME_DURATION_S} s of data, got {duration:.2} s"
        )));
    }
    let mean_h1 = accel.iter().map(|a| a.y).sum::<f64>() / n as f64;
    let mean_h2 = accel.iter().map(|a| a.z).sum::<f64>() / n as f64;
    let mut cov = Matrix2::zeros();
    for a in accel {
        let d = nalgebra::Vector2::new(a.y - mean_h1, a.z - mean_h2);
        cov += d * d.transpose();
    }
    cov /= (n - 1) as f64;

    let eig = SymmetricEigen::new(cov);
    let (i_max, i_min) = if eig.eigenvalues[0] >= eig.eigenvalues[1] { (0, 1) } else { (1, 0) };
    let (l_max, l_min) = (eig.eigenvalues[i_max], eig.eigenvalues[i_min].max(0.0));
    let ratio = if l_min > 0.0 { l_max / l_min } else if l_max > 0.0 { f64::INFINITY } else { 1.0 };
    if ratio < MIN_EIGEN_RATIO {
        return Err(Error::AmbiguousDirection { ratio, threshold: MIN_EIGEN_RATIO });
    }
    let v = eig.eigenvectors.column(i_max);
    // canonical sign: larger-magnitude component positive
    let sign = if v[0].abs() >= v[1].abs() { v[0].signum() } else { v[1].signum() };
    Ok(AnatomicalFrame::from_heading(sign * v[0], sign * v[1]))
}

/// Expresses gravity-aligned vectors in `(V, AP, ML)` coordinates.
pub fn to_anatomical(samples: &[Vector3<f64>], frame: &AnatomicalFrame) -> Vec<Vector3<f64>> {
    let m = frame.matrix();
    samples.iter().map(|v| m * v).collect()
}

/// True when the antero-posterior channel shows stride periodicity.
pub fn verify_frame(antero_posterior: &[f64], sample_rate: f64, cfg: &SegmentationConfig) -> bool {
    if (antero_posterior.len() as f64) / sample_rate < MIN_FRAME_DURATION_S - 1e-9 {
        return false;
    }
    dominant_stride_peak(antero_posterior, sample_rate, cfg.stride_band_s).is_some_and(|p| p.value >= cfg.min_autocorr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_distr::{Distribution, Normal, UnitSphere};
    use std::f64::consts::PI;

    fn horizontal_oscillation(dir: (f64, f64), n: usize) -> Vec<Vector3<f64>> {
        (0..n)
            .map(|k| {
                let s = (2.0 * PI * k as f64 / 30.0).sin();
                Vector3::new(9.81, dir.0 * s, dir.1 * s)
            })
            .collect()
    }

    fn check_orthonormal(f: &AnatomicalFrame) {
        for v in [f.vertical, f.antero_posterior, f.medio_lateral] {
            assert!((v.norm() - 1.0).abs() < 1e-9);
        }
        assert!(f.vertical.dot(&f.antero_posterior).abs() < 1e-6);
        assert!(f.vertical.dot(&f.medio_lateral).abs() < 1e-6);
        assert!(f.antero_posterior.dot(&f.medio_lateral).abs() < 1e-6);
        assert!((f.vertical.dot(&f.antero_posterior.cross(&f.medio_lateral)) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn single_axis_oscillation_gives_that_axis() {
        let f = estimate_frame(&horizontal_oscillation((1.0, 0.0), 200), 50.0).unwrap();
        assert!((f.antero_posterior.y.abs() - 1.0).abs() < 1e-12);
        assert!(f.antero_posterior.z.abs() < 1e-12);
        check_orthonormal(&f);
    }

    #[test]
    fn oblique_oscillation_is_recovered() {
        let dir = (30f64.to_radians().cos(), 30f64.to_radians().sin());
        let f = estimate_frame(&horizontal_oscillation(dir, 200), 50.0).unwrap();
        let cos = (f.antero_posterior.y * dir.0 + f.antero_posterior.z * dir.1).abs();
        assert!(cos.acos().to_degrees() < 2.0);
        check_orthonormal(&f);
    }

    #[test]
    fn short_bout_is_rejected() {
        let r = estimate_frame(&horizontal_oscillation((1.0, 0.0), 100), 50.0);
        assert!(matches!(r, Err(Error::InsufficientData(_))));
    }

    #[test]
    fn isotropic_noise_is_ambiguous() {
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut ambiguous = 0;
        for seed in 0..100 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let accel: Vec<_> = (0..1500)
                .map(|_| Vector3::new(9.81, normal.sample(&mut rng), normal.sample(&mut rng)))
                .collect();
            if matches!(estimate_frame(&accel, 50.0), Err(Error::AmbiguousDirection { .. })) {
                ambiguous += 1;
            }
        }
        assert!(ambiguous >= 95, "{ambiguous}");
    }

    #[test]
    fn identity_frame_is_identity() {
        let v = vec![Vector3::new(1.0, 2.0, 3.0), Vector3::new(-0.5, 0.1, 9.0)];
        assert_eq!(to_anatomical(&v, &AnatomicalFrame::identity()), v);
    }

    #[test]
    fn rotation_preserves_norms() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let angle: f64 = rng.random_range(0.0..2.0 * PI);
        let frame = AnatomicalFrame::from_heading(angle.cos(), angle.sin());
        check_orthonormal(&frame);
        let samples: Vec<Vector3<f64>> = (0..1000)
            .map(|_| {
                let d: [f64; 3] = UnitSphere.sample(&mut rng);
                Vector3::from(d) * rng.random_range(0.1..20.0)
            })
            .collect();
        for (a, b) in samples.iter().zip(to_anatomical(&samples, &frame)) {
            assert!((a.norm() - b.norm()).abs() <= 1e-9 * a.norm());
        }
    }

    #[test]
    fn rotated_oscillation_round_trips() {
        let original: Vec<f64> = (0..300).map(|k| (2.0 * PI * k as f64 / 30.0).sin()).collect();
        let rotated: Vec<_> = original.iter().map(|&s| Vector3::new(9.81, 0.0, s)).collect();
        let f = estimate_frame(&rotated, 50.0).unwrap();
        let ap: Vec<f64> = to_anatomical(&rotated, &f).iter().map(|v| v.y).collect();
        let sign = ap[10].signum() * original[10].signum();
        let rms_err = (original.iter().zip(&ap).map(|(o, a)| (o - sign * a).powi(2)).sum::<f64>() / 300.0).sqrt();
        let rms = (original.iter().map(|o| o * o).sum::<f64>() / 300.0).sqrt();
        assert!(rms_err < 0.01 * rms);
    }

    #[test]
    fn constant_channel_fails_verification() {
        assert!(!verify_frame(&[0.0; 500], 50.0, &SegmentationConfig::default()));
    }
}
