//! Orientation estimation by accelerometer/gyroscope fusion (Madgwick's
//! gradient-descent filter, IMU variant) and rotation of the recording into
//! a gravity-aligned frame.
//!
//! Quaternions map sensor coordinates to the earth frame: `v_earth = q v_sensor q*`,
//! with earth `+z` pointing up. Heading is unobservable without a
//! magnetometer; the initial yaw is arbitrary and never used downstream.

use nalgebra::{Quaternion, UnitQuaternion, Vector3, Vector4};

use crate::error::{Error, Result};
use crate::ingest::ImuRecording;

pub const DEFAULT_BETA: f64 = 0.041;

/// Samples averaged to initialize the tilt.
const INIT_WINDOW_S: f64 = 1.0;

/// One step of the Madgwick IMU filter.
#[derive(Debug, Clone, Copy)]
pub struct MadgwickFilter {
    beta: f64,
    q: UnitQuaternion<f64>,
}

impl MadgwickFilter {
    pub fn new(beta: f64, initial: UnitQuaternion<f64>) -> Self {
        Self { beta, q: initial }
    }

    pub fn orientation(&self) -> UnitQuaternion<f64> {
        self.q
    }

    /// Integrates the gyroscope over `dt` and descends the accelerometer
    /// objective `q* z q - a` with step `beta`.
    pub fn update(&mut self, gyro: &Vector3<f64>, accel: &Vector3<f64>, dt: f64) -> UnitQuaternion<f64> {
        let q = self.q.into_inner();
        let (q0, q1, q2, q3) = (q.w, q.i, q.j, q.k);
        let omega = Quaternion::new(0.0, gyro.x, gyro.y, gyro.z);
        let mut q_dot = (q * omega) * 0.5;

        let norm = accel.norm();
        if norm > 0.0 {
            let a = accel / norm;
            // the homogeneous form of the gravity row keeps the gradient
            // equivariant under a fixed rotation of the sensor
            let f = Vector3::new(
                2.0 * (q1 * q3 - q0 * q2) - a.x,
                2.0 * (q0 * q1 + q2 * q3) - a.y,
                q0 * q0 - q1 * q1 - q2 * q2 + q3 * q3 - a.z,
            );
            // J^T f with J the Jacobian of the objective w.r.t. (q0, q1, q2, q3)
            let grad = Vector4::new(
                -2.0 * q2 * f.x + 2.0 * q1 * f.y + 2.0 * q0 * f.z,
                2.0 * q3 * f.x + 2.0 * q0 * f.y - 2.0 * q1 * f.z,
                -2.0 * q0 * f.x + 2.0 * q3 * f.y - 2.0 * q2 * f.z,
                2.0 * q1 * f.x + 2.0 * q2 * f.y + 2.0 * q3 * f.z,
            );
            let gn = grad.norm();
            if gn > 0.0 {
                let step = grad / gn;
                q_dot.w -= self.beta * step[0];
                q_dot.i -= self.beta * step[1];
                q_dot.j -= self.beta * step[2];
                q_dot.k -= self.beta * step[3];
            }
        }
        self.q = UnitQuaternion::from_quaternion(q + q_dot * dt);
        self.q
    }
}

/// Rotation taking the measured specific-force direction onto earth `+z`.
pub fn tilt_from_accel(accel: &Vector3<f64>) -> UnitQuaternion<f64> {
    let up = Vector3::z();
    UnitQuaternion::rotation_between(accel, &up)
        .unwrap_or_else(|| UnitQuaternion::from_axis_angle(&Vector3::x_axis(), std::f64::consts::PI))
}

/// Runs the filter over the whole recording, one orientation per sample.
///
/// The initial tilt comes from the mean accelerometer vector over the first
/// second, which cancels periodic gait accelerations when a recording starts
/// mid-walk; the initial yaw is zero.
pub fn estimate_orientation(rec: &ImuRecording, beta: f64) -> Result<Vec<UnitQuaternion<f64>>> {
    let fs = rec
        .sample_rate()
        .ok_or_else(|| Error::Contract("orientation estimation needs a uniformly sampled recording".into()))?;
    if rec.len() < 2 {
        return Err(Error::InsufficientData("orientation estimation needs a non-zero duration".into()));
    }
    if !(beta >= 0.0) {
        return Err(Error::Config(format!("filter gain must be non-negative, got {beta}")));
    }
    let dt = 1.0 / fs;
    let init_n = ((INIT_WINDOW_S * fs).round() as usize).clamp(1, rec.len());
    let mean_accel = rec.accel()[..init_n].iter().sum::<Vector3<f64>>() / init_n as f64;
    let initial = if mean_accel.norm() > 0.0 { tilt_from_accel(&mean_accel) } else { UnitQuaternion::identity() };

    let mut filter = MadgwickFilter::new(beta, initial);
    let mut out = Vec::with_capacity(rec.len());
    out.push(initial);
    for (g, a) in rec.gyro().iter().zip(rec.accel()).skip(1) {
        out.push(filter.update(g, a, dt));
    }
    Ok(out)
}

/// Recording expressed in the gravity-aligned frame.
///
/// Vectors are ordered `(vertical-up, horizontal-1, horizontal-2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GravityAlignedRecording {
    pub timestamps: Vec<f64>,
    pub accel: Vec<Vector3<f64>>,
    pub gyro: Vec<Vector3<f64>>,
    pub sample_rate: f64,
    pub orientation: Vec<UnitQuaternion<f64>>,
}

impl GravityAlignedRecording {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn start(&self) -> f64 {
        self.timestamps.first().copied().unwrap_or(0.0)
    }

    /// Time just past the last sample, so consecutive windows tile the span.
    pub fn end(&self) -> f64 {
        self.start() + self.len() as f64 / self.sample_rate
    }

    pub fn vertical_accel(&self) -> Vec<f64> {
        self.accel.iter().map(|a| a.x).collect()
    }

    pub fn vertical_gyro(&self) -> Vec<f64> {
        self.gyro.iter().map(|g| g.x).collect()
    }

    /// Sample index at or after time `t` (clamped to the recording).
    pub fn index_at(&self, t: f64) -> usize {
        let k = ((t - self.start()) * self.sample_rate - 1e-9).ceil();
        (k.max(0.0) as usize).min(self.len())
    }
}

fn to_vertical_first(v: Vector3<f64>) -> Vector3<f64> {
    Vector3::new(v.z, v.x, v.y)
}

/// Rotates every accelerometer and gyroscope sample into the earth frame.
pub fn align_with_gravity(
    rec: &ImuRecording,
    orientation: &[UnitQuaternion<f64>],
) -> Result<GravityAlignedRecording> {
    if orientation.len() != rec.len() {
        return Err(Error::Contract(format!(
            "{} orientations for {} samples",
            orientation.len(),
            rec.len()
        )));
    }
    let sample_rate = rec
        .sample_rate()
        .ok_or_else(|| Error::Contract("gravity alignment needs a uniformly sampled recording".into()))?;
    let rotate = |vs: &[Vector3<f64>]| -> Vec<Vector3<f64>> {
        vs.iter().zip(orientation).map(|(v, q)| to_vertical_first(q.transform_vector(v))).collect()
    };
    Ok(GravityAlignedRecording {
        timestamps: rec.timestamps().to_vec(),
        accel: rotate(rec.accel()),
        gyro: rotate(rec.gyro()),
        sample_rate,
        orientation: orientation.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn static_rec(accel: Vector3<f64>, seconds: f64) -> ImuRecording {
        let n = (seconds * 50.0) as usize;
        ImuRecording::uniform(0.0, 50.0, vec![accel; n], vec![Vector3::zeros(); n]).unwrap()
    }

    fn gravity_in_sensor(q: &UnitQuaternion<f64>) -> Vector3<f64> {
        q.inverse_transform_vector(&Vector3::z())
    }

    fn angle_deg(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
        a.angle(b).to_degrees()
    }

    #[test]
    fn static_upright_stays_on_z() {
        let rec = static_rec(Vector3::new(0.0, 0.0, 9.81), 10.0);
        let qs = estimate_orientation(&rec, DEFAULT_BETA).unwrap();
        for q in &qs[250..] {
            assert!(angle_deg(&gravity_in_sensor(q), &Vector3::z()) < 1.0);
            assert!((q.norm() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn static_on_side_points_gravity_along_x() {
        let rec = static_rec(Vector3::new(9.81, 0.0, 0.0), 10.0);
        let qs = estimate_orientation(&rec, DEFAULT_BETA).unwrap();
        for q in &qs[250..] {
            assert!(angle_deg(&gravity_in_sensor(q), &Vector3::x()) < 1.0);
        }
    }

    #[test]
    fn accelerometer_correction_pulls_back_a_small_tilt_error() {
        // start 3 degrees off the static equilibrium and let the gradient step converge
        let start = UnitQuaternion::from_axis_angle(&Vector3::x_axis(), 3f64.to_radians());
        let mut f = MadgwickFilter::new(DEFAULT_BETA, start);
        let a = Vector3::new(0.0, 0.0, 9.81);
        let mut errors = Vec::new();
        for _ in 0..250 {
            let q = f.update(&Vector3::zeros(), &a, 0.02);
            errors.push(angle_deg(&gravity_in_sensor(&q), &Vector3::z()));
        }
        // the fixed-size gradient step chatters by about beta * dt around equilibrium
        assert!(errors.windows(2).all(|w| w[1] <= w[0] + 0.1));
        assert!(errors[100] < errors[0]);
        assert!(*errors.last().unwrap() < 1.0);
    }

    #[test]
    fn yaw_rate_integrates_to_quarter_turn() {
        let n = 51;
        let rec = ImuRecording::uniform(
            0.0,
            50.0,
            vec![Vector3::new(0.0, 0.0, 9.81); n],
            vec![Vector3::new(0.0, 0.0, PI / 2.0); n],
        )
        .unwrap();
        let qs = estimate_orientation(&rec, DEFAULT_BETA).unwrap();
        let (_, _, yaw0) = qs[0].euler_angles();
        let (_, _, yaw1) = qs[n - 1].euler_angles();
        assert!(((yaw1 - yaw0).to_degrees() - 90.0).abs() < 2.0);
    }

    #[test]
    fn identity_orientation_is_a_pure_axis_permutation() {
        let rec = static_rec(Vector3::new(0.3, -0.2, 9.7), 1.0);
        let aligned = align_with_gravity(&rec, &vec![UnitQuaternion::identity(); rec.len()]).unwrap();
        for (out, raw) in aligned.accel.iter().zip(rec.accel()) {
            assert_eq!(*out, Vector3::new(raw.z, raw.x, raw.y));
        }
    }

    #[test]
    fn tilted_static_recording_aligns_vertical() {
        let tilt = UnitQuaternion::from_axis_angle(&Vector3::x_axis(), 30f64.to_radians());
        let raw = tilt.inverse_transform_vector(&Vector3::new(0.0, 0.0, 9.81));
        let rec = static_rec(raw, 10.0);
        let qs = estimate_orientation(&rec, DEFAULT_BETA).unwrap();
        let aligned = align_with_gravity(&rec, &qs).unwrap();
        for a in &aligned.accel[100..] {
            assert!((a.x - 9.81).abs() < 0.05);
            assert!((a.y * a.y + a.z * a.z).sqrt() < 0.05 * 9.81);
        }
    }

    #[test]
    fn length_mismatch_is_contract_error() {
        let rec = static_rec(Vector3::new(0.0, 0.0, 9.81), 1.0);
        assert!(matches!(
            align_with_gravity(&rec, &[UnitQuaternion::identity()]),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn single_sample_is_insufficient() {
        let rec = ImuRecording::uniform(0.0, 50.0, vec![Vector3::z()], vec![Vector3::zeros()]).unwrap();
        assert!(matches!(estimate_orientation(&rec, DEFAULT_BETA), Err(Error::InsufficientData(_))));
    }
}
