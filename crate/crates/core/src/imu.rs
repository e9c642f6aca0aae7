//! Min/max calibration of IMU linear-acceleration channels.
//!
//! Each axis is calibrated from two stationary windows, one with the axis
//! pointing up and one pointing down. A raw reading is then mapped affinely
//! so that the two window means land on `-g` and `+g`.

use nalgebra::Vector3;
use thiserror::Error;

use crate::error::ErrorName;
use crate::geometry::Axis;

/// Standard gravity, m/s², as given in the sensor datasheet.
pub const STANDARD_GRAVITY: f64 = 9.80665;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CalibrationError {
    #[error("sample window is empty")]
    EmptyWindow,
    #[error("axis {axis}: g_max ({g_max}) must exceed g_min ({g_min})")]
    DegenerateCalibration { axis: Axis, g_min: f64, g_max: f64 },
    #[error("calibration profile is missing axis {0}")]
    MissingAxis(Axis),
    #[error("calibration profile lists axis {0} twice")]
    DuplicateAxis(Axis),
}

impl ErrorName for CalibrationError {
    fn name(&self) -> &'static str {
        match self {
            Self::EmptyWindow => "EmptyWindow",
            Self::DegenerateCalibration { .. } => "DegenerateCalibration",
            Self::MissingAxis(_) => "MissingAxis",
            Self::DuplicateAxis(_) => "DuplicateAxis",
        }
    }
}

/// One accelerometer reading in the sensor frame, m/s².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    pub gx: f64,
    pub gy: f64,
    pub gz: f64,
    pub timestamp_ns: u64,
}

impl ImuSample {
    pub fn new(gx: f64, gy: f64, gz: f64, timestamp_ns: u64) -> Self {
        Self {
            gx,
            gy,
            gz,
            timestamp_ns,
        }
    }

    pub fn component(&self, axis: Axis) -> f64 {
        match axis {
            Axis::X => self.gx,
            Axis::Y => self.gy,
            Axis::Z => self.gz,
        }
    }

    pub fn vector(&self) -> Vector3<f64> {
        Vector3::new(self.gx, self.gy, self.gz)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisCalibration {
    axis: Axis,
    g_min: f64,
    g_max: f64,
}

impl AxisCalibration {
    pub fn new(axis: Axis, g_min: f64, g_max: f64) -> Result<Self, CalibrationError> {
        // written so that NaN also fails
        if !(g_max > g_min) || !g_min.is_finite() || !g_max.is_finite() {
            return Err(CalibrationError::DegenerateCalibration { axis, g_min, g_max });
        }
        Ok(Self { axis, g_min, g_max })
    }

    /// Calibration that leaves readings unchanged.
    pub fn identity(axis: Axis) -> Self {
        Self {
            axis,
            g_min: -STANDARD_GRAVITY,
            g_max: STANDARD_GRAVITY,
        }
    }

    pub fn axis(&self) -> Axis {
        self.axis
    }

    pub fn g_min(&self) -> f64 {
        self.g_min
    }

    pub fn g_max(&self) -> f64 {
        self.g_max
    }

    pub fn correct(&self, raw: f64) -> f64 {
        correct_reading(raw, self)
    }
}

/// Per-axis calibration for x, y and z.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationProfile {
    axes: [AxisCalibration; 3],
}

impl CalibrationProfile {
    /// Builds a profile from exactly one calibration per axis, in any order.
    pub fn new(calibrations: &[AxisCalibration]) -> Result<Self, CalibrationError> {
        let mut slots: [Option<AxisCalibration>; 3] = [None; 3];
        for cal in calibrations {
            let slot = &mut slots[cal.axis.index()];
            if slot.is_some() {
                return Err(CalibrationError::DuplicateAxis(cal.axis));
            }
            *slot = Some(*cal);
        }
        let get = |axis: Axis| slots[axis.index()].ok_or(CalibrationError::MissingAxis(axis));
        Ok(Self {
            axes: [get(Axis::X)?, get(Axis::Y)?, get(Axis::Z)?],
        })
    }

    pub fn identity() -> Self {
        Self {
            axes: Axis::ALL.map(AxisCalibration::identity),
        }
    }

    pub fn axis(&self, axis: Axis) -> &AxisCalibration {
        &self.axes[axis.index()]
    }

    pub fn axes(&self) -> &[AxisCalibration; 3] {
        &self.axes
    }

    pub fn correct(&self, sample: &ImuSample) -> Vector3<f64> {
        Vector3::new(
            self.axes[0].correct(sample.gx),
            self.axes[1].correct(sample.gy),
            self.axes[2].correct(sample.gz),
        )
    }
}

fn mean_component(window: &[ImuSample], axis: Axis) -> Result<f64, CalibrationError> {
    if window.is_empty() {
        return Err(CalibrationError::EmptyWindow);
    }
    Ok(window.iter().map(|s| s.component(axis)).sum::<f64>() / window.len() as f64)
}

/// Time-averages the two stationary windows of one axis.
pub fn build_axis_calibration(
    min_window: &[ImuSample],
    max_window: &[ImuSample],
    axis: Axis,
) -> Result<AxisCalibration, CalibrationError> {
    let g_min = mean_component(min_window, axis)?;
    let g_max = mean_component(max_window, axis)?;
    AxisCalibration::new(axis, g_min, g_max)
}

/// `2g·(raw − g_min)/(g_max − g_min) − g`. Readings outside the calibrated
/// range are extrapolated, not clamped.
pub fn correct_reading(raw: f64, cal: &AxisCalibration) -> f64 {
    2.0 * STANDARD_GRAVITY * (raw - cal.g_min) / (cal.g_max - cal.g_min) - STANDARD_GRAVITY
}

/// Per-axis mean of the corrected samples.
pub fn average_corrected(
    samples: &[ImuSample],
    profile: &CalibrationProfile,
) -> Result<Vector3<f64>, CalibrationError> {
    if samples.is_empty() {
        return Err(CalibrationError::EmptyWindow);
    }
    let sum = samples
        .iter()
        .fold(Vector3::zeros(), |acc, s| acc + profile.correct(s));
    Ok(sum / samples.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn window(values: &[f64], axis: Axis) -> Vec<ImuSample> {
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let mut s = ImuSample::new(0.0, 0.0, 0.0, i as u64);
                match axis {
                    Axis::X => s.gx = v,
                    Axis::Y => s.gy = v,
                    Axis::Z => s.gz = v,
                }
                s
            })
            .collect()
    }

    #[test]
    fn constant_windows() {
        let cal = build_axis_calibration(
            &window(&[-9.8; 4], Axis::Z),
            &window(&[9.8; 4], Axis::Z),
            Axis::Z,
        )
        .unwrap();
        assert_eq!((cal.g_min(), cal.g_max()), (-9.8, 9.8));
    }

    #[test]
    fn two_sample_mean() {
        let cal = build_axis_calibration(
            &window(&[-9.7, -9.9], Axis::X),
            &window(&[9.8], Axis::X),
            Axis::X,
        )
        .unwrap();
        assert!((cal.g_min() + 9.8).abs() < 1e-12);
    }

    #[test]
    fn window_errors() {
        assert_eq!(
            build_axis_calibration(&[], &window(&[1.0], Axis::X), Axis::X),
            Err(CalibrationError::EmptyWindow)
        );
        assert!(matches!(
            build_axis_calibration(&window(&[1.0], Axis::X), &window(&[1.0], Axis::X), Axis::X),
            Err(CalibrationError::DegenerateCalibration { .. })
        ));
        assert!(matches!(
            build_axis_calibration(&window(&[2.0], Axis::X), &window(&[1.0], Axis::X), Axis::X),
            Err(CalibrationError::DegenerateCalibration { .. })
        ));
    }

    #[test]
    fn noisy_windows_average_to_truth() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let sigma = 0.05;
        let lo = Normal::new(-STANDARD_GRAVITY, sigma).unwrap();
        let hi = Normal::new(STANDARD_GRAVITY, sigma).unwrap();
        let lo_w: Vec<f64> = (0..300).map(|_| lo.sample(&mut rng)).collect();
        let hi_w: Vec<f64> = (0..300).map(|_| hi.sample(&mut rng)).collect();
        let cal =
            build_axis_calibration(&window(&lo_w, Axis::Y), &window(&hi_w, Axis::Y), Axis::Y)
                .unwrap();
        let bound = 3.0 * sigma / 300f64.sqrt();
        assert!((cal.g_min() + STANDARD_GRAVITY).abs() < bound);
        assert!((cal.g_max() - STANDARD_GRAVITY).abs() < bound);
    }

    #[test]
    fn endpoints_and_midpoint() {
        let cal = AxisCalibration::new(Axis::X, -9.61, 10.02).unwrap();
        assert!((correct_reading(-9.61, &cal) + STANDARD_GRAVITY).abs() < 1e-12);
        assert!(correct_reading((-9.61 + 10.02) / 2.0, &cal).abs() < 1e-12);
        assert!((correct_reading(10.02, &cal) - STANDARD_GRAVITY).abs() < 1e-12);
        // extrapolates beyond the calibrated range
        assert!(correct_reading(12.0, &cal) > STANDARD_GRAVITY);
    }

    #[test]
    fn average_of_one_sample_is_that_sample() {
        let profile = CalibrationProfile::new(&[
            AxisCalibration::new(Axis::Z, -9.5, 10.1).unwrap(),
            AxisCalibration::new(Axis::X, -9.9, 9.7).unwrap(),
            AxisCalibration::new(Axis::Y, -9.8, 9.8).unwrap(),
        ])
        .unwrap();
        let s = ImuSample::new(0.3, -0.2, 9.9, 0);
        assert_eq!(average_corrected(&[s], &profile).unwrap(), profile.correct(&s));
        assert_eq!(
            average_corrected(&[], &profile),
            Err(CalibrationError::EmptyWindow)
        );
    }

    #[test]
    fn symmetric_samples_average_to_zero() {
        let profile = CalibrationProfile::new(&[
            AxisCalibration::new(Axis::X, -9.0, 11.0).unwrap(),
            AxisCalibration::new(Axis::Y, -10.0, 10.0).unwrap(),
            AxisCalibration::new(Axis::Z, -8.0, 12.0).unwrap(),
        ])
        .unwrap();
        let mid = [1.0, 0.0, 2.0];
        let d = [0.4, -1.3, 2.2];
        let a = ImuSample::new(mid[0] + d[0], mid[1] + d[1], mid[2] + d[2], 0);
        let b = ImuSample::new(mid[0] - d[0], mid[1] - d[1], mid[2] - d[2], 1);
        assert!(average_corrected(&[a, b], &profile).unwrap().amax() < 1e-12);
    }

    #[test]
    fn noisy_gravity_average_within_bound() {
        // σ = 0.05 over 500 samples: standard error 2.2e-3, bound 0.02 is ~9σ.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noise = Normal::new(0.0, 0.05).unwrap();
        let truth = Vector3::new(1.2, -0.7, 9.70);
        let samples: Vec<ImuSample> = (0..500)
            .map(|i| {
                ImuSample::new(
                    truth.x + noise.sample(&mut rng),
                    truth.y + noise.sample(&mut rng),
                    truth.z + noise.sample(&mut rng),
                    i,
                )
            })
            .collect();
        let avg = average_corrected(&samples, &CalibrationProfile::identity()).unwrap();
        assert!((avg - truth).amax() < 0.02);
    }

    #[test]
    fn profile_requires_each_axis_once() {
        let x = AxisCalibration::identity(Axis::X);
        let y = AxisCalibration::identity(Axis::Y);
        assert_eq!(
            CalibrationProfile::new(&[x, y]),
            Err(CalibrationError::MissingAxis(Axis::Z))
        );
        assert_eq!(
            CalibrationProfile::new(&[x, y, x]),
            Err(CalibrationError::DuplicateAxis(Axis::X))
        );
    }

    proptest! {
        #[test]
        fn correction_is_strictly_increasing(
            lo in -12.0..-8.0f64, hi in 8.0..12.0f64, a in -20.0..20.0f64, d in 1e-3..5.0f64
        ) {
            let cal = AxisCalibration::new(Axis::Z, lo, hi).unwrap();
            prop_assert!(correct_reading(a + d, &cal) > correct_reading(a, &cal));
            // affine: midpoint maps to midpoint
            let mid = correct_reading(a + d / 2.0, &cal);
            let avg = (correct_reading(a, &cal) + correct_reading(a + d, &cal)) / 2.0;
            prop_assert!((mid - avg).abs() < 1e-9);
            prop_assert!((correct_reading(lo, &cal) + STANDARD_GRAVITY).abs() < 1e-12);
            prop_assert!((correct_reading(hi, &cal) - STANDARD_GRAVITY).abs() < 1e-12);
        }

        #[test]
        fn average_is_permutation_invariant(
            v in proptest::collection::vec((-12.0..12.0f64, -12.0..12.0f64, -12.0..12.0f64), 1..40),
            rot in 0usize..40
        ) {
            let samples: Vec<ImuSample> = v.iter().enumerate()
                .map(|(i, &(x, y, z))| ImuSample::new(x, y, z, i as u64)).collect();
            let mut shuffled = samples.clone();
            shuffled.rotate_left(rot % samples.len());
            shuffled.reverse();
            let p = CalibrationProfile::identity();
            let a = average_corrected(&samples, &p).unwrap();
            let b = average_corrected(&shuffled, &p).unwrap();
            prop_assert!((a - b).amax() < 1e-12);
        }
    }
}
