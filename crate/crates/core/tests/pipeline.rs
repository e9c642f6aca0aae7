//! Full simulate → calibrate → register → merge → measure runs.

use elid_core::cloud_io;
use elid_core::geometry::RigidTransform;
use elid_core::merge::{estimate_all, measure_distance, merge_session, TiltModel};
use elid_core::scenario::{
    calibrate_session, canonical_measurements, canonical_scene, oracle_selections, write_session,
    SimulationSettings,
};
use elid_core::{RegistrationConfig, SessionDir};

fn run(settings: &SimulationSettings, config: RegistrationConfig) -> (RigidTransform, RigidTransform, Vec<(f64, f64)>) {
    let scene = canonical_scene();
    let tmp = tempfile::tempdir().unwrap();
    let dir = SessionDir::new(tmp.path());
    write_session(&scene, settings, "s", &config, &dir).unwrap();
    calibrate_session(&dir).unwrap();
    let sel = oracle_selections(&scene, 0, 1, settings.segment_length).unwrap();
    cloud_io::write_selection(&sel, &dir.selection_path()).unwrap();
    let session = dir.load().unwrap();
    let regs = estimate_all(&session).unwrap();
    let map = merge_session(&session, &regs).unwrap();
    let gt = cloud_io::read_transform(&tmp.path().join("gt/m.tf")).unwrap();
    let meas = canonical_measurements(&scene, 0, 1)
        .unwrap()
        .into_iter()
        .map(|m| {
            let a = map.index_of(&m.a.0, m.a.1).unwrap();
            let b = map.index_of(&m.b.0, m.b.1).unwrap();
            (measure_distance(&map, a, b).unwrap(), m.truth)
        })
        .collect();
    (regs[0].transform, gt, meas)
}

#[test]
fn noiseless_session_recovers_ground_truth() {
    let settings = SimulationSettings {
        range_noise_sigma: 0.0,
        imu_noise_sigma: 0.0,
        frames: 2,
        ..SimulationSettings::default()
    };
    for model in [TiltModel::PerAxis, TiltModel::GravityAligned] {
        let (est, gt, meas) = run(
            &settings,
            RegistrationConfig {
                tilt_model: model,
                ..RegistrationConfig::default()
            },
        );
        let ang = est.rotation_angle_to(&gt).to_degrees();
        let dt = (est.translation() - gt.translation()).norm();
        eprintln!("{model:?}: rot err {ang:.4} deg, trans err {dt:.4} m, meas {meas:?}");
        assert!(ang < 0.1, "{ang}");
        assert!(dt < 0.02, "{dt}");
        for (d, t) in meas {
            assert!((d - t).abs() < 0.03, "{d} vs {t}");
        }
    }
}

#[test]
fn noisy_session_measures_within_ten_centimetres() {
    let settings = SimulationSettings {
        range_noise_sigma: 0.03,
        ..SimulationSettings::default()
    };
    let (est, gt, meas) = run(&settings, RegistrationConfig::default());
    eprintln!(
        "rot err {:.4} deg, trans err {:.4} m, meas {meas:?}",
        est.rotation_angle_to(&gt).to_degrees(),
        (est.translation() - gt.translation()).norm()
    );
    for (d, t) in meas {
        assert!((d - t).abs() <= 0.10, "{d} vs {t}");
    }
}
