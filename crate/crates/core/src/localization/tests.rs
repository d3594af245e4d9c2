use super::*;
use approx::assert_abs_diff_eq;
use nalgebra::Vector3;

/// Floor and two walls of a 6 m corner, sampled on a grid. Surfaces stay
/// 0.5 m apart so every 5-point neighborhood is planar.
fn corner(step: f64) -> Vec<Point3<f64>> {
    let n = (6.0 / step).round() as i32;
    let gap = (0.5 / step).round() as i32;
    let m = (3.0 / step).round() as i32;
    let mut pts = Vec::new();
    for i in 0..=n {
        let a = i as f64 * step;
        for j in 0..=n {
            pts.push(Point3::new(a, j as f64 * step, 0.0));
        }
        if i < gap {
            continue;
        }
        for k in gap..=m {
            pts.push(Point3::new(a, 0.0, k as f64 * step));
            pts.push(Point3::new(0.0, a, k as f64 * step));
        }
    }
    pts
}

fn map_cloud() -> PointCloud {
    PointCloud::new(corner(0.1)).unwrap()
}

/// Every `stride`-th map point, expressed in the frame of `pose`.
fn scan_from(map: &PointCloud, pose: &RigidTransform, stride: usize) -> PointCloud {
    let inv = pose.inverse();
    PointCloud::new(map.points().iter().step_by(stride).map(|p| inv.transform_point(p)).collect()).unwrap()
}

fn truth() -> RigidTransform {
    RigidTransform::from_euler(0.0, 0.0, 0.3, Vector3::new(2.0, 2.5, 1.0))
}

fn ready(map: &PointCloud) -> Localizer {
    let mut loc = Localizer::new(map, LocalizerConfig::default()).unwrap();
    loc.initialize_at(truth(), 0.0).unwrap();
    loc
}

#[test]
fn defaults_and_validation() {
    let c = LocalizerConfig::default();
    assert_eq!(c.init_scan_count, 10);
    assert_eq!(c.init_fitness_threshold, 0.01);
    assert!(c.map_update_enable_time.is_infinite());
    c.validate().unwrap();
    let bad = LocalizerConfig {
        init_scan_count: 0,
        ..c
    };
    assert!(matches!(bad.validate(), Err(Error::Config { field, .. }) if field == "localizer.init_scan_count"));
    let bad = LocalizerConfig {
        velocity_smoothing: 0.0,
        ..c
    };
    assert!(bad.validate().is_err());
}

#[test]
fn infinite_enable_time_round_trips_yaml() {
    let c = LocalizerConfig::default();
    let text = serde_yaml::to_string(&c).unwrap();
    let back: LocalizerConfig = crate::config::from_yaml_str(&text).unwrap();
    assert_eq!(back, c);
    let parsed: LocalizerConfig = crate::config::from_yaml_str("map_update_enable_time: 12.5\n").unwrap();
    assert_eq!(parsed.map_update_enable_time, 12.5);
}

#[test]
fn zero_velocity_predicts_current_pose() {
    let m = ConstantVelocity::new(0.5);
    let p = truth();
    for dt in [0.0, 0.1, 5.0, 1e6] {
        assert_eq!(m.predict(&p, dt), p);
    }
}

#[test]
fn straight_line_velocity_converges() {
    let mut m = ConstantVelocity::new(0.5);
    let heading = RigidTransform::from_euler(0.0, 0.0, 0.7, Vector3::zeros());
    let at = |t: f64| {
        let d = heading.transform_vector(&Vector3::new(t, 0.0, 0.0));
        RigidTransform::from_rotation(&heading.quaternion(), d + Vector3::new(1.0, -2.0, 0.5))
    };
    for k in 1..40 {
        m.update(&at((k - 1) as f64 * 0.1), &at(k as f64 * 0.1), 0.1);
    }
    let pred = m.predict(&at(3.9), 0.1);
    assert!((pred.translation() - at(4.0).translation()).norm() < 1e-6);
}

#[test]
fn prediction_rules() {
    let map = map_cloud();
    let loc = ready(&map);
    assert_eq!(loc.predict_pose(0.0).unwrap(), truth());
    assert_eq!(loc.predict_pose(3.0).unwrap(), truth());
    assert!(matches!(loc.predict_pose(-0.1), Err(Error::Ordering { .. })));
    let fresh = Localizer::new(&map, LocalizerConfig::default()).unwrap();
    assert!(fresh.predict_pose(1.0).is_err());
}

#[test]
fn map_subsample_scan_is_a_fixed_point() {
    let map = map_cloud();
    let mut loc = ready(&map);
    let scan = StampedScan::new(0.1, scan_from(&map, &truth(), 7)).unwrap();
    let tracked = loc.localize_scan(&scan).unwrap();
    assert!(!tracked.degraded);
    assert_abs_diff_eq!(tracked.pose.to_matrix4(), truth().to_matrix4(), epsilon = 1e-9);
    assert_eq!(loc.trajectory().len(), 2);
}

#[test]
fn tracking_recovers_small_offset() {
    let map = map_cloud();
    let mut loc = Localizer::new(&map, LocalizerConfig::default()).unwrap();
    let start = RigidTransform::from_euler(0.0, 0.0, 0.32, Vector3::new(2.05, 2.46, 1.02));
    loc.initialize_at(start, 0.0).unwrap();
    let scan = StampedScan::new(0.1, scan_from(&map, &truth(), 3)).unwrap();
    let tracked = loc.localize_scan(&scan).unwrap();
    assert!(!tracked.degraded);
    assert!((tracked.pose.translation() - truth().translation()).norm() < 1e-3);
    // velocity now points from the start pose toward the refined one
    assert!(loc.velocity().norm() > 0.0);
}

#[test]
fn out_of_order_scan_leaves_state_unchanged() {
    let map = map_cloud();
    let mut loc = ready(&map);
    let scan = StampedScan::new(0.2, scan_from(&map, &truth(), 7)).unwrap();
    loc.localize_scan(&scan).unwrap();
    let before = (loc.pose, loc.motion, loc.trajectory.clone(), loc.map.len());
    for t in [0.2, 0.1, -5.0] {
        let stale = StampedScan::new(t, scan_from(&map, &truth(), 7)).unwrap();
        assert!(matches!(loc.localize_scan(&stale), Err(Error::Ordering { .. })));
    }
    assert_eq!(before, (loc.pose, loc.motion, loc.trajectory.clone(), loc.map.len()));
}

#[test]
fn scan_without_planes_is_degraded() {
    let map = map_cloud();
    let mut loc = ready(&map);
    let far = PointCloud::new(vec![Point3::new(100.0, 100.0, 100.0); 20]).unwrap();
    let tracked = loc.localize_scan(&StampedScan::new(0.1, far).unwrap()).unwrap();
    assert!(tracked.degraded);
    assert_eq!(tracked.pose, truth());
    assert_eq!(loc.trajectory().len(), 2);
}

#[test]
fn map_extension_rules() {
    let map = map_cloud();
    let mut loc = ready(&map);
    let known = StampedScan::new(1.0, scan_from(&map, &truth(), 1)).unwrap();
    assert_eq!(loc.maybe_extend_map(&known, &truth()).unwrap(), 0);

    let cfg = LocalizerConfig {
        map_update_enable_time: 0.5,
        ..LocalizerConfig::default()
    };
    let mut loc = Localizer::new(&map, cfg).unwrap();
    loc.initialize_at(truth(), 0.0).unwrap();
    let early = StampedScan::new(0.4, scan_from(&map, &truth(), 1)).unwrap();
    assert_eq!(loc.maybe_extend_map(&early, &truth()).unwrap(), 0);
    assert_eq!(loc.maybe_extend_map(&known, &truth()).unwrap(), 0);

    // a new wall at x = 8 is inserted once at scan resolution
    let wall: Vec<Point3<f64>> = (0..30)
        .flat_map(|j| (0..20).map(move |k| Point3::new(8.0, 0.05 + j as f64 * 0.1, 0.05 + k as f64 * 0.1)))
        .collect();
    let wall_scan = StampedScan::new(1.0, scan_from(&PointCloud::new(wall).unwrap(), &truth(), 1)).unwrap();
    let first = loc.maybe_extend_map(&wall_scan, &truth()).unwrap();
    assert_eq!(first, 600);
    assert_eq!(loc.inserted_count(), 600);
    assert_eq!(loc.maybe_extend_map(&wall_scan, &truth()).unwrap(), 0);
    let cloud = loc.map_cloud();
    assert_eq!(&cloud.points()[..map.len()], map.points());
}

#[test]
fn initialization_requires_enough_scans() {
    let map = map_cloud();
    let index = crate::spatial::SpatialIndex::build(map.points());
    let scans: Vec<_> = (0..3)
        .map(|k| StampedScan::new(k as f64 * 0.1, scan_from(&map, &truth(), 5)).unwrap())
        .collect();
    let r = initialize_pose(&scans, &index, &truth(), &LocalizerConfig::default());
    assert!(matches!(r, Err(Error::InvalidInput(_))));
}

#[test]
fn initialization_on_map_subsample_has_zero_fitness() {
    let map = map_cloud();
    let index = crate::spatial::SpatialIndex::build(map.points());
    let scans: Vec<_> = (0..10)
        .map(|k| StampedScan::new(k as f64 * 0.1, scan_from(&map, &truth(), 1)).unwrap())
        .collect();
    let init = initialize_pose(&scans, &index, &truth(), &LocalizerConfig::default()).unwrap();
    assert!(init.fitness < 1e-20, "fitness {}", init.fitness);
    assert_abs_diff_eq!(init.pose.to_matrix4(), truth().to_matrix4(), epsilon = 1e-9);
}

#[test]
fn far_guess_fails_initialization() {
    let map = map_cloud();
    let index = crate::spatial::SpatialIndex::build(map.points());
    let scans: Vec<_> = (0..10)
        .map(|k| StampedScan::new(k as f64 * 0.1, scan_from(&map, &truth(), 3)).unwrap())
        .collect();
    let guess = RigidTransform::from_euler(0.0, 0.0, 2.5, Vector3::new(4.0, 4.0, 1.0));
    match initialize_pose(&scans, &index, &guess, &LocalizerConfig::default()) {
        Err(Error::InitializationFailed {
            fitness,
            threshold,
            converged,
        }) => {
            assert_eq!(threshold, 0.01);
            assert!(!converged || fitness >= threshold);
        }
        other => panic!("expected failure, got {other:?}"),
    }
}

#[test]
fn run_sequence_static_replay() {
    let map = map_cloud();
    let scans: Vec<_> = (0..14)
        .map(|k| StampedScan::new(k as f64 * 0.1, scan_from(&map, &truth(), 2)).unwrap())
        .collect();
    let out = run_sequence(&map, &scans, &truth(), &LocalizerConfig::default()).unwrap();
    assert_eq!(out.trajectory.len(), 14);
    assert_eq!(out.degraded_count(), 0);
    assert_eq!(out.inserted, 0);
    assert_eq!(out.map.points(), map.points());
    for t in &out.trajectory {
        assert!((t.pose.translation() - truth().translation()).norm() < 1e-6);
    }
    assert!(out.trajectory.windows(2).all(|w| w[1].timestamp > w[0].timestamp));
}
