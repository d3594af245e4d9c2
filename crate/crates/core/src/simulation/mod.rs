//! Synthetic scenes, a raycasting multi-beam lidar, and scan sequences with
//! ground truth.
//!
//! Scene files are YAML:
//!
//! ```yaml
//! terrain:
//!   plane: { a: 0.0, b: 0.0, c: 0.0 }        # z = a x + b y + c
//!   sinusoids:                               # added to the plane
//!     - { amplitude: 0.5, wavelength: 5.0, direction: [1.0, 0.0], phase: 0.0 }
//! boxes:
//!   - { min: [2.0, 2.0, -1.0], max: [3.0, 3.0, 1.0] }
//! bounds: { min: [-10.0, -10.0], max: [10.0, 10.0] }
//! lidar: { rings: 16, min_elevation_deg: -15.0, max_elevation_deg: 15.0,
//!          horizontal_resolution_deg: 0.4, min_range: 0.2, max_range: 30.0,
//!          range_noise_sigma: 0.01, seed: 0 }
//! trajectory:
//!   waypoints: [ { x: 0.0, y: 0.0, z: 1.0, yaw: 0.0 }, { x: 5.0, y: 0.0, z: 1.0, yaw: 0.0 } ]
//!   speed: 1.0          # m/s
//!   rate: 10.0          # scans per second
//!   dwell_ticks: 10     # static scans before moving
//! reference_spacing: 0.05
//! ```

mod lidar;
mod scene;
mod trajectory;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cloudio::{apply_transform, load_cloud, PointCloud, read_tum, save_cloud, write_tum, CloudFormat, StampedPose, StampedScan};
use crate::config::from_yaml_str;
use crate::error::{Error, Result};

pub use lidar::{simulate_scan, simulate_scan_at_tick, LidarModel, LidarSpec};
pub use scene::{BoxSpec, Bounds, LabeledCloud, PlaneSpec, Scene, Sinusoid, Terrain, TerrainSpec};
pub use trajectory::{TrajectorySpec, Waypoint};

/// Complete simulator input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    #[serde(default)]
    pub terrain: TerrainSpec,
    #[serde(default)]
    pub boxes: Vec<BoxSpec>,
    pub bounds: Bounds,
    #[serde(default)]
    pub lidar: LidarSpec,
    pub trajectory: TrajectorySpec,
    /// Grid spacing of the reference cloud (m).
    #[serde(default = "default_spacing")]
    pub reference_spacing: f64,
}

fn default_spacing() -> f64 {
    0.05
}

impl SceneSpec {
    pub fn from_yaml(text: &str) -> Result<Self> {
        from_yaml_str(text)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_yaml(&text)
    }
}

/// Validated scene from its description.
pub fn build_scene(spec: &SceneSpec) -> Result<Scene> {
    Scene::new(&spec.terrain, &spec.boxes, spec.bounds)
}

/// Scans with ground-truth poses and the labeled reference cloud.
#[derive(Clone, Debug)]
pub struct ScanSequence {
    pub scans: Vec<StampedScan>,
    pub ground_truth: Vec<StampedPose>,
    pub reference: LabeledCloud,
}

/// One scan per trajectory tick. Scans may be empty if every ray misses.
pub fn generate_sequence(
    scene: &Scene,
    trajectory: &TrajectorySpec,
    model: &LidarModel,
    reference_spacing: f64,
) -> Result<ScanSequence> {
    model.validate()?;
    let poses = trajectory.poses()?;
    for (k, (_, p)) in poses.iter().enumerate() {
        let t = p.translation();
        if !scene.bounds.contains(t.x, t.y) {
            return Err(Error::Config {
                field: "trajectory.waypoints".into(),
                message: format!("pose {k} at ({}, {}) leaves the scene bounds", t.x, t.y),
            });
        }
    }
    let scans = poses
        .iter()
        .enumerate()
        .map(|(k, (t, pose))| StampedScan {
            timestamp: *t,
            cloud: simulate_scan_at_tick(scene, pose, model, k as u64),
        })
        .collect();
    Ok(ScanSequence {
        scans,
        ground_truth: poses,
        reference: scene.reference_cloud(reference_spacing)?,
    })
}

/// Builds the scene and runs [`generate_sequence`] from one description.
pub fn simulate(spec: &SceneSpec) -> Result<ScanSequence> {
    let scene = build_scene(spec)?;
    let model = spec.lidar.to_model()?;
    generate_sequence(&scene, &spec.trajectory, &model, spec.reference_spacing)
}

/// File names used by [`save_sequence`].
pub const SEQUENCE_INDEX: &str = "sequence.txt";
pub const GROUND_TRUTH: &str = "ground_truth.txt";
pub const REFERENCE: &str = "reference.ply";
pub const REFERENCE_GROUND: &str = "reference_ground.ply";
pub const REFERENCE_NONGROUND: &str = "reference_nonground.ply";
pub const ACCUMULATED: &str = "accumulated.ply";

/// All scans placed at their ground-truth poses, in scan order.
pub fn accumulate(seq: &ScanSequence) -> PointCloud {
    let mut out = PointCloud::empty();
    for (scan, (_, pose)) in seq.scans.iter().zip(&seq.ground_truth) {
        out.extend(&apply_transform(&scan.cloud, pose));
    }
    out
}

/// Writes scans as `scans/NNNNNN.pcd`, an index of `timestamp path` lines,
/// the TUM ground truth, the reference cloud split by label, and the scans
/// accumulated at their true poses.
pub fn save_sequence(seq: &ScanSequence, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    let scans_dir = dir.join("scans");
    fs::create_dir_all(&scans_dir).map_err(|e| Error::io(&scans_dir, e))?;
    let mut index = String::new();
    for (k, scan) in seq.scans.iter().enumerate() {
        let rel = format!("scans/{k:06}.pcd");
        save_cloud(&scan.cloud, dir.join(&rel), CloudFormat::Pcd)?;
        index.push_str(&format!("{} {rel}\n", scan.timestamp));
    }
    let index_path = dir.join(SEQUENCE_INDEX);
    fs::write(&index_path, index).map_err(|e| Error::io(&index_path, e))?;
    write_tum(dir.join(GROUND_TRUTH), &seq.ground_truth)?;
    save_cloud(&seq.reference.cloud, dir.join(REFERENCE), CloudFormat::Ply)?;
    save_cloud(&seq.reference.ground(), dir.join(REFERENCE_GROUND), CloudFormat::Ply)?;
    save_cloud(&seq.reference.nonground(), dir.join(REFERENCE_NONGROUND), CloudFormat::Ply)?;
    save_cloud(&accumulate(seq), dir.join(ACCUMULATED), CloudFormat::Ply)?;
    Ok(())
}

/// Reads the scans listed in `<dir>/sequence.txt`.
pub fn load_scans(dir: impl AsRef<Path>) -> Result<Vec<StampedScan>> {
    let dir = dir.as_ref();
    let index_path = dir.join(SEQUENCE_INDEX);
    let text = fs::read_to_string(&index_path).map_err(|e| Error::io(&index_path, e))?;
    let mut scans = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: index_path.clone(),
            line: n + 1,
            message,
        };
        let (t, rel) = line
            .split_once(' ')
            .ok_or_else(|| parse_err("expected `timestamp path`".into()))?;
        let timestamp: f64 = t.parse().map_err(|e| parse_err(format!("timestamp `{t}`: {e}")))?;
        let path: PathBuf = dir.join(rel.trim());
        scans.push(StampedScan {
            timestamp,
            cloud: load_cloud(&path)?,
        });
    }
    Ok(scans)
}

/// Ground truth written by [`save_sequence`].
pub fn load_ground_truth(dir: impl AsRef<Path>) -> Result<Vec<StampedPose>> {
    read_tum(dir.as_ref().join(GROUND_TRUTH))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloudio::RigidTransform;
    use nalgebra::Vector3;

    fn flat_scene(boxes: Vec<BoxSpec>) -> Scene {
        Scene::new(
            &TerrainSpec::default(),
            &boxes,
            Bounds { min: [-20.0, -20.0], max: [20.0, 20.0] },
        )
        .unwrap()
    }

    fn quiet() -> LidarModel {
        LidarModel {
            range_noise_sigma: 0.0,
            ..LidarModel::default()
        }
    }

    #[test]
    fn flat_reference_is_all_ground() {
        let r = flat_scene(vec![]).reference_cloud(0.5).unwrap();
        assert!(r.is_ground.iter().all(|g| *g));
    }

    #[test]
    fn box_labels_partition_reference() {
        let b = BoxSpec { min: [1.0, 1.0, -0.5], max: [2.0, 2.5, 1.0] };
        let r = flat_scene(vec![b]).reference_cloud(0.1).unwrap();
        assert_eq!(r.ground().len() + r.nonground().len(), r.cloud.len());
        for (p, g) in r.cloud.points().iter().zip(&r.is_ground) {
            let strictly_inside = (0..3).all(|a| p[a] > b.min[a] && p[a] < b.max[a]);
            assert!(!strictly_inside);
            if *g {
                assert_eq!(p.z, 0.0);
            } else {
                assert!(p.z >= 0.0);
                assert!((0..3).all(|a| p[a] >= b.min[a] && p[a] <= b.max[a]));
            }
        }
        assert!(r.nonground().len() > 100);
    }

    #[test]
    fn sinusoid_amplitude_bounds_reference() {
        let terrain = TerrainSpec {
            plane: PlaneSpec::default(),
            sinusoids: vec![Sinusoid { amplitude: 0.5, wavelength: 5.0, direction: [1.0, 0.3], phase: 0.2 }],
        };
        let scene = Scene::new(&terrain, &[], Bounds { min: [0.0, 0.0], max: [20.0, 20.0] }).unwrap();
        let r = scene.reference_cloud(0.05).unwrap();
        let max = r.cloud.points().iter().map(|p| p.z.abs()).fold(0.0, f64::max);
        assert!(max <= 0.5 + 1e-12 && max > 0.5 - 1e-3, "max |z| {max}");
    }

    #[test]
    fn flat_plane_hits_lie_on_plane() {
        let scene = flat_scene(vec![]);
        let pose = RigidTransform::from_euler(0.0, 0.0, 0.7, Vector3::new(1.0, -2.0, 1.0));
        let scan = simulate_scan(&scene, &pose, &quiet());
        let model = quiet();
        // rays reaching the plane within max_range from 1 m up
        let downward = model
            .ring_elevations
            .iter()
            .filter(|e| **e < 0.0 && 1.0 / (-**e).sin() <= model.max_range)
            .count()
            * model.azimuth_count();
        assert_eq!(scan.len(), downward);
        for p in scan.points() {
            assert!(pose.transform_point(p).z.abs() < 1e-6);
        }
    }

    #[test]
    fn sinusoid_and_box_hits_lie_on_surfaces() {
        let terrain = TerrainSpec {
            plane: PlaneSpec { a: 0.05, b: -0.02, c: 0.1 },
            sinusoids: vec![Sinusoid { amplitude: 0.4, wavelength: 6.0, direction: [1.0, 1.0], phase: 0.0 }],
        };
        let b = BoxSpec { min: [3.0, -1.0, -2.0], max: [4.0, 1.0, 2.0] };
        let scene = Scene::new(&terrain, &[b], Bounds { min: [-20.0, -20.0], max: [20.0, 20.0] }).unwrap();
        let pose = RigidTransform::from_translation(Vector3::new(0.0, 0.0, 1.5));
        let scan = simulate_scan(&scene, &pose, &quiet());
        assert!(scan.len() > 1000);
        for p in scan.points() {
            let w = pose.transform_point(p);
            let on_terrain = (w.z - scene.terrain.height(w.x, w.y)).abs() < 1e-6;
            let on_box = (0..3).all(|a| w[a] >= b.min[a] - 1e-6 && w[a] <= b.max[a] + 1e-6)
                && (0..3).any(|a| (w[a] - b.min[a]).abs() < 1e-6 || (w[a] - b.max[a]).abs() < 1e-6);
            assert!(on_terrain || on_box, "{w:?}");
        }
    }

    #[test]
    fn scans_are_deterministic() {
        let scene = flat_scene(vec![BoxSpec { min: [2.0, 2.0, -1.0], max: [3.0, 3.0, 1.0] }]);
        let model = LidarModel { seed: 9, ..LidarModel::default() };
        let pose = RigidTransform::from_translation(Vector3::new(0.0, 0.0, 1.0));
        let a = simulate_scan_at_tick(&scene, &pose, &model, 3);
        let b = simulate_scan_at_tick(&scene, &pose, &model, 3);
        assert_eq!(a.points(), b.points());
        let c = simulate_scan_at_tick(&scene, &pose, &model, 4);
        assert_ne!(a.points(), c.points());
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let d = pool.install(|| simulate_scan_at_tick(&scene, &pose, &model, 3));
        assert_eq!(a.points(), d.points());
    }

    #[test]
    fn short_range_sees_nothing() {
        let scene = flat_scene(vec![]);
        let model = LidarModel { max_range: 0.5, ..quiet() };
        let pose = RigidTransform::from_translation(Vector3::new(0.0, 0.0, 1.0));
        assert!(simulate_scan(&scene, &pose, &model).is_empty());
    }

    #[test]
    fn dwell_only_sequence() {
        let traj = TrajectorySpec {
            waypoints: vec![Waypoint { x: 0.0, y: 0.0, z: 1.0, yaw: 0.3 }],
            speed: 1.0,
            rate: 10.0,
            dwell_ticks: 10,
        };
        let poses = traj.poses().unwrap();
        assert_eq!(poses.len(), 10);
        assert!(poses.iter().all(|(_, p)| *p == poses[0].1));
        assert!(poses.windows(2).all(|w| w[1].0 > w[0].0));
    }

    #[test]
    fn straight_line_spacing() {
        let traj = TrajectorySpec {
            waypoints: vec![
                Waypoint { x: 0.0, y: 0.0, z: 1.0, yaw: 0.0 },
                Waypoint { x: 10.0, y: 0.0, z: 1.0, yaw: 0.0 },
            ],
            speed: 1.0,
            rate: 10.0,
            dwell_ticks: 1,
        };
        let poses = traj.poses().unwrap();
        assert_eq!(poses.len(), 101);
        for w in poses.windows(2) {
            let d = (w[1].1.translation() - w[0].1.translation()).norm();
            assert!((d - 0.1).abs() < 1e-9);
        }
    }

    #[test]
    fn yaw_takes_short_way_round() {
        let traj = TrajectorySpec {
            waypoints: vec![
                Waypoint { x: 0.0, y: 0.0, z: 1.0, yaw: 3.0 },
                Waypoint { x: 1.0, y: 0.0, z: 1.0, yaw: -3.0 },
            ],
            speed: 1.0,
            rate: 10.0,
            dwell_ticks: 1,
        };
        let poses = traj.poses().unwrap();
        for w in poses.windows(2) {
            assert!(w[1].1.compose(&w[0].1.inverse()).rotation_angle() < 0.1);
        }
    }

    #[test]
    fn malformed_spec_names_field() {
        let text = "bounds: { min: [0, 0], max: [1, 1] }\ntrajectory:\n  waypoints: []\n  speed: fast\n";
        match SceneSpec::from_yaml(text) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "trajectory.speed"),
            other => panic!("unexpected {other:?}"),
        }
        let text = "bounds: { min: [0, 0], max: [1, 1] }\ntrajectory: { waypoints: [] }\nextra: 1\n";
        assert!(matches!(SceneSpec::from_yaml(text), Err(Error::Config { .. })));
        let b = Bounds { min: [0.0, 0.0], max: [1.0, 1.0] };
        let outside = BoxSpec { min: [0.5, 0.5, 0.0], max: [2.0, 0.8, 1.0] };
        assert!(Scene::new(&TerrainSpec::default(), &[outside], b).is_err());
    }

    #[test]
    fn sequence_round_trips_through_disk() {
        let spec = SceneSpec::from_yaml(
            "bounds: { min: [-5, -5], max: [5, 5] }\n\
             boxes: [ { min: [2, -1, -1], max: [3, 1, 1] } ]\n\
             lidar: { horizontal_resolution_deg: 2.0, seed: 3 }\n\
             trajectory: { waypoints: [ { x: 0, y: 0, z: 1 }, { x: 1, y: 0, z: 1 } ], dwell_ticks: 2 }\n\
             reference_spacing: 0.5\n",
        )
        .unwrap();
        let seq = simulate(&spec).unwrap();
        assert_eq!(seq.scans.len(), 12);
        let dir = tempfile::tempdir().unwrap();
        save_sequence(&seq, dir.path()).unwrap();
        let scans = load_scans(dir.path()).unwrap();
        let truth = load_ground_truth(dir.path()).unwrap();
        assert_eq!(scans.len(), seq.scans.len());
        assert_eq!(truth.len(), seq.ground_truth.len());
        for (a, b) in scans.iter().zip(&seq.scans) {
            assert_eq!(a.timestamp, b.timestamp);
            assert_eq!(a.cloud.len(), b.cloud.len());
            for (p, q) in a.cloud.points().iter().zip(b.cloud.points()) {
                assert!((p - q).norm() < 1e-6);
            }
        }
    }
}
