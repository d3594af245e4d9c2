use std::path::Path;

use lidarmap::cloudio::{apply_transform, load_cloud, save_cloud, CloudFormat, PointCloud, RigidTransform};
use lidarmap::Error;
use nalgebra::{Point3, Vector3};
use proptest::prelude::*;

fn fixture(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

#[test]
fn ply_with_zero_vertices_is_empty() {
    let cloud = load_cloud(fixture("empty.ply")).unwrap();
    assert!(cloud.is_empty());
    assert!(!cloud.has_normals());
}

#[test]
fn hand_written_pcd_loads_three_points() {
    let cloud = load_cloud(fixture("three_points.pcd")).unwrap();
    assert_eq!(
        cloud.points(),
        &[Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 0.0, 0.0), Point3::new(0.0, 1.0, 0.0)]
    );
}

#[test]
fn empty_cloud_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    for (name, format) in [("e.ply", CloudFormat::Ply), ("e.pcd", CloudFormat::Pcd)] {
        let path = dir.path().join(name);
        save_cloud(&PointCloud::empty(), &path, format).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let last = text.lines().last().unwrap();
        assert!(last == "end_header" || last == "DATA ascii", "{name}: {last}");
        assert!(load_cloud(&path).unwrap().is_empty());
    }
}

#[test]
fn single_point_with_normal_record() {
    let dir = tempfile::tempdir().unwrap();
    let cloud = PointCloud::with_normals(vec![Point3::new(1.5, -2.0, 0.25)], vec![Vector3::new(0.0, 0.0, 1.0)]).unwrap();
    let path = dir.path().join("one.ply");
    save_cloud(&cloud, &path, CloudFormat::Ply).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.contains("property double nz\n"));
    assert!(text.ends_with("end_header\n1.5 -2 0.25 0 0 1\n"), "{text}");
    assert_eq!(load_cloud(&path).unwrap(), cloud);

    let path = dir.path().join("one.pcd");
    save_cloud(&cloud, &path, CloudFormat::Pcd).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.contains("FIELDS x y z normal_x normal_y normal_z\n"));
    assert!(text.ends_with("DATA ascii\n1.5 -2 0.25 0 0 1\n"), "{text}");
    assert_eq!(load_cloud(&path).unwrap(), cloud);
}

#[test]
fn parse_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.ply");
    std::fs::write(
        &path,
        "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nend_header\n0 0 0\n1 nan 2\n",
    )
    .unwrap();
    match load_cloud(&path) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 9),
        other => panic!("expected parse error, got {other:?}"),
    }
    let missing = dir.path().join("missing.pcd");
    assert!(matches!(load_cloud(&missing), Err(Error::Io { .. })));
}

#[test]
fn binary_ply_is_unsupported() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bin.ply");
    std::fs::write(&path, "ply\nformat binary_little_endian 1.0\nelement vertex 0\nend_header\n").unwrap();
    assert!(matches!(load_cloud(&path), Err(Error::UnsupportedFormat(_))));
}

fn cloud_strategy() -> impl Strategy<Value = PointCloud> {
    prop::collection::vec((prop::array::uniform3(-1e4f64..1e4), prop::array::uniform3(-1.0f64..1.0)), 0..40)
        .prop_filter("normals need length", |v| v.iter().all(|(_, n)| Vector3::from(*n).norm() > 1e-3))
        .prop_flat_map(|v| {
            let pts: Vec<_> = v.iter().map(|(p, _)| Point3::from(*p)).collect();
            let ns: Vec<_> = v.iter().map(|(_, n)| Vector3::from(*n).normalize()).collect();
            prop::bool::ANY.prop_map(move |with| {
                if with {
                    PointCloud::with_normals(pts.clone(), ns.clone()).unwrap()
                } else {
                    PointCloud::new(pts.clone()).unwrap()
                }
            })
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]
    #[test]
    fn save_then_load_round_trips(cloud in cloud_strategy(), pcd in any::<bool>()) {
        let dir = tempfile::tempdir().unwrap();
        let (name, format) = if pcd { ("c.pcd", CloudFormat::Pcd) } else { ("c.ply", CloudFormat::Ply) };
        let path = dir.path().join(name);
        save_cloud(&cloud, &path, format).unwrap();
        let back = load_cloud(&path).unwrap();
        prop_assert_eq!(back.len(), cloud.len());
        prop_assert_eq!(back.has_normals(), cloud.has_normals());
        for (a, b) in back.points().iter().zip(cloud.points()) {
            prop_assert!((a - b).norm() <= 1e-6);
        }
    }

    #[test]
    fn transform_preserves_pairwise_distances(
        cloud in cloud_strategy(),
        w in prop::array::uniform3(-3.0f64..3.0),
        t in prop::array::uniform3(-50.0f64..50.0),
    ) {
        let w = Vector3::from(w);
        let tf = RigidTransform::from_axis_angle(&w, w.norm(), Vector3::from(t));
        let moved = apply_transform(&cloud, &tf);
        let p = cloud.points();
        let q = moved.points();
        for i in 0..p.len() {
            for j in (i + 1)..p.len().min(i + 5) {
                let d0 = (p[i] - p[j]).norm();
                prop_assert!(((q[i] - q[j]).norm() - d0).abs() <= 1e-9 * (1.0 + d0));
            }
        }
    }
}
