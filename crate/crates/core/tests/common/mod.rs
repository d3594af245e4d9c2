//! Scene fixtures shared by the integration tests.
#![allow(dead_code)]

use lidarmap::cloudio::{apply_transform, PointCloud, RigidTransform, StampedPose, StampedScan};
use lidarmap::mapcraft::{craft_map, MlsParams, UniformSamplingParams};
use lidarmap::simulation::{
    build_scene, generate_sequence, BoxSpec, Bounds, LidarSpec, SceneSpec, TerrainSpec, TrajectorySpec, Waypoint,
};

pub fn lidar(seed: u64, sigma: f64) -> LidarSpec {
    LidarSpec {
        rings: 16,
        min_elevation_deg: -15.0,
        max_elevation_deg: 15.0,
        horizontal_resolution_deg: 1.0,
        min_range: 0.2,
        max_range: 30.0,
        range_noise_sigma: sigma,
        seed,
    }
}

fn wall(min: [f64; 3], max: [f64; 3]) -> BoxSpec {
    BoxSpec { min, max }
}

/// Perimeter walls of a rectangular hall.
pub fn perimeter(b: &Bounds, height: f64) -> Vec<BoxSpec> {
    let [x0, y0] = b.min;
    let [x1, y1] = b.max;
    let t = 0.2;
    vec![
        wall([x0, y0, 0.0], [x1, y0 + t, height]),
        wall([x0, y1 - t, 0.0], [x1, y1, height]),
        wall([x0, y0, 0.0], [x0 + t, y1, height]),
        wall([x1 - t, y0, 0.0], [x1, y1, height]),
    ]
}

fn wp(x: f64, y: f64, yaw: f64) -> Waypoint {
    Waypoint { x, y, z: 1.0, yaw }
}

/// 30 m × 20 m hall with irregular shelving and a 60 m loop (611 scans at 10 Hz).
pub fn warehouse(seed: u64, sigma: f64) -> SceneSpec {
    let bounds = Bounds { min: [0.0, 0.0], max: [30.0, 20.0] };
    let mut boxes = perimeter(&bounds, 3.0);
    boxes.extend([
        wall([8.0, 7.0, 0.0], [12.0, 8.0, 2.0]),
        wall([14.5, 7.2, 0.0], [21.0, 7.9, 1.5]),
        wall([8.0, 12.0, 0.0], [11.0, 13.0, 2.5]),
        wall([16.0, 12.4, 0.0], [21.5, 13.0, 1.8]),
        wall([2.0, 9.0, 0.0], [2.6, 9.6, 3.0]),
        wall([27.0, 9.5, 0.0], [27.5, 11.5, 2.2]),
        wall([13.0, 2.0, 0.0], [14.0, 2.8, 1.2]),
        wall([20.0, 17.0, 0.0], [22.0, 18.2, 1.6]),
    ]);
    SceneSpec {
        terrain: TerrainSpec::default(),
        boxes,
        bounds,
        lidar: lidar(seed, sigma),
        trajectory: TrajectorySpec {
            waypoints: vec![
                wp(5.0, 5.0, 0.0),
                wp(25.0, 5.0, 0.0),
                wp(25.0, 15.0, std::f64::consts::FRAC_PI_2),
                wp(5.0, 15.0, std::f64::consts::PI),
                wp(5.0, 5.0, -std::f64::consts::FRAC_PI_2),
            ],
            speed: 1.0,
            rate: 10.0,
            dwell_ticks: 10,
        },
        reference_spacing: 0.05,
    }
}

/// Accumulates scans at their true poses (every `stride`-th tick) and crafts a map.
pub fn mapping_run(spec: &SceneSpec, stride: usize) -> PointCloud {
    let scene = build_scene(spec).unwrap();
    let model = spec.lidar.to_model().unwrap();
    let seq = generate_sequence(&scene, &spec.trajectory, &model, 1.0).unwrap();
    let mut raw = PointCloud::empty();
    for (scan, (_, pose)) in seq.scans.iter().zip(&seq.ground_truth).step_by(stride) {
        raw.extend(&apply_transform(&scan.cloud, pose));
    }
    craft_map(&raw, &UniformSamplingParams { voxel_size: 0.05 }, &MlsParams::default())
        .unwrap()
        .cloud
        .without_normals()
}

pub fn translation_error(a: &RigidTransform, b: &RigidTransform) -> f64 {
    (a.translation() - b.translation()).norm()
}

pub fn rotation_error(a: &RigidTransform, b: &RigidTransform) -> f64 {
    a.inverse().compose(b).rotation_angle()
}

pub fn max_error(est: &[StampedPose], truth: &[StampedPose]) -> f64 {
    est.iter()
        .zip(truth)
        .map(|((_, a), (_, b))| translation_error(a, b))
        .fold(0.0, f64::max)
}

pub fn scans_of(spec: &SceneSpec) -> (Vec<StampedScan>, Vec<StampedPose>) {
    let scene = build_scene(spec).unwrap();
    let model = spec.lidar.to_model().unwrap();
    let seq = generate_sequence(&scene, &spec.trajectory, &model, 1.0).unwrap();
    (seq.scans, seq.ground_truth)
}

/// Shelf rows along x at y = 4, 9, 14, 19 (1 m deep, 2.5 m tall), aisles centered
/// at y = 6.5, 11.5, 16.5. Each row has gaps at its own positions so aisles look
/// alike without being identical.
pub fn aisles_boxes() -> (Bounds, Vec<BoxSpec>) {
    let bounds = Bounds { min: [0.0, 0.0], max: [40.0, 23.0] };
    let mut boxes = perimeter(&bounds, 3.0);
    let gaps: [&[(f64, f64)]; 4] = [
        &[(9.0, 11.0), (24.0, 25.5)],
        &[(13.0, 14.5), (29.0, 31.0)],
        &[(6.0, 7.5), (18.0, 20.0), (33.0, 34.0)],
        &[(15.5, 17.5), (26.0, 27.0)],
    ];
    for (k, row) in gaps.iter().enumerate() {
        let y = 3.5 + 5.0 * k as f64;
        let mut x = 4.0;
        for &(g0, g1) in row.iter() {
            boxes.push(wall([x, y, 0.0], [g0, y + 1.0, 2.5]));
            x = g1;
        }
        boxes.push(wall([x, y, 0.0], [36.0, y + 1.0, 2.5]));
    }
    (bounds, boxes)
}

pub const AISLE_CENTERS: [f64; 3] = [6.5, 11.5, 16.5];

/// Ten static scans at `(x, y)` facing `yaw`.
pub fn aisles_static(x: f64, y: f64, yaw: f64, seed: u64, sigma: f64) -> SceneSpec {
    let (bounds, boxes) = aisles_boxes();
    SceneSpec {
        terrain: TerrainSpec::default(),
        boxes,
        bounds,
        lidar: lidar(seed, sigma),
        trajectory: TrajectorySpec {
            waypoints: vec![Waypoint { x, y, z: 1.0, yaw }],
            speed: 1.0,
            rate: 10.0,
            dwell_ticks: 10,
        },
        reference_spacing: 0.05,
    }
}

/// Rolling terrain (amplitude 0.5 m, wavelength 5 m) with pylons.
pub fn rolling_terrain() -> (TerrainSpec, Vec<BoxSpec>, Bounds) {
    use lidarmap::simulation::{PlaneSpec, Sinusoid};
    let terrain = TerrainSpec {
        plane: PlaneSpec { a: 0.0, b: 0.0, c: 0.0 },
        sinusoids: vec![Sinusoid { amplitude: 0.5, wavelength: 5.0, direction: [1.0, 0.3], phase: 0.4 }],
    };
    let bounds = Bounds { min: [0.0, 0.0], max: [20.0, 20.0] };
    let mut boxes = Vec::new();
    for (x, y) in [(3.0, 4.0), (8.5, 15.0), (12.0, 7.5), (16.5, 12.0), (5.5, 11.0), (15.0, 2.5)] {
        boxes.push(wall([x, y, -1.0], [x + 0.4, y + 0.4, 3.0]));
    }
    boxes.push(wall([9.0, 9.0, -1.0], [10.5, 10.0, 1.8]));
    (terrain, boxes, bounds)
}

/// Flat ground with cabinets of several sizes.
pub fn plane_and_boxes() -> (TerrainSpec, Vec<BoxSpec>, Bounds) {
    let bounds = Bounds { min: [0.0, 0.0], max: [20.0, 20.0] };
    let boxes = vec![
        wall([3.0, 3.0, 0.0], [4.0, 4.0, 1.0]),
        wall([8.0, 5.0, 0.0], [11.0, 6.0, 2.0]),
        wall([14.0, 14.0, 0.0], [16.0, 17.0, 1.5]),
        wall([5.0, 13.0, 0.0], [5.6, 13.6, 3.0]),
        wall([12.0, 9.0, 0.0], [13.5, 10.0, 0.6]),
    ];
    (TerrainSpec::default(), boxes, bounds)
}

/// Hall `[0,30]×[0,20]` with a doorway in its east wall leading to an annex
/// `[30,42]×[5,15]`. The path runs along y = 10 from the hall into the annex.
pub fn annex(seed: u64, sigma: f64) -> SceneSpec {
    let bounds = Bounds { min: [0.0, 0.0], max: [42.0, 20.0] };
    let h = 3.0;
    let boxes = vec![
        wall([0.0, 0.0, 0.0], [30.0, 0.2, h]),
        wall([0.0, 19.8, 0.0], [30.0, 20.0, h]),
        wall([0.0, 0.0, 0.0], [0.2, 20.0, h]),
        wall([29.8, 0.0, 0.0], [30.0, 8.5, h]),
        wall([29.8, 11.5, 0.0], [30.0, 20.0, h]),
        wall([30.0, 5.0, 0.0], [42.0, 5.2, h]),
        wall([30.0, 14.8, 0.0], [42.0, 15.0, h]),
        wall([41.8, 5.0, 0.0], [42.0, 15.0, h]),
        wall([8.0, 7.0, 0.0], [12.0, 8.0, 2.0]),
        wall([14.5, 7.2, 0.0], [21.0, 7.9, 1.5]),
        wall([8.0, 12.0, 0.0], [11.0, 13.0, 2.5]),
        wall([16.0, 12.4, 0.0], [21.5, 13.0, 1.8]),
        wall([2.0, 9.0, 0.0], [2.6, 9.6, 3.0]),
        wall([13.0, 2.0, 0.0], [14.0, 2.8, 1.2]),
        wall([20.0, 17.0, 0.0], [22.0, 18.2, 1.6]),
        wall([34.0, 6.0, 0.0], [35.0, 7.5, 1.5]),
        wall([38.5, 12.0, 0.0], [40.0, 13.5, 2.0]),
        wall([36.0, 7.5, 0.0], [36.6, 8.2, 2.5]),
    ];
    SceneSpec {
        terrain: TerrainSpec::default(),
        boxes,
        bounds,
        lidar: lidar(seed, sigma),
        trajectory: TrajectorySpec {
            waypoints: vec![wp(5.0, 10.0, 0.0), wp(39.0, 10.0, 0.0)],
            speed: 1.0,
            rate: 10.0,
            dwell_ticks: 10,
        },
        reference_spacing: 0.05,
    }
}

/// Reference surface points of the annex scene west of the hall's east wall face.
pub fn annex_prior_map(spec: &SceneSpec) -> PointCloud {
    let reference = build_scene(spec).unwrap().reference_cloud(0.05).unwrap().cloud;
    let keep: Vec<usize> = (0..reference.len()).filter(|&i| reference.points()[i].x <= 30.0).collect();
    reference.select(&keep)
}

pub fn fixture_path(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// The 12 m × 8 m room of the committed pipeline fixture.
pub fn room(seed: u64, sigma: f64) -> SceneSpec {
    let mut spec = SceneSpec::load(fixture_path("pipeline_scene.yaml")).unwrap();
    spec.lidar.seed = seed;
    spec.lidar.range_noise_sigma = sigma;
    spec
}

pub fn reference_of(spec: &SceneSpec) -> PointCloud {
    build_scene(spec).unwrap().reference_cloud(spec.reference_spacing).unwrap().cloud
}

pub fn bin() -> std::process::Command {
    std::process::Command::new(env!("CARGO_BIN_EXE_lidarmap"))
}

/// Runs `lidarmap` with `args` in `dir`; panics unless it exits 0.
pub fn lidarmap_ok(dir: &std::path::Path, args: &[&str]) -> String {
    let out = bin().current_dir(dir).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// simulate → craft → ground → traverse → localize → eval on the committed
/// fixture scene; returns `sha256 path` lines for every output file.
pub fn pipeline_checksums(threads: usize) -> String {
    use sha2::{Digest, Sha256};
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let scene = fixture_path("pipeline_scene.yaml");
    let t = threads.to_string();
    let g = ["--seed", "42", "--threads", t.as_str()];
    let run = |args: &[&str]| lidarmap_ok(dir, &[&g[..], args].concat());
    run(&["simulate", "--scene", scene.to_str().unwrap(), "--out-dir", "sim"]);
    run(&["craft", "--input", "sim/accumulated.ply", "--output", "map.ply"]);
    run(&["ground", "--input", "map.ply", "--out-dir", "ground"]);
    run(&["traverse", "--input", "ground/ground.ply", "--out-dir", "traverse"]);
    run(&["localize", "--scans", "sim", "--map", "map.ply", "--guess", "2,4,1,0,0,0", "--out-dir", "localize"]);
    run(&[
        "eval",
        "--map",
        "map.ply",
        "--registered",
        "localize/registered.ply",
        "--trajectory",
        "localize/trajectory.txt",
        "--truth",
        "sim/ground_truth.txt",
        "--output",
        "eval.json",
    ]);
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                files.push(path);
            }
        }
    }
    files.sort();
    let mut out = String::new();
    for path in files {
        let digest = Sha256::digest(std::fs::read(&path).unwrap());
        let rel = path.strip_prefix(dir).unwrap().to_string_lossy().replace('\\', "/");
        out.push_str(&format!("{}  {rel}\n", hex::encode(digest)));
    }
    out
}

pub fn golden_path(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

/// Compares `actual` against a committed golden file, writing it when missing
/// or when `UPDATE_GOLDEN=1`.
pub fn check_golden(name: &str, actual: &str) -> Result<(), String> {
    let path = golden_path(name);
    if std::env::var("UPDATE_GOLDEN").as_deref() == Ok("1") || !path.exists() {
        std::fs::write(&path, actual).unwrap();
        return Ok(());
    }
    let expected = std::fs::read_to_string(&path).unwrap();
    if expected == actual {
        return Ok(());
    }
    let diff: Vec<String> = expected
        .lines()
        .zip(actual.lines())
        .filter(|(a, b)| a != b)
        .map(|(a, b)| format!("expected {a}\n     got {b}"))
        .collect();
    Err(format!("{name} differs:\n{}", diff.join("\n")))
}
