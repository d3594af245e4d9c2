//! Pose initialization on a prior map and scan-to-map tracking with optional
//! map extension.
//!
//! Tracking predicts each pose with a constant-velocity model and refines it
//! with point-to-plane Gauss-Newton against an incremental kd-tree. Once the
//! scan timestamps reach `map_update_enable_time`, newly observed geometry is
//! inserted into the same tree so later scans register against it.
//!
//! Initialization concatenates scans without motion compensation, so the
//! sensor must be static while they are captured.

use nalgebra::{Point3, Vector6};
use serde::{Deserialize, Serialize};

use crate::cloudio::{PointCloud, RigidTransform, StampedPose, StampedScan};
use crate::error::{Error, Result};
use crate::mapcraft::{uniform_sample, UniformSamplingParams};
use crate::registration::{icp, point_to_plane_refine, IcpParams, IcpResult, PlaneParams};
use crate::spatial::{IncrementalIndex, NeighborSearch};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalizerConfig {
    /// Static scans concatenated for initialization.
    pub init_scan_count: usize,
    /// Initialization is accepted only below this fitness (m²).
    pub init_fitness_threshold: f64,
    /// Seconds after the first scan at which map insertion starts. `.inf` disables it.
    pub map_update_enable_time: f64,
    /// Voxel for scan downsampling and for map insertion (m).
    pub scan_downsample_voxel: f64,
    /// Optional voxel applied to the prior map before indexing (m).
    pub map_voxel: Option<f64>,
    /// Weight of the newest pose difference in the velocity estimate, in (0, 1].
    pub velocity_smoothing: f64,
    /// Buffered fraction of the map that triggers a kd-tree rebuild.
    pub rebuild_ratio: f64,
    /// Point-to-point ICP used for initialization.
    pub icp: IcpParams,
    /// Point-to-plane refinement used while tracking.
    pub tracking: IcpParams,
    pub plane: PlaneParams,
}

impl Default for LocalizerConfig {
    fn default() -> Self {
        Self {
            init_scan_count: 10,
            init_fitness_threshold: 0.01,
            map_update_enable_time: f64::INFINITY,
            scan_downsample_voxel: 0.1,
            map_voxel: None,
            velocity_smoothing: 0.5,
            rebuild_ratio: 0.3,
            icp: IcpParams::default(),
            tracking: IcpParams {
                max_correspondence_distance: 0.5,
                ..IcpParams::default()
            },
            plane: PlaneParams::default(),
        }
    }
}

fn config_error(field: &str, message: String) -> Error {
    Error::Config {
        field: format!("localizer.{field}"),
        message,
    }
}

impl LocalizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.init_scan_count == 0 {
            return Err(config_error("init_scan_count", "must be at least 1".into()));
        }
        for (field, v) in [
            ("init_fitness_threshold", self.init_fitness_threshold),
            ("scan_downsample_voxel", self.scan_downsample_voxel),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(config_error(field, format!("must be positive, got {v}")));
            }
        }
        if self.map_update_enable_time.is_nan() {
            return Err(config_error("map_update_enable_time", "must not be NaN".into()));
        }
        if let Some(v) = self.map_voxel {
            if !(v > 0.0) || !v.is_finite() {
                return Err(config_error("map_voxel", format!("must be positive, got {v}")));
            }
        }
        if !(self.velocity_smoothing > 0.0 && self.velocity_smoothing <= 1.0) {
            return Err(config_error(
                "velocity_smoothing",
                format!("must lie in (0, 1], got {}", self.velocity_smoothing),
            ));
        }
        if !(0.0..=1.0).contains(&self.rebuild_ratio) {
            return Err(config_error(
                "rebuild_ratio",
                format!("must lie in [0, 1], got {}", self.rebuild_ratio),
            ));
        }
        self.icp.validate()?;
        self.tracking.validate()?;
        self.plane.validate()
    }

    fn scan_sampling(&self) -> UniformSamplingParams {
        UniformSamplingParams {
            voxel_size: self.scan_downsample_voxel,
        }
    }
}

/// Outcome of a successful initialization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Initialization {
    pub pose: RigidTransform,
    pub fitness: f64,
    pub iterations: usize,
}

/// Concatenates the first `init_scan_count` scans, downsamples them and aligns
/// them to the map with ICP from `initial_guess`.
///
/// Fails with [`Error::InitializationFailed`] unless ICP converges with fitness
/// strictly below `init_fitness_threshold`.
pub fn initialize_pose<S: NeighborSearch + ?Sized>(
    scans: &[StampedScan],
    map: &S,
    initial_guess: &RigidTransform,
    config: &LocalizerConfig,
) -> Result<Initialization> {
    config.validate()?;
    let n = config.init_scan_count;
    if scans.len() < n {
        return Err(Error::InvalidInput(format!(
            "initialization needs {n} scans, got {}",
            scans.len()
        )));
    }
    if map.is_empty() {
        return Err(Error::InvalidInput("prior map is empty".into()));
    }
    let mut merged = PointCloud::empty();
    for scan in &scans[..n] {
        merged.extend(&scan.cloud.without_normals());
    }
    if merged.is_empty() {
        return Err(Error::InvalidInput("initialization scans contain no points".into()));
    }
    let source = uniform_sample(&merged, &config.scan_sampling())?;
    let IcpResult {
        transform,
        fitness,
        iterations_used,
        converged,
    } = icp(&source, map, initial_guess, &config.icp)?;
    log::debug!("initialization: fitness {fitness:.6} after {iterations_used} iterations, converged {converged}");
    if converged && fitness < config.init_fitness_threshold {
        Ok(Initialization {
            pose: transform,
            fitness,
            iterations: iterations_used,
        })
    } else {
        Err(Error::InitializationFailed {
            fitness,
            threshold: config.init_fitness_threshold,
            converged,
        })
    }
}

/// One tracked pose.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrackedPose {
    pub timestamp: f64,
    pub pose: RigidTransform,
    /// Refinement did not converge and `pose` is the prediction.
    pub degraded: bool,
    /// Mean squared point-to-plane residual (m²), `+∞` if unavailable.
    pub fitness: f64,
}

/// Twist-based constant-velocity model in the body frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConstantVelocity {
    /// `(ω, v)` in rad/s and m/s.
    pub twist: Vector6<f64>,
    pub smoothing: f64,
}

impl ConstantVelocity {
    pub fn new(smoothing: f64) -> Self {
        Self {
            twist: Vector6::zeros(),
            smoothing,
        }
    }

    /// `pose · Exp(twist · dt)`.
    pub fn predict(&self, pose: &RigidTransform, dt: f64) -> RigidTransform {
        if dt == 0.0 || self.twist == Vector6::zeros() {
            return *pose;
        }
        pose.compose(&RigidTransform::exp(&(self.twist * dt)))
    }

    /// Blends in the twist that carries `previous` to `current` over `dt`.
    pub fn update(&mut self, previous: &RigidTransform, current: &RigidTransform, dt: f64) {
        if !(dt > 0.0) {
            return;
        }
        let observed = previous.inverse().compose(current).log() / dt;
        self.twist = observed * self.smoothing + self.twist * (1.0 - self.smoothing);
    }
}

/// Single-writer tracking state over a prior map.
#[derive(Clone, Debug)]
pub struct Localizer {
    config: LocalizerConfig,
    map: IncrementalIndex,
    prior_len: usize,
    pose: RigidTransform,
    motion: ConstantVelocity,
    initialized: bool,
    trajectory: Vec<TrackedPose>,
}

impl Localizer {
    /// Indexes the prior map, downsampling it first if `map_voxel` is set.
    pub fn new(map_cloud: &PointCloud, config: LocalizerConfig) -> Result<Self> {
        config.validate()?;
        let points = match config.map_voxel {
            Some(v) => uniform_sample(map_cloud, &UniformSamplingParams { voxel_size: v })?
                .into_parts()
                .0,
            None => map_cloud.points().to_vec(),
        };
        if points.is_empty() {
            return Err(Error::InvalidInput("prior map is empty".into()));
        }
        Ok(Self {
            prior_len: points.len(),
            map: IncrementalIndex::from_points(points, config.rebuild_ratio),
            config,
            pose: RigidTransform::identity(),
            motion: ConstantVelocity::new(config.velocity_smoothing),
            initialized: false,
            trajectory: Vec::new(),
        })
    }

    pub fn config(&self) -> &LocalizerConfig {
        &self.config
    }

    pub fn map(&self) -> &IncrementalIndex {
        &self.map
    }

    /// Number of points inserted after construction.
    pub fn inserted_count(&self) -> usize {
        self.map.len() - self.prior_len
    }

    pub fn pose(&self) -> &RigidTransform {
        &self.pose
    }

    pub fn velocity(&self) -> &Vector6<f64> {
        &self.motion.twist
    }

    pub fn is_initialized(&self) -> bool {
        self.initialized
    }

    pub fn trajectory(&self) -> &[TrackedPose] {
        &self.trajectory
    }

    pub fn last_timestamp(&self) -> Option<f64> {
        self.trajectory.last().map(|t| t.timestamp)
    }

    /// Runs [`initialize_pose`] and, on success, records one pose per
    /// initialization scan with zero velocity.
    pub fn initialize(&mut self, scans: &[StampedScan], initial_guess: &RigidTransform) -> Result<Initialization> {
        let init = initialize_pose(scans, &self.map, initial_guess, &self.config)?;
        let used = &scans[..self.config.init_scan_count];
        check_increasing(used)?;
        self.start_with(init.pose, used.iter().map(|s| s.timestamp), init.fitness);
        Ok(init)
    }

    /// Marks the state initialized at `pose` without running ICP.
    pub fn initialize_at(&mut self, pose: RigidTransform, timestamp: f64) -> Result<()> {
        if !timestamp.is_finite() {
            return Err(Error::InvalidInput(format!("timestamp {timestamp} is not finite")));
        }
        self.start_with(pose, std::iter::once(timestamp), 0.0);
        Ok(())
    }

    fn start_with(&mut self, pose: RigidTransform, stamps: impl Iterator<Item = f64>, fitness: f64) {
        self.pose = pose;
        self.motion = ConstantVelocity::new(self.config.velocity_smoothing);
        self.trajectory = stamps
            .map(|timestamp| TrackedPose {
                timestamp,
                pose,
                degraded: false,
                fitness,
            })
            .collect();
        self.initialized = true;
    }

    fn check_time(&self, timestamp: f64) -> Result<f64> {
        if !self.initialized {
            return Err(Error::InvalidInput("localizer is not initialized".into()));
        }
        let last = self.last_timestamp().unwrap_or(f64::NEG_INFINITY);
        if !(timestamp >= last) {
            return Err(Error::Ordering { got: timestamp, last });
        }
        Ok(timestamp - last)
    }

    /// Current pose advanced by the velocity estimate to `timestamp`.
    pub fn predict_pose(&self, timestamp: f64) -> Result<RigidTransform> {
        let dt = self.check_time(timestamp)?;
        Ok(self.motion.predict(&self.pose, dt))
    }

    /// Registers one scan and appends its pose. Out-of-order scans are
    /// rejected without touching the state.
    pub fn localize_scan(&mut self, scan: &StampedScan) -> Result<TrackedPose> {
        let dt = self.check_time(scan.timestamp)?;
        if dt == 0.0 {
            return Err(Error::Ordering {
                got: scan.timestamp,
                last: scan.timestamp,
            });
        }
        let predicted = self.motion.predict(&self.pose, dt);
        let source = if scan.cloud.is_empty() {
            None
        } else {
            Some(uniform_sample(&scan.cloud.without_normals(), &self.config.scan_sampling())?)
        };
        let refined = match &source {
            Some(src) => Some(point_to_plane_refine(
                src,
                &self.map,
                &predicted,
                &self.config.tracking,
                &self.config.plane,
            )?),
            None => None,
        };
        let sample = match refined {
            Some(r) if r.converged => {
                self.motion.update(&self.pose, &r.transform, dt);
                TrackedPose {
                    timestamp: scan.timestamp,
                    pose: r.transform,
                    degraded: false,
                    fitness: r.fitness,
                }
            }
            other => {
                log::warn!("scan at t={} degraded; keeping the prediction", scan.timestamp);
                TrackedPose {
                    timestamp: scan.timestamp,
                    pose: predicted,
                    degraded: true,
                    fitness: other.map_or(f64::INFINITY, |r| r.fitness),
                }
            }
        };
        self.pose = sample.pose;
        self.trajectory.push(sample);
        Ok(sample)
    }

    /// Inserts the part of `scan` not yet covered by the map, once map updates
    /// are enabled. Returns the number of inserted points.
    pub fn maybe_extend_map(&mut self, scan: &StampedScan, registered_pose: &RigidTransform) -> Result<usize> {
        if scan.timestamp < self.config.map_update_enable_time || scan.cloud.is_empty() {
            return Ok(0);
        }
        let voxel = self.config.scan_downsample_voxel;
        let world = crate::cloudio::apply_transform(&scan.cloud.without_normals(), registered_pose);
        let sampled = uniform_sample(&world, &self.config.scan_sampling())?;
        let fresh: Vec<Point3<f64>> = sampled
            .points()
            .iter()
            .filter(|p| self.map.nearest_within(p, voxel).is_none_or(|n| n.distance >= voxel))
            .copied()
            .collect();
        self.map.insert(&fresh);
        Ok(fresh.len())
    }

    /// Map points: the prior followed by insertions in order.
    pub fn map_cloud(&self) -> PointCloud {
        PointCloud::from_parts_unchecked(self.map.points().to_vec(), None)
    }

    pub fn into_map_cloud(self) -> PointCloud {
        PointCloud::from_parts_unchecked(self.map.into_points(), None)
    }
}

fn check_increasing(scans: &[StampedScan]) -> Result<()> {
    for w in scans.windows(2) {
        if !(w[1].timestamp > w[0].timestamp) {
            return Err(Error::Ordering {
                got: w[1].timestamp,
                last: w[0].timestamp,
            });
        }
    }
    Ok(())
}

/// Results of [`run_sequence`].
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub initialization: Initialization,
    pub trajectory: Vec<TrackedPose>,
    /// Downsampled scans placed at their estimated poses.
    pub registered: PointCloud,
    /// Prior map plus any inserted points.
    pub map: PointCloud,
    pub inserted: usize,
}

impl RunOutput {
    pub fn stamped_poses(&self) -> Vec<StampedPose> {
        self.trajectory.iter().map(|t| (t.timestamp, t.pose)).collect()
    }

    pub fn degraded_count(&self) -> usize {
        self.trajectory.iter().filter(|t| t.degraded).count()
    }
}

/// Initializes on the first scans, then tracks and optionally extends the map
/// with every remaining scan. Degraded scans are never inserted into the map.
pub fn run_sequence(
    map_cloud: &PointCloud,
    scans: &[StampedScan],
    initial_guess: &RigidTransform,
    config: &LocalizerConfig,
) -> Result<RunOutput> {
    if scans.is_empty() {
        return Err(Error::InvalidInput("scan sequence is empty".into()));
    }
    let mut loc = Localizer::new(map_cloud, *config)?;
    let initialization = loc.initialize(scans, initial_guess)?;
    let sampling = config.scan_sampling();
    let mut registered = PointCloud::empty();
    let mut inserted = 0;
    let n = config.init_scan_count;
    for scan in &scans[..n] {
        if !scan.cloud.is_empty() {
            let local = uniform_sample(&scan.cloud.without_normals(), &sampling)?;
            registered.extend(&crate::cloudio::apply_transform(&local, &initialization.pose));
        }
    }
    for scan in &scans[n..] {
        let tracked = loc.localize_scan(scan)?;
        if tracked.degraded || scan.cloud.is_empty() {
            continue;
        }
        let local = uniform_sample(&scan.cloud.without_normals(), &sampling)?;
        registered.extend(&crate::cloudio::apply_transform(&local, &tracked.pose));
        inserted += loc.maybe_extend_map(scan, &tracked.pose)?;
    }
    let trajectory = loc.trajectory().to_vec();
    Ok(RunOutput {
        initialization,
        trajectory,
        registered,
        map: loc.into_map_cloud(),
        inserted,
    })
}

#[cfg(test)]
mod tests;
