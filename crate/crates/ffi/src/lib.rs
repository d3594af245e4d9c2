//! C ABI over `lidarmap`.
//!
//! Objects are opaque handles created by `lm_*_new`/`lm_*_load` functions and
//! released with the matching `lm_*_free`. Every fallible call returns an
//! [`LmStatus`]; on failure the message is kept per thread and can be read
//! with [`lm_last_error_message`]. Poses are row-major 4x4 `double[16]`.
//! Panics never cross the boundary and surface as [`LmStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use lidarmap::cloudio::{load_cloud, save_cloud, CloudFormat, PointCloud, RigidTransform, StampedScan};
use lidarmap::ground::{csf_extract, CsfParams};
use lidarmap::localization::{Localizer, LocalizerConfig};
use lidarmap::mapcraft::{craft_map, MlsParams, UniformSamplingParams};
use lidarmap::Error;
use nalgebra::{Matrix4, Point3};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LmStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    UnsupportedFormat = 5,
    InvalidInput = 6,
    Degenerate = 7,
    InitializationFailed = 8,
    Ordering = 9,
    Config = 10,
    Internal = 11,
    Panic = 12,
}

impl From<&Error> for LmStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Io { .. } => LmStatus::Io,
            Error::Parse { .. } => LmStatus::Parse,
            Error::UnsupportedFormat(_) => LmStatus::UnsupportedFormat,
            Error::InvalidInput(_) => LmStatus::InvalidInput,
            Error::Degenerate(_) => LmStatus::Degenerate,
            Error::InitializationFailed { .. } => LmStatus::InitializationFailed,
            Error::Ordering { .. } => LmStatus::Ordering,
            Error::Config { .. } => LmStatus::Config,
            Error::EmptyReport { .. } | Error::Alignment => LmStatus::Internal,
        }
    }
}

/// Opaque point cloud.
pub struct LmCloud(PointCloud);

/// Opaque prior-map localizer.
pub struct LmLocalizer(Localizer);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

struct Failure(LmStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(LmStatus::from(&e), e.to_string())
    }
}

fn null(name: &str) -> Failure {
    Failure(LmStatus::NullArgument, format!("{name} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> LmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            LmStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            LmStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(name))
}

unsafe fn deref_mut<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(name))
}

unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(LmStatus::InvalidArgument, "path is not valid UTF-8".into()))
}

unsafe fn pose_arg(p: *const f64) -> Result<RigidTransform, Failure> {
    if p.is_null() {
        return Err(null("pose"));
    }
    let m = Matrix4::from_row_slice(std::slice::from_raw_parts(p, 16));
    Ok(RigidTransform::from_matrix4(&m)?)
}

unsafe fn write_pose(pose: &RigidTransform, out: *mut f64) {
    let m = pose.to_matrix4();
    for r in 0..4 {
        for c in 0..4 {
            *out.add(r * 4 + c) = m[(r, c)];
        }
    }
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

unsafe fn put<T>(out: *mut *mut T, v: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = boxed(v);
    Ok(())
}

/// Copies the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `len - 1` bytes) and returns the full message length in bytes.
/// `buf` may be null to query the length.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn lm_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Builds a cloud from `count` packed xyz triples.
///
/// # Safety
/// `xyz` must point to `3 * count` doubles (or be null when `count` is 0);
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lm_cloud_new(xyz: *const f64, count: usize, out: *mut *mut LmCloud) -> LmStatus {
    guard(|| {
        let points = if count == 0 {
            Vec::new()
        } else {
            if xyz.is_null() {
                return Err(null("xyz"));
            }
            std::slice::from_raw_parts(xyz, 3 * count)
                .chunks_exact(3)
                .map(|c| Point3::new(c[0], c[1], c[2]))
                .collect()
        };
        put(out, LmCloud(PointCloud::new(points)?))
    })
}

/// Loads a PLY or PCD file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lm_cloud_load(path: *const c_char, out: *mut *mut LmCloud) -> LmStatus {
    guard(|| {
        let path = path_arg(path)?;
        put(out, LmCloud(load_cloud(path)?))
    })
}

/// Writes the cloud; the format follows the file extension.
///
/// # Safety
/// `cloud` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn lm_cloud_save(cloud: *const LmCloud, path: *const c_char) -> LmStatus {
    guard(|| {
        let cloud = deref(cloud, "cloud")?;
        let path = path_arg(path)?;
        let format = CloudFormat::from_path(path.as_ref())
            .ok_or_else(|| Failure(LmStatus::UnsupportedFormat, format!("unknown extension: {path}")))?;
        Ok(save_cloud(&cloud.0, path, format)?)
    })
}

/// Number of points; 0 for a null handle.
///
/// # Safety
/// `cloud` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lm_cloud_len(cloud: *const LmCloud) -> usize {
    cloud.as_ref().map_or(0, |c| c.0.len())
}

/// Copies the points as packed xyz into `xyz`, which holds `capacity` points.
///
/// # Safety
/// `cloud` must be a live handle; `xyz` must point to `3 * capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn lm_cloud_points(cloud: *const LmCloud, xyz: *mut f64, capacity: usize) -> LmStatus {
    guard(|| {
        let cloud = deref(cloud, "cloud")?;
        if capacity < cloud.0.len() {
            return Err(Failure(
                LmStatus::InvalidArgument,
                format!("capacity {capacity} < {} points", cloud.0.len()),
            ));
        }
        if cloud.0.is_empty() {
            return Ok(());
        }
        if xyz.is_null() {
            return Err(null("xyz"));
        }
        let dst = std::slice::from_raw_parts_mut(xyz, 3 * cloud.0.len());
        for (d, p) in dst.chunks_exact_mut(3).zip(cloud.0.points()) {
            d.copy_from_slice(&[p.x, p.y, p.z]);
        }
        Ok(())
    })
}

/// Releases a cloud. Null is ignored.
///
/// # Safety
/// `cloud` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lm_cloud_free(cloud: *mut LmCloud) {
    if !cloud.is_null() {
        drop(Box::from_raw(cloud));
    }
}

/// Uniform sampling at `voxel_size` followed by MLS smoothing with
/// `search_radius` (also the Gaussian width); non-positive values select the
/// defaults.
///
/// # Safety
/// `cloud` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lm_craft_map(
    cloud: *const LmCloud,
    voxel_size: f64,
    search_radius: f64,
    out: *mut *mut LmCloud,
) -> LmStatus {
    guard(|| {
        let cloud = deref(cloud, "cloud")?;
        let mut us = UniformSamplingParams::default();
        if voxel_size > 0.0 {
            us.voxel_size = voxel_size;
        }
        let mut mls = MlsParams::default();
        if search_radius > 0.0 {
            mls.search_radius = search_radius;
            mls.gaussian_scale = search_radius;
        }
        put(out, LmCloud(craft_map(&cloud.0, &us, &mls)?.cloud))
    })
}

/// Cloth-simulation ground extraction with default parameters.
///
/// # Safety
/// `cloud` must be a live handle; both outputs valid pointers.
#[no_mangle]
pub unsafe extern "C" fn lm_extract_ground(
    cloud: *const LmCloud,
    ground: *mut *mut LmCloud,
    nonground: *mut *mut LmCloud,
) -> LmStatus {
    guard(|| {
        let cloud = deref(cloud, "cloud")?;
        if ground.is_null() || nonground.is_null() {
            return Err(null("out"));
        }
        let split = csf_extract(&cloud.0, &CsfParams::default())?;
        put(ground, LmCloud(split.ground))?;
        put(nonground, LmCloud(split.nonground))
    })
}

/// Localizer over a copy of `map` with default configuration and map
/// insertion enabled from scan timestamp `map_update_enable_time`
/// (`INFINITY` keeps the map fixed).
///
/// # Safety
/// `map` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lm_localizer_new(
    map: *const LmCloud,
    map_update_enable_time: f64,
    out: *mut *mut LmLocalizer,
) -> LmStatus {
    guard(|| {
        let map = deref(map, "map")?;
        if map_update_enable_time.is_nan() {
            return Err(Failure(LmStatus::InvalidArgument, "map_update_enable_time is NaN".into()));
        }
        let config = LocalizerConfig {
            map_update_enable_time,
            ..LocalizerConfig::default()
        };
        put(out, LmLocalizer(Localizer::new(&map.0, config)?))
    })
}

/// Registers the first `count` scans against the map starting from `guess`.
/// On success writes the pose and fitness; on [`LmStatus::InitializationFailed`]
/// only the fitness is written.
///
/// # Safety
/// `scans` and `timestamps` must hold `count` entries of live handles and
/// values; `guess` 16 doubles; `pose_out` 16 writable doubles; `fitness_out`
/// null or writable.
#[no_mangle]
pub unsafe extern "C" fn lm_localizer_initialize(
    localizer: *mut LmLocalizer,
    scans: *const *const LmCloud,
    timestamps: *const f64,
    count: usize,
    guess: *const f64,
    pose_out: *mut f64,
    fitness_out: *mut f64,
) -> LmStatus {
    guard(|| {
        let loc = deref_mut(localizer, "localizer")?;
        if count > 0 && (scans.is_null() || timestamps.is_null()) {
            return Err(null("scans"));
        }
        if pose_out.is_null() {
            return Err(null("pose_out"));
        }
        let guess = pose_arg(guess)?;
        let mut stamped = Vec::with_capacity(count);
        for i in 0..count {
            let cloud = deref(*scans.add(i), "scan")?;
            stamped.push(StampedScan::new(*timestamps.add(i), cloud.0.clone())?);
        }
        match loc.0.initialize(&stamped, &guess) {
            Ok(init) => {
                write_pose(&init.pose, pose_out);
                if !fitness_out.is_null() {
                    *fitness_out = init.fitness;
                }
                Ok(())
            }
            Err(e) => {
                if let (Error::InitializationFailed { fitness, .. }, false) = (&e, fitness_out.is_null()) {
                    *fitness_out = *fitness;
                }
                Err(e.into())
            }
        }
    })
}

/// Starts tracking at a known pose.
///
/// # Safety
/// `localizer` must be a live handle; `pose` 16 doubles.
#[no_mangle]
pub unsafe extern "C" fn lm_localizer_initialize_at(
    localizer: *mut LmLocalizer,
    pose: *const f64,
    timestamp: f64,
) -> LmStatus {
    guard(|| {
        let loc = deref_mut(localizer, "localizer")?;
        Ok(loc.0.initialize_at(pose_arg(pose)?, timestamp)?)
    })
}

/// Tracks one scan. Writes the pose and whether the scan was degraded
/// (pose carried over from the prediction).
///
/// # Safety
/// `localizer` and `scan` must be live handles; `pose_out` 16 writable
/// doubles; `degraded_out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn lm_localizer_localize(
    localizer: *mut LmLocalizer,
    timestamp: f64,
    scan: *const LmCloud,
    pose_out: *mut f64,
    degraded_out: *mut bool,
) -> LmStatus {
    guard(|| {
        let loc = deref_mut(localizer, "localizer")?;
        let scan = deref(scan, "scan")?;
        if pose_out.is_null() {
            return Err(null("pose_out"));
        }
        let tracked = loc.0.localize_scan(&StampedScan::new(timestamp, scan.0.clone())?)?;
        write_pose(&tracked.pose, pose_out);
        if !degraded_out.is_null() {
            *degraded_out = tracked.degraded;
        }
        Ok(())
    })
}

/// Snapshot of the current map (prior plus inserted points).
///
/// # Safety
/// `localizer` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lm_localizer_map(localizer: *const LmLocalizer, out: *mut *mut LmCloud) -> LmStatus {
    guard(|| {
        let loc = deref(localizer, "localizer")?;
        put(out, LmCloud(loc.0.map_cloud()))
    })
}

/// Releases a localizer. Null is ignored.
///
/// # Safety
/// `localizer` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lm_localizer_free(localizer: *mut LmLocalizer) {
    if !localizer.is_null() {
        drop(Box::from_raw(localizer));
    }
}
