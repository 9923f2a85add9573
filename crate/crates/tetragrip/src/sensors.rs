//! Multizone time-of-flight frames and vacuum pressure samples.
//!
//! Each actuator tip carries an 8x8 ToF sensor looking along +x. A zone's
//! reading is the minimum boresight-projected hit distance over its sub-rays
//! (t * cos of the ray's angle from the sensor axis); projecting onto the
//! axis means a perpendicular wall reads its true distance in every zone,
//! which is how multizone parts report range. Gaussian noise is added after
//! the per-zone minimum. Zones with no hit, or readings outside
//! [min_range, max_range], are invalid: the mask is authoritative and the
//! stored distance is `max_range`, kept finite so serialization never sees
//! NaN.

use crate::geometry::{Bvh, Pose, Ray, Vec3};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Zones per side of the square grid.
pub const TOF_ZONES: usize = 8;

/// The multizone boresight sits this far behind the suction-cup centre along
/// the actuator axis, so surfaces stay inside the valid band even when the
/// cup lip is pressed against them.
pub const SENSOR_RECESS: f64 = 0.05;

#[derive(Debug, Error)]
pub enum SensorError {
    #[error("no valid zones in frame")]
    NoValidZones,
    #[error("no valid zones in {0} half")]
    EmptyHalf(&'static str),
    #[error("pressure {0} kPa outside [0, 100]")]
    BadPressure(f64),
    #[error("rays_per_zone {0} must be a positive perfect square")]
    RaysNotSquare(u32),
    #[error("range [{0}, {1}] is invalid")]
    BadRange(f64, f64),
}

// ---------- Configuration ----------

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ToFConfig {
    /// Full field of view per axis, degrees.
    pub fov_deg: f64,
    /// Sub-rays per zone; must be a perfect square (laid out as an n x n
    /// grid inside the zone's angular cell).
    pub rays_per_zone: u32,
    pub min_range: f64,
    pub max_range: f64,
    pub noise_sigma: f64,
    pub rate_hz: f64,
}

impl Default for ToFConfig {
    fn default() -> Self {
        ToFConfig {
            fov_deg: 45.0,
            rays_per_zone: 4,
            min_range: 0.02,
            max_range: 0.40,
            noise_sigma: 0.003,
            rate_hz: 15.0,
        }
    }
}

impl ToFConfig {
    pub fn validate(&self) -> Result<(), SensorError> {
        if !(self.min_range >= 0.0 && self.min_range < self.max_range && self.max_range.is_finite()) {
            return Err(SensorError::BadRange(self.min_range, self.max_range));
        }
        let n = (self.rays_per_zone as f64).sqrt().round() as u32;
        if self.rays_per_zone == 0 || n * n != self.rays_per_zone {
            return Err(SensorError::RaysNotSquare(self.rays_per_zone));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct VacuumConfig {
    pub rate_hz: f64,
    pub noise_sigma: f64,
}

impl Default for VacuumConfig {
    fn default() -> Self {
        VacuumConfig { rate_hz: 130.0, noise_sigma: 0.0 }
    }
}

// ---------- Frames and samples ----------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToFFrame {
    /// Row-major grid: row = elevation (0 lowest), column = azimuth
    /// (0 at -y, the sensor's left).
    pub distances: [[f64; TOF_ZONES]; TOF_ZONES],
    pub valid: [[bool; TOF_ZONES]; TOF_ZONES],
    pub timestamp: f64,
    pub sensor_id: u8,
}

impl ToFFrame {
    /// One JSONL row: timestamp, sensor id, 64 distances, 64 validity bits.
    pub fn to_jsonl_row(&self) -> String {
        #[derive(Serialize)]
        struct Row<'a> {
            t: f64,
            sensor_id: u8,
            distances: &'a [f64],
            valid: &'a [u8],
        }
        let mut d = Vec::with_capacity(64);
        let mut v = Vec::with_capacity(64);
        for row in 0..TOF_ZONES {
            for col in 0..TOF_ZONES {
                d.push(self.distances[row][col]);
                v.push(self.valid[row][col] as u8);
            }
        }
        serde_json::to_string(&Row { t: self.timestamp, sensor_id: self.sensor_id, distances: &d, valid: &v })
            .expect("frame row serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VacuumSample {
    pub pressure: f64,
    pub timestamp: f64,
    pub station_id: u8,
}

// ---------- ToF sampling ----------

/// Local-frame direction of one sub-ray. Zone cells tile the tangent plane
/// of the FoV pyramid, so zone boundaries are planes through the apex.
fn ray_direction(cfg: &ToFConfig, row: usize, col: usize, sub_r: u32, sub_c: u32, n: u32) -> Vec3 {
    let half_fov = (cfg.fov_deg / 2.0).to_radians();
    let cell = cfg.fov_deg.to_radians() / TOF_ZONES as f64;
    let frac = |s: u32| (s as f64 + 0.5) / n as f64;
    let az = -half_fov + (col as f64 + frac(sub_c)) * cell;
    let el = -half_fov + (row as f64 + frac(sub_r)) * cell;
    Vec3::new(1.0, az.tan(), el.tan())
}

/// Casts one frame. Zone reading = min over sub-rays of the boresight
/// projection of the hit distance, plus noise; invalid zones carry
/// `max_range` with `valid = false`. Deterministic for a fixed rng state.
pub fn sample_tof<R: Rng>(
    bvh: &Bvh,
    sensor_pose: &Pose,
    cfg: &ToFConfig,
    timestamp: f64,
    sensor_id: u8,
    rng: &mut R,
) -> Result<ToFFrame, SensorError> {
    cfg.validate()?;
    let n = (cfg.rays_per_zone as f64).sqrt().round() as u32;
    let origin = sensor_pose.translation;
    let mut distances = [[cfg.max_range; TOF_ZONES]; TOF_ZONES];
    let mut valid = [[false; TOF_ZONES]; TOF_ZONES];
    for row in 0..TOF_ZONES {
        for col in 0..TOF_ZONES {
            let mut best: Option<f64> = None;
            for sub_r in 0..n {
                for sub_c in 0..n {
                    let dir_local = ray_direction(cfg, row, col, sub_r, sub_c, n);
                    // cos(angle from axis) = x component after normalizing.
                    let inv_len = 1.0 / dir_local.length();
                    let cos_axis = dir_local.x * inv_len;
                    let dir = sensor_pose.apply_vector(dir_local * inv_len);
                    let t_max = cfg.max_range / cos_axis + 1e-9;
                    let ray = Ray::new(origin, dir, 1e-9, t_max).expect("unit direction, valid range");
                    if let Some(hit) = bvh.raycast(&ray) {
                        let projected = hit.t * cos_axis;
                        best = Some(best.map_or(projected, |b: f64| b.min(projected)));
                    }
                }
            }
            // One noise draw per zone, after the min, keeping the rng
            // stream layout independent of scene content.
            let noise: f64 = if cfg.noise_sigma > 0.0 {
                let z: f64 = rng.sample(StandardNormal);
                z * cfg.noise_sigma
            } else {
                0.0
            };
            if let Some(reading) = best.map(|b| b + noise) {
                if reading >= cfg.min_range && reading <= cfg.max_range {
                    distances[row][col] = reading;
                    valid[row][col] = true;
                }
            }
        }
    }
    Ok(ToFFrame { distances, valid, timestamp, sensor_id })
}

// ---------- Frame reductions ----------

/// Mean over valid zones only.
pub fn frame_mean(frame: &ToFFrame) -> Result<f64, SensorError> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for row in 0..TOF_ZONES {
        for col in 0..TOF_ZONES {
            if frame.valid[row][col] {
                sum += frame.distances[row][col];
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(SensorError::NoValidZones);
    }
    Ok(sum / count as f64)
}

/// Mean over the central 2x2 zones, valid only. Tracks the distance along
/// the sensor axis itself: unlike [`frame_mean`], it stays unbiased when the
/// outer zones spill past the target's edges onto whatever is behind it.
pub fn boresight_mean(frame: &ToFFrame) -> Result<f64, SensorError> {
    let mid = TOF_ZONES / 2;
    let mut sum = 0.0;
    let mut count = 0usize;
    for row in mid - 1..=mid {
        for col in mid - 1..=mid {
            if frame.valid[row][col] {
                sum += frame.distances[row][col];
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(SensorError::NoValidZones);
    }
    Ok(sum / count as f64)
}

/// Mean of columns 0-3 (left, toward -y) and columns 4-7 (right, toward
/// +y), valid zones only; a half with no valid zone is a no-reading error.
pub fn split_halves(frame: &ToFFrame) -> (Result<f64, SensorError>, Result<f64, SensorError>) {
    let half_mean = |cols: std::ops::Range<usize>, name: &'static str| {
        let mut sum = 0.0;
        let mut count = 0usize;
        for row in 0..TOF_ZONES {
            for col in cols.clone() {
                if frame.valid[row][col] {
                    sum += frame.distances[row][col];
                    count += 1;
                }
            }
        }
        if count == 0 {
            Err(SensorError::EmptyHalf(name))
        } else {
            Ok(sum / count as f64)
        }
    };
    (half_mean(0..TOF_ZONES / 2, "left"), half_mean(TOF_ZONES / 2..TOF_ZONES, "right"))
}

/// [`split_halves`] restricted to valid zones within `window` of a reference
/// depth. Screens out zones that spill past the surface of interest onto
/// farther structure, which would otherwise skew one half's mean.
pub fn split_halves_near(
    frame: &ToFFrame,
    reference: f64,
    window: f64,
) -> (Result<f64, SensorError>, Result<f64, SensorError>) {
    let half_mean = |cols: std::ops::Range<usize>, name: &'static str| {
        let mut sum = 0.0;
        let mut count = 0usize;
        for row in 0..TOF_ZONES {
            for col in cols.clone() {
                if frame.valid[row][col] && (frame.distances[row][col] - reference).abs() <= window
                {
                    sum += frame.distances[row][col];
                    count += 1;
                }
            }
        }
        if count == 0 {
            Err(SensorError::EmptyHalf(name))
        } else {
            Ok(sum / count as f64)
        }
    };
    (half_mean(0..TOF_ZONES / 2, "left"), half_mean(TOF_ZONES / 2..TOF_ZONES, "right"))
}

// ---------- Vacuum sampling ----------

/// One pressure sample: truth plus Gaussian noise, clamped to [0, 100] kPa.
pub fn sample_vacuum<R: Rng>(
    pressure: f64,
    station_id: u8,
    timestamp: f64,
    cfg: &VacuumConfig,
    rng: &mut R,
) -> Result<VacuumSample, SensorError> {
    if !(0.0..=100.0).contains(&pressure) || !pressure.is_finite() {
        return Err(SensorError::BadPressure(pressure));
    }
    let noise: f64 = if cfg.noise_sigma > 0.0 {
        let z: f64 = rng.sample(StandardNormal);
        z * cfg.noise_sigma
    } else {
        0.0
    };
    Ok(VacuumSample {
        pressure: (pressure + noise).clamp(0.0, 100.0),
        timestamp,
        station_id,
    })
}
