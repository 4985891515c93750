//! Extrinsic camera calibration from ground-truth ground points.

use super::ground::render_ground_point;
use super::{nelder_mead, CameraModel, Extrinsic, NelderMeadConfig, PoseContext};
use crate::orientation::{FusedAngles, Hemisphere};
use crate::{Error, Result};

/// Squared pixel error charged for a point that cannot be rendered.
const MISS_PENALTY: f64 = 1e6;
/// Parameter scales: metres for position, radians for the fused offsets.
const POSITION_SCALE: f64 = 0.02;
const ANGLE_SCALE: f64 = 0.05;
const RESTARTS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    /// Ground point in the egocentric frame, m.
    pub world: [f64; 2],
    pub pixel: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult {
    pub extrinsic: Extrinsic,
    pub rms: f64,
    pub initial_rms: f64,
    pub evaluations: usize,
}

/// Parses `world_x,world_y,pixel_u,pixel_v` rows (with that header).
pub fn parse_correspondences_csv(text: &str) -> Result<Vec<Correspondence>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == "world_x,world_y,pixel_u,pixel_v" => {}
        _ => {
            return Err(Error::schema(
                "line 1",
                "expected header `world_x,world_y,pixel_u,pixel_v`",
            ))
        }
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        let vals: Vec<f64> = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::schema(format!("line {}", i + 1), e.to_string()))?;
        if vals.len() != 4 || vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::schema(format!("line {}", i + 1), "expected four finite numbers"));
        }
        out.push(Correspondence {
            world: [vals[0], vals[1]],
            pixel: [vals[2], vals[3]],
        });
    }
    Ok(out)
}

fn apply(initial: &Extrinsic, p: &[f64]) -> Result<Extrinsic> {
    let offset = FusedAngles::new(
        p[3] * ANGLE_SCALE,
        p[4] * ANGLE_SCALE,
        p[5] * ANGLE_SCALE,
        Hemisphere::Upper,
    )
    .to_quat()?;
    Ok(Extrinsic {
        position: initial.position
            + nalgebra::Vector3::new(p[0], p[1], p[2]) * POSITION_SCALE,
        orientation: initial.orientation * offset,
    })
}

fn mean_squared_error(
    points: &[Correspondence],
    camera: &CameraModel,
    ext: &Extrinsic,
    ctx: &PoseContext,
) -> f64 {
    let sum: f64 = points
        .iter()
        .map(|c| match render_ground_point(c.world, camera, ext, ctx) {
            Ok((u, v)) => (u - c.pixel[0]).powi(2) + (v - c.pixel[1]).powi(2),
            Err(_) => MISS_PENALTY,
        })
        .sum();
    sum / points.len() as f64
}

pub fn reprojection_rms(
    points: &[Correspondence],
    camera: &CameraModel,
    ext: &Extrinsic,
    ctx: &PoseContext,
) -> f64 {
    mean_squared_error(points, camera, ext, ctx).sqrt()
}

fn check_spread(points: &[Correspondence]) -> Result<()> {
    if points.len() < 4 {
        return Err(Error::Calibration(format!(
            "need at least 4 correspondences, got {}",
            points.len()
        )));
    }
    let n = points.len() as f64;
    let (mx, my) = points
        .iter()
        .fold((0.0, 0.0), |(x, y), c| (x + c.world[0] / n, y + c.world[1] / n));
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for c in points {
        let (dx, dy) = (c.world[0] - mx, c.world[1] - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    let trace = sxx + syy;
    let det = sxx * syy - sxy * sxy;
    if trace <= 0.0 || det <= 1e-9 * trace * trace {
        return Err(Error::Calibration("correspondences are collinear".into()));
    }
    Ok(())
}

/// Minimises the mean squared reprojection error over the camera position
/// and a fused yaw/pitch/roll offset applied to the initial orientation.
/// The result is never worse than the initial guess.
pub fn calibrate_extrinsics(
    points: &[Correspondence],
    initial: &Extrinsic,
    camera: &CameraModel,
    ctx: &PoseContext,
) -> Result<CalibrationResult> {
    check_spread(points)?;
    let initial_mse = mean_squared_error(points, camera, initial, ctx);
    let mut evaluations = 0;
    let mut objective = |base: &Extrinsic, p: &[f64]| -> f64 {
        evaluations += 1;
        match apply(base, p) {
            Ok(ext) => mean_squared_error(points, camera, &ext, ctx),
            Err(_) => MISS_PENALTY,
        }
    };

    let cfg = NelderMeadConfig {
        initial_step: 1.0,
        tol: 1e-9,
        max_iter: 20_000,
        ..Default::default()
    };
    let mut best = *initial;
    let mut best_mse = initial_mse;
    for _ in 0..RESTARTS {
        let base = best;
        let r = nelder_mead(|p| objective(&base, p), &[0.0; 6], &cfg)?;
        if r.value >= best_mse {
            break;
        }
        best = apply(&base, &r.x)?;
        best_mse = r.value;
    }
    Ok(CalibrationResult {
        extrinsic: best,
        rms: best_mse.sqrt(),
        initial_rms: initial_mse.sqrt(),
        evaluations,
    })
}
