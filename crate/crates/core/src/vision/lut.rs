//! Precomputed distortion and undistortion maps.
//!
//! The undistortion grid is laid over image pixels and stores the ideal
//! equidistant coordinates `theta (cos a, sin a)` of each node, which vary
//! almost linearly with the pixel. The distortion grid is laid over ideal
//! equidistant pixels and stores distorted pixels. Lookups are bilinear.

use nalgebra::Vector3;

use super::CameraModel;
use crate::{Error, Result};

#[derive(Debug, Clone)]
struct Grid<const N: usize> {
    /// Node coordinates along each axis, px.
    xs: Vec<f64>,
    ys: Vec<f64>,
    values: Vec<[f64; N]>,
}

impl<const N: usize> Grid<N> {
    fn axis(lo: f64, hi: f64, stride: f64) -> Vec<f64> {
        let mut out = Vec::new();
        let mut i = 0usize;
        loop {
            let x = lo + i as f64 * stride;
            if x >= hi {
                out.push(hi);
                break;
            }
            out.push(x);
            i += 1;
        }
        out
    }

    fn build(xs: Vec<f64>, ys: Vec<f64>, mut f: impl FnMut(f64, f64) -> Result<[f64; N]>) -> Result<Self> {
        let mut values = Vec::with_capacity(xs.len() * ys.len());
        for &y in &ys {
            for &x in &xs {
                values.push(f(x, y)?);
            }
        }
        Ok(Grid { xs, ys, values })
    }

    /// Cell index and weight along one axis. A query on a node reports that
    /// node with weight 0.
    fn cell(axis: &[f64], x: f64) -> (usize, f64) {
        let stride = axis[1] - axis[0];
        let i = (((x - axis[0]) / stride).floor().max(0.0) as usize).min(axis.len() - 2);
        let w = (x - axis[i]) / (axis[i + 1] - axis[i]);
        if w == 1.0 {
            (i + 1, 0.0)
        } else {
            (i, w)
        }
    }

    fn at(&self, i: usize, j: usize) -> &[f64; N] {
        &self.values[j * self.xs.len() + i]
    }

    fn is_node(&self, x: f64, y: f64) -> bool {
        Self::cell(&self.xs, x).1 == 0.0 && Self::cell(&self.ys, y).1 == 0.0
    }

    /// Bilinear lookup. Returns the node value itself on an exact hit.
    fn lookup(&self, x: f64, y: f64) -> [f64; N] {
        let (i, wx) = Self::cell(&self.xs, x);
        let (j, wy) = Self::cell(&self.ys, y);
        if wx == 0.0 && wy == 0.0 {
            return *self.at(i, j);
        }
        let (i1, j1) = ((i + 1).min(self.xs.len() - 1), (j + 1).min(self.ys.len() - 1));
        let (a, b, c, d) = (self.at(i, j), self.at(i1, j), self.at(i, j1), self.at(i1, j1));
        let mut out = [0.0; N];
        for k in 0..N {
            let top = a[k] + wx * (b[k] - a[k]);
            let bottom = c[k] + wx * (d[k] - c[k]);
            out[k] = top + wy * (bottom - top);
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct ProjectionLut {
    model: CameraModel,
    stride: usize,
    /// Per image pixel node: ideal coordinates (2) and unit ray (3).
    undistort: Grid<5>,
    /// Per ideal pixel node: distorted pixel.
    distort: Grid<2>,
}

impl ProjectionLut {
    pub fn build(model: &CameraModel, stride: usize) -> Result<Self> {
        if stride == 0 {
            return Err(Error::invalid("LUT stride must be >= 1"));
        }
        model.validate()?;
        let s = stride as f64;

        let undistort = Grid::build(
            Grid::<5>::axis(0.0, model.width as f64, s),
            Grid::<5>::axis(0.0, model.height as f64, s),
            |u, v| {
                let ray = model.undistort_pixel(u, v)?;
                let theta = ray.x.hypot(ray.y).atan2(ray.z);
                let rho = ray.x.hypot(ray.y);
                let (ix, iy) = if rho > 0.0 {
                    (theta * ray.x / rho, theta * ray.y / rho)
                } else {
                    (0.0, 0.0)
                };
                Ok([ix, iy, ray.x, ray.y, ray.z])
            },
        )?;

        // Ideal pixels cover every accepted ray, plus a margin of one cell.
        let reach_x = model.fx * model.max_theta() + s;
        let reach_y = model.fy * model.max_theta() + s;
        let distort = Grid::build(
            Grid::<2>::axis(model.cx - reach_x, model.cx + reach_x, s),
            Grid::<2>::axis(model.cy - reach_y, model.cy + reach_y, s),
            |x, y| {
                let (a, b) = ((x - model.cx) / model.fx, (y - model.cy) / model.fy);
                let theta = a.hypot(b);
                let scale = if theta > 0.0 { model.radial(theta) / theta } else { 1.0 };
                Ok([model.cx + model.fx * a * scale, model.cy + model.fy * b * scale])
            },
        )?;

        Ok(ProjectionLut {
            model: model.clone(),
            stride,
            undistort,
            distort,
        })
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn model(&self) -> &CameraModel {
        &self.model
    }

    pub fn undistort(&self, u: f64, v: f64) -> Result<Vector3<f64>> {
        if !(u.is_finite() && v.is_finite()) || !self.model.contains(u, v) {
            return Err(Error::invalid(format!("pixel ({u}, {v}) outside the image")));
        }
        let n = self.undistort.lookup(u, v);
        if self.undistort.is_node(u, v) {
            return Ok(Vector3::new(n[2], n[3], n[4]));
        }
        Ok(ray_from_ideal(n[0], n[1]))
    }

    pub fn distort(&self, ray: &Vector3<f64>) -> Result<(f64, f64)> {
        let n = ray.norm();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::invalid("ray must be finite and non-zero"));
        }
        let rho = ray.x.hypot(ray.y);
        let theta = rho.atan2(ray.z);
        if ray.z / n <= self.model.max_theta().cos() {
            return Err(Error::OutOfView {
                angle_deg: theta.to_degrees(),
            });
        }
        let (a, b) = if rho > 0.0 {
            (theta * ray.x / rho, theta * ray.y / rho)
        } else {
            (0.0, 0.0)
        };
        let [u, v] = self
            .distort
            .lookup(self.model.cx + self.model.fx * a, self.model.cy + self.model.fy * b);
        Ok((u, v))
    }
}

fn ray_from_ideal(a: f64, b: f64) -> Vector3<f64> {
    let theta = a.hypot(b);
    if theta == 0.0 {
        return Vector3::z();
    }
    let (s, c) = theta.sin_cos();
    Vector3::new(s * a / theta, s * b / theta, c)
}
