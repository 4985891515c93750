//! Derivative-free simplex minimisation.

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadConfig {
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
    /// Stop once every vertex is within this distance (max norm) of the best.
    pub tol: f64,
    pub max_iter: usize,
    /// Offset of the initial simplex vertices along each coordinate.
    pub initial_step: f64,
}

impl Default for NelderMeadConfig {
    fn default() -> Self {
        NelderMeadConfig {
            reflection: 1.0,
            expansion: 2.0,
            contraction: 0.5,
            shrink: 0.5,
            tol: 1e-10,
            max_iter: 10_000,
            initial_step: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn eval<F: FnMut(&[f64]) -> f64>(f: &mut F, x: &[f64]) -> Result<f64> {
    let v = f(x);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Optimization { vertex: x.to_vec() })
    }
}

fn along(c: &[f64], d: &[f64], t: f64) -> Vec<f64> {
    c.iter().zip(d).map(|(c, d)| c + t * (d - c)).collect()
}

pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    cfg: &NelderMeadConfig,
) -> Result<NelderMeadResult> {
    let n = x0.len();
    if n == 0 {
        return Err(Error::invalid("Nelder-Mead needs at least one dimension"));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("initial point must be finite"));
    }
    let f0 = eval(&mut f, x0)?;
    if cfg.max_iter == 0 {
        return Ok(NelderMeadResult {
            x: x0.to_vec(),
            value: f0,
            iterations: 0,
            converged: false,
        });
    }

    let mut simplex: Vec<(Vec<f64>, f64)> = vec![(x0.to_vec(), f0)];
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += cfg.initial_step;
        let v = eval(&mut f, &x)?;
        simplex.push((x, v));
    }

    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let diameter = simplex[1..]
            .iter()
            .flat_map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if diameter < cfg.tol {
            converged = true;
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for (c, v) in centroid.iter_mut().zip(x) {
                *c += v / n as f64;
            }
        }
        let (worst, f_worst) = simplex[n].clone();
        let f_best = simplex[0].1;
        let f_second = simplex[n - 1].1;

        let xr = along(&centroid, &worst, -cfg.reflection);
        let fr = eval(&mut f, &xr)?;
        if fr < f_best {
            let xe = along(&centroid, &worst, -cfg.reflection * cfg.expansion);
            let fe = eval(&mut f, &xe)?;
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < f_second {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < f_worst {
            let xc = along(&centroid, &xr, cfg.contraction);
            let fc = eval(&mut f, &xc)?;
            (xc, fc)
        } else {
            let xc = along(&centroid, &worst, cfg.contraction);
            let fc = eval(&mut f, &xc)?;
            (xc, fc)
        };
        if fc < fr.min(f_worst) {
            simplex[n] = (xc, fc);
            continue;
        }
        let best = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            let x = along(&best, &vertex.0, cfg.shrink);
            let v = eval(&mut f, &x)?;
            *vertex = (x, v);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, value) = simplex.swap_remove(0);
    Ok(NelderMeadResult {
        x,
        value,
        iterations,
        converged,
    })
}
