//! Eigenvalues and steady-state response of a coupled chain in the rotating
//! frame. Detunings are measured from the probed resonator's eigenfrequency.

use num_complex::Complex;
use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::linalg::{jacobi_eigen, solve_complex};
use crate::rwa::CouplingMatrix;
use crate::scalar::Real;

/// Ascending eigenvalues of `H`, rad/s. Response peaks sit at half these.
pub fn eigenvalues<T: Real>(h: &CouplingMatrix<T>) -> Result<Vec<T>> {
    Ok(jacobi_eigen(h.matrix())?.values)
}

/// Linewidths used by the response solver.
#[derive(Debug, Clone, PartialEq)]
pub enum Damping<T> {
    Uniform(T),
    PerSite(Vec<T>),
}

impl<T: Real> Damping<T> {
    fn at(&self, k: usize) -> T {
        match self {
            Damping::Uniform(g) => *g,
            Damping::PerSite(v) => v[k],
        }
    }
}

/// Driven response sampled over a detuning grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseCurve<T> {
    /// rad/s, strictly increasing.
    pub detunings: Vec<T>,
    pub magnitudes: Vec<T>,
    pub complex_values: Vec<Complex<T>>,
}

/// Uniform grid from `start` to `stop` inclusive with `count >= 2` points.
pub fn detuning_grid<T: Real>(start: T, stop: T, count: usize) -> Result<Vec<T>> {
    if count < 2 || !(stop > start) {
        return Err(invalid(
            "detuning grid needs stop > start and at least 2 points",
        ));
    }
    let step = (stop - start) / T::from_usize_lossy(count - 1);
    Ok((0..count)
        .map(|k| start + step * T::from_usize_lossy(k))
        .collect())
}

/// Solves `(delta I - H/2 - i Gamma/2) X = e_drive` at every detuning and
/// returns `X_probe`. `drive` and `probe` are 1-based chain positions.
pub fn frequency_response<T: Real>(
    h: &CouplingMatrix<T>,
    damping: &Damping<T>,
    drive: usize,
    probe: usize,
    detunings: &[T],
) -> Result<ResponseCurve<T>> {
    let n = h.dim();
    for (name, site) in [("drive", drive), ("probe", probe)] {
        if site == 0 || site > n {
            return Err(invalid(format!(
                "{name} site {site} outside chain of length {n}"
            )));
        }
    }
    match damping {
        Damping::Uniform(g) if !(*g >= T::zero()) => {
            return Err(invalid("damping rate must be non-negative"))
        }
        Damping::PerSite(v) if v.len() != n || v.iter().any(|g| !(*g >= T::zero())) => {
            return Err(invalid(
                "per-site damping must list one non-negative rate per site",
            ))
        }
        _ => {}
    }
    if detunings.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("detuning grid must be strictly increasing"));
    }

    let half = T::lit(0.5);
    let solve_at = |delta: T| -> Result<Complex<T>> {
        let mut a = vec![Complex::new(T::zero(), T::zero()); n * n];
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] = Complex::new(-h.matrix().get(i, j) * half, T::zero());
            }
            a[i * n + i] += Complex::new(delta, -damping.at(i) * half);
        }
        let mut b = vec![Complex::new(T::zero(), T::zero()); n];
        b[drive - 1] = Complex::new(T::one(), T::zero());
        Ok(solve_complex(n, a, b)?[probe - 1])
    };

    let complex_values = detunings
        .par_iter()
        .map(|&d| solve_at(d))
        .collect::<Result<Vec<_>>>()?;
    Ok(ResponseCurve {
        detunings: detunings.to_vec(),
        magnitudes: complex_values.iter().map(|z| z.norm()).collect(),
        complex_values,
    })
}

/// Local maxima of the magnitude, refined by a parabola through each
/// maximum and its two neighbours.
pub fn peak_positions<T: Real>(curve: &ResponseCurve<T>) -> Vec<T> {
    let x = &curve.detunings;
    let y = &curve.magnitudes;
    let mut peaks = Vec::new();
    for i in 1..y.len().saturating_sub(1) {
        if !(y[i] > y[i - 1] && y[i] >= y[i + 1]) {
            continue;
        }
        let (x0, x1, x2) = (x[i - 1], x[i], x[i + 1]);
        let (y0, y1, y2) = (y[i - 1], y[i], y[i + 1]);
        let denom = (x0 - x1) * (x0 - x2) * (x1 - x2);
        let a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denom;
        let b = (x2 * x2 * (y0 - y1) + x1 * x1 * (y2 - y0) + x0 * x0 * (y1 - y2)) / denom;
        let vertex = if a < T::zero() {
            (-b / (T::lit(2.0) * a)).max(x0).min(x2)
        } else {
            x1
        };
        peaks.push(vertex);
    }
    peaks
}
