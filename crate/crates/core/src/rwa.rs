//! Slow-envelope dynamics under the rotating-wave approximation.
//!
//! The complex amplitudes obey `2 i dX/dt = H X` with `H` the real symmetric
//! coupling matrix of the chain. `H` is constant within a schedule segment,
//! so the evolution is applied exactly through its eigendecomposition:
//! `X(t) = U exp(-i L t / 2) U^T X(0)`.

use std::collections::BTreeMap;

use num_complex::Complex;
use num_traits::Zero;

use crate::error::{invalid, Error, Result};
use crate::linalg::{jacobi_eigen, SymEigen, SymMatrix};
use crate::model::{ensure_valid, EnvelopeState, Network, Schedule};
use crate::scalar::{wrap_phase, Real};

/// Phase is reported only where `|X_site| > PHASE_FLOOR * ||X(0)||`.
pub const PHASE_FLOOR: f64 = 1e-6;

/// Real symmetric, zero-diagonal coupling matrix over a logical chain.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrix<T> {
    matrix: SymMatrix<T>,
    /// Physical resonator index of each logical position.
    sites: Vec<usize>,
}

impl<T: Real> CouplingMatrix<T> {
    /// Wraps a matrix, checking symmetry and a zero diagonal. `sites` maps
    /// logical positions to resonator indices; pass `1..=n` when there is no
    /// physical network behind it.
    pub fn new(matrix: SymMatrix<T>, sites: Vec<usize>) -> Result<Self> {
        if sites.len() != matrix.dim() {
            return Err(invalid("site map length differs from matrix dimension"));
        }
        if !matrix.is_symmetric() {
            return Err(invalid("coupling matrix must be symmetric"));
        }
        if (0..matrix.dim()).any(|i| matrix.get(i, i) != T::zero()) {
            return Err(invalid("coupling matrix must have a zero diagonal"));
        }
        Ok(Self { matrix, sites })
    }

    /// Tridiagonal chain matrix with the given edge strengths.
    pub fn chain(edges: &[T]) -> Self {
        let n = edges.len() + 1;
        let mut m = SymMatrix::zeros(n);
        for (k, &c) in edges.iter().enumerate() {
            m.set_sym(k, k + 1, c);
        }
        Self {
            matrix: m,
            sites: (1..=n).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn matrix(&self) -> &SymMatrix<T> {
        &self.matrix
    }

    pub fn sites(&self) -> &[usize] {
        &self.sites
    }

    /// 1-based logical position of resonator `index`.
    pub fn position_of(&self, index: usize) -> Option<usize> {
        self.sites.iter().position(|&s| s == index).map(|p| p + 1)
    }
}

/// Builds `H` from a network, ordering sites by `chain_order` when present
/// and otherwise by walking the path graph from its lower-indexed end.
pub fn build_coupling_matrix<T: Real>(network: &Network<T>) -> Result<CouplingMatrix<T>> {
    ensure_valid(network)?;
    let order = match &network.chain_order {
        Some(chain) => chain.clone(),
        None => path_order(network)?,
    };
    let pos: BTreeMap<usize, usize> = order.iter().enumerate().map(|(k, &s)| (s, k)).collect();
    let mut m = SymMatrix::zeros(order.len());
    for c in &network.couplings {
        match (pos.get(&c.a), pos.get(&c.b)) {
            (Some(&i), Some(&j)) => m.set_sym(i, j, c.strength),
            _ => {
                return Err(Error::UnsupportedTopology(format!(
                    "coupling ({},{}) leaves the chain",
                    c.a, c.b
                )))
            }
        }
    }
    CouplingMatrix::new(m, order)
}

fn path_order<T: Real>(network: &Network<T>) -> Result<Vec<usize>> {
    let n = network.resonators.len();
    if n == 0 {
        return Err(Error::UnsupportedTopology(
            "network has no resonators".into(),
        ));
    }
    if n == 1 {
        return Ok(vec![network.resonators[0].index]);
    }
    let mut adj: BTreeMap<usize, Vec<usize>> = network
        .resonators
        .iter()
        .map(|r| (r.index, Vec::new()))
        .collect();
    for c in &network.couplings {
        adj.get_mut(&c.a).expect("validated").push(c.b);
        adj.get_mut(&c.b).expect("validated").push(c.a);
    }
    let not_path = || {
        Error::UnsupportedTopology("coupling graph is not a simple path; supply chain_order".into())
    };
    if network.couplings.len() != n - 1 || adj.values().any(|v| v.len() > 2) {
        return Err(not_path());
    }
    let start = *adj
        .iter()
        .find(|(_, v)| v.len() == 1)
        .ok_or_else(not_path)?
        .0;
    let mut order = vec![start];
    let mut prev = None;
    let mut cur = start;
    while let Some(&next) = adj[&cur].iter().find(|&&x| Some(x) != prev) {
        prev = Some(cur);
        cur = next;
        order.push(cur);
        if order.len() > n {
            return Err(not_path());
        }
    }
    if order.len() != n {
        return Err(not_path());
    }
    Ok(order)
}

/// Cached spectral decomposition of `H` for repeated evolution.
#[derive(Debug, Clone)]
pub struct Propagator<T> {
    eig: SymEigen<T>,
}

impl<T: Real> Propagator<T> {
    pub fn new(h: &CouplingMatrix<T>) -> Result<Self> {
        Ok(Self {
            eig: jacobi_eigen(h.matrix())?,
        })
    }

    pub fn dim(&self) -> usize {
        self.eig.dim()
    }

    /// Ascending eigenvalues of `H` (not `H / 2`).
    pub fn eigenvalues(&self) -> &[T] {
        &self.eig.values
    }

    /// Applies `exp(-i H t / 2)`; negative `t` runs backwards.
    pub fn apply(&self, x: &[Complex<T>], t: T) -> Vec<Complex<T>> {
        let n = self.dim();
        let half = T::lit(0.5);
        let modal: Vec<Complex<T>> = (0..n)
            .map(|k| {
                let proj: Complex<T> = (0..n)
                    .map(|i| x[i] * self.eig.vector(i, k))
                    .fold(Complex::zero(), |a, b| a + b);
                let angle = -self.eig.values[k] * t * half;
                proj * Complex::new(angle.cos(), angle.sin())
            })
            .collect();
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|k| modal[k] * self.eig.vector(i, k))
                    .fold(Complex::zero(), |a, b| a + b)
            })
            .collect()
    }
}

/// Evolves `x0` by `t >= 0` seconds under `H`.
pub fn evolve_envelope<T: Real>(
    h: &CouplingMatrix<T>,
    x0: &EnvelopeState<T>,
    t: T,
) -> Result<EnvelopeState<T>> {
    if x0.len() != h.dim() {
        return Err(invalid(format!(
            "state has {} sites, matrix has {}",
            x0.len(),
            h.dim()
        )));
    }
    if !(t >= T::zero()) {
        return Err(invalid("evolution time must be non-negative"));
    }
    let p = Propagator::new(h)?;
    Ok(EnvelopeState::new(x0.time + t, p.apply(&x0.amplitudes, t)))
}

#[derive(Debug, Clone)]
struct Piece<T> {
    start: T,
    end: T,
    x_start: Vec<Complex<T>>,
    propagator: Propagator<T>,
}

/// Sampled envelope evolution. Besides the samples it keeps the exact
/// piecewise propagators, so [`EnvelopeTrajectory::state_at`] is exact at
/// any time in the span, including off-grid segment boundaries.
#[derive(Debug, Clone)]
pub struct EnvelopeTrajectory<T> {
    pub times: Vec<T>,
    pub states: Vec<EnvelopeState<T>>,
    /// Uniform damping rate folded into the states, rad/s (0 if lossless).
    pub gamma_applied: T,
    pieces: Vec<Piece<T>>,
}

impl<T: Real> EnvelopeTrajectory<T> {
    pub fn dim(&self) -> usize {
        self.pieces[0].x_start.len()
    }

    pub fn start(&self) -> T {
        self.pieces[0].start
    }

    pub fn end(&self) -> T {
        self.pieces[self.pieces.len() - 1].end
    }

    /// Segment end times.
    pub fn boundaries(&self) -> Vec<T> {
        self.pieces.iter().map(|p| p.end).collect()
    }

    /// Exact state at time `t`.
    pub fn state_at(&self, t: T) -> Result<EnvelopeState<T>> {
        let (start, end) = (self.start(), self.end());
        let slack = T::lit(1e-12) * (end - start).abs().max(T::one());
        if !(t >= start - slack && t <= end + slack) {
            return Err(Error::OutOfRange {
                time: t.to_f64().unwrap_or(f64::NAN),
                start: start.to_f64().unwrap_or(f64::NAN),
                end: end.to_f64().unwrap_or(f64::NAN),
            });
        }
        let piece = self
            .pieces
            .iter()
            .rev()
            .find(|p| t >= p.start)
            .unwrap_or(&self.pieces[0]);
        let mut x = piece.propagator.apply(&piece.x_start, t - piece.start);
        if self.gamma_applied > T::zero() {
            let s = (-self.gamma_applied * (t - start) / T::lit(2.0)).exp();
            for z in &mut x {
                *z *= s;
            }
        }
        Ok(EnvelopeState::new(t, x))
    }
}

/// Evolves `x0` through every segment of `schedule`, the couplings of each
/// segment replacing those of `network` (resonators and chain are shared).
/// Samples are taken every `sample_dt` from `x0.time`.
pub fn evolve_schedule<T: Real>(
    network: &Network<T>,
    schedule: &Schedule<T>,
    x0: &EnvelopeState<T>,
    sample_dt: T,
) -> Result<EnvelopeTrajectory<T>> {
    if !(sample_dt > T::zero()) || !sample_dt.is_finite() {
        return Err(invalid("sample_dt must be positive"));
    }
    let mut pieces = Vec::with_capacity(schedule.segments().len());
    let mut sites: Option<Vec<usize>> = None;
    let mut t = x0.time;
    let mut x = x0.amplitudes.clone();
    for (k, seg) in schedule.segments().iter().enumerate() {
        let h = build_coupling_matrix(&network.reconfigured(seg.couplings.clone()))
            .map_err(|e| Error::InvalidSchedule(format!("segment {}: {e}", k + 1)))?;
        match &sites {
            None => {
                if h.dim() != x.len() {
                    return Err(Error::InvalidSchedule(format!(
                        "initial state has {} sites, segment 1 has {}",
                        x.len(),
                        h.dim()
                    )));
                }
                sites = Some(h.sites().to_vec());
            }
            Some(s) if s.as_slice() != h.sites() => {
                return Err(Error::InvalidSchedule(format!(
                    "segment {} changes the chain ({:?} vs {:?})",
                    k + 1,
                    h.sites(),
                    s
                )));
            }
            Some(_) => {}
        }
        let propagator = Propagator::new(&h)?;
        let end = t + seg.duration;
        let next = propagator.apply(&x, seg.duration);
        pieces.push(Piece {
            start: t,
            end,
            x_start: x,
            propagator,
        });
        x = next;
        t = end;
    }

    let mut traj = EnvelopeTrajectory {
        times: Vec::new(),
        states: Vec::new(),
        gamma_applied: T::zero(),
        pieces,
    };
    let total = schedule.total_duration();
    let count = (total / sample_dt + T::lit(1e-9))
        .floor()
        .to_usize()
        .ok_or_else(|| invalid("too many samples"))?
        + 1;
    traj.times.reserve(count);
    traj.states.reserve(count);
    for k in 0..count {
        let tk = x0.time + T::from_usize_lossy(k) * sample_dt;
        let s = traj.state_at(tk)?;
        traj.times.push(tk);
        traj.states.push(s);
    }
    Ok(traj)
}

/// Scales every state by `exp(-gamma t / 2)`, `t` measured from the start.
pub fn apply_damping_envelope<T: Real>(
    traj: &EnvelopeTrajectory<T>,
    gamma: T,
) -> Result<EnvelopeTrajectory<T>> {
    if !(gamma >= T::zero()) {
        return Err(invalid("damping rate must be non-negative"));
    }
    if traj.gamma_applied != T::zero() {
        return Err(Error::InvalidState(
            "damping envelope already applied to this trajectory".into(),
        ));
    }
    let start = traj.start();
    let mut out = traj.clone();
    out.gamma_applied = gamma;
    for s in &mut out.states {
        let scale = (-gamma * (s.time - start) / T::lit(2.0)).exp();
        for z in &mut s.amplitudes {
            *z *= scale;
        }
    }
    Ok(out)
}

/// `X / ||X||`.
pub fn normalize_snapshot<T: Real>(state: &EnvelopeState<T>) -> Result<EnvelopeState<T>> {
    let norm = state.norm();
    if !(norm > T::zero()) {
        return Err(Error::DivisionByZero);
    }
    Ok(EnvelopeState::new(
        state.time,
        state.amplitudes.iter().map(|z| *z / norm).collect(),
    ))
}

fn check_site(site: usize, n: usize) -> Result<()> {
    if site == 0 || site > n {
        Err(invalid(format!("site {site} outside chain of length {n}")))
    } else {
        Ok(())
    }
}

/// Fraction of the total population sitting at `target` at time `t`.
pub fn transfer_fidelity<T: Real>(
    traj: &EnvelopeTrajectory<T>,
    source: usize,
    target: usize,
    t: T,
) -> Result<T> {
    check_site(source, traj.dim())?;
    check_site(target, traj.dim())?;
    let s = traj.state_at(t)?;
    let total: T = s.amplitudes.iter().map(|z| z.norm_sqr()).sum();
    if !(total > T::zero()) {
        return Err(Error::DivisionByZero);
    }
    Ok(s.population(target) / total)
}

/// Phase of `X_site(t)` relative to `X_site(start)`, wrapped to `(-pi, pi]`.
pub fn phase_at<T: Real>(traj: &EnvelopeTrajectory<T>, site: usize, t: T) -> Result<T> {
    check_site(site, traj.dim())?;
    let s0 = traj.state_at(traj.start())?;
    let st = traj.state_at(t)?;
    let floor = T::lit(PHASE_FLOOR) * s0.norm();
    let z0 = s0.amplitudes[site - 1];
    let zt = st.amplitudes[site - 1];
    for z in [z0, zt] {
        if !(z.norm() > floor) {
            return Err(Error::PhaseUndefined {
                site,
                amplitude: z.norm().to_f64().unwrap_or(f64::NAN),
                floor: floor.to_f64().unwrap_or(f64::NAN),
            });
        }
    }
    Ok(wrap_phase((zt * z0.conj()).arg()))
}
