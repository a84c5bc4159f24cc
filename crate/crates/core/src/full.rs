//! Direct integration of the driven mechanical equations of motion
//!
//! `x_j'' + gamma_j x_j' + omega_j^2 x_j = sum_p P_p(t) (x_other - x_j) + pulse`
//!
//! with parametric pumps `P(t) = c_mech cos(omega_p t + phi) / m`.

use std::collections::HashMap;

use num_complex::Complex;

use crate::error::{invalid, Error, Result};
use crate::lockin::{self, demodulate, DemodChannel, LockInConfig, SampledSignal};
use crate::model::{ensure_valid, ExcitationPulse, MechanicalState, Network, ResonatorSpec};
use crate::rwa::{build_coupling_matrix, CouplingMatrix, Propagator};
use crate::scalar::Real;

/// Stiffness-modulation amplitude `2 m sqrt(omega_a omega_b) c_rwa` that
/// yields envelope coupling `c_rwa` between two resonators.
pub fn lambda_from_rwa<T: Real>(c_rwa: T, mass: T, omega_a: T, omega_b: T) -> Result<T> {
    if !(c_rwa >= T::zero())
        || !(mass > T::zero())
        || !(omega_a > T::zero())
        || !(omega_b > T::zero())
    {
        return Err(invalid(
            "lambda_from_rwa needs c_rwa >= 0 and positive mass and frequencies",
        ));
    }
    Ok(T::lit(2.0) * mass * (omega_a * omega_b).sqrt() * c_rwa)
}

/// One parametric pump between resonators `a` and `b` (physical indices).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PumpTerm<T> {
    pub a: usize,
    pub b: usize,
    /// N/m.
    pub c_mech: T,
    /// rad/s, equal to `|omega_a - omega_b|`.
    pub pump_freq: T,
    pub phase: T,
    /// Active for `start <= t < end`.
    pub start: T,
    pub end: T,
}

impl<T: Real> PumpTerm<T> {
    pub fn new(a: usize, b: usize, c_mech: T, pump_freq: T) -> Self {
        Self {
            a,
            b,
            c_mech,
            pump_freq,
            phase: T::zero(),
            start: T::zero(),
            end: T::infinity(),
        }
    }

    pub fn with_window(mut self, start: T, end: T) -> Self {
        self.start = start;
        self.end = end;
        self
    }

    pub fn active(&self, t: T) -> bool {
        t >= self.start && t < self.end
    }
}

/// Pumps realizing every coupling of `network`, switched on at `start`.
/// The mass in `P(t)` is the mean of the two endpoint masses.
pub fn pumps_for_network<T: Real>(network: &Network<T>, start: T) -> Result<Vec<PumpTerm<T>>> {
    network
        .couplings
        .iter()
        .map(|c| {
            let ra = network.require(c.a)?;
            let rb = network.require(c.b)?;
            let m = (ra.mass + rb.mass) * T::lit(0.5);
            let c_mech = lambda_from_rwa(c.strength, m, ra.omega, rb.omega)?;
            Ok(PumpTerm::new(c.a, c.b, c_mech, (ra.omega - rb.omega).abs())
                .with_window(start, T::infinity()))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Integrator {
    /// RK4 on the forcing only; the free damped oscillators are propagated
    /// exactly. Energy-conserving to round-off when nothing is driven.
    #[default]
    IntegratingFactorRk4,
    /// Plain RK4 on the full first-order system.
    ClassicRk4,
}

/// Everything `evolve_full` needs.
#[derive(Debug, Clone, PartialEq)]
pub struct FullProblem<T> {
    pub resonators: Vec<ResonatorSpec<T>>,
    pub pumps: Vec<PumpTerm<T>>,
    /// Active on `[0, duration)`.
    pub pulse: Option<ExcitationPulse<T>>,
    /// Positions and velocities at `t = 0`, in `resonators` order.
    pub initial: MechanicalState<T>,
    pub t_span: T,
    pub dt: T,
    pub output_decimation: usize,
    pub integrator: Integrator,
    /// Keep the `-P(t) x_j` terms on the diagonal.
    pub reaction_terms: bool,
}

impl<T: Real> FullProblem<T> {
    /// At rest, no pumps, default step `2 pi / (50 omega_max)`, no decimation.
    pub fn new(resonators: Vec<ResonatorSpec<T>>, t_span: T) -> Self {
        let n = resonators.len();
        let dt = default_dt(&resonators);
        Self {
            resonators,
            pumps: Vec::new(),
            pulse: None,
            initial: MechanicalState::at_rest(n),
            t_span,
            dt,
            output_decimation: 1,
            integrator: Integrator::default(),
            reaction_terms: true,
        }
    }
}

fn max_omega<T: Real>(resonators: &[ResonatorSpec<T>]) -> T {
    resonators.iter().map(|r| r.omega).fold(T::zero(), T::max)
}

/// `2 pi / (50 omega_max)`.
pub fn default_dt<T: Real>(resonators: &[ResonatorSpec<T>]) -> T {
    T::TAU() / (T::lit(50.0) * max_omega(resonators))
}

/// Decimated record of an integration.
#[derive(Debug, Clone, PartialEq)]
pub struct MechanicalTrajectory<T> {
    pub times: Vec<T>,
    pub states: Vec<MechanicalState<T>>,
    /// Physical index of each entry of the state vectors.
    pub indices: Vec<usize>,
    /// Spacing of `times`.
    pub output_dt: T,
}

impl<T: Real> MechanicalTrajectory<T> {
    pub fn position_of(&self, index: usize) -> Result<usize> {
        self.indices
            .iter()
            .position(|&i| i == index)
            .ok_or_else(|| invalid(format!("resonator R{index} not in trajectory")))
    }

    /// Displacement record of resonator `index`.
    pub fn signal(&self, index: usize) -> Result<SampledSignal<T>> {
        let k = self.position_of(index)?;
        Ok(SampledSignal {
            start: self.times.first().copied().unwrap_or_else(T::zero),
            dt: self.output_dt,
            values: self.states.iter().map(|s| s.positions[k]).collect(),
        })
    }
}

/// Total mechanical energy `sum 1/2 m (v^2 + omega^2 x^2)`.
pub fn total_energy<T: Real>(resonators: &[ResonatorSpec<T>], state: &MechanicalState<T>) -> T {
    resonators
        .iter()
        .zip(state.positions.iter().zip(&state.velocities))
        .map(|(r, (&x, &v))| T::lit(0.5) * r.mass * (v * v + r.omega * r.omega * x * x))
        .sum()
}

struct Pump<T> {
    a: usize,
    b: usize,
    /// `c_mech / m`.
    strength: T,
    freq: T,
    phase: T,
    start: T,
    end: T,
}

struct Forcing<T> {
    pumps: Vec<Pump<T>>,
    pulse: Option<(usize, T, T, T)>,
    reaction: bool,
}

impl<T: Real> Forcing<T> {
    /// Accelerations at time `t` for positions `x`, written into `out`.
    fn eval(&self, t: T, x: &[T], out: &mut [T]) {
        out.iter_mut().for_each(|f| *f = T::zero());
        for p in &self.pumps {
            if !(t >= p.start && t < p.end) {
                continue;
            }
            let g = p.strength * (p.freq * t + p.phase).cos();
            if self.reaction {
                let d = x[p.b] - x[p.a];
                out[p.a] += g * d;
                out[p.b] -= g * d;
            } else {
                out[p.a] += g * x[p.b];
                out[p.b] += g * x[p.a];
            }
        }
        if let Some((k, force_per_mass, w, until)) = self.pulse {
            if t < until {
                out[k] += force_per_mass * (w * t).cos();
            }
        }
    }
}

/// Exact propagator of `x'' + gamma x' + omega^2 x = 0` over `h`.
#[derive(Clone, Copy)]
struct Free<T> {
    m: [[T; 2]; 2],
}

impl<T: Real> Free<T> {
    fn new(omega: T, gamma: T, h: T) -> Self {
        let half = gamma * T::lit(0.5);
        let wd = (omega * omega - half * half).sqrt();
        let e = (-half * h).exp();
        let (s, c) = (wd * h).sin_cos();
        Self {
            m: [
                [e * (c + half / wd * s), e * s / wd],
                [-e * omega * omega / wd * s, e * (c - half / wd * s)],
            ],
        }
    }

    fn apply(&self, x: T, v: T) -> (T, T) {
        (
            self.m[0][0] * x + self.m[0][1] * v,
            self.m[1][0] * x + self.m[1][1] * v,
        )
    }
}

fn prepare<T: Real>(p: &FullProblem<T>) -> Result<(Forcing<T>, usize, T)> {
    let n = p.resonators.len();
    if n == 0 {
        return Err(invalid("no resonators"));
    }
    let mut pos = HashMap::new();
    for (k, r) in p.resonators.iter().enumerate() {
        if !(r.omega > T::zero()) || !(r.mass > T::zero()) || !(r.gamma >= T::zero()) {
            return Err(invalid(format!(
                "resonator R{} has invalid parameters",
                r.index
            )));
        }
        if !(r.gamma < T::lit(2.0) * r.omega) {
            return Err(invalid(format!(
                "resonator R{} is not underdamped",
                r.index
            )));
        }
        if pos.insert(r.index, k).is_some() {
            return Err(invalid(format!("duplicate resonator R{}", r.index)));
        }
    }
    if p.initial.positions.len() != n || p.initial.velocities.len() != n {
        return Err(invalid("initial state length differs from resonator count"));
    }
    if !(p.t_span >= T::zero()) {
        return Err(invalid("t_span must be non-negative"));
    }
    if p.output_decimation == 0 {
        return Err(invalid("output_decimation must be >= 1"));
    }
    let w_max = max_omega(&p.resonators);
    if !(p.dt > T::zero()) || p.dt > T::TAU() / (T::lit(20.0) * w_max) {
        return Err(invalid(
            "dt must be positive and at most 2 pi / (20 omega_max)",
        ));
    }

    let mut pumps = Vec::with_capacity(p.pumps.len());
    for pt in &p.pumps {
        let (&a, &b) = match (pos.get(&pt.a), pos.get(&pt.b)) {
            (Some(a), Some(b)) if a != b => (a, b),
            _ => {
                return Err(invalid(format!(
                    "pump ({},{}) references invalid resonators",
                    pt.a, pt.b
                )))
            }
        };
        let (ra, rb) = (&p.resonators[a], &p.resonators[b]);
        if !(pt.c_mech >= T::zero()) {
            return Err(invalid("pump c_mech must be non-negative"));
        }
        let expected = (ra.omega - rb.omega).abs();
        if !((pt.pump_freq - expected).abs() <= T::lit(1e-9) * w_max) {
            return Err(invalid(format!(
                "pump ({},{}) frequency is not |omega_a - omega_b|",
                pt.a, pt.b
            )));
        }
        let m = (ra.mass + rb.mass) * T::lit(0.5);
        pumps.push(Pump {
            a,
            b,
            strength: pt.c_mech / m,
            freq: pt.pump_freq,
            phase: pt.phase,
            start: pt.start,
            end: pt.end,
        });
    }
    let pulse = match &p.pulse {
        None => None,
        Some(pl) => {
            let &k = pos.get(&pl.target).ok_or_else(|| {
                invalid(format!("pulse targets unknown resonator R{}", pl.target))
            })?;
            Some((
                k,
                pl.amplitude / p.resonators[k].mass,
                pl.frequency,
                pl.duration,
            ))
        }
    };

    let steps = (p.t_span / p.dt - T::lit(1e-9)).ceil().max(T::zero());
    let steps = steps
        .to_usize()
        .ok_or_else(|| invalid("step count does not fit in usize"))?;
    let h = if steps == 0 {
        p.dt
    } else {
        p.t_span / T::from_usize_lossy(steps)
    };
    let forcing = Forcing {
        pumps,
        pulse,
        reaction: p.reaction_terms,
    };
    Ok((forcing, steps, h))
}

/// Integrates `problem` with a fixed step no larger than `problem.dt`,
/// chosen so the last step lands on `t_span`.
pub fn evolve_full<T: Real>(problem: &FullProblem<T>) -> Result<MechanicalTrajectory<T>> {
    let (forcing, steps, h) = prepare(problem)?;
    let n = problem.resonators.len();
    let dec = problem.output_decimation;
    let mut x = problem.initial.positions.clone();
    let mut v = problem.initial.velocities.clone();

    let cap = steps / dec + 1;
    let mut times = Vec::with_capacity(cap);
    let mut states = Vec::with_capacity(cap);
    let record =
        |k: usize, x: &[T], v: &[T], times: &mut Vec<T>, states: &mut Vec<MechanicalState<T>>| {
            let t = T::from_usize_lossy(k) * h;
            times.push(t);
            states.push(MechanicalState {
                time: t,
                positions: x.to_vec(),
                velocities: v.to_vec(),
            });
        };
    record(0, &x, &v, &mut times, &mut states);

    let mut stepper = Stepper::new(problem, h, n);
    for k in 0..steps {
        let t = T::from_usize_lossy(k) * h;
        stepper.step(&forcing, t, &mut x, &mut v);
        if x.iter().chain(&v).any(|q| !q.is_finite()) {
            return Err(Error::NumericalOverflow {
                time: (t + h).to_f64().unwrap_or(f64::NAN),
            });
        }
        if (k + 1) % dec == 0 {
            record(k + 1, &x, &v, &mut times, &mut states);
        }
    }
    Ok(MechanicalTrajectory {
        times,
        states,
        indices: problem.resonators.iter().map(|r| r.index).collect(),
        output_dt: h * T::from_usize_lossy(dec),
    })
}

struct Stepper<T> {
    kind: Integrator,
    h: T,
    half: Vec<Free<T>>,
    full: Vec<Free<T>>,
    omega2: Vec<T>,
    gamma: Vec<T>,
    k: [Vec<T>; 4],
    kv: [Vec<T>; 4],
    xs: Vec<T>,
    vs: Vec<T>,
    acc: Vec<T>,
}

impl<T: Real> Stepper<T> {
    fn new(p: &FullProblem<T>, h: T, n: usize) -> Self {
        let half_h = h * T::lit(0.5);
        let z = || vec![T::zero(); n];
        Self {
            kind: p.integrator,
            h,
            half: p
                .resonators
                .iter()
                .map(|r| Free::new(r.omega, r.gamma, half_h))
                .collect(),
            full: p
                .resonators
                .iter()
                .map(|r| Free::new(r.omega, r.gamma, h))
                .collect(),
            omega2: p.resonators.iter().map(|r| r.omega * r.omega).collect(),
            gamma: p.resonators.iter().map(|r| r.gamma).collect(),
            k: [z(), z(), z(), z()],
            kv: [z(), z(), z(), z()],
            xs: z(),
            vs: z(),
            acc: z(),
        }
    }

    fn step(&mut self, f: &Forcing<T>, t: T, x: &mut [T], v: &mut [T]) {
        match self.kind {
            Integrator::IntegratingFactorRk4 => self.lawson(f, t, x, v),
            Integrator::ClassicRk4 => self.classic(f, t, x, v),
        }
    }

    fn lawson(&mut self, f: &Forcing<T>, t: T, x: &mut [T], v: &mut [T]) {
        let h = self.h;
        let hh = h * T::lit(0.5);
        let n = x.len();
        let [k1, k2, k3, k4] = &mut self.k;

        f.eval(t, x, k1);
        for j in 0..n {
            let (a, _) = self.half[j].apply(x[j], v[j]);
            let (b, _) = self.half[j].apply(T::zero(), hh * k1[j]);
            self.xs[j] = a + b;
        }
        f.eval(t + hh, &self.xs, k2);
        for j in 0..n {
            let (a, _) = self.half[j].apply(x[j], v[j]);
            self.xs[j] = a;
        }
        f.eval(t + hh, &self.xs, k3);
        for j in 0..n {
            let (a, _) = self.full[j].apply(x[j], v[j]);
            let (b, _) = self.half[j].apply(T::zero(), h * k3[j]);
            self.xs[j] = a + b;
        }
        f.eval(t + h, &self.xs, k4);

        let sixth = h / T::lit(6.0);
        for j in 0..n {
            let (bx, bv) = self.full[j].apply(x[j], v[j]);
            let (ax, av) = self.full[j].apply(T::zero(), k1[j]);
            let (cx, cv) = self.half[j].apply(T::zero(), T::lit(2.0) * (k2[j] + k3[j]));
            x[j] = bx + sixth * (ax + cx);
            v[j] = bv + sixth * (av + cv + k4[j]);
        }
    }

    fn classic(&mut self, f: &Forcing<T>, t: T, x: &mut [T], v: &mut [T]) {
        let h = self.h;
        let hh = h * T::lit(0.5);
        let n = x.len();
        // k[s] holds dx/dt, kv[s] holds dv/dt of stage s
        let offsets = [T::zero(), hh, hh, h];
        for s in 0..4 {
            if s == 0 {
                self.xs.copy_from_slice(x);
                self.vs.copy_from_slice(v);
            } else {
                let c = offsets[s];
                for j in 0..n {
                    self.xs[j] = x[j] + c * self.k[s - 1][j];
                    self.vs[j] = v[j] + c * self.kv[s - 1][j];
                }
            }
            f.eval(t + offsets[s], &self.xs, &mut self.acc);
            for j in 0..n {
                self.kv[s][j] =
                    self.acc[j] - self.omega2[j] * self.xs[j] - self.gamma[j] * self.vs[j];
                self.k[s][j] = self.vs[j];
            }
        }
        let sixth = h / T::lit(6.0);
        for j in 0..n {
            x[j] +=
                sixth * (self.k[0][j] + T::lit(2.0) * (self.k[1][j] + self.k[2][j]) + self.k[3][j]);
            v[j] += sixth
                * (self.kv[0][j] + T::lit(2.0) * (self.kv[1][j] + self.kv[2][j]) + self.kv[3][j]);
        }
    }
}

/// Largest change of the final state when the step is halved, relative to
/// the largest coordinate of the reference run.
pub fn step_halving_error<T: Real>(problem: &FullProblem<T>) -> Result<T> {
    let mut coarse = problem.clone();
    coarse.output_decimation = 1;
    let mut fine = coarse.clone();
    fine.dt = coarse.dt * T::lit(0.5);
    let a = evolve_full(&coarse)?;
    let b = evolve_full(&fine)?;
    let (sa, sb) = (a.states.last().unwrap(), b.states.last().unwrap());
    let scale = sa
        .positions
        .iter()
        .zip(&problem.resonators)
        .map(|(x, r)| (*x * r.omega).abs())
        .chain(sa.velocities.iter().map(|v| v.abs()))
        .fold(T::zero(), T::max);
    if !(scale > T::zero()) {
        return Ok(T::zero());
    }
    let diff = sa
        .positions
        .iter()
        .zip(&sb.positions)
        .zip(&problem.resonators)
        .map(|((x, y), r)| ((*x - *y) * r.omega).abs())
        .chain(
            sa.velocities
                .iter()
                .zip(&sb.velocities)
                .map(|(x, y)| (*x - *y).abs()),
        )
        .fold(T::zero(), T::max);
    Ok(diff / scale)
}

/// Options for [`run_full_pst`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PstRunConfig<T> {
    /// 1-based position along the chain.
    pub launch: usize,
    /// Divides every eigenfrequency; couplings stay as given.
    pub scale: T,
    /// Transfer periods to integrate after the pumps switch on (>= 2).
    pub periods: T,
    /// Extra time after the last period, s.
    pub tail: T,
    pub pulse_amplitude: T,
    pub pulse_duration: T,
    /// Defaults to `2 pi / (50 omega_max)` of the scaled network.
    pub dt: Option<T>,
    pub output_decimation: usize,
    pub integrator: Integrator,
    pub reaction_terms: bool,
    /// With `false` the pulse is applied but no pump ever switches on.
    pub pumps_enabled: bool,
}

impl<T: Real> PstRunConfig<T> {
    pub fn new(launch: usize, scale: T) -> Self {
        Self {
            launch,
            scale,
            periods: T::lit(2.0),
            tail: T::lit(1e-3),
            pulse_amplitude: T::one(),
            pulse_duration: T::lit(2e-3),
            dt: None,
            output_decimation: 4,
            integrator: Integrator::default(),
            reaction_terms: true,
            pumps_enabled: true,
        }
    }
}

/// Result of [`run_full_pst`].
#[derive(Debug, Clone)]
pub struct PstRun<T> {
    pub trajectory: MechanicalTrajectory<T>,
    /// The frequency-scaled network that was integrated.
    pub network: Network<T>,
    pub h: CouplingMatrix<T>,
    pub pulse: ExcitationPulse<T>,
    pub pumps_on: T,
    /// `2 pi / c0`, from the eigenvalue spacing of `h`.
    pub period: T,
    pub launch: usize,
    pub pumps_enabled: bool,
}

/// Resonant pulse on the launch site, then all pumps on, integrated for
/// `periods` transfer periods. `network` carries envelope-level couplings
/// and a chain.
pub fn run_full_pst<T: Real>(network: &Network<T>, cfg: &PstRunConfig<T>) -> Result<PstRun<T>> {
    ensure_valid(network)?;
    let scaled = network.frequency_scaled(cfg.scale)?;
    let h = build_coupling_matrix(&scaled)?;
    if cfg.launch == 0 || cfg.launch > h.dim() {
        return Err(invalid(format!(
            "launch site {} outside chain of length {}",
            cfg.launch,
            h.dim()
        )));
    }
    if !(cfg.periods >= T::lit(2.0)) {
        return Err(invalid("run_full_pst integrates at least two periods"));
    }
    if !(cfg.pulse_duration > T::zero()) || !(cfg.tail >= T::zero()) {
        return Err(invalid(
            "pulse duration must be positive and tail non-negative",
        ));
    }
    let ev = Propagator::new(&h)?.eigenvalues().to_vec();
    let gap = if ev.len() > 1 {
        ev[ev.len() - 1] - ev[ev.len() - 2]
    } else {
        T::zero()
    };
    if !(gap > T::zero()) {
        return Err(invalid("chain has no coupling to define a transfer period"));
    }
    let period = T::TAU() / gap;

    let target = h.sites()[cfg.launch - 1];
    let launch_res = *scaled.require(target)?;
    let pulse = ExcitationPulse {
        target,
        amplitude: cfg.pulse_amplitude,
        frequency: launch_res.omega,
        duration: cfg.pulse_duration,
    };
    let pumps_on = cfg.pulse_duration;
    let mut problem = FullProblem::new(
        scaled.resonators.clone(),
        pumps_on + cfg.periods * period + cfg.tail,
    );
    if cfg.pumps_enabled {
        problem.pumps = pumps_for_network(&scaled, pumps_on)?;
    }
    problem.pulse = Some(pulse);
    if let Some(dt) = cfg.dt {
        problem.dt = dt;
    }
    problem.output_decimation = cfg.output_decimation;
    problem.integrator = cfg.integrator;
    problem.reaction_terms = cfg.reaction_terms;
    let trajectory = evolve_full(&problem)?;
    Ok(PstRun {
        trajectory,
        network: scaled,
        h,
        pulse,
        pumps_on,
        period,
        launch: cfg.launch,
        pumps_enabled: cfg.pumps_enabled,
    })
}

/// Demodulated full-model envelopes next to the envelope-model prediction
/// passed through the same low-pass filter.
///
/// Amplitudes are canonical: site `j` is multiplied by
/// `sqrt(omega_j / omega_launch)`, the scaling under which the envelope
/// model is exactly symmetric.
#[derive(Debug, Clone)]
pub struct EnvelopeComparison<T> {
    pub times: Vec<T>,
    /// Per chain position.
    pub channels: Vec<DemodChannel<T>>,
    pub measured: Vec<Vec<Complex<T>>>,
    pub reference: Vec<Vec<Complex<T>>>,
    pub transient_until: T,
    /// Peak reference amplitude after the transient.
    pub peak: T,
    /// `max |measured - reference| / peak` after the transient.
    pub max_error: T,
    /// `max ||measured| - |reference|| / peak` after the transient.
    pub max_magnitude_error: T,
}

impl<T: Real> EnvelopeComparison<T> {
    /// Population share of chain position `site` in the measured envelopes.
    pub fn measured_fidelity(&self, site: usize, t: T) -> Result<T> {
        share(&self.measured, &self.channels[0], site, t)
    }

    pub fn reference_fidelity(&self, site: usize, t: T) -> Result<T> {
        share(&self.reference, &self.channels[0], site, t)
    }

    /// Phase change of chain position `site` from the end of the transient to `t`.
    pub fn phase_shift(&self, site: usize, t: T) -> Result<T> {
        let ch = self
            .channels
            .get(site.wrapping_sub(1))
            .ok_or_else(|| invalid(format!("site {site} outside chain")))?;
        lockin::channel_phase_shift(ch, self.transient_until, t).map_err(|e| match e {
            Error::PhaseUndefined {
                amplitude, floor, ..
            } => Error::PhaseUndefined {
                site,
                amplitude,
                floor,
            },
            other => other,
        })
    }
}

fn share<T: Real>(
    rows: &[Vec<Complex<T>>],
    clock: &DemodChannel<T>,
    site: usize,
    t: T,
) -> Result<T> {
    if site == 0 || site > rows.len() {
        return Err(invalid(format!("site {site} outside chain")));
    }
    let k = clock.index_at(t)?;
    let total: T = rows.iter().map(|r| r[k].norm_sqr()).sum();
    if !(total > T::zero()) {
        return Err(Error::DivisionByZero);
    }
    Ok(rows[site - 1][k].norm_sqr() / total)
}

/// Demodulates every chain site of `run` at its own eigenfrequency and
/// compares against the envelope model.
pub fn compare_with_rwa<T: Real>(
    run: &PstRun<T>,
    time_constant: T,
) -> Result<EnvelopeComparison<T>> {
    let traj = &run.trajectory;
    let sites = run.h.sites().to_vec();
    let launch_res = *run.network.require(sites[run.launch - 1])?;
    let w_l = launch_res.omega;

    let mut channels = Vec::with_capacity(sites.len());
    let mut measured = Vec::with_capacity(sites.len());
    for &idx in &sites {
        let r = run.network.require(idx)?;
        let cfg = LockInConfig::new(r.omega, time_constant, traj.output_dt)?;
        let ch = demodulate(&traj.signal(idx)?, &cfg)?;
        let norm = (r.omega / w_l).sqrt();
        measured.push(ch.envelope.iter().map(|z| *z * norm).collect::<Vec<_>>());
        channels.push(ch);
    }

    // Envelope-model prediction: linear growth under the resonant pulse,
    // then exact evolution with the chain Hamiltonian.
    let n = sites.len();
    let gamma = launch_res.gamma;
    let drive = run.pulse.amplitude / (T::lit(2.0) * launch_res.mass * w_l);
    let grown = |t: T| -> T {
        if gamma > T::zero() {
            let g2 = gamma * T::lit(0.5);
            drive * (T::one() - (-g2 * t).exp()) / g2
        } else {
            drive * t
        }
    };
    let mut x_on = vec![Complex::new(T::zero(), T::zero()); n];
    x_on[run.launch - 1] = Complex::new(T::zero(), -grown(run.pumps_on));
    let prop = Propagator::new(&run.h)?;
    let mut raw_ref = vec![Vec::with_capacity(traj.times.len()); n];
    for &t in &traj.times {
        if t < run.pumps_on {
            for (j, row) in raw_ref.iter_mut().enumerate() {
                let v = if j == run.launch - 1 {
                    -grown(t)
                } else {
                    T::zero()
                };
                row.push(Complex::new(T::zero(), v));
            }
        } else {
            let tau = t - run.pumps_on;
            let x = if run.pumps_enabled {
                prop.apply(&x_on, tau)
            } else {
                x_on.clone()
            };
            let decay = (-gamma * tau * T::lit(0.5)).exp();
            for (row, z) in raw_ref.iter_mut().zip(x) {
                row.push(z * decay);
            }
        }
    }
    let reference: Vec<Vec<Complex<T>>> = raw_ref
        .iter()
        .map(|row| lockin::low_pass(row, traj.output_dt, time_constant))
        .collect();

    let transient_until = channels[0].transient_until;
    let after: Vec<usize> = (0..traj.times.len())
        .filter(|&k| traj.times[k] >= transient_until)
        .collect();
    let peak = reference
        .iter()
        .flat_map(|row| after.iter().map(move |&k| row[k].norm()))
        .fold(T::zero(), T::max);
    if !(peak > T::zero()) {
        return Err(Error::DivisionByZero);
    }
    let mut max_error = T::zero();
    let mut max_magnitude_error = T::zero();
    for (m, r) in measured.iter().zip(&reference) {
        for &k in &after {
            max_error = max_error.max((m[k] - r[k]).norm() / peak);
            max_magnitude_error = max_magnitude_error.max((m[k].norm() - r[k].norm()).abs() / peak);
        }
    }
    Ok(EnvelopeComparison {
        times: traj.times.clone(),
        channels,
        measured,
        reference,
        transient_until,
        peak,
        max_error,
        max_magnitude_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{fixture_resonators, CouplingSpec};
    use std::f64::consts::TAU;

    fn single(omega: f64, gamma: f64) -> Vec<ResonatorSpec<f64>> {
        vec![ResonatorSpec::new(1, omega, gamma)]
    }

    #[test]
    fn lambda_conversion() {
        assert_eq!(lambda_from_rwa(0.0, 1.0, 2.0, 3.0).unwrap(), 0.0);
        let w: f64 = 5.0;
        assert!((lambda_from_rwa(0.7, 2.0, w, w).unwrap() - 2.0 * 2.0 * w * 0.7).abs() < 1e-12);
        assert!(lambda_from_rwa(1.0, 0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn harmonic_oscillator_cosine_and_energy() {
        let w = TAU * 1e3;
        let mut p = FullProblem::new(single(w, 0.0), 1e4 / 1e3);
        p.initial.positions[0] = 1.5;
        p.output_decimation = 50;
        let traj = evolve_full(&p).unwrap();
        let e0 = total_energy(&p.resonators, &traj.states[0]);
        let mut worst_e = 0.0f64;
        let mut worst_x = 0.0f64;
        for s in &traj.states {
            worst_e = worst_e.max((total_energy(&p.resonators, s) - e0).abs() / e0);
            worst_x = worst_x.max((s.positions[0] - 1.5 * (w * s.time).cos()).abs());
        }
        assert!(worst_e < 1e-9, "energy drift {worst_e}");
        assert!(worst_x < 1e-6, "phase error {worst_x}");
    }

    #[test]
    fn classic_rk4_agrees_over_short_runs() {
        let w = TAU * 1e3;
        let mut p = FullProblem::new(single(w, TAU * 2.0), 0.01);
        p.initial.positions[0] = 1.0;
        p.integrator = Integrator::ClassicRk4;
        let a = evolve_full(&p).unwrap();
        p.integrator = Integrator::IntegratingFactorRk4;
        let b = evolve_full(&p).unwrap();
        let (xa, xb) = (
            a.states.last().unwrap().positions[0],
            b.states.last().unwrap().positions[0],
        );
        assert!((xa - xb).abs() < 1e-4);
    }

    #[test]
    fn damped_envelope() {
        let w = TAU * 2e3;
        let gamma = TAU * 8.17;
        let mut p = FullProblem::new(single(w, gamma), 0.1);
        p.initial.positions[0] = 1.0;
        let traj = evolve_full(&p).unwrap();
        let half = gamma / 2.0;
        let wd = (w * w - half * half).sqrt();
        let a0 = (1.0 + (half / wd).powi(2)).sqrt();
        for s in &traj.states {
            let (x, v) = (s.positions[0], s.velocities[0]);
            let amp = (x * x + ((v + half * x) / wd).powi(2)).sqrt() / a0;
            let want = (-half * s.time).exp();
            assert!((amp - want).abs() < 1e-3 * want, "t = {}", s.time);
        }
    }

    /// Minima of `|z|` after a boxcar over one carrier period, which
    /// cancels the lock-in's 2w ripple.
    fn local_minima(ch: &DemodChannel<f64>, carrier: f64, dt: f64) -> Vec<f64> {
        let w = (TAU / carrier / dt).round() as usize;
        let m: Vec<f64> = ch
            .envelope
            .windows(w)
            .map(|win| win.iter().sum::<Complex<f64>>().norm() / w as f64)
            .collect();
        let t = |k: usize| ch.times[k] + (w - 1) as f64 * dt / 2.0;
        (1..m.len() - 1)
            .filter(|&k| {
                t(k) > ch.transient_until && m[k] < m[k - 1] && m[k] <= m[k + 1] && m[k] < 0.2
            })
            .map(t)
            .collect()
    }

    #[test]
    fn two_resonator_exchange_period() {
        let rs = vec![
            ResonatorSpec::from_hz(1, 10e3, 0.0),
            ResonatorSpec::from_hz(2, 11e3, 0.0),
        ];
        let c = TAU * 50.0;
        let net =
            Network::new(rs.clone()).with_couplings(vec![CouplingSpec::between(&rs[0], &rs[1], c)]);
        let mut p = FullProblem::new(rs.clone(), 0.035);
        p.pumps = pumps_for_network(&net, 0.0).unwrap();
        p.initial.positions[0] = 1.0;
        p.output_decimation = 4;
        let traj = evolve_full(&p).unwrap();
        let tc = 1.0 / (TAU * 300.0);
        let cfg = LockInConfig::new(rs[0].omega, tc, traj.output_dt).unwrap();
        let ch = demodulate(&traj.signal(1).unwrap(), &cfg).unwrap();
        // envelope oracle |X_1| = |cos(c t / 2)| vanishes at pi / c and 3 pi / c
        let minima = local_minima(&ch, rs[0].omega, traj.output_dt);
        assert_eq!(minima.len(), 2, "{minima:?}");
        let want = TAU / c;
        let period = minima[1] - minima[0];
        assert!((period - want).abs() < 0.02 * want, "period {period}");
    }

    #[test]
    fn rejects_large_step_and_bad_pumps() {
        let w = TAU * 1e3;
        let mut p = FullProblem::new(single(w, 0.0), 1e-3);
        p.dt = TAU / (10.0 * w);
        assert!(evolve_full(&p).is_err());
        let rs = vec![
            ResonatorSpec::new(1, w, 0.0),
            ResonatorSpec::new(2, 2.0 * w, 0.0),
        ];
        let mut p = FullProblem::new(rs, 1e-3);
        p.pumps = vec![PumpTerm::new(1, 3, 1.0, w)];
        assert!(evolve_full(&p).is_err());
        p.pumps = vec![PumpTerm::new(1, 2, 1.0, 0.5 * w)];
        assert!(evolve_full(&p).is_err());
        p.pumps = vec![PumpTerm::new(1, 2, 1.0, w)];
        assert!(evolve_full(&p).is_ok());
    }

    #[test]
    fn overflow_is_reported_with_time() {
        let w = 1.0;
        let rs = vec![
            ResonatorSpec::new(1, w, 0.0),
            ResonatorSpec::new(2, 2.0 * w, 0.0),
        ];
        let mut p = FullProblem::new(rs, 2000.0);
        p.pumps = vec![PumpTerm::new(1, 2, 1e6, w)];
        p.initial.positions[0] = 1.0;
        match evolve_full(&p) {
            Err(Error::NumericalOverflow { time }) => assert!(time > 0.0),
            other => panic!("expected overflow, got {other:?}"),
        }
    }

    #[test]
    fn deterministic_and_step_halving() {
        let rs = fixture_resonators(64.0)[..3].to_vec();
        let net = Network::new(rs.clone()).with_couplings(vec![
            CouplingSpec::between(&rs[0], &rs[1], TAU * 40.0),
            CouplingSpec::between(&rs[1], &rs[2], TAU * 40.0),
        ]);
        let mut p = FullProblem::new(rs, 0.005);
        p.pumps = pumps_for_network(&net, 0.0).unwrap();
        p.initial.positions[0] = 1.0;
        let a = evolve_full(&p).unwrap();
        let b = evolve_full(&p).unwrap();
        assert_eq!(a, b);
        let err = step_halving_error(&p).unwrap();
        assert!(err < 1e-6, "step halving changed the result by {err}");
    }

    #[test]
    fn zero_pumps_keep_excitation_home() {
        let rs = fixture_resonators(1.0);
        let profile = crate::synthesis::pst_couplings(4, TAU * 52.0).unwrap();
        let net = profile
            .network(rs, vec![2, 4, 6, 8])
            .unwrap()
            .with_uniform_gamma(0.0);
        let mut cfg = PstRunConfig::new(1, 64.0);
        cfg.pumps_enabled = false;
        let run = run_full_pst(&net, &cfg).unwrap();
        let cmp = compare_with_rwa(&run, lockin::default_time_constant()).unwrap();
        let t_end = *cmp.times.last().unwrap();
        assert!(cmp.measured_fidelity(1, t_end).unwrap() > 0.999);
        // floor set by the 2w ripple of the default filter, about 1/(2 w tau)
        assert!(cmp.max_error < 0.02, "{}", cmp.max_error);
        let k0 = cmp.channels[0]
            .index_at(cmp.transient_until + 0.01)
            .unwrap();
        let a0 = cmp.measured[0][k0].norm();
        let a1 = cmp.measured[0].last().unwrap().norm();
        assert!((a0 - a1).abs() < 0.01 * a0);
    }
}
