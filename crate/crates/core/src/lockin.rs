//! Digital lock-in: mix a real signal down with `exp(-i w_ref t)` and smooth
//! the product with a single-pole recursive low-pass.

use num_complex::Complex;

use crate::error::{invalid, Error, Result};
use crate::scalar::{wrap_phase, Real};

/// Default filter time constant, `1 / (2 pi 300 Hz)`.
pub fn default_time_constant<T: Real>() -> T {
    T::one() / (T::TAU() * T::lit(300.0))
}

/// Output is unreliable for this many time constants after the start.
pub const TRANSIENT_TIME_CONSTANTS: f64 = 5.0;

/// Minimum samples per reference period accepted by [`demodulate`].
pub const MIN_SAMPLES_PER_PERIOD: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LockInConfig<T> {
    /// Reference frequency, rad/s.
    pub ref_freq: T,
    /// Low-pass time constant, s.
    pub time_constant: T,
    /// Input sample spacing, s.
    pub sample_dt: T,
}

impl<T: Real> LockInConfig<T> {
    pub fn new(ref_freq: T, time_constant: T, sample_dt: T) -> Result<Self> {
        if !(ref_freq > T::zero()) {
            return Err(invalid("reference frequency must be positive"));
        }
        if !(sample_dt > T::zero()) {
            return Err(invalid("sample spacing must be positive"));
        }
        if !(time_constant >= T::lit(10.0) * sample_dt) {
            return Err(invalid("time constant must be at least 10 samples"));
        }
        Ok(Self {
            ref_freq,
            time_constant,
            sample_dt,
        })
    }

    fn decay(&self) -> T {
        (-self.sample_dt / self.time_constant).exp()
    }
}

/// Uniformly sampled real signal.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSignal<T> {
    pub start: T,
    pub dt: T,
    pub values: Vec<T>,
}

impl<T: Real> SampledSignal<T> {
    pub fn time(&self, k: usize) -> T {
        self.start + T::from_usize_lossy(k) * self.dt
    }
}

/// Demodulated complex envelope.
#[derive(Debug, Clone, PartialEq)]
pub struct DemodChannel<T> {
    pub times: Vec<T>,
    pub envelope: Vec<Complex<T>>,
    /// First time at which the output is trusted.
    pub transient_until: T,
}

impl<T: Real> DemodChannel<T> {
    /// Index of the sample nearest to `t`.
    pub fn index_at(&self, t: T) -> Result<usize> {
        let (first, last) = match (self.times.first(), self.times.last()) {
            (Some(&a), Some(&b)) => (a, b),
            _ => return Err(invalid("empty channel")),
        };
        if t < first || t > last {
            return Err(Error::OutOfRange {
                time: t.to_f64().unwrap_or(f64::NAN),
                start: first.to_f64().unwrap_or(f64::NAN),
                end: last.to_f64().unwrap_or(f64::NAN),
            });
        }
        let dt = if self.times.len() > 1 {
            self.times[1] - self.times[0]
        } else {
            T::one()
        };
        let k = ((t - first) / dt).round().to_usize().unwrap_or(0);
        Ok(k.min(self.times.len() - 1))
    }

    pub fn at(&self, t: T) -> Result<Complex<T>> {
        Ok(self.envelope[self.index_at(t)?])
    }

    /// Largest amplitude after the transient.
    pub fn peak_amplitude(&self) -> T {
        self.times
            .iter()
            .zip(&self.envelope)
            .filter(|(t, _)| **t >= self.transient_until)
            .map(|(_, z)| z.norm())
            .fold(T::zero(), T::max)
    }
}

/// Streaming demodulator; one per channel.
#[derive(Debug, Clone)]
pub struct LockIn<T> {
    cfg: LockInConfig<T>,
    decay: T,
    state: Complex<T>,
}

impl<T: Real> LockIn<T> {
    pub fn new(cfg: LockInConfig<T>) -> Self {
        Self {
            decay: cfg.decay(),
            cfg,
            state: Complex::new(T::zero(), T::zero()),
        }
    }

    /// Feeds one sample taken at absolute time `t`; returns the filter output.
    pub fn push(&mut self, t: T, x: T) -> Complex<T> {
        let phase = -self.cfg.ref_freq * t;
        let mixed = Complex::new(phase.cos(), phase.sin()) * (x * T::lit(2.0));
        self.state = self.state * self.decay + mixed * (T::one() - self.decay);
        self.state
    }
}

/// Demodulates `signal` at `cfg.ref_freq`.
pub fn demodulate<T: Real>(
    signal: &SampledSignal<T>,
    cfg: &LockInConfig<T>,
) -> Result<DemodChannel<T>> {
    let rel = ((signal.dt - cfg.sample_dt) / cfg.sample_dt).abs();
    if !(rel <= T::lit(1e-9)) {
        return Err(invalid(
            "signal spacing differs from the configured sample_dt",
        ));
    }
    let per_period = T::TAU() / (cfg.ref_freq * signal.dt);
    if !(per_period >= T::lit(MIN_SAMPLES_PER_PERIOD)) {
        return Err(invalid(format!(
            "undersampled input: {:.2} samples per reference period (need {MIN_SAMPLES_PER_PERIOD})",
            per_period.to_f64().unwrap_or(f64::NAN)
        )));
    }
    let mut li = LockIn::new(*cfg);
    let mut times = Vec::with_capacity(signal.values.len());
    let mut envelope = Vec::with_capacity(signal.values.len());
    for (k, &x) in signal.values.iter().enumerate() {
        let t = signal.time(k);
        times.push(t);
        envelope.push(li.push(t, x));
    }
    Ok(DemodChannel {
        times,
        envelope,
        transient_until: signal.start + T::lit(TRANSIENT_TIME_CONSTANTS) * cfg.time_constant,
    })
}

/// The same single-pole filter applied to an already complex sequence.
/// Used to pass reference envelopes through the lock-in's response.
pub fn low_pass<T: Real>(values: &[Complex<T>], dt: T, time_constant: T) -> Vec<Complex<T>> {
    let a = (-dt / time_constant).exp();
    let mut z = Complex::new(T::zero(), T::zero());
    values
        .iter()
        .map(|&u| {
            z = z * a + u * (T::one() - a);
            z
        })
        .collect()
}

/// Relative floor below which a channel's phase is not reported.
pub const PHASE_FLOOR: f64 = 1e-6;

/// Wrapped phase change `arg z(t1) - arg z(t0)`.
pub fn channel_phase_shift<T: Real>(ch: &DemodChannel<T>, t0: T, t1: T) -> Result<T> {
    for t in [t0, t1] {
        if t < ch.transient_until {
            return Err(Error::TransientRegion {
                time: t.to_f64().unwrap_or(f64::NAN),
                until: ch.transient_until.to_f64().unwrap_or(f64::NAN),
            });
        }
    }
    let floor = T::lit(PHASE_FLOOR) * ch.peak_amplitude();
    let z0 = ch.at(t0)?;
    let z1 = ch.at(t1)?;
    for z in [z0, z1] {
        if !(z.norm() > floor) {
            return Err(Error::PhaseUndefined {
                site: 0,
                amplitude: z.norm().to_f64().unwrap_or(f64::NAN),
                floor: floor.to_f64().unwrap_or(f64::NAN),
            });
        }
    }
    Ok(wrap_phase((z1 * z0.conj()).arg()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    fn tone(amp: f64, w: f64, phi: f64, dt: f64, n: usize) -> SampledSignal<f64> {
        SampledSignal {
            start: 0.0,
            dt,
            values: (0..n)
                .map(|k| amp * (w * k as f64 * dt + phi).cos())
                .collect(),
        }
    }

    fn setup() -> (f64, f64, LockInConfig<f64>) {
        let w = TAU * 14e3;
        let dt = TAU / w / 40.0;
        let cfg = LockInConfig::new(w, default_time_constant(), dt).unwrap();
        (w, dt, cfg)
    }

    #[test]
    fn pure_tone_amplitude_and_phase() {
        // the 2w ripple of a single pole is about 1/(2 w tau); 10 ms keeps it below 1e-3
        let (w, dt, _) = setup();
        let cfg = LockInConfig::new(w, 0.01, dt).unwrap();
        let n = (0.08 / dt) as usize;
        let ch = demodulate(&tone(2.5, w, 0.0, dt, n), &cfg).unwrap();
        let z = *ch.envelope.last().unwrap();
        assert!((z.norm() - 2.5).abs() < 2.5e-3);
        assert!(z.arg().abs() < 1e-3);
        let ch = demodulate(&tone(1.0, w, 0.7, dt, n), &cfg).unwrap();
        assert!((ch.envelope.last().unwrap().arg() - 0.7).abs() < 1e-3);
    }

    #[test]
    fn transient_reaches_99_percent() {
        let (w, dt, cfg) = setup();
        let n = (0.01 / dt) as usize;
        let ch = demodulate(&tone(1.0, w, 0.0, dt, n), &cfg).unwrap();
        assert!((ch.transient_until - 5.0 * cfg.time_constant).abs() < 1e-15);
        let k = ch.index_at(ch.transient_until).unwrap();
        let settled = ch.envelope[n - 1].norm();
        assert!(ch.envelope[k].norm() >= 0.99 * settled);
    }

    #[test]
    fn rejects_undersampling_and_bad_config() {
        let w = TAU * 14e3;
        let dt = TAU / w / 5.0;
        let cfg = LockInConfig::new(w, 1e-3, dt).unwrap();
        assert!(demodulate(&tone(1.0, w, 0.0, dt, 100), &cfg).is_err());
        assert!(LockInConfig::new(w, dt, dt).is_err());
        let good = LockInConfig::new(w, 1e-3, dt / 4.0).unwrap();
        assert!(demodulate(&tone(1.0, w, 0.0, dt, 100), &good).is_err());
    }

    #[test]
    fn phase_shift_queries() {
        let (w, dt, cfg) = setup();
        let n = (0.01 / dt) as usize;
        let ch = demodulate(&tone(1.0, w, 0.3, dt, n), &cfg).unwrap();
        let t = 0.008;
        assert_eq!(channel_phase_shift(&ch, t, t).unwrap(), 0.0);
        assert!(matches!(
            channel_phase_shift(&ch, 1e-4, t),
            Err(Error::TransientRegion { .. })
        ));
        let silent = demodulate(&tone(0.0, w, 0.0, dt, n), &cfg).unwrap();
        assert!(matches!(
            channel_phase_shift(&silent, t, t),
            Err(Error::PhaseUndefined { .. })
        ));
    }

    #[test]
    fn streaming_matches_batch() {
        let (w, dt, cfg) = setup();
        let sig = tone(1.0, w, 0.1, dt, 500);
        let batch = demodulate(&sig, &cfg).unwrap();
        let mut li = LockIn::new(cfg);
        for (k, &x) in sig.values.iter().enumerate() {
            assert_eq!(li.push(sig.time(k), x), batch.envelope[k]);
        }
    }

    #[test]
    fn matched_filter_of_constant() {
        let v = vec![Complex::new(1.0, -1.0); 2000];
        let out = low_pass(&v, 1e-5, 1e-3);
        assert!((out[1999] - v[0]).norm() < 1e-6);
        assert!(out[0].norm() < 0.02);
    }
}
