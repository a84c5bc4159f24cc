//! Domain types shared by every module: resonators, couplings, networks,
//! reconfiguration schedules and the two state representations.
//!
//! Resonator indices are 1-based everywhere (`R1..R8`).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_complex::Complex;

use crate::error::{invalid, Error, Result};
use crate::scalar::Real;

/// Largest damping-to-frequency ratio accepted as underdamped.
pub const MAX_DAMPING_RATIO: f64 = 1e-2;

/// One mechanical mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResonatorSpec<T> {
    pub index: usize,
    /// Angular eigenfrequency, rad/s.
    pub omega: T,
    /// Energy damping rate, rad/s.
    pub gamma: T,
    /// Effective mass, kg (normalized to 1 by default).
    pub mass: T,
}

impl<T: Real> ResonatorSpec<T> {
    pub fn new(index: usize, omega: T, gamma: T) -> Self {
        Self {
            index,
            omega,
            gamma,
            mass: T::one(),
        }
    }

    /// Builds from ordinary frequencies in Hz.
    pub fn from_hz(index: usize, freq_hz: T, gamma_hz: T) -> Self {
        Self::new(index, T::TAU() * freq_hz, T::TAU() * gamma_hz)
    }

    pub fn with_mass(mut self, mass: T) -> Self {
        self.mass = mass;
        self
    }

    pub fn quality_factor(&self) -> T {
        self.omega / self.gamma
    }
}

/// One parametric edge between two resonators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingSpec<T> {
    pub a: usize,
    pub b: usize,
    /// Envelope-level coupling strength, rad/s.
    pub strength: T,
    /// Pump (difference) frequency, rad/s.
    pub pump_freq: T,
}

impl<T: Real> CouplingSpec<T> {
    /// Couples `a` and `b`, deriving the pump frequency `|omega_a - omega_b|`.
    pub fn between(a: &ResonatorSpec<T>, b: &ResonatorSpec<T>, strength: T) -> Self {
        Self {
            a: a.index,
            b: b.index,
            strength,
            pump_freq: (a.omega - b.omega).abs(),
        }
    }

    /// Unordered endpoint pair, smaller index first.
    pub fn key(&self) -> (usize, usize) {
        (self.a.min(self.b), self.a.max(self.b))
    }

    pub fn touches(&self, index: usize) -> bool {
        self.a == index || self.b == index
    }
}

/// A set of resonators, the couplings between them, and optionally the
/// logical chain through them.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    pub resonators: Vec<ResonatorSpec<T>>,
    pub couplings: Vec<CouplingSpec<T>>,
    /// Ordered resonator indices of the logical 1-D path, e.g. `[2, 4, 6, 8]`.
    pub chain_order: Option<Vec<usize>>,
}

impl<T: Real> Network<T> {
    pub fn new(resonators: Vec<ResonatorSpec<T>>) -> Self {
        Self {
            resonators,
            couplings: Vec::new(),
            chain_order: None,
        }
    }

    pub fn with_couplings(mut self, couplings: Vec<CouplingSpec<T>>) -> Self {
        self.couplings = couplings;
        self
    }

    pub fn with_chain(mut self, chain: Vec<usize>) -> Self {
        self.chain_order = Some(chain);
        self
    }

    pub fn resonator(&self, index: usize) -> Option<&ResonatorSpec<T>> {
        self.resonators.iter().find(|r| r.index == index)
    }

    pub fn require(&self, index: usize) -> Result<&ResonatorSpec<T>> {
        self.resonator(index)
            .ok_or_else(|| invalid(format!("resonator R{index} is not part of the network")))
    }

    /// Replaces the couplings, keeping resonators and chain.
    pub fn reconfigured(&self, couplings: Vec<CouplingSpec<T>>) -> Self {
        Self {
            resonators: self.resonators.clone(),
            couplings,
            chain_order: self.chain_order.clone(),
        }
    }

    /// Returns a copy with every eigenfrequency divided by `scale`.
    /// Damping, masses and couplings are unchanged.
    pub fn frequency_scaled(&self, scale: T) -> Result<Self> {
        if !(scale >= T::one()) {
            return Err(invalid("frequency scale must be >= 1"));
        }
        let resonators: Vec<_> = self
            .resonators
            .iter()
            .map(|r| ResonatorSpec {
                omega: r.omega / scale,
                ..*r
            })
            .collect();
        let couplings = self
            .couplings
            .iter()
            .map(|c| CouplingSpec {
                pump_freq: c.pump_freq / scale,
                ..*c
            })
            .collect();
        Ok(Self {
            resonators,
            couplings,
            chain_order: self.chain_order.clone(),
        })
    }

    /// Sets the damping of every resonator to `gamma`.
    pub fn with_uniform_gamma(mut self, gamma: T) -> Self {
        for r in &mut self.resonators {
            r.gamma = gamma;
        }
        self
    }
}

/// Invariant violation reported by [`validate_network`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NonPositiveOmega {
        index: usize,
    },
    NegativeGamma {
        index: usize,
    },
    NonPositiveMass {
        index: usize,
    },
    NotUnderdamped {
        index: usize,
        ratio: f64,
    },
    DuplicateResonator {
        index: usize,
    },
    DegenerateFrequencies {
        a: usize,
        b: usize,
    },
    SelfCoupling {
        index: usize,
    },
    UnknownResonator {
        a: usize,
        b: usize,
        missing: usize,
    },
    DuplicateCoupling {
        a: usize,
        b: usize,
    },
    NegativeStrength {
        a: usize,
        b: usize,
    },
    PumpMismatch {
        a: usize,
        b: usize,
        expected: f64,
        found: f64,
    },
    ChainUnknownSite {
        index: usize,
    },
    ChainRepeatedSite {
        index: usize,
    },
    ChainMissingEdge {
        a: usize,
        b: usize,
    },
    OffChainCoupling {
        a: usize,
        b: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            NonPositiveOmega { index } => write!(f, "R{index}: eigenfrequency must be positive"),
            NegativeGamma { index } => write!(f, "R{index}: damping rate must be non-negative"),
            NonPositiveMass { index } => write!(f, "R{index}: mass must be positive"),
            NotUnderdamped { index, ratio } => write!(
                f,
                "R{index}: gamma/omega = {ratio:e} exceeds {MAX_DAMPING_RATIO:e} (not underdamped)"
            ),
            DuplicateResonator { index } => write!(f, "R{index} appears more than once"),
            DegenerateFrequencies { a, b } => {
                write!(f, "degenerate eigenfrequencies: R{a} and R{b}")
            }
            SelfCoupling { index } => write!(f, "coupling ({index},{index}) links R{index} to itself"),
            UnknownResonator { a, b, missing } => {
                write!(f, "coupling ({a},{b}) references unknown resonator R{missing}")
            }
            DuplicateCoupling { a, b } => write!(f, "duplicate coupling for pair ({a},{b})"),
            NegativeStrength { a, b } => write!(f, "coupling ({a},{b}) has negative strength"),
            PumpMismatch {
                a,
                b,
                expected,
                found,
            } => write!(
                f,
                "coupling ({a},{b}) pump frequency {found} rad/s differs from |omega_a - omega_b| = {expected} rad/s"
            ),
            ChainUnknownSite { index } => write!(f, "chain order references unknown resonator R{index}"),
            ChainRepeatedSite { index } => write!(f, "chain order visits R{index} twice"),
            ChainMissingEdge { a, b } => {
                write!(f, "chain step R{a}-R{b} has no coupling")
            }
            OffChainCoupling { a, b } => {
                write!(f, "coupling ({a},{b}) does not join consecutive chain sites")
            }
        }
    }
}

fn f64_of<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Lists every invariant violation of `network`; empty means usable by all
/// downstream modules.
pub fn validate_network<T: Real>(network: &Network<T>) -> Vec<Violation> {
    let mut out = Vec::new();

    let mut seen = BTreeSet::new();
    for r in &network.resonators {
        if !seen.insert(r.index) {
            out.push(Violation::DuplicateResonator { index: r.index });
        }
        if !(r.omega > T::zero()) {
            out.push(Violation::NonPositiveOmega { index: r.index });
        }
        if !(r.gamma >= T::zero()) {
            out.push(Violation::NegativeGamma { index: r.index });
        }
        if !(r.mass > T::zero()) {
            out.push(Violation::NonPositiveMass { index: r.index });
        }
        if r.omega > T::zero() && r.gamma >= T::zero() {
            let ratio = r.gamma / r.omega;
            if ratio >= T::lit(MAX_DAMPING_RATIO) {
                out.push(Violation::NotUnderdamped {
                    index: r.index,
                    ratio: f64_of(ratio),
                });
            }
        }
    }

    let rs = &network.resonators;
    for i in 0..rs.len() {
        for j in i + 1..rs.len() {
            if rs[i].index == rs[j].index {
                continue;
            }
            let scale = rs[i].omega.abs().max(rs[j].omega.abs());
            if (rs[i].omega - rs[j].omega).abs() <= T::lit(1e-12) * scale {
                let (a, b) = (rs[i].index.min(rs[j].index), rs[i].index.max(rs[j].index));
                out.push(Violation::DegenerateFrequencies { a, b });
            }
        }
    }

    let mut pairs = BTreeMap::new();
    for c in &network.couplings {
        if c.a == c.b {
            out.push(Violation::SelfCoupling { index: c.a });
            continue;
        }
        let mut endpoints_known = true;
        for idx in [c.a, c.b] {
            if network.resonator(idx).is_none() {
                out.push(Violation::UnknownResonator {
                    a: c.a,
                    b: c.b,
                    missing: idx,
                });
                endpoints_known = false;
            }
        }
        let key = c.key();
        if pairs.insert(key, ()).is_some() {
            out.push(Violation::DuplicateCoupling { a: key.0, b: key.1 });
        }
        if !(c.strength >= T::zero()) {
            out.push(Violation::NegativeStrength { a: c.a, b: c.b });
        }
        if endpoints_known {
            let ra = network.resonator(c.a).unwrap();
            let rb = network.resonator(c.b).unwrap();
            let expected = (ra.omega - rb.omega).abs();
            let scale = ra.omega.abs().max(rb.omega.abs());
            if !((c.pump_freq - expected).abs() <= T::lit(1e-9) * scale) {
                out.push(Violation::PumpMismatch {
                    a: c.a,
                    b: c.b,
                    expected: f64_of(expected),
                    found: f64_of(c.pump_freq),
                });
            }
        }
    }

    if let Some(chain) = &network.chain_order {
        let mut visited = BTreeSet::new();
        for &idx in chain {
            if network.resonator(idx).is_none() {
                out.push(Violation::ChainUnknownSite { index: idx });
            }
            if !visited.insert(idx) {
                out.push(Violation::ChainRepeatedSite { index: idx });
            }
        }
        let steps: BTreeSet<(usize, usize)> = chain
            .windows(2)
            .map(|w| (w[0].min(w[1]), w[0].max(w[1])))
            .collect();
        for w in chain.windows(2) {
            let key = (w[0].min(w[1]), w[0].max(w[1]));
            if !pairs.contains_key(&key) {
                out.push(Violation::ChainMissingEdge { a: w[0], b: w[1] });
            }
        }
        for c in &network.couplings {
            if c.a != c.b && !steps.contains(&c.key()) {
                out.push(Violation::OffChainCoupling { a: c.a, b: c.b });
            }
        }
    }

    out
}

/// Validates and converts the violation list into an error.
pub fn ensure_valid<T: Real>(network: &Network<T>) -> Result<()> {
    let v = validate_network(network);
    if v.is_empty() {
        Ok(())
    } else {
        let msg: Vec<String> = v.iter().map(ToString::to_string).collect();
        Err(invalid(format!("invalid network: {}", msg.join("; "))))
    }
}

/// One piece of a reconfiguration schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment<T> {
    pub couplings: Vec<CouplingSpec<T>>,
    /// Seconds, > 0.
    pub duration: T,
}

impl<T: Real> Segment<T> {
    pub fn new(couplings: Vec<CouplingSpec<T>>, duration: T) -> Result<Self> {
        if !(duration > T::zero()) || !duration.is_finite() {
            return Err(Error::InvalidSchedule(
                "segment duration must be positive and finite".into(),
            ));
        }
        Ok(Self {
            couplings,
            duration,
        })
    }
}

/// Piecewise-constant sequence of coupling configurations.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule<T> {
    segments: Vec<Segment<T>>,
}

impl<T: Real> Schedule<T> {
    pub fn new(segments: Vec<Segment<T>>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::InvalidSchedule("schedule has no segments".into()));
        }
        if let Some(k) = segments.iter().position(|s| !(s.duration > T::zero())) {
            return Err(Error::InvalidSchedule(format!(
                "segment {} has non-positive duration",
                k + 1
            )));
        }
        Ok(Self { segments })
    }

    pub fn segments(&self) -> &[Segment<T>] {
        &self.segments
    }

    pub fn total_duration(&self) -> T {
        self.segments.iter().map(|s| s.duration).sum()
    }

    /// Cumulative end time of every segment.
    pub fn boundaries(&self) -> Vec<T> {
        let mut t = T::zero();
        self.segments
            .iter()
            .map(|s| {
                t += s.duration;
                t
            })
            .collect()
    }
}

/// Complex slow amplitudes `X_j` over the logical chain at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeState<T> {
    pub time: T,
    pub amplitudes: Vec<Complex<T>>,
}

impl<T: Real> EnvelopeState<T> {
    pub fn new(time: T, amplitudes: Vec<Complex<T>>) -> Self {
        Self { time, amplitudes }
    }

    /// Unit excitation at 1-based chain position `site`.
    pub fn basis(n: usize, site: usize) -> Result<Self> {
        if site == 0 || site > n {
            return Err(invalid(format!("site {site} outside chain of length {n}")));
        }
        let mut amplitudes = vec![Complex::new(T::zero(), T::zero()); n];
        amplitudes[site - 1] = Complex::new(T::one(), T::zero());
        Ok(Self {
            time: T::zero(),
            amplitudes,
        })
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    pub fn norm(&self) -> T {
        self.amplitudes
            .iter()
            .map(|z| z.norm_sqr())
            .sum::<T>()
            .sqrt()
    }

    /// Population `|X_site|^2` at 1-based position.
    pub fn population(&self, site: usize) -> T {
        self.amplitudes[site - 1].norm_sqr()
    }
}

/// Raw mechanical coordinates of every resonator at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct MechanicalState<T> {
    pub time: T,
    pub positions: Vec<T>,
    pub velocities: Vec<T>,
}

impl<T: Real> MechanicalState<T> {
    pub fn at_rest(n: usize) -> Self {
        Self {
            time: T::zero(),
            positions: vec![T::zero(); n],
            velocities: vec![T::zero(); n],
        }
    }
}

/// Resonant drive applied to one resonator before the couplings are
/// switched on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExcitationPulse<T> {
    pub target: usize,
    /// Force amplitude, normalized units.
    pub amplitude: T,
    /// Drive frequency, rad/s (resonant with the target).
    pub frequency: T,
    /// Seconds.
    pub duration: T,
}

/// Default eight-resonator fixture: eigenfrequencies spread uniformly over
/// 860-902 kHz (divided by `scale`), damping 8.17 Hz on every resonator,
/// unit masses. The per-resonator values of the real device are not
/// published, so this spread is a convention.
pub fn fixture_resonators<T: Real>(scale: T) -> Vec<ResonatorSpec<T>> {
    (1..=8)
        .map(|j| {
            let f = T::lit(860e3 + 6e3 * (j as f64 - 1.0)) / scale;
            ResonatorSpec::from_hz(j, f, T::lit(8.17))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path8() -> Network<f64> {
        let rs = fixture_resonators(1.0);
        let cs = (0..7)
            .map(|k| CouplingSpec::between(&rs[k], &rs[k + 1], 100.0))
            .collect();
        Network::new(rs).with_couplings(cs)
    }

    #[test]
    fn well_formed_path_has_no_violations() {
        assert!(validate_network(&path8()).is_empty());
        let chained = path8().with_chain((1..=8).collect());
        assert!(validate_network(&chained).is_empty());
    }

    #[test]
    fn duplicate_edge_reported_once() {
        let mut n = path8();
        let dup = n.couplings[0];
        n.couplings.push(dup);
        let v = validate_network(&n);
        assert_eq!(v, vec![Violation::DuplicateCoupling { a: 1, b: 2 }]);
        assert!(v[0].to_string().contains("(1,2)"));
    }

    #[test]
    fn reversed_duplicate_is_still_duplicate() {
        let mut n = path8();
        let rs = n.resonators.clone();
        n.couplings.push(CouplingSpec::between(&rs[1], &rs[0], 5.0));
        assert_eq!(
            validate_network(&n),
            vec![Violation::DuplicateCoupling { a: 1, b: 2 }]
        );
    }

    #[test]
    fn degenerate_frequencies_detected() {
        let rs = vec![
            ResonatorSpec::from_hz(1, 885e3, 8.17),
            ResonatorSpec::from_hz(2, 885e3, 8.17),
        ];
        let v = validate_network(&Network::new(rs));
        assert_eq!(v, vec![Violation::DegenerateFrequencies { a: 1, b: 2 }]);
        assert!(v[0].to_string().contains("degenerate eigenfrequencies"));
    }

    #[test]
    fn resonator_invariants() {
        let rs = vec![
            ResonatorSpec::new(1, -1.0, 0.0),
            ResonatorSpec::new(2, 10.0, -1.0),
            ResonatorSpec::new(3, 10.5, 1.0),
            ResonatorSpec::new(4, 12.0, 0.0).with_mass(0.0),
            ResonatorSpec::new(4, 13.0, 0.0),
        ];
        let v = validate_network(&Network::new(rs));
        assert!(v.contains(&Violation::NonPositiveOmega { index: 1 }));
        assert!(v.contains(&Violation::NegativeGamma { index: 2 }));
        assert!(v
            .iter()
            .any(|x| matches!(x, Violation::NotUnderdamped { index: 3, .. })));
        assert!(v.contains(&Violation::NonPositiveMass { index: 4 }));
        assert!(v.contains(&Violation::DuplicateResonator { index: 4 }));
    }

    #[test]
    fn coupling_invariants() {
        let rs = fixture_resonators(1.0);
        let mut bad_pump = CouplingSpec::between(&rs[0], &rs[1], 1.0);
        bad_pump.pump_freq *= 1.5;
        let cs = vec![
            bad_pump,
            CouplingSpec {
                a: 3,
                b: 3,
                strength: 1.0,
                pump_freq: 0.0,
            },
            CouplingSpec {
                a: 4,
                b: 12,
                strength: 1.0,
                pump_freq: 0.0,
            },
            CouplingSpec::between(&rs[4], &rs[5], -1.0),
        ];
        let v = validate_network(&Network::new(rs).with_couplings(cs));
        assert!(v
            .iter()
            .any(|x| matches!(x, Violation::PumpMismatch { a: 1, b: 2, .. })));
        assert!(v.contains(&Violation::SelfCoupling { index: 3 }));
        assert!(v.contains(&Violation::UnknownResonator {
            a: 4,
            b: 12,
            missing: 12
        }));
        assert!(v.contains(&Violation::NegativeStrength { a: 5, b: 6 }));
    }

    #[test]
    fn chain_must_match_couplings() {
        let rs = fixture_resonators(1.0);
        let cs = vec![
            CouplingSpec::between(&rs[1], &rs[3], 1.0),
            CouplingSpec::between(&rs[3], &rs[5], 1.0),
            CouplingSpec::between(&rs[0], &rs[2], 1.0),
        ];
        let n = Network::new(rs)
            .with_couplings(cs)
            .with_chain(vec![2, 4, 6, 8, 4, 9]);
        let v = validate_network(&n);
        assert!(v.contains(&Violation::ChainMissingEdge { a: 6, b: 8 }));
        assert!(v.contains(&Violation::OffChainCoupling { a: 1, b: 3 }));
        assert!(v.contains(&Violation::ChainRepeatedSite { index: 4 }));
        assert!(v.contains(&Violation::ChainUnknownSite { index: 9 }));
    }

    #[test]
    fn validation_is_pure() {
        let mut n = path8();
        n.couplings.push(n.couplings[3]);
        assert_eq!(validate_network(&n), validate_network(&n));
    }

    #[test]
    fn schedule_rejects_empty_and_nonpositive() {
        assert!(Schedule::<f64>::new(vec![]).is_err());
        assert!(Segment::<f64>::new(vec![], 0.0).is_err());
        let s = Schedule::new(vec![
            Segment::new(vec![], 0.5).unwrap(),
            Segment::new(vec![], 0.25).unwrap(),
        ])
        .unwrap();
        assert_eq!(s.total_duration(), 0.75);
        assert_eq!(s.boundaries(), vec![0.5, 0.75]);
    }

    #[test]
    fn fixture_spans_published_band() {
        let rs = fixture_resonators(1.0f64);
        let f: Vec<f64> = rs.iter().map(|r| r.omega / std::f64::consts::TAU).collect();
        assert!((f[0] - 860e3).abs() < 1e-6 && (f[7] - 902e3).abs() < 1e-6);
        let scaled = fixture_resonators(64.0f64);
        let lo = scaled[0].omega / std::f64::consts::TAU;
        let hi = scaled[7].omega / std::f64::consts::TAU;
        assert!(lo > 13e3 && hi < 14.1e3);
    }
}
