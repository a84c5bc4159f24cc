//! Perfect-transfer coupling profiles, transfer timing, the parity phase of
//! a round trip, and the linear voltage-to-coupling calibration.

use crate::error::{invalid, Error, Result};
use crate::model::{CouplingSpec, Network, ResonatorSpec};
use crate::scalar::Real;

/// Mirror-periodic coupling profile of an `n`-site chain.
#[derive(Debug, Clone, PartialEq)]
pub struct PstProfile<T> {
    pub n: usize,
    /// Characteristic coupling, rad/s.
    pub c0: T,
    /// `n - 1` edge strengths, rad/s; entry `j - 1` joins sites `j` and `j + 1`.
    pub couplings: Vec<T>,
    /// Transfer period `2 pi / c0`, s.
    pub period: T,
}

impl<T: Real> PstProfile<T> {
    /// Edge strength between 1-based sites `j` and `j + 1`.
    pub fn edge(&self, j: usize) -> T {
        self.couplings[j - 1]
    }

    /// Couplings along `chain` (1-based resonator indices, in chain order).
    pub fn couplings_along(
        &self,
        resonators: &[ResonatorSpec<T>],
        chain: &[usize],
    ) -> Result<Vec<CouplingSpec<T>>> {
        if chain.len() != self.n {
            return Err(invalid(format!(
                "chain has {} sites but the profile is for {}",
                chain.len(),
                self.n
            )));
        }
        let find = |idx: usize| {
            resonators
                .iter()
                .find(|r| r.index == idx)
                .ok_or_else(|| invalid(format!("chain references unknown resonator R{idx}")))
        };
        chain
            .windows(2)
            .zip(&self.couplings)
            .map(|(w, &c)| Ok(CouplingSpec::between(find(w[0])?, find(w[1])?, c)))
            .collect()
    }

    /// Builds a chain network realizing this profile.
    pub fn network(
        &self,
        resonators: Vec<ResonatorSpec<T>>,
        chain: Vec<usize>,
    ) -> Result<Network<T>> {
        let couplings = self.couplings_along(&resonators, &chain)?;
        Ok(Network::new(resonators)
            .with_couplings(couplings)
            .with_chain(chain))
    }
}

/// Couplings `(c0 / 2) sqrt(j (n - j))` for `j = 1..n-1`.
pub fn pst_couplings<T: Real>(n: usize, c0: T) -> Result<PstProfile<T>> {
    if n < 2 {
        return Err(invalid(format!("chain length must be >= 2, got {n}")));
    }
    let period = transfer_period(c0)?;
    let half = c0 / T::lit(2.0);
    // j (n - j) is symmetric in j <-> n - j as an integer, so mirrored edges
    // evaluate the identical floating-point expression.
    let couplings = (1..n)
        .map(|j| half * T::from_usize_lossy(j * (n - j)).sqrt())
        .collect();
    Ok(PstProfile {
        n,
        c0,
        couplings,
        period,
    })
}

/// Transfer period `2 pi / c0` of the envelope equation `2 i dX/dt = H X`.
pub fn transfer_period<T: Real>(c0: T) -> Result<T> {
    if !(c0 > T::zero()) || !c0.is_finite() {
        return Err(invalid("characteristic coupling must be positive"));
    }
    Ok(T::TAU() / c0)
}

/// Site that receives the excitation launched at `j` after one period.
pub fn mirror_index(j: usize, n: usize) -> Result<usize> {
    if j == 0 || j > n {
        return Err(invalid(format!("site {j} outside 1..={n}")));
    }
    Ok(n - j + 1)
}

/// Phase picked up at the launch site over a forward-and-back cycle:
/// `pi` for even `n`, `0` for odd `n`.
pub fn parity_phase<T: Real>(n: usize) -> T {
    if n.is_multiple_of(2) {
        T::PI()
    } else {
        T::zero()
    }
}

/// `coupling / 2 pi = alpha * v_dc * v_ac`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoltageCalibration<T> {
    /// Hz per V^2.
    pub alpha: T,
}

impl<T: Real> VoltageCalibration<T> {
    pub fn new(alpha: T) -> Result<Self> {
        if !(alpha > T::zero()) || !alpha.is_finite() {
            return Err(invalid("calibration coefficient must be positive"));
        }
        Ok(Self { alpha })
    }
}

/// One measured operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationPoint<T> {
    pub v_dc: T,
    pub v_ac: T,
    /// Coupling, rad/s.
    pub coupling: T,
}

/// Least-squares fit of `coupling / 2 pi = alpha v_dc v_ac` through the origin.
pub fn fit_calibration<T: Real>(points: &[CalibrationPoint<T>]) -> Result<VoltageCalibration<T>> {
    if points.is_empty() {
        return Err(Error::DegenerateFit("no calibration points".into()));
    }
    let (mut sxx, mut sxy) = (T::zero(), T::zero());
    for p in points {
        let x = p.v_dc * p.v_ac;
        sxx += x * x;
        sxy += x * p.coupling / T::TAU();
    }
    if !(sxx > T::zero()) {
        return Err(Error::DegenerateFit(
            "every point has zero v_dc * v_ac".into(),
        ));
    }
    VoltageCalibration::new(sxy / sxx)
        .map_err(|_| Error::DegenerateFit("fitted coefficient is not positive".into()))
}

/// Root-mean-square residual of a fit, Hz.
pub fn calibration_residual_rms<T: Real>(
    cal: &VoltageCalibration<T>,
    points: &[CalibrationPoint<T>],
) -> T {
    if points.is_empty() {
        return T::zero();
    }
    let ss: T = points
        .iter()
        .map(|p| {
            let r = p.coupling / T::TAU() - cal.alpha * p.v_dc * p.v_ac;
            r * r
        })
        .sum();
    (ss / T::from_usize_lossy(points.len())).sqrt()
}

/// Coupling (rad/s) produced by the given bias and pump voltages.
pub fn coupling_from_voltage<T: Real>(cal: &VoltageCalibration<T>, v_dc: T, v_ac: T) -> T {
    T::TAU() * cal.alpha * v_dc * v_ac
}

/// Pump voltage needed for `coupling` (rad/s) at bias `v_dc`.
pub fn voltage_for_coupling<T: Real>(
    cal: &VoltageCalibration<T>,
    v_dc: T,
    coupling: T,
) -> Result<T> {
    if !(v_dc > T::zero()) {
        return Err(invalid("bias voltage must be positive"));
    }
    if !(coupling >= T::zero()) {
        return Err(invalid("coupling must be non-negative"));
    }
    Ok(coupling / T::TAU() / (cal.alpha * v_dc))
}

/// Strong coupling means the coupling exceeds the damping rate.
pub fn is_strong_coupling<T: Real>(coupling: T, gamma: T) -> bool {
    coupling > gamma
}
