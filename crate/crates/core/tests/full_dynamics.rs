use std::f64::consts::{PI, TAU};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use resonet::full::{
    compare_with_rwa, evolve_full, run_full_pst, total_energy, EnvelopeComparison, FullProblem,
    PstRunConfig,
};
use resonet::lockin::default_time_constant;
use resonet::model::fixture_resonators;
use resonet::scalar::phase_distance;
use resonet::synthesis::pst_couplings;
use resonet::{Network, ResonatorSpec};

fn nnn_network() -> Network {
    pst_couplings(4, TAU * 52.0)
        .unwrap()
        .network(fixture_resonators(1.0), vec![2, 4, 6, 8])
        .unwrap()
        .with_uniform_gamma(0.0)
}

fn compare(scale: f64, launch: usize, reaction_terms: bool) -> EnvelopeComparison<f64> {
    let mut cfg = PstRunConfig::new(launch, scale);
    cfg.reaction_terms = reaction_terms;
    let run = run_full_pst(&nnn_network(), &cfg).unwrap();
    compare_with_rwa(&run, default_time_constant()).unwrap()
}

/// Largest difference of peak-normalized amplitudes, sampled every 0.1 ms.
fn envelope_distance(a: &EnvelopeComparison<f64>, b: &EnvelopeComparison<f64>) -> f64 {
    let end = a.times.last().unwrap().min(*b.times.last().unwrap());
    let mut worst = 0.0f64;
    let mut t = a.transient_until.max(b.transient_until);
    while t <= end {
        let ka = a.channels[0].index_at(t).unwrap();
        let kb = b.channels[0].index_at(t).unwrap();
        for s in 0..a.measured.len() {
            let d = a.measured[s][ka].norm() / a.peak - b.measured[s][kb].norm() / b.peak;
            worst = worst.max(d.abs());
        }
        t += 1e-4;
    }
    worst
}

#[test]
fn energy_conserved_without_pumps() {
    let mut rng = StdRng::seed_from_u64(11);
    for _ in 0..6 {
        let n = rng.gen_range(1..=4);
        let rs: Vec<ResonatorSpec> = (1..=n)
            .map(|j| ResonatorSpec::from_hz(j, rng.gen_range(1e3..2e4), 0.0))
            .collect();
        let mut p = FullProblem::new(rs.clone(), 0.0);
        p.t_span = 1e5 * p.dt;
        p.output_decimation = 1000;
        for k in 0..n {
            p.initial.positions[k] = rng.gen_range(-1.0..1.0);
            p.initial.velocities[k] = rng.gen_range(-1.0..1.0) * rs[k].omega;
        }
        let traj = evolve_full(&p).unwrap();
        let e0 = total_energy(&rs, &traj.states[0]);
        for s in &traj.states {
            let drift = (total_energy(&rs, s) - e0).abs() / e0;
            assert!(drift < 1e-8, "drift {drift}");
        }
    }
}

#[test]
fn rwa_equivalence_where_frequency_separation_holds() {
    // scale 16 keeps mean(omega) / c0 above 1e3
    for launch in [1, 2] {
        let cmp = compare(16.0, launch, true);
        assert!(
            cmp.max_magnitude_error < 0.03,
            "launch {launch}: {}",
            cmp.max_magnitude_error
        );
    }
    let cmp = compare(16.0, 1, true);
    let t2 = 2e-3 + 2.0 / 52.0;
    let phase = cmp.phase_shift(1, t2).unwrap();
    assert!(phase_distance(phase, PI) < 0.05, "phase {phase}");
}

#[test]
fn transfer_fidelity_close_to_envelope_model() {
    let cmp = compare(64.0, 1, true);
    let t = 2e-3 + 1.0 / 52.0;
    let f = cmp.measured_fidelity(4, t).unwrap();
    let f_ref = cmp.reference_fidelity(4, t).unwrap();
    assert!((f - f_ref).abs() < 0.03, "{f} vs {f_ref}");
}

#[test]
fn reaction_terms_are_insignificant_at_device_scale() {
    let with = compare(1.0, 1, true);
    let without = compare(1.0, 1, false);
    let d = envelope_distance(&with, &without);
    assert!(d < 0.01, "{d}");
}

#[test]
fn envelopes_independent_of_frequency_scale() {
    // measured distance grows roughly as scale^1.6: 0.13% at 4, 0.41% at 8, 1.2% at 16
    let d = envelope_distance(&compare(1.0, 1, true), &compare(8.0, 1, true));
    assert!(d < 0.01, "{d}");
}

#[test]
#[ignore = "at scale 64 the NNN pump frequency (187.5 Hz) is only ~4x the coupling and the envelope model breaks down (~11%)"]
fn envelopes_agree_between_scale_one_and_sixty_four() {
    let d = envelope_distance(&compare(1.0, 1, true), &compare(64.0, 1, true));
    assert!(d < 0.01, "{d}");
}
