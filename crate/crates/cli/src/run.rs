//! Executes a validated [`ExperimentConfig`] and collects a [`ResultBundle`].

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::path::PathBuf;
use std::time::Instant;

use num_complex::Complex;
use sha2::{Digest, Sha256};

use resonet::full::{compare_with_rwa, run_full_pst, Integrator, PstRunConfig};
use resonet::lockin::default_time_constant;
use resonet::model::fixture_resonators;
use resonet::rwa::{
    apply_damping_envelope, build_coupling_matrix, evolve_schedule, phase_at, transfer_fidelity,
};
use resonet::spectrum::{detuning_grid, eigenvalues, frequency_response, peak_positions, Damping};
use resonet::synthesis::{
    calibration_residual_rms, coupling_from_voltage, fit_calibration, is_strong_coupling,
    mirror_index, parity_phase, pst_couplings, voltage_for_coupling,
};
use resonet::{
    CalibrationPoint, CouplingSpec, EnvelopeState, EnvelopeTrajectory, Network, ResonatorSpec,
    Schedule, Segment,
};

use crate::config::{
    to_canonical_toml, ConfigErrors, CouplingEntry, ExperimentConfig, IntegratorName, Mode,
};
use crate::output::{scalar, Metadata, ResultBundle, Scalar, Table};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(ConfigErrors),
    #[error("{0}")]
    Invalid(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{context}: {source}")]
    Model {
        context: String,
        source: resonet::Error,
    },
}

impl CliError {
    /// 2 for numerical failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Model { source, .. } if source.is_numerical() => 2,
            _ => 1,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

trait Context<T> {
    fn context(self, what: &str) -> Result<T>;
}

impl<T> Context<T> for resonet::Result<T> {
    fn context(self, what: &str) -> Result<T> {
        self.map_err(|source| CliError::Model {
            context: what.to_string(),
            source,
        })
    }
}

type Summary = BTreeMap<String, Scalar>;
type Params = BTreeMap<String, Scalar>;

/// Runs the experiment. Deterministic apart from `metadata.wall_time_s`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultBundle> {
    let mode = cfg
        .mode
        .ok_or_else(|| CliError::Invalid("config has no mode".into()))?;
    let started = Instant::now();
    let mut params = Params::new();
    if let Some(c) = cfg.c0_hz {
        params.insert("c0_hz".into(), scalar(c, "Hz"));
        params.insert("c0_rad_s".into(), scalar(TAU * c, "rad/s"));
    }
    if let Some(g) = cfg.gamma_hz {
        params.insert("gamma_hz".into(), scalar(g, "Hz"));
        params.insert("gamma_rad_s".into(), scalar(TAU * g, "rad/s"));
    }
    if let Some(n) = crate::config::chain_len(cfg) {
        params.insert("n".into(), scalar(n as f64, "1"));
    }
    let (summary, tables) = match mode {
        Mode::Synth => synth(cfg, &mut params)?,
        Mode::EvolveRwa => evolve_rwa(cfg, &mut params)?,
        Mode::EvolveFull => evolve_full(cfg, &mut params)?,
        Mode::Spectrum => spectrum(cfg, &mut params)?,
        Mode::Parity => parity(cfg, &mut params)?,
        Mode::Calibrate => calibrate(cfg, &mut params)?,
    };
    let hash = Sha256::digest(to_canonical_toml(cfg).as_bytes());
    Ok(ResultBundle {
        metadata: Metadata {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            mode: mode.name().into(),
            config_sha256: hash.iter().map(|b| format!("{b:02x}")).collect(),
            wall_time_s: started.elapsed().as_secs_f64(),
            parameters: params,
        },
        summary,
        tables,
    })
}

fn resonators(cfg: &ExperimentConfig) -> Vec<ResonatorSpec> {
    let mut rs: Vec<ResonatorSpec> = match &cfg.resonators {
        Some(list) => list
            .iter()
            .map(|r| {
                let s = ResonatorSpec::from_hz(r.index, r.freq_hz, r.gamma_hz);
                match r.mass {
                    Some(m) => s.with_mass(m),
                    None => s,
                }
            })
            .collect(),
        None => fixture_resonators(1.0),
    };
    if let Some(g) = cfg.gamma_hz {
        for r in &mut rs {
            r.gamma = TAU * g;
        }
    }
    rs
}

fn chain(cfg: &ExperimentConfig, rs: &[ResonatorSpec]) -> Result<Vec<usize>> {
    if let Some(c) = &cfg.chain {
        return Ok(c.clone());
    }
    let n = cfg
        .n
        .ok_or_else(|| CliError::Invalid("need `n` or `chain`".into()))?;
    let mut idx: Vec<usize> = rs.iter().map(|r| r.index).collect();
    idx.sort_unstable();
    if idx.len() < n {
        return Err(CliError::Invalid(format!(
            "chain of length {n} needs {n} resonators, {} defined",
            idx.len()
        )));
    }
    idx.truncate(n);
    Ok(idx)
}

fn explicit_couplings(list: &[CouplingEntry], rs: &[ResonatorSpec]) -> Result<Vec<CouplingSpec>> {
    list.iter()
        .map(|c| {
            let find = |i: usize| {
                rs.iter()
                    .find(|r| r.index == i)
                    .ok_or_else(|| CliError::Invalid(format!("resonator R{i} does not exist")))
            };
            Ok(CouplingSpec::between(
                find(c.a)?,
                find(c.b)?,
                TAU * c.strength_hz,
            ))
        })
        .collect()
}

/// Network without couplings plus the couplings of the static configuration.
/// Explicit couplings without a chain keep only the resonators they touch.
fn base_network(cfg: &ExperimentConfig) -> Result<Network> {
    let rs = resonators(cfg);
    match &cfg.couplings {
        Some(list) => {
            let cs = explicit_couplings(list, &rs)?;
            match &cfg.chain {
                Some(c) => Ok(Network::new(rs).with_couplings(cs).with_chain(c.clone())),
                None => {
                    let touched: Vec<ResonatorSpec> = rs
                        .into_iter()
                        .filter(|r| cs.iter().any(|c| c.touches(r.index)))
                        .collect();
                    Ok(Network::new(touched).with_couplings(cs))
                }
            }
        }
        None => {
            let c = chain(cfg, &rs)?;
            let mut net = Network::new(rs).with_chain(c.clone());
            if let Some(c0) = cfg.c0_hz {
                let profile = pst_couplings(c.len(), TAU * c0).context("coupling synthesis")?;
                net.couplings = profile
                    .couplings_along(&net.resonators, &c)
                    .context("coupling synthesis")?;
            }
            Ok(net)
        }
    }
}

fn pst_period(cfg: &ExperimentConfig) -> Option<f64> {
    cfg.c0_hz.map(|c| 1.0 / c)
}

fn site_columns(mut t: Table, n: usize, rows: &[&[Complex<f64>]], prefix: &str) -> Table {
    for j in 0..n {
        t = t
            .column(
                &format!("{prefix}site_{}_re", j + 1),
                "a.u.",
                rows.iter().map(|x| x[j].re).collect(),
            )
            .column(
                &format!("{prefix}site_{}_im", j + 1),
                "a.u.",
                rows.iter().map(|x| x[j].im).collect(),
            );
    }
    t
}

fn state_table(name: &str, states: &[EnvelopeState]) -> Table {
    let n = states.first().map_or(0, |s| s.len());
    let rows: Vec<&[Complex<f64>]> = states.iter().map(|s| s.amplitudes.as_slice()).collect();
    let t = Table::new(name).column("time_s", "s", states.iter().map(|s| s.time).collect());
    site_columns(t, n, &rows, "")
}

fn synth(cfg: &ExperimentConfig, params: &mut Params) -> Result<(Summary, Vec<Table>)> {
    let c0_hz = cfg
        .c0_hz
        .ok_or_else(|| CliError::Invalid("synth needs c0_hz".into()))?;
    let n =
        crate::config::chain_len(cfg).ok_or_else(|| CliError::Invalid("synth needs n".into()))?;
    let profile = pst_couplings(n, TAU * c0_hz).context("coupling synthesis")?;
    let hz: Vec<f64> = profile.couplings.iter().map(|c| c / TAU).collect();
    let mut table = Table::new("couplings")
        .column("edge", "1", (1..n).map(|j| j as f64).collect())
        .column("coupling_hz", "Hz", hz.clone())
        .column("coupling_rad_s", "rad/s", profile.couplings.clone());

    let rs = resonators(cfg);
    if let Ok(c) = chain(cfg, &rs) {
        if let Ok(cs) = profile.couplings_along(&rs, &c) {
            table = table
                .column("resonator_a", "1", cs.iter().map(|s| s.a as f64).collect())
                .column("resonator_b", "1", cs.iter().map(|s| s.b as f64).collect())
                .column(
                    "pump_freq_hz",
                    "Hz",
                    cs.iter().map(|s| s.pump_freq / TAU).collect(),
                );
        }
    }
    let mut summary = Summary::new();
    if let Some(s) = &cfg.synth {
        if let (Some(v_dc), Some(alpha)) = (s.v_dc, s.alpha_hz_per_v2) {
            let cal = resonet::VoltageCalibration::new(alpha).context("voltage calibration")?;
            let v: Vec<f64> = profile
                .couplings
                .iter()
                .map(|&c| voltage_for_coupling(&cal, v_dc, c))
                .collect::<resonet::Result<_>>()
                .context("pump voltages")?;
            summary.insert(
                "max_v_ac".into(),
                scalar(v.iter().cloned().fold(0.0, f64::max), "V"),
            );
            table = table.column("v_ac_v", "V", v);
            params.insert("v_dc".into(), scalar(v_dc, "V"));
            params.insert("alpha_hz_per_v2".into(), scalar(alpha, "Hz/V^2"));
        }
    }
    summary.insert("period_s".into(), scalar(profile.period, "s"));
    summary.insert("c0_hz".into(), scalar(c0_hz, "Hz"));
    summary.insert(
        "max_coupling_hz".into(),
        scalar(hz.iter().cloned().fold(0.0, f64::max), "Hz"),
    );
    Ok((summary, vec![table]))
}

fn build_schedule(cfg: &ExperimentConfig, net: &Network) -> Result<Schedule> {
    let e = cfg.evolve.clone().unwrap_or_default();
    let segments = match &cfg.schedule {
        Some(list) => {
            let n = net
                .chain_order
                .as_ref()
                .map(|c| c.len())
                .ok_or_else(|| CliError::Invalid("schedule needs `n` or `chain`".into()))?;
            list.iter()
                .enumerate()
                .map(|(k, s)| {
                    let what = format!("schedule segment {}", k + 1);
                    match (s.c0_hz, &s.couplings) {
                        (Some(c0), _) => {
                            let profile = pst_couplings(n, TAU * c0).context(&what)?;
                            let cs = profile
                                .couplings_along(
                                    &net.resonators,
                                    net.chain_order.as_ref().expect("checked"),
                                )
                                .context(&what)?;
                            let d = s
                                .duration_s
                                .unwrap_or(s.periods.unwrap_or(1.0) * profile.period);
                            Segment::new(cs, d).context(&what)
                        }
                        (None, Some(list)) => {
                            let cs = explicit_couplings(list, &net.resonators)?;
                            Segment::new(cs, s.duration_s.unwrap_or(0.0)).context(&what)
                        }
                        (None, None) => Err(CliError::Invalid(format!("{what}: no couplings"))),
                    }
                })
                .collect::<Result<Vec<_>>>()?
        }
        None => {
            let d = e
                .t_span_s
                .or_else(|| pst_period(cfg))
                .ok_or_else(|| CliError::Invalid("evolve.t_span_s is required".into()))?;
            vec![Segment::new(net.couplings.clone(), d).context("segment")?]
        }
    };
    Schedule::new(segments).context("schedule")
}

fn best_site(s: &EnvelopeState) -> (usize, f64) {
    let total: f64 = s.amplitudes.iter().map(|z| z.norm_sqr()).sum();
    s.amplitudes
        .iter()
        .enumerate()
        .map(|(k, z)| (k + 1, z.norm_sqr() / total))
        .fold((0, -1.0), |a, b| if b.1 > a.1 { b } else { a })
}

fn evolve_rwa(cfg: &ExperimentConfig, params: &mut Params) -> Result<(Summary, Vec<Table>)> {
    let e = cfg.evolve.clone().unwrap_or_default();
    let net = base_network(cfg)?;
    let schedule = build_schedule(cfg, &net)?;
    let first = Network {
        couplings: schedule.segments()[0].couplings.clone(),
        ..net.clone()
    };
    let n = build_coupling_matrix(&first)
        .context("coupling matrix")?
        .dim();
    let launch = e.launch.unwrap_or(1);
    let target = match e.target {
        Some(t) => t,
        None => mirror_index(launch, n).context("target site")?,
    };
    let total = schedule.total_duration();
    let sample_dt = e.sample_dt_s.unwrap_or(total / 1000.0);
    let x0 = EnvelopeState::basis(n, launch).context("initial state")?;
    let mut traj: EnvelopeTrajectory =
        evolve_schedule(&net, &schedule, &x0, sample_dt).context("envelope evolution")?;
    if let Some(g) = e.damping_hz {
        traj = apply_damping_envelope(&traj, TAU * g).context("damping envelope")?;
        params.insert("damping_rad_s".into(), scalar(TAU * g, "rad/s"));
    }
    let boundaries = schedule.boundaries();
    let t_eval = e.t_eval_s.unwrap_or(boundaries[0]);
    params.insert("sample_dt_s".into(), scalar(sample_dt, "s"));
    params.insert("launch_site".into(), scalar(launch as f64, "1"));

    let mut event_times = vec![0.0, t_eval];
    event_times.extend(&boundaries);
    let events: Vec<EnvelopeState> = event_times
        .iter()
        .map(|&t| traj.state_at(t))
        .collect::<resonet::Result<_>>()
        .context("event snapshot")?;

    let mut summary = Summary::new();
    let fid = transfer_fidelity(&traj, launch, target, t_eval).context("fidelity")?;
    summary.insert("fidelity_at_target".into(), scalar(fid, "1"));
    summary.insert("target_site".into(), scalar(target as f64, "1"));
    summary.insert("t_eval_s".into(), scalar(t_eval, "s"));
    summary.insert("total_time_s".into(), scalar(total, "s"));
    if let Some(p) = pst_period(cfg).filter(|_| cfg.schedule.is_none()) {
        summary.insert("period_s".into(), scalar(p, "s"));
    }
    for (k, s) in events[2..].iter().enumerate() {
        let (site, f) = best_site(s);
        summary.insert(format!("segment_{}_end_s", k + 1), scalar(s.time, "s"));
        summary.insert(
            format!("segment_{}_best_site", k + 1),
            scalar(site as f64, "1"),
        );
        summary.insert(format!("segment_{}_best_fidelity", k + 1), scalar(f, "1"));
    }
    Ok((
        summary,
        vec![
            state_table("trajectory", &traj.states),
            state_table("events", &events),
        ],
    ))
}

fn evolve_full(cfg: &ExperimentConfig, params: &mut Params) -> Result<(Summary, Vec<Table>)> {
    let f = cfg.full.clone().unwrap_or_default();
    let net = base_network(cfg)?;
    let mut run_cfg = PstRunConfig::new(f.launch.unwrap_or(1), f.scale.unwrap_or(1.0));
    if let Some(p) = f.periods {
        run_cfg.periods = p;
    }
    if let Some(a) = f.pulse_amplitude {
        run_cfg.pulse_amplitude = a;
    }
    if let Some(d) = f.pulse_duration_s {
        run_cfg.pulse_duration = d;
    }
    run_cfg.dt = f.dt_s;
    if let Some(d) = f.output_decimation {
        run_cfg.output_decimation = d;
    }
    if let Some(r) = f.reaction_terms {
        run_cfg.reaction_terms = r;
    }
    run_cfg.integrator = match f.integrator {
        Some(IntegratorName::ClassicRk4) => Integrator::ClassicRk4,
        _ => Integrator::IntegratingFactorRk4,
    };
    let tau = f.time_constant_s.unwrap_or_else(default_time_constant);
    let run = run_full_pst(&net, &run_cfg).context("full equations of motion")?;
    let cmp = compare_with_rwa(&run, tau).context("lock-in comparison")?;

    let n = cmp.measured.len();
    let launch = run_cfg.launch;
    let target = mirror_index(launch, n).context("target site")?;
    let t1 = run.pumps_on + run.period;
    let t2 = run.pumps_on + 2.0 * run.period;
    let mean_freq = run.network.resonators.iter().map(|r| r.omega).sum::<f64>()
        / run.network.resonators.len() as f64
        / TAU;
    params.insert("scale".into(), scalar(run_cfg.scale, "1"));
    params.insert("time_constant_s".into(), scalar(tau, "s"));
    params.insert("mean_freq_hz".into(), scalar(mean_freq, "Hz"));
    params.insert("mean_omega_rad_s".into(), scalar(TAU * mean_freq, "rad/s"));
    params.insert("output_dt_s".into(), scalar(run.trajectory.output_dt, "s"));

    let stride = f.table_stride.unwrap_or(1);
    let picks: Vec<usize> = (0..cmp.times.len()).step_by(stride).collect();
    let column = |rows: &[Vec<Complex<f64>>], ks: &[usize]| -> Vec<Vec<Complex<f64>>> {
        ks.iter()
            .map(|&k| rows.iter().map(|r| r[k]).collect())
            .collect()
    };
    let times: Vec<f64> = picks.iter().map(|&k| cmp.times[k]).collect();
    let table_of = |name: &str, rows: &[Vec<Complex<f64>>], ks: &[usize], ts: Vec<f64>| {
        let data = column(rows, ks);
        let refs: Vec<&[Complex<f64>]> = data.iter().map(|v| v.as_slice()).collect();
        site_columns(Table::new(name).column("time_s", "s", ts), n, &refs, "")
    };
    let envelope = table_of("envelope", &cmp.measured, &picks, times.clone());
    let reference = table_of("reference", &cmp.reference, &picks, times);

    let ch = &cmp.channels[0];
    let event_k: Vec<usize> = [cmp.transient_until, t1, t2]
        .iter()
        .map(|&t| ch.index_at(t))
        .collect::<resonet::Result<_>>()
        .context("event sample")?;
    let ev_times: Vec<f64> = event_k.iter().map(|&k| cmp.times[k]).collect();
    let measured_ev = column(&cmp.measured, &event_k);
    let reference_ev = column(&cmp.reference, &event_k);
    let m_refs: Vec<&[Complex<f64>]> = measured_ev.iter().map(|v| v.as_slice()).collect();
    let r_refs: Vec<&[Complex<f64>]> = reference_ev.iter().map(|v| v.as_slice()).collect();
    let events = site_columns(
        site_columns(
            Table::new("events").column("time_s", "s", ev_times),
            n,
            &m_refs,
            "",
        ),
        n,
        &r_refs,
        "reference_",
    );

    let mut summary = Summary::new();
    summary.insert(
        "max_magnitude_error".into(),
        scalar(cmp.max_magnitude_error, "1"),
    );
    summary.insert("max_error".into(), scalar(cmp.max_error, "1"));
    summary.insert("peak_amplitude".into(), scalar(cmp.peak, "a.u."));
    summary.insert("transient_until_s".into(), scalar(cmp.transient_until, "s"));
    summary.insert("pumps_on_s".into(), scalar(run.pumps_on, "s"));
    summary.insert("period_s".into(), scalar(run.period, "s"));
    summary.insert("launch_site".into(), scalar(launch as f64, "1"));
    summary.insert("target_site".into(), scalar(target as f64, "1"));
    summary.insert(
        "fidelity_at_target_T".into(),
        scalar(cmp.measured_fidelity(target, t1).context("fidelity")?, "1"),
    );
    summary.insert(
        "reference_fidelity_at_target_T".into(),
        scalar(cmp.reference_fidelity(target, t1).context("fidelity")?, "1"),
    );
    summary.insert(
        "fidelity_at_launch_2T".into(),
        scalar(cmp.measured_fidelity(launch, t2).context("fidelity")?, "1"),
    );
    summary.insert(
        "phase_shift_2T_rad".into(),
        scalar(cmp.phase_shift(launch, t2).context("phase shift")?, "rad"),
    );
    Ok((summary, vec![envelope, reference, events]))
}

fn spectrum(cfg: &ExperimentConfig, params: &mut Params) -> Result<(Summary, Vec<Table>)> {
    let s = cfg.spectrum.clone().unwrap_or_default();
    let net = base_network(cfg)?;
    let h = build_coupling_matrix(&net).context("coupling matrix")?;
    let n = h.dim();
    let drive = s.drive.unwrap_or(1);
    let probe = s.probe.unwrap_or(1);
    let probe_res = net
        .require(h.sites()[probe - 1])
        .context("probe resonator")?;
    let (damping, gamma) = match s.gamma_hz {
        Some(g) => (Damping::Uniform(TAU * g), TAU * g),
        None => {
            let per_site: Vec<f64> = h
                .sites()
                .iter()
                .map(|&i| net.require(i).map(|r| r.gamma))
                .collect::<resonet::Result<_>>()
                .context("damping")?;
            (Damping::PerSite(per_site), probe_res.gamma)
        }
    };
    if !(gamma > 0.0) {
        return Err(CliError::Invalid(
            "spectrum needs a non-zero linewidth; set spectrum.gamma_hz or resonator damping"
                .into(),
        ));
    }
    let ev = eigenvalues(&h).context("eigenvalues")?;
    let expected: Vec<f64> = ev.iter().map(|l| l / 2.0 / TAU).collect();
    let (start_hz, stop_hz) = match (s.start_hz, s.stop_hz) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            let reach = expected.iter().fold(0.0f64, |m, x| m.max(x.abs())) + 5.0 * gamma / TAU;
            (-reach, reach)
        }
    };
    let points = s
        .points
        .unwrap_or_else(|| ((stop_hz - start_hz) / (gamma / TAU / 40.0)).ceil() as usize + 1);
    let grid = detuning_grid(TAU * start_hz, TAU * stop_hz, points).context("detuning grid")?;
    let curve =
        frequency_response(&h, &damping, drive, probe, &grid).context("frequency response")?;
    let peaks: Vec<f64> = peak_positions(&curve).iter().map(|p| p / TAU).collect();
    params.insert("linewidth_hz".into(), scalar(gamma / TAU, "Hz"));
    params.insert("linewidth_rad_s".into(), scalar(gamma, "rad/s"));
    params.insert("points".into(), scalar(points as f64, "1"));

    let gaps: Vec<f64> = peaks.windows(2).map(|w| w[1] - w[0]).collect();
    let mut summary = Summary::new();
    summary.insert("peak_count".into(), scalar(peaks.len() as f64, "1"));
    summary.insert("eigenvalue_count".into(), scalar(n as f64, "1"));
    if !gaps.is_empty() {
        let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
        let var = gaps.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / gaps.len() as f64;
        summary.insert("mean_spacing_hz".into(), scalar(mean, "Hz"));
        summary.insert("spacing_rel_std".into(), scalar(var.sqrt() / mean, "1"));
    }
    if !peaks.is_empty() {
        let worst = expected
            .iter()
            .map(|x| {
                peaks
                    .iter()
                    .map(|p| (p - x).abs())
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max);
        summary.insert("max_peak_deviation_hz".into(), scalar(worst, "Hz"));
    }

    let response = Table::new("response")
        .column(
            "detuning_hz",
            "Hz",
            curve.detunings.iter().map(|d| d / TAU).collect(),
        )
        .column("magnitude", "a.u.", curve.magnitudes.clone());
    let eig = Table::new("eigenvalues")
        .column("index", "1", (1..=n).map(|k| k as f64).collect())
        .column("eigenvalue_hz", "Hz", ev.iter().map(|l| l / TAU).collect())
        .column("expected_peak_hz", "Hz", expected);
    let peak_table = Table::new("peaks")
        .column("index", "1", (1..=peaks.len()).map(|k| k as f64).collect())
        .column("detuning_hz", "Hz", peaks);
    Ok((summary, vec![response, eig, peak_table]))
}

fn parity(cfg: &ExperimentConfig, params: &mut Params) -> Result<(Summary, Vec<Table>)> {
    let net = base_network(cfg)?;
    let h = build_coupling_matrix(&net).context("coupling matrix")?;
    let n = h.dim();
    let period = pst_period(cfg).ok_or_else(|| CliError::Invalid("parity needs c0_hz".into()))?;
    let t2 = 2.0 * period;
    let launches = cfg
        .parity
        .as_ref()
        .and_then(|p| p.launches.clone())
        .unwrap_or_else(|| (1..=n).collect());
    let schedule = Schedule::new(vec![
        Segment::new(net.couplings.clone(), t2).context("segment")?
    ])
    .context("schedule")?;
    let expected = parity_phase::<f64>(n);
    params.insert("expected_phase_rad".into(), scalar(expected, "rad"));

    let mut cols: [Vec<f64>; 7] = Default::default();
    let mut summary = Summary::new();
    for &l in &launches {
        let x0 = EnvelopeState::basis(n, l).context("initial state")?;
        let traj =
            evolve_schedule(&net, &schedule, &x0, period / 100.0).context("envelope evolution")?;
        let z0 = traj.state_at(0.0).context("snapshot")?.amplitudes[l - 1];
        let z2 = traj.state_at(t2).context("snapshot")?.amplitudes[l - 1];
        let phase = phase_at(&traj, l, t2).context("phase")?;
        let fid = transfer_fidelity(&traj, l, l, t2).context("fidelity")?;
        for (c, v) in cols
            .iter_mut()
            .zip([l as f64, z0.re, z0.im, z2.re, z2.im, phase, fid])
        {
            c.push(v);
        }
        summary.insert(format!("launch_{l}_phase_shift_rad"), scalar(phase, "rad"));
        summary.insert(format!("launch_{l}_return_fidelity"), scalar(fid, "1"));
    }
    if let Some(&first) = cols[5].first() {
        summary.insert("phase_shift_2T_rad".into(), scalar(first, "rad"));
    }
    let worst = cols[5]
        .iter()
        .map(|p| resonet::scalar::phase_distance(*p, expected))
        .fold(0.0, f64::max);
    summary.insert("max_phase_error_rad".into(), scalar(worst, "rad"));
    summary.insert("period_s".into(), scalar(period, "s"));
    let [site, re0, im0, re2, im2, ph, fid] = cols;
    let table = Table::new("parity")
        .column("launch_site", "1", site)
        .column("amplitude_0_re", "a.u.", re0)
        .column("amplitude_0_im", "a.u.", im0)
        .column("amplitude_2T_re", "a.u.", re2)
        .column("amplitude_2T_im", "a.u.", im2)
        .column("phase_shift_rad", "rad", ph)
        .column("return_fidelity", "1", fid);
    Ok((summary, vec![table]))
}

fn calibrate(cfg: &ExperimentConfig, params: &mut Params) -> Result<(Summary, Vec<Table>)> {
    let c = cfg
        .calibrate
        .as_ref()
        .ok_or_else(|| CliError::Invalid("missing section `calibrate`".into()))?;
    let points: Vec<CalibrationPoint> = c
        .points
        .iter()
        .map(|p| CalibrationPoint {
            v_dc: p.v_dc,
            v_ac: p.v_ac,
            coupling: TAU * p.coupling_hz,
        })
        .collect();
    let cal = fit_calibration(&points).context("calibration fit")?;
    let fitted: Vec<f64> = points
        .iter()
        .map(|p| coupling_from_voltage(&cal, p.v_dc, p.v_ac) / TAU)
        .collect();
    let mut summary = Summary::new();
    summary.insert("alpha_hz_per_v2".into(), scalar(cal.alpha, "Hz/V^2"));
    summary.insert(
        "residual_rms_hz".into(),
        scalar(calibration_residual_rms(&cal, &points), "Hz"),
    );
    let pt_table = Table::new("points")
        .column("v_dc_v", "V", c.points.iter().map(|p| p.v_dc).collect())
        .column("v_ac_v", "V", c.points.iter().map(|p| p.v_ac).collect())
        .column(
            "coupling_hz",
            "Hz",
            c.points.iter().map(|p| p.coupling_hz).collect(),
        )
        .column("fitted_hz", "Hz", fitted.clone())
        .column(
            "residual_hz",
            "Hz",
            c.points
                .iter()
                .zip(&fitted)
                .map(|(p, f)| p.coupling_hz - f)
                .collect(),
        );
    let mut tables = vec![pt_table];
    if let Some(lw) = c.linewidth_hz {
        params.insert("linewidth_hz".into(), scalar(lw, "Hz"));
        params.insert("linewidth_rad_s".into(), scalar(TAU * lw, "rad/s"));
    }
    if let Some(qs) = &c.predict {
        let hz: Vec<f64> = qs
            .iter()
            .map(|q| coupling_from_voltage(&cal, q.v_dc, q.v_ac) / TAU)
            .collect();
        for (k, v) in hz.iter().enumerate() {
            summary.insert(
                format!("prediction_{}_coupling_hz", k + 1),
                scalar(*v, "Hz"),
            );
            if let Some(lw) = c.linewidth_hz {
                summary.insert(
                    format!("prediction_{}_ratio_to_linewidth", k + 1),
                    scalar(v / lw, "1"),
                );
                let strong = is_strong_coupling(TAU * v, TAU * lw);
                summary.insert(
                    format!("prediction_{}_strong", k + 1),
                    scalar(f64::from(u8::from(strong)), "1"),
                );
            }
        }
        let mut t = Table::new("predictions")
            .column("v_dc_v", "V", qs.iter().map(|q| q.v_dc).collect())
            .column("v_ac_v", "V", qs.iter().map(|q| q.v_ac).collect())
            .column("coupling_hz", "Hz", hz.clone());
        if let Some(lw) = c.linewidth_hz {
            t = t.column(
                "ratio_to_linewidth",
                "1",
                hz.iter().map(|v| v / lw).collect(),
            );
        }
        tables.push(t);
    }
    Ok((summary, tables))
}
