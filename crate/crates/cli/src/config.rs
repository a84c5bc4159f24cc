//! Experiment configuration: schema, strict parsing (TOML or JSON),
//! semantic validation with source positions, canonical serialization.
//!
//! All frequencies are ordinary Hz; sites are 1-based chain positions.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Synth,
    EvolveRwa,
    EvolveFull,
    Spectrum,
    Parity,
    Calibrate,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Synth => "synth",
            Mode::EvolveRwa => "evolve-rwa",
            Mode::EvolveFull => "evolve-full",
            Mode::Spectrum => "spectrum",
            Mode::Parity => "parity",
            Mode::Calibrate => "calibrate",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Toml,
    Json,
}

impl Format {
    /// `.json` means JSON, anything else TOML.
    pub fn from_path(path: &std::path::Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => Format::Json,
            _ => Format::Toml,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    /// Chain length of a perfect-transfer network.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Characteristic coupling `c0 / 2 pi`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c0_hz: Option<f64>,
    /// Resonator indices along the chain; defaults to `1..=n`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain: Option<Vec<usize>>,
    /// Overrides the damping of every resonator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_hz: Option<f64>,
    /// Defaults to the eight-resonator fixture.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resonators: Option<Vec<ResonatorEntry>>,
    /// Explicit couplings instead of `n` / `c0_hz`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub couplings: Option<Vec<CouplingEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Vec<SegmentEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evolve: Option<EvolveParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub full: Option<FullParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<SpectrumParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parity: Option<ParityParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibrate: Option<CalibrateParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResonatorEntry {
    pub index: usize,
    pub freq_hz: f64,
    pub gamma_hz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingEntry {
    pub a: usize,
    pub b: usize,
    pub strength_hz: f64,
}

/// One segment: either a perfect-transfer profile (`c0_hz`) over `periods`
/// transfer periods, or explicit couplings over `duration_s`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c0_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub periods: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub couplings: Option<Vec<CouplingEntry>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthParams {
    /// With `alpha_hz_per_v2`, also report the AC voltage of every edge.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_dc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_hz_per_v2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub launch: Option<usize>,
    /// Site whose fidelity is reported; defaults to the mirror of `launch`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_dt_s: Option<f64>,
    /// Run length without a schedule; defaults to one period.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_span_s: Option<f64>,
    /// Time of the reported fidelity; defaults to the first segment end.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_eval_s: Option<f64>,
    /// Uniform damping envelope applied to the lossless evolution.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub damping_hz: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntegratorName {
    IntegratingFactorRk4,
    ClassicRk4,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FullParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub launch: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub periods: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pulse_amplitude: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pulse_duration_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_constant_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_decimation: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reaction_terms: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integrator: Option<IntegratorName>,
    /// Keep every `table_stride`-th demodulated sample in the envelope table.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table_stride: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drive: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe: Option<usize>,
    /// Linewidth; defaults to the probed resonator's damping.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParityParams {
    /// Defaults to every site.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub launches: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationEntry {
    pub v_dc: f64,
    pub v_ac: f64,
    pub coupling_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VoltageQuery {
    pub v_dc: f64,
    pub v_ac: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateParams {
    #[serde(default)]
    pub points: Vec<CalibrationEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predict: Option<Vec<VoltageQuery>>,
    /// Reference linewidth for the strong-coupling comparison.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linewidth_hz: Option<f64>,
}

/// One parse or validation problem.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Issue {
    /// Dotted location such as `schedule[1].c0_hz`; empty for syntax errors.
    pub path: String,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(l) = self.line {
            write!(f, "line {l}: ")?;
        }
        if !self.path.is_empty() {
            write!(f, "{}: ", self.path)?;
        }
        f.write_str(&self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigErrors(pub Vec<Issue>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, i) in self.0.iter().enumerate() {
            if k > 0 {
                writeln!(f)?;
            }
            write!(f, "{i}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

/// Parses and validates. `expected` is the mode implied by the caller (the
/// CLI subcommand); a `mode` key in the file must agree with it.
pub fn parse_config(
    text: &str,
    format: Format,
    expected: Option<Mode>,
) -> Result<ExperimentConfig, ConfigErrors> {
    let mut cfg: ExperimentConfig = match format {
        Format::Toml => toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| line_of(text, s.start));
            ConfigErrors(vec![Issue {
                path: String::new(),
                line,
                message: e.message().to_string(),
            }])
        })?,
        Format::Json => serde_json::from_str(text).map_err(|e| {
            ConfigErrors(vec![Issue {
                path: String::new(),
                line: Some(e.line()),
                message: e.to_string(),
            }])
        })?,
    };
    match (cfg.mode, expected) {
        (Some(m), Some(e)) if m != e => {
            return Err(ConfigErrors(vec![Issue {
                path: "mode".into(),
                line: locate(text, format, &[Seg::Key("mode")]),
                message: format!("config declares mode `{m}` but `{e}` was requested"),
            }]))
        }
        (None, Some(e)) => cfg.mode = Some(e),
        (None, None) => {
            return Err(ConfigErrors(vec![Issue {
                path: "mode".into(),
                line: None,
                message: "missing required field `mode`".into(),
            }]))
        }
        _ => {}
    }
    let issues = validate(&cfg);
    if issues.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigErrors(
            issues
                .into_iter()
                .map(|(path, message)| Issue {
                    line: locate(text, format, &path),
                    path: render_path(&path),
                    message,
                })
                .collect(),
        ))
    }
}

/// Canonical TOML form: fixed key order, absent options omitted.
pub fn to_canonical_toml(cfg: &ExperimentConfig) -> String {
    toml::to_string(cfg).expect("config serializes to TOML")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Seg {
    Key(&'static str),
    Index(usize),
}

type Path = Vec<Seg>;

fn render_path(path: &[Seg]) -> String {
    let mut s = String::new();
    for seg in path {
        match seg {
            Seg::Key(k) => {
                if !s.is_empty() {
                    s.push('.');
                }
                s.push_str(k);
            }
            Seg::Index(i) => s.push_str(&format!("[{}]", i + 1)),
        }
    }
    s
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line of the deepest element of `path` present in the TOML source.
fn locate(text: &str, format: Format, path: &[Seg]) -> Option<usize> {
    if format != Format::Toml {
        return None;
    }
    let doc = toml_edit::ImDocument::parse(text).ok()?;
    let mut item: &toml_edit::Item = doc.as_item();
    let mut best = None;
    for seg in path {
        let next = match seg {
            Seg::Key(k) => item.get(*k),
            Seg::Index(i) => item.get(*i),
        };
        match next {
            Some(it) => {
                if let Some(span) = it.span() {
                    best = Some(line_of(text, span.start));
                }
                item = it;
            }
            None => break,
        }
    }
    best
}

/// Number of chain sites the config describes, when determinable.
pub fn chain_len(cfg: &ExperimentConfig) -> Option<usize> {
    cfg.chain
        .as_ref()
        .map(|c| c.len())
        .or(cfg.n)
        .or_else(|| cfg.couplings.as_ref().map(|c| c.len() + 1))
}

fn positive(v: f64) -> bool {
    v.is_finite() && v > 0.0
}

struct Issues(Vec<(Path, String)>);

impl Issues {
    fn push(&mut self, path: Path, message: impl Into<String>) {
        self.0.push((path, message.into()));
    }
}

fn p(segs: &[Seg]) -> Path {
    segs.to_vec()
}

fn validate(cfg: &ExperimentConfig) -> Vec<(Path, String)> {
    use Seg::{Index, Key};
    let mode = cfg.mode.expect("mode resolved before validation");
    let mut out = Issues(Vec::new());

    if let Some(n) = cfg.n {
        if n < 2 {
            out.push(
                p(&[Key("n")]),
                format!("chain length must be at least 2, got {n}"),
            );
        }
    }
    if let Some(c) = cfg.c0_hz {
        if !positive(c) {
            out.push(p(&[Key("c0_hz")]), format!("must be positive, got {c}"));
        }
    }
    if let Some(g) = cfg.gamma_hz {
        if !(g.is_finite() && g >= 0.0) {
            out.push(
                p(&[Key("gamma_hz")]),
                format!("must be non-negative, got {g}"),
            );
        }
    }
    if let Some(rs) = &cfg.resonators {
        let mut seen = std::collections::BTreeSet::new();
        for (k, r) in rs.iter().enumerate() {
            let at = |key| p(&[Key("resonators"), Index(k), Key(key)]);
            if !seen.insert(r.index) {
                out.push(
                    at("index"),
                    format!("duplicate resonator index {}", r.index),
                );
            }
            if !positive(r.freq_hz) {
                out.push(at("freq_hz"), "must be positive");
            }
            if !(r.gamma_hz.is_finite() && r.gamma_hz >= 0.0) {
                out.push(at("gamma_hz"), "must be non-negative");
            }
            if matches!(r.mass, Some(m) if !positive(m)) {
                out.push(at("mass"), "must be positive");
            }
        }
    }
    let known = |idx: usize| match &cfg.resonators {
        Some(rs) => rs.iter().any(|r| r.index == idx),
        None => (1..=8).contains(&idx),
    };
    let check_couplings = |list: &[CouplingEntry], base: &[Seg], out: &mut Issues| {
        for (k, c) in list.iter().enumerate() {
            let at = |key| {
                let mut v = base.to_vec();
                v.extend([Index(k), Key(key)]);
                v
            };
            for (name, idx) in [("a", c.a), ("b", c.b)] {
                if !known(idx) {
                    out.push(at(name), format!("resonator R{idx} does not exist"));
                }
            }
            if !(c.strength_hz.is_finite() && c.strength_hz >= 0.0) {
                out.push(at("strength_hz"), "must be non-negative");
            }
        }
    };

    if let Some(cs) = &cfg.couplings {
        if cfg.n.is_some() || cfg.c0_hz.is_some() {
            out.push(
                p(&[Key("couplings")]),
                "give either explicit couplings or n/c0_hz, not both",
            );
        }
        check_couplings(cs, &[Key("couplings")], &mut out);
    } else if cfg.n.is_none() && cfg.chain.is_none() && mode != Mode::Calibrate {
        out.push(
            p(&[Key("n")]),
            "missing required field `n` (or explicit `couplings`)",
        );
    }
    if let Some(chain) = &cfg.chain {
        if let Some(n) = cfg.n {
            if chain.len() != n {
                out.push(
                    p(&[Key("chain")]),
                    format!("chain lists {} resonators but n = {n}", chain.len()),
                );
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for (k, &idx) in chain.iter().enumerate() {
            if !known(idx) {
                out.push(
                    p(&[Key("chain"), Index(k)]),
                    format!("resonator R{idx} does not exist"),
                );
            }
            if !seen.insert(idx) {
                out.push(
                    p(&[Key("chain"), Index(k)]),
                    format!("resonator R{idx} appears twice"),
                );
            }
        }
    } else if cfg.resonators.is_none() && !matches!(mode, Mode::Synth | Mode::Calibrate) {
        if let Some(n) = cfg.n.filter(|&n| n > 8) {
            out.push(
                p(&[Key("n")]),
                format!("the default fixture has 8 resonators; n = {n} needs explicit `resonators` and `chain`"),
            );
        }
    }
    if cfg.couplings.is_none()
        && cfg.schedule.is_none()
        && cfg.c0_hz.is_none()
        && mode != Mode::Calibrate
    {
        out.push(p(&[Key("c0_hz")]), "missing required field `c0_hz`");
    }

    if let Some(segs) = &cfg.schedule {
        if segs.is_empty() {
            out.push(p(&[Key("schedule")]), "schedule needs at least one segment");
        }
        if cfg.couplings.is_some() {
            out.push(
                p(&[Key("schedule")]),
                "a schedule replaces the couplings; drop top-level `couplings`",
            );
        }
        for (k, s) in segs.iter().enumerate() {
            let at = |key| p(&[Key("schedule"), Index(k), Key(key)]);
            match (&s.c0_hz, &s.couplings) {
                (Some(c), None) => {
                    if !positive(*c) {
                        out.push(at("c0_hz"), format!("must be positive, got {c}"));
                    }
                    if s.periods.is_some() && s.duration_s.is_some() {
                        out.push(at("periods"), "give periods or duration_s, not both");
                    }
                    if cfg.n.is_none() && cfg.chain.is_none() {
                        out.push(at("c0_hz"), "a c0_hz segment needs `n` or `chain`");
                    }
                }
                (None, Some(cs)) => {
                    check_couplings(cs, &[Key("schedule"), Index(k), Key("couplings")], &mut out);
                    if s.duration_s.is_none() {
                        out.push(at("duration_s"), "missing required field `duration_s`");
                    }
                    if s.periods.is_some() {
                        out.push(at("periods"), "periods needs c0_hz");
                    }
                }
                _ => out.push(
                    p(&[Key("schedule"), Index(k)]),
                    "give exactly one of c0_hz or couplings",
                ),
            }
            if matches!(s.periods, Some(v) if !positive(v)) {
                out.push(at("periods"), "must be positive");
            }
            if matches!(s.duration_s, Some(v) if !positive(v)) {
                out.push(at("duration_s"), "must be positive");
            }
        }
    }

    let n_sites = chain_len(cfg);
    let site = |out: &mut Issues, path: Path, site: usize, what: &str| {
        if let Some(n) = n_sites {
            if !(1..=n).contains(&site) {
                out.push(
                    path,
                    format!("{what} site {site} outside chain of length {n}"),
                );
            }
        }
    };
    let pos = |out: &mut Issues, path: Path, v: Option<f64>| {
        if matches!(v, Some(x) if !positive(x)) {
            out.push(path, "must be positive");
        }
    };

    match mode {
        Mode::Synth => {
            if let Some(s) = &cfg.synth {
                pos(&mut out, p(&[Key("synth"), Key("v_dc")]), s.v_dc);
                pos(
                    &mut out,
                    p(&[Key("synth"), Key("alpha_hz_per_v2")]),
                    s.alpha_hz_per_v2,
                );
                if s.v_dc.is_some() != s.alpha_hz_per_v2.is_some() {
                    out.push(p(&[Key("synth")]), "v_dc and alpha_hz_per_v2 go together");
                }
            }
            if cfg.c0_hz.is_none() || cfg.n.is_none() && cfg.chain.is_none() {
                out.push(
                    p(&[Key("c0_hz")]),
                    "synth needs `n` (or `chain`) and `c0_hz`",
                );
            }
        }
        Mode::EvolveRwa => {
            let e = cfg.evolve.clone().unwrap_or_default();
            let base = |key| p(&[Key("evolve"), Key(key)]);
            site(&mut out, base("launch"), e.launch.unwrap_or(1), "launch");
            if let Some(t) = e.target {
                site(&mut out, base("target"), t, "target");
            }
            pos(&mut out, base("sample_dt_s"), e.sample_dt_s);
            pos(&mut out, base("t_span_s"), e.t_span_s);
            if matches!(e.t_eval_s, Some(t) if !(t.is_finite() && t >= 0.0)) {
                out.push(base("t_eval_s"), "must be non-negative");
            }
            if matches!(e.damping_hz, Some(g) if !(g.is_finite() && g >= 0.0)) {
                out.push(base("damping_hz"), "must be non-negative");
            }
            if e.t_span_s.is_some() && cfg.schedule.is_some() {
                out.push(
                    base("t_span_s"),
                    "the schedule fixes the run length; drop t_span_s",
                );
            }
            if cfg.couplings.is_some() && e.t_span_s.is_none() {
                out.push(
                    base("t_span_s"),
                    "missing required field `t_span_s` for explicit couplings",
                );
            }
        }
        Mode::EvolveFull => {
            let f = cfg.full.clone().unwrap_or_default();
            let base = |key| p(&[Key("full"), Key(key)]);
            site(&mut out, base("launch"), f.launch.unwrap_or(1), "launch");
            if matches!(f.scale, Some(s) if !(s.is_finite() && s >= 1.0)) {
                out.push(base("scale"), "must be >= 1");
            }
            if matches!(f.periods, Some(v) if !(v.is_finite() && v >= 2.0)) {
                out.push(base("periods"), "must be >= 2");
            }
            pos(&mut out, base("pulse_amplitude"), f.pulse_amplitude);
            pos(&mut out, base("pulse_duration_s"), f.pulse_duration_s);
            pos(&mut out, base("time_constant_s"), f.time_constant_s);
            pos(&mut out, base("dt_s"), f.dt_s);
            if f.output_decimation == Some(0) {
                out.push(base("output_decimation"), "must be >= 1");
            }
            if f.table_stride == Some(0) {
                out.push(base("table_stride"), "must be >= 1");
            }
            if cfg.schedule.is_some() {
                out.push(
                    p(&[Key("schedule")]),
                    "evolve-full runs a single coupling configuration",
                );
            }
        }
        Mode::Spectrum => {
            let s = cfg.spectrum.clone().unwrap_or_default();
            let base = |key| p(&[Key("spectrum"), Key(key)]);
            site(&mut out, base("drive"), s.drive.unwrap_or(1), "drive");
            site(&mut out, base("probe"), s.probe.unwrap_or(1), "probe");
            pos(&mut out, base("gamma_hz"), s.gamma_hz);
            if let (Some(a), Some(b)) = (s.start_hz, s.stop_hz) {
                if !(b > a) {
                    out.push(base("stop_hz"), "must exceed start_hz");
                }
            }
            if s.start_hz.is_some() != s.stop_hz.is_some() {
                out.push(p(&[Key("spectrum")]), "start_hz and stop_hz go together");
            }
            if matches!(s.points, Some(n) if n < 3) {
                out.push(base("points"), "need at least 3 points");
            }
            if cfg.schedule.is_some() {
                out.push(
                    p(&[Key("schedule")]),
                    "spectrum analyses a single coupling configuration",
                );
            }
        }
        Mode::Parity => {
            let launches = cfg
                .parity
                .as_ref()
                .and_then(|q| q.launches.clone())
                .unwrap_or_default();
            for (k, &l) in launches.iter().enumerate() {
                site(
                    &mut out,
                    p(&[Key("parity"), Key("launches"), Index(k)]),
                    l,
                    "launch",
                );
            }
            if cfg.couplings.is_some() || cfg.schedule.is_some() {
                out.push(
                    p(&[Key("parity")]),
                    "parity needs a perfect-transfer network (n, c0_hz)",
                );
            }
        }
        Mode::Calibrate => match &cfg.calibrate {
            None => out.push(
                p(&[Key("calibrate")]),
                "missing required section `calibrate`",
            ),
            Some(c) => {
                if c.points.is_empty() {
                    out.push(
                        p(&[Key("calibrate"), Key("points")]),
                        "need at least one calibration point",
                    );
                }
                for (k, pt) in c.points.iter().enumerate() {
                    let at = |key| p(&[Key("calibrate"), Key("points"), Index(k), Key(key)]);
                    for (name, v) in [("v_dc", pt.v_dc), ("v_ac", pt.v_ac)] {
                        if !v.is_finite() {
                            out.push(at(name), "must be finite");
                        }
                    }
                    if !(pt.coupling_hz.is_finite() && pt.coupling_hz >= 0.0) {
                        out.push(at("coupling_hz"), "must be non-negative");
                    }
                }
                pos(
                    &mut out,
                    p(&[Key("calibrate"), Key("linewidth_hz")]),
                    c.linewidth_hz,
                );
            }
        },
    }
    out.0
}
