//! Run configuration: a strict JSON schema with explicit units in every
//! key name, defaults filled per species, and a canonical normalized form.
//!
//! The normalized dump (what `--echo-config` prints) resolves every default
//! the run will actually use, so its SHA-256 pins the physics of an output
//! file completely. Normalization is idempotent: loading the dump and
//! normalizing again reproduces it byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use nv_spinlab_core::dynamics::{DriveDuration, InitialState, Observable};
use nv_spinlab_core::floquet::FloquetConfig;
use nv_spinlab_core::pumping::{OpticalCycleParams, RateParams, StopRule};
use nv_spinlab_core::spin::{BasisLabel, NuclearSpecies, Orbital, SpinSystemParams};
use serde::Deserialize;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::CliError;

// ---------------------------------------------------------------------------
// schema

const TOP_KEYS: &[&str] = &[
    "field", "fit", "floquet", "output", "pump", "rates", "seed", "sequence", "system",
];
const SYSTEM_KEYS: &[&str] = &[
    "a_par_es_mhz",
    "a_par_gs_mhz",
    "a_perp_es_mhz",
    "a_perp_gs_mhz",
    "gamma_e_mhz_per_gauss",
    "gamma_n_mhz_per_gauss",
    "orbital",
    "quad_p_es_mhz",
    "quad_p_gs_mhz",
    "species",
    "zfs_es_mhz",
    "zfs_gs_mhz",
];
const FIELD_KEYS: &[&str] = &["b0_gauss", "b1_gauss", "drive_freq_mhz"];
const SEQUENCE_KEYS: &[&str] = &[
    "b1_gauss",
    "coherence_time_us",
    "delay_max_us",
    "delay_points",
    "dt_max_us",
    "freq_mhz",
    "initial_ms",
    "initial_twice_mi",
    "observable",
    "observable_ms",
    "observable_twice_mi",
    "pi_fraction",
    "pi_lower_ms",
    "pi_lower_twice_mi",
    "pi_upper_ms",
    "pi_upper_twice_mi",
    "pulse_us",
    "readout_cycles",
    "scan_points",
    "scan_start_mhz",
    "scan_stop_mhz",
    "second_pulse_phase_rad",
    "t_max_us",
    "t_points",
];
const FLOQUET_KEYS: &[&str] = &[
    "aggregation",
    "freq_points",
    "freq_start_mhz",
    "freq_stop_mhz",
    "n_max",
    "n_max_cap",
    "tol",
];
// Rate-equation inputs are ratios; only Γ : γ : k_eq matters, so these
// three deliberately carry no unit suffix.
const RATES_KEYS: &[&str] = &["big_gamma", "gamma", "k_eq"];
const PUMP_KEYS: &[&str] = &[
    "cycles",
    "es_lifetime_us",
    "fluor_bright",
    "fluor_dark",
    "initial_populations",
    "max_cycles",
    "nuclear_depol_per_cycle",
    "singlet_branch_ms0",
    "singlet_branch_ms1",
    "singlet_to_ms0",
    "tol",
];
const FIT_KEYS: &[&str] = &[
    "damped",
    "input",
    "model",
    "n_peaks",
    "pulse_us",
    "shared_width",
];
const OUTPUT_KEYS: &[&str] = &["format", "path"];

fn section_keys(section: &str) -> &'static [&'static str] {
    match section {
        "system" => SYSTEM_KEYS,
        "field" => FIELD_KEYS,
        "sequence" => SEQUENCE_KEYS,
        "floquet" => FLOQUET_KEYS,
        "rates" => RATES_KEYS,
        "pump" => PUMP_KEYS,
        "fit" => FIT_KEYS,
        "output" => OUTPUT_KEYS,
        _ => &[],
    }
}

/// Edit distance for "did you mean" hints.
fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Best guess for what an unknown key was meant to be. A key that is a
/// unit-less prefix of an allowed key ("B0" for "b0_gauss") wins outright;
/// otherwise the closest allowed key within edit distance 3.
fn suggest(bad: &str, allowed: &[&str]) -> Option<&'static str> {
    let lower = bad.to_ascii_lowercase();
    for &k in allowed {
        if k.starts_with(&lower) && k.as_bytes().get(lower.len()) == Some(&b'_') {
            return Some(k);
        }
    }
    allowed
        .iter()
        .map(|&k| (levenshtein(&lower, k), k))
        .filter(|&(d, _)| d <= 3)
        .min()
        .map(|(_, k)| k)
}

/// Reject every unknown key at once, each with a suggestion when one is
/// plausible.
fn check_keys(root: &Map<String, Value>) -> Result<(), CliError> {
    let mut offenders: Vec<String> = Vec::new();
    for (key, val) in root {
        if !TOP_KEYS.contains(&key.as_str()) {
            offenders.push(match suggest(key, TOP_KEYS) {
                Some(s) => format!("{key} (did you mean \"{s}\"?)"),
                None => key.clone(),
            });
            continue;
        }
        if key == "seed" {
            continue;
        }
        let obj = match val.as_object() {
            Some(o) => o,
            None => {
                offenders.push(format!("{key} (must be a JSON object)"));
                continue;
            }
        };
        let allowed = section_keys(key);
        for sub in obj.keys() {
            if !allowed.contains(&sub.as_str()) {
                offenders.push(match suggest(sub, allowed) {
                    Some(s) => format!("{key}.{sub} (did you mean \"{s}\"?)"),
                    None => format!("{key}.{sub}"),
                });
            }
        }
    }
    if offenders.is_empty() {
        return Ok(());
    }
    let mut msg = format!("{} unknown or malformed key(s):", offenders.len());
    for o in &offenders {
        msg.push_str("\n  - ");
        msg.push_str(o);
    }
    Err(CliError::Config(msg))
}

// ---------------------------------------------------------------------------
// raw (as-written) blocks

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBlocks {
    system: Option<RawSystem>,
    field: Option<RawField>,
    sequence: Option<RawSequence>,
    floquet: Option<RawFloquet>,
    rates: Option<RawRates>,
    pump: Option<RawPump>,
    fit: Option<RawFit>,
    output: Option<RawOutput>,
    seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    species: Option<String>,
    orbital: Option<String>,
    zfs_gs_mhz: Option<f64>,
    zfs_es_mhz: Option<f64>,
    gamma_e_mhz_per_gauss: Option<f64>,
    gamma_n_mhz_per_gauss: Option<f64>,
    a_par_gs_mhz: Option<f64>,
    a_perp_gs_mhz: Option<f64>,
    a_par_es_mhz: Option<f64>,
    a_perp_es_mhz: Option<f64>,
    quad_p_gs_mhz: Option<f64>,
    quad_p_es_mhz: Option<f64>,
}

/// A static field may be written as a 3-vector or as a bare number.
/// Scalars mean "along z" for B0 and "along x" for B1.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum FieldSpec {
    Scalar(f64),
    Vector([f64; 3]),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawField {
    b0_gauss: Option<FieldSpec>,
    b1_gauss: Option<FieldSpec>,
    drive_freq_mhz: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSequence {
    freq_mhz: Option<f64>,
    b1_gauss: Option<f64>,
    initial_ms: Option<i8>,
    initial_twice_mi: Option<i8>,
    observable: Option<String>,
    observable_ms: Option<i8>,
    observable_twice_mi: Option<i8>,
    readout_cycles: Option<u32>,
    scan_start_mhz: Option<f64>,
    scan_stop_mhz: Option<f64>,
    scan_points: Option<usize>,
    pulse_us: Option<f64>,
    pi_fraction: Option<f64>,
    pi_lower_ms: Option<i8>,
    pi_lower_twice_mi: Option<i8>,
    pi_upper_ms: Option<i8>,
    pi_upper_twice_mi: Option<i8>,
    t_max_us: Option<f64>,
    t_points: Option<usize>,
    delay_max_us: Option<f64>,
    delay_points: Option<usize>,
    second_pulse_phase_rad: Option<f64>,
    coherence_time_us: Option<f64>,
    dt_max_us: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFloquet {
    freq_start_mhz: Option<f64>,
    freq_stop_mhz: Option<f64>,
    freq_points: Option<usize>,
    n_max: Option<usize>,
    n_max_cap: Option<usize>,
    tol: Option<f64>,
    aggregation: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRates {
    big_gamma: Option<f64>,
    gamma: Option<f64>,
    k_eq: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPump {
    es_lifetime_us: Option<f64>,
    singlet_branch_ms1: Option<f64>,
    singlet_branch_ms0: Option<f64>,
    singlet_to_ms0: Option<f64>,
    fluor_bright: Option<f64>,
    fluor_dark: Option<f64>,
    nuclear_depol_per_cycle: Option<f64>,
    cycles: Option<usize>,
    tol: Option<f64>,
    max_cycles: Option<usize>,
    initial_populations: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFit {
    model: Option<String>,
    input: Option<String>,
    n_peaks: Option<usize>,
    shared_width: Option<bool>,
    pulse_us: Option<f64>,
    damped: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    path: Option<String>,
    format: Option<String>,
}

// ---------------------------------------------------------------------------
// resolved configuration

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone)]
pub struct SequenceConfig {
    pub freq_mhz: Option<f64>,
    pub b1_gauss: f64,
    pub initial_ms: i8,
    pub initial_twice_mi: Option<i8>,
    pub observable: String,
    pub observable_ms: i8,
    pub observable_twice_mi: Option<i8>,
    pub readout_cycles: u32,
    pub scan_start_mhz: Option<f64>,
    pub scan_stop_mhz: Option<f64>,
    pub scan_points: Option<usize>,
    pub pulse_us: Option<f64>,
    pub pi_fraction: Option<f64>,
    pub pi_lower: Option<BasisLabel>,
    pub pi_upper: Option<BasisLabel>,
    pub t_max_us: Option<f64>,
    pub t_points: usize,
    pub delay_max_us: Option<f64>,
    pub delay_points: usize,
    pub second_pulse_phase_rad: f64,
    /// Eigenbasis 1/e dephasing time during waits; 0 switches dephasing off.
    pub coherence_time_us: f64,
    pub dt_max_us: f64,
}

#[derive(Debug, Clone)]
pub struct FloquetBlock {
    pub freq_start_mhz: Option<f64>,
    pub freq_stop_mhz: Option<f64>,
    pub freq_points: Option<usize>,
    pub cfg: FloquetConfig,
    pub aggregation: String,
}

#[derive(Debug, Clone)]
pub struct PumpBlock {
    pub cycle: OpticalCycleParams,
    pub stop: StopRule,
    pub initial_populations: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default)]
pub struct FitBlock {
    pub model: Option<String>,
    pub input: Option<String>,
    pub n_peaks: usize,
    pub shared_width: bool,
    pub pulse_us: Option<f64>,
    pub damped: bool,
}

/// Everything a run needs, with defaults resolved.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub params: SpinSystemParams,
    pub orbital: Orbital,
    /// Whether the config (or a flag) named the orbital, as opposed to the
    /// ground-state default. The level-crossing search treats an unnamed
    /// orbital as the excited state, where the crossing actually lives.
    pub orbital_explicit: bool,
    pub b0_gauss: [f64; 3],
    pub b1_gauss: [f64; 3],
    pub drive_freq_mhz: Option<f64>,
    pub sequence: SequenceConfig,
    pub floquet: FloquetBlock,
    pub rates: RateParams,
    pub pump: PumpBlock,
    pub fit: FitBlock,
    pub out_path: Option<PathBuf>,
    pub out_format: Option<OutFormat>,
    pub seed: Option<u64>,
    /// Which optional sections the config actually wrote, preserved so the
    /// normalized dump keeps the author's shape.
    present: Presence,
}

#[derive(Debug, Clone, Copy, Default)]
struct Presence {
    sequence: bool,
    floquet: bool,
    rates: bool,
    pump: bool,
    fit: bool,
    output: bool,
}

/// A parsed config plus its canonical dump and hash.
pub struct LoadedConfig {
    pub cfg: RunConfig,
    pub normalized: String,
    pub sha256: String,
}

/// Command-line overrides applied before normalization, so the dump and
/// hash describe the run as actually executed.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub species: Option<String>,
    pub b0z_gauss: Option<f64>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<LoadedConfig, CliError> {
    let text = match path {
        Some(p) => fs::read_to_string(p)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?,
        None => "{}".to_string(),
    };
    parse(&text, overrides)
}

pub fn parse(text: &str, overrides: &Overrides) -> Result<LoadedConfig, CliError> {
    // serde_json reports "line L column C" for syntax errors.
    let value: Value = serde_json::from_str(text)
        .map_err(|e| CliError::Config(format!("config is not valid JSON: {e}")))?;
    let root = value
        .as_object()
        .ok_or_else(|| CliError::Config("config root must be a JSON object".into()))?;
    check_keys(root)?;
    let raw: RawBlocks = serde_json::from_value(value)
        .map_err(|e| CliError::Config(format!("config value: {e}")))?;
    let cfg = resolve(raw, overrides)?;
    let normalized = normalized_dump(&cfg);
    let sha256 = hex_sha256(normalized.as_bytes());
    Ok(LoadedConfig {
        cfg,
        normalized,
        sha256,
    })
}

pub fn parse_species(text: &str) -> Result<NuclearSpecies, CliError> {
    match text.to_ascii_lowercase().as_str() {
        "c13" | "13c" => Ok(NuclearSpecies::C13),
        "n14" | "14n" => Ok(NuclearSpecies::N14),
        "n15" | "15n" => Ok(NuclearSpecies::N15),
        other => Err(CliError::Config(format!(
            "unknown species \"{other}\" (choose c13, n14, or n15)"
        ))),
    }
}

fn species_name(species: NuclearSpecies) -> &'static str {
    match species {
        NuclearSpecies::C13 => "c13",
        NuclearSpecies::N14 => "n14",
        NuclearSpecies::N15 => "n15",
    }
}

fn parse_orbital(text: &str) -> Result<Orbital, CliError> {
    match text.to_ascii_lowercase().as_str() {
        "ground" | "gs" => Ok(Orbital::Ground),
        "excited" | "es" => Ok(Orbital::Excited),
        other => Err(CliError::Config(format!(
            "unknown orbital \"{other}\" (choose ground or excited)"
        ))),
    }
}

const OBSERVABLES: &[&str] = &[
    "fluorescence",
    "manifold_population",
    "nuclear_projection",
    "population",
];

fn resolve(raw: RawBlocks, overrides: &Overrides) -> Result<RunConfig, CliError> {
    let sys = raw.system.unwrap_or_default();
    let species_text = overrides
        .species
        .clone()
        .or(sys.species)
        .unwrap_or_else(|| "n14".into());
    let species = parse_species(&species_text)?;
    let mut params = SpinSystemParams::defaults(species);
    if let Some(v) = sys.zfs_gs_mhz {
        params.zfs_gs_mhz = v;
    }
    if let Some(v) = sys.zfs_es_mhz {
        params.zfs_es_mhz = v;
    }
    if let Some(v) = sys.gamma_e_mhz_per_gauss {
        params.gamma_e_mhz_per_g = v;
    }
    if let Some(v) = sys.gamma_n_mhz_per_gauss {
        params.gamma_n_mhz_per_g = v;
    }
    if let Some(v) = sys.a_par_gs_mhz {
        params.a_par_gs_mhz = v;
    }
    if let Some(v) = sys.a_perp_gs_mhz {
        params.a_perp_gs_mhz = v;
    }
    if let Some(v) = sys.a_par_es_mhz {
        params.a_par_es_mhz = v;
    }
    if let Some(v) = sys.a_perp_es_mhz {
        params.a_perp_es_mhz = v;
    }
    if let Some(v) = sys.quad_p_gs_mhz {
        params.quad_p_gs_mhz = v;
    }
    if let Some(v) = sys.quad_p_es_mhz {
        params.quad_p_es_mhz = v;
    }
    params
        .validate()
        .map_err(|e| CliError::Config(format!("system block: {e}")))?;
    let orbital_explicit = sys.orbital.is_some();
    let orbital = match sys.orbital {
        Some(t) => parse_orbital(&t)?,
        None => Orbital::Ground,
    };

    let field = raw.field.unwrap_or_default();
    let b0_gauss = match field.b0_gauss {
        Some(FieldSpec::Scalar(z)) => [0.0, 0.0, z],
        Some(FieldSpec::Vector(v)) => v,
        None => [0.0, 0.0, 509.0],
    };
    let mut b0_gauss = b0_gauss;
    if let Some(z) = overrides.b0z_gauss {
        b0_gauss[2] = z;
    }
    let b1_gauss = match field.b1_gauss {
        Some(FieldSpec::Scalar(x)) => [x, 0.0, 0.0],
        Some(FieldSpec::Vector(v)) => v,
        None => [1.0, 0.0, 0.0],
    };
    for (name, v) in [("b0_gauss", &b0_gauss), ("b1_gauss", &b1_gauss)] {
        if v.iter().any(|x| !x.is_finite()) {
            return Err(CliError::Config(format!("field.{name} must be finite")));
        }
    }

    let present = Presence {
        sequence: raw.sequence.is_some(),
        floquet: raw.floquet.is_some(),
        rates: raw.rates.is_some(),
        pump: raw.pump.is_some(),
        fit: raw.fit.is_some(),
        output: raw.output.is_some(),
    };

    let sequence = resolve_sequence(raw.sequence.unwrap_or_default())?;
    let floquet = resolve_floquet(raw.floquet.unwrap_or_default())?;

    let r = raw.rates.unwrap_or_default();
    let defaults = RateParams::default();
    let rates = RateParams {
        big_gamma: r.big_gamma.unwrap_or(defaults.big_gamma),
        gamma: r.gamma.unwrap_or(defaults.gamma),
        k_eq: r.k_eq.unwrap_or(defaults.k_eq),
    };

    let pump = resolve_pump(raw.pump.unwrap_or_default())?;

    let f = raw.fit.unwrap_or_default();
    if let Some(m) = f.model.as_deref() {
        if !["lorentzians", "square_pulse", "sinusoid"].contains(&m) {
            return Err(CliError::Config(format!(
                "fit.model \"{m}\" unknown (choose lorentzians, square_pulse, or sinusoid)"
            )));
        }
    }
    let fit = FitBlock {
        model: f.model,
        input: f.input,
        n_peaks: f.n_peaks.unwrap_or(1),
        shared_width: f.shared_width.unwrap_or(true),
        pulse_us: f.pulse_us,
        damped: f.damped.unwrap_or(false),
    };

    let out = raw.output.unwrap_or_default();
    let out_format = match out.format.as_deref() {
        None => None,
        Some("csv") => Some(OutFormat::Csv),
        Some("json") => Some(OutFormat::Json),
        Some(other) => {
            return Err(CliError::Config(format!(
                "output.format \"{other}\" unknown (choose csv or json)"
            )))
        }
    };
    let out_path = overrides
        .out
        .clone()
        .or_else(|| out.path.as_deref().map(PathBuf::from));

    Ok(RunConfig {
        params,
        orbital,
        orbital_explicit,
        b0_gauss,
        b1_gauss,
        drive_freq_mhz: field.drive_freq_mhz,
        sequence,
        floquet,
        rates,
        pump,
        fit,
        out_path,
        out_format,
        seed: overrides.seed.or(raw.seed),
        present,
    })
}

fn resolve_sequence(s: RawSequence) -> Result<SequenceConfig, CliError> {
    if s.pulse_us.is_some() && s.pi_fraction.is_some() {
        return Err(CliError::Config(
            "sequence.pulse_us and sequence.pi_fraction are mutually exclusive".into(),
        ));
    }
    let pair_keys = [
        s.pi_lower_ms.is_some(),
        s.pi_lower_twice_mi.is_some(),
        s.pi_upper_ms.is_some(),
        s.pi_upper_twice_mi.is_some(),
    ];
    let pair_given = pair_keys.iter().filter(|&&p| p).count();
    if pair_given != 0 && pair_given != 4 {
        return Err(CliError::Config(
            "a calibration pair needs all four keys: pi_lower_ms, pi_lower_twice_mi, \
             pi_upper_ms, pi_upper_twice_mi"
                .into(),
        ));
    }
    let (pi_lower, pi_upper) = if pair_given == 4 {
        (
            Some(BasisLabel::new(
                s.pi_lower_ms.unwrap(),
                s.pi_lower_twice_mi.unwrap(),
            )),
            Some(BasisLabel::new(
                s.pi_upper_ms.unwrap(),
                s.pi_upper_twice_mi.unwrap(),
            )),
        )
    } else {
        (None, None)
    };
    let observable = s.observable.unwrap_or_else(|| "fluorescence".into());
    if !OBSERVABLES.contains(&observable.as_str()) {
        return Err(CliError::Config(format!(
            "sequence.observable \"{observable}\" unknown (choose one of {})",
            OBSERVABLES.join(", ")
        )));
    }
    for (name, v) in [
        ("scan_points", s.scan_points),
        ("t_points", s.t_points),
        ("delay_points", s.delay_points),
    ] {
        if let Some(n) = v {
            if n < 2 {
                return Err(CliError::Config(format!(
                    "sequence.{name} must be at least 2"
                )));
            }
        }
    }
    let initial_ms = s.initial_ms.unwrap_or(0);
    Ok(SequenceConfig {
        freq_mhz: s.freq_mhz,
        b1_gauss: s.b1_gauss.unwrap_or(1.0),
        initial_ms,
        initial_twice_mi: s.initial_twice_mi,
        observable_ms: s.observable_ms.unwrap_or(initial_ms),
        observable_twice_mi: s.observable_twice_mi,
        observable,
        readout_cycles: s.readout_cycles.unwrap_or(1),
        scan_start_mhz: s.scan_start_mhz,
        scan_stop_mhz: s.scan_stop_mhz,
        scan_points: s.scan_points,
        pulse_us: s.pulse_us,
        pi_fraction: s.pi_fraction,
        pi_lower,
        pi_upper,
        t_max_us: s.t_max_us,
        t_points: s.t_points.unwrap_or(121),
        delay_max_us: s.delay_max_us,
        delay_points: s.delay_points.unwrap_or(151),
        second_pulse_phase_rad: s.second_pulse_phase_rad.unwrap_or(0.0),
        coherence_time_us: s.coherence_time_us.unwrap_or(1000.0),
        dt_max_us: s.dt_max_us.unwrap_or(0.05),
    })
}

fn resolve_floquet(f: RawFloquet) -> Result<FloquetBlock, CliError> {
    let defaults = FloquetConfig::default();
    let aggregation = f.aggregation.unwrap_or_else(|| "nuclear_raising".into());
    if !["nuclear_lowering", "nuclear_raising"].contains(&aggregation.as_str()) {
        return Err(CliError::Config(format!(
            "floquet.aggregation \"{aggregation}\" unknown (choose nuclear_raising or \
             nuclear_lowering)"
        )));
    }
    if let Some(n) = f.freq_points {
        if n < 2 {
            return Err(CliError::Config("floquet.freq_points must be at least 2".into()));
        }
    }
    Ok(FloquetBlock {
        freq_start_mhz: f.freq_start_mhz,
        freq_stop_mhz: f.freq_stop_mhz,
        freq_points: f.freq_points,
        cfg: FloquetConfig {
            n_max: f.n_max.unwrap_or(defaults.n_max),
            tol: f.tol.unwrap_or(defaults.tol),
            n_max_cap: f.n_max_cap.unwrap_or(defaults.n_max_cap),
        },
        aggregation,
    })
}

fn resolve_pump(p: RawPump) -> Result<PumpBlock, CliError> {
    let d = OpticalCycleParams::default();
    let cycle = OpticalCycleParams {
        es_lifetime_us: p.es_lifetime_us.unwrap_or(d.es_lifetime_us),
        singlet_branch_ms1: p.singlet_branch_ms1.unwrap_or(d.singlet_branch_ms1),
        singlet_branch_ms0: p.singlet_branch_ms0.unwrap_or(d.singlet_branch_ms0),
        singlet_to_ms0: p.singlet_to_ms0.unwrap_or(d.singlet_to_ms0),
        fluor_bright: p.fluor_bright.unwrap_or(d.fluor_bright),
        fluor_dark: p.fluor_dark.unwrap_or(d.fluor_dark),
        nuclear_depol_per_cycle: p.nuclear_depol_per_cycle.unwrap_or(d.nuclear_depol_per_cycle),
    };
    if p.cycles.is_some() && (p.tol.is_some() || p.max_cycles.is_some()) {
        return Err(CliError::Config(
            "pump.cycles (fixed run) and pump.tol/pump.max_cycles (run to convergence) are \
             mutually exclusive"
                .into(),
        ));
    }
    let stop = match p.cycles {
        Some(n) => StopRule::Cycles(n),
        None => {
            let StopRule::Converged {
                tol: dtol,
                max_cycles: dmax,
            } = StopRule::default()
            else {
                unreachable!()
            };
            StopRule::Converged {
                tol: p.tol.unwrap_or(dtol),
                max_cycles: p.max_cycles.unwrap_or(dmax),
            }
        }
    };
    Ok(PumpBlock {
        cycle,
        stop,
        initial_populations: p.initial_populations,
    })
}

// ---------------------------------------------------------------------------
// normalization and hashing

fn opt_num(map: &mut Map<String, Value>, key: &str, v: Option<f64>) {
    if let Some(x) = v {
        map.insert(key.into(), json!(x));
    }
}

fn opt_int(map: &mut Map<String, Value>, key: &str, v: Option<usize>) {
    if let Some(x) = v {
        map.insert(key.into(), json!(x));
    }
}

/// Canonical, fully-resolved dump: every default the run uses is explicit,
/// keys are sorted, optional settings that stayed unset are omitted.
pub fn normalized_dump(cfg: &RunConfig) -> String {
    let mut root = Map::new();

    let p = &cfg.params;
    root.insert(
        "system".into(),
        json!({
            "species": species_name(p.species),
            "orbital": match cfg.orbital { Orbital::Ground => "ground", Orbital::Excited => "excited" },
            "zfs_gs_mhz": p.zfs_gs_mhz,
            "zfs_es_mhz": p.zfs_es_mhz,
            "gamma_e_mhz_per_gauss": p.gamma_e_mhz_per_g,
            "gamma_n_mhz_per_gauss": p.gamma_n_mhz_per_g,
            "a_par_gs_mhz": p.a_par_gs_mhz,
            "a_perp_gs_mhz": p.a_perp_gs_mhz,
            "a_par_es_mhz": p.a_par_es_mhz,
            "a_perp_es_mhz": p.a_perp_es_mhz,
            "quad_p_gs_mhz": p.quad_p_gs_mhz,
            "quad_p_es_mhz": p.quad_p_es_mhz,
        }),
    );

    let mut field = Map::new();
    field.insert("b0_gauss".into(), json!(cfg.b0_gauss));
    field.insert("b1_gauss".into(), json!(cfg.b1_gauss));
    opt_num(&mut field, "drive_freq_mhz", cfg.drive_freq_mhz);
    root.insert("field".into(), Value::Object(field));

    if cfg.present.sequence {
        let s = &cfg.sequence;
        let mut m = Map::new();
        opt_num(&mut m, "freq_mhz", s.freq_mhz);
        m.insert("b1_gauss".into(), json!(s.b1_gauss));
        m.insert("initial_ms".into(), json!(s.initial_ms));
        if let Some(v) = s.initial_twice_mi {
            m.insert("initial_twice_mi".into(), json!(v));
        }
        m.insert("observable".into(), json!(s.observable));
        m.insert("observable_ms".into(), json!(s.observable_ms));
        if let Some(v) = s.observable_twice_mi {
            m.insert("observable_twice_mi".into(), json!(v));
        }
        m.insert("readout_cycles".into(), json!(s.readout_cycles));
        opt_num(&mut m, "scan_start_mhz", s.scan_start_mhz);
        opt_num(&mut m, "scan_stop_mhz", s.scan_stop_mhz);
        opt_int(&mut m, "scan_points", s.scan_points);
        opt_num(&mut m, "pulse_us", s.pulse_us);
        opt_num(&mut m, "pi_fraction", s.pi_fraction);
        if let (Some(lo), Some(up)) = (s.pi_lower, s.pi_upper) {
            m.insert("pi_lower_ms".into(), json!(lo.ms));
            m.insert("pi_lower_twice_mi".into(), json!(lo.twice_mi));
            m.insert("pi_upper_ms".into(), json!(up.ms));
            m.insert("pi_upper_twice_mi".into(), json!(up.twice_mi));
        }
        opt_num(&mut m, "t_max_us", s.t_max_us);
        m.insert("t_points".into(), json!(s.t_points));
        opt_num(&mut m, "delay_max_us", s.delay_max_us);
        m.insert("delay_points".into(), json!(s.delay_points));
        m.insert(
            "second_pulse_phase_rad".into(),
            json!(s.second_pulse_phase_rad),
        );
        m.insert("coherence_time_us".into(), json!(s.coherence_time_us));
        m.insert("dt_max_us".into(), json!(s.dt_max_us));
        root.insert("sequence".into(), Value::Object(m));
    }

    if cfg.present.floquet {
        let f = &cfg.floquet;
        let mut m = Map::new();
        opt_num(&mut m, "freq_start_mhz", f.freq_start_mhz);
        opt_num(&mut m, "freq_stop_mhz", f.freq_stop_mhz);
        opt_int(&mut m, "freq_points", f.freq_points);
        m.insert("n_max".into(), json!(f.cfg.n_max));
        m.insert("n_max_cap".into(), json!(f.cfg.n_max_cap));
        m.insert("tol".into(), json!(f.cfg.tol));
        m.insert("aggregation".into(), json!(f.aggregation));
        root.insert("floquet".into(), Value::Object(m));
    }

    if cfg.present.rates {
        root.insert(
            "rates".into(),
            json!({
                "big_gamma": cfg.rates.big_gamma,
                "gamma": cfg.rates.gamma,
                "k_eq": cfg.rates.k_eq,
            }),
        );
    }

    if cfg.present.pump {
        let c = &cfg.pump.cycle;
        let mut m = Map::new();
        m.insert("es_lifetime_us".into(), json!(c.es_lifetime_us));
        m.insert("singlet_branch_ms1".into(), json!(c.singlet_branch_ms1));
        m.insert("singlet_branch_ms0".into(), json!(c.singlet_branch_ms0));
        m.insert("singlet_to_ms0".into(), json!(c.singlet_to_ms0));
        m.insert("fluor_bright".into(), json!(c.fluor_bright));
        m.insert("fluor_dark".into(), json!(c.fluor_dark));
        m.insert(
            "nuclear_depol_per_cycle".into(),
            json!(c.nuclear_depol_per_cycle),
        );
        match cfg.pump.stop {
            StopRule::Cycles(n) => {
                m.insert("cycles".into(), json!(n));
            }
            StopRule::Converged { tol, max_cycles } => {
                m.insert("tol".into(), json!(tol));
                m.insert("max_cycles".into(), json!(max_cycles));
            }
        }
        if let Some(q) = &cfg.pump.initial_populations {
            m.insert("initial_populations".into(), json!(q));
        }
        root.insert("pump".into(), Value::Object(m));
    }

    if cfg.present.fit {
        let f = &cfg.fit;
        let mut m = Map::new();
        if let Some(v) = &f.model {
            m.insert("model".into(), json!(v));
        }
        if let Some(v) = &f.input {
            m.insert("input".into(), json!(v));
        }
        m.insert("n_peaks".into(), json!(f.n_peaks));
        m.insert("shared_width".into(), json!(f.shared_width));
        opt_num(&mut m, "pulse_us", f.pulse_us);
        m.insert("damped".into(), json!(f.damped));
        root.insert("fit".into(), Value::Object(m));
    }

    if cfg.present.output || cfg.out_path.is_some() || cfg.out_format.is_some() {
        let mut m = Map::new();
        if let Some(p) = &cfg.out_path {
            m.insert("path".into(), json!(p.display().to_string()));
        }
        if let Some(f) = cfg.out_format {
            m.insert(
                "format".into(),
                json!(match f {
                    OutFormat::Csv => "csv",
                    OutFormat::Json => "json",
                }),
            );
        }
        root.insert("output".into(), Value::Object(m));
    }

    if let Some(seed) = cfg.seed {
        root.insert("seed".into(), json!(seed));
    }

    let mut text = serde_json::to_string_pretty(&Value::Object(root)).expect("static shape");
    text.push('\n');
    text
}

pub fn hex_sha256(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let digest = h.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        use std::fmt::Write;
        write!(out, "{b:02x}").expect("writing to a String");
    }
    out
}

// ---------------------------------------------------------------------------
// pieces the command runners assemble from a sequence block

impl SequenceConfig {
    pub fn initial_state(&self) -> InitialState {
        match self.initial_twice_mi {
            Some(t) => InitialState::Label(BasisLabel::new(self.initial_ms, t)),
            None => InitialState::Manifold { ms: self.initial_ms },
        }
    }

    pub fn observable(&self) -> Result<Observable, CliError> {
        let need_mi = |v: Option<i8>| {
            v.ok_or_else(|| {
                CliError::Config(format!(
                    "sequence.observable \"{}\" needs sequence.observable_twice_mi",
                    self.observable
                ))
            })
        };
        Ok(match self.observable.as_str() {
            "fluorescence" => Observable::Fluorescence {
                n_readout_cycles: self.readout_cycles,
            },
            "manifold_population" => Observable::ManifoldPopulation {
                ms: self.observable_ms,
            },
            "nuclear_projection" => Observable::NuclearProjection {
                twice_mi: need_mi(self.observable_twice_mi)?,
            },
            "population" => Observable::Population(BasisLabel::new(
                self.observable_ms,
                need_mi(self.observable_twice_mi)?,
            )),
            other => unreachable!("observable {other} was validated at load"),
        })
    }

    pub fn pulse_duration(&self) -> Result<DriveDuration, CliError> {
        if let Some(us) = self.pulse_us {
            return Ok(DriveDuration::Us(us));
        }
        if let Some(fraction) = self.pi_fraction {
            let (lower, upper) = self.pi_pair()?;
            return Ok(DriveDuration::PiFraction {
                lower,
                upper,
                fraction,
            });
        }
        Err(CliError::Config(
            "set sequence.pulse_us (fixed length) or sequence.pi_fraction with the pi_* pair \
             (calibrated length)"
                .into(),
        ))
    }

    pub fn pi_pair(&self) -> Result<(BasisLabel, BasisLabel), CliError> {
        match (self.pi_lower, self.pi_upper) {
            (Some(lo), Some(up)) => Ok((lo, up)),
            _ => Err(CliError::Config(
                "this command needs the calibration pair: pi_lower_ms, pi_lower_twice_mi, \
                 pi_upper_ms, pi_upper_twice_mi"
                    .into(),
            )),
        }
    }

    pub fn coherence(&self) -> Option<f64> {
        if self.coherence_time_us > 0.0 {
            Some(self.coherence_time_us)
        } else {
            None
        }
    }
}

/// Evenly spaced grid including both endpoints.
pub fn linspace(start: f64, stop: f64, n: usize) -> Vec<f64> {
    let step = (stop - start) / (n as f64 - 1.0);
    (0..n).map(|k| start + step * k as f64).collect()
}

/// The scan grid a frequency-sweep command was configured with.
pub fn scan_grid(s: &SequenceConfig) -> Result<Vec<f64>, CliError> {
    match (s.scan_start_mhz, s.scan_stop_mhz, s.scan_points) {
        (Some(a), Some(b), Some(n)) if b > a => Ok(linspace(a, b, n)),
        (Some(a), Some(b), Some(_)) => Err(CliError::Config(format!(
            "sequence.scan_stop_mhz ({b}) must exceed sequence.scan_start_mhz ({a})"
        ))),
        _ => Err(CliError::Config(
            "this command needs sequence.scan_start_mhz, scan_stop_mhz, and scan_points".into(),
        )),
    }
}

/// The frequency grid of a quasi-energy sweep.
pub fn floquet_grid(f: &FloquetBlock) -> Result<Vec<f64>, CliError> {
    match (f.freq_start_mhz, f.freq_stop_mhz, f.freq_points) {
        (Some(a), Some(b), Some(n)) if b > a => Ok(linspace(a, b, n)),
        (Some(a), Some(b), Some(_)) => Err(CliError::Config(format!(
            "floquet.freq_stop_mhz ({b}) must exceed floquet.freq_start_mhz ({a})"
        ))),
        _ => Err(CliError::Config(
            "this command needs floquet.freq_start_mhz, freq_stop_mhz, and freq_points".into(),
        )),
    }
}

/// Metadata every output carries, assembled once per invocation.
pub struct RunStamp {
    pub subcommand: &'static str,
    pub config_sha256: String,
    pub timestamp: Option<String>,
    pub seed: Option<u64>,
}

impl RunStamp {
    pub fn meta_lines(&self) -> Vec<(String, String)> {
        let mut lines = vec![
            ("tool".into(), format!("nv-spinlab {}", self.subcommand)),
            ("config_sha256".into(), self.config_sha256.clone()),
        ];
        if let Some(t) = &self.timestamp {
            lines.push(("generated".into(), t.clone()));
        }
        if let Some(s) = self.seed {
            lines.push(("seed".into(), s.to_string()));
        }
        lines
    }

    pub fn provenance(&self) -> BTreeMap<String, Value> {
        let mut m = BTreeMap::new();
        m.insert(
            "tool".into(),
            Value::String(format!("nv-spinlab {}", self.subcommand)),
        );
        m.insert(
            "config_sha256".into(),
            Value::String(self.config_sha256.clone()),
        );
        if let Some(t) = &self.timestamp {
            m.insert("generated".into(), Value::String(t.clone()));
        }
        if let Some(s) = self.seed {
            m.insert("seed".into(), Value::Number(s.into()));
        }
        m
    }
}
