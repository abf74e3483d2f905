//! One runner per subcommand. Each takes the resolved config, computes
//! through the core crate, and renders with the shared output helpers.

use std::fs;
use std::path::Path;

use nv_spinlab_core::dynamics::{
    frequency_scan, rabi_trace, ramsey_trace, DriveSegment, PulseSequence, Segment,
};
use nv_spinlab_core::fitting::{fit_lorentzians, fit_sinusoid, fit_square_pulse, FitResult};
use nv_spinlab_core::floquet::{probability_spectrum, Aggregation};
use nv_spinlab_core::pumping::{eslac_field, polarization_spectrum, pump_to_steady_state};
use nv_spinlab_core::spectrum::{Spectrum, TimeTrace};
use nv_spinlab_core::spin::{
    assemble_hamiltonian, basis_labels, eigensolve, BasisLabel, Orbital,
};

use crate::config::{floquet_grid, hex_sha256, linspace, scan_grid, RunConfig, RunStamp};
use crate::output::{
    emit, render_json, render_levels_csv, render_pump_csv, render_spectrum_csv, render_trace_csv,
};
use crate::CliError;

pub fn levels(cfg: &RunConfig, stamp: &RunStamp) -> Result<(), CliError> {
    let h = assemble_hamiltonian(&cfg.params, cfg.orbital, cfg.b0_gauss)?;
    let eig = eigensolve(&h)?;
    emit(cfg.out_path.as_deref(), &render_levels_csv(&eig, stamp))
}

pub fn eslac(cfg: &RunConfig, stamp: &RunStamp) -> Result<(), CliError> {
    // The crossing lives in the excited state; only an explicit orbital
    // overrides that.
    let orbital = if cfg.orbital_explicit {
        cfg.orbital
    } else {
        Orbital::Excited
    };
    let field = eslac_field(&cfg.params, orbital)?;
    println!("eslac_field_gauss = {field}");
    if cfg.out_path.is_some() {
        let mut m = stamp.provenance();
        m.insert("eslac_field_gauss".into(), serde_json::json!(field));
        m.insert(
            "orbital".into(),
            serde_json::json!(match orbital {
                Orbital::Ground => "ground",
                Orbital::Excited => "excited",
            }),
        );
        emit(
            cfg.out_path.as_deref(),
            &render_json(&serde_json::json!(m)),
        )?;
    }
    Ok(())
}

/// `esr` and `nmr` share one implementation: sweep the frequency of a
/// single drive pulse and record the configured observable.
pub fn scan(cfg: &RunConfig, stamp: &RunStamp) -> Result<(), CliError> {
    let s = &cfg.sequence;
    let grid = scan_grid(s)?;
    let seq = PulseSequence {
        initial: s.initial_state(),
        segments: vec![Segment::Drive(DriveSegment {
            freq_mhz: grid[0],
            b1_gauss: s.b1_gauss,
            phase_rad: 0.0,
            duration: s.pulse_duration()?,
        })],
        observable: s.observable()?,
        coherence_time_us: s.coherence(),
        dt_max_us: s.dt_max_us,
    };
    let spec = frequency_scan(
        &cfg.params,
        cfg.orbital,
        cfg.b0_gauss,
        &seq,
        0,
        &grid,
        Some(&cfg.pump.cycle),
    )?;
    emit(cfg.out_path.as_deref(), &render_spectrum_csv(&spec, stamp))
}

pub fn rabi(cfg: &RunConfig, stamp: &RunStamp) -> Result<(), CliError> {
    let s = &cfg.sequence;
    let freq = s.freq_mhz.ok_or_else(|| {
        CliError::Config("rabi needs sequence.freq_mhz (the drive frequency)".into())
    })?;
    let t_max = s.t_max_us.ok_or_else(|| {
        CliError::Config("rabi needs sequence.t_max_us (the longest pulse)".into())
    })?;
    let grid = linspace(0.0, t_max, s.t_points);
    let trace = rabi_trace(
        &cfg.params,
        cfg.orbital,
        cfg.b0_gauss,
        freq,
        s.b1_gauss,
        &s.initial_state(),
        &s.observable()?,
        &grid,
        s.dt_max_us,
        Some(&cfg.pump.cycle),
    )?;
    emit(cfg.out_path.as_deref(), &render_trace_csv(&trace, stamp))
}

pub fn ramsey(cfg: &RunConfig, stamp: &RunStamp) -> Result<(), CliError> {
    let s = &cfg.sequence;
    let freq = s.freq_mhz.ok_or_else(|| {
        CliError::Config("ramsey needs sequence.freq_mhz (the drive frequency)".into())
    })?;
    let delay_max = s.delay_max_us.ok_or_else(|| {
        CliError::Config("ramsey needs sequence.delay_max_us (the longest free evolution)".into())
    })?;
    let pair = s.pi_pair()?;
    let grid = linspace(0.0, delay_max, s.delay_points);
    let trace = ramsey_trace(
        &cfg.params,
        cfg.orbital,
        cfg.b0_gauss,
        freq,
        s.b1_gauss,
        pair,
        s.second_pulse_phase_rad,
        &grid,
        &s.observable()?,
        s.coherence(),
        s.dt_max_us,
        Some(&cfg.pump.cycle),
    )?;
    emit(cfg.out_path.as_deref(), &render_trace_csv(&trace, stamp))
}

fn aggregation(cfg: &RunConfig) -> Aggregation {
    match cfg.floquet.aggregation.as_str() {
        "nuclear_lowering" => Aggregation::NuclearLowering,
        _ => Aggregation::NuclearRaising,
    }
}

pub fn floquet_scan(cfg: &RunConfig, stamp: &RunStamp) -> Result<(), CliError> {
    let grid = floquet_grid(&cfg.floquet)?;
    let spec = probability_spectrum(
        &cfg.params,
        cfg.orbital,
        cfg.b0_gauss,
        cfg.b1_gauss,
        &grid,
        &cfg.floquet.cfg,
        &aggregation(cfg),
    )?;
    emit(cfg.out_path.as_deref(), &render_spectrum_csv(&spec, stamp))
}

pub fn polarization(cfg: &RunConfig, stamp: &RunStamp) -> Result<(), CliError> {
    let grid = floquet_grid(&cfg.floquet)?;
    let spec = polarization_spectrum(
        &cfg.params,
        cfg.orbital,
        cfg.b0_gauss,
        cfg.b1_gauss,
        &grid,
        &cfg.floquet.cfg,
        &cfg.rates,
    )?;
    emit(cfg.out_path.as_deref(), &render_spectrum_csv(&spec, stamp))
}

pub fn pump(cfg: &RunConfig, stamp: &RunStamp) -> Result<(), CliError> {
    let outcome = pump_to_steady_state(
        &cfg.params,
        &cfg.pump.cycle,
        cfg.b0_gauss[2],
        cfg.pump.initial_populations.as_deref(),
        cfg.pump.stop,
    )?;
    // Nuclear ladder by descending m_I, pulled from one electron manifold.
    let mi_names: Vec<String> = basis_labels(cfg.params.species)
        .iter()
        .filter(|l| l.ms == 0)
        .map(|l| l.mi_text())
        .collect();
    emit(
        cfg.out_path.as_deref(),
        &render_pump_csv(&outcome, &mi_names, stamp),
    )
}

// ---------------------------------------------------------------------------
// fit

/// Read a spectrum CSV: '#' metadata lines are skipped, an optional header
/// row is detected by failing to parse as numbers, then rows of
/// x,y[,y_err].
pub fn read_spectrum_csv(path: &Path) -> Result<Spectrum, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut y_err = Vec::new();
    let mut header_skipped = false;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        let nums: Result<Vec<f64>, _> = cells.iter().map(|c| c.trim().parse::<f64>()).collect();
        match nums {
            Err(_) if !header_skipped => {
                header_skipped = true;
                continue;
            }
            Err(e) => {
                return Err(CliError::Config(format!(
                    "{} line {}: {e}",
                    path.display(),
                    lineno + 1
                )))
            }
            Ok(nums) => {
                if nums.len() < 2 {
                    return Err(CliError::Config(format!(
                        "{} line {}: need at least x,y",
                        path.display(),
                        lineno + 1
                    )));
                }
                header_skipped = true;
                x.push(nums[0]);
                y.push(nums[1]);
                if nums.len() > 2 {
                    y_err.push(nums[2]);
                }
            }
        }
    }
    if x.is_empty() {
        return Err(CliError::Config(format!(
            "{} holds no data rows",
            path.display()
        )));
    }
    if !y_err.is_empty() && y_err.len() != x.len() {
        return Err(CliError::Config(format!(
            "{}: y_err present on some rows but not all",
            path.display()
        )));
    }
    Spectrum::new(x, y, "x", "y")
        .map(|mut s| {
            if !y_err.is_empty() {
                s.y_err = Some(y_err);
            }
            s
        })
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn fit(cfg: &RunConfig, stamp: &RunStamp, input_flag: Option<&Path>) -> Result<(), CliError> {
    let input = input_flag
        .map(|p| p.to_path_buf())
        .or_else(|| cfg.fit.input.as_ref().map(std::path::PathBuf::from))
        .ok_or_else(|| {
            CliError::Config("fit needs an input CSV (positional argument or fit.input)".into())
        })?;
    let model = cfg.fit.model.as_deref().ok_or_else(|| {
        CliError::Config("fit needs fit.model (lorentzians, square_pulse, or sinusoid)".into())
    })?;
    let raw_bytes = fs::read(&input)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", input.display())))?;
    let spec = read_spectrum_csv(&input)?;

    let result: FitResult = match model {
        "lorentzians" => fit_lorentzians(&spec, cfg.fit.n_peaks, cfg.fit.shared_width, None)?,
        "square_pulse" => {
            let pulse = cfg.fit.pulse_us.ok_or_else(|| {
                CliError::Config("fit.model square_pulse needs fit.pulse_us".into())
            })?;
            fit_square_pulse(&spec, pulse, None)?
        }
        "sinusoid" => {
            let trace = TimeTrace::new(spec.x.clone(), spec.y.clone(), "y")?;
            fit_sinusoid(&trace, cfg.fit.damped, None)?
        }
        other => unreachable!("fit model {other} was validated at load"),
    };

    let mut provenance = stamp.provenance();
    provenance.insert(
        "input_path".into(),
        serde_json::json!(input.display().to_string()),
    );
    provenance.insert(
        "input_sha256".into(),
        serde_json::json!(hex_sha256(&raw_bytes)),
    );
    provenance.insert("model".into(), serde_json::json!(result.model));
    provenance.insert("iterations".into(), serde_json::json!(result.n_iter));
    let doc = serde_json::json!({
        "fit": serde_json::to_value(&result).expect("FitResult serializes"),
        "provenance": provenance,
    });
    emit(cfg.out_path.as_deref(), &render_json(&doc))
}

/// A label pair for error messages and config echo.
pub fn pair_text(pair: (BasisLabel, BasisLabel)) -> String {
    format!("{} / {}", pair.0, pair.1)
}
