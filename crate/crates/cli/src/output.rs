//! Output rendering: CSV with '#'-prefixed metadata for anything tabular,
//! key-sorted JSON for structured results. Floats go through Rust's
//! shortest round-trip formatting, so identical numbers render identically
//! and '.' is always the decimal mark.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use nv_spinlab_core::pumping::PumpOutcome;
use nv_spinlab_core::spectrum::{Spectrum, TimeTrace};
use nv_spinlab_core::spin::EigenSystem;
use serde_json::Value;

use crate::config::RunStamp;
use crate::CliError;

fn meta_block(stamp: &RunStamp, extra: &[(String, String)]) -> String {
    let mut out = String::new();
    for (k, v) in stamp.meta_lines().iter().chain(extra) {
        out.push_str("# ");
        out.push_str(k);
        out.push_str(": ");
        out.push_str(v);
        out.push('\n');
    }
    out
}

fn push_row(out: &mut String, cells: &[f64]) {
    for (i, c) in cells.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&format!("{c}"));
    }
    out.push('\n');
}

pub fn render_spectrum_csv(spec: &Spectrum, stamp: &RunStamp) -> String {
    let mut extra: Vec<(String, String)> = vec![
        ("x_label".into(), spec.x_label.clone()),
        ("y_label".into(), spec.y_label.clone()),
    ];
    extra.extend(spec.meta.iter().map(|(k, v)| (k.clone(), v.clone())));
    let mut out = meta_block(stamp, &extra);

    let mut header = vec!["x".to_string(), "y".to_string()];
    if spec.y_err.is_some() {
        header.push("y_err".into());
    }
    header.extend(spec.extra.iter().map(|(name, _)| name.replace(',', ";")));
    out.push_str(&header.join(","));
    out.push('\n');

    for i in 0..spec.x.len() {
        let mut cells = vec![spec.x[i], spec.y[i]];
        if let Some(err) = &spec.y_err {
            cells.push(err[i]);
        }
        cells.extend(spec.extra.iter().map(|(_, col)| col[i]));
        push_row(&mut out, &cells);
    }
    out
}

pub fn render_trace_csv(trace: &TimeTrace, stamp: &RunStamp) -> String {
    let mut extra: Vec<(String, String)> = vec![("y_label".into(), trace.y_label.clone())];
    extra.extend(trace.meta.iter().map(|(k, v)| (k.clone(), v.clone())));
    let mut out = meta_block(stamp, &extra);
    out.push_str("t_us,y\n");
    for i in 0..trace.t_us.len() {
        push_row(&mut out, &[trace.t_us[i], trace.y[i]]);
    }
    out
}

pub fn render_levels_csv(eig: &EigenSystem, stamp: &RunStamp) -> String {
    let mut out = meta_block(
        stamp,
        &[(
            "columns".into(),
            "state index, dominant m_s, dominant m_I, energy (MHz), dominant weight".into(),
        )],
    );
    out.push_str("index,ms,mi,energy_mhz,weight\n");
    for k in 0..eig.dim() {
        let (label, weight) = eig.dominant_label(k);
        push_row(
            &mut out,
            &[
                k as f64,
                label.ms as f64,
                label.mi(),
                eig.energies[k],
                weight,
            ],
        );
    }
    out
}

pub fn render_pump_csv(
    outcome: &PumpOutcome,
    mi_names: &[String],
    stamp: &RunStamp,
) -> String {
    let mut extra: Vec<(String, String)> = vec![
        ("cycles".into(), outcome.cycles.to_string()),
        ("converged".into(), outcome.converged.to_string()),
        (
            "final_polarization".into(),
            format!("{}", outcome.polarization),
        ),
    ];
    for (name, q) in mi_names.iter().zip(&outcome.populations) {
        extra.push((format!("final_population[mI={name}]"), format!("{q}")));
    }
    let mut out = meta_block(stamp, &extra);
    out.push_str("cycle,polarization\n");
    for (i, p) in outcome.history.iter().enumerate() {
        push_row(&mut out, &[i as f64, *p]);
    }
    out
}

/// Key-sorted pretty JSON (maps are sorted by construction) plus a
/// trailing newline.
pub fn render_json(value: &Value) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("JSON value renders");
    text.push('\n');
    text
}

/// Write to the file when a path is set, otherwise to stdout.
pub fn emit(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent() {
                if !dir.as_os_str().is_empty() {
                    fs::create_dir_all(dir)
                        .map_err(|e| CliError::Run(format!("cannot create {}: {e}", dir.display())))?;
                }
            }
            fs::write(p, text)
                .map_err(|e| CliError::Run(format!("cannot write {}: {e}", p.display())))
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .map_err(|e| CliError::Run(format!("stdout: {e}")))
        }
    }
}
