//! Multi-segment pulse sequences on the full lab-frame Hamiltonian.
//!
//! A sequence is a list of drive pulses and free-evolution waits applied to
//! a diagonal initial mixture, finished by one scalar observable. All drive
//! segments share one absolute time axis — the oscillator keeps its phase
//! across waits — so detuning-sensitive protocols (Ramsey fringes, phase
//! cycling) come out right without any rotating-frame bookkeeping.
//!
//! States are carried as a density matrix in the bare product basis. Waits
//! evolve it exactly in the static eigenbasis, with an optional exponential
//! decay of every eigenbasis coherence standing in for dephasing; drives use
//! the same split-step integrator as [`super::propagate`].

use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stepper::{drive_propagator, propagate_sampled};
use crate::pumping::{fluorescence_signal, OpticalCycleParams};
use crate::spectrum::{Spectrum, TimeTrace};
use crate::spin::{
    assemble_hamiltonian, basis_index, basis_labels, drive_operator, eigensolve,
    transition_catalog, BasisLabel, EigenSystem, Orbital, SpinSystemParams,
};
use crate::{ensure_finite, C64, Error, Result};

/// What to read out at the end of a sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Observable {
    /// Population of one bare basis state.
    Population(BasisLabel),
    /// Total population of one electron manifold.
    ManifoldPopulation { ms: i8 },
    /// Total population of one nuclear projection across all manifolds.
    NuclearProjection { twice_mi: i8 },
    /// Expected photon count from a spin-dependent optical readout of the
    /// final populations.
    Fluorescence { n_readout_cycles: u32 },
}

impl Observable {
    /// Axis label for traces and scans producing this observable.
    pub fn axis_label(&self) -> String {
        match self {
            Observable::Population(l) => format!("population of {l}"),
            Observable::ManifoldPopulation { ms } => {
                format!("population of the m_s={ms:+} manifold")
            }
            Observable::NuclearProjection { twice_mi } => {
                format!("population with m_I={}", BasisLabel::new(0, *twice_mi).mi_text())
            }
            Observable::Fluorescence { .. } => "fluorescence (arb. units)".into(),
        }
    }
}

/// Diagonal initial condition of a sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InitialState {
    /// One bare basis state.
    Label(BasisLabel),
    /// Uniform mixture over the nuclear levels of one electron manifold —
    /// optical initialization without nuclear polarization.
    Manifold { ms: i8 },
    /// Explicit bare-basis populations (normalized internally).
    Populations(Vec<f64>),
}

/// Length of a drive segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DriveDuration {
    /// Fixed length in µs.
    Us(f64),
    /// A fraction of the π time of the labeled transition: duration
    /// = fraction / (2·|V_lu|) with V_lu the drive matrix element between
    /// the eigenstates dominated by the two labels. `fraction` = 1 is a π
    /// pulse, 0.5 a π/2 pulse. Independent of the drive frequency, so a
    /// calibrated pulse keeps its length inside a frequency scan.
    PiFraction {
        lower: BasisLabel,
        upper: BasisLabel,
        fraction: f64,
    },
}

/// One microwave/RF pulse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriveSegment {
    pub freq_mhz: f64,
    /// Linear drive amplitude along the lab x axis (Gauss).
    pub b1_gauss: f64,
    /// Oscillator phase offset (radians) on the shared time axis.
    pub phase_rad: f64,
    pub duration: DriveDuration,
}

/// One element of a sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Segment {
    Wait { duration_us: f64 },
    Drive(DriveSegment),
}

/// A complete protocol: initial state, segments, readout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSequence {
    pub initial: InitialState,
    pub segments: Vec<Segment>,
    pub observable: Observable,
    /// 1/e time of eigenbasis coherences during waits; `None` keeps waits
    /// fully coherent. Drives are assumed short against it.
    pub coherence_time_us: Option<f64>,
    /// Integrator step ceiling handed to the split-step propagator.
    pub dt_max_us: f64,
}

impl PulseSequence {
    /// A coherent sequence with the default step ceiling (50 ns, further
    /// limited by the drive period inside the integrator) and a 1 ms
    /// dephasing time.
    pub fn new(initial: InitialState, segments: Vec<Segment>, observable: Observable) -> Self {
        PulseSequence {
            initial,
            segments,
            observable,
            coherence_time_us: Some(1000.0),
            dt_max_us: 0.05,
        }
    }
}

/// Result of [`run_sequence`].
#[derive(Debug, Clone, Serialize)]
pub struct SequenceOutcome {
    /// The requested observable.
    pub value: f64,
    /// Final bare-basis populations.
    pub final_populations: Vec<f64>,
    /// Total sequence length (µs).
    pub total_time_us: f64,
    /// Non-fatal oddities: drives resonant with nothing, and the like.
    pub warnings: Vec<String>,
}

fn initial_populations(params: &SpinSystemParams, initial: &InitialState) -> Result<Vec<f64>> {
    let labels = basis_labels(params.species);
    let d = labels.len();
    match initial {
        InitialState::Label(l) => {
            let idx = basis_index(params.species, *l)?;
            let mut p = vec![0.0; d];
            p[idx] = 1.0;
            Ok(p)
        }
        InitialState::Manifold { ms } => {
            let members: Vec<usize> = labels
                .iter()
                .enumerate()
                .filter(|(_, l)| l.ms == *ms)
                .map(|(i, _)| i)
                .collect();
            if members.is_empty() {
                return Err(Error::NoSuchState(format!("m_s = {ms}")));
            }
            let w = 1.0 / members.len() as f64;
            let mut p = vec![0.0; d];
            for i in members {
                p[i] = w;
            }
            Ok(p)
        }
        InitialState::Populations(q) => {
            if q.len() != d {
                return Err(Error::Dimension {
                    expected: d,
                    got: q.len(),
                });
            }
            ensure_finite("initial populations", q)?;
            if q.iter().any(|&x| x < 0.0) {
                return Err(Error::InvalidParam(
                    "initial populations must be non-negative".into(),
                ));
            }
            let s: f64 = q.iter().sum();
            if s <= 0.0 {
                return Err(Error::InvalidParam("initial populations sum to zero".into()));
            }
            Ok(q.iter().map(|&x| x / s).collect())
        }
    }
}

fn observable_value(
    populations: &[f64],
    observable: &Observable,
    params: &SpinSystemParams,
    b0z_gauss: f64,
    cycle: Option<&OpticalCycleParams>,
) -> Result<f64> {
    let labels = basis_labels(params.species);
    match observable {
        Observable::Population(l) => Ok(populations[basis_index(params.species, *l)?]),
        Observable::ManifoldPopulation { ms } => {
            if !matches!(ms, -1 | 0 | 1) {
                return Err(Error::NoSuchState(format!("m_s = {ms}")));
            }
            Ok(labels
                .iter()
                .zip(populations)
                .filter(|(l, _)| l.ms == *ms)
                .map(|(_, p)| p)
                .sum())
        }
        Observable::NuclearProjection { twice_mi } => {
            if !labels.iter().any(|l| l.twice_mi == *twice_mi) {
                return Err(Error::NoSuchState(format!("2·m_I = {twice_mi}")));
            }
            Ok(labels
                .iter()
                .zip(populations)
                .filter(|(l, _)| l.twice_mi == *twice_mi)
                .map(|(_, p)| p)
                .sum())
        }
        Observable::Fluorescence { n_readout_cycles } => {
            let cycle = cycle.ok_or_else(|| {
                Error::InvalidParam(
                    "fluorescence observable needs optical-cycle parameters".into(),
                )
            })?;
            fluorescence_signal(populations, params, cycle, b0z_gauss, *n_readout_cycles)
        }
    }
}

/// Resolve a drive duration against the drive operator in the static
/// eigenbasis.
fn resolve_duration(
    duration: &DriveDuration,
    eig: &EigenSystem,
    v: &Array2<C64>,
) -> Result<f64> {
    match duration {
        DriveDuration::Us(t) => {
            ensure_finite("drive duration", &[*t])?;
            if *t < 0.0 {
                return Err(Error::InvalidParam("drive duration must be >= 0".into()));
            }
            Ok(*t)
        }
        DriveDuration::PiFraction {
            lower,
            upper,
            fraction,
        } => {
            ensure_finite("pi fraction", &[*fraction])?;
            if *fraction < 0.0 {
                return Err(Error::InvalidParam("pi fraction must be >= 0".into()));
            }
            let li = eig.state_dominated_by(*lower).ok_or_else(|| {
                Error::NoSuchState(format!("no eigenstate dominated by {lower}"))
            })?;
            let ui = eig.state_dominated_by(*upper).ok_or_else(|| {
                Error::NoSuchState(format!("no eigenstate dominated by {upper}"))
            })?;
            let wl = eig.states.column(li);
            let wu = eig.states.column(ui);
            let me: C64 = wl
                .iter()
                .enumerate()
                .map(|(i, a)| {
                    a.conj()
                        * v.row(i)
                            .iter()
                            .zip(wu.iter())
                            .map(|(vij, b)| vij * b)
                            .sum::<C64>()
                })
                .sum();
            let rabi = me.norm();
            if rabi <= 1e-12 {
                return Err(Error::NotCoupled(lower.to_string(), upper.to_string()));
            }
            Ok(fraction / (2.0 * rabi))
        }
    }
}

/// Free evolution of a density matrix for `t_us` in the static eigenbasis,
/// with optional coherence decay.
fn evolve_wait(
    rho: &Array2<C64>,
    eig: &EigenSystem,
    t_us: f64,
    coherence_time_us: Option<f64>,
) -> Array2<C64> {
    let w = &eig.states;
    let w_dag = w.t().mapv(|z| z.conj());
    let mut rho_e = w_dag.dot(rho).dot(w);
    let decay = coherence_time_us.map_or(1.0, |t2| (-t_us / t2).exp());
    let d = rho_e.nrows();
    for i in 0..d {
        for j in 0..d {
            if i == j {
                continue;
            }
            let phase = C64::from_polar(
                decay,
                -std::f64::consts::TAU * (eig.energies[i] - eig.energies[j]) * t_us,
            );
            rho_e[[i, j]] *= phase;
        }
    }
    w.dot(&rho_e).dot(&w_dag)
}

/// Check a drive frequency against the transition catalog and describe the
/// mismatch if it is resonant with nothing.
fn off_resonance_warning(
    freq_mhz: f64,
    eig: &EigenSystem,
    v: &Array2<C64>,
) -> Result<Option<String>> {
    let lines = transition_catalog(eig, v, 0.0)?;
    let strongest = lines.iter().map(|l| l.strength).fold(0.0f64, f64::max);
    // Strengths are |matrix element|²; admit anything within 1e-4 of the
    // strongest line in amplitude (1e-8 in strength), which keeps weak
    // hyperfine-enabled nuclear lines in the "allowed" set.
    let nearest = lines
        .iter()
        .filter(|l| l.strength >= 1e-8 * strongest)
        .map(|l| (l.freq_mhz - freq_mhz).abs())
        .fold(f64::INFINITY, f64::min);
    if nearest > 0.25 * freq_mhz.abs() {
        return Ok(Some(format!(
            "drive at {freq_mhz} MHz is {nearest:.3} MHz from the nearest allowed transition"
        )));
    }
    Ok(None)
}

/// Run a pulse sequence and evaluate its observable.
///
/// `b0_gauss` is the full static field vector; the optical readout model,
/// when used, sees its axial component. `cycle` is only required by the
/// fluorescence observable.
pub fn run_sequence(
    params: &SpinSystemParams,
    orbital: Orbital,
    b0_gauss: [f64; 3],
    seq: &PulseSequence,
    cycle: Option<&OpticalCycleParams>,
) -> Result<SequenceOutcome> {
    params.validate()?;
    ensure_finite("dt_max_us", &[seq.dt_max_us])?;
    if seq.dt_max_us <= 0.0 {
        return Err(Error::InvalidParam("dt_max_us must be > 0".into()));
    }
    if let Some(t2) = seq.coherence_time_us {
        if !(t2 > 0.0) {
            return Err(Error::InvalidParam("coherence_time_us must be > 0".into()));
        }
    }

    let h0 = assemble_hamiltonian(params, orbital, b0_gauss)?;
    let eig = eigensolve(&h0)?;
    let d = h0.dim();

    let p0 = initial_populations(params, &seq.initial)?;
    let mut rho = Array2::<C64>::zeros((d, d));
    for (i, &p) in p0.iter().enumerate() {
        rho[[i, i]] = C64::new(p, 0.0);
    }

    let mut warnings = Vec::new();
    let mut clock_us = 0.0;
    for (k, segment) in seq.segments.iter().enumerate() {
        match segment {
            Segment::Wait { duration_us } => {
                ensure_finite("wait duration", &[*duration_us])?;
                if *duration_us < 0.0 {
                    return Err(Error::InvalidParam("wait duration must be >= 0".into()));
                }
                if *duration_us > 0.0 {
                    rho = evolve_wait(&rho, &eig, *duration_us, seq.coherence_time_us);
                    clock_us += duration_us;
                }
            }
            Segment::Drive(drive) => {
                ensure_finite(
                    "drive segment",
                    &[drive.freq_mhz, drive.b1_gauss, drive.phase_rad],
                )?;
                let v = drive_operator(params, [drive.b1_gauss, 0.0, 0.0])?;
                let t = resolve_duration(&drive.duration, &eig, &v)?;
                if let Some(w) = off_resonance_warning(drive.freq_mhz, &eig, &v)? {
                    warnings.push(format!("segment {k}: {w}"));
                }
                if t > 0.0 {
                    let u = drive_propagator(
                        &h0,
                        &v,
                        drive.freq_mhz,
                        drive.phase_rad,
                        clock_us,
                        t,
                        seq.dt_max_us,
                    )?;
                    let u_dag = u.t().mapv(|z| z.conj());
                    rho = u.dot(&rho).dot(&u_dag);
                    clock_us += t;
                }
            }
        }
    }

    let populations: Vec<f64> = (0..d).map(|i| rho[[i, i]].re.max(0.0)).collect();
    let value = observable_value(&populations, &seq.observable, params, b0_gauss[2], cycle)?;
    Ok(SequenceOutcome {
        value,
        final_populations: populations,
        total_time_us: clock_us,
        warnings,
    })
}

/// Continuous-drive time trace: populations sampled on `t_grid_us` under
/// one uninterrupted drive, reduced to `observable` at each sample.
#[allow(clippy::too_many_arguments)]
pub fn rabi_trace(
    params: &SpinSystemParams,
    orbital: Orbital,
    b0_gauss: [f64; 3],
    freq_mhz: f64,
    b1_gauss: f64,
    initial: &InitialState,
    observable: &Observable,
    t_grid_us: &[f64],
    dt_max_us: f64,
    cycle: Option<&OpticalCycleParams>,
) -> Result<TimeTrace> {
    params.validate()?;
    let h0 = assemble_hamiltonian(params, orbital, b0_gauss)?;
    let v = drive_operator(params, [b1_gauss, 0.0, 0.0])?;
    let d = h0.dim();
    let p0 = initial_populations(params, initial)?;

    let mut pops = vec![vec![0.0f64; d]; t_grid_us.len()];
    for (k, &w) in p0.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let mut psi0 = Array1::<C64>::zeros(d);
        psi0[k] = C64::new(1.0, 0.0);
        let states = propagate_sampled(&h0, &v, freq_mhz, 0.0, &psi0, t_grid_us, dt_max_us)?;
        for (row, psi) in pops.iter_mut().zip(states) {
            for (i, z) in psi.iter().enumerate() {
                row[i] += w * z.norm_sqr();
            }
        }
    }

    let y: Result<Vec<f64>> = pops
        .iter()
        .map(|p| observable_value(p, observable, params, b0_gauss[2], cycle))
        .collect();
    let mut trace = TimeTrace::new(t_grid_us.to_vec(), y?, observable.axis_label())?;
    trace
        .meta
        .insert("drive_freq_mhz".into(), format!("{freq_mhz}"));
    trace.meta.insert("b1_gauss".into(), format!("{b1_gauss}"));
    Ok(trace)
}

/// Two-pulse interference trace: π/2 — wait τ — π/2 on the labeled pair,
/// as a function of τ. Fringes beat at the drive's detuning from the pair.
#[allow(clippy::too_many_arguments)]
pub fn ramsey_trace(
    params: &SpinSystemParams,
    orbital: Orbital,
    b0_gauss: [f64; 3],
    freq_mhz: f64,
    b1_gauss: f64,
    pair: (BasisLabel, BasisLabel),
    second_pulse_phase_rad: f64,
    delay_grid_us: &[f64],
    observable: &Observable,
    coherence_time_us: Option<f64>,
    dt_max_us: f64,
    cycle: Option<&OpticalCycleParams>,
) -> Result<TimeTrace> {
    ensure_finite("delay grid", delay_grid_us)?;
    let pulse = |phase: f64| {
        Segment::Drive(DriveSegment {
            freq_mhz,
            b1_gauss,
            phase_rad: phase,
            duration: DriveDuration::PiFraction {
                lower: pair.0,
                upper: pair.1,
                fraction: 0.5,
            },
        })
    };
    let y: Result<Vec<f64>> = delay_grid_us
        .par_iter()
        .map(|&tau| {
            let seq = PulseSequence {
                initial: InitialState::Label(pair.0),
                segments: vec![
                    pulse(0.0),
                    Segment::Wait { duration_us: tau },
                    pulse(second_pulse_phase_rad),
                ],
                observable: observable.clone(),
                coherence_time_us,
                dt_max_us,
            };
            Ok(run_sequence(params, orbital, b0_gauss, &seq, cycle)?.value)
        })
        .collect();
    let mut trace = TimeTrace::new(delay_grid_us.to_vec(), y?, observable.axis_label())?;
    trace
        .meta
        .insert("drive_freq_mhz".into(), format!("{freq_mhz}"));
    trace.meta.insert(
        "pair".into(),
        format!("{} / {}", pair.0, pair.1),
    );
    Ok(trace)
}

/// Sweep the frequency of one drive segment across a grid, re-running the
/// whole sequence at each point. Calibrated (`PiFraction`) durations do not
/// change with the swept frequency.
pub fn frequency_scan(
    params: &SpinSystemParams,
    orbital: Orbital,
    b0_gauss: [f64; 3],
    seq: &PulseSequence,
    segment_index: usize,
    freq_grid_mhz: &[f64],
    cycle: Option<&OpticalCycleParams>,
) -> Result<Spectrum> {
    ensure_finite("frequency grid", freq_grid_mhz)?;
    match seq.segments.get(segment_index) {
        Some(Segment::Drive(_)) => {}
        Some(Segment::Wait { .. }) => {
            return Err(Error::InvalidParam(format!(
                "segment {segment_index} is a wait, not a drive"
            )));
        }
        None => {
            return Err(Error::InvalidParam(format!(
                "segment index {segment_index} out of range ({} segments)",
                seq.segments.len()
            )));
        }
    }
    let outcomes: Result<Vec<SequenceOutcome>> = freq_grid_mhz
        .par_iter()
        .map(|&f| {
            let mut local = seq.clone();
            if let Segment::Drive(d) = &mut local.segments[segment_index] {
                d.freq_mhz = f;
            }
            run_sequence(params, orbital, b0_gauss, &local, cycle)
        })
        .collect();
    let outcomes = outcomes?;
    let mut spec = Spectrum::new(
        freq_grid_mhz.to_vec(),
        outcomes.iter().map(|o| o.value).collect(),
        "drive frequency (MHz)",
        &seq.observable.axis_label(),
    )?;
    let mut seen = std::collections::BTreeSet::new();
    for o in &outcomes {
        for w in &o.warnings {
            seen.insert(w.clone());
        }
    }
    if !seen.is_empty() {
        spec.meta.insert(
            "warnings".into(),
            seen.into_iter().collect::<Vec<_>>().join("; "),
        );
    }
    Ok(spec)
}
