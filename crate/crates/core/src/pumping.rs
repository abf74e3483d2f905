//! Optical cycling: excited-state flip-flops, cycle-by-cycle nuclear
//! pumping, the rate-equation steady state under a microwave drive, and
//! spin-dependent fluorescence.
//!
//! The pump model is deliberately incoherent. Each optical cycle excites
//! the electron, gives the hyperfine flip-flop one exponentially
//! distributed excited-state residence to act in, funnels flipped
//! population back to m_s = 0 through the singlet, and lets a small
//! residual process shake the nuclear level ladder. Everything else —
//! which pairs anticross where, and how strongly — comes from the
//! excited-state Hamiltonian itself.

use ndarray::{Array1, Array2};
use ndarray_linalg::Solve;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::floquet::{avg_transition_probabilities, Aggregation, FloquetConfig, TransitionProbabilityTable};
use crate::spectrum::Spectrum;
use crate::spin::{
    assemble_hamiltonian, basis_index, basis_labels, drive_operator, BasisLabel, Orbital,
    SpinSystemParams,
};
use crate::{ensure_finite, Error, Result};

/// Phenomenology of one excitation–decay round trip.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpticalCycleParams {
    /// Mean excited-state residence before decay (μs).
    pub es_lifetime_us: f64,
    /// Intersystem-crossing probability from the m_s = ±1 excited states.
    pub singlet_branch_ms1: f64,
    /// Intersystem-crossing probability from the m_s = 0 excited state.
    pub singlet_branch_ms0: f64,
    /// Fraction of singlet decays that land in the m_s = 0 ground state.
    pub singlet_to_ms0: f64,
    /// Photons collected from a radiative pass (arbitrary units).
    pub fluor_bright: f64,
    /// Relative yield of a pass that routes through the singlet.
    pub fluor_dark: f64,
    /// Probability per cycle that the nuclear level takes one step of an
    /// unbiased random walk along the ladder — the lumped effect of every
    /// depolarizing channel the coherent flip-flop does not capture.
    pub nuclear_depol_per_cycle: f64,
}

impl Default for OpticalCycleParams {
    fn default() -> Self {
        OpticalCycleParams {
            es_lifetime_us: 0.012,
            singlet_branch_ms1: 0.5,
            singlet_branch_ms0: 0.05,
            singlet_to_ms0: 1.0,
            fluor_bright: 1.0,
            fluor_dark: 0.3,
            nuclear_depol_per_cycle: 0.015,
        }
    }
}

impl OpticalCycleParams {
    pub fn validate(&self) -> Result<()> {
        ensure_finite(
            "optical cycle parameters",
            &[
                self.es_lifetime_us,
                self.singlet_branch_ms1,
                self.singlet_branch_ms0,
                self.singlet_to_ms0,
                self.fluor_bright,
                self.fluor_dark,
                self.nuclear_depol_per_cycle,
            ],
        )?;
        if self.es_lifetime_us <= 0.0 {
            return Err(Error::InvalidParam("es_lifetime_us must be > 0".into()));
        }
        for (name, v) in [
            ("singlet_branch_ms1", self.singlet_branch_ms1),
            ("singlet_branch_ms0", self.singlet_branch_ms0),
            ("singlet_to_ms0", self.singlet_to_ms0),
            ("nuclear_depol_per_cycle", self.nuclear_depol_per_cycle),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParam(format!(
                    "{name} must lie in [0, 1], got {v}"
                )));
            }
        }
        if self.fluor_bright < 0.0 || self.fluor_dark < 0.0 {
            return Err(Error::InvalidParam("fluorescence yields must be >= 0".into()));
        }
        Ok(())
    }
}

/// Probability that one excited-state pass flips the labeled pair.
///
/// The pair is treated as a two-level system cut out of the excited-state
/// Hamiltonian at axial field `b0z_gauss`: coupling gap V = 2|H_ab|,
/// diagonal splitting δ = |H_aa − H_bb|, generalized frequency
/// Ω̃ = √(V² + δ²). Averaging the Rabi oscillation over an exponential
/// residence of mean τ gives
///
/// p = V²/(V² + δ²) · ½·(1 − 1/(1 + (2π·Ω̃·τ)²))
///
/// which peaks at ½·(1 − 1/(1+(2πVτ)²)) on the pair's own anticrossing.
pub fn eslac_flip_flop_probability(
    params: &SpinSystemParams,
    b0z_gauss: f64,
    es_lifetime_us: f64,
    from: BasisLabel,
    to: BasisLabel,
) -> Result<f64> {
    params.validate()?;
    ensure_finite("field and lifetime", &[b0z_gauss, es_lifetime_us])?;
    if es_lifetime_us <= 0.0 {
        return Err(Error::InvalidParam("es_lifetime_us must be > 0".into()));
    }
    if from == to {
        return Err(Error::InvalidParam(format!(
            "flip-flop needs two distinct states, got {from} twice"
        )));
    }
    let h = assemble_hamiltonian(params, Orbital::Excited, [0.0, 0.0, b0z_gauss])?;
    let a = basis_index(params.species, from)?;
    let b = basis_index(params.species, to)?;
    let scale = h
        .matrix
        .iter()
        .map(|z| z.norm())
        .fold(0.0f64, f64::max)
        .max(1.0);
    let coupling = h.matrix[[a, b]].norm();
    if coupling <= 1e-12 * scale {
        return Err(Error::NotCoupled(from.to_string(), to.to_string()));
    }
    let v = 2.0 * coupling;
    let delta = h.matrix[[a, a]].re - h.matrix[[b, b]].re;
    let omega2 = v * v + delta * delta;
    let x = std::f64::consts::TAU * omega2.sqrt() * es_lifetime_us;
    Ok(v * v / omega2 * 0.5 * (1.0 - 1.0 / (1.0 + x * x)))
}

/// Probability that an initiated excited-state flip sticks: the flipped
/// population must reach m_s = 0 through the singlet before an equally
/// resonant pass undoes it. Solving the resulting Markov chain of
/// excitation rounds gives s̃ + (1 − s̃)·s̃/(s̃ + p) with
/// s̃ = singlet_branch_ms1·singlet_to_ms0.
fn commit_probability(p_flip: f64, cycle: &OpticalCycleParams) -> f64 {
    let s = cycle.singlet_branch_ms1 * cycle.singlet_to_ms0;
    if s == 0.0 {
        return 0.0;
    }
    s + (1.0 - s) * s / (s + p_flip)
}

/// Per-cycle flip probabilities of every m_s = 0 nuclear level, ordered by
/// descending m_I (index 0 = highest). `raise[k]` drives (0, m_I) →
/// (−1, m_I+1); `lower[k]` drives (0, m_I) → (+1, m_I−1). Ladder edges and
/// uncoupled pairs contribute zero.
pub fn cycle_flip_probabilities(
    params: &SpinSystemParams,
    cycle: &OpticalCycleParams,
    b0z_gauss: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    cycle.validate()?;
    let n = params.species.nuclear_dim();
    let labels: Vec<BasisLabel> = basis_labels(params.species)
        .into_iter()
        .filter(|l| l.ms == 0)
        .collect();
    let mut raise = vec![0.0f64; n];
    let mut lower = vec![0.0f64; n];
    for (k, l) in labels.iter().enumerate() {
        if k > 0 {
            match eslac_flip_flop_probability(
                params,
                b0z_gauss,
                cycle.es_lifetime_us,
                *l,
                BasisLabel::new(-1, l.twice_mi + 2),
            ) {
                Ok(p) => raise[k] = p,
                Err(Error::NotCoupled(..)) => {}
                Err(e) => return Err(e),
            }
        }
        if k + 1 < n {
            match eslac_flip_flop_probability(
                params,
                b0z_gauss,
                cycle.es_lifetime_us,
                *l,
                BasisLabel::new(1, l.twice_mi - 2),
            ) {
                Ok(p) => lower[k] = p,
                Err(Error::NotCoupled(..)) => {}
                Err(e) => return Err(e),
            }
        }
    }
    Ok((raise, lower))
}

/// One optical cycle as a stochastic matrix on the nuclear levels
/// (descending m_I): committed flip-flops first, then the depolarizing
/// random-walk step.
pub fn pump_cycle_matrix(
    params: &SpinSystemParams,
    cycle: &OpticalCycleParams,
    b0z_gauss: f64,
) -> Result<Array2<f64>> {
    let (raise, lower) = cycle_flip_probabilities(params, cycle, b0z_gauss)?;
    let n = raise.len();
    let mut flip = Array2::<f64>::zeros((n, n));
    for k in 0..n {
        let up = raise[k] * commit_probability(raise[k], cycle);
        let down = lower[k] * commit_probability(lower[k], cycle);
        debug_assert!(up + down <= 1.0);
        if k > 0 {
            flip[[k - 1, k]] = up;
        }
        if k + 1 < n {
            flip[[k + 1, k]] = down;
        }
        flip[[k, k]] = 1.0 - up - down;
    }
    let d = cycle.nuclear_depol_per_cycle;
    let mut walk = Array2::<f64>::zeros((n, n));
    for k in 0..n {
        let mut stay = 1.0;
        if k > 0 {
            walk[[k - 1, k]] = 0.5 * d;
            stay -= 0.5 * d;
        }
        if k + 1 < n {
            walk[[k + 1, k]] = 0.5 * d;
            stay -= 0.5 * d;
        }
        walk[[k, k]] = stay;
    }
    Ok(walk.dot(&flip))
}

/// Stopping rule for repeated application of the cycle map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StopRule {
    /// Run exactly this many cycles.
    Cycles(usize),
    /// Run until the largest per-level population change drops below `tol`,
    /// failing if `max_cycles` is hit first.
    Converged { tol: f64, max_cycles: usize },
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule::Converged {
            tol: 1e-10,
            max_cycles: 200_000,
        }
    }
}

/// Result of pumping: nuclear populations by descending m_I, the net
/// polarization P(+I) − P(−I), and the cycle-by-cycle polarization record.
#[derive(Debug, Clone, Serialize)]
pub struct PumpOutcome {
    pub populations: Vec<f64>,
    pub polarization: f64,
    pub cycles: usize,
    pub converged: bool,
    pub history: Vec<f64>,
}

fn polarization_of(q: &Array1<f64>) -> f64 {
    q[0] - q[q.len() - 1]
}

/// Apply the optical cycle map until the stopping rule is met.
///
/// `initial` is a nuclear population vector by descending m_I (normalized
/// internally); `None` starts from the thermal, uniform distribution.
pub fn pump_to_steady_state(
    params: &SpinSystemParams,
    cycle: &OpticalCycleParams,
    b0z_gauss: f64,
    initial: Option<&[f64]>,
    stop: StopRule,
) -> Result<PumpOutcome> {
    let m = pump_cycle_matrix(params, cycle, b0z_gauss)?;
    let n = m.nrows();
    let mut q: Array1<f64> = match initial {
        Some(q0) => {
            if q0.len() != n {
                return Err(Error::Dimension {
                    expected: n,
                    got: q0.len(),
                });
            }
            ensure_finite("initial populations", q0)?;
            if q0.iter().any(|&x| x < 0.0) {
                return Err(Error::InvalidParam(
                    "initial populations must be non-negative".into(),
                ));
            }
            let s: f64 = q0.iter().sum();
            if s <= 0.0 {
                return Err(Error::InvalidParam("initial populations sum to zero".into()));
            }
            Array1::from_iter(q0.iter().map(|&x| x / s))
        }
        None => Array1::from_elem(n, 1.0 / n as f64),
    };

    let (tol, max_cycles, require_convergence) = match stop {
        StopRule::Cycles(c) => (0.0, c, false),
        StopRule::Converged { tol, max_cycles } => (tol, max_cycles, true),
    };
    let mut history = Vec::with_capacity(max_cycles.min(1 << 16));
    let mut converged = false;
    let mut cycles = 0;
    while cycles < max_cycles {
        let next = m.dot(&q);
        let delta = next
            .iter()
            .zip(q.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        q = next;
        cycles += 1;
        history.push(polarization_of(&q));
        if require_convergence && delta < tol {
            converged = true;
            break;
        }
    }
    if require_convergence && !converged {
        return Err(Error::Convergence {
            what: "optical pumping populations".into(),
            limit: format!("{max_cycles} cycles at tol {tol:.1e}"),
        });
    }
    Ok(PumpOutcome {
        polarization: polarization_of(&q),
        populations: q.to_vec(),
        cycles,
        converged: converged || !require_convergence,
        history,
    })
}

/// Rate constants for the driven steady state: `big_gamma` for drive
/// transitions that also flip the electron (optically recycled), `gamma`
/// for nuclear-only transitions inside m_s = 0, and a uniform pairwise
/// exchange `k_eq` that keeps the generator connected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateParams {
    pub big_gamma: f64,
    pub gamma: f64,
    pub k_eq: f64,
}

impl Default for RateParams {
    fn default() -> Self {
        RateParams {
            big_gamma: 1.0,
            gamma: 2.5,
            k_eq: 1e-5,
        }
    }
}

impl RateParams {
    pub fn validate(&self) -> Result<()> {
        ensure_finite("rate parameters", &[self.big_gamma, self.gamma, self.k_eq])?;
        if self.big_gamma < 0.0 || self.gamma < 0.0 {
            return Err(Error::InvalidParam("rates must be >= 0".into()));
        }
        if self.k_eq <= 0.0 {
            return Err(Error::InvalidParam(
                "k_eq must be > 0 to keep the rate generator connected".into(),
            ));
        }
        Ok(())
    }
}

/// Steady state of the nuclear rate equations under a driven transition
/// table.
#[derive(Debug, Clone, Serialize)]
pub struct RateSteadyState {
    /// Nuclear populations by descending m_I.
    pub populations: Vec<f64>,
    /// P(+I) − P(−I).
    pub polarization: f64,
    /// Ladder-climbing rates feeding the generator (diagnostic).
    pub up_rates: Vec<f64>,
    pub down_rates: Vec<f64>,
}

/// Build nuclear-ladder rates from a transition-probability table and solve
/// for the stationary distribution.
///
/// Transitions start from the m_s = 0 manifold — the optical cycle parks
/// the electron there, which is what breaks the symmetry of the averaged
/// probabilities and lets a symmetric table pump asymmetrically.
pub fn equilibrium_polarization(
    table: &TransitionProbabilityTable,
    rates: &RateParams,
) -> Result<RateSteadyState> {
    rates.validate()?;
    let nuclear: Vec<i8> = {
        let mut tms: Vec<i8> = table
            .labels
            .iter()
            .filter(|l| l.ms == 0)
            .map(|l| l.twice_mi)
            .collect();
        tms.sort_by(|a, b| b.cmp(a));
        tms
    };
    let n = nuclear.len();
    if n < 2 {
        return Err(Error::InvalidParam(
            "rate model needs at least two nuclear levels".into(),
        ));
    }

    let rate_between = |tm_from: i8, tm_to: i8| -> Result<f64> {
        let mut r = 0.0;
        for ms_f in [1i8, -1] {
            r += rates.big_gamma
                * table.between(BasisLabel::new(0, tm_from), BasisLabel::new(ms_f, tm_to))?;
        }
        r += rates.gamma
            * table.between(BasisLabel::new(0, tm_from), BasisLabel::new(0, tm_to))?;
        Ok(r)
    };

    let mut up = vec![0.0f64; n];
    let mut down = vec![0.0f64; n];
    let mut g = Array2::<f64>::zeros((n, n));
    for k in 0..n {
        if k > 0 {
            up[k] = rate_between(nuclear[k], nuclear[k] + 2)?;
            g[[k - 1, k]] += up[k];
        }
        if k + 1 < n {
            down[k] = rate_between(nuclear[k], nuclear[k] - 2)?;
            g[[k + 1, k]] += down[k];
        }
        for j in 0..n {
            if j != k {
                g[[j, k]] += rates.k_eq;
            }
        }
    }
    for k in 0..n {
        let col_sum: f64 = (0..n).map(|j| g[[j, k]]).sum::<f64>() - g[[k, k]];
        g[[k, k]] = -col_sum;
    }

    // Stationary vector: replace one balance row with normalization.
    for j in 0..n {
        g[[n - 1, j]] = 1.0;
    }
    let mut b = Array1::<f64>::zeros(n);
    b[n - 1] = 1.0;
    let q = g.solve(&b)?;
    if q.iter().any(|&x| !(x > -1e-12)) {
        return Err(Error::IllPosedFit(format!(
            "stationary populations not non-negative: {:?}",
            q.to_vec()
        )));
    }
    let q = q.mapv(|x| x.max(0.0));
    Ok(RateSteadyState {
        polarization: q[0] - q[n - 1],
        populations: q.to_vec(),
        up_rates: up,
        down_rates: down,
    })
}

/// Steady-state nuclear polarization across a drive-frequency grid,
/// with the summed raising/lowering probabilities as extra columns.
#[allow(clippy::too_many_arguments)]
pub fn polarization_spectrum(
    params: &SpinSystemParams,
    orbital: Orbital,
    b0_gauss: [f64; 3],
    b1_gauss: [f64; 3],
    freq_grid_mhz: &[f64],
    cfg: &FloquetConfig,
    rates: &RateParams,
) -> Result<Spectrum> {
    params.validate()?;
    rates.validate()?;
    ensure_finite("frequency grid", freq_grid_mhz)?;
    let h0 = assemble_hamiltonian(params, orbital, b0_gauss)?;
    let v = drive_operator(params, b1_gauss)?;

    struct Row {
        pol: f64,
        raising: f64,
        lowering: f64,
        min_conc: f64,
    }
    let rows: Result<Vec<Row>> = freq_grid_mhz
        .par_iter()
        .map(|&f| {
            let table = avg_transition_probabilities(&h0, &v, f, cfg)?;
            let eq = equilibrium_polarization(&table, rates)?;
            Ok(Row {
                pol: eq.polarization,
                raising: crate::floquet::aggregate(&table, &Aggregation::NuclearRaising)?,
                lowering: crate::floquet::aggregate(&table, &Aggregation::NuclearLowering)?,
                min_conc: table
                    .label_concentration
                    .iter()
                    .cloned()
                    .fold(f64::INFINITY, f64::min),
            })
        })
        .collect();
    let rows = rows?;

    let mut spec = Spectrum::new(
        freq_grid_mhz.to_vec(),
        rows.iter().map(|r| r.pol).collect(),
        "drive frequency (MHz)",
        "nuclear polarization",
    )?;
    spec.push_column("raising_probability", rows.iter().map(|r| r.raising).collect())?;
    spec.push_column(
        "lowering_probability",
        rows.iter().map(|r| r.lowering).collect(),
    )?;
    spec.push_column(
        "min_label_concentration",
        rows.iter().map(|r| r.min_conc).collect(),
    )?;
    Ok(spec)
}

/// Per-basis-state probability that one readout cycle routes through the
/// singlet (the "dark pass" fraction).
pub fn dark_pass_fractions(
    params: &SpinSystemParams,
    cycle: &OpticalCycleParams,
    b0z_gauss: f64,
) -> Result<Vec<f64>> {
    cycle.validate()?;
    let (raise, lower) = cycle_flip_probabilities(params, cycle, b0z_gauss)?;
    let labels = basis_labels(params.species);
    let nuclear: Vec<i8> = labels
        .iter()
        .filter(|l| l.ms == 0)
        .map(|l| l.twice_mi)
        .collect();
    let mut out = Vec::with_capacity(labels.len());
    for l in &labels {
        if l.ms == 0 {
            let k = nuclear.iter().position(|&tm| tm == l.twice_mi).unwrap();
            let p_flip = (raise[k] + lower[k]).min(1.0);
            out.push((1.0 - p_flip) * cycle.singlet_branch_ms0 + p_flip * cycle.singlet_branch_ms1);
        } else {
            out.push(cycle.singlet_branch_ms1);
        }
    }
    Ok(out)
}

/// Expected photon count from `n_readout_cycles` optical cycles applied to
/// a population distribution over the full product basis.
///
/// m_s = ±1 population starts dim and brightens as the singlet shelves it
/// back into m_s = 0 with per-cycle probability
/// singlet_branch_ms1·singlet_to_ms0; m_s = 0 population fluoresces at its
/// steady yield throughout. Nuclear flips during readout are neglected.
pub fn fluorescence_signal(
    populations: &[f64],
    params: &SpinSystemParams,
    cycle: &OpticalCycleParams,
    b0z_gauss: f64,
    n_readout_cycles: u32,
) -> Result<f64> {
    cycle.validate()?;
    let labels = basis_labels(params.species);
    if populations.len() != labels.len() {
        return Err(Error::Dimension {
            expected: labels.len(),
            got: populations.len(),
        });
    }
    ensure_finite("populations", populations)?;
    if n_readout_cycles == 0 {
        return Err(Error::InvalidParam("need at least one readout cycle".into()));
    }
    let dark = dark_pass_fractions(params, cycle, b0z_gauss)?;
    let yield_of = |d: f64| (1.0 - d) * cycle.fluor_bright + d * cycle.fluor_dark;
    let n = f64::from(n_readout_cycles);
    let reset = cycle.singlet_branch_ms1 * cycle.singlet_to_ms0;

    let mut signal = 0.0;
    for (i, l) in labels.iter().enumerate() {
        if populations[i] == 0.0 {
            continue;
        }
        let photons = if l.ms == 0 {
            n * yield_of(dark[i])
        } else {
            // Yield once repolarized: the m_s = 0 state with the same
            // nuclear projection.
            let home = basis_index(params.species, BasisLabel::new(0, l.twice_mi))?;
            let y_dim = yield_of(cycle.singlet_branch_ms1);
            let y_bright = yield_of(dark[home]);
            if reset > 0.0 {
                let still = (1.0 - reset).powf(n);
                y_bright * n + (y_dim - y_bright) * (1.0 - still) / reset
            } else {
                y_dim * n
            }
        };
        signal += populations[i] * photons;
    }
    Ok(signal)
}
