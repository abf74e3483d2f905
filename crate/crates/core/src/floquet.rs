//! Time-averaged transition probabilities under a periodic drive, computed
//! from the quasi-energy eigenproblem instead of time propagation.
//!
//! For H(t) = H0 + V·cos(2π f t) the Fourier ansatz turns the Schrödinger
//! equation into an eigenproblem for a block-tridiagonal matrix: replica
//! `n` carries H0 + n·f on the diagonal and couples to replicas n±1
//! through V/2. With eigenvectors |q⟩ of that matrix, the drive-phase- and
//! time-averaged probability of finding the system in bare state β after
//! preparing α is
//!
//! P̄(α→β) = Σ_q Σ_n |⟨β,n|q⟩|² · |⟨q|α,0⟩|²
//!
//! which is exactly row-stochastic whenever all replica eigenvectors are
//! kept — completeness of the truncated basis does the bookkeeping. The
//! truncation error lives in how well the central-replica physics has
//! converged, checked here by comparing against a deeper truncation.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::spectrum::Spectrum;
use crate::spin::{
    assemble_hamiltonian, basis_index, drive_operator, eigensolve, hermiticity, BasisLabel,
    HamiltonianMatrix, Orbital, SpinSystemParams,
};
use crate::{ensure_finite, Error, Result, C64};

/// Truncation and convergence policy for the quasi-energy eigenproblem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FloquetConfig {
    /// Initial number of Fourier replicas on each side of the carrier.
    pub n_max: usize,
    /// Largest allowed probability change when deepening the truncation by
    /// two replicas; exceeded → double `n_max` and retry.
    pub tol: f64,
    /// Hard ceiling on `n_max` before giving up.
    pub n_max_cap: usize,
}

impl Default for FloquetConfig {
    fn default() -> Self {
        FloquetConfig {
            n_max: 8,
            tol: 1e-6,
            n_max_cap: 64,
        }
    }
}

impl FloquetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_max == 0 || self.n_max_cap < self.n_max {
            return Err(Error::InvalidParam(format!(
                "replica counts out of order: n_max {} cap {}",
                self.n_max, self.n_max_cap
            )));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::InvalidParam("tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// Drive-averaged transition probabilities between all bare basis states.
#[derive(Debug, Clone)]
pub struct TransitionProbabilityTable {
    /// `probs[[a, b]]` = P̄(a → b); every row sums to one.
    pub probs: Array2<f64>,
    pub labels: Vec<BasisLabel>,
    /// Replica depth that met the tolerance.
    pub n_max_used: usize,
    /// Largest per-element change in the final deepening step.
    pub convergence_gap: f64,
    /// Per bare state, the largest single quasi-energy eigenvector overlap
    /// |⟨q|α,0⟩|². Values below ~0.6 mean the bare label has lost meaning
    /// at this drive strength and the row should be read with care.
    pub label_concentration: Vec<f64>,
}

impl TransitionProbabilityTable {
    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    /// P̄ between two labeled bare states.
    pub fn between(&self, from: BasisLabel, to: BasisLabel) -> Result<f64> {
        let sp = species_of(&self.labels)?;
        let a = basis_index(sp, from)?;
        let b = basis_index(sp, to)?;
        Ok(self.probs[[a, b]])
    }
}

fn species_of(labels: &[BasisLabel]) -> Result<crate::spin::NuclearSpecies> {
    match labels.len() {
        6 => Ok(crate::spin::NuclearSpecies::N15),
        9 => Ok(crate::spin::NuclearSpecies::N14),
        d => Err(Error::Dimension { expected: 6, got: d }),
    }
}

/// Assemble the block-tridiagonal quasi-energy matrix with `n_max` replicas
/// on each side: dimension d·(2·n_max+1).
pub fn build_floquet_matrix(
    h0: &Array2<C64>,
    v: &Array2<C64>,
    drive_freq_mhz: f64,
    n_max: usize,
) -> Result<Array2<C64>> {
    let d = h0.nrows();
    if h0.ncols() != d || v.nrows() != d || v.ncols() != d {
        return Err(Error::Dimension {
            expected: d,
            got: v.nrows(),
        });
    }
    ensure_finite("drive frequency", &[drive_freq_mhz])?;
    if drive_freq_mhz <= 0.0 {
        return Err(Error::InvalidParam(
            "quasi-energy matrix needs a positive drive frequency".into(),
        ));
    }
    let blocks = 2 * n_max + 1;
    let big = d * blocks;
    let mut k = Array2::<C64>::zeros((big, big));
    for b in 0..blocks {
        let n = b as isize - n_max as isize;
        let shift = C64::new(n as f64 * drive_freq_mhz, 0.0);
        for i in 0..d {
            for j in 0..d {
                k[[b * d + i, b * d + j]] = h0[[i, j]];
            }
            k[[b * d + i, b * d + i]] += shift;
        }
        if b + 1 < blocks {
            for i in 0..d {
                for j in 0..d {
                    let half = v[[i, j] ] * C64::new(0.5, 0.0);
                    k[[b * d + i, (b + 1) * d + j]] = half;
                    k[[(b + 1) * d + i, b * d + j]] = half;
                }
            }
        }
    }
    Ok(k)
}

/// One evaluation of the averaged-probability table at fixed replica depth.
fn probability_pass(
    h0: &Array2<C64>,
    v: &Array2<C64>,
    freq: f64,
    n_max: usize,
    labels: &[BasisLabel],
) -> Result<(Array2<f64>, Vec<f64>)> {
    let d = h0.nrows();
    let k = build_floquet_matrix(h0, v, freq, n_max)?;
    let eig = eigensolve(&HamiltonianMatrix {
        matrix: k,
        labels: vec![labels[0]; d * (2 * n_max + 1)],
    })?;
    let center = n_max * d;
    let mut probs = Array2::<f64>::zeros((d, d));
    let mut concentration = vec![0.0f64; d];
    for q in eig.states.columns() {
        // Weight of this quasi-energy state on each bare state in the
        // central replica, and its total weight on each bare state across
        // all replicas.
        let mut w_central = vec![0.0f64; d];
        let mut w_total = vec![0.0f64; d];
        for (row, z) in q.iter().enumerate() {
            let p = z.norm_sqr();
            w_total[row % d] += p;
            if row >= center && row < center + d {
                w_central[row - center] += p;
            }
        }
        for a in 0..d {
            if w_central[a] == 0.0 {
                continue;
            }
            concentration[a] = concentration[a].max(w_central[a]);
            for b in 0..d {
                probs[[a, b]] += w_central[a] * w_total[b];
            }
        }
    }
    Ok((probs, concentration))
}

/// Drive-averaged transition probabilities, deepened until two extra
/// replicas change nothing beyond `cfg.tol`.
pub fn avg_transition_probabilities(
    h0: &HamiltonianMatrix,
    v: &Array2<C64>,
    drive_freq_mhz: f64,
    cfg: &FloquetConfig,
) -> Result<TransitionProbabilityTable> {
    cfg.validate()?;
    let scale = h0
        .matrix
        .iter()
        .map(|z| z.norm())
        .fold(0.0f64, f64::max)
        .max(1.0);
    if hermiticity(&h0.matrix) > 1e-8 * scale || hermiticity(v) > 1e-8 * scale {
        return Err(Error::NotHermitian {
            deviation: hermiticity(&h0.matrix).max(hermiticity(v)),
        });
    }
    let mut n_max = cfg.n_max;
    loop {
        let (p1, _) = probability_pass(&h0.matrix, v, drive_freq_mhz, n_max, &h0.labels)?;
        let (p2, conc) = probability_pass(&h0.matrix, v, drive_freq_mhz, n_max + 2, &h0.labels)?;
        let gap = (&p1 - &p2).iter().map(|x| x.abs()).fold(0.0f64, f64::max);
        if gap < cfg.tol {
            return Ok(TransitionProbabilityTable {
                probs: p2,
                labels: h0.labels.clone(),
                n_max_used: n_max + 2,
                convergence_gap: gap,
                label_concentration: conc,
            });
        }
        if n_max >= cfg.n_max_cap {
            return Err(Error::Convergence {
                what: format!("quasi-energy truncation (gap {gap:.3e} at n_max {n_max})"),
                limit: format!("n_max cap {} at tol {:.1e}", cfg.n_max_cap, cfg.tol),
            });
        }
        n_max = (n_max * 2).min(cfg.n_max_cap);
    }
}

/// How to reduce a probability table to one number per drive frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Aggregation {
    /// Σ over nuclear-raising flips out of m_s = 0: (0,ν) → (m_s', ν+1).
    NuclearRaising,
    /// Σ over nuclear-lowering flips out of m_s = 0: (0,ν) → (m_s', ν−1).
    NuclearLowering,
    /// Sum over an explicit list of (from, to) bare-state pairs.
    Pairs(Vec<(BasisLabel, BasisLabel)>),
}

pub(crate) fn aggregate(table: &TransitionProbabilityTable, how: &Aggregation) -> Result<f64> {
    let mut total = 0.0;
    match how {
        Aggregation::NuclearRaising | Aggregation::NuclearLowering => {
            let step: i8 = if matches!(how, Aggregation::NuclearRaising) {
                2
            } else {
                -2
            };
            for (a, la) in table.labels.iter().enumerate() {
                if la.ms != 0 {
                    continue;
                }
                for (b, lb) in table.labels.iter().enumerate() {
                    if lb.twice_mi == la.twice_mi + step {
                        total += table.probs[[a, b]];
                    }
                }
            }
        }
        Aggregation::Pairs(pairs) => {
            if pairs.is_empty() {
                return Err(Error::InvalidParam(
                    "empty pair list aggregates to nothing".into(),
                ));
            }
            for (from, to) in pairs {
                total += table.between(*from, *to)?;
            }
        }
    }
    Ok(total)
}

/// Aggregated transition probability across a drive-frequency grid.
///
/// The returned spectrum carries two extra columns: `n_max_used` and
/// `min_label_concentration`; rows where the latter dips below 0.6 sit in
/// a strong-mixing window where bare-state language is shaky.
pub fn probability_spectrum(
    params: &SpinSystemParams,
    orbital: Orbital,
    b0_gauss: [f64; 3],
    b1_gauss: [f64; 3],
    freq_grid_mhz: &[f64],
    cfg: &FloquetConfig,
    how: &Aggregation,
) -> Result<Spectrum> {
    params.validate()?;
    ensure_finite("frequency grid", freq_grid_mhz)?;
    let h0 = assemble_hamiltonian(params, orbital, b0_gauss)?;
    let v = drive_operator(params, b1_gauss)?;

    let rows: Result<Vec<(f64, f64, f64)>> = freq_grid_mhz
        .par_iter()
        .map(|&f| {
            let table = avg_transition_probabilities(&h0, &v, f, cfg)?;
            let y = aggregate(&table, how)?;
            let min_conc = table
                .label_concentration
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min);
            Ok((y, table.n_max_used as f64, min_conc))
        })
        .collect();
    let rows = rows?;

    let mut spec = Spectrum::new(
        freq_grid_mhz.to_vec(),
        rows.iter().map(|r| r.0).collect(),
        "drive frequency (MHz)",
        "summed transition probability",
    )?;
    spec.push_column("n_max_used", rows.iter().map(|r| r.1).collect())?;
    spec.push_column(
        "min_label_concentration",
        rows.iter().map(|r| r.2).collect(),
    )?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spin::NuclearSpecies;

    fn n15_setup(b1: [f64; 3]) -> (HamiltonianMatrix, Array2<C64>, SpinSystemParams) {
        let p = SpinSystemParams::defaults(NuclearSpecies::N15);
        let h0 = assemble_hamiltonian(&p, Orbital::Ground, [0.0, 0.0, 350.0]).unwrap();
        let v = drive_operator(&p, b1).unwrap();
        (h0, v, p)
    }

    #[test]
    fn rows_sum_to_one_by_completeness() {
        let (h0, v, _) = n15_setup([2.0, 0.0, 1.0]);
        let cfg = FloquetConfig::default();
        let table = avg_transition_probabilities(&h0, &v, 980.0, &cfg).unwrap();
        for (a, row) in table.probs.rows().into_iter().enumerate() {
            let s: f64 = row.sum();
            assert!((s - 1.0).abs() < 1e-12, "row {a} sums to {s}");
        }
        assert!(table.probs.iter().all(|&p| (-1e-14..=1.0 + 1e-12).contains(&p)));
    }

    #[test]
    fn table_is_symmetric_at_convergence() {
        let (h0, v, _) = n15_setup([1.5, 0.0, 0.0]);
        let cfg = FloquetConfig::default();
        // On the m_s 0 → −1 resonance, where mixing is strongest.
        let f = 2870.0 - 2.799 * 350.0;
        let table = avg_transition_probabilities(&h0, &v, f, &cfg).unwrap();
        let d = table.dim();
        for a in 0..d {
            for b in 0..d {
                let asym = (table.probs[[a, b]] - table.probs[[b, a]]).abs();
                assert!(asym < 1e-5, "P({a}→{b}) asymmetry {asym}");
            }
        }
    }

    #[test]
    fn resonant_drive_mixes_the_target_pair_to_a_half() {
        let (h0, v, _) = n15_setup([1.0, 0.0, 0.0]);
        let eig = eigensolve(&h0).unwrap();
        let i = eig.state_dominated_by(BasisLabel::new(0, 1)).unwrap();
        let j = eig.state_dominated_by(BasisLabel::new(-1, 1)).unwrap();
        let f = eig.energies[j] - eig.energies[i];
        let cfg = FloquetConfig::default();
        let table = avg_transition_probabilities(&h0, &v, f, &cfg).unwrap();
        let p_flip = table
            .between(BasisLabel::new(0, 1), BasisLabel::new(-1, 1))
            .unwrap();
        // Time-averaged resonant two-level transfer is 1/2.
        assert!((p_flip - 0.5).abs() < 0.02, "averaged transfer {p_flip}");
    }

    #[test]
    fn far_off_resonance_nothing_moves() {
        let (h0, v, _) = n15_setup([0.5, 0.0, 0.0]);
        let cfg = FloquetConfig::default();
        let table = avg_transition_probabilities(&h0, &v, 333.0, &cfg).unwrap();
        for a in 0..table.dim() {
            assert!(table.probs[[a, a]] > 0.999, "diagonal {}", table.probs[[a, a]]);
        }
        // Bare labels stay sharp far from any resonance.
        assert!(table.label_concentration.iter().all(|&c| c > 0.99));
    }

    #[test]
    fn replica_shift_invariance() {
        // Deepening the truncation by a few replicas must not move converged
        // probabilities (this is the convergence criterion applied twice).
        let (h0, v, _) = n15_setup([1.0, 0.0, 0.5]);
        let f = 900.0;
        let labels = h0.labels.clone();
        let (p8, _) = probability_pass(&h0.matrix, &v, f, 8, &labels).unwrap();
        let (p12, _) = probability_pass(&h0.matrix, &v, f, 12, &labels).unwrap();
        let gap = (&p8 - &p12).iter().map(|x| x.abs()).fold(0.0f64, f64::max);
        assert!(gap < 1e-7, "gap {gap}");
    }

    #[test]
    fn rejects_bad_inputs() {
        let (h0, v, _) = n15_setup([1.0, 0.0, 0.0]);
        let cfg = FloquetConfig::default();
        assert!(avg_transition_probabilities(&h0, &v, 0.0, &cfg).is_err());
        assert!(avg_transition_probabilities(&h0, &v, -5.0, &cfg).is_err());
        let bad = FloquetConfig {
            n_max: 0,
            ..FloquetConfig::default()
        };
        assert!(avg_transition_probabilities(&h0, &v, 100.0, &bad).is_err());
        let mut v_bad = v.clone();
        v_bad[[0, 1]] += C64::new(0.3, 0.0);
        assert!(avg_transition_probabilities(&h0, &v_bad, 100.0, &cfg).is_err());
    }
}
