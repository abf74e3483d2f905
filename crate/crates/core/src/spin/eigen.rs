//! Hermitian eigendecomposition with deterministic eigenvector phases.

use ndarray::{Array1, Array2};
use ndarray_linalg::{Eigh, OperationNorm, UPLO};

use super::hamiltonian::HamiltonianMatrix;
use super::operators::hermiticity_deviation;
use super::params::BasisLabel;
use crate::{Error, Result, C64};

/// Eigenvalues (ascending, MHz) and phase-fixed eigenvectors (columns) of a
/// Hermitian matrix, together with the product-basis labels of the rows.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    pub energies: Vec<f64>,
    /// Column k is the eigenvector of `energies[k]`.
    pub states: Array2<C64>,
    pub labels: Vec<BasisLabel>,
}

impl EigenSystem {
    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    /// Product-basis label with the largest weight in eigenstate `k`, and
    /// that weight |⟨label|k⟩|².
    pub fn dominant_label(&self, k: usize) -> (BasisLabel, f64) {
        let col = self.states.column(k);
        let (mut best, mut w) = (0usize, -1.0f64);
        for (i, z) in col.iter().enumerate() {
            let p = z.norm_sqr();
            if p > w {
                best = i;
                w = p;
            }
        }
        (self.labels[best], w)
    }

    /// Index of the eigenstate whose dominant label matches, if any is
    /// dominated by it.
    pub fn state_dominated_by(&self, label: BasisLabel) -> Option<usize> {
        (0..self.dim()).find(|&k| self.dominant_label(k).0 == label)
    }

    /// Weight of eigenstate `k` inside the electron manifold `ms`.
    pub fn manifold_weight(&self, k: usize, ms: i8) -> f64 {
        self.states
            .column(k)
            .iter()
            .zip(&self.labels)
            .filter(|(_, l)| l.ms == ms)
            .map(|(z, _)| z.norm_sqr())
            .sum()
    }
}

/// Diagonalize a Hamiltonian. Fails if the matrix deviates from Hermiticity
/// by more than 1e-8 relative to its largest element, or if the residual
/// ‖Hv − Ev‖ of any eigenpair exceeds 1e-9·‖H‖.
///
/// Each eigenvector's phase is fixed by making its largest-magnitude
/// component real and positive, so repeated runs and different backends
/// agree on more than |amplitudes|.
pub fn eigensolve(h: &HamiltonianMatrix) -> Result<EigenSystem> {
    let m = &h.matrix;
    let scale = m.iter().map(|z| z.norm()).fold(0.0f64, f64::max);
    let dev = hermiticity_deviation(m);
    if dev > 1e-8 * scale.max(1.0) {
        return Err(Error::NotHermitian { deviation: dev });
    }

    let (energies, raw): (Array1<f64>, Array2<C64>) = m.eigh(UPLO::Lower)?;
    // The LAPACK wrapper hands back eigenvectors of the conjugate system for
    // row-major complex input; conjugating restores H·v = E·v. The residual
    // gate below would catch any change in that convention.
    let mut vectors = raw.mapv(|z| z.conj());

    for mut col in vectors.columns_mut() {
        let (mut idx, mut best) = (0usize, -1.0f64);
        for (i, z) in col.iter().enumerate() {
            if z.norm_sqr() > best {
                best = z.norm_sqr();
                idx = i;
            }
        }
        let pivot = col[idx];
        if pivot.norm() > 0.0 {
            let phase = pivot / pivot.norm();
            let adj = phase.conj();
            col.mapv_inplace(|z| z * adj);
        }
    }

    let h_norm = m.opnorm_one().unwrap_or(scale.max(1.0));
    for (k, &e) in energies.iter().enumerate() {
        let v = vectors.column(k);
        let hv = m.dot(&v);
        let resid: f64 = hv
            .iter()
            .zip(v.iter())
            .map(|(a, b)| (a - b * C64::new(e, 0.0)).norm_sqr())
            .sum::<f64>()
            .sqrt();
        if resid > 1e-9 * h_norm.max(1.0) {
            return Err(Error::Convergence {
                what: format!("eigenpair {k} residual {resid:.3e}"),
                limit: format!("{:.3e}", 1e-9 * h_norm.max(1.0)),
            });
        }
    }

    Ok(EigenSystem {
        energies: energies.to_vec(),
        states: vectors,
        labels: h.labels.clone(),
    })
}
