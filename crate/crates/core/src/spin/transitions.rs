//! Transition catalogs between eigenstates and the electron level
//! anticrossing field.

use ndarray::Array2;

use super::eigen::{eigensolve, EigenSystem};
use super::hamiltonian::assemble_hamiltonian;
use super::params::{BasisLabel, Orbital, SpinSystemParams};
use crate::{Error, Result, C64};

/// One allowed transition: frequency, coupling strength under a given drive
/// operator, and the dominant character of both eigenstates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionLine {
    pub freq_mhz: f64,
    /// |⟨upper|V|lower⟩|² in MHz² for the supplied drive operator.
    pub strength: f64,
    pub lower: BasisLabel,
    pub upper: BasisLabel,
    pub lower_idx: usize,
    pub upper_idx: usize,
}

/// All transitions the drive operator `v` connects, sorted by frequency.
///
/// Pairs whose squared matrix element falls at or below `strength_floor`
/// (MHz²) are dropped; pass 0.0 to keep every coupled pair. Labels are the
/// dominant product-basis characters, which blur near avoided crossings —
/// consult the eigenvectors directly when two states share a character.
pub fn transition_catalog(
    eig: &EigenSystem,
    v: &Array2<C64>,
    strength_floor: f64,
) -> Result<Vec<TransitionLine>> {
    let d = eig.dim();
    if v.nrows() != d || v.ncols() != d {
        return Err(Error::Dimension {
            expected: d,
            got: v.nrows(),
        });
    }
    // V in the eigenbasis: W† V W.
    let w = &eig.states;
    let v_eig = w.t().mapv(|z| z.conj()).dot(v).dot(w);
    let mut lines = Vec::new();
    for i in 0..d {
        for j in (i + 1)..d {
            let strength = v_eig[[i, j]].norm_sqr();
            if strength > strength_floor {
                lines.push(TransitionLine {
                    freq_mhz: eig.energies[j] - eig.energies[i],
                    strength,
                    lower: eig.dominant_label(i).0,
                    upper: eig.dominant_label(j).0,
                    lower_idx: i,
                    upper_idx: j,
                });
            }
        }
    }
    lines.sort_by(|a, b| a.freq_mhz.total_cmp(&b.freq_mhz));
    Ok(lines)
}

/// Axial field (G) at which the ms = −1 manifold crosses ms = 0 for the
/// given orbital.
///
/// The manifolds are compared through their eigenvalue centroids weighted
/// by each eigenstate's m_s character, which keeps the crossing function
/// smooth straight through the hyperfine-split anticrossing region: the
/// weighted centroid difference equals Δ − γ_e·B exactly, independent of
/// hyperfine mixing, so the returned field marks the center of the
/// anticrossing structure.
pub fn eslac_field(params: &SpinSystemParams, orbital: Orbital) -> Result<f64> {
    params.validate()?;
    let centroid_gap = |b: f64| -> Result<f64> {
        let h = assemble_hamiltonian(params, orbital, [0.0, 0.0, b])?;
        let eig = eigensolve(&h)?;
        let mut sum = [0.0f64; 2]; // ms = −1 and ms = 0 weighted energy sums
        let mut weight = [0.0f64; 2];
        for k in 0..eig.dim() {
            let e = eig.energies[k];
            let w_m1 = eig.manifold_weight(k, -1);
            let w_0 = eig.manifold_weight(k, 0);
            sum[0] += e * w_m1;
            weight[0] += w_m1;
            sum[1] += e * w_0;
            weight[1] += w_0;
        }
        Ok(sum[0] / weight[0] - sum[1] / weight[1])
    };

    let (mut lo, mut hi) = (1.0f64, 2000.0f64);
    let (f_lo, f_hi) = (centroid_gap(lo)?, centroid_gap(hi)?);
    if f_lo <= 0.0 || f_hi >= 0.0 {
        return Err(Error::NoCrossing { lo, hi });
    }
    // Bisection: the gap function is monotone in B to excellent accuracy.
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if centroid_gap(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-9 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}
