//! Assembly of the static Hamiltonian and the magnetic drive operator.

use ndarray::Array2;

use super::operators::{embed_electron, embed_nuclear, hermiticity_deviation, spin_operators};
use super::params::{basis_labels, BasisLabel, Orbital, SpinSystemParams};
use crate::{ensure_finite, Result, C64};

/// A Hermitian matrix in the product basis, carrying its own labels.
#[derive(Debug, Clone)]
pub struct HamiltonianMatrix {
    pub matrix: Array2<C64>,
    pub labels: Vec<BasisLabel>,
}

impl HamiltonianMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Build the static Hamiltonian (MHz) for the given orbital and field:
///
/// H = Δ·Sz² + P·Iz² + γ_e B·S − γ_n B·I + A∥·Sz Iz + A⊥·(Sx Ix + Sy Iy)
///
/// with the zero-field splitting Δ, quadrupole P, and hyperfine couplings
/// taken from the orbital's parameter set. The z axis is the symmetry axis.
pub fn assemble_hamiltonian(
    params: &SpinSystemParams,
    orbital: Orbital,
    b0_gauss: [f64; 3],
) -> Result<HamiltonianMatrix> {
    params.validate()?;
    ensure_finite("b0_gauss", &b0_gauss)?;

    let e = spin_operators(2)?; // electron S = 1
    let n = spin_operators(params.species.twice_spin())?;
    let ndim = n.dim();

    let sx = embed_electron(&e.sx, ndim);
    let sy = embed_electron(&e.sy, ndim);
    let sz = embed_electron(&e.sz, ndim);
    let ix = embed_nuclear(&n.sx, 3);
    let iy = embed_nuclear(&n.sy, 3);
    let iz = embed_nuclear(&n.sz, 3);

    let zfs = params.zfs(orbital);
    let a_par = params.a_par(orbital);
    let a_perp = params.a_perp(orbital);
    let quad = params.quad_p(orbital);
    let ge = params.gamma_e_mhz_per_g;
    let gn = params.gamma_n_mhz_per_g;
    let [bx, by, bz] = b0_gauss;

    let re = |x: f64| C64::new(x, 0.0);
    let mut h = sz.dot(&sz).mapv(|z| z * re(zfs));
    h = h + iz.dot(&iz).mapv(|z| z * re(quad));
    h = h + sx.mapv(|z| z * re(ge * bx)) + sy.mapv(|z| z * re(ge * by))
        + sz.mapv(|z| z * re(ge * bz));
    h = h - (ix.mapv(|z| z * re(gn * bx)) + iy.mapv(|z| z * re(gn * by))
        + iz.mapv(|z| z * re(gn * bz)));
    h = h + sz.dot(&iz).mapv(|z| z * re(a_par));
    h = h + (sx.dot(&ix) + sy.dot(&iy)).mapv(|z| z * re(a_perp));

    debug_assert!(hermiticity_deviation(&h) < 1e-12);
    Ok(HamiltonianMatrix {
        matrix: h,
        labels: basis_labels(params.species),
    })
}

/// Magnetic coupling operator for a linearly polarized drive of amplitude
/// `b1_gauss`: V = γ_e B1·S − γ_n B1·I. The time-dependent Hamiltonian is
/// H(t) = H0 + V·cos(2π f t + φ); no rotating-wave factor is applied here.
pub fn drive_operator(params: &SpinSystemParams, b1_gauss: [f64; 3]) -> Result<Array2<C64>> {
    params.validate()?;
    ensure_finite("b1_gauss", &b1_gauss)?;

    let e = spin_operators(2)?;
    let n = spin_operators(params.species.twice_spin())?;
    let ndim = n.dim();
    let ge = params.gamma_e_mhz_per_g;
    let gn = params.gamma_n_mhz_per_g;
    let [bx, by, bz] = b1_gauss;

    let re = |x: f64| C64::new(x, 0.0);
    let v = embed_electron(&e.sx, ndim).mapv(|z| z * re(ge * bx))
        + embed_electron(&e.sy, ndim).mapv(|z| z * re(ge * by))
        + embed_electron(&e.sz, ndim).mapv(|z| z * re(ge * bz))
        - embed_nuclear(&n.sx, 3).mapv(|z| z * re(gn * bx))
        - embed_nuclear(&n.sy, 3).mapv(|z| z * re(gn * by))
        - embed_nuclear(&n.sz, 3).mapv(|z| z * re(gn * bz));
    Ok(v)
}

/// Max |H − H†|, re-exported at the Hamiltonian level for callers that
/// construct or perturb matrices themselves.
pub fn hermiticity(m: &Array2<C64>) -> f64 {
    hermiticity_deviation(m)
}
