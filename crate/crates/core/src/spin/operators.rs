//! Spin matrices for arbitrary spin quantum number and their embedding into
//! the electron ⊗ nucleus product space.

use ndarray::Array2;

use crate::{Error, Result, C64};

/// Cartesian spin matrices for a single spin, in the basis of descending
/// projection m = s, s−1, …, −s.
pub struct SpinOps {
    pub sx: Array2<C64>,
    pub sy: Array2<C64>,
    pub sz: Array2<C64>,
}

impl SpinOps {
    pub fn dim(&self) -> usize {
        self.sz.nrows()
    }
}

/// Build Sx, Sy, Sz for spin s = `twice_spin`/2 from the ladder-operator
/// matrix elements ⟨m±1|S±|m⟩ = √(s(s+1) − m(m±1)).
pub fn spin_operators(twice_spin: u32) -> Result<SpinOps> {
    if twice_spin == 0 {
        return Err(Error::UnsupportedSpin(
            "spin 0 has no magnetic structure".into(),
        ));
    }
    let dim = twice_spin as usize + 1;
    let s = f64::from(twice_spin) / 2.0;
    // s_plus[r, r+1] couples m = projection(r+1) to m+1 = projection(r);
    // rows are ordered by descending m, so S+ sits above the diagonal.
    let mut sp = Array2::<C64>::zeros((dim, dim));
    for r in 0..dim - 1 {
        let m = s - (r + 1) as f64;
        sp[[r, r + 1]] = C64::new((s * (s + 1.0) - m * (m + 1.0)).sqrt(), 0.0);
    }
    let sm = sp.t().mapv(|z| z.conj());
    let sx = (&sp + &sm).mapv(|z| z * 0.5);
    let sy = (&sp - &sm).mapv(|z| z * C64::new(0.0, -0.5));
    let sz = Array2::from_shape_fn((dim, dim), |(r, c)| {
        if r == c {
            C64::new(s - r as f64, 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    Ok(SpinOps { sx, sy, sz })
}

/// Kronecker product with the left factor outermost, matching the
/// electron-major basis order.
pub fn kron(a: &Array2<C64>, b: &Array2<C64>) -> Array2<C64> {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    let mut out = Array2::<C64>::zeros((ar * br, ac * bc));
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[[i, j]];
            if aij == C64::new(0.0, 0.0) {
                continue;
            }
            for k in 0..br {
                for l in 0..bc {
                    out[[i * br + k, j * bc + l]] = aij * b[[k, l]];
                }
            }
        }
    }
    out
}

/// Identity matrix of the given dimension.
pub fn identity(dim: usize) -> Array2<C64> {
    Array2::from_shape_fn((dim, dim), |(r, c)| {
        if r == c {
            C64::new(1.0, 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

/// Lift an electron-space operator to the product space.
pub fn embed_electron(op: &Array2<C64>, nuclear_dim: usize) -> Array2<C64> {
    kron(op, &identity(nuclear_dim))
}

/// Lift a nuclear-space operator to the product space.
pub fn embed_nuclear(op: &Array2<C64>, electron_dim: usize) -> Array2<C64> {
    kron(&identity(electron_dim), op)
}

/// Largest absolute deviation from Hermiticity, max |M − M†|.
pub fn hermiticity_deviation(m: &Array2<C64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let d = (m[[i, j]] - m[[j, i]].conj()).norm();
            worst = worst.max(d);
        }
    }
    worst
}
