//! Hyperfine-parameter extraction from measured nuclear line positions.
//!
//! The forward model diagonalizes the ground-state Hamiltonian at the
//! given axial field and reads off adjacent-m_I transition magnitudes in
//! the m_s = 0 manifold and in the m_s = −1 manifold (the working manifold
//! at the level anticrossing; its line magnitudes coincide with the mirror
//! manifold's under a joint sign flip of A∥ and P, which is exactly the
//! ambiguity surfaced here). Measured inputs are magnitudes, so both sign
//! branches are fitted and returned.


use super::lm::{fit_curve, CurveModel, LmOptions};
use super::FitResult;
use crate::spin::{
    assemble_hamiltonian, basis_labels, eigensolve, BasisLabel, NuclearSpecies, Orbital,
    SpinSystemParams,
};
use crate::{ensure_finite, Error, Result};

/// How the transverse hyperfine coupling enters the extraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AperpMode {
    /// Hold A⊥ fixed at this value (0 recovers the first-order treatment).
    Fixed(f64),
    /// Fit |A⊥| alongside the axial parameters. Line magnitudes only
    /// constrain its square, so the sign is not determined.
    Fit,
}

struct LevelModel {
    species: NuclearSpecies,
    b0z_gauss: f64,
    fit_quad: bool,
    a_perp: AperpMode,
}

impl LevelModel {
    fn n_params(&self) -> usize {
        1 + usize::from(self.fit_quad) + usize::from(matches!(self.a_perp, AperpMode::Fit))
    }

    /// Adjacent-m_I transition magnitudes, descending within each
    /// manifold: m_s = 0 block first, then m_s = −1.
    fn lines(&self, p: &[f64]) -> Result<Vec<f64>> {
        let mut sys = SpinSystemParams::defaults(self.species);
        sys.a_par_gs_mhz = p[0];
        let mut next = 1;
        sys.quad_p_gs_mhz = if self.fit_quad {
            next += 1;
            p[1]
        } else {
            0.0
        };
        sys.a_perp_gs_mhz = match self.a_perp {
            AperpMode::Fixed(v) => v,
            AperpMode::Fit => p[next],
        };
        let h = assemble_hamiltonian(&sys, Orbital::Ground, [0.0, 0.0, self.b0z_gauss])?;
        let eig = eigensolve(&h)?;
        let nuclear: Vec<i8> = basis_labels(self.species)
            .into_iter()
            .filter(|l| l.ms == 0)
            .map(|l| l.twice_mi)
            .collect(); // descending
        let mut out = Vec::with_capacity(2 * (nuclear.len() - 1));
        for ms in [0i8, -1] {
            let mut block = Vec::with_capacity(nuclear.len() - 1);
            for pair in nuclear.windows(2) {
                let hi = eig
                    .state_dominated_by(BasisLabel::new(ms, pair[0]))
                    .ok_or_else(|| {
                        Error::IllPosedFit(format!(
                            "no eigenstate dominated by ms={ms}, 2mI={} at these parameters",
                            pair[0]
                        ))
                    })?;
                let lo = eig
                    .state_dominated_by(BasisLabel::new(ms, pair[1]))
                    .ok_or_else(|| {
                        Error::IllPosedFit(format!(
                            "no eigenstate dominated by ms={ms}, 2mI={} at these parameters",
                            pair[1]
                        ))
                    })?;
                block.push((eig.energies[hi] - eig.energies[lo]).abs());
            }
            block.sort_by(|a, b| b.total_cmp(a));
            out.extend(block);
        }
        Ok(out)
    }
}

impl CurveModel for LevelModel {
    fn name(&self) -> &str {
        "hyperfine_levels"
    }

    fn param_names(&self) -> Vec<String> {
        let mut names = vec!["a_par_mhz".to_string()];
        if self.fit_quad {
            names.push("quad_p_mhz".into());
        }
        if matches!(self.a_perp, AperpMode::Fit) {
            names.push("a_perp_mhz".into());
        }
        names
    }

    fn eval(&self, p: &[f64], x: &[f64], out: &mut [f64]) -> Result<()> {
        let lines = self.lines(p)?;
        if lines.len() != x.len() {
            return Err(Error::Dimension {
                expected: x.len(),
                got: lines.len(),
            });
        }
        out.copy_from_slice(&lines);
        Ok(())
    }
}

/// Fit (A∥[, P][, |A⊥|]) to measured nuclear line magnitudes.
///
/// `lines_ms0_mhz` are the transitions inside m_s = 0, `lines_ms1_mhz`
/// those inside the working m_s = ∓1 manifold — two lines each for the
/// I = 1 species, one each for I = 1/2 (whose quadrupole term is
/// identically zero and is not fitted). Order within a manifold does not
/// matter; magnitudes are matched sorted.
///
/// Returns both sign branches of the axial coupling, A∥ ≤ 0 first. Line
/// magnitudes carry almost no sign information: flipping (A∥, P) jointly
/// maps the spectrum onto the opposite electron manifold, and at first
/// order the quadrupole sign alone changes nothing. Because this model
/// pins which manifold is driven, the opposite branch converges to a
/// nearby magnitude-degenerate solution rather than an exact mirror, but
/// it fits comparably well (exactly so for I = 1/2) — so the choice
/// between branches must come from prior knowledge, not from these lines.
pub fn extract_hyperfine(
    lines_ms0_mhz: &[f64],
    lines_ms1_mhz: &[f64],
    b0z_gauss: f64,
    species: NuclearSpecies,
    a_perp: AperpMode,
) -> Result<Vec<FitResult>> {
    ensure_finite("measured lines (m_s = 0)", lines_ms0_mhz)?;
    ensure_finite("measured lines (m_s = ∓1)", lines_ms1_mhz)?;
    ensure_finite("field", &[b0z_gauss])?;
    if let AperpMode::Fixed(v) = a_perp {
        ensure_finite("fixed a_perp", &[v])?;
    }
    let per_manifold = species.nuclear_dim() - 1;
    for (name, lines) in [("m_s = 0", lines_ms0_mhz), ("m_s = ∓1", lines_ms1_mhz)] {
        if lines.len() != per_manifold {
            return Err(Error::InvalidParam(format!(
                "{species} has {per_manifold} adjacent-m_I line(s) per manifold; got {} for {name}",
                lines.len()
            )));
        }
        if lines.iter().any(|&f| f <= 0.0) {
            return Err(Error::InvalidParam(
                "measured lines must be positive magnitudes".into(),
            ));
        }
    }

    let model = LevelModel {
        species,
        b0z_gauss,
        fit_quad: species == NuclearSpecies::N14,
        a_perp,
    };
    let n_data = 2 * per_manifold;
    if model.n_params() > n_data {
        return Err(Error::IllPosedFit(format!(
            "{} parameters cannot be determined from {n_data} lines; fix a_perp or supply more lines",
            model.n_params()
        )));
    }

    let mut ms0 = lines_ms0_mhz.to_vec();
    let mut ms1 = lines_ms1_mhz.to_vec();
    ms0.sort_by(|a, b| b.total_cmp(a));
    ms1.sort_by(|a, b| b.total_cmp(a));
    let y: Vec<f64> = ms0.iter().chain(ms1.iter()).copied().collect();
    let x: Vec<f64> = (0..n_data).map(|i| i as f64).collect();

    // First-order seeds. For I = 1: the m_s = 0 doublet is centered on |P|
    // and the m_s = ∓1 pair is split by 2|A∥|. For I = 1/2 the single
    // m_s = ∓1 line sits near |A∥ ± γ_n·B|.
    let (a_par_guess, quad_guess) = if species == NuclearSpecies::N14 {
        ((ms1[0] - ms1[1]) / 2.0, (ms0[0] + ms0[1]) / 2.0)
    } else {
        (ms1[0], 0.0)
    };

    let mut branches = Vec::with_capacity(2);
    for sign in [-1.0, 1.0] {
        let mut p0 = vec![sign * a_par_guess.abs()];
        let mut bounds = vec![if sign < 0.0 {
            (f64::NEG_INFINITY, 0.0)
        } else {
            (0.0, f64::INFINITY)
        }];
        if model.fit_quad {
            p0.push(sign * quad_guess.abs());
            bounds.push((f64::NEG_INFINITY, f64::INFINITY));
        }
        if matches!(a_perp, AperpMode::Fit) {
            // Start away from zero: lines depend on A⊥ only through its
            // square, so the gradient vanishes exactly at A⊥ = 0.
            p0.push(a_par_guess.abs().max(1.0));
            bounds.push((0.0, f64::INFINITY));
        }
        let mut fit = fit_curve(&model, &x, &y, None, &p0, &bounds, &LmOptions::default())?;
        fit.warnings.push(
            "line magnitudes carry no robust sign information; the opposite \
             sign branch fits comparably and the physical choice needs prior \
             knowledge"
                .into(),
        );
        if matches!(a_perp, AperpMode::Fit) {
            fit.warnings
                .push("a_perp enters through its square; magnitude reported".into());
        }
        branches.push(fit);
    }
    Ok(branches)
}
