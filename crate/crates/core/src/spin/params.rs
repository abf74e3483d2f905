//! Physical parameters of the electron–nucleus system and the applied fields.

use serde::{Deserialize, Serialize};

use crate::{ensure_finite, Error, Result};

/// Nuclear species hyperfine-coupled to the electron spin.
///
/// `C13` and `N15` are spin-1/2; `N14` is spin-1 and carries a quadrupole
/// term. The gyromagnetic ratio signs follow the bare nuclear moments
/// (negative for ¹⁵N).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NuclearSpecies {
    C13,
    N15,
    N14,
}

impl NuclearSpecies {
    /// Twice the nuclear spin quantum number (1 for I=1/2, 2 for I=1).
    pub fn twice_spin(self) -> u32 {
        match self {
            NuclearSpecies::C13 | NuclearSpecies::N15 => 1,
            NuclearSpecies::N14 => 2,
        }
    }

    /// Nuclear Hilbert-space dimension 2I+1.
    pub fn nuclear_dim(self) -> usize {
        self.twice_spin() as usize + 1
    }

    /// Bare nuclear gyromagnetic ratio in MHz/G (signed).
    pub fn gamma_n(self) -> f64 {
        match self {
            NuclearSpecies::C13 => 1.0705e-3,
            NuclearSpecies::N15 => -4.316e-4,
            NuclearSpecies::N14 => 3.077e-4,
        }
    }
}

impl std::fmt::Display for NuclearSpecies {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            NuclearSpecies::C13 => "13C",
            NuclearSpecies::N15 => "15N",
            NuclearSpecies::N14 => "14N",
        };
        write!(f, "{s}")
    }
}

/// Orbital state selecting which zero-field splitting and hyperfine set apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Orbital {
    Ground,
    Excited,
}

/// Every energy scale of the coupled system, in MHz and MHz/G.
///
/// Defaults per species are conventional values: the ground-state ¹⁴N set is
/// the measured one (A∥ = −2.162, P = −4.945 MHz); excited-state hyperfine
/// couplings are nominal literature-range values and freely overridable —
/// except for the electron zero-field splittings (2870 / 1420 MHz) and
/// γ_e = 2.799 MHz/G, nothing here is sacred.
///
/// The ground-state perpendicular hyperfine coupling `a_perp_gs` deserves a
/// note: line positions constrain it only at second order, so treat it as a
/// fit (or user-supplied) parameter rather than a constant of nature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpinSystemParams {
    pub species: NuclearSpecies,
    /// Ground-state zero-field splitting Δ (MHz).
    pub zfs_gs_mhz: f64,
    /// Excited-state zero-field splitting D (MHz).
    pub zfs_es_mhz: f64,
    /// Electron gyromagnetic ratio (MHz/G).
    pub gamma_e_mhz_per_g: f64,
    /// Nuclear gyromagnetic ratio (MHz/G, signed).
    pub gamma_n_mhz_per_g: f64,
    pub a_par_gs_mhz: f64,
    pub a_perp_gs_mhz: f64,
    pub a_par_es_mhz: f64,
    pub a_perp_es_mhz: f64,
    /// Ground-state quadrupole P (MHz); zero for I=1/2 species.
    pub quad_p_gs_mhz: f64,
    /// Excited-state quadrupole P (MHz); zero for I=1/2 species.
    pub quad_p_es_mhz: f64,
}

impl SpinSystemParams {
    /// Conventional parameter set for a species.
    pub fn defaults(species: NuclearSpecies) -> Self {
        let common = |a_par_gs, a_perp_gs, a_par_es, a_perp_es, p_gs, p_es| SpinSystemParams {
            species,
            zfs_gs_mhz: 2870.0,
            zfs_es_mhz: 1420.0,
            gamma_e_mhz_per_g: 2.799,
            gamma_n_mhz_per_g: species.gamma_n(),
            a_par_gs_mhz: a_par_gs,
            a_perp_gs_mhz: a_perp_gs,
            a_par_es_mhz: a_par_es,
            a_perp_es_mhz: a_perp_es,
            quad_p_gs_mhz: p_gs,
            quad_p_es_mhz: p_es,
        };
        match species {
            // GS values give the ~130 MHz splitting seen in ODMR for a
            // first-shell carbon; the ES coupling of that carbon is poorly
            // constrained, and the nominal contact value below places its
            // flip-flop crossing near the magic field.
            NuclearSpecies::C13 => common(130.0, 30.0, 20.0, 20.0, 0.0, 0.0),
            NuclearSpecies::N15 => common(3.03, 3.65, 40.0, 40.0, 0.0, 0.0),
            NuclearSpecies::N14 => common(-2.162, -2.62, -40.0, -23.0, -4.945, -4.945),
        }
    }

    /// Reject non-finite entries and a vanishing electron gyromagnetic ratio.
    pub fn validate(&self) -> Result<()> {
        ensure_finite(
            "spin system parameters",
            &[
                self.zfs_gs_mhz,
                self.zfs_es_mhz,
                self.gamma_e_mhz_per_g,
                self.gamma_n_mhz_per_g,
                self.a_par_gs_mhz,
                self.a_perp_gs_mhz,
                self.a_par_es_mhz,
                self.a_perp_es_mhz,
                self.quad_p_gs_mhz,
                self.quad_p_es_mhz,
            ],
        )?;
        if self.gamma_e_mhz_per_g == 0.0 {
            return Err(Error::InvalidParam("gamma_e must be nonzero".into()));
        }
        Ok(())
    }

    pub fn zfs(&self, orbital: Orbital) -> f64 {
        match orbital {
            Orbital::Ground => self.zfs_gs_mhz,
            Orbital::Excited => self.zfs_es_mhz,
        }
    }

    pub fn a_par(&self, orbital: Orbital) -> f64 {
        match orbital {
            Orbital::Ground => self.a_par_gs_mhz,
            Orbital::Excited => self.a_par_es_mhz,
        }
    }

    pub fn a_perp(&self, orbital: Orbital) -> f64 {
        match orbital {
            Orbital::Ground => self.a_perp_gs_mhz,
            Orbital::Excited => self.a_perp_es_mhz,
        }
    }

    pub fn quad_p(&self, orbital: Orbital) -> f64 {
        match orbital {
            Orbital::Ground => self.quad_p_gs_mhz,
            Orbital::Excited => self.quad_p_es_mhz,
        }
    }

    /// Total Hilbert-space dimension 3·(2I+1).
    pub fn dim(&self) -> usize {
        3 * self.species.nuclear_dim()
    }
}

/// Static field, drive field amplitude, and drive frequency.
///
/// `b1_gauss` is the full cosine amplitude: the lab-frame drive term is
/// `B1·(γ_e S − γ_n I)·cos(2π f t)` with no rotating-wave factor of two.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldConfig {
    pub b0_gauss: [f64; 3],
    pub b1_gauss: [f64; 3],
    pub drive_freq_mhz: f64,
}

impl FieldConfig {
    pub fn validate(&self) -> Result<()> {
        ensure_finite("b0_gauss", &self.b0_gauss)?;
        ensure_finite("b1_gauss", &self.b1_gauss)?;
        ensure_finite("drive_freq_mhz", &[self.drive_freq_mhz])?;
        if self.drive_freq_mhz < 0.0 {
            return Err(Error::InvalidParam("drive_freq_mhz must be >= 0".into()));
        }
        Ok(())
    }
}

/// One product-basis state, identified by its electron and nuclear
/// projections. `twice_mi` stores 2·m_I so half-integer projections stay
/// exact: ±1 means m_I = ±1/2 for the I=1/2 species, while I=1 uses
/// −2, 0, +2 for m_I = −1, 0, +1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BasisLabel {
    /// Electron projection m_s ∈ {+1, 0, −1}.
    pub ms: i8,
    /// Twice the nuclear projection 2·m_I.
    pub twice_mi: i8,
}

impl BasisLabel {
    pub fn new(ms: i8, twice_mi: i8) -> Self {
        BasisLabel { ms, twice_mi }
    }

    /// Nuclear projection as a float (−1.0, −0.5, 0.0, 0.5, 1.0).
    pub fn mi(&self) -> f64 {
        f64::from(self.twice_mi) / 2.0
    }

    /// Nuclear projection as exact text: "+1", "0", "-1/2", …
    pub fn mi_text(&self) -> String {
        if self.twice_mi % 2 == 0 {
            format!("{:+}", self.twice_mi / 2)
        } else {
            format!("{:+}/2", self.twice_mi)
        }
    }
}

impl std::fmt::Display for BasisLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ms={:+},mI={}", self.ms, self.mi_text())
    }
}

/// Product-basis labels in storage order: m_s ∈ {+1, 0, −1} outermost,
/// nuclear projection descending innermost.
pub fn basis_labels(species: NuclearSpecies) -> Vec<BasisLabel> {
    let twice_i = species.twice_spin() as i8;
    let mut labels = Vec::with_capacity(3 * (twice_i as usize + 1));
    for ms in [1i8, 0, -1] {
        let mut tm = twice_i;
        while tm >= -twice_i {
            labels.push(BasisLabel::new(ms, tm));
            tm -= 2;
        }
    }
    labels
}

/// Index of a label in the storage order, or an error naming the offender.
pub fn basis_index(species: NuclearSpecies, label: BasisLabel) -> Result<usize> {
    basis_labels(species)
        .iter()
        .position(|l| *l == label)
        .ok_or_else(|| Error::NoSuchState(format!("{label} for {species}")))
}
