//! Closed-form lineshapes and effective drive strengths for two-level
//! physics extracted from the full system.

use crate::spin::{Orbital, SpinSystemParams};
use crate::{ensure_finite, Error, Result};

/// Rabi flip probability of a square pulse: detuning δ from resonance,
/// on-resonance Rabi frequency Ω (both MHz), pulse length t (μs):
///
/// P(δ) = Ω²/(Ω² + δ²) · sin²(π·√(Ω² + δ²)·t)
///
/// This is the rotating-wave result; the full propagator deviates from it
/// at order (Ω/2f)².
pub fn square_pulse_lineshape(rabi_mhz: f64, detuning_mhz: f64, t_us: f64) -> f64 {
    let w2 = rabi_mhz * rabi_mhz;
    let g2 = w2 + detuning_mhz * detuning_mhz;
    if g2 == 0.0 {
        return 0.0;
    }
    let s = (std::f64::consts::PI * g2.sqrt() * t_us).sin();
    (w2 / g2) * s * s
}

/// Nuclear Rabi frequency (MHz) for an adjacent-m_I transition inside an
/// electron manifold, including the hyperfine enhancement: the RF field
/// tilts the electron quantization axis slightly, and the transverse
/// hyperfine coupling converts that wobble into an effective field on the
/// nucleus, amplified by roughly γ_e/γ_n.
///
/// First-order mixing of the neighboring electron manifold gives the drive
/// matrix element between the dressed pair states, and with it the
/// nutation rate of the populations:
///
/// Ω = ⟨m_I|I_x|m_I−1⟩ · B_rf · |γ_e·A⊥/(Δ + m_s·γ_e·B0z) − γ_n|
///
/// where Δ + m_s·γ_e·B0z is the gap to the admixed m_s = 0 manifold and the
/// pair matrix element is √2/2 for I = 1 and 1/2 for I = 1/2 (the same for
/// every adjacent pair of those spins, so the estimate needs no m_I). The
/// relative sign between the two terms matters: with γ_n and A⊥ as signed
/// inputs, the bare and induced fields can add or fight.
///
/// `ms` selects the manifold and must be +1 or −1. The m_s = 0 manifold is
/// excluded because this expression does not describe it: there the
/// enhancement runs through both ±1 neighbors at once, with gaps
/// Δ ∓ γ_e·B0z, and the two contributions add to the bare term instead of
/// competing with it. The expansion needs the manifold gap to dominate A⊥
/// — close to a level anticrossing it diverges and this function refuses
/// to answer rather than extrapolate.
///
/// With `bare` set the enhancement term is dropped and the result is
/// ⟨m_I|I_x|m_I−1⟩·|γ_n|·B_rf — the nutation rate the same drive would
/// produce on a decoupled nucleus, the natural yardstick for the gain.
pub fn enhanced_rabi_frequency(
    params: &SpinSystemParams,
    orbital: Orbital,
    ms: i8,
    b0z_gauss: f64,
    b_rf_gauss: f64,
    bare: bool,
) -> Result<f64> {
    params.validate()?;
    ensure_finite("b0z_gauss", &[b0z_gauss])?;
    ensure_finite("b_rf_gauss", &[b_rf_gauss])?;
    if ms != 1 && ms != -1 {
        return Err(Error::InvalidParam(format!(
            "enhancement manifold must be +1 or -1, got {ms}"
        )));
    }
    let pair_element = match params.species.twice_spin() {
        1 => 0.5,
        _ => std::f64::consts::FRAC_1_SQRT_2,
    };
    if bare {
        return Ok(pair_element * (params.gamma_n_mhz_per_g * b_rf_gauss).abs());
    }
    let gap = params.zfs(orbital) + f64::from(ms) * params.gamma_e_mhz_per_g * b0z_gauss;
    let a_perp = params.a_perp(orbital);
    if gap.abs() <= 10.0 * a_perp.abs() || gap == 0.0 {
        return Err(Error::InvalidParam(format!(
            "manifold gap {gap:.3} MHz does not dominate the transverse coupling \
             {a_perp:.3} MHz; the perturbative enhancement estimate breaks down \
             this close to the anticrossing"
        )));
    }
    let per_gauss = params.gamma_e_mhz_per_g * a_perp / gap - params.gamma_n_mhz_per_g;
    Ok(pair_element * (per_gauss * b_rf_gauss).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spin::NuclearSpecies;

    #[test]
    fn lineshape_pins_the_equal_detuning_point() {
        // δ = Ω and t = 1/(2Ω): half weight, sin²(π/√2) — a fixed point of
        // the formula useful as a cross-implementation checksum.
        let p = square_pulse_lineshape(1.0, 1.0, 0.5);
        assert!((p - 0.316_563_835_510_353_87).abs() < 1e-15);
        // Scale invariance: (Ω, δ, t) → (2Ω, 2δ, t/2).
        let q = square_pulse_lineshape(2.0, 2.0, 0.25);
        assert!((p - q).abs() < 1e-15);
    }

    #[test]
    fn lineshape_limits() {
        // On resonance, a π pulse transfers everything.
        assert!((square_pulse_lineshape(1.0, 0.0, 0.5) - 1.0).abs() < 1e-12);
        // No drive, no transfer — including the doubly degenerate origin.
        assert_eq!(square_pulse_lineshape(0.0, 1.0, 7.0), 0.0);
        assert_eq!(square_pulse_lineshape(0.0, 0.0, 7.0), 0.0);
        // Symmetric in the detuning sign.
        let a = square_pulse_lineshape(0.8, 0.3, 1.1);
        let b = square_pulse_lineshape(0.8, -0.3, 1.1);
        assert_eq!(a, b);
    }

    #[test]
    fn enhancement_dwarfs_the_bare_nuclear_response() {
        let p = SpinSystemParams::defaults(NuclearSpecies::N14);
        let bare = enhanced_rabi_frequency(&p, Orbital::Ground, -1, 0.0, 2.0, true).unwrap();
        let within = enhanced_rabi_frequency(&p, Orbital::Ground, -1, 0.0, 2.0, false).unwrap();
        // For the m_s = −1 ground manifold at zero field the gain is
        // roughly A⊥·γ_e/(Δ·γ_n) ≈ 2.6·2.8/(2870·3e-4) ≈ 8.
        assert!(within / bare > 5.0, "gain {}", within / bare);
        // Linear in the RF amplitude.
        let double = enhanced_rabi_frequency(&p, Orbital::Ground, -1, 0.0, 4.0, false).unwrap();
        assert!((double / within - 2.0).abs() < 1e-12);
        // The bare value ignores the static field and the manifold.
        let bare_high = enhanced_rabi_frequency(&p, Orbital::Ground, 1, 700.0, 2.0, true).unwrap();
        assert_eq!(bare, bare_high);
        assert!((bare - 2.0f64.sqrt() / 2.0 * p.gamma_n_mhz_per_g.abs() * 2.0).abs() < 1e-15);
    }

    #[test]
    fn static_field_narrows_one_gap_and_widens_the_other() {
        // The admixed-manifold gap is Δ + m_s·γ_e·B0z, so raising the field
        // strengthens the m_s = −1 enhancement and weakens m_s = +1.
        let p = SpinSystemParams::defaults(NuclearSpecies::N14);
        let lo = enhanced_rabi_frequency(&p, Orbital::Ground, -1, 0.0, 5.0, false).unwrap();
        let hi = enhanced_rabi_frequency(&p, Orbital::Ground, -1, 509.0, 5.0, false).unwrap();
        assert!(hi > 1.5 * lo, "m_s=-1: {lo} -> {hi}");
        let up_lo = enhanced_rabi_frequency(&p, Orbital::Ground, 1, 0.0, 5.0, false).unwrap();
        let up_hi = enhanced_rabi_frequency(&p, Orbital::Ground, 1, 509.0, 5.0, false).unwrap();
        assert!(up_hi < up_lo, "m_s=+1: {up_lo} -> {up_hi}");
        assert_eq!(lo, up_lo);
    }

    #[test]
    fn refuses_to_extrapolate_through_the_anticrossing() {
        // Near Δ/γ_e ≈ 1025 G the m_s = −1 gap collapses and the expansion
        // parameter A⊥/gap blows up.
        let p = SpinSystemParams::defaults(NuclearSpecies::N14);
        let err = enhanced_rabi_frequency(&p, Orbital::Ground, -1, 1025.0, 5.0, false);
        assert!(err.is_err());
        // The reduced excited-state splitting moves the breakdown to ~507 G.
        let err = enhanced_rabi_frequency(&p, Orbital::Excited, -1, 507.0, 5.0, false);
        assert!(err.is_err());
        assert!(enhanced_rabi_frequency(&p, Orbital::Excited, 1, 507.0, 5.0, false).is_ok());
    }

    #[test]
    fn manifold_argument_is_validated() {
        let p = SpinSystemParams::defaults(NuclearSpecies::N14);
        assert!(enhanced_rabi_frequency(&p, Orbital::Ground, 0, 0.0, 1.0, false).is_err());
        assert!(enhanced_rabi_frequency(&p, Orbital::Ground, 2, 0.0, 1.0, false).is_err());
    }
}
