//! Randomized structural invariants: statements that must hold for any
//! physically sensible inputs, not just the worked examples pinned in the
//! value tests. Each property names the invariant it guards.

use ndarray::{Array1, Array2};
use nv_spinlab_core::dynamics::{propagate, square_pulse_lineshape};
use nv_spinlab_core::floquet::{
    avg_transition_probabilities, FloquetConfig, TransitionProbabilityTable,
};
use nv_spinlab_core::pumping::{
    equilibrium_polarization, pump_to_steady_state, OpticalCycleParams, RateParams, StopRule,
};
use nv_spinlab_core::spin::{
    assemble_hamiltonian, basis_labels, drive_operator, eigensolve, HamiltonianMatrix,
    NuclearSpecies, Orbital, SpinSystemParams,
};
use nv_spinlab_core::C64;
use proptest::prelude::*;

fn any_species() -> impl Strategy<Value = NuclearSpecies> {
    prop_oneof![
        Just(NuclearSpecies::N14),
        Just(NuclearSpecies::N15),
        Just(NuclearSpecies::C13),
    ]
}

fn any_orbital() -> impl Strategy<Value = Orbital> {
    prop_oneof![Just(Orbital::Ground), Just(Orbital::Excited)]
}

/// Defaults for the species with the couplings scrambled inside
/// laboratory-plausible windows.
fn any_params() -> impl Strategy<Value = SpinSystemParams> {
    (
        any_species(),
        -150.0f64..150.0,
        -150.0f64..150.0,
        -10.0f64..10.0,
        -60.0f64..60.0,
        -60.0f64..60.0,
    )
        .prop_map(|(sp, a_par, a_perp, quad, a_par_es, a_perp_es)| {
            let mut p = SpinSystemParams::defaults(sp);
            p.a_par_gs_mhz = a_par;
            p.a_perp_gs_mhz = a_perp;
            p.quad_p_gs_mhz = quad;
            p.a_par_es_mhz = a_par_es;
            p.a_perp_es_mhz = a_perp_es;
            p
        })
}

fn any_field() -> impl Strategy<Value = [f64; 3]> {
    [
        -300.0f64..300.0,
        -300.0f64..300.0,
        -1200.0f64..1200.0,
    ]
}

fn max_abs_diff(a: &Array2<C64>, b: &Array2<C64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

proptest! {
    #[test]
    fn hamiltonian_is_hermitian(
        p in any_params(),
        orbital in any_orbital(),
        b0 in any_field(),
    ) {
        let h = assemble_hamiltonian(&p, orbital, b0).unwrap();
        let h_dag = h.matrix.t().mapv(|z| z.conj());
        prop_assert!(max_abs_diff(&h.matrix, &h_dag) < 1e-10);
    }

    #[test]
    fn eigenvalues_sum_to_the_trace(
        p in any_params(),
        orbital in any_orbital(),
        b0 in any_field(),
    ) {
        let h = assemble_hamiltonian(&p, orbital, b0).unwrap();
        let eig = eigensolve(&h).unwrap();
        let trace: f64 = h.matrix.diag().iter().map(|z| z.re).sum();
        let sum: f64 = eig.energies.iter().sum();
        let scale = eig.energies.iter().fold(1.0f64, |s, e| s.max(e.abs()));
        prop_assert!((sum - trace).abs() < 1e-9 * scale,
            "sum {sum} vs trace {trace}");
    }

    #[test]
    fn eigenvectors_reconstruct_the_hamiltonian(
        p in any_params(),
        orbital in any_orbital(),
        b0 in any_field(),
    ) {
        let h = assemble_hamiltonian(&p, orbital, b0).unwrap();
        let eig = eigensolve(&h).unwrap();
        let diag = Array2::from_diag(&Array1::from_iter(
            eig.energies.iter().map(|&e| C64::new(e, 0.0)),
        ));
        let rebuilt = eig.states.dot(&diag).dot(&eig.states.t().mapv(|z| z.conj()));
        let scale = eig.energies.iter().fold(1.0f64, |s, e| s.max(e.abs()));
        prop_assert!(max_abs_diff(&rebuilt, &h.matrix) < 1e-9 * scale);
    }

    #[test]
    fn scaling_the_matrix_scales_the_spectrum(
        p in any_params(),
        b0 in any_field(),
        c in 0.1f64..10.0,
    ) {
        let h = assemble_hamiltonian(&p, Orbital::Ground, b0).unwrap();
        let scaled = HamiltonianMatrix {
            matrix: h.matrix.mapv(|z| z * c),
            labels: h.labels.clone(),
        };
        let e1 = eigensolve(&h).unwrap().energies;
        let e2 = eigensolve(&scaled).unwrap().energies;
        let scale = e1.iter().fold(1.0f64, |s, e| s.max(e.abs())) * c;
        for (a, b) in e1.iter().zip(&e2) {
            prop_assert!((a * c - b).abs() < 1e-9 * scale);
        }
    }
}

proptest! {
    // Time propagation costs real work per case; keep the count modest.
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn propagation_preserves_norm(
        p in any_params(),
        bz in 0.0f64..600.0,
        b1 in 0.1f64..20.0,
        freq in 0.5f64..3000.0,
        t in 0.0f64..0.5,
        idx in 0usize..6,
    ) {
        let h0 = assemble_hamiltonian(&p, Orbital::Ground, [0.0, 0.0, bz]).unwrap();
        let v = drive_operator(&p, [b1, 0.0, 0.0]).unwrap();
        let d = h0.dim();
        let mut psi0 = Array1::<C64>::zeros(d);
        psi0[idx % d] = C64::new(1.0, 0.0);
        let psi = propagate(&h0, &v, freq, &psi0, t, 0.05).unwrap();
        let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        prop_assert!((norm - 1.0).abs() < 1e-7, "norm {norm}");
    }
}

proptest! {
    #[test]
    fn lineshape_is_bounded_and_symmetric_in_detuning(
        omega in 0.0f64..50.0,
        delta in -100.0f64..100.0,
        t in 0.0f64..10.0,
    ) {
        let up = square_pulse_lineshape(omega, delta, t);
        let down = square_pulse_lineshape(omega, -delta, t);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&up), "out of range: {up}");
        prop_assert!((up - down).abs() < 1e-12);
    }
}

proptest! {
    // Each case diagonalizes a replica ladder; keep the count modest.
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn floquet_rows_are_stochastic(
        sp in any_species(),
        bz in 300.0f64..700.0,
        b1 in 0.5f64..6.0,
        freq in 2.0f64..8.0,
    ) {
        let p = SpinSystemParams::defaults(sp);
        let h0 = assemble_hamiltonian(&p, Orbital::Ground, [0.0, 0.0, bz]).unwrap();
        let v = drive_operator(&p, [b1, 0.0, 0.0]).unwrap();
        let table =
            avg_transition_probabilities(&h0, &v, freq, &FloquetConfig::default()).unwrap();
        for (r, row) in table.probs.rows().into_iter().enumerate() {
            let sum: f64 = row.sum();
            prop_assert!((sum - 1.0).abs() < 1e-9, "row {r} sums to {sum}");
            prop_assert!(row.iter().all(|&x| x >= -1e-12));
        }
    }
}

/// A random row-stochastic table over the ¹⁴N basis, exercising the rate
/// model far from any physical drive.
fn any_stochastic_table() -> impl Strategy<Value = TransitionProbabilityTable> {
    proptest::collection::vec(0.0f64..1.0, 81).prop_map(|flat| {
        let mut probs = Array2::from_shape_vec((9, 9), flat).unwrap();
        for mut row in probs.rows_mut() {
            let s = row.sum();
            if s > 0.0 {
                row.mapv_inplace(|x| x / s);
            } else {
                row.fill(1.0 / 9.0);
            }
        }
        TransitionProbabilityTable {
            probs,
            labels: basis_labels(NuclearSpecies::N14),
            n_max_used: 0,
            convergence_gap: 0.0,
            label_concentration: vec![1.0; 9],
        }
    })
}

proptest! {
    #[test]
    fn rate_steady_state_is_a_distribution(
        table in any_stochastic_table(),
        big_gamma in 0.01f64..10.0,
        gamma in 0.0f64..10.0,
    ) {
        let rates = RateParams { big_gamma, gamma, k_eq: 1e-5 * big_gamma };
        let ss = equilibrium_polarization(&table, &rates).unwrap();
        let sum: f64 = ss.populations.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-12, "populations sum to {sum}");
        prop_assert!(ss.populations.iter().all(|&q| q >= 0.0));
        prop_assert!(ss.polarization.abs() <= 1.0 + 1e-12);
    }

    #[test]
    fn fast_exchange_erases_polarization(
        table in any_stochastic_table(),
        big_gamma in 0.01f64..10.0,
    ) {
        let rates = RateParams {
            big_gamma,
            gamma: 2.5 * big_gamma,
            k_eq: 1e9 * big_gamma,
        };
        let ss = equilibrium_polarization(&table, &rates).unwrap();
        prop_assert!(ss.polarization.abs() < 1e-6,
            "polarization {} survives fast exchange", ss.polarization);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn pumping_keeps_populations_normalized(
        sp in any_species(),
        bz in 0.0f64..700.0,
        seed in proptest::collection::vec(0.01f64..1.0, 3),
        cycles in 1usize..400,
    ) {
        let p = SpinSystemParams::defaults(sp);
        let cycle = OpticalCycleParams::default();
        let n = basis_labels(sp).len() / 3;
        let raw: Vec<f64> = seed.into_iter().cycle().take(n).collect();
        let total: f64 = raw.iter().sum();
        let q0: Vec<f64> = raw.into_iter().map(|x| x / total).collect();
        let out =
            pump_to_steady_state(&p, &cycle, bz, Some(&q0), StopRule::Cycles(cycles)).unwrap();
        let sum: f64 = out.populations.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-9, "populations sum to {sum}");
        prop_assert!(out.populations.iter().all(|&q| q >= -1e-12));
        prop_assert!(out.history.iter().all(|h| h.abs() <= 1.0 + 1e-9));
    }
}
