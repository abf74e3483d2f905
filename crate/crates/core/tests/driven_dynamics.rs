//! End-to-end checks of the driven time evolution: unitarity over long
//! runs, Ramsey interferometry at a programmed detuning, the perturbative
//! nuclear-drive enhancement against the full integrator, and agreement
//! between time-domain and frequency-domain estimates of the same drive
//! strength.

use ndarray::Array1;
use nv_spinlab_core::dynamics::{
    enhanced_rabi_frequency, frequency_scan, propagate, rabi_trace, ramsey_trace, DriveDuration,
    DriveSegment, InitialState, Observable, PulseSequence, Segment,
};
use nv_spinlab_core::fitting::{
    extract_hyperfine, fit_sinusoid, fit_square_pulse, gaussian_noise, with_gaussian_noise,
    AperpMode,
};
use nv_spinlab_core::spectrum::linspace;
use nv_spinlab_core::spin::{
    assemble_hamiltonian, drive_operator, eigensolve, BasisLabel, NuclearSpecies, Orbital,
    SpinSystemParams,
};
use nv_spinlab_core::C64;

const B0: [f64; 3] = [0.0, 0.0, 509.0];

/// Transition frequency between the eigenstates dominated by two bare
/// labels, and the drive matrix element connecting them at `b1_gauss`.
fn pair_freq_and_element(
    params: &SpinSystemParams,
    b0: [f64; 3],
    lower: BasisLabel,
    upper: BasisLabel,
    b1_gauss: f64,
) -> (f64, f64) {
    let h0 = assemble_hamiltonian(params, Orbital::Ground, b0).unwrap();
    let eig = eigensolve(&h0).unwrap();
    let li = eig.state_dominated_by(lower).unwrap();
    let ui = eig.state_dominated_by(upper).unwrap();
    let v = drive_operator(params, [b1_gauss, 0.0, 0.0]).unwrap();
    let vl = eig.states.t().mapv(|z| z.conj()).dot(&v).dot(&eig.states);
    (
        (eig.energies[ui] - eig.energies[li]).abs(),
        vl[[li, ui]].norm(),
    )
}

#[test]
fn norm_survives_ten_thousand_drive_periods() {
    // A hard microwave drive on the electron transition, integrated over
    // 10^4 oscillator periods. The split-step scheme is unitary up to
    // round-off, so the norm must sit at 1 to far better than the 1e-7
    // runtime guard — we demand 1e-8.
    let p = SpinSystemParams::defaults(NuclearSpecies::N15);
    let (esr, _) = pair_freq_and_element(
        &p,
        B0,
        BasisLabel::new(-1, 1),
        BasisLabel::new(0, 1),
        2.0,
    );
    assert!(esr > 1000.0, "electron line unexpectedly low: {esr}");

    let h0 = assemble_hamiltonian(&p, Orbital::Ground, B0).unwrap();
    let v = drive_operator(&p, [2.0, 0.0, 0.0]).unwrap();
    let t_total = 1.0e4 / esr;
    let mut psi0 = Array1::<C64>::zeros(h0.dim());
    psi0[0] = C64::new(1.0, 0.0);
    let psi = propagate(&h0, &v, esr, &psi0, t_total, 0.05).unwrap();
    let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    assert!(
        (norm - 1.0).abs() < 1e-8,
        "norm drifted to {norm:.12} after {t_total:.3} us"
    );
}

#[test]
fn ramsey_fringes_beat_at_the_programmed_detuning() {
    // π/2 — τ — π/2 on a nuclear pair, with the oscillator detuned 2 kHz
    // above the line: the fringe must come back at 0.002 MHz. Pulse-period
    // level shifts may move the fringe phase but not its frequency, since
    // the phase between oscillator and coherence accrues during the waits.
    let p = SpinSystemParams::defaults(NuclearSpecies::N14);
    let pair = (BasisLabel::new(0, 2), BasisLabel::new(0, 0));
    let (line, _) = pair_freq_and_element(&p, B0, pair.0, pair.1, 10.0);
    let detuning = 0.002;

    let tau = linspace(0.0, 1500.0, 151).unwrap();
    let trace = ramsey_trace(
        &p,
        Orbital::Ground,
        B0,
        line + detuning,
        10.0,
        pair,
        0.0,
        &tau,
        &Observable::Population(pair.0),
        None,
        0.05,
        None,
    )
    .unwrap();

    let clean = fit_sinusoid(&trace, false, None).unwrap();
    assert!(clean.converged);
    let f_clean = clean.param("freq").unwrap().abs();
    assert!(
        (f_clean - detuning).abs() < 2e-5,
        "noiseless fringe at {f_clean} MHz, programmed {detuning}"
    );

    // With seeded noise the fitted frequency must cover the programmed
    // detuning within its own 2σ interval, and still resolve it well.
    let mut noisy = trace.clone();
    for (y, n) in noisy
        .y
        .iter_mut()
        .zip(gaussian_noise(tau.len(), 0.02, 0xD0_0001).unwrap())
    {
        *y += n;
    }
    let fit = fit_sinusoid(&noisy, false, None).unwrap();
    assert!(fit.converged);
    let f = fit.param("freq").unwrap().abs();
    let sigma = fit.std_error("freq").unwrap();
    assert!(
        (f - detuning).abs() <= 2.0 * sigma,
        "fringe {f} ± {sigma} does not cover {detuning}"
    );
    assert!(sigma < 2e-4, "fringe frequency poorly resolved: σ = {sigma}");
}

#[test]
fn enhancement_formula_matches_the_integrator() {
    // Drive the (m_I = 1 ↔ 0) transition inside the m_s = −1 ground
    // manifold near the excited-state anticrossing field, where the
    // hyperfine enhancement dominates the bare nuclear response by an
    // order of magnitude, and nutate. The perturbative rate must land
    // within 5% of the fitted nutation frequency.
    let p = SpinSystemParams::defaults(NuclearSpecies::N14);
    let pair = (BasisLabel::new(-1, 2), BasisLabel::new(-1, 0));
    let (line, element) = pair_freq_and_element(&p, B0, pair.0, pair.1, 5.0);

    let t = linspace(0.0, 120.0, 241).unwrap();
    let trace = rabi_trace(
        &p,
        Orbital::Ground,
        B0,
        line,
        5.0,
        &InitialState::Label(pair.0),
        &Observable::Population(pair.1),
        &t,
        0.05,
        None,
    )
    .unwrap();
    let fit = fit_sinusoid(&trace, false, None).unwrap();
    assert!(fit.converged);
    let nutation = fit.param("freq").unwrap().abs();

    // The fit and the eigenbasis matrix element are two views of the same
    // number; they should agree far better than the formula needs to.
    assert!(
        (nutation - element).abs() / element < 5e-3,
        "fit {nutation} vs element {element}"
    );

    let predicted = enhanced_rabi_frequency(&p, Orbital::Ground, -1, B0[2], 5.0, false).unwrap();
    assert!(
        (predicted - nutation).abs() / nutation < 0.05,
        "perturbative {predicted} vs integrated {nutation}"
    );

    // And the enhancement is the whole story here: the same drive on a
    // decoupled nucleus would nutate more than an order of magnitude
    // slower.
    let bare = enhanced_rabi_frequency(&p, Orbital::Ground, -1, B0[2], 5.0, true).unwrap();
    assert!(nutation / bare > 10.0, "gain only {}", nutation / bare);
}

#[test]
fn time_and_frequency_domain_drive_strengths_agree() {
    // Estimate one physical quantity — the drive matrix element on a
    // nuclear pair — two unrelated ways: the nutation frequency of a Rabi
    // trace, and the power-broadened width parameter of a π-pulse
    // frequency scan. Both carry seeded noise; the estimates must agree
    // within their joint uncertainty and match the eigenbasis element.
    let p = SpinSystemParams::defaults(NuclearSpecies::N14);
    let pair = (BasisLabel::new(0, 2), BasisLabel::new(0, 0));
    let b1 = 10.0;
    let (line, element) = pair_freq_and_element(&p, B0, pair.0, pair.1, b1);

    // Time domain: two full flops of the population.
    let t = linspace(0.0, 2.0 / element, 161).unwrap();
    let trace = rabi_trace(
        &p,
        Orbital::Ground,
        B0,
        line,
        b1,
        &InitialState::Label(pair.0),
        &Observable::Population(pair.1),
        &t,
        0.05,
        None,
    )
    .unwrap();
    let mut noisy = trace.clone();
    for (y, n) in noisy
        .y
        .iter_mut()
        .zip(gaussian_noise(t.len(), 0.01, 0xD0_0002).unwrap())
    {
        *y += n;
    }
    let time_fit = fit_sinusoid(&noisy, false, None).unwrap();
    assert!(time_fit.converged);
    let omega_time = time_fit.param("freq").unwrap().abs();
    let sigma_time = time_fit.std_error("freq").unwrap();

    // Frequency domain: a calibrated π pulse swept across the line.
    let seq = PulseSequence::new(
        InitialState::Label(pair.0),
        vec![Segment::Drive(DriveSegment {
            freq_mhz: line,
            b1_gauss: b1,
            phase_rad: 0.0,
            duration: DriveDuration::PiFraction {
                lower: pair.0,
                upper: pair.1,
                fraction: 1.0,
            },
        })],
        Observable::Population(pair.1),
    );
    let grid = linspace(line - 0.35, line + 0.35, 101).unwrap();
    let spec = frequency_scan(&p, Orbital::Ground, B0, &seq, 0, &grid, None).unwrap();
    let spec = with_gaussian_noise(&spec, 0.01, 0xD0_0003).unwrap();
    let scan_fit = fit_square_pulse(&spec, 0.5 / element, None).unwrap();
    assert!(scan_fit.converged);
    let omega_scan = scan_fit.param("omega_rabi").unwrap().abs();
    let sigma_scan = scan_fit.std_error("omega_rabi").unwrap();

    let joint = (sigma_time * sigma_time + sigma_scan * sigma_scan).sqrt();
    assert!(
        (omega_time - omega_scan).abs() <= 3.0 * joint,
        "time {omega_time} ± {sigma_time} vs scan {omega_scan} ± {sigma_scan}"
    );
    assert!((omega_time - element).abs() / element < 0.02);
    assert!((omega_scan - element).abs() / element < 0.02);
}

#[test]
fn scan_recovers_the_lines_the_couplings_were_extracted_from() {
    // Close the loop: take the coupling constants extracted from the
    // measured m_s = 0 and m_s = −1 line pairs, synthesize noisy π-pulse
    // scans of the m_s = 0 transitions from them, and check the fitted
    // line centers land within 5 kHz of the original measurements.
    let measured_ms0 = [5.094, 4.7908];
    let measured_ms1 = [2.9373, 6.9580];
    let branches = extract_hyperfine(
        &measured_ms0,
        &measured_ms1,
        509.0,
        NuclearSpecies::N14,
        AperpMode::Fit,
    )
    .unwrap();
    let branch = &branches[0];
    assert!(branch.param("a_par_mhz").unwrap() <= 0.0);

    let mut p = SpinSystemParams::defaults(NuclearSpecies::N14);
    p.a_par_gs_mhz = branch.param("a_par_mhz").unwrap();
    p.quad_p_gs_mhz = branch.param("quad_p_mhz").unwrap();
    p.a_perp_gs_mhz = branch.param("a_perp_mhz").unwrap();

    let pairs = [
        (BasisLabel::new(0, 2), BasisLabel::new(0, 0)),
        (BasisLabel::new(0, 0), BasisLabel::new(0, -2)),
    ];
    for (k, (&target, pair)) in measured_ms0.iter().zip(pairs).enumerate() {
        let b1 = 10.0;
        let (line, element) = pair_freq_and_element(&p, B0, pair.0, pair.1, b1);
        let seq = PulseSequence::new(
            InitialState::Label(pair.0),
            vec![Segment::Drive(DriveSegment {
                freq_mhz: line,
                b1_gauss: b1,
                phase_rad: 0.0,
                duration: DriveDuration::PiFraction {
                    lower: pair.0,
                    upper: pair.1,
                    fraction: 1.0,
                },
            })],
            Observable::Population(pair.1),
        );
        let grid = linspace(line - 0.3, line + 0.3, 121).unwrap();
        let spec = frequency_scan(&p, Orbital::Ground, B0, &seq, 0, &grid, None).unwrap();
        let spec = with_gaussian_noise(&spec, 0.01, 0xD0_0010 + k as u64).unwrap();
        let fit = fit_square_pulse(&spec, 0.5 / element, None).unwrap();
        assert!(fit.converged, "scan fit {k} did not converge");
        let center = fit.param("omega_res").unwrap();
        let sigma = fit.std_error("omega_res").unwrap();
        assert!(
            (center - target).abs() < 0.005,
            "line {k}: fitted {center:.6} MHz vs measured {target} MHz"
        );
        assert!(
            (1e-5..1.5e-3).contains(&sigma),
            "line {k}: implausible center uncertainty {sigma}"
        );
    }
}
