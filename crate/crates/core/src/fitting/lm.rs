//! Damped Gauss–Newton (Levenberg–Marquardt) least squares with box
//! constraints.
//!
//! The driver is deliberately small: models provide values and (analytic or
//! finite-difference) Jacobians, the engine owns damping, step acceptance,
//! and the linearized covariance. Non-convergence is not an error — the
//! best point found is returned with `converged = false`, matching how the
//! fits are consumed downstream.

use ndarray::{Array1, Array2};
use ndarray_linalg::{Inverse, Solve};

use super::FitResult;
use crate::{ensure_finite, Error, Result};

/// A parametric curve the engine can fit.
pub(crate) trait CurveModel: Sync {
    fn name(&self) -> &str;
    fn param_names(&self) -> Vec<String>;
    /// Model values at `x` for parameters `p`.
    fn eval(&self, p: &[f64], x: &[f64], out: &mut [f64]) -> Result<()>;
    /// ∂y_i/∂p_j. The default is a central finite difference on `eval`;
    /// lineshapes override it with exact derivatives.
    fn jacobian(&self, p: &[f64], x: &[f64], jac: &mut Array2<f64>) -> Result<()> {
        let mut plus = vec![0.0; x.len()];
        let mut minus = vec![0.0; x.len()];
        let mut pp = p.to_vec();
        for j in 0..p.len() {
            let h = 1e-5 * p[j].abs().max(1.0);
            pp[j] = p[j] + h;
            self.eval(&pp, x, &mut plus)?;
            pp[j] = p[j] - h;
            self.eval(&pp, x, &mut minus)?;
            pp[j] = p[j];
            for i in 0..x.len() {
                jac[[i, j]] = (plus[i] - minus[i]) / (2.0 * h);
            }
        }
        Ok(())
    }
}

pub(crate) struct LmOptions {
    pub max_iter: usize,
    /// Relative χ² improvement below which an accepted step means done.
    pub ftol: f64,
    /// Relative parameter step below which an accepted step means done.
    pub xtol: f64,
    /// Gradient infinity-norm (relative to χ²) declaring a stationary point.
    pub gtol: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions {
            max_iter: 200,
            ftol: 1e-14,
            xtol: 1e-12,
            gtol: 1e-12,
        }
    }
}

fn clamp_into(p: &mut [f64], bounds: &[(f64, f64)]) {
    for (v, (lo, hi)) in p.iter_mut().zip(bounds) {
        *v = v.clamp(*lo, *hi);
    }
}

/// Weighted residual vector (y − f)/σ and its squared norm.
fn residuals(
    model: &dyn CurveModel,
    p: &[f64],
    x: &[f64],
    y: &[f64],
    weights: &[f64],
    f_buf: &mut [f64],
) -> Result<(Array1<f64>, f64)> {
    model.eval(p, x, f_buf)?;
    let r = Array1::from_iter(
        y.iter()
            .zip(f_buf.iter())
            .zip(weights)
            .map(|((yi, fi), wi)| (yi - fi) * wi),
    );
    let chi2 = r.iter().map(|v| v * v).sum();
    Ok((r, chi2))
}

pub(crate) fn fit_curve(
    model: &dyn CurveModel,
    x: &[f64],
    y: &[f64],
    y_err: Option<&[f64]>,
    p0: &[f64],
    bounds: &[(f64, f64)],
    opts: &LmOptions,
) -> Result<FitResult> {
    let n = x.len();
    let m = p0.len();
    if y.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: y.len(),
        });
    }
    if bounds.len() != m {
        return Err(Error::Dimension {
            expected: m,
            got: bounds.len(),
        });
    }
    if n < m {
        return Err(Error::IllPosedFit(format!(
            "{} parameters but only {n} data points",
            m
        )));
    }
    ensure_finite("fit x data", x)?;
    ensure_finite("fit y data", y)?;
    ensure_finite("fit initial parameters", p0)?;

    let weights: Vec<f64> = match y_err {
        Some(errs) => {
            if errs.len() != n {
                return Err(Error::Dimension {
                    expected: n,
                    got: errs.len(),
                });
            }
            ensure_finite("fit y uncertainties", errs)?;
            if errs.iter().any(|&s| s <= 0.0) {
                return Err(Error::InvalidParam("y_err entries must be > 0".into()));
            }
            errs.iter().map(|s| 1.0 / s).collect()
        }
        None => vec![1.0; n],
    };

    let mut p = p0.to_vec();
    clamp_into(&mut p, bounds);
    let mut f_buf = vec![0.0; n];
    let (mut r, mut chi2) = residuals(model, &p, x, y, &weights, &mut f_buf)?;
    if !chi2.is_finite() {
        return Err(Error::NonFinite("initial fit residuals"));
    }

    let mut jac = Array2::<f64>::zeros((n, m));
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut n_iter = 0;
    let mut warnings: Vec<String> = Vec::new();

    'outer: while n_iter < opts.max_iter {
        n_iter += 1;
        model.jacobian(&p, x, &mut jac)?;
        for (i, &w) in weights.iter().enumerate() {
            for j in 0..m {
                jac[[i, j]] *= w;
            }
        }
        let jt = jac.t();
        let a = jt.dot(&jac);
        let g = jt.dot(&r);
        if g.iter().map(|v| v.abs()).fold(0.0f64, f64::max) <= opts.gtol * chi2.max(1.0) {
            converged = true;
            break;
        }

        // Inner damping loop: raise λ until a step reduces χ².
        loop {
            let mut damped = a.clone();
            let floor = 1e-30 + 1e-12 * a.diag().iter().sum::<f64>() / m as f64;
            for j in 0..m {
                damped[[j, j]] += lambda * a[[j, j]].max(floor);
            }
            let step = match damped.solve(&g) {
                Ok(s) => s,
                Err(_) => {
                    lambda *= 8.0;
                    if lambda > 1e15 {
                        warnings.push("normal equations singular at maximum damping".into());
                        break 'outer;
                    }
                    continue;
                }
            };
            let mut p_try: Vec<f64> = p.iter().zip(&step).map(|(pi, si)| pi + si).collect();
            clamp_into(&mut p_try, bounds);
            let trial = residuals(model, &p_try, x, y, &weights, &mut f_buf);
            let (r_try, chi2_try) = match trial {
                Ok(v) if v.1.is_finite() => v,
                _ => {
                    lambda *= 8.0;
                    if lambda > 1e15 {
                        warnings.push("model non-finite in every search direction".into());
                        break 'outer;
                    }
                    continue;
                }
            };
            if chi2_try <= chi2 {
                let improvement = chi2 - chi2_try;
                let max_rel_step = p
                    .iter()
                    .zip(&p_try)
                    .map(|(a, b)| (a - b).abs() / (a.abs() + opts.xtol))
                    .fold(0.0f64, f64::max);
                p = p_try;
                r = r_try;
                chi2 = chi2_try;
                lambda = (lambda / 4.0).max(1e-14);
                if improvement <= opts.ftol * chi2.max(1e-300) || max_rel_step <= opts.xtol {
                    converged = true;
                    break 'outer;
                }
                break;
            }
            lambda *= 8.0;
            if lambda > 1e15 {
                // Cannot improve in any direction: a (possibly rough)
                // stationary point.
                converged = true;
                break 'outer;
            }
        }
    }

    // Covariance from the linearization at the final point.
    model.jacobian(&p, x, &mut jac)?;
    for (i, &w) in weights.iter().enumerate() {
        for j in 0..m {
            jac[[i, j]] *= w;
        }
    }
    let a = jac.t().dot(&jac);
    let dof = n - m;
    let scale = if y_err.is_some() {
        1.0
    } else {
        chi2 / dof.max(1) as f64
    };
    let covariance = match a.inv() {
        Ok(inv) => Some(
            (0..m)
                .map(|i| (0..m).map(|j| inv[[i, j]] * scale).collect())
                .collect::<Vec<Vec<f64>>>(),
        ),
        Err(_) => {
            warnings.push("parameter covariance singular; no uncertainties reported".into());
            None
        }
    };
    let std_errors = if converged {
        covariance
            .as_ref()
            .map(|c| (0..m).map(|i| c[i][i].max(0.0).sqrt()).collect())
    } else {
        None
    };

    model.eval(&p, x, &mut f_buf)?;
    Ok(FitResult {
        model: model.name().to_string(),
        param_names: model.param_names(),
        params: p,
        std_errors,
        covariance: if converged { covariance } else { None },
        chi2,
        residual_norm: chi2.sqrt(),
        dof,
        converged,
        n_iter,
        warnings,
        fitted_y: f_buf,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// y = a·exp(b·x): curved enough to need damping, small enough to
    /// check against by hand.
    struct Expo;

    impl CurveModel for Expo {
        fn name(&self) -> &str {
            "expo"
        }
        fn param_names(&self) -> Vec<String> {
            vec!["a".into(), "b".into()]
        }
        fn eval(&self, p: &[f64], x: &[f64], out: &mut [f64]) -> Result<()> {
            for (o, &xi) in out.iter_mut().zip(x) {
                *o = p[0] * (p[1] * xi).exp();
            }
            Ok(())
        }
        fn jacobian(&self, p: &[f64], x: &[f64], jac: &mut Array2<f64>) -> Result<()> {
            for (i, &xi) in x.iter().enumerate() {
                let e = (p[1] * xi).exp();
                jac[[i, 0]] = e;
                jac[[i, 1]] = p[0] * xi * e;
            }
            Ok(())
        }
    }

    const FREE: (f64, f64) = (f64::NEG_INFINITY, f64::INFINITY);

    #[test]
    fn recovers_exact_parameters_from_clean_data() {
        let x: Vec<f64> = (0..40).map(|i| i as f64 * 0.1).collect();
        let mut y = vec![0.0; x.len()];
        Expo.eval(&[2.5, -0.7], &x, &mut y).unwrap();
        let fit = fit_curve(
            &Expo,
            &x,
            &y,
            None,
            &[1.0, -0.1],
            &[FREE, FREE],
            &LmOptions::default(),
        )
        .unwrap();
        assert!(fit.converged);
        assert!((fit.params[0] - 2.5).abs() < 1e-8);
        assert!((fit.params[1] + 0.7).abs() < 1e-8);
        assert!(fit.residual_norm < 1e-8);
        assert!(fit.std_errors.is_some());
    }

    #[test]
    fn finite_difference_default_matches_analytic_jacobian() {
        struct FdExpo;
        impl CurveModel for FdExpo {
            fn name(&self) -> &str {
                "expo-fd"
            }
            fn param_names(&self) -> Vec<String> {
                vec!["a".into(), "b".into()]
            }
            fn eval(&self, p: &[f64], x: &[f64], out: &mut [f64]) -> Result<()> {
                Expo.eval(p, x, out)
            }
        }
        let x: Vec<f64> = (0..8).map(|i| i as f64 * 0.3).collect();
        let p = [1.7, -0.4];
        let mut ja = Array2::zeros((x.len(), 2));
        let mut jf = Array2::zeros((x.len(), 2));
        Expo.jacobian(&p, &x, &mut ja).unwrap();
        FdExpo.jacobian(&p, &x, &mut jf).unwrap();
        for (a, f) in ja.iter().zip(jf.iter()) {
            assert!((a - f).abs() < 1e-6 * a.abs().max(1.0), "{a} vs {f}");
        }
    }

    #[test]
    fn bounds_confine_the_solution() {
        let x: Vec<f64> = (0..20).map(|i| i as f64 * 0.1).collect();
        let mut y = vec![0.0; x.len()];
        Expo.eval(&[2.0, -0.5], &x, &mut y).unwrap();
        // Forbid the true amplitude; the fit must stop at the box edge.
        let fit = fit_curve(
            &Expo,
            &x,
            &y,
            None,
            &[1.2, -0.4],
            &[(0.0, 1.5), FREE],
            &LmOptions::default(),
        )
        .unwrap();
        assert!(fit.params[0] <= 1.5 + 1e-12);
    }

    #[test]
    fn more_parameters_than_points_is_refused() {
        let err = fit_curve(
            &Expo,
            &[1.0],
            &[2.0],
            None,
            &[1.0, 1.0],
            &[FREE, FREE],
            &LmOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::IllPosedFit(_)));
    }

    #[test]
    fn weighted_fit_uses_the_given_sigmas() {
        // Two incompatible points; the fit must land closer to the
        // precisely measured one.
        struct Constant;
        impl CurveModel for Constant {
            fn name(&self) -> &str {
                "constant"
            }
            fn param_names(&self) -> Vec<String> {
                vec!["c".into()]
            }
            fn eval(&self, p: &[f64], x: &[f64], out: &mut [f64]) -> Result<()> {
                let _ = x;
                out.fill(p[0]);
                Ok(())
            }
            fn jacobian(&self, _p: &[f64], _x: &[f64], jac: &mut Array2<f64>) -> Result<()> {
                jac.fill(1.0);
                Ok(())
            }
        }
        let fit = fit_curve(
            &Constant,
            &[0.0, 1.0],
            &[0.0, 1.0],
            Some(&[0.1, 1.0]),
            &[0.4],
            &[FREE],
            &LmOptions::default(),
        )
        .unwrap();
        let expected = (0.0 / 0.01 + 1.0 / 1.0) / (1.0 / 0.01 + 1.0 / 1.0);
        assert!((fit.params[0] - expected).abs() < 1e-10);
    }
}
