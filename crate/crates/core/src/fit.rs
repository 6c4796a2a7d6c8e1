//! Weighted nonlinear least squares for the device models: the sin^2
//! conversion-efficiency curve, the linear SNR law, and Gaussian waveform
//! peaks, all driven by one damped Gauss-Newton (Levenberg-Marquardt)
//! engine with central-difference Jacobians.

use crate::error::{Error, Result};

/// Named parameter estimates with covariance-based errors.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub parameters: Vec<(String, f64)>,
    /// Standard errors from the normal-equations covariance at the optimum.
    /// NaN when there are no degrees of freedom.
    pub sigmas: Vec<f64>,
    /// Sum of squared (weighted) residuals at the optimum.
    pub residual_norm: f64,
    pub converged: bool,
    pub iterations: u32,
}

impl FitResult {
    pub fn parameter(&self, name: &str) -> Option<f64> {
        self.parameters.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    pub fn sigma(&self, name: &str) -> Option<f64> {
        self.parameters
            .iter()
            .position(|(n, _)| n == name)
            .map(|i| self.sigmas[i])
    }
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub max_iterations: u32,
    pub gradient_tolerance: f64,
    pub step_tolerance: f64,
    /// Magnitude floor per parameter for the relative finite-difference
    /// step; 1.0 for every parameter when empty. Needed when parameters
    /// live on scales far from unity (nanosecond waveform fits).
    pub step_scales: Vec<f64>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iterations: 200,
            gradient_tolerance: 1e-10,
            step_tolerance: 1e-12,
            step_scales: Vec::new(),
        }
    }
}

/// One observation: abscissa, value, and its standard deviation. A
/// non-positive sigma on any point switches the whole fit to unit weights
/// (with the covariance rescaled by the residual variance).
pub type Point = (f64, f64, f64);

/// Levenberg-Marquardt minimization of the weighted residual norm.
///
/// The model maps (parameters, x) to a prediction. Terminates when the
/// gradient infinity-norm falls below `gradient_tolerance`, the accepted
/// step norm falls below `step_tolerance`, or after `max_iterations`.
pub fn least_squares(
    model: &dyn Fn(&[f64], f64) -> f64,
    points: &[Point],
    initial: &[f64],
    names: &[&str],
    options: &FitOptions,
) -> Result<FitResult> {
    if points.is_empty() {
        return Err(Error::config("least_squares: no data points".to_string()));
    }
    if initial.is_empty() || initial.len() != names.len() {
        return Err(Error::config("least_squares: bad initial parameter vector".to_string()));
    }
    if initial.iter().any(|v| !v.is_finite())
        || points.iter().any(|(x, y, s)| !x.is_finite() || !y.is_finite() || !s.is_finite())
    {
        return Err(Error::config("least_squares: non-finite input".to_string()));
    }

    let weighted = points.iter().all(|&(_, _, s)| s > 0.0);
    let weights: Vec<f64> = points
        .iter()
        .map(|&(_, _, s)| if weighted { 1.0 / (s * s) } else { 1.0 })
        .collect();
    let n_par = initial.len();

    let residuals = |theta: &[f64]| -> Option<(Vec<f64>, f64)> {
        let mut r = Vec::with_capacity(points.len());
        let mut norm = 0.0;
        for (&(x, y, _), &w) in points.iter().zip(&weights) {
            let f = model(theta, x);
            if !f.is_finite() {
                return None;
            }
            let ri = (y - f) * w.sqrt();
            norm += ri * ri;
            r.push(ri);
        }
        Some((r, norm))
    };

    let mut theta = initial.to_vec();
    let (mut r, mut norm) = residuals(&theta).ok_or_else(|| {
        Error::config(format!("least_squares: model returned NaN at parameters {theta:?}"))
    })?;

    let scale_floor = |k: usize| options.step_scales.get(k).copied().unwrap_or(1.0);
    let jacobian = |theta: &[f64]| -> Option<Vec<Vec<f64>>> {
        // central differences, relative step 1e-6
        let mut cols = Vec::with_capacity(n_par);
        for k in 0..n_par {
            let h = 1e-6 * theta[k].abs().max(scale_floor(k));
            let mut plus = theta.to_vec();
            let mut minus = theta.to_vec();
            plus[k] += h;
            minus[k] -= h;
            let mut col = Vec::with_capacity(points.len());
            for (&(x, _, _), &w) in points.iter().zip(&weights) {
                let fp = model(&plus, x);
                let fm = model(&minus, x);
                if !fp.is_finite() || !fm.is_finite() {
                    return None;
                }
                col.push((fp - fm) / (2.0 * h) * w.sqrt());
            }
            cols.push(col);
        }
        Some(cols)
    };

    // negligible initial damping so well-conditioned problems take pure
    // Gauss-Newton steps from the start
    let mut lambda = 1e-8;
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..options.max_iterations {
        iterations += 1;
        let j = jacobian(&theta).ok_or_else(|| {
            Error::config(format!("least_squares: model returned NaN at parameters {theta:?}"))
        })?;

        // gradient of the half-norm: g = J^T r ; normal matrix A = J^T J
        let mut g = vec![0.0; n_par];
        let mut a = vec![vec![0.0; n_par]; n_par];
        for k in 0..n_par {
            g[k] = j[k].iter().zip(&r).map(|(jk, ri)| jk * ri).sum();
            for l in k..n_par {
                let v: f64 = j[k].iter().zip(&j[l]).map(|(x, y)| x * y).sum();
                a[k][l] = v;
                a[l][k] = v;
            }
        }
        let gnorm = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if gnorm < options.gradient_tolerance {
            converged = true;
            break;
        }

        // inner damping loop
        let mut stepped = false;
        for _ in 0..40 {
            let mut damped = a.clone();
            for (k, row) in damped.iter_mut().enumerate() {
                let d = if a[k][k] > 0.0 { a[k][k] } else { 1.0 };
                row[k] = a[k][k] + lambda * d;
            }
            let delta = match solve(damped, g.clone()) {
                Some(d) => d,
                None => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let step_norm = delta.iter().map(|d| d * d).sum::<f64>().sqrt();
            if step_norm < options.step_tolerance {
                // proposed step is below resolution: we are at the optimum
                converged = true;
                break;
            }
            let candidate: Vec<f64> = theta.iter().zip(&delta).map(|(t, d)| t + d).collect();
            match residuals(&candidate) {
                Some((rc, nc)) if nc < norm => {
                    theta = candidate;
                    r = rc;
                    norm = nc;
                    lambda = (lambda / 10.0).max(1e-12);
                    stepped = true;
                    break;
                }
                _ => {
                    lambda *= 100.0;
                    if lambda > 1e12 {
                        break;
                    }
                }
            }
        }
        if converged || !stepped {
            break;
        }
    }

    // covariance from the normal equations at the optimum
    let j = jacobian(&theta).ok_or_else(|| {
        Error::config(format!("least_squares: model returned NaN at parameters {theta:?}"))
    })?;
    let mut a = vec![vec![0.0; n_par]; n_par];
    for k in 0..n_par {
        for l in k..n_par {
            let v: f64 = j[k].iter().zip(&j[l]).map(|(x, y)| x * y).sum();
            a[k][l] = v;
            a[l][k] = v;
        }
    }
    let dof = points.len() as i64 - n_par as i64;
    let scale = if weighted {
        1.0
    } else if dof > 0 {
        norm / dof as f64
    } else {
        f64::NAN
    };
    let sigmas: Vec<f64> = match invert(a) {
        Some(c) if dof > 0 => (0..n_par).map(|k| (c[k][k] * scale).sqrt()).collect(),
        Some(c) if weighted && dof == 0 => {
            // exactly determined: error defined by the supplied sigmas alone
            let _ = c;
            vec![f64::NAN; n_par]
        }
        _ => vec![f64::NAN; n_par],
    };

    Ok(FitResult {
        parameters: names.iter().map(|n| n.to_string()).zip(theta).collect(),
        sigmas,
        residual_norm: norm,
        converged,
        iterations,
    })
}

/// Gaussian elimination with partial pivoting; consumes its inputs.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in (col + 1)..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut s = b[col];
        for k in (col + 1)..n {
            s -= a[col][k] * x[k];
        }
        x[col] = s / a[col][col];
    }
    Some(x)
}

fn invert(a: Vec<Vec<f64>>) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut cols = Vec::with_capacity(n);
    for k in 0..n {
        let mut e = vec![0.0; n];
        e[k] = 1.0;
        cols.push(solve(a.clone(), e)?);
    }
    // cols[k] is the k-th column of the inverse
    let mut inv = vec![vec![0.0; n]; n];
    for (k, col) in cols.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            inv[i][k] = *v;
        }
    }
    Some(inv)
}

/// Fit eta_max * sin^2(L sqrt(eta_n P)) to (pump power, efficiency, sigma)
/// points. Seeds eta_max at the largest efficiency and eta_n from the
/// first-quarter-period heuristic placed at the measured maximum.
pub fn fit_sin2_efficiency(points: &[Point], length_cm: f64) -> Result<FitResult> {
    if points.len() < 4 {
        return Err(Error::config(
            "fit_sin2_efficiency: need at least 4 points spanning a rising region".to_string(),
        ));
    }
    if !(length_cm > 0.0) {
        return Err(Error::config("fit_sin2_efficiency: length_cm must be > 0".to_string()));
    }
    let (p_at_max, eta_top) = points
        .iter()
        .fold((0.0f64, f64::MIN), |acc, &(p, y, _)| if y > acc.1 { (p, y) } else { acc });
    if eta_top <= 0.0 || p_at_max <= 0.0 {
        return Err(Error::config(
            "fit_sin2_efficiency: no rising region in the data".to_string(),
        ));
    }
    let eta_n0 = (std::f64::consts::FRAC_PI_2 / length_cm).powi(2) / p_at_max;
    let model = move |theta: &[f64], p: f64| -> f64 {
        let arg = length_cm * (theta[1].abs() * p).sqrt();
        theta[0] * arg.sin().powi(2)
    };
    let mut result = least_squares(
        &model,
        points,
        &[eta_top, eta_n0],
        &["eta_max", "eta_n"],
        &FitOptions::default(),
    )?;
    for (_, v) in result.parameters.iter_mut() {
        *v = v.abs();
    }
    Ok(result)
}

/// Weighted fit of SNR = snr_max * mu through the origin.
pub fn fit_linear_origin(points: &[Point]) -> Result<FitResult> {
    if points.is_empty() {
        return Err(Error::config("fit_linear_origin: no data points".to_string()));
    }
    if points.iter().all(|&(x, _, _)| x == 0.0) {
        return Err(Error::config(
            "fit_linear_origin: all abscissas are zero, slope is undetermined".to_string(),
        ));
    }
    let slope0 = {
        let num: f64 = points.iter().map(|&(x, y, _)| x * y).sum();
        let den: f64 = points.iter().map(|&(x, _, _)| x * x).sum();
        num / den
    };
    let model = |theta: &[f64], x: f64| theta[0] * x;
    least_squares(&model, points, &[slope0], &["snr_max"], &FitOptions::default())
}

/// Fit A exp(-4 ln2 (t - t0)^2 / F^2) + B to a histogram of (time, count)
/// pairs. Counts are unweighted; seeds come from the histogram moments.
pub fn fit_gaussian_peak(histogram: &[(f64, f64)]) -> Result<FitResult> {
    if histogram.len() < 6 {
        return Err(Error::config("fit_gaussian_peak: need at least 6 bins".to_string()));
    }
    let total: f64 = histogram.iter().map(|&(_, c)| c).sum();
    if !(total > 0.0) {
        return Err(Error::config("fit_gaussian_peak: histogram has no counts".to_string()));
    }
    let (mut t_peak, mut c_max) = (0.0, f64::MIN);
    let mut c_min = f64::MAX;
    for &(t, c) in histogram {
        if c > c_max {
            c_max = c;
            t_peak = t;
        }
        c_min = c_min.min(c);
    }
    if c_max <= c_min {
        return Err(Error::numerical(
            "fit_gaussian_peak: histogram is flat, no peak to fit".to_string(),
        ));
    }
    // moment seeds above the baseline
    let excess: f64 = histogram.iter().map(|&(_, c)| c - c_min).sum();
    let mean: f64 = histogram.iter().map(|&(t, c)| t * (c - c_min)).sum::<f64>() / excess;
    let var: f64 =
        histogram.iter().map(|&(t, c)| (t - mean).powi(2) * (c - c_min)).sum::<f64>() / excess;
    let bin = (histogram[1].0 - histogram[0].0).abs();
    let fwhm0 = (8.0 * std::f64::consts::LN_2 * var).sqrt().max(bin);

    let model = |theta: &[f64], t: f64| -> f64 {
        let (a, t0, f, b) = (theta[0], theta[1], theta[2], theta[3]);
        a * (-4.0 * std::f64::consts::LN_2 * (t - t0).powi(2) / (f * f)).exp() + b
    };
    let points: Vec<Point> = histogram.iter().map(|&(t, c)| (t, c, 0.0)).collect();
    let amp_scale = (c_max - c_min).abs().max(1.0);
    let options = FitOptions {
        // time-like parameters live on the bin scale, not on unity
        step_scales: vec![amp_scale, fwhm0, fwhm0, amp_scale],
        ..FitOptions::default()
    };
    let mut result = least_squares(
        &model,
        &points,
        &[c_max - c_min, t_peak, fwhm0, c_min],
        &["amplitude", "center", "fwhm", "offset"],
        &options,
    )?;
    if !result.converged {
        return Err(Error::numerical(format!(
            "fit_gaussian_peak did not converge; best parameters {:?}",
            result.parameters
        )));
    }
    if let Some(v) = result.parameters.iter_mut().find(|(n, _)| n == "fwhm") {
        v.1 = v.1.abs();
    }
    Ok(result)
}
