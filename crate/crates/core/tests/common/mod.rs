//! Independent oracles shared by integration tests.
#![allow(dead_code)]

/// Neumaier-compensated sum.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Exact log-moment of the subsampled Gaussian pair by a brute-force
/// trapezoid rule on `points` nodes. Plain density formulas, no log-space
/// tricks; the `- 1` is subtracted pointwise to keep tiny moments precise.
pub fn trapezoid_log_moment(q: f64, sigma: f64, lambda: u32, points: usize) -> f64 {
    let l = lambda as f64;
    let lo = -20.0 * sigma - l;
    let hi = 1.0 + 20.0 * sigma + l;
    let h = (hi - lo) / (points - 1) as f64;
    let norm = 1.0 / (sigma * (2.0 * std::f64::consts::PI).sqrt());
    let dens = |z: f64, m: f64| norm * (-(z - m) * (z - m) / (2.0 * sigma * sigma)).exp();
    let node = |i: usize| {
        let z = lo + h * i as f64;
        let w = if i == 0 || i == points - 1 { 0.5 } else { 1.0 };
        let m0 = dens(z, 0.0);
        let nu = (1.0 - q) * m0 + q * dens(z, 1.0);
        if m0 == 0.0 || nu == 0.0 {
            return (0.0, 0.0);
        }
        let a = m0 * ((m0 / nu).powi(lambda as i32) - 1.0);
        let b = nu * ((nu / m0).powi(lambda as i32) - 1.0);
        (w * a, w * b)
    };
    let nodes: Vec<(f64, f64)> = (0..points).map(node).collect();
    let ia = h * compensated_sum(nodes.iter().map(|p| p.0));
    let ib = h * compensated_sum(nodes.iter().map(|p| p.1));
    ia.max(ib).ln_1p()
}

/// `ln E_nu[(nu/mu0)^lambda]` from the binomial expansion over the number of
/// sampled ones, summed as `E - 1` with non-negative terms.
pub fn binomial_log_moment(q: f64, sigma: f64, lambda: u32) -> f64 {
    let n = lambda + 1;
    let mut terms = Vec::new();
    let mut ln_binom = 0.0f64;
    for k in 0..=n {
        let kf = k as f64;
        if k > 0 {
            ln_binom += ((n - k + 1) as f64 / kf).ln();
        }
        if k >= 2 {
            let ln_w = ln_binom + kf * q.ln() + (n - k) as f64 * (1.0 - q).ln();
            terms.push(ln_w.exp() * (kf * (kf - 1.0) / (2.0 * sigma * sigma)).exp_m1());
        }
    }
    compensated_sum(terms).ln_1p()
}

/// Central finite-difference gradient of `f` at `x` with step `h`.
pub fn fd_gradient<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|j| {
            probe[j] = x[j] + h;
            let up = f(&probe);
            probe[j] = x[j] - h;
            let down = f(&probe);
            probe[j] = x[j];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Largest coordinate error of `g` against `reference`, relative to
/// `max(|reference_j|, 1)`.
pub fn max_relative_error(g: &[f64], reference: &[f64]) -> f64 {
    g.iter()
        .zip(reference)
        .map(|(a, b)| (a - b).abs() / b.abs().max(1.0))
        .fold(0.0, f64::max)
}

/// Worst finite-difference error over `points` random evaluations of each
/// model gradient (logistic likelihood, Gaussian prior, Gaussian mean).
/// Returns `(logistic, prior, gaussian_mean)`.
pub fn gradient_check_errors(points: usize, seed: u64) -> (f64, f64, f64) {
    use dpsgmcmc::data::Record;
    use dpsgmcmc::models::{gaussian_mean_grad, gaussian_prior_grad, logistic_grad, GaussianMeanModel, LogisticRegression, Model};
    use rand::{Rng, SeedableRng};

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-5;
    let (mut e_log, mut e_prior, mut e_mean) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..points {
        let d = rng.random_range(1..6usize);
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
        let theta: Vec<f64> = (0..=d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let y = f64::from(u8::from(rng.random_bool(0.5)));

        // Logistic log-likelihood written out independently.
        let loglik = |th: &[f64]| {
            let z: f64 = th[..d].iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() + th[d];
            y * z - (1.0 + z.exp()).ln()
        };
        let xb: Vec<f64> = x.iter().copied().chain([1.0]).collect();
        let g = logistic_grad(&theta, &xb, y).unwrap();
        e_log = e_log.max(max_relative_error(&g, &fd_gradient(loglik, &theta, h)));
        let m = LogisticRegression::new(d);
        let mut via_model = vec![0.0; d + 1];
        m.loglik_grad(&theta, Record { x: &x, y }, &mut via_model);
        e_log = e_log.max(max_relative_error(&via_model, &fd_gradient(loglik, &theta, h)));

        let s2 = rng.random_range(0.2..5.0);
        let log_prior = |th: &[f64]| -th.iter().map(|t| t * t).sum::<f64>() / (2.0 * s2);
        e_prior = e_prior.max(max_relative_error(&gaussian_prior_grad(&theta, s2), &fd_gradient(log_prior, &theta, h)));

        let (obs_var, xo) = (rng.random_range(0.2..5.0), rng.random_range(-5.0..5.0));
        let log_obs = |th: &[f64]| -(xo - th[0]) * (xo - th[0]) / (2.0 * obs_var);
        let g = [gaussian_mean_grad(theta[0], xo, obs_var)];
        e_mean = e_mean.max(max_relative_error(&g, &fd_gradient(log_obs, &theta[..1], h)));
        let gm = GaussianMeanModel { prior_variance: s2, obs_variance: obs_var };
        let mut out = [0.0];
        gm.loglik_grad(&theta[..1], Record { x: &[], y: xo }, &mut out);
        e_mean = e_mean.max(max_relative_error(&out, &fd_gradient(log_obs, &theta[..1], h)));
    }
    (e_log, e_prior, e_mean)
}
