//! Conditional statistics of the input substreams.
//!
//! Three regimes are covered:
//!
//! * perfect CSI: exact Gaussian conditioning through the interference
//!   covariance of the not-yet-decoded streams,
//! * pilot CSI, linear scheme: closed-form first and second moments of the
//!   output given the received pilot,
//! * pilot CSI, optimal scheme: numerical posterior mean and variance of one
//!   substream given `(y, y_p, x_prefix)`.
//!
//! The pilot-CSI posterior rests on one derived fact: conditioned on the
//! pilot observation and the full input `x`, the output is
//! `y ~ CN(Hhat x, (sigma^2 + sum_k delta_k^2 |x_k|^2) I)` where `Hhat` is the
//! per-column MMSE channel estimate and `delta_k^2` its per-entry error
//! variance. The columns of `H` stay independent Gaussians after
//! conditioning on the pilot, and they enter the output linearly, so the
//! conditional output law is exactly this scalar-covariance Gaussian. The
//! `likelihood_validation` test checks it against brute-force resampling
//! before anything else trusts it.

use num_complex::Complex64;

use crate::channel::{FadingMatrix, PilotObservation, RandomStream, SystemConfig};
use crate::error::{Error, Result};
use crate::numerics::{CMatrix, CVector, HermitianPd};

/// Posterior variances are kept inside `[eps, P_i (1 - eps)]` before they
/// reach a logarithm or a GNNDR weight, both of which are singular at the
/// interval ends.
pub const VARIANCE_CLIP_EPS: f64 = 1e-12;

/// Importance sampling below this effective-sample-size fraction is
/// reported as degenerate.
pub const MIN_ESS_FRACTION: f64 = 0.01;

/// Posterior mean and variance of one substream given `(y, v, x_prefix)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConditionalStats {
    pub mean: Complex64,
    pub variance: f64,
}

/// Per-column MMSE channel estimate and its per-entry error variances.
#[derive(Clone, Debug)]
pub struct ChannelEstimate {
    pub h_hat: CMatrix,
    pub deltas2: Vec<f64>,
}

impl ChannelEstimate {
    pub fn column(&self, i: usize) -> CVector {
        self.h_hat.column(i)
    }
}

/// The restricted-linear-scheme quantities of one substream: the decoded
/// stream subtraction vector, the combining vector, the signal fraction, and
/// the metric normalization.
#[derive(Clone, Debug)]
pub struct LinearSchemeParams {
    pub gamma: CVector,
    pub beta_tilde: CVector,
    pub f_tilde: f64,
    pub q: f64,
}

impl LinearSchemeParams {
    /// Per-realization rate of this substream, `log(1 / (1 - f_tilde))` nats.
    pub fn stream_rate(&self) -> f64 {
        -(1.0 - self.f_tilde).ln()
    }
}

/// How the pilot-CSI posterior integral is evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PosteriorMethod {
    ImportanceSampling,
    GaussHermite,
}

/// Proposal distribution for importance sampling.
///
/// The prior proposal is unbiased and has no setup cost, but its effective
/// sample size collapses once the observation is informative (the weight
/// concentration grows exponentially with the mutual information between the
/// undecoded streams and the output). The MMSE proposal draws from the exact
/// posterior of the model with the signal-dependent noise term replaced by
/// its prior average; it stays near full efficiency in every regime this
/// library targets and is exact when the channel estimate is noiseless.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Proposal {
    Prior,
    MmsePosterior,
}

/// Numerical settings for [`pilot_posterior_stats`].
#[derive(Clone, Copy, Debug)]
pub struct PosteriorSettings {
    pub method: PosteriorMethod,
    pub n_samples: usize,
    pub gh_points: usize,
    pub proposal: Proposal,
}

impl Default for PosteriorSettings {
    fn default() -> Self {
        Self {
            method: PosteriorMethod::ImportanceSampling,
            n_samples: 20_000,
            gh_points: 12,
            proposal: Proposal::Prior,
        }
    }
}

impl PosteriorSettings {
    pub fn importance_sampling(n_samples: usize) -> Self {
        Self {
            n_samples,
            ..Self::default()
        }
    }

    pub fn mmse_importance_sampling(n_samples: usize) -> Self {
        Self {
            n_samples,
            proposal: Proposal::MmsePosterior,
            ..Self::default()
        }
    }

    pub fn gauss_hermite(points: usize) -> Self {
        Self {
            method: PosteriorMethod::GaussHermite,
            gh_points: points,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.method {
            PosteriorMethod::ImportanceSampling if self.n_samples < 1_000 => {
                Err(Error::InvalidConfig(format!(
                    "importance sampling needs at least 1000 draws (got {})",
                    self.n_samples
                )))
            }
            PosteriorMethod::GaussHermite if self.gh_points < 8 => Err(Error::InvalidConfig(
                format!("Gauss-Hermite needs at least 8 points per dimension (got {})", self.gh_points),
            )),
            _ => Ok(()),
        }
    }
}

/// Covariance of interference-plus-noise seen by substream `stream` under
/// perfect CSI: `sum_{k > stream} P_k h_k h_k^* + sigma^2 I`.
pub fn interference_covariance(
    cfg: &SystemConfig,
    h: &FadingMatrix,
    stream: usize,
) -> HermitianPd {
    let mut k = CMatrix::zeros(cfg.n_r(), cfg.n_r());
    for tail in (stream + 1)..cfg.n_t() {
        k.add_rank_one(cfg.power(tail), &h.column(tail));
    }
    k.add_scaled_identity(cfg.sigma2());
    HermitianPd::new(k).expect("sigma2 > 0 keeps the interference covariance positive definite")
}

/// Exact conditional mean and variance of `X_stream` given
/// `(y, H, x_prefix)` under perfect CSI. The variance does not depend on
/// `y` or on the prefix.
pub fn perfect_csi_stats(
    cfg: &SystemConfig,
    y: &CVector,
    h: &FadingMatrix,
    x_prefix: &CVector,
    stream: usize,
) -> ConditionalStats {
    assert_eq!(x_prefix.len(), stream, "prefix must hold the decoded streams");
    let k_z = interference_covariance(cfg, h, stream);
    let h_i = h.column(stream);
    let solved = k_z.solve(&h_i);
    let quad = h_i.dot(&solved).re;
    let p_i = cfg.power(stream);
    let gain = p_i / (1.0 + p_i * quad);

    let mut residual = y.clone();
    for k in 0..stream {
        residual = residual.sub(&h.column(k).scale(x_prefix[k]));
    }
    // h_i^* K^{-1} residual, reusing the solve against h_i.
    let projected = solved.dot(&residual);
    ConditionalStats {
        mean: projected * gain,
        variance: gain,
    }
}

/// Per-column MMSE estimate of the fading matrix from the received pilot.
pub fn mmse_channel_estimate(cfg: &SystemConfig, y_p: &PilotObservation) -> ChannelEstimate {
    let xp = cfg.pilot_symbol();
    let xp2 = xp.norm_sqr();
    let mut h_hat = CMatrix::zeros(cfg.n_r(), cfg.n_t());
    let mut deltas2 = Vec::with_capacity(cfg.n_t());
    for j in 0..cfg.n_t() {
        let eta2 = cfg.eta2(j);
        let scale = xp.conj() * (eta2 / (eta2 * xp2 + cfg.sigma2()));
        h_hat.set_column(j, &y_p.column(j).scale(scale));
        deltas2.push(cfg.pilot_error_variance(j));
    }
    ChannelEstimate { h_hat, deltas2 }
}

/// The scheme coefficients of the pilot-only rate formulas: per-stream
/// `a_i = P_i eta_i^4 |x_p|^2 / (eta_i^2 |x_p|^2 + sigma^2)^2` and the
/// overall-noise floor `b = sigma^2 + sum_k P_k delta_k^2`.
pub fn pilot_moment_coefficients(cfg: &SystemConfig) -> (Vec<f64>, f64) {
    let xp2 = cfg.pilot_amp() * cfg.pilot_amp();
    let a = (0..cfg.n_t())
        .map(|i| {
            let eta2 = cfg.eta2(i);
            let denom = eta2 * xp2 + cfg.sigma2();
            cfg.power(i) * eta2 * eta2 * xp2 / (denom * denom)
        })
        .collect();
    let b = cfg.sigma2()
        + (0..cfg.n_t())
            .map(|k| cfg.power(k) * cfg.pilot_error_variance(k))
            .sum::<f64>();
    (a, b)
}

/// Clips a posterior variance into the open interval where `log(P/w)` and
/// the GNNDR weight `1/((P - w) w)` are finite.
pub fn clip_variance(variance: f64, power: f64) -> f64 {
    variance.clamp(VARIANCE_CLIP_EPS, power * (1.0 - VARIANCE_CLIP_EPS))
}

/// Theorem-2 quantities for substream `stream` under pilot CSI, from the
/// closed-form pilot moments: `E[X_i^* Y | v] = P_i hhat_i` and
/// `E[Y Y^* | v] = sum_k P_k (hhat_k hhat_k^* + delta_k^2 I) + sigma^2 I`,
/// with the decoded streams' contributions subtracted recursively.
pub fn linear_scheme_params(
    cfg: &SystemConfig,
    y_p: &PilotObservation,
    stream: usize,
) -> Result<LinearSchemeParams> {
    let est = mmse_channel_estimate(cfg, y_p);
    let p_i = cfg.power(stream);

    let mut second_moment = CMatrix::zeros(cfg.n_r(), cfg.n_r());
    let mut floor = cfg.sigma2();
    for k in 0..cfg.n_t() {
        floor += cfg.power(k) * est.deltas2[k];
        if k >= stream {
            // Streams before `stream` are subtracted by the processing
            // function: E[X_k^* Y] E[X_k^* Y]^* / P_k cancels P_k hhat hhat^*.
            second_moment.add_rank_one(cfg.power(k), &est.column(k));
        }
    }
    second_moment.add_scaled_identity(floor);
    let second_moment = HermitianPd::new(second_moment)
        .map_err(|e| Error::DegenerateSecondMoment(Box::new(e)))?;

    let h_i = est.column(stream);
    let cross = h_i.scale(Complex64::new(p_i, 0.0));
    let beta_tilde = second_moment.solve(&cross);
    let f_tilde = (cross.dot(&beta_tilde).re / p_i).max(0.0);
    let q = 1.0 / (p_i * p_i * f_tilde * (1.0 - f_tilde));
    Ok(LinearSchemeParams {
        gamma: h_i,
        beta_tilde,
        f_tilde,
        q,
    })
}

/// Posterior mean and variance of `X_stream` given `(y, y_p, x_prefix)`,
/// marginalizing the undecoded tail `X_stream..X_nt` numerically.
pub fn pilot_posterior_stats(
    cfg: &SystemConfig,
    settings: &PosteriorSettings,
    y: &CVector,
    y_p: &PilotObservation,
    x_prefix: &CVector,
    stream: usize,
    rng: &mut RandomStream,
) -> Result<ConditionalStats> {
    assert_eq!(x_prefix.len(), stream, "prefix must hold the decoded streams");
    settings.validate()?;
    let est = mmse_channel_estimate(cfg, y_p);
    let problem = TailProblem::new(cfg, &est, y, x_prefix, stream);
    let (mean, variance) = match settings.method {
        PosteriorMethod::ImportanceSampling => match settings.proposal {
            Proposal::Prior => problem.prior_importance_sampling(settings.n_samples, rng)?,
            Proposal::MmsePosterior => problem.mmse_importance_sampling(settings.n_samples, rng)?,
        },
        PosteriorMethod::GaussHermite => problem.gauss_hermite(settings.gh_points)?,
    };

    let p_i = cfg.power(stream);
    if variance < -1e-9 * p_i || variance > p_i * (1.0 + 1e-9) {
        log::warn!(
            "posterior variance {variance:.6e} outside [0, {p_i:.6e}]; clipping"
        );
    }
    Ok(ConditionalStats {
        mean,
        variance: variance.clamp(0.0, p_i),
    })
}

/// The marginalization problem over the undecoded tail, shared by the
/// samplers and the quadrature path.
struct TailProblem {
    n_r: usize,
    /// y minus the estimated contribution of the decoded prefix.
    residual: CVector,
    /// Columns `stream..n_t` of the channel estimate.
    h_tail: CMatrix,
    tail_powers: Vec<f64>,
    tail_deltas2: Vec<f64>,
    /// sigma^2 plus the prefix part of the estimation-error noise.
    base_noise: f64,
}

impl TailProblem {
    fn new(
        cfg: &SystemConfig,
        est: &ChannelEstimate,
        y: &CVector,
        x_prefix: &CVector,
        stream: usize,
    ) -> Self {
        let mut residual = y.clone();
        let mut base_noise = cfg.sigma2();
        for k in 0..stream {
            residual = residual.sub(&est.column(k).scale(x_prefix[k]));
            base_noise += est.deltas2[k] * x_prefix[k].norm_sqr();
        }
        let tail_len = cfg.n_t() - stream;
        let mut h_tail = CMatrix::zeros(cfg.n_r(), tail_len);
        for (t, k) in (stream..cfg.n_t()).enumerate() {
            h_tail.set_column(t, &est.column(k));
        }
        Self {
            n_r: cfg.n_r(),
            residual,
            h_tail,
            tail_powers: cfg.powers()[stream..].to_vec(),
            tail_deltas2: est.deltas2[stream..].to_vec(),
            base_noise,
        }
    }

    fn tail_len(&self) -> usize {
        self.tail_powers.len()
    }

    /// Log density of the output given a tail assignment, under the
    /// scalar-covariance conditional law.
    fn log_likelihood(&self, tail: &[Complex64]) -> f64 {
        let mut s = self.base_noise;
        for (t, d2) in tail.iter().zip(&self.tail_deltas2) {
            s += d2 * t.norm_sqr();
        }
        let mut dist_sq = 0.0;
        for r in 0..self.n_r {
            let mut acc = self.residual[r];
            for (k, t) in tail.iter().enumerate() {
                acc -= self.h_tail[(r, k)] * t;
            }
            dist_sq += acc.norm_sqr();
        }
        -(self.n_r as f64) * (std::f64::consts::PI * s).ln() - dist_sq / s
    }

    fn prior_importance_sampling(
        &self,
        n_samples: usize,
        rng: &mut RandomStream,
    ) -> Result<(Complex64, f64)> {
        let m = self.tail_len();
        let mut acc = WeightedMoments::new();
        let mut tail = vec![Complex64::ZERO; m];
        for _ in 0..n_samples {
            for (t, &p) in tail.iter_mut().zip(&self.tail_powers) {
                *t = rng.complex_gaussian(p);
            }
            acc.add(self.log_likelihood(&tail), tail[0]);
        }
        acc.finish(n_samples)
    }

    fn mmse_importance_sampling(
        &self,
        n_samples: usize,
        rng: &mut RandomStream,
    ) -> Result<(Complex64, f64)> {
        let m = self.tail_len();
        // Average noise level seen by the proposal's linear model.
        let s_bar = self.base_noise
            + self
                .tail_deltas2
                .iter()
                .zip(&self.tail_powers)
                .map(|(d2, p)| d2 * p)
                .sum::<f64>();

        // Posterior of the linearized model: precision = diag(1/P) + G/s_bar
        // with G the Gram matrix of the tail columns.
        let adj = self.h_tail.adjoint();
        let mut precision = adj.matmul(&self.h_tail).scale((1.0 / s_bar).into());
        for (k, &p) in self.tail_powers.iter().enumerate() {
            precision[(k, k)] += 1.0 / p;
        }
        let precision =
            HermitianPd::new(precision).expect("prior precision keeps the matrix positive definite");
        let proposal_mean = precision.solve(&adj.mul_vec(&self.residual).scale((1.0 / s_bar).into()));

        // Covariance of the proposal, factored for sampling and densities.
        let mut cov = CMatrix::zeros(m, m);
        for k in 0..m {
            let mut unit = CVector::zeros(m);
            unit[k] = Complex64::ONE;
            cov.set_column(k, &precision.solve(&unit));
        }
        let cov = HermitianPd::new(cov).expect("inverse of a positive definite matrix");
        let cov_logdet = cov.logdet();
        let factor = cov.factor();

        let log_prior_norm: f64 = self.tail_powers.iter().map(|p| p.ln()).sum();
        let mut acc = WeightedMoments::new();
        let mut xi = vec![Complex64::ZERO; m];
        let mut tail = vec![Complex64::ZERO; m];
        for _ in 0..n_samples {
            for x in xi.iter_mut() {
                *x = rng.complex_gaussian(1.0);
            }
            let mut xi_norm_sq = 0.0;
            for k in 0..m {
                let mut t = proposal_mean[k];
                for (j, x) in xi.iter().enumerate().take(k + 1) {
                    t += factor[(k, j)] * x;
                }
                tail[k] = t;
                xi_norm_sq += xi[k].norm_sqr();
            }
            // q(t): the quadratic form reduces to |xi|^2 for our own draws.
            let log_q = -cov_logdet - xi_norm_sq;
            let log_prior = -log_prior_norm
                - tail
                    .iter()
                    .zip(&self.tail_powers)
                    .map(|(t, p)| t.norm_sqr() / p)
                    .sum::<f64>();
            // The -m ln(pi) constants in q and the prior cancel.
            acc.add(self.log_likelihood(&tail) + log_prior - log_q, tail[0]);
        }
        acc.finish(n_samples)
    }

    fn gauss_hermite(&self, points: usize) -> Result<(Complex64, f64)> {
        let m = self.tail_len();
        if m > 3 {
            return Err(Error::QuadratureTooWide(m));
        }
        let rule = gauss_hermite_rule(points);
        let log_weights: Vec<f64> = rule.iter().map(|&(_, w)| w.ln()).collect();
        let dims = 2 * m;
        let mut index = vec![0usize; dims];
        let mut acc = WeightedMoments::new();
        let mut tail = vec![Complex64::ZERO; m];
        loop {
            let mut log_w = 0.0;
            for k in 0..m {
                let (re_node, _) = rule[index[2 * k]];
                let (im_node, _) = rule[index[2 * k + 1]];
                let scale = self.tail_powers[k].sqrt();
                tail[k] = Complex64::new(re_node * scale, im_node * scale);
                log_w += log_weights[index[2 * k]] + log_weights[index[2 * k + 1]];
            }
            acc.add(log_w + self.log_likelihood(&tail), tail[0]);

            // Odometer over the tensor grid.
            let mut dim = 0;
            loop {
                if dim == dims {
                    let (mean, var) = acc.moments();
                    return Ok((mean, var));
                }
                index[dim] += 1;
                if index[dim] < points {
                    break;
                }
                index[dim] = 0;
                dim += 1;
            }
        }
    }

    #[cfg(test)]
    fn noise_level(&self, tail: &[Complex64]) -> f64 {
        let mut s = self.base_noise;
        for (t, d2) in tail.iter().zip(&self.tail_deltas2) {
            s += d2 * t.norm_sqr();
        }
        s
    }
}

/// Self-normalized weighted first and second moments with running
/// rescaling, so weight magnitudes never overflow.
struct WeightedMoments {
    log_scale: f64,
    total: f64,
    total_sq: f64,
    first: Complex64,
    second: f64,
}

impl WeightedMoments {
    fn new() -> Self {
        Self {
            log_scale: f64::NEG_INFINITY,
            total: 0.0,
            total_sq: 0.0,
            first: Complex64::ZERO,
            second: 0.0,
        }
    }

    fn add(&mut self, log_weight: f64, value: Complex64) {
        if log_weight == f64::NEG_INFINITY {
            return;
        }
        if log_weight > self.log_scale {
            let r = (self.log_scale - log_weight).exp();
            self.total = self.total * r + 1.0;
            self.total_sq = self.total_sq * r * r + 1.0;
            self.first = self.first * r + value;
            self.second = self.second * r + value.norm_sqr();
            self.log_scale = log_weight;
        } else {
            let e = (log_weight - self.log_scale).exp();
            self.total += e;
            self.total_sq += e * e;
            self.first += value * e;
            self.second += value.norm_sqr() * e;
        }
    }

    fn effective_sample_size(&self) -> f64 {
        if self.total_sq > 0.0 {
            self.total * self.total / self.total_sq
        } else {
            0.0
        }
    }

    fn moments(&self) -> (Complex64, f64) {
        let mean = self.first / self.total;
        (mean, self.second / self.total - mean.norm_sqr())
    }

    fn finish(&self, n_samples: usize) -> Result<(Complex64, f64)> {
        let ess = self.effective_sample_size();
        if ess < MIN_ESS_FRACTION * n_samples as f64 {
            return Err(Error::DegenerateWeights { ess, n_samples });
        }
        Ok(self.moments())
    }
}

/// Nodes and weights integrating `exp(-x^2) f(x)` over the real line.
/// Newton iteration on the orthonormal Hermite recurrence.
fn gauss_hermite_rule(n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 1, "quadrature order must be positive");
    let mut rule = vec![(0.0f64, 0.0f64); n];
    let half = n.div_ceil(2);
    let mut z = 0.0f64;
    for i in 0..half {
        // Initial guesses, largest root first.
        let order = (2 * n + 1) as f64;
        z = match i {
            0 => order.sqrt() - 1.85575 * order.powf(-1.0 / 6.0),
            1 => z - 1.14 * (n as f64).powf(0.426) / z,
            2 => 1.86 * z - 0.86 * rule[0].0,
            3 => 1.91 * z - 0.91 * rule[1].0,
            _ => 2.0 * z - rule[i - 2].0,
        };
        let mut pp = 0.0;
        for _ in 0..200 {
            // Orthonormal Hermite values at z.
            let mut p1 = std::f64::consts::PI.powf(-0.25);
            let mut p2 = 0.0f64;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = z * (2.0 / (j + 1) as f64).sqrt() * p2
                    - ((j as f64) / (j + 1) as f64).sqrt() * p3;
            }
            pp = (2.0 * n as f64).sqrt() * p2;
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        rule[i] = (z, 2.0 / (pp * pp));
        rule[n - 1 - i] = (-z, 2.0 / (pp * pp));
    }
    if n % 2 == 1 {
        // Recompute the center weight exactly at zero.
        let mut p1 = std::f64::consts::PI.powf(-0.25);
        let mut p2 = 0.0f64;
        for j in 0..n {
            let p3 = p2;
            p2 = p1;
            p1 = -((j as f64) / (j + 1) as f64).sqrt() * p3;
        }
        let pp = (2.0 * n as f64).sqrt() * p2;
        rule[half - 1] = (0.0, 2.0 / (pp * pp));
    }
    rule
}
