//! Step-size and linear-rate certificates for PDDR with a mismatched adjoint.
//!
//! Given strong-convexity moduli `gamma_G`, `gamma_F*` and the mismatch
//! `d = ||A - V||`, the recipe picks shifts `mu~ < mu < gamma` for both
//! functions, an extrapolation `theta in (0, 1)` with `delta = 1/theta` and
//! `alpha = delta - 1`, and the step size `tau` maximizing the rate parameter
//! `eta` subject to the monotonicity bound `tau_S`.

use std::sync::Arc;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::{
    estimate_operator_norm_with, estimate_sigma_min, BlockSkewOperator, MismatchPair, PowerIterationOptions,
};

/// Relative accuracy of the `sigma_min(B_Sigma)` estimate used by [`plan_for_pair`].
pub const SIGMA_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvexityProfile {
    pub gamma_g: f64,
    pub gamma_f: f64,
    pub mismatch_norm: f64,
}

impl ConvexityProfile {
    pub fn new(gamma_g: f64, gamma_f: f64, mismatch_norm: f64) -> Result<Self> {
        if !(gamma_g > 0.0 && gamma_f > 0.0 && gamma_g.is_finite() && gamma_f.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "strong-convexity moduli must be positive, got gamma_G = {gamma_g}, gamma_F* = {gamma_f}"
            )));
        }
        if !(mismatch_norm >= 0.0 && mismatch_norm.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "mismatch norm must be nonnegative, got {mismatch_norm}"
            )));
        }
        Ok(ConvexityProfile {
            gamma_g,
            gamma_f,
            mismatch_norm,
        })
    }

    /// `gamma_G gamma_F* > ||A - V||^2 / 4`: a unique fixed point exists.
    pub fn exists_unique(&self) -> bool {
        self.gamma_g * self.gamma_f > self.threshold()
    }

    fn threshold(&self) -> f64 {
        0.25 * self.mismatch_norm * self.mismatch_norm
    }
}

/// Shifts with `0 < mu~ < mu < gamma` for `G` and `F*`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mus {
    pub mu_g: f64,
    pub mu_tilde_g: f64,
    pub mu_f: f64,
    pub mu_tilde_f: f64,
}

impl Mus {
    /// `min{(mu_G - mu~_G)/(mu_G mu~_G), (mu_F* - mu~_F*)/(mu_F* mu~_F*)}`.
    pub fn c(&self) -> f64 {
        f64::min(
            (self.mu_g - self.mu_tilde_g) / (self.mu_g * self.mu_tilde_g),
            (self.mu_f - self.mu_tilde_f) / (self.mu_f * self.mu_tilde_f),
        )
    }

    /// Smallest `alpha` keeping the lifted operator monotone for the given
    /// `gamma = (1 + alpha) tau`.
    pub fn alpha_lower_bound(&self, gamma: f64) -> f64 {
        f64::max(
            gamma * self.mu_g * self.mu_tilde_g / (self.mu_g - self.mu_tilde_g),
            gamma * self.mu_f * self.mu_tilde_f / (self.mu_f - self.mu_tilde_f),
        )
    }

    /// `(alpha + gamma mu)(alpha - gamma mu~) - alpha^2` for `G` and `F*`;
    /// both are nonnegative exactly when `alpha` satisfies the monotonicity bound.
    pub fn monotonicity_margins(&self, alpha: f64, gamma: f64) -> [f64; 2] {
        let margin = |mu: f64, mt: f64| (alpha + gamma * mu) * (alpha - gamma * mt) - alpha * alpha;
        [margin(self.mu_g, self.mu_tilde_g), margin(self.mu_f, self.mu_tilde_f)]
    }
}

/// Midpoint choice `mu~_G = (gamma_G + (d/2) sqrt(gamma_G/gamma_F*)) / 2`,
/// `mu_G = (gamma_G + mu~_G) / 2`, and symmetrically for `F*`.
pub fn select_mus(profile: &ConvexityProfile) -> Result<Mus> {
    if !profile.exists_unique() {
        return Err(Error::NoFixedPoint {
            product: profile.gamma_g * profile.gamma_f,
            threshold: profile.threshold(),
        });
    }
    let (gg, gf, d) = (profile.gamma_g, profile.gamma_f, profile.mismatch_norm);
    let mu_tilde_g = 0.5 * (gg + 0.5 * d * (gg / gf).sqrt());
    let mu_tilde_f = 0.5 * (gf + 0.5 * d * (gf / gg).sqrt());
    Ok(Mus {
        mu_g: 0.5 * (gg + mu_tilde_g),
        mu_tilde_g,
        mu_f: 0.5 * (gf + mu_tilde_f),
        mu_tilde_f,
    })
}

/// Which branch of the step-size case split produced `tau~`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauBranch {
    /// `tau~ = zeta`, the maximizer of the `sigma` term.
    Zeta,
    /// `tau~ = tau_+`, the crossing of both terms.
    TauPlus,
    /// Root configuration not covered by the case split; `zeta` used.
    FallbackZeta,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepPlan {
    pub profile: ConvexityProfile,
    pub mu_g: f64,
    pub mu_tilde_g: f64,
    pub mu_f: f64,
    pub mu_tilde_f: f64,
    pub theta: f64,
    pub delta: f64,
    pub alpha: f64,
    pub tau: f64,
    pub zeta: f64,
    pub tau_s: f64,
    pub tau_plus: Option<f64>,
    pub tau_minus: Option<f64>,
    pub tau_branch: TauBranch,
    pub upsilon: f64,
    pub sigma: f64,
    pub b_sigma_norm: f64,
    pub eta: f64,
    pub rate: f64,
    pub c: f64,
    /// Upper end `2 - 2 tau / c` of the weak-convergence range of `theta`.
    pub weak_theta_bound: f64,
    /// Upper end `2 / (1 + alpha)` of the linear-convergence range of `theta`.
    pub linear_theta_bound: f64,
}

impl StepPlan {
    pub fn mus(&self) -> Mus {
        Mus {
            mu_g: self.mu_g,
            mu_tilde_g: self.mu_tilde_g,
            mu_f: self.mu_f,
            mu_tilde_f: self.mu_tilde_f,
        }
    }

    /// `gamma = (1 + alpha) tau`.
    pub fn gamma(&self) -> f64 {
        (1.0 + self.alpha) * self.tau
    }

    /// Human-readable two-column summary.
    pub fn table(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "complex".to_string(), |x| format!("{x:.6e}"));
        let rows: Vec<(&str, String)> = vec![
            ("gamma_G", format!("{:.6e}", self.profile.gamma_g)),
            ("gamma_F*", format!("{:.6e}", self.profile.gamma_f)),
            ("||A - V||", format!("{:.6e}", self.profile.mismatch_norm)),
            ("mu_G", format!("{:.6e}", self.mu_g)),
            ("mu~_G", format!("{:.6e}", self.mu_tilde_g)),
            ("mu_F*", format!("{:.6e}", self.mu_f)),
            ("mu~_F*", format!("{:.6e}", self.mu_tilde_f)),
            ("sigma_min(B_Sigma)", format!("{:.6e}", self.sigma)),
            ("||B_Sigma||", format!("{:.6e}", self.b_sigma_norm)),
            ("theta", format!("{:.6e}", self.theta)),
            ("delta", format!("{:.6e}", self.delta)),
            ("alpha", format!("{:.6e}", self.alpha)),
            ("upsilon", format!("{:.6e}", self.upsilon)),
            ("zeta", format!("{:.6e}", self.zeta)),
            ("tau_S", format!("{:.6e}", self.tau_s)),
            ("tau_-", opt(self.tau_minus)),
            ("tau_+", opt(self.tau_plus)),
            ("branch", format!("{:?}", self.tau_branch)),
            ("tau", format!("{:.6e}", self.tau)),
            ("eta", format!("{:.6e}", self.eta)),
            ("rate", format!("{:.10}", self.rate)),
            ("c", format!("{:.6e}", self.c)),
            ("theta bound (weak)", format!("{:.6e}", self.weak_theta_bound)),
            ("theta bound (linear)", format!("{:.6e}", self.linear_theta_bound)),
        ];
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        rows.iter().map(|(k, v)| format!("{k:<width$}  {v}\n")).collect()
    }
}

/// `eta = (4 gamma / 27) min{ upsilon / (1 + 2 alpha)^2,
/// sigma / (4 gamma^2 ||B_Sigma||^2 + (alpha + gamma max mu~)^2) }`.
pub fn eta(gamma: f64, alpha: f64, upsilon: f64, sigma: f64, b_sigma_norm: f64, max_mu_tilde: f64) -> f64 {
    let first = upsilon / (1.0 + 2.0 * alpha).powi(2);
    let denom = 4.0 * gamma * gamma * b_sigma_norm * b_sigma_norm + (alpha + gamma * max_mu_tilde).powi(2);
    4.0 * gamma / 27.0 * f64::min(first, sigma / denom)
}

/// Runs the recipe for `theta in (0, 1)` given `sigma = sigma_min(B_Sigma)` and
/// `||B_Sigma||` of the block operator built with the selected `mu~`.
pub fn compute_plan(profile: &ConvexityProfile, theta: f64, sigma: f64, b_sigma_norm: f64) -> Result<StepPlan> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::InvalidConfig(format!("theta must lie in (0, 1), got {theta}")));
    }
    let mus = select_mus(profile)?;
    if !(sigma > 0.0) {
        return Err(Error::NoRateCertificate { eta: 0.0, sigma });
    }
    let d = profile.mismatch_norm;
    let delta = 1.0 / theta;
    let alpha = delta - 1.0;
    let upsilon = 0.5 * f64::min(profile.gamma_g - mus.mu_g, profile.gamma_f - mus.mu_f);
    let m = f64::max(mus.mu_tilde_g, mus.mu_tilde_f);
    let big_d = 4.0 * b_sigma_norm * b_sigma_norm + m * m;
    let zeta = (delta - 1.0) / (delta * big_d.sqrt());
    let c = mus.c();
    let tau_s = (delta - 1.0) / delta * f64::min(c, 0.99 * delta / ((delta - 1.0) * d));

    let disc =
        (delta - 1.0).powi(2) * m * m - ((delta - 1.0).powi(2) - sigma / upsilon * (2.0 * delta - 1.0).powi(2)) * big_d;
    let (tau_minus, tau_plus) = if disc < 0.0 {
        (None, None)
    } else {
        let root = disc.sqrt();
        let base = (1.0 - delta) * m;
        let denom = delta * big_d;
        (Some((base - root) / denom), Some((base + root) / denom))
    };
    let (tau_tilde, tau_branch) = match (tau_minus, tau_plus) {
        (None, _) | (_, None) => (zeta, TauBranch::Zeta),
        (Some(tm), Some(tp)) => {
            if tm > 0.0 && zeta > tp && tp > 0.0 {
                (zeta, TauBranch::Zeta)
            } else if tm < 0.0 || (tm > 0.0 && tp >= zeta && zeta > 0.0) {
                (tp, TauBranch::TauPlus)
            } else {
                warn!("step-size case split does not cover tau_- = {tm}, tau_+ = {tp}; using zeta");
                (zeta, TauBranch::FallbackZeta)
            }
        }
    };
    let tau = f64::min(tau_s, tau_tilde);
    let gamma = delta * tau;
    let eta = eta(gamma, alpha, upsilon, sigma, b_sigma_norm, m);
    if !(eta > 0.0) || !(tau > 0.0) {
        return Err(Error::NoRateCertificate { eta, sigma });
    }
    Ok(StepPlan {
        profile: *profile,
        mu_g: mus.mu_g,
        mu_tilde_g: mus.mu_tilde_g,
        mu_f: mus.mu_f,
        mu_tilde_f: mus.mu_tilde_f,
        theta,
        delta,
        alpha,
        tau,
        zeta,
        tau_s,
        tau_plus,
        tau_minus,
        tau_branch,
        upsilon,
        sigma,
        b_sigma_norm,
        eta,
        rate: 1.0 / (1.0 + eta),
        c,
        weak_theta_bound: 2.0 - 2.0 * tau / c,
        linear_theta_bound: 2.0 / (1.0 + alpha),
    })
}

/// Whether `(tau, theta)` lies in the weak-convergence region
/// `tau in (0, min(1/||A - V||, c))`, `theta in (0, 2 - 2 tau / c)`; also returns `c`.
pub fn certify_weak(profile: &ConvexityProfile, mus: &Mus, tau: f64, theta: f64) -> (bool, f64) {
    let c = mus.c();
    let tau_max = f64::min(1.0 / profile.mismatch_norm, c);
    let ok = tau > 0.0 && tau < tau_max && theta > 0.0 && theta < 2.0 - 2.0 * tau / c;
    (ok, c)
}

/// `(1 + (1 - theta (1 + alpha)) eta) / (1 + eta)`.
pub fn predicted_rate(plan: &StepPlan) -> f64 {
    (1.0 + (1.0 - plan.theta * (1.0 + plan.alpha)) * plan.eta) / (1.0 + plan.eta)
}

/// Measures `sigma_min(B_Sigma)` and `||B_Sigma||` for the operator pair and
/// runs the recipe.
pub fn plan_for_pair(pair: &MismatchPair, gamma_g: f64, gamma_f: f64, theta: f64) -> Result<StepPlan> {
    plan_for_pair_with(pair, gamma_g, gamma_f, theta, PowerIterationOptions::default())
}

/// [`plan_for_pair`] with explicit options for the `||B_Sigma||` estimate.
pub fn plan_for_pair_with(
    pair: &MismatchPair,
    gamma_g: f64,
    gamma_f: f64,
    theta: f64,
    norm_opts: PowerIterationOptions,
) -> Result<StepPlan> {
    let profile = ConvexityProfile::new(gamma_g, gamma_f, pair.mismatch_norm())?;
    let mus = select_mus(&profile)?;
    let block = BlockSkewOperator::new(pair.clone(), mus.mu_tilde_g, mus.mu_tilde_f);
    let sigma = estimate_sigma_min(&block, SIGMA_TOL)?;
    let norm = estimate_operator_norm_with(&block, norm_opts)?;
    compute_plan(&profile, theta, sigma, norm)
}

/// Plan for scalar operators `A = a`, `V* = v`, where `B_Sigma` is 2x2.
pub fn plan_for_scalars(a: f64, v: f64, gamma_g: f64, gamma_f: f64, theta: f64) -> Result<StepPlan> {
    use crate::operators::{LinearMap, ScaledIdentity};
    let fwd: Arc<dyn LinearMap> = Arc::new(ScaledIdentity { dim: 1, scale: a });
    let sur: Arc<dyn LinearMap> = Arc::new(ScaledIdentity { dim: 1, scale: v });
    let pair = MismatchPair::with_mismatch_norm(fwd, sur, (a - v).abs())?;
    plan_for_pair(&pair, gamma_g, gamma_f, theta)
}
