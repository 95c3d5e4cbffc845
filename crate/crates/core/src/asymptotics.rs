//! Second-order vol-of-vol expansion of the transformed call price.
//!
//! For small volatility of variance the transformed price admits the
//! expansion `V = V0 + sigma*V1 + sigma^2*V2 + O(sigma^3)`. With the
//! effective total variance
//!
//! ```text
//! z = eta*tau + (v - eta) (1 - e^{-kappa tau}) / kappa,
//! d± = (ln s ± z/2) / sqrt(z),
//! ```
//!
//! the leading term is the lognormal value `V0 = s N(d+) - N(d-)`, and the
//! corrections are Gaussian-weighted combinations of the time-structure
//! coefficients F, G, H = F^2/2 and J below. The expansion serves as the
//! reference solution in the error studies: it is cheap, smooth, and its
//! truncation error is O(sigma^3) uniformly on the truncated domain.
//!
//! Note on the second-order term: the bracket polynomials in `v2_price`
//! are exactly the Hermite combinations `phi''/phi`, `-phi'''/phi`,
//! `phi''''/phi`, so the whole bracket carries a factor `phi(d-)`, as the
//! first-order term does. Without it V2 would violate both the payoff
//! initial condition and the `s -> 0` boundary condition; with it the
//! PDE cascade for (V0, V1, V2) is satisfied to finite-difference
//! accuracy (see the expansion residual tests).

use crate::math::{normal_cdf, normal_pdf};
use crate::model::{ContractSpec, HestonParams};

/// Truncation order of the expansion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpansionOrder {
    /// V0 only.
    Zeroth,
    /// V0 + sigma V1.
    First,
    /// V0 + sigma V1 + sigma^2 V2.
    Second,
}

/// `x / (e^x - 1)`, the decay ratio that recurs in every time-structure
/// coefficient as `kappa e^{-kappa tau} tau / (1 - e^{-kappa tau})`.
/// Three-term series below 1e-6 keeps the small-tau limit exact.
fn decay_ratio(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x < 1e-6 {
        1.0 - 0.5 * x + x * x / 12.0
    } else {
        x / x.exp_m1()
    }
}

/// `(1 - e^{-x}) / x`, series-guarded like [`decay_ratio`].
fn one_minus_exp_over(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x < 1e-6 {
        1.0 - 0.5 * x + x * x / 6.0
    } else {
        -(-x).exp_m1() / x
    }
}

/// Effective total variance accumulated over remaining time `tau` when the
/// instantaneous variance is `v`: the integral of the expected variance
/// path `eta + (v - eta) e^{-kappa t}`.
pub fn total_variance(v: f64, tau: f64, params: &HestonParams) -> f64 {
    debug_assert!(v >= 0.0 && tau >= 0.0);
    let em = one_minus_exp_over(params.kappa * tau);
    params.eta * tau + (v - params.eta) * tau * em
}

/// The pair (d+, d-) for spot `s_tilde` and total variance `z`.
pub fn d_plus_minus(s_tilde: f64, z: f64) -> (f64, f64) {
    debug_assert!(s_tilde > 0.0 && z > 0.0);
    let root = z.sqrt();
    let log_m = s_tilde.ln();
    ((log_m + 0.5 * z) / root, (log_m - 0.5 * z) / root)
}

/// First-order time-structure coefficient F.
pub fn coeff_f(v: f64, tau: f64, params: &HestonParams) -> f64 {
    let x = params.kappa * tau;
    let a = decay_ratio(x);
    let em = one_minus_exp_over(x);
    let z = total_variance(v, tau, params);
    (1.0 - a) * z + params.eta * tau * (a - em)
}

/// Second-order coefficient G.
pub fn coeff_g(v: f64, tau: f64, params: &HestonParams) -> f64 {
    let x = params.kappa * tau;
    let a = decay_ratio(x);
    let z = total_variance(v, tau, params);
    let e = (-x).exp();
    let onem = 1.0 - e;
    -(a + 0.5 * onem - 1.0) * z
        + params.eta * (a * tau - 0.5 * e * tau - (onem * onem + 2.0 * onem) / (4.0 * params.kappa))
}

/// Second-order coefficient H = F^2 / 2.
pub fn coeff_h(v: f64, tau: f64, params: &HestonParams) -> f64 {
    let f = coeff_f(v, tau, params);
    0.5 * f * f
}

/// Second-order coefficient J.
pub fn coeff_j(v: f64, tau: f64, params: &HestonParams) -> f64 {
    let x = params.kappa * tau;
    let a = decay_ratio(x);
    let z = total_variance(v, tau, params);
    let e = (-x).exp();
    let onem = 1.0 - e;
    (-a * x - 2.0 * a + 2.0) * z
        + params.eta * (a * x * tau + 2.0 * a * tau + 2.0 * e * tau - 4.0 * onem / params.kappa)
}

/// Leading-order transformed price `V0 = s N(d+) - N(d-)`.
pub fn v0_price(s_tilde: f64, v: f64, tau: f64, params: &HestonParams) -> f64 {
    debug_assert!(s_tilde >= 0.0 && v >= 0.0 && tau >= 0.0);
    if tau == 0.0 || s_tilde == 0.0 {
        return (s_tilde - 1.0).max(0.0);
    }
    let z = total_variance(v, tau, params);
    if z <= 0.0 {
        return (s_tilde - 1.0).max(0.0);
    }
    let (dp, dm) = d_plus_minus(s_tilde, z);
    s_tilde * normal_cdf(dp) - normal_cdf(dm)
}

/// First-order correction V1. Proportional to `rho`; vanishes at
/// expiry and at the origin.
pub fn v1_price(s_tilde: f64, v: f64, tau: f64, params: &HestonParams) -> f64 {
    debug_assert!(s_tilde >= 0.0 && v >= 0.0 && tau >= 0.0);
    if tau == 0.0 || s_tilde == 0.0 {
        return 0.0;
    }
    let z = total_variance(v, tau, params);
    if z <= 0.0 {
        return 0.0;
    }
    let (_, dm) = d_plus_minus(s_tilde, z);
    let f = coeff_f(v, tau, params);
    -(params.rho / (2.0 * params.kappa)) * f / z * dm * normal_pdf(dm)
}

/// Second-order correction V2: the five bracket terms in increasing
/// powers of 1/sqrt(z), times the Gaussian weight `phi(d-)`.
pub fn v2_price(s_tilde: f64, v: f64, tau: f64, params: &HestonParams) -> f64 {
    debug_assert!(s_tilde >= 0.0 && v >= 0.0 && tau >= 0.0);
    if tau == 0.0 || s_tilde == 0.0 {
        return 0.0;
    }
    let z = total_variance(v, tau, params);
    if z <= 0.0 {
        return 0.0;
    }
    let (_, dm) = d_plus_minus(s_tilde, z);
    let g = coeff_g(v, tau, params);
    let h = coeff_h(v, tau, params);
    let j = coeff_j(v, tau, params);
    let rho2 = params.rho * params.rho;
    let dm2 = dm * dm;
    let bracket = g / z * dm
        + g / z.powf(1.5) * (-1.0 + dm2)
        + rho2 * j / z.powf(1.5) * (-1.0 + dm2)
        + rho2 * h / (z * z) * (-3.0 * dm + dm2 * dm)
        + rho2 * h / z.powf(2.5) * (3.0 - 6.0 * dm2 + dm2 * dm2);
    bracket * normal_pdf(dm) / (4.0 * params.kappa * params.kappa)
}

/// The expansion truncated at `order`.
pub fn asymptotic_price(
    s_tilde: f64,
    v: f64,
    tau: f64,
    params: &HestonParams,
    order: ExpansionOrder,
) -> f64 {
    let mut value = v0_price(s_tilde, v, tau, params);
    if order == ExpansionOrder::Zeroth {
        return value;
    }
    value += params.sigma * v1_price(s_tilde, v, tau, params);
    if order == ExpansionOrder::First {
        return value;
    }
    value + params.sigma * params.sigma * v2_price(s_tilde, v, tau, params)
}

/// Leading-order price in physical units: the transformed V0 mapped back
/// through the change of variables.
pub fn u0_physical(s: f64, v: f64, t: f64, params: &HestonParams, contract: &ContractSpec) -> f64 {
    debug_assert!(t <= contract.maturity);
    let tau = contract.maturity - t;
    let growth = (params.r * tau).exp();
    let s_tilde = s * growth / contract.strike;
    contract.strike / growth * v0_price(s_tilde, v, tau, params)
}

/// Price along the deterministic variance path `eta + (v0 - eta) e^{-kappa t}`:
/// the sigma -> 0 limit of the model, evaluated at time `t`.
pub fn deterministic_variance_price(
    s: f64,
    v0_start: f64,
    t: f64,
    params: &HestonParams,
    contract: &ContractSpec,
) -> f64 {
    let v_det = params.eta + (v0_start - params.eta) * (-params.kappa * t).exp();
    u0_physical(s, v_det, t, params, contract)
}

/// Closed-form partial derivatives of V0 used by boundary analysis and
/// tests. Requires `s_tilde > 0`, `tau > 0`.
#[derive(Debug, Clone, Copy)]
pub struct V0Partials {
    /// dV0/dv.
    pub d_v: f64,
    /// d^2 V0 / d s_tilde^2.
    pub d_ss: f64,
    /// dV0/dtau.
    pub d_tau: f64,
}

pub fn v0_partials(s_tilde: f64, v: f64, tau: f64, params: &HestonParams) -> V0Partials {
    assert!(
        s_tilde > 0.0 && tau > 0.0,
        "V0 partials need s_tilde > 0 and tau > 0"
    );
    let z = total_variance(v, tau, params);
    let (dp, dm) = d_plus_minus(s_tilde, z);
    let root = z.sqrt();
    let em = one_minus_exp_over(params.kappa * tau);
    let decay = (-params.kappa * tau).exp();
    V0Partials {
        d_v: normal_pdf(dm) / (2.0 * root) * tau * em,
        d_ss: normal_pdf(dp) / (s_tilde * root),
        d_tau: normal_pdf(dm) / (2.0 * root) * (params.eta + (v - params.eta) * decay),
    }
}
