//! Model and contract parameters, validation, and the change of variables
//! between physical and computational coordinates.
//!
//! Under the Heston dynamics
//!
//! ```text
//! dS = r S dt + sqrt(v) S dz1,
//! dv = kappa (eta - v) dt + sigma sqrt(v) dz2,   E[dz1 dz2] = rho dt,
//! ```
//!
//! with zero volatility risk premium, a European call price U(S, v, t)
//! is rewritten in forward-moneyness coordinates
//!
//! ```text
//! tau = T - t,   s_tilde = S e^{r tau} / K,   V = U e^{r tau} / K,
//! ```
//!
//! which removes the discounting and drift terms from the pricing PDE.
//! All solver modules work in (s_tilde, v, tau).

use crate::error::Error;

/// Heston model parameters. The volatility risk premium is taken as zero,
/// so `kappa` and `eta` are already the risk-neutral reversion speed and
/// level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HestonParams {
    /// Mean-reversion speed of the variance process.
    pub kappa: f64,
    /// Long-run variance level.
    pub eta: f64,
    /// Volatility of variance.
    pub sigma: f64,
    /// Correlation between the asset and variance drivers.
    pub rho: f64,
    /// Risk-free rate.
    pub r: f64,
}

/// European call contract terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractSpec {
    pub strike: f64,
    pub maturity: f64,
}

/// Severity of a validation finding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

/// One validation finding, naming the offending field.
#[derive(Debug, Clone)]
pub struct Issue {
    pub severity: Severity,
    pub field: &'static str,
    pub message: String,
}

/// Outcome of parameter validation. Warnings do not block a run.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        !self.issues.iter().any(|i| i.severity == Severity::Error)
    }

    pub fn errors(&self) -> impl Iterator<Item = &Issue> {
        self.issues.iter().filter(|i| i.severity == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Issue> {
        self.issues
            .iter()
            .filter(|i| i.severity == Severity::Warning)
    }

    fn error(&mut self, field: &'static str, message: String) {
        self.issues.push(Issue {
            severity: Severity::Error,
            field,
            message,
        });
    }

    fn warning(&mut self, field: &'static str, message: String) {
        self.issues.push(Issue {
            severity: Severity::Warning,
            field,
            message,
        });
    }
}

impl HestonParams {
    /// Checks admissibility: `kappa > 0`, `eta > 0`, `sigma >= 0`,
    /// `rho` in [-1, 1], every field finite. A violated variance-positivity
    /// bound `kappa*eta/2 >= sigma^2` is reported as a warning, not an
    /// error: the scheme stays usable, the variance process merely touches
    /// the origin.
    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        for (field, value) in [
            ("kappa", self.kappa),
            ("eta", self.eta),
            ("sigma", self.sigma),
            ("rho", self.rho),
            ("r", self.r),
        ] {
            if !value.is_finite() {
                report.error(field, format!("must be finite, got {value}"));
            }
        }
        if !(self.kappa > 0.0) {
            report.error("kappa", format!("must be positive, got {}", self.kappa));
        }
        if !(self.eta > 0.0) {
            report.error("eta", format!("must be positive, got {}", self.eta));
        }
        if !(self.sigma >= 0.0) {
            report.error("sigma", format!("must be non-negative, got {}", self.sigma));
        }
        if !(-1.0..=1.0).contains(&self.rho) {
            report.error("rho", format!("must lie in [-1, 1], got {}", self.rho));
        }
        if report.is_valid() && !self.feller_satisfied() {
            report.warning(
                "sigma",
                format!(
                    "variance positivity bound kappa*eta/2 >= sigma^2 violated \
                     ({} < {}); the variance process can reach zero",
                    0.5 * self.kappa * self.eta,
                    self.sigma * self.sigma
                ),
            );
        }
        report
    }

    /// The variance positivity bound in the form `kappa*eta/2 >= sigma^2`.
    pub fn feller_satisfied(&self) -> bool {
        0.5 * self.kappa * self.eta >= self.sigma * self.sigma
    }

    /// Validates and returns `self`, erroring on the first violation.
    pub fn validated(self) -> Result<Self, Error> {
        let report = self.validate();
        let first = report
            .errors()
            .next()
            .map(|issue| (issue.field, issue.message.clone()));
        match first {
            None => Ok(self),
            Some((field, constraint)) => Err(Error::InvalidParameter { field, constraint }),
        }
    }
}

impl ContractSpec {
    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        if !(self.strike > 0.0 && self.strike.is_finite()) {
            report.error(
                "strike",
                format!("must be positive and finite, got {}", self.strike),
            );
        }
        if !(self.maturity > 0.0 && self.maturity.is_finite()) {
            report.error(
                "maturity",
                format!("must be positive and finite, got {}", self.maturity),
            );
        }
        report
    }
}

/// Maps a physical point (S, U, t) to computational coordinates
/// (s_tilde, V, tau). Requires `0 <= t <= T`.
pub fn to_computational(
    s: f64,
    u: f64,
    t: f64,
    params: &HestonParams,
    contract: &ContractSpec,
) -> (f64, f64, f64) {
    let tau = contract.maturity - t;
    let growth = (params.r * tau).exp() / contract.strike;
    (s * growth, u * growth, tau)
}

/// Inverse of [`to_computational`].
pub fn to_physical(
    s_tilde: f64,
    v_value: f64,
    tau: f64,
    params: &HestonParams,
    contract: &ContractSpec,
) -> (f64, f64, f64) {
    let discount = (-params.r * tau).exp() * contract.strike;
    (
        s_tilde * discount,
        v_value * discount,
        contract.maturity - tau,
    )
}
