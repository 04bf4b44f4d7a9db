//! Complete Bernstein functions of subordinators: evaluation, Levy and
//! potential densities, and the scaling inequalities they satisfy.
//!
//! A driftless subordinator is described by its Laplace exponent
//! `phi(lambda) = int_0^inf (1 - e^{-lambda t}) mu(t) dt` where `mu` is the
//! density of the Levy measure. For complete Bernstein `phi` the density
//! `mu` is completely monotone and can be recovered from the boundary
//! values of `phi` on the negative real axis:
//! `mu(t) = (1/pi) int_0^inf e^{-ts} Im phi(-s + i0) ds`.
//! The geometric stable family is evaluated through this representation.

use std::fmt;
use std::sync::Arc;

use statrs::function::gamma::gamma;

use crate::error::{LabError, Result};
use crate::quad::{self, integrate_log_halfline, log_grid};

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Laplace exponent of a driftless subordinator together with its
/// derivative, Levy density and (when available) potential density.
#[derive(Clone)]
pub struct CompleteBernsteinFunction {
    name: String,
    phi: RealFn,
    phi_prime: RealFn,
    mu: Option<RealFn>,
    u: Option<RealFn>,
}

impl fmt::Debug for CompleteBernsteinFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CompleteBernsteinFunction")
            .field("name", &self.name)
            .field("has_mu", &self.mu.is_some())
            .field("has_u", &self.u.is_some())
            .finish()
    }
}

impl CompleteBernsteinFunction {
    pub fn new(
        name: impl Into<String>,
        phi: RealFn,
        phi_prime: RealFn,
        mu: Option<RealFn>,
        u: Option<RealFn>,
    ) -> Self {
        Self { name: name.into(), phi, phi_prime, mu, u }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Laplace exponent `phi(lambda)`.
    pub fn phi(&self, lambda: f64) -> f64 {
        (self.phi)(lambda)
    }

    /// Derivative `phi'(lambda)`.
    pub fn phi_prime(&self, lambda: f64) -> f64 {
        (self.phi_prime)(lambda)
    }

    /// Levy density `mu(t)` of the subordinator.
    pub fn mu(&self, t: f64) -> Result<f64> {
        match &self.mu {
            Some(mu) => Ok(mu(t)),
            None => Err(LabError::UnsupportedModel(format!(
                "Levy density unavailable for {}",
                self.name
            ))),
        }
    }

    pub fn has_mu(&self) -> bool {
        self.mu.is_some()
    }

    /// Potential density `u(t)`, present in the transient closed-form cases.
    pub fn potential_density(&self, t: f64) -> Result<f64> {
        match &self.u {
            Some(u) => Ok(u(t)),
            None => Err(LabError::UnsupportedModel(format!(
                "potential density unavailable for {}",
                self.name
            ))),
        }
    }

    pub fn has_potential_density(&self) -> bool {
        self.u.is_some()
    }

    /// Returns a copy with the Levy density multiplied by `factor`.
    ///
    /// The result is deliberately inconsistent with `phi`; it exists so
    /// inequality audits can be pointed at constructed violations.
    pub fn with_mu_scaled(&self, factor: f64) -> Self {
        let base = self.mu.clone();
        Self {
            name: format!("{}*mu-scaled:{}", self.name, factor),
            phi: self.phi.clone(),
            phi_prime: self.phi_prime.clone(),
            mu: base.map(|mu| {
                Arc::new(move |t: f64| factor * mu(t)) as RealFn
            }),
            u: self.u.clone(),
        }
    }

    /// Numerical Laplace transform `int_0^inf (1 - e^{-lambda t}) mu(t) dt`.
    ///
    /// For a consistent instance this reproduces `phi(lambda)`.
    pub fn laplace_transform_of_mu(&self, lambda: f64) -> Result<f64> {
        if !self.has_mu() {
            return Err(LabError::UnsupportedModel(format!(
                "Levy density unavailable for {}",
                self.name
            )));
        }
        let q = integrate_log_halfline(
            &|t: f64| -(-lambda * t).exp_m1() * self.mu(t).unwrap(),
            1e-12,
            1e-10,
        )?;
        Ok(q.value)
    }

    /// Parses a subordinator id: `stable:0.5`, `gamma`, `geo:1.0`,
    /// `iter-geo:2:1.0`.
    pub fn from_id(id: &str) -> Result<Self> {
        let parts: Vec<&str> = id.split(':').collect();
        let bad = |msg: &str| LabError::Parameter(format!("subordinator id {id:?}: {msg}"));
        match parts.as_slice() {
            ["gamma"] => Ok(make_gamma_subordinator()),
            ["stable", beta] => {
                let beta: f64 = beta.parse().map_err(|_| bad("bad beta"))?;
                make_stable_subordinator(beta)
            }
            ["geo", alpha] => {
                let alpha: f64 = alpha.parse().map_err(|_| bad("bad alpha"))?;
                make_geometric_stable_subordinator(alpha)
            }
            ["iter-geo", n, alpha] => {
                let n: u32 = n.parse().map_err(|_| bad("bad iteration count"))?;
                let alpha: f64 = alpha.parse().map_err(|_| bad("bad alpha"))?;
                make_iterated_geometric_subordinator(n, alpha)
            }
            _ => Err(bad("unknown form")),
        }
    }
}

/// Stable subordinator: `phi(lambda) = lambda^beta`.
pub fn make_stable_subordinator(beta: f64) -> Result<CompleteBernsteinFunction> {
    if !(0.0 < beta && beta < 1.0) {
        return Err(LabError::Parameter(format!(
            "stable subordinator needs beta in (0,1), got {beta}"
        )));
    }
    let mu_c = beta / gamma(1.0 - beta);
    let u_c = 1.0 / gamma(beta);
    Ok(CompleteBernsteinFunction::new(
        format!("stable:{beta}"),
        Arc::new(move |l: f64| l.powf(beta)),
        Arc::new(move |l: f64| beta * l.powf(beta - 1.0)),
        Some(Arc::new(move |t: f64| mu_c * t.powf(-1.0 - beta))),
        Some(Arc::new(move |t: f64| u_c * t.powf(beta - 1.0))),
    ))
}

/// Gamma subordinator: `phi(lambda) = log(1 + lambda)`, `mu(t) = e^{-t}/t`.
pub fn make_gamma_subordinator() -> CompleteBernsteinFunction {
    CompleteBernsteinFunction::new(
        "gamma",
        Arc::new(|l: f64| l.ln_1p()),
        Arc::new(|l: f64| 1.0 / (1.0 + l)),
        Some(Arc::new(|t: f64| (-t).exp() / t)),
        None,
    )
}

/// Geometric stable subordinator: `phi(lambda) = log(1 + lambda^{alpha/2})`.
///
/// The Levy density has no elementary closed form; it is evaluated from the
/// complete Bernstein boundary representation
/// `mu(t) = (1/pi) int_0^inf e^{-ts} arg(1 + s^{alpha/2} e^{i pi alpha/2}) ds`
/// by adaptive quadrature. The quadrature is tabulated once into a log-log
/// interpolation table (both asymptotic ends are power laws, which the
/// table extrapolates exactly), so downstream subordination integrals can
/// evaluate `mu` cheaply.
pub fn make_geometric_stable_subordinator(alpha: f64) -> Result<CompleteBernsteinFunction> {
    if !(0.0 < alpha && alpha <= 2.0) {
        return Err(LabError::Parameter(format!(
            "geometric stable subordinator needs alpha in (0,2], got {alpha}"
        )));
    }
    let b = alpha / 2.0;
    let (sinb, cosb) = (std::f64::consts::PI * b).sin_cos();
    let theta = move |s: f64| {
        let sb = s.powf(b);
        (sb * sinb).atan2(1.0 + sb * cosb)
    };
    let mu_exact = move |t: f64| -> f64 {
        let q = integrate_log_halfline(&|s: f64| (-t * s).exp() * theta(s), 1e-300, 1e-10)
            .expect("geometric stable Levy density quadrature failed");
        q.value / std::f64::consts::PI
    };
    let table = quad::LogLogInterp::build(mu_exact, 1e-14, 1e6, 8192)?;
    Ok(CompleteBernsteinFunction::new(
        format!("geo:{alpha}"),
        Arc::new(move |l: f64| l.powf(b).ln_1p()),
        Arc::new(move |l: f64| b * l.powf(b - 1.0) / (1.0 + l.powf(b))),
        Some(Arc::new(move |t: f64| table.eval(t))),
        None,
    ))
}

/// Iterated geometric subordinator `phi_n = phi_1 o ... o phi_1` (n times).
///
/// Only `phi` and `phi'` are exposed; the Levy density for n >= 2 is out of
/// numerical reach and reported unavailable.
pub fn make_iterated_geometric_subordinator(
    n: u32,
    alpha: f64,
) -> Result<CompleteBernsteinFunction> {
    if n == 0 {
        return Err(LabError::Parameter("iteration count must be >= 1".into()));
    }
    if n == 1 {
        return make_geometric_stable_subordinator(alpha);
    }
    if !(0.0 < alpha && alpha <= 2.0) {
        return Err(LabError::Parameter(format!(
            "iterated geometric subordinator needs alpha in (0,2], got {alpha}"
        )));
    }
    let b = alpha / 2.0;
    let phi1 = move |l: f64| l.powf(b).ln_1p();
    let phi1p = move |l: f64| b * l.powf(b - 1.0) / (1.0 + l.powf(b));
    let phi = move |l: f64| (0..n).fold(l, |acc, _| phi1(acc));
    let phi_prime = move |l: f64| {
        let mut acc = l;
        let mut deriv = 1.0;
        for _ in 0..n {
            deriv *= phi1p(acc);
            acc = phi1(acc);
        }
        deriv
    };
    Ok(CompleteBernsteinFunction::new(
        format!("iter-geo:{n}:{alpha}"),
        Arc::new(phi),
        Arc::new(phi_prime),
        None,
        None,
    ))
}

/// Log-spaced grid specification used by the inequality audits.
#[derive(Debug, Clone, Copy)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { lo: 1e-3, hi: 1e3, n: 400 }
    }
}

impl GridSpec {
    pub fn new(lo: f64, hi: f64, n: usize) -> Self {
        Self { lo, hi, n }
    }

    pub fn points(&self) -> Vec<f64> {
        log_grid(self.lo, self.hi, self.n)
    }
}

/// A grid point violating an inequality, with both sides of the bound.
#[derive(Debug, Clone)]
pub struct Witness {
    /// Grid coordinates of the violation (one entry per quantifier).
    pub coords: Vec<f64>,
    pub lhs: f64,
    pub rhs: f64,
}

/// Verdict of a grid-based inequality audit.
///
/// The verdict is grid-relative: `holds` means the inequality held at every
/// sampled point, `margin` is the minimum relative slack `(rhs - lhs)/rhs`
/// over the grid (clamped to 0 when within rounding of equality), and
/// `witness` is present exactly when `holds` is false.
#[derive(Debug, Clone)]
pub struct ScalingReport {
    pub holds: bool,
    pub witness: Option<Witness>,
    pub margin: f64,
}

const EQUALITY_SLACK: f64 = 1e-12;

fn audit<I: IntoIterator<Item = (Vec<f64>, f64, f64)>>(points: I) -> ScalingReport {
    let mut margin = f64::INFINITY;
    let mut witness = None;
    for (coords, lhs, rhs) in points {
        let slack = if rhs != 0.0 { (rhs - lhs) / rhs.abs() } else { rhs - lhs };
        let slack = if slack.abs() <= EQUALITY_SLACK { 0.0 } else { slack };
        if slack < margin {
            margin = slack;
            if slack < 0.0 {
                witness = Some(Witness { coords, lhs, rhs });
            }
        }
    }
    ScalingReport { holds: witness.is_none(), witness, margin }
}

/// Audits the completely monotone upper bound
/// `mu(t) <= (1 - 2/e)^{-1} t^{-2} phi'(1/t)` over the grid.
pub fn check_mu_upper_bound(
    f: &CompleteBernsteinFunction,
    t_grid: &[f64],
) -> Result<ScalingReport> {
    if t_grid.is_empty() || t_grid.iter().any(|&t| t <= 0.0) {
        return Err(LabError::Parameter("t grid must be nonempty and positive".into()));
    }
    let c = 1.0 / (1.0 - 2.0 * (-1.0f64).exp());
    let mut pts = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let lhs = f.mu(t)?;
        let rhs = c * t.powi(-2) * f.phi_prime(1.0 / t);
        pts.push((vec![t], lhs, rhs));
    }
    Ok(audit(pts))
}

/// Grid approximation of `sup_{t > t0} mu(t)/mu(t+delta)`.
///
/// The grid is extended by decades until the ratio is observed to decrease
/// over the last decade; if it keeps increasing the tail is declared
/// uncontrollable.
pub fn mu_ratio_sup(
    f: &CompleteBernsteinFunction,
    t0: f64,
    delta: f64,
    grid_size: usize,
) -> Result<f64> {
    if t0 <= 0.0 || delta < 0.0 {
        return Err(LabError::Parameter(format!(
            "mu_ratio_sup needs t0 > 0 and delta >= 0, got t0={t0}, delta={delta}"
        )));
    }
    if delta == 0.0 {
        return Ok(1.0);
    }
    let n = grid_size.max(16);
    let mut hi = t0 * 1e4;
    loop {
        let grid = log_grid(t0, hi, n);
        // Points where mu underflows to zero carry no information; drop them.
        let mut ratios = Vec::with_capacity(n);
        for &t in &grid {
            let denom = f.mu(t + delta)?;
            if denom > 0.0 {
                ratios.push(f.mu(t)? / denom);
            }
        }
        if ratios.is_empty() {
            return Err(LabError::Numeric(
                "mu_ratio_sup: Levy density underflows on the whole grid".into(),
            ));
        }
        let sup = ratios.iter().cloned().fold(1.0f64, f64::max);
        // Accept once the tail decade is monotone nonincreasing.
        let tail = &ratios[ratios.len() - n / 4..];
        let tail_decreasing = tail.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9));
        if tail_decreasing {
            return Ok(sup);
        }
        hi *= 1e2;
        if hi > t0 * 1e16 {
            return Err(LabError::Numeric(
                "mu_ratio_sup: ratio tail not controllable".into(),
            ));
        }
    }
}

/// Audits the derivative scaling condition
/// `phi'(lambda t)/phi'(lambda) <= sigma t^{-delta}` for `t >= 1`,
/// `lambda >= lambda0`, together with the matching lower bound
/// `>= sigma' t^{-delta'}` required in dimensions `d <= 2`.
#[allow(clippy::too_many_arguments)]
pub fn check_condition_h(
    f: &CompleteBernsteinFunction,
    d: u32,
    sigma: f64,
    delta: f64,
    lambda0: f64,
    sigma_p: Option<f64>,
    delta_p: Option<f64>,
    grid: GridSpec,
) -> Result<ScalingReport> {
    if sigma <= 0.0 || !(0.0 < delta && delta <= 1.0) || lambda0 <= 0.0 {
        return Err(LabError::Parameter(
            "condition H needs sigma > 0, delta in (0,1], lambda0 > 0".into(),
        ));
    }
    let lower = if d <= 2 {
        let (sp, dp) = match (sigma_p, delta_p) {
            (Some(sp), Some(dp)) => (sp, dp),
            _ => {
                return Err(LabError::Parameter(
                    "d <= 2 requires lower-scaling parameters sigma', delta'".into(),
                ))
            }
        };
        let d = d as f64;
        if d + 2.0 * delta - 2.0 <= 0.0 {
            return Err(LabError::Parameter(format!(
                "d <= 2 requires d + 2 delta - 2 > 0, got delta={delta}"
            )));
        }
        let window_hi = (1.0 + d / 2.0).min(2.0 * delta + (d - 2.0) / 2.0);
        if !(1.0 - d / 2.0 < dp && dp < window_hi) {
            return Err(LabError::Parameter(format!(
                "delta' = {dp} outside admissible window ({}, {window_hi})",
                1.0 - d / 2.0
            )));
        }
        Some((sp, dp))
    } else {
        None
    };

    let t_grid = log_grid(1.0, grid.hi.max(2.0), grid.n);
    let lam_grid = log_grid(lambda0, lambda0 * grid.hi.max(2.0), grid.n);
    let mut pts = Vec::with_capacity(2 * grid.n);
    for &lam in &lam_grid {
        let denom = f.phi_prime(lam);
        for &t in &t_grid {
            let ratio = f.phi_prime(lam * t) / denom;
            pts.push((vec![t, lam], ratio, sigma * t.powf(-delta)));
            if let Some((sp, dp)) = lower {
                pts.push((vec![t, lam], sp * t.powf(-dp), ratio));
            }
        }
    }
    Ok(audit(pts))
}

/// Audits the weak scaling condition
/// `a1 lambda^{d1} phi(t) <= phi(lambda t) <= a2 lambda^{d2} phi(t)`
/// on the grid `lambda >= 1`, `t >= 1`.
pub fn check_weak_scaling(
    f: &CompleteBernsteinFunction,
    a1: f64,
    a2: f64,
    d1: f64,
    d2: f64,
    grid: GridSpec,
) -> Result<ScalingReport> {
    if !(0.0 < d1 && d1 <= d2 && d2 < 1.0) || a1 <= 0.0 || a2 <= 0.0 {
        return Err(LabError::Parameter(
            "weak scaling needs 0 < d1 <= d2 < 1 and positive a1, a2".into(),
        ));
    }
    let pgrid = log_grid(1.0, grid.hi.max(2.0), grid.n);
    let mut pts = Vec::new();
    for &lam in &pgrid {
        for &t in &pgrid {
            let mid = f.phi(lam * t);
            pts.push((vec![lam, t], a1 * lam.powf(d1) * f.phi(t), mid));
            pts.push((vec![lam, t], mid, a2 * lam.powf(d2) * f.phi(t)));
        }
    }
    Ok(audit(pts))
}

/// Result of the exponential lower-bound estimate for `mu`.
#[derive(Debug, Clone, Copy)]
pub struct ExpLowerBound {
    pub c1: f64,
    pub c2: f64,
    pub holds: bool,
}

/// Estimates constants `c1, c2 > 0` with `mu(t) >= c1 e^{-c2 t}` on `[1, T]`
/// from the one-step ratio `c = inf mu(t+1)/mu(t)` and verifies the bound on
/// a grid.
///
/// Iterating the one-step bound from `t = 1` and using that a completely
/// monotone density is nonincreasing gives `mu(t) >= mu(1) c^t`, so
/// `c1 = mu(1)` and `c2 = -log c`.
pub fn check_mu_exponential_lower_bound(
    f: &CompleteBernsteinFunction,
    t_max: f64,
) -> Result<ExpLowerBound> {
    if t_max <= 2.0 {
        return Err(LabError::Parameter("t_max must exceed 2".into()));
    }
    let n = 512;
    let mut c = f64::INFINITY;
    for i in 0..n {
        let t = 1.0 + (t_max - 2.0) * i as f64 / (n - 1) as f64;
        let ratio = f.mu(t + 1.0)? / f.mu(t)?;
        c = c.min(ratio);
    }
    if !(c > 0.0) || !c.is_finite() {
        return Err(LabError::Numeric(format!(
            "degenerate one-step ratio c = {c}"
        )));
    }
    let c2 = -c.ln();
    let c1 = f.mu(1.0)?;
    let mut holds = true;
    for i in 0..n {
        let t = 1.0 + (t_max - 1.0) * i as f64 / (n - 1) as f64;
        if f.mu(t)? < c1 * (-c2 * t).exp() * (1.0 - 1e-9) {
            holds = false;
            break;
        }
    }
    Ok(ExpLowerBound { c1, c2, holds })
}

/// Laplace-transform consistency audit used by the CLI's bernstein-audit
/// experiment: relative error of `int (1-e^{-lambda t}) mu(t) dt` against
/// `phi(lambda)` at each requested `lambda`.
pub fn mu_consistency_errors(
    f: &CompleteBernsteinFunction,
    lambdas: &[f64],
) -> Result<Vec<(f64, f64)>> {
    lambdas
        .iter()
        .map(|&lam| {
            let lt = f.laplace_transform_of_mu(lam)?;
            Ok((lam, (lt - f.phi(lam)).abs() / f.phi(lam)))
        })
        .collect()
}

/// Default audit grid shared by tests and the CLI.
pub fn default_t_grid() -> Vec<f64> {
    GridSpec::default().points()
}
