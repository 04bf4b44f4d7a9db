//! Jump densities, free Green functions and characteristic exponents of the
//! implemented process models, together with computable forms of the
//! kernel-continuity and asymptotics lemmas.
//!
//! The Brownian motion being subordinated has transition density
//! `(4 pi t)^{-d/2} exp(-r^2/4t)`, so a subordinator with Laplace exponent
//! `phi` produces an isotropic process with characteristic exponent
//! `Psi(xi) = phi(|xi|^2)`; the stable subordinator `phi = lambda^{alpha/2}`
//! gives the isotropic alpha-stable process with `Psi(xi) = |xi|^alpha`.

use std::fmt;
use std::sync::Arc;

use statrs::function::gamma::gamma;

use crate::bernstein::CompleteBernsteinFunction;
use crate::error::{LabError, Result};
use crate::geometry::{dist, random_unit_vector, unit_grid};
use crate::quad::{integrate_log_halfline, integrate_log_interval, log_grid};
use crate::rng::stream;

/// Surface area of the unit sphere in `R^d`.
pub fn sphere_area(d: usize) -> f64 {
    let d = d as f64;
    2.0 * std::f64::consts::PI.powf(d / 2.0) / gamma(d / 2.0)
}

/// Jump-density constant: the isotropic alpha-stable Levy density is
/// `A(d, alpha) r^{-d-alpha}`.
pub fn stable_jump_constant(d: usize, alpha: f64) -> f64 {
    let df = d as f64;
    alpha * 2.0f64.powf(alpha - 1.0) * gamma((df + alpha) / 2.0)
        / (std::f64::consts::PI.powf(df / 2.0) * gamma(1.0 - alpha / 2.0))
}

/// Riesz-kernel constant: the free Green function for `d > alpha` is
/// `B(d, alpha) r^{alpha - d}`.
pub fn stable_green_constant(d: usize, alpha: f64) -> f64 {
    let df = d as f64;
    gamma((df - alpha) / 2.0)
        / (2.0f64.powf(alpha) * std::f64::consts::PI.powf(df / 2.0) * gamma(alpha / 2.0))
}

/// Closed-form isotropic alpha-stable jump density `A(d,alpha) r^{-d-alpha}`.
pub fn stable_jump_density(d: usize, alpha: f64, r: f64) -> f64 {
    stable_jump_constant(d, alpha) * r.powf(-(d as f64) - alpha)
}

/// Closed-form free Green function of the alpha-stable process, `d > alpha`.
pub fn stable_free_green(d: usize, alpha: f64, r: f64) -> f64 {
    stable_green_constant(d, alpha) * r.powf(alpha - d as f64)
}

/// Gaussian heat kernel `(4 pi t)^{-d/2} e^{-r^2/4t}` as a function of `t`.
fn heat_kernel(d: usize, t: f64, r: f64) -> f64 {
    (4.0 * std::f64::consts::PI * t).powf(-(d as f64) / 2.0) * (-r * r / (4.0 * t)).exp()
}

/// Jump density by Gaussian subordination:
/// `j(r) = int_0^inf (4 pi t)^{-d/2} e^{-r^2/4t} mu(t) dt`.
pub fn subordinate_jump_density(
    f: &CompleteBernsteinFunction,
    d: usize,
    r: f64,
) -> Result<f64> {
    if r <= 0.0 {
        return Err(LabError::Parameter("radius must be positive".into()));
    }
    let q = integrate_log_halfline(
        &|t: f64| heat_kernel(d, t, r) * f.mu(t).unwrap_or(f64::NAN),
        1e-300,
        1e-9,
    )?;
    Ok(q.value)
}

/// Free Green function by subordination of the potential density:
/// `g(r) = int_0^inf (4 pi t)^{-d/2} e^{-r^2/4t} u(t) dt`.
pub fn free_green_density(f: &CompleteBernsteinFunction, d: usize, r: f64) -> Result<f64> {
    if r <= 0.0 {
        return Err(LabError::Parameter("radius must be positive".into()));
    }
    if !f.has_potential_density() {
        return Err(LabError::UnsupportedModel(format!(
            "no potential density for {}",
            f.name()
        )));
    }
    let q = integrate_log_halfline(
        &|t: f64| heat_kernel(d, t, r) * f.potential_density(t).unwrap_or(f64::NAN),
        1e-300,
        1e-9,
    )?;
    Ok(q.value)
}

/// Fraction of the subordination integral carried by times below `eta`.
pub fn truncation_tail_fraction(
    f: &CompleteBernsteinFunction,
    d: usize,
    eta: f64,
    r: f64,
) -> Result<f64> {
    if eta <= 0.0 || r <= 0.0 {
        return Err(LabError::Parameter("eta and r must be positive".into()));
    }
    let integrand = |t: f64| heat_kernel(d, t, r) * f.mu(t).unwrap_or(f64::NAN);
    let whole = integrate_log_halfline(&integrand, 1e-300, 1e-9)?.value;
    let head = integrate_log_interval(&integrand, 0.0, eta, whole * 1e-11, 1e-9)?.value;
    Ok((head / whole).clamp(0.0, 1.0))
}

type SphereFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Model kind tag.
#[derive(Clone)]
pub enum ModelKind {
    Stable { alpha: f64 },
    SubordinateBm { f: CompleteBernsteinFunction },
    Anisotropic { base: Box<ProcessModel>, k: SphereFn, k_name: String },
}

/// An isotropic (or anisotropically weighted) purely discontinuous model.
#[derive(Clone)]
pub struct ProcessModel {
    d: usize,
    kind: ModelKind,
    id: String,
}

impl fmt::Debug for ProcessModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ProcessModel({})", self.id)
    }
}

impl ProcessModel {
    pub fn stable(d: usize, alpha: f64) -> Result<Self> {
        if !(0.0 < alpha && alpha < 2.0) {
            return Err(LabError::Parameter(format!(
                "stable model needs alpha in (0,2), got {alpha}"
            )));
        }
        Ok(Self {
            d,
            kind: ModelKind::Stable { alpha },
            id: format!("stable:d={d}:alpha={alpha}"),
        })
    }

    pub fn subordinate_bm(d: usize, f: CompleteBernsteinFunction) -> Self {
        let id = format!("sbm:d={d}:{}", f.name());
        Self { d, kind: ModelKind::SubordinateBm { f }, id }
    }

    /// Anisotropic modification `j(x, y) = k((y-x)/|y-x|) j_base(|y-x|)`.
    /// `k` must be continuous and bounded between positive constants;
    /// boundedness is validated by probing the sphere.
    pub fn anisotropic(base: ProcessModel, k: SphereFn, k_name: &str) -> Result<Self> {
        if matches!(base.kind, ModelKind::Anisotropic { .. }) {
            return Err(LabError::Parameter("cannot nest anisotropic models".into()));
        }
        let d = base.d;
        let mut rng = stream(0xA150, 0);
        let mut lo = f64::INFINITY;
        for _ in 0..4096 {
            let u = random_unit_vector(&mut rng, d);
            let v = k(&u);
            if !v.is_finite() {
                return Err(LabError::Parameter("k must be finite on the sphere".into()));
            }
            lo = lo.min(v);
        }
        if lo <= 0.0 {
            return Err(LabError::Parameter("k must be positive on the sphere".into()));
        }
        let id = format!("aniso:{}:k={k_name}", base.id);
        Ok(Self {
            d,
            kind: ModelKind::Anisotropic { base: Box::new(base), k, k_name: k_name.into() },
            id,
        })
    }

    /// Parses a model id: `stable:d=2:alpha=1.0`, `sbm:d=3:gamma`,
    /// `sbm:d=3:geo:1.0`, `aniso:stable:d=2:alpha=1.0:k=cosine`.
    pub fn from_id(id: &str) -> Result<Self> {
        let bad = |msg: &str| LabError::Parameter(format!("model id {id:?}: {msg}"));
        if let Some(rest) = id.strip_prefix("aniso:") {
            let (base_id, k_name) = rest
                .rsplit_once(":k=")
                .ok_or_else(|| bad("anisotropic id needs a :k= suffix"))?;
            let base = Self::from_id(base_id)?;
            let k = builtin_sphere_fn(k_name)
                .ok_or_else(|| bad(&format!("unknown k {k_name:?}")))?;
            return Self::anisotropic(base, k, k_name);
        }
        let parse_d = |tok: &str| -> Result<usize> {
            tok.strip_prefix("d=")
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| bad("expected d=<dim>"))
        };
        if let Some(rest) = id.strip_prefix("stable:") {
            let (dtok, atok) = rest
                .split_once(':')
                .ok_or_else(|| bad("expected stable:d=<dim>:alpha=<a>"))?;
            let alpha: f64 = atok
                .strip_prefix("alpha=")
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| bad("expected alpha=<a>"))?;
            return Self::stable(parse_d(dtok)?, alpha);
        }
        if let Some(rest) = id.strip_prefix("sbm:") {
            let (dtok, sub) = rest
                .split_once(':')
                .ok_or_else(|| bad("expected sbm:d=<dim>:<subordinator>"))?;
            let f = CompleteBernsteinFunction::from_id(sub)?;
            return Ok(Self::subordinate_bm(parse_d(dtok)?, f));
        }
        Err(bad("unknown model kind"))
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    /// Stability index if this is (an anisotropic modification of) a stable
    /// model.
    pub fn alpha(&self) -> Option<f64> {
        match &self.kind {
            ModelKind::Stable { alpha } => Some(*alpha),
            ModelKind::Anisotropic { base, .. } => base.alpha(),
            ModelKind::SubordinateBm { .. } => None,
        }
    }

    /// Radial profile of the Levy density.
    pub fn j_radial(&self, r: f64) -> Result<f64> {
        match &self.kind {
            ModelKind::Stable { alpha } => Ok(stable_jump_density(self.d, *alpha, r)),
            ModelKind::SubordinateBm { f } => subordinate_jump_density(f, self.d, r),
            ModelKind::Anisotropic { base, .. } => base.j_radial(r),
        }
    }

    /// Levy density `j(x, y)`.
    pub fn j(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let r = dist(x, y);
        match &self.kind {
            ModelKind::Anisotropic { base, k, .. } => {
                let u: Vec<f64> = x.iter().zip(y).map(|(a, b)| (b - a) / r).collect();
                Ok(k(&u) * base.j_radial(r)?)
            }
            _ => self.j_radial(r),
        }
    }

    /// Free Green function radial profile (transient models only).
    pub fn g_radial(&self, r: f64) -> Result<f64> {
        match &self.kind {
            ModelKind::Stable { alpha } => {
                if self.d as f64 > *alpha {
                    Ok(stable_free_green(self.d, *alpha, r))
                } else {
                    Err(LabError::UnsupportedModel(format!(
                        "free Green function needs d > alpha, got d={}, alpha={alpha}",
                        self.d
                    )))
                }
            }
            ModelKind::SubordinateBm { f } => free_green_density(f, self.d, r),
            ModelKind::Anisotropic { .. } => Err(LabError::UnsupportedModel(
                "free Green function unavailable for anisotropic models".into(),
            )),
        }
    }

    /// Radial characteristic exponent `Psi_0(|xi|)`.
    pub fn psi0(&self, r: f64) -> f64 {
        match &self.kind {
            ModelKind::Stable { alpha } => r.powf(*alpha),
            ModelKind::SubordinateBm { f } => f.phi(r * r),
            ModelKind::Anisotropic { base, .. } => base.psi0(r),
        }
    }
}

/// Built-in sphere weights for anisotropic models.
pub fn builtin_sphere_fn(name: &str) -> Option<SphereFn> {
    match name {
        // 2 + cosine of the polar angle from the first axis.
        "cosine" => Some(Arc::new(|u: &[f64]| 2.0 + u[0])),
        _ => None,
    }
}

/// Radial evaluator backed by a log-log interpolation table, so kernel
/// sweeps do not pay one quadrature per pair. Exact for power laws.
pub struct RadialCache {
    table: crate::quad::LogLogInterp,
}

impl RadialCache {
    pub fn build(model: &ProcessModel, r_min: f64, r_max: f64, n: usize) -> Result<Self> {
        // Surface model-level errors (bad parameters, unsupported kinds)
        // before tabulating; table-level failures become numeric errors.
        model.j_radial(r_min)?;
        let table = crate::quad::LogLogInterp::build(
            |r| model.j_radial(r).unwrap_or(f64::NAN),
            r_min,
            r_max,
            n,
        )?;
        Ok(Self { table })
    }

    pub fn eval(&self, r: f64) -> f64 {
        self.table.eval(r)
    }
}

/// Cached `j(x, y)` evaluator valid for pair distances within the cached
/// radial range (extrapolated smoothly outside it).
struct KernelEval<'a> {
    cache: RadialCache,
    k: Option<&'a SphereFn>,
}

impl<'a> KernelEval<'a> {
    fn build(model: &'a ProcessModel, r_min: f64, r_max: f64) -> Result<Self> {
        let k = match &model.kind {
            ModelKind::Anisotropic { k, .. } => Some(k),
            _ => None,
        };
        Ok(Self { cache: RadialCache::build(model, r_min, r_max, 2048)?, k })
    }

    fn j(&self, x: &[f64], y: &[f64]) -> f64 {
        let r = dist(x, y);
        let base = self.cache.eval(r);
        match self.k {
            Some(k) => {
                let u: Vec<f64> = x.iter().zip(y).map(|(a, b)| (b - a) / r).collect();
                k(&u) * base
            }
            None => base,
        }
    }
}

/// Grid supremum of `j(r)/j(r + delta)` over `r > r0`, with the tail
/// accepted once the ratio decreases over the last decade.
pub fn j_ratio_sup(model: &ProcessModel, r0: f64, delta: f64) -> Result<f64> {
    if !(0.0 < r0 && r0 < 1.0) || delta < 0.0 {
        return Err(LabError::Parameter(
            "j_ratio_sup needs r0 in (0,1) and delta >= 0".into(),
        ));
    }
    if delta == 0.0 {
        return Ok(1.0);
    }
    let n = 400;
    let mut hi = r0 * 1e4;
    loop {
        let cache = RadialCache::build(model, r0 * 0.5, hi + delta, 2048)?;
        let grid = log_grid(r0, hi, n);
        let ratios: Vec<f64> = grid.iter().map(|&r| cache.eval(r) / cache.eval(r + delta)).collect();
        let sup = ratios.iter().cloned().fold(1.0f64, f64::max);
        let tail = &ratios[ratios.len() - n / 4..];
        if tail.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9)) {
            return Ok(sup);
        }
        hi *= 1e2;
        if hi > r0 * 1e12 {
            return Err(LabError::Numeric("j_ratio_sup: tail not controllable".into()));
        }
    }
}

/// Probe-grid sizes for the universal quantifiers in the kernel-continuity
/// searches.
#[derive(Debug, Clone, Copy)]
pub struct ProbeGrid {
    pub n_radial: usize,
    pub n_angular: usize,
    pub n_random: usize,
}

impl Default for ProbeGrid {
    fn default() -> Self {
        Self { n_radial: 32, n_angular: 64, n_random: 10_000 }
    }
}

impl ProbeGrid {
    pub fn denser(&self, factor: usize) -> Self {
        Self {
            n_radial: self.n_radial * factor,
            n_angular: self.n_angular * factor,
            n_random: self.n_random * factor,
        }
    }
}

fn add_scaled(z0: &[f64], dir: &[f64], r: f64) -> Vec<f64> {
    z0.iter().zip(dir).map(|(a, b)| a + b * r).collect()
}

/// Points on radius x direction product grids around `z0`, radii given by
/// `radii`, plus `n_random` random points with log-uniform radii in the
/// same range.
fn probe_points(
    z0: &[f64],
    radii: &[f64],
    grid: &ProbeGrid,
    seed: u64,
    stream_id: u64,
) -> Vec<Vec<f64>> {
    let d = z0.len();
    let dirs = unit_grid(d, grid.n_angular);
    let mut pts = Vec::with_capacity(radii.len() * dirs.len() + grid.n_random);
    for &r in radii {
        for dir in &dirs {
            pts.push(add_scaled(z0, dir, r));
        }
    }
    let (lo, hi) = (radii[0], radii[radii.len() - 1]);
    let mut rng = stream(seed, stream_id);
    for _ in 0..grid.n_random {
        let u: f64 = rand::Rng::gen(&mut rng);
        let r = lo * (hi / lo).powf(u);
        let dir = random_unit_vector(&mut rng, d);
        pts.push(add_scaled(z0, &dir, r));
    }
    pts
}

fn linear_radii(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

fn ratios_within(
    eval: &KernelEval<'_>,
    zs: &[Vec<f64>],
    ys: &[Vec<f64>],
    denom_at: impl Fn(&KernelEval<'_>, &[f64], &[f64]) -> f64,
    eps: f64,
) -> bool {
    let lo = 1.0 / (1.0 + eps);
    let hi = 1.0 + eps;
    zs.iter().all(|z| {
        ys.iter().all(|y| {
            let r = eval.j(z, y) / denom_at(eval, z, y);
            r > lo && r < hi
        })
    })
}

/// Largest `p < q/16` on a halving grid such that
/// `(1+eps)^{-1} < j(z,y)/j(z0,y) < 1+eps` for probed `z` in `B(z0, 8pr)`
/// and `y` outside `B(z0, qr)`.
pub fn find_p_for_e1(
    model: &ProcessModel,
    z0: &[f64],
    eps: f64,
    q: f64,
    r: f64,
    grid: &ProbeGrid,
    seed: u64,
) -> Result<f64> {
    if eps <= 0.0 || !(0.0 < q && q <= 0.5) || r <= 0.0 {
        return Err(LabError::Parameter(
            "find_p_for_e1 needs eps > 0, q in (0, 1/2], r > 0".into(),
        ));
    }
    // y ranges over an expanding shell; the ratio tends to 1 far away.
    let y_radii = log_grid(q * r, q * r * 1e3, grid.n_radial);
    let ys = probe_points(z0, &y_radii, grid, seed, 1);
    let eval = KernelEval::build(model, q * r * 1e-3, q * r * 1e3 * 2.0)?;
    for k in 1..=24 {
        let p = q / 16.0 * 0.5f64.powi(k);
        let z_radii = linear_radii(8.0 * p * r / grid.n_radial as f64, 8.0 * p * r, grid.n_radial);
        let zs = probe_points(z0, &z_radii, grid, seed, 2);
        let z0v = z0.to_vec();
        if ratios_within(&eval, &zs, &ys, |e, _, y| e.j(&z0v, y), eps) {
            return Ok(p);
        }
    }
    Err(LabError::SearchFailure(format!(
        "no p < q/16 satisfied the two-sided kernel bound for {}",
        model.id
    )))
}

/// Smallest `p > 16q` on a doubling grid such that
/// `(1+eps)^{-1} < j(z,y)/j(z,z0) < 1+eps` for probed `z` outside
/// `B(z0, pr/8)` and `y` inside `B(z0, qr)`.
pub fn find_p_for_e2(
    model: &ProcessModel,
    z0: &[f64],
    eps: f64,
    q: f64,
    r: f64,
    grid: &ProbeGrid,
    seed: u64,
) -> Result<f64> {
    if eps <= 0.0 || q < 2.0 || r <= 0.0 {
        return Err(LabError::Parameter(
            "find_p_for_e2 needs eps > 0, q >= 2, r > 0".into(),
        ));
    }
    let y_radii = linear_radii(q * r / grid.n_radial as f64, q * r, grid.n_radial);
    let ys = probe_points(z0, &y_radii, grid, seed, 3);
    for k in 1..=24 {
        let p = 16.0 * q * 2.0f64.powi(k);
        let z_radii = log_grid(p * r / 8.0, p * r / 8.0 * 1e3, grid.n_radial);
        let zs = probe_points(z0, &z_radii, grid, seed, 4);
        let eval =
            KernelEval::build(model, (p * r / 8.0 - q * r).max(1e-6), p * r / 8.0 * 1e3 + q * r)?;
        let z0v = z0.to_vec();
        if ratios_within(&eval, &zs, &ys, |e, z, _| e.j(z, &z0v), eps) {
            return Ok(p);
        }
    }
    Err(LabError::SearchFailure(format!(
        "no p > 16q satisfied the two-sided kernel bound for {}",
        model.id
    )))
}

/// Verifies the two-sided bound from [`find_p_for_e1`] for a given `p`
/// on a (typically denser) grid.
pub fn verify_e1(
    model: &ProcessModel,
    z0: &[f64],
    eps: f64,
    q: f64,
    r: f64,
    p: f64,
    grid: &ProbeGrid,
    seed: u64,
) -> Result<bool> {
    let y_radii = log_grid(q * r, q * r * 1e3, grid.n_radial);
    let ys = probe_points(z0, &y_radii, grid, seed, 5);
    let z_radii = linear_radii(8.0 * p * r / grid.n_radial as f64, 8.0 * p * r, grid.n_radial);
    let zs = probe_points(z0, &z_radii, grid, seed, 6);
    let eval = KernelEval::build(model, q * r * 1e-3, q * r * 1e3 * 2.0)?;
    let z0v = z0.to_vec();
    Ok(ratios_within(&eval, &zs, &ys, |e, _, y| e.j(&z0v, y), eps))
}

/// Verifies the two-sided bound from [`find_p_for_e2`] for a given `p`.
pub fn verify_e2(
    model: &ProcessModel,
    z0: &[f64],
    eps: f64,
    q: f64,
    r: f64,
    p: f64,
    grid: &ProbeGrid,
    seed: u64,
) -> Result<bool> {
    let y_radii = linear_radii(q * r / grid.n_radial as f64, q * r, grid.n_radial);
    let ys = probe_points(z0, &y_radii, grid, seed, 7);
    let z_radii = log_grid(p * r / 8.0, p * r / 8.0 * 1e3, grid.n_radial);
    let zs = probe_points(z0, &z_radii, grid, seed, 8);
    let eval =
        KernelEval::build(model, (p * r / 8.0 - q * r).max(1e-6), p * r / 8.0 * 1e3 + q * r)?;
    let z0v = z0.to_vec();
    Ok(ratios_within(&eval, &zs, &ys, |e, z, _| e.j(z, &z0v), eps))
}

/// Ratio sequence `j(r) r^d / Psi_0(1/r)` over a radius grid and whether
/// its tail stabilizes.
#[derive(Debug, Clone)]
pub struct JAsymptoticsReport {
    pub ratios: Vec<(f64, f64)>,
    pub stabilizes: bool,
    pub tol: f64,
}

/// Checks the large-`r` asymptotic shape of the jump density against the
/// characteristic exponent: the ratio sequence should stabilize (the
/// limiting constant is model-dependent and not asserted).
pub fn check_j_asymptotics(
    model: &ProcessModel,
    r_grid: &[f64],
    tol: f64,
) -> Result<JAsymptoticsReport> {
    if r_grid.len() < 4 || r_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(LabError::Parameter(
            "r grid must be increasing with at least 4 entries".into(),
        ));
    }
    let d = model.dim() as f64;
    let mut ratios = Vec::with_capacity(r_grid.len());
    for &r in r_grid {
        let ratio = model.j_radial(r)? * r.powf(d) / model.psi0(1.0 / r);
        ratios.push((r, ratio));
    }
    let tail: Vec<f64> = ratios.iter().rev().take(3).map(|&(_, v)| v).collect();
    let (lo, hi) = (
        tail.iter().cloned().fold(f64::INFINITY, f64::min),
        tail.iter().cloned().fold(0.0f64, f64::max),
    );
    let stabilizes = tail.iter().all(|&v| v > 0.0) && (hi - lo) / hi.abs() < tol;
    Ok(JAsymptoticsReport { ratios, stabilizes, tol })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bernstein::{
        make_gamma_subordinator, make_geometric_stable_subordinator, make_stable_subordinator,
    };

    const PI: f64 = std::f64::consts::PI;

    #[test]
    fn cauchy_jump_density() {
        // d=1, alpha=1: the Cauchy process has j(r) = 1/(pi r^2).
        assert!((stable_jump_density(1, 1.0, 1.0) - 1.0 / PI).abs() < 1e-14);
        let f = make_stable_subordinator(0.5).unwrap();
        for r in [0.5, 1.0, 2.0] {
            let got = subordinate_jump_density(&f, 1, r).unwrap();
            let want = 1.0 / (PI * r * r);
            assert!((got - want).abs() / want < 1e-8, "r={r}: {got} vs {want}");
        }
    }

    #[test]
    fn closed_form_matches_subordination() {
        for &d in &[1usize, 2, 3] {
            for &alpha in &[0.5, 1.0, 1.5] {
                let f = make_stable_subordinator(alpha / 2.0).unwrap();
                for &r in &[0.1, 1.0, 10.0] {
                    let got = stable_jump_density(d, alpha, r);
                    let want = subordinate_jump_density(&f, d, r).unwrap();
                    assert!(
                        (got - want).abs() / want < 1e-8,
                        "d={d} alpha={alpha} r={r}: {got} vs {want}"
                    );
                }
            }
        }
    }

    #[test]
    fn newtonian_green_sanity() {
        // With u == 1 the subordination integral is the Newtonian kernel.
        let unit_u = CompleteBernsteinFunction::new(
            "unit-potential",
            std::sync::Arc::new(|l: f64| l),
            std::sync::Arc::new(|_| 1.0),
            None,
            Some(std::sync::Arc::new(|_| 1.0)),
        );
        let got = free_green_density(&unit_u, 3, 1.0).unwrap();
        assert!((got - 1.0 / (4.0 * PI)).abs() < 1e-9, "{got}");
    }

    #[test]
    fn stable_green_scaling_and_value() {
        // d=3, alpha=1: g(r) = 1/(2 pi^2 r^2).
        let got = stable_free_green(3, 1.0, 1.0);
        assert!((got - 1.0 / (2.0 * PI * PI)).abs() < 1e-14, "{got}");
        let f = make_stable_subordinator(0.5).unwrap();
        for r in [1.0, 2.0] {
            let q = free_green_density(&f, 3, r).unwrap();
            let c = stable_free_green(3, 1.0, r);
            assert!((q - c).abs() / c < 1e-8, "r={r}: {q} vs {c}");
        }
        let g1 = free_green_density(&f, 3, 1.0).unwrap();
        let g2 = free_green_density(&f, 3, 2.0).unwrap();
        assert!((g2 / g1 - 0.25).abs() < 1e-8);
    }

    #[test]
    fn green_requires_potential_density() {
        let geo = make_geometric_stable_subordinator(1.0).unwrap();
        assert!(matches!(
            free_green_density(&geo, 3, 1.0),
            Err(LabError::UnsupportedModel(_))
        ));
    }

    #[test]
    fn green_asymptotics_bounded() {
        // g(r) r^d Psi0(1/r) should stay within constant bounds at large r.
        let model = ProcessModel::stable(3, 1.0).unwrap();
        let mut vals = Vec::new();
        for &r in &[10.0, 100.0, 1000.0] {
            vals.push(model.g_radial(r).unwrap() * r.powi(3) * model.psi0(1.0 / r));
        }
        let (lo, hi) = (vals[0].min(vals[2]), vals[0].max(vals[2]));
        assert!(lo > 0.0 && hi < f64::INFINITY);
        assert!((vals[1] - vals[0]).abs() / vals[0] < 1e-12);
    }

    #[test]
    fn jump_density_decreasing() {
        let gamma_model = ProcessModel::subordinate_bm(2, make_gamma_subordinator());
        let grid = log_grid(0.1, 10.0, 32);
        let mut prev = f64::INFINITY;
        for &r in &grid {
            let v = gamma_model.j_radial(r).unwrap();
            assert!(v < prev, "not decreasing at r={r}");
            prev = v;
        }
    }

    #[test]
    fn truncation_fraction_vanishes_with_eta() {
        let f = make_stable_subordinator(0.5).unwrap();
        let mut sups = Vec::new();
        for &eta in &[0.1, 0.01, 0.001] {
            let mut sup = 0.0f64;
            for &r in &log_grid(0.5, 50.0, 24) {
                sup = sup.max(truncation_tail_fraction(&f, 3, eta, r).unwrap());
            }
            sups.push(sup);
        }
        assert!(sups[0] > sups[1] && sups[1] > sups[2], "{sups:?}");
        assert!(sups[2] < 0.05, "{sups:?}");
        // Whole-integral surrogate.
        let one = truncation_tail_fraction(&f, 3, 1e20, 1.0).unwrap();
        assert!((one - 1.0).abs() < 1e-8);
    }

    #[test]
    fn truncation_proof_bound() {
        // Head mass below eta is at most c r^2 e^{-r^2/(16 eta)} against
        // j(r); with r = 3, eta = 0.1 the bound is astronomically small.
        let f = make_stable_subordinator(0.5).unwrap();
        let frac = truncation_tail_fraction(&f, 3, 0.1, 3.0).unwrap();
        let j = stable_jump_density(3, 1.0, 3.0);
        let bound = 9.0 * (-9.0 / 1.6f64).exp() / j;
        assert!(frac <= bound, "frac {frac} vs bound {bound}");
    }

    #[test]
    fn j_ratio_sup_stable_analytic() {
        let model = ProcessModel::stable(2, 1.0).unwrap();
        let (r0, delta) = (0.5, 0.25);
        let got = j_ratio_sup(&model, r0, delta).unwrap();
        let want = ((r0 + delta) / r0).powi(3);
        assert!((got - want).abs() / want < 1e-3, "{got} vs {want}");
        let seq: Vec<f64> = [0.2, 0.02, 0.002]
            .iter()
            .map(|&d| j_ratio_sup(&model, 0.5, d).unwrap())
            .collect();
        assert!(seq[0] > seq[1] && seq[1] > seq[2] && seq[2] >= 1.0 && seq[2] < 1.05);
        assert_eq!(j_ratio_sup(&model, 0.5, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn levy_measure_integrability() {
        // int (1 ^ |x|^2) j(|x|) dx over R^d, radially.
        for (model, r_max) in [
            (ProcessModel::stable(2, 1.0).unwrap(), 1e4),
            (ProcessModel::stable(3, 1.5).unwrap(), 1e4),
            // The variance-gamma kernel underflows past r ~ 700.
            (ProcessModel::subordinate_bm(2, make_gamma_subordinator()), 50.0),
        ] {
            let d = model.dim();
            let cache = RadialCache::build(&model, 1e-6, r_max, 2048).unwrap();
            let q = integrate_log_halfline(
                &|r: f64| {
                    if !(1e-6..=r_max).contains(&r) {
                        return 0.0;
                    }
                    r.powi(2).min(1.0) * cache.eval(r) * r.powf(d as f64 - 1.0)
                },
                1e-10,
                1e-8,
            )
            .unwrap();
            let total = q.value * sphere_area(d);
            assert!(total.is_finite() && total > 0.0, "{}: {total}", model.id());
        }
    }

    #[test]
    fn model_id_round_trip() {
        for id in [
            "stable:d=2:alpha=1.0",
            "sbm:d=3:gamma",
            "sbm:d=3:geo:1.0",
            "aniso:stable:d=2:alpha=1.0:k=cosine",
        ] {
            let m = ProcessModel::from_id(id).unwrap();
            assert_eq!(m.dim(), if id.contains("d=2") { 2 } else { 3 });
            assert!(m.j(&vec![0.0; m.dim()], &vec![1.0; m.dim()]).unwrap() > 0.0);
        }
        assert!(ProcessModel::from_id("stable:d=2:alpha=2.5").is_err());
        assert!(ProcessModel::from_id("weird:d=2").is_err());
    }

    #[test]
    fn anisotropic_kernel_shape() {
        let m = ProcessModel::from_id("aniso:stable:d=2:alpha=1.0:k=cosine").unwrap();
        let z = [0.0, 0.0];
        // k = 2 + u[0]: forward jumps three times as likely as backward.
        let fwd = m.j(&z, &[1.0, 0.0]).unwrap();
        let bwd = m.j(&z, &[-1.0, 0.0]).unwrap();
        assert!((fwd / bwd - 3.0).abs() < 1e-12);
        // Far-field isotropy ratio: j(z, z0)/j(z, y) -> 1 as |z| grows.
        let y = [0.3, -0.2];
        let mut prev_spread = f64::INFINITY;
        for &rz in &[10.0, 100.0, 1000.0] {
            let mut lo = f64::INFINITY;
            let mut hi = 0.0f64;
            for dir in unit_grid(2, 64) {
                let zz = [dir[0] * rz, dir[1] * rz];
                let ratio = m.j(&zz, &z).unwrap() / m.j(&zz, &y).unwrap();
                lo = lo.min(ratio);
                hi = hi.max(ratio);
            }
            let spread = hi - lo;
            assert!(spread < prev_spread);
            prev_spread = spread;
            if rz == 1000.0 {
                assert!(lo > 0.99 && hi < 1.01, "[{lo}, {hi}]");
            }
        }
    }

    #[test]
    fn radial_cache_accuracy() {
        let model = ProcessModel::subordinate_bm(2, make_gamma_subordinator());
        let cache = RadialCache::build(&model, 0.05, 20.0, 512).unwrap();
        for &r in &[0.07, 0.5, 1.7, 9.0] {
            let exact = model.j_radial(r).unwrap();
            assert!((cache.eval(r) - exact).abs() / exact < 1e-4, "r={r}");
        }
    }

    #[test]
    fn e1_search_and_verification() {
        let model = ProcessModel::stable(2, 1.0).unwrap();
        let grid = ProbeGrid { n_radial: 12, n_angular: 24, n_random: 2000 };
        let z0 = [0.0, 0.0];
        let p = find_p_for_e1(&model, &z0, 0.5, 0.5, 1.0, &grid, 99).unwrap();
        assert!(p > 0.0 && p < 0.5 / 16.0);
        assert!(verify_e1(&model, &z0, 0.5, 0.5, 1.0, p, &grid.denser(2), 123).unwrap());
        // Monotone in eps.
        let p_small = find_p_for_e1(&model, &z0, 0.1, 0.5, 1.0, &grid, 99).unwrap();
        assert!(p_small <= p);
    }

    #[test]
    fn e1_anisotropic() {
        let model = ProcessModel::from_id("aniso:stable:d=2:alpha=1.0:k=cosine").unwrap();
        let grid = ProbeGrid { n_radial: 10, n_angular: 20, n_random: 1000 };
        let p = find_p_for_e1(&model, &[0.0, 0.0], 0.5, 0.5, 1.0, &grid, 7).unwrap();
        assert!(p > 0.0);
    }

    #[test]
    fn e2_search_and_verification() {
        let model = ProcessModel::stable(2, 1.0).unwrap();
        let grid = ProbeGrid { n_radial: 12, n_angular: 24, n_random: 2000 };
        let z0 = [0.0, 0.0];
        let p = find_p_for_e2(&model, &z0, 0.5, 2.0, 1.0, &grid, 99).unwrap();
        assert!(p > 32.0);
        assert!(verify_e2(&model, &z0, 0.5, 2.0, 1.0, p, &grid.denser(2), 123).unwrap());
        let p_small = find_p_for_e2(&model, &z0, 0.1, 2.0, 1.0, &grid, 99).unwrap();
        assert!(p_small >= p);
    }

    #[test]
    fn e2_subordinate_bm() {
        // Needs power-law jump tails; geometric stable has them, while the
        // variance-gamma kernel decays exponentially and can never satisfy
        // the far-field bound.
        let geo = make_geometric_stable_subordinator(1.0).unwrap();
        let model = ProcessModel::subordinate_bm(3, geo);
        let grid = ProbeGrid { n_radial: 8, n_angular: 16, n_random: 500 };
        let p = find_p_for_e2(&model, &[0.0; 3], 0.5, 2.0, 1.0, &grid, 5).unwrap();
        assert!(p > 32.0);
    }

    #[test]
    fn j_asymptotics_stable_constant() {
        let model = ProcessModel::stable(3, 1.0).unwrap();
        let grid = log_grid(1.0, 1e3, 8);
        let rep = check_j_asymptotics(&model, &grid, 1e-6).unwrap();
        assert!(rep.stabilizes);
        let a = stable_jump_constant(3, 1.0);
        for &(_, v) in &rep.ratios {
            assert!((v - a).abs() / a < 1e-10);
        }
    }

    #[test]
    fn j_asymptotics_geometric_stable() {
        let geo = make_geometric_stable_subordinator(1.0).unwrap();
        let model = ProcessModel::subordinate_bm(3, geo);
        let grid = log_grid(1.0, 2e3, 8);
        let rep = check_j_asymptotics(&model, &grid, 0.05).unwrap();
        for &(r, v) in &rep.ratios {
            assert!(v > 0.0, "nonpositive ratio at r={r}");
        }
        assert!(rep.stabilizes, "{:?}", rep.ratios);
    }
}
