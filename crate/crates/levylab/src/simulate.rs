//! Exact exit-law simulation for isotropic stable processes.
//!
//! The sampler composes exits from maximal inscribed balls (sphere
//! stepping): the exit position of the alpha-stable process from a ball is
//! drawn exactly from the classical ball Poisson kernel, and the mean ball
//! exit time has a closed form, so walks carry an unbiased exit-time weight
//! without ever discretizing paths. A brute-force subordinated-Brownian
//! path simulator is provided as an independent oracle.
//!
//! Exactness of the ball sampler rests on the radial-angular factorization
//! of the kernel on the unit ball: for a start at distance `rho` from the
//! center, the exit radius `s` has density proportional to
//! `s (s^2-1)^{-alpha/2} / (s^2 - rho^2)` in every dimension d = 1, 2, 3,
//! and substituting `w = (s^2-1)/(s^2-rho^2)` turns that into
//! `Beta(1 - alpha/2, alpha/2)`. Conditionally on `s` the direction has
//! density proportional to `|x - s theta|^{-d}` on the sphere, which is a
//! two-point law (d=1), a wrapped Cauchy (d=2), or has an elementary
//! inverse CDF in the cosine (d=3).

use rand::Rng;
use rand_distr::{Beta, Distribution, Exp1, StandardNormal};
use statrs::function::gamma::gamma;

use crate::error::{LabError, Result};
use crate::geometry::{dist, norm, random_unit_vector, Domain};
use crate::kernels::{ModelKind, ProcessModel};
use crate::rng::{Stream, PAR_CHUNKS};
use crate::stats::{chunk_len, mc_estimate, parallel_reduce, Estimate, StreamingMoments};

const PI: f64 = std::f64::consts::PI;

/// Poisson-kernel constant `C(d, alpha)` of the unit ball.
pub fn ball_poisson_constant(d: usize, alpha: f64) -> f64 {
    gamma(d as f64 / 2.0) * PI.powf(-(d as f64) / 2.0 - 1.0) * (PI * alpha / 2.0).sin()
}

/// Poisson kernel of the unit ball: density at `z` (|z| > 1) of the exit
/// position started from `x` (|x| < 1).
pub fn ball_poisson_kernel(d: usize, alpha: f64, x: &[f64], z: &[f64]) -> Result<f64> {
    let (rx, rz) = (norm(x), norm(z));
    if rx >= 1.0 || rz <= 1.0 {
        return Err(LabError::Parameter(
            "ball Poisson kernel needs |x| < 1 < |z|".into(),
        ));
    }
    Ok(ball_poisson_constant(d, alpha)
        * ((1.0 - rx * rx) / (rz * rz - 1.0)).powf(alpha / 2.0)
        * dist(x, z).powf(-(d as f64)))
}

/// Mean exit time of the alpha-stable process from the unit ball:
/// `E_x tau = C_T(d, alpha) (1 - |x|^2)^{alpha/2}`.
pub fn ball_mean_exit_constant(d: usize, alpha: f64) -> f64 {
    let df = d as f64;
    gamma(df / 2.0)
        / (2.0f64.powf(alpha) * gamma(1.0 + alpha / 2.0) * gamma((df + alpha) / 2.0))
}

/// Mean exit time from `B(0, r)` started at distance `rho` from the center.
pub fn ball_mean_exit_time(d: usize, alpha: f64, r: f64, rho: f64) -> f64 {
    ball_mean_exit_constant(d, alpha) * r.powf(alpha) * (1.0 - (rho / r).powi(2)).powf(alpha / 2.0)
}

fn orthonormal_complement(u: &[f64]) -> Vec<Vec<f64>> {
    // Gram-Schmidt of the coordinate basis against u.
    let d = u.len();
    let mut basis: Vec<Vec<f64>> = vec![u.to_vec()];
    for i in 0..d {
        let mut v = vec![0.0; d];
        v[i] = 1.0;
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(a, c)| a * c).sum();
            for (vj, bj) in v.iter_mut().zip(b) {
                *vj -= dot * bj;
            }
        }
        let n = norm(&v);
        if n > 1e-8 {
            basis.push(v.iter().map(|x| x / n).collect());
        }
        if basis.len() == d {
            break;
        }
    }
    basis.remove(0);
    basis
}

/// Exact exit position of the alpha-stable process from the unit ball,
/// started at `x_rel` with `|x_rel| < 1`. The returned point has norm > 1.
pub fn ball_exit_sample(
    alpha: f64,
    d: usize,
    x_rel: &[f64],
    rng: &mut Stream,
) -> Result<Vec<f64>> {
    if !(0.0 < alpha && alpha < 2.0) {
        return Err(LabError::Parameter(format!("alpha must be in (0,2), got {alpha}")));
    }
    if !(1..=3).contains(&d) || x_rel.len() != d {
        return Err(LabError::Parameter(format!(
            "ball_exit_sample supports d in {{1,2,3}}, got d={d}, point dim {}",
            x_rel.len()
        )));
    }
    let rho = norm(x_rel);
    if rho >= 1.0 {
        return Err(LabError::Parameter("start point must satisfy |x| < 1".into()));
    }
    // Radial coordinate.
    let beta = Beta::new(1.0 - alpha / 2.0, alpha / 2.0).unwrap();
    let w: f64 = beta.sample(rng);
    let v = (1.0 - w * rho * rho) / (1.0 - w);
    let s = v.sqrt();
    // Angular coordinate, conditional density on the sphere
    // proportional to |x - s theta|^{-d}.
    if rho < 1e-14 {
        let dir = random_unit_vector(rng, d);
        return Ok(dir.iter().map(|c| c * s).collect());
    }
    let xhat: Vec<f64> = x_rel.iter().map(|c| c / rho).collect();
    match d {
        1 => {
            // Two atoms at +-s with weights 1/|s -+ rho|.
            let p_plus = (s + rho) / (2.0 * s);
            let sign = if rng.gen::<f64>() < p_plus { 1.0 } else { -1.0 };
            Ok(vec![sign * s * xhat[0]])
        }
        2 => {
            // Wrapped Cauchy in the angle from xhat with parameter rho/s.
            let rt = rho / s;
            let u: f64 = rng.gen();
            let psi = 2.0 * (((1.0 - rt) / (1.0 + rt)) * (PI * (u - 0.5)).tan()).atan();
            let (sin_p, cos_p) = psi.sin_cos();
            let perp = [-xhat[1], xhat[0]];
            Ok(vec![
                s * (cos_p * xhat[0] + sin_p * perp[0]),
                s * (cos_p * xhat[1] + sin_p * perp[1]),
            ])
        }
        3 => {
            // Cosine mu of the polar angle from xhat has density
            // proportional to (a - b mu)^{-3/2}; invert the CDF through
            // T = (a - b mu)^{-1/2}, which is uniform between its
            // endpoint values.
            let a = s * s + rho * rho;
            let b = 2.0 * s * rho;
            let g: f64 = rng.gen();
            let t = g * (a - b).powf(-0.5) + (1.0 - g) * (a + b).powf(-0.5);
            let mu = ((a - t.powi(-2)) / b).clamp(-1.0, 1.0);
            let phi = 2.0 * PI * rng.gen::<f64>();
            let comp = orthonormal_complement(&xhat);
            let sin_t = (1.0 - mu * mu).sqrt();
            let mut z = vec![0.0; 3];
            for i in 0..3 {
                z[i] = s
                    * (mu * xhat[i]
                        + sin_t * (phi.cos() * comp[0][i] + phi.sin() * comp[1][i]));
            }
            Ok(z)
        }
        _ => unreachable!(),
    }
}

/// Exit data of one sphere-stepping walk.
#[derive(Debug, Clone)]
pub struct ExitSample {
    pub exit_point: Vec<f64>,
    /// Accumulated mean-exit-time contributions of the traversed balls;
    /// an unbiased sample of `E_x tau_D` in expectation over walks.
    pub time_weight: f64,
    pub steps: u64,
    pub truncated: bool,
    /// The walk ran past [`ESCAPE_RADIUS`]; implies `truncated`.
    pub escaped: bool,
}

/// Walks beyond this distance are abandoned: in every shipped unbounded
/// domain the chance of such a walk returning to exit is negligible, and
/// persistent escapes are themselves divergence evidence.
pub const ESCAPE_RADIUS: f64 = 1e12;

fn stable_alpha_for_walk(model: &ProcessModel) -> Result<f64> {
    match model.kind() {
        ModelKind::Stable { alpha } => Ok(*alpha),
        _ => Err(LabError::UnsupportedModel(format!(
            "exact sphere stepping requires a stable model, got {}",
            model.id()
        ))),
    }
}

/// Sphere-stepping walk from `x` until it leaves `D` (or the step budget
/// runs out; see [`ExitSample::truncated`]).
pub fn walk_exit(
    model: &ProcessModel,
    d_dom: &Domain,
    x: &[f64],
    rng: &mut Stream,
    budget: u64,
) -> Result<ExitSample> {
    let alpha = stable_alpha_for_walk(model)?;
    let d = model.dim();
    if d != d_dom.dim() || !(1..=3).contains(&d) {
        return Err(LabError::Parameter(format!(
            "walk_exit needs matching dimension in {{1,2,3}}, model d={d}, domain d={}",
            d_dom.dim()
        )));
    }
    if !d_dom.contains(x)? {
        return Err(LabError::Geometry("walk must start inside the domain".into()));
    }
    let c_t = ball_mean_exit_constant(d, alpha);
    let mut cur = x.to_vec();
    let mut time_weight = 0.0;
    let mut steps = 0u64;
    while d_dom.contains(&cur)? {
        if !cur.iter().all(|c| c.is_finite()) || norm(&cur) > ESCAPE_RADIUS {
            return Ok(ExitSample {
                exit_point: cur,
                time_weight,
                steps,
                truncated: true,
                escaped: true,
            });
        }
        if steps >= budget {
            return Ok(ExitSample {
                exit_point: cur,
                time_weight,
                steps,
                truncated: true,
                escaped: false,
            });
        }
        let rho = d_dom.interior_radius(&cur)?;
        time_weight += c_t * rho.powf(alpha);
        let z = ball_exit_sample(alpha, d, &vec![0.0; d], rng)?;
        for (c, zi) in cur.iter_mut().zip(&z) {
            *c += rho * zi;
        }
        steps += 1;
    }
    Ok(ExitSample { exit_point: cur, time_weight, steps, truncated: false, escaped: false })
}

/// Walk statistics over a deterministic parallel batch.
struct BatchMoments {
    value: StreamingMoments,
    truncated: u64,
    escaped: u64,
}

fn walk_batch<F>(
    model: &ProcessModel,
    d_dom: &Domain,
    x: &[f64],
    n: u64,
    budget: u64,
    seed: u64,
    base: u64,
    payoff: F,
) -> Result<(Estimate, f64, f64)>
where
    F: Fn(&ExitSample) -> f64 + Sync,
{
    stable_alpha_for_walk(model)?;
    d_dom.contains(x)?;
    let parts: Vec<Result<BatchMoments>> = parallel_reduce(seed, base, |i, rng| {
        let mut m = StreamingMoments::default();
        let mut truncated = 0u64;
        let mut escaped = 0u64;
        for _ in 0..chunk_len(n, i) {
            let s = walk_exit(model, d_dom, x, rng, budget)?;
            if s.truncated {
                truncated += 1;
            }
            if s.escaped {
                escaped += 1;
            }
            m.push(payoff(&s));
        }
        Ok(BatchMoments { value: m, truncated, escaped })
    });
    let mut total = StreamingMoments::default();
    let mut truncated = 0u64;
    let mut escaped = 0u64;
    for p in parts {
        let p = p?;
        total.merge(&p.value);
        truncated += p.truncated;
        escaped += p.escaped;
    }
    Ok((total.estimate(), truncated as f64 / n as f64, escaped as f64 / n as f64))
}

/// Number of stream blocks consumed by one budget ladder.
pub const LADDER_RUNGS: u64 = 5;

/// Monte Carlo mean exit time with a divergence verdict.
///
/// The walk budget is doubled over [`LADDER_RUNGS`] rungs; the estimate is
/// taken from the last rung. If the truncated-walk fraction stays above 1%
/// and the rung means keep growing by at least 25%, the mean exit time is
/// declared divergent and the value is a lower bound.
pub fn mean_exit_time(
    model: &ProcessModel,
    d_dom: &Domain,
    x: &[f64],
    n: u64,
    budget: u64,
    seed: u64,
    base: u64,
) -> Result<Estimate> {
    Ok(mean_exit_time_ladder(model, d_dom, x, n, budget, seed, base)?.1)
}

/// The full budget ladder behind [`mean_exit_time`]: rung means (lower
/// bounds under truncation) plus the final estimate.
pub fn mean_exit_time_ladder(
    model: &ProcessModel,
    d_dom: &Domain,
    x: &[f64],
    n: u64,
    budget: u64,
    seed: u64,
    base: u64,
) -> Result<(Vec<f64>, Estimate)> {
    let mut means = Vec::new();
    let mut last = None;
    for rung in 0..LADDER_RUNGS {
        let b = budget << rung;
        let (est, trunc_frac, escaped_frac) = walk_batch(
            model,
            d_dom,
            x,
            n,
            b,
            seed,
            base + rung * PAR_CHUNKS,
            |s| s.time_weight,
        )?;
        means.push(est.value);
        last = Some((est, trunc_frac, escaped_frac));
        if trunc_frac < 1e-2 {
            // Budget comfortably reached exit; no need to escalate.
            break;
        }
    }
    let (mut est, trunc_frac, escaped_frac) = last.unwrap();
    let growing = means.len() == LADDER_RUNGS as usize
        && means.windows(2).all(|w| w[1] >= 1.25 * w[0]);
    // Divergence shows either as rung means that keep growing or as a
    // persistent fraction of walks running off past the escape radius.
    est.diverged = escaped_frac >= 1e-3 || (trunc_frac >= 1e-2 && growing);
    Ok((means, est))
}

/// Monte Carlo Green function via
/// `G_D(x, y) = g(|x - y|) - E_x[g(|X_tau - y|)]` (transient models).
pub fn green_function(
    model: &ProcessModel,
    d_dom: &Domain,
    x: &[f64],
    y: &[f64],
    n: u64,
    budget: u64,
    seed: u64,
    base: u64,
) -> Result<Estimate> {
    if dist(x, y) == 0.0 {
        return Err(LabError::Singularity("green_function needs x != y".into()));
    }
    if !d_dom.contains(y)? {
        return Err(LabError::Geometry("probe y must lie in the domain".into()));
    }
    let g_xy = model.g_radial(dist(x, y))?;
    // Probe the Green kernel once so unsupported models fail fast.
    let (est, trunc_frac, _) = walk_batch(model, d_dom, x, n, budget, seed, base, |s| {
        model.g_radial(dist(&s.exit_point, y)).unwrap_or(0.0)
    })?;
    let mut out = Estimate {
        value: g_xy - est.value,
        stderr: est.stderr,
        n: est.n,
        diverged: trunc_frac > 1e-2,
    };
    if out.value < 0.0 && out.value > -3.0 * out.stderr {
        // Statistical undershoot of a tiny Green value.
        out.value = out.value.max(0.0);
    }
    Ok(out)
}

/// Monte Carlo regular harmonic function: `E_x[f(X_{tau_D})]`.
/// `diverged` flags an excess of truncated walks.
pub fn harmonic_eval<F>(
    model: &ProcessModel,
    d_dom: &Domain,
    boundary_data: F,
    x: &[f64],
    n: u64,
    budget: u64,
    seed: u64,
    base: u64,
) -> Result<Estimate>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let (est, trunc_frac, _) =
        walk_batch(model, d_dom, x, n, budget, seed, base, |s| {
            if s.truncated {
                0.0
            } else {
                boundary_data(&s.exit_point)
            }
        })?;
    Ok(Estimate { diverged: trunc_frac > 1e-2, ..est })
}

/// One positive stable random variable with Laplace transform
/// `E e^{-lambda S} = e^{-lambda^beta}` (Kanter / Chambers-Mallows-Stuck).
pub fn positive_stable_sample(beta: f64, rng: &mut Stream) -> f64 {
    let u: f64 = PI * rng.gen::<f64>();
    let e: f64 = Exp1.sample(rng);
    let a = (beta * u).sin() / u.sin().powf(1.0 / beta);
    a * (((1.0 - beta) * u).sin() / e).powf((1.0 - beta) / beta)
}

/// Brute-force path oracle: simulates the alpha-stable process as Brownian
/// motion (generator Delta) subordinated by small increments of the
/// beta = alpha/2 stable subordinator, and returns the first point outside
/// `D` together with the elapsed subordinator clock.
///
/// The clock step adapts to the distance to the boundary
/// (`h = (eps * dist)^alpha`), so the spatial step is about `eps * dist`.
pub fn subordinated_exit_oracle(
    alpha: f64,
    d_dom: &Domain,
    x: &[f64],
    eps: f64,
    rng: &mut Stream,
    max_steps: u64,
) -> Result<(Vec<f64>, f64, bool)> {
    let beta = alpha / 2.0;
    let mut cur = x.to_vec();
    let mut t = 0.0;
    for _ in 0..max_steps {
        if !d_dom.contains(&cur)? {
            return Ok((cur, t, false));
        }
        let dist_b = d_dom.interior_radius(&cur)?;
        let h = (eps * dist_b).powf(alpha).max(1e-300);
        // S_h =d h^{1/beta} S_1.
        let dsub = h.powf(1.0 / beta) * positive_stable_sample(beta, rng);
        let sigma = (2.0 * dsub).sqrt();
        for c in cur.iter_mut() {
            let g: f64 = rng.sample(StandardNormal);
            *c += sigma * g;
        }
        t += h;
    }
    Ok((cur, t, true))
}

/// Report of a Levy-system consistency check: the direct walk estimate of
/// `P_x(X_tau in A)` against the Poisson-kernel integral.
#[derive(Debug, Clone)]
pub struct LevySystemReport {
    pub walk_estimate: Estimate,
    pub kernel_estimate: Estimate,
    pub z_score: f64,
}

/// Compares the exit-law mass of `A` computed two ways: by direct walks and
/// by integrating the Poisson kernel `P_D(x, z)` over `A`. `A` must be
/// disjoint from the closure of `D`; it is integrated by Monte Carlo over
/// an enclosing shell.
pub fn levy_system_check(
    model: &ProcessModel,
    d_dom: &Domain,
    x: &[f64],
    a_set: &Domain,
    a_radius_range: (f64, f64),
    n: u64,
    budget: u64,
    seed: u64,
    base: u64,
) -> Result<LevySystemReport> {
    let d = model.dim();
    let walk = harmonic_eval(
        model,
        d_dom,
        |z| {
            if a_set.contains(z).unwrap_or(false) {
                1.0
            } else {
                0.0
            }
        },
        x,
        n,
        budget,
        seed,
        base,
    )?;
    // Kernel side: importance-sampled integral of P_D(x, z) over A; the
    // radial density ~ s^{-1-alpha} tracks the far-field decay of the
    // exit law, keeping the weight variance bounded.
    let alpha = stable_alpha_for_walk(model)?;
    let occ = crate::potential::occupation_quad(d, alpha)?;
    let (r_lo, r_hi) = a_radius_range;
    let norm_c = r_lo.powf(-alpha) - r_hi.powf(-alpha);
    let kernel = mc_estimate(seed, base + PAR_CHUNKS, n.min(100_000), |rng| {
        let u: f64 = rng.gen();
        let s = (r_lo.powf(-alpha) - u * norm_c).powf(-1.0 / alpha);
        let dir = random_unit_vector(rng, d);
        let z: Vec<f64> = dir.iter().map(|c| c * s).collect();
        if !a_set.contains(&z).unwrap_or(false) {
            return 0.0;
        }
        let dens = alpha * s.powf(-1.0 - alpha) / norm_c
            / (crate::kernels::sphere_area(d) * s.powf(d as f64 - 1.0));
        crate::potential::poisson_walk_sample(model, d_dom, &occ, x, &z, budget, rng)
            .unwrap_or(0.0)
            / dens
    });
    let z_score = (walk.value - kernel.value)
        / (walk.stderr * walk.stderr + kernel.stderr * kernel.stderr).sqrt();
    Ok(LevySystemReport { walk_estimate: walk, kernel_estimate: kernel, z_score })
}
