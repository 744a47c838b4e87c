//! Black-Scholes reference prices of path payoffs.
//!
//! Under zero rates the monitored prices follow
//! `x_k = x_{k-1} exp(sigma sqrt(dt) z_k - sigma^2 dt / 2)` with independent
//! standard normal `z_k`. Up to three dates the expectation is computed by
//! nested Gauss-Legendre quadrature in `z`, with the panels split where the
//! payoff kinks; beyond that Monte Carlo is used.

use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::payoff::PayoffSpec;
use crate::{Error, Result};

const Z_RANGE: f64 = 10.0;
const NODES_PER_PANEL: usize = 24;
const MAX_QUADRATURE_DATES: usize = 3;
pub const DEFAULT_MC_PATHS: usize = 400_000;
pub const DEFAULT_MC_SEED: u64 = 0x5eed;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(rename_all = "snake_case")
)]
pub enum ReferenceMethod {
    Quadrature,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ReferencePrice {
    pub value: f64,
    /// Standard error of a Monte Carlo estimate.
    pub std_error: Option<f64>,
    pub method: ReferenceMethod,
}

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = libm::cos(core::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5));
        let mut dp = 0.0;
        for _ in 0..100 {
            // P_n(x) and P_n'(x) by the three-term recurrence
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 0 { 1.0 } else if n == 1 { x } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * p - pm1) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn std_normal_pdf(z: f64) -> f64 {
    libm::exp(-0.5 * z * z) / libm::sqrt(2.0 * core::f64::consts::PI)
}

/// Price levels at which the payoff may kink, independent of the path.
fn fixed_levels(spec: &PayoffSpec) -> Vec<f64> {
    use PayoffSpec::*;
    match *spec {
        Call { strike, .. } | Put { strike, .. } => vec![strike],
        BarrierDigital { lower, upper } => vec![lower, upper],
        BarrierCall { lower, upper, strike } | BarrierPut { lower, upper, strike } => {
            vec![lower, upper, strike]
        }
        LookbackFixedCall { strike } | LookbackFixedPut { strike } => vec![strike],
        AsianFixedCall { strike } | AsianFixedPut { strike } => vec![strike],
        CustomPwl { ref points, .. } => points.iter().flatten().copied().collect(),
        _ => Vec::new(),
    }
}

struct Integrator<'a> {
    spec: &'a PayoffSpec,
    n: usize,
    drift: f64,
    diffusion: f64,
    levels: Vec<f64>,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Integrator<'_> {
    fn integrate(&self, path: &mut Vec<f64>, prev: f64) -> f64 {
        if path.len() == self.n {
            return self.spec.eval_path(path);
        }
        let mut breaks: Vec<f64> = self
            .levels
            .iter()
            .chain(path.iter())
            .filter(|&&b| b > 0.0)
            .map(|&b| (libm::log(b / prev) - self.drift) / self.diffusion)
            .filter(|z| z.abs() < Z_RANGE)
            .collect();
        // fixed panels keep the Gaussian well resolved away from kinks
        breaks.extend((-4..=4).map(|k| 2.5 * k as f64));
        breaks.sort_by(f64::total_cmp);
        breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        let mut total = 0.0;
        for w in breaks.windows(2) {
            let (a, b) = (w[0], w[1]);
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            for (t, wt) in self.nodes.iter().zip(&self.weights) {
                let z = mid + half * t;
                let x = prev * libm::exp(self.drift + self.diffusion * z);
                path.push(x);
                total += half * wt * std_normal_pdf(z) * self.integrate(path, x);
                path.pop();
            }
        }
        total
    }
}

/// Expectation of the payoff under driftless lognormal dynamics observed
/// every `step` years for `n_times` dates.
pub fn bs_reference_price(spec: &PayoffSpec, spot: f64, vol: f64, step: f64, n_times: usize) -> Result<ReferencePrice> {
    if !(spot > 0.0 && vol > 0.0 && step > 0.0 && spot.is_finite() && vol.is_finite() && step.is_finite()) || n_times == 0 {
        return Err(Error::InvalidInput(alloc::string::String::from(
            "reference price needs positive spot, volatility, step and dates",
        )));
    }
    spec.validate(n_times)?;
    if n_times > MAX_QUADRATURE_DATES {
        let (value, se) = bs_monte_carlo(spec, spot, vol, step, n_times, DEFAULT_MC_PATHS, DEFAULT_MC_SEED)?;
        return Ok(ReferencePrice { value, std_error: Some(se), method: ReferenceMethod::MonteCarlo });
    }
    let (nodes, weights) = gauss_legendre(NODES_PER_PANEL);
    let diffusion = vol * libm::sqrt(step);
    let it = Integrator {
        spec,
        n: n_times,
        drift: -0.5 * diffusion * diffusion,
        diffusion,
        levels: fixed_levels(spec),
        nodes,
        weights,
    };
    let mut path = Vec::with_capacity(n_times);
    Ok(ReferencePrice { value: it.integrate(&mut path, spot), std_error: None, method: ReferenceMethod::Quadrature })
}

/// Monte Carlo mean and standard error with a seeded generator.
pub fn bs_monte_carlo(
    spec: &PayoffSpec,
    spot: f64,
    vol: f64,
    step: f64,
    n_times: usize,
    paths: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    spec.validate(n_times)?;
    if paths < 2 {
        return Err(Error::InvalidInput(alloc::string::String::from("need at least two paths")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let diffusion = vol * libm::sqrt(step);
    let drift = -0.5 * diffusion * diffusion;
    let mut path = vec![0.0; n_times];
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..paths {
        let mut x = spot;
        for p in path.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            x *= libm::exp(drift + diffusion * z);
            *p = x;
        }
        let v = spec.eval_path(&path);
        sum += v;
        sum_sq += v * v;
    }
    let n = paths as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0);
    Ok((mean, libm::sqrt(var / n)))
}
