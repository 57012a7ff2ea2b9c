//! No-U-Turn sampler with multinomial trajectory sampling and dual-averaging step size
//! adaptation.
//!
//! Trajectories double in a random direction until the end-to-end displacement and the
//! velocity at either end point in opposite directions. Candidates are drawn with
//! probability proportional to `exp(−H)`: uniformly-progressive inside subtrees, biased
//! towards the newer half when the top-level tree doubles.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::hmc::{hamiltonian, leapfrog, ChainState, Metric};
use super::model::LogDensity;
use super::SampleChain;

/// Energy error beyond which a trajectory counts as divergent.
pub const MAX_ENERGY_ERROR: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoKeyword {
    Auto,
}

/// Initial leapfrog step size: a fixed value or `"auto"` (heuristic doubling search).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StepSizeInit {
    Fixed(f64),
    Auto(AutoKeyword),
}

impl Default for StepSizeInit {
    fn default() -> Self {
        StepSizeInit::Auto(AutoKeyword::Auto)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NutsConfig {
    pub num_samples: usize,
    pub num_warmup: usize,
    pub target_accept: f64,
    pub max_tree_depth: usize,
    pub seed: u64,
    pub initial_step_size: StepSizeInit,
    /// Half-width of the uniform jitter added to the model's start point.
    pub init_jitter: f64,
    /// Adapt a diagonal mass matrix in Stan-style windows during warmup.
    pub adapt_mass_matrix: bool,
}

impl Default for NutsConfig {
    fn default() -> Self {
        Self {
            num_samples: 1000,
            num_warmup: 1000,
            target_accept: 0.8,
            max_tree_depth: 10,
            seed: 0,
            initial_step_size: StepSizeInit::default(),
            init_jitter: 0.5,
            adapt_mass_matrix: false,
        }
    }
}

impl NutsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_samples == 0 {
            return Err(Error::invalid("num_samples must be positive"));
        }
        if self.num_warmup == 0 {
            return Err(Error::invalid("num_warmup must be positive"));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::invalid("target_accept must lie in (0, 1)"));
        }
        if self.max_tree_depth == 0 {
            return Err(Error::invalid("max_tree_depth must be positive"));
        }
        if let StepSizeInit::Fixed(e) = self.initial_step_size {
            if !(e.is_finite() && e > 0.0) {
                return Err(Error::invalid("initial_step_size must be positive or \"auto\""));
            }
        }
        if !(self.init_jitter.is_finite() && self.init_jitter >= 0.0) {
            return Err(Error::invalid("init_jitter must be nonnegative"));
        }
        Ok(())
    }
}

/// Step size used at one warmup iteration, and the running dual-averaged value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSizeEntry {
    pub step_size: f64,
    pub adapted_step_size: f64,
}

/// Nesterov dual averaging of `log ε` towards a target mean acceptance statistic.
#[derive(Debug, Clone)]
pub struct DualAveraging {
    mu: f64,
    target: f64,
    h_bar: f64,
    log_eps_bar: f64,
    counter: usize,
}

impl DualAveraging {
    const GAMMA: f64 = 0.05;
    const T0: f64 = 10.0;
    const KAPPA: f64 = 0.75;

    pub fn new(initial_step: f64, target: f64) -> Self {
        Self {
            mu: (10.0 * initial_step).ln(),
            target,
            h_bar: 0.0,
            log_eps_bar: 0.0,
            counter: 0,
        }
    }

    /// Feed one acceptance statistic; returns the step size for the next iteration.
    pub fn update(&mut self, accept_stat: f64) -> f64 {
        self.counter += 1;
        let m = self.counter as f64;
        let eta = 1.0 / (m + Self::T0);
        self.h_bar = (1.0 - eta) * self.h_bar + eta * (self.target - accept_stat);
        let log_eps = self.mu - m.sqrt() / Self::GAMMA * self.h_bar;
        let w = m.powf(-Self::KAPPA);
        self.log_eps_bar = w * log_eps + (1.0 - w) * self.log_eps_bar;
        log_eps.exp()
    }

    /// The averaged step size used after warmup.
    pub fn adapted(&self) -> f64 {
        self.log_eps_bar.exp()
    }
}

#[derive(Debug, Clone)]
struct Subtree {
    left: ChainState,
    right: ChainState,
    proposal: ChainState,
    log_weight: f64,
    sum_accept: f64,
    n_leaves: usize,
    turning: bool,
    diverging: bool,
}

/// Outcome of one NUTS transition.
#[derive(Debug, Clone)]
pub struct Transition {
    pub state: ChainState,
    pub accept_stat: f64,
    pub divergent: bool,
    pub tree_depth: usize,
    pub n_leapfrog: usize,
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn is_turning(left: &ChainState, right: &ChainState, metric: &Metric) -> bool {
    let mut dot_left = 0.0;
    let mut dot_right = 0.0;
    for i in 0..left.position.len() {
        let dx = right.position[i] - left.position[i];
        let m = metric.inv_mass[i];
        dot_left += dx * m * left.momentum[i];
        dot_right += dx * m * right.momentum[i];
    }
    dot_left < 0.0 || dot_right < 0.0
}

/// A single NUTS chain over `target`.
pub struct NutsSampler<'a, T: LogDensity + ?Sized> {
    target: &'a T,
    metric: Metric,
    step_size: f64,
    max_tree_depth: usize,
    rng: ChaCha8Rng,
}

impl<'a, T: LogDensity + ?Sized> NutsSampler<'a, T> {
    pub fn new(target: &'a T, step_size: f64, max_tree_depth: usize, seed: u64) -> Self {
        Self {
            target,
            metric: Metric::unit(target.dim()),
            step_size,
            max_tree_depth,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn step_size(&self) -> f64 {
        self.step_size
    }

    pub fn set_step_size(&mut self, step_size: f64) {
        self.step_size = step_size;
    }

    pub fn metric(&self) -> &Metric {
        &self.metric
    }

    pub fn set_metric(&mut self, metric: Metric) {
        assert_eq!(metric.inv_mass.len(), self.target.dim());
        self.metric = metric;
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    fn sample_momentum(&mut self) -> Vec<f64> {
        let rng = &mut self.rng;
        self.metric
            .inv_mass
            .iter()
            .map(|m| {
                let z: f64 = rng.sample(StandardNormal);
                z / m.sqrt()
            })
            .collect()
    }

    /// Heuristic search: double or halve ε until the one-step acceptance ratio crosses ½.
    pub fn find_reasonable_step_size(&mut self, state: &ChainState, start: f64) -> f64 {
        let mut s = state.clone();
        s.momentum = self.sample_momentum();
        let h0 = hamiltonian(&s, &self.metric);
        let log_ratio = |eps: f64, this: &Self| -> f64 {
            let next = leapfrog(&s, eps, this.target, &this.metric);
            let d = h0 - hamiltonian(&next, &this.metric);
            if d.is_finite() {
                d
            } else {
                f64::NEG_INFINITY
            }
        };
        let ln_half = 0.5f64.ln();
        let mut eps = start;
        let mut lr = log_ratio(eps, self);
        let dir: f64 = if lr > ln_half { 1.0 } else { -1.0 };
        for _ in 0..100 {
            let crossed = if dir > 0.0 { lr <= ln_half } else { lr >= ln_half };
            if crossed {
                break;
            }
            let next = eps * 2f64.powf(dir);
            if !(1e-12..=1e7).contains(&next) {
                break;
            }
            eps = next;
            lr = log_ratio(eps, self);
        }
        eps
    }

    /// One NUTS transition from `current`.
    pub fn transition(&mut self, current: &ChainState) -> Transition {
        let mut start = current.clone();
        start.momentum = self.sample_momentum();
        let h0 = hamiltonian(&start, &self.metric);

        let mut tree = Subtree {
            left: start.clone(),
            right: start.clone(),
            proposal: start,
            log_weight: 0.0,
            sum_accept: 0.0,
            n_leaves: 0,
            turning: false,
            diverging: false,
        };
        let mut sum_accept = 0.0;
        let mut n_leaves = 0usize;
        let mut divergent = false;
        let mut depth = 0;
        while depth < self.max_tree_depth {
            let forward = self.rng.random::<bool>();
            let edge = if forward { &tree.right } else { &tree.left };
            let dir = if forward { 1.0 } else { -1.0 };
            let sub = self.build_tree(&edge.clone(), dir, depth, h0);
            depth += 1;
            sum_accept += sub.sum_accept;
            n_leaves += sub.n_leaves;
            if sub.diverging {
                divergent = true;
                break;
            }
            if sub.turning {
                break;
            }
            let p_new = (sub.log_weight - tree.log_weight).exp().min(1.0);
            if self.rng.random::<f64>() < p_new {
                tree.proposal = sub.proposal;
            }
            tree.log_weight = log_add_exp(tree.log_weight, sub.log_weight);
            if forward {
                tree.right = sub.right;
            } else {
                tree.left = sub.left;
            }
            if is_turning(&tree.left, &tree.right, &self.metric) {
                break;
            }
        }
        let mut state = tree.proposal;
        state.momentum.iter_mut().for_each(|p| *p = 0.0);
        Transition {
            state,
            accept_stat: if n_leaves > 0 {
                sum_accept / n_leaves as f64
            } else {
                0.0
            },
            divergent,
            tree_depth: depth,
            n_leapfrog: n_leaves,
        }
    }

    fn build_tree(&mut self, edge: &ChainState, dir: f64, depth: usize, h0: f64) -> Subtree {
        if depth == 0 {
            let next = leapfrog(edge, dir * self.step_size, self.target, &self.metric);
            let energy_error = if next.is_finite() {
                hamiltonian(&next, &self.metric) - h0
            } else {
                f64::INFINITY
            };
            let diverging = !energy_error.is_finite() || energy_error > MAX_ENERGY_ERROR;
            let accept = if energy_error.is_finite() {
                (-energy_error).exp().min(1.0)
            } else {
                0.0
            };
            return Subtree {
                left: next.clone(),
                right: next.clone(),
                proposal: next,
                log_weight: if energy_error.is_finite() {
                    -energy_error
                } else {
                    f64::NEG_INFINITY
                },
                sum_accept: accept,
                n_leaves: 1,
                turning: false,
                diverging,
            };
        }
        let first = self.build_tree(edge, dir, depth - 1, h0);
        if first.diverging || first.turning {
            return first;
        }
        let outer = if dir > 0.0 { &first.right } else { &first.left };
        let second = self.build_tree(&outer.clone(), dir, depth - 1, h0);

        let mut merged = first;
        merged.sum_accept += second.sum_accept;
        merged.n_leaves += second.n_leaves;
        if second.diverging || second.turning {
            merged.diverging = second.diverging;
            merged.turning = second.turning;
            return merged;
        }
        let log_weight = log_add_exp(merged.log_weight, second.log_weight);
        let p_second = (second.log_weight - log_weight).exp();
        if self.rng.random::<f64>() < p_second {
            merged.proposal = second.proposal;
        }
        merged.log_weight = log_weight;
        if dir > 0.0 {
            merged.right = second.right;
        } else {
            merged.left = second.left;
        }
        merged.turning = is_turning(&merged.left, &merged.right, &self.metric);
        merged
    }
}

/// Welford accumulator for per-coordinate variances.
struct RunningVariance {
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl RunningVariance {
    fn new(dim: usize) -> Self {
        Self {
            n: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    fn push(&mut self, x: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        for ((&xi, mean), m2) in x.iter().zip(&mut self.mean).zip(&mut self.m2) {
            let d = xi - *mean;
            *mean += d / n;
            *m2 += d * (xi - *mean);
        }
    }

    /// Stan's shrunk estimate `n/(n+5)·var + 1e-3·5/(n+5)`.
    fn regularized(&self) -> Vec<f64> {
        let n = self.n as f64;
        self.m2
            .iter()
            .map(|m| {
                let var = m / (n - 1.0);
                (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))
            })
            .collect()
    }
}

/// End iterations (exclusive) of the slow mass-matrix windows within warmup.
fn mass_windows(num_warmup: usize) -> (usize, Vec<usize>) {
    let (init, term, base) = if num_warmup < 150 {
        let init = num_warmup * 15 / 100;
        let term = num_warmup / 10;
        (init, term, num_warmup - init - term)
    } else {
        (75, 50, 25)
    };
    let slow_end = num_warmup - term;
    let mut ends = Vec::new();
    let mut start = init;
    let mut size = base.max(1);
    while start < slow_end {
        let mut end = start + size;
        // absorb a short remainder into the last window
        if end + 2 * size > slow_end {
            end = slow_end;
        }
        ends.push(end);
        start = end;
        size *= 2;
    }
    (init, ends)
}

/// Run warmup and sampling for one chain.
pub fn nuts_sample<T: LogDensity + ?Sized>(target: &T, config: &NutsConfig) -> Result<SampleChain> {
    config.validate()?;
    let dim = target.dim();
    if dim == 0 {
        return Err(Error::invalid("target has zero dimension"));
    }
    let mut sampler = NutsSampler::new(target, 1.0, config.max_tree_depth, config.seed);

    let mut position = target.initial_position();
    if config.init_jitter > 0.0 {
        let j = config.init_jitter;
        for x in position.iter_mut() {
            *x += sampler.rng.random_range(-j..=j);
        }
    }
    let mut state = ChainState::new(target, position)?;
    if !state.is_finite() {
        return Err(Error::invalid(
            "log density or gradient is not finite at the initial position",
        ));
    }

    let init_step = match config.initial_step_size {
        StepSizeInit::Fixed(e) => e,
        StepSizeInit::Auto(_) => sampler.find_reasonable_step_size(&state, 1.0),
    };
    sampler.set_step_size(init_step);
    let mut dual = DualAveraging::new(init_step, config.target_accept);

    let (mass_start, mass_ends) = if config.adapt_mass_matrix {
        mass_windows(config.num_warmup)
    } else {
        (usize::MAX, Vec::new())
    };
    let mut window = RunningVariance::new(dim);
    let mut next_window = 0usize;

    let mut trace = Vec::with_capacity(config.num_warmup);
    let mut warmup_divergences = 0usize;
    let mut gradient_evaluations = 0u64;
    for it in 0..config.num_warmup {
        let used = sampler.step_size();
        let t = sampler.transition(&state);
        gradient_evaluations += t.n_leapfrog as u64;
        warmup_divergences += usize::from(t.divergent);
        state = t.state;
        let next = dual.update(t.accept_stat);
        sampler.set_step_size(next);
        trace.push(StepSizeEntry {
            step_size: used,
            adapted_step_size: dual.adapted(),
        });

        if it >= mass_start && next_window < mass_ends.len() {
            window.push(&state.position);
            if it + 1 == mass_ends[next_window] {
                sampler.set_metric(Metric {
                    inv_mass: window.regularized(),
                });
                window = RunningVariance::new(dim);
                next_window += 1;
                let eps = sampler.find_reasonable_step_size(&state, sampler.step_size());
                sampler.set_step_size(eps);
                dual = DualAveraging::new(eps, config.target_accept);
            }
        }
    }
    if warmup_divergences == config.num_warmup {
        return Err(Error::SamplerFailure {
            reason: "every warmup transition diverged".into(),
            divergences: warmup_divergences,
            step_size: sampler.step_size(),
        });
    }
    let final_step = dual.adapted();
    sampler.set_step_size(final_step);

    let mut samples = vec![0.0; config.num_samples * dim];
    let mut divergences = 0usize;
    let mut accept_sum = 0.0;
    let mut depth_sum = 0usize;
    for row in samples.chunks_exact_mut(dim) {
        let t = sampler.transition(&state);
        gradient_evaluations += t.n_leapfrog as u64;
        divergences += usize::from(t.divergent);
        accept_sum += t.accept_stat;
        depth_sum += t.tree_depth;
        state = t.state;
        target.constrain(&state.position, row);
    }

    Ok(SampleChain {
        samples,
        num_voxels: dim,
        step_size_trace: trace,
        divergence_count: divergences,
        warmup_divergence_count: warmup_divergences,
        accept_stat_mean: accept_sum / config.num_samples as f64,
        step_size: final_step,
        mean_tree_depth: depth_sum as f64 / config.num_samples as f64,
        gradient_evaluations,
        inv_mass: sampler.metric.inv_mass.clone(),
        seed: config.seed,
    })
}
