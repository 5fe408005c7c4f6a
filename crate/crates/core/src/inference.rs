//! Generic Bayesian machinery: discrete updates, Bayes factors, a seeded
//! random-walk Metropolis sampler and posterior summaries with split-R̂ and
//! effective sample size.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::par::{map_indexed, Execution};
use crate::{Error, Result};

/// Posterior probabilities from a discrete prior and per-hypothesis
/// likelihoods.
pub fn discrete_bayes_update(prior: &[f64], likelihood: &[f64]) -> Result<Vec<f64>> {
    if prior.len() != likelihood.len() || prior.is_empty() {
        return Err(Error::domain(format!(
            "prior has {} entries, likelihood {}",
            prior.len(),
            likelihood.len()
        )));
    }
    if prior.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
        return Err(Error::domain("prior entries must be finite and nonnegative"));
    }
    let total: f64 = prior.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::domain(format!("prior sums to {total}, not 1")));
    }
    if likelihood.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
        return Err(Error::domain("likelihood entries must be finite and nonnegative"));
    }
    let joint: Vec<f64> = prior.iter().zip(likelihood).map(|(p, l)| p * l).collect();
    let evidence: f64 = joint.iter().sum();
    if !(evidence > 0.0) {
        return Err(Error::NoPosterior);
    }
    Ok(joint.into_iter().map(|j| j / evidence).collect())
}

/// Ratio of two likelihoods given on the log scale.
pub fn bayes_factor(log_lik_1: f64, log_lik_2: f64) -> Result<f64> {
    if !log_lik_1.is_finite() || !log_lik_2.is_finite() {
        return Err(Error::domain(format!(
            "log-likelihoods must be finite, got ({log_lik_1}, {log_lik_2})"
        )));
    }
    Ok((log_lik_1 - log_lik_2).exp())
}

// ---------------------------------------------------------------------------
// Sampler
// ---------------------------------------------------------------------------

/// Acceptance rate the warmup adaptation steers towards.
pub const TARGET_ACCEPTANCE: f64 = 0.3;
/// Retries when drawing a random initial point with a finite target.
const INIT_ATTEMPTS: usize = 100;
/// Half-width of the uniform box random initial points are drawn from.
const INIT_RADIUS: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    /// Uniform on [-2, 2] per coordinate, redrawn until the target is finite.
    Random,
    /// The same starting point for every chain.
    Point(Vec<f64>),
    /// One starting point per chain.
    PerChain(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub chains: usize,
    pub warmup: usize,
    pub keep: usize,
    pub seed: u64,
    pub initial: Init,
    /// Fixed proposal scale. `None` adapts it during warmup.
    pub step_scale: Option<f64>,
    /// Metropolis steps per kept draw (and per warmup iteration). `None`
    /// uses the dimension, which keeps the effective sample size per kept
    /// draw roughly independent of the dimension.
    pub thin: Option<usize>,
    pub execution: Execution,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            chains: 4,
            warmup: 1000,
            keep: 1000,
            seed: 0,
            initial: Init::Random,
            step_scale: None,
            thin: None,
            execution: Execution::default(),
        }
    }
}

impl SamplerConfig {
    /// Metropolis steps per iteration for a target of this dimension.
    pub fn thinning(&self, dim: usize) -> usize {
        self.thin.unwrap_or(dim).max(1)
    }

    fn validate(&self, dim: usize) -> Result<()> {
        if dim == 0 {
            return Err(Error::domain("sampler needs at least one dimension"));
        }
        if self.chains < 2 {
            return Err(Error::domain(format!("need at least 2 chains, got {}", self.chains)));
        }
        if self.keep < 100 {
            return Err(Error::domain(format!(
                "need at least 100 kept draws per chain, got {}",
                self.keep
            )));
        }
        if self.thin == Some(0) {
            return Err(Error::domain("thinning must be at least 1"));
        }
        if let Some(s) = self.step_scale {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::domain(format!("step scale must be positive, got {s}")));
            }
        }
        let check = |p: &Vec<f64>| {
            if p.len() != dim {
                Err(Error::domain(format!("initial point has {} entries, expected {dim}", p.len())))
            } else {
                Ok(())
            }
        };
        match &self.initial {
            Init::Random => {}
            Init::Point(p) => check(p)?,
            Init::PerChain(ps) => {
                if ps.len() != self.chains {
                    return Err(Error::domain(format!(
                        "{} initial points for {} chains",
                        ps.len(),
                        self.chains
                    )));
                }
                ps.iter().try_for_each(check)?;
            }
        }
        Ok(())
    }
}

/// Kept MCMC draws, chain-major then iteration then parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    chains: usize,
    iterations: usize,
    names: Vec<String>,
    draws: Vec<f64>,
    pub seed: u64,
    pub acceptance_rate: Vec<f64>,
}

impl SampleMatrix {
    pub fn new(
        chains: usize,
        iterations: usize,
        names: Vec<String>,
        draws: Vec<f64>,
        seed: u64,
        acceptance_rate: Vec<f64>,
    ) -> Result<Self> {
        if chains < 2 || iterations < 100 {
            return Err(Error::domain(format!(
                "sample matrix needs >= 2 chains and >= 100 iterations, got {chains} x {iterations}"
            )));
        }
        if names.is_empty() || draws.len() != chains * iterations * names.len() {
            return Err(Error::domain("draw array does not match its dimensions"));
        }
        if acceptance_rate.len() != chains {
            return Err(Error::domain("one acceptance rate per chain is required"));
        }
        if draws.iter().any(|d| !d.is_finite()) {
            return Err(Error::domain("draws must be finite"));
        }
        Ok(SampleMatrix { chains, iterations, names, draws, seed, acceptance_rate })
    }

    pub fn chains(&self) -> usize {
        self.chains
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.names.len() {
            return Err(Error::domain("wrong number of parameter names"));
        }
        self.names = names;
        Ok(self)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// The full parameter vector of one draw.
    pub fn draw(&self, chain: usize, iteration: usize) -> &[f64] {
        let d = self.dim();
        let start = (chain * self.iterations + iteration) * d;
        &self.draws[start..start + d]
    }

    /// One parameter's trace within one chain.
    pub fn chain_trace(&self, param: usize, chain: usize) -> Vec<f64> {
        (0..self.iterations).map(|i| self.draw(chain, i)[param]).collect()
    }

    /// One parameter pooled over chains, chain-major.
    pub fn pooled(&self, param: usize) -> Vec<f64> {
        self.draws.iter().skip(param).step_by(self.dim()).copied().collect()
    }

    /// Applies `f` to every draw vector, producing a matrix with new names.
    pub fn map_draws<F>(&self, names: Vec<String>, f: F) -> Result<SampleMatrix>
    where
        F: Fn(&[f64]) -> Vec<f64>,
    {
        let mut draws = Vec::with_capacity(self.chains * self.iterations * names.len());
        for c in 0..self.chains {
            for i in 0..self.iterations {
                let out = f(self.draw(c, i));
                debug_assert_eq!(out.len(), names.len());
                draws.extend(out);
            }
        }
        SampleMatrix::new(
            self.chains,
            self.iterations,
            names,
            draws,
            self.seed,
            self.acceptance_rate.clone(),
        )
    }

    /// The same draws with chains reordered by `order`.
    pub fn permute_chains(&self, order: &[usize]) -> Result<SampleMatrix> {
        let mut seen = vec![false; self.chains];
        if order.len() != self.chains || order.iter().any(|&c| c >= self.chains || std::mem::replace(&mut seen[c], true)) {
            return Err(Error::domain("not a permutation of the chains"));
        }
        let per_chain = self.iterations * self.dim();
        let draws = order
            .iter()
            .flat_map(|&c| self.draws[c * per_chain..(c + 1) * per_chain].iter().copied())
            .collect();
        let acceptance = order.iter().map(|&c| self.acceptance_rate[c]).collect();
        SampleMatrix::new(self.chains, self.iterations, self.names.clone(), draws, self.seed, acceptance)
    }
}

struct ChainOutput {
    draws: Vec<f64>,
    accepted: usize,
}

fn finite_or_neg_inf(v: f64) -> f64 {
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}

/// Random-walk Metropolis with a diagonal Gaussian proposal.
///
/// During warmup the global step adapts by stochastic approximation towards
/// 30% acceptance. At 60% of warmup, per-coordinate scales are reset from the
/// spread of the chain over the preceding window and the step adaptation
/// restarts. Everything is frozen after warmup. Iteration counts are in kept
/// draws; each iteration runs `thin` Metropolis steps. Each chain draws from its own ChaCha8 stream
/// `(seed, chain)`, so output does not depend on how chains are scheduled.
pub fn sample<F>(log_target: F, dim: usize, config: &SamplerConfig) -> Result<SampleMatrix>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    config.validate(dim)?;
    let outputs = map_indexed(config.execution, config.chains, |c| {
        run_chain(&log_target, dim, config, c)
    });
    let mut draws = Vec::with_capacity(config.chains * config.keep * dim);
    let mut acceptance = Vec::with_capacity(config.chains);
    for (c, out) in outputs.into_iter().enumerate() {
        let out = out?;
        if out.accepted == 0 {
            return Err(Error::Mixing { chain: c });
        }
        acceptance.push(out.accepted as f64 / (config.keep * config.thinning(dim)) as f64);
        draws.extend(out.draws);
    }
    let names = (0..dim).map(|i| format!("p{i}")).collect();
    SampleMatrix::new(config.chains, config.keep, names, draws, config.seed, acceptance)
}

fn initial_point<F>(
    log_target: &F,
    dim: usize,
    config: &SamplerConfig,
    chain: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<f64>, f64)>
where
    F: Fn(&[f64]) -> f64,
{
    let given = match &config.initial {
        Init::Random => None,
        Init::Point(p) => Some(p.clone()),
        Init::PerChain(ps) => Some(ps[chain].clone()),
    };
    if let Some(x) = given {
        let lp = log_target(&x);
        if lp.is_nan() || lp == f64::INFINITY || lp == f64::NEG_INFINITY {
            return Err(Error::Init(format!("chain {chain}: log target is {lp} at the initial point")));
        }
        return Ok((x, lp));
    }
    let mut last = f64::NAN;
    for _ in 0..INIT_ATTEMPTS {
        let x: Vec<f64> = (0..dim)
            .map(|_| rng.random_range(-INIT_RADIUS..INIT_RADIUS))
            .collect();
        last = log_target(&x);
        if last.is_finite() {
            return Ok((x, last));
        }
    }
    Err(Error::Init(format!(
        "chain {chain}: no finite log target in {INIT_ATTEMPTS} random starts (last {last})"
    )))
}

fn run_chain<F>(log_target: &F, dim: usize, config: &SamplerConfig, chain: usize) -> Result<ChainOutput>
where
    F: Fn(&[f64]) -> f64,
{
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(chain as u64);
    let (mut x, mut lp) = initial_point(log_target, dim, config, chain, &mut rng)?;

    let default_step = 2.38 / (dim as f64).sqrt();
    let adapt = config.step_scale.is_none();
    let mut log_step = config.step_scale.unwrap_or(default_step).ln();
    let mut scales = vec![1.0; dim];
    let thin = config.thinning(dim);
    let warmup = config.warmup * thin;
    let (window_start, switch) = (warmup / 5, 3 * warmup / 5);
    let mut window: Vec<Vec<f64>> = Vec::new();
    let mut adapt_t = 0usize;
    // the frozen step is the average log step over the last part of warmup,
    // which is far less noisy than the final stochastic-approximation iterate
    let average_from = switch + (warmup - switch) / 2;
    let (mut log_step_sum, mut log_step_n) = (0.0, 0usize);

    let mut proposal = vec![0.0; dim];
    let mut draws = Vec::with_capacity(config.keep * dim);
    let mut accepted = 0;
    for iter in 0..warmup + config.keep * thin {
        let step = log_step.exp();
        for (j, p) in proposal.iter_mut().enumerate() {
            let z: f64 = rng.sample(StandardNormal);
            *p = x[j] + step * scales[j] * z;
        }
        let lp_new = finite_or_neg_inf(log_target(&proposal));
        let log_alpha = lp_new - lp;
        let u: f64 = rng.random();
        let accept = lp_new > f64::NEG_INFINITY && u.ln() < log_alpha;
        if accept {
            x.copy_from_slice(&proposal);
            lp = lp_new;
        }

        if iter < warmup {
            if adapt {
                let alpha = if log_alpha >= 0.0 { 1.0 } else { log_alpha.exp() };
                adapt_t += 1;
                log_step += (alpha - TARGET_ACCEPTANCE) / (adapt_t as f64).powf(0.6);
                if iter >= average_from {
                    log_step_sum += log_step;
                    log_step_n += 1;
                }
                if iter + 1 == warmup && log_step_n > 0 {
                    log_step = log_step_sum / log_step_n as f64;
                }
            }
            if iter >= window_start && iter < switch {
                window.push(x.clone());
            }
            if iter + 1 == switch && adapt && window.len() >= 20 {
                for (j, s) in scales.iter_mut().enumerate() {
                    let n = window.len() as f64;
                    let mean = window.iter().map(|w| w[j]).sum::<f64>() / n;
                    let var = window.iter().map(|w| (w[j] - mean).powi(2)).sum::<f64>() / (n - 1.0);
                    if var > 0.0 && var.is_finite() {
                        *s = var.sqrt();
                    }
                }
                log_step = default_step.ln();
                adapt_t = 0;
            }
        } else {
            accepted += accept as usize;
            if (iter - warmup + 1).is_multiple_of(thin) {
                draws.extend_from_slice(&x);
            }
        }
    }
    Ok(ChainOutput { draws, accepted })
}

// ---------------------------------------------------------------------------
// Summaries
// ---------------------------------------------------------------------------

pub const QUANTILE_LEVELS: [f64; 6] = [0.005, 0.025, 0.05, 0.95, 0.975, 0.995];

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub median: f64,
    /// Empirical quantiles at [`QUANTILE_LEVELS`].
    pub quantiles: [f64; 6],
    /// `None` when every draw is identical.
    pub rhat: Option<f64>,
    /// `None` when every draw is identical.
    pub ess: Option<f64>,
}

impl ParamSummary {
    pub fn quantile(&self, level: f64) -> Option<f64> {
        QUANTILE_LEVELS
            .iter()
            .position(|l| (l - level).abs() < 1e-12)
            .map(|i| self.quantiles[i])
    }

    /// Central 95% interval.
    pub fn interval95(&self) -> (f64, f64) {
        (self.quantiles[1], self.quantiles[4])
    }

    pub fn is_degenerate(&self) -> bool {
        self.rhat.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSummary {
    pub params: Vec<ParamSummary>,
}

impl PosteriorSummary {
    pub fn get(&self, name: &str) -> Option<&ParamSummary> {
        self.params.iter().find(|p| p.name == name)
    }
}

/// Type-7 (linear interpolation) quantile of sorted data.
pub(crate) fn sorted_quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Pooled moments and quantiles plus split-chain diagnostics per parameter.
/// Every statistic is computed from sorted values or from split halves in a
/// canonical order, so reordering chains leaves the result bit-identical.
pub fn summarize(samples: &SampleMatrix) -> PosteriorSummary {
    let params = (0..samples.dim())
        .map(|p| {
            let mut pooled = samples.pooled(p);
            pooled.sort_by(f64::total_cmp);
            let n = pooled.len() as f64;
            let mean = pooled.iter().sum::<f64>() / n;
            let var = pooled.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let mut quantiles = [0.0; 6];
            for (q, level) in quantiles.iter_mut().zip(QUANTILE_LEVELS) {
                *q = sorted_quantile(&pooled, level);
            }
            let degenerate = pooled[0] == pooled[pooled.len() - 1];
            let (rhat, ess) = if degenerate {
                (None, None)
            } else {
                let halves = split_halves(samples, p);
                let (rhat, ess) = split_diagnostics(&halves);
                (Some(rhat), Some(ess))
            };
            ParamSummary {
                name: samples.names[p].clone(),
                mean,
                sd: var.max(0.0).sqrt(),
                median: sorted_quantile(&pooled, 0.5),
                quantiles,
                rhat,
                ess,
            }
        })
        .collect();
    PosteriorSummary { params }
}

/// Each chain's trace cut into two halves (the middle draw of an odd-length
/// chain is dropped), sorted into a canonical order.
fn split_halves(samples: &SampleMatrix, param: usize) -> Vec<Vec<f64>> {
    let half = samples.iterations / 2;
    let mut halves = Vec::with_capacity(2 * samples.chains);
    for c in 0..samples.chains {
        let trace = samples.chain_trace(param, c);
        halves.push(trace[..half].to_vec());
        halves.push(trace[trace.len() - half..].to_vec());
    }
    halves.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    halves
}

/// Biased autocovariance at lags 0..n.
fn autocovariance(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let c: Vec<f64> = x.iter().map(|v| v - mean).collect();
    (0..n)
        .map(|lag| c[..n - lag].iter().zip(&c[lag..]).map(|(a, b)| a * b).sum::<f64>() / n as f64)
        .collect()
}

/// Split-R̂ and effective sample size (Geyer's initial positive sequence on
/// the multi-chain autocorrelation), with ESS capped at the draw count and
/// R̂ floored at 1.
fn split_diagnostics(seqs: &[Vec<f64>]) -> (f64, f64) {
    let m = seqs.len() as f64;
    let n = seqs[0].len();
    let nf = n as f64;
    let means: Vec<f64> = seqs.iter().map(|s| s.iter().sum::<f64>() / nf).collect();
    let acovs: Vec<Vec<f64>> = seqs.iter().map(|s| autocovariance(s)).collect();
    let vars: Vec<f64> = acovs.iter().map(|a| a[0] * nf / (nf - 1.0)).collect();
    let w = vars.iter().sum::<f64>() / m;
    let grand = means.iter().sum::<f64>() / m;
    let b_over_n = means.iter().map(|x| (x - grand).powi(2)).sum::<f64>() / (m - 1.0);
    let var_plus = w * (nf - 1.0) / nf + b_over_n;
    let rhat = if w > 0.0 { (var_plus / w).sqrt().max(1.0) } else { f64::INFINITY };

    let total = m * nf;
    let rho = |t: usize| -> f64 {
        let mean_acov = acovs.iter().map(|a| a[t]).sum::<f64>() / m;
        1.0 - (w - mean_acov) / var_plus
    };
    // Geyer: sum successive pairs while positive, forcing them monotone
    let mut tau = -1.0;
    let mut prev_pair = f64::INFINITY;
    let mut t = 0;
    while t + 1 < n {
        let pair = (rho(t) + rho(t + 1)).min(prev_pair);
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        prev_pair = pair;
        t += 2;
    }
    let ess = if tau > 0.0 { (total / tau).min(total) } else { total };
    (rhat, ess)
}

// ---------------------------------------------------------------------------
// Draw dump
// ---------------------------------------------------------------------------

/// Writes `chain,iteration,<params>` rows, both indices 0-based.
pub fn write_draws_csv<W: Write>(samples: &SampleMatrix, sink: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(sink);
    let fmt = |e: csv::Error| Error::Format(e.to_string());
    let mut header = vec!["chain".to_owned(), "iteration".to_owned()];
    header.extend(samples.names.iter().cloned());
    wtr.write_record(&header).map_err(fmt)?;
    for c in 0..samples.chains {
        for i in 0..samples.iterations {
            let mut row = vec![c.to_string(), i.to_string()];
            row.extend(samples.draw(c, i).iter().map(f64::to_string));
            wtr.write_record(&row).map_err(fmt)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Reads a draw dump written by [`write_draws_csv`]. Seed and acceptance
/// rates are not stored and come back as 0 and NaN.
pub fn read_draws_csv<R: Read>(source: R) -> Result<SampleMatrix> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
    let header = rdr.headers().map_err(|e| Error::Format(e.to_string()))?.clone();
    if header.len() < 3 || &header[0] != "chain" || &header[1] != "iteration" {
        return Err(Error::Format("draw file header must start with `chain,iteration`".into()));
    }
    let names: Vec<String> = header.iter().skip(2).map(str::to_owned).collect();
    let mut draws = Vec::new();
    let mut index = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Format(e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        let bad = |what: &str| Error::Row { line, message: format!("cannot parse {what}") };
        let c: usize = record[0].parse().map_err(|_| bad("chain"))?;
        let i: usize = record[1].parse().map_err(|_| bad("iteration"))?;
        index.push((c, i));
        for v in record.iter().skip(2) {
            draws.push(v.parse::<f64>().map_err(|_| bad("draw"))?);
        }
    }
    let chains = index.iter().map(|(c, _)| c + 1).max().unwrap_or(0);
    if chains == 0 || index.len() % chains != 0 {
        return Err(Error::Format("ragged or empty draw file".into()));
    }
    let iterations = index.len() / chains;
    let in_order = index
        .iter()
        .enumerate()
        .all(|(k, &(c, i))| c == k / iterations && i == k % iterations);
    if !in_order {
        return Err(Error::Format("draws must be sorted by chain then iteration".into()));
    }
    SampleMatrix::new(chains, iterations, names, draws, 0, vec![f64::NAN; chains])
}
