//! Regression reanalysis of a count-outcome experiment: least squares with
//! t-based inference, Bayesian Gaussian and Poisson regressions, and
//! posterior-predictive simulation of team scenarios.
//!
//! The Bayesian fits sample in an unconstrained space (log of the residual
//! sd) after a whitening transform built from a Laplace approximation at the
//! posterior mode, so the random-walk sampler sees a roughly isotropic target.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::dataio::{ExperimentRow, ExperimentTable};
use crate::inference::{sample, sorted_quantile, summarize, Init, PosteriorSummary, SampleMatrix, SamplerConfig};
use crate::linalg::{cholesky, forward_substitute, spd_inverse, Matrix, PivotedQr};
use crate::numkernel::{student_t_two_sided_p, Dist, Family};
use crate::par::{map_indexed, Execution};
use crate::{Error, Result};

/// Relative pivot size below which a design column counts as dependent.
pub const RANK_TOLERANCE: f64 = 1e-10;
/// Fits with any parameter above this split-R̂ are rejected.
pub const MAX_RHAT: f64 = 1.05;
/// Fits with any parameter below this effective sample size are rejected.
pub const MIN_ESS: f64 = 100.0;
/// Linear predictors above this at the posterior mode trigger a warning.
pub const ETA_WARN: f64 = 30.0;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

// ---------------------------------------------------------------------------
// Design
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Predictor {
    Treatment,
    System,
    Lab,
    Experience,
    Ability,
}

impl Predictor {
    pub const ALL: [Predictor; 5] = [
        Predictor::Treatment,
        Predictor::System,
        Predictor::Lab,
        Predictor::Experience,
        Predictor::Ability,
    ];
    /// Predictors kept in the reduced count model.
    pub const POISSON: [Predictor; 3] = [Predictor::Treatment, Predictor::Experience, Predictor::Ability];

    pub fn name(self) -> &'static str {
        match self {
            Predictor::Treatment => "treatment",
            Predictor::System => "system",
            Predictor::Lab => "lab",
            Predictor::Experience => "experience",
            Predictor::Ability => "ability",
        }
    }

    fn encode(self, row: &ExperimentRow) -> f64 {
        f64::from(match self {
            Predictor::Treatment => row.treatment.code(),
            Predictor::System => row.system.code(),
            Predictor::Lab => row.lab.code(),
            Predictor::Experience => row.experience.code(),
            Predictor::Ability => row.ability.code(),
        })
    }
}

/// Named numeric predictors plus the outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    names: Vec<String>,
    x: Matrix,
    outcome: Vec<f64>,
}

impl DesignMatrix {
    pub fn new(names: Vec<String>, rows: Vec<Vec<f64>>, outcome: Vec<f64>) -> Result<Self> {
        if names.len() < 2 {
            return Err(Error::domain("design needs an intercept and at least one predictor"));
        }
        if rows.is_empty() || rows.len() != outcome.len() {
            return Err(Error::domain(format!(
                "{} design rows for {} outcomes",
                rows.len(),
                outcome.len()
            )));
        }
        let cols = names.len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::domain(format!("row {i} has {} entries, expected {cols}", row.len())));
            }
            data.extend_from_slice(row);
        }
        if data.iter().chain(&outcome).any(|v| !v.is_finite()) {
            return Err(Error::domain("design and outcome must be finite"));
        }
        Ok(DesignMatrix { names, x: Matrix::from_row_major(rows.len(), cols, data), outcome })
    }

    /// Intercept column followed by the given predictors, outcome `fixed`.
    pub fn from_table(table: &ExperimentTable, predictors: &[Predictor]) -> Result<Self> {
        let mut names = vec!["intercept".to_string()];
        names.extend(predictors.iter().map(|p| p.name().to_string()));
        let rows = table
            .rows()
            .iter()
            .map(|r| std::iter::once(1.0).chain(predictors.iter().map(|p| p.encode(r))).collect())
            .collect();
        let outcome = table.rows().iter().map(|r| f64::from(r.fixed)).collect();
        DesignMatrix::new(names, rows, outcome)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn rows(&self) -> usize {
        self.x.rows
    }

    pub fn cols(&self) -> usize {
        self.x.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.x.row(i)
    }

    pub fn outcome(&self) -> &[f64] {
        &self.outcome
    }
}

// ---------------------------------------------------------------------------
// Least squares
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    pub t_statistic: f64,
    pub p_value: f64,
    pub ci95_lower: f64,
    pub ci95_upper: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FreqFit {
    pub coefficients: Vec<Coefficient>,
    pub residual_sd: f64,
    pub df: usize,
}

impl FreqFit {
    pub fn get(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }

    pub fn write_csv<W: Write>(&self, sink: W) -> Result<()> {
        let rows = self
            .coefficients
            .iter()
            .map(|c| (c.name.as_str(), c.estimate, c.std_error, c.ci95_lower, c.ci95_upper));
        write_fit_rows(sink, rows)
    }
}

fn write_fit_rows<'a, W, I>(sink: W, rows: I) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = (&'a str, f64, f64, f64, f64)>,
{
    let mut w = csv::Writer::from_writer(sink);
    let io = |e: csv::Error| Error::Io(e.into());
    w.write_record(["coefficient", "estimate", "error", "lower95", "upper95"]).map_err(io)?;
    for (name, est, err, lo, hi) in rows {
        w.write_record([name.to_string(), est.to_string(), err.to_string(), lo.to_string(), hi.to_string()])
            .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// Ordinary least squares with t-based p-values and estimate ± 2·SE intervals.
pub fn ols_fit(d: &DesignMatrix) -> Result<FreqFit> {
    let (n, p) = (d.rows(), d.cols());
    if n <= p {
        return Err(Error::domain(format!(
            "{n} rows leave no residual degrees of freedom for {p} coefficients"
        )));
    }
    let qr = PivotedQr::new(&d.x, RANK_TOLERANCE);
    if qr.rank < p {
        return Err(Error::SingularDesign(d.names[qr.perm[qr.rank]].clone()));
    }
    let beta = qr.solve(&d.outcome);
    let fitted = d.x.mul_vec(&beta);
    let rss: f64 = d.outcome.iter().zip(&fitted).map(|(y, f)| (y - f).powi(2)).sum();
    let df = n - p;
    let s2 = rss / df as f64;
    let cov = qr.normal_inverse();
    let mut coefficients = Vec::with_capacity(p);
    for (j, name) in d.names.iter().enumerate() {
        let estimate = beta[j];
        let std_error = (s2 * cov[(j, j)]).sqrt();
        let t_statistic = if std_error > 0.0 {
            estimate / std_error
        } else if estimate == 0.0 {
            0.0
        } else {
            f64::INFINITY.copysign(estimate)
        };
        coefficients.push(Coefficient {
            name: name.clone(),
            estimate,
            std_error,
            t_statistic,
            p_value: student_t_two_sided_p(t_statistic, df as f64)?,
            ci95_lower: estimate - 2.0 * std_error,
            ci95_upper: estimate + 2.0 * std_error,
        });
    }
    Ok(FreqFit { coefficients, residual_sd: s2.sqrt(), df })
}

// ---------------------------------------------------------------------------
// Bayesian models
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Model {
    Gaussian,
    Poisson,
}

impl Model {
    pub fn name(self) -> &'static str {
        match self {
            Model::Gaussian => "gaussian",
            Model::Poisson => "poisson",
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Model {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(Model::Gaussian),
            "poisson" => Ok(Model::Poisson),
            _ => Err(Error::Input(format!("unknown model `{s}`"))),
        }
    }
}

/// Priors for the coefficients, in design column order, and for the
/// residual sd of the Gaussian model.
#[derive(Debug, Clone, PartialEq)]
pub struct Priors {
    pub coefficients: Vec<Dist>,
    pub sigma: Option<Dist>,
}

impl Priors {
    /// N(0, 20) on every coefficient and half-normal(10) on the residual sd.
    pub fn gaussian_default(d: &DesignMatrix) -> Self {
        let n = Dist::normal(0.0, 20.0).expect("valid constant");
        Priors {
            coefficients: vec![n; d.cols()],
            sigma: Some(Dist::half_normal(10.0).expect("valid constant")),
        }
    }

    /// N(0.5, 0.8) on the treatment coefficient and N(0, 5) on the others,
    /// all on the log-rate scale.
    pub fn poisson_default(d: &DesignMatrix) -> Self {
        let coefficients = d
            .names
            .iter()
            .map(|name| {
                if name == "treatment" {
                    Dist::normal(0.5, 0.8)
                } else {
                    Dist::normal(0.0, 5.0)
                }
                .expect("valid constant")
            })
            .collect();
        Priors { coefficients, sigma: None }
    }

    pub fn default_for(model: Model, d: &DesignMatrix) -> Self {
        match model {
            Model::Gaussian => Priors::gaussian_default(d),
            Model::Poisson => Priors::poisson_default(d),
        }
    }

    fn validate(&self, model: Model, d: &DesignMatrix) -> Result<()> {
        if self.coefficients.len() != d.cols() {
            return Err(Error::domain(format!(
                "{} coefficient priors for {} design columns",
                self.coefficients.len(),
                d.cols()
            )));
        }
        if model == Model::Gaussian && self.sigma.is_none() {
            return Err(Error::domain("the Gaussian model needs a residual sd prior"));
        }
        let all = self.coefficients.iter().chain(self.sigma.iter());
        if let Some(bad) = all.into_iter().find(|p| p.family() == Family::Poisson) {
            return Err(Error::Unsupported(format!("{} prior on a continuous parameter", bad.family())));
        }
        Ok(())
    }
}

/// Parameter names in the order used by [`log_posterior`]: the design
/// columns, then `sigma` for the Gaussian model.
pub fn parameter_names(model: Model, d: &DesignMatrix) -> Vec<String> {
    let mut names = d.names.clone();
    if model == Model::Gaussian {
        names.push("sigma".into());
    }
    names
}

/// The log posterior shared by [`log_posterior`] and the fitters.
struct Target<'a> {
    model: Model,
    d: &'a DesignMatrix,
    priors: &'a Priors,
    /// Σ ln(y_i!) for the Poisson likelihood.
    log_factorials: f64,
}

impl<'a> Target<'a> {
    fn new(model: Model, d: &'a DesignMatrix, priors: &'a Priors) -> Result<Self> {
        priors.validate(model, d)?;
        let mut log_factorials = 0.0;
        if model == Model::Poisson {
            for &y in &d.outcome {
                if y < 0.0 || y.fract() != 0.0 {
                    return Err(Error::domain(format!("Poisson outcome must be a count, got {y}")));
                }
                log_factorials += crate::numkernel::ln_gamma(y + 1.0)?;
            }
        }
        Ok(Target { model, d, priors, log_factorials })
    }

    fn dim(&self) -> usize {
        self.d.cols() + (self.model == Model::Gaussian) as usize
    }

    fn value(&self, params: &[f64]) -> f64 {
        let p = self.d.cols();
        let beta = &params[..p];
        let mut lp: f64 = self.priors.coefficients.iter().zip(beta).map(|(d, b)| d.log_density(*b)).sum();
        match self.model {
            Model::Gaussian => {
                let sigma = params[p];
                if !(sigma > 0.0) {
                    return f64::NEG_INFINITY;
                }
                let rss: f64 = (0..self.d.rows())
                    .map(|i| (self.d.outcome[i] - crate::linalg::dot(self.d.row(i), beta)).powi(2))
                    .sum();
                let n = self.d.rows() as f64;
                lp += -n * (sigma.ln() + LN_SQRT_2PI) - rss / (2.0 * sigma * sigma);
                lp += self.priors.sigma.as_ref().map_or(0.0, |d| d.log_density(sigma));
            }
            Model::Poisson => {
                for i in 0..self.d.rows() {
                    let eta = crate::linalg::dot(self.d.row(i), beta);
                    lp += self.d.outcome[i] * eta - eta.exp();
                }
                lp -= self.log_factorials;
            }
        }
        lp
    }

    fn gradient(&self, params: &[f64]) -> Vec<f64> {
        let p = self.d.cols();
        let beta = &params[..p];
        let dlog = |d: &Dist, x: f64| d.log_density_derivative(x).unwrap_or(0.0);
        let mut g: Vec<f64> = self.priors.coefficients.iter().zip(beta).map(|(d, b)| dlog(d, *b)).collect();
        match self.model {
            Model::Gaussian => {
                let sigma = params[p];
                let s2 = sigma * sigma;
                let mut rss = 0.0;
                for i in 0..self.d.rows() {
                    let row = self.d.row(i);
                    let r = self.d.outcome[i] - crate::linalg::dot(row, beta);
                    rss += r * r;
                    for (gj, xj) in g.iter_mut().zip(row) {
                        *gj += r * xj / s2;
                    }
                }
                let n = self.d.rows() as f64;
                let prior = self.priors.sigma.as_ref().map_or(0.0, |d| dlog(d, sigma));
                g.push(-n / sigma + rss / (s2 * sigma) + prior);
            }
            Model::Poisson => {
                for i in 0..self.d.rows() {
                    let row = self.d.row(i);
                    let resid = self.d.outcome[i] - crate::linalg::dot(row, beta).exp();
                    for (gj, xj) in g.iter_mut().zip(row) {
                        *gj += resid * xj;
                    }
                }
            }
        }
        g
    }

    // The sampler works on u with the residual sd replaced by its log; the
    // Jacobian of sigma = exp(u) adds u to the log density.

    fn natural(&self, u: &[f64]) -> Vec<f64> {
        let mut theta = u.to_vec();
        if self.model == Model::Gaussian {
            let last = theta.len() - 1;
            theta[last] = theta[last].exp();
        }
        theta
    }

    fn unconstrained(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let mut u = theta.to_vec();
        if self.model == Model::Gaussian {
            let last = u.len() - 1;
            if !(u[last] > 0.0) {
                return Err(Error::Init(format!("residual sd must be positive, got {}", u[last])));
            }
            u[last] = u[last].ln();
        }
        Ok(u)
    }

    fn value_u(&self, u: &[f64]) -> f64 {
        let jacobian = if self.model == Model::Gaussian { u[u.len() - 1] } else { 0.0 };
        self.value(&self.natural(u)) + jacobian
    }

    fn gradient_u(&self, u: &[f64]) -> Vec<f64> {
        let theta = self.natural(u);
        let mut g = self.gradient(&theta);
        if self.model == Model::Gaussian {
            let last = g.len() - 1;
            g[last] = g[last] * theta[last] + 1.0;
        }
        g
    }

    /// Negative Hessian of `value_u` by central differences of the gradient.
    fn neg_hessian_u(&self, u: &[f64]) -> Matrix {
        let n = u.len();
        let mut h = Matrix::zeros(n, n);
        let mut probe = u.to_vec();
        for i in 0..n {
            let step = 1e-5 * u[i].abs().max(1.0);
            probe[i] = u[i] + step;
            let up = self.gradient_u(&probe);
            probe[i] = u[i] - step;
            let down = self.gradient_u(&probe);
            probe[i] = u[i];
            for j in 0..n {
                h[(i, j)] = -(up[j] - down[j]) / (2.0 * step);
            }
        }
        for i in 0..n {
            for j in 0..i {
                let avg = 0.5 * (h[(i, j)] + h[(j, i)]);
                h[(i, j)] = avg;
                h[(j, i)] = avg;
            }
        }
        h
    }

    fn check_dim(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.dim() {
            return Err(Error::domain(format!(
                "{} model over {} columns takes {} parameters, got {}",
                self.model,
                self.d.cols(),
                self.dim(),
                params.len()
            )));
        }
        Ok(())
    }
}

/// Unnormalized log posterior at `params` (coefficients, then the residual
/// sd for the Gaussian model). This is the target the fitters sample.
pub fn log_posterior(model: Model, d: &DesignMatrix, priors: &Priors, params: &[f64]) -> Result<f64> {
    let target = Target::new(model, d, priors)?;
    target.check_dim(params)?;
    Ok(target.value(params))
}

/// Analytic gradient of [`log_posterior`].
pub fn log_posterior_gradient(model: Model, d: &DesignMatrix, priors: &Priors, params: &[f64]) -> Result<Vec<f64>> {
    let target = Target::new(model, d, priors)?;
    target.check_dim(params)?;
    Ok(target.gradient(params))
}

/// Damped Newton ascent to the posterior mode in the unconstrained space.
fn find_mode(target: &Target, start: Vec<f64>) -> Option<Vec<f64>> {
    let mut u = start;
    let mut f = target.value_u(&u);
    if !f.is_finite() {
        return None;
    }
    let mut damping = 1e-3;
    for _ in 0..500 {
        let g = target.gradient_u(&u);
        if g.iter().all(|v| v.abs() < 1e-9) {
            break;
        }
        let h = target.neg_hessian_u(&u);
        let mut moved = false;
        for _ in 0..40 {
            let mut a = h.clone();
            for i in 0..u.len() {
                a[(i, i)] += damping * h[(i, i)].abs().max(1.0);
            }
            if let Some(l) = cholesky(&a) {
                let y = forward_substitute(&l, &g);
                let step = crate::linalg::backward_substitute_transposed(&l, &y);
                let cand: Vec<f64> = u.iter().zip(&step).map(|(a, b)| a + b).collect();
                let fc = target.value_u(&cand);
                if fc.is_finite() && fc >= f {
                    let gain = fc - f;
                    u = cand;
                    f = fc;
                    damping = (damping / 10.0).max(1e-12);
                    moved = gain > 0.0 || step.iter().any(|s| *s != 0.0);
                    break;
                }
            }
            damping *= 10.0;
        }
        if !moved {
            break;
        }
    }
    Some(u)
}

/// Mode and Cholesky factor of the inverse negative Hessian there.
fn laplace(target: &Target, start: Vec<f64>) -> Option<(Vec<f64>, Matrix)> {
    let mode = find_mode(target, start)?;
    let cov = spd_inverse(&target.neg_hessian_u(&mode))?;
    let l = cholesky(&cov)?;
    Some((mode, l))
}

/// Posterior draws and summaries of a Bayesian regression.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorFit {
    pub model: Model,
    pub summary: PosteriorSummary,
    pub samples: SampleMatrix,
    pub priors: Priors,
}

impl PosteriorFit {
    /// Summarizes existing draws, such as ones read back from a draw dump,
    /// and applies the convergence gate.
    pub fn from_samples(model: Model, samples: SampleMatrix, priors: Priors) -> Result<Self> {
        if model == Model::Gaussian && samples.names().last().map(String::as_str) != Some("sigma") {
            return Err(Error::Input("Gaussian draws must end with a `sigma` column".into()));
        }
        let summary = summarize(&samples);
        convergence_gate(&summary)?;
        Ok(PosteriorFit { model, summary, samples, priors })
    }

    pub fn write_csv<W: Write>(&self, sink: W) -> Result<()> {
        let rows = self.summary.params.iter().map(|p| {
            let (lo, hi) = p.interval95();
            (p.name.as_str(), p.mean, p.sd, lo, hi)
        });
        write_fit_rows(sink, rows)
    }
}

/// Rejects summaries with split-R̂ above [`MAX_RHAT`] or ESS below
/// [`MIN_ESS`] for any parameter. Degenerate parameters fail too.
pub fn convergence_gate(summary: &PosteriorSummary) -> Result<()> {
    for p in &summary.params {
        let rhat = p.rhat.unwrap_or(f64::NAN);
        let ess = p.ess.unwrap_or(f64::NAN);
        if !(rhat <= MAX_RHAT && ess >= MIN_ESS) {
            return Err(Error::Diagnostics { parameter: p.name.clone(), rhat, ess });
        }
    }
    Ok(())
}

/// Bayesian linear regression with Gaussian errors.
pub fn bayes_linear_fit(d: &DesignMatrix, priors: &Priors, cfg: &SamplerConfig) -> Result<PosteriorFit> {
    fit_model(Model::Gaussian, d, priors, cfg)
}

/// Bayesian Poisson regression with log link.
pub fn bayes_poisson_fit(d: &DesignMatrix, priors: &Priors, cfg: &SamplerConfig) -> Result<PosteriorFit> {
    fit_model(Model::Poisson, d, priors, cfg)
}

fn starting_point(target: &Target) -> Vec<f64> {
    let d = target.d;
    let n = d.rows() as f64;
    let mean = d.outcome.iter().sum::<f64>() / n;
    let intercept = d.names.iter().position(|c| c == "intercept");
    match target.model {
        Model::Gaussian => {
            if let Ok(fit) = ols_fit(d) {
                let mut u: Vec<f64> = fit.coefficients.iter().map(|c| c.estimate).collect();
                u.push(fit.residual_sd.max(1e-3).ln());
                return u;
            }
            let var = d.outcome.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
            let mut u = vec![0.0; d.cols()];
            if let Some(i) = intercept {
                u[i] = mean;
            }
            u.push(var.sqrt().max(1e-3).ln());
            u
        }
        Model::Poisson => {
            let mut u = vec![0.0; d.cols()];
            if let Some(i) = intercept {
                u[i] = (mean + 0.1).ln();
            }
            u
        }
    }
}

fn fit_model(model: Model, d: &DesignMatrix, priors: &Priors, cfg: &SamplerConfig) -> Result<PosteriorFit> {
    let target = Target::new(model, d, priors)?;
    let dim = target.dim();
    if model == Model::Poisson && d.outcome.iter().all(|y| *y == 0.0) {
        warn!("every outcome is zero; the intercept is determined by its prior alone");
    }
    let start = starting_point(&target);
    let (mode, l) = laplace(&target, start.clone()).unwrap_or_else(|| {
        warn!("no usable Gaussian approximation at the mode; sampling unpreconditioned");
        (start, Matrix::identity(dim))
    });
    if model == Model::Poisson {
        let beta = &mode[..d.cols()];
        let max_eta = (0..d.rows()).map(|i| crate::linalg::dot(d.row(i), beta)).fold(f64::MIN, f64::max);
        if max_eta > ETA_WARN {
            warn!("linear predictor reaches {max_eta:.1} at the mode; rates are near overflow");
        }
    }

    let to_u = |z: &[f64]| -> Vec<f64> {
        let lz = l.mul_vec(z);
        mode.iter().zip(lz).map(|(m, v)| m + v).collect()
    };
    let to_z = |theta: &[f64]| -> Result<Vec<f64>> {
        let u = target.unconstrained(theta)?;
        let centred: Vec<f64> = u.iter().zip(&mode).map(|(a, m)| a - m).collect();
        Ok(forward_substitute(&l, &centred))
    };
    let mut whitened = cfg.clone();
    whitened.initial = match &cfg.initial {
        Init::Random => Init::Random,
        Init::Point(p) => {
            target.check_dim(p)?;
            Init::Point(to_z(p)?)
        }
        Init::PerChain(ps) => {
            ps.iter().try_for_each(|p| target.check_dim(p))?;
            Init::PerChain(ps.iter().map(|p| to_z(p)).collect::<Result<_>>()?)
        }
    };

    let raw = sample(|z| target.value_u(&to_u(z)), dim, &whitened)?;
    let samples = raw.map_draws(parameter_names(model, d), |z| target.natural(&to_u(z)))?;
    PosteriorFit::from_samples(model, samples, priors.clone())
}

// ---------------------------------------------------------------------------
// Scenarios
// ---------------------------------------------------------------------------

/// Composition of a simulated team: probabilities over ability
/// (low, medium, high), treatment (manual, auto) and experience (B, M).
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub ability_mix: [f64; 3],
    pub treatment_mix: [f64; 2],
    pub experience_mix: [f64; 2],
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let mixes: [(&str, &[f64]); 3] = [
            ("ability", &self.ability_mix),
            ("treatment", &self.treatment_mix),
            ("experience", &self.experience_mix),
        ];
        for (name, mix) in mixes {
            let total: f64 = mix.iter().sum();
            if mix.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
                return Err(Error::domain(format!(
                    "{name} mix {mix:?} is not a probability vector"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOutcome {
    /// Average simulated count per person and task.
    pub mean_fixed: f64,
    /// Central 90% interval of the simulated counts.
    pub interval90: (f64, f64),
    pub draws: usize,
}

/// Simulated units per RNG stream. Each block draws from its own ChaCha8
/// stream, so results do not depend on how blocks are scheduled.
pub const SCENARIO_BLOCK: usize = 4096;
pub const MIN_SCENARIO_DRAWS: usize = 1000;

/// Posterior-predictive simulation of a team under a Poisson fit.
pub fn simulate_scenario(fit: &PosteriorFit, s: &Scenario, n_draws: usize, seed: u64) -> Result<ScenarioOutcome> {
    simulate_scenario_with(fit, s, n_draws, seed, Execution::default())
}

pub fn simulate_scenario_with(
    fit: &PosteriorFit,
    s: &Scenario,
    n_draws: usize,
    seed: u64,
    exec: Execution,
) -> Result<ScenarioOutcome> {
    if fit.model != Model::Poisson {
        return Err(Error::Unsupported(format!("scenarios need a Poisson fit, got {}", fit.model)));
    }
    simulate_from_samples(&fit.samples, s, n_draws, seed, exec)
}

#[derive(Clone, Copy)]
enum Role {
    Intercept,
    Treatment,
    Experience,
    Ability,
}

/// The simulation behind [`simulate_scenario`], on raw Poisson-model draws
/// named after design columns.
pub fn simulate_from_samples(
    samples: &SampleMatrix,
    s: &Scenario,
    n_draws: usize,
    seed: u64,
    exec: Execution,
) -> Result<ScenarioOutcome> {
    s.validate()?;
    if n_draws < MIN_SCENARIO_DRAWS {
        return Err(Error::domain(format!(
            "need at least {MIN_SCENARIO_DRAWS} simulated draws, got {n_draws}"
        )));
    }
    let roles = samples
        .names()
        .iter()
        .map(|name| match name.as_str() {
            "intercept" => Ok(Role::Intercept),
            "treatment" => Ok(Role::Treatment),
            "experience" => Ok(Role::Experience),
            "ability" => Ok(Role::Ability),
            other => Err(Error::Unsupported(format!(
                "scenarios fix treatment, experience and ability only; the fit has `{other}`"
            ))),
        })
        .collect::<Result<Vec<_>>>()?;

    let pick = |rng: &mut ChaCha8Rng, mix: &[f64]| -> f64 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (k, p) in mix.iter().enumerate() {
            acc += p;
            if u < acc {
                return k as f64;
            }
        }
        // rounding left u above the last cumulative sum
        mix.iter().rposition(|p| *p > 0.0).unwrap_or(0) as f64
    };
    let blocks = n_draws.div_ceil(SCENARIO_BLOCK);
    let simulated = map_indexed(exec, blocks, |b| -> Result<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(b as u64);
        let len = SCENARIO_BLOCK.min(n_draws - b * SCENARIO_BLOCK);
        let mut out = Vec::with_capacity(len);
        for _ in 0..len {
            let c = rng.random_range(0..samples.chains());
            let i = rng.random_range(0..samples.iterations());
            let beta = samples.draw(c, i);
            let ability = pick(&mut rng, &s.ability_mix);
            let treatment = pick(&mut rng, &s.treatment_mix);
            let experience = pick(&mut rng, &s.experience_mix);
            let eta: f64 = roles
                .iter()
                .zip(beta)
                .map(|(role, b)| {
                    b * match role {
                        Role::Intercept => 1.0,
                        Role::Treatment => treatment,
                        Role::Experience => experience,
                        Role::Ability => ability,
                    }
                })
                .sum();
            let rate = eta.exp();
            let y = if rate > 0.0 {
                Poisson::new(rate)
                    .map_err(|e| Error::domain(format!("Poisson rate {rate}: {e}")))?
                    .sample(&mut rng)
            } else {
                0.0
            };
            out.push(y);
        }
        Ok(out)
    });
    let mut all = Vec::with_capacity(n_draws);
    for block in simulated {
        all.extend(block?);
    }
    let mean_fixed = all.iter().sum::<f64>() / n_draws as f64;
    all.sort_by(f64::total_cmp);
    Ok(ScenarioOutcome {
        mean_fixed,
        interval90: (sorted_quantile(&all, 0.05), sorted_quantile(&all, 0.95)),
        draws: n_draws,
    })
}
