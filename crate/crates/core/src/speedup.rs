//! Direct Bayesian model of inverse speedup between two languages.
//!
//! Each observed per-task inverse speedup is modelled as the true speedup `s`
//! plus zero-mean normal noise with unknown sd `σ`. The joint posterior over
//! `(s, σ)` is evaluated on a deterministic grid and `σ` is summed out, which
//! leaves a discrete marginal over `s` that all decisions are read from.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use log::warn;

use crate::dataio::PairedSpeedups;
use crate::numkernel::Dist;
use crate::par::{map_indexed, Execution};
use crate::{Error, Result};

/// Outermost grid point on either side of zero.
pub const S_LIMIT: f64 = 0.999;

// ---------------------------------------------------------------------------
// Priors
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PriorKind {
    Uniform,
    CenteredNormal,
    ShiftedNormal,
}

impl PriorKind {
    pub const ALL: [PriorKind; 3] =
        [PriorKind::Uniform, PriorKind::CenteredNormal, PriorKind::ShiftedNormal];

    pub fn name(self) -> &'static str {
        match self {
            PriorKind::Uniform => "uniform",
            PriorKind::CenteredNormal => "centered",
            PriorKind::ShiftedNormal => "shifted",
        }
    }

    pub fn needs_bench(self) -> bool {
        self != PriorKind::Uniform
    }
}

impl fmt::Display for PriorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PriorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" | "u" => Ok(PriorKind::Uniform),
            "centered" | "centered_normal" | "c" => Ok(PriorKind::CenteredNormal),
            "shifted" | "shifted_normal" | "s" => Ok(PriorKind::ShiftedNormal),
            other => Err(Error::Input(format!("unknown prior kind `{other}`"))),
        }
    }
}

/// Prior over inverse speedup, always supported on (-1, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct PriorSpec {
    kind: PriorKind,
    mu: f64,
    sigma: f64,
    dist: Dist,
}

impl PriorSpec {
    pub fn uniform() -> Self {
        PriorSpec {
            kind: PriorKind::Uniform,
            mu: 0.0,
            sigma: 0.0,
            dist: Dist::uniform(-1.0, 1.0).expect("valid bounds"),
        }
    }

    pub fn centered(sigma: f64) -> Result<Self> {
        Self::normal(PriorKind::CenteredNormal, 0.0, sigma)
    }

    /// A normal prior around `mu`; means outside the grid are pulled in to
    /// the outermost grid point.
    pub fn shifted(mu: f64, sigma: f64) -> Result<Self> {
        if !mu.is_finite() {
            return Err(Error::DegeneratePrior(format!("prior mean {mu}")));
        }
        let clamped = mu.clamp(-S_LIMIT, S_LIMIT);
        if clamped != mu {
            warn!("shifted prior mean {mu} clamped to {clamped}");
        }
        Self::normal(PriorKind::ShiftedNormal, clamped, sigma)
    }

    fn normal(kind: PriorKind, mu: f64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::DegeneratePrior(format!("{kind} prior with sd {sigma}")));
        }
        let dist = Dist::truncated_normal(mu, sigma, -1.0, 1.0)?;
        Ok(PriorSpec { kind, mu, sigma, dist })
    }

    pub fn kind(&self) -> PriorKind {
        self.kind
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// Scale of the normal priors; 0 for the uniform one.
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// The same prior for the swapped language pair.
    pub fn mirrored(&self) -> Self {
        match self.kind {
            PriorKind::ShiftedNormal => Self::normal(self.kind, -self.mu, self.sigma).unwrap(),
            _ => self.clone(),
        }
    }

    pub fn density(&self, s: f64) -> f64 {
        self.log_density(s).exp()
    }

    pub fn log_density(&self, s: f64) -> f64 {
        self.dist.log_density(s)
    }
}

impl fmt::Display for PriorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            PriorKind::Uniform => write!(f, "U(-1, 1)"),
            _ => write!(f, "N({:.3}, {:.3}) on (-1, 1)", self.mu, self.sigma),
        }
    }
}

/// Builds a prior of the given kind from the bench speedups of the same pair.
pub fn make_prior(kind: PriorKind, bench: Option<&PairedSpeedups>) -> Result<PriorSpec> {
    if kind == PriorKind::Uniform {
        return Ok(PriorSpec::uniform());
    }
    let values = match bench {
        Some(b) if !b.is_empty() => &b.values,
        _ => return Err(Error::PriorData(format!("{kind} prior needs bench speedups"))),
    };
    match kind {
        PriorKind::CenteredNormal => {
            let sigma = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            PriorSpec::centered(sigma)
        }
        PriorKind::ShiftedNormal => {
            let n = values.len() as f64;
            if values.len() < 2 {
                return Err(Error::DegeneratePrior("one bench task gives no spread".into()));
            }
            let mean = values.iter().sum::<f64>() / n;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let sd = var.sqrt();
            // identical bench values leave only rounding noise in the sum
            if sd <= 1e-12 {
                return Err(Error::DegeneratePrior("bench speedups have no spread".into()));
            }
            PriorSpec::shifted(mean, sd)
        }
        PriorKind::Uniform => unreachable!(),
    }
}

// ---------------------------------------------------------------------------
// Grid
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SigmaGrid {
    LogSpaced { n: usize, lo: f64, hi: f64 },
    /// Noise sd known; no σ prior is applied.
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub n_s: usize,
    pub sigma: SigmaGrid,
    pub execution: Execution,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            n_s: 1999,
            sigma: SigmaGrid::LogSpaced { n: 200, lo: 1e-3, hi: 2.0 },
            execution: Execution::default(),
        }
    }
}

impl GridSpec {
    /// Parses `<n_s>x<n_sigma>`, keeping the default σ range.
    pub fn parse_dims(text: &str) -> Result<Self> {
        let bad = || Error::Input(format!("grid `{text}` is not of the form 1999x200"));
        let (a, b) = text.split_once(['x', 'X']).ok_or_else(bad)?;
        let n_s = a.trim().parse().map_err(|_| bad())?;
        let n = b.trim().parse().map_err(|_| bad())?;
        let spec = GridSpec {
            n_s,
            sigma: SigmaGrid::LogSpaced { n, lo: 1e-3, hi: 2.0 },
            ..GridSpec::default()
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_s < 3 {
            return Err(Error::domain(format!("need at least 3 speedup grid points, got {}", self.n_s)));
        }
        match self.sigma {
            SigmaGrid::LogSpaced { n, lo, hi } => {
                if n < 2 || !(lo > 0.0 && hi > lo && hi.is_finite()) {
                    return Err(Error::domain(format!("bad sigma grid: {n} points on [{lo}, {hi}]")));
                }
            }
            SigmaGrid::Fixed(v) => {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::domain(format!("fixed sigma {v}")));
                }
            }
        }
        Ok(())
    }

    /// Speedup grid points, uniform on [-S_LIMIT, S_LIMIT] and symmetric
    /// about zero.
    pub fn s_points(&self) -> Vec<f64> {
        let last = (self.n_s - 1) as f64;
        (0..self.n_s)
            .map(|i| {
                // build from both ends so the grid is exactly mirror-symmetric
                let j = self.n_s - 1 - i;
                if i <= j {
                    -S_LIMIT + 2.0 * S_LIMIT * i as f64 / last
                } else {
                    S_LIMIT - 2.0 * S_LIMIT * j as f64 / last
                }
            })
            .collect()
    }

    pub fn s_step(&self) -> f64 {
        2.0 * S_LIMIT / (self.n_s - 1) as f64
    }

    /// σ nodes with their log weights: quadrature weight in log σ plus the
    /// half-normal(0, 1) prior. A fixed σ gets weight 1.
    pub fn sigma_nodes(&self) -> Vec<(f64, f64)> {
        match self.sigma {
            SigmaGrid::Fixed(v) => vec![(v, 0.0)],
            SigmaGrid::LogSpaced { n, lo, hi } => {
                let prior = Dist::half_normal(1.0).expect("unit scale");
                let (a, b) = (lo.ln(), hi.ln());
                (0..n)
                    .map(|j| {
                        let ls = a + (b - a) * j as f64 / (n - 1) as f64;
                        let sigma = ls.exp();
                        // dσ = σ d(log σ)
                        (sigma, prior.log_density(sigma) + ls)
                    })
                    .collect()
            }
        }
    }
}

/// Discrete marginal posterior over inverse speedup.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorGrid {
    s_points: Vec<f64>,
    mass: Vec<f64>,
    prior: PriorSpec,
    n_obs: usize,
    grid: GridSpec,
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub fn grid_posterior(data: &[f64], prior: &PriorSpec, grid: &GridSpec) -> Result<PosteriorGrid> {
    grid.validate()?;
    if data.is_empty() {
        return Err(Error::domain("no speedup observations"));
    }
    if let Some(d) = data.iter().find(|d| !d.is_finite()) {
        return Err(Error::domain(format!("non-finite speedup {d}")));
    }
    let n = data.len() as f64;
    let mean = data.iter().sum::<f64>() / n;
    let ss: f64 = data.iter().map(|d| (d - mean).powi(2)).sum();

    // Π N(d_i - s; 0, σ) = σ^-n exp(-(n (s - d̄)² + SS) / 2σ²) up to a constant
    let nodes: Vec<(f64, f64)> = grid
        .sigma_nodes()
        .into_iter()
        .map(|(sigma, lw)| {
            let inv = 0.5 / (sigma * sigma);
            (lw - n * sigma.ln() - ss * inv, n * inv)
        })
        .collect();

    let s_points = grid.s_points();
    let log_post = map_indexed(grid.execution, s_points.len(), |i| {
        let s = s_points[i];
        let q = (s - mean).powi(2);
        let terms: Vec<f64> = nodes.iter().map(|(c, a)| c - a * q).collect();
        log_sum_exp(&terms) + prior.log_density(s)
    });
    let z = log_sum_exp(&log_post);
    if !z.is_finite() {
        return Err(Error::NoPosterior);
    }
    let mut mass: Vec<f64> = log_post.iter().map(|l| (l - z).exp()).collect();
    let total: f64 = mass.iter().sum();
    mass.iter_mut().for_each(|m| *m /= total);
    Ok(PosteriorGrid { s_points, mass, prior: prior.clone(), n_obs: data.len(), grid: *grid })
}

impl PosteriorGrid {
    pub fn s_points(&self) -> &[f64] {
        &self.s_points
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn prior(&self) -> &PriorSpec {
        &self.prior
    }

    pub fn n_obs(&self) -> usize {
        self.n_obs
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn step(&self) -> f64 {
        self.grid.s_step()
    }

    pub fn mean(&self) -> f64 {
        self.s_points.iter().zip(&self.mass).map(|(s, m)| s * m).sum()
    }

    pub fn sd(&self) -> f64 {
        let mean = self.mean();
        let var: f64 = self.s_points.iter().zip(&self.mass).map(|(s, m)| m * (s - mean).powi(2)).sum();
        var.sqrt()
    }

    pub fn median(&self) -> f64 {
        interval_endpoint(self, 0.5)
    }

    /// Left edge of cell `i`.
    fn edge(&self, i: usize) -> f64 {
        self.s_points[0] - 0.5 * self.step() + i as f64 * self.step()
    }
}

/// Speedup below which the posterior puts probability `prob`.
///
/// Each grid mass is spread uniformly over a cell of one grid step centred
/// on its point, so the CDF is piecewise linear between cell edges and a
/// symmetric posterior gives exactly symmetric endpoints.
pub fn interval_endpoint(g: &PosteriorGrid, prob: f64) -> f64 {
    let prob = prob.clamp(0.0, 1.0);
    let mut cum = 0.0;
    for (i, &m) in g.mass.iter().enumerate() {
        if cum + m >= prob && m > 0.0 {
            let frac = ((prob - cum) / m).clamp(0.0, 1.0);
            return g.edge(i) + frac * g.step();
        }
        cum += m;
    }
    g.edge(g.mass.len())
}

/// Posterior probability that the speedup is below `x`.
pub fn prob_below(g: &PosteriorGrid, x: f64) -> f64 {
    let n = g.mass.len();
    if x <= g.edge(0) {
        return 0.0;
    }
    if x >= g.edge(n) {
        return 1.0;
    }
    let k = (((x - g.edge(0)) / g.step()).floor() as usize).min(n - 1);
    let below: f64 = g.mass[..k].iter().sum();
    let frac = ((x - g.edge(k)) / g.step()).clamp(0.0, 1.0);
    (below + frac * g.mass[k]).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Verdict {
    Lang1Faster,
    Lang2Faster,
    Inconclusive,
}

impl Verdict {
    pub fn name(self) -> &'static str {
        match self {
            Verdict::Lang1Faster => "lang1_faster",
            Verdict::Lang2Faster => "lang2_faster",
            Verdict::Inconclusive => "inconclusive",
        }
    }

    pub fn swapped(self) -> Self {
        match self {
            Verdict::Lang1Faster => Verdict::Lang2Faster,
            Verdict::Lang2Faster => Verdict::Lang1Faster,
            Verdict::Inconclusive => Verdict::Inconclusive,
        }
    }

    pub fn is_significant(self) -> bool {
        self != Verdict::Inconclusive
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub verdict: Verdict,
    /// Interval endpoint closest to zero, or 0 when the interval covers it.
    pub endpoint: f64,
}

fn check_level(level: f64) -> Result<()> {
    if level > 0.5 && level < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("decision level {level} outside (0.5, 1)")))
    }
}

pub fn decide(g: &PosteriorGrid, level: f64) -> Result<Decision> {
    check_level(level)?;
    let hi = interval_endpoint(g, level);
    let lo = interval_endpoint(g, 1.0 - level);
    Ok(if hi < 0.0 {
        Decision { verdict: Verdict::Lang1Faster, endpoint: hi }
    } else if lo > 0.0 {
        Decision { verdict: Verdict::Lang2Faster, endpoint: lo }
    } else {
        Decision { verdict: Verdict::Inconclusive, endpoint: 0.0 }
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TypeSmBounds {
    /// Bound on the chance of getting the sign wrong; `None` when the
    /// interval covers zero and no sign is claimed.
    pub type_s_bound: Option<f64>,
    pub type_m_width: f64,
}

pub fn type_sm_bounds(g: &PosteriorGrid, level: f64) -> Result<TypeSmBounds> {
    let d = decide(g, level)?;
    let p0 = prob_below(g, 0.0);
    Ok(TypeSmBounds {
        type_s_bound: d.verdict.is_significant().then(|| p0.min(1.0 - p0)),
        type_m_width: interval_endpoint(g, level) - interval_endpoint(g, 1.0 - level),
    })
}

/// Writes the marginal posterior as `s,mass` rows.
pub fn write_grid_csv<W: Write>(g: &PosteriorGrid, mut out: W) -> Result<()> {
    writeln!(out, "s,mass")?;
    for (s, m) in g.s_points.iter().zip(&g.mass) {
        writeln!(out, "{s:.6},{m:.9e}")?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Pairwise comparisons
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseComparison {
    pub lang1: String,
    pub lang2: String,
    pub prior: PriorKind,
    pub endpoint95: f64,
    pub endpoint99: f64,
    pub decision95: Verdict,
    pub decision99: Verdict,
    pub median: f64,
    pub mean: f64,
}

impl PairwiseComparison {
    pub fn from_grid(lang1: &str, lang2: &str, g: &PosteriorGrid) -> Self {
        let d95 = decide(g, 0.95).expect("fixed level");
        let d99 = decide(g, 0.99).expect("fixed level");
        PairwiseComparison {
            lang1: lang1.to_owned(),
            lang2: lang2.to_owned(),
            prior: g.prior.kind(),
            endpoint95: d95.endpoint,
            endpoint99: d99.endpoint,
            decision95: d95.verdict,
            decision99: d99.verdict,
            median: g.median(),
            mean: g.mean(),
        }
    }
}

pub fn compare(
    data: &PairedSpeedups,
    prior: &PriorSpec,
    grid: &GridSpec,
) -> Result<(PairwiseComparison, PosteriorGrid)> {
    let g = grid_posterior(&data.values, prior, grid)?;
    Ok((PairwiseComparison::from_grid(&data.lang1, &data.lang2, &g), g))
}

/// Bench speedups oriented like `data`.
pub fn align_bench(data: &PairedSpeedups, bench: &PairedSpeedups) -> Result<PairedSpeedups> {
    if bench.lang1 == data.lang1 && bench.lang2 == data.lang2 {
        Ok(bench.clone())
    } else if bench.lang1 == data.lang2 && bench.lang2 == data.lang1 {
        Ok(bench.swapped())
    } else {
        Err(Error::PriorData(format!(
            "bench pair {}/{} does not match {}/{}",
            bench.lang1, bench.lang2, data.lang1, data.lang2
        )))
    }
}

#[derive(Debug, Clone)]
pub struct PriorAnalysis {
    pub prior: PriorSpec,
    pub comparison: PairwiseComparison,
    pub grid: PosteriorGrid,
}

#[derive(Debug)]
pub struct SensitivityEntry {
    pub kind: PriorKind,
    pub outcome: Result<PriorAnalysis>,
}

#[derive(Debug)]
pub struct SensitivityReport {
    pub lang1: String,
    pub lang2: String,
    pub entries: Vec<SensitivityEntry>,
    /// Every prior that could be evaluated gave the same decisions at both
    /// levels; needs at least two priors.
    pub data_swamps_prior: bool,
}

impl SensitivityReport {
    pub fn get(&self, kind: PriorKind) -> Option<&SensitivityEntry> {
        self.entries.iter().find(|e| e.kind == kind)
    }

    pub fn successes(&self) -> impl Iterator<Item = &PriorAnalysis> {
        self.entries.iter().filter_map(|e| e.outcome.as_ref().ok())
    }
}

/// Runs the comparison under every prior the available data supports.
/// Failures of individual priors are kept in the report next to the others.
pub fn sensitivity_report(
    data: &PairedSpeedups,
    bench: Option<&PairedSpeedups>,
    grid: &GridSpec,
) -> SensitivityReport {
    let kinds: &[PriorKind] = if bench.is_some() { &PriorKind::ALL } else { &PriorKind::ALL[..1] };
    sensitivity_report_with(data, bench, kinds, grid)
}

/// Like [`sensitivity_report`] but for an explicit list of priors; kinds
/// that need bench data fail individually when it is absent.
pub fn sensitivity_report_with(
    data: &PairedSpeedups,
    bench: Option<&PairedSpeedups>,
    kinds: &[PriorKind],
    grid: &GridSpec,
) -> SensitivityReport {
    let entries: Vec<SensitivityEntry> = kinds
        .iter()
        .map(|&kind| {
            let outcome = (|| {
                let aligned = bench.map(|b| align_bench(data, b)).transpose()?;
                let prior = make_prior(kind, aligned.as_ref())?;
                let (comparison, grid) = compare(data, &prior, grid)?;
                Ok(PriorAnalysis { prior, comparison, grid })
            })();
            if let Err(e) = &outcome {
                warn!("{} vs {} with {kind} prior: {e}", data.lang1, data.lang2);
            }
            SensitivityEntry { kind, outcome }
        })
        .collect();
    let verdicts: Vec<(Verdict, Verdict)> = entries
        .iter()
        .filter_map(|e| e.outcome.as_ref().ok())
        .map(|a| (a.comparison.decision95, a.comparison.decision99))
        .collect();
    let data_swamps_prior = verdicts.len() >= 2 && verdicts.windows(2).all(|w| w[0] == w[1]);
    SensitivityReport { lang1: data.lang1.clone(), lang2: data.lang2.clone(), entries, data_swamps_prior }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(values: Vec<f64>) -> PairedSpeedups {
        let tasks = (0..values.len()).map(|i| format!("t{i}")).collect();
        PairedSpeedups::new("A", "B", tasks, values).unwrap()
    }

    #[test]
    fn priors_from_bench() {
        let u = make_prior(PriorKind::Uniform, None).unwrap();
        for s in [-0.9, 0.0, 0.5] {
            assert!((u.density(s) - 0.5).abs() < 1e-12);
        }
        let bench = pair(vec![-0.3, 0.6]);
        let c = make_prior(PriorKind::CenteredNormal, Some(&bench)).unwrap();
        assert_eq!((c.mu(), c.sigma()), (0.0, 0.6));
        let s = make_prior(PriorKind::ShiftedNormal, Some(&bench)).unwrap();
        assert!((s.mu() - 0.15).abs() < 1e-12);
        assert!((s.sigma() - 0.9 / 2f64.sqrt()).abs() < 1e-12);
        // truncated to (-1, 1) and renormalized
        let step = 1e-4;
        let total: f64 = (0..20_000).map(|i| s.density(-1.0 + (i as f64 + 0.5) * step) * step).sum();
        assert!((total - 1.0).abs() < 1e-6);
    }

    #[test]
    fn prior_errors() {
        assert!(matches!(make_prior(PriorKind::ShiftedNormal, None), Err(Error::PriorData(_))));
        let one = pair(vec![0.2]);
        assert!(matches!(
            make_prior(PriorKind::ShiftedNormal, Some(&one)),
            Err(Error::DegeneratePrior(_))
        ));
        let flat = pair(vec![0.2, 0.2, 0.2]);
        assert!(matches!(
            make_prior(PriorKind::ShiftedNormal, Some(&flat)),
            Err(Error::DegeneratePrior(_))
        ));
        assert!(make_prior(PriorKind::CenteredNormal, Some(&one)).is_ok());
        assert_eq!(PriorSpec::shifted(1.5, 0.1).unwrap().mu(), S_LIMIT);
    }

    #[test]
    fn single_zero_datum_is_symmetric() {
        let g = grid_posterior(&[0.0], &PriorSpec::uniform(), &GridSpec::default()).unwrap();
        assert!(g.median().abs() <= g.step());
        assert!((prob_below(&g, 0.0) - 0.5).abs() < 1e-9);
        let (lo, hi) = (interval_endpoint(&g, 0.05), interval_endpoint(&g, 0.95));
        assert!((lo + hi).abs() < 1e-9);
        let d = decide(&g, 0.95).unwrap();
        assert_eq!(d, Decision { verdict: Verdict::Inconclusive, endpoint: 0.0 });
        assert!(type_sm_bounds(&g, 0.95).unwrap().type_s_bound.is_none());
    }

    #[test]
    fn grid_shape_and_cdf_limits() {
        let spec = GridSpec::default();
        let s = spec.s_points();
        assert_eq!(s.len(), 1999);
        assert_eq!((s[0], s[999], s[1998]), (-S_LIMIT, 0.0, S_LIMIT));
        assert!(s.windows(2).all(|w| w[1] > w[0]));
        let g = grid_posterior(&[-0.4, -0.2, -0.5], &PriorSpec::uniform(), &spec).unwrap();
        assert_eq!(prob_below(&g, 1.0), 1.0);
        assert_eq!(prob_below(&g, -1.0), 0.0);
        let c: Vec<f64> = [0.01, 0.05, 0.5, 0.95, 0.99].iter().map(|&p| interval_endpoint(&g, p)).collect();
        assert!(c.windows(2).all(|w| w[0] <= w[1]));
        // endpoint and CDF are inverse to each other
        for p in [0.01, 0.3, 0.77] {
            assert!((prob_below(&g, interval_endpoint(&g, p)) - p).abs() < 1e-9);
        }
    }

    #[test]
    fn clearly_negative_data_favours_lang1() {
        let data = [-0.6, -0.5, -0.55, -0.7, -0.45, -0.65];
        let g = grid_posterior(&data, &PriorSpec::uniform(), &GridSpec::default()).unwrap();
        for level in [0.95, 0.99] {
            let d = decide(&g, level).unwrap();
            assert_eq!(d.verdict, Verdict::Lang1Faster);
            assert!(d.endpoint < -0.2);
            assert_eq!(d.endpoint, interval_endpoint(&g, level));
        }
        let b = type_sm_bounds(&g, 0.95).unwrap();
        assert!(b.type_s_bound.unwrap() <= 0.05);
        assert!(b.type_m_width > 0.0);
        assert!(decide(&g, 0.4).is_err());
    }

    #[test]
    fn grid_errors() {
        assert!(grid_posterior(&[], &PriorSpec::uniform(), &GridSpec::default()).is_err());
        assert!(GridSpec::parse_dims("1999x200").is_ok());
        assert!(GridSpec::parse_dims("1999").is_err());
        assert!(GridSpec::parse_dims("2x200").is_err());
    }

    #[test]
    fn sensitivity_without_bench_runs_uniform_only() {
        let r = sensitivity_report(&pair(vec![-0.2, 0.1, -0.3]), None, &GridSpec::default());
        assert_eq!(r.entries.len(), 1);
        assert_eq!(r.entries[0].kind, PriorKind::Uniform);
        assert!(!r.data_swamps_prior);
    }

    #[test]
    fn sensitivity_flags_swamping_and_keeps_failures() {
        let data = pair(vec![-0.6, -0.5, -0.55, -0.7, -0.45, -0.65, -0.6, -0.5]);
        let bench = PairedSpeedups::new("B", "A", vec!["x".into(), "y".into()], vec![0.4, 0.6]).unwrap();
        let r = sensitivity_report(&data, Some(&bench), &GridSpec::default());
        assert_eq!(r.entries.len(), 3);
        // bench seen from the other side: mirrored to a negative mean
        let shifted = r.get(PriorKind::ShiftedNormal).unwrap().outcome.as_ref().unwrap();
        assert!((shifted.prior.mu() + 0.5).abs() < 1e-12);
        assert!(r.data_swamps_prior);

        let single = PairedSpeedups::new("A", "B", vec!["x".into()], vec![0.3]).unwrap();
        let r = sensitivity_report(&data, Some(&single), &GridSpec::default());
        assert!(matches!(
            r.get(PriorKind::ShiftedNormal).unwrap().outcome,
            Err(Error::DegeneratePrior(_))
        ));
        assert_eq!(r.successes().count(), 2);
    }

    #[test]
    fn csv_export() {
        let spec = GridSpec { n_s: 5, ..GridSpec::default() };
        let g = grid_posterior(&[0.1], &PriorSpec::uniform(), &spec).unwrap();
        let mut buf = Vec::new();
        write_grid_csv(&g, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 6);
        assert_eq!(lines[0], "s,mass");
        assert!(lines[1].starts_with("-0.999000,"));
    }
}
