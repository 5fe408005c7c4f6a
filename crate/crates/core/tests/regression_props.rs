use bayesbench::dataio::{Ability, Experience, ExperimentRow, ExperimentTable, Lab, System, Treatment};
use bayesbench::inference::{SampleMatrix, SamplerConfig};
use bayesbench::numkernel::Dist;
use bayesbench::regression::{
    bayes_linear_fit, bayes_poisson_fit, log_posterior, log_posterior_gradient, ols_fit, simulate_from_samples,
    DesignMatrix, Model, Predictor, Priors, Scenario,
};
use bayesbench::Execution;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

fn random_design(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DesignMatrix {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let beta: Vec<f64> = (0..p).map(|_| rng.random_range(-3.0..3.0)).collect();
    let mut rows = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let mut row = vec![1.0];
        row.extend((1..p).map(|_| normal.sample(rng)));
        y.push(row.iter().zip(&beta).map(|(x, b)| x * b).sum::<f64>() + 0.7 * normal.sample(rng));
        rows.push(row);
    }
    let names = (0..p).map(|j| if j == 0 { "intercept".into() } else { format!("x{j}") }).collect();
    DesignMatrix::new(names, rows, y).unwrap()
}

/// Estimates and standard errors from (XᵀX)⁻¹Xᵀy, solved with nalgebra.
fn normal_equations(d: &DesignMatrix) -> (Vec<f64>, Vec<f64>) {
    let (n, p) = (d.rows(), d.cols());
    let x = DMatrix::from_fn(n, p, |i, j| d.row(i)[j]);
    let y = DVector::from_column_slice(d.outcome());
    let xtx_inv = (x.transpose() * &x).try_inverse().unwrap();
    let beta = &xtx_inv * x.transpose() * &y;
    let resid = &y - &x * &beta;
    let s2 = resid.norm_squared() / (n - p) as f64;
    let se = (0..p).map(|j| (s2 * xtx_inv[(j, j)]).sqrt()).collect();
    (beta.iter().copied().collect(), se)
}

/// Two-sided Student-t p-value for integer df from the finite trigonometric
/// series for the central probability A(t | df).
fn t_two_sided_closed_form(t: f64, df: u32) -> f64 {
    let theta = (t.abs() / f64::from(df).sqrt()).atan();
    let (s, c) = theta.sin_cos();
    let c2 = c * c;
    let a = if df % 2 == 1 {
        let mut sum = 0.0;
        if df > 1 {
            let mut term = c;
            sum = term;
            let mut k = 1;
            while 2 * k + 1 < df {
                term *= c2 * (2 * k) as f64 / (2 * k + 1) as f64;
                sum += term;
                k += 1;
            }
        }
        std::f64::consts::FRAC_2_PI * (theta + s * sum)
    } else {
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 1;
        while 2 * k < df {
            term *= c2 * (2 * k - 1) as f64 / (2 * k) as f64;
            sum += term;
            k += 1;
        }
        s * sum
    };
    1.0 - a
}

#[test]
fn closed_form_t_oracle_agrees_with_known_values() {
    // df = 1 is Cauchy; df = 2 has P(|T| > t) = 1 - t / sqrt(2 + t²)
    assert!((t_two_sided_closed_form(1.0, 1) - 0.5).abs() < 1e-15);
    let t: f64 = 1.3;
    assert!((t_two_sided_closed_form(t, 2) - (1.0 - t / (2.0 + t * t).sqrt())).abs() < 1e-15);
}

#[test]
fn ols_matches_normal_equations_on_random_designs() {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let mut designs = vec![random_design(&mut rng, 30, 4)];
    for _ in 0..100 {
        let p = rng.random_range(2..7);
        let n = rng.random_range(p + 3..60);
        designs.push(random_design(&mut rng, n, p));
    }
    for d in &designs {
        let fit = ols_fit(d).unwrap();
        let (beta, se) = normal_equations(d);
        assert_eq!(fit.df, d.rows() - d.cols());
        for (j, c) in fit.coefficients.iter().enumerate() {
            assert!((c.estimate - beta[j]).abs() < 1e-10, "{} vs {}", c.estimate, beta[j]);
            assert!((c.std_error - se[j]).abs() < 1e-10);
            assert_eq!(c.ci95_lower, c.estimate - 2.0 * c.std_error);
            assert_eq!(c.ci95_upper, c.estimate + 2.0 * c.std_error);
            let oracle = t_two_sided_closed_form(c.t_statistic, fit.df as u32);
            assert!((c.p_value - oracle).abs() < 1e-9, "t={} df={}", c.t_statistic, fit.df);
        }
    }
}

#[test]
fn printed_least_squares_rows_are_internally_consistent() {
    // (estimate, error, t, p, lower, upper) as printed for the six coefficients;
    // the p-values follow from t with 42 residual degrees of freedom
    let rows: [(f64, f64, f64, f64, f64, f64); 6] = [
        (-1.756, 0.725, -2.422, 0.020, -3.206, -0.306),
        (0.651, 0.330, 1.971, 0.055, -0.010, 1.311),
        (-0.108, 0.332, -0.325, 0.747, -0.772, 0.556),
        (0.413, 0.338, 1.224, 0.228, -0.262, 1.089),
        (0.941, 0.361, 2.607, 0.013, 0.219, 1.663),
        (0.863, 0.297, 2.904, 0.006, 0.269, 1.457),
    ];
    for (est, err, t, p, lo, hi) in rows {
        let p_t = bayesbench::numkernel::student_t_two_sided_p(t, 42.0).unwrap();
        assert!((p_t - p).abs() < 1e-3, "t={t}: {p_t} vs {p}");
        assert!((p_t - t_two_sided_closed_form(t, 42)).abs() < 1e-12);
        assert!((est - 2.0 * err - lo).abs() < 2e-3);
        assert!((est + 2.0 * err - hi).abs() < 2e-3);
    }
}

fn random_table(rng: &mut ChaCha8Rng, n: usize) -> ExperimentTable {
    let rows = (0..n)
        .map(|i| {
            let treatment = Treatment::ALL[rng.random_range(0..2)];
            let experience = Experience::ALL[rng.random_range(0..2)];
            let ability = Ability::ALL[rng.random_range(0..3)];
            let eta = -1.9
                + 0.5 * f64::from(treatment.code())
                + 0.8 * f64::from(experience.code())
                + 0.64 * f64::from(ability.code());
            ExperimentRow {
                subject: format!("s{i}"),
                treatment,
                system: System::ALL[rng.random_range(0..2)],
                lab: Lab::ALL[rng.random_range(0..2)],
                experience,
                ability,
                fixed: Poisson::new(eta.exp()).unwrap().sample(rng) as u32,
            }
        })
        .collect();
    ExperimentTable::new(rows).unwrap()
}

fn assert_gradient_matches(model: Model, d: &DesignMatrix, priors: &Priors, point: &[f64]) {
    let g = log_posterior_gradient(model, d, priors, point).unwrap();
    let mut fd = Vec::with_capacity(point.len());
    for j in 0..point.len() {
        let h = 1e-5 * point[j].abs().max(1.0);
        let mut up = point.to_vec();
        let mut down = point.to_vec();
        up[j] += h;
        down[j] -= h;
        let f = |x: &[f64]| log_posterior(model, d, priors, x).unwrap();
        fd.push((f(&up) - f(&down)) / (2.0 * h));
    }
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = g.iter().zip(&fd).map(|(a, b)| a - b).collect();
    let rel = norm(&diff) / norm(&fd);
    assert!(rel < 1e-4, "{model} at {point:?}: relative error {rel}");
}

#[test]
fn poisson_and_gaussian_gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let table = random_table(&mut rng, 48);
    let dp = DesignMatrix::from_table(&table, &Predictor::POISSON).unwrap();
    let dg = DesignMatrix::from_table(&table, &Predictor::ALL).unwrap();
    let (pp, pg) = (Priors::poisson_default(&dp), Priors::gaussian_default(&dg));
    for _ in 0..10 {
        let beta: Vec<f64> = (0..dp.cols()).map(|_| rng.random_range(-1.0..1.0)).collect();
        assert_gradient_matches(Model::Poisson, &dp, &pp, &beta);
        let mut theta: Vec<f64> = (0..dg.cols()).map(|_| rng.random_range(-2.0..2.0)).collect();
        theta.push(rng.random_range(0.3..3.0));
        assert_gradient_matches(Model::Gaussian, &dg, &pg, &theta);
    }
}

#[test]
fn near_flat_priors_reproduce_least_squares() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let d = random_design(&mut rng, 60, 4);
    let ols = ols_fit(&d).unwrap();
    let priors = Priors {
        coefficients: vec![Dist::normal(0.0, 1e3).unwrap(); d.cols()],
        sigma: Some(Dist::half_normal(1e3).unwrap()),
    };
    let fit = bayes_linear_fit(&d, &priors, &SamplerConfig { seed: 41, ..SamplerConfig::default() }).unwrap();
    for c in &ols.coefficients {
        let p = fit.summary.get(&c.name).unwrap();
        let mcse = p.sd / p.ess.unwrap().sqrt();
        assert!((p.mean - c.estimate).abs() <= 3.0 * mcse, "{}: {} vs {} (mcse {mcse})", c.name, p.mean, c.estimate);
    }
}

#[test]
fn experiment_sized_fits_pass_the_gate_with_default_settings() {
    let mut rng = ChaCha8Rng::seed_from_u64(2018);
    let table = random_table(&mut rng, 48);
    let cfg = SamplerConfig { seed: 5, ..SamplerConfig::default() };
    let dg = DesignMatrix::from_table(&table, &Predictor::ALL).unwrap();
    let g = bayes_linear_fit(&dg, &Priors::gaussian_default(&dg), &cfg).unwrap();
    assert_eq!(g.samples.names().last().unwrap(), "sigma");
    let dp = DesignMatrix::from_table(&table, &Predictor::POISSON).unwrap();
    let p = bayes_poisson_fit(&dp, &Priors::poisson_default(&dp), &cfg).unwrap();
    for s in g.summary.params.iter().chain(&p.summary.params) {
        assert!(s.rhat.unwrap() < 1.05 && s.ess.unwrap() > 100.0, "{s:?}");
    }
    // posterior means follow the data-generating coefficients loosely
    let ability = p.summary.get("ability").unwrap();
    assert!((ability.mean - 0.64).abs() < 3.0 * ability.sd);
}

#[test]
fn intercept_only_counts_recover_the_log_rate() {
    // an all-zero second column leaves the intercept as the only parameter
    // the data inform
    let mut rng = ChaCha8Rng::seed_from_u64(271);
    let n = 200;
    let rate = std::f64::consts::E;
    let y: Vec<f64> = (0..n).map(|_| Poisson::new(rate).unwrap().sample(&mut rng)).collect();
    let d = DesignMatrix::new(
        vec!["intercept".into(), "treatment".into()],
        vec![vec![1.0, 0.0]; n],
        y.clone(),
    )
    .unwrap();
    let priors = Priors::poisson_default(&d);
    let fit = bayes_poisson_fit(&d, &priors, &SamplerConfig { seed: 9, ..SamplerConfig::default() }).unwrap();
    let icpt = fit.summary.get("intercept").unwrap();

    // posterior of the intercept: exp(S·b - n·e^b) · N(b; 0, 5), by quadrature
    let total: f64 = y.iter().sum();
    let log_kernel = |b: f64| total * b - n as f64 * b.exp() - b * b / 50.0;
    let centre = (total / n as f64).ln();
    let (lo, hi, m) = (centre - 1.0, centre + 1.0, 20_000);
    let peak = log_kernel(centre);
    let (mut z, mut first) = (0.0, 0.0);
    for k in 0..=m {
        let b = lo + (hi - lo) * k as f64 / m as f64;
        let w = if k == 0 || k == m { 0.5 } else { 1.0 } * (log_kernel(b) - peak).exp();
        z += w;
        first += w * b;
    }
    let exact_mean = first / z;
    let mcse = icpt.sd / icpt.ess.unwrap().sqrt();
    assert!((icpt.mean - exact_mean).abs() < 3.0 * mcse, "{} vs {exact_mean}", icpt.mean);
    // and the data put the log rate near 1
    assert!((icpt.mean - 1.0).abs() < 4.0 / (n as f64 * rate).sqrt());
    // the zero column's coefficient keeps its prior
    let t = fit.summary.get("treatment").unwrap();
    assert!((t.mean - 0.5).abs() < 4.0 * t.sd / t.ess.unwrap().sqrt());
    assert!((t.sd - 0.8).abs() < 0.1);
}

#[test]
fn printed_count_model_summaries_imply_the_team_gap() {
    // posterior approximated by independent normals at the printed means and
    // errors of the count model; the reference result has the high/manual team
    // fixing about 20% more bugs
    let means = [-1.953, 0.493, 0.800, 0.642];
    let sds = [0.510, 0.254, 0.309, 0.226];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (chains, iters) = (4, 2500);
    let draws: Vec<f64> = (0..chains * iters)
        .flat_map(|_| {
            (0..4)
                .map(|j| Normal::new(means[j], sds[j]).unwrap().sample(&mut rng))
                .collect::<Vec<_>>()
        })
        .collect();
    let names = ["intercept", "treatment", "experience", "ability"].map(String::from).to_vec();
    let samples = SampleMatrix::new(chains, iters, names, draws, 1, vec![1.0; chains]).unwrap();
    let low_auto = Scenario { ability_mix: [0.8, 0.1, 0.1], treatment_mix: [0.1, 0.9], experience_mix: [0.5, 0.5] };
    let high_manual = Scenario { ability_mix: [0.4, 0.4, 0.2], treatment_mix: [0.5, 0.5], experience_mix: [0.5, 0.5] };
    let a = simulate_from_samples(&samples, &low_auto, 100_000, 7, Execution::Parallel).unwrap();
    let b = simulate_from_samples(&samples, &high_manual, 100_000, 8, Execution::Parallel).unwrap();
    let ratio = b.mean_fixed / a.mean_fixed;
    assert!((ratio - 1.20).abs() < 0.05, "ratio {ratio}");
}
