use bayesbench::speedup::{
    decide, grid_posterior, interval_endpoint, prob_below, type_sm_bounds, GridSpec, PriorSpec,
    SigmaGrid, Verdict,
};
use proptest::collection::vec;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

fn normal_log_pdf(x: f64, sd: f64) -> f64 {
    -0.5 * (x / sd).powi(2) - sd.ln() - LN_SQRT_2PI
}

fn synthetic(n: usize, seed: u64, centre: f64, spread: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(centre, spread).unwrap();
    (0..n).map(|_| noise.sample(&mut rng).clamp(-0.99, 0.99)).collect()
}

#[test]
fn fixed_sigma_grid_matches_conjugate_update() {
    let data = [0.05, 0.12, 0.31, -0.04, 0.18, 0.09, 0.22, -0.1, 0.15, 0.02];
    let (sigma, prior_sd) = (0.2, 0.5);
    let grid = GridSpec { sigma: SigmaGrid::Fixed(sigma), ..GridSpec::default() };
    let g = grid_posterior(&data, &PriorSpec::centered(prior_sd).unwrap(), &grid).unwrap();

    let precision = prior_sd.powi(-2) + data.len() as f64 / sigma.powi(2);
    let mean = data.iter().sum::<f64>() / sigma.powi(2) / precision;
    let sd = precision.sqrt().recip();
    // far from the truncation points, so truncation is invisible
    assert!(mean.abs() + 10.0 * sd < 1.0);
    assert!((g.mean() - mean).abs() < 1e-3, "{} vs {mean}", g.mean());
    assert!((g.sd() - sd).abs() < 1e-3, "{} vs {sd}", g.sd());
}

#[test]
fn uniform_prior_posterior_is_the_marginal_likelihood() {
    let data = synthetic(12, 5, -0.1, 0.3);
    let grid = GridSpec::default();
    let g = grid_posterior(&data, &PriorSpec::uniform(), &grid).unwrap();
    let nodes = grid.sigma_nodes();
    let mut offsets = Vec::new();
    for (s, m) in g.s_points().iter().zip(g.mass()) {
        if *m < 1e-200 {
            continue;
        }
        // direct product over observations, no sufficient statistics
        let terms: Vec<f64> = nodes
            .iter()
            .map(|(sigma, lw)| lw + data.iter().map(|d| normal_log_pdf(d - s, *sigma)).sum::<f64>())
            .collect();
        let top = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let marginal = top + terms.iter().map(|t| (t - top).exp()).sum::<f64>().ln();
        offsets.push(m.ln() - marginal);
    }
    assert!(offsets.len() > 100);
    let first = offsets[0];
    for o in &offsets {
        assert!((o - first).abs() < 1e-9, "log ratio drifts by {}", o - first);
    }
}

#[test]
fn negated_data_mirrors_the_posterior() {
    let data = synthetic(9, 11, 0.25, 0.2);
    let negated: Vec<f64> = data.iter().map(|d| -d).collect();
    for prior in [PriorSpec::uniform(), PriorSpec::centered(0.6).unwrap()] {
        let g = grid_posterior(&data, &prior, &GridSpec::default()).unwrap();
        let h = grid_posterior(&negated, &prior, &GridSpec::default()).unwrap();
        let n = g.mass().len();
        for i in 0..n {
            let (a, b) = (g.mass()[i], h.mass()[n - 1 - i]);
            assert!((a - b).abs() <= 1e-12 + 1e-9 * a.max(b), "cell {i}: {a} vs {b}");
        }
    }
}

#[test]
fn decisions_flip_with_the_language_order() {
    for (seed, centre) in [(1, -0.3), (2, 0.15), (3, 0.02), (4, 0.5)] {
        let data = synthetic(15, seed, centre, 0.25);
        let negated: Vec<f64> = data.iter().map(|d| -d).collect();
        let prior = PriorSpec::shifted(centre / 2.0 + 0.1, 0.4).unwrap();
        let g = grid_posterior(&data, &prior, &GridSpec::default()).unwrap();
        let h = grid_posterior(&negated, &prior.mirrored(), &GridSpec::default()).unwrap();
        for level in [0.95, 0.99] {
            let (a, b) = (decide(&g, level).unwrap(), decide(&h, level).unwrap());
            assert_eq!(a.verdict, b.verdict.swapped());
            assert!((a.endpoint + b.endpoint).abs() < 1e-9);
        }
    }
}

#[test]
fn refining_the_speedup_grid_barely_moves_endpoints() {
    let coarse = GridSpec::default();
    let fine = GridSpec { n_s: 3999, ..GridSpec::default() };
    let step = coarse.s_step();
    for (seed, centre, n) in [(7, -0.4, 6), (8, 0.1, 30), (9, 0.7, 3)] {
        let data = synthetic(n, seed, centre, 0.2);
        let g = grid_posterior(&data, &PriorSpec::uniform(), &coarse).unwrap();
        let h = grid_posterior(&data, &PriorSpec::uniform(), &fine).unwrap();
        for p in [0.01, 0.05, 0.5, 0.95, 0.99] {
            let (a, b) = (interval_endpoint(&g, p), interval_endpoint(&h, p));
            assert!((a - b).abs() < 2.0 * step, "p={p}: {a} vs {b}");
        }
    }
}

#[test]
fn interval_narrows_with_more_tasks() {
    let widths: Vec<f64> = [10, 100]
        .iter()
        .map(|&n| {
            let data = synthetic(n, 42, -0.2, 0.3);
            let g = grid_posterior(&data, &PriorSpec::uniform(), &GridSpec::default()).unwrap();
            type_sm_bounds(&g, 0.95).unwrap().type_m_width
        })
        .collect();
    assert!(widths[1] < widths[0], "{widths:?}");
}

#[test]
fn sequential_and_parallel_grids_agree() {
    use bayesbench::Execution;
    let data = synthetic(20, 3, 0.1, 0.3);
    let prior = PriorSpec::centered(0.5).unwrap();
    let seq = grid_posterior(&data, &prior, &GridSpec::default().with_execution(Execution::Sequential));
    let par = grid_posterior(&data, &prior, &GridSpec::default().with_execution(Execution::Parallel));
    assert_eq!(seq.unwrap().mass(), par.unwrap().mass());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn grid_mass_is_a_distribution(
        data in vec(-0.98..0.98f64, 1..25),
        kind in 0usize..3,
        mu in -0.9..0.9f64,
        sd in 0.05..1.0f64,
    ) {
        let prior = match kind {
            0 => PriorSpec::uniform(),
            1 => PriorSpec::centered(sd).unwrap(),
            _ => PriorSpec::shifted(mu, sd).unwrap(),
        };
        let g = grid_posterior(&data, &prior, &GridSpec::default()).unwrap();
        prop_assert!((g.mass().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(g.mass().iter().all(|m| *m >= 0.0));
        prop_assert!(g.s_points().windows(2).all(|w| w[1] > w[0]));
        prop_assert_eq!(prob_below(&g, 1.0), 1.0);
        let c: Vec<f64> = [0.01, 0.05, 0.5, 0.95, 0.99].iter().map(|&p| interval_endpoint(&g, p)).collect();
        prop_assert!(c.windows(2).all(|w| w[0] <= w[1]));
        for level in [0.95, 0.99] {
            let d = decide(&g, level).unwrap();
            match d.verdict {
                Verdict::Lang1Faster => prop_assert!(d.endpoint < 0.0),
                Verdict::Lang2Faster => prop_assert!(d.endpoint > 0.0),
                Verdict::Inconclusive => prop_assert_eq!(d.endpoint, 0.0),
            }
        }
    }
}
