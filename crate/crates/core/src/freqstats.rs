//! Rank-based tests, Cliff's delta and family-wise p-value adjustment.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use log::warn;

use crate::numkernel::{std_normal_cdf, std_normal_sf, Dist};
use crate::par::{map_indexed, Execution};
use crate::{Error, Result};

/// Largest tie-free sample for which the Wilcoxon null is computed exactly.
pub const WILCOXON_EXACT_MAX_N: usize = 20;

/// Below this many pooled observations the chi-square approximation to the
/// Kruskal-Wallis statistic is rough; we still use it but say so.
const KRUSKAL_SMALL_N: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub method: &'static str,
    pub n_effective: usize,
}

/// Average ranks (1-based) of `values`, plus the size of every tie group.
fn average_ranks(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let rank = 0.5 * ((i + 1) + j) as f64;
        for &k in &order[i..j] {
            ranks[k] = rank;
        }
        if j - i > 1 {
            ties.push(j - i);
        }
        i = j;
    }
    (ranks, ties)
}

fn tie_sum(ties: &[usize]) -> f64 {
    ties.iter().map(|&t| (t * t * t - t) as f64).sum()
}

/// Null distribution of W+ for ranks 1..=n: counts[w] = number of sign
/// assignments with positive-rank sum w.
fn signed_rank_counts(n: usize) -> Vec<u64> {
    let max = n * (n + 1) / 2;
    let mut counts = vec![0u64; max + 1];
    counts[0] = 1;
    for r in 1..=n {
        for w in (r..=r * (r + 1) / 2).rev() {
            counts[w] += counts[w - r];
        }
    }
    counts
}

fn two_sided(lower: f64, upper: f64) -> f64 {
    (2.0 * lower.min(upper)).clamp(f64::MIN_POSITIVE, 1.0)
}

/// Two-sided Wilcoxon signed-rank test on the paired differences `x - y`.
///
/// Zero differences are dropped. With at most 20 remaining differences and
/// no ties in their magnitudes the null distribution is exact; otherwise a
/// tie- and continuity-corrected normal approximation is used.
pub fn wilcoxon_signed_rank(x: &[f64], y: &[f64]) -> Result<TestResult> {
    if x.len() != y.len() || x.is_empty() {
        return Err(Error::Pairing(x.len(), y.len()));
    }
    let diffs: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    if let Some(d) = diffs.iter().find(|d| !d.is_finite()) {
        return Err(Error::domain(format!("non-finite paired difference {d}")));
    }
    signed_rank_of_differences(&diffs)
}

/// Signed-rank test on precomputed differences.
pub fn signed_rank_of_differences(diffs: &[f64]) -> Result<TestResult> {
    let nonzero: Vec<f64> = diffs.iter().copied().filter(|d| *d != 0.0).collect();
    let n = nonzero.len();
    if n == 0 {
        return Err(Error::DegenerateData("all paired differences are zero".into()));
    }
    let magnitudes: Vec<f64> = nonzero.iter().map(|d| d.abs()).collect();
    let (ranks, ties) = average_ranks(&magnitudes);
    let w_plus: f64 = nonzero
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| r)
        .sum();

    if n <= WILCOXON_EXACT_MAX_N && ties.is_empty() {
        let counts = signed_rank_counts(n);
        // ranks are integers here, so w_plus is exact
        let w = w_plus as usize;
        let total = (1u64 << n) as f64;
        let lower: u64 = counts[..=w].iter().sum();
        let upper: u64 = counts[w..].iter().sum();
        return Ok(TestResult {
            statistic: w_plus,
            p_value: two_sided(lower as f64 / total, upper as f64 / total),
            method: "wilcoxon signed-rank (exact)",
            n_effective: n,
        });
    }

    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_sum(&ties) / 48.0;
    let dev = w_plus - mean;
    // f64::signum maps 0 to 1, which would push a centred statistic off zero
    let continuity = if dev == 0.0 { 0.0 } else { 0.5 * dev.signum() };
    let z = (dev - continuity) / var.sqrt();
    Ok(TestResult {
        statistic: w_plus,
        p_value: two_sided(std_normal_cdf(z), std_normal_sf(z)),
        method: "wilcoxon signed-rank (normal approximation)",
        n_effective: n,
    })
}

/// Cliff's delta: P(x > y) - P(x < y) over all cross pairs. Negative when
/// `x` tends to be smaller (the first language is faster).
pub fn cliffs_delta(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::domain("cliffs_delta needs two nonempty samples"));
    }
    let mut sorted = y.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut score: i64 = 0;
    for &xi in x {
        let below = sorted.partition_point(|&v| v < xi);
        let above = sorted.len() - sorted.partition_point(|&v| v <= xi);
        score += below as i64 - above as i64;
    }
    Ok(score as f64 / (x.len() * y.len()) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Correction {
    None,
    Bonferroni,
    Holm,
    BenjaminiHochberg,
}

impl Correction {
    pub const ALL: [Correction; 4] = [
        Correction::None,
        Correction::Bonferroni,
        Correction::Holm,
        Correction::BenjaminiHochberg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Correction::None => "none",
            Correction::Bonferroni => "bonferroni",
            Correction::Holm => "holm",
            Correction::BenjaminiHochberg => "bh",
        }
    }
}

impl fmt::Display for Correction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Correction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "none" => Correction::None,
            "bonferroni" => Correction::Bonferroni,
            "holm" => Correction::Holm,
            "bh" | "benjamini_hochberg" | "fdr" => Correction::BenjaminiHochberg,
            other => return Err(Error::Unsupported(format!("correction `{other}`"))),
        })
    }
}

/// Adjusts `ps` for multiple comparisons. Output order matches input.
pub fn adjust_pvalues(ps: &[f64], method: Correction) -> Result<Vec<f64>> {
    if let Some(p) = ps.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::domain(format!("p-value {p} outside [0, 1]")));
    }
    let m = ps.len() as f64;
    let mut order: Vec<usize> = (0..ps.len()).collect();
    order.sort_by(|&a, &b| ps[a].total_cmp(&ps[b]));
    let mut out = vec![0.0; ps.len()];
    match method {
        Correction::None => out.copy_from_slice(ps),
        Correction::Bonferroni => {
            for (o, p) in out.iter_mut().zip(ps) {
                *o = (p * m).min(1.0);
            }
        }
        Correction::Holm => {
            let mut running = 0.0f64;
            for (i, &k) in order.iter().enumerate() {
                running = running.max((ps[k] * (m - i as f64)).min(1.0));
                out[k] = running;
            }
        }
        Correction::BenjaminiHochberg => {
            let mut running = 1.0f64;
            for (i, &k) in order.iter().enumerate().rev() {
                running = running.min(ps[k] * m / (i + 1) as f64);
                out[k] = running;
            }
        }
    }
    Ok(out)
}

/// Kruskal-Wallis H test with tie correction and a chi-square(k-1) tail.
pub fn kruskal_wallis<S: AsRef<[f64]>>(groups: &[S]) -> Result<TestResult> {
    if groups.len() < 2 {
        return Err(Error::domain(format!(
            "Kruskal-Wallis needs at least 2 groups, got {}",
            groups.len()
        )));
    }
    if groups.iter().any(|g| g.as_ref().is_empty()) {
        return Err(Error::domain("Kruskal-Wallis groups must be nonempty"));
    }
    let pooled: Vec<f64> = groups.iter().flat_map(|g| g.as_ref().iter().copied()).collect();
    if let Some(v) = pooled.iter().find(|v| v.is_nan()) {
        return Err(Error::domain(format!("Kruskal-Wallis input contains {v}")));
    }
    let n = pooled.len();
    if n < KRUSKAL_SMALL_N {
        warn!("Kruskal-Wallis on {n} observations: chi-square approximation is rough");
    }
    let (ranks, ties) = average_ranks(&pooled);
    let nf = n as f64;
    let correction = 1.0 - tie_sum(&ties) / (nf * nf * nf - nf);
    if correction <= 0.0 {
        return Err(Error::DegenerateData("all observations are identical".into()));
    }
    let mut offset = 0;
    let mut sum = 0.0;
    for g in groups {
        let len = g.as_ref().len();
        let r: f64 = ranks[offset..offset + len].iter().sum();
        sum += r * r / len as f64;
        offset += len;
    }
    let h = ((12.0 / (nf * (nf + 1.0)) * sum - 3.0 * (nf + 1.0)) / correction).max(0.0);
    let chi = Dist::chi_square((groups.len() - 1) as f64)?;
    Ok(TestResult {
        statistic: h,
        p_value: chi.sf(h).clamp(f64::MIN_POSITIVE, 1.0),
        method: "kruskal-wallis (chi-square approximation)",
        n_effective: n,
    })
}

/// Pairwise signed-rank tests between index-paired groups, jointly adjusted
/// with Benjamini-Hochberg. Keys are `(first, second)` in input order.
///
/// A pair whose paired differences are all zero cannot be told apart and
/// is reported with p = 1 rather than failing the whole table.
pub fn pairwise_wilcoxon_posthoc<S: AsRef<[f64]> + Sync>(
    groups: &[(String, S)],
) -> Result<BTreeMap<(String, String), f64>> {
    pairwise_wilcoxon_posthoc_with(groups, Execution::default())
}

pub fn pairwise_wilcoxon_posthoc_with<S: AsRef<[f64]> + Sync>(
    groups: &[(String, S)],
    exec: Execution,
) -> Result<BTreeMap<(String, String), f64>> {
    if groups.len() < 2 {
        return Err(Error::domain("post-hoc comparison needs at least 2 groups"));
    }
    for (i, (name, _)) in groups.iter().enumerate() {
        if groups[..i].iter().any(|(other, _)| other == name) {
            return Err(Error::Input(format!("duplicate group name `{name}`")));
        }
    }
    let pairs: Vec<(usize, usize)> = (0..groups.len())
        .flat_map(|i| (i + 1..groups.len()).map(move |j| (i, j)))
        .collect();
    let raw = map_indexed(exec, pairs.len(), |k| {
        let (i, j) = pairs[k];
        let (a, b) = (&groups[i], &groups[j]);
        match wilcoxon_signed_rank(a.1.as_ref(), b.1.as_ref()) {
            Ok(t) => Ok(t.p_value),
            Err(Error::DegenerateData(_)) => Ok(1.0),
            Err(e) => Err(e.context(format!("pair ({}, {})", a.0, b.0))),
        }
    });
    let raw: Vec<f64> = raw.into_iter().collect::<Result<_>>()?;
    let adjusted = adjust_pvalues(&raw, Correction::BenjaminiHochberg)?;
    Ok(pairs
        .iter()
        .zip(adjusted)
        .map(|(&(i, j), p)| ((groups[i].0.clone(), groups[j].0.clone()), p))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn wilcoxon_small_exact_cases() {
        let r = wilcoxon_signed_rank(&[1.0, -1.0], &[0.0, 0.0]).unwrap();
        assert_eq!(r.p_value, 1.0);
        let r = wilcoxon_signed_rank(&[1.0, 2.0, 3.0, 4.0, 5.0], &[0.0; 5]).unwrap();
        assert_eq!(r.p_value, 0.0625);
        assert_eq!(r.statistic, 15.0);
        assert!(r.method.contains("exact"));
        let r = wilcoxon_signed_rank(&[1.0, 0.0, 2.0], &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(r.n_effective, 2);
    }

    #[test]
    fn wilcoxon_errors() {
        assert!(matches!(
            wilcoxon_signed_rank(&[1.0, 2.0], &[1.0, 2.0]),
            Err(Error::DegenerateData(_))
        ));
        assert!(matches!(wilcoxon_signed_rank(&[1.0], &[1.0, 2.0]), Err(Error::Pairing(1, 2))));
    }

    #[test]
    fn wilcoxon_normal_approximation_with_ties() {
        // differences 1,1,2,-3,4,5,6,7 with a tie -> approximation path;
        // reference from a hand computation of the tie-corrected statistic
        let d = [1.0, 1.0, 2.0, -3.0, 4.0, 5.0, 6.0, 7.0];
        let r = signed_rank_of_differences(&d).unwrap();
        assert!(r.method.contains("normal"));
        // ranks 1.5,1.5,3,4,5,6,7,8; W+ = 32
        assert_eq!(r.statistic, 32.0);
        let var = 8.0 * 9.0 * 17.0 / 24.0 - 6.0 / 48.0;
        let z = (32.0 - 18.0 - 0.5) / f64::sqrt(var);
        assert!(close(r.p_value, 2.0 * std_normal_sf(z), 1e-15));
    }

    #[test]
    fn exact_null_counts_sum_to_power_of_two() {
        for n in 1..=20 {
            let c = signed_rank_counts(n);
            assert_eq!(c.iter().sum::<u64>(), 1u64 << n);
            // symmetric about n(n+1)/4
            let m = c.len() - 1;
            assert!((0..=m).all(|w| c[w] == c[m - w]));
        }
    }

    #[test]
    fn cliffs_delta_cases() {
        assert_eq!(cliffs_delta(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert_eq!(cliffs_delta(&[1.0, 2.0], &[3.0, 4.0]).unwrap(), -1.0);
        assert_eq!(cliffs_delta(&[1.0, 4.0], &[2.0, 3.0]).unwrap(), 0.0);
        assert!(cliffs_delta(&[], &[1.0]).is_err());
    }

    #[test]
    fn adjustment_examples() {
        let ps = [0.01, 0.02, 0.03];
        let b = adjust_pvalues(&ps, Correction::Bonferroni).unwrap();
        let h = adjust_pvalues(&ps, Correction::Holm).unwrap();
        let bh = adjust_pvalues(&ps, Correction::BenjaminiHochberg).unwrap();
        for (got, want) in b.iter().zip([0.03, 0.06, 0.09]) {
            assert!(close(*got, want, 1e-15));
        }
        for (got, want) in h.iter().zip([0.03, 0.04, 0.04]) {
            assert!(close(*got, want, 1e-15));
        }
        for (got, want) in bh.iter().zip([0.03, 0.03, 0.03]) {
            assert!(close(*got, want, 1e-15));
        }
        assert!(adjust_pvalues(&[0.5, 1.2], Correction::None).is_err());
        assert_eq!("BH".parse::<Correction>().unwrap(), Correction::BenjaminiHochberg);
    }

    #[test]
    fn kruskal_wallis_cases() {
        let r = kruskal_wallis(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert!(close(r.statistic, 2.4, 1e-12));
        assert!(close(r.p_value, 0.121_335_250_358_482_15, 1e-12));
        let r = kruskal_wallis(&[vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]]).unwrap();
        assert_eq!((r.statistic, r.p_value), (0.0, 1.0));
        assert!(kruskal_wallis(&[vec![1.0]]).is_err());
        assert!(matches!(
            kruskal_wallis(&[vec![2.0, 2.0], vec![2.0]]),
            Err(Error::DegenerateData(_))
        ));
    }

    #[test]
    fn posthoc_shapes() {
        let g = |n: &str, v: Vec<f64>| (n.to_owned(), v);
        let two = [g("a", vec![1.0, 2.0, 3.0]), g("b", vec![2.0, 4.0, 7.0])];
        let out = pairwise_wilcoxon_posthoc(&two).unwrap();
        let raw = wilcoxon_signed_rank(&two[0].1, &two[1].1).unwrap().p_value;
        assert_eq!(out[&("a".into(), "b".into())], raw);

        let same = [g("a", vec![1.0, 2.0]), g("b", vec![1.0, 2.0]), g("c", vec![1.0, 2.0])];
        let out = pairwise_wilcoxon_posthoc(&same).unwrap();
        assert!(out.values().all(|&p| p == 1.0));

        let eight: Vec<_> = (0..8)
            .map(|i| g(&format!("l{i}"), (0..6).map(|t| (t * (i + 1)) as f64 + 0.1 * i as f64).collect()))
            .collect();
        let seq = pairwise_wilcoxon_posthoc_with(&eight, Execution::Sequential).unwrap();
        let par = pairwise_wilcoxon_posthoc_with(&eight, Execution::Parallel).unwrap();
        assert_eq!(seq.len(), 28);
        assert_eq!(seq, par);

        let bad = [g("a", vec![1.0, 2.0]), g("b", vec![1.0])];
        let err = pairwise_wilcoxon_posthoc(&bad).unwrap_err();
        assert!(err.to_string().contains("(a, b)"), "{err}");
    }
}
