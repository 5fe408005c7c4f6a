//! Pairwise language comparisons turned into relationship graphs and
//! lower-triangular tables, plus the per-pair orchestration both pipelines
//! share.
//!
//! Graph edges always point from the slower language to the faster one.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::str::FromStr;

use log::warn;

use crate::dataio::{complete_task_matrix, paired_optimal_runtimes, paired_speedups, PerformanceDataset};
use crate::freqstats::{
    adjust_pvalues, cliffs_delta, kruskal_wallis, pairwise_wilcoxon_posthoc_with, wilcoxon_signed_rank,
    Correction, TestResult,
};
use crate::inference::sorted_quantile;
use crate::par::{map_indexed, Execution};
use crate::speedup::{sensitivity_report_with, GridSpec, PairwiseComparison, PriorKind, SensitivityReport, Verdict};
use crate::{Error, Result};

/// Language pairs `(a, b)` with `a < b`, in lexicographic order.
fn sorted_pairs(languages: &[&str]) -> Vec<(String, String)> {
    let mut langs: Vec<&str> = languages.to_vec();
    langs.sort_unstable();
    langs.dedup();
    let mut out = Vec::new();
    for (i, a) in langs.iter().enumerate() {
        for b in &langs[i + 1..] {
            out.push((a.to_string(), b.to_string()));
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Frequentist pipeline
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct FreqPairRecord {
    pub lang1: String,
    pub lang2: String,
    pub n_tasks: usize,
    pub p_value: f64,
    pub p_adjusted: f64,
    pub cliffs_delta: f64,
    pub median_speedup: f64,
    pub mean_speedup: f64,
}

/// p-value thresholds for the two edge strengths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelRules {
    pub weak: f64,
    pub strong: f64,
}

impl Default for LevelRules {
    fn default() -> Self {
        LevelRules { weak: 0.05, strong: 0.01 }
    }
}

impl FreqPairRecord {
    pub fn verdict(&self, rules: LevelRules) -> PairVerdict {
        let direction = if self.cliffs_delta < 0.0 {
            Verdict::Lang1Faster
        } else if self.cliffs_delta > 0.0 {
            Verdict::Lang2Faster
        } else {
            Verdict::Inconclusive
        };
        let at = |alpha: f64| if self.p_adjusted < alpha { direction } else { Verdict::Inconclusive };
        PairVerdict {
            lang1: self.lang1.clone(),
            lang2: self.lang2.clone(),
            weak: at(rules.weak),
            strong: at(rules.strong),
            weight: self.cliffs_delta.abs(),
        }
    }

    pub fn table_record(&self) -> TableRecord {
        TableRecord {
            lang1: self.lang1.clone(),
            lang2: self.lang2.clone(),
            measures: vec![
                ("p".into(), self.p_value),
                ("p_adj".into(), self.p_adjusted),
                ("delta".into(), self.cliffs_delta),
                ("median".into(), self.median_speedup),
                ("mean".into(), self.mean_speedup),
            ],
        }
    }
}

/// Signed-rank test, Cliff's delta and speedup summaries for every language
/// pair sharing at least one task, with p-values adjusted jointly.
pub fn frequentist_pairs(
    ds: &PerformanceDataset,
    correction: Correction,
    exec: Execution,
) -> Result<Vec<FreqPairRecord>> {
    let pairs = sorted_pairs(&ds.languages());
    let raw = map_indexed(exec, pairs.len(), |k| {
        let (l1, l2) = &pairs[k];
        let (_, x, y) = match paired_optimal_runtimes(ds, l1, l2) {
            Err(Error::EmptyComparison(..)) => return Ok(None),
            other => other?,
        };
        let p = match wilcoxon_signed_rank(&x, &y) {
            Ok(TestResult { p_value, .. }) => p_value,
            Err(Error::DegenerateData(_)) => 1.0,
            Err(e) => return Err(e.context(format!("{l1} vs {l2}"))),
        };
        let mut iota = paired_speedups(ds, l1, l2)?.values;
        let mean = iota.iter().sum::<f64>() / iota.len() as f64;
        iota.sort_by(f64::total_cmp);
        Ok(Some(FreqPairRecord {
            lang1: l1.clone(),
            lang2: l2.clone(),
            n_tasks: x.len(),
            p_value: p,
            p_adjusted: p,
            cliffs_delta: cliffs_delta(&x, &y)?,
            median_speedup: sorted_quantile(&iota, 0.5),
            mean_speedup: mean,
        }))
    });
    let mut records = Vec::new();
    for (r, (l1, l2)) in raw.into_iter().zip(&pairs) {
        match r? {
            Some(rec) => records.push(rec),
            None => warn!("{l1} and {l2} share no task, pair skipped"),
        }
    }
    if records.is_empty() {
        return Err(Error::Input("no language pair shares a task".into()));
    }
    let ps: Vec<f64> = records.iter().map(|r| r.p_value).collect();
    for (r, adj) in records.iter_mut().zip(adjust_pvalues(&ps, correction)?) {
        r.p_adjusted = adj;
    }
    Ok(records)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OmnibusResult {
    pub languages: Vec<String>,
    pub tasks: usize,
    pub kruskal_wallis: TestResult,
    /// Benjamini-Hochberg adjusted pairwise signed-rank p-values.
    pub posthoc: BTreeMap<(String, String), f64>,
}

/// Kruskal-Wallis over the tasks every language implements, followed by
/// pairwise signed-rank tests on the same tasks.
pub fn omnibus(ds: &PerformanceDataset, exec: Execution) -> Result<OmnibusResult> {
    let matrix = complete_task_matrix(ds);
    let languages: Vec<String> = ds.languages().into_iter().map(str::to_owned).collect();
    if languages.len() < 2 {
        return Err(Error::Input("omnibus test needs at least 2 languages".into()));
    }
    if matrix.is_empty() {
        return Err(Error::Input("no task is implemented in every language".into()));
    }
    let groups: Vec<(String, Vec<f64>)> = languages
        .iter()
        .map(|l| (l.clone(), matrix.values().map(|row| row[l]).collect()))
        .collect();
    let samples: Vec<&[f64]> = groups.iter().map(|(_, g)| g.as_slice()).collect();
    Ok(OmnibusResult {
        kruskal_wallis: kruskal_wallis(&samples)?,
        posthoc: pairwise_wilcoxon_posthoc_with(&groups, exec)?,
        tasks: matrix.len(),
        languages,
    })
}

// ---------------------------------------------------------------------------
// Bayesian pipeline
// ---------------------------------------------------------------------------

/// Grid posteriors under the requested priors for every language pair that
/// shares a task. Pairs missing from `bench` keep only the priors that need
/// no bench data; the others appear as failed entries.
pub fn bayesian_pairs(
    ds: &PerformanceDataset,
    bench: Option<&PerformanceDataset>,
    kinds: &[PriorKind],
    grid: &GridSpec,
) -> Result<Vec<SensitivityReport>> {
    let pairs = sorted_pairs(&ds.languages());
    let reports: Vec<Result<Option<SensitivityReport>>> = map_indexed(grid.execution, pairs.len(), |k| {
        let (l1, l2) = &pairs[k];
        let data = match paired_speedups(ds, l1, l2) {
            Err(Error::EmptyComparison(..)) => return Ok(None),
            other => other?,
        };
        let bench_pair = bench.and_then(|b| match paired_speedups(b, l1, l2) {
            Ok(p) => Some(p),
            Err(e) => {
                warn!("no bench speedups for {l1} vs {l2}: {e}");
                None
            }
        });
        Ok(Some(sensitivity_report_with(&data, bench_pair.as_ref(), kinds, grid)))
    });
    let mut out = Vec::new();
    for r in reports {
        out.extend(r?);
    }
    if out.is_empty() {
        return Err(Error::Input("no language pair shares a task".into()));
    }
    Ok(out)
}

/// One table row group per pair: the 95% and 99% endpoints and the median
/// under each prior. Failed priors leave empty cells.
pub fn bayes_table_records(reports: &[SensitivityReport]) -> Vec<TableRecord> {
    reports
        .iter()
        .map(|r| {
            let mut measures = Vec::new();
            for e in &r.entries {
                let c = e.outcome.as_ref().ok().map(|a| &a.comparison);
                let get = |f: fn(&PairwiseComparison) -> f64| c.map_or(f64::NAN, f);
                measures.push((format!("{}_95", e.kind), get(|c| c.endpoint95)));
                measures.push((format!("{}_99", e.kind), get(|c| c.endpoint99)));
                measures.push((format!("{}_median", e.kind), get(|c| c.median)));
            }
            TableRecord { lang1: r.lang1.clone(), lang2: r.lang2.clone(), measures }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Graphs
// ---------------------------------------------------------------------------

/// Outcome of one pair at the weak and strong levels, with the edge weight
/// to draw if it is significant.
#[derive(Debug, Clone, PartialEq)]
pub struct PairVerdict {
    pub lang1: String,
    pub lang2: String,
    pub weak: Verdict,
    pub strong: Verdict,
    pub weight: f64,
}

impl From<&PairwiseComparison> for PairVerdict {
    /// The weight is the endpoint closest to zero among the significant
    /// levels: the 99% one when that is significant, else the 95% one.
    fn from(c: &PairwiseComparison) -> Self {
        let weight = if c.decision99.is_significant() { c.endpoint99 } else { c.endpoint95 };
        PairVerdict {
            lang1: c.lang1.clone(),
            lang2: c.lang2.clone(),
            weak: c.decision95,
            strong: c.decision99,
            weight: weight.abs(),
        }
    }
}

/// Number of pairs significant at the weak and at the strong level.
pub fn count_significant(pairs: &[PairVerdict]) -> (usize, usize) {
    (
        pairs.iter().filter(|p| p.weak.is_significant()).count(),
        pairs.iter().filter(|p| p.strong.is_significant()).count(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    Weak,
    Strong,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub from: String,
    pub to: String,
    pub strong: bool,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LanguageGraph {
    nodes: Vec<String>,
    edges: Vec<Edge>,
}

impl LanguageGraph {
    /// Nodes are sorted and edges ordered by `(from, to)`.
    pub fn new(nodes: Vec<String>, mut edges: Vec<Edge>) -> Result<Self> {
        let set: BTreeSet<String> = nodes.into_iter().collect();
        let mut pairs = BTreeSet::new();
        for e in &edges {
            for end in [&e.from, &e.to] {
                if !set.contains(end) {
                    return Err(Error::Input(format!("edge endpoint `{end}` is not a node")));
                }
            }
            if e.from == e.to {
                return Err(Error::Input(format!("self edge on `{}`", e.from)));
            }
            if !(e.weight >= 0.0 && e.weight.is_finite()) {
                return Err(Error::Input(format!("edge {} -> {} has weight {}", e.from, e.to, e.weight)));
            }
            let key = if e.from < e.to { (&e.from, &e.to) } else { (&e.to, &e.from) };
            if !pairs.insert(key) {
                return Err(Error::Input(format!("two edges between {} and {}", key.0, key.1)));
            }
        }
        edges.sort_by(|a, b| (&a.from, &a.to).cmp(&(&b.from, &b.to)));
        Ok(LanguageGraph { nodes: set.into_iter().collect(), edges })
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn has_edge(&self, from: &str, to: &str) -> bool {
        self.edges.iter().any(|e| e.from == from && e.to == to)
    }
}

/// An edge per pair significant at `level`, pointing from the slower to the
/// faster language.
pub fn build_graph(pairs: &[PairVerdict], level: Level) -> Result<LanguageGraph> {
    let mut nodes = BTreeSet::new();
    let mut seen = BTreeSet::new();
    let mut edges = Vec::new();
    for p in pairs {
        if p.lang1 == p.lang2 {
            return Err(Error::Input(format!("{} compared with itself", p.lang1)));
        }
        let key = if p.lang1 < p.lang2 { (&p.lang1, &p.lang2) } else { (&p.lang2, &p.lang1) };
        if !seen.insert(key) {
            return Err(Error::Input(format!("duplicate record for {} / {}", key.0, key.1)));
        }
        nodes.insert(p.lang1.clone());
        nodes.insert(p.lang2.clone());
        let verdict = match level {
            Level::Weak => p.weak,
            Level::Strong => p.strong,
        };
        let (from, to) = match verdict {
            Verdict::Lang1Faster => (&p.lang2, &p.lang1),
            Verdict::Lang2Faster => (&p.lang1, &p.lang2),
            Verdict::Inconclusive => continue,
        };
        edges.push(Edge {
            from: from.clone(),
            to: to.clone(),
            strong: p.strong.is_significant(),
            weight: p.weight,
        });
    }
    LanguageGraph::new(nodes.into_iter().collect(), edges)
}

/// A cycle as a node path whose first and last entries coincide.
fn find_cycle(g: &LanguageGraph) -> Option<Vec<String>> {
    let index: BTreeMap<&str, usize> = g.nodes.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    let mut succ = vec![Vec::new(); g.nodes.len()];
    for e in &g.edges {
        succ[index[e.from.as_str()]].push(index[e.to.as_str()]);
    }
    // 0 unvisited, 1 on the current path, 2 done
    let mut state = vec![0u8; g.nodes.len()];
    let mut path = Vec::new();
    fn visit(v: usize, succ: &[Vec<usize>], state: &mut [u8], path: &mut Vec<usize>) -> Option<Vec<usize>> {
        state[v] = 1;
        path.push(v);
        for &w in &succ[v] {
            if state[w] == 1 {
                let start = path.iter().position(|&x| x == w).unwrap();
                let mut cycle = path[start..].to_vec();
                cycle.push(w);
                return Some(cycle);
            }
            if state[w] == 0 {
                if let Some(c) = visit(w, succ, state, path) {
                    return Some(c);
                }
            }
        }
        path.pop();
        state[v] = 2;
        None
    }
    (0..g.nodes.len()).find_map(|v| {
        if state[v] != 0 {
            return None;
        }
        visit(v, &succ, &mut state, &mut path)
            .map(|c| c.into_iter().map(|i| g.nodes[i].clone()).collect())
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reduction {
    pub graph: LanguageGraph,
    pub was_transitive: bool,
}

/// Drops every edge `a -> c` that some `a -> b -> c` already implies, but
/// only when the relation is transitive; otherwise returns the graph as is.
pub fn transitive_reduction(g: &LanguageGraph) -> Result<Reduction> {
    if let Some(cycle) = find_cycle(g) {
        return Err(Error::Inconsistency(cycle));
    }
    let two_step = |a: &str, c: &str| {
        g.edges.iter().any(|e1| e1.from == a && g.has_edge(&e1.to, c))
    };
    let transitive = g
        .edges
        .iter()
        .all(|e1| g.edges.iter().filter(|e2| e2.from == e1.to).all(|e2| g.has_edge(&e1.from, &e2.to)));
    if !transitive {
        return Ok(Reduction { graph: g.clone(), was_transitive: false });
    }
    let edges = g.edges.iter().filter(|e| !two_step(&e.from, &e.to)).cloned().collect();
    Ok(Reduction {
        graph: LanguageGraph { nodes: g.nodes.clone(), edges },
        was_transitive: true,
    })
}

fn quoted(name: &str) -> String {
    format!("\"{}\"", name.replace('\\', "\\\\").replace('"', "\\\""))
}

/// Shortest decimal form with at most three fractional digits.
fn short_number(x: f64) -> String {
    let s = format!("{x:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

pub fn emit_dot(g: &LanguageGraph) -> String {
    let mut out = String::new();
    out.push_str("digraph languages {\n");
    out.push_str("  // edge direction: from the slower to the faster language\n");
    out.push_str("  // solid: significant at the strong level; dashed: weak level only\n");
    out.push_str("  // penwidth = 1 + 4 * effect magnitude\n");
    for n in &g.nodes {
        writeln!(out, "  {};", quoted(n)).unwrap();
    }
    for e in &g.edges {
        writeln!(
            out,
            "  {} -> {} [style={}, penwidth={}];",
            quoted(&e.from),
            quoted(&e.to),
            if e.strong { "solid" } else { "dashed" },
            short_number(1.0 + 4.0 * e.weight)
        )
        .unwrap();
    }
    out.push_str("}\n");
    out
}

// ---------------------------------------------------------------------------
// Tables
// ---------------------------------------------------------------------------

/// Named measures for one language pair; `NaN` renders as an empty cell.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRecord {
    pub lang1: String,
    pub lang2: String,
    pub measures: Vec<(String, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Markdown,
}

impl FromStr for TableFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(TableFormat::Csv),
            "md" | "markdown" => Ok(TableFormat::Markdown),
            other => Err(Error::Input(format!("unknown table format `{other}`"))),
        }
    }
}

impl TableFormat {
    /// Markdown unless the path ends in `.csv`.
    pub fn for_path(path: &std::path::Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => TableFormat::Csv,
            _ => TableFormat::Markdown,
        }
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

/// Lower-triangular matrix: the first language of each pair indexes the
/// columns, the second the rows, one line per measure.
pub fn emit_table(records: &[TableRecord], format: TableFormat) -> Result<String> {
    let first = records.first().ok_or_else(|| Error::Input("no records to tabulate".into()))?;
    let schema: Vec<&str> = first.measures.iter().map(|(n, _)| n.as_str()).collect();
    let mut cells: BTreeMap<(&str, &str), &TableRecord> = BTreeMap::new();
    let mut langs = BTreeSet::new();
    for r in records {
        if !r.measures.iter().map(|(n, _)| n.as_str()).eq(schema.iter().copied()) {
            return Err(Error::Input(format!("record {} / {} has a different set of measures", r.lang1, r.lang2)));
        }
        if r.lang1 >= r.lang2 {
            return Err(Error::Input(format!("record {} / {} is not in table order", r.lang1, r.lang2)));
        }
        if cells.insert((&r.lang1, &r.lang2), r).is_some() {
            return Err(Error::Input(format!("duplicate record for {} / {}", r.lang1, r.lang2)));
        }
        langs.insert(r.lang1.as_str());
        langs.insert(r.lang2.as_str());
    }
    let langs: Vec<&str> = langs.into_iter().collect();
    let columns = &langs[..langs.len() - 1];

    let mut out = String::new();
    let mut line = |fields: Vec<String>| match format {
        TableFormat::Csv => {
            out.push_str(&fields.iter().map(|f| csv_field(f)).collect::<Vec<_>>().join(","));
            out.push('\n');
        }
        TableFormat::Markdown => {
            out.push_str("| ");
            out.push_str(&fields.join(" | "));
            out.push_str(" |\n");
        }
    };
    let mut header = vec!["language".to_owned(), "measure".to_owned()];
    header.extend(columns.iter().map(|c| c.to_string()));
    line(header);
    if format == TableFormat::Markdown {
        let mut rule = vec!["---".to_owned(), "---".to_owned()];
        rule.extend(columns.iter().map(|_| "---:".to_owned()));
        line(rule);
    }
    for row in &langs[1..] {
        for (m, name) in schema.iter().enumerate() {
            let label = if m == 0 || format == TableFormat::Csv { row.to_string() } else { String::new() };
            let mut fields = vec![label, name.to_string()];
            for col in columns {
                let v = cells.get(&(*col, *row)).map(|r| r.measures[m].1);
                fields.push(match v {
                    Some(v) if !v.is_nan() => format!("{v:.3}"),
                    _ => String::new(),
                });
            }
            line(fields);
        }
    }
    Ok(out)
}
