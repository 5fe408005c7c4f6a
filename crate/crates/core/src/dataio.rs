//! CSV ingestion for the two data shapes (benchmark runtimes and the
//! debugging experiment) and the paired speedup structures derived from them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use crate::{Error, Result};

pub const PERFORMANCE_HEADER: [&str; 4] = ["language", "task", "variant", "seconds"];
pub const EXPERIMENT_HEADER: [&str; 7] =
    ["subject", "treatment", "system", "lab", "experience", "ability", "fixed"];

/// One timed run of one implementation variant.
#[derive(Debug, Clone, PartialEq)]
pub struct Run {
    pub variant: String,
    pub seconds: f64,
}

/// Running times grouped by (language, task).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PerformanceDataset {
    measurements: BTreeMap<(String, String), Vec<Run>>,
}

impl PerformanceDataset {
    /// Builds a dataset from `(language, task, variant, seconds)` tuples,
    /// applying the same validation as the CSV loader.
    pub fn from_runs<I, S>(runs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, S, S, f64)>,
        S: Into<String>,
    {
        let mut ds = PerformanceDataset::default();
        for (i, (lang, task, variant, seconds)) in runs.into_iter().enumerate() {
            ds.insert(lang.into(), task.into(), variant.into(), seconds)
                .map_err(|message| Error::Row { line: i as u64 + 1, message })?;
        }
        if ds.measurements.is_empty() {
            return Err(Error::Format("no measurements".into()));
        }
        Ok(ds)
    }

    fn insert(
        &mut self,
        language: String,
        task: String,
        variant: String,
        seconds: f64,
    ) -> std::result::Result<(), String> {
        if language.is_empty() || task.is_empty() {
            return Err("language and task must be nonempty".into());
        }
        if !(seconds > 0.0 && seconds.is_finite()) {
            return Err(format!("seconds must be positive and finite, got {seconds}"));
        }
        let duplicate = format!("duplicate variant `{variant}` for ({language}, {task})");
        let runs = self.measurements.entry((language, task)).or_default();
        if runs.iter().any(|r| r.variant == variant) {
            return Err(duplicate);
        }
        runs.push(Run { variant, seconds });
        Ok(())
    }

    /// Language names in lexicographic order.
    pub fn languages(&self) -> Vec<&str> {
        let set: BTreeSet<&str> = self.measurements.keys().map(|(l, _)| l.as_str()).collect();
        set.into_iter().collect()
    }

    pub fn has_language(&self, language: &str) -> bool {
        self.measurements.keys().any(|(l, _)| l == language)
    }

    /// Tasks with at least one run in `language`, sorted.
    pub fn tasks(&self, language: &str) -> Vec<&str> {
        self.measurements
            .keys()
            .filter(|(l, _)| l == language)
            .map(|(_, t)| t.as_str())
            .collect()
    }

    pub fn runs(&self, language: &str, task: &str) -> Option<&[Run]> {
        self.measurements
            .get(&(language.to_owned(), task.to_owned()))
            .map(Vec::as_slice)
    }

    /// The optimal (minimum) running time for a (language, task) cell.
    pub fn optimal(&self, language: &str, task: &str) -> Option<f64> {
        self.runs(language, task)
            .map(|rs| rs.iter().map(|r| r.seconds).fold(f64::INFINITY, f64::min))
    }

    /// Every `(language, task, run)` in key order, then insertion order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, &Run)> {
        self.measurements
            .iter()
            .flat_map(|((l, t), rs)| rs.iter().map(move |r| (l.as_str(), t.as_str(), r)))
    }

    pub fn len(&self) -> usize {
        self.measurements.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.measurements.is_empty()
    }
}

fn csv_reader<R: Read>(source: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .trim(csv::Trim::None)
        .from_reader(source)
}

fn csv_error(err: csv::Error) -> Error {
    let line = err.position().map(|p| p.line());
    let message = match err.kind() {
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
            format!("expected {expected_len} fields, found {len}")
        }
        csv::ErrorKind::Utf8 { .. } => "invalid UTF-8".to_owned(),
        _ => err.to_string(),
    };
    match line {
        Some(line) => Error::Row { line, message },
        None => Error::Format(message),
    }
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, want: &[&str]) -> Result<()> {
    let header = match rdr.headers() {
        Ok(h) => h.clone(),
        Err(e) => return Err(csv_error(e)),
    };
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(Error::Format("empty file".into()));
    }
    if header.iter().ne(want.iter().copied()) {
        return Err(Error::Format(format!(
            "expected header `{}`, found `{}`",
            want.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    Ok(())
}

fn parse_field<T: FromStr>(value: &str, what: &str) -> std::result::Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("cannot parse {what} from `{value}`"))
}

/// Reads `language,task,variant,seconds` rows.
pub fn load_performance_csv<R: Read>(source: R) -> Result<PerformanceDataset> {
    let mut rdr = csv_reader(source);
    check_header(&mut rdr, &PERFORMANCE_HEADER)?;
    let mut ds = PerformanceDataset::default();
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line());
        let mut row = || -> std::result::Result<(), String> {
            let seconds: f64 = parse_field(&record[3], "seconds")?;
            ds.insert(record[0].to_owned(), record[1].to_owned(), record[2].to_owned(), seconds)
        };
        row().map_err(|message| Error::Row { line, message })?;
    }
    if ds.is_empty() {
        return Err(Error::Format("no data rows".into()));
    }
    Ok(ds)
}

/// Writes the dataset back in the loader's schema. Seconds are printed in
/// shortest round-trip form, so loading the output reproduces every value.
pub fn write_performance_csv<W: Write>(ds: &PerformanceDataset, sink: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(sink);
    let io = |e: csv::Error| Error::Format(e.to_string());
    wtr.write_record(PERFORMANCE_HEADER).map_err(io)?;
    for (lang, task, run) in ds.iter() {
        wtr.write_record([lang, task, &run.variant, &run.seconds.to_string()])
            .map_err(io)?;
    }
    wtr.flush()?;
    Ok(())
}

macro_rules! coded_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident = $code:literal : [$($spelling:literal),+]),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            /// Integer coding used in the regression design matrix.
            pub fn code(self) -> u8 {
                match self {
                    $($name::$variant => $code),+
                }
            }

            pub fn label(self) -> &'static str {
                match self {
                    $($name::$variant => [$($spelling),+][0]),+
                }
            }
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> std::result::Result<Self, String> {
                $(
                    if [$($spelling),+].iter().any(|w: &&str| w.eq_ignore_ascii_case(s)) {
                        return Ok($name::$variant);
                    }
                )+
                Err(format!("unknown {} `{}`", stringify!($name).to_ascii_lowercase(), s))
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.label())
            }
        }
    };
}

coded_enum!(Treatment { Manual = 0: ["manual"], Auto = 1: ["auto"] });
coded_enum!(System { J = 0: ["J"], X = 1: ["X"] });
coded_enum!(Lab { One = 0: ["1"], Two = 1: ["2"] });
coded_enum!(
    /// Bachelor or master student.
    Experience { B = 0: ["B"], M = 1: ["M"] }
);
coded_enum!(Ability { Low = 0: ["low"], Medium = 1: ["medium"], High = 2: ["high"] });

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExperimentRow {
    pub subject: String,
    pub treatment: Treatment,
    pub system: System,
    pub lab: Lab,
    pub experience: Experience,
    pub ability: Ability,
    pub fixed: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExperimentTable {
    rows: Vec<ExperimentRow>,
}

impl ExperimentTable {
    pub fn new(rows: Vec<ExperimentRow>) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::Format(format!(
                "experiment table needs at least 2 rows, got {}",
                rows.len()
            )));
        }
        Ok(ExperimentTable { rows })
    }

    pub fn rows(&self) -> &[ExperimentRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Reads `subject,treatment,system,lab,experience,ability,fixed` rows.
/// Enum values are matched case-insensitively.
pub fn load_experiment_csv<R: Read>(source: R) -> Result<ExperimentTable> {
    let mut rdr = csv_reader(source);
    check_header(&mut rdr, &EXPERIMENT_HEADER)?;
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line());
        let parse = || -> std::result::Result<ExperimentRow, String> {
            if record[0].is_empty() {
                return Err("subject must be nonempty".into());
            }
            let fixed: i64 = parse_field(record[6].trim(), "fixed")?;
            if fixed < 0 {
                return Err(format!("fixed must be nonnegative, got {fixed}"));
            }
            Ok(ExperimentRow {
                subject: record[0].to_owned(),
                treatment: record[1].parse()?,
                system: record[2].parse()?,
                lab: record[3].parse()?,
                experience: record[4].parse()?,
                ability: record[5].parse()?,
                fixed: u32::try_from(fixed).map_err(|_| format!("fixed out of range: {fixed}"))?,
            })
        };
        rows.push(parse().map_err(|message| Error::Row { line, message })?);
    }
    if rows.is_empty() {
        return Err(Error::Format("no data rows".into()));
    }
    ExperimentTable::new(rows)
}

pub fn write_experiment_csv<W: Write>(table: &ExperimentTable, sink: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(sink);
    let io = |e: csv::Error| Error::Format(e.to_string());
    wtr.write_record(EXPERIMENT_HEADER).map_err(io)?;
    for r in table.rows() {
        wtr.write_record([
            r.subject.as_str(),
            r.treatment.label(),
            r.system.label(),
            r.lab.label(),
            r.experience.label(),
            r.ability.label(),
            &r.fixed.to_string(),
        ])
        .map_err(io)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Signed relative runtime difference in (-1, 1); negative when `a` is
/// faster. `1 / (1 - |result|)` recovers the max/min speedup ratio.
pub fn inverse_speedup(a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) || !a.is_finite() || !b.is_finite() {
        return Err(Error::domain(format!(
            "inverse speedup needs positive finite times, got ({a}, {b})"
        )));
    }
    Ok(if a < b {
        -(1.0 - a / b)
    } else if a > b {
        1.0 - b / a
    } else {
        0.0
    })
}

/// Per-task inverse speedups of `lang1` against `lang2` on optimal data.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedSpeedups {
    pub lang1: String,
    pub lang2: String,
    pub tasks: Vec<String>,
    pub values: Vec<f64>,
}

impl PairedSpeedups {
    /// Builds a comparison directly from values, checking the invariants.
    pub fn new(
        lang1: impl Into<String>,
        lang2: impl Into<String>,
        tasks: Vec<String>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if tasks.len() != values.len() {
            return Err(Error::Pairing(tasks.len(), values.len()));
        }
        if let Some(v) = values.iter().find(|v| !(v.abs() < 1.0)) {
            return Err(Error::domain(format!("inverse speedup {v} outside (-1, 1)")));
        }
        Ok(PairedSpeedups { lang1: lang1.into(), lang2: lang2.into(), tasks, values })
    }

    /// The same comparison seen from the other language.
    pub fn swapped(&self) -> Self {
        PairedSpeedups {
            lang1: self.lang2.clone(),
            lang2: self.lang1.clone(),
            tasks: self.tasks.clone(),
            values: self.values.iter().map(|v| -v).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Tasks common to both languages, sorted.
fn common_tasks<'a>(ds: &'a PerformanceDataset, l1: &str, l2: &str) -> Result<Vec<&'a str>> {
    for l in [l1, l2] {
        if !ds.has_language(l) {
            return Err(Error::Lookup(l.to_owned()));
        }
    }
    let t2: BTreeSet<&str> = ds.tasks(l2).into_iter().collect();
    let common: Vec<&str> = ds.tasks(l1).into_iter().filter(|t| t2.contains(t)).collect();
    if common.is_empty() {
        return Err(Error::EmptyComparison(l1.to_owned(), l2.to_owned()));
    }
    Ok(common)
}

pub fn paired_speedups(ds: &PerformanceDataset, l1: &str, l2: &str) -> Result<PairedSpeedups> {
    let (tasks, values): (Vec<String>, Vec<f64>) = common_tasks(ds, l1, l2)?
        .into_iter()
        .map(|t| {
            let (a, b) = (ds.optimal(l1, t).unwrap(), ds.optimal(l2, t).unwrap());
            Ok((t.to_owned(), inverse_speedup(a, b)?))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    Ok(PairedSpeedups { lang1: l1.to_owned(), lang2: l2.to_owned(), tasks, values })
}

/// Optimal runtimes of both languages on their common tasks, index-paired.
pub fn paired_optimal_runtimes(
    ds: &PerformanceDataset,
    l1: &str,
    l2: &str,
) -> Result<(Vec<String>, Vec<f64>, Vec<f64>)> {
    let tasks = common_tasks(ds, l1, l2)?;
    let x = tasks.iter().map(|t| ds.optimal(l1, t).unwrap()).collect();
    let y = tasks.iter().map(|t| ds.optimal(l2, t).unwrap()).collect();
    Ok((tasks.into_iter().map(str::to_owned).collect(), x, y))
}

/// task -> language -> optimal runtime, restricted to tasks that every
/// language in the dataset implements.
pub type TaskMatrix = BTreeMap<String, BTreeMap<String, f64>>;

pub fn complete_task_matrix(ds: &PerformanceDataset) -> TaskMatrix {
    let languages = ds.languages();
    let mut by_task: BTreeMap<&str, BTreeMap<String, f64>> = BTreeMap::new();
    for (lang, task) in ds.measurements.keys() {
        let best = ds.optimal(lang, task).unwrap();
        by_task.entry(task).or_default().insert(lang.clone(), best);
    }
    by_task
        .into_iter()
        .filter(|(_, row)| row.len() == languages.len())
        .map(|(t, row)| (t.to_owned(), row))
        .collect()
}
