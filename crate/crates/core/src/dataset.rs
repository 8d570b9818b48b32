//! Longitudinal bivariate data: validation, CSV ingestion and the
//! preprocessing transforms the model assumes (zero-mean outcomes,
//! approximately Gaussian marginals).

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Result, TivacError};
use crate::format_f64;

/// One individual's trajectory of concurrent outcome pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectRecord {
    pub subject_id: String,
    pub times: Vec<f64>,
    pub outcomes: Vec<[f64; 2]>,
}

impl SubjectRecord {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Keep repeated `(subject_id, time)` rows, logging a warning instead of failing.
    pub allow_duplicate_times: bool,
}

/// Subjects plus an `n x p` covariate matrix (row `i` belongs to subject `i`).
///
/// There is no implicit intercept: include an all-ones column if one is wanted.
#[derive(Debug, Clone, PartialEq)]
pub struct LongitudinalDataset {
    subjects: Vec<SubjectRecord>,
    covariates: Vec<Vec<f64>>,
    covariate_names: Vec<String>,
    time_range: (f64, f64),
}

impl LongitudinalDataset {
    pub fn new(
        subjects: Vec<SubjectRecord>,
        covariates: Vec<Vec<f64>>,
        covariate_names: Vec<String>,
    ) -> Result<Self> {
        Self::with_options(subjects, covariates, covariate_names, LoadOptions::default())
    }

    pub fn with_options(
        subjects: Vec<SubjectRecord>,
        covariates: Vec<Vec<f64>>,
        covariate_names: Vec<String>,
        options: LoadOptions,
    ) -> Result<Self> {
        let invalid = |msg: String| Err(TivacError::InvalidData(msg));
        let n = subjects.len();
        let p = covariate_names.len();
        if p == 0 {
            return invalid("at least one covariate column is required".into());
        }
        if covariates.len() != n {
            return invalid(format!("{} subjects but {} covariate rows", n, covariates.len()));
        }
        if n <= p {
            return invalid(format!("need more subjects than covariates (n = {n}, p = {p})"));
        }
        for (row, s) in covariates.iter().zip(&subjects) {
            if row.len() != p {
                return invalid(format!("covariate row for {} has {} values, expected {p}", s.subject_id, row.len()));
            }
            if let Some(v) = row.iter().find(|v| !v.is_finite()) {
                return invalid(format!("non-finite covariate {v} for subject {}", s.subject_id));
            }
        }

        let mut t_min = f64::INFINITY;
        let mut t_max = f64::NEG_INFINITY;
        for s in &subjects {
            if s.times.is_empty() || s.times.len() != s.outcomes.len() {
                return invalid(format!(
                    "subject {} has {} times and {} outcome pairs",
                    s.subject_id,
                    s.times.len(),
                    s.outcomes.len()
                ));
            }
            for w in s.times.windows(2) {
                if w[1] < w[0] || (w[1] == w[0] && !options.allow_duplicate_times) {
                    return invalid(format!("times of subject {} are not strictly increasing", s.subject_id));
                }
            }
            let finite = s.times.iter().all(|t| t.is_finite())
                && s.outcomes.iter().all(|y| y[0].is_finite() && y[1].is_finite());
            if !finite {
                return invalid(format!("subject {} has non-finite values", s.subject_id));
            }
            t_min = t_min.min(s.times[0]);
            t_max = t_max.max(s.times[s.times.len() - 1]);
        }
        if !(t_min < t_max) {
            return invalid(format!("time range is degenerate ({t_min}, {t_max})"));
        }

        Ok(LongitudinalDataset {
            subjects,
            covariates,
            covariate_names,
            time_range: (t_min, t_max),
        })
    }

    pub fn subjects(&self) -> &[SubjectRecord] {
        &self.subjects
    }

    pub fn covariates(&self) -> &[Vec<f64>] {
        &self.covariates
    }

    pub fn covariate_row(&self, i: usize) -> &[f64] {
        &self.covariates[i]
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn n_observations(&self) -> usize {
        self.subjects.iter().map(SubjectRecord::len).sum()
    }

    pub fn time_range(&self) -> (f64, f64) {
        self.time_range
    }

    /// All outcome pairs, subject by subject.
    pub fn pooled_outcomes(&self) -> impl Iterator<Item = [f64; 2]> + '_ {
        self.subjects.iter().flat_map(|s| s.outcomes.iter().copied())
    }

    fn map_outcomes(&self, mut f: impl FnMut(usize, usize, [f64; 2]) -> [f64; 2]) -> Self {
        let mut out = self.clone();
        for (i, s) in out.subjects.iter_mut().enumerate() {
            for (j, y) in s.outcomes.iter_mut().enumerate() {
                *y = f(i, j, *y);
            }
        }
        out
    }

    /// Writes the dataset in the same long/wide CSV pair that [`load_csv`] reads.
    pub fn write_csv(&self, outcome_path: &Path, covariate_path: &Path) -> Result<()> {
        fn io(p: &Path) -> impl Fn(std::io::Error) -> TivacError + '_ {
            move |e| TivacError::io(p, e)
        }
        let mut w = BufWriter::new(File::create(outcome_path).map_err(io(outcome_path))?);
        writeln!(w, "subject_id,time,y1,y2").map_err(io(outcome_path))?;
        for s in &self.subjects {
            for (t, y) in s.times.iter().zip(&s.outcomes) {
                writeln!(w, "{},{},{},{}", s.subject_id, format_f64(*t), format_f64(y[0]), format_f64(y[1]))
                    .map_err(io(outcome_path))?;
            }
        }
        w.flush().map_err(io(outcome_path))?;

        let mut w = BufWriter::new(File::create(covariate_path).map_err(io(covariate_path))?);
        writeln!(w, "subject_id,{}", self.covariate_names.join(",")).map_err(io(covariate_path))?;
        for (s, row) in self.subjects.iter().zip(&self.covariates) {
            let cells: Vec<String> = row.iter().map(|v| format_f64(*v)).collect();
            writeln!(w, "{},{}", s.subject_id, cells.join(",")).map_err(io(covariate_path))?;
        }
        w.flush().map_err(io(covariate_path))?;
        Ok(())
    }
}

fn parse_err(path: &Path, line: u64, reason: impl Into<String>) -> TivacError {
    TivacError::Parse {
        path: path.to_path_buf(),
        line,
        reason: reason.into(),
    }
}

fn parse_value(path: &Path, line: u64, field: &str, raw: &str) -> Result<f64> {
    if raw.is_empty() {
        return Err(parse_err(path, line, format!("missing value for {field}")));
    }
    let v: f64 = raw
        .parse()
        .map_err(|_| parse_err(path, line, format!("non-numeric {field} {raw:?}")))?;
    if !v.is_finite() {
        return Err(parse_err(path, line, format!("non-finite {field} {raw:?}")));
    }
    Ok(v)
}

fn open_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| TivacError::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(file))
}

/// Reads a long-format outcome file (`subject_id,time,y1,y2`) and a wide
/// covariate file (`subject_id,<name1>,...`).
pub fn load_csv(outcome_path: &Path, covariate_path: &Path) -> Result<LongitudinalDataset> {
    load_csv_with(outcome_path, covariate_path, LoadOptions::default())
}

pub fn load_csv_with(
    outcome_path: &Path,
    covariate_path: &Path,
    options: LoadOptions,
) -> Result<LongitudinalDataset> {
    let mut records = open_reader(outcome_path)?.into_records();

    let header = match records.next() {
        Some(r) => r?,
        None => return Err(parse_err(outcome_path, 1, "empty file")),
    };
    let header: Vec<&str> = header.iter().collect();
    if header != ["subject_id", "time", "y1", "y2"] {
        return Err(parse_err(outcome_path, 1, format!("expected header subject_id,time,y1,y2, found {}", header.join(","))));
    }

    let mut order: Vec<String> = Vec::new();
    let mut rows: HashMap<String, Vec<(f64, [f64; 2], u64)>> = HashMap::new();
    for record in records {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 4 {
            return Err(parse_err(outcome_path, line, format!("expected 4 fields, found {}", record.len())));
        }
        let id = record[0].to_string();
        if id.is_empty() {
            return Err(parse_err(outcome_path, line, "empty subject_id"));
        }
        let t = parse_value(outcome_path, line, "time", &record[1])?;
        let y1 = parse_value(outcome_path, line, "y1", &record[2])?;
        let y2 = parse_value(outcome_path, line, "y2", &record[3])?;
        let entry = rows.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            Vec::new()
        });
        entry.push((t, [y1, y2], line));
    }
    if order.is_empty() {
        return Err(parse_err(outcome_path, 2, "empty file: no outcome rows"));
    }

    let mut subjects = Vec::with_capacity(order.len());
    for id in &order {
        let mut obs = rows.remove(id).unwrap_or_default();
        obs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.2.cmp(&b.2)));
        for w in obs.windows(2) {
            if w[0].0 == w[1].0 {
                if options.allow_duplicate_times {
                    log::warn!("{}:{}: duplicate time {} for subject {id}", outcome_path.display(), w[1].2, w[1].0);
                } else {
                    return Err(parse_err(outcome_path, w[1].2, format!("duplicate time {} for subject {id}", w[1].0)));
                }
            }
        }
        subjects.push(SubjectRecord {
            subject_id: id.clone(),
            times: obs.iter().map(|o| o.0).collect(),
            outcomes: obs.iter().map(|o| o.1).collect(),
        });
    }

    let mut records = open_reader(covariate_path)?.into_records();
    let header = match records.next() {
        Some(r) => r?,
        None => return Err(parse_err(covariate_path, 1, "empty file")),
    };
    if header.get(0) != Some("subject_id") || header.len() < 2 {
        return Err(parse_err(covariate_path, 1, "expected header subject_id,<covariate>,..."));
    }
    let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let p = names.len();
    let mut covariate_rows: HashMap<String, Vec<f64>> = HashMap::new();
    for record in records {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != p + 1 {
            return Err(parse_err(covariate_path, line, format!("expected {} fields, found {}", p + 1, record.len())));
        }
        let id = record[0].to_string();
        let values = names
            .iter()
            .zip(record.iter().skip(1))
            .map(|(name, raw)| parse_value(covariate_path, line, name, raw))
            .collect::<Result<Vec<f64>>>()?;
        if covariate_rows.insert(id.clone(), values).is_some() {
            return Err(parse_err(covariate_path, line, format!("subject {id} appears more than once")));
        }
    }

    let mut covariates = Vec::with_capacity(order.len());
    for id in &order {
        match covariate_rows.remove(id) {
            Some(row) => covariates.push(row),
            None => {
                return Err(TivacError::MissingSubject {
                    subject: id.clone(),
                    path: covariate_path.to_path_buf(),
                })
            }
        }
    }
    if !covariate_rows.is_empty() {
        log::warn!(
            "{}: {} covariate rows have no outcomes and were ignored",
            covariate_path.display(),
            covariate_rows.len()
        );
    }

    LongitudinalDataset::with_options(subjects, covariates, names, options)
}

/// Subtracts, within each level of covariate `group_column`, the pooled mean
/// of each outcome coordinate.
pub fn center_by_group(data: &LongitudinalDataset, group_column: usize) -> Result<LongitudinalDataset> {
    if group_column >= data.n_covariates() {
        return Err(TivacError::InvalidConfig(format!(
            "group column {group_column} out of range (p = {})",
            data.n_covariates()
        )));
    }
    let mut levels: Vec<f64> = Vec::new();
    let group_of: Vec<usize> = data
        .covariates
        .iter()
        .map(|row| {
            let v = row[group_column];
            match levels.iter().position(|&l| l == v) {
                Some(g) => g,
                None => {
                    levels.push(v);
                    levels.len() - 1
                }
            }
        })
        .collect();
    if levels.len() == data.n_subjects() {
        return Err(TivacError::InvalidData(format!(
            "group column {} has a distinct value for every subject",
            data.covariate_names[group_column]
        )));
    }

    let mut sums = vec![[0.0f64; 2]; levels.len()];
    let mut counts = vec![0usize; levels.len()];
    for (s, &g) in data.subjects.iter().zip(&group_of) {
        for y in &s.outcomes {
            sums[g][0] += y[0];
            sums[g][1] += y[1];
        }
        counts[g] += s.len();
    }
    let means: Vec<[f64; 2]> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| [s[0] / c as f64, s[1] / c as f64])
        .collect();
    Ok(data.map_outcomes(|i, _, y| {
        let m = means[group_of[i]];
        [y[0] - m[0], y[1] - m[1]]
    }))
}

/// Mid-ranks (1-based) of `values`; ties share the average of their ranks.
fn mid_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && values[idx[end]] == values[idx[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &k in &idx[start..end] {
            ranks[k] = rank;
        }
        start = end;
    }
    ranks
}

/// Rank-based inverse normal transform of each pooled outcome coordinate:
/// `z = Phi^-1(midrank / (N + 1))`.
pub fn quantile_transform(data: &LongitudinalDataset) -> Result<LongitudinalDataset> {
    let normal = Normal::standard();
    let pooled: Vec<[f64; 2]> = data.pooled_outcomes().collect();
    let denom = pooled.len() as f64 + 1.0;
    let mut transformed = vec![[0.0; 2]; pooled.len()];
    for c in 0..2 {
        let values: Vec<f64> = pooled.iter().map(|y| y[c]).collect();
        if values.iter().all(|&v| v == values[0]) {
            return Err(TivacError::ZeroVariance(c + 1));
        }
        for (k, r) in mid_ranks(&values).into_iter().enumerate() {
            transformed[k][c] = normal.inverse_cdf(r / denom);
        }
    }
    let mut next = transformed.into_iter();
    Ok(data.map_outcomes(|_, _, _| next.next().expect("one value per observation")))
}
