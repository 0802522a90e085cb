//! Point-in-time feature matrices: per-source counts, recency, inter-arrival
//! and amount aggregates over trailing windows, plus demographics.
//!
//! A window of `d` days ending at the as-of date covers events whose start
//! lies in `(as_of - d, as_of]`. Windows are fixed day counts so that every
//! event-derived feature depends only on date differences.

use std::fmt::Write as _;
use std::path::Path;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cohort::CohortRow;
use crate::dates::{age_in_years, days_between};
use crate::error::{Error, Result};
use crate::metric::Metric;
use crate::store::{AsOfView, EventRecord, Gender, Race, Source, ViewFactory};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Window {
    pub name: String,
    pub days: u32,
}

impl Window {
    pub fn new(name: &str, days: u32) -> Window {
        Window { name: name.to_string(), days }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregate {
    Count,
    DaysSinceLast,
    InterArrival,
    /// Per-kind counts for sources with categorical levels.
    Kinds,
    /// Sum/min/max/avg of amounts, plus order-for-possession counts for filings.
    Amount,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureSpec {
    pub windows: Vec<Window>,
    pub sources: Vec<Source>,
    pub aggregates: Vec<Aggregate>,
    pub demographics: bool,
    /// Value of `days_since` when no event falls in the window. Must exceed
    /// every window length.
    pub sentinel_days: u32,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        FeatureSpec {
            windows: vec![
                Window::new("3mo", 91),
                Window::new("6mo", 182),
                Window::new("1y", 365),
                Window::new("2y", 730),
                Window::new("3y", 1095),
                Window::new("4y", 1461),
                Window::new("5y", 1826),
            ],
            sources: Source::ALL.to_vec(),
            aggregates: vec![
                Aggregate::Count,
                Aggregate::DaysSinceLast,
                Aggregate::InterArrival,
                Aggregate::Kinds,
                Aggregate::Amount,
            ],
            demographics: true,
            sentinel_days: 4261,
        }
    }
}

impl FeatureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.windows.is_empty() || self.aggregates.is_empty() {
            return Err(Error::Config("feature spec needs at least one window and one aggregate".into()));
        }
        if self.windows.windows(2).any(|w| w[0].days >= w[1].days) || self.windows[0].days == 0 {
            return Err(Error::Config("feature windows must be positive and strictly ascending".into()));
        }
        let longest = self.windows.last().map_or(0, |w| w.days);
        if self.sentinel_days <= longest {
            return Err(Error::Config(format!(
                "sentinel_days {} must exceed the longest window ({longest} days)",
                self.sentinel_days
            )));
        }
        let mut seen = self.sources.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.sources.len() {
            return Err(Error::Config("duplicate source in feature spec".into()));
        }
        Ok(())
    }

    fn has(&self, a: Aggregate) -> bool {
        self.aggregates.contains(&a)
    }

    /// Column layout implied by the spec, in matrix order.
    pub fn columns(&self) -> Vec<ColumnInfo> {
        let mut cols = Vec::new();
        for &src in &self.sources {
            for w in &self.windows {
                let mut col = |agg: String, ty: ColumnType| {
                    cols.push(ColumnInfo {
                        name: format!("{}.{}.{}", src.slug(), agg, w.name),
                        source: src.slug().to_string(),
                        aggregate: agg,
                        window: w.name.clone(),
                        kind: ty,
                    })
                };
                if self.has(Aggregate::Count) {
                    col("count".into(), ColumnType::Count);
                }
                if self.has(Aggregate::DaysSinceLast) {
                    col("days_since".into(), ColumnType::Days);
                    col("days_since_imputed".into(), ColumnType::Flag);
                }
                if self.has(Aggregate::InterArrival) {
                    col("gap_min".into(), ColumnType::Days);
                    col("gap_max".into(), ColumnType::Days);
                    col("gap_avg".into(), ColumnType::Days);
                }
                if self.has(Aggregate::Kinds) {
                    for k in src.kinds() {
                        col(format!("count_{}", k.slug()), ColumnType::Count);
                    }
                }
                if self.has(Aggregate::Amount) && src.has_amount() {
                    for a in ["amount_sum", "amount_min", "amount_max", "amount_avg"] {
                        col(a.into(), ColumnType::Amount);
                    }
                    if src == Source::Eviction {
                        col("ofp_count".into(), ColumnType::Count);
                    }
                }
            }
        }
        if self.demographics {
            let mut demo = |agg: String, ty: ColumnType| {
                cols.push(ColumnInfo {
                    name: format!("demographics.{agg}.as_of"),
                    source: "demographics".into(),
                    aggregate: agg,
                    window: "as_of".into(),
                    kind: ty,
                })
            };
            demo("age".into(), ColumnType::Years);
            demo("age_imputed".into(), ColumnType::Flag);
            for g in Gender::ALL {
                demo(format!("gender_{}", g.slug()), ColumnType::Indicator);
            }
            for r in Race::ALL {
                demo(format!("race_{}", r.slug()), ColumnType::Indicator);
            }
        }
        cols
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnType {
    Count,
    Days,
    Flag,
    Amount,
    Years,
    Indicator,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnInfo {
    pub name: String,
    pub source: String,
    pub aggregate: String,
    pub window: String,
    pub kind: ColumnType,
}

/// Dense row-major matrix aligned to cohort rows.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub columns: Vec<ColumnInfo>,
    pub rows: Vec<CohortRow>,
    pub data: Vec<f64>,
    pub schema_hash: String,
}

/// Hex SHA-256 of the newline-joined column names.
pub fn schema_hash(names: impl IntoIterator<Item = impl AsRef<str>>) -> String {
    let mut h = Sha256::new();
    for n in names {
        h.update(n.as_ref().as_bytes());
        h.update(b"\n");
    }
    let mut out = String::with_capacity(64);
    for b in h.finalize().iter() {
        let _ = write!(out, "{b:02x}");
    }
    out
}

impl ColumnInfo {
    /// A column outside the generated schema, e.g. for hand-built matrices.
    pub fn custom(name: &str, kind: ColumnType) -> ColumnInfo {
        ColumnInfo { name: name.to_string(), source: String::new(), aggregate: String::new(), window: String::new(), kind }
    }
}

impl FeatureMatrix {
    /// Assembles a matrix from row-major `data`, computing the schema hash.
    pub fn new(columns: Vec<ColumnInfo>, rows: Vec<CohortRow>, data: Vec<f64>) -> Result<FeatureMatrix> {
        if data.len() != rows.len() * columns.len() {
            return Err(Error::Config(format!(
                "{} values do not fill {} rows x {} columns",
                data.len(),
                rows.len(),
                columns.len()
            )));
        }
        let schema_hash = schema_hash(columns.iter().map(|c| &c.name));
        Ok(FeatureMatrix { columns, rows, data, schema_hash })
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.n_cols();
        &self.data[i * p..(i + 1) * p]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_cols() + j]
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn labels(&self) -> Option<Vec<bool>> {
        self.rows.iter().map(|r| r.label).collect()
    }

    /// Rows stacked in order; all parts must share a schema.
    pub fn concat(parts: Vec<FeatureMatrix>) -> Result<FeatureMatrix> {
        let mut it = parts.into_iter();
        let Some(mut out) = it.next() else {
            return Err(Error::Config("cannot stack zero matrices".into()));
        };
        for m in it {
            if m.schema_hash != out.schema_hash {
                return Err(Error::SchemaMismatch { expected: out.schema_hash, found: m.schema_hash });
            }
            out.rows.extend(m.rows);
            out.data.extend(m.data);
        }
        Ok(out)
    }

    /// Sub-matrix of the given rows, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> FeatureMatrix {
        let mut data = Vec::with_capacity(idx.len() * self.n_cols());
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        FeatureMatrix {
            columns: self.columns.clone(),
            rows: idx.iter().map(|&i| self.rows[i]).collect(),
            data,
            schema_hash: self.schema_hash.clone(),
        }
    }
}

struct RowBuilder<'s> {
    spec: &'s FeatureSpec,
    sentinel: f64,
    out: Vec<f64>,
}

impl RowBuilder<'_> {
    fn window_values(&mut self, src: Source, events: &[EventRecord], as_of: NaiveDate) {
        let spec = self.spec;
        for w in &spec.windows {
            // events are sorted by start; keep those with start in (as_of - w, as_of]
            let lo = events.partition_point(|r| days_between(r.event_start, as_of) >= w.days as i64);
            let inw = &events[lo..];
            if spec.has(Aggregate::Count) {
                self.out.push(inw.len() as f64);
            }
            if spec.has(Aggregate::DaysSinceLast) {
                match inw.last() {
                    Some(r) => {
                        self.out.push(days_between(r.event_start, as_of) as f64);
                        self.out.push(0.0);
                    }
                    None => {
                        self.out.push(self.sentinel);
                        self.out.push(1.0);
                    }
                }
            }
            if spec.has(Aggregate::InterArrival) {
                if inw.len() < 2 {
                    self.out.extend([0.0, 0.0, 0.0]);
                } else {
                    let gaps: Vec<f64> =
                        inw.windows(2).map(|p| days_between(p[0].event_start, p[1].event_start) as f64).collect();
                    let min = gaps.iter().copied().fold(f64::INFINITY, f64::min);
                    let max = gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let avg = gaps.iter().sum::<f64>() / gaps.len() as f64;
                    self.out.extend([min, max, avg]);
                }
            }
            if spec.has(Aggregate::Kinds) {
                for &k in src.kinds() {
                    self.out.push(inw.iter().filter(|r| r.attrs.kind == Some(k)).count() as f64);
                }
            }
            if spec.has(Aggregate::Amount) && src.has_amount() {
                let amounts: Vec<f64> = inw.iter().filter_map(|r| r.attrs.amount).map(|c| c.dollars()).collect();
                if amounts.is_empty() {
                    self.out.extend([0.0, 0.0, 0.0, 0.0]);
                } else {
                    let sum: f64 = amounts.iter().sum();
                    let min = amounts.iter().copied().fold(f64::INFINITY, f64::min);
                    let max = amounts.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    self.out.extend([sum, min, max, sum / amounts.len() as f64]);
                }
                if src == Source::Eviction {
                    self.out.push(inw.iter().filter(|r| r.attrs.ofp_date.is_some()).count() as f64);
                }
            }
        }
    }

    fn demographics(&mut self, view: &AsOfView<'_>, row: &CohortRow) {
        let demo = view.demographics(row.person);
        match demo {
            Some(d) => {
                self.out.push(age_in_years(d.birthdate, row.as_of) as f64);
                self.out.push(0.0);
            }
            None => {
                self.out.push(0.0);
                self.out.push(1.0);
            }
        }
        let gender = demo.map_or(Gender::Unknown, |d| d.gender);
        let race = demo.map_or(Race::Unknown, |d| d.race);
        for g in Gender::ALL {
            self.out.push(f64::from(u8::from(g == gender)));
        }
        for r in Race::ALL {
            self.out.push(f64::from(u8::from(r == race)));
        }
    }
}

fn row_features(view: &AsOfView<'_>, row: &CohortRow, spec: &FeatureSpec, width: usize) -> Vec<f64> {
    let mut b = RowBuilder { spec, sentinel: spec.sentinel_days as f64, out: Vec::with_capacity(width) };
    let mut events: Vec<EventRecord> = Vec::new();
    for &src in &spec.sources {
        events.clear();
        events.extend(view.history(row.person, src).filter(|r| r.event_start <= row.as_of));
        events.sort_by_key(|r| r.event_start);
        b.window_values(src, &events, row.as_of);
    }
    if spec.demographics {
        b.demographics(view, row);
    }
    debug_assert_eq!(b.out.len(), width);
    b.out
}

/// Builds one feature row per cohort row, each from a view at that row's
/// own as-of date.
pub fn build_matrix<F: ViewFactory + Sync>(rows: &[CohortRow], views: &F, spec: &FeatureSpec) -> Result<FeatureMatrix> {
    spec.validate()?;
    let columns = spec.columns();
    let width = columns.len();
    let values: Vec<Vec<f64>> = rows
        .par_iter()
        .map(|row| views.view_at(row.as_of).map(|v| row_features(&v, row, spec, width)))
        .collect::<Result<_>>()?;
    let schema_hash = schema_hash(columns.iter().map(|c| c.name.as_str()));
    Ok(FeatureMatrix { columns, rows: rows.to_vec(), data: values.concat(), schema_hash })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicRatio {
    pub column: String,
    pub selected_mean: f64,
    pub rest_mean: f64,
    pub ratio: Metric,
}

/// Per column, mean over the selected rows divided by mean over the rest.
pub fn characteristic_ratios(matrix: &FeatureMatrix, selection: &[usize]) -> Result<Vec<CharacteristicRatio>> {
    let n = matrix.n_rows();
    let mut selected = vec![false; n];
    for &i in selection {
        if i >= n {
            return Err(Error::Config(format!("selection index {i} out of range for {n} rows")));
        }
        selected[i] = true;
    }
    let n_sel = selected.iter().filter(|&&s| s).count();
    if n_sel == 0 || n_sel == n {
        return Err(Error::Config("selection must be a nonempty proper subset".into()));
    }
    let p = matrix.n_cols();
    let mut sum_sel = vec![0.0; p];
    let mut sum_rest = vec![0.0; p];
    for (i, &s) in selected.iter().enumerate() {
        let acc = if s { &mut sum_sel } else { &mut sum_rest };
        for (a, v) in acc.iter_mut().zip(matrix.row(i)) {
            *a += v;
        }
    }
    Ok(matrix
        .columns
        .iter()
        .enumerate()
        .map(|(j, c)| {
            let selected_mean = sum_sel[j] / n_sel as f64;
            let rest_mean = sum_rest[j] / (n - n_sel) as f64;
            let ratio = if selected_mean == rest_mean && rest_mean != 0.0 {
                Metric::Value(1.0)
            } else {
                Metric::ratio(selected_mean, rest_mean, "zero mean outside the selection")
            };
            CharacteristicRatio { column: c.name.clone(), selected_mean, rest_mean, ratio }
        })
        .collect())
}

#[derive(Debug, Serialize, Deserialize)]
struct SchemaFile {
    schema_hash: String,
    columns: Vec<ColumnInfo>,
}

/// Writes the matrix as CSV (person_id, as_of, label, then features) and the
/// column schema as a TOML sidecar next to it.
pub fn write_matrix(matrix: &FeatureMatrix, csv_path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(csv_path)?;
    let mut header = vec!["person_id".to_string(), "as_of".into(), "label".into()];
    header.extend(matrix.columns.iter().map(|c| c.name.clone()));
    w.write_record(&header)?;
    for (i, r) in matrix.rows.iter().enumerate() {
        let mut rec = vec![r.person.0.to_string(), r.as_of.to_string(), r.label.map_or(String::new(), |l| u8::from(l).to_string())];
        rec.extend(matrix.row(i).iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    let schema = SchemaFile { schema_hash: matrix.schema_hash.clone(), columns: matrix.columns.clone() };
    std::fs::write(csv_path.with_extension("schema.toml"), toml::to_string(&schema)?)?;
    Ok(())
}
