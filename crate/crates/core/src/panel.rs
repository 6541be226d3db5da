//! Linked employer-employee panels: data model, ingestion and validation.
//!
//! A [`Panel`] stores worker-period observations column-wise, sorted by
//! `(worker, period)`, with dense internal indices for workers and firms and
//! bidirectional maps back to the external string ids found in the input.
//! Each worker holds at most one job per period.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column-name mapping for delimited panel files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PanelSchema {
    pub worker: String,
    pub firm: String,
    pub period: String,
    pub log_wage: String,
    pub covariates: Vec<String>,
    pub delimiter: char,
}

impl Default for PanelSchema {
    fn default() -> Self {
        Self {
            worker: "worker".into(),
            firm: "firm".into(),
            period: "period".into(),
            log_wage: "log_wage".into(),
            covariates: Vec::new(),
            delimiter: ',',
        }
    }
}

impl PanelSchema {
    pub fn with_covariates<I, S>(mut self, names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.covariates = names.into_iter().map(Into::into).collect();
        self
    }

    fn delimiter_byte(&self) -> Result<u8> {
        u8::try_from(self.delimiter)
            .ok()
            .filter(|b| b.is_ascii())
            .ok_or_else(|| Error::InvalidConfig(format!("delimiter {:?} is not ASCII", self.delimiter)))
    }
}

/// Borrowed view of one worker-period observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation<'a> {
    pub worker: usize,
    pub firm: usize,
    pub period: i64,
    pub log_wage: f64,
    pub covariates: &'a [f64],
}

/// Validated linked panel, immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    worker: Vec<usize>,
    firm: Vec<usize>,
    period: Vec<i64>,
    log_wage: Vec<f64>,
    covariates: Vec<f64>,
    covariate_names: Vec<String>,
    worker_offsets: Vec<usize>,
    worker_ids: Vec<String>,
    firm_ids: Vec<String>,
    worker_lookup: HashMap<String, usize>,
    firm_lookup: HashMap<String, usize>,
    n_periods: usize,
}

/// Ordering used to assign dense indices: integer-looking ids numerically,
/// everything else lexicographically after them.
pub(crate) fn external_id_order(a: &str, b: &str) -> Ordering {
    match (a.parse::<i64>(), b.parse::<i64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y).then_with(|| a.cmp(b)),
        (Ok(_), Err(_)) => Ordering::Less,
        (Err(_), Ok(_)) => Ordering::Greater,
        (Err(_), Err(_)) => a.cmp(b),
    }
}

impl Panel {
    pub fn n_obs(&self) -> usize {
        self.worker.len()
    }

    pub fn n_workers(&self) -> usize {
        self.worker_ids.len()
    }

    pub fn n_firms(&self) -> usize {
        self.firm_ids.len()
    }

    /// Number of distinct periods observed.
    pub fn n_periods(&self) -> usize {
        self.n_periods
    }

    pub fn covariate_count(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn workers(&self) -> &[usize] {
        &self.worker
    }

    pub fn firms(&self) -> &[usize] {
        &self.firm
    }

    pub fn periods(&self) -> &[i64] {
        &self.period
    }

    pub fn log_wages(&self) -> &[f64] {
        &self.log_wage
    }

    /// Row-major `n_obs x covariate_count` covariate matrix.
    pub fn covariate_matrix(&self) -> &[f64] {
        &self.covariates
    }

    pub fn covariates(&self, obs: usize) -> &[f64] {
        let k = self.covariate_count();
        &self.covariates[obs * k..(obs + 1) * k]
    }

    pub fn observation(&self, obs: usize) -> Observation<'_> {
        Observation {
            worker: self.worker[obs],
            firm: self.firm[obs],
            period: self.period[obs],
            log_wage: self.log_wage[obs],
            covariates: self.covariates(obs),
        }
    }

    pub fn observations(&self) -> impl Iterator<Item = Observation<'_>> + '_ {
        (0..self.n_obs()).map(move |o| self.observation(o))
    }

    /// Observation indices belonging to `worker`, in period order.
    pub fn worker_range(&self, worker: usize) -> Range<usize> {
        self.worker_offsets[worker]..self.worker_offsets[worker + 1]
    }

    pub fn worker_id(&self, worker: usize) -> &str {
        &self.worker_ids[worker]
    }

    pub fn firm_id(&self, firm: usize) -> &str {
        &self.firm_ids[firm]
    }

    pub fn worker_ids(&self) -> &[String] {
        &self.worker_ids
    }

    pub fn firm_ids(&self) -> &[String] {
        &self.firm_ids
    }

    pub fn worker_index(&self, id: &str) -> Option<usize> {
        self.worker_lookup.get(id).copied()
    }

    pub fn firm_index(&self, id: &str) -> Option<usize> {
        self.firm_lookup.get(id).copied()
    }

    /// Person-years per firm.
    pub fn firm_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_firms()];
        for &f in &self.firm {
            sizes[f] += 1;
        }
        sizes
    }

    /// Observations per worker.
    pub fn worker_counts(&self) -> Vec<usize> {
        self.worker_offsets.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Keeps exactly the observations whose worker and firm are both kept.
    /// Indices of the result are re-densified; external ids are preserved.
    pub fn restrict(&self, keep_workers: &[usize], keep_firms: &[usize]) -> Result<Panel> {
        if keep_workers.is_empty() || keep_firms.is_empty() {
            return Err(Error::EmptyPanel);
        }
        let mut worker_mask = vec![false; self.n_workers()];
        for &w in keep_workers {
            if w < worker_mask.len() {
                worker_mask[w] = true;
            }
        }
        let mut firm_mask = vec![false; self.n_firms()];
        for &f in keep_firms {
            if f < firm_mask.len() {
                firm_mask[f] = true;
            }
        }
        self.restrict_masks(&worker_mask, &firm_mask)
    }

    pub(crate) fn restrict_masks(&self, worker_mask: &[bool], firm_mask: &[bool]) -> Result<Panel> {
        let keep: Vec<usize> =
            (0..self.n_obs()).filter(|&o| worker_mask[self.worker[o]] && firm_mask[self.firm[o]]).collect();
        self.select_observations(&keep)
    }

    /// Builds a panel from a subset of observation indices (sorted ascending).
    pub(crate) fn select_observations(&self, keep: &[usize]) -> Result<Panel> {
        if keep.is_empty() {
            return Err(Error::EmptyPanel);
        }
        let mut new_worker = vec![usize::MAX; self.n_workers()];
        let mut new_firm = vec![usize::MAX; self.n_firms()];
        for &o in keep {
            new_worker[self.worker[o]] = 0;
            new_firm[self.firm[o]] = 0;
        }
        // Dense indices follow the old order, which already follows external id order.
        let mut worker_ids = Vec::new();
        for (w, slot) in new_worker.iter_mut().enumerate() {
            if *slot == 0 {
                *slot = worker_ids.len();
                worker_ids.push(self.worker_ids[w].clone());
            }
        }
        let mut firm_ids = Vec::new();
        for (f, slot) in new_firm.iter_mut().enumerate() {
            if *slot == 0 {
                *slot = firm_ids.len();
                firm_ids.push(self.firm_ids[f].clone());
            }
        }
        let k = self.covariate_count();
        let mut worker = Vec::with_capacity(keep.len());
        let mut firm = Vec::with_capacity(keep.len());
        let mut period = Vec::with_capacity(keep.len());
        let mut log_wage = Vec::with_capacity(keep.len());
        let mut covariates = Vec::with_capacity(keep.len() * k);
        for &o in keep {
            worker.push(new_worker[self.worker[o]]);
            firm.push(new_firm[self.firm[o]]);
            period.push(self.period[o]);
            log_wage.push(self.log_wage[o]);
            covariates.extend_from_slice(self.covariates(o));
        }
        Ok(Self::assemble(
            worker,
            firm,
            period,
            log_wage,
            covariates,
            self.covariate_names.clone(),
            worker_ids,
            firm_ids,
        ))
    }

    /// Internal constructor; inputs must already be sorted by (worker, period)
    /// with dense indices.
    #[allow(clippy::too_many_arguments)]
    fn assemble(
        worker: Vec<usize>,
        firm: Vec<usize>,
        period: Vec<i64>,
        log_wage: Vec<f64>,
        covariates: Vec<f64>,
        covariate_names: Vec<String>,
        worker_ids: Vec<String>,
        firm_ids: Vec<String>,
    ) -> Panel {
        let mut worker_offsets = vec![0; worker_ids.len() + 1];
        for &w in &worker {
            worker_offsets[w + 1] += 1;
        }
        for i in 0..worker_ids.len() {
            worker_offsets[i + 1] += worker_offsets[i];
        }
        let n_periods = period.iter().collect::<HashSet<_>>().len();
        let worker_lookup = worker_ids.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        let firm_lookup = firm_ids.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        Panel {
            worker,
            firm,
            period,
            log_wage,
            covariates,
            covariate_names,
            worker_offsets,
            worker_ids,
            firm_ids,
            worker_lookup,
            firm_lookup,
            n_periods,
        }
    }

    /// Writes the panel as delimited text using the default column names plus
    /// the covariate names. Floats use the shortest representation that
    /// parses back to the same bits.
    pub fn write_delimited<W: Write>(&self, out: W, delimiter: u8) -> Result<()> {
        let mut writer = csv::WriterBuilder::new().delimiter(delimiter).from_writer(out);
        let mut header = vec!["worker".to_string(), "firm".into(), "period".into(), "log_wage".into()];
        header.extend(self.covariate_names.iter().cloned());
        writer.write_record(&header)?;
        let mut row = Vec::with_capacity(header.len());
        for o in 0..self.n_obs() {
            row.clear();
            row.push(self.worker_ids[self.worker[o]].clone());
            row.push(self.firm_ids[self.firm[o]].clone());
            row.push(self.period[o].to_string());
            row.push(self.log_wage[o].to_string());
            row.extend(self.covariates(o).iter().map(f64::to_string));
            writer.write_record(&row)?;
        }
        writer.flush().map_err(|source| Error::Io { path: "<writer>".into(), source })?;
        Ok(())
    }

    /// Schema matching [`Panel::write_delimited`] output.
    pub fn default_schema(&self) -> PanelSchema {
        PanelSchema::default().with_covariates(self.covariate_names.iter().cloned())
    }
}

/// Why an input row was rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    Unparseable,
    NonFinite,
    DuplicateWorkerPeriod,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedRow {
    /// 1-based data row number (header excluded).
    pub row: usize,
    pub reason: DropReason,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSummary {
    pub name: String,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

/// Counts and warnings collected while ingesting a panel.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub rows_read: usize,
    pub rows_kept: usize,
    pub rows_dropped: usize,
    pub duplicate_worker_periods: usize,
    /// Duplicates whose firm differs from the kept row: simultaneous jobs.
    pub multiple_jobs: usize,
    pub non_finite_values: usize,
    pub unparseable_rows: usize,
    pub dropped: Vec<DroppedRow>,
    pub columns: Vec<ColumnSummary>,
    pub warnings: Vec<String>,
}

/// Outcome of pushing one row into a [`PanelBuilder`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PushOutcome {
    Kept,
    NonFinite,
    Duplicate { same_firm: bool },
}

/// Accumulates rows, enforcing finiteness and one job per worker-period
/// (first occurrence wins), then sorts and densifies into a [`Panel`].
#[derive(Debug)]
pub struct PanelBuilder {
    covariate_names: Vec<String>,
    worker_intern: HashMap<String, usize>,
    worker_names: Vec<String>,
    firm_intern: HashMap<String, usize>,
    firm_names: Vec<String>,
    seen: HashMap<(usize, i64), usize>,
    worker: Vec<usize>,
    firm: Vec<usize>,
    period: Vec<i64>,
    log_wage: Vec<f64>,
    covariates: Vec<f64>,
}

impl PanelBuilder {
    pub fn new(covariate_names: Vec<String>) -> Self {
        Self {
            covariate_names,
            worker_intern: HashMap::new(),
            worker_names: Vec::new(),
            firm_intern: HashMap::new(),
            firm_names: Vec::new(),
            seen: HashMap::new(),
            worker: Vec::new(),
            firm: Vec::new(),
            period: Vec::new(),
            log_wage: Vec::new(),
            covariates: Vec::new(),
        }
    }

    pub fn with_capacity(covariate_names: Vec<String>, rows: usize) -> Self {
        let mut builder = Self::new(covariate_names);
        builder.worker.reserve(rows);
        builder.firm.reserve(rows);
        builder.period.reserve(rows);
        builder.log_wage.reserve(rows);
        builder.seen.reserve(rows);
        builder
    }

    fn intern(map: &mut HashMap<String, usize>, names: &mut Vec<String>, id: &str) -> usize {
        if let Some(&i) = map.get(id) {
            return i;
        }
        let i = names.len();
        map.insert(id.to_string(), i);
        names.push(id.to_string());
        i
    }

    pub fn push(&mut self, worker: &str, firm: &str, period: i64, log_wage: f64, covariates: &[f64]) -> PushOutcome {
        assert_eq!(covariates.len(), self.covariate_names.len(), "covariate arity");
        if !log_wage.is_finite() || covariates.iter().any(|x| !x.is_finite()) {
            return PushOutcome::NonFinite;
        }
        let w = Self::intern(&mut self.worker_intern, &mut self.worker_names, worker);
        if let Some(&first) = self.seen.get(&(w, period)) {
            let same_firm = self.firm_names[self.firm[first]] == firm;
            return PushOutcome::Duplicate { same_firm };
        }
        let f = Self::intern(&mut self.firm_intern, &mut self.firm_names, firm);
        self.seen.insert((w, period), self.worker.len());
        self.worker.push(w);
        self.firm.push(f);
        self.period.push(period);
        self.log_wage.push(log_wage);
        self.covariates.extend_from_slice(covariates);
        PushOutcome::Kept
    }

    pub fn len(&self) -> usize {
        self.worker.len()
    }

    pub fn is_empty(&self) -> bool {
        self.worker.is_empty()
    }

    pub fn build(self) -> Result<Panel> {
        if self.worker.is_empty() {
            return Err(Error::NoValidRows);
        }
        let worker_map = dense_order(&self.worker_names);
        let firm_map = dense_order(&self.firm_names);
        let mut worker_ids = vec![String::new(); self.worker_names.len()];
        for (tmp, name) in self.worker_names.into_iter().enumerate() {
            worker_ids[worker_map[tmp]] = name;
        }
        let mut firm_ids = vec![String::new(); self.firm_names.len()];
        for (tmp, name) in self.firm_names.into_iter().enumerate() {
            firm_ids[firm_map[tmp]] = name;
        }
        let n = self.worker.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_unstable_by_key(|&o| (worker_map[self.worker[o]], self.period[o]));
        let k = self.covariate_names.len();
        let mut covariates = Vec::with_capacity(n * k);
        for &o in &order {
            covariates.extend_from_slice(&self.covariates[o * k..(o + 1) * k]);
        }
        Ok(Panel::assemble(
            order.iter().map(|&o| worker_map[self.worker[o]]).collect(),
            order.iter().map(|&o| firm_map[self.firm[o]]).collect(),
            order.iter().map(|&o| self.period[o]).collect(),
            order.iter().map(|&o| self.log_wage[o]).collect(),
            covariates,
            self.covariate_names,
            worker_ids,
            firm_ids,
        ))
    }
}

/// Maps temporary (first-appearance) indices to dense indices in external id order.
fn dense_order(names: &[String]) -> Vec<usize> {
    let mut sorted: Vec<usize> = (0..names.len()).collect();
    sorted.sort_by(|&a, &b| external_id_order(&names[a], &names[b]));
    let mut map = vec![0; names.len()];
    for (dense, tmp) in sorted.into_iter().enumerate() {
        map[tmp] = dense;
    }
    map
}

/// Reads and validates a delimited panel file.
pub fn load_panel(path: impl AsRef<Path>, schema: &PanelSchema) -> Result<(Panel, ValidationReport)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    read_panel(file, schema)
}

/// Reads and validates a delimited panel from any reader.
pub fn read_panel<R: Read>(input: R, schema: &PanelSchema) -> Result<(Panel, ValidationReport)> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter_byte()?)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = reader.headers()?.clone();
    let column = |name: &str| -> Result<usize> {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let worker_col = column(&schema.worker)?;
    let firm_col = column(&schema.firm)?;
    let period_col = column(&schema.period)?;
    let wage_col = column(&schema.log_wage)?;
    let cov_cols = schema.covariates.iter().map(|c| column(c)).collect::<Result<Vec<_>>>()?;

    let mut report = ValidationReport::default();
    let mut builder = PanelBuilder::new(schema.covariates.clone());
    let mut covs = vec![0.0; cov_cols.len()];
    let mut record = csv::StringRecord::new();
    while reader.read_record(&mut record)? {
        report.rows_read += 1;
        let row = report.rows_read;
        let field = |c: usize| record.get(c).filter(|s| !s.is_empty());
        let parsed = (|| {
            let worker = field(worker_col).ok_or("missing worker id")?;
            let firm = field(firm_col).ok_or("missing firm id")?;
            let period = field(period_col).and_then(|s| s.parse::<i64>().ok()).ok_or("period is not an integer")?;
            let wage = field(wage_col).and_then(|s| s.parse::<f64>().ok()).ok_or("log wage is not a number")?;
            for (slot, &c) in covs.iter_mut().zip(&cov_cols) {
                *slot = field(c).and_then(|s| s.parse::<f64>().ok()).ok_or("covariate is not a number")?;
            }
            Ok::<_, &str>((worker, firm, period, wage))
        })();
        let (worker, firm, period, wage) = match parsed {
            Ok(p) => p,
            Err(detail) => {
                report.unparseable_rows += 1;
                report.dropped.push(DroppedRow { row, reason: DropReason::Unparseable, detail: detail.into() });
                continue;
            }
        };
        match builder.push(worker, firm, period, wage, &covs) {
            PushOutcome::Kept => {}
            PushOutcome::NonFinite => {
                report.non_finite_values += 1;
                report.dropped.push(DroppedRow {
                    row,
                    reason: DropReason::NonFinite,
                    detail: format!("non-finite value for worker {worker} period {period}"),
                });
            }
            PushOutcome::Duplicate { same_firm } => {
                report.duplicate_worker_periods += 1;
                if !same_firm {
                    report.multiple_jobs += 1;
                }
                report.dropped.push(DroppedRow {
                    row,
                    reason: DropReason::DuplicateWorkerPeriod,
                    detail: format!("worker {worker} already observed in period {period}"),
                });
            }
        }
    }
    report.rows_kept = builder.len();
    report.rows_dropped = report.dropped.len();
    if report.non_finite_values > 0 {
        report.warnings.push(format!("{} rows dropped for non-finite values", report.non_finite_values));
    }
    if report.duplicate_worker_periods > 0 {
        report.warnings.push(format!(
            "{} duplicate worker-period rows dropped (first occurrence kept)",
            report.duplicate_worker_periods
        ));
    }
    if report.multiple_jobs > 0 {
        report.warnings.push(format!(
            "{} rows record a second simultaneous employer; only one job per period is modeled",
            report.multiple_jobs
        ));
    }
    if report.unparseable_rows > 0 {
        report.warnings.push(format!("{} unparseable rows dropped", report.unparseable_rows));
    }
    let panel = builder.build()?;
    report.columns = summarize_columns(&panel);
    Ok((panel, report))
}

fn summarize_columns(panel: &Panel) -> Vec<ColumnSummary> {
    let summarize = |name: &str, values: &mut dyn Iterator<Item = f64>| {
        let (mut min, mut max, mut sum, mut n) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0usize);
        for v in values {
            min = min.min(v);
            max = max.max(v);
            sum += v;
            n += 1;
        }
        ColumnSummary { name: name.to_string(), min, max, mean: sum / n as f64 }
    };
    let mut out = vec![summarize("log_wage", &mut panel.log_wages().iter().copied())];
    let k = panel.covariate_count();
    for (c, name) in panel.covariate_names().iter().enumerate() {
        out.push(summarize(name, &mut (0..panel.n_obs()).map(|o| panel.covariate_matrix()[o * k + c])));
    }
    out
}
