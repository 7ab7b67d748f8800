//! Individual records on two time scales and their binning into event and
//! exposure arrays.
//!
//! A record is stored in `(u, s)` coordinates: `u = t - s` is the fixed
//! offset between the origins of the two scales and `[s_in, s_out]` is the
//! period at risk along `s`. Exposure in a bin is the overlap length of that
//! interval with the bin. An event is counted in the bin whose interval
//! `(τ_{k-1}, τ_k]` contains `s_out` (the first bin also contains its left
//! edge), so an event always lands in a bin where the same record has
//! positive exposure. The `u` row of a record uses left-closed bins
//! `[τ_{j-1}, τ_j)`, with the last bin closed.

use std::io::{Read, Write};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndividualRecord {
    pub id: String,
    pub u: f64,
    pub s_in: f64,
    pub s_out: f64,
    pub event: bool,
    pub covariates: Vec<f64>,
}

impl IndividualRecord {
    pub fn new(
        id: impl Into<String>,
        u: f64,
        s_in: f64,
        s_out: f64,
        event: bool,
        covariates: Vec<f64>,
    ) -> Result<Self> {
        let id = id.into();
        let invalid = |reason: String| Error::InvalidRecord {
            id: id.clone(),
            reason,
        };
        if !u.is_finite() || u < 0.0 {
            return Err(invalid(format!("u = {u} must be finite and >= 0")));
        }
        if !s_in.is_finite() || s_in < 0.0 {
            return Err(invalid(format!("s_in = {s_in} must be finite and >= 0")));
        }
        if !s_out.is_finite() || s_out <= s_in {
            return Err(invalid(format!(
                "s_out = {s_out} must exceed s_in = {s_in}"
            )));
        }
        if let Some(v) = covariates.iter().find(|v| !v.is_finite()) {
            return Err(invalid(format!("non-finite covariate {v}")));
        }
        Ok(Self {
            id,
            u,
            s_in,
            s_out,
            event,
            covariates,
        })
    }

    /// Builds a record from times measured on one common clock: the origin
    /// of the first scale, the origin of the second scale (for example the
    /// day of recurrence) and the exit time. Follow-up on `s` starts at 0.
    pub fn from_origins(
        id: impl Into<String>,
        t_origin: f64,
        s_origin: f64,
        exit: f64,
        event: bool,
        covariates: Vec<f64>,
    ) -> Result<Self> {
        Self::new(
            id,
            s_origin - t_origin,
            0.0,
            exit - s_origin,
            event,
            covariates,
        )
    }

    /// Exit point on the first time scale, `t = u + s_out`.
    pub fn t_out(&self) -> f64 {
        self.u + self.s_out
    }
}

/// `(t, s) -> (u, s)` with `u = t - s`.
pub fn transform_ts_to_us(t: f64, s: f64) -> Result<(f64, f64)> {
    if !(t >= s) || !(s >= 0.0) {
        return Err(Error::OutsideHazardDomain { t, s });
    }
    Ok((t - s, s))
}

/// `(u, s) -> (t, s)` with `t = u + s`.
pub fn transform_us_to_ts(u: f64, s: f64) -> (f64, f64) {
    (u + s, s)
}

/// Equally wide bins along one axis, with edges `τ_j = origin + j·width`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinAxis {
    pub origin: f64,
    pub width: f64,
    pub count: usize,
}

impl BinAxis {
    pub fn new(origin: f64, width: f64, count: usize) -> Result<Self> {
        if !origin.is_finite() || !(width > 0.0) || !width.is_finite() || count == 0 {
            return Err(Error::InvalidBinGrid(format!(
                "origin {origin}, width {width}, count {count}"
            )));
        }
        Ok(Self {
            origin,
            width,
            count,
        })
    }

    /// Smallest axis from `origin` whose end covers `max_value`.
    pub fn covering(origin: f64, width: f64, max_value: f64) -> Result<Self> {
        let count = ((max_value - origin) / width).ceil().max(1.0) as usize;
        let mut axis = Self::new(origin, width, count)?;
        while axis.end() < max_value {
            axis.count += 1;
        }
        Ok(axis)
    }

    pub fn edge(&self, j: usize) -> f64 {
        self.origin + j as f64 * self.width
    }

    pub fn end(&self) -> f64 {
        self.edge(self.count)
    }

    pub fn midpoint(&self, j: usize) -> f64 {
        self.edge(j + 1) - self.width / 2.0
    }

    pub fn midpoints(&self) -> Vec<f64> {
        (0..self.count).map(|j| self.midpoint(j)).collect()
    }

    pub fn covers(&self, x: f64) -> bool {
        x >= self.origin && x <= self.end()
    }

    /// Bin of `x` under `[τ_j, τ_{j+1})`, with the last bin closed.
    pub fn left_closed_index(&self, x: f64) -> Option<usize> {
        if !self.covers(x) {
            return None;
        }
        let mut j = (((x - self.origin) / self.width).floor().max(0.0) as usize).min(self.count);
        while j > 0 && x < self.edge(j) {
            j -= 1;
        }
        while j < self.count && x >= self.edge(j + 1) {
            j += 1;
        }
        Some(j.min(self.count - 1))
    }

    /// Bin of `x` under `(τ_j, τ_{j+1}]`, with the first bin closed.
    pub fn right_closed_index(&self, x: f64) -> Option<usize> {
        if !self.covers(x) {
            return None;
        }
        let mut j = (((x - self.origin) / self.width).ceil().max(1.0) as usize).min(self.count);
        while j > 1 && x <= self.edge(j - 1) {
            j -= 1;
        }
        while j < self.count && x > self.edge(j) {
            j += 1;
        }
        Some(j - 1)
    }

    /// Overlaps of `[lo, hi]` with each bin it touches, as `(bin, length)`
    /// pairs in increasing bin order.
    fn overlaps(&self, lo: f64, hi: f64) -> Vec<(usize, f64)> {
        let first = self.left_closed_index(lo).unwrap_or(0);
        let last = self.right_closed_index(hi).unwrap_or(self.count - 1);
        (first..=last)
            .filter_map(|j| {
                let a = lo.max(self.edge(j));
                let b = hi.min(self.edge(j + 1));
                (b > a).then_some((j, b - a))
            })
            .collect()
    }
}

/// Bins over the `(u, s)` plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinGrid {
    pub u: BinAxis,
    pub s: BinAxis,
}

#[derive(Debug, Clone)]
pub struct BinnedData1D {
    /// Events per bin; integral when produced by [`bin_1d`].
    pub y: Array1<f64>,
    /// Person-time per bin.
    pub r: Array1<f64>,
    pub axis: BinAxis,
    /// Largest exit time among the binned records.
    pub max_exit: f64,
}

impl BinnedData1D {
    /// Wraps pre-aggregated counts; `max_exit` is set to the end of the
    /// last bin with positive exposure.
    pub fn new(axis: BinAxis, y: Array1<f64>, r: Array1<f64>) -> Result<Self> {
        if y.len() != axis.count || r.len() != axis.count {
            return Err(Error::DimensionMismatch {
                context: "binned data 1d",
                expected: axis.count.to_string(),
                found: format!("y {}, r {}", y.len(), r.len()),
            });
        }
        if y.iter().chain(r.iter()).any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidBinGrid(
                "counts and exposures must be finite and non-negative".into(),
            ));
        }
        let max_exit = (0..axis.count)
            .rev()
            .find(|&j| r[j] > 0.0)
            .map(|j| axis.edge(j + 1))
            .unwrap_or(axis.origin);
        Ok(Self {
            y,
            r,
            axis,
            max_exit,
        })
    }
}

#[derive(Debug, Clone)]
pub struct BinnedData2D {
    /// Events, `n_u x n_s`.
    pub y: Array2<f64>,
    /// Exposures, `n_u x n_s`.
    pub r: Array2<f64>,
    pub grid: BinGrid,
    pub support: Support,
}

/// Region of the `(u, s)` plane covered by observed follow-up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Support {
    /// Largest observed `u`.
    pub u_max: f64,
    /// For each `u` row `j`, the largest exit time `s_out` among records in
    /// rows `j` and above. Rows with no such record hold `-inf`.
    pub last_exit: Vec<f64>,
}

impl Support {
    fn from_records(records: &[IndividualRecord], grid: &BinGrid) -> Self {
        let mut row_max = vec![f64::NEG_INFINITY; grid.u.count];
        let mut u_max = f64::NEG_INFINITY;
        for rec in records {
            if let Some(j) = grid.u.left_closed_index(rec.u) {
                row_max[j] = row_max[j].max(rec.s_out);
            }
            u_max = u_max.max(rec.u);
        }
        for j in (0..row_max.len().saturating_sub(1)).rev() {
            row_max[j] = row_max[j].max(row_max[j + 1]);
        }
        Self {
            u_max,
            last_exit: row_max,
        }
    }

    /// Support derived from exposure alone: a bin is supported when it or a
    /// bin at a larger `u` with a larger `s` carries exposure.
    pub fn from_exposure(r: &Array2<f64>, grid: &BinGrid) -> Self {
        let (nu, ns) = r.dim();
        let mut row_max = vec![f64::NEG_INFINITY; nu];
        let mut u_max = f64::NEG_INFINITY;
        for j in 0..nu {
            if let Some(k) = (0..ns).rev().find(|&k| r[[j, k]] > 0.0) {
                row_max[j] = grid.s.edge(k + 1);
                u_max = grid.u.edge(j + 1);
            }
        }
        for j in (0..nu.saturating_sub(1)).rev() {
            row_max[j] = row_max[j].max(row_max[j + 1]);
        }
        Self {
            u_max,
            last_exit: row_max,
        }
    }

    /// True when `(u, s)` lies beyond the observed follow-up.
    pub fn is_extrapolated(&self, grid: &BinGrid, u: f64, s: f64) -> bool {
        if u > self.u_max || u < grid.u.origin || s < grid.s.origin {
            return true;
        }
        let j = grid
            .u
            .left_closed_index(u)
            .unwrap_or(grid.u.count.saturating_sub(1));
        s > self.last_exit[j]
    }
}

impl BinnedData2D {
    pub fn new(grid: BinGrid, y: Array2<f64>, r: Array2<f64>) -> Result<Self> {
        let shape = (grid.u.count, grid.s.count);
        if y.dim() != shape || r.dim() != shape {
            return Err(Error::DimensionMismatch {
                context: "binned data 2d",
                expected: format!("{shape:?}"),
                found: format!("y {:?}, r {:?}", y.dim(), r.dim()),
            });
        }
        if y.iter().chain(r.iter()).any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidBinGrid(
                "counts and exposures must be finite and non-negative".into(),
            ));
        }
        let support = Support::from_exposure(&r, &grid);
        Ok(Self {
            y,
            r,
            grid,
            support,
        })
    }

    pub fn total_events(&self) -> f64 {
        self.y.sum()
    }

    pub fn transpose(&self) -> Self {
        let grid = BinGrid {
            u: self.grid.s,
            s: self.grid.u,
        };
        let r = self.r.t().to_owned();
        Self {
            y: self.y.t().to_owned(),
            support: Support::from_exposure(&r, &grid),
            r,
            grid,
        }
    }
}

/// One individual's events and exposures: a single `u` row holding a
/// contiguous run of `s` bins.
#[derive(Debug, Clone, PartialEq)]
pub struct IndividualSlice {
    pub u_row: usize,
    pub s_start: usize,
    pub y: Vec<f64>,
    pub r: Vec<f64>,
}

impl IndividualSlice {
    pub fn s_bins(&self) -> std::ops::Range<usize> {
        self.s_start..self.s_start + self.r.len()
    }

    pub fn to_dense(&self, grid: &BinGrid) -> (Array2<f64>, Array2<f64>) {
        let mut y = Array2::zeros((grid.u.count, grid.s.count));
        let mut r = Array2::zeros((grid.u.count, grid.s.count));
        for (offset, k) in self.s_bins().enumerate() {
            y[[self.u_row, k]] = self.y[offset];
            r[[self.u_row, k]] = self.r[offset];
        }
        (y, r)
    }
}

#[derive(Debug, Clone)]
pub struct BinnedData3D {
    pub slices: Vec<IndividualSlice>,
    /// Covariates, `n x p`, in record order.
    pub x: Array2<f64>,
    pub covariate_names: Vec<String>,
    pub grid: BinGrid,
    pub support: Support,
}

impl BinnedData3D {
    pub fn n_individuals(&self) -> usize {
        self.slices.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.x.ncols()
    }

    /// Sum of the individual slices.
    pub fn aggregate(&self) -> BinnedData2D {
        let shape = (self.grid.u.count, self.grid.s.count);
        let mut y = Array2::zeros(shape);
        let mut r = Array2::zeros(shape);
        for slice in &self.slices {
            for (offset, k) in slice.s_bins().enumerate() {
                y[[slice.u_row, k]] += slice.y[offset];
                r[[slice.u_row, k]] += slice.r[offset];
            }
        }
        BinnedData2D {
            y,
            r,
            grid: self.grid,
            support: self.support.clone(),
        }
    }

    /// Keeps only the listed covariate columns, in the given order.
    pub fn select_covariates(&self, columns: &[usize]) -> Self {
        let x = self.x.select(ndarray::Axis(1), columns);
        Self {
            slices: self.slices.clone(),
            x,
            covariate_names: columns
                .iter()
                .map(|&c| self.covariate_names[c].clone())
                .collect(),
            grid: self.grid,
            support: self.support.clone(),
        }
    }
}

fn check_s_coverage<'a>(
    records: impl IntoIterator<Item = &'a IndividualRecord>,
    axis: &BinAxis,
) -> Result<()> {
    let ids: Vec<String> = records
        .into_iter()
        .filter(|r| !axis.covers(r.s_in) || !axis.covers(r.s_out))
        .map(|r| r.id.clone())
        .collect();
    if ids.is_empty() {
        Ok(())
    } else {
        Err(Error::UncoveredRecords { ids })
    }
}

fn check_record(rec: &IndividualRecord) -> Result<()> {
    if !(rec.s_out > rec.s_in) {
        return Err(Error::InvalidRecord {
            id: rec.id.clone(),
            reason: format!("s_in = {} must be below s_out = {}", rec.s_in, rec.s_out),
        });
    }
    Ok(())
}

/// Events and exposures of one record along `s`, as a contiguous run of bins.
fn record_run(rec: &IndividualRecord, axis: &BinAxis) -> (usize, Vec<f64>, Vec<f64>) {
    let overlaps = axis.overlaps(rec.s_in, rec.s_out);
    let start = overlaps.first().map(|o| o.0).unwrap_or(0);
    let end = overlaps.last().map(|o| o.0 + 1).unwrap_or(start);
    let mut r = vec![0.0; end - start];
    for (j, len) in overlaps {
        r[j - start] = len;
    }
    let mut y = vec![0.0; r.len()];
    if rec.event {
        let k = axis
            .right_closed_index(rec.s_out)
            .expect("coverage checked");
        y[k - start] += 1.0;
    }
    (start, y, r)
}

pub fn bin_1d(records: &[IndividualRecord], axis: &BinAxis) -> Result<BinnedData1D> {
    records.iter().try_for_each(check_record)?;
    check_s_coverage(records, axis)?;
    let mut y = Array1::zeros(axis.count);
    let mut r = Array1::zeros(axis.count);
    for rec in records {
        let (start, ys, rs) = record_run(rec, axis);
        for (offset, (yv, rv)) in ys.into_iter().zip(rs).enumerate() {
            y[start + offset] += yv;
            r[start + offset] += rv;
        }
    }
    let max_exit = records.iter().map(|r| r.s_out).fold(axis.origin, f64::max);
    Ok(BinnedData1D {
        y,
        r,
        axis: *axis,
        max_exit,
    })
}

fn u_rows(records: &[IndividualRecord], grid: &BinGrid) -> Result<Vec<usize>> {
    let mut rows = Vec::with_capacity(records.len());
    let mut uncovered = Vec::new();
    for rec in records {
        match grid.u.left_closed_index(rec.u) {
            Some(j) => rows.push(j),
            None => uncovered.push(rec.id.clone()),
        }
    }
    if uncovered.is_empty() {
        Ok(rows)
    } else {
        Err(Error::UncoveredRecords { ids: uncovered })
    }
}

pub fn bin_2d(records: &[IndividualRecord], grid: &BinGrid) -> Result<BinnedData2D> {
    let individuals = bin_individuals_unchecked(records, grid, 0)?;
    Ok(individuals.aggregate())
}

/// Per-individual slices plus the covariate matrix.
pub fn bin_individuals(records: &[IndividualRecord], grid: &BinGrid) -> Result<BinnedData3D> {
    let p = records.first().map(|r| r.covariates.len()).unwrap_or(0);
    if let Some(bad) = records.iter().find(|r| r.covariates.len() != p) {
        return Err(Error::CovariateLength {
            id: bad.id.clone(),
            expected: p,
            found: bad.covariates.len(),
        });
    }
    bin_individuals_unchecked(records, grid, p)
}

fn bin_individuals_unchecked(
    records: &[IndividualRecord],
    grid: &BinGrid,
    p: usize,
) -> Result<BinnedData3D> {
    records.iter().try_for_each(check_record)?;
    let rows = u_rows(records, grid)?;
    check_s_coverage(records, &grid.s)?;
    let mut x = Array2::zeros((records.len(), p));
    let mut slices = Vec::with_capacity(records.len());
    for (i, (rec, &u_row)) in records.iter().zip(&rows).enumerate() {
        let (s_start, y, r) = record_run(rec, &grid.s);
        slices.push(IndividualSlice {
            u_row,
            s_start,
            y,
            r,
        });
        for v in 0..p {
            x[[i, v]] = rec.covariates[v];
        }
    }
    Ok(BinnedData3D {
        slices,
        x,
        covariate_names: (1..=p).map(|v| format!("x{v}")).collect(),
        grid: *grid,
        support: Support::from_records(records, grid),
    })
}

/// Records plus the names of the covariate columns, in header order.
#[derive(Debug, Clone)]
pub struct RecordTable {
    pub records: Vec<IndividualRecord>,
    pub covariate_names: Vec<String>,
}

impl RecordTable {
    pub fn bin_individuals(&self, grid: &BinGrid) -> Result<BinnedData3D> {
        let mut data = bin_individuals(&self.records, grid)?;
        data.covariate_names = self.covariate_names.clone();
        Ok(data)
    }

    pub fn max_u(&self) -> f64 {
        self.records.iter().map(|r| r.u).fold(0.0, f64::max)
    }

    pub fn max_exit(&self) -> f64 {
        self.records.iter().map(|r| r.s_out).fold(0.0, f64::max)
    }

    /// Bins from 0 covering every record.
    pub fn covering_grid(&self, width_u: f64, width_s: f64) -> Result<BinGrid> {
        Ok(BinGrid {
            u: BinAxis::covering(0.0, width_u, self.max_u())?,
            s: BinAxis::covering(0.0, width_s, self.max_exit())?,
        })
    }
}

const REQUIRED_COLUMNS: [&str; 5] = ["id", "u", "s_in", "s_out", "event"];

/// Reads records from CSV with columns `id,u,s_in,s_out,event` followed by
/// any number of numeric covariate columns.
pub fn read_records_csv<R: Read>(reader: R) -> Result<RecordTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Csv {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let mut index = [0usize; 5];
    for (slot, name) in index.iter_mut().zip(REQUIRED_COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Csv {
                line: 1,
                message: format!("missing required column `{name}`"),
            })?;
    }
    let covariate_cols: Vec<usize> = (0..headers.len()).filter(|c| !index.contains(c)).collect();
    let covariate_names: Vec<String> = covariate_cols
        .iter()
        .map(|&c| headers[c].to_string())
        .collect();

    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| Error::Csv {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let number = |col: usize, name: &str| -> Result<f64> {
            let raw = &row[col];
            raw.parse::<f64>().map_err(|_| Error::Csv {
                line,
                message: format!("column `{name}`: cannot parse `{raw}` as a number"),
            })
        };
        let id = row[index[0]].to_string();
        let u = number(index[1], "u")?;
        let s_in = if row[index[2]].is_empty() {
            0.0
        } else {
            number(index[2], "s_in")?
        };
        let s_out = number(index[3], "s_out")?;
        let event = match &row[index[4]] {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::Csv {
                    line,
                    message: format!("column `event`: expected 0 or 1, found `{other}`"),
                })
            }
        };
        let covariates = covariate_cols
            .iter()
            .zip(&covariate_names)
            .map(|(&c, name)| number(c, name))
            .collect::<Result<Vec<_>>>()?;
        let record = IndividualRecord::new(id, u, s_in, s_out, event, covariates).map_err(|e| {
            Error::Csv {
                line,
                message: e.to_string(),
            }
        })?;
        records.push(record);
    }
    Ok(RecordTable {
        records,
        covariate_names,
    })
}

pub fn read_records_path(path: impl AsRef<std::path::Path>) -> Result<RecordTable> {
    let file = std::fs::File::open(path.as_ref())
        .map_err(|e| Error::Io(format!("{}: {e}", path.as_ref().display())))?;
    read_records_csv(std::io::BufReader::new(file))
}

/// Writes records in the format read by [`read_records_csv`].
pub fn write_records_csv<W: Write>(
    writer: W,
    records: &[IndividualRecord],
    covariate_names: &[String],
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = REQUIRED_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend(covariate_names.iter().cloned());
    let io = |e: csv::Error| Error::Io(e.to_string());
    wtr.write_record(&header).map_err(io)?;
    for rec in records {
        let mut row = vec![
            rec.id.clone(),
            rec.u.to_string(),
            rec.s_in.to_string(),
            rec.s_out.to_string(),
            if rec.event { "1" } else { "0" }.to_string(),
        ];
        row.extend(rec.covariates.iter().map(|v| v.to_string()));
        wtr.write_record(&row).map_err(io)?;
    }
    wtr.flush()?;
    Ok(())
}
