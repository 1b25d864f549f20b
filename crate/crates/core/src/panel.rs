//! Longitudinal panel data: units observed over `T` periods with covariates,
//! a binary treatment per period, a final outcome and optional monotone
//! right-censoring indicators.
//!
//! Periods are 1-based in every user-facing name (`z1`, `x2_3`, `t=2`) and
//! 0-based in indexing APIs.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// A treatment history `z̄_t`; the empty path is the root prefix `z̄_0`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct TreatmentPath(Vec<u8>);

impl TreatmentPath {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if let Some(b) = bits.iter().find(|&&b| b > 1) {
            return Err(Error::Argument(format!("treatment bit {b} is not binary")));
        }
        Ok(Self(bits))
    }

    pub fn root() -> Self {
        Self(Vec::new())
    }

    pub fn bits(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// First `t` bits.
    pub fn prefix(&self, t: usize) -> Self {
        Self(self.0[..t].to_vec())
    }

    pub fn extended(&self, bit: u8) -> Self {
        let mut v = self.0.clone();
        v.push(bit);
        Self(v)
    }

    /// Number of treated periods.
    pub fn cumulative(&self) -> usize {
        self.0.iter().map(|&b| b as usize).sum()
    }

    /// All `2^t` paths of length `t` in lexicographic order.
    pub fn all(t: usize) -> Vec<Self> {
        (0..1usize << t).map(|code| Self((0..t).map(|s| ((code >> (t - 1 - s)) & 1) as u8).collect())).collect()
    }
}

impl fmt::Display for TreatmentPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("-");
        }
        for b in &self.0 {
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

impl FromStr for TreatmentPath {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s == "-" {
            return Ok(Self::root());
        }
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                other => Err(Error::Argument(format!("invalid treatment path character {other:?} in {s:?}"))),
            })
            .collect::<Result<Vec<u8>>>()?;
        Ok(Self(bits))
    }
}

impl From<TreatmentPath> for String {
    fn from(p: TreatmentPath) -> Self {
        p.to_string()
    }
}

impl TryFrom<String> for TreatmentPath {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Validated panel dataset. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    ids: Vec<String>,
    covariate_names: Vec<Vec<String>>,
    /// Per period, `n × P_t`; `NaN` marks cells unobserved because of censoring.
    covariates: Vec<Matrix<f64>>,
    /// Row-major `n × T`.
    treatments: Vec<Option<u8>>,
    outcome: Vec<Option<f64>>,
    /// Row-major `n × T`.
    censoring: Option<Vec<u8>>,
}

/// Raw per-unit values handed to [`PanelDataset::new`].
#[derive(Debug, Clone, Default)]
pub struct PanelParts {
    pub ids: Vec<String>,
    pub covariate_names: Vec<Vec<String>>,
    pub covariates: Vec<Matrix<f64>>,
    /// `treatments[i][t]`
    pub treatments: Vec<Vec<Option<u8>>>,
    pub outcome: Vec<Option<f64>>,
    /// `censoring[i][t]`
    pub censoring: Option<Vec<Vec<u8>>>,
}

impl PanelDataset {
    pub fn new(parts: PanelParts) -> Result<Self> {
        let n = parts.ids.len();
        let periods = parts.covariates.len();
        if n == 0 {
            return Err(Error::Validation("dataset has no units".into()));
        }
        if periods == 0 {
            return Err(Error::Validation("dataset has no periods".into()));
        }
        for (t, x) in parts.covariates.iter().enumerate() {
            if x.cols() == 0 {
                return Err(Error::Validation(format!("period t={} has no covariates", t + 1)));
            }
            if x.rows() != n {
                return Err(Error::Validation(format!("covariate block t={} has {} rows, expected {n}", t + 1, x.rows())));
            }
        }
        let covariate_names = if parts.covariate_names.is_empty() {
            standard_covariate_names(&parts.covariates.iter().map(Matrix::cols).collect::<Vec<_>>())
        } else {
            parts.covariate_names
        };
        if covariate_names.len() != periods || covariate_names.iter().zip(&parts.covariates).any(|(names, x)| names.len() != x.cols()) {
            return Err(Error::Validation("covariate names do not match covariate blocks".into()));
        }
        if parts.treatments.len() != n || parts.outcome.len() != n {
            return Err(Error::Validation("treatment/outcome lengths do not match unit count".into()));
        }

        let mut treatments = Vec::with_capacity(n * periods);
        for (i, row) in parts.treatments.iter().enumerate() {
            if row.len() != periods {
                return Err(Error::Validation(format!("unit {}: expected {periods} treatments", parts.ids[i])));
            }
            for (t, z) in row.iter().enumerate() {
                if let Some(v) = z {
                    if *v > 1 {
                        return Err(Error::Validation(format!("treatment not binary, unit {}, t={}", parts.ids[i], t + 1)));
                    }
                }
            }
            treatments.extend_from_slice(row);
        }

        let censoring = match parts.censoring {
            None => None,
            Some(rows) => {
                if rows.len() != n {
                    return Err(Error::Validation("censoring rows do not match unit count".into()));
                }
                let mut flat = Vec::with_capacity(n * periods);
                for (i, row) in rows.iter().enumerate() {
                    if row.len() != periods {
                        return Err(Error::Validation(format!("unit {}: expected {periods} censoring indicators", parts.ids[i])));
                    }
                    for (t, &c) in row.iter().enumerate() {
                        if c > 1 {
                            return Err(Error::Validation(format!("censoring not binary, unit {}, t={}", parts.ids[i], t + 1)));
                        }
                        if t > 0 && row[t - 1] == 1 && c == 0 {
                            return Err(Error::Validation(format!("censoring not monotone, unit {}, t={}", parts.ids[i], t + 1)));
                        }
                    }
                    flat.extend_from_slice(row);
                }
                Some(flat)
            }
        };

        let data = Self { ids: parts.ids, covariate_names, covariates: parts.covariates, treatments, outcome: parts.outcome, censoring };
        data.check_observed()?;
        Ok(data)
    }

    /// Convenience constructor for fully observed data with ids `1..=n`.
    pub fn complete(covariates: Vec<Matrix<f64>>, treatments: Vec<Vec<u8>>, outcome: Vec<f64>) -> Result<Self> {
        let n = outcome.len();
        Self::new(PanelParts {
            ids: (1..=n).map(|i| i.to_string()).collect(),
            covariate_names: Vec::new(),
            covariates,
            treatments: treatments.into_iter().map(|r| r.into_iter().map(Some).collect()).collect(),
            outcome: outcome.into_iter().map(Some).collect(),
            censoring: None,
        })
    }

    fn check_observed(&self) -> Result<()> {
        for i in 0..self.n() {
            for t in 0..self.periods() {
                if !self.uncensored_through(i, t) {
                    continue;
                }
                // X_t and Z_t are observed whenever the unit is still followed at t-1.
                for (p, name) in self.covariate_names[t].iter().enumerate() {
                    if !self.covariates[t][(i, p)].is_finite() {
                        return Err(Error::Validation(format!("covariate {name} not finite, unit {}", self.ids[i])));
                    }
                }
                if self.z(i, t).is_none() {
                    return Err(Error::Validation(format!("treatment missing, unit {}, t={}", self.ids[i], t + 1)));
                }
            }
            if self.uncensored_through(i, self.periods()) && !self.outcome[i].is_some_and(f64::is_finite) {
                return Err(Error::Validation(format!("outcome missing or not finite, unit {}", self.ids[i])));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn periods(&self) -> usize {
        self.covariates.len()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    /// Covariate count `P_t` at 0-based period `t`.
    pub fn covariate_count(&self, t: usize) -> usize {
        self.covariates[t].cols()
    }

    pub fn covariates(&self, t: usize) -> &Matrix<f64> {
        &self.covariates[t]
    }

    pub fn covariate_names(&self, t: usize) -> &[String] {
        &self.covariate_names[t]
    }

    #[inline]
    pub fn z(&self, i: usize, t: usize) -> Option<u8> {
        self.treatments[i * self.periods() + t]
    }

    pub fn outcome(&self, i: usize) -> Option<f64> {
        self.outcome[i]
    }

    pub fn has_censoring(&self) -> bool {
        self.censoring.is_some()
    }

    pub fn censored_at(&self, i: usize, t: usize) -> bool {
        self.censoring.as_ref().is_some_and(|c| c[i * self.periods() + t] == 1)
    }

    /// `C̄_{i,t} = 0`: unit `i` not lost to follow-up in periods `1..=t`.
    /// Always true for `t = 0`.
    #[inline]
    pub fn uncensored_through(&self, i: usize, t: usize) -> bool {
        t == 0 || !self.censored_at(i, t - 1)
    }

    /// Observed treatment prefix of length `t`, if the unit is followed that long.
    pub fn path_prefix(&self, i: usize, t: usize) -> Option<TreatmentPath> {
        if !self.uncensored_through(i, t) {
            return None;
        }
        (0..t).map(|s| self.z(i, s)).collect::<Option<Vec<u8>>>().map(TreatmentPath)
    }

    /// New dataset made of the given unit rows (with repetition), in order.
    /// Ids are suffixed with the draw position so they stay unique.
    pub fn resample(&self, rows: &[usize]) -> Self {
        let periods = self.periods();
        Self {
            ids: rows.iter().enumerate().map(|(k, &i)| format!("{}#{k}", self.ids[i])).collect(),
            covariate_names: self.covariate_names.clone(),
            covariates: self.covariates.iter().map(|x| x.select_rows(rows)).collect(),
            treatments: rows.iter().flat_map(|&i| self.treatments[i * periods..(i + 1) * periods].iter().copied()).collect(),
            outcome: rows.iter().map(|&i| self.outcome[i]).collect(),
            censoring: self
                .censoring
                .as_ref()
                .map(|c| rows.iter().flat_map(|&i| c[i * periods..(i + 1) * periods].iter().copied()).collect()),
        }
    }

    /// Copy with outcomes transformed elementwise.
    pub fn map_outcome(&self, f: impl Fn(f64) -> f64) -> Self {
        let mut out = self.clone();
        for y in out.outcome.iter_mut().flatten() {
            *y = f(*y);
        }
        out
    }

    /// Copy with one covariate column transformed elementwise (missing cells stay missing).
    pub fn map_covariate(&self, t: usize, p: usize, f: impl Fn(f64) -> f64) -> Self {
        let mut out = self.clone();
        let x = &mut out.covariates[t];
        for i in 0..x.rows() {
            let v = x[(i, p)];
            if v.is_finite() {
                x[(i, p)] = f(v);
            }
        }
        out
    }

    /// Copy carrying an all-zero censoring matrix.
    pub fn with_zero_censoring(&self) -> Self {
        let mut out = self.clone();
        out.censoring = Some(vec![0; self.n() * self.periods()]);
        out
    }

    /// Standard column schema for this dataset's shape.
    pub fn schema(&self) -> ColumnSchema {
        ColumnSchema {
            id: "id".into(),
            treatments: (1..=self.periods()).map(|t| format!("z{t}")).collect(),
            covariates: self.covariate_names.clone(),
            outcome: "y".into(),
            censoring: self.has_censoring().then(|| (1..=self.periods()).map(|t| format!("c{t}")).collect()),
        }
    }
}

fn standard_covariate_names(counts: &[usize]) -> Vec<Vec<String>> {
    counts.iter().enumerate().map(|(t, &p)| (1..=p).map(|q| format!("x{}_{q}", t + 1)).collect()).collect()
}

/// Column mapping from a delimited table to a [`PanelDataset`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub id: String,
    pub treatments: Vec<String>,
    /// Per period, the covariate columns in order.
    pub covariates: Vec<Vec<String>>,
    pub outcome: String,
    #[serde(default)]
    pub censoring: Option<Vec<String>>,
}

impl ColumnSchema {
    /// Infers the `id, z1..zT, x{t}_{p}, y, c1..cT` convention from a header.
    pub fn infer(header: &[&str]) -> Result<Self> {
        let mut z: BTreeMap<usize, String> = BTreeMap::new();
        let mut c: BTreeMap<usize, String> = BTreeMap::new();
        let mut x: BTreeMap<usize, BTreeMap<usize, String>> = BTreeMap::new();
        let (mut has_id, mut has_y) = (false, false);
        for &h in header {
            let name = h.trim();
            if name == "id" {
                has_id = true;
            } else if name == "y" {
                has_y = true;
            } else if let Some(t) = name.strip_prefix('z').and_then(|s| s.parse::<usize>().ok()) {
                z.insert(t, name.to_string());
            } else if let Some(t) = name.strip_prefix('c').and_then(|s| s.parse::<usize>().ok()) {
                c.insert(t, name.to_string());
            } else if let Some((t, p)) = name.strip_prefix('x').and_then(|s| s.split_once('_')) {
                if let (Ok(t), Ok(p)) = (t.parse::<usize>(), p.parse::<usize>()) {
                    x.entry(t).or_default().insert(p, name.to_string());
                }
            }
        }
        if !has_id || !has_y {
            return Err(Error::Spec("header must contain `id` and `y` columns".into()));
        }
        let periods = z.len();
        if periods == 0 || z.keys().copied().ne(1..=periods) {
            return Err(Error::Spec("treatment columns must be z1..zT".into()));
        }
        if x.keys().copied().ne(1..=periods) {
            return Err(Error::Spec("covariate columns x{t}_{p} must exist for every period".into()));
        }
        for (t, cols) in &x {
            if cols.keys().copied().ne(1..=cols.len()) {
                return Err(Error::Spec(format!("covariate columns for t={t} must be numbered x{t}_1..x{t}_P")));
            }
        }
        let censoring = if c.is_empty() {
            None
        } else if c.keys().copied().ne(1..=periods) {
            return Err(Error::Spec("censoring columns must be c1..cT".into()));
        } else {
            Some(c.into_values().collect())
        };
        Ok(Self {
            id: "id".into(),
            treatments: z.into_values().collect(),
            covariates: x.into_values().map(|m| m.into_values().collect()).collect(),
            outcome: "y".into(),
            censoring,
        })
    }

    fn columns_in_order(&self) -> Vec<&str> {
        let mut cols = vec![self.id.as_str()];
        cols.extend(self.treatments.iter().map(String::as_str));
        for block in &self.covariates {
            cols.extend(block.iter().map(String::as_str));
        }
        cols.push(self.outcome.as_str());
        if let Some(c) = &self.censoring {
            cols.extend(c.iter().map(String::as_str));
        }
        cols
    }
}

fn parse_cell(raw: &str, row: usize, column: &str) -> Result<Option<f64>> {
    let s = raw.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("na") {
        return Ok(None);
    }
    let v: f64 = s.parse().map_err(|_| Error::Parse { row, message: format!("column {column}: non-numeric value {s:?}") })?;
    if !v.is_finite() {
        return Err(Error::Parse { row, message: format!("column {column}: non-finite value {s:?}") });
    }
    Ok(Some(v))
}

fn parse_binary(v: Option<f64>, what: &str, id: &str, t: usize) -> Result<Option<u8>> {
    match v {
        None => Ok(None),
        Some(x) if x == 0.0 => Ok(Some(0)),
        Some(x) if x == 1.0 => Ok(Some(1)),
        Some(_) => Err(Error::Validation(format!("{what} not binary, unit {id}, t={t}"))),
    }
}

/// Reads a header-bearing CSV table. Without a schema the standard column
/// convention is inferred from the header.
pub fn load_panel<R: Read>(source: R, schema: Option<&ColumnSchema>) -> Result<PanelDataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).comment(Some(b'#')).from_reader(source);
    let header: Vec<String> =
        reader.headers().map_err(|e| Error::Parse { row: 0, message: e.to_string() })?.iter().map(|h| h.trim().to_string()).collect();
    let schema = match schema {
        Some(s) => s.clone(),
        None => ColumnSchema::infer(&header.iter().map(String::as_str).collect::<Vec<_>>())?,
    };
    let position = |name: &str| -> Result<usize> {
        header.iter().position(|h| h == name).ok_or_else(|| Error::Spec(format!("column {name:?} not found in header")))
    };
    for col in schema.columns_in_order() {
        position(col)?;
    }
    let periods = schema.treatments.len();
    if schema.covariates.len() != periods {
        return Err(Error::Spec("schema covariate blocks must match the number of treatment columns".into()));
    }
    let id_col = position(&schema.id)?;
    let z_cols: Vec<usize> = schema.treatments.iter().map(|c| position(c)).collect::<Result<_>>()?;
    let x_cols: Vec<Vec<usize>> =
        schema.covariates.iter().map(|b| b.iter().map(|c| position(c)).collect::<Result<Vec<_>>>()).collect::<Result<_>>()?;
    let y_col = position(&schema.outcome)?;
    let c_cols: Option<Vec<usize>> =
        schema.censoring.as_ref().map(|cs| cs.iter().map(|c| position(c)).collect::<Result<Vec<_>>>()).transpose()?;

    let mut ids = Vec::new();
    let mut xs: Vec<Vec<f64>> = vec![Vec::new(); periods];
    let mut zs = Vec::new();
    let mut ys = Vec::new();
    let mut cs = c_cols.as_ref().map(|_| Vec::new());
    for (k, record) in reader.records().enumerate() {
        let row = k + 1;
        let record = record.map_err(|e| Error::Parse { row, message: e.to_string() })?;
        if record.len() != header.len() {
            return Err(Error::Parse { row, message: format!("expected {} columns, found {}", header.len(), record.len()) });
        }
        let id = record[id_col].trim().to_string();
        let mut zrow = Vec::with_capacity(periods);
        for (t, &c) in z_cols.iter().enumerate() {
            zrow.push(parse_binary(parse_cell(&record[c], row, &header[c])?, "treatment", &id, t + 1)?);
        }
        for (t, cols) in x_cols.iter().enumerate() {
            for &c in cols {
                xs[t].push(parse_cell(&record[c], row, &header[c])?.unwrap_or(f64::NAN));
            }
        }
        ys.push(parse_cell(&record[y_col], row, &header[y_col])?);
        if let (Some(cols), Some(out)) = (&c_cols, cs.as_mut()) {
            let mut crow = Vec::with_capacity(periods);
            for (t, &c) in cols.iter().enumerate() {
                let v = parse_binary(parse_cell(&record[c], row, &header[c])?, "censoring", &id, t + 1)?;
                crow.push(v.ok_or_else(|| Error::Validation(format!("censoring missing, unit {id}, t={}", t + 1)))?);
            }
            out.push(crow);
        }
        zs.push(zrow);
        ids.push(id);
    }
    let n = ids.len();
    let covariates = xs.into_iter().zip(&schema.covariates).map(|(data, names)| Matrix::from_vec(n, names.len(), data)).collect();
    PanelDataset::new(PanelParts {
        ids,
        covariate_names: schema.covariates.clone(),
        covariates,
        treatments: zs,
        outcome: ys,
        censoring: cs,
    })
}

/// Writes the dataset in the standard column convention. Missing cells are empty.
/// `f64` values use the shortest representation that parses back bitwise.
pub fn write_panel<W: Write>(data: &PanelDataset, sink: W) -> Result<()> {
    let schema = data.schema();
    let mut w = csv::Writer::from_writer(sink);
    let to_io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(schema.columns_in_order()).map_err(to_io)?;
    let fmt_opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
    for i in 0..data.n() {
        let mut rec = vec![data.ids[i].clone()];
        rec.extend((0..data.periods()).map(|t| data.z(i, t).map_or_else(String::new, |z| z.to_string())));
        for t in 0..data.periods() {
            for p in 0..data.covariate_count(t) {
                let v = data.covariates[t][(i, p)];
                rec.push(fmt_opt(v.is_finite().then_some(v)));
            }
        }
        rec.push(fmt_opt(data.outcome[i]));
        if data.has_censoring() {
            rec.extend((0..data.periods()).map(|t| u8::from(data.censored_at(i, t)).to_string()));
        }
        w.write_record(&rec).map_err(to_io)?;
    }
    w.flush()?;
    Ok(())
}

/// Units grouped by observed treatment prefix at every level `t = 0..=T`.
///
/// Level `t` holds units followed through `t` (`C̄_t = 0`). Every one of the
/// `2^t` prefixes is present, possibly with no members.
#[derive(Debug, Clone, PartialEq)]
pub struct PathStrata {
    periods: usize,
    levels: Vec<BTreeMap<TreatmentPath, Vec<usize>>>,
}

static EMPTY: [usize; 0] = [];

impl PathStrata {
    pub fn build(data: &PanelDataset) -> Self {
        let periods = data.periods();
        let mut levels: Vec<BTreeMap<TreatmentPath, Vec<usize>>> =
            (0..=periods).map(|t| TreatmentPath::all(t).into_iter().map(|p| (p, Vec::new())).collect()).collect();
        for i in 0..data.n() {
            for (t, level) in levels.iter_mut().enumerate() {
                match data.path_prefix(i, t) {
                    Some(p) => level.get_mut(&p).expect("all prefixes enumerated").push(i),
                    None => break,
                }
            }
        }
        Self { periods, levels }
    }

    pub fn periods(&self) -> usize {
        self.periods
    }

    pub fn level(&self, t: usize) -> &BTreeMap<TreatmentPath, Vec<usize>> {
        &self.levels[t]
    }

    /// Sorted member indices of a prefix stratum; empty if unknown.
    pub fn members(&self, prefix: &TreatmentPath) -> &[usize] {
        self.levels.get(prefix.len()).and_then(|l| l.get(prefix)).map_or(&EMPTY[..], Vec::as_slice)
    }

    pub fn count(&self, path: &TreatmentPath) -> usize {
        self.members(path).len()
    }

    /// Number of units followed through the last period.
    pub fn complete_count(&self) -> usize {
        self.levels[self.periods].values().map(Vec::len).sum()
    }

    /// Full paths with at least one member.
    pub fn realized_paths(&self) -> Vec<TreatmentPath> {
        self.levels[self.periods].iter().filter(|(_, m)| !m.is_empty()).map(|(p, _)| p.clone()).collect()
    }

    /// Exact sample prevalence `n_{z̄_T} / n_complete`.
    pub fn prevalence(&self, path: &TreatmentPath) -> Ratio<u64> {
        let den = self.complete_count().max(1) as u64;
        Ratio::new(self.count(path) as u64, den)
    }

    pub fn prevalence_f64(&self, path: &TreatmentPath) -> f64 {
        self.count(path) as f64 / self.complete_count().max(1) as f64
    }
}

/// Enumerates every prefix stratum of a dataset.
pub fn build_strata(data: &PanelDataset) -> PathStrata {
    PathStrata::build(data)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = "id,z1,z2,x1_1,x2_1,y\n1,0,0,0.5,1.5,10\n2,0,0,-1,2,11\n3,1,1,2,0.25,12\n4,0,1,3,1,13\n";

    fn path(s: &str) -> TreatmentPath {
        s.parse().unwrap()
    }

    #[test]
    fn loads_small_file_and_builds_strata() {
        let data = load_panel(SMALL.as_bytes(), None).unwrap();
        assert_eq!(data.n(), 4);
        assert_eq!(data.periods(), 2);
        let strata = build_strata(&data);
        assert_eq!(strata.members(&path("0")), &[0, 1, 3]);
        assert_eq!(strata.members(&path("1")), &[2]);
        assert_eq!(strata.count(&path("00")), 2);
        assert_eq!(strata.count(&path("01")), 1);
        assert_eq!(strata.count(&path("11")), 1);
        assert_eq!(strata.count(&path("10")), 0);
        assert_eq!(strata.members(&TreatmentPath::root()).len(), 4);
    }

    #[test]
    fn single_unit_single_period() {
        let x = Matrix::from_rows(&[vec![0.3]], 1);
        let data = PanelDataset::complete(vec![x], vec![vec![1]], vec![2.0]).unwrap();
        let strata = build_strata(&data);
        assert_eq!(strata.members(&TreatmentPath::root()), &[0]);
        assert_eq!(strata.count(&path("1")), 1);
        assert_eq!(strata.prevalence(&path("1")), Ratio::new(1, 1));
    }

    #[test]
    fn rejects_non_binary_treatment() {
        let bad = SMALL.replace("3,1,1,2", "3,1,2,2");
        let err = load_panel(bad.as_bytes(), None).unwrap_err();
        assert_eq!(err.to_string(), "treatment not binary, unit 3, t=2");
    }

    #[test]
    fn rejects_non_monotone_censoring() {
        let text = "id,z1,z2,x1_1,x2_1,y,c1,c2\n1,0,0,0.5,1.5,,1,0\n2,0,0,-1,2,11,0,0\n";
        let err = load_panel(text.as_bytes(), None).unwrap_err();
        assert!(err.to_string().starts_with("censoring not monotone"), "{err}");
    }

    #[test]
    fn malformed_rows_report_row_index() {
        let bad = SMALL.replace("2,0,0,-1,2,11", "2,0,0,abc,2,11");
        match load_panel(bad.as_bytes(), None).unwrap_err() {
            Error::Parse { row, .. } => assert_eq!(row, 2),
            e => panic!("unexpected {e}"),
        }
        let short = SMALL.replace("2,0,0,-1,2,11", "2,0,0,-1,2");
        match load_panel(short.as_bytes(), None).unwrap_err() {
            Error::Parse { row, .. } => assert_eq!(row, 2),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn censored_units_need_no_outcome() {
        let text = "id,z1,z2,x1_1,x2_1,y,c1,c2\n1,0,,0.5,,,1,1\n2,0,0,-1,2,11,0,0\n3,1,1,1,2,,0,1\n";
        let data = load_panel(text.as_bytes(), None).unwrap();
        let strata = build_strata(&data);
        assert_eq!(strata.members(&TreatmentPath::root()), &[0, 1, 2]);
        assert_eq!(strata.members(&path("0")), &[1]);
        assert_eq!(strata.members(&path("1")), &[2]);
        assert_eq!(strata.complete_count(), 1);
        let missing_y = text.replace("2,0,0,-1,2,11,0,0", "2,0,0,-1,2,,0,0");
        assert!(load_panel(missing_y.as_bytes(), None).is_err());
    }

    #[test]
    fn sidecar_schema_overrides_names() {
        let text = "unit,a1,a2,cov1,cov2,out\nu1,0,1,0.5,1,3\nu2,1,1,0.1,2,4\n";
        let schema = ColumnSchema {
            id: "unit".into(),
            treatments: vec!["a1".into(), "a2".into()],
            covariates: vec![vec!["cov1".into()], vec!["cov2".into()]],
            outcome: "out".into(),
            censoring: None,
        };
        let data = load_panel(text.as_bytes(), Some(&schema)).unwrap();
        assert_eq!(data.ids(), &["u1", "u2"]);
        assert_eq!(data.covariate_names(1), &["cov2"]);
    }

    #[test]
    fn csv_round_trip() {
        let data = load_panel(SMALL.as_bytes(), None).unwrap();
        let mut buf = Vec::new();
        write_panel(&data, &mut buf).unwrap();
        assert_eq!(load_panel(buf.as_slice(), None).unwrap(), data);
    }

    #[test]
    fn path_enumeration_is_lexicographic() {
        let all: Vec<String> = TreatmentPath::all(2).iter().map(ToString::to_string).collect();
        assert_eq!(all, ["00", "01", "10", "11"]);
        assert_eq!(TreatmentPath::root().to_string(), "-");
        assert_eq!(path("101").prefix(2), path("10"));
    }
}
