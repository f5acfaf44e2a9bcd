//! Observed-data containers and CSV ingestion.
//!
//! A [`ProxyDataset`] holds `n` observations of `(Y, A, X, Z, W)`: outcome,
//! binary treatment, measured covariates, treatment-inducing proxies and
//! outcome-inducing proxies. Values are stored on their raw scale; nothing is
//! standardized.

use std::collections::HashSet;
use std::io::{Read, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column names carried alongside the numeric blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnNames {
    pub y: String,
    pub a: String,
    pub x: Vec<String>,
    pub z: Vec<String>,
    pub w: Vec<String>,
}

impl ColumnNames {
    pub fn default_for(p_x: usize, p_z: usize, p_w: usize) -> Self {
        let numbered = |prefix: &str, p: usize| (1..=p).map(|j| format!("{prefix}{j}")).collect();
        Self {
            y: "Y".into(),
            a: "A".into(),
            x: numbered("X", p_x),
            z: numbered("Z", p_z),
            w: numbered("W", p_w),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProxyDataset {
    y: Vec<f64>,
    a: Vec<u8>,
    x: DMatrix<f64>,
    z: DMatrix<f64>,
    w: DMatrix<f64>,
    names: ColumnNames,
}

impl ProxyDataset {
    /// Builds a dataset from raw blocks with default column names.
    pub fn new(
        y: Vec<f64>,
        a: Vec<u8>,
        x: DMatrix<f64>,
        z: DMatrix<f64>,
        w: DMatrix<f64>,
    ) -> Result<Self> {
        let names = ColumnNames::default_for(x.ncols(), z.ncols(), w.ncols());
        Self::with_names(y, a, x, z, w, names)
    }

    pub fn with_names(
        y: Vec<f64>,
        a: Vec<u8>,
        x: DMatrix<f64>,
        z: DMatrix<f64>,
        w: DMatrix<f64>,
        names: ColumnNames,
    ) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(Error::Empty);
        }
        for (label, rows) in [("A", a.len()), ("X", x.nrows()), ("Z", z.nrows()), ("W", w.nrows())] {
            if rows != n {
                return Err(Error::Dimension(format!(
                    "block {label} has {rows} rows, outcome has {n}"
                )));
            }
        }
        if names.x.len() != x.ncols() || names.z.len() != z.ncols() || names.w.len() != w.ncols() {
            return Err(Error::Dimension("column names do not match block widths".into()));
        }
        if let Some(row) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { column: names.y.clone(), row });
        }
        if let Some(row) = a.iter().position(|&v| v > 1) {
            return Err(Error::NonBinaryTreatment {
                column: names.a.clone(),
                row,
                value: f64::from(a[row]),
            });
        }
        for (block, labels) in [(&x, &names.x), (&z, &names.z), (&w, &names.w)] {
            for (j, label) in labels.iter().enumerate() {
                if let Some(row) = block.column(j).iter().position(|v| !v.is_finite()) {
                    return Err(Error::NonFinite { column: label.clone(), row });
                }
            }
        }
        Ok(Self { y, a, x, z, w, names })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }
    pub fn p_x(&self) -> usize {
        self.x.ncols()
    }
    pub fn p_z(&self) -> usize {
        self.z.ncols()
    }
    pub fn p_w(&self) -> usize {
        self.w.ncols()
    }
    pub fn y(&self) -> &[f64] {
        &self.y
    }
    pub fn a(&self) -> &[u8] {
        &self.a
    }
    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }
    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }
    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }
    pub fn names(&self) -> &ColumnNames {
        &self.names
    }

    pub fn n_treated(&self) -> usize {
        self.a.iter().filter(|&&v| v == 1).count()
    }

    /// Fails unless both treatment groups are represented.
    pub fn require_both_groups(&self) -> Result<()> {
        let treated = self.n_treated();
        if treated == 0 {
            return Err(Error::EmptyTreatmentGroup { group: 1 });
        }
        if treated == self.n() {
            return Err(Error::EmptyTreatmentGroup { group: 0 });
        }
        Ok(())
    }

    /// Copy with the outcome-proxy block replaced.
    pub fn with_w(&self, w: DMatrix<f64>) -> Result<Self> {
        let mut names = self.names.clone();
        if w.ncols() != names.w.len() {
            names.w = ColumnNames::default_for(0, 0, w.ncols()).w;
        }
        Self::with_names(self.y.clone(), self.a.clone(), self.x.clone(), self.z.clone(), w, names)
    }

    /// Copy with the treatment-proxy block replaced.
    pub fn with_z(&self, z: DMatrix<f64>) -> Result<Self> {
        let mut names = self.names.clone();
        if z.ncols() != names.z.len() {
            names.z = ColumnNames::default_for(0, z.ncols(), 0).z;
        }
        Self::with_names(self.y.clone(), self.a.clone(), self.x.clone(), z, self.w.clone(), names)
    }

    /// Copy with the outcome shifted or replaced.
    pub fn with_y(&self, y: Vec<f64>) -> Result<Self> {
        Self::with_names(
            y,
            self.a.clone(),
            self.x.clone(),
            self.z.clone(),
            self.w.clone(),
            self.names.clone(),
        )
    }

    /// Copy with treatment labels swapped (`A ↦ 1 − A`).
    pub fn relabel_treatment(&self) -> Self {
        let mut out = self.clone();
        for v in &mut out.a {
            *v = 1 - *v;
        }
        out
    }

    /// Rows gathered by index, with repetition allowed (bootstrap resampling).
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let pick = |m: &DMatrix<f64>| DMatrix::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)]);
        Self::with_names(
            rows.iter().map(|&i| self.y[i]).collect(),
            rows.iter().map(|&i| self.a[i]).collect(),
            pick(&self.x),
            pick(&self.z),
            pick(&self.w),
            self.names.clone(),
        )
    }

    /// Writes the dataset as CSV with header `Y,A,X..,Z..,W..` and an optional
    /// trailing latent column `U`.
    pub fn write_csv<W: Write>(&self, out: W, latent: Option<&[f64]>) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        let mut header = vec![self.names.y.clone(), self.names.a.clone()];
        header.extend(self.names.x.iter().cloned());
        header.extend(self.names.z.iter().cloned());
        header.extend(self.names.w.iter().cloned());
        if latent.is_some() {
            header.push("U".into());
        }
        wtr.write_record(&header)?;
        let mut record = Vec::with_capacity(header.len());
        for i in 0..self.n() {
            record.clear();
            record.push(format_float(self.y[i]));
            record.push(self.a[i].to_string());
            for block in [&self.x, &self.z, &self.w] {
                record.extend(block.row(i).iter().map(|&v| format_float(v)));
            }
            if let Some(u) = latent {
                record.push(format_float(u[i]));
            }
            wtr.write_record(&record)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn format_float(v: f64) -> String {
    // Shortest representation that round-trips exactly.
    format!("{v:?}")
}

/// Assignment of table columns to roles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoleMap {
    pub y: String,
    pub a: String,
    #[serde(default)]
    pub x: Vec<String>,
    #[serde(default)]
    pub z: Vec<String>,
    #[serde(default)]
    pub w: Vec<String>,
}

/// A column-labeled numeric table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    headers: Vec<String>,
    columns: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(headers: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if headers.len() != columns.len() {
            return Err(Error::Dimension("header count differs from column count".into()));
        }
        if let Some(first) = columns.first() {
            if columns.iter().any(|c| c.len() != first.len()) {
                return Err(Error::Dimension("columns have unequal lengths".into()));
            }
        }
        Ok(Self { headers, columns })
    }

    /// Parses RFC-4180 CSV with a header row. Every cell must parse as a
    /// decimal number (`.` separator); `NaN`/`inf` parse but are rejected later
    /// by [`validate_dataset`].
    pub fn from_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let mut columns = vec![Vec::new(); headers.len()];
        for (row, record) in rdr.records().enumerate() {
            let record = record?;
            for (j, cell) in record.iter().enumerate() {
                let cell = cell.trim();
                let value: f64 = cell.parse().map_err(|_| Error::Parse {
                    column: headers[j].clone(),
                    row,
                    value: cell.to_string(),
                })?;
                columns[j].push(value);
            }
        }
        Self::new(headers, columns)
    }

    pub fn headers(&self) -> &[String] {
        &self.headers
    }

    pub fn nrows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.headers
            .iter()
            .position(|h| h == name)
            .map(|j| self.columns[j].as_slice())
    }
}

/// Binds table columns to roles and validates the result.
pub fn validate_dataset(table: &Table, roles: &RoleMap) -> Result<ProxyDataset> {
    let mut seen = HashSet::new();
    let all = [&roles.y, &roles.a]
        .into_iter()
        .chain(roles.x.iter())
        .chain(roles.z.iter())
        .chain(roles.w.iter());
    for name in all {
        if !seen.insert(name.as_str()) {
            return Err(Error::OverlappingRoles(name.clone()));
        }
    }
    let fetch = |name: &String| table.column(name).ok_or_else(|| Error::MissingColumn(name.clone()));

    let n = table.nrows();
    if n == 0 {
        return Err(Error::Empty);
    }
    let y = fetch(&roles.y)?.to_vec();
    let raw_a = fetch(&roles.a)?;
    let block = |names: &[String]| -> Result<DMatrix<f64>> {
        let cols = names.iter().map(fetch).collect::<Result<Vec<_>>>()?;
        Ok(DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i]))
    };
    let x = block(&roles.x)?;
    let z = block(&roles.z)?;
    let w = block(&roles.w)?;

    let mut a = Vec::with_capacity(n);
    for (row, &v) in raw_a.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite { column: roles.a.clone(), row });
        }
        if v == 0.0 {
            a.push(0);
        } else if v == 1.0 {
            a.push(1);
        } else {
            return Err(Error::NonBinaryTreatment { column: roles.a.clone(), row, value: v });
        }
    }
    let names = ColumnNames {
        y: roles.y.clone(),
        a: roles.a.clone(),
        x: roles.x.clone(),
        z: roles.z.clone(),
        w: roles.w.clone(),
    };
    ProxyDataset::with_names(y, a, x, z, w, names)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_table(a_col: Vec<f64>) -> Table {
        Table::new(
            vec!["Y".into(), "A".into(), "X1".into(), "Z1".into(), "W1".into()],
            vec![
                vec![1.0, 2.0, 3.0, 4.0],
                a_col,
                vec![0.1, 0.2, 0.3, 0.4],
                vec![1.5, -1.0, 0.0, 2.0],
                vec![0.5, 0.7, -0.2, 1.1],
            ],
        )
        .unwrap()
    }

    fn roles() -> RoleMap {
        RoleMap {
            y: "Y".into(),
            a: "A".into(),
            x: vec!["X1".into()],
            z: vec!["Z1".into()],
            w: vec!["W1".into()],
        }
    }

    #[test]
    fn well_formed_table_validates() {
        let d = validate_dataset(&small_table(vec![0.0, 1.0, 1.0, 0.0]), &roles()).unwrap();
        assert_eq!((d.n(), d.p_x(), d.p_z(), d.p_w()), (4, 1, 1, 1));
        assert_eq!(d.a(), &[0, 1, 1, 0]);
    }

    #[test]
    fn non_binary_treatment_is_rejected_with_location() {
        let err = validate_dataset(&small_table(vec![0.0, 1.0, 2.0, 0.0]), &roles()).unwrap_err();
        match err {
            Error::NonBinaryTreatment { column, row, value } => {
                assert_eq!((column.as_str(), row, value), ("A", 2, 2.0));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(err_string(&small_table(vec![0.0, 1.0, 2.0, 0.0])).contains("non-binary treatment"));
    }

    fn err_string(t: &Table) -> String {
        validate_dataset(t, &roles()).unwrap_err().to_string()
    }

    #[test]
    fn overlapping_roles_are_rejected() {
        let mut r = roles();
        r.w = vec!["Z1".into()];
        assert!(matches!(
            validate_dataset(&small_table(vec![0.0, 1.0, 1.0, 0.0]), &r),
            Err(Error::OverlappingRoles(c)) if c == "Z1"
        ));
    }

    #[test]
    fn nan_cells_are_rejected_with_location() {
        let mut t = small_table(vec![0.0, 1.0, 1.0, 0.0]);
        t.columns[3][1] = f64::NAN;
        assert!(matches!(
            validate_dataset(&t, &roles()),
            Err(Error::NonFinite { column, row: 1 }) if column == "Z1"
        ));
    }

    #[test]
    fn empty_table_is_rejected() {
        let t = Table::new(
            vec!["Y".into(), "A".into()],
            vec![vec![], vec![]],
        )
        .unwrap();
        let r = RoleMap { y: "Y".into(), a: "A".into(), x: vec![], z: vec![], w: vec![] };
        assert!(matches!(validate_dataset(&t, &r), Err(Error::Empty)));
    }

    #[test]
    fn missing_column_is_named() {
        let mut r = roles();
        r.x.push("X9".into());
        assert!(matches!(
            validate_dataset(&small_table(vec![0.0, 1.0, 1.0, 0.0]), &r),
            Err(Error::MissingColumn(c)) if c == "X9"
        ));
    }

    #[test]
    fn proxies_reassigned_out_of_covariates() {
        // 71 candidate covariates, four of which are reassigned as proxies.
        let n = 5;
        let mut headers = vec!["Y".to_string(), "A".to_string()];
        let mut cols = vec![vec![0.0; n], vec![0.0, 1.0, 0.0, 1.0, 1.0]];
        let proxies = ["pafi1", "paco21", "ph1", "hema1"];
        let mut covariates: Vec<String> = (0..67).map(|j| format!("c{j}")).collect();
        covariates.extend(proxies.iter().map(|s| s.to_string()));
        for (j, name) in covariates.iter().enumerate() {
            headers.push(name.clone());
            cols.push((0..n).map(|i| (i * j) as f64).collect());
        }
        let table = Table::new(headers, cols).unwrap();
        let roles = RoleMap {
            y: "Y".into(),
            a: "A".into(),
            x: covariates.iter().filter(|c| !proxies.contains(&c.as_str())).cloned().collect(),
            z: vec!["pafi1".into(), "paco21".into()],
            w: vec!["ph1".into(), "hema1".into()],
        };
        let d = validate_dataset(&table, &roles).unwrap();
        assert_eq!((d.p_x(), d.p_z(), d.p_w()), (67, 2, 2));
    }

    #[test]
    fn csv_round_trip_preserves_values() {
        let d = validate_dataset(&small_table(vec![0.0, 1.0, 1.0, 0.0]), &roles()).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf, None).unwrap();
        let back = validate_dataset(&Table::from_csv(buf.as_slice()).unwrap(), &roles()).unwrap();
        assert_eq!(d, back);
    }

    #[test]
    fn csv_parse_error_reports_cell() {
        let csv = "Y,A\n1.0,0\nabc,1\n";
        assert!(matches!(
            Table::from_csv(csv.as_bytes()),
            Err(Error::Parse { column, row: 1, .. }) if column == "Y"
        ));
    }
}
