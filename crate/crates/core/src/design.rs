//! Raw observations, CSV ingestion and the sorted, grouped block design.

use std::collections::HashSet;
use std::io::Read;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Observations `(Uᵢ, Xᵢ, Zᵢ, Yᵢ)`; `z` is absent for a pure varying model.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    u: Vec<f64>,
    x: DMatrix<f64>,
    z: Option<DMatrix<f64>>,
    y: Vec<f64>,
    x_names: Vec<String>,
    z_names: Vec<String>,
}

impl Dataset {
    pub fn new(u: Vec<f64>, x: DMatrix<f64>, z: Option<DMatrix<f64>>, y: Vec<f64>) -> Result<Self> {
        let x_names = (1..=x.ncols()).map(|j| format!("x{j}")).collect();
        let z_names = z
            .as_ref()
            .map(|z| (1..=z.ncols()).map(|j| format!("z{j}")).collect())
            .unwrap_or_default();
        Self::with_names(u, x, z, y, x_names, z_names)
    }

    pub fn with_names(
        u: Vec<f64>,
        x: DMatrix<f64>,
        z: Option<DMatrix<f64>>,
        y: Vec<f64>,
        x_names: Vec<String>,
        z_names: Vec<String>,
    ) -> Result<Self> {
        let n = u.len();
        if n == 0 {
            return Err(Error::EmptyData);
        }
        if n < 2 {
            return Err(Error::InvalidData(format!("need at least 2 rows, got {n}")));
        }
        if x.ncols() == 0 {
            return Err(Error::InvalidData("at least one varying covariate is required".into()));
        }
        if x.nrows() != n || y.len() != n {
            return Err(Error::InvalidData(format!(
                "row counts disagree: u {n}, x {}, y {}",
                x.nrows(),
                y.len()
            )));
        }
        if let Some(z) = &z {
            if z.nrows() != n {
                return Err(Error::InvalidData(format!(
                    "row counts disagree: u {n}, z {}",
                    z.nrows()
                )));
            }
        }
        let z = z.filter(|z| z.ncols() > 0);
        let finite = u.iter().chain(y.iter()).chain(x.iter()).all(|v| v.is_finite())
            && z.as_ref().map_or(true, |z| z.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(Error::InvalidData("non-finite value".into()));
        }
        if x_names.len() != x.ncols() || z_names.len() != z.as_ref().map_or(0, |z| z.ncols()) {
            return Err(Error::InvalidData("column names do not match matrix widths".into()));
        }
        Ok(Dataset {
            u,
            x,
            z,
            y,
            x_names,
            z_names,
        })
    }

    pub fn n(&self) -> usize {
        self.u.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn q(&self) -> usize {
        self.z.as_ref().map_or(0, |z| z.ncols())
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn z(&self) -> Option<&DMatrix<f64>> {
        self.z.as_ref()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn x_names(&self) -> &[String] {
        &self.x_names
    }

    pub fn z_names(&self) -> &[String] {
        &self.z_names
    }

    /// Prepends a constant-one column named `intercept` to the varying part.
    pub fn with_intercept(self) -> Self {
        let n = self.n();
        let x = self.x.insert_column(0, 1.0);
        debug_assert_eq!(x.nrows(), n);
        let mut x_names = vec!["intercept".to_string()];
        x_names.extend(self.x_names);
        Dataset {
            x,
            x_names,
            ..self
        }
    }
}

/// Column mapping for CSV ingestion. An empty `x` list means "every column
/// not claimed by `u`, `y` or `z`", in file order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub u: String,
    pub y: String,
    #[serde(default)]
    pub x: Vec<String>,
    #[serde(default)]
    pub z: Vec<String>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            u: "u".into(),
            y: "y".into(),
            x: Vec::new(),
            z: Vec::new(),
        }
    }
}

/// Parses comma-separated text with a header row into a validated [`Dataset`].
///
/// Row numbers in errors count data rows from 1, excluding the header.
pub fn ingest_csv<R: Read>(input: R, schema: &CsvSchema) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::InvalidData(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let u_col = find(&schema.u)?;
    let y_col = find(&schema.y)?;
    let z_cols = schema.z.iter().map(|c| find(c)).collect::<Result<Vec<_>>>()?;
    let x_cols = if schema.x.is_empty() {
        let claimed: HashSet<usize> = z_cols.iter().copied().chain([u_col, y_col]).collect();
        (0..headers.len()).filter(|j| !claimed.contains(j)).collect()
    } else {
        schema.x.iter().map(|c| find(c)).collect::<Result<Vec<_>>>()?
    };
    if x_cols.is_empty() {
        return Err(Error::InvalidData("no varying covariate columns".into()));
    }

    let mut u = Vec::new();
    let mut y = Vec::new();
    let mut xs = Vec::new();
    let mut zs = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::InvalidData(format!("row {row}: {e}")))?;
        let cell = |col: usize| -> Result<f64> {
            record
                .get(col)
                .and_then(|s| s.parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::NonNumericCell {
                    row,
                    column: headers[col].clone(),
                })
        };
        u.push(cell(u_col)?);
        for &c in &x_cols {
            xs.push(cell(c)?);
        }
        for &c in &z_cols {
            zs.push(cell(c)?);
        }
        y.push(cell(y_col)?);
    }
    let n = u.len();
    if n == 0 {
        return Err(Error::EmptyData);
    }
    let x = DMatrix::from_row_slice(n, x_cols.len(), &xs);
    let z = (!z_cols.is_empty()).then(|| DMatrix::from_row_slice(n, z_cols.len(), &zs));
    let x_names = x_cols.iter().map(|&c| headers[c].clone()).collect();
    let z_names = z_cols.iter().map(|&c| headers[c].clone()).collect();
    Dataset::with_names(u, x, z, y, x_names, z_names)
}

/// One block of `I` consecutive observations in index order.
#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    pub u: Vec<f64>,
    pub u_bar: f64,
    pub x: DMatrix<f64>,
    pub z: Option<DMatrix<f64>>,
    pub y: DVector<f64>,
    /// Original row indices of the group's members.
    pub rows: Vec<usize>,
}

/// Observations sorted by `U` and partitioned into `k` groups of `I` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedDesign {
    group_size: usize,
    groups: Vec<Group>,
    dropped_rows: Vec<usize>,
    p: usize,
    q: usize,
}

/// Sorts by `U` (ties broken by original row index), drops the trailing
/// `n mod I` rows and materializes the per-group blocks.
pub fn sort_and_group(data: &Dataset, group_size: usize) -> Result<GroupedDesign> {
    let n = data.n();
    let p = data.p();
    if group_size < p.max(1) {
        return Err(Error::GroupTooSmall { group_size, p });
    }
    if n < group_size {
        return Err(Error::TooFewRows { n, group_size });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| data.u[a].total_cmp(&data.u[b]).then(a.cmp(&b)));
    let k = n / group_size;
    let used = k * group_size;
    let dropped_rows = order[used..].to_vec();

    let groups = order[..used]
        .chunks(group_size)
        .map(|rows| {
            let u: Vec<f64> = rows.iter().map(|&r| data.u[r]).collect();
            let u_bar = u.iter().sum::<f64>() / group_size as f64;
            let x = DMatrix::from_fn(group_size, p, |i, j| data.x[(rows[i], j)]);
            let z = data
                .z
                .as_ref()
                .map(|z| DMatrix::from_fn(group_size, z.ncols(), |i, j| z[(rows[i], j)]));
            let y = DVector::from_fn(group_size, |i, _| data.y[rows[i]]);
            Group {
                u,
                u_bar,
                x,
                z,
                y,
                rows: rows.to_vec(),
            }
        })
        .collect();
    Ok(GroupedDesign {
        group_size,
        groups,
        dropped_rows,
        p,
        q: data.q(),
    })
}

impl GroupedDesign {
    pub fn group_size(&self) -> usize {
        self.group_size
    }

    /// Number of groups `k`.
    pub fn k(&self) -> usize {
        self.groups.len()
    }

    /// Rows actually used, `n = kI`.
    pub fn n(&self) -> usize {
        self.groups.len() * self.group_size
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    pub fn dropped_count(&self) -> usize {
        self.dropped_rows.len()
    }

    pub fn dropped_rows(&self) -> &[usize] {
        &self.dropped_rows
    }

    pub fn u_bar(&self) -> Vec<f64> {
        self.groups.iter().map(|g| g.u_bar).collect()
    }

    /// Range `max Ū − min Ū` of the group centres.
    pub fn u_bar_range(&self) -> f64 {
        let first = self.groups.first().map_or(0.0, |g| g.u_bar);
        let last = self.groups.last().map_or(0.0, |g| g.u_bar);
        last - first
    }

    /// The design of the null model in which varying column `target` has a
    /// constant coefficient: the column leaves `X` and becomes the first
    /// column of `Z`.
    pub fn move_to_constant(&self, target: usize) -> Result<GroupedDesign> {
        if target >= self.p {
            return Err(Error::InvalidParameter(format!(
                "target column {target} out of range for p = {}",
                self.p
            )));
        }
        let groups = self
            .groups
            .iter()
            .map(|g| {
                let col = g.x.column(target).clone_owned();
                let x = g.x.clone().remove_column(target);
                let z = match &g.z {
                    Some(z) => z.clone().insert_column(0, 0.0),
                    None => DMatrix::zeros(self.group_size, 1),
                };
                let mut z = z;
                z.set_column(0, &col);
                Group {
                    x,
                    z: Some(z),
                    ..g.clone()
                }
            })
            .collect();
        Ok(GroupedDesign {
            group_size: self.group_size,
            groups,
            dropped_rows: self.dropped_rows.clone(),
            p: self.p - 1,
            q: self.q + 1,
        })
    }

    /// The unrestricted varying design obtained by appending the `Z` columns
    /// to `X`.
    pub fn fold_constant_into_varying(&self) -> GroupedDesign {
        let groups = self
            .groups
            .iter()
            .map(|g| {
                let x = match &g.z {
                    Some(z) => {
                        let mut x = g.x.clone().resize_horizontally(self.p + self.q, 0.0);
                        x.columns_mut(self.p, self.q).copy_from(z);
                        x
                    }
                    None => g.x.clone(),
                };
                Group {
                    x,
                    z: None,
                    ..g.clone()
                }
            })
            .collect();
        GroupedDesign {
            group_size: self.group_size,
            groups,
            dropped_rows: self.dropped_rows.clone(),
            p: self.p + self.q,
            q: 0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize) -> Dataset {
        let u: Vec<f64> = (0..n).map(|i| ((i * 7) % n) as f64 / n as f64).collect();
        let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { (i as f64).sin() });
        let y = (0..n).map(|i| i as f64).collect();
        Dataset::new(u, x, None, y).unwrap()
    }

    #[test]
    fn ten_rows_groups_of_three() {
        let d = sort_and_group(&toy(10), 3).unwrap();
        assert_eq!(d.k(), 3);
        assert_eq!(d.dropped_count(), 1);
        assert_eq!(d.k() * d.group_size() + d.dropped_count(), 10);
    }

    #[test]
    fn five_hundred_rows_groups_of_ten() {
        let d = sort_and_group(&toy(500), 10).unwrap();
        assert_eq!((d.k(), d.dropped_count()), (50, 0));
    }

    #[test]
    fn drops_largest_u() {
        let d = sort_and_group(&toy(10), 3).unwrap();
        let dropped = d.dropped_rows()[0];
        let max_u = toy(10).u().iter().cloned().fold(f64::MIN, f64::max);
        assert_eq!(toy(10).u()[dropped], max_u);
    }

    #[test]
    fn groups_are_sorted_and_centred() {
        let d = sort_and_group(&toy(53), 5).unwrap();
        for w in d.groups().windows(2) {
            let last = w[0].u.iter().cloned().fold(f64::MIN, f64::max);
            let first = w[1].u.iter().cloned().fold(f64::MAX, f64::min);
            assert!(last <= first);
        }
        for g in d.groups() {
            let lo = g.u.iter().cloned().fold(f64::MAX, f64::min);
            let hi = g.u.iter().cloned().fold(f64::MIN, f64::max);
            assert!(g.u_bar >= lo && g.u_bar <= hi);
        }
    }

    #[test]
    fn ties_broken_by_row_index() {
        let u = vec![0.5, 0.1, 0.5, 0.1];
        let x = DMatrix::from_element(4, 1, 1.0);
        let d = Dataset::new(u, x, None, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let g = sort_and_group(&d, 2).unwrap();
        assert_eq!(g.groups()[0].rows, vec![1, 3]);
        assert_eq!(g.groups()[1].rows, vec![0, 2]);
    }

    #[test]
    fn group_size_checks() {
        let d = toy(10);
        assert_eq!(
            sort_and_group(&d, 1).unwrap_err(),
            Error::GroupTooSmall { group_size: 1, p: 2 }
        );
        assert_eq!(
            sort_and_group(&d, 11).unwrap_err(),
            Error::TooFewRows { n: 10, group_size: 11 }
        );
    }

    #[test]
    fn csv_basic() {
        let text = "u,x1,y\n0.1,1,2\n0.2,1,3\n0.3,1,4\n0.4,1,5\n0.5,1,6\n";
        let d = ingest_csv(text.as_bytes(), &CsvSchema::default()).unwrap();
        assert_eq!((d.n(), d.p(), d.q()), (5, 1, 0));
        assert_eq!(d.x_names(), ["x1"]);
    }

    #[test]
    fn csv_blank_cell() {
        let text = "u,x1,y\n0.1,1,2\n0.2,1,3\n0.3,1,\n";
        let err = ingest_csv(text.as_bytes(), &CsvSchema::default()).unwrap_err();
        assert_eq!(
            err,
            Error::NonNumericCell {
                row: 3,
                column: "y".into()
            }
        );
    }

    #[test]
    fn csv_missing_column_and_empty() {
        let err = ingest_csv("t,x1,y\n1,2,3\n".as_bytes(), &CsvSchema::default()).unwrap_err();
        assert_eq!(err, Error::MissingColumn("u".into()));
        let err = ingest_csv("u,x1,y\n".as_bytes(), &CsvSchema::default()).unwrap_err();
        assert_eq!(err, Error::EmptyData);
    }

    #[test]
    fn csv_with_constant_part_and_intercept() {
        let text = "u,x2,x3,x4,z1,y\n0.1,1,2,3,4,5\n0.2,2,3,4,5,6\n";
        let schema = CsvSchema {
            z: vec!["z1".into()],
            ..CsvSchema::default()
        };
        let d = ingest_csv(text.as_bytes(), &schema).unwrap().with_intercept();
        assert_eq!((d.p(), d.q()), (4, 1));
        assert_eq!(d.x()[(1, 0)], 1.0);
        assert_eq!(d.x()[(1, 1)], 2.0);
        assert_eq!(d.x_names()[0], "intercept");
    }

    #[test]
    fn move_and_fold_columns() {
        let d = sort_and_group(&toy(20), 5).unwrap();
        let null = d.move_to_constant(1).unwrap();
        assert_eq!((null.p(), null.q()), (1, 1));
        let g0 = &d.groups()[0];
        let n0 = &null.groups()[0];
        assert_eq!(n0.z.as_ref().unwrap().column(0), g0.x.column(1));
        let back = null.fold_constant_into_varying();
        assert_eq!((back.p(), back.q()), (2, 0));
        assert_eq!(back.groups()[0].x, g0.x);
    }
}
