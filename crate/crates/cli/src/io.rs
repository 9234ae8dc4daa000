//! CSV input and output.
//!
//! Input files have a header row and numeric cells. Lines starting with `#`
//! are comments. The last column is the response and the others are
//! covariates, except that a trailing `theta_star` column (as written by
//! `simulate`) is split off as the true quantile.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use ndarray::Array2;
use qknn::format::sig6;
use qknn::Dataset;

/// Header plus numeric rows of a CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    /// Column-major copy of the first `cols` columns.
    pub fn matrix(&self, cols: usize) -> Array2<f64> {
        Array2::from_shape_fn((self.rows.len(), cols), |(i, j)| self.rows[i][j])
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }
}

pub fn read_table(path: &Path) -> Result<Table> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let header: Vec<String> = reader
        .headers()
        .with_context(|| format!("{}: cannot read header", path.display()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        bail!("{}: missing header row", path.display());
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.with_context(|| format!("{}: malformed CSV", path.display()))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != header.len() {
            bail!(
                "{}:{line}: expected {} fields, found {}",
                path.display(),
                header.len(),
                record.len()
            );
        }
        let mut row = Vec::with_capacity(record.len());
        for (cell, name) in record.iter().zip(&header) {
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => row.push(v),
                _ => bail!(
                    "{}:{line}: column {name}: not a finite number: {cell:?}",
                    path.display()
                ),
            }
        }
        rows.push(row);
    }
    Ok(Table { header, rows })
}

/// A data file split into covariates, response and, when present, the true
/// quantile.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub data: Dataset,
    pub theta_star: Option<Vec<f64>>,
    pub x_names: Vec<String>,
}

pub fn load_csv(path: &Path) -> Result<Loaded> {
    let table = read_table(path)?;
    let has_truth = table.header.last().is_some_and(|h| h == "theta_star");
    let y_col = table.header.len() - 1 - usize::from(has_truth);
    if y_col == 0 {
        bail!(
            "{}: need at least one covariate column and a response column",
            path.display()
        );
    }
    if table.rows.is_empty() {
        bail!("{}: empty dataset (no data rows)", path.display());
    }
    let data = Dataset::new(table.matrix(y_col), table.column(y_col))
        .with_context(|| path.display().to_string())?;
    Ok(Loaded {
        data,
        theta_star: has_truth.then(|| table.column(y_col + 1)),
        x_names: table.header[..y_col].to_vec(),
    })
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(file))
}

/// Writes covariates and response at full precision followed by extra
/// columns at 6 significant digits.
pub fn write_columns(
    path: &Path,
    x_names: &[String],
    data: &Dataset,
    extra: &[(&str, &[f64])],
) -> Result<()> {
    let mut w = create(path)?;
    let mut header: Vec<&str> = x_names.iter().map(String::as_str).collect();
    header.push("y");
    header.extend(extra.iter().map(|(name, _)| *name));
    writeln!(w, "{}", header.join(","))?;
    for (i, row) in data.x().outer_iter().enumerate() {
        let mut cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        cells.push(format!("{:?}", data.y()[i]));
        cells.extend(extra.iter().map(|(_, col)| sig6(col[i])));
        writeln!(w, "{}", cells.join(","))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn three_by_three() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "a,b,y\n1,2,3\n4,5,6\n7,8,9\n");
        let l = load_csv(&p).unwrap();
        assert_eq!((l.data.n(), l.data.d()), (3, 2));
        assert_eq!(l.data.y(), &[3.0, 6.0, 9.0]);
        assert!(l.theta_star.is_none());
        assert_eq!(l.x_names, vec!["a", "b"]);
    }

    #[test]
    fn header_only_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "x1,y\n");
        let e = load_csv(&p).unwrap_err().to_string();
        assert!(e.contains("empty dataset"), "{e}");
    }

    #[test]
    fn errors_name_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "# note\nx1,y\n1,2\n3,oops\n");
        let e = load_csv(&p).unwrap_err().to_string();
        assert!(e.contains(":4:") && e.contains("oops"), "{e}");
        let p = write(&dir, "b.csv", "x1,y\n1,2\n3\n");
        let e = load_csv(&p).unwrap_err().to_string();
        assert!(e.contains(":3:") && e.contains("expected 2 fields"), "{e}");
        let p = write(&dir, "c.csv", "x1,y\n1,nan\n");
        assert!(load_csv(&p).is_err());
        assert!(load_csv(&dir.path().join("missing.csv"))
            .unwrap_err()
            .to_string()
            .contains("cannot open"));
    }

    #[test]
    fn trailing_truth_column_is_split_off() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "a.csv",
            "# scenario=1\nx1,x2,y,theta_star\n0.1,0.2,3,1\n0.3,0.4,-1,0\n",
        );
        let l = load_csv(&p).unwrap();
        assert_eq!(l.data.d(), 2);
        assert_eq!(l.data.y(), &[3.0, -1.0]);
        assert_eq!(l.theta_star, Some(vec![1.0, 0.0]));
    }
}
