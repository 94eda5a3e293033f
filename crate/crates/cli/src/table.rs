//! CSV ingestion: comma-separated, UTF-8, mandatory header, `.` decimals.

use std::path::Path;

use anyhow::{bail, Context, Result};

const MISSING: [&str; 6] = ["", "NA", "N/A", "NaN", "nan", "null"];

pub struct Table {
    headers: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_path(path)
            .with_context(|| format!("cannot open {}", path.display()))?;
        let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if headers.is_empty() || headers.iter().all(String::is_empty) {
            bail!(cpcm::Error::Precondition(format!("{} has no header row", path.display())));
        }
        let rows = rdr
            .records()
            .collect::<Result<Vec<_>, _>>()
            .with_context(|| format!("malformed CSV in {}", path.display()))?;
        Ok(Table { headers, rows })
    }

    pub fn headers(&self) -> &[String] {
        &self.headers
    }

    fn index(&self, name: &str) -> Result<usize> {
        self.headers.iter().position(|h| h == name).ok_or_else(|| {
            cpcm::Error::Precondition(format!("no column named '{name}' (available: {})", self.headers.join(", ")))
                .into()
        })
    }

    /// Rejects the selection when any selected cell is missing, reporting how
    /// many rows are affected in total and per column.
    fn check_missing(&self, idx: &[usize], names: &[&str]) -> Result<()> {
        let is_missing = |r: &csv::StringRecord, i: usize| r.get(i).is_none_or(|v| MISSING.contains(&v));
        let per_column: Vec<usize> =
            idx.iter().map(|&i| self.rows.iter().filter(|r| is_missing(r, i)).count()).collect();
        let rows = self.rows.iter().filter(|r| idx.iter().any(|&i| is_missing(r, i))).count();
        if rows > 0 {
            let detail: Vec<String> =
                names.iter().zip(&per_column).filter(|(_, &c)| c > 0).map(|(n, c)| format!("{n}: {c}")).collect();
            bail!(cpcm::Error::Precondition(format!(
                "{rows} of {} rows have missing values ({}); remove or impute them first",
                self.rows.len(),
                detail.join(", ")
            )));
        }
        Ok(())
    }

    pub fn numeric(&self, names: &[&str]) -> Result<Vec<Vec<f64>>> {
        let idx = names.iter().map(|n| self.index(n)).collect::<Result<Vec<_>>>()?;
        self.check_missing(&idx, names)?;
        idx.iter()
            .zip(names)
            .map(|(&i, name)| {
                self.rows
                    .iter()
                    .enumerate()
                    .map(|(r, rec)| {
                        let raw = &rec[i];
                        match raw.parse::<f64>() {
                            Ok(v) if v.is_finite() => Ok(v),
                            _ => bail!(cpcm::Error::Precondition(format!(
                                "column '{name}', data row {}: '{raw}' is not a finite number",
                                r + 1
                            ))),
                        }
                    })
                    .collect()
            })
            .collect()
    }

    pub fn integer(&self, name: &str) -> Result<Vec<i64>> {
        let i = self.index(name)?;
        self.check_missing(&[i], &[name])?;
        self.rows
            .iter()
            .enumerate()
            .map(|(r, rec)| {
                let raw = &rec[i];
                raw.parse::<i64>().map_err(|_| {
                    cpcm::Error::Precondition(format!(
                        "column '{name}', data row {}: '{raw}' is not an integer label",
                        r + 1
                    ))
                    .into()
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(text: &str) -> Table {
        let dir = std::env::temp_dir().join(format!("cpcm-table-{}-{}", std::process::id(), text.len()));
        std::fs::write(&dir, text).unwrap();
        let t = Table::read(&dir).unwrap();
        std::fs::remove_file(&dir).ok();
        t
    }

    #[test]
    fn numeric_columns_by_name() {
        let t = table("a,b\n1,2.5\n3,-4e-1\n");
        assert_eq!(t.numeric(&["b", "a"]).unwrap(), vec![vec![2.5, -0.4], vec![1.0, 3.0]]);
    }

    #[test]
    fn missing_values_are_counted() {
        let t = table("a,b,c\n1,,3\nNA,2,3\n1,NaN,x\n");
        let msg = t.numeric(&["a", "b"]).unwrap_err().to_string();
        assert!(msg.contains("3 of 3 rows"), "{msg}");
        assert!(msg.contains("a: 1") && msg.contains("b: 2"), "{msg}");
    }

    #[test]
    fn bad_cells_and_columns() {
        let t = table("a,env\n1,0\nfoo,1\n");
        assert!(t.numeric(&["a"]).unwrap_err().to_string().contains("data row 2"));
        assert!(t.numeric(&["zzz"]).is_err());
        assert_eq!(t.integer("env").unwrap(), vec![0, 1]);
    }
}
