use std::collections::HashSet;
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::format::format_opt;
use crate::numerics::DenseMatrix;

/// Survival outcomes plus a row-major block of covariates that may be missing.
///
/// Generated datasets carry ids `1..=n`; bootstrap samples keep the ids of the
/// rows they copied, so ids repeat there.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalDataset {
    ids: Vec<usize>,
    time: Vec<f64>,
    event: Vec<bool>,
    n_cov: usize,
    values: Vec<Option<f64>>,
}

impl SurvivalDataset {
    pub fn new(
        ids: Vec<usize>,
        time: Vec<f64>,
        event: Vec<bool>,
        n_cov: usize,
        values: Vec<Option<f64>>,
    ) -> Result<Self> {
        let n = ids.len();
        for len in [time.len(), event.len()] {
            if len != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: len,
                });
            }
        }
        if values.len() != n * n_cov {
            return Err(Error::DimensionMismatch {
                expected: n * n_cov,
                actual: values.len(),
            });
        }
        if let Some(t) = time.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
            return Err(Error::InvalidInput(format!("survival time {t} is not positive")));
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite covariate value".into()));
        }
        Ok(Self {
            ids,
            time,
            event,
            n_cov,
            values,
        })
    }

    /// Fully observed dataset with ids `1..=n`.
    pub fn from_complete(time: Vec<f64>, event: Vec<bool>, covariates: &DenseMatrix) -> Result<Self> {
        let ids = (1..=time.len()).collect();
        let values = covariates.as_slice().iter().map(|&v| Some(v)).collect();
        Self::new(ids, time, event, covariates.cols(), values)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn n_covariates(&self) -> usize {
        self.n_cov
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn time(&self) -> &[f64] {
        &self.time
    }

    pub fn event(&self) -> &[bool] {
        &self.event
    }

    pub fn row(&self, i: usize) -> &[Option<f64>] {
        &self.values[i * self.n_cov..(i + 1) * self.n_cov]
    }

    pub fn value(&self, i: usize, j: usize) -> Option<f64> {
        self.values[i * self.n_cov + j]
    }

    pub fn set_value(&mut self, i: usize, j: usize, v: Option<f64>) {
        self.values[i * self.n_cov + j] = v;
    }

    pub fn column(&self, j: usize) -> Vec<Option<f64>> {
        (0..self.len()).map(|i| self.value(i, j)).collect()
    }

    pub fn missing_in_row(&self, i: usize) -> usize {
        self.row(i).iter().filter(|v| v.is_none()).count()
    }

    pub fn is_complete_row(&self, i: usize) -> bool {
        self.row(i).iter().all(Option::is_some)
    }

    pub fn complete_rows(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.is_complete_row(i)).collect()
    }

    pub fn has_missing(&self) -> bool {
        self.values.iter().any(Option::is_none)
    }

    pub fn missing_fraction(&self, j: usize) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let missing = (0..self.len()).filter(|&i| self.value(i, j).is_none()).count();
        missing as f64 / self.len() as f64
    }

    /// Columns with at least one missing value.
    pub fn incomplete_columns(&self) -> Vec<usize> {
        (0..self.n_cov)
            .filter(|&j| (0..self.len()).any(|i| self.value(i, j).is_none()))
            .collect()
    }

    /// Mean of the observed values in column `j`.
    pub fn observed_mean(&self, j: usize) -> Option<f64> {
        let (sum, count) = (0..self.len())
            .filter_map(|i| self.value(i, j))
            .fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
        (count > 0).then(|| sum / count as f64)
    }

    /// Rows by position, in order, repeats allowed.
    pub fn select(&self, rows: &[usize]) -> SurvivalDataset {
        let mut values = Vec::with_capacity(rows.len() * self.n_cov);
        for &i in rows {
            values.extend_from_slice(self.row(i));
        }
        SurvivalDataset {
            ids: rows.iter().map(|&i| self.ids[i]).collect(),
            time: rows.iter().map(|&i| self.time[i]).collect(),
            event: rows.iter().map(|&i| self.event[i]).collect(),
            n_cov: self.n_cov,
            values,
        }
    }

    /// Complete-case subset.
    pub fn complete_cases(&self) -> SurvivalDataset {
        self.select(&self.complete_rows())
    }

    /// Covariate matrix; every cell must be observed.
    pub fn design_matrix(&self) -> Result<DenseMatrix> {
        let mut data = Vec::with_capacity(self.values.len());
        for (k, v) in self.values.iter().enumerate() {
            match v {
                Some(x) => data.push(*x),
                None => {
                    return Err(Error::InvalidInput(format!(
                        "x{} is missing for subject {}",
                        k % self.n_cov + 1,
                        self.ids[k / self.n_cov]
                    )))
                }
            }
        }
        DenseMatrix::new(self.len(), self.n_cov, data)
    }

    pub fn has_unique_ids(&self) -> bool {
        let mut seen = HashSet::with_capacity(self.len());
        self.ids.iter().all(|id| seen.insert(*id))
    }

    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["id".to_string(), "s".to_string(), "delta".to_string()];
        h.extend((1..=self.n_cov).map(|j| format!("x{j}")));
        h
    }

    /// Writes `id,s,delta,x1,...` with missing cells left empty. Each entry of
    /// `comments` becomes a leading `# ` line.
    pub fn write_csv<W: Write>(&self, mut out: W, comments: &[String]) -> Result<()> {
        for c in comments {
            writeln!(out, "# {c}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.header())?;
        let mut record = Vec::with_capacity(self.n_cov + 3);
        for i in 0..self.len() {
            record.clear();
            record.push(self.ids[i].to_string());
            record.push(format_opt(Some(self.time[i])));
            record.push(if self.event[i] { "1" } else { "0" }.to_string());
            record.extend(self.row(i).iter().map(|v| format_opt(*v)));
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the format produced by [`write_csv`](Self::write_csv). Lines
    /// starting with `#` are skipped; empty cells and `NA` are missing.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(input);
        let header = reader.headers()?.clone();
        if header.len() < 3 || &header[0] != "id" || &header[1] != "s" || &header[2] != "delta" {
            return Err(Error::Parse("header must start with id,s,delta".into()));
        }
        let n_cov = header.len() - 3;
        for (j, name) in header.iter().skip(3).enumerate() {
            if name != format!("x{}", j + 1) {
                return Err(Error::Parse(format!("unexpected column `{name}`")));
            }
        }
        let (mut ids, mut time, mut event, mut values) = (vec![], vec![], vec![], vec![]);
        for (line, rec) in reader.records().enumerate() {
            let rec = rec?;
            let field = |k: usize| -> Result<&str> {
                rec.get(k)
                    .ok_or_else(|| Error::Parse(format!("row {}: too few fields", line + 1)))
            };
            ids.push(parse_num::<usize>(field(0)?, line)?);
            time.push(parse_num::<f64>(field(1)?, line)?);
            event.push(match field(2)? {
                "1" => true,
                "0" => false,
                other => return Err(Error::Parse(format!("row {}: delta `{other}`", line + 1))),
            });
            for k in 0..n_cov {
                let f = field(3 + k)?;
                values.push(if f.is_empty() || f == "NA" {
                    None
                } else {
                    Some(parse_num::<f64>(f, line)?)
                });
            }
        }
        if ids.is_empty() {
            return Err(Error::Parse("dataset has no rows".into()));
        }
        let data = Self::new(ids, time, event, n_cov, values)?;
        if !data.has_unique_ids() {
            return Err(Error::Parse("subject ids are not unique".into()));
        }
        Ok(data)
    }
}

fn parse_num<T: std::str::FromStr>(s: &str, line: usize) -> Result<T> {
    s.parse()
        .map_err(|_| Error::Parse(format!("row {}: cannot parse `{s}`", line + 1)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SurvivalDataset {
        SurvivalDataset::new(
            vec![1, 2, 3],
            vec![1.5, 2.0, 0.25],
            vec![true, false, true],
            2,
            vec![Some(1.0), None, Some(0.0), Some(3.5), None, None],
        )
        .unwrap()
    }

    #[test]
    fn csv_layout() {
        let mut buf = Vec::new();
        small().write_csv(&mut buf, &["seed=1".into()]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "# seed=1\nid,s,delta,x1,x2\n1,1.5,1,1,\n2,2,0,0,3.5\n3,0.25,1,,\n"
        );
        let back = SurvivalDataset::read_csv(text.as_bytes()).unwrap();
        assert_eq!(back, small());
    }

    #[test]
    fn row_queries() {
        let d = small();
        assert_eq!(d.complete_rows(), vec![1]);
        assert_eq!(d.missing_in_row(2), 2);
        assert_eq!(d.incomplete_columns(), vec![0, 1]);
        assert!((d.missing_fraction(1) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(d.observed_mean(0), Some(0.5));
        assert!(d.design_matrix().is_err());
        assert_eq!(d.complete_cases().design_matrix().unwrap().as_slice(), &[0.0, 3.5]);
        let boot = d.select(&[2, 2, 0]);
        assert_eq!(boot.ids(), &[3, 3, 1]);
        assert!(!boot.has_unique_ids());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(SurvivalDataset::new(vec![1], vec![0.0], vec![true], 0, vec![]).is_err());
        assert!(SurvivalDataset::read_csv("id,s,delta,x1\n".as_bytes()).is_err());
        assert!(SurvivalDataset::read_csv("id,s,delta,x1\n1,2,3,4\n".as_bytes()).is_err());
        assert!(SurvivalDataset::read_csv("id,s,delta,x1\n1,2,1,4\n1,3,0,\n".as_bytes()).is_err());
        assert!(SurvivalDataset::read_csv("id,t,delta\n1,2,1\n".as_bytes()).is_err());
    }
}
