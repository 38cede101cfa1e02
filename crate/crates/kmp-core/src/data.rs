//! Multiview dataset model and delimited-text ingestion.
//!
//! A dataset holds M feature matrices over a shared sample index, samples
//! as rows. File format: comma-separated values, one sample per line, `.`
//! decimal point, optional leading comment lines starting with `#`. Labels
//! live in a separate file, one label string per line.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{KmpError, Result};

/// M aligned feature views over one sample index, with optional labels.
///
/// Immutable after construction; safe to share across threads.
#[derive(Debug, Clone)]
pub struct MultiviewDataset {
    views: Vec<DMatrix<f64>>,
    labels: Option<Vec<String>>,
    sample_ids: Vec<String>,
}

impl MultiviewDataset {
    /// Builds a dataset from per-view matrices, validating the shared
    /// sample count, nonempty shapes, and finiteness of every entry.
    pub fn new(
        views: Vec<DMatrix<f64>>,
        labels: Option<Vec<String>>,
        sample_ids: Option<Vec<String>>,
    ) -> Result<Self> {
        if views.is_empty() {
            return Err(KmpError::Argument("at least one view is required".into()));
        }
        let n = views[0].nrows();
        if n < 2 {
            return Err(KmpError::Argument(format!(
                "need at least 2 samples, got {n}"
            )));
        }
        for (i, v) in views.iter().enumerate() {
            if v.nrows() != n {
                return Err(KmpError::Dimension(format!(
                    "view {} has {} rows, view 0 has {}",
                    i + 1,
                    v.nrows(),
                    n
                )));
            }
            if v.ncols() == 0 {
                return Err(KmpError::Dimension(format!("view {} has no columns", i + 1)));
            }
            if let Some((r, c)) = first_non_finite(v) {
                return Err(KmpError::Argument(format!(
                    "view {} has a non-finite entry at row {}, column {}",
                    i + 1,
                    r + 1,
                    c + 1
                )));
            }
        }
        if let Some(ref l) = labels {
            if l.len() != n {
                return Err(KmpError::Dimension(format!(
                    "{} labels for {} samples",
                    l.len(),
                    n
                )));
            }
        }
        let sample_ids = match sample_ids {
            Some(ids) => {
                if ids.len() != n {
                    return Err(KmpError::Dimension(format!(
                        "{} sample ids for {} samples",
                        ids.len(),
                        n
                    )));
                }
                ids
            }
            None => (0..n).map(|p| p.to_string()).collect(),
        };
        Ok(Self {
            views,
            labels,
            sample_ids,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.views[0].nrows()
    }

    pub fn n_views(&self) -> usize {
        self.views.len()
    }

    /// Feature dimension of each view.
    pub fn dims(&self) -> Vec<usize> {
        self.views.iter().map(|v| v.ncols()).collect()
    }

    pub fn view(&self, i: usize) -> &DMatrix<f64> {
        &self.views[i]
    }

    pub fn views(&self) -> &[DMatrix<f64>] {
        &self.views
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    /// New dataset holding the given sample rows, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let views = self
            .views
            .iter()
            .map(|v| DMatrix::from_fn(indices.len(), v.ncols(), |i, j| v[(indices[i], j)]))
            .collect();
        let labels = self
            .labels
            .as_ref()
            .map(|l| indices.iter().map(|&p| l[p].clone()).collect());
        let sample_ids = indices.iter().map(|&p| self.sample_ids[p].clone()).collect();
        Self {
            views,
            labels,
            sample_ids,
        }
    }

    /// Deterministic random partition into train and test parts.
    ///
    /// `train_fraction` must lie strictly inside (0, 1) and leave at least
    /// two training samples. The same (dataset, fraction, seed) always
    /// produces the same index partition.
    pub fn split(&self, train_fraction: f64, seed: u64) -> Result<(Self, Self)> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(KmpError::Argument(format!(
                "train fraction must lie in (0, 1), got {train_fraction}"
            )));
        }
        let n = self.n_samples();
        if (n as f64) * train_fraction < 2.0 {
            return Err(KmpError::Argument(format!(
                "train fraction {train_fraction} leaves fewer than 2 of {n} samples for training"
            )));
        }
        let n_train = ((n as f64) * train_fraction).floor() as usize;
        let mut indices: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        indices.shuffle(&mut rng);
        let mut train_idx = indices[..n_train].to_vec();
        let mut test_idx = indices[n_train..].to_vec();
        train_idx.sort_unstable();
        test_idx.sort_unstable();
        Ok((self.subset(&train_idx), self.subset(&test_idx)))
    }
}

fn first_non_finite(m: &DMatrix<f64>) -> Option<(usize, usize)> {
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            if !m[(r, c)].is_finite() {
                return Some((r, c));
            }
        }
    }
    None
}

/// Loads per-view matrix files (and an optional label file) into a dataset.
///
/// All files must agree on the row count; view order follows argument order.
pub fn load_views<P: AsRef<Path>>(paths: &[P], label_path: Option<P>) -> Result<MultiviewDataset> {
    if paths.is_empty() {
        return Err(KmpError::Argument("at least one view file is required".into()));
    }
    let mut views = Vec::with_capacity(paths.len());
    for p in paths {
        views.push(read_matrix(p.as_ref())?);
    }
    for (i, v) in views.iter().enumerate().skip(1) {
        if v.nrows() != views[0].nrows() {
            return Err(KmpError::Dimension(format!(
                "{} has {} rows but {} has {}",
                paths[i].as_ref().display(),
                v.nrows(),
                paths[0].as_ref().display(),
                views[0].nrows()
            )));
        }
    }
    let labels = match label_path {
        Some(lp) => {
            let labels = read_labels(lp.as_ref())?;
            if labels.len() != views[0].nrows() {
                return Err(KmpError::Dimension(format!(
                    "{} has {} labels but {} has {} rows",
                    lp.as_ref().display(),
                    labels.len(),
                    paths[0].as_ref().display(),
                    views[0].nrows()
                )));
            }
            Some(labels)
        }
        None => None,
    };
    MultiviewDataset::new(views, labels, None)
}

/// Reads one comma-separated matrix file. Lines beginning with `#` and
/// blank lines are skipped; every cell must parse as a finite f64.
pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let text = fs::read_to_string(path).map_err(|source| KmpError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut ncols = 0usize;
    for (line_no, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut row = Vec::with_capacity(ncols);
        for (col_no, cell) in trimmed.split(',').enumerate() {
            let token = cell.trim();
            let value: f64 = token.parse().map_err(|_| KmpError::Parse {
                path: path.to_path_buf(),
                row: line_no + 1,
                col: col_no + 1,
                token: token.to_string(),
            })?;
            if !value.is_finite() {
                return Err(KmpError::NonFinite {
                    path: path.to_path_buf(),
                    row: line_no + 1,
                    col: col_no + 1,
                });
            }
            row.push(value);
        }
        if rows.is_empty() {
            ncols = row.len();
        } else if row.len() != ncols {
            return Err(KmpError::Dimension(format!(
                "{}: line {} has {} columns, expected {}",
                path.display(),
                line_no + 1,
                row.len(),
                ncols
            )));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(KmpError::Dimension(format!(
            "{}: no data rows",
            path.display()
        )));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

/// Writes a matrix in the same delimited format `read_matrix` accepts.
/// Values print in shortest round-trip form, so reload is bit-exact.
pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut out = String::new();
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            if c > 0 {
                out.push(',');
            }
            out.push_str(&m[(r, c)].to_string());
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|source| KmpError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads a label file: one label string per line, blank lines ignored.
pub fn read_labels(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|source| KmpError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}

/// Writes labels, one per line.
pub fn write_labels(path: &Path, labels: &[String]) -> Result<()> {
    let mut out = String::new();
    for l in labels {
        out.push_str(l);
        out.push('\n');
    }
    fs::write(path, out).map_err(|source| KmpError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use tempfile::tempdir;

    fn write_file(dir: &Path, name: &str, contents: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, contents).unwrap();
        p
    }

    #[test]
    fn loads_two_views_with_matching_rows() {
        let dir = tempdir().unwrap();
        let a = write_file(
            dir.path(),
            "a.csv",
            "# header\n1,2,3\n4,5,6\n7,8,9\n10,11,12\n13,14,15\n",
        );
        let b = write_file(
            dir.path(),
            "b.csv",
            "1,2,3,4,5,6,7\n1,2,3,4,5,6,7\n1,2,3,4,5,6,7\n1,2,3,4,5,6,7\n1,2,3,4,5,6,7\n",
        );
        let ds = load_views(&[a, b], None).unwrap();
        assert_eq!(ds.n_samples(), 5);
        assert_eq!(ds.n_views(), 2);
        assert_eq!(ds.dims(), vec![3, 7]);
    }

    #[test]
    fn row_count_mismatch_names_both_files() {
        let dir = tempdir().unwrap();
        let a = write_file(dir.path(), "a.csv", "1\n2\n3\n4\n5\n");
        let b = write_file(dir.path(), "b.csv", "1\n2\n3\n4\n5\n6\n");
        let err = load_views(&[a, b], None).unwrap_err();
        match err {
            KmpError::Dimension(msg) => {
                assert!(msg.contains("a.csv") && msg.contains("b.csv"), "{msg}");
            }
            other => panic!("expected dimension error, got {other:?}"),
        }
    }

    #[test]
    fn nan_cell_reports_coordinates() {
        let dir = tempdir().unwrap();
        let a = write_file(dir.path(), "a.csv", "1,2\n3,NaN\n5,6\n");
        let err = read_matrix(&a).unwrap_err();
        match err {
            KmpError::NonFinite { row, col, .. } => {
                assert_eq!((row, col), (2, 2));
            }
            other => panic!("expected non-finite error, got {other:?}"),
        }
    }

    #[test]
    fn bad_token_reports_coordinates() {
        let dir = tempdir().unwrap();
        let a = write_file(dir.path(), "a.csv", "1,2\n3,x7\n");
        let err = read_matrix(&a).unwrap_err();
        match err {
            KmpError::Parse { row, col, token, .. } => {
                assert_eq!((row, col), (2, 2));
                assert_eq!(token, "x7");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn split_partitions_and_is_deterministic() {
        let views = vec![DMatrix::from_fn(10, 3, |i, j| (i * 3 + j) as f64)];
        let labels: Vec<String> = (0..10).map(|i| format!("c{}", i % 2)).collect();
        let ds = MultiviewDataset::new(views, Some(labels), None).unwrap();

        let (tr, te) = ds.split(0.5, 7).unwrap();
        assert_eq!(tr.n_samples(), 5);
        assert_eq!(te.n_samples(), 5);
        let mut all: Vec<&String> = tr.sample_ids().iter().chain(te.sample_ids()).collect();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 10, "parts must partition the sample index");

        let (tr2, te2) = ds.split(0.5, 7).unwrap();
        assert_eq!(tr.sample_ids(), tr2.sample_ids());
        assert_eq!(te.sample_ids(), te2.sample_ids());
        assert_eq!(tr.view(0), tr2.view(0));

        // labels travel with their rows
        for (id, label) in tr.sample_ids().iter().zip(tr.labels().unwrap()) {
            let orig: usize = id.parse().unwrap();
            assert_eq!(label, &format!("c{}", orig % 2));
        }
    }

    #[test]
    fn split_rejects_bad_fraction() {
        let views = vec![DMatrix::from_element(10, 2, 1.0)];
        let ds = MultiviewDataset::new(views, None, None).unwrap();
        assert!(matches!(ds.split(1.0, 0), Err(KmpError::Argument(_))));
        assert!(matches!(ds.split(0.0, 0), Err(KmpError::Argument(_))));
        assert!(matches!(ds.split(0.1, 0), Err(KmpError::Argument(_))));
    }

    #[test]
    fn rejects_non_finite_views() {
        let mut v = DMatrix::from_element(3, 2, 1.0);
        v[(1, 1)] = f64::INFINITY;
        assert!(MultiviewDataset::new(vec![v], None, None).is_err());
    }

    proptest! {
        #[test]
        fn write_read_round_trip(rows in 1usize..8, cols in 1usize..6, seed in 0u64..1000) {
            use rand::Rng;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = DMatrix::from_fn(rows, cols, |_, _| {
                rng.random_range(-1.0e6..1.0e6_f64)
            });
            let dir = tempdir().unwrap();
            let p = dir.path().join("m.csv");
            write_matrix(&p, &m).unwrap();
            let back = read_matrix(&p).unwrap();
            prop_assert_eq!(m, back);
        }
    }
}
