use std::io::Write;

use crate::error::{Error, Result};

/// Real sparse matrix in compressed sparse column form. Row indices within
/// each column are strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds from `(row, col, value)` triplets. Duplicates are summed and
    /// explicit zeros are dropped.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut entries: Vec<(usize, usize, f64)> = Vec::with_capacity(triplets.len());
        for &(r, c, v) in triplets {
            if r >= nrows || c >= ncols {
                return Err(Error::Contract(format!(
                    "triplet ({r}, {c}) outside a {nrows}x{ncols} matrix"
                )));
            }
            entries.push((c, r, v));
        }
        entries.sort_by_key(|a| (a.0, a.1));
        let mut col_ptr = vec![0usize; ncols + 1];
        let mut row_idx = Vec::with_capacity(entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (c, r, v) in entries {
            if last == Some((c, r)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            last = Some((c, r));
            row_idx.push(r);
            values.push(v);
            col_ptr[c + 1] += 1;
        }
        for c in 0..ncols {
            col_ptr[c + 1] += col_ptr[c];
        }
        let mut m = Self { nrows, ncols, col_ptr, row_idx, values };
        m.prune_zeros();
        Ok(m)
    }

    /// Builds from row-major dense data.
    pub fn from_dense(nrows: usize, ncols: usize, data: &[f64]) -> Result<Self> {
        if data.len() != nrows * ncols {
            return Err(Error::Contract("dense data has the wrong length".into()));
        }
        let mut triplets = Vec::new();
        for r in 0..nrows {
            for c in 0..ncols {
                let v = data[r * ncols + c];
                if v != 0.0 {
                    triplets.push((r, c, v));
                }
            }
        }
        Self::from_triplets(nrows, ncols, &triplets)
    }

    fn prune_zeros(&mut self) {
        if self.values.iter().all(|v| *v != 0.0) {
            return;
        }
        let mut col_ptr = vec![0usize; self.ncols + 1];
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        for c in 0..self.ncols {
            for k in self.col_ptr[c]..self.col_ptr[c + 1] {
                if self.values[k] != 0.0 {
                    row_idx.push(self.row_idx[k]);
                    values.push(self.values[k]);
                }
            }
            col_ptr[c + 1] = row_idx.len();
        }
        self.col_ptr = col_ptr;
        self.row_idx = row_idx;
        self.values = values;
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Row indices and values of column `c`.
    pub fn column(&self, c: usize) -> (&[usize], &[f64]) {
        let range = self.col_ptr[c]..self.col_ptr[c + 1];
        (&self.row_idx[range.clone()], &self.values[range])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (rows, vals) = self.column(c);
        match rows.binary_search(&r) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    /// `W x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.nrows];
        for (c, &xc) in x.iter().enumerate().take(self.ncols) {
            if xc == 0.0 {
                continue;
            }
            let (rows, vals) = self.column(c);
            for (&r, &v) in rows.iter().zip(vals) {
                out[r] += v * xc;
            }
        }
        out
    }

    /// `Wᵀ y`.
    pub fn transpose_mul_vec(&self, y: &[f64]) -> Vec<f64> {
        (0..self.ncols)
            .map(|c| {
                let (rows, vals) = self.column(c);
                rows.iter().zip(vals).map(|(&r, &v)| v * y[r]).sum()
            })
            .collect()
    }

    /// Submatrix keeping only the listed rows, renumbered in the given order.
    /// `rows` must be strictly increasing.
    pub fn select_rows(&self, rows: &[usize]) -> SparseMatrix {
        let mut map = vec![usize::MAX; self.nrows];
        for (new, &old) in rows.iter().enumerate() {
            map[old] = new;
        }
        let mut col_ptr = vec![0usize; self.ncols + 1];
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        for c in 0..self.ncols {
            let (rs, vs) = self.column(c);
            for (&r, &v) in rs.iter().zip(vs) {
                if map[r] != usize::MAX {
                    row_idx.push(map[r]);
                    values.push(v);
                }
            }
            col_ptr[c + 1] = row_idx.len();
        }
        SparseMatrix { nrows: rows.len(), ncols: self.ncols, col_ptr, row_idx, values }
    }

    /// Column-scaled copy: column `c` multiplied by `scale[c]`.
    pub fn scale_columns(&self, scale: &[f64]) -> SparseMatrix {
        let mut out = self.clone();
        for c in 0..self.ncols {
            for k in out.col_ptr[c]..out.col_ptr[c + 1] {
                out.values[k] *= scale[c];
            }
        }
        out.prune_zeros();
        out
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.nrows * self.ncols];
        for c in 0..self.ncols {
            let (rows, vals) = self.column(c);
            for (&r, &v) in rows.iter().zip(vals) {
                d[r * self.ncols + c] = v;
            }
        }
        d
    }

    /// Nonzeros as `(row, col, value)` sorted by row, then column.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut t = Vec::with_capacity(self.nnz());
        for c in 0..self.ncols {
            let (rows, vals) = self.column(c);
            t.extend(rows.iter().zip(vals).map(|(&r, &v)| (r, c, v)));
        }
        t.sort_by_key(|a| (a.0, a.1));
        t
    }

    /// Writes the nonzeros as `u v value` lines, preceded by a
    /// `# rows cols nnz` header line.
    pub fn write_triplets<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# {} {} {}", self.nrows, self.ncols, self.nnz())?;
        for (r, c, v) in self.triplets() {
            writeln!(w, "{r} {c} {v:e}")?;
        }
        Ok(())
    }
}
