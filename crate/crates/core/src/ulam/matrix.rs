use std::fmt::Write as _;
use std::io::{self, BufRead, Write};

use super::UlamError;

/// Sparse nonnegative matrix between two ordered sets of bin ids, stored CSR.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionMatrix {
    row_bins: Vec<usize>,
    col_bins: Vec<usize>,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl TransitionMatrix {
    /// Builds from per-row `(local column, value)` lists. Columns within a
    /// row must be strictly increasing.
    pub fn from_rows(
        row_bins: Vec<usize>,
        col_bins: Vec<usize>,
        rows: Vec<Vec<(usize, f64)>>,
    ) -> Result<Self, UlamError> {
        if rows.len() != row_bins.len() {
            return Err(UlamError::Malformed(format!(
                "{} rows for {} row bins",
                rows.len(),
                row_bins.len()
            )));
        }
        let ncols = col_bins.len();
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for (r, row) in rows.into_iter().enumerate() {
            let mut last = None;
            for (c, val) in row {
                if c >= ncols || last.is_some_and(|l| c <= l) {
                    return Err(UlamError::Malformed(format!(
                        "row {r}: column {c} out of order or range"
                    )));
                }
                last = Some(c);
                indices.push(c);
                values.push(val);
            }
            indptr.push(indices.len());
        }
        Ok(Self {
            row_bins,
            col_bins,
            indptr,
            indices,
            values,
        })
    }

    pub fn identity(bins: Vec<usize>) -> Self {
        let n = bins.len();
        Self {
            col_bins: bins.clone(),
            row_bins: bins,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn row_bins(&self) -> &[usize] {
        &self.row_bins
    }

    pub fn col_bins(&self) -> &[usize] {
        &self.col_bins
    }

    pub fn nrows(&self) -> usize {
        self.row_bins.len()
    }

    pub fn ncols(&self) -> usize {
        self.col_bins.len()
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `(local column, value)` pairs of one row.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.indptr[r]..self.indptr[r + 1];
        match self.indices[span.clone()].binary_search(&c) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    /// `(row, col, value)` over local indices, row-major.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows()).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.nrows()).map(|r| self.row(r).map(|(_, v)| v).sum()).collect()
    }

    /// `A x` for `x` over the column bins.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols());
        (0..self.nrows())
            .map(|r| self.row(r).map(|(c, v)| v * x[c]).sum())
            .collect()
    }

    /// `A^T y` for `y` over the row bins.
    pub fn matvec_t(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.nrows());
        let mut out = vec![0.0; self.ncols()];
        for (r, &yr) in y.iter().enumerate() {
            if yr != 0.0 {
                for (c, v) in self.row(r) {
                    out[c] += v * yr;
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> TransitionMatrix {
        let mut rows = vec![Vec::new(); self.ncols()];
        for (r, c, v) in self.triplets() {
            rows[c].push((r, v));
        }
        TransitionMatrix::from_rows(self.col_bins.clone(), self.row_bins.clone(), rows)
            .expect("transpose of a valid matrix")
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols()]; self.nrows()];
        for (r, c, v) in self.triplets() {
            d[r][c] = v;
        }
        d
    }

    /// Sparse product `self * rhs`; requires `self.col_bins == rhs.row_bins`.
    pub fn multiply(&self, rhs: &TransitionMatrix) -> Result<TransitionMatrix, UlamError> {
        if self.col_bins != rhs.row_bins {
            return Err(UlamError::IndexMismatch);
        }
        let n = rhs.ncols();
        let mut acc = vec![0.0; n];
        let mut touched = vec![false; n];
        let mut cols: Vec<usize> = Vec::new();
        let mut rows = Vec::with_capacity(self.nrows());
        for r in 0..self.nrows() {
            for (k, a) in self.row(r) {
                for (c, b) in rhs.row(k) {
                    if !touched[c] {
                        touched[c] = true;
                        cols.push(c);
                    }
                    acc[c] += a * b;
                }
            }
            cols.sort_unstable();
            let row: Vec<(usize, f64)> = cols.iter().map(|&c| (c, acc[c])).collect();
            for &c in &cols {
                acc[c] = 0.0;
                touched[c] = false;
            }
            cols.clear();
            rows.push(row);
        }
        TransitionMatrix::from_rows(self.row_bins.clone(), rhs.col_bins.clone(), rows)
    }

    /// Writes the text dump: a size line, the two bin-id lists, then one
    /// `row col value` triplet per line.
    pub fn write_dump<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "rows {} cols {} nnz {}", self.nrows(), self.ncols(), self.nnz())?;
        writeln!(w, "row_bins{}", join_ids(&self.row_bins))?;
        writeln!(w, "col_bins{}", join_ids(&self.col_bins))?;
        for (r, c, v) in self.triplets() {
            writeln!(w, "{r} {c} {v}")?;
        }
        Ok(())
    }

    pub fn read_dump<R: BufRead>(reader: R) -> Result<Self, UlamError> {
        let bad = |m: &str| UlamError::Malformed(format!("matrix dump: {m}"));
        let mut lines = reader.lines();
        let mut next = || -> Result<String, UlamError> {
            lines
                .next()
                .ok_or_else(|| bad("truncated"))?
                .map_err(|e| bad(&e.to_string()))
        };
        let header = next()?;
        let h: Vec<&str> = header.split_whitespace().collect();
        let parse = |s: &str| s.parse::<usize>().map_err(|_| bad("bad integer"));
        if h.len() != 6 || h[0] != "rows" || h[2] != "cols" || h[4] != "nnz" {
            return Err(bad("bad header"));
        }
        let (nrows, ncols, nnz) = (parse(h[1])?, parse(h[3])?, parse(h[5])?);
        let ids = |line: String, key: &str| -> Result<Vec<usize>, UlamError> {
            let mut it = line.split_whitespace();
            if it.next() != Some(key) {
                return Err(bad("missing bin list"));
            }
            it.map(parse).collect()
        };
        let row_bins = ids(next()?, "row_bins")?;
        let col_bins = ids(next()?, "col_bins")?;
        if row_bins.len() != nrows || col_bins.len() != ncols {
            return Err(bad("bin list length"));
        }
        let mut rows = vec![Vec::new(); nrows];
        for _ in 0..nnz {
            let line = next()?;
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 {
                return Err(bad("bad triplet"));
            }
            let r = parse(f[0])?;
            let c = parse(f[1])?;
            let v: f64 = f[2].parse().map_err(|_| bad("bad value"))?;
            rows.get_mut(r).ok_or_else(|| bad("row out of range"))?.push((c, v));
        }
        Self::from_rows(row_bins, col_bins, rows)
    }
}

fn join_ids(ids: &[usize]) -> String {
    let mut s = String::with_capacity(ids.len() * 6);
    for id in ids {
        let _ = write!(s, " {id}");
    }
    s
}

/// Left-to-right product of a chain of step matrices.
pub fn compose(steps: &[TransitionMatrix]) -> Result<TransitionMatrix, UlamError> {
    let (first, rest) = steps.split_first().ok_or(UlamError::EmptyChain)?;
    rest.iter().try_fold(first.clone(), |acc, m| acc.multiply(m))
}

/// A vector supported on an ascending list of bin ids.
#[derive(Clone, Debug, PartialEq)]
pub struct SupportVector {
    pub bins: Vec<usize>,
    pub values: Vec<f64>,
}

impl SupportVector {
    pub fn new(bins: Vec<usize>, values: Vec<f64>) -> Self {
        assert_eq!(bins.len(), values.len());
        debug_assert!(bins.windows(2).all(|w| w[0] < w[1]));
        Self { bins, values }
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Re-indexes two vectors onto the sorted union of their supports, filling
/// missing entries with zero.
pub fn lift(a: &SupportVector, b: &SupportVector) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    let cap = a.bins.len() + b.bins.len();
    let mut bins = Vec::with_capacity(cap);
    let mut va = Vec::with_capacity(cap);
    let mut vb = Vec::with_capacity(cap);
    let (mut i, mut j) = (0, 0);
    while i < a.bins.len() || j < b.bins.len() {
        let ai = a.bins.get(i).copied().unwrap_or(usize::MAX);
        let bj = b.bins.get(j).copied().unwrap_or(usize::MAX);
        if ai == bj {
            bins.push(ai);
            va.push(a.values[i]);
            vb.push(b.values[j]);
            i += 1;
            j += 1;
        } else if ai < bj {
            bins.push(ai);
            va.push(a.values[i]);
            vb.push(0.0);
            i += 1;
        } else {
            bins.push(bj);
            va.push(0.0);
            vb.push(b.values[j]);
            j += 1;
        }
    }
    (bins, va, vb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn permutation(bins: Vec<usize>, perm: &[usize]) -> TransitionMatrix {
        let rows = perm.iter().map(|&c| vec![(c, 1.0)]).collect();
        TransitionMatrix::from_rows(bins.clone(), bins, rows).unwrap()
    }

    fn dense_product(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let inner = b.len();
        let cols = b.first().map_or(0, |r| r.len());
        a.iter()
            .map(|row| {
                (0..cols)
                    .map(|c| (0..inner).map(|k| row[k] * b[k][c]).sum())
                    .collect()
            })
            .collect()
    }

    #[test]
    fn compose_single_and_permutations() {
        let p = permutation(vec![3, 5, 9], &[1, 2, 0]);
        assert_eq!(compose(std::slice::from_ref(&p)).unwrap(), p);
        let q = permutation(vec![3, 5, 9], &[2, 0, 1]);
        let pq = compose(&[p.clone(), q]).unwrap();
        assert_eq!(pq, TransitionMatrix::identity(vec![3, 5, 9]));
        let pp = compose(&[p.clone(), p]).unwrap();
        assert_eq!(pp, permutation(vec![3, 5, 9], &[2, 0, 1]));
    }

    #[test]
    fn compose_checks_index_sets() {
        let a = TransitionMatrix::identity(vec![1, 2]);
        let b = TransitionMatrix::identity(vec![1, 3]);
        assert!(matches!(compose(&[a, b]), Err(UlamError::IndexMismatch)));
        assert!(matches!(compose(&[]), Err(UlamError::EmptyChain)));
    }

    #[test]
    fn random_chain_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let dims: Vec<usize> = (0..6).map(|_| rng.gen_range(1..=40)).collect();
            let mut chain = Vec::new();
            let mut offset = 0;
            for k in 0..5 {
                let rows_bins: Vec<usize> = (offset..offset + dims[k]).collect();
                let cols_bins: Vec<usize> = (offset + 1000..offset + 1000 + dims[k + 1]).collect();
                offset += 1000;
                let rows = (0..dims[k])
                    .map(|_| {
                        (0..dims[k + 1])
                            .filter_map(|c| rng.gen_bool(0.2).then(|| (c, rng.gen_range(0.0..1.0))))
                            .collect()
                    })
                    .collect();
                chain.push(TransitionMatrix::from_rows(rows_bins, cols_bins, rows).unwrap());
            }
            let sparse = compose(&chain).unwrap().to_dense();
            let dense = chain
                .iter()
                .skip(1)
                .fold(chain[0].to_dense(), |acc, m| dense_product(&acc, &m.to_dense()));
            for (a, b) in sparse.iter().flatten().zip(dense.iter().flatten()) {
                assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn matvec_and_transpose() {
        let m = TransitionMatrix::from_rows(
            vec![0, 1],
            vec![4, 5, 6],
            vec![vec![(0, 0.5), (2, 0.5)], vec![(1, 1.0)]],
        )
        .unwrap();
        assert_eq!(m.matvec(&[1.0, 2.0, 3.0]), vec![2.0, 2.0]);
        assert_eq!(m.matvec_t(&[1.0, 2.0]), vec![0.5, 2.0, 0.5]);
        assert_eq!(m.row_sums(), vec![1.0, 1.0]);
        assert_eq!(m.get(0, 2), 0.5);
        assert_eq!(m.get(0, 1), 0.0);
    }

    #[test]
    fn rejects_unsorted_rows() {
        let r = TransitionMatrix::from_rows(vec![0], vec![1, 2], vec![vec![(1, 1.0), (0, 1.0)]]);
        assert!(r.is_err());
    }

    #[test]
    fn dump_round_trip() {
        let m = TransitionMatrix::from_rows(
            vec![7, 8],
            vec![1, 2, 3],
            vec![vec![(0, 0.31), (2, 0.69)], vec![]],
        )
        .unwrap();
        let mut buf = Vec::new();
        m.write_dump(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("rows 2 cols 3 nnz 2\nrow_bins 7 8\ncol_bins 1 2 3\n0 0 0.31\n"));
        assert_eq!(TransitionMatrix::read_dump(&buf[..]).unwrap(), m);
    }

    #[test]
    fn lift_examples() {
        let a = SupportVector::new(vec![1], vec![1.0]);
        let b = SupportVector::new(vec![2], vec![1.0]);
        assert_eq!(lift(&a, &b), (vec![1, 2], vec![1.0, 0.0], vec![0.0, 1.0]));

        let same = SupportVector::new(vec![4, 6], vec![0.6, 0.8]);
        assert_eq!(lift(&same, &same), (vec![4, 6], vec![0.6, 0.8], vec![0.6, 0.8]));

        let a = SupportVector::new(vec![1, 2], vec![0.6, 0.8]);
        let b = SupportVector::new(vec![2, 3], vec![1.0, 0.0]);
        let (bins, la, lb) = lift(&a, &b);
        assert_eq!(bins, vec![1, 2, 3]);
        assert_eq!(la, vec![0.6, 0.8, 0.0]);
        assert_eq!(lb, vec![0.0, 1.0, 0.0]);
        let n = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((n(&la) - 1.0).abs() < 1e-15 && (n(&lb) - 1.0).abs() < 1e-15);
    }
}
