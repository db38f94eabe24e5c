//! Truncated singular value decomposition of transition matrices.
//!
//! Large matrices go through Golub-Kahan-Lanczos bidiagonalisation with full
//! reorthogonalisation; the Krylov basis grows until the leading triples
//! converge (at full dimension the factorisation is exact). Small matrices
//! use a dense SVD.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::matrix::TransitionMatrix;
use super::UlamError;

/// Matrices with `min(rows, cols)` at or below this size use the dense path.
pub const DENSE_FALLBACK_DIM: usize = 256;

const CONVERGENCE_TOL: f64 = 1e-11;
const START_SEED: u64 = 0x5EED_1A2C;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SvdMethod {
    #[default]
    Auto,
    Dense,
    Lanczos,
}

/// Leading singular triples, descending. `u[k]` lives on the row bins and
/// `v[k]` on the column bins.
#[derive(Clone, Debug, PartialEq)]
pub struct SvdTriples {
    pub u: Vec<Vec<f64>>,
    pub s: Vec<f64>,
    pub v: Vec<Vec<f64>>,
    /// Fewer triples than requested were attainable.
    pub short: bool,
}

impl SvdTriples {
    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }
}

pub fn truncated_svd(matrix: &TransitionMatrix, count: usize) -> Result<SvdTriples, UlamError> {
    truncated_svd_with(matrix, count, SvdMethod::Auto)
}

pub fn truncated_svd_with(
    matrix: &TransitionMatrix,
    count: usize,
    method: SvdMethod,
) -> Result<SvdTriples, UlamError> {
    if count == 0 {
        return Err(UlamError::Malformed("requested zero singular triples".into()));
    }
    let min_dim = matrix.nrows().min(matrix.ncols());
    if min_dim == 0 {
        return Err(UlamError::Malformed("empty matrix".into()));
    }
    let k = count.min(min_dim);
    let dense = match method {
        SvdMethod::Auto => min_dim <= DENSE_FALLBACK_DIM,
        SvdMethod::Dense => true,
        SvdMethod::Lanczos => false,
    };
    let (u, s, v) = if dense {
        dense_svd(matrix, k)?
    } else {
        lanczos_svd(matrix, k)?
    };
    let mut out = SvdTriples {
        u,
        s,
        v,
        short: k < count,
    };
    fix_signs(matrix, &mut out);
    Ok(out)
}

type Triples = (Vec<Vec<f64>>, Vec<f64>, Vec<Vec<f64>>);

fn dense_svd(matrix: &TransitionMatrix, k: usize) -> Result<Triples, UlamError> {
    let (m, n) = (matrix.nrows(), matrix.ncols());
    let transpose = m < n;
    let a = if transpose {
        let mut a = DMatrix::<f64>::zeros(n, m);
        for (r, c, v) in matrix.triplets() {
            a[(c, r)] = v;
        }
        a
    } else {
        let mut a = DMatrix::<f64>::zeros(m, n);
        for (r, c, v) in matrix.triplets() {
            a[(r, c)] = v;
        }
        a
    };
    let svd = a
        .try_svd(true, true, f64::EPSILON, 0)
        .ok_or(UlamError::SvdFailed)?;
    let left = svd.u.ok_or(UlamError::SvdFailed)?;
    let right_t = svd.v_t.ok_or(UlamError::SvdFailed)?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let mut us = Vec::with_capacity(k);
    let mut ss = Vec::with_capacity(k);
    let mut vs = Vec::with_capacity(k);
    for &i in order.iter().take(k) {
        let lcol: Vec<f64> = left.column(i).iter().copied().collect();
        let rrow: Vec<f64> = right_t.row(i).iter().copied().collect();
        ss.push(svd.singular_values[i]);
        if transpose {
            us.push(rrow);
            vs.push(lcol);
        } else {
            us.push(lcol);
            vs.push(rrow);
        }
    }
    Ok((us, ss, vs))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Two passes of classical Gram-Schmidt against an orthonormal basis.
fn reorthogonalise(x: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for b in basis {
            let h = dot(b, x);
            axpy(-h, b, x);
        }
    }
}

/// A unit vector orthogonal to `basis`, or `None` when the basis spans the space.
fn fresh_direction(rng: &mut ChaCha8Rng, dim: usize, basis: &[Vec<f64>]) -> Option<Vec<f64>> {
    if basis.len() >= dim {
        return None;
    }
    for _ in 0..8 {
        let mut x: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        reorthogonalise(&mut x, basis);
        let nx = norm(&x);
        if nx > 1e-8 {
            x.iter_mut().for_each(|v| *v /= nx);
            return Some(x);
        }
    }
    None
}

struct Bidiagonalisation {
    left: Vec<Vec<f64>>,
    right: Vec<Vec<f64>>,
    alphas: Vec<f64>,
    betas: Vec<f64>,
    /// Unnormalised residual direction for the next right vector.
    pending: Option<Vec<f64>>,
    exhausted: bool,
    scale: f64,
    rng: ChaCha8Rng,
}

impl Bidiagonalisation {
    fn new(ncols: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(START_SEED);
        let start = fresh_direction(&mut rng, ncols, &[]).expect("nonempty space");
        Self {
            left: Vec::new(),
            right: vec![start],
            alphas: Vec::new(),
            betas: Vec::new(),
            pending: None,
            exhausted: false,
            scale: 0.0,
            rng,
        }
    }

    fn len(&self) -> usize {
        self.alphas.len()
    }

    /// Extends the factorisation `A Q = P B` to `steps` columns.
    fn extend(&mut self, a: &TransitionMatrix, steps: usize) {
        let (m, n) = (a.nrows(), a.ncols());
        while self.len() < steps && !self.exhausted {
            let j = self.len();
            if j > 0 {
                // finalise beta_{j-1} and q_j from the pending residual
                let q = self.pending.take().expect("pending residual");
                let beta = norm(&q);
                let next = if beta > 1e-12 * self.scale.max(1.0) {
                    self.scale = self.scale.max(beta);
                    self.betas.push(beta);
                    q.into_iter().map(|x| x / beta).collect()
                } else {
                    self.betas.push(0.0);
                    match fresh_direction(&mut self.rng, n, &self.right) {
                        Some(x) => x,
                        None => {
                            self.betas.pop();
                            self.exhausted = true;
                            break;
                        }
                    }
                };
                self.right.push(next);
            }
            let qj = &self.right[j];
            let mut p = a.matvec(qj);
            if j > 0 {
                let beta = self.betas[j - 1];
                axpy(-beta, &self.left[j - 1], &mut p);
            }
            reorthogonalise(&mut p, &self.left);
            let alpha = norm(&p);
            let pj = if alpha > 1e-12 * self.scale.max(1.0) {
                self.scale = self.scale.max(alpha);
                self.alphas.push(alpha);
                p.into_iter().map(|x| x / alpha).collect()
            } else {
                self.alphas.push(0.0);
                match fresh_direction(&mut self.rng, m, &self.left) {
                    Some(x) => x,
                    None => {
                        // no left directions remain: drop the unpaired right vector
                        self.alphas.pop();
                        self.right.pop();
                        if j > 0 {
                            self.betas.pop();
                        }
                        self.exhausted = true;
                        break;
                    }
                }
            };
            let mut q = a.matvec_t(&pj);
            axpy(-self.alphas[j], &self.right[j], &mut q);
            reorthogonalise(&mut q, &self.right);
            self.left.push(pj);
            if self.right.len() >= n {
                self.exhausted = true;
            }
            self.pending = Some(q);
        }
    }

    /// Ritz triples of the current factorisation plus their `A^T u` residual bounds.
    fn ritz(&self, k: usize) -> Result<(Triples, Vec<f64>), UlamError> {
        let d = self.len();
        let mut b = DMatrix::<f64>::zeros(d, d);
        for i in 0..d {
            b[(i, i)] = self.alphas[i];
            if i + 1 < d {
                b[(i, i + 1)] = self.betas[i];
            }
        }
        let svd = b.try_svd(true, true, f64::EPSILON, 0).ok_or(UlamError::SvdFailed)?;
        let x = svd.u.ok_or(UlamError::SvdFailed)?;
        let yt = svd.v_t.ok_or(UlamError::SvdFailed)?;
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
        let tail = if self.exhausted {
            0.0
        } else {
            self.pending.as_deref().map_or(0.0, norm)
        };
        let (m, n) = (self.left[0].len(), self.right[0].len());
        let mut us = Vec::new();
        let mut ss = Vec::new();
        let mut vs = Vec::new();
        let mut bounds = Vec::new();
        for &i in order.iter().take(k) {
            let mut u = vec![0.0; m];
            let mut v = vec![0.0; n];
            for r in 0..d {
                axpy(x[(r, i)], &self.left[r], &mut u);
                axpy(yt[(i, r)], &self.right[r], &mut v);
            }
            bounds.push(tail * x[(d - 1, i)].abs());
            us.push(u);
            ss.push(svd.singular_values[i]);
            vs.push(v);
        }
        Ok(((us, ss, vs), bounds))
    }
}

fn lanczos_svd(a: &TransitionMatrix, k: usize) -> Result<Triples, UlamError> {
    // Work on the tall orientation so the right basis exhausts first.
    if a.nrows() < a.ncols() {
        let (u, s, v) = lanczos_svd(&a.transpose(), k)?;
        return Ok((v, s, u));
    }
    let min_dim = a.nrows().min(a.ncols());
    let mut bd = Bidiagonalisation::new(a.ncols());
    let mut target = (2 * k + 20).min(min_dim);
    loop {
        bd.extend(a, target);
        let (triples, bounds) = bd.ritz(k)?;
        let top = triples.1.first().copied().unwrap_or(0.0).max(1e-300);
        let converged = bounds.iter().all(|&b| b <= CONVERGENCE_TOL * top);
        if triples.1.len() >= k && (converged || bd.exhausted || bd.len() >= min_dim) {
            return Ok(triples);
        }
        if bd.exhausted || bd.len() >= min_dim {
            return Ok(triples);
        }
        target = (2 * target).min(min_dim);
    }
}

/// The largest-magnitude entry of each right vector is made positive; the
/// left vector follows so that `u . (A v) >= 0`.
fn fix_signs(a: &TransitionMatrix, t: &mut SvdTriples) {
    for k in 0..t.s.len() {
        let v = &mut t.v[k];
        let mut best = 0;
        for (i, x) in v.iter().enumerate() {
            if x.abs() > v[best].abs() {
                best = i;
            }
        }
        if v[best] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        let av = a.matvec(v);
        if dot(&av, &t.u[k]) < 0.0 {
            t.u[k].iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// `||A v - s u||` and `||A^T u - s v||` for triple `k`.
pub fn residuals(a: &TransitionMatrix, t: &SvdTriples, k: usize) -> (f64, f64) {
    let mut r1 = a.matvec(&t.v[k]);
    axpy(-t.s[k], &t.u[k], &mut r1);
    let mut r2 = a.matvec_t(&t.u[k]);
    axpy(-t.s[k], &t.v[k], &mut r2);
    (norm(&r1), norm(&r2))
}
