use super::matrix::Matrix;
use super::NumericsError;

/// Largest diagonal jitter tried before giving up.
pub const MAX_JITTER: f64 = 1e-2;
/// Starting jitter for kernel matrices.
pub const DEFAULT_JITTER: f64 = 1e-6;
/// First nonzero jitter tried when the caller asked for none.
const FIRST_NONZERO_JITTER: f64 = 1e-10;

/// Lower-triangular factor `L` with `L·Lᵀ = A + jitter·I`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky {
    l: Matrix,
    jitter: f64,
}

/// Factorizes a symmetric matrix, escalating the diagonal jitter ×10 on
/// failure until [`MAX_JITTER`]. The jitter that succeeded is reported.
pub fn cholesky(a: &Matrix, jitter: f64) -> Result<Cholesky, NumericsError> {
    if !a.is_square() {
        return Err(NumericsError::Shape(format!(
            "cholesky of non-square {}x{} matrix",
            a.rows(),
            a.cols()
        )));
    }
    if !a.is_finite() {
        return Err(NumericsError::NonFinite("cholesky input"));
    }
    let mut j = jitter.max(0.0);
    loop {
        if let Some(l) = try_factor(a, j) {
            return Ok(Cholesky { l, jitter: j });
        }
        j = if j == 0.0 { FIRST_NONZERO_JITTER } else { j * 10.0 };
        if j > MAX_JITTER * (1.0 + 1e-9) {
            return Err(NumericsError::NotPositiveDefinite { max_jitter: MAX_JITTER });
        }
    }
}

fn try_factor(a: &Matrix, jitter: f64) -> Option<Matrix> {
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)] + jitter;
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Some(l)
}

impl Cholesky {
    pub fn factor(&self) -> &Matrix {
        &self.l
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    /// Solves `L·z = b`.
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut z = b.to_vec();
        for i in 0..n {
            let mut s = z[i];
            for k in 0..i {
                s -= self.l[(i, k)] * z[k];
            }
            z[i] = s / self.l[(i, i)];
        }
        z
    }

    /// Solves `Lᵀ·x = z`.
    pub fn solve_upper(&self, z: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut x = z.to_vec();
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..n {
                s -= self.l[(k, i)] * x[k];
            }
            x[i] = s / self.l[(i, i)];
        }
        x
    }

    /// Solves `(A + jitter·I)·x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.solve_upper(&self.solve_lower(b))
    }

    /// `log |A + jitter·I|`
    pub fn log_det(&self) -> f64 {
        (0..self.dim()).map(|i| self.l[(i, i)].ln()).sum::<f64>() * 2.0
    }

    pub fn inverse(&self) -> Matrix {
        let n = self.dim();
        let mut inv = Matrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let col = self.solve(&e);
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        inv
    }
}

/// Solves the symmetric positive-definite system `a·x = b`.
pub fn solve_spd(a: &Matrix, b: &[f64]) -> Result<Vec<f64>, NumericsError> {
    Ok(cholesky(a, 0.0)?.solve(b))
}
