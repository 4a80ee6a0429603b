//! Dense least squares via Householder QR.
//!
//! The factorization runs column by column without pivoting. A column whose
//! remaining norm (below the rows already claimed by earlier reflectors) is
//! negligible relative to its original norm is flagged as linearly dependent
//! on the columns before it and skipped, so the caller can name it.

/// Column-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds a matrix from equal-length columns.
    pub fn from_columns(columns: Vec<Vec<f64>>) -> Self {
        let cols = columns.len();
        let rows = columns.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows * cols);
        for c in columns {
            assert_eq!(c.len(), rows, "ragged columns");
            data.extend(c);
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[c * self.rows + r]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[c * self.rows + r] = v;
    }

    pub fn column(&self, c: usize) -> &[f64] {
        &self.data[c * self.rows..(c + 1) * self.rows]
    }

    fn column_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.data[c * self.rows..(c + 1) * self.rows]
    }

    /// Matrix made of the given columns, in order.
    pub fn select_columns(&self, cols: &[usize]) -> Matrix {
        Matrix::from_columns(cols.iter().map(|&c| self.column(c).to_vec()).collect())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    // Scaled to avoid overflow on large magnitudes.
    let scale = a.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    scale * a.iter().map(|x| (x / scale).powi(2)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone)]
struct Reflector {
    row: usize,
    v: Vec<f64>,
    beta: f64,
}

/// Default relative tolerance for declaring a column dependent.
pub const DEPENDENCE_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct Qr {
    factored: Matrix,
    reflectors: Vec<Reflector>,
    independent: Vec<usize>,
    dependent: Vec<usize>,
}

/// Solution of `min ||A x - y||`.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    pub coefficients: Vec<f64>,
    pub rss: f64,
}

impl Qr {
    pub fn new(a: &Matrix) -> Self {
        Self::with_tolerance(a, DEPENDENCE_TOL)
    }

    pub fn with_tolerance(a: &Matrix, tol: f64) -> Self {
        let rows = a.rows();
        let cols = a.cols();
        let mut m = a.clone();
        let original: Vec<f64> = (0..cols).map(|c| norm(a.column(c))).collect();
        let mut reflectors = Vec::new();
        let mut independent = Vec::new();
        let mut dependent = Vec::new();
        let mut k = 0;

        for j in 0..cols {
            if k == rows {
                dependent.push(j);
                continue;
            }
            let x = &m.column(j)[k..];
            let xn = norm(x);
            if original[j] == 0.0 || xn <= tol * original[j] {
                dependent.push(j);
                continue;
            }
            let alpha = if x[0] >= 0.0 { -xn } else { xn };
            let mut v = x.to_vec();
            v[0] -= alpha;
            let vv = dot(&v, &v);
            let beta = 2.0 / vv;
            for c in j..cols {
                let col = &mut m.column_mut(c)[k..];
                let s = beta * dot(&v, col);
                for (ci, vi) in col.iter_mut().zip(&v) {
                    *ci -= s * vi;
                }
            }
            // Exact values for the reflected column.
            let col = m.column_mut(j);
            col[k] = alpha;
            for ci in &mut col[k + 1..] {
                *ci = 0.0;
            }
            reflectors.push(Reflector { row: k, v, beta });
            independent.push(j);
            k += 1;
        }

        Self {
            factored: m,
            reflectors,
            independent,
            dependent,
        }
    }

    pub fn rank(&self) -> usize {
        self.independent.len()
    }

    /// Columns found to be (numerically) in the span of earlier columns.
    pub fn dependent_columns(&self) -> &[usize] {
        &self.dependent
    }

    pub fn is_full_rank(&self) -> bool {
        self.dependent.is_empty()
    }

    /// Applies `Qᵀ` in place.
    pub fn apply_qt(&self, y: &mut [f64]) {
        for r in &self.reflectors {
            let tail = &mut y[r.row..];
            let s = r.beta * dot(&r.v, tail);
            for (yi, vi) in tail.iter_mut().zip(&r.v) {
                *yi -= s * vi;
            }
        }
    }

    /// The leading `rank × cols` block of `R` (including the entries for
    /// dependent columns), so that `A ≈ Q₁ R`.
    pub fn r_block(&self) -> Matrix {
        let rank = self.rank();
        let mut r = Matrix::zeros(rank, self.factored.cols());
        for c in 0..self.factored.cols() {
            for i in 0..rank {
                r.set(i, c, self.factored.get(i, c));
            }
        }
        r
    }

    /// Least squares over the independent columns. Dependent columns get a
    /// zero coefficient.
    pub fn solve(&self, y: &[f64]) -> LeastSquares {
        assert_eq!(y.len(), self.factored.rows());
        let mut c = y.to_vec();
        self.apply_qt(&mut c);
        let rank = self.rank();
        let mut x = vec![0.0; rank];
        for i in (0..rank).rev() {
            let mut s = c[i];
            for (l, xl) in x.iter().enumerate().skip(i + 1) {
                s -= self.factored.get(i, self.independent[l]) * xl;
            }
            x[i] = s / self.factored.get(i, self.independent[i]);
        }
        let mut coefficients = vec![0.0; self.factored.cols()];
        for (i, &col) in self.independent.iter().enumerate() {
            coefficients[col] = x[i];
        }
        let rss = c[rank..].iter().map(|v| v * v).sum();
        LeastSquares { coefficients, rss }
    }

    /// `(AᵀA)⁻¹` over the independent columns, in the order of
    /// [`Qr::independent_columns`].
    pub fn inverse_gram(&self) -> Vec<Vec<f64>> {
        let rank = self.rank();
        let r = |i: usize, j: usize| self.factored.get(i, self.independent[j]);
        // Upper-triangular inverse of the square R.
        let mut inv = vec![vec![0.0; rank]; rank];
        for j in 0..rank {
            inv[j][j] = 1.0 / r(j, j);
            for i in (0..j).rev() {
                let mut s = 0.0;
                for (l, row) in inv.iter().enumerate().take(j + 1).skip(i + 1) {
                    s += r(i, l) * row[j];
                }
                inv[i][j] = -s / r(i, i);
            }
        }
        // (RᵀR)⁻¹ = R⁻¹ R⁻ᵀ
        let mut g = vec![vec![0.0; rank]; rank];
        for i in 0..rank {
            for j in 0..rank {
                g[i][j] = dot(&inv[i], &inv[j]);
            }
        }
        g
    }

    pub fn independent_columns(&self) -> &[usize] {
        &self.independent
    }
}
