use nalgebra::{DMatrix, DVector};

/// Relative tolerance for declaring a column a linear combination of the
/// columns before it.
const RANK_TOL: f64 = 1e-9;

/// Indices of columns that are (numerically) linear combinations of earlier
/// columns, by sequential Gram-Schmidt with reorthogonalisation.
pub(crate) fn dependent_columns(x: &DMatrix<f64>) -> Vec<usize> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut dependent = Vec::new();
    for j in 0..x.ncols() {
        let col = x.column(j).into_owned();
        let scale = col.norm();
        let mut v = col;
        for _ in 0..2 {
            for q in &basis {
                let c = q.dot(&v);
                v.axpy(-c, q, 1.0);
            }
        }
        let norm = v.norm();
        if scale == 0.0 || norm <= RANK_TOL * scale {
            dependent.push(j);
        } else {
            basis.push(v / norm);
        }
    }
    dependent
}

/// Thin QR factors of a tall matrix.
pub(crate) fn thin_qr(x: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let qr = x.clone().qr();
    (qr.q(), qr.r())
}

/// Least-squares coefficients of every column of `y` on `x` (full column rank
/// assumed) and `(x'x)^{-1}`.
pub(crate) fn least_squares(x: &DMatrix<f64>, y: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let (q, r) = thin_qr(x);
    let qty = q.transpose() * y;
    let beta = r
        .solve_upper_triangular(&qty)
        .expect("full column rank checked by caller");
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(r.nrows(), r.nrows()))
        .expect("full column rank checked by caller");
    let xtx_inv = &r_inv * r_inv.transpose();
    (beta, symmetrize(xtx_inv))
}

/// Residuals of `m` after projection on the columns of `on`.
pub(crate) fn residualize(m: &DMatrix<f64>, on: &DMatrix<f64>) -> DMatrix<f64> {
    if on.ncols() == 0 {
        return m.clone();
    }
    let (q, _) = thin_qr(on);
    m - &q * (q.transpose() * m)
}

/// Fitted values of `m` projected on the columns of `on`.
pub(crate) fn project(m: &DMatrix<f64>, on: &DMatrix<f64>) -> DMatrix<f64> {
    let (q, _) = thin_qr(on);
    &q * (q.transpose() * m)
}

pub(crate) fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

pub(crate) fn hstack(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks.iter().map(|b| b.nrows()).max().unwrap_or(0);
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        if b.ncols() > 0 {
            out.columns_mut(at, b.ncols()).copy_from(b);
            at += b.ncols();
        }
    }
    out
}

pub(crate) fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}
