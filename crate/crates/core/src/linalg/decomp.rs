use crate::error::{Error, Result};
use crate::scalar::{lit, tol, Real};

use super::Matrix;

/// Eigen-decomposition of a symmetric matrix.
///
/// `values` are ascending and `vectors` holds the matching orthonormal
/// eigenvectors as columns. Eigenvalues closer than the tie tolerance are
/// ordered by the row index of their eigenvector's dominant component, and
/// every eigenvector is signed so that dominant component is positive.
#[derive(Debug, Clone)]
pub struct SymEigen<T> {
    pub values: Vec<T>,
    pub vectors: Matrix<T>,
}

/// A possibly complex eigenvalue of a real matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eigenvalue<T> {
    pub re: T,
    pub im: T,
}

const JACOBI_MAX_SWEEPS: usize = 100;
const QR_MAX_ITERS: usize = 60;

/// Lower Cholesky factor `L` with `A = L Lᵀ`, or `None` when `A` is not
/// numerically positive definite.
pub fn cholesky<T: Real>(a: &Matrix<T>) -> Option<Matrix<T>> {
    if !a.is_square() {
        return None;
    }
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d = d - l[(j, k)] * l[(j, k)];
        }
        if !(d > T::zero()) || !d.is_finite() {
            return None;
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s = s - l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Some(l)
}

/// Inverse of a symmetric positive definite matrix via Cholesky.
pub fn spd_inverse<T: Real>(a: &Matrix<T>) -> Result<Matrix<T>> {
    let l = cholesky(a).ok_or(Error::NotPositiveDefinite {
        context: "matrix inversion".into(),
        min_eigenvalue: f64::NAN,
    })?;
    let n = a.rows();
    // Invert L by forward substitution, then A⁻¹ = L⁻ᵀ L⁻¹.
    let mut linv = Matrix::zeros(n, n);
    for j in 0..n {
        linv[(j, j)] = T::one() / l[(j, j)];
        for i in j + 1..n {
            let mut s = T::zero();
            for k in j..i {
                s = s + l[(i, k)] * linv[(k, j)];
            }
            linv[(i, j)] = -s / l[(i, i)];
        }
    }
    Ok(&linv.transpose() * &linv)
}

/// Solves `A X = B` by LU factorization with partial pivoting.
pub fn lu_solve<T: Real>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    if !a.is_square() {
        return Err(Error::dimension("LU solve (square)", a.rows(), a.cols()));
    }
    if b.rows() != a.rows() {
        return Err(Error::dimension("LU solve right-hand side", a.rows(), b.rows()));
    }
    let n = a.rows();
    let mut lu = a.clone();
    let mut x = b.clone();
    let scale = a.max_abs().max(T::min_positive_value());
    for k in 0..n {
        let (p, pivot) = (k..n)
            .map(|i| (i, lu[(i, k)].abs()))
            .fold((k, -T::one()), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pivot <= scale * T::epsilon() {
            return Err(Error::NumericalFailure("singular matrix in LU solve".into()));
        }
        if p != k {
            for j in 0..n {
                let tmp = lu[(k, j)];
                lu[(k, j)] = lu[(p, j)];
                lu[(p, j)] = tmp;
            }
            for j in 0..x.cols() {
                let tmp = x[(k, j)];
                x[(k, j)] = x[(p, j)];
                x[(p, j)] = tmp;
            }
        }
        for i in k + 1..n {
            let f = lu[(i, k)] / lu[(k, k)];
            if f == T::zero() {
                continue;
            }
            for j in k..n {
                lu[(i, j)] = lu[(i, j)] - f * lu[(k, j)];
            }
            for j in 0..x.cols() {
                x[(i, j)] = x[(i, j)] - f * x[(k, j)];
            }
        }
    }
    for c in 0..x.cols() {
        for i in (0..n).rev() {
            let mut s = x[(i, c)];
            for j in i + 1..n {
                s = s - lu[(i, j)] * x[(j, c)];
            }
            x[(i, c)] = s / lu[(i, i)];
        }
    }
    Ok(x)
}

pub fn inverse<T: Real>(a: &Matrix<T>) -> Result<Matrix<T>> {
    lu_solve(a, &Matrix::identity(a.rows()))
}

/// Cyclic Jacobi eigen-decomposition of a symmetric matrix.
pub fn sym_eigen<T: Real>(a: &Matrix<T>) -> Result<SymEigen<T>> {
    if !a.is_square() {
        return Err(Error::dimension("symmetric eigenproblem (square)", a.rows(), a.cols()));
    }
    let n = a.rows();
    let mut m = a.symmetrized();
    let mut v = Matrix::identity(n);
    let scale = m.frobenius_norm();
    let threshold = scale * T::epsilon();

    let mut converged = n < 2;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: T = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum::<T>()
            .sqrt();
        if off <= threshold || scale == T::zero() {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq.abs() <= T::min_positive_value() {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (lit::<T>(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let t = if theta == T::zero() { T::one() } else { t };
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged {
        return Err(Error::NumericalFailure(
            "Jacobi eigen-iteration did not converge".into(),
        ));
    }

    let values = m.diagonal();
    if values.iter().any(|x| !x.is_finite()) {
        return Err(Error::NumericalFailure("non-finite eigenvalue".into()));
    }
    Ok(canonical_order(values, v, scale))
}

fn dominant_index<T: Real>(v: &Matrix<T>, col: usize) -> usize {
    let mut best = 0;
    let mut best_abs = -T::one();
    for i in 0..v.rows() {
        let a = v[(i, col)].abs();
        // Strict comparison with a small relative guard keeps the first index
        // on near-ties.
        if a > best_abs * (T::one() + tol::<T>(1e-12)) {
            best = i;
            best_abs = a;
        }
    }
    best
}

fn canonical_order<T: Real>(values: Vec<T>, vectors: Matrix<T>, scale: T) -> SymEigen<T> {
    let n = values.len();
    let dominant: Vec<usize> = (0..n).map(|c| dominant_index(&vectors, c)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());

    let tie = tol::<T>(1e-10) * (scale + T::one());
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && values[order[end]] - values[order[end - 1]] <= tie {
            end += 1;
        }
        order[start..end].sort_by_key(|&c| dominant[c]);
        start = end;
    }

    let sorted_values = order.iter().map(|&c| values[c]).collect();
    let vecs = Matrix::from_fn(n, n, |i, j| {
        let c = order[j];
        let sign = if vectors[(dominant[c], c)] < T::zero() {
            -T::one()
        } else {
            T::one()
        };
        sign * vectors[(i, c)]
    });
    SymEigen {
        values: sorted_values,
        vectors: vecs,
    }
}

/// Symmetric positive semidefinite square root.
pub fn sym_sqrt<T: Real>(a: &Matrix<T>) -> Result<Matrix<T>> {
    let eig = sym_eigen(a)?;
    let scale = eig.values.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    if eig
        .values
        .iter()
        .any(|&l| l < -tol::<T>(1e-12) * (scale + T::one()))
    {
        return Err(Error::NotPositiveDefinite {
            context: "matrix square root".into(),
            min_eigenvalue: crate::scalar::to_f64(eig.values[0]),
        });
    }
    let roots: Vec<T> = eig.values.iter().map(|&l| l.max(T::zero()).sqrt()).collect();
    let v = &eig.vectors;
    Ok(&(v * &Matrix::diag(&roots)) * &v.transpose())
}

/// Eigenvalues of a general real square matrix (Hessenberg reduction
/// followed by Francis double-shift QR).
pub fn eigenvalues<T: Real>(a: &Matrix<T>) -> Result<Vec<Eigenvalue<T>>> {
    if !a.is_square() {
        return Err(Error::dimension("eigenvalues (square)", a.rows(), a.cols()));
    }
    let n = a.rows();
    if n == 0 {
        return Ok(Vec::new());
    }
    // 1-based working copy keeps the classical recurrences readable.
    let mut h = vec![vec![T::zero(); n + 1]; n + 1];
    for i in 0..n {
        for j in 0..n {
            h[i + 1][j + 1] = a[(i, j)];
        }
    }
    hessenberg(&mut h, n);
    let (wr, wi) = hqr(&mut h, n)?;
    Ok((1..=n)
        .map(|i| Eigenvalue { re: wr[i], im: wi[i] })
        .collect())
}

fn hessenberg<T: Real>(a: &mut [Vec<T>], n: usize) {
    for m in 2..n {
        let mut x = T::zero();
        let mut i = m;
        for j in m..=n {
            if a[j][m - 1].abs() > x.abs() {
                x = a[j][m - 1];
                i = j;
            }
        }
        if i != m {
            for j in (m - 1)..=n {
                let tmp = a[i][j];
                a[i][j] = a[m][j];
                a[m][j] = tmp;
            }
            for row in a.iter_mut().take(n + 1).skip(1) {
                row.swap(i, m);
            }
        }
        if x != T::zero() {
            for i in (m + 1)..=n {
                let mut y = a[i][m - 1];
                if y != T::zero() {
                    y = y / x;
                    a[i][m - 1] = y;
                    for j in m..=n {
                        let amj = a[m][j];
                        a[i][j] = a[i][j] - y * amj;
                    }
                    for row in a.iter_mut().take(n + 1).skip(1) {
                        row[m] = row[m] + y * row[i];
                    }
                }
            }
        }
    }
    for (i, row) in a.iter_mut().enumerate().take(n + 1).skip(3) {
        for v in row.iter_mut().take(i - 1).skip(1) {
            *v = T::zero();
        }
    }
}

fn sign<T: Real>(a: T, b: T) -> T {
    if b >= T::zero() {
        a.abs()
    } else {
        -a.abs()
    }
}

#[allow(clippy::many_single_char_names, unused_assignments)]
fn hqr<T: Real>(a: &mut [Vec<T>], n: usize) -> Result<(Vec<T>, Vec<T>)> {
    let mut wr = vec![T::zero(); n + 1];
    let mut wi = vec![T::zero(); n + 1];
    let mut anorm = T::zero();
    for i in 1..=n {
        for j in i.saturating_sub(1).max(1)..=n {
            anorm = anorm + a[i][j].abs();
        }
    }
    let half = lit::<T>(0.5);
    let mut nn = n;
    let mut t = T::zero();
    let (mut p, mut q, mut r) = (T::zero(), T::zero(), T::zero());
    let (mut x, mut y, mut z, mut w);
    while nn >= 1 {
        let mut its = 0;
        loop {
            let mut l = nn;
            while l >= 2 {
                let mut s = a[l - 1][l - 1].abs() + a[l][l].abs();
                if s == T::zero() {
                    s = anorm;
                }
                if a[l][l - 1].abs() + s == s {
                    a[l][l - 1] = T::zero();
                    break;
                }
                l -= 1;
            }
            x = a[nn][nn];
            if l == nn {
                wr[nn] = x + t;
                wi[nn] = T::zero();
                nn -= 1;
                break;
            }
            y = a[nn - 1][nn - 1];
            w = a[nn][nn - 1] * a[nn - 1][nn];
            if l == nn - 1 {
                p = half * (y - x);
                q = p * p + w;
                z = q.abs().sqrt();
                x = x + t;
                if q >= T::zero() {
                    z = p + sign(z, p);
                    wr[nn - 1] = x + z;
                    wr[nn] = x + z;
                    if z != T::zero() {
                        wr[nn] = x - w / z;
                    }
                    wi[nn - 1] = T::zero();
                    wi[nn] = T::zero();
                } else {
                    wr[nn - 1] = x + p;
                    wr[nn] = x + p;
                    wi[nn - 1] = -z;
                    wi[nn] = z;
                }
                nn = nn.saturating_sub(2);
                break;
            }
            if its == QR_MAX_ITERS {
                return Err(Error::NumericalFailure(
                    "QR eigenvalue iteration did not converge".into(),
                ));
            }
            if its == 10 || its == 20 {
                // Exceptional shift.
                t = t + x;
                for i in 1..=nn {
                    a[i][i] = a[i][i] - x;
                }
                let s = a[nn][nn - 1].abs() + a[nn - 1][nn - 2].abs();
                x = lit::<T>(0.75) * s;
                y = x;
                w = lit::<T>(-0.4375) * s * s;
            }
            its += 1;
            let mut m = nn - 2;
            loop {
                z = a[m][m];
                r = x - z;
                let s = y - z;
                p = (r * s - w) / a[m + 1][m] + a[m][m + 1];
                q = a[m + 1][m + 1] - z - r - s;
                r = a[m + 2][m + 1];
                let s = p.abs() + q.abs() + r.abs();
                p = p / s;
                q = q / s;
                r = r / s;
                if m == l {
                    break;
                }
                let u = a[m][m - 1].abs() * (q.abs() + r.abs());
                let v = p.abs() * (a[m - 1][m - 1].abs() + z.abs() + a[m + 1][m + 1].abs());
                if u + v == v {
                    break;
                }
                m -= 1;
            }
            for i in (m + 2)..=nn {
                a[i][i - 2] = T::zero();
                if i != m + 2 {
                    a[i][i - 3] = T::zero();
                }
            }
            let mut k = m;
            while k < nn {
                if k != m {
                    p = a[k][k - 1];
                    q = a[k + 1][k - 1];
                    r = T::zero();
                    if k != nn - 1 {
                        r = a[k + 2][k - 1];
                    }
                    x = p.abs() + q.abs() + r.abs();
                    if x != T::zero() {
                        p = p / x;
                        q = q / x;
                        r = r / x;
                    }
                }
                let s = sign((p * p + q * q + r * r).sqrt(), p);
                if s != T::zero() {
                    if k == m {
                        if l != m {
                            a[k][k - 1] = -a[k][k - 1];
                        }
                    } else {
                        a[k][k - 1] = -s * x;
                    }
                    p = p + s;
                    x = p / s;
                    y = q / s;
                    z = r / s;
                    q = q / p;
                    r = r / p;
                    for j in k..=nn {
                        p = a[k][j] + q * a[k + 1][j];
                        if k != nn - 1 {
                            p = p + r * a[k + 2][j];
                            a[k + 2][j] = a[k + 2][j] - p * z;
                        }
                        a[k + 1][j] = a[k + 1][j] - p * y;
                        a[k][j] = a[k][j] - p * x;
                    }
                    let mmin = if nn < k + 3 { nn } else { k + 3 };
                    for i in l..=mmin {
                        p = x * a[i][k] + y * a[i][k + 1];
                        if k != nn - 1 {
                            p = p + z * a[i][k + 2];
                            a[i][k + 2] = a[i][k + 2] - p * r;
                        }
                        a[i][k + 1] = a[i][k + 1] - p * q;
                        a[i][k] = a[i][k] - p;
                    }
                }
                k += 1;
            }
        }
    }
    Ok((wr, wi))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Matrix<f64> {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        assert!(cholesky(&m(&[&[1.0, 2.0], &[2.0, 1.0]])).is_none());
        let l = cholesky(&m(&[&[4.0, 2.0], &[2.0, 3.0]])).unwrap();
        assert!((l[(0, 0)] - 2.0).abs() < 1e-15);
        assert!((l[(1, 1)] - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn inverse_round_trip() {
        let a = m(&[&[4.0, 1.0, 0.5], &[1.0, 3.0, 0.2], &[0.5, 0.2, 2.0]]);
        for inv in [inverse(&a).unwrap(), spd_inverse(&a).unwrap()] {
            let e = &(&a * &inv) - &Matrix::identity(3);
            assert!(e.max_abs() < 1e-14);
        }
    }

    #[test]
    fn jacobi_diagonal_input() {
        let e = sym_eigen(&Matrix::diag(&[3.0, 1.0, 2.0])).unwrap();
        assert_eq!(e.values, vec![1.0, 2.0, 3.0]);
        assert_eq!(e.vectors.col(0), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn repeated_eigenvalues_order_by_dominant_row() {
        let e = sym_eigen(&Matrix::<f64>::identity(3).scale(2.0)).unwrap();
        assert_eq!(e.vectors, Matrix::identity(3));
    }

    #[test]
    fn rotation_eigenvalues_are_complex() {
        let ev = eigenvalues(&m(&[&[0.0, 1.0], &[-10.0, 0.0]])).unwrap();
        for e in ev {
            assert!(e.re.abs() < 1e-14);
            assert!((e.im.abs() - 10f64.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn upper_triangular_eigenvalues() {
        let a = m(&[
            &[1.0, 5.0, 7.0, 2.0],
            &[0.0, -2.0, 3.0, 1.0],
            &[0.0, 0.0, 4.0, 9.0],
            &[0.0, 0.0, 0.0, 0.5],
        ]);
        let mut re: Vec<f64> = eigenvalues(&a).unwrap().iter().map(|e| e.re).collect();
        re.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (got, want) in re.iter().zip([-2.0, 0.5, 1.0, 4.0]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn square_root_squares_back() {
        let a = m(&[&[2.0, 0.5], &[0.5, 1.0]]);
        let s = sym_sqrt(&a).unwrap();
        assert!((&(&s * &s) - &a).max_abs() < 1e-14);
        assert!(sym_sqrt(&m(&[&[-1.0, 0.0], &[0.0, 1.0]])).is_err());
    }
}
