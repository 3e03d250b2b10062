//! Dense decompositions: power iteration, one-sided Jacobi SVD, cyclic Jacobi
//! symmetric eigensolver, Gauss-Jordan inverse and Hessenberg-QR eigenvalues.

use num_complex::Complex;

use super::matrix::{dot, norm};
use super::{Matrix, NumError};
use crate::scalar::Scalar;

pub const SPECTRAL_TOL: f64 = 1e-10;
pub const SPECTRAL_MAX_ITER: usize = 10_000;
/// Relative floor below which a matrix is treated as singular.
pub const SINGULAR_RATIO: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 80;

/// Largest singular value by power iteration on `mᵀm`.
///
/// Stops when the relative change of the estimate drops below `tol`.
pub fn spectral_norm<T: Scalar>(m: &Matrix<T>, tol: T, max_iter: usize) -> Result<T, NumError> {
    if m.is_empty() {
        return Err(NumError::Empty("spectral_norm"));
    }
    let n = m.cols();
    // Deterministic start with no exact orthogonality to common structures.
    let mut v: Vec<T> = (0..n).map(|i| T::one() + T::of(i as f64 * 0.618_033_988_7).sin() * T::of(0.5)).collect();
    let nv = norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    let mut sigma = T::zero();
    let mut gap = T::infinity();
    for _ in 0..max_iter {
        let mv = m.matvec(&v);
        let est = norm(&mv);
        if est == T::zero() {
            // v landed in the null space; a zero matrix has norm 0.
            if m.max_abs() == T::zero() {
                return Ok(T::zero());
            }
            v = (0..n).map(|i| T::of(((i * 7 + 3) % 11) as f64 + 1.0)).collect();
            let nv = norm(&v);
            v.iter_mut().for_each(|x| *x /= nv);
            continue;
        }
        let mut w = m.t_matvec(&mv);
        let nw = norm(&w);
        w.iter_mut().for_each(|x| *x /= nw);
        gap = (est - sigma).abs() / est;
        sigma = est;
        v = w;
        if gap < tol {
            return Ok(norm(&m.matvec(&v)));
        }
    }
    Err(NumError::NoConvergence {
        op: "spectral_norm",
        iterations: max_iter,
        last: sigma.to_f64_lossy(),
        gap: gap.to_f64_lossy(),
    })
}

/// Thin singular value decomposition `m = U diag(s) Vᵀ`, singular values
/// sorted in decreasing order.
#[derive(Debug, Clone)]
pub struct Svd<T> {
    pub u: Matrix<T>,
    pub s: Vec<T>,
    pub v: Matrix<T>,
}

/// One-sided (Hestenes) Jacobi SVD.
pub fn svd<T: Scalar>(m: &Matrix<T>) -> Result<Svd<T>, NumError> {
    if m.is_empty() {
        return Err(NumError::Empty("svd"));
    }
    if !m.all_finite() {
        return Err(NumError::NonFinite("svd"));
    }
    if m.rows() < m.cols() {
        let t = svd(&m.transpose())?;
        return Ok(Svd { u: t.v, s: t.s, v: t.u });
    }
    let n = m.cols();
    let a: Vec<Vec<T>> = (0..n).map(|j| m.col(j)).collect();
    let v: Vec<Vec<T>> = (0..n)
        .map(|j| (0..n).map(|i| if i == j { T::one() } else { T::zero() }).collect())
        .collect();
    jacobi_svd(m.rows(), a, v)
}

/// Jacobi SVD of a square matrix started from an orthogonal guess `v0` of the
/// right singular vectors, e.g. those of a nearby matrix. Falls back to
/// [`svd`] when `v0` does not fit.
pub fn svd_warm<T: Scalar>(m: &Matrix<T>, v0: &Matrix<T>) -> Result<Svd<T>, NumError> {
    if !m.is_square() || v0.shape() != m.shape() {
        return svd(m);
    }
    if !m.all_finite() {
        return Err(NumError::NonFinite("svd"));
    }
    let n = m.cols();
    let mv = m.matmul(v0)?;
    let a: Vec<Vec<T>> = (0..n).map(|j| mv.col(j)).collect();
    let v: Vec<Vec<T>> = (0..n).map(|j| v0.col(j)).collect();
    jacobi_svd(m.rows(), a, v)
}

/// Orthogonalize the columns `a` by plane rotations, accumulating them into
/// `v`; `a[j]` and `v[j]` are columns.
fn jacobi_svd<T: Scalar>(rows: usize, mut a: Vec<Vec<T>>, mut v: Vec<Vec<T>>) -> Result<Svd<T>, NumError> {
    let n = a.len();
    // Rotations below this relative coupling cannot change the result.
    let eps = T::epsilon() * T::of(rows as f64);
    let mut converged = false;
    let mut sweeps = 0;
    let mut worst = 0.0;
    while sweeps < JACOBI_MAX_SWEEPS {
        sweeps += 1;
        let mut rotated = false;
        worst = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                let alpha = dot(&a[i], &a[i]);
                let beta = dot(&a[j], &a[j]);
                let gamma = dot(&a[i], &a[j]);
                let scale = (alpha * beta).sqrt();
                if gamma == T::zero() || gamma.abs() <= eps * scale {
                    continue;
                }
                worst = f64::max(worst, (gamma.abs() / scale).to_f64_lossy());
                rotated = true;
                let zeta = (beta - alpha) / (T::of(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                let (lo, hi) = a.split_at_mut(j);
                rotate(&mut lo[i], &mut hi[0], c, s);
                let (lo, hi) = v.split_at_mut(j);
                rotate(&mut lo[i], &mut hi[0], c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(NumError::NoConvergence {
            op: "svd",
            iterations: sweeps,
            last: worst,
            gap: worst,
        });
    }
    let mut sv: Vec<(T, usize)> = a.iter().enumerate().map(|(j, c)| (norm(c), j)).collect();
    sv.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap_or(std::cmp::Ordering::Equal).then(x.1.cmp(&y.1)));
    let mut u = Matrix::zeros(rows, n);
    let mut vm = Matrix::zeros(n, n);
    let mut s = Vec::with_capacity(n);
    for (k, &(sigma, j)) in sv.iter().enumerate() {
        s.push(sigma);
        if sigma > T::zero() {
            for i in 0..rows {
                u[(i, k)] = a[j][i] / sigma;
            }
        }
        for i in 0..n {
            vm[(i, k)] = v[j][i];
        }
    }
    Ok(Svd { u, s, v: vm })
}

fn rotate<T: Scalar>(x: &mut [T], y: &mut [T], c: T, s: T) {
    for (a, b) in x.iter_mut().zip(y.iter_mut()) {
        let (xa, yb) = (*a, *b);
        *a = c * xa - s * yb;
        *b = s * xa + c * yb;
    }
}

/// `σ_max / σ_min` of a square matrix.
pub fn condition_number<T: Scalar>(m: &Matrix<T>) -> Result<T, NumError> {
    if !m.is_square() {
        return Err(NumError::NotSquare(m.shape()));
    }
    let d = svd(m)?;
    let smax = d.s[0];
    let smin = *d.s.last().expect("nonempty");
    if smax == T::zero() || smin <= T::of(SINGULAR_RATIO) * smax {
        return Err(NumError::IllConditioned {
            sigma_min: smin.to_f64_lossy(),
            sigma_max: smax.to_f64_lossy(),
        });
    }
    Ok(smax / smin)
}

/// Gauss-Jordan inverse with partial pivoting.
pub fn inverse<T: Scalar>(m: &Matrix<T>) -> Result<Matrix<T>, NumError> {
    if !m.is_square() {
        return Err(NumError::NotSquare(m.shape()));
    }
    let n = m.rows();
    let scale = m.max_abs();
    if n == 0 || scale == T::zero() {
        return Err(NumError::Singular { pivot: 0.0 });
    }
    let mut a = m.clone();
    let mut inv = Matrix::identity(n);
    let floor = T::of(SINGULAR_RATIO) * scale;
    for col in 0..n {
        let (piv_row, piv) = (col..n)
            .map(|r| (r, a[(r, col)].abs()))
            .fold((col, T::zero()), |best, cur| if cur.1 > best.1 { cur } else { best });
        if piv <= floor {
            return Err(NumError::Singular { pivot: piv.to_f64_lossy() });
        }
        if piv_row != col {
            swap_rows(&mut a, piv_row, col);
            swap_rows(&mut inv, piv_row, col);
        }
        let p = a[(col, col)];
        for j in 0..n {
            a[(col, j)] /= p;
            inv[(col, j)] /= p;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = a[(r, col)];
            if f == T::zero() {
                continue;
            }
            for j in 0..n {
                let (ac, ic) = (a[(col, j)], inv[(col, j)]);
                a[(r, j)] -= f * ac;
                inv[(r, j)] -= f * ic;
            }
        }
    }
    Ok(inv)
}

fn swap_rows<T: Scalar>(m: &mut Matrix<T>, i: usize, j: usize) {
    for c in 0..m.cols() {
        let t = m[(i, c)];
        m[(i, c)] = m[(j, c)];
        m[(j, c)] = t;
    }
}

/// Eigen-decomposition of a symmetric matrix: `m = Q diag(values) Qᵀ`,
/// eigenvalues ascending, eigenvectors in the columns of `vectors`.
#[derive(Debug, Clone)]
pub struct SymEigen<T> {
    pub values: Vec<T>,
    pub vectors: Matrix<T>,
}

/// Cyclic Jacobi eigensolver for symmetric input.
pub fn symmetric_eigen<T: Scalar>(m: &Matrix<T>) -> Result<SymEigen<T>, NumError> {
    if !m.is_square() {
        return Err(NumError::NotSquare(m.shape()));
    }
    let n = m.rows();
    let mut a = m.clone();
    // Enforce exact symmetry; callers pass matrices symmetric up to rounding.
    for i in 0..n {
        for j in 0..i {
            let avg = (a[(i, j)] + a[(j, i)]) * T::of(0.5);
            a[(i, j)] = avg;
            a[(j, i)] = avg;
        }
    }
    let mut q = Matrix::identity(n);
    let eps = T::epsilon();
    let mut converged = n <= 1;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: T = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        let total = a.frobenius_norm();
        if off.sqrt() <= eps * total || off == T::zero() {
            converged = true;
            break;
        }
        for p in 0..n {
            for r in (p + 1)..n {
                let apr = a[(p, r)];
                if apr.abs() <= T::min_positive_value() {
                    continue;
                }
                let theta = (a[(r, r)] - a[(p, p)]) / (T::of(2.0) * apr);
                let t = theta.signum() / (theta.abs() + (T::one() + theta * theta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akr = a[(k, r)];
                    a[(k, p)] = c * akp - s * akr;
                    a[(k, r)] = s * akp + c * akr;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let ark = a[(r, k)];
                    a[(p, k)] = c * apk - s * ark;
                    a[(r, k)] = s * apk + c * ark;
                }
                for k in 0..n {
                    let qkp = q[(k, p)];
                    let qkr = q[(k, r)];
                    q[(k, p)] = c * qkp - s * qkr;
                    q[(k, r)] = s * qkp + c * qkr;
                }
            }
        }
    }
    if !converged {
        return Err(NumError::NoConvergence {
            op: "symmetric_eigen",
            iterations: JACOBI_MAX_SWEEPS,
            last: f64::NAN,
            gap: f64::NAN,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].partial_cmp(&a[(j, j)]).unwrap_or(std::cmp::Ordering::Equal));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = Matrix::from_fn(n, n, |r, c| q[(r, order[c])]);
    Ok(SymEigen { values, vectors })
}

pub const PSD_TOL: f64 = 1e-8;

/// Principal square root of a symmetric positive semidefinite matrix.
/// Eigenvalues in `[-1e-8, 0)` are clamped to zero.
pub fn sqrtm_psd<T: Scalar>(m: &Matrix<T>) -> Result<Matrix<T>, NumError> {
    let scale = m.max_abs().max(T::one());
    if !m.is_symmetric(T::of(PSD_TOL) * scale) {
        return Err(NumError::NotSymmetric);
    }
    let eig = symmetric_eigen(m)?;
    let n = m.rows();
    let mut roots = Vec::with_capacity(n);
    for &lam in &eig.values {
        if lam < -T::of(PSD_TOL) * scale {
            return Err(NumError::NotPsd { eigenvalue: lam.to_f64_lossy() });
        }
        roots.push(lam.max(T::zero()).sqrt());
    }
    let q = &eig.vectors;
    Ok(Matrix::from_fn(n, n, |i, j| {
        (0..n).map(|k| q[(i, k)] * roots[k] * q[(j, k)]).sum()
    }))
}

/// All eigenvalues of a general square matrix, sorted by real part then
/// imaginary part.
pub fn eigvals<T: Scalar>(m: &Matrix<T>) -> Result<Vec<Complex<T>>, NumError> {
    if !m.is_square() {
        return Err(NumError::NotSquare(m.shape()));
    }
    let n = m.rows();
    if n == 0 {
        return Ok(Vec::new());
    }
    // 1-based working copy keeps the Hessenberg-QR index arithmetic readable.
    let mut a = vec![vec![T::zero(); n + 1]; n + 1];
    for i in 0..n {
        for j in 0..n {
            a[i + 1][j + 1] = m[(i, j)];
        }
    }
    hessenberg(&mut a, n);
    let (wr, wi) = hqr(&mut a, n)?;
    let mut out: Vec<Complex<T>> = (1..=n).map(|i| Complex::new(wr[i], wi[i])).collect();
    out.sort_by(|x, y| {
        x.re.partial_cmp(&y.re)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(x.im.partial_cmp(&y.im).unwrap_or(std::cmp::Ordering::Equal))
    });
    Ok(out)
}

/// Reduction to upper Hessenberg form by stabilized elementary similarity
/// transforms (1-based indices).
fn hessenberg<T: Scalar>(a: &mut [Vec<T>], n: usize) {
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
                let t = a[i][j];
                a[i][j] = a[m][j];
                a[m][j] = t;
            }
            for row in a.iter_mut().take(n + 1).skip(1) {
                row.swap(i, m);
            }
        }
        if x != T::zero() {
            for i in (m + 1)..=n {
                let mut y = a[i][m - 1];
                if y != T::zero() {
                    y /= x;
                    a[i][m - 1] = y;
                    for j in m..=n {
                        let amj = a[m][j];
                        a[i][j] -= y * amj;
                    }
                    for row in a.iter_mut().take(n + 1).skip(1) {
                        let rji = row[i];
                        row[m] += y * rji;
                    }
                }
            }
        }
    }
    for i in 3..=n {
        for j in 1..(i - 1) {
            a[i][j] = T::zero();
        }
    }
}

/// Shifted QR on an upper Hessenberg matrix (Francis double shift).
#[allow(clippy::many_single_char_names)]
fn hqr<T: Scalar>(a: &mut [Vec<T>], n: usize) -> Result<(Vec<T>, Vec<T>), NumError> {
    let zero = T::zero();
    let mut wr = vec![zero; n + 1];
    let mut wi = vec![zero; n + 1];
    let mut anorm = zero;
    for i in 1..=n {
        for j in i.saturating_sub(1).max(1)..=n {
            anorm += a[i][j].abs();
        }
    }
    let mut nn = n as isize;
    let mut t = zero;
    let (mut p, mut q, mut r): (T, T, T);
    let (mut x, mut y, mut z, mut w);
    while nn >= 1 {
        let nu = nn as usize;
        let mut its = 0;
        loop {
            let mut l = nu;
            while l >= 2 {
                let mut s = a[l - 1][l - 1].abs() + a[l][l].abs();
                if s == zero {
                    s = anorm;
                }
                if a[l][l - 1].abs() + s == s {
                    a[l][l - 1] = zero;
                    break;
                }
                l -= 1;
            }
            let nu = nn as usize;
            x = a[nu][nu];
            if l == nu {
                wr[nu] = x + t;
                wi[nu] = zero;
                nn -= 1;
                break;
            }
            y = a[nu - 1][nu - 1];
            w = a[nu][nu - 1] * a[nu - 1][nu];
            if l == nu - 1 {
                p = T::of(0.5) * (y - x);
                q = p * p + w;
                z = q.abs().sqrt();
                x += t;
                if q >= zero {
                    z = p + if p >= zero { z.abs() } else { -z.abs() };
                    wr[nu - 1] = x + z;
                    wr[nu] = x + z;
                    if z != zero {
                        wr[nu] = x - w / z;
                    }
                    wi[nu - 1] = zero;
                    wi[nu] = zero;
                } else {
                    wr[nu - 1] = x + p;
                    wr[nu] = x + p;
                    wi[nu - 1] = -z;
                    wi[nu] = z;
                }
                nn -= 2;
                break;
            }
            if its == 60 {
                return Err(NumError::NoConvergence {
                    op: "eigvals",
                    iterations: its,
                    last: a[nu][nu].to_f64_lossy(),
                    gap: a[nu][nu - 1].to_f64_lossy(),
                });
            }
            if its == 10 || its == 20 || its == 40 {
                t += x;
                for i in 1..=nu {
                    a[i][i] -= x;
                }
                let s = a[nu][nu - 1].abs() + a[nu - 1][nu - 2].abs();
                x = T::of(0.75) * s;
                y = x;
                w = T::of(-0.4375) * s * s;
            }
            its += 1;
            let mut m = nu - 2;
            loop {
                z = a[m][m];
                let rr = x - z;
                let ss = y - z;
                p = (rr * ss - w) / a[m + 1][m] + a[m][m + 1];
                q = a[m + 1][m + 1] - z - rr - ss;
                r = a[m + 2][m + 1];
                let s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
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
            for i in (m + 2)..=nu {
                a[i][i - 2] = zero;
                if i != m + 2 {
                    a[i][i - 3] = zero;
                }
            }
            let mut k = m;
            while k < nu {
                if k != m {
                    p = a[k][k - 1];
                    q = a[k + 1][k - 1];
                    r = zero;
                    if k != nu - 1 {
                        r = a[k + 2][k - 1];
                    }
                    x = p.abs() + q.abs() + r.abs();
                    if x != zero {
                        p /= x;
                        q /= x;
                        r /= x;
                    }
                }
                let mag = (p * p + q * q + r * r).sqrt();
                let s = if p >= zero { mag } else { -mag };
                if s != zero {
                    if k == m {
                        if l != m {
                            a[k][k - 1] = -a[k][k - 1];
                        }
                    } else {
                        a[k][k - 1] = -s * x;
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    z = r / s;
                    q /= p;
                    r /= p;
                    for j in k..=nu {
                        p = a[k][j] + q * a[k + 1][j];
                        if k != nu - 1 {
                            p += r * a[k + 2][j];
                            a[k + 2][j] -= p * z;
                        }
                        a[k + 1][j] -= p * y;
                        a[k][j] -= p * x;
                    }
                    let mmin = nu.min(k + 3);
                    for i in l..=mmin {
                        p = x * a[i][k] + y * a[i][k + 1];
                        if k != nu - 1 {
                            p += z * a[i][k + 2];
                            a[i][k + 2] -= p * r;
                        }
                        a[i][k + 1] -= p * q;
                        a[i][k] -= p;
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

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn spectral_norm_trivial_cases() {
        let i3 = Matrix::<f64>::identity(3);
        assert!(close(spectral_norm(&i3, 1e-10, 10_000).unwrap(), 1.0, 1e-12));
        let d = Matrix::from_diag(&[3.0, 1.0]);
        assert!(close(spectral_norm(&d, 1e-10, 10_000).unwrap(), 3.0, 1e-9));
        assert_eq!(spectral_norm(&Matrix::<f64>::zeros(2, 2), 1e-10, 100).unwrap(), 0.0);
    }

    #[test]
    fn spectral_norm_reports_non_convergence() {
        let d = Matrix::from_diag(&[1.0, 0.999_999]);
        match spectral_norm(&d, 1e-15, 2) {
            Err(NumError::NoConvergence { iterations, .. }) => assert_eq!(iterations, 2),
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn warm_svd_matches_cold() {
        let mut rng = crate::numkit::Rng::new(5);
        let a = rng.gaussian_matrix::<f64>(6, 6, 1.0);
        let cold = svd(&a).unwrap();
        let nearby = a.add(&rng.gaussian_matrix::<f64>(6, 6, 1e-3)).unwrap();
        let warm = svd_warm(&nearby, &cold.v).unwrap();
        let reference = svd(&nearby).unwrap();
        for (x, y) in warm.s.iter().zip(&reference.s) {
            assert!(close(*x, *y, 1e-12 * reference.s[0]));
        }
        let rebuilt = warm.u.matmul(&Matrix::from_diag(&warm.s)).unwrap().matmul(&warm.v.transpose()).unwrap();
        assert!(rebuilt.sub(&nearby).unwrap().max_abs() < 1e-12);
        let vtv = warm.v.t_matmul(&warm.v).unwrap();
        assert!(vtv.sub(&Matrix::identity(6)).unwrap().max_abs() < 1e-12);
        // A guess of the wrong shape falls back to the cold start.
        assert_eq!(svd_warm(&a, &Matrix::identity(3)).unwrap().s, cold.s);
    }

    #[test]
    fn condition_number_cases() {
        let d = Matrix::from_diag(&[2.0, 1.0]);
        assert!(close(condition_number(&d).unwrap(), 2.0, 1e-12));
        let w = Matrix::from_diag(&[1.0, 9.0]).shifted(1.0);
        assert!(close(condition_number(&w).unwrap(), 5.0, 1e-12));
        let th = 0.3_f64;
        let rot = Matrix::from_rows(&[vec![th.cos(), -th.sin()], vec![th.sin(), th.cos()]]);
        assert!(close(condition_number(&rot).unwrap(), 1.0, 1e-10));
        let sing = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]);
        assert!(matches!(condition_number(&sing), Err(NumError::IllConditioned { .. })));
    }

    #[test]
    fn inverse_cases() {
        let i = Matrix::<f64>::identity(4);
        assert_eq!(inverse(&i).unwrap(), i);
        let d = inverse(&Matrix::from_diag(&[2.0, 4.0])).unwrap();
        assert!(close(d[(0, 0)], 0.5, 1e-15) && close(d[(1, 1)], 0.25, 1e-15));
        let sing = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]);
        assert!(matches!(inverse(&sing), Err(NumError::Singular { .. })));
    }

    #[test]
    fn sqrtm_cases() {
        let s = sqrtm_psd(&Matrix::from_diag(&[4.0, 9.0])).unwrap();
        assert!(close(s[(0, 0)], 2.0, 1e-12) && close(s[(1, 1)], 3.0, 1e-12));
        assert!(close(s[(0, 1)], 0.0, 1e-12));
        let z = sqrtm_psd(&Matrix::<f64>::zeros(3, 3)).unwrap();
        assert_eq!(z.max_abs(), 0.0);
        assert!(matches!(
            sqrtm_psd(&Matrix::from_diag(&[1.0, -1.0])),
            Err(NumError::NotPsd { .. })
        ));
    }

    #[test]
    fn eigvals_cases() {
        let e = eigvals(&Matrix::from_diag(&[5.0, 1.0])).unwrap();
        assert!(close(e[0].re, 1.0, 1e-12) && close(e[1].re, 5.0, 1e-12));
        let rot = Matrix::from_rows(&[vec![0.0, -1.0], vec![1.0, 0.0]]);
        let e = eigvals(&rot).unwrap();
        assert!(close(e[0].re, 0.0, 1e-12) && close(e[0].im, -1.0, 1e-12));
        assert!(close(e[1].re, 0.0, 1e-12) && close(e[1].im, 1.0, 1e-12));
    }

    #[test]
    fn svd_reconstructs_rectangular_input() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0, 0.5], vec![-1.0, 0.3, 2.0]]);
        let d = svd(&m).unwrap();
        let rec = Matrix::from_fn(2, 3, |i, j| (0..2).map(|k| d.u[(i, k)] * d.s[k] * d.v[(j, k)]).sum());
        assert!(rec.sub(&m).unwrap().max_abs() < 1e-12);
        assert!(d.s[0] >= d.s[1]);
    }

    #[test]
    fn f32_paths_work() {
        let d = Matrix::<f32>::from_diag(&[2.0, 1.0]);
        assert!((condition_number(&d).unwrap() - 2.0).abs() < 1e-5);
        let e = eigvals(&Matrix::<f32>::from_diag(&[3.0, -1.0])).unwrap();
        assert!((e[0].re + 1.0).abs() < 1e-5);
    }
}
