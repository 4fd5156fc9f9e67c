//! Safe row-major wrappers around `matrixmultiply::dgemm`.

fn dgemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(c.len() >= m * n, "gemm: output too short");
    if k == 0 {
        c[..m * n].iter_mut().for_each(|v| *v *= beta);
        return;
    }
    assert!(a.len() > (m - 1) * rsa + (k - 1) * csa, "gemm: lhs too short");
    assert!(b.len() > (k - 1) * rsb + (n - 1) * csb, "gemm: rhs too short");
    // SAFETY: the asserts above bound every element the kernel touches.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `c = a * b + beta * c` with `a: m x k`, `b: k x n`.
pub(crate) fn gemm_nn(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], beta: f64, c: &mut [f64]) {
    dgemm(m, k, n, a, (k, 1), b, (n, 1), beta, c);
}

/// `c = a^T * b + beta * c` where `a` is stored `k x m`.
pub(crate) fn gemm_tn(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], beta: f64, c: &mut [f64]) {
    dgemm(m, k, n, a, (1, m), b, (n, 1), beta, c);
}

/// `c = a * b^T + beta * c` where `b` is stored `n x k`.
pub(crate) fn gemm_nt(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], beta: f64, c: &mut [f64]) {
    dgemm(m, k, n, a, (k, 1), b, (1, k), beta, c);
}
