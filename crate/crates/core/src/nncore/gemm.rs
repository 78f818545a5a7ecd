/// Whether an operand is used as stored or transposed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Trans {
    N,
    T,
}

/// `c = op(a) * op(b) + beta * c` for row-major operands, where `op(a)` is
/// `m x k` and `op(b)` is `k x n`.
///
/// With `Trans::T` the operand is stored in its transposed shape (`k x m` for
/// `a`, `n x k` for `b`).
#[allow(clippy::too_many_arguments)]
pub fn matmul(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    ta: Trans,
    b: &[f64],
    tb: Trans,
    beta: f64,
    c: &mut [f64],
) {
    assert_eq!(a.len(), m * k, "lhs has wrong length");
    assert_eq!(b.len(), k * n, "rhs has wrong length");
    assert_eq!(c.len(), m * n, "output has wrong length");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.iter_mut().for_each(|v| *v *= beta);
        return;
    }
    let (rsa, csa) = match ta {
        Trans::N => (k as isize, 1),
        Trans::T => (1, m as isize),
    };
    let (rsb, csb) = match tb {
        Trans::N => (n as isize, 1),
        Trans::T => (1, k as isize),
    };
    // SAFETY: lengths are asserted above and the strides describe exactly the
    // row-major layouts of `a`, `b` and `c`; `c` does not alias the inputs.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
