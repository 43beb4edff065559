//! Flat-slice compute kernels shared by the forward and backward passes.

/// out += a @ b, with a: m×k, b: k×n, out: m×n.
pub(crate) fn mm_nn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let out_row = &mut out[i * n..(i + 1) * n];
        for (p, &a_ip) in a_row.iter().enumerate() {
            if a_ip == 0.0 {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for j in 0..n {
                out_row[j] += a_ip * b_row[j];
            }
        }
    }
}

/// out += a @ bᵀ, with a: m×k, b: n×k, out: m×n.
pub(crate) fn mm_nt(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let out_row = &mut out[i * n..(i + 1) * n];
        for j in 0..n {
            let b_row = &b[j * k..(j + 1) * k];
            let mut s = 0.0;
            for p in 0..k {
                s += a_row[p] * b_row[p];
            }
            out_row[j] += s;
        }
    }
}

/// out += aᵀ @ g, with a: m×k, g: m×n, out: k×n.
pub(crate) fn mm_tn(a: &[f64], g: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let g_row = &g[i * n..(i + 1) * n];
        let a_row = &a[i * k..(i + 1) * k];
        for (p, &a_ip) in a_row.iter().enumerate() {
            if a_ip == 0.0 {
                continue;
            }
            let out_row = &mut out[p * n..(p + 1) * n];
            for j in 0..n {
                out_row[j] += a_ip * g_row[j];
            }
        }
    }
}

/// True when `rhs` broadcasts to `lhs`: trailing-aligned, each extent equal or 1.
pub(crate) fn broadcast_ok(lhs: &[usize], rhs: &[usize]) -> bool {
    rhs.len() <= lhs.len()
        && rhs
            .iter()
            .rev()
            .zip(lhs.iter().rev())
            .all(|(&r, &l)| r == l || r == 1)
}

/// Calls `f(lhs_flat, rhs_flat)` for every element of `lhs` in row-major
/// order, mapping each position to the broadcast element of `rhs`.
pub(crate) fn zip_broadcast(lhs: &[usize], rhs: &[usize], mut f: impl FnMut(usize, usize)) {
    let nd = lhs.len();
    let total: usize = lhs.iter().product();
    if total == 0 {
        return;
    }
    let off = nd - rhs.len();
    let mut rstride = vec![0usize; nd];
    let mut s = 1usize;
    for d in (0..rhs.len()).rev() {
        rstride[off + d] = if rhs[d] == 1 { 0 } else { s };
        s *= rhs[d];
    }
    let mut coords = vec![0usize; nd];
    let mut ri = 0usize;
    for li in 0..total {
        f(li, ri);
        for d in (0..nd).rev() {
            coords[d] += 1;
            ri += rstride[d];
            if coords[d] < lhs[d] {
                break;
            }
            coords[d] = 0;
            ri -= rstride[d] * lhs[d];
        }
    }
}
