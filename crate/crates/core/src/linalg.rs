//! Small dense kernels used by the mesh decoder, the network engine and PCA.
//! Everything is f64, row-major, and summation orders are fixed so results
//! are bit-reproducible.

/// Dot product with four independent accumulators. The accumulation order is
/// fixed (chunks of four, then the tail), which both vectorizes and keeps
/// results identical across runs.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len();
    let chunks = n / 4;
    let mut acc = [0.0f64; 4];
    for i in 0..chunks {
        let j = 4 * i;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for j in 4 * chunks..n {
        s += a[j] * b[j];
    }
    s
}

/// out = W x + b, with W row-major (rows x cols).
pub fn matvec_bias(w: &[f64], rows: usize, cols: usize, x: &[f64], b: &[f64], out: &mut [f64]) {
    debug_assert_eq!(w.len(), rows * cols);
    debug_assert_eq!(x.len(), cols);
    debug_assert_eq!(out.len(), rows);
    for (r, o) in out.iter_mut().enumerate() {
        *o = dot(&w[r * cols..(r + 1) * cols], x) + b[r];
    }
}

/// out += W^T v, with W row-major (rows x cols), v of length rows.
pub fn matvec_transpose_add(w: &[f64], rows: usize, cols: usize, v: &[f64], out: &mut [f64]) {
    debug_assert_eq!(w.len(), rows * cols);
    debug_assert_eq!(v.len(), rows);
    debug_assert_eq!(out.len(), cols);
    for r in 0..rows {
        let vr = v[r];
        let row = &w[r * cols..(r + 1) * cols];
        for (o, wv) in out.iter_mut().zip(row) {
            *o += vr * wv;
        }
    }
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

// Axis-angle rotation in the Rodrigues form
//   R(p) v = v + a(s) (p x v) + b(s) (p x (p x v)),   s = |p|^2,
// with a(s) = sin(t)/t and b(s) = (1 - cos(t))/t^2 for t = sqrt(s).
// Near t = 0 the coefficients switch to their Taylor series so the map and
// its derivatives stay smooth through the identity rotation.

const SMALL_ANGLE_SQ: f64 = 1e-6;

fn rot_coeff_a(s: f64) -> f64 {
    if s < SMALL_ANGLE_SQ {
        1.0 - s / 6.0 + s * s / 120.0 - s * s * s / 5040.0
    } else {
        let t = s.sqrt();
        t.sin() / t
    }
}

fn rot_coeff_b(s: f64) -> f64 {
    if s < SMALL_ANGLE_SQ {
        0.5 - s / 24.0 + s * s / 720.0 - s * s * s / 40320.0
    } else {
        // 1 - cos(t) = 2 sin^2(t/2) avoids cancellation for small t.
        let half_sin = (s.sqrt() / 2.0).sin();
        2.0 * half_sin * half_sin / s
    }
}

fn rot_coeff_a_prime(s: f64) -> f64 {
    if s < SMALL_ANGLE_SQ {
        -1.0 / 6.0 + s / 60.0 - s * s / 1680.0
    } else {
        let t = s.sqrt();
        (t * t.cos() - t.sin()) / (2.0 * t * t * t)
    }
}

fn rot_coeff_b_prime(s: f64) -> f64 {
    if s < SMALL_ANGLE_SQ {
        -1.0 / 24.0 + s / 360.0 - s * s / 13440.0
    } else {
        let t = s.sqrt();
        let half_sin = (t / 2.0).sin();
        (t * t.sin() / 2.0 - 2.0 * half_sin * half_sin) / (s * s)
    }
}

/// Rotates `v` by the axis-angle vector `p` (angle = |p| radians).
pub fn rotate(p: [f64; 3], v: [f64; 3]) -> [f64; 3] {
    let s = dot3(p, p);
    let a = rot_coeff_a(s);
    let b = rot_coeff_b(s);
    let u = cross(p, v);
    let w = cross(p, u);
    [
        v[0] + a * u[0] + b * w[0],
        v[1] + a * u[1] + b * w[1],
        v[2] + a * u[2] + b * w[2],
    ]
}

/// Applies R(p)^T, the inverse rotation. Since [p]x^T = -[p]x,
/// R^T g = g - a (p x g) + b (p x (p x g)).
pub fn rotate_transpose(p: [f64; 3], g: [f64; 3]) -> [f64; 3] {
    let s = dot3(p, p);
    let a = rot_coeff_a(s);
    let b = rot_coeff_b(s);
    let u = cross(p, g);
    let w = cross(p, u);
    [
        g[0] - a * u[0] + b * w[0],
        g[1] - a * u[1] + b * w[1],
        g[2] - a * u[2] + b * w[2],
    ]
}

/// Gradient of `upstream . R(p) v` with respect to `p`.
///
/// With u = p x v, w = p x u, f = v + a u + b w:
///   df/dp_j = 2 p_j (a' u + b' w) + a (e_j x v) + b (e_j x u + p x (e_j x v)),
/// which contracts against the upstream vector g to
///   2 (a' g.u + b' g.w) p + a (v x g) + b (u x g) + b (v x (g x p)).
pub fn rotate_grad_p(p: [f64; 3], v: [f64; 3], g: [f64; 3]) -> [f64; 3] {
    let s = dot3(p, p);
    let a = rot_coeff_a(s);
    let b = rot_coeff_b(s);
    let ap = rot_coeff_a_prime(s);
    let bp = rot_coeff_b_prime(s);
    let u = cross(p, v);
    let w = cross(p, u);
    let radial = 2.0 * (ap * dot3(g, u) + bp * dot3(g, w));
    let vxg = cross(v, g);
    let uxg = cross(u, g);
    let gxp = cross(g, p);
    let vggp = cross(v, gxp);
    [
        radial * p[0] + a * vxg[0] + b * (uxg[0] + vggp[0]),
        radial * p[1] + a * vxg[1] + b * (uxg[1] + vggp[1]),
        radial * p[2] + a * vxg[2] + b * (uxg[2] + vggp[2]),
    ]
}

/// Eigendecomposition of a symmetric matrix by the cyclic Jacobi method.
/// `m` is row-major n x n and gets destroyed. Returns (eigenvalues,
/// eigenvectors) sorted by descending eigenvalue; eigenvector k occupies
/// `vectors[k * n..(k + 1) * n]`.
pub fn jacobi_eigen_sym(mut m: Vec<f64>, n: usize) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(m.len(), n * n);
    let mut v = vec![0.0f64; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let max_sweeps = 64;
    for _ in 0..max_sweeps {
        let mut off = 0.0;
        for r in 0..n {
            for c in (r + 1)..n {
                off += m[r * n + c] * m[r * n + c];
            }
        }
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m[k * n + p];
                    let akq = m[k * n + q];
                    m[k * n + p] = c * akp - s * akq;
                    m[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[p * n + k];
                    let aqk = m[q * n + k];
                    m[p * n + k] = c * apk - s * aqk;
                    m[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        m[j * n + j]
            .partial_cmp(&m[i * n + i])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut values = Vec::with_capacity(n);
    let mut vectors = vec![0.0f64; n * n];
    for (rank, &idx) in order.iter().enumerate() {
        values.push(m[idx * n + idx]);
        for k in 0..n {
            vectors[rank * n + k] = v[k * n + idx];
        }
    }
    (values, vectors)
}
