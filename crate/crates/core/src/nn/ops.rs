//! Forward kernels and their vector-Jacobian products.
//!
//! The public functions are plain forward evaluations; [`super::Tape`] calls
//! the same kernels and pairs them with the `*_backward` routines here.

use super::{NnError, Tensor};

/// Smallest row sum [`normalize_l1`] accepts.
pub const NORMALIZE_MIN_SUM: f64 = 1e-30;

fn mismatch(op: &'static str, detail: String) -> NnError {
    NnError::ShapeMismatch { op, detail }
}

fn same_numel(op: &'static str, u: &Tensor, v: &Tensor) -> Result<(), NnError> {
    if u.shape() != v.shape() {
        return Err(mismatch(op, format!("{:?} vs {:?}", u.shape(), v.shape())));
    }
    Ok(())
}

/// Affine map `x W + b` on each row of `x`. `x` may be `[d_in]` or `[n, d_in]`;
/// `w` is `[d_in, d_out]` and `b` is `[d_out]`.
pub fn linear(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor, NnError> {
    if w.rank() != 2 || b.rank() != 1 || x.rank() == 0 || x.rank() > 2 {
        return Err(mismatch(
            "linear",
            format!("x {:?}, W {:?}, b {:?}", x.shape(), w.shape(), b.shape()),
        ));
    }
    let (d_in, d_out) = (w.shape()[0], w.shape()[1]);
    if x.cols() != d_in || b.shape()[0] != d_out {
        return Err(mismatch(
            "linear",
            format!("x {:?}, W {:?}, b {:?}", x.shape(), w.shape(), b.shape()),
        ));
    }
    let n = x.rows();
    let wd = w.data();
    let mut out = Vec::with_capacity(n * d_out);
    for i in 0..n {
        let start = out.len();
        out.extend_from_slice(b.data());
        let y = &mut out[start..];
        for (p, &xp) in x.row(i).iter().enumerate() {
            if xp == 0.0 {
                continue;
            }
            for (yj, wj) in y.iter_mut().zip(&wd[p * d_out..(p + 1) * d_out]) {
                *yj += xp * wj;
            }
        }
    }
    let mut shape = x.shape().to_vec();
    *shape.last_mut().unwrap() = d_out;
    Ok(Tensor::from_parts(shape, out))
}

/// Returns `(dx, dW, db)` for `linear`. `dx` is skipped when not needed.
pub(crate) fn linear_backward(
    x: &Tensor,
    w: &Tensor,
    gy: &Tensor,
    need_dx: bool,
) -> (Option<Tensor>, Tensor, Tensor) {
    let (d_in, d_out) = (w.shape()[0], w.shape()[1]);
    let n = x.rows();
    let wd = w.data();
    let mut gw = vec![0.0; d_in * d_out];
    let mut gb = vec![0.0; d_out];
    let mut gx = need_dx.then(|| vec![0.0; n * d_in]);
    for i in 0..n {
        let g = gy.row(i);
        for (acc, gj) in gb.iter_mut().zip(g) {
            *acc += gj;
        }
        for (p, &xp) in x.row(i).iter().enumerate() {
            if xp != 0.0 {
                for (acc, gj) in gw[p * d_out..(p + 1) * d_out].iter_mut().zip(g) {
                    *acc += xp * gj;
                }
            }
            if let Some(gx) = gx.as_mut() {
                gx[i * d_in + p] = wd[p * d_out..(p + 1) * d_out]
                    .iter()
                    .zip(g)
                    .map(|(a, b)| a * b)
                    .sum();
            }
        }
    }
    (
        gx.map(|d| Tensor::from_parts(x.shape().to_vec(), d)),
        Tensor::from_parts(vec![d_in, d_out], gw),
        Tensor::from_parts(vec![d_out], gb),
    )
}

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

/// Uses `relu'(0) = 0`.
pub(crate) fn relu_backward(x: &Tensor, gy: &Tensor) -> Tensor {
    let data = x
        .data()
        .iter()
        .zip(gy.data())
        .map(|(&xv, &g)| if xv > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::from_parts(x.shape().to_vec(), data)
}

pub fn tanh_act(x: &Tensor) -> Tensor {
    x.map(f64::tanh)
}

pub(crate) fn tanh_backward(y: &Tensor, gy: &Tensor) -> Tensor {
    let data = y
        .data()
        .iter()
        .zip(gy.data())
        .map(|(&yv, &g)| g * (1.0 - yv * yv))
        .collect();
    Tensor::from_parts(y.shape().to_vec(), data)
}

fn softplus_scalar(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^z)`, evaluated without overflow.
pub fn softplus(x: &Tensor) -> Tensor {
    x.map(softplus_scalar)
}

pub(crate) fn softplus_backward(x: &Tensor, gy: &Tensor) -> Tensor {
    let data = x
        .data()
        .iter()
        .zip(gy.data())
        .map(|(&xv, &g)| g * sigmoid(xv))
        .collect();
    Tensor::from_parts(x.shape().to_vec(), data)
}

/// Divides each row by its sum. Inputs are expected to be non-negative, so
/// the sum is the ℓ1 norm.
pub fn normalize_l1(x: &Tensor) -> Result<Tensor, NnError> {
    let c = x.cols();
    let mut out = Vec::with_capacity(x.numel());
    for r in 0..x.rows() {
        let row = x.row(r);
        let sum: f64 = row.iter().sum();
        if sum.is_nan() || sum <= NORMALIZE_MIN_SUM {
            return Err(NnError::DegenerateNormalization { row: r, sum });
        }
        out.extend(row.iter().map(|v| v / sum));
    }
    debug_assert_eq!(out.len(), x.rows() * c);
    Ok(Tensor::from_parts(x.shape().to_vec(), out))
}

/// For `y = x / s` with `s = Σx`: `dx_i = (g_i - Σ_j g_j y_j) / s`.
pub(crate) fn normalize_l1_backward(x: &Tensor, y: &Tensor, gy: &Tensor) -> Tensor {
    let mut out = Vec::with_capacity(x.numel());
    for r in 0..x.rows() {
        let sum: f64 = x.row(r).iter().sum();
        let g = gy.row(r);
        let dot: f64 = g.iter().zip(y.row(r)).map(|(a, b)| a * b).sum();
        out.extend(g.iter().map(|gi| (gi - dot) / sum));
    }
    Tensor::from_parts(x.shape().to_vec(), out)
}

/// `Σ_i weights[i] · rows[i]` for an `[n, k]` input; returns `[k]`.
pub fn weighted_sum_rows(x: &Tensor, weights: &[f64]) -> Result<Tensor, NnError> {
    if x.rank() != 2 || x.rows() != weights.len() {
        return Err(mismatch(
            "sum_pool",
            format!("rows {:?} with {} weights", x.shape(), weights.len()),
        ));
    }
    let mut out = vec![0.0; x.cols()];
    for (i, &w) in weights.iter().enumerate() {
        for (acc, v) in out.iter_mut().zip(x.row(i)) {
            *acc += w * v;
        }
    }
    Ok(Tensor::vector(out))
}

pub(crate) fn weighted_sum_rows_backward(x: &Tensor, weights: &[f64], gy: &Tensor) -> Tensor {
    let mut out = Vec::with_capacity(x.numel());
    for &w in weights {
        out.extend(gy.data().iter().map(|g| w * g));
    }
    Tensor::from_parts(x.shape().to_vec(), out)
}

/// Unweighted sum over the rows of `[n, k]`.
pub fn sum_pool(rows: &Tensor) -> Result<Tensor, NnError> {
    weighted_sum_rows(rows, &vec![1.0; rows.rows()])
}

pub fn l1_distance(u: &Tensor, v: &Tensor) -> Result<f64, NnError> {
    same_numel("l1_distance", u, v)?;
    Ok(u.data()
        .iter()
        .zip(v.data())
        .map(|(a, b)| (a - b).abs())
        .sum())
}

/// Subgradient of `|u - v|` with `sign(0) = 0`. Returns `(du, dv)`.
pub(crate) fn l1_distance_backward(u: &Tensor, v: &Tensor, g: f64) -> (Tensor, Tensor) {
    let du: Vec<f64> = u
        .data()
        .iter()
        .zip(v.data())
        .map(|(a, b)| {
            let d = a - b;
            if d > 0.0 {
                g
            } else if d < 0.0 {
                -g
            } else {
                0.0
            }
        })
        .collect();
    let dv = du.iter().map(|x| -x).collect();
    (
        Tensor::from_parts(u.shape().to_vec(), du),
        Tensor::from_parts(v.shape().to_vec(), dv),
    )
}

/// `Σ_i min(u_i, v_i)`.
pub fn min_pool_sum(u: &Tensor, v: &Tensor) -> Result<f64, NnError> {
    same_numel("min_pool_sum", u, v)?;
    Ok(u.data().iter().zip(v.data()).map(|(a, b)| a.min(*b)).sum())
}

/// Routes the gradient to the strictly smaller argument; ties get nothing.
pub(crate) fn min_pool_sum_backward(u: &Tensor, v: &Tensor, g: f64) -> (Tensor, Tensor) {
    let n = u.numel();
    let mut du = vec![0.0; n];
    let mut dv = vec![0.0; n];
    for (i, (a, b)) in u.data().iter().zip(v.data()).enumerate() {
        if a < b {
            du[i] = g;
        } else if b < a {
            dv[i] = g;
        }
    }
    (
        Tensor::from_parts(u.shape().to_vec(), du),
        Tensor::from_parts(v.shape().to_vec(), dv),
    )
}
