//! Stateless layer kernels with exact backward passes.
//!
//! Backward functions accumulate parameter gradients into caller-owned
//! buffers and return the gradient with respect to the layer input.

use crate::error::{Error, Result};
use crate::nn::tensor::{ShapeFmt, Tensor};
use crate::scalar::Scalar;

/// Dot product with eight independent accumulators.
#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    let mut tail = T::zero();
    for (x, y) in ra.iter().zip(rb) {
        tail += *x * *y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

#[inline]
fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    for (o, &v) in y.iter_mut().zip(x) {
        *o += alpha * v;
    }
}

fn check_dense<T: Scalar>(w: &Tensor<T>, b: &Tensor<T>, x_len: usize) -> Result<(usize, usize)> {
    let &[out, inp] = w.shape() else {
        return Err(Error::shape("(out, in)", ShapeFmt(w.shape())));
    };
    if b.shape() != [out] {
        return Err(Error::shape(ShapeFmt(&[out]), ShapeFmt(b.shape())));
    }
    if x_len != inp {
        return Err(Error::shape(ShapeFmt(&[inp]), ShapeFmt(&[x_len])));
    }
    Ok((out, inp))
}

/// `y = W x + b` with `W` of shape `(out, in)`.
pub fn dense_forward<T: Scalar>(x: &[T], w: &Tensor<T>, b: &Tensor<T>) -> Result<Vec<T>> {
    let (_, inp) = check_dense(w, b, x.len())?;
    Ok(w.data
        .chunks_exact(inp)
        .zip(&b.data)
        .map(|(row, &bi)| dot(row, x) + bi)
        .collect())
}

/// Accumulates `dL/dW`, `dL/db` and returns `dL/dx`.
pub fn dense_backward_into<T: Scalar>(
    x: &[T],
    w: &Tensor<T>,
    grad_y: &[T],
    grad_w: &mut Tensor<T>,
    grad_b: &mut Tensor<T>,
) -> Result<Vec<T>> {
    let (out, inp) = check_dense(w, grad_b, x.len())?;
    if grad_y.len() != out {
        return Err(Error::shape(ShapeFmt(&[out]), ShapeFmt(&[grad_y.len()])));
    }
    if grad_w.shape() != w.shape() {
        return Err(Error::shape(ShapeFmt(w.shape()), ShapeFmt(grad_w.shape())));
    }
    let mut grad_x = vec![T::zero(); inp];
    for (o, &gy) in grad_y.iter().enumerate() {
        if gy == T::zero() {
            continue;
        }
        grad_b.data[o] += gy;
        axpy(gy, x, &mut grad_w.data[o * inp..(o + 1) * inp]);
        axpy(gy, &w.data[o * inp..(o + 1) * inp], &mut grad_x);
    }
    Ok(grad_x)
}

/// Returns `(dL/dx, dL/dW, dL/db)` for one input.
pub fn dense_backward<T: Scalar>(
    x: &[T],
    w: &Tensor<T>,
    grad_y: &[T],
) -> Result<(Vec<T>, Tensor<T>, Tensor<T>)> {
    let mut gw = Tensor::zeros_like(w);
    let mut gb = Tensor::zeros(&[w.shape()[0]]);
    let gx = dense_backward_into(x, w, grad_y, &mut gw, &mut gb)?;
    Ok((gx, gw, gb))
}

fn check_conv<T: Scalar>(
    x: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<(usize, usize, usize, usize)> {
    let &[cout, cin, k] = kernel.shape() else {
        return Err(Error::shape("(cout, cin, k)", ShapeFmt(kernel.shape())));
    };
    if k % 2 == 0 {
        return Err(Error::InvalidArgument(format!("kernel size {k} must be odd")));
    }
    let &[xc, t] = x.shape() else {
        return Err(Error::shape("(channels, length)", ShapeFmt(x.shape())));
    };
    if xc != cin {
        return Err(Error::shape(ShapeFmt(&[cin, t]), ShapeFmt(x.shape())));
    }
    if bias.shape() != [cout] {
        return Err(Error::shape(ShapeFmt(&[cout]), ShapeFmt(bias.shape())));
    }
    Ok((cout, cin, k, t))
}

/// Valid index range `t` such that `0 <= t + shift < len`.
#[inline]
fn shifted_range(shift: isize, len: usize) -> (usize, usize) {
    let lo = (-shift).max(0) as usize;
    let hi = (len as isize - shift).clamp(0, len as isize) as usize;
    (lo.min(hi), hi)
}

/// Stride-1 cross-correlation with zero padding `(k - 1) / 2`; length preserved.
pub fn conv1d_forward<T: Scalar>(
    x: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (cout, cin, k, t) = check_conv(x, kernel, bias)?;
    let pad = (k / 2) as isize;
    let mut y = vec![T::zero(); cout * t];
    for (co, out) in y.chunks_exact_mut(t).enumerate() {
        out.iter_mut().for_each(|v| *v = bias.data[co]);
        for ci in 0..cin {
            let xr = &x.data[ci * t..(ci + 1) * t];
            let kr = &kernel.data[(co * cin + ci) * k..(co * cin + ci + 1) * k];
            for (j, &kv) in kr.iter().enumerate() {
                let shift = j as isize - pad;
                let (lo, hi) = shifted_range(shift, t);
                let src = &xr[(lo as isize + shift) as usize..(hi as isize + shift) as usize];
                axpy(kv, src, &mut out[lo..hi]);
            }
        }
    }
    Tensor::new(&[cout, t], y)
}

pub fn conv1d_backward_into<T: Scalar>(
    x: &Tensor<T>,
    kernel: &Tensor<T>,
    grad_y: &Tensor<T>,
    grad_kernel: &mut Tensor<T>,
    grad_bias: &mut Tensor<T>,
) -> Result<Tensor<T>> {
    let (cout, cin, k, t) = check_conv(x, kernel, grad_bias)?;
    if grad_y.shape() != [cout, t] {
        return Err(Error::shape(ShapeFmt(&[cout, t]), ShapeFmt(grad_y.shape())));
    }
    if grad_kernel.shape() != kernel.shape() {
        return Err(Error::shape(ShapeFmt(kernel.shape()), ShapeFmt(grad_kernel.shape())));
    }
    let pad = (k / 2) as isize;
    let mut gx = vec![T::zero(); cin * t];
    for co in 0..cout {
        let gy = &grad_y.data[co * t..(co + 1) * t];
        grad_bias.data[co] += gy.iter().copied().sum::<T>();
        for ci in 0..cin {
            let xr = &x.data[ci * t..(ci + 1) * t];
            let base = (co * cin + ci) * k;
            for j in 0..k {
                let shift = j as isize - pad;
                let (lo, hi) = shifted_range(shift, t);
                let (slo, shi) = ((lo as isize + shift) as usize, (hi as isize + shift) as usize);
                grad_kernel.data[base + j] += dot(&gy[lo..hi], &xr[slo..shi]);
                axpy(kernel.data[base + j], &gy[lo..hi], &mut gx[ci * t + slo..ci * t + shi]);
            }
        }
    }
    Tensor::new(&[cin, t], gx)
}

/// Returns `(dL/dx, dL/dK, dL/db)`.
pub fn conv1d_backward<T: Scalar>(
    x: &Tensor<T>,
    kernel: &Tensor<T>,
    grad_y: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let mut gk = Tensor::zeros_like(kernel);
    let mut gb = Tensor::zeros(&[kernel.shape()[0]]);
    let gx = conv1d_backward_into(x, kernel, grad_y, &mut gk, &mut gb)?;
    Ok((gx, gk, gb))
}

/// Source index and weight of the upper neighbour for each output position
/// under align-corners interpolation.
fn interp_taps(t_in: usize, t_out: usize) -> impl Iterator<Item = (usize, f64)> {
    let den = (t_out - 1) as u64;
    (0..t_out).map(move |j| {
        let num = j as u64 * (t_in as u64 - 1);
        let mut i0 = (num / den) as usize;
        let mut w = (num % den) as f64 / den as f64;
        if i0 >= t_in - 1 {
            i0 = t_in - 2;
            w = 1.0;
        }
        (i0, w)
    })
}

fn check_interp(t_in: usize, t_out: usize) -> Result<()> {
    if t_out < 2 {
        return Err(Error::InvalidArgument(format!("output length {t_out} < 2")));
    }
    if t_in < 2 {
        return Err(Error::InvalidArgument(format!("input length {t_in} < 2")));
    }
    if t_out < t_in {
        return Err(Error::InvalidArgument(format!(
            "cannot upsample length {t_in} to shorter length {t_out}"
        )));
    }
    Ok(())
}

/// Align-corners linear interpolation of every channel to `t_out` samples.
pub fn interp_upsample<T: Scalar>(x: &Tensor<T>, t_out: usize) -> Result<Tensor<T>> {
    let &[c, t] = x.shape() else {
        return Err(Error::shape("(channels, length)", ShapeFmt(x.shape())));
    };
    check_interp(t, t_out)?;
    let taps: Vec<(usize, T)> = interp_taps(t, t_out).map(|(i, w)| (i, T::lit(w))).collect();
    let mut y = Vec::with_capacity(c * t_out);
    for row in x.data.chunks_exact(t) {
        for &(i0, w) in &taps {
            y.push(if w == T::zero() {
                row[i0]
            } else if w == T::one() {
                row[i0 + 1]
            } else {
                row[i0] * (T::one() - w) + row[i0 + 1] * w
            });
        }
    }
    Tensor::new(&[c, t_out], y)
}

/// Transpose of [`interp_upsample`].
pub fn interp_upsample_backward<T: Scalar>(grad_y: &Tensor<T>, t_in: usize) -> Result<Tensor<T>> {
    let &[c, t_out] = grad_y.shape() else {
        return Err(Error::shape("(channels, length)", ShapeFmt(grad_y.shape())));
    };
    check_interp(t_in, t_out)?;
    let taps: Vec<(usize, T)> = interp_taps(t_in, t_out).map(|(i, w)| (i, T::lit(w))).collect();
    let mut gx = vec![T::zero(); c * t_in];
    for (gy, g) in grad_y.data.chunks_exact(t_out).zip(gx.chunks_exact_mut(t_in)) {
        for (&(i0, w), &v) in taps.iter().zip(gy) {
            g[i0] += v * (T::one() - w);
            g[i0 + 1] += v * w;
        }
    }
    Tensor::new(&[c, t_in], gx)
}

pub fn relu<T: Scalar>(x: &[T]) -> Vec<T> {
    x.iter().map(|&v| if v > T::zero() { v } else { T::zero() }).collect()
}

/// Gradient through ReLU given its output.
pub fn relu_backward<T: Scalar>(y: &[T], grad_y: &[T]) -> Vec<T> {
    y.iter()
        .zip(grad_y)
        .map(|(&v, &g)| if v > T::zero() { g } else { T::zero() })
        .collect()
}

/// Logistic function, kept strictly inside (0, 1) at the precision of `T`.
pub fn sigmoid<T: Scalar>(x: &[T]) -> Vec<T> {
    let lo = T::min_positive_value();
    let hi = T::one() - T::epsilon();
    x.iter()
        .map(|&v| {
            let s = if v >= T::zero() {
                T::one() / (T::one() + (-v).exp())
            } else {
                let e = v.exp();
                e / (T::one() + e)
            };
            s.max(lo).min(hi)
        })
        .collect()
}

/// Gradient through the sigmoid given its output.
pub fn sigmoid_backward<T: Scalar>(y: &[T], grad_y: &[T]) -> Vec<T> {
    y.iter()
        .zip(grad_y)
        .map(|(&s, &g)| g * s * (T::one() - s))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::new(shape, v.to_vec()).unwrap()
    }

    #[test]
    fn dense_identity_and_hand_example() {
        let eye = t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]);
        let zero = t(&[2], &[0.0, 0.0]);
        assert_eq!(dense_forward(&[4.0, -2.0], &eye, &zero).unwrap(), vec![4.0, -2.0]);
        let w = t(&[2, 2], &[1.0, 1.0, 0.0, 1.0]);
        let b = t(&[2], &[0.0, 1.0]);
        assert_eq!(dense_forward(&[1.0, 2.0], &w, &b).unwrap(), vec![3.0, 3.0]);
    }

    #[test]
    fn dense_shape_error_names_both_shapes() {
        let w = t(&[2, 3], &[0.0; 6]);
        let b = t(&[2], &[0.0; 2]);
        let err = dense_forward(&[1.0, 2.0], &w, &b).unwrap_err().to_string();
        assert!(err.contains("(3,)") && err.contains("(2,)"), "{err}");
    }

    #[test]
    fn conv_delta_kernel_is_identity() {
        let x = t(&[1, 4], &[1.0, -2.0, 3.0, 0.5]);
        let k = t(&[1, 1, 3], &[0.0, 1.0, 0.0]);
        let b = t(&[1], &[0.0]);
        assert_eq!(conv1d_forward(&x, &k, &b).unwrap().data, x.data);
    }

    #[test]
    fn conv_box_kernel_hand_example() {
        let x = t(&[1, 3], &[1.0, 2.0, 3.0]);
        let k = t(&[1, 1, 3], &[1.0, 1.0, 1.0]);
        let b = t(&[1], &[0.0]);
        assert_eq!(conv1d_forward(&x, &k, &b).unwrap().data, vec![3.0, 6.0, 5.0]);
    }

    #[test]
    fn conv_rejects_even_kernel_and_channel_mismatch() {
        let x = t(&[2, 3], &[0.0; 6]);
        let k = t(&[1, 2, 2], &[0.0; 4]);
        assert!(conv1d_forward(&x, &k, &t(&[1], &[0.0])).is_err());
        let k = t(&[1, 3, 3], &[0.0; 9]);
        assert!(matches!(
            conv1d_forward(&x, &k, &t(&[1], &[0.0])),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn interp_examples() {
        let x = t(&[1, 2], &[0.0, 1.0]);
        assert_eq!(interp_upsample(&x, 3).unwrap().data, vec![0.0, 0.5, 1.0]);
        let y = t(&[2, 4], &[1.0, 2.0, 4.0, 8.0, -1.0, 0.0, 3.0, 7.0]);
        assert_eq!(interp_upsample(&y, 4).unwrap().data, y.data);
        let up = interp_upsample(&y, 9).unwrap();
        assert_eq!(up.data[0], 1.0);
        assert_eq!(up.data[8], 8.0);
        assert_eq!(up.data[17], 7.0);
        assert!(interp_upsample(&x, 1).is_err());
    }

    #[test]
    fn activations() {
        assert_eq!(sigmoid(&[0.0f64]), vec![0.5]);
        assert_eq!(relu(&[-1.0f64, 2.0]), vec![0.0, 2.0]);
        let s = sigmoid(&[-1e4f32, 1e4, 40.0]);
        assert!(s.iter().all(|&v| v > 0.0 && v < 1.0), "{s:?}");
    }

    #[test]
    fn dot_matches_naive() {
        let a: Vec<f64> = (0..37).map(|i| i as f64 * 0.5).collect();
        let b: Vec<f64> = (0..37).map(|i| 1.0 - i as f64).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-9);
    }
}
