use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::tensor::{axpy, dot, Real, Tensor};

/// One layer of a sequential network. Shapes exclude the batch axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum LayerSpec {
    Dense {
        input: usize,
        output: usize,
    },
    Conv2D {
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    },
    ConvTranspose2D {
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    },
    LeakyReLU {
        alpha: f64,
    },
    ReLU,
    Tanh,
    Sigmoid,
    Flatten,
    Reshape {
        shape: Vec<usize>,
    },
}

impl LayerSpec {
    /// Output shape for a given input shape, or a message describing the mismatch.
    pub fn output_shape(&self, input: &[usize]) -> std::result::Result<Vec<usize>, String> {
        match self {
            LayerSpec::Dense { input: n_in, output } => {
                if input != [*n_in] {
                    return Err(format!("dense expects [{n_in}], got {input:?}"));
                }
                Ok(vec![*output])
            }
            LayerSpec::Conv2D {
                in_ch,
                out_ch,
                kernel,
                stride,
                pad,
            } => {
                let [c, h, w] = spatial(input)?;
                if c != *in_ch {
                    return Err(format!("conv2d expects {in_ch} channels, got {c}"));
                }
                if *stride == 0 || *kernel == 0 {
                    return Err("conv2d kernel and stride must be positive".into());
                }
                if h + 2 * pad < *kernel || w + 2 * pad < *kernel {
                    return Err(format!("conv2d kernel {kernel} larger than padded input {h}x{w}"));
                }
                Ok(vec![
                    *out_ch,
                    (h + 2 * pad - kernel) / stride + 1,
                    (w + 2 * pad - kernel) / stride + 1,
                ])
            }
            LayerSpec::ConvTranspose2D {
                in_ch,
                out_ch,
                kernel,
                stride,
                pad,
            } => {
                let [c, h, w] = spatial(input)?;
                if c != *in_ch {
                    return Err(format!("conv_transpose2d expects {in_ch} channels, got {c}"));
                }
                if *stride == 0 || *kernel == 0 || h == 0 || w == 0 {
                    return Err("conv_transpose2d needs positive kernel, stride and input".into());
                }
                let oh = (h - 1) * stride + kernel;
                let ow = (w - 1) * stride + kernel;
                if oh <= 2 * pad || ow <= 2 * pad {
                    return Err(format!("conv_transpose2d padding {pad} consumes the output"));
                }
                Ok(vec![*out_ch, oh - 2 * pad, ow - 2 * pad])
            }
            LayerSpec::LeakyReLU { .. }
            | LayerSpec::ReLU
            | LayerSpec::Tanh
            | LayerSpec::Sigmoid => Ok(input.to_vec()),
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::Reshape { shape } => {
                let a: usize = input.iter().product();
                let b: usize = shape.iter().product();
                if a != b {
                    return Err(format!("cannot reshape {input:?} into {shape:?}"));
                }
                Ok(shape.clone())
            }
        }
    }

    /// Parameter tensor shapes (weights first, then bias).
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        match self {
            LayerSpec::Dense { input, output } => vec![vec![*output, *input], vec![*output]],
            LayerSpec::Conv2D {
                in_ch,
                out_ch,
                kernel,
                ..
            } => vec![vec![*out_ch, *in_ch, *kernel, *kernel], vec![*out_ch]],
            LayerSpec::ConvTranspose2D {
                in_ch,
                out_ch,
                kernel,
                ..
            } => vec![vec![*in_ch, *out_ch, *kernel, *kernel], vec![*out_ch]],
            _ => Vec::new(),
        }
    }

    /// `(fan_in, fan_out)` for weight initialization.
    pub(crate) fn fans(&self) -> Option<(usize, usize)> {
        match self {
            LayerSpec::Dense { input, output } => Some((*input, *output)),
            LayerSpec::Conv2D {
                in_ch,
                out_ch,
                kernel,
                ..
            }
            | LayerSpec::ConvTranspose2D {
                in_ch,
                out_ch,
                kernel,
                ..
            } => Some((in_ch * kernel * kernel, out_ch * kernel * kernel)),
            _ => None,
        }
    }
}

fn spatial(input: &[usize]) -> std::result::Result<[usize; 3], String> {
    match input {
        [c, h, w] => Ok([*c, *h, *w]),
        _ => Err(format!("expected [channels, height, width], got {input:?}")),
    }
}

/// Gradients produced by one layer's backward rule.
pub(crate) struct LayerGrads<T> {
    pub input: Tensor<T>,
    pub params: Vec<Tensor<T>>,
}

pub(crate) fn forward<T: Real>(
    spec: &LayerSpec,
    out_shape: &[usize],
    params: &[Tensor<T>],
    x: &Tensor<T>,
) -> Tensor<T> {
    let batch = x.batch();
    let mut full_shape = Vec::with_capacity(out_shape.len() + 1);
    full_shape.push(batch);
    full_shape.extend_from_slice(out_shape);
    match spec {
        LayerSpec::Dense { input, output } => {
            let (w, b) = (params[0].data(), params[1].data());
            let mut y = Tensor::zeros(&full_shape);
            for (xr, yr) in x
                .data()
                .chunks_exact(*input)
                .zip(y.data_mut().chunks_exact_mut(*output))
            {
                for (o, yo) in yr.iter_mut().enumerate() {
                    *yo = b[o] + dot(&w[o * input..(o + 1) * input], xr);
                }
            }
            y
        }
        LayerSpec::Conv2D {
            in_ch,
            out_ch,
            kernel,
            stride,
            pad,
        } => {
            let (h, w) = (x.shape()[2], x.shape()[3]);
            let (oh, ow) = (out_shape[1], out_shape[2]);
            let (wt, bias) = (params[0].data(), params[1].data());
            let mut y = Tensor::zeros(&full_shape);
            let xd = x.data();
            let yd = y.data_mut();
            let k = *kernel;
            for b in 0..batch {
                for oc in 0..*out_ch {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let mut s = bias[oc];
                            for ic in 0..*in_ch {
                                for ky in 0..k {
                                    let iy = (oy * stride + ky) as isize - *pad as isize;
                                    if iy < 0 || iy >= h as isize {
                                        continue;
                                    }
                                    for kx in 0..k {
                                        let ix = (ox * stride + kx) as isize - *pad as isize;
                                        if ix < 0 || ix >= w as isize {
                                            continue;
                                        }
                                        s += wt[((oc * in_ch + ic) * k + ky) * k + kx]
                                            * xd[((b * in_ch + ic) * h + iy as usize) * w
                                                + ix as usize];
                                    }
                                }
                            }
                            yd[((b * out_ch + oc) * oh + oy) * ow + ox] = s;
                        }
                    }
                }
            }
            y
        }
        LayerSpec::ConvTranspose2D {
            in_ch,
            out_ch,
            kernel,
            stride,
            pad,
        } => {
            let (h, w) = (x.shape()[2], x.shape()[3]);
            let (oh, ow) = (out_shape[1], out_shape[2]);
            let (wt, bias) = (params[0].data(), params[1].data());
            let mut y = Tensor::zeros(&full_shape);
            let xd = x.data();
            let yd = y.data_mut();
            let k = *kernel;
            for b in 0..batch {
                for oc in 0..*out_ch {
                    let plane = &mut yd[(b * out_ch + oc) * oh * ow..(b * out_ch + oc + 1) * oh * ow];
                    plane.iter_mut().for_each(|v| *v = bias[oc]);
                }
                for ic in 0..*in_ch {
                    for iy in 0..h {
                        for ix in 0..w {
                            let v = xd[((b * in_ch + ic) * h + iy) * w + ix];
                            for oc in 0..*out_ch {
                                for ky in 0..k {
                                    let oy = (iy * stride + ky) as isize - *pad as isize;
                                    if oy < 0 || oy >= oh as isize {
                                        continue;
                                    }
                                    for kx in 0..k {
                                        let ox = (ix * stride + kx) as isize - *pad as isize;
                                        if ox < 0 || ox >= ow as isize {
                                            continue;
                                        }
                                        yd[((b * out_ch + oc) * oh + oy as usize) * ow
                                            + ox as usize] +=
                                            v * wt[((ic * out_ch + oc) * k + ky) * k + kx];
                                    }
                                }
                            }
                        }
                    }
                }
            }
            y
        }
        LayerSpec::LeakyReLU { alpha } => {
            let a = T::from_f64(*alpha);
            map(x, &full_shape, |v| if v > T::zero() { v } else { a * v })
        }
        LayerSpec::ReLU => map(x, &full_shape, |v| v.max(T::zero())),
        LayerSpec::Tanh => map(x, &full_shape, |v| v.tanh()),
        LayerSpec::Sigmoid => map(x, &full_shape, sigmoid),
        LayerSpec::Flatten | LayerSpec::Reshape { .. } => x.clone().reshaped(full_shape),
    }
}

fn map<T: Real>(x: &Tensor<T>, shape: &[usize], f: impl Fn(T) -> T) -> Tensor<T> {
    Tensor::from_vec(shape, x.data().iter().map(|&v| f(v)).collect())
        .expect("elementwise map preserves length")
}

#[inline]
fn sigmoid<T: Real>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

pub(crate) fn backward<T: Real>(
    spec: &LayerSpec,
    params: &[Tensor<T>],
    x: &Tensor<T>,
    y: &Tensor<T>,
    g: &Tensor<T>,
    want_params: bool,
) -> LayerGrads<T> {
    let batch = x.batch();
    match spec {
        LayerSpec::Dense { input, output } => {
            let w = params[0].data();
            let mut dx = Tensor::zeros(x.shape());
            let mut dw = Tensor::zeros(params[0].shape());
            let mut db = Tensor::zeros(params[1].shape());
            for ((xr, gr), dxr) in x
                .data()
                .chunks_exact(*input)
                .zip(g.data().chunks_exact(*output))
                .zip(dx.data_mut().chunks_exact_mut(*input))
            {
                for (o, &go) in gr.iter().enumerate() {
                    if go == T::zero() {
                        continue;
                    }
                    axpy(go, &w[o * input..(o + 1) * input], dxr);
                    if want_params {
                        axpy(go, xr, &mut dw.data_mut()[o * input..(o + 1) * input]);
                        db.data_mut()[o] += go;
                    }
                }
            }
            LayerGrads {
                input: dx,
                params: if want_params { vec![dw, db] } else { Vec::new() },
            }
        }
        LayerSpec::Conv2D {
            in_ch,
            out_ch,
            kernel,
            stride,
            pad,
        } => {
            let (h, w) = (x.shape()[2], x.shape()[3]);
            let (oh, ow) = (g.shape()[2], g.shape()[3]);
            let wt = params[0].data();
            let mut dx = Tensor::zeros(x.shape());
            let mut dw = Tensor::zeros(params[0].shape());
            let mut db = Tensor::zeros(params[1].shape());
            let (xd, gd) = (x.data(), g.data());
            let k = *kernel;
            {
                let dxd = dx.data_mut();
                let dwd = dw.data_mut();
                let dbd = db.data_mut();
                for b in 0..batch {
                    for oc in 0..*out_ch {
                        for oy in 0..oh {
                            for ox in 0..ow {
                                let go = gd[((b * out_ch + oc) * oh + oy) * ow + ox];
                                if go == T::zero() {
                                    continue;
                                }
                                dbd[oc] += go;
                                for ic in 0..*in_ch {
                                    for ky in 0..k {
                                        let iy = (oy * stride + ky) as isize - *pad as isize;
                                        if iy < 0 || iy >= h as isize {
                                            continue;
                                        }
                                        for kx in 0..k {
                                            let ix = (ox * stride + kx) as isize - *pad as isize;
                                            if ix < 0 || ix >= w as isize {
                                                continue;
                                            }
                                            let wi = ((oc * in_ch + ic) * k + ky) * k + kx;
                                            let xi = ((b * in_ch + ic) * h + iy as usize) * w
                                                + ix as usize;
                                            dxd[xi] += go * wt[wi];
                                            dwd[wi] += go * xd[xi];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
            LayerGrads {
                input: dx,
                params: if want_params { vec![dw, db] } else { Vec::new() },
            }
        }
        LayerSpec::ConvTranspose2D {
            in_ch,
            out_ch,
            kernel,
            stride,
            pad,
        } => {
            let (h, w) = (x.shape()[2], x.shape()[3]);
            let (oh, ow) = (g.shape()[2], g.shape()[3]);
            let wt = params[0].data();
            let mut dx = Tensor::zeros(x.shape());
            let mut dw = Tensor::zeros(params[0].shape());
            let mut db = Tensor::zeros(params[1].shape());
            let (xd, gd) = (x.data(), g.data());
            let k = *kernel;
            {
                let dxd = dx.data_mut();
                let dwd = dw.data_mut();
                let dbd = db.data_mut();
                for b in 0..batch {
                    for oc in 0..*out_ch {
                        let plane = &gd[(b * out_ch + oc) * oh * ow..(b * out_ch + oc + 1) * oh * ow];
                        dbd[oc] += plane.iter().copied().sum::<T>();
                    }
                    for ic in 0..*in_ch {
                        for iy in 0..h {
                            for ix in 0..w {
                                let xi = ((b * in_ch + ic) * h + iy) * w + ix;
                                let v = xd[xi];
                                let mut acc = T::zero();
                                for oc in 0..*out_ch {
                                    for ky in 0..k {
                                        let oy = (iy * stride + ky) as isize - *pad as isize;
                                        if oy < 0 || oy >= oh as isize {
                                            continue;
                                        }
                                        for kx in 0..k {
                                            let ox = (ix * stride + kx) as isize - *pad as isize;
                                            if ox < 0 || ox >= ow as isize {
                                                continue;
                                            }
                                            let go = gd[((b * out_ch + oc) * oh + oy as usize) * ow
                                                + ox as usize];
                                            let wi = ((ic * out_ch + oc) * k + ky) * k + kx;
                                            acc += go * wt[wi];
                                            dwd[wi] += go * v;
                                        }
                                    }
                                }
                                dxd[xi] = acc;
                            }
                        }
                    }
                }
            }
            LayerGrads {
                input: dx,
                params: if want_params { vec![dw, db] } else { Vec::new() },
            }
        }
        LayerSpec::LeakyReLU { alpha } => {
            let a = T::from_f64(*alpha);
            zip_map(x, g, |xv, gv| if xv > T::zero() { gv } else { a * gv })
        }
        LayerSpec::ReLU => zip_map(x, g, |xv, gv| if xv > T::zero() { gv } else { T::zero() }),
        LayerSpec::Tanh => zip_map(y, g, |yv, gv| gv * (T::one() - yv * yv)),
        LayerSpec::Sigmoid => zip_map(y, g, |yv, gv| gv * yv * (T::one() - yv)),
        LayerSpec::Flatten | LayerSpec::Reshape { .. } => LayerGrads {
            input: g.clone().reshaped(x.shape().to_vec()),
            params: Vec::new(),
        },
    }
}

fn zip_map<T: Real>(a: &Tensor<T>, g: &Tensor<T>, f: impl Fn(T, T) -> T) -> LayerGrads<T> {
    let data = a.data().iter().zip(g.data()).map(|(&av, &gv)| f(av, gv)).collect();
    LayerGrads {
        input: Tensor::from_vec(a.shape(), data).expect("same length"),
        params: Vec::new(),
    }
}

pub(crate) fn shape_error(layer: usize, message: impl Into<String>) -> Error {
    Error::Shape {
        layer,
        message: message.into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_output_shapes() {
        let conv = LayerSpec::Conv2D {
            in_ch: 4,
            out_ch: 8,
            kernel: 4,
            stride: 2,
            pad: 1,
        };
        assert_eq!(conv.output_shape(&[4, 16, 16]).unwrap(), vec![8, 8, 8]);
        let up = LayerSpec::ConvTranspose2D {
            in_ch: 8,
            out_ch: 1,
            kernel: 4,
            stride: 2,
            pad: 1,
        };
        assert_eq!(up.output_shape(&[8, 20, 20]).unwrap(), vec![1, 40, 40]);
        assert!(conv.output_shape(&[3, 16, 16]).is_err());
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(-1000.0f64), 0.0);
        assert_eq!(sigmoid(1000.0f64), 1.0);
        assert!((sigmoid(0.0f64) - 0.5).abs() < 1e-15);
    }
}
