//! Strided/dilated 1D convolution kernels and their gradients.
//!
//! Convolution is implemented as cross-correlation (no kernel flip), the
//! usual deep-learning convention. The transposed variant is the exact
//! Jacobian-transpose of the forward pass, which the adjoint tests rely on.

use super::{Shape, Tensor, TensorError};

/// Geometry of a 1D convolution.
///
/// `conv1d` weights are `[out_channels, in_channels, kernel_size]`;
/// `conv1d_transpose` weights are `[in_channels, out_channels, kernel_size]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_size: usize,
    pub stride: usize,
    pub dilation: usize,
    pub padding: usize,
}

impl ConvSpec {
    pub fn new(in_channels: usize, out_channels: usize, kernel_size: usize) -> Self {
        ConvSpec { in_channels, out_channels, kernel_size, stride: 1, dilation: 1, padding: 0 }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn with_dilation(mut self, dilation: usize) -> Self {
        self.dilation = dilation;
        self
    }

    pub fn with_padding(mut self, padding: usize) -> Self {
        self.padding = padding;
        self
    }

    pub fn validate(&self) -> Result<(), TensorError> {
        if self.kernel_size < 1 || self.stride < 1 || self.dilation < 1 {
            return Err(TensorError::InvalidArgument {
                op: "conv_spec",
                message: format!(
                    "kernel_size, stride and dilation must be >= 1 (got {}, {}, {})",
                    self.kernel_size, self.stride, self.dilation
                ),
            });
        }
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(TensorError::InvalidArgument {
                op: "conv_spec",
                message: "channel counts must be >= 1".to_string(),
            });
        }
        Ok(())
    }

    /// Span of the dilated kernel in input samples.
    pub fn kernel_extent(&self) -> usize {
        (self.kernel_size - 1) * self.dilation + 1
    }

    /// Output length of `conv1d` for a given input length.
    pub fn output_length(&self, input_length: usize) -> Result<usize, TensorError> {
        let padded = input_length + 2 * self.padding;
        if self.kernel_extent() > padded {
            return Err(TensorError::InvalidArgument {
                op: "conv1d",
                message: format!(
                    "kernel extent {} exceeds padded length {}",
                    self.kernel_extent(),
                    padded
                ),
            });
        }
        Ok((padded - self.kernel_extent()) / self.stride + 1)
    }

    /// Output length of `conv1d_transpose` for a given input length.
    pub fn transpose_output_length(&self, input_length: usize) -> Result<usize, TensorError> {
        let full = (input_length - 1) * self.stride + self.kernel_extent();
        if full < 2 * self.padding + 1 {
            return Err(TensorError::InvalidArgument {
                op: "conv1d_transpose",
                message: format!("padding {} swallows the whole output", self.padding),
            });
        }
        Ok(full - 2 * self.padding)
    }
}

fn check_weight(
    op: &'static str,
    weight: &Tensor,
    dim0: usize,
    dim1: usize,
    k: usize,
) -> Result<(), TensorError> {
    let ws = weight.shape();
    if ws.batch != dim0 {
        return Err(TensorError::DimensionMismatch {
            op,
            dimension: "weight dim 0",
            expected: dim0,
            got: ws.batch,
        });
    }
    if ws.channels != dim1 {
        return Err(TensorError::DimensionMismatch {
            op,
            dimension: "weight dim 1",
            expected: dim1,
            got: ws.channels,
        });
    }
    if ws.length != k {
        return Err(TensorError::DimensionMismatch {
            op,
            dimension: "weight kernel",
            expected: k,
            got: ws.length,
        });
    }
    Ok(())
}

fn check_bias(op: &'static str, bias: &Tensor, out_channels: usize) -> Result<(), TensorError> {
    let bs = bias.shape();
    if bs.batch != 1 || bs.channels != out_channels || bs.length != 1 {
        return Err(TensorError::DimensionMismatch {
            op,
            dimension: "bias channels",
            expected: out_channels,
            got: bs.numel(),
        });
    }
    Ok(())
}

fn check_finite(op: &'static str, tensors: &[&Tensor]) -> Result<(), TensorError> {
    for t in tensors {
        if !t.is_finite() {
            return Err(TensorError::NonFinite { op });
        }
    }
    Ok(())
}

/// Copies one batch item into a zero-padded `[channels, length + 2 pad]` buffer.
fn pad_batch_item(x: &Tensor, b: usize, padding: usize, out: &mut [f64]) {
    let s = x.shape();
    let plen = s.length + 2 * padding;
    for c in 0..s.channels {
        let src = &x.data()[s.index(b, c, 0)..s.index(b, c, 0) + s.length];
        let dst = &mut out[c * plen + padding..c * plen + padding + s.length];
        dst.copy_from_slice(src);
    }
}

pub(crate) fn conv1d_forward(
    x: &Tensor,
    weight: &Tensor,
    bias: &Tensor,
    spec: &ConvSpec,
) -> Result<Tensor, TensorError> {
    spec.validate()?;
    let s = x.shape();
    if s.channels != spec.in_channels {
        return Err(TensorError::DimensionMismatch {
            op: "conv1d",
            dimension: "input channels",
            expected: spec.in_channels,
            got: s.channels,
        });
    }
    check_weight("conv1d", weight, spec.out_channels, spec.in_channels, spec.kernel_size)?;
    check_bias("conv1d", bias, spec.out_channels)?;
    check_finite("conv1d", &[x, weight, bias])?;

    let out_len = spec.output_length(s.length)?;
    let out_shape = Shape::new(s.batch, spec.out_channels, out_len);
    let mut out = vec![0.0; out_shape.numel()];

    let plen = s.length + 2 * spec.padding;
    let mut xpad = vec![0.0; spec.in_channels * plen];
    let w = weight.data();
    let bvals = bias.data();

    for b in 0..s.batch {
        pad_batch_item(x, b, spec.padding, &mut xpad);
        for oc in 0..spec.out_channels {
            let row = &mut out[out_shape.index(b, oc, 0)..out_shape.index(b, oc, 0) + out_len];
            row.fill(bvals[oc]);
            for ic in 0..spec.in_channels {
                let xrow = &xpad[ic * plen..(ic + 1) * plen];
                for t in 0..spec.kernel_size {
                    let wv = w[(oc * spec.in_channels + ic) * spec.kernel_size + t];
                    let base = t * spec.dilation;
                    for (j, r) in row.iter_mut().enumerate() {
                        *r += wv * xrow[base + j * spec.stride];
                    }
                }
            }
        }
    }
    Tensor::from_vec(out_shape, out)
}

/// Gradients of `conv1d` w.r.t. input, weight and bias.
pub(crate) fn conv1d_backward(
    x: &Tensor,
    weight: &Tensor,
    spec: &ConvSpec,
    grad_out: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let s = x.shape();
    let out_len = spec.output_length(s.length).expect("shape already validated in forward");
    let out_shape = Shape::new(s.batch, spec.out_channels, out_len);

    let plen = s.length + 2 * spec.padding;
    let mut xpad = vec![0.0; spec.in_channels * plen];
    let mut gxpad = vec![0.0; spec.in_channels * plen];

    let mut gx = vec![0.0; s.numel()];
    let mut gw = vec![0.0; weight.shape().numel()];
    let mut gb = vec![0.0; spec.out_channels];
    let w = weight.data();

    for b in 0..s.batch {
        pad_batch_item(x, b, spec.padding, &mut xpad);
        gxpad.fill(0.0);
        for oc in 0..spec.out_channels {
            let grow = &grad_out[out_shape.index(b, oc, 0)..out_shape.index(b, oc, 0) + out_len];
            gb[oc] += grow.iter().sum::<f64>();
            for ic in 0..spec.in_channels {
                let xrow = &xpad[ic * plen..(ic + 1) * plen];
                let gxrow = &mut gxpad[ic * plen..(ic + 1) * plen];
                for t in 0..spec.kernel_size {
                    let widx = (oc * spec.in_channels + ic) * spec.kernel_size + t;
                    let wv = w[widx];
                    let base = t * spec.dilation;
                    let mut acc = 0.0;
                    for (j, g) in grow.iter().enumerate() {
                        let pos = base + j * spec.stride;
                        acc += g * xrow[pos];
                        gxrow[pos] += wv * g;
                    }
                    gw[widx] += acc;
                }
            }
        }
        // crop padding back off
        for ic in 0..spec.in_channels {
            let dst = &mut gx[s.index(b, ic, 0)..s.index(b, ic, 0) + s.length];
            let src = &gxpad[ic * plen + spec.padding..ic * plen + spec.padding + s.length];
            for (d, v) in dst.iter_mut().zip(src) {
                *d += v;
            }
        }
    }
    (gx, gw, gb)
}

pub(crate) fn conv_transpose1d_forward(
    x: &Tensor,
    weight: &Tensor,
    bias: &Tensor,
    spec: &ConvSpec,
) -> Result<Tensor, TensorError> {
    spec.validate()?;
    let s = x.shape();
    if s.channels != spec.in_channels {
        return Err(TensorError::DimensionMismatch {
            op: "conv1d_transpose",
            dimension: "input channels",
            expected: spec.in_channels,
            got: s.channels,
        });
    }
    check_weight("conv1d_transpose", weight, spec.in_channels, spec.out_channels, spec.kernel_size)?;
    check_bias("conv1d_transpose", bias, spec.out_channels)?;
    check_finite("conv1d_transpose", &[x, weight, bias])?;

    let out_len = spec.transpose_output_length(s.length)?;
    let full_len = (s.length - 1) * spec.stride + spec.kernel_extent();
    let out_shape = Shape::new(s.batch, spec.out_channels, out_len);
    let mut out = vec![0.0; out_shape.numel()];
    let mut ypad = vec![0.0; spec.out_channels * full_len];
    let w = weight.data();
    let bvals = bias.data();

    for b in 0..s.batch {
        ypad.fill(0.0);
        for ic in 0..spec.in_channels {
            let xrow = &x.data()[s.index(b, ic, 0)..s.index(b, ic, 0) + s.length];
            for oc in 0..spec.out_channels {
                let yrow = &mut ypad[oc * full_len..(oc + 1) * full_len];
                for t in 0..spec.kernel_size {
                    let wv = w[(ic * spec.out_channels + oc) * spec.kernel_size + t];
                    let base = t * spec.dilation;
                    for (j, xv) in xrow.iter().enumerate() {
                        yrow[base + j * spec.stride] += wv * xv;
                    }
                }
            }
        }
        for oc in 0..spec.out_channels {
            let dst = &mut out[out_shape.index(b, oc, 0)..out_shape.index(b, oc, 0) + out_len];
            let src = &ypad[oc * full_len + spec.padding..oc * full_len + spec.padding + out_len];
            for (d, v) in dst.iter_mut().zip(src) {
                *d = v + bvals[oc];
            }
        }
    }
    Tensor::from_vec(out_shape, out)
}

/// Gradients of `conv1d_transpose` w.r.t. input, weight and bias.
pub(crate) fn conv_transpose1d_backward(
    x: &Tensor,
    weight: &Tensor,
    spec: &ConvSpec,
    grad_out: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let s = x.shape();
    let out_len = spec.transpose_output_length(s.length).expect("validated in forward");
    let full_len = (s.length - 1) * spec.stride + spec.kernel_extent();
    let out_shape = Shape::new(s.batch, spec.out_channels, out_len);

    let mut gx = vec![0.0; s.numel()];
    let mut gw = vec![0.0; weight.shape().numel()];
    let mut gb = vec![0.0; spec.out_channels];
    let w = weight.data();

    // Upstream gradient re-padded to the pre-crop length.
    let mut gpad = vec![0.0; spec.out_channels * full_len];
    for b in 0..s.batch {
        gpad.fill(0.0);
        for oc in 0..spec.out_channels {
            let grow = &grad_out[out_shape.index(b, oc, 0)..out_shape.index(b, oc, 0) + out_len];
            gb[oc] += grow.iter().sum::<f64>();
            gpad[oc * full_len + spec.padding..oc * full_len + spec.padding + out_len]
                .copy_from_slice(grow);
        }
        for ic in 0..spec.in_channels {
            let xrow = &x.data()[s.index(b, ic, 0)..s.index(b, ic, 0) + s.length];
            let gxrow = &mut gx[s.index(b, ic, 0)..s.index(b, ic, 0) + s.length];
            for oc in 0..spec.out_channels {
                let gprow = &gpad[oc * full_len..(oc + 1) * full_len];
                for t in 0..spec.kernel_size {
                    let widx = (ic * spec.out_channels + oc) * spec.kernel_size + t;
                    let wv = w[widx];
                    let base = t * spec.dilation;
                    let mut acc = 0.0;
                    for j in 0..s.length {
                        let g = gprow[base + j * spec.stride];
                        gxrow[j] += wv * g;
                        acc += xrow[j] * g;
                    }
                    gw[widx] += acc;
                }
            }
        }
    }
    (gx, gw, gb)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_length_matches_formula() {
        // 2048 -> 1024 for the k=4, s=2, p=1 downsampling step.
        let spec = ConvSpec::new(1, 1, 4).with_stride(2).with_padding(1);
        assert_eq!(spec.output_length(2048).unwrap(), 1024);
        // and the transposed step restores it
        assert_eq!(spec.transpose_output_length(1024).unwrap(), 2048);
    }

    #[test]
    fn identity_kernel_is_identity() {
        let spec = ConvSpec::new(1, 1, 1);
        let x = Tensor::filled(Shape::new(1, 1, 8), 1.0);
        let w = Tensor::filled(Shape::new(1, 1, 1), 1.0);
        let b = Tensor::zeros(Shape::new(1, 1, 1));
        let y = conv1d_forward(&x, &w, &b, &spec).unwrap();
        assert_eq!(y.data(), x.data());
        let yt = conv_transpose1d_forward(&x, &w, &b, &spec).unwrap();
        assert_eq!(yt.data(), x.data());
    }

    #[test]
    fn kernel_larger_than_input_rejected() {
        let spec = ConvSpec::new(1, 1, 8);
        let x = Tensor::zeros(Shape::new(1, 1, 4));
        let w = Tensor::zeros(Shape::new(1, 1, 8));
        let b = Tensor::zeros(Shape::new(1, 1, 1));
        assert!(conv1d_forward(&x, &w, &b, &spec).is_err());
    }

    #[test]
    fn non_finite_input_rejected() {
        let spec = ConvSpec::new(1, 1, 1);
        let mut x = Tensor::zeros(Shape::new(1, 1, 4));
        x.data_mut()[1] = f64::INFINITY;
        let w = Tensor::filled(Shape::new(1, 1, 1), 1.0);
        let b = Tensor::zeros(Shape::new(1, 1, 1));
        assert_eq!(
            conv1d_forward(&x, &w, &b, &spec).unwrap_err(),
            TensorError::NonFinite { op: "conv1d" }
        );
    }

    #[test]
    fn channel_mismatch_names_dimension() {
        let spec = ConvSpec::new(2, 1, 1);
        let x = Tensor::zeros(Shape::new(1, 3, 4));
        let w = Tensor::zeros(Shape::new(1, 2, 1));
        let b = Tensor::zeros(Shape::new(1, 1, 1));
        match conv1d_forward(&x, &w, &b, &spec).unwrap_err() {
            TensorError::DimensionMismatch { dimension, expected, got, .. } => {
                assert_eq!(dimension, "input channels");
                assert_eq!((expected, got), (2, 3));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }
}
