use crate::error::{NnError, Result};
use crate::gemm::{gemm, Layout};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Output length of a strided "same" 1-D convolution.
pub fn conv1d_output_len(len: usize, stride: usize) -> usize {
    len.div_ceil(stride)
}

/// Index mapping shared by `conv1d` and its transpose: output position `t`
/// reads input positions `t·stride + j − pad_left` for `j` in `0..kernel`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv1dGeometry {
    pub len_in: usize,
    pub len_out: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad_left: usize,
}

impl Conv1dGeometry {
    pub fn new(len_in: usize, kernel: usize, stride: usize) -> Self {
        let len_out = conv1d_output_len(len_in, stride);
        let needed = (len_out - 1) * stride + kernel;
        let pad_total = needed.saturating_sub(len_in);
        Conv1dGeometry {
            len_in,
            len_out,
            kernel,
            stride,
            pad_left: pad_total / 2,
        }
    }

    #[inline]
    fn source(&self, t: usize, j: usize) -> Option<usize> {
        let pos = (t * self.stride + j).checked_sub(self.pad_left)?;
        (pos < self.len_in).then_some(pos)
    }

    /// `[ch × len_in] → [ch·kernel × len_out]`
    fn im2col(&self, channels: usize, x: &[f64]) -> Vec<f64> {
        let mut cols = vec![0.0; channels * self.kernel * self.len_out];
        for c in 0..channels {
            let src = &x[c * self.len_in..(c + 1) * self.len_in];
            for j in 0..self.kernel {
                let row = &mut cols[(c * self.kernel + j) * self.len_out..][..self.len_out];
                for (t, slot) in row.iter_mut().enumerate() {
                    if let Some(p) = self.source(t, j) {
                        *slot = src[p];
                    }
                }
            }
        }
        cols
    }

    /// Adjoint of [`im2col`](Self::im2col): scatter-adds columns back.
    fn col2im(&self, channels: usize, cols: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; channels * self.len_in];
        for c in 0..channels {
            let dst = &mut x[c * self.len_in..(c + 1) * self.len_in];
            for j in 0..self.kernel {
                let row = &cols[(c * self.kernel + j) * self.len_out..][..self.len_out];
                for (t, v) in row.iter().enumerate() {
                    if let Some(p) = self.source(t, j) {
                        dst[p] += v;
                    }
                }
            }
        }
        x
    }
}

#[derive(Clone, Copy)]
struct Conv2dGeometry {
    channels: usize,
    height: usize,
    width: usize,
    kh: usize,
    kw: usize,
    pad_top: usize,
    pad_left: usize,
}

impl Conv2dGeometry {
    fn positions(&self) -> usize {
        self.height * self.width
    }

    fn rows(&self) -> usize {
        self.channels * self.kh * self.kw
    }

    #[inline]
    fn source(&self, out: usize, k: usize, pad: usize, limit: usize) -> Option<usize> {
        let pos = (out + k).checked_sub(pad)?;
        (pos < limit).then_some(pos)
    }

    /// `[ch × H × W] → [ch·kh·kw × H·W]`
    fn im2col(&self, x: &[f64]) -> Vec<f64> {
        let (h, w) = (self.height, self.width);
        let mut cols = vec![0.0; self.rows() * self.positions()];
        for c in 0..self.channels {
            let plane = &x[c * h * w..(c + 1) * h * w];
            for i in 0..self.kh {
                for j in 0..self.kw {
                    let row = ((c * self.kh + i) * self.kw + j) * h * w;
                    for oh in 0..h {
                        let Some(sh) = self.source(oh, i, self.pad_top, h) else { continue };
                        for ow in 0..w {
                            if let Some(sw) = self.source(ow, j, self.pad_left, w) {
                                cols[row + oh * w + ow] = plane[sh * w + sw];
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, cols: &[f64]) -> Vec<f64> {
        let (h, w) = (self.height, self.width);
        let mut x = vec![0.0; self.channels * h * w];
        for c in 0..self.channels {
            let plane = &mut x[c * h * w..(c + 1) * h * w];
            for i in 0..self.kh {
                for j in 0..self.kw {
                    let row = ((c * self.kh + i) * self.kw + j) * h * w;
                    for oh in 0..h {
                        let Some(sh) = self.source(oh, i, self.pad_top, h) else { continue };
                        for ow in 0..w {
                            if let Some(sw) = self.source(ow, j, self.pad_left, w) {
                                plane[sh * w + sw] += cols[row + oh * w + ow];
                            }
                        }
                    }
                }
            }
        }
        x
    }
}

fn add_channel_bias(out: &mut [f64], bias: &[f64], per_channel: usize) {
    for (c, b) in bias.iter().enumerate() {
        for v in &mut out[c * per_channel..(c + 1) * per_channel] {
            *v += b;
        }
    }
}

fn channel_bias_grad(g: &Tensor, batch: usize, channels: usize, per_channel: usize) -> Tensor {
    let mut gb = vec![0.0; channels];
    for n in 0..batch {
        for (c, acc) in gb.iter_mut().enumerate() {
            let start = (n * channels + c) * per_channel;
            *acc += g.data()[start..start + per_channel].iter().sum::<f64>();
        }
    }
    Tensor::new(&[channels], gb).unwrap()
}

impl Tape {
    /// Zero-padded "same" 2-D cross-correlation. Even kernels put the extra
    /// padding row/column on the trailing side.
    ///
    /// `x: [batch × ch_in × H × W]`, `k: [ch_out × ch_in × kh × kw]`, `b: [ch_out]`.
    pub fn conv2d_same(&mut self, x: Var, k: Var, b: Var) -> Result<Var> {
        let (vx, vk, vb) = (self.value(x), self.value(k), self.value(b));
        if vx.ndim() != 4 || vk.ndim() != 4 || vx.shape()[1] != vk.shape()[1] {
            return Err(NnError::shape("conv2d_same", vx.shape(), vk.shape()));
        }
        let [batch, ch_in, height, width] = [vx.shape()[0], vx.shape()[1], vx.shape()[2], vx.shape()[3]];
        let [ch_out, _, kh, kw] = [vk.shape()[0], vk.shape()[1], vk.shape()[2], vk.shape()[3]];
        if vb.shape() != [ch_out] {
            return Err(NnError::shape("conv2d_same bias", vb.shape(), &[ch_out]));
        }
        if kh > 2 * height || kw > 2 * width || kh == 0 || kw == 0 {
            return Err(NnError::invalid(
                "conv2d_same",
                format!("kernel {kh}×{kw} too large for input {height}×{width}"),
            ));
        }
        let geo = Conv2dGeometry {
            channels: ch_in,
            height,
            width,
            kh,
            kw,
            pad_top: (kh - 1) / 2,
            pad_left: (kw - 1) / 2,
        };
        let (positions, rows) = (geo.positions(), geo.rows());
        let in_size = ch_in * positions;
        let out_size = ch_out * positions;
        let mut out = vec![0.0; batch * out_size];
        for n in 0..batch {
            let cols = geo.im2col(&vx.data()[n * in_size..(n + 1) * in_size]);
            let dst = &mut out[n * out_size..(n + 1) * out_size];
            gemm(ch_out, rows, positions, vk.data(), Layout::Normal, &cols, Layout::Normal, 0.0, dst);
            add_channel_bias(dst, vb.data(), positions);
        }
        let out = Tensor::new(&[batch, ch_out, height, width], out)?;
        self.push(
            "conv2d_same",
            out,
            &[x, k, b],
            Box::new(move |g, p, needs| {
                let (x, k) = (p[0], p[1]);
                let mut gx = needs[0].then(|| vec![0.0; batch * in_size]);
                let mut gk = needs[1].then(|| vec![0.0; ch_out * rows]);
                for n in 0..batch {
                    let gout = &g.data()[n * out_size..(n + 1) * out_size];
                    if let Some(gk) = gk.as_mut() {
                        let cols = geo.im2col(&x.data()[n * in_size..(n + 1) * in_size]);
                        gemm(ch_out, positions, rows, gout, Layout::Normal, &cols, Layout::Transposed, 1.0, gk);
                    }
                    if let Some(gx) = gx.as_mut() {
                        let mut gcols = vec![0.0; rows * positions];
                        gemm(rows, ch_out, positions, k.data(), Layout::Transposed, gout, Layout::Normal, 0.0, &mut gcols);
                        gx[n * in_size..(n + 1) * in_size].copy_from_slice(&geo.col2im(&gcols));
                    }
                }
                vec![
                    gx.map(|d| Tensor::new(x.shape(), d).unwrap()),
                    gk.map(|d| Tensor::new(k.shape(), d).unwrap()),
                    needs[2].then(|| channel_bias_grad(g, batch, ch_out, positions)),
                ]
            }),
        )
    }

    /// Non-overlapping max pooling; trailing rows/columns that do not fill a
    /// window are dropped. Gradient flows to the first maximal element.
    pub fn maxpool2d(&mut self, x: Var, kh: usize, kw: usize) -> Result<Var> {
        let vx = self.value(x);
        if vx.ndim() != 4 {
            return Err(NnError::invalid("maxpool2d", format!("rank-4 input required, got {:?}", vx.shape())));
        }
        let [batch, ch, height, width] = [vx.shape()[0], vx.shape()[1], vx.shape()[2], vx.shape()[3]];
        if kh == 0 || kw == 0 || kh > height || kw > width {
            return Err(NnError::invalid(
                "maxpool2d",
                format!("pool {kh}×{kw} larger than input {height}×{width}"),
            ));
        }
        let (oh, ow) = (height / kh, width / kw);
        let planes = batch * ch;
        let mut out = Vec::with_capacity(planes * oh * ow);
        let mut argmax = Vec::with_capacity(planes * oh * ow);
        for plane in 0..planes {
            let base = plane * height * width;
            for i in 0..oh {
                for j in 0..ow {
                    let mut best = base + i * kh * width + j * kw;
                    for di in 0..kh {
                        for dj in 0..kw {
                            let idx = base + (i * kh + di) * width + j * kw + dj;
                            if vx.data()[idx] > vx.data()[best] {
                                best = idx;
                            }
                        }
                    }
                    out.push(vx.data()[best]);
                    argmax.push(best);
                }
            }
        }
        let in_shape = vx.shape().to_vec();
        let out = Tensor::new(&[batch, ch, oh, ow], out)?;
        self.push(
            "maxpool2d",
            out,
            &[x],
            Box::new(move |g, _, _| {
                let mut gx = Tensor::zeros(&in_shape);
                for (&idx, v) in argmax.iter().zip(g.data()) {
                    gx.data_mut()[idx] += v;
                }
                vec![Some(gx)]
            }),
        )
    }

    /// Strided 1-D cross-correlation with "same" zero padding, so the output
    /// length is `ceil(T / stride)`.
    ///
    /// `x: [batch × ch_in × T]`, `k: [ch_out × ch_in × kt]`, optional `b: [ch_out]`.
    pub fn conv1d(&mut self, x: Var, k: Var, b: Option<Var>, stride: usize) -> Result<Var> {
        let (vx, vk) = (self.value(x), self.value(k));
        if vx.ndim() != 3 || vk.ndim() != 3 || vx.shape()[1] != vk.shape()[1] || stride == 0 {
            return Err(NnError::shape("conv1d", vx.shape(), vk.shape()));
        }
        let [batch, ch_in, len] = [vx.shape()[0], vx.shape()[1], vx.shape()[2]];
        let [ch_out, _, kernel] = [vk.shape()[0], vk.shape()[1], vk.shape()[2]];
        if len == 0 || kernel == 0 || kernel > 2 * len {
            return Err(NnError::invalid("conv1d", format!("kernel {kernel} too large for sequence length {len}")));
        }
        if let Some(b) = b {
            if self.shape(b) != [ch_out] {
                return Err(NnError::shape("conv1d bias", self.shape(b), &[ch_out]));
            }
        }
        let geo = Conv1dGeometry::new(len, kernel, stride);
        let rows = ch_in * kernel;
        let (in_size, out_size) = (ch_in * len, ch_out * geo.len_out);
        let mut out = vec![0.0; batch * out_size];
        for n in 0..batch {
            let cols = geo.im2col(ch_in, &vx.data()[n * in_size..(n + 1) * in_size]);
            let dst = &mut out[n * out_size..(n + 1) * out_size];
            gemm(ch_out, rows, geo.len_out, vk.data(), Layout::Normal, &cols, Layout::Normal, 0.0, dst);
            if let Some(b) = b {
                add_channel_bias(dst, self.value(b).data(), geo.len_out);
            }
        }
        let out = Tensor::new(&[batch, ch_out, geo.len_out], out)?;
        let parents: Vec<Var> = [x, k].into_iter().chain(b).collect();
        self.push(
            "conv1d",
            out,
            &parents,
            Box::new(move |g, p, needs| {
                let (x, k) = (p[0], p[1]);
                let mut gx = needs[0].then(|| vec![0.0; batch * in_size]);
                let mut gk = needs[1].then(|| vec![0.0; ch_out * rows]);
                for n in 0..batch {
                    let gout = &g.data()[n * out_size..(n + 1) * out_size];
                    if let Some(gk) = gk.as_mut() {
                        let cols = geo.im2col(ch_in, &x.data()[n * in_size..(n + 1) * in_size]);
                        gemm(ch_out, geo.len_out, rows, gout, Layout::Normal, &cols, Layout::Transposed, 1.0, gk);
                    }
                    if let Some(gx) = gx.as_mut() {
                        let mut gcols = vec![0.0; rows * geo.len_out];
                        gemm(rows, ch_out, geo.len_out, k.data(), Layout::Transposed, gout, Layout::Normal, 0.0, &mut gcols);
                        gx[n * in_size..(n + 1) * in_size].copy_from_slice(&geo.col2im(ch_in, &gcols));
                    }
                }
                let mut grads = vec![
                    gx.map(|d| Tensor::new(x.shape(), d).unwrap()),
                    gk.map(|d| Tensor::new(k.shape(), d).unwrap()),
                ];
                if p.len() == 3 {
                    grads.push(needs[2].then(|| channel_bias_grad(g, batch, ch_out, geo.len_out)));
                }
                grads
            }),
        )
    }

    /// Transposed 1-D convolution producing exactly `stride·T` samples; the
    /// exact adjoint of [`Tape::conv1d`] on an input of that length.
    ///
    /// `x: [batch × ch_in × T]`, `k: [ch_in × ch_out × kt]`, optional `b: [ch_out]`.
    pub fn conv1d_transpose(&mut self, x: Var, k: Var, b: Option<Var>, stride: usize) -> Result<Var> {
        let (vx, vk) = (self.value(x), self.value(k));
        if vx.ndim() != 3 || vk.ndim() != 3 || vx.shape()[1] != vk.shape()[0] || stride == 0 || vk.shape()[2] == 0 {
            return Err(NnError::shape("conv1d_transpose", vx.shape(), vk.shape()));
        }
        let [batch, ch_in, len] = [vx.shape()[0], vx.shape()[1], vx.shape()[2]];
        let [_, ch_out, kernel] = [vk.shape()[0], vk.shape()[1], vk.shape()[2]];
        if let Some(b) = b {
            if self.shape(b) != [ch_out] {
                return Err(NnError::shape("conv1d_transpose bias", self.shape(b), &[ch_out]));
            }
        }
        let geo = Conv1dGeometry::new(stride * len, kernel, stride);
        debug_assert_eq!(geo.len_out, len);
        let rows = ch_out * kernel;
        let (in_size, out_size) = (ch_in * len, ch_out * geo.len_in);
        let mut out = vec![0.0; batch * out_size];
        for n in 0..batch {
            let mut cols = vec![0.0; rows * len];
            gemm(rows, ch_in, len, vk.data(), Layout::Transposed, &vx.data()[n * in_size..(n + 1) * in_size], Layout::Normal, 0.0, &mut cols);
            let dst = &mut out[n * out_size..(n + 1) * out_size];
            dst.copy_from_slice(&geo.col2im(ch_out, &cols));
            if let Some(b) = b {
                add_channel_bias(dst, self.value(b).data(), geo.len_in);
            }
        }
        let out = Tensor::new(&[batch, ch_out, geo.len_in], out)?;
        let parents: Vec<Var> = [x, k].into_iter().chain(b).collect();
        self.push(
            "conv1d_transpose",
            out,
            &parents,
            Box::new(move |g, p, needs| {
                let (x, k) = (p[0], p[1]);
                let mut gx = needs[0].then(|| vec![0.0; batch * in_size]);
                let mut gk = needs[1].then(|| vec![0.0; ch_in * rows]);
                for n in 0..batch {
                    let gcols = geo.im2col(ch_out, &g.data()[n * out_size..(n + 1) * out_size]);
                    if let Some(gx) = gx.as_mut() {
                        gemm(ch_in, rows, len, k.data(), Layout::Normal, &gcols, Layout::Normal, 0.0, &mut gx[n * in_size..(n + 1) * in_size]);
                    }
                    if let Some(gk) = gk.as_mut() {
                        gemm(ch_in, len, rows, &x.data()[n * in_size..(n + 1) * in_size], Layout::Normal, &gcols, Layout::Transposed, 1.0, gk);
                    }
                }
                let mut grads = vec![
                    gx.map(|d| Tensor::new(x.shape(), d).unwrap()),
                    gk.map(|d| Tensor::new(k.shape(), d).unwrap()),
                ];
                if p.len() == 3 {
                    grads.push(needs[2].then(|| channel_bias_grad(g, batch, ch_out, geo.len_in)));
                }
                grads
            }),
        )
    }
}
