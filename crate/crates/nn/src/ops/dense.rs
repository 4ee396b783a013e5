use crate::error::{NnError, Result};
use crate::gemm::{gemm, Layout};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

impl Tape {
    /// Affine map `x·W + b` for `x: [batch × in]`, `W: [in × out]`, `b: [out]`.
    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (vx, vw, vb) = (self.value(x), self.value(w), self.value(b));
        if vx.ndim() != 2 || vw.ndim() != 2 || vx.shape()[1] != vw.shape()[0] {
            return Err(NnError::shape("dense", vx.shape(), vw.shape()));
        }
        let (batch, fan_in, fan_out) = (vx.shape()[0], vw.shape()[0], vw.shape()[1]);
        if vb.shape() != [fan_out] {
            return Err(NnError::shape("dense bias", vb.shape(), &[fan_out]));
        }
        let mut out = Vec::with_capacity(batch * fan_out);
        for _ in 0..batch {
            out.extend_from_slice(vb.data());
        }
        gemm(batch, fan_in, fan_out, vx.data(), Layout::Normal, vw.data(), Layout::Normal, 1.0, &mut out);
        let out = Tensor::new(&[batch, fan_out], out)?;
        self.push(
            "dense",
            out,
            &[x, w, b],
            Box::new(move |g, p, needs| {
                let (x, w) = (p[0], p[1]);
                let gx = needs[0].then(|| {
                    let mut gx = vec![0.0; batch * fan_in];
                    gemm(batch, fan_out, fan_in, g.data(), Layout::Normal, w.data(), Layout::Transposed, 0.0, &mut gx);
                    Tensor::new(&[batch, fan_in], gx).unwrap()
                });
                let gw = needs[1].then(|| {
                    let mut gw = vec![0.0; fan_in * fan_out];
                    gemm(fan_in, batch, fan_out, x.data(), Layout::Transposed, g.data(), Layout::Normal, 0.0, &mut gw);
                    Tensor::new(&[fan_in, fan_out], gw).unwrap()
                });
                let gb = needs[2].then(|| {
                    let mut gb = vec![0.0; fan_out];
                    for row in g.data().chunks(fan_out) {
                        for (a, v) in gb.iter_mut().zip(row) {
                            *a += v;
                        }
                    }
                    Tensor::new(&[fan_out], gb).unwrap()
                });
                vec![gx, gw, gb]
            }),
        )
    }
}
