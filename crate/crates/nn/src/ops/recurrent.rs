use crate::error::{NnError, Result};
use crate::gemm::{gemm, Layout};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// GRU weights with gate blocks ordered `[reset | update | candidate]`.
#[derive(Clone, Copy, Debug)]
pub struct GruWeights {
    /// `[in × 3h]`
    pub w_ih: Var,
    /// `[h × 3h]`
    pub w_hh: Var,
    /// `[3h]`
    pub b_ih: Var,
    /// `[3h]`
    pub b_hh: Var,
}

/// LSTM weights with gate blocks ordered `[input | forget | cell | output]`.
#[derive(Clone, Copy, Debug)]
pub struct LstmWeights {
    /// `[in × 4h]`
    pub w_ih: Var,
    /// `[h × 4h]`
    pub w_hh: Var,
    /// `[4h]`
    pub b: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct BiLstmLayer {
    pub forward: LstmWeights,
    pub backward: LstmWeights,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn sum_rows(dst: &mut [f64], src: &[f64]) {
    for row in src.chunks(dst.len()) {
        for (a, v) in dst.iter_mut().zip(row) {
            *a += v;
        }
    }
}

/// Validates `[T × batch × in]` against an input-to-hidden matrix with
/// `gates·h` columns and returns `(T, batch, in, h)`.
fn recurrent_dims(
    op: &'static str,
    x: &Tensor,
    w_ih: &Tensor,
    w_hh: &Tensor,
    gates: usize,
) -> Result<(usize, usize, usize, usize)> {
    if x.ndim() != 3 || x.shape()[0] == 0 {
        return Err(NnError::invalid(op, format!("input must be [T × batch × in] with T ≥ 1, got {:?}", x.shape())));
    }
    let (steps, batch, input) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    if w_ih.ndim() != 2 || w_ih.shape()[0] != input || !w_ih.shape()[1].is_multiple_of(gates) {
        return Err(NnError::shape(op, x.shape(), w_ih.shape()));
    }
    let hidden = w_ih.shape()[1] / gates;
    if w_hh.shape() != [hidden, gates * hidden] {
        return Err(NnError::shape(op, w_hh.shape(), &[hidden, gates * hidden]));
    }
    Ok((steps, batch, input, hidden))
}

impl Tape {
    /// Runs a GRU over `x: [T × batch × in]` from a zero state and returns the
    /// full hidden sequence `[T × batch × h]`.
    pub fn gru_seq(&mut self, x: Var, w: &GruWeights) -> Result<Var> {
        let (vx, vwi, vwh) = (self.value(x), self.value(w.w_ih), self.value(w.w_hh));
        let (steps, batch, input, hidden) = recurrent_dims("gru_seq", vx, vwi, vwh, 3)?;
        let h3 = 3 * hidden;
        for b in [w.b_ih, w.b_hh] {
            if self.shape(b) != [h3] {
                return Err(NnError::shape("gru_seq bias", self.shape(b), &[h3]));
            }
        }
        let rows = steps * batch;
        let mut gi = Vec::with_capacity(rows * h3);
        for _ in 0..rows {
            gi.extend_from_slice(self.value(w.b_ih).data());
        }
        gemm(rows, input, h3, vx.data(), Layout::Normal, vwi.data(), Layout::Normal, 1.0, &mut gi);

        let bh = self.value(w.b_hh).data().to_vec();
        let step_size = batch * hidden;
        let mut out = vec![0.0; rows * hidden];
        let mut reset = vec![0.0; rows * hidden];
        let mut update = vec![0.0; rows * hidden];
        let mut cand = vec![0.0; rows * hidden];
        let mut gh_cand = vec![0.0; rows * hidden];
        let mut h_prev = vec![0.0; step_size];
        let mut gh = vec![0.0; batch * h3];
        for t in 0..steps {
            for row in gh.chunks_mut(h3) {
                row.copy_from_slice(&bh);
            }
            gemm(batch, hidden, h3, &h_prev, Layout::Normal, vwh.data(), Layout::Normal, 1.0, &mut gh);
            for n in 0..batch {
                let gi_row = &gi[(t * batch + n) * h3..][..h3];
                let gh_row = &gh[n * h3..][..h3];
                for j in 0..hidden {
                    let idx = t * step_size + n * hidden + j;
                    let r = sigmoid(gi_row[j] + gh_row[j]);
                    let z = sigmoid(gi_row[hidden + j] + gh_row[hidden + j]);
                    let ghn = gh_row[2 * hidden + j];
                    let c = (gi_row[2 * hidden + j] + r * ghn).tanh();
                    let h = (1.0 - z) * c + z * h_prev[n * hidden + j];
                    reset[idx] = r;
                    update[idx] = z;
                    cand[idx] = c;
                    gh_cand[idx] = ghn;
                    out[idx] = h;
                }
            }
            h_prev.copy_from_slice(&out[t * step_size..(t + 1) * step_size]);
        }
        let out_t = Tensor::new(&[steps, batch, hidden], out.clone())?;
        self.push(
            "gru_seq",
            out_t,
            &[x, w.w_ih, w.w_hh, w.b_ih, w.b_hh],
            Box::new(move |g, p, needs| {
                let (x, w_ih, w_hh) = (p[0], p[1], p[2]);
                let mut dgi = vec![0.0; rows * h3];
                let mut dw_hh = vec![0.0; hidden * h3];
                let mut db_hh = vec![0.0; h3];
                let mut dh_next = vec![0.0; step_size];
                let mut dgh = vec![0.0; batch * h3];
                let zeros = vec![0.0; step_size];
                for t in (0..steps).rev() {
                    let h_prev = if t == 0 { &zeros[..] } else { &out[(t - 1) * step_size..t * step_size] };
                    for n in 0..batch {
                        for j in 0..hidden {
                            let idx = t * step_size + n * hidden + j;
                            let local = n * hidden + j;
                            let dh = g.data()[idx] + dh_next[local];
                            let (r, z, c, ghn) = (reset[idx], update[idx], cand[idx], gh_cand[idx]);
                            let dc = dh * (1.0 - z);
                            let dz = dh * (h_prev[local] - c);
                            dh_next[local] = dh * z;
                            let da_n = dc * (1.0 - c * c);
                            let da_r = da_n * ghn * r * (1.0 - r);
                            let da_z = dz * z * (1.0 - z);
                            let gi_row = &mut dgi[(t * batch + n) * h3..][..h3];
                            gi_row[j] = da_r;
                            gi_row[hidden + j] = da_z;
                            gi_row[2 * hidden + j] = da_n;
                            let gh_row = &mut dgh[n * h3..][..h3];
                            gh_row[j] = da_r;
                            gh_row[hidden + j] = da_z;
                            gh_row[2 * hidden + j] = da_n * r;
                        }
                    }
                    if needs[2] {
                        gemm(hidden, batch, h3, h_prev, Layout::Transposed, &dgh, Layout::Normal, 1.0, &mut dw_hh);
                    }
                    sum_rows(&mut db_hh, &dgh);
                    gemm(batch, h3, hidden, &dgh, Layout::Normal, w_hh.data(), Layout::Transposed, 1.0, &mut dh_next);
                }
                let gx = needs[0].then(|| {
                    let mut gx = vec![0.0; rows * input];
                    gemm(rows, h3, input, &dgi, Layout::Normal, w_ih.data(), Layout::Transposed, 0.0, &mut gx);
                    Tensor::new(x.shape(), gx).unwrap()
                });
                let gw_ih = needs[1].then(|| {
                    let mut gw = vec![0.0; input * h3];
                    gemm(input, rows, h3, x.data(), Layout::Transposed, &dgi, Layout::Normal, 0.0, &mut gw);
                    Tensor::new(w_ih.shape(), gw).unwrap()
                });
                let gb_ih = needs[3].then(|| {
                    let mut gb = vec![0.0; h3];
                    sum_rows(&mut gb, &dgi);
                    Tensor::new(&[h3], gb).unwrap()
                });
                vec![
                    gx,
                    gw_ih,
                    needs[2].then(|| Tensor::new(w_hh.shape(), dw_hh).unwrap()),
                    gb_ih,
                    needs[4].then(|| Tensor::new(&[h3], db_hh).unwrap()),
                ]
            }),
        )
    }

    /// Runs an LSTM over `x: [T × batch × in]` from zero hidden and cell
    /// states. With `reverse` the recurrence runs from `t = T−1` down to 0;
    /// outputs stay aligned with input positions.
    pub fn lstm_seq(&mut self, x: Var, w: &LstmWeights, reverse: bool) -> Result<Var> {
        let (vx, vwi, vwh) = (self.value(x), self.value(w.w_ih), self.value(w.w_hh));
        let (steps, batch, input, hidden) = recurrent_dims("lstm_seq", vx, vwi, vwh, 4)?;
        let h4 = 4 * hidden;
        if self.shape(w.b) != [h4] {
            return Err(NnError::shape("lstm_seq bias", self.shape(w.b), &[h4]));
        }
        let rows = steps * batch;
        let mut gx_all = Vec::with_capacity(rows * h4);
        for _ in 0..rows {
            gx_all.extend_from_slice(self.value(w.b).data());
        }
        gemm(rows, input, h4, vx.data(), Layout::Normal, vwi.data(), Layout::Normal, 1.0, &mut gx_all);

        let order: Vec<usize> = if reverse { (0..steps).rev().collect() } else { (0..steps).collect() };
        let step_size = batch * hidden;
        // Post-activation gates per position, [T × batch × 4h].
        let mut acts = vec![0.0; rows * h4];
        let mut cells = vec![0.0; rows * hidden];
        let mut out = vec![0.0; rows * hidden];
        let mut h_prev = vec![0.0; step_size];
        let mut c_prev = vec![0.0; step_size];
        let mut gates = vec![0.0; batch * h4];
        for &t in &order {
            gates.copy_from_slice(&gx_all[t * batch * h4..(t + 1) * batch * h4]);
            gemm(batch, hidden, h4, &h_prev, Layout::Normal, vwh.data(), Layout::Normal, 1.0, &mut gates);
            for n in 0..batch {
                let pre = &gates[n * h4..][..h4];
                let act = &mut acts[(t * batch + n) * h4..][..h4];
                for j in 0..hidden {
                    let i = sigmoid(pre[j]);
                    let f = sigmoid(pre[hidden + j]);
                    let gg = pre[2 * hidden + j].tanh();
                    let o = sigmoid(pre[3 * hidden + j]);
                    act[j] = i;
                    act[hidden + j] = f;
                    act[2 * hidden + j] = gg;
                    act[3 * hidden + j] = o;
                    let local = n * hidden + j;
                    let c = f * c_prev[local] + i * gg;
                    let idx = t * step_size + local;
                    cells[idx] = c;
                    out[idx] = o * c.tanh();
                }
            }
            h_prev.copy_from_slice(&out[t * step_size..(t + 1) * step_size]);
            c_prev.copy_from_slice(&cells[t * step_size..(t + 1) * step_size]);
        }
        let out_t = Tensor::new(&[steps, batch, hidden], out.clone())?;
        self.push(
            "lstm_seq",
            out_t,
            &[x, w.w_ih, w.w_hh, w.b],
            Box::new(move |g, p, needs| {
                let (x, w_ih, w_hh) = (p[0], p[1], p[2]);
                let mut dgates_all = vec![0.0; rows * h4];
                let mut dw_hh = vec![0.0; hidden * h4];
                let mut dh_next = vec![0.0; step_size];
                let mut dc_next = vec![0.0; step_size];
                let zeros = vec![0.0; step_size];
                for (s, &t) in order.iter().enumerate().rev() {
                    let prev = (s > 0).then(|| order[s - 1]);
                    let h_prev = prev.map_or(&zeros[..], |q| &out[q * step_size..(q + 1) * step_size]);
                    let c_prev = prev.map_or(&zeros[..], |q| &cells[q * step_size..(q + 1) * step_size]);
                    for n in 0..batch {
                        let act = &acts[(t * batch + n) * h4..][..h4];
                        let da = &mut dgates_all[(t * batch + n) * h4..][..h4];
                        for j in 0..hidden {
                            let local = n * hidden + j;
                            let idx = t * step_size + local;
                            let (i, f, gg, o) = (act[j], act[hidden + j], act[2 * hidden + j], act[3 * hidden + j]);
                            let tc = cells[idx].tanh();
                            let dh = g.data()[idx] + dh_next[local];
                            let dc = dc_next[local] + dh * o * (1.0 - tc * tc);
                            da[j] = dc * gg * i * (1.0 - i);
                            da[hidden + j] = dc * c_prev[local] * f * (1.0 - f);
                            da[2 * hidden + j] = dc * i * (1.0 - gg * gg);
                            da[3 * hidden + j] = dh * tc * o * (1.0 - o);
                            dc_next[local] = dc * f;
                        }
                    }
                    let da_step = &dgates_all[t * batch * h4..(t + 1) * batch * h4];
                    if needs[2] {
                        gemm(hidden, batch, h4, h_prev, Layout::Transposed, da_step, Layout::Normal, 1.0, &mut dw_hh);
                    }
                    gemm(batch, h4, hidden, da_step, Layout::Normal, w_hh.data(), Layout::Transposed, 0.0, &mut dh_next);
                }
                let gx = needs[0].then(|| {
                    let mut gx = vec![0.0; rows * input];
                    gemm(rows, h4, input, &dgates_all, Layout::Normal, w_ih.data(), Layout::Transposed, 0.0, &mut gx);
                    Tensor::new(x.shape(), gx).unwrap()
                });
                let gw_ih = needs[1].then(|| {
                    let mut gw = vec![0.0; input * h4];
                    gemm(input, rows, h4, x.data(), Layout::Transposed, &dgates_all, Layout::Normal, 0.0, &mut gw);
                    Tensor::new(w_ih.shape(), gw).unwrap()
                });
                let gb = needs[3].then(|| {
                    let mut gb = vec![0.0; h4];
                    sum_rows(&mut gb, &dgates_all);
                    Tensor::new(&[h4], gb).unwrap()
                });
                vec![gx, gw_ih, needs[2].then(|| Tensor::new(w_hh.shape(), dw_hh).unwrap()), gb]
            }),
        )
    }

    /// Stacked bidirectional LSTM: each layer concatenates forward and
    /// backward outputs (`2h` wide) and feeds the next layer.
    pub fn bilstm_seq(&mut self, x: Var, layers: &[BiLstmLayer]) -> Result<Var> {
        let mut h = x;
        for layer in layers {
            let fwd = self.lstm_seq(h, &layer.forward, false)?;
            let bwd = self.lstm_seq(h, &layer.backward, true)?;
            h = self.concat_last(fwd, bwd)?;
        }
        Ok(h)
    }
}
