use rand::Rng;

use crate::error::{NnError, Result};
use crate::tape::{Mode, Tape, Var};
use crate::tensor::Tensor;

impl Tape {
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(NnError::shape("add", va.shape(), vb.shape()));
        }
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x + y).collect();
        let out = Tensor::new(va.shape(), data)?;
        self.push(
            "add",
            out,
            &[a, b],
            Box::new(|g, _, _| vec![Some(g.clone()), Some(g.clone())]),
        )
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let vx = self.value(x);
        let out = Tensor::new(vx.shape(), vx.data().iter().map(|v| v.max(0.0)).collect())?;
        self.push(
            "relu",
            out,
            &[x],
            Box::new(|g, parents, _| {
                let data = g
                    .data()
                    .iter()
                    .zip(parents[0].data())
                    .map(|(g, x)| if *x > 0.0 { *g } else { 0.0 })
                    .collect();
                vec![Some(Tensor::new(g.shape(), data).unwrap())]
            }),
        )
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).clone().reshaped(shape)?;
        let original = self.shape(x).to_vec();
        self.push(
            "reshape",
            out,
            &[x],
            Box::new(move |g, _, _| vec![Some(g.clone().reshaped(&original).unwrap())]),
        )
    }

    /// Reorders the axes of a rank-3 tensor: output axis `i` is input axis `perm[i]`.
    pub fn permute3(&mut self, x: Var, perm: [usize; 3]) -> Result<Var> {
        let vx = self.value(x);
        if vx.ndim() != 3 {
            return Err(NnError::invalid("permute3", format!("rank-3 input required, got {:?}", vx.shape())));
        }
        let mut seen = [false; 3];
        for &p in &perm {
            if p > 2 || seen[p] {
                return Err(NnError::invalid("permute3", format!("{perm:?} is not a permutation")));
            }
            seen[p] = true;
        }
        let out = permute3_tensor(vx, perm);
        let mut inverse = [0; 3];
        for (i, &p) in perm.iter().enumerate() {
            inverse[p] = i;
        }
        self.push(
            "permute3",
            out,
            &[x],
            Box::new(move |g, _, _| vec![Some(permute3_tensor(g, inverse))]),
        )
    }

    /// Concatenates two tensors along their last axis.
    pub fn concat_last(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        let (sa, sb) = (va.shape(), vb.shape());
        if sa.len() != sb.len() || sa.is_empty() || sa[..sa.len() - 1] != sb[..sb.len() - 1] {
            return Err(NnError::shape("concat_last", sa, sb));
        }
        let (da, db) = (*sa.last().unwrap(), *sb.last().unwrap());
        let rows = va.len() / da.max(1);
        let mut data = Vec::with_capacity(va.len() + vb.len());
        for r in 0..rows {
            data.extend_from_slice(&va.data()[r * da..(r + 1) * da]);
            data.extend_from_slice(&vb.data()[r * db..(r + 1) * db]);
        }
        let mut shape = sa.to_vec();
        *shape.last_mut().unwrap() = da + db;
        let out = Tensor::new(&shape, data)?;
        let (shape_a, shape_b) = (sa.to_vec(), sb.to_vec());
        self.push(
            "concat_last",
            out,
            &[a, b],
            Box::new(move |g, _, _| {
                let mut ga = Vec::with_capacity(rows * da);
                let mut gb = Vec::with_capacity(rows * db);
                for r in 0..rows {
                    let row = &g.data()[r * (da + db)..(r + 1) * (da + db)];
                    ga.extend_from_slice(&row[..da]);
                    gb.extend_from_slice(&row[da..]);
                }
                vec![
                    Some(Tensor::new(&shape_a, ga).unwrap()),
                    Some(Tensor::new(&shape_b, gb).unwrap()),
                ]
            }),
        )
    }

    /// Mean over the leading axis: `[T × rest…] → [rest…]`.
    pub fn mean_leading(&mut self, x: Var) -> Result<Var> {
        let vx = self.value(x);
        if vx.ndim() < 1 || vx.shape()[0] == 0 {
            return Err(NnError::invalid("mean_leading", format!("empty leading axis in {:?}", vx.shape())));
        }
        let steps = vx.shape()[0];
        let inner = vx.len() / steps;
        let mut acc = vec![0.0; inner];
        for t in 0..steps {
            for (a, v) in acc.iter_mut().zip(&vx.data()[t * inner..(t + 1) * inner]) {
                *a += v;
            }
        }
        let scale = 1.0 / steps as f64;
        acc.iter_mut().for_each(|a| *a *= scale);
        let out = Tensor::new(&vx.shape()[1..], acc)?;
        let in_shape = vx.shape().to_vec();
        self.push(
            "mean_leading",
            out,
            &[x],
            Box::new(move |g, _, _| {
                let mut data = Vec::with_capacity(steps * inner);
                for _ in 0..steps {
                    data.extend(g.data().iter().map(|v| v * scale));
                }
                vec![Some(Tensor::new(&in_shape, data).unwrap())]
            }),
        )
    }

    /// Sum of all elements as a scalar.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let vx = self.value(x);
        let out = Tensor::scalar(vx.sum());
        let shape = vx.shape().to_vec();
        self.push(
            "sum",
            out,
            &[x],
            Box::new(move |g, _, _| vec![Some(Tensor::full(&shape, g.item()))]),
        )
    }

    /// Inverted dropout: in training each element is zeroed with probability
    /// `drop_prob` and survivors are scaled by `1/(1-drop_prob)`; evaluation
    /// is the identity.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        x: Var,
        drop_prob: f64,
        mode: Mode,
        rng: &mut R,
    ) -> Result<Var> {
        if !(0.0..1.0).contains(&drop_prob) {
            return Err(NnError::invalid("dropout", format!("drop probability {drop_prob} outside [0, 1)")));
        }
        if mode == Mode::Eval || drop_prob == 0.0 {
            return Ok(x);
        }
        let keep_scale = 1.0 / (1.0 - drop_prob);
        let vx = self.value(x);
        let mask: Vec<f64> = (0..vx.len())
            .map(|_| if rng.gen::<f64>() < drop_prob { 0.0 } else { keep_scale })
            .collect();
        let data = vx.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let out = Tensor::new(vx.shape(), data)?;
        self.push(
            "dropout",
            out,
            &[x],
            Box::new(move |g, _, _| {
                let data = g.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
                vec![Some(Tensor::new(g.shape(), data).unwrap())]
            }),
        )
    }
}

pub(crate) fn permute3_tensor(x: &Tensor, perm: [usize; 3]) -> Tensor {
    let s = x.shape();
    let in_strides = [s[1] * s[2], s[2], 1];
    let out_shape = [s[perm[0]], s[perm[1]], s[perm[2]]];
    let mut out = Vec::with_capacity(x.len());
    let src = x.data();
    for i in 0..out_shape[0] {
        for j in 0..out_shape[1] {
            let base = i * in_strides[perm[0]] + j * in_strides[perm[1]];
            let step = in_strides[perm[2]];
            out.extend((0..out_shape[2]).map(|k| src[base + k * step]));
        }
    }
    Tensor::new(&out_shape, out).unwrap()
}
