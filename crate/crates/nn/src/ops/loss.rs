use crate::error::{NnError, Result};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Row-wise softmax of a `[rows × classes]` tensor, max-subtracted for stability.
pub fn softmax_rows(logits: &Tensor) -> Result<Tensor> {
    if logits.ndim() != 2 || logits.shape()[1] < 2 {
        return Err(NnError::invalid("softmax", format!("need [rows × classes≥2], got {:?}", logits.shape())));
    }
    let classes = logits.shape()[1];
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.data().chunks(classes) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        out.extend(exps.iter().map(|e| e / total));
    }
    Tensor::new(logits.shape(), out)
}

/// Output of [`Tape::softmax_xent`].
pub struct SoftmaxXent {
    /// Scalar mean negative log-likelihood.
    pub loss: Var,
    /// `[batch × classes]` class probabilities.
    pub probs: Tensor,
}

impl Tape {
    /// Mean softmax cross-entropy of `logits: [batch × classes]` against
    /// integer labels.
    pub fn softmax_xent(&mut self, logits: Var, labels: &[usize]) -> Result<SoftmaxXent> {
        let vl = self.value(logits);
        let probs = softmax_rows(vl)?;
        let (batch, classes) = (vl.shape()[0], vl.shape()[1]);
        if labels.len() != batch {
            return Err(NnError::shape("softmax_xent labels", vl.shape(), &[labels.len()]));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
            return Err(NnError::LabelOutOfRange { label, classes });
        }
        // log p computed from the shifted logits keeps the loss finite even
        // when a probability underflows.
        let mut loss = 0.0;
        for (row, &label) in vl.data().chunks(classes).zip(labels) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            loss -= row[label] - max - lse;
        }
        loss /= batch as f64;
        let mut grad = probs.clone();
        for (row, &label) in grad.data_mut().chunks_mut(classes).zip(labels) {
            row[label] -= 1.0;
        }
        let inv_batch = 1.0 / batch as f64;
        grad.data_mut().iter_mut().for_each(|v| *v *= inv_batch);
        let loss = self.push(
            "softmax_xent",
            Tensor::scalar(loss),
            &[logits],
            Box::new(move |g, _, _| {
                let scale = g.item();
                let data = grad.data().iter().map(|v| v * scale).collect();
                vec![Some(Tensor::new(grad.shape(), data).unwrap())]
            }),
        )?;
        Ok(SoftmaxXent { loss, probs })
    }

    /// Mean absolute difference against a constant target. The subgradient
    /// at exact ties is 0.
    pub fn l1_loss(&mut self, pred: Var, target: &Tensor) -> Result<Var> {
        let vp = self.value(pred);
        if vp.shape() != target.shape() {
            return Err(NnError::shape("l1_loss", vp.shape(), target.shape()));
        }
        if vp.is_empty() {
            return Err(NnError::invalid("l1_loss", "empty tensors"));
        }
        let n = vp.len() as f64;
        let diffs: Vec<f64> = vp.data().iter().zip(target.data()).map(|(p, t)| p - t).collect();
        let loss = diffs.iter().map(|d| d.abs()).sum::<f64>() / n;
        let shape = vp.shape().to_vec();
        self.push(
            "l1_loss",
            Tensor::scalar(loss),
            &[pred],
            Box::new(move |g, _, _| {
                let scale = g.item() / n;
                let data = diffs
                    .iter()
                    .map(|&d| if d > 0.0 { scale } else if d < 0.0 { -scale } else { 0.0 })
                    .collect();
                vec![Some(Tensor::new(&shape, data).unwrap())]
            }),
        )
    }
}
