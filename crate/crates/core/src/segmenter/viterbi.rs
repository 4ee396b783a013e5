use serde::{Deserialize, Serialize};

use super::net::FrameProbs;
use super::timeline::Label;
use crate::error::{Error, Result};

/// Two-state HMM over {non-vocal, vocal}.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionModel {
    pub p_stay_vocal: f64,
    pub p_stay_non_vocal: f64,
    pub prior_vocal: f64,
}

impl Default for TransitionModel {
    fn default() -> Self {
        Self { p_stay_vocal: 0.99, p_stay_non_vocal: 0.99, prior_vocal: 0.5 }
    }
}

impl TransitionModel {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("p_stay_vocal", self.p_stay_vocal),
            ("p_stay_non_vocal", self.p_stay_non_vocal),
            ("prior_vocal", self.prior_vocal),
        ] {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::InvalidInput(format!("{name} = {p} must lie strictly between 0 and 1")));
            }
        }
        Ok(())
    }

    /// `log_transition()[from][to]`, states indexed by [`Label::index`].
    pub fn log_transition(&self) -> [[f64; 2]; 2] {
        [
            [self.p_stay_non_vocal.ln(), (1.0 - self.p_stay_non_vocal).ln()],
            [(1.0 - self.p_stay_vocal).ln(), self.p_stay_vocal.ln()],
        ]
    }

    pub fn log_prior(&self) -> [f64; 2] {
        [(1.0 - self.prior_vocal).ln(), self.prior_vocal.ln()]
    }
}

/// Log emission scores `[ln(1 − p), ln p]` for one frame.
pub fn log_emission(p_vocal: f64) -> [f64; 2] {
    [(1.0 - p_vocal).ln(), p_vocal.ln()]
}

/// Most probable label sequence under the HMM. Ties prefer non-vocal, both
/// for predecessors and for the final state.
pub fn viterbi_smooth(probs: &FrameProbs, tm: &TransitionModel) -> Result<Vec<Label>> {
    tm.validate()?;
    let p = &probs.p_vocal;
    if p.is_empty() {
        return Err(Error::InvalidInput("cannot smooth an empty probability sequence".into()));
    }
    if let Some(bad) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidInput(format!("probability {bad} outside [0, 1]")));
    }
    let trans = tm.log_transition();
    let prior = tm.log_prior();
    let e0 = log_emission(p[0]);
    let mut score = [prior[0] + e0[0], prior[1] + e0[1]];
    let mut back: Vec<[u8; 2]> = Vec::with_capacity(p.len());
    back.push([0, 0]);
    for &pv in &p[1..] {
        let e = log_emission(pv);
        let mut next = [0.0; 2];
        let mut from = [0u8; 2];
        for to in 0..2 {
            let via_non_vocal = score[0] + trans[0][to];
            let via_vocal = score[1] + trans[1][to];
            (next[to], from[to]) = if via_vocal > via_non_vocal { (via_vocal, 1) } else { (via_non_vocal, 0) };
            next[to] += e[to];
        }
        score = next;
        back.push(from);
    }
    let mut state = if score[1] > score[0] { 1 } else { 0 };
    let mut states = vec![0usize; p.len()];
    for t in (0..p.len()).rev() {
        states[t] = state;
        state = back[t][state] as usize;
    }
    Ok(states.into_iter().map(Label::from_index).collect())
}

/// Framewise decision without smoothing; `p = 0.5` counts as non-vocal.
pub fn argmax_labels(probs: &FrameProbs) -> Vec<Label> {
    probs
        .p_vocal
        .iter()
        .map(|&p| if p > 0.5 { Label::Vocal } else { Label::NonVocal })
        .collect()
}
