use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default minimum interval length; shorter runs are absorbed by a neighbour.
pub const MIN_SEGMENT_SECONDS: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    NonVocal,
    Vocal,
}

impl Label {
    /// Class index used by the network: non-vocal 0, vocal 1.
    pub fn index(self) -> usize {
        match self {
            Label::NonVocal => 0,
            Label::Vocal => 1,
        }
    }

    pub fn from_index(i: usize) -> Self {
        if i == 1 { Label::Vocal } else { Label::NonVocal }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub label: Label,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentTimeline {
    pub hop_seconds: f64,
    pub segments: Vec<Segment>,
}

impl SegmentTimeline {
    /// Checks ordering, contiguity, positive lengths and label alternation.
    pub fn validate(&self) -> Result<()> {
        if self.segments.is_empty() {
            return Err(Error::InvalidInput("timeline has no segments".into()));
        }
        for (i, s) in self.segments.iter().enumerate() {
            if !(s.start < s.end) {
                return Err(Error::InvalidInput(format!("segment {i} has start {} ≥ end {}", s.start, s.end)));
            }
            if let Some(prev) = i.checked_sub(1).map(|j| &self.segments[j]) {
                if (prev.end - s.start).abs() > 1e-9 {
                    return Err(Error::InvalidInput(format!("segment {i} does not start where segment {} ends", i - 1)));
                }
                if prev.label == s.label {
                    return Err(Error::InvalidInput(format!("segments {} and {i} share a label", i - 1)));
                }
            }
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        match (self.segments.first(), self.segments.last()) {
            (Some(a), Some(b)) => b.end - a.start,
            _ => 0.0,
        }
    }

    /// Label in force at time `t`; times past the end take the last label.
    pub fn label_at(&self, t: f64) -> Label {
        self.segments
            .iter()
            .find(|s| t < s.end)
            .or(self.segments.last())
            .map_or(Label::NonVocal, |s| s.label)
    }

    /// Labels for `frames` frames centred at `i·hop`.
    pub fn frame_labels(&self, frames: usize, hop: f64) -> Vec<Label> {
        (0..frames).map(|i| self.label_at(i as f64 * hop)).collect()
    }

    /// Labels on the evaluation grid: one per `hop_seconds` cell, sampled at
    /// the cell centre.
    pub fn grid_labels(&self) -> Vec<Label> {
        let cells = (self.duration() / self.hop_seconds).round() as usize;
        let origin = self.segments.first().map_or(0.0, |s| s.start);
        (0..cells)
            .map(|i| self.label_at(origin + (i as f64 + 0.5) * self.hop_seconds))
            .collect()
    }

    pub fn vocal_intervals(&self) -> impl Iterator<Item = &Segment> {
        self.segments.iter().filter(|s| s.label == Label::Vocal)
    }
}

/// Run-length encodes per-frame labels with [`MIN_SEGMENT_SECONDS`] merging.
pub fn timeline_from_labels(labels: &[Label], hop_seconds: f64) -> Result<SegmentTimeline> {
    timeline_from_labels_with_min(labels, hop_seconds, MIN_SEGMENT_SECONDS)
}

/// Run-length encodes per-frame labels. Runs shorter than `min_seconds` are
/// merged, shortest first, into the longer adjacent run (the earlier one on
/// ties), until every run is long enough or one run remains.
pub fn timeline_from_labels_with_min(labels: &[Label], hop_seconds: f64, min_seconds: f64) -> Result<SegmentTimeline> {
    if labels.is_empty() {
        return Err(Error::InvalidInput("cannot build a timeline from zero labels".into()));
    }
    if !(hop_seconds > 0.0) {
        return Err(Error::InvalidInput(format!("hop {hop_seconds} must be positive")));
    }
    let min_frames = (min_seconds / hop_seconds).round() as usize;

    let mut runs: Vec<(Label, usize)> = Vec::new();
    for &l in labels {
        match runs.last_mut() {
            Some((prev, n)) if *prev == l => *n += 1,
            _ => runs.push((l, 1)),
        }
    }

    while runs.len() > 1 {
        let Some(i) = (0..runs.len())
            .filter(|&i| runs[i].1 < min_frames)
            .min_by_key(|&i| runs[i].1)
        else {
            break;
        };
        let left = i.checked_sub(1);
        let right = (i + 1 < runs.len()).then_some(i + 1);
        let target = match (left, right) {
            (Some(l), Some(r)) => if runs[r].1 > runs[l].1 { r } else { l },
            (Some(l), None) => l,
            (None, Some(r)) => r,
            (None, None) => unreachable!(),
        };
        runs[target].1 += runs[i].1;
        runs.remove(i);
        // Removing an inner run leaves two equal labels side by side.
        if let (Some(l), Some(_)) = (left, right) {
            if runs[l].0 == runs[l + 1].0 {
                runs[l].1 += runs[l + 1].1;
                runs.remove(l + 1);
            }
        }
    }

    let mut start = 0usize;
    let segments = runs
        .into_iter()
        .map(|(label, n)| {
            let seg = Segment {
                start: start as f64 * hop_seconds,
                end: (start + n) as f64 * hop_seconds,
                label,
            };
            start += n;
            seg
        })
        .collect();
    Ok(SegmentTimeline { hop_seconds, segments })
}

/// Frame-level precision on the timeline grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentationScores {
    pub vocal_precision: f64,
    pub non_vocal_precision: f64,
    pub mean_precision: f64,
    pub accuracy: f64,
    pub frames: usize,
}

/// Per-class precision of `pred` against `truth` on the 10 ms grid. A class
/// that is never predicted scores 1 when it is also absent from the truth
/// and 0 otherwise.
pub fn eval_segmentation(pred: &SegmentTimeline, truth: &SegmentTimeline) -> Result<SegmentationScores> {
    pred.validate()?;
    truth.validate()?;
    let (p, t) = (pred.grid_labels(), truth.grid_labels());
    if p.len().abs_diff(t.len()) > 1 {
        return Err(Error::InvalidInput(format!(
            "timelines differ in length: {} vs {} frames",
            p.len(),
            t.len()
        )));
    }
    Ok(score_labels(&p, &t))
}

/// Scores several songs as one frame sequence, so long songs weigh more.
pub fn eval_segmentation_pooled(pairs: &[(SegmentTimeline, SegmentTimeline)]) -> Result<SegmentationScores> {
    let (mut all_p, mut all_t) = (Vec::new(), Vec::new());
    for (pred, truth) in pairs {
        pred.validate()?;
        truth.validate()?;
        let (p, t) = (pred.grid_labels(), truth.grid_labels());
        if p.len().abs_diff(t.len()) > 1 {
            return Err(Error::InvalidInput(format!(
                "timelines differ in length: {} vs {} frames",
                p.len(),
                t.len()
            )));
        }
        let n = p.len().min(t.len());
        all_p.extend_from_slice(&p[..n]);
        all_t.extend_from_slice(&t[..n]);
    }
    Ok(score_labels(&all_p, &all_t))
}

pub(crate) fn score_labels(pred: &[Label], truth: &[Label]) -> SegmentationScores {
    let n = pred.len().min(truth.len());
    let (pred, truth) = (&pred[..n], &truth[..n]);
    let precision = |c: Label| {
        let predicted = pred.iter().filter(|&&l| l == c).count();
        let hits = pred.iter().zip(truth).filter(|(a, b)| **a == c && **b == c).count();
        if predicted > 0 {
            hits as f64 / predicted as f64
        } else if truth.contains(&c) {
            0.0
        } else {
            1.0
        }
    };
    let vocal_precision = precision(Label::Vocal);
    let non_vocal_precision = precision(Label::NonVocal);
    let correct = pred.iter().zip(truth).filter(|(a, b)| a == b).count();
    SegmentationScores {
        vocal_precision,
        non_vocal_precision,
        mean_precision: (vocal_precision + non_vocal_precision) / 2.0,
        accuracy: if n == 0 { 0.0 } else { correct as f64 / n as f64 },
        frames: n,
    }
}
