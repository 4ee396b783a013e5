//! Manifest loading with split filtering.

use std::collections::BTreeMap;
use std::path::Path;
use std::thread;

use clap::ValueEnum;
use serde::Deserialize;
use vocalid::manifest::{read_jsonl, resolve};
use vocalid::segmenter::{Segment, SegmentTimeline};
use vocalid::separator::SnippetPair;
use vocalid::signal::{read_wav, to_pipeline_rate, AudioBuffer};
use vocalid::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitFilter {
    Train,
    Test,
    All,
}

impl SplitFilter {
    /// Entries without a split tag belong to every split.
    fn keeps(self, split: Option<&str>) -> bool {
        match (self, split) {
            (SplitFilter::All, _) | (_, None) => true,
            (SplitFilter::Train, Some(s)) => s == "train",
            (SplitFilter::Test, Some(s)) => s == "test",
        }
    }
}

#[derive(Deserialize)]
struct SegLine {
    path: String,
    segments: Vec<Segment>,
    #[serde(default)]
    split: Option<String>,
}

#[derive(Deserialize)]
struct PairLine {
    mixture: String,
    vocal: String,
    #[serde(default)]
    split: Option<String>,
}

#[derive(Deserialize)]
struct ClassLine {
    path: String,
    singer: String,
    #[serde(default)]
    split: Option<String>,
}

pub fn load_audio(path: &Path) -> Result<AudioBuffer> {
    Ok(to_pipeline_rate(&read_wav(path)?)?)
}

pub fn timeline(segments: Vec<Segment>) -> SegmentTimeline {
    SegmentTimeline { hop_seconds: 0.01, segments }
}

/// `(id, audio, ground truth)` per song.
pub fn segmentation_set(manifest: &Path, split: SplitFilter) -> Result<Vec<(String, AudioBuffer, SegmentTimeline)>> {
    let lines: Vec<SegLine> = read_jsonl(manifest)?;
    lines
        .into_iter()
        .filter(|l| split.keeps(l.split.as_deref()))
        .map(|l| Ok((l.path.clone(), load_audio(&resolve(manifest, &l.path))?, timeline(l.segments))))
        .collect()
}

/// Ground-truth timelines keyed by the path as written in the manifest.
pub fn truth_timelines(manifest: &Path) -> Result<BTreeMap<String, SegmentTimeline>> {
    let lines: Vec<SegLine> = read_jsonl(manifest)?;
    Ok(lines.into_iter().map(|l| (l.path, timeline(l.segments))).collect())
}

pub fn separation_set(manifest: &Path, split: SplitFilter) -> Result<Vec<SnippetPair>> {
    let lines: Vec<PairLine> = read_jsonl(manifest)?;
    lines
        .into_iter()
        .filter(|l| split.keeps(l.split.as_deref()))
        .map(|l| {
            Ok(SnippetPair {
                id: l.mixture.clone(),
                mixture: read_wav(&resolve(manifest, &l.mixture))?,
                vocal: read_wav(&resolve(manifest, &l.vocal))?,
            })
        })
        .collect()
}

/// `(path as written, resolved path, singer)` per song.
pub fn classification_set(manifest: &Path, split: SplitFilter) -> Result<Vec<(String, std::path::PathBuf, String)>> {
    let lines: Vec<ClassLine> = read_jsonl(manifest)?;
    Ok(lines
        .into_iter()
        .filter(|l| split.keeps(l.split.as_deref()))
        .map(|l| (l.path.clone(), resolve(manifest, &l.path), l.singer))
        .collect())
}

/// Order-preserving map over `threads` scoped workers.
pub fn par_map<T: Sync, R: Send>(items: &[T], threads: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let threads = threads.clamp(1, items.len().max(1));
    if threads == 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(threads);
    thread::scope(|s| {
        let handles: Vec<_> = items.chunks(chunk).map(|c| s.spawn(|| c.iter().map(&f).collect::<Vec<_>>())).collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    })
}
