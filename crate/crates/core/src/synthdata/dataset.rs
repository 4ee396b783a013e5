use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use vocalid_nn::seeded;

use super::{derive_seed, synth_song, Section, SectionKind, SingerProfile, SongRecipe, MIN_SONG_SECONDS};
use crate::error::{Error, Result};
use crate::manifest::{write_json, write_jsonl};
use crate::segmenter::Segment;
use crate::signal::write_wav;

pub const SEGMENTATION_MANIFEST: &str = "segmentation.jsonl";
pub const SEPARATION_MANIFEST: &str = "separation.jsonl";
pub const CLASSIFICATION_MANIFEST: &str = "classification.jsonl";
pub const DATASET_FILE: &str = "dataset.json";

/// Lowest and highest pitch-range centre handed out to generated singers.
const F0_CENTRE_SPAN: [f64; 2] = [170.0, 870.0];
/// Widest spacing between neighbouring singers' pitch centres.
const MAX_F0_SPACING: f64 = 70.0;
/// Half-width of each singer's pitch range, relative to its centre.
const F0_HALF_WIDTH: f64 = 0.08;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub num_singers: usize,
    pub clips_per_singer: usize,
    pub clip_seconds: f64,
    /// Share of each singer's clips marked as held out.
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self { num_singers: 6, clips_per_singer: 20, clip_seconds: 10.0, test_fraction: 0.2, seed: 42 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentationLine {
    pub path: String,
    pub segments: Vec<Segment>,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairLine {
    pub mixture: String,
    pub vocal: String,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationLine {
    pub path: String,
    pub singer: String,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClipRecord {
    pub id: String,
    pub singer: String,
    pub split: Split,
    pub snr_db: f64,
    pub recipe: SongRecipe,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub spec: DatasetSpec,
    pub sample_rate: u32,
    pub profiles: Vec<SingerProfile>,
    pub counts: BTreeMap<String, usize>,
    pub clips: Vec<ClipRecord>,
}

/// Singers with evenly spaced pitch centres (at most 70 Hz apart, spread
/// over 170–870 Hz) and randomized formants, vibrato and breathiness.
pub fn generate_profiles(num_singers: usize, seed: u64) -> Result<Vec<SingerProfile>> {
    if num_singers < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 singers, got {num_singers}")));
    }
    let spacing = ((F0_CENTRE_SPAN[1] - F0_CENTRE_SPAN[0]) / (num_singers - 1) as f64).min(MAX_F0_SPACING);
    let mut rng = seeded(derive_seed(seed, 0x7072));
    (0..num_singers)
        .map(|i| {
            let centre = F0_CENTRE_SPAN[0] + spacing * i as f64;
            let profile = SingerProfile {
                name: format!("singer_{:02}", i + 1),
                f0_range: [centre * (1.0 - F0_HALF_WIDTH), centre * (1.0 + F0_HALF_WIDTH)],
                vibrato_rate: rng.gen_range(4.5..6.5),
                vibrato_depth: rng.gen_range(20.0..70.0),
                formant_centers: [rng.gen_range(450.0..850.0), rng.gen_range(1000.0..2000.0), rng.gen_range(2300.0..3300.0)],
                breathiness: rng.gen_range(0.02..0.2),
            };
            profile.validate()?;
            Ok(profile)
        })
        .collect()
}

/// Intro, verse, bridge, verse, outro; instrumental parts last 0.5–2 s.
pub fn random_recipe(singer: usize, clip_seconds: f64, seed: u64) -> Result<SongRecipe> {
    if clip_seconds < MIN_SONG_SECONDS {
        return Err(Error::InvalidInput(format!(
            "clips of {clip_seconds} s are shorter than the {MIN_SONG_SECONDS} s minimum"
        )));
    }
    let mut rng = seeded(derive_seed(seed, 0x7263));
    let intro = rng.gen_range(0.8..2.0);
    let bridge = rng.gen_range(0.6..1.5);
    let outro = rng.gen_range(0.5..1.5);
    let voiced = clip_seconds - intro - bridge - outro;
    let first = voiced * rng.gen_range(0.35..0.6);
    let sections = vec![
        Section { duration_s: intro, kind: SectionKind::Instrumental },
        Section { duration_s: first, kind: SectionKind::Vocal },
        Section { duration_s: bridge, kind: SectionKind::Instrumental },
        Section { duration_s: voiced - first, kind: SectionKind::Vocal },
        Section { duration_s: outro, kind: SectionKind::Instrumental },
    ];
    Ok(SongRecipe { sections, singer, tempo: rng.gen_range(84.0..132.0), seed: derive_seed(seed, 0x736f) })
}

/// Writes `audio/*.wav` (mixture and vocal stem per clip), the three
/// JSON-lines manifests and `dataset.json` under `out_dir`.
pub fn build_dataset(spec: &DatasetSpec, out_dir: &Path) -> Result<DatasetSummary> {
    if spec.clips_per_singer == 0 {
        return Err(Error::InvalidInput("clips_per_singer must be positive".into()));
    }
    if !(0.0..1.0).contains(&spec.test_fraction) {
        return Err(Error::InvalidInput(format!("test fraction {} outside [0, 1)", spec.test_fraction)));
    }
    let profiles = generate_profiles(spec.num_singers, spec.seed)?;
    let audio_dir = out_dir.join("audio");
    fs::create_dir_all(&audio_dir).map_err(|e| Error::io(&audio_dir, e))?;
    let held_out = (spec.clips_per_singer as f64 * spec.test_fraction).round() as usize;

    let mut seg = Vec::new();
    let mut pairs = Vec::new();
    let mut cls = Vec::new();
    let mut clips = Vec::new();
    let mut counts = BTreeMap::new();
    for (s, profile) in profiles.iter().enumerate() {
        for c in 0..spec.clips_per_singer {
            let id = format!("{}_c{:03}", profile.name, c);
            let recipe = random_recipe(s, spec.clip_seconds, derive_seed(spec.seed, ((s as u64) << 32) | c as u64))?;
            let song = synth_song(&recipe, &profiles)?;
            let split = if c >= spec.clips_per_singer - held_out { Split::Test } else { Split::Train };
            let mix_rel = format!("audio/{id}.mix.wav");
            let voc_rel = format!("audio/{id}.vocal.wav");
            write_wav(&out_dir.join(&mix_rel), &song.mixture)?;
            write_wav(&out_dir.join(&voc_rel), &song.vocal)?;
            seg.push(SegmentationLine { path: mix_rel.clone(), segments: song.timeline.segments.clone(), split });
            pairs.push(PairLine { mixture: mix_rel.clone(), vocal: voc_rel, split });
            cls.push(ClassificationLine { path: mix_rel, singer: profile.name.clone(), split });
            clips.push(ClipRecord { id, singer: profile.name.clone(), split, snr_db: song.snr_db, recipe });
            *counts.entry(profile.name.clone()).or_insert(0) += 1;
        }
    }
    write_jsonl(&out_dir.join(SEGMENTATION_MANIFEST), &seg)?;
    write_jsonl(&out_dir.join(SEPARATION_MANIFEST), &pairs)?;
    write_jsonl(&out_dir.join(CLASSIFICATION_MANIFEST), &cls)?;
    let summary = DatasetSummary { spec: spec.clone(), sample_rate: super::SAMPLE_RATE, profiles, counts, clips };
    write_json(&out_dir.join(DATASET_FILE), &summary)?;
    Ok(summary)
}
