use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use vocalid::classifier::{
    cross_validate, prf_metrics, snippet_features, train_classifier, vocal_audio, ClassifierConfig,
    ClassifierTrainConfig, FeatureSource, LabelMap, LabelledSequence, Pipeline, SongFeatures,
};
use vocalid::manifest::{read_jsonl, resolve, write_json};
use vocalid::segmenter::{
    segment_song, segmentation_report, train_segmenter_on_features, LabelledFeatures, SegmentTimeline, SegmenterConfig,
    SegmenterModel, SegmenterTrainConfig, TransitionModel, MIN_SEGMENT_SECONDS,
};
use vocalid::separator::{
    eval_separation, separate, train_separator, SeparatorConfig, SeparatorModel, SeparatorTrainConfig,
    DEFAULT_SNIPPET_SECONDS,
};
use vocalid::signal::{write_wav, AudioBuffer, FeatureMatrix};
use vocalid::synthdata::{build_dataset, DatasetSpec};
use vocalid::Error;

use crate::config::PipelineConfig;
use crate::data::{
    classification_set, load_audio, par_map, segmentation_set, separation_set, truth_timelines, SplitFilter,
};
use crate::{Command, EvalArgs, Global, TrainArgs, VocalArgs};

pub enum CliError {
    Usage(String),
    Run(Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Run(Error::NoVocalContent) => 3,
            CliError::Run(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Run(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Run(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

const DEFAULT_DATA_SEED: u64 = 42;
const LOG_FILE: &str = "training_log.json";

struct Ctx<'a> {
    global: &'a Global,
}

impl Ctx<'_> {
    fn seed(&self, default: u64) -> u64 {
        self.global.seed.unwrap_or(default)
    }

    fn threads(&self) -> usize {
        self.global
            .threads
            .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
            .max(1)
    }

    fn config(&self) -> CliResult<Option<PipelineConfig>> {
        Ok(match &self.global.config {
            Some(p) => Some(PipelineConfig::load(p)?),
            None => None,
        })
    }

    fn require_config(&self, command: &str) -> CliResult<PipelineConfig> {
        self.config()?.ok_or_else(|| CliError::Usage(format!("{command} needs --config")))
    }

    fn hmm(&self) -> CliResult<(TransitionModel, f64, f64)> {
        Ok(match self.config()? {
            Some(c) => (c.hmm, c.min_segment_seconds, c.snippet_seconds),
            None => (TransitionModel::default(), MIN_SEGMENT_SECONDS, DEFAULT_SNIPPET_SECONDS),
        })
    }
}

pub fn run(command: Command, global: &Global) -> CliResult<()> {
    let ctx = Ctx { global };
    match command {
        Command::SynthData { out, singers, clips_per_singer, clip_seconds, test_fraction } => {
            let spec = DatasetSpec {
                num_singers: singers,
                clips_per_singer,
                clip_seconds,
                test_fraction,
                seed: ctx.seed(DEFAULT_DATA_SEED),
            };
            let summary = build_dataset(&spec, &out)?;
            print_json(&json!({ "out": out, "clips": summary.clips.len(), "counts": summary.counts }));
            Ok(())
        }
        Command::TrainSeg { common, steps_per_epoch, batch_size } => {
            train_seg(&ctx, &common, steps_per_epoch, batch_size)
        }
        Command::TrainSep { common, skip_kind, batch_size, crop_frames } => {
            let pairs = separation_set(&common.data, common.split)?;
            let defaults = SeparatorTrainConfig::default();
            let train = SeparatorTrainConfig {
                epochs: common.epochs.unwrap_or(defaults.epochs),
                learning_rate: common.learning_rate.unwrap_or(defaults.learning_rate),
                batch_size,
                crop_frames,
                seed: ctx.seed(defaults.seed),
                ..defaults
            };
            let config = SeparatorConfig { skip_kind: skip_kind.into(), ..Default::default() };
            let trained = train_separator(&pairs, &config, &train)?;
            trained.model.save(&common.out)?;
            write_log(&common, "sep", &train, &config, pairs.len(), &trained.epoch_losses, json!({}))
        }
        Command::TrainCls { common, vocals, raw } => train_cls(&ctx, &common, &vocals, raw),
        Command::Segment { input, seg_model } => {
            let model = match (seg_model, ctx.config()?) {
                (Some(p), _) => SegmenterModel::load(&p)?,
                (None, Some(c)) => c.segmenter()?,
                (None, None) => return Err(CliError::Usage("segment needs --seg-model or --config".into())),
            };
            let (tm, min_s, _) = ctx.hmm()?;
            let seg = segment_song(&load_audio(&input)?, &model, &tm, min_s)?;
            print_json(&json!({
                "hop_seconds": seg.smoothed.hop_seconds,
                "segments": seg.smoothed.segments,
                "cnn_segments": seg.raw.segments,
            }));
            Ok(())
        }
        Command::Separate { input, out, sep_model } => {
            let model = match (sep_model, ctx.config()?) {
                (Some(p), _) => SeparatorModel::load(&p)?,
                (None, Some(c)) => c.separator()?,
                (None, None) => return Err(CliError::Usage("separate needs --sep-model or --config".into())),
            };
            let (_, _, snippet) = ctx.hmm()?;
            let separated = separate(&load_audio(&input)?, &model, snippet)?;
            write_wav(&out, &separated.audio).map_err(Error::from)?;
            Ok(())
        }
        Command::Identify { input, raw } => identify(&ctx, &input, raw),
        Command::EvalSeg { common, seg_model } => eval_seg(&ctx, &common, &seg_model),
        Command::EvalSep { common, sep_model } => {
            let pairs = separation_set(&common.data, common.split)?;
            let model = SeparatorModel::load(&sep_model)?;
            let (_, _, snippet) = ctx.hmm()?;
            let report = eval_separation(&pairs, &model, snippet)?;
            write_report(&common.report, &report)
        }
        Command::EvalCls { report, data, predictions, vocals, folds, epochs, split } => match (data, predictions) {
            (_, Some(p)) => score_predictions(&p, &report),
            (Some(d), None) => eval_cls(&ctx, &d, &report, &vocals, folds, epochs, split),
            (None, None) => Err(CliError::Usage("eval-cls needs --data or --predictions".into())),
        },
    }
}

fn print_json(v: &impl Serialize) {
    println!("{}", serde_json::to_string_pretty(v).expect("serializable"));
}

fn write_report(path: &Path, report: &impl Serialize) -> CliResult<()> {
    write_json(path, report)?;
    print_json(report);
    Ok(())
}

fn write_log(
    common: &TrainArgs,
    stage: &str,
    train: &impl Serialize,
    config: &impl Serialize,
    items: usize,
    losses: &[f64],
    extra: Value,
) -> CliResult<()> {
    let path = common.log.clone().unwrap_or_else(|| common.out.join(LOG_FILE));
    let log = json!({
        "stage": stage,
        "data": common.data,
        "training_items": items,
        "config": config,
        "train": train,
        "epoch_losses": losses,
        "extra": extra,
    });
    write_json(&path, &log)?;
    Ok(())
}

fn train_seg(ctx: &Ctx, common: &TrainArgs, steps_per_epoch: usize, batch_size: usize) -> CliResult<()> {
    let songs = segmentation_set(&common.data, common.split)?;
    let features = par_map(&songs, ctx.threads(), |(_, audio, truth)| LabelledFeatures::from_song(audio, truth))
        .into_iter()
        .collect::<vocalid::Result<Vec<_>>>()?;
    let defaults = SegmenterTrainConfig::default();
    let train = SegmenterTrainConfig {
        epochs: common.epochs.unwrap_or(defaults.epochs),
        learning_rate: common.learning_rate.unwrap_or(defaults.learning_rate),
        steps_per_epoch,
        batch_size,
        seed: ctx.seed(defaults.seed),
    };
    let config = SegmenterConfig::default();
    let trained = train_segmenter_on_features(&features, &config, &train)?;
    trained.model.save(&common.out)?;
    write_log(common, "seg", &train, &config, songs.len(), &trained.epoch_losses, json!({}))
}

/// Finds vocal intervals: ground truth from a manifest or a segmenter.
enum Vocals {
    Truth(BTreeMap<PathBuf, SegmentTimeline>),
    Model(Box<SegmenterModel>, TransitionModel, f64),
}

impl Vocals {
    fn from_args(ctx: &Ctx, args: &VocalArgs) -> CliResult<Self> {
        let (tm, min_s, _) = ctx.hmm()?;
        match (&args.truth, &args.seg_model, ctx.config()?) {
            (Some(t), _, _) => Ok(Vocals::Truth(
                truth_timelines(t)?.into_iter().map(|(k, v)| (resolve(t, &k), v)).collect(),
            )),
            (None, Some(m), _) => Ok(Vocals::Model(Box::new(SegmenterModel::load(m)?), tm, min_s)),
            (None, None, Some(c)) => Ok(Vocals::Model(Box::new(c.segmenter()?), tm, min_s)),
            (None, None, None) => Err(CliError::Usage("need --seg-model, --truth or --config".into())),
        }
    }

    fn extract(&self, path: &Path, audio: &AudioBuffer) -> vocalid::Result<AudioBuffer> {
        match self {
            Vocals::Truth(map) => {
                let tl = map.get(path).ok_or_else(|| {
                    Error::InvalidInput(format!("{} has no entry in the segmentation manifest", path.display()))
                })?;
                vocal_audio(audio, tl)
            }
            Vocals::Model(model, tm, min_s) => vocal_audio(audio, &segment_song(audio, model, tm, *min_s)?.smoothed),
        }
    }
}

fn separator_for(ctx: &Ctx, args: &VocalArgs) -> CliResult<SeparatorModel> {
    match (&args.sep_model, ctx.config()?) {
        (Some(p), _) => Ok(SeparatorModel::load(p)?),
        (None, Some(c)) => Ok(c.separator()?),
        (None, None) => Err(CliError::Usage("need --sep-model or --config for separated features".into())),
    }
}

type SnippetSets = (Option<Vec<FeatureMatrix>>, Option<Vec<FeatureMatrix>>);

/// Separated and (optionally) mixture snippet features of one song.
fn song_features(
    path: &Path,
    vocals: &Vocals,
    separator: Option<&SeparatorModel>,
    raw: bool,
    snippet: f64,
) -> vocalid::Result<SnippetSets> {
    let audio = load_audio(path)?;
    let vocal = vocals.extract(path, &audio)?;
    let sep = match separator {
        Some(m) => Some(snippet_features(&vocal, FeatureSource::Separated(m), snippet)?),
        None => None,
    };
    let mix = if raw { Some(snippet_features(&vocal, FeatureSource::Mixture, snippet)?) } else { None };
    Ok((sep, mix))
}

fn train_cls(ctx: &Ctx, common: &TrainArgs, args: &VocalArgs, raw: bool) -> CliResult<()> {
    let entries = classification_set(&common.data, common.split)?;
    let vocals = Vocals::from_args(ctx, args)?;
    let separator = if raw { None } else { Some(separator_for(ctx, args)?) };
    let (_, _, snippet) = ctx.hmm()?;
    let labels = LabelMap::from_names(entries.iter().map(|(_, _, s)| s.as_str()));
    let results = par_map(&entries, ctx.threads(), |(_, path, _)| song_features(path, &vocals, separator.as_ref(), raw, snippet));

    let mut data = Vec::new();
    let mut skipped = Vec::new();
    for ((key, _, singer), r) in entries.iter().zip(results) {
        let (sep, mix) = match r {
            Err(Error::NoVocalContent) => {
                eprintln!("note: no vocal content in {key}, skipped");
                skipped.push(key.clone());
                continue;
            }
            other => other?,
        };
        let label = labels.index_of(singer)?;
        for features in sep.or(mix).unwrap_or_default() {
            data.push(LabelledSequence { features, label });
        }
    }
    let defaults = ClassifierTrainConfig::default();
    let train = ClassifierTrainConfig {
        epochs: common.epochs.unwrap_or(defaults.epochs),
        learning_rate: common.learning_rate.unwrap_or(defaults.learning_rate),
        seed: ctx.seed(defaults.seed),
        ..defaults
    };
    let config = ClassifierConfig::new(labels.len());
    let trained = train_classifier(&data, labels, &config, &train)?;
    trained.model.save(&common.out)?;
    let extra = json!({ "features": if raw { "mixture" } else { "separated" }, "snippets": data.len(), "skipped": skipped });
    write_log(common, "cls", &train, &config, entries.len(), &trained.epoch_losses, extra)
}

fn identify(ctx: &Ctx, input: &Path, raw: bool) -> CliResult<()> {
    let cfg = ctx.require_config("identify")?;
    let segmenter = cfg.segmenter()?;
    let classifier = cfg.classifier(raw)?;
    let separator = if raw { None } else { Some(cfg.separator()?) };
    let source = match &separator {
        Some(m) => FeatureSource::Separated(m),
        None => FeatureSource::Mixture,
    };
    let pipeline = Pipeline {
        transitions: cfg.hmm,
        min_segment_seconds: cfg.min_segment_seconds,
        snippet_seconds: cfg.snippet_seconds,
        ..Pipeline::new(&segmenter, source, &classifier)
    };
    let p = pipeline.predict_song(&load_audio(input)?)?;
    let named = |d: &[f64]| -> BTreeMap<String, f64> {
        classifier.labels.names.iter().cloned().zip(d.iter().copied()).collect()
    };
    print_json(&json!({
        "singer": p.name,
        "prob": p.distribution[p.singer],
        "distribution": named(&p.distribution),
        "snippets": p.snippets.iter().map(|d| named(d)).collect::<Vec<_>>(),
        "features": if raw { "mixture" } else { "separated" },
    }));
    Ok(())
}

fn eval_seg(ctx: &Ctx, common: &EvalArgs, seg_model: &Path) -> CliResult<()> {
    let songs = segmentation_set(&common.data, common.split)?;
    let model = SegmenterModel::load(seg_model)?;
    let (tm, min_s, _) = ctx.hmm()?;
    let segmented = par_map(&songs, ctx.threads(), |(id, audio, truth)| {
        Ok((id.clone(), segment_song(audio, &model, &tm, min_s)?, truth.clone()))
    })
    .into_iter()
    .collect::<vocalid::Result<Vec<_>>>()?;
    write_report(&common.report, &segmentation_report(&segmented)?)
}

#[derive(Deserialize)]
struct PredictionLine {
    truth: String,
    predicted: String,
}

fn score_predictions(path: &Path, report: &Path) -> CliResult<()> {
    let lines: Vec<PredictionLine> = read_jsonl(path)?;
    let names: BTreeSet<&str> = lines.iter().flat_map(|l| [l.truth.as_str(), l.predicted.as_str()]).collect();
    let labels = LabelMap::from_names(names);
    let index = |n: &str| labels.index_of(n);
    let truth = lines.iter().map(|l| index(&l.truth)).collect::<vocalid::Result<Vec<_>>>()?;
    let pred = lines.iter().map(|l| index(&l.predicted)).collect::<vocalid::Result<Vec<_>>>()?;
    let metrics = prf_metrics(&pred, &truth, labels.len())?;
    write_report(report, &json!({ "singers": labels.names, "metrics": metrics }))
}

fn eval_cls(
    ctx: &Ctx,
    data: &Path,
    report: &Path,
    args: &VocalArgs,
    folds: usize,
    epochs: usize,
    split: SplitFilter,
) -> CliResult<()> {
    let entries = classification_set(data, split)?;
    let vocals = Vocals::from_args(ctx, args)?;
    let separator = separator_for(ctx, args)?;
    let (_, _, snippet) = ctx.hmm()?;
    let results = par_map(&entries, ctx.threads(), |(_, path, _)| song_features(path, &vocals, Some(&separator), true, snippet));

    let (mut separated, mut mixture, mut skipped) = (Vec::new(), Vec::new(), Vec::new());
    for ((key, _, singer), r) in entries.iter().zip(results) {
        match r {
            Err(Error::NoVocalContent) => skipped.push(key.clone()),
            other => {
                let (sep, mix) = other?;
                let song = |snippets| SongFeatures { id: key.clone(), singer: singer.clone(), snippets };
                separated.push(song(sep.unwrap_or_default()));
                mixture.push(song(mix.unwrap_or_default()));
            }
        }
    }
    let seed = ctx.seed(0);
    let train = ClassifierTrainConfig { epochs, seed, ..Default::default() };
    let config = ClassifierConfig::new(2);
    let sep_report = cross_validate(&separated, folds, seed, &config, &train)?;
    let raw_report = cross_validate(&mixture, folds, seed, &config, &train)?;
    let out = json!({
        "k": folds,
        "seed": seed,
        "train": train,
        "separated": sep_report,
        "raw": raw_report,
        "separated_at_least_raw": sep_report.song_level.macro_f1 >= raw_report.song_level.macro_f1,
        "skipped": skipped,
    });
    write_report(report, &out)
}
