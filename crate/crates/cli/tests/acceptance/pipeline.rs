use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use serde_json::{json, Value};
use vocalid::classifier::ClassifierModel;
use vocalid::segmenter::SegmenterModel;
use vocalid::separator::SeparatorModel;
use vocalid::signal::write_wav;
use vocalid::synthdata::synth_instrumental;
use vocalid::Error;

use crate::{ensure, within, Outcome};

const NO_VOCAL_EXIT: i32 = 3;

/// Working directory shared by the pipeline criteria; later criteria reuse
/// the data and bundles produced by earlier ones.
pub struct Stage {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Stage {
    pub fn new() -> Result<Self, String> {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let root = dir.path().to_path_buf();
        Ok(Self { _dir: dir, root })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn data(&self, file: &str) -> PathBuf {
        self.root.join("data").join(file)
    }

    /// Generates the default dataset on first use.
    fn ensure_data(&self) -> Result<(), String> {
        if !self.data("dataset.json").exists() {
            run(&["synth-data", "--out", s(&self.path("data"))])?;
        }
        Ok(())
    }

    fn require(&self, name: &str) -> Result<PathBuf, String> {
        let p = self.path(name);
        ensure!(p.join("weights.bin").exists(), "bundle {name} missing; an earlier criterion did not produce it");
        Ok(p)
    }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn exec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vocalid")).args(args).output().expect("vocalid binary runs")
}

fn run(args: &[&str]) -> Result<Output, String> {
    let out = exec(args);
    ensure!(
        out.status.success(),
        "`vocalid {}` exited {:?}: {}",
        args.join(" "),
        out.status.code(),
        String::from_utf8_lossy(&out.stderr).trim()
    );
    Ok(out)
}

fn timed(args: &[&str]) -> Result<Duration, String> {
    let start = Instant::now();
    run(args)?;
    Ok(start.elapsed())
}

fn read_json(path: &Path) -> Result<Value, String> {
    let bytes = fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_slice(&bytes).map_err(|e| format!("{}: {e}", path.display()))
}

fn num(v: &Value, pointer: &str) -> Result<f64, String> {
    v.pointer(pointer).and_then(Value::as_f64).ok_or_else(|| format!("report lacks {pointer}"))
}

fn same_bytes(a: &Path, b: &Path) -> Result<(), String> {
    let read = |p: &Path| fs::read(p).map_err(|e| format!("{}: {e}", p.display()));
    ensure!(read(a)? == read(b)?, "{} and {} differ", a.display(), b.display());
    Ok(())
}

pub fn segmentation(st: &mut Stage) -> Outcome {
    st.ensure_data()?;
    let (seg, report) = (st.path("seg"), st.path("seg_report.json"));
    let train = timed(&["train-seg", "--data", s(&st.data("segmentation.jsonl")), "--out", s(&seg)])?;
    let eval = timed(&[
        "eval-seg",
        "--data",
        s(&st.data("segmentation.jsonl")),
        "--seg-model",
        s(&seg),
        "--report",
        s(&report),
    ])?;
    let r = read_json(&report)?;
    let accuracy = num(&r, "/cnn_viterbi/accuracy")?;
    let (cnn, smoothed) = (num(&r, "/cnn/mean_precision")?, num(&r, "/cnn_viterbi/mean_precision")?);
    ensure!(accuracy >= 0.95, "frame accuracy {accuracy:.4} below 0.95");
    ensure!(smoothed >= cnn, "smoothed mean precision {smoothed:.4} below cnn {cnn:.4}");
    within(train + eval, Duration::from_secs(15 * 60), "train + eval")?;
    Ok(format!(
        "accuracy {accuracy:.4}, mean precision cnn {cnn:.4} vs cnn+viterbi {smoothed:.4}, train {:.0} s + eval {:.0} s",
        train.as_secs_f64(),
        eval.as_secs_f64()
    ))
}

pub fn separation(st: &mut Stage) -> Outcome {
    st.ensure_data()?;
    let data = st.data("separation.jsonl");
    let mut total = Duration::ZERO;
    let mut medians = Vec::new();
    for kind in ["gru", "lstm"] {
        let (model, report) = (st.path(&format!("sep_{kind}")), st.path(&format!("sep_{kind}_report.json")));
        total += timed(&["train-sep", "--data", s(&data), "--out", s(&model), "--skip-kind", kind])?;
        total += timed(&["eval-sep", "--data", s(&data), "--sep-model", s(&model), "--report", s(&report)])?;
        let r = read_json(&report)?;
        medians.push((num(&r, "/median")?, num(&r, "/median_improvement")?));
    }
    let (gru, lstm) = (medians[0], medians[1]);
    ensure!(gru.1 >= 5.0, "gru median improvement {:.2} dB below 5 dB", gru.1);
    ensure!(gru.0 >= lstm.0 - 0.5, "gru median {:.2} dB more than 0.5 dB below lstm {:.2} dB", gru.0, lstm.0);
    within(total, Duration::from_secs(30 * 60), "train + eval")?;
    Ok(format!(
        "gru median {:.2} dB (+{:.2}), lstm median {:.2} dB (+{:.2}), {:.0} s",
        gru.0,
        gru.1,
        lstm.0,
        lstm.1,
        total.as_secs_f64()
    ))
}

pub fn classification(st: &mut Stage) -> Outcome {
    let (seg, sep) = (st.require("seg")?, st.require("sep_gru")?);
    let report = st.path("cls_report.json");
    let elapsed = timed(&[
        "eval-cls",
        "--data",
        s(&st.data("classification.jsonl")),
        "--seg-model",
        s(&seg),
        "--sep-model",
        s(&sep),
        "--report",
        s(&report),
    ])?;
    let r = read_json(&report)?;
    let separated = num(&r, "/separated/song_level/macro_f1")?;
    let raw = num(&r, "/raw/song_level/macro_f1")?;
    let snippet = num(&r, "/separated/snippet_level/macro_f1")?;
    ensure!(separated >= 0.9, "separated macro F1 {separated:.4} below 0.90");
    ensure!(separated >= raw, "separated macro F1 {separated:.4} below raw {raw:.4}");
    within(elapsed, Duration::from_secs(30 * 60), "cross-validation")?;
    Ok(format!(
        "5-fold song macro F1 separated {separated:.4} vs raw {raw:.4} (snippet {snippet:.4}), {:.0} s",
        elapsed.as_secs_f64()
    ))
}

pub fn determinism(st: &mut Stage) -> Outcome {
    let sep = st.require("sep_gru")?;
    let mut checked = Vec::new();

    let small = |name: &str| -> Result<PathBuf, String> {
        let out = st.path(name);
        run(&["synth-data", "--out", s(&out), "--singers", "2", "--clips-per-singer", "3", "--clip-seconds", "8", "--seed", "9"])?;
        Ok(out)
    };
    let (a, b) = (small("det_data_a")?, small("det_data_b")?);
    for f in ["dataset.json", "segmentation.jsonl", "separation.jsonl", "classification.jsonl", "audio/singer_02_c001.mix.wav"] {
        same_bytes(&a.join(f), &b.join(f))?;
    }
    checked.push("synth-data");

    let bundle_files = ["weights.bin", "arch.json", "training_log.json"];
    for run_id in ["a", "b"] {
        run(&[
            "train-seg",
            "--data",
            s(&a.join("segmentation.jsonl")),
            "--out",
            s(&st.path(&format!("det_seg_{run_id}"))),
            "--epochs",
            "1",
            "--steps-per-epoch",
            "4",
        ])?;
        run(&[
            "train-sep",
            "--data",
            s(&a.join("separation.jsonl")),
            "--out",
            s(&st.path(&format!("det_sep_{run_id}"))),
            "--epochs",
            "1",
        ])?;
        run(&[
            "train-cls",
            "--data",
            s(&st.data("classification.jsonl")),
            "--out",
            s(&st.path(&format!("det_cls_{run_id}"))),
            "--truth",
            s(&st.data("segmentation.jsonl")),
            "--raw",
            "--epochs",
            "2",
        ])?;
    }
    for stage in ["seg", "sep", "cls"] {
        for f in bundle_files {
            same_bytes(&st.path(&format!("det_{stage}_a")).join(f), &st.path(&format!("det_{stage}_b")).join(f))?;
        }
    }
    same_bytes(&st.path("det_cls_a/meta.json"), &st.path("det_cls_b/meta.json"))?;
    checked.extend(["train-seg", "train-sep", "train-cls"]);

    let again = st.path("sep_gru_report_again.json");
    run(&["eval-sep", "--data", s(&st.data("separation.jsonl")), "--sep-model", s(&sep), "--report", s(&again)])?;
    same_bytes(&st.path("sep_gru_report.json"), &again)?;
    checked.push("eval-sep");

    let seg_small = st.path("det_seg_a");
    for run_id in ["a", "b"] {
        run(&[
            "eval-seg",
            "--data",
            s(&a.join("segmentation.jsonl")),
            "--seg-model",
            s(&seg_small),
            "--split",
            "all",
            "--report",
            s(&st.path(&format!("det_seg_report_{run_id}.json"))),
        ])?;
    }
    same_bytes(&st.path("det_seg_report_a.json"), &st.path("det_seg_report_b.json"))?;
    checked.push("eval-seg");

    Ok(format!("identical bytes on repeat for {}", checked.join(", ")))
}

pub fn persistence(st: &mut Stage) -> Outcome {
    let seg = st.require("seg")?;
    let sep = st.require("sep_gru")?;
    let cls = st.require("det_cls_a")?;
    let resave = |name: &str, save: &dyn Fn(&Path) -> Result<(), Error>, original: &Path| -> Result<(), String> {
        let out = st.path(&format!("resaved_{name}"));
        save(&out).map_err(|e| format!("{name}: {e}"))?;
        same_bytes(&original.join("weights.bin"), &out.join("weights.bin"))?;
        same_bytes(&original.join("arch.json"), &out.join("arch.json"))
    };
    let m = SegmenterModel::load(&seg).map_err(|e| e.to_string())?;
    resave("seg", &|p| m.save(p), &seg)?;
    let m = SeparatorModel::load(&sep).map_err(|e| e.to_string())?;
    resave("sep", &|p| m.save(p), &sep)?;
    let m = ClassifierModel::load(&cls).map_err(|e| e.to_string())?;
    resave("cls", &|p| m.save(p), &cls)?;

    let corrupt = st.path("resaved_sep");
    let weights = corrupt.join("weights.bin");
    let mut bytes = fs::read(&weights).map_err(|e| e.to_string())?;
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x10;
    fs::write(&weights, &bytes).map_err(|e| e.to_string())?;
    match SeparatorModel::load(&corrupt) {
        Ok(_) => return Err("corrupted weights.bin loaded without error".into()),
        Err(e) => ensure!(e.to_string().to_lowercase().contains("checksum"), "corruption rejected with unexpected error: {e}"),
    }
    let out = exec(&["separate", "--in", s(&st.data("audio/singer_01_c000.mix.wav")), "--out", s(&st.path("x.wav")), "--sep-model", s(&corrupt)]);
    ensure!(out.status.code() == Some(1), "cli on corrupted bundle exited {:?}", out.status.code());
    Ok("segmenter, separator and classifier resave byte-identically; flipped byte rejected by checksum".into())
}

pub fn end_to_end(st: &mut Stage) -> Outcome {
    let (seg, sep) = (st.require("seg")?, st.require("sep_gru")?);
    let cls = st.path("cls_e2e");
    run(&[
        "train-cls",
        "--data",
        s(&st.data("classification.jsonl")),
        "--out",
        s(&cls),
        "--truth",
        s(&st.data("segmentation.jsonl")),
        "--sep-model",
        s(&sep),
    ])?;
    let config = st.path("pipeline.json");
    let body = json!({ "segmenter": seg, "separator": sep, "classifier": cls });
    fs::write(&config, serde_json::to_vec_pretty(&body).unwrap()).map_err(|e| e.to_string())?;

    let manifest = fs::read_to_string(st.data("classification.jsonl")).map_err(|e| e.to_string())?;
    let mut held_out = Vec::new();
    for line in manifest.lines().filter(|l| !l.trim().is_empty()) {
        let v: Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
        if v["split"] == "test" {
            held_out.push((st.data(v["path"].as_str().unwrap()), v["singer"].as_str().unwrap().to_string()));
        }
    }
    ensure!(!held_out.is_empty(), "no held-out clips in the manifest");
    let mut correct = 0;
    for (path, singer) in &held_out {
        let out = run(&["--config", s(&config), "identify", "--in", s(path)])?;
        let v: Value = serde_json::from_slice(&out.stdout).map_err(|e| format!("identify output: {e}"))?;
        let dist = v["distribution"].as_object().ok_or("identify output lacks a distribution")?;
        let sum: f64 = dist.values().filter_map(Value::as_f64).sum();
        ensure!((sum - 1.0).abs() <= 1e-9, "{}: distribution sums to {sum}", path.display());
        ensure!(dist.values().all(|p| p.as_f64().is_some_and(|p| (0.0..=1.0).contains(&p))), "probability out of range");
        if v["singer"] == singer.as_str() {
            correct += 1;
        }
    }
    let rate = correct as f64 / held_out.len() as f64;
    ensure!(rate >= 0.9, "identified {correct}/{} held-out clips", held_out.len());

    let band = st.path("instrumental.wav");
    write_wav(&band, &synth_instrumental(8.0, 4242).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let out = exec(&["--config", s(&config), "identify", "--in", s(&band)]);
    ensure!(
        out.status.code() == Some(NO_VOCAL_EXIT),
        "instrumental input exited {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr).trim()
    );
    Ok(format!("{correct}/{} held-out clips correct, distributions sum to 1, instrumental exits {NO_VOCAL_EXIT}", held_out.len()))
}
