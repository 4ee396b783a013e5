use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use vocalid_nn::seeded;

use super::metrics::{prf_metrics, PrfReport};
use super::net::{classnet_forward, ClassifierConfig, LabelMap};
use super::pipeline::{argmax, mean_distribution};
use super::train::{train_classifier, ClassifierTrainConfig, LabelledSequence};
use crate::error::{Error, Result};
use crate::signal::FeatureMatrix;

/// Fold index of every item. Within each class the items are shuffled, then
/// dealt round-robin starting at a fold that advances from class to class,
/// so fold sizes stay balanced overall as well as per class.
pub fn stratified_kfold(labels: &[String], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 folds, got {k}")));
    }
    let mut classes: Vec<&str> = labels.iter().map(String::as_str).collect();
    classes.sort_unstable();
    classes.dedup();
    let mut rng = seeded(seed);
    let mut fold_of = vec![0usize; labels.len()];
    let mut start = 0usize;
    for class in classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.len() < k {
            return Err(Error::TooFewForFolds { class: class.to_string(), count: members.len(), k });
        }
        members.shuffle(&mut rng);
        for (j, &i) in members.iter().enumerate() {
            fold_of[i] = (start + j) % k;
        }
        start = (start + members.len()) % k;
    }
    Ok(fold_of)
}

/// Snippet features of one song with its singer.
#[derive(Clone, Debug)]
pub struct SongFeatures {
    pub id: String,
    pub singer: String,
    pub snippets: Vec<FeatureMatrix>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub train_songs: usize,
    pub test_songs: usize,
    pub song_macro_f1: f64,
    pub snippet_macro_f1: f64,
    pub final_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SongOutcome {
    pub id: String,
    pub fold: usize,
    pub truth: String,
    pub predicted: String,
}

/// Metrics pooled over all held-out folds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub k: usize,
    pub singers: Vec<String>,
    pub folds: Vec<FoldReport>,
    pub song_level: PrfReport,
    pub snippet_level: PrfReport,
    pub songs: Vec<SongOutcome>,
}

/// Stratified k-fold evaluation: split by song, train a classifier on each
/// training part, and score held-out songs both per snippet and per song
/// (mean of snippet distributions).
pub fn cross_validate(
    songs: &[SongFeatures],
    k: usize,
    split_seed: u64,
    config: &ClassifierConfig,
    train: &ClassifierTrainConfig,
) -> Result<CvReport> {
    if let Some(s) = songs.iter().find(|s| s.snippets.is_empty()) {
        return Err(Error::InvalidInput(format!("song {} has no snippets", s.id)));
    }
    let singers: Vec<String> = songs.iter().map(|s| s.singer.clone()).collect();
    let labels = LabelMap::from_names(singers.iter().map(String::as_str));
    let config = ClassifierConfig { num_singers: labels.len(), ..config.clone() };
    let truth: Vec<usize> = singers.iter().map(|s| labels.index_of(s)).collect::<Result<_>>()?;
    let fold_of = stratified_kfold(&singers, k, split_seed)?;

    let mut folds = Vec::with_capacity(k);
    let (mut song_pred, mut song_truth) = (Vec::new(), Vec::new());
    let (mut snip_pred, mut snip_truth) = (Vec::new(), Vec::new());
    let mut outcomes = Vec::new();
    for fold in 0..k {
        let data: Vec<LabelledSequence> = songs
            .iter()
            .zip(&truth)
            .zip(&fold_of)
            .filter(|(_, &f)| f != fold)
            .flat_map(|((s, &label), _)| {
                s.snippets.iter().map(move |f| LabelledSequence { features: f.clone(), label })
            })
            .collect();
        let trained = train_classifier(&data, labels.clone(), &config, train)?;
        let (mut fp, mut ft, mut fsp, mut fst) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (i, song) in songs.iter().enumerate().filter(|&(i, _)| fold_of[i] == fold) {
            let dists = song.snippets.iter().map(|f| classnet_forward(f, &trained.model)).collect::<Result<Vec<_>>>()?;
            for d in &dists {
                fsp.push(argmax(d));
                fst.push(truth[i]);
            }
            let predicted = argmax(&mean_distribution(&dists));
            fp.push(predicted);
            ft.push(truth[i]);
            outcomes.push(SongOutcome {
                id: song.id.clone(),
                fold,
                truth: song.singer.clone(),
                predicted: labels.name(predicted).to_string(),
            });
        }
        folds.push(FoldReport {
            fold,
            train_songs: fold_of.iter().filter(|&&f| f != fold).count(),
            test_songs: ft.len(),
            song_macro_f1: prf_metrics(&fp, &ft, labels.len())?.macro_f1,
            snippet_macro_f1: prf_metrics(&fsp, &fst, labels.len())?.macro_f1,
            final_loss: trained.epoch_losses.last().copied().unwrap_or(f64::NAN),
        });
        song_pred.extend(fp);
        song_truth.extend(ft);
        snip_pred.extend(fsp);
        snip_truth.extend(fst);
    }
    Ok(CvReport {
        k,
        singers: labels.names.clone(),
        folds,
        song_level: prf_metrics(&song_pred, &song_truth, labels.len())?,
        snippet_level: prf_metrics(&snip_pred, &snip_truth, labels.len())?,
        songs: outcomes,
    })
}
