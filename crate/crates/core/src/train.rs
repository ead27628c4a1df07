//! Stratified k-fold cross-validation of the classifier.
//!
//! Folds are dealt per class: each class's items are shuffled with the plan
//! seed and dealt round-robin, the dealing position carrying over from one
//! class to the next. Fold sizes therefore differ by at most one overall and
//! per class. Training shuffles every epoch from a per-fold stream, so a
//! run is a pure function of the dataset and [`TrainConfig`].

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dsp::MelSpectrogram;
use crate::fingerprint::derive_seed;
use crate::model::{argmax, input_tensor, ModelConfig, ModelParams};
use crate::nn::{adam_step, AdamConfig, AdamState, Mode, Tensor};
use crate::{EmotionLabel, Error, Result};

/// Seed-derivation tags, so that streams never collide.
const TAG_PLAN: u64 = 1;
const TAG_INIT: u64 = 2;
const TAG_SHUFFLE: u64 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub id: String,
    pub speaker: String,
    pub spec: MelSpectrogram,
    pub label: EmotionLabel,
}

/// Labeled spectrograms with unique ids and one common shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    examples: Vec<Example>,
}

impl Dataset {
    pub fn new(examples: Vec<Example>) -> Result<Self> {
        let mut ids = BTreeSet::new();
        for e in &examples {
            if !ids.insert(e.id.as_str()) {
                return Err(Error::InvalidDataset(format!("duplicate utterance id {:?}", e.id)));
            }
        }
        if let Some(first) = examples.first() {
            let shape = (first.spec.n_mels(), first.spec.n_frames());
            if let Some(e) = examples.iter().find(|e| (e.spec.n_mels(), e.spec.n_frames()) != shape) {
                return Err(Error::InvalidDataset(format!(
                    "utterance {:?} is {}x{}, expected {}x{}",
                    e.id,
                    e.spec.n_mels(),
                    e.spec.n_frames(),
                    shape.0,
                    shape.1
                )));
            }
        }
        Ok(Self { examples })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn get(&self, index: usize) -> &Example {
        &self.examples[index]
    }

    /// `(n_mels, n_frames)` shared by every example.
    pub fn spec_shape(&self) -> Option<(usize, usize)> {
        self.examples.first().map(|e| (e.spec.n_mels(), e.spec.n_frames()))
    }

    pub fn class_counts(&self) -> [usize; EmotionLabel::COUNT] {
        let mut counts = [0; EmotionLabel::COUNT];
        for e in &self.examples {
            counts[e.label.index()] += 1;
        }
        counts
    }
}

/// Partition of dataset indices into `k` test folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    folds: Vec<Vec<usize>>,
}

impl FoldPlan {
    /// Builds a plan from explicit folds, checking that they partition
    /// `0..n`.
    pub fn from_folds(folds: Vec<Vec<usize>>, n: usize, seed: u64) -> Result<Self> {
        let mut seen = vec![false; n];
        for &i in folds.iter().flatten() {
            if i >= n || core::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidDataset(format!("fold index {i} repeated or out of range")));
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidDataset("folds do not cover the dataset".into()));
        }
        Ok(Self { k: folds.len(), seed, folds })
    }

    pub fn folds(&self) -> &[Vec<usize>] {
        &self.folds
    }

    /// Test indices of `fold`, in ascending order.
    pub fn test_indices(&self, fold: usize) -> Result<&[usize]> {
        self.folds
            .get(fold)
            .map(Vec::as_slice)
            .ok_or(Error::FoldOutOfRange { fold, k: self.k })
    }

    /// Every index outside `fold`, ascending.
    pub fn train_indices(&self, fold: usize) -> Result<Vec<usize>> {
        self.test_indices(fold)?;
        let mut idx: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|&(f, _)| f != fold)
            .flat_map(|(_, v)| v.iter().copied())
            .collect();
        idx.sort_unstable();
        Ok(idx)
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.folds.iter().map(Vec::len).collect()
    }
}

/// Stratified split; every class needs at least `k` members.
pub fn kfold_split(d: &Dataset, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::InvalidConfig(format!("k = {k}: cross-validation needs at least 2 folds")));
    }
    let counts = d.class_counts();
    for label in EmotionLabel::ALL {
        let count = counts[label.index()];
        if count < k {
            return Err(Error::ClassTooSmall { class: label, count, k });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[TAG_PLAN]));
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for label in EmotionLabel::ALL {
        let mut members: Vec<usize> = (0..d.len()).filter(|&i| d.get(i).label == label).collect();
        members.shuffle(&mut rng);
        for i in members {
            folds[next].push(i);
            next = (next + 1) % k;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    FoldPlan::from_folds(folds, d.len(), seed)
}

/// Speaker-disjoint split: whole speakers are assigned, largest first, to
/// the currently smallest fold. Class balance is not guaranteed.
pub fn speaker_kfold_split(d: &Dataset, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::InvalidConfig(format!("k = {k}: cross-validation needs at least 2 folds")));
    }
    let mut by_speaker: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, e) in d.examples().iter().enumerate() {
        by_speaker.entry(e.speaker.as_str()).or_default().push(i);
    }
    if by_speaker.len() < k {
        return Err(Error::InvalidDataset(format!(
            "{} speakers cannot fill {k} speaker-disjoint folds",
            by_speaker.len()
        )));
    }
    let mut groups: Vec<Vec<usize>> = by_speaker.into_values().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[TAG_PLAN]));
    groups.shuffle(&mut rng);
    // Stable sort keeps the shuffled order among equal sizes.
    groups.sort_by_key(|g| core::cmp::Reverse(g.len()));
    let mut folds = vec![Vec::new(); k];
    for g in groups {
        let smallest = (0..k).min_by_key(|&f| (folds[f].len(), f)).unwrap_or(0);
        folds[smallest].extend(g);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    FoldPlan::from_folds(folds, d.len(), seed)
}

/// Square count matrix; rows are ground truth, columns predictions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    n: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(n: usize) -> Self {
        Self { n, counts: vec![0; n * n] }
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Shape("confusion matrix rows must form a square".into()));
        }
        Ok(Self { n, counts: rows.concat() })
    }

    pub fn classes(&self) -> usize {
        self.n
    }

    pub fn record(&mut self, truth: usize, predicted: usize) {
        self.counts[truth * self.n + predicted] += 1;
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.n + predicted]
    }

    pub fn row(&self, truth: usize) -> &[u64] {
        &self.counts[truth * self.n..(truth + 1) * self.n]
    }

    pub fn row_sum(&self, truth: usize) -> u64 {
        self.row(truth).iter().sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn add(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.n != self.n {
            return Err(Error::Shape(format!("adding {}x{0} to {}x{1} confusion", other.n, self.n)));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    /// Mean recall over the classes that have at least one test item.
    pub fn recall_over_present(&self) -> Option<f64> {
        let recalls: Vec<f64> = (0..self.n)
            .filter(|&i| self.row_sum(i) > 0)
            .map(|i| self.get(i, i) as f64 / self.row_sum(i) as f64)
            .collect();
        (!recalls.is_empty()).then(|| recalls.iter().sum::<f64>() / recalls.len() as f64)
    }
}

/// Unweighted accuracy: the mean of per-class recalls. Every row needs at
/// least one item.
pub fn unweighted_accuracy(c: &ConfusionMatrix) -> Result<f64> {
    if let Some(empty) = (0..c.n).find(|&i| c.row_sum(i) == 0) {
        return Err(Error::EmptyClassRow(empty));
    }
    if c.n == 0 {
        return Err(Error::Shape("empty confusion matrix".into()));
    }
    let total: f64 = (0..c.n).map(|i| c.get(i, i) as f64 / c.row_sum(i) as f64).sum();
    Ok(total / c.n as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub k: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a strictly lower mean training loss before stopping.
    pub patience: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    pub speaker_disjoint: bool,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            k: 5,
            batch_size: 16,
            max_epochs: 50,
            patience: 10,
            adam: AdamConfig::default(),
            seed: 0,
            speaker_disjoint: false,
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::InvalidConfig(format!(
                "batch_size = {}: train-mode batch normalization needs at least 2",
                self.batch_size
            )));
        }
        if self.max_epochs == 0 {
            return Err(Error::InvalidConfig("max_epochs must be positive".into()));
        }
        if self.k < 2 {
            return Err(Error::InvalidConfig(format!("k = {}: need at least 2 folds", self.k)));
        }
        self.model.validate()
    }

    pub fn plan(&self, d: &Dataset) -> Result<FoldPlan> {
        if self.speaker_disjoint {
            speaker_kfold_split(d, self.k, self.seed)
        } else {
            kfold_split(d, self.k, self.seed)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub index: usize,
    pub truth: EmotionLabel,
    pub predicted: EmotionLabel,
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldReport {
    pub fold: usize,
    pub confusion: ConfusionMatrix,
    /// Mean recall over the classes present in the held-out fold (every
    /// class, for stratified plans).
    pub ua: f64,
    /// Mean training loss per completed epoch.
    pub epoch_losses: Vec<f64>,
    pub predictions: Vec<Prediction>,
}

/// Splits shuffled indices into batches; a trailing batch of one joins the
/// previous batch, since train-mode batch normalization needs two items.
pub fn batches(order: &[usize], batch_size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(batch_size.max(1)).collect();
    if out.len() > 1 && out.last().map(|b| b.len()) == Some(1) {
        out.pop();
        let start = (out.len() - 1) * batch_size;
        let last = out.len() - 1;
        out[last] = &order[start..];
    }
    out
}

fn check_dataset_shape(d: &Dataset, model: &ModelConfig) -> Result<()> {
    match d.spec_shape() {
        None => Err(Error::InvalidDataset("no utterances".into())),
        Some((m, f)) if (m, f) != (model.n_mels, model.frames) => Err(Error::InvalidDataset(format!(
            "spectrograms are {m}x{f} but the model expects {}x{}",
            model.n_mels, model.frames
        ))),
        Some(_) => Ok(()),
    }
}

/// Trains a fresh model on every fold but `fold` and evaluates it, in eval
/// mode, on `fold`.
pub fn train_fold(
    d: &Dataset,
    plan: &FoldPlan,
    fold: usize,
    cfg: &TrainConfig,
) -> Result<(FoldReport, ModelParams)> {
    cfg.validate()?;
    check_dataset_shape(d, &cfg.model)?;
    let test = plan.test_indices(fold)?;
    let train = plan.train_indices(fold)?;
    if test.iter().any(|i| train.binary_search(i).is_ok()) {
        return Err(Error::InvalidDataset(format!("fold {fold} test items leak into training")));
    }
    if train.len() < 2 {
        return Err(Error::BatchTooSmall(train.len()));
    }

    let mut params = ModelParams::build(&cfg.model, derive_seed(cfg.seed, &[TAG_INIT, fold as u64]))?;
    let mut adam = AdamState::new(cfg.adam, params.trainable());
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[TAG_SHUFFLE, fold as u64]));
    let mut order = train.clone();
    let mut epoch_losses = Vec::new();
    let mut best = f64::INFINITY;
    let mut stale = 0;
    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in batches(&order, cfg.batch_size) {
            let inputs: Vec<Tensor> = batch.iter().map(|&i| input_tensor(&d.get(i).spec)).collect();
            let refs: Vec<&Tensor> = inputs.iter().collect();
            let labels: Vec<usize> = batch.iter().map(|&i| d.get(i).label.index()).collect();
            let (loss, grads) = params.loss_and_grads(&refs, &labels, Mode::Train)?;
            if !loss.is_finite() {
                return Err(Error::InvalidDataset(format!("non-finite training loss in fold {fold}, epoch {epoch}")));
            }
            total += loss * batch.len() as f64;
            adam_step(&mut params.trainable_mut(), &grads.refs(), &mut adam)?;
        }
        let mean = total / order.len() as f64;
        epoch_losses.push(mean);
        log::info!("fold {fold} epoch {}: mean training loss {mean:.6}", epoch + 1);
        if mean < best {
            best = mean;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                log::info!("fold {fold}: no improvement for {stale} epochs, stopping");
                break;
            }
        }
    }

    let mut confusion = ConfusionMatrix::new(EmotionLabel::COUNT);
    let mut predictions = Vec::with_capacity(test.len());
    for &i in test {
        let e = d.get(i);
        let probs = params.predict_spectrogram(&e.spec)?;
        let predicted = EmotionLabel::from_index(argmax(&probs)).unwrap_or(EmotionLabel::Angry);
        confusion.record(e.label.index(), predicted.index());
        predictions.push(Prediction { index: i, truth: e.label, predicted, probs });
    }
    let ua = confusion.recall_over_present().unwrap_or(0.0);
    log::info!("fold {fold}: held-out UA {ua:.4}");
    Ok((FoldReport { fold, confusion, ua, epoch_losses, predictions }, params))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    pub plan: FoldPlan,
    pub folds: Vec<FoldReport>,
    pub mean_ua: f64,
    pub pooled: ConfusionMatrix,
}

/// Runs every fold; `on_fold` sees each fold's report and trained
/// parameters as soon as the fold finishes (for checkpointing).
pub fn cross_validate_with(
    d: &Dataset,
    cfg: &TrainConfig,
    mut on_fold: impl FnMut(&FoldReport, &ModelParams) -> Result<()>,
) -> Result<CvReport> {
    cfg.validate()?;
    check_dataset_shape(d, &cfg.model)?;
    let plan = cfg.plan(d)?;
    let mut folds = Vec::with_capacity(plan.k);
    let mut pooled = ConfusionMatrix::new(EmotionLabel::COUNT);
    for fold in 0..plan.k {
        let (report, params) = train_fold(d, &plan, fold, cfg)?;
        on_fold(&report, &params)?;
        pooled.add(&report.confusion)?;
        folds.push(report);
    }
    let mean_ua = folds.iter().map(|f| f.ua).sum::<f64>() / folds.len() as f64;
    Ok(CvReport { plan, folds, mean_ua, pooled })
}

pub fn cross_validate(d: &Dataset, cfg: &TrainConfig) -> Result<CvReport> {
    cross_validate_with(d, cfg, |_, _| Ok(()))
}
