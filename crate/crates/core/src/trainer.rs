//! The epoch/batch training loop and the stratified cross-validation
//! harness tying the stack together.
//!
//! Per fold: channel statistics are fitted on the training folds only,
//! every training image is augmented on its own derived stream and then
//! standardized, the model trains with Adam on shuffled batches, and both
//! splits are evaluated un-augmented in inference mode. Fold outcomes keep
//! the exact index sets used for statistics fitting so leakage is
//! auditable after the fact.
//!
//! Everything derives from the run seed: shuffles use
//! `shuffle/fold<f>/epoch<e>`, per-image augmentation
//! `aug/fold<f>/epoch<e>/img<dataset index>`, dropout
//! `dropout/fold<f>/epoch<e>/batch<b>`. Two runs with the same config and
//! data produce bitwise-identical checkpoints.

use crate::augment::{fit_stats, load_image, random_transform, resize_to, standardize, ChannelStats};
use crate::config::RunConfig;
use crate::data::{fold_split, stratified_kfold, ClassLabel, Dataset};
use crate::error::{Error, Result};
use crate::layers::Mode;
use crate::metrics::{evaluate, summarize, CVSummary, EvalResult};
use crate::model::{build, Model};
use crate::optim::{cross_entropy, AdamState};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// A decoded, resized training image pinned to its dataset index.
#[derive(Clone)]
pub struct LoadedImage {
    pub ds_index: usize,
    pub image: Tensor,
    pub label: ClassLabel,
}

/// Decodes and resizes the images at `indices` to `side`x`side`.
pub fn load_split(ds: &Dataset, indices: &[usize], side: usize) -> Result<Vec<LoadedImage>> {
    indices
        .iter()
        .map(|&i| {
            let item = &ds.items()[i];
            let decoded = load_image(&item.path)?;
            Ok(LoadedImage {
                ds_index: i,
                image: resize_to(&decoded, side, side),
                label: item.label,
            })
        })
        .collect()
}

fn one_hot_rows(labels: &[ClassLabel]) -> Tensor {
    let mut t = Tensor::zeros(&[labels.len(), 3]);
    for (i, label) in labels.iter().enumerate() {
        *t.at_mut(&[i, label.index()]) = 1.0;
    }
    t
}

fn stack_images(images: &[Tensor]) -> Result<Tensor> {
    let shape = images[0].shape();
    let mut data = Vec::with_capacity(images.len() * images[0].len());
    for img in images {
        if img.shape() != shape {
            return Err(Error::Dimension(format!(
                "cannot batch images of shapes {:?} and {shape:?}",
                img.shape()
            )));
        }
        data.extend_from_slice(img.data());
    }
    let mut batch_shape = vec![images.len()];
    batch_shape.extend_from_slice(shape);
    Tensor::new(&batch_shape, data)
}

pub struct TrainOutcome {
    pub model: Model,
    pub stats: ChannelStats,
    pub epoch_losses: Vec<f64>,
}

/// Trains one model on `train` for `cfg.epochs` epochs and returns it
/// ready for inference, along with the per-epoch mean batch loss.
///
/// Tail batches smaller than 2 are dropped (batch norm cannot normalize
/// them); larger partial tails train normally.
pub fn train_one_fold(
    train: &[LoadedImage],
    cfg: &RunConfig,
    fold: usize,
) -> Result<TrainOutcome> {
    if train.is_empty() {
        return Err(Error::Domain("training split is empty".into()));
    }
    let spec = cfg.architecture()?;
    let base = Rng::new(cfg.seed, "run");
    let model_rng = base.derive(&format!("fold{fold}/init"));
    let mut model = build(&spec, &model_rng)?;
    let raw: Vec<Tensor> = train.iter().map(|li| li.image.clone()).collect();
    let stats = fit_stats(&raw)?;
    let mut adam = AdamState::new(cfg.lr);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut shuffle_rng = base.derive(&format!("shuffle/fold{fold}/epoch{epoch}"));
        shuffle_rng.shuffle(&mut order);

        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for (batch_no, chunk) in order.chunks(cfg.batch_size).enumerate() {
            if chunk.len() < 2 {
                continue; // dropped tail
            }
            let mut images = Vec::with_capacity(chunk.len());
            let mut labels = Vec::with_capacity(chunk.len());
            for &local in chunk {
                let li = &train[local];
                let mut aug_rng =
                    base.derive(&format!("aug/fold{fold}/epoch{epoch}/img{}", li.ds_index));
                let augmented = random_transform(&li.image, &cfg.augment, &mut aug_rng)?;
                images.push(standardize(&augmented, &stats)?);
                labels.push(li.label);
            }
            let x = stack_images(&images)?;
            let y = one_hot_rows(&labels);
            let mut fwd_rng = base.derive(&format!("dropout/fold{fold}/epoch{epoch}/batch{batch_no}"));
            let probs = model.forward(&x, Mode::Train, &mut fwd_rng)?;
            let (loss, dlogits) = cross_entropy(&probs, &y)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "loss became {loss} at fold {fold}, epoch {epoch}, batch {batch_no}"
                )));
            }
            model.backward(&dlogits)?;
            adam.step(model.adam_entries())?;
            loss_sum += loss;
            batches += 1;
        }
        if batches > 0 {
            epoch_losses.push(loss_sum / batches as f64);
        }
    }

    Ok(TrainOutcome {
        model,
        stats,
        epoch_losses,
    })
}

/// Evaluates a model on un-augmented, standardized images in inference
/// mode. Processes in batches to bound memory; metrics are computed once
/// over the whole split.
pub fn evaluate_model(
    model: &mut Model,
    set: &[LoadedImage],
    stats: &ChannelStats,
    batch_size: usize,
    rng: &Rng,
) -> Result<EvalResult> {
    if set.is_empty() {
        return Err(Error::Domain("cannot evaluate an empty split".into()));
    }
    let mut probs_data = Vec::with_capacity(set.len() * 3);
    for chunk in set.chunks(batch_size.max(1)) {
        let images: Vec<Tensor> = chunk
            .iter()
            .map(|li| standardize(&li.image, stats))
            .collect::<Result<_>>()?;
        let x = stack_images(&images)?;
        let mut eval_rng = rng.derive("eval");
        let probs = model.forward(&x, Mode::Infer, &mut eval_rng)?;
        probs_data.extend_from_slice(probs.data());
    }
    let probs = Tensor::new(&[set.len(), 3], probs_data)?;
    let labels = one_hot_rows(&set.iter().map(|li| li.label).collect::<Vec<_>>());
    evaluate(&probs, &labels)
}

/// Everything one fold produced, including the index sets that prove the
/// statistics were fitted without touching the held-out fold.
pub struct FoldOutcome {
    pub fold: usize,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    /// Dataset indices whose pixels entered `fit_stats`.
    pub stats_indices: Vec<usize>,
    pub stats: ChannelStats,
    pub train_eval: EvalResult,
    pub test_eval: EvalResult,
    pub epoch_losses: Vec<f64>,
    pub checkpoint: Vec<u8>,
}

pub struct CrossValOutcome {
    pub folds: Vec<FoldOutcome>,
    pub summary: CVSummary,
}

fn run_fold(ds: &Dataset, cfg: &RunConfig, fold: usize) -> Result<FoldOutcome> {
    let plan = stratified_kfold(ds, cfg.folds, cfg.seed)?;
    let (train_idx, test_idx) = fold_split(ds, &plan, fold)?;
    let train = load_split(ds, &train_idx, cfg.input_side)?;
    let test = load_split(ds, &test_idx, cfg.input_side)?;

    let outcome = train_one_fold(&train, cfg, fold)?;
    let mut model = outcome.model;
    let base = Rng::new(cfg.seed, "run");
    let train_eval = evaluate_model(&mut model, &train, &outcome.stats, cfg.batch_size, &base)?;
    let test_eval = evaluate_model(&mut model, &test, &outcome.stats, cfg.batch_size, &base)?;
    Ok(FoldOutcome {
        fold,
        stats_indices: train.iter().map(|li| li.ds_index).collect(),
        train_indices: train_idx,
        test_indices: test_idx,
        stats: outcome.stats,
        train_eval,
        test_eval,
        epoch_losses: outcome.epoch_losses,
        checkpoint: model.checkpoint_bytes()?,
    })
}

/// Full stratified cross-validation: trains `cfg.folds` models and
/// aggregates their metrics. `parallel` runs folds on worker threads
/// (results are identical either way; folds share nothing).
pub fn cross_validate(ds: &Dataset, cfg: &RunConfig, parallel: bool) -> Result<CrossValOutcome> {
    stratified_kfold(ds, cfg.folds, cfg.seed)?; // validate before spawning work
    let folds: Vec<FoldOutcome> = run_folds(ds, cfg, parallel)?;
    let pairs: Vec<(EvalResult, EvalResult)> = folds
        .iter()
        .map(|f| (f.train_eval.clone(), f.test_eval.clone()))
        .collect();
    let summary = summarize(&pairs)?;
    Ok(CrossValOutcome { folds, summary })
}

#[cfg(not(target_arch = "wasm32"))]
fn run_folds(ds: &Dataset, cfg: &RunConfig, parallel: bool) -> Result<Vec<FoldOutcome>> {
    use rayon::prelude::*;
    if parallel {
        (0..cfg.folds)
            .into_par_iter()
            .map(|fold| run_fold(ds, cfg, fold))
            .collect()
    } else {
        (0..cfg.folds).map(|fold| run_fold(ds, cfg, fold)).collect()
    }
}

#[cfg(target_arch = "wasm32")]
fn run_folds(ds: &Dataset, cfg: &RunConfig, _parallel: bool) -> Result<Vec<FoldOutcome>> {
    (0..cfg.folds).map(|fold| run_fold(ds, cfg, fold)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ArchChoice;
    use crate::synth::synth_dataset;

    fn mini_cfg(data_root: &std::path::Path, epochs: usize) -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.arch = ArchChoice::MiniVgg;
        cfg.input_side = 16;
        cfg.epochs = epochs;
        cfg.batch_size = 8;
        cfg.lr = 0.001;
        cfg.seed = 7;
        cfg.augment = crate::augment::AugmentConfig::disabled();
        cfg.data_root = data_root.to_path_buf();
        cfg
    }

    #[test]
    fn zero_epochs_returns_the_initialization() {
        let dir = tempfile::tempdir().unwrap();
        let ds = synth_dataset(dir.path(), 5, 16, 1).unwrap();
        let cfg = mini_cfg(dir.path(), 0);
        let train = load_split(&ds, &(0..ds.len()).collect::<Vec<_>>(), 16).unwrap();
        let outcome = train_one_fold(&train, &cfg, 0).unwrap();
        assert!(outcome.epoch_losses.is_empty());
        let fresh = build(
            &cfg.architecture().unwrap(),
            &Rng::new(cfg.seed, "run").derive("fold0/init"),
        )
        .unwrap();
        assert_eq!(
            outcome.model.checkpoint_bytes().unwrap(),
            fresh.checkpoint_bytes().unwrap()
        );
    }

    #[test]
    fn training_is_bitwise_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let ds = synth_dataset(dir.path(), 5, 16, 2).unwrap();
        let mut cfg = mini_cfg(dir.path(), 2);
        cfg.augment = crate::augment::AugmentConfig::default();
        let train = load_split(&ds, &(0..ds.len()).collect::<Vec<_>>(), 16).unwrap();
        let a = train_one_fold(&train, &cfg, 0).unwrap();
        let b = train_one_fold(&train, &cfg, 0).unwrap();
        assert_eq!(
            a.model.checkpoint_bytes().unwrap(),
            b.model.checkpoint_bytes().unwrap()
        );
        assert_eq!(a.epoch_losses, b.epoch_losses);
    }

    #[test]
    fn evaluation_does_not_mutate_the_model() {
        let dir = tempfile::tempdir().unwrap();
        let ds = synth_dataset(dir.path(), 5, 16, 3).unwrap();
        let cfg = mini_cfg(dir.path(), 1);
        let train = load_split(&ds, &(0..ds.len()).collect::<Vec<_>>(), 16).unwrap();
        let outcome = train_one_fold(&train, &cfg, 0).unwrap();
        let mut model = outcome.model;
        let before = model.checkpoint_bytes().unwrap();
        let base = Rng::new(cfg.seed, "run");
        evaluate_model(&mut model, &train, &outcome.stats, 8, &base).unwrap();
        assert_eq!(model.checkpoint_bytes().unwrap(), before);
    }

    #[test]
    fn cross_validation_produces_five_fold_pairs_and_audit_trail() {
        let dir = tempfile::tempdir().unwrap();
        let ds = synth_dataset(dir.path(), 6, 16, 4).unwrap();
        let mut cfg = mini_cfg(dir.path(), 1);
        cfg.folds = 5;
        let outcome = cross_validate(&ds, &cfg, false).unwrap();
        assert_eq!(outcome.folds.len(), 5);
        for fold in &outcome.folds {
            // Leakage audit: statistics inputs are disjoint from the test fold.
            for idx in &fold.stats_indices {
                assert!(!fold.test_indices.contains(idx));
            }
            assert_eq!(fold.stats_indices, fold.train_indices);
            assert_eq!(
                fold.train_indices.len() + fold.test_indices.len(),
                ds.len()
            );
        }
        // Summary means equal the arithmetic fold means.
        let mean_acc: f64 = outcome
            .folds
            .iter()
            .map(|f| f.test_eval.accuracy)
            .sum::<f64>()
            / 5.0;
        let summary_acc = outcome.summary.external[&crate::metrics::MetricName::Accuracy].mean;
        assert!((mean_acc - summary_acc).abs() < 1e-12);
    }

    #[test]
    fn short_tail_batches_are_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let ds = synth_dataset(dir.path(), 5, 16, 5).unwrap();
        let mut cfg = mini_cfg(dir.path(), 1);
        // 15 images with batch 7: chunks 7, 7, 1 — the final singleton is
        // dropped rather than erroring.
        cfg.batch_size = 7;
        let indices: Vec<usize> = (0..15).collect();
        let train = load_split(&ds, &indices, 16).unwrap();
        let outcome = train_one_fold(&train, &cfg, 0).unwrap();
        assert_eq!(outcome.epoch_losses.len(), 1);
    }
}
