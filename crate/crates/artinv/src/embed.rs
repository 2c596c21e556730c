//! Speaker-conditioning vectors: one-hot encodings, TDNN x-vectors with
//! statistics pooling, SID softmax posteriors for unseen-speaker evaluation,
//! and a PCA projector for embedding inspection.

use ndarray::{Array1, Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{rng_for, Corpus, Subset};
use crate::dsp::{self, FeatureSequence};
use crate::error::{Error, Result};
use crate::nncore::layers::{Activation, Dense, StatsPool, Tdnn};
use crate::nncore::{fit, loss, History, Layout, Params, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingSource {
    Onehot,
    Xvector,
    SidPosterior,
}

/// A fixed-length speaker-conditioning vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerEmbedding {
    pub values: Array1<f64>,
    pub source: EmbeddingSource,
}

impl SpeakerEmbedding {
    pub fn new(values: Array1<f64>, source: EmbeddingSource) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("embedding contains NaN/Inf".into()));
        }
        match source {
            EmbeddingSource::Onehot => {
                let ones = values.iter().filter(|&&v| v == 1.0).count();
                let zeros = values.iter().filter(|&&v| v == 0.0).count();
                if ones != 1 || ones + zeros != values.len() {
                    return Err(Error::Parameter(
                        "one-hot embedding must be a unit basis vector".into(),
                    ));
                }
            }
            EmbeddingSource::SidPosterior => {
                if values.iter().any(|&v| v < 0.0) || (values.sum() - 1.0).abs() > 1e-6 {
                    return Err(Error::Parameter(
                        "posterior embedding must be a probability simplex vector".into(),
                    ));
                }
            }
            EmbeddingSource::Xvector => {}
        }
        Ok(SpeakerEmbedding { values, source })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Unit basis vector for a seen speaker.
pub fn one_hot(speaker_index: usize, n_speakers: usize) -> Result<SpeakerEmbedding> {
    if speaker_index >= n_speakers {
        return Err(Error::Parameter(format!(
            "one-hot index {speaker_index} out of range for {n_speakers} speakers"
        )));
    }
    let mut values = Array1::zeros(n_speakers);
    values[speaker_index] = 1.0;
    SpeakerEmbedding::new(values, EmbeddingSource::Onehot)
}

/// Spec-level statistics pooling over the valid frames of each batch item:
/// concatenated per-channel mean and population std (floored at 1e-8).
pub fn stats_pool(batch: &crate::nncore::SeqBatch) -> Vec<Array1<f64>> {
    let pool = StatsPool;
    (0..batch.n_items())
        .map(|i| pool.forward(&batch.item(i).to_owned()).0)
        .collect()
}

// ---------------------------------------------------------------------------
// x-vector extractor
// ---------------------------------------------------------------------------

/// TDNN stack + statistics pooling + dense classifier head. The embedding is
/// the affine output of the first post-pooling dense layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XvecArch {
    pub input_dim: usize,
    pub channels: usize,
    pub embed_dim: usize,
    pub n_classes: usize,
    /// (kernel, dilation) per time-delay layer.
    pub tdnn_layers: Vec<(usize, usize)>,
}

impl XvecArch {
    /// Desk-scale architecture: three time-delay layers, 64-dim embedding.
    pub fn desk(n_classes: usize) -> Self {
        XvecArch {
            input_dim: dsp::N_MFCC,
            channels: 32,
            embed_dim: 64,
            n_classes,
            tdnn_layers: vec![(5, 1), (3, 2), (3, 3)],
        }
    }
}

#[derive(Debug, Clone)]
pub struct XvectorExtractor {
    pub arch: XvecArch,
    tdnn: Vec<Tdnn>,
    embed_dense: Dense,
    hidden_dense: Dense,
    out: Dense,
    pub layout: Layout,
    pub params: Params,
}

struct XvecForward {
    tdnn_caches: Vec<crate::nncore::layers::TdnnCache>,
    pool_cache: crate::nncore::layers::StatsPoolCache,
    embed_cache: crate::nncore::layers::DenseCache,
    hidden_cache: crate::nncore::layers::DenseCache,
    out_cache: crate::nncore::layers::DenseCache,
}

impl XvectorExtractor {
    pub fn build(arch: XvecArch, seed: u64) -> Self {
        let mut builder = Layout::builder();
        let mut tdnn = Vec::new();
        let mut d_in = arch.input_dim;
        for (i, &(kernel, dilation)) in arch.tdnn_layers.iter().enumerate() {
            let layer = Tdnn::new(
                &mut builder,
                &format!("tdnn{i}"),
                d_in,
                arch.channels,
                kernel,
                dilation,
            );
            d_in = arch.channels;
            tdnn.push(layer);
        }
        let embed_dense = Dense::new(
            &mut builder,
            "embed",
            2 * arch.channels,
            arch.embed_dim,
            Activation::Relu,
        );
        let hidden_dense = Dense::new(
            &mut builder,
            "hidden",
            arch.embed_dim,
            arch.embed_dim,
            Activation::Relu,
        );
        let out = Dense::new(
            &mut builder,
            "classifier",
            arch.embed_dim,
            arch.n_classes,
            Activation::Softmax,
        );
        let layout = builder.finish();
        let mut params = Params::zeros(&layout);
        let mut rng = rng_for(&[seed, 0x78766563]);
        for layer in &tdnn {
            layer.init(&layout, &mut params, &mut rng);
        }
        embed_dense.init(&layout, &mut params, &mut rng);
        hidden_dense.init(&layout, &mut params, &mut rng);
        out.init(&layout, &mut params, &mut rng);
        XvectorExtractor {
            arch,
            tdnn,
            embed_dense,
            hidden_dense,
            out,
            layout,
            params,
        }
    }

    /// Frames consumed by the TDNN stack; inputs must be at least one frame
    /// longer than the total context.
    pub fn receptive_field(&self) -> usize {
        1 + self.tdnn.iter().map(Tdnn::context).sum::<usize>()
    }

    fn forward(&self, params: &Params, mfcc: &Array2<f64>) -> XvecForward {
        let mut x = mfcc.clone();
        let mut tdnn_caches = Vec::with_capacity(self.tdnn.len());
        for layer in &self.tdnn {
            let cache = layer.forward(&self.layout, params, &x);
            x = cache.output.clone();
            tdnn_caches.push(cache);
        }
        let (pooled, pool_cache) = StatsPool.forward(&x);
        let pooled_row = pooled.insert_axis(Axis(0));
        let embed_cache = self.embed_dense.forward(&self.layout, params, &pooled_row);
        let hidden_cache = self
            .hidden_dense
            .forward(&self.layout, params, &embed_cache.output);
        let out_cache = self.out.forward(&self.layout, params, &hidden_cache.output);
        XvecForward {
            tdnn_caches,
            pool_cache,
            embed_cache,
            hidden_cache,
            out_cache,
        }
    }

    fn check_length(&self, t: usize) -> Result<()> {
        let need = self.receptive_field();
        if t < need {
            return Err(Error::Parameter(format!(
                "sequence of {t} frames shorter than the extractor's receptive field; \
                 at least {need} frames required"
            )));
        }
        Ok(())
    }

    /// Utterance-level class probabilities.
    pub fn classify(&self, mfcc: &Array2<f64>) -> Result<Array1<f64>> {
        self.check_length(mfcc.nrows())?;
        let fwd = self.forward(&self.params, mfcc);
        Ok(fwd.out_cache.output.row(0).to_owned())
    }

    /// Mean CE loss over a batch of (features, label) items plus gradients.
    fn batch_loss_grad(
        &self,
        params: &Params,
        items: &[(Array2<f64>, usize)],
    ) -> Result<(f64, Vec<f64>)> {
        let n = items.len();
        let results: Vec<Result<(f64, Params)>> = items
            .par_iter()
            .map(|(mfcc, label)| {
                let fwd = self.forward(params, mfcc);
                let (item_loss, dprobs) =
                    loss::cross_entropy_with_grad(&fwd.out_cache.output, &[*label], n)?;
                let mut grads = Params::zeros(&self.layout);
                let dh = self
                    .out
                    .backward(&self.layout, params, &fwd.out_cache, &dprobs, &mut grads);
                let dh = self.hidden_dense.backward(
                    &self.layout,
                    params,
                    &fwd.hidden_cache,
                    &dh,
                    &mut grads,
                );
                let dpooled_row =
                    self.embed_dense
                        .backward(&self.layout, params, &fwd.embed_cache, &dh, &mut grads);
                let dpooled = dpooled_row.row(0).to_owned();
                let mut dx = StatsPool.backward(&fwd.pool_cache, &dpooled);
                for (layer, cache) in self.tdnn.iter().zip(&fwd.tdnn_caches).rev() {
                    dx = layer.backward(&self.layout, params, cache, &dx, &mut grads);
                }
                Ok((item_loss, grads))
            })
            .collect();
        let mut total_loss = 0.0;
        let mut total_grads = Params::zeros(&self.layout);
        for r in results {
            let (l, g) = r?;
            total_loss += l;
            total_grads.add_assign(&g);
        }
        Ok((total_loss, total_grads.data))
    }
}

/// The x-vector of one utterance: the pre-activation output of the first
/// post-pooling dense layer. Deterministic per input.
pub fn extract_xvector(
    extractor: &XvectorExtractor,
    mfcc: &FeatureSequence,
) -> Result<SpeakerEmbedding> {
    extractor.check_length(mfcc.len())?;
    let mut x = mfcc.frames.clone();
    for layer in &extractor.tdnn {
        x = layer.forward(&extractor.layout, &extractor.params, &x).output;
    }
    let (pooled, _) = StatsPool.forward(&x);
    let w = extractor
        .params
        .mat(&extractor.layout, extractor.embed_dense.w);
    let b = extractor
        .params
        .mat(&extractor.layout, extractor.embed_dense.b);
    let values = pooled.dot(&w) + &b.row(0);
    SpeakerEmbedding::new(values, EmbeddingSource::Xvector)
}

/// Outcome of background training: the extractor plus its classification
/// accuracy on held-out background utterances.
#[derive(Debug, Clone)]
pub struct XvectorTraining {
    pub extractor: XvectorExtractor,
    pub history: History,
    pub holdout_accuracy: f64,
}

/// Feature rows keyed by (speaker index, sentence id), sorted.
pub type FeatureRows = Vec<(u32, u32, Array2<f64>)>;

fn select_items(
    features: &FeatureRows,
    split: &crate::corpus::CorpusSplit,
    subset: Subset,
    class_of: &dyn Fn(u32) -> usize,
) -> Vec<(Array2<f64>, usize)> {
    split
        .subset(subset)
        .iter()
        .map(|&(spk, sent)| {
            let idx = features
                .binary_search_by_key(&(spk, sent), |f| (f.0, f.1))
                .expect("split references a cached utterance");
            (features[idx].2.clone(), class_of(spk))
        })
        .collect()
}

/// Core trainer over precomputed MVN'd MFCC features. `classes` maps speaker
/// indices to class ids and fixes the softmax dimension.
pub fn train_xvector_on_features(
    features: &FeatureRows,
    split: &crate::corpus::CorpusSplit,
    classes: &[u32],
    arch_for: impl FnOnce(usize) -> XvecArch,
    cfg: &TrainConfig,
) -> Result<XvectorTraining> {
    if classes.len() < 4 {
        return Err(Error::Parameter(format!(
            "background corpus has {} speakers; at least 4 required for a \
             non-degenerate embedding",
            classes.len()
        )));
    }
    let class_list = classes.to_vec();
    let class_of = move |spk: u32| -> usize {
        class_list
            .binary_search(&spk)
            .expect("speaker belongs to the class list")
    };
    let train_items = select_items(features, split, Subset::Train, &class_of);
    let val_items = select_items(features, split, Subset::Validation, &class_of);
    let test_items = select_items(features, split, Subset::Test, &class_of);

    let arch = arch_for(classes.len());
    let mut extractor = XvectorExtractor::build(arch, cfg.seed);
    let mut params = extractor.params.clone();
    let history = fit(
        &mut params,
        train_items.len(),
        cfg,
        |p, batch| {
            let items: Vec<(Array2<f64>, usize)> =
                batch.iter().map(|&i| train_items[i].clone()).collect();
            extractor.batch_loss_grad(p, &items)
        },
        |p| {
            let (l, _) = extractor.batch_loss_grad(p, &val_items)?;
            Ok(l)
        },
    )?;
    params.quantize_f32();
    extractor.params = params;

    let mut correct = 0usize;
    for (mfcc, label) in &test_items {
        let probs = extractor.classify(mfcc)?;
        let pred = argmax(&probs);
        if pred == *label {
            correct += 1;
        }
    }
    let holdout_accuracy = correct as f64 / test_items.len().max(1) as f64;
    Ok(XvectorTraining {
        extractor,
        history,
        holdout_accuracy,
    })
}

/// Train the extractor on a background corpus with speaker-classification
/// cross-entropy over MFCC inputs. Background speakers must be disjoint from
/// the AAI speakers; the pipeline enforces that set relation.
pub fn train_xvector_extractor(
    corpus_bg: &Corpus,
    arch_for: impl FnOnce(usize) -> XvecArch,
    cfg: &TrainConfig,
) -> Result<XvectorTraining> {
    let features = corpus_features(corpus_bg)?;
    let split = crate::corpus::split_corpus(corpus_bg, (0.8, 0.1, 0.1), cfg.seed)?;
    train_xvector_on_features(
        &features,
        &split,
        &corpus_bg.speaker_indices(),
        arch_for,
        cfg,
    )
}

pub fn argmax(v: &Array1<f64>) -> usize {
    v.iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite"))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

/// Raw (un-normalized) MFCC features for every utterance, sorted by
/// (speaker, sentence). Speaker classification keeps the mean spectral
/// envelope; per-utterance MVN would erase exactly that cue.
fn corpus_features(corpus: &Corpus) -> Result<Vec<(u32, u32, Array2<f64>)>> {
    let mut out: Vec<(u32, u32, Array2<f64>)> = corpus
        .utterances
        .par_iter()
        .map(|utt| -> Result<(u32, u32, Array2<f64>)> {
            let feats = dsp::mfcc(&utt.waveform, utt.sample_rate, dsp::N_MFCC)?;
            Ok((utt.speaker.index, utt.sentence_id, feats.frames))
        })
        .collect::<Result<Vec<_>>>()?;
    out.sort_by_key(|f| (f.0, f.1));
    Ok(out)
}

// ---------------------------------------------------------------------------
// SID network
// ---------------------------------------------------------------------------

/// Two LSTM layers, a time-distributed dense layer, and a softmax over the
/// training speakers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidArch {
    pub input_dim: usize,
    pub lstm_units: usize,
    pub dense_units: usize,
    pub n_classes: usize,
}

impl SidArch {
    /// Dimensions used in the reference experiments.
    pub fn paper(n_classes: usize) -> Self {
        SidArch {
            input_dim: dsp::N_MFCC,
            lstm_units: 150,
            dense_units: 100,
            n_classes,
        }
    }

    /// CPU-friendly desk dimensions.
    pub fn desk(n_classes: usize) -> Self {
        SidArch {
            input_dim: dsp::N_MFCC,
            lstm_units: 32,
            dense_units: 24,
            n_classes,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SidNetwork {
    pub arch: SidArch,
    lstm1: crate::nncore::layers::Lstm,
    lstm2: crate::nncore::layers::Lstm,
    dense: Dense,
    out: Dense,
    pub layout: Layout,
    pub params: Params,
}

impl SidNetwork {
    pub fn build(arch: SidArch, seed: u64) -> Self {
        use crate::nncore::layers::Lstm;
        let mut builder = Layout::builder();
        let lstm1 = Lstm::new(&mut builder, "lstm1", arch.input_dim, arch.lstm_units);
        let lstm2 = Lstm::new(&mut builder, "lstm2", arch.lstm_units, arch.lstm_units);
        let dense = Dense::new(
            &mut builder,
            "dense",
            arch.lstm_units,
            arch.dense_units,
            Activation::Relu,
        );
        let out = Dense::new(
            &mut builder,
            "classifier",
            arch.dense_units,
            arch.n_classes,
            Activation::Softmax,
        );
        let layout = builder.finish();
        let mut params = Params::zeros(&layout);
        let mut rng = rng_for(&[seed, 0x736964]);
        lstm1.init(&layout, &mut params, &mut rng);
        lstm2.init(&layout, &mut params, &mut rng);
        dense.init(&layout, &mut params, &mut rng);
        out.init(&layout, &mut params, &mut rng);
        SidNetwork {
            arch,
            lstm1,
            lstm2,
            dense,
            out,
            layout,
            params,
        }
    }

    /// Frame-wise class probabilities (T x n_classes).
    pub fn frame_probs(&self, params: &Params, mfcc: &Array2<f64>) -> Array2<f64> {
        let c1 = self.lstm1.forward(&self.layout, params, mfcc);
        let c2 = self.lstm2.forward(&self.layout, params, &c1.hidden_states);
        let d = self.dense.forward(&self.layout, params, &c2.hidden_states);
        self.out.forward(&self.layout, params, &d.output).output
    }

    fn batch_loss_grad(
        &self,
        params: &Params,
        items: &[(Array2<f64>, usize)],
    ) -> Result<(f64, Vec<f64>)> {
        let total_frames: usize = items.iter().map(|(m, _)| m.nrows()).sum();
        let results: Vec<Result<(f64, Params)>> = items
            .par_iter()
            .map(|(mfcc, label)| {
                let c1 = self.lstm1.forward(&self.layout, params, mfcc);
                let c2 = self.lstm2.forward(&self.layout, params, &c1.hidden_states);
                let d = self.dense.forward(&self.layout, params, &c2.hidden_states);
                let o = self.out.forward(&self.layout, params, &d.output);
                let labels = vec![*label; mfcc.nrows()];
                let (item_loss, dprobs) =
                    loss::cross_entropy_with_grad(&o.output, &labels, total_frames)?;
                let mut grads = Params::zeros(&self.layout);
                let dd = self.out.backward(&self.layout, params, &o, &dprobs, &mut grads);
                let dh2 = self.dense.backward(&self.layout, params, &d, &dd, &mut grads);
                let dh1 = self
                    .lstm2
                    .backward(&self.layout, params, &c2, &dh2, &mut grads);
                self.lstm1.backward(&self.layout, params, &c1, &dh1, &mut grads);
                Ok((item_loss, grads))
            })
            .collect();
        let mut total_loss = 0.0;
        let mut total_grads = Params::zeros(&self.layout);
        for r in results {
            let (l, g) = r?;
            total_loss += l;
            total_grads.add_assign(&g);
        }
        Ok((total_loss, total_grads.data))
    }
}

#[derive(Debug, Clone)]
pub struct SidTraining {
    pub network: SidNetwork,
    pub history: History,
    pub test_accuracy: f64,
}

/// Core SID trainer over precomputed MVN'd MFCC features with frame-level
/// categorical cross-entropy.
pub fn train_sid_on_features(
    features: &FeatureRows,
    split: &crate::corpus::CorpusSplit,
    classes: &[u32],
    arch_for: impl FnOnce(usize) -> SidArch,
    cfg: &TrainConfig,
) -> Result<SidTraining> {
    let class_list = classes.to_vec();
    let class_of = move |spk: u32| -> usize {
        class_list
            .binary_search(&spk)
            .expect("speaker belongs to the class list")
    };
    let train_items = select_items(features, split, Subset::Train, &class_of);
    let val_items = select_items(features, split, Subset::Validation, &class_of);
    let test_items = select_items(features, split, Subset::Test, &class_of);

    let arch = arch_for(classes.len());
    let mut network = SidNetwork::build(arch, cfg.seed);
    let mut params = network.params.clone();
    let history = fit(
        &mut params,
        train_items.len(),
        cfg,
        |p, batch| {
            let items: Vec<(Array2<f64>, usize)> =
                batch.iter().map(|&i| train_items[i].clone()).collect();
            network.batch_loss_grad(p, &items)
        },
        |p| {
            let (l, _) = network.batch_loss_grad(p, &val_items)?;
            Ok(l)
        },
    )?;
    params.quantize_f32();
    network.params = params;

    let mut correct = 0usize;
    for (mfcc, label) in &test_items {
        let posterior = sid_posterior_inner(&network, mfcc);
        if argmax(&posterior) == *label {
            correct += 1;
        }
    }
    let test_accuracy = correct as f64 / test_items.len().max(1) as f64;
    Ok(SidTraining {
        network,
        history,
        test_accuracy,
    })
}

/// Train the SID classifier on a corpus' training split.
pub fn train_sid(
    corpus_seen: &Corpus,
    split: &crate::corpus::CorpusSplit,
    arch_for: impl FnOnce(usize) -> SidArch,
    cfg: &TrainConfig,
) -> Result<SidTraining> {
    let features = corpus_features(corpus_seen)?;
    train_sid_on_features(
        &features,
        split,
        &corpus_seen.speaker_indices(),
        arch_for,
        cfg,
    )
}

fn sid_posterior_inner(sid: &SidNetwork, mfcc: &Array2<f64>) -> Array1<f64> {
    let probs = sid.frame_probs(&sid.params, mfcc);
    let mean = probs.mean_axis(Axis(0)).expect("T >= 1");
    // Renormalize against accumulated rounding so the simplex invariant holds.
    let sum = mean.sum();
    mean / sum
}

/// Utterance-level posterior: mean over frames of the frame-wise softmax.
pub fn sid_posterior(sid: &SidNetwork, mfcc: &FeatureSequence) -> Result<SpeakerEmbedding> {
    let values = sid_posterior_inner(sid, &mfcc.frames);
    SpeakerEmbedding::new(values, EmbeddingSource::SidPosterior)
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

use crate::nncore::checkpoint;
use std::path::Path;

#[derive(Debug, Serialize, Deserialize)]
struct XvecMeta {
    arch: XvecArch,
    seed: u64,
    config_hash: String,
    holdout_accuracy: f64,
}

pub fn save_extractor(
    extractor: &XvectorExtractor,
    holdout_accuracy: f64,
    seed: u64,
    config_hash: &str,
    path: &Path,
) -> Result<()> {
    let meta = serde_json::to_value(XvecMeta {
        arch: extractor.arch.clone(),
        seed,
        config_hash: config_hash.to_string(),
        holdout_accuracy,
    })
    .map_err(|e| Error::Config(format!("serializing extractor meta: {e}")))?;
    checkpoint::save_checkpoint(path, "xvector", &meta, &extractor.layout, &extractor.params)
}

pub fn load_extractor(path: &Path) -> Result<(XvectorExtractor, f64)> {
    let ck = checkpoint::load_checkpoint(path)?;
    let file = path.display().to_string();
    if ck.header.kind != "xvector" {
        return Err(Error::format(
            &file,
            format!("checkpoint kind `{}` is not an x-vector extractor", ck.header.kind),
        ));
    }
    let meta: XvecMeta = serde_json::from_value(ck.header.meta.clone())
        .map_err(|e| Error::format(&file, format!("extractor meta: {e}")))?;
    let mut extractor = XvectorExtractor::build(meta.arch, meta.seed);
    extractor.params = checkpoint::restore_params(&ck, &extractor.layout, &file)?;
    Ok((extractor, meta.holdout_accuracy))
}

#[derive(Debug, Serialize, Deserialize)]
struct SidMeta {
    arch: SidArch,
    seed: u64,
    config_hash: String,
    test_accuracy: f64,
    /// Class order: speaker indices in ascending order.
    classes: Vec<u32>,
}

pub fn save_sid(
    sid: &SidNetwork,
    classes: &[u32],
    test_accuracy: f64,
    seed: u64,
    config_hash: &str,
    path: &Path,
) -> Result<()> {
    let meta = serde_json::to_value(SidMeta {
        arch: sid.arch.clone(),
        seed,
        config_hash: config_hash.to_string(),
        test_accuracy,
        classes: classes.to_vec(),
    })
    .map_err(|e| Error::Config(format!("serializing sid meta: {e}")))?;
    checkpoint::save_checkpoint(path, "sid", &meta, &sid.layout, &sid.params)
}

pub fn load_sid(path: &Path) -> Result<(SidNetwork, Vec<u32>, f64)> {
    let ck = checkpoint::load_checkpoint(path)?;
    let file = path.display().to_string();
    if ck.header.kind != "sid" {
        return Err(Error::format(
            &file,
            format!("checkpoint kind `{}` is not a SID network", ck.header.kind),
        ));
    }
    let meta: SidMeta = serde_json::from_value(ck.header.meta.clone())
        .map_err(|e| Error::format(&file, format!("sid meta: {e}")))?;
    let mut sid = SidNetwork::build(meta.arch, meta.seed);
    sid.params = checkpoint::restore_params(&ck, &sid.layout, &file)?;
    Ok((sid, meta.classes, meta.test_accuracy))
}

// ---------------------------------------------------------------------------
// 2-D projection (PCA)
// ---------------------------------------------------------------------------

/// Jacobi eigendecomposition of a symmetric matrix; returns (eigenvalues,
/// eigenvectors as columns) sorted by descending eigenvalue.
fn symmetric_eigen(mut a: Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let n = a.nrows();
    let mut v = Array2::eye(n);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[[p, q]] * a[[p, q]];
            }
        }
        if off < 1e-24 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[[p, q]].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * a[[p, q]]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[[j, j]].partial_cmp(&a[[i, i]]).expect("finite"));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| a[[i, i]]).collect();
    let mut vectors = Array2::zeros((n, n));
    for (col, &i) in order.iter().enumerate() {
        vectors.column_mut(col).assign(&v.column(i));
    }
    (eigenvalues, vectors)
}

/// Mean-centered projection onto the top-2 principal components, ordered by
/// descending eigenvalue. Realizes the embedding-inspection role that t-SNE
/// plays elsewhere, deterministically.
pub fn project_2d(embeddings: &[SpeakerEmbedding]) -> Result<Vec<(f64, f64)>> {
    if embeddings.len() < 3 {
        return Err(Error::Parameter(format!(
            "projection needs at least 3 embeddings, got {}",
            embeddings.len()
        )));
    }
    let dim = embeddings[0].dim();
    if embeddings.iter().any(|e| e.dim() != dim) {
        return Err(Error::Shape("embeddings disagree on dimension".into()));
    }
    let n = embeddings.len();
    let mut data = Array2::zeros((n, dim));
    for (i, e) in embeddings.iter().enumerate() {
        data.row_mut(i).assign(&e.values);
    }
    let mean = data.mean_axis(Axis(0)).expect("nonempty");
    for mut row in data.rows_mut() {
        row -= &mean;
    }
    let cov = data.t().dot(&data) / n as f64;
    let (eigenvalues, vectors) = symmetric_eigen(cov);
    let scale = eigenvalues[0].abs().max(1e-300);
    if eigenvalues.len() < 2 || eigenvalues[1] / scale < 1e-9 {
        return Err(Error::Numeric(
            "embeddings are rank-deficient; no 2-D projection exists".into(),
        ));
    }
    // Deterministic sign: make the largest-magnitude loading positive.
    let mut pcs = vectors.slice(ndarray::s![.., ..2]).to_owned();
    for mut col in pcs.columns_mut() {
        let (mut best, mut best_abs) = (0usize, 0.0f64);
        for (i, &v) in col.iter().enumerate() {
            if v.abs() > best_abs {
                best = i;
                best_abs = v.abs();
            }
        }
        if col[best] < 0.0 {
            col.mapv_inplace(|v| -v);
        }
    }
    let projected = data.dot(&pcs);
    Ok((0..n).map(|i| (projected[[i, 0]], projected[[i, 1]])).collect())
}

/// Mean cosine similarity within speakers minus across speakers; positive
/// values mean the embedding space separates speakers.
pub fn cosine_separation(embeddings: &[(u32, SpeakerEmbedding)]) -> (f64, f64) {
    let cos = |a: &Array1<f64>, b: &Array1<f64>| {
        let na = a.dot(a).sqrt();
        let nb = b.dot(b).sqrt();
        if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            a.dot(b) / (na * nb)
        }
    };
    let (mut within, mut within_n) = (0.0, 0usize);
    let (mut across, mut across_n) = (0.0, 0usize);
    for i in 0..embeddings.len() {
        for j in (i + 1)..embeddings.len() {
            let c = cos(&embeddings[i].1.values, &embeddings[j].1.values);
            if embeddings[i].0 == embeddings[j].0 {
                within += c;
                within_n += 1;
            } else {
                across += c;
                across_n += 1;
            }
        }
    }
    (
        within / within_n.max(1) as f64,
        across / across_n.max(1) as f64,
    )
}
