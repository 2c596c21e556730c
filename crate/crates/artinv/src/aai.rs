//! Inversion networks: a dual-branch dense front end (acoustic branch plus an
//! optional conditioning branch), a stacked BLSTM trunk, and a
//! time-distributed linear readout onto the 12 articulatory channels.
//! Training schemes cover speaker-dependent (SD), pooled generic (GM),
//! per-speaker fine-tuned (GM-FSD), and speaker-conditioned variants using
//! one-hot vectors (SC) or x-vectors (xSC); the unseen-speaker uSC path reuses
//! the SC model with SID posteriors as the conditioning vector.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{s, Array1, Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{rng_for, N_ART_CHANNELS};
use crate::dsp::{FeatureKind, FeatureSequence};
use crate::embed::SpeakerEmbedding;
use crate::error::{Error, Result};
use crate::nncore::checkpoint;
use crate::nncore::layers::{Activation, Blstm, BlstmCache, Dense, DenseCache};
use crate::nncore::{fit, loss, History, Layout, Params, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Sd,
    Gm,
    GmFsd,
    Sc,
    Xsc,
}

impl Scheme {
    pub fn is_conditioned(self) -> bool {
        matches!(self, Scheme::Sc | Scheme::Xsc)
    }

    /// SD and GM-FSD produce one model per speaker.
    pub fn per_speaker(self) -> bool {
        matches!(self, Scheme::Sd | Scheme::GmFsd)
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Sd => "sd",
            Scheme::Gm => "gm",
            Scheme::GmFsd => "gm-fsd",
            Scheme::Sc => "sc",
            Scheme::Xsc => "xsc",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sd" => Ok(Scheme::Sd),
            "gm" => Ok(Scheme::Gm),
            "gm-fsd" | "gm_fsd" | "gmfsd" => Ok(Scheme::GmFsd),
            "sc" => Ok(Scheme::Sc),
            "xsc" => Ok(Scheme::Xsc),
            other => Err(Error::Config(format!("unknown scheme `{other}`"))),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Trunk and branch dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AaiDims {
    pub acoustic_units: usize,
    pub cond_units: usize,
    pub blstm_hidden: usize,
    pub blstm_layers: usize,
}

impl AaiDims {
    /// Dimensions from the reference experiments: 200-unit acoustic dense,
    /// 32-unit conditioning dense, three 256-per-direction BLSTM layers.
    pub fn paper() -> Self {
        AaiDims {
            acoustic_units: 200,
            cond_units: 32,
            blstm_hidden: 256,
            blstm_layers: 3,
        }
    }

    /// CPU-friendly desk dimensions; same topology.
    pub fn desk() -> Self {
        AaiDims {
            acoustic_units: 64,
            cond_units: 16,
            blstm_hidden: 40,
            blstm_layers: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AaiArchitecture {
    pub input_dim: usize,
    pub output_dim: usize,
    pub dims: AaiDims,
    /// Conditioning vector dimension; present iff the scheme is conditioned.
    pub embed_dim: Option<usize>,
}

impl AaiArchitecture {
    pub fn new(scheme: Scheme, embed_dim: Option<usize>, dims: AaiDims) -> Result<Self> {
        match (scheme.is_conditioned(), embed_dim) {
            (true, Some(e)) if e > 0 => {}
            (true, _) => {
                return Err(Error::Parameter(format!(
                    "scheme {scheme} requires a positive embedding dimension"
                )))
            }
            (false, None) => {}
            (false, Some(_)) => {
                return Err(Error::Parameter(format!(
                    "scheme {scheme} has no conditioning branch; embedding dimension \
                     must not be given"
                )))
            }
        }
        Ok(AaiArchitecture {
            input_dim: crate::dsp::N_MFCC,
            output_dim: N_ART_CHANNELS,
            dims,
            embed_dim,
        })
    }

    pub fn trunk_input_dim(&self) -> usize {
        self.dims.acoustic_units + if self.embed_dim.is_some() {
            self.dims.cond_units
        } else {
            0
        }
    }
}

/// Training provenance stamped into every checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub speakers: Vec<u32>,
    pub seed: u64,
    pub config_hash: String,
}

struct AaiNet {
    acoustic: Dense,
    cond: Option<Dense>,
    blstm: Vec<Blstm>,
    readout: Dense,
    layout: Layout,
}

impl AaiNet {
    fn build(arch: &AaiArchitecture) -> AaiNet {
        let mut builder = Layout::builder();
        // The acoustic branch is a linear projection; the BLSTM trunk
        // carries the nonlinearity. The conditioning branch saturates, so an
        // embedding outside the trained neighborhood produces a bounded
        // correction instead of a linear extrapolation.
        let acoustic = Dense::new(
            &mut builder,
            "acoustic",
            arch.input_dim,
            arch.dims.acoustic_units,
            Activation::Linear,
        );
        let cond = arch.embed_dim.map(|e| {
            Dense::new(
                &mut builder,
                "conditioning",
                e,
                arch.dims.cond_units,
                Activation::Tanh,
            )
        });
        let mut blstm = Vec::new();
        let mut d_in = arch.dims.acoustic_units
            + if cond.is_some() { arch.dims.cond_units } else { 0 };
        for i in 0..arch.dims.blstm_layers {
            let layer = Blstm::new(&mut builder, &format!("blstm{i}"), d_in, arch.dims.blstm_hidden);
            d_in = layer.d_out();
            blstm.push(layer);
        }
        let readout = Dense::new(
            &mut builder,
            "readout",
            d_in,
            arch.output_dim,
            Activation::Linear,
        );
        let layout = builder.finish();
        AaiNet {
            acoustic,
            cond,
            blstm,
            readout,
            layout,
        }
    }

    fn init(&self, params: &mut Params, seed: u64) {
        let mut rng = rng_for(&[seed, 0x616169]);
        self.acoustic.init(&self.layout, params, &mut rng);
        if let Some(cond) = &self.cond {
            cond.init(&self.layout, params, &mut rng);
        }
        for layer in &self.blstm {
            layer.init(&self.layout, params, &mut rng);
        }
        self.readout.init(&self.layout, params, &mut rng);
    }
}

/// One inversion model: architecture, parameters, scheme tag, and provenance.
pub struct AaiModel {
    pub scheme: Scheme,
    pub arch: AaiArchitecture,
    pub provenance: Provenance,
    net: AaiNet,
    pub params: Params,
}

impl AaiModel {
    pub fn layout(&self) -> &Layout {
        &self.net.layout
    }

    pub fn clone_model(&self) -> AaiModel {
        AaiModel {
            scheme: self.scheme,
            arch: self.arch.clone(),
            provenance: self.provenance.clone(),
            net: AaiNet::build(&self.arch),
            params: self.params.clone(),
        }
    }
}

/// Initialize a model for a scheme. Conditioned schemes get the dual-branch
/// front end; SD/GM share the acoustic-only architecture.
pub fn build_model(
    scheme: Scheme,
    embed_dim: Option<usize>,
    dims: AaiDims,
    seed: u64,
    provenance: Provenance,
) -> Result<AaiModel> {
    let arch = AaiArchitecture::new(scheme, embed_dim, dims)?;
    let net = AaiNet::build(&arch);
    let mut params = Params::zeros(&net.layout);
    net.init(&mut params, seed);
    Ok(AaiModel {
        scheme,
        arch,
        provenance,
        net,
        params,
    })
}

/// Broadcast a conditioning branch output across time and concatenate it with
/// the per-frame acoustic branch output. Mathematically identical to
/// replicating the embedding at every frame before the dense branch.
pub fn condition_concat(acoustic_out: &Array2<f64>, cond_out: &Array1<f64>) -> Array2<f64> {
    let t = acoustic_out.nrows();
    let a = acoustic_out.ncols();
    let c = cond_out.len();
    let mut out = Array2::zeros((t, a + c));
    out.slice_mut(s![.., ..a]).assign(acoustic_out);
    for mut row in out.slice_mut(s![.., a..]).rows_mut() {
        row.assign(cond_out);
    }
    out
}

struct AaiForward {
    acoustic: DenseCache,
    cond: Option<DenseCache>,
    trunk_in: Array2<f64>,
    blstm: Vec<BlstmCache>,
    readout: DenseCache,
}

fn forward_net(
    net: &AaiNet,
    params: &Params,
    mfcc: &Array2<f64>,
    embedding: Option<&Array1<f64>>,
) -> Result<AaiForward> {
    let acoustic = net.acoustic.forward(&net.layout, params, mfcc);
    let (cond, trunk_in) = match (&net.cond, embedding) {
        (Some(cond_layer), Some(e)) => {
            if e.len() != cond_layer.d_in {
                return Err(Error::Shape(format!(
                    "conditioning vector has dim {}, model expects {}",
                    e.len(),
                    cond_layer.d_in
                )));
            }
            let e_row = e.view().insert_axis(Axis(0)).to_owned();
            let cache = cond_layer.forward(&net.layout, params, &e_row);
            let cond_vec = cache.output.row(0).to_owned();
            let trunk_in = condition_concat(&acoustic.output, &cond_vec);
            (Some(cache), trunk_in)
        }
        (None, None) => (None, acoustic.output.clone()),
        (Some(_), None) => {
            return Err(Error::Parameter(
                "conditioned model requires an embedding".into(),
            ))
        }
        (None, Some(_)) => {
            return Err(Error::Parameter(
                "unconditioned model must not receive an embedding".into(),
            ))
        }
    };
    let mut blstm = Vec::with_capacity(net.blstm.len());
    let mut x = trunk_in.clone();
    for layer in &net.blstm {
        let cache = layer.forward(&net.layout, params, &x);
        x = cache.output.clone();
        blstm.push(cache);
    }
    let readout = net.readout.forward(&net.layout, params, &x);
    Ok(AaiForward {
        acoustic,
        cond,
        trunk_in,
        blstm,
        readout,
    })
}

fn backward_net(
    net: &AaiNet,
    params: &Params,
    fwd: &AaiForward,
    dpred: &Array2<f64>,
    grads: &mut Params,
) {
    let mut dy = net
        .readout
        .backward(&net.layout, params, &fwd.readout, dpred, grads);
    for (layer, cache) in net.blstm.iter().zip(&fwd.blstm).rev() {
        dy = layer.backward(&net.layout, params, cache, &dy, grads);
    }
    let a = net.acoustic.d_out;
    let d_ac = dy.slice(s![.., ..a]).to_owned();
    net.acoustic
        .backward(&net.layout, params, &fwd.acoustic, &d_ac, grads);
    if let (Some(cond_layer), Some(cond_cache)) = (&net.cond, &fwd.cond) {
        // Broadcast in forward means sum over frames in backward.
        let d_cond = dy.slice(s![.., a..]).sum_axis(Axis(0)).insert_axis(Axis(0));
        cond_layer.backward(&net.layout, params, cond_cache, &d_cond, grads);
    }
    let _ = &fwd.trunk_in;
}

/// Predict a normalized articulatory trajectory for one utterance.
pub fn predict(
    model: &AaiModel,
    mfcc: &FeatureSequence,
    embedding: Option<&SpeakerEmbedding>,
) -> Result<FeatureSequence> {
    let fwd = forward_net(
        &model.net,
        &model.params,
        &mfcc.frames,
        embedding.map(|e| &e.values),
    )?;
    FeatureSequence::new(
        fwd.readout.output,
        mfcc.frame_rate,
        FeatureKind::Articulatory,
    )
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

/// One training utterance: aligned MVN features plus the conditioning vector
/// for conditioned schemes.
#[derive(Debug, Clone)]
pub struct SchemeItem {
    pub speaker: u32,
    pub sentence: u32,
    pub mfcc: Array2<f64>,
    pub art: Array2<f64>,
    pub embedding: Option<Array1<f64>>,
}

#[derive(Debug, Clone, Default)]
pub struct SchemeData {
    pub train: Vec<SchemeItem>,
    pub val: Vec<SchemeItem>,
}

/// Either one pooled model or one model per speaker.
pub enum SchemeModels {
    Pooled(AaiModel),
    PerSpeaker(BTreeMap<u32, AaiModel>),
}

impl SchemeModels {
    pub fn for_speaker(&self, speaker: u32) -> Option<&AaiModel> {
        match self {
            SchemeModels::Pooled(m) => Some(m),
            SchemeModels::PerSpeaker(map) => map.get(&speaker),
        }
    }
}

fn batch_loss_grad(
    net: &AaiNet,
    params: &Params,
    items: &[&SchemeItem],
) -> Result<(f64, Vec<f64>)> {
    let total_elems: usize = items.iter().map(|it| it.art.len()).sum();
    let results: Vec<Result<(f64, Params)>> = items
        .par_iter()
        .map(|item| {
            let fwd = forward_net(net, params, &item.mfcc, item.embedding.as_ref())?;
            let (item_loss, dpred) =
                loss::mse_with_grad(&fwd.readout.output, &item.art, total_elems)?;
            let mut grads = Params::zeros(&net.layout);
            backward_net(net, params, &fwd, &dpred, &mut grads);
            Ok((item_loss, grads))
        })
        .collect();
    let mut total_loss = 0.0;
    let mut total = Params::zeros(&net.layout);
    for r in results {
        let (l, g) = r?;
        total_loss += l;
        total.add_assign(&g);
    }
    Ok((total_loss, total.data))
}

fn validation_loss(net: &AaiNet, params: &Params, items: &[SchemeItem]) -> Result<f64> {
    let total_elems: usize = items.iter().map(|it| it.art.len()).sum();
    let losses: Vec<Result<f64>> = items
        .par_iter()
        .map(|item| {
            let fwd = forward_net(net, params, &item.mfcc, item.embedding.as_ref())?;
            let (l, _) = loss::mse_with_grad(&fwd.readout.output, &item.art, total_elems)?;
            Ok(l)
        })
        .collect();
    let mut sum = 0.0;
    for l in losses {
        sum += l?;
    }
    Ok(sum)
}

/// Train one model on the given items with MSE and early stopping; leaves the
/// model at its best-validation snapshot, rounded to f32 precision so the
/// in-memory model matches its checkpoint bit for bit.
pub fn train_model(
    model: &mut AaiModel,
    train: &[SchemeItem],
    val: &[SchemeItem],
    cfg: &TrainConfig,
) -> Result<History> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::Parameter("empty train or validation set".into()));
    }
    if model.scheme.is_conditioned() {
        for it in train.iter().chain(val) {
            if it.embedding.is_none() {
                return Err(Error::MissingArtifact {
                    missing: format!(
                        "conditioning embedding for speaker {} sentence {}",
                        it.speaker, it.sentence
                    ),
                    produced_by: "train-embedder".into(),
                });
            }
        }
    }
    let net = &model.net;
    let mut params = model.params.clone();
    let history = fit(
        &mut params,
        train.len(),
        cfg,
        |p, batch| {
            let items: Vec<&SchemeItem> = batch.iter().map(|&i| &train[i]).collect();
            batch_loss_grad(net, p, &items)
        },
        |p| validation_loss(net, p, val),
    )?;
    params.quantize_f32();
    model.params = params;
    Ok(history)
}

fn filter_speaker(items: &[SchemeItem], speaker: u32) -> Vec<SchemeItem> {
    items.iter().filter(|it| it.speaker == speaker).cloned().collect()
}

fn speakers_of(data: &SchemeData) -> Vec<u32> {
    let mut s: Vec<u32> = data.train.iter().map(|it| it.speaker).collect();
    s.sort_unstable();
    s.dedup();
    s
}

/// Train a scheme end to end. SD trains one model per speaker on that
/// speaker's data; GM/SC/XSC train one pooled model; GM-FSD copies the GM
/// parent and fine-tunes per speaker at a 10x lower learning rate.
pub fn train_scheme(
    scheme: Scheme,
    embed_dim: Option<usize>,
    dims: AaiDims,
    data: &SchemeData,
    gm_parent: Option<&AaiModel>,
    cfg: &TrainConfig,
    provenance: &Provenance,
) -> Result<(SchemeModels, BTreeMap<String, History>)> {
    let mut histories = BTreeMap::new();
    match scheme {
        Scheme::Gm | Scheme::Sc | Scheme::Xsc => {
            let mut model = build_model(
                scheme,
                embed_dim,
                dims,
                cfg.seed,
                Provenance {
                    speakers: speakers_of(data),
                    ..provenance.clone()
                },
            )?;
            let history = train_model(&mut model, &data.train, &data.val, cfg)?;
            histories.insert(scheme.name().to_string(), history);
            Ok((SchemeModels::Pooled(model), histories))
        }
        Scheme::Sd => {
            let speakers = speakers_of(data);
            let trained: Vec<Result<(u32, AaiModel, History)>> = speakers
                .par_iter()
                .map(|&spk| {
                    let mut model = build_model(
                        scheme,
                        None,
                        dims,
                        cfg.seed,
                        Provenance {
                            speakers: vec![spk],
                            ..provenance.clone()
                        },
                    )?;
                    let train = filter_speaker(&data.train, spk);
                    let val = filter_speaker(&data.val, spk);
                    let history = train_model(&mut model, &train, &val, cfg)?;
                    Ok((spk, model, history))
                })
                .collect();
            let mut map = BTreeMap::new();
            for r in trained {
                let (spk, model, history) = r?;
                histories.insert(format!("sd_{spk}"), history);
                map.insert(spk, model);
            }
            Ok((SchemeModels::PerSpeaker(map), histories))
        }
        Scheme::GmFsd => {
            let parent = gm_parent.ok_or_else(|| Error::MissingArtifact {
                missing: "GM parent model for fine-tuning".into(),
                produced_by: "train-aai --scheme gm".into(),
            })?;
            // All layers update, at a 10x lower learning rate.
            let ft_cfg = TrainConfig {
                learning_rate: cfg.learning_rate * 0.1,
                ..cfg.clone()
            };
            let speakers = speakers_of(data);
            let trained: Vec<Result<(u32, AaiModel, History)>> = speakers
                .par_iter()
                .map(|&spk| {
                    let mut model = parent.clone_model();
                    model.scheme = Scheme::GmFsd;
                    model.provenance = Provenance {
                        speakers: vec![spk],
                        ..provenance.clone()
                    };
                    let train = filter_speaker(&data.train, spk);
                    let val = filter_speaker(&data.val, spk);
                    let history = train_model(&mut model, &train, &val, &ft_cfg)?;
                    Ok((spk, model, history))
                })
                .collect();
            let mut map = BTreeMap::new();
            for r in trained {
                let (spk, model, history) = r?;
                histories.insert(format!("gm-fsd_{spk}"), history);
                map.insert(spk, model);
            }
            Ok((SchemeModels::PerSpeaker(map), histories))
        }
    }
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct AaiMeta {
    scheme: Scheme,
    arch: AaiArchitecture,
    provenance: Provenance,
}

pub fn save_model(model: &AaiModel, path: &Path) -> Result<()> {
    let meta = serde_json::to_value(AaiMeta {
        scheme: model.scheme,
        arch: model.arch.clone(),
        provenance: model.provenance.clone(),
    })
    .map_err(|e| Error::Config(format!("serializing model meta: {e}")))?;
    checkpoint::save_checkpoint(path, "aai", &meta, &model.net.layout, &model.params)
}

pub fn load_model(path: &Path) -> Result<AaiModel> {
    let ck = checkpoint::load_checkpoint(path)?;
    let file = path.display().to_string();
    if ck.header.kind != "aai" {
        return Err(Error::format(
            &file,
            format!("checkpoint kind `{}` is not an AAI model", ck.header.kind),
        ));
    }
    let meta: AaiMeta = serde_json::from_value(ck.header.meta.clone())
        .map_err(|e| Error::format(&file, format!("model meta: {e}")))?;
    let net = AaiNet::build(&meta.arch);
    let params = checkpoint::restore_params(&ck, &net.layout, &file)?;
    Ok(AaiModel {
        scheme: meta.scheme,
        arch: meta.arch,
        provenance: meta.provenance,
        net,
        params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::one_hot;

    fn test_provenance() -> Provenance {
        Provenance {
            speakers: vec![0, 1],
            seed: 7,
            config_hash: "test".into(),
        }
    }

    fn block_len(model: &AaiModel, name: &str) -> usize {
        model
            .layout()
            .blocks()
            .iter()
            .filter(|b| b.name.starts_with(name))
            .map(|b| b.len())
            .sum()
    }

    #[test]
    fn paper_scale_parameter_counts() {
        let sd = build_model(Scheme::Sd, None, AaiDims::paper(), 1, test_provenance()).unwrap();
        assert_eq!(block_len(&sd, "acoustic"), 13 * 200 + 200);
        assert_eq!(sd.arch.trunk_input_dim(), 200);

        let xsc = build_model(
            Scheme::Xsc,
            Some(512),
            AaiDims::paper(),
            1,
            test_provenance(),
        )
        .unwrap();
        assert_eq!(block_len(&xsc, "conditioning"), 512 * 32 + 32);
        assert_eq!(xsc.arch.trunk_input_dim(), 232);
    }

    #[test]
    fn gm_and_sd_share_architecture() {
        let sd = build_model(Scheme::Sd, None, AaiDims::desk(), 1, test_provenance()).unwrap();
        let gm = build_model(Scheme::Gm, None, AaiDims::desk(), 1, test_provenance()).unwrap();
        assert_eq!(sd.layout(), gm.layout());
    }

    #[test]
    fn embed_dim_for_unconditioned_scheme_rejected() {
        assert!(build_model(Scheme::Sd, Some(8), AaiDims::desk(), 1, test_provenance()).is_err());
        assert!(build_model(Scheme::Gm, Some(8), AaiDims::desk(), 1, test_provenance()).is_err());
        assert!(build_model(Scheme::Sc, None, AaiDims::desk(), 1, test_provenance()).is_err());
    }

    #[test]
    fn condition_concat_shapes_and_broadcast() {
        let acoustic = Array2::from_shape_fn((5, 200), |(i, j)| (i + j) as f64);
        let cond = Array1::from_shape_fn(32, |i| i as f64 * 0.5);
        let out = condition_concat(&acoustic, &cond);
        assert_eq!(out.dim(), (5, 232));
        for t in 0..5 {
            for j in 0..32 {
                assert_eq!(out[[t, 200 + j]], cond[j]);
            }
        }
        // Two different frames receive the identical conditioning sub-vector.
        assert_eq!(
            out.slice(s![0, 200..]).to_owned(),
            out.slice(s![4, 200..]).to_owned()
        );
    }

    #[test]
    fn broadcast_equals_per_frame_replication() {
        // The dense conditioning branch applied once and broadcast must match
        // literal per-frame replication through the same branch.
        let model = build_model(
            Scheme::Sc,
            Some(6),
            AaiDims::desk(),
            3,
            test_provenance(),
        )
        .unwrap();
        let cond_layer = model.net.cond.as_ref().unwrap();
        let e = Array1::from_shape_fn(6, |i| (i as f64 * 0.7).sin());
        let t = 7;
        let e_row = e.view().insert_axis(Axis(0)).to_owned();
        let once = cond_layer
            .forward(&model.net.layout, &model.params, &e_row)
            .output
            .row(0)
            .to_owned();
        let mut replicated = Array2::zeros((t, 6));
        for mut row in replicated.rows_mut() {
            row.assign(&e);
        }
        let per_frame = cond_layer
            .forward(&model.net.layout, &model.params, &replicated)
            .output;
        for t_i in 0..t {
            for j in 0..once.len() {
                assert!((per_frame[[t_i, j]] - once[j]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn zero_embedding_zero_bias_gives_zero_conditioning() {
        let mut model = build_model(
            Scheme::Sc,
            Some(4),
            AaiDims::desk(),
            3,
            test_provenance(),
        )
        .unwrap();
        let cond = model.net.cond.as_ref().unwrap().clone();
        model
            .params
            .slice_mut(&model.net.layout.clone(), cond.b)
            .fill(0.0);
        let e = Array1::zeros(4);
        let e_row = e.view().insert_axis(Axis(0)).to_owned();
        let out = cond
            .forward(model.layout(), &model.params, &e_row)
            .output;
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn predict_shape_and_embedding_requirements() {
        let mfcc = FeatureSequence::new(
            Array2::from_shape_fn((20, 13), |(i, j)| ((i * 13 + j) as f64 * 0.01).sin()),
            100.0,
            FeatureKind::Mfcc,
        )
        .unwrap();

        let gm = build_model(Scheme::Gm, None, AaiDims::desk(), 1, test_provenance()).unwrap();
        let out = predict(&gm, &mfcc, None).unwrap();
        assert_eq!(out.frames.dim(), (20, 12));

        let sc = build_model(Scheme::Sc, Some(5), AaiDims::desk(), 1, test_provenance()).unwrap();
        let e = one_hot(1, 5).unwrap();
        assert!(predict(&sc, &mfcc, None).is_err());
        assert!(predict(&gm, &mfcc, Some(&e)).is_err());
        let out = predict(&sc, &mfcc, Some(&e)).unwrap();
        assert_eq!(out.frames.dim(), (20, 12));
    }

    #[test]
    fn conditioning_is_consumed() {
        // Different one-hot indices must change the prediction even before
        // training; the conditioning path is structurally live.
        let sc = build_model(Scheme::Sc, Some(5), AaiDims::desk(), 2, test_provenance()).unwrap();
        let mfcc = FeatureSequence::new(
            Array2::from_shape_fn((15, 13), |(i, j)| ((i + j) as f64 * 0.13).cos()),
            100.0,
            FeatureKind::Mfcc,
        )
        .unwrap();
        let a = predict(&sc, &mfcc, Some(&one_hot(0, 5).unwrap())).unwrap();
        let b = predict(&sc, &mfcc, Some(&one_hot(1, 5).unwrap())).unwrap();
        let mean_abs_diff = (&a.frames - &b.frames).mapv(f64::abs).mean().unwrap();
        assert!(mean_abs_diff > 0.0);
    }

    #[test]
    fn checkpoint_round_trip_predictions_bit_identical() {
        let mut model =
            build_model(Scheme::Xsc, Some(8), AaiDims::desk(), 5, test_provenance()).unwrap();
        model.params.quantize_f32();
        let mfcc = FeatureSequence::new(
            Array2::from_shape_fn((18, 13), |(i, j)| ((2 * i + j) as f64 * 0.05).sin()),
            100.0,
            FeatureKind::Mfcc,
        )
        .unwrap();
        let e = SpeakerEmbedding::new(
            Array1::from_shape_fn(8, |i| (i as f64).cos()),
            crate::embed::EmbeddingSource::Xvector,
        )
        .unwrap();
        let before = predict(&model, &mfcc, Some(&e)).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("xsc.aivm");
        save_model(&model, &path).unwrap();
        let loaded = load_model(&path).unwrap();
        assert_eq!(loaded.scheme, Scheme::Xsc);
        assert_eq!(loaded.provenance, model.provenance);
        let after = predict(&loaded, &mfcc, Some(&e)).unwrap();
        assert_eq!(before.frames, after.frames);

        // Save -> load -> save is byte-identical.
        let path2 = dir.path().join("xsc2.aivm");
        save_model(&loaded, &path2).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&path2).unwrap()
        );
    }

    #[test]
    fn overfit_single_utterance() {
        // A model with enough capacity must drive training RMSE below 0.1 on
        // one utterance within a few hundred steps.
        let mut rng_x = crate::corpus::rng_for(&[77]);
        use rand::Rng;
        let t = 40;
        let mfcc = Array2::from_shape_fn((t, 13), |_| rng_x.random_range(-1.0..1.0));
        let art = Array2::from_shape_fn((t, 12), |(i, j)| {
            ((i as f64 * 0.3) + j as f64).sin() * 0.8
        });
        let dims = AaiDims {
            acoustic_units: 32,
            cond_units: 8,
            blstm_hidden: 16,
            blstm_layers: 3,
        };
        let mut model = build_model(Scheme::Sd, None, dims, 1, test_provenance()).unwrap();
        let item = SchemeItem {
            speaker: 0,
            sentence: 0,
            mfcc,
            art: art.clone(),
            embedding: None,
        };
        let cfg = TrainConfig {
            learning_rate: 5e-3,
            batch_size: 1,
            max_epochs: 500,
            patience: 500,
            seed: 2,
            grad_clip_norm: 5.0,
        };
        train_model(&mut model, &[item.clone()], &[item.clone()], &cfg).unwrap();
        let pred = predict(
            &model,
            &FeatureSequence::new(item.mfcc.clone(), 100.0, FeatureKind::Mfcc).unwrap(),
            None,
        )
        .unwrap();
        let rmse = ((&pred.frames - &art).mapv(|d| d * d).mean().unwrap()).sqrt();
        assert!(rmse < 0.1, "overfit rmse {rmse}");
    }

    #[test]
    fn usc_path_accepts_posterior_on_sc_model() {
        // An SC model consumes any simplex vector of the one-hot dimension.
        let sc = build_model(Scheme::Sc, Some(4), AaiDims::desk(), 9, test_provenance()).unwrap();
        let mfcc = FeatureSequence::new(
            Array2::from_shape_fn((16, 13), |(i, j)| ((i + j) as f64 * 0.21).sin()),
            100.0,
            FeatureKind::Mfcc,
        )
        .unwrap();
        let posterior = SpeakerEmbedding::new(
            Array1::from(vec![0.4, 0.3, 0.2, 0.1]),
            crate::embed::EmbeddingSource::SidPosterior,
        )
        .unwrap();
        let out = predict(&sc, &mfcc, Some(&posterior)).unwrap();
        assert_eq!(out.frames.dim(), (16, 12));
    }
}
