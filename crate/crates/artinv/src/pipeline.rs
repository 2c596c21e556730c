//! End-to-end experiment pipeline behind the CLI: synthesize corpora,
//! preprocess features, train the embedder/SID/inversion models, evaluate,
//! and render reports. Every stage writes its artifacts under one output
//! directory, stamps them with the config hash, and can restart from caches.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aai::{self, AaiDims, AaiModel, Provenance, Scheme, SchemeData, SchemeItem, SchemeModels};
use crate::corpus::{
    self, load_corpus, save_corpus, split_corpus, Corpus, CorpusSplit, SpeakerId, Subset,
    SynthSpec,
};
use crate::dsp::{self, FeatureKind, FeatureSequence, FilterSpec};
use crate::embed::{self, EmbeddingSource, SpeakerEmbedding};
use crate::error::{Error, Result};
use crate::eval::{self, EvalReport, ReportFormat, UtteranceScore};
use crate::io;
use crate::nncore::{train::history_csv, TrainConfig};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSection {
    pub seen_speakers: u32,
    pub unseen_speakers: u32,
    pub background_speakers: u32,
    pub sentences: u32,
    pub background_sentences: u32,
    pub duration_s: f64,
    pub wave_rate: f64,
    pub ema_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DspSection {
    pub lowpass_hz: f64,
    pub target_frame_rate: f64,
    pub n_mfcc: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub aai: AaiDims,
    pub embed_dim: usize,
    pub xvec_channels: usize,
    pub sid_lstm_units: usize,
    pub sid_dense_units: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub aai: TrainConfig,
    pub embedder: TrainConfig,
    pub sid: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub corpus: CorpusSection,
    pub dsp: DspSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub schemes: Vec<String>,
    pub significance: f64,
}

impl ExperimentConfig {
    /// Desk-scale experiment: 10 seen + 4 unseen speakers, 60 sentences each,
    /// 12 background speakers, CPU-friendly model dimensions.
    pub fn desk(seed: u64) -> Self {
        // The 50-epoch desk budget needs a higher learning rate than the
        // paper-scale default to bring the pooled models to convergence.
        let train = TrainConfig {
            learning_rate: 2e-3,
            batch_size: 8,
            max_epochs: 50,
            patience: 5,
            seed,
            grad_clip_norm: 5.0,
        };
        ExperimentConfig {
            seed,
            corpus: CorpusSection {
                seen_speakers: 10,
                unseen_speakers: 4,
                background_speakers: 64,
                sentences: 60,
                background_sentences: 24,
                duration_s: 1.0,
                wave_rate: 16_000.0,
                ema_rate: 250.0,
            },
            dsp: DspSection {
                lowpass_hz: 25.0,
                target_frame_rate: 100.0,
                n_mfcc: dsp::N_MFCC,
            },
            model: ModelSection {
                aai: AaiDims::desk(),
                embed_dim: 64,
                xvec_channels: 32,
                sid_lstm_units: 32,
                sid_dense_units: 24,
            },
            train: TrainSection {
                aai: train.clone(),
                embedder: TrainConfig {
                    max_epochs: 80,
                    patience: 8,
                    ..train.clone()
                },
                sid: train,
            },
            schemes: vec![
                "sd".into(),
                "gm".into(),
                "gm-fsd".into(),
                "sc".into(),
                "xsc".into(),
            ],
            significance: 0.05,
        }
    }

    /// Tiny configuration for smoke tests and determinism checks.
    pub fn mini(seed: u64) -> Self {
        let mut cfg = Self::desk(seed);
        cfg.corpus.seen_speakers = 3;
        cfg.corpus.unseen_speakers = 2;
        cfg.corpus.background_speakers = 5;
        cfg.corpus.sentences = 12;
        cfg.corpus.background_sentences = 10;
        cfg.corpus.duration_s = 1.0;
        cfg.model.aai = AaiDims {
            acoustic_units: 16,
            cond_units: 8,
            blstm_hidden: 8,
            blstm_layers: 3,
        };
        cfg.model.embed_dim = 16;
        cfg.model.xvec_channels = 12;
        cfg.model.sid_lstm_units = 12;
        cfg.model.sid_dense_units = 8;
        for t in [
            &mut cfg.train.aai,
            &mut cfg.train.embedder,
            &mut cfg.train.sid,
        ] {
            t.max_epochs = 6;
            t.patience = 2;
        }
        cfg
    }

    /// Re-seed every stage from one master seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.train.aai.seed = seed;
        self.train.embedder.seed = seed;
        self.train.sid.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.corpus.seen_speakers < 2 {
            return Err(Error::Config("need at least 2 seen speakers".into()));
        }
        if self.corpus.background_speakers < 4 {
            return Err(Error::Config("need at least 4 background speakers".into()));
        }
        if self.corpus.seen_speakers + self.corpus.unseen_speakers > 1000 {
            return Err(Error::Config(
                "seen+unseen speakers would collide with background indices".into(),
            ));
        }
        if !(0.0 < self.significance && self.significance < 1.0) {
            return Err(Error::Config(format!(
                "significance {} outside (0, 1)",
                self.significance
            )));
        }
        for s in &self.schemes {
            Scheme::parse(s).map_err(|_| Error::Config(format!("unknown scheme `{s}`")))?;
        }
        self.train.aai.validate()?;
        self.train.embedder.validate()?;
        self.train.sid.validate()?;
        Ok(())
    }

    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        format!("{:016x}", fnv1a64(json.as_bytes()))
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Parse and validate a config file. Fuzz entry point.
pub fn parse_config(bytes: &[u8]) -> std::result::Result<ExperimentConfig, String> {
    let cfg: ExperimentConfig = serde_json::from_slice(bytes).map_err(|e| e.to_string())?;
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

/// Cap rayon's global pool with ARTINV_THREADS when set. Safe to call more
/// than once; later calls are no-ops.
pub fn init_threads() {
    if let Ok(v) = std::env::var("ARTINV_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            if n > 0 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Roles and paths
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Seen,
    Unseen,
    Background,
}

impl Role {
    pub fn dir_name(self) -> &'static str {
        match self {
            Role::Seen => "seen",
            Role::Unseen => "unseen",
            Role::Background => "background",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Condition {
    Seen,
    Unseen,
}

impl Condition {
    pub fn name(self) -> &'static str {
        match self {
            Condition::Seen => "seen",
            Condition::Unseen => "unseen",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "seen" => Ok(Condition::Seen),
            "unseen" => Ok(Condition::Unseen),
            other => Err(Error::Config(format!("unknown condition `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    stage: String,
    config_hash: String,
}

#[derive(Debug)]
pub struct Pipeline {
    pub cfg: ExperimentConfig,
    pub hash: String,
    out: PathBuf,
    models_override: Option<PathBuf>,
}

impl Pipeline {
    pub fn new(cfg: ExperimentConfig, out: impl Into<PathBuf>) -> Result<Pipeline> {
        cfg.validate()?;
        let out = out.into();
        let hash = cfg.hash();
        let config_path = out.join("config.json");
        if config_path.exists() {
            let bytes = fs::read(&config_path).map_err(|e| Error::io(&config_path, e))?;
            let existing: serde_json::Value = serde_json::from_slice(&bytes)
                .map_err(|e| Error::format(config_path.display().to_string(), e.to_string()))?;
            if existing["config_hash"].as_str() != Some(hash.as_str()) {
                return Err(Error::Config(format!(
                    "output directory {} holds artifacts from a different configuration \
                     (hash {:?} != {hash})",
                    out.display(),
                    existing["config_hash"]
                )));
            }
        } else {
            let mut doc = serde_json::to_value(&cfg).expect("config serializes");
            doc["config_hash"] = serde_json::Value::String(hash.clone());
            io::write_atomic(
                &config_path,
                (serde_json::to_string_pretty(&doc).expect("config serializes") + "\n").as_bytes(),
            )?;
        }
        Ok(Pipeline {
            cfg,
            hash,
            out,
            models_override: None,
        })
    }

    /// Point model loading and saving at a different directory (the
    /// `evaluate --models` flag).
    pub fn with_models_dir(mut self, dir: Option<PathBuf>) -> Self {
        self.models_override = dir;
        self
    }

    pub fn out_dir(&self) -> &Path {
        &self.out
    }

    fn corpus_dir(&self, role: Role) -> PathBuf {
        self.out.join("corpus").join(role.dir_name())
    }

    fn split_path(&self, role: Role) -> PathBuf {
        self.out.join("splits").join(format!("{}.json", role.dir_name()))
    }

    fn features_dir(&self, role: Role) -> PathBuf {
        self.out.join("features").join(role.dir_name())
    }

    fn embeddings_dir(&self, role: Role) -> PathBuf {
        self.out.join("embeddings").join(role.dir_name())
    }

    fn models_dir(&self) -> PathBuf {
        self.models_override
            .clone()
            .unwrap_or_else(|| self.out.join("models"))
    }

    fn eval_dir(&self) -> PathBuf {
        self.out.join("eval")
    }

    fn reports_dir(&self) -> PathBuf {
        self.out.join("reports")
    }

    fn manifest_matches(&self, dir: &Path, expected_stage: &str) -> Result<bool> {
        let path = dir.join("manifest.json");
        if !path.exists() {
            return Ok(false);
        }
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let m: Manifest = serde_json::from_slice(&bytes)
            .map_err(|e| Error::format(path.display().to_string(), e.to_string()))?;
        if m.config_hash != self.hash {
            return Err(Error::Config(format!(
                "{} holds `{}` artifacts for config {}, current config is {}; \
                 refusing to mix artifacts",
                dir.display(),
                m.stage,
                m.config_hash,
                self.hash
            )));
        }
        Ok(m.stage == expected_stage)
    }

    fn write_manifest(&self, dir: &Path, stage: &str) -> Result<()> {
        let m = Manifest {
            stage: stage.to_string(),
            config_hash: self.hash.clone(),
        };
        io::write_atomic(
            &dir.join("manifest.json"),
            serde_json::to_string_pretty(&m)
                .expect("manifest serializes")
                .as_bytes(),
        )
    }

    fn roles(&self) -> Vec<Role> {
        let mut roles = vec![Role::Seen];
        if self.cfg.corpus.unseen_speakers > 0 {
            roles.push(Role::Unseen);
        }
        roles.push(Role::Background);
        roles
    }

    fn synth_spec(&self, role: Role) -> SynthSpec {
        let c = &self.cfg.corpus;
        // Unseen speakers anchor their voice latents near the seen
        // population so the closed-set conditioning has something to
        // interpolate; seen and background speakers draw freely.
        let (n, start, sentences, anchors) = match role {
            Role::Seen => (c.seen_speakers, 0, c.sentences, 0),
            Role::Unseen => (c.unseen_speakers, c.seen_speakers, c.sentences, c.seen_speakers),
            Role::Background => (c.background_speakers, 1000, c.background_sentences, 0),
        };
        SynthSpec {
            n_speakers: n,
            n_sentences: sentences,
            duration_s: c.duration_s,
            seed: self.cfg.seed,
            start_index: start,
            wave_rate: c.wave_rate,
            ema_rate: c.ema_rate,
            latent_anchor_count: anchors,
        }
    }

    pub fn seen_speakers(&self) -> Vec<u32> {
        (0..self.cfg.corpus.seen_speakers).collect()
    }

    pub fn unseen_speakers(&self) -> Vec<u32> {
        (self.cfg.corpus.seen_speakers
            ..self.cfg.corpus.seen_speakers + self.cfg.corpus.unseen_speakers)
            .collect()
    }

    fn role_of_speaker(&self, speaker: u32) -> Role {
        if speaker >= 1000 {
            Role::Background
        } else if speaker < self.cfg.corpus.seen_speakers {
            Role::Seen
        } else {
            Role::Unseen
        }
    }

    // -----------------------------------------------------------------------
    // synth
    // -----------------------------------------------------------------------

    pub fn synth(&self) -> Result<()> {
        let done = self
            .roles()
            .iter()
            .map(|&r| self.manifest_matches(&self.corpus_dir(r), "synth"))
            .collect::<Result<Vec<bool>>>()?;
        if done.iter().all(|&d| d) {
            return Ok(());
        }
        // Speaker set disjointness across roles is structural (index ranges);
        // assert it anyway so a future config change cannot silently break it.
        let specs: Vec<SynthSpec> = self.roles().iter().map(|&r| self.synth_spec(r)).collect();
        let mut all_indices = std::collections::BTreeSet::new();
        for spec in &specs {
            for i in spec.start_index..spec.start_index + spec.n_speakers {
                if !all_indices.insert(i) {
                    return Err(Error::Config(format!(
                        "speaker index {i} appears in two corpus roles"
                    )));
                }
            }
        }
        for (role, spec) in self.roles().into_iter().zip(specs) {
            let corpus = corpus::synth_corpus_with(&spec)?;
            let dir = self.corpus_dir(role);
            save_corpus(&corpus, &dir)?;
            let split = split_corpus(&corpus, (0.8, 0.1, 0.1), self.cfg.seed)?;
            corpus::save_split(&split, &self.split_path(role))?;
            self.write_manifest(&dir, "synth")?;
        }
        Ok(())
    }

    fn load_role_corpus(&self, role: Role) -> Result<Corpus> {
        let dir = self.corpus_dir(role);
        if !self.manifest_matches(&dir, "synth")? {
            return Err(Error::MissingArtifact {
                missing: format!("corpus directory {}", dir.display()),
                produced_by: "synth".into(),
            });
        }
        load_corpus(&dir)
    }

    fn load_role_split(&self, role: Role) -> Result<CorpusSplit> {
        let path = self.split_path(role);
        if !path.exists() {
            return Err(Error::MissingArtifact {
                missing: format!("split file {}", path.display()),
                produced_by: "synth".into(),
            });
        }
        corpus::load_split(&path)
    }

    // -----------------------------------------------------------------------
    // preprocess
    // -----------------------------------------------------------------------

    fn mfcc_path(&self, role: Role, speaker: &SpeakerId, sentence: u32) -> PathBuf {
        self.features_dir(role)
            .join(&speaker.label)
            .join(format!("{sentence:04}.mfcc.f32"))
    }

    fn mfccraw_path(&self, role: Role, speaker: &SpeakerId, sentence: u32) -> PathBuf {
        self.features_dir(role)
            .join(&speaker.label)
            .join(format!("{sentence:04}.mfccraw.f32"))
    }

    fn art_path(&self, role: Role, speaker: &SpeakerId, sentence: u32) -> PathBuf {
        self.features_dir(role)
            .join(&speaker.label)
            .join(format!("{sentence:04}.art100.f32"))
    }

    fn xvec_path(&self, role: Role, speaker: &SpeakerId, sentence: u32) -> PathBuf {
        self.embeddings_dir(role)
            .join(&speaker.label)
            .join(format!("{sentence:04}.xvec.f32"))
    }

    pub fn preprocess(&self) -> Result<()> {
        for role in self.roles() {
            let dir = self.features_dir(role);
            if self.manifest_matches(&dir, "preprocess")? {
                continue;
            }
            let corpus = self.load_role_corpus(role)?;
            let filter = FilterSpec::new(self.cfg.dsp.lowpass_hz);
            let outputs: Vec<Result<(PathBuf, Vec<u8>, PathBuf, Vec<u8>, PathBuf, Vec<u8>)>> = corpus
                .utterances
                .par_iter()
                .map(|utt| {
                    let raw = dsp::mfcc(&utt.waveform, utt.sample_rate, self.cfg.dsp.n_mfcc)?;
                    let mfcc = dsp::mvn(&raw)?;
                    let lp = dsp::lowpass(&utt.articulatory, &filter)?;
                    let rs = dsp::resample(&lp, self.cfg.dsp.target_frame_rate)?;
                    let art = FeatureSequence::new(
                        rs.samples,
                        self.cfg.dsp.target_frame_rate,
                        FeatureKind::Articulatory,
                    )?;
                    let art = dsp::mvn(&art)?;
                    let aligned = dsp::align(mfcc, art)?;
                    // Raw MFCCs keep the mean spectral envelope for the
                    // speaker-classification networks; truncate to the
                    // aligned length so every cache agrees on T.
                    let t = aligned.mfcc.len();
                    let raw = raw.frames.slice(ndarray::s![..t, ..]).to_owned();
                    let rate = self.cfg.dsp.target_frame_rate as u32;
                    Ok((
                        self.mfcc_path(role, &utt.speaker, utt.sentence_id),
                        io::encode_matrix(rate, &aligned.mfcc.frames),
                        self.mfccraw_path(role, &utt.speaker, utt.sentence_id),
                        io::encode_matrix(rate, &raw),
                        self.art_path(role, &utt.speaker, utt.sentence_id),
                        io::encode_matrix(rate, &aligned.art.frames),
                    ))
                })
                .collect();
            for r in outputs {
                let (mp, mbytes, rp, rbytes, ap, abytes) = r?;
                io::write_atomic(&mp, &mbytes)?;
                io::write_atomic(&rp, &rbytes)?;
                io::write_atomic(&ap, &abytes)?;
            }
            self.write_manifest(&dir, "preprocess")?;
        }
        Ok(())
    }

    fn read_cached(&self, path: &Path, produced_by: &str) -> Result<Array2<f64>> {
        if !path.exists() {
            return Err(Error::MissingArtifact {
                missing: path.display().to_string(),
                produced_by: produced_by.into(),
            });
        }
        Ok(io::read_matrix(path)?.to_array())
    }

    /// Cached MFCC features for every utterance of a role. `raw` selects the
    /// un-normalized cache used by the speaker-classification networks.
    fn role_features(&self, role: Role, raw: bool) -> Result<embed::FeatureRows> {
        let corpus_meta = self.load_role_corpus(role)?.meta;
        let mut jobs = Vec::new();
        for speaker in &corpus_meta.speakers {
            for sentence in 0..corpus_meta.n_sentences {
                jobs.push((speaker.clone(), sentence));
            }
        }
        let rows: Vec<Result<(u32, u32, Array2<f64>)>> = jobs
            .par_iter()
            .map(|(speaker, sentence)| {
                let path = if raw {
                    self.mfccraw_path(role, speaker, *sentence)
                } else {
                    self.mfcc_path(role, speaker, *sentence)
                };
                let m = self.read_cached(&path, "preprocess")?;
                Ok((speaker.index, *sentence, m))
            })
            .collect();
        let mut out = Vec::with_capacity(rows.len());
        for r in rows {
            out.push(r?);
        }
        out.sort_by_key(|r| (r.0, r.1));
        Ok(out)
    }

    // -----------------------------------------------------------------------
    // train-embedder
    // -----------------------------------------------------------------------

    pub fn embedder_path(&self) -> PathBuf {
        self.models_dir().join("embedder.aivm")
    }

    pub fn sid_path(&self) -> PathBuf {
        self.models_dir().join("sid.aivm")
    }

    pub fn train_embedder(&self) -> Result<()> {
        let marker_roles: Vec<Role> = self
            .roles()
            .into_iter()
            .filter(|r| *r != Role::Background)
            .collect();
        let all_done = self.embedder_path().exists()
            && marker_roles
                .iter()
                .map(|&r| self.manifest_matches(&self.embeddings_dir(r), "train-embedder"))
                .collect::<Result<Vec<bool>>>()?
                .iter()
                .all(|&d| d);
        if all_done {
            return Ok(());
        }

        let bg_features = self.role_features(Role::Background, true)?;
        let bg_split = self.load_role_split(Role::Background)?;
        let bg_corpus = self.load_role_corpus(Role::Background)?;
        let channels = self.cfg.model.xvec_channels;
        let embed_dim = self.cfg.model.embed_dim;
        let training = embed::train_xvector_on_features(
            &bg_features,
            &bg_split,
            &bg_corpus.speaker_indices(),
            |n_classes| embed::XvecArch {
                input_dim: self.cfg.dsp.n_mfcc,
                channels,
                embed_dim,
                n_classes,
                tdnn_layers: vec![(5, 1), (3, 2), (3, 3)],
            },
            &self.cfg.train.embedder,
        )?;
        embed::save_extractor(
            &training.extractor,
            training.holdout_accuracy,
            self.cfg.train.embedder.seed,
            &self.hash,
            &self.embedder_path(),
        )?;
        io::write_atomic(
            &self.models_dir().join("history_embedder.csv"),
            history_csv(&training.history).as_bytes(),
        )?;

        // Populate the x-vector cache for the AAI speaker roles.
        for role in marker_roles {
            let corpus_meta = self.load_role_corpus(role)?.meta;
            let features = self.role_features(role, true)?;
            let written: Vec<Result<(PathBuf, Vec<u8>)>> = features
                .par_iter()
                .map(|(spk, sent, mfcc)| {
                    let seq = FeatureSequence::new(
                        mfcc.clone(),
                        self.cfg.dsp.target_frame_rate,
                        FeatureKind::Mfcc,
                    )?;
                    let xvec = embed::extract_xvector(&training.extractor, &seq)?;
                    let speaker = corpus_meta
                        .speakers
                        .iter()
                        .find(|s| s.index == *spk)
                        .expect("speaker in corpus meta");
                    let mat = xvec.values.insert_axis(ndarray::Axis(0));
                    Ok((
                        self.xvec_path(role, speaker, *sent),
                        io::encode_matrix(1, &mat),
                    ))
                })
                .collect();
            for r in written {
                let (path, bytes) = r?;
                io::write_atomic(&path, &bytes)?;
            }
            self.write_manifest(&self.embeddings_dir(role), "train-embedder")?;
        }
        Ok(())
    }

    pub fn load_embedder(&self) -> Result<(embed::XvectorExtractor, f64)> {
        let path = self.embedder_path();
        if !path.exists() {
            return Err(Error::MissingArtifact {
                missing: path.display().to_string(),
                produced_by: "train-embedder".into(),
            });
        }
        embed::load_extractor(&path)
    }

    fn load_xvec(&self, role: Role, speaker: &SpeakerId, sentence: u32) -> Result<Array1<f64>> {
        let path = self.xvec_path(role, speaker, sentence);
        if !path.exists() {
            return Err(Error::MissingArtifact {
                missing: path.display().to_string(),
                produced_by: "train-embedder".into(),
            });
        }
        let m = io::read_matrix(&path)?;
        Ok(m.to_array().row(0).to_owned())
    }

    // -----------------------------------------------------------------------
    // train-sid
    // -----------------------------------------------------------------------

    pub fn train_sid(&self) -> Result<()> {
        if self.sid_path().exists() {
            return Ok(());
        }
        let features = self.role_features(Role::Seen, true)?;
        let split = self.load_role_split(Role::Seen)?;
        let classes = self.seen_speakers();
        let lstm_units = self.cfg.model.sid_lstm_units;
        let dense_units = self.cfg.model.sid_dense_units;
        let training = embed::train_sid_on_features(
            &features,
            &split,
            &classes,
            |n_classes| embed::SidArch {
                input_dim: self.cfg.dsp.n_mfcc,
                lstm_units,
                dense_units,
                n_classes,
            },
            &self.cfg.train.sid,
        )?;
        embed::save_sid(
            &training.network,
            &classes,
            training.test_accuracy,
            self.cfg.train.sid.seed,
            &self.hash,
            &self.sid_path(),
        )?;
        io::write_atomic(
            &self.models_dir().join("history_sid.csv"),
            history_csv(&training.history).as_bytes(),
        )?;
        Ok(())
    }

    pub fn load_sid(&self) -> Result<(embed::SidNetwork, Vec<u32>, f64)> {
        let path = self.sid_path();
        if !path.exists() {
            return Err(Error::MissingArtifact {
                missing: path.display().to_string(),
                produced_by: "train-sid".into(),
            });
        }
        embed::load_sid(&path)
    }

    // -----------------------------------------------------------------------
    // train-aai
    // -----------------------------------------------------------------------

    fn model_path(&self, scheme: Scheme, speaker: Option<&SpeakerId>) -> PathBuf {
        let name = match speaker {
            Some(s) => format!("{}_{}.aivm", scheme.name(), s.label),
            None => format!("{}.aivm", scheme.name()),
        };
        self.models_dir().join(name)
    }

    fn speaker_id(&self, index: u32) -> SpeakerId {
        SpeakerId::from_index(index)
    }

    /// One-hot dimension and index mapping for SC conditioning: seen speakers
    /// in ascending index order.
    fn onehot_rank(&self, speaker: u32) -> Result<usize> {
        let seen = self.seen_speakers();
        seen.binary_search(&speaker).map_err(|_| {
            Error::Parameter(format!(
                "speaker {speaker} is not a seen speaker; one-hot conditioning \
                 is closed-set"
            ))
        })
    }

    fn scheme_embedding(
        &self,
        scheme: Scheme,
        role: Role,
        speaker: &SpeakerId,
        sentence: u32,
    ) -> Result<Option<Array1<f64>>> {
        match scheme {
            Scheme::Sc => {
                let rank = self.onehot_rank(speaker.index)?;
                let n = self.cfg.corpus.seen_speakers as usize;
                Ok(Some(embed::one_hot(rank, n)?.values))
            }
            Scheme::Xsc => Ok(Some(self.load_xvec(role, speaker, sentence)?)),
            _ => Ok(None),
        }
    }

    fn scheme_items(
        &self,
        scheme: Scheme,
        speakers: &[u32],
        subset: Subset,
    ) -> Result<Vec<SchemeItem>> {
        let mut items = Vec::new();
        for &spk in speakers {
            let role = self.role_of_speaker(spk);
            let split = self.load_role_split(role)?;
            let speaker = self.speaker_id(spk);
            for sentence in split.sentences_for(subset, spk) {
                let mfcc = self.read_cached(&self.mfcc_path(role, &speaker, sentence), "preprocess")?;
                let art = self.read_cached(&self.art_path(role, &speaker, sentence), "preprocess")?;
                let embedding = self.scheme_embedding(scheme, role, &speaker, sentence)?;
                items.push(SchemeItem {
                    speaker: spk,
                    sentence,
                    mfcc,
                    art,
                    embedding,
                });
            }
        }
        Ok(items)
    }

    fn embed_dim_for(&self, scheme: Scheme) -> Option<usize> {
        match scheme {
            Scheme::Sc => Some(self.cfg.corpus.seen_speakers as usize),
            Scheme::Xsc => Some(self.cfg.model.embed_dim),
            _ => None,
        }
    }

    /// Train one scheme. `speakers` defaults to the seen set; SD accepts any
    /// speaker list (the unseen-speaker SD models serve as the seen-condition
    /// reference in the unseen evaluation).
    pub fn train_aai(&self, scheme: Scheme, speakers: Option<Vec<u32>>) -> Result<()> {
        let speakers = speakers.unwrap_or_else(|| self.seen_speakers());
        if scheme != Scheme::Sd {
            let seen = self.seen_speakers();
            if speakers != seen {
                return Err(Error::Config(format!(
                    "scheme {scheme} trains on the seen speaker set; \
                     a speaker filter is only supported for sd"
                )));
            }
        }
        // Skip when every expected model checkpoint already exists.
        let expected: Vec<PathBuf> = if scheme.per_speaker() {
            speakers
                .iter()
                .map(|&s| self.model_path(scheme, Some(&self.speaker_id(s))))
                .collect()
        } else {
            vec![self.model_path(scheme, None)]
        };
        if expected.iter().all(|p| p.exists()) {
            return Ok(());
        }

        let data = SchemeData {
            train: self.scheme_items(scheme, &speakers, Subset::Train)?,
            val: self.scheme_items(scheme, &speakers, Subset::Validation)?,
        };
        let gm_model;
        let gm_parent = if scheme == Scheme::GmFsd {
            gm_model = Some(self.load_model(Scheme::Gm, None)?);
            gm_model.as_deref()
        } else {
            None
        };
        let provenance = Provenance {
            speakers: speakers.clone(),
            seed: self.cfg.train.aai.seed,
            config_hash: self.hash.clone(),
        };
        let (models, histories) = aai::train_scheme(
            scheme,
            self.embed_dim_for(scheme),
            self.cfg.model.aai,
            &data,
            gm_parent,
            &self.cfg.train.aai,
            &provenance,
        )?;
        match models {
            SchemeModels::Pooled(model) => {
                aai::save_model(&model, &self.model_path(scheme, None))?;
            }
            SchemeModels::PerSpeaker(map) => {
                for (spk, model) in map {
                    aai::save_model(&model, &self.model_path(scheme, Some(&self.speaker_id(spk))))?;
                }
            }
        }
        for (name, history) in histories {
            io::write_atomic(
                &self.models_dir().join(format!("history_{name}.csv")),
                history_csv(&history).as_bytes(),
            )?;
        }
        Ok(())
    }

    fn load_model(&self, scheme: Scheme, speaker: Option<&SpeakerId>) -> Result<Box<AaiModel>> {
        let path = self.model_path(scheme, speaker);
        if !path.exists() {
            let hint = match scheme {
                Scheme::Xsc => "train-embedder, then train-aai --scheme xsc",
                Scheme::GmFsd => "train-aai --scheme gm, then train-aai --scheme gm-fsd",
                _ => "train-aai",
            };
            return Err(Error::MissingArtifact {
                missing: path.display().to_string(),
                produced_by: hint.into(),
            });
        }
        let model = aai::load_model(&path)?;
        if model.provenance.config_hash != self.hash {
            return Err(Error::Config(format!(
                "model {} was trained under config {}, current config is {}; \
                 refusing to mix artifacts",
                path.display(),
                model.provenance.config_hash,
                self.hash
            )));
        }
        Ok(Box::new(model))
    }

    // -----------------------------------------------------------------------
    // evaluate
    // -----------------------------------------------------------------------

    pub fn scores_path(&self, condition: Condition) -> PathBuf {
        self.eval_dir().join(format!("scores_{}.json", condition.name()))
    }

    /// Evaluation schemes valid for a condition. `usc` runs the SC model with
    /// SID posteriors; `sd` under the unseen condition is the seen-condition
    /// reference (per-speaker models trained on the unseen speakers' data).
    pub fn default_eval_schemes(&self, condition: Condition) -> Vec<String> {
        match condition {
            Condition::Seen => self
                .cfg
                .schemes
                .iter()
                .cloned()
                .collect(),
            Condition::Unseen => {
                let mut v = Vec::new();
                for s in ["gm", "xsc"] {
                    if self.cfg.schemes.iter().any(|x| x == s) {
                        v.push(s.to_string());
                    }
                }
                if self.cfg.schemes.iter().any(|x| x == "sc") {
                    v.push("usc".to_string());
                }
                if self.cfg.schemes.iter().any(|x| x == "sd") {
                    v.push("sd".to_string());
                }
                v
            }
        }
    }

    pub fn evaluate(&self, condition: Condition, schemes: &[String]) -> Result<EvalReport> {
        let (role, speakers) = match condition {
            Condition::Seen => (Role::Seen, self.seen_speakers()),
            Condition::Unseen => (Role::Unseen, self.unseen_speakers()),
        };
        if speakers.is_empty() {
            return Err(Error::Config(format!(
                "no speakers available for the {} condition",
                condition.name()
            )));
        }
        let split = self.load_role_split(role)?;

        let mut all_scores: BTreeMap<String, Vec<UtteranceScore>> = BTreeMap::new();
        for scheme_name in schemes {
            let scores = self.evaluate_scheme(scheme_name, condition, role, &speakers, &split)?;
            all_scores.insert(scheme_name.clone(), scores);
        }
        let report = EvalReport::from_scores(condition.name(), self.cfg.significance, all_scores)?;
        let json = serde_json::to_string_pretty(&report)
            .map_err(|e| Error::Config(format!("serializing scores: {e}")))?
            + "\n";
        io::write_atomic(&self.scores_path(condition), json.as_bytes())?;
        Ok(report)
    }

    fn evaluate_scheme(
        &self,
        scheme_name: &str,
        condition: Condition,
        role: Role,
        speakers: &[u32],
        split: &CorpusSplit,
    ) -> Result<Vec<UtteranceScore>> {
        // Resolve the model source and the conditioning source.
        enum Source {
            Plain(Scheme),
            Usc,
        }
        let source = if scheme_name == "usc" {
            if condition == Condition::Seen {
                return Err(Error::Config(
                    "usc is an unseen-condition evaluation path".into(),
                ));
            }
            Source::Usc
        } else {
            Source::Plain(Scheme::parse(scheme_name)?)
        };

        let sid = match &source {
            Source::Usc => Some(self.load_sid()?),
            _ => None,
        };
        let pooled_model = match &source {
            Source::Usc => Some(self.load_model(Scheme::Sc, None)?),
            Source::Plain(s) if !s.per_speaker() => Some(self.load_model(*s, None)?),
            _ => None,
        };

        let mut jobs = Vec::new();
        for &spk in speakers {
            let speaker = self.speaker_id(spk);
            for sentence in split.sentences_for(Subset::Test, spk) {
                jobs.push((speaker.clone(), sentence));
            }
        }

        let per_speaker_models: BTreeMap<u32, Box<AaiModel>> = match &source {
            Source::Plain(s) if s.per_speaker() => {
                let mut map = BTreeMap::new();
                for &spk in speakers {
                    map.insert(spk, self.load_model(*s, Some(&self.speaker_id(spk)))?);
                }
                map
            }
            _ => BTreeMap::new(),
        };

        let results: Vec<Result<UtteranceScore>> = jobs
            .par_iter()
            .map(|(speaker, sentence)| {
                let mfcc = self.read_cached(
                    &self.mfcc_path(role, speaker, *sentence),
                    "preprocess",
                )?;
                let art = self.read_cached(&self.art_path(role, speaker, *sentence), "preprocess")?;
                let mfcc_seq = FeatureSequence::new(
                    mfcc,
                    self.cfg.dsp.target_frame_rate,
                    FeatureKind::Mfcc,
                )?;
                let (model, embedding): (&AaiModel, Option<SpeakerEmbedding>) = match &source {
                    Source::Usc => {
                        let (sid_net, _, _) = sid.as_ref().expect("sid loaded");
                        let raw = self.read_cached(
                            &self.mfccraw_path(role, speaker, *sentence),
                            "preprocess",
                        )?;
                        let raw_seq = FeatureSequence::new(
                            raw,
                            self.cfg.dsp.target_frame_rate,
                            FeatureKind::Mfcc,
                        )?;
                        let posterior = embed::sid_posterior(sid_net, &raw_seq)?;
                        (pooled_model.as_ref().expect("sc model loaded"), Some(posterior))
                    }
                    Source::Plain(s) => match s {
                        Scheme::Sc => {
                            let rank = self.onehot_rank(speaker.index)?;
                            let n = self.cfg.corpus.seen_speakers as usize;
                            (
                                pooled_model.as_ref().expect("model loaded"),
                                Some(embed::one_hot(rank, n)?),
                            )
                        }
                        Scheme::Xsc => {
                            let xv = self.load_xvec(role, speaker, *sentence)?;
                            (
                                pooled_model.as_ref().expect("model loaded"),
                                Some(SpeakerEmbedding::new(xv, EmbeddingSource::Xvector)?),
                            )
                        }
                        Scheme::Gm => (pooled_model.as_ref().expect("model loaded"), None),
                        Scheme::Sd | Scheme::GmFsd => (
                            per_speaker_models
                                .get(&speaker.index)
                                .expect("per-speaker model loaded"),
                            None,
                        ),
                    },
                };
                let pred = aai::predict(model, &mfcc_seq, embedding.as_ref())?;
                eval::score_utterance(speaker.index, *sentence, &pred.frames, &art)
            })
            .collect();
        let mut scores = Vec::with_capacity(results.len());
        for r in results {
            scores.push(r?);
        }
        Ok(scores)
    }

    /// Minimum fraction of sub-25 Hz spectral energy across predicted
    /// channels, over the test utterances of a condition.
    pub fn smoothness_check(&self, condition: Condition, scheme_name: &str) -> Result<f64> {
        let (role, speakers) = match condition {
            Condition::Seen => (Role::Seen, self.seen_speakers()),
            Condition::Unseen => (Role::Unseen, self.unseen_speakers()),
        };
        let split = self.load_role_split(role)?;
        let scheme = Scheme::parse(scheme_name)?;
        let pooled = if scheme.per_speaker() {
            None
        } else {
            Some(self.load_model(scheme, None)?)
        };
        let mut per_speaker: BTreeMap<u32, Box<AaiModel>> = BTreeMap::new();
        if scheme.per_speaker() {
            for &spk in &speakers {
                per_speaker.insert(spk, self.load_model(scheme, Some(&self.speaker_id(spk)))?);
            }
        }
        let mut min_fraction = 1.0f64;
        for &spk in &speakers {
            let speaker = self.speaker_id(spk);
            let model: &AaiModel = match &pooled {
                Some(m) => m,
                None => per_speaker.get(&spk).expect("per-speaker model loaded"),
            };
            for sentence in split.sentences_for(Subset::Test, spk) {
                let mfcc = self.read_cached(
                    &self.mfcc_path(role, &speaker, sentence),
                    "preprocess",
                )?;
                let mfcc_seq = FeatureSequence::new(
                    mfcc,
                    self.cfg.dsp.target_frame_rate,
                    FeatureKind::Mfcc,
                )?;
                let embedding = match scheme {
                    Scheme::Sc => Some(embed::one_hot(
                        self.onehot_rank(spk)?,
                        self.cfg.corpus.seen_speakers as usize,
                    )?),
                    Scheme::Xsc => Some(SpeakerEmbedding::new(
                        self.load_xvec(role, &speaker, sentence)?,
                        EmbeddingSource::Xvector,
                    )?),
                    _ => None,
                };
                let pred = aai::predict(model, &mfcc_seq, embedding.as_ref())?;
                for c in 0..pred.frames.ncols() {
                    let ch: Vec<f64> = pred.frames.column(c).to_vec();
                    let frac = dsp::band_energy_fraction(&ch, self.cfg.dsp.target_frame_rate, 25.0);
                    min_fraction = min_fraction.min(frac);
                }
            }
        }
        Ok(min_fraction)
    }

    // -----------------------------------------------------------------------
    // report
    // -----------------------------------------------------------------------

    pub fn load_scores(&self, condition: Condition) -> Result<EvalReport> {
        let path = self.scores_path(condition);
        if !path.exists() {
            return Err(Error::MissingArtifact {
                missing: path.display().to_string(),
                produced_by: "evaluate".into(),
            });
        }
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_slice(&bytes)
            .map_err(|e| Error::format(path.display().to_string(), e.to_string()))
    }

    /// Render report tables from stored scores. Re-running after deleting the
    /// reports directory reproduces the same bytes.
    pub fn report(&self, formats: &[ReportFormat]) -> Result<Vec<String>> {
        let dir = self.reports_dir();
        let mut written = Vec::new();
        for condition in [Condition::Seen, Condition::Unseen] {
            if !self.scores_path(condition).exists() {
                continue;
            }
            let report = self.load_scores(condition)?;
            for &format in formats {
                written.extend(eval::emit_report(&report, &dir, format)?);
            }
        }
        if let Some(drop) = self.relative_drop_report()? {
            let json = serde_json::to_string_pretty(&drop)
                .map_err(|e| Error::Config(format!("serializing drop report: {e}")))?
                + "\n";
            io::write_atomic(&dir.join("relative_drop.json"), json.as_bytes())?;
            written.push("relative_drop.json".into());
        }
        Ok(written)
    }

    /// Relative CC drop of GM and xSC in the unseen condition against the SD
    /// seen-condition reference on the same speakers.
    pub fn relative_drop_report(&self) -> Result<Option<RelativeDropReport>> {
        let path = self.scores_path(Condition::Unseen);
        if !path.exists() {
            return Ok(None);
        }
        let unseen = self.load_scores(Condition::Unseen)?;
        let sd_ref = match unseen.scheme("sd") {
            Some(s) => s.cc,
            None => return Ok(None),
        };
        let mut drops = BTreeMap::new();
        for name in ["gm", "usc", "xsc"] {
            if let Some(s) = unseen.scheme(name) {
                drops.insert(
                    name.to_string(),
                    DropEntry {
                        unseen_cc: s.cc,
                        seen_reference_cc: sd_ref,
                        drop_percent: eval::relative_drop(sd_ref, s.cc)?,
                    },
                );
            }
        }
        Ok(Some(RelativeDropReport {
            reference: "sd models trained on the unseen speakers (seen condition)".into(),
            drops,
        }))
    }

    // -----------------------------------------------------------------------
    // project-embeddings
    // -----------------------------------------------------------------------

    pub fn project_embeddings(&self) -> Result<PathBuf> {
        let mut rows = Vec::new();
        let mut embeddings = Vec::new();
        for role in [Role::Seen, Role::Unseen] {
            if role == Role::Unseen && self.cfg.corpus.unseen_speakers == 0 {
                continue;
            }
            let meta = self.load_role_corpus(role)?.meta;
            for speaker in &meta.speakers {
                for sentence in 0..meta.n_sentences {
                    let xv = self.load_xvec(role, speaker, sentence)?;
                    rows.push((speaker.label.clone(), sentence));
                    embeddings.push(SpeakerEmbedding::new(xv, EmbeddingSource::Xvector)?);
                }
            }
        }
        let points = embed::project_2d(&embeddings)?;
        let mut csv = String::from("speaker,sentence,x,y\n");
        for ((label, sentence), (x, y)) in rows.iter().zip(points) {
            csv.push_str(&format!("{label},{sentence},{x},{y}\n"));
        }
        let path = self.out.join("projections").join("embeddings_2d.csv");
        io::write_atomic(&path, csv.as_bytes())?;
        Ok(path)
    }

    // -----------------------------------------------------------------------
    // reproduce
    // -----------------------------------------------------------------------

    /// Run the full protocol: background-train the embedder, train the SID on
    /// seen speakers, train every configured scheme, evaluate both conditions,
    /// render reports, and summarize the headline properties.
    pub fn reproduce(&self) -> Result<ReproSummary> {
        self.synth()?;
        self.preprocess()?;
        self.train_embedder()?;
        self.train_sid()?;

        let mut schemes: Vec<Scheme> = self
            .cfg
            .schemes
            .iter()
            .map(|s| Scheme::parse(s))
            .collect::<Result<Vec<_>>>()?;
        schemes.sort_unstable();
        schemes.dedup();
        // GM must precede GM-FSD.
        schemes.sort_by_key(|s| match s {
            Scheme::Gm => 0,
            Scheme::Sd => 1,
            Scheme::Sc => 2,
            Scheme::Xsc => 3,
            Scheme::GmFsd => 4,
        });
        for scheme in &schemes {
            self.train_aai(*scheme, None)?;
        }
        // Seen-condition SD reference for the unseen speakers.
        if self.cfg.corpus.unseen_speakers > 0 && schemes.contains(&Scheme::Sd) {
            self.train_aai(Scheme::Sd, Some(self.unseen_speakers()))?;
        }

        let seen_report = self.evaluate(Condition::Seen, &self.default_eval_schemes(Condition::Seen))?;
        let unseen_report = if self.cfg.corpus.unseen_speakers > 0 {
            Some(self.evaluate(
                Condition::Unseen,
                &self.default_eval_schemes(Condition::Unseen),
            )?)
        } else {
            None
        };
        self.report(&[ReportFormat::Csv, ReportFormat::Json, ReportFormat::Markdown])?;
        self.project_embeddings()?;

        let (_, embedder_acc) = self.load_embedder()?;
        let (_, _, sid_acc) = self.load_sid()?;
        let seen_cc: BTreeMap<String, f64> = seen_report
            .schemes
            .iter()
            .map(|s| (s.scheme.clone(), s.cc))
            .collect();
        let unseen_cc: BTreeMap<String, f64> = unseen_report
            .as_ref()
            .map(|r| r.schemes.iter().map(|s| (s.scheme.clone(), s.cc)).collect())
            .unwrap_or_default();

        let smoothness = self.smoothness_check(Condition::Seen, "gm")?;
        let drops = self.relative_drop_report()?;

        let mut properties = BTreeMap::new();
        let get = |m: &BTreeMap<String, f64>, k: &str| m.get(k).copied();
        if let (Some(xsc), Some(sc), Some(gm), Some(sd)) = (
            get(&seen_cc, "xsc"),
            get(&seen_cc, "sc"),
            get(&seen_cc, "gm"),
            get(&seen_cc, "sd"),
        ) {
            properties.insert("seen_xsc_ge_gm".into(), xsc >= gm + 0.005);
            properties.insert("seen_sc_ge_gm".into(), sc >= gm + 0.005);
            properties.insert("seen_gm_ge_sd".into(), gm >= sd + 0.01);
            properties.insert("seen_xsc_close_to_sc".into(), (xsc - sc).abs() <= 0.02);
        }
        if let (Some(xsc), Some(gm)) = (get(&unseen_cc, "xsc"), get(&unseen_cc, "gm")) {
            properties.insert("unseen_xsc_gt_gm".into(), xsc > gm);
            if let Some(usc) = get(&unseen_cc, "usc") {
                properties.insert("unseen_xsc_gt_usc".into(), xsc > usc);
                properties.insert("unseen_gm_gt_usc".into(), gm > usc);
            }
        }
        if let Some(d) = &drops {
            if let (Some(g), Some(x)) = (d.drops.get("gm"), d.drops.get("xsc")) {
                properties.insert(
                    "drop_xsc_le_gm".into(),
                    x.drop_percent <= g.drop_percent,
                );
            }
        }
        properties.insert("smoothness_ge_95".into(), smoothness >= 0.95);
        properties.insert("embedder_acc_gt_90".into(), embedder_acc > 0.9);
        properties.insert("sid_acc_gt_80".into(), sid_acc > 0.8);

        let summary = ReproSummary {
            config_hash: self.hash.clone(),
            seed: self.cfg.seed,
            embedder_holdout_accuracy: embedder_acc,
            sid_test_accuracy: sid_acc,
            seen_cc,
            unseen_cc,
            relative_drop: drops,
            smoothness_min_fraction_below_25hz: smoothness,
            properties,
        };
        let json = serde_json::to_string_pretty(&summary)
            .map_err(|e| Error::Config(format!("serializing summary: {e}")))?
            + "\n";
        io::write_atomic(&self.reports_dir().join("summary.json"), json.as_bytes())?;
        Ok(summary)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropEntry {
    pub unseen_cc: f64,
    pub seen_reference_cc: f64,
    pub drop_percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativeDropReport {
    pub reference: String,
    pub drops: BTreeMap<String, DropEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReproSummary {
    pub config_hash: String,
    pub seed: u64,
    pub embedder_holdout_accuracy: f64,
    pub sid_test_accuracy: f64,
    pub seen_cc: BTreeMap<String, f64>,
    pub unseen_cc: BTreeMap<String, f64>,
    pub relative_drop: Option<RelativeDropReport>,
    pub smoothness_min_fraction_below_25hz: f64,
    pub properties: BTreeMap<String, bool>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_hash_is_stable_and_sensitive() {
        let a = ExperimentConfig::desk(7);
        let b = ExperimentConfig::desk(7);
        assert_eq!(a.hash(), b.hash());
        let c = ExperimentConfig::desk(8);
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let mut doc = serde_json::to_value(ExperimentConfig::desk(1)).unwrap();
        doc["corpus"]["bogus_key"] = serde_json::json!(1);
        let bytes = serde_json::to_vec(&doc).unwrap();
        let err = parse_config(&bytes).unwrap_err();
        assert!(err.contains("bogus_key"), "{err}");
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = ExperimentConfig::desk(3);
        let bytes = serde_json::to_vec(&cfg).unwrap();
        let back = parse_config(&bytes).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn with_seed_reseeds_all_stages() {
        let cfg = ExperimentConfig::desk(1).with_seed(42);
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.train.aai.seed, 42);
        assert_eq!(cfg.train.embedder.seed, 42);
        assert_eq!(cfg.train.sid.seed, 42);
    }

    #[test]
    fn mixing_configs_in_one_out_dir_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let _p1 = Pipeline::new(ExperimentConfig::mini(1), dir.path()).unwrap();
        let err = Pipeline::new(ExperimentConfig::mini(2), dir.path()).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn missing_artifacts_name_the_producing_command() {
        let dir = tempfile::tempdir().unwrap();
        let p = Pipeline::new(ExperimentConfig::mini(1), dir.path()).unwrap();
        match p.preprocess() {
            Err(Error::MissingArtifact { produced_by, .. }) => {
                assert_eq!(produced_by, "synth");
            }
            other => panic!("expected missing artifact, got {other:?}"),
        }
        match p.train_aai(Scheme::Xsc, None) {
            Err(Error::MissingArtifact { produced_by, .. }) => {
                assert!(produced_by.contains("synth") || produced_by.contains("train-embedder"));
            }
            other => panic!("expected missing artifact, got {other:?}"),
        }
    }
}
