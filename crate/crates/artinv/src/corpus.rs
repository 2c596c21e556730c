//! Deterministic synthetic multi-speaker acoustic-articulatory corpus.
//!
//! Each sentence pairs a 12-channel articulatory trajectory (sums of
//! random-phase sinusoids below 25 Hz, sampled at 250 Hz) with a waveform
//! rendered by a speaker-specific harmonic source: per-harmonic amplitudes are
//! an affine+tanh function of the instantaneous articulatory state, so the
//! acoustic-to-articulatory map is nonlinear and differs across speakers.
//! Speaker maps vary smoothly with a low-dimensional latent so that
//! conditioning on speaker identity is both useful and generalizable.
//!
//! Everything derives from (seed, speaker index, sentence id); parallel and
//! serial generation produce bit-identical corpora.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;

pub const N_ART_CHANNELS: usize = 12;
pub const CHANNEL_NAMES: [&str; 12] = [
    "ULx", "ULy", "LLx", "LLy", "Jawx", "Jawy", "TTx", "TTy", "TBx", "TBy", "TDx", "TDy",
];
/// Sinusoids per articulatory channel.
pub const K_SINUSOIDS: usize = 8;
/// Trajectory frequency band.
pub const FREQ_RANGE_HZ: (f64, f64) = (0.2, 20.0);
/// Additive waveform noise relative to signal RMS.
pub const NOISE_DB: f64 = -30.0;
/// Speaker latent dimensionality.
pub const LATENT_DIM: usize = 2;
const MAX_HARMONICS: usize = 40;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SpeakerId {
    pub index: u32,
    pub label: String,
}

impl SpeakerId {
    pub fn from_index(index: u32) -> Self {
        let label = if index >= 1000 {
            format!("B{:03}", index - 1000)
        } else if index % 2 == 0 {
            format!("M{:02}", index / 2 + 1)
        } else {
            format!("F{:02}", index / 2 + 1)
        };
        SpeakerId { index, label }
    }
}

/// T x 12 articulatory sample matrix with its sampling rate.
#[derive(Debug, Clone, PartialEq)]
pub struct ArticulatoryTrajectory {
    pub samples: Array2<f64>,
    pub rate: f64,
}

impl ArticulatoryTrajectory {
    pub fn new(samples: Array2<f64>, rate: f64) -> Result<Self> {
        if samples.nrows() == 0 {
            return Err(Error::Shape("trajectory must have T >= 1".into()));
        }
        if samples.ncols() != N_ART_CHANNELS {
            return Err(Error::Shape(format!(
                "trajectory must have exactly {N_ART_CHANNELS} channels, got {}",
                samples.ncols()
            )));
        }
        if rate <= 0.0 {
            return Err(Error::Parameter("trajectory rate must be positive".into()));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("trajectory contains NaN/Inf".into()));
        }
        Ok(ArticulatoryTrajectory { samples, rate })
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.nrows() as f64 / self.rate
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub speaker: SpeakerId,
    pub sentence_id: u32,
    pub sample_rate: f64,
    pub waveform: Vec<f64>,
    pub articulatory: ArticulatoryTrajectory,
}

impl Utterance {
    fn validate(&self) -> Result<()> {
        let wave_dur = self.waveform.len() as f64 / self.sample_rate;
        let art_dur = self.articulatory.duration_s();
        if (wave_dur - art_dur).abs() > 1.0 / self.articulatory.rate {
            return Err(Error::Shape(format!(
                "waveform ({wave_dur:.4} s) and trajectory ({art_dur:.4} s) disagree by more \
                 than one articulatory sample period"
            )));
        }
        Ok(())
    }
}

/// Per-speaker generation parameters, all derived from (seed, speaker index).
#[derive(Debug, Clone)]
pub struct SpeakerGenParams {
    pub latent: [f64; LATENT_DIM],
    pub base_pitch_hz: f64,
    /// Per-harmonic gains (spectral tilt plus idiosyncratic jitter).
    pub timbre_gains: Vec<f64>,
    /// 12 x H articulatory-to-harmonic mixing matrix.
    pub mixing: Array2<f64>,
    /// Per-harmonic affine bias before the tanh.
    pub bias: Vec<f64>,
    /// Fixed per-harmonic source phases.
    pub phases: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CorpusMeta {
    pub seed: u64,
    pub wave_rate: f64,
    pub ema_rate: f64,
    pub duration_s: f64,
    pub n_sentences: u32,
    /// When nonzero, this corpus' speakers draw their voice latents near a
    /// uniformly chosen anchor among speaker indices 0..n (the seen set).
    pub latent_anchor_count: u32,
    pub speakers: Vec<SpeakerId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub meta: CorpusMeta,
    /// Sorted by (speaker index, sentence id).
    pub utterances: Vec<Utterance>,
}

impl Corpus {
    pub fn get(&self, speaker_index: u32, sentence_id: u32) -> Option<&Utterance> {
        self.utterances
            .binary_search_by_key(&(speaker_index, sentence_id), |u| {
                (u.speaker.index, u.sentence_id)
            })
            .ok()
            .map(|i| &self.utterances[i])
    }

    pub fn sentence_ids(&self) -> Vec<u32> {
        let set: BTreeSet<u32> = self.utterances.iter().map(|u| u.sentence_id).collect();
        set.into_iter().collect()
    }

    pub fn speaker_indices(&self) -> Vec<u32> {
        self.meta.speakers.iter().map(|s| s.index).collect()
    }
}

/// Full generator configuration. [`synth_corpus`] is the common entry point;
/// the pipeline uses this directly to offset speaker indices for the
/// background set and to shrink unseen-speaker latents toward the interior of
/// the training range.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_speakers: u32,
    pub n_sentences: u32,
    pub duration_s: f64,
    pub seed: u64,
    pub start_index: u32,
    pub wave_rate: f64,
    pub ema_rate: f64,
    /// 0 draws speaker latents freely in the unit range; a nonzero count k
    /// anchors each latent near a uniformly chosen speaker among indices
    /// 0..k, keeping these speakers inside the population that the anchored
    /// set covers.
    pub latent_anchor_count: u32,
}

impl SynthSpec {
    pub fn new(n_speakers: u32, n_sentences: u32, duration_s: f64, seed: u64) -> Self {
        SynthSpec {
            n_speakers,
            n_sentences,
            duration_s,
            seed,
            start_index: 0,
            wave_rate: 16_000.0,
            ema_rate: 250.0,
            latent_anchor_count: 0,
        }
    }

    pub fn with_start_index(mut self, start: u32) -> Self {
        self.start_index = start;
        self
    }

    pub fn with_latent_anchors(mut self, count: u32) -> Self {
        self.latent_anchor_count = count;
        self
    }
}

// Stream tags keep per-purpose RNGs independent.
const TAG_SPEAKER: u64 = 0x5350_4541_4b45_5201;
const TAG_FAMILY: u64 = 0x4641_4d49_4c59_0002;
const TAG_TRAJ: u64 = 0x5452_414a_0000_0003;
const TAG_NOISE: u64 = 0x4e4f_4953_4500_0004;
const TAG_SPLIT: u64 = 0x5350_4c49_5400_0005;
const TAG_SESSION: u64 = 0x5345_5353_494f_4e06;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn rng_for(parts: &[u64]) -> ChaCha8Rng {
    let mut h = 0x243F_6A88_85A3_08D3u64;
    for &p in parts {
        h = splitmix64(h ^ splitmix64(p));
    }
    ChaCha8Rng::seed_from_u64(h)
}

/// Articulatory-to-acoustic observation rank: each frame's acoustics expose
/// only this many linear combinations of the 12 articulatory channels, so
/// frame-wise inversion is underdetermined and models must integrate over
/// time through the trajectory prior.
pub const MAP_RANK: usize = 8;

/// The shared map family: a rank-limited base encoder plus one delta per
/// latent dimension, all projected through a common harmonic dictionary.
/// Derived from the global seed only.
struct MapFamily {
    encoder_base: Array2<f64>,
    encoder_deltas: Vec<Array2<f64>>,
    projection: Array2<f64>,
}

fn map_family(seed: u64) -> MapFamily {
    let mut rng = rng_for(&[seed, TAG_FAMILY]);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut draw = |rows: usize, cols: usize, scale: f64| {
        Array2::from_shape_fn((rows, cols), |_| normal.sample(&mut rng) * scale)
    };
    let encoder_base = draw(N_ART_CHANNELS, MAP_RANK, 0.42);
    let encoder_deltas = (0..LATENT_DIM)
        .map(|_| draw(N_ART_CHANNELS, MAP_RANK, 0.20))
        .collect();
    let projection = draw(MAP_RANK, MAX_HARMONICS, 0.43);
    MapFamily {
        encoder_base,
        encoder_deltas,
        projection,
    }
}

/// How far an anchored speaker's latent may wander from its anchor.
const ANCHOR_SPREAD: f64 = 0.15;

fn speaker_latent(seed: u64, speaker_index: u32, anchor_count: u32) -> [f64; LATENT_DIM] {
    let mut rng = rng_for(&[seed, TAG_SPEAKER, u64::from(speaker_index)]);
    let mut latent = [0.0; LATENT_DIM];
    for u in latent.iter_mut() {
        *u = rng.random_range(-1.0..1.0);
    }
    if anchor_count > 0 {
        let anchor_index = rng.random_range(0..anchor_count);
        let anchor = speaker_latent(seed, anchor_index, 0);
        for (l, u) in latent.iter_mut().enumerate() {
            *u = anchor[l] + ANCHOR_SPREAD * rng.random_range(-1.0..1.0);
        }
    }
    latent
}

/// Deterministic per-speaker generation parameters.
pub fn speaker_params(seed: u64, speaker_index: u32, anchor_count: u32) -> SpeakerGenParams {
    let family = map_family(seed);
    let mut rng = rng_for(&[seed, TAG_SPEAKER, u64::from(speaker_index)]);
    let _ = rng.random_range(-1.0..1.0); // keep stream layout stable
    let latent = speaker_latent(seed, speaker_index, anchor_count);
    let base_pitch_hz = 150.0 + 45.0 * latent[0] + 22.0 * latent[1];
    let n_harm = MAX_HARMONICS.min((6500.0 / base_pitch_hz) as usize);
    // Timbre varies smoothly with the latent: spectral tilt plus a
    // formant-like bump whose center harmonic tracks the second latent.
    let tilt = 0.92 + 0.05 * latent[0] - 0.03 * latent[1];
    let bump_center = 7.0 + 9.0 * (latent[1] + 1.0);

    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut encoder = family.encoder_base.clone();
    for (l, delta) in family.encoder_deltas.iter().enumerate() {
        encoder = encoder + &(delta * latent[l]);
    }
    let mixing = encoder
        .dot(&family.projection)
        .slice(ndarray::s![.., ..n_harm])
        .to_owned();
    let bias: Vec<f64> = (0..n_harm).map(|_| normal.sample(&mut rng) * 0.3).collect();
    let timbre_gains: Vec<f64> = (0..n_harm)
        .map(|h| {
            let bump = 1.0 + 1.5 * (-((h as f64 + 1.0 - bump_center) / 3.0).powi(2)).exp();
            tilt.powi(h as i32) * bump * (1.0 + 0.1 * normal.sample(&mut rng)).max(0.2)
        })
        .collect();
    let phases: Vec<f64> = (0..n_harm)
        .map(|_| rng.random_range(0.0..2.0 * std::f64::consts::PI))
        .collect();

    SpeakerGenParams {
        latent,
        base_pitch_hz,
        timbre_gains,
        mixing,
        bias,
        phases,
    }
}

/// One channel's band-limited trajectory: K random-phase sinusoids.
fn synth_channel(rng: &mut ChaCha8Rng, t_samples: usize, rate: f64) -> Vec<f64> {
    let mut freqs = [0.0; K_SINUSOIDS];
    let mut phases = [0.0; K_SINUSOIDS];
    let mut weights = [0.0; K_SINUSOIDS];
    for k in 0..K_SINUSOIDS {
        freqs[k] = rng.random_range(FREQ_RANGE_HZ.0..FREQ_RANGE_HZ.1);
        phases[k] = rng.random_range(0.0..2.0 * std::f64::consts::PI);
        weights[k] = rng.random_range(0.3..1.0);
    }
    let norm: f64 = weights.iter().map(|w| w * w).sum::<f64>().sqrt();
    // Channel RMS approximately 0.7.
    for w in weights.iter_mut() {
        *w *= 1.0 / norm;
    }
    (0..t_samples)
        .map(|i| {
            let t = i as f64 / rate;
            (0..K_SINUSOIDS)
                .map(|k| weights[k] * (2.0 * std::f64::consts::PI * freqs[k] * t + phases[k]).sin())
                .sum()
        })
        .collect()
}

pub fn synth_trajectory(
    seed: u64,
    speaker_index: u32,
    sentence_id: u32,
    t_samples: usize,
    rate: f64,
) -> ArticulatoryTrajectory {
    let mut rng = rng_for(&[
        seed,
        TAG_TRAJ,
        u64::from(speaker_index),
        u64::from(sentence_id),
    ]);
    let mut samples = Array2::zeros((t_samples, N_ART_CHANNELS));
    for c in 0..N_ART_CHANNELS {
        let ch = synth_channel(&mut rng, t_samples, rate);
        for (i, v) in ch.into_iter().enumerate() {
            samples[[i, c]] = io::quantize(v);
        }
    }
    ArticulatoryTrajectory::new(samples, rate).expect("generated trajectory is valid")
}

/// Per-utterance session variability: small pitch, spectral-tilt, and level
/// wobbles around the speaker's nominal voice, as a recording session would
/// show. The wobble also spreads each speaker's embeddings into a local
/// neighborhood instead of a single point.
#[derive(Debug, Clone, Copy)]
pub struct SessionJitter {
    pub pitch_scale: f64,
    /// Per-harmonic multiplicative tilt adjustment, applied as scale^(h+1).
    pub tilt_scale: f64,
    pub gain: f64,
}

impl SessionJitter {
    pub fn none() -> Self {
        SessionJitter {
            pitch_scale: 1.0,
            tilt_scale: 1.0,
            gain: 1.0,
        }
    }

    pub fn derive(seed: u64, speaker_index: u32, sentence_id: u32) -> Self {
        let mut rng = rng_for(&[
            seed,
            TAG_SESSION,
            u64::from(speaker_index),
            u64::from(sentence_id),
        ]);
        SessionJitter {
            pitch_scale: 1.0 + rng.random_range(-0.025..0.025),
            tilt_scale: 1.0 + rng.random_range(-0.008..0.008),
            gain: 10f64.powf(rng.random_range(-1.5..1.5) / 20.0),
        }
    }
}

/// Render a waveform from a trajectory under a speaker's harmonic source
/// model. Per-harmonic amplitudes follow an affine+tanh function of the
/// articulatory state, evaluated at the articulatory rate and linearly
/// interpolated to the audio rate.
pub fn render_waveform(
    traj: &ArticulatoryTrajectory,
    params: &SpeakerGenParams,
    jitter: SessionJitter,
    wave_rate: f64,
    noise_rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let n_harm = params.timbre_gains.len();
    let t_art = traj.samples.nrows();
    let t_wave = (traj.duration_s() * wave_rate).round() as usize;
    let pitch = params.base_pitch_hz * jitter.pitch_scale;

    // Amplitude control signals at the articulatory rate.
    let mut amps = Array2::zeros((t_art, n_harm));
    for t in 0..t_art {
        for h in 0..n_harm {
            let mut pre = params.bias[h];
            for c in 0..N_ART_CHANNELS {
                pre += params.mixing[[c, h]] * traj.samples[[t, c]];
            }
            let gain = params.timbre_gains[h] * jitter.tilt_scale.powi(h as i32 + 1);
            amps[[t, h]] = gain * (0.55 + 0.45 * pre.tanh());
        }
    }

    let step = traj.rate / wave_rate;
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut wave = Vec::with_capacity(t_wave);
    for i in 0..t_wave {
        let pos = i as f64 * step;
        let i0 = (pos as usize).min(t_art - 1);
        let i1 = (i0 + 1).min(t_art - 1);
        let frac = pos - i0 as f64;
        let t = i as f64 / wave_rate;
        let mut s = 0.0;
        for h in 0..n_harm {
            let a = amps[[i0, h]] * (1.0 - frac) + amps[[i1, h]] * frac;
            s += a * (two_pi * (h + 1) as f64 * pitch * t + params.phases[h]).sin();
        }
        wave.push(s);
    }

    let rms = (wave.iter().map(|v| v * v).sum::<f64>() / t_wave as f64).sqrt();
    let target_rms = 0.25 * jitter.gain;
    let scale = if rms > 0.0 { target_rms / rms } else { 1.0 };
    let noise_sigma = target_rms * 10f64.powf(NOISE_DB / 20.0);
    let normal = Normal::new(0.0, noise_sigma).expect("noise sigma");
    wave.into_iter()
        .map(|v| io::quantize(v * scale + normal.sample(noise_rng)))
        .collect()
}

fn synth_utterance(spec: &SynthSpec, params: &SpeakerGenParams, index: u32, sent: u32) -> Utterance {
    let t_art = (spec.duration_s * spec.ema_rate).round() as usize;
    let traj = synth_trajectory(spec.seed, index, sent, t_art, spec.ema_rate);
    let jitter = SessionJitter::derive(spec.seed, index, sent);
    let mut noise_rng = rng_for(&[spec.seed, TAG_NOISE, u64::from(index), u64::from(sent)]);
    let waveform = render_waveform(&traj, params, jitter, spec.wave_rate, &mut noise_rng);
    Utterance {
        speaker: SpeakerId::from_index(index),
        sentence_id: sent,
        sample_rate: spec.wave_rate,
        waveform,
        articulatory: traj,
    }
}

/// Generate a corpus from the full spec. Utterances are generated in parallel;
/// per-utterance RNG streams make the result identical to serial generation.
pub fn synth_corpus_with(spec: &SynthSpec) -> Result<Corpus> {
    if spec.n_speakers < 2 {
        return Err(Error::Parameter(format!(
            "need at least 2 speakers, got {}",
            spec.n_speakers
        )));
    }
    if spec.n_sentences < 10 {
        return Err(Error::Parameter(format!(
            "need at least 10 sentences, got {}",
            spec.n_sentences
        )));
    }
    if !(1.0..=10.0).contains(&spec.duration_s) {
        return Err(Error::Parameter(format!(
            "duration {} s outside [1, 10]",
            spec.duration_s
        )));
    }

    let indices: Vec<u32> = (spec.start_index..spec.start_index + spec.n_speakers).collect();
    let speakers: Vec<SpeakerId> = indices.iter().map(|&i| SpeakerId::from_index(i)).collect();
    let all_params: Vec<SpeakerGenParams> = indices
        .iter()
        .map(|&i| speaker_params(spec.seed, i, spec.latent_anchor_count))
        .collect();

    let jobs: Vec<(usize, u32)> = indices
        .iter()
        .enumerate()
        .flat_map(|(si, _)| (0..spec.n_sentences).map(move |s| (si, s)))
        .collect();
    let utterances: Vec<Utterance> = jobs
        .par_iter()
        .map(|&(si, sent)| synth_utterance(spec, &all_params[si], indices[si], sent))
        .collect();

    for u in &utterances {
        u.validate()?;
    }

    Ok(Corpus {
        meta: CorpusMeta {
            seed: spec.seed,
            wave_rate: spec.wave_rate,
            ema_rate: spec.ema_rate,
            duration_s: spec.duration_s,
            n_sentences: spec.n_sentences,
            latent_anchor_count: spec.latent_anchor_count,
            speakers,
        },
        utterances,
    })
}

/// Convenience entry point with default rates and speaker indices from 0.
pub fn synth_corpus(
    n_speakers: u32,
    n_sentences: u32,
    duration_s: f64,
    seed: u64,
) -> Result<Corpus> {
    synth_corpus_with(&SynthSpec::new(n_speakers, n_sentences, duration_s, seed))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subset {
    Train,
    Validation,
    Test,
}

/// Disjoint per-subset lists of (speaker index, sentence id). The same
/// sentence partition applies to every speaker, mirroring parallel stimuli.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSplit {
    pub train: Vec<(u32, u32)>,
    pub validation: Vec<(u32, u32)>,
    pub test: Vec<(u32, u32)>,
}

impl CorpusSplit {
    pub fn subset(&self, subset: Subset) -> &[(u32, u32)] {
        match subset {
            Subset::Train => &self.train,
            Subset::Validation => &self.validation,
            Subset::Test => &self.test,
        }
    }

    /// Sentences of one subset restricted to one speaker.
    pub fn sentences_for(&self, subset: Subset, speaker_index: u32) -> Vec<u32> {
        self.subset(subset)
            .iter()
            .filter(|(s, _)| *s == speaker_index)
            .map(|(_, sent)| *sent)
            .collect()
    }
}

fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

/// Per-speaker sentence counts for an (train, val, test) ratio split:
/// validation and test get round-half-up(N * ratio), the remainder goes to
/// train, so the three subsets always cover all N sentences.
pub fn split_counts(n: usize, ratios: (f64, f64, f64)) -> Result<(usize, usize, usize)> {
    let sum = ratios.0 + ratios.1 + ratios.2;
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Parameter(format!("ratios sum to {sum}, not 1")));
    }
    if ratios.0 <= 0.0 || ratios.1 < 0.0 || ratios.2 < 0.0 {
        return Err(Error::Parameter("ratios must be non-negative".into()));
    }
    let n_val = round_half_up(n as f64 * ratios.1);
    let n_test = round_half_up(n as f64 * ratios.2);
    if n_val + n_test >= n {
        return Err(Error::Parameter(format!(
            "split of {n} sentences leaves no training data"
        )));
    }
    Ok((n - n_val - n_test, n_val, n_test))
}

/// Split the corpus 80/10/10 (or any ratio summing to 1) by sentence id, the
/// same partition for every speaker.
pub fn split_corpus(corpus: &Corpus, ratios: (f64, f64, f64), seed: u64) -> Result<CorpusSplit> {
    if corpus.utterances.is_empty() {
        return Err(Error::Parameter("cannot split an empty corpus".into()));
    }
    let sentences = corpus.sentence_ids();
    let (_, n_val, n_test) = split_counts(sentences.len(), ratios)?;

    let mut shuffled = sentences;
    let mut rng = rng_for(&[seed, TAG_SPLIT]);
    // Fisher-Yates; rand's shuffle is equivalent but this keeps the stream
    // layout explicit and stable.
    for i in (1..shuffled.len()).rev() {
        let j = rng.random_range(0..=i);
        shuffled.swap(i, j);
    }

    let val_ids: BTreeSet<u32> = shuffled[..n_val].iter().copied().collect();
    let test_ids: BTreeSet<u32> = shuffled[n_val..n_val + n_test].iter().copied().collect();

    let mut split = CorpusSplit {
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
    };
    for spk in corpus.speaker_indices() {
        for &sent in corpus.sentence_ids().iter() {
            let entry = (spk, sent);
            if val_ids.contains(&sent) {
                split.validation.push(entry);
            } else if test_ids.contains(&sent) {
                split.test.push(entry);
            } else {
                split.train.push(entry);
            }
        }
    }
    Ok(split)
}

fn wav_path(dir: &Path, speaker: &SpeakerId, sentence: u32) -> std::path::PathBuf {
    dir.join(&speaker.label).join(format!("{sentence:04}.wav.f32"))
}

fn ema_path(dir: &Path, speaker: &SpeakerId, sentence: u32) -> std::path::PathBuf {
    dir.join(&speaker.label).join(format!("{sentence:04}.ema.f32"))
}

/// Write `corpus.json` plus one wave and one trajectory file per utterance.
pub fn save_corpus(corpus: &Corpus, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let meta_path = dir.join("corpus.json");
    let json = serde_json::to_vec_pretty(&corpus.meta)
        .map_err(|e| Error::Config(format!("serializing corpus meta: {e}")))?;
    io::write_atomic(&meta_path, &json)?;
    for utt in &corpus.utterances {
        let samples: Vec<f32> = utt.waveform.iter().map(|&v| v as f32).collect();
        io::write_wave(
            &wav_path(dir, &utt.speaker, utt.sentence_id),
            utt.sample_rate as u32,
            &samples,
        )?;
        io::write_matrix(
            &ema_path(dir, &utt.speaker, utt.sentence_id),
            utt.articulatory.rate as u32,
            &utt.articulatory.samples,
        )?;
    }
    Ok(())
}

/// Load a corpus directory. Files not named by the metadata are ignored.
pub fn load_corpus(dir: &Path) -> Result<Corpus> {
    let meta_path = dir.join("corpus.json");
    let bytes = fs::read(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta = parse_corpus_meta(&bytes)
        .map_err(|detail| Error::format(meta_path.display().to_string(), detail))?;

    let mut utterances = Vec::new();
    for speaker in &meta.speakers {
        for sentence in 0..meta.n_sentences {
            let wpath = wav_path(dir, speaker, sentence);
            let wave = io::read_wave(&wpath)?;
            if f64::from(wave.sample_rate) != meta.wave_rate {
                return Err(Error::format(
                    wpath.display().to_string(),
                    format!(
                        "sample_rate {} does not match corpus rate {}",
                        wave.sample_rate, meta.wave_rate
                    ),
                ));
            }
            let epath = ema_path(dir, speaker, sentence);
            let ema = io::read_matrix(&epath)?;
            if ema.dims != N_ART_CHANNELS {
                return Err(Error::format(
                    epath.display().to_string(),
                    format!("dims {} != {N_ART_CHANNELS}", ema.dims),
                ));
            }
            if f64::from(ema.rate) != meta.ema_rate {
                return Err(Error::format(
                    epath.display().to_string(),
                    format!("rate {} does not match corpus rate {}", ema.rate, meta.ema_rate),
                ));
            }
            let traj = ArticulatoryTrajectory::new(ema.to_array(), meta.ema_rate)?;
            let utt = Utterance {
                speaker: speaker.clone(),
                sentence_id: sentence,
                sample_rate: meta.wave_rate,
                waveform: wave.samples.iter().map(|&v| f64::from(v)).collect(),
                articulatory: traj,
            };
            utt.validate()?;
            utterances.push(utt);
        }
    }
    utterances.sort_by_key(|u| (u.speaker.index, u.sentence_id));
    Ok(Corpus { meta, utterances })
}

/// Parse and validate corpus metadata. Fuzz entry point.
pub fn parse_corpus_meta(bytes: &[u8]) -> std::result::Result<CorpusMeta, String> {
    let meta: CorpusMeta = serde_json::from_slice(bytes).map_err(|e| e.to_string())?;
    if meta.wave_rate <= 0.0 || !meta.wave_rate.is_finite() {
        return Err(format!("wave_rate {} must be positive", meta.wave_rate));
    }
    if meta.ema_rate <= 0.0 || !meta.ema_rate.is_finite() {
        return Err(format!("ema_rate {} must be positive", meta.ema_rate));
    }
    if !(meta.duration_s.is_finite() && meta.duration_s > 0.0) {
        return Err(format!("duration_s {} must be positive", meta.duration_s));
    }
    let mut indices = BTreeSet::new();
    let mut labels = BTreeSet::new();
    for s in &meta.speakers {
        if !indices.insert(s.index) {
            return Err(format!("duplicate speaker index {}", s.index));
        }
        if !labels.insert(s.label.clone()) {
            return Err(format!("duplicate speaker label {}", s.label));
        }
    }
    Ok(meta)
}

/// Parse and validate a split file. Fuzz entry point.
pub fn parse_split(bytes: &[u8]) -> std::result::Result<CorpusSplit, String> {
    #[derive(Deserialize)]
    struct Row {
        speaker: u32,
        sentence: u32,
        subset: Subset,
    }
    let rows: Vec<Row> = serde_json::from_slice(bytes).map_err(|e| e.to_string())?;
    let mut split = CorpusSplit {
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
    };
    let mut seen = BTreeSet::new();
    for row in rows {
        if !seen.insert((row.speaker, row.sentence)) {
            return Err(format!(
                "duplicate split entry for speaker {} sentence {}",
                row.speaker, row.sentence
            ));
        }
        let list = match row.subset {
            Subset::Train => &mut split.train,
            Subset::Validation => &mut split.validation,
            Subset::Test => &mut split.test,
        };
        list.push((row.speaker, row.sentence));
    }
    Ok(split)
}

pub fn save_split(split: &CorpusSplit, path: &Path) -> Result<()> {
    #[derive(Serialize)]
    struct Row {
        speaker: u32,
        sentence: u32,
        subset: Subset,
    }
    let mut rows = Vec::new();
    for (subset, list) in [
        (Subset::Train, &split.train),
        (Subset::Validation, &split.validation),
        (Subset::Test, &split.test),
    ] {
        for &(speaker, sentence) in list {
            rows.push(Row {
                speaker,
                sentence,
                subset,
            });
        }
    }
    rows.sort_by_key(|r| (r.speaker, r.sentence));
    let json = serde_json::to_vec_pretty(&rows)
        .map_err(|e| Error::Config(format!("serializing split: {e}")))?;
    io::write_atomic(path, &json)
}

pub fn load_split(path: &Path) -> Result<CorpusSplit> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_split(&bytes).map_err(|detail| Error::format(path.display().to_string(), detail))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp;

    #[test]
    fn identical_seeds_give_identical_corpora() {
        let a = synth_corpus(2, 10, 1.0, 7).unwrap();
        let b = synth_corpus(2, 10, 1.0, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn different_seeds_differ() {
        let a = synth_corpus(2, 10, 1.0, 7).unwrap();
        let b = synth_corpus(2, 10, 1.0, 8).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn trajectories_are_band_limited() {
        let corpus = synth_corpus(2, 10, 1.2, 11).unwrap();
        for utt in corpus.utterances.iter().take(4) {
            for c in 0..N_ART_CHANNELS {
                let ch: Vec<f64> = utt.articulatory.samples.column(c).to_vec();
                let frac = dsp::band_energy_fraction(&ch, utt.articulatory.rate, 25.0);
                assert!(frac > 0.99, "channel {c} only {frac:.4} below 25 Hz");
            }
        }
    }

    #[test]
    fn same_trajectory_different_speakers_differ() {
        let seed = 3;
        let traj = synth_trajectory(seed, 0, 0, 300, 250.0);
        let pa = speaker_params(seed, 0, 0);
        let pb = speaker_params(seed, 1, 0);
        let mut rng_a = rng_for(&[seed, TAG_NOISE, 0, 0]);
        let mut rng_b = rng_for(&[seed, TAG_NOISE, 0, 0]);
        let wa = render_waveform(&traj, &pa, SessionJitter::none(), 16_000.0, &mut rng_a);
        let wb = render_waveform(&traj, &pb, SessionJitter::none(), 16_000.0, &mut rng_b);
        let dist: f64 = wa
            .iter()
            .zip(&wb)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!(dist > 0.0);
    }

    #[test]
    fn invalid_sizes_rejected() {
        assert!(synth_corpus(1, 10, 1.0, 0).is_err());
        assert!(synth_corpus(2, 5, 1.0, 0).is_err());
        assert!(synth_corpus(2, 10, 0.5, 0).is_err());
        assert!(synth_corpus(2, 10, 20.0, 0).is_err());
    }

    #[test]
    fn speaker_params_do_not_depend_on_corpus_shape() {
        let p1 = speaker_params(5, 3, 0);
        let p2 = speaker_params(5, 3, 0);
        assert_eq!(p1.base_pitch_hz, p2.base_pitch_hz);
        assert_eq!(p1.mixing, p2.mixing);
    }

    #[test]
    fn split_counts_follow_round_half_up() {
        assert_eq!(split_counts(460, (0.8, 0.1, 0.1)).unwrap(), (368, 46, 46));
        assert_eq!(split_counts(10, (0.8, 0.1, 0.1)).unwrap(), (8, 1, 1));
        assert_eq!(split_counts(13, (0.8, 0.1, 0.1)).unwrap(), (11, 1, 1));
        assert_eq!(split_counts(15, (0.8, 0.1, 0.1)).unwrap(), (11, 2, 2));
        assert!(split_counts(10, (0.5, 0.2, 0.2)).is_err());
    }

    #[test]
    fn split_is_parallel_and_covering() {
        let corpus = synth_corpus(3, 20, 1.0, 9).unwrap();
        let split = split_corpus(&corpus, (0.8, 0.1, 0.1), 1).unwrap();
        assert_eq!(split.train.len(), 3 * 16);
        assert_eq!(split.validation.len(), 3 * 2);
        assert_eq!(split.test.len(), 3 * 2);
        // Parallel partition: every speaker gets the same sentence sets.
        let s0 = split.sentences_for(Subset::Test, 0);
        let s1 = split.sentences_for(Subset::Test, 1);
        assert_eq!(s0, s1);
        // Disjoint and covering.
        let mut all: Vec<(u32, u32)> = split
            .train
            .iter()
            .chain(&split.validation)
            .chain(&split.test)
            .copied()
            .collect();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), 60);
    }

    #[test]
    fn split_seed_changes_membership_not_counts() {
        let corpus = synth_corpus(2, 20, 1.0, 9).unwrap();
        let a = split_corpus(&corpus, (0.8, 0.1, 0.1), 1).unwrap();
        let b = split_corpus(&corpus, (0.8, 0.1, 0.1), 2).unwrap();
        assert_eq!(a.test.len(), b.test.len());
        assert_ne!(a.test, b.test);
    }

    #[test]
    fn empty_corpus_split_rejected() {
        let corpus = Corpus {
            meta: CorpusMeta {
                seed: 0,
                wave_rate: 16_000.0,
                ema_rate: 250.0,
                duration_s: 1.0,
                n_sentences: 0,
                latent_anchor_count: 0,
                speakers: vec![],
            },
            utterances: vec![],
        };
        assert!(split_corpus(&corpus, (0.8, 0.1, 0.1), 0).is_err());
    }

    #[test]
    fn save_load_round_trip_is_exact() {
        let corpus = synth_corpus(2, 10, 1.0, 21).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_corpus(&corpus, dir.path()).unwrap();
        // Unknown extra files are ignored.
        std::fs::write(dir.path().join("README.txt"), b"notes").unwrap();
        std::fs::write(dir.path().join("M01").join("stray.dat"), b"junk").unwrap();
        let loaded = load_corpus(dir.path()).unwrap();
        assert_eq!(corpus, loaded);
    }

    #[test]
    fn truncated_trajectory_file_is_format_error() {
        let corpus = synth_corpus(2, 10, 1.0, 22).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_corpus(&corpus, dir.path()).unwrap();
        let victim = dir.path().join("M01").join("0003.ema.f32");
        let bytes = std::fs::read(&victim).unwrap();
        std::fs::write(&victim, &bytes[..bytes.len() / 2]).unwrap();
        match load_corpus(dir.path()) {
            Err(Error::Format { file, .. }) => assert!(file.contains("0003.ema.f32")),
            other => panic!("expected format error, got {other:?}"),
        }
    }
}
