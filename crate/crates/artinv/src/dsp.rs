//! Signal post-processing and feature computation: zero-phase low-pass
//! filtering, rational resampling, MFCC extraction, per-utterance
//! mean-variance normalization, and frame-rate alignment.
//!
//! All operations are pure functions over `f64` data; the feature cache layer
//! in [`crate::pipeline`] quantizes to `f32` when writing to disk.

use ndarray::{Array1, Array2};

use crate::corpus::ArticulatoryTrajectory;
use crate::error::{Error, Result};

pub const N_MFCC: usize = 13;
pub const N_MEL_FILTERS: usize = 26;
pub const PRE_EMPHASIS: f64 = 0.97;
pub const LOG_FLOOR: f64 = 1e-10;
/// Windowed-sinc low-pass order at the 250 Hz articulatory rate.
pub const LOWPASS_TAPS: usize = 255;

/// What a feature matrix holds. Mostly documentation, but `align` refuses to
/// pair two sequences of the same kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum FeatureKind {
    Mfcc,
    Articulatory,
    EmbeddingBroadcast,
}

/// A frames x dims feature matrix with an explicit frame rate.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub frames: Array2<f64>,
    pub frame_rate: f64,
    pub kind: FeatureKind,
}

impl FeatureSequence {
    pub fn new(frames: Array2<f64>, frame_rate: f64, kind: FeatureKind) -> Result<Self> {
        if frames.nrows() == 0 {
            return Err(Error::Shape("feature sequence must have T >= 1".into()));
        }
        if frame_rate <= 0.0 {
            return Err(Error::Parameter(format!(
                "frame rate must be positive, got {frame_rate}"
            )));
        }
        if frames.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("feature sequence contains NaN/Inf".into()));
        }
        Ok(FeatureSequence {
            frames,
            frame_rate,
            kind,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.nrows() == 0
    }

    pub fn dims(&self) -> usize {
        self.frames.ncols()
    }
}

/// Windowed-sinc low-pass design, applied forward-backward for zero phase.
#[derive(Debug, Clone, Copy)]
pub struct FilterSpec {
    pub cutoff_hz: f64,
    pub taps: usize,
}

impl FilterSpec {
    pub fn new(cutoff_hz: f64) -> Self {
        FilterSpec {
            cutoff_hz,
            taps: LOWPASS_TAPS,
        }
    }
}

fn hamming(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

/// Hamming-windowed sinc low-pass taps, normalized to unit DC gain.
fn design_lowpass(cutoff_hz: f64, rate: f64, taps: usize) -> Vec<f64> {
    let fc = cutoff_hz / rate; // cycles per sample
    let alpha = (taps - 1) as f64 / 2.0;
    let win = hamming(taps);
    let mut h: Vec<f64> = (0..taps)
        .map(|n| {
            let x = n as f64 - alpha;
            let sinc = if x == 0.0 {
                2.0 * fc
            } else {
                (2.0 * std::f64::consts::PI * fc * x).sin() / (std::f64::consts::PI * x)
            };
            sinc * win[n]
        })
        .collect();
    let sum: f64 = h.iter().sum();
    for v in &mut h {
        *v /= sum;
    }
    h
}

/// Reflection padding: [x[p], .., x[1], x[0..T], x[T-2], .., x[T-1-p]].
fn reflect_pad(x: &[f64], pad: usize) -> Vec<f64> {
    let t = x.len();
    let mut out = Vec::with_capacity(t + 2 * pad);
    for i in (1..=pad).rev() {
        out.push(x[i.min(t - 1)]);
    }
    out.extend_from_slice(x);
    for i in 0..pad {
        let idx = t.saturating_sub(2 + i).min(t - 1);
        out.push(x[idx]);
    }
    out
}

fn convolve_full(x: &[f64], h: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.len() + h.len() - 1];
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        for (j, &hj) in h.iter().enumerate() {
            out[i + j] += xi * hj;
        }
    }
    out
}

/// Zero-phase filtering of one channel. Equivalent to forward-backward
/// application of `h`: a single pass with the autocorrelation kernel h*h,
/// which is exactly symmetric, so the peak of a symmetric pulse stays put.
fn zero_phase_channel(x: &[f64], h: &[f64]) -> Vec<f64> {
    let kernel = convolve_full(h, h);
    let delay = h.len() - 1; // kernel group delay in samples
    let padded = reflect_pad(x, delay);
    let full = convolve_full(&padded, &kernel);
    // padded starts at -delay; full conv adds another `delay` of lead-in.
    full[2 * delay..2 * delay + x.len()].to_vec()
}

/// Zero-phase FIR low-pass over every articulatory channel. Output length
/// equals input length; edges are reflection-padded.
pub fn lowpass(traj: &ArticulatoryTrajectory, spec: &FilterSpec) -> Result<ArticulatoryTrajectory> {
    let nyquist = traj.rate / 2.0;
    if spec.cutoff_hz <= 0.0 || spec.cutoff_hz >= nyquist {
        return Err(Error::Parameter(format!(
            "cutoff {} Hz outside (0, {nyquist}) at rate {}",
            spec.cutoff_hz, traj.rate
        )));
    }
    let h = design_lowpass(spec.cutoff_hz, traj.rate, spec.taps);
    let t = traj.samples.nrows();
    let mut out = Array2::zeros((t, traj.samples.ncols()));
    for (c, col) in traj.samples.columns().into_iter().enumerate() {
        let x: Vec<f64> = col.to_vec();
        let y = zero_phase_channel(&x, &h);
        for (i, v) in y.into_iter().enumerate() {
            out[[i, c]] = v;
        }
    }
    ArticulatoryTrajectory::new(out, traj.rate)
}

/// Best rational approximation p/q to `ratio` with q <= max_den.
fn rational_approx(ratio: f64, max_den: u64) -> Option<(u64, u64)> {
    let mut best = None;
    let mut x = ratio;
    let (mut h0, mut h1) = (0u64, 1u64);
    let (mut k0, mut k1) = (1u64, 0u64);
    for _ in 0..64 {
        let a = x.floor();
        if a < 0.0 || a > u64::MAX as f64 {
            break;
        }
        let a_u = a as u64;
        let h2 = a_u.checked_mul(h1)?.checked_add(h0)?;
        let k2 = a_u.checked_mul(k1)?.checked_add(k0)?;
        if k2 > max_den {
            break;
        }
        h0 = h1;
        h1 = h2;
        k0 = k1;
        k1 = k2;
        best = Some((h1, k1));
        let frac = x - a;
        if frac.abs() < 1e-12 {
            break;
        }
        x = 1.0 / frac;
    }
    best.filter(|&(p, q)| q > 0 && ((p as f64 / q as f64) - ratio).abs() < 1e-9 * ratio.max(1.0))
}

/// Rational resampling by p/q: zero-stuff by p, anti-alias FIR at the lower
/// Nyquist, decimate by q. Output length is floor(T*p/q).
pub fn resample(traj: &ArticulatoryTrajectory, target_rate: f64) -> Result<ArticulatoryTrajectory> {
    if target_rate <= 0.0 {
        return Err(Error::Parameter("target rate must be positive".into()));
    }
    if (target_rate - traj.rate).abs() < 1e-12 {
        return Ok(traj.clone());
    }
    let ratio = target_rate / traj.rate;
    let (p, q) = rational_approx(ratio, 1000).ok_or_else(|| {
        Error::Parameter(format!(
            "no rational p/q <= 1000 matches resample ratio {} / {}",
            target_rate, traj.rate
        ))
    })?;
    let (p, q) = (p as usize, q as usize);

    let t_in = traj.samples.nrows();
    let t_out = t_in * p / q;
    if t_out == 0 {
        return Err(Error::Parameter(format!(
            "input too short to resample: {t_in} samples by {p}/{q}"
        )));
    }
    let up_rate = traj.rate * p as f64;
    let cutoff = 0.5 * traj.rate.min(target_rate);
    let taps = LOWPASS_TAPS; // odd, so the group delay is an integer
    let mut h = design_lowpass(cutoff, up_rate, taps);
    // Normalize each polyphase branch to 1/p so a constant input resamples to
    // exactly the same constant.
    for r in 0..p {
        let s: f64 = h.iter().skip(r).step_by(p).sum();
        let scale = 1.0 / (p as f64 * s);
        for v in h.iter_mut().skip(r).step_by(p) {
            *v *= scale;
        }
    }
    let delay = (taps - 1) / 2;
    // Reflection padding happens at the original rate; `pad` input samples
    // cover the filter history on both sides.
    let pad = delay / p + 2;

    let mut out = Array2::zeros((t_out, traj.samples.ncols()));
    for (c, col) in traj.samples.columns().into_iter().enumerate() {
        let x: Vec<f64> = col.to_vec();
        let padded = reflect_pad(&x, pad);
        // Zero-stuff with gain p so the interpolated signal keeps its level.
        let mut up = vec![0.0; padded.len() * p];
        for (i, &v) in padded.iter().enumerate() {
            up[i * p] = v * p as f64;
        }
        let full = convolve_full(&up, &h);
        for n in 0..t_out {
            out[[n, c]] = full[n * q + pad * p + delay];
        }
    }
    ArticulatoryTrajectory::new(out, target_rate)
}

/// One MFCC analysis frame: pre-emphasis inside the frame, Hamming window,
/// zero-pad to the FFT size.
fn prepare_frame(frame: &[f64], window: &[f64], n_fft: usize) -> Vec<f64> {
    let n = frame.len();
    let mut buf = vec![0.0; n_fft];
    buf[0] = frame[0] * (1.0 - PRE_EMPHASIS);
    for i in 1..n {
        buf[i] = frame[i] - PRE_EMPHASIS * frame[i - 1];
    }
    for i in 0..n {
        buf[i] *= window[i];
    }
    buf
}

/// Iterative radix-2 FFT; returns (re, im). `n` must be a power of two.
fn fft(signal: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = signal.len();
    debug_assert!(n.is_power_of_two());
    let mut re = signal.to_vec();
    let mut im = vec![0.0; n];
    // bit-reversal permutation
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            re.swap(i, j);
            im.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let ang = -2.0 * std::f64::consts::PI / len as f64;
        let (wr, wi) = (ang.cos(), ang.sin());
        let mut i = 0;
        while i < n {
            let (mut cr, mut ci) = (1.0, 0.0);
            for k in 0..len / 2 {
                let (ur, ui) = (re[i + k], im[i + k]);
                let (vr, vi) = (
                    re[i + k + len / 2] * cr - im[i + k + len / 2] * ci,
                    re[i + k + len / 2] * ci + im[i + k + len / 2] * cr,
                );
                re[i + k] = ur + vr;
                im[i + k] = ui + vi;
                re[i + k + len / 2] = ur - vr;
                im[i + k + len / 2] = ui - vi;
                let nr = cr * wr - ci * wi;
                ci = cr * wi + ci * wr;
                cr = nr;
            }
            i += len;
        }
        len <<= 1;
    }
    (re, im)
}

/// Magnitude spectrum bins 0..=n_fft/2 of a real signal.
pub fn magnitude_spectrum(signal: &[f64]) -> Vec<f64> {
    let n = signal.len().next_power_of_two();
    let mut padded = signal.to_vec();
    padded.resize(n, 0.0);
    let (re, im) = fft(&padded);
    (0..=n / 2).map(|k| re[k].hypot(im[k])).collect()
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular mel filterbank over FFT bins 0..=n_fft/2, spanning 0 Hz to
/// Nyquist. Returned as a dense (n_filters x n_bins) matrix.
pub fn mel_filterbank(n_filters: usize, n_fft: usize, sample_rate: f64) -> Array2<f64> {
    let n_bins = n_fft / 2 + 1;
    let mel_max = hz_to_mel(sample_rate / 2.0);
    let points: Vec<f64> = (0..n_filters + 2)
        .map(|i| mel_to_hz(mel_max * i as f64 / (n_filters + 1) as f64))
        .collect();
    let mut fb = Array2::zeros((n_filters, n_bins));
    let bin_hz = sample_rate / n_fft as f64;
    for m in 0..n_filters {
        let (lo, mid, hi) = (points[m], points[m + 1], points[m + 2]);
        for k in 0..n_bins {
            let f = k as f64 * bin_hz;
            let w = if f >= lo && f <= mid {
                if mid > lo {
                    (f - lo) / (mid - lo)
                } else {
                    1.0
                }
            } else if f > mid && f <= hi {
                if hi > mid {
                    (hi - f) / (hi - mid)
                } else {
                    1.0
                }
            } else {
                0.0
            };
            fb[[m, k]] = w;
        }
    }
    fb
}

/// Orthonormal DCT-II matrix (n_out x n_in).
pub fn dct_matrix(n_out: usize, n_in: usize) -> Array2<f64> {
    let mut m = Array2::zeros((n_out, n_in));
    for k in 0..n_out {
        let scale = if k == 0 {
            (1.0 / n_in as f64).sqrt()
        } else {
            (2.0 / n_in as f64).sqrt()
        };
        for n in 0..n_in {
            m[[k, n]] = scale
                * (std::f64::consts::PI * k as f64 * (n as f64 + 0.5) / n_in as f64).cos();
        }
    }
    m
}

/// 13-dim MFCCs over 20 ms windows with a 10 ms hop. The last partial frame is
/// dropped, so the frame count is floor((N - win) / hop) + 1.
pub fn mfcc(waveform: &[f64], sample_rate: f64, n_coeffs: usize) -> Result<FeatureSequence> {
    let win = (0.020 * sample_rate).round() as usize;
    let hop = (0.010 * sample_rate).round() as usize;
    if waveform.len() < win {
        return Err(Error::Parameter(format!(
            "waveform of {} samples shorter than one {win}-sample window",
            waveform.len()
        )));
    }
    let n_frames = (waveform.len() - win) / hop + 1;
    let n_fft = win.next_power_of_two();
    let window = hamming(win);
    let fb = mel_filterbank(N_MEL_FILTERS, n_fft, sample_rate);
    let dct = dct_matrix(n_coeffs, N_MEL_FILTERS);

    let mut out = Array2::zeros((n_frames, n_coeffs));
    for t in 0..n_frames {
        let frame = &waveform[t * hop..t * hop + win];
        let buf = prepare_frame(frame, &window, n_fft);
        let spec = magnitude_spectrum(&buf);
        let spec = Array1::from(spec);
        let mel = fb.dot(&spec);
        let logmel = mel.mapv(|e| e.max(LOG_FLOOR).ln());
        let coeffs = dct.dot(&logmel);
        out.row_mut(t).assign(&coeffs);
    }
    FeatureSequence::new(out, sample_rate / hop as f64, FeatureKind::Mfcc)
}

/// Per-utterance, per-dimension mean-variance normalization. Constant
/// dimensions normalize to zero via the epsilon guard.
pub fn mvn(features: &FeatureSequence) -> Result<FeatureSequence> {
    let t = features.len();
    if t < 2 {
        return Err(Error::Parameter(format!(
            "mvn needs at least 2 frames, got {t}"
        )));
    }
    let mut out = features.frames.clone();
    for mut col in out.columns_mut() {
        let m = col.mean().expect("nonempty");
        let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / t as f64;
        let std = var.sqrt().max(1e-8);
        col.mapv_inplace(|v| (v - m) / std);
    }
    FeatureSequence::new(out, features.frame_rate, features.kind)
}

/// Result of aligning an MFCC/articulatory pair to a common length.
#[derive(Debug, Clone)]
pub struct Aligned {
    pub mfcc: FeatureSequence,
    pub art: FeatureSequence,
    /// Set when the raw lengths disagreed by more than 5 frames.
    pub warning: Option<String>,
}

/// Truncate both sequences to the shorter length. Mismatches above 5 frames
/// are recorded as a warning; above 50 frames they are an error.
pub fn align(mfcc: FeatureSequence, art: FeatureSequence) -> Result<Aligned> {
    if (mfcc.frame_rate - art.frame_rate).abs() > 1e-9 {
        return Err(Error::Parameter(format!(
            "frame rates differ: {} vs {}",
            mfcc.frame_rate, art.frame_rate
        )));
    }
    let (tm, ta) = (mfcc.len(), art.len());
    let diff = tm.abs_diff(ta);
    if diff > 50 {
        return Err(Error::Shape(format!(
            "alignment mismatch of {diff} frames ({tm} acoustic vs {ta} articulatory)"
        )));
    }
    let warning = (diff > 5).then(|| format!("alignment trimmed {diff} frames ({tm} vs {ta})"));
    let t = tm.min(ta);
    let cut = |f: FeatureSequence| -> Result<FeatureSequence> {
        if f.len() == t {
            Ok(f)
        } else {
            FeatureSequence::new(
                f.frames.slice(ndarray::s![..t, ..]).to_owned(),
                f.frame_rate,
                f.kind,
            )
        }
    };
    Ok(Aligned {
        mfcc: cut(mfcc)?,
        art: cut(art)?,
        warning,
    })
}

/// Fraction of single-sided FFT energy at or below `cutoff_hz`. A Hann window
/// keeps finite-record leakage out of the estimate. Used by the band-limit
/// and smoothness checks.
pub fn band_energy_fraction(signal: &[f64], rate: f64, cutoff_hz: f64) -> f64 {
    let n = signal.len();
    let windowed: Vec<f64> = signal
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let w = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos();
            v * w
        })
        .collect();
    let spec = magnitude_spectrum(&windowed);
    let n = (spec.len() - 1) * 2;
    let bin_hz = rate / n as f64;
    let total: f64 = spec.iter().map(|m| m * m).sum();
    if total == 0.0 {
        return 1.0;
    }
    let below: f64 = spec
        .iter()
        .enumerate()
        .filter(|(k, _)| *k as f64 * bin_hz <= cutoff_hz)
        .map(|(_, m)| m * m)
        .sum();
    below / total
}

/// Index of the dominant FFT bin and its frequency in Hz.
pub fn dominant_frequency(signal: &[f64], rate: f64) -> f64 {
    let spec = magnitude_spectrum(signal);
    let n = (spec.len() - 1) * 2;
    let (best, _) = spec
        .iter()
        .enumerate()
        .skip(1) // ignore DC
        .fold((0usize, f64::MIN), |(bi, bm), (i, &m)| {
            if m > bm {
                (i, m)
            } else {
                (bi, bm)
            }
        });
    best as f64 * rate / n as f64
}
