//! Independent oracles for the acceptance suite. Everything here is written
//! against the pinned constants directly — direct DFT instead of FFT,
//! explicit mel/DCT matrices — and shares no code with the library paths it
//! checks.

/// Brute-force 13-dim MFCC: per-frame pre-emphasis 0.97, Hamming window,
/// zero-padding to the next power of two, direct O(N^2) DFT magnitude,
/// 26 triangular mel filters from 0 Hz to Nyquist, log with floor 1e-10,
/// orthonormal DCT-II.
pub fn mfcc_oracle(waveform: &[f64], sample_rate: f64, n_coeffs: usize) -> Vec<Vec<f64>> {
    let win = (0.020 * sample_rate).round() as usize;
    let hop = (0.010 * sample_rate).round() as usize;
    let n_frames = (waveform.len() - win) / hop + 1;
    let mut n_fft = 1usize;
    while n_fft < win {
        n_fft *= 2;
    }
    let n_bins = n_fft / 2 + 1;
    let n_mel = 26;

    let hz_to_mel = |hz: f64| 2595.0 * (1.0 + hz / 700.0).log10();
    let mel_to_hz = |mel: f64| 700.0 * (10f64.powf(mel / 2595.0) - 1.0);

    // Explicit mel filter matrix.
    let mel_max = hz_to_mel(sample_rate / 2.0);
    let points: Vec<f64> = (0..n_mel + 2)
        .map(|i| mel_to_hz(mel_max * i as f64 / (n_mel + 1) as f64))
        .collect();
    let mut mel = vec![vec![0.0f64; n_bins]; n_mel];
    for m in 0..n_mel {
        let (lo, mid, hi) = (points[m], points[m + 1], points[m + 2]);
        for k in 0..n_bins {
            let f = k as f64 * sample_rate / n_fft as f64;
            mel[m][k] = if f >= lo && f <= mid && mid > lo {
                (f - lo) / (mid - lo)
            } else if f > mid && f <= hi && hi > mid {
                (hi - f) / (hi - mid)
            } else if (f - mid).abs() < 1e-12 {
                1.0
            } else {
                0.0
            };
        }
    }

    // Explicit orthonormal DCT-II matrix.
    let mut dct = vec![vec![0.0f64; n_mel]; n_coeffs];
    for (k, row) in dct.iter_mut().enumerate() {
        let scale = if k == 0 {
            (1.0 / n_mel as f64).sqrt()
        } else {
            (2.0 / n_mel as f64).sqrt()
        };
        for (n, v) in row.iter_mut().enumerate() {
            *v = scale
                * (std::f64::consts::PI * k as f64 * (n as f64 + 0.5) / n_mel as f64).cos();
        }
    }

    let window: Vec<f64> = (0..win)
        .map(|i| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (win - 1) as f64).cos())
        .collect();

    let mut out = Vec::with_capacity(n_frames);
    for t in 0..n_frames {
        let frame = &waveform[t * hop..t * hop + win];
        let mut buf = vec![0.0f64; n_fft];
        buf[0] = frame[0] * (1.0 - 0.97);
        for i in 1..win {
            buf[i] = frame[i] - 0.97 * frame[i - 1];
        }
        for i in 0..win {
            buf[i] *= window[i];
        }
        // Direct DFT, no fast transform.
        let mut mags = vec![0.0f64; n_bins];
        for (k, mag) in mags.iter_mut().enumerate() {
            let mut re = 0.0;
            let mut im = 0.0;
            for (n, &x) in buf.iter().enumerate() {
                let phase = -2.0 * std::f64::consts::PI * k as f64 * n as f64 / n_fft as f64;
                re += x * phase.cos();
                im += x * phase.sin();
            }
            *mag = (re * re + im * im).sqrt();
        }
        let mut coeffs = vec![0.0f64; n_coeffs];
        for (k, c) in coeffs.iter_mut().enumerate() {
            let mut acc = 0.0;
            for m in 0..n_mel {
                let mut energy = 0.0;
                for (bin, w) in mel[m].iter().enumerate() {
                    energy += w * mags[bin];
                }
                acc += dct[k][m] * energy.max(1e-10).ln();
            }
            *c = acc;
        }
        out.push(coeffs);
    }
    out
}

/// Analytic two-tailed Student-t p-values for small degrees of freedom.
/// Closed forms, independent of the incomplete-beta route under test.
pub fn t_two_tailed_reference(t: f64, dof: usize) -> f64 {
    use std::f64::consts::PI;
    let t = t.abs();
    match dof {
        1 => 1.0 - 2.0 / PI * t.atan(),
        2 => 1.0 - t / (t * t + 2.0).sqrt(),
        3 => {
            let x = t / 3f64.sqrt();
            1.0 - 2.0 / PI * (x.atan() + x / (1.0 + x * x))
        }
        4 => {
            let u = t / (t * t + 4.0).sqrt();
            1.0 - u * (1.0 + 0.5 * (1.0 - u * u)) // 1 - (3u - u^3)/2
        }
        5 => {
            let x = t / 5f64.sqrt();
            1.0 - 2.0 / PI
                * (x.atan() + x * (1.0 + 2.0 / (3.0 * (1.0 + x * x))) / (1.0 + x * x))
        }
        _ => panic!("reference table covers dof 1..=5"),
    }
}

/// Deterministic xorshift noise generator for oracle inputs.
pub struct XorShift(pub u64);

impl XorShift {
    pub fn next_f64(&mut self) -> f64 {
        self.0 ^= self.0 << 13;
        self.0 ^= self.0 >> 7;
        self.0 ^= self.0 << 17;
        (self.0 >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    }
}
