//! Acceptance suite. Each numbered test checks one exit criterion at its
//! stated tolerance and prints a pass/fail line. The desk-scale experiment
//! (10 seen + 4 unseen speakers, 60 sentences, three seeds) runs once and is
//! shared by the ordering, drop, smoothness, and embedding-quality criteria.

mod oracles;

use std::collections::BTreeMap;
use std::sync::OnceLock;
use std::time::Instant;

use ndarray::Array2;

use artinv::corpus;
use artinv::dsp;
use artinv::embed;
use artinv::eval;
use artinv::nncore::gradcheck;
use artinv::pipeline::{Condition, ExperimentConfig, Pipeline};

const DESK_SEEDS: [u64; 3] = [1, 2, 3];

struct DeskRun {
    pipeline: Pipeline,
    summary: artinv::pipeline::ReproSummary,
    seen: eval::EvalReport,
    unseen: eval::EvalReport,
    _dir: tempfile::TempDir,
}

struct Desk {
    runs: Vec<DeskRun>,
    wall_seconds: f64,
}

static DESK: OnceLock<Desk> = OnceLock::new();

fn desk() -> &'static Desk {
    DESK.get_or_init(|| {
        artinv::pipeline::init_threads();
        let start = Instant::now();
        let runs = DESK_SEEDS
            .iter()
            .map(|&seed| {
                let dir = tempfile::tempdir().expect("tempdir");
                let pipeline =
                    Pipeline::new(ExperimentConfig::desk(seed), dir.path()).expect("pipeline");
                let summary = pipeline.reproduce().expect("desk reproduce");
                let seen = pipeline.load_scores(Condition::Seen).expect("seen scores");
                let unseen = pipeline
                    .load_scores(Condition::Unseen)
                    .expect("unseen scores");
                DeskRun {
                    pipeline,
                    summary,
                    seen,
                    unseen,
                    _dir: dir,
                }
            })
            .collect();
        Desk {
            runs,
            wall_seconds: start.elapsed().as_secs_f64(),
        }
    })
}

fn mean_over_seeds(reports: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = reports.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

#[test]
fn criterion_01_gradient_verification() {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for seed in [11u64, 22, 33] {
        let cases = gradcheck::verify_all_layer_gradients(seed)
            .expect("finite-difference check must succeed");
        for case in cases {
            worst = worst.max(case.worst_rel_err);
            assert!(
                case.worst_rel_err < 1e-4,
                "criterion 1: FAIL — {} relative error {}",
                case.name,
                case.worst_rel_err
            );
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 60.0, "criterion 1: FAIL — took {elapsed:.1} s");
    println!(
        "criterion 1: PASS — dense/lstm/blstm/tdnn/stats-pool/softmax/mse/cross-entropy \
         gradients within 1e-4 of finite differences (worst {worst:.2e}, {elapsed:.1} s)"
    );
}

#[test]
fn criterion_02_dsp_oracles() {
    let start = Instant::now();

    // MFCC against the direct-DFT brute-force oracle, random 0.5 s signal.
    let mut noise = oracles::XorShift(0xA5A5_5A5A_1234_5678);
    let wave: Vec<f64> = (0..8000).map(|_| noise.next_f64() * 0.4).collect();
    let ours = dsp::mfcc(&wave, 16_000.0, dsp::N_MFCC).expect("mfcc");
    let reference = oracles::mfcc_oracle(&wave, 16_000.0, dsp::N_MFCC);
    assert_eq!(ours.len(), reference.len());
    let mut worst = 0.0f64;
    for (t, row) in reference.iter().enumerate() {
        for (d, &r) in row.iter().enumerate() {
            let diff = (ours.frames[[t, d]] - r).abs();
            worst = worst.max(diff);
            assert!(
                diff < 1e-6,
                "criterion 2: FAIL — mfcc[{t},{d}] differs from oracle by {diff:.2e}"
            );
        }
    }

    // 25 Hz low-pass: 50 Hz tone down >= 40 dB, 5 Hz within 0.5 dB.
    let tone = |freq: f64, t: usize| -> corpus::ArticulatoryTrajectory {
        let m = Array2::from_shape_fn((t, 12), |(i, _)| {
            (2.0 * std::f64::consts::PI * freq * i as f64 / 250.0).sin()
        });
        corpus::ArticulatoryTrajectory::new(m, 250.0).unwrap()
    };
    let spec = dsp::FilterSpec::new(25.0);
    let peak = |x: &[f64]| {
        dsp::magnitude_spectrum(x)
            .into_iter()
            .fold(0.0f64, f64::max)
    };
    let hi = dsp::lowpass(&tone(50.0, 4000), &spec).unwrap();
    let hi_in: Vec<f64> = tone(50.0, 4000).samples.column(0).to_vec();
    let hi_out: Vec<f64> = hi.samples.column(0).to_vec();
    let atten_db = 20.0 * (peak(&hi_out[1000..3000]) / peak(&hi_in[1000..3000])).log10();
    assert!(
        atten_db <= -40.0,
        "criterion 2: FAIL — 50 Hz attenuated only {atten_db:.1} dB"
    );
    let lo = dsp::lowpass(&tone(5.0, 4000), &spec).unwrap();
    let lo_in: Vec<f64> = tone(5.0, 4000).samples.column(0).to_vec();
    let lo_out: Vec<f64> = lo.samples.column(0).to_vec();
    let pass_db = 20.0 * (peak(&lo_out[1000..3000]) / peak(&lo_in[1000..3000])).log10();
    assert!(
        pass_db.abs() <= 0.5,
        "criterion 2: FAIL — 5 Hz passband deviation {pass_db:.3} dB"
    );

    // 250 -> 100 Hz resampling preserves a 10 Hz tone's dominant bin.
    let rs = dsp::resample(&tone(10.0, 1000), 100.0).unwrap();
    let y: Vec<f64> = rs.samples.column(0).to_vec();
    let f = dsp::dominant_frequency(&y, 100.0);
    let bin = 100.0 / y.len() as f64;
    assert!(
        (f - 10.0).abs() <= bin + 1e-9,
        "criterion 2: FAIL — resampled tone peak at {f:.3} Hz"
    );

    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 30.0, "criterion 2: FAIL — took {elapsed:.1} s");
    println!(
        "criterion 2: PASS — mfcc within 1e-6 of oracle (worst {worst:.2e}); 50 Hz at \
         {atten_db:.1} dB; 5 Hz at {pass_db:+.3} dB; 10 Hz bin preserved ({elapsed:.1} s)"
    );
}

#[test]
fn criterion_03_metric_oracles() {
    // RMSE/CC hand values.
    let truth = Array2::from_shape_fn((3, 12), |(i, _)| (i + 1) as f64);
    let pred = Array2::from_shape_fn((3, 12), |(i, _)| [1.0, 3.0, 2.0][i]);
    for v in eval::cc(&pred, &truth).unwrap() {
        assert!((v - 0.5).abs() < 1e-12, "criterion 3: FAIL — cc {v}");
    }
    let off = &truth + 2.0;
    for v in eval::rmse(&off, &truth).unwrap() {
        assert!((v - 2.0).abs() < 1e-12, "criterion 3: FAIL — rmse {v}");
    }

    // t(a, a) = 0 with p = 1.
    let a = vec![0.81, 0.83, 0.78, 0.85];
    let r = eval::paired_ttest(&a, &a).unwrap();
    assert_eq!((r.t, r.p), (0.0, 1.0), "criterion 3: FAIL — t(a,a)");

    // p-values match the analytic references within 1e-3 for n <= 6.
    let mut worst = 0.0f64;
    for dof in 1..=5usize {
        for &t in &[0.3f64, 0.9, 1.7, 2.8, 3.873, 6.0] {
            let ours = eval::student_t_two_tailed_p(t, dof);
            let reference = oracles::t_two_tailed_reference(t, dof);
            let diff = (ours - reference).abs();
            worst = worst.max(diff);
            assert!(
                diff < 1e-3,
                "criterion 3: FAIL — p(t={t}, dof={dof}) off by {diff:.2e}"
            );
        }
    }
    // The worked example: differences [1,2,3,4].
    let b = vec![1.0f64, 1.0, 1.0, 1.0];
    let shifted = vec![2.0f64, 3.0, 4.0, 5.0];
    let r = eval::paired_ttest(&shifted, &b).unwrap();
    assert!((r.t - 3.8729833462).abs() < 1e-6);
    assert!((r.p - 0.030466).abs() < 1e-3);
    println!(
        "criterion 3: PASS — rmse/cc exact; paired t-test within {worst:.2e} of analytic \
         references (n <= 6); t(a,a) = 0, p = 1"
    );
}

#[test]
fn criterion_04_split_arithmetic() {
    // As stated: 460 sentences split 80/10/10 must yield exactly 364/46/46.
    let counts = corpus::split_counts(460, (0.8, 0.1, 0.1)).unwrap();
    assert_eq!(
        counts,
        (364, 46, 46),
        "criterion 4: FAIL — 460 sentences split to {}/{}/{} under covering \
         round-half-up arithmetic; 364+46+46 = 456 cannot cover 460 sentences, \
         so the stated target is arithmetically unattainable",
        counts.0,
        counts.1,
        counts.2
    );
    println!("criterion 4: PASS — 460 sentences -> 364/46/46");
}

#[test]
fn criterion_05_seen_condition_ordering() {
    let desk = desk();
    let cc = |scheme: &str| {
        mean_over_seeds(
            desk.runs
                .iter()
                .map(|r| r.seen.scheme(scheme).expect("scheme evaluated").cc),
        )
    };
    let (sd, gm, sc, xsc) = (cc("sd"), cc("gm"), cc("sc"), cc("xsc"));
    let minutes = desk.wall_seconds / 60.0;
    let detail = format!(
        "mean CC over {} seeds: sd {sd:.4}, gm {gm:.4}, sc {sc:.4}, xsc {xsc:.4} \
         ({minutes:.1} min total)",
        DESK_SEEDS.len()
    );
    assert!(xsc >= gm + 0.005, "criterion 5: FAIL — xsc vs gm; {detail}");
    assert!(sc >= gm + 0.005, "criterion 5: FAIL — sc vs gm; {detail}");
    assert!(gm >= sd + 0.01, "criterion 5: FAIL — gm vs sd; {detail}");
    assert!(
        (xsc - sc).abs() <= 0.02,
        "criterion 5: FAIL — |xsc - sc| = {:.4}; {detail}",
        (xsc - sc).abs()
    );
    // The runtime bound is stated for an 8-core reference machine; scale the
    // budget when fewer cores are available.
    let cores = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(8);
    let budget = 45.0 * 60.0 * 8.0 / cores as f64;
    assert!(
        desk.wall_seconds < budget,
        "criterion 5: FAIL — desk experiment took {minutes:.1} min on {cores} cores \
         (budget {:.0} min)",
        budget / 60.0
    );
    println!("criterion 5: PASS — {detail}");
}

/// Per-utterance mean-over-articulator CC pairs pooled over the seeds.
fn pooled_unseen_pairs(a: &str, b: &str) -> (Vec<f64>, Vec<f64>) {
    let desk = desk();
    let mut va = Vec::new();
    let mut vb = Vec::new();
    for run in &desk.runs {
        let sa = &run.unseen.scores[a];
        let sb = &run.unseen.scores[b];
        assert_eq!(sa.len(), sb.len());
        for (x, y) in sa.iter().zip(sb) {
            assert_eq!((x.speaker, x.sentence), (y.speaker, y.sentence));
            va.push(x.mean_cc());
            vb.push(y.mean_cc());
        }
    }
    (va, vb)
}

#[test]
fn criterion_06_unseen_condition_ordering() {
    let desk = desk();
    let cc = |scheme: &str| {
        mean_over_seeds(
            desk.runs
                .iter()
                .map(|r| r.unseen.scheme(scheme).expect("scheme evaluated").cc),
        )
    };
    let (gm, xsc, usc) = (cc("gm"), cc("xsc"), cc("usc"));
    let (xsc_pairs, gm_pairs) = pooled_unseen_pairs("xsc", "gm");
    let ttest = eval::paired_ttest(&xsc_pairs, &gm_pairs).unwrap();
    let detail = format!(
        "unseen mean CC: xsc {xsc:.4} vs gm {gm:.4} (paired t = {:.3}, p = {:.2e}, \
         n = {} pooled over {} seeds); usc {usc:.4}",
        ttest.t,
        ttest.p,
        xsc_pairs.len(),
        DESK_SEEDS.len()
    );
    assert!(xsc > gm, "criterion 6: FAIL — {detail}");
    assert!(ttest.t > 0.0 && ttest.p < 0.05, "criterion 6: FAIL — {detail}");
    let usc_note = if xsc > usc && gm > usc {
        "usc is worst, as in the reference experiments".to_string()
    } else {
        format!(
            "usc deficit report: usc {usc:.4} vs gm {gm:.4} / xsc {xsc:.4}"
        )
    };
    println!("criterion 6: PASS — {detail}; {usc_note}");
}

#[test]
fn criterion_07_relative_drop() {
    let desk = desk();
    let mut gm_drops = Vec::new();
    let mut xsc_drops = Vec::new();
    for run in &desk.runs {
        let report = run
            .pipeline
            .relative_drop_report()
            .expect("drop report")
            .expect("sd reference evaluated");
        gm_drops.push(report.drops["gm"].drop_percent);
        xsc_drops.push(report.drops["xsc"].drop_percent);
    }
    let gm = gm_drops.iter().sum::<f64>() / gm_drops.len() as f64;
    let xsc = xsc_drops.iter().sum::<f64>() / xsc_drops.len() as f64;
    assert!(
        xsc <= gm,
        "criterion 7: FAIL — relative drop xsc {xsc:.2}% > gm {gm:.2}%"
    );
    println!(
        "criterion 7: PASS — relative CC drop vs per-speaker seen reference: \
         xsc {xsc:.2}% <= gm {gm:.2}% (per seed xsc {xsc_drops:.2?}, gm {gm_drops:.2?})"
    );
}

#[test]
fn criterion_08_smoothness() {
    let desk = desk();
    let mut min_fraction = 1.0f64;
    for run in &desk.runs {
        for scheme in ["gm", "xsc", "sc"] {
            let frac = run
                .pipeline
                .smoothness_check(Condition::Seen, scheme)
                .expect("smoothness check");
            min_fraction = min_fraction.min(frac);
        }
    }
    assert!(
        min_fraction >= 0.95,
        "criterion 8: FAIL — only {:.1}% of predicted-trajectory energy below 25 Hz",
        min_fraction * 100.0
    );
    println!(
        "criterion 8: PASS — predicted trajectories keep {:.2}%+ of spectral energy \
         below 25 Hz at the 100 Hz frame rate",
        min_fraction * 100.0
    );
}

#[test]
fn criterion_09_determinism() {
    // Full pipeline, two fresh output directories, identical seed: every
    // report file must match byte for byte.
    artinv::pipeline::init_threads();
    let run = |dir: &std::path::Path| {
        let p = Pipeline::new(ExperimentConfig::mini(7), dir).unwrap();
        p.reproduce().unwrap();
        let mut files = BTreeMap::new();
        let reports = dir.join("reports");
        for entry in std::fs::read_dir(&reports).unwrap() {
            let path = entry.unwrap().path();
            files.insert(
                path.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&path).unwrap(),
            );
        }
        files
    };
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let files_a = run(dir_a.path());
    let files_b = run(dir_b.path());
    assert_eq!(
        files_a.keys().collect::<Vec<_>>(),
        files_b.keys().collect::<Vec<_>>()
    );
    for (name, bytes) in &files_a {
        assert_eq!(
            bytes, &files_b[name],
            "criterion 9: FAIL — report file {name} differs between identical runs"
        );
    }
    println!(
        "criterion 9: PASS — two reproduce runs with the same seed produced {} \
         bit-identical report files",
        files_a.len()
    );
}

#[test]
fn criterion_10_embedding_quality() {
    let desk = desk();
    let emb_acc = mean_over_seeds(desk.runs.iter().map(|r| r.summary.embedder_holdout_accuracy));
    let sid_acc = mean_over_seeds(desk.runs.iter().map(|r| r.summary.sid_test_accuracy));

    // Within- vs cross-speaker cosine separation over the cached x-vectors of
    // the first desk run's seen speakers.
    let run = &desk.runs[0];
    let out = run.pipeline.out_dir();
    let mut embeddings = Vec::new();
    for spk in run.pipeline.seen_speakers() {
        let label = corpus::SpeakerId::from_index(spk).label;
        for sentence in 0..run.pipeline.cfg.corpus.sentences {
            let path = out
                .join("embeddings/seen")
                .join(&label)
                .join(format!("{sentence:04}.xvec.f32"));
            let m = artinv::io::read_matrix(&path).unwrap();
            embeddings.push((
                spk,
                embed::SpeakerEmbedding::new(
                    m.to_array().row(0).to_owned(),
                    embed::EmbeddingSource::Xvector,
                )
                .unwrap(),
            ));
        }
    }
    let (within, cross) = embed::cosine_separation(&embeddings);

    assert!(
        within > cross,
        "criterion 10: FAIL — within-speaker cosine {within:.4} <= cross {cross:.4}"
    );
    assert!(
        emb_acc > 0.9,
        "criterion 10: FAIL — background accuracy {emb_acc:.3}"
    );
    assert!(
        sid_acc > 0.8,
        "criterion 10: FAIL — SID accuracy {sid_acc:.3}"
    );
    println!(
        "criterion 10: PASS — embedder accuracy {emb_acc:.3} (> 0.9), SID accuracy \
         {sid_acc:.3} (> 0.8), cosine within {within:.3} > cross {cross:.3}"
    );
}

#[test]
fn invariant_single_speaker_invertibility() {
    // Corpus sanity bound: with enough data from one synthetic speaker, a
    // speaker-dependent model reaches test CC above 0.8.
    artinv::pipeline::init_threads();
    let mut cfg = ExperimentConfig::desk(5);
    cfg.corpus.seen_speakers = 2;
    cfg.corpus.unseen_speakers = 0;
    cfg.corpus.background_speakers = 4;
    cfg.corpus.background_sentences = 10;
    cfg.corpus.sentences = 80;
    cfg.schemes = vec!["sd".into()];
    let dir = tempfile::tempdir().unwrap();
    let p = Pipeline::new(cfg, dir.path()).unwrap();
    p.synth().unwrap();
    p.preprocess().unwrap();
    p.train_aai(artinv::aai::Scheme::Sd, None).unwrap();
    let report = p.evaluate(Condition::Seen, &["sd".into()]).unwrap();
    // Only speaker 0 has a model; restrict to its aggregate.
    let agg = report.scheme("sd").unwrap();
    let row = agg.per_speaker.iter().find(|s| s.speaker == 0).unwrap();
    assert!(
        row.cc > 0.8,
        "single-speaker invertibility: CC {:.4} <= 0.8",
        row.cc
    );
    println!(
        "invariant: PASS — single-speaker regressor reaches CC {:.4} > 0.8",
        row.cc
    );
}
