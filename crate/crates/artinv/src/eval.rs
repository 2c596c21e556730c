//! Evaluation harness: per-articulator RMSE and Pearson CC, speaker-wise
//! aggregation, paired two-tailed t-tests, and table emitters.
//!
//! RMSE is reported in normalized units (the pipeline trains on MVN targets),
//! which is not comparable to millimeter-scale numbers from real sensor data;
//! report files state this.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::corpus::CHANNEL_NAMES;
use crate::error::{Error, Result};
use crate::io;

/// Per-articulator scores of one test utterance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceScore {
    pub speaker: u32,
    pub sentence: u32,
    pub rmse: Vec<f64>,
    pub cc: Vec<f64>,
}

impl UtteranceScore {
    pub fn mean_cc(&self) -> f64 {
        self.cc.iter().sum::<f64>() / self.cc.len() as f64
    }

    pub fn mean_rmse(&self) -> f64 {
        self.rmse.iter().sum::<f64>() / self.rmse.len() as f64
    }
}

/// Per-channel root mean squared error over frames.
pub fn rmse(pred: &Array2<f64>, truth: &Array2<f64>) -> Result<Vec<f64>> {
    if pred.dim() != truth.dim() {
        return Err(Error::Shape(format!(
            "rmse shapes differ: {:?} vs {:?}",
            pred.dim(),
            truth.dim()
        )));
    }
    if pred.nrows() == 0 {
        return Err(Error::Parameter("rmse needs at least one frame".into()));
    }
    let t = pred.nrows() as f64;
    Ok((0..pred.ncols())
        .map(|c| {
            let sq: f64 = pred
                .column(c)
                .iter()
                .zip(truth.column(c))
                .map(|(p, g)| (p - g) * (p - g))
                .sum();
            (sq / t).sqrt()
        })
        .collect())
}

/// Per-channel Pearson correlation over frames. A channel with zero variance
/// on either side scores 0.
pub fn cc(pred: &Array2<f64>, truth: &Array2<f64>) -> Result<Vec<f64>> {
    if pred.dim() != truth.dim() {
        return Err(Error::Shape(format!(
            "cc shapes differ: {:?} vs {:?}",
            pred.dim(),
            truth.dim()
        )));
    }
    if pred.nrows() < 2 {
        return Err(Error::Parameter(
            "correlation needs at least two frames".into(),
        ));
    }
    let t = pred.nrows() as f64;
    Ok((0..pred.ncols())
        .map(|c| {
            let (p, g) = (pred.column(c), truth.column(c));
            let mp = p.sum() / t;
            let mg = g.sum() / t;
            let mut cov = 0.0;
            let mut vp = 0.0;
            let mut vg = 0.0;
            for (a, b) in p.iter().zip(g.iter()) {
                cov += (a - mp) * (b - mg);
                vp += (a - mp) * (a - mp);
                vg += (b - mg) * (b - mg);
            }
            if vp <= 0.0 || vg <= 0.0 {
                0.0
            } else {
                cov / (vp.sqrt() * vg.sqrt())
            }
        })
        .collect())
}

pub fn score_utterance(
    speaker: u32,
    sentence: u32,
    pred: &Array2<f64>,
    truth: &Array2<f64>,
) -> Result<UtteranceScore> {
    Ok(UtteranceScore {
        speaker,
        sentence,
        rmse: rmse(pred, truth)?,
        cc: cc(pred, truth)?,
    })
}

// ---------------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerAggregate {
    pub speaker: u32,
    pub n_utterances: usize,
    /// Mean over utterances, then over articulators.
    pub cc: f64,
    pub rmse: f64,
    /// Mean over utterances, per articulator.
    pub cc_per_articulator: Vec<f64>,
    pub rmse_per_articulator: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeAggregate {
    pub scheme: String,
    pub per_speaker: Vec<SpeakerAggregate>,
    /// Unweighted mean over speakers; standard deviation across speakers.
    pub cc: f64,
    pub cc_sd: f64,
    pub rmse: f64,
    pub rmse_sd: f64,
    /// Mean over speakers, per articulator.
    pub cc_per_articulator: Vec<f64>,
    pub rmse_per_articulator: Vec<f64>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn std_dev(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
}

/// Aggregation order: mean over utterances, then articulators, then speakers
/// (each speaker weighted equally regardless of utterance count).
pub fn aggregate(scheme: &str, scores: &[UtteranceScore]) -> Result<SchemeAggregate> {
    if scores.is_empty() {
        return Err(Error::Parameter("no scores to aggregate".into()));
    }
    let mut by_speaker: BTreeMap<u32, Vec<&UtteranceScore>> = BTreeMap::new();
    for s in scores {
        by_speaker.entry(s.speaker).or_default().push(s);
    }
    let mut per_speaker = Vec::new();
    for (&speaker, utts) in &by_speaker {
        let n = utts.len();
        let n_art = utts[0].cc.len();
        let mut cc_art = vec![0.0; n_art];
        let mut rmse_art = vec![0.0; n_art];
        for u in utts {
            for a in 0..n_art {
                cc_art[a] += u.cc[a] / n as f64;
                rmse_art[a] += u.rmse[a] / n as f64;
            }
        }
        per_speaker.push(SpeakerAggregate {
            speaker,
            n_utterances: n,
            cc: mean(&cc_art),
            rmse: mean(&rmse_art),
            cc_per_articulator: cc_art,
            rmse_per_articulator: rmse_art,
        });
    }
    let cc_values: Vec<f64> = per_speaker.iter().map(|s| s.cc).collect();
    let rmse_values: Vec<f64> = per_speaker.iter().map(|s| s.rmse).collect();
    let n_art = per_speaker[0].cc_per_articulator.len();
    let mut cc_per_articulator = vec![0.0; n_art];
    let mut rmse_per_articulator = vec![0.0; n_art];
    for s in &per_speaker {
        for a in 0..n_art {
            cc_per_articulator[a] += s.cc_per_articulator[a] / per_speaker.len() as f64;
            rmse_per_articulator[a] += s.rmse_per_articulator[a] / per_speaker.len() as f64;
        }
    }
    Ok(SchemeAggregate {
        scheme: scheme.to_string(),
        cc: mean(&cc_values),
        cc_sd: std_dev(&cc_values),
        rmse: mean(&rmse_values),
        rmse_sd: std_dev(&rmse_values),
        per_speaker,
        cc_per_articulator,
        rmse_per_articulator,
    })
}

// ---------------------------------------------------------------------------
// Paired t-test
// ---------------------------------------------------------------------------

/// Lanczos log-gamma (g = 7, 9 terms).
fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // Reflection formula.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + 7.5;
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Continued fraction for the regularized incomplete beta (modified Lentz).
fn betacf(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 300;
    const EPS: f64 = 1e-15;
    const FPMIN: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < FPMIN {
        d = FPMIN;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta I_x(a, b), accurate to ~1e-15.
pub fn betai(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let bt = (ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln()).exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        bt * betacf(a, b, x) / a
    } else {
        1.0 - bt * betacf(b, a, 1.0 - x) / b
    }
}

/// Two-tailed p-value of Student's t with `dof` degrees of freedom.
pub fn student_t_two_tailed_p(t: f64, dof: usize) -> f64 {
    let v = dof as f64;
    betai(v / 2.0, 0.5, v / (v + t * t))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TtestResult {
    pub t: f64,
    pub p: f64,
    pub dof: usize,
}

/// Two-tailed paired t-test on matched per-utterance values (same utterances,
/// same order). Degenerate cases: zero-variance zero-mean differences give
/// t = 0, p = 1; zero variance with a nonzero mean is exact dominance, p = 0.
pub fn paired_ttest(values_a: &[f64], values_b: &[f64]) -> Result<TtestResult> {
    if values_a.len() != values_b.len() {
        return Err(Error::Shape(format!(
            "paired t-test needs matched samples, got {} vs {}",
            values_a.len(),
            values_b.len()
        )));
    }
    let n = values_a.len();
    if n < 2 {
        return Err(Error::Parameter(
            "paired t-test needs at least 2 pairs".into(),
        ));
    }
    let diffs: Vec<f64> = values_a.iter().zip(values_b).map(|(a, b)| a - b).collect();
    let dof = n - 1;
    let m = mean(&diffs);
    let var = diffs.iter().map(|d| (d - m) * (d - m)).sum::<f64>() / dof as f64;
    if var == 0.0 {
        return Ok(if m == 0.0 {
            TtestResult { t: 0.0, p: 1.0, dof }
        } else {
            TtestResult {
                t: if m > 0.0 { f64::INFINITY } else { f64::NEG_INFINITY },
                p: 0.0,
                dof,
            }
        });
    }
    let t = m / (var.sqrt() / (n as f64).sqrt());
    Ok(TtestResult {
        t,
        p: student_t_two_tailed_p(t, dof),
        dof,
    })
}

/// Relative performance drop in percent between a seen-condition and an
/// unseen-condition score.
pub fn relative_drop(seen_cc: f64, unseen_cc: f64) -> Result<f64> {
    if seen_cc <= 0.0 {
        return Err(Error::Parameter(format!(
            "relative drop undefined for non-positive seen CC {seen_cc}"
        )));
    }
    Ok(100.0 * (seen_cc - unseen_cc) / seen_cc)
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TtestEntry {
    pub scheme_a: String,
    pub scheme_b: String,
    pub speaker: u32,
    pub t: f64,
    pub p: f64,
    pub dof: usize,
    pub significant: bool,
}

/// The full evaluation result for one condition. Aggregates are re-derivable
/// from the stored per-utterance scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub condition: String,
    pub significance: f64,
    pub schemes: Vec<SchemeAggregate>,
    pub ttests: Vec<TtestEntry>,
    pub scores: BTreeMap<String, Vec<UtteranceScore>>,
}

impl EvalReport {
    /// Build aggregates and the per-speaker pairwise t-test matrix from raw
    /// per-utterance scores.
    pub fn from_scores(
        condition: &str,
        significance: f64,
        scores: BTreeMap<String, Vec<UtteranceScore>>,
    ) -> Result<EvalReport> {
        if !(0.0 < significance && significance < 1.0) {
            return Err(Error::Parameter(format!(
                "significance level {significance} outside (0, 1)"
            )));
        }
        let mut schemes = Vec::new();
        for (scheme, utts) in &scores {
            schemes.push(aggregate(scheme, utts)?);
        }
        let names: Vec<String> = scores.keys().cloned().collect();
        let mut ttests = Vec::new();
        for i in 0..names.len() {
            for j in (i + 1)..names.len() {
                let a = &scores[&names[i]];
                let b = &scores[&names[j]];
                let mut speakers: Vec<u32> = a.iter().map(|s| s.speaker).collect();
                speakers.sort_unstable();
                speakers.dedup();
                for spk in speakers {
                    let pick = |list: &[UtteranceScore]| -> Vec<f64> {
                        let mut v: Vec<(u32, f64)> = list
                            .iter()
                            .filter(|s| s.speaker == spk)
                            .map(|s| (s.sentence, s.mean_cc()))
                            .collect();
                        v.sort_unstable_by_key(|(sent, _)| *sent);
                        v.into_iter().map(|(_, c)| c).collect()
                    };
                    let va = pick(a);
                    let vb = pick(b);
                    if va.len() != vb.len() || va.len() < 2 {
                        continue;
                    }
                    let r = paired_ttest(&va, &vb)?;
                    ttests.push(TtestEntry {
                        scheme_a: names[i].clone(),
                        scheme_b: names[j].clone(),
                        speaker: spk,
                        t: r.t,
                        p: r.p,
                        dof: r.dof,
                        significant: r.p < significance,
                    });
                }
            }
        }
        Ok(EvalReport {
            condition: condition.to_string(),
            significance,
            schemes,
            ttests,
            scores,
        })
    }

    pub fn scheme(&self, name: &str) -> Option<&SchemeAggregate> {
        self.schemes.iter().find(|s| s.scheme == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
    Markdown,
}

impl ReportFormat {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(Error::Config(format!("unknown report format `{other}`"))),
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
            ReportFormat::Markdown => "md",
        }
    }
}

fn fmt_num(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// Overall table: one column per scheme, rows CC (SD) and RMSE (SD).
pub fn table_overall(report: &EvalReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let rows: Vec<serde_json::Value> = report
                .schemes
                .iter()
                .map(|s| {
                    serde_json::json!({
                        "scheme": s.scheme,
                        "cc": s.cc,
                        "cc_sd": s.cc_sd,
                        "rmse": s.rmse,
                        "rmse_sd": s.rmse_sd,
                    })
                })
                .collect();
            serde_json::to_string_pretty(&serde_json::json!({
                "condition": report.condition,
                "units": "normalized (MVN) articulatory space",
                "rows": rows,
            }))
            .expect("report serializes")
                + "\n"
        }
        ReportFormat::Csv => {
            let mut out = String::from("scheme,cc,cc_sd,rmse,rmse_sd\n");
            for s in &report.schemes {
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    s.scheme,
                    fmt_num(s.cc),
                    fmt_num(s.cc_sd),
                    fmt_num(s.rmse),
                    fmt_num(s.rmse_sd)
                ));
            }
            out
        }
        ReportFormat::Markdown => {
            let mut out = format!(
                "# Overall scores ({} condition)\n\nRMSE/CC in normalized (MVN) articulatory \
                 units, averaged across articulators and speakers; SD across speakers in \
                 parentheses.\n\n",
                report.condition
            );
            out.push_str("| |");
            for s in &report.schemes {
                out.push_str(&format!(" {} |", s.scheme));
            }
            out.push_str("\n|---|");
            for _ in &report.schemes {
                out.push_str("---|");
            }
            out.push('\n');
            out.push_str("| CC (SD) |");
            for s in &report.schemes {
                out.push_str(&format!(" {:.4} ({:.3}) |", s.cc, s.cc_sd));
            }
            out.push_str("\n| RMSE (SD) |");
            for s in &report.schemes {
                out.push_str(&format!(" {:.4} ({:.3}) |", s.rmse, s.rmse_sd));
            }
            out.push('\n');
            out
        }
    }
}

/// Per-articulator CC table: one row per scheme, the 12 channels in corpus
/// order.
pub fn table_articulator(report: &EvalReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let rows: Vec<serde_json::Value> = report
                .schemes
                .iter()
                .map(|s| {
                    let cols: serde_json::Map<String, serde_json::Value> = CHANNEL_NAMES
                        .iter()
                        .zip(&s.cc_per_articulator)
                        .map(|(name, &v)| {
                            (
                                name.to_string(),
                                serde_json::Number::from_f64(v)
                                    .map(serde_json::Value::Number)
                                    .unwrap_or(serde_json::Value::Null),
                            )
                        })
                        .collect();
                    serde_json::json!({ "scheme": s.scheme, "cc": cols })
                })
                .collect();
            serde_json::to_string_pretty(&serde_json::json!({
                "condition": report.condition,
                "rows": rows,
            }))
            .expect("report serializes")
                + "\n"
        }
        ReportFormat::Csv => {
            let mut out = String::from("scheme");
            for name in CHANNEL_NAMES {
                out.push(',');
                out.push_str(name);
            }
            out.push('\n');
            for s in &report.schemes {
                out.push_str(&s.scheme);
                for v in &s.cc_per_articulator {
                    out.push(',');
                    out.push_str(&fmt_num(*v));
                }
                out.push('\n');
            }
            out
        }
        ReportFormat::Markdown => {
            let mut out = format!(
                "# Per-articulator CC ({} condition)\n\n| scheme |",
                report.condition
            );
            for name in CHANNEL_NAMES {
                out.push_str(&format!(" {name} |"));
            }
            out.push_str("\n|---|");
            for _ in CHANNEL_NAMES {
                out.push_str("---|");
            }
            out.push('\n');
            for s in &report.schemes {
                out.push_str(&format!("| {} |", s.scheme));
                for v in &s.cc_per_articulator {
                    out.push_str(&format!(" {v:.3} |"));
                }
                out.push('\n');
            }
            out
        }
    }
}

pub fn ttest_matrix(report: &EvalReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            serde_json::to_string_pretty(&serde_json::json!({
                "condition": report.condition,
                "significance": report.significance,
                "tests": report.ttests,
            }))
            .expect("report serializes")
                + "\n"
        }
        ReportFormat::Csv => {
            let mut out = String::from("scheme_a,scheme_b,speaker,t,p,dof,significant\n");
            for e in &report.ttests {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    e.scheme_a,
                    e.scheme_b,
                    e.speaker,
                    fmt_num(e.t),
                    fmt_num(e.p),
                    e.dof,
                    e.significant
                ));
            }
            out
        }
        ReportFormat::Markdown => {
            let mut out = format!(
                "# Paired t-tests ({} condition, significance {})\n\n\
                 | A | B | speaker | t | p | significant |\n|---|---|---|---|---|---|\n",
                report.condition, report.significance
            );
            for e in &report.ttests {
                out.push_str(&format!(
                    "| {} | {} | {} | {:.3} | {:.5} | {} |\n",
                    e.scheme_a, e.scheme_b, e.speaker, e.t, e.p, e.significant
                ));
            }
            out
        }
    }
}

pub fn per_speaker_table(report: &EvalReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            serde_json::to_string_pretty(&serde_json::json!({
                "condition": report.condition,
                "schemes": report.schemes,
            }))
            .expect("report serializes")
                + "\n"
        }
        ReportFormat::Csv => {
            let mut out = String::from("scheme,speaker,n_utterances,cc,rmse\n");
            for s in &report.schemes {
                for row in &s.per_speaker {
                    out.push_str(&format!(
                        "{},{},{},{},{}\n",
                        s.scheme,
                        row.speaker,
                        row.n_utterances,
                        fmt_num(row.cc),
                        fmt_num(row.rmse)
                    ));
                }
            }
            out
        }
        ReportFormat::Markdown => {
            let mut out = format!(
                "# Per-speaker scores ({} condition)\n\n\
                 | scheme | speaker | utterances | CC | RMSE |\n|---|---|---|---|---|\n",
                report.condition
            );
            for s in &report.schemes {
                for row in &s.per_speaker {
                    out.push_str(&format!(
                        "| {} | {} | {} | {:.4} | {:.4} |\n",
                        s.scheme, row.speaker, row.n_utterances, row.cc, row.rmse
                    ));
                }
            }
            out
        }
    }
}

/// Write the four report files in one format under `dir`, named
/// `table_overall.*`, `table_articulator.*`, `ttest_matrix.*`,
/// `per_speaker.*`, suffixed with the condition.
pub fn emit_report(report: &EvalReport, dir: &Path, format: ReportFormat) -> Result<Vec<String>> {
    let ext = format.extension();
    let mut written = Vec::new();
    for (stem, content) in [
        ("table_overall", table_overall(report, format)),
        ("table_articulator", table_articulator(report, format)),
        ("ttest_matrix", ttest_matrix(report, format)),
        ("per_speaker", per_speaker_table(report, format)),
    ] {
        let name = format!("{stem}_{}.{ext}", report.condition);
        io::write_atomic(&dir.join(&name), content.as_bytes())?;
        written.push(name);
    }
    Ok(written)
}
