//! Error-versus-discard evaluation: FNMR and ISRR at a gate threshold σ,
//! the EDC sweep, partial areas and their excess over the ideal observer.

use std::fmt::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::labels::LabelSet;
use crate::models::{score_all, FrameView, QualityScorer};
use crate::oracle::QualityLabel;
use crate::svg::{LineChart, Series};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredSample {
    pub frame_id: String,
    pub q: f64,
    pub s: f64,
    pub label: QualityLabel,
}

impl ScoredSample {
    fn is_low(&self) -> bool {
        self.label.is_low()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdcPoint {
    pub sigma: f64,
    pub discard: f64,
    pub fnmr: f64,
    pub isrr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdcCurve {
    pub model_id: String,
    pub n_samples: usize,
    pub points: Vec<EdcPoint>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorMetric {
    Fnmr,
    Isrr,
}

/// Share of accepted samples (q ≥ σ) that are low quality; 0 when nothing
/// is accepted.
pub fn fnmr_at(samples: &[ScoredSample], sigma: f64) -> f64 {
    let accepted = samples.iter().filter(|x| x.q >= sigma).count();
    if accepted == 0 {
        return 0.0;
    }
    let low = samples.iter().filter(|x| x.q >= sigma && x.is_low()).count();
    low as f64 / accepted as f64
}

/// Share of high-quality samples rejected (q < σ); 0 when there are none.
pub fn isrr_at(samples: &[ScoredSample], sigma: f64) -> f64 {
    let high = samples.iter().filter(|x| !x.is_low()).count();
    if high == 0 {
        return 0.0;
    }
    let rejected = samples.iter().filter(|x| x.q < sigma && !x.is_low()).count();
    rejected as f64 / high as f64
}

pub fn discard_at(samples: &[ScoredSample], sigma: f64) -> f64 {
    samples.iter().filter(|x| x.q < sigma).count() as f64 / samples.len() as f64
}

/// One point per distinct q (σ = that value, so discard starts at 0) plus a
/// closing σ = +∞ point at discard 1.
pub fn edc_curve(model_id: &str, samples: &[ScoredSample]) -> Result<EdcCurve> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("cannot build an EDC curve from no samples".into()));
    }
    if let Some(x) = samples.iter().find(|x| x.q.is_nan()) {
        return Err(Error::Numeric(format!("frame {} has a NaN quality score", x.frame_id)));
    }
    let n = samples.len();
    let n_low = samples.iter().filter(|x| x.is_low()).count();
    let n_high = n - n_low;
    let mut order: Vec<&ScoredSample> = samples.iter().collect();
    order.sort_by(|a, b| a.q.total_cmp(&b.q));

    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let mut points = Vec::new();
    // counts over the discarded prefix order[..i]
    let (mut low_below, mut high_below) = (0usize, 0usize);
    let mut i = 0;
    while i < n {
        let sigma = order[i].q;
        points.push(EdcPoint {
            sigma,
            discard: ratio(i, n),
            fnmr: ratio(n_low - low_below, n - i),
            isrr: ratio(high_below, n_high),
        });
        while i < n && order[i].q == sigma {
            if order[i].is_low() {
                low_below += 1;
            } else {
                high_below += 1;
            }
            i += 1;
        }
    }
    points.push(EdcPoint {
        sigma: f64::INFINITY,
        discard: 1.0,
        fnmr: 0.0,
        isrr: ratio(n_high, n_high),
    });
    Ok(EdcCurve {
        model_id: model_id.to_string(),
        n_samples: n,
        points,
    })
}

/// EDC of the ideal observer, which ranks by the oracle score itself.
pub fn ideal_curve(samples: &[ScoredSample]) -> Result<EdcCurve> {
    let swapped: Vec<ScoredSample> = samples.iter().map(|x| ScoredSample { q: x.s, ..x.clone() }).collect();
    edc_curve("ideal", &swapped)
}

/// Area under the right-continuous step curve over `[0, max_discard]`,
/// returned as `(normalized, raw)` with normalized = raw / max_discard.
pub fn pauc(curve: &EdcCurve, metric: ErrorMetric, max_discard: f64) -> Result<(f64, f64)> {
    if !(max_discard > 0.0 && max_discard <= 1.0) {
        return Err(Error::InvalidArgument(format!("pAUC range [0, {max_discard}] is not within (0, 1]")));
    }
    let mut raw = 0.0;
    for w in curve.points.windows(2) {
        let (a, b) = (w[0].discard, w[1].discard.min(max_discard));
        if a >= max_discard {
            break;
        }
        let e = match metric {
            ErrorMetric::Fnmr => w[0].fnmr,
            ErrorMetric::Isrr => w[0].isrr,
        };
        raw += e * (b - a);
    }
    Ok((raw / max_discard, raw))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PaucReport {
    pub model_id: String,
    pub split: String,
    pub domain_id: String,
    pub n_samples: usize,
    pub n_low: usize,
    pub range: [f64; 2],
    pub fnmr_pauc: f64,
    pub isrr_pauc: f64,
    pub ideal_fnmr_pauc: f64,
    pub ideal_isrr_pauc: f64,
    pub fnmr_delta: f64,
    pub isrr_delta: f64,
    /// Unnormalized areas, in the same order as above.
    pub fnmr_pauc_raw: f64,
    pub isrr_pauc_raw: f64,
    pub ideal_fnmr_pauc_raw: f64,
    pub ideal_isrr_pauc_raw: f64,
    pub config_hash: String,
}

impl PaucReport {
    pub fn to_json(&self) -> String {
        io::to_json_pretty(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Data(format!("malformed pAUC report: {e}")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub samples: Vec<ScoredSample>,
    pub curve: EdcCurve,
    pub ideal: EdcCurve,
    pub report: PaucReport,
}

/// Curves and report from already scored samples.
pub fn evaluate_samples(
    model_id: &str,
    split: &str,
    domain_id: &str,
    samples: Vec<ScoredSample>,
    max_discard: f64,
    config_hash: &str,
) -> Result<Evaluation> {
    let curve = edc_curve(model_id, &samples)?;
    let ideal = ideal_curve(&samples)?;
    let (fnmr, fnmr_raw) = pauc(&curve, ErrorMetric::Fnmr, max_discard)?;
    let (isrr, isrr_raw) = pauc(&curve, ErrorMetric::Isrr, max_discard)?;
    let (ideal_fnmr, ideal_fnmr_raw) = pauc(&ideal, ErrorMetric::Fnmr, max_discard)?;
    let (ideal_isrr, ideal_isrr_raw) = pauc(&ideal, ErrorMetric::Isrr, max_discard)?;
    let report = PaucReport {
        model_id: model_id.to_string(),
        split: split.to_string(),
        domain_id: domain_id.to_string(),
        n_samples: samples.len(),
        n_low: samples.iter().filter(|x| x.is_low()).count(),
        range: [0.0, max_discard],
        fnmr_pauc: fnmr,
        isrr_pauc: isrr,
        ideal_fnmr_pauc: ideal_fnmr,
        ideal_isrr_pauc: ideal_isrr,
        fnmr_delta: fnmr - ideal_fnmr,
        isrr_delta: isrr - ideal_isrr,
        fnmr_pauc_raw: fnmr_raw,
        isrr_pauc_raw: isrr_raw,
        ideal_fnmr_pauc_raw: ideal_fnmr_raw,
        ideal_isrr_pauc_raw: ideal_isrr_raw,
        config_hash: config_hash.to_string(),
    };
    Ok(Evaluation {
        samples,
        curve,
        ideal,
        report,
    })
}

/// Scores `frames` (in parallel) and joins each with its label.
pub fn score_samples(scorer: &dyn QualityScorer, frames: &[FrameView<'_>], labels: &LabelSet) -> Result<Vec<ScoredSample>> {
    let q = score_all(scorer, frames)?;
    frames
        .iter()
        .zip(q)
        .map(|(f, q)| {
            let l = labels.get(f.frame_id)?;
            Ok(ScoredSample {
                frame_id: f.frame_id.to_string(),
                q,
                s: l.s,
                label: l.label,
            })
        })
        .collect()
}

pub fn evaluate_model(
    scorer: &dyn QualityScorer,
    split: &str,
    domain_id: &str,
    frames: &[FrameView<'_>],
    labels: &LabelSet,
    max_discard: f64,
) -> Result<Evaluation> {
    let samples = score_samples(scorer, frames, labels)?;
    evaluate_samples(scorer.model_id(), split, domain_id, samples, max_discard, &labels.meta.config_hash)
}

/// Expected normalized `(fnmr, isrr)` pAUC of a scorer that ranks uniformly
/// at random, from the label counts alone.
pub fn random_expected_pauc(n: usize, n_low: usize, max_discard: f64) -> (f64, f64) {
    let p = n_low as f64 / n as f64;
    // expected ISRR after discarding k of n is k / n
    let mut isrr = 0.0;
    for k in 0..n {
        let a = k as f64 / n as f64;
        if a >= max_discard {
            break;
        }
        let b = ((k + 1) as f64 / n as f64).min(max_discard);
        isrr += a * (b - a);
    }
    (p, isrr / max_discard)
}

/// `sigma,discard,fnmr,isrr`
pub fn curve_csv(curve: &EdcCurve) -> String {
    let mut out = String::from("sigma,discard,fnmr,isrr\n");
    for p in &curve.points {
        let _ = writeln!(out, "{:e},{:.9},{:.9},{:.9}", p.sigma, p.discard, p.fnmr, p.isrr);
    }
    out
}

fn step_points(curve: &EdcCurve, metric: ErrorMetric) -> Vec<(f64, f64)> {
    curve
        .points
        .iter()
        .map(|p| {
            (
                p.discard,
                match metric {
                    ErrorMetric::Fnmr => p.fnmr,
                    ErrorMetric::Isrr => p.isrr,
                },
            )
        })
        .collect()
}

/// Model vs ideal observer vs the expected random curve for one metric.
pub fn edc_svg(eval: &Evaluation, metric: ErrorMetric, max_discard: f64) -> String {
    let name = match metric {
        ErrorMetric::Fnmr => "FNMR",
        ErrorMetric::Isrr => "ISRR",
    };
    let mut chart = LineChart::new(
        &format!("{name} EDC: {} ({})", eval.report.model_id, eval.report.split),
        "Fraction of samples discarded",
        name,
    );
    chart.x_range = (0.0, 1.0);
    chart.y_range = (0.0, 1.0);
    chart.x_marker = Some(max_discard);
    let p = eval.report.n_low as f64 / eval.report.n_samples as f64;
    let random = match metric {
        ErrorMetric::Fnmr => vec![(0.0, p), (1.0, p)],
        ErrorMetric::Isrr => vec![(0.0, 0.0), (1.0, 1.0)],
    };
    chart.series.push(Series::new(&eval.report.model_id, "#1f77b4", step_points(&eval.curve, metric)).stepped());
    chart.series.push(Series::new("ideal", "#2ca02c", step_points(&eval.ideal, metric)).stepped());
    chart.series.push(Series::new("random (expected)", "#7f7f7f", random));
    chart.render()
}

/// `<stem>.curve.csv`, `<stem>.ideal.csv`, `<stem>.report.json` and one SVG
/// per metric.
pub fn write_evaluation(dir: &Path, stem: &str, eval: &Evaluation) -> Result<()> {
    let range = eval.report.range[1];
    io::write_text(&dir.join(format!("{stem}.curve.csv")), &curve_csv(&eval.curve))?;
    io::write_text(&dir.join(format!("{stem}.ideal.csv")), &curve_csv(&eval.ideal))?;
    io::write_text(&dir.join(format!("{stem}.report.json")), &eval.report.to_json())?;
    io::write_text(&dir.join(format!("{stem}.fnmr.svg")), &edc_svg(eval, ErrorMetric::Fnmr, range))?;
    io::write_text(&dir.join(format!("{stem}.isrr.svg")), &edc_svg(eval, ErrorMetric::Isrr, range))
}
