//! End-to-end acceptance suite. Every criterion prints one PASS/FAIL line;
//! the process exits non-zero if any fails.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use image::GrayImage;
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use sgq::capture::{capture_simulate, print_simulate, trajectory, DomainId, PrintDomainModel, TrajectoryKind};
use sgq::config::PipelineConfig;
use sgq::dataset::{Dataset, ManifestEntry, Split};
use sgq::evaluation::{edc_curve, evaluate_samples, fnmr_at, isrr_at, pauc, EdcCurve, ErrorMetric, ScoredSample};
use sgq::features::nss::{aggd_fit, ggd_fit};
use sgq::graphic::{generate_reference, render};
use sgq::labels::read_labels;
use sgq::models::{fit_mvg, Epsilon, FrameView, ModelArtifact, NiqeScorer, QualityScorer, RandomScorer};
use sgq::oracle::{oracle_score, QualityLabel};
use sgq::pipeline::{run_all, RunLayout, StreamReport};
use sgq::stats::spearman;
use sgq::features::FeatureKind;
use tinycnn::{checkpoint, Conv2d, Dense, Layer, Tensor};

#[global_allocator]
static ALLOC: mimalloc::MiMalloc = mimalloc::MiMalloc;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

// --------------------------------------------------------------------------
// shared pipeline run

struct Run {
    dir: PathBuf,
    elapsed: Duration,
}

fn default_run(root: &Path) -> Result<Run, String> {
    let cfg = PipelineConfig::default();
    let dir = root.join("default");
    let t = Instant::now();
    run_all(&cfg, &dir, &|line| eprintln!("  [default run] {line}")).map_err(|e| e.to_string())?;
    Ok(Run {
        dir,
        elapsed: t.elapsed(),
    })
}

fn open(run: &Run) -> (Dataset, sgq::labels::LabelSet) {
    let layout = RunLayout::new(&run.dir);
    (Dataset::open(&layout.dataset()).unwrap(), read_labels(&layout.labels()).unwrap())
}

fn read_reports(run: &Run) -> BTreeMap<(String, String), sgq::evaluation::PaucReport> {
    sgq::pipeline::collect_reports(&RunLayout::new(&run.dir).eval_reports())
        .unwrap()
        .into_iter()
        .map(|r| ((r.model_id.clone(), r.split.clone()), r))
        .collect()
}

// --------------------------------------------------------------------------
// 1

fn ideal_observer_zero(run: &Run) -> Outcome {
    let (ds, labels) = open(run);
    let mut worst: f64 = 0.0;
    let mut splits = 0;
    for domain in ds.manifest.domains() {
        for split in [Split::Train, Split::Val, Split::Test] {
            let samples: Vec<ScoredSample> = ds
                .entries(domain, split)
                .iter()
                .map(|e| {
                    let l = labels.get(&e.frame_id).unwrap();
                    ScoredSample {
                        frame_id: e.frame_id.clone(),
                        q: l.s,
                        s: l.s,
                        label: l.label,
                    }
                })
                .collect();
            if samples.is_empty() {
                continue;
            }
            let e = evaluate_samples("ideal", "x", domain.as_str(), samples, 0.7, "h").unwrap();
            worst = worst.max(e.report.fnmr_delta.abs()).max(e.report.isrr_delta.abs());
            splits += 1;
        }
    }
    outcome(worst <= 1e-9, format!("max |delta| {worst:e} over {splits} labeled splits"))
}

// --------------------------------------------------------------------------
// 2

fn random_baseline() -> Outcome {
    let n = 10_000;
    let max = 0.7;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let blank = GrayImage::new(1, 1);
    let scorer = RandomScorer::new("random", 77);
    let samples: Vec<ScoredSample> = (0..n)
        .map(|i| {
            let id = format!("f{i:05}");
            let label = if rng.random_bool(0.3) {
                QualityLabel::LowQuality
            } else {
                QualityLabel::HighQuality
            };
            let q = scorer
                .score(&FrameView {
                    frame_id: &id,
                    image: &blank,
                })
                .unwrap();
            ScoredSample {
                frame_id: id,
                q,
                s: 0.0,
                label,
            }
        })
        .collect();
    let n_low = samples.iter().filter(|x| x.label.is_low()).count();
    let p = n_low as f64 / n as f64;

    let mut qs: Vec<f64> = samples.iter().map(|x| x.q).collect();
    qs.sort_by(f64::total_cmp);
    // thresholds inside the pAUC range keep at least 3000 accepted samples
    let mut worst_fnmr: f64 = 0.0;
    for k in (0..(max * n as f64) as usize).step_by(10) {
        worst_fnmr = worst_fnmr.max((fnmr_at(&samples, qs[k]) - p).abs());
    }

    let curve = edc_curve("random", &samples).unwrap();
    let (fnmr_pauc, _) = pauc(&curve, ErrorMetric::Fnmr, max).unwrap();
    let (isrr_pauc, _) = pauc(&curve, ErrorMetric::Isrr, max).unwrap();
    // E[FNMR] = p at every discard; E[ISRR] after discarding k of n is k/n.
    let m = (max * n as f64).round() as usize;
    let expected_isrr = (m * (m - 1)) as f64 / (2.0 * (n * n) as f64) / max;
    let ok = worst_fnmr <= 0.05 && (fnmr_pauc - p).abs() <= 0.05 && (isrr_pauc - expected_isrr).abs() <= 0.05;
    outcome(
        ok,
        format!(
            "prevalence {p:.4}; max |FNMR - p| {worst_fnmr:.4}; FNMR pAUC {fnmr_pauc:.4} vs {p:.4}; ISRR pAUC {isrr_pauc:.4} vs {expected_isrr:.4}"
        ),
    )
}

// --------------------------------------------------------------------------
// 3

fn hierarchy(run: &Run) -> Outcome {
    let reports = read_reports(run);
    let d = |id: &str| reports.get(&(id.to_string(), "test".to_string())).map(|r| r.fnmr_delta);
    let ids = ["cnn3x32-sgm", "lbp-sgm", "sharpness", "blur", "random"];
    let vals: Vec<Option<f64>> = ids.iter().map(|id| d(id)).collect();
    if vals.iter().any(Option::is_none) {
        return outcome(false, "missing in-domain reports");
    }
    let [cnn, lbp, sharp, blur, random] = [vals[0].unwrap(), vals[1].unwrap(), vals[2].unwrap(), vals[3].unwrap(), vals[4].unwrap()];
    // a < b with a 20% relative margin: a <= 0.8 b
    let below = |a: f64, b: f64| a <= 0.8 * b;
    let order = below(cnn, lbp)
        && below(lbp, sharp)
        && below(lbp, blur)
        && below(sharp, random)
        && below(blur, random);
    let fast = run.elapsed <= Duration::from_secs(30 * 60);
    outcome(
        order && fast,
        format!(
            "cnn {cnn:.4}, lbp {lbp:.4}, sharpness {sharp:.4}, blur {blur:.4}, random {random:.4}; ordering {}; runtime {:.0}s",
            if order { "holds" } else { "violated" },
            run.elapsed.as_secs_f64()
        ),
    )
}

// --------------------------------------------------------------------------
// 4

fn brute_force_curve(samples: &[ScoredSample]) -> Vec<(f64, f64, f64, f64)> {
    let n = samples.len();
    let mut thresholds: Vec<f64> = samples.iter().map(|x| x.q).collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    thresholds.push(f64::INFINITY);
    let n_high = samples.iter().filter(|x| !x.label.is_low()).count();
    thresholds
        .into_iter()
        .map(|t| {
            let rejected = samples.iter().filter(|x| x.q < t).count();
            let accepted = n - rejected;
            let low_acc = samples.iter().filter(|x| x.q >= t && x.label.is_low()).count();
            let high_rej = samples.iter().filter(|x| x.q < t && !x.label.is_low()).count();
            let fnmr = if accepted == 0 { 0.0 } else { low_acc as f64 / accepted as f64 };
            let isrr = if n_high == 0 { 0.0 } else { high_rej as f64 / n_high as f64 };
            (t, rejected as f64 / n as f64, fnmr, isrr)
        })
        .collect()
}

/// Midpoint sum on a grid aligned to 1/n: the error at discard x is the one
/// of the strictest threshold whose discard does not exceed x.
fn grid_pauc(points: &[(f64, f64, f64, f64)], n: usize, metric: ErrorMetric, max: f64) -> f64 {
    let per_sample = 10_000;
    let cells = (max * (n * per_sample) as f64).round() as usize;
    let width = 1.0 / (n * per_sample) as f64;
    let mut sum = 0.0;
    for c in 0..cells {
        let x = (c as f64 + 0.5) * width;
        let p = points.iter().rev().find(|p| p.1 <= x).unwrap();
        sum += match metric {
            ErrorMetric::Fnmr => p.2,
            ErrorMetric::Isrr => p.3,
        };
    }
    sum * width / max
}

fn edc_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut curve_mismatch = 0;
    let mut worst_pauc: f64 = 0.0;
    for _ in 0..500 {
        let n = 20;
        let levels = rng.random_range(3..=25);
        let samples: Vec<ScoredSample> = (0..n)
            .map(|i| ScoredSample {
                frame_id: format!("f{i}"),
                q: rng.random_range(0..levels) as f64 / levels as f64,
                s: 0.0,
                label: if rng.random_bool(0.4) {
                    QualityLabel::LowQuality
                } else {
                    QualityLabel::HighQuality
                },
            })
            .collect();
        let curve: EdcCurve = edc_curve("m", &samples).unwrap();
        let oracle = brute_force_curve(&samples);
        let same = curve.points.len() == oracle.len()
            && curve.points.iter().zip(&oracle).all(|(p, o)| {
                p.sigma.to_bits() == o.0.to_bits()
                    && p.discard.to_bits() == o.1.to_bits()
                    && p.fnmr.to_bits() == o.2.to_bits()
                    && p.isrr.to_bits() == o.3.to_bits()
            });
        if !same {
            curve_mismatch += 1;
        }
        for metric in [ErrorMetric::Fnmr, ErrorMetric::Isrr] {
            let (got, _) = pauc(&curve, metric, 0.7).unwrap();
            worst_pauc = worst_pauc.max((got - grid_pauc(&oracle, n, metric, 0.7)).abs());
        }
    }
    outcome(
        curve_mismatch == 0 && worst_pauc <= 1e-9,
        format!("{curve_mismatch}/500 curve mismatches; max pAUC error {worst_pauc:e}"),
    )
}

// --------------------------------------------------------------------------
// 5

fn hand_worked() -> Outcome {
    let labels = ["L", "L", "H", "H", "H", "H"];
    let q = [0.1, 0.6, 0.2, 0.7, 0.8, 0.9];
    let samples: Vec<ScoredSample> = labels
        .iter()
        .zip(q)
        .enumerate()
        .map(|(i, (l, q))| ScoredSample {
            frame_id: format!("f{i}"),
            q,
            s: 0.0,
            label: if *l == "L" {
                QualityLabel::LowQuality
            } else {
                QualityLabel::HighQuality
            },
        })
        .collect();
    // accepted {.6 L, .7, .8, .9}: 1 of 4 is low; rejected highs {.2}: 1 of 4
    let (f, i) = (fnmr_at(&samples, 0.5), isrr_at(&samples, 0.5));
    outcome(f == 0.25 && i == 0.25, format!("FNMR {f}, ISRR {i}"))
}

// --------------------------------------------------------------------------
// 6

const FD_STEP: f64 = 1e-3;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

fn kink_free_input(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let mut values: Vec<f64> = (0..n).map(|i| (i as f64 + 1.0) * 0.01).collect();
    values.shuffle(rng);
    let data = values.into_iter().map(|v| if rng.random_bool(0.5) { v } else { -v }).collect();
    Tensor::from_vec(shape, data)
}

fn layer_gradient_error(mut layer: Layer<f64>, x: Tensor<f64>, rng: &mut ChaCha8Rng) -> f64 {
    let y = layer.forward(&x);
    let r: Vec<f64> = (0..y.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let loss = |l: &Layer<f64>, x: &Tensor<f64>| -> f64 { l.forward(x).data().iter().zip(&r).map(|(a, b)| a * b).sum() };
    let mut grads: Vec<Vec<f64>> = layer.params().iter().map(|p| vec![0.0; p.len()]).collect();
    let grad_in = layer
        .backward(&x, &y, &Tensor::from_vec(y.shape(), r.clone()), &mut grads, true)
        .unwrap();
    let mut worst: f64 = 0.0;
    let mut xp = x.clone();
    for i in 0..x.len() {
        let v = xp.data()[i];
        xp.data_mut()[i] = v + FD_STEP;
        let up = loss(&layer, &xp);
        xp.data_mut()[i] = v - FD_STEP;
        let down = loss(&layer, &xp);
        xp.data_mut()[i] = v;
        worst = worst.max(rel_err(grad_in.data()[i], (up - down) / (2.0 * FD_STEP)));
    }
    for (t, g) in grads.iter().enumerate() {
        for i in 0..g.len() {
            let v = layer.params()[t][i];
            layer.params_mut()[t][i] = v + FD_STEP;
            let up = loss(&layer, &x);
            layer.params_mut()[t][i] = v - FD_STEP;
            let down = loss(&layer, &x);
            layer.params_mut()[t][i] = v;
            worst = worst.max(rel_err(g[i], (up - down) / (2.0 * FD_STEP)));
        }
    }
    worst
}

fn gradient_suite() -> Outcome {
    type Make = fn(&mut ChaCha8Rng) -> (Layer<f64>, Vec<usize>);
    fn conv(rng: &mut ChaCha8Rng, k: usize) -> (Layer<f64>, Vec<usize>) {
        let (ic, oc) = (rng.random_range(1..=3), rng.random_range(1..=3));
        let mut c = Conv2d::he(k, ic, oc, rng);
        c.bias.iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
        let shape = vec![rng.random_range(1..=2), rng.random_range(3..=6), rng.random_range(3..=6), ic];
        (Layer::Conv2d(c), shape)
    }
    let suites: [(&str, Make); 7] = [
        ("conv3x3", |r| conv(r, 3)),
        ("conv1x1", |r| conv(r, 1)),
        ("dense", |r| {
            let (i, o) = (r.random_range(1..=8), r.random_range(1..=4));
            let mut d = Dense::init(i, o, 2.0, r);
            d.bias.iter_mut().for_each(|b| *b = r.random_range(-0.5..0.5));
            (Layer::Dense(d), vec![r.random_range(1..=3), i])
        }),
        ("relu", |r| (Layer::Relu, vec![r.random_range(1..=2), r.random_range(2..=5), r.random_range(2..=5), 2])),
        ("maxpool", |r| {
            let h = 2 * r.random_range(1..=3) + r.random_range(0..=1);
            let w = 2 * r.random_range(1..=3) + r.random_range(0..=1);
            (Layer::MaxPool2, vec![r.random_range(1..=2), h, w, r.random_range(1..=3)])
        }),
        ("gap", |r| {
            (Layer::GlobalAvgPool, vec![r.random_range(1..=2), r.random_range(1..=4), r.random_range(1..=4), 3])
        }),
        ("flatten", |r| {
            (Layer::Flatten, vec![r.random_range(1..=2), r.random_range(1..=4), r.random_range(1..=4), 2])
        }),
    ];
    let t = Instant::now();
    let mut worst: Vec<(String, f64)> = Vec::new();
    for (name, make) in suites {
        let mut rng = ChaCha8Rng::seed_from_u64(name.len() as u64 * 131);
        let mut w: f64 = 0.0;
        for _ in 0..20 {
            let (layer, shape) = make(&mut rng);
            let x = kink_free_input(&mut rng, &shape);
            w = w.max(layer_gradient_error(layer, x, &mut rng));
        }
        worst.push((name.to_string(), w));
    }
    let secs = t.elapsed().as_secs_f64();
    let ok = worst.iter().all(|(_, w)| *w < 1e-4) && secs < 60.0;
    let detail: Vec<String> = worst.iter().map(|(n, w)| format!("{n} {w:.1e}")).collect();
    outcome(ok, format!("{}; {secs:.2}s", detail.join(", ")))
}

// --------------------------------------------------------------------------
// 7

/// |X| = (G)^(1/α) · scale with G ~ Gamma(1/α, 1) has the GGD shape α.
fn ggd_draw(rng: &mut ChaCha8Rng, gamma: &Gamma<f64>, alpha: f64, scale: f64) -> f64 {
    gamma.sample(rng).powf(1.0 / alpha) * scale
}

fn ggd_recovery() -> Outcome {
    let n = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut parts = Vec::new();
    let mut ok = true;
    for alpha in [0.7, 1.0, 2.0, 4.0] {
        let gamma = Gamma::new(1.0 / alpha, 1.0).unwrap();
        let sym: Vec<f64> = (0..n)
            .map(|_| {
                let v = ggd_draw(&mut rng, &gamma, alpha, 1.3);
                if rng.random_bool(0.5) { v } else { -v }
            })
            .collect();
        // asymmetric: side chosen with probability proportional to its scale
        let (sl, sr) = (0.8, 1.6);
        let asym: Vec<f64> = (0..n)
            .map(|_| {
                if rng.random_bool(sl / (sl + sr)) {
                    -ggd_draw(&mut rng, &gamma, alpha, sl)
                } else {
                    ggd_draw(&mut rng, &gamma, alpha, sr)
                }
            })
            .collect();
        let g = ggd_fit(&sym).unwrap().alpha;
        let a = aggd_fit(&asym).unwrap().alpha;
        let within = |est: f64| (est - alpha).abs() <= 0.15 * alpha;
        ok &= within(g) && within(a);
        parts.push(format!("α={alpha}: ggd {g:.3}, aggd {a:.3}"));
    }
    let normal: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let ga = ggd_fit(&normal).unwrap().alpha;
    ok &= (1.8..=2.2).contains(&ga);
    parts.push(format!("gaussian {ga:.3}"));
    outcome(ok, parts.join("; "))
}

// --------------------------------------------------------------------------
// 8

fn mahalanobis_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let d = rng.random_range(2..=12);
        let n = d + rng.random_range(5..40);
        let mix = DMatrix::<f64>::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        let mu: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let z = DVector::<f64>::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
                let v = &mix * z;
                (0..d).map(|j| v[j] + mu[j]).collect()
            })
            .collect();
        let model = fit_mvg(&rows, Epsilon::Relative(1e-3)).unwrap();
        let scorer = NiqeScorer {
            model_id: "niqe".into(),
            feature_kind: FeatureKind::Brisque36,
            crop: None,
            model: model.clone(),
            cutoff: 0.95,
        };
        let f: Vec<f64> = (0..d).map(|_| rng.random_range(-5.0..5.0)).collect();

        let mean = DVector::<f64>::from_fn(d, |j, _| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64);
        let mut cov = DMatrix::<f64>::zeros(d, d);
        for r in &rows {
            let c = DVector::from_column_slice(r) - &mean;
            cov += &c * c.transpose();
        }
        cov /= (n - 1) as f64;
        let eps = 1e-3 * cov.trace() / d as f64;
        let reg = cov + DMatrix::identity(d, d) * eps;
        let diff = DVector::from_column_slice(&f) - &mean;
        let x = reg.lu().solve(&diff).unwrap();
        let expected = diff.dot(&x).sqrt();
        let got = scorer.distance(&f);
        worst = worst.max((got - expected).abs() / expected.max(1.0));
    }
    outcome(worst <= 1e-9, format!("max error {worst:e} over 100 triples"))
}

// --------------------------------------------------------------------------
// 9

fn split_hygiene(run: &Run) -> Outcome {
    let layout = RunLayout::new(&run.dir);
    let text = fs::read_to_string(layout.dataset().join("manifest.jsonl")).unwrap();
    let mut splits: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    let mut domains = BTreeSet::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let e: ManifestEntry = serde_json::from_str(line).unwrap();
        domains.insert(e.domain_id.as_str());
        splits.entry(e.graphic_id).or_default().insert(format!("{:?}", e.split));
    }
    let spanning: Vec<&String> = splits.iter().filter(|(_, s)| s.len() > 1).map(|(g, _)| g).collect();
    outcome(
        spanning.is_empty() && domains.len() == 2,
        format!(
            "{} graphics over {} domains; {} span splits",
            splits.len(),
            domains.len(),
            spanning.len()
        ),
    )
}

// --------------------------------------------------------------------------
// 10

fn degradation_monotonicity(run: &Run) -> Outcome {
    let extra = [0.0, 0.5, 1.0, 1.5, 2.0, 3.0];
    let frames = 100;
    let mut sums = vec![0.0; extra.len()];
    let model = PrintDomainModel::preset(DomainId::DomainADigital);
    for i in 0..frames {
        let reference = generate_reference(1000 + i as u64, 33, 4, 0.5).unwrap();
        let printed = print_simulate(&render(&reference), &model, 5000 + i as u64);
        let base = trajectory(TrajectoryKind::Steady, 1, 9000 + i as u64)[0];
        for (k, add) in extra.iter().enumerate() {
            let mut p = base;
            p.defocus_sigma += add;
            let img = capture_simulate(&printed, &p, 13 + i as u64).unwrap();
            sums[k] += oracle_score(&img, &reference).unwrap();
        }
    }
    let means: Vec<f64> = sums.iter().map(|s| s / frames as f64).collect();
    let monotone = means.windows(2).all(|w| w[1] <= w[0] + 0.01);

    let (ds, labels) = open(run);
    let rhos: Vec<f64> = ds
        .sessions
        .iter()
        .filter(|s| s.trajectory_kind == TrajectoryKind::FocusSweep)
        .map(|s| {
            let sv: Vec<f64> = s.frames.iter().map(|f| labels.get(&f.frame_id).unwrap().s).collect();
            let idx: Vec<f64> = (0..sv.len()).map(|i| i as f64).collect();
            spearman(&sv, &idx)
        })
        .collect();
    let min_rho = rhos.iter().cloned().fold(f64::INFINITY, f64::min);
    let mean_rho = rhos.iter().sum::<f64>() / rhos.len() as f64;
    let means_txt: Vec<String> = means.iter().map(|m| format!("{m:.4}")).collect();
    outcome(
        monotone && !rhos.is_empty() && min_rho > 0.8,
        format!(
            "mean s vs added defocus [{}]; focus_sweep Spearman min {min_rho:.3}, mean {mean_rho:.3} over {} sessions",
            means_txt.join(", "),
            rhos.len()
        ),
    )
}

// --------------------------------------------------------------------------
// 11

fn probe_integrity(run: &Run) -> Outcome {
    let layout = RunLayout::new(&run.dir);
    let artifact = ModelArtifact::load(&layout.models().join("cnn3x32-sgm.json")).unwrap();
    let recorded = artifact.metadata.get("param_sha256").and_then(|v| v.as_str()).unwrap_or("").to_string();
    let ckpt = artifact.metadata.get("checkpoint").and_then(|v| v.as_str()).unwrap_or("");
    let now = checkpoint::load(&layout.models().join(ckpt)).unwrap().param_hash();
    let json: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(layout.reports().join("probe_sweep").join("probe_sweep.json")).unwrap(),
    )
    .unwrap();
    let during = json["backbone_sha256"].as_str().unwrap_or("").to_string();
    let rows: Vec<sgq::probe::SweepRow> = serde_json::from_value(json["rows"].clone()).unwrap();
    let full = rows.iter().find(|r| r.block.is_none());
    let probes: Vec<_> = rows.iter().filter(|r| r.block.is_some()).collect();
    let hash_ok = recorded == now && now == during;
    let (margin_ok, detail) = match full {
        Some(f) => {
            let best_probe = probes.iter().map(|p| p.in_domain.fnmr_delta).fold(f64::INFINITY, f64::min);
            let cross: Vec<String> =
                rows.iter().map(|r| format!("{} {:.4}", r.model_id, r.cross_domain.fnmr_delta)).collect();
            (
                probes.iter().all(|p| f.in_domain.fnmr_delta <= p.in_domain.fnmr_delta + 0.02),
                format!(
                    "full in-domain {:.4}, best probe {best_probe:.4}; cross-domain (reported only): {}",
                    f.in_domain.fnmr_delta,
                    cross.join(", ")
                ),
            )
        }
        None => (false, "no full-model row".to_string()),
    };
    outcome(
        hash_ok && rows.len() == 7 && margin_ok,
        format!("backbone hash {}; {} rows; {detail}", if hash_ok { "unchanged" } else { "CHANGED" }, rows.len()),
    )
}

// --------------------------------------------------------------------------
// 12

fn tree_files(dir: &Path, out: &mut Vec<PathBuf>) {
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            tree_files(&p, out);
        } else {
            out.push(p);
        }
    }
}

fn compared_artifacts(run_dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let layout = RunLayout::new(run_dir);
    let mut files = vec![layout.dataset().join("manifest.jsonl")];
    tree_files(&layout.labels(), &mut files);
    tree_files(&layout.models(), &mut files);
    tree_files(&layout.reports(), &mut files);
    files
        .into_iter()
        .filter(|p| {
            let name = p.to_string_lossy();
            let ext = p.extension().and_then(|e| e.to_str()).unwrap_or("");
            !name.ends_with("timings.json") && (ext == "csv" || ext == "json" || ext == "jsonl")
        })
        .map(|p| (p.strip_prefix(run_dir).unwrap().to_path_buf(), fs::read(&p).unwrap()))
        .collect()
}

fn determinism(root: &Path) -> Outcome {
    let mut cfg = PipelineConfig::default();
    cfg.dataset.graphics_per_domain = 24;
    cfg.dataset.seed = 12;
    cfg.models.cnn.input_size = 64;
    cfg.models.cnn.channels = 8;
    cfg.models.cnn.hidden = 16;
    cfg.models.cnn.max_epochs = 3;
    cfg.models.probe.max_epochs = 2;
    let mut runs = Vec::new();
    for k in 0..2 {
        let dir = root.join(format!("det{k}"));
        if let Err(e) = run_all(&cfg, &dir, &|_| {}) {
            return outcome(false, format!("run {k} failed: {e}"));
        }
        runs.push(compared_artifacts(&dir));
    }
    let keys: BTreeSet<&PathBuf> = runs[0].keys().chain(runs[1].keys()).collect();
    let differing: Vec<String> = keys
        .iter()
        .filter(|k| runs[0].get(**k) != runs[1].get(**k))
        .map(|k| k.display().to_string())
        .collect();
    outcome(
        differing.is_empty() && !runs[0].is_empty(),
        format!("{} artifacts compared; differing: {:?}", keys.len(), differing),
    )
}

// --------------------------------------------------------------------------
// 13

fn timeline(run: &Run) -> Outcome {
    let path = RunLayout::new(&run.dir).reports().join("stream").join("stream_summary.json");
    let report: StreamReport = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    let sweeps: Vec<_> = report
        .sessions
        .iter()
        .filter(|s| s.trajectory_kind == TrajectoryKind::FocusSweep)
        .collect();
    let positive = sweeps.iter().filter(|s| s.spearman_q_index > 0.0).count();
    let share = positive as f64 / sweeps.len().max(1) as f64;
    outcome(
        !sweeps.is_empty() && share >= 0.9,
        format!("{positive}/{} focus_sweep test sessions with positive Spearman(q, index)", sweeps.len()),
    )
}

// --------------------------------------------------------------------------

fn main() {
    let scratch = tempfile::tempdir().unwrap();
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut record = |n: u32, name: &'static str, o: Outcome| {
        println!("criterion {n:>2} {} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((n, name, o));
    };

    record(2, "random baseline", random_baseline());
    record(4, "EDC exactness", edc_exactness());
    record(5, "hand-worked FNMR/ISRR", hand_worked());
    record(6, "gradient suite", gradient_suite());
    record(7, "GGD/AGGD recovery", ggd_recovery());
    record(8, "Mahalanobis equivalence", mahalanobis_equivalence());

    eprintln!("running the default pipeline ...");
    match default_run(scratch.path()) {
        Ok(run) => {
            record(1, "ideal observer zero", ideal_observer_zero(&run));
            record(3, "paradigm hierarchy", hierarchy(&run));
            record(9, "split hygiene", split_hygiene(&run));
            record(10, "degradation monotonicity", degradation_monotonicity(&run));
            record(11, "probe-sweep integrity", probe_integrity(&run));
            record(13, "timeline reproduction", timeline(&run));
        }
        Err(e) => {
            for (n, name) in [
                (1, "ideal observer zero"),
                (3, "paradigm hierarchy"),
                (9, "split hygiene"),
                (10, "degradation monotonicity"),
                (11, "probe-sweep integrity"),
                (13, "timeline reproduction"),
            ] {
                record(n, name, outcome(false, format!("default pipeline failed: {e}")));
            }
        }
    }
    record(12, "determinism", determinism(scratch.path()));

    results.sort_by_key(|r| r.0);
    let failed: Vec<u32> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!("\nsummary:");
    for (n, name, o) in &results {
        println!("  {n:>2} {:<26} {}", name, if o.pass { "PASS" } else { "FAIL" });
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
