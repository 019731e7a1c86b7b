//! Synthetic subtle-lesion task and a pixel-space logistic-regression probe.
//!
//! Each image holds bright square distractors on a black background. Positive
//! images also hold one dimmer target square near the centre. Every image is
//! annotated with the (possibly empty) target location, so Cut&Remain can be
//! applied to both classes.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::augment::{AugmentedSample, Label, Method};
use crate::batch::{compose, ComposeConfig, InMemoryImages, Materializer};
use crate::dataset::{AnnotatedSample, Annotation, DatasetManifest, ImageSize, Split};
use crate::error::{Error, Result};
use crate::geometry::{AspectRatioSet, BoundingBox, PixelRegion};
use crate::image::ImageTensor;
use crate::metrics::{auc_roc, MeanStd};
use crate::par::{self, Execution};
use crate::seed::{self, Stream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTask {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    /// Inclusive range of distractors per image.
    pub distractors: (usize, usize),
    pub distractor_side: usize,
    pub distractor_intensity: f32,
    pub target_side: usize,
    /// Target intensity above the 0.0 background.
    pub target_delta: f32,
    /// Fraction of positive images.
    pub balance: f64,
    /// Maximum target offset from the image centre along each axis.
    pub jitter: usize,
}

impl Default for SyntheticTask {
    fn default() -> Self {
        Self {
            width: 32,
            height: 32,
            channels: 1,
            distractors: (6, 10),
            distractor_side: 4,
            distractor_intensity: 0.8,
            target_side: 4,
            target_delta: 0.55,
            balance: 0.5,
            jitter: 6,
        }
    }
}

impl SyntheticTask {
    pub fn validate(&self) -> Result<()> {
        let min_dim = self.width.min(self.height);
        if self.channels == 0 || min_dim == 0 {
            return Err(Error::invalid("task image dimensions must be positive"));
        }
        if self.target_side == 0 || self.target_side + 2 * self.jitter > min_dim {
            return Err(Error::invalid(format!(
                "target side {} with jitter {} does not fit a {}x{} image",
                self.target_side, self.jitter, self.width, self.height
            )));
        }
        if self.distractor_side == 0 || self.distractor_side > min_dim {
            return Err(Error::invalid(format!(
                "distractor side {} does not fit a {}x{} image",
                self.distractor_side, self.width, self.height
            )));
        }
        if self.distractors.0 > self.distractors.1 {
            return Err(Error::invalid(format!(
                "distractor range {:?} is empty",
                self.distractors
            )));
        }
        for (name, v) in [
            ("target delta", self.target_delta),
            ("distractor intensity", self.distractor_intensity),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!("{name} {v} outside [0, 1]")));
            }
        }
        if !(0.0..=1.0).contains(&self.balance) {
            return Err(Error::invalid(format!(
                "balance {} outside [0, 1]",
                self.balance
            )));
        }
        Ok(())
    }

    fn target_region<R: Rng>(&self, rng: &mut R) -> PixelRegion {
        let j = self.jitter as i64;
        let base_x = ((self.width - self.target_side) / 2) as i64;
        let base_y = ((self.height - self.target_side) / 2) as i64;
        let x0 =
            (base_x + rng.random_range(-j..=j)).clamp(0, (self.width - self.target_side) as i64);
        let y0 =
            (base_y + rng.random_range(-j..=j)).clamp(0, (self.height - self.target_side) as i64);
        let (x0, y0) = (x0 as usize, y0 as usize);
        PixelRegion {
            x0,
            y0,
            x1: x0 + self.target_side,
            y1: y0 + self.target_side,
        }
    }
}

fn overlaps(a: &PixelRegion, b: &PixelRegion) -> bool {
    a.x0 < b.x1 && b.x0 < a.x1 && a.y0 < b.y1 && b.y0 < a.y1
}

/// A generated dataset together with its pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticData {
    pub manifest: DatasetManifest,
    pub images: Vec<ImageTensor>,
}

impl SyntheticData {
    pub fn labels(&self) -> Vec<bool> {
        self.manifest
            .samples
            .iter()
            .map(|s| s.label.is_positive(1))
            .collect()
    }
}

const PLACEMENT_ATTEMPTS: usize = 10_000;

/// Generates `n` images; exactly `round(n · balance)` are positive.
pub fn generate_task(task: &SyntheticTask, n: usize, seed: u64) -> Result<SyntheticData> {
    task.validate()?;
    let positives = (n as f64 * task.balance).round() as usize;
    let mut is_positive: Vec<bool> = (0..n).map(|i| i < positives).collect();
    is_positive.shuffle(&mut seed::derived_rng(seed, Stream::Generator, u64::MAX));

    let (w, h, c) = (task.width, task.height, task.channels);
    let mut samples = Vec::with_capacity(n);
    let mut images = Vec::with_capacity(n);
    for (i, &positive) in is_positive.iter().enumerate() {
        let mut rng = seed::derived_rng(seed, Stream::Generator, i as u64);
        let target = task.target_region(&mut rng);
        let mut values = vec![0.0f32; w * h * c];
        let mut paint = |r: &PixelRegion, v: f32| {
            for y in r.y0..r.y1 {
                for x in r.x0..r.x1 {
                    for ch in 0..c {
                        let p = &mut values[(y * w + x) * c + ch];
                        *p = p.max(v);
                    }
                }
            }
        };
        let count = rng.random_range(task.distractors.0..=task.distractors.1);
        let s = task.distractor_side;
        for _ in 0..count {
            let region = (0..PLACEMENT_ATTEMPTS)
                .map(|_| {
                    let x0 = rng.random_range(0..=w - s);
                    let y0 = rng.random_range(0..=h - s);
                    PixelRegion {
                        x0,
                        y0,
                        x1: x0 + s,
                        y1: y0 + s,
                    }
                })
                .find(|r| !overlaps(r, &target))
                .ok_or_else(|| Error::invalid("no room for a distractor outside the target"))?;
            paint(&region, task.distractor_intensity);
        }
        if positive {
            paint(&target, task.target_delta);
        }
        let side = task.target_side as f64;
        let bbox = BoundingBox::new(
            target.x0 as f64 + side / 2.0,
            target.y0 as f64 + side / 2.0,
            side,
            side,
        )?;
        samples.push(AnnotatedSample {
            id: format!("s{i:05}"),
            path: format!("s{i:05}.png"),
            size: ImageSize::new(w, h, c),
            crop: None,
            label: Label::Class {
                index: positive as usize,
                num_classes: 2,
            },
            annotations: vec![Annotation {
                bbox,
                category: positive.then_some(1),
            }],
        });
        images.push(ImageTensor::from_raw_unchecked(w, h, c, values));
    }
    Ok(SyntheticData {
        manifest: DatasetManifest {
            split: Split::Train,
            classes: vec!["normal".into(), "lesion".into()],
            samples,
        },
        images,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeParams {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
    pub seed: u64,
}

impl Default for ProbeParams {
    fn default() -> Self {
        Self {
            learning_rate: 0.005,
            epochs: 10,
            l2: 1e-4,
            seed: seed::DEFAULT_SEED,
        }
    }
}

impl ProbeParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::invalid(format!(
                "learning rate {} must be positive",
                self.learning_rate
            )));
        }
        if !(self.l2.is_finite() && self.l2 >= 0.0) {
            return Err(Error::invalid(format!(
                "l2 {} must be non-negative",
                self.l2
            )));
        }
        Ok(())
    }
}

/// Logistic regression over flattened pixels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearProbe {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub params: ProbeParams,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl LinearProbe {
    pub fn zeros(dim: usize, params: ProbeParams) -> Self {
        Self {
            weights: vec![0.0; dim],
            bias: 0.0,
            params,
        }
    }

    pub fn logit(&self, x: &[f64]) -> f64 {
        dot(&self.weights, x) + self.bias
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        sigmoid(self.logit(x))
    }

    pub fn score_image(&self, image: &ImageTensor) -> Result<f64> {
        if image.values().len() != self.weights.len() {
            return Err(Error::shape(
                format!("{} pixels", self.weights.len()),
                format!("{} pixels", image.values().len()),
            ));
        }
        Ok(self.score(&features(image)))
    }
}

pub fn features(image: &ImageTensor) -> Vec<f64> {
    image.values().iter().map(|&v| v as f64).collect()
}

/// Mean binary cross-entropy plus `l2/2 · ‖w‖²` (bias unpenalized), with its
/// gradient `(∂w, ∂b)`.
pub fn loss_and_gradient(
    weights: &[f64],
    bias: f64,
    xs: &[Vec<f64>],
    ys: &[f64],
    l2: f64,
) -> Result<(f64, Vec<f64>, f64)> {
    if xs.is_empty() || xs.len() != ys.len() {
        return Err(Error::shape(
            format!("{} targets (non-empty)", xs.len()),
            format!("{} targets", ys.len()),
        ));
    }
    let n = xs.len() as f64;
    let mut loss = 0.0;
    let mut gw = vec![0.0; weights.len()];
    let mut gb = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        if x.len() != weights.len() {
            return Err(Error::shape(
                format!("{} features", weights.len()),
                format!("{} features", x.len()),
            ));
        }
        let z = dot(weights, x) + bias;
        loss += softplus(z) - y * z;
        let r = sigmoid(z) - y;
        for (g, xi) in gw.iter_mut().zip(x) {
            *g += r * xi;
        }
        gb += r;
    }
    let penalty: f64 = weights.iter().map(|w| w * w).sum::<f64>();
    for (g, w) in gw.iter_mut().zip(weights) {
        *g = *g / n + l2 * w;
    }
    Ok((loss / n + 0.5 * l2 * penalty, gw, gb / n))
}

fn target_of(label: &Label) -> Result<f64> {
    label.binary_target().ok_or_else(|| {
        Error::invalid(format!(
            "probe needs a binary label, got {} classes",
            label.num_classes()
        ))
    })
}

/// Per-sample SGD from zero weights; each epoch visits samples in a seeded order.
pub fn train_probe<I>(train: I, params: ProbeParams) -> Result<LinearProbe>
where
    I: IntoIterator<Item = AugmentedSample>,
{
    params.validate()?;
    let mut xs: Vec<Vec<f64>> = Vec::new();
    let mut ys = Vec::new();
    for s in train {
        let x = features(&s.image);
        if let Some(first) = xs.first() {
            if first.len() != x.len() {
                return Err(Error::shape(
                    format!("{} features", first.len()),
                    format!("{} features in sample {}", x.len(), xs.len()),
                ));
            }
        }
        ys.push(target_of(&s.label)?);
        xs.push(x);
    }
    if xs.is_empty() {
        return Err(Error::invalid("empty training stream"));
    }
    Ok(fit(&xs, &ys, params))
}

fn fit(xs: &[Vec<f64>], ys: &[f64], params: ProbeParams) -> LinearProbe {
    let mut probe = LinearProbe::zeros(xs[0].len(), params);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut rng = seed::derived_rng(params.seed, Stream::Training, 0);
    let (lr, l2) = (params.learning_rate, params.l2);
    for _ in 0..params.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let r = sigmoid(probe.logit(&xs[i])) - ys[i];
            for (w, x) in probe.weights.iter_mut().zip(&xs[i]) {
                *w -= lr * (r * x + l2 * *w);
            }
            probe.bias -= lr * r;
        }
    }
    probe
}

/// Test AUC-ROC of `sigmoid(w·x + b)`; reads only image labels.
pub fn evaluate_probe(probe: &LinearProbe, test: &SyntheticData) -> Result<f64> {
    let scores = test
        .images
        .iter()
        .map(|img| probe.score_image(img))
        .collect::<Result<Vec<_>>>()?;
    auc_roc(&scores, &test.labels())
}

/// Settings for the baseline vs Cut&Remain comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeExperiment {
    pub task: SyntheticTask,
    pub train_size: usize,
    pub test_size: usize,
    pub seeds: usize,
    pub master_seed: u64,
    pub params: ProbeParams,
    pub ratios: AspectRatioSet,
    /// Extra γ values to evaluate; the comparison itself always uses 0 and 1.
    pub gammas: Vec<f64>,
}

impl Default for ProbeExperiment {
    fn default() -> Self {
        Self {
            task: SyntheticTask::default(),
            train_size: 500,
            test_size: 500,
            seeds: 5,
            master_seed: seed::DEFAULT_SEED,
            params: ProbeParams::default(),
            ratios: AspectRatioSet::default(),
            gammas: Vec::new(),
        }
    }
}

/// The γ grid of the supervision-ratio sweep.
pub const GAMMA_GRID: [f64; 6] = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub baseline_auc: f64,
    pub cut_and_remain_auc: f64,
    pub difference: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaPoint {
    pub gamma: f64,
    pub aucs: Vec<f64>,
    pub mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub experiment: ProbeExperiment,
    pub per_seed: Vec<SeedOutcome>,
    pub baseline_mean: f64,
    pub cut_and_remain_mean: f64,
    pub mean_difference: f64,
    pub difference_std: f64,
    pub gamma_sweep: Vec<GammaPoint>,
}

/// AUC of a probe trained on `train` composed at `gamma` (0 is the baseline).
pub fn run_cell(
    train: &SyntheticData,
    test: &SyntheticData,
    gamma: f64,
    ratios: &AspectRatioSet,
    params: ProbeParams,
    compose_seed: u64,
) -> Result<f64> {
    let config = ComposeConfig::new(Method::CutAndRemain, gamma)?
        .with_seed(compose_seed)
        .with_ratios(ratios.clone());
    let batch = compose(&train.manifest, &config)?;
    let store = InMemoryImages(train.images.clone());
    let samples =
        Materializer::new(&batch, &train.manifest, &store)?.collect(Execution::Sequential)?;
    let probe = train_probe(samples, params)?;
    evaluate_probe(&probe, test)
}

pub fn run_experiment(exp: &ProbeExperiment, exec: Execution) -> Result<ProbeReport> {
    exp.task.validate()?;
    exp.params.validate()?;
    if exp.seeds == 0 || exp.train_size == 0 || exp.test_size == 0 {
        return Err(Error::invalid(
            "seeds, train size and test size must be positive",
        ));
    }
    let mut gammas = vec![0.0, 1.0];
    for &g in &exp.gammas {
        crate::batch::Gamma::new(g)?;
        if !gammas.contains(&g) {
            gammas.push(g);
        }
    }

    let seeds: Vec<u64> = (0..exp.seeds as u64)
        .map(|i| seed::derive(exp.master_seed, Stream::Training, i))
        .collect();
    let data = par::try_map(&seeds, exec, |_, &s| {
        Ok((
            generate_task(
                &exp.task,
                exp.train_size,
                seed::derive(s, Stream::Generator, 0),
            )?,
            generate_task(
                &exp.task,
                exp.test_size,
                seed::derive(s, Stream::Generator, 1),
            )?,
        ))
    })?;

    let cells: Vec<(usize, f64)> = (0..seeds.len())
        .flat_map(|si| gammas.iter().map(move |&g| (si, g)))
        .collect();
    let aucs = par::try_map(&cells, exec, |_, &(si, g)| {
        let (train, test) = &data[si];
        let params = ProbeParams {
            seed: seed::derive(seeds[si], Stream::Training, 1),
            ..exp.params
        };
        run_cell(train, test, g, &exp.ratios, params, seeds[si])
    })?;
    let auc_at = |si: usize, g: f64| {
        aucs[cells
            .iter()
            .position(|&(s, gg)| s == si && gg == g)
            .unwrap()]
    };

    let per_seed: Vec<SeedOutcome> = seeds
        .iter()
        .enumerate()
        .map(|(si, &seed)| {
            let (b, c) = (auc_at(si, 0.0), auc_at(si, 1.0));
            SeedOutcome {
                seed,
                baseline_auc: b,
                cut_and_remain_auc: c,
                difference: c - b,
            }
        })
        .collect();
    let mean = |xs: Vec<f64>| xs.iter().sum::<f64>() / xs.len() as f64;
    let diffs: Vec<f64> = per_seed.iter().map(|o| o.difference).collect();
    let gamma_sweep = exp
        .gammas
        .iter()
        .map(|&g| {
            let aucs: Vec<f64> = (0..seeds.len()).map(|si| auc_at(si, g)).collect();
            GammaPoint {
                gamma: g,
                mean: mean(aucs.clone()),
                aucs,
            }
        })
        .collect();
    Ok(ProbeReport {
        experiment: exp.clone(),
        baseline_mean: mean(per_seed.iter().map(|o| o.baseline_auc).collect()),
        cut_and_remain_mean: mean(per_seed.iter().map(|o| o.cut_and_remain_auc).collect()),
        mean_difference: mean(diffs.clone()),
        difference_std: MeanStd::of(&diffs).map_or(0.0, |m| m.std),
        per_seed,
        gamma_sweep,
    })
}

/// Largest relative error between the analytic gradient and central finite
/// differences, `‖g − ĝ‖ / max(‖g‖, ‖ĝ‖)`.
pub fn gradient_check(
    weights: &[f64],
    bias: f64,
    xs: &[Vec<f64>],
    ys: &[f64],
    l2: f64,
    step: f64,
) -> Result<f64> {
    let (_, gw, gb) = loss_and_gradient(weights, bias, xs, ys, l2)?;
    let mut w = weights.to_vec();
    let mut numeric = Vec::with_capacity(w.len() + 1);
    for i in 0..w.len() {
        let orig = w[i];
        w[i] = orig + step;
        let up = loss_and_gradient(&w, bias, xs, ys, l2)?.0;
        w[i] = orig - step;
        let down = loss_and_gradient(&w, bias, xs, ys, l2)?.0;
        w[i] = orig;
        numeric.push((up - down) / (2.0 * step));
    }
    let up = loss_and_gradient(&w, bias + step, xs, ys, l2)?.0;
    let down = loss_and_gradient(&w, bias - step, xs, ys, l2)?.0;
    numeric.push((up - down) / (2.0 * step));

    let analytic: Vec<f64> = gw.into_iter().chain(std::iter::once(gb)).collect();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, b)| a - b).collect();
    let scale = norm(&analytic).max(norm(&numeric));
    Ok(if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    })
}
