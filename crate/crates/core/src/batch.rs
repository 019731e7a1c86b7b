//! Replayable training-batch manifests.
//!
//! [`compose`] decides everything random up front (which samples are
//! augmented, partners, mixing coefficients, cutout seeds, entry order) and
//! records it, so [`materialize`] is a pure function of the manifest, the
//! dataset and the pixels.
//!
//! The augmented sources for a given seed are a prefix of one fixed seeded
//! permutation of the dataset, so raising γ only ever adds sources.

use std::borrow::Cow;
use std::collections::HashMap;
use std::path::PathBuf;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::augment::{
    cut_and_remain_variant, sup_cutmix, sup_cutout_seeded, sup_mixup, AugmentedSample,
    CutoutParams, Method, MixParams, Source,
};
use crate::dataset::{AnnotatedSample, DatasetManifest};
use crate::error::{Error, Result};
use crate::geometry::{rasterize_mask, AspectRatioSet, BinaryMask};
use crate::image::ImageTensor;
use crate::par::{self, Execution};
use crate::seed::{self, Stream};
use crate::TOOL_VERSION;

/// Fraction of the dataset that receives augmentation, in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Gamma(f64);

impl Gamma {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::invalid(format!("gamma {gamma} outside [0, 1]")));
        }
        Ok(Self(gamma))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// `floor(γ·n)`, tolerant of products like `0.29 * 100 = 28.999...`.
    pub fn count(self, n: usize) -> usize {
        ((self.0 * n as f64 + 1e-9).floor() as usize).min(n)
    }
}

impl TryFrom<f64> for Gamma {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<Gamma> for f64 {
    fn from(g: Gamma) -> f64 {
        g.0
    }
}

/// What to do with the source sample of an entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "kebab-case")]
pub enum Operation {
    Original,
    CutAndRemain { rw: f64, rh: f64 },
    SupMixup { partner: String, lambda: f64 },
    SupCutout { seed: u64 },
    SupCutmix { partner: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub source: String,
    #[serde(flatten)]
    pub op: Operation,
}

impl Entry {
    pub fn is_original(&self) -> bool {
        matches!(self.op, Operation::Original)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComposeConfig {
    pub method: Method,
    pub gamma: Gamma,
    pub ratios: AspectRatioSet,
    pub seed: u64,
    /// Beta shape for Sup-Mixup coefficients.
    pub mix_alpha: f64,
    pub cutout: CutoutParams,
    /// Keep only this many seeded ratio pairs per source (all when `None`).
    pub variants_per_sample: Option<usize>,
    /// Mini-batch size hint for the consuming trainer.
    pub batch_size: usize,
}

impl ComposeConfig {
    pub fn new(method: Method, gamma: f64) -> Result<Self> {
        Ok(Self {
            method,
            gamma: Gamma::new(gamma)?,
            ratios: AspectRatioSet::default(),
            seed: seed::DEFAULT_SEED,
            mix_alpha: 1.0,
            cutout: CutoutParams::default(),
            variants_per_sample: None,
            batch_size: 32,
        })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_ratios(mut self, ratios: AspectRatioSet) -> Self {
        self.ratios = ratios;
        self
    }
}

/// First line of the JSON-lines form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchHeader {
    pub tool_version: String,
    pub master_seed: u64,
    pub method: Method,
    pub gamma: Gamma,
    pub ratios: AspectRatioSet,
    pub batch_size: usize,
    pub mix_alpha: f64,
    pub cutout_side: Option<usize>,
    pub cutout_max_attempts: usize,
    pub variants_per_sample: Option<usize>,
    pub sources: usize,
    pub entries: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchManifest {
    pub header: BatchHeader,
    pub entries: Vec<Entry>,
}

impl BatchManifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Distinct source ids of the augmented entries, in first-seen order.
    pub fn augmented_sources(&self) -> Vec<&str> {
        let mut seen = std::collections::HashSet::new();
        self.entries
            .iter()
            .filter(|e| !e.is_original())
            .map(|e| e.source.as_str())
            .filter(|s| seen.insert(*s))
            .collect()
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = serde_json::to_string(&self.header)?;
        out.push('\n');
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let parse_err = |line: usize, e: serde_json::Error| Error::Parse {
            source_name: "batch manifest".into(),
            location: format!("line {}", line + 1),
            message: e.to_string(),
        };
        let (i, first) = lines
            .next()
            .ok_or_else(|| Error::invalid("empty batch manifest"))?;
        let header: BatchHeader = serde_json::from_str(first).map_err(|e| parse_err(i, e))?;
        let entries = lines
            .map(|(i, l)| serde_json::from_str::<Entry>(l).map_err(|e| parse_err(i, e)))
            .collect::<Result<Vec<_>>>()?;
        if entries.len() != header.entries {
            return Err(Error::invalid(format!(
                "header announces {} entries, found {}",
                header.entries,
                entries.len()
            )));
        }
        Ok(Self { header, entries })
    }
}

/// Builds the batch recipe: every sample once as an original, plus
/// augmentation entries for `floor(γ·N)` seeded sources.
pub fn compose(dataset: &DatasetManifest, config: &ComposeConfig) -> Result<BatchManifest> {
    let n = dataset.len();
    if n == 0 {
        return Err(Error::invalid("dataset is empty"));
    }
    if config.method == Method::Original {
        return Err(Error::invalid("compose needs an augmentation method"));
    }
    if config.method.is_pairing() && n < 2 {
        return Err(Error::Pairing(format!(
            "{} needs at least 2 samples, dataset has {n}",
            config.method
        )));
    }
    MixParams {
        lambda: None,
        alpha: config.mix_alpha,
    }
    .validate()?;
    let pairs = config.ratios.pairs();
    if let Some(k) = config.variants_per_sample {
        if k == 0 || k > pairs.len() {
            return Err(Error::invalid(format!(
                "variants per sample {k} outside 1..={}",
                pairs.len()
            )));
        }
    }

    let mut priority: Vec<usize> = (0..n).collect();
    priority.shuffle(&mut seed::derived_rng(config.seed, Stream::Selection, 0));
    let mut selected = priority[..config.gamma.count(n)].to_vec();
    selected.sort_unstable();

    if let Some(s) = selected
        .iter()
        .map(|&i| &dataset.samples[i])
        .find(|s| s.annotations.is_empty())
    {
        return Err(Error::EmptyMask(format!(
            "sample {:?} has no annotation to drive {}",
            s.id, config.method
        )));
    }

    let mut entries: Vec<Entry> = dataset
        .samples
        .iter()
        .map(|s| Entry {
            source: s.id.clone(),
            op: Operation::Original,
        })
        .collect();

    for &i in &selected {
        let source = dataset.samples[i].id.clone();
        let partner = || {
            let mut rng = seed::derived_rng(config.seed, Stream::Partner, i as u64);
            let mut j = rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            dataset.samples[j].id.clone()
        };
        match config.method {
            Method::CutAndRemain => {
                let chosen: Vec<(f64, f64)> = match config.variants_per_sample {
                    None => pairs.clone(),
                    Some(k) => {
                        let mut rng = seed::derived_rng(config.seed, Stream::Variants, i as u64);
                        let mut idx: Vec<usize> = (0..pairs.len())
                            .collect::<Vec<_>>()
                            .choose_multiple(&mut rng, k)
                            .copied()
                            .collect();
                        idx.sort_unstable();
                        idx.into_iter().map(|p| pairs[p]).collect()
                    }
                };
                entries.extend(chosen.into_iter().map(|(rw, rh)| Entry {
                    source: source.clone(),
                    op: Operation::CutAndRemain { rw, rh },
                }));
            }
            Method::SupMixup => {
                let params = MixParams {
                    lambda: None,
                    alpha: config.mix_alpha,
                };
                let lambda = params.resolve_lambda(&mut seed::derived_rng(
                    config.seed,
                    Stream::Lambda,
                    i as u64,
                ))?;
                entries.push(Entry {
                    source,
                    op: Operation::SupMixup {
                        partner: partner(),
                        lambda,
                    },
                });
            }
            Method::SupCutout => entries.push(Entry {
                source,
                // assigned from the entry position once the order is fixed
                op: Operation::SupCutout { seed: 0 },
            }),
            Method::SupCutmix => entries.push(Entry {
                source,
                op: Operation::SupCutmix { partner: partner() },
            }),
            Method::Original => unreachable!("rejected above"),
        }
    }

    entries.shuffle(&mut seed::derived_rng(config.seed, Stream::Order, 0));
    for (pos, e) in entries.iter_mut().enumerate() {
        if let Operation::SupCutout { seed: s } = &mut e.op {
            *s = seed::derive(config.seed, Stream::Cutout, pos as u64);
        }
    }

    Ok(BatchManifest {
        header: BatchHeader {
            tool_version: TOOL_VERSION.to_string(),
            master_seed: config.seed,
            method: config.method,
            gamma: config.gamma,
            ratios: config.ratios.clone(),
            batch_size: config.batch_size,
            mix_alpha: config.mix_alpha,
            cutout_side: config.cutout.side,
            cutout_max_attempts: config.cutout.max_attempts,
            variants_per_sample: config.variants_per_sample,
            sources: n,
            entries: entries.len(),
        },
        entries,
    })
}

/// Where pixels come from.
pub trait ImageStore: Sync {
    fn load(&self, index: usize, sample: &AnnotatedSample) -> Result<Cow<'_, ImageTensor>>;
}

/// Images already in memory, indexed like the dataset.
pub struct InMemoryImages(pub Vec<ImageTensor>);

impl ImageStore for InMemoryImages {
    fn load(&self, index: usize, sample: &AnnotatedSample) -> Result<Cow<'_, ImageTensor>> {
        self.0
            .get(index)
            .map(Cow::Borrowed)
            .ok_or_else(|| Error::Reference(format!("no image for sample {:?}", sample.id)))
    }
}

/// PNG files resolved relative to a root directory.
pub struct DirectoryImages {
    pub root: PathBuf,
}

impl ImageStore for DirectoryImages {
    fn load(&self, _index: usize, sample: &AnnotatedSample) -> Result<Cow<'_, ImageTensor>> {
        sample.load_image(&self.root).map(Cow::Owned)
    }
}

fn annotation_mask(sample: &AnnotatedSample) -> Result<BinaryMask> {
    rasterize_mask(&sample.boxes(), sample.size.width, sample.size.height)
}

/// Resolves manifest entries against a dataset and its pixels.
pub struct Materializer<'a, S: ImageStore> {
    batch: &'a BatchManifest,
    dataset: &'a DatasetManifest,
    store: &'a S,
    index: HashMap<&'a str, usize>,
}

impl<'a, S: ImageStore> Materializer<'a, S> {
    pub fn new(
        batch: &'a BatchManifest,
        dataset: &'a DatasetManifest,
        store: &'a S,
    ) -> Result<Self> {
        let index: HashMap<&str, usize> = dataset
            .samples
            .iter()
            .enumerate()
            .map(|(i, s)| (s.id.as_str(), i))
            .collect();
        for (i, e) in batch.entries.iter().enumerate() {
            let partner = match &e.op {
                Operation::SupMixup { partner, .. } | Operation::SupCutmix { partner } => {
                    Some(partner.as_str())
                }
                _ => None,
            };
            for id in std::iter::once(e.source.as_str()).chain(partner) {
                if !index.contains_key(id) {
                    return Err(Error::Entry {
                        index: i,
                        source_id: e.source.clone(),
                        inner: Box::new(Error::Reference(format!("unknown sample {id:?}"))),
                    });
                }
            }
        }
        Ok(Self {
            batch,
            dataset,
            store,
            index,
        })
    }

    fn sample(&self, id: &str) -> (usize, &'a AnnotatedSample) {
        let i = self.index[id];
        (i, &self.dataset.samples[i])
    }

    /// The augmented sample for entry `i`.
    pub fn entry(&self, i: usize) -> Result<AugmentedSample> {
        let e = &self.batch.entries[i];
        self.run(e).map_err(|inner| Error::Entry {
            index: i,
            source_id: e.source.clone(),
            inner: Box::new(inner),
        })
    }

    fn run(&self, e: &Entry) -> Result<AugmentedSample> {
        let (ai, a) = self.sample(&e.source);
        let image = self.store.load(ai, a)?;
        let src = Source::new(&a.id, &image, &a.label);
        match &e.op {
            Operation::Original => Ok(AugmentedSample::original(
                &a.id,
                image.into_owned(),
                a.label.clone(),
            )),
            Operation::CutAndRemain { rw, rh } => cut_and_remain_variant(src, &a.boxes(), *rw, *rh),
            Operation::SupCutout { seed } => {
                let params = CutoutParams {
                    side: self.batch.header.cutout_side,
                    max_attempts: self.batch.header.cutout_max_attempts,
                };
                sup_cutout_seeded(src, &annotation_mask(a)?, &params, *seed)
            }
            Operation::SupMixup { partner, lambda } => {
                let (bi, b) = self.sample(partner);
                let other = self.store.load(bi, b)?;
                sup_mixup(
                    src,
                    &annotation_mask(a)?,
                    Source::new(&b.id, &other, &b.label),
                    &annotation_mask(b)?,
                    &MixParams::fixed(*lambda),
                    // λ is fixed, the generator is never consulted
                    &mut seed::rng(0),
                )
            }
            Operation::SupCutmix { partner } => {
                let (bi, b) = self.sample(partner);
                let other = self.store.load(bi, b)?;
                sup_cutmix(
                    src,
                    &annotation_mask(a)?,
                    Source::new(&b.id, &other, &b.label),
                )
            }
        }
    }

    /// Lazily yields entries in manifest order.
    pub fn stream(&self) -> impl Iterator<Item = Result<AugmentedSample>> + '_ {
        (0..self.batch.entries.len()).map(move |i| self.entry(i))
    }

    /// All entries in manifest order, computed with the given execution mode.
    pub fn collect(&self, exec: Execution) -> Result<Vec<AugmentedSample>> {
        par::map_range(self.batch.entries.len(), exec, |i| self.entry(i))
            .into_iter()
            .collect()
    }
}

/// Materializes every entry of `batch` in order.
pub fn materialize<S: ImageStore>(
    batch: &BatchManifest,
    dataset: &DatasetManifest,
    store: &S,
    exec: Execution,
) -> Result<Vec<AugmentedSample>> {
    Materializer::new(batch, dataset, store)?.collect(exec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::{cut_and_remain, Label};
    use crate::dataset::{Annotation, ImageSize, Split};
    use crate::geometry::BoundingBox;
    use std::collections::BTreeSet;

    fn fixture(n: usize) -> (DatasetManifest, InMemoryImages) {
        let samples = (0..n)
            .map(|i| AnnotatedSample {
                id: format!("s{i}"),
                path: format!("s{i}.png"),
                size: ImageSize::new(16, 12, 1),
                crop: None,
                label: Label::Class {
                    index: i % 2,
                    num_classes: 2,
                },
                annotations: vec![Annotation {
                    bbox: BoundingBox::new(4.0 + (i % 5) as f64, 6.0, 4.0, 3.0).unwrap(),
                    category: Some(i % 2),
                }],
            })
            .collect();
        let images = (0..n)
            .map(|i| {
                ImageTensor::new(
                    16,
                    12,
                    1,
                    (0..192)
                        .map(|p| ((p * 13 + i * 31) % 256) as f32 / 255.0)
                        .collect(),
                )
                .unwrap()
            })
            .collect();
        (
            DatasetManifest {
                split: Split::Train,
                classes: vec!["normal".into(), "lesion".into()],
                samples,
            },
            InMemoryImages(images),
        )
    }

    fn cfg(method: Method, gamma: f64) -> ComposeConfig {
        ComposeConfig::new(method, gamma).unwrap().with_seed(7)
    }

    // counting oracle: enumerate the manifest and tally entry kinds
    fn tally(b: &BatchManifest) -> (usize, usize) {
        let originals = b.entries.iter().filter(|e| e.is_original()).count();
        (originals, b.entries.len() - originals)
    }

    #[test]
    fn compose_counts() {
        let (d, _) = fixture(10);
        let b = compose(&d, &cfg(Method::CutAndRemain, 0.5)).unwrap();
        assert_eq!(tally(&b), (10, 45));
        assert_eq!(b.len(), 55);
        assert_eq!(b.augmented_sources().len(), 5);

        for m in [
            Method::CutAndRemain,
            Method::SupMixup,
            Method::SupCutout,
            Method::SupCutmix,
        ] {
            let b = compose(&d, &cfg(m, 0.0)).unwrap();
            assert_eq!(tally(&b), (10, 0));
            let b = compose(&d, &cfg(m, 0.3)).unwrap();
            let per = if m == Method::CutAndRemain { 9 } else { 1 };
            assert_eq!(b.len(), 10 + 3 * per);
        }
        let b = compose(&d, &cfg(Method::CutAndRemain, 1.0)).unwrap();
        assert_eq!(b.len(), 100);
        let ids: BTreeSet<&str> = b.augmented_sources().into_iter().collect();
        assert_eq!(ids.len(), 10);

        let mut sub = cfg(Method::CutAndRemain, 1.0);
        sub.variants_per_sample = Some(3);
        assert_eq!(compose(&d, &sub).unwrap().len(), 40);
        sub.variants_per_sample = Some(10);
        assert!(compose(&d, &sub).is_err());
    }

    #[test]
    fn originals_appear_once() {
        let (d, _) = fixture(10);
        let b = compose(&d, &cfg(Method::SupCutmix, 1.0)).unwrap();
        let orig: Vec<&str> = b
            .entries
            .iter()
            .filter(|e| e.is_original())
            .map(|e| e.source.as_str())
            .collect();
        let set: BTreeSet<&str> = orig.iter().copied().collect();
        assert_eq!((orig.len(), set.len()), (10, 10));
        for e in &b.entries {
            if let Operation::SupCutmix { partner } = &e.op {
                assert_ne!(partner, &e.source);
            }
        }
    }

    #[test]
    fn gamma_sets_are_nested() {
        let (d, _) = fixture(23);
        let sets: Vec<BTreeSet<String>> = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0]
            .iter()
            .map(|&g| {
                compose(&d, &cfg(Method::SupMixup, g))
                    .unwrap()
                    .augmented_sources()
                    .into_iter()
                    .map(str::to_string)
                    .collect()
            })
            .collect();
        for w in sets.windows(2) {
            assert!(w[0].is_subset(&w[1]));
            assert!(w[0].len() <= w[1].len());
        }
        assert!(sets[0].is_empty());
        assert_eq!(sets[5].len(), 23);
    }

    #[test]
    fn compose_errors() {
        let (d, _) = fixture(1);
        assert!(matches!(
            compose(&d, &cfg(Method::SupMixup, 1.0)),
            Err(Error::Pairing(_))
        ));
        assert!(compose(&d, &cfg(Method::CutAndRemain, 1.0)).is_ok());
        assert!(ComposeConfig::new(Method::CutAndRemain, 1.5).is_err());
        assert!(ComposeConfig::new(Method::CutAndRemain, -0.1).is_err());
        assert!(compose(&d, &cfg(Method::Original, 1.0)).is_err());

        let (mut d, _) = fixture(4);
        d.samples[2].annotations.clear();
        assert!(compose(&d, &cfg(Method::SupCutout, 1.0)).is_err());
        assert!(compose(&d, &cfg(Method::SupCutout, 0.0)).is_ok());
    }

    #[test]
    fn cutout_seeds_follow_entry_position() {
        let (d, _) = fixture(6);
        let b = compose(&d, &cfg(Method::SupCutout, 1.0)).unwrap();
        for (pos, e) in b.entries.iter().enumerate() {
            if let Operation::SupCutout { seed: s } = e.op {
                assert_eq!(s, seed::derive(7, Stream::Cutout, pos as u64));
            }
        }
    }

    #[test]
    fn gamma_floor() {
        assert_eq!(Gamma::new(0.29).unwrap().count(100), 29);
        assert_eq!(Gamma::new(0.5).unwrap().count(9), 4);
        assert_eq!(Gamma::new(1.0).unwrap().count(7), 7);
    }

    #[test]
    fn jsonl_round_trip() {
        let (d, _) = fixture(6);
        for m in [
            Method::CutAndRemain,
            Method::SupMixup,
            Method::SupCutout,
            Method::SupCutmix,
        ] {
            let b = compose(&d, &cfg(m, 0.5)).unwrap();
            let text = b.to_jsonl().unwrap();
            assert_eq!(text.lines().count(), b.len() + 1);
            let back = BatchManifest::from_jsonl(&text).unwrap();
            assert_eq!(back, b);
            assert_eq!(back.to_jsonl().unwrap(), text);
        }
        assert!(BatchManifest::from_jsonl("").is_err());
        let (d, _) = fixture(3);
        let text = compose(&d, &cfg(Method::SupCutout, 1.0))
            .unwrap()
            .to_jsonl()
            .unwrap();
        let truncated: String = text.lines().take(3).map(|l| format!("{l}\n")).collect();
        assert!(BatchManifest::from_jsonl(&truncated).is_err());
    }

    #[test]
    fn materialize_originals_only() {
        let (d, imgs) = fixture(5);
        let b = compose(&d, &cfg(Method::CutAndRemain, 0.0)).unwrap();
        let out = materialize(&b, &d, &imgs, Execution::Parallel).unwrap();
        for (e, s) in b.entries.iter().zip(&out) {
            let i = d.index_of(&e.source).unwrap();
            assert_eq!(s.image, imgs.0[i]);
            assert_eq!(s.provenance.method, Method::Original);
        }
    }

    #[test]
    fn materialize_is_deterministic_across_modes() {
        let (d, imgs) = fixture(8);
        for m in [
            Method::CutAndRemain,
            Method::SupMixup,
            Method::SupCutout,
            Method::SupCutmix,
        ] {
            let b = compose(&d, &cfg(m, 0.75)).unwrap();
            let seq = materialize(&b, &d, &imgs, Execution::Sequential).unwrap();
            let par = materialize(&b, &d, &imgs, Execution::Parallel).unwrap();
            assert_eq!(seq, par);
            let streamed: Vec<_> = Materializer::new(&b, &d, &imgs)
                .unwrap()
                .stream()
                .collect::<Result<_>>()
                .unwrap();
            assert_eq!(seq, streamed);
        }
    }

    #[test]
    fn materialized_entry_matches_direct_kernel_call() {
        let (d, imgs) = fixture(4);
        let b = compose(&d, &cfg(Method::CutAndRemain, 1.0)).unwrap();
        let out = materialize(&b, &d, &imgs, Execution::Sequential).unwrap();
        let (pos, entry) = b
            .entries
            .iter()
            .enumerate()
            .find(|(_, e)| matches!(e.op, Operation::CutAndRemain { rw, rh } if rw == 1.5 && rh == 2.0))
            .unwrap();
        let i = d.index_of(&entry.source).unwrap();
        let s = &d.samples[i];
        let direct = cut_and_remain(
            Source::new(&s.id, &imgs.0[i], &s.label),
            &s.boxes(),
            &AspectRatioSet::default(),
        )
        .unwrap();
        // (1.5, 2.0) is the sixth row-major pair
        assert_eq!(out[pos], direct[5]);
    }

    #[test]
    fn materialize_reports_entry_context() {
        let (d, imgs) = fixture(3);
        let mut b = compose(&d, &cfg(Method::SupCutmix, 1.0)).unwrap();
        b.entries[0].source = "ghost".into();
        let e = Materializer::new(&b, &d, &imgs).err().unwrap();
        assert!(matches!(e, Error::Entry { index: 0, .. }));

        let b = compose(&d, &cfg(Method::SupCutmix, 1.0)).unwrap();
        let short = InMemoryImages(imgs.0[..1].to_vec());
        let e = materialize(&b, &d, &short, Execution::Parallel).unwrap_err();
        assert!(matches!(e, Error::Entry { .. }), "{e}");
    }
}
