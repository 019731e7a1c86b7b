//! The four mask-driven augmentation kernels.
//!
//! * Cut&Remain keeps the pixels under the (expanded) annotation boxes and
//!   zeroes everything else, once per aspect-ratio pair.
//! * Sup-Mixup blends two masked images: `λ·(M_A⊙x_A) + (1−λ)·(M_B⊙x_B)`.
//! * Sup-Cutout zeroes a square placed entirely where the mask is 0.
//! * Sup-Cutmix takes `x_A` where `M_A = 1` and `x_B` elsewhere, keeping `y_A`.
//!
//! All kernels preserve the source dimensions. Randomness comes only from the
//! generator passed in.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{expand_box, rasterize_mask, AspectRatioSet, BinaryMask, BoundingBox};
use crate::image::ImageTensor;
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Label {
    Class { index: usize, num_classes: usize },
    MultiLabel { values: Vec<u8> },
    Soft { values: Vec<f32> },
}

impl Label {
    pub fn class(index: usize, num_classes: usize) -> Result<Self> {
        let l = Label::Class { index, num_classes };
        l.validate()?;
        Ok(l)
    }

    pub fn multi(values: Vec<bool>) -> Self {
        Label::MultiLabel {
            values: values.into_iter().map(u8::from).collect(),
        }
    }

    pub fn soft(values: Vec<f32>) -> Result<Self> {
        let l = Label::Soft { values };
        l.validate()?;
        Ok(l)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Label::Class { index, num_classes } if index >= num_classes => Err(Error::invalid(
                format!("class index {index} out of range for {num_classes} classes"),
            )),
            Label::MultiLabel { values } if values.iter().any(|&v| v > 1) => {
                Err(Error::invalid("multi-label values must be 0 or 1"))
            }
            Label::Soft { values } if values.iter().any(|v| !(0.0..=1.0).contains(v)) => {
                Err(Error::invalid("soft label values must lie in [0, 1]"))
            }
            _ => Ok(()),
        }
    }

    pub fn num_classes(&self) -> usize {
        match self {
            Label::Class { num_classes, .. } => *num_classes,
            Label::MultiLabel { values } => values.len(),
            Label::Soft { values } => values.len(),
        }
    }

    /// Dense per-class vector (one-hot for single-class labels).
    pub fn to_soft(&self) -> Vec<f32> {
        match self {
            Label::Class { index, num_classes } => {
                let mut v = vec![0.0; *num_classes];
                v[*index] = 1.0;
                v
            }
            Label::MultiLabel { values } => values.iter().map(|&v| v as f32).collect(),
            Label::Soft { values } => values.clone(),
        }
    }

    /// Probability of the positive class for a binary task: the last entry
    /// of a two-class vector, or the only entry of a one-class vector.
    pub fn binary_target(&self) -> Option<f64> {
        let v = self.to_soft();
        match v.len() {
            1 => Some(v[0] as f64),
            2 => Some(v[1] as f64),
            _ => None,
        }
    }

    pub fn is_positive(&self, class: usize) -> bool {
        match self {
            Label::Class { index, .. } => *index == class,
            Label::MultiLabel { values } => values.get(class) == Some(&1),
            Label::Soft { values } => values.get(class).is_some_and(|&v| v > 0.0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Original,
    CutAndRemain,
    SupMixup,
    SupCutout,
    SupCutmix,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Original => "original",
            Method::CutAndRemain => "cut-and-remain",
            Method::SupMixup => "sup-mixup",
            Method::SupCutout => "sup-cutout",
            Method::SupCutmix => "sup-cutmix",
        }
    }

    /// Whether the method combines two samples.
    pub fn is_pairing(self) -> bool {
        matches!(self, Method::SupMixup | Method::SupCutmix)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "original" => Method::Original,
            "cut-and-remain" | "cut&remain" => Method::CutAndRemain,
            "sup-mixup" => Method::SupMixup,
            "sup-cutout" => Method::SupCutout,
            "sup-cutmix" => Method::SupCutmix,
            other => return Err(Error::invalid(format!("unknown method {other:?}"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub method: Method,
    pub ratio: Option<(f64, f64)>,
    pub sources: Vec<String>,
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedSample {
    pub image: ImageTensor,
    pub label: Label,
    pub provenance: Provenance,
}

impl AugmentedSample {
    /// Wraps an unmodified source sample.
    pub fn original(id: &str, image: ImageTensor, label: Label) -> Self {
        Self {
            image,
            label,
            provenance: Provenance {
                method: Method::Original,
                ratio: None,
                sources: vec![id.to_string()],
                seed: None,
                lambda: None,
            },
        }
    }
}

/// Borrowed view of one input sample.
#[derive(Clone, Copy, Debug)]
pub struct Source<'a> {
    pub id: &'a str,
    pub image: &'a ImageTensor,
    pub label: &'a Label,
}

impl<'a> Source<'a> {
    pub fn new(id: &'a str, image: &'a ImageTensor, label: &'a Label) -> Self {
        Self { id, image, label }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MixParams {
    /// Fixed mixing coefficient; drawn from `Beta(alpha, alpha)` when `None`.
    pub lambda: Option<f64>,
    pub alpha: f64,
}

impl Default for MixParams {
    fn default() -> Self {
        Self {
            lambda: None,
            alpha: 1.0,
        }
    }
}

impl MixParams {
    pub fn fixed(lambda: f64) -> Self {
        Self {
            lambda: Some(lambda),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::invalid(format!(
                "alpha {} must be positive",
                self.alpha
            )));
        }
        if let Some(l) = self.lambda {
            if !(0.0..=1.0).contains(&l) {
                return Err(Error::invalid(format!("lambda {l} outside [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn resolve_lambda<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        self.validate()?;
        match self.lambda {
            Some(l) => Ok(l),
            None => {
                let beta = Beta::new(self.alpha, self.alpha)
                    .map_err(|e| Error::invalid(format!("beta({}): {e}", self.alpha)))?;
                Ok(beta.sample(rng))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CutoutParams {
    /// Square side in pixels; `None` means `max(1, min(W, H) / 4)`.
    pub side: Option<usize>,
    /// Uniform rejection draws before falling back to enumeration.
    pub max_attempts: usize,
}

impl Default for CutoutParams {
    fn default() -> Self {
        Self {
            side: None,
            max_attempts: 100,
        }
    }
}

impl CutoutParams {
    pub fn side_for(&self, width: usize, height: usize) -> usize {
        self.side.unwrap_or_else(|| (width.min(height) / 4).max(1))
    }
}

/// `M ⊙ x`: pixels where the mask is 0 become 0.0, the rest are copied.
pub fn apply_mask(image: &ImageTensor, mask: &BinaryMask) -> Result<ImageTensor> {
    image.check_mask(mask)?;
    let c = image.channels();
    let mut values = image.values().to_vec();
    for (px, &m) in values.chunks_exact_mut(c).zip(mask.values()) {
        if m == 0 {
            px.fill(0.0);
        }
    }
    Ok(ImageTensor::from_raw_unchecked(
        image.width(),
        image.height(),
        c,
        values,
    ))
}

/// Cut&Remain: one sample per `(rw, rh)` pair of `ratios`, each keeping the
/// union of all expanded annotation boxes.
pub fn cut_and_remain(
    src: Source<'_>,
    boxes: &[BoundingBox],
    ratios: &AspectRatioSet,
) -> Result<Vec<AugmentedSample>> {
    ratios
        .pairs()
        .into_iter()
        .map(|(rw, rh)| cut_and_remain_variant(src, boxes, rw, rh))
        .collect()
}

/// A single Cut&Remain output for one ratio pair.
pub fn cut_and_remain_variant(
    src: Source<'_>,
    boxes: &[BoundingBox],
    rw: f64,
    rh: f64,
) -> Result<AugmentedSample> {
    let expanded = boxes
        .iter()
        .map(|b| expand_box(b, rw, rh))
        .collect::<Result<Vec<_>>>()?;
    let mask = rasterize_mask(&expanded, src.image.width(), src.image.height())?;
    Ok(AugmentedSample {
        image: apply_mask(src.image, &mask)?,
        label: src.label.clone(),
        provenance: Provenance {
            method: Method::CutAndRemain,
            ratio: Some((rw, rh)),
            sources: vec![src.id.to_string()],
            seed: None,
            lambda: None,
        },
    })
}

fn check_class_space(a: &Label, b: &Label) -> Result<()> {
    if a.num_classes() != b.num_classes() {
        return Err(Error::shape(
            format!("{} classes", a.num_classes()),
            format!("{} classes", b.num_classes()),
        ));
    }
    Ok(())
}

/// Sup-Mixup with each operand under its own mask.
pub fn sup_mixup<R: Rng + ?Sized>(
    a: Source<'_>,
    mask_a: &BinaryMask,
    b: Source<'_>,
    mask_b: &BinaryMask,
    params: &MixParams,
    rng: &mut R,
) -> Result<AugmentedSample> {
    a.image.check_same_dims(b.image)?;
    a.image.check_mask(mask_a)?;
    b.image.check_mask(mask_b)?;
    check_class_space(a.label, b.label)?;
    let lambda = params.resolve_lambda(rng)?;
    let la = lambda as f32;
    let lb = (1.0 - lambda) as f32;

    let c = a.image.channels();
    let mut values = Vec::with_capacity(a.image.values().len());
    for (i, (pa, pb)) in a
        .image
        .values()
        .chunks_exact(c)
        .zip(b.image.values().chunks_exact(c))
        .enumerate()
    {
        let ma = mask_a.values()[i];
        let mb = mask_b.values()[i];
        for ch in 0..c {
            let xa = if ma == 1 { pa[ch] } else { 0.0 };
            let xb = if mb == 1 { pb[ch] } else { 0.0 };
            values.push(la * xa + lb * xb);
        }
    }
    let label = a
        .label
        .to_soft()
        .iter()
        .zip(b.label.to_soft())
        .map(|(&ya, yb)| la * ya + lb * yb)
        .collect();

    Ok(AugmentedSample {
        image: ImageTensor::from_raw_unchecked(a.image.width(), a.image.height(), c, values),
        label: Label::Soft { values: label },
        provenance: Provenance {
            method: Method::SupMixup,
            ratio: None,
            sources: vec![a.id.to_string(), b.id.to_string()],
            seed: None,
            lambda: Some(lambda),
        },
    })
}

// Summed-area table over the mask; sat[(y)*(w+1)+x] = count of ones in [0,x)x[0,y).
struct MaskSums {
    stride: usize,
    sums: Vec<u32>,
}

impl MaskSums {
    fn new(mask: &BinaryMask) -> Self {
        let (w, h) = (mask.width(), mask.height());
        let stride = w + 1;
        let mut sums = vec![0u32; stride * (h + 1)];
        for y in 0..h {
            let mut row = 0u32;
            for x in 0..w {
                row += mask.values()[y * w + x] as u32;
                sums[(y + 1) * stride + x + 1] = sums[y * stride + x + 1] + row;
            }
        }
        Self { stride, sums }
    }

    fn square_is_clear(&self, x: usize, y: usize, side: usize) -> bool {
        let s = self.stride;
        let total = self.sums[(y + side) * s + x + side] + self.sums[y * s + x]
            - self.sums[y * s + x + side]
            - self.sums[(y + side) * s + x];
        total == 0
    }
}

/// Chooses the top-left corner of a `side x side` square lying where the
/// mask is 0, uniformly among all such placements.
pub fn cutout_placement<R: Rng + ?Sized>(
    mask: &BinaryMask,
    side: usize,
    max_attempts: usize,
    rng: &mut R,
) -> Result<(usize, usize)> {
    let (w, h) = (mask.width(), mask.height());
    if side == 0 || side > w || side > h {
        return Err(Error::invalid(format!(
            "cutout side {side} does not fit a {w}x{h} image"
        )));
    }
    if mask.is_empty() {
        return Err(Error::EmptyMask(
            "sup-cutout needs an annotated region".into(),
        ));
    }
    let sums = MaskSums::new(mask);
    let (nx, ny) = (w - side + 1, h - side + 1);
    for _ in 0..max_attempts {
        let x = rng.random_range(0..nx);
        let y = rng.random_range(0..ny);
        if sums.square_is_clear(x, y, side) {
            return Ok((x, y));
        }
    }
    let valid: Vec<(usize, usize)> = (0..ny)
        .flat_map(|y| (0..nx).map(move |x| (x, y)))
        .filter(|&(x, y)| sums.square_is_clear(x, y, side))
        .collect();
    if valid.is_empty() {
        return Err(Error::PlacementFailure { side });
    }
    Ok(valid[rng.random_range(0..valid.len())])
}

/// Sup-Cutout: zeroes one square that lies entirely outside the mask.
pub fn sup_cutout<R: Rng + ?Sized>(
    src: Source<'_>,
    mask: &BinaryMask,
    params: &CutoutParams,
    rng: &mut R,
) -> Result<AugmentedSample> {
    src.image.check_mask(mask)?;
    let (w, h) = (src.image.width(), src.image.height());
    let side = params.side_for(w, h);
    let (x0, y0) = cutout_placement(mask, side, params.max_attempts, rng)?;
    let c = src.image.channels();
    let mut values = src.image.values().to_vec();
    for y in y0..y0 + side {
        values[(y * w + x0) * c..(y * w + x0 + side) * c].fill(0.0);
    }
    Ok(AugmentedSample {
        image: ImageTensor::from_raw_unchecked(w, h, c, values),
        label: src.label.clone(),
        provenance: Provenance {
            method: Method::SupCutout,
            ratio: None,
            sources: vec![src.id.to_string()],
            seed: None,
            lambda: None,
        },
    })
}

/// [`sup_cutout`] with a generator built from `seed`, recorded in the provenance.
pub fn sup_cutout_seeded(
    src: Source<'_>,
    mask: &BinaryMask,
    params: &CutoutParams,
    seed: u64,
) -> Result<AugmentedSample> {
    let mut out = sup_cutout(src, mask, params, &mut seed::rng(seed))?;
    out.provenance.seed = Some(seed);
    Ok(out)
}

/// Sup-Cutmix: `x_A` inside `M_A`, `x_B` outside, label `y_A`.
pub fn sup_cutmix(a: Source<'_>, mask_a: &BinaryMask, b: Source<'_>) -> Result<AugmentedSample> {
    a.image.check_same_dims(b.image)?;
    a.image.check_mask(mask_a)?;
    if mask_a.is_empty() {
        return Err(Error::EmptyMask(
            "sup-cutmix with an empty mask would drop every pixel of the labelled sample".into(),
        ));
    }
    let c = a.image.channels();
    let values = a
        .image
        .values()
        .chunks_exact(c)
        .zip(b.image.values().chunks_exact(c))
        .zip(mask_a.values())
        .flat_map(|((pa, pb), &m)| if m == 1 { pa } else { pb }.iter().copied())
        .collect();
    Ok(AugmentedSample {
        image: ImageTensor::from_raw_unchecked(a.image.width(), a.image.height(), c, values),
        label: a.label.clone(),
        provenance: Provenance {
            method: Method::SupCutmix,
            ratio: None,
            sources: vec![a.id.to_string(), b.id.to_string()],
            seed: None,
            lambda: None,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bx(cx: f64, cy: f64, w: f64, h: f64) -> BoundingBox {
        BoundingBox::new(cx, cy, w, h).unwrap()
    }

    fn ramp(w: usize, h: usize, c: usize, phase: usize) -> ImageTensor {
        let n = w * h * c;
        ImageTensor::new(
            w,
            h,
            c,
            (0..n)
                .map(|i| ((i * 7 + phase) % 256) as f32 / 255.0)
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn cut_and_remain_worked_example() {
        let img = ImageTensor::filled(4, 4, 1, 1.0).unwrap();
        let label = Label::class(1, 2).unwrap();
        let out = cut_and_remain(
            Source::new("s", &img, &label),
            &[bx(2.0, 2.0, 2.0, 2.0)],
            &AspectRatioSet::identity(),
        )
        .unwrap();
        assert_eq!(out.len(), 1);
        let ones: Vec<(usize, usize)> = (0..4)
            .flat_map(|y| (0..4).map(move |x| (x, y)))
            .filter(|&(x, y)| out[0].image.get(x, y, 0) == 1.0)
            .collect();
        assert_eq!(ones, vec![(1, 1), (2, 1), (1, 2), (2, 2)]);
        assert_eq!(
            out[0].image.values().iter().filter(|&&v| v == 0.0).count(),
            12
        );
        assert_eq!(out[0].label, label);
        assert_eq!(out[0].provenance.ratio, Some((1.0, 1.0)));
    }

    #[test]
    fn cut_and_remain_full_box_is_identity_and_nine_variants() {
        let img = ramp(10, 6, 3, 1);
        let label = Label::multi(vec![true, false, true]);
        let src = Source::new("s", &img, &label);
        let out =
            cut_and_remain(src, &[bx(5.0, 3.0, 10.0, 6.0)], &AspectRatioSet::identity()).unwrap();
        assert_eq!(out[0].image, img);

        let out =
            cut_and_remain(src, &[bx(4.0, 3.0, 2.0, 2.0)], &AspectRatioSet::default()).unwrap();
        assert_eq!(out.len(), 9);
        let ratios: Vec<_> = out.iter().map(|s| s.provenance.ratio.unwrap()).collect();
        assert_eq!(ratios[0], (1.0, 1.0));
        assert_eq!(ratios[5], (1.5, 2.0));
        assert!(out
            .iter()
            .all(|s| s.image.dims() == img.dims() && s.label == label));
    }

    #[test]
    fn cut_and_remain_outside_box_errors() {
        let img = ramp(8, 8, 1, 0);
        let label = Label::class(0, 2).unwrap();
        let err = cut_and_remain(
            Source::new("s", &img, &label),
            &[bx(100.0, 100.0, 2.0, 2.0)],
            &AspectRatioSet::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::EmptyMask(_)));
    }

    #[test]
    fn mixup_degenerate_and_constant_cases() {
        let xa = ramp(6, 5, 1, 3);
        let xb = ramp(6, 5, 1, 90);
        let ya = Label::class(0, 3).unwrap();
        let yb = Label::class(2, 3).unwrap();
        let ma = rasterize_mask(&[bx(2.0, 2.0, 2.0, 2.0)], 6, 5).unwrap();
        let mb = rasterize_mask(&[bx(4.0, 3.0, 4.0, 2.0)], 6, 5).unwrap();
        let mut rng = seed::rng(0);
        let a = Source::new("a", &xa, &ya);
        let b = Source::new("b", &xb, &yb);

        let one = sup_mixup(a, &ma, b, &mb, &MixParams::fixed(1.0), &mut rng).unwrap();
        assert_eq!(one.image, apply_mask(&xa, &ma).unwrap());
        assert_eq!(one.label.to_soft(), ya.to_soft());
        let zero = sup_mixup(a, &ma, b, &mb, &MixParams::fixed(0.0), &mut rng).unwrap();
        assert_eq!(zero.image, apply_mask(&xb, &mb).unwrap());
        assert_eq!(zero.label.to_soft(), yb.to_soft());

        let ones = ImageTensor::filled(6, 5, 1, 1.0).unwrap();
        let full = BinaryMask::ones(6, 5);
        let mixed = sup_mixup(
            Source::new("a", &ones, &ya),
            &full,
            Source::new("b", &ones, &yb),
            &full,
            &MixParams::fixed(0.3),
            &mut rng,
        )
        .unwrap();
        assert!(mixed.image.values().iter().all(|&v| v == 1.0));
        let expected = [0.3f32, 0.0, 1.0 - 0.3];
        for (got, want) in mixed.label.to_soft().iter().zip(expected) {
            assert!((got - want).abs() < 1e-7);
        }
        assert_eq!(mixed.provenance.lambda, Some(0.3));
    }

    #[test]
    fn mixup_errors_and_beta_draw() {
        let xa = ramp(4, 4, 1, 0);
        let xb = ramp(5, 4, 1, 0);
        let y = Label::class(0, 2).unwrap();
        let m4 = BinaryMask::ones(4, 4);
        let m5 = BinaryMask::ones(5, 4);
        let mut rng = seed::rng(1);
        let err = sup_mixup(
            Source::new("a", &xa, &y),
            &m4,
            Source::new("b", &xb, &y),
            &m5,
            &MixParams::fixed(0.5),
            &mut rng,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Shape { .. }));

        let y3 = Label::class(0, 3).unwrap();
        assert!(sup_mixup(
            Source::new("a", &xa, &y),
            &m4,
            Source::new("b", &xa, &y3),
            &m4,
            &MixParams::fixed(0.5),
            &mut rng
        )
        .is_err());

        let bad = MixParams {
            lambda: None,
            alpha: 0.0,
        };
        assert!(bad.validate().is_err());
        assert!(MixParams::fixed(1.5).validate().is_err());

        let draw = |s| {
            sup_mixup(
                Source::new("a", &xa, &y),
                &m4,
                Source::new("b", &xa, &y),
                &m4,
                &MixParams::default(),
                &mut seed::rng(s),
            )
            .unwrap()
        };
        let l = draw(5).provenance.lambda.unwrap();
        assert!((0.0..=1.0).contains(&l));
        assert_eq!(draw(5), draw(5));
    }

    #[test]
    fn cutout_unique_corner() {
        let (w, h, side) = (16, 12, 4);
        let img = ImageTensor::filled(w, h, 1, 0.5).unwrap();
        let label = Label::class(1, 2).unwrap();
        let mut mask = BinaryMask::ones(w, h);
        for y in h - side..h {
            for x in w - side..w {
                mask.set(x, y, false);
            }
        }
        let params = CutoutParams {
            side: Some(side),
            ..CutoutParams::default()
        };
        for s in 0..5 {
            let out = sup_cutout_seeded(Source::new("s", &img, &label), &mask, &params, s).unwrap();
            for y in 0..h {
                for x in 0..w {
                    let zeroed = x >= w - side && y >= h - side;
                    assert_eq!(out.image.get(x, y, 0), if zeroed { 0.0 } else { 0.5 });
                }
            }
            assert_eq!(out.label, label);
            assert_eq!(out.provenance.seed, Some(s));
        }
    }

    #[test]
    fn cutout_seeded_replay_and_disjointness() {
        let img = ImageTensor::filled(64, 64, 1, 1.0).unwrap();
        let label = Label::class(1, 2).unwrap();
        let mask = rasterize_mask(&[bx(32.0, 32.0, 16.0, 16.0)], 64, 64).unwrap();
        let params = CutoutParams {
            side: Some(8),
            ..CutoutParams::default()
        };
        let run = || sup_cutout_seeded(Source::new("s", &img, &label), &mask, &params, 42).unwrap();
        let a = run();
        assert_eq!(a, run());
        let zeroed: Vec<(usize, usize)> = (0..64)
            .flat_map(|y| (0..64).map(move |x| (x, y)))
            .filter(|&(x, y)| a.image.get(x, y, 0) == 0.0)
            .collect();
        assert_eq!(zeroed.len(), 64);
        assert!(zeroed.iter().all(|&(x, y)| !mask.get(x, y)));
    }

    #[test]
    fn cutout_errors() {
        let img = ImageTensor::filled(8, 8, 1, 1.0).unwrap();
        let label = Label::class(0, 2).unwrap();
        let src = Source::new("s", &img, &label);
        let p = CutoutParams::default();
        assert!(matches!(
            sup_cutout_seeded(src, &BinaryMask::zeros(8, 8), &p, 0),
            Err(Error::EmptyMask(_))
        ));
        assert!(matches!(
            sup_cutout_seeded(src, &BinaryMask::ones(8, 8), &p, 0),
            Err(Error::PlacementFailure { side: 2 })
        ));
        let mask = rasterize_mask(&[bx(4.0, 4.0, 2.0, 2.0)], 8, 8).unwrap();
        let big = CutoutParams { side: Some(9), ..p };
        assert!(matches!(
            sup_cutout_seeded(src, &mask, &big, 0),
            Err(Error::InvalidParameter(_))
        ));
        // mask leaves only 3x3 corners free: a 4x4 square never fits
        let tight =
            rasterize_mask(&[bx(4.0, 4.0, 4.0, 8.0), bx(4.0, 4.0, 8.0, 4.0)], 8, 8).unwrap();
        let four = CutoutParams { side: Some(4), ..p };
        assert!(matches!(
            sup_cutout_seeded(src, &tight, &four, 0),
            Err(Error::PlacementFailure { side: 4 })
        ));
    }

    #[test]
    fn cutmix_examples() {
        let ones = ImageTensor::filled(8, 4, 1, 1.0).unwrap();
        let zeros = ImageTensor::filled(8, 4, 1, 0.0).unwrap();
        let ya = Label::class(1, 2).unwrap();
        let yb = Label::class(0, 2).unwrap();
        let left = rasterize_mask(&[bx(2.0, 2.0, 4.0, 4.0)], 8, 4).unwrap();
        let out = sup_cutmix(
            Source::new("a", &ones, &ya),
            &left,
            Source::new("b", &zeros, &yb),
        )
        .unwrap();
        for y in 0..4 {
            for x in 0..8 {
                assert_eq!(out.image.get(x, y, 0), if x < 4 { 1.0 } else { 0.0 });
            }
        }
        assert_eq!(out.label, ya);

        let xa = ramp(8, 4, 3, 5);
        let a = Source::new("a", &xa, &ya);
        let full = BinaryMask::ones(8, 4);
        assert!(sup_cutmix(a, &full, Source::new("b", &zeros, &yb)).is_err());
        let zb = ImageTensor::filled(8, 4, 3, 0.0).unwrap();
        assert_eq!(
            sup_cutmix(a, &full, Source::new("b", &zb, &yb))
                .unwrap()
                .image,
            xa
        );
        assert_eq!(sup_cutmix(a, &left, a).unwrap().image, xa);
        assert!(matches!(
            sup_cutmix(a, &BinaryMask::zeros(8, 4), a),
            Err(Error::EmptyMask(_))
        ));
    }

    #[test]
    fn label_helpers() {
        assert!(Label::class(2, 2).is_err());
        assert!(Label::soft(vec![0.5, 1.5]).is_err());
        assert_eq!(Label::class(1, 2).unwrap().binary_target(), Some(1.0));
        assert_eq!(Label::multi(vec![true]).binary_target(), Some(1.0));
        assert_eq!(Label::class(1, 3).unwrap().binary_target(), None);
        let json = serde_json::to_string(&Label::class(1, 2).unwrap()).unwrap();
        assert_eq!(json, r#"{"kind":"class","index":1,"num_classes":2}"#);
        assert_eq!("sup-cutmix".parse::<Method>().unwrap(), Method::SupCutmix);
        assert!("mixup".parse::<Method>().is_err());
    }

    fn arb_case() -> impl Strategy<Value = (ImageTensor, BoundingBox)> {
        (
            1usize..=32,
            1usize..=32,
            prop_oneof![Just(1usize), Just(3usize)],
        )
            .prop_flat_map(|(w, h, c)| {
                (
                    proptest::collection::vec(0u16..=255, w * h * c),
                    0.0..w as f64,
                    0.0..h as f64,
                    1.0..=w as f64 + 1.0,
                    1.0..=h as f64 + 1.0,
                )
                    .prop_map(move |(px, cx, cy, bw, bh)| {
                        let img = ImageTensor::new(
                            w,
                            h,
                            c,
                            px.into_iter().map(|v| v as f32 / 255.0).collect(),
                        )
                        .unwrap();
                        (img, bx(cx, cy, bw, bh))
                    })
            })
    }

    proptest! {
        #[test]
        fn cut_and_remain_is_mask_times_input((img, b) in arb_case()) {
            let label = Label::class(0, 2).unwrap();
            let Ok(out) = cut_and_remain(Source::new("s", &img, &label), &[b], &AspectRatioSet::default()) else {
                return Ok(());
            };
            prop_assert_eq!(out.len(), 9);
            for s in &out {
                let (rw, rh) = s.provenance.ratio.unwrap();
                let e = expand_box(&b, rw, rh).unwrap();
                prop_assert_eq!(s.image.dims(), img.dims());
                for y in 0..img.height() {
                    for x in 0..img.width() {
                        for c in 0..img.channels() {
                            let expected = if e.contains_pixel(x, y) { img.get(x, y, c) } else { 0.0 };
                            prop_assert_eq!(s.image.get(x, y, c), expected);
                        }
                    }
                }
            }
        }

        #[test]
        fn mixup_output_stays_in_unit_range((img, b) in arb_case(), lambda in 0.0f64..=1.0) {
            let label = Label::class(0, 2).unwrap();
            let Ok(mask) = rasterize_mask(&[b], img.width(), img.height()) else { return Ok(()); };
            let src = Source::new("s", &img, &label);
            let out = sup_mixup(src, &mask, src, &BinaryMask::ones(img.width(), img.height()),
                &MixParams::fixed(lambda), &mut seed::rng(0)).unwrap();
            prop_assert!(out.image.values().iter().all(|v| (0.0..=1.0).contains(v)));
            prop_assert!(out.label.to_soft().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
