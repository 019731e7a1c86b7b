//! Box algebra and mask rasterization.
//!
//! A pixel `(ix, iy)` belongs to a box when its center `(ix + 0.5, iy + 0.5)`
//! lies in the half-open rectangle `[cx - w/2, cx + w/2) x [cy - h/2, cy + h/2)`.
//! Boxes that extend past the image are clipped, never shifted or rescaled.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Center-form box in pixel units. Serializes as `[cx, cy, w, h]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BoundingBox {
    cx: f64,
    cy: f64,
    w: f64,
    h: f64,
}

impl BoundingBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        if !(cx.is_finite() && cy.is_finite() && w.is_finite() && h.is_finite()) {
            return Err(Error::invalid(format!(
                "box ({cx}, {cy}, {w}, {h}) has non-finite coordinates"
            )));
        }
        if w <= 0.0 || h <= 0.0 {
            return Err(Error::invalid(format!(
                "box ({cx}, {cy}, {w}, {h}) must have positive width and height"
            )));
        }
        Ok(Self { cx, cy, w, h })
    }

    /// Builds a box from its top-left corner and size (COCO `bbox` layout).
    pub fn from_corner(x_min: f64, y_min: f64, w: f64, h: f64) -> Result<Self> {
        Self::new(x_min + w / 2.0, y_min + h / 2.0, w, h)
    }

    pub fn cx(&self) -> f64 {
        self.cx
    }
    pub fn cy(&self) -> f64 {
        self.cy
    }
    pub fn w(&self) -> f64 {
        self.w
    }
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn left(&self) -> f64 {
        self.cx - self.w / 2.0
    }
    pub fn right(&self) -> f64 {
        self.cx + self.w / 2.0
    }
    pub fn top(&self) -> f64 {
        self.cy - self.h / 2.0
    }
    pub fn bottom(&self) -> f64 {
        self.cy + self.h / 2.0
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// Continuous area of the part of the box inside `[0, width] x [0, height]`.
    pub fn clipped_area(&self, width: usize, height: usize) -> f64 {
        let dx = self.right().min(width as f64) - self.left().max(0.0);
        let dy = self.bottom().min(height as f64) - self.top().max(0.0);
        dx.max(0.0) * dy.max(0.0)
    }

    /// Whether the pixel with integer index `(ix, iy)` has its center inside the box.
    pub fn contains_pixel(&self, ix: usize, iy: usize) -> bool {
        let px = ix as f64 + 0.5;
        let py = iy as f64 + 0.5;
        self.left() <= px && px < self.right() && self.top() <= py && py < self.bottom()
    }

    /// Same center, width scaled by `rw`, height by `rh`.
    pub fn expand(&self, rw: f64, rh: f64) -> Result<Self> {
        expand_box(self, rw, rh)
    }
}

impl TryFrom<[f64; 4]> for BoundingBox {
    type Error = Error;

    fn try_from(v: [f64; 4]) -> Result<Self> {
        Self::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        [b.cx, b.cy, b.w, b.h]
    }
}

/// Ordered, duplicate-free set of positive scale factors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct AspectRatioSet(Vec<f64>);

impl AspectRatioSet {
    pub fn new(ratios: Vec<f64>) -> Result<Self> {
        if ratios.is_empty() {
            return Err(Error::invalid("aspect ratio set is empty"));
        }
        for (i, &r) in ratios.iter().enumerate() {
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::invalid(format!("aspect ratio {r} must be positive")));
            }
            if ratios[..i].contains(&r) {
                return Err(Error::invalid(format!("aspect ratio {r} is duplicated")));
            }
        }
        Ok(Self(ratios))
    }

    /// The single factor 1.0: raw annotation only.
    pub fn identity() -> Self {
        Self(vec![1.0])
    }

    pub fn ratios(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Row-major `(rw, rh)` pairs: `rw` varies slowest.
    pub fn pairs(&self) -> Vec<(f64, f64)> {
        self.0
            .iter()
            .flat_map(|&rw| self.0.iter().map(move |&rh| (rw, rh)))
            .collect()
    }
}

impl Default for AspectRatioSet {
    fn default() -> Self {
        Self(vec![1.0, 1.5, 2.0])
    }
}

impl TryFrom<Vec<f64>> for AspectRatioSet {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<AspectRatioSet> for Vec<f64> {
    fn from(r: AspectRatioSet) -> Self {
        r.0
    }
}

impl std::str::FromStr for AspectRatioSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let ratios = s
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::invalid(format!("aspect ratio {t:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(ratios)
    }
}

/// Integer pixel rectangle `[x0, x1) x [y0, y1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PixelRegion {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl PixelRegion {
    pub fn width(&self) -> usize {
        self.x1 - self.x0
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0
    }

    pub fn area(&self) -> usize {
        self.width() * self.height()
    }

    pub fn is_empty(&self) -> bool {
        self.x0 >= self.x1 || self.y0 >= self.y1
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        self.x0 <= x && x < self.x1 && self.y0 <= y && y < self.y1
    }
}

/// W x H array over {0, 1}, stored row-major (`y * width + x`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    values: Vec<u8>,
}

impl BinaryMask {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            values: vec![0; width * height],
        }
    }

    /// The all-ones mask.
    pub fn ones(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            values: vec![1; width * height],
        }
    }

    pub fn from_values(width: usize, height: usize, values: Vec<u8>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::shape(width * height, values.len()));
        }
        if values.iter().any(|&v| v > 1) {
            return Err(Error::invalid("mask values must be 0 or 1"));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.values[y * self.width + x] == 1
    }

    pub fn set(&mut self, x: usize, y: usize, on: bool) {
        self.values[y * self.width + x] = on as u8;
    }

    pub fn fill_region(&mut self, region: &PixelRegion) {
        for y in region.y0..region.y1 {
            self.values[y * self.width + region.x0..y * self.width + region.x1].fill(1);
        }
    }

    pub fn popcount(&self) -> usize {
        self.values.iter().filter(|&&v| v == 1).count()
    }

    pub fn is_empty(&self) -> bool {
        self.values.iter().all(|&v| v == 0)
    }

    pub fn is_full(&self) -> bool {
        self.values.iter().all(|&v| v == 1)
    }

    /// Every set pixel of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.values.iter().zip(&other.values).all(|(&a, &b)| a <= b)
    }
}

/// Scales width by `rw` and height by `rh` about the unchanged center.
pub fn expand_box(b: &BoundingBox, rw: f64, rh: f64) -> Result<BoundingBox> {
    if !(rw.is_finite() && rw > 0.0 && rh.is_finite() && rh > 0.0) {
        return Err(Error::invalid(format!(
            "expansion factors ({rw}, {rh}) must be positive"
        )));
    }
    BoundingBox::new(b.cx, b.cy, b.w * rw, b.h * rh)
}

/// One expanded box per `(rw, rh)` in [`AspectRatioSet::pairs`] order.
pub fn variant_boxes(b: &BoundingBox, ratios: &AspectRatioSet) -> Result<Vec<BoundingBox>> {
    ratios
        .pairs()
        .into_iter()
        .map(|(rw, rh)| expand_box(b, rw, rh))
        .collect()
}

// Smallest index i in [0, n] with lo <= i + 0.5.
fn first_at_or_after(lo: f64, n: usize) -> usize {
    let guess = (lo - 0.5).ceil().clamp(0.0, n as f64) as usize;
    let mut i = guess;
    while i > 0 && lo <= (i - 1) as f64 + 0.5 {
        i -= 1;
    }
    while i < n && lo > i as f64 + 0.5 {
        i += 1;
    }
    i
}

// Smallest index i in [0, n] with i + 0.5 >= hi (inputs are finite).
fn first_not_before(hi: f64, n: usize) -> usize {
    let guess = (hi - 0.5).ceil().clamp(0.0, n as f64) as usize;
    let mut i = guess;
    while i > 0 && (i - 1) as f64 + 0.5 >= hi {
        i -= 1;
    }
    while i < n && (i as f64 + 0.5) < hi {
        i += 1;
    }
    i
}

/// The tight pixel region of `b` inside a `width x height` image.
pub fn clip_to_image(b: &BoundingBox, width: usize, height: usize) -> Result<PixelRegion> {
    if width == 0 || height == 0 {
        return Err(Error::invalid(format!(
            "image dimensions {width}x{height} must be positive"
        )));
    }
    let x0 = first_at_or_after(b.left(), width);
    let x1 = first_not_before(b.right(), width).max(x0);
    let y0 = first_at_or_after(b.top(), height);
    let y1 = first_not_before(b.bottom(), height).max(y0);
    let region = PixelRegion { x0, y0, x1, y1 };
    if region.is_empty() {
        return Err(Error::EmptyRegion {
            cx: b.cx,
            cy: b.cy,
            w: b.w,
            h: b.h,
            width,
            height,
        });
    }
    Ok(region)
}

/// Union mask of all boxes. Boxes that fall outside the image are skipped;
/// an error is returned only when nothing remains.
pub fn rasterize_mask(boxes: &[BoundingBox], width: usize, height: usize) -> Result<BinaryMask> {
    if boxes.is_empty() {
        return Err(Error::EmptyMask("no boxes to rasterize".into()));
    }
    let mut mask = BinaryMask::zeros(width, height);
    let mut any = false;
    for b in boxes {
        match clip_to_image(b, width, height) {
            Ok(region) => {
                mask.fill_region(&region);
                any = true;
            }
            Err(Error::EmptyRegion { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    if !any {
        return Err(Error::EmptyMask(format!(
            "all {} boxes fall outside the {width}x{height} image",
            boxes.len()
        )));
    }
    Ok(mask)
}
