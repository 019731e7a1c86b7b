//! Annotation ingestion, vertical half-splitting and small-object subsets.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::augment::Label;
use crate::error::{Error, Result};
use crate::geometry::{clip_to_image, BoundingBox, PixelRegion};
use crate::image::ImageTensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageSize {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
}

impl ImageSize {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self {
            width,
            height,
            channels,
        }
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub bbox: BoundingBox,
    /// Class index of the annotated object, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedSample {
    pub id: String,
    pub path: String,
    pub size: ImageSize,
    /// Sub-rectangle of the file at `path` that this sample covers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crop: Option<PixelRegion>,
    pub label: Label,
    pub annotations: Vec<Annotation>,
}

impl AnnotatedSample {
    pub fn boxes(&self) -> Vec<BoundingBox> {
        self.annotations.iter().map(|a| a.bbox).collect()
    }

    /// Loads the pixels for this sample from `root/path`, applying the crop.
    pub fn load_image(&self, root: &Path) -> Result<ImageTensor> {
        let full = ImageTensor::load_png(root.join(&self.path))?;
        let img = match &self.crop {
            Some(region) => full.crop(region)?,
            None => full,
        };
        let expected = (self.size.width, self.size.height, self.size.channels);
        if img.dims() != expected {
            return Err(Error::shape(
                format!("{expected:?} for {}", self.id),
                format!("{:?}", img.dims()),
            ));
        }
        Ok(img)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[default]
    Train,
    Val,
    Test,
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::invalid(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub split: Split,
    pub classes: Vec<String>,
    pub samples: Vec<AnnotatedSample>,
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn box_count(&self) -> usize {
        self.samples.iter().map(|s| s.annotations.len()).sum()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.samples.iter().position(|s| s.id == id)
    }

    /// Checks id uniqueness, label/class-space agreement and box coverage.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for s in &self.samples {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::invalid(format!("duplicate sample id {:?}", s.id)));
            }
            s.label.validate()?;
            if s.label.num_classes() != self.classes.len() {
                return Err(Error::invalid(format!(
                    "sample {:?} has {} label classes, manifest has {}",
                    s.id,
                    s.label.num_classes(),
                    self.classes.len()
                )));
            }
            for a in &s.annotations {
                if a.category.is_some_and(|c| c >= self.classes.len()) {
                    return Err(Error::invalid(format!(
                        "sample {:?} has an annotation category outside the class list",
                        s.id
                    )));
                }
                clip_to_image(&a.bbox, s.size.width, s.size.height)?;
            }
        }
        Ok(())
    }
}

/// Header written in front of a serialized manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub tool_version: String,
    pub origin: String,
    #[serde(default)]
    pub params: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestDocument {
    pub header: ManifestHeader,
    #[serde(flatten)]
    pub manifest: DatasetManifest,
}

impl ManifestDocument {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: Self =
            serde_json::from_str(text).map_err(|e| json_parse_error("manifest", text, &e))?;
        doc.manifest.validate()?;
        Ok(doc)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let line_start: usize = text
        .split_inclusive('\n')
        .take(line.saturating_sub(1))
        .map(str::len)
        .sum();
    line_start + column.saturating_sub(1)
}

pub(crate) fn json_parse_error(source_name: &str, text: &str, e: &serde_json::Error) -> Error {
    Error::Parse {
        source_name: source_name.into(),
        location: format!(
            "byte {} (line {}, column {})",
            byte_offset(text, e.line(), e.column()),
            e.line(),
            e.column()
        ),
        message: e.to_string(),
    }
}

fn parse_error(source_name: &str, location: String, message: impl Into<String>) -> Error {
    Error::Parse {
        source_name: source_name.into(),
        location,
        message: message.into(),
    }
}

/// Counts gathered while ingesting.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub images: usize,
    pub boxes: usize,
    pub classes: usize,
    /// Images accepted without any annotation.
    pub unannotated: Vec<String>,
}

impl IngestReport {
    pub fn of(manifest: &DatasetManifest) -> Self {
        Self {
            images: manifest.len(),
            boxes: manifest.box_count(),
            classes: manifest.classes.len(),
            unannotated: manifest
                .samples
                .iter()
                .filter(|s| s.annotations.is_empty())
                .map(|s| s.id.clone())
                .collect(),
        }
    }
}

mod coco {
    use serde::Deserialize;

    #[derive(Deserialize)]
    pub struct Document {
        pub images: Vec<Image>,
        pub annotations: Vec<Annotation>,
        pub categories: Vec<Category>,
    }

    #[derive(Deserialize)]
    pub struct Image {
        pub id: u64,
        pub file_name: String,
        pub width: usize,
        pub height: usize,
    }

    #[derive(Deserialize)]
    pub struct Annotation {
        pub image_id: u64,
        pub category_id: u64,
        pub bbox: [f64; 4],
    }

    #[derive(Deserialize)]
    pub struct Category {
        pub id: u64,
        pub name: String,
    }
}

/// Parses a COCO instances document. Classes are the categories sorted by id;
/// each image's label is the set of categories among its annotations.
pub fn parse_coco(text: &str, split: Split) -> Result<(DatasetManifest, IngestReport)> {
    let doc: coco::Document =
        serde_json::from_str(text).map_err(|e| json_parse_error("coco", text, &e))?;

    let mut categories: Vec<&coco::Category> = doc.categories.iter().collect();
    categories.sort_by_key(|c| c.id);
    let mut class_of = HashMap::new();
    for (index, c) in categories.iter().enumerate() {
        if class_of.insert(c.id, index).is_some() {
            return Err(parse_error(
                "coco",
                format!("categories (id {})", c.id),
                "duplicate category id",
            ));
        }
    }
    let classes: Vec<String> = categories.iter().map(|c| c.name.clone()).collect();

    let mut sample_of = HashMap::new();
    let mut samples = Vec::with_capacity(doc.images.len());
    for (i, img) in doc.images.iter().enumerate() {
        if img.width == 0 || img.height == 0 {
            return Err(parse_error(
                "coco",
                format!("images[{i}]"),
                "zero image dimension",
            ));
        }
        if sample_of.insert(img.id, i).is_some() {
            return Err(parse_error(
                "coco",
                format!("images[{i}]"),
                format!("duplicate image id {}", img.id),
            ));
        }
        samples.push(AnnotatedSample {
            id: img.id.to_string(),
            path: img.file_name.clone(),
            size: ImageSize::new(img.width, img.height, 3),
            crop: None,
            label: Label::MultiLabel {
                values: vec![0; classes.len()],
            },
            annotations: Vec::new(),
        });
    }

    for (i, ann) in doc.annotations.iter().enumerate() {
        let loc = || format!("annotations[{i}]");
        let &s = sample_of.get(&ann.image_id).ok_or_else(|| {
            parse_error("coco", loc(), format!("unknown image_id {}", ann.image_id))
        })?;
        let &class = class_of.get(&ann.category_id).ok_or_else(|| {
            parse_error(
                "coco",
                loc(),
                format!("unknown category_id {}", ann.category_id),
            )
        })?;
        let [x, y, w, h] = ann.bbox;
        if !(w > 0.0 && h > 0.0) {
            return Err(parse_error(
                "coco",
                loc(),
                format!("non-positive box size {w}x{h}"),
            ));
        }
        let bbox = BoundingBox::from_corner(x, y, w, h)
            .map_err(|e| parse_error("coco", loc(), e.to_string()))?;
        let sample = &mut samples[s];
        clip_to_image(&bbox, sample.size.width, sample.size.height)
            .map_err(|e| parse_error("coco", loc(), e.to_string()))?;
        if let Label::MultiLabel { values } = &mut sample.label {
            values[class] = 1;
        }
        sample.annotations.push(Annotation {
            bbox,
            category: Some(class),
        });
    }

    let manifest = DatasetManifest {
        split,
        classes,
        samples,
    };
    let report = IngestReport::of(&manifest);
    Ok((manifest, report))
}

const CSV_HEADER: [&str; 6] = ["path", "label", "cx", "cy", "w", "h"];

/// Parses `path,label,cx,cy,w,h` rows. Rows sharing a path merge into one
/// sample; `size_of` supplies each image's dimensions.
pub fn parse_csv<F>(text: &str, split: Split, mut size_of: F) -> Result<DatasetManifest>
where
    F: FnMut(&str) -> Result<ImageSize>,
{
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| parse_error("csv", "line 1".into(), e.to_string()))?
        .clone();
    let columns: Vec<&str> = header.iter().collect();
    if columns.len() < CSV_HEADER.len() || columns[..CSV_HEADER.len()] != CSV_HEADER {
        return Err(parse_error(
            "csv",
            "line 1".into(),
            format!(
                "expected header {:?}, found {columns:?}",
                CSV_HEADER.join(",")
            ),
        ));
    }

    let mut classes: Vec<String> = Vec::new();
    // (path, class index, size, boxes) in first-appearance order
    let mut entries: Vec<(String, usize, ImageSize, Vec<BoundingBox>)> = Vec::new();
    let mut by_path: HashMap<String, usize> = HashMap::new();

    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_error("csv", format!("line {line}"), e.to_string())
        })?;
        let loc = format!("line {}", record.position().map(|p| p.line()).unwrap_or(0));
        if record.len() < CSV_HEADER.len() {
            return Err(parse_error(
                "csv",
                loc,
                format!(
                    "expected {} columns, found {}",
                    CSV_HEADER.len(),
                    record.len()
                ),
            ));
        }
        let path = &record[0];
        let label = &record[1];
        let mut nums = [0.0f64; 4];
        for (k, slot) in nums.iter_mut().enumerate() {
            let field = &record[2 + k];
            *slot = field.parse().map_err(|_| {
                parse_error(
                    "csv",
                    loc.clone(),
                    format!("column {} is not a number: {field:?}", CSV_HEADER[2 + k]),
                )
            })?;
        }
        let bbox = BoundingBox::new(nums[0], nums[1], nums[2], nums[3])
            .map_err(|e| parse_error("csv", loc.clone(), e.to_string()))?;

        let class = match classes.iter().position(|c| c == label) {
            Some(c) => c,
            None => {
                classes.push(label.to_string());
                classes.len() - 1
            }
        };
        let slot = match by_path.get(path) {
            Some(&slot) => {
                if entries[slot].1 != class {
                    return Err(parse_error(
                        "csv",
                        loc,
                        format!(
                            "{path:?} labelled {label:?} but earlier rows say {:?}",
                            classes[entries[slot].1]
                        ),
                    ));
                }
                slot
            }
            None => {
                let size = size_of(path)?;
                by_path.insert(path.to_string(), entries.len());
                entries.push((path.to_string(), class, size, Vec::new()));
                entries.len() - 1
            }
        };
        let size = entries[slot].2;
        clip_to_image(&bbox, size.width, size.height)
            .map_err(|e| parse_error("csv", loc.clone(), e.to_string()))?;
        entries[slot].3.push(bbox);
    }

    let num_classes = classes.len();
    let samples = entries
        .into_iter()
        .map(|(path, class, size, boxes)| AnnotatedSample {
            id: path.clone(),
            path,
            size,
            crop: None,
            label: Label::Class {
                index: class,
                num_classes,
            },
            annotations: boxes
                .into_iter()
                .map(|bbox| Annotation {
                    bbox,
                    category: Some(class),
                })
                .collect(),
        })
        .collect();
    Ok(DatasetManifest {
        split,
        classes,
        samples,
    })
}

/// Label given to a half that receives no annotation.
#[derive(Clone, Debug, Default, PartialEq)]
pub enum EmptyHalfLabel {
    /// Keep the source label.
    #[default]
    Inherit,
    /// Use a fixed label, typically the normal/background class.
    Fixed(Label),
}

fn reframe(bbox: &BoundingBox, offset: usize, half_width: usize) -> Result<BoundingBox> {
    let shift = offset as f64;
    let left = bbox.left() - shift;
    let right = bbox.right() - shift;
    let hw = half_width as f64;
    if left >= 0.0 && right <= hw {
        return BoundingBox::new(bbox.cx() - shift, bbox.cy(), bbox.w(), bbox.h());
    }
    let (l, r) = (left.max(0.0), right.min(hw));
    BoundingBox::new((l + r) / 2.0, bbox.cy(), r - l, bbox.h())
}

/// Splits a sample into left `[0, W/2)` and right `[W/2, W)` halves.
///
/// Each annotation goes to the half containing its center (a center exactly
/// on the split belongs to the right half), is shifted into that half's frame
/// and clipped to it. If the box covers no pixel of that half it goes to the
/// other half instead.
pub fn split_vertical(
    sample: &AnnotatedSample,
    empty_half: &EmptyHalfLabel,
) -> Result<(AnnotatedSample, AnnotatedSample)> {
    let (w, h) = (sample.size.width, sample.size.height);
    if w < 2 {
        return Err(Error::invalid(format!(
            "cannot split {:?}: width {w} < 2",
            sample.id
        )));
    }
    let mid = w / 2;
    let halves = [(0usize, mid), (mid, w - mid)];
    let mut assigned: [Vec<Annotation>; 2] = [Vec::new(), Vec::new()];

    for ann in &sample.annotations {
        let preferred = usize::from(ann.bbox.cx() >= mid as f64);
        let mut placed = false;
        for side in [preferred, 1 - preferred] {
            let (offset, hw) = halves[side];
            let Ok(bbox) = reframe(&ann.bbox, offset, hw) else {
                continue;
            };
            if clip_to_image(&bbox, hw, h).is_ok() {
                assigned[side].push(Annotation {
                    bbox,
                    category: ann.category,
                });
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::EmptyRegion {
                cx: ann.bbox.cx(),
                cy: ann.bbox.cy(),
                w: ann.bbox.w(),
                h: ann.bbox.h(),
                width: w,
                height: h,
            });
        }
    }

    let base = sample.crop.unwrap_or(PixelRegion {
        x0: 0,
        y0: 0,
        x1: w,
        y1: h,
    });
    let [left_anns, right_anns] = assigned;
    let make = |suffix: &str, (offset, hw): (usize, usize), annotations: Vec<Annotation>| {
        let label = match (annotations.is_empty(), empty_half) {
            (true, EmptyHalfLabel::Fixed(l)) => l.clone(),
            _ => sample.label.clone(),
        };
        AnnotatedSample {
            id: format!("{}_{suffix}", sample.id),
            path: sample.path.clone(),
            size: ImageSize::new(hw, h, sample.size.channels),
            crop: Some(PixelRegion {
                x0: base.x0 + offset,
                y0: base.y0,
                x1: base.x0 + offset + hw,
                y1: base.y1,
            }),
            label,
            annotations,
        }
    };
    Ok((
        make("left", halves[0], left_anns),
        make("right", halves[1], right_anns),
    ))
}

/// Splits every sample of a manifest, left half first.
pub fn split_manifest(
    manifest: &DatasetManifest,
    empty_half: &EmptyHalfLabel,
) -> Result<DatasetManifest> {
    let mut samples = Vec::with_capacity(manifest.len() * 2);
    for s in &manifest.samples {
        let (l, r) = split_vertical(s, empty_half)?;
        samples.push(l);
        samples.push(r);
    }
    Ok(DatasetManifest {
        split: manifest.split,
        classes: manifest.classes.clone(),
        samples,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsetParams {
    pub threshold: f64,
    pub categories: Option<Vec<String>>,
}

impl Default for SubsetParams {
    fn default() -> Self {
        Self {
            threshold: 0.02,
            categories: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SubsetReport {
    pub kept: usize,
    /// Mean relative object area at or above the threshold.
    pub dropped_large: Vec<String>,
    /// No annotations at all: the mean is undefined.
    pub excluded_unannotated: Vec<String>,
    /// Annotations exist but none in the requested categories.
    pub excluded_no_matching_category: Vec<String>,
    /// Single-class label outside the retained class list.
    pub excluded_label: Vec<String>,
}

/// Mean over annotations of (in-image box area) / (image area).
pub fn mean_relative_area(size: ImageSize, annotations: &[&Annotation]) -> Option<f64> {
    if annotations.is_empty() {
        return None;
    }
    // one division keeps integer-area fixtures exact at the threshold
    let total: f64 = annotations
        .iter()
        .map(|a| a.bbox.clipped_area(size.width, size.height))
        .sum();
    Some(total / (size.pixels() as f64 * annotations.len() as f64))
}

/// Keeps images whose objects are small on average: the mean relative box
/// area must be below `params.threshold`. With a category list, only those
/// annotations count and labels are re-indexed onto the surviving classes.
pub fn build_small_subset(
    manifest: &DatasetManifest,
    params: &SubsetParams,
) -> Result<(DatasetManifest, SubsetReport)> {
    let t = params.threshold;
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::invalid(format!("threshold {t} outside (0, 1]")));
    }
    let candidate: BTreeSet<usize> = match &params.categories {
        None => (0..manifest.classes.len()).collect(),
        Some(names) => names
            .iter()
            .map(|n| {
                manifest
                    .classes
                    .iter()
                    .position(|c| c == n)
                    .ok_or_else(|| Error::invalid(format!("unknown category {n:?}")))
            })
            .collect::<Result<_>>()?,
    };
    let restricted = params.categories.is_some();

    let mut report = SubsetReport::default();
    let mut retained: Vec<(&AnnotatedSample, Vec<&Annotation>)> = Vec::new();
    for s in &manifest.samples {
        if s.annotations.is_empty() {
            report.excluded_unannotated.push(s.id.clone());
            continue;
        }
        let relevant: Vec<&Annotation> = s
            .annotations
            .iter()
            .filter(|a| !restricted || a.category.is_some_and(|c| candidate.contains(&c)))
            .collect();
        match mean_relative_area(s.size, &relevant) {
            None => report.excluded_no_matching_category.push(s.id.clone()),
            Some(m) if m < t => retained.push((s, relevant)),
            Some(_) => report.dropped_large.push(s.id.clone()),
        }
    }

    // classes that survive: candidates with at least one positive retained image
    let supported: Vec<usize> = candidate
        .iter()
        .copied()
        .filter(|&c| retained.iter().any(|(s, _)| s.label.is_positive(c)))
        .collect();
    let new_index: HashMap<usize, usize> =
        supported.iter().enumerate().map(|(n, &o)| (o, n)).collect();
    let k = supported.len();

    let mut samples = Vec::with_capacity(retained.len());
    for (s, relevant) in retained {
        let label = match &s.label {
            Label::Class { index, .. } => match new_index.get(index) {
                Some(&n) => Label::Class {
                    index: n,
                    num_classes: k,
                },
                None => {
                    report.excluded_label.push(s.id.clone());
                    continue;
                }
            },
            Label::MultiLabel { values } => Label::MultiLabel {
                values: supported.iter().map(|&o| values[o]).collect(),
            },
            Label::Soft { values } => Label::Soft {
                values: supported.iter().map(|&o| values[o]).collect(),
            },
        };
        samples.push(AnnotatedSample {
            label,
            annotations: relevant
                .into_iter()
                .map(|a| Annotation {
                    bbox: a.bbox,
                    category: a.category.and_then(|c| new_index.get(&c).copied()),
                })
                .collect(),
            ..s.clone()
        });
    }
    report.kept = samples.len();
    Ok((
        DatasetManifest {
            split: manifest.split,
            classes: supported
                .iter()
                .map(|&c| manifest.classes[c].clone())
                .collect(),
            samples,
        },
        report,
    ))
}
