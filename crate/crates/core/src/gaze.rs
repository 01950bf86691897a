//! Fixation records, fixation maps, density maps and dataset manifests.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::Plane;

pub const FIXATION_HEADER: [&str; 6] = ["subject_id", "image_id", "index", "x", "y", "duration_ms"];

/// Integer pixel coordinate `(x, y)`.
pub type Pixel = (usize, usize);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixationRecord {
    pub subject_id: String,
    pub image_id: String,
    pub index: u32,
    pub x: f64,
    pub y: f64,
    pub duration_ms: Option<f64>,
}

/// Parses the fixation CSV. Rows keep their input order.
pub fn parse_fixation_table<R: Read>(input: R) -> Result<Vec<FixationRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let header = reader
        .headers()
        .map_err(|e| Error::Format(format!("unreadable header: {e}")))?
        .clone();
    let mut columns = [0usize; 6];
    for (slot, name) in columns.iter_mut().zip(FIXATION_HEADER) {
        *slot = header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Format(format!("missing column `{name}` in fixation header")))?;
    }
    let arity = header.len();
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let fail = |message: String| Error::Parse { line, message };
        if row.len() != arity {
            return Err(fail(format!("expected {arity} fields, found {}", row.len())));
        }
        let field = |i: usize| &row[columns[i]];
        let num = |i: usize| -> Result<f64> {
            let v: f64 = field(i)
                .parse()
                .map_err(|_| fail(format!("non-numeric {}: `{}`", FIXATION_HEADER[i], field(i))))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(fail(format!("non-finite {}", FIXATION_HEADER[i])))
            }
        };
        let index: u32 = field(2)
            .parse()
            .map_err(|_| fail(format!("invalid index `{}`", field(2))))?;
        let duration_ms = if field(5).is_empty() {
            None
        } else {
            let d = num(5)?;
            if d < 0.0 {
                return Err(fail("negative duration_ms".into()));
            }
            Some(d)
        };
        out.push(FixationRecord {
            subject_id: field(0).to_string(),
            image_id: field(1).to_string(),
            index,
            x: num(3)?,
            y: num(4)?,
            duration_ms,
        });
    }
    Ok(out)
}

pub fn read_fixation_file(path: &Path) -> Result<Vec<FixationRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_fixation_table(std::io::BufReader::new(file))
}

/// Writes records in the same CSV format `parse_fixation_table` reads.
pub fn write_fixation_table<W: Write>(out: W, records: &[FixationRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Format(e.to_string());
    w.write_record(FIXATION_HEADER).map_err(csv_err)?;
    for r in records {
        let duration = r.duration_ms.map(|d| d.to_string()).unwrap_or_default();
        w.write_record([
            r.subject_id.as_str(),
            r.image_id.as_str(),
            &r.index.to_string(),
            &r.x.to_string(),
            &r.y.to_string(),
            &duration,
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Format(e.to_string()))?;
    Ok(())
}

/// Binary per-pixel fixation indicator.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FixationMap {
    width: usize,
    height: usize,
    hits: BTreeSet<Pixel>,
    pub dropped_count: usize,
}

impl FixationMap {
    pub fn from_hits(width: usize, height: usize, hits: impl IntoIterator<Item = Pixel>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidDimensions { width, height });
        }
        let hits: BTreeSet<Pixel> = hits.into_iter().collect();
        if let Some(&(x, y)) = hits.iter().find(|&&(x, y)| x >= width || y >= height) {
            return Err(Error::Format(format!("hit ({x}, {y}) outside {width}x{height}")));
        }
        Ok(FixationMap {
            width,
            height,
            hits,
            dropped_count: 0,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn hits(&self) -> &BTreeSet<Pixel> {
        &self.hits
    }

    pub fn hit_count(&self) -> usize {
        self.hits.len()
    }

    pub fn contains(&self, p: Pixel) -> bool {
        self.hits.contains(&p)
    }

    /// The map as a 0/1 plane.
    pub fn to_plane(&self) -> Plane {
        let mut p = Plane::zeros(self.width, self.height);
        for &(x, y) in &self.hits {
            p.set(x, y, 1.0);
        }
        p
    }
}

/// Floors each record to a pixel; out-of-bounds records are dropped and counted.
pub fn build_fixation_map<'a>(
    records: impl IntoIterator<Item = &'a FixationRecord>,
    width: usize,
    height: usize,
) -> Result<FixationMap> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidDimensions { width, height });
    }
    let mut hits = BTreeSet::new();
    let mut dropped = 0;
    for r in records {
        let (fx, fy) = (r.x.floor(), r.y.floor());
        if fx < 0.0 || fy < 0.0 || fx >= width as f64 || fy >= height as f64 {
            dropped += 1;
        } else {
            hits.insert((fx as usize, fy as usize));
        }
    }
    Ok(FixationMap {
        width,
        height,
        hits,
        dropped_count: dropped,
    })
}

pub fn union_fixation_maps<'a>(maps: impl IntoIterator<Item = &'a FixationMap>) -> Result<FixationMap> {
    let mut iter = maps.into_iter();
    let first = iter.next().ok_or(Error::EmptyInput("union of zero fixation maps"))?;
    let mut out = first.clone();
    for m in iter {
        if m.dims() != out.dims() {
            return Err(Error::Shape {
                expected: out.dims(),
                actual: m.dims(),
            });
        }
        out.hits.extend(m.hits.iter().copied());
        out.dropped_count += m.dropped_count;
    }
    Ok(out)
}

/// A probability distribution over pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMap {
    plane: Plane,
}

impl DensityMap {
    /// Normalizes a nonnegative plane to unit mass.
    pub fn from_plane(plane: &Plane) -> Result<Self> {
        if plane.data().iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(Error::DegenerateInput("density values must be finite and nonnegative"));
        }
        let s = plane.sum();
        if s <= 0.0 {
            return Err(Error::DegenerateInput("density has zero mass"));
        }
        Ok(DensityMap {
            plane: plane.map(|v| v / s),
        })
    }

    pub fn uniform(width: usize, height: usize) -> Self {
        DensityMap {
            plane: Plane::filled(width, height, 1.0 / (width * height) as f64),
        }
    }

    pub fn plane(&self) -> &Plane {
        &self.plane
    }

    pub fn width(&self) -> usize {
        self.plane.width()
    }

    pub fn height(&self) -> usize {
        self.plane.height()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.plane.dims()
    }

    pub fn values(&self) -> &[f64] {
        self.plane.data()
    }

    pub fn at(&self, (x, y): Pixel) -> f64 {
        self.plane.get(x, y)
    }

    /// Convex mixture `weight * self + (1 - weight) * other`.
    pub fn mix(&self, other: &DensityMap, weight: f64) -> Result<DensityMap> {
        let plane = self
            .plane
            .zip_map(&other.plane, |a, b| weight * a + (1.0 - weight) * b)?;
        DensityMap::from_plane(&plane)
    }
}

/// Default density blur: roughly one degree of visual angle, `width / 32`.
pub fn default_density_sigma(width: usize) -> f64 {
    width as f64 / 32.0
}

/// Each hit contributes a Gaussian truncated at radius `ceil(3 sigma)` and
/// renormalized to unit mass inside the image; the sum is divided by the
/// hit count.
pub fn blur_to_density(map: &FixationMap, sigma: f64) -> Result<DensityMap> {
    if map.hits.is_empty() {
        return Err(Error::DegenerateInput("fixation map has no hits"));
    }
    let (w, h) = map.dims();
    let mut acc = Plane::zeros(w, h);
    let radius = if sigma > 0.0 { (3.0 * sigma).ceil() as isize } else { 0 };
    let weight = |d: isize| {
        if sigma > 0.0 {
            (-(d * d) as f64 / (2.0 * sigma * sigma)).exp()
        } else {
            1.0
        }
    };
    let share = 1.0 / map.hits.len() as f64;
    for &(hx, hy) in &map.hits {
        let x0 = (hx as isize - radius).max(0) as usize;
        let x1 = (hx as isize + radius).min(w as isize - 1) as usize;
        let y0 = (hy as isize - radius).max(0) as usize;
        let y1 = (hy as isize + radius).min(h as isize - 1) as usize;
        let wx: Vec<f64> = (x0..=x1).map(|x| weight(x as isize - hx as isize)).collect();
        let wy: Vec<f64> = (y0..=y1).map(|y| weight(y as isize - hy as isize)).collect();
        let mass: f64 = wx.iter().sum::<f64>() * wy.iter().sum::<f64>();
        for (j, y) in (y0..=y1).enumerate() {
            for (i, x) in (x0..=x1).enumerate() {
                let v = acc.get(x, y) + share * wx[i] * wy[j] / mass;
                acc.set(x, y, v);
            }
        }
    }
    DensityMap::from_plane(&acc)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClassificationMode {
    #[serde(rename = "subject", alias = "subject-classification")]
    Subject,
    #[serde(rename = "task", alias = "task-classification")]
    Task,
}

impl std::fmt::Display for ClassificationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ClassificationMode::Subject => "subject",
            ClassificationMode::Task => "task",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageEntry {
    pub id: String,
    pub path: PathBuf,
    pub width: usize,
    pub height: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectEntry {
    pub id: String,
    pub label: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub mode: ClassificationMode,
    pub class_names: Vec<String>,
    pub images: Vec<ImageEntry>,
    pub subjects: Vec<SubjectEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_labels: Option<BTreeMap<String, String>>,
    /// Class treated as positive for sensitivity/specificity. Defaults to the
    /// lexicographically first class name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positive_class: Option<String>,
    /// Fixation-density blur in pixels; defaults to `width / 32` per image.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density_sigma: Option<f64>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self> {
        let mut m: DatasetManifest =
            serde_json::from_str(text).map_err(|e| Error::Format(format!("manifest: {e}")))?;
        m.base_dir = base_dir.to_path_buf();
        m.validate()?;
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn resolve_path(&self, image: &ImageEntry) -> PathBuf {
        if image.path.is_absolute() {
            image.path.clone()
        } else {
            self.base_dir.join(&image.path)
        }
    }

    pub fn image(&self, id: &str) -> Option<&ImageEntry> {
        self.images.iter().find(|i| i.id == id)
    }

    pub fn class_index(&self, label: &str) -> Option<usize> {
        self.class_names.iter().position(|c| c == label)
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn positive_class(&self) -> &str {
        match &self.positive_class {
            Some(p) => p,
            None => self.class_names.iter().min().expect("validated: K >= 2"),
        }
    }

    pub fn density_sigma_for(&self, image: &ImageEntry) -> f64 {
        self.density_sigma
            .unwrap_or_else(|| default_density_sigma(image.width))
    }

    /// Checks every constraint and reports all failures at once.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.class_names.len() < 2 {
            errs.push(format!("need at least 2 classes, found {}", self.class_names.len()));
        }
        let classes: HashSet<&str> = self.class_names.iter().map(String::as_str).collect();
        if classes.len() != self.class_names.len() {
            errs.push("duplicate class names".into());
        }
        let mut seen = HashSet::new();
        for img in &self.images {
            if !seen.insert(img.id.as_str()) {
                errs.push(format!("duplicate image id `{}`", img.id));
            }
            if img.width == 0 || img.height == 0 {
                errs.push(format!("image `{}` has zero dimension", img.id));
            }
            let p = self.resolve_path(img);
            if !p.is_file() {
                errs.push(format!("image `{}`: unreadable path {}", img.id, p.display()));
            }
        }
        let mut seen = HashSet::new();
        for s in &self.subjects {
            if !seen.insert(s.id.as_str()) {
                errs.push(format!("duplicate subject id `{}`", s.id));
            }
            if !classes.contains(s.label.as_str()) {
                errs.push(format!("subject `{}` has unknown label `{}`", s.id, s.label));
            }
        }
        match (&self.mode, &self.task_labels) {
            (ClassificationMode::Task, None) => {
                errs.push("task-classification manifest needs `task_labels`".into())
            }
            (_, Some(labels)) => {
                for (img, label) in labels {
                    if self.image(img).is_none() {
                        errs.push(format!("task_labels references unknown image `{img}`"));
                    }
                    if !classes.contains(label.as_str()) {
                        errs.push(format!("task label `{label}` for image `{img}` is not a class"));
                    }
                }
            }
            _ => {}
        }
        if let Some(p) = &self.positive_class {
            if !classes.contains(p.as_str()) {
                errs.push(format!("positive_class `{p}` is not a class"));
            }
        }
        if let Some(s) = self.density_sigma {
            if !(s >= 0.0) {
                errs.push("density_sigma must be nonnegative".into());
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }

    /// Every record must name a known subject and image.
    pub fn check_records(&self, records: &[FixationRecord]) -> Result<()> {
        let subjects: HashSet<&str> = self.subjects.iter().map(|s| s.id.as_str()).collect();
        let images: HashSet<&str> = self.images.iter().map(|s| s.id.as_str()).collect();
        let mut errs = BTreeSet::new();
        for r in records {
            if !subjects.contains(r.subject_id.as_str()) {
                errs.insert(format!("unknown subject `{}`", r.subject_id));
            }
            if !images.contains(r.image_id.as_str()) {
                errs.insert(format!("unknown image `{}`", r.image_id));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs.into_iter().collect()))
        }
    }
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    DatasetManifest::from_json(&text, base)
}

/// Groups records by (subject, image), preserving record order within groups.
pub fn group_records(records: &[FixationRecord]) -> BTreeMap<(&str, &str), Vec<&FixationRecord>> {
    let mut out: BTreeMap<(&str, &str), Vec<&FixationRecord>> = BTreeMap::new();
    for r in records {
        out.entry((r.subject_id.as_str(), r.image_id.as_str()))
            .or_default()
            .push(r);
    }
    out
}
