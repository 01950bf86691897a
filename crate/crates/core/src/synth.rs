//! Synthetic images and class-dependent gaze.
//!
//! Each class of observers samples fixations from a mixture of a behavior
//! density (salient regions, image center, or nothing in particular) and
//! uniform noise. Classes that differ in behavior leave a trace in how well
//! saliency models predict their fixations.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaze::{
    write_fixation_table, ClassificationMode, DatasetManifest, DensityMap, FixationRecord, ImageEntry, Pixel,
    SubjectEntry,
};
use crate::imaging::{ImageBuffer, Plane};
use crate::saliency::{center_gaussian, itti_koch};
use crate::seed::{derive_rng, Rng};
use crate::util::write_atomic;

pub const MIN_SYNTH_SIZE: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BehaviorKind {
    /// Fixations proportional to the Itti-Koch map of the image.
    SaliencyFollower,
    /// Fixations proportional to a centered Gaussian.
    CenterBiased,
    UniformNoise,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassBehavior {
    pub name: String,
    pub behavior: BehaviorKind,
    /// Weight of the behavior density against uniform noise.
    pub lambda: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_images: usize,
    pub width: usize,
    pub height: usize,
    pub subjects_per_class: usize,
    pub fixations_per_trial: usize,
    pub classes: Vec<ClassBehavior>,
    pub seed: u64,
    /// Also emit a task-mode manifest with one row per (image, class).
    pub task_variant: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_images: 30,
            width: 64,
            height: 64,
            subjects_per_class: 20,
            fixations_per_trial: 8,
            classes: vec![
                ClassBehavior {
                    name: "follower".into(),
                    behavior: BehaviorKind::SaliencyFollower,
                    lambda: 0.9,
                },
                ClassBehavior {
                    name: "center".into(),
                    behavior: BehaviorKind::CenterBiased,
                    lambda: 0.9,
                },
            ],
            seed: 0,
            task_variant: false,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.n_images == 0 {
            errs.push("n_images must be at least 1".to_string());
        }
        if self.subjects_per_class == 0 {
            errs.push("subjects_per_class must be at least 1".to_string());
        }
        if self.fixations_per_trial == 0 {
            errs.push("fixations_per_trial must be at least 1".to_string());
        }
        if self.width < MIN_SYNTH_SIZE || self.height < MIN_SYNTH_SIZE {
            errs.push(format!(
                "image size {}x{} below {MIN_SYNTH_SIZE}x{MIN_SYNTH_SIZE}",
                self.width, self.height
            ));
        }
        if self.classes.len() < 2 {
            errs.push("at least two classes are required".to_string());
        }
        let names: BTreeSet<&str> = self.classes.iter().map(|c| c.name.as_str()).collect();
        if names.len() != self.classes.len() {
            errs.push("class names must be unique".to_string());
        }
        for c in &self.classes {
            if !(0.0..=1.0).contains(&c.lambda) {
                errs.push(format!("class `{}`: lambda {} outside [0, 1]", c.name, c.lambda));
            }
            if c.name.is_empty() || c.name.contains('#') {
                errs.push(format!("class name `{}` must be nonempty and free of `#`", c.name));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs.join("; ")))
        }
    }
}

fn image_id(k: usize) -> String {
    format!("img{k:03}")
}

/// Gray background with 3 to 6 high-contrast blobs or textured patches.
/// Values are quantized to 8 bits so the written PNGs decode to exactly the
/// in-memory images.
pub fn generate_images(cfg: &SynthConfig, rng: &mut Rng) -> Vec<(String, ImageBuffer)> {
    let (w, h) = (cfg.width, cfg.height);
    let quant = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() / 255.0;
    (0..cfg.n_images)
        .map(|k| {
            let bg: f64 = rng.random_range(0.35..0.65);
            let mut planes = [Plane::filled(w, h, bg), Plane::filled(w, h, bg), Plane::filled(w, h, bg)];
            let n_items = rng.random_range(3..=6);
            for _ in 0..n_items {
                let r = rng.random_range(0.06..0.14) * w.min(h) as f64;
                let cx = rng.random_range(r..w as f64 - r);
                let cy = rng.random_range(r..h as f64 - r);
                let color: [f64; 3] = if rng.random_bool(0.5) {
                    // Push away from the background so the item always pops out.
                    let v = if bg < 0.5 { rng.random_range(0.85..1.0) } else { rng.random_range(0.0..0.15) };
                    [v, v, v]
                } else {
                    let c = rng.random_range(0..3);
                    let mut col = [0.1; 3];
                    col[c] = 0.95;
                    col
                };
                let textured = rng.random_bool(0.5);
                let period = rng.random_range(2..5) as f64;
                for y in 0..h {
                    for x in 0..w {
                        let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                        if textured {
                            if dx.abs() > r || dy.abs() > r {
                                continue;
                            }
                            let on = ((dx / period).floor() + (dy / period).floor()) as i64 % 2 == 0;
                            for c in 0..3 {
                                planes[c].set(x, y, if on { color[c] } else { 1.0 - color[c] });
                            }
                        } else {
                            let d2 = dx * dx + dy * dy;
                            let a = (-d2 / (2.0 * (r / 2.0).powi(2))).exp();
                            if a < 0.01 {
                                continue;
                            }
                            for c in 0..3 {
                                let v = planes[c].get(x, y);
                                planes[c].set(x, y, (1.0 - a) * v + a * color[c]);
                            }
                        }
                    }
                }
            }
            let [r, g, b] = planes.map(|p| p.map(quant));
            (image_id(k), ImageBuffer::rgb(r, g, b).expect("values in [0, 1]"))
        })
        .collect()
}

/// `n` independent draws from the categorical distribution over pixels.
pub fn sample_fixations_from_density(d: &DensityMap, n: usize, rng: &mut Rng) -> Vec<Pixel> {
    let mut cdf = Vec::with_capacity(d.values().len());
    let mut acc = 0.0;
    for &v in d.values() {
        acc += v;
        cdf.push(acc);
    }
    let w = d.width();
    (0..n)
        .map(|_| {
            let u = rng.random::<f64>() * acc;
            let i = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
            (i % w, i / w)
        })
        .collect()
}

fn behavior_density(kind: BehaviorKind, img: &ImageBuffer) -> Result<DensityMap> {
    let (w, h) = (img.width(), img.height());
    let uniform = DensityMap::uniform(w, h);
    let map = match kind {
        BehaviorKind::UniformNoise => return Ok(uniform),
        BehaviorKind::SaliencyFollower => itti_koch(img)?,
        BehaviorKind::CenterBiased => center_gaussian(w, h)?,
    };
    if map.is_degenerate() {
        return Ok(uniform);
    }
    DensityMap::from_plane(map.plane())
}

/// A generated dataset held in memory, as written to disk.
#[derive(Clone, Debug)]
pub struct SynthDataset {
    pub manifest: DatasetManifest,
    pub records: Vec<FixationRecord>,
    pub manifest_path: PathBuf,
    pub fixations_path: PathBuf,
    pub task: Option<TaskVariant>,
}

#[derive(Clone, Debug)]
pub struct TaskVariant {
    pub manifest: DatasetManifest,
    pub records: Vec<FixationRecord>,
    pub manifest_path: PathBuf,
    pub fixations_path: PathBuf,
}

/// Writes `images/`, `manifest.json` and `fixations.csv` under `out_dir`
/// (plus `manifest_task.json` and `fixations_task.csv` for the task
/// variant). A single random stream drives the whole dataset.
pub fn generate_dataset(cfg: &SynthConfig, out_dir: &Path) -> Result<SynthDataset> {
    cfg.validate()?;
    let mut rng = derive_rng(cfg.seed, &["synth"]);
    let images = generate_images(cfg, &mut rng);

    let img_dir = out_dir.join("images");
    std::fs::create_dir_all(&img_dir).map_err(|e| Error::io(&img_dir, e))?;
    let mut entries = Vec::with_capacity(images.len());
    for (id, img) in &images {
        let rel = PathBuf::from("images").join(format!("{id}.png"));
        img.save_png(&out_dir.join(&rel))?;
        entries.push(ImageEntry {
            id: id.clone(),
            path: rel,
            width: img.width(),
            height: img.height(),
        });
    }

    let uniform = DensityMap::uniform(cfg.width, cfg.height);
    let mut densities: BTreeMap<(usize, usize), DensityMap> = BTreeMap::new();
    for (ci, class) in cfg.classes.iter().enumerate() {
        for (ii, (_, img)) in images.iter().enumerate() {
            let d = behavior_density(class.behavior, img)?.mix(&uniform, class.lambda)?;
            densities.insert((ci, ii), d);
        }
    }

    let mut subjects = Vec::new();
    let mut records = Vec::new();
    for (ci, class) in cfg.classes.iter().enumerate() {
        for s in 0..cfg.subjects_per_class {
            let sid = format!("{}{s:02}", class.name);
            subjects.push(SubjectEntry {
                id: sid.clone(),
                label: class.name.clone(),
            });
            for (ii, (id, _)) in images.iter().enumerate() {
                let pts = sample_fixations_from_density(&densities[&(ci, ii)], cfg.fixations_per_trial, &mut rng);
                for (k, (x, y)) in pts.into_iter().enumerate() {
                    records.push(FixationRecord {
                        subject_id: sid.clone(),
                        image_id: id.clone(),
                        index: k as u32,
                        x: x as f64 + 0.5,
                        y: y as f64 + 0.5,
                        duration_ms: Some(rng.random_range(150..450) as f64),
                    });
                }
            }
        }
    }

    let class_names: Vec<String> = cfg.classes.iter().map(|c| c.name.clone()).collect();
    let manifest = DatasetManifest {
        mode: ClassificationMode::Subject,
        class_names: class_names.clone(),
        images: entries.clone(),
        subjects,
        task_labels: None,
        positive_class: None,
        density_sigma: None,
        base_dir: out_dir.to_path_buf(),
    };
    let manifest_path = out_dir.join("manifest.json");
    let fixations_path = out_dir.join("fixations.csv");
    write_atomic(&manifest_path, manifest.to_json().as_bytes())?;
    write_atomic(&fixations_path, &table_bytes(&records)?)?;
    manifest.validate()?;

    let task = if cfg.task_variant {
        Some(task_variant(cfg, &manifest, &records, out_dir)?)
    } else {
        None
    };
    Ok(SynthDataset {
        manifest,
        records,
        manifest_path,
        fixations_path,
        task,
    })
}

fn table_bytes(records: &[FixationRecord]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_fixation_table(&mut buf, records)?;
    Ok(buf)
}

/// Each image appears once per class as `<image>#<class>`, sharing the file.
/// Subjects keep their ids, so each (image, class) row is the union of that
/// class's subjects and subject-level splits remain possible.
fn task_variant(
    cfg: &SynthConfig,
    subject_manifest: &DatasetManifest,
    records: &[FixationRecord],
    out_dir: &Path,
) -> Result<TaskVariant> {
    let class_of: BTreeMap<&str, &str> = subject_manifest
        .subjects
        .iter()
        .map(|s| (s.id.as_str(), s.label.as_str()))
        .collect();
    let mut images = Vec::new();
    let mut labels = BTreeMap::new();
    for img in &subject_manifest.images {
        for c in &cfg.classes {
            let id = format!("{}#{}", img.id, c.name);
            labels.insert(id.clone(), c.name.clone());
            images.push(ImageEntry { id, ..img.clone() });
        }
    }
    let subjects = subject_manifest.subjects.clone();
    let task_records: Vec<FixationRecord> = records
        .iter()
        .map(|r| FixationRecord {
            image_id: format!("{}#{}", r.image_id, class_of[r.subject_id.as_str()]),
            ..r.clone()
        })
        .collect();
    let manifest = DatasetManifest {
        mode: ClassificationMode::Task,
        class_names: subject_manifest.class_names.clone(),
        images,
        subjects,
        task_labels: Some(labels),
        positive_class: None,
        density_sigma: None,
        base_dir: out_dir.to_path_buf(),
    };
    manifest.validate()?;
    let manifest_path = out_dir.join("manifest_task.json");
    let fixations_path = out_dir.join("fixations_task.csv");
    write_atomic(&manifest_path, manifest.to_json().as_bytes())?;
    write_atomic(&fixations_path, &table_bytes(&task_records)?)?;
    Ok(TaskVariant {
        manifest,
        records: task_records,
        manifest_path,
        fixations_path,
    })
}
