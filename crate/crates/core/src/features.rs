//! Feature vectors and design matrices.
//!
//! A feature vector concatenates the metric scores of every registered model,
//! model-major: `[m1.metric1, .., m1.metricP, m2.metric1, ..]`.

use std::collections::{btree_map, BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::sync::Arc;

use rand::seq::IndexedRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaze::{
    blur_to_density, build_fixation_map, group_records, union_fixation_maps, ClassificationMode, DatasetManifest,
    DensityMap, FixationMap, FixationRecord, Pixel,
};
use crate::metrics::{evaluate_all, EvalInputs, MetricConfig, MetricId, PreparedSaliency, ShuffleSet};
use crate::saliency::{center_gaussian, ModelRegistry, SaliencyBank};
use crate::seed::{derive_rng, derive_seed};

/// Upper bound on shuffle-pool size, as a multiple of the hit count.
pub const SHUFFLE_CAP_FACTOR: usize = 10;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    columns: Vec<(String, MetricId)>,
}

impl FeatureLayout {
    pub fn new<S: AsRef<str>>(model_ids: &[S], metrics: &[MetricId]) -> Self {
        let columns = model_ids
            .iter()
            .flat_map(|m| metrics.iter().map(move |&k| (m.as_ref().to_string(), k)))
            .collect();
        FeatureLayout { columns }
    }

    pub fn from_config(registry: &ModelRegistry, metrics: &MetricConfig) -> Self {
        FeatureLayout::new(&registry.ids(), &metrics.ordered())
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn columns(&self) -> &[(String, MetricId)] {
        &self.columns
    }

    /// Column headers of the form `model.metric`.
    pub fn column_names(&self) -> Vec<String> {
        self.columns.iter().map(|(m, k)| format!("{m}.{k}")).collect()
    }

    /// Model ids in layout order.
    pub fn model_ids(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for (m, _) in &self.columns {
            if out.last() != Some(m) {
                out.push(m.clone());
            }
        }
        out
    }

    pub fn metric_ids(&self) -> Vec<MetricId> {
        let first = self.columns.first().map(|(m, _)| m.clone());
        self.columns
            .iter()
            .filter(|(m, _)| Some(m) == first.as_ref())
            .map(|&(_, k)| k)
            .collect()
    }

    /// Indices of the columns belonging to `models`, in layout order.
    pub fn model_columns<S: AsRef<str>>(&self, models: &[S]) -> Result<Vec<usize>> {
        let known = self.model_ids();
        for m in models {
            if !known.iter().any(|k| k == m.as_ref()) {
                return Err(Error::Layout(format!("unknown model `{}`", m.as_ref())));
            }
        }
        Ok(self
            .columns
            .iter()
            .enumerate()
            .filter(|(_, (m, _))| models.iter().any(|s| s.as_ref() == m))
            .map(|(i, _)| i)
            .collect())
    }

    pub fn select(&self, indices: &[usize]) -> FeatureLayout {
        FeatureLayout {
            columns: indices.iter().map(|&i| self.columns[i].clone()).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub layout: Arc<FeatureLayout>,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>, layout: Arc<FeatureLayout>) -> Result<Self> {
        if values.len() != layout.len() {
            return Err(Error::Layout(format!(
                "{} values for a layout of {} columns",
                values.len(),
                layout.len()
            )));
        }
        Ok(FeatureVector { values, layout })
    }
}

/// Run-wide settings shared by every feature computation.
#[derive(Clone, Debug)]
pub struct FeatureContext {
    pub metrics: MetricConfig,
    pub layout: Arc<FeatureLayout>,
    pub run_seed: u64,
    pub registry_hash: String,
}

impl FeatureContext {
    pub fn new(registry: &ModelRegistry, metrics: MetricConfig, run_seed: u64) -> Self {
        FeatureContext {
            layout: Arc::new(FeatureLayout::from_config(registry, &metrics)),
            metrics,
            run_seed,
            registry_hash: registry.hash(),
        }
    }
}

/// Saliency maps of one image, resized to the fixation resolution and
/// summarized once for reuse across every sample that viewed the image.
pub struct PreparedBank {
    pub image_id: String,
    models: Vec<(String, PreparedSaliency)>,
}

impl PreparedBank {
    pub fn new(bank: &SaliencyBank, width: usize, height: usize) -> Self {
        PreparedBank {
            image_id: bank.image_id.clone(),
            models: bank
                .maps
                .iter()
                .map(|m| (m.model_id.clone(), PreparedSaliency::new(m.resized(width, height).plane())))
                .collect(),
        }
    }
}

/// Per-call inputs of [`image_feature`].
pub struct ImageContext<'a> {
    pub shuffle: Option<&'a ShuffleSet>,
    pub baseline: &'a DensityMap,
    pub density_sigma: f64,
    /// Seed for this (sample, image) pair; each model derives its own stream.
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImageFeature {
    pub vector: FeatureVector,
    /// Number of features that took a documented fallback value.
    pub fallbacks: usize,
}

/// Baseline density for information gain: the center Gaussian as a density.
pub fn center_baseline(width: usize, height: usize) -> Result<DensityMap> {
    DensityMap::from_plane(center_gaussian(width, height)?.plane())
}

/// Concatenated metric scores of every model in `bank` against `fix`.
pub fn image_feature(
    fix: &FixationMap,
    bank: &PreparedBank,
    ctx: &FeatureContext,
    image: &ImageContext,
) -> Result<ImageFeature> {
    let models = ctx.layout.model_ids();
    if bank.models.len() != models.len() || bank.models.iter().zip(&models).any(|((a, _), b)| a != b) {
        return Err(Error::Layout(format!(
            "bank for `{}` has models {:?}, layout expects {:?}",
            bank.image_id,
            bank.models.iter().map(|(m, _)| m).collect::<Vec<_>>(),
            models
        )));
    }
    let density = blur_to_density(fix, image.density_sigma)?;
    let mut values = Vec::with_capacity(ctx.layout.len());
    let mut fallbacks = 0;
    for (model_id, prepared) in &bank.models {
        let inputs = EvalInputs {
            fixations: fix,
            density: &density,
            shuffle: image.shuffle,
            baseline: image.baseline,
            seed: derive_seed(image.seed, &[model_id]),
        };
        let eval = evaluate_all(prepared, &inputs, &ctx.metrics)?;
        fallbacks += eval.fallbacks.len();
        values.extend(eval.vector.values);
    }
    Ok(ImageFeature {
        vector: FeatureVector::new(values, ctx.layout.clone())?,
        fallbacks,
    })
}

/// Element-wise mean, summed in the given order.
pub fn subject_feature(per_image: &[FeatureVector]) -> Result<FeatureVector> {
    let first = per_image.first().ok_or(Error::EmptyInput("per-image features"))?;
    let mut acc = vec![0.0; first.values.len()];
    for f in per_image {
        if f.layout != first.layout {
            return Err(Error::Layout("per-image features differ in layout".into()));
        }
        for (a, v) in acc.iter_mut().zip(&f.values) {
            *a += v;
        }
    }
    let n = per_image.len() as f64;
    FeatureVector::new(acc.into_iter().map(|v| v / n).collect(), first.layout.clone())
}

/// Feature of the union of all subjects' maps on one image.
pub fn task_feature(
    maps: &[&FixationMap],
    bank: &PreparedBank,
    ctx: &FeatureContext,
    image: &ImageContext,
) -> Result<ImageFeature> {
    let union = union_fixation_maps(maps.iter().copied())?;
    image_feature(&union, bank, ctx, image)
}

/// Seeded subsample of a shuffle pool down to `SHUFFLE_CAP_FACTOR * hits`.
pub fn cap_shuffle_pool(pool: BTreeSet<Pixel>, hits: usize, seed: u64) -> ShuffleSet {
    let cap = SHUFFLE_CAP_FACTOR * hits;
    if pool.len() <= cap {
        return ShuffleSet::new(pool);
    }
    let all: Vec<Pixel> = pool.into_iter().collect();
    let mut rng = derive_rng(seed, &["shuffle-cap"]);
    ShuffleSet::new(all.choose_multiple(&mut rng, cap).copied())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub sample_id: String,
    pub label: usize,
    /// Rows sharing a group never straddle a train/test split. Subject id in
    /// subject mode, image file path in task mode.
    pub group: String,
    /// Groups whose fixations entered this row's shuffle pools.
    pub pool_groups: Vec<String>,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub sample_id: String,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixProvenance {
    pub seed: u64,
    pub registry_hash: String,
    pub metric_config_hash: String,
    /// Trials without usable fixations, skipped during subject averaging.
    pub skipped_trials: usize,
    pub excluded: Vec<Exclusion>,
    /// Features computed through the constant-map or empty-pool fallbacks.
    pub degenerate_features: usize,
    /// Subjects the matrix was restricted to, when not all.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subjects: Option<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignMatrix {
    pub mode: ClassificationMode,
    pub class_names: Vec<String>,
    pub positive_class: String,
    pub layout: FeatureLayout,
    pub rows: Vec<LabeledSample>,
    pub provenance: MatrixProvenance,
}

impl DesignMatrix {
    pub fn n_features(&self) -> usize {
        self.layout.len()
    }

    pub fn feature(&self, row: usize) -> FeatureVector {
        FeatureVector {
            values: self.rows[row].values.clone(),
            layout: Arc::new(self.layout.clone()),
        }
    }

    /// Whether each row belongs to the positive class.
    pub fn binary_labels(&self) -> Result<Vec<bool>> {
        if self.class_names.len() != 2 {
            return Err(Error::DegenerateLabel(format!(
                "binary classification needs 2 classes, found {}",
                self.class_names.len()
            )));
        }
        let pos = self
            .class_names
            .iter()
            .position(|c| *c == self.positive_class)
            .ok_or_else(|| Error::DegenerateLabel(format!("unknown positive class `{}`", self.positive_class)))?;
        Ok(self.rows.iter().map(|r| r.label == pos).collect())
    }

    /// Keeps only the columns of `models`, for model-subset ablation.
    pub fn select_models<S: AsRef<str>>(&self, models: &[S]) -> Result<DesignMatrix> {
        let idx = self.layout.model_columns(models)?;
        let mut out = self.clone();
        out.layout = self.layout.select(&idx);
        for r in &mut out.rows {
            r.values = idx.iter().map(|&i| r.values[i]).collect();
        }
        Ok(out)
    }

    fn check_classes(&self) -> Result<()> {
        let missing: Vec<String> = self
            .class_names
            .iter()
            .enumerate()
            .filter(|(k, _)| !self.rows.iter().any(|r| r.label == *k))
            .map(|(_, c)| format!("class `{c}` has no rows"))
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(missing))
        }
    }

    /// CSV with header `sample_id,label,<model>.<metric>,...`; labels are
    /// class names and values use the shortest round-trip representation.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["sample_id".to_string(), "label".to_string()];
        header.extend(self.layout.column_names());
        w.write_record(&header).map_err(csv_err)?;
        for r in &self.rows {
            let mut rec = vec![r.sample_id.clone(), self.class_names[r.label].clone()];
            rec.extend(r.values.iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::Format(e.to_string()))
    }

    /// Sidecar carrying everything the CSV does not: classes, groups,
    /// shuffle-pool sources, and provenance.
    pub fn sidecar(&self) -> MatrixSidecar {
        MatrixSidecar {
            mode: self.mode,
            class_names: self.class_names.clone(),
            positive_class: self.positive_class.clone(),
            layout: self.layout.clone(),
            rows: self
                .rows
                .iter()
                .map(|r| RowSidecar {
                    sample_id: r.sample_id.clone(),
                    group: r.group.clone(),
                    pool_groups: r.pool_groups.clone(),
                })
                .collect(),
            provenance: self.provenance.clone(),
        }
    }

    /// Rebuilds a matrix from its CSV and sidecar.
    pub fn read_csv<R: Read>(input: R, sidecar: &MatrixSidecar) -> Result<DesignMatrix> {
        let mut r = csv::Reader::from_reader(input);
        let header: Vec<String> = r.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
        let mut expected = vec!["sample_id".to_string(), "label".to_string()];
        expected.extend(sidecar.layout.column_names());
        if header != expected {
            return Err(Error::Format("feature CSV header does not match its sidecar layout".into()));
        }
        let by_id: BTreeMap<&str, &RowSidecar> = sidecar.rows.iter().map(|s| (s.sample_id.as_str(), s)).collect();
        let mut rows = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let line = i as u64 + 2;
            let rec = rec.map_err(csv_err)?;
            let perr = |message: String| Error::Parse { line, message };
            let id = &rec[0];
            let label = sidecar
                .class_names
                .iter()
                .position(|c| c == &rec[1])
                .ok_or_else(|| perr(format!("unknown label `{}`", &rec[1])))?;
            let values = rec
                .iter()
                .skip(2)
                .map(|v| v.parse::<f64>().map_err(|e| perr(format!("`{v}`: {e}"))))
                .collect::<Result<Vec<f64>>>()?;
            if values.len() != sidecar.layout.len() || values.iter().any(|v| !v.is_finite()) {
                return Err(perr("wrong arity or non-finite value".into()));
            }
            let side = by_id.get(id).ok_or_else(|| perr(format!("sample `{id}` missing from sidecar")))?;
            rows.push(LabeledSample {
                sample_id: id.to_string(),
                label,
                group: side.group.clone(),
                pool_groups: side.pool_groups.clone(),
                values,
            });
        }
        let m = DesignMatrix {
            mode: sidecar.mode,
            class_names: sidecar.class_names.clone(),
            positive_class: sidecar.positive_class.clone(),
            layout: sidecar.layout.clone(),
            rows,
            provenance: sidecar.provenance.clone(),
        };
        m.check_classes()?;
        Ok(m)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(format!("feature CSV: {e}"))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RowSidecar {
    pub sample_id: String,
    pub group: String,
    pub pool_groups: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixSidecar {
    pub mode: ClassificationMode,
    pub class_names: Vec<String>,
    pub positive_class: String,
    pub layout: FeatureLayout,
    pub rows: Vec<RowSidecar>,
    pub provenance: MatrixProvenance,
}

/// Optional restrictions for [`build_design_matrix`].
#[derive(Clone, Debug, Default)]
pub struct BuildOptions {
    /// Use only these subjects' fixations.
    pub subjects: Option<BTreeSet<String>>,
    /// Task mode: partition id per row group. Shuffle pools draw only from
    /// rows in the same partition, so a held-out partition never feeds the
    /// features of another.
    pub pool_partition: Option<BTreeMap<String, usize>>,
}

struct RowResult {
    sample: Option<LabeledSample>,
    skipped: usize,
    fallbacks: usize,
    exclusion: Option<Exclusion>,
}

/// One row per subject (subject mode) or per image id (task mode).
pub fn build_design_matrix(
    manifest: &DatasetManifest,
    records: &[FixationRecord],
    banks: &BTreeMap<String, SaliencyBank>,
    ctx: &FeatureContext,
    opts: &BuildOptions,
) -> Result<DesignMatrix> {
    manifest.check_records(records)?;
    let keep = |s: &str| opts.subjects.as_ref().is_none_or(|set| set.contains(s));
    let records: Vec<FixationRecord> = records.iter().filter(|r| keep(&r.subject_id)).cloned().collect();
    let grouped = group_records(&records);

    let mut prepared = BTreeMap::new();
    let mut baselines = BTreeMap::new();
    for img in &manifest.images {
        let bank = banks
            .get(&img.id)
            .ok_or_else(|| Error::Layout(format!("no saliency bank for image `{}`", img.id)))?;
        prepared.insert(img.id.as_str(), PreparedBank::new(bank, img.width, img.height));
        if let btree_map::Entry::Vacant(e) = baselines.entry((img.width, img.height)) {
            e.insert(center_baseline(img.width, img.height)?);
        }
    }

    // Fixation map of every (subject, image) trial with at least one hit.
    let mut trials: BTreeMap<(&str, &str), FixationMap> = BTreeMap::new();
    for ((s, i), recs) in &grouped {
        let img = manifest.image(i).expect("records checked against manifest");
        let map = build_fixation_map(recs.iter().copied(), img.width, img.height)?;
        trials.insert((s, i), map);
    }

    let results: Vec<RowResult> = match manifest.mode {
        ClassificationMode::Subject => {
            let subjects: Vec<_> = manifest.subjects.iter().filter(|s| keep(&s.id)).collect();
            subjects
                .par_iter()
                .map(|subj| -> Result<RowResult> {
                    let mut usable = Vec::new();
                    for img in &manifest.images {
                        if let Some(map) = trials.get(&(subj.id.as_str(), img.id.as_str())) {
                            if map.hit_count() > 0 {
                                usable.push((img, map));
                            }
                        }
                    }
                    let skipped = manifest.images.len() - usable.len();
                    if usable.is_empty() {
                        return Ok(RowResult {
                            sample: None,
                            skipped,
                            fallbacks: 0,
                            exclusion: Some(Exclusion {
                                sample_id: subj.id.clone(),
                                reason: "no trial with in-bounds fixations".into(),
                            }),
                        });
                    }
                    let mut per_image = Vec::with_capacity(usable.len());
                    let mut fallbacks = 0;
                    for (img, map) in &usable {
                        // The subject's own fixations on other images: shared
                        // viewing biases cancel and no other sample is involved.
                        let pool: BTreeSet<Pixel> = usable
                            .iter()
                            .filter(|(other, _)| other.id != img.id)
                            .flat_map(|(_, m)| m.hits().iter().copied())
                            .collect();
                        let seed = derive_seed(ctx.run_seed, &["features", &subj.id, &img.id]);
                        let shuffle = cap_shuffle_pool(pool, map.hit_count(), seed);
                        let f = image_feature(
                            map,
                            &prepared[img.id.as_str()],
                            ctx,
                            &ImageContext {
                                shuffle: Some(&shuffle),
                                baseline: &baselines[&(img.width, img.height)],
                                density_sigma: manifest.density_sigma_for(img),
                                seed,
                            },
                        )?;
                        fallbacks += f.fallbacks;
                        per_image.push(f.vector);
                    }
                    let label = manifest.class_index(&subj.label).expect("validated manifest");
                    Ok(RowResult {
                        sample: Some(LabeledSample {
                            sample_id: subj.id.clone(),
                            label,
                            group: subj.id.clone(),
                            pool_groups: vec![subj.id.clone()],
                            values: subject_feature(&per_image)?.values,
                        }),
                        skipped,
                        fallbacks,
                        exclusion: None,
                    })
                })
                .collect::<Result<_>>()?
        }
        ClassificationMode::Task => {
            let labels = manifest.task_labels.as_ref().expect("validated task manifest");
            let group_of = |id: &str| manifest.image(id).expect("known").path.to_string_lossy().into_owned();
            // Union map per image id.
            let mut unions: BTreeMap<&str, FixationMap> = BTreeMap::new();
            for img in &manifest.images {
                let maps: Vec<&FixationMap> = trials
                    .iter()
                    .filter(|((_, i), _)| *i == img.id)
                    .map(|(_, m)| m)
                    .collect();
                if !maps.is_empty() {
                    unions.insert(img.id.as_str(), union_fixation_maps(maps)?);
                }
            }
            let partition = |g: &str| opts.pool_partition.as_ref().map(|p| p.get(g).copied());
            manifest
                .images
                .par_iter()
                .map(|img| -> Result<RowResult> {
                    let excluded = |reason: &str| RowResult {
                        sample: None,
                        skipped: 0,
                        fallbacks: 0,
                        exclusion: Some(Exclusion {
                            sample_id: img.id.clone(),
                            reason: reason.into(),
                        }),
                    };
                    let Some(map) = unions.get(img.id.as_str()).filter(|m| m.hit_count() > 0) else {
                        return Ok(excluded("no in-bounds fixations"));
                    };
                    let group = group_of(&img.id);
                    let part = partition(&group);
                    let mut pool = BTreeSet::new();
                    let mut pool_groups = BTreeSet::new();
                    for (other, m) in &unions {
                        let g = group_of(other);
                        if g == group || partition(&g) != part {
                            continue;
                        }
                        pool.extend(m.hits().iter().copied());
                        pool_groups.insert(g);
                    }
                    let seed = derive_seed(ctx.run_seed, &["features", &img.id]);
                    let shuffle = cap_shuffle_pool(pool, map.hit_count(), seed);
                    let f = image_feature(
                        map,
                        &prepared[img.id.as_str()],
                        ctx,
                        &ImageContext {
                            shuffle: Some(&shuffle),
                            baseline: &baselines[&(img.width, img.height)],
                            density_sigma: manifest.density_sigma_for(img),
                            seed,
                        },
                    )?;
                    let label = manifest.class_index(&labels[&img.id]).expect("validated manifest");
                    Ok(RowResult {
                        sample: Some(LabeledSample {
                            sample_id: img.id.clone(),
                            label,
                            group,
                            pool_groups: pool_groups.into_iter().collect(),
                            values: f.vector.values,
                        }),
                        skipped: 0,
                        fallbacks: f.fallbacks,
                        exclusion: None,
                    })
                })
                .collect::<Result<_>>()?
        }
    };

    let mut rows = Vec::new();
    let mut provenance = MatrixProvenance {
        seed: ctx.run_seed,
        registry_hash: ctx.registry_hash.clone(),
        metric_config_hash: ctx.metrics.hash(),
        skipped_trials: 0,
        excluded: Vec::new(),
        degenerate_features: 0,
        subjects: opts.subjects.as_ref().map(|s| s.iter().cloned().collect()),
    };
    for r in results {
        provenance.skipped_trials += r.skipped;
        provenance.degenerate_features += r.fallbacks;
        provenance.excluded.extend(r.exclusion);
        rows.extend(r.sample);
    }
    if provenance.skipped_trials > 0 {
        log::warn!("skipped {} trials without usable fixations", provenance.skipped_trials);
    }
    for e in &provenance.excluded {
        log::warn!("excluded `{}`: {}", e.sample_id, e.reason);
    }
    rows.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    let m = DesignMatrix {
        mode: manifest.mode,
        class_names: manifest.class_names.clone(),
        positive_class: manifest.positive_class().to_string(),
        layout: (*ctx.layout).clone(),
        rows,
        provenance,
    };
    m.check_classes()?;
    Ok(m)
}
