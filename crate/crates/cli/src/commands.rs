//! One function per subcommand. Each reads the artifacts of the previous
//! stage from the output directory and writes its own with a sidecar.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use gazesal_core::features::{build_design_matrix, BuildOptions, DesignMatrix, FeatureContext, MatrixSidecar};
use gazesal_core::gaze::{load_manifest, read_fixation_file, ClassificationMode, DatasetManifest, FixationRecord};
use gazesal_core::imaging::ImageBuffer;
use gazesal_core::learners::{
    ablation_sweep, cross_validate, cross_validate_split, format_table, pool_partition, split_subjects, AblationRow,
    CvReport, Protocol,
};
use gazesal_core::saliency::{read_smf, write_smf, ModelRegistry, SaliencyBank, SaliencyMap};
use gazesal_core::synth::{generate_dataset, SynthDataset};
use gazesal_core::util::write_atomic;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::provenance::{file_sha256, sha256_hex, write_sidecar, write_with_provenance};
use crate::CliError;

pub const FEATURES_CSV: &str = "features.csv";
pub const CROSSVAL_JSON: &str = "crossval.json";
pub const CROSSVAL_TABLE: &str = "crossval.txt";
pub const ABLATION_CSV: &str = "ablation.csv";
pub const REPORT_TXT: &str = "report.txt";
pub const SALIENCY_INDEX: &str = "saliency_index.json";

fn data_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn sidecar_json(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

/// Generates the synthetic dataset under `<out>/data`. The generator seed is
/// the run seed; `synth.seed` in the config is ignored.
pub fn cmd_synth(cfg: &RunConfig) -> Result<SynthDataset, CliError> {
    cfg.validate()?;
    let mut synth = cfg.synth.clone();
    synth.seed = cfg.seed()?;
    synth.validate()?;
    let dir = cfg.out.join("data");
    let ds = generate_dataset(&synth, &dir)?;
    let mut written = vec![ds.manifest_path.clone(), ds.fixations_path.clone()];
    if let Some(t) = &ds.task {
        written.extend([t.manifest_path.clone(), t.fixations_path.clone()]);
    }
    for path in written {
        let bytes = std::fs::read(&path).map_err(|e| data_err(&path, e))?;
        write_sidecar(&path, &bytes, "synth", cfg, BTreeMap::new())?;
    }
    log::info!(
        "synthesized {} images, {} fixations into {}",
        ds.manifest.images.len(),
        ds.records.len(),
        dir.display()
    );
    Ok(ds)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SaliencySummary {
    pub computed: usize,
    pub cached: usize,
    /// `(image id, message)` for every image that could not be processed.
    pub failed: Vec<(String, String)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct IndexEntry {
    content_hash: String,
    maps: Vec<String>,
}

fn smf_path(cache: &Path, content_hash: &str, model_id: &str, params_hash: &str) -> PathBuf {
    cache.join(content_hash).join(format!("{model_id}-{params_hash}.smf"))
}

fn load_inputs(cfg: &RunConfig) -> Result<(DatasetManifest, Vec<FixationRecord>), CliError> {
    let mpath = cfg.manifest_path();
    if !mpath.exists() {
        return Err(CliError::Config(format!("manifest {} does not exist", mpath.display())));
    }
    let fpath = cfg.fixations_path();
    if !fpath.exists() {
        return Err(CliError::Config(format!("fixation table {} does not exist", fpath.display())));
    }
    let manifest = load_manifest(&mpath)?;
    let records = read_fixation_file(&fpath)?;
    manifest.check_records(&records)?;
    Ok((manifest, records))
}

/// Computes or loads every (image, model) map. Images that fail are listed in
/// the summary and left out of the returned banks.
fn saliency_banks(
    cfg: &RunConfig,
    manifest: &DatasetManifest,
    registry: &ModelRegistry,
) -> Result<(SaliencySummary, BTreeMap<String, SaliencyBank>), CliError> {
    let cache = cfg.cache_dir();
    // Task manifests list an image once per class; compute each file once.
    let mut by_path: BTreeMap<&Path, Vec<&str>> = BTreeMap::new();
    for img in &manifest.images {
        by_path.entry(&img.path).or_default().push(&img.id);
    }
    struct Outcome {
        ids: Vec<String>,
        result: Result<(IndexEntry, Vec<SaliencyMap>, usize, usize), String>,
    }
    let outcomes: Vec<Outcome> = by_path
        .par_iter()
        .map(|(rel, ids)| {
            let entry = manifest.image(ids[0]).expect("listed image");
            let path = manifest.resolve_path(entry);
            let run = || -> Result<(IndexEntry, Vec<SaliencyMap>, usize, usize), String> {
                let bytes = std::fs::read(&path).map_err(|e| format!("{}: {e}", rel.display()))?;
                let hash = sha256_hex(&bytes);
                let mut img: Option<ImageBuffer> = None;
                let (mut computed, mut cached) = (0, 0);
                let mut maps = Vec::with_capacity(registry.len());
                let mut files = Vec::with_capacity(registry.len());
                for spec in registry.models() {
                    let file = smf_path(&cache, &hash, &spec.id, &spec.params_hash());
                    let map = if file.exists() {
                        cached += 1;
                        read_smf(&file, &spec.id).map_err(|e| e.to_string())?
                    } else {
                        if img.is_none() {
                            let decoded = ImageBuffer::decode(&bytes).map_err(|e| format!("{}: {e}", rel.display()))?;
                            if (decoded.width(), decoded.height()) != (entry.width, entry.height) {
                                return Err(format!(
                                    "{}: decoded {}x{}, manifest says {}x{}",
                                    rel.display(),
                                    decoded.width(),
                                    decoded.height(),
                                    entry.width,
                                    entry.height
                                ));
                            }
                            img = Some(decoded);
                        }
                        let mut map = spec
                            .config
                            .compute(img.as_ref().unwrap())
                            .map_err(|e| format!("model `{}`: {e}", spec.id))?;
                        map.model_id = spec.id.clone();
                        write_smf(&file, &map).map_err(|e| e.to_string())?;
                        computed += 1;
                        map
                    };
                    files.push(file.strip_prefix(&cache).unwrap_or(&file).to_string_lossy().into_owned());
                    maps.push(map);
                }
                Ok((IndexEntry { content_hash: hash, maps: files }, maps, computed, cached))
            };
            Outcome {
                ids: ids.iter().map(|s| s.to_string()).collect(),
                result: run(),
            }
        })
        .collect();

    let mut summary = SaliencySummary::default();
    let mut banks = BTreeMap::new();
    let mut index = BTreeMap::new();
    for o in outcomes {
        match o.result {
            Ok((entry, maps, computed, cached)) => {
                summary.computed += computed;
                summary.cached += cached;
                for id in &o.ids {
                    banks.insert(id.clone(), SaliencyBank { image_id: id.clone(), maps: maps.clone() });
                    index.insert(id.clone(), entry.clone());
                }
            }
            Err(msg) => {
                for id in o.ids {
                    log::error!("image `{id}`: {msg}");
                    summary.failed.push((id, msg.clone()));
                }
            }
        }
    }
    summary.failed.sort();
    let json = serde_json::to_string_pretty(&index).expect("index serializes");
    let mut inputs = BTreeMap::new();
    inputs.insert("registry".to_string(), registry.hash());
    write_with_provenance(&cfg.out.join(SALIENCY_INDEX), json.as_bytes(), "saliency", cfg, inputs)?;
    Ok((summary, banks))
}

fn failure_error(failed: &[(String, String)]) -> CliError {
    let list: Vec<String> = failed.iter().map(|(id, m)| format!("  {id}: {m}")).collect();
    CliError::Data(format!("{} image(s) failed:\n{}", failed.len(), list.join("\n")))
}

/// Fills the saliency cache. Cached maps are never recomputed. Failing images
/// do not stop the run but make it end with a data error.
pub fn cmd_saliency(cfg: &RunConfig) -> Result<SaliencySummary, CliError> {
    cfg.validate()?;
    let registry = cfg.registry.build()?;
    let (manifest, _) = load_inputs(cfg)?;
    let (summary, _) = saliency_banks(cfg, &manifest, &registry)?;
    log::info!("saliency: {} computed, {} cached, {} failed", summary.computed, summary.cached, summary.failed.len());
    if !summary.failed.is_empty() {
        return Err(failure_error(&summary.failed));
    }
    Ok(summary)
}

pub struct FeaturesOutput {
    pub matrix: DesignMatrix,
    /// Half-subjects protocol: matrices from each subject half.
    pub split: Option<(DesignMatrix, DesignMatrix)>,
    pub csv_path: PathBuf,
}

fn write_matrix(cfg: &RunConfig, m: &DesignMatrix, csv: &Path, inputs: &BTreeMap<String, String>) -> Result<(), CliError> {
    let mut bytes = Vec::new();
    m.write_csv(&mut bytes)?;
    write_with_provenance(csv, &bytes, "features", cfg, inputs.clone())?;
    let side = serde_json::to_string_pretty(&m.sidecar()).expect("sidecar serializes");
    write_with_provenance(&sidecar_json(csv), side.as_bytes(), "features", cfg, inputs.clone())
}

/// Reads a feature CSV and its JSON sidecar.
pub fn read_matrix(csv: &Path) -> Result<DesignMatrix, CliError> {
    let side_path = sidecar_json(csv);
    let side_text = std::fs::read_to_string(&side_path).map_err(|e| data_err(&side_path, e))?;
    let side: MatrixSidecar = serde_json::from_str(&side_text).map_err(|e| data_err(&side_path, e))?;
    let file = std::fs::File::open(csv).map_err(|e| data_err(csv, e))?;
    Ok(DesignMatrix::read_csv(std::io::BufReader::new(file), &side)?)
}

fn split_paths(csv: &Path) -> (PathBuf, PathBuf) {
    (csv.with_file_name("features.train.csv"), csv.with_file_name("features.test.csv"))
}

pub fn cmd_features(cfg: &RunConfig) -> Result<FeaturesOutput, CliError> {
    cfg.validate()?;
    let seed = cfg.seed()?;
    let registry = cfg.registry.build()?;
    let (manifest, records) = load_inputs(cfg)?;
    if manifest.mode == ClassificationMode::Task {
        cfg.protocol.id.check_mode(manifest.mode)?;
    }
    let (summary, banks) = saliency_banks(cfg, &manifest, &registry)?;
    if !summary.failed.is_empty() {
        return Err(failure_error(&summary.failed));
    }
    let ctx = FeatureContext::new(&registry, cfg.metrics.clone(), seed);
    let mut opts = BuildOptions::default();
    if manifest.mode == ClassificationMode::Task {
        let groups: BTreeSet<String> = manifest.images.iter().map(|i| i.path.to_string_lossy().into_owned()).collect();
        opts.pool_partition = pool_partition(manifest.mode, &groups, &cfg.protocol, seed)?;
    }
    let matrix = build_design_matrix(&manifest, &records, &banks, &ctx, &opts)?;

    let mut inputs = BTreeMap::new();
    inputs.insert("manifest".to_string(), file_sha256(&cfg.manifest_path())?);
    inputs.insert("fixations".to_string(), file_sha256(&cfg.fixations_path())?);
    inputs.insert("registry".to_string(), registry.hash());
    inputs.insert("metrics".to_string(), cfg.metrics.hash());
    let csv_path = cfg.out.join(FEATURES_CSV);
    write_matrix(cfg, &matrix, &csv_path, &inputs)?;

    let split = if cfg.protocol.id == Protocol::HalfSubjects {
        let (a, b) = split_subjects(&manifest.subjects, seed);
        let train = build_design_matrix(&manifest, &records, &banks, &ctx, &BuildOptions { subjects: Some(a), ..opts.clone() })?;
        let test = build_design_matrix(&manifest, &records, &banks, &ctx, &BuildOptions { subjects: Some(b), ..opts })?;
        let (tp, sp) = split_paths(&csv_path);
        write_matrix(cfg, &train, &tp, &inputs)?;
        write_matrix(cfg, &test, &sp, &inputs)?;
        Some((train, test))
    } else {
        None
    };
    log::info!("features: {} rows x {} columns", matrix.rows.len(), matrix.n_features());
    Ok(FeaturesOutput { matrix, split, csv_path })
}

/// The stored matrix must come from the current seed, registry and metrics.
fn check_fresh(cfg: &RunConfig, m: &DesignMatrix) -> Result<(), CliError> {
    let registry = cfg.registry.build()?;
    let p = &m.provenance;
    if p.seed != cfg.seed()? || p.registry_hash != registry.hash() || p.metric_config_hash != cfg.metrics.hash() {
        return Err(CliError::Data(
            "features were computed with a different seed, registry or metric config; rerun `features`".into(),
        ));
    }
    Ok(())
}

enum Matrices {
    Single(DesignMatrix),
    Split(DesignMatrix, DesignMatrix),
}

fn load_features(cfg: &RunConfig) -> Result<Matrices, CliError> {
    let csv = cfg.out.join(FEATURES_CSV);
    let all = read_matrix(&csv)?;
    check_fresh(cfg, &all)?;
    cfg.protocol.id.check_mode(all.mode)?;
    if cfg.protocol.id == Protocol::HalfSubjects {
        let (tp, sp) = split_paths(&csv);
        let (a, b) = (read_matrix(&tp)?, read_matrix(&sp)?);
        check_fresh(cfg, &a)?;
        check_fresh(cfg, &b)?;
        Ok(Matrices::Split(a, b))
    } else {
        Ok(Matrices::Single(all))
    }
}

fn evaluate(cfg: &RunConfig, m: &Matrices, models: Option<&[String]>) -> Result<CvReport, CliError> {
    let seed = cfg.seed()?;
    let select = |x: &DesignMatrix| match models {
        Some(ms) => x.select_models(ms),
        None => Ok(x.clone()),
    };
    Ok(match m {
        Matrices::Single(x) => cross_validate(&select(x)?, &cfg.protocol, &cfg.learner, seed)?,
        Matrices::Split(a, b) => cross_validate_split(&select(a)?, &select(b)?, cfg.protocol.id, &cfg.learner, seed)?,
    })
}

pub struct CrossvalOutput {
    pub report: CvReport,
    pub table: String,
}

pub fn cmd_crossval(cfg: &RunConfig) -> Result<CrossvalOutput, CliError> {
    cfg.validate()?;
    let m = load_features(cfg)?;
    let report = evaluate(cfg, &m, None)?;
    if report.shuffle_leakage > 0 {
        log::warn!(
            "{} training rows drew shuffle-AUC negatives from held-out groups",
            report.shuffle_leakage
        );
    }
    let table = format_table(&report);
    let mut inputs = BTreeMap::new();
    inputs.insert("features".to_string(), file_sha256(&cfg.out.join(FEATURES_CSV))?);
    write_with_provenance(&cfg.out.join(CROSSVAL_JSON), report.to_json().as_bytes(), "crossval", cfg, inputs.clone())?;
    write_with_provenance(&cfg.out.join(CROSSVAL_TABLE), table.as_bytes(), "crossval", cfg, inputs)?;
    Ok(CrossvalOutput { report, table })
}

pub struct AblateOutput {
    pub rows: Vec<AblationRow>,
    pub csv: String,
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from("size,runs,mean_accuracy,std_accuracy,accuracy_pct\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{:.2} ± {:.2}\n",
            r.size,
            r.accuracies.len(),
            r.mean_accuracy,
            r.std_accuracy,
            100.0 * r.mean_accuracy,
            100.0 * r.std_accuracy
        ));
    }
    out
}

/// Model-count ablation. `sizes` and `repeats` override the config.
pub fn cmd_ablate(cfg: &RunConfig, sizes: Option<Vec<usize>>, repeats: Option<usize>) -> Result<AblateOutput, CliError> {
    cfg.validate()?;
    let m = load_features(cfg)?;
    let layout = match &m {
        Matrices::Single(x) | Matrices::Split(x, _) => &x.layout,
    };
    let ids = layout.model_ids();
    let sizes = sizes.unwrap_or_else(|| cfg.ablation_sizes(ids.len()));
    let repeats = repeats.unwrap_or(cfg.ablate.repeats);
    let rows = ablation_sweep(&ids, &sizes, repeats, cfg.seed()?, |models| {
        Ok(evaluate(cfg, &m, Some(models)).map_err(|e| match e {
            CliError::Config(s) => gazesal_core::Error::Config(s),
            CliError::Data(s) => gazesal_core::Error::Validation(vec![s]),
        })?
        .pooled
        .accuracy)
    })?;
    let csv = ablation_csv(&rows);
    let mut inputs = BTreeMap::new();
    inputs.insert("features".to_string(), file_sha256(&cfg.out.join(FEATURES_CSV))?);
    write_with_provenance(&cfg.out.join(ABLATION_CSV), csv.as_bytes(), "ablate", cfg, inputs)?;
    Ok(AblateOutput { rows, csv })
}

/// Renders the stored cross-validation report, plus the ablation table when
/// one exists, into `report.txt`.
pub fn cmd_report(cfg: &RunConfig) -> Result<String, CliError> {
    let path = cfg.out.join(CROSSVAL_JSON);
    let text = std::fs::read_to_string(&path).map_err(|e| data_err(&path, e))?;
    let report: CvReport = serde_json::from_str(&text).map_err(|e| data_err(&path, e))?;
    let mut out = format_table(&report);
    if !report.skipped_folds.is_empty() {
        out.push_str("\nskipped folds:\n");
        for s in &report.skipped_folds {
            out.push_str(&format!("  fold {}: {}\n", s.fold, s.reason));
        }
    }
    let abl = cfg.out.join(ABLATION_CSV);
    if abl.exists() {
        let csv = std::fs::read_to_string(&abl).map_err(|e| data_err(&abl, e))?;
        out.push_str("\nmodel-count ablation (accuracy %, mean ± std)\n");
        for line in csv.lines().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() == 5 {
                out.push_str(&format!("  {} models: {} over {} runs\n", f[0], f[4], f[1]));
            }
        }
    }
    write_atomic(&cfg.out.join(REPORT_TXT), out.as_bytes())?;
    Ok(out)
}
