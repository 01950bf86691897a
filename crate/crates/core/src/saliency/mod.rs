//! Bottom-up saliency models and the registry that fixes their order.
//!
//! The registry order is the feature layout: model `l` occupies feature
//! columns `l*p .. (l+1)*p`. Every model is deterministic.

mod center;
mod covariance;
mod gbvs;
mod itti;
mod smf;
mod spectral;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{ImageBuffer, Plane};
use crate::seed::short_hash;

pub use center::{center_gaussian, center_gaussian_with, CenterParams};
pub use covariance::{local_covariance, local_covariance_with, CovarianceParams};
pub use gbvs::{
    equilibrium_residual, gbvs, gbvs_feature_maps, gbvs_with, markov_matrix, stationary_distribution,
    Equilibrium, GbvsParams, MarkovMatrix,
};
pub use itti::{itti_koch, itti_koch_raw, ITTI_MIN_SIZE};
pub use smf::{decode_smf, encode_smf, read_smf, write_png16, write_smf, SMF_MAGIC};
pub use spectral::{spectral_residual, spectral_residual_raw, spectral_residual_with, SpectralParams};

/// One model's prediction for one image, values in [0, 1].
///
/// Values are stored at `f32` precision so that a map written to and read
/// back from an SMF1 file is bit-identical to the freshly computed one.
#[derive(Clone, Debug, PartialEq)]
pub struct SaliencyMap {
    pub model_id: String,
    plane: Plane,
    degenerate: bool,
}

impl SaliencyMap {
    /// Min-max normalizes `raw`; a constant input gives the degenerate zero map.
    pub fn from_raw(model_id: impl Into<String>, raw: &Plane) -> Self {
        Self::from_unit(model_id, raw.normalized_min_max())
    }

    /// Wraps a plane already scaled so its maximum is 1 (or all zeros).
    pub(crate) fn from_unit(model_id: impl Into<String>, plane: Plane) -> Self {
        let plane = plane.map(|v| v.clamp(0.0, 1.0) as f32 as f64);
        let degenerate = plane.data().iter().all(|&v| v == 0.0);
        SaliencyMap {
            model_id: model_id.into(),
            plane,
            degenerate,
        }
    }

    /// Validating constructor for stored maps.
    pub fn from_plane(model_id: impl Into<String>, plane: Plane) -> Result<Self> {
        if plane.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Format("saliency values must lie in [0, 1]".into()));
        }
        Ok(Self::from_unit(model_id, plane))
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

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    /// Bilinear resize to the fixation map's resolution.
    pub fn resized(&self, width: usize, height: usize) -> SaliencyMap {
        if self.plane.dims() == (width, height) {
            return self.clone();
        }
        SaliencyMap::from_unit(self.model_id.clone(), self.plane.resize_bilinear(width, height))
    }
}

/// The ordered maps of every registered model for one image.
#[derive(Clone, Debug, PartialEq)]
pub struct SaliencyBank {
    pub image_id: String,
    pub maps: Vec<SaliencyMap>,
}

impl SaliencyBank {
    pub fn model_ids(&self) -> impl Iterator<Item = &str> {
        self.maps.iter().map(|m| m.model_id.as_str())
    }
}

/// A model and its parameters. Serialized with a `kind` tag.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelConfig {
    IttiKoch,
    Gbvs(GbvsParams),
    SpectralResidual(SpectralParams),
    LocalCovariance(CovarianceParams),
    CenterGaussian(CenterParams),
}

impl ModelConfig {
    pub fn kind_name(&self) -> &'static str {
        match self {
            ModelConfig::IttiKoch => "itti_koch",
            ModelConfig::Gbvs(_) => "gbvs",
            ModelConfig::SpectralResidual(_) => "spectral_residual",
            ModelConfig::LocalCovariance(_) => "local_covariance",
            ModelConfig::CenterGaussian(_) => "center_gaussian",
        }
    }

    pub fn from_kind_name(name: &str) -> Option<Self> {
        Some(match name {
            "itti_koch" => ModelConfig::IttiKoch,
            "gbvs" => ModelConfig::Gbvs(GbvsParams::default()),
            "spectral_residual" => ModelConfig::SpectralResidual(SpectralParams::default()),
            "local_covariance" => ModelConfig::LocalCovariance(CovarianceParams::default()),
            "center_gaussian" => ModelConfig::CenterGaussian(CenterParams::default()),
            _ => return None,
        })
    }

    pub fn compute(&self, img: &ImageBuffer) -> Result<SaliencyMap> {
        let id = self.kind_name();
        match self {
            ModelConfig::IttiKoch => itti_koch(img),
            ModelConfig::Gbvs(p) => gbvs_with(img, p),
            ModelConfig::SpectralResidual(p) => spectral_residual_with(img, p),
            ModelConfig::LocalCovariance(p) => local_covariance_with(img, p),
            ModelConfig::CenterGaussian(p) => center_gaussian_with(img.width(), img.height(), p),
        }
        .map(|mut m| {
            m.model_id = id.to_string();
            m
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub id: String,
    #[serde(flatten)]
    pub config: ModelConfig,
}

impl ModelSpec {
    pub fn new(config: ModelConfig) -> Self {
        ModelSpec {
            id: config.kind_name().to_string(),
            config,
        }
    }

    /// Stable hash of the parameters, used as a cache key component.
    pub fn params_hash(&self) -> String {
        short_hash(serde_json::to_string(&self.config).unwrap().as_bytes())
    }
}

/// Ordered, uniquely named saliency models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ModelSpec>", into = "Vec<ModelSpec>")]
pub struct ModelRegistry {
    models: Vec<ModelSpec>,
}

impl ModelRegistry {
    pub fn new(models: Vec<ModelSpec>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for m in &models {
            if !seen.insert(m.id.as_str()) {
                return Err(Error::Config(format!("duplicate model id `{}`", m.id)));
            }
        }
        Ok(ModelRegistry { models })
    }

    /// Itti-Koch, GBVS, spectral residual, local covariance, center Gaussian.
    pub fn standard() -> Self {
        let models = ["itti_koch", "gbvs", "spectral_residual", "local_covariance", "center_gaussian"]
            .iter()
            .map(|k| ModelSpec::new(ModelConfig::from_kind_name(k).unwrap()))
            .collect();
        ModelRegistry { models }
    }

    pub fn from_kind_names<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        let models = names
            .iter()
            .map(|n| {
                ModelConfig::from_kind_name(n.as_ref())
                    .map(ModelSpec::new)
                    .ok_or_else(|| Error::Config(format!("unknown saliency model `{}`", n.as_ref())))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(models)
    }

    pub fn models(&self) -> &[ModelSpec] {
        &self.models
    }

    pub fn ids(&self) -> Vec<&str> {
        self.models.iter().map(|m| m.id.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn hash(&self) -> String {
        short_hash(serde_json::to_string(&self.models).unwrap().as_bytes())
    }
}

impl TryFrom<Vec<ModelSpec>> for ModelRegistry {
    type Error = Error;
    fn try_from(v: Vec<ModelSpec>) -> Result<Self> {
        ModelRegistry::new(v)
    }
}

impl From<ModelRegistry> for Vec<ModelSpec> {
    fn from(r: ModelRegistry) -> Self {
        r.models
    }
}

/// Runs every registered model on `img`, in registry order.
pub fn compute_bank(registry: &ModelRegistry, image_id: &str, img: &ImageBuffer) -> Result<SaliencyBank> {
    if registry.is_empty() {
        return Err(Error::Config("empty model registry".into()));
    }
    let maps = registry
        .models
        .par_iter()
        .map(|spec| {
            spec.config
                .compute(img)
                .map(|mut m| {
                    m.model_id = spec.id.clone();
                    m
                })
                .map_err(|e| Error::Model {
                    model: spec.id.clone(),
                    source: Box::new(e),
                })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SaliencyBank {
        image_id: image_id.to_string(),
        maps,
    })
}

/// Checks `[too-small]` style preconditions shared by several models.
pub(crate) fn require_min_size(img: &ImageBuffer, min: usize) -> Result<()> {
    if img.width() < min || img.height() < min {
        return Err(Error::TooSmall {
            width: img.width(),
            height: img.height(),
            min,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_image() -> ImageBuffer {
        let r = Plane::from_fn(64, 48, |x, y| if (x as isize - 20).pow(2) + (y as isize - 20).pow(2) < 64 { 0.9 } else { 0.3 });
        let g = Plane::from_fn(64, 48, |x, _| if x > 44 { 0.8 } else { 0.3 });
        let b = Plane::from_fn(64, 48, |x, y| if (x / 4 + y / 4) % 2 == 0 && y > 30 { 0.9 } else { 0.3 });
        ImageBuffer::rgb(r, g, b).unwrap()
    }

    #[test]
    fn bank_follows_registry_order() {
        let reg = ModelRegistry::standard();
        let img = test_image();
        let bank = compute_bank(&reg, "img", &img).unwrap();
        assert_eq!(bank.maps.len(), 5);
        assert_eq!(bank.model_ids().collect::<Vec<_>>(), reg.ids());
        for m in &bank.maps {
            assert_eq!((m.width(), m.height()), (64, 48));
            let (lo, hi) = m.plane().min_max();
            assert!(lo >= 0.0 && hi <= 1.0);
            assert!(!m.is_degenerate(), "{}", m.model_id);
        }
        assert_eq!(compute_bank(&reg, "img", &img).unwrap(), bank);
        let reversed = ModelRegistry::new(reg.models().iter().rev().cloned().collect()).unwrap();
        let rb = compute_bank(&reversed, "img", &img).unwrap();
        assert_eq!(rb.model_ids().collect::<Vec<_>>(), reversed.ids());
    }

    #[test]
    fn empty_registry_and_failures() {
        let img = test_image();
        let empty = ModelRegistry::new(vec![]).unwrap();
        assert!(matches!(compute_bank(&empty, "i", &img), Err(Error::Config(_))));
        let tiny = ImageBuffer::gray(Plane::filled(16, 16, 0.5)).unwrap();
        match compute_bank(&ModelRegistry::standard(), "i", &tiny) {
            Err(Error::Model { model, .. }) => assert_eq!(model, "itti_koch"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn registry_rejects_duplicates_and_round_trips() {
        let spec = ModelSpec::new(ModelConfig::IttiKoch);
        assert!(ModelRegistry::new(vec![spec.clone(), spec]).is_err());
        let reg = ModelRegistry::standard();
        let text = serde_json::to_string(&reg).unwrap();
        let back: ModelRegistry = serde_json::from_str(&text).unwrap();
        assert_eq!(back, reg);
        assert_eq!(back.hash(), reg.hash());
        assert!(ModelRegistry::from_kind_names(&["nope"]).is_err());
    }
}
