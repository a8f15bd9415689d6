//! Feature extraction, labeled datasets and information-gain ranking.

mod dataset;
mod mfcc;
mod ranking;
mod tf;

pub use dataset::{
    build_dataset, build_dataset_from_traces, featurize_trace, read_manifest, write_manifest,
    DatasetBuild, FeatureMode, LabelColumn, LabeledDataset, ManifestRow, PipelineConfig,
    SegmentMode, SkipEntry,
};
pub use mfcc::{extract_mfcc_features, mfcc_feature_names, MfccConfig};
pub use ranking::rank_features_info_gain;
pub use tf::{extract_tf_features, tf_feature_names, AXIS_STATS, TF_FEATURE_COUNT};

use crate::error::{Error, Result};

/// Named feature values in a fixed canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    names: Vec<String>,
    values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(names: Vec<String>, values: Vec<f64>) -> Result<Self> {
        if names.len() != values.len() {
            return Err(Error::InvalidArgument(format!(
                "{} names for {} values",
                names.len(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Internal(format!(
                "feature `{}` is not finite ({})",
                names[i], values[i]
            )));
        }
        Ok(FeatureVector { names, values })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.values[i])
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}
