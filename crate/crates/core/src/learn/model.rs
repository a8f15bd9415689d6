//! Versioned on-disk model documents.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::forest::ForestModel;
use super::logistic::LogisticModel;
use super::Classifier;
use crate::error::{Error, Result};

pub const MODEL_SCHEMA: &str = "vibespeech-model";
pub const MODEL_SCHEMA_VERSION: u32 = 1;

/// Any trained classifier this crate can persist.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Model {
    Forest(ForestModel),
    Tree(ForestModel),
    Logistic(LogisticModel),
}

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    schema: String,
    version: u32,
    model: Model,
}

impl Model {
    pub fn kind(&self) -> &'static str {
        match self {
            Model::Forest(_) => "forest",
            Model::Tree(_) => "tree",
            Model::Logistic(_) => "logistic",
        }
    }

    fn inner(&self) -> &dyn Classifier {
        match self {
            Model::Forest(m) | Model::Tree(m) => m,
            Model::Logistic(m) => m,
        }
    }

    fn validate(&self) -> std::result::Result<(), String> {
        match self {
            Model::Forest(m) | Model::Tree(m) => m.validate(),
            Model::Logistic(m) => m.validate(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = ModelDocument {
            schema: MODEL_SCHEMA.into(),
            version: MODEL_SCHEMA_VERSION,
            model: self.clone(),
        };
        serde_json::to_string_pretty(&doc).map_err(|e| Error::Internal(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Model> {
        let doc: ModelDocument = serde_json::from_str(text)
            .map_err(|e| Error::InvalidDataset(format!("malformed model document: {e}")))?;
        if doc.schema != MODEL_SCHEMA {
            return Err(Error::InvalidDataset(format!(
                "unexpected model schema `{}`",
                doc.schema
            )));
        }
        if doc.version != MODEL_SCHEMA_VERSION {
            return Err(Error::InvalidDataset(format!(
                "unsupported model schema version {}",
                doc.version
            )));
        }
        doc.model
            .validate()
            .map_err(|e| Error::InvalidDataset(format!("invalid model: {e}")))?;
        Ok(doc.model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = self.to_json()?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Model> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Model::from_json(&text)
    }
}

impl Classifier for Model {
    fn vocab(&self) -> &[String] {
        self.inner().vocab()
    }

    fn feature_names(&self) -> &[String] {
        self.inner().feature_names()
    }

    fn distribution(&self, row: &[f64]) -> Vec<f64> {
        self.inner().distribution(row)
    }
}
