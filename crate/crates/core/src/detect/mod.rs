//! Troll/organic classification on per-user representations.

pub mod boost;
pub mod experiment;
pub mod features;
pub mod folds;
pub mod forest;
pub mod metrics;
pub mod tree;

use serde::{Deserialize, Serialize};

pub use boost::BoostConfig;
pub use experiment::{run_experiment, ExperimentConfig, ExperimentReport, LabeledTrajectory, Method, Sweep};
pub use features::{embedding_features, policy_features, FeatureVector};
pub use folds::{stratified_kfold, Split};
pub use forest::ForestConfig;
pub use metrics::{metrics, ClassMetrics, Metrics};
pub use tree::Tree;

use crate::error::{Error, Result};
use crate::ingest::Label;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    BaggedTrees,
    BoostedTrees,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub kind: ClassifierKind,
    pub bagged: ForestConfig,
    pub boosted: BoostConfig,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig { kind: ClassifierKind::BaggedTrees, bagged: ForestConfig::default(), boosted: BoostConfig::default() }
    }
}

impl ClassifierConfig {
    pub fn check(&self) -> Result<()> {
        let ok = match self.kind {
            ClassifierKind::BaggedTrees => self.bagged.n_trees > 0 && self.bagged.max_features != Some(0),
            ClassifierKind::BoostedTrees => {
                self.boosted.n_trees > 0
                    && self.boosted.learning_rate > 0.0
                    && self.boosted.lambda >= 0.0
                    && self.boosted.min_child_weight >= 0.0
                    && self.boosted.max_features != Some(0)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("classifier config out of range: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub kind: ClassifierKind,
    pub dim: usize,
    pub seed: u64,
    pub config: ClassifierConfig,
    pub trees: Vec<Tree>,
}

fn target(label: Label) -> f64 {
    match label {
        Label::Troll => 1.0,
        Label::Organic => 0.0,
    }
}

pub fn train_classifier(x: &[Vec<f64>], y: &[Label], cfg: &ClassifierConfig, seed: u64) -> Result<ClassifierModel> {
    cfg.check()?;
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(Error::EmptyList);
    }
    if !(y.contains(&Label::Troll) && y.contains(&Label::Organic)) {
        return Err(Error::SingleClassTraining);
    }
    let dim = x[0].len();
    if dim == 0 {
        return Err(Error::DimensionMismatch { expected: 1, got: 0 });
    }
    for row in x {
        if row.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: row.len() });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("classifier features".into()));
        }
    }
    let t: Vec<f64> = y.iter().map(|l| target(*l)).collect();
    let trees = match cfg.kind {
        ClassifierKind::BaggedTrees => forest::train_forest(x, &t, &cfg.bagged, seed),
        ClassifierKind::BoostedTrees => boost::train_boost(x, &t, &cfg.boosted, seed),
    };
    Ok(ClassifierModel { kind: cfg.kind, dim, seed, config: cfg.clone(), trees })
}

impl ClassifierModel {
    /// Troll vote share for bagged trees, troll probability for boosted trees.
    pub fn troll_score(&self, x: &[f64]) -> f64 {
        match self.kind {
            ClassifierKind::BaggedTrees => forest::troll_votes(&self.trees, x) as f64 / self.trees.len() as f64,
            ClassifierKind::BoostedTrees => boost::sigmoid(boost::margin(&self.trees, x)),
        }
    }

    /// Ties go to organic.
    pub fn predict_one(&self, x: &[f64]) -> Result<Label> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        let troll = match self.kind {
            ClassifierKind::BaggedTrees => 2 * forest::troll_votes(&self.trees, x) > self.trees.len(),
            ClassifierKind::BoostedTrees => boost::margin(&self.trees, x) > 0.0,
        };
        Ok(if troll { Label::Troll } else { Label::Organic })
    }
}

pub fn predict(model: &ClassifierModel, x: &[Vec<f64>]) -> Result<Vec<Label>> {
    x.iter().map(|row| model.predict_one(row)).collect()
}
