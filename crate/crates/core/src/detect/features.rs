//! Per-user feature vectors for the classifiers.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::ingest::Label;
use crate::mdp::N_ACTIONS;
use crate::policy::{Policy, PolicySource};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub label: Label,
    pub user_id: String,
}

/// Row-major flattening: index `s·6 + a` holds π(a|s).
pub fn policy_features(policy: &Policy, label: Label, user_id: &str) -> FeatureVector {
    FeatureVector { values: policy.flatten().to_vec(), label, user_id: user_id.to_string() }
}

pub fn embedding_features(mean: Vec<f64>, label: Label, user_id: &str) -> FeatureVector {
    FeatureVector { values: mean, label, user_id: user_id.to_string() }
}

pub fn unflatten(values: &[f64], source: PolicySource) -> Result<Policy> {
    Policy::from_flat(values, source)
}

/// Whether every consecutive block of six sums to one within `tol`.
pub fn policy_blocks_normalized(values: &[f64], tol: f64) -> bool {
    values.len().is_multiple_of(N_ACTIONS)
        && values.chunks(N_ACTIONS).all(|b| (b.iter().sum::<f64>() - 1.0).abs() <= tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{Action, State};
    use crate::policy::N_FEATURES;

    #[test]
    fn uniform_and_indicator() {
        let f = policy_features(&Policy::uniform(PolicySource::Scripted), Label::Organic, "u");
        assert_eq!(f.values.len(), N_FEATURES);
        assert!(f.values.iter().all(|v| *v == 1.0 / 6.0));
        assert!(policy_blocks_normalized(&f.values, 1e-12));

        let mut rows = [[1.0 / 6.0; N_ACTIONS]; 12];
        rows[State::InitialThread.index()] = [0.0, 1.0, 0.0, 0.0, 0.0, 0.0];
        let p = Policy::from_rows(rows, PolicySource::Scripted).unwrap();
        let f = policy_features(&p, Label::Troll, "t");
        assert_eq!(f.values[1], 1.0);
        assert_eq!(Action::CreateThread.index(), 1);
        assert_eq!(unflatten(&f.values, PolicySource::Scripted).unwrap(), p);
    }
}
