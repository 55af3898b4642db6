//! Column schemas for flow tables.

use serde::{Deserialize, Serialize};
use std::collections::HashSet;

use crate::data::DataError;

/// Kind of a model feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Numeric,
    Categorical,
}

/// One model feature: its name, kind and (for categoricals) an optional
/// fixed category vocabulary. An empty vocabulary means categories are
/// learned from the data in first-appearance order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub categories: Vec<String>,
}

/// Ordered description of a flow table: the model features plus the label
/// column and an optional attack-category column.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureSchema {
    #[serde(default)]
    pub name: String,
    pub features: Vec<FeatureSpec>,
    pub label_column: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attack_category_column: Option<String>,
}

/// Normalize a header name for matching: lowercase, strip spaces,
/// underscores and dots.
pub fn normalize_name(name: &str) -> String {
    name.chars()
        .filter(|c| !matches!(c, ' ' | '_' | '.'))
        .flat_map(|c| c.to_lowercase())
        .collect()
}

impl FeatureSchema {
    /// Built-in schema for the 45-attribute UNSW-NB15 flow table.
    pub fn unsw_nb15() -> Self {
        let schema: FeatureSchema =
            serde_json::from_str(include_str!("../assets/unsw_nb15.json"))
                .expect("embedded schema is valid");
        schema
    }

    /// Load a schema from a declarative JSON file.
    pub fn from_json(text: &str) -> Result<Self, DataError> {
        let schema: FeatureSchema =
            serde_json::from_str(text).map_err(|e| DataError::BadSchema(e.to_string()))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let mut seen = HashSet::new();
        for f in &self.features {
            if f.name.is_empty() {
                return Err(DataError::BadSchema("empty feature name".into()));
            }
            if !seen.insert(normalize_name(&f.name)) {
                return Err(DataError::BadSchema(format!("duplicate feature {}", f.name)));
            }
        }
        if seen.contains(&normalize_name(&self.label_column)) {
            return Err(DataError::BadSchema(
                "label column collides with a feature column".into(),
            ));
        }
        if let Some(ac) = &self.attack_category_column {
            if seen.contains(&normalize_name(ac)) {
                return Err(DataError::BadSchema(
                    "attack-category column collides with a feature column".into(),
                ));
            }
        }
        Ok(())
    }

    /// All column names in table order: features, then attack category
    /// (when present), then label.
    pub fn column_names(&self) -> Vec<&str> {
        let mut names: Vec<&str> = self.features.iter().map(|f| f.name.as_str()).collect();
        if let Some(ac) = &self.attack_category_column {
            names.push(ac);
        }
        names.push(&self.label_column);
        names
    }

    pub fn column_count(&self) -> usize {
        self.features.len() + 1 + usize::from(self.attack_category_column.is_some())
    }

    pub fn feature_count(&self) -> usize {
        self.features.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_schema_has_45_columns() {
        let s = FeatureSchema::unsw_nb15();
        s.validate().unwrap();
        assert_eq!(s.column_count(), 45);
        assert_eq!(s.feature_count(), 43);
        assert_eq!(s.features[0].name, "id");
        assert_eq!(s.label_column, "label");
        assert_eq!(s.attack_category_column.as_deref(), Some("attack_cat"));
        let cats: Vec<_> = s
            .features
            .iter()
            .filter(|f| f.kind == FeatureKind::Categorical)
            .map(|f| f.name.as_str())
            .collect();
        assert_eq!(cats, vec!["proto", "service", "state"]);
    }

    #[test]
    fn name_matching_is_normalized() {
        assert_eq!(normalize_name("CT DST SPORT LTM"), "ctdstsportltm");
        assert_eq!(normalize_name("ct_dst_sport_ltm"), "ctdstsportltm");
        assert_eq!(normalize_name("Ct.Dst.Sport.Ltm"), "ctdstsportltm");
    }

    #[test]
    fn duplicate_feature_rejected() {
        let mut s = FeatureSchema::unsw_nb15();
        s.features.push(FeatureSpec {
            name: "STTL".into(),
            kind: FeatureKind::Numeric,
            categories: vec![],
        });
        assert!(s.validate().is_err());
    }
}
