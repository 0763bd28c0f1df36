use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::records::{natural_cmp, EpisodeRecord};

/// Reserved diagnosis label used when an episode starts without a diagnosis.
/// It always occupies the last index of the diagnosis dictionary.
pub const UNKNOWN_LABEL: &str = "UNKNOWN";

/// Label → index map; indices are dense and follow natural label order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CategoryDictionary {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl CategoryDictionary {
    pub fn from_labels<I: IntoIterator<Item = String>>(labels: I) -> Self {
        let unique: BTreeSet<String> = labels.into_iter().collect();
        let mut labels: Vec<String> = unique.into_iter().collect();
        labels.sort_by(|a, b| natural_cmp(a, b));
        Self::from_ordered(labels)
    }

    fn from_ordered(labels: Vec<String>) -> Self {
        let index = labels.iter().enumerate().map(|(i, l)| (l.clone(), i)).collect();
        Self { labels, index }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn label(&self, index: usize) -> Option<&str> {
        self.labels.get(index).map(String::as_str)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

impl Serialize for CategoryDictionary {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = serializer.serialize_map(Some(self.labels.len()))?;
        for (i, label) in self.labels.iter().enumerate() {
            map.serialize_entry(label, &i)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for CategoryDictionary {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw: BTreeMap<String, usize> = BTreeMap::deserialize(deserializer)?;
        let mut labels = vec![String::new(); raw.len()];
        for (label, i) in raw {
            if i >= labels.len() || !labels[i].is_empty() {
                return Err(serde::de::Error::custom(format!("non-dense index {i} for `{label}`")));
            }
            labels[i] = label;
        }
        Ok(Self::from_ordered(labels))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Dictionaries {
    pub diagnosis_category: CategoryDictionary,
    pub diagnosis_code: CategoryDictionary,
    pub procedure_category: CategoryDictionary,
    pub procedure_code: CategoryDictionary,
}

impl Dictionaries {
    pub fn from_episodes(episodes: &[EpisodeRecord]) -> Self {
        let claims = || episodes.iter().flat_map(|e| e.claims.iter());
        let mut diagnoses: Vec<String> = claims()
            .filter_map(|c| c.diagnosis_category.clone())
            .filter(|l| l != UNKNOWN_LABEL)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        diagnoses.sort_by(|a, b| natural_cmp(a, b));
        diagnoses.push(UNKNOWN_LABEL.to_string());
        Self {
            diagnosis_category: CategoryDictionary::from_ordered(diagnoses),
            diagnosis_code: CategoryDictionary::from_labels(claims().filter_map(|c| c.diagnosis_code.clone())),
            procedure_category: CategoryDictionary::from_labels(
                claims().filter_map(|c| c.procedure_category.clone()),
            ),
            procedure_code: CategoryDictionary::from_labels(claims().filter_map(|c| c.procedure_code.clone())),
        }
    }

    /// Number of diagnosis indices in the state space, including the
    /// reserved unknown entry.
    pub fn diagnosis_count(&self) -> usize {
        self.diagnosis_category.len()
    }

    pub fn unknown_diagnosis(&self) -> usize {
        self.diagnosis_category.len() - 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_is_label_to_index_and_round_trips() {
        let d = CategoryDictionary::from_labels(["DX10", "DX2", "DX1"].map(String::from));
        assert_eq!(d.labels(), ["DX1", "DX2", "DX10"]);
        let json = serde_json::to_string(&d).unwrap();
        assert_eq!(json, r#"{"DX1":0,"DX2":1,"DX10":2}"#);
        let back: CategoryDictionary = serde_json::from_str(&json).unwrap();
        assert_eq!(back, d);
    }
}
