use std::collections::HashMap;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Bijection between opaque string keys and dense indices `0..len`.
#[derive(Debug, Clone, Default)]
pub struct Registry {
    ids: Vec<String>,
    index: HashMap<String, usize>,
}

impl Registry {
    /// Builds a registry from keys in the given order. Duplicates keep their
    /// first position.
    pub fn from_ids<I, S>(ids: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut reg = Registry::default();
        for id in ids {
            reg.insert(id.into());
        }
        reg
    }

    pub fn insert(&mut self, id: String) -> usize {
        if let Some(&i) = self.index.get(&id) {
            return i;
        }
        let i = self.ids.len();
        self.index.insert(id.clone(), i);
        self.ids.push(id);
        i
    }

    pub fn get(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn id(&self, index: usize) -> &str {
        &self.ids[index]
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }
}

impl PartialEq for Registry {
    fn eq(&self, other: &Self) -> bool {
        self.ids == other.ids
    }
}

impl Serialize for Registry {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.ids.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Registry {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let ids = Vec::<String>::deserialize(deserializer)?;
        let reg = Registry::from_ids(ids.iter().cloned());
        if reg.len() != ids.len() {
            return Err(serde::de::Error::custom("registry contains duplicate ids"));
        }
        Ok(reg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn insert_is_idempotent() {
        let mut r = Registry::default();
        assert_eq!(r.insert("b".into()), 0);
        assert_eq!(r.insert("a".into()), 1);
        assert_eq!(r.insert("b".into()), 0);
        assert_eq!(r.len(), 2);
        assert_eq!(r.id(1), "a");
    }

    #[test]
    fn duplicate_ids_rejected_on_load() {
        let err = serde_json::from_str::<Registry>(r#"["a","a"]"#);
        assert!(err.is_err());
    }
}
