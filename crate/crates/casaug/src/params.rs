//! Named parameter storage shared by the encoder, taggers, pre-classifier
//! and optimizer. Parameters persist across training steps; each forward
//! pass re-registers them on a fresh tape.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// One trainable array: shape plus row-major f64 data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Name → parameter map with deterministic iteration order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    entries: BTreeMap<String, Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.entries.insert(name.into(), Param { shape, data });
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.entries.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Param)> {
        self.entries.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Param)> {
        self.entries.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|s| s.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar coordinates.
    pub fn coordinate_count(&self) -> usize {
        self.entries.values().map(|p| p.data.len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iteration_order_is_sorted_by_name() {
        let mut store = ParamStore::new();
        store.insert("b", vec![1], vec![1.0]);
        store.insert("a", vec![1], vec![2.0]);
        store.insert("c", vec![1], vec![3.0]);
        let names: Vec<&str> = store.names().collect();
        assert_eq!(names, vec!["a", "b", "c"]);
    }

    #[test]
    fn coordinate_count_sums_lengths() {
        let mut store = ParamStore::new();
        store.insert("m", vec![2, 3], vec![0.0; 6]);
        store.insert("v", vec![4], vec![0.0; 4]);
        assert_eq!(store.coordinate_count(), 10);
    }
}
