use serde::{Deserialize, Serialize};

/// One raw comparison as ingested: the prompt, the preferred completion and
/// the dispreferred one. Field names follow the JSON-lines ingestion format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawPreferencePair {
    pub prompt: Vec<f64>,
    pub chosen: Vec<f64>,
    pub rejected: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub worker: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<String>,
    pub prompt_id: String,
}

/// One ordering of a source pair with the preferred position as label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetrizedExample {
    pub x: Vec<f64>,
    pub y0: Vec<f64>,
    pub y1: Vec<f64>,
    /// 0 when `y0` is preferred, 1 when `y1` is.
    pub label: u8,
    /// Index of the source pair this ordering came from.
    pub source: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SymmetrizeMode {
    /// Both orderings of every pair.
    #[default]
    Both,
    /// One uniformly chosen ordering per pair.
    Sampled,
}

/// A client's local data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientDataset {
    pub id: usize,
    pub train: Vec<SymmetrizedExample>,
    pub val: Vec<SymmetrizedExample>,
    /// Aggregation weight `p_m`; weights sum to one across the federation.
    pub weight: f64,
}

impl ClientDataset {
    /// Number of distinct source pairs held by this client.
    pub fn num_pairs(&self) -> usize {
        let mut sources: Vec<usize> = self.train.iter().chain(&self.val).map(|e| e.source).collect();
        sources.sort_unstable();
        sources.dedup();
        sources.len()
    }
}
