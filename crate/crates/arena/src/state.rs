use std::collections::BTreeMap;

use exposition::{MethodKind, MethodParams};
use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

/// Version tag written into every saved state document.
pub const STATE_VERSION: &str = "1";

/// An open chart: one method applied to one or more models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartDescriptor {
    pub kind: MethodKind,
    pub models: Vec<String>,
    #[serde(default)]
    pub params: MethodParams,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PinnedObservation {
    pub row: usize,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub overrides: BTreeMap<String, Json>,
}

/// Everything needed to rebuild a dashboard.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArenaState {
    pub version: String,
    #[serde(default)]
    pub charts: Vec<ChartDescriptor>,
    #[serde(default)]
    pub pinned: Vec<PinnedObservation>,
    /// Ordered layout hints, opaque to the service.
    #[serde(default)]
    pub layout: Vec<String>,
}

impl Default for ArenaState {
    fn default() -> Self {
        ArenaState {
            version: STATE_VERSION.to_string(),
            charts: Vec::new(),
            pinned: Vec::new(),
            layout: Vec::new(),
        }
    }
}

impl ArenaState {
    /// References that cannot be resolved against the given models and row count.
    pub fn unresolved(&self, labels: &[&str], n_rows: usize) -> Vec<String> {
        let mut out = Vec::new();
        if self.version != STATE_VERSION {
            out.push(format!("version '{}' (expected '{STATE_VERSION}')", self.version));
        }
        for (i, chart) in self.charts.iter().enumerate() {
            for m in &chart.models {
                if !labels.contains(&m.as_str()) {
                    out.push(format!("charts[{i}]: model '{m}'"));
                }
            }
            if let Some(row) = chart.params.instance.filter(|r| *r >= n_rows) {
                out.push(format!("charts[{i}]: row {row}"));
            }
        }
        for (i, pin) in self.pinned.iter().enumerate() {
            if pin.row >= n_rows {
                out.push(format!("pinned[{i}]: row {}", pin.row));
            }
        }
        out
    }
}
