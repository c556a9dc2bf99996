use serde::{Deserialize, Serialize};

use crate::error::{CkpcaError, Result};

/// Assignment of `n` observations to `d` nonempty categories.
///
/// Labels are 0-based and dense: every id in `0..d` is used.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    labels: Vec<usize>,
    sizes: Vec<usize>,
}

impl Partition {
    /// Builds a partition from arbitrary labels, renumbering them densely in
    /// order of first appearance.
    pub fn from_labels(raw: &[usize]) -> Self {
        let mut map = std::collections::HashMap::new();
        let mut sizes = Vec::new();
        let labels = raw
            .iter()
            .map(|l| {
                let next = map.len();
                let id = *map.entry(*l).or_insert(next);
                if id == sizes.len() {
                    sizes.push(0);
                }
                sizes[id] += 1;
                id
            })
            .collect();
        Self { labels, sizes }
    }

    /// Contiguous segments split after each (1-based) change point.
    pub fn from_change_points(change_points: &[usize], n: usize) -> Result<Self> {
        let mut prev = 0;
        for &z in change_points {
            if z <= prev || z >= n {
                return Err(CkpcaError::InvalidParameter(format!(
                    "change points must be strictly ascending within 1..{n}, got {change_points:?}"
                )));
            }
            prev = z;
        }
        let mut labels = Vec::with_capacity(n);
        let mut seg = 0;
        let mut cps = change_points.iter().peekable();
        for i in 0..n {
            if let Some(&&z) = cps.peek() {
                if i == z {
                    seg += 1;
                    cps.next();
                }
            }
            labels.push(seg);
        }
        Ok(Self::from_labels(&labels))
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn d(&self) -> usize {
        self.sizes.len()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Member indices of each category, ascending.
    pub fn groups(&self) -> Vec<Vec<usize>> {
        let mut groups: Vec<Vec<usize>> =
            self.sizes.iter().map(|&s| Vec::with_capacity(s)).collect();
        for (i, &l) in self.labels.iter().enumerate() {
            groups[l].push(i);
        }
        groups
    }
}
