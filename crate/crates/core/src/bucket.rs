//! Percentile buckets over output lengths.
//!
//! Classes are half-open intervals `[cut[k-1], cut[k])`; a length equal to a
//! cut point belongs to the class above it.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

/// Nearest-rank order statistic of a sorted, non-empty slice at the fraction
/// `num / den` (rank `ceil(n * num / den)`, clamped to `[1, n]`).
pub fn nearest_rank<T: Copy>(sorted: &[T], num: u64, den: u64) -> T {
    assert!(!sorted.is_empty() && den > 0);
    let n = sorted.len() as u64;
    let rank = (n * num).div_ceil(den).clamp(1, n);
    sorted[(rank - 1) as usize]
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BucketBoundaries {
    cut_points: Vec<u32>,
    midpoints: Vec<u32>,
}

impl BucketBoundaries {
    /// Builds boundaries from explicit cut points and class representatives.
    pub fn from_parts(cut_points: Vec<u32>, midpoints: Vec<u32>) -> Result<Self> {
        if cut_points.is_empty() {
            return Err(SimError::Buckets("need at least two classes".into()));
        }
        if cut_points.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SimError::Buckets(
                "cut points must be strictly increasing".into(),
            ));
        }
        if midpoints.len() != cut_points.len() + 1 {
            return Err(SimError::Buckets(format!(
                "expected {} midpoints, got {}",
                cut_points.len() + 1,
                midpoints.len()
            )));
        }
        if midpoints.contains(&0) {
            return Err(SimError::Buckets("midpoints must be >= 1".into()));
        }
        Ok(BucketBoundaries {
            cut_points,
            midpoints,
        })
    }

    pub fn cut_points(&self) -> &[u32] {
        &self.cut_points
    }

    pub fn midpoints(&self) -> &[u32] {
        &self.midpoints
    }

    pub fn class_count(&self) -> usize {
        self.cut_points.len() + 1
    }

    pub fn midpoint(&self, class: usize) -> u32 {
        self.midpoints[class]
    }

    pub fn bucketize(&self, length: u32) -> usize {
        bucketize(length, self)
    }
}

/// Percentile boundaries for `class_count` classes.
///
/// Cut point `k` is the nearest-rank `100·k/P`-th percentile of `lengths`.
/// Each class is represented by the median of the sample lengths that fall
/// in it; an empty class uses its nearest cut point.
pub fn compute_bucket_boundaries(lengths: &[u32], class_count: usize) -> Result<BucketBoundaries> {
    if lengths.is_empty() {
        return Err(SimError::EmptyInput(
            "bucket boundaries need at least one length",
        ));
    }
    if class_count < 2 {
        return Err(SimError::Buckets(format!(
            "class count must be >= 2, got {class_count}"
        )));
    }
    let mut sorted = lengths.to_vec();
    sorted.sort_unstable();

    let p = class_count as u64;
    let cut_points: Vec<u32> = (1..p).map(|k| nearest_rank(&sorted, k, p)).collect();
    if cut_points.windows(2).any(|w| w[0] >= w[1]) || sorted[0] == sorted[sorted.len() - 1] {
        return Err(SimError::Buckets(format!(
            "degenerate boundaries {cut_points:?} for {class_count} classes; use fewer classes"
        )));
    }

    let mut midpoints = Vec::with_capacity(class_count);
    let mut start = 0;
    for class in 0..class_count {
        let end = match cut_points.get(class) {
            Some(&cut) => sorted.partition_point(|&x| x < cut),
            None => sorted.len(),
        };
        let members = &sorted[start..end];
        let mid = if members.is_empty() {
            // Only class 0 can be empty: every cut point is itself a sample
            // value and lands in the class above it.
            cut_points[class.min(cut_points.len() - 1)]
        } else {
            nearest_rank(members, 1, 2)
        };
        midpoints.push(mid.max(1));
        start = end;
    }

    Ok(BucketBoundaries {
        cut_points,
        midpoints,
    })
}

/// Class index of `length`: the number of cut points `<= length`.
pub fn bucketize(length: u32, b: &BucketBoundaries) -> usize {
    b.cut_points.partition_point(|&cut| cut <= length)
}
