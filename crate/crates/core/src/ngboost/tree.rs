//! Depth-limited CART regression trees on presorted feature columns.

use ndarray::ArrayView2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Flattened tree node. Children are indices into [`RegressionTree::nodes`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
    pub max_depth: usize,
}

impl RegressionTree {
    pub fn leaf(value: f64) -> Self {
        Self {
            nodes: vec![Node::Leaf { value }],
            max_depth: 0,
        }
    }

    /// `x[feature] <= threshold` goes left.
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        x.rows()
            .into_iter()
            .map(|r| match r.as_slice() {
                Some(s) => self.predict_row(s),
                None => self.predict_row(&r.to_vec()),
            })
            .collect()
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    /// Longest root-to-leaf path, counted in splits.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

/// Relative size below which a variance reduction counts as no reduction;
/// guards against splitting on rounding noise.
const MIN_GAIN_REL: f64 = 1e-12;

#[derive(Debug, Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
    /// Number of rows going left, in this feature's sort order.
    n_left: usize,
}

/// Holds each feature column's row order so that repeated fits on the same
/// design matrix (one per boosting stage) skip the sort.
pub struct TreeBuilder<'a> {
    x: ArrayView2<'a, f64>,
    sorted: Vec<Vec<u32>>,
}

impl<'a> TreeBuilder<'a> {
    pub fn new(x: ArrayView2<'a, f64>) -> Self {
        let n = x.nrows();
        let sorted = (0..x.ncols())
            .into_par_iter()
            .map(|f| {
                let col = x.column(f);
                let mut idx: Vec<u32> = (0..n as u32).collect();
                // stable: equal values keep row order
                idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]));
                idx
            })
            .collect();
        Self { x, sorted }
    }

    /// Fits `g` on the rows flagged in `mask` (all rows when `None`). `g` is
    /// indexed by row of the full design matrix.
    pub fn fit(&self, g: &[f64], mask: Option<&[bool]>, max_depth: usize, min_samples_leaf: usize) -> RegressionTree {
        let columns: Vec<Vec<u32>> = self
            .sorted
            .iter()
            .map(|order| match mask {
                Some(m) => order.iter().copied().filter(|&r| m[r as usize]).collect(),
                None => order.clone(),
            })
            .collect();
        let mut nodes = Vec::new();
        let mut side = vec![false; self.x.nrows()];
        self.grow(&mut nodes, columns, g, 0, max_depth, min_samples_leaf.max(1), &mut side);
        RegressionTree { nodes, max_depth }
    }

    #[allow(clippy::too_many_arguments)]
    fn grow(
        &self,
        nodes: &mut Vec<Node>,
        columns: Vec<Vec<u32>>,
        g: &[f64],
        depth: usize,
        max_depth: usize,
        min_leaf: usize,
        side: &mut [bool],
    ) -> usize {
        let rows = &columns[0];
        let n = rows.len();
        let sum: f64 = rows.iter().map(|&r| g[r as usize]).sum();
        let value = if n == 0 { 0.0 } else { sum / n as f64 };
        let id = nodes.len();
        nodes.push(Node::Leaf { value });
        if depth >= max_depth || n < 2 * min_leaf {
            return id;
        }
        let scale: f64 = rows.iter().map(|&r| g[r as usize] * g[r as usize]).sum();
        let Some(best) = self.best_split(&columns, g, sum, min_leaf) else {
            return id;
        };
        if !(best.gain > MIN_GAIN_REL * scale) {
            return id;
        }

        // mark rows going left using the chosen feature's order
        let order = &columns[best.feature];
        for (i, &r) in order.iter().enumerate() {
            side[r as usize] = i < best.n_left;
        }
        let (left_cols, right_cols): (Vec<Vec<u32>>, Vec<Vec<u32>>) = columns
            .iter()
            .map(|col| col.iter().partition(|&&r| side[r as usize]))
            .unzip();
        drop(columns);
        let left = self.grow(nodes, left_cols, g, depth + 1, max_depth, min_leaf, side);
        let right = self.grow(nodes, right_cols, g, depth + 1, max_depth, min_leaf, side);
        nodes[id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        id
    }

    /// Best split over all features; features are scanned in parallel and
    /// reduced in feature order so ties resolve to the lowest feature, then
    /// the lowest threshold.
    fn best_split(&self, columns: &[Vec<u32>], g: &[f64], total: f64, min_leaf: usize) -> Option<Candidate> {
        let n = columns[0].len();
        let parent = total * total / n as f64;
        let per_feature: Vec<Option<Candidate>> = columns
            .par_iter()
            .enumerate()
            .map(|(feature, order)| {
                let col = self.x.column(feature);
                let mut best: Option<Candidate> = None;
                let mut left_sum = 0.0;
                for i in 0..n - 1 {
                    let r = order[i] as usize;
                    left_sum += g[r];
                    let n_left = i + 1;
                    if n_left < min_leaf || n - n_left < min_leaf {
                        continue;
                    }
                    let (a, b) = (col[r], col[order[i + 1] as usize]);
                    if !(a < b) {
                        continue;
                    }
                    let right_sum = total - left_sum;
                    let gain = left_sum * left_sum / n_left as f64
                        + right_sum * right_sum / (n - n_left) as f64
                        - parent;
                    if best.is_none_or(|c| gain > c.gain) {
                        let mid = a + (b - a) * 0.5;
                        // adjacent floats: the midpoint may round onto b
                        let threshold = if mid < b { mid } else { a };
                        best = Some(Candidate {
                            gain,
                            feature,
                            threshold,
                            n_left,
                        });
                    }
                }
                best
            })
            .collect();
        per_feature
            .into_iter()
            .flatten()
            .fold(None, |acc: Option<Candidate>, c| match acc {
                Some(a) if c.gain <= a.gain => Some(a),
                _ => Some(c),
            })
    }
}

/// Fits a CART regression tree minimizing within-leaf squared error of `g`.
pub fn fit_tree(x: ArrayView2<'_, f64>, g: &[f64], max_depth: usize, min_samples_leaf: usize) -> RegressionTree {
    assert_eq!(x.nrows(), g.len(), "one target per row");
    if x.nrows() == 0 {
        return RegressionTree::leaf(0.0);
    }
    TreeBuilder::new(x).fit(g, None, max_depth, min_samples_leaf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn constant_target_is_one_leaf() {
        let x = array![[0.0], [1.0], [2.0]];
        let t = fit_tree(x.view(), &[2.0, 2.0, 2.0], 3, 1);
        assert_eq!(t.nodes, vec![Node::Leaf { value: 2.0 }]);
    }

    #[test]
    fn two_points_split_at_midpoint() {
        let x = array![[0.0], [1.0]];
        let t = fit_tree(x.view(), &[0.0, 10.0], 1, 1);
        assert_eq!(
            t.nodes[0],
            Node::Split {
                feature: 0,
                threshold: 0.5,
                left: 1,
                right: 2
            }
        );
        assert_eq!(t.predict_row(&[0.0]), 0.0);
        assert_eq!(t.predict_row(&[1.0]), 10.0);
    }

    #[test]
    fn single_row_is_leaf() {
        let x = array![[3.0, 4.0]];
        assert_eq!(fit_tree(x.view(), &[7.5], 3, 1), RegressionTree::leaf(7.5).with_depth(3));
    }

    #[test]
    fn ties_prefer_lowest_feature() {
        // both columns separate the targets equally well
        let x = array![[0.0, 0.0], [1.0, 1.0]];
        let t = fit_tree(x.view(), &[1.0, 3.0], 1, 1);
        assert!(matches!(t.nodes[0], Node::Split { feature: 0, .. }));
    }

    #[test]
    fn min_leaf_blocks_small_children() {
        let x = array![[0.0], [1.0], [2.0], [3.0]];
        let t = fit_tree(x.view(), &[0.0, 0.0, 0.0, 9.0], 2, 2);
        assert!(t.nodes.iter().all(|n| match n {
            Node::Split { threshold, .. } => *threshold == 1.5,
            _ => true,
        }));
    }

    #[test]
    fn masked_fit_ignores_other_rows() {
        let x = array![[0.0], [1.0], [2.0], [3.0]];
        let g = [0.0, 100.0, 4.0, 4.0];
        let b = TreeBuilder::new(x.view());
        let t = b.fit(&g, Some(&[true, false, true, true]), 2, 1);
        assert_eq!(t.predict_row(&[0.0]), 0.0);
        assert_eq!(t.predict_row(&[2.5]), 4.0);
    }

    impl RegressionTree {
        fn with_depth(mut self, d: usize) -> Self {
            self.max_depth = d;
            self
        }
    }
}
