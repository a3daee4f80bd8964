use serde::{Deserialize, Serialize};

use crate::numerics::Matrix;

use super::BaselineError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbtConfig {
    pub n_estimators: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
}

impl Default for GbtConfig {
    fn default() -> Self {
        GbtConfig {
            n_estimators: 100,
            max_depth: 10,
            learning_rate: 0.3,
        }
    }
}

/// `x[feature] <= threshold` goes left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf(f64),
}

/// Axis-aligned regression tree stored as a node arena; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match t.nodes[i] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
            }
        }
        go(self, 0)
    }

    pub fn is_leaf(&self) -> bool {
        self.nodes.len() == 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble {
    pub trees: Vec<Tree>,
    pub learning_rate: f64,
    pub base_score: f64,
    pub n_features: usize,
}

impl TreeEnsemble {
    /// Prediction using only the first `rounds` trees.
    pub fn predict_rounds(&self, x: &[f64], rounds: usize) -> f64 {
        self.base_score
            + self.learning_rate
                * self.trees[..rounds.min(self.trees.len())]
                    .iter()
                    .map(|t| t.predict(x))
                    .sum::<f64>()
    }
}

/// Gradient boosting with squared loss. Each tree is grown greedily on the
/// current residuals with exact split search; equal gains resolve to the
/// lowest feature index, then the lowest threshold.
pub fn fit_gbt(x: &Matrix, y: &[f64], cfg: &GbtConfig) -> Result<TreeEnsemble, BaselineError> {
    if x.rows() != y.len() {
        return Err(BaselineError::DimensionMismatch {
            expected: x.rows(),
            got: y.len(),
        });
    }
    if y.len() < 2 {
        return Err(BaselineError::TooFewSamples(y.len()));
    }
    if x.cols() == 0 {
        return Err(BaselineError::NoFeatures);
    }
    if !x.is_finite() {
        return Err(BaselineError::NonFinite("features"));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(BaselineError::NonFinite("targets"));
    }
    let base_score = y.iter().sum::<f64>() / y.len() as f64;
    let mut pred = vec![base_score; y.len()];
    // per-feature sample order, reused by every node
    let orders: Vec<Vec<usize>> = (0..x.cols())
        .map(|f| {
            let mut idx: Vec<usize> = (0..x.rows()).collect();
            idx.sort_by(|&a, &b| x[(a, f)].total_cmp(&x[(b, f)]).then(a.cmp(&b)));
            idx
        })
        .collect();
    // residual spread below rounding noise of the targets counts as pure
    let scale = y.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let pure_sse = (1e-12 * scale).powi(2) * y.len() as f64;
    let mut trees = Vec::with_capacity(cfg.n_estimators);
    for _ in 0..cfg.n_estimators {
        let resid: Vec<f64> = y.iter().zip(&pred).map(|(a, b)| a - b).collect();
        let mut builder = Builder {
            x,
            resid: &resid,
            orders: &orders,
            max_depth: cfg.max_depth,
            pure_sse,
            nodes: Vec::new(),
        };
        let mut member = vec![true; y.len()];
        builder.grow(&mut member, 0);
        let tree = Tree {
            nodes: builder.nodes,
        };
        for (i, p) in pred.iter_mut().enumerate() {
            *p += cfg.learning_rate * tree.predict(x.row(i));
        }
        trees.push(tree);
    }
    Ok(TreeEnsemble {
        trees,
        learning_rate: cfg.learning_rate,
        base_score,
        n_features: x.cols(),
    })
}

pub fn predict_gbt(m: &TreeEnsemble, x: &[f64]) -> Result<f64, BaselineError> {
    if x.len() != m.n_features {
        return Err(BaselineError::DimensionMismatch {
            expected: m.n_features,
            got: x.len(),
        });
    }
    Ok(m.predict_rounds(x, m.trees.len()))
}

struct Builder<'a> {
    x: &'a Matrix,
    resid: &'a [f64],
    orders: &'a [Vec<usize>],
    max_depth: usize,
    pure_sse: f64,
    nodes: Vec<Node>,
}

struct Split {
    gain: f64,
    feature: usize,
    threshold: f64,
}

impl Builder<'_> {
    /// Grows the subtree over samples flagged in `member`, returns its index.
    fn grow(&mut self, member: &mut [bool], depth: usize) -> usize {
        let id = self.nodes.len();
        let (n, sum, sq) = member
            .iter()
            .zip(self.resid)
            .filter(|(m, _)| **m)
            .fold((0usize, 0.0, 0.0), |(n, s, q), (_, r)| (n + 1, s + r, q + r * r));
        let leaf = sum / n as f64;
        self.nodes.push(Node::Leaf(leaf));
        if depth >= self.max_depth || n < 2 {
            return id;
        }
        let sse = sq - sum * sum / n as f64;
        if sse <= self.pure_sse {
            return id;
        }
        let Some(split) = self.best_split(member, n, sum) else {
            return id;
        };
        if !(split.gain > 1e-12 * sse) {
            return id;
        }
        let goes_left: Vec<bool> = (0..member.len())
            .map(|i| member[i] && self.x[(i, split.feature)] <= split.threshold)
            .collect();
        let mut right: Vec<bool> = member
            .iter()
            .zip(&goes_left)
            .map(|(m, l)| *m && !l)
            .collect();
        let mut left = goes_left;
        let l = self.grow(&mut left, depth + 1);
        let r = self.grow(&mut right, depth + 1);
        self.nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: l,
            right: r,
        };
        id
    }

    fn best_split(&self, member: &[bool], n: usize, sum: f64) -> Option<Split> {
        let parent = sum * sum / n as f64;
        let mut best: Option<Split> = None;
        for (f, order) in self.orders.iter().enumerate() {
            let mut left_n = 0usize;
            let mut left_sum = 0.0;
            let mut prev: Option<f64> = None;
            for &i in order.iter().filter(|&&i| member[i]) {
                let v = self.x[(i, f)];
                if let Some(p) = prev {
                    if v > p {
                        let right_n = n - left_n;
                        let right_sum = sum - left_sum;
                        let gain = left_sum * left_sum / left_n as f64
                            + right_sum * right_sum / right_n as f64
                            - parent;
                        if best.as_ref().map_or(true, |b| gain > b.gain) {
                            best = Some(Split {
                                gain,
                                feature: f,
                                threshold: p + (v - p) / 2.0,
                            });
                        }
                    }
                }
                left_n += 1;
                left_sum += self.resid[i];
                prev = Some(v);
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_data(m: usize, n: usize, seed: u64) -> (Matrix, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Matrix::from_fn(m, n, |_, _| rng.gen_range(-2.0..2.0));
        let y = (0..m)
            .map(|i| x[(i, 0)].sin() + 0.5 * x[(i, 1 % n)] * x[(i, 0)] + rng.gen_range(-0.1..0.1))
            .collect();
        (x, y)
    }

    fn mse(m: &TreeEnsemble, x: &Matrix, y: &[f64], rounds: usize) -> f64 {
        (0..x.rows())
            .map(|i| (m.predict_rounds(x.row(i), rounds) - y[i]).powi(2))
            .sum::<f64>()
            / y.len() as f64
    }

    #[test]
    fn constant_target() {
        let (x, _) = random_data(10, 3, 1);
        let y = vec![0.42; 10];
        let m = fit_gbt(&x, &y, &GbtConfig::default()).unwrap();
        assert!(m.trees.iter().all(Tree::is_leaf));
        assert!((predict_gbt(&m, &[5.0, -5.0, 0.0]).unwrap() - 0.42).abs() < 1e-12);
    }

    #[test]
    fn single_stump_on_step() {
        let x = Matrix::from_rows(&[[1.0], [2.0], [3.0], [4.0]]).unwrap();
        let cfg = GbtConfig {
            n_estimators: 1,
            max_depth: 1,
            learning_rate: 1.0,
        };
        let m = fit_gbt(&x, &[0.0, 0.0, 1.0, 1.0], &cfg).unwrap();
        assert_eq!(
            m.trees[0].nodes[0],
            Node::Split {
                feature: 0,
                threshold: 2.5,
                left: 1,
                right: 2
            }
        );
        let preds: Vec<f64> = (1..=4).map(|v| predict_gbt(&m, &[v as f64]).unwrap()).collect();
        assert_eq!(preds, vec![0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn empty_ensemble_is_base_score() {
        let (x, y) = random_data(6, 2, 3);
        let cfg = GbtConfig {
            n_estimators: 0,
            ..GbtConfig::default()
        };
        let m = fit_gbt(&x, &y, &cfg).unwrap();
        let mean = y.iter().sum::<f64>() / 6.0;
        assert_eq!(predict_gbt(&m, &[0.0, 0.0]).unwrap(), mean);
    }

    #[test]
    fn tie_goes_to_lowest_feature() {
        // both columns separate the classes identically
        let x = Matrix::from_rows(&[[0.0, 0.0], [1.0, 1.0]]).unwrap();
        let cfg = GbtConfig {
            n_estimators: 1,
            max_depth: 1,
            learning_rate: 1.0,
        };
        let m = fit_gbt(&x, &[0.0, 1.0], &cfg).unwrap();
        assert!(matches!(m.trees[0].nodes[0], Node::Split { feature: 0, .. }));
    }

    #[test]
    fn training_mse_non_increasing() {
        let (x, y) = random_data(20, 3, 7);
        let cfg = GbtConfig {
            n_estimators: 50,
            max_depth: 3,
            learning_rate: 0.1,
        };
        let m = fit_gbt(&x, &y, &cfg).unwrap();
        let curve: Vec<f64> = (0..=50).map(|r| mse(&m, &x, &y, r)).collect();
        for w in curve.windows(2) {
            assert!(w[1] <= w[0] + 1e-15, "{curve:?}");
        }
        assert!(curve[50] < curve[0]);
    }

    #[test]
    fn depth_bounded() {
        let (x, y) = random_data(64, 4, 9);
        let cfg = GbtConfig {
            n_estimators: 5,
            max_depth: 3,
            learning_rate: 0.3,
        };
        let m = fit_gbt(&x, &y, &cfg).unwrap();
        assert!(m.trees.iter().all(|t| t.depth() <= 3));
        assert!(m.trees.iter().flat_map(|t| &t.nodes).all(|n| match n {
            Node::Leaf(v) => v.is_finite(),
            _ => true,
        }));
    }

    /// Evaluates a tree by listing every root-to-leaf path with its
    /// constraints and picking the unique path `x` satisfies.
    fn path_oracle(t: &Tree, x: &[f64]) -> f64 {
        fn paths(t: &Tree, i: usize, acc: &mut Vec<(usize, f64, bool)>, out: &mut Vec<(Vec<(usize, f64, bool)>, f64)>) {
            match t.nodes[i] {
                Node::Leaf(v) => out.push((acc.clone(), v)),
                Node::Split { feature, threshold, left, right } => {
                    acc.push((feature, threshold, true));
                    paths(t, left, acc, out);
                    acc.pop();
                    acc.push((feature, threshold, false));
                    paths(t, right, acc, out);
                    acc.pop();
                }
            }
        }
        let mut all = Vec::new();
        paths(t, 0, &mut Vec::new(), &mut all);
        let hits: Vec<f64> = all
            .iter()
            .filter(|(cs, _)| cs.iter().all(|&(f, th, le)| (x[f] <= th) == le))
            .map(|(_, v)| *v)
            .collect();
        assert_eq!(hits.len(), 1);
        hits[0]
    }

    #[test]
    fn matches_path_enumeration() {
        let (x, y) = random_data(40, 3, 11);
        let cfg = GbtConfig {
            n_estimators: 10,
            max_depth: 4,
            learning_rate: 0.3,
        };
        let m = fit_gbt(&x, &y, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..100 {
            let q: Vec<f64> = (0..3).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let oracle = m.base_score
                + m.learning_rate * m.trees.iter().map(|t| path_oracle(t, &q)).sum::<f64>();
            assert!((predict_gbt(&m, &q).unwrap() - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_input() {
        let x = Matrix::from_rows(&[[1.0]]).unwrap();
        assert_eq!(fit_gbt(&x, &[1.0], &GbtConfig::default()), Err(BaselineError::TooFewSamples(1)));
        let x = Matrix::zeros(3, 0);
        assert_eq!(fit_gbt(&x, &[1.0, 2.0, 3.0], &GbtConfig::default()), Err(BaselineError::NoFeatures));
        let (x, y) = random_data(5, 2, 1);
        let m = fit_gbt(&x, &y, &GbtConfig::default()).unwrap();
        assert!(predict_gbt(&m, &[1.0]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn invariant_to_monotone_feature_transform(seed in 0u64..1000, col in 0usize..3, kind in 0usize..3) {
            let (x, y) = random_data(25, 3, seed);
            let cfg = GbtConfig { n_estimators: 8, max_depth: 3, learning_rate: 0.5 };
            let base = fit_gbt(&x, &y, &cfg).unwrap();
            let mut xt = x.clone();
            for i in 0..x.rows() {
                let v = x[(i, col)];
                xt[(i, col)] = match kind {
                    0 => v.exp(),
                    1 => 3.0 * v + 7.0,
                    _ => v * v * v,
                };
            }
            let moved = fit_gbt(&xt, &y, &cfg).unwrap();
            for i in 0..x.rows() {
                let a = predict_gbt(&base, x.row(i)).unwrap();
                let b = predict_gbt(&moved, xt.row(i)).unwrap();
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
