use nalgebra::DMatrix;

use super::{check_width, supervision, Estimator, FitContext, ModelError, Supervision};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitCriterion {
    Gini,
    Entropy,
}

impl SplitCriterion {
    fn impurity(self, counts: &[usize], total: usize) -> f64 {
        if total == 0 {
            return 0.0;
        }
        let n = total as f64;
        match self {
            SplitCriterion::Gini => 1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>(),
            SplitCriterion::Entropy => counts
                .iter()
                .filter(|&&c| c > 0)
                .map(|&c| {
                    let p = c as f64 / n;
                    -p * p.ln()
                })
                .sum(),
        }
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf(Vec<f64>),
    Split { feature: usize, threshold: f64, left: Box<Node>, right: Box<Node> },
}

/// CART classification tree with axis-aligned mid-point thresholds.
#[derive(Debug, Clone)]
pub struct DecisionTree {
    max_depth: Option<usize>,
    min_leaf: usize,
    criterion: SplitCriterion,
    root: Option<(Node, usize, usize)>,
}

struct Builder<'a> {
    x: &'a DMatrix<f64>,
    labels: &'a [usize],
    n_classes: usize,
    max_depth: Option<usize>,
    min_leaf: usize,
    criterion: SplitCriterion,
    ctx: &'a FitContext,
}

impl Builder<'_> {
    fn counts(&self, idx: &[usize]) -> Vec<usize> {
        let mut c = vec![0; self.n_classes];
        for &i in idx {
            c[self.labels[i]] += 1;
        }
        c
    }

    fn leaf(&self, counts: &[usize], total: usize) -> Node {
        Node::Leaf(counts.iter().map(|&c| c as f64 / total as f64).collect())
    }

    fn build(&self, idx: Vec<usize>, depth: usize) -> Result<Node, ModelError> {
        self.ctx.check_deadline()?;
        let counts = self.counts(&idx);
        let total = idx.len();
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || self.max_depth.is_some_and(|d| depth >= d) || total < 2 * self.min_leaf {
            return Ok(self.leaf(&counts, total));
        }
        // (impurity, feature, threshold)
        let mut best: Option<(f64, usize, f64)> = None;
        for f in 0..self.x.ncols() {
            let mut order = idx.clone();
            order.sort_by(|&a, &b| self.x[(a, f)].total_cmp(&self.x[(b, f)]).then(a.cmp(&b)));
            let mut left = vec![0usize; self.n_classes];
            let mut right = counts.clone();
            for pos in 0..total - 1 {
                let i = order[pos];
                left[self.labels[i]] += 1;
                right[self.labels[i]] -= 1;
                let nl = pos + 1;
                let nr = total - nl;
                let (a, b) = (self.x[(i, f)], self.x[(order[pos + 1], f)]);
                if a == b || nl < self.min_leaf || nr < self.min_leaf {
                    continue;
                }
                let score = (nl as f64 * self.criterion.impurity(&left, nl)
                    + nr as f64 * self.criterion.impurity(&right, nr))
                    / total as f64;
                if best.is_none_or(|(s, _, _)| score < s - 1e-15) {
                    best = Some((score, f, 0.5 * (a + b)));
                }
            }
        }
        let Some((_, feature, threshold)) = best else {
            return Ok(self.leaf(&counts, total));
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx.into_iter().partition(|&i| self.x[(i, feature)] <= threshold);
        Ok(Node::Split {
            feature,
            threshold,
            left: Box::new(self.build(l, depth + 1)?),
            right: Box::new(self.build(r, depth + 1)?),
        })
    }
}

impl DecisionTree {
    /// `max_depth = None` grows the tree until leaves are pure or cannot be
    /// split.
    pub fn new(max_depth: Option<usize>, min_leaf: usize, criterion: SplitCriterion) -> Self {
        DecisionTree { max_depth, min_leaf: min_leaf.max(1), criterion, root: None }
    }

    fn predict_row(node: &Node, row: impl Fn(usize) -> f64) -> &[f64] {
        let mut cur = node;
        loop {
            match cur {
                Node::Leaf(p) => return p,
                Node::Split { feature, threshold, left, right } => {
                    cur = if row(*feature) <= *threshold { left } else { right };
                }
            }
        }
    }
}

impl Estimator for DecisionTree {
    fn fit(&mut self, x: &DMatrix<f64>, target: Option<&Supervision<'_>>, ctx: &FitContext) -> Result<(), ModelError> {
        let sup = supervision(target, x)?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::TrainingFailure("decision tree input is not finite".into()));
        }
        let b = Builder {
            x,
            labels: sup.labels,
            n_classes: sup.n_classes,
            max_depth: self.max_depth,
            min_leaf: self.min_leaf,
            criterion: self.criterion,
            ctx,
        };
        let root = b.build((0..x.nrows()).collect(), 0)?;
        self.root = Some((root, x.ncols(), sup.n_classes));
        Ok(())
    }

    fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>, ModelError> {
        let (root, width, classes) = self.root.as_ref().ok_or(ModelError::NotFitted)?;
        check_width(*width, x)?;
        let mut out = DMatrix::zeros(x.nrows(), *classes);
        for i in 0..x.nrows() {
            let p = Self::predict_row(root, |f| x[(i, f)]);
            for (c, v) in p.iter().enumerate() {
                out[(i, c)] = *v;
            }
        }
        Ok(out)
    }

    fn output_width(&self) -> Option<usize> {
        self.root.as_ref().map(|(_, _, c)| *c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unlimited_depth_memorizes_consistent_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let x = DMatrix::from_fn(80, 3, |_, _| rng.gen_range(-1.0..1.0));
        let labels: Vec<usize> = (0..80).map(|_| rng.gen_range(0..3)).collect();
        let sup = Supervision { labels: &labels, n_classes: 3 };
        for criterion in [SplitCriterion::Gini, SplitCriterion::Entropy] {
            let mut t = DecisionTree::new(None, 1, criterion);
            t.fit(&x, Some(&sup), &FitContext::default()).unwrap();
            let p = t.apply(&x).unwrap();
            for (i, &c) in labels.iter().enumerate() {
                assert_eq!(p[(i, c)], 1.0);
            }
        }
    }

    #[test]
    fn solves_xor_despite_zero_gain_root() {
        let x = DMatrix::from_row_slice(4, 2, &[0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0]);
        let labels = [0, 1, 1, 0];
        let sup = Supervision { labels: &labels, n_classes: 2 };
        let mut t = DecisionTree::new(Some(32), 1, SplitCriterion::Gini);
        t.fit(&x, Some(&sup), &FitContext::default()).unwrap();
        let p = t.apply(&x).unwrap();
        for (i, &c) in labels.iter().enumerate() {
            assert_eq!(p[(i, c)], 1.0);
        }
    }

    #[test]
    fn depth_one_is_a_stump() {
        let x = DMatrix::from_column_slice(4, 1, &[0.0, 1.0, 2.0, 3.0]);
        let labels = [0, 0, 1, 1];
        let sup = Supervision { labels: &labels, n_classes: 2 };
        let mut t = DecisionTree::new(Some(1), 1, SplitCriterion::Gini);
        t.fit(&x, Some(&sup), &FitContext::default()).unwrap();
        let p = t.apply(&DMatrix::from_column_slice(2, 1, &[1.4, 1.6])).unwrap();
        assert_eq!(p[(0, 0)], 1.0);
        assert_eq!(p[(1, 1)], 1.0);
    }
}
