//! The five base learners and the logistic combiner. Every learner works on
//! dense standardized rows and 0/1 labels and returns class-1 probabilities.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{fit_class_tree, fit_regression_tree, ClassTreeParams, RegressionTreeParams, Tree};

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-12, 1.0 - 1e-12);
    (p / (1.0 - p)).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoostingParams {
    pub rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub lambda: f64,
    pub min_child_weight: f64,
}

impl Default for BoostingParams {
    fn default() -> Self {
        BoostingParams { rounds: 200, max_depth: 3, learning_rate: 0.1, lambda: 1.0, min_child_weight: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForestParams {
    pub trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams { trees: 100, max_depth: 8, min_samples_leaf: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KnnParams {
    pub k: usize,
}

impl Default for KnnParams {
    fn default() -> Self {
        KnnParams { k: 5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearParams {
    pub lambda: f64,
    pub epochs: usize,
}

impl Default for LinearParams {
    fn default() -> Self {
        LinearParams { lambda: 0.01, epochs: 500 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NaiveBayesParams {
    pub var_smoothing: f64,
}

impl Default for NaiveBayesParams {
    fn default() -> Self {
        NaiveBayesParams { var_smoothing: 1e-9 }
    }
}

/// Gradient boosting on weighted logistic loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedTrees {
    pub base_score: f64,
    pub trees: Vec<Tree>,
}

impl BoostedTrees {
    /// `w` are per-row weights (the class weighting lives here).
    pub fn fit(x: &[Vec<f64>], y: &[u8], w: &[f64], p: &BoostingParams) -> Self {
        let n = x.len();
        let wsum: f64 = w.iter().sum();
        let wpos: f64 = w.iter().zip(y).filter(|(_, &yi)| yi == 1).map(|(wi, _)| wi).sum();
        let base_score = logit(wpos / wsum);
        let mut f = vec![base_score; n];
        let rows: Vec<usize> = (0..n).collect();
        let tp = RegressionTreeParams {
            max_depth: p.max_depth,
            lambda: p.lambda,
            min_child_weight: p.min_child_weight,
            shrinkage: p.learning_rate,
        };
        let mut trees = Vec::with_capacity(p.rounds);
        let mut g = vec![0.0; n];
        let mut h = vec![0.0; n];
        for _ in 0..p.rounds {
            for i in 0..n {
                let q = sigmoid(f[i]);
                g[i] = w[i] * (q - y[i] as f64);
                h[i] = w[i] * q * (1.0 - q);
            }
            let t = fit_regression_tree(x, &g, &h, &rows, &tp);
            for i in 0..n {
                f[i] += t.predict(&x[i]);
            }
            trees.push(t);
        }
        BoostedTrees { base_score, trees }
    }

    pub fn margin(&self, x: &[f64]) -> f64 {
        self.base_score + self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }

    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        sigmoid(self.margin(x))
    }
}

/// Bagged Gini trees; probability is the fraction of trees voting class 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<Tree>,
}

impl RandomForest {
    pub fn fit(x: &[Vec<f64>], y: &[u8], p: &ForestParams, seed: u64) -> Self {
        let n = x.len();
        let d = x.first().map_or(1, Vec::len);
        let max_features = ((d as f64).sqrt().floor() as usize).max(1);
        let tp = ClassTreeParams {
            max_depth: p.max_depth,
            min_samples_leaf: p.min_samples_leaf.max(1),
            max_features,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let trees = (0..p.trees)
            .map(|_| {
                let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                fit_class_tree(x, y, &rows, &tp, &mut rng)
            })
            .collect();
        RandomForest { trees }
    }

    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        if self.trees.is_empty() {
            return 0.0;
        }
        let votes = self.trees.iter().filter(|t| t.predict(x) > 0.5).count();
        votes as f64 / self.trees.len() as f64
    }
}

/// Stores its training rows; probability is the class-1 share of the k
/// nearest (Euclidean, ties to the lower row index).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KNearest {
    pub k: usize,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<u8>,
}

impl KNearest {
    pub fn fit(x: &[Vec<f64>], y: &[u8], p: &KnnParams) -> Self {
        KNearest { k: p.k, x: x.to_vec(), y: y.to_vec() }
    }

    pub fn predict_proba(&self, q: &[f64]) -> f64 {
        let mut d: Vec<(f64, usize)> = self
            .x
            .iter()
            .enumerate()
            .map(|(i, r)| (r.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), i))
            .collect();
        d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let k = self.k.min(d.len());
        if k == 0 {
            return 0.0;
        }
        let pos = d[..k].iter().filter(|(_, i)| self.y[*i] == 1).count();
        pos as f64 / k as f64
    }
}

/// Hinge loss with L2 penalty, full-batch subgradient descent with step
/// `1/(lambda t)`. The bias is not penalized. Probabilities come from
/// `sigmoid(a * f(x))` with `a >= 0` fitted on the training margins, so the
/// 0.5 threshold agrees with the sign of the margin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearMaxMargin {
    pub w: Vec<f64>,
    pub b: f64,
    pub scale: f64,
}

impl LinearMaxMargin {
    pub fn fit(x: &[Vec<f64>], y: &[u8], p: &LinearParams) -> Self {
        let n = x.len();
        let d = x.first().map_or(0, Vec::len);
        let sy: Vec<f64> = y.iter().map(|&v| if v == 1 { 1.0 } else { -1.0 }).collect();
        let mut w = vec![0.0; d];
        let mut b = 0.0;
        let lambda = p.lambda.max(1e-12);
        for t in 1..=p.epochs {
            let eta = 1.0 / (lambda * t as f64);
            let mut gw: Vec<f64> = w.iter().map(|wj| lambda * wj).collect();
            let mut gb = 0.0;
            for i in 0..n {
                let m = sy[i] * (dot(&w, &x[i]) + b);
                if m < 1.0 {
                    for j in 0..d {
                        gw[j] -= sy[i] * x[i][j] / n as f64;
                    }
                    gb -= sy[i] / n as f64;
                }
            }
            for j in 0..d {
                w[j] -= eta * gw[j];
            }
            // Bias steps are capped so early huge steps do not dominate.
            b -= eta.min(1.0) * gb;
        }
        let margins: Vec<f64> = x.iter().map(|r| dot(&w, r) + b).collect();
        let scale = fit_scale(&margins, y);
        LinearMaxMargin { w, b, scale }
    }

    pub fn decision(&self, x: &[f64]) -> f64 {
        dot(&self.w, x) + self.b
    }

    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        sigmoid(self.scale * self.decision(x))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes log loss of `sigmoid(a m)` over `a >= 0` by projected Newton.
fn fit_scale(m: &[f64], y: &[u8]) -> f64 {
    let mut a = 1.0;
    for _ in 0..100 {
        let (mut g, mut h) = (0.0, 0.0);
        for (mi, &yi) in m.iter().zip(y) {
            let q = sigmoid(a * mi);
            g += (q - yi as f64) * mi;
            h += q * (1.0 - q) * mi * mi;
        }
        // Small ridge keeps the step finite on separable data.
        let step = g / (h + 1e-6);
        let next = (a - step).clamp(0.0, 1e3);
        if (next - a).abs() < 1e-10 {
            a = next;
            break;
        }
        a = next;
    }
    a
}

/// Gaussian naive Bayes with variance smoothing relative to the largest
/// feature variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayes {
    pub log_prior: [f64; 2],
    pub mean: [Vec<f64>; 2],
    pub var: [Vec<f64>; 2],
}

impl NaiveBayes {
    pub fn fit(x: &[Vec<f64>], y: &[u8], p: &NaiveBayesParams) -> Self {
        let d = x.first().map_or(0, Vec::len);
        let n = x.len() as f64;
        let all_var = (0..d)
            .map(|j| {
                let mu = x.iter().map(|r| r[j]).sum::<f64>() / n;
                x.iter().map(|r| (r[j] - mu).powi(2)).sum::<f64>() / n
            })
            .fold(0.0, f64::max);
        let eps = (p.var_smoothing * all_var).max(1e-12);
        let mut log_prior = [0.0; 2];
        let mut mean = [vec![0.0; d], vec![0.0; d]];
        let mut var = [vec![0.0; d], vec![0.0; d]];
        for c in 0..2u8 {
            let rows: Vec<&Vec<f64>> = x.iter().zip(y).filter(|(_, &yi)| yi == c).map(|(r, _)| r).collect();
            let k = rows.len() as f64;
            let ci = c as usize;
            log_prior[ci] = if rows.is_empty() { f64::NEG_INFINITY } else { (k / n).ln() };
            for j in 0..d {
                if rows.is_empty() {
                    var[ci][j] = 1.0;
                    continue;
                }
                let mu = rows.iter().map(|r| r[j]).sum::<f64>() / k;
                mean[ci][j] = mu;
                var[ci][j] = rows.iter().map(|r| (r[j] - mu).powi(2)).sum::<f64>() / k + eps;
            }
        }
        NaiveBayes { log_prior, mean, var }
    }

    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        let ll = |c: usize| {
            self.log_prior[c]
                + x.iter()
                    .enumerate()
                    .map(|(j, v)| {
                        let s = self.var[c][j];
                        -0.5 * ((2.0 * std::f64::consts::PI * s).ln() + (v - self.mean[c][j]).powi(2) / s)
                    })
                    .sum::<f64>()
        };
        let (l0, l1) = (ll(0), ll(1));
        if l1 == f64::NEG_INFINITY {
            return 0.0;
        }
        if l0 == f64::NEG_INFINITY {
            return 1.0;
        }
        sigmoid(l1 - l0)
    }
}

/// L2-penalized logistic regression with non-negative weights and a free
/// intercept, fit by projected gradient descent. Used to combine base
/// probabilities: a non-negative combiner cannot reverse the ordering that
/// unanimous base learners agree on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticCombiner {
    pub w: Vec<f64>,
    pub b: f64,
}

impl LogisticCombiner {
    /// Minimizes `sum_i c_i loss_i + l2/2 |w|^2` with `c_i` the balanced
    /// class weight of row `i`.
    pub fn fit(x: &[Vec<f64>], y: &[u8], l2: f64) -> Self {
        let n = x.len();
        let d = x.first().map_or(0, Vec::len);
        let pos = y.iter().filter(|&&v| v == 1).count();
        let neg = n - pos;
        let cw = |v: u8| {
            let k = if v == 1 { pos } else { neg };
            if k == 0 {
                0.0
            } else {
                n as f64 / (2.0 * k as f64)
            }
        };
        let c: Vec<f64> = y.iter().map(|&v| cw(v)).collect();
        let csum: f64 = c.iter().sum();
        let max_sq = x.iter().map(|r| dot(r, r)).fold(0.0, f64::max);
        let lipschitz = 0.25 * csum * (1.0 + max_sq) + l2;
        let step = 1.0 / lipschitz.max(1e-12);
        let mut w = vec![0.0; d];
        let mut b = 0.0;
        for _ in 0..5000 {
            let mut gw: Vec<f64> = w.iter().map(|v| l2 * v).collect();
            let mut gb = 0.0;
            for i in 0..n {
                let r = c[i] * (sigmoid(dot(&w, &x[i]) + b) - y[i] as f64);
                for j in 0..d {
                    gw[j] += r * x[i][j];
                }
                gb += r;
            }
            let mut delta = (gb * step).abs();
            b -= step * gb;
            for j in 0..d {
                let next = (w[j] - step * gw[j]).max(0.0);
                delta = delta.max((next - w[j]).abs());
                w[j] = next;
            }
            if delta < 1e-12 {
                break;
            }
        }
        LogisticCombiner { w, b }
    }

    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        sigmoid(dot(&self.w, x) + self.b)
    }
}

/// Draws `k` distinct indices from `0..n` in sampled order.
pub fn choose<R: Rng>(rng: &mut R, n: usize, k: usize) -> Vec<usize> {
    sample(rng, n, k.min(n)).into_vec()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn separable() -> (Vec<Vec<f64>>, Vec<u8>) {
        let x: Vec<Vec<f64>> = (0..40)
            .map(|i| {
                let c = if i < 20 { -1.0 } else { 1.0 };
                vec![c + (i % 5) as f64 * 0.1, (i % 7) as f64 * 0.05]
            })
            .collect();
        let y = (0..40).map(|i| u8::from(i >= 20)).collect();
        (x, y)
    }

    fn accuracy(p: impl Fn(&[f64]) -> f64, x: &[Vec<f64>], y: &[u8]) -> f64 {
        x.iter().zip(y).filter(|(r, &t)| u8::from(p(r) >= 0.5) == t).count() as f64 / y.len() as f64
    }

    #[test]
    fn every_learner_fits_separable_data() {
        let (x, y) = separable();
        let b = BoostedTrees::fit(&x, &y, &vec![1.0; 40], &BoostingParams::default());
        assert_eq!(accuracy(|r| b.predict_proba(r), &x, &y), 1.0);
        let f = RandomForest::fit(&x, &y, &ForestParams::default(), 3);
        assert_eq!(accuracy(|r| f.predict_proba(r), &x, &y), 1.0);
        let k = KNearest::fit(&x, &y, &KnnParams::default());
        assert_eq!(accuracy(|r| k.predict_proba(r), &x, &y), 1.0);
        let l = LinearMaxMargin::fit(&x, &y, &LinearParams::default());
        assert_eq!(accuracy(|r| l.predict_proba(r), &x, &y), 1.0);
        let nb = NaiveBayes::fit(&x, &y, &NaiveBayesParams::default());
        assert_eq!(accuracy(|r| nb.predict_proba(r), &x, &y), 1.0);
        let m = LogisticCombiner::fit(&x, &y, 1.0);
        assert_eq!(accuracy(|r| m.predict_proba(r), &x, &y), 1.0);
    }

    #[test]
    fn knn_ties_prefer_lower_index() {
        let x = vec![vec![1.0], vec![-1.0], vec![1.0]];
        let k = KNearest::fit(&x, &[1, 0, 0], &KnnParams { k: 1 });
        assert_eq!(k.predict_proba(&[0.0]), 1.0);
        assert_eq!(k.predict_proba(&[1.0]), 1.0);
    }

    #[test]
    fn combiner_weights_nonnegative() {
        // Feature anti-correlated with the label gets weight zero.
        let x = vec![vec![1.0], vec![0.9], vec![0.1], vec![0.0]];
        let m = LogisticCombiner::fit(&x, &[0, 0, 1, 1], 1.0);
        assert_eq!(m.w, [0.0]);
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert_eq!(sigmoid(1000.0), 1.0);
        assert_eq!(sigmoid(0.0), 0.5);
    }
}
