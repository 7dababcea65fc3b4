use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{canonical_order, ClassBins, Feature, SurvivalClass, SurvivalRecord};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub seed: u64,
    pub features: Vec<Feature>,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 1000,
            max_depth: 3,
            seed: 0,
            features: vec![Feature::Age, Feature::NCores, Feature::NTumors],
        }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::InvalidConfig("forest needs at least one tree".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    /// Class proportions of the training samples reaching this leaf, indexed
    /// by [`SurvivalClass::index`].
    Leaf { proba: [f64; 3] },
    /// Samples with `features[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Nodes in pre-order; the root is node 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
}

impl DecisionTree {
    fn leaf_for(&self, x: &[f64]) -> &[f64; 3] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { proba } => return proba,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &DecisionTree, i: usize) -> usize {
            match &t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + usize::max(go(t, *left), go(t, *right)),
            }
        }
        go(self, 0)
    }

    pub fn predict_proba(&self, rec: &SurvivalRecord, features: &[Feature]) -> [f64; 3] {
        let x: Vec<f64> = features.iter().map(|f| f.value(rec)).collect();
        *self.leaf_for(&x)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub config: ForestConfig,
    pub bins: ClassBins,
    pub trees: Vec<DecisionTree>,
}

impl ForestModel {
    /// Mean of the per-tree leaf proportions.
    pub fn predict_proba(&self, rec: &SurvivalRecord) -> [f64; 3] {
        let x: Vec<f64> = self.config.features.iter().map(|f| f.value(rec)).collect();
        let mut acc = [0.0; 3];
        for t in &self.trees {
            let p = t.leaf_for(&x);
            for c in 0..3 {
                acc[c] += p[c];
            }
        }
        let n = self.trees.len() as f64;
        acc.map(|v| v / n)
    }

    /// Most probable class (lowest class on ties) and its probability.
    pub fn predict_class(&self, rec: &SurvivalRecord) -> (SurvivalClass, f64) {
        argmax(&self.predict_proba(rec))
    }
}

pub(crate) fn argmax(p: &[f64; 3]) -> (SurvivalClass, f64) {
    let mut best = 0;
    for c in 1..3 {
        if p[c] > p[best] {
            best = c;
        }
    }
    (SurvivalClass::from_index(best), p[best])
}

struct TrainingSet {
    x: Vec<f64>,
    y: Vec<u8>,
    k: usize,
}

impl TrainingSet {
    fn value(&self, sample: usize, feature: usize) -> f64 {
        self.x[sample * self.k + feature]
    }
}

/// Sum of squared class counts and the count itself; Gini impurity times
/// `n` is `n - sq/n`.
fn sq(counts: &[u64; 3]) -> u128 {
    counts.iter().map(|&c| c as u128 * c as u128).sum()
}

/// Best Gini split of `samples`, or `None` if every feature is constant.
///
/// Minimising the weighted child impurity is maximising
/// `sq(L)/|L| + sq(R)/|R|`; candidates are compared as exact rationals, so
/// ties resolve to the lowest feature index and then the lowest threshold.
fn best_split(data: &TrainingSet, samples: &[usize]) -> Option<(usize, f64)> {
    let n = samples.len();
    let mut total = [0u64; 3];
    for &s in samples {
        total[data.y[s] as usize] += 1;
    }
    let mut best: Option<(u128, u128, usize, f64)> = None;
    let mut pairs: Vec<(f64, u8)> = Vec::with_capacity(n);
    for f in 0..data.k {
        pairs.clear();
        pairs.extend(samples.iter().map(|&s| (data.value(s, f), data.y[s])));
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut left = [0u64; 3];
        for i in 0..n - 1 {
            left[pairs[i].1 as usize] += 1;
            if pairs[i].0 == pairs[i + 1].0 {
                continue;
            }
            let right = [total[0] - left[0], total[1] - left[1], total[2] - left[2]];
            let nl = (i + 1) as u128;
            let nr = (n - i - 1) as u128;
            let num = sq(&left) * nr + sq(&right) * nl;
            let den = nl * nr;
            let better = match best {
                None => true,
                Some((bn, bd, _, _)) => num * bd > bn * den,
            };
            if better {
                let threshold = pairs[i].0 + (pairs[i + 1].0 - pairs[i].0) / 2.0;
                best = Some((num, den, f, threshold));
            }
        }
    }
    best.map(|(_, _, f, t)| (f, t))
}

fn grow(data: &TrainingSet, samples: Vec<usize>, depth: usize, max_depth: usize, nodes: &mut Vec<Node>) -> usize {
    let id = nodes.len();
    let mut counts = [0u64; 3];
    for &s in &samples {
        counts[data.y[s] as usize] += 1;
    }
    let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
    let split = if depth < max_depth && !pure {
        best_split(data, &samples)
    } else {
        None
    };
    let Some((feature, threshold)) = split else {
        let n = samples.len() as f64;
        nodes.push(Node::Leaf {
            proba: counts.map(|c| c as f64 / n),
        });
        return id;
    };
    nodes.push(Node::Leaf { proba: [0.0; 3] });
    let (l, r): (Vec<usize>, Vec<usize>) = samples
        .into_iter()
        .partition(|&s| data.value(s, feature) <= threshold);
    let left = grow(data, l, depth + 1, max_depth, nodes);
    let right = grow(data, r, depth + 1, max_depth, nodes);
    nodes[id] = Node::Split {
        feature,
        threshold,
        left,
        right,
    };
    id
}

fn grow_tree(data: &TrainingSet, n: usize, cfg: &ForestConfig, index: usize) -> DecisionTree {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);
    let samples: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
    let mut nodes = Vec::new();
    grow(data, samples, 0, cfg.max_depth, &mut nodes);
    DecisionTree { nodes }
}

/// Bagged Gini trees on the survival classes of `train`.
///
/// Records are put in canonical order first, and tree `i` draws its
/// bootstrap sample from a ChaCha8 stream `i` keyed by the seed, so the
/// model depends only on the record set and the seed; the parallel build
/// produces the same trees as the serial one.
pub fn fit_forest(train: &[SurvivalRecord], cfg: &ForestConfig, bins: &ClassBins) -> Result<ForestModel> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyInput("survival training set"));
    }
    let rows = canonical_order(train);
    let k = cfg.features.len();
    let mut x = Vec::with_capacity(rows.len() * k);
    let mut y = Vec::with_capacity(rows.len());
    for r in &rows {
        r.validate()?;
        let d = r.survival_days.ok_or_else(|| Error::MissingTarget(r.case_id.clone()))?;
        x.extend(cfg.features.iter().map(|f| f.value(r)));
        y.push(bins.classify(d).index() as u8);
    }
    let data = TrainingSet { x, y, k };
    let n = rows.len();

    #[cfg(feature = "parallel")]
    let trees = {
        use rayon::prelude::*;
        (0..cfg.n_trees)
            .into_par_iter()
            .map(|i| grow_tree(&data, n, cfg, i))
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let trees = (0..cfg.n_trees).map(|i| grow_tree(&data, n, cfg, i)).collect();

    Ok(ForestModel {
        config: cfg.clone(),
        bins: *bins,
        trees,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;

    fn rec(i: usize, age: f64, tumors: u32, days: f64) -> SurvivalRecord {
        let mut r = SurvivalRecord::new(format!("c{i:03}"), age, tumors, 1);
        r.survival_days = Some(days);
        r
    }

    fn separable() -> Vec<SurvivalRecord> {
        // young patients live long, old ones short; ages leave a gap around 60
        (0..40)
            .map(|i| {
                if i < 20 {
                    rec(i, 30.0 + i as f64, 1, 700.0)
                } else {
                    rec(i, 70.0 + i as f64, 1, 100.0)
                }
            })
            .collect()
    }

    fn small_cfg() -> ForestConfig {
        ForestConfig {
            n_trees: 50,
            seed: 7,
            ..ForestConfig::default()
        }
    }

    #[test]
    fn separable_data_is_learned_by_every_tree() {
        let train = separable();
        let f = fit_forest(&train, &small_cfg(), &ClassBins::default()).unwrap();
        assert_eq!(f.trees.len(), 50);
        for r in &train {
            let want = ClassBins::default().classify(r.survival_days.unwrap());
            for t in &f.trees {
                assert!(t.depth() <= 3);
                let (c, _) = argmax(&t.predict_proba(r, &f.config.features));
                assert_eq!(c, want);
            }
            let (c, p) = f.predict_class(r);
            assert_eq!(c, want);
            assert_eq!(p, 1.0);
        }
    }

    #[test]
    fn single_class_gives_leaves() {
        let train: Vec<_> = (0..10).map(|i| rec(i, 40.0 + i as f64, 1, 350.0)).collect();
        let f = fit_forest(&train, &small_cfg(), &ClassBins::default()).unwrap();
        assert!(f.trees.iter().all(|t| t.nodes.len() == 1));
        let probe = SurvivalRecord::new("new", 99.0, 5, 5);
        assert_eq!(f.predict_proba(&probe), [0.0, 1.0, 0.0]);
    }

    #[test]
    fn deterministic_and_order_independent() {
        let train = separable();
        let mut reversed = train.clone();
        reversed.reverse();
        let a = fit_forest(&train, &small_cfg(), &ClassBins::default()).unwrap();
        let b = fit_forest(&reversed, &small_cfg(), &ClassBins::default()).unwrap();
        assert_eq!(a, b);
        let other = ForestConfig { seed: 8, ..small_cfg() };
        let c = fit_forest(&train, &other, &ClassBins::default()).unwrap();
        assert_ne!(a.trees, c.trees);
    }

    #[test]
    fn split_prefers_lowest_feature_then_threshold() {
        // both features separate the classes perfectly
        let data = TrainingSet {
            x: vec![1.0, 10.0, 2.0, 20.0, 3.0, 30.0, 4.0, 40.0],
            y: vec![0, 0, 2, 2],
            k: 2,
        };
        assert_eq!(best_split(&data, &[0, 1, 2, 3]), Some((0, 2.5)));
        // two equally good thresholds on one feature
        let data = TrainingSet {
            x: vec![1.0, 2.0, 3.0],
            y: vec![0, 1, 2],
            k: 1,
        };
        assert_eq!(best_split(&data, &[0, 1, 2]), Some((0, 1.5)));
        let constant = TrainingSet {
            x: vec![5.0, 5.0],
            y: vec![0, 2],
            k: 1,
        };
        assert_eq!(best_split(&constant, &[0, 1]), None);
    }

    #[test]
    fn probabilities_sum_to_one() {
        let train: Vec<_> = (0..60)
            .map(|i| rec(i, 20.0 + (i * 7 % 50) as f64, (i % 4) as u32, (i * 37 % 900) as f64))
            .collect();
        let f = fit_forest(&train, &small_cfg(), &ClassBins::default()).unwrap();
        for r in &train {
            let p = f.predict_proba(r);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
