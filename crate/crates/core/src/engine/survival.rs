//! Survival trees split by the two-sample log-rank statistic.

use ndarray::ArrayView2;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{midpoint, TreeNode, MAX_TREE_DEPTH};
use crate::data::SurvivalTarget;
use crate::error::{Result, SurvError};
use crate::scalar::{total_cmp, Scalar};

/// Survival tree whose leaves list member rows (with repetition under bootstrap).
pub type SurvivalTree<T> = TreeNode<T, Vec<usize>>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurvivalTreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Features drawn at each node; `None` uses all.
    pub mtry: Option<usize>,
    pub seed: u64,
}

impl Default for SurvivalTreeParams {
    fn default() -> Self {
        Self {
            max_depth: 32,
            min_samples_leaf: 3,
            mtry: None,
            seed: 0,
        }
    }
}

const PARALLEL_MIN_WORK: usize = 4096;

/// Fenwick tree over `f64` sums.
struct Fenwick {
    tree: Vec<f64>,
}

impl Fenwick {
    fn new(n: usize) -> Self {
        Self {
            tree: vec![0.0; n + 1],
        }
    }

    fn add(&mut self, pos: usize, v: f64) {
        let mut i = pos + 1;
        while i < self.tree.len() {
            self.tree[i] += v;
            i += i & i.wrapping_neg();
        }
    }

    /// Sum over positions `<= pos`.
    fn prefix(&self, pos: usize) -> f64 {
        let mut i = pos + 1;
        let mut s = 0.0;
        while i > 0 {
            s += self.tree[i];
            i -= i & i.wrapping_neg();
        }
        s
    }
}

/// Log-rank statistic `U^2 / V` comparing two groups, computed directly from the risk sets.
/// Returns 0 when the variance vanishes.
pub fn log_rank_statistic<T: Scalar>(group1: &[SurvivalTarget<T>], group2: &[SurvivalTarget<T>]) -> f64 {
    let mut times: Vec<f64> = group1
        .iter()
        .chain(group2)
        .filter(|t| t.event)
        .map(|t| t.time.as_f64())
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let (mut u, mut v) = (0.0, 0.0);
    for &t in &times {
        let count = |g: &[SurvivalTarget<T>]| {
            let at_risk = g.iter().filter(|x| x.time.as_f64() >= t).count() as f64;
            let deaths = g.iter().filter(|x| x.event && x.time.as_f64() == t).count() as f64;
            (at_risk, deaths)
        };
        let (n1, d1) = count(group1);
        let (n2, d2) = count(group2);
        let (n, d) = (n1 + n2, d1 + d2);
        u += d1 - n1 * d / n;
        if n > 1.0 {
            v += n1 * n2 * d * (n - d) / (n * n * (n - 1.0));
        }
    }
    if v > 0.0 {
        u * u / v
    } else {
        0.0
    }
}

struct Node<'a, T> {
    x: ArrayView2<'a, T>,
    targets: &'a [SurvivalTarget<T>],
    params: SurvivalTreeParams,
}

/// Per-node risk-set summaries indexed by distinct event time.
struct RiskSummary {
    /// Number of node event times at or before each member's time.
    k_of: Vec<usize>,
    /// Prefix sums, index `k` covers event times `1..=k` (index 0 is empty).
    expected: Vec<f64>,
    c: Vec<f64>,
    cn: Vec<f64>,
    n_times: usize,
}

fn risk_summary<T: Scalar>(targets: &[SurvivalTarget<T>], members: &[usize]) -> RiskSummary {
    let mut ev: Vec<T> = members
        .iter()
        .filter(|&&r| targets[r].event)
        .map(|&r| targets[r].time)
        .collect();
    ev.sort_by(total_cmp);
    ev.dedup();
    let kk = ev.len();
    let k_of: Vec<usize> = members
        .iter()
        .map(|&r| ev.partition_point(|&e| e <= targets[r].time))
        .collect();
    // deaths and at-risk counts per event time
    let mut deaths = vec![0.0; kk];
    let mut leaving = vec![0.0; kk + 1];
    for (p, &r) in members.iter().enumerate() {
        let k = k_of[p];
        leaving[k] += 1.0;
        if targets[r].event {
            deaths[k - 1] += 1.0;
        }
    }
    // at risk at event time j (1-based) = members with k >= j
    let mut at_risk = vec![0.0; kk + 2];
    for k in (0..=kk).rev() {
        at_risk[k] = at_risk[k + 1] + leaving[k];
    }
    let mut expected = vec![0.0; kk + 1];
    let mut c = vec![0.0; kk + 1];
    let mut cn = vec![0.0; kk + 1];
    for j in 1..=kk {
        let n = at_risk[j];
        let d = deaths[j - 1];
        expected[j] = expected[j - 1] + d / n;
        let cj = if n > 1.0 { d * (n - d) / (n * n * (n - 1.0)) } else { 0.0 };
        c[j] = c[j - 1] + cj;
        cn[j] = cn[j - 1] + cj * n;
    }
    RiskSummary {
        k_of,
        expected,
        c,
        cn,
        n_times: kk,
    }
}

#[derive(Clone, Copy)]
struct Candidate<T> {
    stat: f64,
    feature: usize,
    threshold: T,
}

/// Grows one survival tree over `rows` (indices into `features`/`targets`; repeats allowed).
/// Each node draws `mtry` candidate features and takes the threshold maximising the log-rank
/// statistic. Nodes without events, without an admissible split, at the depth cap or below
/// twice the leaf size become leaves.
pub fn fit_survival_tree<T: Scalar>(
    features: ArrayView2<'_, T>,
    targets: &[SurvivalTarget<T>],
    rows: &[usize],
    params: &SurvivalTreeParams,
) -> Result<SurvivalTree<T>> {
    if targets.len() != features.nrows() {
        return Err(SurvError::LengthMismatch {
            expected: features.nrows(),
            found: targets.len(),
        });
    }
    if params.max_depth > MAX_TREE_DEPTH {
        return Err(SurvError::InvalidInput(format!(
            "max_depth {} exceeds the supported maximum {MAX_TREE_DEPTH}",
            params.max_depth
        )));
    }
    if params.min_samples_leaf == 0 {
        return Err(SurvError::InvalidInput("min_samples_leaf must be >= 1".into()));
    }
    if let Some(&bad) = rows.iter().find(|&&r| r >= targets.len()) {
        return Err(SurvError::InvalidInput(format!("row index {bad} out of range")));
    }
    if !rows.iter().any(|&r| targets[r].event) {
        return Err(SurvError::NoEvents);
    }
    if features.iter().any(|x| !x.is_finite()) {
        return Err(SurvError::NonFinite("features".into()));
    }
    let node = Node {
        x: features,
        targets,
        params: *params,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut members = rows.to_vec();
    members.sort_unstable();
    Ok(grow(&node, members, 0, &mut rng))
}

fn grow<T: Scalar>(node: &Node<'_, T>, members: Vec<usize>, depth: usize, rng: &mut ChaCha8Rng) -> SurvivalTree<T> {
    let p = &node.params;
    let m = members.len();
    let has_event = members.iter().any(|&r| node.targets[r].event);
    if !has_event || depth >= p.max_depth || m < 2 * p.min_samples_leaf {
        return TreeNode::leaf(members);
    }
    let d = node.x.ncols();
    let mtry = p.mtry.unwrap_or(d).clamp(1, d);
    let mut feats: Vec<usize> = sample(rng, d, mtry).into_vec();
    feats.sort_unstable();

    let summary = risk_summary(node.targets, &members);
    let scan = |&j: &usize| best_split(node, &members, &summary, j);
    let found: Vec<Option<Candidate<T>>> = if m * feats.len() >= PARALLEL_MIN_WORK {
        feats.par_iter().map(scan).collect()
    } else {
        feats.iter().map(scan).collect()
    };
    let mut best: Option<Candidate<T>> = None;
    for c in found.into_iter().flatten() {
        if best.is_none_or(|b| c.stat > b.stat) {
            best = Some(c);
        }
    }
    let Some(best) = best else {
        return TreeNode::leaf(members);
    };
    let (left, right): (Vec<usize>, Vec<usize>) = members
        .into_iter()
        .partition(|&r| node.x[[r, best.feature]] <= best.threshold);
    let left = grow(node, left, depth + 1, rng);
    let right = grow(node, right, depth + 1, rng);
    TreeNode::Split {
        feature: best.feature,
        threshold: best.threshold,
        gain: T::of(best.stat),
        left: Box::new(left),
        right: Box::new(right),
    }
}

/// Scans one feature. Adding members to the left group in value order updates
/// `U = sum_L (delta_r - E(k_r))` and
/// `V = sum_L D(k_r) - sum_{r,s in L} C(min(k_r, k_s))` in `O(log K)` per member.
fn best_split<T: Scalar>(
    node: &Node<'_, T>,
    members: &[usize],
    s: &RiskSummary,
    j: usize,
) -> Option<Candidate<T>> {
    let m = members.len();
    let min_leaf = node.params.min_samples_leaf;
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        total_cmp(&node.x[[members[a], j]], &node.x[[members[b], j]]).then(a.cmp(&b))
    });
    let mut count = Fenwick::new(s.n_times + 1);
    let mut c_sum = Fenwick::new(s.n_times + 1);
    let mut n_in = 0.0;
    let (mut u, mut d_sum, mut pairs) = (0.0, 0.0, 0.0);
    let mut best: Option<Candidate<T>> = None;
    for pos in 0..m - 1 {
        let q = order[pos];
        let k = s.k_of[q];
        let delta = if node.targets[members[q]].event { 1.0 } else { 0.0 };
        u += delta - s.expected[k];
        d_sum += s.cn[k];
        let below = c_sum.prefix(k);
        let above_count = n_in - count.prefix(k);
        pairs += s.c[k] + 2.0 * (below + s.c[k] * above_count);
        count.add(k, 1.0);
        c_sum.add(k, s.c[k]);
        n_in += 1.0;

        let a = node.x[[members[q], j]];
        let b = node.x[[members[order[pos + 1]], j]];
        let n_left = pos + 1;
        if a == b || n_left < min_leaf || m - n_left < min_leaf {
            continue;
        }
        let v = d_sum - pairs;
        if !(v > 1e-12) {
            continue;
        }
        let stat = u * u / v;
        if best.is_none_or(|c| stat > c.stat) {
            best = Some(Candidate {
                stat,
                feature: j,
                threshold: midpoint(a, b),
            });
        }
    }
    best
}
