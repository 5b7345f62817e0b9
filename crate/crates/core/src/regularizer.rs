//! Receiver–receiver similarity graphs and their decayed combination.
//!
//! Each historical slice yields a sparse symmetric graph over receivers;
//! the graphs are collapsed into one weighted graph with geometrically
//! decaying slice weights. The combined graph drives the smoothness
//! penalty on the receiver factor matrix: receivers that transact with
//! the same senders are pulled toward nearby latent positions.

use std::collections::BTreeMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::temporal_graph::{Snapshot, SparseKnownSet};

/// How a slice's receiver–receiver edge weights are derived from the
/// transactions in that slice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum WeightScheme {
    /// Inner product of receiver columns: w_{jl} = sum_i r_{ij} * r_{il}.
    /// Cheap, sparse, and sensitive to transaction magnitudes.
    #[default]
    CoSenderProduct,
    /// 1.0 whenever two receivers share at least one sender (known-entry
    /// presence; stored values are ignored).
    BinarizedCoOccurrence,
    /// Inner product normalized by receiver column norms, so weights lie
    /// in [0, 1] and magnitude scale cancels out.
    CosineNormalized,
}

/// Sparse symmetric receiver graph for one slice, stored as its strict
/// upper triangle: (j, l, w) with j < l and w > 0, sorted by (j, l).
#[derive(Clone, Debug, PartialEq)]
pub struct ReceiverGraph {
    num_receivers: usize,
    edges: Vec<(usize, usize, f64)>,
}

impl ReceiverGraph {
    pub fn num_receivers(&self) -> usize {
        self.num_receivers
    }

    /// Upper-triangle edges (j < l), sorted.
    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    /// Weight of the (j, l) pair, zero when absent or j == l.
    pub fn weight(&self, j: usize, l: usize) -> f64 {
        if j == l {
            return 0.0;
        }
        let key = (j.min(l), j.max(l));
        match self.edges.binary_search_by(|&(a, b, _)| (a, b).cmp(&key)) {
            Ok(pos) => self.edges[pos].2,
            Err(_) => 0.0,
        }
    }
}

/// Build one slice's receiver graph. The diagonal is always zero and
/// zero-weight pairs are not stored, so a slice without any receiver pair
/// sharing a sender yields an edgeless graph.
pub fn build_receiver_graph(known: &SparseKnownSet, scheme: WeightScheme) -> ReceiverGraph {
    let mut acc: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for i in 0..known.num_senders() {
        let row = known.row(i);
        for a in 0..row.len() {
            for b in (a + 1)..row.len() {
                let key = (row[a].receiver, row[b].receiver);
                let contribution = match scheme {
                    WeightScheme::CoSenderProduct | WeightScheme::CosineNormalized => {
                        row[a].value * row[b].value
                    }
                    WeightScheme::BinarizedCoOccurrence => 1.0,
                };
                *acc.entry(key).or_insert(0.0) += contribution;
            }
        }
    }

    let column_norm: Vec<f64> = if scheme == WeightScheme::CosineNormalized {
        (0..known.num_receivers())
            .map(|j| known.col(j).map(|e| e.value * e.value).sum::<f64>().sqrt())
            .collect()
    } else {
        Vec::new()
    };

    let edges = acc
        .into_iter()
        .filter_map(|((j, l), w)| {
            let w = match scheme {
                WeightScheme::CoSenderProduct => w,
                WeightScheme::BinarizedCoOccurrence => 1.0,
                WeightScheme::CosineNormalized => {
                    let denom = column_norm[j] * column_norm[l];
                    if denom > 0.0 {
                        w / denom
                    } else {
                        0.0
                    }
                }
            };
            (w > 0.0).then_some((j, l, w))
        })
        .collect();

    ReceiverGraph {
        num_receivers: known.num_receivers(),
        edges,
    }
}

/// Decayed combination of per-slice receiver graphs, plus the degree
/// vector and the regularization strength. Immutable once built; training
/// loops only read it.
#[derive(Clone, Debug, PartialEq)]
pub struct CombinedGraph {
    num_receivers: usize,
    theta: f64,
    alpha: f64,
    /// Sorted neighbor lists with combined weights, both directions
    /// stored, packed end to end: receiver j's list is
    /// `pairs[offsets[j]..offsets[j + 1]]`. Flat storage keeps the
    /// training loop's neighbor walks on one contiguous allocation.
    offsets: Vec<usize>,
    pairs: Vec<(usize, f64)>,
    /// degree[j] = sum_l w̄_{jl}.
    degree: Vec<f64>,
}

impl CombinedGraph {
    pub fn num_receivers(&self) -> usize {
        self.num_receivers
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Sorted (neighbor, weight) list for receiver j.
    pub fn neighbors(&self, j: usize) -> &[(usize, f64)] {
        &self.pairs[self.offsets[j]..self.offsets[j + 1]]
    }

    pub fn degree(&self, j: usize) -> f64 {
        self.degree[j]
    }

    /// Combined weights as sorted upper-triangle (j, l, w̄) triples, the
    /// form used by the weights debug dump.
    pub fn upper_triangle(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for j in 0..self.num_receivers {
            for &(l, w) in self.neighbors(j) {
                if l > j {
                    out.push((j, l, w));
                }
            }
        }
        out
    }

    /// The smoothness penalty alpha * sum over ordered pairs (j, l) of
    /// w̄_{jl} * ||y_j - y_l||^2. Each unordered pair contributes twice,
    /// matching the double-sum form of the training objective.
    pub fn regularizer_value(&self, y: &Array2<f64>) -> Result<f64> {
        if y.nrows() != self.num_receivers {
            return Err(Error::Dimension(format!(
                "factor matrix has {} rows, graph has {} receivers",
                y.nrows(),
                self.num_receivers
            )));
        }
        let k = y.ncols();
        let y_cow = y.as_standard_layout();
        let flat = y_cow.as_slice().expect("standard layout");
        let mut total = 0.0;
        for j in 0..self.num_receivers {
            let yj = &flat[j * k..(j + 1) * k];
            for &(l, w) in self.neighbors(j) {
                let yl = &flat[l * k..(l + 1) * k];
                let sq: f64 = yj
                    .iter()
                    .zip(yl)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                total += w * sq;
            }
        }
        Ok(self.alpha * total)
    }

    /// Weighted neighbor sums W̄·Y: row j is Σ_l w̄_{jl} y_l. One pass over
    /// the edge list produces everything the training loop needs from the
    /// graph each epoch — the Y-phase update terms and, through
    /// [`penalty_with_sums`](Self::penalty_with_sums), the objective's
    /// smoothness term — so neighbor rows are gathered once, not twice.
    pub fn neighbor_sums(&self, y: &Array2<f64>) -> Result<Array2<f64>> {
        if y.nrows() != self.num_receivers {
            return Err(Error::Dimension(format!(
                "factor matrix has {} rows, graph has {} receivers",
                y.nrows(),
                self.num_receivers
            )));
        }
        let k = y.ncols();
        let y_cow = y.as_standard_layout();
        let flat = y_cow.as_slice().expect("standard layout");
        let mut sums = Array2::zeros((self.num_receivers, k));
        let out = sums.as_slice_mut().expect("standard layout");
        for j in 0..self.num_receivers {
            let row = &mut out[j * k..(j + 1) * k];
            let neighbors = &self.pairs[self.offsets[j]..self.offsets[j + 1]];
            let mut chunks = neighbors.chunks_exact(2);
            for pair in &mut chunks {
                let (l0, w0) = pair[0];
                let (l1, w1) = pair[1];
                let y0 = &flat[l0 * k..(l0 + 1) * k];
                let y1 = &flat[l1 * k..(l1 + 1) * k];
                for ((o, &a), &b) in row.iter_mut().zip(y0).zip(y1) {
                    *o += w0 * a + w1 * b;
                }
            }
            for &(l, w) in chunks.remainder() {
                let yl = &flat[l * k..(l + 1) * k];
                for (o, &v) in row.iter_mut().zip(yl) {
                    *o += w * v;
                }
            }
        }
        Ok(sums)
    }

    /// The smoothness penalty evaluated from precomputed neighbor sums:
    /// expanding the ordered-pair double sum gives
    /// alpha * Σ_j (2 deg_j ||y_j||² − 2 y_j · (W̄Y)_j), the same quantity
    /// as [`regularizer_value`](Self::regularizer_value) up to rounding.
    pub fn penalty_with_sums(&self, y: &Array2<f64>, sums: &Array2<f64>) -> Result<f64> {
        if y.dim() != sums.dim() || y.nrows() != self.num_receivers {
            return Err(Error::Dimension(format!(
                "penalty needs matching {}-row factor and sum matrices, got {:?} and {:?}",
                self.num_receivers,
                y.dim(),
                sums.dim()
            )));
        }
        let k = y.ncols();
        let y_cow = y.as_standard_layout();
        let s_cow = sums.as_standard_layout();
        let yf = y_cow.as_slice().expect("standard layout");
        let sf = s_cow.as_slice().expect("standard layout");
        let mut total = 0.0;
        for j in 0..self.num_receivers {
            let yj = &yf[j * k..(j + 1) * k];
            let sj = &sf[j * k..(j + 1) * k];
            let norm: f64 = yj.iter().map(|v| v * v).sum();
            let dot: f64 = yj.iter().zip(sj).map(|(a, b)| a * b).sum();
            total += 2.0 * (self.degree[j] * norm - dot);
        }
        Ok(self.alpha * total)
    }
}

/// Collapse per-slice graphs (ordered oldest to newest) into one weighted
/// graph: slice t of H gets weight theta^(H+1-t), so the newest slice
/// carries theta^1 and the oldest theta^H.
pub fn combine_graphs(
    graphs: &[ReceiverGraph],
    theta: f64,
    alpha: f64,
) -> Result<CombinedGraph> {
    if graphs.is_empty() {
        return Err(Error::config(
            "graph combination needs at least one historical slice",
        ));
    }
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::config(format!("theta must be in (0, 1], got {theta}")));
    }
    if alpha.is_nan() || alpha < 0.0 {
        return Err(Error::config(format!("alpha must be >= 0, got {alpha}")));
    }
    let num_receivers = graphs[0].num_receivers;
    for g in graphs {
        if g.num_receivers != num_receivers {
            return Err(Error::Dimension(format!(
                "graphs disagree on receiver count: {} vs {}",
                g.num_receivers, num_receivers
            )));
        }
    }

    let history = graphs.len();
    let mut acc: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (idx, graph) in graphs.iter().enumerate() {
        // idx is 0-based, slice position t = idx + 1: weight theta^(H - idx).
        let weight = theta.powi((history - idx) as i32);
        for &(j, l, w) in &graph.edges {
            *acc.entry((j, l)).or_insert(0.0) += weight * w;
        }
    }

    let mut adjacency: Vec<Vec<(usize, f64)>> = vec![Vec::new(); num_receivers];
    for (&(j, l), &w) in &acc {
        adjacency[j].push((l, w));
        adjacency[l].push((j, w));
    }
    // BTreeMap iteration visits (x, r) pairs before (r, y) pairs, so every
    // neighbor list is already sorted.
    debug_assert!(adjacency
        .iter()
        .all(|nb| nb.windows(2).all(|w| w[0].0 < w[1].0)));

    let degree = adjacency
        .iter()
        .map(|nb| nb.iter().map(|&(_, w)| w).sum())
        .collect();
    let mut offsets = Vec::with_capacity(num_receivers + 1);
    offsets.push(0);
    let mut pairs = Vec::with_capacity(2 * acc.len());
    for neighbors in adjacency {
        pairs.extend(neighbors);
        offsets.push(pairs.len());
    }

    Ok(CombinedGraph {
        num_receivers,
        theta,
        alpha,
        offsets,
        pairs,
        degree,
    })
}

/// Build and combine in one step from historical snapshots (oldest first).
pub fn build_combined(
    snapshots: &[Snapshot],
    scheme: WeightScheme,
    theta: f64,
    alpha: f64,
) -> Result<CombinedGraph> {
    let graphs: Vec<ReceiverGraph> = snapshots
        .iter()
        .map(|s| build_receiver_graph(&s.known, scheme))
        .collect();
    combine_graphs(&graphs, theta, alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn known(num_senders: usize, num_receivers: usize, t: &[(usize, usize, f64)]) -> SparseKnownSet {
        SparseKnownSet::from_triples(num_senders, num_receivers, t.to_vec()).unwrap()
    }

    #[test]
    fn shared_sender_gives_product_weight() {
        let k = known(1, 2, &[(0, 0, 1.0), (0, 1, 1.0)]);
        let g = build_receiver_graph(&k, WeightScheme::CoSenderProduct);
        assert_eq!(g.edges(), &[(0, 1, 1.0)]);
        assert_eq!(g.weight(0, 1), 1.0);
        assert_eq!(g.weight(1, 0), 1.0);
        assert_eq!(g.weight(0, 0), 0.0);
    }

    #[test]
    fn lone_entry_gives_edgeless_graph() {
        let k = known(1, 2, &[(0, 0, 3.0)]);
        let g = build_receiver_graph(&k, WeightScheme::CoSenderProduct);
        assert!(g.edges().is_empty());
    }

    #[test]
    fn column_inner_product_hand_case() {
        // Receiver columns (2,1) and (3,1): w_{01} = 2*3 + 1*1 = 7.
        let k = known(2, 2, &[(0, 0, 2.0), (0, 1, 3.0), (1, 0, 1.0), (1, 1, 1.0)]);
        let g = build_receiver_graph(&k, WeightScheme::CoSenderProduct);
        assert_eq!(g.weight(0, 1), 7.0);
    }

    #[test]
    fn binarized_ignores_magnitudes() {
        let k = known(2, 3, &[(0, 0, 2.0), (0, 1, 30.0), (1, 1, 1.0), (1, 2, 0.5)]);
        let g = build_receiver_graph(&k, WeightScheme::BinarizedCoOccurrence);
        assert_eq!(g.weight(0, 1), 1.0);
        assert_eq!(g.weight(1, 2), 1.0);
        assert_eq!(g.weight(0, 2), 0.0);
    }

    #[test]
    fn cosine_is_scale_free_and_bounded() {
        let k = known(2, 2, &[(0, 0, 2.0), (0, 1, 3.0), (1, 0, 1.0), (1, 1, 1.0)]);
        let g = build_receiver_graph(&k, WeightScheme::CosineNormalized);
        // 7 / (sqrt(5) * sqrt(10))
        let want = 7.0 / (5f64.sqrt() * 10f64.sqrt());
        assert!((g.weight(0, 1) - want).abs() < 1e-15);
        let scaled = k.map_values(|v| 10.0 * v);
        let g2 = build_receiver_graph(&scaled, WeightScheme::CosineNormalized);
        assert!((g2.weight(0, 1) - want).abs() < 1e-12);
    }

    #[test]
    fn single_graph_combination_scales_by_theta() {
        let k = known(1, 2, &[(0, 0, 1.0), (0, 1, 1.0)]);
        let g = build_receiver_graph(&k, WeightScheme::CoSenderProduct);
        let combined = combine_graphs(&[g], 0.5, 1.0).unwrap();
        assert_eq!(combined.upper_triangle(), vec![(0, 1, 0.5)]);
        assert_eq!(combined.degree(0), 0.5);
        assert_eq!(combined.degree(1), 0.5);
    }

    #[test]
    fn theta_one_combination_is_plain_sum() {
        let k1 = known(1, 2, &[(0, 0, 2.0), (0, 1, 2.0)]); // w_{01} = 4
        let k2 = known(1, 2, &[(0, 0, 1.0), (0, 1, 2.0)]); // w_{01} = 2
        let g1 = build_receiver_graph(&k1, WeightScheme::CoSenderProduct);
        let g2 = build_receiver_graph(&k2, WeightScheme::CoSenderProduct);
        let combined = combine_graphs(&[g1, g2], 1.0, 0.0).unwrap();
        assert_eq!(combined.upper_triangle(), vec![(0, 1, 6.0)]);
    }

    #[test]
    fn decayed_combination_hand_case() {
        // w^1_{01} = 4 (older), w^2_{01} = 2 (newer), theta = 0.5:
        // 0.25 * 4 + 0.5 * 2 = 2.0.
        let k1 = known(1, 2, &[(0, 0, 2.0), (0, 1, 2.0)]);
        let k2 = known(1, 2, &[(0, 0, 1.0), (0, 1, 2.0)]);
        let g1 = build_receiver_graph(&k1, WeightScheme::CoSenderProduct);
        let g2 = build_receiver_graph(&k2, WeightScheme::CoSenderProduct);
        let combined = combine_graphs(&[g1, g2], 0.5, 1.0).unwrap();
        assert_eq!(combined.upper_triangle(), vec![(0, 1, 2.0)]);
    }

    #[test]
    fn empty_graph_list_rejected() {
        assert!(combine_graphs(&[], 0.5, 1.0).is_err());
    }

    #[test]
    fn identical_rows_have_zero_penalty() {
        let k = known(1, 2, &[(0, 0, 1.0), (0, 1, 1.0)]);
        let g = build_receiver_graph(&k, WeightScheme::CoSenderProduct);
        let combined = combine_graphs(&[g], 1.0, 3.0).unwrap();
        let y = array![[0.3, 0.7], [0.3, 0.7]];
        assert_eq!(combined.regularizer_value(&y).unwrap(), 0.0);
    }

    #[test]
    fn zero_alpha_zeroes_the_penalty() {
        let k = known(1, 2, &[(0, 0, 1.0), (0, 1, 1.0)]);
        let g = build_receiver_graph(&k, WeightScheme::CoSenderProduct);
        let combined = combine_graphs(&[g], 1.0, 0.0).unwrap();
        let y = array![[5.0, 0.0], [0.0, 9.0]];
        assert_eq!(combined.regularizer_value(&y).unwrap(), 0.0);
    }

    #[test]
    fn ordered_pair_penalty_hand_case() {
        // w̄_{01} = 1, y_0 = (1, 0), y_1 = (0, 0), alpha = 1: the ordered
        // double sum counts the pair twice -> 2.
        let k = known(1, 2, &[(0, 0, 1.0), (0, 1, 1.0)]);
        let g = build_receiver_graph(&k, WeightScheme::CoSenderProduct);
        let combined = combine_graphs(&[g], 1.0, 1.0).unwrap();
        let y = array![[1.0, 0.0], [0.0, 0.0]];
        assert_eq!(combined.regularizer_value(&y).unwrap(), 2.0);
    }

    #[test]
    fn row_count_mismatch_rejected() {
        let k = known(1, 2, &[(0, 0, 1.0), (0, 1, 1.0)]);
        let g = build_receiver_graph(&k, WeightScheme::CoSenderProduct);
        let combined = combine_graphs(&[g], 1.0, 1.0).unwrap();
        let y = array![[1.0], [2.0], [3.0]];
        assert!(combined.regularizer_value(&y).is_err());
    }

    /// Strategy: a random sparse known set plus a random Y.
    fn arb_case() -> impl Strategy<Value = (SparseKnownSet, Vec<f64>, usize)> {
        (2usize..5, 2usize..5, 1usize..3)
            .prop_flat_map(|(u, s, k)| {
                let triples = proptest::collection::vec(
                    (0..u, 0..s, 0.01f64..4.0),
                    1..12,
                );
                let y = proptest::collection::vec(0.0f64..2.0, s * k);
                (Just((u, s, k)), triples, y)
            })
            .prop_map(|((u, s, k), triples, y)| {
                (SparseKnownSet::from_triples(u, s, triples).unwrap(), y, k)
            })
    }

    proptest! {
        /// Pairwise-difference form equals the Laplacian quadratic form
        /// 2*alpha*sum_k y_k' (D - W) y_k.
        #[test]
        fn penalty_matches_laplacian_quadratic_form((known, yflat, k) in arb_case()) {
            let s = known.num_receivers();
            let g = build_receiver_graph(&known, WeightScheme::CoSenderProduct);
            let combined = combine_graphs(&[g], 0.7, 1.3).unwrap();
            let y = Array2::from_shape_vec((s, k), yflat).unwrap();
            let pairwise = combined.regularizer_value(&y).unwrap();

            let mut quad = 0.0;
            for col in 0..k {
                for j in 0..s {
                    quad += combined.degree(j) * y[[j, col]] * y[[j, col]];
                    for &(l, w) in combined.neighbors(j) {
                        quad -= w * y[[j, col]] * y[[l, col]];
                    }
                }
            }
            let laplacian = 2.0 * combined.alpha() * quad;
            let scale = 1.0 + pairwise.abs().max(laplacian.abs());
            prop_assert!((pairwise - laplacian).abs() <= 1e-12 * scale,
                "pairwise={pairwise} laplacian={laplacian}");
        }

        /// Scaling all values by c scales every edge weight by c^2.
        #[test]
        fn product_weights_are_bilinear((known, _y, _k) in arb_case(), c in 0.1f64..3.0) {
            let base = build_receiver_graph(&known, WeightScheme::CoSenderProduct);
            let scaled = build_receiver_graph(
                &known.map_values(|v| c * v),
                WeightScheme::CoSenderProduct,
            );
            prop_assert_eq!(base.edges().len(), scaled.edges().len());
            for (&(j1, l1, w1), &(j2, l2, w2)) in base.edges().iter().zip(scaled.edges()) {
                prop_assert_eq!((j1, l1), (j2, l2));
                prop_assert!((w2 - c * c * w1).abs() <= 1e-12 * (1.0 + w2.abs()));
            }
        }

        /// Combination is linear in each input graph's weights: doubling
        /// one slice's weights doubles its contribution.
        #[test]
        fn combination_is_linear_per_slice((known, _y, _k) in arb_case(), theta in 0.2f64..1.0) {
            let g = build_receiver_graph(&known, WeightScheme::CoSenderProduct);
            let doubled = ReceiverGraph {
                num_receivers: g.num_receivers,
                edges: g.edges.iter().map(|&(j, l, w)| (j, l, 2.0 * w)).collect(),
            };
            let single = combine_graphs(std::slice::from_ref(&g), theta, 1.0).unwrap();
            let both = combine_graphs(&[doubled, g], theta, 1.0).unwrap();
            // weight(both) = theta^2 * 2w + theta * w; weight(single) = theta * w
            for (j, l, w) in single.upper_triangle() {
                let got = both
                    .upper_triangle()
                    .into_iter()
                    .find(|&(a, b, _)| (a, b) == (j, l))
                    .map(|(_, _, x)| x)
                    .unwrap();
                let base = w / theta;
                let want = theta * theta * 2.0 * base + theta * base;
                prop_assert!((got - want).abs() <= 1e-12 * (1.0 + want.abs()));
            }
        }
    }
}
