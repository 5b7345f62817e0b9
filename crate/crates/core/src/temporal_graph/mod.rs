//! Temporal bipartite network construction: edge-list parsing, time
//! slicing into sparse snapshots, and the train/validation/test split.

mod parse;
mod serialize;
mod sparse;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use parse::{parse_edge_stream, Delimiter, EdgeFormat};
pub use serialize::{read_network, write_network};
pub use sparse::{Entry, SparseKnownSet};

/// One timestamped transaction record.
#[derive(Clone, Debug, PartialEq)]
pub struct TemporalEdge {
    pub sender: String,
    pub receiver: String,
    /// Epoch seconds, or any monotone integer time axis.
    pub timestamp: i64,
    /// Non-negative transaction magnitude.
    pub value: f64,
    /// Pre-assigned 1-based slice index, when the input carries one.
    pub slice: Option<usize>,
}

/// Bijective mapping from node identifiers to dense indices, shared by all
/// slices: a node keeps one index for every t.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeIndex {
    sender_ids: Vec<String>,
    receiver_ids: Vec<String>,
    sender_map: HashMap<String, usize>,
    receiver_map: HashMap<String, usize>,
}

impl NodeIndex {
    fn new() -> Self {
        NodeIndex {
            sender_ids: Vec::new(),
            receiver_ids: Vec::new(),
            sender_map: HashMap::new(),
            receiver_map: HashMap::new(),
        }
    }

    fn intern_sender(&mut self, id: &str) -> usize {
        if let Some(&idx) = self.sender_map.get(id) {
            return idx;
        }
        let idx = self.sender_ids.len();
        self.sender_ids.push(id.to_string());
        self.sender_map.insert(id.to_string(), idx);
        idx
    }

    fn intern_receiver(&mut self, id: &str) -> usize {
        if let Some(&idx) = self.receiver_map.get(id) {
            return idx;
        }
        let idx = self.receiver_ids.len();
        self.receiver_ids.push(id.to_string());
        self.receiver_map.insert(id.to_string(), idx);
        idx
    }

    pub fn num_senders(&self) -> usize {
        self.sender_ids.len()
    }

    pub fn num_receivers(&self) -> usize {
        self.receiver_ids.len()
    }

    pub fn sender_index(&self, id: &str) -> Option<usize> {
        self.sender_map.get(id).copied()
    }

    pub fn receiver_index(&self, id: &str) -> Option<usize> {
        self.receiver_map.get(id).copied()
    }

    pub fn sender_id(&self, index: usize) -> &str {
        &self.sender_ids[index]
    }

    pub fn receiver_id(&self, index: usize) -> &str {
        &self.receiver_ids[index]
    }

    /// Index with synthetic identifiers `0..n`, for networks built from
    /// dense indices rather than named nodes (the canonical text format,
    /// generated data, callers with pre-interned ids).
    pub fn anonymous(num_senders: usize, num_receivers: usize) -> Self {
        let mut index = NodeIndex::new();
        for i in 0..num_senders {
            index.intern_sender(&i.to_string());
        }
        for j in 0..num_receivers {
            index.intern_receiver(&j.to_string());
        }
        index
    }
}

/// The network observed in one time bin.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    /// 1-based slice index.
    pub t: usize,
    pub known: SparseKnownSet,
}

/// Ordered sparse snapshots over fixed sender/receiver index spaces.
#[derive(Clone, Debug, PartialEq)]
pub struct TemporalNetwork {
    snapshots: Vec<Snapshot>,
    index: NodeIndex,
}

impl TemporalNetwork {
    /// Assemble from parts; validates slice ordering, dimensions and T >= 3.
    pub fn new(snapshots: Vec<Snapshot>, index: NodeIndex) -> Result<Self> {
        if snapshots.len() < 3 {
            return Err(Error::config(format!(
                "need at least 3 time slices (training, validation, test), got {}",
                snapshots.len()
            )));
        }
        for (pos, snap) in snapshots.iter().enumerate() {
            if snap.t != pos + 1 {
                return Err(Error::config(format!(
                    "slice indices must be 1..=T in order; position {} holds t={}",
                    pos + 1,
                    snap.t
                )));
            }
            if snap.known.num_senders() != index.num_senders()
                || snap.known.num_receivers() != index.num_receivers()
            {
                return Err(Error::Dimension(format!(
                    "slice {} is {}x{}, index space is {}x{}",
                    snap.t,
                    snap.known.num_senders(),
                    snap.known.num_receivers(),
                    index.num_senders(),
                    index.num_receivers()
                )));
            }
        }
        Ok(TemporalNetwork { snapshots, index })
    }

    pub fn num_slices(&self) -> usize {
        self.snapshots.len()
    }

    pub fn num_senders(&self) -> usize {
        self.index.num_senders()
    }

    pub fn num_receivers(&self) -> usize {
        self.index.num_receivers()
    }

    pub fn snapshots(&self) -> &[Snapshot] {
        &self.snapshots
    }

    /// Snapshot for 1-based slice index `t`.
    pub fn snapshot(&self, t: usize) -> &Snapshot {
        &self.snapshots[t - 1]
    }

    pub fn index(&self) -> &NodeIndex {
        &self.index
    }

    /// 1-based indices of slices with no known entries. Such slices are
    /// legal but carry no evidence; callers may want to warn about them.
    pub fn empty_slices(&self) -> Vec<usize> {
        self.snapshots
            .iter()
            .filter(|s| s.known.is_empty())
            .map(|s| s.t)
            .collect()
    }

    /// Total known entries across all slices.
    pub fn total_entries(&self) -> usize {
        self.snapshots.iter().map(|s| s.known.len()).sum()
    }

    /// Map every entry value in every slice through `f`.
    pub fn map_values(&self, f: impl Fn(f64) -> f64 + Copy) -> Self {
        TemporalNetwork {
            snapshots: self
                .snapshots
                .iter()
                .map(|s| Snapshot {
                    t: s.t,
                    known: s.known.map_values(f),
                })
                .collect(),
            index: self.index.clone(),
        }
    }
}

/// How raw edges are assigned to time slices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Slicing {
    /// Bin timestamps into `T` equal-width right-closed intervals spanning
    /// `[min_ts, max_ts]`.
    NumSlices(usize),
    /// Use the pre-assigned slice column carried by each edge.
    ExplicitColumn,
}

/// Element-wise transform applied to merged slice values before training.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ValueTransform {
    Identity,
    #[default]
    Log1p,
}

impl ValueTransform {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            ValueTransform::Identity => v,
            ValueTransform::Log1p => v.ln_1p(),
        }
    }
}

/// Slice index for a timestamp under equal-width binning of `[min, max]`
/// into `num_slices` right-closed intervals: bin b covers
/// `(min + b*w, min + (b+1)*w]` with the first bin also containing `min`.
/// Exact integer arithmetic keeps boundaries deterministic.
fn bin_timestamp(ts: i64, min_ts: i64, max_ts: i64, num_slices: usize) -> usize {
    debug_assert!(min_ts <= ts && ts <= max_ts && min_ts < max_ts);
    if ts == min_ts {
        return 0;
    }
    let span = (max_ts - min_ts) as i128;
    let offset = (ts - min_ts) as i128;
    let t = num_slices as i128;
    // ceil(offset * T / span) - 1
    let b = (offset * t + span - 1) / span - 1;
    (b as usize).min(num_slices - 1)
}

/// Build the temporal network: index every identifier seen anywhere in the
/// stream, assign each edge to exactly one slice, merge duplicate `(i, j)`
/// pairs within a slice by summing, and apply the value transform after
/// merging.
pub fn build_network(
    edges: &[TemporalEdge],
    slicing: Slicing,
    transform: ValueTransform,
) -> Result<TemporalNetwork> {
    for e in edges {
        if e.value < 0.0 || !e.value.is_finite() {
            return Err(Error::config(format!(
                "edge {} -> {} has invalid value {}",
                e.sender, e.receiver, e.value
            )));
        }
        if e.sender.is_empty() || e.receiver.is_empty() {
            return Err(Error::config("edge with empty node identifier"));
        }
    }

    let num_slices = match slicing {
        Slicing::NumSlices(t) => {
            if t < 3 {
                return Err(Error::config(format!(
                    "num_slices must be >= 3, got {t}"
                )));
            }
            t
        }
        Slicing::ExplicitColumn => {
            let max_slice = edges.iter().map(|e| e.slice.unwrap_or(0)).max().unwrap_or(0);
            if edges.iter().any(|e| e.slice.is_none()) {
                return Err(Error::config(
                    "explicit slicing requested but some edges carry no slice index",
                ));
            }
            if max_slice < 3 {
                return Err(Error::config(format!(
                    "explicit slices span 1..={max_slice}; need at least 3"
                )));
            }
            max_slice
        }
    };

    let mut index = NodeIndex::new();
    for e in edges {
        index.intern_sender(&e.sender);
        index.intern_receiver(&e.receiver);
    }

    let slice_of: Box<dyn Fn(&TemporalEdge) -> usize> = match slicing {
        Slicing::ExplicitColumn => Box::new(|e: &TemporalEdge| e.slice.unwrap() - 1),
        Slicing::NumSlices(t) => {
            let min_ts = edges.iter().map(|e| e.timestamp).min();
            let max_ts = edges.iter().map(|e| e.timestamp).max();
            match (min_ts, max_ts) {
                (Some(lo), Some(hi)) if lo == hi => {
                    return Err(Error::config(format!(
                        "all timestamps equal ({lo}); cannot bin into {t} slices"
                    )));
                }
                (Some(lo), Some(hi)) => Box::new(move |e: &TemporalEdge| {
                    bin_timestamp(e.timestamp, lo, hi, t)
                }),
                // No edges at all: every slice will simply be empty.
                _ => Box::new(|_: &TemporalEdge| 0),
            }
        }
    };

    let mut per_slice: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); num_slices];
    for e in edges {
        let s = slice_of(e);
        let i = index.sender_index(&e.sender).unwrap();
        let j = index.receiver_index(&e.receiver).unwrap();
        per_slice[s].push((i, j, e.value));
    }

    let num_senders = index.num_senders();
    let num_receivers = index.num_receivers();
    let snapshots = per_slice
        .into_iter()
        .enumerate()
        .map(|(pos, triples)| {
            let known = SparseKnownSet::from_triples(num_senders, num_receivers, triples)?
                .map_values(|v| transform.apply(v));
            Ok(Snapshot { t: pos + 1, known })
        })
        .collect::<Result<Vec<_>>>()?;

    TemporalNetwork::new(snapshots, index)
}

/// How the training slices 1..=T-2 collapse into the single factorized
/// matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TrainAggregation {
    /// theta-decayed sum: entry (i,j) gets sum_t theta^((T-2)-t) * r^t_ij.
    #[default]
    DecayedSum,
    /// Plain sum over the training slices.
    PlainSum,
    /// The most recent training slice only.
    LastSlice,
}

/// The temporal split: slices 1..=T-2 train, T-1 validates, T tests.
#[derive(Clone, Debug)]
pub struct DataSplit {
    /// The training snapshots, in slice order (needed for the historical
    /// regularization graphs).
    pub train_slices: Vec<Snapshot>,
    pub validation_slice: Snapshot,
    pub test_slice: Snapshot,
    /// Aggregated training matrix over the training slices.
    pub train_target: SparseKnownSet,
}

/// Split with the default theta-decayed training aggregation.
pub fn temporal_split(network: &TemporalNetwork, theta: f64) -> Result<DataSplit> {
    temporal_split_with(network, theta, TrainAggregation::DecayedSum)
}

/// Split with an explicit aggregation mode. The known-entry set of the
/// training target is the union of the training slices' known sets; an
/// (i,j) pair may also recur in validation or test, where entries are
/// distinguished by slice provenance.
pub fn temporal_split_with(
    network: &TemporalNetwork,
    theta: f64,
    aggregation: TrainAggregation,
) -> Result<DataSplit> {
    let t_total = network.num_slices();
    if t_total < 3 {
        return Err(Error::Split(format!(
            "need at least 3 slices to split, got {t_total}"
        )));
    }
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::Split(format!("theta must be in (0, 1], got {theta}")));
    }

    let train_count = t_total - 2;
    let train_slices: Vec<Snapshot> = network.snapshots()[..train_count].to_vec();

    let mut triples: Vec<(usize, usize, f64)> = Vec::new();
    match aggregation {
        TrainAggregation::LastSlice => {
            for e in train_slices[train_count - 1].known.iter() {
                triples.push((e.sender, e.receiver, e.value));
            }
        }
        TrainAggregation::PlainSum => {
            for snap in &train_slices {
                for e in snap.known.iter() {
                    triples.push((e.sender, e.receiver, e.value));
                }
            }
        }
        TrainAggregation::DecayedSum => {
            for snap in &train_slices {
                // Slice t in 1..=T-2 is weighted theta^((T-2)-t): the most
                // recent training slice gets exponent 0.
                let weight = theta.powi((train_count - snap.t) as i32);
                for e in snap.known.iter() {
                    triples.push((e.sender, e.receiver, e.value * weight));
                }
            }
        }
    }
    let train_target =
        SparseKnownSet::from_triples(network.num_senders(), network.num_receivers(), triples)?;

    Ok(DataSplit {
        train_slices,
        validation_slice: network.snapshot(t_total - 1).clone(),
        test_slice: network.snapshot(t_total).clone(),
        train_target,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn edge(s: &str, r: &str, ts: i64, v: f64) -> TemporalEdge {
        TemporalEdge {
            sender: s.into(),
            receiver: r.into(),
            timestamp: ts,
            value: v,
            slice: None,
        }
    }

    #[test]
    fn equal_width_binning_hand_case() {
        // 4 edges at timestamps 0, 10, 20, 30 with T=3: bins [0,10], (10,20],
        // (20,30] put {0,10} in slice 1, {20} in slice 2, {30} in slice 3.
        let edges = vec![
            edge("a", "w", 0, 1.0),
            edge("b", "x", 10, 1.0),
            edge("c", "y", 20, 1.0),
            edge("d", "z", 30, 1.0),
        ];
        let net = build_network(&edges, Slicing::NumSlices(3), ValueTransform::Identity).unwrap();
        assert_eq!(net.snapshot(1).known.len(), 2);
        assert_eq!(net.snapshot(2).known.len(), 1);
        assert_eq!(net.snapshot(3).known.len(), 1);
    }

    #[test]
    fn single_timestamp_cannot_bin_but_explicit_slice_works() {
        let edges = vec![edge("a", "b", 5, 2.0)];
        let err = build_network(&edges, Slicing::NumSlices(3), ValueTransform::Identity)
            .unwrap_err();
        assert!(matches!(err, Error::Config(_)));

        // The same edge with a pre-assigned slice index of 3 builds a
        // 3-slice network whose first two slices are empty.
        let edges = vec![TemporalEdge {
            slice: Some(3),
            ..edge("a", "b", 5, 2.0)
        }];
        let net =
            build_network(&edges, Slicing::ExplicitColumn, ValueTransform::Identity).unwrap();
        assert_eq!(net.num_slices(), 3);
        assert_eq!(net.empty_slices(), vec![1, 2]);
    }

    #[test]
    fn explicit_slices_and_empty_slice_reporting() {
        let edges = vec![
            TemporalEdge {
                slice: Some(1),
                ..edge("a", "b", 0, 2.0)
            },
            TemporalEdge {
                slice: Some(3),
                ..edge("a", "c", 0, 4.0)
            },
        ];
        let net =
            build_network(&edges, Slicing::ExplicitColumn, ValueTransform::Identity).unwrap();
        assert_eq!(net.num_slices(), 3);
        assert_eq!(net.empty_slices(), vec![2]);
    }

    #[test]
    fn duplicate_pairs_within_slice_merge_by_sum() {
        let edges = vec![
            edge("a", "b", 100, 1.0),
            edge("a", "b", 100, 2.0),
            edge("a", "c", 300, 1.0),
            edge("a", "c", 205, 1.0),
        ];
        let net = build_network(&edges, Slicing::NumSlices(3), ValueTransform::Identity).unwrap();
        let slice1 = &net.snapshot(1).known;
        let i = net.index().sender_index("a").unwrap();
        let j = net.index().receiver_index("b").unwrap();
        let entry = slice1.row(i).iter().find(|e| e.receiver == j).unwrap();
        assert_eq!(entry.value, 3.0);
    }

    #[test]
    fn transform_applied_after_merging() {
        let edges = vec![
            edge("a", "b", 0, 1.0),
            edge("a", "b", 0, 2.0),
            edge("a", "c", 10, 0.0),
            edge("a", "d", 20, 1.0),
        ];
        let net = build_network(&edges, Slicing::NumSlices(3), ValueTransform::Log1p).unwrap();
        let s1 = &net.snapshot(1).known;
        // log1p(1 + 2), not log1p(1) + log1p(2)
        assert!((s1.row(0)[0].value - 3f64.ln_1p()).abs() < 1e-15);
        // log1p(0) = 0 is retained as a known zero-valued entry
        let s2 = &net.snapshot(2).known;
        assert_eq!(s2.len(), 1);
        assert_eq!(s2.iter().next().unwrap().value, 0.0);
    }

    #[test]
    fn too_few_slices_rejected() {
        let edges = vec![edge("a", "b", 0, 1.0), edge("a", "b", 9, 1.0)];
        let err =
            build_network(&edges, Slicing::NumSlices(2), ValueTransform::Identity).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn identical_timestamps_cannot_bin() {
        let edges = vec![edge("a", "b", 7, 1.0), edge("c", "d", 7, 1.0)];
        let err =
            build_network(&edges, Slicing::NumSlices(3), ValueTransform::Identity).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn split_t3_train_target_equals_slice_one() {
        let edges = vec![
            edge("a", "b", 0, 2.0),
            edge("a", "c", 10, 3.0),
            edge("b", "b", 20, 4.0),
        ];
        let net = build_network(&edges, Slicing::NumSlices(3), ValueTransform::Identity).unwrap();
        for theta in [0.25, 0.5, 1.0] {
            let split = temporal_split(&net, theta).unwrap();
            assert_eq!(split.train_target, net.snapshot(1).known);
        }
    }

    #[test]
    fn split_decayed_sum_hand_case() {
        // T=4, theta=0.5: entry (0,0) with r=2.0 in slice 1 and r=4.0 in
        // slice 2 aggregates to 0.5*2 + 1.0*4 = 5.0.
        let edges = vec![
            TemporalEdge {
                slice: Some(1),
                ..edge("s", "r", 0, 2.0)
            },
            TemporalEdge {
                slice: Some(2),
                ..edge("s", "r", 0, 4.0)
            },
            TemporalEdge {
                slice: Some(3),
                ..edge("s", "r", 0, 1.0)
            },
            TemporalEdge {
                slice: Some(4),
                ..edge("s", "r", 0, 1.0)
            },
        ];
        let net =
            build_network(&edges, Slicing::ExplicitColumn, ValueTransform::Identity).unwrap();
        let split = temporal_split(&net, 0.5).unwrap();
        assert_eq!(split.train_target.len(), 1);
        assert_eq!(split.train_target.iter().next().unwrap().value, 5.0);
    }

    #[test]
    fn split_theta_one_is_plain_sum() {
        let edges = vec![
            TemporalEdge {
                slice: Some(1),
                ..edge("s", "r", 0, 2.0)
            },
            TemporalEdge {
                slice: Some(2),
                ..edge("s", "r", 0, 4.0)
            },
            TemporalEdge {
                slice: Some(2),
                ..edge("s", "q", 0, 7.0)
            },
            TemporalEdge {
                slice: Some(3),
                ..edge("s", "r", 0, 1.0)
            },
            TemporalEdge {
                slice: Some(4),
                ..edge("s", "r", 0, 1.0)
            },
        ];
        let net =
            build_network(&edges, Slicing::ExplicitColumn, ValueTransform::Identity).unwrap();
        let with_theta_one = temporal_split(&net, 1.0).unwrap();
        let plain = temporal_split_with(&net, 0.25, TrainAggregation::PlainSum).unwrap();
        assert_eq!(with_theta_one.train_target, plain.train_target);
        let r = net.index().receiver_index("r").unwrap();
        let s = net.index().sender_index("s").unwrap();
        let got = with_theta_one
            .train_target
            .row(s)
            .iter()
            .find(|e| e.receiver == r)
            .unwrap()
            .value;
        assert_eq!(got, 6.0);
    }

    #[test]
    fn validation_and_test_pass_through() {
        let edges = vec![
            TemporalEdge {
                slice: Some(1),
                ..edge("s", "r", 0, 2.0)
            },
            TemporalEdge {
                slice: Some(2),
                ..edge("s", "q", 0, 3.0)
            },
            TemporalEdge {
                slice: Some(3),
                ..edge("s", "r", 0, 9.0)
            },
        ];
        let net =
            build_network(&edges, Slicing::ExplicitColumn, ValueTransform::Identity).unwrap();
        let split = temporal_split(&net, 0.5).unwrap();
        assert_eq!(split.validation_slice, *net.snapshot(2));
        assert_eq!(split.test_slice, *net.snapshot(3));
        assert_eq!(split.train_slices.len(), 1);
    }

    proptest! {
        /// Every edge lands in exactly one slice regardless of timestamps.
        #[test]
        fn binning_is_a_partition(
            ts in proptest::collection::vec(-1000i64..1000, 2..60),
            t in 3usize..8,
        ) {
            prop_assume!(ts.iter().min() != ts.iter().max());
            let edges: Vec<TemporalEdge> = ts
                .iter()
                .enumerate()
                .map(|(k, &time)| edge(&format!("s{k}"), &format!("r{k}"), time, 1.0))
                .collect();
            let net = build_network(&edges, Slicing::NumSlices(t), ValueTransform::Identity)
                .unwrap();
            prop_assert_eq!(net.total_entries(), edges.len());
        }

        /// With theta = 1 splitting commutes with entry-wise addition of
        /// slices: the train target is the plain slice sum.
        #[test]
        fn theta_one_commutes_with_slice_addition(
            values in proptest::collection::vec((0usize..4, 0usize..4, 0.0f64..10.0, 1usize..5), 1..30),
        ) {
            let edges: Vec<TemporalEdge> = values
                .iter()
                .map(|&(i, j, v, s)| TemporalEdge {
                    sender: format!("s{i}"),
                    receiver: format!("r{j}"),
                    timestamp: 0,
                    value: v,
                    slice: Some(s.min(5)),
                })
                .chain(std::iter::once(TemporalEdge {
                    sender: "s0".into(),
                    receiver: "r0".into(),
                    timestamp: 0,
                    value: 0.0,
                    slice: Some(5),
                }))
                .collect();
            let net = build_network(&edges, Slicing::ExplicitColumn, ValueTransform::Identity)
                .unwrap();
            let split = temporal_split(&net, 1.0).unwrap();
            // Oracle: sum slice values per (i, j) by hand.
            let mut expected: std::collections::BTreeMap<(usize, usize), f64> =
                std::collections::BTreeMap::new();
            for snap in &net.snapshots()[..net.num_slices() - 2] {
                for e in snap.known.iter() {
                    *expected.entry((e.sender, e.receiver)).or_insert(0.0) += e.value;
                }
            }
            prop_assert_eq!(split.train_target.len(), expected.len());
            for e in split.train_target.iter() {
                let want = expected[&(e.sender, e.receiver)];
                prop_assert!((e.value - want).abs() <= 1e-12 * (1.0 + want.abs()));
            }
        }
    }
}
