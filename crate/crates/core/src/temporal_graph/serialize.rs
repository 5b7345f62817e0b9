//! Canonical on-disk form for a temporal network.
//!
//! Line-oriented text: a header `grnlfa-net v1 T=<T> U=<U> S=<S>` followed
//! by one `t i j r` record per known entry, sorted by (t, i, j). Indices
//! are the dense 0-based ones; original identifier strings are not stored,
//! so reading back yields a network over synthetic identifiers.

use std::fmt::Write as _;

use crate::error::{Error, Result};

use super::{NodeIndex, Snapshot, SparseKnownSet, TemporalNetwork};

/// Render the network in canonical form.
pub fn write_network(network: &TemporalNetwork) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "grnlfa-net v1 T={} U={} S={}",
        network.num_slices(),
        network.num_senders(),
        network.num_receivers()
    );
    for snap in network.snapshots() {
        // Entries are already sorted by (sender, receiver) within a slice.
        for e in snap.known.iter() {
            let _ = writeln!(out, "{} {} {} {}", snap.t, e.sender, e.receiver, e.value);
        }
    }
    out
}

fn header_field(token: Option<&str>, key: &str) -> Result<usize> {
    let token = token
        .ok_or_else(|| Error::Format(format!("header missing {key}= field")))?;
    let value = token
        .strip_prefix(key)
        .and_then(|rest| rest.strip_prefix('='))
        .ok_or_else(|| Error::Format(format!("expected {key}=<n>, got '{token}'")))?;
    value
        .parse::<usize>()
        .map_err(|_| Error::Format(format!("{key} value '{value}' is not an integer")))
}

/// Parse the canonical form back into a network. Values survive a
/// write/read round trip bit for bit; node identifiers become "0", "1", ….
pub fn read_network(text: &str) -> Result<TemporalNetwork> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("empty input".into()))?;
    let mut tokens = header.split_whitespace();
    match (tokens.next(), tokens.next()) {
        (Some("grnlfa-net"), Some("v1")) => {}
        _ => {
            return Err(Error::Format(format!(
                "expected 'grnlfa-net v1' header, got '{header}'"
            )))
        }
    }
    let num_slices = header_field(tokens.next(), "T")?;
    let num_senders = header_field(tokens.next(), "U")?;
    let num_receivers = header_field(tokens.next(), "S")?;

    let mut per_slice: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); num_slices];
    for (line_no, line) in lines.enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(Error::Format(format!(
                "line {}: expected 't i j r', got {} fields",
                line_no + 2,
                fields.len()
            )));
        }
        let parse_idx = |s: &str, what: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::Format(format!("line {}: bad {what} '{s}'", line_no + 2)))
        };
        let t = parse_idx(fields[0], "slice")?;
        let i = parse_idx(fields[1], "sender index")?;
        let j = parse_idx(fields[2], "receiver index")?;
        let r = fields[3].parse::<f64>().map_err(|_| {
            Error::Format(format!("line {}: bad value '{}'", line_no + 2, fields[3]))
        })?;
        if t == 0 || t > num_slices {
            return Err(Error::Format(format!(
                "line {}: slice {t} outside 1..={num_slices}",
                line_no + 2
            )));
        }
        per_slice[t - 1].push((i, j, r));
    }

    let snapshots = per_slice
        .into_iter()
        .enumerate()
        .map(|(pos, triples)| {
            let known = SparseKnownSet::from_triples(num_senders, num_receivers, triples)?;
            Ok(Snapshot { t: pos + 1, known })
        })
        .collect::<Result<Vec<_>>>()?;
    TemporalNetwork::new(snapshots, NodeIndex::anonymous(num_senders, num_receivers))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::temporal_graph::{build_network, Slicing, TemporalEdge, ValueTransform};
    use proptest::prelude::*;

    fn sample_network() -> TemporalNetwork {
        let edges = vec![
            TemporalEdge {
                sender: "alice".into(),
                receiver: "x".into(),
                timestamp: 0,
                value: 2.5,
                slice: None,
            },
            TemporalEdge {
                sender: "bob".into(),
                receiver: "x".into(),
                timestamp: 15,
                value: 0.125,
                slice: None,
            },
            TemporalEdge {
                sender: "alice".into(),
                receiver: "y".into(),
                timestamp: 30,
                value: 7.0,
                slice: None,
            },
        ];
        build_network(&edges, Slicing::NumSlices(3), ValueTransform::Identity).unwrap()
    }

    #[test]
    fn header_carries_dimensions() {
        let text = write_network(&sample_network());
        assert!(text.starts_with("grnlfa-net v1 T=3 U=2 S=2\n"));
    }

    #[test]
    fn round_trip_preserves_structure_and_values() {
        let net = sample_network();
        let back = read_network(&write_network(&net)).unwrap();
        assert_eq!(back.num_slices(), net.num_slices());
        assert_eq!(back.num_senders(), net.num_senders());
        assert_eq!(back.num_receivers(), net.num_receivers());
        for t in 1..=net.num_slices() {
            assert_eq!(back.snapshot(t).known, net.snapshot(t).known);
        }
    }

    #[test]
    fn malformed_header_rejected() {
        assert!(matches!(read_network(""), Err(Error::Format(_))));
        assert!(matches!(
            read_network("grnlfa-net v2 T=3 U=1 S=1"),
            Err(Error::Format(_))
        ));
        assert!(matches!(
            read_network("grnlfa-net v1 T=x U=1 S=1"),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn out_of_range_slice_rejected() {
        let text = "grnlfa-net v1 T=3 U=1 S=1\n4 0 0 1.0\n";
        assert!(matches!(read_network(text), Err(Error::Format(_))));
    }

    #[test]
    fn wrong_field_count_rejected() {
        let text = "grnlfa-net v1 T=3 U=1 S=1\n1 0 0\n";
        assert!(matches!(read_network(text), Err(Error::Format(_))));
    }

    proptest! {
        /// write -> read -> write is a fixed point, and values round-trip
        /// exactly through the shortest-representation float formatting.
        #[test]
        fn write_read_write_is_identity(
            triples in proptest::collection::vec(
                (1usize..4, 0usize..5, 0usize..5, 0.0f64..1e6),
                0..50,
            ),
        ) {
            let mut per_slice: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); 3];
            for &(t, i, j, v) in &triples {
                per_slice[t - 1].push((i, j, v));
            }
            let snapshots = per_slice
                .into_iter()
                .enumerate()
                .map(|(pos, tr)| Snapshot {
                    t: pos + 1,
                    known: SparseKnownSet::from_triples(5, 5, tr).unwrap(),
                })
                .collect();
            let net = TemporalNetwork::new(snapshots, NodeIndex::anonymous(5, 5)).unwrap();
            let first = write_network(&net);
            let back = read_network(&first).unwrap();
            let second = write_network(&back);
            prop_assert_eq!(first, second);
            for t in 1..=3 {
                prop_assert_eq!(&back.snapshot(t).known, &net.snapshot(t).known);
            }
        }
    }
}
