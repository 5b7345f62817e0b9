use crate::error::{Error, Result};

/// One known entry of the sparse relationship matrix: sender `i`, receiver
/// `j`, non-negative value `r`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Entry {
    pub sender: usize,
    pub receiver: usize,
    pub value: f64,
}

/// Dual-indexed store of the known entries of a sparse bipartite matrix.
///
/// Entries are kept once, sorted by `(sender, receiver)`, which doubles as
/// the row-major (CSR) order. A second permutation sorted by
/// `(receiver, sender)` provides column-major (CSC) access. Row slices and
/// column slices therefore visit the same underlying records:
///
/// ```text
/// row(i)  = all entries with sender i,   in receiver order
/// col(j)  = all entries with receiver j, in sender order
/// ```
///
/// Duplicate `(i, j)` pairs are merged at construction by summing their
/// values; after construction the structure is immutable.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseKnownSet {
    num_senders: usize,
    num_receivers: usize,
    /// Sorted by (sender, receiver); at most one entry per pair.
    entries: Vec<Entry>,
    /// Row pointers, len = num_senders + 1.
    row_ptr: Vec<usize>,
    /// Column pointers, len = num_receivers + 1.
    col_ptr: Vec<usize>,
    /// Entry indices sorted by (receiver, sender), addressed by col_ptr.
    col_order: Vec<usize>,
}

impl SparseKnownSet {
    /// Build from raw `(sender, receiver, value)` triples. Duplicate pairs
    /// are summed. Values must be non-negative and finite.
    pub fn from_triples(
        num_senders: usize,
        num_receivers: usize,
        triples: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut raw: Vec<(usize, usize, f64)> = Vec::new();
        for (i, j, r) in triples {
            if i >= num_senders || j >= num_receivers {
                return Err(Error::IndexOutOfRange(format!(
                    "entry ({i}, {j}) outside {num_senders} x {num_receivers}"
                )));
            }
            if !r.is_finite() || r < 0.0 {
                return Err(Error::Format(format!(
                    "entry ({i}, {j}) has invalid value {r}"
                )));
            }
            raw.push((i, j, r));
        }
        raw.sort_by_key(|&(i, j, _)| (i, j));

        let mut entries: Vec<Entry> = Vec::with_capacity(raw.len());
        for (i, j, r) in raw {
            match entries.last_mut() {
                Some(last) if last.sender == i && last.receiver == j => last.value += r,
                _ => entries.push(Entry {
                    sender: i,
                    receiver: j,
                    value: r,
                }),
            }
        }
        Ok(Self::from_sorted_unique(num_senders, num_receivers, entries))
    }

    fn from_sorted_unique(num_senders: usize, num_receivers: usize, entries: Vec<Entry>) -> Self {
        let mut row_ptr = vec![0usize; num_senders + 1];
        for e in &entries {
            row_ptr[e.sender + 1] += 1;
        }
        for i in 0..num_senders {
            row_ptr[i + 1] += row_ptr[i];
        }

        let mut order: Vec<usize> = (0..entries.len()).collect();
        order.sort_by_key(|&idx| (entries[idx].receiver, entries[idx].sender));
        let mut col_ptr = vec![0usize; num_receivers + 1];
        for e in &entries {
            col_ptr[e.receiver + 1] += 1;
        }
        for j in 0..num_receivers {
            col_ptr[j + 1] += col_ptr[j];
        }

        SparseKnownSet {
            num_senders,
            num_receivers,
            entries,
            row_ptr,
            col_ptr,
            col_order: order,
        }
    }

    pub fn num_senders(&self) -> usize {
        self.num_senders
    }

    pub fn num_receivers(&self) -> usize {
        self.num_receivers
    }

    /// |Λ|: the number of known entries.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Λ(i): entries with sender `i`, in receiver order.
    pub fn row(&self, i: usize) -> &[Entry] {
        &self.entries[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    /// |Λ(i)|.
    pub fn row_len(&self, i: usize) -> usize {
        self.row_ptr[i + 1] - self.row_ptr[i]
    }

    /// Λ(j): entries with receiver `j`, in sender order.
    pub fn col(&self, j: usize) -> impl Iterator<Item = &Entry> + '_ {
        self.col_order[self.col_ptr[j]..self.col_ptr[j + 1]]
            .iter()
            .map(move |&idx| &self.entries[idx])
    }

    /// |Λ(j)|.
    pub fn col_len(&self, j: usize) -> usize {
        self.col_ptr[j + 1] - self.col_ptr[j]
    }

    /// All entries in (sender, receiver) order.
    pub fn iter(&self) -> impl Iterator<Item = &Entry> + '_ {
        self.entries.iter()
    }

    /// Map every value through `f`, keeping the index structure.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Self {
        let entries = self
            .entries
            .iter()
            .map(|e| Entry {
                value: f(e.value),
                ..*e
            })
            .collect();
        SparseKnownSet {
            num_senders: self.num_senders,
            num_receivers: self.num_receivers,
            entries,
            row_ptr: self.row_ptr.clone(),
            col_ptr: self.col_ptr.clone(),
            col_order: self.col_order.clone(),
        }
    }

    /// Order-insensitive fingerprint of dimensions, indices and value bits.
    /// Used to assert that two runs scored the exact same data.
    pub fn checksum(&self) -> u64 {
        let mut acc: u64 = 0xcbf2_9ce4_8422_2325;
        let mut mix = |v: u64| {
            acc ^= v;
            acc = acc.wrapping_mul(0x1000_0000_01b3);
        };
        mix(self.num_senders as u64);
        mix(self.num_receivers as u64);
        mix(self.entries.len() as u64);
        for e in &self.entries {
            mix(e.sender as u64);
            mix(e.receiver as u64);
            mix(e.value.to_bits());
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn duplicates_merge_by_sum() {
        let s = SparseKnownSet::from_triples(2, 2, vec![(0, 1, 1.0), (0, 1, 2.0), (1, 0, 4.0)])
            .unwrap();
        assert_eq!(s.len(), 2);
        let row0 = s.row(0);
        assert_eq!(row0.len(), 1);
        assert_eq!(row0[0].receiver, 1);
        assert_eq!(row0[0].value, 3.0);
    }

    #[test]
    fn row_and_col_slices_partition_entries() {
        let s = SparseKnownSet::from_triples(
            3,
            2,
            vec![(0, 0, 1.0), (0, 1, 2.0), (1, 1, 3.0), (2, 0, 4.0)],
        )
        .unwrap();
        let by_rows: usize = (0..3).map(|i| s.row_len(i)).sum();
        let by_cols: usize = (0..2).map(|j| s.col_len(j)).sum();
        assert_eq!(by_rows, s.len());
        assert_eq!(by_cols, s.len());
    }

    #[test]
    fn negative_value_rejected() {
        let err = SparseKnownSet::from_triples(1, 1, vec![(0, 0, -1.0)]).unwrap_err();
        assert!(matches!(err, Error::Format(_)));
    }

    #[test]
    fn out_of_range_rejected() {
        let err = SparseKnownSet::from_triples(1, 1, vec![(0, 1, 1.0)]).unwrap_err();
        assert!(matches!(err, Error::IndexOutOfRange(_)));
    }

    #[test]
    fn empty_set_is_valid() {
        let s = SparseKnownSet::from_triples(4, 4, vec![]).unwrap();
        assert!(s.is_empty());
        assert_eq!(s.row_len(3), 0);
        assert_eq!(s.col_len(0), 0);
    }

    fn arb_triples() -> impl Strategy<Value = (usize, usize, Vec<(usize, usize, f64)>)> {
        (1usize..8, 1usize..8).prop_flat_map(|(u, s)| {
            let entry = (0..u, 0..s, 0.0f64..10.0);
            proptest::collection::vec(entry, 0..40).prop_map(move |v| (u, s, v))
        })
    }

    proptest! {
        /// Iterating all row slices and all column slices visits the same
        /// multiset of entries.
        #[test]
        fn rows_and_cols_visit_same_multiset((u, s, triples) in arb_triples()) {
            let set = SparseKnownSet::from_triples(u, s, triples).unwrap();
            let mut via_rows: Vec<(usize, usize, u64)> = (0..u)
                .flat_map(|i| set.row(i).iter().map(|e| (e.sender, e.receiver, e.value.to_bits())))
                .collect();
            let mut via_cols: Vec<(usize, usize, u64)> = (0..s)
                .flat_map(|j| set.col(j).map(|e| (e.sender, e.receiver, e.value.to_bits())))
                .collect();
            via_rows.sort_unstable();
            via_cols.sort_unstable();
            prop_assert_eq!(via_rows, via_cols);
        }

        /// |Λ| = Σ_i |Λ(i)| = Σ_j |Λ(j)| and pairs are unique.
        #[test]
        fn slice_sizes_sum_to_total((u, s, triples) in arb_triples()) {
            let set = SparseKnownSet::from_triples(u, s, triples).unwrap();
            prop_assert_eq!((0..u).map(|i| set.row_len(i)).sum::<usize>(), set.len());
            prop_assert_eq!((0..s).map(|j| set.col_len(j)).sum::<usize>(), set.len());
            let mut pairs: Vec<_> = set.iter().map(|e| (e.sender, e.receiver)).collect();
            pairs.dedup();
            prop_assert_eq!(pairs.len(), set.len());
        }
    }
}
