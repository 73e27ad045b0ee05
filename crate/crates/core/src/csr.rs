/// Compressed index lists: segment `v` owns `indices[offsets[v]..offsets[v + 1]]`.
///
/// Used both for graph adjacency (segment = target node, entries = its
/// neighbors) and for per-hop neighbor lists.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Csr {
    offsets: Vec<usize>,
    indices: Vec<usize>,
}

impl Csr {
    /// Builds from per-segment lists, preserving order inside each list.
    pub fn from_lists<L: AsRef<[usize]>>(lists: &[L]) -> Self {
        let mut offsets = Vec::with_capacity(lists.len() + 1);
        let mut indices = Vec::new();
        offsets.push(0);
        for l in lists {
            indices.extend_from_slice(l.as_ref());
            offsets.push(indices.len());
        }
        Csr { offsets, indices }
    }

    pub fn empty(segments: usize) -> Self {
        Csr {
            offsets: vec![0; segments + 1],
            indices: Vec::new(),
        }
    }

    #[inline]
    pub fn segments(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Total number of stored entries.
    #[inline]
    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    #[inline]
    pub fn segment(&self, v: usize) -> &[usize] {
        &self.indices[self.offsets[v]..self.offsets[v + 1]]
    }

    #[inline]
    pub fn range(&self, v: usize) -> std::ops::Range<usize> {
        self.offsets[v]..self.offsets[v + 1]
    }

    #[inline]
    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    #[inline]
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// Largest index referenced, if any.
    pub fn max_index(&self) -> Option<usize> {
        self.indices.iter().copied().max()
    }
}
