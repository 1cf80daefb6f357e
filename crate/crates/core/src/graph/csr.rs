use std::ops::Range;

/// Compressed sparse row adjacency for an undirected simple graph.
///
/// Every undirected edge is stored in both directions. Neighbor lists are
/// sorted ascending, which makes edge lookup a binary search and keeps every
/// traversal in a fixed order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Csr {
    offsets: Vec<usize>,
    targets: Vec<usize>,
}

impl Csr {
    pub fn empty(node_count: usize) -> Self {
        Csr {
            offsets: vec![0; node_count + 1],
            targets: Vec::new(),
        }
    }

    /// Builds from undirected edges. Each pair is inserted in both directions;
    /// repeated pairs collapse to one edge and self-loops are dropped.
    pub fn from_undirected(node_count: usize, edges: &[(usize, usize)]) -> Self {
        let mut lists = vec![Vec::new(); node_count];
        for &(u, v) in edges {
            if u != v {
                lists[u].push(v);
                lists[v].push(u);
            }
        }
        for list in &mut lists {
            list.sort_unstable();
            list.dedup();
        }
        Self::from_sorted_lists(lists)
    }

    /// Builds directly from per-node sorted neighbor lists.
    pub fn from_sorted_lists(lists: Vec<Vec<usize>>) -> Self {
        let mut offsets = Vec::with_capacity(lists.len() + 1);
        offsets.push(0);
        let mut targets = Vec::with_capacity(lists.iter().map(Vec::len).sum());
        for list in lists {
            debug_assert!(list.windows(2).all(|w| w[0] < w[1]));
            targets.extend_from_slice(&list);
            offsets.push(targets.len());
        }
        Csr { offsets, targets }
    }

    pub(crate) fn from_raw(offsets: Vec<usize>, targets: Vec<usize>) -> Self {
        debug_assert_eq!(*offsets.last().unwrap_or(&0), targets.len());
        Csr { offsets, targets }
    }

    #[inline]
    pub fn node_count(&self) -> usize {
        self.offsets.len().saturating_sub(1)
    }

    /// Number of stored (directed) entries, i.e. twice the undirected edge count.
    #[inline]
    pub fn nnz(&self) -> usize {
        self.targets.len()
    }

    #[inline]
    pub fn edge_count(&self) -> usize {
        self.targets.len() / 2
    }

    #[inline]
    pub fn degree(&self, node: usize) -> usize {
        self.offsets[node + 1] - self.offsets[node]
    }

    #[inline]
    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.targets[self.offsets[node]..self.offsets[node + 1]]
    }

    /// Positions of `node`'s entries in the flat entry arrays.
    #[inline]
    pub fn entry_range(&self, node: usize) -> Range<usize> {
        self.offsets[node]..self.offsets[node + 1]
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    pub fn max_degree(&self) -> usize {
        (0..self.node_count()).map(|i| self.degree(i)).max().unwrap_or(0)
    }

    /// Entry index of the directed edge `u -> v`, if present.
    pub fn find_entry(&self, u: usize, v: usize) -> Option<usize> {
        let range = self.entry_range(u);
        self.targets[range.clone()]
            .binary_search(&v)
            .ok()
            .map(|pos| range.start + pos)
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.find_entry(u, v).is_some()
    }

    /// Undirected edges with `u < v`, in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.node_count()).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .copied()
                .filter(move |&v| u < v)
                .map(move |v| (u, v))
        })
    }

    /// Checks symmetry, sortedness and absence of self-loops and duplicates.
    pub fn validate(&self) -> Result<(), String> {
        let n = self.node_count();
        for u in 0..n {
            let nbrs = self.neighbors(u);
            for w in nbrs.windows(2) {
                if w[0] >= w[1] {
                    return Err(format!("neighbor list of {u} not strictly ascending"));
                }
            }
            for &v in nbrs {
                if v >= n {
                    return Err(format!("neighbor {v} of {u} out of range"));
                }
                if v == u {
                    return Err(format!("self-loop on {u}"));
                }
                if !self.has_edge(v, u) {
                    return Err(format!("edge ({u}, {v}) has no reverse entry"));
                }
            }
        }
        Ok(())
    }

    /// Connected components, each sorted ascending, ordered by smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.node_count();
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        let mut queue = std::collections::VecDeque::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            queue.push_back(start);
            let mut comp = Vec::new();
            while let Some(x) = queue.pop_front() {
                comp.push(x);
                for &y in self.neighbors(x) {
                    if !seen[y] {
                        seen[y] = true;
                        queue.push_back(y);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }
}
