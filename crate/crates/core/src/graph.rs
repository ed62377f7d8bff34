//! Undirected simple graphs without self-loops.
//!
//! Small graphs (`n <= DENSE_LIMIT`) are stored as a packed bit matrix,
//! larger ones as sorted neighbour lists. Both representations answer the
//! same queries and compare equal when they hold the same edge set.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Largest node count stored densely by default.
pub const DENSE_LIMIT: usize = 5000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Representation {
    Dense,
    Sparse,
}

impl Representation {
    pub fn for_size(n: usize) -> Self {
        if n <= DENSE_LIMIT {
            Representation::Dense
        } else {
            Representation::Sparse
        }
    }
}

#[derive(Clone, Debug)]
enum Storage {
    Dense { words: usize, bits: Vec<u64> },
    Sparse { lists: Vec<Vec<usize>> },
}

#[derive(Clone, Debug)]
pub struct Adjacency {
    n: usize,
    edge_count: usize,
    storage: Storage,
}

impl Adjacency {
    pub fn empty(n: usize) -> Self {
        Self::empty_with(n, Representation::for_size(n))
    }

    pub fn empty_with(n: usize, repr: Representation) -> Self {
        let storage = match repr {
            Representation::Dense => {
                let words = n.div_ceil(64);
                Storage::Dense {
                    words,
                    bits: vec![0; words * n],
                }
            }
            Representation::Sparse => Storage::Sparse {
                lists: vec![Vec::new(); n],
            },
        };
        Adjacency {
            n,
            edge_count: 0,
            storage,
        }
    }

    /// Builds a graph from undirected edges given in any orientation.
    /// Duplicates are merged; self-loops and out-of-range endpoints are
    /// rejected.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        Self::from_edges_with(n, edges, Representation::for_size(n))
    }

    pub fn from_edges_with<I>(n: usize, edges: I, repr: Representation) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut adj = Self::empty_with(n, repr);
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::InvalidArgument(format!(
                    "edge ({u}, {v}) out of range for {n} nodes"
                )));
            }
            if u == v {
                return Err(Error::InvalidArgument(format!("self-loop at node {u}")));
            }
            adj.insert(u, v);
        }
        if let Storage::Sparse { lists } = &mut adj.storage {
            for l in lists.iter_mut() {
                l.sort_unstable();
            }
        }
        Ok(adj)
    }

    /// Inserts `{u, v}`; returns whether the edge was new. Sparse lists are
    /// left unsorted, callers re-sort (see `from_edges_with`).
    fn insert(&mut self, u: usize, v: usize) -> bool {
        let added = match &mut self.storage {
            Storage::Dense { words, bits } => {
                let (wu, bu) = (u * *words + v / 64, 1u64 << (v % 64));
                if bits[wu] & bu != 0 {
                    false
                } else {
                    bits[wu] |= bu;
                    bits[v * *words + u / 64] |= 1u64 << (u % 64);
                    true
                }
            }
            Storage::Sparse { lists } => {
                if lists[u].contains(&v) {
                    false
                } else {
                    lists[u].push(v);
                    lists[v].push(u);
                    true
                }
            }
        };
        if added {
            self.edge_count += 1;
        }
        added
    }

    #[inline]
    pub fn node_count(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn representation(&self) -> Representation {
        match self.storage {
            Storage::Dense { .. } => Representation::Dense,
            Storage::Sparse { .. } => Representation::Sparse,
        }
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        match &self.storage {
            Storage::Dense { words, bits } => bits[u * words + v / 64] & (1u64 << (v % 64)) != 0,
            Storage::Sparse { lists } => lists[u].binary_search(&v).is_ok(),
        }
    }

    /// Number of neighbours of `i`, excluding `i` itself.
    pub fn degree(&self, i: usize) -> usize {
        match &self.storage {
            Storage::Dense { words, bits } => bits[i * words..(i + 1) * words]
                .iter()
                .map(|w| w.count_ones() as usize)
                .sum(),
            Storage::Sparse { lists } => lists[i].len(),
        }
    }

    /// Neighbours of `i` in increasing order.
    pub fn neighbors(&self, i: usize) -> Neighbors<'_> {
        match &self.storage {
            Storage::Dense { words, bits } => Neighbors::Dense {
                row: &bits[i * words..(i + 1) * words],
                word: 0,
                current: bits.get(i * words).copied().unwrap_or(0),
            },
            Storage::Sparse { lists } => Neighbors::Sparse(lists[i].iter()),
        }
    }

    /// All edges as `(u, v)` with `u < v`, sorted lexicographically.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.edge_count);
        for u in 0..self.n {
            out.extend(self.neighbors(u).filter(|&v| v > u).map(|v| (u, v)));
        }
        out
    }

    /// A copy with the extra edges added (duplicates ignored).
    pub fn with_added_edges(&self, extra: &[(usize, usize)]) -> Result<Adjacency> {
        let mut all = self.edges();
        all.extend_from_slice(extra);
        Adjacency::from_edges_with(self.n, all, self.representation())
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|u| self.neighbors(u).all(|v| v != u && self.has_edge(v, u)))
    }
}

impl PartialEq for Adjacency {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.edge_count == other.edge_count && self.edges() == other.edges()
    }
}

pub enum Neighbors<'a> {
    Dense {
        row: &'a [u64],
        word: usize,
        current: u64,
    },
    Sparse(core::slice::Iter<'a, usize>),
}

impl Iterator for Neighbors<'_> {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        match self {
            Neighbors::Dense { row, word, current } => loop {
                if *current != 0 {
                    let bit = current.trailing_zeros() as usize;
                    *current &= *current - 1;
                    return Some(*word * 64 + bit);
                }
                *word += 1;
                if *word >= row.len() {
                    return None;
                }
                *current = row[*word];
            },
            Neighbors::Sparse(it) => it.next().copied(),
        }
    }
}
