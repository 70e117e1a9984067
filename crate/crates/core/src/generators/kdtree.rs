//! Exact Euclidean nearest-neighbour search with a k-d tree.
//!
//! [`KdTree::nearest_iter`] streams points in non-decreasing distance using
//! a best-first queue over nodes and points. Points at equal distance come
//! out in increasing id order.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { left: usize, right: usize },
}

#[derive(Debug, Clone)]
struct Cell {
    node: Node,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct KdTree {
    dim: usize,
    ids: Vec<usize>,
    points: Vec<Vec<f64>>,
    cells: Vec<Cell>,
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn box_distance(q: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    q.iter()
        .zip(lo.iter().zip(hi))
        .map(|(&v, (&l, &h))| {
            let gap = if v < l {
                l - v
            } else if v > h {
                v - h
            } else {
                0.0
            };
            gap * gap
        })
        .sum()
}

impl KdTree {
    /// Builds a tree over `(id, point)` pairs. All points must share a dimension.
    pub fn new(items: Vec<(usize, Vec<f64>)>) -> Self {
        let dim = items.first().map_or(0, |(_, p)| p.len());
        assert!(items.iter().all(|(_, p)| p.len() == dim), "ragged points");
        let (ids, points): (Vec<_>, Vec<_>) = items.into_iter().unzip();
        let mut tree = Self {
            dim,
            ids,
            points,
            cells: Vec::new(),
        };
        if !tree.points.is_empty() {
            let mut order: Vec<usize> = (0..tree.points.len()).collect();
            tree.build(&mut order, 0);
            let ids = order.iter().map(|&i| tree.ids[i]).collect();
            let points = order.iter().map(|&i| std::mem::take(&mut tree.points[i])).collect();
            tree.ids = ids;
            tree.points = points;
        }
        tree
    }

    fn build(&mut self, order: &mut [usize], offset: usize) -> usize {
        let mut lo = vec![f64::INFINITY; self.dim];
        let mut hi = vec![f64::NEG_INFINITY; self.dim];
        for &i in order.iter() {
            for (d, &v) in self.points[i].iter().enumerate() {
                lo[d] = lo[d].min(v);
                hi[d] = hi[d].max(v);
            }
        }
        let slot = self.cells.len();
        self.cells.push(Cell {
            node: Node::Leaf {
                start: offset,
                end: offset + order.len(),
            },
            lo: lo.clone(),
            hi: hi.clone(),
        });
        if order.len() <= LEAF_SIZE {
            return slot;
        }
        let axis = (0..self.dim)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])).then(b.cmp(&a)))
            .unwrap_or(0);
        if !(hi[axis] > lo[axis]) {
            return slot; // all points coincide
        }
        let mid = order.len() / 2;
        let points = &self.points;
        order.select_nth_unstable_by(mid, |&a, &b| {
            points[a][axis].total_cmp(&points[b][axis]).then(a.cmp(&b))
        });
        let (l, r) = order.split_at_mut(mid);
        let left = self.build(l, offset);
        let right = self.build(r, offset + mid);
        self.cells[slot].node = Node::Split { left, right };
        slot
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Closest point as `(id, squared distance)`; lowest id on ties.
    pub fn nearest(&self, query: &[f64]) -> Option<(usize, f64)> {
        self.nearest_iter(query).next()
    }

    pub fn nearest_iter<'a>(&'a self, query: &'a [f64]) -> NearestIter<'a> {
        assert!(self.is_empty() || query.len() == self.dim, "query dimension");
        let mut it = NearestIter {
            tree: self,
            query,
            heap: BinaryHeap::new(),
        };
        if let Some(root) = self.cells.first() {
            it.push(Entry {
                dist: box_distance(query, &root.lo, &root.hi),
                kind: Kind::Cell,
                key: 0,
            });
        }
        it
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Kind {
    Cell,
    Point,
}

#[derive(Debug, Clone, Copy)]
struct Entry {
    dist: f64,
    kind: Kind,
    /// cell index or point slot
    key: usize,
}

impl Entry {
    fn tie_key(&self, tree: &KdTree) -> usize {
        match self.kind {
            Kind::Cell => self.key,
            Kind::Point => tree.ids[self.key],
        }
    }
}

pub struct NearestIter<'a> {
    tree: &'a KdTree,
    query: &'a [f64],
    heap: BinaryHeap<Ranked>,
}

// BinaryHeap needs Ord on the element itself, so entries carry their rank.
struct Ranked(Entry, usize);

impl PartialEq for Ranked {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Ranked {}
impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Ranked {
    fn cmp(&self, other: &Self) -> Ordering {
        // reversed for a min-heap: distance, then cells before points, then id
        other
            .0
            .dist
            .total_cmp(&self.0.dist)
            .then(other.0.kind.cmp(&self.0.kind))
            .then(other.1.cmp(&self.1))
    }
}

impl<'a> NearestIter<'a> {
    fn push(&mut self, e: Entry) {
        let key = e.tie_key(self.tree);
        self.heap.push(Ranked(e, key));
    }
}

impl Iterator for NearestIter<'_> {
    /// `(id, squared distance)`
    type Item = (usize, f64);

    fn next(&mut self) -> Option<Self::Item> {
        while let Some(Ranked(e, _)) = self.heap.pop() {
            match e.kind {
                Kind::Point => return Some((self.tree.ids[e.key], e.dist)),
                Kind::Cell => match self.tree.cells[e.key].node {
                    Node::Leaf { start, end } => {
                        for slot in start..end {
                            let dist = squared_distance(self.query, &self.tree.points[slot]);
                            self.push(Entry {
                                dist,
                                kind: Kind::Point,
                                key: slot,
                            });
                        }
                    }
                    Node::Split { left, right } => {
                        for c in [left, right] {
                            let cell = &self.tree.cells[c];
                            let dist = box_distance(self.query, &cell.lo, &cell.hi);
                            self.push(Entry {
                                dist,
                                kind: Kind::Cell,
                                key: c,
                            });
                        }
                    }
                },
            }
        }
        None
    }
}
