//! Exact k-nearest-neighbor search over Euclidean distance via a ball tree.
//! Results are identical to a linear scan, including tie order: candidates are
//! ranked by (distance, id) ascending, and the pruning bound is deflated so a
//! subtree that could contain an exact tie is never skipped.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{KgeError, Result};

#[derive(Debug, Clone)]
struct Node {
    start: usize,
    end: usize,
    centroid: Vec<f64>,
    radius: f64,
    // Indexes into the node arena; None for leaves.
    children: Option<(usize, usize)>,
}

#[derive(Debug, Clone)]
pub struct KnnIndex {
    dim: usize,
    leaf_size: usize,
    // Point rows permuted into tree order; ids aligned with rows.
    points: Vec<f64>,
    ids: Vec<u32>,
    nodes: Vec<Node>,
    root: usize,
}

impl KnnIndex {
    /// Builds the tree over (id, vector) points. All vectors must share one
    /// dimension and at least one point is required.
    pub fn build<'a, I>(points: I, leaf_size: usize) -> Result<Self>
    where
        I: IntoIterator<Item = (u32, &'a [f64])>,
    {
        if leaf_size == 0 {
            return Err(KgeError::InvalidArgument("leaf_size must be ≥ 1".into()));
        }
        let mut ids = Vec::new();
        let mut flat = Vec::new();
        let mut dim = 0usize;
        for (id, v) in points {
            if ids.is_empty() {
                dim = v.len();
            } else if v.len() != dim {
                return Err(KgeError::DimensionMismatch {
                    expected: dim,
                    got: v.len(),
                });
            }
            ids.push(id);
            flat.extend_from_slice(v);
        }
        if ids.is_empty() {
            return Err(KgeError::EmptyInput {
                what: "knn index points".into(),
            });
        }
        if dim == 0 {
            return Err(KgeError::InvalidArgument(
                "knn index points must have dimension ≥ 1".into(),
            ));
        }

        let n = ids.len();
        let mut order: Vec<usize> = (0..n).collect();
        let mut nodes = Vec::new();
        let root = build_node(&flat, dim, leaf_size, &mut order, 0, n, &mut nodes);

        // Permute rows into tree order so leaves scan contiguous memory.
        let mut points = vec![0.0; n * dim];
        let mut tree_ids = vec![0u32; n];
        for (pos, &src) in order.iter().enumerate() {
            points[pos * dim..(pos + 1) * dim].copy_from_slice(&flat[src * dim..(src + 1) * dim]);
            tree_ids[pos] = ids[src];
        }

        Ok(KnnIndex {
            dim,
            leaf_size,
            points,
            ids: tree_ids,
            nodes,
            root,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn leaf_size(&self) -> usize {
        self.leaf_size
    }

    /// The k nearest points to `query`, ascending by (distance, id). k is
    /// capped at the point count.
    pub fn knn(&self, query: &[f64], k: usize) -> Vec<(u32, f64)> {
        assert_eq!(query.len(), self.dim, "query dimension mismatch");
        let k = k.min(self.len());
        if k == 0 {
            return Vec::new();
        }
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        self.visit(self.root, query, k, &mut heap);
        let sorted = heap.into_sorted_vec();
        sorted
            .into_iter()
            .map(|c| (c.id, c.d2.sqrt()))
            .collect()
    }

    fn visit(&self, node_idx: usize, query: &[f64], k: usize, heap: &mut BinaryHeap<Candidate>) {
        let node = &self.nodes[node_idx];
        if heap.len() == k {
            let worst = heap.peek().unwrap().d2;
            if self.lower_bound_d2(node, query) > worst {
                return;
            }
        }
        match node.children {
            None => {
                for pos in node.start..node.end {
                    let row = &self.points[pos * self.dim..(pos + 1) * self.dim];
                    let cand = Candidate {
                        d2: dist2(query, row),
                        id: self.ids[pos],
                    };
                    if heap.len() < k {
                        heap.push(cand);
                    } else if cand < *heap.peek().unwrap() {
                        heap.pop();
                        heap.push(cand);
                    }
                }
            }
            Some((left, right)) => {
                let dl = dist2(query, &self.nodes[left].centroid);
                let dr = dist2(query, &self.nodes[right].centroid);
                let (first, second) = if dl <= dr { (left, right) } else { (right, left) };
                self.visit(first, query, k, heap);
                self.visit(second, query, k, heap);
            }
        }
    }

    /// Conservative lower bound on the squared distance from `query` to any
    /// point inside `node`. Slightly deflated so float rounding can never push
    /// it above the true minimum, which keeps tie handling exact (the prune
    /// test is strict).
    fn lower_bound_d2(&self, node: &Node, query: &[f64]) -> f64 {
        let dc = dist2(query, &node.centroid).sqrt();
        let b = (dc - node.radius).max(0.0) * (1.0 - 1e-12);
        b * b
    }
}

fn build_node(
    flat: &[f64],
    dim: usize,
    leaf_size: usize,
    order: &mut [usize],
    start: usize,
    end: usize,
    nodes: &mut Vec<Node>,
) -> usize {
    let slice = &order[..];
    let count = end - start;
    let mut centroid = vec![0.0; dim];
    for &src in &slice[start..end] {
        for (c, &x) in centroid.iter_mut().zip(&flat[src * dim..(src + 1) * dim]) {
            *c += x;
        }
    }
    for c in centroid.iter_mut() {
        *c /= count as f64;
    }
    let radius = slice[start..end]
        .iter()
        .map(|&src| dist2(&centroid, &flat[src * dim..(src + 1) * dim]))
        .fold(0.0f64, f64::max)
        .sqrt();

    if count <= leaf_size {
        nodes.push(Node {
            start,
            end,
            centroid,
            radius,
            children: None,
        });
        return nodes.len() - 1;
    }

    // Split on the coordinate with the largest spread, at the positional
    // median, so recursion always strictly shrinks even with duplicate points.
    let mut split_dim = 0;
    let mut best_spread = -1.0;
    for d in 0..dim {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &src in &slice[start..end] {
            let x = flat[src * dim + d];
            lo = lo.min(x);
            hi = hi.max(x);
        }
        let spread = hi - lo;
        if spread > best_spread {
            best_spread = spread;
            split_dim = d;
        }
    }
    let mid = count / 2;
    order[start..end].select_nth_unstable_by(mid, |&a, &b| {
        flat[a * dim + split_dim]
            .total_cmp(&flat[b * dim + split_dim])
            .then(a.cmp(&b))
    });

    let left = build_node(flat, dim, leaf_size, order, start, start + mid, nodes);
    let right = build_node(flat, dim, leaf_size, order, start + mid, end, nodes);
    nodes.push(Node {
        start,
        end,
        centroid,
        radius,
        children: Some((left, right)),
    });
    nodes.len() - 1
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    let mut total = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        total += d * d;
    }
    total
}

/// Max-heap item ordered by (d2, id): the heap top is the current worst kept
/// candidate, and equal distances favor the smaller id.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    d2: f64,
    id: u32,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2.total_cmp(&other.d2).then(self.id.cmp(&other.id))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn brute_force(points: &[(u32, Vec<f64>)], query: &[f64], k: usize) -> Vec<(u32, f64)> {
        let mut scored: Vec<(f64, u32)> = points
            .iter()
            .map(|(id, v)| (dist2(query, v), *id))
            .collect();
        scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        scored
            .into_iter()
            .take(k)
            .map(|(d2, id)| (id, d2.sqrt()))
            .collect()
    }

    fn build_from(points: &[(u32, Vec<f64>)], leaf_size: usize) -> KnnIndex {
        KnnIndex::build(points.iter().map(|(id, v)| (*id, v.as_slice())), leaf_size).unwrap()
    }

    #[test]
    fn three_point_worked_example() {
        let points = vec![
            (0u32, vec![0.0, 1.0]),
            (1u32, vec![0.99, 0.14]),
            (2u32, vec![-1.0, 0.0]),
        ];
        let index = build_from(&points, 1);
        let hits = index.knn(&[1.0, 0.0], 1);
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].0, 1);
        assert!((hits[0].1 - 0.0197f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn k_equals_m_returns_all_sorted() {
        let points = vec![
            (7u32, vec![0.0, 1.0]),
            (3u32, vec![0.99, 0.14]),
            (5u32, vec![-1.0, 0.0]),
        ];
        let index = build_from(&points, 2);
        let hits = index.knn(&[1.0, 0.0], 3);
        assert_eq!(hits.iter().map(|h| h.0).collect::<Vec<_>>(), vec![3, 7, 5]);
        assert!(hits.windows(2).all(|w| w[0].1 <= w[1].1));
    }

    #[test]
    fn k_larger_than_m_is_capped() {
        let points = vec![(0u32, vec![0.0]), (1u32, vec![1.0])];
        let index = build_from(&points, 1);
        assert_eq!(index.knn(&[0.2], 10).len(), 2);
    }

    #[test]
    fn duplicate_points_tie_break_by_id() {
        let points: Vec<(u32, Vec<f64>)> = (0..10).map(|i| (9 - i as u32, vec![1.0, 2.0])).collect();
        let index = build_from(&points, 3);
        let hits = index.knn(&[0.0, 0.0], 4);
        assert_eq!(hits.iter().map(|h| h.0).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn equidistant_points_tie_break_by_id() {
        let points = vec![
            (4u32, vec![1.0, 0.0]),
            (2u32, vec![-1.0, 0.0]),
            (9u32, vec![0.0, 1.0]),
            (1u32, vec![0.0, -1.0]),
        ];
        let index = build_from(&points, 1);
        let hits = index.knn(&[0.0, 0.0], 2);
        assert_eq!(hits.iter().map(|h| h.0).collect::<Vec<_>>(), vec![1, 2]);
    }

    #[test]
    fn build_rejects_bad_inputs() {
        let empty: Vec<(u32, Vec<f64>)> = vec![];
        assert!(KnnIndex::build(empty.iter().map(|(i, v)| (*i, v.as_slice())), 4).is_err());
        let mixed = vec![(0u32, vec![1.0, 2.0]), (1u32, vec![1.0])];
        assert!(KnnIndex::build(mixed.iter().map(|(i, v)| (*i, v.as_slice())), 4).is_err());
        let fine = vec![(0u32, vec![1.0])];
        assert!(KnnIndex::build(fine.iter().map(|(i, v)| (*i, v.as_slice())), 0).is_err());
    }

    #[test]
    fn matches_linear_scan_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (n, dim, leaf) in [(200usize, 8usize, 4usize), (150, 3, 1), (64, 16, 64)] {
            let points: Vec<(u32, Vec<f64>)> = (0..n)
                .map(|i| {
                    (
                        i as u32,
                        (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
                    )
                })
                .collect();
            let index = build_from(&points, leaf);
            for _ in 0..25 {
                let query: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                for k in [1usize, 5, 17, n] {
                    let got = index.knn(&query, k);
                    let want = brute_force(&points, &query, k.min(n));
                    assert_eq!(
                        got.iter().map(|h| h.0).collect::<Vec<_>>(),
                        want.iter().map(|h| h.0).collect::<Vec<_>>(),
                        "n={n} dim={dim} leaf={leaf} k={k}"
                    );
                }
            }
        }
    }

    #[test]
    fn quantized_coordinates_force_ties_against_oracle() {
        // Coarse grid coordinates make exact distance ties common, stressing
        // the deflated prune bound and (d2, id) ordering.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let points: Vec<(u32, Vec<f64>)> = (0..120)
            .map(|i| {
                (
                    i as u32,
                    (0..4).map(|_| rng.random_range(0..3) as f64).collect(),
                )
            })
            .collect();
        let index = build_from(&points, 5);
        for _ in 0..40 {
            let query: Vec<f64> = (0..4).map(|_| rng.random_range(0..3) as f64).collect();
            for k in [1usize, 7, 30] {
                let got = index.knn(&query, k);
                let want = brute_force(&points, &query, k);
                assert_eq!(
                    got.iter().map(|h| h.0).collect::<Vec<_>>(),
                    want.iter().map(|h| h.0).collect::<Vec<_>>()
                );
            }
        }
    }
}
