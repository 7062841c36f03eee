//! Exact nearest-neighbour search.
//!
//! Both the brute-force scan and the kd-tree minimize the pair
//! `(squared distance, reference index)` lexicographically, so equidistant
//! candidates resolve to the lowest index and the two paths agree bit for bit.

use rayon::prelude::*;

use crate::geom3::Vector3;

/// Reference clouds larger than this are searched through a kd-tree.
pub const BRUTE_FORCE_LIMIT: usize = 512;

const LEAF_SIZE: usize = 8;

#[inline]
fn dist2(a: &Vector3, b: &Vector3) -> f64 {
    let d = a - b;
    d.x * d.x + d.y * d.y + d.z * d.z
}

#[inline]
fn better(d: f64, i: usize, best_d: f64, best_i: usize) -> bool {
    d < best_d || (d == best_d && i < best_i)
}

/// Nearest reference index and squared distance by exhaustive scan.
pub fn nearest_brute(query: &Vector3, reference: &[Vector3]) -> (usize, f64) {
    let mut best = (usize::MAX, f64::INFINITY);
    for (i, p) in reference.iter().enumerate() {
        let d = dist2(query, p);
        if better(d, i, best.1, best.0) {
            best = (i, d);
        }
    }
    best
}

#[derive(Debug, Clone)]
struct Node {
    start: usize,
    end: usize,
    axis: usize,
    split: f64,
    children: Option<(usize, usize)>,
}

/// Static 3-d tree over a copy of the reference points.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Vector3>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl KdTree {
    pub fn new(points: &[Vector3]) -> Self {
        let mut tree = KdTree {
            points: points.to_vec(),
            order: (0..points.len()).collect(),
            nodes: Vec::new(),
        };
        if !points.is_empty() {
            tree.build(0, points.len());
        }
        tree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vector3] {
        &self.points
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node {
            start,
            end,
            axis: 0,
            split: 0.0,
            children: None,
        });
        if end - start <= LEAF_SIZE {
            return id;
        }
        // split on the axis of largest extent
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for &i in &self.order[start..end] {
            lo = lo.inf(&self.points[i]);
            hi = hi.sup(&self.points[i]);
        }
        let axis = (hi - lo).imax();
        if hi[axis] - lo[axis] <= 0.0 {
            return id;
        }
        let mid = start + (end - start) / 2;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a][axis].total_cmp(&points[b][axis])
        });
        let split = self.points[self.order[mid]][axis];
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        let node = &mut self.nodes[id];
        node.axis = axis;
        node.split = split;
        node.children = Some((left, right));
        id
    }

    /// Nearest reference index and squared distance.
    pub fn nearest(&self, query: &Vector3) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        if !self.nodes.is_empty() {
            self.search(0, query, &mut best);
        }
        best
    }

    fn search(&self, id: usize, q: &Vector3, best: &mut (usize, f64)) {
        let node = &self.nodes[id];
        match node.children {
            None => {
                for &i in &self.order[node.start..node.end] {
                    let d = dist2(q, &self.points[i]);
                    if better(d, i, best.1, best.0) {
                        *best = (i, d);
                    }
                }
            }
            Some((left, right)) => {
                // left holds coordinates <= split, right holds >= split
                let delta = q[node.axis] - node.split;
                let (near, far) = if delta <= 0.0 {
                    (left, right)
                } else {
                    (right, left)
                };
                self.search(near, q, best);
                // `<=` keeps equidistant lower-index candidates reachable
                if delta * delta <= best.1 {
                    self.search(far, q, best);
                }
            }
        }
    }
}

/// Index of the nearest reference point for every query point.
///
/// Brute force up to [`BRUTE_FORCE_LIMIT`] reference points, kd-tree above.
pub fn nearest_neighbor(query: &[Vector3], reference: &[Vector3]) -> Vec<usize> {
    nearest_with_distances(query, reference)
        .into_iter()
        .map(|(i, _)| i)
        .collect()
}

/// Nearest index and squared distance for every query point.
pub fn nearest_with_distances(query: &[Vector3], reference: &[Vector3]) -> Vec<(usize, f64)> {
    if reference.len() <= BRUTE_FORCE_LIMIT {
        query
            .par_iter()
            .map(|q| nearest_brute(q, reference))
            .collect()
    } else {
        let tree = KdTree::new(reference);
        query.par_iter().map(|q| tree.nearest(q)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng as _;

    fn cloud(n: usize, seed: u64) -> Vec<Vector3> {
        let mut rng = rng::seeded(seed);
        (0..n)
            .map(|_| {
                Vector3::new(
                    rng.random::<f64>(),
                    rng.random::<f64>(),
                    rng.random::<f64>(),
                )
            })
            .collect()
    }

    #[test]
    fn member_queries_find_themselves() {
        let r = cloud(300, 1);
        let idx = nearest_neighbor(&r, &r);
        assert_eq!(idx, (0..300).collect::<Vec<_>>());
    }

    #[test]
    fn matches_brute_force() {
        let r = cloud(256, 2);
        let q = cloud(256, 3);
        for (qi, i) in q.iter().zip(nearest_neighbor(&q, &r)) {
            let best = r
                .iter()
                .enumerate()
                .map(|(j, p)| ((q_minus(qi, p)), j))
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
                .unwrap()
                .1;
            assert_eq!(i, best);
        }
    }

    fn q_minus(a: &Vector3, b: &Vector3) -> f64 {
        (a - b).norm_squared()
    }

    #[test]
    fn equidistant_tie_picks_lowest_index() {
        let r = vec![
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(-1.0, 0.0, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
        ];
        assert_eq!(nearest_neighbor(&[Vector3::zeros()], &r), vec![0]);
        let r2 = vec![
            Vector3::new(5.0, 5.0, 5.0),
            Vector3::new(-1.0, 0.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
        ];
        assert_eq!(nearest_neighbor(&[Vector3::zeros()], &r2), vec![1]);
    }

    #[test]
    fn tree_agrees_with_brute_force_including_ties() {
        // lattice points produce many exact ties
        let mut r = Vec::new();
        for x in 0..12 {
            for y in 0..12 {
                for z in 0..6 {
                    r.push(Vector3::new(x as f64, y as f64, z as f64) * 0.5);
                }
            }
        }
        assert!(r.len() > BRUTE_FORCE_LIMIT);
        let mut q = cloud(500, 4)
            .into_iter()
            .map(|p| p * 6.0)
            .collect::<Vec<_>>();
        q.extend((0..200).map(|i| Vector3::new(0.25 + 0.5 * (i % 10) as f64, 0.25, 0.25)));
        let tree = KdTree::new(&r);
        for p in &q {
            assert_eq!(tree.nearest(p), nearest_brute(p, &r));
        }
    }
}
