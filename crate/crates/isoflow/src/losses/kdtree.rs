//! 3D k-d tree for nearest-neighbor queries.

use crate::field::Vec3;

#[derive(Debug, Clone, Copy)]
enum Node {
    Leaf {
        start: usize,
        count: usize,
    },
    Split {
        axis: usize,
        value: f64,
        /// Right child index; the left child is `self + 1`.
        right: usize,
    },
}

/// Static k-d tree over a point set. Queries return the index into the
/// original slice together with the squared distance.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Vec3>,
    ids: Vec<usize>,
    nodes: Vec<Node>,
}

const LEAF_SIZE: usize = 8;

impl KdTree {
    pub fn build(points: &[Vec3]) -> Self {
        assert!(!points.is_empty(), "k-d tree needs at least one point");
        let mut ids: Vec<usize> = (0..points.len()).collect();
        let mut nodes = Vec::new();
        build_node(points, &mut ids, 0, points.len(), &mut nodes);
        let pts = ids.iter().map(|&i| points[i]).collect();
        Self { points: pts, ids, nodes }
    }

    /// Index of the nearest point to `q` and the squared distance.
    pub fn nearest(&self, q: Vec3) -> (usize, f64) {
        let mut best = (0usize, f64::INFINITY);
        self.search(0, q, &mut best);
        (self.ids[best.0], best.1)
    }

    fn search(&self, node: usize, q: Vec3, best: &mut (usize, f64)) {
        match self.nodes[node] {
            Node::Leaf { start, count } => {
                for i in start..start + count {
                    let d2 = (self.points[i] - q).norm_squared();
                    if d2 < best.1 {
                        *best = (i, d2);
                    }
                }
            }
            Node::Split { axis, value, right, .. } => {
                let delta = q[axis] - value;
                let (near, far) = if delta <= 0.0 { (node + 1, right) } else { (right, node + 1) };
                self.search(near, q, best);
                if delta * delta < best.1 {
                    self.search(far, q, best);
                }
            }
        }
    }
}

fn build_node(points: &[Vec3], ids: &mut [usize], start: usize, end: usize, nodes: &mut Vec<Node>) {
    let n = end - start;
    if n <= LEAF_SIZE {
        nodes.push(Node::Leaf { start, count: n });
        return;
    }
    // Widest axis of the bounding box.
    let mut min = Vec3::repeat(f64::INFINITY);
    let mut max = Vec3::repeat(f64::NEG_INFINITY);
    for &i in &ids[start..end] {
        min = min.inf(&points[i]);
        max = max.sup(&points[i]);
    }
    let extent = max - min;
    let axis = if extent.x >= extent.y && extent.x >= extent.z {
        0
    } else if extent.y >= extent.z {
        1
    } else {
        2
    };
    let mid = n / 2;
    ids[start..end].select_nth_unstable_by(mid, |&a, &b| {
        points[a][axis].partial_cmp(&points[b][axis]).unwrap().then(a.cmp(&b))
    });
    let split_value = points[ids[start + mid]][axis];
    let here = nodes.len();
    nodes.push(Node::Split { axis, value: split_value, right: 0 });
    build_node(points, ids, start, start + mid, nodes);
    let right = nodes.len();
    build_node(points, ids, start + mid, end, nodes);
    if let Node::Split { right: r, .. } = &mut nodes[here] {
        *r = right;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn nearest_matches_brute_force_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let cloud: Vec<Vec3> = (0..50)
            .map(|_| Vec3::new(rng.gen(), rng.gen(), rng.gen()))
            .collect();
        let tree = KdTree::build(&cloud);
        for _ in 0..200 {
            let q = Vec3::new(
                rng.gen::<f64>() * 2.0 - 0.5,
                rng.gen::<f64>() * 2.0 - 0.5,
                rng.gen::<f64>() * 2.0 - 0.5,
            );
            let brute = cloud
                .iter()
                .map(|p| (p - q).norm_squared())
                .fold(f64::INFINITY, f64::min);
            let (_, d2) = tree.nearest(q);
            assert_eq!(d2, brute, "k-d tree must agree with brute force exactly");
        }
    }

    #[test]
    fn single_point() {
        let tree = KdTree::build(&[Vec3::new(1.0, 2.0, 3.0)]);
        let (idx, d2) = tree.nearest(Vec3::new(1.0, 2.0, 4.0));
        assert_eq!(idx, 0);
        assert_eq!(d2, 1.0);
    }
}
