//! Bounding-volume hierarchy over triangles.
//!
//! Supports the two queries the rest of the crate needs: closest point on a
//! triangle soup (thin-shell distance fields) and nearest ray hit
//! (orthographic normal-map rendering).

use crate::field::Vec3;

/// Closest point on triangle `(a, b, c)` to `p` (Ericson, Real-Time
/// Collision Detection, 5.1.5).
pub fn closest_point_on_triangle(p: Vec3, a: Vec3, b: Vec3, c: Vec3) -> Vec3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return a;
    }

    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return b;
    }

    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + v * ab;
    }

    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return c;
    }

    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + w * ac;
    }

    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + w * (c - b);
    }

    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

/// Möller–Trumbore ray/triangle intersection. Returns the ray parameter `t`
/// of the hit, if any (no backface culling).
pub fn ray_triangle(origin: Vec3, dir: Vec3, a: Vec3, b: Vec3, c: Vec3) -> Option<f64> {
    let e1 = b - a;
    let e2 = c - a;
    let pvec = dir.cross(&e2);
    let det = e1.dot(&pvec);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv_det = 1.0 / det;
    let tvec = origin - a;
    let u = tvec.dot(&pvec) * inv_det;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let qvec = tvec.cross(&e1);
    let v = dir.dot(&qvec) * inv_det;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    Some(e2.dot(&qvec) * inv_det)
}

#[derive(Debug, Clone, Copy)]
struct Node {
    min: Vec3,
    max: Vec3,
    /// Leaf (`count > 0`): triangle range start. Inner (`count == 0`): index
    /// of the right child; the left child always sits at `self + 1`.
    link: u32,
    count: u32,
}

/// BVH over a fixed triangle list.
#[derive(Debug, Clone)]
pub struct TriBvh {
    tris: Vec<[Vec3; 3]>,
    nodes: Vec<Node>,
}

const LEAF_SIZE: usize = 4;

impl TriBvh {
    pub fn build(tris: Vec<[Vec3; 3]>) -> Self {
        assert!(!tris.is_empty(), "BVH needs at least one triangle");
        let mut order: Vec<usize> = (0..tris.len()).collect();
        let centroids: Vec<Vec3> = tris.iter().map(|t| (t[0] + t[1] + t[2]) / 3.0).collect();
        let mut nodes = Vec::new();
        build_node(&tris, &centroids, &mut order, 0, tris.len(), &mut nodes);
        let tris = order.iter().map(|&i| tris[i]).collect();
        Self { tris, nodes }
    }

    pub fn triangles(&self) -> &[[Vec3; 3]] {
        &self.tris
    }

    /// Distance and closest surface point to `q`.
    pub fn closest(&self, q: Vec3) -> (f64, Vec3) {
        let mut best_d2 = f64::INFINITY;
        let mut best_p = self.tris[0][0];
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            if aabb_dist2(q, node.min, node.max) >= best_d2 {
                continue;
            }
            if node.count > 0 {
                for t in &self.tris[node.link as usize..(node.link + node.count) as usize] {
                    let cp = closest_point_on_triangle(q, t[0], t[1], t[2]);
                    let d2 = (q - cp).norm_squared();
                    if d2 < best_d2 {
                        best_d2 = d2;
                        best_p = cp;
                    }
                }
            } else {
                // Visit the nearer child first.
                let l = ni + 1;
                let r = node.link as usize;
                let dl = aabb_dist2(q, self.nodes[l].min, self.nodes[l].max);
                let dr = aabb_dist2(q, self.nodes[r].min, self.nodes[r].max);
                if dl <= dr {
                    stack.push(r);
                    stack.push(l);
                } else {
                    stack.push(l);
                    stack.push(r);
                }
            }
        }
        (best_d2.sqrt(), best_p)
    }

    /// Nearest hit along `origin + t * dir` with `t > t_min`. Returns
    /// `(t, triangle index)`.
    pub fn ray_hit(&self, origin: Vec3, dir: Vec3, t_min: f64) -> Option<(f64, usize)> {
        let inv = Vec3::new(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
        let mut best: Option<(f64, usize)> = None;
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            let t_max = best.map_or(f64::INFINITY, |(t, _)| t);
            if !ray_aabb(origin, inv, node.min, node.max, t_min, t_max) {
                continue;
            }
            if node.count > 0 {
                for (off, t) in self.tris[node.link as usize..(node.link + node.count) as usize]
                    .iter()
                    .enumerate()
                {
                    if let Some(hit) = ray_triangle(origin, dir, t[0], t[1], t[2]) {
                        if hit > t_min && best.map_or(true, |(bt, _)| hit < bt) {
                            best = Some((hit, node.link as usize + off));
                        }
                    }
                }
            } else {
                stack.push(node.link as usize);
                stack.push(ni + 1);
            }
        }
        best
    }
}

fn build_node(
    tris: &[[Vec3; 3]],
    centroids: &[Vec3],
    order: &mut [usize],
    start: usize,
    end: usize,
    nodes: &mut Vec<Node>,
) -> usize {
    let mut min = Vec3::repeat(f64::INFINITY);
    let mut max = Vec3::repeat(f64::NEG_INFINITY);
    for &i in &order[start..end] {
        for v in &tris[i] {
            min = min.inf(v);
            max = max.sup(v);
        }
    }
    let idx = nodes.len();
    let n = end - start;
    if n <= LEAF_SIZE {
        nodes.push(Node { min, max, link: start as u32, count: n as u32 });
        return idx;
    }
    nodes.push(Node { min, max, link: 0, count: 0 });
    // Split at the median centroid along the widest axis.
    let extent = max - min;
    let axis = if extent.x >= extent.y && extent.x >= extent.z {
        0
    } else if extent.y >= extent.z {
        1
    } else {
        2
    };
    let mid = start + n / 2;
    order[start..end].select_nth_unstable_by(n / 2, |&a, &b| {
        centroids[a][axis]
            .partial_cmp(&centroids[b][axis])
            .unwrap()
            .then(a.cmp(&b))
    });
    build_node(tris, centroids, order, start, mid, nodes);
    let right = build_node(tris, centroids, order, mid, end, nodes);
    nodes[idx].link = right as u32;
    idx
}

fn aabb_dist2(q: Vec3, min: Vec3, max: Vec3) -> f64 {
    let mut d2 = 0.0;
    for k in 0..3 {
        let d = (min[k] - q[k]).max(0.0).max(q[k] - max[k]);
        d2 += d * d;
    }
    d2
}

fn ray_aabb(origin: Vec3, inv_dir: Vec3, min: Vec3, max: Vec3, t_min: f64, t_max: f64) -> bool {
    let mut lo = t_min;
    let mut hi = t_max;
    for k in 0..3 {
        let t0 = (min[k] - origin[k]) * inv_dir[k];
        let t1 = (max[k] - origin[k]) * inv_dir[k];
        let (t0, t1) = if t0 <= t1 { (t0, t1) } else { (t1, t0) };
        lo = lo.max(t0);
        hi = hi.min(t1);
        if lo > hi {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tris(n: usize, seed: u64) -> Vec<[Vec3; 3]> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let base = Vec3::new(rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>());
                [
                    base,
                    base + Vec3::new(rng.gen::<f64>() * 0.3, 0.0, 0.0),
                    base + Vec3::new(0.0, rng.gen::<f64>() * 0.3, rng.gen::<f64>() * 0.1),
                ]
            })
            .collect()
    }

    #[test]
    fn closest_matches_brute_force() {
        let tris = random_tris(60, 7);
        let bvh = TriBvh::build(tris.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let q = Vec3::new(
                rng.gen::<f64>() * 2.0 - 0.5,
                rng.gen::<f64>() * 2.0 - 0.5,
                rng.gen::<f64>() * 2.0 - 0.5,
            );
            let brute = tris
                .iter()
                .map(|t| (q - closest_point_on_triangle(q, t[0], t[1], t[2])).norm())
                .fold(f64::INFINITY, f64::min);
            let (d, _) = bvh.closest(q);
            assert!((d - brute).abs() < 1e-12, "bvh {d} vs brute {brute}");
        }
    }

    #[test]
    fn ray_matches_brute_force() {
        let tris = random_tris(60, 9);
        let bvh = TriBvh::build(tris.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..100 {
            let origin = Vec3::new(rng.gen::<f64>(), rng.gen::<f64>(), -2.0);
            let dir = Vec3::new(
                rng.gen::<f64>() - 0.5,
                rng.gen::<f64>() - 0.5,
                1.0,
            )
            .normalize();
            let brute = tris
                .iter()
                .filter_map(|t| ray_triangle(origin, dir, t[0], t[1], t[2]))
                .filter(|&t| t > 1e-9)
                .fold(f64::INFINITY, f64::min);
            match bvh.ray_hit(origin, dir, 1e-9) {
                Some((t, _)) => assert!((t - brute).abs() < 1e-12),
                None => assert!(brute.is_infinite()),
            }
        }
    }

    #[test]
    fn closest_point_vertex_edge_face_cases() {
        let a = Vec3::new(0.0, 0.0, 0.0);
        let b = Vec3::new(1.0, 0.0, 0.0);
        let c = Vec3::new(0.0, 1.0, 0.0);
        // Above the interior: projects onto the face.
        let p = closest_point_on_triangle(Vec3::new(0.2, 0.2, 1.0), a, b, c);
        assert!((p - Vec3::new(0.2, 0.2, 0.0)).norm() < 1e-15);
        // Beyond vertex b.
        let p = closest_point_on_triangle(Vec3::new(2.0, -1.0, 0.0), a, b, c);
        assert!((p - b).norm() < 1e-15);
        // Closest to edge ab.
        let p = closest_point_on_triangle(Vec3::new(0.5, -1.0, 0.0), a, b, c);
        assert!((p - Vec3::new(0.5, 0.0, 0.0)).norm() < 1e-15);
    }
}
