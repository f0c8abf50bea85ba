//! Triangle meshes and a bounding volume hierarchy for ray queries.

use crate::geometry::Vec3;
use std::f64::consts::PI;

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub positions: Vec<Vec3>,
    /// Per-vertex shading normals.
    pub normals: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
}

impl Mesh {
    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn vertices(&self, t: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[t];
        [self.positions[a as usize], self.positions[b as usize], self.positions[c as usize]]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.vertices(t);
        0.5 * (b - a).cross(c - a).length()
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.triangle_count()).map(|t| self.triangle_area(t)).sum()
    }

    pub fn geometric_normal(&self, t: usize) -> Vec3 {
        let [a, b, c] = self.vertices(t);
        (b - a).cross(c - a).normalized()
    }

    /// Interpolated shading normal at barycentrics `(b1, b2)`.
    pub fn shading_normal(&self, t: usize, b1: f64, b2: f64) -> Vec3 {
        let [a, b, c] = self.triangles[t];
        let n = self.normals[a as usize] * (1.0 - b1 - b2) + self.normals[b as usize] * b1 + self.normals[c as usize] * b2;
        let len = n.length();
        if len > 0.0 {
            n / len
        } else {
            self.geometric_normal(t)
        }
    }

    pub fn point_at(&self, t: usize, b1: f64, b2: f64) -> Vec3 {
        let [a, b, c] = self.vertices(t);
        a * (1.0 - b1 - b2) + b * b1 + c * b2
    }

    pub fn bounds(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut hi = -lo;
        for &p in &self.positions {
            lo = lo.min(p);
            hi = hi.max(p);
        }
        (lo, hi)
    }

    /// Latitude-longitude sphere: `slices` segments around, `stacks` bands
    /// from pole to pole. The pole bands are triangle fans, so the mesh has
    /// `2 * slices * (stacks - 1)` triangles.
    pub fn uv_sphere(center: Vec3, radius: f64, slices: usize, stacks: usize) -> Mesh {
        assert!(slices >= 3 && stacks >= 2, "sphere needs at least 3 slices and 2 stacks");
        let mut positions = Vec::new();
        let mut normals = Vec::new();
        let mut push = |n: Vec3| {
            positions.push(center + n * radius);
            normals.push(n);
        };
        push(Vec3::new(0.0, 1.0, 0.0));
        for i in 1..stacks {
            let theta = PI * i as f64 / stacks as f64;
            for j in 0..slices {
                let phi = 2.0 * PI * j as f64 / slices as f64;
                push(Vec3::new(theta.sin() * phi.cos(), theta.cos(), -theta.sin() * phi.sin()));
            }
        }
        push(Vec3::new(0.0, -1.0, 0.0));

        let ring = |i: usize, j: usize| (1 + (i - 1) * slices + j % slices) as u32;
        let bottom = (1 + (stacks - 1) * slices) as u32;
        let mut triangles = Vec::with_capacity(2 * slices * (stacks - 1));
        for j in 0..slices {
            triangles.push([0, ring(1, j), ring(1, j + 1)]);
        }
        for i in 1..stacks - 1 {
            for j in 0..slices {
                let (a, b, c, d) = (ring(i, j), ring(i + 1, j), ring(i + 1, j + 1), ring(i, j + 1));
                triangles.push([a, b, c]);
                triangles.push([a, c, d]);
            }
        }
        for j in 0..slices {
            triangles.push([ring(stacks - 1, j), bottom, ring(stacks - 1, j + 1)]);
        }
        Mesh { positions, normals, triangles }
    }

    /// Low-poly bundled stand-in for a detailed scanned model: a lumpy
    /// sphere with a few low-frequency bumps, deterministic.
    pub fn standin() -> Mesh {
        let mut m = Mesh::uv_sphere(Vec3::ZERO, 1.0, 48, 24);
        let bump = |d: Vec3| 1.0 + 0.18 * (3.0 * d.x).sin() * (2.0 * d.y).cos() + 0.12 * (4.0 * d.z + 1.0).sin() * d.y;
        for p in m.positions.iter_mut() {
            let d = p.normalized();
            *p = d * bump(d);
        }
        m.recompute_normals();
        m
    }

    /// Area-weighted vertex normals from the triangle geometry.
    pub fn recompute_normals(&mut self) {
        let mut acc = vec![Vec3::ZERO; self.positions.len()];
        for t in 0..self.triangle_count() {
            let [a, b, c] = self.vertices(t);
            let n = (b - a).cross(c - a);
            for &v in &self.triangles[t] {
                acc[v as usize] += n;
            }
        }
        self.normals = acc.into_iter().map(|n| if n.length() > 0.0 { n.normalized() } else { Vec3::new(0.0, 0.0, 1.0) }).collect();
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Ray {
    pub origin: Vec3,
    pub dir: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub triangle: usize,
    pub b1: f64,
    pub b2: f64,
}

#[derive(Debug, Clone, Copy)]
struct Aabb {
    lo: Vec3,
    hi: Vec3,
}

impl Aabb {
    fn empty() -> Self {
        Self { lo: Vec3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY), hi: Vec3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY) }
    }

    fn grow(&mut self, p: Vec3) {
        self.lo = self.lo.min(p);
        self.hi = self.hi.max(p);
    }

    fn merge(&mut self, o: &Aabb) {
        self.grow(o.lo);
        self.grow(o.hi);
    }

    #[inline]
    fn hit(&self, origin: Vec3, inv_dir: Vec3, t_max: f64) -> bool {
        let mut t0: f64 = 0.0;
        let mut t1 = t_max;
        for a in 0..3 {
            let mut near = (self.lo[a] - origin[a]) * inv_dir[a];
            let mut far = (self.hi[a] - origin[a]) * inv_dir[a];
            if near > far {
                std::mem::swap(&mut near, &mut far);
            }
            // NaN from 0 * inf leaves the interval unchanged.
            if near > t0 {
                t0 = near;
            }
            if far < t1 {
                t1 = far;
            }
            if t0 > t1 {
                return false;
            }
        }
        true
    }
}

#[derive(Debug, Clone, Copy)]
struct Node {
    bounds: Aabb,
    /// Leaf: first index into `order`; interior: index of the right child
    /// (the left child directly follows the node).
    offset: usize,
    count: usize,
}

/// Median-split BVH over a mesh's triangles.
#[derive(Debug, Clone)]
pub struct Bvh {
    nodes: Vec<Node>,
    order: Vec<usize>,
}

const LEAF_SIZE: usize = 4;

impl Bvh {
    pub fn build(mesh: &Mesh) -> Bvh {
        let n = mesh.triangle_count();
        let mut order: Vec<usize> = (0..n).collect();
        let centroids: Vec<Vec3> = (0..n)
            .map(|t| {
                let [a, b, c] = mesh.vertices(t);
                (a + b + c) / 3.0
            })
            .collect();
        let boxes: Vec<Aabb> = (0..n)
            .map(|t| {
                let mut bb = Aabb::empty();
                mesh.vertices(t).iter().for_each(|&p| bb.grow(p));
                bb
            })
            .collect();
        let mut nodes = Vec::with_capacity(2 * n / LEAF_SIZE + 1);
        if n > 0 {
            build_node(&mut nodes, &mut order, 0, n, &centroids, &boxes);
        }
        Bvh { nodes, order }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn memory_bytes(&self) -> usize {
        self.nodes.len() * std::mem::size_of::<Node>() + self.order.len() * std::mem::size_of::<usize>()
    }

    /// Closest hit with `t` in `(t_min, t_max)`.
    pub fn intersect(&self, mesh: &Mesh, ray: &Ray, t_min: f64, t_max: f64) -> Option<Hit> {
        self.traverse(mesh, ray, t_min, t_max, false)
    }

    /// Whether anything is hit with `t` in `(t_min, t_max)`.
    pub fn occluded(&self, mesh: &Mesh, ray: &Ray, t_min: f64, t_max: f64) -> bool {
        self.traverse(mesh, ray, t_min, t_max, true).is_some()
    }

    fn traverse(&self, mesh: &Mesh, ray: &Ray, t_min: f64, t_max: f64, any_hit: bool) -> Option<Hit> {
        if self.nodes.is_empty() {
            return None;
        }
        let inv = Vec3::new(1.0 / ray.dir.x, 1.0 / ray.dir.y, 1.0 / ray.dir.z);
        let mut best: Option<Hit> = None;
        let mut closest = t_max;
        let mut stack = [0usize; 64];
        let mut sp = 1;
        while sp > 0 {
            sp -= 1;
            let idx = stack[sp];
            let node = &self.nodes[idx];
            if !node.bounds.hit(ray.origin, inv, closest) {
                continue;
            }
            if node.count > 0 {
                for &t in &self.order[node.offset..node.offset + node.count] {
                    if let Some((d, b1, b2)) = intersect_triangle(mesh, t, ray) {
                        if d > t_min && d < closest {
                            closest = d;
                            best = Some(Hit { t: d, triangle: t, b1, b2 });
                            if any_hit {
                                return best;
                            }
                        }
                    }
                }
            } else {
                stack[sp] = idx + 1;
                stack[sp + 1] = node.offset;
                sp += 2;
            }
        }
        best
    }
}

fn build_node(nodes: &mut Vec<Node>, order: &mut [usize], start: usize, end: usize, centroids: &[Vec3], boxes: &[Aabb]) -> usize {
    let mut bounds = Aabb::empty();
    let mut cbounds = Aabb::empty();
    for &t in &order[start..end] {
        bounds.merge(&boxes[t]);
        cbounds.grow(centroids[t]);
    }
    let idx = nodes.len();
    let count = end - start;
    if count <= LEAF_SIZE {
        nodes.push(Node { bounds, offset: start, count });
        return idx;
    }
    let ext = cbounds.hi - cbounds.lo;
    let axis = if ext.x >= ext.y && ext.x >= ext.z {
        0
    } else if ext.y >= ext.z {
        1
    } else {
        2
    };
    let mid = start + count / 2;
    order[start..end].select_nth_unstable_by(count / 2, |&a, &b| {
        centroids[a][axis].total_cmp(&centroids[b][axis]).then(a.cmp(&b))
    });
    nodes.push(Node { bounds, offset: 0, count: 0 });
    build_node(nodes, order, start, mid, centroids, boxes);
    let right = build_node(nodes, order, mid, end, centroids, boxes);
    nodes[idx].offset = right;
    idx
}

/// Moller-Trumbore; returns `(t, b1, b2)`.
#[inline]
fn intersect_triangle(mesh: &Mesh, t: usize, ray: &Ray) -> Option<(f64, f64, f64)> {
    let [a, b, c] = mesh.vertices(t);
    let e1 = b - a;
    let e2 = c - a;
    let p = ray.dir.cross(e2);
    let det = e1.dot(p);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv = 1.0 / det;
    let s = ray.origin - a;
    let b1 = s.dot(p) * inv;
    if !(0.0..=1.0).contains(&b1) {
        return None;
    }
    let q = s.cross(e1);
    let b2 = ray.dir.dot(q) * inv;
    if b2 < 0.0 || b1 + b2 > 1.0 {
        return None;
    }
    Some((e2.dot(q) * inv, b1, b2))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_triangle_count_and_area() {
        let m = Mesh::uv_sphere(Vec3::ZERO, 1.0, 64, 32);
        assert_eq!(m.triangle_count(), 2 * 64 * 31);
        assert_eq!(m.triangle_count(), 3968);
        let area = m.surface_area();
        assert!((area - 4.0 * PI).abs() / (4.0 * PI) < 0.01, "area {area}");
        // Consistent outward winding.
        for t in 0..m.triangle_count() {
            let [a, b, c] = m.vertices(t);
            assert!(m.geometric_normal(t).dot((a + b + c) / 3.0) > 0.0, "triangle {t} faces inward");
        }
    }

    #[test]
    fn bvh_matches_brute_force() {
        let m = Mesh::standin();
        let bvh = Bvh::build(&m);
        let mut k = 0u64;
        for i in 0..40 {
            for j in 0..40 {
                k += 1;
                let origin = Vec3::new(-3.0 + i as f64 * 0.15, -3.0 + j as f64 * 0.15, 5.0);
                let ray = Ray { origin, dir: Vec3::new(0.01 * (k % 7) as f64, -0.02, -1.0).normalized() };
                let brute = (0..m.triangle_count())
                    .filter_map(|t| intersect_triangle(&m, t, &ray).map(|(d, b1, b2)| Hit { t: d, triangle: t, b1, b2 }))
                    .filter(|h| h.t > 1e-9)
                    .min_by(|a, b| a.t.total_cmp(&b.t));
                let got = bvh.intersect(&m, &ray, 1e-9, f64::INFINITY);
                assert_eq!(got.map(|h| h.triangle), brute.map(|h| h.triangle));
            }
        }
    }

    #[test]
    fn occlusion_query() {
        let m = Mesh::uv_sphere(Vec3::ZERO, 1.0, 16, 8);
        let bvh = Bvh::build(&m);
        let ray = Ray { origin: Vec3::new(0.0, 0.0, 5.0), dir: Vec3::new(0.0, 0.0, -1.0) };
        assert!(bvh.occluded(&m, &ray, 1e-6, 10.0));
        assert!(!bvh.occluded(&m, &ray, 1e-6, 3.0));
    }
}
