//! Bucketed kd-tree over mixture centers, used to skip centers whose kernel
//! weight is negligible at a query point.

const LEAF_SIZE: usize = 16;
const NO_CHILD: usize = usize::MAX;

#[derive(Debug, Clone)]
struct Node {
    start: usize,
    end: usize,
    left: usize,
    right: usize,
    split_dim: usize,
    split_val: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct KdTree {
    dim: usize,
    /// Centers in tree order, `dim` values each.
    points: Vec<f64>,
    nodes: Vec<Node>,
    bbox_min: Vec<f64>,
    bbox_max: Vec<f64>,
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl KdTree {
    /// `points` is column-major: `dim` values per center.
    pub(crate) fn build(dim: usize, points: &[f64]) -> Self {
        let n = points.len() / dim;
        let mut order: Vec<usize> = (0..n).collect();
        let mut tree = Self {
            dim,
            points: Vec::with_capacity(points.len()),
            nodes: Vec::new(),
            bbox_min: Vec::new(),
            bbox_max: Vec::new(),
        };
        tree.build_node(points, &mut order, 0, n);
        for &i in &order {
            tree.points
                .extend_from_slice(&points[i * dim..(i + 1) * dim]);
        }
        tree
    }

    fn build_node(&mut self, src: &[f64], order: &mut [usize], start: usize, end: usize) -> usize {
        let d = self.dim;
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for &i in &order[start..end] {
            for k in 0..d {
                let v = src[i * d + k];
                lo[k] = lo[k].min(v);
                hi[k] = hi[k].max(v);
            }
        }
        let (split_dim, extent) =
            (0..d)
                .map(|k| (k, hi[k] - lo[k]))
                .fold(
                    (0, f64::NEG_INFINITY),
                    |best, c| if c.1 > best.1 { c } else { best },
                );

        let id = self.nodes.len();
        self.nodes.push(Node {
            start,
            end,
            left: NO_CHILD,
            right: NO_CHILD,
            split_dim,
            split_val: 0.0,
        });
        self.bbox_min.extend_from_slice(&lo);
        self.bbox_max.extend_from_slice(&hi);

        if end - start <= LEAF_SIZE || extent <= 0.0 {
            return id;
        }
        let mid = start + (end - start) / 2;
        order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            src[a * d + split_dim].total_cmp(&src[b * d + split_dim])
        });
        let split_val = src[order[mid] * d + split_dim];
        let left = self.build_node(src, order, start, mid);
        let right = self.build_node(src, order, mid, end);
        let node = &mut self.nodes[id];
        node.left = left;
        node.right = right;
        node.split_val = split_val;
        id
    }

    fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    fn box_sq_dist(&self, node: usize, t: &[f64]) -> f64 {
        let d = self.dim;
        let lo = &self.bbox_min[node * d..(node + 1) * d];
        let hi = &self.bbox_max[node * d..(node + 1) * d];
        let mut s = 0.0;
        for k in 0..d {
            let gap = (lo[k] - t[k]).max(t[k] - hi[k]).max(0.0);
            s += gap * gap;
        }
        s
    }

    /// Squared distance from `t` to some center near it (an upper bound on
    /// the nearest-center squared distance).
    pub(crate) fn nearby_sq_dist(&self, t: &[f64]) -> f64 {
        let mut node = 0;
        while self.nodes[node].left != NO_CHILD {
            let n = &self.nodes[node];
            node = if t[n.split_dim] < n.split_val {
                n.left
            } else {
                n.right
            };
        }
        let n = &self.nodes[node];
        (n.start..n.end)
            .map(|i| sq_dist(self.point(i), t))
            .fold(f64::INFINITY, f64::min)
    }

    /// Appends to `out` the squared distances from `t` to every center in each
    /// leaf whose bounding box lies within `radius_sq` of `t`. With
    /// `strict`, centers outside the radius are dropped as well.
    pub(crate) fn collect_sq_dists(
        &self,
        t: &[f64],
        radius_sq: f64,
        strict: bool,
        out: &mut Vec<f64>,
    ) {
        let mut stack = vec![0usize];
        while let Some(node) = stack.pop() {
            if self.box_sq_dist(node, t) > radius_sq {
                continue;
            }
            let n = &self.nodes[node];
            if n.left == NO_CHILD {
                for i in n.start..n.end {
                    let q = sq_dist(self.point(i), t);
                    if !strict || q <= radius_sq {
                        out.push(q);
                    }
                }
            } else {
                stack.push(n.right);
                stack.push(n.left);
            }
        }
    }
}

impl KdTree {
    /// Appends to `out` the coordinates of every center within `radius_sq`
    /// of `t`, in tree order.
    pub(crate) fn collect_points(&self, t: &[f64], radius_sq: f64, out: &mut Vec<f64>) {
        let mut stack = vec![0usize];
        while let Some(node) = stack.pop() {
            if self.box_sq_dist(node, t) > radius_sq {
                continue;
            }
            let n = &self.nodes[node];
            if n.left == NO_CHILD {
                for i in n.start..n.end {
                    let p = self.point(i);
                    if sq_dist(p, t) <= radius_sq {
                        out.extend_from_slice(p);
                    }
                }
            } else {
                stack.push(n.right);
                stack.push(n.left);
            }
        }
    }
}
