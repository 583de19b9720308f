//! Minimal 3-D kd-tree for k-nearest-neighbor distance queries.

use nalgebra::Vector3;

pub(crate) struct KdTree<'a> {
    points: &'a [Vector3<f64>],
    /// flattened tree: nodes[i] is the point index at tree position i,
    /// median-split layout (left = 2i+1, right = 2i+2 over index ranges)
    order: Vec<u32>,
}

struct Span {
    lo: usize,
    hi: usize,
    axis: usize,
}

impl<'a> KdTree<'a> {
    pub fn build(points: &'a [Vector3<f64>]) -> Self {
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        let mut stack = vec![Span {
            lo: 0,
            hi: points.len(),
            axis: 0,
        }];
        while let Some(Span { lo, hi, axis }) = stack.pop() {
            if hi - lo <= 1 {
                continue;
            }
            let mid = (lo + hi) / 2;
            order[lo..hi].select_nth_unstable_by(mid - lo, |&a, &b| {
                points[a as usize][axis]
                    .total_cmp(&points[b as usize][axis])
                    .then(a.cmp(&b))
            });
            let next = (axis + 1) % 3;
            stack.push(Span {
                lo,
                hi: mid,
                axis: next,
            });
            stack.push(Span {
                lo: mid + 1,
                hi,
                axis: next,
            });
        }
        KdTree { points, order }
    }

    /// Distance to the k-th nearest neighbor of `points[query]`, excluding
    /// the query point itself (by index).
    pub fn kth_neighbor_distance(&self, query: usize, k: usize) -> f64 {
        debug_assert!(k >= 1 && k < self.points.len());
        // bounded max-heap of squared distances
        let mut heap: Vec<f64> = Vec::with_capacity(k + 1);
        let q = self.points[query];
        self.search(0, self.order.len(), 0, query, &q, k, &mut heap);
        heap.iter().fold(0.0_f64, |a, b| a.max(*b)).sqrt()
    }

    #[allow(clippy::too_many_arguments)]
    fn search(
        &self,
        lo: usize,
        hi: usize,
        axis: usize,
        skip: usize,
        q: &Vector3<f64>,
        k: usize,
        heap: &mut Vec<f64>,
    ) {
        if lo >= hi {
            return;
        }
        let mid = (lo + hi) / 2;
        let idx = self.order[mid] as usize;
        if idx != skip {
            let d2 = (self.points[idx] - q).norm_squared();
            if heap.len() < k {
                heap.push(d2);
            } else {
                // replace current max if closer
                let (imax, &max) = heap
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .unwrap();
                if d2 < max {
                    heap[imax] = d2;
                }
            }
        }
        if hi - lo == 1 {
            return;
        }
        let next = (axis + 1) % 3;
        let delta = q[axis] - self.points[idx][axis];
        let (near_lo, near_hi, far_lo, far_hi) = if delta < 0.0 {
            (lo, mid, mid + 1, hi)
        } else {
            (mid + 1, hi, lo, mid)
        };
        self.search(near_lo, near_hi, next, skip, q, k, heap);
        let worst = if heap.len() < k {
            f64::INFINITY
        } else {
            heap.iter().fold(0.0_f64, |a, b| a.max(*b))
        };
        if delta * delta < worst {
            self.search(far_lo, far_hi, next, skip, q, k, heap);
        }
    }
}
