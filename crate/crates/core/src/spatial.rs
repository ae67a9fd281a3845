//! Static k-d tree for exact nearest-neighbor queries in a few dimensions.

pub struct KdTree<'a> {
    points: &'a [f64],
    dims: usize,
    /// Point ids laid out as an implicit balanced tree: the median of each
    /// range is the node, left and right halves its subtrees.
    order: Vec<usize>,
}

impl<'a> KdTree<'a> {
    /// `points` is point-major with `dims` coordinates per point.
    pub fn new(points: &'a [f64], dims: usize) -> Self {
        assert!(dims > 0 && points.len().is_multiple_of(dims));
        let mut order: Vec<usize> = (0..points.len() / dims).collect();
        build(points, dims, &mut order, 0);
        Self {
            points,
            dims,
            order,
        }
    }

    fn coord(&self, id: usize, axis: usize) -> f64 {
        self.points[id * self.dims + axis]
    }

    fn dist2(&self, id: usize, q: &[f64]) -> f64 {
        q.iter()
            .enumerate()
            .map(|(a, &v)| (self.coord(id, a) - v).powi(2))
            .sum()
    }

    /// Distance from point `id` to its nearest other point, or `None` for a lone point.
    pub fn nearest_other(&self, id: usize) -> Option<f64> {
        let q = &self.points[id * self.dims..(id + 1) * self.dims];
        let mut best = (f64::INFINITY, None);
        self.search(0, self.order.len(), 0, q, id, &mut best);
        best.1.map(|_| best.0.sqrt())
    }

    /// Nearest point to an arbitrary query: `(id, distance)`.
    pub fn nearest(&self, q: &[f64]) -> Option<(usize, f64)> {
        let mut best = (f64::INFINITY, None);
        self.search(0, self.order.len(), 0, q, usize::MAX, &mut best);
        best.1.map(|id| (id, best.0.sqrt()))
    }

    fn search(
        &self,
        lo: usize,
        hi: usize,
        depth: usize,
        q: &[f64],
        skip: usize,
        best: &mut (f64, Option<usize>),
    ) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let node = self.order[mid];
        if node != skip {
            let d2 = self.dist2(node, q);
            if d2 < best.0 {
                *best = (d2, Some(node));
            }
        }
        let axis = depth % self.dims;
        let diff = q[axis] - self.coord(node, axis);
        let (near, far) = if diff < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.search(near.0, near.1, depth + 1, q, skip, best);
        if diff * diff <= best.0 {
            self.search(far.0, far.1, depth + 1, q, skip, best);
        }
    }
}

fn build(points: &[f64], dims: usize, ids: &mut [usize], depth: usize) {
    if ids.len() <= 1 {
        return;
    }
    let axis = depth % dims;
    let mid = ids.len() / 2;
    ids.select_nth_unstable_by(mid, |&a, &b| {
        points[a * dims + axis].total_cmp(&points[b * dims + axis])
    });
    let (left, right) = ids.split_at_mut(mid);
    build(points, dims, left, depth + 1);
    build(points, dims, &mut right[1..], depth + 1);
}
