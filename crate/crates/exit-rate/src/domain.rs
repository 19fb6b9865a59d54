//! Bounded open domains: membership, signed boundary distance, delta
//! inflation/shrinkage, closed-form projection, and interior grids.
//!
//! Three geometries are supported — interval, axis-aligned box, and ball —
//! because all three admit exact signed distances and exact projections onto
//! their closures, which the constrained action minimizer relies on. Box
//! corners are not C2-smooth; they are accepted as a test-geometry
//! idealization.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    /// Open interval (a, b), dimension 1.
    Interval { a: f64, b: f64 },
    /// Open axis-aligned box, product of (lo_j, hi_j).
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// Open Euclidean ball.
    Ball { center: Vec<f64>, radius: f64 },
}

impl Domain {
    pub fn interval(a: f64, b: f64) -> Result<Self> {
        if !(b > a) {
            return Err(Error::Domain(format!("interval ({a}, {b}) has empty interior")));
        }
        Ok(Domain::Interval { a, b })
    }

    pub fn aligned_box(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(Error::Domain("box bounds must be nonempty and equal length".into()));
        }
        for (l, h) in lo.iter().zip(&hi) {
            if !(h > l) {
                return Err(Error::Domain(format!("box edge ({l}, {h}) has empty interior")));
            }
        }
        Ok(Domain::Box { lo, hi })
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        if center.is_empty() {
            return Err(Error::Domain("ball center must be nonempty".into()));
        }
        if !(radius > 0.0) {
            return Err(Error::Domain(format!("ball radius {radius} must be positive")));
        }
        Ok(Domain::Ball { center, radius })
    }

    pub fn dim(&self) -> usize {
        match self {
            Domain::Interval { .. } => 1,
            Domain::Box { lo, .. } => lo.len(),
            Domain::Ball { center, .. } => center.len(),
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::shape("x", format!("length {}", self.dim()), format!("{}", x.len())));
        }
        Ok(())
    }

    /// Strict interior membership.
    pub fn contains(&self, x: &[f64]) -> Result<bool> {
        self.check_dim(x)?;
        Ok(self.signed_distance_unchecked(x) > 0.0)
    }

    /// Signed boundary distance: positive inside, zero on the boundary,
    /// negative outside. Exact (Euclidean) for all three geometries.
    pub fn boundary_distance(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.signed_distance_unchecked(x))
    }

    pub(crate) fn signed_distance_unchecked(&self, x: &[f64]) -> f64 {
        match self {
            Domain::Interval { a, b } => (x[0] - a).min(b - x[0]),
            Domain::Box { lo, hi } => {
                // q_j > 0 means outside along axis j
                let mut outside_sq = 0.0;
                let mut inside = f64::NEG_INFINITY;
                for j in 0..lo.len() {
                    let q = (lo[j] - x[j]).max(x[j] - hi[j]);
                    if q > 0.0 {
                        outside_sq += q * q;
                    }
                    inside = inside.max(q);
                }
                if outside_sq > 0.0 {
                    -outside_sq.sqrt()
                } else {
                    -inside
                }
            }
            Domain::Ball { center, radius } => {
                let dist = x
                    .iter()
                    .zip(center)
                    .map(|(xi, ci)| (xi - ci) * (xi - ci))
                    .sum::<f64>()
                    .sqrt();
                radius - dist
            }
        }
    }

    /// Offsets every face by `delta`: positive grows the domain, negative
    /// shrinks it. Errs when shrinkage meets or exceeds the inradius.
    pub fn inflate(&self, delta: f64) -> Result<Domain> {
        match self {
            Domain::Interval { a, b } => Domain::interval(a - delta, b + delta).map_err(|_| {
                Error::Domain(format!("shrinking ({a}, {b}) by {} empties it", -delta))
            }),
            Domain::Box { lo, hi } => {
                let lo2: Vec<f64> = lo.iter().map(|v| v - delta).collect();
                let hi2: Vec<f64> = hi.iter().map(|v| v + delta).collect();
                Domain::aligned_box(lo2, hi2)
                    .map_err(|_| Error::Domain(format!("shrinking box by {} empties it", -delta)))
            }
            Domain::Ball { center, radius } => Domain::ball(center.clone(), radius + delta)
                .map_err(|_| Error::Domain(format!("shrinking ball by {} empties it", -delta))),
        }
    }

    /// Largest inscribed-ball radius; the shrink budget.
    pub fn inradius(&self) -> f64 {
        match self {
            Domain::Interval { a, b } => (b - a) / 2.0,
            Domain::Box { lo, hi } => lo
                .iter()
                .zip(hi)
                .map(|(l, h)| (h - l) / 2.0)
                .fold(f64::INFINITY, f64::min),
            Domain::Ball { radius, .. } => *radius,
        }
    }

    /// Euclidean projection of `x` onto the closure of the domain.
    pub fn project(&self, x: &mut [f64]) {
        match self {
            Domain::Interval { a, b } => x[0] = x[0].clamp(*a, *b),
            Domain::Box { lo, hi } => {
                for j in 0..lo.len() {
                    x[j] = x[j].clamp(lo[j], hi[j]);
                }
            }
            Domain::Ball { center, radius } => {
                let dist = x
                    .iter()
                    .zip(center)
                    .map(|(xi, ci)| (xi - ci) * (xi - ci))
                    .sum::<f64>()
                    .sqrt();
                if dist > *radius {
                    let scale = radius / dist;
                    for j in 0..center.len() {
                        x[j] = center[j] + (x[j] - center[j]) * scale;
                    }
                }
            }
        }
    }

    /// A point with maximal boundary distance (interval/box midpoint, ball
    /// center).
    pub fn center_point(&self) -> Vec<f64> {
        match self {
            Domain::Interval { a, b } => vec![(a + b) / 2.0],
            Domain::Box { lo, hi } => lo.iter().zip(hi).map(|(l, h)| (l + h) / 2.0).collect(),
            Domain::Ball { center, .. } => center.clone(),
        }
    }

    /// Uniform interior grid with `spec.points_per_axis` nodes per axis,
    /// lexicographically ordered by multi-index (last axis fastest).
    ///
    /// Intervals and boxes place nodes at `lo + j*h`, `h = edge/(n+1)`,
    /// `j = 1..n`. Balls use the grid of the bounding box masked by strict
    /// membership.
    pub fn interior_grid(&self, spec: &GridSpec) -> Result<InteriorGrid> {
        spec.validate()?;
        let n = spec.points_per_axis;
        let (lo, hi): (Vec<f64>, Vec<f64>) = match self {
            Domain::Interval { a, b } => (vec![*a], vec![*b]),
            Domain::Box { lo, hi } => (lo.clone(), hi.clone()),
            Domain::Ball { center, radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
        };
        let d = lo.len();
        let spacing: Vec<f64> = lo
            .iter()
            .zip(&hi)
            .map(|(l, h)| (h - l) / (n as f64 + 1.0))
            .collect();

        let lattice_size = n.pow(d as u32);
        let mut lattice_to_interior = vec![None; lattice_size];
        let mut points = Vec::new();
        let mut multi_indices = Vec::new();
        let mut idx = vec![0usize; d];
        for flat in 0..lattice_size {
            // decode flat index, last axis fastest
            let mut rem = flat;
            for j in (0..d).rev() {
                idx[j] = rem % n;
                rem /= n;
            }
            let point: Vec<f64> = (0..d)
                .map(|j| lo[j] + (idx[j] as f64 + 1.0) * spacing[j])
                .collect();
            if self.contains(&point)? {
                lattice_to_interior[flat] = Some(points.len());
                points.push(point);
                multi_indices.push(idx.clone());
            }
        }
        if points.is_empty() {
            return Err(Error::Domain("grid has no interior points".into()));
        }
        Ok(InteriorGrid {
            points,
            multi_indices,
            lattice_to_interior,
            spacing,
            points_per_axis: n,
            dim: d,
        })
    }
}

/// Grid resolution request: at least 3 nodes per axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSpec {
    pub points_per_axis: usize,
}

impl GridSpec {
    pub fn new(points_per_axis: usize) -> Self {
        GridSpec { points_per_axis }
    }

    fn validate(&self) -> Result<()> {
        if self.points_per_axis < 3 {
            return Err(Error::InvalidInput(format!(
                "grid too coarse: {} points per axis (minimum 3)",
                self.points_per_axis
            )));
        }
        Ok(())
    }
}

/// Interior nodes of a domain grid, with the lattice bookkeeping the
/// generator assembly needs to find neighbors.
#[derive(Debug, Clone)]
pub struct InteriorGrid {
    points: Vec<Vec<f64>>,
    multi_indices: Vec<Vec<usize>>,
    lattice_to_interior: Vec<Option<usize>>,
    spacing: Vec<f64>,
    points_per_axis: usize,
    dim: usize,
}

impl InteriorGrid {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i]
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Interior index of the lattice neighbor of node `i` offset by one step
    /// along `axis` (`forward` or backward). `None` means the neighbor is a
    /// Dirichlet (boundary or exterior) node.
    pub fn neighbor(&self, i: usize, axis: usize, forward: bool) -> Option<usize> {
        let mut idx = self.multi_indices[i].clone();
        if forward {
            if idx[axis] + 1 >= self.points_per_axis {
                return None;
            }
            idx[axis] += 1;
        } else {
            if idx[axis] == 0 {
                return None;
            }
            idx[axis] -= 1;
        }
        self.lattice_to_interior[self.flatten(&idx)]
    }

    /// Diagonal neighbor offset by one step along two axes at once (mixed
    /// derivative stencils).
    pub fn diagonal_neighbor(
        &self,
        i: usize,
        axis_a: usize,
        forward_a: bool,
        axis_b: usize,
        forward_b: bool,
    ) -> Option<usize> {
        let mut idx = self.multi_indices[i].clone();
        for (axis, forward) in [(axis_a, forward_a), (axis_b, forward_b)] {
            if forward {
                if idx[axis] + 1 >= self.points_per_axis {
                    return None;
                }
                idx[axis] += 1;
            } else {
                if idx[axis] == 0 {
                    return None;
                }
                idx[axis] -= 1;
            }
        }
        self.lattice_to_interior[self.flatten(&idx)]
    }

    fn flatten(&self, idx: &[usize]) -> usize {
        let mut flat = 0;
        for j in 0..self.dim {
            flat = flat * self.points_per_axis + idx[j];
        }
        flat
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;
    use approx::assert_relative_eq;

    #[test]
    fn interval_membership() {
        let d = Domain::interval(-1.0, 1.0).unwrap();
        assert!(d.contains(&[0.0]).unwrap());
        assert!(!d.contains(&[1.0]).unwrap(), "boundary excluded");
        assert!(!d.contains(&[-1.5]).unwrap());
    }

    #[test]
    fn ball_membership() {
        let d = Domain::ball(vec![0.0, 0.0], 2.0).unwrap();
        assert!(d.contains(&[1.9, 0.0]).unwrap());
        assert!(!d.contains(&[2.0, 0.0]).unwrap());
    }

    #[test]
    fn signed_distances() {
        let i = Domain::interval(-1.0, 1.0).unwrap();
        assert_relative_eq!(i.boundary_distance(&[0.25]).unwrap(), 0.75);
        let b = Domain::ball(vec![0.0, 0.0], 1.0).unwrap();
        assert_relative_eq!(b.boundary_distance(&[2.0, 0.0]).unwrap(), -1.0);
        let bx = Domain::aligned_box(vec![0.0, 0.0], vec![2.0, 4.0]).unwrap();
        assert_relative_eq!(bx.boundary_distance(&[1.0, 1.0]).unwrap(), 1.0);
        // outside a box corner: Euclidean distance
        assert_relative_eq!(
            bx.boundary_distance(&[-3.0, -4.0]).unwrap(),
            -5.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn inflate_examples() {
        let i = Domain::interval(-1.0, 1.0).unwrap();
        assert_eq!(i.inflate(0.1).unwrap(), Domain::Interval { a: -1.1, b: 1.1 });
        let b = Domain::ball(vec![0.0], 1.0).unwrap();
        assert_eq!(
            b.inflate(-0.25).unwrap(),
            Domain::Ball { center: vec![0.0], radius: 0.75 }
        );
        assert!(i.inflate(-1.5).is_err(), "shrink past the inradius");
    }

    #[test]
    fn inflate_round_trip() {
        let rng = CounterRng::new(9, 0);
        let domains = [
            Domain::interval(-1.0, 2.0).unwrap(),
            Domain::aligned_box(vec![0.0, -1.0], vec![2.0, 4.0]).unwrap(),
            Domain::ball(vec![0.5, 0.5], 1.5).unwrap(),
        ];
        for (t, dom) in domains.iter().enumerate() {
            for k in 0..200u64 {
                let delta = 0.4 * rng.uniform(1000 * t as u64 + k) - 0.2;
                let back = dom.inflate(delta).unwrap().inflate(-delta).unwrap();
                match (dom, &back) {
                    (Domain::Interval { a, b }, Domain::Interval { a: a2, b: b2 }) => {
                        assert_relative_eq!(a, a2, epsilon = 1e-12);
                        assert_relative_eq!(b, b2, epsilon = 1e-12);
                    }
                    (Domain::Box { lo, hi }, Domain::Box { lo: lo2, hi: hi2 }) => {
                        for (v, w) in lo.iter().zip(lo2).chain(hi.iter().zip(hi2)) {
                            assert_relative_eq!(v, w, epsilon = 1e-12);
                        }
                    }
                    (Domain::Ball { radius, .. }, Domain::Ball { radius: r2, .. }) => {
                        assert_relative_eq!(radius, r2, epsilon = 1e-12);
                    }
                    _ => panic!("kind changed"),
                }
            }
        }
    }

    #[test]
    fn membership_iff_positive_distance_on_random_points() {
        let domains = [
            Domain::interval(-1.0, 2.0).unwrap(),
            Domain::aligned_box(vec![0.0, -1.0], vec![2.0, 4.0]).unwrap(),
            Domain::ball(vec![0.5, 0.5], 1.5).unwrap(),
        ];
        let rng = CounterRng::new(21, 3);
        for (t, dom) in domains.iter().enumerate() {
            let d = dom.dim();
            for k in 0..1000u64 {
                let x: Vec<f64> = (0..d)
                    .map(|j| 8.0 * rng.uniform(10_000 * t as u64 + k * d as u64 + j as u64) - 4.0)
                    .collect();
                let inside = dom.contains(&x).unwrap();
                let dist = dom.boundary_distance(&x).unwrap();
                assert_eq!(inside, dist > 0.0, "x={x:?} dist={dist}");
            }
        }
    }

    #[test]
    fn interval_grid() {
        let dom = Domain::interval(0.0, 1.0).unwrap();
        let grid = dom.interior_grid(&GridSpec::new(3)).unwrap();
        assert_eq!(grid.len(), 3);
        assert_relative_eq!(grid.point(0)[0], 0.25);
        assert_relative_eq!(grid.point(1)[0], 0.5);
        assert_relative_eq!(grid.point(2)[0], 0.75);
        assert_relative_eq!(grid.spacing()[0], 0.25);
    }

    #[test]
    fn box_grid_order() {
        let dom = Domain::aligned_box(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let grid = dom.interior_grid(&GridSpec::new(3)).unwrap();
        assert_eq!(grid.len(), 9);
        assert_eq!(grid.point(0), &[0.25, 0.25]);
        assert_eq!(grid.point(1), &[0.25, 0.5], "last axis fastest");
    }

    #[test]
    fn ball_grid_is_masked_box_grid() {
        // oracle: enumerate the bounding-box lattice and keep |x| < r
        let count_by_enumeration = |n: usize, r: f64| -> usize {
            let h = 2.0 * r / (n as f64 + 1.0);
            let mut count = 0;
            for i in 0..n {
                for j in 0..n {
                    let x = -r + (i as f64 + 1.0) * h;
                    let y = -r + (j as f64 + 1.0) * h;
                    if (x * x + y * y).sqrt() < r {
                        count += 1;
                    }
                }
            }
            count
        };
        let dom = Domain::ball(vec![0.0, 0.0], 1.0).unwrap();
        for n in [3usize, 5, 7, 9] {
            let expected = count_by_enumeration(n, 1.0);
            let grid = dom.interior_grid(&GridSpec::new(n)).unwrap();
            assert_eq!(grid.len(), expected, "n={n}");
        }
        // at n=7 the corner nodes (+/-0.75, +/-0.75) fall outside
        assert_eq!(count_by_enumeration(7, 1.0), 45);
    }

    #[test]
    fn grid_points_are_interior() {
        let domains = [
            Domain::interval(-1.0, 2.0).unwrap(),
            Domain::aligned_box(vec![0.0, -1.0], vec![2.0, 4.0]).unwrap(),
            Domain::ball(vec![0.5, 0.5], 1.5).unwrap(),
        ];
        for dom in &domains {
            let grid = dom.interior_grid(&GridSpec::new(9)).unwrap();
            for p in grid.points() {
                assert!(dom.contains(p).unwrap());
            }
        }
    }

    #[test]
    fn coarse_grid_rejected() {
        let dom = Domain::interval(0.0, 1.0).unwrap();
        assert!(dom.interior_grid(&GridSpec::new(2)).is_err());
    }

    #[test]
    fn projection_is_identity_inside_and_lands_on_closure() {
        let domains = [
            Domain::interval(-1.0, 2.0).unwrap(),
            Domain::aligned_box(vec![0.0, -1.0], vec![2.0, 4.0]).unwrap(),
            Domain::ball(vec![0.5, 0.5], 1.5).unwrap(),
        ];
        let rng = CounterRng::new(33, 0);
        for (t, dom) in domains.iter().enumerate() {
            let d = dom.dim();
            for k in 0..500u64 {
                let x: Vec<f64> = (0..d)
                    .map(|j| 10.0 * rng.uniform(9000 * t as u64 + k * d as u64 + j as u64) - 5.0)
                    .collect();
                let mut y = x.clone();
                dom.project(&mut y);
                let dist = dom.boundary_distance(&y).unwrap();
                assert!(dist >= -1e-12, "projection outside: {y:?} dist {dist}");
                if dom.contains(&x).unwrap() {
                    assert_eq!(x, y, "interior points are fixed");
                }
            }
        }
    }
}
