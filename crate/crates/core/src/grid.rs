//! Uniform periodic grid, domain partition, time grid and time windows.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Uniform grid on `[-L, L)` with `N` nodes, identified periodically.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    half_width: f64,
    point_count: usize,
    spacing: f64,
    dim: usize,
}

/// Build a grid on `[-L, L)`. `n` is the ambient dimension; PDE solves use `n = 1`.
pub fn build_grid(half_width: f64, point_count: usize, dim: usize) -> Result<Grid> {
    if point_count % 2 == 1 {
        return Err(Error::OddPointCount(point_count));
    }
    if point_count < 8 {
        return Err(Error::InvalidGrid(format!("need N >= 8, got {point_count}")));
    }
    if !(half_width > 0.0 && half_width.is_finite()) {
        return Err(Error::InvalidGrid(format!("need L > 0, got {half_width}")));
    }
    if dim == 0 {
        return Err(Error::InvalidGrid("dimension must be positive".into()));
    }
    Ok(Grid {
        half_width,
        point_count,
        spacing: 2.0 * half_width / point_count as f64,
        dim,
    })
}

impl Grid {
    pub fn half_width(&self) -> f64 {
        self.half_width
    }
    pub fn len(&self) -> usize {
        self.point_count
    }
    pub fn is_empty(&self) -> bool {
        self.point_count == 0
    }
    pub fn spacing(&self) -> f64 {
        self.spacing
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn node(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.spacing
    }
    pub fn nodes(&self) -> Vec<f64> {
        (0..self.point_count).map(|i| self.node(i)).collect()
    }
    /// Angular wavenumber of DFT index `k` in the symmetric range `(-N/2, N/2]`.
    pub fn wavenumber(&self, k: usize) -> f64 {
        let n = self.point_count as i64;
        let k = k as i64;
        let signed = if k <= n / 2 { k } else { k - n };
        std::f64::consts::PI * signed as f64 / self.half_width
    }
}

/// Open interval `(a, b)`; node membership is the half-open test `a < x <= b`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub a: f64,
    pub b: f64,
}

impl Interval {
    pub fn new(a: f64, b: f64) -> Self {
        Interval { a, b }
    }
    pub fn contains(&self, x: f64) -> bool {
        self.a < x && x <= self.b
    }
    pub fn length(&self) -> f64 {
        self.b - self.a
    }
    /// Distance between closures; zero when they intersect.
    pub fn closure_distance(&self, other: &Interval) -> f64 {
        (other.a - self.b).max(self.a - other.b).max(0.0)
    }
    fn label(&self) -> String {
        format!("({}, {})", self.a, self.b)
    }
}

/// Node index sets for Ω, the observation sets and the remaining exterior.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainPartition {
    pub grid: Grid,
    pub omega: Interval,
    pub w1: Interval,
    pub w2: Interval,
    pub idx_omega: Vec<usize>,
    pub idx_w1: Vec<usize>,
    pub idx_w2: Vec<usize>,
    /// Exterior nodes outside `W1 ∪ W2`.
    pub idx_exterior_rest: Vec<usize>,
    /// All nodes outside Ω, ascending.
    pub idx_exterior: Vec<usize>,
    /// Distance between the closure of Ω and the closures of W1, W2.
    pub gap: f64,
    /// Smallest distance between an Ω node and a W1 or W2 node.
    pub node_gap: f64,
}

pub fn partition_domain(
    grid: &Grid,
    omega: Interval,
    w1: Interval,
    w2: Interval,
) -> Result<DomainPartition> {
    let l = grid.half_width();
    for (name, iv) in [("omega", omega), ("w1", w1), ("w2", w2)] {
        if !(iv.a < iv.b) || iv.a <= -l || iv.b >= l {
            return Err(Error::InvalidParameter(format!(
                "{name} = {} must be a nonempty interval inside (-{l}, {l})",
                iv.label()
            )));
        }
    }
    for w in [w1, w2] {
        if omega.closure_distance(&w) <= 0.0 {
            return Err(Error::Overlap(omega.label(), w.label()));
        }
    }
    let members = |iv: &Interval| -> Result<Vec<usize>> {
        let idx: Vec<usize> = (0..grid.len()).filter(|&i| iv.contains(grid.node(i))).collect();
        if idx.is_empty() {
            Err(Error::EmptySet(iv.label()))
        } else {
            Ok(idx)
        }
    };
    let idx_omega = members(&omega)?;
    let idx_w1 = members(&w1)?;
    let idx_w2 = members(&w2)?;
    let idx_exterior: Vec<usize> = (0..grid.len())
        .filter(|&i| !omega.contains(grid.node(i)))
        .collect();
    let idx_exterior_rest = idx_exterior
        .iter()
        .copied()
        .filter(|i| !idx_w1.contains(i) && !idx_w2.contains(i))
        .collect();
    let gap = omega.closure_distance(&w1).min(omega.closure_distance(&w2));
    let node_gap = min_node_distance(grid, &idx_omega, &idx_w1)
        .min(min_node_distance(grid, &idx_omega, &idx_w2));
    Ok(DomainPartition {
        grid: grid.clone(),
        omega,
        w1,
        w2,
        idx_omega,
        idx_w1,
        idx_w2,
        idx_exterior_rest,
        idx_exterior,
        gap,
        node_gap,
    })
}

fn min_node_distance(grid: &Grid, a: &[usize], b: &[usize]) -> f64 {
    let mut best = f64::INFINITY;
    for &i in a {
        for &j in b {
            best = best.min((grid.node(i) - grid.node(j)).abs());
        }
    }
    best
}

impl DomainPartition {
    pub fn spacing(&self) -> f64 {
        self.grid.spacing()
    }
    /// Rectangle-rule integral of nodal values over an index set.
    pub fn integrate(&self, idx: &[usize], values: impl Fn(usize) -> f64) -> f64 {
        self.spacing() * idx.iter().map(|&i| values(i)).sum::<f64>()
    }
    /// Position of each exterior node in `idx_exterior`, or `None` for Ω nodes.
    pub fn exterior_position(&self) -> Vec<Option<usize>> {
        let mut pos = vec![None; self.grid.len()];
        for (k, &i) in self.idx_exterior.iter().enumerate() {
            pos[i] = Some(k);
        }
        pos
    }
}

/// Uniform time grid on `[0, T]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
    dt: f64,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) || steps == 0 {
            return Err(Error::InvalidParameter(format!(
                "time grid needs T > 0 and M >= 1 (T={horizon}, M={steps})"
            )));
        }
        Ok(TimeGrid { horizon, steps, dt: horizon / steps as f64 })
    }
    pub fn horizon(&self) -> f64 {
        self.horizon
    }
    pub fn steps(&self) -> usize {
        self.steps
    }
    pub fn samples(&self) -> usize {
        self.steps + 1
    }
    pub fn dt(&self) -> f64 {
        self.dt
    }
    /// `t_m = m T / M`; hits `0` and `T` exactly.
    pub fn time(&self, m: usize) -> f64 {
        self.horizon * m as f64 / self.steps as f64
    }
    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).map(|m| self.time(m)).collect()
    }
    /// Trapezoid weight of sample `m`.
    pub fn weight(&self, m: usize) -> f64 {
        if m == 0 || m == self.steps {
            0.5 * self.dt
        } else {
            self.dt
        }
    }
    pub fn weights(&self) -> Vec<f64> {
        (0..=self.steps).map(|m| self.weight(m)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WindowShape {
    Bump,
    SineSquared,
}

/// Smooth cutoff χ(t) compactly supported in `(t_a, t_b)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub shape: WindowShape,
    pub support: (f64, f64),
    pub values: Vec<f64>,
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
    /// `sup|χ| + sup|χ'| + sup|χ''|`.
    pub norm_w2inf: f64,
}

impl WindowShape {
    /// `(χ, χ', χ'')` at `t` for support `(ta, tb)`.
    pub fn eval(self, ta: f64, tb: f64, t: f64) -> (f64, f64, f64) {
        if t <= ta || t >= tb {
            return (0.0, 0.0, 0.0);
        }
        let len = tb - ta;
        match self {
            WindowShape::SineSquared => {
                let k = std::f64::consts::PI / len;
                let th = k * (t - ta);
                let v = th.sin().powi(2);
                (v, k * (2.0 * th).sin(), 2.0 * k * k * (2.0 * th).cos())
            }
            WindowShape::Bump => {
                // exp(1 - 1/(1 - z^2)) with z mapping the support onto (-1, 1)
                let z = (2.0 * t - ta - tb) / len;
                let dz = 2.0 / len;
                let p = 1.0 - z * z;
                let v = (1.0 - 1.0 / p).exp();
                let g1 = -2.0 * z / (p * p);
                let g2 = -2.0 / (p * p) - 8.0 * z * z / (p * p * p);
                (v, g1 * v * dz, (g2 + g1 * g1) * v * dz * dz)
            }
        }
    }
}

pub fn make_time_window(
    timegrid: &TimeGrid,
    shape: WindowShape,
    support: (f64, f64),
) -> Result<TimeWindow> {
    let (ta, tb) = support;
    if !(0.0 < ta && ta < tb && tb < timegrid.horizon()) {
        return Err(Error::Support(format!(
            "window support ({ta}, {tb}) must lie inside (0, {})",
            timegrid.horizon()
        )));
    }
    let mut values = Vec::with_capacity(timegrid.samples());
    let mut d1 = Vec::with_capacity(timegrid.samples());
    let mut d2 = Vec::with_capacity(timegrid.samples());
    for t in timegrid.times() {
        let (v, a, b) = shape.eval(ta, tb, t);
        values.push(v);
        d1.push(a);
        d2.push(b);
    }
    let len = tb - ta;
    let norm_w2inf = match shape {
        WindowShape::SineSquared => {
            let k = std::f64::consts::PI / len;
            1.0 + k + 2.0 * k * k
        }
        WindowShape::Bump => {
            // peak value is 1; derivative maxima by dense sampling
            let n = 20_000;
            let (mut m1, mut m2) = (0.0f64, 0.0f64);
            for i in 1..n {
                let t = ta + len * i as f64 / n as f64;
                let (_, a, b) = shape.eval(ta, tb, t);
                m1 = m1.max(a.abs());
                m2 = m2.max(b.abs());
            }
            1.0 + m1 + m2
        }
    };
    Ok(TimeWindow { shape, support, values, d1, d2, norm_w2inf })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_partition(n: usize) -> DomainPartition {
        let g = build_grid(8.0, n, 1).unwrap();
        partition_domain(
            &g,
            Interval::new(-1.0, 1.0),
            Interval::new(2.0, 3.0),
            Interval::new(2.0, 3.0),
        )
        .unwrap()
    }

    #[test]
    fn grid_examples() {
        let g = build_grid(8.0, 16, 1).unwrap();
        assert_eq!(g.spacing(), 1.0);
        assert_eq!(g.node(0), -8.0);
        assert_eq!(build_grid(8.0, 256, 1).unwrap().spacing(), 0.0625);
        assert!(matches!(build_grid(4.0, 7, 1), Err(Error::OddPointCount(7))));
        assert!(build_grid(4.0, 6, 1).is_err());
        for n in [8, 16, 64, 128, 256, 512, 1024] {
            let g = build_grid(8.0, n, 1).unwrap();
            assert_eq!(g.spacing() * n as f64, 16.0);
        }
    }

    #[test]
    fn partition_counts_by_enumeration() {
        let p = default_partition(256);
        let h = 1.0 / 16.0;
        let count = (0..256)
            .filter(|&i| {
                let x = -8.0 + i as f64 * h;
                x > -1.0 && x <= 1.0
            })
            .count();
        assert_eq!(p.idx_omega.len(), count);
        assert_eq!(p.idx_omega.len(), 32);
        assert_eq!(p.gap, 1.0);
        assert!(p.node_gap >= p.gap);
    }

    #[test]
    fn partition_errors() {
        let g = build_grid(8.0, 256, 1).unwrap();
        let om = Interval::new(-1.0, 1.0);
        let w = Interval::new(2.0, 3.0);
        assert!(matches!(
            partition_domain(&g, om, Interval::new(0.5, 2.0), w),
            Err(Error::Overlap(..))
        ));
        assert!(matches!(
            partition_domain(&g, om, Interval::new(2.0, 2.001), w),
            Err(Error::EmptySet(_))
        ));
        assert!(matches!(
            partition_domain(&g, om, Interval::new(1.0, 2.0), w),
            Err(Error::Overlap(..))
        ));
    }

    #[test]
    fn rectangle_rule_of_one() {
        let p = default_partition(256);
        let v = p.integrate(&p.idx_omega, |_| 1.0);
        assert_eq!(v, p.idx_omega.len() as f64 * p.spacing());
    }

    #[test]
    fn time_grid_endpoints() {
        let tg = TimeGrid::new(2.0, 300).unwrap();
        assert_eq!(tg.time(0), 0.0);
        assert_eq!(tg.time(300), 2.0);
        let total: f64 = tg.weights().iter().sum();
        assert!((total - 2.0).abs() < 1e-13);
    }

    #[test]
    fn window_examples() {
        let tg = TimeGrid::new(2.0, 256).unwrap();
        let w = make_time_window(&tg, WindowShape::SineSquared, (0.25, 1.75)).unwrap();
        assert!((w.values[128] - 1.0).abs() < 1e-15);
        assert_eq!(w.values[0], 0.0);
        assert_eq!(w.values[256], 0.0);
        let b = make_time_window(&tg, WindowShape::Bump, (0.5, 1.5)).unwrap();
        assert_eq!(b.d1[128], 0.0);
        assert!(make_time_window(&tg, WindowShape::Bump, (0.0, 1.0)).is_err());
        assert!(make_time_window(&tg, WindowShape::Bump, (1.0, 2.0)).is_err());
    }

    #[test]
    fn window_norm_dominates_dense_samples() {
        let tg = TimeGrid::new(2.0, 64).unwrap();
        for shape in [WindowShape::Bump, WindowShape::SineSquared] {
            for support in [(0.5, 1.4), (0.2, 1.1), (0.25, 1.75)] {
                let w = make_time_window(&tg, shape, support).unwrap();
                let (mut s0, mut s2) = (0.0f64, 0.0f64);
                for i in 0..=10_000 {
                    let t = 2.0 * i as f64 / 10_000.0;
                    let (a, b, c) = shape.eval(support.0, support.1, t);
                    assert!(w.norm_w2inf >= a.abs().max(b.abs()).max(c.abs()));
                    s0 = s0.max(a.abs());
                    s2 = s2.max(c.abs());
                }
                if support.1 - support.0 < 1.0 {
                    assert!(s2 >= s0);
                }
            }
        }
    }

    #[test]
    fn bump_derivatives_match_differences() {
        let (ta, tb) = (0.3, 1.2);
        let e = 1e-5;
        for &t in &[0.5, 0.75, 0.9, 1.1] {
            let (v, d1, d2) = WindowShape::Bump.eval(ta, tb, t);
            let (vp, d1p, _) = WindowShape::Bump.eval(ta, tb, t + e);
            let (vm, d1m, _) = WindowShape::Bump.eval(ta, tb, t - e);
            assert!(((vp - vm) / (2.0 * e) - d1).abs() < 1e-6 * (1.0 + d1.abs()));
            assert!(((d1p - d1m) / (2.0 * e) - d2).abs() < 1e-5 * (1.0 + d2.abs()));
            assert!(v > 0.0);
        }
    }
}
