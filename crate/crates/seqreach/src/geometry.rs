//! Implicit-function representation of way-point, goal and avoid sets.
//!
//! A [`RegionSet`] is a tree of primitive shapes (balls, boxes, half-spaces)
//! combined with Boolean operators. Every set answers three queries:
//!
//! - `contains(x)` — exact membership, honoring the open/closed flag of each
//!   primitive;
//! - `distance(x)` — distance from `x` to the closure of the set (0 inside);
//! - `dist_to_complement(x)` — distance from `x` to the complement (0 outside).
//!
//! Distances are exact for primitives and use the standard min/max
//! approximation for Boolean combinations (`union` is exact for `distance`,
//! `intersection` is exact for `dist_to_complement`; the remaining pairings
//! are conservative lower bounds). Erosion and the mollified payoff ramp only
//! evaluate distances within one ramp width of the goal, where primitives
//! dominate in all bundled models.
//!
//! Primitives shipped here (balls, boxes, half-spaces and their Boolean
//! combinations with smooth or convex-corner boundaries) satisfy the exterior
//! cone condition by construction; no algorithmic verification is attempted.

use serde::{Deserialize, Serialize};

/// Topological tag carried by a set. Boolean combinations of sets with
/// different tags are reported as `Mixed`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Open,
    Closed,
    Mixed,
}

impl Kind {
    fn flip(self) -> Kind {
        match self {
            Kind::Open => Kind::Closed,
            Kind::Closed => Kind::Open,
            Kind::Mixed => Kind::Mixed,
        }
    }

    fn join(self, other: Kind) -> Kind {
        if self == other {
            self
        } else {
            Kind::Mixed
        }
    }
}

/// Implicit region of `R^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionSet {
    Ball {
        center: Vec<f64>,
        radius: f64,
        closed: bool,
    },
    Box {
        lo: Vec<f64>,
        hi: Vec<f64>,
        closed: bool,
    },
    /// `{x : normal . x <= offset}` (closed) or strict (open).
    HalfSpace {
        normal: Vec<f64>,
        offset: f64,
        closed: bool,
    },
    Complement(Box<RegionSet>),
    Union(Vec<RegionSet>),
    Intersection(Vec<RegionSet>),
    /// First operand minus the second.
    Difference(Box<RegionSet>, Box<RegionSet>),
    /// Generic erosion `{x in base : dist(x, base^c) >= eps}`, used when no
    /// exact structural erosion exists.
    Eroded { base: Box<RegionSet>, eps: f64 },
    /// Generic dilation `{x : dist(x, base) <= eps}`.
    Dilated { base: Box<RegionSet>, eps: f64 },
    /// Nearest-node membership on a rectangular grid; produced by superlevel
    /// extraction from a solved value field.
    GridMask {
        lo: Vec<f64>,
        hi: Vec<f64>,
        nodes: Vec<usize>,
        mask: Vec<bool>,
    },
    Empty,
    All,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn sub_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

impl RegionSet {
    /// Closed Euclidean ball.
    pub fn ball(center: Vec<f64>, radius: f64) -> Self {
        RegionSet::Ball {
            center,
            radius,
            closed: true,
        }
    }

    /// Open Euclidean ball.
    pub fn open_ball(center: Vec<f64>, radius: f64) -> Self {
        RegionSet::Ball {
            center,
            radius,
            closed: false,
        }
    }

    /// Closed axis-aligned box `[lo, hi]`.
    pub fn closed_box(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        RegionSet::Box {
            lo,
            hi,
            closed: true,
        }
    }

    /// Open axis-aligned box `(lo, hi)`.
    pub fn open_box(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        RegionSet::Box {
            lo,
            hi,
            closed: false,
        }
    }

    /// Closed half-space `{x : normal . x <= offset}`.
    pub fn half_space(normal: Vec<f64>, offset: f64) -> Self {
        RegionSet::HalfSpace {
            normal,
            offset,
            closed: true,
        }
    }

    pub fn complement(inner: RegionSet) -> Self {
        RegionSet::Complement(Box::new(inner))
    }

    pub fn union(parts: Vec<RegionSet>) -> Self {
        RegionSet::Union(parts)
    }

    pub fn intersection(parts: Vec<RegionSet>) -> Self {
        RegionSet::Intersection(parts)
    }

    pub fn difference(keep: RegionSet, remove: RegionSet) -> Self {
        RegionSet::Difference(Box::new(keep), Box::new(remove))
    }

    /// Open/closed tag, derived structurally.
    pub fn kind(&self) -> Kind {
        match self {
            RegionSet::Ball { closed, .. }
            | RegionSet::Box { closed, .. }
            | RegionSet::HalfSpace { closed, .. } => {
                if *closed {
                    Kind::Closed
                } else {
                    Kind::Open
                }
            }
            RegionSet::Complement(a) => a.kind().flip(),
            RegionSet::Union(parts) | RegionSet::Intersection(parts) => parts
                .iter()
                .map(|p| p.kind())
                .reduce(Kind::join)
                .unwrap_or(Kind::Closed),
            RegionSet::Difference(a, b) => a.kind().join(b.kind().flip()),
            RegionSet::Eroded { .. } | RegionSet::Dilated { .. } => Kind::Closed,
            RegionSet::GridMask { .. } => Kind::Closed,
            RegionSet::Empty | RegionSet::All => Kind::Closed,
        }
    }

    /// Exact membership test.
    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            RegionSet::Ball {
                center,
                radius,
                closed,
            } => {
                let d = sub_norm(x, center);
                if *closed {
                    d <= *radius
                } else {
                    d < *radius
                }
            }
            RegionSet::Box { lo, hi, closed } => {
                if *closed {
                    x.iter()
                        .zip(lo.iter().zip(hi))
                        .all(|(xi, (l, h))| *l <= *xi && *xi <= *h)
                } else {
                    x.iter()
                        .zip(lo.iter().zip(hi))
                        .all(|(xi, (l, h))| *l < *xi && *xi < *h)
                }
            }
            RegionSet::HalfSpace {
                normal,
                offset,
                closed,
            } => {
                let s: f64 = normal.iter().zip(x).map(|(n, xi)| n * xi).sum();
                if *closed {
                    s <= *offset
                } else {
                    s < *offset
                }
            }
            RegionSet::Complement(a) => !a.contains(x),
            RegionSet::Union(parts) => parts.iter().any(|p| p.contains(x)),
            RegionSet::Intersection(parts) => parts.iter().all(|p| p.contains(x)),
            RegionSet::Difference(a, b) => a.contains(x) && !b.contains(x),
            RegionSet::Eroded { base, eps } => {
                base.contains(x) && base.dist_to_complement(x) >= *eps
            }
            RegionSet::Dilated { base, eps } => base.distance(x) <= *eps,
            RegionSet::GridMask {
                lo,
                hi,
                nodes,
                mask,
            } => grid_mask_index(lo, hi, nodes, x).map(|i| mask[i]).unwrap_or(false),
            RegionSet::Empty => false,
            RegionSet::All => true,
        }
    }

    /// Distance from `x` to the closure of the set; zero inside.
    pub fn distance(&self, x: &[f64]) -> f64 {
        match self {
            RegionSet::Ball { center, radius, .. } => (sub_norm(x, center) - radius).max(0.0),
            RegionSet::Box { lo, hi, .. } => {
                let sq: f64 = x
                    .iter()
                    .zip(lo.iter().zip(hi))
                    .map(|(xi, (l, h))| {
                        let d = (l - xi).max(xi - h).max(0.0);
                        d * d
                    })
                    .sum();
                sq.sqrt()
            }
            RegionSet::HalfSpace { normal, offset, .. } => {
                let s: f64 = normal.iter().zip(x).map(|(n, xi)| n * xi).sum();
                ((s - offset) / norm(normal)).max(0.0)
            }
            RegionSet::Complement(a) => a.dist_to_complement(x),
            RegionSet::Union(parts) => parts
                .iter()
                .map(|p| p.distance(x))
                .fold(f64::INFINITY, f64::min),
            RegionSet::Intersection(parts) => parts
                .iter()
                .map(|p| p.distance(x))
                .fold(0.0, f64::max),
            RegionSet::Difference(a, b) => a.distance(x).max(b.dist_to_complement(x)),
            RegionSet::Eroded { base, eps } => {
                (base.distance(x)).max(eps - base.dist_to_complement(x)).max(0.0)
            }
            RegionSet::Dilated { base, eps } => (base.distance(x) - eps).max(0.0),
            RegionSet::GridMask {
                lo,
                hi,
                nodes,
                mask,
            } => grid_mask_distance(lo, hi, nodes, mask, x, true),
            RegionSet::Empty => f64::INFINITY,
            RegionSet::All => 0.0,
        }
    }

    /// Distance from `x` to the closure of the complement; zero outside.
    pub fn dist_to_complement(&self, x: &[f64]) -> f64 {
        match self {
            RegionSet::Ball { center, radius, .. } => (radius - sub_norm(x, center)).max(0.0),
            RegionSet::Box { lo, hi, .. } => {
                let m = x
                    .iter()
                    .zip(lo.iter().zip(hi))
                    .map(|(xi, (l, h))| (xi - l).min(h - xi))
                    .fold(f64::INFINITY, f64::min);
                m.max(0.0)
            }
            RegionSet::HalfSpace { normal, offset, .. } => {
                let s: f64 = normal.iter().zip(x).map(|(n, xi)| n * xi).sum();
                ((offset - s) / norm(normal)).max(0.0)
            }
            RegionSet::Complement(a) => a.distance(x),
            RegionSet::Union(parts) => parts
                .iter()
                .map(|p| p.dist_to_complement(x))
                .fold(0.0, f64::max),
            RegionSet::Intersection(parts) => parts
                .iter()
                .map(|p| p.dist_to_complement(x))
                .fold(f64::INFINITY, f64::min),
            RegionSet::Difference(a, b) => a.dist_to_complement(x).min(b.distance(x)),
            RegionSet::Eroded { base, eps } => (base.dist_to_complement(x) - eps).max(0.0),
            RegionSet::Dilated { base, eps } => {
                if base.distance(x) <= *eps {
                    eps - base.distance(x)
                } else {
                    0.0
                }
            }
            RegionSet::GridMask {
                lo,
                hi,
                nodes,
                mask,
            } => grid_mask_distance(lo, hi, nodes, mask, x, false),
            RegionSet::Empty => 0.0,
            RegionSet::All => f64::INFINITY,
        }
    }

    /// Erosion by `eps`: the subset of points at depth at least `eps`.
    ///
    /// Exact for balls, boxes, half-spaces, intersections and differences
    /// (via exact dilation of the removed part); other shapes fall back to a
    /// wrapper that evaluates the defining inequality pointwise. A ball of
    /// radius `r <= eps` erodes to the empty set.
    pub fn erode(&self, eps: f64) -> RegionSet {
        assert!(eps > 0.0, "erosion width must be positive");
        match self {
            RegionSet::Ball {
                center,
                radius,
                closed,
            } => {
                if *radius <= eps {
                    RegionSet::Empty
                } else {
                    RegionSet::Ball {
                        center: center.clone(),
                        radius: radius - eps,
                        closed: *closed,
                    }
                }
            }
            RegionSet::Box { lo, hi, closed } => {
                let new_lo: Vec<f64> = lo.iter().map(|l| l + eps).collect();
                let new_hi: Vec<f64> = hi.iter().map(|h| h - eps).collect();
                if new_lo.iter().zip(&new_hi).any(|(l, h)| l > h) {
                    RegionSet::Empty
                } else {
                    RegionSet::Box {
                        lo: new_lo,
                        hi: new_hi,
                        closed: *closed,
                    }
                }
            }
            RegionSet::HalfSpace {
                normal,
                offset,
                closed,
            } => RegionSet::HalfSpace {
                normal: normal.clone(),
                offset: offset - eps * norm(normal),
                closed: *closed,
            },
            RegionSet::Intersection(parts) => {
                RegionSet::Intersection(parts.iter().map(|p| p.erode(eps)).collect())
            }
            RegionSet::Difference(a, b) => RegionSet::Difference(
                Box::new(a.erode(eps)),
                Box::new(b.dilate(eps)),
            ),
            RegionSet::Complement(a) => RegionSet::Complement(Box::new(a.dilate(eps))),
            RegionSet::Eroded { base, eps: e0 } => RegionSet::Eroded {
                base: base.clone(),
                eps: e0 + eps,
            },
            RegionSet::Empty => RegionSet::Empty,
            RegionSet::All => RegionSet::All,
            other => RegionSet::Eroded {
                base: Box::new(other.clone()),
                eps,
            },
        }
    }

    /// Dilation by `eps`: all points within `eps` of the set.
    pub fn dilate(&self, eps: f64) -> RegionSet {
        assert!(eps > 0.0, "dilation width must be positive");
        match self {
            RegionSet::Ball {
                center,
                radius,
                closed,
            } => RegionSet::Ball {
                center: center.clone(),
                radius: radius + eps,
                closed: *closed,
            },
            RegionSet::Box { lo, hi, closed } => RegionSet::Box {
                lo: lo.iter().map(|l| l - eps).collect(),
                hi: hi.iter().map(|h| h + eps).collect(),
                closed: *closed,
            },
            RegionSet::HalfSpace {
                normal,
                offset,
                closed,
            } => RegionSet::HalfSpace {
                normal: normal.clone(),
                offset: offset + eps * norm(normal),
                closed: *closed,
            },
            RegionSet::Union(parts) => {
                RegionSet::Union(parts.iter().map(|p| p.dilate(eps)).collect())
            }
            RegionSet::Complement(a) => RegionSet::Complement(Box::new(a.erode(eps))),
            RegionSet::Dilated { base, eps: e0 } => RegionSet::Dilated {
                base: base.clone(),
                eps: e0 + eps,
            },
            RegionSet::Empty => RegionSet::Empty,
            RegionSet::All => RegionSet::All,
            other => RegionSet::Dilated {
                base: Box::new(other.clone()),
                eps,
            },
        }
    }

    /// Structural emptiness hint; `false` means "not known to be empty".
    pub fn is_empty_hint(&self) -> bool {
        match self {
            RegionSet::Empty => true,
            RegionSet::Union(parts) => parts.iter().all(|p| p.is_empty_hint()),
            RegionSet::Intersection(parts) => parts.iter().any(|p| p.is_empty_hint()),
            RegionSet::Difference(a, _) => a.is_empty_hint(),
            RegionSet::Eroded { base, .. } | RegionSet::Dilated { base, .. } => {
                base.is_empty_hint()
            }
            RegionSet::GridMask { mask, .. } => mask.iter().all(|m| !m),
            _ => false,
        }
    }
}

fn grid_mask_index(lo: &[f64], hi: &[f64], nodes: &[usize], x: &[f64]) -> Option<usize> {
    let mut idx = 0usize;
    for j in 0..nodes.len() {
        let h = if nodes[j] > 1 {
            (hi[j] - lo[j]) / (nodes[j] - 1) as f64
        } else {
            1.0
        };
        let r = ((x[j] - lo[j]) / h).round();
        if !r.is_finite() || r < 0.0 || r > (nodes[j] - 1) as f64 {
            return None;
        }
        idx = idx * nodes[j] + r as usize;
    }
    Some(idx)
}

fn grid_mask_distance(
    lo: &[f64],
    hi: &[f64],
    nodes: &[usize],
    mask: &[bool],
    x: &[f64],
    to_set: bool,
) -> f64 {
    // Brute-force minimum over nodes of the requested parity. Grid masks are
    // quick-look artifacts, not inner-loop geometry.
    let dim = nodes.len();
    let mut best = f64::INFINITY;
    let mut coord = vec![0usize; dim];
    for (i, &m) in mask.iter().enumerate() {
        if m == to_set {
            let mut rem = i;
            for j in (0..dim).rev() {
                coord[j] = rem % nodes[j];
                rem /= nodes[j];
            }
            let mut sq = 0.0;
            for j in 0..dim {
                let h = if nodes[j] > 1 {
                    (hi[j] - lo[j]) / (nodes[j] - 1) as f64
                } else {
                    1.0
                };
                let c = lo[j] + coord[j] as f64 * h;
                sq += (x[j] - c) * (x[j] - c);
            }
            best = best.min(sq.sqrt());
        }
    }
    if best.is_infinite() {
        return if to_set { f64::INFINITY } else { 0.0 };
    }
    best
}

/// Lipschitz ramp approximation of a goal-set indicator.
///
/// Built on the eroded goal: 1 on the eroded set, 0 at distance `eps` from
/// it, linear in between, so the ramp support stays inside the original goal
/// and the function is `1/eps`-Lipschitz.
#[derive(Debug, Clone)]
pub struct MollifiedPayoff {
    pub eroded: RegionSet,
    pub eps: f64,
    /// Set when the erosion removed the whole goal; the payoff is then
    /// identically zero.
    pub eroded_to_empty: bool,
}

impl MollifiedPayoff {
    pub fn new(goal: &RegionSet, eps: f64) -> Self {
        assert!(eps > 0.0, "mollification width must be positive");
        let eroded = goal.erode(eps);
        let eroded_to_empty = eroded.is_empty_hint();
        MollifiedPayoff {
            eroded,
            eps,
            eroded_to_empty,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        if self.eroded_to_empty {
            return 0.0;
        }
        (1.0 - self.eroded.distance(x) / self.eps).clamp(0.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ball_membership() {
        let b = RegionSet::ball(vec![0.0, 0.0], 1.0);
        assert!(b.contains(&[0.0, 0.0]));
        assert!(!b.contains(&[2.0, 0.0]));
        assert!(b.contains(&[1.0, 0.0])); // closed boundary
        assert!(!RegionSet::open_ball(vec![0.0, 0.0], 1.0).contains(&[1.0, 0.0]));
    }

    #[test]
    fn difference_excludes_goal() {
        let way = RegionSet::open_box(vec![-2.0, -2.0], vec![2.0, 2.0]);
        let goal = RegionSet::ball(vec![1.0, 0.0], 0.5);
        let b = RegionSet::difference(way.clone(), goal.clone());
        assert!(!b.contains(&[1.0, 0.0]));
        assert!(b.contains(&[-1.0, 0.0]));
        assert_eq!(b.kind(), Kind::Open);
    }

    #[test]
    fn half_space_distances() {
        // {x : x0 >= 1} as complement of {x0 < 1}; same via negated normal.
        let g = RegionSet::half_space(vec![-1.0], -1.0); // -x <= -1 <=> x >= 1
        assert!(g.contains(&[1.0]));
        assert!(g.contains(&[1.5]));
        assert!(!g.contains(&[0.5]));
        assert!((g.distance(&[0.25]) - 0.75).abs() < 1e-12);
        assert!((g.dist_to_complement(&[1.5]) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn erode_ball_exact() {
        let g = RegionSet::ball(vec![0.0], 1.0);
        match g.erode(0.25) {
            RegionSet::Ball { radius, .. } => assert!((radius - 0.75).abs() < 1e-15),
            other => panic!("expected ball, got {other:?}"),
        }
        assert!(matches!(g.erode(1.5), RegionSet::Empty));
        assert!(matches!(g.erode(1.0), RegionSet::Empty));
    }

    #[test]
    fn erode_box_matches_brute_force_scan() {
        // Oracle: sample a fine grid, test dist-to-complement >= eps directly.
        let g = RegionSet::closed_box(vec![0.0, 0.0], vec![1.0, 2.0]);
        let eps = 0.3;
        let eroded = g.erode(eps);
        let n = 41;
        let cell = 1.2 / (n as f64 - 1.0);
        for i in 0..n {
            for j in 0..n {
                let x = [-0.1 + 1.2 * i as f64 / (n as f64 - 1.0),
                         -0.1 + 2.2 * j as f64 / (n as f64 - 1.0)];
                let oracle = g.contains(&x) && g.dist_to_complement(&x) >= eps;
                if eroded.contains(&x) != oracle {
                    // Disagreement allowed only within one sampling cell of
                    // the eroded boundary.
                    let boundary_gap = (g.dist_to_complement(&x) - eps).abs();
                    assert!(
                        boundary_gap <= cell,
                        "erosion disagrees with scan away from the boundary at {x:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn erode_difference_is_exact() {
        let a = RegionSet::closed_box(vec![0.0], vec![1.0]);
        let b = RegionSet::ball(vec![0.5], 0.1);
        let d = RegionSet::difference(a, b).erode(0.05);
        // depth in [0,1] at 0.2 is 0.2; distance to the removed ball is 0.2.
        assert!(d.contains(&[0.2]));
        // within eps of the dilated ball
        assert!(!d.contains(&[0.36]));
        assert!(!d.contains(&[0.03]));
    }

    #[test]
    fn mollified_ramp_values() {
        let g = RegionSet::ball(vec![0.0], 1.0);
        let eps = 0.25;
        let p = MollifiedPayoff::new(&g, eps);
        assert_eq!(p.eval(&[0.0]), 1.0); // inside eroded set
        assert_eq!(p.eval(&[0.5]), 1.0);
        // dist to eroded ball(0.75) is eps/2 at |x| = 0.875
        assert!((p.eval(&[0.875]) - 0.5).abs() < 1e-12);
        assert_eq!(p.eval(&[1.0]), 0.0);
        assert_eq!(p.eval(&[3.0]), 0.0);
    }

    #[test]
    fn mollified_empty_erosion_flags_and_zeroes() {
        let g = RegionSet::ball(vec![0.0], 0.5);
        let p = MollifiedPayoff::new(&g, 1.5);
        assert!(p.eroded_to_empty);
        assert_eq!(p.eval(&[0.0]), 0.0);
    }

    #[test]
    fn mollified_below_goal_indicator_sampled() {
        // ramp support must stay inside the goal: l_eps <= 1_G pointwise.
        let g = RegionSet::ball(vec![0.3, -0.2], 0.8);
        let p = MollifiedPayoff::new(&g, 0.2);
        let mut s = 0x9e3779b97f4a7c15u64;
        let mut next = || {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s >> 11) as f64 / (1u64 << 53) as f64 * 4.0 - 2.0
        };
        for _ in 0..10_000 {
            let x = [next(), next()];
            let indicator = if g.contains(&x) { 1.0 } else { 0.0 };
            assert!(p.eval(&x) <= indicator + 1e-12, "ramp exceeds 1_G at {x:?}");
        }
    }

    #[test]
    fn distance_zero_iff_in_closure_primitives() {
        let shapes = [
            RegionSet::ball(vec![0.0, 0.0], 1.0),
            RegionSet::closed_box(vec![-1.0, -1.0], vec![1.0, 1.0]),
            RegionSet::half_space(vec![1.0, 0.0], 0.5),
        ];
        let pts: [[f64; 2]; 4] = [[0.0, 0.0], [0.9, 0.0], [1.5, 1.5], [-2.0, 0.3]];
        for sh in &shapes {
            for p in &pts {
                let inside = sh.contains(p);
                let d = sh.distance(p);
                if inside {
                    assert_eq!(d, 0.0);
                } else if d == 0.0 {
                    // boundary of a closed primitive only
                    assert!(sh.dist_to_complement(p) == 0.0);
                }
            }
        }
    }

    #[test]
    fn grid_mask_nearest_node() {
        let mask = RegionSet::GridMask {
            lo: vec![0.0],
            hi: vec![1.0],
            nodes: vec![3],
            mask: vec![false, true, false],
        };
        assert!(mask.contains(&[0.5]));
        assert!(mask.contains(&[0.6])); // nearest node is 0.5
        assert!(!mask.contains(&[0.9]));
        assert!(!mask.contains(&[2.0])); // off-grid
    }

    proptest! {
        #[test]
        fn complement_involution(cx in -2.0f64..2.0, cy in -2.0f64..2.0,
                                 r in 0.1f64..1.5, px in -3.0f64..3.0, py in -3.0f64..3.0) {
            let a = RegionSet::ball(vec![cx, cy], r);
            let cc = RegionSet::complement(RegionSet::complement(a.clone()));
            prop_assert_eq!(a.contains(&[px, py]), cc.contains(&[px, py]));
        }

        #[test]
        fn erosion_monotone_in_eps(r in 0.5f64..2.0, e1 in 0.01f64..0.4, de in 0.0f64..0.4,
                                   px in -3.0f64..3.0, py in -3.0f64..3.0) {
            let g = RegionSet::ball(vec![0.0, 0.0], r);
            let e2 = e1 + de;
            let big = g.erode(e1);
            let small = g.erode(e2);
            // erode(G, e2) subset of erode(G, e1) when e1 <= e2
            prop_assert!(!small.contains(&[px, py]) || big.contains(&[px, py]));
        }

        #[test]
        fn ramp_is_lipschitz(px in -2.0f64..2.0, py in -2.0f64..2.0,
                             qx in -2.0f64..2.0, qy in -2.0f64..2.0,
                             eps in 0.05f64..0.5) {
            let g = RegionSet::ball(vec![0.0, 0.0], 1.0);
            let p = MollifiedPayoff::new(&g, eps);
            let lhs = (p.eval(&[px, py]) - p.eval(&[qx, qy])).abs();
            let dist = ((px - qx).powi(2) + (py - qy).powi(2)).sqrt();
            prop_assert!(lhs <= dist / eps + 1e-9);
        }

        #[test]
        fn ramp_in_unit_interval(px in -4.0f64..4.0, py in -4.0f64..4.0, eps in 0.05f64..0.5) {
            let g = RegionSet::difference(
                RegionSet::closed_box(vec![-1.5, -1.5], vec![1.5, 1.5]),
                RegionSet::ball(vec![0.5, 0.5], 0.3),
            );
            let p = MollifiedPayoff::new(&g, eps);
            let v = p.eval(&[px, py]);
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }
}
