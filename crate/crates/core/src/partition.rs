//! Dyadic binary partition of the unit cube.
//!
//! Cells are split at the midpoint of one axis per depth, cycling through the
//! axes, so a cell at depth `h = q·d + r` (with `r < d`) has `r` sides of
//! length `2^-(q+1)` and `d - r` sides of length `2^-q`. With
//! `rho = 2^(-1/d)`, `nu1 = 1/4` and `nu2 = sqrt(d)` every cell satisfies
//!
//! ```text
//! B(center, nu1 · rho^h) ⊆ box ⊆ B(center, nu2 · rho^h)
//! ```
//!
//! All box endpoints are dyadic rationals, so splitting is exact in `f64`
//! for as long as the depth cap allows.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest index width we can store; caps the depth for `d >= 3`.
const MAX_INDEX_BITS: u32 = 127;

/// Per-coordinate halving budget.
const HALVINGS_PER_AXIS: u32 = 60;

/// Constants of the ball-containment model for a given dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionGeometry {
    pub dim: usize,
    pub rho: f64,
    pub nu1: f64,
    pub nu2: f64,
}

impl PartitionGeometry {
    /// Constants realised by the cyclic dyadic split in dimension `dim`.
    pub fn dyadic(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("dimension must be at least 1".into()));
        }
        Ok(Self {
            dim,
            rho: 2f64.powf(-1.0 / dim as f64),
            nu1: 0.25,
            nu2: (dim as f64).sqrt(),
        })
    }

    /// Overrides individual constants, checking `0 < nu1 <= 1 <= nu2` and `rho ∈ (0,1)`.
    pub fn with_overrides(self, rho: Option<f64>, nu1: Option<f64>, nu2: Option<f64>) -> Result<Self> {
        let g = Self {
            dim: self.dim,
            rho: rho.unwrap_or(self.rho),
            nu1: nu1.unwrap_or(self.nu1),
            nu2: nu2.unwrap_or(self.nu2),
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidInput("dimension must be at least 1".into()));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::InvalidInput(format!("rho must lie in (0,1), got {}", self.rho)));
        }
        if !(self.nu1 > 0.0 && self.nu1 <= 1.0 && self.nu2 >= 1.0 && self.nu2.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "need 0 < nu1 <= 1 <= nu2, got nu1={} nu2={}",
                self.nu1, self.nu2
            )));
        }
        Ok(())
    }

    /// `rho^h`
    pub fn scale(&self, depth: u32) -> f64 {
        self.rho.powi(depth as i32)
    }

    /// Deepest depth a cell may reach.
    pub fn depth_cap(&self) -> u32 {
        (HALVINGS_PER_AXIS * self.dim as u32).min(MAX_INDEX_BITS)
    }
}

/// A node `X_{h,i}` of the hierarchy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub depth: u32,
    /// One-based position among the `2^depth` cells of this depth.
    pub index: u128,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Cell {
    /// The whole cube `[0,1]^d`.
    pub fn root(dim: usize) -> Self {
        Self {
            depth: 0,
            index: 1,
            lo: vec![0.0; dim],
            hi: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    /// Axis the next split of this cell uses.
    pub fn split_axis(&self) -> usize {
        self.depth as usize % self.dim()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| 0.5 * (a + b))
            .collect()
    }

    pub fn side(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|j| self.side(j)).product()
    }

    /// Radius of the largest ball centred at the midpoint inside the box.
    pub fn inscribed_radius(&self) -> f64 {
        0.5 * (0..self.dim()).map(|j| self.side(j)).fold(f64::INFINITY, f64::min)
    }

    /// Half-diagonal of the box.
    pub fn circumscribed_radius(&self) -> f64 {
        0.5 * (0..self.dim()).map(|j| self.side(j).powi(2)).sum::<f64>().sqrt()
    }

    /// Identity `(h, i)` of the cell.
    pub fn key(&self) -> (u32, u128) {
        (self.depth, self.index)
    }

    /// Lower (`2i-1`) and upper (`2i`) halves along [`Cell::split_axis`].
    pub fn children(&self, cap: u32) -> Result<(Cell, Cell)> {
        if self.depth >= cap {
            return Err(Error::DepthCap { depth: self.depth, cap });
        }
        let axis = self.split_axis();
        let mid = 0.5 * (self.lo[axis] + self.hi[axis]);
        let mut lower = Cell {
            depth: self.depth + 1,
            index: 2 * self.index - 1,
            lo: self.lo.clone(),
            hi: self.hi.clone(),
        };
        let mut upper = Cell {
            depth: self.depth + 1,
            index: 2 * self.index,
            lo: self.lo.clone(),
            hi: self.hi.clone(),
        };
        lower.hi[axis] = mid;
        upper.lo[axis] = mid;
        Ok((lower, upper))
    }

    /// Closed-box membership.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(&v, (&a, &b))| a <= v && v <= b)
    }

    /// Membership under the lower-index tie-break: a point on a shared face
    /// belongs to the cell below it. Exactly one leaf of any partition owns
    /// each point of the cube.
    pub fn owns(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(&v, (&a, &b))| (a < v || (a == 0.0 && v == 0.0)) && v <= b)
    }
}

pub fn check_point(x: &[f64], dim: usize) -> Result<()> {
    if x.len() != dim {
        return Err(Error::InvalidInput(format!(
            "point has {} coordinates, expected {dim}",
            x.len()
        )));
    }
    if x.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::InvalidInput(format!("point {x:?} lies outside [0,1]^{dim}")));
    }
    Ok(())
}

/// Leaf among `leaves` that owns `x`.
pub fn locate<'a>(x: &[f64], leaves: &'a [Cell]) -> Result<&'a Cell> {
    let dim = leaves
        .first()
        .map(Cell::dim)
        .ok_or_else(|| Error::InvalidInput("empty leaf set".into()))?;
    check_point(x, dim)?;
    leaves
        .iter()
        .filter(|c| c.owns(x))
        .min_by_key(|c| c.key())
        .ok_or_else(|| Error::InvalidInput(format!("leaves do not cover {x:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaves_at(dim: usize, depth: u32) -> Vec<Cell> {
        let mut level = vec![Cell::root(dim)];
        for _ in 0..depth {
            level = level
                .iter()
                .flat_map(|c| {
                    let (a, b) = c.children(u32::MAX).unwrap();
                    [a, b]
                })
                .collect();
        }
        level
    }

    #[test]
    fn root_is_unit_cube() {
        for d in [1, 2, 3] {
            let r = Cell::root(d);
            assert_eq!(r.depth, 0);
            assert_eq!(r.index, 1);
            assert_eq!(r.center(), vec![0.5; d]);
            assert_eq!(r.lo, vec![0.0; d]);
            assert_eq!(r.hi, vec![1.0; d]);
        }
    }

    #[test]
    fn children_split_cyclically() {
        let (a, b) = Cell::root(2).children(10).unwrap();
        assert_eq!((a.lo.clone(), a.hi.clone()), (vec![0.0, 0.0], vec![0.5, 1.0]));
        assert_eq!((b.lo.clone(), b.hi.clone()), (vec![0.5, 0.0], vec![1.0, 1.0]));
        assert_eq!(a.center(), vec![0.25, 0.5]);
        assert_eq!(b.center(), vec![0.75, 0.5]);
        assert_eq!((a.index, b.index), (1, 2));

        let (c, e) = a.children(10).unwrap();
        assert_eq!((c.lo, c.hi), (vec![0.0, 0.0], vec![0.5, 0.5]));
        assert_eq!((e.lo, e.hi), (vec![0.0, 0.5], vec![0.5, 1.0]));

        let (l, _) = Cell::root(1).children(10).unwrap();
        let (ll, lu) = l.children(10).unwrap();
        assert_eq!((ll.lo[0], ll.hi[0]), (0.0, 0.25));
        assert_eq!((lu.lo[0], lu.hi[0]), (0.25, 0.5));
        assert_eq!((ll.index, lu.index), (1, 2));
    }

    #[test]
    fn depth_cap_is_an_error() {
        let g = PartitionGeometry::dyadic(1).unwrap();
        let mut c = Cell::root(1);
        for _ in 0..g.depth_cap() {
            c = c.children(g.depth_cap()).unwrap().1;
        }
        assert!(matches!(c.children(g.depth_cap()), Err(Error::DepthCap { .. })));
        assert_eq!(PartitionGeometry::dyadic(2).unwrap().depth_cap(), 120);
        assert_eq!(PartitionGeometry::dyadic(5).unwrap().depth_cap(), 127);
    }

    #[test]
    fn locate_uses_lower_index_on_faces() {
        let leaves = leaves_at(1, 1);
        assert_eq!(locate(&[0.3], &leaves).unwrap().index, 1);
        assert_eq!(locate(&[0.5], &leaves).unwrap().index, 1);
        assert_eq!(locate(&[0.0], &leaves).unwrap().index, 1);
        assert_eq!(locate(&[1.0], &leaves).unwrap().index, 2);
        let leaves = leaves_at(2, 1);
        let c = locate(&[0.9, 0.1], &leaves).unwrap();
        assert_eq!((c.lo.clone(), c.hi.clone()), (vec![0.5, 0.0], vec![1.0, 1.0]));
        assert!(locate(&[1.2, 0.1], &leaves).is_err());
    }

    #[test]
    fn geometry_constants() {
        let g = PartitionGeometry::dyadic(1).unwrap();
        assert_eq!((g.rho, g.nu1, g.nu2), (0.5, 0.25, 1.0));
        let g = PartitionGeometry::dyadic(2).unwrap();
        assert!((g.rho - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert!((g.nu2 - 2f64.sqrt()).abs() < 1e-15);
        assert!(PartitionGeometry::dyadic(0).is_err());
        assert!(g.with_overrides(Some(1.5), None, None).is_err());
        assert!(g.with_overrides(None, Some(2.0), None).is_err());
    }

    // Oracle: explicit side-length formula per depth, checked against the
    // containment radii for every depth up to 20.
    #[test]
    fn containment_holds_exhaustively() {
        for d in 1..=4usize {
            let g = PartitionGeometry::dyadic(d).unwrap();
            for h in 0..=20u32 {
                let q = h / d as u32;
                let r = (h % d as u32) as usize;
                let sides: Vec<f64> = (0..d)
                    .map(|j| if j < r { 2f64.powi(-(q as i32) - 1) } else { 2f64.powi(-(q as i32)) })
                    .collect();
                let inscribed = 0.5 * sides.iter().cloned().fold(f64::INFINITY, f64::min);
                let circ = 0.5 * sides.iter().map(|s| s * s).sum::<f64>().sqrt();
                let scale = g.scale(h);
                assert!(inscribed >= g.nu1 * scale * (1.0 - 1e-12), "d={d} h={h}");
                assert!(circ <= g.nu2 * scale * (1.0 + 1e-12), "d={d} h={h}");
            }
        }
    }

    #[test]
    fn children_tile_parent() {
        for d in 1..=3 {
            for c in leaves_at(d, 5) {
                let (a, b) = c.children(64).unwrap();
                assert_eq!(a.volume() + b.volume(), c.volume());
                let ax = c.split_axis();
                assert_eq!(a.hi[ax], b.lo[ax]);
                assert_eq!(a.lo[ax], c.lo[ax]);
                assert_eq!(b.hi[ax], c.hi[ax]);
            }
        }
    }
}
