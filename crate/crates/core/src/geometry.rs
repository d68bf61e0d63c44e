//! Analytic signed-distance geometry for the domain, the obstacle and the
//! inner subdomain, together with the offset family `V_rho` built as
//! sub-level sets `{sdf <= rho}`.
//!
//! Inside the reach of a shape the sub-level set `{sdf <= rho}` coincides with
//! the region swept by following the unit normal a signed distance `rho`, so
//! the offsets here are exactly the dilations/erosions the decay estimates are
//! phrased in.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::discretize::Grid;
use crate::error::{LabError, Result};

/// Tube radius of the kidney shape as a fraction of its arc radius.
pub const KIDNEY_TUBE_RATIO: f64 = 0.4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShapeKind {
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
    /// Axis-aligned ellipse (ellipsoid for `m = 3`).
    Ellipse {
        center: Vec<f64>,
        semi_axes: Vec<f64>,
    },
    RoundedBox {
        center: Vec<f64>,
        half_widths: Vec<f64>,
        corner_radius: f64,
    },
    /// Planar tube of radius `KIDNEY_TUBE_RATIO * scale` around a circular arc
    /// of radius `scale` centred at `center`. The arc is symmetric about the
    /// +y axis and spans the half-angle `bend` (radians).
    Kidney {
        center: Vec<f64>,
        scale: f64,
        bend: f64,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct ShapeConfig {
    #[serde(flatten)]
    kind: ShapeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reach_inward: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reach_outward: Option<f64>,
}

/// A shape together with its reach (injectivity radius of the normal
/// exponential map) for inward and outward offsets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ShapeConfig", into = "ShapeConfig")]
pub struct ShapeSpec {
    pub kind: ShapeKind,
    pub reach_inward: f64,
    pub reach_outward: f64,
}

impl TryFrom<ShapeConfig> for ShapeSpec {
    type Error = LabError;

    fn try_from(cfg: ShapeConfig) -> Result<Self> {
        let mut shape = ShapeSpec::new(cfg.kind)?;
        if let Some(r) = cfg.reach_inward {
            if !(r > 0.0) {
                return Err(LabError::input("reach_inward must be positive"));
            }
            shape.reach_inward = r;
        }
        if let Some(r) = cfg.reach_outward {
            if !(r > 0.0) {
                return Err(LabError::input("reach_outward must be positive"));
            }
            shape.reach_outward = r;
        }
        Ok(shape)
    }
}

impl From<ShapeSpec> for ShapeConfig {
    fn from(shape: ShapeSpec) -> Self {
        let finite = |r: f64| r.is_finite().then_some(r);
        ShapeConfig {
            reach_inward: finite(shape.reach_inward),
            reach_outward: finite(shape.reach_outward),
            kind: shape.kind,
        }
    }
}

impl ShapeSpec {
    /// Validates the parameters and attaches the analytic reach.
    pub fn new(kind: ShapeKind) -> Result<Self> {
        let positive = |v: f64, what: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(LabError::input(format!("{what} must be positive and finite")))
            }
        };
        let check_center = |c: &[f64]| {
            if c.is_empty() || c.len() > 3 {
                Err(LabError::input(format!(
                    "shape dimension {} not in 1..=3",
                    c.len()
                )))
            } else if c.iter().any(|x| !x.is_finite()) {
                Err(LabError::input("shape center must be finite"))
            } else {
                Ok(())
            }
        };
        let (inward, outward) = match &kind {
            ShapeKind::Ball { center, radius } => {
                check_center(center)?;
                positive(*radius, "ball radius")?;
                (*radius, f64::INFINITY)
            }
            ShapeKind::Ellipse { center, semi_axes } => {
                check_center(center)?;
                if semi_axes.len() != center.len() {
                    return Err(LabError::input("ellipse semi-axes dimension mismatch"));
                }
                for &e in semi_axes {
                    positive(e, "ellipse semi-axis")?;
                }
                let max = semi_axes.iter().cloned().fold(f64::MIN, f64::max);
                let min = semi_axes.iter().cloned().fold(f64::MAX, f64::min);
                // smallest principal radius of curvature
                (min * min / max, f64::INFINITY)
            }
            ShapeKind::RoundedBox {
                center,
                half_widths,
                corner_radius,
            } => {
                check_center(center)?;
                if half_widths.len() != center.len() {
                    return Err(LabError::input("box half-widths dimension mismatch"));
                }
                for &w in half_widths {
                    positive(w, "box half-width")?;
                }
                let min_half = half_widths.iter().cloned().fold(f64::MAX, f64::min);
                if !(*corner_radius >= 0.0) || *corner_radius > min_half {
                    return Err(LabError::input(
                        "corner radius must lie in [0, min half-width]",
                    ));
                }
                let inward = if center.len() == 1 {
                    half_widths[0]
                } else {
                    *corner_radius
                };
                (inward, f64::INFINITY)
            }
            ShapeKind::Kidney {
                center,
                scale,
                bend,
            } => {
                if center.len() != 2 {
                    return Err(LabError::input("kidney shape is planar (m = 2)"));
                }
                check_center(center)?;
                positive(*scale, "kidney scale")?;
                if !(*bend > 0.0 && *bend < PI) {
                    return Err(LabError::input("kidney bend must lie in (0, pi)"));
                }
                let tube = KIDNEY_TUBE_RATIO * scale;
                let mut outward = scale - tube;
                if *bend > PI / 2.0 {
                    outward = outward.min(scale * bend.sin() - tube);
                }
                if !(outward > 0.0) {
                    return Err(LabError::input("kidney caps overlap; reduce bend"));
                }
                (tube, outward)
            }
        };
        Ok(ShapeSpec {
            kind,
            reach_inward: inward,
            reach_outward: outward,
        })
    }

    pub fn ball(center: &[f64], radius: f64) -> Result<Self> {
        Self::new(ShapeKind::Ball {
            center: center.to_vec(),
            radius,
        })
    }

    pub fn dim(&self) -> usize {
        self.center().len()
    }

    pub fn center(&self) -> &[f64] {
        match &self.kind {
            ShapeKind::Ball { center, .. }
            | ShapeKind::Ellipse { center, .. }
            | ShapeKind::RoundedBox { center, .. }
            | ShapeKind::Kidney { center, .. } => center,
        }
    }

    /// Signed distance, negative inside.
    pub fn sdf(&self, point: &[f64]) -> Result<f64> {
        if point.len() != self.dim() {
            return Err(LabError::input(format!(
                "point has dimension {}, shape has dimension {}",
                point.len(),
                self.dim()
            )));
        }
        Ok(self.distance(point))
    }

    /// Signed distance without the dimension check. `point` must have at
    /// least `self.dim()` coordinates; extra coordinates are ignored.
    pub fn distance(&self, point: &[f64]) -> f64 {
        match &self.kind {
            ShapeKind::Ball { center, radius } => {
                let r2: f64 = center
                    .iter()
                    .zip(point)
                    .map(|(c, p)| (p - c) * (p - c))
                    .sum();
                r2.sqrt() - radius
            }
            ShapeKind::Ellipse { center, semi_axes } => {
                let y: Vec<f64> = center.iter().zip(point).map(|(c, p)| p - c).collect();
                ellipsoid_sdf(semi_axes, &y)
            }
            ShapeKind::RoundedBox {
                center,
                half_widths,
                corner_radius,
            } => {
                let mut outside = 0.0;
                let mut inside = f64::NEG_INFINITY;
                for ((c, p), w) in center.iter().zip(point).zip(half_widths) {
                    let q = (p - c).abs() - (w - corner_radius);
                    outside += q.max(0.0).powi(2);
                    inside = inside.max(q);
                }
                outside.sqrt() + inside.min(0.0) - corner_radius
            }
            ShapeKind::Kidney {
                center,
                scale,
                bend,
            } => {
                let x = (point[0] - center[0]).abs();
                let y = point[1] - center[1];
                let angle = x.atan2(y);
                let to_arc = if angle <= *bend {
                    ((x * x + y * y).sqrt() - scale).abs()
                } else {
                    let ex = scale * bend.sin();
                    let ey = scale * bend.cos();
                    ((x - ex).powi(2) + (y - ey).powi(2)).sqrt()
                };
                to_arc - KIDNEY_TUBE_RATIO * scale
            }
        }
    }

    /// Central-difference gradient of the signed distance.
    pub fn gradient(&self, point: &[f64], step: f64) -> Vec<f64> {
        let mut p = point[..self.dim()].to_vec();
        (0..self.dim())
            .map(|i| {
                let x = p[i];
                p[i] = x + step;
                let fp = self.distance(&p);
                p[i] = x - step;
                let fm = self.distance(&p);
                p[i] = x;
                (fp - fm) / (2.0 * step)
            })
            .collect()
    }

    /// Points on the boundary obtained by projecting the supersampled
    /// narrow band of `grid` onto the zero level set.
    pub fn boundary_samples(&self, grid: &Grid) -> Result<Vec<Vec<f64>>> {
        if grid.dim != self.dim() {
            return Err(LabError::input(format!(
                "grid dimension {} does not match shape dimension {}",
                grid.dim,
                self.dim()
            )));
        }
        let sub = if grid.dim == 3 { 1 } else { 2 };
        let m = grid.dim;
        let counts: Vec<usize> = (0..m).map(|a| grid.cells[a] * sub).collect();
        let steps: Vec<f64> = (0..m).map(|a| grid.spacing[a] / sub as f64).collect();
        let band = grid.max_spacing();
        let fd = grid.min_spacing() * 1e-3;
        let total: usize = counts.iter().product();
        let mut out = Vec::new();
        let mut p = vec![0.0; m];
        for lin in 0..total {
            let mut rest = lin;
            for a in 0..m {
                let i = rest % counts[a];
                rest /= counts[a];
                p[a] = grid.lower[a] + (i as f64 + 0.5) * steps[a];
            }
            let d = self.distance(&p);
            if d.abs() >= band {
                continue;
            }
            let mut q = p.clone();
            for _ in 0..3 {
                let d = self.distance(&q);
                let g = self.gradient(&q, fd);
                let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm < 1e-12 {
                    break;
                }
                for a in 0..m {
                    q[a] -= d * g[a] / norm;
                }
            }
            out.push(q);
        }
        if out.is_empty() {
            return Err(LabError::geometry(
                "shape boundary not resolved by the grid",
            ));
        }
        Ok(out)
    }
}

/// Signed distance to the axis-aligned ellipsoid with the given semi-axes,
/// `y` relative to its centre.
fn ellipsoid_sdf(semi_axes: &[f64], y: &[f64]) -> f64 {
    let inside = y
        .iter()
        .zip(semi_axes)
        .map(|(v, e)| (v / e).powi(2))
        .sum::<f64>()
        < 1.0;
    // sort axes in decreasing order, work in the first orthant
    let mut order: Vec<usize> = (0..semi_axes.len()).collect();
    order.sort_by(|&i, &j| semi_axes[j].partial_cmp(&semi_axes[i]).unwrap());
    let e: Vec<f64> = order.iter().map(|&i| semi_axes[i]).collect();
    let ya: Vec<f64> = order.iter().map(|&i| y[i].abs()).collect();
    let d = ellipsoid_distance(&e, &ya);
    if inside {
        -d
    } else {
        d
    }
}

/// Unsigned distance from `y >= 0` to the ellipsoid with decreasing semi-axes
/// `e` (robust bisection on the Lagrange multiplier).
fn ellipsoid_distance(e: &[f64], y: &[f64]) -> f64 {
    let n = e.len();
    let last = n - 1;
    if y[last] > 0.0 {
        let t = ellipsoid_root(e, y);
        return e
            .iter()
            .zip(y)
            .map(|(ei, yi)| {
                let x = ei * ei * yi / (t + ei * ei);
                (x - yi).powi(2)
            })
            .sum::<f64>()
            .sqrt();
    }
    if n == 1 {
        return e[0];
    }
    // y[last] == 0: the closest point may leave the hyperplane
    let el2 = e[last] * e[last];
    let mut x = vec![0.0; n];
    let mut sum = 0.0;
    let mut feasible = true;
    for i in 0..last {
        let denom = e[i] * e[i] - el2;
        if denom <= 0.0 {
            feasible = false;
            break;
        }
        x[i] = e[i] * e[i] * y[i] / denom;
        sum += (x[i] / e[i]).powi(2);
    }
    if feasible && sum < 1.0 {
        x[last] = e[last] * (1.0 - sum).sqrt();
        return (0..n)
            .map(|i| (x[i] - y[i]).powi(2))
            .sum::<f64>()
            .sqrt();
    }
    ellipsoid_distance(&e[..last], &y[..last])
}

fn ellipsoid_root(e: &[f64], y: &[f64]) -> f64 {
    let last = e.len() - 1;
    let el2 = e[last] * e[last];
    let f = |t: f64| {
        e.iter()
            .zip(y)
            .map(|(ei, yi)| (ei * yi / (t + ei * ei)).powi(2))
            .sum::<f64>()
            - 1.0
    };
    let mut lo = -el2 + e[last] * y[last];
    let mut hi = -el2
        + e.iter()
            .zip(y)
            .map(|(ei, yi)| (ei * yi).powi(2))
            .sum::<f64>()
            .sqrt();
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// The computational box `Omega`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxDomain {
    pub fn unit(dim: usize) -> Self {
        BoxDomain {
            lower: vec![0.0; dim],
            upper: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.lower.is_empty() || self.lower.len() > 3 || self.lower.len() != self.upper.len() {
            return Err(LabError::input("box must have matching bounds of dimension 1..=3"));
        }
        if self
            .lower
            .iter()
            .zip(&self.upper)
            .any(|(l, u)| !(u > l) || !l.is_finite() || !u.is_finite())
        {
            return Err(LabError::input("box upper bounds must exceed lower bounds"));
        }
        Ok(())
    }

    pub fn volume(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| u - l)
            .product()
    }

    /// The box as a signed-distance shape (sharp corners).
    pub fn as_shape(&self) -> ShapeSpec {
        ShapeSpec {
            kind: ShapeKind::RoundedBox {
                center: self
                    .lower
                    .iter()
                    .zip(&self.upper)
                    .map(|(l, u)| 0.5 * (l + u))
                    .collect(),
                half_widths: self
                    .lower
                    .iter()
                    .zip(&self.upper)
                    .map(|(l, u)| 0.5 * (u - l))
                    .collect(),
                corner_radius: 0.0,
            },
            reach_inward: 0.0,
            reach_outward: f64::INFINITY,
        }
    }
}

/// `Omega` (box), the obstacle `Omega_0` and the inner subdomain `V`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub omega: BoxDomain,
    pub obstacle: ShapeSpec,
    pub subdomain: ShapeSpec,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainGaps {
    /// dist(Gamma_0, Gamma)
    pub obstacle_to_boundary: f64,
    /// dist(dV, Gamma_0)
    pub subdomain_to_obstacle: f64,
}

impl DomainSpec {
    /// Unit box with concentric balls: `Omega_0 = B(c, 0.3)`, `V = B(c, 0.15)`.
    pub fn reference(dim: usize) -> Self {
        let c = vec![0.5; dim];
        DomainSpec {
            omega: BoxDomain::unit(dim),
            obstacle: ShapeSpec::ball(&c, 0.3).expect("valid ball"),
            subdomain: ShapeSpec::ball(&c, 0.15).expect("valid ball"),
        }
    }

    pub fn dim(&self) -> usize {
        self.omega.dim()
    }

    /// Checks the strict nesting `V ⋐ Omega_0 ⋐ Omega` at the resolution of
    /// `grid` and returns the two gaps.
    pub fn validate(&self, grid: &Grid) -> Result<DomainGaps> {
        self.omega.validate()?;
        let m = self.dim();
        if self.obstacle.dim() != m || self.subdomain.dim() != m {
            return Err(LabError::input("shape and box dimensions differ"));
        }
        let obstacle_to_boundary = boundary_gap(&self.obstacle, &self.omega.as_shape(), grid)
            .map_err(|e| LabError::geometry(format!("obstacle not inside the box: {e}")))?;
        let subdomain_to_obstacle = boundary_gap(&self.subdomain, &self.obstacle, grid)
            .map_err(|e| LabError::geometry(format!("subdomain not inside the obstacle: {e}")))?;
        Ok(DomainGaps {
            obstacle_to_boundary,
            subdomain_to_obstacle,
        })
    }
}

/// Cell-wise membership of a region on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionMask {
    pub grid: Grid,
    pub cells: Vec<bool>,
    pub measure: f64,
}

impl RegionMask {
    pub fn from_cells(grid: Grid, cells: Vec<bool>) -> Self {
        assert_eq!(cells.len(), grid.len(), "mask length must equal cell count");
        let count = cells.iter().filter(|&&c| c).count();
        RegionMask {
            measure: count as f64 * grid.cell_volume(),
            grid,
            cells,
        }
    }

    pub fn full(grid: Grid) -> Self {
        Self::from_cells(grid, vec![true; grid.len()])
    }

    pub fn empty(grid: Grid) -> Self {
        Self::from_cells(grid, vec![false; grid.len()])
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    pub fn contains(&self, cell: usize) -> bool {
        self.cells[cell]
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.cells
            .iter()
            .enumerate()
            .filter_map(|(i, &c)| c.then_some(i))
    }

    pub fn complement(&self) -> RegionMask {
        Self::from_cells(self.grid, self.cells.iter().map(|c| !c).collect())
    }

    pub fn is_subset_of(&self, other: &RegionMask) -> bool {
        self.cells.len() == other.cells.len()
            && self.cells.iter().zip(&other.cells).all(|(a, b)| !a || *b)
    }

    /// Writes one line per member cell: its multi-index and centre.
    pub fn write_cell_list<W: Write>(&self, mut out: W) -> Result<()> {
        let m = self.grid.dim;
        let axes = ["i", "j", "k"];
        let coords = ["x", "y", "z"];
        let header: Vec<&str> = axes[..m].iter().chain(&coords[..m]).copied().collect();
        writeln!(out, "{}", header.join(","))?;
        for idx in self.indices() {
            let mi = self.grid.multi_index(idx);
            let c = self.grid.center(idx);
            let mut fields: Vec<String> = mi[..m].iter().map(|v| v.to_string()).collect();
            fields.extend(c[..m].iter().map(|v| format!("{v:.17e}")));
            writeln!(out, "{}", fields.join(","))?;
        }
        Ok(())
    }
}

/// `{cells with sdf <= rho}`; for `|rho|` below the reach this is `V_rho`.
pub fn offset_region(shape: &ShapeSpec, rho: f64, grid: &Grid) -> Result<RegionMask> {
    if grid.dim != shape.dim() {
        return Err(LabError::input("grid and shape dimensions differ"));
    }
    if !rho.is_finite() {
        return Err(LabError::input("offset must be finite"));
    }
    if rho > 0.0 && rho >= shape.reach_outward {
        return Err(LabError::geometry(format!(
            "offset exceeds injectivity radius: rho = {rho} >= outward reach {}",
            shape.reach_outward
        )));
    }
    if rho < 0.0 && -rho >= shape.reach_inward {
        return Err(LabError::geometry(format!(
            "offset exceeds injectivity radius: |rho| = {} >= inward reach {}",
            -rho, shape.reach_inward
        )));
    }
    let cells = (0..grid.len())
        .map(|idx| shape.distance(&grid.center(idx)) <= rho)
        .collect();
    Ok(RegionMask::from_cells(*grid, cells))
}

/// Minimum distance from the boundary of `inner` to the boundary of `outer`,
/// sampled on the projected narrow band of `grid`.
pub fn boundary_gap(inner: &ShapeSpec, outer: &ShapeSpec, grid: &Grid) -> Result<f64> {
    if inner.dim() != outer.dim() {
        return Err(LabError::input("shape dimensions differ"));
    }
    let samples = inner.boundary_samples(grid)?;
    let mut gap = f64::INFINITY;
    for p in &samples {
        let d = outer.distance(p);
        if d >= 0.0 {
            return Err(LabError::geometry("shapes intersect"));
        }
        gap = gap.min(-d);
    }
    Ok(gap)
}

/// `a = min{dist(dV, Gamma_0), r}` with `r` the smaller of the two reaches of `V`.
pub fn constant_a(domain: &DomainSpec, grid: &Grid) -> Result<f64> {
    let gap = boundary_gap(&domain.subdomain, &domain.obstacle, grid)?;
    Ok(gap
        .min(domain.subdomain.reach_inward)
        .min(domain.subdomain.reach_outward))
}

#[derive(Clone, Debug)]
pub struct Shell {
    /// Offset of `V` defining the shell; `None` for `U_0 = Omega_0`.
    pub offset: Option<f64>,
    pub mask: RegionMask,
}

/// Nested shells `Omega_0 = U_0 ⊇ U_1 ⊇ ... ⊇ U_N = V` with
/// `U_j = V_{gamma a (1 - j/N)}`. The endpoint `gamma = 1` is accepted: then
/// `U_1` touches `V_a`, which still lies in the closure of `Omega_0`.
pub fn shell_family(domain: &DomainSpec, gamma: f64, n: usize, grid: &Grid) -> Result<Vec<Shell>> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(LabError::input("gamma must lie in (0, 1]"));
    }
    if n == 0 {
        return Err(LabError::input("shell count must be at least 1"));
    }
    let a = constant_a(domain, grid)?;
    let mut shells = Vec::with_capacity(n + 1);
    shells.push(Shell {
        offset: None,
        mask: offset_region(&domain.obstacle, 0.0, grid)?,
    });
    for j in 1..=n {
        let rho = gamma * a * (1.0 - j as f64 / n as f64);
        shells.push(Shell {
            offset: Some(rho),
            mask: offset_region(&domain.subdomain, rho, grid)?,
        });
    }
    Ok(shells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretize::build_grid_box;

    fn unit_grid(dim: usize, n: usize) -> Grid {
        build_grid_box(&BoxDomain::unit(dim), &vec![n; dim]).unwrap()
    }

    #[test]
    fn ball_sdf_values() {
        let b = ShapeSpec::ball(&[0.0, 0.0], 1.0).unwrap();
        assert_eq!(b.sdf(&[2.0, 0.0]).unwrap(), 1.0);
        assert_eq!(b.sdf(&[0.0, 0.0]).unwrap(), -1.0);
        assert!(matches!(b.sdf(&[0.0, 0.0, 0.0]), Err(LabError::Input(_))));
    }

    #[test]
    fn ball_reach() {
        let b = ShapeSpec::ball(&[0.0, 0.0, 0.0], 0.7).unwrap();
        assert_eq!(b.reach_inward, 0.7);
        assert!(b.reach_outward.is_infinite());
    }

    #[test]
    fn ellipse_sdf_on_axes() {
        let e = ShapeSpec::new(ShapeKind::Ellipse {
            center: vec![0.0, 0.0],
            semi_axes: vec![2.0, 1.0],
        })
        .unwrap();
        assert!((e.distance(&[3.0, 0.0]) - 1.0).abs() < 1e-12);
        assert!((e.distance(&[0.0, 3.0]) - 2.0).abs() < 1e-12);
        // centre: closest boundary point is the end of the minor axis
        assert!((e.distance(&[0.0, 0.0]) + 1.0).abs() < 1e-12);
        // inside on the major axis, beyond the evolute: nearest point is the vertex
        assert!((e.distance(&[1.9, 0.0]) + 0.1).abs() < 1e-12);
        assert!((e.reach_inward - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rounded_box_sdf() {
        let b = ShapeSpec::new(ShapeKind::RoundedBox {
            center: vec![0.0, 0.0],
            half_widths: vec![1.0, 0.5],
            corner_radius: 0.1,
        })
        .unwrap();
        assert!((b.distance(&[0.0, 0.0]) + 0.5).abs() < 1e-12);
        assert!((b.distance(&[2.0, 0.0]) - 1.0).abs() < 1e-12);
        // diagonal past the rounded corner
        let corner = [0.9 + 0.1 / 2f64.sqrt() + 0.3, 0.4 + 0.1 / 2f64.sqrt() + 0.3];
        assert!((b.distance(&corner) - 0.3 * 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(b.reach_inward, 0.1);
    }

    #[test]
    fn kidney_sdf_and_reach() {
        let k = ShapeSpec::new(ShapeKind::Kidney {
            center: vec![0.0, 0.0],
            scale: 1.0,
            bend: 1.2,
        })
        .unwrap();
        // on the arc midpoint: inside by the tube radius
        assert!((k.distance(&[0.0, 1.0]) + 0.4).abs() < 1e-12);
        // arc centre lies outside at distance R - w
        assert!((k.distance(&[0.0, 0.0]) - 0.6).abs() < 1e-12);
        assert!((k.reach_inward - 0.4).abs() < 1e-15);
        assert!((k.reach_outward - 0.6).abs() < 1e-15);
        // wide bend: caps approach each other
        let wide = ShapeSpec::new(ShapeKind::Kidney {
            center: vec![0.0, 0.0],
            scale: 1.0,
            bend: 2.5,
        })
        .unwrap();
        assert!((wide.reach_outward - (2.5f64.sin() - 0.4)).abs() < 1e-15);
        assert!(ShapeSpec::new(ShapeKind::Kidney {
            center: vec![0.0, 0.0, 0.0],
            scale: 1.0,
            bend: 1.0,
        })
        .is_err());
    }

    #[test]
    fn offset_identity_and_reach_errors() {
        let grid = unit_grid(2, 32);
        let b = ShapeSpec::ball(&[0.5, 0.5], 0.3).unwrap();
        let m0 = offset_region(&b, 0.0, &grid).unwrap();
        let direct: Vec<bool> = (0..grid.len())
            .map(|i| b.distance(&grid.center(i)) <= 0.0)
            .collect();
        assert_eq!(m0.cells, direct);
        let err = offset_region(&b, -0.3, &grid).unwrap_err();
        assert!(err.to_string().contains("offset exceeds injectivity radius"));
        assert!(offset_region(&b, 0.15, &grid).is_ok());
    }

    #[test]
    fn offset_ball_measure() {
        let grid = unit_grid(2, 256);
        let b = ShapeSpec::ball(&[0.5, 0.5], 0.5 - 1e-9).unwrap();
        let m = offset_region(&b, -0.2, &grid).unwrap();
        let exact = PI * 0.3 * 0.3;
        let h = 1.0 / 256.0;
        assert!((m.measure - exact).abs() < 2.0 * PI * 0.3 * h);
    }

    #[test]
    fn concentric_gaps() {
        let grid = unit_grid(2, 128);
        let h = 1.0 / 128.0;
        let outer = ShapeSpec::ball(&[0.5, 0.5], 0.45).unwrap();
        let inner = ShapeSpec::ball(&[0.5, 0.5], 0.3).unwrap();
        let gap = boundary_gap(&inner, &outer, &grid).unwrap();
        assert!((gap - 0.15).abs() < h);
        let shifted = ShapeSpec::ball(&[0.6, 0.5], 0.3).unwrap();
        let gap = boundary_gap(&shifted, &outer, &grid).unwrap();
        assert!((gap - 0.05).abs() < h);
        let big = ShapeSpec::ball(&[0.5, 0.5], 0.46).unwrap();
        assert!(matches!(
            boundary_gap(&big, &outer, &grid),
            Err(LabError::Geometry(_))
        ));
    }

    #[test]
    fn constant_a_cases() {
        // scaled version of the unit-ball examples inside [0,1]^2
        let grid = unit_grid(2, 128);
        let h = 1.0 / 128.0;
        let c = [0.5, 0.5];
        let domain = |rv: f64| DomainSpec {
            omega: BoxDomain::unit(2),
            obstacle: ShapeSpec::ball(&c, 0.25).unwrap(),
            subdomain: ShapeSpec::ball(&c, rv).unwrap(),
        };
        let a = constant_a(&domain(0.15), &grid).unwrap();
        assert!((a - 0.1).abs() < h, "gap binds: {a}");
        let a = constant_a(&domain(0.05), &grid).unwrap();
        assert_eq!(a, 0.05, "reach binds");
    }

    #[test]
    fn reference_domain_constant() {
        let grid = unit_grid(2, 256);
        let d = DomainSpec::reference(2);
        let gaps = d.validate(&grid).unwrap();
        assert!((gaps.subdomain_to_obstacle - 0.15).abs() < 1e-6);
        assert!((gaps.obstacle_to_boundary - 0.2).abs() < 1e-4, "{gaps:?}");
        assert!((constant_a(&d, &grid).unwrap() - 0.15).abs() < 1e-6);
    }

    #[test]
    fn shell_family_two_element_and_nesting() {
        let grid = unit_grid(2, 128);
        let d = DomainSpec::reference(2);
        let one = shell_family(&d, 0.5, 1, &grid).unwrap();
        assert_eq!(one.len(), 2);
        assert_eq!(
            one[0].mask.cells,
            offset_region(&d.obstacle, 0.0, &grid).unwrap().cells
        );
        assert_eq!(
            one[1].mask.cells,
            offset_region(&d.subdomain, 0.0, &grid).unwrap().cells
        );
        let four = shell_family(&d, 0.8, 4, &grid).unwrap();
        for pair in four.windows(2) {
            assert!(pair[1].mask.is_subset_of(&pair[0].mask));
        }
        let offsets: Vec<f64> = four[1..].iter().map(|s| s.offset.unwrap()).collect();
        let a = 0.15;
        for (j, o) in offsets.iter().enumerate() {
            let expected = 0.8 * a * (1.0 - (j + 1) as f64 / 4.0);
            assert!((o - expected).abs() < 1e-6);
        }
        assert!(shell_family(&d, 1.0, 3, &grid).is_ok());
        assert!(shell_family(&d, 1.2, 4, &grid).is_err());
        assert!(shell_family(&d, 0.5, 0, &grid).is_err());
    }

    #[test]
    fn mask_cell_list_export() {
        let grid = unit_grid(2, 8);
        let b = ShapeSpec::ball(&[0.5, 0.5], 0.2).unwrap();
        let m = offset_region(&b, 0.0, &grid).unwrap();
        let mut buf = Vec::new();
        m.write_cell_list(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), m.count() + 1);
        assert!(text.starts_with("i,j,x,y"));
    }
}
