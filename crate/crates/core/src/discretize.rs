//! Cell-centred Cartesian grid, the Neumann Laplacian with the killing term,
//! and the zero-extended initial data.
//!
//! Cells are ordered with the first axis fastest:
//! `index = i + n0 * (j + n1 * k)`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::geometry::{offset_region, BoxDomain, DomainSpec, RegionMask};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub dim: usize,
    /// Cells per axis; unused axes hold 1.
    pub cells: [usize; 3],
    pub spacing: [f64; 3],
    pub lower: [f64; 3],
}

impl Grid {
    pub fn len(&self) -> usize {
        self.cells[..self.dim].iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing[..self.dim].iter().product()
    }

    pub fn max_spacing(&self) -> f64 {
        self.spacing[..self.dim].iter().cloned().fold(0.0, f64::max)
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacing[..self.dim]
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn strides(&self) -> [usize; 3] {
        [1, self.cells[0], self.cells[0] * self.cells[1]]
    }

    pub fn multi_index(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.cells[0];
        let j = (idx / self.cells[0]) % self.cells[1];
        let k = idx / (self.cells[0] * self.cells[1]);
        [i, j, k]
    }

    pub fn linear_index(&self, mi: [usize; 3]) -> usize {
        mi[0] + self.cells[0] * (mi[1] + self.cells[1] * mi[2])
    }

    /// Cell centre; unused coordinates are zero.
    pub fn center(&self, idx: usize) -> [f64; 3] {
        let mi = self.multi_index(idx);
        let mut c = [0.0; 3];
        for a in 0..self.dim {
            c[a] = self.lower[a] + (mi[a] as f64 + 0.5) * self.spacing[a];
        }
        c
    }
}

pub fn build_grid_box(omega: &BoxDomain, cells_per_axis: &[usize]) -> Result<Grid> {
    omega.validate()?;
    let m = omega.dim();
    if cells_per_axis.len() != m {
        return Err(LabError::input(format!(
            "expected {m} cell counts, got {}",
            cells_per_axis.len()
        )));
    }
    if let Some(&n) = cells_per_axis.iter().find(|&&n| n < 4) {
        return Err(LabError::input(format!(
            "cell count {n} below the minimum of 4 per axis"
        )));
    }
    let mut cells = [1usize; 3];
    let mut spacing = [1.0; 3];
    let mut lower = [0.0; 3];
    for a in 0..m {
        cells[a] = cells_per_axis[a];
        spacing[a] = (omega.upper[a] - omega.lower[a]) / cells[a] as f64;
        lower[a] = omega.lower[a];
    }
    Ok(Grid {
        dim: m,
        cells,
        spacing,
        lower,
    })
}

/// Uniform grid covering `domain.omega` exactly.
pub fn build_grid(domain: &DomainSpec, cells_per_axis: &[usize]) -> Result<Grid> {
    build_grid_box(&domain.omega, cells_per_axis)
}

/// A scalar state on a grid at time `time`.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub time: f64,
}

const FIELD_MAGIC: &[u8; 4] = b"CLF1";

impl Field {
    pub fn new(grid: Grid, values: Vec<f64>, time: f64) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(LabError::input(format!(
                "field has {} values for {} cells",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(LabError::input("field contains non-finite values"));
        }
        Ok(Field { grid, values, time })
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        Field {
            values: vec![value; grid.len()],
            grid,
            time: 0.0,
        }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..grid.len())
            .map(|i| f(&grid.center(i)[..grid.dim]))
            .collect();
        Field {
            grid,
            values,
            time: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// `∫ u dx` by the midpoint rule.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    /// Little-endian dump: magic, dimension, cells, spacing, lower corner,
    /// time, then the values in cell order.
    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(FIELD_MAGIC)?;
        out.write_all(&(self.grid.dim as u64).to_le_bytes())?;
        for n in self.grid.cells {
            out.write_all(&(n as u64).to_le_bytes())?;
        }
        for v in self.grid.spacing.iter().chain(&self.grid.lower) {
            out.write_all(&v.to_le_bytes())?;
        }
        out.write_all(&self.time.to_le_bytes())?;
        for v in &self.values {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != FIELD_MAGIC {
            return Err(LabError::input("not a field dump"));
        }
        let mut word = [0u8; 8];
        let mut next_u64 = |input: &mut R| -> Result<u64> {
            input.read_exact(&mut word)?;
            Ok(u64::from_le_bytes(word))
        };
        let dim = next_u64(&mut input)? as usize;
        let mut cells = [0usize; 3];
        for c in &mut cells {
            *c = next_u64(&mut input)? as usize;
        }
        let mut floats = [0.0f64; 7];
        for f in &mut floats {
            *f = f64::from_bits(next_u64(&mut input)?);
        }
        if !(1..=3).contains(&dim) {
            return Err(LabError::input("bad dimension in field dump"));
        }
        let grid = Grid {
            dim,
            cells,
            spacing: [floats[0], floats[1], floats[2]],
            lower: [floats[3], floats[4], floats[5]],
        };
        let mut values = Vec::with_capacity(grid.len());
        for _ in 0..grid.len() {
            values.push(f64::from_bits(next_u64(&mut input)?));
        }
        Field::new(grid, values, floats[6])
    }

    /// CSV with the cell index, centre coordinates and value.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let m = self.grid.dim;
        let names = ["x", "y", "z"];
        writeln!(out, "cell,{},value", names[..m].join(","))?;
        for (idx, v) in self.values.iter().enumerate() {
            let c = self.grid.center(idx);
            let coords: Vec<String> = c[..m].iter().map(|x| format!("{x:.17e}")).collect();
            writeln!(out, "{idx},{},{v:.17e}", coords.join(","))?;
        }
        Ok(())
    }
}

/// Linear maps on grid vectors.
pub trait LinearOperator {
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

/// `A_lambda = Δ_h − lambda 1_{Omega_0}` with reflecting ghost cells at the
/// box boundary (zero normal flux).
#[derive(Clone, Debug)]
pub struct OperatorSpec {
    pub grid: Grid,
    pub lambda: f64,
    pub obstacle: RegionMask,
    inv_h2: [f64; 3],
}

impl OperatorSpec {
    pub fn new(grid: Grid, lambda: f64, obstacle: RegionMask) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(LabError::input("lambda must be finite and nonnegative"));
        }
        if obstacle.grid != grid {
            return Err(LabError::input("obstacle mask lives on a different grid"));
        }
        let mut inv_h2 = [0.0; 3];
        for a in 0..grid.dim {
            inv_h2[a] = 1.0 / (grid.spacing[a] * grid.spacing[a]);
        }
        Ok(OperatorSpec {
            grid,
            lambda,
            obstacle,
            inv_h2,
        })
    }

    /// Diagonal entries of `A_lambda`.
    pub fn diagonal(&self) -> Vec<f64> {
        let g = &self.grid;
        (0..g.len())
            .map(|idx| {
                let mi = g.multi_index(idx);
                let mut d = 0.0;
                for a in 0..g.dim {
                    let n = g.cells[a];
                    let links = usize::from(mi[a] > 0) + usize::from(mi[a] + 1 < n);
                    d -= links as f64 * self.inv_h2[a];
                }
                if self.obstacle.cells[idx] {
                    d -= self.lambda;
                }
                d
            })
            .collect()
    }

    /// `y = Δ_h x` (no killing term).
    pub fn apply_laplacian(&self, x: &[f64], y: &mut [f64]) {
        let g = &self.grid;
        let [n0, n1, n2] = g.cells;
        let [_, s1, s2] = g.strides();
        let [c0, c1, c2] = self.inv_h2;
        let use1 = g.dim > 1;
        let use2 = g.dim > 2;
        for k in 0..n2 {
            for j in 0..n1 {
                let row = j * s1 + k * s2;
                for i in 0..n0 {
                    let idx = row + i;
                    let u = x[idx];
                    let mut acc = 0.0;
                    if i > 0 {
                        acc += c0 * (x[idx - 1] - u);
                    }
                    if i + 1 < n0 {
                        acc += c0 * (x[idx + 1] - u);
                    }
                    if use1 {
                        if j > 0 {
                            acc += c1 * (x[idx - s1] - u);
                        }
                        if j + 1 < n1 {
                            acc += c1 * (x[idx + s1] - u);
                        }
                    }
                    if use2 {
                        if k > 0 {
                            acc += c2 * (x[idx - s2] - u);
                        }
                        if k + 1 < n2 {
                            acc += c2 * (x[idx + s2] - u);
                        }
                    }
                    y[idx] = acc;
                }
            }
        }
    }
}

impl LinearOperator for OperatorSpec {
    fn len(&self) -> usize {
        self.grid.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.apply_laplacian(x, y);
        if self.lambda > 0.0 {
            for ((yi, xi), &inside) in y.iter_mut().zip(x).zip(&self.obstacle.cells) {
                if inside {
                    *yi -= self.lambda * xi;
                }
            }
        }
    }
}

/// Builds `A_lambda` for the obstacle of `domain` on `grid`.
pub fn assemble_operator(grid: &Grid, domain: &DomainSpec, lambda: f64) -> Result<OperatorSpec> {
    if grid.dim != domain.dim() {
        return Err(LabError::input("grid and domain dimensions differ"));
    }
    let obstacle = offset_region(&domain.obstacle, 0.0, grid)?;
    OperatorSpec::new(*grid, lambda, obstacle)
}

/// Distance-ramp initial data `g = G min(d_0 / delta, 1)` on `Omega_1`,
/// extended by zero into the obstacle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialDataSpec {
    pub amplitude: f64,
    pub ramp_width: f64,
}

impl Default for InitialDataSpec {
    fn default() -> Self {
        InitialDataSpec {
            amplitude: 1.0,
            ramp_width: 0.1,
        }
    }
}

impl InitialDataSpec {
    /// Profile as a function of the signed distance to `Gamma_0`.
    pub fn profile(&self, sdf_obstacle: f64) -> f64 {
        if sdf_obstacle <= 0.0 {
            0.0
        } else {
            self.amplitude * (sdf_obstacle / self.ramp_width).min(1.0)
        }
    }
}

pub fn build_initial(grid: &Grid, domain: &DomainSpec, spec: &InitialDataSpec) -> Result<Field> {
    if !(spec.ramp_width > 0.0) {
        return Err(LabError::input("ramp width must be positive"));
    }
    if !(spec.amplitude >= 0.0) || !spec.amplitude.is_finite() {
        return Err(LabError::input("amplitude must be finite and nonnegative"));
    }
    let gaps = domain.validate(grid)?;
    if spec.ramp_width >= gaps.obstacle_to_boundary {
        return Err(LabError::input(format!(
            "ramp width {} not below the obstacle-to-boundary gap {}",
            spec.ramp_width, gaps.obstacle_to_boundary
        )));
    }
    let values = (0..grid.len())
        .map(|idx| spec.profile(domain.obstacle.distance(&grid.center(idx))))
        .collect();
    Field::new(*grid, values, 0.0)
}

/// `Σ_{cells in mask} |∇_h u|² · cell volume` with central differences,
/// one-sided at the box boundary.
pub fn grad_l2_sq(field: &Field, mask: &RegionMask) -> Result<f64> {
    if field.grid != mask.grid {
        return Err(LabError::input("field and mask live on different grids"));
    }
    let g = &field.grid;
    let strides = g.strides();
    let u = &field.values;
    let mut total = 0.0;
    for idx in mask.indices() {
        let mi = g.multi_index(idx);
        let mut sq = 0.0;
        for a in 0..g.dim {
            let n = g.cells[a];
            let s = strides[a];
            let h = g.spacing[a];
            let d = if mi[a] == 0 {
                (u[idx + s] - u[idx]) / h
            } else if mi[a] + 1 == n {
                (u[idx] - u[idx - s]) / h
            } else {
                (u[idx + s] - u[idx - s]) / (2.0 * h)
            };
            sq += d * d;
        }
        total += sq;
    }
    Ok(total * g.cell_volume())
}
