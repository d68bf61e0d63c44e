//! Region-restricted norms of stored solutions: `L2` in space per snapshot,
//! their supremum in time, space-time `L2` over windows and pointwise maxima
//! over parabolic cylinders.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::discretize::Field;
use crate::error::{LabError, Result};
use crate::evolve::SnapshotStore;
use crate::geometry::RegionMask;

/// `Σ_{mask} u² · cell volume`.
pub fn l2_sq(field: &Field, mask: &RegionMask) -> Result<f64> {
    if field.grid != mask.grid {
        return Err(LabError::input("field and mask live on different grids"));
    }
    let sum: f64 = field
        .values
        .iter()
        .zip(&mask.cells)
        .filter(|(_, &m)| m)
        .map(|(v, _)| v * v)
        .sum();
    Ok(sum * field.grid.cell_volume())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormSeries {
    pub label: String,
    /// `(time, |u(t)|^2_{L2(region)})`
    pub entries: Vec<(f64, f64)>,
    pub sup: f64,
    pub argmax_time: f64,
}

impl NormSeries {
    pub fn from_entries(label: impl Into<String>, entries: Vec<(f64, f64)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(LabError::input("norm series needs at least one entry"));
        }
        let (mut argmax_time, mut sup) = entries[0];
        for &(t, v) in &entries[1..] {
            if v > sup {
                sup = v;
                argmax_time = t;
            }
        }
        Ok(NormSeries {
            label: label.into(),
            entries,
            sup,
            argmax_time,
        })
    }

    /// Linear interpolation of the series at `t` (inside the stored range).
    pub fn value_at(&self, t: f64) -> f64 {
        let e = &self.entries;
        match e.iter().position(|&(ti, _)| ti >= t) {
            Some(0) => e[0].1,
            Some(i) => {
                let (t0, v0) = e[i - 1];
                let (t1, v1) = e[i];
                v0 + (v1 - v0) * (t - t0) / (t1 - t0)
            }
            None => e[e.len() - 1].1,
        }
    }

    pub fn time_range(&self) -> (f64, f64) {
        (self.entries[0].0, self.entries[self.entries.len() - 1].0)
    }

    /// Trapezoidal integral of the piecewise-linear interpolant over
    /// `[start, end]`.
    pub fn integrate(&self, start: f64, end: f64) -> Result<f64> {
        let (lo, hi) = self.time_range();
        let slack = 1e-12 * hi.abs().max(1.0);
        if !(end >= start) || start < lo - slack || end > hi + slack {
            return Err(LabError::input(format!(
                "window [{start}, {end}] outside the stored range [{lo}, {hi}]"
            )));
        }
        let start = start.max(lo);
        let end = end.min(hi);
        let mut nodes = vec![(start, self.value_at(start))];
        nodes.extend(
            self.entries
                .iter()
                .filter(|&&(t, _)| t > start && t < end)
                .copied(),
        );
        nodes.push((end, self.value_at(end)));
        Ok(nodes
            .windows(2)
            .map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1))
            .sum())
    }

    /// CSV with a commented header naming the region and the quantity.
    pub fn write_csv<W: Write>(&self, mut out: W, quantity: &str) -> Result<()> {
        writeln!(out, "# region: {}", self.label)?;
        writeln!(out, "# quantity: {quantity}")?;
        writeln!(out, "time,value")?;
        for (t, v) in &self.entries {
            writeln!(out, "{t:.17e},{v:.17e}")?;
        }
        Ok(())
    }
}

/// `|u(t)|^2_{L2(mask)}` at every snapshot, with its maximum.
pub fn sup_over_time(store: &SnapshotStore, mask: &RegionMask, label: &str) -> Result<NormSeries> {
    if store.snapshots.is_empty() {
        return Err(LabError::input("empty snapshot store"));
    }
    let entries = store
        .snapshots
        .iter()
        .map(|f| Ok((f.time, l2_sq(f, mask)?)))
        .collect::<Result<Vec<_>>>()?;
    NormSeries::from_entries(label, entries)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimeNorm {
    pub label: String,
    pub start: f64,
    pub length: f64,
    pub value: f64,
}

/// `∫_s^{s+τ} |u(t)|^2_{L2(mask)} dt` by the trapezoidal rule over the stored
/// snapshots, interpolating linearly at the window ends.
pub fn spacetime_l2_sq(
    store: &SnapshotStore,
    mask: &RegionMask,
    window: (f64, f64),
    label: &str,
) -> Result<SpaceTimeNorm> {
    let series = sup_over_time(store, mask, label)?;
    spacetime_from_series(&series, window)
}

pub fn spacetime_from_series(series: &NormSeries, window: (f64, f64)) -> Result<SpaceTimeNorm> {
    let (start, length) = window;
    if !(length >= 0.0) {
        return Err(LabError::input("window length must be nonnegative"));
    }
    Ok(SpaceTimeNorm {
        label: series.label.clone(),
        start,
        length,
        value: series.integrate(start, start + length)?,
    })
}

/// `max u²` over snapshots with time in `[s, s+τ]` and cells in `mask`.
pub fn sup_pointwise(store: &SnapshotStore, mask: &RegionMask, window: (f64, f64)) -> Result<f64> {
    let (start, length) = window;
    let end = start + length;
    let slack = 1e-12 * end.abs().max(1.0);
    let mut found = false;
    let mut sup: f64 = 0.0;
    for f in &store.snapshots {
        if f.time < start - slack || f.time > end + slack {
            continue;
        }
        if f.grid != mask.grid {
            return Err(LabError::input("field and mask live on different grids"));
        }
        found = true;
        for (v, &m) in f.values.iter().zip(&mask.cells) {
            if m {
                sup = sup.max(v * v);
            }
        }
    }
    if !found {
        return Err(LabError::input(format!(
            "no snapshot inside the window [{start}, {end}]"
        )));
    }
    Ok(sup)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretize::{build_grid_box, Grid};
    use crate::evolve::SnapshotStore;
    use crate::geometry::{offset_region, BoxDomain, ShapeSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid() -> Grid {
        build_grid_box(&BoxDomain::unit(2), &[16, 16]).unwrap()
    }

    fn store_of(fields: Vec<Field>) -> SnapshotStore {
        SnapshotStore {
            snapshots: fields,
            steps: Vec::new(),
            cg_rel_tol: 1e-12,
        }
    }

    fn at(mut f: Field, t: f64) -> Field {
        f.time = t;
        f
    }

    #[test]
    fn l2_examples() {
        let g = grid();
        assert_eq!(l2_sq(&Field::constant(g, 2.0), &RegionMask::full(g)).unwrap(), 4.0);
        assert_eq!(l2_sq(&Field::constant(g, 2.0), &RegionMask::empty(g)).unwrap(), 0.0);
    }

    /// Kahan–Babuška summation as the extended-precision reference.
    fn neumaier_sum(values: impl Iterator<Item = f64>) -> f64 {
        let mut sum = 0.0f64;
        let mut comp = 0.0f64;
        for v in values {
            let t = sum + v;
            if sum.abs() >= v.abs() {
                comp += (sum - t) + v;
            } else {
                comp += (v - t) + sum;
            }
            sum = t;
        }
        sum + comp
    }

    #[test]
    fn l2_matches_compensated_summation() {
        let g = build_grid_box(&BoxDomain::unit(2), &[128, 128]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let values: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let f = Field::new(g, values.clone(), 0.0).unwrap();
        let got = l2_sq(&f, &RegionMask::full(g)).unwrap();
        let reference = neumaier_sum(values.iter().map(|v| v * v)) * g.cell_volume();
        assert!((got - reference).abs() <= 1e-13 * reference);
    }

    #[test]
    fn region_monotonicity() {
        let g = grid();
        let b = ShapeSpec::ball(&[0.5, 0.5], 0.3).unwrap();
        let small = offset_region(&b, -0.1, &g).unwrap();
        let large = offset_region(&b, 0.1, &g).unwrap();
        let f = Field::from_fn(g, |p| p[0].sin() - p[1]);
        assert!(l2_sq(&f, &small).unwrap() <= l2_sq(&f, &large).unwrap());
    }

    #[test]
    fn sup_series() {
        let g = grid();
        let single = store_of(vec![Field::constant(g, 3.0)]);
        let s = sup_over_time(&single, &RegionMask::full(g), "omega").unwrap();
        assert_eq!(s.sup, 9.0);
        assert_eq!(s.argmax_time, 0.0);
        let store = store_of(
            [1.0, 3.0, 2.0]
                .iter()
                .enumerate()
                .map(|(i, &c)| at(Field::constant(g, c), i as f64 * 0.1))
                .collect(),
        );
        let s = sup_over_time(&store, &RegionMask::full(g), "omega").unwrap();
        assert_eq!(s.sup, 9.0);
        assert!((s.argmax_time - 0.1).abs() < 1e-15);
        assert!(sup_over_time(&store_of(vec![]), &RegionMask::full(g), "x").is_err());
    }

    #[test]
    fn spacetime_constant_and_additivity() {
        let g = grid();
        let fields: Vec<Field> = (0..=10)
            .map(|i| at(Field::constant(g, 2.0), i as f64 * 0.1))
            .collect();
        let store = store_of(fields);
        let full = RegionMask::full(g);
        let v = spacetime_l2_sq(&store, &full, (0.2, 0.5), "omega").unwrap();
        assert!((v.value - 4.0 * 0.5).abs() < 1e-12);
        let zero = store_of(vec![Field::constant(g, 0.0), at(Field::constant(g, 0.0), 1.0)]);
        assert_eq!(spacetime_l2_sq(&zero, &full, (0.0, 1.0), "z").unwrap().value, 0.0);
        assert!(spacetime_l2_sq(&store, &full, (0.8, 0.5), "omega").is_err());
    }

    #[test]
    fn spacetime_halves_sum_to_whole() {
        let g = grid();
        let fields: Vec<Field> = (0..=20)
            .map(|i| {
                let t = i as f64 * 0.05;
                at(Field::from_fn(g, |p| (p[0] + t).cos() * (-t).exp()), t)
            })
            .collect();
        let store = store_of(fields);
        let mask = RegionMask::full(g);
        let whole = spacetime_l2_sq(&store, &mask, (0.13, 0.61), "o").unwrap().value;
        let a = spacetime_l2_sq(&store, &mask, (0.13, 0.3), "o").unwrap().value;
        let b = spacetime_l2_sq(&store, &mask, (0.43, 0.31), "o").unwrap().value;
        assert!((a + b - whole).abs() <= 1e-12 * whole);
        let inner = spacetime_l2_sq(&store, &mask, (0.2, 0.3), "o").unwrap().value;
        assert!(inner <= whole);
    }

    #[test]
    fn pointwise_sup() {
        let g = grid();
        let store = store_of(vec![
            Field::constant(g, 1.5),
            at(Field::constant(g, 1.5), 0.1),
        ]);
        let mask = RegionMask::full(g);
        assert_eq!(sup_pointwise(&store, &mask, (0.0, 0.1)).unwrap(), 2.25);
        assert!(sup_pointwise(&store, &mask, (0.5, 0.1)).is_err());
    }

    #[test]
    fn pointwise_dominates_average_and_spacetime() {
        let g = grid();
        let fields: Vec<Field> = (0..=4)
            .map(|i| {
                let t = i as f64 * 0.1;
                at(Field::from_fn(g, |p| (p[0] * p[1] + t).exp()), t)
            })
            .collect();
        let store = store_of(fields);
        let b = ShapeSpec::ball(&[0.5, 0.5], 0.3).unwrap();
        let mask = offset_region(&b, 0.0, &g).unwrap();
        let sup = sup_pointwise(&store, &mask, (0.0, 0.4)).unwrap();
        for f in &store.snapshots {
            assert!(sup >= l2_sq(f, &mask).unwrap() / mask.measure);
        }
        let st = spacetime_l2_sq(&store, &mask, (0.0, 0.4), "b").unwrap().value;
        assert!(sup * mask.measure * 0.4 >= st);
    }

    #[test]
    fn series_csv_header() {
        let s = NormSeries::from_entries("V", vec![(0.0, 1.0), (0.5, 2.0)]).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf, "sup_t |u|^2_L2(V)").unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("# region: V"));
        assert_eq!(text.lines().count(), 5);
    }

    #[test]
    fn dense_scan_oracle_for_pointwise_sup() {
        let g = grid();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let fields: Vec<Field> = (0..6)
            .map(|i| {
                let vals = (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                Field::new(g, vals, i as f64 * 0.2).unwrap()
            })
            .collect();
        let b = ShapeSpec::ball(&[0.5, 0.5], 0.3).unwrap();
        let mask = offset_region(&b, -0.1, &g).unwrap();
        let store = store_of(fields.clone());
        let got = sup_pointwise(&store, &mask, (0.2, 0.6)).unwrap();
        let mut expected: f64 = 0.0;
        for f in fields.iter().filter(|f| f.time >= 0.2 - 1e-12 && f.time <= 0.8 + 1e-12) {
            for idx in 0..g.len() {
                if mask.cells[idx] {
                    expected = expected.max(f.values[idx].powi(2));
                }
            }
        }
        assert_eq!(got, expected);
    }
}
