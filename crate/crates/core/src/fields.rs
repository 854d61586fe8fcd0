//! Space-time grid functions on truncated boxes, their terminal envelopes,
//! sliding suprema, moduli of continuity and Lipschitz regularization.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::linalg::Vector;
use crate::scalar::{smax, smin, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    /// Endpoints `−X` and `X` are identified.
    Periodic,
    /// Values outside the box replicate the nearest edge value.
    Clamped,
}

/// Uniform lattice on `[−X, X]ⁿ` with `N + 1` points per axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SpatialLattice<S> {
    dim: usize,
    x_max: S,
    dx: S,
    cells: usize,
    boundary: Boundary,
}

impl<S: Scalar> SpatialLattice<S> {
    /// Uses `N = ⌈2X/dx⌉` cells per axis; the effective step is `2X/N ≤ dx`.
    pub fn new(dim: usize, x_max: S, dx: S, boundary: Boundary) -> Result<Self> {
        if !(dim == 1 || dim == 2) {
            return Err(LabError::PreconditionFailed(format!(
                "dimension must be 1 or 2, got {dim}"
            )));
        }
        if !(x_max > S::zero()) || !(dx > S::zero()) || !x_max.is_finite() || !dx.is_finite() {
            return Err(LabError::PreconditionFailed(format!(
                "extent and step must be positive, got X={x_max}, dx={dx}"
            )));
        }
        let cells = (S::two() * x_max / dx - S::lit(1e-9))
            .ceil()
            .to_usize()
            .unwrap_or(1)
            .max(2);
        Ok(Self {
            dim,
            x_max,
            dx: S::two() * x_max / S::from_usize_lossy(cells),
            cells,
            boundary,
        })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn x_max(&self) -> S {
        self.x_max
    }

    #[inline]
    pub fn dx(&self) -> S {
        self.dx
    }

    #[inline]
    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    /// Number of cells `N` per axis.
    #[inline]
    pub fn cells(&self) -> usize {
        self.cells
    }

    /// Points per axis, `N + 1`.
    #[inline]
    pub fn points_per_axis(&self) -> usize {
        self.cells + 1
    }

    /// Total number of lattice points.
    #[inline]
    pub fn len(&self) -> usize {
        self.points_per_axis().pow(self.dim as u32)
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn coord(&self, i: usize) -> S {
        -self.x_max + self.dx * S::from_usize_lossy(i)
    }

    /// Per-axis indices of a flat index (x-axis major).
    #[inline]
    pub fn multi(&self, flat: usize) -> [usize; 2] {
        let np = self.points_per_axis();
        if self.dim == 1 {
            [flat, 0]
        } else {
            [flat / np, flat % np]
        }
    }

    #[inline]
    pub fn flat(&self, idx: [usize; 2]) -> usize {
        if self.dim == 1 {
            idx[0]
        } else {
            idx[0] * self.points_per_axis() + idx[1]
        }
    }

    pub fn point(&self, flat: usize) -> Vector<S> {
        let m = self.multi(flat);
        let mut v = Vector::zeros(self.dim);
        for a in 0..self.dim {
            v[a] = self.coord(m[a]);
        }
        v
    }

    /// Nearest lattice index of a point inside the box.
    pub fn index_of(&self, x: &Vector<S>) -> Result<usize> {
        if x.dim() != self.dim {
            return Err(LabError::OffLattice(format!("point {x:?} has wrong dimension")));
        }
        let mut idx = [0usize; 2];
        for a in 0..self.dim {
            let f = (x[a] + self.x_max) / self.dx;
            let r = f.round();
            if (f - r).abs() > S::lit(1e-6) || r < S::zero() || r > S::from_usize_lossy(self.cells) {
                return Err(LabError::OffLattice(format!("{x:?} is not a lattice point")));
            }
            idx[a] = r.to_usize().unwrap_or(0);
        }
        Ok(self.flat(idx))
    }

    /// Index reached from `i` by `step` along one axis, or `None` when a
    /// clamped lattice is left. Periodic lattices wrap modulo `N`.
    #[inline]
    pub fn shift_axis_index(&self, i: usize, step: isize) -> Option<usize> {
        let n = self.cells as isize;
        let j = i as isize + step;
        match self.boundary {
            Boundary::Periodic => Some(j.rem_euclid(n) as usize),
            Boundary::Clamped => (0..=n).contains(&j).then_some(j as usize),
        }
    }

    /// Same as [`shift_axis_index`](Self::shift_axis_index) but clamped lattices
    /// replicate the edge (ghost value = edge value).
    #[inline]
    pub fn shift_axis_index_ghost(&self, i: usize, step: isize) -> usize {
        let n = self.cells as isize;
        let j = i as isize + step;
        match self.boundary {
            Boundary::Periodic => j.rem_euclid(n) as usize,
            Boundary::Clamped => j.clamp(0, n) as usize,
        }
    }

    pub fn shift(&self, flat: usize, offset: [isize; 2]) -> Option<usize> {
        let m = self.multi(flat);
        let mut out = [0usize; 2];
        for a in 0..self.dim {
            out[a] = self.shift_axis_index(m[a], offset[a])?;
        }
        Some(self.flat(out))
    }

    pub fn shift_ghost(&self, flat: usize, offset: [isize; 2]) -> usize {
        let m = self.multi(flat);
        let mut out = [0usize; 2];
        for a in 0..self.dim {
            out[a] = self.shift_axis_index_ghost(m[a], offset[a]);
        }
        self.flat(out)
    }

    /// Distance in cells from `flat` to the nearest face of the box.
    pub fn cells_to_boundary(&self, flat: usize) -> usize {
        let m = self.multi(flat);
        (0..self.dim).map(|a| m[a].min(self.cells - m[a])).min().unwrap_or(0)
    }

    /// Integer offsets `(a, b)` with `|(a, b)|·dx ≤ h`, in lexicographic order.
    pub fn offsets_within(&self, h: S) -> Vec<[isize; 2]> {
        let r = (h / self.dx + S::lit(1e-9))
            .floor()
            .to_isize()
            .unwrap_or(0)
            .min(self.cells as isize);
        let r2 = (h / self.dx) * (h / self.dx) + S::lit(1e-9);
        let mut out = Vec::new();
        if self.dim == 1 {
            for a in -r..=r {
                out.push([a, 0]);
            }
        } else {
            for a in -r..=r {
                for b in -r..=r {
                    if S::from_isize(a * a + b * b).unwrap_or(S::infinity()) <= r2 {
                        out.push([a, b]);
                    }
                }
            }
        }
        out
    }

    /// Copies the `i = 0` values onto `i = N` along every periodic axis so the
    /// identified endpoints stay bit-identical.
    pub fn sync_periodic(&self, values: &mut [S]) {
        if self.boundary != Boundary::Periodic {
            return;
        }
        let np = self.points_per_axis();
        let n = self.cells;
        if self.dim == 1 {
            values[n] = values[0];
        } else {
            for j in 0..np {
                values[n * np + j] = values[j];
            }
            for i in 0..np {
                values[i * np + n] = values[i * np];
            }
        }
    }
}

/// Values on one time slice.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpatialGrid<S> {
    lattice: SpatialLattice<S>,
    values: Vec<S>,
}

impl<S: Scalar> SpatialGrid<S> {
    pub fn from_values(lattice: SpatialLattice<S>, values: Vec<S>) -> Result<Self> {
        if values.len() != lattice.len() {
            return Err(LabError::LatticeMismatch(format!(
                "expected {} values, got {}",
                lattice.len(),
                values.len()
            )));
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(LabError::PreconditionFailed(format!("non-finite value at index {bad}")));
        }
        Ok(Self { lattice, values })
    }

    pub fn from_fn(lattice: SpatialLattice<S>, f: impl Fn(&Vector<S>) -> S) -> Self {
        let values = (0..lattice.len()).map(|i| f(&lattice.point(i))).collect();
        Self { lattice, values }
    }

    pub fn constant(lattice: SpatialLattice<S>, c: S) -> Self {
        Self {
            lattice,
            values: vec![c; lattice.len()],
        }
    }

    #[inline]
    pub fn lattice(&self) -> &SpatialLattice<S> {
        &self.lattice
    }

    #[inline]
    pub fn values(&self) -> &[S] {
        &self.values
    }

    #[inline]
    pub fn get(&self, i: usize) -> S {
        self.values[i]
    }

    pub fn sup_norm(&self) -> S {
        self.values.iter().fold(S::zero(), |m, v| smax(m, v.abs()))
    }

    pub fn max(&self) -> S {
        self.values.iter().copied().fold(-S::infinity(), smax)
    }

    pub fn min(&self) -> S {
        self.values.iter().copied().fold(S::infinity(), smin)
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Self {
            lattice: self.lattice,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(S, S) -> S) -> Result<Self> {
        same_lattice(&self.lattice, &other.lattice)?;
        Ok(Self {
            lattice: self.lattice,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    /// `max |f − g|`.
    pub fn sup_distance(&self, other: &Self) -> Result<S> {
        same_lattice(&self.lattice, &other.lattice)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(S::zero(), |m, (&a, &b)| smax(m, (a - b).abs())))
    }

    /// Smallest `L` with `|f(x) − f(y)| ≤ L|x − y|` over all lattice pairs.
    pub fn lipschitz_constant(&self) -> S {
        let n = self.values.len();
        let mut best = S::zero();
        for i in 0..n {
            let xi = self.lattice.point(i);
            for j in (i + 1)..n {
                let d = (xi - self.lattice.point(j)).norm();
                best = smax(best, (self.values[i] - self.values[j]).abs() / d);
            }
        }
        best
    }

    /// Reads a CSV with header `x,value` (or `x,y,value`) listing every
    /// lattice point once.
    pub fn read_csv(lattice: SpatialLattice<S>, path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path).map_err(|e| LabError::Parse(e.to_string()))?;
        let mut values = vec![S::nan(); lattice.len()];
        let mut seen = 0usize;
        for rec in rdr.records() {
            let rec = rec.map_err(|e| LabError::Parse(e.to_string()))?;
            if rec.len() != lattice.dim() + 1 {
                return Err(LabError::Parse(format!(
                    "expected {} columns, got {}",
                    lattice.dim() + 1,
                    rec.len()
                )));
            }
            let nums: Vec<f64> = rec
                .iter()
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|e| LabError::Parse(format!("`{s}`: {e}")))
                })
                .collect::<Result<_>>()?;
            let x = Vector::from_slice(&nums[..lattice.dim()].iter().map(|&v| S::lit(v)).collect::<Vec<_>>());
            let idx = lattice.index_of(&x)?;
            values[idx] = S::lit(nums[lattice.dim()]);
            seen += 1;
        }
        if seen != lattice.len() || values.iter().any(|v| v.is_nan()) {
            return Err(LabError::LatticeMismatch(format!(
                "file lists {seen} points, lattice has {}",
                lattice.len()
            )));
        }
        Self::from_values(lattice, values)
    }
}

fn same_lattice<S: Scalar>(a: &SpatialLattice<S>, b: &SpatialLattice<S>) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(LabError::LatticeMismatch(format!("{a:?} vs {b:?}")))
    }
}

/// Real values on the space-time lattice `{k·Δt} × lattice`, time-major.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridFunction<S> {
    lattice: SpatialLattice<S>,
    dt: S,
    slices: usize,
    values: Vec<S>,
}

/// Number of steps `K = ⌈T/dt⌉`; the effective step is `T/K`.
pub fn time_steps<S: Scalar>(horizon: S, dt: S) -> usize {
    (horizon / dt - S::lit(1e-9)).ceil().to_usize().unwrap_or(1).max(1)
}

impl<S: Scalar> GridFunction<S> {
    pub fn from_slices(lattice: SpatialLattice<S>, dt: S, slices: Vec<Vec<S>>) -> Result<Self> {
        if slices.is_empty() {
            return Err(LabError::PreconditionFailed(
                "grid function needs at least one slice".into(),
            ));
        }
        if !(dt > S::zero()) {
            return Err(LabError::PreconditionFailed(format!(
                "time step must be positive, got {dt}"
            )));
        }
        let n = slices.len();
        let mut values = Vec::with_capacity(n * lattice.len());
        for s in slices {
            if s.len() != lattice.len() {
                return Err(LabError::LatticeMismatch(format!(
                    "slice has {} values, lattice has {}",
                    s.len(),
                    lattice.len()
                )));
            }
            values.extend(s);
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(LabError::PreconditionFailed(format!("non-finite value at index {bad}")));
        }
        Ok(Self {
            lattice,
            dt,
            slices: n,
            values,
        })
    }

    /// Samples `f(t, x)` on `k·Δt`, `k = 0..=K`, with `K = ⌈T/dt⌉`.
    pub fn from_fn(lattice: SpatialLattice<S>, horizon: S, dt: S, f: impl Fn(S, &Vector<S>) -> S) -> Self {
        let k = time_steps(horizon, dt);
        let dt = horizon / S::from_usize_lossy(k);
        Self::from_fn_slices(lattice, dt, k + 1, f)
    }

    /// Samples `f` on exactly `slices` time levels `0, Δt, …`.
    pub fn from_fn_slices(lattice: SpatialLattice<S>, dt: S, slices: usize, f: impl Fn(S, &Vector<S>) -> S) -> Self {
        let pts: Vec<Vector<S>> = (0..lattice.len()).map(|i| lattice.point(i)).collect();
        let mut values = Vec::with_capacity(slices * lattice.len());
        for k in 0..slices {
            let t = dt * S::from_usize_lossy(k);
            values.extend(pts.iter().map(|x| f(t, x)));
        }
        Self {
            lattice,
            dt,
            slices,
            values,
        }
    }

    #[inline]
    pub fn lattice(&self) -> &SpatialLattice<S> {
        &self.lattice
    }

    #[inline]
    pub fn dt(&self) -> S {
        self.dt
    }

    #[inline]
    pub fn dx(&self) -> S {
        self.lattice.dx
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.lattice.dim
    }

    #[inline]
    pub fn n_slices(&self) -> usize {
        self.slices
    }

    #[inline]
    pub fn time(&self, k: usize) -> S {
        self.dt * S::from_usize_lossy(k)
    }

    /// Time of the last stored slice.
    #[inline]
    pub fn horizon(&self) -> S {
        self.time(self.slices - 1)
    }

    #[inline]
    pub fn get(&self, k: usize, i: usize) -> S {
        self.values[k * self.lattice.len() + i]
    }

    #[inline]
    pub fn slice(&self, k: usize) -> &[S] {
        let n = self.lattice.len();
        &self.values[k * n..(k + 1) * n]
    }

    pub fn slice_grid(&self, k: usize) -> SpatialGrid<S> {
        SpatialGrid {
            lattice: self.lattice,
            values: self.slice(k).to_vec(),
        }
    }

    #[inline]
    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn sup_norm(&self) -> S {
        self.values.iter().fold(S::zero(), |m, v| smax(m, v.abs()))
    }

    pub fn max(&self) -> S {
        self.values.iter().copied().fold(-S::infinity(), smax)
    }

    pub fn min(&self) -> S {
        self.values.iter().copied().fold(S::infinity(), smin)
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Self {
            values: self.values.iter().map(|&v| f(v)).collect(),
            ..self.clone()
        }
    }

    /// `f(t, x, u(t, x))` pointwise.
    pub fn map_with_coords(&self, f: impl Fn(S, &Vector<S>, S) -> S) -> Self {
        let n = self.lattice.len();
        let pts: Vec<Vector<S>> = (0..n).map(|i| self.lattice.point(i)).collect();
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(j, &v)| f(self.time(j / n), &pts[j % n], v))
            .collect();
        Self { values, ..self.clone() }
    }

    pub fn shifted(&self, c: S) -> Self {
        self.map(|v| v + c)
    }

    pub fn check_compatible(&self, other: &Self) -> Result<()> {
        same_lattice(&self.lattice, &other.lattice)?;
        if self.slices != other.slices || (self.dt - other.dt).abs() > S::epsilon() * S::lit(16.0) * self.dt {
            return Err(LabError::LatticeMismatch(format!(
                "time lattices differ: {} slices × {} vs {} slices × {}",
                self.slices, self.dt, other.slices, other.dt
            )));
        }
        Ok(())
    }

    /// `max |u − v|` over the whole space-time lattice.
    pub fn sup_distance(&self, other: &Self) -> Result<S> {
        self.check_compatible(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(S::zero(), |m, (&a, &b)| smax(m, (a - b).abs())))
    }

    /// Keeps every `every`-th slice (always including the first and, when it
    /// falls on the stride, the last).
    pub fn subsample_time(&self, every: usize) -> Self {
        let every = every.max(1);
        let keep: Vec<usize> = (0..self.slices).step_by(every).collect();
        let mut values = Vec::with_capacity(keep.len() * self.lattice.len());
        for &k in &keep {
            values.extend_from_slice(self.slice(k));
        }
        Self {
            lattice: self.lattice,
            dt: self.dt * S::from_usize_lossy(every),
            slices: keep.len(),
            values,
        }
    }

    /// Drops the final slice (used to re-derive it through an envelope).
    pub fn without_last_slice(&self) -> Result<Self> {
        if self.slices < 2 {
            return Err(LabError::SingleSlice(self.slices));
        }
        let n = self.lattice.len();
        Ok(Self {
            lattice: self.lattice,
            dt: self.dt,
            slices: self.slices - 1,
            values: self.values[..(self.slices - 1) * n].to_vec(),
        })
    }

    /// Writes `t,x[,y],value` rows with a header.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| LabError::Io(std::io::Error::other(e.to_string()));
        if self.dim() == 1 {
            w.write_record(["t", "x", "value"]).map_err(io)?;
        } else {
            w.write_record(["t", "x", "y", "value"]).map_err(io)?;
        }
        let n = self.lattice.len();
        for k in 0..self.slices {
            let t = self.time(k).to_string();
            for i in 0..n {
                let x = self.lattice.point(i);
                let mut rec = vec![t.clone()];
                rec.extend(x.as_slice().iter().map(|c| c.to_string()));
                rec.push(self.get(k, i).to_string());
                w.write_record(&rec).map_err(io)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Flat little-endian binary: magic `VGF1`, a header of
    /// `dim, cells, slices, boundary` (u64) and `x_max, dx, dt` (f64),
    /// then the values as f64, time-major.
    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(b"VGF1")?;
        let boundary = match self.lattice.boundary {
            Boundary::Periodic => 0u64,
            Boundary::Clamped => 1u64,
        };
        for v in [
            self.dim() as u64,
            self.lattice.cells as u64,
            self.slices as u64,
            boundary,
        ] {
            out.write_all(&v.to_le_bytes())?;
        }
        for v in [self.lattice.x_max, self.lattice.dx, self.dt] {
            out.write_all(&v.as_f64().to_le_bytes())?;
        }
        for v in &self.values {
            out.write_all(&v.as_f64().to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != b"VGF1" {
            return Err(LabError::Parse("bad magic, expected VGF1".into()));
        }
        let mut u = [0u64; 4];
        let mut buf = [0u8; 8];
        for slot in u.iter_mut() {
            input.read_exact(&mut buf)?;
            *slot = u64::from_le_bytes(buf);
        }
        let mut f = [0f64; 3];
        for slot in f.iter_mut() {
            input.read_exact(&mut buf)?;
            *slot = f64::from_le_bytes(buf);
        }
        let boundary = match u[3] {
            0 => Boundary::Periodic,
            1 => Boundary::Clamped,
            b => return Err(LabError::Parse(format!("unknown boundary tag {b}"))),
        };
        let dim = u[0] as usize;
        if !(dim == 1 || dim == 2) || u[1] < 2 || u[2] == 0 {
            return Err(LabError::Parse(format!("bad header {u:?}")));
        }
        let lattice = SpatialLattice {
            dim,
            x_max: S::lit(f[0]),
            dx: S::lit(f[1]),
            cells: u[1] as usize,
            boundary,
        };
        let total = lattice.len() * u[2] as usize;
        let mut values = Vec::with_capacity(total);
        for _ in 0..total {
            input.read_exact(&mut buf)?;
            values.push(S::lit(f64::from_le_bytes(buf)));
        }
        Ok(Self {
            lattice,
            dt: S::lit(f[2]),
            slices: u[2] as usize,
            values,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvelopeKind {
    /// Upper envelope, for subsolutions.
    Sup,
    /// Lower envelope, for supersolutions.
    Inf,
}

/// Window of the discrete terminal envelope: slices and cells.
pub const ENVELOPE_WINDOW_SLICES: usize = 2;
pub const ENVELOPE_WINDOW_CELLS: usize = 2;

/// Appends a slice at `T = t_last + Δt` whose value at `x` is the max (or
/// min) of `u` over the last two stored slices and `|y − x| ≤ 2Δx`.
pub fn terminal_envelope<S: Scalar>(u: &GridFunction<S>, kind: EnvelopeKind) -> Result<GridFunction<S>> {
    if u.slices < ENVELOPE_WINDOW_SLICES {
        return Err(LabError::SingleSlice(u.slices));
    }
    let lat = u.lattice;
    let offsets = lat.offsets_within(lat.dx * S::from_usize_lossy(ENVELOPE_WINDOW_CELLS));
    let n = lat.len();
    let mut last = Vec::with_capacity(n);
    for i in 0..n {
        let mut acc = match kind {
            EnvelopeKind::Sup => -S::infinity(),
            EnvelopeKind::Inf => S::infinity(),
        };
        for k in (u.slices - ENVELOPE_WINDOW_SLICES)..u.slices {
            for off in &offsets {
                if let Some(j) = lat.shift(i, *off) {
                    let v = u.get(k, j);
                    acc = match kind {
                        EnvelopeKind::Sup => smax(acc, v),
                        EnvelopeKind::Inf => smin(acc, v),
                    };
                }
            }
        }
        last.push(acc);
    }
    let mut values = u.values.clone();
    values.extend(last);
    Ok(GridFunction {
        lattice: lat,
        dt: u.dt,
        slices: u.slices + 1,
        values,
    })
}

/// `M(h) = max {u(t, x) − v(t, y) : |x − y| ≤ h}` over the lattice.
pub fn sliding_sup<S: Scalar>(u: &GridFunction<S>, v: &GridFunction<S>, h: S) -> Result<S> {
    u.check_compatible(v)?;
    let lat = u.lattice;
    let offsets = lat.offsets_within(smax(h, S::zero()));
    let n = lat.len();
    let mut best = -S::infinity();
    for k in 0..u.slices {
        let us = u.slice(k);
        let vs = v.slice(k);
        for (i, &ui) in us.iter().enumerate().take(n) {
            for off in &offsets {
                if let Some(j) = shift_unwrapped(&lat, i, *off) {
                    best = smax(best, ui - vs[j]);
                }
            }
        }
    }
    Ok(best)
}

/// Shift without wrap-around, so distances are plain Euclidean distances of
/// coordinates on every boundary policy.
fn shift_unwrapped<S: Scalar>(lat: &SpatialLattice<S>, flat: usize, off: [isize; 2]) -> Option<usize> {
    let m = lat.multi(flat);
    let n = lat.cells as isize;
    let mut out = [0usize; 2];
    for a in 0..lat.dim {
        let j = m[a] as isize + off[a];
        if !(0..=n).contains(&j) {
            return None;
        }
        out[a] = j as usize;
    }
    Some(lat.flat(out))
}

/// Sampled modulus of continuity; an upper step function in `δ`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModulusCurve<S> {
    delta: Vec<S>,
    m: Vec<S>,
}

impl<S: Scalar> ModulusCurve<S> {
    /// Builds a curve from samples; `m` is made nonnegative and
    /// nondecreasing by a running max. `δ` must be strictly ascending.
    pub fn new(delta: Vec<S>, m: Vec<S>) -> Result<Self> {
        if delta.len() != m.len() {
            return Err(LabError::InvariantViolation("delta and m differ in length".into()));
        }
        if delta.windows(2).any(|w| !(w[0] < w[1])) || delta.first().is_some_and(|d| !(*d > S::zero())) {
            return Err(LabError::InvariantViolation(
                "delta must be positive and strictly ascending".into(),
            ));
        }
        let mut run = S::zero();
        let m = m
            .into_iter()
            .map(|v| {
                run = smax(run, v);
                run
            })
            .collect();
        Ok(Self { delta, m })
    }

    pub fn is_empty(&self) -> bool {
        self.delta.is_empty()
    }

    pub fn len(&self) -> usize {
        self.delta.len()
    }

    pub fn deltas(&self) -> &[S] {
        &self.delta
    }

    pub fn values(&self) -> &[S] {
        &self.m
    }

    pub fn samples(&self) -> impl Iterator<Item = (S, S)> + '_ {
        self.delta.iter().copied().zip(self.m.iter().copied())
    }

    /// Reported `m(0+)`: the first sample.
    pub fn m0_plus(&self) -> Option<S> {
        self.m.first().copied()
    }

    /// Upper step evaluation: `m(δ_k)` for the first `δ_k ≥ δ`; beyond the
    /// last sample the last value; `m(0) = 0`.
    pub fn eval(&self, delta: S) -> S {
        if delta <= S::zero() || self.m.is_empty() {
            return S::zero();
        }
        let pos = self
            .delta
            .partition_point(|&d| d < delta - S::epsilon() * S::lit(64.0) * smax(d, S::one()));
        self.m[pos.min(self.m.len() - 1)]
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| LabError::Io(std::io::Error::other(e.to_string()));
        w.write_record(["delta", "m"]).map_err(io)?;
        for (d, m) in self.samples() {
            w.write_record([d.to_string(), m.to_string()]).map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Empirical modulus `m(kΔx) = max {|f(x) − f(y)| : |x − y| ≤ kΔx}`.
pub fn estimate_modulus<S: Scalar>(slice: &SpatialGrid<S>) -> ModulusCurve<S> {
    let lat = slice.lattice;
    estimate_modulus_upto(slice, lat.dx * S::from_usize_lossy(lat.cells) * S::lit(2.0).sqrt())
}

/// Like [`estimate_modulus`] but only for `δ ≤ delta_max`.
pub fn estimate_modulus_upto<S: Scalar>(slice: &SpatialGrid<S>, delta_max: S) -> ModulusCurve<S> {
    let lat = slice.lattice;
    let kmax = (delta_max / lat.dx + S::lit(1e-9))
        .floor()
        .to_usize()
        .unwrap_or(0)
        .max(1);
    let mut bins = vec![S::zero(); kmax + 1];
    let offsets = lat.offsets_within(lat.dx * S::from_usize_lossy(kmax));
    let n = lat.len();
    for off in offsets {
        if off[0] < 0 || (off[0] == 0 && off[1] <= 0) {
            continue;
        }
        let r = ((off[0] * off[0] + off[1] * off[1]) as f64).sqrt();
        let bin = (r - 1e-9).ceil() as usize;
        if bin > kmax {
            continue;
        }
        let mut worst = S::zero();
        for i in 0..n {
            if let Some(j) = shift_unwrapped(&lat, i, off) {
                worst = smax(worst, (slice.values[i] - slice.values[j]).abs());
            }
        }
        bins[bin] = smax(bins[bin], worst);
    }
    let delta = (1..=kmax).map(|k| lat.dx * S::from_usize_lossy(k)).collect();
    ModulusCurve::new(delta, bins[1..].to_vec()).expect("ascending lattice distances")
}

/// Inf-convolution `u₀ᴸ(x) = min_z [u₀(z) + L|x − z|]` over the lattice.
pub fn lipschitz_approx<S: Scalar>(u0: &SpatialGrid<S>, lip: S) -> Result<SpatialGrid<S>> {
    if !(lip > S::zero()) {
        return Err(LabError::PreconditionFailed(format!(
            "Lipschitz constant must be positive, got {lip}"
        )));
    }
    let lat = u0.lattice;
    let n = lat.len();
    let pts: Vec<Vector<S>> = (0..n).map(|i| lat.point(i)).collect();
    let values = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| u0.values[j] + lip * (pts[i] - pts[j]).norm())
                .fold(S::infinity(), smin)
        })
        .collect();
    Ok(SpatialGrid { lattice: lat, values })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lat1(x: f64, dx: f64, b: Boundary) -> SpatialLattice<f64> {
        SpatialLattice::new(1, x, dx, b).unwrap()
    }

    #[test]
    fn lattice_sizing_and_points() {
        let l = lat1(std::f64::consts::PI, 0.05, Boundary::Periodic);
        assert_eq!(l.cells(), 126);
        assert!(l.dx() <= 0.05);
        assert!((l.coord(l.cells()) - std::f64::consts::PI).abs() < 1e-12);
        let l2 = SpatialLattice::<f64>::new(2, 1.0, 0.5, Boundary::Clamped).unwrap();
        assert_eq!(l2.len(), 25);
        let p = l2.point(l2.flat([1, 3]));
        assert_eq!(p.as_slice(), &[-0.5, 0.5]);
        assert_eq!(l2.index_of(&p).unwrap(), l2.flat([1, 3]));
        assert!(l2.index_of(&Vector::from_slice(&[0.1, 0.0])).is_err());
    }

    #[test]
    fn periodic_shift_wraps_over_identified_endpoint() {
        let l = lat1(1.0, 0.25, Boundary::Periodic);
        assert_eq!(l.shift_axis_index(8, 1), Some(1));
        assert_eq!(l.shift_axis_index(0, -1), Some(7));
        let c = lat1(1.0, 0.25, Boundary::Clamped);
        assert_eq!(c.shift_axis_index(8, 1), None);
        assert_eq!(c.shift_axis_index_ghost(8, 1), 8);
    }

    #[test]
    fn envelope_of_constant_and_of_time() {
        let l = lat1(1.0, 0.1, Boundary::Clamped);
        let u = GridFunction::from_fn_slices(l, 0.1, 10, |_, _| 3.0);
        let e = terminal_envelope(&u, EnvelopeKind::Sup).unwrap();
        assert!(e.slice(10).iter().all(|&v| v == 3.0));

        let dt = 0.01;
        let u = GridFunction::from_fn_slices(l, dt, 100, |t, _| t);
        let e = terminal_envelope(&u, EnvelopeKind::Sup).unwrap();
        for &v in e.slice(100) {
            assert!(v >= 1.0 - 2.0 * dt - 1e-12 && v <= 1.0 - dt + 1e-12);
        }
        assert!((e.horizon() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn envelope_of_decaying_cosine() {
        let l = lat1(std::f64::consts::PI, 0.05, Boundary::Periodic);
        let dt = 0.01;
        let u = GridFunction::from_fn_slices(l, dt, 100, |t, x| (-t).exp() * x[0].cos());
        let e = terminal_envelope(&u, EnvelopeKind::Sup).unwrap();
        let big_t = 1.0;
        let time_part = (-big_t + 2.0 * dt).exp() - (-big_t).exp();
        let w = 2.0 * l.dx();
        for i in 0..l.len() {
            let x = l.coord(i);
            let exact = (-big_t).exp() * x.cos();
            let err = (e.get(100, i) - exact).abs();
            // Spatial window error is first order in Δx away from extrema
            // of cos and second order at them.
            let space_part = (-big_t + 2.0 * dt).exp() * (w * x.sin().abs() + 0.5 * w * w);
            assert!(err <= time_part + space_part + 1e-12, "i={i}");
            if x.sin().abs() < 1e-9 {
                assert!(err <= time_part + w * w, "extremum i={i}");
            }
        }
    }

    #[test]
    fn envelope_needs_two_slices() {
        let l = lat1(1.0, 0.5, Boundary::Clamped);
        let u = GridFunction::from_fn_slices(l, 0.1, 1, |_, _| 0.0);
        assert!(matches!(
            terminal_envelope(&u, EnvelopeKind::Inf),
            Err(LabError::SingleSlice(1))
        ));
    }

    #[test]
    fn sliding_sup_examples() {
        let l = lat1(2.0, 0.1, Boundary::Clamped);
        let z = GridFunction::from_fn_slices(l, 0.1, 3, |_, _| 0.0);
        assert_eq!(sliding_sup(&z, &z, 0.5).unwrap(), 0.0);
        let u = GridFunction::from_fn_slices(l, 0.1, 3, |_, x| x[0].abs().min(1.0));
        for h in [0.0, 0.3, 1.0] {
            assert_eq!(sliding_sup(&u, &z, h).unwrap(), 1.0);
        }
        let l = lat1(std::f64::consts::PI, 0.1, Boundary::Periodic);
        let c = GridFunction::from_fn_slices(l, 0.1, 2, |_, x| x[0].cos());
        for h in [0.0, 0.1, 0.5, 1.0, 3.0] {
            let m = sliding_sup(&c, &c, h).unwrap();
            assert!(m >= 0.0 && m <= h.min(2.0) + 1e-12);
        }
        let other = GridFunction::from_fn_slices(lat1(1.0, 0.1, Boundary::Clamped), 0.1, 2, |_, _| 0.0);
        assert!(matches!(
            sliding_sup(&z, &other, 0.1),
            Err(LabError::LatticeMismatch(_))
        ));
    }

    #[test]
    fn modulus_examples() {
        let l = lat1(1.0, 0.5, Boundary::Clamped);
        let c = SpatialGrid::constant(l, 2.0);
        assert!(estimate_modulus(&c).values().iter().all(|&v| v == 0.0));
        let f = SpatialGrid::from_fn(l, |x| x[0]);
        let m = estimate_modulus(&f);
        assert_eq!(m.eval(0.5), 0.5);
        assert_eq!(m.eval(1.0), 1.0);
        assert_eq!(m.eval(0.0), 0.0);
        assert_eq!(m.m0_plus(), Some(0.5));
        let l = lat1(std::f64::consts::PI, 0.05, Boundary::Periodic);
        let g = SpatialGrid::from_fn(l, |x| x[0].cos());
        for (d, v) in estimate_modulus(&g).samples() {
            assert!(v <= d + 1e-12);
        }
    }

    #[test]
    fn modulus_curve_rejects_bad_samples() {
        assert!(ModulusCurve::new(vec![0.2, 0.1], vec![0.0, 1.0]).is_err());
        let m = ModulusCurve::new(vec![0.1, 0.2, 0.3], vec![0.5, 0.2, 0.7]).unwrap();
        assert_eq!(m.values(), &[0.5, 0.5, 0.7]);
        assert_eq!(m.eval(0.15), 0.5);
        assert_eq!(m.eval(10.0), 0.7);
    }

    #[test]
    fn lipschitz_approx_examples() {
        let l = lat1(1.0, 0.25, Boundary::Clamped);
        let lin = SpatialGrid::from_fn(l, |x| 0.5 * x[0]);
        assert_eq!(lipschitz_approx(&lin, 0.5).unwrap(), lin);
        let c = SpatialGrid::constant(l, 0.7);
        assert_eq!(lipschitz_approx(&c, 3.0).unwrap(), c);

        let step = SpatialGrid::from_fn(l, |x| if x[0] >= 0.0 { 1.0 } else { 0.0 });
        let out = lipschitz_approx(&step, 1.0).unwrap();
        for i in 0..l.len() {
            let brute = (0..l.len())
                .map(|j| step.get(j) + (l.coord(i) - l.coord(j)).abs())
                .fold(f64::INFINITY, f64::min);
            assert_eq!(out.get(i), brute);
        }
        assert!(out.lipschitz_constant() <= 1.0 + 1e-12);
        assert!(lipschitz_approx(&step, 0.0).is_err());
    }

    #[test]
    fn binary_and_csv_round_trip() {
        let l = SpatialLattice::<f64>::new(2, 1.0, 0.5, Boundary::Periodic).unwrap();
        let u = GridFunction::from_fn_slices(l, 0.25, 3, |t, x| t + x[0] * x[1]);
        let mut buf = Vec::new();
        u.write_binary(&mut buf).unwrap();
        let back = GridFunction::<f64>::read_binary(buf.as_slice()).unwrap();
        assert_eq!(back, u);
        let mut csv_buf = Vec::new();
        u.write_csv(&mut csv_buf).unwrap();
        let text = String::from_utf8(csv_buf).unwrap();
        assert!(text.starts_with("t,x,y,value\n"));
        assert_eq!(text.lines().count(), 1 + 3 * 25);
    }

    #[test]
    fn subsample_keeps_stride() {
        let l = lat1(1.0, 0.5, Boundary::Clamped);
        let u = GridFunction::from_fn_slices(l, 0.1, 11, |t, _| t);
        let s = u.subsample_time(5);
        assert_eq!(s.n_slices(), 3);
        assert!((s.dt() - 0.5).abs() < 1e-12);
        assert!((s.get(2, 0) - 1.0).abs() < 1e-12);
    }
}
