//! Uniform cell-centered grids, discrete fields, and the homogeneous-Neumann
//! diffusion operator div(kappa(mu) grad .) in one and two dimensions.
//!
//! Boundary faces are simply absent (ghost-free closure), which makes the
//! zero-flux condition exact and lets flux sums telescope to zero. The
//! assembled operator approximates -div(kappa grad .): nonnegative diagonal,
//! nonpositive off-diagonal, zero row sums.

use crate::error::{Error, Result};
use crate::model::Mobility;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    dim: u8,
    cells: [usize; 2],
    lengths: [f64; 2],
}

impl Grid {
    pub fn new_1d(cells: usize, length: f64) -> Result<Grid> {
        if cells < 1 {
            return Err(Error::InvalidParameter(
                "grid needs at least one cell".into(),
            ));
        }
        if !(length > 0.0) || !length.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "grid length must be positive, got {length}"
            )));
        }
        Ok(Grid {
            dim: 1,
            cells: [cells, 1],
            lengths: [length, 0.0],
        })
    }

    pub fn new_2d(cells: (usize, usize), lengths: (f64, f64)) -> Result<Grid> {
        if cells.0 < 1 || cells.1 < 1 {
            return Err(Error::InvalidParameter(
                "grid needs at least one cell per axis".into(),
            ));
        }
        if !(lengths.0 > 0.0 && lengths.1 > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "grid lengths must be positive, got {lengths:?}"
            )));
        }
        Ok(Grid {
            dim: 2,
            cells: [cells.0, cells.1],
            lengths: [lengths.0, lengths.1],
        })
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    pub fn cells(&self) -> [usize; 2] {
        self.cells
    }

    pub fn lengths(&self) -> [f64; 2] {
        self.lengths
    }

    pub fn cell_count(&self) -> usize {
        self.cells[0] * self.cells[1]
    }

    pub fn spacing(&self) -> [f64; 2] {
        let hx = self.lengths[0] / self.cells[0] as f64;
        let hy = if self.dim == 2 {
            self.lengths[1] / self.cells[1] as f64
        } else {
            0.0
        };
        [hx, hy]
    }

    pub fn cell_volume(&self) -> f64 {
        let h = self.spacing();
        if self.dim == 1 {
            h[0]
        } else {
            h[0] * h[1]
        }
    }

    /// Center coordinates of cell (ix, iy); iy is ignored in 1D.
    pub fn cell_center(&self, ix: usize, iy: usize) -> (f64, f64) {
        let h = self.spacing();
        ((ix as f64 + 0.5) * h[0], (iy as f64 + 0.5) * h[1])
    }
}

/// One real value per cell, row-major in 2D (index = iy * nx + ix).
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn constant(grid: Grid, value: f64) -> ScalarField {
        ScalarField {
            grid,
            values: vec![value; grid.cell_count()],
        }
    }

    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<ScalarField> {
        if values.len() != grid.cell_count() {
            return Err(Error::Shape(format!(
                "field has {} values for a grid of {} cells",
                values.len(),
                grid.cell_count()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite field value {} at cell {i}",
                values[i]
            )));
        }
        Ok(ScalarField { grid, values })
    }

    /// Evaluate a function of the cell-center coordinates on every cell.
    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> f64) -> ScalarField {
        let [nx, ny] = grid.cells();
        let mut values = Vec::with_capacity(grid.cell_count());
        for iy in 0..ny {
            for ix in 0..nx {
                let (x, y) = grid.cell_center(ix, iy);
                values.push(f(x, y));
            }
        }
        ScalarField { grid, values }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sub(&self, other: &ScalarField) -> Result<ScalarField> {
        if self.grid != other.grid {
            return Err(Error::Shape(
                "field difference across mismatched grids".into(),
            ));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        Ok(ScalarField {
            grid: self.grid,
            values,
        })
    }
}

/// Discrete integral over the domain: cell sum times cell volume.
pub fn integrate(field: &ScalarField) -> f64 {
    field.values.iter().sum::<f64>() * field.grid.cell_volume()
}

/// Discrete L2(Omega) norm: sqrt(sum of v^2 times cell volume).
pub fn h_norm(field: &ScalarField) -> f64 {
    let s: f64 = field.values.iter().map(|v| v * v).sum();
    (s * field.grid.cell_volume()).sqrt()
}

/// The norm triple of the stability estimate, evaluated on a time history of
/// fields at uniform spacing `tau`. Every snapshot passed in enters the time
/// sums with weight tau.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormTriple {
    /// L2 in space-time: sqrt(sum_n tau * sum_i vol * v^2).
    pub l2_q: f64,
    /// L-infinity in time of the spatial L2 norm.
    pub linf_h: f64,
    /// L1 in space-time.
    pub l1_q: f64,
}

impl NormTriple {
    pub fn total(&self) -> f64 {
        self.l2_q + self.linf_h + self.l1_q
    }
}

pub fn history_norms(fields: &[ScalarField], tau: f64) -> Result<NormTriple> {
    if !(tau > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tau must be positive, got {tau}"
        )));
    }
    let mut l2_sq = 0.0;
    let mut linf = 0.0_f64;
    let mut l1 = 0.0;
    let mut grid: Option<Grid> = None;
    for f in fields {
        match grid {
            None => grid = Some(f.grid),
            Some(g) if g != f.grid => {
                return Err(Error::Shape(
                    "history fields live on different grids".into(),
                ))
            }
            _ => {}
        }
        let vol = f.grid.cell_volume();
        let sq: f64 = f.values.iter().map(|v| v * v).sum::<f64>() * vol;
        let ab: f64 = f.values.iter().map(|v| v.abs()).sum::<f64>() * vol;
        l2_sq += tau * sq;
        linf = linf.max(sq.sqrt());
        l1 += tau * ab;
    }
    Ok(NormTriple {
        l2_q: l2_sq.sqrt(),
        linf_h: linf,
        l1_q: l1,
    })
}

// ---------------------------------------------------------------------------
// Diffusion operator
// ---------------------------------------------------------------------------

/// Symmetric operator approximating -div(kappa(mu) grad .) with the Neumann
/// closure, stored as per-face conductances (mean of the two adjacent kappa
/// values over spacing squared). Missing boundary faces contribute no flux.
#[derive(Clone, Debug)]
pub struct DiffusionMatrix {
    grid: Grid,
    /// Conductance of the face between (ix,iy) and (ix+1,iy); (nx-1)*ny entries.
    faces_x: Vec<f64>,
    /// Conductance of the face between (ix,iy) and (ix,iy+1); nx*(ny-1) entries.
    faces_y: Vec<f64>,
}

pub fn assemble_diffusion(
    grid: Grid,
    mu: &ScalarField,
    mobility: &Mobility,
) -> Result<DiffusionMatrix> {
    if mu.grid() != grid {
        return Err(Error::Shape("mu field does not match the grid".into()));
    }
    if let Some(i) = mu.values().iter().position(|&v| v < 0.0) {
        return Err(Error::Domain {
            condition: "mobility_argument_nonnegative".into(),
            message: format!("mu = {} at cell {i} is negative", mu.values()[i]),
        });
    }
    let [nx, ny] = grid.cells();
    let h = grid.spacing();
    let kappa: Vec<f64> = mu.values().iter().map(|&m| mobility.kappa(m)).collect();

    let mut faces_x = Vec::with_capacity((nx - 1) * ny);
    for iy in 0..ny {
        for ix in 0..nx - 1 {
            let l = iy * nx + ix;
            faces_x.push(0.5 * (kappa[l] + kappa[l + 1]) / (h[0] * h[0]));
        }
    }
    let mut faces_y = Vec::new();
    if grid.dim() == 2 {
        faces_y.reserve(nx * (ny - 1));
        for iy in 0..ny - 1 {
            for ix in 0..nx {
                let l = iy * nx + ix;
                faces_y.push(0.5 * (kappa[l] + kappa[l + nx]) / (h[1] * h[1]));
            }
        }
    }
    Ok(DiffusionMatrix {
        grid,
        faces_x,
        faces_y,
    })
}

impl DiffusionMatrix {
    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn face_conductances_x(&self) -> &[f64] {
        &self.faces_x
    }

    pub fn face_conductances_y(&self) -> &[f64] {
        &self.faces_y
    }

    /// out = A v on raw slices; lengths must equal the cell count.
    pub fn apply_to(&self, v: &[f64], out: &mut [f64]) {
        let [nx, ny] = self.grid.cells();
        debug_assert_eq!(v.len(), nx * ny);
        debug_assert_eq!(out.len(), nx * ny);
        out.fill(0.0);
        for iy in 0..ny {
            for ix in 0..nx - 1 {
                let l = iy * nx + ix;
                let c = self.faces_x[iy * (nx - 1) + ix];
                let flux = c * (v[l] - v[l + 1]);
                out[l] += flux;
                out[l + 1] -= flux;
            }
        }
        if ny > 1 {
            for iy in 0..ny - 1 {
                for ix in 0..nx {
                    let l = iy * nx + ix;
                    let c = self.faces_y[iy * nx + ix];
                    let flux = c * (v[l] - v[l + nx]);
                    out[l] += flux;
                    out[l + nx] -= flux;
                }
            }
        }
    }

    pub fn apply(&self, v: &ScalarField) -> Result<ScalarField> {
        if v.grid() != self.grid {
            return Err(Error::Shape(
                "operand grid does not match the operator".into(),
            ));
        }
        let mut out = vec![0.0; v.len()];
        self.apply_to(v.values(), &mut out);
        ScalarField::from_values(self.grid, out)
    }

    /// Diagonal of the operator (sum of incident face conductances).
    pub fn diagonal(&self) -> Vec<f64> {
        let [nx, ny] = self.grid.cells();
        let mut d = vec![0.0; nx * ny];
        for iy in 0..ny {
            for ix in 0..nx - 1 {
                let l = iy * nx + ix;
                let c = self.faces_x[iy * (nx - 1) + ix];
                d[l] += c;
                d[l + 1] += c;
            }
        }
        if ny > 1 {
            for iy in 0..ny - 1 {
                for ix in 0..nx {
                    let l = iy * nx + ix;
                    let c = self.faces_y[iy * nx + ix];
                    d[l] += c;
                    d[l + nx] += c;
                }
            }
        }
        d
    }
}

// ---------------------------------------------------------------------------
// Snapshot text format
// ---------------------------------------------------------------------------

fn fmt_f64(v: f64) -> String {
    // 17 significant decimal digits reproduce any f64 bitwise on re-parse
    format!("{v:.16e}")
}

/// Serialize a field with its grid header. Decimal with 17 significant
/// digits; re-reading reproduces the values bit for bit.
pub fn write_snapshot(field: &ScalarField, time: f64) -> String {
    let g = field.grid();
    let mut out = String::with_capacity(field.len() * 24 + 64);
    let header = match g.dim() {
        1 => format!(
            "# grid dim=1 cells={} lengths={} time={}\n",
            g.cells()[0],
            fmt_f64(g.lengths()[0]),
            fmt_f64(time)
        ),
        _ => format!(
            "# grid dim=2 cells={},{} lengths={},{} time={}\n",
            g.cells()[0],
            g.cells()[1],
            fmt_f64(g.lengths()[0]),
            fmt_f64(g.lengths()[1]),
            fmt_f64(time)
        ),
    };
    out.push_str(&header);
    for v in field.values() {
        out.push_str(&fmt_f64(*v));
        out.push('\n');
    }
    out
}

pub fn read_snapshot(text: &str) -> Result<(ScalarField, f64)> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty snapshot".into()))?;
    let rest = header
        .strip_prefix("# grid ")
        .ok_or_else(|| Error::Parse(format!("bad snapshot header: {header}")))?;

    let mut dim = None;
    let mut cells = None;
    let mut lengths = None;
    let mut time = None;
    for token in rest.split_whitespace() {
        let (key, value) = token
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("bad header token: {token}")))?;
        match key {
            "dim" => {
                dim = Some(
                    value
                        .parse::<u8>()
                        .map_err(|e| Error::Parse(e.to_string()))?,
                )
            }
            "cells" => {
                let parts: Vec<usize> = value
                    .split(',')
                    .map(|p| p.parse::<usize>().map_err(|e| Error::Parse(e.to_string())))
                    .collect::<Result<_>>()?;
                cells = Some(parts);
            }
            "lengths" => {
                let parts: Vec<f64> = value
                    .split(',')
                    .map(|p| p.parse::<f64>().map_err(|e| Error::Parse(e.to_string())))
                    .collect::<Result<_>>()?;
                lengths = Some(parts);
            }
            "time" => {
                time = Some(
                    value
                        .parse::<f64>()
                        .map_err(|e| Error::Parse(e.to_string()))?,
                )
            }
            _ => return Err(Error::Parse(format!("unknown header key: {key}"))),
        }
    }
    let dim = dim.ok_or_else(|| Error::Parse("header missing dim".into()))?;
    let cells = cells.ok_or_else(|| Error::Parse("header missing cells".into()))?;
    let lengths = lengths.ok_or_else(|| Error::Parse("header missing lengths".into()))?;
    let time = time.ok_or_else(|| Error::Parse("header missing time".into()))?;

    let grid = match (dim, cells.as_slice(), lengths.as_slice()) {
        (1, [n], [l]) => Grid::new_1d(*n, *l)?,
        (2, [nx, ny], [lx, ly]) => Grid::new_2d((*nx, *ny), (*lx, *ly))?,
        _ => {
            return Err(Error::Parse(format!(
                "inconsistent snapshot header: dim={dim}, {} cell axes, {} length axes",
                cells.len(),
                lengths.len()
            )))
        }
    };
    let values: Vec<f64> = lines
        .map(|l| {
            l.trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse(e.to_string()))
        })
        .collect::<Result<_>>()?;
    Ok((ScalarField::from_values(grid, values)?, time))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrate_constant_and_weighted() {
        let g = Grid::new_1d(4, 2.0).unwrap();
        assert!((integrate(&ScalarField::constant(g, 1.0)) - 2.0).abs() < 1e-15);

        let g = Grid::new_1d(3, 1.5).unwrap(); // h = 0.5
        let f = ScalarField::from_values(g, vec![1.0, 2.0, 3.0]).unwrap();
        assert!((integrate(&f) - 3.0).abs() < 1e-15);
    }

    #[test]
    fn integrate_is_linear() {
        let g = Grid::new_2d((5, 3), (1.0, 2.0)).unwrap();
        let f = ScalarField::from_fn(g, |x, y| x + 2.0 * y);
        let q = ScalarField::from_fn(g, |x, y| (x * y).sin());
        let lhs = {
            let comb: Vec<f64> = f
                .values()
                .iter()
                .zip(q.values())
                .map(|(a, b)| 3.0 * a - 0.5 * b)
                .collect();
            integrate(&ScalarField::from_values(g, comb).unwrap())
        };
        let rhs = 3.0 * integrate(&f) - 0.5 * integrate(&q);
        assert!((lhs - rhs).abs() < 1e-13 * rhs.abs().max(1.0));
    }

    #[test]
    fn constant_field_is_in_operator_kernel() {
        for grid in [
            Grid::new_1d(17, 3.0).unwrap(),
            Grid::new_2d((6, 9), (1.0, 2.5)).unwrap(),
        ] {
            let mu = ScalarField::from_fn(grid, |x, y| 1.0 + 0.3 * (x + y).cos().abs());
            let a = assemble_diffusion(grid, &mu, &Mobility::rational()).unwrap();
            let out = a.apply(&ScalarField::constant(grid, 4.2)).unwrap();
            for v in out.values() {
                assert!(v.abs() < 1e-12, "kernel violation {v}");
            }
        }
    }

    #[test]
    fn three_cell_neumann_laplacian() {
        // hand-assembled 3x3 Neumann Laplacian with unit kappa and h = 1;
        // the operator carries the -div(kappa grad) sign, so (0,1,0) maps
        // to (-1,2,-1)
        let g = Grid::new_1d(3, 3.0).unwrap();
        let mu = ScalarField::constant(g, 1.0);
        let a = assemble_diffusion(g, &mu, &Mobility::constant(1.0).unwrap()).unwrap();
        let out = a
            .apply(&ScalarField::from_values(g, vec![0.0, 1.0, 0.0]).unwrap())
            .unwrap();
        assert_eq!(out.values(), &[-1.0, 2.0, -1.0]);
    }

    #[test]
    fn face_conductance_bounds() {
        let g = Grid::new_1d(32, 1.0).unwrap();
        let h = g.spacing()[0];
        let mu = ScalarField::from_fn(g, |x, _| 5.0 * x);
        let mob = Mobility::rational();
        let a = assemble_diffusion(g, &mu, &mob).unwrap();
        for c in a.face_conductances_x() {
            let k = c * h * h;
            assert!(k >= mob.kappa_min && k <= mob.kappa_max);
        }
    }

    #[test]
    fn negative_mu_rejected_with_cell() {
        let g = Grid::new_1d(4, 1.0).unwrap();
        let mu = ScalarField::from_values(g, vec![0.1, 0.2, -0.3, 0.4]).unwrap();
        match assemble_diffusion(g, &mu, &Mobility::rational()) {
            Err(Error::Domain { message, .. }) => assert!(message.contains("cell 2")),
            other => panic!("expected domain error, got {other:?}"),
        }
    }

    #[test]
    fn operator_is_symmetric_and_conservative() {
        let grid = Grid::new_2d((7, 5), (2.0, 1.0)).unwrap();
        let mu = ScalarField::from_fn(grid, |x, y| (x + 0.5 * y).exp() / 10.0);
        let a = assemble_diffusion(grid, &mu, &Mobility::rational()).unwrap();
        // deterministic pseudo-random test vectors
        let u = ScalarField::from_fn(grid, |x, y| (31.0 * x + 17.0 * y).sin());
        let v = ScalarField::from_fn(grid, |x, y| (13.0 * x - 7.0 * y).cos());
        let au = a.apply(&u).unwrap();
        let av = a.apply(&v).unwrap();
        let dot = |p: &ScalarField, q: &ScalarField| -> f64 {
            p.values().iter().zip(q.values()).map(|(a, b)| a * b).sum()
        };
        let s1 = dot(&au, &v);
        let s2 = dot(&u, &av);
        assert!((s1 - s2).abs() <= 1e-12 * s1.abs().max(1.0), "{s1} vs {s2}");
        // telescoping flux sum
        let total: f64 = au.values().iter().sum();
        let scale: f64 = au.values().iter().map(|x| x.abs()).sum::<f64>().max(1.0);
        assert!(total.abs() <= 1e-12 * scale);
        // positive semidefiniteness in the -div(kappa grad) convention
        assert!(dot(&au, &u) >= -1e-12);
    }

    #[test]
    fn history_norms_single_cell_example() {
        let g = Grid::new_1d(1, 1.0).unwrap();
        let hist = vec![
            ScalarField::from_values(g, vec![3.0]).unwrap(),
            ScalarField::from_values(g, vec![4.0]).unwrap(),
        ];
        let n = history_norms(&hist, 1.0).unwrap();
        assert!((n.l2_q - 5.0).abs() < 1e-15);
        assert!((n.linf_h - 4.0).abs() < 1e-15);
        assert!((n.l1_q - 7.0).abs() < 1e-15);
    }

    #[test]
    fn history_norms_zero_and_scaling() {
        let g = Grid::new_1d(8, 1.0).unwrap();
        let zeros = vec![ScalarField::constant(g, 0.0); 5];
        let n = history_norms(&zeros, 0.1).unwrap();
        assert_eq!((n.l2_q, n.linf_h, n.l1_q), (0.0, 0.0, 0.0));

        let hist: Vec<ScalarField> = (0..4)
            .map(|k| ScalarField::from_fn(g, |x, _| (x + k as f64).sin()))
            .collect();
        let scaled: Vec<ScalarField> = hist
            .iter()
            .map(|f| {
                let vals = f.values().iter().map(|v| -2.5 * v).collect();
                ScalarField::from_values(g, vals).unwrap()
            })
            .collect();
        let a = history_norms(&hist, 0.25).unwrap();
        let b = history_norms(&scaled, 0.25).unwrap();
        assert!((b.l2_q - 2.5 * a.l2_q).abs() < 1e-13);
        assert!((b.linf_h - 2.5 * a.linf_h).abs() < 1e-13);
        assert!((b.l1_q - 2.5 * a.l1_q).abs() < 1e-13);
    }

    #[test]
    fn history_norms_rejects_mixed_grids() {
        let a = ScalarField::constant(Grid::new_1d(4, 1.0).unwrap(), 1.0);
        let b = ScalarField::constant(Grid::new_1d(5, 1.0).unwrap(), 1.0);
        assert!(matches!(history_norms(&[a, b], 1.0), Err(Error::Shape(_))));
    }

    #[test]
    fn snapshot_roundtrip_is_bitwise() {
        let g = Grid::new_2d((3, 2), (1.0, 0.7)).unwrap();
        let f = ScalarField::from_fn(g, |x, y| (x * 7.1).sin() * (y * 3.3).cos() / 3.0);
        let t = 0.12345678901234567;
        let text = write_snapshot(&f, t);
        let (back, t2) = read_snapshot(&text).unwrap();
        assert_eq!(t.to_bits(), t2.to_bits());
        assert_eq!(back.grid(), g);
        for (a, b) in f.values().iter().zip(back.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn snapshot_rejects_garbage() {
        assert!(read_snapshot("").is_err());
        assert!(read_snapshot("values only\n1.0\n").is_err());
        assert!(read_snapshot("# grid dim=1 cells=2 lengths=1.0 time=0\n1.0\nnope\n").is_err());
    }
}
