use std::io::{self, Write};

use ndarray::{Array2, ArrayView1};

use super::grid::GridSpec;
use super::solver::SolverOptions;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SurfaceMode {
    Full,
    Local(usize),
    Protected,
}

/// Certainty equivalent on a grid: `values[[i, j]] = G(t_i, x_j)`.
#[derive(Debug, Clone)]
pub struct Surface {
    pub grid: GridSpec,
    pub values: Array2<f64>,
    pub gradient: Array2<f64>,
    pub mode: SurfaceMode,
    pub alpha: f64,
    pub options: SolverOptions,
    pub(crate) chi: Option<Vec<f64>>,
    pub(crate) rate: Option<Array2<f64>>,
}

impl Surface {
    pub(crate) fn new(
        grid: GridSpec,
        values: Array2<f64>,
        mode: SurfaceMode,
        alpha: f64,
        options: SolverOptions,
    ) -> Self {
        let gradient = gradient_of(&values, grid.dx());
        Self { grid, values, gradient, mode, alpha, options, chi: None, rate: None }
    }

    /// Replaces the values (e.g. with a perturbed copy) and recomputes the gradient.
    pub fn with_values(&self, values: Array2<f64>) -> Result<Self> {
        if values.dim() != self.values.dim() {
            return Err(Error::GridMismatch(format!(
                "expected {:?} values, got {:?}",
                self.values.dim(),
                values.dim()
            )));
        }
        let mut s = self.clone();
        s.gradient = gradient_of(&values, self.grid.dx());
        s.values = values;
        Ok(s)
    }

    /// Cutoff values on the grid nodes (local mode only).
    pub fn chi(&self) -> Option<&[f64]> {
        self.chi.as_deref()
    }

    /// Insurance-rate field the surface was solved with (protected mode only).
    pub fn rate(&self) -> Option<&Array2<f64>> {
        self.rate.as_ref()
    }

    pub fn initial_row(&self) -> ArrayView1<'_, f64> {
        self.values.row(0)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Bilinear interpolation in `(t, x)`, clamped to the grid.
    pub fn value_at(&self, t: f64, x: f64) -> f64 {
        interpolate(&self.grid, &self.values, t, x)
    }

    pub fn gradient_at(&self, t: f64, x: f64) -> f64 {
        interpolate(&self.grid, &self.gradient, t, x)
    }

    /// Writes the values as CSV; see [`write_grid_csv`].
    pub fn write_csv<W: Write>(&self, out: &mut W, header: &[String]) -> io::Result<()> {
        write_grid_csv(out, &self.grid, &self.values, header)
    }
}

/// Central differences inside, first-order one-sided differences at the edges.
pub fn gradient_of(values: &Array2<f64>, dx: f64) -> Array2<f64> {
    let mut grad = Array2::zeros(values.dim());
    for (row, mut out) in values.rows().into_iter().zip(grad.rows_mut()) {
        let n = row.len();
        out[0] = (row[1] - row[0]) / dx;
        out[n - 1] = (row[n - 1] - row[n - 2]) / dx;
        for j in 1..n - 1 {
            out[j] = (row[j + 1] - row[j - 1]) / (2.0 * dx);
        }
    }
    grad
}

pub fn interpolate(grid: &GridSpec, a: &Array2<f64>, t: f64, x: f64) -> f64 {
    let (i, wt) = grid.locate_t(t);
    let (j, wx) = grid.locate_x(x);
    let lo = (1.0 - wx) * a[[i, j]] + wx * a[[i, j + 1]];
    let hi = (1.0 - wx) * a[[i + 1, j]] + wx * a[[i + 1, j + 1]];
    (1.0 - wt) * lo + wt * hi
}

/// Writes a `(n_time+1) x (n_space+1)` array as CSV. Each header line is
/// emitted as a `#` comment, then a row `t,x_0,...,x_N`, then one row per time
/// node. Numbers carry 17 significant digits.
pub fn write_grid_csv<W: Write>(
    out: &mut W,
    grid: &GridSpec,
    a: &Array2<f64>,
    header: &[String],
) -> io::Result<()> {
    for line in header {
        writeln!(out, "# {line}")?;
    }
    write!(out, "t")?;
    for x in grid.xs() {
        write!(out, ",{}", fmt17(x))?;
    }
    writeln!(out)?;
    for (i, row) in a.rows().into_iter().enumerate() {
        write!(out, "{}", fmt17(grid.t(i)))?;
        for v in row {
            write!(out, ",{}", fmt17(*v))?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Scientific notation with 17 significant digits.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hjb::solver::SolverOptions;

    fn quadratic_surface() -> Surface {
        let grid = GridSpec::new(0.0, 1.0, 20, 16, 0.0, 1.0).unwrap();
        let values = Array2::from_shape_fn((17, 21), |(i, j)| {
            let (t, x) = (grid.t(i), grid.x(j));
            t + x * x
        });
        Surface::new(grid, values, SurfaceMode::Full, 1.0, SolverOptions::default())
    }

    #[test]
    fn gradient_is_central_difference() {
        let s = quadratic_surface();
        let dx = s.grid.dx();
        for j in 1..20 {
            let fd = (s.values[[3, j + 1]] - s.values[[3, j - 1]]) / (2.0 * dx);
            assert_eq!(s.gradient[[3, j]], fd);
            assert!((s.gradient[[3, j]] - 2.0 * s.grid.x(j)).abs() < 1e-12);
        }
    }

    #[test]
    fn bilinear_lookup_reproduces_nodes_and_clamps() {
        let s = quadratic_surface();
        assert_eq!(s.value_at(s.grid.t(4), s.grid.x(7)), s.values[[4, 7]]);
        assert_eq!(s.value_at(0.0, -5.0), s.values[[0, 0]]);
        assert_eq!(s.value_at(9.0, 9.0), s.values[[16, 20]]);
    }

    #[test]
    fn csv_layout() {
        let s = quadratic_surface();
        let mut buf = Vec::new();
        s.write_csv(&mut buf, &["mode = full".to_string()]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# mode = full");
        assert!(lines[1].starts_with("t,"));
        assert_eq!(lines[1].split(',').count(), 22);
        assert_eq!(lines.len(), 2 + 17);
        let last: Vec<f64> = lines[18].split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(last[0], 1.0);
        assert_eq!(last[21], 2.0);
        assert_eq!(fmt17(0.1), "1.0000000000000001e-1");
    }
}
