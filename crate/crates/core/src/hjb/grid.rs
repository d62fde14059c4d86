use crate::error::{Error, Result};

/// Uniform space-time grid on `[x_min, x_max] x [t_start, t_end]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub n_space: usize,
    pub n_time: usize,
    pub t_start: f64,
    pub t_end: f64,
}

impl GridSpec {
    pub fn new(x_min: f64, x_max: f64, n_space: usize, n_time: usize, t_start: f64, t_end: f64) -> Result<Self> {
        let g = Self { x_min, x_max, n_space, n_time, t_start, t_end };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x_min.is_finite() && self.x_max.is_finite() && self.x_min < self.x_max) {
            return Err(Error::InvalidGrid(format!(
                "need finite x_min < x_max, got [{}, {}]",
                self.x_min, self.x_max
            )));
        }
        if self.n_space < 16 || self.n_time < 16 {
            return Err(Error::InvalidGrid(format!(
                "need n_space, n_time >= 16, got {} x {}",
                self.n_space, self.n_time
            )));
        }
        if !(self.t_start >= 0.0 && self.t_start < self.t_end && self.t_end.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "need 0 <= t_start < t_end, got [{}, {}]",
                self.t_start, self.t_end
            )));
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.n_space as f64
    }

    pub fn dt(&self) -> f64 {
        (self.t_end - self.t_start) / self.n_time as f64
    }

    pub fn x(&self, j: usize) -> f64 {
        if j == self.n_space {
            self.x_max
        } else {
            self.x_min + j as f64 * self.dx()
        }
    }

    pub fn t(&self, i: usize) -> f64 {
        if i == self.n_time {
            self.t_end
        } else {
            self.t_start + i as f64 * self.dt()
        }
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..=self.n_space).map(|j| self.x(j)).collect()
    }

    pub fn ts(&self) -> Vec<f64> {
        (0..=self.n_time).map(|i| self.t(i)).collect()
    }

    /// Same extent with `n_space` and `n_time` scaled by `factor`.
    pub fn refined(&self, factor: usize) -> Self {
        Self { n_space: self.n_space * factor, n_time: self.n_time * factor, ..*self }
    }

    /// Index `j` and weight `w` with `x = (1-w) x_j + w x_{j+1}`, clamped to the grid.
    pub fn locate_x(&self, x: f64) -> (usize, f64) {
        locate(x, self.x_min, self.dx(), self.n_space)
    }

    pub fn locate_t(&self, t: f64) -> (usize, f64) {
        locate(t, self.t_start, self.dt(), self.n_time)
    }

    pub fn same_nodes(&self, other: &GridSpec) -> bool {
        self == other
    }
}

#[inline]
fn locate(v: f64, start: f64, step: f64, n: usize) -> (usize, f64) {
    let s = (v - start) / step;
    if !(s > 0.0) {
        return (0, 0.0);
    }
    if s >= n as f64 {
        return (n - 1, 1.0);
    }
    let j = s.floor() as usize;
    (j, s - j as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spacing_and_nodes() {
        let g = GridSpec::new(0.0, 1.0, 20, 40, 0.0, 2.0).unwrap();
        assert_eq!(g.dx(), 0.05);
        assert_eq!(g.dt(), 0.05);
        assert_eq!(g.xs().len(), 21);
        assert_eq!(g.x(20), 1.0);
        assert_eq!(g.t(40), 2.0);
    }

    #[test]
    fn rejects_small_or_inverted_grids() {
        assert!(GridSpec::new(1.0, 0.0, 20, 20, 0.0, 1.0).is_err());
        assert!(GridSpec::new(0.0, 1.0, 8, 20, 0.0, 1.0).is_err());
        assert!(GridSpec::new(0.0, 1.0, 20, 20, 1.0, 1.0).is_err());
    }

    #[test]
    fn locate_clamps() {
        let g = GridSpec::new(0.0, 1.0, 20, 20, 0.0, 1.0).unwrap();
        assert_eq!(g.locate_x(-3.0), (0, 0.0));
        assert_eq!(g.locate_x(5.0), (19, 1.0));
        let (j, w) = g.locate_x(0.125);
        assert_eq!(j, 2);
        assert!((w - 0.5).abs() < 1e-12);
    }
}
