//! Benchmark objectives and grid-search reference solutions.

/// `J(x) = sin(3x₁) + cos(3x₂) + ½‖x‖²`.
pub fn synthetic_cost(x: &[f64]) -> f64 {
    (3.0 * x[0]).sin() + (3.0 * x[1]).cos() + 0.5 * (x[0] * x[0] + x[1] * x[1])
}

/// `‖x − 1‖²`, minimum 0 at the all-ones vector.
pub fn quadratic_cost(x: &[f64]) -> f64 {
    x.iter().map(|v| (v - 1.0) * (v - 1.0)).sum()
}

/// Regular grid over `[lo, hi]²` with `n` points per axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Grid {
    pub fn coord(&self, i: usize) -> f64 {
        self.lo + (self.hi - self.lo) * i as f64 / (self.n - 1) as f64
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.n - 1) as f64
    }

    fn values<F: Fn(&[f64]) -> f64>(&self, f: F) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.n * self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                v.push(f(&[self.coord(i), self.coord(j)]));
            }
        }
        v
    }
}

/// Lowest grid point of a 2-D objective.
pub fn grid_minimum<F: Fn(&[f64]) -> f64>(f: F, grid: Grid) -> ([f64; 2], f64) {
    let values = grid.values(f);
    let (k, v) = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty grid");
    ([grid.coord(k / grid.n), grid.coord(k % grid.n)], *v)
}

/// Interior grid points lower than all eight neighbours, sorted by value.
pub fn grid_local_minima<F: Fn(&[f64]) -> f64>(f: F, grid: Grid) -> Vec<([f64; 2], f64)> {
    let n = grid.n;
    let values = grid.values(f);
    let mut minima = Vec::new();
    for i in 1..n - 1 {
        for j in 1..n - 1 {
            let v = values[i * n + j];
            let lowest = (-1i64..=1).all(|di| {
                (-1i64..=1).all(|dj| {
                    (di == 0 && dj == 0) || v < values[(i as i64 + di) as usize * n + (j as i64 + dj) as usize]
                })
            });
            if lowest {
                minima.push(([grid.coord(i), grid.coord(j)], v));
            }
        }
    }
    minima.sort_by(|a, b| a.1.total_cmp(&b.1));
    minima
}
