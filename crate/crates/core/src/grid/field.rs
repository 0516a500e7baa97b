use std::io::{BufRead, Write};

use super::Grid;
use crate::error::{Error, Result};
use crate::par;

/// An `M`-component grid function, stored node-major: the components of
/// node `i` occupy `values[i*M .. (i+1)*M]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    components: usize,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: Grid, components: usize) -> Self {
        assert!(components >= 1, "a field needs at least one component");
        Self { grid, components, values: vec![0.0; grid.num_nodes() * components] }
    }

    /// Fills each node from `f(point, out)`, where `point` has length `N`.
    pub fn from_fn<F>(grid: Grid, components: usize, f: F) -> Self
    where
        F: Fn(&[f64], &mut [f64]) + Sync + Send,
    {
        let mut field = Self::zeros(grid, components);
        let dim = grid.space_dim();
        par::for_each_chunk_mut(&mut field.values, components, |i, out| {
            let p = grid.point(i);
            f(&p[..dim], out);
        });
        field
    }

    pub fn from_values(grid: Grid, components: usize, values: Vec<f64>) -> Result<Self> {
        if components == 0 || values.len() != grid.num_nodes() * components {
            return Err(Error::Domain(format!(
                "expected {} values for {} components, got {}",
                grid.num_nodes() * components,
                components,
                values.len()
            )));
        }
        Ok(Self { grid, components, values })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn node(&self, idx: usize) -> &[f64] {
        &self.values[idx * self.components..(idx + 1) * self.components]
    }

    #[inline]
    pub fn node_mut(&mut self, idx: usize) -> &mut [f64] {
        &mut self.values[idx * self.components..(idx + 1) * self.components]
    }

    #[inline]
    pub fn get(&self, idx: usize, c: usize) -> f64 {
        self.values[idx * self.components + c]
    }

    /// Copy of one component as a scalar array over nodes.
    pub fn component(&self, c: usize) -> Vec<f64> {
        self.values.iter().skip(c).step_by(self.components).copied().collect()
    }

    #[inline]
    pub fn norm_at(&self, idx: usize) -> f64 {
        let node = self.node(idx);
        if node.len() == 1 {
            node[0].abs()
        } else {
            node.iter().map(|x| x * x).sum::<f64>().sqrt()
        }
    }

    pub fn sup_norm(&self) -> f64 {
        (0..self.grid.num_nodes()).map(|i| self.norm_at(i)).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|x| x.is_finite())
    }

    pub fn same_shape(&self, other: &Field) -> bool {
        self.grid == other.grid && self.components == other.components
    }

    /// `self += a * other`.
    pub fn add_scaled(&mut self, a: f64, other: &Field) {
        debug_assert!(self.same_shape(other));
        for (x, y) in self.values.iter_mut().zip(&other.values) {
            *x += a * y;
        }
    }

    pub fn scaled(&self, a: f64) -> Field {
        Field { grid: self.grid, components: self.components, values: self.values.iter().map(|x| a * x).collect() }
    }

    /// Sets every boundary node to zero.
    pub fn zero_boundary(&mut self) {
        let m = self.components;
        for i in 0..self.grid.num_nodes() {
            if self.grid.on_boundary(i) {
                self.values[i * m..(i + 1) * m].fill(0.0);
            }
        }
    }

    /// Multilinear interpolation at `point`; a truncation error outside the grid.
    pub fn sample(&self, point: &[f64], out: &mut [f64]) -> Result<()> {
        let stencil = self.grid.locate(point).ok_or_else(|| {
            Error::Truncation(format!(
                "point {:?} lies outside the grid [-{L}, {L}]^{}",
                &point[..self.grid.space_dim()],
                self.grid.space_dim(),
                L = self.grid.half_extent()
            ))
        })?;
        out.fill(0.0);
        for (idx, w) in stencil {
            if w == 0.0 {
                continue;
            }
            for (o, v) in out.iter_mut().zip(self.node(idx)) {
                *o += w * v;
            }
        }
        Ok(())
    }

    /// Writes the text layout: a header line `N,M,n,L`, then one line per
    /// node in row-major node order with the `M` component values.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "{},{},{},{:.16e}",
            self.grid.space_dim(),
            self.components,
            self.grid.points_per_axis(),
            self.grid.half_extent()
        )?;
        for node in self.values.chunks(self.components) {
            let line: Vec<String> = node.iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Field> {
        let bad = |line: usize, msg: &str| Error::Domain(format!("field file line {line}: {msg}"));
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| bad(1, "missing header"))?
            .map_err(|e| bad(1, &e.to_string()))?;
        let parts: Vec<&str> = header.trim().split(',').collect();
        if parts.len() != 4 {
            return Err(bad(1, "header must be N,M,n,L"));
        }
        let dim: usize = parts[0].parse().map_err(|_| bad(1, "bad N"))?;
        let m: usize = parts[1].parse().map_err(|_| bad(1, "bad M"))?;
        let n: usize = parts[2].parse().map_err(|_| bad(1, "bad n"))?;
        let l: f64 = parts[3].parse().map_err(|_| bad(1, "bad L"))?;
        let grid = Grid::new(dim, l, n)?;
        let mut values = Vec::with_capacity(grid.num_nodes() * m);
        for (k, line) in lines.enumerate() {
            let line = line.map_err(|e| bad(k + 2, &e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let row: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad(k + 2, "unparsable value"))?;
            if row.len() != m {
                return Err(bad(k + 2, "wrong number of components"));
            }
            values.extend(row);
        }
        Field::from_values(grid, m, values)
    }
}
