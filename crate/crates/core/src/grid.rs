//! Node-centered uniform grids on `[-1, 1]^dim` and the finite-difference
//! operators used by the nonlinear terms.
//!
//! Every axis carries `N + 1` nodes at `x_i = -1 + i h`, `h = 2 / N`. Field
//! data is stored flat with the x index varying fastest:
//! `idx = i + (N+1) * (j + (N+1) * k)`.
//!
//! Homogeneous Neumann conditions are imposed by ghost reflection: the ghost
//! node beyond a boundary mirrors the first interior node (`f[-1] = f[1]`,
//! `f[N+1] = f[N-1]`), so the centered normal difference at every boundary node
//! vanishes.

use crate::error::{Error, Result};

/// Axis ordering of flattened field data, written into snapshot sidecars.
pub const AXIS_ORDER: &str = "x-fastest";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    dim: usize,
    cells: usize,
    h: f64,
}

impl GridSpec {
    pub fn new(dim: usize, cells_per_axis: usize) -> Result<Self> {
        if !(dim == 2 || dim == 3) {
            return Err(Error::config(format!("dim must be 2 or 3, got {dim}")));
        }
        if cells_per_axis < 4 {
            return Err(Error::config(format!(
                "cells per axis N must be >= 4, got {cells_per_axis}"
            )));
        }
        Ok(Self {
            dim,
            cells: cells_per_axis,
            h: 2.0 / cells_per_axis as f64,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Cells per axis, `N`.
    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    /// `N + 1`.
    pub fn nodes_per_axis(&self) -> usize {
        self.cells + 1
    }

    /// Total number of nodes, `(N+1)^dim`.
    pub fn len(&self) -> usize {
        self.nodes_per_axis().pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Coordinate of node `i` along any axis.
    pub fn coord(&self, i: usize) -> f64 {
        -1.0 + i as f64 * self.h
    }

    /// Flat index stride of `axis`.
    pub fn stride(&self, axis: usize) -> usize {
        self.nodes_per_axis().pow(axis as u32)
    }

    pub fn index(&self, ijk: &[usize]) -> usize {
        debug_assert_eq!(ijk.len(), self.dim);
        ijk.iter()
            .enumerate()
            .map(|(axis, &i)| i * self.stride(axis))
            .sum()
    }

    /// Per-axis node indices of a flat index.
    pub fn unravel(&self, idx: usize) -> [usize; 3] {
        let np = self.nodes_per_axis();
        let mut out = [0; 3];
        let mut rest = idx;
        for slot in out.iter_mut().take(self.dim) {
            *slot = rest % np;
            rest /= np;
        }
        out
    }

    /// Physical coordinates of a flat index (unused axes are 0).
    pub fn position(&self, idx: usize) -> [f64; 3] {
        let ijk = self.unravel(idx);
        let mut p = [0.0; 3];
        for axis in 0..self.dim {
            p[axis] = self.coord(ijk[axis]);
        }
        p
    }

    /// Trapezoidal quadrature weight of a node (product of 1/2 per boundary axis), times `h^dim`.
    pub fn quadrature_weight(&self, idx: usize) -> f64 {
        let ijk = self.unravel(idx);
        let mut w = self.h.powi(self.dim as i32);
        for &i in ijk.iter().take(self.dim) {
            if i == 0 || i == self.cells {
                w *= 0.5;
            }
        }
        w
    }

    /// Base offsets of every grid line along `axis`.
    pub(crate) fn line_bases(&self, axis: usize) -> impl Iterator<Item = usize> {
        let np = self.nodes_per_axis();
        let s = self.stride(axis);
        let lines = self.len() / np;
        (0..lines).map(move |outer| outer % s + (outer / s) * s * np)
    }

    pub(crate) fn check_same(&self, other: &GridSpec) -> Result<()> {
        if self != other {
            return Err(Error::config(format!(
                "grid mismatch: {}D N={} vs {}D N={}",
                self.dim, self.cells, other.dim, other.cells
            )));
        }
        Ok(())
    }
}

/// Node values of one scalar field.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: GridSpec,
    data: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: GridSpec) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: GridSpec, value: f64) -> Self {
        Self {
            grid,
            data: vec![value; grid.len()],
        }
    }

    pub fn from_vec(grid: GridSpec, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::config(format!(
                "field length {} does not match grid length {}",
                data.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, data })
    }

    /// Samples `f(x, y, z)` at every node (z = 0 in 2D).
    pub fn from_fn(grid: GridSpec, f: impl Fn(f64, f64, f64) -> f64) -> Self {
        let data = (0..grid.len())
            .map(|idx| {
                let [x, y, z] = grid.position(idx);
                f(x, y, z)
            })
            .collect();
        Self { grid, data }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Pointwise map into a new field.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField {
            grid: self.grid,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Pointwise combination of two fields on the same grid.
    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Result<ScalarField> {
        self.grid.check_same(&other.grid)?;
        Ok(ScalarField {
            grid: self.grid,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Trapezoidal integral over the domain.
    pub fn integral(&self) -> f64 {
        self.data
            .iter()
            .enumerate()
            .map(|(idx, v)| v * self.grid.quadrature_weight(idx))
            .sum()
    }

    pub fn at(&self, ijk: &[usize]) -> f64 {
        self.data[self.grid.index(ijk)]
    }
}

#[inline]
fn mirror(p: isize, n: usize) -> usize {
    if p < 0 {
        (-p) as usize
    } else if p as usize > n {
        2 * n - p as usize
    } else {
        p as usize
    }
}

/// Second-order central Laplacian (5-point in 2D, 7-point in 3D) with ghost reflection.
pub fn laplacian(f: &ScalarField) -> ScalarField {
    let grid = *f.grid();
    let mut out = vec![0.0; grid.len()];
    laplacian_into(&grid, f.data(), &mut out);
    ScalarField { grid, data: out }
}

pub(crate) fn laplacian_into(grid: &GridSpec, f: &[f64], out: &mut [f64]) {
    let n = grid.cells();
    let inv_h2 = 1.0 / (grid.spacing() * grid.spacing());
    out.iter_mut().for_each(|v| *v = 0.0);
    for axis in 0..grid.dim() {
        let s = grid.stride(axis);
        for base in grid.line_bases(axis) {
            for p in 0..=n {
                let l = base + mirror(p as isize - 1, n) * s;
                let r = base + mirror(p as isize + 1, n) * s;
                let c = base + p * s;
                out[c] += (f[l] + f[r] - 2.0 * f[c]) * inv_h2;
            }
        }
    }
}

/// `laplacian(laplacian(f))`, ghost-reflected at both stages.
pub fn biharmonic(f: &ScalarField) -> ScalarField {
    laplacian(&laplacian(f))
}

/// `scale * div(A(coef) grad(pot))` with edge averages of `coef` and edge
/// differences of `pot`.
pub fn div_mobility_grad(coef: &ScalarField, pot: &ScalarField, scale: f64) -> Result<ScalarField> {
    div_edge_flux(coef, pot, scale, |c| c)
}

/// `scale * div(M(A(source)) grad(pot))`: like [`div_mobility_grad`] but the
/// edge coefficient is `mobility` evaluated on the edge average of `source`.
///
/// Fluxes through the boundary half-faces follow the ghost mirror, so the
/// boundary node sees twice the flux of its single interior edge and the
/// trapezoidal sum of the output is zero.
pub fn div_edge_flux(
    source: &ScalarField,
    pot: &ScalarField,
    scale: f64,
    mobility: impl Fn(f64) -> f64,
) -> Result<ScalarField> {
    source.grid().check_same(pot.grid())?;
    let grid = *source.grid();
    let n = grid.cells();
    let h = grid.spacing();
    let src = source.data();
    let pt = pot.data();
    let mut out = vec![0.0; grid.len()];
    let mut flux = vec![0.0; n];
    let factor = scale / (h * h);
    for axis in 0..grid.dim() {
        let s = grid.stride(axis);
        for base in grid.line_bases(axis) {
            for (e, fl) in flux.iter_mut().enumerate() {
                let a = base + e * s;
                let b = a + s;
                *fl = mobility(0.5 * (src[a] + src[b])) * (pt[b] - pt[a]);
            }
            out[base] += 2.0 * flux[0] * factor;
            for p in 1..n {
                out[base + p * s] += (flux[p] - flux[p - 1]) * factor;
            }
            out[base + n * s] -= 2.0 * flux[n - 1] * factor;
        }
    }
    Ok(ScalarField { grid, data: out })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid2(n: usize) -> GridSpec {
        GridSpec::new(2, n).unwrap()
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(GridSpec::new(1, 8).is_err());
        assert!(GridSpec::new(2, 3).is_err());
        assert!(GridSpec::new(4, 8).is_err());
    }

    #[test]
    fn spacing_and_lengths() {
        let g = GridSpec::new(3, 16).unwrap();
        assert_eq!(g.spacing() * 16.0, 2.0);
        assert_eq!(g.nodes_per_axis(), 17);
        assert_eq!(g.len(), 17 * 17 * 17);
        assert_eq!(g.coord(16), 1.0);
        let idx = g.index(&[3, 5, 7]);
        assert_eq!(g.unravel(idx), [3, 5, 7]);
    }

    #[test]
    fn laplacian_of_constant_is_zero() {
        for g in [grid2(8), GridSpec::new(3, 6).unwrap()] {
            let f = ScalarField::constant(g, 3.7);
            assert!(laplacian(&f).max_abs() < 1e-12);
            assert!(biharmonic(&f).max_abs() < 1e-9);
        }
    }

    #[test]
    fn laplacian_exact_on_quadratics_in_the_interior() {
        let g = grid2(16);
        let f = ScalarField::from_fn(g, |x, _, _| x * x);
        let lap = laplacian(&f);
        for j in 0..=16 {
            for i in 1..16 {
                assert!((lap.at(&[i, j]) - 2.0).abs() < 1e-10);
            }
        }
        let g3 = GridSpec::new(3, 8).unwrap();
        let f3 = ScalarField::from_fn(g3, |x, y, z| x * x + y * y + z * z);
        let lap3 = laplacian(&f3);
        assert!((lap3.at(&[4, 3, 5]) - 6.0).abs() < 1e-10);
    }

    #[test]
    fn ghost_reflection_zeroes_boundary_normal_difference() {
        // Linear profile: the mirrored ghost makes the boundary Laplacian see a
        // kink, i.e. the one-sided centered difference is zero.
        let g = grid2(8);
        let f = ScalarField::from_fn(g, |x, _, _| x);
        let lap = laplacian(&f);
        let h = g.spacing();
        assert!((lap.at(&[0, 3]) - 2.0 * h / (h * h)).abs() < 1e-10);
        assert!((lap.at(&[8, 3]) + 2.0 * h / (h * h)).abs() < 1e-10);
    }

    #[test]
    fn biharmonic_is_laplacian_twice_on_a_spike() {
        let g = grid2(8);
        let mut f = ScalarField::zeros(g);
        let c = g.index(&[3, 4]);
        f.data_mut()[c] = 1.0;
        let direct = biharmonic(&f);
        let twice = laplacian(&laplacian(&f));
        assert_eq!(direct, twice);
    }

    #[test]
    fn div_mobility_grad_with_constant_coef_is_scaled_laplacian() {
        let g = grid2(16);
        let pot = ScalarField::from_fn(g, |x, y, _| (3.0 * x).sin() * (2.0 * y).cos() + x * y);
        let coef = ScalarField::constant(g, 0.7);
        let div = div_mobility_grad(&coef, &pot, 1.0).unwrap();
        let lap = laplacian(&pot);
        for (a, b) in div.data().iter().zip(lap.data()) {
            assert!((a - 0.7 * b).abs() <= 1e-12 * b.abs().max(1.0) * 100.0);
        }
    }

    #[test]
    fn div_of_constant_potential_is_zero() {
        let g = grid2(8);
        let coef = ScalarField::from_fn(g, |x, y, _| 1.0 + x * y);
        let pot = ScalarField::constant(g, 2.0);
        let div = div_mobility_grad(&coef, &pot, 3.0).unwrap();
        assert_eq!(div.max_abs(), 0.0);
    }

    #[test]
    fn div_rejects_grid_mismatch() {
        let a = ScalarField::zeros(grid2(8));
        let b = ScalarField::zeros(grid2(16));
        assert!(matches!(
            div_mobility_grad(&a, &b, 1.0),
            Err(Error::Config(_))
        ));
    }
}
