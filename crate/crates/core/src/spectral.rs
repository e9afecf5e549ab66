//! Cosine-transform diagonalization of the stabilized linear operators.
//!
//! The ghost-reflected Neumann Laplacian on `N + 1` nodes per axis is
//! diagonalized by the DCT-I basis `cos(pi j k / N)`, with eigenvalues
//! `d_k = -(4/h^2) sin^2(k pi / (2N))`. Each axis transform mirrors the line
//! into `2N` points, runs a complex FFT and keeps the first `N + 1` real parts
//! halved. Two real lines are packed into one complex FFT: the mirrored
//! sequences are real and even, so their spectra are real and separate
//! cleanly into the real and imaginary parts.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarField};
use crate::model::ModelParams;

/// Below this argument the Υ₁/Υ₂ functions switch to their Taylor series.
pub const UPSILON_SERIES_THRESHOLD: f64 = 1e-2;

/// Eigenvalues `d_k`, `k = 0..=N`, of the 1D Neumann Laplacian.
pub fn laplacian_eigs_1d(grid: &GridSpec) -> Vec<f64> {
    let n = grid.cells();
    let h = grid.spacing();
    (0..=n)
        .map(|k| {
            let s = (k as f64 * std::f64::consts::PI / (2.0 * n as f64)).sin();
            -4.0 / (h * h) * s * s
        })
        .collect()
}

/// Per-axis eigenvalue arrays (all axes share `N`, so the arrays are equal).
pub fn laplacian_eigs(grid: &GridSpec) -> Vec<Vec<f64>> {
    let d = laplacian_eigs_1d(grid);
    vec![d; grid.dim()]
}

/// Eigenvalue of the full Laplacian at every spectral index, laid out like a field.
pub fn laplacian_symbol(grid: &GridSpec) -> Vec<f64> {
    let d = laplacian_eigs_1d(grid);
    (0..grid.len())
        .map(|idx| {
            let k = grid.unravel(idx);
            k.iter().take(grid.dim()).map(|&i| d[i]).sum()
        })
        .collect()
}

/// Υ₀(x) = e^{-x}, Υ₁(x) = (1 - e^{-x})/x, Υ₂(x) = (e^{-x} - 1 + x)/x².
pub fn upsilon(i: usize, x: f64) -> Result<f64> {
    if !(x >= 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!(
            "upsilon argument must be finite and >= 0, got {x}"
        )));
    }
    match i {
        0 => Ok((-x).exp()),
        1 => Ok(if x < UPSILON_SERIES_THRESHOLD {
            series(x, 1)
        } else {
            -(-x).exp_m1() / x
        }),
        2 => Ok(if x < UPSILON_SERIES_THRESHOLD {
            series(x, 2)
        } else {
            ((-x).exp_m1() + x) / (x * x)
        }),
        _ => Err(Error::Domain(format!(
            "upsilon index must be 0, 1 or 2, got {i}"
        ))),
    }
}

// sum_{n=0}^{5} (-x)^n / (n + shift)!
fn series(x: f64, shift: u32) -> f64 {
    let mut fact: f64 = (1..=shift).map(f64::from).product();
    let mut term = 1.0 / fact;
    let mut sum = term;
    for n in 1..6u32 {
        fact = f64::from(n + shift);
        term *= -x / fact;
        sum += term;
    }
    sum
}

/// DCT-I per axis via mirrored `2N`-point FFTs.
pub struct CosineTransform {
    grid: GridSpec,
    fft: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for CosineTransform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CosineTransform")
            .field("grid", &self.grid)
            .finish()
    }
}

impl CosineTransform {
    pub fn new(grid: GridSpec) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(2 * grid.cells());
        Self { grid, fft }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn forward(&self, f: &ScalarField) -> Result<ScalarField> {
        self.grid.check_same(f.grid())?;
        let mut out = f.clone();
        self.forward_in_place(out.data_mut());
        Ok(out)
    }

    pub fn inverse(&self, coeffs: &ScalarField) -> Result<ScalarField> {
        self.grid.check_same(coeffs.grid())?;
        let mut out = coeffs.clone();
        self.inverse_in_place(out.data_mut());
        Ok(out)
    }

    /// Forward transform of raw field data. Panics on a length mismatch.
    pub fn forward_in_place(&self, data: &mut [f64]) {
        assert_eq!(
            data.len(),
            self.grid.len(),
            "field length does not match transform grid"
        );
        let n = self.grid.cells();
        let mut buf = vec![Complex::new(0.0, 0.0); 2 * n];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        for axis in 0..self.grid.dim() {
            let s = self.grid.stride(axis);
            let bases: Vec<usize> = self.grid.line_bases(axis).collect();
            for pair in bases.chunks(2) {
                let a = pair[0];
                let b = pair.get(1).copied();
                for j in 0..=n {
                    let re = data[a + j * s];
                    let im = b.map_or(0.0, |b| data[b + j * s]);
                    buf[j] = Complex::new(re, im);
                }
                for j in 1..n {
                    buf[2 * n - j] = buf[j];
                }
                self.fft.process_with_scratch(&mut buf, &mut scratch);
                for k in 0..=n {
                    data[a + k * s] = 0.5 * buf[k].re;
                    if let Some(b) = b {
                        data[b + k * s] = 0.5 * buf[k].im;
                    }
                }
            }
        }
    }

    /// Inverse transform; the DCT-I is self-inverse up to `(2/N)` per axis.
    pub fn inverse_in_place(&self, data: &mut [f64]) {
        self.forward_in_place(data);
        let scale = self.inverse_scale();
        data.iter_mut().for_each(|v| *v *= scale);
    }

    pub(crate) fn inverse_scale(&self) -> f64 {
        (2.0 / self.grid.cells() as f64).powi(self.grid.dim() as i32)
    }

    /// `iDCT(diag ∘ DCT(f))`.
    pub fn apply_diagonal(&self, f: &ScalarField, diag: &[f64]) -> Result<ScalarField> {
        self.grid.check_same(f.grid())?;
        if diag.len() != self.grid.len() {
            return Err(Error::config(
                "diagonal multiplier length does not match grid",
            ));
        }
        let mut out = f.clone();
        let data = out.data_mut();
        self.forward_in_place(data);
        data.iter_mut().zip(diag).for_each(|(v, d)| *v *= d);
        self.inverse_in_place(data);
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorKind {
    /// `-κ_T1 Δ_h + κ_T2 Δ_h²`
    PhaseField,
    /// `-(M_σ/δ_σ) Δ_h + κ_σ I`
    Nutrient,
    /// `-M_M Δ_h + κ_M I`
    Mde,
}

impl FromStr for OperatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "phase_field" => Ok(Self::PhaseField),
            "nutrient" => Ok(Self::Nutrient),
            "mde" => Ok(Self::Mde),
            other => Err(Error::config(format!("unknown operator kind `{other}`"))),
        }
    }
}

/// Eigenvalues of a stabilized linear operator on the DCT basis.
#[derive(Debug, Clone)]
pub struct SpectralOperator {
    grid: GridSpec,
    kind: OperatorKind,
    eigs: Vec<f64>,
}

impl SpectralOperator {
    pub fn build(grid: GridSpec, kind: OperatorKind, params: &ModelParams) -> Self {
        let eigs = laplacian_symbol(&grid)
            .into_iter()
            .map(|d| match kind {
                OperatorKind::PhaseField => -params.kappa_t1() * d + params.kappa_t2() * d * d,
                OperatorKind::Nutrient => params.kappa_sigma() - params.nutrient_diffusivity() * d,
                OperatorKind::Mde => params.kappa_m() - params.m_m * d,
            })
            .collect();
        Self { grid, kind, eigs }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn eigs(&self) -> &[f64] {
        &self.eigs
    }
}

/// Precomputed Υ₀/Υ₁/Υ₂(λτ) multipliers of one operator at a fixed step size.
#[derive(Debug, Clone)]
pub struct PhiTable {
    op: SpectralOperator,
    tau: f64,
    tables: [Vec<f64>; 3],
    transform: Arc<CosineTransform>,
}

impl PhiTable {
    pub fn new(op: SpectralOperator, tau: f64, transform: Arc<CosineTransform>) -> Result<Self> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::config(format!("tau must be > 0, got {tau}")));
        }
        op.grid().check_same(transform.grid())?;
        let mut tables: [Vec<f64>; 3] = Default::default();
        for (i, table) in tables.iter_mut().enumerate() {
            *table = op
                .eigs()
                .iter()
                .map(|&lam| upsilon(i, lam * tau))
                .collect::<Result<_>>()?;
        }
        Ok(Self {
            op,
            tau,
            tables,
            transform,
        })
    }

    pub fn operator(&self) -> &SpectralOperator {
        &self.op
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Υᵢ(λτ) at every spectral index.
    pub fn table(&self, i: usize) -> &[f64] {
        &self.tables[i]
    }

    /// `Υᵢ(Lτ) f`.
    pub fn apply(&self, i: usize, f: &ScalarField) -> Result<ScalarField> {
        if i > 2 {
            return Err(Error::Domain(format!(
                "upsilon index must be 0, 1 or 2, got {i}"
            )));
        }
        self.transform.apply_diagonal(f, &self.tables[i])
    }

    /// `Υ₀(Lτ) x + τ Υ₁(Lτ) nl`.
    pub fn propagate(&self, x: &ScalarField, nl: &ScalarField) -> Result<ScalarField> {
        let grid = self.op.grid();
        grid.check_same(x.grid())?;
        grid.check_same(nl.grid())?;
        let mut xs = x.data().to_vec();
        let mut ns = nl.data().to_vec();
        self.transform.forward_in_place(&mut xs);
        self.transform.forward_in_place(&mut ns);
        for (k, (xv, nv)) in xs.iter_mut().zip(&ns).enumerate() {
            *xv = self.tables[0][k] * *xv + self.tau * self.tables[1][k] * nv;
        }
        self.transform.inverse_in_place(&mut xs);
        ScalarField::from_vec(*grid, xs)
    }

    /// `base + τ Υ₂(Lτ) dn`.
    pub fn correct(&self, base: &ScalarField, dn: &ScalarField) -> Result<ScalarField> {
        let grid = self.op.grid();
        grid.check_same(base.grid())?;
        grid.check_same(dn.grid())?;
        let mut ds = dn.data().to_vec();
        self.transform.forward_in_place(&mut ds);
        for (k, v) in ds.iter_mut().enumerate() {
            *v *= self.tau * self.tables[2][k];
        }
        self.transform.inverse_in_place(&mut ds);
        let data = base.data().iter().zip(&ds).map(|(b, d)| b + d).collect();
        ScalarField::from_vec(*grid, data)
    }
}
