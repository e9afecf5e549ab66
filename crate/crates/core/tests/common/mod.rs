//! Oracles shared by the integration tests and the acceptance suite.
#![allow(dead_code)]

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tumor_etd::grid::{biharmonic, laplacian};
use tumor_etd::model::ModelParams;
use tumor_etd::spectral::{laplacian_symbol, OperatorKind, PhiTable, SpectralOperator};
use tumor_etd::stepper::{trapezoid_n_value, trapezoid_theta_value};
use tumor_etd::{CosineTransform, GridSpec, ScalarField};

/// 1D second difference with ghost reflection, as a dense matrix.
pub fn dense_laplacian_1d(n: usize, h: f64) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(n + 1, n + 1);
    for p in 0..=n {
        d[(p, p)] = -2.0;
        let left = if p == 0 { 1 } else { p - 1 };
        let right = if p == n { n - 1 } else { p + 1 };
        d[(p, left)] += 1.0;
        d[(p, right)] += 1.0;
    }
    d / (h * h)
}

/// Kronecker-sum Laplacian with x varying fastest.
pub fn dense_laplacian(g: &GridSpec) -> DMatrix<f64> {
    let n = g.cells();
    let d1 = dense_laplacian_1d(n, g.spacing());
    let eye = DMatrix::<f64>::identity(n + 1, n + 1);
    match g.dim() {
        2 => eye.kronecker(&d1) + d1.kronecker(&eye),
        _ => {
            let e2 = eye.kronecker(&eye);
            e2.kronecker(&d1) + eye.kronecker(&d1).kronecker(&eye) + d1.kronecker(&e2)
        }
    }
}

pub fn dense_operator(g: &GridSpec, kind: OperatorKind, p: &ModelParams) -> DMatrix<f64> {
    let d = dense_laplacian(g);
    let eye = DMatrix::<f64>::identity(g.len(), g.len());
    match kind {
        OperatorKind::PhaseField => -p.kappa_t1() * &d + p.kappa_t2() * (&d * &d),
        OperatorKind::Nutrient => p.kappa_sigma() * &eye - (p.m_sigma / p.delta_sigma) * &d,
        OperatorKind::Mde => p.kappa_m() * &eye - p.m_m * &d,
    }
}

/// `[Υ₀(τL), Υ₁(τL), Υ₂(τL)]` from one exponential of the block matrix
/// `[[-τL, I, 0], [0, 0, I], [0, 0, 0]]`.
pub fn dense_upsilons(l: &DMatrix<f64>, tau: f64) -> [DMatrix<f64>; 3] {
    let n = l.nrows();
    let mut big = DMatrix::zeros(3 * n, 3 * n);
    big.view_mut((0, 0), (n, n)).copy_from(&(-tau * l));
    for k in 0..n {
        big[(k, n + k)] = 1.0;
        big[(n + k, 2 * n + k)] = 1.0;
    }
    let e = big.exp();
    [
        e.view((0, 0), (n, n)).into_owned(),
        e.view((0, n), (n, n)).into_owned(),
        e.view((0, 2 * n), (n, n)).into_owned(),
    ]
}

#[derive(Debug, Clone, Copy)]
pub struct DenseErr {
    pub kind: OperatorKind,
    pub tau: f64,
    pub index: usize,
    pub err: f64,
}

/// Max-norm gaps between `PhiTable::apply` and the dense matrix functions on
/// random vectors, for each operator kind, step size and Υ index.
pub fn phi_table_dense_errors(n: usize, taus: &[f64]) -> Vec<DenseErr> {
    let g = GridSpec::new(2, n).unwrap();
    let p = ModelParams::baseline();
    let tr = Arc::new(CosineTransform::new(g));
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut out = Vec::new();
    for kind in [
        OperatorKind::PhaseField,
        OperatorKind::Nutrient,
        OperatorKind::Mde,
    ] {
        let l = dense_operator(&g, kind, &p);
        for &tau in taus {
            let table =
                PhiTable::new(SpectralOperator::build(g, kind, &p), tau, tr.clone()).unwrap();
            let dense = dense_upsilons(&l, tau);
            for (index, m) in dense.iter().enumerate() {
                let mut err = 0.0f64;
                for _ in 0..3 {
                    let v: Vec<f64> = (0..g.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
                    let f = ScalarField::from_vec(g, v.clone()).unwrap();
                    let got = table.apply(index, &f).unwrap();
                    let want = m * nalgebra::DVector::from_vec(v);
                    for (a, b) in got.data().iter().zip(want.iter()) {
                        err = err.max((a - b).abs());
                    }
                }
                out.push(DenseErr {
                    kind,
                    tau,
                    index,
                    err,
                });
            }
        }
    }
    out
}

/// Largest relative gaps (laplacian, biharmonic) between stencils and
/// spectral multipliers over `count` random fields.
pub fn stencil_spectral_errors(n: usize, count: usize, seed: u64) -> (f64, f64) {
    let g = GridSpec::new(2, n).unwrap();
    let tr = CosineTransform::new(g);
    let sym = laplacian_symbol(&g);
    let sym2: Vec<f64> = sym.iter().map(|d| d * d).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut e1, mut e2) = (0.0f64, 0.0f64);
    for _ in 0..count {
        let f = ScalarField::from_vec(
            g,
            (0..g.len()).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let rel = |a: &ScalarField, b: &ScalarField| {
            let scale = a.max_abs().max(1e-300);
            a.data()
                .iter()
                .zip(b.data())
                .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
                / scale
        };
        e1 = e1.max(rel(&laplacian(&f), &tr.apply_diagonal(&f, &sym).unwrap()));
        e2 = e2.max(rel(&biharmonic(&f), &tr.apply_diagonal(&f, &sym2).unwrap()));
    }
    (e1, e2)
}

fn heaviside(x: f64, eps: f64) -> f64 {
    0.5 + (x / eps).atan() / std::f64::consts::PI
}

fn picard(mut x: f64, g: impl Fn(f64) -> f64) -> f64 {
    for _ in 0..2000 {
        let next = g(x);
        if next == x {
            break;
        }
        x = next;
    }
    x
}

/// Largest gaps between the closed-form trapezoid updates and Picard
/// iteration of the implicit trapezoid equations, over `count` random inputs.
pub fn trapezoid_picard_errors(count: usize, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut en, mut et) = (0.0f64, 0.0f64);
    for _ in 0..count {
        let mut p = ModelParams::baseline();
        p.lambda_vn = rng.random_range(0.1..2.0);
        p.lambda_theta_deg = rng.random_range(0.1..2.0);
        // Keep the contraction factor of the iteration at most 3/4.
        let tau_n = rng.random_range(1e-4..1.5) / p.lambda_vn;
        let tau_t = rng.random_range(1e-4..1.5) / p.lambda_theta_deg;

        let t0 = rng.random::<f64>();
        let t1 = rng.random::<f64>();
        let n0 = rng.random::<f64>() * t0;
        let s0 = rng.random::<f64>();
        let s1 = rng.random_range(p.sigma_vn - 0.01..p.sigma_vn + 0.01);
        let h0 = heaviside(p.sigma_vn - s0, p.eps1);
        let h1 = heaviside(p.sigma_vn - s1, p.eps1);
        let a = 0.5 * tau_n * p.lambda_vn;
        let want = picard(n0, |x| n0 + a * (h0 * (t0 - n0) + h1 * (t1 - x)));
        let got = trapezoid_n_value(n0, t0, t1, s0, s1, &p, tau_n);
        en = en.max((got - want).abs());

        let th = rng.random::<f64>();
        let m0 = rng.random::<f64>();
        let m1 = rng.random::<f64>();
        let b = 0.5 * tau_t * p.lambda_theta_deg;
        let want = picard(th, |x| th - b * (m0 * th + m1 * x));
        let got = trapezoid_theta_value(th, m0, m1, &p, tau_t);
        et = et.max((got - want).abs());
    }
    (en, et)
}

/// A few random low cosine modes, rescaled into `[lo, hi]`.
pub fn smooth_random_field(g: &GridSpec, rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> ScalarField {
    let modes: Vec<(f64, f64, f64, f64)> = (0..4)
        .map(|_| {
            (
                rng.random_range(0.0..3.0f64).floor(),
                rng.random_range(0.0..3.0f64).floor(),
                rng.random_range(0.0..3.0f64).floor(),
                rng.random_range(-1.0..1.0),
            )
        })
        .collect();
    let pi = std::f64::consts::PI;
    let raw = ScalarField::from_fn(*g, |x, y, z| {
        modes
            .iter()
            .map(|(kx, ky, kz, a)| {
                a * (kx * pi * (x + 1.0) / 2.0).cos()
                    * (ky * pi * (y + 1.0) / 2.0).cos()
                    * (kz * pi * (z + 1.0) / 2.0).cos()
            })
            .sum()
    });
    let (mn, mx) = (raw.min(), raw.max());
    let span = if mx > mn { mx - mn } else { 1.0 };
    raw.map(|v| lo + (hi - lo) * (v - mn) / span)
}
