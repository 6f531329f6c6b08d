//! LTI plant/controller pair closed over the network.
//!
//! State ordering throughout: x = (x_p, x_c), z = (z_p, z_c),
//! e_s = (e_ys, e_us), e_f = (e_yf, e_uf). Absent signals are zero-sized
//! blocks, so one assembly path covers every configuration.

use crate::certify::DesignConstants;
use crate::numerics::{mat_inv, mat_mul, Matrix, NumericsError};
use crate::protocols::{protocol_constants, ProtocolSpec};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("block {name} has shape {got:?}, expected {want:?}")]
    Shape {
        name: &'static str,
        want: (usize, usize),
        got: (usize, usize),
    },
    #[error("A33 is singular (pivot {pivot}); the fast subsystem has no isolated quasi-steady state")]
    SingularA33 { pivot: usize },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantDims {
    pub n_xp: usize,
    pub n_zp: usize,
    pub n_ys: usize,
    pub n_yf: usize,
    pub n_us: usize,
    pub n_uf: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControllerDims {
    pub n_xc: usize,
    pub n_zc: usize,
}

/// Plant blocks. Missing blocks in the wire form default to zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantMatrices {
    pub dims: PlantDims,
    #[serde(default)]
    pub a11p: Option<Matrix>,
    #[serde(default)]
    pub a12p: Option<Matrix>,
    #[serde(default)]
    pub a21p: Option<Matrix>,
    #[serde(default)]
    pub a22p: Option<Matrix>,
    #[serde(default)]
    pub a13p: Option<Matrix>,
    #[serde(default)]
    pub a14p: Option<Matrix>,
    #[serde(default)]
    pub a23p: Option<Matrix>,
    #[serde(default)]
    pub a24p: Option<Matrix>,
    #[serde(default)]
    pub ax_ps: Option<Matrix>,
    #[serde(default)]
    pub ax_pf: Option<Matrix>,
    #[serde(default)]
    pub az_pf: Option<Matrix>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerMatrices {
    pub dims: ControllerDims,
    #[serde(default)]
    pub a11c: Option<Matrix>,
    #[serde(default)]
    pub a12c: Option<Matrix>,
    #[serde(default)]
    pub a21c: Option<Matrix>,
    #[serde(default)]
    pub a22c: Option<Matrix>,
    #[serde(default)]
    pub a13c: Option<Matrix>,
    #[serde(default)]
    pub a14c: Option<Matrix>,
    #[serde(default)]
    pub a23c: Option<Matrix>,
    #[serde(default)]
    pub a24c: Option<Matrix>,
    #[serde(default)]
    pub ax_cs: Option<Matrix>,
    #[serde(default)]
    pub ax_cf: Option<Matrix>,
    #[serde(default)]
    pub az_cf: Option<Matrix>,
}

impl PlantMatrices {
    pub fn empty(dims: PlantDims) -> Self {
        PlantMatrices {
            dims,
            a11p: None,
            a12p: None,
            a21p: None,
            a22p: None,
            a13p: None,
            a14p: None,
            a23p: None,
            a24p: None,
            ax_ps: None,
            ax_pf: None,
            az_pf: None,
        }
    }
}

impl ControllerMatrices {
    pub fn empty(dims: ControllerDims) -> Self {
        ControllerMatrices {
            dims,
            a11c: None,
            a12c: None,
            a21c: None,
            a22c: None,
            a13c: None,
            a14c: None,
            a23c: None,
            a24c: None,
            ax_cs: None,
            ax_cf: None,
            az_cf: None,
        }
    }
}

fn block(name: &'static str, m: &Option<Matrix>, rows: usize, cols: usize) -> Result<Matrix, ModelError> {
    match m {
        None => Ok(Matrix::zeros(rows, cols)),
        Some(m) if m.shape() == (rows, cols) => Ok(m.clone()),
        Some(m) => Err(ModelError::Shape { name, want: (rows, cols), got: m.shape() }),
    }
}

/// Sizes of the four continuous state components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateDims {
    pub n_x: usize,
    pub n_es: usize,
    pub n_z: usize,
    pub n_ef: usize,
}

impl StateDims {
    pub fn total(&self) -> usize {
        self.n_x + self.n_es + self.n_z + self.n_ef
    }
}

/// Every block of the closed loop plus the quasi-steady-state and
/// reduced/boundary-layer matrices, computed once.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClosedLoop {
    pub dims: StateDims,
    pub plant_dims: PlantDims,
    pub controller_dims: ControllerDims,
    pub a11: Matrix,
    pub a12: Matrix,
    pub a13: Matrix,
    pub a14: Matrix,
    pub a21: Matrix,
    pub a22: Matrix,
    pub a23: Matrix,
    pub a24: Matrix,
    pub a31: Matrix,
    pub a32: Matrix,
    pub a33: Matrix,
    pub a34: Matrix,
    pub a41: Matrix,
    pub a42: Matrix,
    pub a43: Matrix,
    pub a44: Matrix,
    pub a41e: Matrix,
    pub a42e: Matrix,
    pub a43e: Matrix,
    pub a44e: Matrix,
    pub ax_s: Matrix,
    pub ax_f: Matrix,
    pub az_f: Matrix,
    pub a33_inv: Matrix,
    pub hx: Matrix,
    pub he: Matrix,
    pub a11s: Matrix,
    pub a12s: Matrix,
    pub a21s: Matrix,
    pub a22s: Matrix,
    pub a11f: Matrix,
    pub a12f: Matrix,
    pub a21f: Matrix,
    pub a22f: Matrix,
}

fn mm(a: &Matrix, b: &Matrix) -> Result<Matrix, ModelError> {
    Ok(mat_mul(a, b)?)
}

fn sum(a: Matrix, b: Matrix) -> Result<Matrix, ModelError> {
    Ok(a.add(&b)?)
}

pub fn assemble_closed_loop(p: &PlantMatrices, c: &ControllerMatrices) -> Result<ClosedLoop, ModelError> {
    let PlantDims { n_xp, n_zp, n_ys, n_yf, n_us, n_uf } = p.dims;
    let ControllerDims { n_xc, n_zc } = c.dims;

    let a11p = block("a11p", &p.a11p, n_xp, n_xp)?;
    let a12p = block("a12p", &p.a12p, n_xp, n_zp)?;
    let a21p = block("a21p", &p.a21p, n_zp, n_xp)?;
    let a22p = block("a22p", &p.a22p, n_zp, n_zp)?;
    let a13p = block("a13p", &p.a13p, n_xp, n_us)?;
    let a14p = block("a14p", &p.a14p, n_xp, n_uf)?;
    let a23p = block("a23p", &p.a23p, n_zp, n_us)?;
    let a24p = block("a24p", &p.a24p, n_zp, n_uf)?;
    let ax_ps = block("ax_ps", &p.ax_ps, n_ys, n_xp)?;
    let ax_pf = block("ax_pf", &p.ax_pf, n_yf, n_xp)?;
    let az_pf = block("az_pf", &p.az_pf, n_yf, n_zp)?;

    let a11c = block("a11c", &c.a11c, n_xc, n_xc)?;
    let a12c = block("a12c", &c.a12c, n_xc, n_zc)?;
    let a21c = block("a21c", &c.a21c, n_zc, n_xc)?;
    let a22c = block("a22c", &c.a22c, n_zc, n_zc)?;
    let a13c = block("a13c", &c.a13c, n_xc, n_ys)?;
    let a14c = block("a14c", &c.a14c, n_xc, n_yf)?;
    let a23c = block("a23c", &c.a23c, n_zc, n_ys)?;
    let a24c = block("a24c", &c.a24c, n_zc, n_yf)?;
    let ax_cs = block("ax_cs", &c.ax_cs, n_us, n_xc)?;
    let ax_cf = block("ax_cf", &c.ax_cf, n_uf, n_xc)?;
    let az_cf = block("az_cf", &c.az_cf, n_uf, n_zc)?;

    let z = Matrix::zeros;
    let a11 = Matrix::block(&[
        &[&a11p, &sum(mm(&a13p, &ax_cs)?, mm(&a14p, &ax_cf)?)?],
        &[&sum(mm(&a13c, &ax_ps)?, mm(&a14c, &ax_pf)?)?, &a11c],
    ])?;
    let a12 = Matrix::block(&[&[&z(n_xp, n_ys), &a13p], &[&a13c, &z(n_xc, n_us)]])?;
    let a13 = Matrix::block(&[&[&a12p, &mm(&a14p, &az_cf)?], &[&mm(&a14c, &az_pf)?, &a12c]])?;
    let a14 = Matrix::block(&[&[&z(n_xp, n_yf), &a14p], &[&a14c, &z(n_xc, n_uf)]])?;

    let a31 = Matrix::block(&[
        &[&a21p, &sum(mm(&a23p, &ax_cs)?, mm(&a24p, &ax_cf)?)?],
        &[&sum(mm(&a23c, &ax_ps)?, mm(&a24c, &ax_pf)?)?, &a21c],
    ])?;
    let a32 = Matrix::block(&[&[&z(n_zp, n_ys), &a23p], &[&a23c, &z(n_zc, n_us)]])?;
    let a33 = Matrix::block(&[&[&a22p, &mm(&a24p, &az_cf)?], &[&mm(&a24c, &az_pf)?, &a22c]])?;
    let a34 = Matrix::block(&[&[&z(n_zp, n_yf), &a24p], &[&a24c, &z(n_zc, n_uf)]])?;

    let ax_s = Matrix::block_diag(&[&ax_ps.scale(-1.0), &ax_cs.scale(-1.0)]);
    let ax_f = Matrix::block_diag(&[&ax_pf.scale(-1.0), &ax_cf.scale(-1.0)]);
    let az_f = Matrix::block_diag(&[&az_pf.scale(-1.0), &az_cf.scale(-1.0)]);

    let a21 = mm(&ax_s, &a11)?;
    let a22 = mm(&ax_s, &a12)?;
    let a23 = mm(&ax_s, &a13)?;
    let a24 = mm(&ax_s, &a14)?;
    let a41e = mm(&ax_f, &a11)?;
    let a42e = mm(&ax_f, &a12)?;
    let a43e = mm(&ax_f, &a13)?;
    let a44e = mm(&ax_f, &a14)?;
    let a41 = mm(&az_f, &a31)?;
    let a42 = mm(&az_f, &a32)?;
    let a43 = mm(&az_f, &a33)?;
    let a44 = mm(&az_f, &a34)?;

    let a33_inv = mat_inv(&a33).map_err(|e| match e {
        NumericsError::Singular { pivot } => ModelError::SingularA33 { pivot },
        other => ModelError::Numerics(other),
    })?;
    let g31 = mm(&a33_inv, &a31)?;
    let g32 = mm(&a33_inv, &a32)?;
    let hx = g31.scale(-1.0);
    let he = g32.scale(-1.0);
    let a11s = a11.sub(&mm(&a13, &g31)?)?;
    let a12s = a12.sub(&mm(&a13, &g32)?)?;
    let a21s = a21.sub(&mm(&a23, &g31)?)?;
    let a22s = a22.sub(&mm(&a23, &g32)?)?;
    let a11f = a33.clone();
    let a12f = a34.clone();
    let a21f = mm(&az_f, &a33)?;
    let a22f = mm(&az_f, &a34)?;

    Ok(ClosedLoop {
        dims: StateDims { n_x: n_xp + n_xc, n_es: n_ys + n_us, n_z: n_zp + n_zc, n_ef: n_yf + n_uf },
        plant_dims: p.dims,
        controller_dims: c.dims,
        a11,
        a12,
        a13,
        a14,
        a21,
        a22,
        a23,
        a24,
        a31,
        a32,
        a33,
        a34,
        a41,
        a42,
        a43,
        a44,
        a41e,
        a42e,
        a43e,
        a44e,
        ax_s,
        ax_f,
        az_f,
        a33_inv,
        hx,
        he,
        a11s,
        a12s,
        a21s,
        a22s,
        a11f,
        a12f,
        a21f,
        a22f,
    })
}

impl ClosedLoop {
    /// The fast diagonal block [[A33, A34], [A43, A44]] that sets the stiffness.
    pub fn fast_block(&self) -> Matrix {
        Matrix::block(&[&[&self.a33, &self.a34], &[&self.a43, &self.a44]]).expect("conformable by construction")
    }

    /// [Hx He]: the Jacobian of the quasi-steady state in (x, e_s).
    pub fn h_bar(&self) -> Matrix {
        Matrix::hstack(&[&self.hx, &self.he]).expect("conformable by construction")
    }
}

/// H̄(x, e_s) = Hx·x + He·e_s.
pub fn quasi_steady_state(cl: &ClosedLoop, x: &[f64], e_s: &[f64]) -> Result<Vec<f64>, ModelError> {
    let mut z = cl.hx.apply(x)?;
    let ze = cl.he.apply(e_s)?;
    z.iter_mut().zip(ze).for_each(|(a, b)| *a += b);
    Ok(z)
}

/// Parameters of the two-time-scale example loop.
pub mod example {
    pub const A1: f64 = 1e-4;
    pub const A2: f64 = 0.2;
    pub const A3: f64 = 0.6;
    pub const A4: f64 = 0.73;
    pub const A5: f64 = 1.11;
    pub const A6: f64 = 0.37;
    pub const K: f64 = 1.5;
    pub const N1: f64 = 0.02;
    pub const N2: f64 = 0.0018;
    /// Slow transmission interval bounds used with the example.
    pub const MIATI_S: f64 = 0.3241;
    pub const MATI_S: f64 = 0.3601;
}

/// The illustrative loop: scalar slow plant state, two fast plant states,
/// scalar controller, slow channel carrying u_s, fast channel carrying y_f.
pub fn example_fixture() -> (PlantMatrices, ControllerMatrices, DesignConstants) {
    use example::*;
    let mut p = PlantMatrices::empty(PlantDims { n_xp: 1, n_zp: 2, n_ys: 0, n_yf: 1, n_us: 1, n_uf: 0 });
    p.a11p = Some(Matrix::scalar(A1));
    p.a12p = Some(Matrix::from_rows(&[&[A2, 0.0]]));
    p.a21p = Some(Matrix::from_rows(&[&[0.0], &[A3]]));
    p.a22p = Some(Matrix::from_rows(&[&[-A2, 0.0], &[-A2, -A4]]));
    p.a13p = Some(Matrix::scalar(N1));
    p.a23p = Some(Matrix::from_rows(&[&[-N2], &[-N2]]));
    p.ax_pf = Some(Matrix::scalar(1.0));
    p.az_pf = Some(Matrix::from_rows(&[&[0.0, 1.0]]));

    let mut c = ControllerMatrices::empty(ControllerDims { n_xc: 1, n_zc: 0 });
    c.a11c = Some(Matrix::scalar(-A5));
    c.a14c = Some(Matrix::scalar(A6));
    c.ax_cs = Some(Matrix::scalar(-K));

    let reset = protocol_constants(&ProtocolSpec::reset_all(1));
    let dc = DesignConstants {
        p_s: Matrix::from_rows(&[&[54.91, -1.76], &[-1.76, 1.81]]),
        p_f: Matrix::from_rows(&[&[1.12, 0.018], &[0.018, 0.65]]),
        gamma_s: 2.58,
        gamma_f: 0.64,
        lambda_star_s: 0.33,
        lambda_star_f: 0.46,
        a_rho_s: 1.16,
        a_rho_f: 0.41,
        l_s: 0.0,
        l_f: 0.0,
        protocol_s: reset,
        protocol_f: reset,
        l1: 1.0,
        l1_fast: 1.0,
    };
    (p, c, dc)
}

/// Assembled example loop.
pub fn example_closed_loop() -> ClosedLoop {
    let (p, c, _) = example_fixture();
    assemble_closed_loop(&p, &c).expect("example loop is well posed")
}
