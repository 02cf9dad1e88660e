//! Scattering-matrix block: rotation-matrix descent on the set of matrices
//! with orthonormal columns.
//!
//! For fixed precoders and auxiliaries the surrogate depends on the stacked
//! matrix `Θ = [Θ_t; Θ_r]` (`2K×K`, `ΘᴴΘ = I_K`) only through
//!
//! ```text
//! f(Θ) = Tr(Θ Y Θᴴ Z) − 2 Re Tr(Θ X)
//! ```
//!
//! which is minimized. The Euclidean gradient is `∇ = 2ZΘY − 2Xᴴ`, the
//! Riemannian direction `J = ∇Θᴴ − Θ∇ᴴ` is skew-Hermitian, and a step
//! multiplies `Θ` by the truncated exponential
//! `R = I − μJ + (μJ)²/2 − (μJ)³/6`, followed by a polar retraction.
//!
//! `Y`, `Z` and `X` built from a scenario have rank at most `N`, so the
//! optimizer works with factors `Y = P Pᴴ`, `Z = F Fᴴ`, `X = P_x Q_xᴴ` and
//! never forms `J` densely. The dense operations are kept as reference.

use std::ops::Range;

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelSet, Group};
use crate::fp::AuxState;
use crate::linalg::{hermitian_defect, hermitian_part, orthonormality_residual, polar_factor, psd_factor};
use crate::{CMat, Complex64, Error, Result};

/// Tolerance on `‖ΘᴴΘ − I_K‖_F`.
pub const C1_TOL: f64 = 1e-8;

/// Stacked scattering matrix `[Θ_t; Θ_r]` with orthonormal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatteringMatrix {
    theta: CMat,
}

impl ScatteringMatrix {
    pub fn new(theta: CMat) -> Result<Self> {
        let k = theta.ncols();
        if k == 0 || theta.nrows() != 2 * k {
            return Err(Error::dim(
                "scattering matrix",
                format!("{}×{}", 2 * k, k),
                format!("{}×{}", theta.nrows(), theta.ncols()),
            ));
        }
        let residual = orthonormality_residual(&theta);
        if !(residual <= C1_TOL) {
            return Err(Error::Domain {
                what: "scattering matrix",
                reason: format!("‖ΘᴴΘ − I‖_F = {residual:e} exceeds {C1_TOL:e}"),
            });
        }
        Ok(Self { theta })
    }

    /// `Θ_t = Θ_r = I_K/√2`.
    pub fn equal_split(k: usize) -> Self {
        let s = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let mut theta = CMat::zeros(2 * k, k);
        for i in 0..k {
            theta[(i, i)] = s;
            theta[(k + i, i)] = s;
        }
        Self { theta }
    }

    /// Whole surface in one mode: the other block is zero.
    pub fn single_mode(group: Group, block: &CMat) -> Result<Self> {
        let k = block.ncols();
        if block.nrows() != k {
            return Err(Error::dim("single-mode block", format!("{k}×{k}"), block.nrows()));
        }
        let mut theta = CMat::zeros(2 * k, k);
        theta
            .view_mut((block_rows(group, k).start, 0), (k, k))
            .copy_from(block);
        Self::new(theta)
    }

    pub fn elements(&self) -> usize {
        self.theta.ncols()
    }

    pub fn matrix(&self) -> &CMat {
        &self.theta
    }

    pub fn into_matrix(self) -> CMat {
        self.theta
    }

    pub fn block(&self, group: Group) -> CMat {
        let k = self.elements();
        self.theta.rows_range(block_rows(group, k)).into_owned()
    }

    pub fn transmissive(&self) -> CMat {
        self.block(Group::Transmissive)
    }

    pub fn reflective(&self) -> CMat {
        self.block(Group::Reflective)
    }

    /// `‖ΘᴴΘ − I_K‖_F`.
    pub fn residual(&self) -> f64 {
        orthonormality_residual(&self.theta)
    }
}

/// Row range of a group's block in the stacked matrix.
pub fn block_rows(group: Group, k: usize) -> Range<usize> {
    match group {
        Group::Transmissive => 0..k,
        Group::Reflective => k..2 * k,
    }
}

/// Low-rank factors `Y = P Pᴴ`, `Z = F Fᴴ`, `X = P_x Q_xᴴ`.
#[derive(Debug, Clone, PartialEq)]
struct Factors {
    p: CMat,
    f: CMat,
    px: CMat,
    qx: CMat,
}

/// Data of the trace subproblem `min Tr(ΘYΘᴴZ) − 2Re Tr(ΘX)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceProblem {
    x: CMat,
    y: CMat,
    z: CMat,
    factors: Factors,
}

impl TraceProblem {
    /// Build from dense `X` (`K×p`), `Y` (`K×K`) and `Z` (`p×p`).
    pub fn from_dense(x: CMat, y: CMat, z: CMat) -> Result<Self> {
        let k = y.nrows();
        let p = z.nrows();
        if y.ncols() != k || z.ncols() != p || x.shape() != (k, p) {
            return Err(Error::dim(
                "trace problem",
                format!("X {k}×{p}, Y {k}×{k}, Z {p}×{p}"),
                format!(
                    "X {}×{}, Y {}×{}, Z {}×{}",
                    x.nrows(),
                    x.ncols(),
                    y.nrows(),
                    y.ncols(),
                    z.nrows(),
                    z.ncols()
                ),
            ));
        }
        check_psd("Y", &y)?;
        check_psd("Z", &z)?;
        let factors = Factors {
            p: psd_factor(&y, 1e-14),
            f: psd_factor(&z, 1e-14),
            px: x.clone(),
            qx: CMat::identity(p, p),
        };
        Ok(Self { x, y, z, factors })
    }

    fn from_factors(factors: Factors) -> Self {
        let Factors { p, f, px, qx } = &factors;
        Self {
            x: px * qx.adjoint(),
            y: p * p.adjoint(),
            z: f * f.adjoint(),
            factors,
        }
    }

    pub fn x(&self) -> &CMat {
        &self.x
    }

    pub fn y(&self) -> &CMat {
        &self.y
    }

    pub fn z(&self) -> &CMat {
        &self.z
    }

    /// `K`, the number of columns of `Θ`.
    pub fn elements(&self) -> usize {
        self.y.nrows()
    }

    /// Number of rows of `Θ`.
    pub fn rows(&self) -> usize {
        self.z.nrows()
    }

    /// Sub-problem over rows `range` of `Θ` only.
    pub fn restrict_rows(&self, range: Range<usize>) -> Self {
        let f = self.factors.f.rows_range(range.clone()).into_owned();
        let qx = self.factors.qx.rows_range(range).into_owned();
        Self::from_factors(Factors {
            p: self.factors.p.clone(),
            f,
            px: self.factors.px.clone(),
            qx,
        })
    }

    /// `‖Y‖_F‖Z‖_F + ‖X‖_F`, a bound on the size of the gradient.
    pub fn scale(&self) -> f64 {
        self.y.norm() * self.z.norm() + self.x.norm()
    }

    /// The same problem divided by [`Self::scale`]; minimizers are unchanged.
    pub fn normalized(&self) -> Self {
        let s = self.scale();
        if !(s > 0.0 && s.is_finite()) {
            return self.clone();
        }
        let Factors { p, f, px, qx } = &self.factors;
        Self::from_factors(Factors {
            p: p * Complex64::new(s.sqrt().recip(), 0.0),
            f: f.clone(),
            px: px * Complex64::new(s.recip(), 0.0),
            qx: qx.clone(),
        })
    }

    /// `Tr(ΘYΘᴴZ) − 2 Re Tr(ΘX)`.
    pub fn objective(&self, theta: &CMat) -> f64 {
        let Factors { p, f, px, qx } = &self.factors;
        let quad = (f.adjoint() * theta * p).norm_squared();
        let lin = (qx.adjoint() * theta * px).trace();
        quad - 2.0 * lin.re
    }

    /// Dense evaluation of the same objective.
    pub fn objective_dense(&self, theta: &CMat) -> f64 {
        let quad = (theta * &self.y * theta.adjoint() * &self.z).trace();
        let lin = (theta * &self.x).trace();
        quad.re - 2.0 * lin.re
    }
}

fn check_psd(name: &str, a: &CMat) -> Result<()> {
    let scale = 1.0 + a.norm();
    let defect = hermitian_defect(a);
    if defect > 1e-10 * scale {
        return Err(Error::Domain {
            what: "trace problem",
            reason: format!("{name} is not Hermitian (defect {defect:e})"),
        });
    }
    let eig = nalgebra::SymmetricEigen::new(hermitian_part(a));
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if a.nrows() > 0 && min < -1e-10 * scale {
        return Err(Error::Domain {
            what: "trace problem",
            reason: format!("{name} is not positive semidefinite (eigenvalue {min:e})"),
        });
    }
    Ok(())
}

/// Trace subproblem for the stacked `Θ` at fixed precoders `W` (`M×N`) and
/// auxiliaries.
///
/// `X_i = Σ_{n∈N_i} √(1+β_n)·conj(α_n)·(G w_n) h_nᴴ`, `Y = Σ_n (G w_n)(G w_n)ᴴ`,
/// `Z_i = Σ_{n∈N_i} |α_n|² h_n h_nᴴ`, stacked as `X = [X_t, X_r]` and
/// `Z = blkdiag(Z_t, Z_r)`.
pub fn assemble_trace_problem(
    channels: &ChannelSet,
    w: &CMat,
    aux: &AuxState,
    groups: &[Group],
) -> Result<TraceProblem> {
    let n = channels.num_users();
    let k = channels.irs_elements();
    if w.ncols() != n || groups.len() != n || aux.len() != n {
        return Err(Error::dim(
            "trace problem users",
            n,
            format!("W {} cols, {} groups, {} aux", w.ncols(), groups.len(), aux.len()),
        ));
    }
    if w.nrows() != channels.bs_antennas() {
        return Err(Error::dim("precoder rows", channels.bs_antennas(), w.nrows()));
    }
    let gw = &channels.g * w;
    let mut f = CMat::zeros(2 * k, n);
    let mut qx = CMat::zeros(2 * k, n);
    let mut px = CMat::zeros(k, n);
    for i in 0..n {
        let rows = block_rows(groups[i], k);
        let h = &channels.h[i];
        if h.len() != k {
            return Err(Error::dim("user channel length", k, h.len()));
        }
        let a = aux.alpha[i];
        f.view_mut((rows.start, i), (k, 1))
            .copy_from(&(h * Complex64::new(a.norm(), 0.0)));
        qx.view_mut((rows.start, i), (k, 1)).copy_from(h);
        px.set_column(i, &(gw.column(i) * (a.conj() * (1.0 + aux.beta[i]).sqrt())));
    }
    Ok(TraceProblem::from_factors(Factors {
        p: gw,
        f,
        px,
        qx,
    }))
}

/// `2ZΘY − 2Xᴴ`, the gradient with respect to `Θ*` scaled by 2, so that
/// `df = Re Tr(∇ᴴ dΘ)`.
pub fn euclidean_gradient(prob: &TraceProblem, theta: &CMat) -> Result<CMat> {
    check_theta(prob, theta)?;
    let two = Complex64::new(2.0, 0.0);
    Ok((&prob.z * theta * &prob.y - prob.x.adjoint()) * two)
}

/// `J = ∇Θᴴ − Θ∇ᴴ`.
pub fn riemannian_direction(grad: &CMat, theta: &CMat) -> Result<CMat> {
    if grad.shape() != theta.shape() {
        return Err(Error::dim(
            "riemannian direction",
            format!("{:?}", theta.shape()),
            format!("{:?}", grad.shape()),
        ));
    }
    Ok(grad * theta.adjoint() - theta * grad.adjoint())
}

/// Coefficients of `(μJ)^k` in `R`.
const ROTATION_COEFFS: [f64; 4] = [1.0, -1.0, 0.5, -1.0 / 6.0];
/// Coefficients of `(μJ)^k` in `U = R²`.
const DOUBLE_ROTATION_COEFFS: [f64; 7] = [
    1.0,
    -2.0,
    2.0,
    -4.0 / 3.0,
    7.0 / 12.0,
    -1.0 / 6.0,
    1.0 / 36.0,
];

/// `R = I − μJ + (μJ)²/2 − (μJ)³/6`.
pub fn rotation(j: &CMat, mu: f64) -> Result<CMat> {
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(Error::Domain {
            what: "step size",
            reason: format!("{mu} must be non-negative"),
        });
    }
    if j.nrows() != j.ncols() {
        return Err(Error::dim("rotation generator", "square", format!("{:?}", j.shape())));
    }
    let n = j.nrows();
    let mj = j * Complex64::new(mu, 0.0);
    let mut out = CMat::identity(n, n);
    let mut power = CMat::identity(n, n);
    for &c in &ROTATION_COEFFS[1..] {
        power = &power * &mj;
        out += &power * Complex64::new(c, 0.0);
    }
    Ok(out)
}

/// Polar retraction of a stacked `2K×K` matrix back onto `ΘᴴΘ = I`.
pub fn retract(theta_raw: &CMat) -> Result<ScatteringMatrix> {
    ScatteringMatrix::new(polar_factor(theta_raw)?)
}

fn check_theta(prob: &TraceProblem, theta: &CMat) -> Result<()> {
    if theta.shape() != (prob.rows(), prob.elements()) {
        return Err(Error::dim(
            "scattering matrix",
            format!("{}×{}", prob.rows(), prob.elements()),
            format!("{}×{}", theta.nrows(), theta.ncols()),
        ));
    }
    Ok(())
}

/// `J = L Sᴴ − S Lᴴ` with thin `L`, `S`.
struct Direction {
    l: CMat,
    s: CMat,
}

impl Direction {
    fn new(prob: &TraceProblem, theta: &CMat) -> Self {
        let Factors { p, f, px, qx } = &prob.factors;
        // ∇ = L_g R_gᴴ with L_g = [2F(FᴴΘP), −2Q_x], R_g = [P, P_x]
        let r1 = p.ncols();
        let r2 = px.ncols();
        let rows = theta.nrows();
        let mut l = CMat::zeros(rows, r1 + r2);
        l.columns_mut(0, r1)
            .copy_from(&(f * (f.adjoint() * theta * p) * Complex64::new(2.0, 0.0)));
        l.columns_mut(r1, r2).copy_from(&(qx * Complex64::new(-2.0, 0.0)));
        let mut rg = CMat::zeros(theta.ncols(), r1 + r2);
        rg.columns_mut(0, r1).copy_from(p);
        rg.columns_mut(r1, r2).copy_from(px);
        let s = theta * rg;
        Self { l, s }
    }

    #[cfg(test)]
    fn apply(&self, v: &CMat) -> CMat {
        &self.l * (self.s.adjoint() * v) - &self.s * (self.l.adjoint() * v)
    }

    /// `‖J‖_F²` from `J = A Bᴴ`, `A = [L, −S]`, `B = [S, L]`.
    fn norm_sq(&self) -> f64 {
        let ll = self.l.adjoint() * &self.l;
        let ss = self.s.adjoint() * &self.s;
        let ls = self.l.adjoint() * &self.s;
        let sl = ls.adjoint();
        // AᴴA = [[LᴴL, −LᴴS], [−SᴴL, SᴴS]],  BᴴB = [[SᴴS, SᴴL], [LᴴS, LᴴL]]
        // Tr(AᴴA·BᴴB) = Tr(LᴴL SᴴS) − Tr(LᴴS LᴴS) − Tr(SᴴL SᴴL) + Tr(SᴴS LᴴL)
        let t = (&ll * &ss).trace() * 2.0 - (&ls * &ls).trace() - (&sl * &sl).trace();
        t.re.max(0.0)
    }
}

/// Largest `σ_max²` of a candidate accepted by the thin polar factor.
const THIN_POLAR_MAX_GAIN: f64 = 1e3;

/// The points `Θ + Σ_k c_k μ^k J^kΘ` for one direction, kept in the thin form
/// `Θ + Q_a B` with `Q_a` an orthonormal basis of `span[L, S]`.
///
/// Candidates are retracted and scored without forming any `2K×K` matrix:
/// the objective only sees `G_Lᴴ Θ G_R` with `G_L = [F, Q_x]`, `G_R = [P, P_x]`.
struct StepFamily<'a> {
    prob: &'a TraceProblem,
    theta: &'a CMat,
    q_a: CMat,
    /// `Q_aᴴΘ`
    t: CMat,
    /// `B_k` with `J^kΘ = Q_a B_k`, starting at `k = 1`
    b: Vec<CMat>,
    /// `G_Lᴴ Θ`, `G_Lᴴ Q_a`, `G_R`
    gl_theta: CMat,
    gl_qa: CMat,
    g_r: CMat,
}

/// A retracted candidate `raw·(I + V C Vᴴ)` with `raw = Θ + Q_a B`, or a
/// dense fallback.
enum Candidate {
    Thin { b: CMat, v: CMat, c: CMat },
    Dense(CMat),
}

impl<'a> StepFamily<'a> {
    fn new(prob: &'a TraceProblem, dir: &Direction, theta: &'a CMat, order: usize) -> Self {
        let r = dir.l.ncols();
        let mut a = CMat::zeros(theta.nrows(), 2 * r);
        a.columns_mut(0, r).copy_from(&dir.l);
        a.columns_mut(r, r).copy_from(&dir.s);
        let qr = a.clone().qr();
        let (q_a, r_a) = (qr.q(), qr.r());
        // J·A C = A·M C with M = [Sᴴ; −Lᴴ] A
        let mut m = CMat::zeros(2 * r, 2 * r);
        m.rows_mut(0, r).copy_from(&(dir.s.adjoint() * &a));
        m.rows_mut(r, r).copy_from(&(-(dir.l.adjoint() * &a)));
        let mut c = CMat::zeros(2 * r, theta.ncols());
        c.rows_mut(0, r).copy_from(&(dir.s.adjoint() * theta));
        c.rows_mut(r, r).copy_from(&(-(dir.l.adjoint() * theta)));
        let mut b = Vec::with_capacity(order);
        for k in 0..order {
            if k > 0 {
                c = &m * c;
            }
            b.push(&r_a * &c);
        }
        let t = q_a.adjoint() * theta;

        let Factors { p, f, px, qx } = &prob.factors;
        let mut g_l = CMat::zeros(theta.nrows(), f.ncols() + qx.ncols());
        g_l.columns_mut(0, f.ncols()).copy_from(f);
        g_l.columns_mut(f.ncols(), qx.ncols()).copy_from(qx);
        let mut g_r = CMat::zeros(theta.ncols(), p.ncols() + px.ncols());
        g_r.columns_mut(0, p.ncols()).copy_from(p);
        g_r.columns_mut(p.ncols(), px.ncols()).copy_from(px);
        let gl_theta = g_l.adjoint() * theta;
        let gl_qa = g_l.adjoint() * &q_a;
        Self {
            prob,
            theta,
            q_a,
            t,
            b,
            gl_theta,
            gl_qa,
            g_r,
        }
    }

    fn raw(&self, b: &CMat) -> CMat {
        self.theta + &self.q_a * b
    }

    /// Polar factor of `Θ + Σ_k coeffs[k] μ^k J^kΘ` with its objective value.
    ///
    /// With `D = Q_a B`, `ΘᴴΘ = I` gives `rawᴴraw = I + E`,
    /// `E = TᴴB + BᴴT + BᴴB = Zᴴ [[0, I], [I, I]] Z` for `Z = [T; B]`, so the
    /// inverse square root only needs a small eigenproblem on the row space of `Z`.
    fn candidate(&self, coeffs: &[f64], mu: f64) -> Option<(Candidate, f64)> {
        let (rb, k) = (self.t.nrows(), self.theta.ncols());
        let mut bsum = CMat::zeros(rb, k);
        let mut scale = 1.0;
        for (bk, &c) in self.b.iter().zip(&coeffs[1..]) {
            scale *= mu;
            bsum += bk * Complex64::new(c * scale, 0.0);
        }
        let mut z = CMat::zeros(2 * rb, k);
        z.rows_mut(0, rb).copy_from(&self.t);
        z.rows_mut(rb, rb).copy_from(&bsum);
        let qr = z.adjoint().qr();
        let (v, r_z) = (qr.q(), qr.r());
        let mut mid = CMat::zeros(2 * rb, 2 * rb);
        for i in 0..rb {
            mid[(i, rb + i)] = Complex64::new(1.0, 0.0);
            mid[(rb + i, i)] = Complex64::new(1.0, 0.0);
            mid[(rb + i, rb + i)] = Complex64::new(1.0, 0.0);
        }
        let mut core = &r_z * mid * r_z.adjoint();
        for i in 0..core.nrows() {
            core[(i, i)] += Complex64::new(1.0, 0.0);
        }
        let eig = SymmetricEigen::new(hermitian_part(&core));
        let lam_min = eig.eigenvalues.iter().cloned().fold(1.0_f64, f64::min);
        let lam_max = eig.eigenvalues.iter().cloned().fold(1.0_f64, f64::max);
        if !(lam_max.is_finite() && lam_min > 1e-14 * lam_max) {
            return None;
        }
        if lam_max > THIN_POLAR_MAX_GAIN {
            // forming I + E squares the conditioning; go dense
            let q = polar_factor(&self.raw(&bsum)).ok()?;
            let value = self.prob.objective(&q);
            return value.is_finite().then_some((Candidate::Dense(q), value));
        }
        let u = &eig.eigenvectors;
        let mut scaled = u.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= Complex64::new(eig.eigenvalues[j].sqrt().recip() - 1.0, 0.0);
        }
        // (I + V(core − I)Vᴴ)^{-1/2} = I + V(core^{-1/2} − I)Vᴴ
        let c = scaled * u.adjoint();

        // G_Lᴴ Θ' G_R = (G_Lᴴ raw) G_R + (G_Lᴴ raw V) C (Vᴴ G_R)
        let gl_raw = &self.gl_theta + &self.gl_qa * &bsum;
        let small = &gl_raw * &self.g_r + (&gl_raw * &v) * c.clone() * (v.adjoint() * &self.g_r);
        let Factors { p, f, px, qx } = &self.prob.factors;
        let quad = small.view((0, 0), (f.ncols(), p.ncols())).norm_squared();
        let lin = small.view((f.ncols(), p.ncols()), (qx.ncols(), px.ncols())).trace();
        let value = quad - 2.0 * lin.re;
        value.is_finite().then_some((Candidate::Thin { b: bsum, v, c }, value))
    }

    fn materialize(&self, cand: Candidate) -> CMat {
        match cand {
            Candidate::Dense(q) => q,
            Candidate::Thin { b, v, c } => {
                let raw = self.raw(&b);
                let rv = &raw * &v;
                raw + rv * c * v.adjoint()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManifoldOptions {
    pub initial_step: f64,
    /// Stop once `‖J‖_F² ≤ grad_tol`; `None` means `1e-6·K`.
    pub grad_tol: Option<f64>,
    pub max_iters: usize,
    pub max_halvings: usize,
}

impl Default for ManifoldOptions {
    fn default() -> Self {
        Self {
            initial_step: 1.0,
            grad_tol: None,
            max_iters: 500,
            max_halvings: 30,
        }
    }
}

impl ManifoldOptions {
    pub fn grad_tol_for(&self, k: usize) -> f64 {
        self.grad_tol.unwrap_or(1e-6 * k as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManifoldStatus {
    /// `‖J‖_F²` fell below the tolerance.
    Converged,
    /// No step size within the halving budget decreased the objective.
    Stalled,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldTrace {
    /// Objective at the start and after every accepted step.
    pub objective: Vec<f64>,
    /// Step size used for every accepted step.
    pub steps: Vec<f64>,
    /// `‖J‖_F²` at every gradient evaluation.
    pub grad_norm_sq: Vec<f64>,
    pub status: ManifoldStatus,
}

impl ManifoldTrace {
    pub fn iterations(&self) -> usize {
        self.steps.len()
    }
}

/// Minimize the trace objective over stacked scattering matrices.
pub fn optimize_theta(
    prob: &TraceProblem,
    init: &ScatteringMatrix,
    opts: &ManifoldOptions,
) -> Result<(ScatteringMatrix, ManifoldTrace)> {
    let (theta, trace) = optimize_orthonormal(prob, init.matrix(), opts)?;
    Ok((ScatteringMatrix::new(theta)?, trace))
}

/// Rotation-step descent on `{Θ : ΘᴴΘ = I}` for any row count.
pub fn optimize_orthonormal(
    prob: &TraceProblem,
    init: &CMat,
    opts: &ManifoldOptions,
) -> Result<(CMat, ManifoldTrace)> {
    check_theta(prob, init)?;
    if orthonormality_residual(init) > C1_TOL {
        return Err(Error::Domain {
            what: "initial scattering matrix",
            reason: "columns are not orthonormal".into(),
        });
    }
    let tol = opts.grad_tol_for(prob.elements());
    let mut theta = init.clone();
    let mut value = prob.objective(&theta);
    let mut mu = opts.initial_step;
    let mut trace = ManifoldTrace {
        objective: vec![value],
        steps: Vec::new(),
        grad_norm_sq: Vec::new(),
        status: ManifoldStatus::MaxIterations,
    };

    for _ in 0..opts.max_iters {
        let dir = Direction::new(prob, &theta);
        let g2 = dir.norm_sq();
        trace.grad_norm_sq.push(g2);
        if g2 <= tol {
            trace.status = ManifoldStatus::Converged;
            break;
        }
        let steps = StepFamily::new(prob, &dir, &theta, DOUBLE_ROTATION_COEFFS.len() - 1);
        let candidate = |coeffs: &[f64], mu: f64| steps.candidate(coeffs, mu);

        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let single = candidate(&ROTATION_COEFFS, mu);
            let double = candidate(&DOUBLE_ROTATION_COEFFS, mu);
            let f_r = single.as_ref().map_or(f64::INFINITY, |c| c.1);
            let f_u = double.as_ref().map_or(f64::INFINITY, |c| c.1);
            if f_u < f_r && f_u < value {
                accepted = double.map(|c| (c, 2.0 * mu));
                mu *= 2.0;
                break;
            } else if f_r < value {
                accepted = single.map(|c| (c, mu));
                break;
            }
            mu *= 0.5;
        }
        match accepted {
            Some(((cand, v), step)) => {
                theta = steps.materialize(cand);
                value = v;
                trace.objective.push(v);
                trace.steps.push(step);
            }
            None => {
                trace.status = ManifoldStatus::Stalled;
                break;
            }
        }
    }
    Ok((theta, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn randc(rng: &mut ChaCha8Rng) -> Complex64 {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    }

    fn random_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> CMat {
        CMat::from_fn(r, c, |_, _| randc(rng))
    }

    fn random_psd(rng: &mut ChaCha8Rng, n: usize, rank: usize) -> CMat {
        let b = random_mat(rng, n, rank);
        &b * b.adjoint()
    }

    fn random_problem(rng: &mut ChaCha8Rng, k: usize) -> TraceProblem {
        TraceProblem::from_dense(
            random_mat(rng, k, 2 * k),
            random_psd(rng, k, 2),
            random_psd(rng, 2 * k, 3),
        )
        .unwrap()
    }

    fn random_feasible(rng: &mut ChaCha8Rng, k: usize) -> CMat {
        polar_factor(&random_mat(rng, 2 * k, k)).unwrap()
    }

    #[test]
    fn scattering_matrix_construction() {
        let eq = ScatteringMatrix::equal_split(3);
        assert!(eq.residual() < 1e-15);
        assert!(ScatteringMatrix::new(eq.matrix().clone()).is_ok());
        assert!(ScatteringMatrix::new(CMat::identity(3, 3)).is_err());
        assert!(ScatteringMatrix::new(eq.matrix() * Complex64::new(2.0, 0.0)).is_err());

        let single = ScatteringMatrix::single_mode(Group::Reflective, &CMat::identity(2, 2)).unwrap();
        assert_eq!(single.transmissive(), CMat::zeros(2, 2));
        assert_eq!(single.reflective(), CMat::identity(2, 2));
    }

    #[test]
    fn factored_and_dense_objectives_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for k in 1..5 {
            let prob = random_problem(&mut rng, k);
            let theta = random_feasible(&mut rng, k);
            let a = prob.objective(&theta);
            let b = prob.objective_dense(&theta);
            assert!((a - b).abs() < 1e-10 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn trace_problem_validation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_mat(&mut rng, 2, 4);
        let y = random_psd(&mut rng, 2, 1);
        let z = random_psd(&mut rng, 4, 2);
        assert!(TraceProblem::from_dense(x.clone(), y.clone(), z.clone()).is_ok());
        assert!(TraceProblem::from_dense(x.clone(), random_mat(&mut rng, 2, 2), z.clone()).is_err());
        let neg = -z.clone();
        assert!(TraceProblem::from_dense(x.clone(), y.clone(), neg).is_err());
        assert!(TraceProblem::from_dense(random_mat(&mut rng, 2, 3), y, z).is_err());
    }

    #[test]
    fn gradient_trivial_cases() {
        let k = 2;
        let theta = ScatteringMatrix::equal_split(k).into_matrix();
        let zero = TraceProblem::from_dense(
            CMat::zeros(k, 2 * k),
            CMat::zeros(k, k),
            CMat::zeros(2 * k, 2 * k),
        )
        .unwrap();
        assert_eq!(euclidean_gradient(&zero, &theta).unwrap(), CMat::zeros(2 * k, k));

        let ident = TraceProblem::from_dense(
            CMat::zeros(k, 2 * k),
            CMat::identity(k, k),
            CMat::identity(2 * k, 2 * k),
        )
        .unwrap();
        let g = euclidean_gradient(&ident, &theta).unwrap();
        assert!((g - &theta * Complex64::new(2.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = 1e-6;
        for k in 1..5 {
            let prob = random_problem(&mut rng, k);
            let theta = random_mat(&mut rng, 2 * k, k);
            let g = euclidean_gradient(&prob, &theta).unwrap();
            let mut fd = CMat::zeros(2 * k, k);
            for i in 0..2 * k {
                for j in 0..k {
                    let e = |d: Complex64| {
                        let mut t = theta.clone();
                        t[(i, j)] += d;
                        prob.objective_dense(&t)
                    };
                    let re = (e(Complex64::new(h, 0.0)) - e(Complex64::new(-h, 0.0))) / (2.0 * h);
                    let im = (e(Complex64::new(0.0, h)) - e(Complex64::new(0.0, -h))) / (2.0 * h);
                    fd[(i, j)] = Complex64::new(re, im);
                }
            }
            assert!((&g - &fd).norm() <= 1e-5 * g.norm(), "k={k}");
        }
    }

    #[test]
    fn direction_is_skew_hermitian_and_factored_form_matches() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for k in 1..5 {
            let prob = random_problem(&mut rng, k);
            let theta = random_feasible(&mut rng, k);
            let g = euclidean_gradient(&prob, &theta).unwrap();
            let j = riemannian_direction(&g, &theta).unwrap();
            assert!((&j + j.adjoint()).norm() <= 1e-12 * (1.0 + j.norm()));

            let dir = Direction::new(&prob, &theta);
            let v = random_mat(&mut rng, 2 * k, k);
            assert!((dir.apply(&v) - &j * &v).norm() < 1e-10 * (1.0 + j.norm() * v.norm()));
            assert!((dir.norm_sq() - j.norm_squared()).abs() < 1e-10 * (1.0 + j.norm_squared()));
        }
        let z = CMat::zeros(4, 2);
        assert_eq!(riemannian_direction(&z, &random_feasible(&mut rng, 2)).unwrap(), CMat::zeros(4, 4));
    }

    #[test]
    fn descent_along_minus_j_theta() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let k = rng.random_range(1..5);
            let prob = random_problem(&mut rng, k);
            let theta = random_feasible(&mut rng, k);
            let g = euclidean_gradient(&prob, &theta).unwrap();
            let j = riemannian_direction(&g, &theta).unwrap();
            let d = -(&j * &theta);
            let h = 1e-6;
            let deriv = (prob.objective_dense(&(&theta + &d * Complex64::new(h, 0.0)))
                - prob.objective_dense(&(&theta - &d * Complex64::new(h, 0.0))))
                / (2.0 * h);
            assert!(deriv <= 0.0);
            // on the manifold the slope is exactly −‖J‖²/2
            assert!((deriv + 0.5 * j.norm_squared()).abs() < 1e-5 * (1.0 + j.norm_squared()));
        }
    }

    #[test]
    fn rotation_trivial_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = random_mat(&mut rng, 4, 4);
        let j = &a - a.adjoint();
        assert_eq!(rotation(&j, 0.0).unwrap(), CMat::identity(4, 4));
        assert_eq!(rotation(&CMat::zeros(4, 4), 0.7).unwrap(), CMat::identity(4, 4));
        assert!(rotation(&j, -1.0).is_err());
    }

    #[test]
    fn factored_candidate_matches_dense_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let k = 3;
        let prob = random_problem(&mut rng, k);
        let theta = random_feasible(&mut rng, k);
        let g = euclidean_gradient(&prob, &theta).unwrap();
        let j = riemannian_direction(&g, &theta).unwrap();
        let dir = Direction::new(&prob, &theta);
        let mut powers = vec![theta.clone()];
        for i in 1..7 {
            let next = dir.apply(&powers[i - 1]);
            powers.push(next);
        }
        let mu: f64 = 0.05;
        let combine = |coeffs: &[f64]| {
            let mut out = powers[0].clone();
            for (i, &c) in coeffs.iter().enumerate().skip(1) {
                out += &powers[i] * Complex64::new(c * mu.powi(i as i32), 0.0);
            }
            out
        };
        let r = rotation(&j, mu).unwrap();
        assert!((combine(&ROTATION_COEFFS) - &r * &theta).norm() < 1e-10);
        assert!((combine(&DOUBLE_ROTATION_COEFFS) - &r * &r * &theta).norm() < 1e-10);
    }

    #[test]
    fn thin_retraction_matches_dense_polar() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for k in [1, 2, 3, 6, 9] {
            let prob = random_problem(&mut rng, k);
            let theta = random_feasible(&mut rng, k);
            let dir = Direction::new(&prob, &theta);
            let steps = StepFamily::new(&prob, &dir, &theta, DOUBLE_ROTATION_COEFFS.len() - 1);
            let mut powers = vec![theta.clone()];
            for i in 1..DOUBLE_ROTATION_COEFFS.len() {
                let next = dir.apply(&powers[i - 1]);
                powers.push(next);
            }
            for coeffs in [&ROTATION_COEFFS[..], &DOUBLE_ROTATION_COEFFS[..]] {
                let jn = dir.norm_sq().sqrt();
                for mu in [1e-3 / jn, 0.3 / jn, 2.0 / jn] {
                    let mut raw = powers[0].clone();
                    for (i, &c) in coeffs.iter().enumerate().skip(1) {
                        raw += &powers[i] * Complex64::new(c * f64::powi(mu, i as i32), 0.0);
                    }
                    let dense = polar_factor(&raw).unwrap();
                    let (cand, value) = steps.candidate(coeffs, mu).unwrap();
                    assert!(matches!(cand, Candidate::Thin { .. }));
                    let thin = steps.materialize(cand);
                    assert!((&dense - &thin).norm() < 1e-10, "k={k} mu={mu}");
                    let expect = prob.objective(&dense);
                    assert!((value - expect).abs() < 1e-9 * (1.0 + expect.abs()));
                    assert!(orthonormality_residual(&thin) < 1e-12);
                }
                // oversized steps take the dense path
                let (far, value) = steps.candidate(coeffs, 8.0 / jn).unwrap();
                let far = steps.materialize(far);
                assert!(orthonormality_residual(&far) < C1_TOL);
                assert!((value - prob.objective(&far)).abs() < 1e-9 * (1.0 + value.abs()));
            }
        }
    }

    #[test]
    fn retraction_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let theta = random_feasible(&mut rng, 3);
        let same = retract(&theta).unwrap();
        assert!((same.matrix() - &theta).norm() < 1e-12);
        let scaled = retract(&(&theta * Complex64::new(2.0, 0.0))).unwrap();
        assert!((scaled.matrix() - &theta).norm() < 1e-12);
        for _ in 0..20 {
            let raw = &theta + random_mat(&mut rng, 6, 3) * Complex64::new(0.1, 0.0);
            assert!(retract(&raw).unwrap().residual() <= 1e-12);
        }
        assert!(matches!(retract(&CMat::zeros(6, 3)), Err(Error::Decomposition(_))));
    }

    #[test]
    fn stationary_problem_returns_init() {
        let k = 3;
        let prob = TraceProblem::from_dense(
            CMat::zeros(k, 2 * k),
            CMat::identity(k, k),
            CMat::zeros(2 * k, 2 * k),
        )
        .unwrap();
        let init = ScatteringMatrix::equal_split(k);
        let (out, trace) = optimize_theta(&prob, &init, &ManifoldOptions::default()).unwrap();
        assert_eq!(out, init);
        assert_eq!(trace.grad_norm_sq.len(), 1);
        assert_eq!(trace.status, ManifoldStatus::Converged);
    }

    #[test]
    fn descent_is_monotone_and_converges() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..5 {
            let k = 3;
            let prob = random_problem(&mut rng, k);
            // the stop test is on ‖J‖², the bound below on ‖J‖
            let tol = ManifoldOptions::default().grad_tol_for(k);
            let opts = ManifoldOptions {
                max_iters: 5000,
                grad_tol: Some((10.0 * tol).powi(2)),
                ..ManifoldOptions::default()
            };
            let init = ScatteringMatrix::equal_split(k);
            let (out, trace) = optimize_theta(&prob, &init, &opts).unwrap();
            for w in trace.objective.windows(2) {
                assert!(w[1] <= w[0] + 1e-10);
            }
            assert!(out.residual() <= C1_TOL);
            let g = euclidean_gradient(&prob, out.matrix()).unwrap();
            let j = riemannian_direction(&g, out.matrix()).unwrap();
            assert_eq!(trace.status, ManifoldStatus::Converged, "{:?}", trace.grad_norm_sq.last());
            assert!(j.norm() <= 10.0 * tol);
        }
    }

    #[test]
    fn normalization_rescales_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let k = 2;
        let prob = random_problem(&mut rng, k);
        let norm = prob.normalized();
        assert!((norm.scale() - 1.0).abs() < 1e-12);
        let theta = random_feasible(&mut rng, k);
        let ratio = prob.objective(&theta) / norm.objective(&theta);
        assert!((ratio - prob.scale()).abs() < 1e-9 * prob.scale());
    }

    #[test]
    fn restricted_problem_matches_block_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let k = 3;
        let prob = random_problem(&mut rng, k);
        let block = polar_factor(&random_mat(&mut rng, k, k)).unwrap();
        for group in [Group::Transmissive, Group::Reflective] {
            let sub = prob.restrict_rows(block_rows(group, k));
            let full = ScatteringMatrix::single_mode(group, &block).unwrap();
            let a = sub.objective(&block);
            let b = prob.objective_dense(full.matrix());
            assert!((a - b).abs() < 1e-10 * (1.0 + b.abs()));
        }
    }
}
