//! Tendon-driven Cosserat rod discretized with a strain basis.
//!
//! Strain is `ξ(X) = Φ_ξ(X) q + ξ*`, angular components first, with the rod
//! axis along the local `z`. Tendon `i` at cross-section offset `d_i(X)` has
//! length `∫ |ω × d + ν + d′| dX`, whose gradient is the actuation column.

mod basis;
mod routing;

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use basis::{bending_and_torsion_basis, shifted_legendre, BasisColumn};
pub use routing::{Routing, Tendon};

use crate::dynamics::{ActuationModel, Backbone};
use crate::error::{Error, Result};
use crate::models::chain::{ChainDynamics, Frame, SliceChain, SliceInertia};
use crate::numeric::is_positive_definite;
use crate::quadrature::CompositeRule;
use crate::spatial::{ad_inverse_twist, cross, se3_exp, se3_tangent, Pose, Real, Vec6};

/// Reference strain of the straight, unstretched rod.
pub const REFERENCE_STRAIN: [f64; 6] = [0.0, 0.0, 0.0, 0.0, 0.0, 1.0];

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GvsParams {
    pub length: f64,
    pub radius_base: f64,
    pub radius_tip: f64,
    pub density: f64,
    pub young: f64,
    pub poisson: f64,
    /// Material viscosity; the damping matrix is `(damping / young) K`.
    pub damping: f64,
    pub gravity: f64,
    /// Kinematic intervals along the rod.
    pub intervals: usize,
    /// Gauss–Legendre points per quadrature panel.
    pub quadrature_order: usize,
    pub tendons: Vec<Tendon>,
    pub basis: Vec<BasisColumn>,
}

impl Default for GvsParams {
    fn default() -> Self {
        GvsParams::full()
    }
}

fn material() -> GvsParams {
    GvsParams {
        length: 0.4,
        radius_base: 0.02,
        radius_tip: 0.008,
        density: 680.0,
        young: 8.88e5,
        poisson: 0.5,
        damping: 1e4,
        gravity: 9.81,
        intervals: 20,
        quadrature_order: 16,
        tendons: Vec::new(),
        basis: Vec::new(),
    }
}

fn oblique(k: usize, p: &GvsParams) -> Routing {
    let base = 0.0016;
    Routing::Oblique {
        angle: k as f64 * PI / 3.0,
        base_offset: base,
        tip_offset: base * p.radius_tip / p.radius_base,
    }
}

fn helical(phase: f64, p: &GvsParams) -> Routing {
    Routing::Helical {
        phase,
        offset: 0.006,
        pitch: p.length / (2.0 * PI),
    }
}

impl GvsParams {
    /// Six oblique tendons (every other one anchored at mid-length) and two
    /// helical tendons; eight compliance columns plus seven bending and
    /// torsion modes.
    pub fn full() -> Self {
        let mut p = material();
        for k in 0..6 {
            let r = oblique(k, &p);
            p.tendons.push(if k % 2 == 0 {
                Tendon::ending_at(r, p.length / 2.0)
            } else {
                Tendon::full(r)
            });
        }
        p.tendons.push(Tendon::full(helical(0.0, &p)));
        p.tendons.push(Tendon::full(helical(PI, &p)));
        p.basis = (0..8).map(|tendon| BasisColumn::TendonCompliance { tendon }).collect();
        p.basis.extend(bending_and_torsion_basis(2, 0));
        p
    }

    /// Three full-length oblique tendons and one helical tendon, nine modes.
    pub fn reduced() -> Self {
        let mut p = material();
        for k in [1, 3, 5] {
            p.tendons.push(Tendon::full(oblique(k, &p)));
        }
        p.tendons.push(Tendon::full(helical(0.0, &p)));
        p.basis = (0..4).map(|tendon| BasisColumn::TendonCompliance { tendon }).collect();
        p.basis.extend(bending_and_torsion_basis(1, 0));
        p
    }
}

struct Node {
    x: f64,
    w: f64,
    phi: Vec<Vec6<f64>>,
}

pub struct GvsRod {
    params: GvsParams,
    breakpoints: Vec<f64>,
    nodes: Vec<Node>,
    /// Basis at the midpoint of every kinematic interval.
    mid_phi: Vec<Vec<Vec6<f64>>>,
    slices: Vec<SliceInertia>,
    stiffness: DMatrix<f64>,
}

impl std::fmt::Debug for GvsRod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GvsRod")
            .field("dof", &self.dof())
            .field("tendons", &self.params.tendons.len())
            .finish()
    }
}

fn w_vector(xi: &Vec6<f64>, d: &[f64; 3], dp: &[f64; 3]) -> [f64; 3] {
    let om = [xi[0], xi[1], xi[2]];
    let c = cross(&om, d);
    [c[0] + xi[3] + dp[0], c[1] + xi[4] + dp[1], c[2] + xi[5] + dp[2]]
}

/// `(d × t; t)` with `t` the unit tangent of the tendon.
fn tendon_wrench(w: &[f64; 3], d: &[f64; 3], norm: f64) -> Vec6<f64> {
    let t = [w[0] / norm, w[1] / norm, w[2] / norm];
    let m = cross(d, &t);
    [m[0], m[1], m[2], t[0], t[1], t[2]]
}

impl GvsRod {
    pub fn new(params: GvsParams) -> Result<Self> {
        let p = &params;
        if !(p.length > 0.0 && p.radius_base > 0.0 && p.radius_tip > 0.0) {
            return Err(Error::InvalidConfig("rod length and radii must be positive".into()));
        }
        if !(p.density > 0.0 && p.young > 0.0 && p.poisson > -1.0 && p.damping >= 0.0) {
            return Err(Error::InvalidConfig("invalid material constants".into()));
        }
        if p.intervals == 0 || p.quadrature_order == 0 {
            return Err(Error::InvalidConfig("intervals and quadrature order must be positive".into()));
        }
        if p.basis.is_empty() {
            return Err(Error::InvalidConfig("strain basis is empty".into()));
        }
        for (i, t) in p.tendons.iter().enumerate() {
            if t.routing.is_centered() {
                return Err(Error::DegenerateRouting {
                    tendon: i,
                    reason: "zero offset along the whole tendon gives no bending moment".into(),
                });
            }
            let e = t.end_or(p.length);
            if !(e > 0.0 && e <= p.length) {
                return Err(Error::DegenerateRouting {
                    tendon: i,
                    reason: format!("end {e} outside (0, {}]", p.length),
                });
            }
        }
        for col in &p.basis {
            match *col {
                BasisColumn::TendonCompliance { tendon } if tendon >= p.tendons.len() => {
                    return Err(Error::InvalidConfig(format!("basis refers to missing tendon {tendon}")));
                }
                BasisColumn::Legendre { component, .. } if component >= 6 => {
                    return Err(Error::InvalidConfig(format!("strain component {component} out of range")));
                }
                _ => {}
            }
        }

        let mut breakpoints = vec![0.0, p.length];
        breakpoints.extend(p.tendons.iter().map(|t| t.end_or(p.length)));
        breakpoints.sort_by(f64::total_cmp);
        breakpoints.dedup();

        let mut rod = GvsRod {
            params: params.clone(),
            breakpoints,
            nodes: Vec::new(),
            mid_phi: Vec::new(),
            slices: Vec::new(),
            stiffness: DMatrix::zeros(0, 0),
        };
        for (i, t) in rod.params.tendons.iter().enumerate() {
            let (d, dp) = t.routing.offset(0.0, rod.params.length);
            let norm = {
                let w = w_vector(&REFERENCE_STRAIN, &d, &dp);
                (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt()
            };
            if norm < 1e-9 {
                return Err(Error::DegenerateRouting {
                    tendon: i,
                    reason: "tangent vanishes in the reference configuration".into(),
                });
            }
        }
        rod.nodes = rod.make_nodes(&rod.breakpoints.clone());
        let n = rod.dof();
        let dx = rod.params.length / rod.params.intervals as f64;
        rod.mid_phi = (0..rod.params.intervals)
            .map(|k| rod.basis_at((k as f64 + 0.5) * dx))
            .collect();
        rod.slices = (1..=rod.params.intervals)
            .map(|k| {
                let x = k as f64 * dx;
                let w = if k == rod.params.intervals { 0.5 * dx } else { dx };
                let r = rod.radius(x);
                let area = PI * r * r;
                let i2 = 0.25 * PI * r.powi(4);
                let rho = rod.params.density;
                SliceInertia {
                    mass: rho * area * w,
                    moments: [rho * i2 * w, rho * i2 * w, 2.0 * rho * i2 * w],
                }
            })
            .collect();

        let mut k = DMatrix::zeros(n, n);
        for node in &rod.nodes {
            let sig = rod.sigma(node.x);
            for a in 0..n {
                for b in a..n {
                    let v: f64 = (0..6).map(|r| node.phi[a][r] * sig[r] * node.phi[b][r]).sum();
                    k[(a, b)] += node.w * v;
                }
            }
        }
        for a in 0..n {
            for b in 0..a {
                k[(a, b)] = k[(b, a)];
            }
        }
        if !is_positive_definite(&k) {
            return Err(Error::InvalidConfig("strain basis columns are linearly dependent".into()));
        }
        rod.stiffness = k;
        Ok(rod)
    }

    fn make_nodes(&self, breakpoints: &[f64]) -> Vec<Node> {
        CompositeRule::new(breakpoints, self.params.quadrature_order)
            .points()
            .iter()
            .map(|&(x, w)| Node {
                x,
                w,
                phi: self.basis_at(x),
            })
            .collect()
    }

    pub fn params(&self) -> &GvsParams {
        &self.params
    }

    pub fn dof(&self) -> usize {
        self.params.basis.len()
    }

    pub fn tendons(&self) -> usize {
        self.params.tendons.len()
    }

    pub fn radius(&self, x: f64) -> f64 {
        let p = &self.params;
        p.radius_base + (p.radius_tip - p.radius_base) * x / p.length
    }

    /// Diagonal of the cross-section stiffness `diag(EI, EI, GJ, GA, GA, EA)`.
    pub fn sigma(&self, x: f64) -> [f64; 6] {
        let p = &self.params;
        let r = self.radius(x);
        let area = PI * r * r;
        let i2 = 0.25 * PI * r.powi(4);
        let g = p.young / (2.0 * (1.0 + p.poisson));
        [
            p.young * i2,
            p.young * i2,
            g * 2.0 * i2,
            g * area,
            g * area,
            p.young * area,
        ]
    }

    fn reference_wrench(&self, tendon: usize, x: f64) -> Vec6<f64> {
        let (d, dp) = self.params.tendons[tendon].routing.offset(x, self.params.length);
        let w = w_vector(&REFERENCE_STRAIN, &d, &dp);
        let norm = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
        tendon_wrench(&w, &d, norm)
    }

    /// Columns of `Φ_ξ(X)`.
    pub fn basis_at(&self, x: f64) -> Vec<Vec6<f64>> {
        let p = &self.params;
        p.basis
            .iter()
            .map(|col| match *col {
                BasisColumn::TendonCompliance { tendon } => {
                    if x > p.tendons[tendon].end_or(p.length) {
                        return [0.0; 6];
                    }
                    let s = self.sigma(x);
                    let a = self.reference_wrench(tendon, x);
                    std::array::from_fn(|r| a[r] / s[r])
                }
                BasisColumn::Legendre { component, degree } => {
                    let mut v = [0.0; 6];
                    v[component] = shifted_legendre(degree, x, p.length);
                    v
                }
            })
            .collect()
    }

    fn strain_from(phi: &[Vec6<f64>], q: &DVector<f64>) -> Vec6<f64> {
        let mut xi = REFERENCE_STRAIN;
        for (c, col) in phi.iter().enumerate() {
            for r in 0..6 {
                xi[r] += col[r] * q[c];
            }
        }
        xi
    }

    pub fn strain(&self, x: f64, q: &DVector<f64>) -> Vec6<f64> {
        Self::strain_from(&self.basis_at(x), q)
    }

    /// Length of an arbitrary tendon path anchored at `end`; unlike model
    /// tendons, a centered routing is allowed here.
    pub fn routing_length(&self, routing: &Routing, end: f64, q: &DVector<f64>) -> Result<f64> {
        let mut bp: Vec<f64> = self.breakpoints.iter().copied().filter(|&b| b < end).collect();
        bp.push(end);
        let mut total = 0.0;
        for node in self.make_nodes(&bp) {
            let (d, dp) = routing.offset(node.x, self.params.length);
            let w = w_vector(&Self::strain_from(&node.phi, q), &d, &dp);
            let norm = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
            if norm < 1e-12 {
                return Err(Error::DegenerateTangent { x: node.x, norm });
            }
            total += node.w * norm;
        }
        Ok(total)
    }

    /// Current lengths of all tendons.
    pub fn cable_lengths(&self, q: &DVector<f64>) -> Result<DVector<f64>> {
        let mut out = DVector::zeros(self.tendons());
        for node in &self.nodes {
            let xi = Self::strain_from(&node.phi, q);
            for (i, t) in self.params.tendons.iter().enumerate() {
                if node.x > t.end_or(self.params.length) {
                    continue;
                }
                let (d, dp) = t.routing.offset(node.x, self.params.length);
                let w = w_vector(&xi, &d, &dp);
                let norm = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
                if norm < 1e-12 {
                    return Err(Error::DegenerateTangent { x: node.x, norm });
                }
                out[i] += node.w * norm;
            }
        }
        Ok(out)
    }

    /// `A(q)`, column `i` being `∫ Φ_ξᵀ (d_i × t_i; t_i) dX`. Points where a
    /// tangent collapses contribute nothing.
    pub fn actuation_matrix(&self, q: &DVector<f64>) -> DMatrix<f64> {
        let n = self.dof();
        let mut a = DMatrix::zeros(n, self.tendons());
        for node in &self.nodes {
            let xi = Self::strain_from(&node.phi, q);
            for (i, t) in self.params.tendons.iter().enumerate() {
                if node.x > t.end_or(self.params.length) {
                    continue;
                }
                let (d, dp) = t.routing.offset(node.x, self.params.length);
                let w = w_vector(&xi, &d, &dp);
                let norm = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
                if norm < 1e-12 {
                    continue;
                }
                let f = tendon_wrench(&w, &d, norm);
                for c in 0..n {
                    let v: f64 = (0..6).map(|r| node.phi[c][r] * f[r]).sum();
                    a[(c, i)] += node.w * v;
                }
            }
        }
        a
    }

    pub fn stiffness(&self) -> &DMatrix<f64> {
        &self.stiffness
    }

    /// Frames of the `intervals` slice nodes, each with its body Jacobian.
    pub fn node_frames<T: Real>(&self, q: &[T]) -> Vec<Frame<T>> {
        let n = self.dof();
        let dx = self.params.length / self.params.intervals as f64;
        let mut g = Pose::<T>::identity();
        let mut jac = vec![[T::zero(); 6]; n];
        let mut out = Vec::with_capacity(self.params.intervals);
        for phi in &self.mid_phi {
            let mut s: Vec6<T> = REFERENCE_STRAIN.map(|v| T::from_f64(v * dx));
            for (c, col) in phi.iter().enumerate() {
                for r in 0..6 {
                    if col[r] != 0.0 {
                        s[r] += q[c].scale(col[r] * dx);
                    }
                }
            }
            let e = se3_exp(&s);
            let tan = se3_tangent(&s);
            for (c, col) in phi.iter().enumerate() {
                let mut next = ad_inverse_twist(&e, &jac[c]);
                for (r, slot) in next.iter_mut().enumerate() {
                    for k in 0..6 {
                        if col[k] != 0.0 {
                            *slot += tan[r][k].scale(col[k] * dx);
                        }
                    }
                }
                jac[c] = next;
            }
            g = g.compose(&e);
            out.push(Frame {
                pose: g,
                jacobian: jac.clone(),
            });
        }
        out
    }

    /// Centerline points from the base to the tip.
    pub fn centerline(&self, q: &DVector<f64>) -> Vec<[f64; 3]> {
        let mut pts = vec![[0.0; 3]];
        pts.extend(self.node_frames(q.as_slice()).iter().map(|f| f.pose.pos));
        pts
    }
}

/// Mechanics of the rod as a slice chain.
#[derive(Clone, Debug)]
pub struct GvsChain(pub Arc<GvsRod>);

impl SliceChain for GvsChain {
    fn dof(&self) -> usize {
        self.0.dof()
    }

    fn slices(&self) -> &[SliceInertia] {
        &self.0.slices
    }

    fn poses<T: Real>(&self, q: &[T]) -> Vec<Pose<T>> {
        self.0.node_frames(q).into_iter().map(|f| f.pose).collect()
    }

    fn frames<T: Real>(&self, q: &[T]) -> Vec<Frame<T>> {
        self.0.node_frames(q)
    }

    fn gravity(&self) -> [f64; 3] {
        [0.0, 0.0, self.0.params.gravity]
    }

    fn elastic_energy(&self, q: &DVector<f64>) -> f64 {
        0.5 * q.dot(&(&self.0.stiffness * q))
    }

    fn elastic_gradient(&self, q: &DVector<f64>) -> DVector<f64> {
        &self.0.stiffness * q
    }

    fn damping_force(&self, _q: &DVector<f64>, qdot: &DVector<f64>) -> DVector<f64> {
        (&self.0.stiffness * qdot) * (self.0.params.damping / self.0.params.young)
    }

    fn strictly_damped(&self) -> bool {
        self.0.params.damping > 0.0
    }
}

pub type GvsModel = ChainDynamics<GvsChain>;

#[derive(Clone, Debug)]
pub struct GvsActuation(pub Arc<GvsRod>);

impl ActuationModel for GvsActuation {
    fn dof(&self) -> usize {
        self.0.dof()
    }

    fn inputs(&self) -> usize {
        self.0.tendons()
    }

    fn matrix(&self, q: &DVector<f64>) -> DMatrix<f64> {
        self.0.actuation_matrix(q)
    }

    /// Tendon length changes relative to the reference configuration.
    fn actuation_coordinates(&self, q: &DVector<f64>) -> Option<DVector<f64>> {
        let now = self.0.cable_lengths(q).ok()?;
        let rest = self.0.cable_lengths(&DVector::zeros(self.0.dof())).ok()?;
        Some(now - rest)
    }
}

impl Backbone for GvsActuation {
    fn backbone(&self, q: &DVector<f64>) -> Vec<[f64; 3]> {
        self.0.centerline(q)
    }
}

pub fn build(params: GvsParams) -> Result<(GvsModel, GvsActuation)> {
    let rod = Arc::new(GvsRod::new(params)?);
    Ok((ChainDynamics(GvsChain(rod.clone())), GvsActuation(rod)))
}
