//! Small fixed-size rigid-body algebra, generic over a scalar so the same
//! kinematics code runs on `f64` and on forward-mode dual numbers.
//!
//! Twists and wrenches are ordered angular part first: `s = (ω, v)`.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

pub trait Real:
    Copy
    + Debug
    + PartialEq
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + Send
    + Sync
    + 'static
{
    fn from_f64(v: f64) -> Self;
    /// Primal value, used for branching on magnitudes.
    fn value(self) -> f64;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn sqrt(self) -> Self;

    fn zero() -> Self {
        Self::from_f64(0.0)
    }
    fn one() -> Self {
        Self::from_f64(1.0)
    }
    fn scale(self, k: f64) -> Self {
        self * Self::from_f64(k)
    }
}

impl Real for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn value(self) -> f64 {
        self
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
}

/// Forward-mode dual number `re + eps·ε` with `ε² = 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual<T> {
    pub re: T,
    pub eps: T,
}

impl<T: Real> Dual<T> {
    pub fn new(re: T, eps: T) -> Self {
        Self { re, eps }
    }
    pub fn constant(re: T) -> Self {
        Self { re, eps: T::zero() }
    }
}

impl<T: Real> Add for Dual<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Dual::new(self.re + o.re, self.eps + o.eps)
    }
}
impl<T: Real> Sub for Dual<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Dual::new(self.re - o.re, self.eps - o.eps)
    }
}
impl<T: Real> Mul for Dual<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Dual::new(self.re * o.re, self.re * o.eps + self.eps * o.re)
    }
}
impl<T: Real> Div for Dual<T> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let inv = T::one() / o.re;
        Dual::new(self.re * inv, (self.eps * o.re - self.re * o.eps) * inv * inv)
    }
}
impl<T: Real> Neg for Dual<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Dual::new(-self.re, -self.eps)
    }
}
impl<T: Real> AddAssign for Dual<T> {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}
impl<T: Real> SubAssign for Dual<T> {
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}
impl<T: Real> MulAssign for Dual<T> {
    fn mul_assign(&mut self, o: Self) {
        *self = *self * o;
    }
}

impl<T: Real> Real for Dual<T> {
    fn from_f64(v: f64) -> Self {
        Dual::constant(T::from_f64(v))
    }
    fn value(self) -> f64 {
        self.re.value()
    }
    fn sin(self) -> Self {
        Dual::new(self.re.sin(), self.eps * self.re.cos())
    }
    fn cos(self) -> Self {
        Dual::new(self.re.cos(), -(self.eps * self.re.sin()))
    }
    fn sqrt(self) -> Self {
        let r = self.re.sqrt();
        Dual::new(r, self.eps / (r + r))
    }
}

pub type Vec3<T> = [T; 3];
pub type Mat3<T> = [[T; 3]; 3];
pub type Vec6<T> = [T; 6];
pub type Mat6<T> = [[T; 6]; 6];

pub fn vconst<T: Real>(v: [f64; 3]) -> Vec3<T> {
    [T::from_f64(v[0]), T::from_f64(v[1]), T::from_f64(v[2])]
}

pub fn dot<T: Real>(a: &Vec3<T>, b: &Vec3<T>) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross<T: Real>(a: &Vec3<T>, b: &Vec3<T>) -> Vec3<T> {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn add3<T: Real>(a: &Vec3<T>, b: &Vec3<T>) -> Vec3<T> {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn sub3<T: Real>(a: &Vec3<T>, b: &Vec3<T>) -> Vec3<T> {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn scale3<T: Real>(a: &Vec3<T>, k: T) -> Vec3<T> {
    [a[0] * k, a[1] * k, a[2] * k]
}

pub fn norm3<T: Real>(a: &Vec3<T>) -> T {
    dot(a, a).sqrt()
}

pub fn skew<T: Real>(w: &Vec3<T>) -> Mat3<T> {
    let z = T::zero();
    [[z, -w[2], w[1]], [w[2], z, -w[0]], [-w[1], w[0], z]]
}

pub fn identity3<T: Real>() -> Mat3<T> {
    let (o, z) = (T::one(), T::zero());
    [[o, z, z], [z, o, z], [z, z, o]]
}

pub fn matmul3<T: Real>(a: &Mat3<T>, b: &Mat3<T>) -> Mat3<T> {
    let mut c = [[T::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    c
}

pub fn matvec3<T: Real>(a: &Mat3<T>, v: &Vec3<T>) -> Vec3<T> {
    [
        a[0][0] * v[0] + a[0][1] * v[1] + a[0][2] * v[2],
        a[1][0] * v[0] + a[1][1] * v[1] + a[1][2] * v[2],
        a[2][0] * v[0] + a[2][1] * v[1] + a[2][2] * v[2],
    ]
}

pub fn transpose3<T: Real>(a: &Mat3<T>) -> Mat3<T> {
    [
        [a[0][0], a[1][0], a[2][0]],
        [a[0][1], a[1][1], a[2][1]],
        [a[0][2], a[1][2], a[2][2]],
    ]
}

/// `Rᵀ v`
pub fn tmatvec3<T: Real>(a: &Mat3<T>, v: &Vec3<T>) -> Vec3<T> {
    [
        a[0][0] * v[0] + a[1][0] * v[1] + a[2][0] * v[2],
        a[0][1] * v[0] + a[1][1] * v[1] + a[2][1] * v[2],
        a[0][2] * v[0] + a[1][2] * v[1] + a[2][2] * v[2],
    ]
}

/// Rotation about the world z axis.
pub fn rot_z<T: Real>(angle: T) -> Mat3<T> {
    let (c, s) = (angle.cos(), angle.sin());
    let (o, z) = (T::one(), T::zero());
    [[c, -s, z], [s, c, z], [z, z, o]]
}

/// Rotation about the world y axis.
pub fn rot_y<T: Real>(angle: T) -> Mat3<T> {
    let (c, s) = (angle.cos(), angle.sin());
    let (o, z) = (T::one(), T::zero());
    [[c, z, s], [z, o, z], [-s, z, c]]
}

/// Rigid transform `(R, p)`.
#[derive(Clone, Copy, Debug)]
pub struct Pose<T> {
    pub rot: Mat3<T>,
    pub pos: Vec3<T>,
}

impl<T: Real> Pose<T> {
    pub fn identity() -> Self {
        Pose {
            rot: identity3(),
            pos: [T::zero(); 3],
        }
    }

    pub fn compose(&self, other: &Pose<T>) -> Pose<T> {
        Pose {
            rot: matmul3(&self.rot, &other.rot),
            pos: add3(&self.pos, &matvec3(&self.rot, &other.pos)),
        }
    }

    pub fn map<U>(&self, f: impl Fn(T) -> U) -> Pose<U> {
        Pose {
            rot: self.rot.map(|r| r.map(&f)),
            pos: self.pos.map(&f),
        }
    }

    pub fn values(&self) -> Pose<f64> {
        self.map(|x| x.value())
    }
}

/// Coefficients `sin θ/θ`, `(1 − cos θ)/θ²`, `(θ − sin θ)/θ³` as functions of `θ²`.
fn exp_coefficients<T: Real>(theta_sq: T) -> (T, T, T) {
    if theta_sq.value() < 4e-2 {
        let t2 = theta_sq;
        let t4 = t2 * t2;
        let t6 = t4 * t2;
        let t8 = t4 * t4;
        let a = T::one() - t2.scale(1.0 / 6.0) + t4.scale(1.0 / 120.0) - t6.scale(1.0 / 5040.0)
            + t8.scale(1.0 / 362_880.0);
        let b = T::from_f64(0.5) - t2.scale(1.0 / 24.0) + t4.scale(1.0 / 720.0)
            - t6.scale(1.0 / 40_320.0)
            + t8.scale(1.0 / 3_628_800.0);
        let c = T::from_f64(1.0 / 6.0) - t2.scale(1.0 / 120.0) + t4.scale(1.0 / 5040.0)
            - t6.scale(1.0 / 362_880.0)
            + t8.scale(1.0 / 39_916_800.0);
        (a, b, c)
    } else {
        let t = theta_sq.sqrt();
        let (s, c) = (t.sin(), t.cos());
        (s / t, (T::one() - c) / theta_sq, (t - s) / (theta_sq * t))
    }
}

pub fn so3_exp<T: Real>(w: &Vec3<T>) -> Mat3<T> {
    let (a, b, _) = exp_coefficients(dot(w, w));
    let k = skew(w);
    let k2 = matmul3(&k, &k);
    let mut r = identity3();
    for i in 0..3 {
        for j in 0..3 {
            r[i][j] += a * k[i][j] + b * k2[i][j];
        }
    }
    r
}

/// Exponential of the twist `s = (ω, v)`.
pub fn se3_exp<T: Real>(s: &Vec6<T>) -> Pose<T> {
    let w = [s[0], s[1], s[2]];
    let v = [s[3], s[4], s[5]];
    let (a, b, c) = exp_coefficients(dot(&w, &w));
    let k = skew(&w);
    let k2 = matmul3(&k, &k);
    let mut r = identity3();
    let mut vm = identity3();
    for i in 0..3 {
        for j in 0..3 {
            r[i][j] += a * k[i][j] + b * k2[i][j];
            vm[i][j] += b * k[i][j] + c * k2[i][j];
        }
    }
    Pose {
        rot: r,
        pos: matvec3(&vm, &v),
    }
}

pub fn mat6_zero<T: Real>() -> Mat6<T> {
    [[T::zero(); 6]; 6]
}

pub fn mat6_mul<T: Real>(a: &Mat6<T>, b: &Mat6<T>) -> Mat6<T> {
    let mut c = mat6_zero();
    for i in 0..6 {
        for k in 0..6 {
            let aik = a[i][k];
            for j in 0..6 {
                c[i][j] += aik * b[k][j];
            }
        }
    }
    c
}

/// Matrix of `ad_s`, the adjoint action of the twist `s` on twists.
pub fn ad_matrix<T: Real>(s: &Vec6<T>) -> Mat6<T> {
    let w = skew(&[s[0], s[1], s[2]]);
    let v = skew(&[s[3], s[4], s[5]]);
    let mut m = mat6_zero();
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = w[i][j];
            m[i + 3][j] = v[i][j];
            m[i + 3][j + 3] = w[i][j];
        }
    }
    m
}

/// `ad_a b` for twists.
pub fn ad_twist<T: Real>(a: &Vec6<T>, b: &Vec6<T>) -> Vec6<T> {
    let (wa, va) = ([a[0], a[1], a[2]], [a[3], a[4], a[5]]);
    let (wb, vb) = ([b[0], b[1], b[2]], [b[3], b[4], b[5]]);
    let w = cross(&wa, &wb);
    let v = add3(&cross(&wa, &vb), &cross(&va, &wb));
    [w[0], w[1], w[2], v[0], v[1], v[2]]
}

/// `ad_aᵀ f`, the coadjoint action on a wrench `f = (moment, force)`.
pub fn ad_transpose_wrench<T: Real>(a: &Vec6<T>, f: &Vec6<T>) -> Vec6<T> {
    let (wa, va) = ([a[0], a[1], a[2]], [a[3], a[4], a[5]]);
    let (m, n) = ([f[0], f[1], f[2]], [f[3], f[4], f[5]]);
    // ad_aᵀ = [[-ω̃, -ṽ], [0, -ω̃]]
    let top = add3(&cross(&m, &wa), &cross(&n, &va));
    let bot = cross(&n, &wa);
    [top[0], top[1], top[2], bot[0], bot[1], bot[2]]
}

/// Tangent operator of the exponential, `Σ_j (−ad_s)^j / (j+1)!`, which maps
/// `ṡ` to the body velocity `(exp(ŝ)⁻¹ d/dt exp(ŝ))^∨`.
pub fn se3_tangent<T: Real>(s: &Vec6<T>) -> Mat6<T> {
    let w = [s[0], s[1], s[2]];
    let theta_sq = dot(&w, &w);
    let (a1, a2, a3, a4) = if theta_sq.value() < 4e-2 {
        let t2 = theta_sq;
        let t4 = t2 * t2;
        let t6 = t4 * t2;
        let t8 = t4 * t4;
        (
            T::from_f64(0.5) - t4.scale(1.0 / 720.0) + t6.scale(1.0 / 20_160.0)
                - t8.scale(1.0 / 1_209_600.0),
            T::from_f64(1.0 / 6.0) - t4.scale(1.0 / 5040.0) + t6.scale(1.0 / 181_440.0)
                - t8.scale(1.0 / 13_305_600.0),
            T::from_f64(1.0 / 24.0) - t2.scale(1.0 / 360.0) + t4.scale(1.0 / 13_440.0)
                - t6.scale(1.0 / 907_200.0)
                + t8.scale(1.0 / 95_800_320.0),
            T::from_f64(1.0 / 120.0) - t2.scale(1.0 / 2520.0) + t4.scale(1.0 / 120_960.0)
                - t6.scale(1.0 / 9_979_200.0)
                + t8.scale(1.0 / 1_245_404_160.0),
        )
    } else {
        let t = theta_sq.sqrt();
        let (sn, c) = (t.sin(), t.cos());
        let t3 = theta_sq * t;
        let t4 = theta_sq * theta_sq;
        let t5 = t4 * t;
        let two = T::from_f64(2.0);
        (
            (T::from_f64(4.0) - c.scale(4.0) - t * sn) / (two * theta_sq),
            (t.scale(4.0) - sn.scale(5.0) + t * c) / (two * t3),
            (two - c.scale(2.0) - t * sn) / (two * t4),
            (t.scale(2.0) - sn.scale(3.0) + t * c) / (two * t5),
        )
    };
    let neg: Vec6<T> = s.map(|x| -x);
    let ad1 = ad_matrix(&neg);
    let ad2 = mat6_mul(&ad1, &ad1);
    let ad3 = mat6_mul(&ad2, &ad1);
    let ad4 = mat6_mul(&ad2, &ad2);
    let mut out = mat6_zero();
    for i in 0..6 {
        for j in 0..6 {
            out[i][j] = a1 * ad1[i][j] + a2 * ad2[i][j] + a3 * ad3[i][j] + a4 * ad4[i][j];
        }
        out[i][i] += T::one();
    }
    out
}

/// Apply `Ad_{g⁻¹}` to a twist expressed in the frame of `g`'s parent.
pub fn ad_inverse_twist<T: Real>(g: &Pose<T>, s: &Vec6<T>) -> Vec6<T> {
    let w = [s[0], s[1], s[2]];
    let v = [s[3], s[4], s[5]];
    let wn = tmatvec3(&g.rot, &w);
    let vn = tmatvec3(&g.rot, &sub3(&v, &cross(&g.pos, &w)));
    [wn[0], wn[1], wn[2], vn[0], vn[1], vn[2]]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series_tangent(s: &Vec6<f64>) -> Mat6<f64> {
        let neg = s.map(|x| -x);
        let ad = ad_matrix(&neg);
        let mut term = [[0.0; 6]; 6];
        for (i, row) in term.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        let mut acc = term;
        let mut fact = 1.0;
        for j in 1..40 {
            term = mat6_mul(&term, &ad);
            fact *= (j + 1) as f64;
            for r in 0..6 {
                for c in 0..6 {
                    acc[r][c] += term[r][c] / fact;
                }
            }
        }
        acc
    }

    #[test]
    fn tangent_closed_form_matches_series() {
        for (k, scale) in [1e-4, 0.05, 0.19, 0.21, 0.8, 2.5].iter().enumerate() {
            let s: Vec6<f64> = [0.3, -0.7, 0.5, 0.2, 0.9, -0.4].map(|x| x * scale * (1.0 + k as f64 * 0.1));
            let a = se3_tangent(&s);
            let b = series_tangent(&s);
            for r in 0..6 {
                for c in 0..6 {
                    assert!((a[r][c] - b[r][c]).abs() < 1e-13, "scale {scale}: {r},{c}");
                }
            }
        }
    }

    #[test]
    fn exp_is_orthonormal_and_matches_small_angle_branches() {
        for eps in [1e-3, 0.199, 0.2001, 1.3] {
            let s = [eps, -0.5 * eps, 0.25 * eps, 0.1, 0.0, 1.0];
            let g = se3_exp(&s);
            let rtr = matmul3(&transpose3(&g.rot), &g.rot);
            for i in 0..3 {
                for j in 0..3 {
                    let id = if i == j { 1.0 } else { 0.0 };
                    assert!((rtr[i][j] - id).abs() < 1e-14);
                }
            }
        }
        // continuity across the series/closed-form switch
        let lo = se3_exp(&[0.2 - 1e-9, 0.0, 0.0, 0.0, 0.3, 1.0]);
        let hi = se3_exp(&[0.2 + 1e-9, 0.0, 0.0, 0.0, 0.3, 1.0]);
        for i in 0..3 {
            assert!((lo.pos[i] - hi.pos[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn dual_derivatives_match_calculus() {
        let x = Dual::new(0.7_f64, 1.0);
        let y = (x.sin() * x.cos() + x.sqrt()) / (x * x + Dual::from_f64(1.0));
        let f = |t: f64| (t.sin() * t.cos() + t.sqrt()) / (t * t + 1.0);
        let h = 1e-6;
        let fd = (f(0.7 + h) - f(0.7 - h)) / (2.0 * h);
        assert!((y.eps - fd).abs() < 1e-9);
    }

    #[test]
    fn coadjoint_is_transpose_of_adjoint() {
        let a = [0.1, -0.2, 0.3, 0.4, 0.5, -0.6];
        let f = [1.0, 2.0, -1.0, 0.5, 0.25, 3.0];
        let m = ad_matrix(&a);
        let got = ad_transpose_wrench(&a, &f);
        for j in 0..6 {
            let want: f64 = (0..6).map(|i| m[i][j] * f[i]).sum();
            assert!((got[j] - want).abs() < 1e-15);
        }
    }
}
