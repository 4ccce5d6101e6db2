use serde::{Deserialize, Serialize};

/// One column of the strain basis `Φ_ξ(X)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BasisColumn {
    /// Compliance-weighted actuation column `Σ⁻¹ Φ_a,i(X, q*)` of a tendon.
    TendonCompliance { tendon: usize },
    /// Shifted Legendre polynomial of `degree` on strain `component`
    /// (0–2 angular, 3–5 linear).
    Legendre { component: usize, degree: usize },
}

/// Legendre polynomials shifted to `[0, L]`.
pub fn shifted_legendre(degree: usize, x: f64, length: f64) -> f64 {
    let s = 2.0 * x / length - 1.0;
    let (mut p0, mut p1) = (1.0, s);
    match degree {
        0 => 1.0,
        1 => s,
        _ => {
            for k in 2..=degree {
                let k = k as f64;
                let p2 = ((2.0 * k - 1.0) * s * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            p1
        }
    }
}

pub fn bending_and_torsion_basis(degree_bend: usize, degree_twist: usize) -> Vec<BasisColumn> {
    let mut cols = Vec::new();
    for component in 0..2 {
        for degree in 0..=degree_bend {
            cols.push(BasisColumn::Legendre { component, degree });
        }
    }
    for degree in 0..=degree_twist {
        cols.push(BasisColumn::Legendre { component: 2, degree });
    }
    cols
}
