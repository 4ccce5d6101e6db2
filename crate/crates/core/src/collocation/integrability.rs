use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::ActuationModel;
use crate::error::{check_dim, Error, Result};
use crate::numeric::{fd_step, HaltonSampler};

pub const DEFAULT_TOLERANCE: f64 = 1e-4;
pub const DEFAULT_SAMPLES: usize = 512;
pub const DEFAULT_SEED: u64 = 0x5eed_2024;
const FD_BASE_STEP: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Integrable,
    NonIntegrable,
    Inconclusive,
}

impl Verdict {
    pub fn classify(residual: f64, tol: f64) -> Self {
        if residual <= tol {
            Verdict::Integrable
        } else if residual > 10.0 * tol {
            Verdict::NonIntegrable
        } else {
            Verdict::Inconclusive
        }
    }
}

/// Box of configurations sampled by the integrability test.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SamplingDomain {
    pub bounds: Vec<(f64, f64)>,
    pub samples: usize,
    pub seed: u64,
}

impl SamplingDomain {
    pub fn new(bounds: Vec<(f64, f64)>) -> Self {
        SamplingDomain {
            bounds,
            samples: DEFAULT_SAMPLES,
            seed: DEFAULT_SEED,
        }
    }

    pub fn with_samples(mut self, samples: usize) -> Self {
        self.samples = samples;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Box of half-width `radius·(1 + |q0_k|)` around `q0`.
    pub fn around(q0: &DVector<f64>, radius: f64) -> Self {
        Self::new(
            q0.iter()
                .map(|&x| {
                    let r = radius * (1.0 + x.abs());
                    (x - r, x + r)
                })
                .collect(),
        )
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ColumnReport {
    pub column: usize,
    pub verdict: Verdict,
    pub worst_residual: f64,
    /// Configuration where the worst residual occurred.
    pub worst_at: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IntegrabilityReport {
    pub columns: Vec<ColumnReport>,
    pub samples_used: usize,
    pub samples_skipped: usize,
    pub tolerance: f64,
    pub seed: u64,
}

impl IntegrabilityReport {
    pub fn verdict(&self) -> Verdict {
        let vs = self.columns.iter().map(|c| c.verdict);
        if vs.clone().any(|v| v == Verdict::NonIntegrable) {
            Verdict::NonIntegrable
        } else if vs.clone().any(|v| v == Verdict::Inconclusive) {
            Verdict::Inconclusive
        } else {
            Verdict::Integrable
        }
    }

    pub fn is_integrable(&self) -> bool {
        self.verdict() == Verdict::Integrable
    }

    pub fn summary(&self) -> String {
        let cols: Vec<String> = self
            .columns
            .iter()
            .map(|c| format!("column {}: {:?} ({:.3e})", c.column + 1, c.verdict, c.worst_residual))
            .collect();
        format!("{} [{} samples, tol {:.1e}]", cols.join(", "), self.samples_used, self.tolerance)
    }
}

/// `∂A/∂q_k` for every k by central differences.
pub(crate) fn matrix_partials(act: &dyn ActuationModel, q: &DVector<f64>) -> Vec<DMatrix<f64>> {
    (0..q.len())
        .map(|k| {
            let h = fd_step(FD_BASE_STEP, q[k]);
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[k] += h;
            qm[k] -= h;
            (act.matrix(&qp) - act.matrix(&qm)) / (2.0 * h)
        })
        .collect()
}

/// Per-column mixed-partial asymmetry `max_{j,k} |∂A_ji/∂q_k − ∂A_ki/∂q_j|` at `q`.
pub fn column_asymmetry(act: &dyn ActuationModel, q: &DVector<f64>) -> Vec<f64> {
    let d = matrix_partials(act, q);
    let n = q.len();
    (0..act.inputs())
        .map(|i| {
            let mut worst = 0.0_f64;
            for j in 0..n {
                for k in (j + 1)..n {
                    worst = worst.max((d[k][(j, i)] - d[j][(k, i)]).abs());
                }
            }
            worst
        })
        .collect()
}

/// Test each column of `A(q)ᵀ` for being a gradient field on `domain`.
pub fn check_integrability(
    act: &dyn ActuationModel,
    domain: &SamplingDomain,
    tol: f64,
) -> Result<IntegrabilityReport> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    check_dim("sampling box", act.dof(), domain.bounds.len())?;
    if domain.samples == 0 {
        return Err(Error::EmptyDomain("zero samples requested".into()));
    }
    let mut sampler = HaltonSampler::new(domain.bounds.clone(), domain.seed)?;
    let m = act.inputs();
    let mut worst = vec![0.0_f64; m];
    let mut worst_at = vec![Vec::new(); m];
    let (mut used, mut skipped) = (0, 0);
    for _ in 0..domain.samples {
        let q = sampler.next_point();
        if act.is_singular(&q) {
            skipped += 1;
            continue;
        }
        used += 1;
        for (i, r) in column_asymmetry(act, &q).into_iter().enumerate() {
            if r > worst[i] || worst_at[i].is_empty() {
                worst[i] = worst[i].max(r);
                worst_at[i] = q.iter().copied().collect();
            }
        }
    }
    if used == 0 {
        return Err(Error::EmptyDomain("every sample hit a singular configuration".into()));
    }
    let columns = (0..m)
        .map(|i| ColumnReport {
            column: i,
            verdict: Verdict::classify(worst[i], tol),
            worst_residual: worst[i],
            worst_at: std::mem::take(&mut worst_at[i]),
        })
        .collect();
    Ok(IntegrabilityReport {
        columns,
        samples_used: used,
        samples_skipped: skipped,
        tolerance: tol,
        seed: domain.seed,
    })
}
