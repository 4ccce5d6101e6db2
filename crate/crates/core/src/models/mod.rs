//! Built-in plants and a registry that builds them by name.

pub mod chain;
pub mod finger;
pub mod fixtures;
pub mod gvs;
pub mod pcc;
pub mod satellite;
pub mod spring2r;

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::de::DeserializeOwned;
use serde_json::Value;

use crate::dynamics::Plant;
use crate::error::{Error, Result};

pub use finger::{FingerActuation, FingerModel, FingerParams};
pub use fixtures::{ConstantActuation, LinearMechanics, VolumeFn, VolumetricActuation};
pub use gvs::{GvsActuation, GvsModel, GvsParams, GvsRod};
pub use pcc::{FirstSegmentTendons, Pcc2Actuation, Pcc2Model, Pcc2Params};
pub use satellite::{SatelliteActuation, SatelliteModel, SatelliteParams};
pub use spring2r::{Spring2RActuation, Spring2RModel, Spring2RParams};

pub const MODEL_NAMES: [&str; 8] = [
    "satellite",
    "spring2r",
    "finger",
    "pcc2",
    "gvs",
    "gvs-reduced",
    "volumetric",
    "constant",
];

/// Deserialize a parameter section, falling back to defaults when absent.
pub fn load_params<T: DeserializeOwned + Default>(section: Option<&Value>) -> Result<T> {
    match section {
        None | Some(Value::Null) => Ok(T::default()),
        Some(v) => serde_json::from_value(v.clone()).map_err(|e| Error::InvalidConfig(e.to_string())),
    }
}

fn no_params(name: &str, section: Option<&Value>) -> Result<()> {
    match section {
        None | Some(Value::Null) => Ok(()),
        Some(Value::Object(m)) if m.is_empty() => Ok(()),
        Some(_) => Err(Error::InvalidConfig(format!("model `{name}` takes no parameters"))),
    }
}

/// Apply the fields present in `section` on top of `base`.
fn overlay<T: serde::Serialize + DeserializeOwned>(base: T, section: Option<&Value>) -> Result<T> {
    let Some(Value::Object(fields)) = section else {
        return match section {
            None | Some(Value::Null) => Ok(base),
            Some(_) => Err(Error::InvalidConfig("model parameters must be an object".into())),
        };
    };
    let mut v = serde_json::to_value(base)?;
    if let Value::Object(m) = &mut v {
        for (k, x) in fields {
            m.insert(k.clone(), x.clone());
        }
    }
    serde_json::from_value(v).map_err(|e| Error::InvalidConfig(e.to_string()))
}

fn cube(n: usize, half: f64) -> Vec<(f64, f64)> {
    vec![(-half, half); n]
}

/// Build a plant by name. `section` holds the model's own parameters.
pub fn build_plant(name: &str, section: Option<&Value>) -> Result<Plant> {
    let plant = match name {
        "satellite" => {
            let p: SatelliteParams = load_params(section)?;
            Plant {
                name: name.into(),
                mechanics: Arc::new(SatelliteModel::new(p)),
                actuation: Arc::new(SatelliteActuation),
                backbone: None,
                domain: vec![(0.5, 2.0), (-PI, PI)],
                home: DVector::from_vec(vec![1.0, 0.0]),
                chart_selection: None,
            }
        }
        "spring2r" => {
            let p: Spring2RParams = load_params(section)?;
            let act = Arc::new(Spring2RActuation { l1: p.l1, l2: p.l2 });
            Plant {
                name: name.into(),
                mechanics: Arc::new(Spring2RModel::new(p)),
                actuation: act.clone(),
                backbone: Some(act),
                domain: vec![(0.3, 1.3), (-1.0, 0.2)],
                home: DVector::from_vec(vec![0.8, -0.4]),
                chart_selection: None,
            }
        }
        "finger" => {
            let p: FingerParams = load_params(section)?;
            let act = Arc::new(FingerActuation::new(&p));
            Plant {
                name: name.into(),
                mechanics: Arc::new(FingerModel::new(p)),
                actuation: act.clone(),
                backbone: Some(act),
                domain: vec![(-0.5, 1.5)],
                home: DVector::from_element(1, 0.0),
                chart_selection: None,
            }
        }
        "pcc2" => {
            let p: Pcc2Params = load_params(section)?;
            let act = Arc::new(Pcc2Actuation {
                d: p.d,
                length: p.length,
            });
            Plant {
                name: name.into(),
                mechanics: Arc::new(Pcc2Model::new(p)),
                actuation: act.clone(),
                backbone: Some(act),
                domain: vec![(0.5, 8.0), (-PI, PI), (-0.01, 0.01), (0.5, 8.0), (-PI, PI), (-0.01, 0.01)],
                home: DVector::from_vec(vec![0.5, 0.0, 0.0, 0.5, 0.0, 0.0]),
                chart_selection: Some(vec![0, 1, 2]),
            }
        }
        "gvs" | "gvs-reduced" => {
            let preset = if name == "gvs" { GvsParams::full() } else { GvsParams::reduced() };
            let p = overlay(preset, section)?;
            let domain = p
                .basis
                .iter()
                .map(|c| match c {
                    gvs::BasisColumn::TendonCompliance { .. } => (-20.0, 20.0),
                    gvs::BasisColumn::Legendre { .. } => (-1.0, 1.0),
                })
                .collect();
            let (mech, act) = gvs::build(p)?;
            let n = act.0.dof();
            let act = Arc::new(act);
            Plant {
                name: name.into(),
                mechanics: Arc::new(mech),
                actuation: act.clone(),
                backbone: Some(act),
                domain,
                home: DVector::zeros(n),
                chart_selection: None,
            }
        }
        "volumetric" => {
            no_params(name, section)?;
            let mech = LinearMechanics::new(vec![1.0, 0.8, 0.5], vec![4.0, 5.0, 6.0], vec![0.2, 0.2, 0.2])?;
            let volumes: Vec<VolumeFn> = vec![
                Arc::new(|q: &DVector<f64>| q[0] + 0.5 * q[0] * q[1] + 0.2 * q[2] * q[2]),
                Arc::new(|q: &DVector<f64>| q[1] + 0.3 * q[2].sin() + 0.1 * q[0] * q[0]),
            ];
            Plant {
                name: name.into(),
                mechanics: Arc::new(mech),
                actuation: Arc::new(VolumetricActuation::new(3, volumes, vec![0.0, 0.0])?),
                backbone: None,
                domain: cube(3, 1.0),
                home: DVector::zeros(3),
                chart_selection: None,
            }
        }
        "constant" => {
            no_params(name, section)?;
            let mech = LinearMechanics::new(vec![1.0; 3], vec![2.0, 3.0, 4.0], vec![0.3; 3])?;
            let a = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.0, 0.0, 1.0, 0.3, 0.1, 0.0, 1.0]);
            Plant {
                name: name.into(),
                mechanics: Arc::new(mech),
                actuation: Arc::new(ConstantActuation { a }),
                backbone: None,
                domain: cube(3, 1.0),
                home: DVector::zeros(3),
                chart_selection: None,
            }
        }
        other => return Err(Error::UnknownModel(other.into())),
    };
    Ok(plant)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_name_builds_with_consistent_sizes() {
        for name in MODEL_NAMES {
            let p = build_plant(name, None).unwrap();
            assert_eq!(p.actuation.dof(), p.dof(), "{name}");
            assert_eq!(p.domain.len(), p.dof(), "{name}");
            assert_eq!(p.home.len(), p.dof(), "{name}");
        }
    }

    #[test]
    fn unknown_model_and_bad_params() {
        assert!(matches!(build_plant("nope", None), Err(Error::UnknownModel(_))));
        let bad = serde_json::json!({"not_a_field": 1.0});
        assert!(matches!(build_plant("finger", Some(&bad)), Err(Error::InvalidConfig(_))));
    }
}
