use serde::{Deserialize, Serialize};

/// Tendon path in the rod cross-section, as an offset `d(X)` from the
/// centerline expressed in the local frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Routing {
    /// Constant offset at a fixed angle.
    Straight { angle: f64, offset: f64 },
    /// Fixed angle, offset varying linearly from `base_offset` at `X = 0`
    /// to `tip_offset` at `X = L`.
    Oblique {
        angle: f64,
        base_offset: f64,
        tip_offset: f64,
    },
    /// Constant offset wound around the centerline; `pitch` is the advance
    /// per radian of winding.
    Helical { phase: f64, offset: f64, pitch: f64 },
}

impl Routing {
    /// `(d(X), d′(X))`.
    pub fn offset(&self, x: f64, rod_length: f64) -> ([f64; 3], [f64; 3]) {
        match *self {
            Routing::Straight { angle, offset } => {
                let (s, c) = angle.sin_cos();
                ([offset * c, offset * s, 0.0], [0.0; 3])
            }
            Routing::Oblique {
                angle,
                base_offset,
                tip_offset,
            } => {
                let (s, c) = angle.sin_cos();
                let slope = (tip_offset - base_offset) / rod_length;
                let r = base_offset + slope * x;
                ([r * c, r * s, 0.0], [slope * c, slope * s, 0.0])
            }
            Routing::Helical { phase, offset, pitch } => {
                let psi = phase + x / pitch;
                let (s, c) = psi.sin_cos();
                let k = offset / pitch;
                ([offset * c, offset * s, 0.0], [-k * s, k * c, 0.0])
            }
        }
    }

    /// True when the tendon runs along the centerline over its whole length.
    pub fn is_centered(&self) -> bool {
        match *self {
            Routing::Straight { offset, .. } => offset == 0.0,
            Routing::Oblique {
                base_offset,
                tip_offset,
                ..
            } => base_offset == 0.0 && tip_offset == 0.0,
            Routing::Helical { offset, .. } => offset == 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tendon {
    pub routing: Routing,
    /// Arclength where the tendon is anchored; the rod tip when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end: Option<f64>,
}

impl Tendon {
    pub fn full(routing: Routing) -> Self {
        Tendon { routing, end: None }
    }

    pub fn ending_at(routing: Routing, end: f64) -> Self {
        Tendon {
            routing,
            end: Some(end),
        }
    }

    pub fn end_or(&self, rod_length: f64) -> f64 {
        self.end.unwrap_or(rod_length)
    }
}
