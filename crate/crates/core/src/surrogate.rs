//! Scalar relaxations of the indicator `I(z > 0)`.
//!
//! | kind             | value                                           |
//! |------------------|-------------------------------------------------|
//! | `indicator`      | `I(z > 0)`                                      |
//! | `hinge`          | `(1 + z)+`                                      |
//! | `slide`          | `(z/τ) I(0 < z <= τ) + I(z > τ)`                |
//! | `opposite_slide` | `(1 + z/τ) I(-τ < z <= 0) + I(z > 0)`           |
//! | `psi`            | same function as `opposite_slide`               |
//! | `linear`         | `z`                                             |
//!
//! The opposite SLIDE is the SLIDE shifted left by `τ`, so that
//! `slide <= indicator <= opposite_slide` holds pointwise. Subgradients are
//! zero at every kink.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurrogateKind {
    Indicator,
    Hinge,
    Slide,
    OppositeSlide,
    Psi,
    Linear,
}

impl SurrogateKind {
    pub const ALL: [SurrogateKind; 6] = [
        SurrogateKind::Indicator,
        SurrogateKind::Hinge,
        SurrogateKind::Slide,
        SurrogateKind::OppositeSlide,
        SurrogateKind::Psi,
        SurrogateKind::Linear,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SurrogateKind::Indicator => "indicator",
            SurrogateKind::Hinge => "hinge",
            SurrogateKind::Slide => "slide",
            SurrogateKind::OppositeSlide => "opposite_slide",
            SurrogateKind::Psi => "psi",
            SurrogateKind::Linear => "linear",
        }
    }

    pub fn uses_tau(self) -> bool {
        matches!(
            self,
            SurrogateKind::Slide | SurrogateKind::OppositeSlide | SurrogateKind::Psi
        )
    }

    /// Whether values stay in `[0, 1]`.
    pub fn is_bounded(self) -> bool {
        !matches!(self, SurrogateKind::Hinge | SurrogateKind::Linear)
    }
}

impl fmt::Display for SurrogateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SurrogateKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SurrogateKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownKind {
                what: "surrogate",
                name: s.to_string(),
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateSpec {
    pub kind: SurrogateKind,
    #[serde(default = "default_tau")]
    pub tau: f64,
}

fn default_tau() -> f64 {
    0.1
}

impl SurrogateSpec {
    pub fn new(kind: SurrogateKind, tau: f64) -> Result<Self> {
        let spec = Self { kind, tau };
        spec.validate()?;
        Ok(spec)
    }

    pub fn indicator() -> Self {
        Self {
            kind: SurrogateKind::Indicator,
            tau: default_tau(),
        }
    }

    pub fn hinge() -> Self {
        Self {
            kind: SurrogateKind::Hinge,
            tau: default_tau(),
        }
    }

    pub fn linear() -> Self {
        Self {
            kind: SurrogateKind::Linear,
            tau: default_tau(),
        }
    }

    pub fn slide(tau: f64) -> Result<Self> {
        Self::new(SurrogateKind::Slide, tau)
    }

    pub fn opposite_slide(tau: f64) -> Result<Self> {
        Self::new(SurrogateKind::OppositeSlide, tau)
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind.uses_tau() && !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidSurrogate(format!(
                "{} requires a finite tau > 0, got {}",
                self.kind, self.tau
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn value(&self, z: f64) -> f64 {
        let tau = self.tau;
        match self.kind {
            SurrogateKind::Indicator => indicator(z),
            SurrogateKind::Hinge => (1.0 + z).max(0.0),
            SurrogateKind::Linear => z,
            SurrogateKind::Slide => {
                if z <= 0.0 {
                    0.0
                } else if z <= tau {
                    z / tau
                } else {
                    1.0
                }
            }
            SurrogateKind::OppositeSlide | SurrogateKind::Psi => {
                if z <= -tau {
                    0.0
                } else if z <= 0.0 {
                    1.0 + z / tau
                } else {
                    1.0
                }
            }
        }
    }

    /// Subgradient, zero at kinks. The indicator's is zero everywhere.
    #[inline]
    pub fn grad(&self, z: f64) -> f64 {
        let tau = self.tau;
        match self.kind {
            SurrogateKind::Indicator => 0.0,
            SurrogateKind::Hinge => {
                if z > -1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            SurrogateKind::Linear => 1.0,
            SurrogateKind::Slide => {
                if z > 0.0 && z < tau {
                    1.0 / tau
                } else {
                    0.0
                }
            }
            SurrogateKind::OppositeSlide | SurrogateKind::Psi => {
                if z > -tau && z < 0.0 {
                    1.0 / tau
                } else {
                    0.0
                }
            }
        }
    }

    /// Mirror partner of a SLIDE-type spec: slide <-> opposite slide.
    pub fn opposite(&self) -> Result<Self> {
        let kind = match self.kind {
            SurrogateKind::Slide => SurrogateKind::OppositeSlide,
            SurrogateKind::OppositeSlide | SurrogateKind::Psi => SurrogateKind::Slide,
            other => {
                return Err(Error::InvalidSurrogate(format!(
                    "{other} has no opposite surrogate"
                )))
            }
        };
        Self::new(kind, self.tau)
    }
}

#[inline]
pub fn indicator(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Convex part `(z)+ / τ` of the SLIDE difference-of-convex split.
#[inline]
pub fn slide_convex(z: f64, tau: f64) -> f64 {
    z.max(0.0) / tau
}

#[inline]
pub fn slide_convex_grad(z: f64, tau: f64) -> f64 {
    if z > 0.0 {
        1.0 / tau
    } else {
        0.0
    }
}

/// Concave part `-(z - τ)+ / τ`; `slide = slide_convex + slide_concave`.
#[inline]
pub fn slide_concave(z: f64, tau: f64) -> f64 {
    -(z - tau).max(0.0) / tau
}

#[inline]
pub fn slide_concave_grad(z: f64, tau: f64) -> f64 {
    if z > tau {
        -1.0 / tau
    } else {
        0.0
    }
}
