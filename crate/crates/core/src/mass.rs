//! Reproducible mass fields.
//!
//! Every draw is keyed by `(seed, site)` through a ChaCha stream, so a mass at a
//! given site does not depend on the window it was sampled in or on the order
//! of evaluation. Growing the window keeps every previously drawn value.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Axis, LatticeWindow, ScalarField, Site};

fn default_p() -> f64 {
    0.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MassModel {
    Constant {
        value: f64,
    },
    /// `high` with probability `p`, else `low`.
    IidTwoPoint {
        low: f64,
        high: f64,
        #[serde(default = "default_p")]
        p: f64,
    },
    IidUniform {
        low: f64,
        high: f64,
    },
    /// Masses drawn i.i.d. along `random_axis` and constant along the other axis.
    LayeredIidTwoPoint {
        low: f64,
        high: f64,
        random_axis: Axis,
        #[serde(default = "default_p")]
        p: f64,
    },
    /// Period 2 in both axes: `values[(j1 + j2) mod 2]`.
    PeriodicBiaxial {
        values: [f64; 2],
    },
    /// Period 2 along `varying_axis`, constant along the other.
    PeriodicLayered {
        values: [f64; 2],
        varying_axis: Axis,
    },
}

impl MassModel {
    pub fn iid_two_point(low: f64, high: f64) -> Self {
        MassModel::IidTwoPoint { low, high, p: 0.5 }
    }

    pub fn layered_two_point(low: f64, high: f64, random_axis: Axis) -> Self {
        MassModel::LayeredIidTwoPoint { low, high, random_axis, p: 0.5 }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidModel(msg));
        let check_pair = |low: f64, high: f64| -> Result<()> {
            if !(low.is_finite() && high.is_finite()) {
                return bad(format!("non-finite bounds {low}, {high}"));
            }
            if low <= 0.0 {
                return bad(format!("lower mass bound {low} must be positive"));
            }
            if low > high {
                return bad(format!("low {low} exceeds high {high}"));
            }
            Ok(())
        };
        let check_p = |p: f64| -> Result<()> {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("probability {p} outside [0, 1]"));
            }
            Ok(())
        };
        match *self {
            MassModel::Constant { value } => check_pair(value, value),
            MassModel::IidTwoPoint { low, high, p } | MassModel::LayeredIidTwoPoint { low, high, p, .. } => {
                check_pair(low, high)?;
                check_p(p)
            }
            MassModel::IidUniform { low, high } => check_pair(low, high),
            MassModel::PeriodicBiaxial { values } | MassModel::PeriodicLayered { values, .. } => {
                let (lo, hi) = (values[0].min(values[1]), values[0].max(values[1]));
                check_pair(lo, hi)
            }
        }
    }

    /// `(a, b)` with every realized mass in `[a, b]`.
    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            MassModel::Constant { value } => (value, value),
            MassModel::IidTwoPoint { low, high, .. }
            | MassModel::LayeredIidTwoPoint { low, high, .. }
            | MassModel::IidUniform { low, high } => (low, high),
            MassModel::PeriodicBiaxial { values } | MassModel::PeriodicLayered { values, .. } => {
                (values[0].min(values[1]), values[0].max(values[1]))
            }
        }
    }

    /// Analytic mean mass. For periodic models this is the cell average.
    pub fn mean(&self) -> f64 {
        match *self {
            MassModel::Constant { value } => value,
            MassModel::IidTwoPoint { low, high, p } | MassModel::LayeredIidTwoPoint { low, high, p, .. } => {
                (1.0 - p) * low + p * high
            }
            MassModel::IidUniform { low, high } => 0.5 * (low + high),
            MassModel::PeriodicBiaxial { values } | MassModel::PeriodicLayered { values, .. } => {
                0.5 * (values[0] + values[1])
            }
        }
    }

    /// Analytic single-site variance.
    pub fn variance(&self) -> f64 {
        match *self {
            MassModel::Constant { .. } => 0.0,
            MassModel::IidTwoPoint { low, high, p } | MassModel::LayeredIidTwoPoint { low, high, p, .. } => {
                p * (1.0 - p) * (high - low).powi(2)
            }
            MassModel::IidUniform { low, high } => (high - low).powi(2) / 12.0,
            MassModel::PeriodicBiaxial { values } | MassModel::PeriodicLayered { values, .. } => {
                0.25 * (values[1] - values[0]).powi(2)
            }
        }
    }

    pub fn is_random(&self) -> bool {
        matches!(
            self,
            MassModel::IidTwoPoint { .. } | MassModel::IidUniform { .. } | MassModel::LayeredIidTwoPoint { .. }
        )
    }

    pub fn is_constant(&self) -> bool {
        let (a, b) = self.bounds();
        a == b
    }

    pub fn is_layered(&self) -> bool {
        matches!(self, MassModel::LayeredIidTwoPoint { .. } | MassModel::PeriodicLayered { .. })
    }

    /// Short human-readable label.
    pub fn label(&self) -> &'static str {
        match self {
            MassModel::Constant { .. } => "constant",
            MassModel::IidTwoPoint { .. } => "iid_two_point",
            MassModel::IidUniform { .. } => "iid_uniform",
            MassModel::LayeredIidTwoPoint { .. } => "layered_iid_two_point",
            MassModel::PeriodicBiaxial { .. } => "periodic_biaxial",
            MassModel::PeriodicLayered { .. } => "periodic_layered",
        }
    }

    /// Mass at a single site. Pure in `(self, seed, j)`.
    pub fn mass_at(&self, seed: u64, j: Site) -> f64 {
        match *self {
            MassModel::Constant { value } => value,
            MassModel::IidTwoPoint { low, high, p } => {
                if site_rng(seed, j).gen::<f64>() < p {
                    high
                } else {
                    low
                }
            }
            MassModel::IidUniform { low, high } => low + (high - low) * site_rng(seed, j).gen::<f64>(),
            MassModel::LayeredIidTwoPoint { low, high, random_axis, p } => {
                let mut key = [0, 0];
                key[random_axis.index()] = j[random_axis.index()];
                if site_rng(seed, key).gen::<f64>() < p {
                    high
                } else {
                    low
                }
            }
            MassModel::PeriodicBiaxial { values } => values[(j[0] + j[1]).rem_euclid(2) as usize],
            MassModel::PeriodicLayered { values, varying_axis } => {
                values[j[varying_axis.index()].rem_euclid(2) as usize]
            }
        }
    }
}

fn zigzag(v: i64) -> u64 {
    ((v << 1) ^ (v >> 63)) as u64
}

fn site_rng(seed: u64, j: Site) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((zigzag(j[0]) << 32) ^ zigzag(j[1]));
    rng.set_word_pos(0);
    rng
}

#[derive(Clone, Debug, PartialEq)]
pub struct MassField {
    pub masses: ScalarField,
    pub model: MassModel,
    pub seed: u64,
}

impl MassField {
    pub fn window(&self) -> &LatticeWindow {
        self.masses.window()
    }

    pub fn mean(&self) -> f64 {
        self.model.mean()
    }

    pub fn bounds(&self) -> (f64, f64) {
        self.model.bounds()
    }
}

pub fn sample_masses(model: &MassModel, window: LatticeWindow, seed: u64) -> Result<MassField> {
    model.validate()?;
    let values: Vec<f64> = (0..window.len())
        .into_par_iter()
        .map(|i| {
            let mut j = window.site(i);
            if window.dim() == 1 {
                j[1] = 0;
            }
            model.mass_at(seed, j)
        })
        .collect();
    Ok(MassField { masses: ScalarField::from_values(window, values)?, model: model.clone(), seed })
}

/// `z(j) = m(j) - m̄` with the analytic mean.
pub fn fluctuation_field(mf: &MassField) -> ScalarField {
    let mean = mf.mean();
    mf.masses.map(|m| m - mean)
}

/// `c = m̄^{-1/2}`
pub fn effective_speed(mf: &MassField) -> f64 {
    mf.mean().powf(-0.5)
}
