//! Named observables selectable from configuration.

use std::f64::consts::PI;

use lorenzlab_core::ergodic::{Observable, Regularity};
use lorenzlab_core::model::ModelParams;
use lorenzlab_core::ode::State3;

use crate::error::{LabError, LabResult};

pub type MapFn = Box<dyn Fn(f64) -> f64 + Send + Sync>;
pub type FlowFn = Box<dyn Fn(&State3) -> f64 + Send + Sync>;

pub const MAP_OBSERVABLES: &[&str] = &["x", "x_squared", "abs_x", "sign", "cos2pix", "roof"];
pub const FLOW_OBSERVABLES: &[&str] = &["x", "y", "z", "x_over_20", "x_squared"];

/// Observables on the interval; `roof` needs the model.
pub fn map_observable(name: &str, model: Option<&ModelParams>) -> LabResult<Observable<MapFn>> {
    let (reg, f): (Regularity, MapFn) = match name {
        "x" => (Regularity::Lipschitz, Box::new(|x| x)),
        "x_squared" => (Regularity::Lipschitz, Box::new(|x| x * x)),
        "abs_x" => (Regularity::Lipschitz, Box::new(|x: f64| x.abs())),
        "sign" => (Regularity::BoundedVariation, Box::new(|x: f64| if x < 0.0 { -1.0 } else { 1.0 })),
        "cos2pix" => (Regularity::Lipschitz, Box::new(|x: f64| (2.0 * PI * x).cos())),
        "roof" => {
            let m = *model.ok_or_else(|| LabError::Config("observable roof needs the model".into()))?;
            (Regularity::Continuous, Box::new(move |x| m.r(x)))
        }
        other => {
            return Err(LabError::Config(format!(
                "unknown map observable {other:?}; known: {}",
                MAP_OBSERVABLES.join(", ")
            )))
        }
    };
    Ok(Observable::new(name, reg, f))
}

pub fn flow_observable(name: &str) -> LabResult<Observable<FlowFn>> {
    let f: FlowFn = match name {
        "x" => Box::new(|s: &State3| s.x),
        "y" => Box::new(|s: &State3| s.y),
        "z" => Box::new(|s: &State3| s.z),
        "x_over_20" => Box::new(|s: &State3| s.x / 20.0),
        "x_squared" => Box::new(|s: &State3| s.x * s.x),
        other => {
            return Err(LabError::Config(format!(
                "unknown flow observable {other:?}; known: {}",
                FLOW_OBSERVABLES.join(", ")
            )))
        }
    };
    Ok(Observable::new(name, Regularity::Lipschitz, f))
}
