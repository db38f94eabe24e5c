//! Fixed-step fourth-order Runge-Kutta advection.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fields::VelocityField;
use crate::geometry::{Domain, Vec2};

#[derive(Debug, Error, PartialEq)]
pub enum FlowError {
    #[error("invalid flow spec: tau={tau}, substeps={substeps}")]
    InvalidSpec { tau: f64, substeps: usize },
    #[error("flow interval [{start}, {end}] leaves the field's time range [{first}, {last}]")]
    OutsideTimeRange {
        start: f64,
        end: f64,
        first: f64,
        last: f64,
    },
    #[error("non-finite state while advecting from {start:?} at t={t}")]
    NonFinite { start: Vec2, t: f64 },
}

/// Duration of one analysis step and the number of RK4 substeps covering it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowSpec {
    pub tau: f64,
    pub substeps: usize,
}

impl FlowSpec {
    pub fn new(tau: f64, substeps: usize) -> Result<Self, FlowError> {
        Self { tau, substeps }.validated()
    }

    pub fn validated(self) -> Result<Self, FlowError> {
        if self.tau > 0.0 && self.tau.is_finite() && self.substeps >= 1 {
            Ok(self)
        } else {
            Err(FlowError::InvalidSpec {
                tau: self.tau,
                substeps: self.substeps,
            })
        }
    }

    /// Twenty substeps per unit time step, used for the double well.
    pub fn double_well() -> Self {
        Self {
            tau: 1.0,
            substeps: 20,
        }
    }

    pub fn step(&self) -> f64 {
        self.tau / self.substeps as f64
    }
}

/// Checks that `[t0, t0 + tau]` lies inside the field's time range.
pub fn check_interval<F: VelocityField + ?Sized>(
    field: &F,
    t0: f64,
    spec: &FlowSpec,
) -> Result<(), FlowError> {
    if let Some((first, last)) = field.time_range() {
        let end = t0 + spec.tau;
        let slack = 1e-9 * (1.0 + first.abs().max(last.abs()));
        if t0 < first - slack || end > last + slack {
            return Err(FlowError::OutsideTimeRange {
                start: t0,
                end,
                first,
                last,
            });
        }
    }
    Ok(())
}

/// Advects `point` from `t0` over one step of duration `spec.tau`.
///
/// Periodic axes are wrapped into the domain; on non-periodic axes the raw
/// point is returned, so an exterior result means the trajectory escaped.
pub fn rk4_flow<F: VelocityField + ?Sized>(
    field: &F,
    domain: &Domain,
    point: Vec2,
    t0: f64,
    spec: &FlowSpec,
) -> Result<Vec2, FlowError> {
    spec.validated()?;
    check_interval(field, t0, spec)?;
    integrate(field, domain, point, t0, spec)
}

/// Advects a batch of points; the caller has already validated the interval.
pub(crate) fn integrate<F: VelocityField + ?Sized>(
    field: &F,
    domain: &Domain,
    point: Vec2,
    t0: f64,
    spec: &FlowSpec,
) -> Result<Vec2, FlowError> {
    let h = spec.step();
    let mut p = point;
    for k in 0..spec.substeps {
        let t = t0 + k as f64 * h;
        let k1 = field.velocity(p, t);
        let k2 = field.velocity(p + (0.5 * h) * k1, t + 0.5 * h);
        let k3 = field.velocity(p + (0.5 * h) * k2, t + 0.5 * h);
        let k4 = field.velocity(p + h * k3, t + h);
        p = p + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if !p.is_finite() {
            return Err(FlowError::NonFinite { start: point, t });
        }
    }
    Ok(domain.wrap(p))
}
