//! Threshold-type memristor model.
//!
//! `i = v / R` and `dR/dt = f_th(v) * [u(v) u(R_OFF - R) + u(-v) u(R - R_ON)]`
//! with `f_th(v) = beta v + (alpha - beta)/2 (|v + V_th| - |v - V_th|)`.
//! Positive drive pushes the device toward `R_OFF`, negative toward `R_ON`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DeviceError {
    #[error("invalid device parameters: {0}")]
    InvalidParams(String),
    #[error("time step must be positive, got {0}")]
    TimeStep(f64),
    #[error("device did not reach its rail within {0} s")]
    Timeout(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeviceParams {
    /// Low-resistance state, ohms.
    pub r_on: f64,
    /// High-resistance state, ohms.
    pub r_off: f64,
    /// Switching threshold, volts.
    pub v_th: f64,
    /// Sub-threshold rate, ohms/(V*s).
    pub alpha: f64,
    /// Above-threshold rate, ohms/(V*s).
    pub beta: f64,
}

impl Default for DeviceParams {
    fn default() -> Self {
        Self {
            r_on: 1e4,
            r_off: 1e6,
            v_th: 1.5,
            alpha: 0.0,
            beta: 1e7,
        }
    }
}

impl DeviceParams {
    pub fn validate(&self) -> Result<(), DeviceError> {
        let ok = self.r_on > 0.0
            && self.r_on < self.r_off
            && self.v_th > 0.0
            && self.beta > 0.0
            && self.alpha >= 0.0
            && [self.r_on, self.r_off, self.v_th, self.alpha, self.beta]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(DeviceError::InvalidParams(format!(
                "need 0 < R_ON < R_OFF, V_th > 0, beta > 0, alpha >= 0; got {self:?}"
            )))
        }
    }

    pub fn g_on(&self) -> f64 {
        1.0 / self.r_on
    }

    pub fn g_off(&self) -> f64 {
        1.0 / self.r_off
    }
}

/// Rate factor `f_th(v)` in ohms per second.
///
/// Evaluated piecewise (`alpha v` inside the threshold, `beta (v - V_th) +
/// alpha V_th` above, mirrored below) so sub-threshold drive is exactly zero
/// at `alpha = 0` instead of leaving `beta v - beta v` roundoff.
pub fn f_th(v: f64, params: &DeviceParams) -> f64 {
    let (a, b, th) = (params.alpha, params.beta, params.v_th);
    if v.abs() <= th {
        a * v
    } else {
        let sign = v.signum();
        b * (v - sign * th) + a * sign * th
    }
}

fn unit_step(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemristorDevice {
    pub params: DeviceParams,
    resistance: f64,
}

impl MemristorDevice {
    pub fn new(params: DeviceParams, resistance: f64) -> Result<Self, DeviceError> {
        params.validate()?;
        if !(params.r_on..=params.r_off).contains(&resistance) {
            return Err(DeviceError::InvalidParams(format!(
                "initial resistance {resistance} outside [{}, {}]",
                params.r_on, params.r_off
            )));
        }
        Ok(Self { params, resistance })
    }

    /// Device in the low-resistance state.
    pub fn at_on(params: DeviceParams) -> Result<Self, DeviceError> {
        Self::new(params, params.r_on)
    }

    pub fn at_off(params: DeviceParams) -> Result<Self, DeviceError> {
        Self::new(params, params.r_off)
    }

    pub fn resistance(&self) -> f64 {
        self.resistance
    }

    pub fn current(&self, v: f64) -> f64 {
        v / self.resistance
    }

    /// `dR/dt` at the current state, including the boundary gating.
    pub fn rate(&self, v: f64) -> f64 {
        let p = &self.params;
        let gate = unit_step(v) * unit_step(p.r_off - self.resistance)
            + unit_step(-v) * unit_step(self.resistance - p.r_on);
        f_th(v, p) * gate
    }

    /// One explicit Euler step, clamped to `[R_ON, R_OFF]`.
    pub fn step(&self, v: f64, dt: f64) -> Result<Self, DeviceError> {
        if !(dt > 0.0) {
            return Err(DeviceError::TimeStep(dt));
        }
        let r = (self.resistance + self.rate(v) * dt).clamp(self.params.r_on, self.params.r_off);
        Ok(Self {
            params: self.params,
            resistance: r,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ProgrammingOutcome {
    Switched {
        device: MemristorDevice,
        /// Seconds spent until the device reached its rail.
        switch_time: f64,
        /// Joules dissipated over the switching window.
        energy: f64,
    },
    /// Drive too weak to move the state (or already at the rail it drives toward).
    NoSwitch { device: MemristorDevice },
}

impl ProgrammingOutcome {
    /// Switching energy over switching time, watts. Zero when nothing switched.
    pub fn mean_power(&self) -> f64 {
        match *self {
            ProgrammingOutcome::Switched {
                switch_time,
                energy,
                ..
            } if switch_time > 0.0 => energy / switch_time,
            _ => 0.0,
        }
    }

    pub fn switch_time(&self) -> Option<f64> {
        match *self {
            ProgrammingOutcome::Switched { switch_time, .. } => Some(switch_time),
            ProgrammingOutcome::NoSwitch { .. } => None,
        }
    }

    pub fn energy(&self) -> f64 {
        match *self {
            ProgrammingOutcome::Switched { energy, .. } => energy,
            ProgrammingOutcome::NoSwitch { .. } => 0.0,
        }
    }

    pub fn device(&self) -> &MemristorDevice {
        match self {
            ProgrammingOutcome::Switched { device, .. } | ProgrammingOutcome::NoSwitch { device } => {
                device
            }
        }
    }

    /// Average power when the programmed device is additionally held at
    /// `hold_v` for `hold_time` seconds after switching.
    pub fn mean_power_with_hold(&self, hold_v: f64, hold_time: f64) -> f64 {
        let hold_energy = hold_v * hold_v / self.device().resistance() * hold_time;
        let window = self.switch_time().unwrap_or(0.0) + hold_time;
        if window > 0.0 {
            (self.energy() + hold_energy) / window
        } else {
            0.0
        }
    }
}

/// Exact response to a constant drive `v` until the device hits the rail it
/// is driven toward. Under constant drive `dR/dt` is constant, so
/// `t = |dR| / |f_th(v)|` and `E = v^2 / |f_th(v)| * |ln(R_end / R_start)|`.
pub fn program_constant(device: &MemristorDevice, v: f64) -> ProgrammingOutcome {
    let p = device.params;
    let rate = device.rate(v);
    if rate == 0.0 {
        return ProgrammingOutcome::NoSwitch { device: *device };
    }
    let target = if rate > 0.0 { p.r_off } else { p.r_on };
    let r0 = device.resistance();
    let switch_time = (target - r0).abs() / rate.abs();
    let energy = v * v / rate.abs() * (target / r0).ln().abs();
    ProgrammingOutcome::Switched {
        device: MemristorDevice {
            params: p,
            resistance: target,
        },
        switch_time,
        energy,
    }
}

/// Euler integration of the same drive. Energy uses the trapezoid rule on
/// `v^2 / R` across each step; the final step is shortened so the device lands
/// on its rail. Gives up after `max_time` seconds.
pub fn program_euler(
    device: &MemristorDevice,
    v: f64,
    dt: f64,
    max_time: f64,
) -> Result<ProgrammingOutcome, DeviceError> {
    if !(dt > 0.0) {
        return Err(DeviceError::TimeStep(dt));
    }
    let p = device.params;
    let mut dev = *device;
    let mut t = 0.0;
    let mut energy = 0.0;
    if dev.rate(v) == 0.0 {
        return Ok(ProgrammingOutcome::NoSwitch { device: dev });
    }
    while t < max_time {
        let rate = dev.rate(v);
        if rate == 0.0 {
            return Ok(ProgrammingOutcome::Switched {
                device: dev,
                switch_time: t,
                energy,
            });
        }
        let target = if rate > 0.0 { p.r_off } else { p.r_on };
        let remaining = (target - dev.resistance()).abs() / rate.abs();
        let h = dt.min(remaining);
        let next = dev.step(v, h)?;
        let next = if h == remaining {
            MemristorDevice {
                params: p,
                resistance: target,
            }
        } else {
            next
        };
        energy += 0.5 * h * (v * v / dev.resistance() + v * v / next.resistance());
        t += h;
        dev = next;
    }
    Err(DeviceError::Timeout(max_time))
}

/// Resistance trajectory sampled every `dt` seconds for `duration` seconds.
pub fn trajectory(
    device: &MemristorDevice,
    v: f64,
    dt: f64,
    duration: f64,
) -> Result<Vec<(f64, f64)>, DeviceError> {
    if !(dt > 0.0) {
        return Err(DeviceError::TimeStep(dt));
    }
    let steps = (duration / dt).ceil() as usize;
    let mut out = Vec::with_capacity(steps + 1);
    let mut dev = *device;
    out.push((0.0, dev.resistance()));
    for k in 1..=steps {
        dev = dev.step(v, dt)?;
        out.push((k as f64 * dt, dev.resistance()));
    }
    Ok(out)
}
