//! Explicit-Euler dynamics. Controls passed here are assumed already clamped.

use serde::{Deserialize, Serialize};

/// Single integrator: state `(x, y)`, control `(v, w)`.
pub fn step_linear(x: &[f64], u: &[f64], dt: f64) -> Vec<f64> {
    vec![x[0] + u[0] * dt, x[1] + u[1] * dt]
}

/// Unicycle: state `(x, y, theta, v)`, control `(omega, a)`.
pub fn step_unicycle(x: &[f64], u: &[f64], dt: f64) -> Vec<f64> {
    let (px, py, theta, v) = (x[0], x[1], x[2], x[3]);
    vec![
        px + v * theta.cos() * dt,
        py + v * theta.sin() * dt,
        theta + u[0] * dt,
        v + u[1] * dt,
    ]
}

/// Physical constants and motor mixing for the quadrotor.
///
/// The mixer is a plus configuration: motors 1..4 sit on the +x, +y, -x, -y
/// arms; roll torque `l (f2 - f4)`, pitch torque `l (f3 - f1)`, yaw torque
/// `k (f1 - f2 + f3 - f4)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadrotorParams {
    pub mass: f64,
    pub gravity: f64,
    pub inertia: [f64; 3],
    pub arm_length: f64,
    pub yaw_coefficient: f64,
}

impl Default for QuadrotorParams {
    fn default() -> Self {
        Self {
            mass: 0.2,
            gravity: 9.81,
            inertia: [0.01, 0.01, 0.02],
            arm_length: 0.1,
            yaw_coefficient: 0.01,
        }
    }
}

impl QuadrotorParams {
    /// Per-motor force that exactly balances gravity at level attitude.
    pub fn hover_force(&self) -> f64 {
        self.mass * self.gravity / 4.0
    }

    /// Total thrust and body torques from the four motor forces.
    pub fn mix(&self, f: &[f64]) -> (f64, [f64; 3]) {
        let thrust = f[0] + f[1] + f[2] + f[3];
        let l = self.arm_length;
        let torque = [
            l * (f[1] - f[3]),
            l * (f[2] - f[0]),
            self.yaw_coefficient * (f[0] - f[1] + f[2] - f[3]),
        ];
        (thrust, torque)
    }
}

/// Quadrotor: state `(p[3], v[3], phi, theta, psi, omega[3])`, control the
/// four motor forces. Gravity acts along `+e3`; thrust along `-R e3`.
pub fn step_quadrotor(x: &[f64], u: &[f64], dt: f64, params: &QuadrotorParams) -> Vec<f64> {
    let (phi, theta, psi) = (x[6], x[7], x[8]);
    let w = [x[9], x[10], x[11]];
    let (thrust, torque) = params.mix(u);

    // Third column of Rz(psi) Ry(theta) Rx(phi).
    let (sphi, cphi) = phi.sin_cos();
    let (sth, cth) = theta.sin_cos();
    let (spsi, cpsi) = psi.sin_cos();
    let r_e3 = [
        cpsi * sth * cphi + spsi * sphi,
        spsi * sth * cphi - cpsi * sphi,
        cth * cphi,
    ];

    let a = thrust / params.mass;
    let acc = [-a * r_e3[0], -a * r_e3[1], params.gravity - a * r_e3[2]];

    let inertia = params.inertia;
    let iw = [inertia[0] * w[0], inertia[1] * w[1], inertia[2] * w[2]];
    let gyro = [
        w[1] * iw[2] - w[2] * iw[1],
        w[2] * iw[0] - w[0] * iw[2],
        w[0] * iw[1] - w[1] * iw[0],
    ];

    let mut next = Vec::with_capacity(12);
    for k in 0..3 {
        next.push(x[k] + x[3 + k] * dt);
    }
    for k in 0..3 {
        next.push(x[3 + k] + acc[k] * dt);
    }
    for k in 0..3 {
        next.push(x[6 + k] + w[k] * dt);
    }
    for k in 0..3 {
        next.push(w[k] + (torque[k] - gyro[k]) / inertia[k] * dt);
    }
    next
}
