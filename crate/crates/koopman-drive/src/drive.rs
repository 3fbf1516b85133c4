//! Physical model of the drive: machine parameters, reference-frame
//! transforms, the two-level inverter's discrete voltage vectors, and the
//! continuous-time current dynamics with numeric integrators.
//!
//! Conventions: `alpha`/`beta` is the stationary frame, `d`/`q` the rotor
//! frame. The rotor frame leads by the electrical angle `eps_el`, so a
//! stationary-frame quantity is rotated *into* dq by [`park`]. All angles are
//! electrical radians, all speeds electrical rad/s.

use std::sync::OnceLock;

/// Electrical parameters of the interior permanent-magnet machine.
///
/// Saliency (`l_d != l_q`) is what distinguishes the IPMSM from a
/// surface-mount machine; the cross-coupling terms in
/// [`continuous_derivative`] depend on it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotorParams {
    /// Stator resistance in ohms.
    pub r_s: f64,
    /// Direct-axis inductance in henries.
    pub l_d: f64,
    /// Quadrature-axis inductance in henries.
    pub l_q: f64,
    /// Permanent-magnet flux linkage in volt-seconds.
    pub psi_p: f64,
    /// Number of pole pairs.
    pub pole_pairs: u32,
}

impl Default for MotorParams {
    /// Parameters of the 57 kW test machine used throughout.
    fn default() -> Self {
        Self {
            r_s: 18e-3,
            l_d: 370e-6,
            l_q: 1200e-6,
            psi_p: 66e-3,
            pole_pairs: 3,
        }
    }
}

/// Operating point of the drive: electrical angular speed and dc-link voltage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingCondition {
    /// Electrical angular speed in rad/s.
    pub omega_el: f64,
    /// DC-link voltage in volts.
    pub u_dc: f64,
}

impl OperatingCondition {
    /// Builds an operating point from a mechanical speed in rpm.
    pub fn from_rpm(speed_rpm: f64, pole_pairs: u32, u_dc: f64) -> Self {
        Self {
            omega_el: omega_el_from_rpm(speed_rpm, pole_pairs),
            u_dc,
        }
    }
}

/// Electrical angular speed in rad/s for a mechanical speed in rpm.
pub fn omega_el_from_rpm(speed_rpm: f64, pole_pairs: u32) -> f64 {
    f64::from(pole_pairs) * 2.0 * std::f64::consts::PI * speed_rpm / 60.0
}

/// Stator current in the rotor (dq) frame, in amperes.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DqState {
    pub i_d: f64,
    pub i_q: f64,
}

/// Stator voltage in the rotor (dq) frame, in volts.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DqVoltage {
    pub u_d: f64,
    pub u_q: f64,
}

/// A quantity in the stationary (alpha-beta) frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AlphaBeta {
    pub alpha: f64,
    pub beta: f64,
}

/// Electrical rotor angle, kept normalized to `[0, 2*pi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElectricalAngle(f64);

impl ElectricalAngle {
    pub const ZERO: Self = Self(0.0);

    /// Wraps an arbitrary angle into `[0, 2*pi)`.
    pub fn new(raw: f64) -> Self {
        let tau = 2.0 * std::f64::consts::PI;
        let mut a = raw.rem_euclid(tau);
        // rem_euclid can return exactly tau when raw is a tiny negative number.
        if a >= tau {
            a -= tau;
        }
        Self(a)
    }

    /// The normalized angle in radians.
    pub fn radians(self) -> f64 {
        self.0
    }

    /// Returns the angle advanced by `delta` radians, re-normalized.
    #[must_use]
    pub fn advanced(self, delta: f64) -> Self {
        Self::new(self.0 + delta)
    }

    pub fn sin_cos(self) -> (f64, f64) {
        self.0.sin_cos()
    }
}

/// One switch position of the two-level inverter: `+1` connects a phase leg to
/// the positive dc rail, `-1` to the negative rail.
///
/// Invariant: every component is exactly `+1` or `-1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SwitchState(pub [i8; 3]);

impl SwitchState {
    /// All legs low; one of the two zero-vector states.
    pub const ALL_LOW: Self = Self([-1, -1, -1]);
    /// All legs high; the other zero-vector state.
    pub const ALL_HIGH: Self = Self([1, 1, 1]);

    pub fn new(legs: [i8; 3]) -> Self {
        assert!(
            legs.iter().all(|&s| s == 1 || s == -1),
            "switch legs must be +1 or -1, got {legs:?}"
        );
        Self(legs)
    }

    /// Number of legs in which `self` and `other` differ (0..=3).
    pub fn legs_differing(self, other: Self) -> u32 {
        self.0
            .iter()
            .zip(other.0.iter())
            .filter(|(a, b)| a != b)
            .count() as u32
    }
}

/// One of the seven distinct inverter voltage vectors.
///
/// Index 0 is the zero vector (realized by either all-low or all-high);
/// indices 1..=6 are the active vectors ordered counter-clockwise starting at
/// the alpha axis. `alpha_pu`/`beta_pu` are per-unit of the dc-link voltage:
/// the realized stationary-frame voltage is `(alpha_pu * u_dc, beta_pu * u_dc)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoltageVector {
    pub index: u8,
    pub alpha_pu: f64,
    pub beta_pu: f64,
    /// Switch states realizing this vector (two for the zero vector).
    pub states: &'static [SwitchState],
}

impl VoltageVector {
    /// Stationary-frame voltage realized at dc-link voltage `u_dc`.
    pub fn alpha_beta(&self, u_dc: f64) -> AlphaBeta {
        AlphaBeta {
            alpha: self.alpha_pu * u_dc,
            beta: self.beta_pu * u_dc,
        }
    }
}

const ZERO_STATES: [SwitchState; 2] = [SwitchState::ALL_LOW, SwitchState::ALL_HIGH];
const ACTIVE_STATES: [[SwitchState; 1]; 6] = [
    [SwitchState([1, -1, -1])],
    [SwitchState([1, 1, -1])],
    [SwitchState([-1, 1, -1])],
    [SwitchState([-1, 1, 1])],
    [SwitchState([-1, -1, 1])],
    [SwitchState([1, -1, 1])],
];

/// The seven voltage vectors of the two-level inverter.
///
/// Active vectors have magnitude `2/3 * u_dc` and sit at multiples of 60
/// degrees; the table is derived from [`switch_to_alphabeta`] so the two
/// representations cannot drift apart.
pub fn voltage_vectors() -> &'static [VoltageVector; 7] {
    static TABLE: OnceLock<[VoltageVector; 7]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut out = [VoltageVector {
            index: 0,
            alpha_pu: 0.0,
            beta_pu: 0.0,
            states: &ZERO_STATES,
        }; 7];
        for i in 1..7 {
            let states = &ACTIVE_STATES[i - 1];
            let ab = switch_to_alphabeta(states[0], 1.0);
            out[i] = VoltageVector {
                index: i as u8,
                alpha_pu: ab.alpha,
                beta_pu: ab.beta,
                states,
            };
        }
        out
    })
}

/// Stationary-frame voltage produced by one inverter switch state.
///
/// Power-invariant-free (amplitude-correct) Clarke transform of the phase leg
/// potentials `s * u_dc / 2`.
pub fn switch_to_alphabeta(s: SwitchState, u_dc: f64) -> AlphaBeta {
    let half = 0.5 * u_dc;
    let a = f64::from(s.0[0]) * half;
    let b = f64::from(s.0[1]) * half;
    let c = f64::from(s.0[2]) * half;
    let sqrt3_2 = 3.0_f64.sqrt() / 2.0;
    AlphaBeta {
        alpha: (2.0 / 3.0) * (a - 0.5 * b - 0.5 * c),
        beta: (2.0 / 3.0) * (sqrt3_2 * b - sqrt3_2 * c),
    }
}

/// Phase currents reconstructed from the stationary-frame current.
///
/// Inverse of the amplitude-correct Clarke transform for an isolated neutral;
/// the result always sums to zero.
pub fn alphabeta_to_phases(i: AlphaBeta) -> [f64; 3] {
    let sqrt3_2 = 3.0_f64.sqrt() / 2.0;
    [
        i.alpha,
        -0.5 * i.alpha + sqrt3_2 * i.beta,
        -0.5 * i.alpha - sqrt3_2 * i.beta,
    ]
}

/// Rotates a stationary-frame quantity into the rotor frame.
pub fn park(ab: AlphaBeta, eps: ElectricalAngle) -> DqVoltage {
    let (sin, cos) = eps.sin_cos();
    DqVoltage {
        u_d: cos * ab.alpha + sin * ab.beta,
        u_q: -sin * ab.alpha + cos * ab.beta,
    }
}

/// Rotates a rotor-frame quantity back into the stationary frame.
pub fn inverse_park(u: DqVoltage, eps: ElectricalAngle) -> AlphaBeta {
    let (sin, cos) = eps.sin_cos();
    AlphaBeta {
        alpha: cos * u.u_d - sin * u.u_q,
        beta: sin * u.u_d + cos * u.u_q,
    }
}

/// Rotor-frame current expressed in the stationary frame.
pub fn dq_current_to_alphabeta(x: DqState, eps: ElectricalAngle) -> AlphaBeta {
    let ab = inverse_park(
        DqVoltage {
            u_d: x.i_d,
            u_q: x.i_q,
        },
        eps,
    );
    AlphaBeta {
        alpha: ab.alpha,
        beta: ab.beta,
    }
}

/// Continuous-time current derivative of the machine in the rotor frame.
///
/// Returns `(d i_d / dt, d i_q / dt)`. The q-axis carries the back-EMF term
/// `-omega_el * psi_p / l_q`, which is independent of the state — an affine
/// offset, not a linear term.
pub fn continuous_derivative(
    x: DqState,
    u: DqVoltage,
    omega_el: f64,
    p: &MotorParams,
) -> (f64, f64) {
    let did = (u.u_d - p.r_s * x.i_d + omega_el * p.l_q * x.i_q) / p.l_d;
    let diq = (u.u_q - p.r_s * x.i_q - omega_el * p.l_d * x.i_d - omega_el * p.psi_p) / p.l_q;
    (did, diq)
}

/// One explicit-Euler step of the current dynamics with a constant rotor-frame
/// voltage over the step.
pub fn euler_step(x: DqState, u: DqVoltage, omega_el: f64, p: &MotorParams, dt: f64) -> DqState {
    let (did, diq) = continuous_derivative(x, u, omega_el, p);
    DqState {
        i_d: x.i_d + dt * did,
        i_q: x.i_q + dt * diq,
    }
}

/// Integrates the plant over `dt` while the inverter holds switch state `s`.
///
/// Classic fourth-order Runge-Kutta with `substeps` sub-intervals. The
/// stationary-frame voltage is constant over the step, but its rotor-frame
/// image rotates as the electrical angle advances, so each stage re-evaluates
/// the Park transform at the stage time. `eps` is the angle at the start of
/// the step; the caller advances it by `omega_el * dt` afterwards.
pub fn plant_step(
    x: DqState,
    s: SwitchState,
    eps: ElectricalAngle,
    cond: &OperatingCondition,
    p: &MotorParams,
    dt: f64,
    substeps: u32,
) -> DqState {
    assert!(substeps >= 1, "plant_step needs at least one substep");
    let ab = switch_to_alphabeta(s, cond.u_dc);
    let h = dt / f64::from(substeps);
    let mut state = [x.i_d, x.i_q];
    let mut t = 0.0;
    let deriv = |xs: [f64; 2], tau: f64| -> [f64; 2] {
        let u = park(ab, eps.advanced(cond.omega_el * tau));
        let (did, diq) = continuous_derivative(
            DqState {
                i_d: xs[0],
                i_q: xs[1],
            },
            u,
            cond.omega_el,
            p,
        );
        [did, diq]
    };
    for _ in 0..substeps {
        let k1 = deriv(state, t);
        let k2 = deriv(
            [state[0] + 0.5 * h * k1[0], state[1] + 0.5 * h * k1[1]],
            t + 0.5 * h,
        );
        let k3 = deriv(
            [state[0] + 0.5 * h * k2[0], state[1] + 0.5 * h * k2[1]],
            t + 0.5 * h,
        );
        let k4 = deriv([state[0] + h * k3[0], state[1] + h * k3[1]], t + h);
        state[0] += h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]);
        state[1] += h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]);
        t += h;
    }
    DqState {
        i_d: state[0],
        i_q: state[1],
    }
}
