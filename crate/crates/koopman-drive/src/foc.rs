//! PI field-oriented current control with carrier-based PWM — the baseline
//! the predictive controllers are measured against.
//!
//! Both current axes run a PI controller tuned by the symmetrical optimum
//! against the loop's small time constants (computation delay plus PWM
//! latch). Cross-coupling and back-EMF are cancelled by a feedforward term,
//! the voltage command is kept inside the inverter's linear range by a
//! circular limiter, and a min-max zero-sequence injection converts it to
//! duty cycles latched onto a triangle carrier.

use crate::drive::{
    DqState, DqVoltage, ElectricalAngle, MotorParams, OperatingCondition, SwitchState,
};
use crate::mpc::Reference;

/// Timing of the FOC loop relative to the shared controller period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FocTiming {
    /// Controller sampling period in seconds.
    pub t_s: f64,
    /// Carrier period as a multiple of the controller period.
    pub oversampling: u32,
    /// Symmetrical-optimum design parameter (typical range 2..=4).
    pub a: f64,
}

impl FocTiming {
    pub fn carrier_period(&self) -> f64 {
        f64::from(self.oversampling) * self.t_s
    }

    pub fn carrier_frequency(&self) -> f64 {
        1.0 / self.carrier_period()
    }

    /// Sum of small loop time constants the tuning lumps together: one and a
    /// half controller periods of sampling/computation delay plus half a
    /// carrier period of PWM latch delay.
    pub fn tau_sigma(&self) -> f64 {
        1.5 * self.t_s + 0.5 * self.carrier_period()
    }
}

/// PI controller gains for one current axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiGains {
    /// Proportional gain in V/A.
    pub k_p: f64,
    /// Integral reset time in seconds.
    pub t_n: f64,
    /// Symmetric output clamp in volts.
    pub output_limit: f64,
}

/// Current-control axis being tuned.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Direct,
    Quadrature,
}

/// Symmetrical-optimum tuning of one axis.
///
/// The plant seen by the controller is the stator lag `L/R` in series with
/// the small delays `tau_sigma`; the symmetrical optimum places
/// `k_p = L / (a * tau_sigma)` and `t_n = a^2 * tau_sigma`. The output clamp
/// is the inverter's linear range `u_dc / sqrt(3)`.
pub fn tune(params: &MotorParams, axis: Axis, timing: &FocTiming, u_dc: f64) -> PiGains {
    let l = match axis {
        Axis::Direct => params.l_d,
        Axis::Quadrature => params.l_q,
    };
    let tau_sigma = timing.tau_sigma();
    PiGains {
        k_p: l / (timing.a * tau_sigma),
        t_n: timing.a * timing.a * tau_sigma,
        output_limit: u_dc / 3.0_f64.sqrt(),
    }
}

/// Integrator state of one PI controller.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PiState {
    /// Time integral of the control error, ampere-seconds.
    pub integral: f64,
}

/// One PI update with conditional-integration anti-windup.
///
/// The integral only advances when the resulting output stays inside the
/// clamp, or when it leaves saturation territory because the error now
/// opposes the saturated output. The returned voltage is always clamped.
pub fn pi_step(error: f64, gains: &PiGains, dt: f64, state: &mut PiState) -> f64 {
    let candidate = state.integral + error * dt;
    let u = gains.k_p * (error + candidate / gains.t_n);
    if u.abs() <= gains.output_limit {
        state.integral = candidate;
        return u;
    }
    // Saturated. Integrating further in the direction of the error would only
    // wind up the integral, so freeze it in that case.
    let u = if u * error > 0.0 {
        gains.k_p * (error + state.integral / gains.t_n)
    } else {
        state.integral = candidate;
        u
    };
    u.clamp(-gains.output_limit, gains.output_limit)
}

/// Feedforward voltage cancelling rotational cross-coupling and back-EMF.
///
/// Adding this to the PI outputs makes each axis look like a plain `R-L` lag
/// to its controller.
pub fn decoupling_feedforward(x: DqState, cond: &OperatingCondition, p: &MotorParams) -> DqVoltage {
    DqVoltage {
        u_d: -cond.omega_el * p.l_q * x.i_q,
        u_q: cond.omega_el * (p.l_d * x.i_d + p.psi_p),
    }
}

/// Duty cycles produced by the modulator for one controller period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModulationResult {
    pub duties: [f64; 3],
    /// True when the circular limiter had to shorten the voltage command.
    pub saturated: bool,
    /// The rotor-frame voltage actually commanded, after limiting.
    pub u_limited: DqVoltage,
}

/// Converts a rotor-frame voltage command into phase duty cycles.
///
/// The command is first clipped to the inverter's linear range
/// `|u| <= u_dc / sqrt(3)` (proportional back-off preserving the angle), then
/// rotated to phase voltages, and finally shifted by min-max zero-sequence
/// injection: `duty_k = 0.5 + (u_k - (max+min)/2) / u_dc`. Inside the linear
/// range the duties land in `[0, 1]` by construction; the final clamp guards
/// rounding only.
pub fn modulate(u_cmd: DqVoltage, eps: ElectricalAngle, u_dc: f64) -> ModulationResult {
    let limit = u_dc / 3.0_f64.sqrt();
    let mag = (u_cmd.u_d * u_cmd.u_d + u_cmd.u_q * u_cmd.u_q).sqrt();
    let (u_limited, saturated) = if mag > limit {
        let s = limit / mag;
        (
            DqVoltage {
                u_d: u_cmd.u_d * s,
                u_q: u_cmd.u_q * s,
            },
            true,
        )
    } else {
        (u_cmd, false)
    };

    let ab = crate::drive::inverse_park(u_limited, eps);
    let sqrt3_2 = 3.0_f64.sqrt() / 2.0;
    let phase = [
        ab.alpha,
        -0.5 * ab.alpha + sqrt3_2 * ab.beta,
        -0.5 * ab.alpha - sqrt3_2 * ab.beta,
    ];
    let max = phase[0].max(phase[1]).max(phase[2]);
    let min = phase[0].min(phase[1]).min(phase[2]);
    let mid = 0.5 * (max + min);
    let mut duties = [0.0; 3];
    for (d, u) in duties.iter_mut().zip(phase.iter()) {
        *d = (0.5 + (u - mid) / u_dc).clamp(0.0, 1.0);
    }
    ModulationResult {
        duties,
        saturated,
        u_limited,
    }
}

/// Command handed from the controller to the PWM stage for one period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FocCommand {
    pub duties: [f64; 3],
    pub saturated: bool,
    pub u_limited: DqVoltage,
}

/// The complete PI current controller: two tuned axes plus their integrators.
#[derive(Debug, Clone)]
pub struct FocController {
    pub timing: FocTiming,
    pub gains_d: PiGains,
    pub gains_q: PiGains,
    pi_d: PiState,
    pi_q: PiState,
}

impl FocController {
    pub fn new(params: &MotorParams, timing: FocTiming, u_dc: f64) -> Self {
        Self {
            timing,
            gains_d: tune(params, Axis::Direct, &timing, u_dc),
            gains_q: tune(params, Axis::Quadrature, &timing, u_dc),
            pi_d: PiState::default(),
            pi_q: PiState::default(),
        }
    }

    /// One controller period: PI on both axes, decoupling feedforward, then
    /// modulation. `eps` is the rotor angle at the sampling instant.
    pub fn control_step(
        &mut self,
        measured: DqState,
        reference: Reference,
        eps: ElectricalAngle,
        cond: &OperatingCondition,
        params: &MotorParams,
    ) -> FocCommand {
        let e_d = reference.i_d - measured.i_d;
        let e_q = reference.i_q - measured.i_q;
        let u_d_pi = pi_step(e_d, &self.gains_d, self.timing.t_s, &mut self.pi_d);
        let u_q_pi = pi_step(e_q, &self.gains_q, self.timing.t_s, &mut self.pi_q);
        let ff = decoupling_feedforward(measured, cond, params);
        let cmd = DqVoltage {
            u_d: u_d_pi + ff.u_d,
            u_q: u_q_pi + ff.u_q,
        };
        let m = modulate(cmd, eps, cond.u_dc);
        FocCommand {
            duties: m.duties,
            saturated: m.saturated,
            u_limited: m.u_limited,
        }
    }
}

/// Triangle-carrier PWM comparator with duty latching at carrier extremes.
///
/// The carrier is tracked as an integer sample counter so the extremes align
/// exactly with simulation samples: over one period of `steps` samples the
/// triangle runs `0 -> 1 -> 0`, with the minimum at sample 0 and the maximum
/// at sample `steps / 2`. Duties are latched exactly at those extremes, which
/// bounds every leg to at most two toggles per carrier period.
#[derive(Debug, Clone)]
pub struct PwmCarrier {
    steps_per_period: u32,
    counter: u32,
    latched: [f64; 3],
}

impl PwmCarrier {
    pub fn new(steps_per_period: u32) -> Self {
        assert!(
            steps_per_period >= 2 && steps_per_period.is_multiple_of(2),
            "carrier needs an even positive number of samples per period"
        );
        Self {
            steps_per_period,
            counter: 0,
            latched: [0.5; 3],
        }
    }

    /// Carrier value in `[0, 1]` at the current sample.
    pub fn triangle(&self) -> f64 {
        let pos = f64::from(self.counter) / f64::from(self.steps_per_period);
        1.0 - (2.0 * pos - 1.0).abs()
    }

    /// Produces the switch state for the current sample, latching `available`
    /// duties if the sample sits on a carrier extreme, then advances.
    pub fn step(&mut self, available: [f64; 3]) -> SwitchState {
        if self.counter == 0 || self.counter == self.steps_per_period / 2 {
            self.latched = available;
        }
        let tri = self.triangle();
        let mut legs = [0_i8; 3];
        for (leg, duty) in legs.iter_mut().zip(self.latched.iter()) {
            *leg = if tri < *duty { 1 } else { -1 };
        }
        self.counter = (self.counter + 1) % self.steps_per_period;
        SwitchState(legs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drive::continuous_derivative;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    fn timing(a: f64, oversampling: u32) -> FocTiming {
        FocTiming {
            t_s: 50e-6,
            oversampling,
            a,
        }
    }

    #[test]
    fn tuning_worked_example() {
        // a = 4, carrier at one sixth of the control rate: tau_sigma =
        // 1.5*50us + 0.5*300us = 225 us, so t_n = 16 * 225us = 3.6 ms and
        // k_p = 1.2 mH / (4 * 225 us) = 4/3 V/A on the q axis.
        let t = timing(4.0, 6);
        assert_relative_eq!(t.tau_sigma(), 225e-6, max_relative = 1e-12);
        let g = tune(&MotorParams::default(), Axis::Quadrature, &t, 300.0);
        assert_relative_eq!(g.t_n, 3.6e-3, max_relative = 1e-12);
        assert_relative_eq!(g.k_p, 4.0 / 3.0, max_relative = 1e-12);
        let gd = tune(&MotorParams::default(), Axis::Direct, &t, 300.0);
        assert_relative_eq!(gd.k_p, 370e-6 / 900e-6, max_relative = 1e-12);
        assert_relative_eq!(gd.t_n, 3.6e-3, max_relative = 1e-12);
    }

    #[test]
    fn tuning_other_design_points() {
        let t = timing(3.0, 6);
        let g = tune(&MotorParams::default(), Axis::Quadrature, &t, 300.0);
        assert_relative_eq!(g.k_p, 16.0 / 9.0, max_relative = 1e-12);
        assert_relative_eq!(g.t_n, 2.025e-3, max_relative = 1e-12);

        let t = timing(4.0, 5);
        assert_relative_eq!(t.tau_sigma(), 200e-6, max_relative = 1e-12);
        let g = tune(&MotorParams::default(), Axis::Quadrature, &t, 300.0);
        assert_relative_eq!(g.k_p, 1.5, max_relative = 1e-12);
        assert_relative_eq!(g.t_n, 3.2e-3, max_relative = 1e-12);
    }

    #[test]
    fn carrier_frequencies_for_supported_oversampling() {
        assert_relative_eq!(
            timing(3.0, 6).carrier_frequency(),
            10000.0 / 3.0,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            timing(4.0, 5).carrier_frequency(),
            4000.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn output_limit_is_linear_modulation_range() {
        let g = tune(
            &MotorParams::default(),
            Axis::Direct,
            &timing(4.0, 5),
            300.0,
        );
        assert_relative_eq!(g.output_limit, 300.0 / 3.0_f64.sqrt(), max_relative = 1e-15);
        assert_relative_eq!(g.output_limit, 173.205080756888, max_relative = 1e-12);
    }

    #[test]
    fn pi_step_tracks_hand_computed_updates() {
        let gains = PiGains {
            k_p: 2.0,
            t_n: 0.01,
            output_limit: 1000.0,
        };
        let mut st = PiState::default();
        // e = 3 for 1 ms: I = 0.003, u = 2*(3 + 0.003/0.01) = 6.6
        let u1 = pi_step(3.0, &gains, 1e-3, &mut st);
        assert_relative_eq!(u1, 6.6, max_relative = 1e-12);
        assert_relative_eq!(st.integral, 3e-3, max_relative = 1e-12);
        // e = -1: I = 0.002, u = 2*(-1 + 0.2) = -1.6
        let u2 = pi_step(-1.0, &gains, 1e-3, &mut st);
        assert_relative_eq!(u2, -1.6, max_relative = 1e-12);
        assert_relative_eq!(st.integral, 2e-3, max_relative = 1e-12);
    }

    #[test]
    fn pi_step_freezes_integral_while_saturated_in_error_direction() {
        let gains = PiGains {
            k_p: 1.0,
            t_n: 1e-3,
            output_limit: 10.0,
        };
        let mut st = PiState::default();
        let u1 = pi_step(100.0, &gains, 1e-3, &mut st);
        assert_eq!(u1, 10.0);
        let frozen = st.integral;
        let u2 = pi_step(100.0, &gains, 1e-3, &mut st);
        assert_eq!(u2, 10.0);
        assert_eq!(st.integral, frozen, "integral must not wind up");
        // A wound-up integral with an opposing error: the output is still
        // clamped positive, but integration must resume (and unwind).
        let mut st = PiState { integral: 0.02 };
        let u = pi_step(-1.0, &gains, 1e-3, &mut st);
        assert_eq!(u, 10.0, "output stays clamped while unwinding");
        assert_relative_eq!(st.integral, 0.019, max_relative = 1e-12);
    }

    #[test]
    fn feedforward_values_at_rated_speed() {
        let p = MotorParams::default();
        let cond = OperatingCondition::from_rpm(1000.0, 3, 300.0);
        let ff = decoupling_feedforward(
            DqState {
                i_d: -25.0,
                i_q: 25.0,
            },
            &cond,
            &p,
        );
        // -omega * L_q * i_q and omega * (L_d * i_d + psi_p)
        assert_relative_eq!(
            ff.u_d,
            -cond.omega_el * 1200e-6 * 25.0,
            max_relative = 1e-15
        );
        assert_relative_eq!(
            ff.u_q,
            cond.omega_el * (370e-6 * -25.0 + 0.066),
            max_relative = 1e-15
        );
        assert_relative_eq!(ff.u_d, -9.42477796076938, max_relative = 1e-12);
        assert_relative_eq!(ff.u_q, 17.8285383091221, max_relative = 1e-12);
    }

    #[test]
    fn modulate_zero_command_centers_all_duties() {
        let m = modulate(DqVoltage::default(), ElectricalAngle::ZERO, 300.0);
        assert_eq!(m.duties, [0.5; 3]);
        assert!(!m.saturated);
    }

    #[test]
    fn modulate_alpha_axis_command_hand_example() {
        // 100 V on the d axis at eps = 0 is 100 V on phase a; min-max
        // injection centers (100, -50, -50) around 25, giving duties
        // (0.75, 0.25, 0.25).
        let m = modulate(
            DqVoltage {
                u_d: 100.0,
                u_q: 0.0,
            },
            ElectricalAngle::ZERO,
            300.0,
        );
        assert_relative_eq!(m.duties[0], 0.75, max_relative = 1e-12);
        assert_relative_eq!(m.duties[1], 0.25, max_relative = 1e-12);
        assert_relative_eq!(m.duties[2], 0.25, max_relative = 1e-12);
        assert!(!m.saturated);
    }

    #[test]
    fn modulate_limits_overlong_commands_proportionally() {
        let m = modulate(
            DqVoltage {
                u_d: 240.0,
                u_q: -180.0,
            }, // magnitude 300 > 173.2
            ElectricalAngle::new(1.0),
            300.0,
        );
        assert!(m.saturated);
        let mag = (m.u_limited.u_d.powi(2) + m.u_limited.u_q.powi(2)).sqrt();
        assert_relative_eq!(mag, 300.0 / 3.0_f64.sqrt(), max_relative = 1e-12);
        // Direction preserved.
        assert_relative_eq!(
            m.u_limited.u_q / m.u_limited.u_d,
            -180.0 / 240.0,
            max_relative = 1e-12
        );
        assert!(m.duties.iter().all(|d| (0.0..=1.0).contains(d)));
    }

    #[test]
    fn carrier_latches_only_at_extremes() {
        // Eight samples per period: tri = 0, .25, .5, .75, 1, .75, .5, .25.
        // Duties are chosen off the carrier grid so comparisons are exact.
        let mut pwm = PwmCarrier::new(8);
        // Counter 0 latches 0.6 at the minimum: high through tri = 0.5.
        assert_eq!(pwm.step([0.6; 3]).0[0], 1);
        assert_eq!(pwm.step([0.6; 3]).0[0], 1);
        // Offering 0.3 mid-ramp must not change the latched 0.6 yet.
        assert_eq!(pwm.step([0.3; 3]).0[0], 1);
        assert_eq!(pwm.step([0.3; 3]).0[0], -1); // tri = 0.75
                                                 // Counter 4 is the maximum: 0.3 latches; tri = 1 -> low.
        assert_eq!(pwm.step([0.3; 3]).0[0], -1);
        assert_eq!(pwm.step([0.3; 3]).0[0], -1); // tri = 0.75
        assert_eq!(pwm.step([0.3; 3]).0[0], -1); // tri = 0.5
        assert_eq!(pwm.step([0.3; 3]).0[0], 1); // tri = 0.25 < 0.3
                                                // Wrapped to counter 0: 0.9 latches, tri = 0 -> high.
        assert_eq!(pwm.step([0.9; 3]).0[0], 1);
    }

    #[test]
    fn closed_loop_pi_converges_without_windup() {
        // Single-axis R-L plant under the tuned PI: a crude closed loop that
        // must settle on the reference without residual offset.
        let p = MotorParams::default();
        let t = timing(4.0, 5);
        let gains = tune(&p, Axis::Quadrature, &t, 300.0);
        let mut st = PiState::default();
        let mut i = 0.0_f64;
        let reference = 150.0;
        let dt = t.t_s;
        for _ in 0..4000 {
            let u = pi_step(reference - i, &gains, dt, &mut st);
            // Plant: L di/dt = u - R i, integrated with 10 Euler substeps.
            for _ in 0..10 {
                i += dt / 10.0 * ((u - p.r_s * i) / p.l_q);
            }
        }
        assert_abs_diff_eq!(i, reference, epsilon = 0.5);
    }

    proptest! {
        #[test]
        fn duties_always_land_in_unit_interval(
            u_d in -500.0..500.0_f64,
            u_q in -500.0..500.0_f64,
            eps in 0.0..(2.0 * std::f64::consts::PI),
        ) {
            let m = modulate(
                DqVoltage { u_d, u_q },
                ElectricalAngle::new(eps),
                300.0,
            );
            prop_assert!(m.duties.iter().all(|d| (0.0..=1.0).contains(d)));
        }

        #[test]
        fn feedforward_decouples_the_axes(
            i_d in -170.0..170.0_f64,
            i_q in -170.0..170.0_f64,
            rpm in 100.0..2500.0_f64,
        ) {
            // With the feedforward applied and no PI action, each axis sees
            // only its own first-order decay: the d derivative must not depend
            // on i_q and vice versa (back-EMF also cancelled).
            let p = MotorParams::default();
            let cond = OperatingCondition::from_rpm(rpm, 3, 300.0);
            let x = DqState { i_d, i_q };
            let ff = decoupling_feedforward(x, &cond, &p);
            let (did, diq) = continuous_derivative(x, ff, cond.omega_el, &p);
            prop_assert!((did - (-p.r_s * i_d / p.l_d)).abs() < 1e-9 * (1.0 + i_d.abs()));
            prop_assert!((diq - (-p.r_s * i_q / p.l_q)).abs() < 1e-9 * (1.0 + i_q.abs()));
        }

        #[test]
        fn carrier_mean_voltage_tracks_duty(duty in 0.0..=1.0_f64) {
            let steps = 250;
            let mut pwm = PwmCarrier::new(steps);
            let mut high = 0_u32;
            for _ in 0..steps {
                if pwm.step([duty; 3]).0[0] == 1 {
                    high += 1;
                }
            }
            let frac = f64::from(high) / f64::from(steps);
            prop_assert!((frac - duty).abs() <= 1.5 / f64::from(steps),
                "duty {duty} produced on-fraction {frac}");
        }

        #[test]
        fn carrier_toggles_at_most_twice_per_leg_per_period(
            d1 in 0.0..=1.0_f64,
            d2 in 0.0..=1.0_f64,
        ) {
            // Within one latch-aligned carrier period each leg turns on at
            // most once and off at most once, even when the offered duty
            // changes mid-period. (The sample pair straddling the period
            // boundary is the previous period's transition, so it is not
            // counted here.)
            let steps = 50;
            let mut pwm = PwmCarrier::new(steps);
            for _ in 0..steps {
                let _ = pwm.step([d1; 3]);
            }
            let mut last: Option<SwitchState> = None;
            let mut toggles = 0;
            for k in 0..steps {
                let avail = if k < steps / 3 { [d1; 3] } else { [d2; 3] };
                let s = pwm.step(avail);
                if let Some(prev) = last {
                    toggles += prev.legs_differing(s);
                }
                last = Some(s);
            }
            prop_assert!(toggles <= 2 * 3, "leg toggles {toggles} exceed 2 per leg");
        }
    }
}
