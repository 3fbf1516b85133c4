//! Finite-control-set model predictive current control.
//!
//! Every controller period the MPC enumerates all voltage-vector sequences
//! over the prediction horizon, simulates each candidate with its prediction
//! model (white-box machine equations or a trained Koopman model bank),
//! accumulates a quadratic current-tracking cost, and applies the first
//! element of the best sequence. The one-period actuation latency of the
//! digital control loop is compensated by advancing the measured state one
//! period under the vector that is already committed for the coming period.

use crate::drive::{
    inverse_park, park, voltage_vectors, DqState, DqVoltage, ElectricalAngle, MotorParams,
    OperatingCondition, SwitchState,
};
use crate::koopman::{KoopmanModelBank, LiftedState, Observation};

/// Upper bound on the supported prediction horizon length.
pub const MAX_HORIZON: usize = 8;

/// Current reference in the rotor frame, held constant over the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Reference {
    pub i_d: f64,
    pub i_q: f64,
}

/// Prediction model the controller plans with.
#[derive(Debug, Clone)]
pub enum PredictionModel<'a> {
    /// Forward-Euler discretization of the physical machine equations.
    WhiteBox {
        params: MotorParams,
        cond: OperatingCondition,
        t_s: f64,
    },
    /// Trained lifted linear models, one per voltage vector.
    Koopman { bank: &'a KoopmanModelBank },
}

/// Rolling predictor state; which variant is live matches the model.
#[derive(Debug, Clone, Copy)]
pub enum PredictorState {
    WhiteBox { x: DqState, eps: ElectricalAngle },
    Koopman { z: LiftedState },
}

impl PredictionModel<'_> {
    /// Initializes the predictor from a measured observation.
    pub fn seed(&self, obs: &Observation) -> PredictorState {
        match self {
            PredictionModel::WhiteBox { .. } => PredictorState::WhiteBox {
                x: DqState {
                    i_d: obs.i_d,
                    i_q: obs.i_q,
                },
                eps: ElectricalAngle::new(obs.sin_eps.atan2(obs.cos_eps)),
            },
            PredictionModel::Koopman { bank } => PredictorState::Koopman { z: bank.lift(obs) },
        }
    }

    /// Advances the predictor one controller period under `vector_index`.
    pub fn advance(&self, state: &PredictorState, vector_index: u8) -> PredictorState {
        match (self, state) {
            (
                PredictionModel::WhiteBox { params, cond, t_s },
                PredictorState::WhiteBox { x, eps },
            ) => {
                let ab = voltage_vectors()[vector_index as usize].alpha_beta(cond.u_dc);
                let u = park(ab, *eps);
                let (did, diq) = crate::drive::continuous_derivative(*x, u, cond.omega_el, params);
                PredictorState::WhiteBox {
                    x: DqState {
                        i_d: x.i_d + t_s * did,
                        i_q: x.i_q + t_s * diq,
                    },
                    eps: eps.advanced(cond.omega_el * t_s),
                }
            }
            (PredictionModel::Koopman { bank }, PredictorState::Koopman { z }) => {
                PredictorState::Koopman {
                    z: bank.predict(z, vector_index),
                }
            }
            _ => panic!("predictor state does not match prediction model"),
        }
    }

    /// Predicted currents carried by a predictor state.
    pub fn currents(&self, state: &PredictorState) -> (f64, f64) {
        match (self, state) {
            (PredictionModel::WhiteBox { .. }, PredictorState::WhiteBox { x, .. }) => {
                (x.i_d, x.i_q)
            }
            (PredictionModel::Koopman { bank }, PredictorState::Koopman { z }) => {
                let y = bank.project(z);
                (y.i_d, y.i_q)
            }
            _ => panic!("predictor state does not match prediction model"),
        }
    }
}

/// Advances the measured state one period under the vector that is already
/// committed, so that optimization starts from where the plant will actually
/// be when the new command takes effect.
pub fn delay_compensate(
    model: &PredictionModel,
    state: &PredictorState,
    committed_vector: u8,
) -> PredictorState {
    model.advance(state, committed_vector)
}

/// Maps a chosen voltage vector to a concrete switch state.
///
/// Active vectors have a unique realization. The zero vector picks whichever
/// of all-low/all-high differs from the previous switch state in fewer legs;
/// on a tie it picks all-high. (For well-formed previous states the leg
/// distances to the two zero states sum to 3, so the tie arm is defensive.)
pub fn choose_switch_state(vector_index: u8, previous: SwitchState) -> SwitchState {
    let v = &voltage_vectors()[vector_index as usize];
    if v.index != 0 {
        return v.states[0];
    }
    let d_low = previous.legs_differing(SwitchState::ALL_LOW);
    let d_high = previous.legs_differing(SwitchState::ALL_HIGH);
    if d_low < d_high {
        SwitchState::ALL_LOW
    } else {
        SwitchState::ALL_HIGH
    }
}

/// Outcome of one MPC period.
#[derive(Debug, Clone, Copy)]
pub struct MpcDecision {
    /// Voltage vector to commit for the next period.
    pub vector_index: u8,
    /// Its concrete switch-state realization.
    pub switch_state: SwitchState,
    /// The full optimizing sequence (first `sequence_len` entries).
    pub sequence: [u8; MAX_HORIZON],
    pub sequence_len: usize,
    /// Accumulated quadratic tracking cost of the best sequence.
    pub cost: f64,
    /// Total inverter leg toggles the best sequence would cause, starting
    /// from the previously committed switch state.
    pub toggles: u32,
    /// Number of candidate sequences evaluated (7^horizon).
    pub evaluated: usize,
}

struct SearchBest {
    cost: f64,
    toggles: u32,
    seq: [u8; MAX_HORIZON],
}

struct SearchCtx<'m, 'a> {
    model: &'m PredictionModel<'a>,
    reference: Reference,
    horizon: usize,
    evaluated: usize,
    best: SearchBest,
    seq: [u8; MAX_HORIZON],
}

/// Exhaustively evaluates all vector sequences of length `horizon`.
///
/// Candidates are compared by cost, then by total leg toggles along the
/// sequence (chained through [`choose_switch_state`]), then by enumeration
/// order, which is lexicographic — so the result is independent of
/// floating-point tie noise and of enumeration order.
pub fn enumerate_and_cost(
    model: &PredictionModel,
    start: &PredictorState,
    reference: Reference,
    horizon: usize,
    start_switch: SwitchState,
) -> (SearchResult, usize) {
    assert!(
        (1..=MAX_HORIZON).contains(&horizon),
        "horizon must lie in 1..={MAX_HORIZON}"
    );
    let mut ctx = SearchCtx {
        model,
        reference,
        horizon,
        evaluated: 0,
        best: SearchBest {
            cost: f64::INFINITY,
            toggles: u32::MAX,
            seq: [0; MAX_HORIZON],
        },
        seq: [0; MAX_HORIZON],
    };
    descend(&mut ctx, start, 0, 0.0, start_switch, 0);
    (
        SearchResult {
            cost: ctx.best.cost,
            toggles: ctx.best.toggles,
            sequence: ctx.best.seq,
        },
        ctx.evaluated,
    )
}

/// Best sequence found by [`enumerate_and_cost`].
#[derive(Debug, Clone, Copy)]
pub struct SearchResult {
    pub cost: f64,
    pub toggles: u32,
    pub sequence: [u8; MAX_HORIZON],
}

fn descend(
    ctx: &mut SearchCtx,
    state: &PredictorState,
    depth: usize,
    cost_so_far: f64,
    switch_so_far: SwitchState,
    toggles_so_far: u32,
) {
    for v in 0..7_u8 {
        let next = ctx.model.advance(state, v);
        let (i_d, i_q) = ctx.model.currents(&next);
        let step_cost = (i_d - ctx.reference.i_d).powi(2) + (i_q - ctx.reference.i_q).powi(2);
        let cost = cost_so_far + step_cost;
        let sw = choose_switch_state(v, switch_so_far);
        let toggles = toggles_so_far + switch_so_far.legs_differing(sw);
        ctx.seq[depth] = v;
        if depth + 1 == ctx.horizon {
            ctx.evaluated += 1;
            // Strict improvement keeps the first (lexicographically smallest)
            // sequence on full ties.
            if cost < ctx.best.cost || (cost == ctx.best.cost && toggles < ctx.best.toggles) {
                ctx.best.cost = cost;
                ctx.best.toggles = toggles;
                ctx.best.seq = ctx.seq;
            }
        } else {
            descend(ctx, &next, depth + 1, cost, sw, toggles);
        }
    }
}

/// One complete controller period: seed from the measurement, compensate the
/// actuation delay, search the horizon, and realize the first vector.
///
/// `committed_vector`/`committed_switch` describe the command that was issued
/// last period and will drive the plant during the coming one.
pub fn control_step(
    model: &PredictionModel,
    obs: &Observation,
    reference: Reference,
    horizon: usize,
    committed_vector: u8,
    committed_switch: SwitchState,
    compensate_delay: bool,
) -> MpcDecision {
    let mut state = model.seed(obs);
    if compensate_delay {
        state = delay_compensate(model, &state, committed_vector);
    }
    let (best, evaluated) = enumerate_and_cost(model, &state, reference, horizon, committed_switch);
    let vector_index = best.sequence[0];
    MpcDecision {
        vector_index,
        switch_state: choose_switch_state(vector_index, committed_switch),
        sequence: best.sequence,
        sequence_len: horizon,
        cost: best.cost,
        toggles: best.toggles,
        evaluated,
    }
}

/// Rotor-frame voltage a vector produces at a given angle; shared by tests
/// and the simulator's diagnostics.
pub fn vector_dq_voltage(vector_index: u8, eps: ElectricalAngle, u_dc: f64) -> DqVoltage {
    let ab = voltage_vectors()[vector_index as usize].alpha_beta(u_dc);
    park(ab, eps)
}

/// Stationary-frame voltage of a rotor-frame command; used by the modulator.
pub fn dq_voltage_to_alphabeta(u: DqVoltage, eps: ElectricalAngle) -> crate::drive::AlphaBeta {
    inverse_park(u, eps)
}
