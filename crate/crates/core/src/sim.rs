//! Exact per-interval simulation of the switched jump-ODE system.
//!
//! Within each switching interval the state flows by the matrix exponential
//! and a Gauss–Legendre evaluation of the input convolution; at switching
//! instants the jump rule is applied and the Dirac output-impulse
//! coefficients are recorded. Inputs are piecewise polynomial-exponential,
//! so every derivative needed for the stacked vector `U_q(t)` is evaluated
//! symbolically.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::expm::expm;
use crate::reform::{JumpOdeSystem, ModeDynamics, SwitchingSignal};

/// One `p(s) e^{rate s}` term of an input channel, `s` relative to the
/// enclosing piece start; `coeffs[k]` multiplies `s^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyExpTerm {
    pub coeffs: Vec<f64>,
    pub rate: f64,
}

impl PolyExpTerm {
    fn eval(&self, s: f64) -> f64 {
        let mut poly = 0.0;
        for &c in self.coeffs.iter().rev() {
            poly = poly * s + c;
        }
        poly * (self.rate * s).exp()
    }

    /// d/ds of `p(s) e^{rate s}` is `(p' + rate p)(s) e^{rate s}`.
    fn derivative(&self) -> PolyExpTerm {
        let d = self.coeffs.len();
        let mut coeffs = vec![0.0; d.max(1)];
        for (k, &c) in self.coeffs.iter().enumerate() {
            coeffs[k] += self.rate * c;
            if k > 0 {
                coeffs[k - 1] += k as f64 * c;
            }
        }
        while coeffs.len() > 1 && coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        PolyExpTerm {
            coeffs,
            rate: self.rate,
        }
    }
}

/// One piece of the input: active from `start` until the next piece starts
/// (the last piece extends to the end of the horizon). `channels[i]` is the
/// term list of input channel `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct InputPiece {
    pub start: f64,
    pub channels: Vec<Vec<PolyExpTerm>>,
}

/// Piecewise polynomial-exponential input signal.
#[derive(Debug, Clone, PartialEq)]
pub struct InputSignal {
    pieces: Vec<InputPiece>,
}

/// Which one-sided limit to evaluate at a boundary point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

impl InputSignal {
    pub fn new(pieces: Vec<InputPiece>) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::InvalidInput("no input pieces".to_string()));
        }
        let m = pieces[0].channels.len();
        for piece in &pieces {
            if piece.channels.len() != m {
                return Err(Error::InvalidInput(
                    "inconsistent channel counts across pieces".to_string(),
                ));
            }
            if !piece.start.is_finite() {
                return Err(Error::InvalidInput("non-finite piece start".to_string()));
            }
            for terms in &piece.channels {
                for term in terms {
                    if !term.rate.is_finite() || term.coeffs.iter().any(|c| !c.is_finite()) {
                        return Err(Error::InvalidInput("non-finite term data".to_string()));
                    }
                }
            }
        }
        for w in pieces.windows(2) {
            if w[1].start <= w[0].start {
                return Err(Error::InvalidInput(
                    "piece start times must increase strictly".to_string(),
                ));
            }
        }
        Ok(InputSignal { pieces })
    }

    /// Constant input on `[start, ∞)`.
    pub fn constant(values: &[f64], start: f64) -> Self {
        InputSignal {
            pieces: vec![InputPiece {
                start,
                channels: values
                    .iter()
                    .map(|&v| {
                        vec![PolyExpTerm {
                            coeffs: vec![v],
                            rate: 0.0,
                        }]
                    })
                    .collect(),
            }],
        }
    }

    pub fn zero(m: usize, start: f64) -> Self {
        Self::constant(&vec![0.0; m], start)
    }

    pub fn channels(&self) -> usize {
        self.pieces[0].channels.len()
    }

    pub fn start(&self) -> f64 {
        self.pieces[0].start
    }

    pub fn pieces(&self) -> &[InputPiece] {
        &self.pieces
    }

    fn piece_for(&self, t: f64, side: Side) -> Result<&InputPiece> {
        let admissible = |start: f64| match side {
            Side::Right => start <= t,
            Side::Left => start < t,
        };
        self.pieces
            .iter()
            .rev()
            .find(|p| admissible(p.start))
            .ok_or(Error::OutOfHorizon {
                t,
                start: self.start(),
                end: f64::INFINITY,
            })
    }

    /// Evaluate the derivative of the given order, channel-wise, exactly.
    pub fn eval_deriv(&self, t: f64, side: Side, order: usize) -> Result<DVector<f64>> {
        let piece = self.piece_for(t, side)?;
        let s = t - piece.start;
        let mut out = DVector::zeros(piece.channels.len());
        for (i, terms) in piece.channels.iter().enumerate() {
            let mut acc = 0.0;
            for term in terms {
                let mut d = term.clone();
                for _ in 0..order {
                    d = d.derivative();
                }
                acc += d.eval(s);
            }
            out[i] = acc;
        }
        Ok(out)
    }

    /// Piece boundaries strictly inside `(a, b)`, in increasing order.
    fn boundaries_in(&self, a: f64, b: f64) -> Vec<f64> {
        self.pieces
            .iter()
            .map(|p| p.start)
            .filter(|&s| s > a && s < b)
            .collect()
    }
}

/// Stacked derivative vector `U_q(t) = [u; u'; ...; u^{(nu-1)}]` for the
/// given mode, evaluated on the requested side; empty when `nu = 0`.
pub fn input_stack(
    u: &InputSignal,
    mode: &ModeDynamics,
    t: f64,
    side: Side,
) -> Result<DVector<f64>> {
    let m = u.channels();
    let mut out = DVector::zeros(m * mode.nu);
    for order in 0..mode.nu {
        let v = u.eval_deriv(t, side, order)?;
        out.rows_mut(order * m, m).copy_from(&v);
    }
    Ok(out)
}

/// One-sided limits recorded at a switching instant.
#[derive(Debug, Clone)]
pub struct SwitchRecord {
    pub t: f64,
    pub z_minus: DVector<f64>,
    pub z_plus: DVector<f64>,
    pub y_minus: DVector<f64>,
    pub y_plus: DVector<f64>,
}

/// Coefficient of the Dirac derivative of the given order in the output at
/// a switching instant. Structurally vanishing coefficients are kept and
/// flagged rather than dropped.
#[derive(Debug, Clone)]
pub struct ImpulseCoefficient {
    pub order: usize,
    pub value: DVector<f64>,
    pub numerically_zero: bool,
}

#[derive(Debug, Clone)]
pub struct ImpulseRecord {
    pub t: f64,
    pub coefficients: Vec<ImpulseCoefficient>,
}

/// Simulation result: smooth samples, one-sided limits at the switching
/// instants, and the output impulse records.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub samples: Vec<(f64, DVector<f64>, DVector<f64>)>,
    pub switch_records: Vec<SwitchRecord>,
    pub impulses: Vec<ImpulseRecord>,
}

impl Trajectory {
    pub fn final_state(&self) -> &DVector<f64> {
        &self.samples.last().expect("non-empty trajectory").1
    }

    pub fn max_output_abs(&self) -> f64 {
        self.samples
            .iter()
            .map(|(_, _, y)| y.amax())
            .fold(0.0, f64::max)
    }

    pub fn max_impulse_abs(&self) -> f64 {
        self.impulses
            .iter()
            .flat_map(|r| r.coefficients.iter())
            .map(|c| if c.value.is_empty() { 0.0 } else { c.value.amax() })
            .fold(0.0, f64::max)
    }
}

/// 6-point Gauss–Legendre nodes and weights on [-1, 1].
const GL_NODES: [f64; 6] = [
    -0.932469514203152,
    -0.661209386466265,
    -0.238619186083197,
    0.238619186083197,
    0.661209386466265,
    0.932469514203152,
];
const GL_WEIGHTS: [f64; 6] = [
    0.171324492379170,
    0.360761573048139,
    0.467913934572691,
    0.467913934572691,
    0.360761573048139,
    0.171324492379170,
];

#[derive(Debug, Clone, Copy)]
struct SimOptions {
    impulsive_route: bool,
}

/// Simulate with the input-state-dependent jump rule
/// `z(t_k+) = Pi (z(t_k-) + JB_{prev} U_{prev}(t_k-))`.
pub fn simulate(
    jos: &JumpOdeSystem,
    q: &SwitchingSignal,
    u: &InputSignal,
    dt: f64,
) -> Result<Trajectory> {
    run(jos, q, u, dt, None, SimOptions { impulsive_route: false })
}

/// Simulate the equivalent formulation with state-only jumps and an
/// impulsive augmented input: the jump applies `Pi z(t_k-)` and the Dirac
/// input contributes `e^{A (t - t_k)} Pi JB_{prev} U_{prev}(t_k-)` to the
/// flow, integrated analytically. The state path coincides with
/// [`simulate`].
pub fn simulate_impulsive(
    jos: &JumpOdeSystem,
    q: &SwitchingSignal,
    u: &InputSignal,
    dt: f64,
) -> Result<Trajectory> {
    run(jos, q, u, dt, None, SimOptions { impulsive_route: true })
}

/// Simulate from a given post-initial state `z(t0+)`; no jump is applied at
/// the start. Used for restart consistency and observability probing.
pub fn simulate_from(
    jos: &JumpOdeSystem,
    q: &SwitchingSignal,
    u: &InputSignal,
    dt: f64,
    z0: &DVector<f64>,
) -> Result<Trajectory> {
    if z0.len() != jos.state_dim() {
        return Err(Error::DimensionMismatch(format!(
            "initial state has length {}, expected {}",
            z0.len(),
            jos.state_dim()
        )));
    }
    run(
        jos,
        q,
        u,
        dt,
        Some(z0.clone()),
        SimOptions { impulsive_route: false },
    )
}

fn run(
    jos: &JumpOdeSystem,
    q: &SwitchingSignal,
    u: &InputSignal,
    dt: f64,
    initial_state: Option<DVector<f64>>,
    opts: SimOptions,
) -> Result<Trajectory> {
    if !dt.is_finite() || dt <= 0.0 {
        return Err(Error::InvalidInput(format!("step size dt = {dt} must be positive")));
    }
    if u.channels() != jos.input_dim() {
        return Err(Error::DimensionMismatch(format!(
            "input has {} channels, system expects {}",
            u.channels(),
            jos.input_dim()
        )));
    }
    for &(_, mode) in q.entries() {
        if mode >= jos.mode_count() {
            return Err(Error::InvalidSignal(format!(
                "mode index {} out of range",
                mode + 1
            )));
        }
    }
    if u.start() > q.t0() {
        return Err(Error::OutOfHorizon {
            t: q.t0(),
            start: u.start(),
            end: f64::INFINITY,
        });
    }

    let n = jos.state_dim();
    let k_last = q.switch_count();
    let mut samples = Vec::new();
    let mut switch_records = Vec::new();
    let mut impulses = Vec::new();

    let mut z_minus = DVector::zeros(n);
    for k in 0..=k_last {
        let t_k = q.entries()[k].0;
        let t_next = if k < k_last { q.entries()[k + 1].0 } else { q.t_end };
        let mode = &jos.modes[q.mode_at(k)];

        // Jump rule at t_k and impulse bookkeeping.
        let (flow_init, record) = if k == 0 {
            match &initial_state {
                Some(z0) => {
                    let y0 = output(mode, z0, u, t_k, Side::Right)?;
                    (
                        z0.clone(),
                        SwitchRecord {
                            t: t_k,
                            z_minus: z0.clone(),
                            z_plus: z0.clone(),
                            y_minus: y0.clone(),
                            y_plus: y0,
                        },
                    )
                }
                None => {
                    // Cold start: z(t0-) = 0 and no prior mode, so the jump
                    // carries no input term.
                    let z_plus = &mode.pi * &z_minus;
                    let y_plus = output(mode, &z_plus, u, t_k, Side::Right)?;
                    (
                        z_plus.clone(),
                        SwitchRecord {
                            t: t_k,
                            z_minus: z_minus.clone(),
                            z_plus,
                            y_minus: DVector::zeros(jos.output_dim()),
                            y_plus,
                        },
                    )
                }
            }
        } else {
            let prev = &jos.modes[q.mode_at(k - 1)];
            let u_prev_minus = input_stack(u, prev, t_k, Side::Left)?;
            let u_new_plus = input_stack(u, mode, t_k, Side::Right)?;
            let carried = &prev.jump_b * &u_prev_minus;

            let flow_init = if opts.impulsive_route {
                // State-only jump plus the analytically integrated Dirac
                // contribution of the augmented input.
                &mode.pi * &z_minus + &mode.pi * &carried
            } else {
                &mode.pi * (&z_minus + &carried)
            };

            let y_minus = output(prev, &z_minus, u, t_k, Side::Left)?;
            let y_plus = output(mode, &flow_init, u, t_k, Side::Right)?;

            // Dirac derivative coefficients of the output at t_k, orders
            // 1..nu-1 of the activating mode.
            let entering = &mode.jump_b * &u_new_plus;
            let scale = 1.0 + z_minus.norm() + entering.norm() + carried.norm();
            let mut coefficients = Vec::new();
            for order in 1..mode.nu {
                let block = mode.imp_c_block(order);
                let value = &block * (&z_minus - (&entering - &carried));
                let numerically_zero = value.norm() <= 1e-12 * scale;
                coefficients.push(ImpulseCoefficient {
                    order,
                    value,
                    numerically_zero,
                });
            }
            impulses.push(ImpulseRecord {
                t: t_k,
                coefficients,
            });

            (
                flow_init.clone(),
                SwitchRecord {
                    t: t_k,
                    z_minus: z_minus.clone(),
                    z_plus: flow_init,
                    y_minus,
                    y_plus,
                },
            )
        };
        // Flow across [t_k, t_next], splitting at interior input-piece
        // boundaries so the quadrature only ever sees smooth integrands.
        let mut z = flow_init;
        samples.push((t_k, z.clone(), record.y_plus.clone()));
        switch_records.push(record);

        let mut seg_starts = vec![t_k];
        seg_starts.extend(u.boundaries_in(t_k, t_next));
        seg_starts.push(t_next);

        for seg in seg_starts.windows(2) {
            let (a, b) = (seg[0], seg[1]);
            let steps = ((b - a) / dt).ceil().max(1.0) as usize;
            let h = (b - a) / steps as f64;
            let e_h = expm(&mode.a_diff, h)?;
            let node_maps: Vec<DMatrix<f64>> = GL_NODES
                .iter()
                .map(|&x| Ok(expm(&mode.a_diff, h * (1.0 - x) / 2.0)? * &mode.b_diff))
                .collect::<Result<_>>()?;

            for step in 0..steps {
                let t_a = a + step as f64 * h;
                let t_b = if step + 1 == steps { b } else { t_a + h };
                let mut z_next = &e_h * &z;
                for (j, map) in node_maps.iter().enumerate() {
                    let s = t_a + h * (GL_NODES[j] + 1.0) / 2.0;
                    let u_val = u.eval_deriv(s, Side::Right, 0)?;
                    z_next += map * u_val * (GL_WEIGHTS[j] * h / 2.0);
                }
                z = z_next;
                let is_horizon_end = k == k_last && step + 1 == steps && seg[1] == t_next;
                let side = if is_horizon_end { Side::Left } else { Side::Right };
                let y = output(mode, &z, u, t_b, side)?;
                samples.push((t_b, z.clone(), y));
            }
        }
        // The value just computed at t_next is the left limit for the next
        // interval; drop the duplicated time sample there if a switch follows.
        z_minus = z;
        if k < k_last {
            samples.pop();
        }
    }

    Ok(Trajectory {
        samples,
        switch_records,
        impulses,
    })
}

/// Smooth output `y = C_diff z + D U(t)`.
fn output(
    mode: &ModeDynamics,
    z: &DVector<f64>,
    u: &InputSignal,
    t: f64,
    side: Side,
) -> Result<DVector<f64>> {
    let stack = input_stack(u, mode, t, side)?;
    Ok(&mode.c_diff * z + &mode.feedthrough * stack)
}
