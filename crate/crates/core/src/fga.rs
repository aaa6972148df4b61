//! Single FGA-SH trajectories: Hamiltonian flow of the beam variables on the
//! current surface, stochastic hops, phase and weight bookkeeping.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::error::{FgaError, Result};
use crate::model::{ModelPotential, SurfaceJet};

/// Jacobian `[[∂qQ, ∂pQ], [∂qP, ∂pP]]` of the flow map.
pub type Jacobian = [[f64; 2]; 2];

const IDENTITY: Jacobian = [[1.0, 0.0], [0.0, 1.0]];

/// How the hop times of a trajectory are drawn.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HopMode {
    /// One uniform per step; hop with probability `dt * rate`.
    #[default]
    Bernoulli,
    /// Exponential clock on the integrated rate; hops land on step boundaries.
    ExactThinning,
}

/// One FGA-SH trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryState {
    pub t: f64,
    pub surface: usize,
    pub q: f64,
    pub p: f64,
    pub s: f64,
    pub a: Complex64,
    pub jac: Jacobian,
    /// Product of `tau / |tau|` over the hops so far (the full `tau` product in prescribed mode).
    pub hop_phase: Complex64,
    /// `∫ |tau| ds` along the path.
    pub log_weight: f64,
    pub hops: Vec<f64>,
    /// Hop rate `|tau|` at the current point.
    pub rate: f64,
    /// Integrated rate still to go before the next hop (thinning mode only).
    pub clock: f64,
    /// Surface data at `(q, jet)`, reused by the first RK4 stage.
    cache: Option<(f64, SurfaceJet)>,
}

impl TrajectoryState {
    /// Fresh trajectory on surface 0 with the identity Jacobian.
    pub fn new(q: f64, p: f64, amplitude: Complex64, model: &ModelPotential) -> Result<Self> {
        let jet = model.surface_jet(q)?;
        Ok(TrajectoryState {
            t: 0.0,
            surface: 0,
            q,
            p,
            s: 0.0,
            a: amplitude,
            jac: IDENTITY,
            hop_phase: Complex64::new(1.0, 0.0),
            log_weight: 0.0,
            hops: Vec::new(),
            rate: hop_coefficient(&jet, 0, p).norm(),
            clock: f64::INFINITY,
            cache: Some((q, jet)),
        })
    }

    #[inline]
    fn jet(&self, model: &ModelPotential) -> Result<SurfaceJet> {
        match self.cache {
            Some((q, jet)) if q == self.q => Ok(jet),
            _ => model.surface_jet(self.q),
        }
    }

    /// `Z = (∂qQ + ∂pP) + i(∂qP − ∂pQ)`.
    pub fn z(&self) -> Complex64 {
        z_of(&self.jac)
    }

    /// `‖JᵀΩJ − Ω‖_∞` with `Ω = [[0, 1], [−1, 0]]`.
    pub fn symplectic_defect(&self) -> f64 {
        // for 2×2, JᵀΩJ = det(J)·Ω
        let j = &self.jac;
        (j[0][0] * j[1][1] - j[0][1] * j[1][0] - 1.0).abs()
    }

    fn flow(&self) -> Flow {
        Flow {
            q: self.q,
            p: self.p,
            s: self.s,
            a: self.a,
            j: self.jac,
        }
    }

    fn set_flow(&mut self, f: Flow) {
        self.q = f.q;
        self.p = f.p;
        self.s = f.s;
        self.a = f.a;
        self.jac = f.j;
    }
}

#[inline]
fn z_of(j: &Jacobian) -> Complex64 {
    Complex64::new(j[0][0] + j[1][1], j[1][0] - j[0][1])
}

/// Deterministic part of the state, integrated by RK4.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Flow {
    q: f64,
    p: f64,
    s: f64,
    a: Complex64,
    j: Jacobian,
}

impl Flow {
    #[inline]
    fn axpy(&self, h: f64, d: &Flow) -> Flow {
        Flow {
            q: self.q + h * d.q,
            p: self.p + h * d.p,
            s: self.s + h * d.s,
            a: self.a + d.a * h,
            j: [
                [self.j[0][0] + h * d.j[0][0], self.j[0][1] + h * d.j[0][1]],
                [self.j[1][0] + h * d.j[1][0], self.j[1][1] + h * d.j[1][1]],
            ],
        }
    }
}

/// Time derivatives of the beam variables.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowDerivative {
    pub q: f64,
    pub p: f64,
    pub s: f64,
    pub a: Complex64,
    pub jac: Jacobian,
}

#[inline]
fn derivative(f: &Flow, surface: usize, model: &ModelPotential, t: f64) -> Result<Flow> {
    derivative_at(f, surface, &model.surface_jet(f.q)?, t)
}

#[inline]
fn derivative_at(f: &Flow, surface: usize, jet: &SurfaceJet, t: f64) -> Result<Flow> {
    let (e, de, d2e) = (jet.energy[surface], jet.grad[surface], jet.hess[surface]);
    let j = &f.j;
    let z = z_of(j);
    let norm = j[0][0].abs() + j[0][1].abs() + j[1][0].abs() + j[1][1].abs();
    if !(z.norm_sqr() >= 1e-24 * norm * norm) {
        return Err(FgaError::IllConditionedZ {
            t,
            modulus: z.norm(),
        });
    }
    // ∂z = ∂q − i∂p applied to P and Q
    let dz_p = Complex64::new(j[1][0], -j[1][1]);
    let dz_q = Complex64::new(j[0][0], -j[0][1]);
    let i = Complex64::new(0.0, 1.0);
    let da = f.a * 0.5 * (dz_p - i * dz_q * d2e) / z;
    Ok(Flow {
        q: f.p,
        p: -de,
        s: 0.5 * f.p * f.p - e,
        a: da,
        j: [[j[1][0], j[1][1]], [-d2e * j[0][0], -d2e * j[0][1]]],
    })
}

/// Right-hand side of the beam equations on the current surface.
pub fn time_derivative(state: &TrajectoryState, model: &ModelPotential) -> Result<FlowDerivative> {
    let d = derivative_at(&state.flow(), state.surface, &state.jet(model)?, state.t)?;
    Ok(FlowDerivative {
        q: d.q,
        p: d.p,
        s: d.s,
        a: d.a,
        jac: d.j,
    })
}

#[inline]
fn rk4_flow(
    f: &Flow,
    surface: usize,
    model: &ModelPotential,
    jet: &SurfaceJet,
    t: f64,
    dt: f64,
) -> Result<Flow> {
    let k1 = derivative_at(f, surface, jet, t)?;
    let k2 = derivative(&f.axpy(0.5 * dt, &k1), surface, model, t)?;
    let k3 = derivative(&f.axpy(0.5 * dt, &k2), surface, model, t)?;
    let k4 = derivative(&f.axpy(dt, &k3), surface, model, t)?;
    let h = dt / 6.0;
    let mut out = f.axpy(h, &k1);
    out = out.axpy(2.0 * h, &k2);
    out = out.axpy(2.0 * h, &k3);
    Ok(out.axpy(h, &k4))
}

/// Classical RK4 step of `(Q, P, S, A, J)`; hop bookkeeping is untouched.
pub fn rk4_step(
    state: &TrajectoryState,
    dt: f64,
    model: &ModelPotential,
) -> Result<TrajectoryState> {
    let mut out = state.clone();
    if dt == 0.0 {
        return Ok(out);
    }
    out.set_flow(rk4_flow(
        &state.flow(),
        state.surface,
        model,
        &state.jet(model)?,
        state.t,
        dt,
    )?);
    out.t = state.t + dt;
    Ok(out)
}

/// `tau = −P · d_{other,current}` for a trajectory on `surface`.
#[inline]
pub fn hop_coefficient(jet: &SurfaceJet, surface: usize, p: f64) -> Complex64 {
    Complex64::new(-p * jet.coupling_from(surface), 0.0)
}

/// `(|tau|, tau)` at the current point.
pub fn hop_rate(state: &TrajectoryState, model: &ModelPotential) -> Result<(f64, Complex64)> {
    let jet = model.surface_jet(state.q)?;
    let tau = hop_coefficient(&jet, state.surface, state.p);
    Ok((tau.norm(), tau))
}

/// Flow step plus weight accumulation, ending at time `t_next`.
///
/// The rate is the same on both surfaces, so it does not change at a hop.
pub(crate) fn advance(
    state: &mut TrajectoryState,
    t_next: f64,
    model: &ModelPotential,
) -> Result<()> {
    let dt = t_next - state.t;
    if dt <= 0.0 {
        return Ok(());
    }
    let f = rk4_flow(
        &state.flow(),
        state.surface,
        model,
        &state.jet(model)?,
        state.t,
        dt,
    )?;
    state.set_flow(f);
    let jet = model.surface_jet(state.q)?;
    state.cache = Some((state.q, jet));
    let rate = hop_coefficient(&jet, state.surface, state.p).norm();
    let increment = 0.5 * dt * (state.rate + rate);
    state.log_weight += increment;
    state.clock -= increment;
    state.rate = rate;
    state.t = t_next;
    let probability = dt * rate;
    if probability >= 1.0 {
        return Err(FgaError::HopProbabilityOverflow {
            t: t_next,
            probability,
        });
    }
    Ok(())
}

/// Switches surface at the current point and multiplies in the unit phase of `tau`.
pub(crate) fn hop(state: &mut TrajectoryState, model: &ModelPotential) -> Result<()> {
    let jet = state.jet(model)?;
    let tau = hop_coefficient(&jet, state.surface, state.p);
    state.hop_phase *= tau / tau.norm();
    state.surface ^= 1;
    state.hops.push(state.t);
    Ok(())
}

/// Draws the next exponential clock.
#[inline]
pub(crate) fn draw_clock<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    -(1.0 - u).ln()
}

/// Random input consumed by one step in the given mode, and whether it fires.
#[inline]
pub(crate) fn hop_fires<R: Rng + ?Sized>(
    state: &TrajectoryState,
    dt: f64,
    mode: HopMode,
    rng: &mut R,
) -> bool {
    match mode {
        HopMode::Bernoulli => {
            let u: f64 = rng.random();
            u < dt * state.rate
        }
        HopMode::ExactThinning => state.clock <= 0.0,
    }
}

/// One stochastic step ending at `t_next`: RK4, weight update, hop test.
pub fn stochastic_step_to<R: Rng + ?Sized>(
    state: &mut TrajectoryState,
    t_next: f64,
    model: &ModelPotential,
    mode: HopMode,
    rng: &mut R,
) -> Result<()> {
    let dt = t_next - state.t;
    if dt <= 0.0 {
        return Ok(());
    }
    advance(state, t_next, model)?;
    if hop_fires(state, dt, mode, rng) {
        hop(state, model)?;
        if mode == HopMode::ExactThinning {
            state.clock = draw_clock(rng);
        }
    }
    Ok(())
}

/// [`stochastic_step_to`] with a step length.
pub fn stochastic_step<R: Rng + ?Sized>(
    state: &mut TrajectoryState,
    dt: f64,
    model: &ModelPotential,
    mode: HopMode,
    rng: &mut R,
) -> Result<()> {
    let t_next = state.t + dt;
    stochastic_step_to(state, t_next, model, mode, rng)
}

/// Step boundaries `0 = t_0 < t_1 < ... < t_n = t_final`; the last step may be shorter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    pub dt: f64,
    pub t_final: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(dt: f64, t_final: f64) -> Result<Self> {
        if !(dt > 0.0) || !(t_final >= 0.0) || !dt.is_finite() || !t_final.is_finite() {
            return Err(FgaError::InvalidConfig(format!(
                "need dt > 0 and t_final >= 0 (got dt = {dt}, t_final = {t_final})"
            )));
        }
        let steps = (t_final / dt - 1e-9).ceil().max(0.0) as usize;
        Ok(TimeGrid { dt, t_final, steps })
    }

    #[inline]
    pub fn time(&self, k: usize) -> f64 {
        if k >= self.steps {
            self.t_final
        } else {
            k as f64 * self.dt
        }
    }

    /// Index of the step boundary closest to `t`.
    pub fn nearest(&self, t: f64) -> usize {
        ((t / self.dt).round().max(0.0) as usize).min(self.steps)
    }
}

/// Per-trajectory random stream: `seed` selects the key, `index` the stream.
pub fn trajectory_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Seed of replication `r` derived from the master seed (splitmix64 finalizer).
pub fn replication_seed(master: u64, r: u64) -> u64 {
    let mut z = master ^ r.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Starts the hop clock of a fresh trajectory.
pub(crate) fn arm<R: Rng + ?Sized>(state: &mut TrajectoryState, mode: HopMode, rng: &mut R) {
    if mode == HopMode::ExactThinning {
        state.clock = draw_clock(rng);
    }
}

/// Evolves one trajectory from `z0 = (q, p)` on surface 0 to `t_final`.
pub fn evolve(
    z0: (f64, f64),
    amplitude: Complex64,
    t_final: f64,
    dt: f64,
    model: &ModelPotential,
    mode: HopMode,
    rng: &mut ChaCha8Rng,
) -> Result<TrajectoryState> {
    let grid = TimeGrid::new(dt, t_final)?;
    let mut state = TrajectoryState::new(z0.0, z0.1, amplitude, model)?;
    arm(&mut state, mode, rng);
    for k in 1..=grid.steps {
        stochastic_step_to(&mut state, grid.time(k), model, mode, rng)?;
    }
    Ok(state)
}

/// Like [`evolve`], recording every step boundary (including `t = 0`).
pub fn evolve_traced(
    z0: (f64, f64),
    amplitude: Complex64,
    t_final: f64,
    dt: f64,
    model: &ModelPotential,
    mode: HopMode,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<TrajectoryState>> {
    let grid = TimeGrid::new(dt, t_final)?;
    let mut state = TrajectoryState::new(z0.0, z0.1, amplitude, model)?;
    arm(&mut state, mode, rng);
    let mut out = Vec::with_capacity(grid.steps + 1);
    out.push(state.clone());
    for k in 1..=grid.steps {
        stochastic_step_to(&mut state, grid.time(k), model, mode, rng)?;
        out.push(state.clone());
    }
    Ok(out)
}

/// Deterministic evolution with hops at the step boundaries nearest to `hop_times`.
///
/// `hop_phase` collects the full product of the hopping coefficients and no
/// weight is applied.
pub fn evolve_prescribed(
    z0: (f64, f64),
    amplitude: Complex64,
    t_final: f64,
    dt: f64,
    model: &ModelPotential,
    hop_times: &[f64],
) -> Result<TrajectoryState> {
    if hop_times.windows(2).any(|w| !(w[0] < w[1]))
        || hop_times.iter().any(|&t| !(0.0..=t_final).contains(&t))
    {
        return Err(FgaError::InvalidConfig(
            "hop times must be strictly increasing within [0, t_final]".into(),
        ));
    }
    let grid = TimeGrid::new(dt, t_final)?;
    let mut state = TrajectoryState::new(z0.0, z0.1, amplitude, model)?;
    let mut pending = hop_times.iter().map(|&t| grid.nearest(t)).peekable();
    let mut k = 0;
    loop {
        while pending.peek() == Some(&k) {
            pending.next();
            prescribed_hop(&mut state, model)?;
        }
        if k == grid.steps {
            break;
        }
        k += 1;
        let f = rk4_flow(
            &state.flow(),
            state.surface,
            model,
            &state.jet(model)?,
            state.t,
            grid.time(k) - state.t,
        )?;
        state.set_flow(f);
        state.t = grid.time(k);
    }
    state.rate = hop_rate(&state, model)?.0;
    Ok(state)
}

/// Hop that multiplies in the full coefficient `tau`.
pub(crate) fn prescribed_hop(state: &mut TrajectoryState, model: &ModelPotential) -> Result<()> {
    let jet = state.jet(model)?;
    state.hop_phase *= hop_coefficient(&jet, state.surface, state.p);
    state.surface ^= 1;
    state.hops.push(state.t);
    Ok(())
}

/// Writes a trace as CSV: `t,surface,Q,P,re_A,im_A,log_weight`.
pub fn write_trace<W: Write>(out: W, trace: &[TrajectoryState]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "surface", "Q", "P", "re_A", "im_A", "log_weight"])?;
    for s in trace {
        w.write_record(&[
            s.t.to_string(),
            s.surface.to_string(),
            s.q.to_string(),
            s.p.to_string(),
            s.a.re.to_string(),
            s.a.im.to_string(),
            s.log_weight.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelKind;

    fn harmonic() -> ModelPotential {
        ModelPotential::new(ModelKind::Harmonic { gap: 1.0 }, 1.0).unwrap()
    }

    fn flat() -> ModelPotential {
        ModelPotential::new(
            ModelKind::UniformTwist {
                gap: 1.0,
                twist: 0.0,
            },
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn free_particle_amplitude_matches_closed_form() {
        let model = flat();
        let a0 = Complex64::new(0.3, -0.7);
        let mut s = TrajectoryState::new(0.2, 1.0, a0, &model).unwrap();
        for _ in 0..1000 {
            s = rk4_step(&s, 1e-3, &model).unwrap();
        }
        let t = s.t;
        let exact = a0 * (Complex64::new(2.0, -t) / 2.0).sqrt();
        assert!((s.a - exact).norm() < 1e-8, "{} vs {}", s.a, exact);
    }

    #[test]
    fn harmonic_flow_matches_closed_form() {
        let model = harmonic();
        let mut s = TrajectoryState::new(1.0, 0.0, Complex64::new(1.0, 0.0), &model).unwrap();
        for _ in 0..100 {
            s = rk4_step(&s, 1e-2, &model).unwrap();
        }
        let t = s.t;
        assert!((s.q - t.cos()).abs() < 1e-8);
        assert!((s.p + t.sin()).abs() < 1e-8);
        assert!((s.s + (2.0 * t).sin() / 4.0).abs() < 1e-8);
    }

    #[test]
    fn initial_derivative() {
        let model = harmonic();
        let s = TrajectoryState::new(0.5, 2.0, Complex64::new(1.0, 0.0), &model).unwrap();
        assert_eq!(s.z(), Complex64::new(2.0, 0.0));
        let d = time_derivative(&s, &model).unwrap();
        assert!((d.s - (2.0 - 0.125)).abs() < 1e-15);
        assert_eq!(d.q, 2.0);
        assert_eq!(d.p, -0.5);
    }

    #[test]
    fn zero_step_is_identity() {
        let model = harmonic();
        let s = TrajectoryState::new(0.5, 2.0, Complex64::new(1.0, 0.0), &model).unwrap();
        assert_eq!(rk4_step(&s, 0.0, &model).unwrap(), s);
    }

    #[test]
    fn symplectic_defect_is_fourth_order() {
        let model = ModelPotential::from_name("simple_avoided", 1.0 / 16.0).unwrap();
        let defect = |dt: f64| {
            let mut s = TrajectoryState::new(-1.0, 2.0, Complex64::new(1.0, 0.0), &model).unwrap();
            let n = (1.0 / dt).round() as usize;
            for _ in 0..n {
                s = rk4_step(&s, dt, &model).unwrap();
            }
            s.symplectic_defect()
        };
        let (d1, d2) = (defect(0.02), defect(0.01));
        let ratio = d1 / d2;
        assert!(
            ratio > 10.0 && ratio < 40.0,
            "ratio {ratio} ({d1:e}, {d2:e})"
        );
    }

    #[test]
    fn hop_rate_examples() {
        let conical = ModelPotential::from_name("conical", 0.1).unwrap();
        let mut s = TrajectoryState::new(0.0, 2.0, Complex64::new(1.0, 0.0), &conical).unwrap();
        let (rate, tau) = hop_rate(&s, &conical).unwrap();
        assert!((rate - 10.0).abs() < 1e-12);
        assert!((tau.re + 10.0).abs() < 1e-12);
        s.surface = 1;
        let (rate1, tau1) = hop_rate(&s, &conical).unwrap();
        assert_eq!(rate, rate1);
        assert_eq!(tau1, -tau);
        s.p = 0.0;
        assert_eq!(hop_rate(&s, &conical).unwrap().0, 0.0);
    }

    #[test]
    fn uncoupled_model_never_hops() {
        let model = harmonic();
        let mut rng = trajectory_rng(1, 0);
        let s = evolve(
            (0.3, 1.0),
            Complex64::new(1.0, 0.0),
            1.0,
            1.0 / 512.0,
            &model,
            HopMode::Bernoulli,
            &mut rng,
        )
        .unwrap();
        assert!(s.hops.is_empty());
        assert_eq!(s.log_weight, 0.0);
        assert_eq!(s.hop_phase, Complex64::new(1.0, 0.0));
    }

    #[test]
    fn same_seed_same_state() {
        let model = ModelPotential::from_name("simple_avoided", 1.0 / 16.0).unwrap();
        let run = || {
            let mut rng = trajectory_rng(42, 7);
            evolve(
                (-1.0, 2.0),
                Complex64::new(1.0, 0.0),
                1.0,
                1.0 / 512.0,
                &model,
                HopMode::Bernoulli,
                &mut rng,
            )
            .unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn hops_are_continuous_and_consistent() {
        let model = ModelPotential::from_name("simple_avoided", 1.0 / 16.0).unwrap();
        let mut hopped = 0;
        for i in 0..200 {
            let mut rng = trajectory_rng(5, i);
            let trace = evolve_traced(
                (-1.0, 2.0),
                Complex64::new(1.0, 0.0),
                1.0,
                1.0 / 512.0,
                &model,
                HopMode::Bernoulli,
                &mut rng,
            )
            .unwrap();
            let last = trace.last().unwrap();
            assert_eq!(last.surface, last.hops.len() % 2);
            assert!(last.hops.windows(2).all(|w| w[0] < w[1]));
            assert!((last.hop_phase.norm() - 1.0).abs() < 1e-12);
            assert!(trace.windows(2).all(|w| w[1].log_weight >= w[0].log_weight));
            for w in trace.windows(2) {
                if w[1].surface != w[0].surface {
                    hopped += 1;
                    assert!(w[1].q.abs() < 1.5);
                    // momentum only moves by the force over one step
                    assert!((w[1].p - w[0].p).abs() < 1e-2);
                }
            }
        }
        assert!(hopped > 0);
    }

    #[test]
    fn prescribed_without_hops_matches_plain_flow() {
        let model = ModelPotential::from_name("simple_avoided", 1.0 / 16.0).unwrap();
        let s = evolve_prescribed(
            (-1.0, 2.0),
            Complex64::new(1.0, 0.0),
            1.0,
            1.0 / 512.0,
            &model,
            &[],
        )
        .unwrap();
        let mut r = TrajectoryState::new(-1.0, 2.0, Complex64::new(1.0, 0.0), &model).unwrap();
        for _ in 0..512 {
            r = rk4_step(&r, 1.0 / 512.0, &model).unwrap();
        }
        assert!((s.q - r.q).abs() < 1e-12 && (s.a - r.a).norm() < 1e-12);
        assert_eq!(s.log_weight, 0.0);
        assert_eq!(s.surface, 0);

        let end = evolve_prescribed(
            (-1.0, 2.0),
            Complex64::new(1.0, 0.0),
            1.0,
            1.0 / 512.0,
            &model,
            &[1.0],
        )
        .unwrap();
        assert_eq!(end.surface, 1);
        assert_eq!(end.q, s.q);
        let jet = model.surface_jet(s.q).unwrap();
        assert_eq!(end.hop_phase, Complex64::new(s.p * jet.d01, 0.0));
    }

    #[test]
    fn overflowing_step_is_rejected() {
        let model = ModelPotential::from_name("conical", 0.01).unwrap();
        let mut rng = trajectory_rng(0, 0);
        let err = evolve(
            (-0.1, 2.0),
            Complex64::new(1.0, 0.0),
            1.0,
            0.05,
            &model,
            HopMode::Bernoulli,
            &mut rng,
        )
        .unwrap_err();
        assert!(matches!(err, FgaError::HopProbabilityOverflow { .. }));
    }

    #[test]
    fn time_grid_handles_partial_last_step() {
        let g = TimeGrid::new(0.3, 1.0).unwrap();
        assert_eq!(g.steps, 4);
        assert_eq!(g.time(3), 0.8999999999999999);
        assert_eq!(g.time(4), 1.0);
        assert_eq!(TimeGrid::new(0.25, 1.0).unwrap().steps, 4);
        assert_eq!(TimeGrid::new(0.25, 0.0).unwrap().steps, 0);
    }
}
