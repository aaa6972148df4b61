//! Wave fields assembled from trajectory ensembles, errors and replication statistics.

use num_complex::Complex64;
use serde::Serialize;
use std::f64::consts::PI;
use std::io::{Read, Write};

use crate::error::{FgaError, Result};
use crate::fga::{hop_coefficient, prescribed_hop, TimeGrid, TrajectoryState};
use crate::model::ModelPotential;
use crate::sampling::{Launch, UniformGrid};

/// Beams are dropped where `|x − Q| > BEAM_SIGMAS · sqrt(eps)`.
pub const BEAM_SIGMAS: f64 = 8.0;

/// The two adiabatic components on a real-space grid.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveField {
    pub x: UniformGrid,
    pub u0: Vec<Complex64>,
    pub u1: Vec<Complex64>,
    pub epsilon: f64,
}

/// `2π/n`-spaced grid on `[−π, π)`, the periodic layout shared with the reference solver.
pub fn periodic_grid(n: usize) -> UniformGrid {
    UniformGrid {
        start: -PI,
        step: 2.0 * PI / n as f64,
        len: n,
    }
}

impl WaveField {
    pub fn zeros(x: UniformGrid, epsilon: f64) -> Self {
        WaveField {
            x,
            u0: vec![Complex64::new(0.0, 0.0); x.len],
            u1: vec![Complex64::new(0.0, 0.0); x.len],
            epsilon,
        }
    }

    pub fn component(&self, k: usize) -> &[Complex64] {
        if k == 0 {
            &self.u0
        } else {
            &self.u1
        }
    }

    pub fn component_mut(&mut self, k: usize) -> &mut [Complex64] {
        if k == 0 {
            &mut self.u0
        } else {
            &mut self.u1
        }
    }

    /// `Σ |u_k|² dx`.
    pub fn norm_sq(&self, k: usize) -> f64 {
        self.component(k).iter().map(|u| u.norm_sqr()).sum::<f64>() * self.x.step
    }

    /// Adds `coeff · exp((i/eps)(P(x−Q) + (i/2)(x−Q)²))` to component `surface`.
    pub fn add_beam(&mut self, surface: usize, coeff: Complex64, q: f64, p: f64) {
        let eps = self.epsilon;
        let x = self.x;
        let range = x.window(q, BEAM_SIGMAS * eps.sqrt());
        if range.is_empty() {
            return;
        }
        let dx = x.step;
        let d0 = x.point(range.start) - q;
        // the exponent is quadratic in x, so consecutive ratios form a geometric sequence
        let mut value = coeff * Complex64::from_polar((-0.5 * d0 * d0 / eps).exp(), p * d0 / eps);
        let mut ratio =
            Complex64::from_polar((-(2.0 * d0 + dx) * dx / (2.0 * eps)).exp(), p * dx / eps);
        let curvature = (-dx * dx / eps).exp();
        for u in &mut self.component_mut(surface)[range] {
            *u += value;
            value *= ratio;
            ratio *= curvature;
        }
    }

    /// Adds the beam of a finished trajectory, scaled by `prefactor`.
    pub fn add_trajectory(&mut self, state: &TrajectoryState, prefactor: f64, weighted: bool) {
        self.add_trajectory_scaled(state, Complex64::new(prefactor, 0.0), weighted);
    }

    /// Adds the beam of a finished trajectory multiplied by a complex factor.
    pub fn add_trajectory_scaled(
        &mut self,
        state: &TrajectoryState,
        factor: Complex64,
        weighted: bool,
    ) {
        let weight = if weighted {
            state.log_weight.exp()
        } else {
            1.0
        };
        let coeff = state.a
            * state.hop_phase
            * factor
            * Complex64::from_polar(weight, state.s / self.epsilon);
        self.add_beam(state.surface, coeff, state.q, state.p);
    }

    pub fn add_assign(&mut self, other: &WaveField) -> Result<()> {
        if self.x != other.x {
            return Err(FgaError::MeshMismatch);
        }
        for (a, b) in self.u0.iter_mut().zip(&other.u0) {
            *a += b;
        }
        for (a, b) in self.u1.iter_mut().zip(&other.u1) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&mut self, s: f64) {
        self.u0
            .iter_mut()
            .chain(self.u1.iter_mut())
            .for_each(|u| *u *= s);
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "re_u0", "im_u0", "re_u1", "im_u1"])?;
        for (j, (a, b)) in self.u0.iter().zip(&self.u1).enumerate() {
            w.write_record(&[
                self.x.point(j).to_string(),
                a.re.to_string(),
                a.im.to_string(),
                b.re.to_string(),
                b.im.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a field written by [`WaveField::write_csv`]; the grid is rebuilt from the x column.
    pub fn read_csv<R: Read>(input: R, epsilon: f64) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let mut xs = Vec::new();
        let (mut u0, mut u1) = (Vec::new(), Vec::new());
        for rec in r.records() {
            let rec = rec?;
            let v: Vec<f64> = (0..5)
                .map(|i| {
                    rec.get(i)
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| FgaError::Io(format!("bad field row {rec:?}")))
                })
                .collect::<Result<_>>()?;
            xs.push(v[0]);
            u0.push(Complex64::new(v[1], v[2]));
            u1.push(Complex64::new(v[3], v[4]));
        }
        if xs.len() < 2 {
            return Err(FgaError::Io("field file has fewer than two rows".into()));
        }
        let step = (xs[xs.len() - 1] - xs[0]) / (xs.len() - 1) as f64;
        Ok(WaveField {
            x: UniformGrid {
                start: xs[0],
                step,
                len: xs.len(),
            },
            u0,
            u1,
            epsilon,
        })
    }
}

/// Sums the beams of `states` in order.
pub fn assemble(
    states: &[TrajectoryState],
    prefactor: f64,
    x: UniformGrid,
    epsilon: f64,
    weighted: bool,
) -> Result<WaveField> {
    let mut field = WaveField::zeros(x, epsilon);
    if let Some(first) = states.first() {
        for s in states {
            if s.t != first.t {
                return Err(FgaError::MixedFinalTimes {
                    expected: first.t,
                    found: s.t,
                });
            }
            field.add_trajectory(s, prefactor, weighted);
        }
    }
    Ok(field)
}

/// Per-component L² distance.
pub fn l2_error(field: &WaveField, reference: &WaveField) -> Result<(f64, f64)> {
    if !same_grid(&field.x, &reference.x) {
        return Err(FgaError::MeshMismatch);
    }
    let e = |a: &[Complex64], b: &[Complex64]| {
        (a.iter()
            .zip(b)
            .map(|(u, v)| (u - v).norm_sqr())
            .sum::<f64>()
            * field.x.step)
            .sqrt()
    };
    Ok((e(&field.u0, &reference.u0), e(&field.u1, &reference.u1)))
}

fn same_grid(a: &UniformGrid, b: &UniformGrid) -> bool {
    a.len == b.len
        && (a.start - b.start).abs() <= 1e-12 * (1.0 + a.start.abs())
        && (a.step - b.step).abs() <= 1e-12 * a.step
}

/// `‖u1‖² / (‖u0‖² + ‖u1‖²)`.
pub fn transition_rate(field: &WaveField) -> Result<f64> {
    let (n0, n1) = (field.norm_sq(0), field.norm_sq(1));
    if !(n0 + n1 > 0.0) {
        return Err(FgaError::ZeroField);
    }
    Ok(n1 / (n0 + n1))
}

/// Summary of one component over a set of configurations.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComponentStats {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub ci95: Vec<f64>,
    /// `rate[i]` compares configuration `i` with `i + 1`.
    pub rate: Vec<f64>,
}

/// Replication statistics for a parameter sweep (number of trajectories or `M`).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnsembleStats {
    pub label: String,
    pub params: Vec<f64>,
    pub replications: usize,
    pub e0: ComponentStats,
    pub e1: ComponentStats,
}

/// Mean and unbiased sample variance.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var)
}

/// `log(E_a / E_b) / log(param_b / param_a)`.
pub fn convergence_rate(param_a: f64, mean_a: f64, param_b: f64, mean_b: f64) -> f64 {
    (mean_a / mean_b).ln() / (param_b / param_a).ln()
}

/// Statistics of per-replication `(e0, e1)` errors for each configuration `(param, errors)`.
pub fn replication_stats(label: &str, configs: &[(f64, Vec<(f64, f64)>)]) -> Result<EnsembleStats> {
    let replications = configs.first().map_or(0, |c| c.1.len());
    if replications < 2 || configs.iter().any(|c| c.1.len() != replications) {
        return Err(FgaError::InvalidConfig(
            "statistics need the same number (>= 2) of replications per configuration".into(),
        ));
    }
    let params: Vec<f64> = configs.iter().map(|c| c.0).collect();
    let component = |k: usize| {
        let (mean, variance): (Vec<f64>, Vec<f64>) = configs
            .iter()
            .map(|c| {
                let xs: Vec<f64> = c.1.iter().map(|e| if k == 0 { e.0 } else { e.1 }).collect();
                mean_var(&xs)
            })
            .unzip();
        let ci95 = variance
            .iter()
            .map(|v| 1.96 * (v / replications as f64).sqrt())
            .collect();
        let rate = (1..params.len())
            .map(|i| convergence_rate(params[i - 1], mean[i - 1], params[i], mean[i]))
            .collect();
        ComponentStats {
            mean,
            variance,
            ci95,
            rate,
        }
    };
    Ok(EnsembleStats {
        label: label.to_string(),
        params: params.clone(),
        replications,
        e0: component(0),
        e1: component(1),
    })
}

impl EnsembleStats {
    /// Table layout: one column per configuration, rows
    /// `E(e0), Conv. Rate, Var(e0), E(e1), Conv. Rate, Var(e1)`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec![String::new()];
        header.extend(self.params.iter().map(|p| format!("{}={}", self.label, p)));
        w.write_record(&header)?;
        for (k, c) in [(0, &self.e0), (1, &self.e1)] {
            let mut row = vec![format!("E(e{k})")];
            row.extend(c.mean.iter().map(|v| format!("{v:.4e}")));
            w.write_record(&row)?;
            let mut row = vec!["Conv. Rate".to_string(), String::new()];
            row.extend(c.rate.iter().map(|v| format!("{v:.4}")));
            w.write_record(&row)?;
            let mut row = vec![format!("Var(e{k})")];
            row.extend(c.variance.iter().map(|v| format!("{v:.4e}")));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Number of trapezoid intervals per time dimension of the hop-time simplices.
pub const SIMPLEX_INTERVALS: usize = 64;

/// `(t C)^{n+1} / (n+1)! · e^{t C}`.
pub fn series_tail_bound(t: f64, c_tau: f64, n_max: usize) -> f64 {
    let x = t * c_tau;
    let mut term = 1.0;
    for k in 1..=n_max + 1 {
        term *= x / k as f64;
    }
    term * x.exp()
}

/// Direct evaluation of the hop-series terms `n = 0..=n_max` (`n_max <= 2`) by
/// trapezoid quadrature over ordered hop times, with deterministic trajectories.
///
/// `c_tau` bounds the hop rate along all paths and controls the truncation check.
#[allow(clippy::too_many_arguments)]
pub fn brute_force_series_oracle(
    launches: &[Launch],
    prefactor: f64,
    model: &ModelPotential,
    t_final: f64,
    dt: f64,
    x: UniformGrid,
    epsilon: f64,
    n_max: usize,
    c_tau: f64,
) -> Result<WaveField> {
    if n_max > 2 {
        return Err(FgaError::InvalidConfig("n_max must be at most 2".into()));
    }
    let bound = series_tail_bound(t_final, c_tau, n_max);
    if bound > 1e-3 {
        return Err(FgaError::TailTooLarge { bound });
    }
    let grid = TimeGrid::new(dt, t_final)?;
    let k = SIMPLEX_INTERVALS;
    let h = t_final / k as f64;
    // quadrature nodes snapped to step boundaries
    let nodes: Vec<usize> = (0..=k).map(|i| grid.nearest(i as f64 * h)).collect();
    let w = |i: usize, last: usize| if i == 0 || i == last { 0.5 * h } else { h };
    let mut field = WaveField::zeros(x, epsilon);
    for (index, l) in launches.iter().enumerate() {
        let wrap = |e: FgaError| e.in_trajectory(index);
        let start = TrajectoryState::new(l.q, l.p, l.amplitude, model).map_err(wrap)?;
        // surface-0 path sampled at the quadrature nodes
        let base = path_at_nodes(start, &grid, &nodes, 0, model).map_err(wrap)?;
        field.add_trajectory(base.last().expect("nonempty"), prefactor, false);
        if n_max == 0 || t_final == 0.0 {
            continue;
        }
        for i in 0..=k {
            let mut s = base[i].clone();
            prescribed_hop(&mut s, model).map_err(wrap)?;
            let branch = path_at_nodes(s, &grid, &nodes, i, model).map_err(wrap)?;
            let mut end = branch.last().expect("nonempty").clone();
            end.hop_phase *= w(i, k);
            field.add_trajectory(&end, prefactor, false);
            if n_max < 2 {
                continue;
            }
            // second hop at t2 = t_j >= t1, inner weight over [0, t_j] on the same nodes
            for j in i..=k {
                if j == 0 {
                    continue;
                }
                let mut s2 = branch[j - i].clone();
                prescribed_hop(&mut s2, model).map_err(wrap)?;
                let mut end2 = advance_to_end(s2, &grid, &nodes, j, model).map_err(wrap)?;
                end2.hop_phase *= w(i, j) * w(j, k);
                field.add_trajectory(&end2, prefactor, false);
            }
        }
    }
    Ok(field)
}

/// Evolves without hops from node `from` to the end, returning states at nodes `from..=K`.
fn path_at_nodes(
    mut state: TrajectoryState,
    grid: &TimeGrid,
    nodes: &[usize],
    from: usize,
    model: &ModelPotential,
) -> Result<Vec<TrajectoryState>> {
    let mut out = Vec::with_capacity(nodes.len() - from);
    let mut step = nodes[from];
    out.push(state.clone());
    for &target in &nodes[from + 1..] {
        while step < target {
            step += 1;
            state = deterministic_step(state, grid.time(step), model)?;
        }
        out.push(state.clone());
    }
    Ok(out)
}

fn advance_to_end(
    mut state: TrajectoryState,
    grid: &TimeGrid,
    nodes: &[usize],
    from: usize,
    model: &ModelPotential,
) -> Result<TrajectoryState> {
    let mut step = nodes[from];
    while step < grid.steps {
        step += 1;
        state = deterministic_step(state, grid.time(step), model)?;
    }
    Ok(state)
}

fn deterministic_step(
    state: TrajectoryState,
    t_next: f64,
    model: &ModelPotential,
) -> Result<TrajectoryState> {
    let mut s = crate::fga::rk4_step(&state, t_next - state.t, model)?;
    s.t = t_next;
    Ok(s)
}

/// Largest hop rate along the hop-free paths of `launches`, a proxy for the bound `C_tau`.
pub fn max_rate_along(
    launches: &[Launch],
    model: &ModelPotential,
    t_final: f64,
    dt: f64,
) -> Result<f64> {
    let grid = TimeGrid::new(dt, t_final)?;
    let mut c: f64 = 0.0;
    for l in launches {
        let mut s = TrajectoryState::new(l.q, l.p, l.amplitude, model)?;
        for k in 1..=grid.steps {
            s = deterministic_step(s, grid.time(k), model)?;
            let jet = model.surface_jet(s.q)?;
            c = c.max(hop_coefficient(&jet, 0, s.p).norm());
        }
    }
    Ok(c)
}
