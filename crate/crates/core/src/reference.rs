//! Time-splitting spectral reference solver for the two-component diabatic equation
//! `iε ∂t v = −(ε²/2) ∂xx v + H_e(x) v` on a periodic domain.

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::PathBuf;
use std::sync::Arc;

use crate::error::{FgaError, Result};
use crate::fga::TimeGrid;
use crate::model::{sweep, ModelPotential};
use crate::reconstruct::WaveField;
use crate::sampling::{InitialDatum, UniformGrid};

/// Environment variable naming the directory for cached reference solutions.
pub const CACHE_ENV: &str = "FGASH_CACHE_DIR";

/// Relative edge amplitude above which a solution is considered wrapped.
pub const EDGE_TOLERANCE: f64 = 1e-8;

/// Two-component field in the diabatic basis on a periodic grid.
#[derive(Clone, Debug, PartialEq)]
pub struct DiabaticField {
    pub x: UniformGrid,
    pub v: [Vec<Complex64>; 2],
    pub epsilon: f64,
}

impl DiabaticField {
    pub fn norm(&self) -> f64 {
        let s: f64 = self.v.iter().flatten().map(|z| z.norm_sqr()).sum();
        (s * self.x.step).sqrt()
    }

    /// Largest `|v|` on the outermost two nodes at either end.
    pub fn edge_amplitude(&self) -> f64 {
        let n = self.x.len;
        [0, 1, n - 2, n - 1]
            .iter()
            .map(|&j| (self.v[0][j].norm_sqr() + self.v[1][j].norm_sqr()).sqrt())
            .fold(0.0, f64::max)
    }
}

/// Periodic grid on `[−Lπ, Lπ)` with `n` nodes.
pub fn reference_grid(n: usize, half_periods: f64) -> UniformGrid {
    UniformGrid {
        start: -half_periods * PI,
        step: 2.0 * half_periods * PI / n as f64,
        len: n,
    }
}

/// Strang splitting propagator with precomputed potential and kinetic factors.
pub struct TsspSolver {
    dt: f64,
    half_potential: Vec<[[Complex64; 2]; 2]>,
    kinetic: Vec<Complex64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
}

/// `exp(−iφ H)` for a real symmetric 2×2 matrix.
pub fn potential_propagator(h: [[f64; 2]; 2], phi: f64) -> [[Complex64; 2]; 2] {
    let m = 0.5 * (h[0][0] + h[1][1]);
    let a = 0.5 * (h[0][0] - h[1][1]);
    let b = h[0][1];
    let r = a.hypot(b);
    let c = (phi * r).cos();
    // sin(φr)/r, finite as r → 0
    let sr = if r > 0.0 { (phi * r).sin() / r } else { phi };
    let g = Complex64::from_polar(1.0, -phi * m);
    let i = Complex64::new(0.0, 1.0);
    [
        [g * (c - i * sr * a), g * (-i * sr * b)],
        [g * (-i * sr * b), g * (c + i * sr * a)],
    ]
}

impl TsspSolver {
    pub fn new(model: &ModelPotential, x: UniformGrid, epsilon: f64, dt: f64) -> Result<Self> {
        let n = x.len;
        if !n.is_power_of_two() || n < 4 {
            return Err(FgaError::InvalidConfig(format!(
                "reference node count {n} must be a power of two"
            )));
        }
        if !(dt > 0.0) {
            return Err(FgaError::InvalidConfig(
                "reference dt must be positive".into(),
            ));
        }
        Ok(Self::build(model, x, epsilon, dt))
    }

    fn build(model: &ModelPotential, x: UniformGrid, epsilon: f64, dt: f64) -> Self {
        let n = x.len;
        let phi = dt / (2.0 * epsilon);
        let half_potential = x
            .points()
            .map(|xj| potential_propagator(model.electronic_hamiltonian(xj), phi))
            .collect();
        let length = x.step * n as f64;
        let kinetic = (0..n)
            .map(|i| {
                let m = if i < n / 2 {
                    i as f64
                } else {
                    i as f64 - n as f64
                };
                let k = 2.0 * PI * m / length;
                Complex64::from_polar(1.0 / n as f64, -epsilon * dt * k * k / 2.0)
            })
            .collect();
        let mut planner = FftPlanner::new();
        TsspSolver {
            dt,
            half_potential,
            kinetic,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            scratch: Vec::new(),
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn apply_potential(&self, field: &mut DiabaticField) {
        let [v0, v1] = &mut field.v;
        for ((a, b), u) in v0.iter_mut().zip(v1.iter_mut()).zip(&self.half_potential) {
            let (x0, x1) = (*a, *b);
            *a = u[0][0] * x0 + u[0][1] * x1;
            *b = u[1][0] * x0 + u[1][1] * x1;
        }
    }

    /// One full Strang step of length `dt`.
    pub fn step(&mut self, field: &mut DiabaticField) {
        self.apply_potential(field);
        let len = self.forward.get_inplace_scratch_len();
        self.scratch.resize(len, Complex64::new(0.0, 0.0));
        for v in field.v.iter_mut() {
            self.forward.process_with_scratch(v, &mut self.scratch);
            for (z, k) in v.iter_mut().zip(&self.kinetic) {
                *z *= k;
            }
            self.inverse.process_with_scratch(v, &mut self.scratch);
        }
        self.apply_potential(field);
    }
}

/// Single Strang step (builds the propagator each call; use [`TsspSolver`] for loops).
pub fn tssp_step(field: &DiabaticField, dt: f64, model: &ModelPotential) -> Result<DiabaticField> {
    let mut solver = TsspSolver::new(model, field.x, field.epsilon, dt)?;
    let mut out = field.clone();
    solver.step(&mut out);
    Ok(out)
}

/// Diabatic field `v = u0 · psi0` from an adiabatic ground-state datum.
pub fn lift(
    u0: &[Complex64],
    model: &ModelPotential,
    x: UniformGrid,
    epsilon: f64,
) -> Result<DiabaticField> {
    let xs: Vec<f64> = x.points().collect();
    let frames = sweep(model, &xs)?;
    let mut v = [Vec::with_capacity(x.len), Vec::with_capacity(x.len)];
    for (u, f) in u0.iter().zip(&frames) {
        v[0].push(u * f.psi0[0]);
        v[1].push(u * f.psi0[1]);
    }
    Ok(DiabaticField { x, v, epsilon })
}

/// `u_k = <psi_k, v>` with eigenvectors swept continuously from the left.
pub fn adiabatic_project(field: &DiabaticField, model: &ModelPotential) -> Result<WaveField> {
    let xs: Vec<f64> = field.x.points().collect();
    let frames = sweep(model, &xs)?;
    let mut out = WaveField::zeros(field.x, field.epsilon);
    for (j, f) in frames.iter().enumerate() {
        let (a, b) = (field.v[0][j], field.v[1][j]);
        out.u0[j] = a * f.psi0[0] + b * f.psi0[1];
        out.u1[j] = a * f.psi1[0] + b * f.psi1[1];
    }
    Ok(out)
}

/// Mesh and domain of a reference run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceMesh {
    /// Node spacing (default `2πε/64`).
    pub dx: f64,
    /// Time step (default `ε/32`).
    pub dt: f64,
    /// The domain is `[−Lπ, Lπ)`.
    pub half_periods: f64,
}

impl ReferenceMesh {
    pub fn standard(epsilon: f64) -> Self {
        ReferenceMesh {
            dx: 2.0 * PI * epsilon / 64.0,
            dt: epsilon / 32.0,
            half_periods: 2.0,
        }
    }

    /// Grid with the node count rounded to a power of two.
    pub fn grid(&self) -> Result<UniformGrid> {
        let raw = 2.0 * self.half_periods * PI / self.dx;
        if !(raw >= 4.0) || !raw.is_finite() {
            return Err(FgaError::InvalidConfig(format!(
                "bad reference spacing {}",
                self.dx
            )));
        }
        let n = (raw.round() as usize).next_power_of_two();
        Ok(reference_grid(n, self.half_periods))
    }
}

/// Solves from the adiabatic datum on surface 0 and returns adiabatic fields at
/// the step boundaries nearest to each of `times`.
pub fn reference_solve_at(
    datum: &InitialDatum,
    model: &ModelPotential,
    epsilon: f64,
    times: &[f64],
    mesh: &ReferenceMesh,
) -> Result<Vec<WaveField>> {
    let t_final = times.iter().copied().fold(0.0, f64::max);
    let x = mesh.grid()?;
    let grid = TimeGrid::new(mesh.dt, t_final)?;
    let u0 = datum.sample(&x, epsilon);
    let mut v = lift(&u0, model, x, epsilon)?;
    let mut solver = TsspSolver::new(model, x, epsilon, mesh.dt)?;
    let mut targets: Vec<(usize, usize)> =
        times.iter().map(|&t| grid.nearest(t)).enumerate().collect();
    targets.sort_by_key(|&(_, k)| k);
    let mut out: Vec<Option<WaveField>> = vec![None; times.len()];
    let mut step = 0;
    for (slot, k) in targets {
        while step < k {
            let t_next = grid.time(step + 1);
            let h = t_next - grid.time(step);
            if (h - mesh.dt).abs() > 1e-15 * mesh.dt {
                TsspSolver::build(model, x, epsilon, h).step(&mut v);
            } else {
                solver.step(&mut v);
            }
            step += 1;
        }
        let norm = v.norm();
        let edge = v.edge_amplitude();
        if edge > EDGE_TOLERANCE * norm {
            return Err(FgaError::BoundaryContamination { edge, norm });
        }
        out[slot] = Some(adiabatic_project(&v, model)?);
    }
    Ok(out
        .into_iter()
        .map(|f| f.expect("every slot filled"))
        .collect())
}

/// [`reference_solve_at`] for a single final time.
pub fn reference_solve(
    datum: &InitialDatum,
    model: &ModelPotential,
    epsilon: f64,
    t_final: f64,
    mesh: &ReferenceMesh,
) -> Result<WaveField> {
    Ok(reference_solve_at(datum, model, epsilon, &[t_final], mesh)?.remove(0))
}

/// Nodes of `field` that coincide with `target` (which must be a subgrid).
pub fn restrict(field: &WaveField, target: &UniformGrid) -> Result<WaveField> {
    let stride = target.step / field.x.step;
    let offset = (target.start - field.x.start) / field.x.step;
    let (s, o) = (stride.round(), offset.round());
    if (stride - s).abs() > 1e-9 || (offset - o).abs() > 1e-6 || s < 1.0 || o < 0.0 {
        return Err(FgaError::MeshMismatch);
    }
    let (s, o) = (s as usize, o as usize);
    if o + s * (target.len - 1) >= field.x.len {
        return Err(FgaError::MeshMismatch);
    }
    let pick = |u: &[Complex64]| (0..target.len).map(|j| u[o + s * j]).collect();
    Ok(WaveField {
        x: *target,
        u0: pick(&field.u0),
        u1: pick(&field.u1),
        epsilon: field.epsilon,
    })
}

/// Cache location for a reference run, or `None` when caching is off.
pub fn cache_path(
    datum: &InitialDatum,
    model: &ModelPotential,
    epsilon: f64,
    t: f64,
    mesh: &ReferenceMesh,
) -> Option<PathBuf> {
    let dir = std::env::var_os(CACHE_ENV)?;
    let key = serde_json::json!({
        "model": model,
        "datum": datum,
        "epsilon": epsilon,
        "t": t,
        "mesh": mesh,
    })
    .to_string();
    // FNV-1a keeps the file name short and stable across platforms
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in key.bytes() {
        h = (h ^ b as u64).wrapping_mul(0x0100_0000_01b3);
    }
    Some(PathBuf::from(dir).join(format!("ref-{}-{h:016x}.csv", model.kind.name())))
}

/// [`reference_solve`] backed by the on-disk cache when `FGASH_CACHE_DIR` is set.
pub fn reference_solve_cached(
    datum: &InitialDatum,
    model: &ModelPotential,
    epsilon: f64,
    t_final: f64,
    mesh: &ReferenceMesh,
) -> Result<WaveField> {
    let path = cache_path(datum, model, epsilon, t_final, mesh);
    if let Some(p) = &path {
        if let Ok(file) = std::fs::File::open(p) {
            if let Ok(field) = WaveField::read_csv(file, epsilon) {
                if field.x.len == mesh.grid()?.len {
                    return Ok(WaveField {
                        x: mesh.grid()?,
                        ..field
                    });
                }
            }
        }
    }
    let field = reference_solve(datum, model, epsilon, t_final, mesh)?;
    if let Some(p) = path {
        if let Some(dir) = p.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let tmp = p.with_extension("tmp");
        field.write_csv(std::fs::File::create(&tmp)?)?;
        std::fs::rename(tmp, p)?;
    }
    Ok(field)
}
