//! Initial amplitude field on the phase-space mesh and trajectory launch plans.

use num_complex::Complex64;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{FgaError, Result};

/// Half-width of Gaussian windows in units of `sqrt(eps)`; the tail beyond is below `e^-50`.
pub const WINDOW_SIGMAS: f64 = 10.0;

/// Uniform grid `start + i*step` for `i in 0..len`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniformGrid {
    pub start: f64,
    pub step: f64,
    pub len: usize,
}

impl UniformGrid {
    /// Grid covering `[lo, hi]` including both ends, with spacing as close to `step` as the
    /// interval allows.
    pub fn covering(lo: f64, hi: f64, step: f64) -> Result<Self> {
        if !(hi > lo) || !(step > 0.0) {
            return Err(FgaError::InvalidConfig(format!(
                "bad grid [{lo}, {hi}] with step {step}"
            )));
        }
        let intervals = ((hi - lo) / step).round().max(1.0) as usize;
        Ok(UniformGrid {
            start: lo,
            step: (hi - lo) / intervals as f64,
            len: intervals + 1,
        })
    }

    #[inline]
    pub fn point(&self, i: usize) -> f64 {
        self.start + self.step * i as f64
    }

    pub fn end(&self) -> f64 {
        self.point(self.len - 1)
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len).map(move |i| self.point(i))
    }

    /// Indices of grid points within `half_width` of `center`.
    pub fn window(&self, center: f64, half_width: f64) -> std::ops::Range<usize> {
        let lo = ((center - half_width - self.start) / self.step)
            .ceil()
            .max(0.0);
        let hi = ((center + half_width - self.start) / self.step).floor() + 1.0;
        let hi = hi.min(self.len as f64).max(0.0);
        let lo = lo.min(hi);
        lo as usize..hi as usize
    }

    /// Trapezoid weight of point `i` (without the spacing factor).
    #[inline]
    pub fn trapezoid_weight(&self, i: usize) -> f64 {
        if i == 0 || i + 1 == self.len {
            0.5
        } else {
            1.0
        }
    }
}

/// Phase-space mesh over the compact set `K = [q_min, q_max] × [p_min, p_max]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpaceMesh {
    pub q: UniformGrid,
    pub p: UniformGrid,
}

impl PhaseSpaceMesh {
    pub fn new(q_range: (f64, f64), p_range: (f64, f64), dq: f64, dp: f64) -> Result<Self> {
        Ok(PhaseSpaceMesh {
            q: UniformGrid::covering(q_range.0, q_range.1, dq)?,
            p: UniformGrid::covering(p_range.0, p_range.1, dp)?,
        })
    }

    pub fn len(&self) -> usize {
        self.q.len * self.p.len
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Node `k` in q-major order.
    #[inline]
    pub fn node(&self, k: usize) -> (f64, f64) {
        (self.q.point(k / self.p.len), self.p.point(k % self.p.len))
    }

    pub fn cell_area(&self) -> f64 {
        self.q.step * self.p.step
    }

    pub fn max_abs_p(&self) -> f64 {
        self.p.start.abs().max(self.p.end().abs())
    }
}

/// Initial nuclear wavefunction on surface 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialDatum {
    /// `amplitude · exp(i p0 y / eps) · exp(-alpha (y - q0)^2)`.
    GaussianPacket {
        amplitude: f64,
        q0: f64,
        p0: f64,
        alpha: f64,
    },
}

impl InitialDatum {
    /// Normalized packet `(16 eps)^(-1/4) e^{2iy/eps} e^{-16(y+1)^2}` used with the
    /// simple avoided crossing.
    pub fn avoided_crossing_packet(eps: f64) -> Self {
        InitialDatum::GaussianPacket {
            amplitude: (16.0 * eps).powf(-0.25),
            q0: -1.0,
            p0: 2.0,
            alpha: 16.0,
        }
    }

    /// Same packet without the normalization prefactor, used with the fixed-gap model.
    pub fn fixed_gap_packet() -> Self {
        InitialDatum::GaussianPacket {
            amplitude: 1.0,
            q0: -1.0,
            p0: 2.0,
            alpha: 16.0,
        }
    }

    #[inline]
    pub fn eval(&self, y: f64, eps: f64) -> Complex64 {
        match *self {
            InitialDatum::GaussianPacket {
                amplitude,
                q0,
                p0,
                alpha,
            } => {
                let u = y - q0;
                Complex64::from_polar(amplitude * (-alpha * u * u).exp(), p0 * y / eps)
            }
        }
    }

    pub fn sample(&self, grid: &UniformGrid, eps: f64) -> Vec<Complex64> {
        grid.points().map(|y| self.eval(y, eps)).collect()
    }
}

fn check_resolution(dy: f64, max_p: f64, eps: f64) -> Result<()> {
    if max_p > 0.0 {
        // four points per wavelength of e^{i p y / eps}
        let limit = PI * eps / (2.0 * max_p);
        if dy > limit {
            return Err(FgaError::MeshTooCoarse { dy, limit, max_p });
        }
    }
    Ok(())
}

/// `A(0, q, p) = 2^{1/2} ∫ exp((i/eps)(-p(y-q) + (i/2)|y-q|^2)) u0(y) dy` by the trapezoid rule.
pub fn initial_amplitude(
    u0: &[Complex64],
    y: &UniformGrid,
    q: f64,
    p: f64,
    eps: f64,
) -> Result<Complex64> {
    assert_eq!(u0.len(), y.len, "samples must live on the y grid");
    check_resolution(y.step, p.abs(), eps)?;
    let mut acc = Complex64::new(0.0, 0.0);
    for j in y.window(q, WINDOW_SIGMAS * eps.sqrt()) {
        let d = y.point(j) - q;
        let kernel = Complex64::from_polar((-0.5 * d * d / eps).exp(), -p * d / eps);
        acc += kernel * u0[j] * y.trapezoid_weight(j);
    }
    Ok(acc * (2f64.sqrt() * y.step))
}

/// `A(0, q, p)` on every node of a phase-space mesh.
#[derive(Clone, Debug, PartialEq)]
pub struct InitialAmplitudeField {
    pub mesh: PhaseSpaceMesh,
    /// q-major: node `k` is `(q[k / np], p[k % np])`.
    pub amplitude: Vec<Complex64>,
    pub epsilon: f64,
}

impl InitialAmplitudeField {
    /// Evaluates the quadrature on all nodes, sharing work along each p row.
    pub fn compute(
        datum: &InitialDatum,
        mesh: PhaseSpaceMesh,
        y: &UniformGrid,
        eps: f64,
    ) -> Result<Self> {
        let u0 = datum.sample(y, eps);
        Self::from_samples(&u0, mesh, y, eps)
    }

    pub fn from_samples(
        u0: &[Complex64],
        mesh: PhaseSpaceMesh,
        y: &UniformGrid,
        eps: f64,
    ) -> Result<Self> {
        assert_eq!(u0.len(), y.len, "samples must live on the y grid");
        check_resolution(y.step, mesh.max_abs_p(), eps)?;
        let np = mesh.p.len;
        let rows: Vec<Vec<Complex64>> = (0..mesh.q.len)
            .into_par_iter()
            .map(|iq| {
                let q = mesh.q.point(iq);
                let mut row = vec![Complex64::new(0.0, 0.0); np];
                for j in y.window(q, WINDOW_SIGMAS * eps.sqrt()) {
                    let d = y.point(j) - q;
                    let weight = (-0.5 * d * d / eps).exp() * y.trapezoid_weight(j);
                    let f = u0[j] * weight;
                    // e^{-i p d / eps} stepped along the p grid
                    let mut phase = Complex64::from_polar(1.0, -mesh.p.start * d / eps);
                    let step = Complex64::from_polar(1.0, -mesh.p.step * d / eps);
                    for slot in row.iter_mut() {
                        *slot += f * phase;
                        phase *= step;
                    }
                }
                let scale = 2f64.sqrt() * y.step;
                row.iter_mut().for_each(|a| *a *= scale);
                row
            })
            .collect();
        Ok(InitialAmplitudeField {
            mesh,
            amplitude: rows.into_iter().flatten().collect(),
            epsilon: eps,
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.amplitude.iter().map(|a| a.norm()).fold(0.0, f64::max)
    }

    /// Total mass `Z = (2 pi eps)^{-3/2} Σ |A| dq dp`.
    pub fn total_mass(&self) -> f64 {
        let sum: f64 = self.amplitude.iter().map(|a| a.norm()).sum();
        sum * self.mesh.cell_area() * (2.0 * PI * self.epsilon).powf(-1.5)
    }

    /// Phase-space prefactor `dq dp / (2 pi eps)^{3/2}` applied to every beam.
    pub fn beam_prefactor(&self) -> f64 {
        self.mesh.cell_area() * (2.0 * PI * self.epsilon).powf(-1.5)
    }

    /// Indices of nodes whose `|A|` exceeds `relative_cutoff * max|A|` (and is nonzero).
    pub fn active_nodes(&self, relative_cutoff: f64) -> Vec<usize> {
        let threshold = relative_cutoff * self.max_abs();
        self.amplitude
            .iter()
            .enumerate()
            .filter(|(_, a)| {
                let m = a.norm();
                m > 0.0 && m > threshold
            })
            .map(|(k, _)| k)
            .collect()
    }

    /// Lifts the field back to real space at `t = 0`.
    pub fn reconstruct(&self, x: &UniformGrid) -> Vec<Complex64> {
        reconstruct_initial(self, x)
    }

    /// Rows `(q, p, Re A, Im A)` in node order.
    pub fn rows(&self) -> impl Iterator<Item = (f64, f64, f64, f64)> + '_ {
        self.amplitude.iter().enumerate().map(|(k, a)| {
            let (q, p) = self.mesh.node(k);
            (q, p, a.re, a.im)
        })
    }
}

/// `u(x) = (2 pi eps)^{-3/2} Σ A(0,q,p) exp((i/eps)(p(x-q) + (i/2)|x-q|^2)) dq dp`.
pub fn reconstruct_initial(field: &InitialAmplitudeField, x: &UniformGrid) -> Vec<Complex64> {
    let eps = field.epsilon;
    let mesh = &field.mesh;
    let np = mesh.p.len;
    let mut out = vec![Complex64::new(0.0, 0.0); x.len];
    for iq in 0..mesh.q.len {
        let q = mesh.q.point(iq);
        let row = &field.amplitude[iq * np..(iq + 1) * np];
        if row.iter().all(|a| *a == Complex64::new(0.0, 0.0)) {
            continue;
        }
        for j in x.window(q, WINDOW_SIGMAS * eps.sqrt()) {
            let d = x.point(j) - q;
            let mut phase = Complex64::from_polar(1.0, mesh.p.start * d / eps);
            let step = Complex64::from_polar(1.0, mesh.p.step * d / eps);
            let mut acc = Complex64::new(0.0, 0.0);
            for a in row {
                acc += a * phase;
                phase *= step;
            }
            out[j] += acc * (-0.5 * d * d / eps).exp();
        }
    }
    let scale = field.beam_prefactor();
    out.iter_mut().for_each(|u| *u *= scale);
    out
}

/// Discrete L² distance between the reconstruction and the initial datum.
pub fn initial_error(field: &InitialAmplitudeField, datum: &InitialDatum, x: &UniformGrid) -> f64 {
    let rec = reconstruct_initial(field, x);
    let sum: f64 = rec
        .iter()
        .enumerate()
        .map(|(j, u)| (u - datum.eval(x.point(j), field.epsilon)).norm_sqr())
        .sum();
    (sum * x.step).sqrt()
}

/// One trajectory to launch: initial centre and per-copy amplitude.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Launch {
    pub node: usize,
    pub q: f64,
    pub p: f64,
    pub amplitude: Complex64,
}

/// A node of the stratified plan.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlanNode {
    pub node: usize,
    pub q: f64,
    pub p: f64,
    pub amplitude: Complex64,
    pub copies: usize,
}

impl PlanNode {
    /// The node amplitude divided equally among its copies.
    pub fn copy_amplitude(&self) -> Complex64 {
        self.amplitude / self.copies as f64
    }
}

/// Grid-quota partition: each node spawns `ceil(|A| / d_M)` equal-weight copies.
#[derive(Clone, Debug, PartialEq)]
pub struct PartitionPlan {
    pub partition: usize,
    pub d_m: f64,
    pub nodes: Vec<PlanNode>,
}

impl PartitionPlan {
    pub fn total_copies(&self) -> usize {
        self.nodes.iter().map(|n| n.copies).sum()
    }

    /// Launch list in trajectory-index order (node order, then copy order).
    pub fn launches(&self) -> Vec<Launch> {
        let mut out = Vec::with_capacity(self.total_copies());
        for n in &self.nodes {
            let amplitude = n.copy_amplitude();
            for _ in 0..n.copies {
                out.push(Launch {
                    node: n.node,
                    q: n.q,
                    p: n.p,
                    amplitude,
                });
            }
        }
        out
    }
}

/// Builds the partition plan with partition integer `m`.
///
/// Nodes with `|A| <= relative_cutoff * max|A|` are dropped; a cutoff of
/// zero keeps every node with nonzero amplitude.
pub fn build_partition(
    field: &InitialAmplitudeField,
    m: usize,
    relative_cutoff: f64,
) -> Result<PartitionPlan> {
    if m == 0 {
        return Err(FgaError::InvalidConfig(
            "partition integer must be >= 1".into(),
        ));
    }
    let max = field.max_abs();
    if !(max > 0.0) {
        return Err(FgaError::EmptyField);
    }
    let d_m = max / m as f64;
    let nodes = field
        .active_nodes(relative_cutoff)
        .into_iter()
        .map(|k| {
            let (q, p) = field.mesh.node(k);
            let a = field.amplitude[k];
            let copies = ((a.norm() / d_m).ceil() as usize).max(1);
            PlanNode {
                node: k,
                q,
                p,
                amplitude: a,
                copies,
            }
        })
        .collect();
    Ok(PartitionPlan {
        partition: m,
        d_m,
        nodes,
    })
}

/// i.i.d. launches with `z0 ∝ |A|` over the active nodes.
///
/// Each copy carries `(Σ|A| / n) · A/|A|`, so assembling with the mesh
/// prefactor reproduces `Z · E[A/|A| ...]`.
pub fn sample_iid<R: Rng + ?Sized>(
    field: &InitialAmplitudeField,
    n: usize,
    relative_cutoff: f64,
    rng: &mut R,
) -> Result<Vec<Launch>> {
    let nodes = field.active_nodes(relative_cutoff);
    if nodes.is_empty() {
        return Err(FgaError::EmptyField);
    }
    let weights: Vec<f64> = nodes.iter().map(|&k| field.amplitude[k].norm()).collect();
    let total: f64 = weights.iter().sum();
    let dist = WeightedIndex::new(&weights).map_err(|e| FgaError::InvalidConfig(e.to_string()))?;
    Ok((0..n)
        .map(|_| {
            let k = nodes[dist.sample(rng)];
            let a = field.amplitude[k];
            let (q, p) = field.mesh.node(k);
            Launch {
                node: k,
                q,
                p,
                amplitude: a / a.norm() * (total / n as f64),
            }
        })
        .collect())
}
