//! Run configuration: one experiment per JSON file.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::Path;

use crate::error::{FgaError, Result};
use crate::fga::HopMode;
use crate::model::ModelPotential;
use crate::reconstruct::periodic_grid;
use crate::reference::ReferenceMesh;
use crate::sampling::{InitialDatum, PhaseSpaceMesh, UniformGrid};

/// Largest admissible `dt · max rate`.
pub const MAX_HOP_PROBABILITY: f64 = 0.5;

/// Initial datum, either a named preset or explicit parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialSpec {
    Preset(String),
    Datum(InitialDatum),
}

impl InitialSpec {
    pub fn resolve(&self, epsilon: f64) -> Result<InitialDatum> {
        match self {
            InitialSpec::Datum(d) => Ok(*d),
            InitialSpec::Preset(name) => match name.as_str() {
                "avoided_crossing" => Ok(InitialDatum::avoided_crossing_packet(epsilon)),
                "fixed_gap" => Ok(InitialDatum::fixed_gap_packet()),
                other => Err(FgaError::InvalidConfig(format!(
                    "unknown initial datum '{other}'"
                ))),
            },
        }
    }
}

/// Phase-space sampling domain `K` and its mesh.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpace {
    pub q: (f64, f64),
    pub p: (f64, f64),
    /// Default `2πε/8`.
    #[serde(default)]
    pub dq: Option<f64>,
    /// Default `3ε/4`.
    #[serde(default)]
    pub dp: Option<f64>,
}

impl Default for PhaseSpace {
    fn default() -> Self {
        PhaseSpace {
            q: (-PI, PI),
            p: (0.5, 3.5),
            dq: None,
            dp: None,
        }
    }
}

/// How trajectories are launched.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Sampling {
    /// Grid quota with one or more partition integers.
    Stratified { partitions: Vec<usize> },
    /// `z0 ∝ |A|` with one or more ensemble sizes.
    Iid { trajectories: Vec<usize> },
}

impl Sampling {
    pub fn label(&self) -> &'static str {
        match self {
            Sampling::Stratified { .. } => "M",
            Sampling::Iid { .. } => "N",
        }
    }

    pub fn params(&self) -> &[usize] {
        match self {
            Sampling::Stratified { partitions } => partitions,
            Sampling::Iid { trajectories } => trajectories,
        }
    }
}

fn default_replications() -> usize {
    50
}

fn default_cutoff() -> f64 {
    1e-6
}

/// A single experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelPotential,
    pub initial: InitialSpec,
    pub epsilon: f64,
    pub t_final: f64,
    /// Default `ε/32`.
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub phase_space: PhaseSpace,
    /// Spacing of the quadrature mesh for `A(0)` and of the output mesh; default `2πε/32`.
    #[serde(default)]
    pub dx: Option<f64>,
    pub sampling: Sampling,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; `0` uses every core. Results do not depend on it.
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub exact_thinning: bool,
    #[serde(default)]
    pub disable_weights: bool,
    /// Nodes with `|A| <= cutoff · max|A|` launch no trajectories.
    #[serde(default = "default_cutoff")]
    pub amplitude_cutoff: f64,
    /// Assembly times for transition curves; default `t_final` only.
    #[serde(default)]
    pub snapshot_times: Option<Vec<f64>>,
    /// Default: spacing `2πε/64`, step `ε/32`, domain `[−2π, 2π)`.
    #[serde(default)]
    pub reference: Option<ReferenceMesh>,
    /// Number of trajectory traces written by `run-fga`.
    #[serde(default)]
    pub traces: usize,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: RunConfig =
            serde_json::from_str(text).map_err(|e| FgaError::InvalidConfig(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| FgaError::InvalidConfig(format!("{}: {e}", path.display())))?;
        RunConfig::from_json(&text)
    }

    pub fn dt(&self) -> f64 {
        self.dt.unwrap_or(self.epsilon / 32.0)
    }

    pub fn dx(&self) -> f64 {
        self.dx.unwrap_or(2.0 * PI * self.epsilon / 32.0)
    }

    pub fn hop_mode(&self) -> HopMode {
        if self.exact_thinning {
            HopMode::ExactThinning
        } else {
            HopMode::Bernoulli
        }
    }

    pub fn datum(&self) -> Result<InitialDatum> {
        self.initial.resolve(self.epsilon)
    }

    pub fn phase_space_mesh(&self) -> Result<PhaseSpaceMesh> {
        let k = &self.phase_space;
        let dq = k.dq.unwrap_or(2.0 * PI * self.epsilon / 8.0);
        let dp = k.dp.unwrap_or(3.0 * self.epsilon / 4.0);
        PhaseSpaceMesh::new(k.q, k.p, dq, dp)
    }

    /// Quadrature mesh of the initial datum on `[−π, π]`.
    pub fn y_grid(&self) -> Result<UniformGrid> {
        UniformGrid::covering(-PI, PI, self.dx())
    }

    /// Periodic output mesh on `[−π, π)`.
    pub fn x_grid(&self) -> UniformGrid {
        periodic_grid((2.0 * PI / self.dx()).round() as usize)
    }

    pub fn reference_mesh(&self) -> ReferenceMesh {
        self.reference
            .unwrap_or_else(|| ReferenceMesh::standard(self.epsilon))
    }

    /// Sorted, deduplicated assembly times.
    pub fn snapshots(&self) -> Vec<f64> {
        let mut t = self
            .snapshot_times
            .clone()
            .unwrap_or_else(|| vec![self.t_final]);
        t.sort_by(f64::total_cmp);
        t.dedup();
        t
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(FgaError::InvalidConfig(m));
        self.model.validate()?;
        self.datum()?;
        for (name, v) in [
            ("epsilon", self.epsilon),
            ("dt", self.dt()),
            ("dx", self.dx()),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.t_final > 0.0) || !self.t_final.is_finite() {
            return bad(format!("t_final must be positive, got {}", self.t_final));
        }
        self.phase_space_mesh()?;
        let r = self.reference_mesh();
        if !(r.dx > 0.0) || !(r.dt > 0.0) || !(r.half_periods >= 1.0) {
            return bad("reference mesh needs positive spacings and half_periods >= 1".into());
        }
        let params = self.sampling.params();
        if params.is_empty() || params.contains(&0) {
            return bad("sampling needs a non-empty list of positive sizes".into());
        }
        if self.replications == 0 {
            return bad("replications must be >= 1".into());
        }
        if !(self.amplitude_cutoff >= 0.0 && self.amplitude_cutoff < 1.0) {
            return bad(format!(
                "amplitude_cutoff must lie in [0, 1), got {}",
                self.amplitude_cutoff
            ));
        }
        if self
            .snapshots()
            .iter()
            .any(|&t| !(0.0..=self.t_final).contains(&t))
        {
            return bad("snapshot times must lie in [0, t_final]".into());
        }
        let rate = estimate_max_rate(&self.model, &self.phase_space_mesh()?, self.t_final)?;
        if self.dt() * rate >= MAX_HOP_PROBABILITY {
            return bad(format!(
                "dt = {} is too large for the coupling: dt * max rate = {:.3} >= {MAX_HOP_PROBABILITY} \
                 (estimated max rate {rate:.3e})",
                self.dt(),
                self.dt() * rate
            ));
        }
        Ok(())
    }
}

/// `max |p| · max |d01|` over the positions reachable from the mesh within `t_final`
/// at the largest initial speed.
pub fn estimate_max_rate(
    model: &ModelPotential,
    mesh: &PhaseSpaceMesh,
    t_final: f64,
) -> Result<f64> {
    let p = mesh.max_abs_p();
    let lo = mesh.q.start - p * t_final;
    let hi = mesh.q.end() + p * t_final;
    let n = 20_000;
    let mut max_d: f64 = 0.0;
    for i in 0..=n {
        let x = lo + (hi - lo) * i as f64 / n as f64;
        max_d = max_d.max(model.coupling(x)?.abs());
    }
    Ok(p * max_d)
}
