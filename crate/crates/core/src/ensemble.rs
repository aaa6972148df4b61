//! Ensemble evolution and assembly.
//!
//! Copies launched from the same phase-space node follow the same path until
//! their first hop, so that path is computed once per node and shared by every
//! copy of every job (replications, partition integers). A copy only pays for
//! its own evolution after it leaves the shared path.
//!
//! The random stream of a copy is keyed by `(seed, node, copy number)`, so jobs
//! that share a seed (different partition integers, weighted and unweighted
//! assembly) reuse the same copies: copy `c` of a node belongs to every job
//! whose plan gives that node more than `c` copies. Nodes are processed in
//! fixed-size chunks whose partial fields are added in chunk order, so results
//! do not depend on the number of worker threads.

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{FgaError, Result};
use crate::fga::{
    advance, draw_clock, hop, stochastic_step_to, trajectory_rng, HopMode, TimeGrid,
    TrajectoryState,
};
use crate::model::ModelPotential;
use crate::reconstruct::WaveField;
use crate::sampling::{InitialAmplitudeField, Launch, PartitionPlan, PlanNode, UniformGrid};

const CHUNK: usize = 256;

/// Shared settings of an ensemble run.
#[derive(Clone, Debug)]
pub struct EnsembleSetup<'a> {
    pub model: &'a ModelPotential,
    pub grid: TimeGrid,
    /// Step indices at which fields are assembled, ascending.
    pub snapshots: Vec<usize>,
    pub x: UniformGrid,
    pub epsilon: f64,
    /// `dq dp / (2πε)^{3/2}`.
    pub prefactor: f64,
    pub hop_mode: HopMode,
}

impl<'a> EnsembleSetup<'a> {
    /// Setup assembling only at `t_final`.
    pub fn new(
        model: &'a ModelPotential,
        field: &InitialAmplitudeField,
        dt: f64,
        t_final: f64,
        x: UniformGrid,
        hop_mode: HopMode,
    ) -> Result<Self> {
        let grid = TimeGrid::new(dt, t_final)?;
        Ok(EnsembleSetup {
            model,
            grid,
            snapshots: vec![grid.steps],
            x,
            epsilon: field.epsilon,
            prefactor: field.beam_prefactor(),
            hop_mode,
        })
    }

    /// Assemble at the step boundaries nearest to `times` (deduplicated, ascending).
    pub fn with_snapshot_times(mut self, times: &[f64]) -> Self {
        let mut s: Vec<usize> = times.iter().map(|&t| self.grid.nearest(t)).collect();
        s.sort_unstable();
        s.dedup();
        self.snapshots = s;
        self
    }

    pub fn snapshot_times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|&k| self.grid.time(k)).collect()
    }
}

/// One ensemble: a launch plan, a seed and whether weights are applied.
#[derive(Clone, Copy, Debug)]
pub struct Job<'p> {
    pub plan: &'p PartitionPlan,
    pub seed: u64,
    pub weighted: bool,
}

/// Output of [`run_ensemble`].
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleReport {
    /// `fields[job][snapshot]`.
    pub fields: Vec<Vec<WaveField>>,
    /// Trajectories per job.
    pub trajectories: Vec<usize>,
    /// Trajectories per job that hopped at least once.
    pub hopped: Vec<usize>,
    /// Largest `|det J − 1|` over all final states.
    pub max_symplectic_defect: f64,
}

/// Hop-free path of a node, recorded at every step boundary.
struct BasePath {
    states: Vec<TrajectoryState>,
    /// Step at which the path failed, if it did.
    failure: Option<(usize, FgaError)>,
}

fn base_path(setup: &EnsembleSetup, q: f64, p: f64) -> Result<BasePath> {
    let mut state = TrajectoryState::new(q, p, Complex64::new(1.0, 0.0), setup.model)?;
    let mut states = Vec::with_capacity(setup.grid.steps + 1);
    states.push(state.clone());
    for k in 1..=setup.grid.steps {
        if let Err(e) = advance(&mut state, setup.grid.time(k), setup.model) {
            return Ok(BasePath {
                states,
                failure: Some((k, e)),
            });
        }
        states.push(state.clone());
    }
    Ok(BasePath {
        states,
        failure: None,
    })
}

/// Step of the first hop of a copy along the base path, consuming its random stream
/// exactly as [`crate::fga::evolve`] would. Returns `steps + 1` for no hop.
fn first_hop<R: Rng>(
    base: &BasePath,
    grid: &TimeGrid,
    mode: HopMode,
    clock: &mut f64,
    rng: &mut R,
) -> usize {
    let states = &base.states;
    for k in 1..states.len() {
        let dt = grid.time(k) - grid.time(k - 1);
        let fires = match mode {
            HopMode::Bernoulli => {
                let u: f64 = rng.random();
                u < dt * states[k].rate
            }
            HopMode::ExactThinning => {
                *clock -= 0.5 * dt * (states[k - 1].rate + states[k].rate);
                *clock <= 0.0
            }
        };
        if fires {
            return k;
        }
    }
    grid.steps + 1
}

struct Partial {
    fields: Vec<Vec<WaveField>>,
    trajectories: Vec<usize>,
    hopped: Vec<usize>,
    defect: f64,
}

impl Partial {
    fn new(setup: &EnsembleSetup, jobs: usize) -> Self {
        let blank = WaveField::zeros(setup.x, setup.epsilon);
        Partial {
            fields: vec![vec![blank; setup.snapshots.len()]; jobs],
            trajectories: vec![0; jobs],
            hopped: vec![0; jobs],
            defect: 0.0,
        }
    }
}

/// Evolves and assembles every job of `jobs`.
pub fn run_ensemble(setup: &EnsembleSetup, jobs: &[Job]) -> Result<EnsembleReport> {
    if setup.snapshots.iter().any(|&k| k > setup.grid.steps) {
        return Err(FgaError::InvalidConfig(
            "snapshot after the final time".into(),
        ));
    }
    let mut nodes: Vec<(usize, f64, f64)> = jobs
        .iter()
        .flat_map(|j| j.plan.nodes.iter().map(|n| (n.node, n.q, n.p)))
        .collect();
    nodes.sort_by_key(|n| n.0);
    nodes.dedup_by_key(|n| n.0);

    let mut total = Partial::new(setup, jobs.len());
    let batch = rayon::current_num_threads().max(1);
    for group in nodes.chunks(CHUNK * batch) {
        let partials: Vec<Result<Partial>> = group
            .par_chunks(CHUNK)
            .map(|chunk| run_chunk(setup, jobs, chunk))
            .collect();
        for partial in partials {
            let partial = partial?;
            for (acc, part) in total.fields.iter_mut().zip(&partial.fields) {
                for (a, b) in acc.iter_mut().zip(part) {
                    a.add_assign(b)?;
                }
            }
            for j in 0..jobs.len() {
                total.trajectories[j] += partial.trajectories[j];
                total.hopped[j] += partial.hopped[j];
            }
            total.defect = total.defect.max(partial.defect);
        }
    }
    Ok(EnsembleReport {
        fields: total.fields,
        trajectories: total.trajectories,
        hopped: total.hopped,
        max_symplectic_defect: total.defect,
    })
}

fn run_chunk(setup: &EnsembleSetup, jobs: &[Job], chunk: &[(usize, f64, f64)]) -> Result<Partial> {
    let mut out = Partial::new(setup, jobs.len());
    let grid = &setup.grid;
    let mut seeds: Vec<u64> = jobs.iter().map(|j| j.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    for &(node, q, p) in chunk {
        let base = base_path(setup, q, p)?;
        // (job, copies, per-copy amplitude) for the jobs launching from this node
        let entries: Vec<Option<(usize, Complex64)>> = jobs
            .iter()
            .map(|job| {
                let nodes = &job.plan.nodes;
                let i = nodes.partition_point(|n| n.node < node);
                (i < nodes.len() && nodes[i].node == node)
                    .then(|| (nodes[i].copies, nodes[i].copy_amplitude()))
            })
            .collect();
        // hop-free copies at each snapshot share one beam per job
        let mut riders = vec![vec![0usize; setup.snapshots.len()]; jobs.len()];
        for &seed in &seeds {
            let members: Vec<usize> = (0..jobs.len())
                .filter(|&j| jobs[j].seed == seed && entries[j].is_some())
                .collect();
            let copies = members
                .iter()
                .map(|&j| entries[j].expect("member").0)
                .max()
                .unwrap_or(0);
            for c in 0..copies {
                let id = stream_id(node, c);
                let wrap = |e: FgaError| e.in_trajectory(id as usize);
                let mut rng = trajectory_rng(seed, id);
                let mut clock = match setup.hop_mode {
                    HopMode::ExactThinning => draw_clock(&mut rng),
                    HopMode::Bernoulli => f64::INFINITY,
                };
                let k = first_hop(&base, grid, setup.hop_mode, &mut clock, &mut rng);
                if let Some((fail, e)) = &base.failure {
                    if k >= *fail {
                        return Err(wrap(e.clone()));
                    }
                }
                let owners: Vec<usize> = members
                    .iter()
                    .copied()
                    .filter(|&j| c < entries[j].expect("member").0)
                    .collect();
                for &j in &owners {
                    out.trajectories[j] += 1;
                    for (s, &snap) in setup.snapshots.iter().enumerate() {
                        if snap < k {
                            riders[j][s] += 1;
                        }
                    }
                }
                if k > grid.steps {
                    out.defect = out.defect.max(base.states[grid.steps].symplectic_defect());
                    continue;
                }
                for &j in &owners {
                    out.hopped[j] += 1;
                }
                let mut state = base.states[k].clone();
                hop(&mut state, setup.model).map_err(wrap)?;
                if setup.hop_mode == HopMode::ExactThinning {
                    state.clock = draw_clock(&mut rng);
                }
                let mut step = k;
                for (s, &snap) in setup.snapshots.iter().enumerate() {
                    if snap < k {
                        continue;
                    }
                    while step < snap {
                        step += 1;
                        stochastic_step_to(
                            &mut state,
                            grid.time(step),
                            setup.model,
                            setup.hop_mode,
                            &mut rng,
                        )
                        .map_err(wrap)?;
                    }
                    for &j in &owners {
                        let amplitude = entries[j].expect("member").1;
                        add(
                            &mut out.fields[j][s],
                            &state,
                            setup.prefactor,
                            amplitude,
                            jobs[j].weighted,
                        );
                    }
                }
                out.defect = out.defect.max(state.symplectic_defect());
            }
        }
        for (j, entry) in entries.iter().enumerate() {
            let Some((_, amplitude)) = entry else {
                continue;
            };
            for (s, &snap) in setup.snapshots.iter().enumerate() {
                if riders[j][s] > 0 {
                    let shared = amplitude * riders[j][s] as f64;
                    add(
                        &mut out.fields[j][s],
                        &base.states[snap],
                        setup.prefactor,
                        shared,
                        jobs[j].weighted,
                    );
                }
            }
        }
    }
    Ok(out)
}

/// Random stream of copy `copy` launched from mesh node `node`.
#[inline]
pub fn stream_id(node: usize, copy: usize) -> u64 {
    ((node as u64) << 32) | copy as u64
}

#[inline]
fn add(
    field: &mut WaveField,
    state: &TrajectoryState,
    prefactor: f64,
    amplitude: Complex64,
    weighted: bool,
) {
    field.add_trajectory_scaled(state, amplitude * prefactor, weighted);
}

/// Groups i.i.d. launches by node into a plan; copies keep their per-copy amplitude.
pub fn plan_from_launches(launches: &[Launch]) -> PartitionPlan {
    let mut sorted: Vec<&Launch> = launches.iter().collect();
    sorted.sort_by_key(|l| l.node);
    let mut nodes: Vec<PlanNode> = Vec::new();
    for l in sorted {
        match nodes.last_mut() {
            Some(n) if n.node == l.node => n.copies += 1,
            _ => nodes.push(PlanNode {
                node: l.node,
                q: l.q,
                p: l.p,
                amplitude: l.amplitude,
                copies: 1,
            }),
        }
    }
    // stored amplitude is the node total so that `copy_amplitude` recovers the per-copy value
    for n in &mut nodes {
        n.amplitude *= n.copies as f64;
    }
    PartitionPlan {
        partition: 0,
        d_m: 0.0,
        nodes,
    }
}
