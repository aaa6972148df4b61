//! Experiment orchestration: sampling, ensemble evolution, assembly, statistics.

use std::io::Write;
use std::path::Path;

use crate::config::{RunConfig, Sampling};
use crate::ensemble::{plan_from_launches, run_ensemble, stream_id, EnsembleSetup, Job};
use crate::error::{FgaError, Result};
use crate::fga::{
    evolve_traced, replication_seed, trajectory_rng, write_trace, TimeGrid, TrajectoryState,
};
use crate::model::{sweep, ModelPotential};
use crate::reconstruct::{l2_error, replication_stats, transition_rate, EnsembleStats, WaveField};
use crate::reference::{reference_solve_at, reference_solve_cached, restrict};
use crate::sampling::{build_partition, sample_iid, InitialAmplitudeField, PartitionPlan};

/// Salt separating the i.i.d. node draws from the trajectory streams.
const SAMPLING_SALT: u64 = 0x5a4d_504c_494e_4721;

/// One error measurement.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorRecord {
    pub param: usize,
    pub replication: usize,
    pub trajectories: usize,
    pub e0: f64,
    pub e1: f64,
    pub rate: f64,
}

/// Result of [`run_fga`].
#[derive(Clone, Debug)]
pub struct FgaOutcome {
    pub records: Vec<ErrorRecord>,
    /// Present when there are at least two replications.
    pub stats: Option<EnsembleStats>,
    /// Field of replication 0 for the last sampling parameter.
    pub field: WaveField,
    pub reference: WaveField,
    pub max_symplectic_defect: f64,
}

/// Result of [`run_transition_curve`]: `(t, rate_fga, rate_ref)`.
pub type TransitionCurve = Vec<(f64, f64, f64)>;

fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    if workers == 0 {
        return f();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| FgaError::InvalidConfig(e.to_string()))?;
    pool.install(f)
}

/// Amplitude field `A(0, q, p)` of the configured datum.
pub fn initial_field(config: &RunConfig) -> Result<InitialAmplitudeField> {
    InitialAmplitudeField::compute(
        &config.datum()?,
        config.phase_space_mesh()?,
        &config.y_grid()?,
        config.epsilon,
    )
}

/// Launch plans for every (parameter, replication) pair, parameter-major.
fn plans(
    config: &RunConfig,
    field: &InitialAmplitudeField,
) -> Result<Vec<(usize, usize, PartitionPlan)>> {
    let mut out = Vec::new();
    match &config.sampling {
        Sampling::Stratified { partitions } => {
            for &m in partitions {
                let plan = build_partition(field, m, config.amplitude_cutoff)?;
                for r in 0..config.replications {
                    out.push((m, r, plan.clone()));
                }
            }
        }
        Sampling::Iid { trajectories } => {
            for &n in trajectories {
                for r in 0..config.replications {
                    let mut rng = trajectory_rng(
                        replication_seed(config.seed ^ SAMPLING_SALT, r as u64),
                        n as u64,
                    );
                    let launches = sample_iid(field, n, config.amplitude_cutoff, &mut rng)
                        .map_err(|e| e.in_replication(r))?;
                    out.push((n, r, plan_from_launches(&launches)));
                }
            }
        }
    }
    Ok(out)
}

/// One ensemble of a sweep: `(param, replication, fields per snapshot, trajectories)`.
type SweepRun = (usize, usize, Vec<WaveField>, usize);

/// Runs every replication of every sampling parameter and assembles at the snapshot times.
///
/// Also returns the largest symplectic defect.
fn ensemble_fields(
    config: &RunConfig,
    model: &ModelPotential,
    field: &InitialAmplitudeField,
    times: &[f64],
) -> Result<(Vec<SweepRun>, f64)> {
    let plans = plans(config, field)?;
    let setup = EnsembleSetup::new(
        model,
        field,
        config.dt(),
        config.t_final,
        config.x_grid(),
        config.hop_mode(),
    )?
    .with_snapshot_times(times);
    let jobs: Vec<Job> = plans
        .iter()
        .map(|(_, r, plan)| Job {
            plan,
            seed: replication_seed(config.seed, *r as u64),
            weighted: !config.disable_weights,
        })
        .collect();
    let report = with_workers(config.workers, || run_ensemble(&setup, &jobs))?;
    let out = plans
        .iter()
        .zip(report.fields)
        .zip(report.trajectories)
        .map(|(((param, r, _), fields), n)| (*param, *r, fields, n))
        .collect();
    Ok((out, report.max_symplectic_defect))
}

/// Reference solution at `t_final` on the output mesh (cached when `FGASH_CACHE_DIR` is set).
pub fn run_reference(config: &RunConfig) -> Result<WaveField> {
    let full = reference_solve_cached(
        &config.datum()?,
        &config.model,
        config.epsilon,
        config.t_final,
        &config.reference_mesh(),
    )?;
    restrict(&full, &config.x_grid())
}

/// FGA-SH ensembles with errors against the reference at `t_final`.
pub fn run_fga(config: &RunConfig) -> Result<FgaOutcome> {
    let reference = run_reference(config)?;
    let field = initial_field(config)?;
    let (runs, defect) = ensemble_fields(config, &config.model, &field, &[config.t_final])?;
    let mut records = Vec::with_capacity(runs.len());
    let mut last = None;
    for (param, replication, mut fields, trajectories) in runs {
        let f = fields.pop().expect("one snapshot");
        let wrap = |e: FgaError| e.in_replication(replication);
        let (e0, e1) = l2_error(&f, &reference).map_err(wrap)?;
        let rate = transition_rate(&f).map_err(wrap)?;
        records.push(ErrorRecord {
            param,
            replication,
            trajectories,
            e0,
            e1,
            rate,
        });
        if replication == 0 {
            last = Some(f);
        }
    }
    let stats = if config.replications >= 2 {
        let configs: Vec<(f64, Vec<(f64, f64)>)> = config
            .sampling
            .params()
            .iter()
            .map(|&p| {
                let errs = records
                    .iter()
                    .filter(|r| r.param == p)
                    .map(|r| (r.e0, r.e1))
                    .collect();
                (p as f64, errs)
            })
            .collect();
        Some(replication_stats(config.sampling.label(), &configs)?)
    } else {
        None
    };
    Ok(FgaOutcome {
        records,
        stats,
        field: last.expect("at least one run"),
        reference,
        max_symplectic_defect: defect,
    })
}

/// Transition rate of one ensemble (replication 0, first sampling parameter) and of the
/// reference at each snapshot time.
pub fn run_transition_curve(config: &RunConfig) -> Result<TransitionCurve> {
    let mut single = config.clone();
    single.replications = 1;
    single.sampling = match &config.sampling {
        Sampling::Stratified { partitions } => Sampling::Stratified {
            partitions: vec![partitions[0]],
        },
        Sampling::Iid { trajectories } => Sampling::Iid {
            trajectories: vec![trajectories[0]],
        },
    };
    let grid = TimeGrid::new(single.dt(), single.t_final)?;
    let mut times: Vec<f64> = config
        .snapshots()
        .iter()
        .map(|&t| grid.time(grid.nearest(t)))
        .collect();
    times.dedup();
    let field = initial_field(&single)?;
    let (mut runs, _) = ensemble_fields(&single, &single.model, &field, &times)?;
    let fields = runs.remove(0).2;
    let reference = reference_solve_at(
        &single.datum()?,
        &single.model,
        single.epsilon,
        &times,
        &single.reference_mesh(),
    )?;
    let x = single.x_grid();
    let mut out = Vec::with_capacity(times.len());
    for ((t, f), r) in times.iter().zip(&fields).zip(&reference) {
        out.push((*t, transition_rate(f)?, transition_rate(&restrict(r, &x)?)?));
    }
    Ok(out)
}

/// Traces of the first `count` copies of replication 0 for the first sampling parameter.
pub fn traces(config: &RunConfig, count: usize) -> Result<Vec<Vec<TrajectoryState>>> {
    let field = initial_field(config)?;
    let plan = plans(config, &field)?.swap_remove(0).2;
    let seed = replication_seed(config.seed, 0);
    let mut out = Vec::new();
    'nodes: for node in &plan.nodes {
        for c in 0..node.copies {
            if out.len() == count {
                break 'nodes;
            }
            let mut rng = trajectory_rng(seed, stream_id(node.node, c));
            let amplitude = node.copy_amplitude() * field.beam_prefactor();
            out.push(evolve_traced(
                (node.q, node.p),
                amplitude,
                config.t_final,
                config.dt(),
                &config.model,
                config.hop_mode(),
                &mut rng,
            )?);
        }
    }
    Ok(out)
}

/// Writes `errors.csv`, `stats.csv` (two or more replications), `field.csv`,
/// `reference.csv` and the configured number of traces into `dir`.
pub fn write_fga_artifacts(config: &RunConfig, outcome: &FgaOutcome, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("errors.csv"))?;
    w.write_record([
        config.sampling.label(),
        "replication",
        "trajectories",
        "e0",
        "e1",
        "rate",
    ])?;
    for r in &outcome.records {
        w.write_record(&[
            r.param.to_string(),
            r.replication.to_string(),
            r.trajectories.to_string(),
            format!("{:.10e}", r.e0),
            format!("{:.10e}", r.e1),
            format!("{:.10e}", r.rate),
        ])?;
    }
    w.flush()?;
    if let Some(stats) = &outcome.stats {
        stats.write_csv(std::fs::File::create(dir.join("stats.csv"))?)?;
    }
    outcome
        .field
        .write_csv(std::fs::File::create(dir.join("field.csv"))?)?;
    outcome
        .reference
        .write_csv(std::fs::File::create(dir.join("reference.csv"))?)?;
    if config.traces > 0 {
        for (k, trace) in traces(config, config.traces)?.iter().enumerate() {
            write_trace(
                std::fs::File::create(dir.join(format!("trace_{k:04}.csv")))?,
                trace,
            )?;
        }
    }
    Ok(())
}

pub fn write_transition_curve<W: Write>(out: W, curve: &TransitionCurve) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "rate_fga", "rate_ref"])?;
    for (t, a, b) in curve {
        w.write_record(&[t.to_string(), format!("{a:.10e}"), format!("{b:.10e}")])?;
    }
    w.flush()?;
    Ok(())
}

/// `x, E0, E1, d01, D01` over `xs` with a continuous gauge.
pub fn inspect_model<W: Write>(out: W, model: &ModelPotential, xs: &[f64]) -> Result<()> {
    let data = sweep(model, xs)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "E0", "E1", "d01", "D01"])?;
    for (x, d) in xs.iter().zip(&data) {
        w.write_record(&[
            x.to_string(),
            d.e0.to_string(),
            d.e1.to_string(),
            d.d01.to_string(),
            d.big_d01.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `q, p, re_A, im_A` for every mesh node.
pub fn sample_init<W: Write>(out: W, field: &InitialAmplitudeField) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["q", "p", "re_A", "im_A"])?;
    for (q, p, re, im) in field.rows() {
        w.write_record(&[q.to_string(), p.to_string(), re.to_string(), im.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
