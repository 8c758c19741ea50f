//! Experiment execution and file output.
//!
//! `run` writes three artifacts into the output directory:
//! `samples.csv` (one row per iteration: coordinates, accepted, evaluated),
//! `evals.jsonl` (one JSON record per true target evaluation), and
//! `summary.json` (chain summary, phase counts, config echo, wall time).
//! Kinetics runs additionally write the synthetic `dataset.csv`.
//! Floats are printed with 17 significant digits so the CSV round-trips
//! bit-exactly.

use crate::config::{Algorithm, Experiment, ExperimentConfig};
use mhgp_core::diagnostics::{chain_summary, permutation_test, subsample, EnergyTestResult};
use mhgp_core::laplace::{ProposalSpec, RefineConfig};
use mhgp_core::rng::{phase_rng, Stream};
use mhgp_core::samplers::{dram_run, mh_run, mhgp_run, Chain, DramConfig, MhgpConfig, PhaseCounts};
use mhgp_core::targets::{generate_synthetic_data, TargetModel};
use mhgp_core::BoConfig;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Runtime failures (exit code 3); config problems are caught earlier.
#[derive(Debug)]
pub struct RunError(pub String);

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for RunError {}

fn fail<T>(msg: impl Into<String>) -> Result<T, RunError> {
    Err(RunError(msg.into()))
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError(e.to_string())
    }
}

fn build_target(cfg: &ExperimentConfig) -> TargetModel {
    match cfg.experiment {
        Experiment::Banana => TargetModel::banana(cfg.banana.b),
        Experiment::Kinetics => {
            let data = generate_synthetic_data(
                &cfg.kinetics.true_params,
                cfg.kinetics.noise_sigma,
                cfg.kinetics.data_seed,
            );
            TargetModel::kinetics(data, cfg.kinetics.bounds.clone())
        }
        Experiment::Gaussian => {
            if cfg.gaussian.rho != 0.0 {
                TargetModel::correlated_gaussian_2d(cfg.gaussian.rho)
            } else {
                TargetModel::standard_gaussian(cfg.gaussian.dim)
            }
        }
    }
}

#[derive(Serialize)]
struct Summary<'a> {
    config: &'a ExperimentConfig,
    summary: mhgp_core::ChainSummary,
    wall_time_seconds: f64,
    laplace_fallback: Option<bool>,
    sampling_start: Option<Vec<f64>>,
    dataset_csv: Option<String>,
}

/// Run one experiment and write its artifacts. Returns the output directory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<PathBuf, RunError> {
    let out_dir = PathBuf::from(&cfg.output_dir);
    fs::create_dir_all(&out_dir)
        .map_err(|e| RunError(format!("cannot create output dir {}: {e}", out_dir.display())))?;

    let started = Instant::now();
    let mut target = build_target(cfg);
    let x0 = DVector::from_vec(cfg.x0.clone());

    let mut laplace_fallback = None;
    let mut sampling_start = None;
    let chain: Chain = match cfg.algorithm {
        Algorithm::Mhgp => {
            let bo = BoConfig {
                budget: cfg.mhgp.bo_budget,
                bounds: cfg.mhgp.bo_bounds.clone(),
                n_candidates: cfg.mhgp.bo_candidates,
                exploration_weight: cfg.mhgp.bo_xi,
            };
            let mhgp_cfg = MhgpConfig {
                iterations: cfg.iterations,
                threshold: cfg.mhgp.threshold,
                local_k: cfg.mhgp.local_k,
                proposal_scale: cfg.gamma(),
                bo,
                refine: RefineConfig {
                    steps: cfg.mhgp.refine_steps,
                    iso_sigma: cfg.mhgp.refine_iso_sigma,
                    recheck_every: cfg.mhgp.refine_recheck_every,
                    cov_threshold: cfg.mhgp.threshold,
                },
                seed: cfg.seed,
                x0,
            };
            let run = mhgp_run(&mut target, &mhgp_cfg).map_err(|e| RunError(e.to_string()))?;
            if run.laplace_fallback {
                eprintln!(
                    "warning: Laplace covariance was not positive definite after refinement; \
                     falling back to the isotropic refinement proposal"
                );
            }
            laplace_fallback = Some(run.laplace_fallback);
            sampling_start = Some(run.sampling_start.iter().cloned().collect());
            run.chain
        }
        Algorithm::Mh => {
            let proposal = ProposalSpec::isotropic(cfg.mh.proposal_sigma, cfg.dim());
            let mut rng = phase_rng(cfg.seed, Stream::Sampling);
            mh_run(&mut target, cfg.iterations, &proposal, &x0, &mut rng)
                .map_err(|e| RunError(e.to_string()))?
        }
        Algorithm::Dram => {
            let initial = ProposalSpec::diagonal(&cfg.dram.initial_stds);
            let dram_cfg = DramConfig {
                iterations: cfg.iterations,
                initial,
                adapt_start: Some(cfg.dram.adapt_start),
                adapt_interval: cfg.dram.adapt_interval,
                dr_scale: Some(cfg.dram.dr_scale),
                x0,
            };
            let mut rng = phase_rng(cfg.seed, Stream::Sampling);
            dram_run(&mut target, &dram_cfg, &mut rng).map_err(|e| RunError(e.to_string()))?
        }
    };

    write_samples_csv(&out_dir.join("samples.csv"), &chain)?;
    write_evals_jsonl(&out_dir.join("evals.jsonl"), &target)?;

    let mut dataset_csv = None;
    if let Some(data) = target.kinetics_data() {
        let path = out_dir.join("dataset.csv");
        let mut f = fs::File::create(&path)?;
        data.write_csv(&mut f)?;
        dataset_csv = Some("dataset.csv".to_string());
    }

    let summary = Summary {
        config: cfg,
        summary: chain_summary(&chain, 0),
        wall_time_seconds: started.elapsed().as_secs_f64(),
        laplace_fallback,
        sampling_start,
        dataset_csv,
    };
    let mut f = fs::File::create(out_dir.join("summary.json"))?;
    serde_json::to_writer_pretty(&mut f, &summary).map_err(|e| RunError(e.to_string()))?;
    writeln!(f)?;
    Ok(out_dir)
}

/// `x1,...,xd,accepted,evaluated` with 17-significant-digit floats.
pub fn write_samples_csv(path: &Path, chain: &Chain) -> Result<(), RunError> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    let d = chain.dim();
    let header: Vec<String> = (1..=d)
        .map(|j| format!("x{j}"))
        .chain(["accepted".to_string(), "evaluated".to_string()])
        .collect();
    writeln!(f, "{}", header.join(","))?;
    for i in 0..chain.len() {
        let mut row = String::new();
        for j in 0..d {
            row.push_str(&format!("{:.16e},", chain.samples[i][j]));
        }
        row.push_str(if chain.accepted[i] { "true," } else { "false," });
        row.push_str(if chain.evaluated[i] { "true" } else { "false" });
        writeln!(f, "{row}")?;
    }
    Ok(())
}

/// Parse a `samples.csv` back into a chain. Phase counts are not part of the
/// CSV; the evaluated flags are re-counted into the sampling slot.
pub fn read_samples_csv(path: &Path) -> Result<Chain, RunError> {
    let f = BufReader::new(
        fs::File::open(path).map_err(|e| RunError(format!("{}: {e}", path.display())))?,
    );
    let mut lines = f.lines();
    let header = match lines.next() {
        Some(h) => h?,
        None => return fail(format!("{}: empty file", path.display())),
    };
    let cols: Vec<&str> = header.trim().split(',').collect();
    if cols.len() < 3 || cols[cols.len() - 2] != "accepted" || cols[cols.len() - 1] != "evaluated" {
        return fail(format!("{}: unexpected header {header:?}", path.display()));
    }
    let d = cols.len() - 2;
    let mut samples = Vec::new();
    let mut accepted = Vec::new();
    let mut evaluated = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != d + 2 {
            return fail(format!(
                "{}: row {} has {} fields, expected {}",
                path.display(),
                lineno + 2,
                fields.len(),
                d + 2
            ));
        }
        let mut x = DVector::zeros(d);
        for j in 0..d {
            x[j] = fields[j]
                .parse::<f64>()
                .map_err(|e| RunError(format!("{}: row {}: {e}", path.display(), lineno + 2)))?;
        }
        samples.push(x);
        accepted.push(fields[d] == "true");
        evaluated.push(fields[d + 1] == "true");
    }
    if samples.is_empty() {
        return fail(format!("{}: no data rows", path.display()));
    }
    let sampling = evaluated.iter().filter(|e| **e).count() as u64;
    Ok(Chain {
        start: samples[0].clone(),
        samples,
        accepted,
        evaluated,
        eval_count_total: sampling,
        phase_counts: PhaseCounts {
            bo: 0,
            refine: 0,
            sampling,
        },
    })
}

fn write_evals_jsonl(path: &Path, target: &TargetModel) -> Result<(), RunError> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    for record in target.eval_log() {
        let line = serde_json::to_string(record).map_err(|e| RunError(e.to_string()))?;
        writeln!(f, "{line}")?;
    }
    Ok(())
}

/// Subsample both chains, run the energy permutation test, write the result
/// as JSON, and return it.
#[allow(clippy::too_many_arguments)]
pub fn compare_runs(
    samples_a: &Path,
    samples_b: &Path,
    n_sub: usize,
    n_perm: usize,
    seed: u64,
    burn_a: usize,
    burn_b: usize,
    out: &Path,
) -> Result<EnergyTestResult, RunError> {
    let chain_a = read_samples_csv(samples_a)?;
    let chain_b = read_samples_csv(samples_b)?;
    if chain_a.dim() != chain_b.dim() {
        return fail(format!(
            "dimension mismatch: {} has {} columns, {} has {}",
            samples_a.display(),
            chain_a.dim(),
            samples_b.display(),
            chain_b.dim()
        ));
    }
    let sub_a: DMatrix<f64> =
        subsample(&chain_a, n_sub, burn_a, seed).map_err(|e| RunError(e.to_string()))?;
    let sub_b: DMatrix<f64> =
        subsample(&chain_b, n_sub, burn_b, seed.wrapping_add(1)).map_err(|e| RunError(e.to_string()))?;
    let result =
        permutation_test(&sub_a, &sub_b, n_perm, seed).map_err(|e| RunError(e.to_string()))?;
    let mut f = fs::File::create(out)?;
    serde_json::to_writer_pretty(&mut f, &result).map_err(|e| RunError(e.to_string()))?;
    writeln!(f)?;
    Ok(result)
}
