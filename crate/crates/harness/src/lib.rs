//! Experiment harness: seeded adversaries, exact comparators, closed-form
//! bounds, per-algorithm runners and the acceptance checks.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adversary;
pub mod bounds;
pub mod comparator;
pub mod config;
pub mod error;
pub mod output;
pub mod rng;
pub mod runners;
pub mod sweep;
pub mod verify;

use std::fs;
use std::path::Path;

use rayon::prelude::*;

pub use config::{Algorithm, AdversaryKind, DomainKind, EtaSpec, ExperimentConfig};
pub use error::{HarnessError, Result};
pub use runners::{run_replicate, BoundCheck, RunOutcome};

/// Mean and spread of final regret over replicates.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub replicates: usize,
    pub mean_regret: f64,
    pub std_regret: f64,
    pub max_regret: f64,
    pub bound: f64,
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub outcomes: Vec<RunOutcome>,
    pub aggregate: Aggregate,
}

impl Experiment {
    /// Every failed check, prefixed by its replicate.
    pub fn failures(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .outcomes
            .iter()
            .flat_map(|o| o.failures().into_iter().map(move |f| format!("rep {}: {f}", o.replicate)))
            .collect();
        if self.config.algorithm == Algorithm::Bandit && self.aggregate.mean_regret > self.aggregate.bound {
            out.push(format!(
                "mean regret {:.6e} exceeds bound {:.6e}",
                self.aggregate.mean_regret, self.aggregate.bound
            ));
        }
        out
    }

    pub fn flags(&self) -> Vec<String> {
        self.outcomes
            .iter()
            .flat_map(|o| o.flags().into_iter().map(move |f| format!("rep {}: {f}", o.replicate)))
            .collect()
    }

    pub fn summary_text(&self) -> String {
        let a = &self.aggregate;
        let mut s = self.config.to_text();
        s.push_str(&format!(
            "mean_regret = {:.16e}\nstd_regret = {:.16e}\nmax_regret = {:.16e}\nfinal_bound = {:.16e}\n",
            a.mean_regret, a.std_regret, a.max_regret, a.bound
        ));
        for f in self.failures() {
            s.push_str(&format!("failure = {f}\n"));
        }
        for f in self.flags() {
            s.push_str(&format!("flag = {f}\n"));
        }
        s
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let title = format!("{} vs {}", self.config.algorithm, self.config.adversary().id());
        for o in &self.outcomes {
            output::write_replicate(&dir.join(format!("rep{}", o.replicate)), o, &title)?;
        }
        fs::write(dir.join("summary.txt"), self.summary_text())?;
        Ok(())
    }
}

fn aggregate(outcomes: &[RunOutcome]) -> Aggregate {
    let n = outcomes.len() as f64;
    let finals: Vec<f64> = outcomes.iter().map(RunOutcome::final_regret).collect();
    let mean = finals.iter().sum::<f64>() / n;
    let var = if outcomes.len() > 1 {
        finals.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Aggregate {
        replicates: outcomes.len(),
        mean_regret: mean,
        std_regret: var.sqrt(),
        max_regret: finals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        bound: outcomes.iter().map(RunOutcome::final_bound).fold(f64::INFINITY, f64::min),
    }
}

/// Runs every replicate in parallel and writes outputs when `config.out` is
/// set. Replicates are independent streams, so the result does not depend
/// on scheduling.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Experiment> {
    config.validate()?;
    let outcomes = (0..config.replicates as u64)
        .into_par_iter()
        .map(|k| run_replicate(config, k))
        .collect::<Result<Vec<_>>>()?;
    let experiment = Experiment {
        config: config.clone(),
        aggregate: aggregate(&outcomes),
        outcomes,
    };
    if let Some(dir) = &config.out {
        experiment.write(dir)?;
    }
    Ok(experiment)
}
