//! One-parameter sweeps.

use crate::config::ExperimentConfig;
use crate::error::{config_err, Result};
use crate::{run_experiment, Experiment};

/// Runs `base` once per value of `param`; outputs go to `<out>/<param>=<value>`.
pub fn sweep(base: &ExperimentConfig, param: &str, values: &[String]) -> Result<Vec<(String, Experiment)>> {
    if values.is_empty() {
        return Err(config_err("sweep needs at least one value"));
    }
    values
        .iter()
        .map(|v| {
            let mut c = base.clone();
            c.set(param, v)?;
            if let Some(out) = &base.out {
                c.out = Some(out.join(format!("{param}={v}")));
            }
            Ok((v.clone(), run_experiment(&c)?))
        })
        .collect()
}

pub fn sweep_table(param: &str, rows: &[(String, Experiment)]) -> String {
    let mut s = format!("{param},mean_regret,std_regret,bound,failures\n");
    for (v, e) in rows {
        let a = &e.aggregate;
        s.push_str(&format!(
            "{v},{:.6e},{:.6e},{:.6e},{}\n",
            a.mean_regret,
            a.std_regret,
            a.bound,
            e.failures().len()
        ));
    }
    s
}
