use std::collections::HashMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::diagnostics::{diagnostics, RunDiagnostics};
use crate::error::{Error, Result};
use crate::stats::quantile_sorted;

/// Post-warmup draws of one chain, in constrained coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainDraws {
    pub chain: usize,
    /// `draws[iteration][parameter]`.
    pub draws: Vec<Vec<f64>>,
    /// Unconstrained log-density (Jacobian included) at each draw.
    pub log_density: Vec<f64>,
    pub accept_stat: Vec<f64>,
    pub divergent: Vec<bool>,
    pub n_leapfrog: Vec<usize>,
    pub step_size: f64,
    pub inv_metric: Vec<f64>,
    pub warmup_divergences: usize,
}

impl ChainDraws {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn mean_accept(&self) -> f64 {
        if self.accept_stat.is_empty() {
            return f64::NAN;
        }
        self.accept_stat.iter().sum::<f64>() / self.accept_stat.len() as f64
    }

    pub fn divergences(&self) -> usize {
        self.divergent.iter().filter(|&&d| d).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDraws {
    pub parameter_names: Vec<String>,
    pub chains: Vec<ChainDraws>,
}

impl PosteriorDraws {
    pub fn n_parameters(&self) -> usize {
        self.parameter_names.len()
    }

    pub fn total_draws(&self) -> usize {
        self.chains.iter().map(ChainDraws::len).sum()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.parameter_names.iter().position(|n| n == name)
    }

    /// Draws of parameter `index`, one vector per chain.
    pub fn chain_values(&self, index: usize) -> Vec<Vec<f64>> {
        self.chains
            .iter()
            .map(|c| c.draws.iter().map(|d| d[index]).collect())
            .collect()
    }

    /// Draws of parameter `index` pooled over chains in chain order.
    pub fn pooled(&self, index: usize) -> Vec<f64> {
        self.iter_draws().map(|d| d[index]).collect()
    }

    pub fn iter_draws(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.chains.iter().flat_map(|c| c.draws.iter())
    }

    /// Posterior mean of every parameter.
    pub fn means(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.n_parameters()];
        let mut count = 0.0;
        for d in self.iter_draws() {
            for (a, v) in acc.iter_mut().zip(d) {
                *a += v;
            }
            count += 1.0;
        }
        acc.iter().map(|a| a / count).collect()
    }

    /// Writes the long table `chain,iteration,parameter,value`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["chain", "iteration", "parameter", "value"])?;
        for c in &self.chains {
            let chain = c.chain.to_string();
            for (it, d) in c.draws.iter().enumerate() {
                let iteration = it.to_string();
                for (name, v) in self.parameter_names.iter().zip(d) {
                    wtr.write_record([
                        chain.as_str(),
                        iteration.as_str(),
                        name.as_str(),
                        &v.to_string(),
                    ])?;
                }
            }
        }
        wtr.flush()?;
        Ok(())
    }

    /// Reads a long draw table. Sampler statistics are not part of the file and are
    /// left empty.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut names: Vec<String> = Vec::new();
        let mut name_ix: HashMap<String, usize> = HashMap::new();
        // chain -> iteration -> values by parameter index
        let mut chains: Vec<(usize, Vec<Vec<f64>>)> = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = row + 2;
            let bad = |col: usize, what: &str| Error::Parse {
                line,
                column: col + 1,
                message: format!("invalid {what}"),
            };
            let chain: usize = rec
                .get(0)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| bad(0, "chain"))?;
            let it: usize = rec
                .get(1)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| bad(1, "iteration"))?;
            let name = rec.get(2).ok_or_else(|| bad(2, "parameter"))?;
            let value: f64 = rec
                .get(3)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| bad(3, "value"))?;
            let pi = match name_ix.get(name) {
                Some(&i) => i,
                None => {
                    name_ix.insert(name.to_string(), names.len());
                    names.push(name.to_string());
                    names.len() - 1
                }
            };
            let ci = match chains.iter().position(|(c, _)| *c == chain) {
                Some(ci) => ci,
                None => {
                    chains.push((chain, Vec::new()));
                    chains.len() - 1
                }
            };
            let iters = &mut chains[ci].1;
            if iters.len() <= it {
                iters.resize(it + 1, Vec::new());
            }
            let slot = &mut iters[it];
            if slot.len() <= pi {
                slot.resize(pi + 1, f64::NAN);
            }
            slot[pi] = value;
        }
        let p = names.len();
        let chains = chains
            .into_iter()
            .map(|(chain, draws)| {
                if draws
                    .iter()
                    .any(|d| d.len() != p || d.iter().any(|v| v.is_nan()))
                {
                    return Err(Error::Schema(format!("chain {chain} has incomplete draws")));
                }
                let n = draws.len();
                Ok(ChainDraws {
                    chain,
                    draws,
                    log_density: vec![f64::NAN; n],
                    accept_stat: vec![f64::NAN; n],
                    divergent: vec![false; n],
                    n_leapfrog: vec![0; n],
                    step_size: f64::NAN,
                    inv_metric: Vec::new(),
                    warmup_divergences: 0,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            parameter_names: names,
            chains,
        })
    }

    pub fn summary(&self) -> SummaryReport {
        let diag = diagnostics(self);
        let parameters = self
            .parameter_names
            .iter()
            .enumerate()
            .map(|(i, name)| {
                let mut v = self.pooled(i);
                let n = v.len() as f64;
                let mean = v.iter().sum::<f64>() / n;
                let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
                v.sort_by(f64::total_cmp);
                let q = |p: f64| quantile_sorted(&v, p);
                let d = &diag.parameters[i];
                ParameterSummary {
                    name: name.clone(),
                    mean,
                    sd,
                    quantiles: [q(0.025), q(0.25), q(0.5), q(0.75), q(0.975)],
                    r_hat: d.r_hat,
                    ess: d.ess,
                }
            })
            .collect();
        SummaryReport {
            draws: self.total_draws(),
            chains: self.chains.len(),
            divergences: self.chains.iter().map(ChainDraws::divergences).collect(),
            warmup_divergences: self.chains.iter().map(|c| c.warmup_divergences).collect(),
            step_sizes: self.chains.iter().map(|c| c.step_size).collect(),
            diagnostics: diag,
            parameters,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    /// 2.5%, 25%, 50%, 75% and 97.5% quantiles.
    pub quantiles: [f64; 5],
    pub r_hat: Option<f64>,
    pub ess: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummaryReport {
    pub draws: usize,
    pub chains: usize,
    pub divergences: Vec<usize>,
    pub warmup_divergences: Vec<usize>,
    pub step_sizes: Vec<f64>,
    pub diagnostics: RunDiagnostics,
    pub parameters: Vec<ParameterSummary>,
}
