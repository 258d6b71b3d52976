//! Field sources: a uniform way for experiments to consume exact-sampler
//! streams, MCMC chains, or stored ensembles without materializing large
//! ensembles in memory. Observables are extracted per field and reduced in
//! deterministic order.

use crate::error::{Error, Result};
use crate::field::{BoundaryCondition, FieldState};
use crate::laplace::DirichletOperator;
use crate::lattice::LatticeDomain;
use crate::potential::{Potential, PotentialSpec};
use crate::sampler::{split_seed, Chain, ChainDiagnostics, SamplerConfig};
use crate::stats;
use crate::store::EnsembleStore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::sync::Arc;

/// Per-field observable extractor.
pub type Observable<'o> = dyn Fn(&FieldState) -> Vec<f64> + Sync + 'o;

pub struct SourceRun {
    /// One row per field, in deterministic field order.
    pub per_field: Vec<Vec<f64>>,
    /// Chain diagnostics for MCMC sources (empty for exact/stored sources).
    pub diagnostics: Vec<ChainDiagnostics>,
    /// Effective sample count for scalar observables: the number of fields
    /// for independent sources, the autocorrelation-deflated count for MCMC.
    pub ess: f64,
}

pub enum Source<'a> {
    /// Independent exact DGFF samples; field i is seeded by split(master, i).
    ExactGff { op: Arc<DirichletOperator>, n_fields: usize, master_seed: u64 },
    /// Fields generated by MCMC chains (streamed, never stored).
    Mcmc {
        domain: LatticeDomain,
        potential: Potential,
        cfg: SamplerConfig,
        boundary: BoundaryCondition,
    },
    /// A stored ensemble.
    Stored(&'a EnsembleStore),
}

impl Source<'_> {
    pub fn exact(domain: LatticeDomain, n_fields: usize, master_seed: u64) -> Result<Source<'static>> {
        Ok(Source::ExactGff {
            op: Arc::new(DirichletOperator::full_box(domain)?),
            n_fields,
            master_seed,
        })
    }

    pub fn domain(&self) -> LatticeDomain {
        match self {
            Source::ExactGff { op, .. } => op.set().domain(),
            Source::Mcmc { domain, .. } => *domain,
            Source::Stored(store) => store.domain(),
        }
    }

    pub fn n_fields(&self) -> usize {
        match self {
            Source::ExactGff { n_fields, .. } => *n_fields,
            Source::Mcmc { cfg, .. } => cfg.n_samples,
            Source::Stored(store) => store.n_fields(),
        }
    }

    pub fn potential_spec(&self) -> PotentialSpec {
        match self {
            Source::ExactGff { .. } => PotentialSpec::Quadratic,
            Source::Mcmc { potential, .. } => {
                potential.spec().cloned().unwrap_or(PotentialSpec::Quadratic)
            }
            Source::Stored(store) => store.header.potential.clone(),
        }
    }

    /// Visits every field and collects `obs` per field. Deterministic given
    /// seeds: exact fields are independent streams, MCMC fields arrive in
    /// chain-major order.
    pub fn run(&self, obs: &Observable<'_>) -> Result<SourceRun> {
        match self {
            Source::ExactGff { op, n_fields, master_seed } => {
                let per_field: Result<Vec<Vec<f64>>> = (0..*n_fields)
                    .into_par_iter()
                    .map(|i| {
                        let mut rng = ChaCha8Rng::seed_from_u64(split_seed(*master_seed, i as u64));
                        let mut field = op.sample_exact_gff(&mut rng)?;
                        field.lineage_mut().master_seed = *master_seed;
                        field.lineage_mut().stream = i as u64;
                        Ok(obs(&field))
                    })
                    .collect();
                let per_field = per_field?;
                Ok(SourceRun { ess: per_field.len() as f64, per_field, diagnostics: vec![] })
            }
            Source::Mcmc { domain, potential, cfg, boundary } => {
                cfg.validate()?;
                let n_chains = cfg.n_chains.min(cfg.n_samples);
                let counts: Vec<usize> = (0..n_chains)
                    .map(|i| cfg.n_samples / n_chains + usize::from(i < cfg.n_samples % n_chains))
                    .collect();
                let runs: Result<Vec<(Vec<Vec<f64>>, ChainDiagnostics)>> = (0..n_chains)
                    .into_par_iter()
                    .map(|ci| {
                        stream_chain(*domain, potential, cfg, boundary, ci as u64, counts[ci], obs)
                    })
                    .collect();
                let runs = runs?;
                let mut per_field = Vec::with_capacity(cfg.n_samples);
                let mut diagnostics = Vec::with_capacity(n_chains);
                let mut ess = 0.0;
                for (rows, diag) in runs {
                    // thinned-sample ESS for the first recorded observable
                    ess += diag
                        .ess_center
                        .unwrap_or(diag.n_samples as f64)
                        .min(diag.n_samples as f64)
                        .max(0.0);
                    per_field.extend(rows);
                    diagnostics.push(diag);
                }
                Ok(SourceRun { per_field, diagnostics, ess })
            }
            Source::Stored(store) => {
                let per_field: Vec<Vec<f64>> =
                    (0..store.n_fields()).into_par_iter().map(|i| obs(&store.field(i))).collect();
                Ok(SourceRun { ess: per_field.len() as f64, per_field, diagnostics: vec![] })
            }
        }
    }
}

fn stream_chain(
    domain: LatticeDomain,
    potential: &Potential,
    cfg: &SamplerConfig,
    boundary: &BoundaryCondition,
    stream: u64,
    n_take: usize,
    obs: &Observable<'_>,
) -> Result<(Vec<Vec<f64>>, ChainDiagnostics)> {
    let mut chain = Chain::new(domain, potential.clone(), boundary, cfg, stream)?;
    chain.burn_in(cfg.sweeps_burnin)?;
    let mut rows = Vec::with_capacity(n_take);
    for _ in 0..n_take {
        chain.run(cfg.sweeps_between_samples)?;
        if !chain.state().all_finite() {
            return Err(Error::Solver("chain produced non-finite values".into()));
        }
        rows.push(obs(chain.state()));
    }
    // autocorrelation of the first observable across the thinned samples
    let first: Vec<f64> = rows.iter().map(|r| r.first().copied().unwrap_or(0.0)).collect();
    let diag = if first.len() >= 100 {
        let ac = stats::integrated_autocorr(&first);
        ChainDiagnostics {
            acceptance: Some(chain.acceptance_rate()),
            tau_center: (!ac.degenerate).then_some(ac.tau_int),
            tau_sup: None,
            ess_center: (!ac.degenerate).then_some(ac.ess),
            ess_sup: None,
            n_samples: n_take,
            tuned_scale: chain.scale(),
            degenerate: ac.degenerate,
            flagged: ac.degenerate || ac.ess < 100.0,
        }
    } else {
        ChainDiagnostics {
            acceptance: Some(chain.acceptance_rate()),
            tau_center: None,
            tau_sup: None,
            ess_center: Some(n_take as f64),
            ess_sup: None,
            n_samples: n_take,
            tuned_scale: chain.scale(),
            degenerate: false,
            flagged: n_take < 100,
        }
    };
    Ok((rows, diag))
}
