//! Persisted ensembles: JSON header plus a little-endian f64 payload,
//! row-major per field, fields concatenated. Round-trips bit-exactly.

use crate::error::{Error, Result};
use crate::field::{BoundaryCondition, FieldState};
use crate::lattice::LatticeDomain;
use crate::potential::{Potential, PotentialSpec};
use crate::sampler::{split_seed, Chain, ChainDiagnostics, SamplerConfig};
use crate::stats;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"GLFE";
const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnsembleHeader {
    pub format_version: u32,
    pub domain_half_width: i32,
    pub potential: PotentialSpec,
    pub generator: String,
    pub config: Option<SamplerConfig>,
    pub master_seed: u64,
    pub chain_seeds: Vec<u64>,
    pub diagnostics: Vec<ChainDiagnostics>,
    pub n_fields: usize,
}

/// An in-memory collection of independent field samples with provenance.
#[derive(Clone, Debug)]
pub struct EnsembleStore {
    pub header: EnsembleHeader,
    fields: Vec<Vec<f64>>,
}

impl EnsembleStore {
    pub fn new(header: EnsembleHeader, fields: Vec<Vec<f64>>) -> Self {
        EnsembleStore { header, fields }
    }

    pub fn domain(&self) -> LatticeDomain {
        LatticeDomain::build_box(self.header.domain_half_width).expect("stored domain is valid")
    }

    pub fn n_fields(&self) -> usize {
        self.fields.len()
    }

    pub fn field_values(&self, i: usize) -> &[f64] {
        &self.fields[i]
    }

    pub fn field(&self, i: usize) -> FieldState {
        FieldState::from_values(self.domain(), self.fields[i].clone()).expect("stored field is valid")
    }

    /// Ensemble mean of phi at one site index.
    pub fn mean_at(&self, idx: usize) -> f64 {
        let vals: Vec<f64> = self.fields.iter().map(|f| f[idx]).collect();
        stats::mean(&vals)
    }

    pub fn var_at(&self, idx: usize) -> f64 {
        let vals: Vec<f64> = self.fields.iter().map(|f| f[idx]).collect();
        stats::variance(&vals)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let header =
            serde_json::to_vec(&self.header).map_err(|e| Error::Format(format!("header encode: {e}")))?;
        let mut out = Vec::with_capacity(16 + header.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        let mut file = std::fs::File::create(path)?;
        file.write_all(&out)?;
        let mut buf = Vec::with_capacity(self.fields.first().map_or(0, |f| f.len() * 8));
        for field in &self.fields {
            buf.clear();
            for v in field {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            file.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut file = std::fs::File::open(path)?;
        let mut head = [0u8; 16];
        file.read_exact(&mut head)?;
        if &head[0..4] != MAGIC {
            return Err(Error::Format("not an ensemble file (bad magic)".into()));
        }
        let version = u32::from_le_bytes(head[4..8].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported ensemble format version {version}")));
        }
        let header_len = u64::from_le_bytes(head[8..16].try_into().unwrap()) as usize;
        let mut header_bytes = vec![0u8; header_len];
        file.read_exact(&mut header_bytes)?;
        let header: EnsembleHeader = serde_json::from_slice(&header_bytes)
            .map_err(|e| Error::Format(format!("header decode: {e}")))?;
        let domain = LatticeDomain::build_box(header.domain_half_width)?;
        let n_sites = domain.num_sites();
        let mut fields = Vec::with_capacity(header.n_fields);
        let mut buf = vec![0u8; n_sites * 8];
        for _ in 0..header.n_fields {
            file.read_exact(&mut buf).map_err(|_| Error::Format("truncated payload".into()))?;
            let field: Vec<f64> =
                buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            fields.push(field);
        }
        let mut trailing = [0u8; 1];
        if file.read(&mut trailing)? != 0 {
            return Err(Error::Format("trailing bytes after payload".into()));
        }
        Ok(EnsembleStore { header, fields })
    }
}

/// Draws `cfg.n_samples` fields by MCMC: `cfg.n_chains` independent chains in
/// parallel, each burned in and thinned by `sweeps_between_samples`. The
/// ensemble bytes are a pure function of (domain, potential, cfg).
pub fn sample_ensemble(
    domain: LatticeDomain,
    potential: &Potential,
    cfg: &SamplerConfig,
) -> Result<EnsembleStore> {
    sample_ensemble_with_boundary(domain, potential, cfg, &BoundaryCondition::Zero)
}

pub fn sample_ensemble_with_boundary(
    domain: LatticeDomain,
    potential: &Potential,
    cfg: &SamplerConfig,
    boundary: &BoundaryCondition,
) -> Result<EnsembleStore> {
    cfg.validate()?;
    let n_chains = cfg.n_chains.min(cfg.n_samples);
    let counts: Vec<usize> = (0..n_chains)
        .map(|i| cfg.n_samples / n_chains + usize::from(i < cfg.n_samples % n_chains))
        .collect();
    let results: Result<Vec<(Vec<Vec<f64>>, ChainDiagnostics)>> = (0..n_chains)
        .into_par_iter()
        .map(|ci| run_chain(domain, potential, cfg, boundary, ci as u64, counts[ci]))
        .collect();
    let results = results?;
    let mut fields = Vec::with_capacity(cfg.n_samples);
    let mut diagnostics = Vec::with_capacity(n_chains);
    for (chain_fields, diag) in results {
        fields.extend(chain_fields);
        diagnostics.push(diag);
    }
    let header = EnsembleHeader {
        format_version: FORMAT_VERSION,
        domain_half_width: domain.half_width(),
        potential: potential
            .spec()
            .cloned()
            .ok_or_else(|| Error::Input("ensembles require a serializable potential".into()))?,
        generator: "mcmc".into(),
        config: Some(cfg.clone()),
        master_seed: cfg.seed,
        chain_seeds: (0..n_chains as u64).map(|i| split_seed(cfg.seed, i)).collect(),
        diagnostics,
        n_fields: cfg.n_samples,
    };
    Ok(EnsembleStore::new(header, fields))
}

fn run_chain(
    domain: LatticeDomain,
    potential: &Potential,
    cfg: &SamplerConfig,
    boundary: &BoundaryCondition,
    stream: u64,
    n_take: usize,
) -> Result<(Vec<Vec<f64>>, ChainDiagnostics)> {
    let mut chain = Chain::new(domain, potential.clone(), boundary, cfg, stream)?;
    chain.burn_in(cfg.sweeps_burnin)?;
    let center = domain.index(crate::lattice::site(0, 0));
    let mut fields = Vec::with_capacity(n_take);
    let mut trace_center = Vec::new();
    let mut trace_sup = Vec::new();
    for _ in 0..n_take {
        for _ in 0..cfg.sweeps_between_samples {
            chain.step()?;
            if cfg.track_diagnostics {
                trace_center.push(chain.state().values()[center]);
                trace_sup.push(chain.state().sup());
            }
        }
        if !chain.state().all_finite() {
            return Err(Error::Solver("chain produced non-finite values".into()));
        }
        fields.push(chain.state().values().to_vec());
    }
    let diag = if cfg.track_diagnostics && trace_center.len() >= 100 {
        let ac = stats::integrated_autocorr(&trace_center);
        let asup = stats::integrated_autocorr(&trace_sup);
        let sweeps_per = cfg.sweeps_between_samples as f64;
        let ess_center = n_take as f64 / (ac.tau_int / sweeps_per).max(1.0);
        let ess_sup = n_take as f64 / (asup.tau_int / sweeps_per).max(1.0);
        ChainDiagnostics {
            acceptance: Some(chain.acceptance_rate()),
            tau_center: Some(ac.tau_int),
            tau_sup: Some(asup.tau_int),
            ess_center: Some(ess_center),
            ess_sup: Some(ess_sup),
            n_samples: n_take,
            tuned_scale: chain.scale(),
            degenerate: ac.degenerate || asup.degenerate,
            flagged: ac.degenerate || asup.degenerate || ess_center < 100.0 || ess_sup < 100.0,
        }
    } else {
        ChainDiagnostics {
            acceptance: Some(chain.acceptance_rate()),
            tau_center: None,
            tau_sup: None,
            ess_center: None,
            ess_sup: None,
            n_samples: n_take,
            tuned_scale: chain.scale(),
            degenerate: false,
            flagged: false,
        }
    };
    Ok((fields, diag))
}
