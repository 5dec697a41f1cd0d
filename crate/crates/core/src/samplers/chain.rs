use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SamplerConfig;
use crate::error::{Error, Result};
use crate::gradients::Block;
use crate::model::{Dims, Hyperparams, ModelKind, ModelState, ProbabilityTables};

const MAGIC: &[u8; 8] = b"EDISCCHN";
const VERSION: u32 = 1;

/// Tuned scale and acceptance counts of one block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockStats {
    pub block: Block,
    /// Final `sigma^2`.
    pub scale: f64,
    pub proposals: u64,
    pub accepted: u64,
    /// Proposals rejected because an energy was not finite.
    pub nonfinite: u64,
    pub proposals_after_tuning: u64,
    pub accepted_after_tuning: u64,
}

impl BlockStats {
    pub fn acceptance_rate(&self) -> f64 {
        self.accepted as f64 / self.proposals.max(1) as f64
    }

    /// Acceptance rate once the scale was frozen, if any such proposals exist.
    pub fn tuned_acceptance_rate(&self) -> Option<f64> {
        (self.proposals_after_tuning > 0)
            .then(|| self.accepted_after_tuning as f64 / self.proposals_after_tuning as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainMeta {
    pub kind: ModelKind,
    pub dims: Dims,
    pub hyperparams: Hyperparams,
    pub config: SamplerConfig,
    /// Random stream index within `config.seed`.
    pub chain: usize,
    /// Fitted to observed labels (sense prevalence only, no `psi` draws).
    pub labelled: bool,
    pub snippets: usize,
    pub draws: usize,
    pub blocks: Vec<BlockStats>,
    pub wall_seconds: f64,
    #[serde(default)]
    pub config_hash: Option<String>,
}

/// Thinned post-burn-in output of one chain.
///
/// Draw `s` stores `phi~` (`G x T x K`), `psi~` (`K x T x V`, absent for
/// labelled fits) and the per-snippet log-likelihoods.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub meta: ChainMeta,
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
    pub loglik: Vec<f64>,
    pub final_state: ModelState,
}

#[derive(Serialize, Deserialize)]
struct Header {
    meta: ChainMeta,
    final_state: ModelState,
}

impl Chain {
    pub fn draws(&self) -> usize {
        self.meta.draws
    }

    pub fn dims(&self) -> Dims {
        self.meta.dims
    }

    pub fn phi_draw(&self, s: usize) -> &[f64] {
        let n = self.meta.dims.phi_len();
        &self.phi[s * n..(s + 1) * n]
    }

    pub fn psi_draw(&self, s: usize) -> &[f64] {
        let n = self.meta.dims.psi_len();
        &self.psi[s * n..(s + 1) * n]
    }

    pub fn loglik_row(&self, s: usize) -> &[f64] {
        let n = self.meta.snippets;
        &self.loglik[s * n..(s + 1) * n]
    }

    pub fn has_psi(&self) -> bool {
        !self.meta.labelled
    }

    /// Draws of `phi~[g, t, k]` across the chain.
    pub fn phi_trace(&self, genre: usize, time: usize, sense: usize) -> Vec<f64> {
        let i = self.meta.dims.phi_offset(genre, time) + sense;
        (0..self.draws()).map(|s| self.phi_draw(s)[i]).collect()
    }

    /// Draws of `psi~[k, t, v]` across the chain.
    pub fn psi_trace(&self, sense: usize, time: usize, word: usize) -> Vec<f64> {
        let i = self.meta.dims.psi_offset(sense, time) + word;
        (0..self.draws()).map(|s| self.psi_draw(s)[i]).collect()
    }

    /// Probability tables of draw `s` (log tables recomputed).
    pub fn tables(&self, s: usize) -> Result<ProbabilityTables> {
        if !self.has_psi() {
            return Err(Error::param("labelled chains carry no psi draws"));
        }
        let phi = self.phi_draw(s).to_vec();
        let psi = self.psi_draw(s).to_vec();
        Ok(ProbabilityTables {
            dims: self.meta.dims,
            log_phi: phi.iter().map(|p| p.ln()).collect(),
            log_psi: psi.iter().map(|p| p.ln()).collect(),
            phi,
            psi,
        })
    }

    /// Posterior mean of `phi~`.
    pub fn phi_mean(&self) -> Vec<f64> {
        mean_rows(&self.phi, self.meta.dims.phi_len(), self.draws())
    }

    /// Posterior mean of `psi~`.
    pub fn psi_mean(&self) -> Vec<f64> {
        mean_rows(&self.psi, self.meta.dims.psi_len(), self.draws())
    }

    /// Relabels senses so that new sense `k` is old sense `perm[k]`.
    pub fn permute_senses(&mut self, perm: &[usize]) -> Result<()> {
        let d = self.meta.dims;
        let mut seen = vec![false; d.senses];
        if perm.len() != d.senses || !perm.iter().all(|&p| p < d.senses && !std::mem::replace(&mut seen[p], true)) {
            return Err(Error::param(format!("{perm:?} is not a permutation of {} senses", d.senses)));
        }
        for s in 0..self.draws() {
            let row = &mut self.phi[s * d.phi_len()..(s + 1) * d.phi_len()];
            for cell in row.chunks_mut(d.senses) {
                let old = cell.to_vec();
                for k in 0..d.senses {
                    cell[k] = old[perm[k]];
                }
            }
            if self.has_psi() {
                let row = &mut self.psi[s * d.psi_len()..(s + 1) * d.psi_len()];
                let old = row.to_vec();
                let block = d.times * d.vocab;
                for k in 0..d.senses {
                    row[k * block..(k + 1) * block].copy_from_slice(&old[perm[k] * block..(perm[k] + 1) * block]);
                }
            }
        }
        Ok(())
    }

    /// Writes the binary chain file: magic, version, a JSON header, then the
    /// `phi`, `psi` and log-likelihood arrays as little-endian `f64`.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        let header = serde_json::to_vec(&Header {
            meta: self.meta.clone(),
            final_state: self.final_state.clone(),
        })?;
        out.write_all(MAGIC)?;
        out.write_all(&VERSION.to_le_bytes())?;
        out.write_all(&(header.len() as u64).to_le_bytes())?;
        out.write_all(&header)?;
        for block in [&self.phi, &self.psi, &self.loglik] {
            let mut buf = Vec::with_capacity(block.len() * 8);
            for x in block.iter() {
                buf.extend_from_slice(&x.to_le_bytes());
            }
            out.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(file)
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not an edisc chain file".into()));
        }
        let mut word = [0u8; 4];
        input.read_exact(&mut word)?;
        let version = u32::from_le_bytes(word);
        if version != VERSION {
            return Err(Error::Format(format!("chain file version {version}, expected {VERSION}")));
        }
        let mut len = [0u8; 8];
        input.read_exact(&mut len)?;
        let mut header = vec![0u8; u64::from_le_bytes(len) as usize];
        input.read_exact(&mut header)?;
        let Header { meta, final_state } = serde_json::from_slice(&header)?;
        let d = meta.dims;
        let psi_len = if meta.labelled { 0 } else { d.psi_len() };
        let loglik_len = if meta.labelled { 0 } else { meta.snippets };
        let mut read_block = |n: usize| -> Result<Vec<f64>> {
            let mut buf = vec![0u8; n * 8];
            input.read_exact(&mut buf)?;
            Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
        };
        let phi = read_block(meta.draws * d.phi_len())?;
        let psi = read_block(meta.draws * psi_len)?;
        let loglik = read_block(meta.draws * loglik_len)?;
        Ok(Chain {
            meta,
            phi,
            psi,
            loglik,
            final_state,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Chain::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

fn mean_rows(values: &[f64], width: usize, rows: usize) -> Vec<f64> {
    let mut out = vec![0.0; width];
    for s in 0..rows {
        for (o, x) in out.iter_mut().zip(&values[s * width..(s + 1) * width]) {
            *o += x;
        }
    }
    out.iter_mut().for_each(|x| *x /= rows.max(1) as f64);
    out
}
