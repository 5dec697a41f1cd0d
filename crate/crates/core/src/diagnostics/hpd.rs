use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{log_softmax_in_place, Hyperparams};
use crate::samplers::Chain;

/// Minimum number of draws for interval and region estimates.
pub const MIN_HPD_DRAWS: usize = 100;
/// Maximum number of kernel centres in a joint region.
pub const MAX_REFERENCE_POINTS: usize = 1000;
/// Default number of prior simulations for Bayes factors.
pub const DEFAULT_PRIOR_SIMS: usize = 1_000_000;

/// Shortest interval containing a fraction `level` of the draws.
pub fn hpd_interval(draws: &[f64], level: f64) -> Result<(f64, f64)> {
    if !(level > 0.0 && level <= 1.0) {
        return Err(Error::param(format!("HPD level must lie in (0, 1], got {level}")));
    }
    if draws.len() < MIN_HPD_DRAWS {
        return Err(Error::TooFewDraws {
            needed: MIN_HPD_DRAWS,
            have: draws.len(),
        });
    }
    let mut x = draws.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len();
    let m = ((level * n as f64).ceil() as usize).clamp(1, n);
    let best = (0..=n - m)
        .min_by(|&a, &b| (x[a + m - 1] - x[a]).total_cmp(&(x[b + m - 1] - x[b])))
        .expect("n >= m");
    Ok((x[best], x[best + m - 1]))
}

/// Highest-density region of a sample, estimated with a Gaussian product
/// kernel (Scott bandwidths) centred on at most 1000 of the points. A point
/// is inside when its estimated density is at least the `1 - level`
/// quantile of the densities at the centres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdeRegion {
    dim: usize,
    centres: Vec<f64>,
    bandwidth: Vec<f64>,
    threshold: f64,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl KdeRegion {
    /// `points` holds `n` rows of width `dim`.
    pub fn new(points: &[f64], dim: usize, level: f64) -> Result<Self> {
        let n = points.len() / dim.max(1);
        if dim == 0 || points.len() != n * dim {
            return Err(Error::param("KDE points must be n rows of width dim >= 1"));
        }
        if n < MIN_HPD_DRAWS {
            return Err(Error::TooFewDraws {
                needed: MIN_HPD_DRAWS,
                have: n,
            });
        }
        let m = n.min(MAX_REFERENCE_POINTS);
        let mut centres = Vec::with_capacity(m * dim);
        for i in 0..m {
            let row = i * n / m;
            centres.extend_from_slice(&points[row * dim..(row + 1) * dim]);
        }
        let factor = (m as f64).powf(-1.0 / (dim as f64 + 4.0));
        let mut bandwidth = Vec::with_capacity(dim);
        let mut lower = Vec::with_capacity(dim);
        let mut upper = Vec::with_capacity(dim);
        for j in 0..dim {
            let col: Vec<f64> = (0..m).map(|i| centres[i * dim + j]).collect();
            let mean = col.iter().sum::<f64>() / m as f64;
            let sd = (col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1) as f64).sqrt();
            bandwidth.push((sd * factor).max(1e-9));
            lower.push(col.iter().copied().fold(f64::INFINITY, f64::min));
            upper.push(col.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        }
        let mut region = KdeRegion {
            dim,
            centres,
            bandwidth,
            threshold: 0.0,
            lower,
            upper,
        };
        let mut dens: Vec<f64> = (0..m)
            .map(|i| region.density(&region.centres[i * dim..(i + 1) * dim]))
            .collect();
        dens.sort_by(f64::total_cmp);
        let idx = (((1.0 - level) * m as f64).floor() as usize).min(m - 1);
        region.threshold = dens[idx];
        Ok(region)
    }

    fn norm(&self) -> f64 {
        let m = self.centres.len() / self.dim;
        1.0 / (m as f64 * self.bandwidth.iter().map(|h| h * (2.0 * PI).sqrt()).product::<f64>())
    }

    /// Kernel density estimate at `x`.
    pub fn density(&self, x: &[f64]) -> f64 {
        let sum: f64 = self
            .centres
            .chunks(self.dim)
            .map(|c| {
                let q: f64 = c
                    .iter()
                    .zip(x)
                    .zip(&self.bandwidth)
                    .map(|((c, x), h)| ((x - c) / h).powi(2))
                    .sum();
                (-0.5 * q).exp()
            })
            .sum();
        sum * self.norm()
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        // Every centre lies in the bounding box, so the kernel at the nearest
        // box point bounds every term of the sum.
        let q: f64 = (0..self.dim)
            .map(|j| {
                let gap = (self.lower[j] - x[j]).max(x[j] - self.upper[j]).max(0.0);
                (gap / self.bandwidth[j]).powi(2)
            })
            .sum();
        let m = (self.centres.len() / self.dim) as f64;
        if m * self.norm() * (-0.5 * q).exp() < self.threshold {
            return false;
        }
        self.density(x) >= self.threshold
    }
}

/// Joint region for one sense-prevalence vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Region {
    /// The whole simplex.
    Full,
    /// KDE region over the first `K - 1` coordinates.
    Kde(KdeRegion),
}

impl Region {
    pub fn contains(&self, simplex_point: &[f64]) -> bool {
        match self {
            Region::Full => true,
            Region::Kde(r) => r.contains(&simplex_point[..simplex_point.len() - 1]),
        }
    }
}

/// Per-(genre, time) HPD summaries of `phi~`: coordinate intervals and a
/// joint membership region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HpdSet {
    pub level: f64,
    pub genres: usize,
    pub times: usize,
    pub senses: usize,
    /// `[g][t][k]` intervals.
    pub intervals: Vec<(f64, f64)>,
    /// `[g][t]` joint regions.
    pub regions: Vec<Region>,
}

impl HpdSet {
    /// The whole simplex in every cell.
    pub fn full(genres: usize, times: usize, senses: usize) -> Self {
        HpdSet {
            level: 1.0,
            genres,
            times,
            senses,
            intervals: vec![(0.0, 1.0); genres * times * senses],
            regions: vec![Region::Full; genres * times],
        }
    }

    pub fn from_chain(chain: &Chain, level: f64) -> Result<Self> {
        let d = chain.dims();
        let n = chain.draws();
        let mut intervals = Vec::with_capacity(d.phi_len());
        let mut regions = Vec::with_capacity(d.cells());
        for g in 0..d.genres {
            for t in 0..d.times {
                for k in 0..d.senses {
                    intervals.push(hpd_interval(&chain.phi_trace(g, t, k), level)?);
                }
                if d.senses == 1 {
                    regions.push(Region::Full);
                    continue;
                }
                let o = d.phi_offset(g, t);
                let mut points = Vec::with_capacity(n * (d.senses - 1));
                for s in 0..n {
                    points.extend_from_slice(&chain.phi_draw(s)[o..o + d.senses - 1]);
                }
                regions.push(Region::Kde(KdeRegion::new(&points, d.senses - 1, level)?));
            }
        }
        Ok(HpdSet {
            level,
            genres: d.genres,
            times: d.times,
            senses: d.senses,
            intervals,
            regions,
        })
    }

    pub fn interval(&self, genre: usize, time: usize, sense: usize) -> (f64, f64) {
        self.intervals[(genre * self.times + time) * self.senses + sense]
    }

    pub fn region(&self, genre: usize, time: usize) -> &Region {
        &self.regions[genre * self.times + time]
    }

    pub fn contains(&self, genre: usize, time: usize, simplex_point: &[f64]) -> bool {
        self.region(genre, time).contains(simplex_point)
    }
}

/// Softmax-transformed draws from the stationary prior of one `phi[g, t]`,
/// `N(0, kappa_phi / (1 - alpha_phi^2))` per coordinate. The marginal is the
/// same for every cell, so one set serves all of them.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorSimulations {
    pub senses: usize,
    pub seed: u64,
    values: Vec<f64>,
}

impl PriorSimulations {
    pub fn new(hp: &Hyperparams, senses: usize, count: usize, seed: u64) -> Result<Self> {
        hp.validate()?;
        if senses == 0 || count == 0 {
            return Err(Error::param("prior simulations need K >= 1 and at least one draw"));
        }
        let sd = (hp.kappa_phi / (1.0 - hp.alpha_phi * hp.alpha_phi)).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = Vec::with_capacity(count * senses);
        let mut row = vec![0.0; senses];
        for _ in 0..count {
            row.iter_mut().for_each(|x| *x = sd * rng.sample::<f64, _>(StandardNormal));
            log_softmax_in_place(&mut row);
            values.extend(row.iter().map(|x| x.exp()));
        }
        Ok(PriorSimulations { senses, seed, values })
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.senses
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn draw(&self, i: usize) -> &[f64] {
        &self.values[i * self.senses..(i + 1) * self.senses]
    }

    /// Fraction of simulations inside `region`.
    pub fn mass(&self, region: &Region) -> f64 {
        let inside = (0..self.len()).filter(|&i| region.contains(self.draw(i))).count();
        inside as f64 / self.len() as f64
    }
}

/// Savage-Dickey Bayes factor for `phi~[g, t]` lying in a region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesFactor {
    pub genre: usize,
    pub time: usize,
    /// Posterior probability of the region.
    pub numerator: f64,
    /// Prior probability of the region.
    pub denominator: f64,
    /// `log10(numerator / denominator)`; `-inf` when no draw falls inside.
    pub log10_bf: f64,
}

/// Posterior-to-prior probability ratio of each cell's region.
pub fn bayes_factor(chain: &Chain, region: &HpdSet, prior: &PriorSimulations) -> Result<Vec<BayesFactor>> {
    let d = chain.dims();
    if (d.genres, d.times, d.senses) != (region.genres, region.times, region.senses) || prior.senses != d.senses {
        return Err(Error::param("chain, region and prior simulations disagree on (G, T, K)"));
    }
    if chain.draws() == 0 {
        return Err(Error::TooFewDraws { needed: 1, have: 0 });
    }
    let mut out = Vec::with_capacity(d.cells());
    for g in 0..d.genres {
        for t in 0..d.times {
            let r = region.region(g, t);
            let o = d.phi_offset(g, t);
            let inside = (0..chain.draws())
                .filter(|&s| r.contains(&chain.phi_draw(s)[o..o + d.senses]))
                .count();
            let numerator = inside as f64 / chain.draws() as f64;
            let denominator = prior.mass(r);
            if denominator == 0.0 {
                return Err(Error::param(format!(
                    "region for genre {} time {} has no prior mass in {} simulations; increase the count",
                    g + 1,
                    t + 1,
                    prior.len()
                )));
            }
            let log10_bf = if numerator == 0.0 {
                f64::NEG_INFINITY
            } else {
                (numerator / denominator).log10()
            };
            out.push(BayesFactor {
                genre: g,
                time: t,
                numerator,
                denominator,
                log10_bf,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_draws_give_zero_width() {
        let (lo, hi) = hpd_interval(&[0.3; 200], 0.95).unwrap();
        assert_eq!((lo, hi), (0.3, 0.3));
        assert!(hpd_interval(&[0.3; 50], 0.95).is_err());
    }

    #[test]
    fn bounding_box_prune_agrees_with_density() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts: Vec<f64> = (0..600).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let r = KdeRegion::new(&pts, 2, 0.9).unwrap();
        for i in 0..400 {
            let x = [-6.0 + 0.03 * i as f64, 0.5];
            assert_eq!(r.contains(&x), r.density(&x) >= r.threshold());
        }
    }
}
