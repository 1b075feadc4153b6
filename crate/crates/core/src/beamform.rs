//! Per-pathway RSS change by double-directional delay-angular beamforming.
//!
//! For each pathway the combined response `a` is used as a matched filter
//! on the current and baseline snapshots; the ratio of beam powers in dB is
//! the pathway's RSS change. Correlation matrices never need to be formed:
//! with `c_s = h_sᴴ a`, `aᴴRa = mean |c_s|²` and
//! `aᴴRRᴴa = cᴴ G c / S²` where `G` is the Gram matrix of the snapshots.

use std::io::Write;
use std::sync::OnceLock;

use log::warn;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{path_response, ChannelSnapshot, WaveformSpec};
use crate::error::{Error, Result};
use crate::geometry::Pathway;

/// Sample correlation matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub dim: usize,
    pub data: Vec<Complex64>,
    pub snapshot_count: usize,
}

impl CorrelationMatrix {
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.dim + j]
    }

    pub fn identity(dim: usize) -> Self {
        let mut data = vec![Complex64::new(0.0, 0.0); dim * dim];
        for i in 0..dim {
            data[i * dim + i] = Complex64::new(1.0, 0.0);
        }
        Self { dim, data, snapshot_count: 0 }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `‖R - Rᴴ‖_F`.
    pub fn hermitian_defect(&self) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                acc += (self.get(i, j) - self.get(j, i).conj()).norm_sqr();
            }
        }
        acc.sqrt()
    }

    fn mul_vec(&self, a: &[Complex64]) -> Vec<Complex64> {
        (0..self.dim)
            .map(|i| {
                self.data[i * self.dim..(i + 1) * self.dim]
                    .iter()
                    .zip(a)
                    .map(|(r, x)| r * x)
                    .sum()
            })
            .collect()
    }

    /// `Rᴴ a`.
    fn adjoint_mul_vec(&self, a: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.dim];
        for i in 0..self.dim {
            let ai = a[i];
            for (j, o) in out.iter_mut().enumerate() {
                *o += self.data[i * self.dim + j].conj() * ai;
            }
        }
        out
    }
}

fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Sample mean of `h hᴴ` over the snapshots.
pub fn correlation(snapshots: &[ChannelSnapshot]) -> Result<CorrelationMatrix> {
    let first = snapshots
        .first()
        .ok_or_else(|| Error::Contract("correlation needs at least one snapshot".into()))?;
    let dim = first.h.len();
    if snapshots.iter().any(|s| s.h.len() != dim) {
        return Err(Error::Contract("snapshots differ in length".into()));
    }
    let mut data = vec![Complex64::new(0.0, 0.0); dim * dim];
    for s in snapshots {
        for i in 0..dim {
            let hi = s.h[i];
            let row = &mut data[i * dim..(i + 1) * dim];
            for (r, hj) in row.iter_mut().zip(&s.h) {
                *r += hi * hj.conj();
            }
        }
    }
    let scale = 1.0 / snapshots.len() as f64;
    data.iter_mut().for_each(|c| *c *= scale);
    Ok(CorrelationMatrix { dim, data, snapshot_count: snapshots.len() })
}

/// `aᴴ R Rᴴ a`, the quadratic form as printed in the beam-power ratio.
pub fn beam_power(r: &CorrelationMatrix, a: &[Complex64]) -> Result<f64> {
    if a.len() != r.dim {
        return Err(Error::Contract(format!(
            "steering vector length {} does not match correlation dimension {}",
            a.len(),
            r.dim
        )));
    }
    let v = r.adjoint_mul_vec(a);
    Ok(v.iter().map(|c| c.norm_sqr()).sum())
}

/// `aᴴ R a`, the expected matched-filter output power.
pub fn beam_power_expectation(r: &CorrelationMatrix, a: &[Complex64]) -> Result<f64> {
    if a.len() != r.dim {
        return Err(Error::Contract(format!(
            "steering vector length {} does not match correlation dimension {}",
            a.len(),
            r.dim
        )));
    }
    Ok(inner(a, &r.mul_vec(a)).re.max(0.0))
}

/// Which quadratic form turns a correlation into beam power.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BeamformerForm {
    /// `aᴴRa`.
    #[default]
    Expectation,
    /// `aᴴRRᴴa`.
    Printed,
}

/// Snapshot set with its Gram matrix, enough to evaluate either quadratic
/// form without building the full correlation matrix.
#[derive(Debug, Clone)]
pub struct SnapshotStatistics {
    snapshots: Vec<Vec<Complex64>>,
    gram: OnceLock<Vec<Complex64>>,
    dim: usize,
}

impl SnapshotStatistics {
    pub fn new(snapshots: &[ChannelSnapshot]) -> Result<Self> {
        let first = snapshots
            .first()
            .ok_or_else(|| Error::Contract("beamforming needs at least one snapshot".into()))?;
        let dim = first.h.len();
        if snapshots.iter().any(|s| s.h.len() != dim) {
            return Err(Error::Contract("snapshots differ in length".into()));
        }
        let hs: Vec<Vec<Complex64>> = snapshots.iter().map(|s| s.h.clone()).collect();
        Ok(Self { snapshots: hs, gram: OnceLock::new(), dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Gram matrix `G_st = h_s^H h_t`, computed on first use.
    fn gram(&self) -> &[Complex64] {
        self.gram.get_or_init(|| {
            let hs = &self.snapshots;
            let n = hs.len();
            let mut gram = vec![Complex64::new(0.0, 0.0); n * n];
            for s in 0..n {
                for t in s..n {
                    let g = inner(&hs[s], &hs[t]);
                    gram[s * n + t] = g;
                    gram[t * n + s] = g.conj();
                }
            }
            gram
        })
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    /// Beam power toward `a` under the given form.
    pub fn power(&self, a: &[Complex64], form: BeamformerForm) -> f64 {
        let n = self.snapshots.len();
        let c: Vec<Complex64> = self.snapshots.iter().map(|h| inner(h, a)).collect();
        let nf = n as f64;
        match form {
            BeamformerForm::Expectation => c.iter().map(|x| x.norm_sqr()).sum::<f64>() / nf,
            BeamformerForm::Printed => {
                let gram = self.gram();
                let mut acc = Complex64::new(0.0, 0.0);
                for s in 0..n {
                    for t in 0..n {
                        acc += c[s].conj() * gram[s * n + t] * c[t];
                    }
                }
                (acc.re / (nf * nf)).max(0.0)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RssConfig {
    /// Lower clamp on every RSS change, dB.
    pub floor_db: f64,
    pub form: BeamformerForm,
    /// A pathway whose baseline beam power is below this fraction of the
    /// link's summed baseline beam power is dropped as degenerate.
    pub degenerate_ratio: f64,
}

impl Default for RssConfig {
    fn default() -> Self {
        Self { floor_db: -60.0, form: BeamformerForm::Expectation, degenerate_ratio: 1e-15 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PathKey {
    pub link: usize,
    pub path: usize,
}

/// A pathway excluded from the observation vector.
#[derive(Debug, Clone, PartialEq)]
pub struct DegenerateRecord {
    pub key: PathKey,
    pub baseline_power: f64,
}

/// RSS changes of one link, aligned with its pathway list.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkRssChange {
    pub link_index: usize,
    /// `None` for degenerate pathways.
    pub values: Vec<Option<f64>>,
    pub degenerate: Vec<DegenerateRecord>,
}

/// Beam power of every pathway under a snapshot set.
pub fn pathway_powers(
    stats: &SnapshotStatistics,
    pathways: &[Pathway],
    spec: &WaveformSpec,
    tx_elements: usize,
    rx_elements: usize,
    form: BeamformerForm,
) -> Result<Vec<f64>> {
    if tx_elements * rx_elements * spec.num_delay_bins != stats.dim() {
        return Err(Error::Contract(format!(
            "snapshot length {} does not match {tx_elements}x{rx_elements}x{}",
            stats.dim(),
            spec.num_delay_bins
        )));
    }
    Ok(pathways
        .iter()
        .map(|p| stats.power(&path_response(p, spec, tx_elements, rx_elements), form))
        .collect())
}

/// RSS change of each pathway of one link from precomputed beam powers.
pub fn rss_change_from_powers(
    link_index: usize,
    pathways: &[Pathway],
    current: &[f64],
    baseline: &[f64],
    cfg: &RssConfig,
) -> Result<LinkRssChange> {
    if pathways.is_empty() {
        return Err(Error::Contract("no pathways to beamform".into()));
    }
    if current.len() != pathways.len() || baseline.len() != pathways.len() {
        return Err(Error::Contract("beam power count does not match pathways".into()));
    }
    let total: f64 = baseline.iter().sum();
    let mut values = Vec::with_capacity(pathways.len());
    let mut degenerate = Vec::new();
    for ((path, &cur), &base) in pathways.iter().zip(current).zip(baseline) {
        if !(base > 0.0) || base < cfg.degenerate_ratio * total {
            let key = PathKey { link: link_index, path: path.path_index };
            warn!("link {} path {}: degenerate baseline beam power {base:e}", key.link, key.path);
            degenerate.push(DegenerateRecord { key, baseline_power: base });
            values.push(None);
            continue;
        }
        let db = 10.0 * (cur / base).log10();
        let db = if db.is_nan() { cfg.floor_db } else { db.max(cfg.floor_db) };
        values.push(Some(db));
    }
    Ok(LinkRssChange { link_index, values, degenerate })
}

/// RSS change of every pathway of one link.
pub fn rss_change(
    current: &[ChannelSnapshot],
    baseline: &[ChannelSnapshot],
    pathways: &[Pathway],
    spec: &WaveformSpec,
    cfg: &RssConfig,
) -> Result<LinkRssChange> {
    let first = baseline
        .first()
        .ok_or_else(|| Error::Contract("baseline snapshot set is empty".into()))?;
    if current.is_empty() {
        return Err(Error::Contract("current snapshot set is empty".into()));
    }
    let (mt, mr) = (first.tx_elements, first.rx_elements);
    let cur = pathway_powers(&SnapshotStatistics::new(current)?, pathways, spec, mt, mr, cfg.form)?;
    let base = pathway_powers(&SnapshotStatistics::new(baseline)?, pathways, spec, mt, mr, cfg.form)?;
    rss_change_from_powers(first.link_index, pathways, &cur, &base, cfg)
}

/// Stacked RSS changes over all links. `keys[u]` names the pathway behind
/// global index `u`; links appear in order and paths in trace order, with
/// degenerate paths left out.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RssChangeVector {
    pub values: Vec<f64>,
    pub keys: Vec<PathKey>,
    pub orders: Vec<usize>,
    pub dropped: Vec<DegenerateRecord>,
}

impl RssChangeVector {
    pub fn from_links(links: &[(LinkRssChange, &[Pathway])]) -> Self {
        let mut out = RssChangeVector::default();
        for (change, paths) in links {
            for (v, p) in change.values.iter().zip(paths.iter()) {
                if let Some(v) = v {
                    out.values.push(*v);
                    out.keys.push(PathKey { link: change.link_index, path: p.path_index });
                    out.orders.push(p.order());
                }
            }
            out.dropped.extend(change.degenerate.iter().cloned());
        }
        out
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Global index of a pathway, if it was kept.
    pub fn index_of(&self, key: PathKey) -> Option<usize> {
        self.keys.iter().position(|k| *k == key)
    }

    /// Writes `link,path_index,order,delta_y_db` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut csv = csv::Writer::from_writer(writer);
        csv.write_record(["link", "path_index", "order", "delta_y_db"])?;
        for ((k, o), v) in self.keys.iter().zip(&self.orders).zip(&self.values) {
            csv.write_record([k.link.to_string(), k.path.to_string(), o.to_string(), v.to_string()])?;
        }
        csv.flush()?;
        Ok(())
    }
}
