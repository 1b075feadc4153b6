use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::beamform::{rss_change_from_powers, PathKey, RssChangeVector, SnapshotStatistics};
use crate::channel::{
    blockage_factor, default_path_gain, deterministic_channel, path_response, snapshots_from_clean, ChannelSnapshot,
    GainModel, SynthesisConfig, TargetModel,
};
use crate::error::{Error, Result};
use crate::geometry::{enumerate_links, trace_pathways, Link, Pathway, Point2, Scene};
use crate::locate::{binarize, cluster_image, estimate_positions, localization_error, LocalizationResult};
use crate::rti::{build_weight_matrix, elastic_net, ElasticNetConfig, VoxelImage, WeightMatrix};

use super::config::Config;

/// One link with its traced pathways and noise-free baseline channel.
#[derive(Debug, Clone)]
pub struct PreparedLink {
    pub link: Link,
    pub tx_elements: usize,
    pub rx_elements: usize,
    /// Pathways present in the synthesized channel.
    pub paths: Vec<Pathway>,
    pub gains: Vec<Complex64>,
    /// Leading pathways used for imaging.
    pub imaging_count: usize,
    pub clean_baseline: Vec<Complex64>,
    pub baseline_powers: Vec<f64>,
    pub baseline: Vec<ChannelSnapshot>,
}

impl PreparedLink {
    pub fn imaging_paths(&self) -> &[Pathway] {
        &self.paths[..self.imaging_count]
    }
}

/// Scene state shared by every target position of a run: geometry,
/// pathways and the baseline measurement.
#[derive(Debug, Clone)]
pub struct PreparedScene {
    pub config: Config,
    pub scene: Scene,
    pub seed: u64,
    pub links: Vec<PreparedLink>,
    /// First weight-matrix row of each link.
    pub row_offsets: Vec<usize>,
}

fn synthesis(config: &Config, spec_wavelength: f64, seed: u64, stream: u64) -> SynthesisConfig {
    // Noise is specified relative to the free-space power at 1 m.
    let reference_db = 20.0 * (spec_wavelength / (4.0 * PI)).log10();
    SynthesisConfig {
        noise_power_db: config.channel.noise_power_db + reference_db,
        phase_drift_std_deg: config.channel.phase_drift_std_deg,
        seed,
        stream,
    }
}

impl PreparedScene {
    pub fn new(config: &Config, seed: u64) -> Result<Self> {
        config.validate()?;
        let scene = config.scene()?;
        let topology = enumerate_links(&scene)?;
        let spec = config.waveform;
        let gain_model = GainModel { reflection_loss_db: config.channel.reflection_loss_db };
        let imaging_order = config.imaging_order()?;
        let base_cfg = synthesis(config, spec.wavelength(), seed, 0);
        let form = config.beamform.form;
        let links = topology
            .links
            .par_iter()
            .map(|link| -> Result<PreparedLink> {
                let tx = scene.node(link.tx).expect("link endpoints exist");
                let rx = scene.node(link.rx).expect("link endpoints exist");
                let paths = trace_pathways(&scene, link, config.channel.max_order)?;
                let gains = paths
                    .iter()
                    .map(|p| default_path_gain(p, &spec, &gain_model))
                    .collect::<Result<Vec<_>>>()?;
                let imaging_count = paths.iter().take_while(|p| p.order() <= imaging_order).count();
                let (mt, mr) = (tx.num_elements, rx.num_elements);
                let clean_baseline = deterministic_channel(&paths, &gains, &spec, mt, mr, &[])?;
                let baseline = snapshots_from_clean(link.index, &clean_baseline, &spec, mt, mr, &base_cfg);
                let stats = SnapshotStatistics::new(&baseline)?;
                let baseline_powers = paths[..imaging_count]
                    .iter()
                    .map(|p| stats.power(&path_response(p, &spec, mt, mr), form))
                    .collect();
                Ok(PreparedLink {
                    link: *link,
                    tx_elements: mt,
                    rx_elements: mr,
                    paths,
                    gains,
                    imaging_count,
                    clean_baseline,
                    baseline_powers,
                    baseline,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut row_offsets = Vec::with_capacity(links.len());
        let mut rows = 0;
        for l in &links {
            row_offsets.push(rows);
            rows += l.imaging_count;
        }
        Ok(Self { config: config.clone(), scene, seed, links, row_offsets })
    }

    /// Every imaging pathway in weight-matrix row order.
    pub fn imaging_pathways(&self) -> Vec<Pathway> {
        self.links.iter().flat_map(|l| l.imaging_paths().iter().cloned()).collect()
    }

    pub fn all_pathways(&self) -> Vec<Pathway> {
        self.links.iter().flat_map(|l| l.paths.iter().cloned()).collect()
    }

    pub fn weights(&self, gamma: f64) -> Result<WeightMatrix> {
        build_weight_matrix(&self.imaging_pathways(), &self.scene.voxel_grid, gamma)
    }

    pub fn targets_at(&self, positions: &[Point2]) -> Result<Vec<TargetModel>> {
        positions
            .iter()
            .map(|&p| TargetModel::new(p, self.config.channel.target_radius, self.config.channel.shadowing_depth_db))
            .collect()
    }

    /// RSS changes with targets at `positions`. `stream` selects the noise
    /// realization; an empty target set reuses the baseline measurement.
    pub fn measure(&self, positions: &[Point2], stream: u64) -> Result<RssChangeVector> {
        let spec = self.config.waveform;
        let targets = self.targets_at(positions)?;
        let cfg = synthesis(&self.config, spec.wavelength(), self.seed, stream);
        let form = self.config.beamform.form;
        let mut per_link = Vec::with_capacity(self.links.len());
        for l in &self.links {
            let (mt, mr) = (l.tx_elements, l.rx_elements);
            let current_powers: Vec<f64> = if targets.is_empty() {
                l.baseline_powers.clone()
            } else {
                let mut clean = l.clean_baseline.clone();
                for (p, g) in l.paths.iter().zip(&l.gains) {
                    let f = blockage_factor(p, &targets);
                    if f != 1.0 {
                        let scale = g * (f - 1.0);
                        for (c, r) in clean.iter_mut().zip(path_response(p, &spec, mt, mr)) {
                            *c += scale * r;
                        }
                    }
                }
                let snaps = snapshots_from_clean(l.link.index, &clean, &spec, mt, mr, &cfg);
                let stats = SnapshotStatistics::new(&snaps)?;
                l.imaging_paths()
                    .iter()
                    .map(|p| stats.power(&path_response(p, &spec, mt, mr), form))
                    .collect()
            };
            let change = rss_change_from_powers(
                l.link.index,
                l.imaging_paths(),
                &current_powers,
                &l.baseline_powers,
                &self.config.beamform,
            )?;
            per_link.push((change, l.imaging_paths()));
        }
        Ok(RssChangeVector::from_links(&per_link))
    }

    /// Weight-matrix row of a pathway.
    pub fn row_of(&self, key: PathKey) -> usize {
        self.row_offsets[key.link] + key.path
    }
}

/// Everything produced for one target position.
#[derive(Debug, Clone)]
pub struct PositionOutcome {
    pub index: usize,
    pub truth: Vec<Point2>,
    pub rss: RssChangeVector,
    pub image: Option<VoxelImage>,
    pub estimates: Vec<Point2>,
    pub shortfall: bool,
    pub result: Option<LocalizationResult>,
    /// Degeneracy encountered while processing this position.
    pub note: Option<String>,
}

impl PositionOutcome {
    pub fn errors(&self) -> &[f64] {
        self.result.as_ref().map(|r| r.errors.as_slice()).unwrap_or(&[])
    }
}

/// Image reconstruction and localization for one measurement.
pub fn localize(
    prepared: &PreparedScene,
    weights: &WeightMatrix,
    rss: &RssChangeVector,
    elastic: &ElasticNetConfig,
    threshold: f64,
    truth: &[Point2],
) -> Result<(VoxelImage, Vec<Point2>, bool)> {
    let cfg = &prepared.config;
    let rows: Vec<usize> = rss.keys.iter().map(|k| prepared.row_of(*k)).collect();
    let selected;
    let w = if rows.len() == weights.w.nrows() {
        weights
    } else {
        selected = WeightMatrix { w: weights.w.select_rows(&rows), gamma: weights.gamma };
        &selected
    };
    if rss.is_empty() {
        return Err(Error::Contract("no usable pathways remain".into()));
    }
    // Attenuation is the RSS drop.
    let observation: Vec<f64> = rss.values.iter().map(|v| -v).collect();
    let image = elastic_net(w, &observation, &prepared.scene.voxel_grid, elastic)?;
    let binary = binarize(&image, threshold);
    let clusters = cluster_image(&image, &binary, cfg.locate.eps, cfg.locate.min_pts);
    let est = estimate_positions(&clusters, truth.len().max(1));
    let points = if truth.is_empty() && binary.active.is_empty() { Vec::new() } else { est.points };
    Ok((image, points, est.shortfall && !truth.is_empty()))
}

/// Runs one target position end to end. Failures inside the imaging
/// stage are recorded on the outcome and charged the penalty distance.
pub fn process_position(
    prepared: &PreparedScene,
    weights: &WeightMatrix,
    index: usize,
    truth: &[Point2],
    rss: RssChangeVector,
    elastic: &ElasticNetConfig,
    threshold: f64,
) -> Result<PositionOutcome> {
    let penalty = prepared.config.penalty()?;
    let (image, estimates, shortfall, note) = match localize(prepared, weights, &rss, elastic, threshold, truth) {
        Ok((image, est, shortfall)) => {
            let note = if shortfall { Some("fewer clusters than targets".to_string()) } else { None };
            (Some(image), est, shortfall, note)
        }
        Err(e @ (Error::Contract(_) | Error::Geometry(_))) => (None, Vec::new(), !truth.is_empty(), Some(e.to_string())),
        Err(e) => return Err(e),
    };
    if let Some(n) = &note {
        log::warn!("position {index}: {n}");
    }
    let result = if truth.is_empty() { None } else { Some(localization_error(&estimates, truth, penalty)?) };
    Ok(PositionOutcome { index, truth: truth.to_vec(), rss, image, estimates, shortfall, result, note })
}

/// Target sets of a run: one single-target scene per configured position,
/// or one empty scene when the position list is empty.
pub fn scenes_of(config: &Config) -> Result<Vec<Vec<Point2>>> {
    let positions = config.target_positions()?;
    if positions.is_empty() {
        return Ok(vec![Vec::new()]);
    }
    Ok(positions.into_iter().map(|p| vec![p]).collect())
}

/// Runs every scene of a configuration, in parallel, ordered by index.
pub fn run_positions(prepared: &PreparedScene, scenes: &[Vec<Point2>]) -> Result<Vec<PositionOutcome>> {
    let cfg = &prepared.config;
    let weights = prepared.weights(cfg.rti.gamma)?;
    scenes
        .par_iter()
        .enumerate()
        .map(|(i, truth)| {
            let stream = if truth.is_empty() { 0 } else { i as u64 + 1 };
            let rss = prepared.measure(truth, stream)?;
            process_position(prepared, &weights, i, truth, rss, &cfg.elastic_net, cfg.locate.threshold)
        })
        .collect()
}
