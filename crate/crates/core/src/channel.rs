//! Vectorized MIMO-OFDM channel synthesis.
//!
//! A link's channel is the sum over its pathways of a complex gain times the
//! combined delay-angular response `a_T(aod) ⊗ a_R(aoa) ⊗ a_tau(delay)`.
//! Element `(t, r, d)` of the vector sits at index `(t * M_R + r) * D + d`.

use std::f64::consts::PI;
use std::io::{Read, Write};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{point_segment_distance, Pathway, Point2, SPEED_OF_LIGHT};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WaveformSpec {
    /// Hz.
    pub carrier_frequency: f64,
    /// Signal bandwidth W, Hz. Delay bins are spaced 1/W apart.
    pub bandwidth: f64,
    /// Number of delay bins D; also the number of subcarriers.
    pub num_delay_bins: usize,
    /// Snapshots S averaged into each correlation estimate.
    pub num_snapshots: usize,
}

impl Default for WaveformSpec {
    fn default() -> Self {
        Self {
            carrier_frequency: 4.85001e9,
            bandwidth: 100e6,
            num_delay_bins: 128,
            num_snapshots: 10,
        }
    }
}

impl WaveformSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_delay_bins == 0 || self.num_snapshots == 0 {
            return Err(Error::Config("delay bins and snapshots must be at least 1".into()));
        }
        if !(self.bandwidth > 0.0 && self.carrier_frequency > 0.0) {
            return Err(Error::Config("bandwidth and carrier frequency must be positive".into()));
        }
        Ok(())
    }

    /// Subcarrier spacing W / D, Hz.
    pub fn subcarrier_spacing(&self) -> f64 {
        self.bandwidth / self.num_delay_bins as f64
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_frequency
    }

    /// Delay of bin `d`, seconds.
    pub fn delay_bin(&self, d: usize) -> f64 {
        d as f64 / self.bandwidth
    }
}

/// Cylindrical target seen as a disk in the 2-D plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetModel {
    pub center: Point2,
    pub radius: f64,
    /// Attenuation applied to each blocked path, dB. Infinite means the
    /// path is removed entirely.
    pub shadowing_depth_db: f64,
}

impl TargetModel {
    pub fn new(center: Point2, radius: f64, shadowing_depth_db: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::Config(format!("target radius must be positive, got {radius}")));
        }
        if shadowing_depth_db.is_nan() || shadowing_depth_db < 0.0 {
            return Err(Error::Config("shadowing depth must be non-negative".into()));
        }
        Ok(Self { center, radius, shadowing_depth_db })
    }

    /// Fully shadowing cylinder.
    pub fn absorber(center: Point2, radius: f64) -> Self {
        Self { center, radius, shadowing_depth_db: f64::INFINITY }
    }

    /// Amplitude factor applied to a blocked path.
    pub fn amplitude_factor(&self) -> f64 {
        if self.shadowing_depth_db.is_infinite() {
            0.0
        } else {
            10f64.powf(-self.shadowing_depth_db / 20.0)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSnapshot {
    pub link_index: usize,
    pub time_index: usize,
    pub tx_elements: usize,
    pub rx_elements: usize,
    pub delay_bins: usize,
    pub h: Vec<Complex64>,
}

/// ULA steering vector with half-wavelength spacing:
/// entry `m` is `exp(-j pi m sin(phi))`. The same form serves both the
/// transmit and the receive side.
pub fn steering_vector(phi: f64, elements: usize) -> Vec<Complex64> {
    let s = phi.sin();
    (0..elements)
        .map(|m| Complex64::from_polar(1.0, -PI * m as f64 * s))
        .collect()
}

/// Autocorrelation of a multitone preamble with a rectangular spectrum,
/// evaluated at lag `tau` seconds. The removable singularities at multiples
/// of `1 / spacing` take their limiting values.
pub fn autocorr(tau: f64, spec: &WaveformSpec) -> Complex64 {
    let d = spec.num_delay_bins as f64;
    let x = spec.subcarrier_spacing() * tau;
    let den = (PI * x).sin();
    let ratio = if den.abs() < 1e-12 {
        d * (PI * d * x).cos() / (PI * x).cos()
    } else {
        (PI * d * x).sin() / den
    };
    Complex64::from_polar(ratio / d, -PI * x)
}

/// The autocorrelation sampled at every delay bin, shifted by `tau`.
pub fn autocorr_vector(tau: f64, spec: &WaveformSpec) -> Vec<Complex64> {
    (0..spec.num_delay_bins)
        .map(|d| autocorr(spec.delay_bin(d) - tau, spec))
        .collect()
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for &x in a {
        out.extend(b.iter().map(|&y| x * y));
    }
    out
}

/// Combined delay-angular response of a pathway, unit gain.
pub fn path_response(path: &Pathway, spec: &WaveformSpec, tx_elements: usize, rx_elements: usize) -> Vec<Complex64> {
    let at = steering_vector(path.aod, tx_elements);
    let ar = steering_vector(path.aoa, rx_elements);
    let ad = autocorr_vector(path.delay, spec);
    kron(&kron(&at, &ar), &ad)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainModel {
    /// Loss per wall bounce, dB.
    pub reflection_loss_db: f64,
}

impl Default for GainModel {
    fn default() -> Self {
        Self { reflection_loss_db: 6.0 }
    }
}

/// Free-space amplitude with per-bounce loss and carrier phase rotation.
pub fn default_path_gain(path: &Pathway, spec: &WaveformSpec, model: &GainModel) -> Result<Complex64> {
    if !(path.total_distance > 0.0) {
        return Err(Error::Geometry("pathway has zero length".into()));
    }
    let lambda = spec.wavelength();
    let amplitude = lambda / (4.0 * PI * path.total_distance)
        * 10f64.powf(-model.reflection_loss_db * path.order() as f64 / 20.0);
    let phase = -2.0 * PI * spec.carrier_frequency * path.delay;
    Ok(Complex64::from_polar(amplitude, phase))
}

/// True iff some segment of the path passes through the open disk.
pub fn is_blocked(path: &Pathway, target: &TargetModel) -> bool {
    path.segments()
        .any(|(a, b)| point_segment_distance(target.center, a, b) < target.radius)
}

/// Product of amplitude factors of every target blocking the path.
pub fn blockage_factor(path: &Pathway, targets: &[TargetModel]) -> f64 {
    targets
        .iter()
        .filter(|t| is_blocked(path, t))
        .map(TargetModel::amplitude_factor)
        .product()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthesisConfig {
    /// Per-element complex noise variance in dB relative to unit amplitude;
    /// `-inf` disables noise.
    pub noise_power_db: f64,
    /// Standard deviation of the common per-snapshot phase rotation, degrees.
    pub phase_drift_std_deg: f64,
    pub seed: u64,
    /// Distinguishes independent measurements of the same link (for
    /// example baseline versus each target placement).
    pub stream: u64,
}

impl SynthesisConfig {
    pub fn noiseless(seed: u64) -> Self {
        Self { noise_power_db: f64::NEG_INFINITY, phase_drift_std_deg: 0.0, seed, stream: 0 }
    }
}

/// Noise-free, drift-free channel vector of a link.
pub fn deterministic_channel(
    pathways: &[Pathway],
    gains: &[Complex64],
    spec: &WaveformSpec,
    tx_elements: usize,
    rx_elements: usize,
    targets: &[TargetModel],
) -> Result<Vec<Complex64>> {
    if pathways.len() != gains.len() {
        return Err(Error::Contract(format!(
            "{} pathways but {} gains",
            pathways.len(),
            gains.len()
        )));
    }
    let len = tx_elements * rx_elements * spec.num_delay_bins;
    let mut h = vec![Complex64::new(0.0, 0.0); len];
    for (path, &gain) in pathways.iter().zip(gains) {
        let g = gain * blockage_factor(path, targets);
        if g == Complex64::new(0.0, 0.0) {
            continue;
        }
        let response = path_response(path, spec, tx_elements, rx_elements);
        for (acc, r) in h.iter_mut().zip(response) {
            *acc += g * r;
        }
    }
    Ok(h)
}

fn snapshot_rng(cfg: &SynthesisConfig, link_index: usize, snapshot: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    // One independent ChaCha stream per (measurement, link, snapshot).
    let stream = cfg
        .stream
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((link_index as u64) << 20)
        .wrapping_add(snapshot as u64);
    rng.set_stream(stream);
    rng
}

/// Synthesizes `spec.num_snapshots` snapshots of one link.
#[allow(clippy::too_many_arguments)]
pub fn synthesize_link(
    link_index: usize,
    pathways: &[Pathway],
    gains: &[Complex64],
    spec: &WaveformSpec,
    tx_elements: usize,
    rx_elements: usize,
    targets: &[TargetModel],
    cfg: &SynthesisConfig,
) -> Result<Vec<ChannelSnapshot>> {
    let clean = deterministic_channel(pathways, gains, spec, tx_elements, rx_elements, targets)?;
    Ok(snapshots_from_clean(link_index, &clean, spec, tx_elements, rx_elements, cfg))
}

/// Applies drift and noise to a precomputed clean channel.
pub fn snapshots_from_clean(
    link_index: usize,
    clean: &[Complex64],
    spec: &WaveformSpec,
    tx_elements: usize,
    rx_elements: usize,
    cfg: &SynthesisConfig,
) -> Vec<ChannelSnapshot> {
    let noise_std = if cfg.noise_power_db == f64::NEG_INFINITY {
        0.0
    } else {
        (10f64.powf(cfg.noise_power_db / 10.0) / 2.0).sqrt()
    };
    let drift_std = cfg.phase_drift_std_deg.to_radians();
    (0..spec.num_snapshots)
        .map(|t| {
            let mut rng = snapshot_rng(cfg, link_index, t);
            let rotation = if drift_std > 0.0 {
                let theta: f64 = rng.sample::<f64, _>(StandardNormal) * drift_std;
                Complex64::from_polar(1.0, theta)
            } else {
                Complex64::new(1.0, 0.0)
            };
            let h = clean
                .iter()
                .map(|&c| {
                    let mut v = c * rotation;
                    if noise_std > 0.0 {
                        let re: f64 = StandardNormal.sample(&mut rng);
                        let im: f64 = StandardNormal.sample(&mut rng);
                        v += Complex64::new(re * noise_std, im * noise_std);
                    }
                    v
                })
                .collect();
            ChannelSnapshot {
                link_index,
                time_index: t,
                tx_elements,
                rx_elements,
                delay_bins: spec.num_delay_bins,
                h,
            }
        })
        .collect()
}

/// Writes one record per link: a little-endian header of five `u32`
/// (link, M_T, M_R, D, S) followed by S snapshots of M_T·M_R·D complex
/// values, each stored as real then imaginary `f64`.
pub fn write_snapshot_record<W: Write>(mut writer: W, snapshots: &[ChannelSnapshot]) -> Result<()> {
    let first = snapshots
        .first()
        .ok_or_else(|| Error::Contract("cannot write an empty snapshot record".into()))?;
    let len = first.tx_elements * first.rx_elements * first.delay_bins;
    for s in snapshots {
        if s.link_index != first.link_index || s.h.len() != len {
            return Err(Error::Contract("snapshots in a record must share link and shape".into()));
        }
    }
    let header = [
        first.link_index,
        first.tx_elements,
        first.rx_elements,
        first.delay_bins,
        snapshots.len(),
    ];
    for v in header {
        let v = u32::try_from(v).map_err(|_| Error::Format(format!("header value {v} exceeds u32")))?;
        writer.write_all(&v.to_le_bytes())?;
    }
    for s in snapshots {
        for c in &s.h {
            writer.write_all(&c.re.to_le_bytes())?;
            writer.write_all(&c.im.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Reads one record written by [`write_snapshot_record`]. Returns `None`
/// at a clean end of input.
pub fn read_snapshot_record<R: Read>(mut reader: R) -> Result<Option<Vec<ChannelSnapshot>>> {
    let mut header = [0u32; 5];
    let mut buf = [0u8; 4];
    for (i, slot) in header.iter_mut().enumerate() {
        match reader.read_exact(&mut buf) {
            Ok(()) => *slot = u32::from_le_bytes(buf),
            Err(e) if i == 0 && e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
            Err(e) => return Err(Error::Format(format!("truncated snapshot header: {e}"))),
        }
    }
    let [link, mt, mr, d, s] = header.map(|v| v as usize);
    let len = mt * mr * d;
    let mut out = Vec::with_capacity(s);
    let mut val = [0u8; 8];
    for t in 0..s {
        let mut h = Vec::with_capacity(len);
        for _ in 0..len {
            reader
                .read_exact(&mut val)
                .map_err(|e| Error::Format(format!("truncated snapshot payload: {e}")))?;
            let re = f64::from_le_bytes(val);
            reader
                .read_exact(&mut val)
                .map_err(|e| Error::Format(format!("truncated snapshot payload: {e}")))?;
            let im = f64::from_le_bytes(val);
            h.push(Complex64::new(re, im));
        }
        out.push(ChannelSnapshot {
            link_index: link,
            time_index: t,
            tx_elements: mt,
            rx_elements: mr,
            delay_bins: d,
            h,
        });
    }
    Ok(Some(out))
}
