//! Per-agent self-supervised sensing: camera localization, CSI geodesics,
//! cross-modal alignment, channel charting and online state estimation.

pub mod align;
pub mod assign;
pub mod charting;
pub mod distance;
pub mod metrics;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::env::{AgentObservation, Camera, Channel, Env};
use crate::error::{Error, Result};

pub use align::{harden_matching, solve_alignment, AlignOptions, Alignment, MatchingMatrix};
pub use charting::{train_charting, ChartingData, ChartingModel, ChartingOptions, FeatureSpec};
pub use distance::{adp_dissimilarity, geodesic_matrix, DistanceMatrix};
pub use metrics::{chart_metrics, ChartMetrics};

/// Ground position seen at a pixel of `camera`.
pub fn pixel_to_position(camera: &Camera, pixel: [f64; 2]) -> Result<[f64; 2]> {
    camera.pixel_to_position(pixel)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Image,
    Csi,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub position: [f64; 2],
    pub modality: Modality,
    truth: Option<usize>,
}

impl Estimate {
    pub fn new(position: [f64; 2], modality: Modality) -> Self {
        Estimate { position, modality, truth: None }
    }

    pub fn truth_for_evaluation(&self) -> Option<usize> {
        self.truth
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EstimatedState {
    pub entries: Vec<Estimate>,
}

impl EstimatedState {
    pub fn positions(&self) -> Vec<[f64; 2]> {
        self.entries.iter().map(|e| e.position).collect()
    }

    /// Positions relative to `origin`.
    pub fn relative_to(&self, origin: [f64; 2]) -> Vec<[f64; 2]> {
        self.entries.iter().map(|e| [e.position[0] - origin[0], e.position[1] - origin[1]]).collect()
    }

    /// Smallest distance between two entries (∞ below two entries).
    pub fn min_separation(&self) -> f64 {
        let mut best = f64::INFINITY;
        for (i, a) in self.entries.iter().enumerate() {
            for b in &self.entries[i + 1..] {
                best = best.min((a.position[0] - b.position[0]).hypot(a.position[1] - b.position[1]));
            }
        }
        best
    }
}

/// Default duplicate radius: a typical vehicle length.
pub const DEFAULT_DEDUP_M: f64 = 4.5;

/// Keep image estimates first, then CSI estimates; an entry within `delta`
/// of one already kept is dropped.
pub fn dedup(image: Vec<Estimate>, csi: Vec<Estimate>, delta: f64) -> EstimatedState {
    let mut kept: Vec<Estimate> = Vec::with_capacity(image.len() + csi.len());
    for e in image.into_iter().chain(csi) {
        if kept.iter().all(|k| (k.position[0] - e.position[0]).hypot(k.position[1] - e.position[1]) >= delta) {
            kept.push(e);
        }
    }
    EstimatedState { entries: kept }
}

/// Online estimate of one agent's vehicles from its observation.
/// Detections whose pixel does not meet the ground are skipped.
pub fn infer_state(obs: &AgentObservation, cameras: &[Camera], model: &ChartingModel, delta: f64) -> Result<EstimatedState> {
    let mut image = Vec::new();
    for d in &obs.detections {
        let cam = cameras
            .get(d.camera)
            .ok_or_else(|| Error::Invalid(format!("detection from unknown camera {}", d.camera)))?;
        if let Ok(p) = cam.pixel_to_position(d.pixel) {
            image.push(Estimate { position: p, modality: Modality::Image, truth: Some(d.truth_for_evaluation()) });
        }
    }
    let mut csi = Vec::new();
    if !obs.channels.is_empty() {
        let feats = obs
            .channels
            .iter()
            .map(|c| charting::channel_features(&c.channel, &model.spec))
            .collect::<Result<Vec<_>>>()?;
        for (p, c) in model.predict_features(&feats).into_iter().zip(&obs.channels) {
            csi.push(Estimate { position: p, modality: Modality::Csi, truth: Some(c.truth_for_evaluation()) });
        }
    }
    Ok(dedup(image, csi, delta))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensingConfig {
    pub agent: usize,
    /// Unlabelled CSI samples used for the geodesic and the chart.
    pub n_train: usize,
    /// Image samples; their CSI counterparts are aligned blindly.
    pub n_images: usize,
    pub n_test: usize,
    pub knn: usize,
    pub dedup_m: f64,
    /// Fraction of matching rows scrambled before charting.
    pub matching_perturbation: f64,
    pub align: AlignOptions,
    pub charting: ChartingOptions,
    /// Correct the trained chart by an affine fit on the matched anchors.
    pub refine_affine: bool,
}

impl Default for SensingConfig {
    fn default() -> Self {
        SensingConfig {
            agent: 0,
            n_train: 400,
            n_images: 100,
            n_test: 200,
            knn: 20,
            dedup_m: DEFAULT_DEDUP_M,
            matching_perturbation: 0.0,
            align: AlignOptions::default(),
            charting: ChartingOptions::default(),
            refine_affine: true,
        }
    }
}

impl SensingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.agent >= crate::env::N_AGENTS {
            return Err(Error::Config(format!("agent {} out of range", self.agent)));
        }
        if self.n_images == 0 || self.n_images > self.n_train {
            return Err(Error::Config("need 0 < n_images ≤ n_train".into()));
        }
        if self.n_train < self.knn + 1 {
            return Err(Error::Config(format!("n_train must exceed knn = {}", self.knn)));
        }
        if self.n_test < 10 {
            return Err(Error::Config("n_test must be at least 10".into()));
        }
        if !(0.0..=1.0).contains(&self.matching_perturbation) {
            return Err(Error::Config("matching_perturbation must lie in [0,1]".into()));
        }
        Ok(())
    }
}

/// Labelled CSI samples of one agent.
#[derive(Debug, Clone)]
pub struct CsiDataset {
    pub positions: Vec<[f64; 2]>,
    pub channels: Vec<Channel>,
}

pub fn feature_spec(env: &Env) -> FeatureSpec {
    FeatureSpec { panels: 4, n_h: env.cfg.n_h, n_v: env.cfg.n_v, n_subcarriers: env.cfg.subcarriers }
}

/// Uniform vehicle positions on the agent's arm with their channels.
pub fn sample_dataset<R: Rng>(env: &Env, agent: usize, n: usize, rng: &mut R) -> Result<CsiDataset> {
    let positions: Vec<[f64; 2]> = (0..n).map(|_| env.world_position(agent, &env.random_vehicle(rng))).collect();
    let channels = positions.iter().map(|p| env.synth_channel(agent, *p)).collect::<Result<_>>()?;
    Ok(CsiDataset { positions, channels })
}

#[derive(Debug, Clone)]
pub struct SensingReport {
    pub agent: usize,
    /// Relative error of the optimally scaled geodesic against true distances.
    pub geodesic_rel_err: f64,
    pub match_accuracy: f64,
    /// Mean distance between each image and the true position of its hard match.
    pub match_err_m: f64,
    pub eta: f64,
    pub alignment: Alignment,
    pub proposed: ChartMetrics,
    pub baseline: ChartMetrics,
    /// Baseline chart with the affine map fitted on the test ground truth.
    pub baseline_oracle: ChartMetrics,
    pub test_truth: Vec<[f64; 2]>,
    pub test_estimates: Vec<[f64; 2]>,
    pub baseline_estimates: Vec<[f64; 2]>,
    pub charting_loss: Vec<f64>,
    pub model: ChartingModel,
}

/// Sum-of-squares optimal scale s minimizing ‖s·G − T‖; returns relative error.
pub fn scaled_relative_error(g: &DistanceMatrix, t: &DistanceMatrix) -> f64 {
    let (mut gt, mut gg, mut tt) = (0.0, 0.0, 0.0);
    for (a, b) in g.data().iter().zip(t.data()) {
        gt += a * b;
        gg += a * a;
        tt += b * b;
    }
    let s = if gg > 0.0 { gt / gg } else { 0.0 };
    let err: f64 = g.data().iter().zip(t.data()).map(|(a, b)| (s * a - b).powi(2)).sum();
    (err / tt.max(f64::MIN_POSITIVE)).sqrt()
}

/// Full offline pipeline for one agent plus evaluation on fresh samples.
/// Offline datasets: unlabelled CSI, camera-localized positions, the CSI of
/// those same vehicles in unknown order, and a held-out test set.
#[derive(Debug, Clone)]
pub struct SensingData {
    pub agent: usize,
    /// Unlabelled CSI; positions are kept for evaluation only.
    pub train: CsiDataset,
    pub image_positions: Vec<[f64; 2]>,
    /// Train index behind each image sample (evaluation only).
    pub image_truth: Vec<usize>,
    /// Train indices of the image vehicles' CSI, shuffled.
    pub csi_index: Vec<usize>,
    pub test: CsiDataset,
}

pub fn generate_sensing_data(env: &Env, cfg: &SensingConfig, seed: u64) -> Result<SensingData> {
    cfg.validate()?;
    let a = cfg.agent;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let train = sample_dataset(env, a, cfg.n_train, &mut rng)?;
    // samples that a camera sees, with their localized positions
    let mut seen: Vec<(usize, [f64; 2])> = Vec::new();
    for (i, p) in train.positions.iter().enumerate() {
        if seen.len() == cfg.n_images {
            break;
        }
        if let Some((c, mut px)) = env.visible_camera(a, *p) {
            let cam = &env.scene.cameras[a][c];
            if env.cfg.pixel_noise_px > 0.0 {
                px[0] = (px[0] + env.cfg.pixel_noise_px * rng.sample::<f64, _>(StandardNormal)).clamp(0.0, cam.width_px);
                px[1] = (px[1] + env.cfg.pixel_noise_px * rng.sample::<f64, _>(StandardNormal)).clamp(0.0, cam.height_px);
            }
            if let Ok(q) = cam.pixel_to_position(px) {
                seen.push((i, q));
            }
        }
    }
    if seen.len() < 3 {
        return Err(Error::Domain { op: "generate_sensing_data", detail: format!("only {} samples visible to cameras", seen.len()) });
    }
    let mut csi_index: Vec<usize> = seen.iter().map(|s| s.0).collect();
    csi_index.shuffle(&mut rng);
    let test = sample_dataset(env, a, cfg.n_test, &mut rng)?;
    Ok(SensingData {
        agent: a,
        train,
        image_positions: seen.iter().map(|s| s.1).collect(),
        image_truth: seen.iter().map(|s| s.0).collect(),
        csi_index,
        test,
    })
}

/// Generate the datasets and run the offline pipeline on them.
pub fn run_sensing(env: &Env, cfg: &SensingConfig, seed: u64) -> Result<SensingReport> {
    let data = generate_sensing_data(env, cfg, seed)?;
    process_sensing(env, cfg, &data, seed)
}

/// Geodesic CSI distances, blind alignment, charting, and the CSI-only
/// baseline on the same data.
pub fn process_sensing(env: &Env, cfg: &SensingConfig, data: &SensingData, seed: u64) -> Result<SensingReport> {
    cfg.validate()?;
    let a = data.agent;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5e45_1e55);
    let spec = feature_spec(env);
    let train = &data.train;
    let profiles: Vec<_> = train.channels.iter().map(distance::DelayProfile::new).collect();
    let adp = distance::adp_matrix(&profiles)?;
    let geo = geodesic_matrix(&adp, cfg.knn)?;
    let geodesic_rel_err = scaled_relative_error(&geo, &DistanceMatrix::euclidean(&train.positions));

    let image_pos = &data.image_positions;
    let csi_idx = &data.csi_index;
    if image_pos.len() != data.image_truth.len() || csi_idx.len() != image_pos.len() {
        return Err(Error::Invalid("image and CSI sample counts differ".into()));
    }
    if let Some(&bad) = csi_idx.iter().chain(&data.image_truth).find(|&&i| i >= train.channels.len()) {
        return Err(Error::Invalid(format!("sample index {bad} outside the CSI dataset")));
    }
    let d_im = DistanceMatrix::euclidean(image_pos);
    let d_csi = geo.submatrix(csi_idx);
    let alignment = solve_alignment(&d_im, &d_csi, &cfg.align)?;
    let matching = alignment.matching.perturb_rows(cfg.matching_perturbation, &mut rng);
    let hard = harden_matching(&matching);
    let correct = hard.iter().enumerate().filter(|(i, &c)| csi_idx[c] == data.image_truth[*i]).count();
    let match_accuracy = correct as f64 / hard.len() as f64;
    let match_err_m = hard
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let t = train.positions[csi_idx[c]];
            (t[0] - image_pos[i][0]).hypot(t[1] - image_pos[i][1])
        })
        .sum::<f64>()
        / hard.len() as f64;
    let anchors: Vec<([f64; 2], usize)> = hard.iter().enumerate().map(|(i, &c)| (image_pos[i], csi_idx[c])).collect();

    let features = train.channels.iter().map(|c| charting::channel_features(c, &spec)).collect::<Result<Vec<_>>>()?;
    let chart_data = ChartingData { features: &features, geodesic: &geo, anchors: &anchors, eta: alignment.eta };
    let (mut model, charting_loss) = train_charting(spec, &chart_data, &cfg.charting)?;
    if cfg.refine_affine {
        let at_anchors = model.predict_features(&anchors.iter().map(|a| features[a.1].clone()).collect::<Vec<_>>());
        model.post = charting::fit_affine_map(&at_anchors, &anchors.iter().map(|a| a.0).collect::<Vec<_>>())?;
    }

    let test = &data.test;
    let test_feats = test.channels.iter().map(|c| charting::channel_features(c, &spec)).collect::<Result<Vec<_>>>()?;
    let test_estimates = model.predict_features(&test_feats);
    let proposed = chart_metrics(&test_estimates, &test.positions)?;

    // CSI only: unit scale, no distillation; the chart is mapped to world
    // coordinates afterwards by an affine fit on the same matched anchors
    let base_data = ChartingData { features: &features, geodesic: &geo, anchors: &[], eta: 1.0 };
    let base_opts = ChartingOptions { lambda: 0.0, ..cfg.charting.clone() };
    let (base_model, _) = train_charting(spec, &base_data, &base_opts)?;
    let anchor_feats: Vec<Vec<f64>> = anchors.iter().map(|a| features[a.1].clone()).collect();
    let anchor_pos: Vec<[f64; 2]> = anchors.iter().map(|a| a.0).collect();
    let affine = charting::fit_affine_map(&base_model.predict_features(&anchor_feats), &anchor_pos)?;
    let base_raw = base_model.predict_features(&test_feats);
    let baseline_estimates: Vec<[f64; 2]> = base_raw.iter().map(|p| affine.apply(*p)).collect();
    let baseline = chart_metrics(&baseline_estimates, &test.positions)?;
    let baseline_oracle = chart_metrics(&charting::fit_affine(&base_raw, &test.positions)?, &test.positions)?;

    Ok(SensingReport {
        agent: a,
        geodesic_rel_err,
        match_accuracy,
        match_err_m,
        eta: alignment.eta,
        alignment,
        proposed,
        baseline,
        baseline_oracle,
        test_truth: test.positions.clone(),
        test_estimates,
        baseline_estimates,
        charting_loss,
        model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dedup_prefers_images_and_keeps_csi_only_users() {
        let img = vec![Estimate::new([10.0, 0.0], Modality::Image)];
        let csi = vec![Estimate::new([11.0, 0.0], Modality::Csi), Estimate::new([30.0, 2.0], Modality::Csi)];
        let s = dedup(img, csi, DEFAULT_DEDUP_M);
        assert_eq!(s.entries.len(), 2);
        assert_eq!(s.entries[0].modality, Modality::Image);
        assert_eq!(s.entries[1].position, [30.0, 2.0]);
        assert!(s.min_separation() >= DEFAULT_DEDUP_M);
        assert!(dedup(Vec::new(), Vec::new(), 4.5).entries.is_empty());
    }

    #[test]
    fn scaled_error_ignores_global_scale() {
        let p = [[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]];
        let t = DistanceMatrix::euclidean(&p);
        assert!(scaled_relative_error(&t.scaled(3.0), &t) < 1e-12);
    }
}
