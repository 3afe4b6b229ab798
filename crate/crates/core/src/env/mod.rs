//! Synthetic crossroad with four road-side units, one per road arm.
//!
//! The scene is invariant under quarter turns about the origin when both
//! perturbation angles are zero. Agent `a` serves the vehicles of arm `a`;
//! its array has four panels facing the global axes, so a quarter turn maps
//! beam `i` to beam `i + M/4`.

pub mod camera;
pub mod channel;
pub mod codebook;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{codebook_perm_rep, rotate, rotate_c4, rotation_matrix, CodebookMode, Representation};

pub use camera::Camera;
pub use channel::{ArrayGeometry, Channel, Path};
pub use codebook::dft_codebook;

pub const N_AGENTS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Interference {
    /// |Σ_{j≠k} h_{a_j,k}^H b_{a_j}|², every other user included.
    Coherent,
    /// Σ_{j≠k} |h_{a_j,k}^H b_{a_j}|².
    PowerSum,
    /// Σ over other RSUs of |h^H b|² weighted by their user counts.
    InterCell,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraConfig {
    pub height_m: f64,
    pub target_height_m: f64,
    pub fov_h_deg: f64,
    pub fov_v_deg: f64,
    pub width_px: f64,
    pub height_px: f64,
    /// Distance of the camera masts from the road axis.
    pub lateral_m: f64,
    /// Mast positions along the arm; each gets one camera per road side.
    pub along_m: Vec<f64>,
}

impl Default for CameraConfig {
    fn default() -> Self {
        CameraConfig {
            height_m: 15.0,
            target_height_m: 0.8,
            fov_h_deg: 80.0,
            fov_v_deg: 60.0,
            width_px: 1920.0,
            height_px: 1080.0,
            lateral_m: 12.0,
            along_m: vec![15.0, 33.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub n_agents: usize,
    pub users_per_region: usize,
    pub n_h: usize,
    pub n_v: usize,
    pub oversample_h: usize,
    pub oversample_v: usize,
    pub subcarriers: usize,
    pub bandwidth_hz: f64,
    pub carrier_hz: f64,
    pub noise_power_w: f64,
    pub interference: Interference,
    pub codebook_mode: CodebookMode,
    pub rsu_position_m: [f64; 2],
    pub rsu_height_m: f64,
    pub vehicle_antenna_height_m: f64,
    pub ground_reflection: f64,
    pub scatter_coefficient: f64,
    pub scatterer_height_m: f64,
    pub facade_offset_m: f64,
    pub facade_start_m: f64,
    pub facade_end_m: f64,
    pub facade_step_m: f64,
    pub arm_start_m: f64,
    pub arm_end_m: f64,
    pub road_half_width_m: f64,
    pub speed_mps: f64,
    pub dt_s: f64,
    pub substeps: usize,
    pub camera: CameraConfig,
    pub road_perturbation_deg: f64,
    pub rsu_perturbation_deg: f64,
    pub p_csi: f64,
    pub p_im: f64,
    pub pixel_noise_px: f64,
    pub timing_offset_substeps: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            n_agents: N_AGENTS,
            users_per_region: 4,
            n_h: 32,
            n_v: 1,
            oversample_h: 2,
            oversample_v: 1,
            subcarriers: 64,
            bandwidth_hz: 200e6,
            carrier_hz: 28.6e9,
            noise_power_w: 1e-10,
            interference: Interference::Coherent,
            codebook_mode: CodebookMode::Cyclic,
            rsu_position_m: [10.0, -8.0],
            rsu_height_m: 6.0,
            vehicle_antenna_height_m: 1.5,
            ground_reflection: 0.4,
            scatter_coefficient: 0.5,
            scatterer_height_m: 2.0,
            facade_offset_m: 14.0,
            facade_start_m: 14.0,
            facade_end_m: 62.0,
            facade_step_m: 6.0,
            arm_start_m: 10.0,
            arm_end_m: 40.0,
            road_half_width_m: 4.0,
            speed_mps: 40.0 / 3.6,
            dt_s: 0.1,
            substeps: 10,
            camera: CameraConfig::default(),
            road_perturbation_deg: 0.0,
            rsu_perturbation_deg: 0.0,
            p_csi: 0.8,
            p_im: 0.8,
            pixel_noise_px: 0.0,
            timing_offset_substeps: 0,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_agents != N_AGENTS {
            return bad(format!("n_agents must be {N_AGENTS}, got {}", self.n_agents));
        }
        if self.users_per_region == 0 {
            return bad("users_per_region must be positive".into());
        }
        if self.n_h == 0 || self.n_v == 0 || self.oversample_h == 0 || self.oversample_v == 0 {
            return bad("array and oversampling sizes must be positive".into());
        }
        if self.subcarriers == 0 {
            return bad("subcarriers must be positive".into());
        }
        if !(self.p_csi > 0.0 && self.p_csi <= 1.0 && self.p_im > 0.0 && self.p_im <= 1.0) {
            return bad(format!("p_csi and p_im must lie in (0,1], got {} and {}", self.p_csi, self.p_im));
        }
        for (name, a) in [("road_perturbation_deg", self.road_perturbation_deg), ("rsu_perturbation_deg", self.rsu_perturbation_deg)] {
            if !(0.0..=45.0).contains(&a) {
                return bad(format!("{name} = {a} outside [0, 45]"));
            }
        }
        if !(self.arm_end_m > self.arm_start_m && self.arm_start_m >= 0.0) {
            return bad("arm_end_m must exceed arm_start_m".into());
        }
        if self.noise_power_w <= 0.0 || self.bandwidth_hz <= 0.0 || self.carrier_hz <= 0.0 {
            return bad("noise power, bandwidth and carrier must be positive".into());
        }
        if self.substeps == 0 || self.dt_s <= 0.0 {
            return bad("dt_s and substeps must be positive".into());
        }
        if self.facade_step_m <= 0.0 {
            return bad("facade_step_m must be positive".into());
        }
        Ok(())
    }

    /// Beams per RSU: four panels of `N_h ϑ_h · N_v ϑ_v` beams.
    pub fn codebook_size(&self) -> usize {
        4 * self.n_h * self.oversample_h * self.n_v * self.oversample_v
    }

    pub fn n_antennas(&self) -> usize {
        4 * self.n_h * self.n_v
    }

    pub fn wavelength(&self) -> f64 {
        channel::SPEED_OF_LIGHT / self.carrier_hz
    }
}

/// Copy of `cfg` with both symmetry-breaking angles set.
pub fn apply_perturbation(cfg: &EnvConfig, road_deg: f64, rsu_deg: f64) -> Result<EnvConfig> {
    for a in [road_deg, rsu_deg] {
        if !(0.0..=45.0).contains(&a) {
            return Err(Error::Config(format!("perturbation angle {a} outside [0, 45] degrees")));
        }
    }
    let mut out = cfg.clone();
    out.road_perturbation_deg = road_deg;
    out.rsu_perturbation_deg = rsu_deg;
    Ok(out)
}

/// Local frame of a road arm: a quarter turn, optionally followed by a tilt.
#[derive(Debug, Clone, Copy)]
pub struct ArmFrame {
    pub quarter: usize,
    pub tilt: f64,
}

impl ArmFrame {
    pub fn to_world(&self, local: [f64; 2]) -> [f64; 2] {
        let p = if self.tilt == 0.0 { local } else { rotate(&rotation_matrix(self.tilt), local) };
        rotate_c4(self.quarter, p)
    }

    pub fn angle(&self) -> f64 {
        self.quarter as f64 * std::f64::consts::FRAC_PI_2 + self.tilt
    }
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub rsus: [[f64; 2]; N_AGENTS],
    pub arms: [ArmFrame; N_AGENTS],
    /// Facade scatterers grouped by arm.
    pub scatterers: [Vec<[f64; 2]>; N_AGENTS],
    pub cameras: Vec<Vec<Camera>>,
    pub array: ArrayGeometry,
    pub panel_codebook: Vec<Vec<Complex64>>,
    pub freqs: Vec<f64>,
}

impl Scene {
    pub fn new(cfg: &EnvConfig) -> Result<Self> {
        cfg.validate()?;
        let road = cfg.road_perturbation_deg.to_radians();
        let rsu = cfg.rsu_perturbation_deg.to_radians();
        let arms: [ArmFrame; N_AGENTS] = std::array::from_fn(|a| ArmFrame { quarter: a, tilt: if a % 2 == 1 { road } else { 0.0 } });
        let rsus: [[f64; 2]; N_AGENTS] = std::array::from_fn(|a| {
            let base = rotate_c4(a, cfg.rsu_position_m);
            match a {
                1 if rsu != 0.0 => rotate(&rotation_matrix(-rsu), base),
                3 if rsu != 0.0 => rotate(&rotation_matrix(rsu), base),
                _ => base,
            }
        });
        let mut local_scat = Vec::new();
        let mut x = cfg.facade_start_m;
        while x <= cfg.facade_end_m + 1e-9 {
            local_scat.push([x, cfg.facade_offset_m]);
            local_scat.push([x, -cfg.facade_offset_m]);
            x += cfg.facade_step_m;
        }
        let scatterers = std::array::from_fn(|a| local_scat.iter().map(|&p| arms[a].to_world(p)).collect());
        let cc = &cfg.camera;
        let tilt = (cc.lateral_m / (cc.height_m - cc.target_height_m)).atan();
        let cameras = (0..N_AGENTS)
            .map(|a| {
                let mut v = Vec::new();
                for &along in &cc.along_m {
                    for side in [1.0, -1.0] {
                        let pos = arms[a].to_world([along, side * cc.lateral_m]);
                        let facing = if side > 0.0 { -std::f64::consts::FRAC_PI_2 } else { std::f64::consts::FRAC_PI_2 };
                        v.push(Camera {
                            position: pos,
                            height: cc.height_m,
                            target_height: cc.target_height_m,
                            azimuth: arms[a].angle() + facing,
                            tilt,
                            fov_h: cc.fov_h_deg.to_radians(),
                            fov_v: cc.fov_v_deg.to_radians(),
                            width_px: cc.width_px,
                            height_px: cc.height_px,
                        });
                    }
                }
                v
            })
            .collect();
        Ok(Scene {
            rsus,
            arms,
            scatterers,
            cameras,
            array: ArrayGeometry { n_h: cfg.n_h, n_v: cfg.n_v },
            panel_codebook: dft_codebook(cfg.n_h, cfg.n_v, cfg.oversample_h, cfg.oversample_v),
            freqs: channel::subcarrier_frequencies(cfg.carrier_hz, cfg.bandwidth_hz, cfg.subcarriers),
        })
    }

    /// e_{from,to} = r_from − r_to
    pub fn edge(&self, from: usize, to: usize) -> [f64; 2] {
        let (a, b) = (self.rsus[from], self.rsus[to]);
        [a[0] - b[0], a[1] - b[1]]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vehicle {
    /// Coordinate along the arm axis.
    pub along: f64,
    /// Signed offset from the arm axis.
    pub lateral: f64,
    /// +1 outbound, −1 inbound.
    pub dir: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub t: usize,
    /// Vehicles per region; region `a` is arm `a`, served by agent `a`.
    pub regions: Vec<Vec<Vehicle>>,
}

/// Global rotation by `g` quarter turns: arm `a` content moves to arm `a+g`.
pub fn apply_global_rotation(state: &EnvState, g: usize) -> EnvState {
    let n = state.regions.len();
    let mut regions = vec![Vec::new(); n];
    for (a, r) in state.regions.iter().enumerate() {
        regions[(a + g) % n] = r.clone();
    }
    EnvState { t: state.t, regions }
}

/// Joint action under a global rotation: agent `a`'s beam moves to agent
/// `a+g` and is relabelled by K_g.
pub fn rotate_joint_action(actions: &[usize], g: usize, k: &Representation) -> Vec<usize> {
    let n = actions.len();
    let mut out = vec![0; n];
    for (a, &b) in actions.iter().enumerate() {
        out[(a + g) % n] = k.map_index(g, b);
    }
    out
}

#[derive(Debug, Clone)]
pub struct Detection {
    pub camera: usize,
    pub pixel: [f64; 2],
    truth: usize,
}

impl Detection {
    /// Vehicle id; for evaluation only, never fed to the pipeline.
    pub fn truth_for_evaluation(&self) -> usize {
        self.truth
    }
}

#[derive(Debug, Clone)]
pub struct CsiSample {
    pub channel: Channel,
    truth: usize,
}

impl CsiSample {
    pub fn truth_for_evaluation(&self) -> usize {
        self.truth
    }
}

#[derive(Debug, Clone)]
pub struct AgentObservation {
    pub agent: usize,
    pub detections: Vec<Detection>,
    pub channels: Vec<CsiSample>,
    /// (sender, e_{sender,agent})
    pub edges: Vec<(usize, [f64; 2])>,
}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub next_state: EnvState,
    pub reward: f64,
    /// Per-user rate in Gbps, region-major.
    pub rates: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Env {
    pub cfg: EnvConfig,
    pub scene: Scene,
    codebook_rep: Representation,
}

impl Env {
    pub fn new(cfg: EnvConfig) -> Result<Self> {
        let scene = Scene::new(&cfg)?;
        let codebook_rep = codebook_perm_rep(cfg.codebook_mode, cfg.codebook_size())?;
        Ok(Env { cfg, scene, codebook_rep })
    }

    pub fn codebook_rep(&self) -> &Representation {
        &self.codebook_rep
    }

    pub fn n_beams(&self) -> usize {
        self.cfg.codebook_size()
    }

    pub fn arm_length(&self) -> f64 {
        self.cfg.arm_end_m - self.cfg.arm_start_m
    }

    pub fn random_vehicle<R: Rng>(&self, rng: &mut R) -> Vehicle {
        let along = rng.random_range(self.cfg.arm_start_m..self.cfg.arm_end_m);
        let hw = self.cfg.road_half_width_m;
        let lateral = if hw > 0.0 { rng.random_range(-hw..hw) } else { 0.0 };
        Vehicle { along, lateral, dir: if lateral < 0.0 { 1.0 } else { -1.0 } }
    }

    pub fn reset<R: Rng>(&self, rng: &mut R) -> EnvState {
        let regions = (0..N_AGENTS)
            .map(|_| (0..self.cfg.users_per_region).map(|_| self.random_vehicle(rng)).collect())
            .collect();
        EnvState { t: 0, regions }
    }

    fn wrap(&self, along: f64) -> f64 {
        let (lo, hi) = (self.cfg.arm_start_m, self.cfg.arm_end_m);
        let len = hi - lo;
        let mut x = along;
        while x >= hi {
            x -= len;
        }
        while x < lo {
            x += len;
        }
        x
    }

    pub fn advance(&self, state: &EnvState) -> EnvState {
        let d = self.cfg.speed_mps * self.cfg.dt_s;
        let regions = state
            .regions
            .iter()
            .map(|r| r.iter().map(|v| Vehicle { along: self.wrap(v.along + v.dir * d), ..*v }).collect())
            .collect();
        EnvState { t: state.t + 1, regions }
    }

    pub fn world_position(&self, arm: usize, v: &Vehicle) -> [f64; 2] {
        self.scene.arms[arm].to_world([v.along, v.lateral])
    }

    pub fn positions(&self, state: &EnvState) -> Vec<Vec<[f64; 2]>> {
        state
            .regions
            .iter()
            .enumerate()
            .map(|(a, r)| r.iter().map(|v| self.world_position(a, v)).collect())
            .collect()
    }

    /// Vehicle positions relative to each agent's RSU, global axes.
    pub fn local_states(&self, state: &EnvState) -> Vec<Vec<[f64; 2]>> {
        self.positions(state)
            .iter()
            .enumerate()
            .map(|(a, ps)| {
                let r = self.scene.rsus[a];
                ps.iter().map(|p| [p[0] - r[0], p[1] - r[1]]).collect()
            })
            .collect()
    }

    pub fn edges_to(&self, agent: usize) -> Vec<(usize, [f64; 2])> {
        (0..N_AGENTS).filter(|&s| s != agent).map(|s| (s, self.scene.edge(s, agent))).collect()
    }

    fn paths(&self, agent: usize, p: [f64; 2], strict: bool) -> Result<Vec<Path>> {
        let c = &self.cfg;
        let r = self.scene.rsus[agent];
        let mut dir = [p[0] - r[0], p[1] - r[1]];
        let mut hd = dir[0].hypot(dir[1]);
        if hd < 1.0 {
            if strict {
                return Err(Error::Domain { op: "synth_channel", detail: format!("position {p:?} within 1 m of RSU {agent}") });
            }
            // interference links on a perturbed scene can pass under a foreign RSU
            dir = if hd > 0.0 { [dir[0] / hd, dir[1] / hd] } else { [1.0, 0.0] };
            hd = 1.0;
        }
        let k = c.wavelength() / (4.0 * std::f64::consts::PI);
        let dz = c.rsu_height_m - c.vehicle_antenna_height_m;
        let los = dz.hypot(hd);
        let mut paths = vec![Path { dir, dz, amp: k / los, length: los }];
        if c.ground_reflection != 0.0 {
            let dzr = c.rsu_height_m + c.vehicle_antenna_height_m;
            let l = dzr.hypot(hd);
            paths.push(Path { dir, dz: dzr, amp: -c.ground_reflection * k / l, length: l });
        }
        if c.scatter_coefficient != 0.0 {
            let dzs = c.rsu_height_m - c.scatterer_height_m;
            let dz2 = c.scatterer_height_m - c.vehicle_antenna_height_m;
            // arms in order relative to the agent, so rotated scenes sum identically
            for i in 0..N_AGENTS {
                for s in &self.scene.scatterers[(agent + i) % N_AGENTS] {
                    let d = [s[0] - r[0], s[1] - r[1]];
                    let l1 = dzs.hypot(d[0].hypot(d[1]));
                    let l2 = dz2.hypot((p[0] - s[0]).hypot(p[1] - s[1]));
                    let l = l1 + l2;
                    paths.push(Path { dir: d, dz: dzs, amp: c.scatter_coefficient * k / l, length: l });
                }
            }
        }
        Ok(paths)
    }

    /// Full `N × S` channel between `agent` and a vehicle at `p`.
    pub fn synth_channel(&self, agent: usize, p: [f64; 2]) -> Result<Channel> {
        let paths = self.paths(agent, p, true)?;
        Ok(channel::synthesize(&paths, &self.scene.array, &self.scene.freqs))
    }

    /// Channel vector at the carrier (central subcarrier). Positions closer
    /// than 1 m are pushed out to 1 m instead of rejected.
    pub fn central_channel(&self, agent: usize, p: [f64; 2]) -> Result<Vec<Complex64>> {
        let paths = self.paths(agent, p, false)?;
        Ok(channel::synthesize(&paths, &self.scene.array, &[self.cfg.carrier_hz]).column(0))
    }

    /// h^H b for beam `beam` of the agent's codebook.
    pub fn beam_response(&self, h: &[Complex64], beam: usize) -> Complex64 {
        let per_panel = self.scene.panel_codebook.len();
        let np = self.scene.array.panel_size();
        let (panel, j) = (beam / per_panel, beam % per_panel);
        let b = &self.scene.panel_codebook[j];
        h[panel * np..(panel + 1) * np].iter().zip(b).map(|(x, y)| x.conj() * y).sum()
    }

    pub fn reward(&self, state: &EnvState, actions: &[usize]) -> Result<(f64, Vec<f64>)> {
        if actions.len() != N_AGENTS {
            return Err(Error::Invalid(format!("expected {N_AGENTS} actions, got {}", actions.len())));
        }
        let m = self.n_beams();
        if let Some(&b) = actions.iter().find(|&&b| b >= m) {
            return Err(Error::Invalid(format!("beam index {b} outside codebook of size {m}")));
        }
        let pos = self.positions(state);
        let counts: Vec<usize> = state.regions.iter().map(|r| r.len()).collect();
        let beta_gbps = self.cfg.bandwidth_hz * 1e-9;
        let mut rates = Vec::new();
        for (a, ps) in pos.iter().enumerate() {
            for p in ps {
                // responses from every RSU, in order relative to the serving one
                let resp: Vec<Complex64> = (0..N_AGENTS)
                    .map(|i| {
                        let src = (a + i) % N_AGENTS;
                        let h = self.central_channel(src, *p)?;
                        Ok(self.beam_response(&h, actions[src]))
                    })
                    .collect::<Result<_>>()?;
                let signal = resp[0].norm_sqr();
                let interference = match self.cfg.interference {
                    Interference::Coherent => {
                        let mut acc = resp[0] * (counts[a] as f64 - 1.0);
                        for i in 1..N_AGENTS {
                            acc += resp[i] * counts[(a + i) % N_AGENTS] as f64;
                        }
                        acc.norm_sqr()
                    }
                    Interference::PowerSum => {
                        let mut acc = signal * (counts[a] as f64 - 1.0);
                        for i in 1..N_AGENTS {
                            acc += resp[i].norm_sqr() * counts[(a + i) % N_AGENTS] as f64;
                        }
                        acc
                    }
                    Interference::InterCell => {
                        let mut acc = 0.0;
                        for i in 1..N_AGENTS {
                            acc += resp[i].norm_sqr() * counts[(a + i) % N_AGENTS] as f64;
                        }
                        acc
                    }
                };
                let sinr = signal / (interference + self.cfg.noise_power_w);
                rates.push(beta_gbps * (1.0 + sinr).log2());
            }
        }
        Ok((rates.iter().sum(), rates))
    }

    pub fn step(&self, state: &EnvState, actions: &[usize]) -> Result<StepResult> {
        let (reward, rates) = self.reward(state, actions)?;
        Ok(StepResult { next_state: self.advance(state), reward, rates })
    }

    /// Position used by the cameras, lagging the radio by the timing offset.
    fn delayed(&self, v: &Vehicle) -> Vehicle {
        let lag = self.cfg.timing_offset_substeps as f64 * self.cfg.dt_s / self.cfg.substeps as f64;
        Vehicle { along: self.wrap(v.along - v.dir * self.cfg.speed_mps * lag), ..*v }
    }

    pub fn visible_camera(&self, agent: usize, p: [f64; 2]) -> Option<(usize, [f64; 2])> {
        self.scene.cameras[agent].iter().enumerate().find_map(|(c, cam)| cam.project_to_pixels(p).map(|px| (c, px)))
    }

    /// Per-agent observations with modality dropout; every vehicle appears
    /// in at least one modality.
    pub fn observe<R: Rng>(&self, state: &EnvState, rng: &mut R) -> Result<Vec<AgentObservation>> {
        let k = self.cfg.users_per_region;
        let mut out = Vec::with_capacity(N_AGENTS);
        for (a, region) in state.regions.iter().enumerate() {
            let mut detections = Vec::new();
            let mut channels = Vec::new();
            for (slot, v) in region.iter().enumerate() {
                let truth = a * k + slot;
                let seen = self.visible_camera(a, self.world_position(a, &self.delayed(v)));
                let (mut csi, mut im);
                loop {
                    csi = rng.random_bool(self.cfg.p_csi);
                    im = rng.random_bool(self.cfg.p_im) && seen.is_some();
                    if csi || im {
                        break;
                    }
                    if seen.is_none() {
                        csi = true;
                        break;
                    }
                }
                if im {
                    let (cam, mut px) = seen.unwrap();
                    if self.cfg.pixel_noise_px > 0.0 {
                        let n: [f64; 2] = [rng.sample(rand_distr::StandardNormal), rng.sample(rand_distr::StandardNormal)];
                        let c = &self.scene.cameras[a][cam];
                        px[0] = (px[0] + self.cfg.pixel_noise_px * n[0]).clamp(0.0, c.width_px);
                        px[1] = (px[1] + self.cfg.pixel_noise_px * n[1]).clamp(0.0, c.height_px);
                    }
                    detections.push(Detection { camera: cam, pixel: px, truth });
                }
                if csi {
                    channels.push(CsiSample { channel: self.synth_channel(a, self.world_position(a, v))?, truth });
                }
            }
            out.push(AgentObservation { agent: a, detections, channels, edges: self.edges_to(a) });
        }
        Ok(out)
    }

    /// Largest |R(s,b) − R(L_g s, K_g b)| over random states, joint actions
    /// and group elements. The group acts on arm-local coordinates, so on a
    /// perturbed scene the rotated state stays on the (tilted) roads.
    pub fn reward_asymmetry<R: Rng>(&self, samples: usize, rng: &mut R) -> Result<f64> {
        let m = self.n_beams();
        let mut worst: f64 = 0.0;
        for _ in 0..samples {
            let s = self.reset(rng);
            let b: Vec<usize> = (0..N_AGENTS).map(|_| rng.random_range(0..m)).collect();
            let g = rng.random_range(0..4);
            let r0 = self.reward(&s, &b)?.0;
            let r1 = self.reward(&apply_global_rotation(&s, g), &rotate_joint_action(&b, g, &self.codebook_rep))?.0;
            worst = worst.max((r0 - r1).abs());
        }
        Ok(worst)
    }
}
