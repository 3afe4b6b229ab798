//! Artifact names and their conversions to and from `EQM1` arrays.

use std::path::Path;

use eqv2i::env::Channel;
use eqv2i::io::{load_arrays, save_arrays, Array};
use eqv2i::policy::{Policy, PolicyKind};
use eqv2i::sensing::{ChartingModel, CsiDataset, SensingData};

use crate::{CliError, Result};

/// Unlabelled CSI `[n, antennas, subcarriers, 2]`.
pub const U_CSI: &str = "u_csi.eqm";
/// True positions of the unlabelled CSI `[n, 2]`, for evaluation only.
pub const U_CSI_TRUTH: &str = "u_csi_truth.eqm";
/// Camera-localized positions `[m, 2]`, then the U_csi index behind each image `[m]` (evaluation only).
pub const D_IM: &str = "d_im.eqm";
/// U_csi indices of the image vehicles' CSI, in unknown order `[m]`.
pub const D_CSI: &str = "d_csi.eqm";
/// Held-out channels, then their positions.
pub const TEST: &str = "test.eqm";
pub const CHART: &str = "chart.eqm";
pub const MATCHING: &str = "matching.eqm";
/// Test truth, proposed and CSI-only estimates, each `[n, 2]`.
pub const ESTIMATES: &str = "estimates.eqm";
/// Header `[kind, n_params]`, then one array per layer.
pub const POLICY: &str = "policy.eqm";

pub fn missing(path: &Path, producer: &str) -> CliError {
    CliError::validation(format!("missing upstream artifact {}; run `eqv2i {producer}` first (or point --input at its output)", path.display()))
}

pub fn load(dir: &Path, name: &str, producer: &str) -> Result<Vec<Array>> {
    let path = dir.join(name);
    if !path.is_file() {
        return Err(missing(&path, producer));
    }
    load_arrays(&path).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
}

pub fn save(dir: &Path, name: &str, arrays: &[Array]) -> Result<String> {
    save_arrays(&dir.join(name), arrays)?;
    Ok(name.to_string())
}

fn bad(name: &str, what: &str) -> CliError {
    CliError::validation(format!("{name}: {what}"))
}

pub fn points_array(p: &[[f64; 2]]) -> Array {
    Array { dims: vec![p.len(), 2], data: p.iter().flatten().copied().collect() }
}

pub fn array_points(a: &Array, name: &str) -> Result<Vec<[f64; 2]>> {
    match a.dims[..] {
        [_, 2] => Ok(a.data.chunks_exact(2).map(|c| [c[0], c[1]]).collect()),
        _ => Err(bad(name, &format!("expected an [n, 2] array, got {:?}", a.dims))),
    }
}

pub fn index_array(idx: &[usize]) -> Array {
    Array::vector(idx.iter().map(|&i| i as f64).collect())
}

pub fn array_index(a: &Array, name: &str) -> Result<Vec<usize>> {
    if a.dims.len() != 1 || a.data.iter().any(|&x| x < 0.0 || x.fract() != 0.0) {
        return Err(bad(name, "expected a vector of non-negative integers"));
    }
    Ok(a.data.iter().map(|&x| x as usize).collect())
}

pub fn channels_array(ch: &[Channel]) -> Result<Array> {
    let (n, s) = ch.first().map(|c| (c.n_antennas, c.n_subcarriers)).unwrap_or((0, 0));
    if ch.iter().any(|c| c.n_antennas != n || c.n_subcarriers != s) {
        return Err(CliError::runtime("channels differ in shape"));
    }
    let z: Vec<_> = ch.iter().flat_map(|c| c.data.iter().copied()).collect();
    Ok(Array::from_complex(&[ch.len(), n, s], &z)?)
}

pub fn array_channels(a: &Array, name: &str) -> Result<Vec<Channel>> {
    let (dims, z) = a.to_complex().map_err(|e| bad(name, &e.to_string()))?;
    let [count, n, s] = dims[..] else {
        return Err(bad(name, &format!("expected [n, antennas, subcarriers, 2], got {:?}", a.dims)));
    };
    Ok((0..count).map(|i| Channel { n_antennas: n, n_subcarriers: s, data: z[i * n * s..(i + 1) * n * s].to_vec() }).collect())
}

pub fn write_sensing_data(dir: &Path, d: &SensingData) -> Result<Vec<String>> {
    Ok(vec![
        save(dir, U_CSI, &[channels_array(&d.train.channels)?])?,
        save(dir, U_CSI_TRUTH, &[points_array(&d.train.positions)])?,
        save(dir, D_IM, &[points_array(&d.image_positions), index_array(&d.image_truth)])?,
        save(dir, D_CSI, &[index_array(&d.csi_index)])?,
        save(dir, TEST, &[channels_array(&d.test.channels)?, points_array(&d.test.positions)])?,
    ])
}

fn take<const N: usize>(arrays: Vec<Array>, name: &str) -> Result<[Array; N]> {
    let got = arrays.len();
    arrays.try_into().map_err(|_| bad(name, &format!("expected {N} arrays, found {got}")))
}

pub fn read_sensing_data(dir: &Path, agent: usize) -> Result<SensingData> {
    let p = "gen-data";
    let [u] = take(load(dir, U_CSI, p)?, U_CSI)?;
    let [ut] = take(load(dir, U_CSI_TRUTH, p)?, U_CSI_TRUTH)?;
    let [im, im_truth] = take(load(dir, D_IM, p)?, D_IM)?;
    let [csi] = take(load(dir, D_CSI, p)?, D_CSI)?;
    let [tc, tp] = take(load(dir, TEST, p)?, TEST)?;
    let train = CsiDataset { channels: array_channels(&u, U_CSI)?, positions: array_points(&ut, U_CSI_TRUTH)? };
    let test = CsiDataset { channels: array_channels(&tc, TEST)?, positions: array_points(&tp, TEST)? };
    if train.channels.len() != train.positions.len() || test.channels.len() != test.positions.len() {
        return Err(CliError::validation("channel and position counts differ in the gen-data artifacts"));
    }
    Ok(SensingData {
        agent,
        train,
        image_positions: array_points(&im, D_IM)?,
        image_truth: array_index(&im_truth, D_IM)?,
        csi_index: array_index(&csi, D_CSI)?,
        test,
    })
}

pub fn read_chart(dir: &Path) -> Result<ChartingModel> {
    let arrays = load(dir, CHART, "sense")?;
    ChartingModel::from_arrays(&arrays).map_err(|e| bad(CHART, &e.to_string()))
}

fn kind_code(kind: PolicyKind) -> f64 {
    PolicyKind::ALL.iter().position(|&k| k == kind).unwrap() as f64
}

pub fn policy_arrays(policy: &Policy) -> Vec<Array> {
    let mut out = vec![Array::vector(vec![kind_code(policy.kind), policy.n_params() as f64])];
    out.extend(policy.param_arrays());
    out
}

/// Load trained weights into `policy`, which must match the stored kind and size.
pub fn read_policy(dir: &Path, policy: &mut Policy) -> Result<()> {
    let arrays = load(dir, POLICY, "marl-train")?;
    let Some((head, layers)) = arrays.split_first() else {
        return Err(bad(POLICY, "empty file"));
    };
    if head.data != [kind_code(policy.kind), policy.n_params() as f64] {
        return Err(bad(POLICY, &format!("stored policy does not match the configured `{}` network", policy.kind.name())));
    }
    policy.load_param_arrays(layers).map_err(|e| bad(POLICY, &e.to_string()))
}
