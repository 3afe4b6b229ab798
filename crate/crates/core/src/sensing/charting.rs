//! Channel charting network: CSI features → 2-D position, trained with a
//! Siamese distance loss plus distillation towards matched image positions.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::distance::{DelayProfile, DistanceMatrix};
use crate::autodiff::{Adam, Tape, Tensor};
use crate::env::Channel;
use crate::error::{Error, Result};
use crate::io::Array;
use crate::nn::Mlp;

/// Layout of the channel matrix rows: panels × (n_v × n_h) elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub panels: usize,
    pub n_h: usize,
    pub n_v: usize,
    pub n_subcarriers: usize,
}

impl FeatureSpec {
    pub fn n_antennas(&self) -> usize {
        self.panels * self.n_h * self.n_v
    }

    pub fn dim(&self) -> usize {
        self.panels * (self.n_h + self.n_subcarriers)
    }
}

/// Angle and delay power marginals per panel, energy-normalized, as
/// amplitudes.
pub fn channel_features(h: &Channel, spec: &FeatureSpec) -> Result<Vec<f64>> {
    if h.n_antennas != spec.n_antennas() || h.n_subcarriers != spec.n_subcarriers {
        return Err(Error::Invalid(format!(
            "channel {}x{} does not fit feature layout {}x{}",
            h.n_antennas,
            h.n_subcarriers,
            spec.n_antennas(),
            spec.n_subcarriers
        )));
    }
    let prof = DelayProfile::new(h);
    let (nh, nv, s) = (spec.n_h, spec.n_v, spec.n_subcarriers);
    let fft = FftPlanner::new().plan_fft_forward(nh);
    let n = prof.n_antennas;
    let mut angle = vec![0.0; spec.panels * nh];
    let mut delay = vec![0.0; spec.panels * s];
    let mut buf = vec![num_complex::Complex64::new(0.0, 0.0); nh];
    for p in 0..spec.panels {
        for t in 0..s {
            for v in 0..nv {
                let base = t * n + p * nh * nv + v * nh;
                buf.copy_from_slice(&prof.taps[base..base + nh]);
                fft.process(&mut buf);
                for (k, z) in buf.iter().enumerate() {
                    let e = z.norm_sqr();
                    angle[p * nh + k] += e;
                    delay[p * s + t] += e;
                }
            }
        }
    }
    let total: f64 = delay.iter().sum();
    let mut f: Vec<f64> = angle.into_iter().chain(delay).collect();
    if total > 0.0 {
        for v in &mut f {
            *v = (*v / total).sqrt();
        }
    }
    Ok(f)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChartingOptions {
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub steps: usize,
    /// Samples per step; every pair among them enters the distance loss.
    pub batch_size: usize,
    /// Weight λ of the distillation term.
    pub lambda: f64,
    /// Only pairs whose geodesic is below this quantile enter the distance
    /// loss (1 keeps every pair).
    pub pair_quantile: f64,
    pub seed: u64,
}

impl Default for ChartingOptions {
    fn default() -> Self {
        ChartingOptions { hidden: vec![256, 128, 64], lr: 0.01, steps: 1500, batch_size: 64, lambda: 5.0, pair_quantile: 0.5, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChartingModel {
    pub spec: FeatureSpec,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Added to the network output.
    pub offset: [f64; 2],
    pub mlp: Mlp,
    /// Applied after the offset; identity unless refined on anchors.
    pub post: Affine2,
}

impl ChartingModel {
    pub fn standardize(&self, f: &[f64]) -> Vec<f64> {
        f.iter().zip(&self.mean).zip(&self.std).map(|((x, m), s)| (x - m) / s).collect()
    }

    pub fn predict_features(&self, raw: &[Vec<f64>]) -> Vec<[f64; 2]> {
        if raw.is_empty() {
            return Vec::new();
        }
        let d = self.mlp.input_dim();
        let mut x = Vec::with_capacity(raw.len() * d);
        for f in raw {
            x.extend(self.standardize(f));
        }
        let y = self.mlp.predict(&Tensor::new(raw.len(), d, x));
        (0..raw.len()).map(|i| self.post.apply([y.get(i, 0) + self.offset[0], y.get(i, 1) + self.offset[1]])).collect()
    }

    pub fn predict(&self, h: &Channel) -> Result<[f64; 2]> {
        Ok(self.predict_features(&[channel_features(h, &self.spec)?])[0])
    }

    /// Header, layer sizes, standardization and one array per layer.
    pub fn to_arrays(&self) -> Vec<Array> {
        let s = &self.spec;
        let p = &self.post;
        let header = vec![
            s.panels as f64,
            s.n_h as f64,
            s.n_v as f64,
            s.n_subcarriers as f64,
            self.offset[0],
            self.offset[1],
            p.a[0][0],
            p.a[0][1],
            p.a[1][0],
            p.a[1][1],
            p.c[0],
            p.c[1],
        ];
        let mut out = vec![
            Array::vector(header),
            Array::vector(self.mlp.sizes.iter().map(|&x| x as f64).collect()),
            Array::vector(self.mean.clone()),
            Array::vector(self.std.clone()),
        ];
        out.extend(self.mlp.weights.iter().map(|w| Array::vector(w.clone())));
        out
    }

    pub fn from_arrays(arrays: &[Array]) -> Result<Self> {
        let bad = |m: &str| Error::Format(format!("charting model: {m}"));
        if arrays.len() < 4 {
            return Err(bad("too few arrays"));
        }
        let h = &arrays[0].data;
        if h.len() != 12 {
            return Err(bad("header must hold 12 values"));
        }
        let spec = FeatureSpec { panels: h[0] as usize, n_h: h[1] as usize, n_v: h[2] as usize, n_subcarriers: h[3] as usize };
        let sizes: Vec<usize> = arrays[1].data.iter().map(|&x| x as usize).collect();
        if sizes.len() < 2 || sizes[0] != spec.dim() || *sizes.last().unwrap() != 2 || arrays.len() != 4 + sizes.len() - 1 {
            return Err(bad("layer sizes do not match the feature spec or array count"));
        }
        let mut mlp = Mlp::zeros(&sizes);
        for (w, a) in mlp.weights.iter_mut().zip(&arrays[4..]) {
            if w.len() != a.data.len() {
                return Err(bad("layer weight count mismatch"));
            }
            w.copy_from_slice(&a.data);
        }
        if arrays[2].data.len() != spec.dim() || arrays[3].data.len() != spec.dim() {
            return Err(bad("standardization length mismatch"));
        }
        Ok(ChartingModel {
            spec,
            mean: arrays[2].data.clone(),
            std: arrays[3].data.clone(),
            offset: [h[4], h[5]],
            mlp,
            post: Affine2 { a: [[h[6], h[7]], [h[8], h[9]]], c: [h[10], h[11]] },
        })
    }
}

/// Training inputs, indexed by CSI sample.
#[derive(Debug, Clone)]
pub struct ChartingData<'a> {
    pub features: &'a [Vec<f64>],
    /// Geodesic CSI dissimilarities over the same samples.
    pub geodesic: &'a DistanceMatrix,
    /// (CSI sample, matched image position).
    pub anchors: &'a [([f64; 2], usize)],
    /// Converts geodesic units to metres.
    pub eta: f64,
}

/// One term set of the charting loss, on standardized features `x`:
/// mean over pairs of (‖ζ_i − ζ_j‖ − t_ij)² + λ · mean over anchors of
/// ‖ζ_i − z_i‖². Returns the loss and the flattened weight gradient.
pub fn charting_loss_and_grad(
    mlp: &Mlp,
    x: &Tensor,
    offset: [f64; 2],
    pairs: &[(usize, usize, f64)],
    anchors: &[(usize, [f64; 2])],
    lambda: f64,
) -> Result<(f64, Vec<f64>)> {
    let mut tape = Tape::new();
    let params = mlp.bind(&mut tape);
    let xv = tape.constant(x.clone());
    let raw = mlp.forward_with(&mut tape, &params, xv);
    let off = tape.constant(Tensor::new(x.rows, 2, (0..x.rows).flat_map(|_| offset).collect()));
    let z = tape.add(raw, off);
    let mut terms = Vec::new();
    if !pairs.is_empty() {
        let zi = tape.gather_rows(z, pairs.iter().map(|p| p.0).collect());
        let zj = tape.gather_rows(z, pairs.iter().map(|p| p.1).collect());
        let diff = tape.sub(zi, zj);
        let sq = tape.square(diff);
        let d2 = tape.sum_axis1(sq);
        let d2 = tape.add_scalar(d2, 1e-12);
        let dist = tape.sqrt(d2)?;
        let target = tape.constant(Tensor::col(pairs.iter().map(|p| p.2).collect()));
        let r = tape.sub(dist, target);
        let r2 = tape.square(r);
        terms.push(tape.mean(r2));
    }
    if !anchors.is_empty() && lambda != 0.0 {
        let za = tape.gather_rows(z, anchors.iter().map(|a| a.0).collect());
        let t = tape.constant(Tensor::new(anchors.len(), 2, anchors.iter().flat_map(|a| a.1).collect()));
        let r = tape.sub(za, t);
        let r2 = tape.square(r);
        let s = tape.sum_axis1(r2);
        let m = tape.mean(s);
        terms.push(tape.scale(m, lambda));
    }
    let loss = match terms.len() {
        0 => return Ok((0.0, vec![0.0; mlp.n_params()])),
        1 => terms[0],
        _ => tape.add(terms[0], terms[1]),
    };
    let grads = tape.backward(loss)?;
    let mut g = Vec::with_capacity(mlp.n_params());
    for (p, w) in params.iter().zip(mlp.sizes.windows(2)) {
        g.extend(grads.wrt(*p, (w[1], w[0] + 1)).data);
    }
    Ok((tape.value(loss).item(), g))
}

fn feature_stats(features: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let d = features[0].len();
    let n = features.len() as f64;
    let mut mean = vec![0.0; d];
    for f in features {
        for (m, v) in mean.iter_mut().zip(f) {
            *m += v / n;
        }
    }
    let mut var = vec![0.0; d];
    for f in features {
        for ((s, v), m) in var.iter_mut().zip(f).zip(&mean) {
            *s += (v - m).powi(2) / n;
        }
    }
    let std = var.into_iter().map(|v| v.sqrt().max(1e-6)).collect();
    (mean, std)
}

pub fn train_charting(spec: FeatureSpec, data: &ChartingData, opts: &ChartingOptions) -> Result<(ChartingModel, Vec<f64>)> {
    let n = data.features.len();
    if n == 0 {
        return Err(Error::Invalid("no CSI samples to chart".into()));
    }
    if data.geodesic.len() != n {
        return Err(Error::Invalid(format!("geodesic matrix has {} samples, features {}", data.geodesic.len(), n)));
    }
    if let Some(a) = data.anchors.iter().find(|a| a.1 >= n) {
        return Err(Error::Invalid(format!("anchor index {} out of range", a.1)));
    }
    let dim = data.features[0].len();
    if data.features.iter().any(|f| f.len() != dim) {
        return Err(Error::Invalid("feature vectors differ in length".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let (mean, std) = feature_stats(data.features);
    let mut sizes = vec![dim];
    sizes.extend(&opts.hidden);
    sizes.push(2);
    let offset = if data.anchors.is_empty() {
        [0.0, 0.0]
    } else {
        let k = data.anchors.len() as f64;
        let s = data.anchors.iter().fold([0.0, 0.0], |acc, a| [acc[0] + a.0[0] / k, acc[1] + a.0[1] / k]);
        s
    };
    let mut model = ChartingModel { spec, mean, std, offset, mlp: Mlp::new(&sizes, &mut rng), post: Affine2::IDENTITY };
    let xs: Vec<Vec<f64>> = data.features.iter().map(|f| model.standardize(f)).collect();
    let mut adam = Adam::new(opts.lr, &model.mlp.param_sizes());
    let mut trace = Vec::with_capacity(opts.steps);
    let use_pairs = data.eta != 0.0 || data.anchors.is_empty();
    let pair_cap = if opts.pair_quantile >= 1.0 {
        f64::INFINITY
    } else {
        let mut v: Vec<f64> = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                v.push(data.geodesic.get(i, j));
            }
        }
        v.sort_by(f64::total_cmp);
        v.get(((opts.pair_quantile.max(0.0) * v.len() as f64) as usize).min(v.len().saturating_sub(1))).copied().unwrap_or(0.0)
    };
    for step in 0..opts.steps {
        // batch = sampled CSI samples followed by all anchors
        let b = opts.batch_size.min(n);
        let picked: Vec<usize> = if use_pairs && b >= 2 { sample(&mut rng, n, b).into_vec() } else { Vec::new() };
        let mut rows: Vec<usize> = picked.clone();
        let anchor_rows: Vec<(usize, [f64; 2])> = data
            .anchors
            .iter()
            .map(|a| {
                rows.push(a.1);
                (rows.len() - 1, a.0)
            })
            .collect();
        let mut pairs = Vec::new();
        for i in 0..picked.len() {
            for j in i + 1..picked.len() {
                let g = data.geodesic.get(picked[i], picked[j]);
                if g <= pair_cap {
                    pairs.push((i, j, data.eta * g));
                }
            }
        }
        let x = Tensor::new(rows.len(), dim, rows.iter().flat_map(|&r| xs[r].iter().copied()).collect());
        let (loss, g) = charting_loss_and_grad(&model.mlp, &x, model.offset, &pairs, &anchor_rows, opts.lambda)?;
        if !loss.is_finite() || g.iter().any(|v| !v.is_finite()) {
            let last = trace.last().copied().unwrap_or(f64::NAN);
            return Err(Error::NonFinite { iteration: step, detail: format!("charting loss diverged; last finite loss {last}") });
        }
        trace.push(loss);
        let sizes = model.mlp.param_sizes();
        let mut grads = Vec::with_capacity(sizes.len());
        let mut off = 0;
        for s in sizes {
            grads.push(g[off..off + s].to_vec());
            off += s;
        }
        let mut refs: Vec<&mut Vec<f64>> = model.mlp.weights.iter_mut().collect();
        adam.step(&mut refs, &grads);
    }
    Ok((model, trace))
}

/// Planar affine map `p ↦ A p + c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine2 {
    pub a: [[f64; 2]; 2],
    pub c: [f64; 2],
}

impl Affine2 {
    pub const IDENTITY: Affine2 = Affine2 { a: [[1.0, 0.0], [0.0, 1.0]], c: [0.0, 0.0] };

    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        [self.a[0][0] * p[0] + self.a[0][1] * p[1] + self.c[0], self.a[1][0] * p[0] + self.a[1][1] * p[1] + self.c[1]]
    }
}

/// Least-squares affine map with `truth ≈ A · pred + c`.
pub fn fit_affine_map(pred: &[[f64; 2]], truth: &[[f64; 2]]) -> Result<Affine2> {
    if pred.len() != truth.len() || pred.len() < 3 {
        return Err(Error::Invalid("affine fit needs at least three paired points".into()));
    }
    let n = pred.len();
    let x = nalgebra::DMatrix::from_fn(n, 3, |i, j| if j < 2 { pred[i][j] } else { 1.0 });
    let y = nalgebra::DMatrix::from_fn(n, 2, |i, j| truth[i][j]);
    let sol = x.svd(true, true).solve(&y, 1e-12).map_err(|e| Error::Domain { op: "fit_affine", detail: e.to_string() })?;
    Ok(Affine2 { a: [[sol[(0, 0)], sol[(1, 0)]], [sol[(0, 1)], sol[(1, 1)]]], c: [sol[(2, 0)], sol[(2, 1)]] })
}

/// Fit the affine map on `pred`/`truth` and return the mapped predictions.
pub fn fit_affine(pred: &[[f64; 2]], truth: &[[f64; 2]]) -> Result<Vec<[f64; 2]>> {
    let m = fit_affine_map(pred, truth)?;
    Ok(pred.iter().map(|p| m.apply(*p)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::finite_diff_check;
    use rand::Rng;

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mlp = Mlp::new(&[3, 4, 2], &mut rng);
        let x = Tensor::new(5, 3, (0..15).map(|_| rng.random_range(-1.0..1.0)).collect());
        let pairs = vec![(0, 1, 0.7), (1, 2, 1.3), (3, 4, 0.2), (0, 4, 2.0)];
        let anchors = vec![(2, [0.5, -0.5]), (4, [1.0, 1.0])];
        let worst = finite_diff_check(
            |p| {
                let mut m = mlp.clone();
                m.set_flat_params(p);
                charting_loss_and_grad(&m, &x, [0.1, 0.2], &pairs, &anchors, 5.0).unwrap()
            },
            &mlp.flat_params(),
            1e-6,
        );
        assert!(worst <= 1e-4, "relative error {worst}");
    }

    #[test]
    fn anchors_only_regression_fits() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 20;
        let feats: Vec<Vec<f64>> = (0..n).map(|_| (0..6).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
        let targets: Vec<[f64; 2]> = (0..n).map(|_| [rng.random_range(10.0..40.0), rng.random_range(-4.0..4.0)]).collect();
        let anchors: Vec<([f64; 2], usize)> = targets.iter().enumerate().map(|(i, t)| (*t, i)).collect();
        let geo = DistanceMatrix::new(n, vec![0.0; n * n]).unwrap();
        let spec = FeatureSpec { panels: 1, n_h: 1, n_v: 1, n_subcarriers: 5 };
        let data = ChartingData { features: &feats, geodesic: &geo, anchors: &anchors, eta: 0.0 };
        let opts = ChartingOptions { hidden: vec![64, 64], steps: 3000, ..ChartingOptions::default() };
        let (model, trace) = train_charting(spec, &data, &opts).unwrap();
        assert!(trace.last().unwrap() < &trace[0]);
        let pred = model.predict_features(&feats);
        let err = pred.iter().zip(&targets).map(|(p, t)| (p[0] - t[0]).hypot(p[1] - t[1])).sum::<f64>() / n as f64;
        assert!(err <= 1e-2, "train error {err}");
    }

    #[test]
    fn affine_fit_recovers_an_affine_map() {
        let pred: Vec<[f64; 2]> = (0..10).map(|i| [i as f64, (i * i) as f64 * 0.1]).collect();
        let truth: Vec<[f64; 2]> = pred.iter().map(|p| [2.0 * p[0] - p[1] + 3.0, 0.5 * p[1] - 1.0]).collect();
        for (a, b) in fit_affine(&pred, &truth).unwrap().iter().zip(&truth) {
            assert!((a[0] - b[0]).abs() < 1e-9 && (a[1] - b[1]).abs() < 1e-9);
        }
    }
}
