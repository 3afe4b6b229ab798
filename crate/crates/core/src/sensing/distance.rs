//! Distance matrices, the angle-delay-profile dissimilarity and k-NN
//! geodesics.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::env::Channel;
use crate::error::{Error, Result};

/// Symmetric, nonnegative, zero-diagonal matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::Invalid(format!("distance matrix of size {n} needs {} entries, got {}", n * n, data.len())));
        }
        for i in 0..n {
            if data[i * n + i] != 0.0 {
                return Err(Error::Invalid(format!("nonzero diagonal at {i}")));
            }
            for j in 0..n {
                let (a, b) = (data[i * n + j], data[j * n + i]);
                if a.is_nan() || a < 0.0 {
                    return Err(Error::Invalid(format!("entry ({i},{j}) = {a} is not a distance")));
                }
                if (a - b).abs() > 1e-12 * a.abs().max(1.0) {
                    return Err(Error::Invalid(format!("asymmetric entries at ({i},{j}): {a} vs {b}")));
                }
            }
        }
        Ok(DistanceMatrix { n, data })
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let v = f(i, j);
                data[i * n + j] = v;
                data[j * n + i] = v;
            }
        }
        DistanceMatrix::new(n, data)
    }

    pub fn euclidean(points: &[[f64; 2]]) -> Self {
        DistanceMatrix::from_fn(points.len(), |i, j| (points[i][0] - points[j][0]).hypot(points[i][1] - points[j][1]))
            .expect("Euclidean distances are valid")
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn submatrix(&self, idx: &[usize]) -> Self {
        let m = idx.len();
        let mut data = vec![0.0; m * m];
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                data[a * m + b] = self.get(i, j);
            }
        }
        DistanceMatrix { n: m, data }
    }

    pub fn scaled(&self, c: f64) -> Self {
        assert!(c >= 0.0);
        DistanceMatrix { n: self.n, data: self.data.iter().map(|v| v * c).collect() }
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Largest violation of d(i,k) ≤ d(i,j) + d(j,k).
    pub fn triangle_violation(&self) -> f64 {
        let n = self.n;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    worst = worst.max(self.get(i, k) - self.get(i, j) - self.get(j, k));
                }
            }
        }
        worst
    }
}

/// Delay-domain taps of a channel, tap-major (`taps[t * N + n]`).
#[derive(Debug, Clone)]
pub struct DelayProfile {
    pub n_antennas: usize,
    pub n_taps: usize,
    pub taps: Vec<Complex64>,
    /// Per-tap energy Σ_n |ĥ_{n,t}|².
    pub energy: Vec<f64>,
}

impl DelayProfile {
    pub fn new(h: &Channel) -> Self {
        let (n, s) = (h.n_antennas, h.n_subcarriers);
        let fft = FftPlanner::new().plan_fft_inverse(s);
        let mut taps = vec![Complex64::new(0.0, 0.0); n * s];
        let mut buf = vec![Complex64::new(0.0, 0.0); s];
        for a in 0..n {
            buf.copy_from_slice(&h.data[a * s..(a + 1) * s]);
            fft.process(&mut buf);
            for t in 0..s {
                taps[t * n + a] = buf[t] / s as f64;
            }
        }
        let energy = (0..s).map(|t| taps[t * n..(t + 1) * n].iter().map(|z| z.norm_sqr()).sum()).collect();
        DelayProfile { n_antennas: n, n_taps: s, taps, energy }
    }
}

/// Σ_t (1 − |⟨ĥ_i,t, ĥ_j,t⟩|² / (‖ĥ_i,t‖² ‖ĥ_j,t‖²)); taps with zero energy
/// on either side contribute 0.
pub fn adp_from_profiles(a: &DelayProfile, b: &DelayProfile) -> Result<f64> {
    if a.n_antennas != b.n_antennas || a.n_taps != b.n_taps {
        return Err(Error::Invalid(format!(
            "channel shapes differ: {}x{} vs {}x{}",
            a.n_antennas, a.n_taps, b.n_antennas, b.n_taps
        )));
    }
    let n = a.n_antennas;
    let mut d = 0.0;
    for t in 0..a.n_taps {
        let den = a.energy[t] * b.energy[t];
        if den == 0.0 {
            continue;
        }
        let ip: Complex64 = a.taps[t * n..(t + 1) * n].iter().zip(&b.taps[t * n..(t + 1) * n]).map(|(x, y)| x.conj() * y).sum();
        d += (1.0 - ip.norm_sqr() / den).max(0.0);
    }
    Ok(d)
}

pub fn adp_dissimilarity(h_i: &Channel, h_j: &Channel) -> Result<f64> {
    if h_i.n_antennas != h_j.n_antennas || h_i.n_subcarriers != h_j.n_subcarriers {
        return Err(Error::Invalid("channel shapes differ".into()));
    }
    if std::ptr::eq(h_i, h_j) || h_i == h_j {
        return Ok(0.0);
    }
    adp_from_profiles(&DelayProfile::new(h_i), &DelayProfile::new(h_j))
}

/// All-pairs ADP dissimilarity, rows split across threads.
pub fn adp_matrix(profiles: &[DelayProfile]) -> Result<DistanceMatrix> {
    let n = profiles.len();
    if let Some(p) = profiles.iter().find(|p| p.n_antennas != profiles[0].n_antennas || p.n_taps != profiles[0].n_taps) {
        return Err(Error::Invalid(format!("channel shape {}x{} differs from the first", p.n_antennas, p.n_taps)));
    }
    let threads = crate::par::jobs().min(n.max(1));
    let mut data = vec![0.0; n * n];
    let rows_per = n.div_ceil(threads.max(1)).max(1);
    std::thread::scope(|sc| {
        for (c, chunk) in data.chunks_mut(rows_per * n.max(1)).enumerate() {
            sc.spawn(move || {
                for (r, row) in chunk.chunks_mut(n).enumerate() {
                    let i = c * rows_per + r;
                    for j in i + 1..n {
                        row[j] = adp_from_profiles(&profiles[i], &profiles[j]).expect("shapes checked");
                    }
                }
            });
        }
    });
    for i in 0..n {
        for j in 0..i {
            data[i * n + j] = data[j * n + i];
        }
    }
    DistanceMatrix::new(n, data)
}

#[derive(PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Shortest paths over the union-symmetrized k-nearest-neighbour graph.
/// Non-edges are absent (infinite), not a large constant.
pub fn geodesic_matrix(d: &DistanceMatrix, k: usize) -> Result<DistanceMatrix> {
    let n = d.len();
    if k == 0 || n < k + 1 {
        return Err(Error::Invalid(format!("geodesic needs at least k+1 = {} samples and k ≥ 1, got {n}", k + 1)));
    }
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut is_edge = vec![false; n * n];
    for i in 0..n {
        let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        others.sort_by(|&a, &b| d.get(i, a).total_cmp(&d.get(i, b)).then(a.cmp(&b)));
        for &j in &others[..k] {
            is_edge[i * n + j] = true;
            is_edge[j * n + i] = true;
        }
    }
    for i in 0..n {
        for j in 0..n {
            if is_edge[i * n + j] {
                adj[i].push((j, d.get(i, j)));
            }
        }
    }
    let mut out = vec![f64::INFINITY; n * n];
    for s in 0..n {
        let dist = &mut out[s * n..(s + 1) * n];
        dist[s] = 0.0;
        let mut heap = BinaryHeap::new();
        heap.push(Entry(0.0, s));
        while let Some(Entry(du, u)) = heap.pop() {
            if du > dist[u] {
                continue;
            }
            for &(v, w) in &adj[u] {
                let nd = du + w;
                if nd < dist[v] {
                    dist[v] = nd;
                    heap.push(Entry(nd, v));
                }
            }
        }
    }
    if out[..n].iter().any(|v| v.is_infinite()) {
        let mut comp = vec![usize::MAX; n];
        let mut components = Vec::new();
        for i in 0..n {
            if comp[i] == usize::MAX {
                let c = components.len();
                let members: Vec<usize> = (0..n).filter(|&j| out[i * n + j].is_finite()).collect();
                for &j in &members {
                    comp[j] = c;
                }
                components.push(members);
            }
        }
        return Err(Error::Disconnected { components });
    }
    // Dijkstra from both ends can differ in the last bit
    for i in 0..n {
        for j in i + 1..n {
            let v = out[i * n + j].min(out[j * n + i]);
            out[i * n + j] = v;
            out[j * n + i] = v;
        }
    }
    DistanceMatrix::new(n, out)
}
