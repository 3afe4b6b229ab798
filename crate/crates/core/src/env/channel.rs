//! Geometric multipath channel: line of sight, one ground bounce and a set
//! of point scatterers on building facades.

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::group::rotate_c4;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Complex `N × S` channel, row-major (antenna, subcarrier).
#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub n_antennas: usize,
    pub n_subcarriers: usize,
    pub data: Vec<Complex64>,
}

impl Channel {
    pub fn zeros(n: usize, s: usize) -> Self {
        Channel { n_antennas: n, n_subcarriers: s, data: vec![Complex64::new(0.0, 0.0); n * s] }
    }

    pub fn at(&self, n: usize, s: usize) -> Complex64 {
        self.data[n * self.n_subcarriers + s]
    }

    pub fn column(&self, s: usize) -> Vec<Complex64> {
        (0..self.n_antennas).map(|n| self.at(n, s)).collect()
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }
}

/// One propagation path as seen from the RSU.
#[derive(Debug, Clone, Copy)]
pub struct Path {
    /// Horizontal departure direction (any length).
    pub dir: [f64; 2],
    /// Height drop from the array to the far end of the first leg.
    pub dz: f64,
    /// Signed amplitude.
    pub amp: f64,
    /// Total propagation length, metres.
    pub length: f64,
}

/// Array geometry: four panels facing the global ±x/±y axes.
#[derive(Debug, Clone, Copy)]
pub struct ArrayGeometry {
    pub n_h: usize,
    pub n_v: usize,
}

impl ArrayGeometry {
    pub fn panel_size(&self) -> usize {
        self.n_h * self.n_v
    }

    pub fn n_antennas(&self) -> usize {
        4 * self.panel_size()
    }

    /// Response of panel `p` to a departure direction, or `None` when the
    /// direction is behind the panel.
    pub fn panel_response(&self, p: usize, dir: [f64; 2], dz: f64) -> Option<Vec<Complex64>> {
        let [u, v] = rotate_c4(4 - p % 4, dir);
        if u <= 0.0 {
            return None;
        }
        let hd = dir[0].hypot(dir[1]);
        let phi = v.atan2(u);
        let el = -dz.atan2(hd);
        let gain = u / hd;
        let (sh, sv) = (PI * phi.sin() * el.cos(), PI * el.sin());
        let mut out = Vec::with_capacity(self.panel_size());
        for nv in 0..self.n_v {
            for nh in 0..self.n_h {
                out.push(Complex64::from_polar(gain, sh * nh as f64 + sv * nv as f64));
            }
        }
        Some(out)
    }
}

/// Sum the paths into an `N × S` channel at the given frequencies.
pub fn synthesize(paths: &[Path], array: &ArrayGeometry, freqs: &[f64]) -> Channel {
    let np = array.panel_size();
    let s = freqs.len();
    let mut ch = Channel::zeros(array.n_antennas(), s);
    let mut ramp = vec![Complex64::new(0.0, 0.0); s];
    for path in paths {
        for (k, f) in freqs.iter().enumerate() {
            ramp[k] = Complex64::from_polar(path.amp, -2.0 * PI * f * path.length / SPEED_OF_LIGHT);
        }
        for p in 0..4 {
            let Some(resp) = array.panel_response(p, path.dir, path.dz) else { continue };
            for (e, a) in resp.iter().enumerate() {
                let row = &mut ch.data[(p * np + e) * s..(p * np + e + 1) * s];
                for (dst, r) in row.iter_mut().zip(&ramp) {
                    *dst += a * r;
                }
            }
        }
    }
    ch
}

pub fn subcarrier_frequencies(carrier: f64, bandwidth: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| carrier + (k as f64 - (n / 2) as f64) * bandwidth / n as f64).collect()
}
