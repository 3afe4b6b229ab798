//! Unsupervised matching of two intra-modal distance matrices by a
//! primal-dual gradient method on min_{M,η} ‖D_im − η M D_csi Mᵀ‖²_F.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::assign::{greedy_max, hungarian_max, injections};
use super::distance::DistanceMatrix;
use crate::error::{Error, Result};

/// Largest instance solved by the exact assignment method.
pub const EXACT_ASSIGNMENT_MAX: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignOptions {
    /// Primal-dual step size ς.
    pub lr: f64,
    /// Multiplicative step decay per iteration.
    pub lr_decay: f64,
    pub max_iters: usize,
    /// Stop once the relative objective decrease falls below this.
    pub tol: f64,
    pub min_iters: usize,
    /// Work on Frobenius-normalized matrices.
    pub normalize: bool,
    /// Finish with a projection onto the soft-matching set.
    pub project: bool,
    /// Independent runs; restart 0 starts uniform, the others from a
    /// jittered uniform matrix. The run with the best hardened fit wins.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for AlignOptions {
    fn default() -> Self {
        AlignOptions { lr: 0.1, lr_decay: 1.0, max_iters: 15000, tol: 1e-8, min_iters: 1000, normalize: true, project: true, restarts: 4, seed: 0 }
    }
}

/// Soft matching between image rows and CSI columns.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchingMatrix {
    pub m: DMatrix<f64>,
    pub eta: f64,
    pub u: DVector<f64>,
    pub q: DVector<f64>,
    pub slack: DVector<f64>,
}

impl MatchingMatrix {
    pub fn rows(&self) -> usize {
        self.m.nrows()
    }

    pub fn cols(&self) -> usize {
        self.m.ncols()
    }

    /// Box, row-sum and column-sum constraints of the soft set.
    pub fn check_soft(&self, tol: f64) -> Result<()> {
        for v in self.m.iter() {
            if !(-tol..=1.0 + tol).contains(v) {
                return Err(Error::Invalid(format!("matching entry {v} outside [0,1]")));
            }
        }
        for (i, r) in self.m.row_iter().enumerate() {
            let s = r.sum();
            if (s - 1.0).abs() > tol {
                return Err(Error::Invalid(format!("row {i} sums to {s}")));
            }
        }
        for (j, c) in self.m.column_iter().enumerate() {
            let s = c.sum();
            if s > 1.0 + tol {
                return Err(Error::Invalid(format!("column {j} sums to {s}")));
            }
        }
        Ok(())
    }

    /// Row-major copy.
    pub fn row_major(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.rows() * self.cols());
        for i in 0..self.rows() {
            out.extend(self.m.row(i).iter());
        }
        out
    }

    /// Swap a fraction of rows among themselves (each chosen row moves).
    pub fn perturb_rows<R: Rng>(&self, rate: f64, rng: &mut R) -> MatchingMatrix {
        let n = self.rows();
        let k = ((rate.clamp(0.0, 1.0) * n as f64).round() as usize).min(n);
        let mut out = self.clone();
        if k < 2 {
            return out;
        }
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(rng);
        idx.truncate(k);
        for (a, &i) in idx.iter().enumerate() {
            let src = idx[(a + 1) % k];
            out.m.set_row(i, &self.m.row(src));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct Alignment {
    pub matching: MatchingMatrix,
    /// Scale in the units of the inputs: D_im ≈ η · M D_csi Mᵀ.
    pub eta: f64,
    pub iterations: usize,
    /// Objective (normalized units) after every iteration.
    pub objective: Vec<f64>,
    /// Largest objective increase caused by an η update; ≤ 0 up to rounding.
    pub max_eta_increase: f64,
    pub final_objective: f64,
}

fn to_dmatrix(d: &DistanceMatrix, scale: f64) -> DMatrix<f64> {
    let n = d.len();
    DMatrix::from_fn(n, n, |i, j| d.get(i, j) * scale)
}

fn objective(a: &DMatrix<f64>, k: &DMatrix<f64>, eta: f64) -> f64 {
    (a - k * eta).norm_squared()
}

fn best_eta(a: &DMatrix<f64>, k: &DMatrix<f64>) -> f64 {
    let kk = k.norm_squared();
    if kk == 0.0 {
        0.0
    } else {
        a.dot(k) / kk
    }
}

/// ∇_M ‖A − η M B Mᵀ‖² for symmetric A, B.
pub fn objective_gradient(a: &DMatrix<f64>, b: &DMatrix<f64>, m: &DMatrix<f64>, eta: f64) -> DMatrix<f64> {
    let mb = m * b;
    let k = &mb * m.transpose();
    (&k * &mb) * (4.0 * eta * eta) - (a * &mb) * (4.0 * eta)
}

/// Alternate row normalization and column capping until the matrix has unit
/// rows, columns summing to at most one and entries in [0,1].
pub fn project_soft(m: &mut DMatrix<f64>) {
    let (r, c) = m.shape();
    m.apply(|v| *v = v.clamp(0.0, 1.0));
    let normalize_rows = |m: &mut DMatrix<f64>| {
        for i in 0..r {
            let s = m.row(i).sum();
            if s > 0.0 {
                m.row_mut(i).scale_mut(1.0 / s);
            } else {
                m.row_mut(i).fill(1.0 / c as f64);
            }
        }
    };
    for _ in 0..10_000 {
        normalize_rows(m);
        let worst = (0..c).map(|j| m.column(j).sum() - 1.0).fold(0.0, f64::max);
        if worst <= 1e-10 {
            return;
        }
        for j in 0..c {
            let s = m.column(j).sum();
            if s > 1.0 {
                m.column_mut(j).scale_mut(1.0 / s);
            }
        }
    }
    // A zero pattern without a perfect matching makes the alternation crawl.
    // Cap full columns, then hand each row's loss to the columns with room.
    normalize_rows(m);
    let sums: Vec<f64> = (0..c).map(|j| m.column(j).sum()).collect();
    let room: Vec<f64> = sums.iter().map(|s| (1.0 - s).max(0.0)).collect();
    let total_room: f64 = room.iter().sum();
    for (j, &s) in sums.iter().enumerate() {
        if s > 1.0 {
            m.column_mut(j).scale_mut(1.0 / s);
        }
    }
    if total_room > 0.0 {
        for i in 0..r {
            let lost = 1.0 - m.row(i).sum();
            for j in 0..c {
                m[(i, j)] += lost * room[j] / total_room;
            }
        }
    }
}

pub fn solve_alignment(d_im: &DistanceMatrix, d_csi: &DistanceMatrix, opts: &AlignOptions) -> Result<Alignment> {
    let (ni, nc) = (d_im.len(), d_csi.len());
    if ni == 0 || ni > nc {
        return Err(Error::Invalid(format!("alignment needs 0 < image samples ≤ CSI samples, got {ni} and {nc}")));
    }
    if !(opts.lr > 0.0 && opts.lr_decay > 0.0 && opts.lr_decay <= 1.0) {
        return Err(Error::Config(format!("bad step size {} or decay {}", opts.lr, opts.lr_decay)));
    }
    if opts.restarts == 0 {
        return Err(Error::Config("alignment needs at least one restart".into()));
    }
    let restarts: Vec<usize> = (0..opts.restarts).collect();
    let runs = crate::par::map(&restarts, |&r| {
        let mut m0 = DMatrix::from_element(ni, nc, 1.0 / nc as f64);
        if r > 0 {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(r as u64));
            m0.apply(|v| *v *= rng.random_range(0.5..1.5));
        }
        solve_from(d_im, d_csi, m0, opts)
    });
    let mut best: Option<(f64, Alignment)> = None;
    for run in runs {
        let al = run?;
        let (obj, _) = assignment_objective(d_im, d_csi, &harden_matching(&al.matching));
        if best.as_ref().is_none_or(|b| obj < b.0) {
            best = Some((obj, al));
        }
    }
    Ok(best.unwrap().1)
}

fn solve_from(d_im: &DistanceMatrix, d_csi: &DistanceMatrix, m0: DMatrix<f64>, opts: &AlignOptions) -> Result<Alignment> {
    let (ni, nc) = (d_im.len(), d_csi.len());
    let (s_im, s_csi) = if opts.normalize { (d_im.frobenius(), d_csi.frobenius()) } else { (1.0, 1.0) };
    let inv = |s: f64| if s > 0.0 { 1.0 / s } else { 1.0 };
    let a = to_dmatrix(d_im, inv(s_im));
    let b = to_dmatrix(d_csi, inv(s_csi));
    let mut m = m0;
    let mut u: DVector<f64> = DVector::zeros(ni);
    let mut q: DVector<f64> = DVector::zeros(nc);
    let mut slack: DVector<f64> = DVector::zeros(nc);
    let mut k = &m * &b * m.transpose();
    let mut eta = best_eta(&a, &k);
    let mut lr = opts.lr;
    let mut trace = Vec::new();
    let mut max_eta_increase = f64::NEG_INFINITY;
    let mut prev = objective(&a, &k, eta);
    let mut iterations = 0;
    for it in 0..opts.max_iters {
        let mut g = objective_gradient(&a, &b, &m, eta);
        for i in 0..ni {
            for j in 0..nc {
                g[(i, j)] += u[i] + q[j];
            }
        }
        m -= g * lr;
        m.apply(|v| *v = v.clamp(0.0, 1.0));
        for j in 0..nc {
            slack[j] = (slack[j] - lr * q[j]).max(0.0);
        }
        for i in 0..ni {
            u[i] += lr * (m.row(i).sum() - 1.0);
        }
        for j in 0..nc {
            q[j] += lr * (m.column(j).sum() - 1.0 + slack[j]);
        }
        k = &m * &b * m.transpose();
        let before = objective(&a, &k, eta);
        eta = best_eta(&a, &k);
        let obj = objective(&a, &k, eta);
        max_eta_increase = max_eta_increase.max(obj - before);
        if !obj.is_finite() || !eta.is_finite() {
            return Err(Error::NonFinite { iteration: it, detail: format!("objective {obj}, eta {eta}") });
        }
        trace.push(obj);
        iterations = it + 1;
        lr *= opts.lr_decay;
        let dec = prev - obj;
        if it + 1 >= opts.min_iters && dec >= 0.0 && dec < opts.tol * prev.max(f64::MIN_POSITIVE) {
            break;
        }
        prev = obj;
    }
    if opts.project {
        project_soft(&mut m);
        k = &m * &b * m.transpose();
        eta = best_eta(&a, &k);
    }
    let eta_out = eta * if s_csi > 0.0 { s_im / s_csi } else { 0.0 };
    let full_a = to_dmatrix(d_im, 1.0);
    let full_k = &m * to_dmatrix(d_csi, 1.0) * m.transpose();
    let final_objective = objective(&full_a, &full_k, eta_out);
    Ok(Alignment {
        matching: MatchingMatrix { m, eta: eta_out, u, q, slack },
        eta: eta_out,
        iterations,
        objective: trace,
        max_eta_increase,
        final_objective,
    })
}

/// Injective image-row → CSI-column assignment maximizing total weight.
pub fn harden_matching(m: &MatchingMatrix) -> Vec<usize> {
    let w = m.row_major();
    if m.rows() <= EXACT_ASSIGNMENT_MAX {
        hungarian_max(&w, m.rows(), m.cols())
    } else {
        greedy_max(&w, m.rows(), m.cols())
    }
}

/// min_η ‖D_im − η D_csi[a, a]‖² for a hard assignment `a`.
pub fn assignment_objective(d_im: &DistanceMatrix, d_csi: &DistanceMatrix, assign: &[usize]) -> (f64, f64) {
    let n = assign.len();
    let a = to_dmatrix(d_im, 1.0);
    let k = DMatrix::from_fn(n, n, |i, j| d_csi.get(assign[i], assign[j]));
    let eta = best_eta(&a, &k);
    (objective(&a, &k, eta), eta)
}

/// Brute-force optimum over all injective assignments (tiny sizes only).
pub fn exhaustive_alignment(d_im: &DistanceMatrix, d_csi: &DistanceMatrix) -> Result<(Vec<usize>, f64, f64)> {
    if d_im.len() > 8 || d_im.len() > d_csi.len() || d_csi.len() > 9 {
        return Err(Error::Invalid("exhaustive alignment is limited to 8 image and 9 CSI samples".into()));
    }
    let mut best: Option<(Vec<usize>, f64, f64)> = None;
    for p in injections(d_im.len(), d_csi.len()) {
        let (obj, eta) = assignment_objective(d_im, d_csi, &p);
        if best.as_ref().is_none_or(|b| obj < b.2) {
            best = Some((p, eta, obj));
        }
    }
    Ok(best.unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn points(n: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
        (0..n).map(|_| [rng.random_range(10.0..40.0), rng.random_range(-4.0..4.0)]).collect()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = to_dmatrix(&DistanceMatrix::euclidean(&points(4, &mut rng)), 0.1);
        let b = to_dmatrix(&DistanceMatrix::euclidean(&points(5, &mut rng)), 0.1);
        let m = DMatrix::from_fn(4, 5, |_, _| rng.random_range(0.0..1.0));
        let g = objective_gradient(&a, &b, &m, 0.7);
        let h = 1e-6;
        for i in 0..4 {
            for j in 0..5 {
                let mut mp = m.clone();
                mp[(i, j)] += h;
                let mut mm = m.clone();
                mm[(i, j)] -= h;
                let f = |x: &DMatrix<f64>| objective(&a, &(x * &b * x.transpose()), 0.7);
                let num = (f(&mp) - f(&mm)) / (2.0 * h);
                assert!((num - g[(i, j)]).abs() <= 1e-6 * num.abs().max(1.0));
            }
        }
    }

    #[test]
    fn identical_matrices_give_identity_and_unit_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = DistanceMatrix::euclidean(&points(6, &mut rng));
        let al = solve_alignment(&d, &d, &AlignOptions::default()).unwrap();
        assert_eq!(harden_matching(&al.matching), vec![0, 1, 2, 3, 4, 5]);
        assert!((al.eta - 1.0).abs() < 1e-3, "eta {}", al.eta);
        al.matching.check_soft(1e-6).unwrap();
        assert!(al.max_eta_increase <= 1e-12);
    }

    #[test]
    fn doubled_csi_distances_halve_eta() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let d = DistanceMatrix::euclidean(&points(6, &mut rng));
        let (obj, eta) = assignment_objective(&d, &d.scaled(2.0), &[0, 1, 2, 3, 4, 5]);
        assert!(obj < 1e-20 && (eta - 0.5).abs() < 1e-15);
        let al = solve_alignment(&d, &d.scaled(2.0), &AlignOptions::default()).unwrap();
        assert!((al.eta - 0.5).abs() < 1e-3);
    }

    #[test]
    fn zero_image_distances_give_zero_scale() {
        let z = DistanceMatrix::new(3, vec![0.0; 9]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = DistanceMatrix::euclidean(&points(4, &mut rng));
        let al = solve_alignment(&z, &d, &AlignOptions { max_iters: 50, ..AlignOptions::default() }).unwrap();
        assert_eq!(al.eta, 0.0);
        assert_eq!(al.final_objective, 0.0);
        assert!(solve_alignment(&d, &z, &AlignOptions::default()).is_err());
    }

    #[test]
    fn agrees_with_exhaustive_search_on_small_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for n in 3..=6 {
            for _ in 0..3 {
                let pts = points(n, &mut rng);
                let mut perm: Vec<usize> = (0..n).collect();
                perm.shuffle(&mut rng);
                let shuffled: Vec<[f64; 2]> = perm.iter().map(|&i| pts[i]).collect();
                let d_im = DistanceMatrix::euclidean(&pts);
                let d_csi = DistanceMatrix::euclidean(&shuffled).scaled(2.0);
                let (best, eta, obj) = exhaustive_alignment(&d_im, &d_csi).unwrap();
                let al = solve_alignment(&d_im, &d_csi, &AlignOptions::default()).unwrap();
                let hard = harden_matching(&al.matching);
                let (o, _) = assignment_objective(&d_im, &d_csi, &hard);
                assert!(o <= obj + 1e-9 * d_im.frobenius().powi(2), "n={n}: {hard:?} vs {best:?}");
                assert!((eta - 0.5).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn projection_reaches_the_soft_set_and_perturbation_moves_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut m = DMatrix::from_fn(4, 6, |_, _| rng.random_range(-0.5..1.5));
        project_soft(&mut m);
        let mm = MatchingMatrix { m, eta: 1.0, u: DVector::zeros(4), q: DVector::zeros(6), slack: DVector::zeros(6) };
        mm.check_soft(1e-6).unwrap();
        let id = MatchingMatrix { m: DMatrix::identity(10, 10), ..mm.clone() };
        let p = id.perturb_rows(0.3, &mut rng);
        let moved = (0..10).filter(|&i| harden_matching(&p)[i] != i).count();
        assert_eq!(moved, 3);
        assert_eq!(id.perturb_rows(0.0, &mut rng), id);
    }
}
