//! Linear maps constrained to commute with a group action.
//!
//! A weight matrix is equivariant when `K_g W = W L_g` for every g. The
//! symmetrizer averages over the group and projects onto that subspace; a basis
//! of the subspace is read off an SVD of symmetrized random samples.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::group::{BlockKind, Representation};

pub const RANK_TOL: f64 = 1e-6;
/// Block pairs with more entries than this use the orbit construction when
/// both sides are permutations.
pub const SVD_MAX_ENTRIES: usize = 256;

/// `(1/|G|) Σ_g K_g⁻¹ W L_g`.
pub fn symmetrize(w: &DMatrix<f64>, in_rep: &Representation, out_rep: &Representation) -> DMatrix<f64> {
    assert_eq!(w.nrows(), out_rep.dim(), "W rows must equal output dimension");
    assert_eq!(w.ncols(), in_rep.dim(), "W cols must equal input dimension");
    assert_eq!(in_rep.order(), out_rep.order(), "representations of different groups");
    let n = in_rep.order();
    let mut acc = DMatrix::zeros(w.nrows(), w.ncols());
    for g in 0..n {
        let inv = (n - g) % n;
        acc += out_rep.matrix(inv) * w * in_rep.matrix(g);
    }
    acc / n as f64
}

/// max_g ‖K_g W − W L_g‖∞
pub fn equivariance_residual(w: &DMatrix<f64>, in_rep: &Representation, out_rep: &Representation) -> f64 {
    (0..in_rep.order())
        .map(|g| {
            let d = out_rep.matrix(g) * w - w * in_rep.matrix(g);
            d.amax()
        })
        .fold(0.0, f64::max)
}

/// Orthonormal basis of the equivariant maps between two irreducible-ish blocks.
#[derive(Debug, Clone)]
pub struct PairBasis {
    pub rows: usize,
    pub cols: usize,
    /// Row-major `rows × cols` matrices.
    pub mats: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct Placement {
    pub row_off: usize,
    pub col_off: usize,
    pub coeff_off: usize,
    pub pair: Arc<PairBasis>,
}

/// Basis of the equivariant subspace, stored blockwise. Coefficient `i`
/// belongs to the placement whose range contains it.
#[derive(Debug, Clone)]
pub struct EquivariantBasis {
    in_dim: usize,
    out_dim: usize,
    rank: usize,
    placements: Vec<Placement>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BasisMethod {
    /// SVD per block pair, orbit sums for large permutation pairs.
    Auto,
    /// SVD per block pair regardless of size.
    Svd,
}

fn svd_pair(
    in_rep: &Representation,
    out_rep: &Representation,
    n_samples: usize,
    seed: u64,
) -> PairBasis {
    let (rows, cols) = (out_rep.dim(), in_rep.dim());
    let d = rows * cols;
    if d == 0 {
        return PairBasis { rows, cols, mats: Vec::new() };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = DMatrix::zeros(n_samples, d);
    for s in 0..n_samples {
        let w = DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal));
        let sw = symmetrize(&w, in_rep, out_rep);
        for r in 0..rows {
            for c in 0..cols {
                a[(s, r * cols + c)] = sw[(r, c)];
            }
        }
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let sv = &svd.singular_values;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    // the symmetrized samples are O(1); anything this small is rounding noise
    if smax < 1e-9 {
        return PairBasis { rows, cols, mats: Vec::new() };
    }
    let mut idx: Vec<usize> = (0..sv.len()).filter(|&i| sv[i] > RANK_TOL * smax).collect();
    idx.sort_by(|&i, &j| sv[j].partial_cmp(&sv[i]).unwrap().then(i.cmp(&j)));
    let mats = idx
        .into_iter()
        .map(|i| {
            let mut v: Vec<f64> = v_t.row(i).iter().copied().collect();
            // fix the sign so the largest entry is positive
            let k = (0..d).max_by(|&p, &q| v[p].abs().partial_cmp(&v[q].abs()).unwrap().then(q.cmp(&p))).unwrap();
            if v[k] < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            v
        })
        .collect();
    PairBasis { rows, cols, mats }
}

/// Orbit sums of matrix entries; exact for permutation representations.
fn orbit_pair(in_rep: &Representation, out_rep: &Representation) -> PairBasis {
    let (rows, cols) = (out_rep.dim(), in_rep.dim());
    let n = in_rep.order();
    let fwd_out: Vec<Vec<usize>> = (0..n).map(|g| inverse_perm(out_rep.permutation(g).unwrap())).collect();
    let fwd_in: Vec<Vec<usize>> = (0..n).map(|g| inverse_perm(in_rep.permutation(g).unwrap())).collect();
    let mut seen = vec![false; rows * cols];
    let mut mats = Vec::new();
    for i in 0..rows {
        for j in 0..cols {
            if seen[i * cols + j] {
                continue;
            }
            let mut orbit = Vec::new();
            for g in 0..n {
                let k = fwd_out[g][i] * cols + fwd_in[g][j];
                if !seen[k] {
                    seen[k] = true;
                    orbit.push(k);
                }
            }
            let v = 1.0 / (orbit.len() as f64).sqrt();
            let mut m = vec![0.0; rows * cols];
            for k in orbit {
                m[k] = v;
            }
            mats.push(m);
        }
    }
    PairBasis { rows, cols, mats }
}

fn inverse_perm(p: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; p.len()];
    for (i, &j) in p.iter().enumerate() {
        inv[j] = i;
    }
    inv
}

fn block_rep(rep: &Representation, offset: usize, dim: usize) -> Representation {
    let mats = rep
        .matrices()
        .iter()
        .map(|m| m.view((offset, offset), (dim, dim)).into_owned())
        .collect();
    Representation::from_matrices(rep.order(), mats).expect("block of a valid representation")
}

type CacheKey = (usize, BlockKind, BlockKind, BasisMethod);

fn cache() -> &'static Mutex<HashMap<CacheKey, Arc<PairBasis>>> {
    static CACHE: OnceLock<Mutex<HashMap<CacheKey, Arc<PairBasis>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn pair_seed(rows: usize, cols: usize) -> u64 {
    0x5eed_0000_0000 ^ ((rows as u64) << 20) ^ cols as u64
}

impl EquivariantBasis {
    /// Blockwise construction: one basis per distinct pair of block kinds,
    /// tiled over the block-diagonal structure of both representations.
    pub fn build(in_rep: &Representation, out_rep: &Representation, method: BasisMethod) -> Self {
        assert_eq!(in_rep.order(), out_rep.order(), "representations of different groups");
        let mut local: HashMap<(usize, usize), Arc<PairBasis>> = HashMap::new();
        let mut placements = Vec::new();
        let mut coeff_off = 0;
        for (bo_i, bo) in out_rep.blocks().iter().enumerate() {
            for (bi_i, bi) in in_rep.blocks().iter().enumerate() {
                let shareable = !matches!(bo.kind, BlockKind::Custom(_)) && !matches!(bi.kind, BlockKind::Custom(_));
                let key = (in_rep.order(), bo.kind.clone(), bi.kind.clone(), method);
                let cached = if shareable { cache().lock().unwrap().get(&key).cloned() } else { None };
                let pair = match cached {
                    Some(p) => p,
                    None => {
                        let p = local
                            .entry((bo_i, bi_i))
                            .or_insert_with(|| {
                                let ri = block_rep(in_rep, bi.offset, bi.dim);
                                let ro = block_rep(out_rep, bo.offset, bo.dim);
                                let d = bi.dim * bo.dim;
                                let pb = if method == BasisMethod::Auto
                                    && d > SVD_MAX_ENTRIES
                                    && ri.is_permutation()
                                    && ro.is_permutation()
                                {
                                    orbit_pair(&ri, &ro)
                                } else {
                                    svd_pair(&ri, &ro, 2 * d, pair_seed(bo.dim, bi.dim))
                                };
                                Arc::new(pb)
                            })
                            .clone();
                        if shareable {
                            cache().lock().unwrap().insert(key, p.clone());
                        }
                        p
                    }
                };
                if pair.mats.is_empty() {
                    continue;
                }
                let r = pair.mats.len();
                placements.push(Placement { row_off: bo.offset, col_off: bi.offset, coeff_off, pair });
                coeff_off += r;
            }
        }
        EquivariantBasis { in_dim: in_rep.dim(), out_dim: out_rep.dim(), rank: coeff_off, placements }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn placements(&self) -> &[Placement] {
        &self.placements
    }

    /// Dense basis matrix V_i.
    pub fn matrix(&self, i: usize) -> DMatrix<f64> {
        assert!(i < self.rank, "basis index out of range");
        let mut m = DMatrix::zeros(self.out_dim, self.in_dim);
        for p in &self.placements {
            if i >= p.coeff_off && i < p.coeff_off + p.pair.mats.len() {
                let v = &p.pair.mats[i - p.coeff_off];
                for r in 0..p.pair.rows {
                    for c in 0..p.pair.cols {
                        m[(p.row_off + r, p.col_off + c)] = v[r * p.pair.cols + c];
                    }
                }
            }
        }
        m
    }

    /// Σ c_i V_i as a row-major `out × in` buffer.
    pub fn compose(&self, coeffs: &[f64]) -> Vec<f64> {
        assert_eq!(coeffs.len(), self.rank, "coefficient count must equal rank");
        let mut w = vec![0.0; self.out_dim * self.in_dim];
        for p in &self.placements {
            let (rows, cols) = (p.pair.rows, p.pair.cols);
            for (k, v) in p.pair.mats.iter().enumerate() {
                let c = coeffs[p.coeff_off + k];
                if c == 0.0 {
                    continue;
                }
                for r in 0..rows {
                    let dst = &mut w[(p.row_off + r) * self.in_dim + p.col_off..][..cols];
                    let src = &v[r * cols..][..cols];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += c * s;
                    }
                }
            }
        }
        w
    }

    /// Accumulate ⟨V_i, dW⟩ into `dc`.
    pub fn project(&self, dw: &[f64], dc: &mut [f64]) {
        assert_eq!(dw.len(), self.out_dim * self.in_dim);
        assert_eq!(dc.len(), self.rank);
        for p in &self.placements {
            let (rows, cols) = (p.pair.rows, p.pair.cols);
            for (k, v) in p.pair.mats.iter().enumerate() {
                let mut acc = 0.0;
                for r in 0..rows {
                    let src = &dw[(p.row_off + r) * self.in_dim + p.col_off..][..cols];
                    let b = &v[r * cols..][..cols];
                    acc += src.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
                }
                dc[p.coeff_off + k] += acc;
            }
        }
    }
}

/// Basis from `n_samples` symmetrized Gaussian matrices over the whole
/// (unblocked) weight space.
pub fn equivariant_basis(
    in_rep: &Representation,
    out_rep: &Representation,
    n_samples: usize,
) -> Result<EquivariantBasis> {
    let d = in_rep.dim() * out_rep.dim();
    if n_samples < d {
        return Err(Error::Config(format!("need at least {d} samples, got {n_samples}")));
    }
    let pair = svd_pair(in_rep, out_rep, n_samples, pair_seed(out_rep.dim(), in_rep.dim()));
    let rank = pair.mats.len();
    let placements = if rank == 0 {
        Vec::new()
    } else {
        vec![Placement { row_off: 0, col_off: 0, coeff_off: 0, pair: Arc::new(pair) }]
    };
    Ok(EquivariantBasis { in_dim: in_rep.dim(), out_dim: out_rep.dim(), rank, placements })
}

/// Dimension of {W : K_g W = W L_g ∀g} by an exact rank computation on the
/// stacked linear constraints (full-pivot LU on the constraint matrix).
pub fn constraint_rank(in_rep: &Representation, out_rep: &Representation) -> usize {
    let (m, n) = (out_rep.dim(), in_rep.dim());
    let d = m * n;
    if d == 0 {
        return 0;
    }
    let gens = in_rep.order();
    let mut c = DMatrix::zeros(gens * d, d);
    for g in 0..gens {
        let k = out_rep.matrix(g);
        let l = in_rep.matrix(g);
        // vec(K W − W L) with row-major vec: entry (i,j) = Σ_p K[i,p] W[p,j] − Σ_q W[i,q] L[q,j]
        for i in 0..m {
            for j in 0..n {
                let row = g * d + i * n + j;
                for p in 0..m {
                    c[(row, p * n + j)] += k[(i, p)];
                }
                for q in 0..n {
                    c[(row, i * n + q)] -= l[(q, j)];
                }
            }
        }
    }
    let rank_c = exact_rank(c);
    d - rank_c
}

/// Gaussian elimination with full pivoting. Entries of the constraint
/// matrices here are small integers or cos/sin values, so a 1e-9 pivot
/// threshold separates zero from nonzero cleanly.
fn exact_rank(mut a: DMatrix<f64>) -> usize {
    let (rows, cols) = a.shape();
    let mut rank = 0;
    let mut row = 0;
    for col in 0..cols {
        if row >= rows {
            break;
        }
        let (mut best, mut bv) = (row, 0.0);
        for r in row..rows {
            if a[(r, col)].abs() > bv {
                bv = a[(r, col)].abs();
                best = r;
            }
        }
        if bv < 1e-9 {
            continue;
        }
        a.swap_rows(row, best);
        for r in row + 1..rows {
            let f = a[(r, col)] / a[(row, col)];
            if f != 0.0 {
                for cc in col..cols {
                    let v = a[(row, cc)];
                    a[(r, cc)] -= f * v;
                }
            }
        }
        row += 1;
        rank += 1;
    }
    rank
}

/// Linear layer `y = W [x; 1]` with W in the equivariant subspace of
/// `(in_rep ⊕ trivial) → out_rep`.
#[derive(Debug, Clone)]
pub struct EquivariantLayer {
    pub basis: Arc<EquivariantBasis>,
    pub coeffs: Vec<f64>,
    pub in_rep: Representation,
    pub out_rep: Representation,
}

pub fn with_bias(rep: &Representation) -> Representation {
    Representation::direct_sum(&[rep, &Representation::trivial(rep.order())])
}

impl EquivariantLayer {
    pub fn zeros(in_rep: &Representation, out_rep: &Representation) -> Self {
        let ext = with_bias(in_rep);
        let basis = Arc::new(EquivariantBasis::build(&ext, out_rep, BasisMethod::Auto));
        let coeffs = vec![0.0; basis.rank()];
        EquivariantLayer { basis, coeffs, in_rep: in_rep.clone(), out_rep: out_rep.clone() }
    }

    /// He-style initialization: entries of W have variance ≈ 2/fan_in.
    pub fn new<R: Rng>(in_rep: &Representation, out_rep: &Representation, rng: &mut R) -> Self {
        let mut layer = Self::zeros(in_rep, out_rep);
        let r = layer.basis.rank();
        if r > 0 {
            let fan_in = (in_rep.dim() + 1) as f64;
            let var = 2.0 / fan_in * (out_rep.dim() * (in_rep.dim() + 1)) as f64 / r as f64;
            let sd = var.sqrt();
            for c in layer.coeffs.iter_mut() {
                *c = sd * rng.sample::<f64, _>(StandardNormal);
            }
        }
        layer
    }

    pub fn weight(&self) -> DMatrix<f64> {
        let w = self.basis.compose(&self.coeffs);
        DMatrix::from_row_slice(self.basis.out_dim(), self.basis.in_dim(), &w)
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.in_rep.dim(), "input length mismatch");
        let w = self.basis.compose(&self.coeffs);
        let n = self.basis.in_dim();
        (0..self.basis.out_dim())
            .map(|r| {
                let row = &w[r * n..(r + 1) * n];
                row[..n - 1].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + row[n - 1]
            })
            .collect()
    }

    pub fn n_params(&self) -> usize {
        self.coeffs.len()
    }
}

/// max over trials and g of ‖K_g f(x) − f(L_g x)‖∞ for random unit x.
pub fn check_equivariance<F, R>(
    f: F,
    in_rep: &Representation,
    out_rep: &Representation,
    trials: usize,
    rng: &mut R,
) -> f64
where
    F: Fn(&[f64]) -> Vec<f64>,
    R: Rng,
{
    let mut worst: f64 = 0.0;
    for _ in 0..trials.max(1) {
        let mut x: Vec<f64> = (0..in_rep.dim()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let nrm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if nrm > 0.0 {
            x.iter_mut().for_each(|v| *v /= nrm);
        }
        let fx = f(&x);
        for g in 0..in_rep.order() {
            let lhs = out_rep.apply(g, &fx);
            let rhs = f(&in_rep.apply(g, &x));
            for (a, b) in lhs.iter().zip(&rhs) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    worst
}

pub fn relu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| v.max(0.0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{codebook_perm_rep, intermediate_perm_rep, state_rep, CodebookMode};

    fn swap_c2() -> Representation {
        let id = DMatrix::identity(2, 2);
        let sw = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        Representation::from_matrices(2, vec![id, sw]).unwrap()
    }

    fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
    }

    #[test]
    fn trivial_group_leaves_w_unchanged() {
        let one = Representation::from_matrices(1, vec![DMatrix::identity(3, 3)]).unwrap();
        let two = Representation::from_matrices(1, vec![DMatrix::identity(2, 2)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = random_matrix(2, 3, &mut rng);
        assert_eq!(symmetrize(&w, &one, &two), w);
    }

    #[test]
    fn regular_symmetrization_is_circulant() {
        let p = intermediate_perm_rep(4);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w = random_matrix(4, 4, &mut rng);
        let s = symmetrize(&w, &p, &p);
        // brute-force oracle: average W over simultaneous cyclic shifts of rows and cols
        for i in 0..4 {
            for j in 0..4 {
                let avg: f64 = (0..4).map(|k| w[((i + k) % 4, (j + k) % 4)]).sum::<f64>() / 4.0;
                assert!((s[(i, j)] - avg).abs() < 1e-12);
                assert!((s[(i, j)] - s[((i + 1) % 4, (j + 1) % 4)]).abs() < 1e-12);
            }
        }
        let s2 = symmetrize(&s, &p, &p);
        assert!((s2 - &s).amax() < 1e-12);
    }

    #[test]
    fn ranks_of_spec_examples() {
        let sw = swap_c2();
        let b = equivariant_basis(&sw, &sw, 8).unwrap();
        assert_eq!(b.rank(), 2);
        let r = Representation::rotation(4);
        let t = Representation::trivial(4);
        assert_eq!(equivariant_basis(&r, &t, 4).unwrap().rank(), 0);
        let p = intermediate_perm_rep(4);
        assert_eq!(equivariant_basis(&p, &p, 32).unwrap().rank(), 4);
        assert_eq!(constraint_rank(&sw, &sw), 2);
        assert_eq!(constraint_rank(&r, &t), 0);
        assert_eq!(constraint_rank(&p, &p), 4);
        assert!(equivariant_basis(&p, &p, 10).is_err());
    }

    #[test]
    fn basis_is_orthonormal_and_equivariant() {
        let in_rep = Representation::direct_sum(&[&state_rep(4, 2), &intermediate_perm_rep(4)]);
        let out_rep = Representation::repeat(&intermediate_perm_rep(4), 3);
        for method in [BasisMethod::Auto, BasisMethod::Svd] {
            let b = EquivariantBasis::build(&in_rep, &out_rep, method);
            assert_eq!(b.rank(), constraint_rank(&in_rep, &out_rep));
            let mats: Vec<_> = (0..b.rank()).map(|i| b.matrix(i)).collect();
            for (i, mi) in mats.iter().enumerate() {
                assert!(equivariance_residual(mi, &in_rep, &out_rep) < 1e-8);
                for (j, mj) in mats.iter().enumerate() {
                    let ip = mi.dot(mj);
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((ip - want).abs() < 1e-8, "{i} {j} {ip}");
                }
            }
        }
    }

    #[test]
    fn orbit_and_svd_span_the_same_space() {
        let k = codebook_perm_rep(CodebookMode::Cyclic, 16).unwrap();
        let p = Representation::repeat(&intermediate_perm_rep(4), 5);
        let auto = EquivariantBasis::build(&p, &k, BasisMethod::Auto);
        let svd = EquivariantBasis::build(&p, &k, BasisMethod::Svd);
        assert_eq!(auto.rank(), svd.rank());
        // project every SVD basis element onto the orbit basis: nothing should be lost
        for i in 0..svd.rank() {
            let v = svd.matrix(i);
            let mut dc = vec![0.0; auto.rank()];
            auto.project(v.as_slice_row_major().as_slice(), &mut dc);
            let back = auto.compose(&dc);
            let vr = v.as_slice_row_major();
            let err = back.iter().zip(vr.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-8);
        }
    }

    trait RowMajor {
        fn as_slice_row_major(&self) -> Vec<f64>;
    }
    impl RowMajor for DMatrix<f64> {
        fn as_slice_row_major(&self) -> Vec<f64> {
            let mut v = Vec::with_capacity(self.len());
            for r in 0..self.nrows() {
                for c in 0..self.ncols() {
                    v.push(self[(r, c)]);
                }
            }
            v
        }
    }

    #[test]
    fn layer_forward_examples() {
        let p = intermediate_perm_rep(4);
        let z = EquivariantLayer::zeros(&p, &p);
        assert_eq!(z.forward(&[1.0, 2.0, 3.0, 4.0]), vec![0.0; 4]);
        let mut one = z.clone();
        one.coeffs[0] = 1.0;
        let v1 = one.basis.matrix(0);
        let x = [0.3, -1.0, 2.0, 0.5];
        let ext = nalgebra::DVector::from_vec(vec![0.3, -1.0, 2.0, 0.5, 1.0]);
        let want = &v1 * ext;
        for (a, b) in one.forward(&x).iter().zip(want.iter()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn layer_with_relu_is_equivariant_and_negative_control_is_not() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let in_rep = state_rep(4, 3);
        let out_rep = Representation::repeat(&intermediate_perm_rep(4), 4);
        let layer = EquivariantLayer::new(&in_rep, &out_rep, &mut rng);
        let res = check_equivariance(|x| relu(&layer.forward(x)), &in_rep, &out_rep, 20, &mut rng);
        assert!(res <= 1e-10, "{res}");

        let mut w = layer.weight();
        w[(0, 0)] += 0.5;
        let bad = move |x: &[f64]| {
            let mut e = x.to_vec();
            e.push(1.0);
            (&w * nalgebra::DVector::from_vec(e)).iter().copied().collect::<Vec<_>>()
        };
        assert!(check_equivariance(bad, &in_rep, &out_rep, 5, &mut rng) > 0.0);
    }

    #[test]
    fn identity_function_has_zero_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let r = state_rep(4, 2);
        assert_eq!(check_equivariance(|x| x.to_vec(), &r, &r, 5, &mut rng), 0.0);
    }
}
