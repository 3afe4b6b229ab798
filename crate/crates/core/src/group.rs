//! Cyclic rotation groups and their matrix representations.
//!
//! Elements are integer indices; composition is addition modulo the order.
//! Matrices are derived from the index, never the other way round.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GroupElement {
    index: usize,
    order: usize,
}

impl GroupElement {
    pub fn new(index: usize, order: usize) -> Self {
        assert!(order >= 1, "group order must be positive");
        GroupElement { index: index % order, order }
    }

    pub fn identity(order: usize) -> Self {
        Self::new(0, order)
    }

    pub fn index(self) -> usize {
        self.index
    }

    pub fn order(self) -> usize {
        self.order
    }

    pub fn compose(self, other: GroupElement) -> GroupElement {
        assert_eq!(self.order, other.order, "composing elements of different groups");
        GroupElement::new(self.index + other.index, self.order)
    }

    pub fn inverse(self) -> GroupElement {
        GroupElement::new(self.order - self.index, self.order)
    }

    /// Rotation angle 2πk/n.
    pub fn angle(self) -> f64 {
        2.0 * PI * self.index as f64 / self.order as f64
    }

    pub fn all(order: usize) -> impl Iterator<Item = GroupElement> {
        (0..order).map(move |k| GroupElement::new(k, order))
    }
}

pub fn compose(g: GroupElement, h: GroupElement) -> GroupElement {
    g.compose(h)
}

pub fn cayley_table(order: usize) -> Vec<Vec<usize>> {
    GroupElement::all(order)
        .map(|g| GroupElement::all(order).map(|h| g.compose(h).index()).collect())
        .collect()
}

/// 2×2 rotation by `angle` radians.
pub fn rotation_matrix(angle: f64) -> [[f64; 2]; 2] {
    let (s, c) = angle.sin_cos();
    [[c, -s], [s, c]]
}

/// Rotation by k quarter turns with exact integer entries.
pub fn quarter_turn(k: usize) -> [[f64; 2]; 2] {
    match k % 4 {
        0 => [[1.0, 0.0], [0.0, 1.0]],
        1 => [[0.0, -1.0], [1.0, 0.0]],
        2 => [[-1.0, 0.0], [0.0, -1.0]],
        _ => [[0.0, 1.0], [-1.0, 0.0]],
    }
}

/// Rotation matrix of a group element; exact for C4 and C2.
pub fn element_rotation(g: GroupElement) -> [[f64; 2]; 2] {
    if 4 % g.order() == 0 {
        quarter_turn(g.index() * 4 / g.order())
    } else {
        rotation_matrix(g.angle())
    }
}

#[inline]
pub fn rotate(m: &[[f64; 2]; 2], p: [f64; 2]) -> [f64; 2] {
    [m[0][0] * p[0] + m[0][1] * p[1], m[1][0] * p[0] + m[1][1] * p[1]]
}

/// Rotate a point by an element of C4 without any rounding.
#[inline]
pub fn rotate_c4(k: usize, p: [f64; 2]) -> [f64; 2] {
    match k % 4 {
        0 => p,
        1 => [-p[1], p[0]],
        2 => [-p[0], -p[1]],
        _ => [p[1], -p[0]],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CodebookMode {
    /// Reversal for odd elements, identity for even ones.
    Paper,
    /// Shift by M/4 per generator.
    Cyclic,
}

/// Label of an irreducible building block; used to share basis computations.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum BlockKind {
    Trivial,
    Rotation,
    Regular,
    Codebook(CodebookMode, usize),
    /// Arbitrary matrices; never shared between blocks.
    Custom(u64),
}

#[derive(Debug, Clone)]
pub struct Block {
    pub kind: BlockKind,
    pub dim: usize,
    pub offset: usize,
}

/// Matrix representation of C_n. `perms[g][i]` is the source index of output
/// coordinate `i`, i.e. `(P_g x)[i] = x[perms[g][i]]`.
#[derive(Debug, Clone)]
pub struct Representation {
    order: usize,
    dim: usize,
    mats: Vec<DMatrix<f64>>,
    perms: Option<Vec<Vec<usize>>>,
    blocks: Vec<Block>,
}

static CUSTOM_ID: std::sync::atomic::AtomicU64 = std::sync::atomic::AtomicU64::new(1);

impl Representation {
    /// Build from explicit matrices (one per element, identity first).
    pub fn from_matrices(order: usize, mats: Vec<DMatrix<f64>>) -> Result<Self> {
        if mats.len() != order || order == 0 {
            return Err(Error::Config(format!(
                "expected {order} matrices, got {}",
                mats.len()
            )));
        }
        let dim = mats[0].nrows();
        if mats.iter().any(|m| m.nrows() != dim || m.ncols() != dim) {
            return Err(Error::Config("representation matrices must be square and equal-sized".into()));
        }
        let perms = mats.iter().map(as_permutation).collect::<Option<Vec<_>>>();
        let id = CUSTOM_ID.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
        Ok(Representation {
            order,
            dim,
            mats,
            perms,
            blocks: vec![Block { kind: BlockKind::Custom(id), dim, offset: 0 }],
        })
    }

    fn from_perms(order: usize, perms: Vec<Vec<usize>>, kind: BlockKind) -> Self {
        let dim = perms[0].len();
        let mats = perms.iter().map(|p| perm_matrix(p)).collect();
        Representation {
            order,
            dim,
            mats,
            perms: Some(perms),
            blocks: vec![Block { kind, dim, offset: 0 }],
        }
    }

    pub fn trivial(order: usize) -> Self {
        Self::from_perms(order, vec![vec![0]; order], BlockKind::Trivial)
    }

    /// Planar rotation representation g ↦ R(2πg/n).
    pub fn rotation(order: usize) -> Self {
        let mats = GroupElement::all(order)
            .map(|g| {
                let r = element_rotation(g);
                DMatrix::from_row_slice(2, 2, &[r[0][0], r[0][1], r[1][0], r[1][1]])
            })
            .collect();
        Representation {
            order,
            dim: 2,
            mats,
            perms: None,
            blocks: vec![Block { kind: BlockKind::Rotation, dim: 2, offset: 0 }],
        }
    }

    /// Regular representation: cyclic shift of the n group channels.
    pub fn regular(order: usize) -> Self {
        let perms = (0..order)
            .map(|g| (0..order).map(|i| (i + order - g) % order).collect())
            .collect();
        Self::from_perms(order, perms, BlockKind::Regular)
    }

    pub fn codebook(mode: CodebookMode, size: usize) -> Result<Self> {
        if size < 2 {
            return Err(Error::Config(format!("codebook size {size} < 2")));
        }
        let perms: Vec<Vec<usize>> = match mode {
            CodebookMode::Paper => (0..4)
                .map(|g| {
                    if g % 2 == 1 {
                        (0..size).rev().collect()
                    } else {
                        (0..size).collect()
                    }
                })
                .collect(),
            CodebookMode::Cyclic => {
                if size % 4 != 0 {
                    return Err(Error::Config(format!(
                        "cyclic codebook mode needs M divisible by 4, got {size}"
                    )));
                }
                let q = size / 4;
                (0..4)
                    .map(|g| (0..size).map(|i| (i + size - g * q) % size).collect())
                    .collect()
            }
        };
        Ok(Self::from_perms(4, perms, BlockKind::Codebook(mode, size)))
    }

    /// Block-diagonal direct sum.
    pub fn direct_sum(parts: &[&Representation]) -> Self {
        assert!(!parts.is_empty(), "direct sum of nothing; use Representation::empty");
        let order = parts[0].order;
        assert!(parts.iter().all(|p| p.order == order), "direct sum across different groups");
        let dim: usize = parts.iter().map(|p| p.dim).sum();
        let mut mats = vec![DMatrix::zeros(dim, dim); order];
        let mut blocks = Vec::new();
        let mut off = 0;
        for p in parts {
            for (g, m) in mats.iter_mut().enumerate() {
                m.view_mut((off, off), (p.dim, p.dim)).copy_from(&p.mats[g]);
            }
            for b in &p.blocks {
                blocks.push(Block { kind: b.kind.clone(), dim: b.dim, offset: off + b.offset });
            }
            off += p.dim;
        }
        let perms = if parts.iter().all(|p| p.perms.is_some()) {
            let mut perms = vec![Vec::with_capacity(dim); order];
            let mut off = 0;
            for p in parts {
                for (g, pg) in perms.iter_mut().enumerate() {
                    pg.extend(p.perms.as_ref().unwrap()[g].iter().map(|&i| i + off));
                }
                off += p.dim;
            }
            Some(perms)
        } else {
            None
        };
        Representation { order, dim, mats, perms, blocks }
    }

    /// `n` copies of the same representation.
    pub fn repeat(rep: &Representation, n: usize) -> Self {
        if n == 0 {
            return Self::empty(rep.order);
        }
        let parts: Vec<&Representation> = std::iter::repeat_n(rep, n).collect();
        Self::direct_sum(&parts)
    }

    pub fn empty(order: usize) -> Self {
        Representation {
            order,
            dim: 0,
            mats: vec![DMatrix::zeros(0, 0); order],
            perms: Some(vec![Vec::new(); order]),
            blocks: Vec::new(),
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self, g: usize) -> &DMatrix<f64> {
        &self.mats[g % self.order]
    }

    pub fn matrices(&self) -> &[DMatrix<f64>] {
        &self.mats
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn is_permutation(&self) -> bool {
        self.perms.is_some()
    }

    pub fn permutation(&self, g: usize) -> Option<&[usize]> {
        self.perms.as_ref().map(|p| p[g % self.order].as_slice())
    }

    /// Where index `i` is sent by element `g` (permutation reps only).
    pub fn map_index(&self, g: usize, i: usize) -> usize {
        let p = self.permutation(g).expect("map_index on a non-permutation representation");
        p.iter().position(|&src| src == i).expect("index out of range")
    }

    /// `M_g · x`, exploiting block structure.
    pub fn apply(&self, g: usize, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim, "vector length does not match representation");
        let g = g % self.order;
        if let Some(p) = &self.perms {
            return p[g].iter().map(|&j| x[j]).collect();
        }
        let mut out = vec![0.0; self.dim];
        for b in &self.blocks {
            let r = b.offset..b.offset + b.dim;
            match b.kind {
                BlockKind::Rotation => {
                    let m = &self.mats[g];
                    let o = b.offset;
                    out[o] = m[(o, o)] * x[o] + m[(o, o + 1)] * x[o + 1];
                    out[o + 1] = m[(o + 1, o)] * x[o] + m[(o + 1, o + 1)] * x[o + 1];
                }
                BlockKind::Trivial => out[b.offset] = x[b.offset],
                _ => {
                    let m = self.mats[g].view((b.offset, b.offset), (b.dim, b.dim));
                    for (i, oi) in r.clone().enumerate() {
                        out[oi] = (0..b.dim).map(|j| m[(i, j)] * x[b.offset + j]).sum();
                    }
                }
            }
        }
        out
    }

    /// Replace one matrix; used to build negative controls.
    pub fn with_matrix(mut self, g: usize, m: DMatrix<f64>) -> Self {
        self.mats[g] = m;
        self.perms = self.mats.iter().map(as_permutation).collect();
        let id = CUSTOM_ID.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
        self.blocks = vec![Block { kind: BlockKind::Custom(id), dim: self.dim, offset: 0 }];
        self
    }
}

pub fn intermediate_perm_rep(order: usize) -> Representation {
    Representation::regular(order)
}

pub fn codebook_perm_rep(mode: CodebookMode, size: usize) -> Result<Representation> {
    Representation::codebook(mode, size)
}

pub fn state_rep(order: usize, n_points: usize) -> Representation {
    Representation::repeat(&Representation::rotation(order), n_points)
}

fn perm_matrix(p: &[usize]) -> DMatrix<f64> {
    let n = p.len();
    let mut m = DMatrix::zeros(n, n);
    for (i, &j) in p.iter().enumerate() {
        m[(i, j)] = 1.0;
    }
    m
}

fn as_permutation(m: &DMatrix<f64>) -> Option<Vec<usize>> {
    let n = m.nrows();
    let mut p = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    for i in 0..n {
        let mut col = None;
        for j in 0..n {
            let v = m[(i, j)];
            if v == 1.0 {
                if col.is_some() {
                    return None;
                }
                col = Some(j);
            } else if v != 0.0 {
                return None;
            }
        }
        let j = col?;
        if seen[j] {
            return None;
        }
        seen[j] = true;
        p.push(j);
    }
    Some(p)
}

fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Largest violation of the homomorphism, identity and inverse laws.
pub fn verify_axioms(rep: &Representation) -> f64 {
    let n = rep.order;
    let eye = DMatrix::identity(rep.dim, rep.dim);
    let mut worst = max_abs_diff(&rep.mats[0], &eye);
    for g in 0..n {
        for h in 0..n {
            let gh = (g + h) % n;
            let prod = &rep.mats[g] * &rep.mats[h];
            worst = worst.max(max_abs_diff(&rep.mats[gh], &prod));
        }
        let inv = (n - g) % n;
        worst = worst.max(max_abs_diff(&(&rep.mats[g] * &rep.mats[inv]), &eye));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cayley_is_addition_mod_four() {
        let t = cayley_table(4);
        for g in 0..4 {
            for h in 0..4 {
                assert_eq!(t[g][h], (g + h) % 4);
            }
        }
        let g1 = GroupElement::new(1, 4);
        assert_eq!(g1.compose(g1).index(), 2);
        for g in GroupElement::all(4) {
            assert_eq!(g.compose(g.inverse()), GroupElement::identity(4));
        }
    }

    #[test]
    #[should_panic]
    fn mismatched_orders_panic() {
        GroupElement::new(1, 4).compose(GroupElement::new(1, 3));
    }

    #[test]
    fn rotation_examples() {
        let r = rotation_matrix(0.0);
        assert_eq!(r, [[1.0, 0.0], [0.0, 1.0]]);
        let q = rotation_matrix(PI / 2.0);
        let p = rotate(&q, [1.0, 0.0]);
        assert!((p[0]).abs() < 1e-15 && (p[1] - 1.0).abs() < 1e-15);
        let qq = [
            [q[0][0] * q[0][0] + q[0][1] * q[1][0], q[0][0] * q[0][1] + q[0][1] * q[1][1]],
            [q[1][0] * q[0][0] + q[1][1] * q[1][0], q[1][0] * q[0][1] + q[1][1] * q[1][1]],
        ];
        let pi = rotation_matrix(PI);
        for i in 0..2 {
            for j in 0..2 {
                assert!((qq[i][j] - pi[i][j]).abs() < 1e-12);
            }
        }
        let det = q[0][0] * q[1][1] - q[0][1] * q[1][0];
        assert!((det - 1.0).abs() < 1e-12);
    }

    #[test]
    fn printed_intermediate_perms() {
        let p = intermediate_perm_rep(4);
        assert_eq!(p.permutation(0).unwrap(), &[0, 1, 2, 3]);
        assert_eq!(p.permutation(1).unwrap(), &[3, 0, 1, 2]);
        assert_eq!(p.permutation(2).unwrap(), &[2, 3, 0, 1]);
        assert_eq!(p.permutation(3).unwrap(), &[1, 2, 3, 0]);
        assert_eq!(p.apply(1, &[1.0, 2.0, 3.0, 4.0]), vec![4.0, 1.0, 2.0, 3.0]);
        assert_eq!(&(p.matrix(1) * p.matrix(1)), p.matrix(2));
        assert_eq!(verify_axioms(&p), 0.0);
    }

    #[test]
    fn codebook_modes() {
        let k = codebook_perm_rep(CodebookMode::Paper, 4).unwrap();
        assert_eq!(k.apply(1, &[0.0, 1.0, 2.0, 3.0]), vec![3.0, 2.0, 1.0, 0.0]);
        assert_eq!(k.permutation(2).unwrap(), &[0, 1, 2, 3]);
        assert_eq!(verify_axioms(&k), 0.0);
        let c = codebook_perm_rep(CodebookMode::Cyclic, 8).unwrap();
        for i in 0..8 {
            assert_eq!(c.map_index(1, i), (i + 2) % 8);
        }
        assert_eq!(verify_axioms(&c), 0.0);
        assert!(codebook_perm_rep(CodebookMode::Cyclic, 6).is_err());
    }

    #[test]
    fn state_rep_examples() {
        let s1 = state_rep(4, 1);
        assert_eq!(s1.apply(1, &[1.0, 0.0]), vec![0.0, 1.0]);
        let s2 = state_rep(4, 2);
        assert_eq!(s2.apply(2, &[1.0, 0.0, 0.0, 1.0]), vec![-1.0, 0.0, 0.0, -1.0]);
        let s0 = state_rep(4, 0);
        assert_eq!(s0.dim(), 0);
        assert!(s0.apply(3, &[]).is_empty());
        assert!(verify_axioms(&state_rep(4, 3)) <= 1e-12);
        // generic angles go through sin/cos
        assert!(verify_axioms(&state_rep(6, 2)) <= 1e-12);
    }

    #[test]
    fn corrupted_rep_is_flagged() {
        let mut m = intermediate_perm_rep(4).matrix(1).clone();
        m[(0, 0)] = 0.7;
        let bad = intermediate_perm_rep(4).with_matrix(1, m);
        assert!(verify_axioms(&bad) > 0.1);
    }

    #[test]
    fn direct_sum_is_block_diagonal() {
        let r = Representation::direct_sum(&[
            &Representation::rotation(4),
            &Representation::regular(4),
            &Representation::trivial(4),
        ]);
        assert_eq!(r.dim(), 7);
        for g in 0..4 {
            let m = r.matrix(g);
            for i in 0..7 {
                for j in 0..7 {
                    let bi = if i < 2 { 0 } else if i < 6 { 1 } else { 2 };
                    let bj = if j < 2 { 0 } else if j < 6 { 1 } else { 2 };
                    if bi != bj {
                        assert_eq!(m[(i, j)], 0.0);
                    }
                }
            }
            let x: Vec<f64> = (0..7).map(|v| v as f64 + 0.5).collect();
            let dense: Vec<f64> = (m * nalgebra::DVector::from_vec(x.clone())).iter().copied().collect();
            assert_eq!(r.apply(g, &x), dense);
        }
        assert_eq!(verify_axioms(&r), 0.0);
    }
}
