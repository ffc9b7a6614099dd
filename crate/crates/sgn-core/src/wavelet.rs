//! Legendre-polynomial filter bank construction and the iterative
//! multiwavelet decomposition along the frame axis.
//!
//! Filters are midpoint-sampled from the continuous definitions and the rows
//! re-orthonormalized; by default the high-pass pair is the √2-scaled
//! low-pass pair, with a proper orthogonal-complement construction available
//! behind [`HighPassMode::OrthoComplement`].

use crate::error::{Result, SgnError};
use crate::tensor::{even_odd_split, interleave, DenseTensor, Mat};

/// Legendre polynomial `P_m(x)` by the three-term recursion
/// `(m+1)·P_{m+1} = (2m+1)·x·P_m − m·P_{m−1}` with `P_0 = 1`, `P_1 = x`.
/// The recursion is evaluated as-is for arguments outside [−1, 1], where the
/// filter construction intentionally samples it.
pub fn legendre_eval(m: usize, x: f64) -> f64 {
    match m {
        0 => 1.0,
        1 => x,
        _ => {
            let mut p_prev = 1.0;
            let mut p = x;
            for k in 1..m {
                let next = ((2 * k + 1) as f64 * x * p - k as f64 * p_prev) / (k + 1) as f64;
                p_prev = p;
                p = next;
            }
            p
        }
    }
}

/// How the high-pass pair is derived from the low-pass pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HighPassMode {
    /// `Γ = √2·Λ` taken literally; detail and scaling bands are proportional.
    ScaledLowPass,
    /// Orthogonal complement of the stacked low-pass rows, √2-scaled.
    OrthoComplement,
}

/// The four `M×M` filter matrices driving one decomposition level.
#[derive(Debug, Clone)]
pub struct FilterBank {
    pub lam0: Mat,
    pub lam1: Mat,
    pub gam0: Mat,
    pub gam1: Mat,
    pub m: usize,
    pub high_pass: HighPassMode,
}

/// Modified Gram–Schmidt over rows, in order, with the leading nonzero entry
/// of each row made positive.
fn orthonormalize_rows(mat: &mut Mat) {
    let (rows, cols) = (mat.rows, mat.cols);
    for r in 0..rows {
        for prev in 0..r {
            let dot: f64 = (0..cols).map(|c| mat.get(r, c) * mat.get(prev, c)).sum();
            for c in 0..cols {
                let val = mat.get(r, c) - dot * mat.get(prev, c);
                mat.set(r, c, val);
            }
        }
        let norm: f64 = (0..cols).map(|c| mat.get(r, c).powi(2)).sum::<f64>().sqrt();
        assert!(norm > 1e-12, "degenerate filter row {r}");
        for c in 0..cols {
            let val = mat.get(r, c) / norm;
            mat.set(r, c, val);
        }
        if let Some(lead) = (0..cols).map(|c| mat.get(r, c)).find(|x| x.abs() > 1e-12) {
            if lead < 0.0 {
                for c in 0..cols {
                    let val = -mat.get(r, c);
                    mat.set(r, c, val);
                }
            }
        }
    }
}

/// Complete the M orthonormal rows of `low` (each of length 2M) to a full
/// orthonormal basis and return the M complementary rows.
fn ortho_complement(low: &Mat) -> Mat {
    let m = low.rows;
    let n = low.cols;
    let mut basis: Vec<Vec<f64>> = (0..m).map(|r| low.row(r).to_vec()).collect();
    let mut complement = Vec::new();
    for seed in 0..n {
        if complement.len() == n - m {
            break;
        }
        let mut cand = vec![0.0; n];
        cand[seed] = 1.0;
        for b in &basis {
            let dot: f64 = cand.iter().zip(b).map(|(a, c)| a * c).sum();
            for (x, c) in cand.iter_mut().zip(b) {
                *x -= dot * c;
            }
        }
        let norm: f64 = cand.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            cand.iter_mut().for_each(|x| *x /= norm);
            if let Some(lead) = cand.iter().find(|x| x.abs() > 1e-12) {
                if *lead < 0.0 {
                    cand.iter_mut().for_each(|x| *x = -*x);
                }
            }
            basis.push(cand.clone());
            complement.push(cand);
        }
    }
    assert_eq!(complement.len(), n - m, "complement construction fell short");
    Mat::from_rows(&complement)
}

/// Build the filter bank with the default literal √2-scaled high pass.
pub fn build_filter_bank(m: usize) -> FilterBank {
    build_filter_bank_with(m, HighPassMode::ScaledLowPass)
}

/// Sample `Λ0[m,t] = √(2m+1)·P_m(2u_t−1)` and `Λ1[m,t] = √(2m+1)·P_m(2u_t)`
/// at midpoints `u_t = (t+0.5)/M`, re-orthonormalize each row set, and derive
/// the high-pass pair per `mode`.
pub fn build_filter_bank_with(m: usize, mode: HighPassMode) -> FilterBank {
    assert!(m >= 1, "filter bank needs at least one coefficient");
    let mut lam0 = Mat::zeros(m, m);
    let mut lam1 = Mat::zeros(m, m);
    for row in 0..m {
        let scale = ((2 * row + 1) as f64).sqrt();
        for t in 0..m {
            let u = (t as f64 + 0.5) / m as f64;
            lam0.set(row, t, scale * legendre_eval(row, 2.0 * u - 1.0));
            lam1.set(row, t, scale * legendre_eval(row, 2.0 * u));
        }
    }
    orthonormalize_rows(&mut lam0);
    orthonormalize_rows(&mut lam1);
    let sqrt2 = std::f64::consts::SQRT_2;
    let (gam0, gam1) = match mode {
        HighPassMode::ScaledLowPass => (lam0.scale(sqrt2), lam1.scale(sqrt2)),
        HighPassMode::OrthoComplement => {
            let mut low = Mat::zeros(m, 2 * m);
            for r in 0..m {
                for c in 0..m {
                    low.set(r, c, lam0.get(r, c) / sqrt2);
                    low.set(r, m + c, lam1.get(r, c) / sqrt2);
                }
            }
            let comp = ortho_complement(&low);
            let mut g0 = Mat::zeros(m, m);
            let mut g1 = Mat::zeros(m, m);
            for r in 0..m {
                for c in 0..m {
                    g0.set(r, c, comp.get(r, c) * sqrt2);
                    g1.set(r, c, comp.get(r, m + c) * sqrt2);
                }
            }
            (g0, g1)
        }
    };
    FilterBank { lam0, lam1, gam0, gam1, m, high_pass: mode }
}

/// Coefficients of an iterative decomposition; level `j` (1-based) holds
/// `T/2^j` frames per tensor.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub details: Vec<DenseTensor>,
    pub scalings: Vec<DenseTensor>,
}

impl Decomposition {
    pub fn levels(&self) -> usize {
        self.details.len()
    }
}

/// Iterative multiwavelet decomposition: at each level, split frames into
/// even/odd, apply `D = Γ0·even + Γ1·odd` and `S = Λ0·even + Λ1·odd` along
/// the channel axis, and recurse on `S`.
pub fn decompose(x: &DenseTensor, bank: &FilterBank, levels: usize) -> Result<Decomposition> {
    let (t_dim, c_dim, _) = x.shape();
    if c_dim != bank.m {
        return Err(SgnError::Dimension(format!(
            "decompose expects {} channels, tensor has {c_dim}",
            bank.m
        )));
    }
    if levels == 0 {
        return Err(SgnError::Contract("need at least one decomposition level".into()));
    }
    if t_dim % (1 << levels) != 0 {
        return Err(SgnError::Contract(format!(
            "frame count {t_dim} not divisible by 2^{levels}"
        )));
    }
    let mut details = Vec::with_capacity(levels);
    let mut scalings = Vec::with_capacity(levels);
    let mut current = x.clone();
    for _ in 0..levels {
        let (even, odd) = even_odd_split(&current)?;
        let d = even.matmul_channels(&bank.gam0).add(&odd.matmul_channels(&bank.gam1));
        let s = even.matmul_channels(&bank.lam0).add(&odd.matmul_channels(&bank.lam1));
        details.push(d);
        scalings.push(s.clone());
        current = s;
    }
    Ok(Decomposition { details, scalings })
}

/// Adjoint of [`decompose`]: accumulate cotangents of every `D_j` and `S_j`
/// back to the input. Either list may contain zero tensors for unused bands.
pub fn decompose_vjp(
    bank: &FilterBank,
    d_details: &[DenseTensor],
    d_scalings: &[DenseTensor],
) -> DenseTensor {
    assert_eq!(d_details.len(), d_scalings.len());
    let levels = d_details.len();
    let lam0_t = bank.lam0.transpose();
    let lam1_t = bank.lam1.transpose();
    let gam0_t = bank.gam0.transpose();
    let gam1_t = bank.gam1.transpose();
    let mut carried: Option<DenseTensor> = None;
    for j in (0..levels).rev() {
        let mut ds = d_scalings[j].clone();
        if let Some(c) = carried {
            ds.add_assign(&c);
        }
        let dd = &d_details[j];
        let d_even = ds.matmul_channels(&lam0_t).add(&dd.matmul_channels(&gam0_t));
        let d_odd = ds.matmul_channels(&lam1_t).add(&dd.matmul_channels(&gam1_t));
        carried = Some(interleave(&d_even, &d_odd));
    }
    carried.expect("at least one level")
}
