//! Channel matrices, spatially correlated sampling and the spatio-temporal
//! row operator.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `K × M` complex gains; row `j` is user `j`'s channel `h_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    users: usize,
    antennas: usize,
    entries: Vec<Complex64>,
}

impl ChannelMatrix {
    pub fn from_rows(rows: Vec<Vec<Complex64>>) -> Result<Self> {
        let users = rows.len();
        if users == 0 {
            return Err(Error::Dimension("channel needs at least one row".into()));
        }
        let antennas = rows[0].len();
        if antennas == 0 || rows.iter().any(|r| r.len() != antennas) {
            return Err(Error::Dimension("channel rows must be equal length and non-empty".into()));
        }
        let entries: Vec<Complex64> = rows.into_iter().flatten().collect();
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidArgument("channel entries must be finite".into()));
        }
        Ok(ChannelMatrix {
            users,
            antennas,
            entries,
        })
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    pub fn row(&self, j: usize) -> &[Complex64] {
        &self.entries[j * self.antennas..(j + 1) * self.antennas]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[Complex64]> {
        self.entries.chunks(self.antennas)
    }

    /// `h_j · x`.
    pub fn apply_row(&self, j: usize, x: &[Complex64]) -> Complex64 {
        dot(self.row(j), x)
    }

    /// `H · x` for every user.
    pub fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        (0..self.users).map(|j| self.apply_row(j, x)).collect()
    }

    pub fn to_dmatrix(&self) -> DMatrix<Complex64> {
        DMatrix::from_row_slice(self.users, self.antennas, &self.entries)
    }

    pub fn to_file_format(&self) -> ChannelFile {
        ChannelFile(
            self.rows()
                .map(|r| r.iter().map(|z| [z.re, z.im]).collect())
                .collect(),
        )
    }

    pub fn from_file_format(file: &ChannelFile) -> Result<Self> {
        Self::from_rows(
            file.0
                .iter()
                .map(|r| r.iter().map(|&[re, im]| Complex64::new(re, im)).collect())
                .collect(),
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: ChannelFile = serde_json::from_str(&text)?;
        Self::from_file_format(&file)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(&self.to_file_format())?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }
}

/// On-disk layout: array of rows, each an array of `[re, im]` pairs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ChannelFile(pub Vec<Vec<[f64; 2]>>);

/// Unconjugated product `a · b`.
pub fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Seedable generator used by every sampler.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derive an independent child seed from `(seed, stream)`.
pub fn split_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 over the combined words
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One circular complex Gaussian draw with `E|z|² = variance`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

/// Entries i.i.d. `CN(0, variance)`.
pub fn sample_iid<R: Rng + ?Sized>(
    users: usize,
    antennas: usize,
    variance: f64,
    rng: &mut R,
) -> Result<ChannelMatrix> {
    if users == 0 || antennas == 0 {
        return Err(Error::InvalidArgument("K and M must be at least 1".into()));
    }
    if !(variance > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "channel variance must be positive, got {variance}"
        )));
    }
    let entries = (0..users * antennas)
        .map(|_| complex_gaussian(rng, variance))
        .collect();
    Ok(ChannelMatrix {
        users,
        antennas,
        entries,
    })
}

/// Hermitian exponential correlation: `C_ii = 1`, `C_ij = a^{i-j}` below the
/// diagonal and `conj(a)^{j-i}` above it.
pub fn correlation_matrix(antennas: usize, a: Complex64) -> Result<DMatrix<Complex64>> {
    if a.norm() >= 1.0 {
        return Err(Error::InvalidArgument(format!(
            "correlation coefficient must satisfy |a| < 1, got {a}"
        )));
    }
    Ok(DMatrix::from_fn(antennas, antennas, |i, j| {
        if i == j {
            Complex64::new(1.0, 0.0)
        } else if i > j {
            a.powu((i - j) as u32)
        } else {
            a.conj().powu((j - i) as u32)
        }
    }))
}

/// Hermitian square root `A` with `A·A^H = C`, eigenvalues clipped at zero.
pub fn hermitian_sqrt(c: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    const CLIP: f64 = 1e-12;
    let eig = c.clone().symmetric_eigen();
    let scale = eig.eigenvalues.amax().max(1.0);
    if eig.eigenvalues.iter().any(|&l| l < -CLIP * scale) {
        return Err(Error::Factorization(
            "correlation matrix is not positive semidefinite".into(),
        ));
    }
    let roots = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues
            .iter()
            .map(|&l| Complex64::new(l.max(0.0).sqrt(), 0.0)),
    );
    let u = &eig.eigenvectors;
    Ok(u * DMatrix::from_diagonal(&roots) * u.adjoint())
}

/// Rows `h ~ CN(0, C)` with `C = correlation_matrix(M, a)`, i.e.
/// `E[h_i·conj(h_j)] = C_ij`.
pub fn sample_correlated<R: Rng + ?Sized>(
    users: usize,
    antennas: usize,
    a: Complex64,
    rng: &mut R,
) -> Result<ChannelMatrix> {
    let c = correlation_matrix(antennas, a)?;
    let root = hermitian_sqrt(&c)?;
    let mut rows = Vec::with_capacity(users);
    for _ in 0..users {
        let g = DVector::from_iterator(antennas, (0..antennas).map(|_| complex_gaussian(rng, 1.0)));
        let h = &root * g;
        rows.push(h.iter().copied().collect());
    }
    ChannelMatrix::from_rows(rows)
}

/// Lazy block operator for one user over `N` stacked output vectors.
///
/// Row `n` is `h_j` placed at column offset `n·M`, so that
/// `row(n) · p = h_j · x[n]` when `p` stacks `x[1..N]` in blocks of `M`.
#[derive(Debug, Clone, Copy)]
pub struct SpatioTemporalChannel<'a> {
    h: &'a [Complex64],
    slots: usize,
}

pub fn spatio_temporal(h: &[Complex64], slots: usize) -> Result<SpatioTemporalChannel<'_>> {
    if slots == 0 {
        return Err(Error::InvalidArgument("N must be at least 1".into()));
    }
    Ok(SpatioTemporalChannel { h, slots })
}

impl<'a> SpatioTemporalChannel<'a> {
    pub fn slots(&self) -> usize {
        self.slots
    }

    pub fn width(&self) -> usize {
        self.slots * self.h.len()
    }

    /// Nonzero entries of row `n`: `(column, gain)` pairs.
    pub fn row(&self, n: usize) -> impl Iterator<Item = (usize, Complex64)> + 'a {
        let offset = n * self.h.len();
        self.h.iter().enumerate().map(move |(m, &g)| (offset + m, g))
    }

    /// `g_j[n] · p`.
    pub fn apply_row(&self, n: usize, p: &[Complex64]) -> Complex64 {
        self.row(n).map(|(col, g)| g * p[col]).sum()
    }

    /// Dense `N × NM` matrix, for tests and debugging.
    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let mut g = DMatrix::zeros(self.slots, self.width());
        for n in 0..self.slots {
            for (col, v) in self.row(n) {
                g[(n, col)] = v;
            }
        }
        g
    }
}

/// Normalized inner product `h1·h2^H / (‖h1‖·‖h2‖)`.
pub fn colinearity(h1: &[Complex64], h2: &[Complex64]) -> Result<Complex64> {
    if h1.len() != h2.len() {
        return Err(Error::Dimension("rows differ in length".into()));
    }
    let n1 = h1.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let n2 = h2.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if n1 == 0.0 || n2 == 0.0 {
        return Err(Error::InvalidArgument("zero-norm channel row".into()));
    }
    let inner: Complex64 = h1.iter().zip(h2).map(|(a, b)| a * b.conj()).sum();
    Ok(inner / (n1 * n2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::h_test;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn iid_statistics() {
        let mut rng = rng_from_seed(7);
        let n = 100_000;
        let var = 2.0;
        let h = sample_iid(1, n, var, &mut rng).unwrap();
        let mean: Complex64 = h.row(0).iter().sum::<Complex64>() / n as f64;
        let power = h.row(0).iter().map(|z| z.norm_sqr()).sum::<f64>() / n as f64;
        let bound = 3.0 * (var / n as f64).sqrt();
        assert!(mean.norm() < bound * 1.5, "mean {mean}");
        assert!((power - var).abs() < 0.05 * var, "power {power}");
    }

    #[test]
    fn iid_reproducible_and_validated() {
        let a = sample_iid(3, 4, 1.0, &mut rng_from_seed(11)).unwrap();
        let b = sample_iid(3, 4, 1.0, &mut rng_from_seed(11)).unwrap();
        assert_eq!(a, b);
        assert!(sample_iid(2, 2, 0.0, &mut rng_from_seed(1)).is_err());
    }

    #[test]
    fn correlation_examples() {
        let id = correlation_matrix(3, c(0.0, 0.0)).unwrap();
        assert_eq!(id, DMatrix::identity(3, 3));

        let c2 = correlation_matrix(2, c(0.9, 0.0)).unwrap();
        assert_eq!(c2[(0, 1)], c(0.9, 0.0));
        assert_eq!(c2[(1, 0)], c(0.9, 0.0));

        let c3 = correlation_matrix(3, c(0.0, 0.5)).unwrap();
        assert!((c3[(2, 0)] - c(-0.25, 0.0)).norm() < 1e-15);
        assert!((&c3 - c3.adjoint()).norm() < 1e-15);
        let min = c3.symmetric_eigen().eigenvalues.min();
        assert!(min >= 0.0);

        assert!(correlation_matrix(2, c(1.0, 0.0)).is_err());
    }

    #[test]
    fn correlation_is_psd_across_coefficients() {
        for &(re, im) in &[(0.9, 0.0), (0.0, 0.95), (-0.5, 0.5), (0.99, 0.0), (0.3, -0.6)] {
            for m in 1..6 {
                let cm = correlation_matrix(m, c(re, im)).unwrap();
                assert!((&cm - cm.adjoint()).norm() < 1e-14);
                for i in 0..m {
                    assert_eq!(cm[(i, i)], c(1.0, 0.0));
                }
                assert!(cm.symmetric_eigen().eigenvalues.min() > -1e-12);
            }
        }
    }

    #[test]
    fn correlated_reduces_to_iid_at_zero() {
        let a = sample_correlated(2, 3, c(0.0, 0.0), &mut rng_from_seed(5)).unwrap();
        let b = sample_iid(2, 3, 1.0, &mut rng_from_seed(5)).unwrap();
        for (x, y) in a.rows().flatten().zip(b.rows().flatten()) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn correlated_empirical_covariance() {
        let n = 100_000;
        let h = sample_correlated(n, 2, c(0.9, 0.0), &mut rng_from_seed(3)).unwrap();
        let c12: Complex64 = h.rows().map(|r| r[0] * r[1].conj()).sum::<Complex64>() / n as f64;
        // C_12 = conj(a) = 0.9
        assert!((c12 - c(0.9, 0.0)).norm() < 0.02, "{c12}");
        let again = sample_correlated(4, 2, c(0.9, 0.0), &mut rng_from_seed(3)).unwrap();
        assert_eq!(again.row(0), h.row(0));
    }

    #[test]
    fn spatio_temporal_block_selection() {
        let h = [c(1.0, 0.0), c(0.0, 1.0)];
        let g = spatio_temporal(&h, 2).unwrap();
        let p = [c(1.0, 2.0), c(3.0, 4.0), c(5.0, 6.0), c(7.0, 8.0)];
        assert_eq!(g.apply_row(1, &p), p[2] + c(0.0, 1.0) * p[3]);
        let single = spatio_temporal(&h, 1).unwrap().to_dense();
        assert_eq!(single.row(0).iter().copied().collect::<Vec<_>>(), h.to_vec());
        assert!(spatio_temporal(&h, 0).is_err());
    }

    #[test]
    fn spatio_temporal_matches_per_slot_products() {
        let mut rng = rng_from_seed(21);
        let h = sample_iid(1, 3, 1.0, &mut rng).unwrap();
        let n = 4;
        let p: Vec<Complex64> = (0..n * 3).map(|_| complex_gaussian(&mut rng, 1.0)).collect();
        let g = spatio_temporal(h.row(0), n).unwrap();
        let dense = g.to_dense();
        for slot in 0..n {
            let direct = dot(h.row(0), &p[slot * 3..(slot + 1) * 3]);
            assert!((g.apply_row(slot, &p) - direct).norm() < 1e-12);
            let via_dense: Complex64 = (0..g.width()).map(|k| dense[(slot, k)] * p[k]).sum();
            assert!((via_dense - direct).norm() < 1e-12);
        }
    }

    #[test]
    fn colinearity_examples() {
        let h = h_test();
        let rho = colinearity(h.row(0), h.row(1)).unwrap();
        assert!((rho - c(0.9771, -0.2088)).norm() < 1e-3, "{rho}");
        assert!((rho.norm() - 0.9992).abs() < 1e-3);
        assert!((rho.arg().to_degrees() + 12.06).abs() < 0.05);

        let e1 = [c(1.0, 0.0), c(0.0, 0.0)];
        let e2 = [c(0.0, 0.0), c(1.0, 0.0)];
        assert_eq!(colinearity(&e1, &e2).unwrap(), c(0.0, 0.0));
        assert!((colinearity(&e1, &e1).unwrap() - c(1.0, 0.0)).norm() < 1e-15);
        assert!(colinearity(&e1, &[c(0.0, 0.0); 2]).is_err());
    }

    #[test]
    fn channel_json_round_trip() {
        let h = h_test();
        let file = h.to_file_format();
        let text = serde_json::to_string(&file).unwrap();
        let back: ChannelFile = serde_json::from_str(&text).unwrap();
        assert_eq!(ChannelMatrix::from_file_format(&back).unwrap(), h);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn colinearity_bounded(seed in any::<u64>(), m in 1usize..6) {
                let h = sample_iid(2, m, 1.0, &mut rng_from_seed(seed)).unwrap();
                let rho = colinearity(h.row(0), h.row(1)).unwrap();
                prop_assert!(rho.norm() <= 1.0 + 1e-12);
            }
        }
    }
}
