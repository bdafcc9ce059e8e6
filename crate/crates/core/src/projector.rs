//! Random projection matrices P in R^{d x n} (d < n), the three entry
//! scalings used throughout, and empirical checkers for the concentration
//! properties the sketching pipeline relies on.
//!
//! The three scalings are deliberately kept side by side instead of picking a
//! winner: entry std-dev 1/sqrt(n) concentrates P P^T near the identity (so
//! lifting u -> P^T u preserves norms), entry std-dev 1/sqrt(d) concentrates
//! |P x| near |x| (norm preservation), and orthonormal rows make P P^T = I
//! exact. No single matrix can do both of the first two when d << n; the
//! checkers below measure each property under whichever scaling the caller
//! chose and report plain frequencies.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// How entries of a sampled projector are scaled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScalingConvention {
    /// i.i.d. N(0, sigma^2) entries with sigma = 1/sqrt(n): P P^T ~ I_d.
    #[serde(rename = "inv-sqrt-n")]
    GaussianInvSqrtN,
    /// i.i.d. N(0, sigma^2) entries with sigma = 1/sqrt(d): |P x| ~ |x|.
    #[serde(rename = "inv-sqrt-d")]
    GaussianInvSqrtD,
    /// Gaussian rows orthonormalized: P P^T = I_d exactly.
    #[serde(rename = "orthonormal")]
    OrthonormalRows,
}

impl ScalingConvention {
    pub const ALL: [ScalingConvention; 3] = [
        ScalingConvention::GaussianInvSqrtN,
        ScalingConvention::GaussianInvSqrtD,
        ScalingConvention::OrthonormalRows,
    ];

    pub fn token(self) -> &'static str {
        match self {
            ScalingConvention::GaussianInvSqrtN => "inv-sqrt-n",
            ScalingConvention::GaussianInvSqrtD => "inv-sqrt-d",
            ScalingConvention::OrthonormalRows => "orthonormal",
        }
    }

    fn tag(self) -> u8 {
        match self {
            ScalingConvention::GaussianInvSqrtN => 0,
            ScalingConvention::GaussianInvSqrtD => 1,
            ScalingConvention::OrthonormalRows => 2,
        }
    }

    fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(ScalingConvention::GaussianInvSqrtN),
            1 => Some(ScalingConvention::GaussianInvSqrtD),
            2 => Some(ScalingConvention::OrthonormalRows),
            _ => None,
        }
    }
}

impl std::str::FromStr for ScalingConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inv-sqrt-n" => Ok(ScalingConvention::GaussianInvSqrtN),
            "inv-sqrt-d" => Ok(ScalingConvention::GaussianInvSqrtD),
            "orthonormal" => Ok(ScalingConvention::OrthonormalRows),
            other => Err(Error::InvalidInput(format!(
                "unknown scaling convention {other:?}; expected inv-sqrt-n, inv-sqrt-d, or orthonormal"
            ))),
        }
    }
}

impl std::fmt::Display for ScalingConvention {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.token())
    }
}

/// A sampled projection matrix together with its provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct Projector {
    d: usize,
    n: usize,
    /// Dense d x n entries.
    entries: DMatrix<f64>,
    convention: ScalingConvention,
    seed: u64,
}

impl Projector {
    /// Wrap an explicit matrix (fixtures, deserialization). Validates shape
    /// and finiteness; `seed` is provenance only.
    pub fn from_matrix(
        entries: DMatrix<f64>,
        convention: ScalingConvention,
        seed: u64,
    ) -> Result<Self> {
        let (d, n) = entries.shape();
        if d == 0 || d >= n {
            return Err(Error::InvalidDimension(format!(
                "projector needs 0 < d < n, got d={d}, n={n}"
            )));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "projector entries must be finite".into(),
            ));
        }
        Ok(Projector {
            d,
            n,
            entries,
            convention,
            seed,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn convention(&self) -> ScalingConvention {
        self.convention
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// P x, mapping from R^n down to R^d.
    pub fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.n {
            return Err(Error::InvalidDimension(format!(
                "apply expects a vector of length n={}, got {}",
                self.n,
                x.len()
            )));
        }
        Ok(&self.entries * x)
    }

    /// P^T u, lifting from R^d back to R^n.
    pub fn lift(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        if u.len() != self.d {
            return Err(Error::InvalidDimension(format!(
                "lift expects a vector of length d={}, got {}",
                self.d,
                u.len()
            )));
        }
        Ok(self.entries.tr_mul(u))
    }

    /// Spectral norm of P P^T - I_d, the operative measure of how close the
    /// rows are to an orthonormal family.
    pub fn gram_deviation(&self) -> f64 {
        let mut gram = &self.entries * self.entries.transpose();
        for i in 0..self.d {
            gram[(i, i)] -= 1.0;
        }
        let (value, converged) = linalg::spectral_norm_sym(&gram);
        if !converged {
            log::debug!(
                "gram_deviation power iteration hit its cap; returning current estimate {value:.3e}"
            );
        }
        value
    }
}

/// Sample a d x n projector. Entries are drawn row-major from a ChaCha8
/// stream seeded with `seed`, so identical arguments reproduce identical
/// matrices bit for bit.
pub fn sample_projector(
    n: usize,
    d: usize,
    convention: ScalingConvention,
    seed: u64,
) -> Result<Projector> {
    if d == 0 || d >= n {
        return Err(Error::InvalidDimension(format!(
            "projector needs 0 < d < n, got d={d}, n={n}"
        )));
    }
    let mut rng = linalg::seeded_rng(seed);
    let sigma = match convention {
        ScalingConvention::GaussianInvSqrtN => (n as f64).sqrt().recip(),
        ScalingConvention::GaussianInvSqrtD => (d as f64).sqrt().recip(),
        ScalingConvention::OrthonormalRows => 1.0,
    };
    let mut entries = DMatrix::zeros(d, n);
    for r in 0..d {
        for c in 0..n {
            entries[(r, c)] = sigma * rng.sample::<f64, _>(StandardNormal);
        }
    }
    if convention == ScalingConvention::OrthonormalRows {
        // Orthonormalize the rows: thin QR of the transpose gives n x d with
        // orthonormal columns; d Gaussian rows are full rank almost surely.
        let qr = entries.transpose().qr();
        entries = qr.q().transpose();
    }
    Ok(Projector {
        d,
        n,
        entries,
        convention,
        seed,
    })
}

/// Outcome of an empirical property check over a sample set.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct PropertyCheckReport {
    pub trials: usize,
    pub satisfied: usize,
    /// satisfied / trials.
    pub fraction: f64,
    /// The epsilon the property was tested at.
    pub epsilon: f64,
    /// Largest relative deviation seen, satisfied or not.
    pub worst_violation: f64,
}

impl PropertyCheckReport {
    fn new(trials: usize, satisfied: usize, epsilon: f64, worst: f64) -> Self {
        PropertyCheckReport {
            trials,
            satisfied,
            fraction: satisfied as f64 / trials as f64,
            epsilon,
            worst_violation: worst,
        }
    }
}

fn validate_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidInput(format!(
            "epsilon must lie in (0, 1), got {epsilon}"
        )));
    }
    Ok(())
}

fn reject_zero(xs: &[DVector<f64>], what: &str) -> Result<()> {
    if xs.is_empty() {
        return Err(Error::InvalidInput(format!("{what}: empty sample set")));
    }
    for (i, x) in xs.iter().enumerate() {
        if x.norm() == 0.0 {
            return Err(Error::InvalidInput(format!(
                "{what}: zero vector at index {i}"
            )));
        }
    }
    Ok(())
}

/// Fraction of xs with (1 - eps)|x|^2 <= |P x|^2 <= (1 + eps)|x|^2.
pub fn check_norm_preservation(
    p: &Projector,
    xs: &[DVector<f64>],
    epsilon: f64,
) -> Result<PropertyCheckReport> {
    validate_epsilon(epsilon)?;
    reject_zero(xs, "check_norm_preservation")?;
    let mut satisfied = 0usize;
    let mut worst = 0.0_f64;
    for x in xs {
        let px = p.apply(x)?;
        let nx2 = x.norm_squared();
        let dev = (px.norm_squared() - nx2).abs() / nx2;
        if dev <= epsilon {
            satisfied += 1;
        }
        worst = worst.max(dev);
    }
    Ok(PropertyCheckReport::new(xs.len(), satisfied, epsilon, worst))
}

/// Fraction of pairs with |<Px, Py> - <x, y>| <= eps |x| |y|.
pub fn check_inner_product(
    p: &Projector,
    pairs: &[(DVector<f64>, DVector<f64>)],
    epsilon: f64,
) -> Result<PropertyCheckReport> {
    validate_epsilon(epsilon)?;
    if pairs.is_empty() {
        return Err(Error::InvalidInput("check_inner_product: empty sample set".into()));
    }
    let mut satisfied = 0usize;
    let mut worst = 0.0_f64;
    for (i, (x, y)) in pairs.iter().enumerate() {
        let (nx, ny) = (x.norm(), y.norm());
        if nx == 0.0 || ny == 0.0 {
            return Err(Error::InvalidInput(format!(
                "check_inner_product: zero vector in pair {i}"
            )));
        }
        let px = p.apply(x)?;
        let py = p.apply(y)?;
        let dev = (px.dot(&py) - x.dot(y)).abs() / (nx * ny);
        if dev <= epsilon {
            satisfied += 1;
        }
        worst = worst.max(dev);
    }
    Ok(PropertyCheckReport::new(pairs.len(), satisfied, epsilon, worst))
}

/// Row tolerance for `check_linear_map`: rows of A must be unit within this.
pub const UNIT_ROW_TOL: f64 = 1e-9;

/// Fraction of xs with A P^T P x <= A x + eps |x| componentwise in absolute
/// value, for a constraint matrix A with unit rows.
pub fn check_linear_map(
    p: &Projector,
    a: &DMatrix<f64>,
    xs: &[DVector<f64>],
    epsilon: f64,
) -> Result<PropertyCheckReport> {
    validate_epsilon(epsilon)?;
    if a.ncols() != p.n() {
        return Err(Error::InvalidDimension(format!(
            "check_linear_map: A has {} columns, projector has n={}",
            a.ncols(),
            p.n()
        )));
    }
    for i in 0..a.nrows() {
        let rn = a.row(i).norm();
        if (rn - 1.0).abs() > UNIT_ROW_TOL {
            return Err(Error::InvalidInput(format!(
                "check_linear_map: row {i} of A has norm {rn:.12}, expected unit within {UNIT_ROW_TOL:e}"
            )));
        }
    }
    if xs.is_empty() {
        return Err(Error::InvalidInput("check_linear_map: empty sample set".into()));
    }
    let mut satisfied = 0usize;
    let mut worst = 0.0_f64;
    for x in xs {
        let nx = x.norm();
        let lifted = p.lift(&p.apply(x)?)?;
        let dev_vec = a * (lifted - x);
        let dev = dev_vec.amax();
        if nx == 0.0 {
            // A P^T P 0 = A 0 exactly; trivially satisfied.
            satisfied += 1;
            continue;
        }
        let rel = dev / nx;
        if rel <= epsilon {
            satisfied += 1;
        }
        worst = worst.max(rel);
    }
    Ok(PropertyCheckReport::new(xs.len(), satisfied, epsilon, worst))
}

/// Fraction of pairs with |x^T P^T P Q P^T P y - x^T Q y| within
/// 3 eps |x| |y| |Q|_nuclear.
pub fn check_quadratic_form(
    p: &Projector,
    q: &DMatrix<f64>,
    pairs: &[(DVector<f64>, DVector<f64>)],
    epsilon: f64,
) -> Result<PropertyCheckReport> {
    validate_epsilon(epsilon)?;
    if q.nrows() != p.n() || q.ncols() != p.n() {
        return Err(Error::InvalidDimension(format!(
            "check_quadratic_form: Q is {}x{}, projector has n={}",
            q.nrows(),
            q.ncols(),
            p.n()
        )));
    }
    if pairs.is_empty() {
        return Err(Error::InvalidInput("check_quadratic_form: empty sample set".into()));
    }
    let nuclear: f64 = linalg::singular_values_desc(q).iter().sum();
    // P Q P^T once; each pair then costs two applications and a d x d form.
    let qbar = &(p.entries) * q * p.entries.transpose();
    let mut satisfied = 0usize;
    let mut worst = 0.0_f64;
    for (x, y) in pairs {
        let px = p.apply(x)?;
        let py = p.apply(y)?;
        let lhs = px.dot(&(&qbar * &py));
        let rhs = x.dot(&(q * y));
        let dev = (lhs - rhs).abs();
        let scale = x.norm() * y.norm() * nuclear;
        if dev <= 3.0 * epsilon * scale {
            satisfied += 1;
        }
        if scale > 0.0 {
            worst = worst.max(dev / scale);
        }
    }
    Ok(PropertyCheckReport::new(pairs.len(), satisfied, epsilon, worst))
}

const MAGIC: &[u8; 8] = b"TRSKPROJ";
const HEADER_LEN: usize = 32;

/// Serialize a projector: 32-byte header (magic, u32 d, u32 n, u8 convention
/// tag, u64 seed, zero padding), then row-major little-endian f64 entries.
pub fn write_projector<W: Write>(w: &mut W, p: &Projector) -> std::io::Result<()> {
    let mut header = [0u8; HEADER_LEN];
    header[..8].copy_from_slice(MAGIC);
    header[8..12].copy_from_slice(&(p.d as u32).to_le_bytes());
    header[12..16].copy_from_slice(&(p.n as u32).to_le_bytes());
    header[16] = p.convention.tag();
    header[17..25].copy_from_slice(&p.seed.to_le_bytes());
    w.write_all(&header)?;
    let mut buf = Vec::with_capacity(p.n * 8);
    for r in 0..p.d {
        buf.clear();
        for c in 0..p.n {
            buf.extend_from_slice(&p.entries[(r, c)].to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

/// Inverse of `write_projector`, with validation of magic, tag, and shape.
pub fn read_projector<R: Read>(r: &mut R) -> Result<Projector> {
    let mut header = [0u8; HEADER_LEN];
    r.read_exact(&mut header)
        .map_err(|e| Error::malformed("projector file", format!("short header: {e}")))?;
    if &header[..8] != MAGIC {
        return Err(Error::malformed("projector file", "bad magic"));
    }
    let d = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let n = u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize;
    let convention = ScalingConvention::from_tag(header[16])
        .ok_or_else(|| Error::malformed("projector file", format!("unknown convention tag {}", header[16])))?;
    let seed = u64::from_le_bytes(header[17..25].try_into().unwrap());
    if d == 0 || d >= n {
        return Err(Error::malformed(
            "projector file",
            format!("header claims d={d}, n={n}; need 0 < d < n"),
        ));
    }
    let mut buf = vec![0u8; d * n * 8];
    r.read_exact(&mut buf)
        .map_err(|e| Error::malformed("projector file", format!("short entry block: {e}")))?;
    let mut extra = [0u8; 1];
    if r.read(&mut extra).map_err(|e| Error::io("projector file", e))? != 0 {
        return Err(Error::malformed("projector file", "trailing bytes after entries"));
    }
    let mut entries = DMatrix::zeros(d, n);
    let mut off = 0;
    for row in 0..d {
        for col in 0..n {
            let v = f64::from_le_bytes(buf[off..off + 8].try_into().unwrap());
            if !v.is_finite() {
                return Err(Error::malformed(
                    "projector file",
                    format!("non-finite entry at ({row}, {col})"),
                ));
            }
            entries[(row, col)] = v;
            off += 8;
        }
    }
    Projector::from_matrix(entries, convention, seed)
}

pub fn write_projector_file(path: &Path, p: &Projector) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    write_projector(&mut f, p).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn read_projector_file(path: &Path) -> Result<Projector> {
    let mut f = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    read_projector(&mut f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::unit_sphere_samples;

    #[test]
    fn rejects_flat_or_empty_shapes() {
        assert!(sample_projector(10, 0, ScalingConvention::GaussianInvSqrtN, 1).is_err());
        assert!(sample_projector(10, 10, ScalingConvention::GaussianInvSqrtN, 1).is_err());
        assert!(sample_projector(10, 11, ScalingConvention::GaussianInvSqrtN, 1).is_err());
        assert!(sample_projector(10, 3, ScalingConvention::GaussianInvSqrtN, 1).is_ok());
    }

    #[test]
    fn sampling_is_deterministic_in_the_seed() {
        for conv in ScalingConvention::ALL {
            let a = sample_projector(40, 8, conv, 77).unwrap();
            let b = sample_projector(40, 8, conv, 77).unwrap();
            assert_eq!(a.entries(), b.entries(), "{conv}");
            let c = sample_projector(40, 8, conv, 78).unwrap();
            assert_ne!(a.entries(), c.entries(), "{conv}");
        }
    }

    #[test]
    fn frobenius_mass_matches_the_scaling() {
        // Entry std 1/sqrt(n) puts E |P|_F^2 = d; chi-squared concentration
        // keeps a single draw at (4000, 40) well inside [36, 44].
        let p = sample_projector(4000, 40, ScalingConvention::GaussianInvSqrtN, 1).unwrap();
        let mass = p.entries().norm_squared();
        assert!((36.0..=44.0).contains(&mass), "|P|_F^2 = {mass}");
    }

    #[test]
    fn apply_on_coordinate_rows_truncates() {
        // Rows e1, e2 of R^3: P x is literally the first two coordinates.
        let entries = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let p = Projector::from_matrix(entries, ScalingConvention::OrthonormalRows, 0).unwrap();
        let x = DVector::from_vec(vec![3.0, -1.0, 2.0]);
        let px = p.apply(&x).unwrap();
        assert_eq!(px.as_slice(), &[3.0, -1.0]);
        let u = DVector::from_vec(vec![0.5, 0.25]);
        let roundtrip = p.apply(&p.lift(&u).unwrap()).unwrap();
        assert!((roundtrip - &u).norm() <= 1e-10);
    }

    #[test]
    fn apply_and_lift_are_adjoint() {
        let p = sample_projector(30, 6, ScalingConvention::GaussianInvSqrtN, 5).unwrap();
        let xs = unit_sphere_samples(30, 8, 11);
        let us = unit_sphere_samples(6, 8, 12);
        for (x, u) in xs.iter().zip(us.iter()) {
            let lhs = p.apply(x).unwrap().dot(u);
            let rhs = x.dot(&p.lift(u).unwrap());
            assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
        }
    }

    #[test]
    fn orthonormal_rows_have_exact_gram() {
        let p = sample_projector(120, 20, ScalingConvention::OrthonormalRows, 9).unwrap();
        assert!(p.gram_deviation() <= 1e-10);
        // and lifting preserves norms exactly up to rounding
        let u = DVector::from_fn(20, |i, _| (i as f64 * 0.37).sin());
        let lifted = p.lift(&u).unwrap();
        assert!((lifted.norm() - u.norm()).abs() <= 1e-10);
    }

    #[test]
    fn inv_sqrt_d_gram_blows_up() {
        // P P^T has trace about n/d per diagonal entry under 1/sqrt(d)
        // scaling, so the deviation from I sits near n/d - 1.
        let p = sample_projector(400, 8, ScalingConvention::GaussianInvSqrtD, 3).unwrap();
        assert!(p.gram_deviation() > 10.0);
    }

    #[test]
    fn linear_map_check_names_the_bad_row() {
        let p = sample_projector(20, 4, ScalingConvention::OrthonormalRows, 2).unwrap();
        let mut a = DMatrix::zeros(3, 20);
        a[(0, 0)] = 1.0;
        a[(1, 1)] = 1.0;
        a[(2, 2)] = 2.0; // not unit
        let xs = unit_sphere_samples(20, 4, 8);
        let err = check_linear_map(&p, &a, &xs, 0.5).unwrap_err();
        assert!(err.to_string().contains("row 2"), "{err}");
    }

    #[test]
    fn checkers_reject_zero_vectors_and_bad_epsilon() {
        let p = sample_projector(20, 4, ScalingConvention::GaussianInvSqrtD, 2).unwrap();
        let mut xs = unit_sphere_samples(20, 3, 8);
        assert!(check_norm_preservation(&p, &xs, 0.0).is_err());
        assert!(check_norm_preservation(&p, &xs, 1.0).is_err());
        xs.push(DVector::zeros(20));
        let err = check_norm_preservation(&p, &xs, 0.3).unwrap_err();
        assert!(err.to_string().contains("index 3"), "{err}");
    }

    #[test]
    fn quadratic_check_is_vacuous_for_zero_q() {
        let p = sample_projector(20, 4, ScalingConvention::GaussianInvSqrtD, 2).unwrap();
        let q = DMatrix::zeros(20, 20);
        let pairs: Vec<_> = unit_sphere_samples(20, 5, 3)
            .into_iter()
            .zip(unit_sphere_samples(20, 5, 4))
            .collect();
        let rep = check_quadratic_form(&p, &q, &pairs, 0.1).unwrap();
        assert_eq!(rep.satisfied, rep.trials);
        assert_eq!(rep.worst_violation, 0.0);
    }

    #[test]
    fn projector_file_roundtrip_is_bit_exact() {
        let p = sample_projector(50, 7, ScalingConvention::GaussianInvSqrtN, 123).unwrap();
        let mut buf = Vec::new();
        write_projector(&mut buf, &p).unwrap();
        assert_eq!(buf.len(), 32 + 50 * 7 * 8);
        let q = read_projector(&mut buf.as_slice()).unwrap();
        assert_eq!(p, q);
        // corrupt the magic
        buf[0] = b'X';
        assert!(read_projector(&mut buf.as_slice()).is_err());
    }
}
