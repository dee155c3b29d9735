//! Far-field LoS channel synthesis and Rician fading.
//!
//! Every `i -> j` link is `G = g * a_r * a_t^H` where
//! `g = sqrt(beta0) * exp(-j 2 pi D / lambda) / D^(alpha/2)` uses the
//! center-to-center distance and the array responses come from element
//! positions projected on the propagation direction. Node endpoints have a
//! scalar response of 1.

use std::fmt;

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::geometry::{link_distance, unit_direction, NodeLabel, Panel, PanelLabel, Scenario};
use crate::scalar::{cis, Real, Vec3};

/// Tolerance on the norm of a direction handed to [`array_response`].
pub const UNIT_TOL: f64 = 1e-9;

/// Dense row-major complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<Complex<T>>,
}

impl<T: Real> CMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex::new(T::zero(), T::zero()); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<Complex<T>>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// `scale * col * row^H`.
    pub fn outer(scale: Complex<T>, col: &[Complex<T>], row: &[Complex<T>]) -> Self {
        let mut data = Vec::with_capacity(col.len() * row.len());
        for c in col {
            let sc = scale * c;
            data.extend(row.iter().map(|r| sc * r.conj()));
        }
        Self {
            rows: col.len(),
            cols: row.len(),
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> Complex<T> {
        self.data[r * self.cols + c]
    }

    pub fn as_slice(&self) -> &[Complex<T>] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[Complex<T>] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Entries of a single-row or single-column matrix.
    pub fn as_vector(&self) -> &[Complex<T>] {
        debug_assert!(self.rows == 1 || self.cols == 1);
        &self.data
    }

    /// Scalar entry of a 1x1 matrix.
    pub fn scalar(&self) -> Complex<T> {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn mul_vec(&self, x: &[Complex<T>]) -> Vec<Complex<T>> {
        assert_eq!(x.len(), self.cols, "matrix-vector dimension mismatch");
        (0..self.rows)
            .map(|r| {
                self.row(r)
                    .iter()
                    .zip(x)
                    .fold(Complex::new(T::zero(), T::zero()), |acc, (a, b)| acc + a * b)
            })
            .collect()
    }

    /// `A^H x`.
    pub fn hermitian_mul_vec(&self, x: &[Complex<T>]) -> Vec<Complex<T>> {
        assert_eq!(x.len(), self.rows, "matrix-vector dimension mismatch");
        let mut out = vec![Complex::new(T::zero(), T::zero()); self.cols];
        for (r, xr) in x.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(r)) {
                *o += a.conj() * xr;
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> T {
        self.data
            .iter()
            .fold(T::zero(), |acc, z| acc + z.norm_sqr())
            .sqrt()
    }

    pub fn transpose(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for c in 0..self.cols {
            for r in 0..self.rows {
                data.push(self.get(r, c));
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }

    /// Leading singular triple `(sigma, u, v)` with `A ~ sigma u v^H`, by
    /// power iteration on `A^H A`.
    pub fn leading_singular(&self, iterations: usize) -> (T, Vec<Complex<T>>, Vec<Complex<T>>) {
        let zero = Complex::new(T::zero(), T::zero());
        // start from the row of largest energy, conjugated
        let start = (0..self.rows)
            .max_by(|&a, &b| {
                let ea = self.row(a).iter().fold(T::zero(), |s, z| s + z.norm_sqr());
                let eb = self.row(b).iter().fold(T::zero(), |s, z| s + z.norm_sqr());
                ea.partial_cmp(&eb).unwrap_or(std::cmp::Ordering::Equal)
            })
            .unwrap_or(0);
        let mut v: Vec<Complex<T>> = self.row(start).iter().map(|z| z.conj()).collect();
        let mut sigma = T::zero();
        let mut u = vec![zero; self.rows];
        for _ in 0..iterations.max(1) {
            let nv = norm(&v);
            if nv == T::zero() {
                return (T::zero(), u, v);
            }
            v.iter_mut().for_each(|z| *z /= nv);
            u = self.mul_vec(&v);
            sigma = norm(&u);
            if sigma == T::zero() {
                return (T::zero(), u, v);
            }
            u.iter_mut().for_each(|z| *z /= sigma);
            v = self.hermitian_mul_vec(&u);
        }
        let nv = norm(&v);
        if nv > T::zero() {
            v.iter_mut().for_each(|z| *z /= nv);
        }
        (sigma, u, v)
    }

    /// Upper estimate of `sigma_2 / sigma_1`: Frobenius norm of the residual
    /// after removing the leading rank-one term, relative to `sigma_1`.
    pub fn rank_one_residual(&self) -> T {
        let (sigma, u, v) = self.leading_singular(8);
        if sigma == T::zero() {
            return T::zero();
        }
        let approx = Self::outer(Complex::new(sigma, T::zero()), &u, &v);
        let resid = self
            .data
            .iter()
            .zip(&approx.data)
            .fold(T::zero(), |acc, (a, b)| acc + (a - b).norm_sqr())
            .sqrt();
        resid / sigma
    }
}

fn norm<T: Real>(v: &[Complex<T>]) -> T {
    v.iter().fold(T::zero(), |s, z| s + z.norm_sqr()).sqrt()
}

/// 1D steering vector `w(sigma, N)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteeringSpec<T> {
    pub phase_step: T,
    pub length: usize,
}

/// `[1, e^{-j pi s}, ..., e^{-j pi (N-1) s}]`.
pub fn steering_vector<T: Real>(spec: SteeringSpec<T>) -> Vec<Complex<T>> {
    (0..spec.length)
        .map(|k| cis(-T::PI() * T::from_count(k) * spec.phase_step))
        .collect()
}

/// Kronecker product of two vectors, first index major.
pub fn kron<T: Real>(a: &[Complex<T>], b: &[Complex<T>]) -> Vec<Complex<T>> {
    a.iter()
        .flat_map(|x| b.iter().map(move |y| x * y))
        .collect()
}

/// Plane-wave response of a panel for propagation direction `propagation`
/// (source towards panel on arrival, panel towards sink on departure):
/// `exp(-j 2 pi / lambda * (p - center) . propagation)` per element.
///
/// For a uniform planar array this equals
/// `w(2 d (h . u) / lambda, M_h) (x) w(2 d (v . u) / lambda, M_v)` up to the
/// reference-element phase.
pub fn array_response<T: Real>(
    panel: &Panel<T>,
    propagation: Vec3<T>,
    wavelength: T,
) -> Result<Vec<Complex<T>>> {
    let n = propagation.norm();
    if (n - T::one()).abs() > T::lit(UNIT_TOL) {
        return Err(Error::NonUnitDirection(n.to_f64_lossy()));
    }
    let k = (T::PI() + T::PI()) / wavelength;
    Ok(panel
        .element_offsets()
        .into_iter()
        .map(|off| cis(-k * off.dot(propagation)))
        .collect())
}

/// Identifies one end of a link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LinkEnd {
    Node(NodeLabel),
    Panel(PanelLabel),
}

impl fmt::Display for LinkEnd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LinkEnd::Node(n) => write!(f, "{n:?}"),
            LinkEnd::Panel(p) => f.write_str(p.as_str()),
        }
    }
}

/// Link endpoint with the geometry needed for synthesis.
#[derive(Debug, Clone, Copy)]
pub enum Endpoint<'a, T> {
    Node(NodeLabel, Vec3<T>),
    Panel(&'a Panel<T>),
}

impl<'a, T: Real> Endpoint<'a, T> {
    pub fn label(&self) -> LinkEnd {
        match self {
            Endpoint::Node(l, _) => LinkEnd::Node(*l),
            Endpoint::Panel(p) => LinkEnd::Panel(p.label),
        }
    }

    pub fn position(&self) -> Vec3<T> {
        match self {
            Endpoint::Node(_, p) => *p,
            Endpoint::Panel(p) => p.center,
        }
    }

    fn len(&self) -> usize {
        match self {
            Endpoint::Node(..) => 1,
            Endpoint::Panel(p) => p.element_count(),
        }
    }

    fn response(&self, propagation: Vec3<T>, wavelength: T) -> Result<Vec<Complex<T>>> {
        match self {
            Endpoint::Node(..) => Ok(vec![Complex::new(T::one(), T::zero())]),
            Endpoint::Panel(p) => array_response(p, propagation, wavelength),
        }
    }
}

/// The LoS factorization `G = gain * rx * tx^H`.
#[derive(Debug, Clone, PartialEq)]
pub struct LosFactors<T> {
    pub gain: Complex<T>,
    pub rx: Vec<Complex<T>>,
    pub tx: Vec<Complex<T>>,
}

/// Complex gain matrix of one `tx -> rx` link (`m_rx x m_tx`; scalars 1x1).
#[derive(Debug, Clone, PartialEq)]
pub struct LinkChannel<T> {
    pub tx: LinkEnd,
    pub rx: LinkEnd,
    pub los: CMatrix<T>,
    pub factors: Option<LosFactors<T>>,
    pub faded: Option<CMatrix<T>>,
    /// Rician factor of `faded`; infinite for pure LoS.
    pub rician_tau: T,
    pub distance: T,
    /// Mean power of one LoS entry, `beta0 / D^alpha`.
    pub entry_power: T,
}

impl<T: Real> LinkChannel<T> {
    /// The channel seen by the receiver: faded if present, else LoS.
    pub fn effective(&self) -> &CMatrix<T> {
        self.faded.as_ref().unwrap_or(&self.los)
    }

    /// Link with the same gains seen in the reverse direction (`G^T`).
    pub fn reversed(&self) -> Self {
        Self {
            tx: self.rx,
            rx: self.tx,
            los: self.los.transpose(),
            factors: self.factors.as_ref().map(|f| LosFactors {
                gain: f.gain,
                rx: f.tx.iter().map(|z| z.conj()).collect(),
                tx: f.rx.iter().map(|z| z.conj()).collect(),
            }),
            faded: self.faded.as_ref().map(CMatrix::transpose),
            rician_tau: self.rician_tau,
            distance: self.distance,
            entry_power: self.entry_power,
        }
    }
}

/// Complex path gain `sqrt(beta0) e^{-j 2 pi D / lambda} / D^(alpha/2)`.
pub fn path_gain<T: Real>(scenario: &Scenario<T>, distance: T) -> Complex<T> {
    let k = (T::PI() + T::PI()) / scenario.wavelength;
    let mag = scenario.ref_gain.sqrt() / distance.powf(scenario.pathloss_exponent / T::lit(2.0));
    cis(-k * distance) * mag
}

/// Synthesizes the LoS channel from `tx` to `rx`.
pub fn los_channel<T: Real>(
    scenario: &Scenario<T>,
    tx: Endpoint<'_, T>,
    rx: Endpoint<'_, T>,
) -> Result<LinkChannel<T>> {
    let (a, b) = (tx.label(), rx.label());
    if a == b {
        return Err(Error::SelfLink);
    }
    let sd = [LinkEnd::Node(NodeLabel::S), LinkEnd::Node(NodeLabel::D)];
    if sd.contains(&a) && sd.contains(&b) {
        return Err(Error::DirectLinkExcluded);
    }
    let distance = link_distance(tx.position(), rx.position())?;
    let dir = unit_direction(tx.position(), rx.position())?;
    let gain = path_gain(scenario, distance);
    let rx_resp = rx.response(dir, scenario.wavelength)?;
    let tx_resp = tx.response(dir, scenario.wavelength)?;
    debug_assert_eq!(rx_resp.len(), rx.len());
    debug_assert_eq!(tx_resp.len(), tx.len());
    let los = CMatrix::outer(gain, &rx_resp, &tx_resp);
    Ok(LinkChannel {
        tx: a,
        rx: b,
        los,
        factors: Some(LosFactors {
            gain,
            rx: rx_resp,
            tx: tx_resp,
        }),
        faded: None,
        rician_tau: T::infinity(),
        distance,
        entry_power: gain.norm_sqr(),
    })
}

/// Draws the faded part `sqrt(tau/(1+tau)) G_los + sqrt(1/(1+tau)) W` with
/// `W` i.i.d. `CN(0, beta0 / D^alpha)`, using the supplied generator.
pub fn rician_channel_with<T: Real, R: Rng + ?Sized>(
    los: &LinkChannel<T>,
    tau: T,
    rng: &mut R,
) -> Result<LinkChannel<T>> {
    if tau.is_nan() || tau < T::zero() {
        return Err(Error::NegativeRicianFactor(tau.to_f64_lossy()));
    }
    let mut out = los.clone();
    out.rician_tau = tau;
    if tau.is_infinite() {
        out.faded = Some(los.los.clone());
        return Ok(out);
    }
    let los_w = (tau / (T::one() + tau)).sqrt();
    let nlos_w = (T::one() / (T::one() + tau)).sqrt();
    // per real dimension: variance / 2
    let sd = (los.entry_power / T::lit(2.0)).sqrt().to_f64_lossy();
    let data = los
        .los
        .as_slice()
        .iter()
        .map(|g| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            let w = Complex::new(T::lit(re * sd), T::lit(im * sd));
            g * los_w + w * nlos_w
        })
        .collect();
    out.faded = Some(CMatrix::from_vec(los.los.rows(), los.los.cols(), data)?);
    Ok(out)
}

/// Seeded Rician draw; `stream` separates links within one trial.
pub fn rician_channel<T: Real>(
    los: &LinkChannel<T>,
    tau: T,
    seed: u64,
    stream: u64,
) -> Result<LinkChannel<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rician_channel_with(los, tau, &mut rng)
}
