//! Reflection phase design.
//!
//! Closed-form designs for one panel and for a cooperating panel pair, plus
//! two reference optimizers (element-wise coordinate ascent and exhaustive
//! search over quantized phases) used to check them.
//!
//! Vector conventions: `from_tx` is the column `g_{tx,I}` (tx towards the
//! panel) and `to_rx` holds the entries of the row `g_{I,rx}^H` exactly as
//! synthesized. A single reflection therefore contributes
//! `sum_m to_rx[m] * phi[m] * from_tx[m]`.

use num_complex::Complex;

use crate::channel::{CMatrix, LinkChannel};
use crate::error::{Error, Result};
use crate::geometry::PanelLabel;
use crate::scalar::{cis, Real};

/// Relative second-singular-value threshold above which an inter-panel
/// channel is not treated as rank one.
pub const RANK_ONE_TOL: f64 = 1e-6;

/// Upper limit on the number of profiles [`exhaustive_phase_search`] visits.
pub const EXHAUSTIVE_LIMIT: u64 = 10_000_000;

/// Diagonal of a reflection matrix; every coefficient has unit modulus.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseProfile<T> {
    pub panel: PanelLabel,
    pub coefficients: Vec<Complex<T>>,
}

impl<T: Real> PhaseProfile<T> {
    pub fn from_phases(panel: PanelLabel, phases: impl IntoIterator<Item = T>) -> Self {
        Self {
            panel,
            coefficients: phases.into_iter().map(cis).collect(),
        }
    }

    /// All-ones (zero phase) profile.
    pub fn identity(panel: PanelLabel, len: usize) -> Self {
        Self::from_phases(panel, std::iter::repeat_n(T::zero(), len))
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    pub fn phases(&self) -> Vec<T> {
        self.coefficients.iter().map(|c| c.arg()).collect()
    }
}

fn dot<T: Real>(a: &[Complex<T>], b: &[Complex<T>]) -> Complex<T> {
    a.iter()
        .zip(b)
        .fold(Complex::new(T::zero(), T::zero()), |acc, (x, y)| acc + x * y)
}

/// `a^H b`.
fn hdot<T: Real>(a: &[Complex<T>], b: &[Complex<T>]) -> Complex<T> {
    a.iter()
        .zip(b)
        .fold(Complex::new(T::zero(), T::zero()), |acc, (x, y)| acc + x.conj() * y)
}

fn check_nonzero<T: Real>(v: &[Complex<T>]) -> Result<()> {
    match v.iter().position(|z| z.norm_sqr() == T::zero()) {
        Some(i) => Err(Error::ZeroMagnitude(i)),
        None => Ok(()),
    }
}

fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got == want {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!(
            "{what} has length {got}, expected {want}"
        )))
    }
}

/// Single-panel design: every reflected path is rotated onto the phase of
/// the direct path, `phi_m = exp(j(arg g_d - arg to_rx[m] - arg from_tx[m]))`.
/// The composite then reaches `|g_d| + sum_m |to_rx[m]| |from_tx[m]|`.
pub fn single_irs_phases<T: Real>(
    panel: PanelLabel,
    direct: Complex<T>,
    to_rx: &[Complex<T>],
    from_tx: &[Complex<T>],
) -> Result<PhaseProfile<T>> {
    check_len("from_tx", from_tx.len(), to_rx.len())?;
    if to_rx.is_empty() {
        return Err(Error::DimensionMismatch("empty panel".into()));
    }
    check_nonzero(to_rx)?;
    check_nonzero(from_tx)?;
    let target = direct.arg();
    Ok(PhaseProfile::from_phases(
        panel,
        to_rx
            .iter()
            .zip(from_tx)
            .map(|(r, t)| target - r.arg() - t.arg()),
    ))
}

/// `direct + sum_m to_rx[m] phi[m] from_tx[m]`.
pub fn single_reflection_response<T: Real>(
    direct: Complex<T>,
    to_rx: &[Complex<T>],
    profile: &[Complex<T>],
    from_tx: &[Complex<T>],
) -> Complex<T> {
    direct
        + to_rx
            .iter()
            .zip(profile)
            .zip(from_tx)
            .fold(Complex::new(T::zero(), T::zero()), |acc, ((r, p), t)| acc + r * p * t)
}

/// Factors of a rank-one inter-panel channel, `G = t1 t2^H`.
#[derive(Debug, Clone, PartialEq)]
pub struct RankOneFactors<T> {
    /// Receive-side factor (second panel, length `M2`).
    pub t1: Vec<Complex<T>>,
    /// Transmit-side factor (first panel, length `M1`).
    pub t2: Vec<Complex<T>>,
}

impl<T: Real> RankOneFactors<T> {
    /// Factorizes a general matrix through its leading singular pair,
    /// `t1 = sqrt(s) u`, `t2 = sqrt(s) v`.
    pub fn from_matrix(g: &CMatrix<T>) -> Result<Self> {
        let ratio = g.rank_one_residual();
        if ratio > T::lit(RANK_ONE_TOL) {
            return Err(Error::NotRankOne(ratio.to_f64_lossy()));
        }
        let (sigma, u, v) = g.leading_singular(8);
        let s = sigma.sqrt();
        Ok(Self {
            t1: u.into_iter().map(|z| z * s).collect(),
            t2: v.into_iter().map(|z| z * s).collect(),
        })
    }

    pub fn reconstruct(&self) -> CMatrix<T> {
        CMatrix::outer(Complex::new(T::one(), T::zero()), &self.t1, &self.t2)
    }
}

/// Splits an inter-panel LoS channel as `t1 = sqrt(g) a_r`,
/// `t2^H = sqrt(g) a_t^H` (principal square root in both factors).
pub fn decompose_inter_irs<T: Real>(link: &LinkChannel<T>) -> Result<RankOneFactors<T>> {
    let ratio = link.los.rank_one_residual();
    if ratio > T::lit(RANK_ONE_TOL) {
        return Err(Error::NotRankOne(ratio.to_f64_lossy()));
    }
    match &link.factors {
        Some(f) => {
            let sg = f.gain.sqrt();
            Ok(RankOneFactors {
                t1: f.rx.iter().map(|a| sg * a).collect(),
                // t2^H = sqrt(g) a_t^H  =>  t2 = conj(sqrt(g)) a_t
                t2: f.tx.iter().map(|a| sg.conj() * a).collect(),
            })
        }
        None => RankOneFactors::from_matrix(&link.los),
    }
}

/// Channel vectors of a two-panel (double-reflection) hop.
///
/// Panel 1 is adjacent to the transmitter, panel 2 to the receiver; the
/// inter-panel channel runs from panel 1 to panel 2.
#[derive(Debug, Clone, Copy)]
pub struct CascadeVectors<'a, T> {
    pub tx_to_first: &'a [Complex<T>],
    pub first_to_rx: &'a [Complex<T>],
    pub tx_to_second: &'a [Complex<T>],
    pub second_to_rx: &'a [Complex<T>],
}

/// Cooperative two-panel design.
///
/// Panel 1 makes `t2^H diag(phi1) g_{tx,1}` coherent with phase
/// `arg(t1^H g_{tx,2})`; panel 2 makes `g_{2,rx}^H diag(phi2) t1` coherent
/// with phase `arg(g_{1,rx}^H t2)`. The double reflection then attains
/// `sum|g_{2,rx}||t1| * sum|t2||g_{tx,1}|` and both single reflections
/// share its phase.
pub fn cooperative_phases<T: Real>(
    first: PanelLabel,
    second: PanelLabel,
    v: CascadeVectors<'_, T>,
    factors: &RankOneFactors<T>,
) -> Result<(PhaseProfile<T>, PhaseProfile<T>)> {
    let m1 = v.tx_to_first.len();
    let m2 = v.tx_to_second.len();
    if m1 == 0 || m2 == 0 {
        return Err(Error::DimensionMismatch("empty panel".into()));
    }
    check_len("first_to_rx", v.first_to_rx.len(), m1)?;
    check_len("second_to_rx", v.second_to_rx.len(), m2)?;
    check_len("t1", factors.t1.len(), m2)?;
    check_len("t2", factors.t2.len(), m1)?;
    for w in [
        v.tx_to_first,
        v.first_to_rx,
        v.tx_to_second,
        v.second_to_rx,
        &factors.t1[..],
        &factors.t2[..],
    ] {
        check_nonzero(w)?;
    }
    let target1 = hdot(&factors.t1, v.tx_to_second).arg();
    // first_to_rx already stores g_{1,rx}^H, so this is arg(g_{1,rx}^H t2)
    let target2 = dot(v.first_to_rx, &factors.t2).arg();
    let p1 = PhaseProfile::from_phases(
        first,
        factors
            .t2
            .iter()
            .zip(v.tx_to_first)
            .map(|(t2, g)| target1 - t2.conj().arg() - g.arg()),
    );
    let p2 = PhaseProfile::from_phases(
        second,
        v.second_to_rx
            .iter()
            .zip(&factors.t1)
            .map(|(g, t1)| target2 - g.arg() - t1.arg()),
    );
    Ok((p1, p2))
}

/// `g_{2,rx}^H diag(phi2) G diag(phi1) g_{tx,1}`.
pub fn double_reflection_response<T: Real>(
    second_to_rx: &[Complex<T>],
    phi2: &[Complex<T>],
    inter: &CMatrix<T>,
    phi1: &[Complex<T>],
    tx_to_first: &[Complex<T>],
) -> Complex<T> {
    let x: Vec<_> = phi1.iter().zip(tx_to_first).map(|(p, g)| p * g).collect();
    let y = inter.mul_vec(&x);
    second_to_rx
        .iter()
        .zip(phi2)
        .zip(&y)
        .fold(Complex::new(T::zero(), T::zero()), |acc, ((r, p), z)| acc + r * p * z)
}

/// Effective scalar channel as a function of the panels' profiles.
///
/// Models must be affine in every panel's coefficient vector when the
/// other panels are held fixed, which holds for any sum of single and
/// double reflections.
pub trait ReflectionModel<T: Real> {
    fn panel_sizes(&self) -> Vec<usize>;

    fn response(&self, profiles: &[Vec<Complex<T>>]) -> Complex<T>;

    /// Coefficient `c_m` of each element of `panel`, such that the response
    /// equals `c0 + sum_m c_m phi_m` with the other panels fixed.
    fn panel_coefficients(&self, profiles: &[Vec<Complex<T>>], panel: usize) -> Vec<Complex<T>> {
        let mut work = profiles.to_vec();
        let half = T::lit(0.5);
        (0..work[panel].len())
            .map(|m| {
                let saved = work[panel][m];
                work[panel][m] = Complex::new(T::one(), T::zero());
                let plus = self.response(&work);
                work[panel][m] = Complex::new(-T::one(), T::zero());
                let minus = self.response(&work);
                work[panel][m] = saved;
                (plus - minus) * half
            })
            .collect()
    }
}

/// One panel between a transmitter and a receiver.
#[derive(Debug, Clone, PartialEq)]
pub struct SingleReflection<T> {
    pub direct: Complex<T>,
    pub to_rx: Vec<Complex<T>>,
    pub from_tx: Vec<Complex<T>>,
}

impl<T: Real> ReflectionModel<T> for SingleReflection<T> {
    fn panel_sizes(&self) -> Vec<usize> {
        vec![self.to_rx.len()]
    }

    fn response(&self, profiles: &[Vec<Complex<T>>]) -> Complex<T> {
        single_reflection_response(self.direct, &self.to_rx, &profiles[0], &self.from_tx)
    }

    fn panel_coefficients(&self, _profiles: &[Vec<Complex<T>>], _panel: usize) -> Vec<Complex<T>> {
        self.to_rx.iter().zip(&self.from_tx).map(|(r, t)| r * t).collect()
    }
}

/// Two cooperating panels: direct path, one single reflection per panel and
/// the double reflection through the inter-panel channel `inter`
/// (`M2 x M1`).
#[derive(Debug, Clone, PartialEq)]
pub struct CascadedReflection<T> {
    pub direct: Complex<T>,
    pub tx_to_first: Vec<Complex<T>>,
    pub first_to_rx: Vec<Complex<T>>,
    pub tx_to_second: Vec<Complex<T>>,
    pub second_to_rx: Vec<Complex<T>>,
    pub inter: CMatrix<T>,
}

/// Individual contributions of a cascaded hop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CascadeTerms<T> {
    pub direct: Complex<T>,
    pub double: Complex<T>,
    pub single_first: Complex<T>,
    pub single_second: Complex<T>,
}

impl<T: Real> CascadeTerms<T> {
    pub fn total(&self) -> Complex<T> {
        self.direct + self.double + self.single_first + self.single_second
    }
}

impl<T: Real> CascadedReflection<T> {
    pub fn vectors(&self) -> CascadeVectors<'_, T> {
        CascadeVectors {
            tx_to_first: &self.tx_to_first,
            first_to_rx: &self.first_to_rx,
            tx_to_second: &self.tx_to_second,
            second_to_rx: &self.second_to_rx,
        }
    }

    pub fn terms(&self, phi1: &[Complex<T>], phi2: &[Complex<T>]) -> CascadeTerms<T> {
        let zero = Complex::new(T::zero(), T::zero());
        CascadeTerms {
            direct: self.direct,
            double: double_reflection_response(
                &self.second_to_rx,
                phi2,
                &self.inter,
                phi1,
                &self.tx_to_first,
            ),
            single_first: single_reflection_response(zero, &self.first_to_rx, phi1, &self.tx_to_first),
            single_second: single_reflection_response(
                zero,
                &self.second_to_rx,
                phi2,
                &self.tx_to_second,
            ),
        }
    }

    /// The same hop with only the double-reflection path.
    pub fn double_only(&self) -> Self {
        let zero = Complex::new(T::zero(), T::zero());
        Self {
            direct: zero,
            first_to_rx: vec![zero; self.first_to_rx.len()],
            tx_to_second: vec![zero; self.tx_to_second.len()],
            ..self.clone()
        }
    }
}

impl<T: Real> ReflectionModel<T> for CascadedReflection<T> {
    fn panel_sizes(&self) -> Vec<usize> {
        vec![self.tx_to_first.len(), self.tx_to_second.len()]
    }

    fn response(&self, profiles: &[Vec<Complex<T>>]) -> Complex<T> {
        self.terms(&profiles[0], &profiles[1]).total()
    }

    fn panel_coefficients(&self, profiles: &[Vec<Complex<T>>], panel: usize) -> Vec<Complex<T>> {
        if panel == 0 {
            // z_m = sum_n row2[n] phi2[n] G[n, m]
            let y: Vec<_> = self
                .second_to_rx
                .iter()
                .zip(&profiles[1])
                .map(|(r, p)| r * p)
                .collect();
            let mut z = vec![Complex::new(T::zero(), T::zero()); self.tx_to_first.len()];
            for (n, yn) in y.iter().enumerate() {
                for (zm, g) in z.iter_mut().zip(self.inter.row(n)) {
                    *zm += yn * g;
                }
            }
            z.iter()
                .zip(&self.first_to_rx)
                .zip(&self.tx_to_first)
                .map(|((zm, r), t)| (zm + r) * t)
                .collect()
        } else {
            let x: Vec<_> = profiles[0]
                .iter()
                .zip(&self.tx_to_first)
                .map(|(p, g)| p * g)
                .collect();
            let gx = self.inter.mul_vec(&x);
            self.second_to_rx
                .iter()
                .zip(gx.iter().zip(&self.tx_to_second))
                .map(|(r, (a, b))| r * (a + b))
                .collect()
        }
    }
}

/// Result of [`coordinate_ascent_refine`].
#[derive(Debug, Clone, PartialEq)]
pub struct AscentOutcome<T> {
    pub profiles: Vec<Vec<Complex<T>>>,
    pub gain: T,
    pub sweeps: usize,
    /// `|h|` after every element update, in update order.
    pub history: Vec<T>,
}

/// Element-wise phase ascent on `|h|`.
///
/// Each element is set to the phase that aligns its contribution with the
/// residual of all other terms (panel order, then ascending element index).
/// Stops after `max_sweeps` or when a sweep improves `|h|` by less than
/// `tolerance` relative.
pub fn coordinate_ascent_refine<T: Real, M: ReflectionModel<T> + ?Sized>(
    model: &M,
    initial: &[Vec<Complex<T>>],
    max_sweeps: usize,
    tolerance: T,
) -> Result<AscentOutcome<T>> {
    let sizes = model.panel_sizes();
    check_len("initial profiles", initial.len(), sizes.len())?;
    for (p, &n) in initial.iter().zip(&sizes) {
        check_len("profile", p.len(), n)?;
    }
    let mut profiles = initial.to_vec();
    let mut h = model.response(&profiles);
    let mut history = Vec::new();
    let mut sweeps = 0;
    while sweeps < max_sweeps.max(1) {
        sweeps += 1;
        let before = h.norm();
        for panel in 0..sizes.len() {
            let coeffs = model.panel_coefficients(&profiles, panel);
            // re-anchor to limit incremental drift
            h = model.response(&profiles);
            for (m, c) in coeffs.iter().enumerate() {
                let old = profiles[panel][m];
                let residual = h - c * old;
                if c.norm_sqr() > T::zero() && residual.norm_sqr() > T::zero() {
                    let new = cis(residual.arg() - c.arg());
                    let candidate = residual + c * new;
                    if candidate.norm() >= h.norm() {
                        profiles[panel][m] = new;
                        h = candidate;
                    }
                }
                history.push(h.norm());
            }
        }
        h = model.response(&profiles);
        let after = h.norm();
        if after - before <= tolerance * before {
            break;
        }
    }
    Ok(AscentOutcome {
        gain: h.norm(),
        profiles,
        sweeps,
        history,
    })
}

/// Result of [`exhaustive_phase_search`].
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedOptimum<T> {
    pub profiles: Vec<Vec<Complex<T>>>,
    /// Phase index `q` per element, phase `2 pi q / 2^bits`.
    pub indices: Vec<Vec<u32>>,
    pub gain: T,
}

/// Global optimum of `|h|` over phases `{2 pi q / 2^bits}` by enumeration.
/// Ties keep the lexicographically smallest index tuple.
pub fn exhaustive_phase_search<T: Real, M: ReflectionModel<T> + ?Sized>(
    model: &M,
    bits: u32,
) -> Result<QuantizedOptimum<T>> {
    let sizes = model.panel_sizes();
    let total: usize = sizes.iter().sum();
    let levels = 1u64
        .checked_shl(bits)
        .ok_or(Error::SearchTooLarge { size: f64::INFINITY, limit: EXHAUSTIVE_LIMIT })?;
    let size = (levels as f64).powi(total as i32);
    if bits == 0 || size > EXHAUSTIVE_LIMIT as f64 {
        if bits == 0 {
            return Err(Error::InvalidGrid("bits_per_phase must be at least 1".into()));
        }
        return Err(Error::SearchTooLarge { size, limit: EXHAUSTIVE_LIMIT });
    }
    let step = (T::PI() + T::PI()) / T::from_count(levels as usize);
    let table: Vec<Complex<T>> = (0..levels).map(|q| cis(step * T::from_count(q as usize))).collect();
    let mut idx = vec![0u32; total];
    let mut current: Vec<Vec<Complex<T>>> = sizes.iter().map(|&n| vec![table[0]; n]).collect();
    let mut best_gain = -T::one();
    let mut best_idx = idx.clone();
    loop {
        let g = model.response(&current).norm();
        if g > best_gain {
            best_gain = g;
            best_idx.clone_from(&idx);
        }
        // odometer, last position fastest => lexicographic order
        let mut pos = total;
        loop {
            if pos == 0 {
                let indices = unflatten(&best_idx, &sizes);
                let profiles = indices
                    .iter()
                    .map(|p| p.iter().map(|&q| table[q as usize]).collect())
                    .collect();
                return Ok(QuantizedOptimum {
                    profiles,
                    indices,
                    gain: best_gain,
                });
            }
            pos -= 1;
            idx[pos] += 1;
            let (panel, elem) = locate(pos, &sizes);
            if u64::from(idx[pos]) < levels {
                current[panel][elem] = table[idx[pos] as usize];
                break;
            }
            idx[pos] = 0;
            current[panel][elem] = table[0];
        }
    }
}

fn locate(mut pos: usize, sizes: &[usize]) -> (usize, usize) {
    for (p, &n) in sizes.iter().enumerate() {
        if pos < n {
            return (p, pos);
        }
        pos -= n;
    }
    unreachable!("position within total size")
}

fn unflatten(flat: &[u32], sizes: &[usize]) -> Vec<Vec<u32>> {
    let mut out = Vec::with_capacity(sizes.len());
    let mut start = 0;
    for &n in sizes {
        out.push(flat[start..start + n].to_vec());
        start += n;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex<f64>> {
        (0..n)
            .map(|_| Complex::from_polar(rng.random_range(0.1..2.0), rng.random_range(-PI..PI)))
            .collect()
    }

    #[test]
    fn aligned_inputs_need_no_rotation() {
        let p = single_irs_phases(
            PanelLabel::I,
            c(2.0, 0.0),
            &[c(1.0, 0.0), c(3.0, 0.0)],
            &[c(0.5, 0.0), c(4.0, 0.0)],
        )
        .unwrap();
        for z in &p.coefficients {
            assert!((z - c(1.0, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn one_element_phase_arithmetic() {
        let to_rx = [Complex::from_polar(1.0, PI / 3.0)];
        let from_tx = [Complex::from_polar(1.0, PI / 6.0)];
        let p = single_irs_phases(PanelLabel::I, c(1.0, 0.0), &to_rx, &from_tx).unwrap();
        assert!((p.coefficients[0] - c(0.0, -1.0)).norm() < 1e-15);
        let h = single_reflection_response(c(1.0, 0.0), &to_rx, &p.coefficients, &from_tx);
        assert!((h - c(2.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn zero_entry_rejected() {
        let r = single_irs_phases(PanelLabel::I, c(1.0, 0.0), &[c(1.0, 0.0), c(0.0, 0.0)], &[c(1.0, 0.0); 2]);
        assert_eq!(r, Err(Error::ZeroMagnitude(1)));
        let r = single_irs_phases(PanelLabel::I, c(1.0, 0.0), &[c(1.0, 0.0)], &[c(1.0, 0.0); 2]);
        assert!(matches!(r, Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn scalar_decomposition() {
        let g = Complex::from_polar(3e-5f64, -2.0);
        let m = CMatrix::from_vec(1, 1, vec![g]).unwrap();
        let f = RankOneFactors::from_matrix(&m).unwrap();
        assert!((f.reconstruct().scalar() - g).norm() < 1e-20);
        // factors carry sqrt|g| each
        assert!((f.t1[0].norm() - g.norm().sqrt()).abs() < 1e-15);
    }

    #[test]
    fn random_rank_one_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a: Vec<_> = (0..3).map(|_| Complex::from_polar(1.0, rng.random_range(-PI..PI))).collect();
        let b: Vec<_> = (0..4).map(|_| Complex::from_polar(1.0, rng.random_range(-PI..PI))).collect();
        let g = Complex::from_polar(1e-4, 0.7);
        let m = CMatrix::outer(g, &a, &b);
        let f = RankOneFactors::from_matrix(&m).unwrap();
        let r = f.reconstruct();
        let err: f64 = m.as_slice().iter().zip(r.as_slice()).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
        assert!(err / m.frobenius_norm() < 1e-12);
        // t1 is parallel to a up to a unit-modulus scalar
        let ratio = f.t1[0] / a[0];
        for (t, x) in f.t1.iter().zip(&a) {
            assert!((t / x - ratio).norm() < 1e-9 * ratio.norm());
        }
    }

    #[test]
    fn rank_two_rejected() {
        let m = CMatrix::from_vec(2, 2, vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]).unwrap();
        assert!(matches!(RankOneFactors::from_matrix(&m), Err(Error::NotRankOne(_))));
    }

    /// Equal-magnitude entries with random phases, as in a LoS link.
    fn los_like(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex<f64>> {
        let mag = rng.random_range(0.1..2.0);
        (0..n).map(|_| Complex::from_polar(mag, rng.random_range(-PI..PI))).collect()
    }

    fn random_cascade(rng: &mut ChaCha8Rng, m1: usize, m2: usize) -> CascadedReflection<f64> {
        let t1 = los_like(rng, m2);
        let t2 = los_like(rng, m1);
        CascadedReflection {
            direct: Complex::from_polar(0.3, rng.random_range(-PI..PI)),
            tx_to_first: los_like(rng, m1),
            first_to_rx: los_like(rng, m1),
            tx_to_second: los_like(rng, m2),
            second_to_rx: los_like(rng, m2),
            inter: CMatrix::outer(c(1.0, 0.0), &t1, &t2),
        }
    }

    #[test]
    fn cooperative_unit_case() {
        let one = [c(2.0, 0.0)];
        let f = RankOneFactors { t1: vec![c(1.5, 0.0)], t2: vec![c(0.5, 0.0)] };
        let v = CascadeVectors { tx_to_first: &one, first_to_rx: &one, tx_to_second: &one, second_to_rx: &[c(3.0, 0.0)] };
        let (p1, p2) = cooperative_phases(PanelLabel::I1, PanelLabel::I2, v, &f).unwrap();
        assert!((p1.coefficients[0] - c(1.0, 0.0)).norm() < 1e-15);
        assert!((p2.coefficients[0] - c(1.0, 0.0)).norm() < 1e-15);
        let h = double_reflection_response(&[c(3.0, 0.0)], &p2.coefficients, &f.reconstruct(), &p1.coefficients, &one);
        assert!((h.norm() - 3.0 * 1.5 * 0.5 * 2.0).abs() < 1e-12);
    }

    #[test]
    fn cooperative_coherence_and_alignment() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let m1 = rng.random_range(1..6);
            let m2 = rng.random_range(1..6);
            let model = random_cascade(&mut rng, m1, m2);
            let f = RankOneFactors::from_matrix(&model.inter).unwrap();
            let (p1, p2) = cooperative_phases(PanelLabel::I1, PanelLabel::I2, model.vectors(), &f).unwrap();
            let terms = model.terms(&p1.coefficients, &p2.coefficients);
            let coherent: f64 = model.second_to_rx.iter().zip(&f.t1).map(|(a, b)| a.norm() * b.norm()).sum::<f64>()
                * f.t2.iter().zip(&model.tx_to_first).map(|(a, b)| a.norm() * b.norm()).sum::<f64>();
            assert!((terms.double.norm() / coherent - 1.0).abs() < 1e-12);
            let d = terms.double.arg();
            assert!(crate::scalar::angular_distance(terms.single_first.arg(), d) < 1e-9);
            assert!(crate::scalar::angular_distance(terms.single_second.arg(), d) < 1e-9);
        }
    }

    #[test]
    fn quantized_search_never_beats_continuous() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let model = random_cascade(&mut rng, 2, 2).double_only();
        let f = RankOneFactors::from_matrix(&model.inter).unwrap();
        let (p1, p2) = cooperative_phases(
            PanelLabel::I1,
            PanelLabel::I2,
            CascadeVectors { first_to_rx: &[c(1.0, 0.0); 2], tx_to_second: &[c(1.0, 0.0); 2], ..model.vectors() },
            &f,
        )
        .unwrap();
        let cont = model.response(&[p1.coefficients, p2.coefficients]).norm();
        let q = exhaustive_phase_search(&model, 3).unwrap();
        assert!(q.gain <= cont * (1.0 + 1e-12));
        assert!(q.gain >= (PI / 8.0).cos().powi(2) * cont);
    }

    #[test]
    fn one_bit_single_element() {
        let model = SingleReflection { direct: c(0.0, 0.0), to_rx: vec![c(1.0, 0.0)], from_tx: vec![c(1.0, 0.0)] };
        let q = exhaustive_phase_search(&model, 1).unwrap();
        // both +1 and -1 give |h| = 1; tie keeps index 0
        assert_eq!(q.indices, vec![vec![0]]);
        let model = SingleReflection { direct: c(-0.5, 0.0), to_rx: vec![c(1.0, 0.0)], from_tx: vec![c(1.0, 0.0)] };
        let q = exhaustive_phase_search(&model, 1).unwrap();
        assert_eq!(q.indices, vec![vec![1]]);
        assert!((q.gain - 1.5).abs() < 1e-15);
    }

    #[test]
    fn single_panel_quantization_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let model = SingleReflection { direct: Complex::from_polar(0.4, 1.0), to_rx: random_vec(&mut rng, 3), from_tx: random_vec(&mut rng, 3) };
        let best = model.direct.norm() + model.to_rx.iter().zip(&model.from_tx).map(|(a, b)| a.norm() * b.norm()).sum::<f64>();
        let q = exhaustive_phase_search(&model, 4).unwrap();
        assert!(q.gain <= best * (1.0 + 1e-12));
        assert!(q.gain >= best * (PI / 16.0).cos());
    }

    #[test]
    fn search_guard() {
        let model = SingleReflection { direct: c(0.0, 0.0), to_rx: vec![c(1.0, 0.0); 8], from_tx: vec![c(1.0, 0.0); 8] };
        assert!(matches!(exhaustive_phase_search(&model, 3), Err(Error::SearchTooLarge { .. })));
    }

    #[test]
    fn ascent_keeps_optimal_single_profile() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = SingleReflection { direct: Complex::from_polar(0.7, 0.2), to_rx: random_vec(&mut rng, 6), from_tx: random_vec(&mut rng, 6) };
        let p = single_irs_phases(PanelLabel::I, model.direct, &model.to_rx, &model.from_tx).unwrap();
        let start = model.response(std::slice::from_ref(&p.coefficients)).norm();
        let out = coordinate_ascent_refine(&model, &[p.coefficients], 10, 1e-12).unwrap();
        assert!((out.gain - start).abs() <= 1e-12 * start);
        assert_eq!(out.sweeps, 1);
    }

    #[test]
    fn ascent_from_random_start_on_single_panel() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10 {
            let model = SingleReflection { direct: Complex::from_polar(0.5, rng.random_range(-PI..PI)), to_rx: random_vec(&mut rng, 8), from_tx: random_vec(&mut rng, 8) };
            let best = model.direct.norm() + model.to_rx.iter().zip(&model.from_tx).map(|(a, b)| a.norm() * b.norm()).sum::<f64>();
            let init: Vec<_> = (0..8).map(|_| cis(rng.random_range(-PI..PI))).collect();
            // element-wise alignment converges linearly; three sweeps are
            // not enough in general, so give it a generous cap
            let out = coordinate_ascent_refine(&model, &[init], 2000, 1e-15).unwrap();
            assert!((best - out.gain) <= 1e-9 * best, "{} vs {best}", out.gain);
        }
    }

    #[test]
    fn ascent_matches_or_beats_cooperative_design() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..10 {
            let model = random_cascade(&mut rng, 4, 4);
            let f = RankOneFactors::from_matrix(&model.inter).unwrap();
            let (p1, p2) = cooperative_phases(PanelLabel::I1, PanelLabel::I2, model.vectors(), &f).unwrap();
            let designed = model.response(&[p1.coefficients, p2.coefficients]).norm();
            let ones = vec![vec![c(1.0, 0.0); 4]; 2];
            let out = coordinate_ascent_refine(&model, &ones, 200, 1e-14).unwrap();
            assert!(out.gain >= designed - 1e-9, "{} < {designed}", out.gain);
            assert!(out.history.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-12)));
        }
    }

    #[test]
    fn default_coefficients_match_override() {
        struct Plain<'a>(&'a CascadedReflection<f64>);
        impl ReflectionModel<f64> for Plain<'_> {
            fn panel_sizes(&self) -> Vec<usize> {
                self.0.panel_sizes()
            }
            fn response(&self, p: &[Vec<Complex<f64>>]) -> Complex<f64> {
                self.0.response(p)
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = random_cascade(&mut rng, 3, 2);
        let profiles = vec![random_vec(&mut rng, 3).iter().map(|z| z / z.norm()).collect(), random_vec(&mut rng, 2).iter().map(|z| z / z.norm()).collect::<Vec<_>>()];
        for panel in 0..2 {
            let a = model.panel_coefficients(&profiles, panel);
            let b = Plain(&model).panel_coefficients(&profiles, panel);
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).norm() < 1e-12);
            }
        }
    }
}
