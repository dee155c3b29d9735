//! Per-hop rates and end-to-end decode-and-forward capacity.
//!
//! Two families live here: closed forms that only need the scenario, and
//! synthesized capacities that build the scene, draw every link, design the
//! reflection phases and evaluate the resulting scalar channels. The bounds
//! for the cooperative deployment and the helpers used to study scaling and
//! the element split sit alongside.

use num_complex::Complex;
use rayon::prelude::*;

use crate::beamforming::{
    coordinate_ascent_refine, cooperative_phases, decompose_inter_irs, single_irs_phases,
    CascadedReflection, PhaseProfile, ReflectionModel, SingleReflection,
};
use crate::channel::{los_channel, rician_channel, CMatrix, Endpoint, LinkChannel, LinkEnd};
use crate::error::{Error, Result};
use crate::geometry::{build_scene, split_counts, Deployment, NodeLabel, PanelLabel, Scenario, Scene};
use crate::scalar::{angular_distance, Real};

/// Sweep cap for [`Strategy::CoordinateAscent`].
pub const ASCENT_SWEEPS: usize = 200;
/// Relative stopping tolerance for [`Strategy::CoordinateAscent`].
pub const ASCENT_TOLERANCE: f64 = 1e-12;

/// Which hop of the two-slot relay protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Hop {
    SourceRelay,
    RelayDestination,
}

/// How reflection phases are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Strategy {
    /// Analytic single-panel or cooperative design.
    #[default]
    ClosedForm,
    /// Analytic design refined by element-wise ascent.
    CoordinateAscent,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::ClosedForm => "closed-form",
            Strategy::CoordinateAscent => "ascent",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "closed-form" | "closed_form" => Ok(Strategy::ClosedForm),
            "ascent" | "coordinate-ascent" | "coordinate_ascent" => Ok(Strategy::CoordinateAscent),
            other => Err(Error::Config(format!("unknown strategy '{other}'"))),
        }
    }
}

/// Link classes that can carry their own Rician factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LinkKind {
    /// Node to node.
    Direct,
    /// Node to panel or panel to node.
    NodePanel,
    /// Panel to panel.
    PanelPanel,
}

impl LinkKind {
    pub fn of(link: &LinkChannel<impl Real>) -> Self {
        match (link.tx, link.rx) {
            (LinkEnd::Node(_), LinkEnd::Node(_)) => LinkKind::Direct,
            (LinkEnd::Panel(_), LinkEnd::Panel(_)) => LinkKind::PanelPanel,
            _ => LinkKind::NodePanel,
        }
    }
}

/// Rician fading parameters for one draw (or the first of a series).
#[derive(Debug, Clone, PartialEq)]
pub struct RicianSpec<T> {
    /// Linear Rician factor; infinity gives pure LoS.
    pub tau: T,
    pub seed: u64,
    /// Per-class factors replacing `tau`.
    pub overrides: Vec<(LinkKind, T)>,
}

impl<T: Real> RicianSpec<T> {
    pub fn new(tau: T, seed: u64) -> Self {
        Self {
            tau,
            seed,
            overrides: Vec::new(),
        }
    }

    pub fn tau_for(&self, kind: LinkKind) -> T {
        self.overrides
            .iter()
            .rev()
            .find(|(k, _)| *k == kind)
            .map_or(self.tau, |&(_, t)| t)
    }
}

/// Channel the rates are evaluated on. Phases are always designed on LoS.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum ChannelSource<T> {
    #[default]
    Los,
    Rician(RicianSpec<T>),
}

/// What produced the numbers of a [`CapacityReport`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Design {
    /// A closed-form expression; no channel was synthesized.
    Formula,
    /// Synthesized channels with the analytic phase designs.
    AnalyticPhases,
    /// Synthesized channels with ascent-refined phases.
    RefinedPhases,
}

/// Scalar channel of one hop and its constituent paths.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveChannel<T> {
    pub hop: Hop,
    pub total: Complex<T>,
    pub direct: Complex<T>,
    /// Single reflections, one per panel in path order.
    pub single_terms: Vec<Complex<T>>,
    /// Double reflection (cooperative hops only).
    pub double_term: Option<Complex<T>>,
}

/// Measured distance from the favorable channel conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FavorableDeviation<T> {
    /// Largest element phase offset from its panel's coherent direction.
    pub element: T,
    /// Largest pairwise phase gap among the double reflection, both single
    /// reflections and the direct path.
    pub alignment: T,
}

/// Rates and capacity of one deployment.
#[derive(Debug, Clone, PartialEq)]
pub struct CapacityReport<T> {
    pub deployment: Deployment,
    pub elements: usize,
    pub rho: Option<T>,
    pub rate_sr: T,
    pub rate_rd: T,
    pub capacity: T,
    pub lower_bound: Option<T>,
    pub upper_bound: Option<T>,
    pub design_used: Design,
    /// Per-hop channels when synthesized, empty for formulas.
    pub hops: Vec<EffectiveChannel<T>>,
    /// Cooperative deployments only; worst of the two hops.
    pub favorable: Option<FavorableDeviation<T>>,
}

impl<T: Real> CapacityReport<T> {
    fn from_rates(deployment: Deployment, elements: usize, rate_sr: T, rate_rd: T, design: Design) -> Self {
        Self {
            deployment,
            elements,
            rho: None,
            rate_sr,
            rate_rd,
            capacity: df_capacity(rate_sr, rate_rd),
            lower_bound: None,
            upper_bound: None,
            design_used: design,
            hops: Vec::new(),
            favorable: None,
        }
    }
}

/// `0.5 min(r_SR, r_RD)`: the two-slot decode-and-forward bottleneck.
pub fn df_capacity<T: Real>(rate_sr: T, rate_rd: T) -> T {
    T::lit(0.5) * rate_sr.min(rate_rd)
}

/// `log2(1 + P |h|^2 / noise)`.
pub fn rate_from_gain<T: Real>(h: Complex<T>, power: T, noise: T) -> T {
    (T::one() + power * h.norm_sqr() / noise).log2()
}

fn rate_from_amplitude<T: Real>(amplitude: T, power: T, noise: T) -> T {
    (T::one() + power * amplitude * amplitude / noise).log2()
}

/// Amplitude of the unaided hop, `sqrt(beta0) / L^(alpha/2)`.
pub fn direct_amplitude<T: Real>(s: &Scenario<T>) -> T {
    s.ref_gain.sqrt() / s.half_distance.powf(s.pathloss_exponent / T::lit(2.0))
}

/// Coherent single-reflection amplitude of `m` elements at altitude
/// `altitude` above one end of a hop,
/// `m beta0 / (H^(alpha/2) (L^2 + H^2)^(alpha/4))`.
pub fn single_amplitude<T: Real>(s: &Scenario<T>, m: usize, altitude: T) -> T {
    let a = s.pathloss_exponent;
    let l = s.half_distance;
    T::from_count(m) * s.ref_gain
        / (altitude.powf(a / T::lit(2.0)) * (l * l + altitude * altitude).powf(a / T::lit(4.0)))
}

/// Distance between the centers of the panel near S and the panel near R.
pub fn inter_panel_distance<T: Real>(s: &Scenario<T>) -> T {
    let dh = s.altitude_relay_panel - s.altitude_edge_panel;
    (s.half_distance * s.half_distance + dh * dh).sqrt()
}

/// Coherent double-reflection amplitude,
/// `M1 M2 beta0^(3/2) / (H1 H2 D_12)^(alpha/2)`.
pub fn double_amplitude<T: Real>(s: &Scenario<T>, m1: usize, m2: usize) -> T {
    let h = s.altitude_relay_panel * s.altitude_edge_panel * inter_panel_distance(s);
    T::from_count(m1) * T::from_count(m2) * s.ref_gain.powf(T::lit(1.5))
        / h.powf(s.pathloss_exponent / T::lit(2.0))
}

/// Both hops unaided.
pub fn capacity_no_irs<T: Real>(s: &Scenario<T>) -> CapacityReport<T> {
    let g = direct_amplitude(s);
    CapacityReport::from_rates(
        Deployment::NoIrs,
        0,
        rate_from_amplitude(g, s.power_source, s.noise_power),
        rate_from_amplitude(g, s.power_relay, s.noise_power),
        Design::Formula,
    )
}

/// One panel of `m` elements above R serving both hops coherently.
pub fn capacity_near_r_closed_form<T: Real>(s: &Scenario<T>, m: usize) -> CapacityReport<T> {
    let amp = direct_amplitude(s) + single_amplitude(s, m, s.altitude_relay_panel);
    CapacityReport::from_rates(
        Deployment::NearR,
        m,
        rate_from_amplitude(amp, s.power_source, s.noise_power),
        rate_from_amplitude(amp, s.power_relay, s.noise_power),
        Design::Formula,
    )
}

/// Which edge a single panel sits at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Edge {
    Source,
    Destination,
}

impl Edge {
    pub fn deployment(self) -> Deployment {
        match self {
            Edge::Source => Deployment::NearS,
            Edge::Destination => Deployment::NearD,
        }
    }
}

/// One panel of `m` elements near S or near D. Only the adjacent hop is
/// aided, so the other hop caps the capacity at the unaided value.
pub fn capacity_near_s_or_d_closed_form<T: Real>(
    s: &Scenario<T>,
    m: usize,
    edge: Edge,
) -> CapacityReport<T> {
    let g = direct_amplitude(s);
    let aided = g + single_amplitude(s, m, s.altitude_edge_panel);
    let (sr, rd) = match edge {
        Edge::Source => (aided, g),
        Edge::Destination => (g, aided),
    };
    CapacityReport::from_rates(
        edge.deployment(),
        m,
        rate_from_amplitude(sr, s.power_source, s.noise_power),
        rate_from_amplitude(rd, s.power_relay, s.noise_power),
        Design::Formula,
    )
}

fn hop_power<T: Real>(s: &Scenario<T>, hop: Hop) -> T {
    match hop {
        Hop::SourceRelay => s.power_source,
        Hop::RelayDestination => s.power_relay,
    }
}

/// Lower bound for the cooperative deployment: the coherent double
/// reflection minus the direct path, clamped at zero. Uses the source power.
pub fn multi_capacity_lower_bound<T: Real>(s: &Scenario<T>, m: usize, rho: T) -> T {
    let (m1, m2, _) = split_counts(m, rho);
    let amp = (double_amplitude(s, m1, m2) - direct_amplitude(s)).max(T::zero());
    T::lit(0.5) * rate_from_amplitude(amp, hop_power(s, Hop::SourceRelay), s.noise_power)
}

/// Upper bound for the cooperative deployment: the sum of all path
/// amplitudes. Each single-reflection term uses the altitude of the panel
/// it goes through. Uses the source power.
pub fn multi_capacity_upper_bound<T: Real>(s: &Scenario<T>, m: usize, rho: T) -> T {
    let amp = multi_amplitude_sum(s, m, rho);
    T::lit(0.5) * rate_from_amplitude(amp, hop_power(s, Hop::SourceRelay), s.noise_power)
}

/// Amplitude sum inside [`multi_capacity_upper_bound`].
pub fn multi_amplitude_sum<T: Real>(s: &Scenario<T>, m: usize, rho: T) -> T {
    let (m1, m2, _) = split_counts(m, rho);
    direct_amplitude(s)
        + double_amplitude(s, m1, m2)
        + single_amplitude(s, m1, s.altitude_edge_panel)
        + single_amplitude(s, m2, s.altitude_relay_panel)
}

/// Reflected paths of one hop.
#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum HopPath<T> {
    Direct,
    Single {
        panel: PanelLabel,
        tx_panel: LinkChannel<T>,
        panel_rx: LinkChannel<T>,
    },
    Cascade {
        first: PanelLabel,
        second: PanelLabel,
        tx_first: LinkChannel<T>,
        first_rx: LinkChannel<T>,
        tx_second: LinkChannel<T>,
        second_rx: LinkChannel<T>,
        /// First panel to second panel.
        inter: LinkChannel<T>,
    },
}

/// All links of one hop.
#[derive(Debug, Clone, PartialEq)]
pub struct HopLinks<T> {
    pub hop: Hop,
    pub direct: LinkChannel<T>,
    pub path: HopPath<T>,
}

fn column<T: Real>(m: &CMatrix<T>) -> Vec<Complex<T>> {
    m.as_vector().to_vec()
}

impl<T: Real> HopLinks<T> {
    pub fn direct(s: &Scenario<T>, hop: Hop, tx: Endpoint<'_, T>, rx: Endpoint<'_, T>) -> Result<Self> {
        Ok(Self {
            hop,
            direct: los_channel(s, tx, rx)?,
            path: HopPath::Direct,
        })
    }

    pub fn single(
        s: &Scenario<T>,
        hop: Hop,
        tx: Endpoint<'_, T>,
        rx: Endpoint<'_, T>,
        panel: Endpoint<'_, T>,
    ) -> Result<Self> {
        let LinkEnd::Panel(label) = panel.label() else {
            return Err(Error::InvalidScenario("reflecting endpoint must be a panel".into()));
        };
        Ok(Self {
            hop,
            direct: los_channel(s, tx, rx)?,
            path: HopPath::Single {
                panel: label,
                tx_panel: los_channel(s, tx, panel)?,
                panel_rx: los_channel(s, panel, rx)?,
            },
        })
    }

    /// `first` is the panel next to the transmitter, `second` the one next
    /// to the receiver.
    pub fn cascade(
        s: &Scenario<T>,
        hop: Hop,
        tx: Endpoint<'_, T>,
        rx: Endpoint<'_, T>,
        first: Endpoint<'_, T>,
        second: Endpoint<'_, T>,
    ) -> Result<Self> {
        let (LinkEnd::Panel(l1), LinkEnd::Panel(l2)) = (first.label(), second.label()) else {
            return Err(Error::InvalidScenario("reflecting endpoints must be panels".into()));
        };
        Ok(Self {
            hop,
            direct: los_channel(s, tx, rx)?,
            path: HopPath::Cascade {
                first: l1,
                second: l2,
                tx_first: los_channel(s, tx, first)?,
                first_rx: los_channel(s, first, rx)?,
                tx_second: los_channel(s, tx, second)?,
                second_rx: los_channel(s, second, rx)?,
                inter: los_channel(s, first, second)?,
            },
        })
    }

    /// Every link of the hop in a fixed order (direct first).
    pub fn links_mut(&mut self) -> Vec<&mut LinkChannel<T>> {
        let mut out = vec![&mut self.direct];
        match &mut self.path {
            HopPath::Direct => {}
            HopPath::Single { tx_panel, panel_rx, .. } => {
                out.push(tx_panel);
                out.push(panel_rx);
            }
            HopPath::Cascade {
                tx_first,
                first_rx,
                tx_second,
                second_rx,
                inter,
                ..
            } => {
                out.extend([tx_first, first_rx, tx_second, second_rx, inter]);
            }
        }
        out
    }

    /// Replaces every link by a Rician draw. Link `i` uses stream
    /// `stream_base + i` of generator `seed`.
    pub fn fade(&mut self, spec: &RicianSpec<T>, seed: u64, stream_base: u64) -> Result<()> {
        for (i, link) in self.links_mut().into_iter().enumerate() {
            let tau = spec.tau_for(LinkKind::of(link));
            *link = rician_channel(link, tau, seed, stream_base + i as u64)?;
        }
        Ok(())
    }

    fn single_model(
        direct: &LinkChannel<T>,
        tx_panel: &LinkChannel<T>,
        panel_rx: &LinkChannel<T>,
        faded: bool,
    ) -> SingleReflection<T> {
        let pick = |l: &LinkChannel<T>| if faded { l.effective().clone() } else { l.los.clone() };
        SingleReflection {
            direct: pick(direct).scalar(),
            to_rx: column(&pick(panel_rx)),
            from_tx: column(&pick(tx_panel)),
        }
    }

    /// Cascaded model of a cooperative hop, on LoS or the faded channel.
    pub fn cascade_model(&self, faded: bool) -> Option<CascadedReflection<T>> {
        let HopPath::Cascade {
            tx_first,
            first_rx,
            tx_second,
            second_rx,
            inter,
            ..
        } = &self.path
        else {
            return None;
        };
        let pick = |l: &LinkChannel<T>| if faded { l.effective().clone() } else { l.los.clone() };
        Some(CascadedReflection {
            direct: pick(&self.direct).scalar(),
            tx_to_first: column(&pick(tx_first)),
            first_to_rx: column(&pick(first_rx)),
            tx_to_second: column(&pick(tx_second)),
            second_to_rx: column(&pick(second_rx)),
            inter: pick(inter),
        })
    }

    /// Phase profiles for this hop, designed on the LoS components.
    pub fn design(&self, strategy: Strategy) -> Result<Vec<PhaseProfile<T>>> {
        match &self.path {
            HopPath::Direct => Ok(Vec::new()),
            HopPath::Single {
                panel,
                tx_panel,
                panel_rx,
            } => {
                let model = Self::single_model(&self.direct, tx_panel, panel_rx, false);
                let p = single_irs_phases(*panel, model.direct, &model.to_rx, &model.from_tx)?;
                refine(&model, vec![p], strategy)
            }
            HopPath::Cascade {
                first,
                second,
                inter,
                ..
            } => {
                let model = self.cascade_model(false).expect("cascade path");
                let factors = decompose_inter_irs(inter)?;
                let (p1, p2) = cooperative_phases(*first, *second, model.vectors(), &factors)?;
                refine(&model, vec![p1, p2], strategy)
            }
        }
    }

    /// Effective channel with the given profiles, on the faded links when
    /// present.
    pub fn evaluate(&self, profiles: &[PhaseProfile<T>]) -> Result<EffectiveChannel<T>> {
        let want = match self.path {
            HopPath::Direct => 0,
            HopPath::Single { .. } => 1,
            HopPath::Cascade { .. } => 2,
        };
        if profiles.len() != want {
            return Err(Error::DimensionMismatch(format!(
                "hop needs {want} profiles, got {}",
                profiles.len()
            )));
        }
        match &self.path {
            HopPath::Direct => {
                let direct = self.direct.effective().scalar();
                Ok(EffectiveChannel {
                    hop: self.hop,
                    total: direct,
                    direct,
                    single_terms: Vec::new(),
                    double_term: None,
                })
            }
            HopPath::Single {
                tx_panel, panel_rx, ..
            } => {
                let model = Self::single_model(&self.direct, tx_panel, panel_rx, true);
                check_profile(&profiles[0], model.to_rx.len())?;
                let single = model.response(&[profiles[0].coefficients.clone()]) - model.direct;
                Ok(EffectiveChannel {
                    hop: self.hop,
                    total: model.direct + single,
                    direct: model.direct,
                    single_terms: vec![single],
                    double_term: None,
                })
            }
            HopPath::Cascade { .. } => {
                let model = self.cascade_model(true).expect("cascade path");
                check_profile(&profiles[0], model.tx_to_first.len())?;
                check_profile(&profiles[1], model.tx_to_second.len())?;
                let t = model.terms(&profiles[0].coefficients, &profiles[1].coefficients);
                Ok(EffectiveChannel {
                    hop: self.hop,
                    total: t.total(),
                    direct: t.direct,
                    single_terms: vec![t.single_first, t.single_second],
                    double_term: Some(t.double),
                })
            }
        }
    }
}

fn check_profile<T: Real>(p: &PhaseProfile<T>, len: usize) -> Result<()> {
    if p.len() == len {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!(
            "profile for {} has {} coefficients, panel has {len}",
            p.panel.as_str(),
            p.len()
        )))
    }
}

fn refine<T: Real, M: ReflectionModel<T>>(
    model: &M,
    profiles: Vec<PhaseProfile<T>>,
    strategy: Strategy,
) -> Result<Vec<PhaseProfile<T>>> {
    if strategy == Strategy::ClosedForm {
        return Ok(profiles);
    }
    let init: Vec<_> = profiles.iter().map(|p| p.coefficients.clone()).collect();
    let out = coordinate_ascent_refine(model, &init, ASCENT_SWEEPS, T::lit(ASCENT_TOLERANCE))?;
    Ok(profiles
        .into_iter()
        .zip(out.profiles)
        .map(|(p, coefficients)| PhaseProfile {
            panel: p.panel,
            coefficients,
        })
        .collect())
}

/// Synthesizes the LoS links of both hops for a scene.
///
/// Single panels near R serve both hops; a panel near S (near D) serves
/// only the first (second) hop. In the cooperative layout the first hop
/// runs through I1 then I2 and the second hop through I2 then I3.
pub fn synthesize_hops<T: Real>(s: &Scenario<T>, scene: &Scene<T>) -> Result<[HopLinks<T>; 2]> {
    let node = |l: NodeLabel| Endpoint::Node(l, scene.node(l));
    let panel = |l: PanelLabel| {
        scene
            .panel(l)
            .map(Endpoint::Panel)
            .ok_or_else(|| Error::InvalidScenario(format!("scene has no panel {}", l.as_str())))
    };
    let (src, rel, dst) = (node(NodeLabel::S), node(NodeLabel::R), node(NodeLabel::D));
    let (sr, rd) = (Hop::SourceRelay, Hop::RelayDestination);
    Ok(match scene.deployment {
        Deployment::NoIrs => [
            HopLinks::direct(s, sr, src, rel)?,
            HopLinks::direct(s, rd, rel, dst)?,
        ],
        Deployment::NearR => {
            let i = panel(PanelLabel::I)?;
            [
                HopLinks::single(s, sr, src, rel, i)?,
                HopLinks::single(s, rd, rel, dst, i)?,
            ]
        }
        Deployment::NearS => [
            HopLinks::single(s, sr, src, rel, panel(PanelLabel::I)?)?,
            HopLinks::direct(s, rd, rel, dst)?,
        ],
        Deployment::NearD => [
            HopLinks::direct(s, sr, src, rel)?,
            HopLinks::single(s, rd, rel, dst, panel(PanelLabel::I)?)?,
        ],
        Deployment::Multi => {
            let (i1, i2, i3) = (
                panel(PanelLabel::I1)?,
                panel(PanelLabel::I2)?,
                panel(PanelLabel::I3)?,
            );
            [
                HopLinks::cascade(s, sr, src, rel, i1, i2)?,
                HopLinks::cascade(s, rd, rel, dst, i2, i3)?,
            ]
        }
    })
}

/// Distance of a cooperative hop from the favorable channel conditions.
///
/// The element value compares each element's single-reflection phase
/// `arg(phi_m [g_{k,rx}^H]_m [g_{tx,k}]_m)` with the phase of its panel's
/// whole single reflection, so a profile that makes every single
/// reflection coherent scores zero. The alignment value is the largest
/// pairwise angular distance among the four path phases.
pub fn favorable_condition_deviation<T: Real>(
    model: &CascadedReflection<T>,
    phi1: &[Complex<T>],
    phi2: &[Complex<T>],
) -> FavorableDeviation<T> {
    let element = |row: &[Complex<T>], phi: &[Complex<T>], col: &[Complex<T>]| {
        let z: Vec<_> = row.iter().zip(phi).zip(col).map(|((r, p), c)| r * p * c).collect();
        let total: Complex<T> = z.iter().sum();
        let reference = total.arg();
        z.iter()
            .filter(|v| v.norm_sqr() > T::zero())
            .map(|v| angular_distance(v.arg(), reference))
            .fold(T::zero(), T::max)
    };
    let e1 = element(&model.first_to_rx, phi1, &model.tx_to_first);
    let e2 = element(&model.second_to_rx, phi2, &model.tx_to_second);
    let t = model.terms(phi1, phi2);
    let phases = [t.double, t.single_first, t.single_second, t.direct]
        .iter()
        .filter(|z| z.norm_sqr() > T::zero())
        .map(|z| z.arg())
        .collect::<Vec<_>>();
    let mut alignment = T::zero();
    for (i, &a) in phases.iter().enumerate() {
        for &b in &phases[i + 1..] {
            alignment = alignment.max(angular_distance(a, b));
        }
    }
    FavorableDeviation {
        element: e1.max(e2),
        alignment,
    }
}

fn assemble<T: Real>(
    s: &Scenario<T>,
    deployment: Deployment,
    hops: &[HopLinks<T>; 2],
    designs: &[Vec<PhaseProfile<T>>; 2],
    design: Design,
) -> Result<CapacityReport<T>> {
    let ch = [hops[0].evaluate(&designs[0])?, hops[1].evaluate(&designs[1])?];
    let rate_sr = rate_from_gain(ch[0].total, s.power_source, s.noise_power);
    let rate_rd = rate_from_gain(ch[1].total, s.power_relay, s.noise_power);
    let mut report = CapacityReport::from_rates(deployment, s.total_elements, rate_sr, rate_rd, design);
    report.hops = ch.into();
    if deployment == Deployment::Multi {
        let m = s.total_elements;
        report.rho = Some(s.split);
        report.lower_bound = Some(multi_capacity_lower_bound(s, m, s.split));
        report.upper_bound = Some(multi_capacity_upper_bound(s, m, s.split));
        let mut worst: Option<FavorableDeviation<T>> = None;
        for (hop, d) in hops.iter().zip(designs) {
            if let Some(model) = hop.cascade_model(true) {
                let f = favorable_condition_deviation(&model, &d[0].coefficients, &d[1].coefficients);
                worst = Some(match worst {
                    None => f,
                    Some(w) => FavorableDeviation {
                        element: w.element.max(f.element),
                        alignment: w.alignment.max(f.alignment),
                    },
                });
            }
        }
        report.favorable = worst;
    }
    Ok(report)
}

/// Streams reserved per hop when fading.
const HOP_STREAMS: u64 = 16;

/// Builds the scene, synthesizes the links, designs phases on LoS and
/// evaluates both hops on the requested channel.
pub fn achieved_capacity<T: Real>(
    s: &Scenario<T>,
    deployment: Deployment,
    strategy: Strategy,
    source: &ChannelSource<T>,
) -> Result<CapacityReport<T>> {
    let scene = build_scene(s, deployment)?;
    let mut hops = synthesize_hops(s, &scene)?;
    let designs = [hops[0].design(strategy)?, hops[1].design(strategy)?];
    if let ChannelSource::Rician(spec) = source {
        for (i, hop) in hops.iter_mut().enumerate() {
            hop.fade(spec, spec.seed, i as u64 * HOP_STREAMS)?;
        }
    }
    assemble(s, deployment, &hops, &designs, design_tag(strategy))
}

fn design_tag(strategy: Strategy) -> Design {
    match strategy {
        Strategy::ClosedForm => Design::AnalyticPhases,
        Strategy::CoordinateAscent => Design::RefinedPhases,
    }
}

/// Averages over a series of Rician draws.
#[derive(Debug, Clone, PartialEq)]
pub struct RicianSummary<T> {
    pub trials: usize,
    pub mean_rate_sr: T,
    pub mean_rate_rd: T,
    /// `0.5 min(mean_rate_sr, mean_rate_rd)`.
    pub capacity: T,
    /// Mean of the per-draw capacities.
    pub mean_trial_capacity: T,
}

/// Monte-Carlo average over `trials` draws; draw `t` uses seed
/// `spec.seed + t`. Phases are designed once on LoS. Draws run in parallel
/// and are reduced in trial order.
pub fn mean_rician_capacity<T: Real>(
    s: &Scenario<T>,
    deployment: Deployment,
    strategy: Strategy,
    spec: &RicianSpec<T>,
    trials: usize,
) -> Result<RicianSummary<T>> {
    if trials == 0 {
        return Err(Error::Config("trials must be at least 1".into()));
    }
    let scene = build_scene(s, deployment)?;
    let hops = synthesize_hops(s, &scene)?;
    let designs = [hops[0].design(strategy)?, hops[1].design(strategy)?];
    let draws: Vec<(T, T)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let seed = spec.seed.wrapping_add(t as u64);
            let mut faded = hops.clone();
            for (i, hop) in faded.iter_mut().enumerate() {
                hop.fade(spec, seed, i as u64 * HOP_STREAMS)?;
            }
            let a = faded[0].evaluate(&designs[0])?;
            let b = faded[1].evaluate(&designs[1])?;
            Ok((
                rate_from_gain(a.total, s.power_source, s.noise_power),
                rate_from_gain(b.total, s.power_relay, s.noise_power),
            ))
        })
        .collect::<Result<_>>()?;
    let n = T::from_count(trials);
    let (mut sr, mut rd, mut c) = (T::zero(), T::zero(), T::zero());
    for &(a, b) in &draws {
        sr += a;
        rd += b;
        c += df_capacity(a, b);
    }
    let (mean_rate_sr, mean_rate_rd) = (sr / n, rd / n);
    Ok(RicianSummary {
        trials,
        mean_rate_sr,
        mean_rate_rd,
        capacity: df_capacity(mean_rate_sr, mean_rate_rd),
        mean_trial_capacity: c / n,
    })
}

/// Least-squares slope of `capacity(M)` against `log2 M`.
pub fn scaling_order_estimate<T: Real, F>(capacity: F, grid: &[usize]) -> Result<T>
where
    F: Fn(usize) -> Result<T>,
{
    if grid.len() < 3 {
        return Err(Error::InvalidGrid(format!(
            "slope fit needs at least 3 points, got {}",
            grid.len()
        )));
    }
    if grid[0] == 0 || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidGrid("grid must be positive and strictly increasing".into()));
    }
    let xs: Vec<T> = grid.iter().map(|&m| T::from_count(m).log2()).collect();
    let ys = grid.iter().map(|&m| capacity(m)).collect::<Result<Vec<T>>>()?;
    let n = T::from_count(grid.len());
    let mx = xs.iter().copied().fold(T::zero(), |a, b| a + b) / n;
    let my = ys.iter().copied().fold(T::zero(), |a, b| a + b) / n;
    let (mut sxy, mut sxx) = (T::zero(), T::zero());
    for (x, y) in xs.iter().zip(&ys) {
        sxy += (*x - mx) * (*y - my);
        sxx += (*x - mx) * (*x - mx);
    }
    Ok(sxy / sxx)
}

/// `2^lo, 2^(lo+1), ..., 2^hi`.
pub fn geometric_grid(lo: u32, hi: u32) -> Vec<usize> {
    (lo..=hi).map(|k| 1usize << k).collect()
}

/// What a split sweep maximizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RhoObjective {
    UpperBound,
    LowerBound,
    Achieved(Strategy),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RhoMode<T> {
    /// Argmax of `rho (1 - 2 rho)`, which governs the leading term.
    ClosedForm,
    Sweep { step: T, objective: RhoObjective },
}

/// Interior split grid `step, 2 step, ...` strictly below 1/2.
pub fn rho_grid<T: Real>(step: T) -> Result<Vec<T>> {
    if !(step > T::zero()) || !step.is_finite() {
        return Err(Error::InvalidGrid(format!("split step {step} must be positive")));
    }
    let half = T::lit(0.5);
    let n = (half / step).to_f64_lossy();
    let last = if (n - n.round()).abs() < 1e-9 {
        n.round() as usize - 1
    } else {
        n.floor() as usize
    };
    if last < 10 {
        return Err(Error::InvalidGrid(format!(
            "split step {step} gives {last} interior points, need at least 10"
        )));
    }
    Ok((1..=last).map(|k| step * T::from_count(k)).collect())
}

/// Best split for `m` elements. Sweep ties keep the smallest split;
/// splits that leave a panel empty are skipped.
pub fn optimal_rho<T: Real>(s: &Scenario<T>, m: usize, mode: RhoMode<T>) -> Result<T> {
    let (step, objective) = match mode {
        RhoMode::ClosedForm => return Ok(T::lit(0.25)),
        RhoMode::Sweep { step, objective } => (step, objective),
    };
    let each = rho_sweep(s, m, &rho_grid(step)?, objective)?;
    each.into_iter()
        .fold(None, |best: Option<(T, T)>, (rho, v)| match best {
            Some((_, bv)) if bv >= v => best,
            _ => Some((rho, v)),
        })
        .map(|(rho, _)| rho)
        .ok_or_else(|| Error::InvalidGrid("no split leaves every panel populated".into()))
}

/// Objective value at every usable split of `grid`, in grid order.
pub fn rho_sweep<T: Real>(
    s: &Scenario<T>,
    m: usize,
    grid: &[T],
    objective: RhoObjective,
) -> Result<Vec<(T, T)>> {
    let usable: Vec<T> = grid
        .iter()
        .copied()
        .filter(|&r| {
            let (m1, m2, _) = split_counts(m, r);
            m1 > 0 && m2 > 0
        })
        .collect();
    usable
        .par_iter()
        .map(|&rho| {
            let v = match objective {
                RhoObjective::UpperBound => multi_capacity_upper_bound(s, m, rho),
                RhoObjective::LowerBound => multi_capacity_lower_bound(s, m, rho),
                RhoObjective::Achieved(strategy) => {
                    let sc = s.clone().with_elements(m).with_split(rho);
                    achieved_capacity(&sc, Deployment::Multi, strategy, &ChannelSource::Los)?.capacity
                }
            };
            Ok((rho, v))
        })
        .collect()
}
