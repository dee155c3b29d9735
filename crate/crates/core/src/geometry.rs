//! Scene construction: node positions, IRS panel placement and element grids.
//!
//! The source sits at the origin, the relay at `(L, 0, 0)` and the
//! destination at `(2L, 0, 0)`. A panel near the relay hangs at altitude
//! `H1` facing straight down; panels near the source or destination sit at
//! altitude `H2` and are tilted by the downtilt angle towards the relay side.

use std::fmt;

use log::warn;

use crate::error::{Error, Result};
use crate::scalar::{Real, Vec3};

/// Alignment tolerance for panel frames.
const FRAME_TOL: f64 = 1e-9;

/// All physical parameters of one relay link, in linear units.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario<T> {
    /// Half the source-destination distance `L` (m).
    pub half_distance: T,
    /// Altitude of the panel near the relay, `H1` (m).
    pub altitude_relay_panel: T,
    /// Altitude of the panels near source/destination, `H2` (m).
    pub altitude_edge_panel: T,
    /// Downtilt of the edge panels (rad).
    pub downtilt: T,
    pub wavelength: T,
    /// Channel power gain at the 1 m reference distance (linear).
    pub ref_gain: T,
    pub pathloss_exponent: T,
    pub power_source: T,
    pub power_relay: T,
    pub noise_power: T,
    pub element_spacing: T,
    pub total_elements: usize,
    /// Fraction of the element budget given to each edge panel (multi-IRS).
    pub split: T,
    /// Explicit `(count_h, count_v)` per panel in build order; empty means
    /// near-square factorization.
    pub grids: Vec<(usize, usize)>,
}

impl<T: Real> Default for Scenario<T> {
    /// 6 GHz link with a 1 km source-destination span and equal 30 dBm powers.
    fn default() -> Self {
        let wavelength = T::lit(0.05);
        Self {
            half_distance: T::lit(500.0),
            altitude_relay_panel: T::lit(5.0),
            altitude_edge_panel: T::lit(4.0),
            downtilt: T::FRAC_PI_4(),
            wavelength,
            ref_gain: T::lit(1e-3),
            pathloss_exponent: T::lit(2.0),
            power_source: T::one(),
            power_relay: T::one(),
            noise_power: T::lit(1e-12),
            element_spacing: wavelength / T::lit(4.0),
            total_elements: 100,
            split: T::lit(0.25),
            grids: Vec::new(),
        }
    }
}

impl<T: Real> Scenario<T> {
    pub fn with_elements(mut self, m: usize) -> Self {
        self.total_elements = m;
        self
    }

    pub fn with_split(mut self, rho: T) -> Self {
        self.split = rho;
        self
    }

    /// Checks the deployment-independent invariants.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("half_distance", self.half_distance),
            ("altitude_relay_panel", self.altitude_relay_panel),
            ("altitude_edge_panel", self.altitude_edge_panel),
            ("wavelength", self.wavelength),
            ("ref_gain", self.ref_gain),
            ("pathloss_exponent", self.pathloss_exponent),
            ("power_source", self.power_source),
            ("power_relay", self.power_relay),
            ("noise_power", self.noise_power),
            ("element_spacing", self.element_spacing),
        ];
        for (name, v) in positive {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::InvalidScenario(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if !self.downtilt.is_finite() {
            return Err(Error::InvalidScenario("downtilt must be finite".into()));
        }
        if self.altitude_edge_panel >= self.altitude_relay_panel {
            return Err(Error::InvalidScenario(format!(
                "edge-panel altitude {} must be below relay-panel altitude {}",
                self.altitude_edge_panel, self.altitude_relay_panel
            )));
        }
        if self.pathloss_exponent < T::lit(2.0) {
            warn!(
                "path-loss exponent {} is below free-space value 2",
                self.pathloss_exponent
            );
        }
        Ok(())
    }

    /// `(M1, M2, M3)` for the multi-IRS split, `M1 = M3 = round(rho M)`.
    ///
    /// Unlike [`build_scene`] this does not require every panel to be
    /// populated; closed-form bounds accept `M1 = 0`.
    pub fn multi_split(&self) -> (usize, usize, usize) {
        split_counts(self.total_elements, self.split)
    }

    pub fn source(&self) -> Vec3<T> {
        Vec3::zero()
    }

    pub fn relay(&self) -> Vec3<T> {
        Vec3::new(self.half_distance, T::zero(), T::zero())
    }

    pub fn destination(&self) -> Vec3<T> {
        Vec3::new(self.half_distance + self.half_distance, T::zero(), T::zero())
    }

    pub fn relay_panel_center(&self) -> Vec3<T> {
        Vec3::new(self.half_distance, T::zero(), self.altitude_relay_panel)
    }

    pub fn source_panel_center(&self) -> Vec3<T> {
        Vec3::new(T::zero(), T::zero(), self.altitude_edge_panel)
    }

    pub fn destination_panel_center(&self) -> Vec3<T> {
        Vec3::new(
            self.half_distance + self.half_distance,
            T::zero(),
            self.altitude_edge_panel,
        )
    }
}

/// `(M1, M2, M3)` with `M1 = M3 = round(rho M)` and `M2 = M - 2 M1`
/// (saturating at zero).
pub fn split_counts<T: Real>(total: usize, rho: T) -> (usize, usize, usize) {
    let edge = (rho * T::from_count(total))
        .round()
        .to_usize()
        .unwrap_or(0);
    let middle = total.saturating_sub(2 * edge);
    (edge, middle, edge)
}

/// Where the reflecting elements go.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Deployment {
    NoIrs,
    NearS,
    NearR,
    NearD,
    Multi,
}

impl Deployment {
    pub const ALL: [Deployment; 5] = [
        Deployment::NoIrs,
        Deployment::NearS,
        Deployment::NearR,
        Deployment::NearD,
        Deployment::Multi,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Deployment::NoIrs => "no-irs",
            Deployment::NearS => "near-s",
            Deployment::NearR => "near-r",
            Deployment::NearD => "near-d",
            Deployment::Multi => "multi",
        }
    }
}

impl fmt::Display for Deployment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Deployment {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Deployment::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown deployment '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeLabel {
    S,
    R,
    D,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodePoint<T> {
    pub label: NodeLabel,
    pub position: Vec3<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PanelLabel {
    /// Single-IRS panel.
    I,
    /// Multi-IRS panel near the source.
    I1,
    /// Multi-IRS panel near the relay.
    I2,
    /// Multi-IRS panel near the destination.
    I3,
}

impl PanelLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            PanelLabel::I => "I",
            PanelLabel::I1 => "I1",
            PanelLabel::I2 => "I2",
            PanelLabel::I3 => "I3",
        }
    }
}

/// A uniform planar array of reflecting elements.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel<T> {
    pub label: PanelLabel,
    pub center: Vec3<T>,
    pub axis_h: Vec3<T>,
    pub axis_v: Vec3<T>,
    pub normal: Vec3<T>,
    pub count_h: usize,
    pub count_v: usize,
    pub spacing: T,
}

impl<T: Real> Panel<T> {
    /// Builds a panel; the normal is `axis_h x axis_v`.
    pub fn new(
        label: PanelLabel,
        center: Vec3<T>,
        axis_h: Vec3<T>,
        axis_v: Vec3<T>,
        count_h: usize,
        count_v: usize,
        spacing: T,
    ) -> Result<Self> {
        let tol = T::lit(FRAME_TOL);
        if (axis_h.norm() - T::one()).abs() > tol {
            return Err(Error::NonUnitDirection(axis_h.norm().to_f64_lossy()));
        }
        if (axis_v.norm() - T::one()).abs() > tol {
            return Err(Error::NonUnitDirection(axis_v.norm().to_f64_lossy()));
        }
        if axis_h.dot(axis_v).abs() > tol {
            return Err(Error::InvalidScenario(
                "panel axes are not orthogonal".into(),
            ));
        }
        if count_h == 0 || count_v == 0 {
            return Err(Error::EmptyPanel {
                panel: label.as_str(),
                count: 0,
            });
        }
        Ok(Self {
            label,
            center,
            axis_h,
            axis_v,
            normal: axis_h.cross(axis_v),
            count_h,
            count_v,
            spacing,
        })
    }

    pub fn element_count(&self) -> usize {
        self.count_h * self.count_v
    }

    /// Element offsets from the panel center, horizontal index major
    /// (matches `w_h (x) w_v`).
    pub fn element_offsets(&self) -> Vec<Vec3<T>> {
        let half_h = T::from_count(self.count_h - 1) / T::lit(2.0);
        let half_v = T::from_count(self.count_v - 1) / T::lit(2.0);
        let mut out = Vec::with_capacity(self.element_count());
        for ih in 0..self.count_h {
            let oh = self.axis_h * (self.spacing * (T::from_count(ih) - half_h));
            for iv in 0..self.count_v {
                let ov = self.axis_v * (self.spacing * (T::from_count(iv) - half_v));
                out.push(oh + ov);
            }
        }
        out
    }

    /// Element positions, same order as [`Panel::element_offsets`].
    pub fn element_positions(&self) -> Vec<Vec3<T>> {
        self.element_offsets()
            .into_iter()
            .map(|o| self.center + o)
            .collect()
    }

    /// Whether a point is on the reflecting (front) side of the panel.
    pub fn faces(&self, point: Vec3<T>) -> bool {
        self.normal.dot(self.center - point) < T::zero()
    }
}

/// Near-square factorization: `count_h` is `floor(sqrt(m))` lowered to the
/// nearest divisor of `m`.
pub fn factor_grid(m: usize) -> (usize, usize) {
    assert!(m > 0, "cannot factor an empty panel");
    let mut h = (m as f64).sqrt().floor() as usize;
    while h * h > m {
        h -= 1;
    }
    while (h + 1) * (h + 1) <= m {
        h += 1;
    }
    while !m.is_multiple_of(h) {
        h -= 1;
    }
    (h, m / h)
}

/// Node positions and populated panels for one deployment.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene<T> {
    pub deployment: Deployment,
    pub nodes: [NodePoint<T>; 3],
    pub panels: Vec<Panel<T>>,
}

impl<T: Real> Scene<T> {
    pub fn node(&self, label: NodeLabel) -> Vec3<T> {
        self.nodes
            .iter()
            .find(|n| n.label == label)
            .map(|n| n.position)
            .expect("all three nodes are always present")
    }

    pub fn panel(&self, label: PanelLabel) -> Option<&Panel<T>> {
        self.panels.iter().find(|p| p.label == label)
    }

    /// `(panel, node)` pairs where a served node sits behind the panel.
    pub fn backside_nodes(&self) -> Vec<(PanelLabel, NodeLabel)> {
        let mut out = Vec::new();
        for p in &self.panels {
            let served: &[NodeLabel] = match (self.deployment, p.label) {
                (Deployment::NearS, _) | (_, PanelLabel::I1) => &[NodeLabel::S, NodeLabel::R],
                (Deployment::NearD, _) | (_, PanelLabel::I3) => &[NodeLabel::R, NodeLabel::D],
                _ => &[NodeLabel::S, NodeLabel::R, NodeLabel::D],
            };
            for &n in served {
                if !p.faces(self.node(n)) {
                    out.push((p.label, n));
                }
            }
        }
        out
    }
}

fn panel_grid<T: Real>(
    scenario: &Scenario<T>,
    index: usize,
    label: PanelLabel,
    count: usize,
) -> Result<(usize, usize)> {
    if count == 0 {
        return Err(Error::EmptyPanel {
            panel: label.as_str(),
            count: 0,
        });
    }
    match scenario.grids.get(index) {
        Some(&(h, v)) if h * v == count => Ok((h, v)),
        Some(&(h, v)) => Err(Error::GridMismatch { h, v, count }),
        None => Ok(factor_grid(count)),
    }
}

fn relay_panel<T: Real>(
    s: &Scenario<T>,
    label: PanelLabel,
    grid: (usize, usize),
) -> Result<Panel<T>> {
    let (o, i) = (T::zero(), T::one());
    Panel::new(
        label,
        s.relay_panel_center(),
        Vec3::new(i, o, o),
        Vec3::new(o, -i, o),
        grid.0,
        grid.1,
        s.element_spacing,
    )
}

/// Edge panel near S (`near_source`) or near D. The horizontal axis is
/// `+y`; the normal is tilted by the downtilt from straight down towards R.
fn edge_panel<T: Real>(
    s: &Scenario<T>,
    label: PanelLabel,
    near_source: bool,
    grid: (usize, usize),
) -> Result<Panel<T>> {
    let (st, ct) = (s.downtilt.sin(), s.downtilt.cos());
    let o = T::zero();
    let axis_h = Vec3::new(o, T::one(), o);
    // v = n x h, with n_S = (sin, 0, -cos) and n_D = (-sin, 0, -cos)
    let (center, axis_v) = if near_source {
        (s.source_panel_center(), Vec3::new(ct, o, st))
    } else {
        (s.destination_panel_center(), Vec3::new(ct, o, -st))
    };
    Panel::new(label, center, axis_h, axis_v, grid.0, grid.1, s.element_spacing)
}

/// Builds the node and panel layout for a deployment.
pub fn build_scene<T: Real>(scenario: &Scenario<T>, deployment: Deployment) -> Result<Scene<T>> {
    scenario.validate()?;
    let nodes = [
        NodePoint {
            label: NodeLabel::S,
            position: scenario.source(),
        },
        NodePoint {
            label: NodeLabel::R,
            position: scenario.relay(),
        },
        NodePoint {
            label: NodeLabel::D,
            position: scenario.destination(),
        },
    ];
    let m = scenario.total_elements;
    let panels = match deployment {
        Deployment::NoIrs => Vec::new(),
        Deployment::NearR => {
            let g = panel_grid(scenario, 0, PanelLabel::I, m)?;
            vec![relay_panel(scenario, PanelLabel::I, g)?]
        }
        Deployment::NearS | Deployment::NearD => {
            let g = panel_grid(scenario, 0, PanelLabel::I, m)?;
            vec![edge_panel(
                scenario,
                PanelLabel::I,
                deployment == Deployment::NearS,
                g,
            )?]
        }
        Deployment::Multi => {
            let rho = scenario.split;
            if !(rho > T::zero() && rho < T::lit(0.5)) {
                return Err(Error::InvalidSplit(rho.to_f64_lossy()));
            }
            let (m1, m2, m3) = scenario.multi_split();
            let g1 = panel_grid(scenario, 0, PanelLabel::I1, m1)?;
            let g2 = panel_grid(scenario, 1, PanelLabel::I2, m2)?;
            let g3 = panel_grid(scenario, 2, PanelLabel::I3, m3)?;
            vec![
                edge_panel(scenario, PanelLabel::I1, true, g1)?,
                relay_panel(scenario, PanelLabel::I2, g2)?,
                edge_panel(scenario, PanelLabel::I3, false, g3)?,
            ]
        }
    };
    let scene = Scene {
        deployment,
        nodes,
        panels,
    };
    for (p, n) in scene.backside_nodes() {
        warn!("node {n:?} lies behind panel {}", p.as_str());
    }
    Ok(scene)
}

/// Euclidean distance between two distinct points.
pub fn link_distance<T: Real>(a: Vec3<T>, b: Vec3<T>) -> Result<T> {
    let d = (b - a).norm();
    if d == T::zero() {
        return Err(Error::CoincidentPoints);
    }
    Ok(d)
}

/// Unit vector pointing from `a` to `b`.
pub fn unit_direction<T: Real>(a: Vec3<T>, b: Vec3<T>) -> Result<Vec3<T>> {
    let d = link_distance(a, b)?;
    Ok((b - a).scale(T::one() / d))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: Vec3<f64>, b: Vec3<f64>, tol: f64) -> bool {
        (a - b).norm() < tol
    }

    #[test]
    fn near_r_scene() {
        let s = Scenario::<f64>::default().with_elements(100);
        let scene = build_scene(&s, Deployment::NearR).unwrap();
        assert_eq!(scene.panels.len(), 1);
        let p = &scene.panels[0];
        assert_eq!(p.center, Vec3::new(500.0, 0.0, 5.0));
        assert_eq!((p.count_h, p.count_v), (10, 10));
        assert_eq!(p.normal, Vec3::new(0.0, 0.0, -1.0));
    }

    #[test]
    fn multi_smallest_split() {
        let s = Scenario::<f64>::default().with_elements(4).with_split(0.25);
        let scene = build_scene(&s, Deployment::Multi).unwrap();
        let counts: Vec<_> = scene.panels.iter().map(Panel::element_count).collect();
        assert_eq!(counts, vec![1, 2, 1]);
    }

    #[test]
    fn multi_quarter_split() {
        let s = Scenario::<f64>::default().with_elements(200).with_split(0.25);
        let scene = build_scene(&s, Deployment::Multi).unwrap();
        let counts: Vec<_> = scene.panels.iter().map(Panel::element_count).collect();
        assert_eq!(counts, vec![50, 100, 50]);
        assert_eq!(scene.panels[0].label, PanelLabel::I1);
        assert_eq!(scene.panels[2].label, PanelLabel::I3);
    }

    #[test]
    fn split_rejections() {
        let s = Scenario::<f64>::default().with_elements(100).with_split(0.5);
        assert_eq!(build_scene(&s, Deployment::Multi), Err(Error::InvalidSplit(0.5)));
        let s = Scenario::<f64>::default().with_elements(100).with_split(0.0);
        assert!(build_scene(&s, Deployment::Multi).is_err());
        // round(0.25 * 1) = 0 elements on the edge panels
        let s = Scenario::<f64>::default().with_elements(1).with_split(0.25);
        assert!(matches!(
            build_scene(&s, Deployment::Multi),
            Err(Error::EmptyPanel { .. })
        ));
        let s = Scenario::<f64>::default().with_elements(0);
        assert!(build_scene(&s, Deployment::NearR).is_err());
    }

    #[test]
    fn scenario_rejections() {
        let mut s = Scenario::<f64>::default();
        s.altitude_edge_panel = 6.0;
        assert!(matches!(s.validate(), Err(Error::InvalidScenario(_))));
        let mut s = Scenario::<f64>::default();
        s.noise_power = 0.0;
        assert!(s.validate().is_err());
        let mut s = Scenario::<f64>::default();
        s.pathloss_exponent = 1.5;
        assert!(s.validate().is_ok());
    }

    #[test]
    fn explicit_grid_override() {
        let mut s = Scenario::<f64>::default().with_elements(12);
        s.grids = vec![(2, 6)];
        let scene = build_scene(&s, Deployment::NearR).unwrap();
        assert_eq!((scene.panels[0].count_h, scene.panels[0].count_v), (2, 6));
        s.grids = vec![(5, 5)];
        assert_eq!(
            build_scene(&s, Deployment::NearR),
            Err(Error::GridMismatch { h: 5, v: 5, count: 12 })
        );
    }

    #[test]
    fn factorization() {
        assert_eq!(factor_grid(100), (10, 10));
        assert_eq!(factor_grid(50), (5, 10));
        assert_eq!(factor_grid(7), (1, 7));
        assert_eq!(factor_grid(12), (3, 4));
        assert_eq!(factor_grid(1), (1, 1));
        for m in 1..500 {
            let (h, v) = factor_grid(m);
            assert_eq!(h * v, m);
            assert!(h <= v);
        }
    }

    #[test]
    fn edge_panel_frames() {
        let s = Scenario::<f64>::default();
        let scene = build_scene(&s, Deployment::NearS).unwrap();
        let p = &scene.panels[0];
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!(close(p.normal, Vec3::new(r, 0.0, -r), 1e-12));
        let scene = build_scene(&s, Deployment::NearD).unwrap();
        let p = &scene.panels[0];
        assert!(close(p.normal, Vec3::new(-r, 0.0, -r), 1e-12));
        assert!(scene.backside_nodes().is_empty());
    }

    #[test]
    fn distances() {
        let s = Vec3::<f64>::new(0.0, 0.0, 0.0);
        let r = Vec3::new(500.0, 0.0, 0.0);
        assert_eq!(link_distance(s, r).unwrap(), 500.0);
        assert_eq!(unit_direction(s, r).unwrap(), Vec3::new(1.0, 0.0, 0.0));
        let i1 = Vec3::<f64>::new(0.0, 0.0, 4.0);
        let i2 = Vec3::new(500.0, 0.0, 5.0);
        assert!((link_distance(i1, i2).unwrap() - 500.001).abs() < 1e-6);
        assert!((link_distance(s, i2).unwrap() - 250025f64.sqrt()).abs() < 1e-12);
        assert!((link_distance(s, i2).unwrap() - 500.025).abs() < 1e-3);
        assert_eq!(link_distance(s, s), Err(Error::CoincidentPoints));
        assert_eq!(unit_direction(r, r), Err(Error::CoincidentPoints));
    }

    #[test]
    fn centroid_and_frame_invariants() {
        for m in [1usize, 2, 6, 50, 99, 100, 257] {
            let s = Scenario::<f64>::default().with_elements(m * 4).with_split(0.25);
            let scene = build_scene(&s, Deployment::Multi).unwrap();
            for p in &scene.panels {
                // mean displacement from the center, to avoid cancellation
                // against the 500 m coordinates
                let pos = p.element_positions();
                let n = pos.len() as f64;
                let mean = pos
                    .iter()
                    .fold(Vec3::zero(), |a, &b| a + (b - p.center))
                    .scale(1.0 / n);
                assert!(mean.norm() < 1e-12, "{mean:?}");
                assert!((p.normal.norm() - 1.0).abs() < 1e-12);
                assert!(p.axis_h.dot(p.axis_v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn multi_scene_mirror_symmetry() {
        let s = Scenario::<f64>::default().with_elements(200).with_split(0.25);
        let scene = build_scene(&s, Deployment::Multi).unwrap();
        let l = s.half_distance;
        assert_eq!(scene.node(NodeLabel::S).mirror_x(l), scene.node(NodeLabel::D));
        assert_eq!(scene.node(NodeLabel::R).mirror_x(l), scene.node(NodeLabel::R));
        let pairs = [
            (PanelLabel::I1, PanelLabel::I3),
            (PanelLabel::I2, PanelLabel::I2),
        ];
        for (a, b) in pairs {
            let pa = scene.panel(a).unwrap();
            let pb = scene.panel(b).unwrap();
            assert!(close(pa.center.mirror_x(l), pb.center, 1e-12));
            assert!(close(pa.normal.mirror_dir_x(), pb.normal, 1e-12));
            let mut mirrored: Vec<_> =
                pa.element_positions().into_iter().map(|p| p.mirror_x(l)).collect();
            let mut target = pb.element_positions();
            let key = |v: &Vec3<f64>| (v.x, v.y, v.z);
            mirrored.sort_by(|u, v| key(u).partial_cmp(&key(v)).unwrap());
            target.sort_by(|u, v| key(u).partial_cmp(&key(v)).unwrap());
            for (u, v) in mirrored.iter().zip(&target) {
                assert!(close(*u, *v, 1e-9));
            }
        }
    }

    #[test]
    fn deterministic() {
        let s = Scenario::<f64>::default().with_elements(333).with_split(0.3);
        let a = build_scene(&s, Deployment::Multi).unwrap();
        let b = build_scene(&s, Deployment::Multi).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn deployment_names_round_trip() {
        for d in Deployment::ALL {
            assert_eq!(d.as_str().parse::<Deployment>().unwrap(), d);
        }
        assert!("sideways".parse::<Deployment>().is_err());
    }
}
