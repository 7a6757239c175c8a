//! Time-dependent maps from the reference square onto the physical domain and the
//! metric quantities the pulled-back weak form needs.
//!
//! For planar maps `K = (DA)⁻¹` and `J = det DA`. For surfaces `A: [0,1]² → ℝ³`
//! with (nearly) orthogonal tangents the metric is taken diagonal:
//! `K = diag(1/|∂₁A|, 1/|∂₂A|)`, `J = |∂₁A||∂₂A|`.
//!
//! Diffusion enters the discrete operators through the metric tensor
//! `G = J K Kᵀ`, so the stiffness form reads `∫ D ∇φ_b · G ∇φ_a` and the strong
//! form of the diffusion term is `∇·(D G ∇u)`.

use alloc::sync::Arc;
use core::fmt;

use crate::error::{Error, Result};
use crate::math::{self, Mat2, PI};

/// Scalar growth factor `ρ(t)` with its time derivative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Growth {
    /// `ρ ≡ 1`.
    Constant,
    /// `ρ(t) = 1 + amplitude · sin(π t / period)`.
    Sine { amplitude: f64, period: f64 },
    /// `ρ(t) = 1 + rate · t`.
    Linear { rate: f64 },
    /// `ρ(t) = exp(rate · t)`.
    Exponential { rate: f64 },
}

impl Growth {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            Growth::Constant => 1.0,
            Growth::Sine { amplitude, period } => 1.0 + amplitude * math::sin(PI * t / period),
            Growth::Linear { rate } => 1.0 + rate * t,
            Growth::Exponential { rate } => math::exp(rate * t),
        }
    }

    pub fn rate(&self, t: f64) -> f64 {
        match *self {
            Growth::Constant => 0.0,
            Growth::Sine { amplitude, period } => {
                amplitude * PI / period * math::cos(PI * t / period)
            }
            Growth::Linear { rate } => rate,
            Growth::Exponential { rate } => rate * math::exp(rate * t),
        }
    }

    fn check(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(msg.into()));
        match *self {
            Growth::Sine { amplitude, period } => {
                if !(amplitude.is_finite() && period.is_finite() && period > 0.0) {
                    return bad("sine growth needs a finite amplitude and a positive period");
                }
            }
            Growth::Linear { rate } | Growth::Exponential { rate } => {
                if !rate.is_finite() {
                    return bad("growth rate must be finite");
                }
            }
            Growth::Constant => {}
        }
        Ok(())
    }
}

/// Height of a graph surface `A(ξ,t) = (ξ₁, ξ₂, h(ξ,t))` of the form
/// `h = amplitude · sin(π t / period) · (ξ₁ − ξ₂)^power`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RidgeHeight {
    pub amplitude: f64,
    pub period: f64,
    pub power: i32,
}

impl RidgeHeight {
    fn time_factor(&self, t: f64) -> (f64, f64) {
        let w = PI / self.period;
        (
            self.amplitude * math::sin(w * t),
            self.amplitude * w * math::cos(w * t),
        )
    }

    pub fn value(&self, xi: [f64; 2], t: f64) -> f64 {
        self.time_factor(t).0 * math::powi(xi[0] - xi[1], self.power)
    }

    /// `∂h/∂ξ₁ / a(t)`; note `∂h/∂ξ₂ = −∂h/∂ξ₁`.
    fn shape_slope(&self, xi: [f64; 2]) -> f64 {
        let p = self.power;
        if p == 0 {
            0.0
        } else {
            p as f64 * math::powi(xi[0] - xi[1], p - 1)
        }
    }
}

type MapFn = dyn Fn([f64; 2], f64) -> [f64; 3] + Send + Sync;
type TangentFn = dyn Fn([f64; 2], f64) -> [[f64; 3]; 2] + Send + Sync;

/// A user-supplied map. Tangents fall back to finite differences when absent.
#[derive(Clone)]
pub struct CustomMap {
    pub map: Arc<MapFn>,
    pub tangents: Option<Arc<TangentFn>>,
    /// 2 for planar maps (third component ignored), 3 for surfaces.
    pub ambient_dim: usize,
}

impl fmt::Debug for CustomMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomMap")
            .field("ambient_dim", &self.ambient_dim)
            .field("analytic_tangents", &self.tangents.is_some())
            .finish()
    }
}

#[derive(Debug, Clone)]
pub enum MapKind {
    Identity,
    /// `A(ξ,t) = ρ(t) ξ`.
    Dilation(Growth),
    /// `A(ξ,t) = (ρ₁(t) ξ₁, ρ₂(t) ξ₂)`.
    Anisotropic(Growth, Growth),
    /// `A(ξ,t) = (ξ₁, ξ₂, h(ξ,t))`.
    Surface(RidgeHeight),
    Custom(CustomMap),
}

/// Metric terms at one reference point and time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSample {
    /// Inverse Jacobian (planar) or diagonal surface metric.
    pub k: Mat2,
    /// Jacobian determinant (planar) or area element (surface).
    pub j: f64,
    pub dj_dt: f64,
}

impl MetricSample {
    pub const IDENTITY: MetricSample = MetricSample {
        k: [[1.0, 0.0], [0.0, 1.0]],
        j: 1.0,
        dj_dt: 0.0,
    };

    /// `G = J K Kᵀ`.
    pub fn tensor(&self) -> Mat2 {
        let k = &self.k;
        let mut g = [[0.0; 2]; 2];
        for (r, row) in g.iter_mut().enumerate() {
            for (c, val) in row.iter_mut().enumerate() {
                *val = self.j * (k[r][0] * k[c][0] + k[r][1] * k[c][1]);
            }
        }
        g
    }
}

/// Step for the spatial divergence of `G` by central differences.
pub const DIVERGENCE_STEP: f64 = 1e-6;

/// The diffeomorphism `A(·, t)` from `[0,1]²` onto `Ω_t` (or `Γ_t`), for `t ∈ [0, T]`.
#[derive(Debug, Clone)]
pub struct DomainMap {
    kind: MapKind,
    horizon: f64,
}

impl DomainMap {
    pub fn new(kind: MapKind, horizon: f64) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidArgument("map horizon T must be positive".into()));
        }
        match &kind {
            MapKind::Dilation(g) => g.check()?,
            MapKind::Anisotropic(gx, gy) => {
                gx.check()?;
                gy.check()?;
            }
            MapKind::Surface(h) => {
                if !(h.amplitude.is_finite() && h.period > 0.0 && h.power >= 0) {
                    return Err(Error::InvalidArgument(
                        "surface height needs finite amplitude, positive period, power >= 0".into(),
                    ));
                }
            }
            MapKind::Custom(c) => {
                if c.ambient_dim != 2 && c.ambient_dim != 3 {
                    return Err(Error::InvalidArgument("custom map ambient dimension must be 2 or 3".into()));
                }
            }
            MapKind::Identity => {}
        }
        Ok(Self { kind, horizon })
    }

    pub fn identity(horizon: f64) -> Result<Self> {
        Self::new(MapKind::Identity, horizon)
    }

    /// `ρ(t) = 1 + amplitude · sin(π t / period)`.
    pub fn sine_dilation(amplitude: f64, period: f64, horizon: f64) -> Result<Self> {
        Self::new(MapKind::Dilation(Growth::Sine { amplitude, period }), horizon)
    }

    /// Fast benchmark growth: `ρ(t) = 1 + sin(π t)` on `[0, 1]`.
    pub fn benchmark_dilation() -> Self {
        Self::sine_dilation(1.0, 1.0, 1.0).expect("valid parameters")
    }

    /// Slow pattern-formation growth: `ρ(t) = 1 + 9 sin(π t / 1000)` on `[0, 1000]`.
    pub fn slow_dilation() -> Self {
        Self::sine_dilation(9.0, 1000.0, 1000.0).expect("valid parameters")
    }

    /// Graph surface with height `4 sin(π t / 500)(ξ₁ − ξ₂)⁴` on `[0, 500]`.
    pub fn ridge_surface() -> Self {
        Self::new(
            MapKind::Surface(RidgeHeight {
                amplitude: 4.0,
                period: 500.0,
                power: 4,
            }),
            500.0,
        )
        .expect("valid parameters")
    }

    pub fn kind(&self) -> &MapKind {
        &self.kind
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Same map over a different time horizon.
    pub fn with_horizon(&self, horizon: f64) -> Result<Self> {
        Self::new(self.kind.clone(), horizon)
    }

    pub fn ambient_dim(&self) -> usize {
        match &self.kind {
            MapKind::Surface(_) => 3,
            MapKind::Custom(c) => c.ambient_dim,
            _ => 2,
        }
    }

    pub fn is_surface(&self) -> bool {
        self.ambient_dim() == 3
    }

    /// True when `K`, `J` and `∂tJ` do not depend on `ξ`.
    pub fn is_spatially_uniform(&self) -> bool {
        matches!(
            self.kind,
            MapKind::Identity | MapKind::Dilation(_) | MapKind::Anisotropic(..)
        )
    }

    pub fn check_time(&self, t: f64) -> Result<()> {
        let slack = 1e-9 * self.horizon.max(1.0);
        if t.is_finite() && t >= -slack && t <= self.horizon + slack {
            Ok(())
        } else {
            Err(Error::TimeOutOfRange {
                t,
                horizon: self.horizon,
            })
        }
    }

    /// `A(ξ, t)`; planar maps return a zero third component.
    pub fn map_eval(&self, xi: [f64; 2], t: f64) -> Result<[f64; 3]> {
        self.check_time(t)?;
        Ok(self.eval(xi, t))
    }

    pub(crate) fn eval(&self, xi: [f64; 2], t: f64) -> [f64; 3] {
        match &self.kind {
            MapKind::Identity => [xi[0], xi[1], 0.0],
            MapKind::Dilation(g) => {
                let r = g.value(t);
                [r * xi[0], r * xi[1], 0.0]
            }
            MapKind::Anisotropic(gx, gy) => [gx.value(t) * xi[0], gy.value(t) * xi[1], 0.0],
            MapKind::Surface(h) => [xi[0], xi[1], h.value(xi, t)],
            MapKind::Custom(c) => {
                let p = (c.map)(xi, t);
                if c.ambient_dim == 2 {
                    [p[0], p[1], 0.0]
                } else {
                    p
                }
            }
        }
    }

    /// The tangent vectors `∂₁A`, `∂₂A` (columns of `DA`).
    pub fn tangents(&self, xi: [f64; 2], t: f64) -> Result<[[f64; 3]; 2]> {
        Ok(self.at(t)?.tangents(xi))
    }

    /// `K`, `J`, `∂tJ` at `(ξ, t)`; fails when `J ≤ 1e-14`.
    pub fn metric_terms(&self, xi: [f64; 2], t: f64) -> Result<MetricSample> {
        self.at(t)?.metric(xi)
    }

    /// `(∇·G)_c = Σ_r ∂_r G_rc`, zero for spatially uniform maps and otherwise by
    /// central differences with step [`DIVERGENCE_STEP`].
    pub fn metric_divergence(&self, xi: [f64; 2], t: f64) -> Result<[f64; 2]> {
        Ok(self.at(t)?.divergence(xi))
    }

    /// The map at a fixed time, with the time-dependent factors evaluated once.
    pub(crate) fn at(&self, t: f64) -> Result<MapAt<'_>> {
        self.check_time(t)?;
        Ok(self.at_unchecked(t))
    }

    fn at_unchecked(&self, t: f64) -> MapAt<'_> {
        let c = match &self.kind {
            MapKind::Identity | MapKind::Custom(_) => [0.0; 4],
            MapKind::Dilation(g) => [g.value(t), g.rate(t), 0.0, 0.0],
            MapKind::Anisotropic(gx, gy) => [gx.value(t), gy.value(t), gx.rate(t), gy.rate(t)],
            MapKind::Surface(h) => {
                let (a, adot) = h.time_factor(t);
                [a, adot, 0.0, 0.0]
            }
        };
        MapAt { map: self, t, c }
    }

    /// `|∂₁A · ∂₂A| / (|∂₁A||∂₂A|)`: zero for an orthogonal parametrisation.
    /// Diagnostic only; the surface metric is used regardless.
    pub fn orthogonality_defect(&self, xi: [f64; 2], t: f64) -> Result<f64> {
        let [d1, d2] = self.tangents(xi, t)?;
        Ok(math::dot3(d1, d2).abs() / (math::norm3(d1) * math::norm3(d2)))
    }

    /// `|Ω_t|` for spatially uniform maps (exact), otherwise `None`.
    pub fn uniform_measure(&self, t: f64) -> Option<f64> {
        self.is_spatially_uniform()
            .then(|| self.at_unchecked(t).k_and_j([0.5, 0.5]).1)
    }
}

#[derive(Clone, Copy)]
pub(crate) struct MapAt<'a> {
    map: &'a DomainMap,
    t: f64,
    c: [f64; 4],
}

impl MapAt<'_> {
    fn tangents(&self, xi: [f64; 2]) -> [[f64; 3]; 2] {
        let c = self.c;
        match &self.map.kind {
            MapKind::Identity => [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            MapKind::Dilation(_) => [[c[0], 0.0, 0.0], [0.0, c[0], 0.0]],
            MapKind::Anisotropic(..) => [[c[0], 0.0, 0.0], [0.0, c[1], 0.0]],
            MapKind::Surface(h) => {
                let s = c[0] * h.shape_slope(xi);
                [[1.0, 0.0, s], [0.0, 1.0, -s]]
            }
            MapKind::Custom(m) => match &m.tangents {
                Some(tan) => {
                    let mut d = tan(xi, self.t);
                    if m.ambient_dim == 2 {
                        d[0][2] = 0.0;
                        d[1][2] = 0.0;
                    }
                    d
                }
                None => {
                    let mut d = [[0.0; 3]; 2];
                    for (k, col) in d.iter_mut().enumerate() {
                        *col = fourth_order_diff(1e-3, |s| {
                            let mut p = xi;
                            p[k] += s;
                            self.map.eval(p, self.t)
                        });
                    }
                    d
                }
            },
        }
    }

    fn k_and_j(&self, xi: [f64; 2]) -> (Mat2, f64) {
        let [d1, d2] = self.tangents(xi);
        if self.map.is_surface() {
            let n1 = math::norm3(d1);
            let n2 = math::norm3(d2);
            ([[1.0 / n1, 0.0], [0.0, 1.0 / n2]], n1 * n2)
        } else {
            let da: Mat2 = [[d1[0], d2[0]], [d1[1], d2[1]]];
            let j = math::mat2_det(&da);
            let k = [[da[1][1] / j, -da[0][1] / j], [-da[1][0] / j, da[0][0] / j]];
            (k, j)
        }
    }

    fn dj_dt(&self, xi: [f64; 2]) -> f64 {
        let c = self.c;
        match &self.map.kind {
            MapKind::Identity => 0.0,
            MapKind::Dilation(_) => 2.0 * c[0] * c[1],
            MapKind::Anisotropic(..) => c[2] * c[1] + c[0] * c[3],
            MapKind::Surface(h) => {
                // |∂₁A| = |∂₂A| = sqrt(1 + s²), so J = 1 + s².
                let s = h.shape_slope(xi);
                2.0 * c[0] * c[1] * s * s
            }
            MapKind::Custom(_) => {
                let map = self.map;
                let step = 1e-4 * map.horizon.max(1.0);
                fourth_order_diff(step, |s| [map.at_unchecked(self.t + s).k_and_j(xi).1, 0.0, 0.0])[0]
            }
        }
    }

    pub(crate) fn metric(&self, xi: [f64; 2]) -> Result<MetricSample> {
        let (k, j) = self.k_and_j(xi);
        if !(j > 1e-14) {
            return Err(Error::SingularJacobian {
                det: j,
                x: xi[0],
                y: xi[1],
                t: self.t,
            });
        }
        Ok(MetricSample {
            k,
            j,
            dj_dt: self.dj_dt(xi),
        })
    }

    fn tensor(&self, xi: [f64; 2]) -> Mat2 {
        let (k, j) = self.k_and_j(xi);
        MetricSample { k, j, dj_dt: 0.0 }.tensor()
    }

    pub(crate) fn divergence(&self, xi: [f64; 2]) -> [f64; 2] {
        if self.map.is_spatially_uniform() {
            return [0.0, 0.0];
        }
        let h = DIVERGENCE_STEP;
        let mut div = [0.0; 2];
        for r in 0..2 {
            let mut p = xi;
            p[r] += h;
            let gp = self.tensor(p);
            p[r] -= 2.0 * h;
            let gm = self.tensor(p);
            for (c, d) in div.iter_mut().enumerate() {
                *d += (gp[r][c] - gm[r][c]) / (2.0 * h);
            }
        }
        div
    }
}

fn fourth_order_diff(h: f64, f: impl Fn(f64) -> [f64; 3]) -> [f64; 3] {
    let p2 = f(2.0 * h);
    let p1 = f(h);
    let m1 = f(-h);
    let m2 = f(-2.0 * h);
    let mut out = [0.0; 3];
    for k in 0..3 {
        out[k] = (-p2[k] + 8.0 * p1[k] - 8.0 * m1[k] + m2[k]) / (12.0 * h);
    }
    out
}
