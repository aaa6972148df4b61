//! Two-level electronic Hamiltonians and their adiabatic data.
//!
//! Every model is a real symmetric 2×2 matrix `H_e(x)` of one nuclear
//! coordinate. Models supply their entries together with the first two
//! derivatives, and everything else (surfaces, gradients, Hessians,
//! non-adiabatic couplings) is derived in closed form from those jets.
//!
//! Eigenvectors use the rotation gauge
//! `psi1 = (cos θ, sin θ)`, `psi0 = (−sin θ, cos θ)` with
//! `2θ = atan2(h12, (h11 − h22)/2)`, so that `d01 = θ'` and `D01 = θ''`.
//! The pair is only ever flipped jointly, which leaves `d01` unchanged.

use serde::{Deserialize, Serialize};
use std::f64::consts::{LN_2, PI};

use crate::error::{FgaError, Result};

/// Gaps below this are treated as an exact crossing.
pub const DEGENERATE_GAP: f64 = 1e-12;

/// Value and first two derivatives of a scalar function of `x`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    pub v: f64,
    pub d1: f64,
    pub d2: f64,
}

impl Jet {
    pub const fn new(v: f64, d1: f64, d2: f64) -> Self {
        Jet { v, d1, d2 }
    }

    pub const fn constant(v: f64) -> Self {
        Jet {
            v,
            d1: 0.0,
            d2: 0.0,
        }
    }

    fn mul(self, o: Jet) -> Jet {
        Jet {
            v: self.v * o.v,
            d1: self.d1 * o.v + self.v * o.d1,
            d2: self.d2 * o.v + 2.0 * self.d1 * o.d1 + self.v * o.d2,
        }
    }

    fn scale(self, s: f64) -> Jet {
        Jet {
            v: self.v * s,
            d1: self.d1 * s,
            d2: self.d2 * s,
        }
    }

    fn add(self, o: Jet) -> Jet {
        Jet {
            v: self.v + o.v,
            d1: self.d1 + o.d1,
            d2: self.d2 + o.d2,
        }
    }

    fn sub(self, o: Jet) -> Jet {
        self.add(o.scale(-1.0))
    }

    /// `exp(-(x - c)^2 * k)`.
    fn gaussian(x: f64, c: f64, k: f64) -> Jet {
        let u = x - c;
        let g = (-k * u * u).exp();
        Jet::new(g, -2.0 * k * u * g, (4.0 * k * k * u * u - 2.0 * k) * g)
    }
}

/// Entries `(h11, h12, h22)` of the electronic Hamiltonian as jets.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HamiltonianJet {
    pub h11: Jet,
    pub h12: Jet,
    pub h22: Jet,
}

impl HamiltonianJet {
    fn scale(self, s: Jet) -> Self {
        HamiltonianJet {
            h11: self.h11.mul(s),
            h12: self.h12.mul(s),
            h22: self.h22.mul(s),
        }
    }

    pub fn matrix(&self) -> [[f64; 2]; 2] {
        [[self.h11.v, self.h12.v], [self.h12.v, self.h22.v]]
    }

    fn first_derivative(&self) -> [[f64; 2]; 2] {
        [[self.h11.d1, self.h12.d1], [self.h12.d1, self.h22.d1]]
    }

    fn second_derivative(&self) -> [[f64; 2]; 2] {
        [[self.h11.d2, self.h12.d2], [self.h12.d2, self.h22.d2]]
    }
}

/// Built-in model families.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    /// `F(x)·M(x)` with a single avoided crossing at the origin.
    SimpleAvoided,
    /// `F(x)·M(x)` with avoided crossings at `±sqrt(10 ln 2)`.
    DualAvoided,
    /// `F(x)·M(x)` with extended coupling for `x < 0` and reflection on the upper surface.
    ExtendedCoupling,
    /// `[[x, δ], [δ, −x]]`.
    Conical,
    /// `[[x/5, 1/10], [1/10, −x/5]]`; ignores `delta`.
    FixedGapLinear,
    /// `diag(x²/2, x²/2 + gap)`: quadratic surfaces, no coupling.
    Harmonic { gap: f64 },
    /// `gap/2 · [[cos 2kx, sin 2kx], [sin 2kx, −cos 2kx]]`: flat surfaces, `d01 ≡ k`.
    UniformTwist { gap: f64, twist: f64 },
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::SimpleAvoided => "simple_avoided",
            ModelKind::DualAvoided => "dual_avoided",
            ModelKind::ExtendedCoupling => "extended_coupling",
            ModelKind::Conical => "conical",
            ModelKind::FixedGapLinear => "fixed_gap_linear",
            ModelKind::Harmonic { .. } => "harmonic",
            ModelKind::UniformTwist { .. } => "uniform_twist",
        }
    }
}

fn default_scale() -> f64 {
    1.0
}

/// A two-level model: family, gap parameter δ and an optional coupling scale.
///
/// `coupling_scale` multiplies `d` and `D` only; it exists for synthetic
/// weak-coupling studies and leaves `H_e` itself untouched.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelPotential {
    #[serde(flatten)]
    pub kind: ModelKind,
    pub delta: f64,
    #[serde(default = "default_scale")]
    pub coupling_scale: f64,
}

impl ModelPotential {
    pub fn new(kind: ModelKind, delta: f64) -> Result<Self> {
        let m = ModelPotential {
            kind,
            delta,
            coupling_scale: 1.0,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn with_coupling_scale(mut self, scale: f64) -> Self {
        self.coupling_scale = scale;
        self
    }

    /// Looks up a model family by its snake_case name.
    pub fn from_name(name: &str, delta: f64) -> Result<Self> {
        let kind = match name {
            "simple_avoided" => ModelKind::SimpleAvoided,
            "dual_avoided" => ModelKind::DualAvoided,
            "extended_coupling" => ModelKind::ExtendedCoupling,
            "conical" => ModelKind::Conical,
            "fixed_gap_linear" => ModelKind::FixedGapLinear,
            "harmonic" => ModelKind::Harmonic { gap: 1.0 },
            "uniform_twist" => ModelKind::UniformTwist {
                gap: 1.0,
                twist: 1.0,
            },
            other => return Err(FgaError::InvalidConfig(format!("unknown model '{other}'"))),
        };
        ModelPotential::new(kind, delta)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0) || !self.delta.is_finite() {
            return Err(FgaError::InvalidConfig(format!(
                "delta must be positive, got {}",
                self.delta
            )));
        }
        if !self.coupling_scale.is_finite() {
            return Err(FgaError::InvalidConfig(
                "coupling_scale must be finite".into(),
            ));
        }
        match self.kind {
            ModelKind::Harmonic { gap } | ModelKind::UniformTwist { gap, .. } if !(gap > 0.0) => {
                Err(FgaError::InvalidConfig(
                    "synthetic model gap must be positive".into(),
                ))
            }
            _ => Ok(()),
        }
    }

    /// True when the off-diagonal coupling vanishes identically.
    pub fn is_uncoupled(&self) -> bool {
        self.coupling_scale == 0.0 || matches!(self.kind, ModelKind::Harmonic { .. })
    }

    /// Entries of `H_e` and their first two derivatives at `x`.
    pub fn hamiltonian_jet(&self, x: f64) -> HamiltonianJet {
        let delta = self.delta;
        match self.kind {
            ModelKind::SimpleAvoided => {
                // tanh from a single exp; saturates cleanly for large |x|
                let t = 1.0 - 2.0 / ((2.0 * x).exp() + 1.0);
                let sech2 = 1.0 - t * t;
                let diag = Jet::new(t, sech2, -2.0 * t * sech2).scale(1.0 / (2.0 * PI));
                let m = HamiltonianJet {
                    h11: diag,
                    h12: Jet::constant(0.1),
                    h22: diag.scale(-1.0),
                };
                let f = Jet::constant(1.0).add(Jet::gaussian(x, 0.0, 10.0).scale(delta - 1.0));
                m.scale(f)
            }
            ModelKind::DualAvoided => {
                let g = Jet::gaussian(x, 0.0, 0.1);
                let m = HamiltonianJet {
                    h11: Jet::constant(0.0),
                    h12: Jet::constant(0.05),
                    h22: Jet::constant(0.5).sub(g),
                };
                let x0 = (10.0 * LN_2).sqrt();
                let base = 1.0 + (-(2.0 * x0).powi(2)).exp();
                let wells = Jet::gaussian(x, -x0, 1.0).add(Jet::gaussian(x, x0, 1.0));
                let f = Jet::constant(base).add(wells.scale(delta - 1.0));
                m.scale(f)
            }
            ModelKind::ExtendedCoupling => {
                let den = 1.0 + 4.0 * x * x;
                let w = Jet::new(
                    (2.0 * x).atan() + PI / 2.0,
                    2.0 / den,
                    -16.0 * x / (den * den),
                )
                .scale(0.1);
                let m = HamiltonianJet {
                    h11: Jet::constant(0.05),
                    h12: w,
                    h22: Jet::constant(-0.05),
                };
                let den = 1.0 + 1e4 * x * x;
                let f = Jet::new(
                    (100.0 * x).atan() + PI / 2.0 + delta,
                    100.0 / den,
                    -2e6 * x / (den * den),
                )
                .scale(1.0 / PI);
                m.scale(f)
            }
            ModelKind::Conical => HamiltonianJet {
                h11: Jet::new(x, 1.0, 0.0),
                h12: Jet::constant(delta),
                h22: Jet::new(-x, -1.0, 0.0),
            },
            ModelKind::FixedGapLinear => HamiltonianJet {
                h11: Jet::new(x / 5.0, 0.2, 0.0),
                h12: Jet::constant(0.1),
                h22: Jet::new(-x / 5.0, -0.2, 0.0),
            },
            ModelKind::Harmonic { gap } => {
                let v = Jet::new(0.5 * x * x, x, 1.0);
                HamiltonianJet {
                    h11: v,
                    h12: Jet::constant(0.0),
                    h22: v.add(Jet::constant(gap)),
                }
            }
            ModelKind::UniformTwist { gap, twist } => {
                let r = 0.5 * gap;
                let k = 2.0 * twist;
                let (s, c) = (k * x).sin_cos();
                HamiltonianJet {
                    h11: Jet::new(r * c, -r * k * s, -r * k * k * c),
                    h12: Jet::new(r * s, r * k * c, -r * k * k * s),
                    h22: Jet::new(-r * c, r * k * s, r * k * k * c),
                }
            }
        }
    }

    /// `H_e(x)`.
    pub fn electronic_hamiltonian(&self, x: f64) -> [[f64; 2]; 2] {
        self.hamiltonian_jet(x).matrix()
    }

    /// Surface data needed by the trajectory integrator, without eigenvectors.
    #[inline]
    pub fn surface_jet(&self, x: f64) -> Result<SurfaceJet> {
        let inv = Invariants::from_jet(&self.hamiltonian_jet(x));
        let gap = 2.0 * inv.r;
        if gap < DEGENERATE_GAP {
            return Err(FgaError::DegenerateGap { x, gap });
        }
        Ok(SurfaceJet {
            energy: [inv.m.v - inv.r, inv.m.v + inv.r],
            grad: [inv.m.d1 - inv.r1, inv.m.d1 + inv.r1],
            hess: [inv.m.d2 - inv.r2, inv.m.d2 + inv.r2],
            d01: self.coupling_scale * inv.theta1(),
        })
    }

    /// `d01(x)` only.
    #[inline]
    pub fn coupling(&self, x: f64) -> Result<f64> {
        Ok(self.surface_jet(x)?.d01)
    }
}

/// Rotation-invariant pieces of a symmetric 2×2 jet:
/// `m = (h11+h22)/2`, `a = (h11−h22)/2`, `b = h12`, `r = sqrt(a²+b²)`.
struct Invariants {
    m: Jet,
    a: Jet,
    b: Jet,
    r: f64,
    r1: f64,
    r2: f64,
}

impl Invariants {
    #[inline]
    fn from_jet(h: &HamiltonianJet) -> Self {
        let m = h.h11.add(h.h22).scale(0.5);
        let a = h.h11.sub(h.h22).scale(0.5);
        let b = h.h12;
        let r = (a.v * a.v + b.v * b.v).sqrt();
        let (r1, r2) = if r > 0.0 {
            let inv = 1.0 / r;
            let r1 = (a.v * a.d1 + b.v * b.d1) * inv;
            let r2 = (a.d1 * a.d1 + b.d1 * b.d1 + a.v * a.d2 + b.v * b.d2 - r1 * r1) * inv;
            (r1, r2)
        } else {
            (0.0, 0.0)
        };
        Invariants { m, a, b, r, r1, r2 }
    }

    /// θ' where 2θ = atan2(b, a).
    #[inline]
    fn theta1(&self) -> f64 {
        (self.a.v * self.b.d1 - self.b.v * self.a.d1) / (2.0 * self.r * self.r)
    }

    /// θ''.
    fn theta2(&self) -> f64 {
        let r2 = self.r * self.r;
        let num = self.a.v * self.b.d1 - self.b.v * self.a.d1;
        let num1 = self.a.v * self.b.d2 - self.b.v * self.a.d2;
        num1 / (2.0 * r2) - num * (self.a.v * self.a.d1 + self.b.v * self.b.d1) / (r2 * r2)
    }
}

/// Energies, gradients, Hessians and `d01` at one point (scalar nuclear coordinate).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurfaceJet {
    pub energy: [f64; 2],
    pub grad: [f64; 2],
    pub hess: [f64; 2],
    pub d01: f64,
}

impl SurfaceJet {
    /// Off-diagonal coupling `d_{other,current}` that drives a hop away from `surface`.
    #[inline]
    pub fn coupling_from(&self, surface: usize) -> f64 {
        // leaving surface 0 uses d10 = -d01, leaving surface 1 uses d01
        if surface == 0 {
            -self.d01
        } else {
            self.d01
        }
    }
}

/// Pair of eigenvectors `(psi0, psi1)`.
pub type Gauge = [[f64; 2]; 2];

/// Full adiabatic decomposition at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdiabaticData {
    pub e0: f64,
    pub e1: f64,
    pub grad_e0: f64,
    pub grad_e1: f64,
    pub hess_e0: f64,
    pub hess_e1: f64,
    pub d01: f64,
    pub d10: f64,
    pub d00: f64,
    pub d11: f64,
    pub big_d01: f64,
    pub big_d10: f64,
    pub big_d00: f64,
    pub big_d11: f64,
    pub psi0: [f64; 2],
    pub psi1: [f64; 2],
}

impl AdiabaticData {
    pub fn gauge(&self) -> Gauge {
        [self.psi0, self.psi1]
    }
}

fn dot(u: [f64; 2], v: [f64; 2]) -> f64 {
    u[0] * v[0] + u[1] * v[1]
}

fn matvec(h: [[f64; 2]; 2], v: [f64; 2]) -> [f64; 2] {
    [
        h[0][0] * v[0] + h[0][1] * v[1],
        h[1][0] * v[0] + h[1][1] * v[1],
    ]
}

/// Orientation-locked eigenvector pair of a real symmetric 2×2 matrix
/// with the canonical sign (first nonzero component of `psi0` positive).
///
/// Returns `(e0, e1, [psi0, psi1])`, `e0 <= e1`.
pub fn symmetric_eigenpairs(h: [[f64; 2]; 2]) -> (f64, f64, Gauge) {
    let m = 0.5 * (h[0][0] + h[1][1]);
    let a = 0.5 * (h[0][0] - h[1][1]);
    let b = h[0][1];
    let r = a.hypot(b);
    let (c, s) = if r == 0.0 {
        (1.0, 0.0)
    } else if a >= 0.0 {
        let c = (0.5 * (1.0 + a / r)).sqrt();
        (c, b / (2.0 * r * c))
    } else {
        let s = (0.5 * (1.0 - a / r)).sqrt();
        (b / (2.0 * r * s), s)
    };
    let mut psi1 = [c, s];
    let mut psi0 = [-s, c];
    let lead = if psi0[0] != 0.0 { psi0[0] } else { psi0[1] };
    if lead < 0.0 {
        psi0 = [-psi0[0], -psi0[1]];
        psi1 = [-psi1[0], -psi1[1]];
    }
    (m - r, m + r, [psi0, psi1])
}

/// Flips the pair when that increases the overlap with `anchor`.
fn align(gauge: Gauge, anchor: &Gauge) -> Gauge {
    let overlap = dot(gauge[0], anchor[0]) + dot(gauge[1], anchor[1]);
    if overlap < 0.0 {
        [[-gauge[0][0], -gauge[0][1]], [-gauge[1][0], -gauge[1][1]]]
    } else {
        gauge
    }
}

/// Eigen-decomposition of `H_e(x)` with couplings from perturbation theory.
pub fn adiabatic_decompose(
    model: &ModelPotential,
    x: f64,
    anchor: Option<&Gauge>,
) -> Result<AdiabaticData> {
    let jet = model.hamiltonian_jet(x);
    let inv = Invariants::from_jet(&jet);
    let (e0, e1, mut gauge) = symmetric_eigenpairs(jet.matrix());
    let gap = e1 - e0;
    if gap < DEGENERATE_GAP {
        return Err(FgaError::DegenerateGap { x, gap });
    }
    if let Some(anchor) = anchor {
        gauge = align(gauge, anchor);
    }
    let [psi0, psi1] = gauge;
    let dh = jet.first_derivative();
    let d2h = jet.second_derivative();
    let grad_e0 = inv.m.d1 - inv.r1;
    let grad_e1 = inv.m.d1 + inv.r1;

    let d01 = dot(psi0, matvec(dh, psi1)) / gap;
    let big_d01 = (dot(psi0, matvec(d2h, psi1)) + 2.0 * d01 * (grad_e0 - grad_e1)) / gap;
    let scale = model.coupling_scale;
    let d01 = scale * d01;
    let big_d01 = scale * big_d01;
    Ok(AdiabaticData {
        e0,
        e1,
        grad_e0,
        grad_e1,
        hess_e0: inv.m.d2 - inv.r2,
        hess_e1: inv.m.d2 + inv.r2,
        d01,
        d10: -d01,
        d00: 0.0,
        d11: 0.0,
        big_d01,
        big_d10: -big_d01,
        big_d00: -d01 * d01,
        big_d11: -d01 * d01,
        psi0,
        psi1,
    })
}

/// `θ''` in closed form, used to cross-check [`adiabatic_decompose`].
pub fn coupling_curvature(model: &ModelPotential, x: f64) -> f64 {
    model.coupling_scale * Invariants::from_jet(&model.hamiltonian_jet(x)).theta2()
}

/// Centered-difference estimate of `d01` from eigenvectors alone.
pub fn fd_coupling_oracle(model: &ModelPotential, x: f64, h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(FgaError::InvalidConfig(
            "finite-difference step must be positive".into(),
        ));
    }
    let eig = |y: f64| -> Result<Gauge> {
        let (e0, e1, g) = symmetric_eigenpairs(model.electronic_hamiltonian(y));
        if e1 - e0 < DEGENERATE_GAP {
            return Err(FgaError::DegenerateGap { x: y, gap: e1 - e0 });
        }
        Ok(g)
    };
    let [psi0, psi1] = eig(x)?;
    let signed = |v: [f64; 2]| {
        if dot(v, psi1) < 0.0 {
            [-v[0], -v[1]]
        } else {
            v
        }
    };
    let plus = signed(eig(x + h)?[1]);
    let minus = signed(eig(x - h)?[1]);
    let deriv = [
        (plus[0] - minus[0]) / (2.0 * h),
        (plus[1] - minus[1]) / (2.0 * h),
    ];
    Ok(model.coupling_scale * dot(psi0, deriv))
}

/// Gauge-continuous sweep of [`adiabatic_decompose`] over increasing `xs`.
pub fn sweep(model: &ModelPotential, xs: &[f64]) -> Result<Vec<AdiabaticData>> {
    let mut out = Vec::with_capacity(xs.len());
    let mut anchor: Option<Gauge> = None;
    for &x in xs {
        let data = adiabatic_decompose(model, x, anchor.as_ref())?;
        anchor = Some(data.gauge());
        out.push(data);
    }
    Ok(out)
}
