//! Nonlinearities `F(t, x, r, p, X)`, their structural hypotheses in checkable
//! form, and the catalog of concrete operators used across the lab.
//!
//! Every operator carries a declared structural modulus `θ_R`, a declared
//! bound `Φ(R)` on bounded tuples and a declared uniform-continuity modulus.
//! The lab never infers any of them; the sampled checks only try to falsify
//! the declarations.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::jets::validate_matrix_pair;
use crate::linalg::{Mat, Vector};
use crate::scalar::{smax, Scalar};

pub type EvalFn<S> = Arc<dyn Fn(S, &Vector<S>, S, &Vector<S>, &Mat<S>) -> S + Send + Sync>;
/// `(R, s) ↦ θ_R(s)`; also used for uniform-continuity moduli.
pub type ModulusFamily<S> = Arc<dyn Fn(S, S) -> S + Send + Sync>;
pub type BoundFn<S> = Arc<dyn Fn(S) -> S + Send + Sync>;

/// Stability constants the explicit scheme needs from an operator.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SchemeMeta<S> {
    /// Largest diffusion coefficient `Λ_diff` (sup of ∂F/∂X_ii).
    pub diffusion: S,
    /// Largest transport speed `Λ_grad` (sup of |∂F/∂p_i|).
    pub gradient: S,
    /// Lipschitz constant of `F` in `r`.
    pub reaction: S,
    /// Use the one-sided (Godunov) gradient instead of central differences.
    pub upwind: bool,
}

impl<S: Scalar> Default for SchemeMeta<S> {
    fn default() -> Self {
        Self {
            diffusion: S::zero(),
            gradient: S::zero(),
            reaction: S::zero(),
            upwind: false,
        }
    }
}

#[derive(Clone)]
pub struct OperatorSpec<S> {
    name: String,
    dim: usize,
    gamma: S,
    eval: EvalFn<S>,
    theta: ModulusFamily<S>,
    bound: BoundFn<S>,
    uc_modulus: ModulusFamily<S>,
    meta: SchemeMeta<S>,
    theta_note: String,
}

impl<S: Scalar> fmt::Debug for OperatorSpec<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OperatorSpec")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("gamma", &self.gamma)
            .field("meta", &self.meta)
            .finish()
    }
}

impl<S: Scalar> OperatorSpec<S> {
    /// A bare operator: θ ≡ 0, no declared bound (Φ ≡ ∞), no declared modulus.
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        gamma: S,
        eval: impl Fn(S, &Vector<S>, S, &Vector<S>, &Mat<S>) -> S + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            dim,
            gamma,
            eval: Arc::new(eval),
            theta: Arc::new(|_, _| S::zero()),
            bound: Arc::new(|_| S::infinity()),
            uc_modulus: Arc::new(|_, _| S::infinity()),
            meta: SchemeMeta::default(),
            theta_note: "θ_R ≡ 0 (default declaration)".into(),
        }
    }

    pub fn with_theta(mut self, theta: impl Fn(S, S) -> S + Send + Sync + 'static, note: impl Into<String>) -> Self {
        self.theta = Arc::new(theta);
        self.theta_note = note.into();
        self
    }

    pub fn with_bound(mut self, bound: impl Fn(S) -> S + Send + Sync + 'static) -> Self {
        self.bound = Arc::new(bound);
        self
    }

    pub fn with_uc_modulus(mut self, m: impl Fn(S, S) -> S + Send + Sync + 'static) -> Self {
        self.uc_modulus = Arc::new(m);
        self
    }

    pub fn with_meta(mut self, meta: SchemeMeta<S>) -> Self {
        self.meta = meta;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn gamma(&self) -> S {
        self.gamma
    }

    pub fn meta(&self) -> &SchemeMeta<S> {
        &self.meta
    }

    pub fn theta_note(&self) -> &str {
        &self.theta_note
    }

    /// `θ_R(s)`.
    pub fn theta(&self, radius: S, s: S) -> S {
        (self.theta)(radius, s)
    }

    /// Declared `Φ(R)`.
    pub fn bound(&self, radius: S) -> S {
        (self.bound)(radius)
    }

    /// Declared uniform-continuity modulus on the `R`-bounded tuple set.
    pub fn uc_modulus(&self, radius: S, dist: S) -> S {
        (self.uc_modulus)(radius, dist)
    }

    /// Evaluates `F` after symmetrizing `X`; non-finite output is an error.
    pub fn eval(&self, t: S, x: &Vector<S>, r: S, p: &Vector<S>, xm: &Mat<S>) -> Result<S> {
        let sym = xm.symmetrize();
        let v = (self.eval)(t, x, r, p, &sym);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(LabError::OperatorEvaluation {
                operator: self.name.clone(),
                tuple: format!("t={t}, x={x:?}, r={r}, p={p:?}, X={sym:?}"),
            })
        }
    }

    /// Hot-path evaluation; the caller guarantees `X` is symmetric.
    #[inline]
    pub fn eval_sym(&self, t: S, x: &Vector<S>, r: S, p: &Vector<S>, xm: &Mat<S>) -> S {
        (self.eval)(t, x, r, p, xm)
    }
}

/// Operator ids accepted in config files.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum OperatorId {
    Heat,
    ProperHeat,
    VarDiff,
    Eikonal,
    PucciMax,
}

impl OperatorId {
    pub const ALL: [OperatorId; 5] = [
        OperatorId::Heat,
        OperatorId::ProperHeat,
        OperatorId::VarDiff,
        OperatorId::Eikonal,
        OperatorId::PucciMax,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            OperatorId::Heat => "heat",
            OperatorId::ProperHeat => "proper_heat",
            OperatorId::VarDiff => "vardiff",
            OperatorId::Eikonal => "eikonal",
            OperatorId::PucciMax => "pucci_max",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|id| id.as_str() == s)
    }
}

/// Numeric parameters of catalog operators.
#[derive(Clone, Copy, Debug)]
pub struct CatalogParams<S> {
    pub gamma: S,
    pub lambda: S,
    pub big_lambda: S,
}

impl<S: Scalar> Default for CatalogParams<S> {
    fn default() -> Self {
        Self {
            gamma: S::one(),
            lambda: S::one(),
            big_lambda: S::two(),
        }
    }
}

pub fn catalog<S: Scalar>(id: OperatorId, dim: usize, params: CatalogParams<S>) -> OperatorSpec<S> {
    match id {
        OperatorId::Heat => heat(dim),
        OperatorId::ProperHeat => proper_heat(dim, params.gamma),
        OperatorId::VarDiff => vardiff(dim),
        OperatorId::Eikonal => eikonal(dim),
        OperatorId::PucciMax => pucci_max(dim, params.lambda, params.big_lambda),
    }
}

/// `F = tr X`.
pub fn heat<S: Scalar>(dim: usize) -> OperatorSpec<S> {
    let n = S::from_usize_lossy(dim);
    OperatorSpec::new("heat", dim, S::zero(), |_, _, _, _, x: &Mat<S>| x.trace())
        .with_theta(
            |_, _| S::zero(),
            "declared θ_R ≡ 0: tr(X − Y) ≤ 0 under the 3α inequality",
        )
        .with_bound(move |r| n * r)
        .with_uc_modulus(move |_, d| n * d)
        .with_meta(SchemeMeta {
            diffusion: S::one(),
            ..SchemeMeta::default()
        })
}

/// `F = tr X − γ r`.
pub fn proper_heat<S: Scalar>(dim: usize, gamma: S) -> OperatorSpec<S> {
    let n = S::from_usize_lossy(dim);
    OperatorSpec::new("proper_heat", dim, gamma, move |_, _, r, _, x: &Mat<S>| {
        x.trace() - gamma * r
    })
    .with_theta(
        |_, _| S::zero(),
        "declared θ_R ≡ 0: tr(X − Y) ≤ 0 under the 3α inequality",
    )
    .with_bound(move |r| (n + gamma.abs()) * r)
    .with_uc_modulus(move |_, d| (n + gamma.abs()) * d)
    .with_meta(SchemeMeta {
        diffusion: S::one(),
        reaction: gamma.abs(),
        ..SchemeMeta::default()
    })
}

/// Diffusion coefficient of [`vardiff`]: `a(x) = 1 + min(|x|, 1)`.
pub fn vardiff_coefficient<S: Scalar>(x: &Vector<S>) -> S {
    let nx = x.norm();
    S::one() + if nx < S::one() { nx } else { S::one() }
}

/// `F = a(x) tr X` with `a(x) = 1 + min(|x|, 1)`.
///
/// Writing `a = σ²` with `σ = √a` (Lipschitz constant 1/2), the classical
/// estimate `tr(σσᵀ(x)X) − tr(σσᵀ(x̃)Y) ≤ 3α n |σ(x) − σ(x̃)|²` gives the
/// declared `θ_R(s) = (3n/4) s`.
pub fn vardiff<S: Scalar>(dim: usize) -> OperatorSpec<S> {
    let n = S::from_usize_lossy(dim);
    let c = S::lit(0.75) * n;
    OperatorSpec::new("vardiff", dim, S::zero(), |_, x: &Vector<S>, _, _, m: &Mat<S>| {
        vardiff_coefficient(x) * m.trace()
    })
    .with_theta(
        move |_, s| c * s,
        "declared θ_R(s) = (3n/4)·s from the Lipschitz constant 1/2 of √a",
    )
    .with_bound(move |r| S::two() * n * r)
    .with_uc_modulus(move |r, d| n * (r + S::two()) * d)
    .with_meta(SchemeMeta {
        diffusion: S::two(),
        ..SchemeMeta::default()
    })
}

/// `F = −|p|`, i.e. `∂t u + |Du| = 0`.
pub fn eikonal<S: Scalar>(dim: usize) -> OperatorSpec<S> {
    OperatorSpec::new("eikonal", dim, S::zero(), |_, _, _, p: &Vector<S>, _| -p.norm())
        .with_theta(|_, _| S::zero(), "declared θ_R ≡ 0: F has no x or X dependence")
        .with_bound(|r| r)
        .with_uc_modulus(|_, d| d)
        .with_meta(SchemeMeta {
            gradient: S::one(),
            upwind: true,
            ..SchemeMeta::default()
        })
}

/// Maximal Pucci operator `Λ·Σλᵢ⁺ + λ·Σλᵢ⁻` over the eigenvalues of `X`.
pub fn pucci_plus<S: Scalar>(x: &Mat<S>, lambda: S, big_lambda: S) -> S {
    let weigh = |e: S| if e > S::zero() { big_lambda * e } else { lambda * e };
    match x.dim() {
        1 => weigh(x.get(0, 0)),
        2 => {
            let a = x.get(0, 0);
            let d = x.get(1, 1);
            let b = x.get(0, 1);
            let mid = (a + d) * S::half();
            let rad = ((a - d) * (a - d) * S::lit(0.25) + b * b).sqrt();
            weigh(mid + rad) + weigh(mid - rad)
        }
        _ => x.sym_eigenvalues().as_slice().iter().map(|&e| weigh(e)).sum(),
    }
}

pub fn pucci_max<S: Scalar>(dim: usize, lambda: S, big_lambda: S) -> OperatorSpec<S> {
    let n = S::from_usize_lossy(dim);
    OperatorSpec::new("pucci_max", dim, S::zero(), move |_, _, _, _, x: &Mat<S>| {
        pucci_plus(x, lambda, big_lambda)
    })
    .with_theta(
        |_, _| S::zero(),
        "declared θ_R ≡ 0: M⁺ is monotone and X ≤ Y under the 3α inequality",
    )
    .with_bound(move |r| n * big_lambda * r)
    .with_uc_modulus(move |_, d| n * big_lambda * d)
    .with_meta(SchemeMeta {
        diffusion: big_lambda,
        ..SchemeMeta::default()
    })
}

/// Exponential change of unknown `ũ = e^{−γt}u`.
///
/// Returns `F̃(t,x,r,p,X) = e^{−γt} F(t,x,e^{γt}r,e^{γt}p,e^{γt}X) − γ r`, the
/// operator of the transformed problem, whose properness constant is the
/// original one plus `γ`. `horizon` is the time horizon used to make the
/// inherited metadata (θ, Φ, UC modulus) conservative on `[0, horizon]`.
pub fn exp_transform<S: Scalar>(spec: &OperatorSpec<S>, gamma: S, horizon: S) -> OperatorSpec<S> {
    if gamma == S::zero() {
        return spec.clone();
    }
    let inner = spec.clone();
    let g = gamma.abs();
    let e = (g * horizon).exp();
    let eval_inner = inner.eval.clone();
    let eval = move |t: S, x: &Vector<S>, r: S, p: &Vector<S>, m: &Mat<S>| {
        let up = (gamma * t).exp();
        let down = S::one() / up;
        down * eval_inner(t, x, up * r, &p.scale(up), &m.scale(up)) - gamma * r
    };
    let theta_inner = inner.theta.clone();
    let bound_inner = inner.bound.clone();
    let bound_inner2 = inner.bound.clone();
    let uc_inner = inner.uc_modulus.clone();
    OperatorSpec {
        name: format!("exp[{}]({})", gamma, inner.name),
        dim: inner.dim,
        gamma: inner.gamma + gamma,
        eval: Arc::new(eval),
        theta: Arc::new(move |radius, s| e * theta_inner(e * radius, e * s)),
        bound: Arc::new(move |radius| e * bound_inner(e * radius) + g * radius),
        uc_modulus: Arc::new(move |radius, d| {
            g * e * bound_inner2(e * radius) * d + e * uc_inner(e * radius, e * d + g * e * radius * d) + g * d
        }),
        meta: SchemeMeta {
            reaction: inner.meta.reaction + g,
            ..inner.meta
        },
        theta_note: format!(
            "inherited from `{}` with factor e^(|γ|T): {}",
            inner.name, inner.theta_note
        ),
    }
}

/// Sampling box for random operator arguments.
#[derive(Clone, Copy, Debug)]
pub struct SampleBox<S> {
    pub t_max: S,
    pub x_max: S,
    pub r_max: S,
    pub p_max: S,
    pub m_max: S,
}

impl<S: Scalar> Default for SampleBox<S> {
    fn default() -> Self {
        Self {
            t_max: S::one(),
            x_max: S::two(),
            r_max: S::two(),
            p_max: S::two(),
            m_max: S::two(),
        }
    }
}

pub(crate) fn uniform<S: Scalar>(rng: &mut impl Rng, lo: S, hi: S) -> S {
    let u: f64 = rng.gen();
    lo + (hi - lo) * S::lit(u)
}

pub(crate) fn random_vector<S: Scalar>(rng: &mut impl Rng, dim: usize, half_width: S) -> Vector<S> {
    let mut v = Vector::zeros(dim);
    for i in 0..dim {
        v[i] = uniform(rng, -half_width, half_width);
    }
    v
}

pub(crate) fn random_symmetric<S: Scalar>(rng: &mut impl Rng, dim: usize, half_width: S) -> Mat<S> {
    let mut m = Mat::zeros(dim);
    for i in 0..dim {
        for j in 0..=i {
            let v = uniform(rng, -half_width, half_width);
            m.set(i, j, v);
            m.set(j, i, v);
        }
    }
    m
}

pub(crate) fn random_psd<S: Scalar>(rng: &mut impl Rng, dim: usize) -> Mat<S> {
    let mut g = Mat::zeros(dim);
    for i in 0..dim {
        for j in 0..dim {
            g.set(i, j, uniform(rng, -S::one(), S::one()));
        }
    }
    g * g.transpose()
}

/// One sampled argument tuple of `F`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Tuple<S> {
    pub t: S,
    pub x: Vector<S>,
    pub r: S,
    pub p: Vector<S>,
    pub m: Mat<S>,
}

impl<S: Scalar> Tuple<S> {
    fn sample(rng: &mut impl Rng, dim: usize, b: &SampleBox<S>) -> Self {
        Self {
            t: uniform(rng, S::zero(), b.t_max),
            x: random_vector(rng, dim, b.x_max),
            r: uniform(rng, -b.r_max, b.r_max),
            p: random_vector(rng, dim, b.p_max),
            m: random_symmetric(rng, dim, b.m_max),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EllipticityViolation<S> {
    pub tuple: Tuple<S>,
    pub increment: Mat<S>,
    /// `F(X) − F(X + B)`, positive when monotonicity fails.
    pub drop: S,
}

/// Samples tuples and PSD increments `B`; returns every sample where
/// `F(X + B) < F(X) − tol`.
pub fn check_degenerate_elliptic<S: Scalar>(
    spec: &OperatorSpec<S>,
    sample_count: usize,
    seed: u64,
) -> Vec<EllipticityViolation<S>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sbox = SampleBox::default();
    let tol = S::check_tol();
    let mut out = Vec::new();
    for _ in 0..sample_count.max(1) {
        let tup = Tuple::sample(&mut rng, spec.dim, &sbox);
        let b = random_psd(&mut rng, spec.dim);
        let f0 = spec.eval_sym(tup.t, &tup.x, tup.r, &tup.p, &tup.m);
        let f1 = spec.eval_sym(tup.t, &tup.x, tup.r, &tup.p, &(tup.m + b));
        if f1 < f0 - tol {
            out.push(EllipticityViolation {
                tuple: tup,
                increment: b,
                drop: f0 - f1,
            });
        }
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct ProperReport<S> {
    pub gamma_hat: S,
    pub declared: S,
    pub pass: bool,
}

/// Estimates `γ̂ = min [F(v) − F(u)]/(u − v)` over sampled `v < u`.
pub fn check_properness<S: Scalar>(spec: &OperatorSpec<S>, sample_count: usize, seed: u64) -> ProperReport<S> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sbox = SampleBox::<S>::default();
    let mut gamma_hat = S::infinity();
    let min_gap = S::lit(1e-3);
    for _ in 0..sample_count.max(1) {
        let tup = Tuple::sample(&mut rng, spec.dim, &sbox);
        let mut u = uniform(&mut rng, -sbox.r_max, sbox.r_max);
        let mut v = uniform(&mut rng, -sbox.r_max, sbox.r_max);
        if u < v {
            std::mem::swap(&mut u, &mut v);
        }
        if u - v < min_gap {
            u = v + min_gap;
        }
        let fv = spec.eval_sym(tup.t, &tup.x, v, &tup.p, &tup.m);
        let fu = spec.eval_sym(tup.t, &tup.x, u, &tup.p, &tup.m);
        let ratio = (fv - fu) / (u - v);
        if ratio < gamma_hat {
            gamma_hat = ratio;
        }
    }
    ProperReport {
        gamma_hat,
        declared: spec.gamma,
        pass: gamma_hat >= spec.gamma - S::check_tol(),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct StructuralReport<S> {
    /// Worst (smallest) `θ_R(α|x−x̃|² + |x−x̃|) − [F(x,…,X) − F(x̃,…,Y)]` over the times.
    pub margin: S,
    pub worst_time: S,
    pub holds: bool,
}

/// Evaluates the structural condition for one admissible `(X, Y)` at every
/// time in `times`, with `R = |r|`.
#[allow(clippy::too_many_arguments)]
pub fn check_structural<S: Scalar>(
    spec: &OperatorSpec<S>,
    alpha: S,
    x: &Vector<S>,
    x_tilde: &Vector<S>,
    r: S,
    xm: &Mat<S>,
    ym: &Mat<S>,
    times: &[S],
) -> Result<StructuralReport<S>> {
    let pair = validate_matrix_pair(xm, ym, alpha);
    if !pair.pass {
        return Err(LabError::InvalidMatrixPair {
            left: pair.left_margin.as_f64(),
            right: pair.right_margin.as_f64(),
        });
    }
    let d = *x - *x_tilde;
    let p = d.scale(alpha);
    let s = alpha * d.norm_sq() + d.norm();
    let theta = spec.theta(r.abs(), s);
    let mut margin = S::infinity();
    let mut worst_time = S::zero();
    let default_times = [S::zero()];
    let times = if times.is_empty() { &default_times[..] } else { times };
    for &t in times {
        let diff = spec.eval(t, x, r, &p, xm)? - spec.eval(t, x_tilde, r, &p, ym)?;
        let m = theta - diff;
        if m < margin {
            margin = m;
            worst_time = t;
        }
    }
    Ok(StructuralReport {
        margin,
        worst_time,
        holds: margin >= -S::check_tol(),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct DeclarationReport<S> {
    pub radius: S,
    /// Largest `|F| − Φ(R)` seen (≤ 0 when the bound holds).
    pub bound_excess: S,
    /// Largest `|F(a) − F(b)| − ω_R(dist(a, b))` seen.
    pub uc_excess: S,
    pub pass: bool,
}

fn sample_bounded<S: Scalar>(rng: &mut impl Rng, dim: usize, radius: S) -> Tuple<S> {
    let mut p = random_vector(rng, dim, radius);
    let pn = p.norm();
    if pn > radius {
        p = p.scale(radius / pn);
    }
    let mut m = random_symmetric(rng, dim, radius);
    let mn = m.frobenius();
    if mn > radius {
        m = m.scale(radius / mn);
    }
    Tuple {
        t: uniform(rng, S::zero(), S::one()),
        x: random_vector(rng, dim, S::two()),
        r: uniform(rng, -radius, radius),
        p,
        m,
    }
}

fn tuple_distance<S: Scalar>(a: &Tuple<S>, b: &Tuple<S>) -> S {
    let parts = [
        (a.t - b.t).abs(),
        (a.x - b.x).norm(),
        (a.r - b.r).abs(),
        (a.p - b.p).norm(),
        (a.m - b.m).frobenius(),
    ];
    parts.into_iter().fold(S::zero(), smax)
}

/// Samples the `R`-bounded tuple set (`|r|, |p|, ‖X‖_F ≤ R`) and tries to
/// falsify the declared bound `Φ(R)` and UC modulus. Pairs are drawn close
/// together (perturbations of size ≤ 0.1) so the modulus is probed at
/// small distances.
pub fn check_declarations<S: Scalar>(
    spec: &OperatorSpec<S>,
    radius: S,
    sample_count: usize,
    seed: u64,
) -> DeclarationReport<S> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tol = S::check_tol();
    let mut bound_excess = -S::infinity();
    let mut uc_excess = -S::infinity();
    let phi = spec.bound(radius);
    for _ in 0..sample_count.max(1) {
        let a = sample_bounded(&mut rng, spec.dim, radius);
        let scale = S::lit(0.1) * S::lit(rng.gen::<f64>());
        let mut b = a;
        b.t = a.t + scale * uniform(&mut rng, -S::one(), S::one());
        b.x = a.x + random_vector(&mut rng, spec.dim, scale);
        b.r = a.r + scale * uniform(&mut rng, -S::one(), S::one());
        b.p = a.p + random_vector(&mut rng, spec.dim, scale);
        b.m = a.m + random_symmetric(&mut rng, spec.dim, scale);
        let fa = spec.eval_sym(a.t, &a.x, a.r, &a.p, &a.m);
        let fb = spec.eval_sym(b.t, &b.x, b.r, &b.p, &b.m);
        bound_excess = smax(bound_excess, fa.abs() - phi);
        // The perturbed tuple may leave the R-ball slightly; measure it
        // against the modulus of the enclosing radius.
        let enclosing = radius + S::lit(0.2);
        let w = spec.uc_modulus(enclosing, tuple_distance(&a, &b));
        uc_excess = smax(uc_excess, (fa - fb).abs() - w);
    }
    DeclarationReport {
        radius,
        bound_excess,
        uc_excess,
        pass: bound_excess <= tol && uc_excess <= tol,
    }
}
