//! Scenario runners. Each returns a [`ScenarioReport`] whose checks decide
//! the exit code; module errors propagate as `Err`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{Config, DataKind, OperatorConfig};
use super::report::{OutputDir, ScenarioReport};
use crate::doubling::{
    key_estimate, lemma1_diagnostics, lemma2_diagnostics, write_cells_csv, KeyEstimateOptions, KeyEstimateReport,
};
use crate::error::{LabError, Result};
use crate::fields::{lipschitz_approx, Boundary, GridFunction, SpatialGrid, SpatialLattice};
use crate::jets::{
    doubled_max_is_terminal, terminal_doubled_argmax, terminal_monotonicity_check, tos_terminal_check, Jet,
};
use crate::linalg::{Mat, Vector};
use crate::operators::{OperatorId, OperatorSpec};
use crate::perron::{
    certify_family, contraction_check, doubling_list, existence_pipeline, trace_scaling, ConeFamily, ConeKind,
    PipelineOptions,
};
use crate::regularity::{barrier_sweep, time_modulus, write_time_modulus_csv};
use crate::scheme::{
    fitted_test_family, oracle_grid, plan, pollution_width, residual_check, solve, terminal_subsolution_check,
    ResidualClass, SolveParams,
};

/// Scenario names in run order for `all`.
pub const RUNNABLE: [&str; 7] = [
    "solve",
    "compare",
    "key-estimate",
    "lemma-diagnostics",
    "perron",
    "tos-check",
    "regularity",
];

/// Largest number of stored slices written to `solution.csv`.
const CSV_SLICES: usize = 101;

pub struct Context<'a> {
    pub cfg: &'a Config,
    pub scenario: &'a str,
    pub op_cfg: OperatorConfig,
    pub out: &'a OutputDir,
}

impl Context<'_> {
    fn lattice(&self) -> Result<SpatialLattice<f64>> {
        self.cfg.lattice_for(self.scenario).build()
    }

    fn operator(&self, lat: &SpatialLattice<f64>) -> OperatorSpec<f64> {
        self.op_cfg.build(lat.dim())
    }

    fn u0(&self, lat: SpatialLattice<f64>) -> SpatialGrid<f64> {
        self.cfg.u0_for(self.scenario).grid(lat)
    }

    fn params(&self) -> SolveParams<f64> {
        let mut p = SolveParams::new(self.cfg.horizon);
        p.cfl_fraction = self.cfg.cfl_fraction;
        p
    }

    /// Independent stream per scenario, all derived from the config seed.
    fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        let stream = RUNNABLE
            .iter()
            .position(|s| *s == self.scenario)
            .unwrap_or(RUNNABLE.len());
        rng.set_stream(stream as u64);
        rng
    }

    fn report(&self) -> ScenarioReport {
        ScenarioReport::new(self.scenario, self.op_cfg.id.as_str())
    }
}

pub fn run_scenario(ctx: &Context) -> Result<ScenarioReport> {
    match ctx.scenario {
        "solve" => solve_scenario(ctx),
        "compare" => compare_scenario(ctx),
        "key-estimate" => key_estimate_scenario(ctx),
        "lemma-diagnostics" => lemma_scenario(ctx),
        "perron" => perron_scenario(ctx),
        "tos-check" => tos_scenario(ctx),
        "regularity" => regularity_scenario(ctx),
        other => Err(LabError::Config {
            key: "scenario".into(),
            message: format!("unknown scenario `{other}`"),
        }),
    }
}

fn s(x: f64) -> String {
    x.to_string()
}

/// Closed-form solution matching the operator and data, if any, with its
/// default tolerance.
fn oracle_for(op: &OperatorConfig, u0: DataKind, lat: &SpatialLattice<f64>) -> Option<(&'static str, f64)> {
    let unit_cos = u0 == DataKind::UNIT_COS;
    match (op.id, u0) {
        (_, DataKind::Const(0.0)) => Some(("zero", 1e-12)),
        (OperatorId::Heat, _) if unit_cos && lat.dim() == 1 => Some(("heat-cos", 5e-3)),
        (OperatorId::ProperHeat, _) if unit_cos && lat.dim() == 1 && op.params.gamma == 1.0 => {
            Some(("proper-heat-cos", 5e-3))
        }
        (OperatorId::Eikonal, DataKind::Abs) => Some(("hopf-lax-abs", 5.0 * lat.dx())),
        (OperatorId::Eikonal, _) if unit_cos && lat.dim() == 1 => Some(("hopf-lax-cos", 5.0 * lat.dx())),
        _ => None,
    }
}

/// `max |u − w|` over cells at least `width` cells from a clamped boundary.
fn interior_error(u: &GridFunction<f64>, w: &GridFunction<f64>, width: usize) -> f64 {
    let lat = u.lattice();
    let keep: Vec<usize> = (0..lat.len())
        .filter(|&i| lat.boundary() == Boundary::Periodic || lat.cells_to_boundary(i) >= width)
        .collect();
    (0..u.n_slices())
        .flat_map(|k| keep.iter().map(move |&i| (u.get(k, i) - w.get(k, i)).abs()))
        .fold(0.0, f64::max)
}

fn solve_scenario(ctx: &Context) -> Result<ScenarioReport> {
    let mut rep = ctx.report();
    let lat = ctx.lattice()?;
    let op = ctx.operator(&lat);
    let params = ctx.params();
    let step = plan(&op, &lat, &params)?;
    let u0 = ctx.u0(lat);
    let u = solve(&op, &u0, &params)?;
    let width = pollution_width(&lat, params.horizon);
    let res = residual_check(&u, &op, ctx.cfg.tol, width);
    rep.check(
        "residual",
        res.class == ResidualClass::Solution,
        format!(
            "class {:?}, residual range [{:.3e}, {:.3e}]",
            res.class, res.min_residual, res.max_residual
        ),
    );
    if let Some((name, default_tol)) = oracle_for(&ctx.op_cfg, ctx.cfg.u0_for(ctx.scenario), &lat) {
        let tol = ctx.cfg.oracle_tol.unwrap_or(default_tol);
        let err = interior_error(&u, &oracle_grid(name, &u)?, width);
        rep.check(
            "oracle",
            err <= tol,
            format!("{name}: L∞ error {err:.3e} (tolerance {tol:.3e})"),
        );
        rep.record(
            "oracle",
            serde_json::json!({ "name": name, "error": err, "tolerance": tol }),
        )?;
    }
    rep.record("plan", step)?;
    rep.record("residual", &res)?;
    let every = u.n_slices().div_ceil(CSV_SLICES).max(1);
    let stored = u.subsample_time(every);
    stored.write_csv(ctx.out.file(&mut rep, "solution.csv")?)?;
    Ok(rep)
}

fn schedule_opts(cfg: &Config) -> KeyEstimateOptions<f64> {
    KeyEstimateOptions {
        schedule: cfg.schedule.clone(),
        tol: cfg.tol,
        skip_preconditions: false,
    }
}

fn min_margin(r: &KeyEstimateReport<f64>) -> f64 {
    r.per_alpha.iter().map(|a| a.margin).fold(f64::INFINITY, f64::min)
}

fn compare_scenario(ctx: &Context) -> Result<ScenarioReport> {
    let mut rep = ctx.report();
    let lat = ctx.lattice()?;
    let op = ctx.operator(&lat);
    let params = ctx.params();
    let u0 = ctx.u0(lat);
    let u = solve(&op, &u0, &params)?;
    let opts = schedule_opts(ctx.cfg);
    let pairs = ctx.cfg.comparison_pairs.max(1);
    let mut rows = Vec::new();
    let mut all = true;
    for j in 0..pairs {
        let shift = ctx.cfg.compare_shift * (j + 1) as f64 / pairs as f64;
        // Even pairs shift the data, odd pairs shift the solution.
        let (kind, v) = if j % 2 == 0 {
            ("data", solve(&op, &u0.map(|x| x + shift), &params)?)
        } else {
            ("solution", u.shifted(shift))
        };
        let r = key_estimate(&u, &v, &op, &opts)?;
        let margin = min_margin(&r);
        let ok = r.verdict && r.diagonal_margin >= -2.0 * ctx.cfg.tol && r.all_finite;
        all &= ok;
        rows.push([
            j.to_string(),
            kind.to_string(),
            s(shift),
            r.verdict.to_string(),
            s(margin),
            s(r.diagonal_margin),
        ]);
    }
    rep.check("comparison", all, format!("{pairs} ordered pairs"));
    ctx.out.csv(
        &mut rep,
        "compare.csv",
        &["pair", "kind", "shift", "verdict", "min_margin", "diagonal_margin"],
        rows,
    )?;
    Ok(rep)
}

fn key_estimate_scenario(ctx: &Context) -> Result<ScenarioReport> {
    let mut rep = ctx.report();
    let lat = ctx.lattice()?;
    let op = ctx.operator(&lat);
    let params = ctx.params();
    let u0 = ctx.u0(lat);
    let shift = ctx.cfg.compare_shift;
    let (u, v) = rayon::join(
        || solve(&op, &u0, &params),
        || solve(&op, &u0.map(|x| x + shift), &params),
    );
    let r = key_estimate(&u?, &v?, &op, &schedule_opts(ctx.cfg))?;
    rep.check("verdict", r.verdict, format!("smallest margin {:.3e}", min_margin(&r)));
    rep.check(
        "comparison",
        r.comparison_holds,
        format!("diagonal margin {:.3e}", r.diagonal_margin),
    );
    rep.check("finite", r.all_finite, "");
    rep.record("transform_gamma", r.transform_gamma)?;
    rep.record("l_decays", r.l_decays)?;
    rep.record("boundary_warning", r.boundary_warning)?;
    write_cells_csv(&r.cells, ctx.out.file(&mut rep, "cells.csv")?)?;
    let rows: Vec<[String; 5]> = r
        .per_alpha
        .iter()
        .map(|a| [s(a.alpha), s(a.eps_min), s(a.l), s(a.margin), s(a.limit_margin)])
        .collect();
    ctx.out.csv(
        &mut rep,
        "alphas.csv",
        &["alpha", "eps_min", "l", "margin", "limit_margin"],
        rows,
    )?;
    r.modulus.write_csv(ctx.out.file(&mut rep, "modulus.csv")?)?;
    Ok(rep)
}

fn lemma_scenario(ctx: &Context) -> Result<ScenarioReport> {
    let mut rep = ctx.report();
    let lat = ctx.lattice()?;
    let op = ctx.operator(&lat);
    let u0 = ctx.u0(lat);
    let partner = ctx.cfg.partner.grid(lat);
    let l1 = lemma1_diagnostics(&partner, &u0, &ctx.cfg.schedule)?;
    rep.check("lemma1_bound", l1.all_within_bound, format!("target {:.6}", l1.target));
    rep.check("lemma1_tail", l1.tail_strictly_decreasing, "");
    let rows: Vec<[String; 4]> = l1
        .rows
        .iter()
        .map(|r| [s(r.alpha), s(r.eps), s(r.a), s(r.residual)])
        .collect();
    ctx.out
        .csv(&mut rep, "lemma1.csv", &["alpha", "eps", "A", "residual"], rows)?;
    let rows: Vec<[String; 5]> = l1
        .per_alpha
        .iter()
        .map(|r| [s(r.alpha), s(r.a), s(r.residual), s(r.radius), s(r.bound)])
        .collect();
    ctx.out.csv(
        &mut rep,
        "lemma1_bounds.csv",
        &["alpha", "A", "residual", "radius", "bound"],
        rows,
    )?;

    let u = solve(&op, &u0, &ctx.params())?;
    let v = u.shifted(ctx.cfg.compare_shift);
    let l2 = lemma2_diagnostics(&u, &v, &ctx.cfg.schedule)?;
    rep.check(
        "lemma2_penalty",
        l2.penalty_mass_limit <= 1e-3,
        format!("ε-tail {:.3e}", l2.penalty_mass_limit),
    );
    rep.check(
        "lemma2_quadratic",
        l2.quad_gap_limit <= 1e-2,
        format!("tail {:.3e}", l2.quad_gap_limit),
    );
    rep.check("lemma2_gradient", l2.step1_all, "");
    rep.record(
        "lemma1",
        serde_json::json!({
            "target": l1.target, "monotone": l1.monotone, "lipschitz": l1.lipschitz
        }),
    )?;
    rep.record(
        "lemma2",
        serde_json::json!({
            "grad_mag_limit": l2.grad_mag_limit,
            "penalty_mass_limit": l2.penalty_mass_limit,
            "quad_gap_limit": l2.quad_gap_limit,
            "sliding_all": l2.sliding_all,
        }),
    )?;
    let rows: Vec<[String; 8]> = l2
        .cells
        .iter()
        .map(|c| {
            [
                s(c.alpha),
                s(c.eps),
                s(c.grad_mag),
                s(c.penalty_mass),
                s(c.quad_gap),
                s(c.value_gap),
                s(c.step1_bound),
                c.step1_holds.to_string(),
            ]
        })
        .collect();
    ctx.out.csv(
        &mut rep,
        "lemma2.csv",
        &[
            "alpha",
            "eps",
            "grad_mag",
            "penalty_mass",
            "quad_gap",
            "value_gap",
            "step1_bound",
            "step1_holds",
        ],
        rows,
    )?;
    Ok(rep)
}

/// `Σ a_k cos(k x₁ + φ_k)` with `|a_k| ≤ 1/2`, `k = 1, 2, 3`.
pub fn random_lipschitz_data(lat: SpatialLattice<f64>, rng: &mut impl Rng) -> SpatialGrid<f64> {
    let modes: Vec<(f64, f64)> = (0..3)
        .map(|_| (rng.gen_range(-0.5..=0.5), rng.gen_range(0.0..std::f64::consts::TAU)))
        .collect();
    SpatialGrid::from_fn(lat, |x| {
        modes
            .iter()
            .enumerate()
            .map(|(k, (a, ph))| a * ((k + 1) as f64 * x[0] + ph).cos())
            .sum()
    })
}

fn perron_scenario(ctx: &Context) -> Result<ScenarioReport> {
    let mut rep = ctx.report();
    let lat = ctx.lattice()?;
    let op = ctx.operator(&lat);
    let params = ctx.params();
    let u0 = ctx.u0(lat);
    let eps_min = ctx.cfg.perron_eps_min;
    let opts = PipelineOptions {
        l_list: doubling_list(ctx.cfg.perron_l_count),
        eps_min,
        params,
    };
    let (_, cert) = existence_pipeline(&op, &u0, &opts)?;
    let tol = ctx.cfg.tol;
    let l_top = *cert.l_list.last().expect("nonempty L list");
    rep.check(
        "cauchy",
        cert.contraction_margins.iter().all(|&m| m >= -tol),
        format!("{} contraction steps", cert.contraction_margins.len()),
    );
    rep.check(
        "trace",
        cert.trace_gap <= l_top * eps_min.sqrt() + 1e-12,
        format!("gap {:.3e}", cert.trace_gap),
    );
    rep.check(
        "solution",
        cert.residual_class == ResidualClass::Solution,
        format!("{:?}", cert.residual_class),
    );

    let data = lipschitz_approx(&u0, l_top)?;
    let lip = l_top.max(data.lipschitz_constant());
    let mut certified = true;
    let mut members = 0;
    for kind in [ConeKind::Sub, ConeKind::Super] {
        let family = ConeFamily::full(data.clone(), lip, eps_min, kind)?;
        let fc = certify_family(&op, &family, &params)?;
        certified &= fc.all_certified;
        members += fc.members.len();
    }
    rep.check("cones", certified, format!("{members} members"));
    let scaling = trace_scaling(&data, lip, eps_min, ctx.cfg.perron_halvings)?;
    rep.check("trace_scaling", scaling.pass, format!("ratios {:?}", scaling.ratios));

    let mut rng = ctx.rng();
    let mut rows = Vec::new();
    let mut contraction = true;
    for j in 0..ctx.cfg.contraction_pairs {
        let a = random_lipschitz_data(lat, &mut rng);
        let b = random_lipschitz_data(lat, &mut rng);
        let c = contraction_check(&op, &a, &b, &params)?;
        contraction &= c.margin >= -tol;
        rows.push([j.to_string(), s(c.initial_gap), s(c.solution_gap), s(c.margin)]);
    }
    rep.check(
        "contraction",
        contraction,
        format!("{} random pairs", ctx.cfg.contraction_pairs),
    );
    ctx.out.csv(
        &mut rep,
        "contraction.csv",
        &["pair", "initial_gap", "solution_gap", "margin"],
        rows,
    )?;
    let rows: Vec<[String; 5]> = (0..cert.l_list.len())
        .map(|i| {
            [
                s(cert.l_list[i]),
                s(cert.approximation_errors[i]),
                cert.initial_gaps.get(i).map_or(String::new(), |g| s(*g)),
                cert.solution_gaps.get(i).map_or(String::new(), |g| s(*g)),
                cert.contraction_margins.get(i).map_or(String::new(), |g| s(*g)),
            ]
        })
        .collect();
    ctx.out.csv(
        &mut rep,
        "pipeline.csv",
        &[
            "L",
            "approximation_error",
            "initial_gap",
            "solution_gap",
            "contraction_margin",
        ],
        rows,
    )?;
    let rows: Vec<[String; 2]> = scaling
        .eps_min
        .iter()
        .zip(&scaling.gaps)
        .map(|(e, g)| [s(*e), s(*g)])
        .collect();
    ctx.out.csv(&mut rep, "trace_scaling.csv", &["eps_min", "gap"], rows)?;
    rep.record("certificate", &cert)?;
    Ok(rep)
}

/// Clamped `[−1, 1]` lattice for the self-contained quadratic batteries.
fn battery_lattice() -> Result<SpatialLattice<f64>> {
    SpatialLattice::new(1, 1.0, 0.05, Boundary::Clamped)
}

fn tos_scenario(ctx: &Context) -> Result<ScenarioReport> {
    let mut rep = ctx.report();
    let mut rng = ctx.rng();
    let tol = ctx.cfg.tol;
    let alpha = ctx.cfg.tos_alpha;
    let lat = battery_lattice()?;
    let (dt, slices) = (0.05, 6);

    // u₁ = c₁t − a₁(x − s)², u₂ = c₂t − a₂x²: the doubled max is terminal
    // and b₁ + b₂ = c₁ + c₂ ≥ 0 = b.
    let mut rows = Vec::new();
    let mut tos_ok = true;
    let mut checked = 0;
    for case in 0..ctx.cfg.tos_cases {
        let (a1, a2): (f64, f64) = (rng.gen_range(0.5..3.0), rng.gen_range(0.5..3.0));
        let (c1, c2): (f64, f64) = (rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
        let shift = 0.05 * rng.gen_range(-6i32..=6) as f64;
        let u1 = GridFunction::from_fn_slices(lat, dt, slices, |t, x| c1 * t - a1 * (x[0] - shift).powi(2));
        let u2 = GridFunction::from_fn_slices(lat, dt, slices, |t, x| c2 * t - a2 * x[0] * x[0]);
        if !doubled_max_is_terminal(&u1, &u2, alpha)? {
            continue;
        }
        let (z1, z2, _) = terminal_doubled_argmax(&u1, &u2, alpha)?;
        let r = tos_terminal_check(&u1, &u2, alpha, z1, z2, 0.0, Some(tol))?;
        checked += 1;
        tos_ok &= r.pass;
        let m = &r.margins;
        rows.push([
            case.to_string(),
            s(alpha),
            s(lat.coord(z1)),
            s(lat.coord(z2)),
            s(r.fitted_jets[0].b),
            s(r.fitted_jets[1].b),
            s(m.left_block),
            s(m.right_block),
            s(m.gradient),
            s(m.slope_sum),
            r.pass.to_string(),
        ]);
    }
    rep.check(
        "theorem_of_sums",
        tos_ok && checked > 0,
        format!("{checked} terminal cases"),
    );
    ctx.out.csv(
        &mut rep,
        "tos_margins.csv",
        &[
            "case",
            "alpha",
            "z1",
            "z2",
            "b1",
            "b2",
            "left_block",
            "right_block",
            "gradient",
            "slope_sum",
            "pass",
        ],
        rows,
    )?;

    // Exact jets of u = βt + px + (q/2)x² at (T, z) stay superjets when β drops.
    let mut rows = Vec::new();
    let mut mono_ok = true;
    let z = lat.index_of(&Vector::from_slice(&[0.0]))?;
    for j in 0..ctx.cfg.monotonicity_jets {
        let (beta, p, q): (f64, f64, f64) = (
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-2.0..2.0),
        );
        let u = GridFunction::from_fn_slices(lat, dt, slices, |t, x| beta * t + p * x[0] + 0.5 * q * x[0] * x[0]);
        let jet = Jet::new(beta, Vector::from_slice(&[p]), Mat::scalar(1, q));
        let r = terminal_monotonicity_check(&u, z, &jet, 5, 0.2, 0.3)?;
        mono_ok &= r.pass;
        let worst = r.steps.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
        rows.push([j.to_string(), s(beta), s(p), s(q), s(worst), r.pass.to_string()]);
    }
    rep.check(
        "terminal_monotonicity",
        mono_ok,
        format!("{} jets", ctx.cfg.monotonicity_jets),
    );
    ctx.out.csv(
        &mut rep,
        "terminal_monotonicity.csv",
        &["jet", "b", "p", "x", "max_violation", "pass"],
        rows,
    )?;

    // Subsolution inequality at t = T for the computed solution.
    let sol_lat = ctx.lattice()?;
    let op = ctx.operator(&sol_lat);
    let u = solve(&op, &ctx.u0(sol_lat), &ctx.params())?;
    let width = pollution_width(&sol_lat, u.horizon()) + 3;
    let centers: Vec<usize> = (0..sol_lat.len())
        .step_by(7)
        .filter(|&i| sol_lat.boundary() == Boundary::Periodic || sol_lat.cells_to_boundary(i) >= width)
        .collect();
    let family = fitted_test_family(&u, &centers, ctx.cfg.kappa)?;
    let window = Some((3.0 * sol_lat.dx(), 3));
    let term = terminal_subsolution_check(&u, &op, &family, tol, window)?;
    rep.check(
        "terminal_subsolution",
        term.pass,
        format!("{:?}, {} test functions", term.status, centers.len()),
    );
    let rows: Vec<[String; 4]> = term
        .outcomes
        .iter()
        .map(|o| {
            [
                format!("{:?}", o.phi.center.as_slice()).replace(',', ";"),
                o.argmax_slice.to_string(),
                o.terminal.to_string(),
                o.margin.map_or(String::new(), s),
            ]
        })
        .collect();
    ctx.out.csv(
        &mut rep,
        "terminal_subsolution.csv",
        &["center", "argmax_slice", "terminal", "margin"],
        rows,
    )?;
    Ok(rep)
}

fn regularity_scenario(ctx: &Context) -> Result<ScenarioReport> {
    let mut rep = ctx.report();
    let lat = ctx.lattice()?;
    let op = ctx.operator(&lat);
    let u = solve(&op, &ctx.u0(lat), &ctx.params())?;
    let n = u.n_slices();
    let t0s = [0, n / 3, 2 * n / 3];
    let r = ctx.cfg.radius;
    let mut rows = Vec::new();
    for &eta in &ctx.cfg.etas {
        let sweep = barrier_sweep(&u, &op, eta, r, ctx.cfg.x0_stride, &t0s)?;
        rep.check(
            &format!("barrier_eta_{eta}"),
            sweep.pass,
            format!("{} cylinders, {} failures", sweep.cylinders, sweep.failures),
        );
        let k = sweep.constants.k;
        rows.push([
            s(eta),
            s(sweep.constants.c),
            s(k.upper),
            s(k.lower),
            sweep.cylinders.to_string(),
            sweep.failures.to_string(),
            s(sweep.worst_upper),
            s(sweep.worst_lower),
        ]);
    }
    ctx.out.csv(
        &mut rep,
        "barriers.csv",
        &[
            "eta",
            "C",
            "K",
            "K_lower",
            "cylinders",
            "failures",
            "worst_upper",
            "worst_lower",
        ],
        rows,
    )?;
    let tm = time_modulus(&u, &op, &ctx.cfg.etas, r)?;
    rep.check("time_modulus", tm.pass, "empirical ≤ envelope at every lattice τ");
    let eta_min = ctx.cfg.etas.iter().copied().fold(f64::INFINITY, f64::min);
    let smallest = tm.constants.iter().find(|c| c.eta == eta_min).expect("constants per η");
    let (first, bound) = tm
        .rows
        .get(1)
        .map_or((0.0, 0.0), |row| (row.empirical, eta_min + smallest.k.max() * row.tau));
    rep.check(
        "first_sample",
        first <= bound,
        format!("{first:.3e} at τ = Δt, bound {bound:.3e} at η = {eta_min}"),
    );
    rep.record("nondecreasing", tm.nondecreasing)?;
    rep.record("constants", &tm.constants)?;
    write_time_modulus_csv(&tm.rows, ctx.out.file(&mut rep, "time_modulus.csv")?)?;
    Ok(rep)
}
