use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use anyhow::{Context, Result};
use rand::SeedableRng;
use wfvar::action::fokker_action;
use wfvar::circular::{kepler_circular, make_circular_ehbc, make_circular_ehbc_chains, refine_circular, CircularOrbitSpec};
use wfvar::gradient::eom_residual;
use wfvar::invariants::{drift, evaluation_pairs, noether_state, WEDGE_PAIRS};
use wfvar::minkowski::norm3;
use wfvar::second_variation::{assemble_hessian, bifurcation_scan, sign_changes, ScanTemplate};
use wfvar::sewing::{build_grid, Direction, SewingGrid};
use wfvar::solver::{minimize_report_consistency, solve, SolveReport};
use wfvar::spline::PerturbationBasis;
use wfvar::trajectory::{read_csv, write_csv};
use wfvar::{BoundaryData, Error, Pair, Particle};

use crate::config::RunConfig;
use crate::output::{num, opt, write_table, Csv, Manifest};

/// Orbit and boundary data from the configured source.
pub struct Setup {
    pub pair: Pair,
    pub bd: BoundaryData,
    pub spec: Option<CircularOrbitSpec>,
    pub grid: Option<SewingGrid>,
}

pub fn circular_spec(cfg: &RunConfig) -> Result<CircularOrbitSpec> {
    let [m1, m2] = cfg.masses()?;
    let [e1, e2] = cfg.charges()?;
    let mut spec = kepler_circular(cfg.f64("r12")?, m1, m2);
    spec.e1 = e1;
    spec.e2 = e2;
    if cfg.bool("refine")? {
        spec = refine_circular(&spec)?;
    }
    Ok(spec)
}

pub fn setup(cfg: &RunConfig) -> Result<Setup> {
    if let Some(path) = cfg.input() {
        let f = File::open(&path).with_context(|| format!("opening {}", path.display()))?;
        let pair = read_csv(BufReader::new(f), cfg.masses()?, cfg.charges()?)?;
        let bd = BoundaryData::from_pair(&pair)?;
        return Ok(Setup { pair, bd, spec: None, grid: None });
    }
    let spec = circular_spec(cfg)?;
    let arc = cfg.f64("arc")?;
    let chains = cfg.usize("n_chains")?;
    let c = if chains > 0 {
        make_circular_ehbc_chains(&spec, arc, chains)?
    } else {
        make_circular_ehbc(&spec, arc, cfg.usize("nodes_per_turn")?)?
    };
    Ok(Setup { pair: c.pair, bd: c.bd, spec: Some(spec), grid: Some(c.grid) })
}

fn record_grid(m: &mut Manifest, s: &Setup) {
    m.add("nodes1", s.pair.one.len());
    m.add("nodes2", s.pair.two.len());
}

/// Smooth admissible perturbation with sup norm `rel` times each orbit's
/// largest node radius.
pub fn kick(pair: &Pair, bd: &BoundaryData, rel: f64, seed: u64) -> Result<Vec<f64>> {
    let basis = PerturbationBasis::new(pair, bd)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut x = vec![0.0; basis.dim()];
    for p in [Particle::One, Particle::Two] {
        let radius = pair.get(p).nodes.iter().map(|n| norm3(n.pos)).fold(0.0, f64::max);
        let b = basis.smooth_random(&mut rng, 4, Some(p));
        let m = b.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if m > 0.0 {
            for (xi, bi) in x.iter_mut().zip(&b) {
                *xi += bi * rel * radius / m;
            }
        }
    }
    Ok(x)
}

pub fn circular(cfg: &RunConfig, dir: &Path, m: &mut Manifest) -> Result<()> {
    let s = setup(cfg)?;
    record_grid(m, &s);
    let mut f = File::create(dir.join("trajectory.csv"))?;
    write_csv(&mut f, &[&s.pair.one, &s.pair.two])?;
    let bd = &s.bd;
    let mut rows = vec![
        ("o_minus", num(bd.lambda2_minus)),
        ("o_plus", num(bd.lambda2_plus)),
        ("l_minus", num(bd.t1)),
        ("l_plus", num(bd.lambda1_plus)),
        ("t2", num(bd.l_b.t)),
    ];
    if let Some(spec) = s.spec {
        rows.extend([
            ("r12", num(spec.r12)),
            ("omega", num(spec.omega)),
            ("newtonian_omega", num(spec.newtonian_omega())),
            ("v1", num(spec.v1)),
            ("v2", num(spec.v2)),
            ("rho1", num(spec.rho1)),
            ("rho2", num(spec.rho2)),
            ("period", num(spec.period())),
            ("delay", num(spec.delay())),
        ]);
        println!("r12 {} omega {:.12e} period {:.6} delay {:.6}", spec.r12, spec.omega, spec.period(), spec.delay());
    }
    write_table(dir, "circular.csv", &rows)?;
    Ok(())
}

pub fn action(cfg: &RunConfig, dir: &Path, m: &mut Manifest) -> Result<()> {
    let s = setup(cfg)?;
    record_grid(m, &s);
    let a = fokker_action(&s.pair, &s.bd)?;
    let mut csv = Csv::create(dir, "action.csv", &["kinetic1", "kinetic2", "interaction", "total"])?;
    csv.row(&[num(a.kinetic1), num(a.kinetic2), num(a.interaction), num(a.total)])?;
    csv.finish()?;
    println!("action {}", num(a.total));
    Ok(())
}

pub fn residual(cfg: &RunConfig, dir: &Path, m: &mut Manifest) -> Result<()> {
    let s = setup(cfg)?;
    record_grid(m, &s);
    let res = eom_residual(&s.pair, &s.bd)?;
    let mut csv = Csv::create(dir, "residual.csv", &["particle", "t", "g_t", "g_x", "g_y", "g_z", "norm"])?;
    for p in [Particle::One, Particle::Two] {
        for r in res.get(p) {
            let g = r.g;
            csv.row(&[p.label().to_string(), num(r.t), num(g.t), num(g.x), num(g.y), num(g.z), num(g.norm4())])?;
        }
    }
    csv.finish()?;
    m.add("max_residual", num(res.max_norm()));
    println!("max |G| {}", num(res.max_norm()));
    Ok(())
}

pub fn grid(cfg: &RunConfig, dir: &Path, m: &mut Manifest) -> Result<()> {
    let s = setup(cfg)?;
    record_grid(m, &s);
    let grid = match s.grid {
        Some(g) => g,
        None => build_grid(&s.pair, &s.bd, cfg.usize("n_chains")?.max(2))?,
    };
    let mut csv = Csv::create(dir, "chains.csv", &["chain", "direction", "index", "particle", "t"])?;
    for (c, chain) in grid.chains.iter().enumerate() {
        let d = match chain.direction {
            Direction::Forward => "forward",
            Direction::Backward => "backward",
        };
        for (i, (p, t)) in chain.points.iter().enumerate() {
            csv.row(&[c.to_string(), d.to_string(), i.to_string(), p.label().to_string(), num(*t)])?;
        }
    }
    csv.finish()?;
    m.add("chains", grid.chains.len());
    println!("{} chains, {} + {} nodes", grid.chains.len(), grid.nodes(Particle::One).len(), grid.nodes(Particle::Two).len());
    Ok(())
}

pub fn hessian(cfg: &RunConfig, dir: &Path, m: &mut Manifest) -> Result<()> {
    let s = setup(cfg)?;
    record_grid(m, &s);
    let q = assemble_hessian(&s.pair, &s.bd)?;
    let e = q.eigenvalues();
    let l2 = q.l2_eigenvalues()?;
    let k = cfg.usize("eigenvalues")?.min(e.len());
    let mut csv = Csv::create(dir, "hessian.csv", &["index", "eigenvalue", "l2_eigenvalue"])?;
    for i in 0..k {
        csv.row(&[i.to_string(), num(e[i]), num(l2[i])])?;
    }
    csv.finish()?;
    let negative = e.iter().filter(|x| **x < 0.0).count();
    write_table(
        dir,
        "hessian_summary.csv",
        &[
            ("dim", q.dim().to_string()),
            ("symmetry_error", num(q.symmetry_error())),
            ("min_eigenvalue", num(e[0])),
            ("max_eigenvalue", num(e[e.len() - 1])),
            ("min_l2_eigenvalue", num(l2[0])),
            ("negative_count", negative.to_string()),
        ],
    )?;
    m.add("dim", q.dim());
    println!("dim {} min eigenvalue {} (L2 {}), {} negative", q.dim(), num(e[0]), num(l2[0]), negative);
    Ok(())
}

pub fn scan(cfg: &RunConfig, dir: &Path, m: &mut Manifest) -> Result<()> {
    let [m1, m2] = cfg.masses()?;
    let tpl = ScanTemplate { m1, m2, arc: cfg.f64("arc")?, nodes_per_turn: cfg.usize("nodes_per_turn")? };
    let rows = bifurcation_scan(&cfg.list_f64("scan_r")?, &tpl);
    let mut csv = Csv::create(dir, "scan.csv", &["r12", "min_eigenvalue", "min_l2_eigenvalue", "status"])?;
    for r in &rows {
        let status = r.failure.clone().unwrap_or_else(|| "ok".into()).replace(',', ";");
        csv.row(&[num(r.r12), opt(r.min_eig), opt(r.min_l2_eig), status])?;
        match (r.min_eig, &r.failure) {
            (Some(e), _) => println!("r12 {:>8} min eigenvalue {} L2 {}", r.r12, num(e), opt(r.min_l2_eig)),
            (None, Some(f)) => println!("r12 {:>8} failed: {f}", r.r12),
            _ => {}
        }
    }
    csv.finish()?;
    for (a, b) in sign_changes(&rows) {
        println!("sign change between r12 = {a} and {b}");
    }
    m.add("radii", rows.len());
    Ok(())
}

fn write_solve(dir: &Path, r: &SolveReport) -> Result<()> {
    let mut csv = Csv::create(dir, "solve_history.csv", &["iteration", "action", "decrease", "step"])?;
    for (i, a) in r.action_history.iter().enumerate() {
        let (d, st) = if i == 0 { (String::new(), String::new()) } else { (num(r.decreases[i - 1]), num(r.step_lengths[i - 1])) };
        csv.row(&[i.to_string(), num(*a), d, st])?;
    }
    csv.finish()?;
    write_table(
        dir,
        "solve_summary.csv",
        &[
            ("iterations", r.iterations.to_string()),
            ("converged", r.converged.to_string()),
            ("monotone", r.monotone().to_string()),
            ("final_gradient_norm", num(r.final_gradient_norm)),
            ("final_max_residual", num(r.final_max_residual)),
            ("rebuilds", r.rebuilds.to_string()),
            ("max_acceleration", num(r.max_acceleration)),
            ("acceleration_bound_active", r.acceleration_bound_active.to_string()),
        ],
    )?;
    Ok(())
}

pub fn solve_cmd(cfg: &RunConfig, dir: &Path, m: &mut Manifest) -> Result<()> {
    let s = setup(cfg)?;
    record_grid(m, &s);
    let rel = cfg.f64("perturb")?;
    let start = if rel != 0.0 {
        let x = kick(&s.pair, &s.bd, rel, cfg.u64("seed")?)?;
        PerturbationBasis::new(&s.pair, &s.bd)?.apply(&s.pair, &x, 1.0)?
    } else {
        s.pair.clone()
    };
    let opts = cfg.solve_options()?;
    match solve(&start, &s.bd, &opts) {
        Ok((sol, r)) => {
            write_solve(dir, &r)?;
            let mut f = File::create(dir.join("solution.csv"))?;
            write_csv(&mut f, &[&sol.one, &sol.two])?;
            let c = minimize_report_consistency(&sol, &s.bd, opts.residual_tol)?;
            write_table(
                dir,
                "consistency.csv",
                &[
                    ("max_residual", num(c.max_residual)),
                    ("gradient_norm", num(c.gradient_norm)),
                    ("gradient_pairing", num(c.gradient_pairing)),
                    ("residual_pairing", num(c.residual_pairing)),
                    ("momentum_drift", num(c.momentum_drift)),
                    ("angular_drift", num(c.angular_drift)),
                    ("passed", c.passed().to_string()),
                ],
            )?;
            for f in &c.failures {
                println!("consistency: {f}");
            }
            m.add("iterations", r.iterations);
            println!("converged in {} iterations, max |G| {}", r.iterations, num(r.final_max_residual));
            Ok(())
        }
        Err(Error::SolverNoConvergence(r)) => {
            write_solve(dir, &r)?;
            m.add("iterations", r.iterations);
            Err(Error::SolverNoConvergence(r).into())
        }
        Err(e) => Err(e.into()),
    }
}

pub fn invariants(cfg: &RunConfig, dir: &Path, m: &mut Manifest) -> Result<()> {
    let s = setup(cfg)?;
    record_grid(m, &s);
    let pairs = evaluation_pairs(&s.pair, &s.bd, cfg.usize("pairs")?);
    let states = pairs.iter().map(|&(a, b)| noether_state(&s.pair, &s.bd, a, b)).collect::<wfvar::Result<Vec<_>>>()?;
    let mut header = vec!["t1".to_string(), "t2".into(), "p_t".into(), "p_x".into(), "p_y".into(), "p_z".into()];
    header.extend(WEDGE_PAIRS.iter().map(|(i, j)| format!("l_{i}{j}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut csv = Csv::create(dir, "invariants.csv", &header)?;
    for st in &states {
        let mut row = vec![num(st.t1), num(st.t2)];
        row.extend(st.p.to_array().map(num));
        row.extend(WEDGE_PAIRS.iter().map(|&(i, j)| num(st.l[i][j])));
        csv.row(&row)?;
    }
    csv.finish()?;
    let (dp, dl) = drift(&states);
    write_table(dir, "invariants_summary.csv", &[("momentum_drift", num(dp)), ("angular_drift", num(dl))])?;
    println!("momentum drift {} angular momentum drift {}", num(dp), num(dl));
    Ok(())
}
