use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use romkit_core::asub::{self, ActiveSubspace, DimRule};
use romkit_core::dmd::{self, DmdModel};
use romkit_core::interp::InterpolatorConfig;
use romkit_core::io::{self, Table};
use romkit_core::morph::{self, FfdLattice, PointCloud, TriMesh, WELD_TOL};
use romkit_core::podi::{self, PodiModel};
use romkit_core::snapshots::{self, Format, SnapshotSet};
use romkit_core::{linalg, Error, Matrix, RankSpec, Result};
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::report::{self, num, nums, Report};
use crate::{AsubCmd, Cli, Command, DimArgs, DmdCmd, FormatArg, GeometryIo, MorphCmd, PodiCmd, SnapCmd, SnapshotInput, SubspaceFiles};

pub const THREADS_ENV: &str = "ROMKIT_THREADS";

struct Ctx {
    config: RunConfig,
    config_path: Option<PathBuf>,
    threads: Option<String>,
}

impl Ctx {
    fn report(&self, command: &'static str) -> Report {
        let mut r = Report::new(command, self.threads.clone());
        if let Some(p) = &self.config_path {
            r.input(p);
        }
        r
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let threads = configure_threads()?;
    if let Some(p) = &cli.config {
        require_file(p)?;
    }
    let ctx = Ctx {
        config: RunConfig::load(cli.config.as_deref())?,
        config_path: cli.config.clone(),
        threads,
    };
    match &cli.command {
        Command::Dmd(c) => run_dmd(&ctx, c),
        Command::Podi(c) => run_podi(&ctx, c),
        Command::Asub(c) => run_asub(&ctx, c),
        Command::Morph(c) => run_morph(&ctx, c),
        Command::Snap(c) => run_snap(&ctx, c),
    }
}

/// `ROMKIT_THREADS` caps the worker pool; 0 or unset means one per core.
fn configure_threads() -> Result<Option<String>> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(None);
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| Error::Validation(format!("{THREADS_ENV}={raw:?} is not a non-negative integer")))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Validation(format!("cannot configure {n} worker threads: {e}")))?;
    }
    Ok(Some(raw))
}

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "input file does not exist"),
        ))
    }
}

fn require_out_dir(path: &Path) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => return Ok(()),
    };
    if dir.is_dir() {
        Ok(())
    } else {
        Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "output directory does not exist"),
        ))
    }
}

fn check_paths(inputs: &[&Path], outputs: &[&Path]) -> Result<()> {
    inputs.iter().try_for_each(|p| require_file(p))?;
    outputs.iter().try_for_each(|p| require_out_dir(p))
}

fn snapshot_format(path: &Path, flag: Option<FormatArg>) -> Format {
    match flag {
        Some(FormatArg::Csv) => Format::Csv,
        Some(FormatArg::Romk) => Format::RomkBinary,
        None => Format::from_path(path),
    }
}

fn load_snapshots(input: &SnapshotInput) -> Result<SnapshotSet> {
    snapshots::load(&input.input, snapshot_format(&input.input, input.format))
}

fn rank_json(spec: RankSpec) -> Value {
    match spec {
        RankSpec::Full => json!("full"),
        RankSpec::Fixed(r) => json!({ "rank": r }),
        RankSpec::Energy(t) => json!({ "energy": num(t) }),
    }
}

fn interp_json(cfg: &InterpolatorConfig) -> Value {
    serde_json::to_value(cfg).expect("interpolator config serializes")
}

fn parse_vector(s: &str, what: &str) -> Result<Vec<f64>> {
    let v = io::parse_f64_list(s, what)?;
    if v.is_empty() {
        return Err(Error::Validation(format!("{what} is empty")));
    }
    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
        return Err(Error::Validation(format!("{what} item {i} is not finite")));
    }
    Ok(v)
}

fn relative(err: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        err / scale
    } else {
        err
    }
}

fn run_dmd(ctx: &Ctx, cmd: &DmdCmd) -> Result<()> {
    match cmd {
        DmdCmd::Fit { input, rank, dt, out } => {
            check_paths(&[&input.input], &[out])?;
            let spec = ctx.config.rank_spec(rank)?;
            let mut set = load_snapshots(input)?;
            if let Some(dt) = dt.or(ctx.config.dt) {
                set = set.with_dt(dt)?;
            }
            let model = dmd::fit(&set, spec)?;
            let err = model.training_error(&set)?;
            model.save(out)?;

            let mut rep = ctx.report("dmd fit");
            rep.input(&input.input);
            rep.param("rank_spec", rank_json(spec));
            rep.param("dt", num(model.dt()));
            rep.residual("rank", model.rank());
            rep.residual("training_relative_error", num(err));
            rep.residual(
                "eigenvalues",
                Value::Array(model.eigenvalues().iter().map(|l| nums([l.re, l.im])).collect()),
            );
            rep.output(out);
            rep.finish(out)
        }
        DmdCmd::Reconstruct { model, steps, out } => {
            check_paths(&[model], &[out])?;
            let m = DmdModel::load(model)?;
            let steps = steps.or(ctx.config.steps).unwrap_or(m.m_snapshots());
            if steps == 0 {
                return Err(Error::Validation("--steps must be at least 1".into()));
            }
            let steps_u32 = u32::try_from(steps).map_err(|_| Error::Range(format!("{steps} steps is too many")))?;
            let mut states = Matrix::zeros(m.n_dof(), steps);
            let mut imag = 0.0f64;
            for k in 0..steps_u32 {
                let est = m.reconstruct(k);
                imag = imag.max(est.imag_ratio);
                states.set_column(k as usize, &est.state);
            }
            io::write_matrix_csv(out, &states, None)?;

            let mut rep = ctx.report("dmd reconstruct");
            rep.input(model);
            rep.param("steps", steps);
            rep.residual("max_imag_ratio", num(imag));
            rep.output(out);
            rep.finish(out)
        }
        DmdCmd::Forecast { model, times, out } => {
            check_paths(&[model], &[out])?;
            let times = parse_vector(times, "--times")?;
            let m = DmdModel::load(model)?;
            let mut states = Matrix::zeros(m.n_dof(), times.len());
            let mut imag = 0.0f64;
            let mut excluded = Vec::new();
            for (j, &t) in times.iter().enumerate() {
                let est = m.forecast(t)?;
                imag = imag.max(est.imag_ratio);
                excluded = est.excluded_modes;
                states.set_column(j, &est.state);
            }
            io::write_matrix_csv(out, &states, None)?;

            let mut rep = ctx.report("dmd forecast");
            rep.input(model);
            rep.param("times", nums(times.iter().copied()));
            rep.residual("max_imag_ratio", num(imag));
            rep.residual("excluded_modes", excluded);
            rep.output(out);
            rep.finish(out)
        }
        DmdCmd::Spectrum { model, out } => {
            check_paths(&[model], &[out])?;
            let m = DmdModel::load(model)?;
            let lines = m.spectrum();
            let table = Matrix::from_fn(lines.len(), 7, |i, j| {
                let l = &lines[i];
                match j {
                    0 => i as f64,
                    1 => l.eigenvalue.re,
                    2 => l.eigenvalue.im,
                    3 => l.rate.re,
                    4 => l.rate.im,
                    5 => l.modulus,
                    _ => l.frequency,
                }
            });
            let header: Vec<String> = ["index", "eigenvalue_re", "eigenvalue_im", "rate_re", "rate_im", "modulus", "frequency"]
                .map(String::from)
                .to_vec();
            io::write_matrix_csv(out, &table, Some(&header))?;

            let mut rep = ctx.report("dmd spectrum");
            rep.input(model);
            rep.param("dt", num(m.dt()));
            rep.residual("rank", m.rank());
            rep.output(out);
            rep.finish(out)
        }
    }
}

fn read_param_table(path: &Path, m: usize) -> Result<(Matrix, Vec<String>)> {
    let table = io::read_table(path, true)?;
    let names = table.header.clone().unwrap_or_default();
    if table.rows.len() != m {
        return Err(Error::Dimension(format!(
            "{}: {} parameter rows for {m} snapshots",
            path.display(),
            table.rows.len()
        )));
    }
    Ok((table.to_matrix().transpose(), names))
}

fn podi_manifest(model: &PodiModel, names: &[String]) -> String {
    let mut s = String::new();
    let b = model.basis();
    let _ = writeln!(s, "model=podi");
    let _ = writeln!(s, "n_dof={}", b.n_dof());
    let _ = writeln!(s, "m={}", model.train_params().ncols());
    let _ = writeln!(s, "rank={}", b.rank());
    let _ = writeln!(s, "energy_fraction={}", io::fmt_f64(b.energy_fraction));
    let _ = writeln!(s, "interpolator={}", interp_json(model.interpolator()));
    let _ = writeln!(s, "param_names={}", names.join(","));
    for (i, name) in names.iter().enumerate() {
        let _ = writeln!(s, "param.{name}={}", io::join_f64(model.train_params().row(i).iter().copied()));
    }
    s
}

fn run_podi(ctx: &Ctx, cmd: &PodiCmd) -> Result<()> {
    match cmd {
        PodiCmd::Fit {
            input,
            params,
            rank,
            interp,
            out,
        } => {
            let mut inputs = vec![input.input.as_path()];
            inputs.extend(params.as_deref());
            let man = snapshots::manifest_path(out);
            check_paths(&inputs, &[out, &man])?;
            if man == snapshots::manifest_path(&input.input) {
                return Err(Error::Validation(format!(
                    "model manifest {} would replace the manifest of {}; choose another --out name",
                    man.display(),
                    input.input.display()
                )));
            }
            let spec = ctx.config.rank_spec(rank)?;
            let cfg = ctx.config.interpolator(interp, InterpolatorConfig::idw(2.0))?;
            let mut set = load_snapshots(input)?;
            if let Some(p) = params {
                let (table, names) = read_param_table(p, set.m())?;
                set = set.with_params(table, names)?;
            }
            let model = podi::fit_podi(&set, spec, cfg)?;

            let b = model.basis();
            let data = set.data();
            let scale = data.norm();
            let proj_err = (data - &b.modes * model.coeffs()).norm();
            let mut worst = 0.0f64;
            for j in 0..set.m() {
                let mu: Vec<f64> = model.train_params().column(j).iter().copied().collect();
                let e = model.evaluate(&mu)?;
                let col = data.column(j);
                worst = worst.max(relative((e.field - col).norm(), col.norm()));
            }
            let manifest = podi_manifest(&model, set.param_names());
            model.save(out)?;
            io::atomic_write(&man, |w| w.write_all(manifest.as_bytes()))?;

            let mut rep = ctx.report("podi fit");
            rep.input(&input.input);
            if let Some(p) = params {
                rep.input(p);
            }
            rep.param("rank_spec", rank_json(spec));
            rep.param("interpolator", interp_json(&cfg));
            rep.param("param_names", set.param_names().to_vec());
            rep.residual("rank", b.rank());
            rep.residual("energy_fraction", num(b.energy_fraction));
            rep.residual("projection_relative_error", num(relative(proj_err, scale)));
            rep.residual("max_training_point_relative_error", num(worst));
            rep.output(out);
            rep.output(&man);
            rep.finish(out)
        }
        PodiCmd::Eval { model, mu, out } => {
            check_paths(&[model], &[out])?;
            let points: Vec<Vec<f64>> = mu.iter().map(|s| parse_vector(s, "--mu")).collect::<Result<_>>()?;
            let m = PodiModel::load(model)?;
            let mut fields = Matrix::zeros(m.basis().n_dof(), points.len());
            let mut extrapolated = Vec::new();
            let mut snapped = Vec::new();
            for (j, p) in points.iter().enumerate() {
                let e = m.evaluate(p)?;
                if e.extrapolated {
                    log::warn!("query {p:?} lies outside the training parameter box");
                }
                extrapolated.push(e.extrapolated);
                snapped.push(e.snapped_to);
                fields.set_column(j, &e.field);
            }
            io::write_matrix_csv(out, &fields, None)?;

            let mut rep = ctx.report("podi eval");
            rep.input(model);
            rep.param("mu", Value::Array(points.iter().map(|p| nums(p.iter().copied())).collect()));
            rep.param("interpolator", interp_json(m.interpolator()));
            rep.residual("extrapolated", extrapolated);
            rep.residual("snapped_to_training_point", snapped);
            rep.output(out);
            rep.finish(out)
        }
    }
}

struct Samples {
    names: Vec<String>,
    points: Matrix,
    values: Vec<f64>,
}

fn read_samples(path: &Path) -> Result<Samples> {
    let table = io::read_table(path, true)?;
    let nc = table.ncols();
    if nc < 2 {
        return Err(Error::Dimension(format!(
            "{}: sample table needs parameter columns and a value column, found {nc} columns",
            path.display()
        )));
    }
    let n = nc - 1;
    let mut names = table.header.clone().unwrap_or_default();
    names.truncate(n);
    Ok(Samples {
        names,
        points: Matrix::from_fn(n, table.rows.len(), |i, j| table.rows[j][i]),
        values: table.rows.iter().map(|r| r[n]).collect(),
    })
}

fn default_neighbors(n: usize, m: usize) -> usize {
    (2 * n + 2).min(m)
}

fn gradient_samples(ctx: &Ctx, path: &Path, from_samples: bool, neighbors: Option<usize>) -> Result<(Vec<asub::GradientSample>, Vec<String>, usize)> {
    if from_samples {
        let s = read_samples(path)?;
        let k = neighbors
            .or(ctx.config.neighbors)
            .unwrap_or_else(|| default_neighbors(s.points.nrows(), s.points.ncols()));
        let g = asub::estimate_gradients(&s.points, &s.values, k)?;
        return Ok((g, s.names, k));
    }
    let table: Table = io::read_table(path, true)?;
    let header = table.header.clone().unwrap_or_default();
    let nc = table.ncols();
    let weighted = nc % 2 == 1 && header.last().map(String::as_str) == Some("weight");
    let n = if weighted { (nc - 1) / 2 } else { nc / 2 };
    if n == 0 || (!weighted && nc % 2 == 1) {
        return Err(Error::Dimension(format!(
            "{}: gradient table needs N point columns and N gradient columns (plus an optional `weight` column), found {nc}",
            path.display()
        )));
    }
    let m = table.rows.len();
    let samples = table
        .rows
        .iter()
        .map(|r| {
            asub::GradientSample::new(
                DVector::from_column_slice(&r[..n]),
                DVector::from_column_slice(&r[n..2 * n]),
                if weighted { r[2 * n] } else { 1.0 / m as f64 },
            )
        })
        .collect();
    Ok((samples, header[..n].to_vec(), 0))
}

fn dim_rule(ctx: &Ctx, flags: &DimArgs) -> DimRule {
    if let Some(k) = flags.dim {
        DimRule::Fixed(k)
    } else if let Some(t) = flags.dim_energy {
        DimRule::Energy(t)
    } else if flags.gap {
        DimRule::Gap
    } else if let Some(k) = ctx.config.active_dim {
        DimRule::Fixed(k)
    } else if let Some(t) = ctx.config.active_energy {
        DimRule::Energy(t)
    } else {
        DimRule::Gap
    }
}

fn header(prefix: &str, k: usize) -> Vec<String> {
    (1..=k).map(|i| format!("{prefix}{i}")).collect()
}

fn load_subspace(files: &SubspaceFiles) -> Result<ActiveSubspace> {
    let ev = io::read_table(&files.eigenvalues, true)?;
    let expected = ["index", "eigenvalue", "active"];
    if ev.header.as_deref().map(|h| h.iter().map(String::as_str).eq(expected)) != Some(true) {
        return Err(Error::format(
            format!("{} line 1", files.eigenvalues.display()),
            "expected header `index,eigenvalue,active`",
        ));
    }
    let values = DVector::from_iterator(ev.rows.len(), ev.rows.iter().map(|r| r[1]));
    let active: Vec<bool> = ev.rows.iter().map(|r| r[2] != 0.0).collect();
    let k = active.iter().take_while(|&&a| a).count();
    if active[k..].iter().any(|&a| a) {
        return Err(Error::Validation(format!(
            "{}: active flags must mark a leading block of eigenvalues",
            files.eigenvalues.display()
        )));
    }
    let vecs = io::read_table(&files.eigenvectors, true)?.to_matrix();
    ActiveSubspace::from_parts(values, vecs, Some(k))
}

fn run_asub(ctx: &Ctx, cmd: &AsubCmd) -> Result<()> {
    match cmd {
        AsubCmd::Gradients { input, neighbors, out } => {
            check_paths(&[input], &[out])?;
            let (samples, names, k) = gradient_samples(ctx, input, true, *neighbors)?;
            let n = names.len();
            let rows = Matrix::from_fn(samples.len(), 2 * n, |i, j| {
                if j < n {
                    samples[i].point[j]
                } else {
                    samples[i].gradient[j - n]
                }
            });
            let mut head = names.clone();
            head.extend(names.iter().map(|s| format!("d_{s}")));
            io::write_matrix_csv(out, &rows, Some(&head))?;

            let mut rep = ctx.report("asub gradients");
            rep.input(input);
            rep.param("neighbors", k);
            rep.residual("samples", samples.len());
            rep.output(out);
            rep.finish(out)
        }
        AsubCmd::Compute {
            input,
            samples,
            neighbors,
            dim,
            outputs,
        } => {
            check_paths(&[input], &[&outputs.eigenvalues, &outputs.eigenvectors])?;
            let rule = dim_rule(ctx, dim);
            let (grads, names, k) = gradient_samples(ctx, input, *samples, *neighbors)?;
            let c = asub::covariance(&grads)?;
            let sub = asub::decompose(&c)?.select_dim(rule)?;
            let active = sub.active_dim().expect("dimension was just selected");
            let n = sub.dim();

            let w = &sub.eigenvectors;
            let recon = w * Matrix::from_diagonal(&sub.eigenvalues) * w.transpose();
            let decomposition_residual = (&c - recon).norm();

            let ev = Matrix::from_fn(n, 3, |i, j| match j {
                0 => (i + 1) as f64,
                1 => sub.eigenvalues[i],
                _ => f64::from(u8::from(i < active)),
            });
            let ev_head: Vec<String> = ["index", "eigenvalue", "active"].map(String::from).to_vec();
            io::write_matrix_csv(&outputs.eigenvectors, w, Some(&header("w", n)))?;
            io::write_matrix_csv(&outputs.eigenvalues, &ev, Some(&ev_head))?;

            let mut rep = ctx.report("asub compute");
            rep.input(input);
            rep.param("parameters", names);
            rep.param("dim_rule", format!("{rule:?}"));
            if *samples {
                rep.param("neighbors", k);
            }
            rep.residual("samples", grads.len());
            rep.residual("eigenvalues", nums(sub.eigenvalues.iter().copied()));
            rep.residual("active_dim", active);
            rep.residual("trace", num(c.trace()));
            rep.residual("decomposition_residual", num(decomposition_residual));
            rep.residual("orthonormality_residual", num(linalg::orthonormality_residual(w)));
            rep.output(&outputs.eigenvalues);
            rep.output(&outputs.eigenvectors);
            rep.finish(&outputs.eigenvalues)
        }
        AsubCmd::Project { subspace, input, out } => {
            check_paths(&[&subspace.eigenvalues, &subspace.eigenvectors, input], &[out])?;
            let sub = load_subspace(subspace)?;
            let table = io::read_table(input, true)?;
            let points = table.to_matrix().transpose();
            let y = sub.project_points(&points)?;
            let k = y.nrows();
            io::write_matrix_csv(out, &y.transpose(), Some(&header("y", k)))?;

            let mut rep = ctx.report("asub project");
            rep.input(&subspace.eigenvalues);
            rep.input(&subspace.eigenvectors);
            rep.input(input);
            rep.residual("points", points.ncols());
            rep.residual("active_dim", k);
            rep.output(out);
            rep.finish(out)
        }
        AsubCmd::Summary { subspace, input, out } => {
            check_paths(&[&subspace.eigenvalues, &subspace.eigenvectors, input], &[out])?;
            let sub = load_subspace(subspace)?;
            let s = read_samples(input)?;
            let rows = sub.summary_data(&s.points, &s.values)?;
            let k = rows.ncols() - 1;
            let mut head = header("y", k);
            head.push("f".into());
            io::write_matrix_csv(out, &rows, Some(&head))?;

            let mut rep = ctx.report("asub summary");
            rep.input(&subspace.eigenvalues);
            rep.input(&subspace.eigenvectors);
            rep.input(input);
            rep.residual("samples", rows.nrows());
            rep.residual("active_dim", k);
            rep.output(out);
            rep.finish(out)
        }
    }
}

enum Geometry {
    Mesh(TriMesh),
    Points(PointCloud),
}

fn is_stl(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("stl"))
}

fn read_geometry(ctx: &Ctx, io_args: &GeometryIo) -> Result<Geometry> {
    if is_stl(&io_args.out) != is_stl(&io_args.input) {
        return Err(Error::Validation(format!(
            "{} and {} must both be STL or both be point CSV",
            io_args.input.display(),
            io_args.out.display()
        )));
    }
    if is_stl(&io_args.input) {
        let mut mesh = TriMesh::read_stl(&io_args.input)?;
        if io_args.weld || ctx.config.weld == Some(true) {
            mesh = mesh.weld(WELD_TOL)?;
        }
        Ok(Geometry::Mesh(mesh))
    } else {
        let t = io::read_table(&io_args.input, false)?;
        if t.ncols() != 3 && !t.rows.is_empty() {
            return Err(Error::Dimension(format!(
                "{}: point CSV needs 3 columns (x,y,z), found {}",
                io_args.input.display(),
                t.ncols()
            )));
        }
        let m = Matrix::from_fn(3, t.rows.len(), |i, j| t.rows[j][i]);
        Ok(Geometry::Points(PointCloud::new(m)?))
    }
}

fn read_controls(path: &Path) -> Result<(PointCloud, Matrix)> {
    let t = io::read_table(path, false)?;
    if t.ncols() != 6 {
        return Err(Error::Dimension(format!(
            "{}: control CSV needs 6 columns (x,y,z,dx,dy,dz), found {}",
            path.display(),
            t.ncols()
        )));
    }
    let c = t.rows.len();
    let pts = PointCloud::new(Matrix::from_fn(3, c, |i, j| t.rows[j][i]))?;
    Ok((pts, Matrix::from_fn(3, c, |i, j| t.rows[j][i + 3])))
}

fn morph_geometry(
    ctx: &Ctx,
    command: &'static str,
    io_args: &GeometryIo,
    extra_inputs: &[&Path],
    params: Vec<(&str, Value)>,
    deform: impl Fn(&PointCloud) -> Result<PointCloud>,
) -> Result<()> {
    let mut inputs = vec![io_args.input.as_path()];
    inputs.extend_from_slice(extra_inputs);
    check_paths(&inputs, &[&io_args.out])?;
    let geom = read_geometry(ctx, io_args)?;
    let before = match &geom {
        Geometry::Mesh(m) => &m.vertices,
        Geometry::Points(p) => p,
    };
    let after = deform(before)?;
    let diff = after.points() - before.points();
    let max_disp = diff.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
    let moved = diff.column_iter().filter(|c| c.amax() != 0.0).count();
    let count = before.len();
    match &geom {
        Geometry::Mesh(m) => m.with_vertices(after)?.write_stl(&io_args.out)?,
        Geometry::Points(_) => io::write_matrix_csv(&io_args.out, &after.points().transpose(), None)?,
    }

    let mut rep = ctx.report(command);
    for p in &inputs {
        rep.input(p);
    }
    for (k, v) in params {
        rep.param(k, v);
    }
    rep.param("weld", io_args.weld || ctx.config.weld == Some(true));
    rep.residual("points", count);
    rep.residual("points_moved", moved);
    rep.residual("max_displacement", num(max_disp));
    rep.output(&io_args.out);
    rep.finish(&io_args.out)
}

fn run_morph(ctx: &Ctx, cmd: &MorphCmd) -> Result<()> {
    match cmd {
        MorphCmd::Ffd { lattice, io: io_args } => {
            require_file(lattice)?;
            let text = std::fs::read_to_string(lattice).map_err(|e| Error::io(lattice, e))?;
            let lat = FfdLattice::from_json(&text).map_err(|e| match e {
                Error::Format { location, message } => {
                    Error::format(format!("{} {location}", lattice.display()), message)
                }
                other => other,
            })?;
            let params = vec![("dims", json!(lat.dims()))];
            morph_geometry(ctx, "morph ffd", io_args, &[lattice], params, |c| morph::ffd_deform(&lat, c))
        }
        MorphCmd::Idw { controls, power, io: io_args } => {
            require_file(controls)?;
            let (pts, disp) = read_controls(controls)?;
            let p = power.or(ctx.config.power).unwrap_or(2.0);
            let params = vec![("power", num(p)), ("controls", json!(pts.len()))];
            morph_geometry(ctx, "morph idw", io_args, &[controls], params, |c| {
                morph::idw_deform(&pts, &disp, c, p)
            })
        }
        MorphCmd::Rbf { controls, interp, io: io_args } => {
            require_file(controls)?;
            let cfg = ctx.config.interpolator(interp, InterpolatorConfig::gaussian(1.0, 0.0))?;
            let (pts, disp) = read_controls(controls)?;
            let params = vec![("interpolator", interp_json(&cfg)), ("controls", json!(pts.len()))];
            morph_geometry(ctx, "morph rbf", io_args, &[controls], params, |c| {
                morph::rbf_deform(&pts, &disp, c, &cfg)
            })
        }
    }
}

fn format_name(f: Format) -> &'static str {
    match f {
        Format::Csv => "csv",
        Format::RomkBinary => "romk",
    }
}

fn run_snap(ctx: &Ctx, cmd: &SnapCmd) -> Result<()> {
    match cmd {
        SnapCmd::Info { input, out } => {
            let outs: Vec<&Path> = out.iter().map(PathBuf::as_path).collect();
            check_paths(&[&input.input], &outs)?;
            let set = load_snapshots(input)?;
            let info = json!({
                "path": input.input.display().to_string(),
                "format": format_name(snapshot_format(&input.input, input.format)),
                "n_dof": set.n_dof(),
                "m": set.m(),
                "dt": num(set.dt()),
                "explicit_dt": set.explicit_dt().map(num),
                "has_times": set.times().is_some(),
                "param_names": set.param_names(),
                "checksum": format!("{:016x}", set.checksum()),
            });
            match out {
                None => {
                    println!("{}", serde_json::to_string_pretty(&info).expect("JSON values always serialize"));
                    Ok(())
                }
                Some(out) => {
                    report::write_json(out, &info)?;
                    let mut rep = ctx.report("snap info");
                    rep.input(&input.input);
                    rep.output(out);
                    rep.finish(out)
                }
            }
        }
        SnapCmd::Convert { input, out, to } => {
            let man = snapshots::manifest_path(out);
            check_paths(&[&input.input], &[out, &man])?;
            let set = load_snapshots(input)?;
            let target = snapshot_format(out, *to);
            snapshots::save(&set, out, target)?;

            let mut rep = ctx.report("snap convert");
            rep.input(&input.input);
            rep.param("from", format_name(snapshot_format(&input.input, input.format)));
            rep.param("to", format_name(target));
            rep.residual("n_dof", set.n_dof());
            rep.residual("m", set.m());
            rep.residual("checksum", format!("{:016x}", set.checksum()));
            rep.output(out);
            rep.output(&man);
            rep.finish(out)
        }
    }
}
