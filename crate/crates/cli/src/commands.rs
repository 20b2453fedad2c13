use std::path::Path;

use kernreg::classifier::{
    classify_value, fit_l1, parse_model, probability_from_logit, serialize_model, ClassifierModel, FitOptions,
    Query, TrainingSet,
};
use kernreg::experiments::{
    default_mu_grid, default_probability, figure2_metrics, generate_swiss_roll, generate_toy, run_figure2_default,
    Figure2Config,
};
use kernreg::kernel::{eigentruncate, pseudo_attributes, write_matrix, GramMatrix, Kernel};
use kernreg::classifier;
use kernreg::loss::MarginLoss;
use kernreg::rke::{
    cv2_tune, extend_kernel, fit_kernel, newbie_embed, newbie_predict, Cv2Options, NewbieOptions, Pair,
    RkeProblem, RkeSolution, SolverMethod, SolverOptions,
};
use kernreg::unroll::{knn_graph, unroll, unrolled_embedding, DistanceSource, UnrollOptions};
use nalgebra::DMatrix;

use crate::error::CliError;
use crate::io::{self, num};
use crate::{
    Cv2Args, FitArgs, Figure2Args, GenCommand, KernelKind, LossKind, NewbieArgs, PredictArgs, RkeFitArgs,
    SolverArgs, SolverKind, UnrollArgs,
};

fn solver_options(a: &SolverArgs) -> SolverOptions {
    SolverOptions {
        method: match a.solver {
            SolverKind::Auto => SolverMethod::Auto,
            SolverKind::Splitting => SolverMethod::Splitting,
            SolverKind::Barrier => SolverMethod::Barrier,
        },
        max_iter: a.max_iter,
        tol: a.tol,
        ..SolverOptions::default()
    }
}

fn warn(messages: &[String]) {
    for m in messages {
        eprintln!("warning: {m}");
    }
}

fn kernel_spec(kind: KernelKind, width: f64) -> Result<Kernel, CliError> {
    Ok(match kind {
        KernelKind::Gaussian => Kernel::gaussian(width)?,
        KernelKind::Linear => Kernel::Linear,
    })
}

fn problem_size(pairs: &[Pair], n: Option<usize>) -> usize {
    n.unwrap_or_else(|| pairs.iter().map(|p| p.i.max(p.j) + 1).max().unwrap_or(0))
}

pub fn fit(a: FitArgs) -> Result<(), CliError> {
    let ts = if let Some(path) = &a.geometry.gram {
        let g = GramMatrix::new(io::read_matrix(path)?)?;
        let labels = io::read_labels(&a.labels, g.n())?;
        TrainingSet::from_gram(g, labels)?
    } else {
        let path = a.geometry.points.as_ref().expect("clap enforces one geometry input");
        let points = io::read_points(path)?;
        let labels = io::read_labels(&a.labels, points.len())?;
        TrainingSet::from_points(kernel_spec(a.kernel, a.width)?, points, labels)?
    };
    let opts = FitOptions::default();
    let model = match a.loss {
        LossKind::Hinge => classifier::fit(&ts, MarginLoss::hinge_scaled(a.theta)?, a.mu, &opts)?,
        LossKind::Logistic => classifier::fit(&ts, MarginLoss::Logistic, a.mu, &opts)?,
        LossKind::Squared => classifier::fit(&ts, MarginLoss::Squared, a.mu, &opts)?,
        LossKind::L1 => fit_l1(&ts, a.mu, &opts)?,
    };
    if !model.report.converged {
        eprintln!(
            "warning: solver stopped after {} iterations (stopping value {:e})",
            model.report.iterations, model.report.stopping_value
        );
    }
    io::write_text(&a.out, &serialize_model(&model))
}

fn load_model(path: &Path) -> Result<ClassifierModel, CliError> {
    let text = io::read_model_text(path)?;
    parse_model(&text).map_err(|e| match e {
        kernreg::Error::Parse { line, message } => CliError::Malformed {
            path: path.to_path_buf(),
            line,
            message,
        },
        other => CliError::Input(other),
    })
}

pub fn predict(a: PredictArgs) -> Result<(), CliError> {
    let model = load_model(&a.model)?;
    let values: Vec<f64> = if a.query.training {
        (0..model.n()).map(|i| model.decision_value(Query::Training(i))).collect::<Result<_, _>>()?
    } else if let Some(path) = &a.query.points {
        io::read_points(path)?
            .iter()
            .map(|x| model.decision_value(Query::Point(x)))
            .collect::<Result<_, _>>()?
    } else {
        let path = a.query.gram_rows.as_ref().expect("clap enforces one query input");
        let rows = io::read_matrix(path)?;
        (0..rows.nrows())
            .map(|r| {
                let row: Vec<f64> = rows.row(r).iter().copied().collect();
                model.decision_value(Query::GramRow(&row))
            })
            .collect::<Result<_, _>>()?
    };
    let logistic = model.loss == MarginLoss::Logistic;
    let header: &[&str] = if logistic { &["i", "f", "class", "p"] } else { &["i", "f", "class"] };
    let doc = io::csv_document(
        &[],
        header,
        values.iter().enumerate().map(|(i, &f)| {
            let mut row = vec![i.to_string(), num(f), classify_value(f).to_string()];
            if logistic {
                row.push(num(probability_from_logit(f)));
            }
            row
        }),
    );
    io::write_text(&a.out, &doc)
}

fn write_solution(sol: &RkeSolution, x: &DMatrix<f64>, eigenvalues: &[f64], total: f64, dir: &Path) -> Result<(), CliError> {
    let file = io::output_dir(dir)?;
    io::write_text(&file("kernel.txt"), &write_matrix(sol.k.matrix()))?;
    io::write_text(&file("spectrum.csv"), &io::spectrum_csv(eigenvalues, total))?;
    let comments = vec![
        format!("mu={}", num(sol.mu)),
        format!("objective={}", num(sol.objective)),
        format!("converged={}", sol.diagnostics.converged),
    ];
    io::write_text(&file("embedding.csv"), &io::embedding_csv(x, &comments))?;
    let residuals = io::csv_document(
        &[],
        &["i", "j", "d", "fitted", "residual"],
        sol.residuals.iter().map(|r| {
            vec![r.i.to_string(), r.j.to_string(), num(r.d), num(r.fitted), num(r.residual())]
        }),
    );
    io::write_text(&file("residuals.csv"), &residuals)
}

fn report_solver(sol: &RkeSolution) {
    warn(&sol.diagnostics.warnings);
    if !sol.diagnostics.converged {
        eprintln!(
            "warning: solver stopped after {} iterations (residuals {:e}, {:e})",
            sol.diagnostics.iterations, sol.diagnostics.primal_residual, sol.diagnostics.dual_residual
        );
    }
}

pub fn rke_fit(a: RkeFitArgs) -> Result<(), CliError> {
    let pairs = io::read_dissimilarities(&a.dissim)?;
    let n = problem_size(&pairs, a.n);
    let problem = RkeProblem::new(n, pairs)?;
    let sol = fit_kernel(&problem, a.mu, &solver_options(&a.solver))?;
    report_solver(&sol);
    let es = eigentruncate(&sol.k, a.trace_frac)?;
    let all = eigentruncate(&sol.k, 1.0)?;
    let x = pseudo_attributes(&es);
    // the spectrum lists every nonzero eigenvalue, the embedding only the
    // retained ones
    write_solution(&sol, &x, &all.eigenvalues, all.total_trace, &a.out)?;
    println!("objective {}  kept {} of {} dimensions", num(sol.objective), es.p(), all.p());
    Ok(())
}

pub fn newbie(a: NewbieArgs) -> Result<(), CliError> {
    let k = GramMatrix::new(io::read_matrix(&a.kernel)?)?;
    let d_new = io::read_newbie_dissimilarities(&a.dissim)?;
    let opts = NewbieOptions {
        max_iter: a.max_iter,
        ..NewbieOptions::default()
    };
    let emb = newbie_embed(&k, &d_new, &opts)?;
    warn(&emb.warnings);
    let file = io::output_dir(&a.out)?;
    let mut comments = vec![
        format!("c={}", num(emb.c)),
        format!("slack={}", num(emb.slack)),
        format!("loss={}", num(emb.loss)),
    ];
    let k_ext = extend_kernel(&k, &emb)?;
    if let Some(path) = &a.model {
        let model = load_model(path)?;
        let f = newbie_predict(&model, &k_ext)?;
        comments.push(format!("f={}", num(f)));
        comments.push(format!("class={}", classify_value(f)));
        println!("f {}  class {}", num(f), classify_value(f));
    }
    let coords = DMatrix::from_row_slice(1, emb.coords.len(), emb.coords.as_slice());
    io::write_text(&file("embedding.csv"), &io::embedding_csv(&coords, &comments))?;
    let b = io::csv_document(
        &[],
        &["i", "b"],
        emb.b.iter().enumerate().map(|(i, &v)| vec![i.to_string(), num(v)]),
    );
    io::write_text(&file("kernel_row.csv"), &b)?;
    io::write_text(&file("extended_kernel.txt"), &write_matrix(k_ext.matrix()))
}

/// Complete squared-dissimilarity matrix from an `i,j,d` list covering every
/// pair.
fn full_matrix(path: &Path, pairs: &[Pair]) -> Result<DMatrix<f64>, CliError> {
    let n = problem_size(pairs, None);
    let mut m = DMatrix::from_element(n, n, f64::NAN);
    for i in 0..n {
        m[(i, i)] = 0.0;
    }
    for p in pairs {
        m[(p.i, p.j)] = p.d;
        m[(p.j, p.i)] = p.d;
    }
    if let Some(idx) = m.iter().position(|v| v.is_nan()) {
        return Err(CliError::Usage(format!(
            "{}: pair ({}, {}) missing; unroll needs every pair",
            path.display(),
            idx % n,
            idx / n
        )));
    }
    Ok(m)
}

pub fn unroll_manifold(a: UnrollArgs) -> Result<(), CliError> {
    let graph = if let Some(path) = &a.input.points {
        let points = io::read_points(path)?;
        knn_graph(DistanceSource::Points(&points), a.k)?
    } else {
        let path = a.input.dissim.as_ref().expect("clap enforces one distance input");
        let m = full_matrix(path, &io::read_dissimilarities(path)?)?;
        knn_graph(DistanceSource::Matrix(&m), a.k)?
    };
    let opts = UnrollOptions {
        solver: solver_options(&a.solver),
        cap_factor: a.cap_factor,
    };
    let sol = unroll(&graph, a.mu, &opts)?;
    report_solver(&sol);
    let x = unrolled_embedding(&sol, a.dims)?;
    let all = eigentruncate(&sol.k, 1.0)?;
    write_solution(&sol, &x, &all.eigenvalues, all.total_trace, &a.out)?;
    let kept: f64 = all.eigenvalues.iter().take(a.dims).sum::<f64>() / all.total_trace;
    println!("edges {}  top-{} trace fraction {}", graph.edges.len(), a.dims, num(kept));
    Ok(())
}

pub fn cv2(a: Cv2Args, seed: u64) -> Result<(), CliError> {
    let pairs = io::read_dissimilarities(&a.dissim)?;
    let n = problem_size(&pairs, a.n);
    let problem = RkeProblem::new(n, pairs)?;
    let opts = Cv2Options {
        holdout_fraction: a.holdout,
        trace_fraction: a.trace_frac,
        seed,
        solver: solver_options(&a.solver),
    };
    let res = cv2_tune(&problem, &a.mu_grid, &opts)?;
    warn(&res.warnings);
    let doc = io::csv_document(
        &[format!("seed={seed}"), format!("best_mu={}", num(res.best_mu))],
        &["mu", "error"],
        res.curve.iter().map(|&(mu, e)| vec![num(mu), num(e)]),
    );
    io::write_text(&a.out, &doc)?;
    println!("best mu {}", num(res.best_mu));
    Ok(())
}

pub fn figure2(a: Figure2Args, seed: u64) -> Result<(), CliError> {
    let config = Figure2Config {
        n: a.n,
        width: a.width,
        mu_svm: a.mu_svm,
        mu_pl: a.mu_pl,
        mu_grid: default_mu_grid(),
        folds: a.folds,
    };
    let run = run_figure2_default(&config, seed)?;
    let doc = io::csv_document(
        &[],
        &["x", "truth", "svm", "likelihood"],
        run.rows
            .iter()
            .map(|r| vec![num(r.x), num(r.truth), num(r.svm), num(r.likelihood)]),
    );
    io::write_text(&a.out, &doc)?;
    let m = figure2_metrics(&run.rows);
    println!("mu_svm {}  mu_pl {}", num(run.mu_svm), num(run.mu_pl));
    println!(
        "sign agreement {}  mae likelihood {}  mae svm (clamped) {}",
        num(m.sign_agreement),
        num(m.mae_likelihood),
        num(m.mae_svm_clamped)
    );
    Ok(())
}

pub fn generate(g: GenCommand, seed: u64) -> Result<(), CliError> {
    match g {
        GenCommand::Toy { n, points, labels } => {
            let data = generate_toy(n, default_probability, seed)?;
            let pts = io::csv_document(&[], &["x1"], data.x.iter().map(|&x| vec![num(x)]));
            let ys = io::csv_document(
                &[format!("seed={seed}")],
                &["i", "y"],
                data.y.iter().enumerate().map(|(i, &y)| vec![i.to_string(), format!("{}", y as i64)]),
            );
            io::write_text(&points, &pts)?;
            io::write_text(&labels, &ys)
        }
        GenCommand::SwissRoll { n, noise, out, latent } => {
            if !(noise >= 0.0) || !noise.is_finite() {
                return Err(CliError::Usage(format!("--noise {noise} must be finite and nonnegative")));
            }
            let roll = generate_swiss_roll(n, noise, seed)?;
            let pts = io::csv_document(
                &[],
                &["x1", "x2", "x3"],
                roll.points.iter().map(|p| p.iter().map(|&v| num(v)).collect()),
            );
            io::write_text(&out, &pts)?;
            if let Some(path) = latent {
                let doc = io::csv_document(
                    &[],
                    &["i", "t", "h"],
                    (0..n).map(|i| vec![i.to_string(), num(roll.t[i]), num(roll.h[i])]),
                );
                io::write_text(&path, &doc)?;
            }
            Ok(())
        }
    }
}
