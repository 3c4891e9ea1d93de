use std::time::Instant;

use sha2::{Digest, Sha256};

use renewal_core::passage::{PassageSummary, RenewalConstants};
use renewal_core::stats::Summary;
use renewal_core::trial::{calibrate_example2, example1_run, example2_run, TrialOutcome};
use renewal_core::verification::{
    lemma1_diagnostic, lemma3_diagnostic, theorem1_experiment, theorem3_experiment, theorem4_experiment, GofCheck,
};
use renewal_core::RngStream;

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::CliError;
use crate::output::{num, opt, Bundle, RunManifest, Table};

/// Outcome of one experiment before it is wrapped into a [`Bundle`].
struct Report {
    tables: Vec<Table>,
    pass: Option<bool>,
    noncrossing: Option<f64>,
    flags: Vec<String>,
    inconsistent: bool,
}

impl Report {
    fn new(tables: Vec<Table>) -> Self {
        Self { tables, pass: None, noncrossing: None, flags: Vec::new(), inconsistent: false }
    }
}

/// Runs on a dedicated pool of `workers` threads (all cores when `None`).
pub fn run_with_workers(config: &ExperimentConfig, workers: Option<usize>) -> Result<Bundle, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        if w == 0 {
            return Err(CliError::Usage("--workers must be >= 1".into()));
        }
        builder = builder.num_threads(w);
    }
    let pool = builder.build().map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    pool.install(|| run(config))
}

/// Validates `config` and runs it on the current rayon pool.
pub fn run(config: &ExperimentConfig) -> Result<Bundle, CliError> {
    config.validate()?;
    let kind = config.kind()?;
    let config_toml = config.to_toml();
    let hash = hex::encode(Sha256::digest(config_toml.as_bytes()));
    let stream = RngStream::new(config.seed);
    let start = Instant::now();
    let report = match kind {
        ExperimentKind::Simulate => simulate(config, stream)?,
        ExperimentKind::Constants => constants(config, stream)?,
        ExperimentKind::VerifyThm1 => thm1(config, stream)?,
        ExperimentKind::VerifyThm3 => thm3(config, stream)?,
        ExperimentKind::VerifyThm4 => thm4(config, stream)?,
        ExperimentKind::DiagLemma1 => lemma1(config, stream)?,
        ExperimentKind::DiagLemma3 => lemma3(config, stream)?,
        ExperimentKind::ExampleFwci => fwci(config, stream)?,
        ExperimentKind::ExampleRst => rst(config, stream)?,
    };
    let manifest = RunManifest {
        experiment: kind.name().to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: hash,
        seed: config.seed,
        reps: config.reps,
        workers: rayon::current_num_threads(),
        wall_time_s: start.elapsed().as_secs_f64(),
        noncrossing_rate: report.noncrossing,
        // An inconsistent backward functional invalidates any verdict.
        pass: if report.inconsistent { Some(false) } else { report.pass },
        flags: report.flags,
        tables: report.tables.iter().map(|t| format!("{}.csv", t.name)).collect(),
    };
    Ok(Bundle { config_toml, tables: report.tables, manifest })
}

fn bool_cell(b: bool) -> String {
    b.to_string()
}

fn passage_tables(p: &PassageSummary) -> (Table, Table) {
    let mut summary = Table::new(
        "passage",
        vec!["a", "reps", "crossed", "noncrossing_fraction", "mean_t", "se_t", "mean_excess", "se_excess", "usable"],
    );
    summary.push(vec![
        num(p.a),
        p.reps.to_string(),
        p.crossed.to_string(),
        num(p.noncrossing_fraction),
        num(p.t.mean),
        num(p.t.se),
        num(p.excess.mean),
        num(p.excess.se),
        bool_cell(p.usable),
    ]);
    let mut samples = Table::new("samples", vec!["rep", "t_a", "excess", "xi_at_stop", "zeta_at_stop", "crossed"]);
    for (i, s) in p.samples.iter().enumerate() {
        samples.push(vec![
            i.to_string(),
            s.t_a.to_string(),
            num(s.excess),
            num(s.xi_at_stop),
            num(s.zeta_at_stop),
            bool_cell(s.crossed),
        ]);
    }
    (summary, samples)
}

fn passage_flags(p: &PassageSummary, flags: &mut Vec<String>) {
    if !p.usable {
        flags.push(format!("a={}: non-crossing fraction {} exceeds 1%", p.a, p.noncrossing_fraction));
    }
}

fn constants_table(c: &RenewalConstants) -> Table {
    let mut t = Table::new(
        "constants",
        vec![
            "mu",
            "sigma2",
            "rho",
            "se_rho",
            "nu",
            "se_nu",
            "se_rho_minus_nu",
            "lambda",
            "shift",
            "normalization",
            "se_normalization",
            "consistent",
            "reps",
            "capped",
        ],
    );
    t.push(vec![
        num(c.mu),
        num(c.sigma2),
        num(c.rho),
        num(c.se_rho),
        num(c.nu),
        num(c.se_nu),
        num(c.se_rho_minus_nu),
        num(c.lambda),
        num(c.shift),
        num(c.normalization),
        num(c.se_normalization),
        bool_cell(c.consistent),
        c.reps.to_string(),
        c.capped.to_string(),
    ]);
    t
}

fn constants_flags(c: &RenewalConstants, r: &mut Report) {
    if !c.consistent {
        r.inconsistent = true;
        r.flags.push(format!(
            "backward functional inconsistent: E I+/mu = {} (se {})",
            c.normalization, c.se_normalization
        ));
    }
    if c.capped > 0 {
        r.flags.push(format!("{} backward paths hit the depth cap", c.capped));
    }
}

fn simulate(config: &ExperimentConfig, stream: RngStream) -> Result<Report, CliError> {
    let p = config.walk_model()?.prepare()?;
    let passage = p.estimate_et(config.level()?, config.reps, stream)?;
    let (summary, samples) = passage_tables(&passage);
    let mut r = Report::new(vec![summary, samples]);
    r.noncrossing = Some(passage.noncrossing_fraction);
    passage_flags(&passage, &mut r.flags);
    Ok(r)
}

fn constants(config: &ExperimentConfig, stream: RngStream) -> Result<Report, CliError> {
    let p = config.walk_model()?.prepare()?;
    let c = p.estimate_rho_nu(config.backward_depth, config.backward_reps(), stream)?;
    let mut r = Report::new(vec![constants_table(&c)]);
    r.pass = Some(c.consistent);
    constants_flags(&c, &mut r);
    Ok(r)
}

fn thm1(config: &ExperimentConfig, stream: RngStream) -> Result<Report, CliError> {
    let model = config.walk_model()?;
    let y = match config.y {
        Some(y) => y,
        None => {
            let p = model.prepare()?;
            p.mixture().median()? + model.residual.limit()
        }
    };
    let a = config.level()?;
    let rep = theorem1_experiment(model, &config.predicate, y, a, config.b, config.reps, stream)?;
    let mut t = Table::new(
        "thm1",
        vec!["a", "b", "y", "event", "estimate", "theory_value", "std_error", "n_reps", "tail_bound", "pass"],
    );
    t.push(vec![
        num(a),
        num(config.b),
        num(y),
        config.predicate.description(),
        num(rep.estimate),
        num(rep.theory_value),
        num(rep.std_error),
        rep.n_reps.to_string(),
        opt(rep.tail_bound),
        bool_cell(rep.pass),
    ]);
    let mut r = Report::new(vec![t]);
    r.pass = Some(rep.pass);
    Ok(r)
}

fn gof_row(t: &mut Table, name: &str, g: &GofCheck) {
    t.push(vec![name.into(), num(g.statistic), num(g.critical), g.n.to_string(), bool_cell(g.pass)]);
}

fn thm3(config: &ExperimentConfig, stream: RngStream) -> Result<Report, CliError> {
    let rep = theorem3_experiment(
        config.walk_model()?,
        config.level()?,
        config.reps,
        config.backward_reps(),
        config.backward_depth,
        stream,
    )?;
    let mut checks = Table::new("thm3", vec!["check", "statistic", "critical", "n", "pass"]);
    gof_row(&mut checks, "ks_excess", &rep.excess);
    match &rep.xi {
        Some(g) => gof_row(&mut checks, "ks_xi", g),
        None => checks.push(vec!["ks_xi".into(), String::new(), String::new(), "0".into(), bool_cell(rep.xi_degenerate)]),
    }
    gof_row(&mut checks, "ks_zeta", &rep.zeta);
    let corr_bound = 2.576 / (rep.passage.crossed.max(1) as f64).sqrt();
    let chi2 = renewal_core::stats::CHI2_1_CRITICAL_1PCT;
    let n = rep.passage.crossed.to_string();
    checks.push(vec!["corr_zeta_excess".into(), num(rep.corr_zeta_excess), num(corr_bound), n.clone(), bool_cell(rep.corr_zeta_excess.abs() <= corr_bound)]);
    checks.push(vec!["corr_zeta_xi".into(), num(rep.corr_zeta_xi), num(corr_bound), n.clone(), bool_cell(rep.corr_zeta_xi.abs() <= corr_bound)]);
    for (name, v) in [("quadrant_zeta_excess", rep.quadrant_zeta_excess), ("quadrant_zeta_xi", rep.quadrant_zeta_xi)] {
        checks.push(vec![name.into(), opt(v), num(chi2), n.clone(), bool_cell(v.is_none_or(|x| x <= chi2))]);
    }
    let (summary, samples) = passage_tables(&rep.passage);
    let mut r = Report::new(vec![checks, summary, samples, constants_table(&rep.constants)]);
    r.pass = Some(rep.pass());
    r.noncrossing = Some(rep.passage.noncrossing_fraction);
    passage_flags(&rep.passage, &mut r.flags);
    constants_flags(&rep.constants, &mut r);
    Ok(r)
}

fn thm4(config: &ExperimentConfig, stream: RngStream) -> Result<Report, CliError> {
    let grid = config.grid()?;
    let rep = theorem4_experiment(
        config.walk_model()?,
        &grid,
        config.reps,
        config.backward_reps(),
        config.backward_depth,
        stream,
    )?;
    let mut t = Table::new(
        "thm4",
        vec!["a", "estimate", "se_estimate", "predicted", "difference", "std_error", "pass", "noncrossing_fraction", "usable"],
    );
    let mut worst: f64 = 0.0;
    for row in &rep.rows {
        worst = worst.max(row.noncrossing_fraction);
        t.push(vec![
            num(row.a),
            num(row.estimate),
            num(row.se_estimate),
            num(row.predicted),
            num(row.difference),
            num(row.std_error),
            bool_cell(row.pass),
            num(row.noncrossing_fraction),
            bool_cell(row.usable),
        ]);
    }
    let mut verdict = Table::new("thm4_verdict", vec!["shrinking", "final_pass", "pass"]);
    verdict.push(vec![bool_cell(rep.shrinking), bool_cell(rep.final_pass), bool_cell(rep.pass())]);
    let mut r = Report::new(vec![t, verdict, constants_table(&rep.constants)]);
    r.pass = Some(rep.pass());
    r.noncrossing = Some(worst);
    for row in rep.rows.iter().filter(|row| !row.usable) {
        r.flags.push(format!("a={}: non-crossing fraction {} exceeds 1%", row.a, row.noncrossing_fraction));
    }
    constants_flags(&rep.constants, &mut r);
    Ok(r)
}

fn summary_cells(s: &Summary) -> [String; 2] {
    [num(s.mean), num(s.se)]
}

fn lemma1(config: &ExperimentConfig, stream: RngStream) -> Result<Report, CliError> {
    let grid = config.grid()?;
    let rep = lemma1_diagnostic(config.walk_model()?, config.q, &grid, config.reps, stream)?;
    let mut t = Table::new(
        "lemma1",
        vec![
            "a", "q", "m", "big_m", "delta0", "se_delta0", "delta1", "se_delta1", "tail", "se_tail", "scan_end",
            "tail_bound",
        ],
    );
    for row in &rep.rows {
        let w = &row.window;
        let mut cells = vec![num(w.a), num(w.q), w.m.to_string(), w.big_m.to_string()];
        cells.extend(summary_cells(&row.delta0));
        cells.extend(summary_cells(&row.delta1));
        cells.extend(summary_cells(&row.tail));
        cells.push(row.scan_end.to_string());
        cells.push(num(row.tail_bound));
        t.push(cells);
    }
    let mut verdict = Table::new(
        "lemma1_verdict",
        vec!["delta0_non_increasing", "delta1_non_increasing", "tail_non_increasing", "pass"],
    );
    verdict.push(vec![
        bool_cell(rep.delta0_non_increasing),
        bool_cell(rep.delta1_non_increasing),
        bool_cell(rep.tail_non_increasing),
        bool_cell(rep.pass()),
    ]);
    let mut r = Report::new(vec![t, verdict]);
    r.pass = Some(rep.pass());
    Ok(r)
}

fn lemma3(config: &ExperimentConfig, stream: RngStream) -> Result<Report, CliError> {
    let grid = config.grid()?;
    let rep = lemma3_diagnostic(config.walk_model()?, config.q, config.epsilon, &grid, config.reps, stream)?;
    let mut t = Table::new(
        "lemma3",
        vec!["a", "q", "epsilon", "m", "big_m", "estimate", "se_estimate", "edge", "se_edge"],
    );
    for row in &rep.rows {
        let w = &row.window;
        let mut cells = vec![num(w.a), num(w.q), num(rep.epsilon), w.m.to_string(), w.big_m.to_string()];
        cells.extend(summary_cells(&row.estimate));
        cells.extend(summary_cells(&row.edge));
        t.push(cells);
    }
    let mut verdict = Table::new("lemma3_verdict", vec!["non_increasing", "pass"]);
    verdict.push(vec![bool_cell(rep.non_increasing), bool_cell(rep.non_increasing)]);
    let mut r = Report::new(vec![t, verdict]);
    r.pass = Some(rep.non_increasing);
    Ok(r)
}

fn outcomes_table(outcomes: &[TrialOutcome]) -> Table {
    let mut t = Table::new("outcomes", vec!["rep", "stopped", "n", "deaths", "total_time_on_test", "z", "theta_hat"]);
    for (i, o) in outcomes.iter().enumerate() {
        t.push(vec![
            i.to_string(),
            bool_cell(o.stopped),
            o.n.to_string(),
            o.deaths.to_string(),
            num(o.total_time_on_test),
            num(o.z),
            num(o.theta_hat()),
        ]);
    }
    t
}

fn fwci(config: &ExperimentConfig, stream: RngStream) -> Result<Report, CliError> {
    let trial = config.trial_model()?;
    let backward = config.backward_reps.unwrap_or(0);
    let s = example1_run(trial, config.h, config.c, config.reps, backward, stream)?;
    let mut t = Table::new(
        "fwci",
        vec![
            "a", "h", "c", "theta", "reps", "stopped", "noncrossing_fraction", "mean_t", "se_t", "coverage",
            "se_coverage", "mean_theta_hat", "se_theta_hat", "predicted_t", "se_difference", "prediction_pass",
        ],
    );
    let pred = s.prediction.as_ref();
    t.push(vec![
        num(s.a),
        num(s.half_width),
        num(config.c),
        num(trial.theta),
        s.reps.to_string(),
        s.stopped.to_string(),
        num(s.noncrossing_fraction),
        num(s.t.mean),
        num(s.t.se),
        num(s.coverage.mean),
        num(s.coverage.se),
        num(s.theta_hat.mean),
        num(s.theta_hat.se),
        opt(pred.map(|p| p.theory_value)),
        opt(pred.map(|p| p.std_error)),
        pred.map(|p| bool_cell(p.pass)).unwrap_or_default(),
    ]);
    let mut r = Report::new(vec![t, outcomes_table(&s.outcomes)]);
    if let Some(c) = &s.constants {
        r.tables.push(constants_table(c));
        constants_flags(c, &mut r);
    }
    r.noncrossing = Some(s.noncrossing_fraction);
    r.pass = pred.map(|p| p.pass);
    Ok(r)
}

fn rst(config: &ExperimentConfig, stream: RngStream) -> Result<Report, CliError> {
    let trial = config.trial_model()?;
    let horizon = config.horizon.expect("validated");
    let (a, calibrated) = match config.a {
        Some(a) => (a, false),
        None => {
            let reps = config.calibration_reps.unwrap_or(config.reps);
            (calibrate_example2(trial, config.alpha, reps, horizon, stream)?, true)
        }
    };
    let s = example2_run(trial, a, config.reps, horizon, stream)?;
    let mut t = Table::new(
        "rst",
        vec!["a", "calibrated", "alpha", "theta", "horizon", "reps", "rejection", "se_rejection", "mean_t", "se_t"],
    );
    t.push(vec![
        num(a),
        bool_cell(calibrated),
        if calibrated { num(config.alpha) } else { String::new() },
        num(s.theta),
        s.horizon.to_string(),
        s.reps.to_string(),
        num(s.rejection.mean),
        num(s.rejection.se),
        num(s.t.mean),
        num(s.t.se),
    ]);
    Ok(Report::new(vec![t, outcomes_table(&s.outcomes)]))
}
