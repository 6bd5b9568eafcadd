use cocob::coin_betting::{IterateSelection, Trajectory};
use cocob::harness::{self, Budget, CompareConfig, OutputFormat, RunConfig};
use cocob::problems::build_problem;
use cocob::{Error, Optimizer};

/// COCOB on `|x − target|` with `L = 1`, written out from the betting recurrence.
fn hand_recurrence(target: f64, steps: usize) -> Vec<f64> {
    let (mut g_sum, mut reward, mut theta, mut w) = (1.0_f64, 0.0_f64, 0.0_f64, 0.0_f64);
    let mut iterates = vec![w];
    for _ in 0..steps {
        let g: f64 = if w < target {
            1.0
        } else if w > target {
            -1.0
        } else {
            0.0
        };
        g_sum += g.abs();
        reward += w * g;
        theta += g;
        let beta = 2.0 / (1.0 + (-2.0 * theta / (g_sum + 1.0)).exp()) - 1.0;
        w = beta * (1.0 + reward);
        iterates.push(w);
    }
    iterates
}

#[test]
fn abs10_run_follows_recurrence_and_improves() {
    let record = harness::run(&RunConfig::new("abs10", "cocob", 100)).unwrap();
    assert_eq!(record.rows.len(), 101);
    let oracle = hand_recurrence(10.0, 100);
    for (row, w) in record.rows.iter().zip(&oracle) {
        assert!((row.loss - (w - 10.0).abs()).abs() <= 1e-9, "step {}", row.step);
    }
    let mut running = f64::INFINITY;
    for row in &record.rows {
        let next = running.min(row.loss);
        assert!(next <= running);
        running = next;
    }
    assert!(running < 10.0);
    assert!(record.rows.windows(2).all(|p| p[0].step < p[1].step));
    assert!(record.rows.iter().all(|r| r.loss.is_finite()));
    let cert = record.certificate.expect("abs10 carries optimum and bounds");
    assert!(cert.observed_gap <= cert.rhs);
}

#[test]
fn budget_of_one_records_one_step() {
    let record = harness::run(&RunConfig::new("quad@dim=3", "adam", 1).with_learning_rate(0.1)).unwrap();
    assert_eq!(record.rows.len(), 2);
    assert_eq!(record.rows[1].step, 1);
}

#[test]
fn registry_miss_is_an_error() {
    assert!(matches!(
        harness::run(&RunConfig::new("abs10", "newton", 10)),
        Err(Error::UnknownOptimizer(_))
    ));
}

#[test]
fn range_violation_reports_the_step() {
    // Noise-free abs10 never exceeds L; a too-small bound cannot be passed
    // through the registry, so drive the optimizer by hand.
    let mut opt = cocob::coin_betting::Cocob::with_uniform_bound(&[0.0], 0.5).unwrap();
    let err = opt.step(&cocob::coin_betting::GradientSample::objective(vec![1.0])).unwrap_err();
    assert!(matches!(err, Error::GradientRange { .. }));
}

#[test]
fn sgd_grid_matches_contraction_factors() {
    let iterations = 50;
    let problem = build_problem("quad@dim=1", 7).unwrap();
    let c = problem.optimum().unwrap().point[0];
    let s = problem.exact_gradient(&[c + 1.0]).unwrap()[0];
    let grid = [0.01, 0.5, 1.9];
    let oracle: Vec<f64> = grid
        .iter()
        .map(|eta| 0.5 * s * ((1.0 - eta * s).powi(iterations as i32) * c).powi(2))
        .collect();
    let template = RunConfig::new("quad@dim=1", "sgd", iterations).with_seed(7);
    let result = harness::grid_search(&template, &grid).unwrap();
    assert_eq!(result.records.len(), 3);
    // Compare distances to the optimum: near it, w − c carries O(ε|c|) cancellation.
    for (record, expected) in result.records.iter().zip(&oracle) {
        let dist = (2.0 * record.final_loss / s).sqrt();
        let want = (2.0 * expected / s).sqrt();
        assert!((dist - want).abs() <= 1e-9 * want + 1e-14 * c.abs(), "{dist} vs {want}");
    }
    let best = (0..3).min_by(|&a, &b| oracle[a].total_cmp(&oracle[b])).unwrap();
    assert_eq!(result.best_learning_rate, grid[best]);

    let single = harness::grid_search(&template, &[0.3]).unwrap();
    assert_eq!(single.best_learning_rate, 0.3);
    assert!(harness::grid_search(&template, &[]).is_err());
}

#[test]
fn grid_ties_go_to_the_smaller_rate() {
    // A zero-gradient start: every rate leaves the loss unchanged.
    let template = RunConfig::new("abs10@target=0", "sgd", 5);
    let result = harness::grid_search(&template, &[0.5, 0.1, 0.3]).unwrap();
    assert!(result.records.iter().all(|r| r.final_loss == 0.0));
    assert_eq!(result.best_learning_rate, 0.1);
}

#[test]
fn standard_grid_has_seventeen_runs() {
    let template = RunConfig::new("quad@dim=2", "adagrad", 20);
    let result = harness::grid_search(&template, &cocob::baseline::standard_lr_grid()).unwrap();
    assert_eq!(result.records.len(), 17);
}

#[test]
fn emitted_csv_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = RunConfig::new("logreg@n=50,dim=3,batch=5", "cocob", 30);
    config.watch = vec![0, 2];
    let record = harness::run(&config).unwrap();
    let paths = harness::emit(&record, OutputFormat::Csv, dir.path(), "run").unwrap();
    assert_eq!(paths.len(), 2);
    let text = std::fs::read_to_string(&paths[0]).unwrap();
    assert!(text.ends_with('\n'));
    let mut reader = csv::Reader::from_path(&paths[0]).unwrap();
    let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, ["step", "loss", "grad_norm", "wall_ms", "eff_lr_0", "eff_lr_2"]);
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), record.rows.len());
    for (parsed, row) in rows.iter().zip(&record.rows) {
        assert_eq!(parsed[0].parse::<u64>().unwrap(), row.step);
        assert_eq!(parsed[1].parse::<f64>().unwrap(), row.loss);
        assert_eq!(parsed[2].parse::<f64>().unwrap(), row.grad_norm);
        assert_eq!(parsed[3].parse::<f64>().unwrap(), row.wall_ms);
        assert_eq!(parsed[4].parse::<f64>().unwrap(), row.eff_lr[0]);
        assert_eq!(parsed[5].parse::<f64>().unwrap(), row.eff_lr[1]);
    }
    let sidecar: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&paths[1]).unwrap()).unwrap();
    assert_eq!(sidecar["config"]["problem"], "logreg@n=50,dim=3,batch=5");
    assert!(sidecar["certificate"]["rhs"].is_f64());
    assert!(sidecar["certificate"]["observed_gap"].is_f64());
    assert!(sidecar["environment"]["version"].is_string());
}

#[test]
fn one_row_record_and_json_format() {
    let dir = tempfile::tempdir().unwrap();
    let mut record = harness::run(&RunConfig::new("wqc", "cocob", 1)).unwrap();
    record.rows.truncate(1);
    let paths = harness::emit(&record, OutputFormat::Csv, dir.path(), "one").unwrap();
    let text = std::fs::read_to_string(&paths[0]).unwrap();
    assert_eq!(text.lines().count(), 2);

    let paths = harness::emit(&record, OutputFormat::Json, dir.path(), "one_json").unwrap();
    assert_eq!(paths.len(), 1);
    let value: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&paths[0]).unwrap()).unwrap();
    assert_eq!(value["rows"].as_array().unwrap().len(), 1);
}

#[test]
fn unwritable_path_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("plain-file");
    std::fs::write(&file, "x").unwrap();
    let record = harness::run(&RunConfig::new("abs10", "cocob", 2)).unwrap();
    assert!(harness::emit(&record, OutputFormat::Csv, &file.join("sub"), "r").is_err());
}

#[test]
fn watched_columns_match_trajectory() {
    let mut config = RunConfig::new("quad@dim=3", "cocob", 40);
    config.watch = vec![1];
    let record = harness::run(&config).unwrap();

    let problem = build_problem("quad@dim=3", 0).unwrap();
    let mut opt = cocob::coin_betting::Cocob::new(&problem.initial_point(), &problem.lipschitz().unwrap()).unwrap();
    let mut trajectory = Trajectory::new(opt.params().to_vec());
    for q in 0..=40 {
        let g = problem.subgradient(opt.params(), q);
        opt.step(&g).unwrap();
        trajectory.push(g, opt.params().to_vec());
    }
    let expected = trajectory.effective_learning_rate(1).unwrap();
    for (row, e) in record.rows.iter().zip(&expected) {
        assert_eq!(row.eff_lr[0], *e);
    }
}

#[test]
fn selections_are_seeded() {
    let mut config = RunConfig::new("wqc", "cocob", 60);
    assert_eq!(harness::run(&config).unwrap().selection, IterateSelection::RandomIndex);
    let a = harness::run(&config).unwrap();
    let b = harness::run(&config).unwrap();
    assert_eq!(a.selected, b.selected);
    config.selection = Some(IterateSelection::Last);
    let last = harness::run(&config).unwrap();
    assert_eq!(last.selected_loss, last.final_loss);
}

#[test]
fn epoch_budget_uses_declared_epoch_length() {
    let mut config = RunConfig::new("mlp-blobs@per_class=10,width=8,batch=10", "cocob-backprop", 1);
    config.budget = Budget::Epochs(2);
    let record = harness::run(&config).unwrap();
    assert_eq!(record.iterations, 6);
    config.problem = "abs10".to_string();
    assert!(harness::run(&config).is_err());
}

#[test]
fn compare_summary_shape() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = CompareConfig::new("quad@dim=2", Budget::Iterations(30), 3);
    config.grid = vec![0.01, 0.1];
    let comparison = harness::compare(&config).unwrap();
    assert_eq!(comparison.summary.len(), 7);
    for row in &comparison.summary {
        let untuned = row.optimizer.starts_with("cocob");
        assert_eq!(row.learning_rate.is_none(), untuned, "{}", row.optimizer);
    }
    harness::write_comparison(&comparison, dir.path()).unwrap();
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 8);
    assert!(summary.lines().nth(1).unwrap().contains(",—,"));
    for name in harness::OPTIMIZER_NAMES {
        assert!(dir.path().join(format!("{name}.csv")).exists());
    }
}
