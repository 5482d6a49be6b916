use ewkit::config::{Algorithm, AdversaryKind, DomainKind, EtaSpec, ExperimentConfig};
use ewkit::output::{ledger_csv, CSV_HEADER};
use ewkit::{run_experiment, run_replicate};
use ewkit_core::ew::Flavor;
use ewkit_core::RegretLedger;

fn small(algorithm: Algorithm) -> ExperimentConfig {
    let mut c = ExperimentConfig::for_algorithm(algorithm);
    c.horizon = Some(if algorithm == Algorithm::Bandit { 300 } else { 400 });
    c.replicates = 2;
    c.seed = 17;
    c
}

#[test]
fn every_algorithm_passes_its_checks_in_both_flavors() {
    for algorithm in Algorithm::ALL {
        for flavor in [Flavor::Greedy, Flavor::Lazy] {
            let mut c = small(algorithm);
            c.flavor = flavor;
            let e = run_experiment(&c).unwrap_or_else(|err| panic!("{algorithm}: {err}"));
            assert!(e.failures().is_empty(), "{algorithm} {flavor:?}: {:?}", e.failures());
            for o in &e.outcomes {
                assert_eq!(o.ledger.len(), c.horizon());
            }
        }
    }
}

#[test]
fn box_domains_and_schedules() {
    let mut c = small(Algorithm::Gd);
    c.domain = DomainKind::Box;
    c.radius = 0.5;
    for eta in [EtaSpec::Tuned, EtaSpec::Constant(0.3), EtaSpec::InverseSqrt(0.5)] {
        for flavor in [Flavor::Greedy, Flavor::Lazy] {
            c.eta = eta;
            c.flavor = flavor;
            let e = run_experiment(&c).unwrap();
            assert!(e.failures().is_empty(), "{eta} {flavor:?}: {:?}", e.failures());
        }
    }
    let mut c = small(Algorithm::StronglyConvex);
    c.domain = DomainKind::Box;
    assert!(run_experiment(&c).unwrap().failures().is_empty());
    let mut c = small(Algorithm::Bandit);
    c.domain = DomainKind::Box;
    c.exact_moment = true;
    assert!(run_experiment(&c).unwrap().failures().is_empty());
}

#[test]
fn same_seed_gives_identical_ledgers() {
    for algorithm in [Algorithm::Gd, Algorithm::Ons, Algorithm::Squint, Algorithm::Bandit] {
        let c = small(algorithm);
        let a = run_experiment(&c).unwrap();
        let b = run_experiment(&c).unwrap();
        for (x, y) in a.outcomes.iter().zip(&b.outcomes) {
            assert_eq!(ledger_csv(&x.ledger), ledger_csv(&y.ledger));
        }
        // parallel replicates equal sequential ones
        let solo = run_replicate(&c, 1).unwrap();
        assert_eq!(ledger_csv(&solo.ledger), ledger_csv(&a.outcomes[1].ledger));
        let mut other = c.clone();
        other.seed += 1;
        let o = run_replicate(&other, 1).unwrap();
        assert_ne!(ledger_csv(&o.ledger), ledger_csv(&solo.ledger));
    }
}

#[test]
fn three_rows_make_four_csv_lines() {
    let mut ledger = RegretLedger::new();
    ledger.push(1.0, 0.5, 0.0, 2.0);
    ledger.push(0.25, 0.5, 0.1, 2.0);
    ledger.push(0.0, 0.0, f64::NAN, 3.0);
    let csv = ledger_csv(&ledger);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[0], CSV_HEADER);
    assert!(lines[2].starts_with("2,2.5000000000000000e-1,1.2500000000000000e0,1.0000000000000000e0,2.5000000000000000e-1,"));
    assert!(lines[3].contains("NaN"));
}

#[test]
fn zero_losses_give_zero_regret() {
    for algorithm in [Algorithm::EgPm, Algorithm::Gd, Algorithm::IProd, Algorithm::Squint, Algorithm::CoinBetting] {
        let mut c = small(algorithm);
        c.adversary = Some(AdversaryKind::Zero);
        let e = run_experiment(&c).unwrap();
        for o in &e.outcomes {
            for r in o.ledger.rows() {
                assert_eq!(r.regret, 0.0, "{algorithm}");
                assert!(r.bound >= 0.0);
            }
        }
    }
}

#[test]
fn constant_rate_bound_column_is_nondecreasing() {
    for flavor in [Flavor::Greedy, Flavor::Lazy] {
        let mut c = small(Algorithm::Gd);
        c.eta = EtaSpec::Constant(0.2);
        c.flavor = flavor;
        let e = run_experiment(&c).unwrap();
        let rows = e.outcomes[0].ledger.rows();
        assert!(rows.windows(2).all(|w| w[1].bound >= w[0].bound));
    }
}

#[test]
fn mixability_gaps_are_nonpositive_for_exp_concave_runs() {
    let e = run_experiment(&small(Algorithm::Kt)).unwrap();
    for o in &e.outcomes {
        assert!(o.ledger.rows().iter().all(|r| r.mix_gap <= 1e-12));
    }
}

#[test]
fn outputs_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small(Algorithm::EgPm);
    c.out = Some(dir.path().join("run"));
    run_experiment(&c).unwrap();
    for rep in ["rep0", "rep1"] {
        let base = dir.path().join("run").join(rep);
        let csv = std::fs::read_to_string(base.join("ledger.csv")).unwrap();
        assert_eq!(csv.lines().count(), 401);
        assert!(std::fs::read_to_string(base.join("regret.svg")).unwrap().starts_with("<svg"));
        assert!(std::fs::read_to_string(base.join("summary.txt")).unwrap().contains("final_regret"));
    }
    let summary = std::fs::read_to_string(dir.path().join("run/summary.txt")).unwrap();
    assert!(summary.starts_with(&c.to_text()));
    let reloaded = ExperimentConfig::parse_str(&c.to_text()).unwrap();
    assert_eq!(reloaded.to_text(), c.to_text());
}
