use pclpv::benchmark::{rerun, run_benchmark, standard_rows, table_csv, table_text, Manifest, RowSpec, RowStatus};
use pclpv::config::{Config, Method, REFERENCE_JSON};

fn short_config() -> Config {
    let mut c = Config::parse(REFERENCE_JSON, std::iter::empty::<(String, String)>()).unwrap();
    c.simulation.t_final = 3.0;
    c.simulation.dt = 0.005;
    c.simulation.x0_set = vec![[5.0, 0.0]];
    c
}

#[test]
fn standard_rows_cover_the_comparison() {
    let rows = standard_rows();
    assert_eq!(rows.len(), 11);
    let count = |m: Method| rows.iter().filter(|r| r.method == m).count();
    assert_eq!((count(Method::Lti), count(Method::Lpv), count(Method::Pclpv), count(Method::Sclpv)), (1, 4, 3, 3));
    let labels: Vec<String> = rows.iter().map(RowSpec::label).collect();
    assert!(labels.contains(&"LPV 2 samples".to_string()));
    assert!(labels.contains(&"scLPV N=12 (13 nodes)".to_string()));
}

#[test]
fn cheap_rows_run_certify_and_rerun_identically() {
    let config = short_config();
    let rows = [RowSpec::lti(), RowSpec::lpv(2), RowSpec::pclpv(1), RowSpec::sclpv(2)];
    let manifest = run_benchmark(&config, &rows);
    assert_eq!(manifest.records.len(), 4);
    assert_eq!(manifest.initial_conditions.len(), 2);
    for r in &manifest.records {
        assert_eq!(r.status, RowStatus::Ok, "{}: {:?}", r.label, r.message);
        assert!(r.certification.as_ref().is_some_and(|c| c.certified), "{}", r.label);
        assert_eq!(r.simulations.len(), 2);
        assert!(r.cost().unwrap().is_finite());
    }

    let text = manifest.to_json().unwrap();
    let parsed = Manifest::from_json(&text).unwrap();
    let again = rerun(&parsed);
    for (a, b) in manifest.records.iter().zip(&again.records) {
        assert!((a.objective.unwrap() - b.objective.unwrap()).abs() <= 1e-9, "{}", a.label);
        assert!((a.cost().unwrap() - b.cost().unwrap()).abs() <= 1e-9, "{}", a.label);
    }

    let csv = table_csv(&manifest);
    let widths: Vec<usize> = csv.lines().map(|l| l.split(',').count()).collect();
    assert_eq!(widths.len(), 5);
    assert!(widths.iter().all(|&w| w == widths[0]));
    assert_eq!(table_text(&manifest).lines().filter(|l| l.contains("LPV 2 samples")).count(), 1);
}

#[test]
fn failing_rows_are_recorded_not_raised() {
    let mut config = short_config();
    config.model.k_alpha = 0.0;
    config.model.k_q = 0.0;
    let manifest = run_benchmark(&config, &[RowSpec::lti()]);
    let r = &manifest.records[0];
    assert_eq!(r.status, RowStatus::Infeasible);
    assert!(r.message.is_some() && r.simulations.is_empty() && r.gain.is_none());
}
