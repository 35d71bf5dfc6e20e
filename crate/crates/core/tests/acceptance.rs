//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line.
//!
//! Run with `cargo test -p fractional-ar --test acceptance -- --nocapture`.

use std::sync::OnceLock;
use std::time::{Duration, Instant};

use fractional_ar::oracle::OracleReport;
use fractional_ar::validation::*;

struct Matrix {
    runs: Vec<MatrixRun>,
    elapsed: Duration,
}

fn matrix() -> &'static Matrix {
    static MATRIX: OnceLock<Matrix> = OnceLock::new();
    MATRIX.get_or_init(|| {
        let started = Instant::now();
        let runs = run_matrix().expect("scenario matrix runs");
        Matrix {
            runs,
            elapsed: started.elapsed(),
        }
    })
}

fn verdict(id: u32, title: &str, reports: &[OracleReport], runtime: Option<(Duration, Duration)>) {
    let failed: Vec<&OracleReport> = reports.iter().filter(|r| !r.passed).collect();
    let slow = runtime.is_some_and(|(took, limit)| took >= limit);
    let ok = !reports.is_empty() && failed.is_empty() && !slow;
    let timing = runtime
        .map(|(took, limit)| format!("; runtime {took:.2?} (limit {limit:?})"))
        .unwrap_or_default();
    println!(
        "criterion {id} [{title}]: {} ({}/{} checks{timing})",
        if ok { "PASS" } else { "FAIL" },
        reports.len() - failed.len(),
        reports.len()
    );
    for r in reports {
        println!("    {} {}", if r.passed { "ok  " } else { "FAIL" }, r.csv_row());
    }
    assert!(ok, "criterion {id} failed");
}

#[test]
fn criterion_1_integer_order_reduction() {
    let started = Instant::now();
    let reports = check_integer_order_reduction().unwrap();
    let took = started.elapsed();
    assert_eq!(reports.len(), 4);
    verdict(1, "alpha=1 reduction", &reports, Some((took, Duration::from_secs(5))));
}

#[test]
fn criterion_2_coefficient_limit() {
    let started = Instant::now();
    let reports = check_coefficient_limit().unwrap();
    let took = started.elapsed();
    verdict(2, "coefficient limit", &reports, Some((took, Duration::from_millis(1))));
}

#[test]
fn criterion_3_mass_conservation() {
    let m = matrix();
    let reports = check_mass_conservation(&m.runs);
    assert_eq!(reports.len(), 16);
    verdict(3, "periodic mass conservation", &reports, Some((m.elapsed, Duration::from_secs(60))));
}

#[test]
fn criterion_4_bounds() {
    let m = matrix();
    assert!(m.runs.iter().all(|r| r.snapshots.len() == 5));
    let reports = check_bounds(&m.runs);
    verdict(4, "density and speed bounds", &reports, None);
}

#[test]
fn criterion_5_l1_accuracy() {
    let reports = check_l1_accuracy().unwrap();
    verdict(5, "Caputo L1 accuracy", &reports, None);
}

#[test]
fn criterion_6_flux_consistency_and_jacobian() {
    let mut reports = check_flux_consistency(SEED, 1000);
    reports.extend(check_jacobian(SEED, 1000).unwrap());
    verdict(6, "Roe flux consistency and Jacobian", &reports, None);
}

#[test]
fn criterion_7_scheme_convergence() {
    let started = Instant::now();
    let reports = check_scheme_convergence().unwrap();
    let took = started.elapsed();
    verdict(7, "scheme self-convergence", &reports, Some((took, Duration::from_secs(120))));
}

#[test]
fn criterion_8_smoothing_trend() {
    let reports = check_smoothing_trend(&matrix().runs);
    assert_eq!(reports.len(), 14);
    verdict(8, "congestion smoothing trend", &reports, None);
}

#[test]
fn criterion_9_perturbation_growth() {
    let reports = check_perturbation_growth(SEED).unwrap();
    assert_eq!(reports.len(), 8);
    verdict(9, "perturbation growth", &reports, None);
}
