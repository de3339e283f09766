use std::time::Duration;

use bopp::error::{Error, ExternalError};
use bopp::objectives::{external_objective, Objective};
use bopp::optimizer::BoxDomain;

fn unit(dim: usize) -> BoxDomain {
    BoxDomain::cube(dim, 0.0, 1.0).unwrap()
}

#[test]
fn constant_command() {
    let f = external_objective("echo 0.5", unit(2));
    assert_eq!(f.evaluate_true(&[0.1, 0.9]).unwrap(), 0.5);
    assert_eq!(f.evaluate_true(&[0.3, 0.3]).unwrap(), 0.5);
}

#[test]
fn reads_point_from_stdin() {
    let f = external_objective("awk '{ s = 0; for (i = 1; i <= NF; i++) s += $i; print s }'", unit(2));
    assert_eq!(f.evaluate_true(&[0.25, 0.75]).unwrap(), 1.0);
}

#[test]
fn nonzero_exit_reports_code() {
    let f = external_objective("exit 3", unit(1));
    match f.evaluate_true(&[0.5]) {
        Err(Error::External(ExternalError::Exit { code, .. })) => assert_eq!(code, Some(3)),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn non_numeric_output_is_parse_error() {
    let f = external_objective("echo hello", unit(1));
    assert!(matches!(
        f.evaluate_true(&[0.5]),
        Err(Error::External(ExternalError::Parse { .. }))
    ));
}

#[test]
fn slow_command_times_out() {
    let f = external_objective("sleep 5; echo 1", unit(1)).with_timeout(Duration::from_millis(200));
    assert!(matches!(
        f.evaluate_true(&[0.5]),
        Err(Error::External(ExternalError::Timeout { .. }))
    ));
}

#[test]
fn missing_program_is_an_error() {
    let f = external_objective("/nonexistent/definitely-not-here", unit(1));
    assert!(f.evaluate_true(&[0.5]).is_err());
}
