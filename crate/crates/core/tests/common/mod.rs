//! Oracles and check suites shared by the integration tests and the acceptance run.
//! A check returns `Err` describing the first violation it finds.
#![allow(dead_code)]

pub mod gradients;
pub mod lbp;
pub mod maskgen;
pub mod metrics;

pub type Check = Result<(), String>;

pub fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Check {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Runs a proptest strategy outside the `proptest!` macro with a fixed RNG.
pub fn run_property<S, F>(cases: u32, strategy: &S, test: F) -> Check
where
    S: proptest::strategy::Strategy,
    F: Fn(S::Value) -> Result<(), proptest::test_runner::TestCaseError>,
{
    use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    let mut runner =
        TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    runner.run(strategy, test).map_err(|e| e.to_string())
}
