use star_alloc::harness::{run_experiment, Experiment, ExperimentSpec, Scheme};
use star_alloc::sysmodel::SystemConfig;

fn spec(experiment: Experiment, scheme: Scheme) -> ExperimentSpec {
    let mut s = ExperimentSpec::new(experiment, SystemConfig::with_dims(2, 4));
    s.scheme = scheme;
    s.trials = 3;
    s.seed = 11;
    s
}

fn payload_with_threads(spec: &ExperimentSpec, threads: usize) -> String {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(|| run_experiment(spec).unwrap().payload())
}

#[test]
fn payload_is_independent_of_thread_count() {
    for (exp, scheme) in [(Experiment::Convergence, Scheme::Oma), (Experiment::SumrateVsM, Scheme::Noma)] {
        let mut s = spec(exp, scheme);
        if exp == Experiment::SumrateVsM {
            s.sweep = vec![2.0, 4.0];
        }
        assert_eq!(payload_with_threads(&s, 1), payload_with_threads(&s, 3));
    }
}

#[test]
fn different_seeds_give_different_payloads() {
    let a = spec(Experiment::Convergence, Scheme::Oma);
    let mut b = a.clone();
    b.seed = 12;
    assert_ne!(run_experiment(&a).unwrap().payload(), run_experiment(&b).unwrap().payload());
}
