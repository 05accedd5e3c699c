use aggdiff::battery::{Battery, BatteryOptions, Scale};

#[test]
fn seeded_checks_pass_for_ten_seeds() {
    for seed in 0..10 {
        let mut battery = Battery::new(BatteryOptions { scale: Scale::Quick, seed, corrupt_kernel: None });
        for criterion in [1, 3, 4, 5] {
            let c = battery.check(criterion);
            assert!(c.passed, "seed {seed}, criterion {criterion}: {}", c.detail);
        }
    }
}

#[test]
fn unknown_criterion_fails() {
    let mut battery = Battery::new(BatteryOptions::default());
    assert!(!battery.check(11).passed);
}
