use battopf_core::{synthetic_case, DCNetwork, SyntheticOptions};

fn small(periods: usize) -> SyntheticOptions {
    SyntheticOptions {
        periods,
        buses: 120,
        generators: 20,
        wind_farms: 4,
        batteries: 4,
        peak_load_mw: 900.0,
        wind_capacity_mw: 220.0,
        ..SyntheticOptions::default()
    }
}

#[test]
fn same_options_same_case() {
    let a = synthetic_case(&small(3)).unwrap();
    let b = synthetic_case(&small(3)).unwrap();
    assert_eq!(a, b);
    let c = synthetic_case(&SyntheticOptions { seed: 1, ..small(3) }).unwrap();
    assert_ne!(a.buses.len(), 0);
    assert_ne!(a.branches, c.branches);
}

#[test]
fn layout_does_not_depend_on_the_horizon() {
    let a = synthetic_case(&small(2)).unwrap();
    let b = synthetic_case(&small(5)).unwrap();
    let ends = |c: &battopf_core::GridCase| {
        c.branches
            .iter()
            .map(|br| (br.from_bus, br.to_bus, br.susceptance))
            .collect::<Vec<_>>()
    };
    assert_eq!(ends(&a), ends(&b));
    let buses = |c: &battopf_core::GridCase| {
        (
            c.renewables.iter().map(|r| r.bus).collect::<Vec<_>>(),
            c.batteries.iter().map(|b| b.spec.bus).collect::<Vec<_>>(),
        )
    };
    assert_eq!(buses(&a), buses(&b));
}

#[test]
fn sizes_match_the_options() {
    let opts = SyntheticOptions::default();
    let case = synthetic_case(&opts).unwrap();
    case.validate().unwrap();
    assert_eq!(case.buses.len(), 2746);
    assert_eq!(case.generators.len(), 450);
    assert_eq!(case.renewables.len(), 32);
    assert_eq!(case.batteries.len(), 32);
    assert_eq!(case.uncertainty.dim(), 32 * opts.periods);
    assert!(case.uncertainty.is_full_dimensional());
    DCNetwork::build(&case).unwrap();
}

#[test]
fn generation_covers_peak_load() {
    let case = synthetic_case(&small(4)).unwrap();
    for t in 0..4 {
        let cap: f64 = case.generators.iter().map(|g| g.pmax[t]).sum();
        let load: f64 = case.loads[t].iter().sum();
        assert!(cap > load);
    }
}
