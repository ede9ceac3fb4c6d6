use edgecast::planner::{emit_demand_csv, parse_demand_csv, DemandMatrix};
use edgecast::trace_model::{default_start, emit_trace_csv, parse_trace_csv, TraceSeries};
use proptest::prelude::*;

fn value() -> impl Strategy<Value = f64> {
    prop_oneof![0.0..1e6f64, Just(0.1 + 0.2), Just(f64::MIN_POSITIVE), (0u32..1000).prop_map(f64::from)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn traces_reemit_byte_identically(series in prop::collection::vec(prop::collection::vec(value(), 1..40), 1..5)) {
        let traces: Vec<TraceSeries> = series
            .into_iter()
            .enumerate()
            .map(|(i, s)| TraceSeries::new(format!("edge-{i}"), default_start(), s).unwrap())
            .collect();
        let text = emit_trace_csv(&traces);
        let back = parse_trace_csv(&text).unwrap();
        prop_assert_eq!(&back, &traces);
        prop_assert_eq!(emit_trace_csv(&back), text);
    }

    #[test]
    fn demand_reemits_byte_identically(providers in 1usize..5, hours in 1usize..10, seed in prop::collection::vec(value(), 50)) {
        let values: Vec<f64> = (0..providers * hours).map(|i| seed[i % seed.len()]).collect();
        let ids = (0..providers).map(|p| format!("p{p}")).collect();
        let demand = DemandMatrix::new(ids, hours, values).unwrap();
        let text = emit_demand_csv(&demand);
        let back = parse_demand_csv(&text).unwrap();
        prop_assert_eq!(&back, &demand);
        prop_assert_eq!(emit_demand_csv(&back), text);
    }
}
