use rsc_core::data::{generate_synthetic, preprocess_dataset, LabelScheme, SyntheticConfig};
use rsc_core::experiments::{
    box_csv, emit_csv, results_csv, run_datasize, run_granularity, run_sensitivity, GridSpec, Prepared,
    RESULTS_HEADER,
};
use rsc_core::network::{ArchitectureProfile, Network};
use rsc_core::training::TrainConfig;
use rsc_core::SeededRng;

fn prepared() -> Prepared {
    let ds = preprocess_dataset(&generate_synthetic(&SyntheticConfig::road(32, 3), 6).unwrap(), (32, 32)).unwrap();
    let base = Network::build(&ArchitectureProfile::mini_32(0).conv_base(), &mut SeededRng::new(5)).unwrap();
    Prepared::new(&base, &ds, 1).unwrap()
}

fn quick_config() -> TrainConfig {
    TrainConfig {
        epochs_pretrain: 2,
        epochs_finetune: 1,
        batch_size: 8,
        frozen_blocks_finetune: 4,
        ..TrainConfig::default()
    }
}

#[test]
fn one_point_grid_runs_one_trial_per_seed() {
    let prep = prepared();
    let config = quick_config();
    let grid = GridSpec::single((16, 8), &config);
    let results = run_sensitivity(&grid, &prep, LabelScheme::Three, &config, &[0, 1, 2], 1).unwrap();
    assert_eq!(results.len(), 3);
    assert!(results.iter().all(|r| r.config_fingerprint == results[0].config_fingerprint));
}

#[test]
fn grid_csv_has_a_row_per_trial_and_is_reproducible() {
    let prep = prepared();
    let config = quick_config();
    let mut grid = GridSpec::single((16, 8), &config);
    grid.fc_structures = vec![(16, 8), (8, 4)];
    let run = || run_sensitivity(&grid, &prep, LabelScheme::Two, &config, &[0, 1, 2], 2).unwrap();
    let results = run();
    assert_eq!(results.len(), 6);
    let csv = results_csv(&results, false);
    assert_eq!(csv.lines().count(), 7);
    assert_eq!(csv.lines().next().unwrap(), RESULTS_HEADER);

    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    emit_csv(&results, false, &a).unwrap();
    emit_csv(&run(), false, &b).unwrap();
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}

#[test]
fn granularity_and_datasize_shapes() {
    let prep = prepared();
    let config = quick_config();
    let gran = run_granularity(&prep, &LabelScheme::ALL, (16, 8), &config, &[0], 1).unwrap();
    assert_eq!(gran.len(), 3);
    assert_eq!(gran[0].confusion.num_classes(), 5);

    let (results, rows) = run_datasize(&prep, &[0.5, 1.0], LabelScheme::Three, (16, 8), &config, &[0, 1], 1).unwrap();
    assert_eq!(results.len(), 4);
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.n == 2 && r.q25 <= r.median && r.median <= r.q75));
    assert_eq!(box_csv(&rows).lines().count(), 3);
}

#[test]
fn invalid_grids_are_rejected() {
    let prep = prepared();
    let config = quick_config();
    let mut grid = GridSpec::single((16, 8), &config);
    grid.freeze_depths = vec![9];
    assert!(run_sensitivity(&grid, &prep, LabelScheme::Two, &config, &[0], 1).is_err());
    assert!(run_sensitivity(&GridSpec::single((16, 8), &config), &prep, LabelScheme::Two, &config, &[], 1).is_err());
}
