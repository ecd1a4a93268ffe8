use std::fs;
use std::path::Path;

use brainscale::data::*;
use brainscale::synth::{TwoClassSpec, gen_two_class_cohort};
use brainscale::Error;

fn small_cohort(subjects_per_class: usize, n_timepoints: usize) -> CohortDataset {
    let spec = TwoClassSpec {
        subjects_per_class,
        n_timepoints,
        ..Default::default()
    };
    gen_two_class_cohort(&spec).unwrap().dataset
}

fn read_bytes(root: &Path, rel: &str) -> Vec<u8> {
    fs::read(root.join(rel)).unwrap()
}

#[test]
fn write_load_round_trip_is_lossless() {
    let dir = tempfile::tempdir().unwrap();
    let ds = small_cohort(1, 190);
    let manifest = write_cohort(&ds, dir.path()).unwrap();
    let loaded = load_cohort(dir.path(), &manifest).unwrap();
    assert_eq!(loaded, ds);
    assert_eq!(loaded.subjects().len(), 2);
    let rois: usize = loaded.subjects()[0].networks.values().map(Vec::len).sum();
    assert_eq!(rois, TOTAL_ROIS);

    // a second write of the loaded data is byte-identical
    let again = tempfile::tempdir().unwrap();
    write_cohort(&loaded, again.path()).unwrap();
    for rel in ["manifest.csv", "subjects/s000/default_mode.csv", "subjects/s001/cerebellum.csv"] {
        assert_eq!(read_bytes(dir.path(), rel), read_bytes(again.path(), rel), "{rel}");
    }
}

#[test]
fn missing_network_file() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_cohort(&small_cohort(1, 20), dir.path()).unwrap();
    fs::remove_file(dir.path().join("subjects/s001/occipital.csv")).unwrap();
    let err = load_cohort(dir.path(), &manifest).unwrap_err();
    match err {
        Error::MissingNetworkFile { subject, path } => {
            assert_eq!(subject, "s001");
            assert!(path.ends_with("occipital.csv"));
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn dropped_column_is_a_roi_count_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_cohort(&small_cohort(1, 20), dir.path()).unwrap();
    let path = dir.path().join("subjects/s000/default_mode.csv");
    let trimmed: String = fs::read_to_string(&path)
        .unwrap()
        .lines()
        .map(|l| {
            let cut = l.rfind(',').unwrap();
            format!("{}\n", &l[..cut])
        })
        .collect();
    fs::write(&path, trimmed).unwrap();
    assert!(matches!(
        load_cohort(dir.path(), &manifest),
        Err(Error::RoiCountMismatch { expected: 34, found: 33, .. })
    ));
}

#[test]
fn non_finite_sample_is_located() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_cohort(&small_cohort(1, 20), dir.path()).unwrap();
    let path = dir.path().join("subjects/s001/cerebellum.csv");
    let mut lines: Vec<String> = fs::read_to_string(&path).unwrap().lines().map(String::from).collect();
    let mut fields: Vec<String> = lines[4].split(',').map(String::from).collect();
    fields[2] = "NaN".into();
    lines[4] = fields.join(",");
    fs::write(&path, lines.join("\n")).unwrap();
    match load_cohort(dir.path(), &manifest).unwrap_err() {
        Error::NonFiniteSample {
            subject,
            network,
            roi,
            timepoint,
        } => {
            assert_eq!((subject.as_str(), network.as_str(), roi, timepoint), ("s001", "cerebellum", 2, 3));
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn unequal_lengths_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_cohort(&small_cohort(1, 20), dir.path()).unwrap();
    let path = dir.path().join("subjects/s001/sensorimotor.csv");
    let text = fs::read_to_string(&path).unwrap();
    let shorter: Vec<&str> = text.lines().take(15).collect();
    fs::write(&path, shorter.join("\n")).unwrap();
    assert!(matches!(load_cohort(dir.path(), &manifest), Err(Error::LengthMismatch { .. })));
}

#[test]
fn labels_outside_binary_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_cohort(&small_cohort(1, 20), dir.path()).unwrap();
    let text = fs::read_to_string(&manifest).unwrap().replace("s001,1,", "s001,2,");
    fs::write(&manifest, text).unwrap();
    assert!(matches!(load_cohort(dir.path(), &manifest), Err(Error::InvalidLabel(_))));
}

#[test]
fn validation_counts_and_constant_flags() {
    let ds = small_cohort(50, 20);
    let report = validate_dataset(&ds);
    assert_eq!(report.class_counts["class0"], 50);
    assert_eq!(report.class_counts["class1"], 50);
    assert!(report.constant_series.is_empty());

    let mut subjects = ds.subjects().to_vec();
    subjects[3].networks.get_mut(&NetworkId::Occipital).unwrap()[5].values.fill(0.0);
    let report = validate_dataset(&CohortDataset::new(subjects).unwrap());
    assert_eq!(report.constant_series.len(), 1);
    assert_eq!(report.constant_series[0].roi_id, 5);
    assert_eq!(report.constant_series[0].network, NetworkId::Occipital);
}

#[test]
fn empty_cohort_warns() {
    let report = validate_dataset(&CohortDataset::new(vec![]).unwrap());
    assert_eq!(report.n_subjects, 0);
    assert!(!report.warnings.is_empty());
}

#[test]
fn atlas_totals() {
    assert_eq!(NetworkId::ALL.iter().map(|n| n.roi_count()).sum::<usize>(), TOTAL_ROIS);
    assert_eq!(NetworkId::DefaultMode.roi_count(), 34);
    assert_eq!(NetworkId::Cerebellum.roi_count(), 18);
}

#[test]
fn voxel_block_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("block.csv");
    fs::write(&path, "x,y,z,t0,t1,t2\n0,0,0,1,2,3\n1,0,0,4,5,6\n").unwrap();
    let block = VoxelBlock::read_csv(&path, 9).unwrap();
    assert_eq!(block.dims(), (2, 1, 1));
    assert_eq!(block.series(block.index(1, 0, 0)), &[4.0, 5.0, 6.0]);
}
