use std::fs;

use fsdc::dataset::{DATASET_HEADER_LEN, DATASET_MAGIC};
use fsdc::{
    build_base_stats, generate_synthetic, load_dataset, save_dataset, BaseStatsTable, DataFormat, Dataset, Error,
    FeatureVector, SplitManifest, SyntheticSpec,
};

fn odd_values() -> Dataset {
    let values = [0.0f32, -0.0, 1e-45, f32::MIN_POSITIVE, 3.0e37, -3.25, 0.1];
    let records = (0..4u32)
        .map(|c| FeatureVector::new(c * 1000 + 7, values.iter().map(|v| v * (c as f32 + 1.0)).collect()))
        .collect();
    Dataset::new(values.len(), records).unwrap()
}

#[test]
fn binary_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("odd.fsdc");
    let ds = odd_values();
    save_dataset(&ds, &path, DataFormat::Binary).unwrap();
    let bytes = fs::read(&path).unwrap();
    assert_eq!(&bytes[..4], DATASET_MAGIC);
    assert_eq!(bytes.len(), DATASET_HEADER_LEN + ds.len() * (4 + 4 * ds.dim()));

    let back = load_dataset(&path, DataFormat::Binary).unwrap();
    for (a, b) in ds.records().iter().zip(back.records()) {
        assert_eq!(a.class_id, b.class_id);
        let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.values), bits(&b.values));
    }
    let again = dir.path().join("again.fsdc");
    save_dataset(&back, &again, DataFormat::Binary).unwrap();
    assert_eq!(bytes, fs::read(&again).unwrap());
}

#[test]
fn damaged_binary_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.fsdc");
    save_dataset(&odd_values(), &path, DataFormat::Binary).unwrap();
    let bytes = fs::read(&path).unwrap();

    let cases: Vec<Vec<u8>> = vec![
        bytes[..bytes.len() - 3].to_vec(),
        [bytes.as_slice(), &[0u8]].concat(),
        [b"FSDX".as_slice(), &bytes[4..]].concat(),
        {
            let mut v = bytes.clone();
            v[4] = 9;
            v
        },
    ];
    for (i, case) in cases.iter().enumerate() {
        fs::write(&path, case).unwrap();
        assert!(
            matches!(load_dataset(&path, DataFormat::Binary), Err(Error::Format(_))),
            "case {i} accepted"
        );
    }
}

#[test]
fn csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    let (ds, _, _) = generate_synthetic(&SyntheticSpec::grouped(4, 2, 3, 5, 1)).unwrap();
    save_dataset(&ds, &path, DataFormat::Csv).unwrap();
    assert_eq!(DataFormat::from_path(&path), DataFormat::Csv);
    assert_eq!(load_dataset(&path, DataFormat::Csv).unwrap(), ds);
}

#[test]
fn stats_table_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("base.fsst");
    let (ds, split, _) = generate_synthetic(&SyntheticSpec::grouped(6, 2, 4, 30, 2)).unwrap();
    let table = build_base_stats(&ds, &split).unwrap();
    table.save(&path).unwrap();
    let back = BaseStatsTable::load(&path).unwrap();
    assert_eq!(back.len(), table.len());
    for (a, b) in table.iter().zip(back.iter()) {
        assert_eq!(a.class_id, b.class_id);
        assert_eq!(a.mean, b.mean);
        assert_eq!(a.covariance, b.covariance);
    }
    assert_eq!(&fs::read(&path).unwrap()[..4], b"FSST");
}

#[test]
fn split_json_is_strict() {
    let s = SplitManifest::from_json(r#"{"base":[1,2],"novel":[3]}"#).unwrap();
    assert!(s.val_classes.is_empty());
    assert!(SplitManifest::from_json(r#"{"base":[1],"novel":[2],"test":[3]}"#).is_err());
    assert!(SplitManifest::from_json(r#"{"base":[1,2],"novel":[2]}"#).is_err());
}
