use msl_core::datagen::{
    encode_idx_images, encode_idx_labels, gen_universe, read_idx, DatagenError, ObjectPool,
    SyntheticUniverseSpec,
};
use proptest::prelude::*;

#[test]
fn idx_files_load_as_pool() {
    let dir = tempfile::tempdir().unwrap();
    let pixels: Vec<Vec<u8>> = (0..6u8)
        .map(|i| vec![i * 40, 255 - i, 0, 17, 255, i])
        .collect();
    let labels = [0u8, 2, 1, 2, 0, 3];
    let (img, lab) = (dir.path().join("images.idx"), dir.path().join("labels.idx"));
    std::fs::write(&img, encode_idx_images(2, 3, &pixels)).unwrap();
    std::fs::write(&lab, encode_idx_labels(&labels)).unwrap();

    let pool = read_idx(&img, &lab).unwrap();
    assert_eq!((pool.len(), pool.dim(), pool.k()), (6, 6, 4));
    assert_eq!(pool.ids(), &[0, 1, 2, 3, 4, 5]);
    assert_eq!(pool.labels(), &[0, 2, 1, 2, 0, 3]);
    for (i, row) in pixels.iter().enumerate() {
        let expected: Vec<f64> = row.iter().map(|&p| f64::from(p) / 255.0).collect();
        assert_eq!(pool.features(i), expected.as_slice());
    }
}

#[test]
fn idx_errors_are_specific() {
    let dir = tempfile::tempdir().unwrap();
    let (img, lab) = (dir.path().join("i"), dir.path().join("l"));
    std::fs::write(&img, encode_idx_images(1, 2, &[vec![1, 2], vec![3, 4]])).unwrap();

    std::fs::write(&lab, encode_idx_labels(&[1])).unwrap();
    assert!(matches!(
        read_idx(&img, &lab),
        Err(DatagenError::CountMismatch {
            images: 2,
            labels: 1
        })
    ));

    std::fs::write(&lab, encode_idx_images(1, 2, &[vec![1, 2]])).unwrap();
    assert!(matches!(
        read_idx(&img, &lab),
        Err(DatagenError::BadMagic { .. })
    ));

    let full = encode_idx_images(1, 2, &[vec![1, 2], vec![3, 4]]);
    std::fs::write(&img, &full[..full.len() - 1]).unwrap();
    std::fs::write(&lab, encode_idx_labels(&[0, 1])).unwrap();
    assert!(matches!(
        read_idx(&img, &lab),
        Err(DatagenError::Truncated { needed: 1, .. })
    ));

    assert!(matches!(
        read_idx(&dir.path().join("absent"), &lab),
        Err(DatagenError::Io(_))
    ));
}

#[test]
fn generated_pools_survive_csv() {
    let u = gen_universe(&SyntheticUniverseSpec::new(4, 5, 60, 40, 11)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for pool in [&u.train, &u.eval] {
        let path = dir.path().join("pool.csv");
        pool.save_csv(&path).unwrap();
        let back = ObjectPool::load_csv(&path, Some(4)).unwrap();
        assert_eq!(back.ids(), pool.ids());
        assert_eq!(back.labels(), pool.labels());
        for i in 0..pool.len() {
            assert_eq!(back.features(i), pool.features(i));
        }
    }
}

#[test]
fn malformed_csv_rows_name_the_line() {
    let text = "id,label,f1\n0,1,0.5\n1,x,0.2\n";
    let err = ObjectPool::read_csv(text.as_bytes(), None).unwrap_err();
    assert!(err.to_string().contains("row 3"), "{err}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn idx_round_trips(rows in 1usize..5, cols in 1usize..5, data in prop::collection::vec(any::<u8>(), 0..200)) {
        let width = rows * cols;
        let n = data.len() / width;
        let pixels: Vec<Vec<u8>> = data.chunks_exact(width).take(n).map(<[u8]>::to_vec).collect();
        let labels: Vec<u8> = (0..n).map(|i| (i % 10) as u8).collect();
        let dir = tempfile::tempdir().unwrap();
        let (img, lab) = (dir.path().join("i"), dir.path().join("l"));
        std::fs::write(&img, encode_idx_images(rows, cols, &pixels)).unwrap();
        std::fs::write(&lab, encode_idx_labels(&labels)).unwrap();
        let pool = read_idx(&img, &lab).unwrap();
        prop_assert_eq!(pool.len(), n);
        for (i, row) in pixels.iter().enumerate() {
            let back: Vec<u8> = pool.features(i).iter().map(|v| (v * 255.0).round() as u8).collect();
            prop_assert_eq!(&back, row);
        }
    }
}
