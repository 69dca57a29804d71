use hjsvd::io::*;
use hjsvd::{ColumnMatrix, Signature};
use proptest::prelude::*;

#[test]
fn header_layout() {
    let m = ColumnMatrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]]);
    let bytes = encode_matrix(&m, Some(Signature::new(2, 1).unwrap())).unwrap();
    assert_eq!(&bytes[..4], b"JHSV");
    assert_eq!(&bytes[4..8], &3u32.to_le_bytes());
    assert_eq!(&bytes[8..12], &2u32.to_le_bytes());
    assert_eq!(&bytes[12..16], &1u32.to_le_bytes());
    assert_eq!(&bytes[16..20], &1u32.to_le_bytes());
    // column-major payload
    assert_eq!(&bytes[20..28], &1.0f64.to_le_bytes());
    assert_eq!(&bytes[28..36], &3.0f64.to_le_bytes());
    assert_eq!(bytes.len(), HEADER_LEN + 6 * 8);
}

#[test]
fn malformed_input_is_rejected() {
    let m = ColumnMatrix::identity(2);
    let bytes = encode_matrix(&m, None).unwrap();
    assert!(matches!(decode_matrix(&bytes[..10]), Err(IoError::Truncated { .. })));
    assert!(matches!(decode_matrix(&bytes[..bytes.len() - 1]), Err(IoError::Truncated { .. })));
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(decode_matrix(&bad), Err(IoError::BadMagic)));
    let mut flags = bytes.clone();
    flags[12] = 6;
    assert!(matches!(decode_matrix(&flags), Err(IoError::BadFlags(6))));
    let mut np = encode_matrix(&m, Some(Signature::definite(2))).unwrap();
    np[16] = 9;
    assert!(matches!(decode_matrix(&np), Err(IoError::BadSignature { n_plus: 9, cols: 2 })));
    assert!(matches!(matrix_from_csv("1,2\n3\n"), Err(IoError::Csv { line: 2, .. })));
    assert!(matches!(vector_from_csv("1\nx\n"), Err(IoError::Csv { line: 2, .. })));
}

#[test]
fn files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let m = ColumnMatrix::from_fn(4, 3, |i, j| (i * 3 + j) as f64 - 0.25);
    let sig = Signature::new(3, 2).unwrap();
    let bin = dir.path().join("g.mat");
    write_matrix(&bin, &m, Some(sig)).unwrap();
    assert_eq!(read_matrix(&bin).unwrap(), (m.clone(), Some(sig)));
    assert_eq!(load_matrix(&bin).unwrap(), (m.clone(), Some(sig)));
    let csv = dir.path().join("g.csv");
    std::fs::write(&csv, matrix_to_csv(&m)).unwrap();
    assert_eq!(load_matrix(&csv).unwrap(), (m, None));
    assert!(matches!(read_matrix(&dir.path().join("missing.mat")), Err(IoError::Io(_))));
}

proptest! {
    #[test]
    fn binary_round_trip(rows in 1usize..6, cols in 1usize..6, seed in any::<u64>(), np in 0usize..6) {
        let m = ColumnMatrix::from_fn(rows, cols, |i, j| f64::from_bits(seed.rotate_left((i * 7 + j) as u32) >> 2));
        let sig = Signature::new(cols, np.min(cols));
        let back = decode_matrix(&encode_matrix(&m, sig).unwrap()).unwrap();
        prop_assert_eq!(back.0.as_slice().iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
                        m.as_slice().iter().map(|x| x.to_bits()).collect::<Vec<_>>());
        prop_assert_eq!(back.1, sig);
    }

    #[test]
    fn csv_round_trip(v in prop::collection::vec(-1e300f64..1e300, 1..30), cols in 1usize..4) {
        prop_assert_eq!(vector_from_csv(&vector_to_csv(&v)).unwrap(), v.clone());
        let rows = v.len().div_ceil(cols);
        let m = ColumnMatrix::from_fn(rows, cols, |i, j| v[(i * cols + j) % v.len()]);
        prop_assert_eq!(matrix_from_csv(&matrix_to_csv(&m)).unwrap(), m);
    }
}
