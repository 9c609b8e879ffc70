use hoseq::checkpoint::Checkpoint;
use hoseq::config::{RunConfig, KEYS};
use hoseq::mmseq::{decode, encode, read_header, read_mmseq, write_mmseq, HEADER_LEN};
use hoseq::Error;
use hoseq_core::data::{DataDims, MultimodalDataset, MultimodalInstance, Split};
use hoseq_core::layers::Activation;
use hoseq_core::model::{HoseqConfig, HoseqModel, ModelMode};
use hoseq_core::rng::RngStream;
use hoseq_core::Tensor;
use proptest::prelude::*;

fn matrix(rng: &mut RngStream, t: usize, d: usize) -> Tensor {
    let data = (0..t * d).map(|_| f64::from(rng.uniform(-4.0, 4.0) as f32)).collect();
    Tensor::from_vec(&[t, d], data).unwrap()
}

fn dataset(seed: u64, n: usize, dims: DataDims) -> MultimodalDataset {
    let mut rng = RngStream::named(seed, "test.mmseq");
    let instances = (0..n)
        .map(|_| {
            let l = matrix(&mut rng, dims.t_k, dims.d_l);
            let v = matrix(&mut rng, dims.t_k, dims.d_v);
            let a = matrix(&mut rng, dims.t_k, dims.d_a);
            MultimodalInstance::new(l, v, a, f64::from(rng.uniform(-3.0, 3.0) as f32)).unwrap()
        })
        .collect();
    MultimodalDataset::new(instances, Split::Train).unwrap()
}

const SMALL: DataDims = DataDims { t_k: 3, d_l: 2, d_v: 4, d_a: 1 };

#[test]
fn single_unit_file_is_44_bytes() {
    let one = DataDims { t_k: 1, d_l: 1, d_v: 1, d_a: 1 };
    let bytes = encode(&dataset(0, 1, one)).unwrap();
    assert_eq!(bytes.len(), 44);
    assert_eq!(&bytes[..8], b"MMSEQ1\0\0");
    assert_eq!(&bytes[8..12], &1u32.to_le_bytes());
    let header = read_header(&bytes).unwrap();
    assert_eq!((header.n, header.dims), (1, one));
    assert_eq!(header.file_len(), Some(44));
}

#[test]
fn header_fields_are_little_endian_in_order() {
    let bytes = encode(&dataset(1, 5, SMALL)).unwrap();
    let fields: Vec<u32> = bytes[8..HEADER_LEN].chunks(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect();
    assert_eq!(fields, [5, 3, 2, 4, 1]);
    assert_eq!(bytes.len(), HEADER_LEN + 4 * 5 * (3 * (2 + 4 + 1) + 1));
}

#[test]
fn blocks_are_modality_major() {
    let d = dataset(2, 2, SMALL);
    let bytes = encode(&d).unwrap();
    let f = |i: usize| f64::from(f32::from_le_bytes(bytes[HEADER_LEN + 4 * i..HEADER_LEN + 4 * i + 4].try_into().unwrap()));
    let second_language_first = f(3 * 2);
    assert_eq!(second_language_first, d.instances()[1].language().data()[0]);
    let labels_start = 2 * 3 * (2 + 4 + 1);
    assert_eq!(f(labels_start), d.instances()[0].label());
    assert_eq!(f(labels_start + 1), d.instances()[1].label());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn roundtrip_is_lossless(seed in any::<u64>(), n in 1usize..6, t_k in 1usize..5, d_l in 1usize..5, d_v in 1usize..5, d_a in 1usize..5) {
        let d = dataset(seed, n, DataDims { t_k, d_l, d_v, d_a });
        let bytes = encode(&d).unwrap();
        let back = decode(&bytes, Split::Train).unwrap();
        prop_assert_eq!(&back, &d);
        prop_assert_eq!(encode(&back).unwrap(), bytes);
    }
}

#[test]
fn corrupted_magic_is_a_format_error() {
    let mut bytes = encode(&dataset(3, 2, SMALL)).unwrap();
    bytes[0] = b'X';
    assert!(matches!(decode(&bytes, Split::Train), Err(Error::Format(_))));
}

#[test]
fn wrong_length_is_a_truncation_error() {
    let bytes = encode(&dataset(4, 2, SMALL)).unwrap();
    let short = &bytes[..bytes.len() - 4];
    assert!(matches!(decode(short, Split::Train), Err(Error::Truncated(_))));
    assert!(matches!(decode(&bytes[..HEADER_LEN - 1], Split::Train), Err(Error::Truncated(_))));
    let mut long = bytes.clone();
    long.extend_from_slice(&[0; 4]);
    assert!(matches!(decode(&long, Split::Train), Err(Error::Truncated(_))));
}

#[test]
fn non_finite_values_are_data_errors() {
    let mut bytes = encode(&dataset(5, 2, SMALL)).unwrap();
    let at = HEADER_LEN + 4 * 7;
    bytes[at..at + 4].copy_from_slice(&f32::NAN.to_le_bytes());
    let err = decode(&bytes, Split::Train).unwrap_err();
    assert!(matches!(err, Error::Core(hoseq_core::Error::Data(_))), "{err}");
    assert_eq!(err.exit_code(), 2);
    let last = bytes.len() - 4;
    let mut bytes = encode(&dataset(5, 2, SMALL)).unwrap();
    bytes[last..].copy_from_slice(&f32::INFINITY.to_le_bytes());
    assert!(matches!(decode(&bytes, Split::Train), Err(Error::Core(hoseq_core::Error::Data(_)))));
}

#[test]
fn zero_extent_header_is_rejected() {
    let mut bytes = encode(&dataset(6, 1, SMALL)).unwrap();
    bytes[12..16].copy_from_slice(&0u32.to_le_bytes());
    assert!(decode(&bytes, Split::Train).is_err());
}

#[test]
fn values_beyond_f32_are_refused() {
    let dims = DataDims { t_k: 1, d_l: 1, d_v: 1, d_a: 1 };
    let t = |x: f64| Tensor::from_vec(&[1, 1], vec![x]).unwrap();
    let d = MultimodalDataset::new(vec![MultimodalInstance::new(t(1e300), t(0.0), t(0.0), 0.0).unwrap()], Split::Train).unwrap();
    assert_eq!(d.dims(), dims);
    assert!(encode(&d).is_err());
}

#[test]
fn files_are_byte_identical_and_readable() {
    let dir = tempfile::tempdir().unwrap();
    let d = dataset(7, 4, SMALL);
    let (a, b) = (dir.path().join("a.mmseq"), dir.path().join("b.mmseq"));
    write_mmseq(&d, &a).unwrap();
    write_mmseq(&d, &b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(read_mmseq(&a, Split::Test).unwrap(), d.with_split(Split::Test));
    let missing = read_mmseq(&dir.path().join("missing"), Split::Test).unwrap_err();
    assert!(matches!(missing, Error::Io { .. }));
    assert_eq!(missing.exit_code(), 2);
}

fn model(seed: u64, dims: DataDims) -> (HoseqModel, hoseq_core::params::ParamStore) {
    let config = HoseqConfig { seed, batchnorm: true, ..HoseqConfig::default() };
    HoseqModel::build(&config, dims).unwrap()
}

#[test]
fn checkpoint_roundtrip_restores_predictions() {
    let dims = DataDims { t_k: 4, d_l: 6, d_v: 4, d_a: 5 };
    let data = dataset(8, 3, dims);
    let (m, mut trained) = model(1, dims);
    let id = trained.buffer_id("common.bn.running_mean").unwrap();
    trained.buffer_mut(id).data_mut()[0] = 0.25;
    let bytes = Checkpoint::from_store(&trained, dims).encode();
    let (_, mut fresh) = model(2, dims);
    assert_ne!(m.predict(&fresh, &data).unwrap(), m.predict(&trained, &data).unwrap());
    let ck = Checkpoint::decode(&bytes).unwrap();
    ck.load_into(&mut fresh, dims).unwrap();
    assert_eq!(fresh.snapshot(), trained.snapshot());
    assert_eq!(m.predict(&fresh, &data).unwrap(), m.predict(&trained, &data).unwrap());
    assert_eq!(ck.encode(), bytes);
}

#[test]
fn checkpoint_rejects_corruption_and_mismatch() {
    let dims = DataDims { t_k: 4, d_l: 6, d_v: 4, d_a: 5 };
    let (_, store) = model(1, dims);
    let bytes = Checkpoint::from_store(&store, dims).encode();
    let mut bad = bytes.clone();
    bad[3] ^= 1;
    assert!(matches!(Checkpoint::decode(&bad), Err(Error::Format(_))));
    assert!(matches!(Checkpoint::decode(&bytes[..bytes.len() - 8]), Err(Error::Truncated(_))));
    let other = DataDims { d_l: 7, ..dims };
    let (_, mut wide) = model(1, other);
    let err = Checkpoint::decode(&bytes).unwrap().load_into(&mut wide, other).unwrap_err();
    assert!(err.to_string().contains("d_l=6") && err.to_string().contains("d_l=7"), "{err}");
    let plain = HoseqConfig::default();
    let (_, mut no_bn) = HoseqModel::build(&plain, dims).unwrap();
    assert!(Checkpoint::decode(&bytes).unwrap().load_into(&mut no_bn, dims).is_err());
}

#[test]
fn rendered_defaults_parse_back() {
    let text = RunConfig::default().render();
    assert_eq!(RunConfig::parse(&text).unwrap(), RunConfig::default());
    for (key, _) in KEYS {
        assert!(text.contains(&format!("\n{key} = ")), "{key}");
    }
}

#[test]
fn non_default_config_roundtrips() {
    let mut c = RunConfig::default();
    c.model.mode = ModelMode::UniqueOnly;
    c.model.activation = Activation::Tanh;
    c.model.learning_rate = 3e-3;
    c.model.adam_epsilon = 1.5e-9;
    c.model.common.fc_widths = vec![12, 7, 8];
    c.model.unique.share_step_weights = false;
    c.model.unique.dropout_rate = 0.35;
    c.train = Some("data/train.mmseq".into());
    let back = RunConfig::parse(&c.render()).unwrap();
    assert_eq!(back, c);
}

#[test]
fn config_errors_name_the_line() {
    let msg = |text: &str| match RunConfig::parse(text) {
        Err(Error::Usage(m)) => m,
        other => panic!("{other:?}"),
    };
    assert!(msg("# c\nbogus = 1\n").contains("line 2"));
    assert!(msg("seed = 1\nseed = 2\n").contains("given twice"));
    assert!(msg("seed = one\n").contains("seed"));
    assert!(msg("mode = sideways\n").contains("mode"));
    assert!(msg("just words\n").contains("line 1"));
    let c = RunConfig::parse("fused_dim = 3\n").unwrap();
    assert!(c.validate().is_err());
}
