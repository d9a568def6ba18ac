use rsc_core::error::Error;
use rsc_core::layers::{parameter_count, LayerSpec};
use rsc_core::network::{ArchitectureProfile, Head, Network, WeightArchive};
use rsc_core::{SeededRng, Tensor};

fn conv_count(i: usize, o: usize) -> usize {
    o * i * 9 + o
}

fn dense_count(i: usize, o: usize) -> usize {
    o * i + o
}

#[test]
fn vgg_parameter_counts() {
    assert_eq!(parameter_count(&LayerSpec::Conv2D { in_ch: 3, out_ch: 64 }).unwrap(), 1_792);
    assert_eq!(parameter_count(&LayerSpec::Conv2D { in_ch: 512, out_ch: 512 }).unwrap(), 2_359_808);

    let widths = [(3, 64), (64, 64), (64, 128), (128, 128), (128, 256), (256, 256), (256, 256)]
        .into_iter()
        .chain([(256, 512), (512, 512), (512, 512)])
        .chain([(512, 512); 3]);
    let conv_total: usize = widths.map(|(i, o)| conv_count(i, o)).sum();
    assert_eq!(conv_total, 14_714_688);

    let net = Network::build(&ArchitectureProfile::vgg16_150(3), &mut SeededRng::new(0)).unwrap();
    let base = net.truncate_to_conv_base();
    assert_eq!(base.total_parameters(), conv_total);
    let head = dense_count(8192, 512) + dense_count(512, 256) + dense_count(256, 3);
    assert_eq!((dense_count(8192, 512), dense_count(512, 256), dense_count(256, 3)), (4_194_816, 131_328, 771));
    assert_eq!(net.total_parameters(), conv_total + head);
}

#[test]
fn spatial_trace_and_flatten_width() {
    let vgg = ArchitectureProfile::vgg16_150(5);
    assert_eq!(vgg.spatial_trace(), vec![150, 75, 37, 18, 9, 4]);
    assert_eq!(vgg.flatten_width(), 8192);
    let mini = ArchitectureProfile::mini_32(5);
    assert_eq!(mini.spatial_trace(), vec![32, 16, 8, 4, 2, 1]);
    assert_eq!(mini.flatten_width(), 32);
}

#[test]
fn forward_gives_a_distribution_and_rejects_wrong_shapes() {
    let net = Network::build(&ArchitectureProfile::mini_32(3), &mut SeededRng::new(3)).unwrap();
    let x = Tensor::uniform_init(&[3, 32, 32], -1.0, 1.0, &mut SeededRng::new(4)).unwrap();
    let p = net.forward(&x).unwrap();
    assert_eq!(p.shape(), &[3]);
    assert!((p.sum() - 1.0).abs() < 1e-12);
    let bad = Tensor::zeros(&[3, 31, 32]).unwrap();
    assert!(matches!(net.forward(&bad), Err(Error::Shape(_))));
}

#[test]
fn freezing_by_blocks_counts_layers() {
    let mut net = Network::build(&ArchitectureProfile::vgg16_150(2), &mut SeededRng::new(0)).unwrap();
    for (k, convs) in [(0, 0), (1, 2), (2, 4), (3, 7), (4, 10), (5, 13)] {
        net.set_freeze_by_blocks(k).unwrap();
        assert_eq!(net.frozen_layer_counts(), (convs, k));
    }
    assert!(matches!(net.set_freeze_by_blocks(6), Err(Error::Range(_))));
    net.set_freeze_by_blocks(5).unwrap();
    let head = dense_count(8192, 512) + dense_count(512, 256) + dense_count(256, 2);
    assert_eq!(net.trainable_parameters(), head);
}

#[test]
fn archive_round_trips_through_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.rscw");
    let profile = ArchitectureProfile::mini_32(3);
    let net = Network::build(&profile, &mut SeededRng::new(9)).unwrap();
    net.save_weights(&path).unwrap();
    let back = Network::load_weights(&path, &profile).unwrap();
    for (a, b) in net.layers.iter().zip(&back.layers) {
        if let (Some(pa), Some(pb)) = (&a.params, &b.params) {
            for (x, y) in pa.weights.data().iter().zip(pb.weights.data()) {
                assert_eq!(*x as f32, *y as f32);
            }
        }
    }
    // reloading an f32 archive is a fixed point
    let again = back.to_archive().to_bytes();
    assert_eq!(again, std::fs::read(&path).unwrap());

    let inferred = Network::load_inferring_head(&path, &ArchitectureProfile::mini_32(0)).unwrap();
    assert_eq!(inferred.profile(), &profile);

    let other = ArchitectureProfile::mini_32(5);
    assert!(matches!(Network::load_weights(&path, &other), Err(Error::Compatibility(_))));
    let missing = dir.path().join("absent.rscw");
    assert!(matches!(Network::load_weights(&missing, &profile), Err(Error::Io { .. })));
}

#[test]
fn corrupt_archives_are_format_errors() {
    let net = Network::build(&ArchitectureProfile::mini_32(2), &mut SeededRng::new(1)).unwrap();
    let bytes = net.to_archive().to_bytes();
    assert!(matches!(WeightArchive::from_bytes(&bytes[..bytes.len() - 3]), Err(Error::Format(_))));
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(WeightArchive::from_bytes(&bad), Err(Error::Format(_))));
}

#[test]
fn assemble_checks_width_and_base_identity() {
    let base = Network::build(&ArchitectureProfile::mini_32(0).conv_base(), &mut SeededRng::new(1)).unwrap();
    let fp = base.weights_fingerprint();
    let head = Head::build(32, &[64, 32], 3, &fp, &mut SeededRng::new(2)).unwrap();
    let net = Network::assemble(&base, head.clone()).unwrap();
    assert_eq!(net.profile(), &ArchitectureProfile::mini_32(3));
    assert!(!net.is_head_trained());

    let wide = Head::build(64, &[8], 3, &fp, &mut SeededRng::new(2)).unwrap();
    assert!(matches!(Network::assemble(&base, wide), Err(Error::Compatibility(_))));
    let other = Network::build(&ArchitectureProfile::mini_32(0).conv_base(), &mut SeededRng::new(7)).unwrap();
    assert!(matches!(Network::assemble(&other, head), Err(Error::Compatibility(_))));
}

#[test]
fn zero_width_heads_and_unknown_profiles_are_rejected() {
    assert!(matches!(Head::build(32, &[0], 3, "x", &mut SeededRng::new(0)), Err(Error::Profile(_))));
    assert!(ArchitectureProfile::by_name("resnet", 3).is_err());
}
