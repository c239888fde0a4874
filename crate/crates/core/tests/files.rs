use std::fs;

use rawpipe::invisp::{load_checkpoint, save_checkpoint, InvIspModel, ModelConfig};
use rawpipe::{load_image, save_image, AnyImage, BayerImage, CfaPattern, RgbEncoding, RgbImage, Tensor};
use tempfile::TempDir;

#[test]
fn zero_bayer_survives_disk() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("z.pgm");
    let b = BayerImage::filled(4, 4, 12, CfaPattern::Gbrg, 0).unwrap();
    save_image(&path, &b.clone().into()).unwrap();
    let bytes = fs::read(&path).unwrap();
    assert!(bytes.starts_with(b"P5\n# RAWPIPE CFA=GBRG BITDEPTH=12\n4 4\n4095\n"));
    assert_eq!(load_image(&path).unwrap(), AnyImage::Bayer(b));
}

#[test]
fn plain_ppm_from_another_tool() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("x.ppm");
    fs::write(&path, b"P6\n# made elsewhere\n2 1\n255\n\x01\x02\x03\x04\x05\x06").unwrap();
    let rgb = load_image(&path).unwrap().into_rgb().unwrap();
    assert_eq!(rgb.encoding(), RgbEncoding::IntegerCodes(8));
    assert_eq!(rgb.code_planes().unwrap(), &[vec![1, 4], vec![2, 5], vec![3, 6]]);
}

#[test]
fn sixteen_bit_rgb_is_big_endian() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("x.ppm");
    let rgb = RgbImage::from_codes(1, 1, 16, [vec![0x0102], vec![0x0304], vec![0xFFFF]]).unwrap();
    save_image(&path, &rgb.clone().into()).unwrap();
    let bytes = fs::read(&path).unwrap();
    assert!(bytes.ends_with(&[1, 2, 3, 4, 0xFF, 0xFF]));
    assert_eq!(load_image(&path).unwrap().into_rgb().unwrap(), rgb);
}

#[test]
fn checkpoint_file_round_trip() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("m.iisp");
    let model = InvIspModel::random(ModelConfig { hidden: 4, ..ModelConfig::default() }, 3, 0.5).unwrap();
    save_checkpoint(&path, &model).unwrap();
    let bytes = fs::read(&path).unwrap();
    assert_eq!(&bytes[..4], b"IISP");
    let back = load_checkpoint(&path).unwrap();
    assert_eq!(back.flatten_params(), model.flatten_params());
    assert_eq!(back.provenance, model.provenance);
}

#[test]
fn truncated_checkpoint_is_rejected() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("m.iisp");
    let model = InvIspModel::new(ModelConfig { hidden: 2, blocks: 1, ..ModelConfig::default() }, 0).unwrap();
    save_checkpoint(&path, &model).unwrap();
    let bytes = fs::read(&path).unwrap();
    fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
    assert!(load_checkpoint(&path).is_err());
}

#[test]
fn tensor_file_round_trip() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("t.ften");
    let t = Tensor::new(vec![2, 3], vec![0.5f32, -1.0, 2.0, 3.5, 0.0, 1e-3]).unwrap();
    t.write_ften(fs::File::create(&path).unwrap()).unwrap();
    let back: Tensor<f32> = Tensor::read_ften(fs::File::open(&path).unwrap()).unwrap();
    assert_eq!(back, t);
}
