use std::fs;
use std::path::Path;

use tinycnn::dataset::{load_directory, read_input_image, write_pgm, Manifest};
use tinycnn::{Error, Shape, Tensor};

fn write_raw_pgm(path: &Path, w: usize, h: usize, fill: impl Fn(usize) -> u8) {
    let mut bytes = format!("P5\n{w} {h}\n255\n").into_bytes();
    bytes.extend((0..w * h).map(fill));
    fs::write(path, bytes).unwrap();
}

fn populate(root: &Path, classes: usize, per_class: usize) {
    for c in 0..classes {
        let dir = root.join(format!("class{c:02}"));
        fs::create_dir_all(&dir).unwrap();
        for i in 0..per_class {
            write_raw_pgm(&dir.join(format!("img{i:03}.pgm")), 96, 96, |p| {
                ((p + c + i) % 256) as u8
            });
        }
    }
}

#[test]
fn eleven_directories_of_ten() {
    let tmp = tempfile::tempdir().unwrap();
    populate(tmp.path(), 11, 10);
    let split = load_directory(tmp.path(), None).unwrap();
    assert_eq!(split.train.len(), 110);
    assert!(split.test.is_empty());
    assert_eq!(split.class_names.len(), 11);
    assert_eq!(split.class_names[3], "class03");
    assert!(split.train.iter().all(|im| im.pixels.shape() == Shape::image96()));
    // lexicographic by path
    let sources: Vec<&str> = split.train.iter().map(|im| im.source.as_str()).collect();
    let mut sorted = sources.clone();
    sorted.sort();
    assert_eq!(sources, sorted);
    assert_eq!(load_directory(tmp.path(), None).unwrap(), split);
}

#[test]
fn byte_extremes_scale_to_unit_range() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("a");
    fs::create_dir(&dir).unwrap();
    write_raw_pgm(&dir.join("x.pgm"), 96, 96, |p| if p == 0 { 255 } else { 0 });
    let split = load_directory(tmp.path(), None).unwrap();
    let px = split.train[0].pixels.data();
    assert_eq!(px[0], 1.0);
    assert_eq!(px[1], 0.0);
}

#[test]
fn duplicate_filenames_get_distinct_sources() {
    let tmp = tempfile::tempdir().unwrap();
    for class in ["bottle", "chain"] {
        let dir = tmp.path().join(class);
        fs::create_dir(&dir).unwrap();
        write_raw_pgm(&dir.join("same.pgm"), 96, 96, |_| 7);
    }
    let split = load_directory(tmp.path(), None).unwrap();
    assert_eq!(split.train.len(), 2);
    assert_ne!(split.train[0].source, split.train[1].source);
    assert_eq!(split.train[0].label, 0);
    assert_eq!(split.train[1].label, 1);
}

#[test]
fn wrong_size_rejected_with_path() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("a");
    fs::create_dir(&dir).unwrap();
    let bad = dir.join("small.pgm");
    write_raw_pgm(&bad, 64, 96, |_| 0);
    match load_directory(tmp.path(), None) {
        Err(Error::Image { path, msg }) => {
            assert_eq!(path, bad);
            assert!(msg.contains("96x96"), "{msg}");
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn unreadable_and_ascii_files_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("a");
    fs::create_dir(&dir).unwrap();
    fs::write(dir.join("broken.pgm"), b"P5\n96 96\n255\n\x01\x02").unwrap();
    assert!(matches!(load_directory(tmp.path(), None), Err(Error::Image { .. })));
    fs::write(dir.join("broken.pgm"), b"P2\n1 1\n255\n7\n").unwrap();
    assert!(matches!(load_directory(tmp.path(), None), Err(Error::Image { .. })));
}

#[test]
fn manifest_maps_and_rejects_unknown_directories() {
    let tmp = tempfile::tempdir().unwrap();
    populate(tmp.path(), 2, 1);
    let manifest = Manifest::parse("class01,0\nclass00,1\n").unwrap();
    let split = load_directory(tmp.path(), Some(&manifest)).unwrap();
    assert_eq!(split.train[0].source, "class00/img000.pgm");
    assert_eq!(split.train[0].label, 1);
    assert_eq!(split.class_names, ["class01", "class00"]);

    let partial = Manifest::parse("class00,0\n").unwrap();
    let err = load_directory(tmp.path(), Some(&partial)).unwrap_err();
    assert!(err.to_string().contains("unknown class directory"), "{err}");
}

#[test]
fn pgm_writer_round_trips_quantized_pixels() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("r.pgm");
    let data: Vec<f32> = (0..9216).map(|i| (i % 256) as f32 / 255.0).collect();
    let t = Tensor::from_vec(Shape::image96(), data).unwrap();
    write_pgm(&path, &t).unwrap();
    assert_eq!(read_input_image(&path).unwrap(), t);
}
