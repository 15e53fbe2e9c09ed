//! Overlay rendering against frozen reference images. Set `FACEGPS_BLESS=1` to
//! regenerate the fixtures after an intentional change to the renderer.

use std::path::PathBuf;

use facegps::model::{FrameImage, Point, Vec2};
use facegps::render::{render_overlay, MappedVector, RenderOptions};

fn scene() -> (FrameImage, Vec<MappedVector>) {
    let frame = FrameImage::from_fn(64, 48, 0, |x, y| 0.2 + 0.5 * x / 64.0 + 0.1 * y / 48.0);
    let vectors = [
        ((10.0, 10.0), (3.0, 0.0)),
        ((32.0, 24.0), (-2.0, 2.5)),
        ((50.0, 40.0), (0.5, -4.0)),
        ((20.0, 38.0), (0.3, 0.2)),
        ((45.0, 12.0), (0.01, 0.0)),
    ]
    .iter()
    .map(|&((x, y), (dx, dy))| {
        let v = Vec2::new(dx, dy);
        MappedVector {
            origin: Point::new(x, y),
            vector: v,
            magnitude: v.norm(),
        }
    })
    .collect();
    (frame, vectors)
}

fn check(name: &str, heat: bool) {
    let (frame, vectors) = scene();
    let out = render_overlay(&frame, &vectors, RenderOptions { scale: 2.0, heat });
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name);
    if std::env::var_os("FACEGPS_BLESS").is_some() {
        std::fs::write(&path, out.to_png()).unwrap();
    }
    let golden = image::load_from_memory(&std::fs::read(&path).unwrap()).unwrap().to_rgb8();
    assert_eq!((golden.width() as usize, golden.height() as usize), (out.width, out.height));
    assert!(golden.as_raw() == &out.rgb, "{name} differs from the reference image");
    assert_eq!(out.arrows_drawn, 4);
}

#[test]
fn arrows_match_reference() {
    check("overlay_arrows.png", false);
}

#[test]
fn heat_layer_matches_reference() {
    check("overlay_heat.png", true);
}
