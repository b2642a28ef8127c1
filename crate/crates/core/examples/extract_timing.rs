//! Times 16-scale BSIF extraction on a synthetic 640x480 image.

use std::time::Instant;

use irispad::bsif::{extract_all, FilterSet, DEFAULT_BITS, NATIVE_SIZES};
use irispad::imgio::GrayImage;

fn main() -> irispad::Result<()> {
    let filters = FilterSet::synthesize(DEFAULT_BITS, &NATIVE_SIZES, 1)?;
    let img = GrayImage::from_fn(640, 480, |x, y| ((x * 31 + y * 17 + x * y) % 251) as u8)?;
    let reps = 5;
    let start = Instant::now();
    for _ in 0..reps {
        let feats = extract_all(&img, &filters)?;
        assert_eq!(feats.len(), 16);
    }
    println!("{:.3} s per image", start.elapsed().as_secs_f64() / reps as f64);
    Ok(())
}
