use chartreader::chartgen::*;
fn main() {
    for (i, seed) in [1u64, 3, 4, 9, 14].iter().enumerate() {
        let spec = sample_chart_spec(*seed, &GenConfig::default()).unwrap();
        println!("seed {seed}: {:?} series={} cats={}", spec.chart_type, spec.series.len(), spec.category_labels.len());
        let img = render(&spec, 128, 128).unwrap();
        std::fs::write(format!("/tmp/chart_{i}.png"), img.to_png_bytes()).unwrap();
    }
    // upscale one for inspection
    let spec = sample_chart_spec(1, &GenConfig::default()).unwrap();
    let img = render(&spec, 256, 256).unwrap();
    std::fs::write("/tmp/chart_big.png", img.to_png_bytes()).unwrap();
}
