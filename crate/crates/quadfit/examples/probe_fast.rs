fn main() {
    for (name, f) in [
        ("1 gradient", quadfit::selftest::criterion_gradient_suite as fn() -> Result<String, String>),
        ("2 raster", quadfit::selftest::criterion_rasterizer_oracle),
        ("3 structural", quadfit::selftest::criterion_structural_identities),
        ("4 dt", quadfit::selftest::criterion_distance_transform),
        ("8 metrics", quadfit::selftest::criterion_metric_sanity),
        ("9 interp", quadfit::selftest::criterion_interpolation_linearity),
    ] {
        let t = std::time::Instant::now();
        match f() {
            Ok(d) => println!("{}: PASS ({:.1}s) {}", name, t.elapsed().as_secs_f64(), d),
            Err(e) => println!("{}: FAIL ({:.1}s) {}", name, t.elapsed().as_secs_f64(), e),
        }
    }
}
