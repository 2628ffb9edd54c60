use liftcs_web::{compose_impl, design_impl, reconstruct_impl};

fn card(n: usize) -> Vec<f64> {
    (0..n * n)
        .map(|i| {
            let (r, c) = ((i / n) as f64, (i % n) as f64);
            100.0 + 40.0 * (r / 9.0).sin() + 30.0 * (c / 13.0).cos() + r
        })
        .collect()
}

#[test]
fn compose_gives_legall_filters() {
    let f = compose_impl(&[0.5, 0.5], &[0.25, 0.25]).unwrap();
    assert_eq!(f.h0(), vec![-0.125, 0.25, 0.75, 0.25, -0.125]);
    assert_eq!(f.h1(), vec![-0.5, 1.0, -0.5]);
    assert_eq!(f.csv().lines().count(), 4);
}

#[test]
fn compose_rejects_odd_filters() {
    assert!(compose_impl(&[1.0], &[0.25, 0.25]).is_err());
}

#[test]
fn design_reports_both_directions() {
    let text = design_impl(&card(32), 32, 32).unwrap();
    assert!(text.contains("column:") && text.contains("row:"), "{text}");
    assert!(design_impl(&card(32), 16, 32).is_err());
}

#[test]
fn reconstruction_beats_zero_fill() {
    let px = card(32);
    for wavelet in ["bior53", "matched"] {
        let r = reconstruct_impl(&px, 32, 32, 0.5, 3, wavelet, "l-pyramid").unwrap();
        assert_eq!(r.pixels().len(), 32 * 32);
        assert!(
            r.psnr() > r.zero_filled_psnr() + 5.0,
            "{wavelet}: {} vs {}",
            r.psnr(),
            r.zero_filled_psnr()
        );
        assert_eq!(r.summary().is_empty(), wavelet != "matched");
    }
    assert!(reconstruct_impl(&px, 32, 32, 0.5, 3, "haar", "l-pyramid").is_err());
}
