use irt_wasm::Target;

#[test]
fn rotation_by_a_quarter_turn_moves_pixels() {
    let t = Target::new(4, 12).unwrap();
    let w = 9;
    let a = t.image(0.0).unwrap();
    let b = t.image(std::f64::consts::FRAC_PI_2).unwrap();
    assert_eq!(a.len(), w * w);
    // a quarter turn maps the grid onto itself, so some pixel pairing matches exactly
    let mut best = f64::INFINITY;
    for turn in 0..4 {
        let mut err: f64 = 0.0;
        for i in 0..w {
            for j in 0..w {
                let (mut r, mut c) = (i, j);
                for _ in 0..turn {
                    (r, c) = (c, w - 1 - r);
                }
                err = err.max((a[i * w + j] - b[r * w + c]).abs());
            }
        }
        best = best.min(err);
    }
    assert!(best < 1e-10, "{best}");
}

#[test]
fn invariant_ignores_rotation() {
    let mut t = Target::new(4, 12).unwrap();
    t.randomize(3);
    assert!(t.invariance_gap(0.7).unwrap() < 1e-10);
}

#[test]
fn micrograph_preview() {
    let t = Target::new(4, 12).unwrap();
    let px = t.micrograph(64, 4, 0.1, 1).unwrap();
    assert_eq!(px.len(), 64 * 64);
    assert_eq!(px, t.micrograph(64, 4, 0.1, 1).unwrap());
    assert!(t.micrograph(20, 30, 0.0, 1).is_err());
}
