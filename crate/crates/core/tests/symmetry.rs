//! Basin pictures inherit the symmetries of the polynomial.

use std::f64::consts::TAU;

use newtonlab::exec::Executor;
use newtonlab::frontend::render::{render, validate_ppm, Overlays, Palette};
use newtonlab::newton::build_newton_map;
use newtonlab::orbits::{classify_grid_with, Classifier, GridParams, Label, Outcome, Viewport, DEFAULT_EPS_CONV, GRID_MAX_STEPS};
use newtonlab::polyalg::{ComplexPoly, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn cubic_render_has_threefold_symmetry() {
    let spec = build_newton_map(&ComplexPoly::from_real(&[-1.0, 0.0, 0.0, 1.0]), &ComplexPoly::zero()).unwrap();
    let grid = GridParams { viewport: Viewport::square(C64::new(0.0, 0.0), 2.0), width: 512, height: 512, max_steps: GRID_MAX_STEPS, eps_conv: DEFAULT_EPS_CONV };
    let raster = classify_grid_with(&spec, &grid, Executor::Auto).unwrap();
    let cls = Classifier::new(&spec, GRID_MAX_STEPS, DEFAULT_EPS_CONV).unwrap();
    let rot = C64::from_polar(1.0, TAU / 3.0);
    let rotated_root = |i: usize| cls.roots.iter().position(|r| (r - cls.roots[i] * rot).norm() < 1e-9).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let (row, col) = (rng.gen_range(0..512), rng.gen_range(0..512));
        let z = grid.viewport.pixel_center(512, 512, row, col);
        let here = raster.label(row, col);
        let there = Label::from(cls.classify(z * rot).0);
        let expected = match here {
            Label::Root(i) => Label::Root(rotated_root(i as usize) as u16),
            other => other,
        };
        assert_eq!(there, expected, "pixel ({row}, {col}) at {z}");
    }
    let bytes = render(&raster, &Palette::default(), &Overlays::default());
    assert_eq!(validate_ppm(&bytes), Some((512, 512)));
}

#[test]
fn quadratic_basins_split_at_imaginary_axis() {
    let spec = build_newton_map(&ComplexPoly::from_real(&[-1.0, 0.0, 1.0]), &ComplexPoly::zero()).unwrap();
    let cls = Classifier::new(&spec, GRID_MAX_STEPS, DEFAULT_EPS_CONV).unwrap();
    let pos = cls.roots.iter().position(|r| r.re > 0.0).unwrap();
    for z in [C64::new(0.01, 5.0), C64::new(3.0, -2.0), C64::new(1e-3, 0.0)] {
        assert_eq!(cls.classify(z).0, Outcome::ConvergedTo { root: pos });
        assert_eq!(cls.classify(-z.conj()).0, Outcome::ConvergedTo { root: 1 - pos });
    }
}
