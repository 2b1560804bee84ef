use proptest::prelude::*;

use upasim::functionals::{lp_norm, LpNorm};
use upasim::grid::{Field, Grid};
use upasim::io::snapshot::{decode_snapshot, encode_snapshot};
use upasim::model::{clamp_b, DiffusionCoefficient, Species};
use upasim::operators::{assemble_diffusion_matrix, diffusion_apply};

fn grid_and_values() -> impl Strategy<Value = (Grid, Vec<f64>)> {
    (1usize..=3).prop_flat_map(|dim| (prop::collection::vec(3usize..7, dim), prop::collection::vec(0.5f64..2.0, dim))).prop_flat_map(
        |(cells, extents)| {
            let grid = Grid::new(cells.len(), &extents, &cells).unwrap();
            (Just(grid), prop::collection::vec(-10.0f64..10.0, grid.total_cells()))
        },
    )
}

proptest! {
    #[test]
    fn clamp_lands_in_unit_interval(u in prop::num::f64::NORMAL | prop::num::f64::ZERO) {
        let b = clamp_b(u);
        prop_assert!((0.0..=1.0).contains(&b));
        if (0.0..=1.0).contains(&u) {
            prop_assert_eq!(b, u);
        }
    }

    #[test]
    fn index_and_coords_round_trip((grid, _) in grid_and_values()) {
        for i in 0..grid.total_cells() {
            prop_assert_eq!(grid.index(grid.coords(i)), i);
        }
    }

    #[test]
    fn norms_are_ordered_on_unit_volume((grid, values) in grid_and_values()) {
        let extents = vec![1.0; grid.dim()];
        let unit = Grid::new(grid.dim(), &extents, grid.cells()).unwrap();
        let f = Field::new(unit, values).unwrap();
        let (l1, l2, linf) = (lp_norm(&f, LpNorm::L1), lp_norm(&f, LpNorm::L2), lp_norm(&f, LpNorm::Inf));
        prop_assert!(l1 <= l2 * (1.0 + 1e-12));
        prop_assert!(l2 <= linf * (1.0 + 1e-12));
    }

    #[test]
    fn diffusion_dissipates((grid, values) in grid_and_values(), d in 0.01f64..5.0) {
        let coeff = DiffusionCoefficient::constant(d);
        let u = Field::new(grid, values).unwrap();
        let lu = diffusion_apply(&u, &coeff, Species::C, 0.0).unwrap();
        let energy: f64 = u.values().iter().zip(lu.values()).map(|(a, b)| a * b).sum();
        let scale: f64 = u.values().iter().zip(lu.values()).map(|(a, b)| (a * b).abs()).sum();
        prop_assert!(energy <= 1e-12 * scale.max(1.0));

        let m = assemble_diffusion_matrix(&coeff, Species::C, 0.0, &grid).unwrap();
        let mu = m.matvec(u.values());
        for (a, b) in mu.iter().zip(lu.values()) {
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn snapshots_round_trip((grid, values) in grid_and_values(), t in -1e6f64..1e6) {
        let f = Field::new(grid, values).unwrap();
        let back = decode_snapshot(&encode_snapshot(&f, t, None)).unwrap();
        prop_assert_eq!(back.time.to_bits(), t.to_bits());
        prop_assert_eq!(back.species, None);
        prop_assert_eq!(back.field.grid(), f.grid());
        prop_assert_eq!(back.field.values(), f.values());
    }
}
