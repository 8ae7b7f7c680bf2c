//! Regenerate the shipped run definitions under configs/.

use fliga_bench::config::AmVariant;
use fliga_bench::scenarios::{am, extrusion, patch_test, taylor_couette};
use std::fs;

fn main() {
    let out = std::path::Path::new("configs");
    fs::create_dir_all(out).unwrap();
    for p in [1usize, 2, 3] {
        fs::write(
            out.join(format!("patch_test_p{p}.toml")),
            patch_test::reference_config(p, 1).to_toml(),
        )
        .unwrap();
    }
    fs::write(
        out.join("patch_test_p2_dense.toml"),
        patch_test::reference_config(2, 4).to_toml(),
    )
    .unwrap();
    // Three turns of the outer cylinder / one turn for the viscoelastic run.
    fs::write(
        out.join("taylor_couette_newtonian.toml"),
        taylor_couette::reference_config(false, 25200).to_toml(),
    )
    .unwrap();
    fs::write(
        out.join("taylor_couette_oldroyd.toml"),
        taylor_couette::reference_config(true, 21000).to_toml(),
    )
    .unwrap();
    for wi in [0.0f64, 1.0, 2.0] {
        fs::write(
            out.join(format!("extrusion_wi{}.toml", wi as usize)),
            extrusion::reference_config(wi, 2200).to_toml(),
        )
        .unwrap();
    }
    for (name, variant) in [
        ("am_straight", AmVariant::Straight),
        ("am_vibrating", AmVariant::VibratingNozzle),
        ("am_uneven", AmVariant::UnevenSubstrate),
        ("am_obstacle", AmVariant::Obstacle),
    ] {
        fs::write(
            out.join(format!("{name}.toml")),
            am::reference_config(variant, 800).to_toml(),
        )
        .unwrap();
    }
    println!("configs written");
}
