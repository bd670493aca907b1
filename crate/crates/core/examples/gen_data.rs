//! Regenerates the bundled data files: `cargo run --example gen_data -- data`.

use std::path::PathBuf;

use chillmpc_core::config::RunConfig;
use chillmpc_core::model::ModelParams;
use chillmpc_core::sim::{DriveCycle, SyntheticTarget, TargetProfile};
use chillmpc_core::sysid::{simulate_excitation, write_dataset, ExcitationConfig};

/// Urban stop-and-go with one highway stretch, 600 s, up to 88 km/h.
const WAYPOINTS: &[(f64, f64)] = &[
    (0., 0.), (15., 0.), (30., 30.), (55., 38.), (70., 18.), (80., 0.), (100., 0.), (118., 40.),
    (145., 48.), (165., 25.), (178., 0.), (195., 0.), (215., 35.), (245., 42.), (262., 0.),
    (280., 0.), (310., 55.), (340., 72.), (370., 88.), (420., 86.), (450., 70.), (470., 40.),
    (485., 0.), (500., 0.), (520., 38.), (555., 45.), (575., 20.), (590., 0.), (600., 0.),
];

fn main() -> chillmpc_core::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "data".into()));
    std::fs::create_dir_all(&dir).map_err(|e| chillmpc_core::Error::Config(e.to_string()))?;

    let coarse = DriveCycle::new(
        WAYPOINTS.iter().map(|p| p.0).collect(),
        WAYPOINTS.iter().map(|p| p.1).collect(),
    )?;
    let time: Vec<f64> = (0..=600).map(f64::from).collect();
    let speed = time.iter().map(|t| coarse.speed_at(*t)).collect();
    DriveCycle::new(time, speed)?.write_csv(&dir.join("sc03_like.csv"))?;

    let samples = simulate_excitation(&ModelParams::default(), &ExcitationConfig::default());
    write_dataset(&dir.join("synthetic_id.csv"), &samples)?;

    TargetProfile::synthetic(&SyntheticTarget::default(), 600.0, 3.0)?
        .write_csv(&dir.join("synthetic_target.csv"))?;

    RunConfig::default().save(&dir.join("default_config.json"))?;
    Ok(())
}
