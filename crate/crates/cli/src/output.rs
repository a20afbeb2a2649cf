//! CSV and JSON emission. Every file starts with a metadata header so a run
//! can be reproduced from its own output.

use std::fs;
use std::path::Path;

use confgames_core::ConfigGame;
use serde::Serialize;

use crate::config::RunConfig;
use crate::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// 17 significant digits, enough to round-trip any double.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

/// Description of the built game, echoed next to the configuration.
#[derive(Clone, Debug, Serialize)]
pub struct GameInfo {
    pub players: usize,
    pub state_dim: usize,
    pub control_dims: Vec<usize>,
    pub horizon: f64,
    pub zero_sum: bool,
    pub affine: bool,
    /// Initial state in the coordinates the game is solved in.
    pub x0: Vec<f64>,
    pub theta_box: Vec<[f64; 2]>,
}

impl GameInfo {
    pub fn of(game: &ConfigGame) -> Self {
        Self {
            players: game.players(),
            state_dim: game.state_dim(),
            control_dims: game.control_dims().to_vec(),
            horizon: game.horizon(),
            zero_sum: game.is_zero_sum(),
            affine: game.is_affine(),
            x0: game.x0().iter().copied().collect(),
            theta_box: game.theta_box().iter().map(|b| [b.min, b.max]).collect(),
        }
    }
}

fn header(command: &str, config: &RunConfig, game: Option<&GameInfo>) -> String {
    let mut out = format!("# confgames {VERSION}\n# command: {command}\n");
    for (k, v) in config.flattened() {
        out.push_str(&format!("# config.{k} = {v}\n"));
    }
    if let Some(g) = game {
        out.push_str(&format!(
            "# game: players = {}, state_dim = {}, control_dims = {:?}, horizon = {}, zero_sum = {}, affine = {}\n",
            g.players, g.state_dim, g.control_dims, g.horizon, g.zero_sum, g.affine
        ));
        out.push_str(&format!("# game.x0 = {:?}\n# game.theta_box = {:?}\n", g.x0, g.theta_box));
    }
    out
}

/// A CSV table under construction.
pub struct Csv {
    writer: csv::Writer<Vec<u8>>,
}

impl Csv {
    pub fn new(columns: &[String]) -> Self {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(columns).expect("in-memory write");
        Self { writer }
    }

    pub fn row(&mut self, fields: &[String]) {
        self.writer.write_record(fields).expect("in-memory write");
    }

    pub fn write(self, path: &Path, command: &str, config: &RunConfig, game: Option<&GameInfo>) -> Result<(), CliError> {
        let body = self.writer.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
        let mut text = header(command, config, game).into_bytes();
        text.extend_from_slice(&body);
        fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }
}

/// `theta_1..theta_N`-style column names.
pub fn indexed(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}_{i}")).collect()
}

#[derive(Serialize)]
struct Summary<'a, T: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    exit_code: i32,
    config: &'a RunConfig,
    game: Option<&'a GameInfo>,
    result: &'a T,
}

pub fn write_summary<T: Serialize>(
    dir: &Path,
    command: &str,
    exit_code: i32,
    config: &RunConfig,
    game: Option<&GameInfo>,
    result: &T,
) -> Result<(), CliError> {
    let summary = Summary {
        tool: "confgames",
        version: VERSION,
        command,
        exit_code,
        config,
        game,
        result,
    };
    let text = serde_json::to_string_pretty(&summary).map_err(|e| CliError::Io(e.to_string()))?;
    let path = dir.join("summary.json");
    fs::write(&path, text + "\n").map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))
}
