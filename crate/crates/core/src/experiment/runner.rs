use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::game::{Role, TrustMode};
use crate::harness::backend::{mix, BackendRegistry};
use crate::harness::prompt::{PromptTemplate, DEFAULT_TEMPLATE_NAME};
use crate::harness::transcript::{read_jsonl, write_jsonl, GameTranscript};
use crate::harness::{play_game, GameRun, GameSpec};

use super::aggregate::{aggregate_cells, CellKey, CellResult};
use super::config::{ExperimentConfig, PersonalityTreatment, Treatment};
use super::report::{cells_to_csv, cells_to_svg, cells_to_text};
use super::ExperimentError;

pub const TRANSCRIPTS_FILE: &str = "transcripts.jsonl";
pub const CELLS_CSV_FILE: &str = "cells.csv";
pub const CELLS_TEXT_FILE: &str = "cells.txt";
pub const FIGURE_FILE: &str = "figure.svg";

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub cells: Vec<CellResult>,
    /// Every game played, grouped by cell in sweep order.
    pub transcripts: Vec<GameTranscript>,
}

/// One planned game.
#[derive(Debug, Clone)]
pub struct PlannedGame {
    pub cell: usize,
    pub spec: GameSpec,
    pub run: GameRun,
}

/// Seed of one game. The treatment is deliberately left out so that every
/// treatment of a cell sees the same backend randomness, and the control of an
/// ablation matches a plain run.
pub fn game_seed(
    master_seed: u64,
    mode: TrustMode,
    epsilon: f64,
    c_r: f64,
    b_fo: f64,
    replication: u32,
) -> u64 {
    let mode_tag = match mode {
        TrustMode::Conditional => 1,
        TrustMode::Unconditional => 2,
    };
    mix(&[
        master_seed,
        mode_tag,
        epsilon.to_bits(),
        c_r.to_bits(),
        b_fo.to_bits(),
        u64::from(replication),
    ])
}

fn game_id(key: &CellKey, replication: u32) -> String {
    let treatment = match key.treatment {
        Treatment::Control => "none".to_string(),
        Treatment::Single(p) => format!("{}-{}", p.role(), p.name()),
    };
    format!(
        "{}_e{}_c{}_b{}_{}_r{:03}",
        key.mode.trust_label(),
        key.epsilon,
        key.c_r,
        key.b_fo,
        treatment,
        replication
    )
}

/// Expands the sweep into cells (modes × ε × c_R × b_fo × treatments, in that
/// nesting order) and their games.
pub fn plan(
    config: &ExperimentConfig,
    template: &PromptTemplate,
) -> (Vec<CellKey>, Vec<PlannedGame>) {
    let s = &config.sweep;
    let mut keys = Vec::with_capacity(config.cell_count());
    let mut games = Vec::new();
    for &mode in &s.modes {
        for &epsilon in &s.epsilon {
            for &c_r in &s.c_r {
                for &b_fo in &s.b_fo {
                    for treatment in config.personality.treatments() {
                        let key = CellKey {
                            mode,
                            epsilon,
                            c_r,
                            b_fo,
                            treatment,
                        };
                        let params = config.params.with_sweep(epsilon, c_r, b_fo);
                        let mut spec =
                            GameSpec::new(mode, params, config.game.rounds, &config.backend.id);
                        spec.max_reprompts = config.game.max_reprompts;
                        spec.template = template.name().to_string();
                        if let Some(p) = treatment.personality() {
                            spec = spec.with_personality(p);
                        }
                        for replication in 0..config.game.replications {
                            games.push(PlannedGame {
                                cell: keys.len(),
                                spec: spec.clone(),
                                run: GameRun::new(
                                    game_id(&key, replication),
                                    game_seed(
                                        config.master_seed,
                                        mode,
                                        epsilon,
                                        c_r,
                                        b_fo,
                                        replication,
                                    ),
                                    replication,
                                ),
                            });
                        }
                        keys.push(key);
                    }
                }
            }
        }
    }
    (keys, games)
}

/// The template named in the config, or the built-in one.
pub fn load_template(config: &ExperimentConfig) -> Result<PromptTemplate, ExperimentError> {
    match &config.game.template {
        None => Ok(PromptTemplate::default_template()),
        Some(path) => {
            let text = fs::read_to_string(path)?;
            let name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| DEFAULT_TEMPLATE_NAME.to_string());
            Ok(PromptTemplate::parse(name, &text)?)
        }
    }
}

/// Plays every game of the sweep and aggregates per cell.
///
/// Games run on a pool of `config.parallelism` threads; results come back in
/// plan order regardless of scheduling.
pub fn run_experiment(
    config: &ExperimentConfig,
    template: &PromptTemplate,
    backends: &BackendRegistry,
) -> Result<ExperimentOutput, ExperimentError> {
    config.validate()?;
    backends.get(&config.backend.id)?;
    let (keys, games) = plan(config, template);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallelism)
        .build()
        .map_err(|e| ExperimentError::Config(format!("thread pool: {e}")))?;
    let transcripts: Vec<GameTranscript> = pool.install(|| {
        games
            .par_iter()
            .map(|g| play_game(&g.spec, template, backends, &g.run))
            .collect::<Result<_, _>>()
    })?;
    for t in transcripts.iter().filter(|t| !t.valid) {
        log::warn!(
            "game {} invalid: {}",
            t.game_id,
            t.failure.as_deref().unwrap_or("unknown")
        );
    }

    let mut per_cell: Vec<Vec<GameTranscript>> = vec![Vec::new(); keys.len()];
    for (g, t) in games.iter().zip(&transcripts) {
        per_cell[g.cell].push(t.clone());
    }
    let cells = keys
        .into_iter()
        .zip(&per_cell)
        .map(|(key, ts)| {
            let cell = CellResult::from_transcripts(key, ts)?;
            if cell.is_degenerate() {
                log::warn!("cell {:?} has no valid games", cell.key);
            }
            Ok(cell)
        })
        .collect::<Result<Vec<_>, ExperimentError>>()?;
    Ok(ExperimentOutput { cells, transcripts })
}

/// One-at-a-time personality ablation: a control cell plus one cell per
/// trait, each trait set on its own agent only.
///
/// Restricted to one-shot conditional-trust games unless
/// `ablation_override` is set.
pub fn run_personality_ablation(
    config: &ExperimentConfig,
    template: &PromptTemplate,
    backends: &BackendRegistry,
) -> Result<ExperimentOutput, ExperimentError> {
    if !config.ablation_override {
        if config.game.rounds != 1 {
            return Err(ExperimentError::Config(
                "personality ablation runs one-shot games; set ablation_override to change this"
                    .into(),
            ));
        }
        if config.sweep.modes != [TrustMode::Conditional] {
            return Err(ExperimentError::Config(
                "personality ablation runs with conditional trust only; set ablation_override to change this".into(),
            ));
        }
    }
    let mut config = config.clone();
    config.personality = PersonalityTreatment::Ablation;
    run_experiment(&config, template, backends)
}

/// A round-1 prompt as it would be sent, without contacting any backend.
#[derive(Debug, Clone, PartialEq)]
pub struct DryRunPrompt {
    pub game_id: String,
    pub role: Role,
    pub prompt: String,
}

/// Renders the first-round prompts of the first replication of every cell.
pub fn dry_run(
    config: &ExperimentConfig,
    template: &PromptTemplate,
) -> Result<Vec<DryRunPrompt>, ExperimentError> {
    config.validate()?;
    let (_, games) = plan(config, template);
    let mut out = Vec::new();
    for g in games.iter().filter(|g| g.run.replication == 0) {
        g.spec.validate()?;
        for role in Role::ALL {
            let agent = g.spec.agent(role).expect("validated spec has every role");
            out.push(DryRunPrompt {
                game_id: g.run.game_id.clone(),
                role,
                prompt: template.render(agent, &g.spec, &[])?,
            });
        }
    }
    Ok(out)
}

/// Files written by [`persist`].
#[derive(Debug, Clone, PartialEq)]
pub struct OutputFiles {
    pub transcripts: PathBuf,
    pub csv: PathBuf,
    pub text: PathBuf,
    pub svg: PathBuf,
}

/// Writes transcripts, the cell CSV, a text table and the SVG figure into
/// `dir`, creating it if needed.
pub fn persist(output: &ExperimentOutput, dir: &Path) -> Result<OutputFiles, ExperimentError> {
    fs::create_dir_all(dir)?;
    let files = OutputFiles {
        transcripts: dir.join(TRANSCRIPTS_FILE),
        csv: dir.join(CELLS_CSV_FILE),
        text: dir.join(CELLS_TEXT_FILE),
        svg: dir.join(FIGURE_FILE),
    };
    write_jsonl(
        BufWriter::new(File::create(&files.transcripts)?),
        &output.transcripts,
    )?;
    write_report(&output.cells, dir)?;
    Ok(files)
}

/// Writes the CSV, text and SVG renderings of `cells` into `dir`.
pub fn write_report(cells: &[CellResult], dir: &Path) -> Result<(), ExperimentError> {
    if cells.is_empty() {
        return Err(ExperimentError::Report("nothing to report".into()));
    }
    fs::create_dir_all(dir)?;
    fs::write(dir.join(CELLS_CSV_FILE), cells_to_csv(cells)?)?;
    fs::write(dir.join(CELLS_TEXT_FILE), cells_to_text(cells))?;
    fs::write(dir.join(FIGURE_FILE), cells_to_svg(cells))?;
    Ok(())
}

/// Reads persisted transcripts.
pub fn load_transcripts(path: &Path) -> Result<Vec<GameTranscript>, ExperimentError> {
    Ok(read_jsonl(BufReader::new(File::open(path)?))?)
}

/// Recomputes cell results from a transcript file alone.
pub fn replay(path: &Path) -> Result<Vec<CellResult>, ExperimentError> {
    aggregate_cells(&load_transcripts(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::BackendConfig;

    fn config(backend: BackendConfig) -> ExperimentConfig {
        let mut c = ExperimentConfig::new(backend);
        c.sweep.b_fo = vec![1.0, 2.0];
        c.sweep.modes = vec![TrustMode::Conditional];
        c.sweep.epsilon = vec![-0.1];
        c.sweep.c_r = vec![0.5];
        c.game.replications = 3;
        c.parallelism = 2;
        c
    }

    #[test]
    fn plan_covers_sweep() {
        let c = config(BackendConfig::fixed("CTCC"));
        let (keys, games) = plan(&c, &PromptTemplate::default_template());
        assert_eq!(keys.len(), 2);
        assert_eq!(games.len(), 6);
        let mut ids: Vec<_> = games.iter().map(|g| g.run.game_id.clone()).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 6);
    }

    #[test]
    fn seeds_ignore_treatment_but_not_replication() {
        let mut c = config(BackendConfig::fixed("CTCC"));
        c.personality = PersonalityTreatment::Ablation;
        let (_, games) = plan(&c, &PromptTemplate::default_template());
        let rep0: Vec<_> = games
            .iter()
            .filter(|g| g.run.replication == 0 && g.spec.params.b_fo == 1.0)
            .collect();
        assert_eq!(rep0.len(), 7);
        assert!(rep0.iter().all(|g| g.run.seed == rep0[0].run.seed));
        assert_ne!(
            game_seed(0, TrustMode::Conditional, -0.1, 0.5, 1.0, 0),
            game_seed(0, TrustMode::Conditional, -0.1, 0.5, 1.0, 1)
        );
    }

    #[test]
    fn ablation_guard() {
        let mut c = config(BackendConfig::fixed("CTCC"));
        c.game.rounds = 10;
        let reg = BackendRegistry::from_configs(&[c.backend.clone()]).unwrap();
        let t = PromptTemplate::default_template();
        assert!(run_personality_ablation(&c, &t, &reg).is_err());
        c.ablation_override = true;
        c.game.replications = 1;
        assert_eq!(
            run_personality_ablation(&c, &t, &reg).unwrap().cells.len(),
            14
        );
    }

    #[test]
    fn dry_run_renders_without_backend() {
        let c = config(BackendConfig::http(
            "m",
            "http://127.0.0.1:9",
            "GOVTRUST_TEST_NO_SUCH_KEY",
        ));
        let prompts = dry_run(&c, &PromptTemplate::default_template()).unwrap();
        assert_eq!(prompts.len(), 2 * 3);
        assert!(prompts.iter().all(|p| p.prompt.contains("ANSWER:")));
    }
}
