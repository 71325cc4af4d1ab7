use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use fewbit::adc::{REFERENCE_BUDGET, REFERENCE_DURATION, WALDEN_C};
use fewbit::harness::{
    emit_bound_overlay, emit_table2, khat_robustness, run_sweep, write_csv, write_manifest,
    write_sweep, write_table2_csv, ExperimentConfig,
};
use fewbit::pilot::{
    build_measurement_model, generate_pilots, probe_rip, write_rip_csv, IndexSampling, PilotMode,
};
use fewbit::Result;

#[derive(Parser)]
#[command(name = "fewbit", version, about = "Few-bit ADC compressive channel estimation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo sweep over bit depth and SNR.
    Sweep {
        #[command(flatten)]
        exp: ExpArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// ADC operating points for a power budget.
    Table2 {
        #[arg(long, default_value_t = REFERENCE_BUDGET)]
        budget: f64,
        #[arg(long, default_value_t = WALDEN_C)]
        walden_c: f64,
        #[arg(long, default_value_t = REFERENCE_DURATION)]
        duration: f64,
        #[arg(long, value_delimiter = ',', default_value = "2,3,4,5,6,7,8")]
        bits: Vec<u32>,
        /// Report the reference sample counts instead of the formula.
        #[arg(long)]
        verbatim: bool,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Oracle RSNR bound per bit depth and SNR.
    Bound {
        #[command(flatten)]
        exp: ExpArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// RSNR against the BIHT sparsity target.
    Khat {
        #[command(flatten)]
        exp: ExpArgs,
        #[arg(long, value_delimiter = ',', required = true)]
        grid: Vec<usize>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Sampled restricted isometry constant of a pilot matrix.
    RipProbe {
        #[arg(long, default_value_t = 1)]
        tx: usize,
        #[arg(long, default_value_t = 250)]
        rows: usize,
        #[arg(long, default_value_t = 200)]
        taps: usize,
        #[arg(long, default_value_t = 10)]
        order: usize,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, value_enum, default_value_t = ModeArg::IidRandom)]
        pilot_mode: ModeArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the Toeplitz block to this CSV file.
        #[arg(long)]
        matrix_out: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    IidRandom,
    ExactOrthogonal,
}

impl From<ModeArg> for PilotMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::IidRandom => PilotMode::IidRandom,
            ModeArg::ExactOrthogonal => PilotMode::ExactOrthogonal,
        }
    }
}

/// Experiment flags; each overrides the matching config-file field.
#[derive(Args)]
struct ExpArgs {
    /// TOML experiment file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    tx: Option<usize>,
    #[arg(long)]
    rx: Option<usize>,
    #[arg(long)]
    taps: Option<usize>,
    #[arg(long)]
    sparsity: Option<usize>,
    #[arg(long)]
    khat: Option<usize>,
    #[arg(long, value_enum)]
    pilot_mode: Option<ModeArg>,
    #[arg(long)]
    budget: Option<f64>,
    #[arg(long)]
    walden_c: Option<f64>,
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    bits: Option<Vec<u32>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    snr: Option<Vec<f64>>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    m_override: Option<Vec<usize>>,
    #[arg(long)]
    rip_samples: Option<usize>,
    /// Exit nonzero when any cell is infeasible.
    #[arg(long)]
    strict: bool,
}

impl ExpArgs {
    fn resolve(self) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($($field:ident = $val:expr;)*) => {$(if let Some(v) = $val { c.$field = v; })*};
        }
        set! {
            n_tx = self.tx;
            n_rx = self.rx;
            taps = self.taps;
            sparsity = self.sparsity;
            pilot_mode = self.pilot_mode.map(PilotMode::from);
            power_budget_w = self.budget;
            walden_c = self.walden_c;
            duration_s = self.duration;
            bit_depths = self.bits;
            snr_db = self.snr;
            trials = self.trials;
            master_seed = self.seed;
            rip_samples = self.rip_samples;
        }
        if self.khat.is_some() {
            c.khat = self.khat;
        }
        if self.m_override.is_some() {
            c.m_override = self.m_override;
        }
        c.strict |= self.strict;
        c.validate()?;
        Ok(c)
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Sweep { exp, out } => {
            let cfg = exp.resolve()?;
            let res = run_sweep(&cfg)?;
            write_sweep(&out, &cfg, &res)?;
            for o in &res.optimum {
                println!("snr {:>6} dB: best bit depth {} ({:.2} dB)", o.snr_db, o.best_bit_depth, o.best_mean_db);
            }
            let bad = res.infeasible_cells();
            if !bad.is_empty() {
                eprintln!("infeasible bit depths: {bad:?}");
            }
            Ok(bad.is_empty() || !cfg.strict)
        }
        Command::Table2 {
            budget,
            walden_c,
            duration,
            bits,
            verbatim,
            out,
        } => {
            let rows = emit_table2(budget, walden_c, duration, &bits, verbatim)?;
            match out {
                Some(p) => write_table2_csv(std::fs::File::create(p)?, &rows)?,
                None => write_table2_csv(std::io::stdout().lock(), &rows)?,
            }
            Ok(true)
        }
        Command::Bound { exp, out } => {
            let cfg = exp.resolve()?;
            let rows = emit_bound_overlay(&cfg)?;
            std::fs::create_dir_all(&out)?;
            write_csv(&out.join("bound.csv"), &rows)?;
            write_manifest(&out, &cfg, &["bound.csv"])?;
            Ok(true)
        }
        Command::Khat { exp, grid, out } => {
            let cfg = exp.resolve()?;
            let (records, summary) = khat_robustness(&cfg, &grid)?;
            std::fs::create_dir_all(&out)?;
            write_csv(&out.join("khat_records.csv"), &records)?;
            write_csv(&out.join("khat.csv"), &summary)?;
            write_manifest(&out, &cfg, &["khat_records.csv", "khat.csv"])?;
            for s in &summary {
                println!("khat {:>4}: {:.2} dB (paired diff {:+.2} dB)", s.khat, s.mean_db, s.mean_diff_vs_k_db);
            }
            Ok(true)
        }
        Command::RipProbe {
            tx,
            rows,
            taps,
            order,
            samples,
            pilot_mode,
            seed,
            matrix_out,
            out,
        } => {
            let pilots = generate_pilots(tx, rows, taps, pilot_mode.into(), seed)?;
            let model = build_measurement_model(&pilots, tx, 1, taps)?;
            let block = model.receiver_block();
            if let Some(p) = matrix_out {
                fewbit::pilot::write_matrix_csv(&p, &block)?;
            }
            let sampling = if tx > 1 {
                IndexSampling::Blocked { block_size: taps }
            } else {
                IndexSampling::Uniform
            };
            let est = probe_rip(&block, order, samples, sampling, seed)?;
            match out {
                Some(p) => write_rip_csv(&p, &[est])?,
                None => println!(
                    "order {} over {} samples: delta_hat {:.4} (eigenvalues {:.4}..{:.4}; a lower bound on the true constant)",
                    est.sparsity_order, est.num_samples, est.delta_hat, est.min_eig_seen, est.max_eig_seen
                ),
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
