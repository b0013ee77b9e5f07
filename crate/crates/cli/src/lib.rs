//! Command-line surface of copsense: subcommands over the JSON file formats
//! of the core crate, and the experiment harness.

pub mod experiment;
pub mod svg;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use copsense::copositive::{
    check_partition, check_spn, demo_gap_example, demo_nonattainment, read_certificate, refute, synthesize_closed_form,
    write_certificate, ClosedFormMode, ClosedFormOptions, CopositivityVerdict, VerdictTag,
};
use copsense::exact::{is_bounded, solve_exact, ExactStatus, DEFAULT_NODE_BUDGET};
use copsense::lift::build_lifting;
use copsense::model::{generate_comb, generate_sslp, generate_ssqp, read_instance, reduce_edge_coloring, write_instance};
use copsense::sensitivity::{fit_dual, predict, select_weights, FitSpec, LMode};
use copsense::{Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use experiment::{run_experiment, ExperimentConfig, ExperimentOutcome, Family};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_USAGE: i32 = 4;

pub fn exit_code(e: &Error) -> i32 {
    if e.is_io() {
        EXIT_IO
    } else {
        EXIT_DOMAIN
    }
}

#[derive(Debug, Parser)]
#[command(name = "copsense", version, about = "Sensitivity bounds for mixed binary quadratic programs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum GenFamily {
    Comb,
    Sslp,
    Ssqp,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    /// Bounded when the feasible region is, otherwise convex-unbounded.
    Auto,
    Bounded,
    PsdUnbounded,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CopMethod {
    /// Partition up to dimension 12, SPN beyond.
    Auto,
    Spn,
    Partition,
    Refute,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a random instance.
    Generate {
        #[arg(long, value_enum)]
        family: GenFamily,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 0.5)]
        density: f64,
        /// Vertices per side (COMB).
        #[arg(long, default_value_t = 5)]
        v: usize,
        /// Cardinality bound (COMB).
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        /// Items (SSLP/SSQP).
        #[arg(long, default_value_t = 6)]
        n: usize,
        /// Resource rows (SSLP/SSQP).
        #[arg(long, default_value_t = 2)]
        m: usize,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Solve an instance exactly.
    Solve {
        instance: PathBuf,
        #[arg(long, default_value_t = DEFAULT_NODE_BUDGET)]
        budget: usize,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Dump the lifted matrices of an instance.
    Lift {
        instance: PathBuf,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Synthesize the closed-form certificate for a lower bound `l`.
    ClosedForm {
        instance: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        l: f64,
        #[arg(long, default_value_t = 1e-3)]
        eps0: f64,
        #[arg(long, default_value_t = 1e-3)]
        r: f64,
        #[arg(long, value_enum, default_value_t = ModeArg::Auto)]
        mode: ModeArg,
        #[arg(long, default_value_t = 40)]
        rounds: usize,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Fit a certificate by semidefinite programming.
    Fit {
        instance: PathBuf,
        /// FitSpec JSON file; flags below override its fields.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        r: Option<f64>,
        /// Comma-separated per-row grid ranges; sets both weight vectors.
        #[arg(long, value_delimiter = ',')]
        ranges: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        w1: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        w2: Option<Vec<f64>>,
        /// Fixed lower bound; variable when absent.
        #[arg(long, allow_hyphen_values = true)]
        l: Option<f64>,
        #[arg(long)]
        no_mccormick: bool,
        #[arg(long)]
        no_linear_penalty: bool,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Evaluate a certificate's bound at `b + Δb`.
    Predict {
        certificate: PathBuf,
        /// Comma-separated change of every standard row; zero when absent.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        delta: Option<Vec<f64>>,
    },
    /// Decide copositivity of a matrix file.
    CheckCop {
        matrix: PathBuf,
        #[arg(long, value_enum, default_value_t = CopMethod::Auto)]
        method: CopMethod,
        #[arg(long, default_value_t = 64)]
        restarts: usize,
    },
    /// Reduce edge coloring of a graph to an instance.
    ReduceEdgecolor {
        /// Graph file, or `petersen`, `K<k>`, `P<k>`.
        graph: String,
        /// Number of colors.
        #[arg(long)]
        colors: usize,
        #[arg(long, default_value_t = 0.0)]
        rhs: f64,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Dual infeasibility example: witness table over the multiplier grid.
    DemoGap {
        /// Print only this many table rows.
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Dual non-attainment example on a clique.
    DemoNonattain {
        #[arg(long, default_value_t = 4)]
        clique: usize,
        #[arg(long, default_value_t = 1e-3)]
        eps: f64,
    },
    /// Run an experiment from a config file.
    Experiment {
        config: PathBuf,
        /// Worker threads; 0 uses every core.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        /// Overrides the config's output directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

/// Square matrix file: `{"dim": d, "M": [row-major]}` or nested rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixFile {
    Flat {
        dim: usize,
        #[serde(rename = "M")]
        matrix: Vec<f64>,
    },
    Rows(Vec<Vec<f64>>),
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let file: MatrixFile = serde_json::from_str(&fs::read_to_string(path)?)?;
    match file {
        MatrixFile::Flat { dim, matrix } => {
            if matrix.len() != dim * dim {
                return Err(Error::Dimension(format!("M has {} entries, expected {}", matrix.len(), dim * dim)));
            }
            Ok(DMatrix::from_row_slice(dim, dim, &matrix))
        }
        MatrixFile::Rows(rows) => {
            let d = rows.len();
            if rows.iter().any(|r| r.len() != d) {
                return Err(Error::Dimension("matrix rows must all have length equal to the row count".into()));
            }
            Ok(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
        }
    }
}

fn flat(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().iter().copied().collect()
}

#[derive(Serialize)]
struct LiftDump {
    dim: usize,
    binaries: Vec<usize>,
    b: Vec<f64>,
    objective: Vec<f64>,
    homog: Vec<f64>,
    regularizer: Vec<f64>,
    row_linear: Vec<Vec<f64>>,
    row_quad: Vec<Vec<f64>>,
    row_penalty: Vec<Vec<f64>>,
    row_linear_penalty: Vec<Vec<f64>>,
    complementarity: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct SolveDump {
    status: ExactStatus,
    value: Option<f64>,
    x: Option<Vec<f64>>,
    nodes: usize,
}

fn emit(text: String, out: Option<&Path>) -> Result<String> {
    match out {
        Some(p) => {
            fs::write(p, &text)?;
            Ok(String::new())
        }
        None => Ok(text),
    }
}

fn verdict_line(v: &CopositivityVerdict) -> String {
    let tag = match v.tag {
        VerdictTag::Copositive => "Copositive",
        VerdictTag::NotCopositive => "NotCopositive",
        VerdictTag::Undecided => "Undecided",
    };
    let mut s = tag.to_string();
    if let Some(w) = &v.witness {
        let parts: Vec<String> = w.iter().map(|x| format!("{x:.6}")).collect();
        let _ = write!(s, "\nwitness {}", parts.join(","));
    }
    if v.margin.is_finite() {
        let _ = write!(s, "\nmargin {:.6e}", v.margin);
    }
    s
}

/// Runs one subcommand and returns what it prints.
pub fn run(cmd: Command) -> Result<String> {
    match cmd {
        Command::Generate {
            family,
            seed,
            density,
            v,
            p,
            n,
            m,
            out,
        } => {
            let inst = match family {
                GenFamily::Comb => generate_comb(seed, density, v, p)?,
                GenFamily::Sslp => generate_sslp(seed, density, n, m)?,
                GenFamily::Ssqp => generate_ssqp(seed, density, n, m)?,
            };
            write_instance(&inst, &out)?;
            Ok(format!("wrote {} ({} variables, {} rows)", out.display(), inst.num_vars(), inst.num_rows()))
        }
        Command::Solve { instance, budget, out } => {
            let inst = read_instance(&instance)?;
            let r = solve_exact(&inst, budget)?;
            let dump = SolveDump {
                status: r.status,
                value: r.value.is_finite().then_some(r.value),
                x: r.x.map(|x| x.iter().copied().collect()),
                nodes: r.nodes,
            };
            emit(serde_json::to_string_pretty(&dump)?, out.as_deref())
        }
        Command::Lift { instance, out } => {
            let lift = build_lifting(&read_instance(&instance)?);
            let many = |v: &[DMatrix<f64>]| v.iter().map(flat).collect::<Vec<_>>();
            let dump = LiftDump {
                dim: lift.dim,
                binaries: lift.binaries.iter().map(|j| j + 1).collect(),
                b: lift.rhs.iter().copied().collect(),
                objective: flat(&lift.objective),
                homog: flat(&lift.homog),
                regularizer: flat(&lift.regularizer),
                row_linear: many(&lift.row_linear),
                row_quad: many(&lift.row_quad),
                row_penalty: many(&lift.row_penalty),
                row_linear_penalty: many(&lift.row_linear_penalty),
                complementarity: many(&lift.complementarity),
            };
            emit(serde_json::to_string_pretty(&dump)?, out.as_deref())
        }
        Command::ClosedForm {
            instance,
            l,
            eps0,
            r,
            mode,
            rounds,
            out,
        } => {
            let inst = read_instance(&instance)?;
            let mode = match mode {
                ModeArg::Bounded => ClosedFormMode::Bounded,
                ModeArg::PsdUnbounded => ClosedFormMode::PsdUnbounded,
                ModeArg::Auto if is_bounded(&inst)? => ClosedFormMode::Bounded,
                ModeArg::Auto => ClosedFormMode::PsdUnbounded,
            };
            let opts = ClosedFormOptions {
                max_rounds: rounds,
                ..ClosedFormOptions::default()
            };
            let cert = synthesize_closed_form(&inst, l, eps0, r, mode, &opts)?;
            write_certificate(&cert, &out)?;
            Ok(format!("objective {}\nverdict {:?}", cert.objective, cert.verdict.tag))
        }
        Command::Fit {
            instance,
            spec,
            tau,
            r,
            ranges,
            w1,
            w2,
            l,
            no_mccormick,
            no_linear_penalty,
            out,
        } => {
            let inst = read_instance(&instance)?;
            let rows = inst.num_rows();
            let mut fit = match spec {
                Some(p) => serde_json::from_str::<FitSpec>(&fs::read_to_string(p)?)?,
                None => FitSpec::new(rows),
            };
            if let Some(rg) = ranges {
                fit = fit.with_weights(select_weights(&rg));
            }
            if let Some(w) = w1 {
                fit.w1 = w;
            }
            if let Some(w) = w2 {
                fit.w2 = w;
            }
            if let Some(t) = tau {
                fit.tau = t;
            }
            if let Some(v) = r {
                fit.r = v;
            }
            if let Some(v) = l {
                fit.l_mode = LMode::Fixed(v);
            }
            fit.use_mccormick &= !no_mccormick;
            fit.use_linear_penalty &= !no_linear_penalty;
            let cert = fit_dual(&inst, &fit)?;
            write_certificate(&cert, &out)?;
            Ok(format!("objective {}\nverdict {:?}", cert.objective, cert.verdict.tag))
        }
        Command::Predict { certificate, delta } => {
            let cert = read_certificate(&certificate)?;
            let delta = match delta {
                Some(d) => DVector::from_vec(d),
                None => DVector::zeros(cert.rhs.len()),
            };
            let p = predict(&cert, &delta)?;
            Ok(format!("{}\nverified {}", p.value, p.verified))
        }
        Command::CheckCop { matrix, method, restarts } => {
            let m = read_matrix(&matrix)?;
            if m.nrows() == 0 {
                return Err(Error::InvalidArgument("empty matrix".into()));
            }
            let verdict = match method {
                CopMethod::Spn => check_spn(&m),
                CopMethod::Partition => check_partition(&m),
                CopMethod::Refute => refute(&m, restarts),
                CopMethod::Auto => {
                    let found = refute(&m, restarts);
                    if found.tag == VerdictTag::NotCopositive {
                        found
                    } else if m.nrows() <= 12 {
                        check_partition(&m)
                    } else {
                        check_spn(&m)
                    }
                }
            };
            Ok(verdict_line(&verdict))
        }
        Command::ReduceEdgecolor { graph, colors, rhs, out } => {
            let g = experiment::resolve_graph(&graph)?;
            let inst = reduce_edge_coloring(&g, colors, rhs)?;
            write_instance(&inst, &out)?;
            Ok(format!("wrote {} ({} variables, {} rows)", out.display(), inst.num_vars(), inst.num_rows()))
        }
        Command::DemoGap { limit } => {
            let rep = demo_gap_example();
            let mut s = String::from("theta,alpha,beta,eps,value,formula\n");
            for row in rep.rows.iter().take(limit.unwrap_or(usize::MAX)) {
                let eps = row.eps.map(|e| format!("{e:e}")).unwrap_or_default();
                let _ = writeln!(s, "{},{},{},{eps},{:.6e},{:.6e}", row.theta, row.alpha, row.beta, row.value, row.formula);
            }
            let _ = write!(
                s,
                "all_refuted {}\nmax_formula_error {:.3e}",
                rep.all_refuted, rep.max_formula_error
            );
            Ok(s)
        }
        Command::DemoNonattain { clique, eps } => {
            let rep = demo_nonattainment(clique, None, eps)?;
            Ok(serde_json::to_string_pretty(&rep)?)
        }
        Command::Experiment { config, jobs, out_dir } => {
            let mut cfg = ExperimentConfig::read(&config)?;
            cfg.apply_env()?;
            if let Some(d) = out_dir {
                cfg.output.dir = d;
            }
            let outcome = run_experiment(&cfg, jobs)?;
            let mut s = format!(
                "instances {}\nfailures {}\nweak_duality_violations {}\n",
                outcome.instances,
                outcome.failures.len(),
                outcome.weak_duality_violations
            );
            s.push_str(&experiment::gaps_csv(&outcome.gaps));
            Ok(s.trim_end().to_string())
        }
    }
}
