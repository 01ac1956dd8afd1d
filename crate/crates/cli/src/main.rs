use std::fs::File;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use osstokes::export::FieldDocument;
use osstokes::fe::Order;
use osstokes::mesh::{build_mesh, mesh_stats, mesh_to_string, read_mesh, DomainTag, Mesh};
use osstokes::stokes::three_field::solve_three_field_eigs;
use osstokes::stokes::two_field::solve_two_field_eigs;
use osstokes::stokes::Modes;
use osstokes::study::{emit_report, run_convergence_study, summarize, Constants, ReportFormat, StudyConfig};
use osstokes::Error;

const EXIT_IO: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_SOLVER: u8 = 3;
const EXIT_STUDY_PARTIAL: u8 = 4;

#[derive(Parser)]
#[command(name = "osstokes", version, about = "Stabilized two- and three-field Stokes eigenvalue solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a mesh, write it as JSON and print its statistics.
    Mesh {
        #[command(flatten)]
        mesh: MeshArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve for the smallest eigenvalues and write the modes.
    Solve(SolveArgs),
    /// Run a mesh-refinement study from a JSON config.
    Study {
        #[arg(long)]
        config: PathBuf,
        /// Directory for the CSV and Markdown reports.
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Convert a mode file and its mesh to legacy VTK.
    Export {
        /// A mode file, or the prefix given to `solve --out-prefix`.
        #[arg(long)]
        fields: String,
        /// Mode number used with a prefix.
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
        mode: u64,
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Domain {
    Square,
    Lshape,
    Cracked,
}

impl From<Domain> for DomainTag {
    fn from(d: Domain) -> Self {
        match d {
            Domain::Square => DomainTag::Square,
            Domain::Lshape => DomainTag::LShape,
            Domain::Cracked => DomainTag::CrackedSquare,
        }
    }
}

#[derive(Args)]
struct MeshArgs {
    #[arg(long, value_enum, default_value = "square")]
    domain: Domain,
    /// Cells per unit edge (square, lshape).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..), conflicts_with = "target_vertices")]
    n: Option<u64>,
    /// Approximate vertex count (cracked).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    target_vertices: Option<u64>,
}

impl MeshArgs {
    fn build(&self) -> Result<Mesh, Failure> {
        let domain = DomainTag::from(self.domain);
        let size = match (domain, self.n, self.target_vertices) {
            (DomainTag::CrackedSquare, None, Some(t)) => t,
            (DomainTag::CrackedSquare, _, _) => return Err(Failure::usage("the cracked domain takes --target-vertices")),
            (_, Some(n), None) => n,
            _ => return Err(Failure::usage("square and lshape take --n")),
        };
        Ok(build_mesh(domain, size as usize)?)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormulationArg {
    TwoField,
    ThreeField,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long, value_enum, default_value = "two-field")]
    formulation: FormulationArg,
    #[command(flatten)]
    mesh: MeshArgs,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
    order: u8,
    /// Number of eigenvalues.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    k: u64,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    c1: Option<f64>,
    #[arg(long)]
    c2: Option<f64>,
    #[arg(long)]
    c3: Option<f64>,
    #[arg(long)]
    c4: Option<f64>,
    #[arg(long)]
    c5: Option<f64>,
    /// Writes `{prefix}_mesh.json` and `{prefix}_mode{i}.json`.
    #[arg(long)]
    out_prefix: Option<String>,
    /// Also solve for ten modes with every stabilization constant multiplied
    /// by ten and list the modes that move by more than one percent.
    #[arg(long)]
    large_constants: bool,
}

impl SolveArgs {
    fn constants(&self) -> Constants {
        let d = Constants::default();
        Constants {
            mu: self.mu.unwrap_or(d.mu),
            c1: self.c1.unwrap_or(d.c1),
            c2: self.c2.unwrap_or(d.c2),
            c3: self.c3.unwrap_or(d.c3),
            c4: self.c4.unwrap_or(d.c4),
            c5: self.c5.unwrap_or(d.c5),
        }
    }
}

/// An error with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Io(_) => EXIT_IO,
            Error::SingularMatrix { .. }
            | Error::ShiftRejected { .. }
            | Error::Convergence { .. }
            | Error::SpectralAnomaly { .. }
            | Error::AssemblyBug(_) => EXIT_SOLVER,
            _ => EXIT_USAGE,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure {
            code: EXIT_IO,
            message: e.to_string(),
        }
    }
}

fn create(path: &Path) -> Result<File, Failure> {
    File::create(path).map_err(|e| Failure {
        code: EXIT_IO,
        message: format!("cannot write {}: {e}", path.display()),
    })
}

fn solve(mesh: &Mesh, formulation: FormulationArg, order: Order, c: &Constants, k: usize) -> Result<Modes, Failure> {
    let modes = match formulation {
        FormulationArg::TwoField => {
            let p = c.two_field();
            p.validate()?;
            solve_two_field_eigs(mesh, order, &p, k)?
        }
        FormulationArg::ThreeField => {
            let p = c.three_field();
            p.validate()?;
            solve_three_field_eigs(mesh, order, &p, k)?
        }
    };
    Ok(modes)
}

fn cmd_mesh(args: &MeshArgs, out: &Path) -> Result<(), Failure> {
    let mesh = args.build()?;
    create(out)?.write_all(mesh_to_string(&mesh).as_bytes())?;
    let s = mesh_stats(&mesh);
    println!("vertices {}", s.vertex_count);
    println!("triangles {}", s.triangle_count);
    println!("h_max {}", s.h_max);
    println!("min_angle {}", s.min_angle);
    Ok(())
}

fn cmd_solve(args: &SolveArgs) -> Result<(), Failure> {
    let order = Order::try_from(args.order)?;
    let constants = args.constants();
    let mesh = args.mesh.build()?;
    let mut mode_files = Vec::new();
    if let Some(prefix) = &args.out_prefix {
        let mut f = create(Path::new(&format!("{prefix}_mesh.json")))?;
        f.write_all(mesh_to_string(&mesh).as_bytes())?;
        for i in 1..=args.k as usize {
            mode_files.push(create(Path::new(&FieldDocument::path_for(prefix, i)))?);
        }
    }
    let modes = solve(&mesh, args.formulation, order, &constants, args.k as usize)?;
    println!("mode lambda residual");
    for (i, pair) in modes.solution.pairs.iter().enumerate() {
        println!("{} {} {:e}", i + 1, pair.lambda, pair.residual);
    }
    for (i, (mut file, (pair, fields))) in mode_files.into_iter().zip(modes.solution.pairs.iter().zip(&modes.fields)).enumerate() {
        let doc = FieldDocument::new(order, i + 1, pair.lambda, pair.residual, fields);
        file.write_all(serde_json::to_string(&doc).map_err(Error::from)?.as_bytes())?;
    }
    if args.large_constants {
        large_constants_report(&mesh, args.formulation, order, &constants)?;
    }
    Ok(())
}

/// Informational: compares ten modes at the given constants with ten modes
/// at ten times the stabilization constants.
fn large_constants_report(mesh: &Mesh, formulation: FormulationArg, order: Order, c: &Constants) -> Result<(), Failure> {
    let big = Constants {
        mu: c.mu,
        c1: 10.0 * c.c1,
        c2: 10.0 * c.c2,
        c3: 10.0 * c.c3,
        c4: 10.0 * c.c4,
        c5: 10.0 * c.c5,
    };
    let base = solve(mesh, formulation, order, c, 10)?.eigenvalues();
    let large = solve(mesh, formulation, order, &big, 10)?.eigenvalues();
    println!("large constants (x10)");
    println!("mode lambda lambda_x10 relative_change deviates");
    for (i, (a, b)) in base.iter().zip(&large).enumerate() {
        let change = (b - a) / a;
        println!("{} {} {} {} {}", i + 1, a, b, change, change.abs() > 0.01);
    }
    Ok(())
}

fn cmd_study(config: &Path, out_dir: &Path) -> Result<(), Failure> {
    let config = StudyConfig::load(config).map_err(|e| match e {
        Error::Io(io) => Failure::usage(format!("cannot read {}: {io}", config.display())),
        e => Failure::usage(e.to_string()),
    })?;
    std::fs::create_dir_all(out_dir)?;
    let stem = config.file_stem();
    let outputs: Vec<(File, ReportFormat)> = [ReportFormat::Csv, ReportFormat::Markdown]
        .into_iter()
        .map(|f| Ok((create(&out_dir.join(format!("{stem}.{}", f.extension())))?, f)))
        .collect::<Result<_, Failure>>()?;
    let (report, failure) = match run_convergence_study(&config) {
        Ok(report) => (report, None),
        Err(f) => (summarize(config.clone(), f.rows.clone()), Some(f)),
    };
    for (mut file, format) in outputs {
        file.write_all(emit_report(&report, format).as_bytes())?;
    }
    for r in &report.rows {
        println!("{} {} {}", r.size, r.lambda_h, r.rel_error);
    }
    match report.slope {
        Some(s) => println!("slope {s}"),
        None => println!("slope none"),
    }
    match failure {
        Some(f) => Err(Failure {
            code: EXIT_STUDY_PARTIAL,
            message: f.to_string(),
        }),
        None => Ok(()),
    }
}

fn cmd_export(fields: &str, mode: usize, mesh: &Path, out: &Path) -> Result<(), Failure> {
    let mut file = create(out)?;
    let path = if Path::new(fields).is_file() {
        PathBuf::from(fields)
    } else {
        PathBuf::from(FieldDocument::path_for(fields, mode))
    };
    let doc = FieldDocument::read(&path)?;
    let mesh = read_mesh(mesh)?;
    let vtk = osstokes::export::vtk_string(&mesh, doc.order, &doc.fields())?;
    file.write_all(vtk.as_bytes())?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Mesh { mesh, out } => cmd_mesh(&mesh, &out),
        Command::Solve(args) => cmd_solve(&args),
        Command::Study { config, out_dir } => cmd_study(&config, &out_dir),
        Command::Export {
            fields,
            mode,
            mesh,
            out,
        } => cmd_export(&fields, mode as usize, &mesh, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
