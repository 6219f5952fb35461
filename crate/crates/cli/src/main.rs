//! Command-line front end. All numeric work lives in the core crate;
//! this binary parses flags, seeds runs, and writes reports.
//!
//! Exit contract: 0 on success, 1 when a deterministic identity check
//! fails (never for large fitted constants), 2 on usage errors.

mod report;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mirrorball_core::estimate::{
    find_covering_delta, main_estimate_check, norm_sweep, normal_subgroup_bound, EstimateError,
    SweepMethod, SweepParams,
};
use mirrorball_core::group::{
    build_g_mln, close_group, find_conjugator, find_hyperplanes, normal_subgroup_from,
    orbit_decomposition, reduction_tree, GroupError, ReductionTree, ReflectionGroup,
};
use mirrorball_core::kernel::{
    flip_bound_check, series_constant, AveragedForm, KernelError, KernelEvaluator,
    TwistedFunction,
};
use mirrorball_core::linalg::{c64, CMatrix};
use mirrorball_core::poly::{builtin_orbit_map, MapKind, PolyError, Polynomial};
use mirrorball_core::quad::{
    change_of_variable_check, integrate, mean_value_check, reproducing_check, Sampler,
};
use mirrorball_core::rng::DEFAULT_SEED;
use mirrorball_core::{tol, Complex64};
use report::{complex_str, f17, Format, Report, Row};

#[derive(Parser)]
#[command(
    name = "mirrorball",
    version,
    about = "Reflection groups on the complex 2-ball and their averaged Bergman kernels"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a reflection group and print its mirror structure.
    Group(GroupArgs),
    /// Print the normal-subgroup reduction tree with conjugacy witnesses.
    Tree(TreeArgs),
    /// Print an orbit map: components, Jacobian, fitted constant.
    Map(MapArgs),
    /// Kernel evaluation and the explicit two-piece bound suite.
    #[command(subcommand)]
    Kernel(KernelCmd),
    /// Seeded Monte Carlo integrals and integral identities.
    #[command(subcommand)]
    Quad(QuadCmd),
    /// Verification suites with machine-readable reports.
    #[command(subcommand)]
    Verify(VerifyCmd),
}

#[derive(Args)]
struct GroupSel {
    /// Rotation order m of G(m,l,2).
    #[arg(long)]
    m: Option<u32>,
    /// Phase-sum divisor l; must divide m.
    #[arg(long)]
    ell: Option<u32>,
    /// Load the group from a JSON document written by `group --output`.
    #[arg(long, conflicts_with_all = ["m", "ell"])]
    input: Option<PathBuf>,
}

#[derive(Args)]
struct GroupArgs {
    #[command(flatten)]
    sel: GroupSel,
    /// Ambient dimension (1 to 3).
    #[arg(long, default_value_t = 2)]
    n: usize,
    /// Write the group as a versioned JSON document.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct TreeArgs {
    #[command(flatten)]
    sel: GroupSel,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum MapKindArg {
    Identity,
    Square1,
    Gml2,
    Pik,
}

#[derive(Args)]
struct MapArgs {
    /// Which builtin orbit map.
    #[arg(long, value_enum, default_value = "pik")]
    kind: MapKindArg,
    /// m for gml2.
    #[arg(long)]
    m: Option<u32>,
    /// l for gml2; must divide m.
    #[arg(long)]
    ell: Option<u32>,
    /// k for pik (group G(2^k, 2^k, 2)).
    #[arg(long)]
    k: Option<u32>,
}

#[derive(Subcommand)]
enum KernelCmd {
    /// Evaluate the kernel and every averaged variant at one pair.
    Eval(KernelEvalArgs),
    /// Fit the explicit bound constants for the order-two flip group.
    Bounds(BoundsArgs),
}

#[derive(Args)]
struct KernelEvalArgs {
    /// z as four reals: re1 im1 re2 im2.
    #[arg(long, num_args = 4, allow_negative_numbers = true, value_names = ["RE1", "IM1", "RE2", "IM2"])]
    z: Vec<f64>,
    /// w as four reals: re1 im1 re2 im2.
    #[arg(long, num_args = 4, allow_negative_numbers = true, value_names = ["RE1", "IM1", "RE2", "IM2"])]
    w: Vec<f64>,
    /// Average over G(m,l,2) when given.
    #[arg(long)]
    m: Option<u32>,
    /// l for the averaging group; must divide m.
    #[arg(long)]
    ell: Option<u32>,
    /// Weight exponent; p > 1.
    #[arg(long, default_value_t = 2.0)]
    p: f64,
}

#[derive(Args)]
struct BoundsArgs {
    /// Weight exponent; p > 1.
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    /// Pair draws (each draw also contributes its swap).
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct OutArgs {
    /// Report seed. Default: MIRRORBALL_SEED env var, then a built-in.
    #[arg(long)]
    seed: Option<u64>,
    /// Report destination; stdout when absent.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Report format.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Integrand {
    /// Constant 1; integral pi^2/2.
    One,
    /// |z1|^2; integral pi^2/6.
    Z1sq,
    /// |z1|^4; integral pi^2/12.
    Z1quad,
}

#[derive(Subcommand)]
enum QuadCmd {
    /// Integrate a fixed integrand over the ball.
    Integrate(IntegrateArgs),
    /// Change-of-variable identity for a builtin orbit map.
    Cov(CovArgs),
    /// Kernel reproduction of a twisted pullback at interior points.
    Reproducing(SamplesArgs),
    /// Holomorphic mean value over the ball equals the center value.
    Meanvalue(MeanValueArgs),
}

#[derive(Args)]
struct IntegrateArgs {
    #[arg(long, value_enum, default_value_t = Integrand::One)]
    integrand: Integrand,
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    /// Radial strata; 1 means plain uniform rejection.
    #[arg(long, default_value_t = 1)]
    strata: usize,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct CovArgs {
    /// Which builtin orbit map.
    #[arg(long, value_enum, default_value_t = MapKindArg::Square1)]
    map: MapKindArg,
    /// m for gml2.
    #[arg(long)]
    m: Option<u32>,
    /// l for gml2; must divide m.
    #[arg(long)]
    ell: Option<u32>,
    /// k for pik.
    #[arg(long)]
    k: Option<u32>,
    #[arg(long, default_value_t = 200_000)]
    samples: usize,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct SamplesArgs {
    #[arg(long, default_value_t = 200_000)]
    samples: usize,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum MeanFunction {
    /// Constant 1.
    One,
    /// z1*z2, center value 0.
    Z1z2,
    /// 3 + 5*z1^2, center value 3.
    Affine,
}

#[derive(Args)]
struct MeanValueArgs {
    #[arg(long, value_enum, default_value_t = MeanFunction::Affine)]
    function: MeanFunction,
    #[arg(long, default_value_t = 200_000)]
    samples: usize,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Subcommand)]
enum VerifyCmd {
    /// Sampled covering margin for the two-orbit region decomposition.
    Covering(CoveringArgs),
    /// Normal-subgroup kernel domination constant on a mirror region.
    Nsl(NslArgs),
    /// Two-subgroup kernel domination with the unit denominator floor.
    Main(MainArgs),
    /// Operator-norm indicator across a p grid.
    Sweep(SweepArgs),
    /// Same as `quad reproducing`.
    Reproducing(SamplesArgs),
    /// Same as `quad cov`.
    Cov(CovArgs),
    /// Same as `quad meanvalue`.
    Meanvalue(MeanValueArgs),
    /// Same as `kernel bounds`.
    Bounds(BoundsArgs),
}

#[derive(Args)]
struct CoveringArgs {
    /// Rotation order m of G(m,l,2); the group needs two mirror orbits.
    #[arg(long)]
    m: u32,
    /// Phase-sum divisor l; must divide m.
    #[arg(long)]
    ell: u32,
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct NslArgs {
    #[arg(long)]
    m: u32,
    /// Must divide m.
    #[arg(long)]
    ell: u32,
    /// Mirror orbit generating the normal subgroup.
    #[arg(long, default_value_t = 0)]
    orbit: usize,
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    /// Mirror-distance cutoff for the sampled region.
    #[arg(long, default_value_t = 0.2)]
    delta: f64,
    #[arg(long, default_value_t = 20_000)]
    samples: usize,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct MainArgs {
    #[arg(long)]
    m: u32,
    /// Must divide m.
    #[arg(long)]
    ell: u32,
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    #[arg(long, default_value_t = 20_000)]
    samples: usize,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Schur,
    GridPower,
}

#[derive(Args)]
struct SweepArgs {
    /// Averaging group G(m,l,2); the order-two flip group when absent.
    #[arg(long)]
    m: Option<u32>,
    /// Must divide m.
    #[arg(long)]
    ell: Option<u32>,
    /// Comma-separated exponents, each > 1.
    #[arg(long, value_delimiter = ',', required = true)]
    p_grid: Vec<f64>,
    #[arg(long, value_enum, default_value_t = MethodArg::Schur)]
    method: MethodArg,
    /// Monte Carlo samples per integral (schur).
    #[arg(long, default_value_t = 20_000)]
    samples: usize,
    /// Test points per supremum (schur).
    #[arg(long, default_value_t = 24)]
    test_points: usize,
    /// Kernel matrix nodes (grid-power).
    #[arg(long, default_value_t = 400)]
    nodes: usize,
    /// Power iterations (grid-power).
    #[arg(long, default_value_t = 40)]
    iterations: usize,
    /// Report seed. Default: MIRRORBALL_SEED env var, then a built-in.
    #[arg(long)]
    seed: Option<u64>,
    /// JSONL report path, appended row by row; stdout when absent.
    #[arg(long)]
    output: Option<PathBuf>,
}

enum RunError {
    Usage(String),
    Check(String),
}

impl From<GroupError> for RunError {
    fn from(e: GroupError) -> Self {
        match e {
            GroupError::NotNormal => RunError::Check(e.to_string()),
            _ => RunError::Usage(e.to_string()),
        }
    }
}

impl From<PolyError> for RunError {
    fn from(e: PolyError) -> Self {
        RunError::Usage(e.to_string())
    }
}

impl From<KernelError> for RunError {
    fn from(e: KernelError) -> Self {
        RunError::Usage(e.to_string())
    }
}

impl From<EstimateError> for RunError {
    fn from(e: EstimateError) -> Self {
        match e {
            EstimateError::NotNormal | EstimateError::MirrorMismatch => {
                RunError::Check(e.to_string())
            }
            _ => RunError::Usage(e.to_string()),
        }
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Check(format!("io: {e}"))
    }
}

impl From<serde_json::Error> for RunError {
    fn from(e: serde_json::Error) -> Self {
        RunError::Usage(format!("bad group document: {e}"))
    }
}

fn main() -> ExitCode {
    // die quietly when a downstream pipe closes, like any filter
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(RunError::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(RunError::Check(m)) => {
            eprintln!("check failed: {m}");
            ExitCode::from(1)
        }
    }
}

fn run(cmd: Command) -> Result<(), RunError> {
    match cmd {
        Command::Group(a) => cmd_group(a),
        Command::Tree(a) => cmd_tree(a),
        Command::Map(a) => cmd_map(a),
        Command::Kernel(KernelCmd::Eval(a)) => cmd_kernel_eval(a),
        Command::Kernel(KernelCmd::Bounds(a)) | Command::Verify(VerifyCmd::Bounds(a)) => {
            cmd_bounds(a)
        }
        Command::Quad(QuadCmd::Integrate(a)) => cmd_integrate(a),
        Command::Quad(QuadCmd::Cov(a)) | Command::Verify(VerifyCmd::Cov(a)) => cmd_cov(a),
        Command::Quad(QuadCmd::Reproducing(a)) | Command::Verify(VerifyCmd::Reproducing(a)) => {
            cmd_reproducing(a)
        }
        Command::Quad(QuadCmd::Meanvalue(a)) | Command::Verify(VerifyCmd::Meanvalue(a)) => {
            cmd_meanvalue(a)
        }
        Command::Verify(VerifyCmd::Covering(a)) => cmd_covering(a),
        Command::Verify(VerifyCmd::Nsl(a)) => cmd_nsl(a),
        Command::Verify(VerifyCmd::Main(a)) => cmd_main_estimate(a),
        Command::Verify(VerifyCmd::Sweep(a)) => cmd_sweep(a),
    }
}

fn resolve_seed(flag: Option<u64>) -> u64 {
    flag.or_else(|| std::env::var("MIRRORBALL_SEED").ok().and_then(|s| s.parse().ok()))
        .unwrap_or(DEFAULT_SEED)
}

fn build_family(m: u32, ell: u32, n: usize) -> Result<ReflectionGroup, RunError> {
    if ell == 0 || m == 0 || m % ell != 0 {
        return Err(RunError::Usage(format!("l = {ell} must divide m = {m}, both positive")));
    }
    Ok(build_g_mln(m, ell, n)?)
}

fn load_group(sel: &GroupSel, n: usize) -> Result<ReflectionGroup, RunError> {
    if let Some(path) = &sel.input {
        return read_group_document(path);
    }
    match (sel.m, sel.ell) {
        (Some(m), Some(ell)) => build_family(m, ell, n),
        _ => Err(RunError::Usage("give --m and --ell, or --input".into())),
    }
}

fn map_kind(arg: MapKindArg, m: Option<u32>, ell: Option<u32>, k: Option<u32>) -> Result<MapKind, RunError> {
    match arg {
        MapKindArg::Identity => Ok(MapKind::Identity),
        MapKindArg::Square1 => Ok(MapKind::Square1),
        MapKindArg::Gml2 => {
            let (m, ell) = match (m, ell) {
                (Some(m), Some(ell)) => (m, ell),
                _ => return Err(RunError::Usage("gml2 needs --m and --ell".into())),
            };
            if ell == 0 || m == 0 || m % ell != 0 {
                return Err(RunError::Usage(format!("l = {ell} must divide m = {m}")));
            }
            Ok(MapKind::Gml2 { m, ell })
        }
        MapKindArg::Pik => match k {
            Some(k) => Ok(MapKind::Pik { k }),
            None => Err(RunError::Usage("pik needs --k".into())),
        },
    }
}

fn group_document(g: &ReflectionGroup, hps: &[(Vec<Complex64>, u32, usize)]) -> serde_json::Value {
    let elements: Vec<serde_json::Value> = g
        .elements
        .iter()
        .map(|e| {
            let entries: Vec<[f64; 2]> =
                e.matrix.entries().iter().map(|z| [z.re, z.im]).collect();
            serde_json::json!({
                "matrix": entries,
                "det": [e.det.re, e.det.im],
                "order": e.order,
            })
        })
        .collect();
    let hyperplanes: Vec<serde_json::Value> = hps
        .iter()
        .map(|(root, mult, orbit)| {
            let r: Vec<[f64; 2]> = root.iter().map(|z| [z.re, z.im]).collect();
            serde_json::json!({ "root": r, "multiplicity": mult, "orbit": orbit })
        })
        .collect();
    serde_json::json!({
        "schema_version": 1,
        "name": g.name,
        "dimension": g.dim,
        "order": g.order(),
        "elements": elements,
        "generators": g.generators,
        "reflections": g.reflections,
        "hyperplanes": hyperplanes,
    })
}

fn read_group_document(path: &PathBuf) -> Result<ReflectionGroup, RunError> {
    let text = fs::read_to_string(path)?;
    let doc: serde_json::Value = serde_json::from_str(&text)?;
    if doc["schema_version"] != 1 {
        return Err(RunError::Usage(format!(
            "unsupported schema_version {} in {}",
            doc["schema_version"],
            path.display()
        )));
    }
    let dim = doc["dimension"]
        .as_u64()
        .ok_or_else(|| RunError::Usage("missing dimension".into()))? as usize;
    let order = doc["order"].as_u64().unwrap_or(0) as usize;
    let elements = doc["elements"]
        .as_array()
        .ok_or_else(|| RunError::Usage("missing elements".into()))?;
    let mut matrices = Vec::with_capacity(elements.len());
    for el in elements {
        let entries = el["matrix"]
            .as_array()
            .ok_or_else(|| RunError::Usage("element without matrix".into()))?;
        if entries.len() != dim * dim {
            return Err(RunError::Usage("matrix entry count does not match dimension".into()));
        }
        let m = CMatrix::from_fn(dim, |i, j| {
            let pair = &entries[i * dim + j];
            c64(
                pair[0].as_f64().unwrap_or(f64::NAN),
                pair[1].as_f64().unwrap_or(f64::NAN),
            )
        });
        matrices.push(m);
    }
    let mut g = close_group(dim, &matrices, order.max(matrices.len()))?;
    if let Some(name) = doc["name"].as_str() {
        g.name = Some(name.to_string());
    }
    if g.order() != order && order != 0 {
        return Err(RunError::Usage(format!(
            "document claims order {order} but closure has {}",
            g.order()
        )));
    }
    Ok(g)
}

fn group_label(g: &ReflectionGroup) -> String {
    g.name.clone().unwrap_or_else(|| format!("group of order {}", g.order()))
}

fn cmd_group(a: GroupArgs) -> Result<(), RunError> {
    if a.n == 0 || a.n > 3 {
        return Err(RunError::Usage(format!("dimension {} out of range (1 to 3)", a.n)));
    }
    let g = load_group(&a.sel, a.n)?;
    let mut hps = find_hyperplanes(&g)?;
    let orbits = orbit_decomposition(&g, &mut hps);

    println!(
        "{}: order {}, {} reflections, dimension {}",
        group_label(&g),
        g.order(),
        g.reflections.len(),
        g.dim
    );
    println!("hyperplanes ({}):", hps.len());
    for (i, h) in hps.iter().enumerate() {
        let root: Vec<String> = h.root.iter().map(|z| complex_str(*z)).collect();
        println!(
            "  [{i}] root {}  multiplicity {}  orbit {}",
            root.join(" "),
            h.multiplicity,
            h.orbit_id
        );
    }
    println!("orbits: {}", orbits.len());
    for (k, orbit) in orbits.iter().enumerate() {
        println!("  orbit {k}: {} mirrors", orbit.len());
    }

    if let Some(path) = &a.output {
        let triples: Vec<(Vec<Complex64>, u32, usize)> =
            hps.iter().map(|h| (h.root.clone(), h.multiplicity, h.orbit_id)).collect();
        let doc = group_document(&g, &triples);
        fs::write(path, format!("{:#}\n", doc))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn print_tree(node: &ReductionTree, indent: usize) {
    let pad = "  ".repeat(indent);
    let orbit_sizes: Vec<usize> = node.orbit_split.iter().map(|o| o.len()).collect();
    let label = node.group.name.clone().unwrap_or_else(|| "subgroup".into());
    println!(
        "{pad}{label}: order {}, {} mirrors, orbit sizes {:?}",
        node.group.order(),
        node.hyperplanes.len(),
        orbit_sizes
    );
    for child in &node.children {
        print_tree(child, indent + 1);
    }
}

fn cmd_tree(a: TreeArgs) -> Result<(), RunError> {
    let g = load_group(&a.sel, 2)?;
    let tree = reduction_tree(&g)?;
    print_tree(&tree, 0);
    let leaves = tree.leaves();
    println!("leaves: {} (depth {})", leaves.len(), tree.depth());
    if leaves.len() > 1 {
        println!("conjugacy witnesses h with leaf = h (leaf 0) h^-1:");
        for (j, leaf) in leaves.iter().enumerate().skip(1) {
            match find_conjugator(&leaves[0].group, &leaf.group) {
                Some(h) => {
                    let rows: Vec<String> = (0..h.dim())
                        .map(|i| {
                            (0..h.dim())
                                .map(|jj| complex_str(h.get(i, jj)))
                                .collect::<Vec<_>>()
                                .join(" ")
                        })
                        .collect();
                    println!("  leaf {j}: {}", rows.join("; "));
                }
                None => println!("  leaf {j}: no witness found"),
            }
        }
    }
    Ok(())
}

fn poly_json(p: &Polynomial) -> serde_json::Value {
    let terms: Vec<serde_json::Value> = p
        .terms
        .iter()
        .map(|(exps, c)| serde_json::json!([exps, c.re, c.im]))
        .collect();
    serde_json::Value::Array(terms)
}

fn cmd_map(a: MapArgs) -> Result<(), RunError> {
    let kind = map_kind(a.kind, a.m, a.ell, a.k)?;
    let map = builtin_orbit_map(kind)?;
    println!("map {} over {}", map.kind, group_label(&map.group));
    for (i, comp) in map.components.iter().enumerate() {
        println!("component {i}: {}", poly_json(comp));
    }
    println!("jacobian: {}", poly_json(&map.jacobian_det));
    println!(
        "constant vs mirror product: {} (modulus {})",
        complex_str(map.jacobian_constant),
        f17(map.jacobian_constant.norm())
    );
    Ok(())
}

fn cmd_kernel_eval(a: KernelEvalArgs) -> Result<(), RunError> {
    let z = vec![c64(a.z[0], a.z[1]), c64(a.z[2], a.z[3])];
    let w = vec![c64(a.w[0], a.w[1]), c64(a.w[2], a.w[3])];
    if a.p <= 1.0 {
        return Err(RunError::Usage(format!("p = {} must exceed 1", a.p)));
    }
    let base = KernelEvaluator::ball(2);
    let k_base = base.bergman(&z, &w)?;
    println!("K(z,w) = {}", complex_str(k_base));

    let (Some(m), Some(ell)) = (a.m, a.ell) else {
        return Ok(());
    };
    let g = build_family(m, ell, 2)?;
    let ev = base.with_group(g)?.with_p(a.p);
    let avg = ev.averaged(&z, &w)?;
    let zside = ev.averaged_alt(&z, &w, AveragedForm::ZSide)?;
    let double = ev.averaged_alt(&z, &w, AveragedForm::DoubleSum)?;
    // the identity term anchors the scale; the average may cancel to near zero
    let scale = avg
        .norm()
        .max(zside.norm())
        .max(double.norm())
        .max(k_base.norm())
        .max(1e-300);
    let gap = ((avg - zside).norm() / scale).max((avg - double).norm() / scale);
    println!("K_G averaged   = {}", complex_str(avg));
    println!("K_G z-side     = {}", complex_str(zside));
    println!("K_G double sum = {}", complex_str(double));
    println!("max relative gap = {}", f17(gap));
    println!("K_G_p (p = {}) = {}", a.p, complex_str(ev.weighted(&z, &w)?));
    println!("quotient M     = {}", complex_str(ev.division_quotient(&z, &w)?));
    if gap > tol::KERNEL_AGREE_REL {
        return Err(RunError::Check(format!(
            "averaged kernel forms disagree: relative gap {gap:e}"
        )));
    }
    Ok(())
}

fn cmd_bounds(a: BoundsArgs) -> Result<(), RunError> {
    if a.p <= 1.0 {
        return Err(RunError::Usage(format!("p = {} must exceed 1", a.p)));
    }
    let seed = resolve_seed(a.out.seed);
    let rep = flip_bound_check(a.p, a.samples, seed)?;
    let series = series_constant();
    let closed = 416.0 / 27.0;

    let mut out = Report::new("kernel-bounds", seed);
    out.cfg("p", a.p).cfg("samples", a.samples);
    out.push(Row::real("series_constant", series));
    out.push(Row::real("series_closed_form", closed));
    out.push(Row::complex("c_region", c64(rep.c_region, 0.0), 0.0, rep.inside_count));
    out.push(Row::complex("c_off_power", c64(rep.c_off_power, 0.0), 0.0, rep.outside_count));
    out.push(Row::complex("c_off_kernel", c64(rep.c_off_kernel, 0.0), 0.0, rep.outside_count));
    out.push(Row::real("max_ratio_first_coords", rep.max_ratio_first_coords));
    out.push(Row::real("discarded", rep.discarded as f64));
    out.emit(a.out.output.as_deref(), a.out.format, false)?;

    let series_gap = (series - closed).abs() / closed;
    if series_gap > 1e-12 {
        return Err(RunError::Check(format!("series constant off by {series_gap:e}")));
    }
    if rep.max_ratio_first_coords > 4.0 + 1e-9 {
        return Err(RunError::Check(format!(
            "first-coordinate ratio {} exceeds 4 inside the dominant region",
            rep.max_ratio_first_coords
        )));
    }
    if !(rep.c_region.is_finite() && rep.c_off_power.is_finite() && rep.c_off_kernel.is_finite()) {
        return Err(RunError::Check("a fitted constant is not finite".into()));
    }
    Ok(())
}

fn cmd_integrate(a: IntegrateArgs) -> Result<(), RunError> {
    if a.strata == 0 {
        return Err(RunError::Usage("strata must be at least 1".into()));
    }
    let seed = resolve_seed(a.out.seed);
    let sampler = if a.strata == 1 {
        Sampler::uniform(2, seed, a.samples)
    } else {
        Sampler::stratified(2, seed, a.samples, a.strata)
    };
    let pi2 = std::f64::consts::PI * std::f64::consts::PI;
    let (name, f, closed): (_, fn(&[Complex64]) -> Complex64, _) = match a.integrand {
        Integrand::One => ("one", (|_| Complex64::ONE) as fn(&[Complex64]) -> Complex64, pi2 / 2.0),
        Integrand::Z1sq => ("z1sq", |z| c64(z[0].norm_sqr(), 0.0), pi2 / 6.0),
        Integrand::Z1quad => ("z1quad", |z| c64(z[0].norm_sqr() * z[0].norm_sqr(), 0.0), pi2 / 12.0),
    };
    let est = integrate(&sampler, f, None)
        .map_err(|e| RunError::Check(e.to_string()))?;

    let mut out = Report::new("quad-integrate", seed);
    out.cfg("integrand", name).cfg("samples", a.samples).cfg("strata", a.strata);
    out.push(Row::complex("integral", est.value, est.stderr, est.count));
    out.push(Row::real("closed_form", closed));
    out.emit(a.out.output.as_deref(), a.out.format, false)?;
    Ok(())
}

fn cmd_cov(a: CovArgs) -> Result<(), RunError> {
    let kind = map_kind(a.map, a.m, a.ell, a.k)?;
    let map = builtin_orbit_map(kind)?;
    let seed = resolve_seed(a.out.seed);
    let rep = change_of_variable_check(&map, a.samples, seed);

    let mut out = Report::new("quad-cov", seed);
    out.cfg("map", format!("{}", map.kind)).cfg("samples", a.samples);
    out.push(Row::complex(
        "upstairs_volume",
        rep.upstairs_volume.value,
        rep.upstairs_volume.stderr,
        rep.upstairs_volume.count,
    ));
    out.push(Row::complex(
        "downstairs_volume",
        rep.downstairs_volume.value,
        rep.downstairs_volume.stderr,
        rep.downstairs_volume.count,
    ));
    out.push(Row::complex(
        "upstairs_half",
        rep.upstairs_half.value,
        rep.upstairs_half.stderr,
        rep.upstairs_half.count,
    ));
    out.push(Row::complex(
        "downstairs_half",
        rep.downstairs_half.value,
        rep.downstairs_half.stderr,
        rep.downstairs_half.count,
    ));
    if let Some(cf) = rep.closed_form {
        out.push(Row::real("closed_form", cf));
    }
    out.push(Row::real("reran", if rep.reran { 1.0 } else { 0.0 }));
    out.emit(a.out.output.as_deref(), a.out.format, false)?;

    if !rep.consistent {
        return Err(RunError::Check(format!(
            "change-of-variable sides disagree beyond 3 stderr for {}",
            map.kind
        )));
    }
    Ok(())
}

fn repro_points() -> Vec<Vec<Complex64>> {
    vec![
        vec![c64(0.30, 0.00), c64(0.10, 0.00)],
        vec![c64(0.10, -0.20), c64(-0.30, 0.10)],
        vec![c64(-0.25, 0.15), c64(0.20, 0.25)],
        vec![c64(0.05, 0.35), c64(0.15, -0.10)],
        vec![c64(-0.20, -0.10), c64(-0.05, 0.30)],
    ]
}

fn cmd_reproducing(a: SamplesArgs) -> Result<(), RunError> {
    let seed = resolve_seed(a.out.seed);
    let map = builtin_orbit_map(MapKind::Square1)?;
    let ev = KernelEvaluator::ball(2).with_group(map.group.clone())?;
    let v = TwistedFunction::new(map, Polynomial::one(2));
    let rep = reproducing_check(&ev, &v, &repro_points(), a.samples, seed);

    let mut out = Report::new("quad-reproducing", seed);
    out.cfg("samples", a.samples).cfg("points", rep.points.len());
    for (i, pt) in rep.points.iter().enumerate() {
        out.push(Row::complex(
            &format!("integral_at_point_{i}"),
            pt.estimate.value,
            pt.estimate.stderr,
            pt.estimate.count,
        ));
        out.push(Row::complex(&format!("expected_at_point_{i}"), pt.expected, 0.0, 0));
    }
    out.emit(a.out.output.as_deref(), a.out.format, false)?;

    if !rep.all_pass {
        let bad: Vec<usize> = rep
            .points
            .iter()
            .enumerate()
            .filter(|(_, p)| !p.pass)
            .map(|(i, _)| i)
            .collect();
        return Err(RunError::Check(format!(
            "kernel integral misses the pullback value at points {bad:?}"
        )));
    }
    Ok(())
}

fn cmd_meanvalue(a: MeanValueArgs) -> Result<(), RunError> {
    let seed = resolve_seed(a.out.seed);
    let (name, f): (_, fn(&[Complex64]) -> Complex64) = match a.function {
        MeanFunction::One => ("one", |_| Complex64::ONE),
        MeanFunction::Z1z2 => ("z1z2", |z| z[0] * z[1]),
        MeanFunction::Affine => ("affine", |z| c64(3.0, 0.0) + c64(5.0, 0.0) * z[0] * z[0]),
    };
    let rep = mean_value_check(f, a.samples, seed);

    let mut out = Report::new("quad-meanvalue", seed);
    out.cfg("function", name).cfg("samples", a.samples);
    out.push(Row::complex("mean", rep.estimate.value, rep.estimate.stderr, rep.estimate.count));
    out.push(Row::complex("center_value", rep.expected, 0.0, 0));
    out.push(Row::real("reran", if rep.reran { 1.0 } else { 0.0 }));
    out.emit(a.out.output.as_deref(), a.out.format, false)?;

    if !rep.pass {
        return Err(RunError::Check(format!(
            "ball mean of {name} misses its center value beyond 3 stderr"
        )));
    }
    Ok(())
}

fn cmd_covering(a: CoveringArgs) -> Result<(), RunError> {
    let g = build_family(a.m, a.ell, 2)?;
    let seed = resolve_seed(a.out.seed);
    let rep = find_covering_delta(&g, &[0], &[1], a.samples, seed)?;

    let mut out = Report::new("verify-covering", seed);
    out.cfg("m", a.m).cfg("ell", a.ell).cfg("samples", a.samples);
    out.push(Row::complex("delta_found", c64(rep.delta_found, 0.0), 0.0, rep.samples));
    out.push(Row::real("worst_margin_first_orbit", rep.margins[0]));
    out.push(Row::real("worst_margin_second_orbit", rep.margins[1]));
    out.push(Row::real("worst_margin_regular", rep.margins[2]));
    out.summary = Some(serde_json::json!({
        "worst_z": rep.worst_z.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>(),
        "worst_w": rep.worst_w.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>(),
    }));
    out.emit(a.out.output.as_deref(), a.out.format, false)?;

    if rep.delta_found <= 0.0 {
        return Err(RunError::Check(format!(
            "covering margin collapsed to {}",
            rep.delta_found
        )));
    }
    Ok(())
}

fn push_bound_rows(out: &mut Report, rep: &mirrorball_core::estimate::BoundReport) {
    out.push(Row::complex(
        "fitted_constant",
        c64(rep.fitted_constant, 0.0),
        0.0,
        rep.sample_count,
    ));
    out.push(Row::real("stability_ratio", rep.stability_ratio));
    out.push(Row::real("accepted_pairs", rep.sample_count as f64));
    out.push(Row::real("raw_pairs", rep.raw_samples as f64));
    out.push(Row::real("discarded_pairs", rep.discarded as f64));
    out.push(Row::real("identity_max_rel", rep.identity_max_rel));
    out.push(Row::real("jacobian_invariance_max_rel", rep.jinv_max_rel));
}

fn gate_identities(identity_max_rel: f64, jinv_max_rel: f64) -> Result<(), RunError> {
    if identity_max_rel > tol::INVARIANCE_REL {
        return Err(RunError::Check(format!(
            "subgroup averaging identity off by {identity_max_rel:e}"
        )));
    }
    if jinv_max_rel > 1e-12 {
        return Err(RunError::Check(format!(
            "mirror-product modulus moved along orbits by {jinv_max_rel:e}"
        )));
    }
    Ok(())
}

fn cmd_nsl(a: NslArgs) -> Result<(), RunError> {
    if a.p <= 1.0 || a.delta <= 0.0 {
        return Err(RunError::Usage("need p > 1 and delta > 0".into()));
    }
    let g = build_family(a.m, a.ell, 2)?;
    let sub = normal_subgroup_from(&g, &[a.orbit])?;
    let seed = resolve_seed(a.out.seed);
    let rep =
        normal_subgroup_bound(&g, &sub.group, &[a.orbit], a.p, a.delta, a.samples, seed)?;

    let mut out = Report::new("verify-nsl", seed);
    out.cfg("m", a.m)
        .cfg("ell", a.ell)
        .cfg("orbit", a.orbit)
        .cfg("p", a.p)
        .cfg("delta", a.delta)
        .cfg("samples", a.samples);
    out.cfg("subgroup_order", sub.group.order());
    push_bound_rows(&mut out, &rep);
    out.emit(a.out.output.as_deref(), a.out.format, false)?;

    gate_identities(rep.identity_max_rel, rep.jinv_max_rel)
}

fn cmd_main_estimate(a: MainArgs) -> Result<(), RunError> {
    if a.p <= 1.0 {
        return Err(RunError::Usage(format!("p = {} must exceed 1", a.p)));
    }
    let g = build_family(a.m, a.ell, 2)?;
    let s1 = normal_subgroup_from(&g, &[0])?;
    let s2 = normal_subgroup_from(&g, &[1])?;
    let seed = resolve_seed(a.out.seed);
    let rep =
        main_estimate_check(&g, &s1.group, &s2.group, &[0], &[1], a.p, a.samples, seed)?;

    let mut out = Report::new("verify-main", seed);
    out.cfg("m", a.m).cfg("ell", a.ell).cfg("p", a.p).cfg("samples", a.samples);
    push_bound_rows(&mut out, &rep);
    out.emit(a.out.output.as_deref(), a.out.format, false)?;

    gate_identities(rep.identity_max_rel, rep.jinv_max_rel)
}

fn cmd_sweep(a: SweepArgs) -> Result<(), RunError> {
    for &p in &a.p_grid {
        if p <= 1.0 {
            return Err(RunError::Usage(format!("p = {p} must exceed 1")));
        }
    }
    let g = match (a.m, a.ell) {
        (Some(m), Some(ell)) => build_family(m, ell, 2)?,
        (None, None) => {
            let flip = CMatrix::diagonal(&[c64(-1.0, 0.0), Complex64::ONE]);
            close_group(2, &[flip], 4)?
        }
        _ => return Err(RunError::Usage("give both --m and --ell, or neither".into())),
    };
    let ev = KernelEvaluator::ball(2).with_group(g)?;
    let seed = resolve_seed(a.seed);
    let params = SweepParams {
        samples: a.samples,
        test_points: a.test_points,
        nodes: a.nodes,
        iterations: a.iterations,
        seed,
    };
    let method = match a.method {
        MethodArg::Schur => SweepMethod::Schur,
        MethodArg::GridPower => SweepMethod::GridPower,
    };

    let grid: Vec<String> = a.p_grid.iter().map(|p| f17(*p)).collect();
    let banner = serde_json::json!({
        "version": report::VERSION,
        "config": {
            "command": "verify-sweep",
            "method": format!("{:?}", a.method).to_lowercase(),
            "samples": a.samples,
            "test_points": a.test_points,
            "nodes": a.nodes,
            "iterations": a.iterations,
            "p_grid": grid,
            "seed": seed,
        },
    });
    emit_jsonl_line(a.output.as_deref(), &banner)?;

    // One p at a time so long grids stream into the report.
    for &p in &a.p_grid {
        let rows = norm_sweep(&ev, &[p], method, &params)?;
        let row = &rows[0];
        if !row.indicator.is_finite() {
            return Err(RunError::Check(format!("indicator at p = {p} is not finite")));
        }
        let line = serde_json::json!({
            "p": f17(p),
            "indicator": f17(row.indicator),
            "detail": f17(row.detail),
            "seed": seed,
        });
        emit_jsonl_line(a.output.as_deref(), &line)?;
    }
    Ok(())
}

/// Appends one JSON object as a line, to the path or stdout.
fn emit_jsonl_line(output: Option<&std::path::Path>, line: &serde_json::Value) -> Result<(), RunError> {
    match output {
        None => {
            println!("{line}");
            Ok(())
        }
        Some(path) => {
            use std::io::Write as _;
            let mut f = fs::OpenOptions::new().create(true).append(true).open(path)?;
            writeln!(f, "{line}")?;
            Ok(())
        }
    }
}
