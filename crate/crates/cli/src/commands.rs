use std::path::{Path, PathBuf};

use grd::basis::{pca_train, per_resolution_curves, polynomial_basis, trigonometric_basis, BasisKind, EigenBasis};
use grd::compare::{compare, CodecComparisonReport, CompareOptions, DrMode, EgrdModel, Fitter};
use grd::grid::{AxisSpec, GrdGrid};
use grd::io::{self, Dataset, Manifest, ManifestEntry, Split};
use grd::reconstruct::{estimate, evaluate_method, ComponentCount, ErrorTable, ReconstructionConfig};
use grd::sampling::{empirical_covariance, uncertainty_order, uniform_log_bitrate_order, SamplingCriterion, SamplingOrder};
use grd::synth::{generate, SynthParams};
use grd::GrdError;
use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::output::{fmt6, report_json, write_atomic, write_report};
use crate::*;

pub(crate) fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train(a),
        Command::SampleOrder(a) => sample_order(a),
        Command::Reconstruct(a) => reconstruct(a),
        Command::Eval(a) => eval(a),
        Command::Compare(a) => compare_cmd(a),
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    GrdError::InvalidArgument(msg.into()).into()
}

fn require_file(p: &Path) -> Result<(), CliError> {
    if p.is_file() {
        Ok(())
    } else {
        Err(std::io::Error::new(std::io::ErrorKind::NotFound, format!("input file {} not found", p.display())).into())
    }
}

fn require_dir(p: &Path) -> Result<(), CliError> {
    if p.is_dir() {
        Ok(())
    } else {
        Err(std::io::Error::new(std::io::ErrorKind::NotFound, format!("directory {} not found", p.display())).into())
    }
}

fn require_out(p: &Path) -> Result<(), CliError> {
    match p.parent() {
        Some(d) if !d.as_os_str().is_empty() => require_dir(d),
        _ => Ok(()),
    }
}

fn criterion(c: CriterionArg) -> SamplingCriterion {
    match c {
        CriterionArg::Trace => SamplingCriterion::Trace,
        CriterionArg::Logdet => SamplingCriterion::LogDet,
    }
}

fn basis_kind(k: KindArg) -> BasisKind {
    match k {
        KindArg::Eigen => BasisKind::Eigen,
        KindArg::Polynomial => BasisKind::Polynomial,
        KindArg::Trigonometric => BasisKind::Trigonometric,
    }
}

fn train_basis(kind: KindArg, data: &[GrdGrid<f64>], n: usize) -> Result<EigenBasis<f64>, CliError> {
    let axes = data.first().ok_or_else(|| invalid("no training grids"))?.axes().clone();
    Ok(match kind {
        KindArg::Eigen => pca_train(data, n)?,
        KindArg::Polynomial => polynomial_basis(&axes, n, Some(data))?,
        KindArg::Trigonometric => trigonometric_basis(&axes, n, Some(data))?,
    })
}

fn synth(a: SynthArgs) -> Result<(), CliError> {
    if a.count == 0 {
        return Err(invalid("count must be ≥ 1"));
    }
    if !(0.0..1.0).contains(&a.test_fraction) {
        return Err(invalid("test fraction must be in [0, 1)"));
    }
    require_out(&a.out)?;
    let axes = match a.axes {
        AxesPreset::Default => AxisSpec::full_scale(),
        AxesPreset::Desk => AxisSpec::desk(),
    };
    let grids = generate(&SynthParams::new(a.seed, axes, a.count))?;

    // The split draws from a stream no surface uses.
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    rng.set_stream(u64::MAX);
    let mut perm: Vec<usize> = (0..a.count).collect();
    perm.shuffle(&mut rng);
    let n_test = (a.test_fraction * a.count as f64).floor() as usize;
    let mut split = vec![Split::Train; a.count];
    for &m in &perm[..n_test] {
        split[m] = Split::Test;
    }

    std::fs::create_dir_all(&a.out)?;
    let width = a.count.saturating_sub(1).to_string().len().max(4);
    let mut entries = Vec::with_capacity(a.count);
    for (m, g) in grids.iter().enumerate() {
        let file = format!("grid_{m:0width$}.json");
        write_atomic(&a.out.join(&file), io::grid_to_json(g).as_bytes())?;
        entries.push(ManifestEntry { file, split: split[m] });
    }
    let mut manifest = Manifest { entries, info: Default::default() };
    manifest.info.insert("generator".into(), "synth".into());
    manifest.info.insert("seed".into(), a.seed.into());
    manifest.info.insert("axes".into(), format!("{:?}", a.axes).to_lowercase().into());
    write_atomic(&a.out.join(io::MANIFEST_NAME), manifest.to_json().as_bytes())?;
    println!("wrote {} grids ({} train, {} test) to {}", a.count, a.count - n_test, n_test, a.out.display());
    Ok(())
}

fn train(a: TrainArgs) -> Result<(), CliError> {
    require_dir(&a.dataset)?;
    require_out(&a.out)?;
    let ds = io::read_dataset(&a.dataset)?;
    let mut data = match a.split {
        SplitArg::Train => ds.train.clone(),
        SplitArg::All => ds.all(),
    };
    if data.is_empty() {
        return Err(invalid("dataset has no grids in the requested split"));
    }
    if a.per_resolution {
        data = per_resolution_curves(&data)?;
    }
    let k = data[0].axes().len();
    let n = a.n.unwrap_or(match a.kind {
        KindArg::Eigen => k,
        _ => k.min(20),
    });
    let basis = train_basis(a.kind, &data, n)?;
    write_atomic(&a.out, io::basis_to_json(&basis).as_bytes())?;

    println!("{} basis: {} components, {} training grids", basis.kind, basis.n_max(), basis.training_count);
    if basis.truncated {
        println!("(truncated: fewer components available than requested)");
    }
    println!("{:>4}  {:>12}  {:>10}  {:>10}", "n", "eigenvalue", "energy", "cumulative");
    for i in 0..basis.n_max() {
        let share = if basis.total_variance > 0.0 { basis.eigenvalues[i] / basis.total_variance } else { 0.0 };
        println!(
            "{:>4}  {:>12}  {:>10}  {:>10}",
            i + 1,
            fmt6(basis.eigenvalues[i]),
            fmt6(share),
            fmt6(basis.explained_energy(i + 1)?)
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct OrderCell {
    bitrate_kbps: f64,
    resolution_diag: f64,
    flat_index: usize,
    score: f64,
}

#[derive(Serialize)]
struct OrderReport {
    method: String,
    cells: Vec<OrderCell>,
}

fn order_report(method: String, order: &SamplingOrder<f64>) -> OrderReport {
    let cells = order
        .labels()
        .into_iter()
        .zip(&order.indices)
        .zip(&order.scores)
        .map(|(((b, r), &k), &s)| OrderCell { bitrate_kbps: b, resolution_diag: r, flat_index: k, score: s })
        .collect();
    OrderReport { method, cells }
}

fn sample_order(a: SampleOrderArgs) -> Result<(), CliError> {
    if let Some(b) = &a.basis {
        require_file(b)?;
    }
    if let Some(d) = &a.dataset {
        require_dir(d)?;
    }
    require_out(&a.out)?;
    let (cov, axes) = match (&a.basis, &a.dataset) {
        (Some(b), _) => {
            let basis = io::read_basis(b)?;
            (basis.covariance(), basis.axes)
        }
        (None, Some(d)) => {
            let ds = io::read_dataset(d)?;
            let axes = ds.axes().ok_or_else(|| invalid("empty dataset"))?.clone();
            if ds.train.is_empty() {
                return Err(invalid("dataset has no training grids"));
            }
            (empirical_covariance(&ds.train)?, axes)
        }
        (None, None) => unreachable!("clap requires a source"),
    };
    let report = match a.uniform_log_resolution {
        Some(j) => order_report("uniform_log".into(), &uniform_log_bitrate_order(&axes, j, a.count)?),
        None => {
            let c = criterion(a.criterion);
            let name = match c {
                SamplingCriterion::Trace => "uncertainty_trace",
                SamplingCriterion::LogDet => "uncertainty_logdet",
            };
            order_report(name.into(), &uncertainty_order(&cov, &axes, a.count, c)?)
        }
    };
    write_report(&a.out, &report)?;
    Ok(())
}

fn reconstruct(a: ReconstructArgs) -> Result<(), CliError> {
    require_file(&a.basis)?;
    require_file(&a.samples)?;
    require_out(&a.out)?;
    let diag_path = a.diagnostics.clone().unwrap_or_else(|| a.out.with_extension("diagnostics.json"));
    require_out(&diag_path)?;
    let basis = io::read_basis(&a.basis)?;
    let samples = io::read_samples(&a.samples, &basis.axes)?;
    let mut config = ReconstructionConfig::new(basis.kind, a.n);
    config.constrained = !a.no_constraints;
    let mut rec = estimate(&basis, &samples, &config)?;
    rec.grid.metadata.insert("source".into(), "reconstruct".into());
    write_atomic(&a.out, io::grid_to_json(&rec.grid).as_bytes())?;
    write_report(&diag_path, &rec.diagnostics)?;
    Ok(())
}

#[derive(Serialize)]
struct SummaryStats {
    mean_rmse: f64,
    worst_rmse: f64,
    mean_linf: f64,
    worst_linf: f64,
}

#[derive(Serialize)]
struct SummaryRow {
    samples: usize,
    n_components: usize,
    /// Averages of the per-split statistics.
    mean_over_splits: SummaryStats,
    /// Medians of the per-split statistics.
    median_over_splits: SummaryStats,
    membership_failures: usize,
}

#[derive(Serialize)]
struct EvalReport {
    basis_kind: BasisKind,
    constrained: bool,
    order: String,
    split_seed: Option<u64>,
    splits: Vec<ErrorTable>,
    summary: Vec<SummaryRow>,
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn summarize(tables: &[ErrorTable]) -> Vec<SummaryRow> {
    (0..tables[0].rows.len())
        .map(|i| {
            let rows: Vec<_> = tables.iter().map(|t| &t.rows[i]).collect();
            let pick = |f: fn(&grd::reconstruct::ErrorRow) -> f64| rows.iter().map(|r| f(r)).collect::<Vec<_>>();
            let mut cols = [pick(|r| r.mean_rmse), pick(|r| r.worst_rmse), pick(|r| r.mean_linf), pick(|r| r.worst_linf)];
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            let means = SummaryStats {
                mean_rmse: mean(&cols[0]),
                worst_rmse: mean(&cols[1]),
                mean_linf: mean(&cols[2]),
                worst_linf: mean(&cols[3]),
            };
            let [c0, c1, c2, c3] = &mut cols;
            SummaryRow {
                samples: rows[0].samples,
                n_components: rows[0].n_components,
                mean_over_splits: means,
                median_over_splits: SummaryStats {
                    mean_rmse: median(c0),
                    worst_rmse: median(c1),
                    mean_linf: median(c2),
                    worst_linf: median(c3),
                },
                membership_failures: rows.iter().map(|r| r.membership_failures).sum(),
            }
        })
        .collect()
}

fn eval_csv(report: &EvalReport) -> String {
    let mut out = String::from(
        "samples,n_components,mean_rmse,worst_rmse,mean_linf,worst_linf,\
         median_mean_rmse,median_worst_rmse,median_mean_linf,median_worst_linf,membership_failures\n",
    );
    for r in &report.summary {
        let (m, d) = (&r.mean_over_splits, &r.median_over_splits);
        let vals = [m.mean_rmse, m.worst_rmse, m.mean_linf, m.worst_linf, d.mean_rmse, d.worst_rmse, d.mean_linf, d.worst_linf];
        let vals: Vec<String> = vals.iter().map(|&v| fmt6(v)).collect();
        out.push_str(&format!("{},{},{},{}\n", r.samples, r.n_components, vals.join(","), r.membership_failures));
    }
    out
}

fn eval_split(a: &EvalArgs, train: &[GrdGrid<f64>], test: &[GrdGrid<f64>]) -> Result<ErrorTable, CliError> {
    let axes = train[0].axes().clone();
    let s_max = *a.s.iter().max().expect("clap requires --s");
    let n_max = a.n_max.unwrap_or(match (a.kind, a.n) {
        (KindArg::Eigen, _) => axes.len(),
        (_, ComponentCount::Fixed(n)) => n,
        (_, ComponentCount::MatchSamples) => s_max.min(axes.len()),
    });
    let basis = train_basis(a.kind, train, n_max)?;
    let order = match a.order {
        OrderArg::Uncertainty => {
            uncertainty_order(&empirical_covariance(train)?, &axes, s_max, criterion(a.criterion))?.indices
        }
        OrderArg::UniformLog => {
            let j = a.resolution_index.unwrap_or(axes.n_resolutions() - 1);
            uniform_log_bitrate_order(&axes, j, s_max)?.indices
        }
    };
    let mut config = ReconstructionConfig::new(basis_kind(a.kind), a.n);
    config.constrained = !a.no_constraints;
    Ok(evaluate_method(&basis, if a.test_on_train { train } else { test }, &order, &a.s, &config)?)
}

fn eval(a: EvalArgs) -> Result<(), CliError> {
    require_dir(&a.dataset)?;
    require_out(&a.out)?;
    if a.s.contains(&0) {
        return Err(invalid("sample counts must be ≥ 1"));
    }
    if !(a.test_fraction > 0.0 && a.test_fraction < 1.0) {
        return Err(invalid("test fraction must be in (0, 1)"));
    }
    let ds: Dataset = io::read_dataset(&a.dataset)?;
    let mut tables = Vec::new();
    if a.splits == 0 {
        if ds.train.is_empty() || (ds.test.is_empty() && !a.test_on_train) {
            return Err(invalid("manifest split needs training and test grids"));
        }
        tables.push(eval_split(&a, &ds.train, &ds.test)?);
    } else {
        let all = ds.all();
        if all.len() < 2 {
            return Err(invalid("random splits need at least two grids"));
        }
        let n_test = ((a.test_fraction * all.len() as f64).round() as usize).clamp(1, all.len() - 1);
        for r in 0..a.splits {
            let mut rng = ChaCha8Rng::seed_from_u64(a.split_seed);
            rng.set_stream(r as u64);
            let mut perm: Vec<usize> = (0..all.len()).collect();
            perm.shuffle(&mut rng);
            let test: Vec<_> = perm[..n_test].iter().map(|&m| all[m].clone()).collect();
            let train: Vec<_> = perm[n_test..].iter().map(|&m| all[m].clone()).collect();
            tables.push(eval_split(&a, &train, &test)?);
        }
    }
    let report = EvalReport {
        basis_kind: basis_kind(a.kind),
        constrained: !a.no_constraints,
        order: match a.order {
            OrderArg::Uncertainty => "uncertainty".into(),
            OrderArg::UniformLog => "uniform_log".into(),
        },
        split_seed: (a.splits > 0).then_some(a.split_seed),
        summary: summarize(&tables),
        splits: tables,
    };
    print!("{}", eval_csv(&report));
    match a.format {
        FormatArg::Json => write_report(&a.out, &report)?,
        FormatArg::Csv => write_atomic(&a.out, eval_csv(&report).as_bytes())?,
    }
    Ok(())
}

#[derive(Serialize)]
struct CompareReport<'a> {
    codec_a: &'a str,
    codec_b: &'a str,
    #[serde(flatten)]
    report: &'a CodecComparisonReport,
}

fn compare_csv(report: &CodecComparisonReport) -> String {
    let mut out = String::from("content_id,delta_q,delta_r,flags\n");
    let opt = |v: Option<f64>| v.map(fmt6).unwrap_or_default();
    for c in &report.contents {
        let flags: Vec<String> = c
            .flags
            .iter()
            .map(|f| serde_json::to_value(f).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default())
            .collect();
        out.push_str(&format!("{},{},{},{}\n", csv_field(&c.content_id), opt(c.delta_q), opt(c.delta_r), flags.join(";")));
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// File-name-safe form of a content id.
fn file_stem(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' }).collect()
}

fn compare_cmd(a: CompareArgs) -> Result<(), CliError> {
    require_file(&a.samples)?;
    if let Some(b) = &a.basis {
        require_file(b)?;
    }
    require_out(&a.out)?;
    if let Some(d) = &a.curves_dir {
        require_out(d)?;
    }
    let fitter = match a.fitter {
        FitterArg::Bd => Fitter::Bd,
        FitterArg::Pchip => Fitter::Pchip,
        FitterArg::Logistic => Fitter::Logistic,
        FitterArg::Egrd => Fitter::Egrd,
    };
    let dr_mode = match a.dr_mode {
        DrModeArg::Exact => DrMode::Exact,
        DrModeArg::Log => DrMode::Log,
    };
    let mut options = CompareOptions::new(fitter, dr_mode);
    options.global_range = a.global_range;
    if fitter == Fitter::Egrd {
        let path = a.basis.as_ref().ok_or_else(|| invalid("--fitter egrd needs --basis (from train --per-resolution)"))?;
        options.egrd = Some(EgrdModel::new(io::read_basis(path)?)?);
    }
    let pairs = io::read_pairs(&a.samples, a.anchor.as_deref())?;
    let report = compare(&pairs.contents, &options)?;

    if let Some(dir) = &a.curves_dir {
        std::fs::create_dir_all(dir)?;
        write_curves(dir, &pairs.codec_a, &pairs.codec_b, &report)?;
    }
    match a.format {
        FormatArg::Json => {
            let full = CompareReport { codec_a: &pairs.codec_a, codec_b: &pairs.codec_b, report: &report };
            write_atomic(&a.out, report_json(&full)?.as_bytes())?;
        }
        FormatArg::Csv => write_atomic(&a.out, compare_csv(&report).as_bytes())?,
    }
    println!(
        "{} vs {}: {} scored, mean ΔQ = {}, mean ΔR = {}",
        pairs.codec_b,
        pairs.codec_a,
        report.scored,
        fmt6(report.mean_delta_q),
        fmt6(report.mean_delta_r)
    );
    Ok(())
}

const CURVE_POINTS: usize = 101;

fn write_curves(dir: &Path, codec_a: &str, codec_b: &str, report: &CodecComparisonReport) -> Result<(), CliError> {
    for c in &report.contents {
        let Some((fa, fb)) = &c.curves else { continue };
        let mut out = String::from("codec,bitrate_kbps,log10_kbps,quality\n");
        for (name, fit) in [(codec_a, fa), (codec_b, fb)] {
            for (x, q) in fit.rd.sample(CURVE_POINTS) {
                let kbps = fit.rd.rate_scale.to_kbps(x);
                out.push_str(&format!("{},{},{},{}\n", csv_field(name), fmt6(kbps), fmt6(kbps.log10()), fmt6(q)));
            }
        }
        let path: PathBuf = dir.join(format!("{}.csv", file_stem(&c.content_id)));
        write_atomic(&path, out.as_bytes())?;
    }
    Ok(())
}
