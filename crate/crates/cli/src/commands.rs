use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use absrank_core::absrank::{AbsRankFn, RoundsMode, FORMAT_VERSION};
use absrank_core::bayes::{bayes_compare, FitOptions, Normalization};
use absrank_core::bench::BenchmarkProblem;
use absrank_core::niia::{gen_paper_datasets, niia_check, FlipReport, Method, SubsetStrategy};
use absrank_core::normalize::{absolute_normalize, mean_ranks};
use absrank_core::sampling::{sample_function, select_delta, Region};
use absrank_core::sobol::{SobolConfig, TABLE_ID};
use absrank_core::stats::{npht_compare, Convention};
use absrank_core::{Orientation, PerformanceMatrix};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::*;

const TOOL: &str = "absrank";
const CDF_SUFFIX: &str = ".absrank.json";

/// Everything needed to repeat a run, minus the output directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    tool: String,
    version: String,
    run: Command,
    display: Display,
    sobol_table: String,
    cdf_format_version: u32,
    outputs: Vec<String>,
}

enum Content {
    /// Report JSON, written with the manifest embedded.
    Report(Value),
    Raw(String),
}

struct Artifact {
    name: String,
    content: Content,
}

impl Artifact {
    fn report(name: impl Into<String>, value: Value) -> Self {
        Self { name: name.into(), content: Content::Report(value) }
    }

    fn raw(name: impl Into<String>, text: String) -> Self {
        Self { name: name.into(), content: Content::Raw(text) }
    }
}

#[derive(Default)]
struct Outcome {
    text: String,
    artifacts: Vec<Artifact>,
    /// Suffix distinguishing the manifest of runs that share a directory.
    tag: Option<String>,
}

pub fn execute(command: Command, display: Display, out_dir: &Path) -> Result<(), Failure> {
    if let Command::Replay(args) = &command {
        let text = fs::read_to_string(&args.manifest)?;
        let manifest: Manifest = serde_json::from_str(&text)
            .map_err(|e| Failure { code: 3, msg: format!("invalid manifest: {e}") })?;
        if manifest.tool != TOOL {
            return Err(Failure { code: 3, msg: format!("manifest was written by {:?}", manifest.tool) });
        }
        if manifest.version != env!("CARGO_PKG_VERSION") {
            eprintln!(
                "absrank: manifest from version {}, replaying with {}",
                manifest.version,
                env!("CARGO_PKG_VERSION")
            );
        }
        return execute(manifest.run, manifest.display, out_dir);
    }
    for path in inputs(&command) {
        if !path.exists() {
            return Err(Failure { code: 3, msg: format!("{}: no such file or directory", path.display()) });
        }
    }
    let outcome = match &command {
        Command::GenNiia => gen_niia(),
        Command::Npht(a) => npht(a),
        Command::Bayes(a) => bayes(a),
        Command::Sample(a) => sample(a, display),
        Command::Absrank(a) => absrank(a, display),
        Command::SelectDelta(a) => select(a),
        Command::NiiaCheck(a) => niia(a, display),
        Command::CdfCurve(a) => curve(a),
        Command::Replay(_) => unreachable!(),
    }?;

    let manifest_name = match &outcome.tag {
        Some(tag) => format!("{}-{tag}.manifest.json", command.name()),
        None => format!("{}.manifest.json", command.name()),
    };
    let mut outputs: Vec<String> = outcome.artifacts.iter().map(|a| a.name.clone()).collect();
    outputs.push(manifest_name.clone());
    let manifest = Manifest {
        tool: TOOL.to_owned(),
        version: env!("CARGO_PKG_VERSION").to_owned(),
        run: command,
        display,
        sobol_table: TABLE_ID.to_owned(),
        cdf_format_version: FORMAT_VERSION,
        outputs,
    };
    fs::create_dir_all(out_dir)?;
    for art in &outcome.artifacts {
        let text = match &art.content {
            Content::Raw(s) => s.clone(),
            Content::Report(v) => pretty(&json!({ "manifest": manifest, "report": v })),
        };
        fs::write(out_dir.join(&art.name), text)?;
    }
    fs::write(out_dir.join(&manifest_name), pretty(&manifest))?;
    crate::emit(&outcome.text)?;
    Ok(())
}

fn pretty<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("report serializes") + "\n"
}

fn inputs(command: &Command) -> Vec<PathBuf> {
    match command {
        Command::GenNiia | Command::Replay(_) => vec![],
        Command::Npht(a) => vec![a.matrix.csv.clone()],
        Command::Bayes(a) => vec![a.matrix.csv.clone()],
        Command::Sample(a) => vec![a.problem.clone()],
        Command::Absrank(a) => vec![a.matrix.csv.clone(), a.cdf_dir.clone()],
        Command::SelectDelta(a) => a.problems.iter().cloned().chain([a.metrics.clone()]).collect(),
        Command::NiiaCheck(a) => std::iter::once(a.matrix.csv.clone()).chain(a.cdf_dir.clone()).collect(),
        Command::CdfCurve(a) => vec![a.cdf.clone()],
    }
}

fn load_matrix(a: &MatrixArgs) -> Result<PerformanceMatrix, Failure> {
    let orientation = if a.higher_is_better {
        Orientation::HigherIsBetter
    } else {
        Orientation::LowerIsBetter
    };
    let m = PerformanceMatrix::load(&a.csv, orientation)?;
    if a.keep.is_empty() {
        Ok(m)
    } else {
        Ok(m.project(&a.keep)?)
    }
}

fn matrix_csv(m: &PerformanceMatrix) -> Result<String, Failure> {
    let mut buf = Vec::new();
    m.write_csv(&mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

fn convention(c: CdConvention) -> Convention {
    match c {
        CdConvention::AllPairsOneSided => Convention::AllPairs,
        CdConvention::ControlTwoSided => Convention::ControlTwoSided,
        CdConvention::ControlOneSided => Convention::ControlOneSided,
    }
}

fn fit_options(a: &FitArgs) -> FitOptions {
    FitOptions {
        tolerance: a.tolerance,
        max_iter: a.max_iter,
        prior_weight: a.prior_weight,
        normalization: match a.normalization {
            ThetaScale::GeometricMean => Normalization::GeometricMean,
            ThetaScale::SumToOne => Normalization::SumToOne,
        },
    }
}

fn load_cdfs(dir: &Path, problems: &[String]) -> Result<HashMap<String, AbsRankFn>, Failure> {
    problems
        .iter()
        .map(|label| {
            let path = dir.join(format!("{label}{CDF_SUFFIX}"));
            if !path.exists() {
                return Err(Failure {
                    code: 3,
                    msg: format!("no absolute-rank function for problem {label:?} ({})", path.display()),
                });
            }
            Ok((label.clone(), AbsRankFn::load(&path)?))
        })
        .collect()
}

fn gen_niia() -> Result<Outcome, Failure> {
    let (d1, d2) = gen_paper_datasets();
    let mut text = String::new();
    writeln!(text, "dataset1.csv: {} algorithms x {} problems", d1.n(), d1.p()).unwrap();
    writeln!(text, "dataset2.csv: {} algorithms x {} problems", d2.n(), d2.p()).unwrap();
    Ok(Outcome {
        text,
        artifacts: vec![
            Artifact::raw("dataset1.csv", matrix_csv(&d1)?),
            Artifact::raw("dataset2.csv", matrix_csv(&d2)?),
        ],
        tag: None,
    })
}

fn pairs_of(pairs: &[Pair]) -> Vec<(&str, &str)> {
    pairs.iter().map(|p| (p.0.as_str(), p.1.as_str())).collect()
}

fn npht(a: &NphtArgs) -> Result<Outcome, Failure> {
    let m = load_matrix(&a.matrix)?;
    let r = npht_compare(&m, &pairs_of(&a.pairs), a.alpha, convention(a.convention))?;
    let f = &r.friedman;
    let mut t = String::new();
    writeln!(t, "{} algorithms x {} problems", m.n(), m.p()).unwrap();
    let p = if f.p == 0.0 { "0.0".to_owned() } else { format!("{:.4e}", f.p) };
    writeln!(
        t,
        "Friedman chi2 = {:.4}, df = {}, p = {p} (log10 p = {:.4})",
        f.statistic, f.df, f.log10_p
    )
    .unwrap();
    writeln!(
        t,
        "alpha = {}, convention = {}, CD = {:.4}, significant = {}",
        r.alpha,
        r.convention.name(),
        r.critical_difference,
        if r.significant { "yes" } else { "no" }
    )
    .unwrap();
    writeln!(t).unwrap();
    writeln!(t, "{:<16} {:>10}", "algorithm", "avg rank").unwrap();
    let mut shown: Vec<&str> = Vec::new();
    for c in &r.pairwise {
        for (label, rank) in [(&c.first, c.avg_rank_first), (&c.second, c.avg_rank_second)] {
            if !shown.contains(&label.as_str()) {
                shown.push(label);
                writeln!(t, "{label:<16} {rank:>10.4}").unwrap();
            }
        }
    }
    writeln!(t).unwrap();
    writeln!(t, "{:<24} {:>10} {:>10}  result", "pair", "delta", "CD").unwrap();
    for c in &r.pairwise {
        let pair = format!("{} vs {}", c.first, c.second);
        writeln!(t, "{pair:<24} {:>10.4} {:>10.4}  {}", c.delta, r.critical_difference, c.result).unwrap();
    }
    Ok(Outcome {
        text: t,
        artifacts: vec![Artifact::report("npht.json", serde_json::to_value(&r).unwrap())],
        tag: None,
    })
}

fn bayes(a: &BayesArgs) -> Result<Outcome, Failure> {
    let m = load_matrix(&a.matrix)?;
    let r = bayes_compare(&m, &pairs_of(&a.pairs), &fit_options(&a.fit))?;
    let mut t = String::new();
    writeln!(t, "{} algorithms x {} problems", m.n(), m.p()).unwrap();
    writeln!(
        t,
        "Bradley-Terry: {} iterations, {}, prior weight {}",
        r.fit.iterations,
        if r.fit.converged { "converged" } else { "NOT converged" },
        r.fit.prior_weight
    )
    .unwrap();
    writeln!(t).unwrap();
    writeln!(
        t,
        "{:<24} {:>12} {:>12} {:>10} {:>10}  result",
        "pair", "theta 1", "theta 2", "P(1>2)", "P(2>1)"
    )
    .unwrap();
    for c in &r.pairwise {
        let pair = format!("{} vs {}", c.first, c.second);
        writeln!(
            t,
            "{pair:<24} {:>12.5e} {:>12.5e} {:>10.6} {:>10.6}  {}",
            c.theta_first, c.theta_second, c.p_first_over_second, c.p_second_over_first, c.result
        )
        .unwrap();
    }
    if !r.fit.converged {
        eprintln!("absrank: Bradley-Terry fit stopped at the iteration cap before converging");
    }
    Ok(Outcome {
        text: t,
        artifacts: vec![Artifact::report("bayes.json", serde_json::to_value(&r).unwrap())],
        tag: None,
    })
}

fn parse_region(spec: &str, d: usize) -> Result<Region, Failure> {
    let bad = || Failure::usage(format!("region must look like lo:hi or lo:hi,lo:hi,..., got {spec:?}"));
    let bounds = spec
        .split(',')
        .map(|part| {
            let (lo, hi) = part.split_once(':').ok_or_else(bad)?;
            Ok((lo.trim().parse::<f64>().map_err(|_| bad())?, hi.trim().parse::<f64>().map_err(|_| bad())?))
        })
        .collect::<Result<Vec<_>, Failure>>()?;
    let bounds = match bounds.len() {
        1 => vec![bounds[0]; d],
        k if k == d => bounds,
        k => return Err(Failure::usage(format!("region has {k} intervals, problem has d = {d}"))),
    };
    Ok(Region::new(bounds.iter().map(|b| b.0).collect(), bounds.iter().map(|b| b.1).collect())?)
}

fn sample(a: &SampleArgs, display: Display) -> Result<Outcome, Failure> {
    let problem = BenchmarkProblem::load(&a.problem)?;
    let region = match (&a.region, a.delta) {
        (Some(spec), _) => parse_region(spec, problem.d())?,
        (None, Some(delta)) => Region::cube(&problem.optimum(), delta)?,
        (None, None) => Region::domain(&problem),
    };
    let cfg = SobolConfig::new(problem.d(), a.log2n).with_skip(a.skip);
    let set = sample_function(&problem, &region, &cfg)?;

    let optimum = problem.optimum();
    let inside = optimum
        .iter()
        .zip(region.lo.iter().zip(&region.hi))
        .all(|(x, (lo, hi))| lo <= x && x <= hi);
    let known_min = a.known_min.or(if inside { Some(problem.evaluate(&optimum)?) } else { None });
    let single = set.to_absrank(known_min, a.known_max)?;
    let best_of = single.compose_budget(problem.budget())?;
    let mode = match a.rounds_mode {
        RoundsArg::Auto if best_of.support().is_some() => RoundsMode::Convolution,
        RoundsArg::Auto | RoundsArg::NormalApprox => RoundsMode::NormalApprox,
        RoundsArg::Convolution => RoundsMode::Convolution,
    };
    let v = best_of
        .compose_rounds(problem.rounds(), mode, a.grid)?
        .with_problem(problem.label());

    let label = problem.label();
    let mut t = String::new();
    writeln!(t, "{label}: {} Sobol samples ({TABLE_ID}, skip {})", set.n(), a.skip).unwrap();
    writeln!(t, "min = {:.6e}, max = {:.6e}", set.min(), set.values[set.n() - 1]).unwrap();
    write!(t, "budget c = {}, rounds r = {}", problem.budget(), problem.rounds()).unwrap();
    if problem.rounds() > 1 {
        let how = match mode {
            RoundsMode::Convolution => "convolution",
            RoundsMode::NormalApprox => "normal approximation",
        };
        write!(t, " (rounds by {how})").unwrap();
    }
    writeln!(t).unwrap();
    writeln!(t).unwrap();
    writeln!(t, "{:<12} {:>14} {:>14}", "quantile", "t", "v(t)").unwrap();
    for q in [1, 2, 3, 4, 5] {
        let k = (set.n() * q / 100).max(1) - 1;
        let x = set.values[k];
        writeln!(t, "{:<12} {:>14.6e} {:>14}", format!("{q}%"), x, display.rank(v.evaluate(x)?)).unwrap();
    }
    let summary = json!({
        "problem": label,
        "samples": set.n(),
        "min": set.min(),
        "max": set.values[set.n() - 1],
        "region": region,
        "known_min": known_min,
        "known_max": a.known_max,
        "budget": problem.budget(),
        "rounds": problem.rounds(),
        "rounds_mode": mode,
    });
    Ok(Outcome {
        text: t,
        artifacts: vec![
            Artifact::raw(
                format!("{label}.samples.json"),
                serde_json::to_string(&set).expect("samples serialize") + "\n",
            ),
            Artifact::raw(format!("{label}{CDF_SUFFIX}"), v.to_json() + "\n"),
            Artifact::report(format!("{label}.sample-report.json"), summary),
        ],
        tag: Some(label.to_owned()),
    })
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        (v[k / 2 - 1] + v[k / 2]) / 2.0
    }
}

fn absrank(a: &AbsrankArgs, display: Display) -> Result<Outcome, Failure> {
    let m = load_matrix(&a.matrix)?;
    let cdfs = load_cdfs(&a.cdf_dir, m.problems())?;
    let v = absolute_normalize(&m, &cdfs)?;
    let aar: Vec<f64> = (0..v.n())
        .map(|i| match a.aggregate {
            Aggregate::Mean => v.row(i).iter().sum::<f64>() / v.p() as f64,
            Aggregate::Median => median(v.row(i)),
        })
        .collect();
    let oriented: Vec<f64> = match v.orientation() {
        Orientation::LowerIsBetter => aar.clone(),
        Orientation::HigherIsBetter => aar.iter().map(|x| -x).collect(),
    };
    let order = mean_ranks(&oriented);
    let agg = match a.aggregate {
        Aggregate::Mean => "AAR",
        Aggregate::Median => "median AR",
    };

    let mut t = String::new();
    let columns = v.p() <= 8;
    write!(t, "{:<16}", "algorithm").unwrap();
    if columns {
        for p in v.problems() {
            write!(t, " {p:>14}").unwrap();
        }
    }
    writeln!(t, " {agg:>14} {:>6}", "rank").unwrap();
    for i in 0..v.n() {
        write!(t, "{:<16}", v.algorithms()[i]).unwrap();
        if columns {
            for &x in v.row(i) {
                write!(t, " {:>14}", display.rank(x)).unwrap();
            }
        }
        writeln!(t, " {:>14} {:>6}", display.rank(aar[i]), order[i]).unwrap();
    }

    let mut aar_csv = String::from("algorithm,aar,rank\n");
    for i in 0..v.n() {
        writeln!(aar_csv, "{},{:e},{:e}", v.algorithms()[i], aar[i], order[i]).unwrap();
    }
    let report = json!({
        "aggregate": a.aggregate,
        "algorithms": v.algorithms(),
        "problems": v.problems(),
        "aar": aar,
        "rank": order,
    });
    Ok(Outcome {
        text: t,
        artifacts: vec![
            Artifact::raw("absrank.csv", matrix_csv(&v)?),
            Artifact::raw("aar.csv", aar_csv),
            Artifact::report("absrank.json", report),
        ],
        tag: None,
    })
}

fn select(a: &SelectDeltaArgs) -> Result<Outcome, Failure> {
    let problems = a
        .problems
        .iter()
        .map(BenchmarkProblem::load)
        .collect::<Result<Vec<_>, _>>()?;
    let metrics = PerformanceMatrix::load(&a.metrics, Orientation::LowerIsBetter)?;
    let selections = problems
        .iter()
        .map(|problem| {
            let j = metrics.problem_index(problem.label())?;
            let column: Vec<f64> = (0..metrics.n()).map(|i| metrics.value(i, j)).collect();
            let cfg = SobolConfig::new(problem.d(), a.log2n);
            select_delta(problem, &problem.optimum(), &column, &a.deltas, &cfg)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut t = String::new();
    let mut csv = String::from("delta");
    write!(t, "{:<10}", "delta").unwrap();
    for s in &selections {
        write!(t, " {:>16}", s.problem).unwrap();
        write!(csv, ",{}", s.problem).unwrap();
    }
    writeln!(t).unwrap();
    csv.push('\n');
    for (k, &delta) in a.deltas.iter().enumerate() {
        write!(t, "{delta:<10}").unwrap();
        write!(csv, "{delta:e}").unwrap();
        for s in &selections {
            let score = &s.scores[k];
            let mark = if score.delta == s.chosen { "*" } else { " " };
            write!(t, " {:>15.4e}{mark}", score.score).unwrap();
            write!(csv, ",{:e}", score.score).unwrap();
        }
        writeln!(t).unwrap();
        csv.push('\n');
    }
    writeln!(t).unwrap();
    for s in &selections {
        writeln!(t, "{}: chosen delta = {}", s.problem, s.chosen).unwrap();
        for score in s.scores.iter().filter(|sc| sc.clipped) {
            writeln!(t, "  warning: delta = {} reaches outside the domain and was clipped", score.delta).unwrap();
        }
    }
    Ok(Outcome {
        text: t,
        artifacts: vec![
            Artifact::raw("select_delta.csv", csv),
            Artifact::report("select_delta.json", serde_json::to_value(&selections).unwrap()),
        ],
        tag: None,
    })
}

fn niia(a: &NiiaArgs, display: Display) -> Result<Outcome, Failure> {
    let m = load_matrix(&a.matrix)?;
    let method = match a.method {
        MethodArg::AvgRank => Method::AvgRank,
        MethodArg::AvgRankGated => Method::AvgRankGated {
            alpha: a.alpha,
            convention: convention(a.convention),
        },
        MethodArg::BradleyTerry => Method::BradleyTerry(fit_options(&a.fit)),
        MethodArg::Absolute => {
            let dir = a
                .cdf_dir
                .as_ref()
                .ok_or_else(|| Failure::usage("--method absolute needs --cdf-dir"))?;
            Method::Absolute(load_cdfs(dir, m.problems())?)
        }
    };
    let strategy = if a.all_subsets {
        SubsetStrategy::AllSubsets { limit: a.limit }
    } else if !a.subset.is_empty() {
        SubsetStrategy::Explicit(
            a.subset
                .iter()
                .map(|s| s.split(',').map(|l| l.trim().to_owned()).collect())
                .collect(),
        )
    } else {
        SubsetStrategy::LeaveKOut(a.leave_k_out.unwrap_or(1))
    };
    let out = niia_check(&m, &method, (&a.pair.0, &a.pair.1), &strategy)?;

    let evidence = |kind: &str, x: f64| match kind {
        "mean-absolute-rank" => display.rank(x),
        "probability" => format!("{x:.6}"),
        _ => format!("{x:.4}"),
    };
    let mut t = String::new();
    let flips = out.flips().count();
    if let Some(first) = out.reports.first() {
        let e = &first.evidence_full;
        writeln!(
            t,
            "method {}, full verdict {} ({}: {} vs {})",
            method.name(),
            first.direction_full.render(&first.first, &first.second),
            e.kind,
            evidence(&e.kind, e.first),
            evidence(&e.kind, e.second)
        )
        .unwrap();
    } else {
        writeln!(t, "method {}", method.name()).unwrap();
    }
    writeln!(t, "subsets checked: {}, flips: {flips}", out.reports.len()).unwrap();
    for note in &out.skipped {
        writeln!(t, "skipped: {note}").unwrap();
    }
    if !out.reports.is_empty() {
        writeln!(t).unwrap();
        writeln!(t, "{:<36} {:>8} {:>26}  flip", "subset", "verdict", "evidence").unwrap();
        for r in &out.reports {
            let e = &r.evidence_subset;
            let ev = format!("{} / {}", evidence(&e.kind, e.first), evidence(&e.kind, e.second));
            writeln!(
                t,
                "{:<36} {:>8} {:>26}  {}",
                describe_subset(r, m.algorithms()),
                r.direction_subset.render(&r.first, &r.second),
                ev,
                if r.flipped { "yes" } else { "no" }
            )
            .unwrap();
        }
    }
    Ok(Outcome {
        text: t,
        artifacts: vec![Artifact::report("niia.json", serde_json::to_value(&out).unwrap())],
        tag: None,
    })
}

/// Short form of a subset: its members, or what it leaves out when that is
/// shorter.
fn describe_subset(r: &FlipReport, all: &[String]) -> String {
    let dropped: Vec<&str> = all
        .iter()
        .filter(|l| !r.subset.contains(l))
        .map(String::as_str)
        .collect();
    if r.subset.len() <= dropped.len() {
        format!("{{{}}}", r.subset.join(","))
    } else {
        format!("all but {{{}}}", dropped.join(","))
    }
}

fn curve(a: &CurveArgs) -> Result<Outcome, Failure> {
    let f = AbsRankFn::load(&a.cdf)?;
    let points = f.curve(a.points)?;
    let mut csv = String::from("t,v\n");
    for (t, v) in &points {
        writeln!(csv, "{t:e},{v:e}").unwrap();
    }
    let file = a.cdf.file_name().and_then(|s| s.to_str()).unwrap_or("cdf");
    let stem = file
        .strip_suffix(CDF_SUFFIX)
        .or_else(|| file.strip_suffix(".json"))
        .unwrap_or(file);
    let name = format!("{stem}.curve.csv");
    let text = format!("{} points of {} written to {name}\n", points.len(), f.kind_name());
    Ok(Outcome {
        text,
        artifacts: vec![Artifact::raw(name, csv)],
        tag: Some(stem.to_owned()),
    })
}
