use std::fs;
use std::io::Write;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use gabar::eval::{combined, evaluate_suite, render_table, CombinedRow, EvalConfig, EvalReport, TierSpec, REFERENCE_BUDGET};
use gabar::exec::run_policy;
use gabar::generate::Family;
use gabar::graph::{build_graph, Ablation};
use gabar::pddl::{applicable, ground_actions, parse_domain, parse_problem, Domain, Instance};
use gabar::search::SearchBudget;
use gabar::train::{generate_dataset, train_with, Checkpoint, Dataset, Split};

use crate::settings::Settings;
use crate::CliError;

pub fn dispatch(name: &str, s: Settings) -> Result<(), CliError> {
    match name {
        "validate" => validate(s),
        "generate" => generate(s),
        "gen-data" => gen_data(s),
        "train" => train(s),
        "solve" => solve(s),
        "evaluate" => evaluate(s),
        "inspect-graph" => inspect_graph(s),
        _ => unreachable!("clap only yields known subcommands"),
    }
}

fn print_effective(s: &Settings) {
    eprintln!("# effective config (pass back with --config)\n{}", s.to_json());
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))
}

fn load_domain(path: &Path) -> Result<Domain, CliError> {
    parse_domain(&read(path)?).map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))
}

fn load_problem(path: &Path, d: &Domain) -> Result<Instance, CliError> {
    parse_problem(&read(path)?, d).map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))
}

fn need_problems<'s>(s: &'s Settings, flag: &str) -> Result<&'s [PathBuf], CliError> {
    if s.problems.is_empty() {
        return Err(CliError::Usage(format!("missing required --{flag}")));
    }
    Ok(&s.problems)
}

fn pool(s: &Settings) -> Result<rayon::ThreadPool, CliError> {
    let n = s.workers.unwrap_or(1);
    if n == 0 {
        return Err(CliError::Usage("--workers must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build().map_err(CliError::domain)
}

fn validate(s: Settings) -> Result<(), CliError> {
    let dp = Settings::need(&s.domain, "domain")?;
    print_effective(&s);
    let d = load_domain(&dp)?;
    println!(
        "domain {}: {} types, {} predicates, {} action schemas",
        d.name,
        d.types.len(),
        d.predicates.len(),
        d.schemas.len()
    );
    for p in &s.problems {
        let i = load_problem(p, &d)?;
        let acts = ground_actions(&d, &i);
        println!(
            "problem {}: {} objects, {} initial atoms, {} goal atoms, {} groundings, {} applicable initially",
            i.name,
            i.objects.len(),
            i.init.len(),
            i.goal.len(),
            acts.len(),
            acts.iter().filter(|a| applicable(&i.init, a)).count()
        );
    }
    Ok(())
}

fn generate(mut s: Settings) -> Result<(), CliError> {
    let fam: Family = Settings::need(&s.family, "family")?.parse().map_err(CliError::Usage)?;
    let out = Settings::need(&s.out, "out")?;
    if s.sizes.is_empty() {
        return Err(CliError::Usage("missing required --sizes".into()));
    }
    let min = if fam == Family::Blocksworld { 2 } else { 1 };
    if let Some(bad) = s.sizes.iter().find(|&&n| n < min) {
        return Err(CliError::Usage(format!("size {bad} is too small for this family")));
    }
    s.count.get_or_insert(1);
    s.seed.get_or_insert(0);
    print_effective(&s);
    fs::create_dir_all(&out).map_err(CliError::domain)?;
    write(&out.join("domain.pddl"), fam.domain_text())?;
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed());
    let tag = if fam == Family::Blocksworld { "blocks" } else { "gripper" };
    for &n in &s.sizes {
        for k in 0..s.count.unwrap() {
            let name = format!("{tag}-{n}-{k}");
            let p = out.join(format!("{name}.pddl"));
            write(&p, &fam.problem(&name, n, &mut rng))?;
            println!("{}", p.display());
        }
    }
    Ok(())
}

fn gen_data(mut s: Settings) -> Result<(), CliError> {
    let dp = Settings::need(&s.domain, "domain")?;
    let out = Settings::need(&s.out, "out")?;
    need_problems(&s, "problems")?;
    let split = match s.split.get_or_insert_with(|| "train".into()).as_str() {
        "train" => Split::Train,
        "val" => Split::Val,
        other => return Err(CliError::Usage(format!("--split must be train or val, got `{other}`"))),
    };
    s.seed.get_or_insert(0);
    s.fill_workers();
    s.fill_budget(SearchBudget::default());
    print_effective(&s);
    let d = load_domain(&dp)?;
    let insts = s.problems.iter().map(|p| load_problem(p, &d)).collect::<Result<Vec<_>, _>>()?;
    let budget = s.budget(SearchBudget::default());
    let mut ds = pool(&s)?.install(|| generate_dataset(&d, &insts, s.seed(), &budget));
    ds.split = split;
    ds.save(&out, &d).map_err(CliError::domain)?;
    for k in &ds.provenance.skipped {
        eprintln!("skipped {}: {}", k.instance_id, k.reason);
    }
    println!(
        "{} examples from {} instances ({} skipped) -> {}",
        ds.len(),
        insts.len() - ds.provenance.skipped.len(),
        ds.provenance.skipped.len(),
        out.display()
    );
    Ok(())
}

fn train(mut s: Settings) -> Result<(), CliError> {
    let dp = Settings::need(&s.domain, "domain")?;
    let tp = Settings::need(&s.train_data, "train-data")?;
    let vp = Settings::need(&s.val_data, "val-data")?;
    let out = Settings::need(&s.out, "out")?;
    s.fill_train();
    s.fill_workers();
    print_effective(&s);
    let d = load_domain(&dp)?;
    let tr = Dataset::load(&tp, &d).map_err(CliError::domain)?;
    let va = Dataset::load(&vp, &d).map_err(CliError::domain)?;
    let cfg = s.train_config();
    let mut log = match &s.log {
        Some(p) => Some(fs::File::create(p).map_err(|e| CliError::Domain(format!("{}: {e}", p.display())))?),
        None => None,
    };
    let result = pool(&s)?.install(|| {
        train_with(&d, &tr, &va, &cfg, |e| {
            eprintln!(
                "epoch {:>4}  train loss {:.5} acc {:.3}  val loss {:.5} acc {:.3}",
                e.epoch, e.train_loss, e.train_acc, e.val_loss, e.val_acc
            );
            if let Some(f) = log.as_mut() {
                let _ = writeln!(f, "{}", serde_json::to_string(e).expect("log serializes"));
            }
            ControlFlow::Continue(())
        })
    });
    let outcome = result.map_err(CliError::domain)?;
    let ck = &outcome.checkpoint;
    ck.save(&out).map_err(CliError::domain)?;
    println!(
        "best epoch {} val loss {:.6} ({} parameters) -> {}",
        ck.epoch,
        ck.best_val_loss.unwrap_or(f64::NAN),
        ck.model.num_scalars(),
        out.display()
    );
    Ok(())
}

fn load_checkpoint(s: &Settings) -> Result<Checkpoint, CliError> {
    let cp = Settings::need(&s.checkpoint, "checkpoint")?;
    Checkpoint::load(&cp).map_err(|e| CliError::Domain(format!("{}: {e}", cp.display())))
}

fn solve(mut s: Settings) -> Result<(), CliError> {
    let dp = Settings::need(&s.domain, "domain")?;
    let pp = match need_problems(&s, "problem")? {
        [p] => p.clone(),
        _ => return Err(CliError::Usage("solve takes exactly one --problem".into())),
    };
    Settings::need(&s.checkpoint, "checkpoint")?;
    s.fill_exec();
    print_effective(&s);
    let d = load_domain(&dp)?;
    let i = load_problem(&pp, &d)?;
    let ck = load_checkpoint(&s)?;
    let model = ck.model_for(&d).map_err(CliError::domain)?;
    let r = run_policy(&d, &i, model, &s.exec_config()).map_err(CliError::domain)?;
    println!("outcome {} after {} steps", r.outcome.name(), r.steps);
    let plan = r.plan.to_text(&d, &i);
    print!("{plan}");
    if let Some(p) = &s.trace {
        write(p, &r.trace_jsonl())?;
    }
    if let Some(p) = &s.out {
        write(p, &plan)?;
    }
    Ok(())
}

/// `.pddl` files of a directory in name order, without `domain.pddl`.
fn expand(path: &Path) -> Result<Vec<PathBuf>, CliError> {
    if !path.is_dir() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut out: Vec<PathBuf> = fs::read_dir(path)
        .map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "pddl") && p.file_name().is_some_and(|n| n != "domain.pddl"))
        .collect();
    out.sort();
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct ReportFile {
    reports: Vec<EvalReport>,
    combined: Vec<CombinedRow>,
}

fn evaluate(mut s: Settings) -> Result<(), CliError> {
    let dp = Settings::need(&s.domain, "domain")?;
    Settings::need(&s.checkpoint, "checkpoint")?;
    let mut tier_paths: Vec<(String, Vec<PathBuf>)> = Vec::new();
    for t in &s.tiers {
        let (name, paths) = t.split_once('=').ok_or_else(|| CliError::Usage(format!("--tier expects NAME=PATHS, got `{t}`")))?;
        let mut files = Vec::new();
        for p in paths.split(',').filter(|p| !p.is_empty()) {
            files.extend(expand(Path::new(p))?);
        }
        tier_paths.push((name.to_string(), files));
    }
    if !s.problems.is_empty() {
        let mut files = Vec::new();
        for p in &s.problems {
            files.extend(expand(p)?);
        }
        tier_paths.push(("test".into(), files));
    }
    if tier_paths.is_empty() {
        return Err(CliError::Usage("evaluate needs --tier or --problems".into()));
    }
    s.fill_exec();
    s.fill_workers();
    s.fill_budget(REFERENCE_BUDGET);
    print_effective(&s);
    let d = load_domain(&dp)?;
    let ck = load_checkpoint(&s)?;
    let model = ck.model_for(&d).map_err(CliError::domain)?;
    let mut tiers = Vec::new();
    for (name, files) in tier_paths {
        let instances = files.iter().map(|p| load_problem(p, &d)).collect::<Result<Vec<_>, _>>()?;
        let size = format!("{} instances", instances.len());
        tiers.push(TierSpec { name, size, instances });
    }
    let cfg = EvalConfig { exec: s.exec_config(), reference: s.budget(REFERENCE_BUDGET) };
    let report = pool(&s)?.install(|| evaluate_suite(&d, model, &tiers, &cfg)).map_err(CliError::domain)?;
    let mut reports = Vec::new();
    for p in &s.include_reports {
        let f: ReportFile = serde_json::from_str(&read(p)?).map_err(|e| CliError::Domain(format!("{}: {e}", p.display())))?;
        reports.extend(f.reports);
    }
    reports.insert(0, report.clone());
    let table = render_table(&reports);
    print!("{table}");
    if let Some(dir) = &s.out {
        fs::create_dir_all(dir).map_err(CliError::domain)?;
        write(&dir.join("report.txt"), &table)?;
        let file = ReportFile { combined: combined(&reports), reports };
        write(&dir.join("report.json"), &(serde_json::to_string_pretty(&file).expect("report serializes") + "\n"))?;
        write(&dir.join("results.csv"), &report.to_csv())?;
    }
    Ok(())
}

fn inspect_graph(mut s: Settings) -> Result<(), CliError> {
    let dp = Settings::need(&s.domain, "domain")?;
    let pp = match need_problems(&s, "problem")? {
        [p] => p.clone(),
        _ => return Err(CliError::Usage("inspect-graph takes exactly one --problem".into())),
    };
    let ablation = *s.ablation.get_or_insert(Ablation::Full);
    print_effective(&s);
    let d = load_domain(&dp)?;
    let i = load_problem(&pp, &d)?;
    let acts = ground_actions(&d, &i);
    let app: Vec<_> = acts.iter().filter(|a| applicable(&i.init, a)).collect();
    let g = build_graph(&d, &i, &i.init, &app, ablation).map_err(CliError::domain)?;
    let (pe, ae) = g.edge_counts();
    eprintln!(
        "{} nodes ({} object, {} predicate, {} action schema, {} global), {} edges ({} predicate, {} action)",
        g.nodes.len(),
        g.count(gabar::graph::NodeKind::Object),
        g.count(gabar::graph::NodeKind::Predicate),
        g.count(gabar::graph::NodeKind::ActionSchema),
        g.count(gabar::graph::NodeKind::Global),
        g.edges.len(),
        pe,
        ae
    );
    let json = serde_json::to_string_pretty(&g.to_json(&d, &i)).expect("graph serializes") + "\n";
    match &s.out {
        Some(p) => write(p, &json),
        None => {
            print!("{json}");
            Ok(())
        }
    }
}
