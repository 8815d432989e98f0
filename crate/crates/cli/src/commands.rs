use std::collections::BTreeMap;
use std::path::Path;

use featsig::cluster::constrained_linkage;
use featsig::data::{read_csv_table, read_targets, TARGET_COLUMN};
use featsig::interactions::{analyze_interactions, candidate_pairs, InteractionConfig};
use featsig::model::{make_synthetic_model, ExternalModel};
use featsig::report::{summary_table, to_dot, InteractionReport, InteractionReportConfig};
use featsig::synth::{
    build_random_hierarchy, generate_ground_truth, generate_instances, run_experiment, ExperimentConfig, GroundTruth,
};
use featsig::{
    load_hierarchy, AnalysisConfig, Dataset, FeatureHierarchy, ImportanceReport, LossFunction, Matrix, Model,
    NodeId, PerturbationSpec, Tail,
};

use crate::failure::{read, write, Failure};
use crate::{
    AnalyzeArgs, ClusterArgs, DataArgs, ExportDotArgs, GenerateArgs, InteractArgs, ModelSource, PerturbationArg,
    PerturbationArgs, SynthArgs, SyntheticNoise,
};

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn load_data(args: &DataArgs) -> Result<(Dataset, FeatureHierarchy), Failure> {
    let text = read(&args.data)?;
    let targets = match &args.targets {
        Some(p) => Some(read_targets(&read(p)?).map_err(|e| Failure::from(e).at(p))?),
        None => None,
    };
    let data = Dataset::from_csv(&text, targets).map_err(|e| Failure::from(e).at(&args.data))?;
    let h = load_hierarchy(&read(&args.hierarchy)?).map_err(|e| Failure::from(e).at(&args.hierarchy))?;
    Ok((data, h))
}

fn load_model(source: &ModelSource, noise: &SyntheticNoise) -> Result<(Box<dyn Model>, String), Failure> {
    if let Some(cmd) = &source.adapter {
        return Ok((Box::new(ExternalModel::spawn(cmd)?), format!("adapter: {cmd}")));
    }
    let path = source.truth.as_ref().expect("clap enforces one model source");
    let truth = GroundTruth::from_json(&read(path)?).map_err(|e| Failure::from(e).at(path))?;
    let model = make_synthetic_model(truth, noise.sigma, noise.noise_seed)?;
    Ok((
        Box::new(model),
        format!(
            "synthetic: {} (sigma {}, noise seed {})",
            path.display(),
            noise.sigma,
            noise.noise_seed
        ),
    ))
}

fn perturbation(args: &PerturbationArgs) -> Result<PerturbationSpec, Failure> {
    let spec = match args.perturbation {
        PerturbationArg::Permutation => PerturbationSpec::permutation(args.num_permutations, args.seed),
        PerturbationArg::Erasure => PerturbationSpec::erasure_to(args.erasure_value).with_seed(args.seed),
        PerturbationArg::Flip => PerturbationSpec::flip().with_seed(args.seed),
    };
    spec.validate()?;
    Ok(spec)
}

fn inputs(data: &DataArgs, model: String) -> BTreeMap<String, String> {
    let mut m = BTreeMap::from([
        ("data".to_string(), path_str(&data.data)),
        ("hierarchy".to_string(), path_str(&data.hierarchy)),
        ("model".to_string(), model),
    ]);
    if let Some(t) = &data.targets {
        m.insert("targets".into(), path_str(t));
    }
    m
}

pub fn analyze(args: AnalyzeArgs) -> Result<(), Failure> {
    let spec = perturbation(&args.perturbation)?;
    let tail: Tail = args.tail.parse()?;
    let (data, h) = load_data(&args.data)?;
    let (model, description) = load_model(&args.model, &args.noise)?;
    let loss = match &args.loss {
        Some(l) => l.parse()?,
        None => model.transfer().default_loss(),
    };
    let mut config = AnalysisConfig::new(loss, spec);
    config.q = args.q;
    config.tail = tail;
    config.lazy = args.lazy;

    let mut report = featsig::analyze(model.as_ref(), &data, &h, &config)?;
    report.config.inputs = inputs(&args.data, description);
    write(&args.out, &report.to_json())?;
    if let Some(dot) = &args.dot {
        write(dot, &to_dot(&report, &h)?)?;
    }
    print!("{}", summary_table(&report));
    if !report.outer_nodes.is_empty() {
        println!("outer nodes: {}", report.outer_nodes.join(", "));
    }
    Ok(())
}

fn resolve(h: &FeatureHierarchy, names: &[String]) -> Result<Vec<NodeId>, Failure> {
    names
        .iter()
        .map(|n| h.find(n).ok_or_else(|| Failure::data(format!("node `{n}` is not in the hierarchy"))))
        .collect()
}

pub fn interact(args: InteractArgs) -> Result<(), Failure> {
    let spec = perturbation(&args.perturbation)?;
    let loss: Option<LossFunction> = args.loss.as_deref().map(str::parse).transpose()?;
    let (data, h) = load_data(&args.data)?;
    let mut input_map = BTreeMap::new();
    let names = match (&args.report, &args.nodes) {
        (Some(p), _) => {
            let report = ImportanceReport::from_json(&read(p)?).map_err(|e| Failure::from(e).at(p))?;
            input_map.insert("report".to_string(), path_str(p));
            report.outer_nodes
        }
        (None, Some(nodes)) => nodes.clone(),
        (None, None) => return Err(Failure::config("give --report or --nodes")),
    };
    let nodes = resolve(&h, &names)?;
    let (model, description) = load_model(&args.model, &args.noise)?;
    input_map.extend(inputs(&args.data, description));

    let candidates = candidate_pairs(&nodes, &h)?;
    let config = InteractionConfig {
        q: args.q,
        perturbation: spec,
        loss,
    };
    let results = analyze_interactions(model.as_ref(), &data, &h, &candidates, &config)?;
    let report = InteractionReport::new(
        InteractionReportConfig {
            interaction: config,
            n_instances: data.n_instances(),
            n_features: data.n_features(),
            candidates: candidates.len(),
            inputs: input_map,
        },
        &h,
        &nodes,
        &results,
    );
    write(&args.out, &report.to_json())?;
    println!(
        "{} candidate pairs tested, {} rejected at q = {}",
        candidates.len(),
        report.rejected(),
        args.q
    );
    Ok(())
}

pub fn synth(args: SynthArgs) -> Result<(), Failure> {
    let config = ExperimentConfig {
        vary: args.vary.parse()?,
        grid: args.grid,
        replicates: args.replicates,
        n_features: args.n_features,
        n_linear: args.n_linear,
        n_interactions: args.n_interactions,
        m: args.m,
        sigma: args.sigma,
        bernoulli_p: args.bernoulli_p,
        q: args.q,
        seed: args.seed,
        lazy: !args.eager,
    };
    let table = run_experiment(&config)?;
    let text = table.to_text();
    if let Some(p) = &args.out {
        write(p, &(table.to_json() + "\n"))?;
    }
    if let Some(p) = &args.text {
        write(p, &text)?;
    }
    print!("{text}");
    Ok(())
}

fn parse_order(text: &str, names: &[String]) -> Result<Vec<usize>, Failure> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<usize>()
                .ok()
                .or_else(|| names.iter().position(|n| n == t))
                .ok_or_else(|| Failure::data(format!("order entry `{t}` is neither an index nor a column name")))
        })
        .collect()
}

pub fn cluster(args: ClusterArgs) -> Result<(), Failure> {
    let (header, rows) = read_csv_table(&read(&args.data)?).map_err(|e| Failure::from(e).at(&args.data))?;
    let keep: Vec<usize> = (0..header.len()).filter(|&j| header[j] != TARGET_COLUMN).collect();
    let names: Vec<String> = keep.iter().map(|&j| header[j].clone()).collect();
    let sub: Vec<Vec<f64>> = rows.iter().map(|r| keep.iter().map(|&j| r[j]).collect()).collect();
    let x = Matrix::from_rows(&sub).map_err(|e| Failure::from(e).at(&args.data))?;
    let order = match &args.order {
        Some(p) => parse_order(&read(p)?, &names).map_err(|f| f.at(p))?,
        None => (0..names.len()).collect(),
    };
    let linkage = constrained_linkage(&x, &order).map_err(|e| Failure::from(e).at(&args.data))?;
    let h = linkage.to_hierarchy(Some(&names))?;
    let doc = if args.out.extension().is_some_and(|e| e == "csv") {
        h.to_csv()
    } else {
        h.to_json()
    };
    write(&args.out, &doc)?;
    println!("{} leaves, {} nodes", linkage.n_leaves(), h.len());
    if let Some(t) = args.threshold {
        for (k, members) in linkage.flat_clusters(t).iter().enumerate() {
            let list: Vec<&str> = members.iter().map(|&c| names[c].as_str()).collect();
            println!("cluster {}: {}", k + 1, list.join(" "));
        }
    }
    Ok(())
}

pub fn export_dot(args: ExportDotArgs) -> Result<(), Failure> {
    let report = ImportanceReport::from_json(&read(&args.report)?).map_err(|e| Failure::from(e).at(&args.report))?;
    let h = load_hierarchy(&read(&args.hierarchy)?).map_err(|e| Failure::from(e).at(&args.hierarchy))?;
    let dot = to_dot(&report, &h).map_err(|e| Failure::data(e))?;
    write(&args.out, &dot)
}

pub fn generate(args: GenerateArgs) -> Result<(), Failure> {
    let truth = generate_ground_truth(args.n_features, args.n_linear, args.n_interactions, args.seed)?;
    let data = generate_instances(&truth, args.m, args.bernoulli_p, args.seed.wrapping_add(1))?;
    let h = build_random_hierarchy(args.n_features, args.seed.wrapping_add(2))?;
    std::fs::create_dir_all(&args.out_dir)
        .map_err(|e| Failure::config(format!("cannot create {}: {e}", args.out_dir.display())))?;
    write(&args.out_dir.join("truth.json"), &(truth.to_json() + "\n"))?;
    write(&args.out_dir.join("data.csv"), &data.to_csv())?;
    write(&args.out_dir.join("hierarchy.json"), &h.to_json())?;
    println!(
        "wrote truth.json, data.csv ({} x {}) and hierarchy.json ({} nodes) to {}",
        data.n_instances(),
        data.n_features(),
        h.len(),
        args.out_dir.display()
    );
    Ok(())
}
