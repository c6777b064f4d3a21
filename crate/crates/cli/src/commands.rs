use std::path::Path;

use equilens::analysis::{
    decode_path, generate_rotation_latents, hamming, interpolate, interpolation_stability, knn_classify_eval,
    knn_regress_eval, pca_fit, InterpolationMode, KScore, RotationLatentSpec,
};
use equilens::group::{GraphDataset, GraphRecord};
use equilens::invariant::{
    apply_invariant_map, default_out_dim, partition_invariant_projection, reynolds_random_projection, InvariantMap,
    PoolKind,
};
use equilens::quotient::{quotient_distance, MethodChoice};
use equilens::rng::substream;
use equilens::scalar::euclidean;
use equilens::selftest::{run_check, SELFTEST_CHECKS};
use equilens::vae::{draw_noise, generate_synthetic, reparam_sample, train, SyntheticSpec, TrainConfig, VaeParams};
use equilens::{Graph, GroupElement, GroupSpec, Permutation};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::args::*;
use crate::error::{CliError, CliResult};
use crate::io::{read_json, read_text, sibling, write_json};
use crate::manifest::RunRecorder;
use crate::svg::{emit_svg_scatter, Coloring, PlotText};
use crate::table::{write_rows, LatentTable};

pub fn dispatch(command: &Command) -> CliResult<()> {
    match command {
        Command::GenData(a) => gen_data(a),
        Command::GenRot(a) => gen_rot(a),
        Command::Train(a) => train_model(a),
        Command::Embed(a) => embed(a),
        Command::Project(a) => project(a),
        Command::Dist(a) => dist(a),
        Command::Knn(a) => knn(a),
        Command::Pca(a) => pca(a),
        Command::Interpolate(a) => interpolate_cmd(a),
        Command::Stability(a) => stability(a),
        Command::Selftest(a) => selftest(a),
    }
}

fn load_graphs(path: &Path) -> CliResult<Vec<Graph>> {
    let text = read_text(path)?;
    let dataset = GraphDataset::from_json(&text).map_err(|e| CliError::from(e).at(path))?;
    dataset.to_graphs().map_err(|e| CliError::from(e).at(path))
}

fn load_model(path: &Path) -> CliResult<VaeParams<f64>> {
    VaeParams::from_json(&read_text(path)?).map_err(|e| CliError::from(e).at(path))
}

fn parse_group(spec: Option<&str>, dim: usize) -> CliResult<GroupSpec> {
    let group = match spec {
        Some(s) => s.parse::<GroupSpec>()?,
        None => GroupSpec::symmetric(dim)?,
    };
    if group.dim() != dim {
        return Err(CliError::user(format!(
            "group {group} acts on {} coordinates but the latents have {dim}",
            group.dim()
        )));
    }
    Ok(group)
}

fn fmt(v: f64) -> String {
    v.to_string()
}

fn gen_data(a: &GenDataArgs) -> CliResult<()> {
    let mut rec = RunRecorder::new("gen-data", Some(a.seed));
    let spec = match &a.spec {
        Some(path) => {
            rec.input(path);
            let spec: SyntheticSpec = read_json(path)?;
            spec.validate().map_err(|e| CliError::from(e).at(path))?;
            spec
        }
        None => SyntheticSpec::for_shape(a.n, a.d_a, a.d_e),
    };
    let graphs = generate_synthetic(&spec, a.count, a.seed)?;
    let text = GraphDataset::from_graphs(&graphs)?.to_json()?;
    crate::io::write_text(&a.out, &(text + "\n"))?;
    rec.output(&a.out);
    rec.note("graphs", graphs.len());
    rec.note("spec", &spec);
    rec.finish(&a.out)?;
    println!("wrote {} graphs to {}", graphs.len(), a.out.display());
    Ok(())
}

fn gen_rot(a: &GenRotArgs) -> CliResult<()> {
    let mut rec = RunRecorder::new("gen-rot", Some(a.seed));
    let spec = RotationLatentSpec {
        k: a.k,
        freqs: a.freqs.clone(),
        classes: a.classes,
        noise: a.noise,
        template_seed: a.template_seed,
        ..Default::default()
    };
    let lat = generate_rotation_latents(&spec, a.count, a.seed)?;
    let mut table = LatentTable::new(lat.data.row_iter().map(<[f64]>::to_vec).collect());
    table.push_label("class", lat.labels.iter().map(|&c| c as f64).collect());
    table.push_label("rotation_step", lat.steps.iter().map(|&s| s as f64).collect());
    table.write(&a.out)?;
    rec.output(&a.out);
    let group = spec.group()?;
    rec.note("group", group.to_string());
    rec.note("spec", &spec);
    rec.finish(&a.out)?;
    println!("wrote {} latents acted on by {group} to {}", a.count, a.out.display());
    Ok(())
}

fn train_model(a: &TrainArgs) -> CliResult<()> {
    let mut rec = RunRecorder::new("train", Some(a.seed));
    let graphs = load_graphs(&a.data)?;
    rec.input(&a.data);
    let config = match &a.config {
        Some(path) => {
            rec.input(path);
            read_json::<TrainConfig>(path)?
        }
        None => TrainConfig {
            learning_rate: a.lr,
            batch_size: a.batch_size,
            epochs: a.epochs,
            seed: a.seed,
            hidden: a.hidden,
            clip_norm: a.clip_norm,
            kl_warmup_epochs: a.kl_warmup,
        },
    };
    let outcome = train::<f64>(&graphs, &config)?;
    crate::io::write_text(&a.out, &(outcome.params.to_json()? + "\n"))?;
    rec.output(&a.out);
    let loss_path = a.curve.clone().unwrap_or_else(|| sibling(&a.out, "curve.csv"));
    let rows: Vec<Vec<String>> = outcome
        .loss_curve
        .iter()
        .map(|s| vec![s.epoch.to_string(), fmt(s.loss), fmt(s.recon), fmt(s.kl)])
        .collect();
    write_rows(&loss_path, &["epoch", "loss", "recon", "kl"], &rows)?;
    rec.output(&loss_path);
    let (first, last) = (&outcome.loss_curve[0], outcome.loss_curve.last().expect("epochs >= 1"));
    rec.note("config", &config);
    rec.note("initial_loss", first.loss);
    rec.note("final_loss", last.loss);
    rec.finish(&a.out)?;
    println!("epoch loss {:.4} -> {:.4} over {} epochs", first.loss, last.loss, config.epochs);
    Ok(())
}

fn embed(a: &EmbedArgs) -> CliResult<()> {
    let mut rec = RunRecorder::new("embed", Some(a.seed));
    let params = load_model(&a.params)?;
    let graphs = load_graphs(&a.data)?;
    rec.input(&a.params);
    rec.input(&a.data);
    let features = graphs
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let post = params.encode(g)?;
            let mut rng = substream(a.seed, i as u64);
            let z = match a.mode {
                EmbedMode::Mean => post.mu,
                EmbedMode::Sample => {
                    let eps: Vec<f64> = draw_noise(post.mu.len(), &mut rng);
                    reparam_sample(&post.mu, &post.logvar, &eps)
                }
            };
            if a.permute {
                Permutation::random(z.len(), &mut rng).apply(&z)
            } else {
                Ok(z)
            }
        })
        .collect::<equilens::Result<Vec<_>>>()?;
    let mut table = LatentTable::new(features);
    let mut keys: Vec<&String> = graphs.iter().flat_map(|g| g.props.keys()).collect();
    keys.sort();
    keys.dedup();
    for key in keys {
        let values = graphs.iter().map(|g| g.props.get(key).copied().unwrap_or(f64::NAN)).collect();
        table.push_label(key, values);
    }
    table.write(&a.out)?;
    rec.output(&a.out);
    rec.note("mode", format!("{:?}", a.mode).to_lowercase());
    rec.note("permuted", a.permute);
    rec.finish(&a.out)?;
    println!("wrote {} latents of dimension {} to {}", table.len(), table.dim(), a.out.display());
    Ok(())
}

fn project(a: &ProjectArgs) -> CliResult<()> {
    let mut rec = RunRecorder::new("project", Some(a.seed));
    let table = LatentTable::read(&a.input)?;
    rec.input(&a.input);
    let dim = table.dim();
    let c = a.channels.max(1);
    let nodes = |order: usize| -> CliResult<usize> {
        let per = dim / c;
        let n = match order {
            1 => per,
            _ => (per as f64).sqrt().round() as usize,
        };
        if n.pow(order as u32) * c != dim {
            return Err(CliError::user(format!(
                "dimension {dim} is not n^{order} x {c} channels"
            )));
        }
        Ok(n)
    };
    let map: InvariantMap<f64> = match a.kind {
        ProjectionKind::Sort => {
            parse_group(a.group.as_deref(), dim)?;
            InvariantMap::sort(dim)
        }
        ProjectionKind::PoolSum => InvariantMap::pooling(nodes(1)?, c, PoolKind::Sum),
        ProjectionKind::PoolMean => InvariantMap::pooling(nodes(1)?, c, PoolKind::Mean),
        ProjectionKind::PoolMax => InvariantMap::pooling(nodes(1)?, c, PoolKind::Max),
        ProjectionKind::Partition => {
            let out_dim = a.out_dim.unwrap_or_else(|| default_out_dim(dim));
            partition_invariant_projection(nodes(a.order)?, c, out_dim, a.order, a.seed)?
        }
        ProjectionKind::Reynolds => {
            let group = parse_group(a.group.as_deref(), dim)?;
            let out_dim = a.out_dim.unwrap_or_else(|| default_out_dim(dim));
            reynolds_random_projection(&group, dim, out_dim, a.seed, a.cap)?
        }
        ProjectionKind::BlockNorm => {
            let group = parse_group(a.group.as_deref(), dim)?;
            InvariantMap::block_norm(&group)?
        }
    };
    let projected = apply_invariant_map(&map, &table.matrix()?)?;
    let out = table.with_features(projected.data.row_iter().map(<[f64]>::to_vec).collect());
    out.write(&a.out)?;
    rec.output(&a.out);
    rec.note("kind", map.kind);
    rec.note("group", map.group.to_string());
    rec.note("out_dim", map.out_dim);
    rec.note("zero_variance_columns", &projected.zero_variance_columns);
    rec.finish(&a.out)?;
    println!("projected {} rows with {:?} to dimension {}", out.len(), map.kind, map.out_dim);
    Ok(())
}

fn element_text(g: &GroupElement) -> String {
    match g {
        GroupElement::Perm(p) => p.image().iter().map(usize::to_string).collect::<Vec<_>>().join(" "),
        GroupElement::Rotation { step, k } => format!("{step}/{k}"),
        GroupElement::Angle(t) => format!("{t}"),
    }
}

fn dist(a: &DistArgs) -> CliResult<()> {
    let mut rec = RunRecorder::new("dist", Some(a.seed));
    let table = LatentTable::read(&a.input)?;
    rec.input(&a.input);
    let group = parse_group(a.group.as_deref(), table.dim())?;
    let method: MethodChoice = a.method.parse()?;
    let m = table.len();
    if m < 2 {
        return Err(CliError::user("need at least two latents"));
    }
    let pairs: Vec<(usize, usize)> = match a.pairs.trim().parse::<usize>() {
        Ok(0) => (0..m).flat_map(|i| (i + 1..m).map(move |j| (i, j))).collect(),
        Ok(count) => {
            let mut rng = substream(a.seed, 0);
            (0..count)
                .map(|_| {
                    let i = rng.random_range(0..m);
                    let j = (i + rng.random_range(1..m)) % m;
                    (i, j)
                })
                .collect()
        }
        Err(_) => {
            let path = Path::new(&a.pairs);
            rec.input(path);
            read_pairs(path, &table)?
        }
    };
    let mut rows = Vec::with_capacity(pairs.len());
    for &(i, j) in &pairs {
        let (z1, z2) = (&table.features[i], &table.features[j]);
        let r = quotient_distance(z1, z2, &group, method, a.cap, a.grid)?;
        rows.push(vec![
            table.ids[i].to_string(),
            table.ids[j].to_string(),
            fmt(euclidean(z1, z2)),
            fmt(r.distance),
            element_text(&r.minimizer),
        ]);
    }
    write_rows(&a.out, &["id1", "id2", "ambient", "quotient", "minimizer"], &rows)?;
    rec.output(&a.out);
    rec.note("group", group.to_string());
    rec.note("pairs", pairs.len());
    rec.finish(&a.out)?;
    println!("wrote {} distances to {}", rows.len(), a.out.display());
    Ok(())
}

/// Row pairs named by the `id1,id2` columns of a CSV file.
fn read_pairs(path: &Path, table: &LatentTable) -> CliResult<Vec<(usize, usize)>> {
    let text = read_text(path)?;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| CliError::from(e).at(path))?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::user(format!("{}: no '{name}' column", path.display())))
    };
    let (c1, c2) = (col("id1")?, col("id2")?);
    let mut pairs = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::from(e).at(path))?;
        let id = |c: usize| -> CliResult<u64> {
            record.get(c).unwrap_or("").trim().parse().map_err(|_| {
                CliError::user(format!("{}: line {}: ids must be non-negative integers", path.display(), row + 2))
            })
        };
        pairs.push((table.row_of(id(c1)?)?, table.row_of(id(c2)?)?));
    }
    Ok(pairs)
}

fn class_labels(values: &[f64], column: &str) -> CliResult<Vec<usize>> {
    values
        .iter()
        .map(|&v| {
            if v >= 0.0 && v.fract() == 0.0 && v < u32::MAX as f64 {
                Ok(v as usize)
            } else {
                Err(CliError::user(format!("column '{column}' holds {v}, not a class index")))
            }
        })
        .collect()
}

fn knn(a: &KnnArgs) -> CliResult<()> {
    let mut rec = RunRecorder::new("knn", Some(a.seed));
    let pool = LatentTable::read(&a.train)?;
    rec.input(&a.train);
    let (train_set, test_set) = match &a.test {
        Some(path) => {
            rec.input(path);
            (pool, LatentTable::read(path)?)
        }
        None => {
            if !(a.test_fraction > 0.0 && a.test_fraction < 1.0) {
                return Err(CliError::user("--test-fraction must lie strictly between 0 and 1"));
            }
            let mut order: Vec<usize> = (0..pool.len()).collect();
            order.shuffle(&mut substream(a.seed, 0));
            let n_test = ((pool.len() as f64 * a.test_fraction).round() as usize).clamp(1, pool.len().saturating_sub(1));
            let (test_rows, train_rows) = order.split_at(n_test);
            (pool.select(train_rows), pool.select(test_rows))
        }
    };
    let (train_x, test_x) = (train_set.matrix()?, test_set.matrix()?);
    let (train_y, test_y) = (train_set.label(&a.target)?, test_set.label(&a.target)?);
    let (scores, metric): (Vec<KScore>, &str) = match a.task {
        KnnTask::Regress => (knn_regress_eval(&train_x, train_y, &test_x, test_y, &a.k.0)?, "mae"),
        KnnTask::Classify => {
            let (tr, te) = (class_labels(train_y, &a.target)?, class_labels(test_y, &a.target)?);
            (knn_classify_eval(&train_x, &tr, &test_x, &te, &a.k.0)?, "macro_f1")
        }
    };
    let rows: Vec<Vec<String>> = scores.iter().map(|s| vec![s.k.to_string(), fmt(s.score)]).collect();
    write_rows(&a.out, &["k", metric], &rows)?;
    rec.output(&a.out);
    rec.note("metric", metric);
    rec.note("train_rows", train_set.len());
    rec.note("test_rows", test_set.len());
    rec.note("scores", &scores);
    rec.finish(&a.out)?;
    for s in &scores {
        println!("k = {:>2}  {metric} = {:.4}", s.k, s.score);
    }
    Ok(())
}

fn pca(a: &PcaArgs) -> CliResult<()> {
    let mut rec = RunRecorder::new("pca", None);
    let table = LatentTable::read(&a.input)?;
    rec.input(&a.input);
    let model = pca_fit(&table.matrix()?)?;
    let coords = model.transform(&table.matrix()?)?;
    let csv_path = a.csv.clone().unwrap_or_else(|| a.out.with_extension("csv"));
    table
        .with_features(coords.row_iter().map(<[f64]>::to_vec).collect())
        .write(&csv_path)?;

    let points: Vec<[f64; 2]> = coords.row_iter().map(|r| [r[0], r[1]]).collect();
    let color_values = a.color_by.as_deref().map(|c| table.label(c)).transpose()?;
    let categories = match (color_values, a.categorical) {
        (Some(v), Some(true)) => Some(class_labels(v, a.color_by.as_deref().unwrap_or_default())?),
        (Some(v), None) => {
            let mut distinct: Vec<u64> = v.iter().map(|x| x.to_bits()).collect();
            distinct.sort_unstable();
            distinct.dedup();
            if distinct.len() <= 10 {
                class_labels(v, "").ok()
            } else {
                None
            }
        }
        _ => None,
    };
    let coloring = match (&categories, color_values) {
        (Some(c), _) => Coloring::Categorical(c),
        (None, Some(v)) => Coloring::Continuous(v),
        (None, None) => Coloring::Uniform,
    };
    let ev = &model.explained_variance;
    let text = PlotText {
        title: a.title.clone(),
        x_label: format!("PC1 (variance {:.4})", ev[0]),
        y_label: format!("PC2 (variance {:.4})", ev[1]),
        legend_title: a.color_by.clone().unwrap_or_default(),
    };
    let labels: Vec<String> = table.ids.iter().map(|i| format!("id {i}")).collect();
    crate::io::write_text(&a.out, &emit_svg_scatter(&points, coloring, Some(&labels), &text))?;
    rec.output(&a.out);
    rec.output(&csv_path);
    rec.note("explained_variance", ev);
    rec.note("components", &model.components);
    rec.finish(&a.out)?;
    println!("explained variance: PC1 {:.4}, PC2 {:.4}", ev[0], ev[1]);
    Ok(())
}

fn mode_of(m: ModeArg) -> InterpolationMode {
    match m {
        ModeArg::Equivariant => InterpolationMode::Equivariant,
        ModeArg::Invariant => InterpolationMode::Invariant,
    }
}

#[derive(Serialize)]
struct InterpolationOutput {
    from: u64,
    to: u64,
    mode: InterpolationMode,
    alphas: Vec<f64>,
    points: Vec<Vec<f64>>,
    graphs: Vec<GraphRecord>,
    /// Hamming distance between decoded steps `i` and `i + 1`.
    consecutive_hamming: Vec<usize>,
}

fn interpolate_cmd(a: &InterpolateArgs) -> CliResult<()> {
    let mut rec = RunRecorder::new("interpolate", None);
    let params = load_model(&a.params)?;
    let table = LatentTable::read(&a.input)?;
    rec.input(&a.params);
    rec.input(&a.input);
    let &[from, to] = a.ids.as_slice() else {
        return Err(CliError::user(format!("--ids takes exactly two ids, got {}", a.ids.len())));
    };
    let z1 = &table.features[table.row_of(from)?];
    let z2 = &table.features[table.row_of(to)?];
    let mut path = interpolate(z1, z2, mode_of(a.mode), a.steps)?;
    decode_path(&params, &mut path)?;
    let consecutive_hamming = path
        .decoded
        .windows(2)
        .map(|w| hamming(&w[0], &w[1]))
        .collect::<equilens::Result<Vec<_>>>()?;
    let output = InterpolationOutput {
        from,
        to,
        mode: path.mode,
        alphas: path.alphas.clone(),
        points: path.points.clone(),
        graphs: path.decoded.iter().map(Graph::to_record).collect(),
        consecutive_hamming,
    };
    write_json(&a.out, &output)?;
    rec.output(&a.out);
    let hamming_path = a.hamming.clone().unwrap_or_else(|| {
        let stem = a.out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        a.out.with_file_name(format!("{stem}_hamming.csv"))
    });
    let rows: Vec<Vec<String>> = output
        .consecutive_hamming
        .iter()
        .enumerate()
        .map(|(i, h)| vec![i.to_string(), fmt(output.alphas[i]), fmt(output.alphas[i + 1]), h.to_string()])
        .collect();
    write_rows(&hamming_path, &["step", "alpha", "next_alpha", "hamming"], &rows)?;
    rec.output(&hamming_path);
    let mean = output.consecutive_hamming.iter().sum::<usize>() as f64 / output.consecutive_hamming.len() as f64;
    rec.note("mean_consecutive_hamming", mean);
    rec.finish(&a.out)?;
    println!("mean consecutive Hamming distance {mean:.4}");
    Ok(())
}

fn stability(a: &StabilityArgs) -> CliResult<()> {
    let mut rec = RunRecorder::new("stability", Some(a.seed));
    let params = load_model(&a.params)?;
    let table = LatentTable::read(&a.input)?;
    rec.input(&a.params);
    rec.input(&a.input);
    let m = table.len();
    if m < 2 {
        return Err(CliError::user("need at least two latents"));
    }
    let mut rng = substream(a.seed, 0);
    let pairs: Vec<(usize, usize)> = (0..a.pairs)
        .map(|_| {
            let i = rng.random_range(0..m);
            (i, (i + rng.random_range(1..m)) % m)
        })
        .collect();
    let latent_pairs: Vec<(Vec<f64>, Vec<f64>)> = pairs
        .iter()
        .map(|&(i, j)| (table.features[i].clone(), table.features[j].clone()))
        .collect();
    let modes = match a.mode {
        StabilityMode::Equivariant => vec![InterpolationMode::Equivariant],
        StabilityMode::Invariant => vec![InterpolationMode::Invariant],
        StabilityMode::Both => vec![InterpolationMode::Equivariant, InterpolationMode::Invariant],
    };
    let mut rows = Vec::new();
    let mut hist_rows = Vec::new();
    let mut means = serde_json::Map::new();
    for mode in modes {
        let report = interpolation_stability(&params, &latent_pairs, mode, a.steps)?;
        for (p, &(i, j)) in pairs.iter().enumerate() {
            rows.push(vec![
                mode.to_string(),
                table.ids[i].to_string(),
                table.ids[j].to_string(),
                fmt(report.per_path[p]),
            ]);
        }
        for (lo, hi, count) in report.histogram.rows() {
            hist_rows.push(vec![mode.to_string(), fmt(lo), fmt(hi), count.to_string()]);
        }
        println!("{mode}: mean consecutive Hamming {:.4}", report.mean);
        means.insert(mode.to_string(), report.mean.into());
    }
    write_rows(&a.out, &["mode", "bin_low", "bin_high", "count"], &hist_rows)?;
    rec.output(&a.out);
    let paths = a.paths.clone().unwrap_or_else(|| sibling(&a.out, "paths.csv"));
    write_rows(&paths, &["mode", "id1", "id2", "mean_hamming"], &rows)?;
    rec.output(&paths);
    rec.note("mean_hamming", means);
    rec.note("pairs", pairs.len());
    rec.finish(&a.out)?;
    Ok(())
}

fn selftest(a: &SelftestArgs) -> CliResult<()> {
    let mut rec = RunRecorder::new("selftest", Some(a.seed));
    let ids: Vec<u8> = if a.check.is_empty() { SELFTEST_CHECKS.to_vec() } else { a.check.clone() };
    let mut reports = Vec::new();
    for id in ids {
        let started = std::time::Instant::now();
        let report = run_check(id, a.seed)?;
        log::info!("check {id} took {:.1} s", started.elapsed().as_secs_f64());
        println!("{report}");
        reports.push(report);
    }
    write_json(&a.out, &reports)?;
    rec.output(&a.out);
    let failed: Vec<u8> = reports.iter().filter(|r| !r.passed).map(|r| r.id).collect();
    rec.note("failed", &failed);
    rec.finish(&a.out)?;
    if failed.is_empty() {
        println!("all {} checks passed", reports.len());
        Ok(())
    } else {
        Err(CliError::Internal(format!("self-test checks {failed:?} failed")))
    }
}
