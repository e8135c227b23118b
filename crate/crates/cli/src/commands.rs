use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use eakd::analysis::{
    quartile_report_csv, run_beta_sweep, run_tprime_ablation, run_weighting_study, GridInputs,
    DEFAULT_BETA_VALUES, DEFAULT_TPRIME_VALUES,
};
use eakd::config::RunConfig;
use eakd::data::{generate_blobs, load_dir, write_csv, Dataset, TRAIN_CSV, VAL_CSV};
use eakd::distill::{LossKind, WeightingMode};
use eakd::models::{load_checkpoint, save_checkpoint, MlpSpec, ModelParams};
use eakd::par::Execution;
use eakd::trainer::{self, distill_student, evaluate, read_train_log, write_train_log};
use eakd::{Error, Result};

pub const RESOLVED_CONFIG: &str = "resolved_config";
pub const MANIFEST: &str = "manifest";

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// `{out}/{timestamp}-{command}-seed{seed}`, suffixed if it already exists.
fn run_dir(cfg: &RunConfig, command: &str) -> Result<PathBuf> {
    let stamp = chrono::Local::now().format("%Y%m%dT%H%M%S");
    let base = format!("{stamp}-{command}-seed{}", cfg.train.seed);
    let mut dir = cfg.out.join(&base);
    let mut k = 1;
    while dir.exists() {
        dir = cfg.out.join(format!("{base}-{k}"));
        k += 1;
    }
    create_dir(&dir)?;
    Ok(dir)
}

fn execution(cfg: &RunConfig) -> Execution {
    let exec = Execution::from_threads(cfg.threads);
    if exec == Execution::Parallel {
        #[cfg(feature = "parallel")]
        {
            // Fails only if a pool already exists, which is fine.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build_global();
        }
        #[cfg(not(feature = "parallel"))]
        eprintln!("warning: built without the `parallel` feature; running single-threaded");
    }
    exec
}

fn load_data(cfg: &mut RunConfig) -> Result<(Dataset, Dataset)> {
    let dir = cfg
        .data
        .clone()
        .ok_or_else(|| Error::Config("no dataset given; pass --data DIR (see `eakd gen-data`)".into()))?;
    let (train, val) = load_dir(&dir)?;
    cfg.adopt_data_shape(train.class_count(), train.dim());
    Ok((train, val))
}

fn load_teacher(cfg: &RunConfig) -> Result<ModelParams> {
    let path = cfg
        .teacher
        .as_ref()
        .ok_or_else(|| Error::Config("no teacher given; pass --teacher PATH".into()))?;
    load_checkpoint(path)
}

fn finish(dir: &Path, cfg: &RunConfig) -> Result<()> {
    write(&dir.join(RESOLVED_CONFIG), &cfg.to_text())?;
    println!("{}", dir.display());
    Ok(())
}

pub fn gen_data(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    let spec = cfg.blob_spec();
    let (train, val) = generate_blobs(&spec)?;
    create_dir(&cfg.out)?;
    write_csv(&train, &cfg.out.join(TRAIN_CSV))?;
    write_csv(&val, &cfg.out.join(VAL_CSV))?;
    let manifest = format!(
        "seed = {}\nclass_count = {}\ndims = {}\nsamples_per_class = {}\nspread = {:?}\ncenter_scale = {:?}\ntrain_samples = {}\nval_samples = {}\n",
        spec.seed,
        spec.class_count,
        spec.dims,
        spec.samples_per_class,
        spec.spread,
        spec.center_scale,
        train.len(),
        val.len()
    );
    write(&cfg.out.join(MANIFEST), &manifest)?;
    finish(&cfg.out, cfg)
}

pub fn train_teacher(cfg: &mut RunConfig) -> Result<()> {
    let (train, val) = load_data(cfg)?;
    cfg.validate()?;
    let spec = cfg.teacher_spec(train.dim(), train.class_count())?;
    let out = trainer::train_teacher(&spec, &train, &val, &cfg.train, execution(cfg))?;
    let dir = run_dir(cfg, "train-teacher")?;
    save_checkpoint(&out.params, &dir.join("teacher.ck"))?;
    write_train_log(&out.log, &dir.join("train_log.csv"))?;
    eprintln!("teacher {spec}: val accuracy {:.4}", out.final_val_accuracy());
    finish(&dir, cfg)
}

pub fn distill(cfg: &mut RunConfig) -> Result<()> {
    let teacher = load_teacher(cfg)?;
    let (train, val) = load_data(cfg)?;
    cfg.validate()?;
    let spec = cfg.student_spec(train.dim(), train.class_count())?;
    let out = distill_student(&teacher, &spec, &train, &val, &cfg.train, execution(cfg))?;
    let dir = run_dir(cfg, "distill")?;
    save_checkpoint(&out.params, &dir.join("student.ck"))?;
    write_train_log(&out.log, &dir.join("train_log.csv"))?;
    write(&dir.join("quartiles.csv"), &quartile_report_csv(&out.log))?;
    eprintln!(
        "student {spec} ({}): val accuracy {:.4}",
        cfg.train.distill.weighting_mode,
        out.final_val_accuracy()
    );
    finish(&dir, cfg)
}

pub fn eval(cfg: &mut RunConfig, checkpoint: &Path) -> Result<()> {
    let params = load_checkpoint(checkpoint)?;
    let (_, val) = load_data(cfg)?;
    cfg.validate()?;
    let spec = MlpSpec::from_params(&params)?;
    if spec.input_dim != val.dim() || spec.class_count != val.class_count() {
        return Err(Error::Config(format!(
            "checkpoint {spec} does not fit data with {} features and {} classes",
            val.dim(),
            val.class_count()
        )));
    }
    let e = evaluate(&params, &val, cfg.train.distill.diagnostic_temperature, execution(cfg))?;
    let mut csv = String::from("index,label,prediction,correct,entropy\n");
    for (i, (&label, &pred)) in val.labels().iter().zip(&e.predictions).enumerate() {
        writeln!(csv, "{i},{label},{pred},{},{:?}", u8::from(e.correct[i]), e.entropy[i]).expect("write to string");
    }
    let dir = run_dir(cfg, "eval")?;
    write(&dir.join("eval.csv"), &csv)?;
    write(
        &dir.join("summary.csv"),
        &format!("checkpoint,accuracy,n\n{},{:?},{}\n", checkpoint.display(), e.accuracy, val.len()),
    )?;
    eprintln!("{spec}: val accuracy {:.4}", e.accuracy);
    finish(&dir, cfg)
}

pub fn ablate(cfg: &mut RunConfig) -> Result<()> {
    let teacher = load_teacher(cfg)?;
    let (train, val) = load_data(cfg)?;
    if cfg.study == "beta" {
        cfg.train.loss_kind = LossKind::Dkd;
    }
    cfg.validate()?;
    let student = cfg.student_spec(train.dim(), train.class_count())?;
    let inputs = GridInputs {
        teacher: Some(&teacher),
        student_spec: &student,
        train: &train,
        val: &val,
    };
    let seeds = cfg.seed_list();
    let exec = execution(cfg);
    let study = cfg.study.clone();
    let dir;
    match study.as_str() {
        "weighting" => {
            let r = run_weighting_study(&cfg.train, &WeightingMode::ALL, &seeds, inputs, exec)?;
            dir = run_dir(cfg, "ablate-weighting")?;
            r.write(&dir, "")?;
        }
        "tprime" => {
            let r = run_tprime_ablation(&cfg.train, &DEFAULT_TPRIME_VALUES, &seeds, inputs, exec)?;
            dir = run_dir(cfg, "ablate-tprime")?;
            r.result.write(&dir, "")?;
            write(&dir.join("best.csv"), &format!("best_entropy_temperature\n{:?}\n", r.best))?;
        }
        "beta" => {
            let r = run_beta_sweep(&cfg.train, &DEFAULT_BETA_VALUES, &seeds, inputs, exec)?;
            dir = run_dir(cfg, "ablate-beta")?;
            r.dkd.write(&dir, "dkd_")?;
            r.ea_dkd.write(&dir, "ea_dkd_")?;
            write(&dir.join("variance.csv"), &r.summary_csv())?;
        }
        other => {
            return Err(Error::Config(format!(
                "unknown study {other:?} (expected weighting, tprime or beta)"
            )))
        }
    }
    finish(&dir, cfg)
}

pub fn quartile_report(_cfg: &RunConfig, log: &Path) -> Result<()> {
    let records = read_train_log(log)?;
    print!("{}", quartile_report_csv(&records));
    Ok(())
}
