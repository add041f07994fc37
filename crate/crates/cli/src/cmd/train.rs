//! `bocf train`: fit a model and leave a reproducible run directory.

use std::cell::RefCell;

use bocf_core::bocf::BocfModel;
use bocf_core::imageio::DatasetManifest;
use bocf_core::train::train;

use crate::config::{pick, RunConfig};
use crate::output::{create_run_dir, write_config, write_loss_csv};
use crate::{CliError, TrainArgs};

pub fn run(args: &TrainArgs) -> Result<(), CliError> {
    let file = RunConfig::load(&args.common.config)?;
    let mut resolved =
        super::resolve_training(&args.common, &args.manifest, &args.model, &args.optim)?;
    let checkpoint_interval = pick(&args.checkpoint_interval, &file.checkpoint_interval, 0);
    resolved.echo["checkpoint_interval"] = checkpoint_interval.into();

    let manifest = DatasetManifest::load(&resolved.manifest_path)?;
    let run_dir = create_run_dir(&resolved.out_dir, "train")?;
    write_config(&run_dir, &resolved.echo)?;

    let mut model = BocfModel::new(resolved.model_cfg.clone(), resolved.seed)?;
    // The progress callback cannot return errors, so checkpoint failures are
    // parked here and surfaced after training.
    let checkpoint_failure: RefCell<Option<CliError>> = RefCell::new(None);
    let report = train(
        &mut model,
        &manifest,
        &resolved.tcfg,
        &resolved.acfg,
        |epoch, loss, snapshot| {
            eprintln!("epoch {:5}  mean angular error {:9.4} deg", epoch, loss);
            if checkpoint_interval > 0 && (epoch + 1) % checkpoint_interval == 0 {
                let path = run_dir.join(format!("model-epoch-{:04}.ckpt", epoch));
                if let Err(e) = snapshot.save(&path) {
                    checkpoint_failure.borrow_mut().get_or_insert(e.into());
                }
            }
        },
    )?;
    if let Some(failure) = checkpoint_failure.into_inner() {
        return Err(failure);
    }

    model.save(run_dir.join("model.ckpt"))?;
    write_loss_csv(&run_dir, &report.loss_history)?;
    println!("{}", run_dir.display());
    Ok(())
}
