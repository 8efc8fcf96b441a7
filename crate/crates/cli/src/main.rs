use anyhow::{bail, Result};
use clap::Parser;
use diacritize_cli::args::{Cli, Resolved};
use diacritize_cli::{
    cmd_corrupt, cmd_evaluate, cmd_export_attention, cmd_gen_toy, cmd_grad_check, cmd_predict, cmd_train,
    history_document,
};

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().resolve()? {
        Resolved::Train(o) => {
            let h = cmd_train(&o)?;
            println!("{}", serde_json::to_string_pretty(&history_document(&h))?);
        }
        Resolved::Predict(o) => {
            let n = cmd_predict(&o)?;
            log::info!("wrote {n} lines to {}", o.output.display());
        }
        Resolved::Evaluate(o) => println!("{}", serde_json::to_string_pretty(&cmd_evaluate(&o)?)?),
        Resolved::Corrupt(o) => {
            let stats = cmd_corrupt(&o)?;
            log::info!("achieved CER {:?}", stats.rate());
        }
        Resolved::GenToy(o) => println!("{}", serde_json::to_string_pretty(&cmd_gen_toy(&o)?)?),
        Resolved::GradCheck(o, tolerance) => {
            let r = cmd_grad_check(&o)?;
            println!("{}", serde_json::to_string_pretty(&r)?);
            if r.max_rel_error >= tolerance {
                bail!("max relative error {:.3e} at {} is not below {tolerance:e}", r.max_rel_error, r.worst_param);
            }
        }
        Resolved::ExportAttention(o) => {
            let m = cmd_export_attention(&o)?;
            log::info!("wrote {} heads of {}x{} to {}", m.heads, m.lq, m.lk, o.output.display());
        }
    }
    Ok(())
}
