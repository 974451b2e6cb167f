//! CSV artifact: `# key=value` header comments for every config field, one
//! `step,p25,p50,p75` row per curve point, `\n` endings, six significant
//! digits. Written to a temp file and renamed so readers never see a partial
//! artifact.

use std::io::Write;
use std::path::Path;

use super::{CurvePoint, RunConfig};

/// Formats with six significant digits, plain decimal.
pub fn fmt_sig(v: f64) -> String {
    if v == 0.0 {
        return "0.00000".to_string();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let mag = v.abs().log10().floor() as i32;
    let decimals = (5 - mag).max(0) as usize;
    format!("{v:.decimals$}")
}

pub fn render_csv(cfg: &RunConfig, points: &[CurvePoint]) -> String {
    let mut out = String::new();
    let map = match (&cfg.map_path, cfg.env) {
        (Some(p), _) => p.display().to_string(),
        (None, crate::envs::EnvId::Office) => "builtin:office".to_string(),
        (None, crate::envs::EnvId::Craft) => format!("generated:{}", cfg.craft_maps),
    };
    let mut meta = |k: &str, v: String| {
        out.push_str("# ");
        out.push_str(k);
        out.push('=');
        out.push_str(&v);
        out.push('\n');
    };
    meta("env", cfg.env.to_string());
    meta("map", map);
    meta("tasks", cfg.tasks.to_string());
    meta("algo", cfg.algo.to_string());
    meta("rs", cfg.rs.to_string());
    meta("trials", cfg.trials.to_string());
    meta("steps", cfg.total_steps.to_string());
    meta("seed", cfg.seed.to_string());
    meta("gamma", cfg.learner.gamma.to_string());
    meta("alpha", cfg.learner.alpha.to_string());
    meta("epsilon", cfg.learner.epsilon.to_string());
    meta("q_init", cfg.learner.q0.to_string());
    meta("rplus", cfg.learner.rplus.to_string());
    meta("rminus", cfg.learner.rminus.to_string());
    meta("prune_self_loops", cfg.learner.prune_self_loops.to_string());
    meta("prune_bad", cfg.learner.prune_bad.to_string());
    meta("window", cfg.window.to_string());
    meta("eval_every", cfg.eval_every.to_string());
    meta("max_episode_steps", cfg.max_episode_steps.to_string());
    meta("greedy_every", cfg.greedy_every.to_string());
    meta("craft_maps", cfg.craft_maps.to_string());

    out.push_str("step,p25,p50,p75\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{},{}\n",
            p.step,
            fmt_sig(p.p25),
            fmt_sig(p.p50),
            fmt_sig(p.p75)
        ));
    }
    out
}

/// Write-then-rename; never leaves a partial file at `path`.
pub fn emit_csv(path: &Path, cfg: &RunConfig, points: &[CurvePoint]) -> std::io::Result<()> {
    let text = render_csv(cfg, points);
    let tmp = path.with_extension("csv.tmp");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(text.as_bytes())?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)
}
