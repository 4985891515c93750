use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::Vector3;

use hop_core::canonical::{format_float, to_canonical_string, value_to_canonical};
use hop_core::estimator::{parse_replay_csv, FilterState, STANDARD_GRAVITY};
use hop_core::model::{forward_kinematics, inverse_dynamics, joint};
use hop_core::motion::play_tick;
use hop_core::servo::{feedforward_offsets, package_commands, write_command_log};
use hop_core::sim::{run_metadata, run_scenario_to, Resources, Scenario, TrunkScript};
use hop_core::vision::{calibrate_extrinsics, parse_correspondences_csv, PoseContext};
use hop_core::{CameraModel, FusedAngles, Hemisphere, JointPose, Motion, PlayState, RotationQuat};

use crate::config::RuntimeConfig;
use crate::service::{playback_scenario, router, AppState};
use crate::store::MotionStore;
use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "hop", version, about = "Humanoid control stack tools")]
pub struct Cli {
    /// Runtime configuration file (JSON). `HOP_<KEY>` variables override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a simulation scenario and write its CSV log.
    GaitSim {
        scenario: PathBuf,
        /// Log path; defaults to `<log_dir>/<scenario name>.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Play a stored motion. Prints servo commands, or runs it in the
    /// simulator with `--sim`.
    PlayMotion {
        name: String,
        #[arg(long)]
        sim: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the attitude filter over a recorded IMU stream.
    FilterReplay { csv: PathBuf },
    /// Fit the camera extrinsics to ground-point correspondences.
    CalibrateCamera {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        points: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Trunk origin height above the ground, m; standing height if unset.
        #[arg(long)]
        trunk_height: Option<f64>,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        trunk_pitch: f64,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        trunk_roll: f64,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        neck_yaw: f64,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        head_pitch: f64,
    },
    /// Convert between a quaternion `w x y z` and fused angles
    /// `yaw pitch roll hemisphere`.
    ConvertOrientation {
        from: OrientationKind,
        #[arg(num_args = 4, allow_negative_numbers = true, value_names = ["A", "B", "C", "D"])]
        values: Vec<f64>,
    },
    /// Serve the motion store over HTTP.
    Serve {
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        bind: Option<String>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OrientationKind {
    Quat,
    Fused,
}

fn runtime<E: std::fmt::Display>(e: E) -> CliError {
    CliError::runtime(e.to_string())
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::runtime(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
}

pub fn execute(cli: Cli, vars: Vec<(String, String)>, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = RuntimeConfig::load(cli.config.as_deref(), vars)?;
    match cli.command {
        Command::GaitSim { scenario, out: log } => gait_sim(&cfg, &scenario, log, out),
        Command::PlayMotion { name, sim, seed, out: log } => play_motion(&cfg, &name, sim, seed, log, out),
        Command::FilterReplay { csv } => filter_replay(&cfg, &csv, out),
        Command::CalibrateCamera {
            model,
            points,
            out: dest,
            trunk_height,
            trunk_pitch,
            trunk_roll,
            neck_yaw,
            head_pitch,
        } => {
            let mut q = JointPose::zeros();
            q[joint::NECK_YAW] = neck_yaw;
            q[joint::HEAD_PITCH] = head_pitch;
            let trunk = FusedAngles::tilt(trunk_pitch, trunk_roll);
            calibrate_camera(&cfg, &model, &points, &dest, q, trunk, trunk_height, out)
        }
        Command::ConvertOrientation { from, values } => convert_orientation(from, &values, out),
        Command::Serve { port, bind } => serve(cfg, port, bind, out),
    }
}

fn write_run(
    scenario: &Scenario,
    res: &Resources,
    path: &Path,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::runtime(format!("{}: {e}", dir.display())))?;
    }
    let file = std::fs::File::create(path).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
    let mut w = std::io::BufWriter::new(file);
    let summary = run_scenario_to(scenario, res, &mut w).map_err(runtime)?;
    w.flush().map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
    let meta = value_to_canonical(&run_metadata(scenario, &summary));
    write_file(&path.with_extension("json"), &meta)?;
    writeln!(
        out,
        "{}: {} rows -> {} (tilt rms {:.3} deg{})",
        scenario.name,
        summary.rows,
        path.display(),
        summary.tilt_rms.to_degrees(),
        summary
            .completed_at
            .map(|t| format!(", completed at {t:.2} s"))
            .unwrap_or_default()
    )
    .map_err(runtime)
}

fn gait_sim(cfg: &RuntimeConfig, path: &Path, log: Option<PathBuf>, out: &mut dyn Write) -> Result<(), CliError> {
    let scenario = Scenario::from_json(&read(path)?).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
    let store = existing_store(cfg)?;
    let res = cfg.resources(store.as_ref())?;
    let log = log.unwrap_or_else(|| cfg.log_dir.join(format!("{}.csv", scenario.name)));
    write_run(&scenario, &res, &log, out)
}

/// The configured store if its directory exists; commands other than
/// `serve` never create it.
fn existing_store(cfg: &RuntimeConfig) -> Result<Option<MotionStore>, CliError> {
    if cfg.motions_dir.is_dir() {
        MotionStore::open(&cfg.motions_dir).map(Some).map_err(runtime)
    } else {
        Ok(None)
    }
}

fn play_motion(
    cfg: &RuntimeConfig,
    name: &str,
    sim: bool,
    seed: u64,
    log: Option<PathBuf>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let store = existing_store(cfg)?;
    let res = cfg.resources(store.as_ref())?;
    let motion: &Motion = res
        .motions
        .get(name)
        .ok_or_else(|| CliError::runtime(format!("no motion named `{name}`")))?;
    if sim {
        let scenario = playback_scenario(motion, seed, cfg.tick_rate, TrunkScript::default());
        let log = log.unwrap_or_else(|| cfg.log_dir.join(format!("{}.csv", scenario.name)));
        return write_run(&scenario, &res, &log, out);
    }

    // Open loop with a level trunk: the command stream a servo bus would see.
    let dt = 1.0 / cfg.tick_rate;
    let level = FusedAngles::default();
    let gravity = Vector3::new(0.0, 0.0, -STANDARD_GRAVITY);
    let zero = JointPose::zeros();
    let mut state = PlayState::default();
    let mut w = std::io::BufWriter::new(out);
    loop {
        let t = state.t;
        let (next, o) = play_tick(motion, &state, &level, dt).map_err(runtime)?;
        let (targets, _) = res.model.clamp_to_limits(&JointPose(o.frame.pos));
        let tau = inverse_dynamics(&res.model, &targets, &zero, &zero, gravity);
        let offsets = feedforward_offsets(&tau, &res.servo).map_err(runtime)?;
        let set = package_commands(&targets, &offsets, &o.frame.eff, &res.servo).map_err(runtime)?;
        write_command_log(&mut w, t, &set).map_err(runtime)?;
        if o.finished {
            break;
        }
        state = next;
    }
    w.flush().map_err(runtime)
}

fn filter_replay(cfg: &RuntimeConfig, path: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let samples = parse_replay_csv(&read(path)?).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
    let res = cfg.resources(None)?;
    let mut state = FilterState::new(res.filter, None).map_err(runtime)?;
    let mut w = std::io::BufWriter::new(out);
    writeln!(w, "t,yaw,pitch,roll,hemisphere").map_err(runtime)?;
    let mut prev = None;
    for s in &samples {
        let dt = prev.map_or(1.0 / cfg.tick_rate, |p| s.timestamp - p);
        prev = Some(s.timestamp);
        state = state.update(s, dt).map_err(runtime)?;
        let f = state.fused();
        writeln!(w, "{},{},{},{},{}", s.timestamp, f.yaw, f.pitch, f.roll, f.hemisphere.sign()).map_err(runtime)?;
    }
    w.flush().map_err(runtime)
}

#[allow(clippy::too_many_arguments)]
fn calibrate_camera(
    cfg: &RuntimeConfig,
    model_path: &Path,
    points_path: &Path,
    dest: &Path,
    q: JointPose,
    trunk: FusedAngles,
    trunk_height: Option<f64>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let camera = CameraModel::from_json(&read(model_path)?)
        .map_err(|e| CliError::runtime(format!("{}: {e}", model_path.display())))?;
    let points = parse_correspondences_csv(&read(points_path)?)
        .map_err(|e| CliError::runtime(format!("{}: {e}", points_path.display())))?;
    let robot = cfg.resources(None)?.model;
    let fk = forward_kinematics(&robot, &q);
    let head = *fk.get("head_pitch").expect("model has a head");
    let trunk_height = trunk_height.unwrap_or_else(|| {
        // Standing height: trunk origin above the lower sole.
        let l = fk.get("l_sole").map_or(0.0, |p| p.translation.z);
        let r = fk.get("r_sole").map_or(0.0, |p| p.translation.z);
        -l.min(r)
    });
    let ctx = PoseContext { head, trunk, trunk_height };
    let result = calibrate_extrinsics(&points, &camera.extrinsic, &camera, &ctx).map_err(runtime)?;
    let calibrated = CameraModel {
        extrinsic: result.extrinsic,
        ..camera
    };
    write_file(dest, &to_canonical_string(&calibrated).map_err(runtime)?)?;
    writeln!(
        out,
        "rms {:.4} px (initial {:.4} px), {} evaluations -> {}",
        result.rms,
        result.initial_rms,
        result.evaluations,
        dest.display()
    )
    .map_err(runtime)
}

fn convert_orientation(from: OrientationKind, v: &[f64], out: &mut dyn Write) -> Result<(), CliError> {
    let line = match from {
        OrientationKind::Quat => {
            let q = RotationQuat::new(v[0], v[1], v[2], v[3]).map_err(runtime)?;
            let f = FusedAngles::from_quat(&q);
            let hemi = if f.hemisphere == Hemisphere::Upper { "+1" } else { "-1" };
            format!("{} {} {} {hemi}", format_float(f.yaw), format_float(f.pitch), format_float(f.roll))
        }
        OrientationKind::Fused => {
            if v[3] != 1.0 && v[3] != -1.0 {
                return Err(CliError::usage("hemisphere must be +1 or -1"));
            }
            let f = FusedAngles::new(v[0], v[1], v[2], Hemisphere::from_sign(v[3]));
            let q = f.to_quat().map_err(runtime)?;
            q.to_array().map(format_float).join(" ")
        }
    };
    writeln!(out, "{line}").map_err(runtime)
}

fn serve(cfg: RuntimeConfig, port: Option<u16>, bind: Option<String>, out: &mut dyn Write) -> Result<(), CliError> {
    let store = MotionStore::open_or_seed(&cfg.motions_dir).map_err(runtime)?;
    let res = cfg.resources(None)?;
    let state = AppState::new(store, res, cfg.tick_rate);
    let addr = format!(
        "{}:{}",
        bind.unwrap_or_else(|| cfg.bind_address.clone()),
        port.unwrap_or(cfg.port)
    );
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(runtime)?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| CliError::runtime(format!("{addr}: {e}")))?;
        let local = listener.local_addr().map_err(runtime)?;
        writeln!(out, "serving {} on http://{local}", cfg.motions_dir.display()).map_err(runtime)?;
        out.flush().map_err(runtime)?;
        axum::serve(listener, router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(runtime)
    })
}
