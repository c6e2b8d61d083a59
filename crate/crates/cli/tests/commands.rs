use std::path::PathBuf;
use std::process::Command;

const BIN: &str = env!("CARGO_BIN_EXE_wfvar");

fn out(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("commands").join(name)
}

fn run(args: &[&str], dir: &PathBuf) -> Option<i32> {
    Command::new(BIN).args(args).arg("--out").arg(dir).output().expect("run wfvar").status.code()
}

#[test]
fn invalid_config_exits_2() {
    assert_eq!(run(&["action", "--no_such_key", "1"], &out("bad_key")), Some(2));
    assert_eq!(run(&["action", "--m1", "-1"], &out("bad_mass")), Some(2));
}

#[test]
fn short_arc_exits_5() {
    assert_eq!(run(&["circular", "--arc", "0.1", "--nodes_per_turn", "64"], &out("short_arc")), Some(5));
}

#[test]
fn config_file_and_trajectory_input() {
    let dir = out("file_input");
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("run.cfg");
    std::fs::write(&cfg, "# circular data\nr12 = 100\narc = 3.14159\nnodes_per_turn = 64\n").unwrap();
    let cfg_s = cfg.to_str().unwrap();
    assert_eq!(run(&["circular", "--config", cfg_s], &dir), Some(0));
    assert_eq!(run(&["action", "--config", cfg_s], &dir), Some(0));
    let direct = std::fs::read_to_string(dir.join("action.csv")).unwrap();
    let traj = dir.join("trajectory.csv");
    let from_file = out("file_input_b");
    assert_eq!(run(&["action", "--input", traj.to_str().unwrap()], &from_file), Some(0));
    let read_back = std::fs::read_to_string(from_file.join("action.csv")).unwrap();
    assert_eq!(direct, read_back);
}
