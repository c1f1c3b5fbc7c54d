import json
import os

import numpy as np

from reachverify.cli import main
from reachverify.dynamics import ActionBounds, MlpPolicy, save_policy
from reachverify.error_bounds import DisturbanceBounds, save_bounds
from reachverify.geometry import Ball, ShapeSet, build_grid
from reachverify.nn import MlpModel, ModelMeta, save_model
from reachverify.scene import Scene, save_scene


def write_zero_model(path, n_state=2, n_action=2, dt=0.1):
    n_in = n_state + n_action
    model = MlpModel(
        layer_sizes=(n_in, 4, n_state),
        weights=(np.zeros((n_in, 4)), np.zeros((4, n_state))),
        biases=(np.zeros(4), np.zeros(n_state)),
        hidden_activation="tanh",
        output_activation="tanh",
        output_scale=np.ones(n_state),
        meta=ModelMeta(n_state=n_state, n_action=n_action, dt_env=dt),
    )
    save_model(model, path)
    return model


def write_zero_policy(path, n_state=2, n_action=2):
    bounds = ActionBounds(np.full(n_action, -1.0), np.full(n_action, 1.0))
    model = MlpModel(
        layer_sizes=(n_state, 4, n_action),
        weights=(np.zeros((n_state, 4)), np.zeros((4, n_action))),
        biases=(np.zeros(4), np.zeros(n_action)),
        hidden_activation="tanh",
        output_activation="tanh",
        output_scale=np.ones(n_action),
        meta=ModelMeta(n_state=n_state, n_action=n_action, dt_env=0.1, role="policy"),
    )
    policy = MlpPolicy(model, bounds)
    save_policy(policy, path)


def make_scene(tmp_path, obstacle_center, obstacle_radius, counts=(31, 31)):
    grid = build_grid([-1, -1], [1, 1], counts)
    scene = Scene(
        grid=grid,
        initial_set=ShapeSet((Ball([0.0, 0.0], 0.3),)),
        goal_set=ShapeSet((Ball([0.8, 0.8], 0.1),)),
        obstacles=ShapeSet((Ball(obstacle_center, obstacle_radius),)),
    )
    path = tmp_path / "scene.json"
    save_scene(scene, path)
    return path


def verify_config(tmp_path, scene_path, horizon=0.4):
    model_path = tmp_path / "model.json"
    policy_path = tmp_path / "policy.json"
    bounds_path = tmp_path / "bounds.json"
    write_zero_model(model_path)
    write_zero_policy(policy_path)
    save_bounds(DisturbanceBounds.zero(2, dt_env=0.1), bounds_path)
    config = {
        "scene": str(scene_path),
        "model": str(model_path),
        "policy": str(policy_path),
        "bounds": str(bounds_path),
        "solver": {"horizon": horizon, "snapshot_stride": 5, "convergence_eps": 0.0},
    }
    cfg_path = tmp_path / "verify.json"
    cfg_path.write_text(json.dumps(config))
    return cfg_path


def test_verify_safe_scene_exits_zero(tmp_path, capsys):
    scene_path = make_scene(tmp_path, [0.8, 0.8], 0.1)
    cfg = verify_config(tmp_path, scene_path)
    out = tmp_path / "run"
    code = main(["verify", "--config", str(cfg), "--out", str(out)])
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert report["verdict"] == "safe"
    assert report["frt_intersects_obstacle"] == [False]
    assert (out / "frt" / "manifest.json").exists()


def test_verify_strict_unsafe_exits_four(tmp_path):
    scene_path = make_scene(tmp_path, [0.0, 0.0], 0.1)  # obstacle inside start set
    cfg = verify_config(tmp_path, scene_path)
    out = tmp_path / "run"
    code = main(["verify", "--config", str(cfg), "--out", str(out), "--strict"])
    assert code == 4
    report = json.loads((out / "report.json").read_text())
    assert report["verdict"] == "unsafe"
    # without --strict the same run exits 0
    code2 = main(["verify", "--config", str(cfg), "--out", str(tmp_path / "run2")])
    assert code2 == 0


def test_missing_config_names_file(tmp_path, capsys):
    code = main(["verify", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o")])
    assert code == 2
    assert "nope.json" in capsys.readouterr().err


def test_corrupt_model_exits_config_error(tmp_path):
    scene_path = make_scene(tmp_path, [0.8, 0.8], 0.1)
    cfg = verify_config(tmp_path, scene_path)
    (tmp_path / "model.json").write_text("{broken")
    code = main(["verify", "--config", str(cfg), "--out", str(tmp_path / "run")])
    assert code == 2


def test_nonfinite_model_exits_numerical_failure(tmp_path):
    scene_path = make_scene(tmp_path, [0.8, 0.8], 0.1, counts=(11, 11))
    cfg = verify_config(tmp_path, scene_path, horizon=0.3)
    # corrupt one weight to infinity: rates turn non-finite during the solve
    doc = json.loads((tmp_path / "model.json").read_text())
    doc["weights"][0][0][0] = 1e400
    (tmp_path / "model.json").write_text(json.dumps(doc))
    with np.errstate(invalid="ignore"):
        code = main(["verify", "--config", str(cfg), "--out", str(tmp_path / "run")])
    assert code == 3


def test_safe_set_fractions(tmp_path):
    # far obstacle, zero dynamics: everything safe
    scene_path = make_scene(tmp_path, [0.8, 0.8], 0.1)
    cfg = verify_config(tmp_path, scene_path)
    out = tmp_path / "safe"
    assert main(["safe-set", "--config", str(cfg), "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["verdict"] == "completely_safe"
    assert report["safe_fraction"] == 1.0

    # obstacle swallowing the initial set: nothing safe
    scene2 = make_scene(tmp_path, [0.0, 0.0], 0.8)
    cfg2 = verify_config(tmp_path, scene2)
    out2 = tmp_path / "unsafe"
    assert main(["safe-set", "--config", str(cfg2), "--out", str(out2)]) == 0
    report2 = json.loads((out2 / "report.json").read_text())
    assert report2["verdict"] == "completely_unsafe"
    assert report2["safe_fraction"] == 0.0
    assert (out2 / "safe_mask.csv").exists()
    assert (out2 / "unsafe_mask.csv").exists()


def test_safe_set_with_mc_comparison(tmp_path):
    scene_path = make_scene(tmp_path, [0.8, 0.8], 0.1)
    cfg_doc = json.loads((verify_config(tmp_path, scene_path)).read_text())
    cfg_doc["mc"] = {"plant": "learned", "num_samples": 50, "draws": 0, "horizon": 0.4}
    cfg = tmp_path / "cfg_mc.json"
    cfg.write_text(json.dumps(cfg_doc))
    out = tmp_path / "mc_run"
    assert main(["safe-set", "--config", str(cfg), "--out", str(out), "--compare-mc"]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["mc_comparison"]["agreement"] == 1.0
    assert (out / "ground_truth.csv").exists()


def test_verify_with_inline_constant_policy(tmp_path):
    scene_path = make_scene(tmp_path, [0.8, 0.8], 0.1)
    config = {
        "scene": str(scene_path),
        "plant": "true_land",
        "policy": {
            "kind": "constant",
            "action": [0.0, 0.0],
            "action_lo": [0.0, -3.14159],
            "action_hi": [1.0, 3.14159],
        },
        "solver": {"horizon": 0.3, "snapshot_stride": 10, "convergence_eps": 0.0},
    }
    cfg = tmp_path / "inline.json"
    cfg.write_text(json.dumps(config))
    out = tmp_path / "inline_run"
    assert main(["verify", "--config", str(cfg), "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["verdict"] == "safe"
    assert report["provenance"]["policy"] == "inline:constant"


def test_oracle_command(tmp_path):
    scene_path = make_scene(tmp_path, [0.8, 0.8], 0.1)
    cfg = verify_config(tmp_path, scene_path)
    doc = json.loads(cfg.read_text())
    doc.update({"horizon": 0.3, "dt": 0.1, "num_samples": 20, "draws": 1})
    cfg.write_text(json.dumps(doc))
    out = tmp_path / "oracle"
    assert main(["oracle", "--config", str(cfg), "--out", str(out)]) == 0
    lines = (out / "ground_truth.csv").read_text().strip().split("\n")
    assert len(lines) == 21
    manifest = json.loads((out / "oracle_manifest.json").read_text())
    assert manifest["safe_fraction"] == 1.0


def test_train_command_and_seed_reproducibility(tmp_path):
    grid_scene = make_scene(tmp_path, [0.8, 0.8], 0.1)
    config = {
        "env": "true_land",
        "scene": str(grid_scene),
        "initial_samples": 120,
        "outer_iterations": 1,
        "samples_per_iteration": 50,
        "distill_states": 110,
        "mpc": {"horizon": 3, "candidates": 8},
        "training": {"epochs": 30},
        "policy_training": {"epochs": 20, "hidden_sizes": [8]},
        "dt_env": 0.1,
    }
    cfg = tmp_path / "train.json"
    cfg.write_text(json.dumps(config))
    out1 = tmp_path / "t1"
    out2 = tmp_path / "t2"
    assert main(["train", "--config", str(cfg), "--seed", "3", "--out", str(out1)]) == 0
    assert main(["train", "--config", str(cfg), "--seed", "3", "--out", str(out2)]) == 0
    for name in ("model.json", "policy.json", "bounds.json", "dataset.csv", "log.json"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()
    m1 = json.loads((out1 / "manifest.json").read_text())
    m2 = json.loads((out2 / "manifest.json").read_text())
    assert m1["hashes"] == m2["hashes"]


def test_export_plots_2d_and_idempotent(tmp_path):
    scene_path = make_scene(tmp_path, [0.8, 0.8], 0.1)
    cfg = verify_config(tmp_path, scene_path)
    out = tmp_path / "run"
    assert main(["verify", "--config", str(cfg), "--out", str(out)]) == 0
    assert main(["export-plots", "--run", str(out)]) == 0
    slices = sorted(os.listdir(out / "slices"))
    n_snapshots = len(json.loads((out / "frt" / "manifest.json").read_text())["snapshots"])
    csvs = [s for s in slices if s.startswith("frt_")]
    assert len(csvs) == n_snapshots
    assert "geometry.csv" in slices
    before = {s: (out / "slices" / s).read_bytes() for s in slices}
    assert main(["export-plots", "--run", str(out)]) == 0
    after = {s: (out / "slices" / s).read_bytes() for s in sorted(os.listdir(out / "slices"))}
    assert before == after


def test_export_plots_3d_slices(tmp_path):
    grid = build_grid([-1, -1, -1], [1, 1, 1], [9, 9, 9])
    scene = Scene(
        grid=grid,
        initial_set=ShapeSet((Ball([0.0, 0.0, 0.0], 0.3),)),
        goal_set=ShapeSet((Ball([0.8, 0.8, 0.8], 0.1),)),
        obstacles=ShapeSet((Ball([0.7, 0.7, 0.0], 0.2),)),
    )
    scene_path = tmp_path / "scene3d.json"
    save_scene(scene, scene_path)
    model_path = tmp_path / "model3.json"
    policy_path = tmp_path / "policy3.json"
    write_zero_model(model_path, n_state=3, n_action=3)
    write_zero_policy(policy_path, n_state=3, n_action=3)
    config = {
        "scene": str(scene_path),
        "model": str(model_path),
        "policy": str(policy_path),
        "solver": {"horizon": 0.2, "snapshot_stride": 50, "convergence_eps": 0.0},
    }
    cfg = tmp_path / "cfg3.json"
    cfg.write_text(json.dumps(config))
    out = tmp_path / "run3"
    assert main(["verify", "--config", str(cfg), "--out", str(out)]) == 0
    # 3-D export without slice heights is a config error
    assert main(["export-plots", "--run", str(out)]) == 2
    assert main(["export-plots", "--run", str(out), "--z", "0.0,0.5"]) == 0
    slices = os.listdir(out / "slices")
    assert any("z0p0" in s for s in slices)
    assert any("geometry_" in s for s in slices)


def test_no_subcommand_exits_config_error(capsys):
    assert main([]) == 2
