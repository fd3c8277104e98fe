"""Command-line surface and the REST API."""
import io
import json
import time
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from crosscbam import create_app
from crosscbam.cli import EXIT_FAILED, EXIT_OK, EXIT_USAGE
from crosscbam.cli import main as cli_main
from crosscbam.data.image_io import write_image

SMALL_FLAGS = ["--base-ch", "16", "--channels", "32", "--classes", "3"]
CONFIG_DIR = Path(__file__).parent / "configs"


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------

def test_count_prints_parameters(capsys):
    assert cli_main(["count", "--no-flops"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "11.328" in out
    assert "backbone" in out and "5,308,448" in out


def test_count_with_flops_and_csv(tmp_path, capsys):
    csv = tmp_path / "count.csv"
    assert cli_main(["count", *SMALL_FLAGS, "--input", "64x64", "--csv", str(csv)]) == EXIT_OK
    assert "per-module GMACs" in capsys.readouterr().out
    assert csv.read_text().startswith("name,")


def test_usage_and_configuration_errors_exit_2():
    assert cli_main([]) == EXIT_USAGE
    assert cli_main(["explode"]) == EXIT_USAGE
    assert cli_main(["count", "--no-flops", "--variant", "xl"]) == EXIT_USAGE
    assert cli_main(["count", "--no-flops", "--dilations", "3,3"]) == EXIT_USAGE
    assert cli_main(["gradcheck", "--ops", "nope"]) == EXIT_USAGE
    assert cli_main(["verify", "--suites", "nope"]) == EXIT_USAGE
    assert cli_main(["train", "--set", "no_equals_sign"]) == EXIT_USAGE


def test_malformed_sizes_exit_2(tmp_path, capsys):
    assert cli_main(["count", "--no-flops", "--input", "1,3,x"]) == EXIT_USAGE
    assert "--input must look like HxW" in capsys.readouterr().err
    assert cli_main(["bench", *SMALL_FLAGS, "--input", "0x32"]) == EXIT_USAGE
    assert cli_main(["gen-data", "--out", str(tmp_path), "--canvas", "axb"]) == EXIT_USAGE
    assert not any(tmp_path.iterdir())


def test_gradcheck_subset(tmp_path):
    report = tmp_path / "grad.json"
    assert cli_main(["gradcheck", "--ops", "relu,sigmoid,conv2d", "--seeds", "2", "--json", str(report)]) == EXIT_OK
    data = json.loads(report.read_text())
    assert data["total"] == 3 and data["failed"] == 0


def test_verify_oracles(capsys):
    assert cli_main(["verify", "--suites", "oracles,invariants"]) == EXIT_OK
    assert "checks passed" in capsys.readouterr().out


def test_gen_data_then_infer_directory(tmp_path, capsys):
    data = tmp_path / "data"
    assert cli_main(["gen-data", "--out", str(data), "--n", "2", "--canvas", "32x48", "--color"]) == EXIT_OK
    assert sorted(p.name for p in (data / "images").iterdir()) == ["synthetic_00000.png", "synthetic_00001.png"]
    assert (data / "color" / "synthetic_00001.png").exists()
    assert json.loads((data / "spec.json").read_text())["canvas"] == [32, 48]
    capsys.readouterr()

    out = tmp_path / "masks"
    out.mkdir()
    assert cli_main(["infer", "--image", str(data / "images"), "--output", str(out), "--overlay", *SMALL_FLAGS]) == EXIT_OK
    lines = [json.loads(line) for line in capsys.readouterr().out.splitlines()]
    assert len(lines) == 2 and lines[0]["shape"] == [32, 48]
    assert (out / "synthetic_00000_mask.png").exists()
    assert (out / "synthetic_00000_overlay.png").exists()


def test_infer_on_an_empty_directory(tmp_path):
    assert cli_main(["infer", "--image", str(tmp_path), "--output", str(tmp_path / "o.png")]) == EXIT_USAGE


def test_train_then_infer_from_checkpoint(tmp_path, capsys):
    argv = [
        "train", "--config", str(CONFIG_DIR / "toy.cfg"), "--max-iter", "2", "--batch-size", "2",
        "--output-dir", str(tmp_path / "runs"),
        "--set", "n_train=2", "--set", "n_val=1", "--set", "canvas=32x32", "--set", "crop=32x32",
        "--set", "channels=32",
    ]
    assert cli_main(argv) == EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    assert summary["status"] == "completed" and summary["iterations"] == 2
    checkpoint = summary["checkpoints"][-1]

    image = tmp_path / "img.png"
    write_image(image, np.random.default_rng(0).random((3, 40, 40)))
    target = tmp_path / "mask.png"
    assert cli_main(["infer", "--image", str(image), "--output", str(target), "--checkpoint", checkpoint]) == EXIT_OK
    assert Image.open(target).size == (40, 40)

    mismatch = ["infer", "--image", str(image), "--output", str(target), "--checkpoint", checkpoint, "--classes", "5"]
    assert cli_main(mismatch) == EXIT_USAGE


def test_bad_checkpoint_file_fails(tmp_path):
    bad = tmp_path / "bad.xcbm"
    bad.write_bytes(b"XCBM\x01\x00")
    image = tmp_path / "img.png"
    write_image(image, np.zeros((3, 8, 8)))
    assert cli_main(["infer", "--image", str(image), "--output", str(tmp_path / "m.png"), "--checkpoint", str(bad)]) == EXIT_FAILED


def test_bench_small_model(capsys):
    assert cli_main(["bench", *SMALL_FLAGS, "--input", "32x32", "--warmup", "1", "--reps", "10"]) == EXIT_OK
    assert "fps" in capsys.readouterr().out
    assert cli_main(["bench", *SMALL_FLAGS, "--input", "32x32", "--reps", "3"]) == EXIT_USAGE


# ---------------------------------------------------------------------------
# REST API
# ---------------------------------------------------------------------------

@pytest.fixture
def client():
    app = create_app("testing")
    return app.test_client()


def _png_bytes(shape=(32, 32)):
    buffer = io.BytesIO()
    pixels = (np.random.default_rng(0).random(shape + (3,)) * 255).astype(np.uint8)
    Image.fromarray(pixels).save(buffer, format="PNG")
    buffer.seek(0)
    return buffer


def test_health(client):
    response = client.get("/api/v1/health")
    assert response.status_code == 200
    assert response.get_json()["status"] == "ok"


def test_profile_endpoint(client):
    response = client.get("/api/v1/models/profile?base_ch=16&channels=32&num_classes=3&input=64x64")
    assert response.status_code == 200
    body = response.get_json()
    assert body["config"]["decoder_ch"] == 32
    assert body["flops"]["input_shape"] == [1, 3, 64, 64]
    assert body["params"] == sum(body["param_breakdown"].values())


def test_profile_endpoint_errors(client):
    response = client.get("/api/v1/models/profile?width=3")
    assert response.status_code == 400
    assert "width" in response.get_json()["error"]
    response = client.get("/api/v1/models/profile?variant=xl")
    assert response.status_code == 400
    assert response.get_json()["type"] == "ConfigurationError"
    response = client.get("/api/v1/models/profile?input=64x")
    assert response.status_code == 400
    assert response.get_json()["type"] == "UsageError"


def test_run_lifecycle(client, tmp_path):
    overrides = {"preset": "toy", "max_iter": 1, "n_train": 2, "n_val": 1, "batch_size": 2,
                 "canvas": "32x32", "crop": "32x32", "channels": 32, "output_dir": str(tmp_path)}
    response = client.post("/api/v1/runs", json=overrides)
    assert response.status_code == 202
    run_id = response.get_json()["run_id"]

    deadline = time.time() + 120
    status = None
    while time.time() < deadline:
        status = client.get(f"/api/v1/runs/{run_id}").get_json()["status"]
        if status in ("completed", "stopped", "failed"):
            break
        time.sleep(0.2)
    assert status == "completed"

    listing = client.get("/api/v1/runs").get_json()
    assert listing["total"] == 1 and listing["runs"][0]["run_id"] == run_id
    assert client.post(f"/api/v1/runs/{run_id}/stop").status_code == 409


def test_run_errors(client):
    assert client.get("/api/v1/runs/missing").status_code == 404
    assert client.post("/api/v1/runs/missing/stop").status_code == 404
    assert client.post("/api/v1/runs", json=[1, 2]).status_code == 400
    response = client.post("/api/v1/runs", json={"bogus": 1})
    assert response.status_code == 400
    assert response.get_json()["type"] == "ConfigurationError"


def test_infer_endpoint(client, tmp_path):
    response = client.post(
        "/api/v1/infer",
        data={"image": (_png_bytes((32, 64)), "scene.png")},
        content_type="multipart/form-data",
    )
    assert response.status_code == 200
    assert response.mimetype == "image/png"
    assert Image.open(io.BytesIO(response.data)).size == (64, 32)


def test_infer_endpoint_errors(client):
    assert client.post("/api/v1/infer", data={}, content_type="multipart/form-data").status_code == 400
    response = client.post(
        "/api/v1/infer",
        data={"image": (_png_bytes(), "scene.png"), "checkpoint": "/nonexistent.xcbm"},
        content_type="multipart/form-data",
    )
    assert response.status_code == 400
    assert "does not exist" in response.get_json()["error"]


def main():
    print("CLI and API tests")
    print("=" * 50)
    print("These tests use pytest fixtures; run: pytest test_cli_api.py")


if __name__ == "__main__":
    main()
