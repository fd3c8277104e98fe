"""REST API routes for profiling, training runs and inference."""
from __future__ import annotations

import logging
import tempfile
from pathlib import Path

import numpy as np
from flask import Blueprint, Flask, Response, current_app, jsonify, request
from werkzeug.exceptions import BadRequest

from crosscbam.config import load_run_config, parse_size
from crosscbam.errors import CrossCbamError, InternalError
from crosscbam.services.inference import InferenceService
from crosscbam.services.profiler import DEFAULT_INPUT, profile_config
from crosscbam.services.run_service import RunService

api_bp = Blueprint("api", __name__, url_prefix="/api/v1")

PROFILE_QUERY_KEYS = ("variant", "dilations", "channels", "num_classes", "base_ch", "proj_kernel", "aux_head")


@api_bp.route("/health", methods=["GET"], strict_slashes=False)
def health() -> tuple[Response, int]:
    settings = current_app.config["SETTINGS"]
    return (
        jsonify(
            {
                "status": "ok",
                "environment": settings.env,
                "numpy": np.__version__,
            }
        ),
        200,
    )


@api_bp.route("/models/profile", methods=["GET"], strict_slashes=False)
def profile_model() -> tuple[Response, int]:
    unknown = sorted(set(request.args) - set(PROFILE_QUERY_KEYS) - {"input"})
    if unknown:
        raise BadRequest(f"unknown query parameters: {', '.join(unknown)}")
    overrides = {key: request.args[key] for key in PROFILE_QUERY_KEYS if key in request.args}
    cfg = load_run_config(overrides=overrides).network
    height, width = parse_size(request.args["input"], "input") if "input" in request.args else DEFAULT_INPUT[2:]
    report = profile_config(cfg, (1, 3, height, width))
    return jsonify({"config": cfg.to_dict(), **report.to_dict()}), 200


@api_bp.route("/runs", methods=["POST"], strict_slashes=False)
def start_run() -> tuple[Response, int]:
    payload = request.get_json(silent=True)
    if payload is None:
        payload = {}
    if not isinstance(payload, dict):
        raise BadRequest("run overrides must be a JSON object")

    service = RunService.from_app(current_app)
    run = service.start_run(payload)
    return jsonify(run), 202


@api_bp.route("/runs", methods=["GET"], strict_slashes=False)
def list_runs() -> tuple[Response, int]:
    service = RunService.from_app(current_app)
    runs = service.list_runs()
    return jsonify({"runs": runs, "total": len(runs)}), 200


@api_bp.route("/runs/<run_id>", methods=["GET"], strict_slashes=False)
def get_run(run_id: str) -> tuple[Response, int]:
    service = RunService.from_app(current_app)
    run = service.get_run(run_id)
    if not run:
        return jsonify({"error": "run not found"}), 404
    return jsonify(run), 200


@api_bp.route("/runs/<run_id>/stop", methods=["POST"], strict_slashes=False)
def stop_run(run_id: str) -> tuple[Response, int]:
    service = RunService.from_app(current_app)
    result = service.stop_run(run_id)
    if "error" in result:
        code = 404 if result["error"] == "run not found" else 409
        return jsonify(result), code
    return jsonify(result), 200


@api_bp.route("/infer", methods=["POST"], strict_slashes=False)
def infer() -> Response:
    upload = request.files.get("image")
    if upload is None:
        raise BadRequest("'image' is a required multipart field")
    checkpoint = request.form.get("checkpoint") or None
    if checkpoint is not None and not Path(checkpoint).is_file():
        raise BadRequest(f"checkpoint '{checkpoint}' does not exist")

    service = InferenceService(checkpoint=checkpoint, logger=current_app.logger)
    with tempfile.TemporaryDirectory() as tmp:
        source = Path(tmp) / "input.png"
        target = Path(tmp) / "mask.png"
        upload.save(source)
        service.infer_file(source, target)
        body = target.read_bytes()
    return Response(body, status=200, mimetype="image/png")


def register_error_handlers(app: Flask) -> None:
    """Map the package's exceptions to JSON error bodies."""

    @app.errorhandler(CrossCbamError)
    def handle_crosscbam_error(exc: CrossCbamError) -> tuple[Response, int]:
        code = 500 if isinstance(exc, InternalError) else 400
        log = logging.getLogger(__name__)
        log.log(logging.ERROR if code == 500 else logging.WARNING, f"{type(exc).__name__}: {exc}")
        return jsonify({"error": str(exc), "type": type(exc).__name__}), code

    @app.errorhandler(BadRequest)
    def handle_bad_request(exc: BadRequest) -> tuple[Response, int]:
        return jsonify({"error": exc.description}), 400


__all__ = ["api_bp", "register_error_handlers"]
