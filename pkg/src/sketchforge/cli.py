"""Command-line interface: a thin client over the core package.

Subcommands: dataset gen, train, infer, fit, stylize, pipeline, render,
gradcheck, eval, serve. Every subcommand accepts --config FILE (JSON with
fit/style/render/train sections) with individual flags overriding it, and
--json to print one machine-readable object to stdout.

Exit codes: 0 success, 1 user error, 2 internal error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

__all__ = ["main"]


def _overrides(base: dict, args, keys) -> dict:
    out = dict(base)
    for key in keys:
        value = getattr(args, key, None)
        if value is not None:
            out[key] = value
    return out


def _config(args) -> dict:
    from .configio import load_config_file

    if getattr(args, "config", None):
        return load_config_file(args.config)
    return {}


def _emit(args, payload: dict, human: str = ""):
    if getattr(args, "json", False):
        print(json.dumps(payload, sort_keys=True))
    elif human:
        print(human)


def _parse_pose(text: str | None):
    if not text:
        return None
    from .camera import CameraPose

    try:
        az, el = (float(x) for x in text.split(","))
    except ValueError:
        raise ValueError(
            f"pose must be 'azimuth,elevation', got {text!r}"
        ) from None
    return CameraPose(az, el)


def _cmd_dataset_gen(args) -> int:
    from .configio import section
    from .procgen import CATEGORIES, DatasetConfig, generate_dataset

    cfg_dict = _overrides(
        section(_config(args), "dataset"), args,
        ("count_per_category", "resolution", "seed"),
    )
    if args.categories:
        cfg_dict["categories"] = tuple(args.categories.split(","))
    cfg_dict.setdefault("categories", CATEGORIES)
    if isinstance(cfg_dict["categories"], list):
        cfg_dict["categories"] = tuple(cfg_dict["categories"])
    cfg = DatasetConfig(**cfg_dict)
    instances = generate_dataset(args.out, cfg)
    _emit(
        args,
        {"out": str(args.out), "instances": len(instances)},
        f"wrote {len(instances)} instances under {args.out}",
    )
    return 0


def _cmd_train(args) -> int:
    from .configio import section, train_config_from_dict
    from .training import train

    cfg = train_config_from_dict(
        _overrides(
            section(_config(args), "train"), args,
            ("epochs", "batch_size", "seed", "learning_rate", "resolution"),
        )
    )
    result = train(args.dataset, cfg)
    Path(args.out).write_bytes(result.checkpoint)
    if args.metrics_out:
        Path(args.metrics_out).write_text(
            json.dumps(result.metrics, sort_keys=True)
        )
    last = result.metrics[-1] if result.metrics else {}
    _emit(
        args,
        {"checkpoint": str(args.out), "epochs": len(result.metrics),
         "final": last},
        f"trained {len(result.metrics)} epochs -> {args.out}",
    )
    return 0


def _cmd_infer(args) -> int:
    from .mesh import export_obj
    from .network import infer, load_checkpoint
    from .sketch import ingest_sketch, sketch_from_mask

    model, _, _ = load_checkpoint(Path(args.checkpoint).read_bytes())
    sketch = ingest_sketch(Path(args.sketch).read_bytes())
    res = model.cfg.resolution
    values = sketch.values
    if values.shape[0] != res:
        if values.shape[0] % res:
            raise ValueError(
                f"sketch size {values.shape[0]} is not a multiple of the "
                f"model resolution {res}"
            )
        f = values.shape[0] // res
        values = (
            values.reshape(res, f, res, f).mean(axis=(1, 3)) >= 0.5
        ).astype(np.float64)
    mesh, pose = infer(sketch_from_mask(values), model)
    Path(args.out).write_bytes(export_obj(mesh))
    _emit(
        args,
        {"mesh": str(args.out), "azimuth_deg": pose.azimuth_deg,
         "elevation_deg": pose.elevation_deg},
        f"wrote {args.out} (predicted azimuth {pose.azimuth_deg:.1f}, "
        f"elevation {pose.elevation_deg:.1f})",
    )
    return 0


def _cmd_fit(args) -> int:
    from .configio import fit_config_from_dict, section
    from .fitting import fit
    from .mesh import export_obj
    from .sketch import ingest_sketch

    cfg_dict = _overrides(
        section(_config(args), "fit"), args,
        ("iterations", "seed", "resolution", "step_size"),
    )
    if args.prompt is not None:
        cfg_dict["prompt"] = args.prompt
    cfg = fit_config_from_dict(cfg_dict)
    sketch = ingest_sketch(Path(args.sketch).read_bytes())
    result = fit(sketch, _parse_pose(args.pose), cfg, _provider(args))
    Path(args.out).write_bytes(export_obj(result.mesh))
    if args.trace_out:
        Path(args.trace_out).write_text(
            json.dumps(result.trace.to_dict(), sort_keys=True)
        )
    _emit(
        args,
        {"mesh": str(args.out), "final_loss": result.trace.total[-1],
         "initial_loss": result.trace.total[0]},
        f"wrote {args.out} (loss {result.trace.total[0]:.4f} -> "
        f"{result.trace.total[-1]:.4f})",
    )
    return 0


def _cmd_stylize(args) -> int:
    from .configio import section, style_config_from_dict
    from .mesh import export_obj, import_obj
    from .stylize import stylize

    cfg_dict = _overrides(
        section(_config(args), "style"), args, ("iterations", "seed")
    )
    if args.prompt is not None:
        cfg_dict["prompt"] = args.prompt
    cfg = style_config_from_dict(cfg_dict)
    mesh = import_obj(Path(args.mesh).read_bytes())
    result = stylize(mesh, cfg, _provider(args))
    Path(args.out).write_bytes(export_obj(result.mesh))
    _emit(
        args,
        {"mesh": str(args.out),
         "final_loss": result.trace.loss[-1] if result.trace.loss else None},
        f"wrote {args.out}",
    )
    return 0


def _cmd_pipeline(args) -> int:
    from .configio import fit_config_from_dict, section, style_config_from_dict
    from .fitting import fit
    from .mesh import export_obj
    from .sketch import ingest_sketch
    from .stylize import stylize

    config = _config(args)
    fit_dict = section(config, "fit")
    if args.prompt is not None:
        fit_dict["prompt"] = args.prompt
    style_dict = section(config, "style")
    style_dict["prompt"] = (
        args.style_prompt or style_dict.get("prompt") or args.prompt or "grey"
    )
    provider = _provider(args)
    sketch = ingest_sketch(Path(args.sketch).read_bytes())
    fit_result = fit(
        sketch, _parse_pose(args.pose), fit_config_from_dict(fit_dict), provider
    )
    style_result = stylize(
        fit_result.mesh, style_config_from_dict(style_dict), provider
    )
    Path(args.out).write_bytes(export_obj(style_result.mesh))
    _emit(args, {"mesh": str(args.out)}, f"wrote {args.out}")
    return 0


def _cmd_render(args) -> int:
    from .camera import CameraPose
    from .mesh import import_obj
    from .render import (
        RenderConfig, image_to_png, render_color, render_flat_grey,
        render_silhouette,
    )

    mesh = import_obj(Path(args.mesh).read_bytes())
    pose = CameraPose(args.azimuth, args.elevation)
    cfg = RenderConfig(args.size, args.size)
    if args.silhouette:
        img = render_silhouette(mesh, pose, cfg).values
    elif mesh.colors is not None:
        img = render_color(mesh, pose, cfg)
    else:
        img = render_flat_grey(mesh, pose, cfg)
    Path(args.out).write_bytes(image_to_png(img))
    _emit(args, {"image": str(args.out)}, f"wrote {args.out}")
    return 0


def _cmd_gradcheck(args) -> int:
    from .camera import canonical_pose
    from .losses import build_pyramid, multiscale_iou_loss_t
    from .mesh import make_icosphere
    from .regularizers import (
        flatten_energy_t, laplacian_energy_t, regularizer_tensors,
    )
    from .render import RenderConfig, grad_check, render_silhouette_t

    import torch

    mesh = make_icosphere(args.subdivisions)
    reg = regularizer_tensors(mesh)
    cfg = RenderConfig(args.size, args.size)
    target = render_silhouette_t(
        torch.as_tensor(mesh.vertices) * 0.8, mesh.faces, canonical_pose(), cfg
    ).detach()
    target_pyr = build_pyramid(target, 3)

    def loss_fn(verts, pose, rc):
        sil = render_silhouette_t(verts, mesh.faces, pose, rc)
        ms = multiscale_iou_loss_t(
            build_pyramid(sil, 3), target_pyr, (1 / 3, 1 / 3, 1 / 3)
        )
        return ms + 0.1 * (
            flatten_energy_t(verts, reg) + laplacian_energy_t(verts, reg)
        )

    report = grad_check(loss_fn, mesh, canonical_pose(), cfg, args.tolerance)
    payload = {
        "max_rel_err": report.max_rel_err,
        "fraction_passing": report.fraction_passing,
        "n_checked": report.n_checked,
        "passed": report.fraction_passing >= args.threshold,
    }
    _emit(
        args, payload,
        f"checked {report.n_checked} coordinates: "
        f"{report.fraction_passing:.1%} within {args.tolerance} "
        f"(max rel err {report.max_rel_err:.2e})",
    )
    return 0 if payload["passed"] else 1


def _cmd_eval(args) -> int:
    from .network import load_checkpoint
    from .training import evaluate

    model, _, _ = load_checkpoint(Path(args.checkpoint).read_bytes())
    metrics = evaluate(model, args.dataset, _provider(args), seed=args.seed)
    _emit(
        args,
        {
            "voxel_iou_mean": metrics["voxel_iou_mean"],
            "template_iou_mean": metrics["template_iou_mean"],
            "azimuth_mae_deg": metrics["azimuth_mae_deg"],
            "elevation_mae_deg": metrics["elevation_mae_deg"],
            "clip_score": metrics["clip_score"],
        },
        "\n".join(
            f"{k}: {v:.4f}" for k, v in metrics.items() if k != "count"
        ),
    )
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    host, _, port = args.bind.rpartition(":")
    checkpoint = (
        Path(args.checkpoint).read_bytes() if args.checkpoint else None
    )
    app = create_app(
        store_root=args.store, workers=args.workers, checkpoint=checkpoint,
        embed_url=args.embed_url,
    )
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port), log_level="info")
    return 0


def _provider(args):
    from .embedding import remote_provider, toy_provider

    url = getattr(args, "embed_url", None)
    return remote_provider(url) if url else toy_provider()


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sketchforge",
        description="sketch + text prompt to colored 3D mesh",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--json", action="store_true",
                       help="print one JSON object to stdout")
        p.add_argument("--embed-url", dest="embed_url",
                       help="remote embedding endpoint (default: toy provider)")

    dataset = sub.add_parser("dataset", help="dataset utilities")
    dsub = dataset.add_subparsers(dest="dataset_command", required=True)
    gen = dsub.add_parser("gen", help="generate a procedural dataset")
    common(gen)
    gen.add_argument("--out", required=True)
    gen.add_argument("--categories", help="comma-separated category names")
    gen.add_argument("--count", dest="count_per_category", type=int)
    gen.add_argument("--resolution", type=int)
    gen.add_argument("--seed", type=int)
    gen.set_defaults(fn=_cmd_dataset_gen)

    train = sub.add_parser("train", help="train the sketch-to-mesh network")
    common(train)
    train.add_argument("--dataset", required=True)
    train.add_argument("--out", required=True)
    train.add_argument("--metrics-out")
    train.add_argument("--epochs", type=int)
    train.add_argument("--batch-size", dest="batch_size", type=int)
    train.add_argument("--learning-rate", dest="learning_rate", type=float)
    train.add_argument("--resolution", type=int)
    train.add_argument("--seed", type=int)
    train.set_defaults(fn=_cmd_train)

    infer = sub.add_parser("infer", help="single forward pass on a sketch")
    common(infer)
    infer.add_argument("--sketch", required=True)
    infer.add_argument("--checkpoint", required=True)
    infer.add_argument("--out", required=True)
    infer.set_defaults(fn=_cmd_infer)

    fit = sub.add_parser("fit", help="per-object optimization on a sketch")
    common(fit)
    fit.add_argument("--sketch", required=True)
    fit.add_argument("--out", required=True)
    fit.add_argument("--prompt")
    fit.add_argument("--pose", help="azimuth,elevation in degrees")
    fit.add_argument("--iterations", type=int)
    fit.add_argument("--step-size", dest="step_size", type=float)
    fit.add_argument("--resolution", type=int)
    fit.add_argument("--seed", type=int)
    fit.add_argument("--trace-out")
    fit.set_defaults(fn=_cmd_fit)

    stylize = sub.add_parser("stylize", help="colorize a mesh against a prompt")
    common(stylize)
    stylize.add_argument("--mesh", required=True)
    stylize.add_argument("--out", required=True)
    stylize.add_argument("--prompt")
    stylize.add_argument("--iterations", type=int)
    stylize.add_argument("--seed", type=int)
    stylize.set_defaults(fn=_cmd_stylize)

    pipeline = sub.add_parser("pipeline", help="fit then stylize")
    common(pipeline)
    pipeline.add_argument("--sketch", required=True)
    pipeline.add_argument("--out", required=True)
    pipeline.add_argument("--prompt")
    pipeline.add_argument("--style-prompt", dest="style_prompt")
    pipeline.add_argument("--pose")
    pipeline.set_defaults(fn=_cmd_pipeline)

    render = sub.add_parser("render", help="render a mesh to PNG")
    common(render)
    render.add_argument("--mesh", required=True)
    render.add_argument("--out", required=True)
    render.add_argument("--azimuth", type=float, default=0.0)
    render.add_argument("--elevation", type=float, default=0.0)
    render.add_argument("--size", type=int, default=256)
    render.add_argument("--silhouette", action="store_true")
    render.set_defaults(fn=_cmd_render)

    gradcheck = sub.add_parser(
        "gradcheck", help="compare analytic gradients to finite differences"
    )
    common(gradcheck)
    gradcheck.add_argument("--subdivisions", type=int, default=1)
    gradcheck.add_argument("--size", type=int, default=32)
    gradcheck.add_argument("--tolerance", type=float, default=1e-2)
    gradcheck.add_argument("--threshold", type=float, default=0.99)
    gradcheck.set_defaults(fn=_cmd_gradcheck)

    evaluate = sub.add_parser(
        "eval", help="voxel IoU / viewpoint MAE / embedding score on a dataset"
    )
    common(evaluate)
    evaluate.add_argument("--dataset", required=True)
    evaluate.add_argument("--checkpoint", required=True)
    evaluate.add_argument("--seed", type=int, default=0)
    evaluate.set_defaults(fn=_cmd_eval)

    serve = sub.add_parser("serve", help="run the HTTP job service")
    common(serve)
    serve.add_argument("--bind", default="127.0.0.1:8008")
    serve.add_argument("--store", default=None)
    serve.add_argument("--workers", type=int, default=None)
    serve.add_argument("--checkpoint")
    serve.set_defaults(fn=_cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    try:
        return args.fn(args)
    except (ValueError, KeyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 1
    except Exception as exc:  # noqa: BLE001 - internal failure boundary
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
