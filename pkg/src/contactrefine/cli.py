"""Command line entry point: ``contactrefine <command> ...``.

Exit status is 0 on success, 1 when the optimisation fails numerically and
2 for unusable input (missing files, malformed JSON, dimension mismatches).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .body_model import ModelError, skin
from .contact import DEFAULT_TAU, ContactError, ContactSignature, gt_signature
from .experiments import GroundTruth, run_ablation, summarize, write_ablation_csv
from .geometry import DEFAULT_SAMPLES, MeshError, chamfer_distance, load_mesh, point_to_surface, save_mesh
from .refine import (OptimizationError, RefineConfig, GmmPrior, default_prior, penetration_loss,
                     refine_full, refine_translation, total_loss, write_trace)
from .scene import (PRESETS, PersonEntry, SceneError, SceneFile, build_scene, load_gt_meshes,
                    load_scene_file, write_preset)

log = logging.getLogger("contactrefine")

INPUT_ERRORS = (SceneError, ModelError, ContactError, MeshError, FileNotFoundError,
                json.JSONDecodeError, KeyError)


class InputError(Exception):
    pass


def _config(path) -> RefineConfig:
    if path is None:
        return RefineConfig()
    try:
        return RefineConfig.load(path)
    except FileNotFoundError as exc:
        raise InputError(f"config file not found: {path}") from exc
    except (ValueError, TypeError) as exc:
        raise InputError(f"{path}: {exc}") from exc


def _prior(path) -> GmmPrior:
    return default_prior() if path is None else GmmPrior.load(path)


def _oracle_signatures(sf: SceneFile, scene, tau: float) -> dict:
    """Geometric signatures for every pair, from ground-truth meshes when the scene has them."""
    meshes = load_gt_meshes(sf)
    if meshes is None:
        meshes = scene.meshes()
    else:
        models = [p.model for p in scene.persons]
        meshes = [type(m)(m.vertices, m.faces, mod.region_of_face)
                  for m, mod in zip(meshes, models)]
    n = len(meshes)
    return {(i, j): gt_signature(meshes[i], meshes[j], tau)
            for i in range(n) for j in range(i + 1, n)}


# --- commands --------------------------------------------------------------------

def cmd_refine(args) -> int:
    sf = load_scene_file(args.scene)
    cfg = _config(args.config)
    prior = _prior(args.prior)
    scene = build_scene(sf)
    if args.oracle_contact is not None:
        scene = type(scene).create([p.model for p in scene.persons], scene.poses(),
                                   _oracle_signatures(sf, scene, args.oracle_contact))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report = {"pairs": {}}
    for pair in scene.pairs():
        before = (total_loss(scene, cfg, prior, pair)[1]
                  if scene.signature(*pair).contact_flag else None)
        scene, t1 = refine_translation(scene, cfg, pair)
        scene, t2 = refine_full(scene, cfg, prior, pair)
        tag = f"{pair[0]}_{pair[1]}"
        write_trace(t1, out / f"trace_{tag}_translation.csv")
        write_trace(t2, out / f"trace_{tag}_full.csv")
        after = total_loss(scene, cfg, prior, pair)[1] if before is not None else None
        report["pairs"][tag] = {"skipped": before is None, "before": before, "after": after,
                                "iterations": [len(t1) - 1 if t1 else 0,
                                               len(t2) - 1 if t2 else 0]}
        log.info("pair %s: %s", tag, "skipped (no contact)" if before is None else
                 f"contact {before['contact']:.4g} -> {after['contact']:.4g}, "
                 f"penetration {before['penet']:.4g} -> {after['penet']:.4g}")
    sig_paths = {}
    for pair, sig in scene.signatures.items():
        name = f"signature_{pair[0]}_{pair[1]}.json"
        sig.save(out / name)
        sig_paths[pair] = name
    persons = []
    for k, (entry, person) in enumerate(zip(sf.persons, scene.persons)):
        save_mesh(skin(person.model, person.pose), out / f"person_{k}.obj")
        persons.append(PersonEntry(str(sf.resolve(entry.model_path).resolve()), person.pose))
    gt_paths = None
    if sf.gt_mesh_paths is not None:
        gt_paths = [str(sf.resolve(p).resolve()) for p in sf.gt_mesh_paths]
    SceneFile(sf.camera, persons, sig_paths, gt_paths, out).save(out / "scene.json")
    (out / "report.json").write_text(json.dumps(report, indent=1))
    print(f"refined scene written to {out / 'scene.json'}")
    return 0


def _evaluate(pred, gt, n: int, seed: int) -> dict:
    if len(pred) != len(gt):
        raise InputError(f"{len(pred)} predicted meshes but {len(gt)} ground-truth meshes")
    per = [{"cd": chamfer_distance(p, g, n, seed), "p2s": point_to_surface(p, g, n, seed)}
           for p, g in zip(pred, gt)]
    return {"samples": n, "seed": seed, "persons": per,
            "mean": {k: float(np.mean([r[k] for r in per])) for k in ("cd", "p2s")}}


def cmd_evaluate(args) -> int:
    if args.scene:
        sf = load_scene_file(args.scene)
        gt = load_gt_meshes(sf)
        if gt is None:
            raise InputError(f"{args.scene}: scene lists no ground-truth meshes")
        pred = build_scene(sf).meshes()
    else:
        if not args.pred or not args.gt:
            raise InputError("give --scene, or both --pred and --gt mesh lists")
        pred = [load_mesh(p) for p in args.pred]
        gt = [load_mesh(p) for p in args.gt]
    report = _evaluate(pred, gt, args.samples, args.seed)
    for k, r in enumerate(report["persons"]):
        print(f"person {k}: CD {r['cd']:.6f}  P2S {r['p2s']:.6f}")
    print(f"mean:     CD {report['mean']['cd']:.6f}  P2S {report['mean']['p2s']:.6f}")
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(json.dumps(report, indent=1))
    return 0


def _ground_truth(target: str, oracle_tau) -> GroundTruth:
    if target in PRESETS:
        return GroundTruth.preset(target)
    sf = load_scene_file(target)
    scene = build_scene(sf)
    if len(scene.persons) != 2:
        raise InputError("ablation needs a two-person scene")
    if oracle_tau is not None:
        sig = _oracle_signatures(sf, scene, oracle_tau)[(0, 1)]
    else:
        sig = scene.signature(0, 1)
        if sig is None:
            raise InputError(f"{target}: no signature for pair (0, 1); use --oracle-contact")
    models = {id(p.model) for p in scene.persons}
    if len(models) != 1:
        raise InputError("ablation expects both people to share one body model")
    return GroundTruth(scene.persons[0].model, scene.poses(), sig)


def cmd_ablate(args) -> int:
    gt = _ground_truth(args.scene, args.oracle_contact)
    cfg = _config(args.config) if args.config else None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def progress(r):
        print(f"sigma={r.sigma:g} seed={r.seed}: CD {r.cd_noisy:.5f} -> {r.cd_refined:.5f} "
              f"({r.seconds:.1f} s)", flush=True)

    kwargs = {"cfg": cfg} if cfg is not None else {}
    records = run_ablation(gt, args.sigmas, args.seeds, prior=_prior(args.prior),
                           n_samples=args.samples, progress=progress, **kwargs)
    write_ablation_csv(records, out / "ablation.csv")
    summary = summarize(records)
    summary["per_sigma"] = {repr(k): v for k, v in summary["per_sigma"].items()}
    (out / "summary.json").write_text(json.dumps(summary, indent=1))
    for s, v in summary["per_sigma"].items():
        print(f"sigma {s}: mean CD noisy {v['cd_noisy']:.5f}  refined {v['cd_refined']:.5f}")
    return 0


def cmd_synth_scene(args) -> int:
    if args.preset not in PRESETS:
        raise InputError(f"unknown preset {args.preset!r}; choose from {', '.join(PRESETS)}")
    path = write_preset(args.preset, args.out, args.tau, args.seed)
    sig = ContactSignature.load(Path(args.out) / "signature_0_1.json")
    print(f"wrote {path} ({int((sig.c > 0.5).sum())} contact pairs, "
          f"contact_flag={sig.contact_flag})")
    return 0


def cmd_export(args) -> int:
    sf = load_scene_file(args.scene)
    scene = build_scene(sf)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    meshes = scene.meshes()
    for k, m in enumerate(meshes):
        save_mesh(m, out / f"person_{k}.{args.format}")
    if len(meshes) >= 2:
        print(f"penetration between persons 0 and 1: {penetration_loss(meshes[0], meshes[1]):.6g}")
    print(f"exported {len(meshes)} meshes to {out}")
    return 0


# --- argument parsing --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="contactrefine",
                                 description="Contact-driven refinement of interacting bodies.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("refine", help="two-stage refinement of a scene file")
    p.add_argument("scene")
    p.add_argument("--config", help="JSON file with RefineConfig fields")
    p.add_argument("--prior", help="GMM prior JSON (default: shipped prior)")
    p.add_argument("--out", default="refined")
    p.add_argument("--oracle-contact", type=float, metavar="TAU", nargs="?",
                   const=DEFAULT_TAU, help="use geometric signatures with threshold TAU")
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("evaluate", help="Chamfer and point-to-surface metrics")
    p.add_argument("--scene", help="scene file whose persons are scored against its gt meshes")
    p.add_argument("--pred", nargs="*", default=[])
    p.add_argument("--gt", nargs="*", default=[])
    p.add_argument("--samples", type=int, default=DEFAULT_SAMPLES)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write the report JSON here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="pose-perturbation ablation")
    p.add_argument("scene", help="scene file (its poses are the ground truth) or a preset name")
    p.add_argument("--sigmas", type=float, nargs="+", default=[0.05, 0.1, 0.2])
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--samples", type=int, default=DEFAULT_SAMPLES)
    p.add_argument("--config")
    p.add_argument("--prior")
    p.add_argument("--oracle-contact", type=float, metavar="TAU", nargs="?", const=DEFAULT_TAU)
    p.add_argument("--out", default="ablation")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("synth-scene", help="write a synthetic two-person preset")
    p.add_argument("preset", help=f"one of {', '.join(PRESETS)}")
    p.add_argument("--out", default="scene")
    p.add_argument("--seed", type=int, default=0, help="humanoid generator seed")
    p.add_argument("--tau", type=float, default=DEFAULT_TAU)
    p.set_defaults(func=cmd_synth_scene)

    p = sub.add_parser("export", help="write the posed meshes of a scene")
    p.add_argument("scene")
    p.add_argument("--out", default="meshes")
    p.add_argument("--format", choices=["obj", "ply"], default="obj")
    p.set_defaults(func=cmd_export)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except OptimizationError as exc:
        print(f"error: optimisation failed: {exc}", file=sys.stderr)
        return 1
    except (InputError, *INPUT_ERRORS) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
